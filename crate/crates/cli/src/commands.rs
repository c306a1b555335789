use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, ValueEnum};
use crossover_core::reference::{bode_pairs, build_reference, default_grid, PlantClass, ReferenceModel};
use crossover_core::sim::{
    self, cohort_seeds, preset, run_with, KnownPlant, Remnant, RunOptions, Scenario, ScenarioConfig, Trace,
    DEFAULT_REMNANT_POWER, PRESET_NAMES,
};
use crossover_core::stats::{
    envelope, markdown_table, normal_scores, report, synthesize_dbars, RunSet, Series, StatsReport, BENCHMARK_K,
    BENCHMARK_ROWS,
};
use crossover_core::table::Table;
use crossover_service::{AppState, ServiceConfig};
use serde::{Deserialize, Serialize};

use crate::plot::{Column, Figure, PlotBundle};

/// A required value was supplied neither as a flag nor in the config file.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn require<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| UsageError(format!("the argument '--{flag}' is required")).into())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitReferenceArgs {
    /// Plant class row: gain (zero-order), first-order or second-order.
    #[arg(long)]
    pub plant_class: Option<PlantClass>,
    /// Highest reference-signal frequency [rad/s].
    #[arg(long)]
    pub omega_i: Option<f64>,
    /// Effective pilot time delay [s].
    #[arg(long)]
    pub tau: Option<f64>,
    /// Order of the rational part (aggregate pilot + plant order) [default: 2].
    #[arg(long)]
    pub order: Option<usize>,
    /// Output directory [default: reference].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn fit_reference(a: FitReferenceArgs) -> Result<()> {
    let class = require(a.plant_class, "plant-class")?;
    let omega_i = require(a.omega_i, "omega-i")?;
    let tau = require(a.tau, "tau")?;
    let order = a.order.unwrap_or(2);
    ensure!(order >= 1, "--order: must be at least 1, got {order}");
    ensure!(omega_i.is_finite() && omega_i > 0.0, "--omega-i: must be positive, got {omega_i}");
    let out = a.out.unwrap_or_else(|| "reference".into());
    let model = build_reference(class, omega_i, tau, order)?;
    create_dir(&out)?;
    write_json(&out.join("reference.json"), &model)?;
    bode_bundle(&model)?.write(&out.join("plots"))?;
    let tf = model.approx.tf();
    println!("omega_c = {:.4} rad/s", model.omega_c);
    println!("approximation: num {:?} / den {:?}, delay {} s", tf.num(), tf.den(), model.delay);
    println!("fit residual (weighted RMS relative error) = {:.4}", model.fit_residual);
    println!("wrote {}", out.display());
    Ok(())
}

fn unwrap_phase_deg(phase: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for p in phase {
        let mut v = p.to_degrees();
        if let Some(&prev) = out.last() {
            v -= 360.0 * ((v - prev) / 360.0).round();
        }
        out.push(v);
    }
    out
}

pub fn bode_bundle(model: &ReferenceModel) -> Result<PlotBundle> {
    let pairs = bode_pairs(model, &default_grid());
    let db = |z: crossover_core::statespace::C64| 20.0 * z.norm().log10();
    let fig = Figure::new(
        "bode",
        "Reference model closed loop and its rational approximation",
        Column::new("omega", "frequency", "rad/s", pairs.iter().map(|p| p.0).collect()),
    )
    .with(Column::new("exact_mag", "exact magnitude", "dB", pairs.iter().map(|p| db(p.1)).collect()))
    .with(Column::new("exact_phase", "exact phase", "deg", unwrap_phase_deg(pairs.iter().map(|p| p.1.arg()))))
    .with(Column::new("approx_mag", "approximation magnitude", "dB", pairs.iter().map(|p| db(p.2)).collect()))
    .with(Column::new("approx_phase", "approximation phase", "deg", unwrap_phase_deg(pairs.iter().map(|p| p.2.arg()))));
    let mut bundle = PlotBundle::default();
    bundle.push(fig)?;
    Ok(bundle)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceFormat {
    #[default]
    Csv,
    Jsonl,
}

/// Scenario selection shared by `simulate` and `cohort`.
#[derive(Debug, Default, Args, Serialize, Deserialize)]
pub struct ScenarioArgs {
    /// Built-in scenario name.
    #[arg(long, conflicts_with = "scenario")]
    pub preset: Option<String>,
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Simulation step [s].
    #[arg(long)]
    pub dt: Option<f64>,
    /// Trial length [s]; without --injection-time the change keeps its relative position.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Time of the plant change [s].
    #[arg(long)]
    pub injection_time: Option<f64>,
}

impl ScenarioArgs {
    pub fn config(&self) -> Result<ScenarioConfig> {
        let mut cfg = match (&self.preset, &self.scenario) {
            (Some(_), Some(_)) => bail!("give either --preset or --scenario, not both"),
            (Some(name), None) => preset(name)?,
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("scenario {}", path.display()))?
            }
            (None, None) => {
                return Err(UsageError(format!(
                    "one of '--preset' or '--scenario' is required (presets: {})",
                    PRESET_NAMES.join(", ")
                ))
                .into())
            }
        };
        if let Some(dt) = self.dt {
            cfg.dt = dt;
        }
        if let Some(d) = self.duration {
            cfg.injection_time *= d / cfg.duration;
            cfg.duration = d;
        }
        if let Some(at) = self.injection_time {
            cfg.injection_time = at;
        }
        Ok(cfg)
    }

    pub fn build(&self) -> Result<Scenario> {
        Ok(self.config()?.build()?)
    }
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
    /// Remnant noise power; 0 or absent runs the noise-free model.
    #[arg(long)]
    pub remnant: Option<f64>,
    /// Remnant noise seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Record the Lyapunov-Krasovskii functional against the nominal plant.
    #[arg(long)]
    #[serde(default)]
    pub lyapunov: bool,
    /// Trace file format [default: csv].
    #[arg(long, value_enum)]
    pub format: Option<TraceFormat>,
    /// Output directory [default: simulation].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let scn = a.scenario.build()?;
    let power = a.remnant.unwrap_or(0.0);
    ensure!(power >= 0.0, "--remnant: must be >= 0, got {power}");
    let opts = RunOptions {
        remnant: (power > 0.0).then(|| Remnant::new(power, a.seed.unwrap_or(0))),
        known_plant: a.lyapunov.then_some(KnownPlant { start_at_ideal: false, adapt: true }),
    };
    let trace = run_with(&scn, &opts)?;
    let out = a.out.unwrap_or_else(|| "simulation".into());
    create_dir(&out)?;
    let trace_path = write_trace(&trace, &out, "trace", a.format.unwrap_or_default())?;
    write_json(&out.join("scenario.json"), &scn.config)?;
    write_json(&out.join("reference.json"), &scn.reference_model)?;
    trace_bundle(&trace)?.write(&out.join("plots"))?;
    let t_end = trace.t.last().copied().unwrap_or(0.0);
    println!("scenario {}: {} steps of {} s, t_end = {t_end:.2} s", scn.config.name, trace.len(), scn.config.dt);
    println!("rms tracking error: {:.4}", trace.rms_error(0.0, f64::INFINITY));
    println!("wrote {}", trace_path.display());
    Ok(())
}

fn write_trace(trace: &Trace, dir: &Path, stem: &str, format: TraceFormat) -> Result<PathBuf> {
    let (ext, path) = match format {
        TraceFormat::Csv => ("csv", dir.join(format!("{stem}.csv"))),
        TraceFormat::Jsonl => ("jsonl", dir.join(format!("{stem}.jsonl"))),
    };
    let file = std::io::BufWriter::new(
        std::fs::File::create(&path).with_context(|| format!("writing {ext} trace {}", path.display()))?,
    );
    match format {
        TraceFormat::Csv => trace.write_csv(file)?,
        TraceFormat::Jsonl => trace.write_jsonl(file)?,
    }
    Ok(path)
}

fn time_axis(t: &[f64]) -> Column {
    Column::new("t", "time", "s", t.to_vec())
}

fn per_state(rows: &[Vec<f64>], i: usize) -> Vec<f64> {
    rows.iter().map(|r| r[i]).collect()
}

pub fn trace_bundle(tr: &Trace) -> Result<PlotBundle> {
    let mut bundle = PlotBundle::default();
    bundle.push(
        Figure::new("plant_output", "Plant output against the reference signal and the reference-model output", time_axis(&tr.t))
            .with(Column::new("r", "reference signal", "1", tr.r.clone()))
            .with(Column::new("y_p", "plant output", "1", tr.y_p.clone()))
            .with(Column::new("y_m", "reference-model output", "1", tr.y_m.clone())),
    )?;
    let tracking: Vec<f64> = tr.r.iter().zip(&tr.y_p).map(|(r, y)| r - y).collect();
    let model_gap: Vec<f64> = tr.y_m.iter().zip(&tr.y_p).map(|(m, y)| m - y).collect();
    bundle.push(
        Figure::new("error", "Tracking and model-following errors", time_axis(&tr.t))
            .with(Column::new("tracking_error", "r - y_p", "1", tracking))
            .with(Column::new("output_error", "y_m - y_p", "1", model_gap))
            .with(Column::new("e_norm", "state error norm", "1", (0..tr.len()).map(|i| tr.e_norm(i)).collect())),
    )?;
    let mut adaptive = Figure::new("adaptive", "Adaptive parameters", time_axis(&tr.t));
    for i in 0..tr.n {
        adaptive = adaptive
            .with(Column::new(format!("theta1[{i}]"), format!("theta1 state gain {i}"), "1", per_state(&tr.theta1, i)))
            .with(Column::new(format!("theta_x[{i}]"), format!("total state gain {i}"), "1", per_state(&tr.theta_x, i)));
    }
    adaptive = adaptive
        .with(Column::new("phi", "phi, inverse reference gain", "1", tr.phi.clone()))
        .with(Column::new("kr", "K_r, reference gain", "1", tr.kr.clone()));
    bundle.push(adaptive)?;
    if !tr.lambda_index.is_empty() {
        let mut lambda = Figure::new("lambda", "Distributed-delay gain lambda1 at selected eta", time_axis(&tr.t));
        for (j, (idx, eta)) in tr.lambda_index.iter().zip(&tr.lambda_eta).enumerate() {
            lambda = lambda.with(Column::new(
                format!("lambda1[{idx}]"),
                format!("lambda1 at eta = {eta:.4} s"),
                "1/s",
                per_state(&tr.lambda1, j),
            ));
        }
        bundle.push(lambda)?;
    }
    let mut lyap = Figure::new("stability", "Stability margin and Lyapunov-Krasovskii functional", time_axis(&tr.t))
        .with(Column::new("margin", "stability margin", "1/s", tr.margin.clone()));
    if let Some(v) = &tr.v {
        lyap = lyap.with(Column::new("V", "Lyapunov-Krasovskii functional", "1", v.clone()));
    }
    bundle.push(lyap)?;
    Ok(bundle)
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArgs,
    /// Number of synthetic participants [default: 11].
    #[arg(long)]
    pub k: Option<usize>,
    /// Cohort seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Remnant noise power [default: 0.01].
    #[arg(long)]
    pub remnant: Option<f64>,
    /// Output directory [default: runs].
    #[arg(long, env = "CROSSOVER_RUNS_DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct CohortManifest<'a> {
    scenario: &'a str,
    k: usize,
    seed: u64,
    remnant: f64,
    participant_seeds: Vec<u64>,
    model: &'a str,
    runs: Vec<String>,
}

pub const MODEL_FILE: &str = "model.csv";

pub fn cohort(a: CohortArgs) -> Result<()> {
    let scn = a.scenario.build()?;
    let k = a.k.unwrap_or(11);
    ensure!(k >= 1, "--k: must be at least 1");
    let seed = a.seed.unwrap_or(0);
    let power = a.remnant.unwrap_or(DEFAULT_REMNANT_POWER);
    let out = a.out.unwrap_or_else(|| "runs".into());
    create_dir(&out)?;
    let model = sim::run(&scn)?;
    model.write_csv(std::io::BufWriter::new(std::fs::File::create(out.join(MODEL_FILE))?))?;
    let runs = sim::cohort(&scn, k, seed, power)?;
    let width = k.to_string().len().max(2);
    let mut names = Vec::with_capacity(k);
    for (i, tr) in runs.iter().enumerate() {
        let name = format!("run-{:0width$}.csv", i + 1);
        tr.write_csv(std::io::BufWriter::new(std::fs::File::create(out.join(&name))?))?;
        names.push(name);
    }
    let manifest = CohortManifest {
        scenario: &scn.config.name,
        k,
        seed,
        remnant: power,
        participant_seeds: cohort_seeds(seed, k),
        model: MODEL_FILE,
        runs: names,
    };
    write_json(&out.join("cohort.json"), &manifest)?;
    write_json(&out.join("scenario.json"), &scn.config)?;
    println!("wrote {k} runs and the model run of '{}' to {}", scn.config.name, out.display());
    Ok(())
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeArgs {
    /// Run CSV files or directories of them (`t` and `y_p` columns).
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    /// Model run CSV [default: model.csv inside the single input directory].
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Significance level [default: 0.05].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Type II error level for the minimum detectable effect [default: 0.05].
    #[arg(long)]
    pub beta: Option<f64>,
    /// Column label in the Markdown table [default: model vs runs].
    #[arg(long)]
    pub label: Option<String>,
    /// Reproduce the published benchmark summaries from their printed statistics.
    #[arg(long)]
    #[serde(default)]
    pub self_test: bool,
    /// Output directory [default: analysis].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn collect_runs(inputs: &[PathBuf], model: &Path) -> Result<Vec<PathBuf>> {
    let model = model.canonicalize().unwrap_or_else(|_| model.to_path_buf());
    let mut runs = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(input)
                .with_context(|| format!("reading {}", input.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .filter(|p| p.canonicalize().map_or(true, |c| c != model))
                .collect();
            found.sort();
            runs.extend(found);
        } else {
            runs.push(input.clone());
        }
    }
    Ok(runs)
}

fn load_series(path: &Path) -> Result<Series> {
    let table = Table::load(path).with_context(|| format!("reading {}", path.display()))?;
    Series::from_table(&table).with_context(|| format!("{}", path.display()))
}

fn same_grid(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9 * (1.0 + x.abs()))
}

pub fn analyze(a: AnalyzeArgs) -> Result<()> {
    let alpha = a.alpha.unwrap_or(0.05);
    let beta = a.beta.unwrap_or(0.05);
    let out = a.out.clone().unwrap_or_else(|| "analysis".into());
    if a.self_test {
        return self_test(alpha, beta, &out);
    }
    ensure!(!a.inputs.is_empty(), "give run files or directories, or --self-test");
    let model_path = match (&a.model, a.inputs.as_slice()) {
        (Some(m), _) => m.clone(),
        (None, [dir]) if dir.is_dir() => dir.join(crate::commands::MODEL_FILE),
        _ => return Err(UsageError("the argument '--model' is required".into()).into()),
    };
    let model = load_series(&model_path)?;
    let paths = collect_runs(&a.inputs, &model_path)?;
    ensure!(paths.len() >= 2, "need at least 2 runs, found {}", paths.len());
    let mut runs = Vec::with_capacity(paths.len());
    for p in &paths {
        let s = load_series(p)?;
        if !same_grid(&s.t, &model.t) {
            eprintln!(
                "note: {}: resampled {} samples onto the model grid of {} samples",
                p.display(),
                s.t.len(),
                model.t.len()
            );
        }
        runs.push(s);
    }
    let set = RunSet::from_series(model, runs)?;
    let rep = report(&set, alpha, beta)?;
    let label = a.label.unwrap_or_else(|| "model vs runs".into());
    let table = markdown_table(&[(label, rep.clone())]);
    create_dir(&out)?;
    write_json(&out.join("report.json"), &rep)?;
    std::fs::write(out.join("report.md"), &table)?;
    analysis_bundle(&set, &rep)?.write(&out.join("plots"))?;
    print!("{table}");
    println!(
        "k = {}, t = {:.4} (critical {:.4}), minimum detectable mean difference {:.4}",
        rep.k, rep.t_stat, rep.critical_t, rep.min_detectable_mu1
    );
    Ok(())
}

pub fn analysis_bundle(set: &RunSet, rep: &StatsReport) -> Result<PlotBundle> {
    let env = envelope(set);
    let mut bundle = PlotBundle::default();
    bundle.push(
        Figure::new("envelope", "Run envelope with the model output", time_axis(set.t()))
            .with(Column::new("min", "minimum over runs", "1", env.min))
            .with(Column::new("max", "maximum over runs", "1", env.max))
            .with(Column::new("mean", "mean over runs", "1", env.mean))
            .with(Column::new("y_p", "model plant output", "1", set.model().to_vec())),
    )?;
    let idx: Vec<f64> = (1..=rep.per_run.len()).map(|i| i as f64).collect();
    bundle.push(
        Figure::new("differences", "Per-run mean and spread of model minus run", Column::new("run", "run index", "1", idx))
            .with(Column::new("dbar", "mean difference", "1", rep.per_run.iter().map(|d| d.mean).collect()))
            .with(Column::new("sd", "standard deviation of the difference", "1", rep.per_run.iter().map(|d| d.sd).collect())),
    )?;
    let dbars: Vec<f64> = rep.per_run.iter().map(|d| d.mean).collect();
    if dbars.len() >= 3 {
        let ns = normal_scores(&dbars)?;
        bundle.push(
            Figure::new("normal_scores", "Normal-scores plot of the per-run mean differences", Column::new("quantile", "standard normal quantile", "1", ns.quantiles))
                .with(Column::new("dbar", "ordered mean difference", "1", ns.values)),
        )?;
    }
    Ok(bundle)
}

/// Printed summaries carry about two significant digits.
const SELF_TEST_TOLERANCE: f64 = 3e-3;

fn self_test(alpha: f64, beta: f64, out: &Path) -> Result<()> {
    let mut columns = Vec::new();
    let mut failures = Vec::new();
    for row in BENCHMARK_ROWS {
        let dbars = synthesize_dbars(row.dbar, row.s, BENCHMARK_K)?;
        let rep = StatsReport::from_dbars(&dbars, alpha, beta)?;
        let checks = [
            ("mean CI low", rep.mean_ci.lo, row.mean_ci.0),
            ("mean CI high", rep.mean_ci.hi, row.mean_ci.1),
            ("sigma CI low", rep.sigma_ci.lo, row.sigma_ci.0),
            ("sigma CI high", rep.sigma_ci.hi, row.sigma_ci.1),
        ];
        for (what, got, want) in checks {
            if (got - want).abs() > SELF_TEST_TOLERANCE {
                failures.push(format!("{} {}: {what} {got:.4} vs {want}", row.injection, row.plant));
            }
        }
        if rep.rejected != row.rejected {
            failures.push(format!("{} {}: decision {}", row.injection, row.plant, rep.decision()));
        }
        columns.push((format!("{} {}", row.injection, row.plant), rep));
    }
    let table = markdown_table(&columns);
    create_dir(out)?;
    std::fs::write(out.join("self-test.md"), &table)?;
    write_json(&out.join("self-test.json"), &columns)?;
    print!("{table}");
    for (label, rep) in &columns {
        println!(
            "{label}: t = {:.4}, retain while |d̄| < {:.4}, minimum detectable mean difference {:.4}",
            rep.t_stat, rep.rejection_threshold, rep.min_detectable_mu1
        );
    }
    if failures.is_empty() {
        println!("self-test passed: {} columns within {SELF_TEST_TOLERANCE}", columns.len());
        Ok(())
    } else {
        bail!("self-test failed:\n  {}", failures.join("\n  "))
    }
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeArgs {
    /// Listen address [default: 127.0.0.1].
    #[arg(long)]
    pub host: Option<String>,
    /// Listen port [default: 8080].
    #[arg(long)]
    pub port: Option<u16>,
    /// Directory for session records [default: runs].
    #[arg(long, env = "CROSSOVER_RUNS_DIR")]
    pub runs_dir: Option<PathBuf>,
    /// Session clock speed-up; 1 is real time.
    #[arg(long)]
    pub time_scale: Option<f64>,
}

pub fn serve(a: ServeArgs) -> Result<()> {
    let addr = format!("{}:{}", a.host.as_deref().unwrap_or("127.0.0.1"), a.port.unwrap_or(8080));
    let runs_dir = a.runs_dir.unwrap_or_else(|| "runs".into());
    let time_scale = a.time_scale.unwrap_or(1.0);
    ensure!(time_scale.is_finite() && time_scale > 0.0, "--time-scale: must be positive, got {time_scale}");
    create_dir(&runs_dir)?;
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = crossover_service::bind(&addr).await?;
        println!("listening on http://{} (records in {})", listener.local_addr()?, runs_dir.display());
        let state = AppState::new(ServiceConfig { runs_dir, time_scale });
        crossover_service::serve(listener, state).await?;
        Ok(())
    })
}
