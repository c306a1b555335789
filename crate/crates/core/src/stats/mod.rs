//! Validation statistics comparing a model output against a set of runs.
//!
//! A [`RunSet`] holds `k` run outputs and one model output sampled on a
//! shared grid. From it the pipeline computes pointwise envelopes, the
//! per-run difference means `d̄ᵢ` and standard deviations `sᵢ`, and then
//! treats the `d̄ᵢ` as a sample: a Student-t interval for their mean, a χ²
//! interval for their standard deviation, a two-sided test of a zero mean,
//! and the smallest mean shift the test detects with a given power.

pub mod dist;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::sim::Trace;
use crate::table::Table;
use crate::{Error, Result};

pub use dist::{chi2_cdf, chi2_quantile, chi2_upper, normal_cdf, normal_quantile, student_t_cdf, student_t_quantile, t_upper};

/// Aligned run outputs and model output on one sampling grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSet {
    t: Vec<f64>,
    runs: Vec<Vec<f64>>,
    model: Vec<f64>,
}

impl RunSet {
    /// Invariants: `k ≥ 2`, every series has the grid length, the grid is strictly increasing.
    pub fn new(t: Vec<f64>, runs: Vec<Vec<f64>>, model: Vec<f64>) -> Result<Self> {
        if runs.len() < 2 {
            return Err(Error::InvalidArgument(format!("a run set needs at least 2 runs, got {}", runs.len())));
        }
        let n = t.len();
        if model.len() != n || runs.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("all series must share the sampling grid length".into()));
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("sampling instants must be strictly increasing".into()));
        }
        if t.iter().chain(model.iter()).chain(runs.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("series contain non-finite values".into()));
        }
        Ok(Self { t, runs, model })
    }

    /// Builds a run set on the model grid; runs on other grids are linearly interpolated onto it.
    pub fn from_series(model: Series, runs: Vec<Series>) -> Result<Self> {
        model.validate()?;
        let mut aligned = Vec::with_capacity(runs.len());
        for r in runs {
            r.validate()?;
            if r.t == model.t {
                aligned.push(r.y);
            } else {
                aligned.push(model.t.iter().map(|&t| r.interpolate(t)).collect());
            }
        }
        Self::new(model.t, aligned, model.y)
    }

    /// Plant outputs of simulated traces.
    pub fn from_traces(model: &Trace, runs: &[Trace]) -> Result<Self> {
        let series = |tr: &Trace| Series::new(tr.t.clone(), tr.y_p.clone());
        Self::from_series(series(model)?, runs.iter().map(series).collect::<Result<Vec<_>>>()?)
    }

    /// Loads the model and run files, each with `t` and `y_p` columns.
    pub fn load(model: &Path, runs: &[impl AsRef<Path>]) -> Result<Self> {
        let model = Series::load(model)?;
        let runs = runs.iter().map(|p| Series::load(p.as_ref())).collect::<Result<Vec<_>>>()?;
        Self::from_series(model, runs)
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn runs(&self) -> &[Vec<f64>] {
        &self.runs
    }

    pub fn model(&self) -> &[f64] {
        &self.model
    }

    pub fn k(&self) -> usize {
        self.runs.len()
    }

    pub fn n_samples(&self) -> usize {
        self.t.len()
    }
}

/// One sampled output series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
}

impl Series {
    pub fn new(t: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let s = Self { t, y };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        if self.t.len() != self.y.len() || self.t.is_empty() {
            return Err(Error::Dimension(format!(
                "series needs equal, non-zero lengths (t: {}, y: {})",
                self.t.len(),
                self.y.len()
            )));
        }
        if self.t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("sampling instants must be strictly increasing".into()));
        }
        Ok(())
    }

    /// Extracts the `t` and `y_p` columns of a trace or recorded-session table.
    pub fn from_table(tab: &Table) -> Result<Self> {
        Self::new(tab.require("t")?.to_vec(), tab.require("y_p")?.to_vec())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_table(&Table::load(path)?)
    }

    /// Linear interpolation, held constant outside the sampled range.
    pub fn interpolate(&self, t: f64) -> f64 {
        let n = self.t.len();
        if t <= self.t[0] {
            return self.y[0];
        }
        if t >= self.t[n - 1] {
            return self.y[n - 1];
        }
        let i = self.t.partition_point(|&ti| ti <= t) - 1;
        let f = (t - self.t[i]) / (self.t[i + 1] - self.t[i]);
        self.y[i] + f * (self.y[i + 1] - self.y[i])
    }
}

/// Pointwise extremes and mean across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub mean: Vec<f64>,
}

impl Envelope {
    /// Fraction of samples where `series` lies within `[min, max]`.
    pub fn inside_fraction(&self, series: &[f64]) -> f64 {
        let inside = series
            .iter()
            .zip(self.min.iter().zip(&self.max))
            .filter(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
            .count();
        inside as f64 / self.min.len().max(1) as f64
    }
}

pub fn envelope(rs: &RunSet) -> Envelope {
    let n = rs.n_samples();
    let k = rs.k() as f64;
    let mut env = Envelope { min: vec![f64::INFINITY; n], max: vec![f64::NEG_INFINITY; n], mean: vec![0.0; n] };
    for run in &rs.runs {
        for (j, &v) in run.iter().enumerate() {
            env.min[j] = env.min[j].min(v);
            env.max[j] = env.max[j].max(v);
            env.mean[j] += v / k;
        }
    }
    env
}

/// Mean and sample standard deviation of `d = model − run` for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunDifference {
    pub mean: f64,
    pub sd: f64,
}

pub fn differences(rs: &RunSet) -> Result<Vec<RunDifference>> {
    if rs.n_samples() < 2 {
        return Err(Error::InvalidArgument("differences need at least 2 samples per run".into()));
    }
    Ok(rs
        .runs
        .iter()
        .map(|run| {
            let d: Vec<f64> = rs.model.iter().zip(run).map(|(m, p)| m - p).collect();
            let (mean, sd) = mean_sd(&d);
            RunDifference { mean, sd }
        })
        .collect())
}

/// Sample mean and standard deviation (divisor `n − 1`).
pub fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let ss: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).max(0.0).sqrt())
}

/// Sample summary of the per-run means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub dbar: f64,
    pub s: f64,
    pub k: usize,
}

impl Summary {
    pub fn new(dbar: f64, s: f64, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 run means, got {k}")));
        }
        if !(s >= 0.0 && s.is_finite() && dbar.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid summary (d̄ = {dbar}, s = {s})")));
        }
        Ok(Self { dbar, s, k })
    }

    pub fn of(dbars: &[f64]) -> Result<Self> {
        if dbars.len() < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 run means, got {}", dbars.len())));
        }
        let (dbar, s) = mean_sd(dbars);
        Self::new(dbar, s, dbars.len())
    }

    fn dof(&self) -> f64 {
        (self.k - 1) as f64
    }

    fn std_error(&self) -> f64 {
        self.s / (self.k as f64).sqrt()
    }

    /// Two-sided critical value `t_{α/2, k−1}`.
    pub fn critical_t(&self, alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        t_upper(alpha / 2.0, self.dof())
    }

    pub fn mean_ci(&self, alpha: f64) -> Result<Interval> {
        let half = self.critical_t(alpha)? * self.std_error();
        Ok(Interval { lo: self.dbar - half, hi: self.dbar + half })
    }

    pub fn sigma_ci(&self, alpha: f64) -> Result<Interval> {
        check_alpha(alpha)?;
        let ss = self.dof() * self.s * self.s;
        let upper = chi2_upper(alpha / 2.0, self.dof())?;
        let lower = chi2_upper(1.0 - alpha / 2.0, self.dof())?;
        Ok(Interval { lo: (ss / upper).sqrt(), hi: (ss / lower).sqrt() })
    }

    pub fn test(&self, mu0: f64, alpha: f64) -> Result<HypothesisTest> {
        let critical = self.critical_t(alpha)?;
        let threshold = critical * self.std_error();
        let shift = (self.dbar - mu0).abs();
        if self.s == 0.0 {
            let infinite = shift > 0.0;
            return Ok(HypothesisTest {
                t_stat: if infinite { f64::INFINITY } else { 0.0 },
                critical,
                rejected: infinite,
                infinite_statistic: infinite,
                threshold,
            });
        }
        let t_stat = shift / self.std_error();
        Ok(HypothesisTest { t_stat, critical, rejected: t_stat >= critical, infinite_statistic: false, threshold })
    }

    pub fn min_detectable_effect(&self, alpha: f64, beta: f64) -> Result<f64> {
        min_detectable_effect(self.s, self.k, alpha, beta)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Result of the two-sided one-sample t-test on the run means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisTest {
    /// `|d̄ − μ₀|·√k / s`; infinite when `s = 0` and `d̄ ≠ μ₀`.
    pub t_stat: f64,
    pub critical: f64,
    pub rejected: bool,
    pub infinite_statistic: bool,
    /// Rejection region `|d̄| ≥ threshold` for `μ₀ = 0`.
    pub threshold: f64,
}

pub fn mean_ci(dbars: &[f64], alpha: f64) -> Result<Interval> {
    Summary::of(dbars)?.mean_ci(alpha)
}

pub fn variance_ci(dbars: &[f64], alpha: f64) -> Result<Interval> {
    Summary::of(dbars)?.sigma_ci(alpha)
}

pub fn hypothesis_test(dbars: &[f64], mu0: f64, alpha: f64) -> Result<HypothesisTest> {
    Summary::of(dbars)?.test(mu0, alpha)
}

/// Probability that `d̄` falls in the retention region when the true mean is `mu1`,
/// modelling `(d̄ − μ₁)√k / s` as central Student-t with `k − 1` dof.
pub fn retention_probability(mu1: f64, s: f64, k: usize, alpha: f64) -> Result<f64> {
    let sum = Summary::new(0.0, s, k)?;
    let critical = sum.critical_t(alpha)?;
    if s == 0.0 {
        return Ok(if mu1 == 0.0 { 1.0 } else { 0.0 });
    }
    let shift = mu1 / sum.std_error();
    let dof = sum.dof();
    Ok((student_t_cdf(critical - shift, dof) - student_t_cdf(-critical - shift, dof)).max(0.0))
}

/// Smallest `|μ₁|` whose retention probability is at most `β/2`, by bisection.
pub fn min_detectable_effect(s: f64, k: usize, alpha: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidArgument(format!("beta must lie in (0, 1), got {beta}")));
    }
    let target = beta / 2.0;
    if retention_probability(0.0, s, k, alpha)? <= target || s == 0.0 {
        return Ok(0.0);
    }
    let mut hi = s.max(f64::MIN_POSITIVE);
    while retention_probability(hi, s, k, alpha)? > target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 * hi.max(1e-300) {
        let mid = 0.5 * (lo + hi);
        if retention_probability(mid, s, k, alpha)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Sorted values paired with standard-normal quantiles at Blom positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalScores {
    pub values: Vec<f64>,
    pub quantiles: Vec<f64>,
    /// Pearson correlation of the pairs; `None` when the values have zero variance.
    pub correlation: Option<f64>,
    pub zero_variance: bool,
}

pub fn blom_quantiles(k: usize) -> Vec<f64> {
    (1..=k)
        .map(|i| normal_quantile((i as f64 - 0.375) / (k as f64 + 0.25)).expect("Blom positions lie in (0, 1)"))
        .collect()
}

pub fn normal_scores(dbars: &[f64]) -> Result<NormalScores> {
    if dbars.len() < 3 {
        return Err(Error::InvalidArgument(format!("normal scores need at least 3 values, got {}", dbars.len())));
    }
    let mut values = dbars.to_vec();
    values.sort_by(f64::total_cmp);
    let quantiles = blom_quantiles(values.len());
    let zero_variance = values.first() == values.last();
    let correlation = (!zero_variance).then(|| pearson(&values, &quantiles));
    Ok(NormalScores { values, quantiles, correlation, zero_variance })
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Aggregate statistics for one comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub per_run: Vec<RunDifference>,
    pub k: usize,
    pub dbar: f64,
    pub s: f64,
    pub mean_ci: Interval,
    pub sigma_ci: Interval,
    pub critical_t: f64,
    pub t_stat: f64,
    pub infinite_statistic: bool,
    pub rejected: bool,
    pub rejection_threshold: f64,
    pub min_detectable_mu1: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl StatsReport {
    fn from_parts(per_run: Vec<RunDifference>, summary: Summary, alpha: f64, beta: f64) -> Result<Self> {
        let test = summary.test(0.0, alpha)?;
        Ok(Self {
            per_run,
            k: summary.k,
            dbar: summary.dbar,
            s: summary.s,
            mean_ci: summary.mean_ci(alpha)?,
            sigma_ci: summary.sigma_ci(alpha)?,
            critical_t: test.critical,
            t_stat: test.t_stat,
            infinite_statistic: test.infinite_statistic,
            rejected: test.rejected,
            rejection_threshold: test.threshold,
            min_detectable_mu1: summary.min_detectable_effect(alpha, beta)?,
            alpha,
            beta,
        })
    }

    /// Report for pre-computed run means; `per_run` carries the means with unknown spread.
    pub fn from_dbars(dbars: &[f64], alpha: f64, beta: f64) -> Result<Self> {
        let per_run = dbars.iter().map(|&mean| RunDifference { mean, sd: f64::NAN }).collect();
        Self::from_parts(per_run, Summary::of(dbars)?, alpha, beta)
    }

    pub fn from_summary(summary: Summary, alpha: f64, beta: f64) -> Result<Self> {
        Self::from_parts(Vec::new(), summary, alpha, beta)
    }

    pub fn summary(&self) -> Summary {
        Summary { dbar: self.dbar, s: self.s, k: self.k }
    }

    pub fn decision(&self) -> &'static str {
        if self.rejected {
            "H₀ is rejected"
        } else {
            "H₀ is retained"
        }
    }
}

pub fn report(rs: &RunSet, alpha: f64, beta: f64) -> Result<StatsReport> {
    let per_run = differences(rs)?;
    let dbars: Vec<f64> = per_run.iter().map(|d| d.mean).collect();
    StatsReport::from_parts(per_run, Summary::of(&dbars)?, alpha, beta)
}

/// Renders reports column-wise: one column per labelled report.
pub fn markdown_table(columns: &[(String, StatsReport)]) -> String {
    let mut out = String::new();
    let _ = write!(out, "| |");
    for (label, _) in columns {
        let _ = write!(out, " {label} |");
    }
    let _ = write!(out, "\n|---|");
    for _ in columns {
        out.push_str("---|");
    }
    out.push('\n');
    let rows: [(&str, fn(&StatsReport) -> String); 5] = [
        ("Mean d̄", |r| format!("{:.4}", r.dbar)),
        ("St. d. s", |r| format!("{:.4}", r.s)),
        ("Mean conf. int.", |r| format!("({:.4}, {:.4})", r.mean_ci.lo, r.mean_ci.hi)),
        ("St.d. conf. int.", |r| format!("({:.4}, {:.4})", r.sigma_ci.lo, r.sigma_ci.hi)),
        ("Hypothesis test", |r| r.decision().to_string()),
    ];
    for (name, cell) in rows {
        let _ = write!(out, "| {name} |");
        for (_, r) in columns {
            let _ = write!(out, " {} |", cell(r));
        }
        out.push('\n');
    }
    out
}

/// `k` values whose sample mean and standard deviation are exactly `dbar` and `s`,
/// shaped like standard-normal order statistics.
pub fn synthesize_dbars(dbar: f64, s: f64, k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 values, got {k}")));
    }
    let z = blom_quantiles(k);
    let (mz, sz) = mean_sd(&z);
    Ok(z.iter().map(|v| dbar + s * (v - mz) / sz).collect())
}

/// Summary rows of the recorded human-in-the-loop experiment (11 participants).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub injection: &'static str,
    pub plant: &'static str,
    pub dbar: f64,
    pub s: f64,
    pub mean_ci: (f64, f64),
    pub sigma_ci: (f64, f64),
    pub rejected: bool,
}

pub const BENCHMARK_K: usize = 11;

pub const BENCHMARK_ROWS: [BenchmarkRow; 6] = [
    BenchmarkRow { injection: "sudden", plant: "zero-order", dbar: 0.0085, s: 0.0339, mean_ci: (-0.014, 0.03), sigma_ci: (0.024, 0.06), rejected: false },
    BenchmarkRow { injection: "sudden", plant: "first-order", dbar: -0.0068, s: 0.0379, mean_ci: (-0.032, 0.02), sigma_ci: (0.026, 0.066), rejected: false },
    BenchmarkRow { injection: "sudden", plant: "second-order", dbar: 0.0011, s: 0.0252, mean_ci: (-0.016, 0.018), sigma_ci: (0.018, 0.044), rejected: false },
    BenchmarkRow { injection: "gradual", plant: "zero-order", dbar: 0.0154, s: 0.038, mean_ci: (-0.01, 0.04), sigma_ci: (0.026, 0.067), rejected: false },
    BenchmarkRow { injection: "gradual", plant: "first-order", dbar: 0.0026, s: 0.034, mean_ci: (-0.02, 0.025), sigma_ci: (0.0235, 0.06), rejected: false },
    BenchmarkRow { injection: "gradual", plant: "second-order", dbar: 0.004, s: 0.03, mean_ci: (-0.016, 0.023), sigma_ci: (0.02, 0.05), rejected: false },
];

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn set(runs: Vec<Vec<f64>>, model: Vec<f64>) -> RunSet {
        let t = (0..model.len()).map(|i| i as f64).collect();
        RunSet::new(t, runs, model).unwrap()
    }

    #[test]
    fn envelope_examples() {
        let rs = set(vec![vec![1.0, 2.0], vec![3.0, 0.0]], vec![2.0, 5.0]);
        let env = envelope(&rs);
        assert_eq!(env.min, vec![1.0, 0.0]);
        assert_eq!(env.max, vec![3.0, 2.0]);
        assert_eq!(env.mean, vec![2.0, 1.0]);
        assert_eq!(env.inside_fraction(rs.model()), 0.5);
        let same = envelope(&set(vec![vec![1.0, 4.0]; 3], vec![0.0, 0.0]));
        assert!(same.min == same.max && same.max == same.mean);
    }

    #[test]
    fn run_set_invariants() {
        assert!(RunSet::new(vec![0.0, 1.0], vec![vec![1.0, 2.0]], vec![0.0, 0.0]).is_err());
        assert!(RunSet::new(vec![0.0, 1.0], vec![vec![1.0, 2.0], vec![1.0]], vec![0.0, 0.0]).is_err());
        assert!(RunSet::new(vec![1.0, 0.0], vec![vec![1.0, 2.0]; 2], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn differences_examples() {
        let d = differences(&set(vec![vec![1.0, 2.0, 3.0]; 2], vec![1.0, 2.0, 3.0])).unwrap();
        assert!(d.iter().all(|r| r.mean == 0.0 && r.sd == 0.0));
        let d = differences(&set(vec![vec![0.0, 0.0], vec![-1.0, 1.0]], vec![1.0, -1.0])).unwrap();
        assert_eq!(d[0].mean, 0.0);
        assert!((d[0].sd - 2f64.sqrt()).abs() < 1e-15);
        let d = differences(&set(vec![vec![0.5, 1.5, -2.0]; 2], vec![0.75, 1.75, -1.75])).unwrap();
        assert!((d[1].mean - 0.25).abs() < 1e-15 && d[1].sd < 1e-15);
        let one = RunSet::new(vec![0.0], vec![vec![0.0]; 2], vec![0.0]).unwrap();
        assert!(differences(&one).is_err());
    }

    #[test]
    fn resampling_onto_model_grid() {
        let model = Series::new(vec![0.0, 0.5, 1.0], vec![0.0; 3]).unwrap();
        let fine = Series::new(vec![0.0, 0.25, 0.5, 0.75, 1.0], vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let rs = RunSet::from_series(model.clone(), vec![fine, model.clone()]).unwrap();
        assert_eq!(rs.runs()[0], vec![0.0, 2.0, 4.0]);
    }

    #[test]
    fn table_row_first_order_sudden() {
        let dbars = synthesize_dbars(-0.0068, 0.0379, 11).unwrap();
        let sum = Summary::of(&dbars).unwrap();
        assert!((sum.dbar + 0.0068).abs() < 1e-15 && (sum.s - 0.0379).abs() < 1e-15);
        let ci = mean_ci(&dbars, 0.05).unwrap();
        assert!((ci.lo + 0.0323).abs() < 1e-3 && (ci.hi - 0.0187).abs() < 1e-3, "{ci:?}");
        let sci = variance_ci(&dbars, 0.05).unwrap();
        assert!((sci.lo - 0.0265).abs() < 2e-3 && (sci.hi - 0.0663).abs() < 2e-3, "{sci:?}");
        let test = hypothesis_test(&dbars, 0.0, 0.05).unwrap();
        assert!(!test.rejected);
        assert!((test.threshold - 0.0255).abs() < 5e-4);
        let mu1 = min_detectable_effect(0.0379, 11, 0.05, 0.05).unwrap();
        assert!((mu1 - 0.051).abs() < 2e-3, "{mu1}");
    }

    #[test]
    fn t_statistic_with_rounded_spread() {
        let t = Summary::new(-0.0068, 0.038, 11).unwrap().test(0.0, 0.05).unwrap();
        assert!((t.t_stat - 0.5935).abs() < 1e-3 && !t.rejected);
    }

    /// Table entries are printed to two significant digits.
    #[test]
    fn every_benchmark_row_is_retained_and_matches() {
        for row in BENCHMARK_ROWS {
            let r = StatsReport::from_dbars(&synthesize_dbars(row.dbar, row.s, BENCHMARK_K).unwrap(), 0.05, 0.05).unwrap();
            assert_eq!(r.rejected, row.rejected);
            assert!((r.mean_ci.lo - row.mean_ci.0).abs() < 3e-3 && (r.mean_ci.hi - row.mean_ci.1).abs() < 3e-3);
            assert!((r.sigma_ci.lo - row.sigma_ci.0).abs() < 3e-3 && (r.sigma_ci.hi - row.sigma_ci.1).abs() < 3e-3);
        }
    }

    #[test]
    fn degenerate_spread() {
        let ci = mean_ci(&[0.3; 5], 0.05).unwrap();
        assert!((ci.lo - 0.3).abs() < 1e-15 && (ci.hi - 0.3).abs() < 1e-15);
        assert_eq!(variance_ci(&[0.3; 5], 0.05).unwrap(), Interval { lo: 0.0, hi: 0.0 });
        let t = hypothesis_test(&[0.3; 5], 0.0, 0.05).unwrap();
        assert!(t.rejected && t.infinite_statistic && t.t_stat.is_infinite());
        let t = hypothesis_test(&[0.3; 5], 0.3, 0.05).unwrap();
        assert!(!t.rejected && t.t_stat == 0.0);
    }

    #[test]
    fn zero_mean_is_retained() {
        let t = hypothesis_test(&[-1.0, 0.0, 1.0], 0.0, 0.05).unwrap();
        assert_eq!(t.t_stat, 0.0);
        assert!(!t.rejected);
    }

    /// Independent oracle: scan μ₁ on a fine grid and take the first point meeting the power target.
    fn scan_mu1(s: f64, k: usize, alpha: f64, beta: f64) -> f64 {
        let dof = (k - 1) as f64;
        let tc = t_upper(alpha / 2.0, dof).unwrap();
        let se = s / (k as f64).sqrt();
        let mut mu = 0.0;
        loop {
            let p = student_t_cdf(tc - mu / se, dof) - student_t_cdf(-tc - mu / se, dof);
            if p <= beta / 2.0 {
                return mu;
            }
            mu += 1e-6;
        }
    }

    #[test]
    fn detectable_effect_scales_with_spread() {
        let a = min_detectable_effect(0.0379, 11, 0.05, 0.05).unwrap();
        let b = min_detectable_effect(2.0 * 0.0379, 11, 0.05, 0.05).unwrap();
        assert!((a - scan_mu1(0.0379, 11, 0.05, 0.05)).abs() < 2e-6);
        assert!((b - scan_mu1(2.0 * 0.0379, 11, 0.05, 0.05)).abs() < 2e-6);
        assert!((b / a - 2.0).abs() < 1e-6);
    }

    #[test]
    fn detectable_effect_shrinks_as_power_demand_drops() {
        let mut prev = f64::INFINITY;
        for beta in [0.01, 0.05, 0.2, 0.5, 0.9, 0.999] {
            let mu = min_detectable_effect(0.0379, 11, 0.05, beta).unwrap();
            assert!(mu <= prev);
            prev = mu;
        }
        assert!(min_detectable_effect(0.0379, 11, 0.05, 1.0).is_err());
    }

    #[test]
    fn normal_scores_examples() {
        let ns = normal_scores(&[1.0, -1.0, 0.0]).unwrap();
        assert_eq!(ns.values, vec![-1.0, 0.0, 1.0]);
        assert!((ns.quantiles[0] + ns.quantiles[2]).abs() < 1e-12 && ns.quantiles[1].abs() < 1e-12);
        assert!(normal_scores(&[2.0; 4]).unwrap().zero_variance);
        assert!(normal_scores(&[2.0; 4]).unwrap().correlation.is_none());
        assert!(normal_scores(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn gaussian_sample_scores_are_straight() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..50).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert!(normal_scores(&x).unwrap().correlation.unwrap() >= 0.95);
    }

    #[test]
    fn self_comparison_is_retained() {
        let model: Vec<f64> = (0..200).map(|i| (i as f64 * 0.05).sin()).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let runs = (0..11)
            .map(|_| model.iter().map(|v| { let z: f64 = StandardNormal.sample(&mut rng); v + 1e-9 * z }).collect())
            .collect();
        let r = report(&set(runs, model), 0.05, 0.05).unwrap();
        assert!(r.dbar.abs() < 1e-7 && !r.rejected);
    }

    #[test]
    fn report_serialization_and_markdown() {
        let r = StatsReport::from_dbars(&synthesize_dbars(-0.0068, 0.0379, 11).unwrap(), 0.05, 0.05).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        let back: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(back["k"], 11);
        let md = markdown_table(&[("1st order".into(), r)]);
        assert!(md.contains("| Mean conf. int. | (-0.0323, 0.0187) |"), "{md}");
        assert!(md.contains("H₀ is retained"));
    }

    proptest! {
        #[test]
        fn ci_width_scales_inverse_root_k(s in 0.001f64..1.0, k in 2usize..30) {
            let w = |k: usize| Summary::new(0.0, s, k).unwrap().mean_ci(0.05).unwrap().width()
                / (2.0 * t_upper(0.025, (k - 1) as f64).unwrap());
            prop_assert!((w(k) * (k as f64).sqrt() - w(4 * k) * (4.0 * k as f64).sqrt()).abs() < 1e-12 * s.max(1.0));
        }

        #[test]
        fn test_ci_duality(dbars in proptest::collection::vec(-1.0f64..1.0, 3..15), mu0 in -1.0f64..1.0, alpha in 0.01f64..0.3) {
            let ci = mean_ci(&dbars, alpha).unwrap();
            let t = hypothesis_test(&dbars, mu0, alpha).unwrap();
            let margin = (mu0 - ci.lo).abs().min((mu0 - ci.hi).abs());
            prop_assume!(margin > 1e-9);
            prop_assert_eq!(!t.rejected, ci.lo < mu0 && mu0 < ci.hi);
        }

        #[test]
        fn differences_translation_consistent(c in -5.0f64..5.0, seed in 0u64..1000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut gen = |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
            let runs = vec![gen(20), gen(20), gen(20)];
            let model = gen(20);
            let shifted: Vec<f64> = model.iter().map(|v| v + c).collect();
            let a = differences(&set(runs.clone(), model)).unwrap();
            let b = differences(&set(runs, shifted)).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((y.mean - x.mean - c).abs() < 1e-12);
                prop_assert!((y.sd - x.sd).abs() < 1e-12);
            }
        }
    }
}
