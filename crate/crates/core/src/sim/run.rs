use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::scenario::{PlantSchedule, Scenario};
use super::trace::Trace;
use crate::pilot::{ideal_gains, AdaptiveState, History, IdealGains};
use crate::reference::{align_to_aggregate, AlignedReference};
use crate::statespace::{series_aggregate, tf_to_ss, Matrix, StateSpace, Vector};
use crate::{Error, Result};

/// Number of η-grid samples of λ₁ exported per trace row.
pub const LAMBDA_COLUMNS: usize = 8;

/// Remnant variance giving run-mean spreads of a few hundredths on the presets.
pub const DEFAULT_REMNANT_POWER: f64 = 0.01;

/// Zero-mean first-order band-limited noise added to the pilot output.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Remnant {
    /// Stationary variance.
    pub power: f64,
    pub seed: u64,
    /// Corner frequency in rad/s.
    pub bandwidth: f64,
}

impl Remnant {
    pub const DEFAULT_BANDWIDTH: f64 = 5.0;

    pub fn new(power: f64, seed: u64) -> Self {
        Self { power, seed, bandwidth: Self::DEFAULT_BANDWIDTH }
    }
}

/// AR(1) realisation of [`Remnant`] at a fixed step.
#[derive(Clone, Debug)]
pub struct RemnantGenerator {
    rng: ChaCha8Rng,
    a: f64,
    drive: f64,
    sigma: f64,
    state: f64,
    started: bool,
}

impl RemnantGenerator {
    pub fn new(remnant: &Remnant, dt: f64) -> Result<Self> {
        if !(remnant.power >= 0.0 && remnant.power.is_finite()) {
            return Err(Error::InvalidArgument(format!("remnant power must be >= 0, got {}", remnant.power)));
        }
        if !(remnant.bandwidth > 0.0) {
            return Err(Error::InvalidArgument("remnant bandwidth must be positive".into()));
        }
        let a = (-remnant.bandwidth * dt).exp();
        let sigma = remnant.power.sqrt();
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(remnant.seed),
            a,
            drive: sigma * (1.0 - a * a).sqrt(),
            sigma,
            state: 0.0,
            started: false,
        })
    }

    pub fn sample(&mut self) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        let w: f64 = StandardNormal.sample(&mut self.rng);
        if self.started {
            self.state = self.a * self.state + self.drive * w;
        } else {
            self.state = self.sigma * w;
            self.started = true;
        }
        self.state
    }
}

/// Test harness mode with the plant treated as known.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KnownPlant {
    /// Initialise θ₁, λ₁, K_r at their ideal values.
    pub start_at_ideal: bool,
    /// Run the adaptive laws.
    pub adapt: bool,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub remnant: Option<Remnant>,
    /// Ideal parameters are computed from the nominal aggregate and the
    /// Lyapunov–Krasovskii functional is recorded.
    pub known_plant: Option<KnownPlant>,
}

/// Everything needed to step the closed loop, derived once per run.
pub struct Setup {
    pub neuromuscular: StateSpace,
    pub nominal: StateSpace,
    pub aligned: AlignedReference,
    pub ideal: Option<IdealGains>,
}

pub fn setup(scn: &Scenario) -> Result<Setup> {
    let cfg = &scn.config;
    let neuromuscular = tf_to_ss(cfg.neuromuscular.tf());
    let nominal = series_aggregate(&neuromuscular, &tf_to_ss(&cfg.plant_before))?;
    if nominal.n_states() != scn.reference_model.order() {
        return Err(Error::Dimension(format!(
            "reference order {} differs from aggregate order {}",
            scn.reference_model.order(),
            nominal.n_states()
        )));
    }
    let aligned = align_to_aggregate(&scn.reference_model, &nominal)?;
    let ideal = ideal_gains(nominal.a(), nominal.b(), &aligned.a_m, &aligned.b_m, cfg.tau(), cfg.pilot.n_eta).ok();
    Ok(Setup { neuromuscular, nominal, aligned, ideal })
}

/// Classic fourth-order Runge–Kutta step of `ẋ = Ax + B·input(s)`, `s ∈ [0, dt]`.
pub fn rk4_step(a: &Matrix, b: &Matrix, x: &Vector, dt: f64, input: impl Fn(f64) -> f64) -> Vector {
    if x.is_empty() {
        return x.clone();
    }
    let bcol = b.column(0);
    let f = |x: &Vector, s: f64| a * x + bcol * input(s);
    let k1 = f(x, 0.0);
    let k2 = f(&(x + &k1 * (0.5 * dt)), 0.5 * dt);
    let k3 = f(&(x + &k2 * (0.5 * dt)), 0.5 * dt);
    let k4 = f(&(x + &k3 * dt), dt);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// Plant driven directly by an input sequence held constant over each step.
///
/// When the schedule changes the plant order, the new state is the
/// minimum-norm state reproducing the current output.
#[derive(Clone, Debug)]
pub struct PlantIntegrator {
    schedule: PlantSchedule,
    dt: f64,
    step: u64,
    x: Vector,
}

impl PlantIntegrator {
    pub fn new(schedule: PlantSchedule, dt: f64) -> Result<Self> {
        schedule.validate()?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let n = schedule.initial.den_degree();
        Ok(Self { schedule, dt, step: 0, x: Vector::zeros(n) })
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn state(&self) -> &Vector {
        &self.x
    }

    /// Output at the current time for input `u`.
    pub fn output(&self, u: f64) -> f64 {
        let ss = self.schedule.at(self.time());
        if ss.n_states() == self.x.len() {
            ss.output(&self.x, u)
        } else {
            ss.d()[(0, 0)] * u
        }
    }

    /// Advances one step with `u` held constant; returns the output at the new time.
    pub fn advance(&mut self, u: f64) -> f64 {
        let ss = self.schedule.at(self.time());
        self.x = rk4_step(ss.a(), ss.b(), &self.x, self.dt, |_| u);
        self.step += 1;
        let next = self.schedule.at(self.time());
        if next.n_states() != self.x.len() {
            let y = ss.output(&self.x, u);
            self.x = remap_state(&next, u, y);
        }
        next.output(&self.x, u)
    }
}

fn remap_state(ss: &StateSpace, u: f64, y: f64) -> Vector {
    let n = ss.n_states();
    if n == 0 {
        return Vector::zeros(0);
    }
    let c = ss.c().row(0).transpose();
    let cn = c.norm_squared();
    if cn == 0.0 {
        return Vector::zeros(n);
    }
    c * ((y - ss.d()[(0, 0)] * u) / cn)
}

struct Recorder {
    trace: Trace,
}

impl Recorder {
    fn new(n: usize, lambda_index: Vec<usize>, lambda_eta: Vec<f64>, with_v: bool, cap: usize) -> Self {
        let vec = || Vec::with_capacity(cap);
        Self {
            trace: Trace {
                n,
                lambda_index,
                lambda_eta,
                t: vec(),
                r: vec(),
                u: vec(),
                u_delayed: vec(),
                y_h: vec(),
                y_p: vec(),
                y_m: vec(),
                x_hp: Vec::with_capacity(cap),
                x_m: Vec::with_capacity(cap),
                e: Vec::with_capacity(cap),
                theta1: Vec::with_capacity(cap),
                theta_x: Vec::with_capacity(cap),
                lambda1: Vec::with_capacity(cap),
                phi: vec(),
                kr: vec(),
                margin: vec(),
                v: with_v.then(vec),
            },
        }
    }
}

/// Evenly spaced η-grid indices, endpoints included.
fn lambda_subsample(n_eta: usize) -> Vec<usize> {
    let k = LAMBDA_COLUMNS.min(n_eta);
    if k <= 1 {
        return vec![0];
    }
    (0..k).map(|i| (i * (n_eta - 1) + (k - 1) / 2) / (k - 1)).collect()
}

/// Simulates the scenario with default options.
pub fn run(scn: &Scenario) -> Result<Trace> {
    run_with(scn, &RunOptions::default())
}

/// Fixed-step closed-loop simulation.
///
/// Each step at `t_k = k·dt`: reference `r(t_k)`, pilot control `u(t_k)`
/// (plus remnant), delayed input `u(t_k − τ)` from the delay line, outputs,
/// error `e = x_hp − x_m`, record, adaptive update, then RK4 integration of
/// the aggregate and reference states over `[t_k, t_k + dt]`.
pub fn run_with(scn: &Scenario, opts: &RunOptions) -> Result<Trace> {
    let cfg = &scn.config;
    cfg.validate()?;
    let dt = cfg.dt;
    let tau = cfg.tau();
    let steps = cfg.steps();
    let su = setup(scn)?;
    let n = su.nominal.n_states();
    let nh = su.neuromuscular.n_states();

    let ideal = match opts.known_plant {
        Some(_) => Some(su.ideal.clone().ok_or_else(|| {
            Error::Unmatched { state: f64::NAN, input: f64::NAN }
        })?),
        None => None,
    };
    let adapt = opts.known_plant.is_none_or(|k| k.adapt);

    let mut pilot = AdaptiveState::new(&cfg.pilot, &su.aligned.a_m, &su.aligned.b_m, tau, dt)?;
    pilot.prime(0.0);
    if let (Some(k), Some(ig)) = (opts.known_plant, &ideal) {
        if k.start_at_ideal {
            pilot.set_parameters(&ig.theta1, &ig.lambda1, ig.kr.clamp(cfg.pilot.kmin, cfg.pilot.kmax))?;
        }
    }
    let mut delay = History::new(1, dt, tau)?;
    delay.prime(0.0);
    let mut noise = opts.remnant.map(|r| RemnantGenerator::new(&r, dt)).transpose()?;

    let lambda_index = lambda_subsample(cfg.pilot.n_eta);
    let lambda_eta = lambda_index.iter().map(|&j| pilot.eta()[j]).collect();
    let mut rec = Recorder::new(n, lambda_index.clone(), lambda_eta, ideal.is_some(), steps);

    let sig = &cfg.reference_signal;
    let schedule = cfg.schedule();
    let mut x = Vector::zeros(n);
    let mut xm = Vector::zeros(n);
    let mut agg = su.nominal.clone();
    let mut agg_tf = cfg.plant_before.clone();

    for k in 0..steps {
        let t = k as f64 * dt;
        let tf_now = schedule.tf_at(t);
        if tf_now != agg_tf {
            agg = series_aggregate(&su.neuromuscular, &tf_to_ss(&tf_now))?;
            agg_tf = tf_now;
        }
        let r = sig.causal(t);
        let e = &x - &xm;
        let mut u = pilot.control_output(&x, r)?;
        if let Some(g) = noise.as_mut() {
            u += g.sample();
        }
        pilot.record(&x, u)?;
        delay.push(&[u])?;
        let ud0 = delay.scalar_at(t - tau)?;
        let ud1 = delay.scalar_at(t + dt - tau)?;

        let xh = x.rows(0, nh).into_owned();
        let y_h = su.neuromuscular.output(&xh, ud0);
        let y_p = agg.output(&x, ud0);
        let y_m = su.aligned.output(&xm, sig.causal(t - tau));
        let margin = pilot.stability_margin();

        let tr = &mut rec.trace;
        tr.t.push(t);
        tr.r.push(r);
        tr.u.push(u);
        tr.u_delayed.push(ud0);
        tr.y_h.push(y_h);
        tr.y_p.push(y_p);
        tr.y_m.push(y_m);
        tr.x_hp.push(x.iter().copied().collect());
        tr.x_m.push(xm.iter().copied().collect());
        tr.e.push(e.iter().copied().collect());
        tr.theta1.push(pilot.theta1().iter().copied().collect());
        tr.theta_x.push(pilot.theta_x().iter().copied().collect());
        tr.lambda1.push(lambda_index.iter().map(|&j| pilot.lambda1()[j]).collect());
        tr.phi.push(pilot.phi());
        tr.kr.push(pilot.kr());
        tr.margin.push(margin);
        if let (Some(v), Some(ig)) = (tr.v.as_mut(), &ideal) {
            v.push(pilot.lyapunov_functional(&e, ig)?);
        }

        if adapt {
            pilot.adapt_step(&e, dt)?;
        }
        x = rk4_step(agg.a(), agg.b(), &x, dt, |s| ud0 + (ud1 - ud0) * s / dt);
        xm = rk4_step(&su.aligned.a_m, &su.aligned.b_m, &xm, dt, |s| sig.causal(t + s - tau));

        if !(x.iter().chain(xm.iter()).all(|v| v.is_finite()) && u.is_finite() && pilot.kr().is_finite()) {
            return Err(Error::NonFinite { t, trace: Box::new(rec.trace) });
        }
    }
    Ok(rec.trace)
}

/// Model run with seeded remnant noise standing in for a human participant.
pub fn synthetic_participant(scn: &Scenario, noise_seed: u64, remnant_power: f64) -> Result<Trace> {
    if !(remnant_power >= 0.0) {
        return Err(Error::InvalidArgument(format!("remnant power must be >= 0, got {remnant_power}")));
    }
    let remnant = (remnant_power > 0.0).then(|| Remnant::new(remnant_power, noise_seed));
    run_with(scn, &RunOptions { remnant, known_plant: None })
}

/// Per-participant seeds derived deterministically from a cohort seed.
pub fn cohort_seeds(seed: u64, k: usize) -> Vec<u64> {
    use rand::RngCore;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k).map(|_| rng.next_u64()).collect()
}

/// `k` synthetic participants run on worker threads; output order follows the seeds.
pub fn cohort(scn: &Scenario, k: usize, seed: u64, remnant_power: f64) -> Result<Vec<Trace>> {
    let seeds = cohort_seeds(seed, k);
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(k.max(1));
    let mut results: Vec<Option<Result<Trace>>> = (0..k).map(|_| None).collect();
    std::thread::scope(|s| {
        let chunks: Vec<_> = results.chunks_mut(k.div_ceil(workers).max(1)).zip(seeds.chunks(k.div_ceil(workers).max(1))).collect();
        for (out, sd) in chunks {
            s.spawn(move || {
                for (slot, &seed) in out.iter_mut().zip(sd) {
                    *slot = Some(synthetic_participant(scn, seed, remnant_power));
                }
            });
        }
    });
    results.into_iter().map(|r| r.expect("every slot is filled")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{preset, warm_up_schedule, ScenarioConfig, SinusoidSum};
    use crate::statespace::{expm, DelayedTf};

    fn short(name: &str, duration: f64) -> ScenarioConfig {
        let mut cfg = preset(name).unwrap();
        cfg.duration = duration;
        cfg.injection_time = duration / 2.0;
        cfg
    }

    #[test]
    fn zero_reference_gives_zero_trace() {
        let mut cfg = short("first-order-sudden", 5.0);
        cfg.reference_signal = SinusoidSum::new(vec![]).unwrap();
        let tr = run(&cfg.build().unwrap()).unwrap();
        assert!(tr.u.iter().chain(&tr.y_p).chain(&tr.y_m).all(|&v| v == 0.0));
        assert!(tr.e.iter().flatten().all(|&v| v == 0.0));
        assert!(tr.theta1.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn run_is_deterministic_and_remnant_free_participant_matches() {
        let scn = short("first-order-sudden", 10.0).build().unwrap();
        let a = run(&scn).unwrap();
        assert_eq!(a, run(&scn).unwrap());
        assert_eq!(a, synthetic_participant(&scn, 99, 0.0).unwrap());
        let n1 = synthetic_participant(&scn, 1, 1e-3).unwrap();
        assert_eq!(n1, synthetic_participant(&scn, 1, 1e-3).unwrap());
        assert_ne!(n1, synthetic_participant(&scn, 2, 1e-3).unwrap());
        assert!(synthetic_participant(&scn, 1, -1.0).is_err());
    }

    #[test]
    fn full_length_trace_has_one_row_per_step() {
        let scn = preset("first-order-sudden").unwrap().build().unwrap();
        let tr = run(&scn).unwrap();
        assert_eq!(tr.len(), 14_000);
        assert!(tr.t.windows(2).all(|w| (w[1] - w[0] - 0.01).abs() < 1e-9));
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        assert!(finite(&tr.u) && finite(&tr.y_p) && finite(&tr.kr) && finite(&tr.margin));
        assert!(tr.e.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn remnant_generator_statistics() {
        let rms = |seed| {
            let mut g = RemnantGenerator::new(&Remnant::new(0.01, seed), 0.01).unwrap();
            ((0..14_000).map(|_| g.sample().powi(2)).sum::<f64>() / 14_000.0).sqrt()
        };
        let (a, b) = (rms(3), rms(4));
        assert_ne!(a, b);
        assert!((a / b - 1.0).abs() < 0.2);
        assert!((a / 0.1 - 1.0).abs() < 0.2);
    }

    #[test]
    fn ideal_fixed_gains_track_reference_state() {
        let mut cfg = short("first-order-sudden", 20.0);
        cfg.plant_after = cfg.plant_before.clone();
        let scn = cfg.build().unwrap();
        let tr = run_with(&scn, &RunOptions { remnant: None, known_plant: Some(KnownPlant { start_at_ideal: true, adapt: false }) }).unwrap();
        assert!(tr.rms_error(0.0, 20.0) < 1e-4, "rms {}", tr.rms_error(0.0, 20.0));
        assert!(tr.v.unwrap().iter().all(|&v| v < 1e-6));
    }

    #[test]
    fn halving_dt_converges() {
        let final_state = |dt: f64| {
            let mut cfg = short("first-order-sudden", 10.0);
            cfg.dt = dt;
            let tr = run(&cfg.build().unwrap()).unwrap();
            let i = tr.t.iter().position(|&t| (t - 9.0).abs() < dt / 2.0).unwrap();
            nalgebra::DVector::from_vec(tr.x_hp[i].clone())
        };
        let (a, b, c) = (final_state(0.01), final_state(0.005), final_state(0.0025));
        let (d1, d2) = ((&a - &b).norm(), (&b - &c).norm());
        assert!(d2 < 0.75 * d1, "d1 = {d1:e}, d2 = {d2:e}");
    }

    #[test]
    fn divergence_reports_trace_prefix() {
        let mut cfg = preset("second-order-sudden").unwrap();
        cfg.pilot.gains = crate::pilot::AdaptationGains::default();
        match run(&cfg.build().unwrap()) {
            Err(Error::NonFinite { t, trace }) => {
                assert!(t < 140.0);
                assert!(!trace.is_empty() && *trace.t.last().unwrap() <= t);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn reference_states_follow_exact_step_response() {
        let scn = preset("first-order-sudden").unwrap().build().unwrap();
        let ss = &scn.reference_model.ss;
        let dt = 0.01;
        let mut x = Vector::zeros(2);
        for _ in 0..300 {
            x = rk4_step(ss.a(), ss.b(), &x, dt, |_| 1.0);
        }
        let a = ss.a();
        let exact = a.clone().try_inverse().unwrap() * (expm(a, 3.0).unwrap() - Matrix::identity(2, 2)) * ss.b();
        assert!((x - exact.column(0)).norm() < 1e-6);
    }

    #[test]
    fn plant_integrator_dc_gain_and_order_changes() {
        let sched = PlantSchedule { initial: crate::statespace::RationalTf::new(vec![4.0], vec![1.0, 1.0]).unwrap(), changes: vec![] };
        let mut p = PlantIntegrator::new(sched, 0.01).unwrap();
        let mut y = 0.0;
        for _ in 0..2000 {
            y = p.advance(0.25);
        }
        assert!((y - 1.0).abs() < 1e-6);

        let mut w = PlantIntegrator::new(warm_up_schedule(), 0.01).unwrap();
        let mut prev = 0.0;
        let mut max_jump: f64 = 0.0;
        for k in 0..20_000 {
            let y = w.advance((0.3 * k as f64 * 0.01).sin());
            if (4400..4600).contains(&k) {
                max_jump = max_jump.max((y - prev).abs());
            }
            prev = y;
        }
        assert!(max_jump < 0.05, "output jump {max_jump}");
        assert_eq!(w.state().len(), 0);
    }

    #[test]
    fn delay_free_second_order_fit_is_degenerate() {
        // Without delay the closed loop is exactly first order; a second-order fit is singular.
        let mut cfg = short("first-order-sudden", 5.0);
        cfg.neuromuscular = DelayedTf::new(cfg.neuromuscular.tf().clone(), 0.0).unwrap();
        assert!(matches!(cfg.build(), Err(Error::Singular(_))));
        cfg.neuromuscular = DelayedTf::new(cfg.neuromuscular.tf().clone(), 0.02).unwrap();
        let tr = run(&cfg.build().unwrap()).unwrap();
        assert!(tr.margin.iter().all(|&m| m <= tr.margin[0]));
    }
}
