//! Adaptive human-pilot controller.
//!
//! Control law
//! `u(t) = θ_x x(t) + ∫_{−τ}^{0} λ(η) u(t+η) dη + K_r r(t)` with
//! `θ_x = K_r θ₁`, `λ = K_r λ₁`, and adaptive laws driven by `s = B_mᵀ P e`:
//!
//! ```text
//! θ̇₁    = −γ_θ · s · x(t−τ)ᵀ
//! λ̇₁(η) = −γ_λ · s · u(t+η−τ)
//! Φ̇     = −γ_Φ · s · u(t−τ)
//! K̇_r   = Proj(−γ_Φ · K_r² · s · u(t−τ))      K_r ∈ [k_min, k_max]
//! ```
//!
//! The η integral uses the composite trapezoid rule on a uniform grid.

mod history;

pub use history::History;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::statespace::{expm, lyap_solve, Matrix, Vector};
use crate::{Error, Result};

/// Per-law adaptation rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptationGains {
    pub theta: f64,
    pub phi: f64,
    pub lambda: f64,
}

impl Default for AdaptationGains {
    fn default() -> Self {
        Self { theta: 1.0, phi: 1.0, lambda: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PilotConfig {
    pub n_eta: usize,
    /// Row-major `Q`; identity when absent.
    pub q_matrix: Option<Vec<Vec<f64>>>,
    pub gains: AdaptationGains,
    pub kmin: f64,
    pub kmax: f64,
    pub initial_kr: f64,
    pub initial_theta1: Option<Vec<f64>>,
    pub initial_lambda1: Option<Vec<f64>>,
}

impl Default for PilotConfig {
    fn default() -> Self {
        Self {
            n_eta: 32,
            q_matrix: None,
            gains: AdaptationGains::default(),
            kmin: 0.05,
            kmax: 50.0,
            initial_kr: 1.0,
            initial_theta1: None,
            initial_lambda1: None,
        }
    }
}

impl PilotConfig {
    pub fn validate(&self) -> Result<()> {
        let g = &self.gains;
        if !(g.theta > 0.0 && g.phi > 0.0 && g.lambda > 0.0) {
            return Err(Error::InvalidArgument("adaptation gains must be positive".into()));
        }
        if !(self.kmin > 0.0 && self.kmax > self.kmin && self.kmax.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "projection bounds need 0 < kmin < kmax, got [{}, {}]",
                self.kmin, self.kmax
            )));
        }
        if !(self.kmin..=self.kmax).contains(&self.initial_kr) {
            return Err(Error::InvalidArgument(format!("initial K_r {} outside projection bounds", self.initial_kr)));
        }
        if self.n_eta < 2 {
            return Err(Error::InvalidArgument("n_eta must be at least 2".into()));
        }
        Ok(())
    }

    pub fn q(&self, n: usize) -> Result<Matrix> {
        match &self.q_matrix {
            None => Ok(Matrix::identity(n, n)),
            Some(rows) => {
                let q = crate::statespace::from_rows(rows, n)?;
                if q.nrows() != n {
                    return Err(Error::Dimension(format!("Q has {} rows, expected {n}", q.nrows())));
                }
                Ok(q)
            }
        }
    }
}

/// Uniform η grid on `[−τ, 0]` and its trapezoid weights.
pub fn eta_grid(tau: f64, n_eta: usize) -> (Vec<f64>, Vec<f64>) {
    let h = tau / (n_eta - 1) as f64;
    let eta = (0..n_eta).map(|j| -tau + j as f64 * h).collect();
    let w = (0..n_eta)
        .map(|j| if j == 0 || j == n_eta - 1 { 0.5 * h } else { h })
        .collect();
    (eta, w)
}

/// Ideal parameters from the matching conditions `A_hp + B_hp K_r* K_x* = A_m`, `B_hp K_r* = B_m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdealGains {
    pub kr: f64,
    pub kx: Vec<f64>,
    pub theta1: Vec<f64>,
    pub lambda1: Vec<f64>,
    pub theta_x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub eta: Vec<f64>,
    pub state_residual: f64,
    pub input_residual: f64,
}

/// Least-squares solution of the matching conditions, then
/// `θ₁* = K_x* e^{A_hp τ}` and `λ₁*(η) = K_x* e^{−A_hp η} B_hp` on the η grid.
pub fn ideal_gains(a_hp: &Matrix, b_hp: &Matrix, a_m: &Matrix, b_m: &Matrix, tau: f64, n_eta: usize) -> Result<IdealGains> {
    let n = a_hp.nrows();
    if a_hp.ncols() != n || a_m.shape() != (n, n) || b_hp.shape() != (n, 1) || b_m.shape() != (n, 1) {
        return Err(Error::Dimension("matching conditions need n×n A matrices and n×1 B matrices".into()));
    }
    if n_eta < 2 || !(tau >= 0.0) {
        return Err(Error::InvalidArgument("need n_eta >= 2 and tau >= 0".into()));
    }
    let btb = (b_hp.transpose() * b_hp)[(0, 0)];
    if btb == 0.0 {
        return Err(Error::Unmatched { state: f64::INFINITY, input: b_m.norm() });
    }
    let kr = (b_hp.transpose() * b_m)[(0, 0)] / btb;
    let input = (b_hp * kr - b_m).norm();
    if kr == 0.0 {
        return Err(Error::Unmatched { state: f64::INFINITY, input });
    }
    let kx = (b_hp.transpose() * (a_m - a_hp)) / (btb * kr);
    let state = (a_hp + b_hp * kr * &kx - a_m).norm();
    let tol = 1e-8 * a_m.norm().max(1.0);
    if state > tol || input > 1e-8 * b_m.norm().max(1.0) {
        return Err(Error::Unmatched { state, input });
    }
    let theta1 = &kx * expm(a_hp, tau)?;
    let (eta, _) = eta_grid(tau, n_eta);
    let lambda1: Vec<f64> = eta
        .iter()
        .map(|&e| Ok((&kx * expm(a_hp, -e)? * b_hp)[(0, 0)]))
        .collect::<Result<_>>()?;
    Ok(IdealGains {
        kr,
        kx: kx.iter().copied().collect(),
        theta_x: theta1.iter().map(|v| v * kr).collect(),
        theta1: theta1.iter().copied().collect(),
        lambda: lambda1.iter().map(|v| v * kr).collect(),
        lambda1,
        eta,
        state_residual: state,
        input_residual: input,
    })
}

/// Mutable state of one pilot instance: adaptive parameters plus signal histories.
#[derive(Clone, Debug)]
pub struct AdaptiveState {
    gains: AdaptationGains,
    kmin: f64,
    kmax: f64,
    tau: f64,
    theta1: Vector,
    lambda1: Vec<f64>,
    phi: f64,
    kr: f64,
    theta_x: Vector,
    lambda: Vec<f64>,
    eta: Vec<f64>,
    weights: Vec<f64>,
    p: Matrix,
    pb: Vector,
    q_ratio: f64,
    u_hist: History,
    x_hist: History,
    rate_hist: History,
    scratch: Vec<f64>,
}

impl AdaptiveState {
    /// Solves `A_mᵀP + PA_m = −Q` and allocates histories for delay `tau` at step `dt`.
    pub fn new(config: &PilotConfig, a_m: &Matrix, b_m: &Matrix, tau: f64, dt: f64) -> Result<Self> {
        config.validate()?;
        let n = a_m.nrows();
        let q = config.q(n)?;
        let p = lyap_solve(a_m, &q)?;
        Self::with_lyapunov(config, p, &q, b_m, tau, dt)
    }

    /// Builds the state around a precomputed `P`.
    pub fn with_lyapunov(config: &PilotConfig, p: Matrix, q: &Matrix, b_m: &Matrix, tau: f64, dt: f64) -> Result<Self> {
        config.validate()?;
        let n = p.nrows();
        if b_m.shape() != (n, 1) || q.shape() != (n, n) {
            return Err(Error::Dimension(format!("B_m must be {n}x1 and Q {n}x{n}")));
        }
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::InvalidArgument(format!("tau must be >= 0, got {tau}")));
        }
        let theta1 = match &config.initial_theta1 {
            Some(v) if v.len() == n => Vector::from_column_slice(v),
            Some(v) => return Err(Error::Dimension(format!("initial theta1 has {} entries, expected {n}", v.len()))),
            None => Vector::zeros(n),
        };
        let lambda1 = match &config.initial_lambda1 {
            Some(v) if v.len() == config.n_eta => v.clone(),
            Some(v) if v.len() == 1 => vec![v[0]; config.n_eta],
            Some(v) => {
                return Err(Error::Dimension(format!(
                    "initial lambda1 has {} entries, expected {} or 1",
                    v.len(),
                    config.n_eta
                )))
            }
            None => vec![0.0; config.n_eta],
        };
        let pb = &p * b_m.column(0);
        let lam_min = q.clone().symmetric_eigen().eigenvalues.min();
        let q_ratio = lam_min / pb.norm_squared();
        let (eta, weights) = eta_grid(tau, config.n_eta);
        let kr = config.initial_kr;
        let mut st = Self {
            gains: config.gains,
            kmin: config.kmin,
            kmax: config.kmax,
            tau,
            theta_x: &theta1 * kr,
            lambda: lambda1.iter().map(|v| v * kr).collect(),
            theta1,
            lambda1,
            phi: 0.0,
            kr,
            eta,
            weights,
            p,
            pb,
            q_ratio,
            u_hist: History::new(1, dt, 2.0 * tau)?,
            x_hist: History::new(n, dt, tau)?,
            rate_hist: History::new(1, dt, tau)?,
            scratch: vec![0.0; n],
        };
        st.refresh_products();
        Ok(st)
    }

    /// Zero-fills every history; the first recorded sample is stamped `t0`.
    pub fn prime(&mut self, t0: f64) {
        self.u_hist.prime(t0);
        self.x_hist.prime(t0);
        self.rate_hist.prime(t0);
    }

    pub fn order(&self) -> usize {
        self.theta1.len()
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn theta1(&self) -> &Vector {
        &self.theta1
    }
    pub fn lambda1(&self) -> &[f64] {
        &self.lambda1
    }
    pub fn theta_x(&self) -> &Vector {
        &self.theta_x
    }
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }
    pub fn phi(&self) -> f64 {
        self.phi
    }
    pub fn kr(&self) -> f64 {
        self.kr
    }
    pub fn kmin(&self) -> f64 {
        self.kmin
    }
    pub fn kmax(&self) -> f64 {
        self.kmax
    }
    pub fn p(&self) -> &Matrix {
        &self.p
    }
    pub fn eta(&self) -> &[f64] {
        &self.eta
    }
    /// `q = λ_min(Q) / ‖B_mᵀP‖²`.
    pub fn q_ratio(&self) -> f64 {
        self.q_ratio
    }
    pub fn u_history(&self) -> &History {
        &self.u_hist
    }
    pub fn x_history(&self) -> &History {
        &self.x_hist
    }

    /// Overwrites θ₁, λ₁ and K_r; Φ is reset to zero.
    pub fn set_parameters(&mut self, theta1: &[f64], lambda1: &[f64], kr: f64) -> Result<()> {
        if theta1.len() != self.order() || lambda1.len() != self.eta.len() {
            return Err(Error::Dimension("parameter sizes do not match the adaptive state".into()));
        }
        if !(self.kmin..=self.kmax).contains(&kr) {
            return Err(Error::InvalidArgument(format!("K_r {kr} outside projection bounds")));
        }
        self.theta1 = Vector::from_column_slice(theta1);
        self.lambda1 = lambda1.to_vec();
        self.kr = kr;
        self.phi = 0.0;
        self.refresh_products();
        Ok(())
    }

    fn refresh_products(&mut self) {
        self.theta_x = &self.theta1 * self.kr;
        for (l, l1) in self.lambda.iter_mut().zip(&self.lambda1) {
            *l = self.kr * l1;
        }
    }

    /// Control at the next history time `t`; `u(t+η)` for `η < 0` comes from
    /// stored samples and the `η = 0` endpoint from the latest stored sample.
    pub fn control_output(&self, x_hp: &Vector, r: f64) -> Result<f64> {
        if !self.u_hist.is_primed() {
            return Err(Error::UnprimedHistory);
        }
        if x_hp.len() != self.order() {
            return Err(Error::Dimension(format!("state has {} entries, expected {}", x_hp.len(), self.order())));
        }
        let t = self.u_hist.next_time();
        let mut integral = 0.0;
        for ((&eta, &w), &lam) in self.eta.iter().zip(&self.weights).zip(&self.lambda) {
            if lam != 0.0 {
                integral += w * lam * self.u_hist.scalar_at(t + eta)?;
            }
        }
        Ok(self.theta_x.dot(x_hp) + integral + self.kr * r)
    }

    /// Stores the state and the applied control for the current step.
    pub fn record(&mut self, x_hp: &Vector, u: f64) -> Result<()> {
        self.x_hist.push(x_hp.as_slice())?;
        self.u_hist.push(&[u])
    }

    /// Explicit-Euler step of the adaptive laws at the latest recorded time.
    pub fn adapt_step(&mut self, e: &Vector, dt: f64) -> Result<()> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("adaptation step must be positive, got {dt}")));
        }
        if e.len() != self.order() {
            return Err(Error::Dimension(format!("error has {} entries, expected {}", e.len(), self.order())));
        }
        if !self.u_hist.is_primed() {
            return Err(Error::UnprimedHistory);
        }
        let t = self.u_hist.latest_time();
        let s = self.pb.dot(e);
        let g = self.gains;

        let mut xd = std::mem::take(&mut self.scratch);
        self.x_hist.value_at(t - self.tau, &mut xd)?;
        let ud = self.u_hist.scalar_at(t - self.tau)?;

        let mut energy = 0.0;
        for (i, th) in self.theta1.iter_mut().enumerate() {
            let rate = -g.theta * s * xd[i];
            *th += dt * rate;
            energy += rate * rate / g.theta;
        }
        self.scratch = xd;
        for j in 0..self.eta.len() {
            let rate = -g.lambda * s * self.u_hist.scalar_at(t + self.eta[j] - self.tau)?;
            self.lambda1[j] += dt * rate;
            energy += self.weights[j] * rate * rate / g.lambda;
        }
        let phi_rate = -g.phi * s * ud;
        self.phi += dt * phi_rate;
        energy += phi_rate * phi_rate / g.phi;

        let kr_rate = self.kr * self.kr * phi_rate;
        self.kr = (self.kr + dt * kr_rate).clamp(self.kmin, self.kmax);
        self.refresh_products();
        self.rate_hist.push(&[energy])
    }

    /// `q − 2τ(γ_θ‖x(t−τ)‖² + γ_Φ u(t−τ)² + γ_λ ∫ u(t+η−τ)² dη)` at the latest recorded time.
    pub fn stability_margin(&self) -> f64 {
        if self.tau == 0.0 || !self.u_hist.is_primed() {
            return self.q_ratio;
        }
        let t = self.u_hist.latest_time();
        let mut xd = vec![0.0; self.order()];
        let (x2, ud) = match (self.x_hist.value_at(t - self.tau, &mut xd), self.u_hist.scalar_at(t - self.tau)) {
            (Ok(()), Ok(u)) => (xd.iter().map(|v| v * v).sum::<f64>(), u),
            _ => return self.q_ratio,
        };
        let int_u2: f64 = self
            .eta
            .iter()
            .zip(&self.weights)
            .map(|(&eta, &w)| {
                let u = self.u_hist.scalar_at(t + eta - self.tau).unwrap_or(0.0);
                w * u * u
            })
            .sum();
        let g = self.gains;
        self.q_ratio - 2.0 * self.tau * (g.theta * x2 + g.phi * ud * ud + g.lambda * int_u2)
    }

    /// Lyapunov–Krasovskii functional against known ideal parameters.
    ///
    /// `V = eᵀPe + Φ̃²/γ_Φ + ‖θ̃₁‖²/γ_θ + ∫λ̃₁²/γ_λ + ∫_{t−τ}^{t} (ξ−t+τ) ρ(ξ) dξ`
    /// where `Φ̃ = 1/K_r* − 1/K_r` and `ρ` is the gain-weighted parameter-rate energy.
    pub fn lyapunov_functional(&self, e: &Vector, ideal: &IdealGains) -> Result<f64> {
        if ideal.theta1.len() != self.order() || ideal.lambda1.len() != self.eta.len() {
            return Err(Error::Dimension(
                "ideal parameters do not match the adaptive state's order or η grid".into(),
            ));
        }
        if e.len() != self.order() {
            return Err(Error::Dimension(format!("error has {} entries, expected {}", e.len(), self.order())));
        }
        let g = self.gains;
        let quad = (e.transpose() * &self.p * e)[(0, 0)];
        let phi = 1.0 / ideal.kr - 1.0 / self.kr;
        let th: f64 = self.theta1.iter().zip(&ideal.theta1).map(|(a, b)| (a - b).powi(2)).sum();
        let lam: f64 = self
            .lambda1
            .iter()
            .zip(&ideal.lambda1)
            .zip(&self.weights)
            .map(|((a, b), w)| w * (a - b).powi(2))
            .sum();
        let mut memory = 0.0;
        if self.tau > 0.0 && self.rate_hist.is_primed() {
            let dt = self.rate_hist.dt();
            let steps = (self.tau / dt).round() as usize;
            for i in 0..=steps {
                let weight = (self.tau - i as f64 * dt).max(0.0) * if i == 0 || i == steps { 0.5 * dt } else { dt };
                memory += weight * self.rate_hist.back(i)[0];
            }
        }
        Ok(quad + phi * phi / g.phi + th / g.theta + lam / g.lambda + memory)
    }
}

/// `e^{A_hp τ}` applied to a state: the delay-free prediction used by the ideal law.
pub fn predict(a_hp: &DMatrix<f64>, x: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
    Ok(expm(a_hp, tau)? * x)
}
