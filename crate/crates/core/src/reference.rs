//! Crossover reference model construction.
//!
//! Pipeline: crossover frequency from the plant class and the highest
//! reference frequency, exact delayed closed loop
//! `G(jω) = ω_c e^{−jωτ} / (jω + ω_c e^{−jωτ})`, a rational fit of
//! `G(jω)·e^{jωτ}` and its controllable canonical realization.
//! [`align_to_aggregate`] re-expresses the fitted model in the state
//! coordinates of a given neuromuscular-plant aggregate so that the
//! matching conditions of the adaptive pilot are solvable.

use nalgebra::{Complex, DVector};
use serde::{Deserialize, Serialize};

use crate::statespace::{
    controllability_matrix, controllability_ok, is_hurwitz, logspace, poly_from_roots, poly_roots, tf_to_ss,
    DelayedTf, FrequencyResponse, Matrix, RationalTf, StateSpace, C64,
};
use crate::{Error, Result};

/// Upper end of the frequency range on which the crossover table is trusted.
pub const TRUSTED_OMEGA_MAX: f64 = 2.5;

/// Row of the crossover-frequency table selected by the plant's relative order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantClass {
    /// `K`
    Gain,
    /// `K/s`
    FirstOrder,
    /// `K/s²`
    SecondOrder,
}

impl PlantClass {
    /// Class of the table row whose relative order matches `tf`.
    pub fn classify(tf: &RationalTf) -> Result<Self> {
        match tf.relative_degree() {
            0 => Ok(Self::Gain),
            1 => Ok(Self::FirstOrder),
            2 => Ok(Self::SecondOrder),
            r => Err(Error::InvalidArgument(format!(
                "no crossover table row for relative order {r}"
            ))),
        }
    }

    /// Coefficients of the table polynomial in descending powers of `ω_i`.
    pub fn polynomial(self) -> &'static [f64] {
        match self {
            Self::Gain => &[0.067, 0.099, 4.8],
            Self::FirstOrder => &[0.14, 4.3],
            Self::SecondOrder => &[-0.0031, -0.072, 0.29, -0.13, 3.0],
        }
    }
}

impl std::str::FromStr for PlantClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "gain" | "zero-order" | "0" => Ok(Self::Gain),
            "first-order" | "1" => Ok(Self::FirstOrder),
            "second-order" | "2" => Ok(Self::SecondOrder),
            other => Err(Error::Parse(format!("unknown plant class '{other}'"))),
        }
    }
}

/// Open-loop crossover frequency for a plant class at the highest input frequency `omega_i`.
pub fn crossover_frequency(class: PlantClass, omega_i: f64) -> f64 {
    if !(0.0..=TRUSTED_OMEGA_MAX).contains(&omega_i) {
        tracing::warn!(omega_i, "input frequency outside the trusted crossover-table range [0, 2.5] rad/s");
    }
    class.polynomial().iter().fold(0.0, |acc, c| acc * omega_i + c)
}

/// Exact delayed unity-feedback closed loop of the crossover model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopExact {
    pub omega_c: f64,
    pub tau: f64,
}

impl ClosedLoopExact {
    pub fn new(omega_c: f64, tau: f64) -> Result<Self> {
        if !(omega_c.is_finite() && omega_c > 0.0) {
            return Err(Error::InvalidArgument(format!("omega_c must be positive, got {omega_c}")));
        }
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::InvalidArgument(format!("tau must be >= 0, got {tau}")));
        }
        Ok(Self { omega_c, tau })
    }

    /// Response with the output delay removed, `G(jω)·e^{jωτ}`.
    pub fn undelayed(&self, omega: f64) -> C64 {
        let loop_delay = C64::from_polar(1.0, -omega * self.tau);
        C64::new(self.omega_c, 0.0) / (C64::new(0.0, omega) + self.omega_c * loop_delay)
    }
}

impl FrequencyResponse for ClosedLoopExact {
    fn response(&self, omega: f64) -> C64 {
        let loop_delay = C64::from_polar(1.0, -omega * self.tau);
        self.omega_c * loop_delay / (C64::new(0.0, omega) + self.omega_c * loop_delay)
    }
}

/// Settings for [`fit_rational_approx`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Weight `1/(1 + ω/corner)`; `None` weights all frequencies equally.
    pub corner: Option<f64>,
    pub max_iterations: usize,
    pub max_reflections: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { corner: None, max_iterations: 20, max_reflections: 5 }
    }
}

/// Default fitting grid: 400 log-spaced points on `[0.01, 100]` rad/s.
pub fn default_grid() -> Vec<f64> {
    logspace(0.01, 100.0, 400)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub approx: DelayedTf,
    /// Weighted RMS of the relative complex error over the grid.
    pub residual: f64,
    pub iterations: usize,
    pub reflections: usize,
}

/// Fits `b(s)/a(s)` (degrees `m`, `n`, monic `a`) to `exact(jω)·e^{jωτ}` on `grid`
/// by Sanathanan–Koerner iterations; the result carries delay `τ`.
///
/// Right-half-plane poles are reflected into the left half plane and the
/// numerator refit against the reflected denominator.
pub fn fit_rational_approx<F: FrequencyResponse + ?Sized>(
    exact: &F,
    n: usize,
    m: usize,
    tau: f64,
    grid: &[f64],
    opts: &FitOptions,
) -> Result<FitResult> {
    if n == 0 {
        return Err(Error::InvalidArgument("fit order n must be at least 1".into()));
    }
    if m > n {
        return Err(Error::InvalidArgument(format!("numerator order {m} exceeds denominator order {n}")));
    }
    if grid.len() < n + m + 1 || grid.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::InvalidArgument("grid needs enough positive frequencies".into()));
    }
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be >= 0, got {tau}")));
    }
    let s: Vec<C64> = grid.iter().map(|&w| C64::new(0.0, w)).collect();
    let h: Vec<C64> = grid
        .iter()
        .map(|&w| exact.response(w) * C64::from_polar(1.0, w * tau))
        .collect();
    let base_w: Vec<f64> = grid
        .iter()
        .map(|&w| opts.corner.map_or(1.0, |c| 1.0 / (1.0 + w / c)))
        .collect();

    let mut den_prev = vec![1.0; grid.len()];
    let mut num = vec![0.0; m + 1];
    let mut den = vec![1.0; n + 1];
    let mut iterations = 0;
    for _ in 0..opts.max_iterations.max(1) {
        iterations += 1;
        let weights: Vec<f64> = base_w.iter().zip(&den_prev).map(|(b, d)| b / d).collect();
        let x = sk_step(&s, &h, &weights, n, m, None)?;
        let new_num = x[..=m].to_vec();
        let mut new_den = vec![1.0];
        new_den.extend_from_slice(&x[m + 1..]);
        let change = coef_change(&new_den, &den) + coef_change(&new_num, &num);
        num = new_num;
        den = new_den;
        den_prev = s.iter().map(|&z| crate::statespace::poly_eval(&den, z).norm().max(1e-300)).collect();
        if change < 1e-12 {
            break;
        }
    }

    let mut reflections = 0;
    while poly_roots(&den).iter().any(|p| p.re >= 0.0) {
        if reflections == opts.max_reflections {
            return Err(Error::InvalidArgument(format!(
                "fitted denominator still unstable after {reflections} reflections"
            )));
        }
        reflections += 1;
        let reflected: Vec<C64> = poly_roots(&den)
            .into_iter()
            .map(|p| if p.re >= 0.0 { C64::new(-p.re.max(1e-9), p.im) } else { p })
            .collect();
        den = poly_from_roots(&reflected);
        let dmag: Vec<f64> = s.iter().map(|&z| crate::statespace::poly_eval(&den, z).norm()).collect();
        let weights: Vec<f64> = base_w.iter().zip(&dmag).map(|(b, d)| b / d).collect();
        num = sk_step(&s, &h, &weights, n, m, Some(&den))?;
    }

    let tf = RationalTf::new(num, den)?;
    let residual = {
        let (mut acc, mut wsum) = (0.0, 0.0);
        for ((&w, hk), bw) in grid.iter().zip(&h).zip(&base_w) {
            let rel = (tf.response(w) - hk).norm() / hk.norm().max(1e-300);
            acc += bw * rel * rel;
            wsum += bw;
        }
        (acc / wsum).sqrt()
    };
    Ok(FitResult { approx: DelayedTf::new(tf, tau)?, residual, iterations, reflections })
}

fn coef_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// One weighted linearized least-squares solve.
///
/// Unknowns `[b_m … b_0, a_{n−1} … a_0]`, or only the numerator when `fixed_den` is given.
fn sk_step(s: &[C64], h: &[C64], w: &[f64], n: usize, m: usize, fixed_den: Option<&[f64]>) -> Result<Vec<f64>> {
    let n_unknown = if fixed_den.is_some() { m + 1 } else { m + 1 + n };
    let rows = 2 * s.len();
    let mut mat = Matrix::zeros(rows, n_unknown);
    let mut rhs = DVector::zeros(rows);
    for (k, (&z, &hk)) in s.iter().zip(h).enumerate() {
        let mut put = |col: usize, v: C64| {
            mat[(2 * k, col)] = w[k] * v.re;
            mat[(2 * k + 1, col)] = w[k] * v.im;
        };
        for j in 0..=m {
            put(j, z.powi((m - j) as i32));
        }
        let target = match fixed_den {
            Some(den) => hk * crate::statespace::poly_eval(den, z),
            None => {
                for i in 0..n {
                    put(m + 1 + i, -hk * z.powi((n - 1 - i) as i32));
                }
                hk * z.powi(n as i32)
            }
        };
        rhs[2 * k] = w[k] * target.re;
        rhs[2 * k + 1] = w[k] * target.im;
    }
    // Column equilibration keeps powers of large ω from swamping the solve.
    let scales: Vec<f64> = (0..n_unknown).map(|j| mat.column(j).norm().max(1e-300)).collect();
    for (j, sc) in scales.iter().enumerate() {
        mat.column_mut(j).scale_mut(1.0 / sc);
    }
    let svd = mat.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-13 * smax) {
        return Err(Error::Singular(format!(
            "rational-fit normal equations are singular (condition {:.3e})",
            smax / smin
        )));
    }
    let x = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::Singular(format!("rational-fit solve failed: {e}")))?;
    Ok((0..n_unknown).map(|j| x[j] / scales[j]).collect())
}

/// Fitted crossover reference model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceModel {
    /// Controllable canonical realization of the fitted rational part.
    pub ss: StateSpace,
    pub delay: f64,
    pub omega_c: f64,
    pub exact: ClosedLoopExact,
    pub approx: DelayedTf,
    pub fit_residual: f64,
}

impl ReferenceModel {
    pub fn order(&self) -> usize {
        self.ss.n_states()
    }
}

/// Crossover frequency → exact closed loop → rational fit (numerator order `n − 1`) → realization.
pub fn build_reference(class: PlantClass, omega_i: f64, tau: f64, n: usize) -> Result<ReferenceModel> {
    if n == 0 {
        return Err(Error::InvalidArgument("reference order must be at least 1".into()));
    }
    let omega_c = crossover_frequency(class, omega_i);
    let exact = ClosedLoopExact::new(omega_c, tau)?;
    let opts = FitOptions { corner: Some(omega_c), ..FitOptions::default() };
    let fit = fit_rational_approx(&exact, n, n - 1, tau, &default_grid(), &opts)?;
    let ss = tf_to_ss(fit.approx.tf());
    if !is_hurwitz(ss.a()) {
        return Err(Error::NotHurwitz(ss.a().complex_eigenvalues().iter().copied().collect()));
    }
    Ok(ReferenceModel { ss, delay: tau, omega_c, exact, approx: fit.approx, fit_residual: fit.residual })
}

/// Reference model expressed in the coordinates of a specific aggregate `(A, B, C, D)`.
///
/// `A_m = A + B·K` carries the fitted characteristic polynomial, `B_m = k·B`,
/// and the reference output is `y_m = (C + D·K)x_m + D·k·r(t−τ)`. The gain `k`
/// makes the steady-state output gain equal the fitted DC gain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignedReference {
    #[serde(with = "crate::statespace::serde_rows")]
    pub a_m: Matrix,
    #[serde(with = "crate::statespace::serde_rows")]
    pub b_m: Matrix,
    #[serde(with = "crate::statespace::serde_rows")]
    pub c_m: Matrix,
    pub d_m: f64,
    /// State feedback `K` (1×n) with `A_m = A + B·K`.
    #[serde(with = "crate::statespace::serde_rows")]
    pub feedback: Matrix,
    /// Input gain `k` with `B_m = k·B`.
    pub input_gain: f64,
    /// Monic characteristic polynomial of `A_m`.
    pub char_poly: Vec<f64>,
}

impl AlignedReference {
    pub fn order(&self) -> usize {
        self.a_m.nrows()
    }

    pub fn output(&self, x_m: &DVector<f64>, r_delayed: f64) -> f64 {
        (&self.c_m * x_m)[(0, 0)] + self.d_m * r_delayed
    }

    pub fn as_state_space(&self) -> Result<StateSpace> {
        StateSpace::new(self.a_m.clone(), self.b_m.clone(), self.c_m.clone(), Matrix::from_element(1, 1, self.d_m))
    }
}

/// Places the reference model's poles on `aggregate` by Ackermann's formula.
pub fn align_to_aggregate(model: &ReferenceModel, aggregate: &StateSpace) -> Result<AlignedReference> {
    let n = aggregate.n_states();
    if n != model.order() {
        return Err(Error::Dimension(format!(
            "reference order {} differs from aggregate order {n}",
            model.order()
        )));
    }
    if aggregate.n_inputs() != 1 || aggregate.n_outputs() != 1 {
        return Err(Error::Dimension("only single-input single-output aggregates are supported".into()));
    }
    if !controllability_ok(aggregate) {
        return Err(Error::Singular("aggregate pair (A, B) is not controllable".into()));
    }
    let (a, b) = (aggregate.a(), aggregate.b());
    let char_poly = model.approx.tf().normalized().den().to_vec();

    let mut phi = Matrix::zeros(n, n);
    for &c in &char_poly {
        phi = &phi * a + Matrix::identity(n, n) * c;
    }
    let ctrb_inv = controllability_matrix(a, b)
        .try_inverse()
        .ok_or_else(|| Error::Singular("controllability matrix is not invertible".into()))?;
    let mut e_n = Matrix::zeros(1, n);
    e_n[(0, n - 1)] = 1.0;
    let k_ack = e_n * ctrb_inv * phi;
    let feedback = -k_ack;
    let a_m = a + b * &feedback;

    let c_m = aggregate.c() + aggregate.d() * &feedback;
    let d = aggregate.d()[(0, 0)];
    let x = (-&a_m)
        .lu()
        .solve(&b.column(0).into_owned())
        .ok_or_else(|| Error::Singular("reference state matrix is singular".into()))?;
    let g = (&c_m * x)[(0, 0)] + d;
    let target = model.approx.tf().dc_gain();
    if g.abs() < 1e-12 {
        return Err(Error::Singular("aligned reference has zero steady-state gain".into()));
    }
    let input_gain = target / g;
    Ok(AlignedReference {
        b_m: b * input_gain,
        a_m,
        c_m,
        d_m: d * input_gain,
        feedback,
        input_gain,
        char_poly,
    })
}

/// `exact` and `approx` responses on `grid`, for Bode plots.
pub fn bode_pairs(model: &ReferenceModel, grid: &[f64]) -> Vec<(f64, Complex<f64>, Complex<f64>)> {
    grid.iter()
        .map(|&w| (w, model.exact.response(w), model.approx.response(w)))
        .collect()
}
