//! LTI state-space and transfer-function primitives.
//!
//! Every system in the workbench is small and dense, so all matrices are
//! `nalgebra::DMatrix<f64>`. Only single-input single-output transfer
//! functions appear; [`StateSpace`] allows wider `B`/`C` for the internal
//! aggregate.

mod expm;
mod lyap;
mod tf;

pub use expm::expm;
pub use lyap::{is_hurwitz, lyap_solve};
pub use tf::{poly_eval, poly_from_roots, poly_mul, poly_roots, DelayedTf, RationalTf};

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type C64 = Complex<f64>;

/// Anything with a frequency response `H(jω)`.
pub trait FrequencyResponse {
    /// Response at angular frequency `omega` (rad/s). Callers validate `omega > 0`.
    fn response(&self, omega: f64) -> C64;
}

impl<F: Fn(f64) -> C64> FrequencyResponse for F {
    fn response(&self, omega: f64) -> C64 {
        self(omega)
    }
}

/// Evaluates `sys` on a frequency list, rejecting non-positive or non-finite entries.
pub fn freq_response<S: FrequencyResponse + ?Sized>(sys: &S, omega: &[f64]) -> Result<Vec<C64>> {
    omega
        .iter()
        .map(|&w| {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "frequency must be positive and finite, got {w}"
                )));
            }
            Ok(sys.response(w))
        })
        .collect()
}

/// `count` logarithmically spaced points on `[lo, hi]`, endpoints included.
pub fn logspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..count)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
                .collect()
        }
    }
}

/// Real LTI realization `ẋ = Ax + Bu`, `y = Cx + Du`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateSpaceRepr", into = "StateSpaceRepr")]
pub struct StateSpace {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    d: Matrix,
}

impl StateSpace {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, d: Matrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!("A is {}x{}, expected square", n, a.ncols())));
        }
        if b.nrows() != n {
            return Err(Error::Dimension(format!("B has {} rows, A has {n}", b.nrows())));
        }
        if c.ncols() != n {
            return Err(Error::Dimension(format!("C has {} columns, A has {n}", c.ncols())));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::Dimension(format!(
                "D is {}x{}, expected {}x{}",
                d.nrows(),
                d.ncols(),
                c.nrows(),
                b.ncols()
            )));
        }
        let finite = |m: &Matrix| m.iter().all(|v| v.is_finite());
        if !(finite(&a) && finite(&b) && finite(&c) && finite(&d)) {
            return Err(Error::InvalidArgument("state-space entries must be finite".into()));
        }
        Ok(Self { a, b, c, d })
    }

    /// Static gain with no states.
    pub fn gain(k: f64) -> Self {
        Self {
            a: Matrix::zeros(0, 0),
            b: Matrix::zeros(0, 1),
            c: Matrix::zeros(1, 0),
            d: Matrix::from_element(1, 1, k),
        }
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }
    pub fn b(&self) -> &Matrix {
        &self.b
    }
    pub fn c(&self) -> &Matrix {
        &self.c
    }
    pub fn d(&self) -> &Matrix {
        &self.d
    }
    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_siso(&self) -> bool {
        self.n_inputs() == 1 && self.n_outputs() == 1
    }

    /// `C(sI − A)⁻¹B + D` for the first input/output pair.
    pub fn eval(&self, s: C64) -> C64 {
        let n = self.n_states();
        let d = C64::new(self.d[(0, 0)], 0.0);
        if n == 0 {
            return d;
        }
        let m = DMatrix::<C64>::from_fn(n, n, |i, j| {
            let diag = if i == j { s } else { C64::new(0.0, 0.0) };
            diag - C64::new(self.a[(i, j)], 0.0)
        });
        let rhs = DVector::<C64>::from_fn(n, |i, _| C64::new(self.b[(i, 0)], 0.0));
        match m.lu().solve(&rhs) {
            Some(x) => {
                let cx: C64 = (0..n).map(|i| C64::new(self.c[(0, i)], 0.0) * x[i]).sum();
                cx + d
            }
            None => C64::new(f64::INFINITY, 0.0),
        }
    }

    /// Steady-state gain `D − CA⁻¹B` of the first channel.
    pub fn dc_gain(&self) -> Result<f64> {
        if self.n_states() == 0 {
            return Ok(self.d[(0, 0)]);
        }
        let x = self
            .a
            .clone()
            .lu()
            .solve(&self.b.column(0).into_owned())
            .ok_or_else(|| Error::Singular("A is singular, DC gain undefined".into()))?;
        Ok(self.d[(0, 0)] - (self.c.row(0) * x)[(0, 0)])
    }

    /// Continuous-time derivative `Ax + Bu` for a scalar input.
    pub fn derivative(&self, x: &Vector, u: f64) -> Vector {
        &self.a * x + self.b.column(0) * u
    }

    /// Output `Cx + Du` of the first channel for a scalar input.
    pub fn output(&self, x: &Vector, u: f64) -> f64 {
        if self.n_states() == 0 {
            return self.d[(0, 0)] * u;
        }
        (self.c.row(0) * x)[(0, 0)] + self.d[(0, 0)] * u
    }
}

impl FrequencyResponse for StateSpace {
    fn response(&self, omega: f64) -> C64 {
        self.eval(C64::new(0.0, omega))
    }
}

/// Row-major JSON shape for [`StateSpace`].
#[derive(Serialize, Deserialize)]
struct StateSpaceRepr {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    d: Vec<Vec<f64>>,
    n_states: usize,
}

pub(crate) fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub(crate) fn from_rows(rows: &[Vec<f64>], ncols: usize) -> Result<Matrix> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Row-major (de)serialization of a dense matrix, for `#[serde(with = ...)]`.
pub mod serde_rows {
    use super::{from_rows, to_rows, Matrix};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix, ser: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(de)?;
        let ncols = rows.first().map_or(0, Vec::len);
        from_rows(&rows, ncols).map_err(serde::de::Error::custom)
    }
}

impl From<StateSpace> for StateSpaceRepr {
    fn from(ss: StateSpace) -> Self {
        Self {
            n_states: ss.n_states(),
            a: to_rows(&ss.a),
            b: to_rows(&ss.b),
            c: to_rows(&ss.c),
            d: to_rows(&ss.d),
        }
    }
}

impl TryFrom<StateSpaceRepr> for StateSpace {
    type Error = Error;
    fn try_from(r: StateSpaceRepr) -> Result<Self> {
        let n = r.n_states;
        let m = r.d.first().map_or(0, Vec::len);
        let a = from_rows(&r.a, n)?;
        let b = from_rows(&r.b, m)?;
        let c = from_rows(&r.c, n)?;
        let d = from_rows(&r.d, m)?;
        if a.nrows() != n || b.nrows() != n {
            return Err(Error::Dimension("row count does not match n_states".into()));
        }
        StateSpace::new(a, b, c, d)
    }
}

/// Controllable canonical realization, states ordered highest-derivative-first.
///
/// For `den = s^n + a₁s^{n−1} + … + aₙ` (after normalisation) and
/// `num = d·den + c₁s^{n−1} + … + cₙ`: first row of `A` is `[−a₁ … −aₙ]`,
/// ones on the subdiagonal, `B = e₁`, `C = [c₁ … cₙ]`, `D = d`.
pub fn tf_to_ss(tf: &RationalTf) -> StateSpace {
    let den = tf.den();
    let lead = den[0];
    let n = den.len() - 1;
    let a_coef: Vec<f64> = den[1..].iter().map(|v| v / lead).collect();
    let mut num = vec![0.0; n + 1];
    let off = n + 1 - tf.num().len();
    for (i, v) in tf.num().iter().enumerate() {
        num[off + i] = v / lead;
    }
    let d = num[0];
    let c_coef: Vec<f64> = (1..=n).map(|i| num[i] - d * a_coef[i - 1]).collect();

    let a = Matrix::from_fn(n, n, |i, j| {
        if i == 0 {
            -a_coef[j]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let b = Matrix::from_fn(n, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
    let c = Matrix::from_fn(1, n, |_, j| c_coef[j]);
    StateSpace { a, b, c, d: Matrix::from_element(1, 1, d) }
}

/// Series interconnection with `human` driving `plant`; state order `[x_h; x_p]`.
pub fn series_aggregate(human: &StateSpace, plant: &StateSpace) -> Result<StateSpace> {
    if human.n_outputs() != plant.n_inputs() {
        return Err(Error::Dimension(format!(
            "human output dimension {} does not match plant input dimension {}",
            human.n_outputs(),
            plant.n_inputs()
        )));
    }
    let (nh, np) = (human.n_states(), plant.n_states());
    let n = nh + np;
    let mi = human.n_inputs();
    let po = plant.n_outputs();

    let mut a = Matrix::zeros(n, n);
    a.view_mut((0, 0), (nh, nh)).copy_from(&human.a);
    a.view_mut((nh, 0), (np, nh)).copy_from(&(&plant.b * &human.c));
    a.view_mut((nh, nh), (np, np)).copy_from(&plant.a);

    let mut b = Matrix::zeros(n, mi);
    b.view_mut((0, 0), (nh, mi)).copy_from(&human.b);
    b.view_mut((nh, 0), (np, mi)).copy_from(&(&plant.b * &human.d));

    let mut c = Matrix::zeros(po, n);
    c.view_mut((0, 0), (po, nh)).copy_from(&(&plant.d * &human.c));
    c.view_mut((0, nh), (po, np)).copy_from(&plant.c);

    let d = &plant.d * &human.d;
    StateSpace::new(a, b, c, d)
}

/// `[B, AB, …, A^{n−1}B]`.
pub fn controllability_matrix(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.nrows();
    let m = b.ncols();
    let mut out = Matrix::zeros(n, n * m);
    let mut blk = b.clone();
    for k in 0..n {
        out.view_mut((0, k * m), (n, m)).copy_from(&blk);
        blk = a * blk;
    }
    out
}

/// Rank test on the controllability matrix with threshold `n·σ_max·1e−12`.
pub fn controllability_ok(ss: &StateSpace) -> bool {
    let n = ss.n_states();
    if n == 0 {
        return true;
    }
    let sv = controllability_matrix(&ss.a, &ss.b).singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return false;
    }
    let tol = n as f64 * smax * 1e-12;
    sv.iter().filter(|&&s| s > tol).count() == n
}
