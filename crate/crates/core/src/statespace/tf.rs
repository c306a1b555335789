use serde::{Deserialize, Serialize};

use super::{FrequencyResponse, Matrix, C64};
use crate::{Error, Result};

/// Rational transfer function with coefficients in descending powers of `s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TfRepr", into = "TfRepr")]
pub struct RationalTf {
    num: Vec<f64>,
    den: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TfRepr {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl From<RationalTf> for TfRepr {
    fn from(t: RationalTf) -> Self {
        Self { num: t.num, den: t.den }
    }
}

impl TryFrom<TfRepr> for RationalTf {
    type Error = Error;
    fn try_from(r: TfRepr) -> Result<Self> {
        RationalTf::new(r.num, r.den)
    }
}

fn trim_leading(mut v: Vec<f64>) -> Vec<f64> {
    let first = v.iter().position(|&c| c != 0.0).unwrap_or(v.len().saturating_sub(1));
    v.drain(..first);
    v
}

impl RationalTf {
    /// Leading zeros are stripped; the denominator must keep a nonzero leading term.
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        if num.is_empty() || den.is_empty() {
            return Err(Error::InvalidArgument("coefficient lists must be non-empty".into()));
        }
        if num.iter().chain(den.iter()).any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("coefficients must be finite".into()));
        }
        let num = trim_leading(num);
        let den = trim_leading(den);
        if den[0] == 0.0 {
            return Err(Error::InvalidArgument("denominator is identically zero".into()));
        }
        if num.len() > den.len() {
            return Err(Error::Improper { num: num.len() - 1, den: den.len() - 1 });
        }
        Ok(Self { num, den })
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }
    pub fn den(&self) -> &[f64] {
        &self.den
    }
    pub fn num_degree(&self) -> usize {
        self.num.len() - 1
    }
    pub fn den_degree(&self) -> usize {
        self.den.len() - 1
    }
    pub fn relative_degree(&self) -> usize {
        self.den_degree() - self.num_degree()
    }

    /// Same system with a monic denominator.
    pub fn normalized(&self) -> Self {
        let lead = self.den[0];
        Self {
            num: self.num.iter().map(|c| c / lead).collect(),
            den: self.den.iter().map(|c| c / lead).collect(),
        }
    }

    /// Numerator left-padded with zeros to the denominator length.
    pub fn padded_num(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.den.len() - self.num.len()];
        v.extend_from_slice(&self.num);
        v
    }

    pub fn eval(&self, s: C64) -> C64 {
        poly_eval(&self.num, s) / poly_eval(&self.den, s)
    }

    /// Value at `s = 0`; infinite for a pole at the origin.
    pub fn dc_gain(&self) -> f64 {
        let n = *self.num.last().unwrap();
        let d = *self.den.last().unwrap();
        n / d
    }

    pub fn poles(&self) -> Vec<C64> {
        poly_roots(&self.den)
    }

    pub fn zeros(&self) -> Vec<C64> {
        poly_roots(&self.num)
    }

    pub fn is_hurwitz(&self) -> bool {
        self.poles().iter().all(|p| p.re < 0.0)
    }
}

impl FrequencyResponse for RationalTf {
    fn response(&self, omega: f64) -> C64 {
        self.eval(C64::new(0.0, omega))
    }
}

/// Rational transfer function followed by a pure output delay `e^{−τs}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DelayedRepr", into = "DelayedRepr")]
pub struct DelayedTf {
    tf: RationalTf,
    delay: f64,
}

#[derive(Serialize, Deserialize)]
struct DelayedRepr {
    num: Vec<f64>,
    den: Vec<f64>,
    #[serde(default)]
    delay: f64,
}

impl From<DelayedTf> for DelayedRepr {
    fn from(t: DelayedTf) -> Self {
        Self { num: t.tf.num, den: t.tf.den, delay: t.delay }
    }
}

impl TryFrom<DelayedRepr> for DelayedTf {
    type Error = Error;
    fn try_from(r: DelayedRepr) -> Result<Self> {
        DelayedTf::new(RationalTf::new(r.num, r.den)?, r.delay)
    }
}

impl DelayedTf {
    pub fn new(tf: RationalTf, delay: f64) -> Result<Self> {
        if !(delay.is_finite() && delay >= 0.0) {
            return Err(Error::InvalidArgument(format!("delay must be finite and >= 0, got {delay}")));
        }
        Ok(Self { tf, delay })
    }

    pub fn tf(&self) -> &RationalTf {
        &self.tf
    }
    pub fn delay(&self) -> f64 {
        self.delay
    }
}

impl FrequencyResponse for DelayedTf {
    fn response(&self, omega: f64) -> C64 {
        self.tf.response(omega) * C64::from_polar(1.0, -omega * self.delay)
    }
}

/// Horner evaluation of a descending-power polynomial.
pub fn poly_eval(p: &[f64], s: C64) -> C64 {
    p.iter().fold(C64::new(0.0, 0.0), |acc, &c| acc * s + c)
}

pub fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Roots as eigenvalues of the companion matrix.
pub fn poly_roots(p: &[f64]) -> Vec<C64> {
    let p = trim_leading(p.to_vec());
    let n = p.len().saturating_sub(1);
    if n == 0 {
        return Vec::new();
    }
    let comp = Matrix::from_fn(n, n, |i, j| {
        if i == 0 {
            -p[j + 1] / p[0]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    comp.complex_eigenvalues().iter().copied().collect()
}

/// Monic real polynomial with the given roots (conjugate pairs assumed).
pub fn poly_from_roots(roots: &[C64]) -> Vec<f64> {
    let mut acc = vec![C64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![C64::new(0.0, 0.0); acc.len() + 1];
        for (i, c) in acc.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        acc = next;
    }
    acc.iter().map(|c| c.re).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_improper_and_degenerate() {
        assert!(matches!(
            RationalTf::new(vec![1.0, 0.0, 0.0], vec![1.0, 1.0]),
            Err(Error::Improper { num: 2, den: 1 })
        ));
        assert!(RationalTf::new(vec![1.0], vec![0.0, 0.0]).is_err());
        assert!(RationalTf::new(vec![], vec![1.0]).is_err());
    }

    #[test]
    fn leading_zeros_are_trimmed() {
        let tf = RationalTf::new(vec![0.0, 0.0, 2.0], vec![0.0, 1.0, 1.0]).unwrap();
        assert_eq!(tf.num(), &[2.0]);
        assert_eq!(tf.den(), &[1.0, 1.0]);
        assert_eq!(tf.relative_degree(), 1);
    }

    #[test]
    fn open_loop_crossover_has_unit_gain_at_crossover() {
        let wc = 4.5;
        let ol = DelayedTf::new(RationalTf::new(vec![wc], vec![1.0, 0.0]).unwrap(), 0.3).unwrap();
        assert_relative_eq!(ol.response(wc).norm(), 1.0, epsilon = 1e-14);
        assert_relative_eq!(ol.response(wc).arg(), -std::f64::consts::FRAC_PI_2 - 0.3 * wc, epsilon = 1e-12);
    }

    #[test]
    fn approximation_dc_gain_is_constant_ratio() {
        let tf = RationalTf::new(vec![3.881, 24.24], vec![1.0, 0.6834, 24.72]).unwrap();
        assert_relative_eq!(tf.dc_gain(), 0.980_582_524_271_844_7, epsilon = 1e-12);
        let h = tf.response(1e-6);
        assert_relative_eq!(h.norm(), 24.24 / 24.72, epsilon = 1e-6);
    }

    #[test]
    fn delay_only_rotates_phase() {
        let tf = RationalTf::new(vec![1.0], vec![1.0, 1.0]).unwrap();
        let d = DelayedTf::new(tf.clone(), 0.7).unwrap();
        for w in [0.1, 1.0, 10.0] {
            assert_relative_eq!(d.response(w).norm(), tf.response(w).norm(), epsilon = 1e-14);
        }
        assert!(DelayedTf::new(tf, -0.1).is_err());
    }

    #[test]
    fn json_shape_is_flat() {
        let d = DelayedTf::new(RationalTf::new(vec![1.0, 3.0], vec![1.0, 2.0]).unwrap(), 0.3).unwrap();
        let v = serde_json::to_value(&d).unwrap();
        assert_eq!(v, serde_json::json!({"num": [1.0, 3.0], "den": [1.0, 2.0], "delay": 0.3}));
        let back: DelayedTf = serde_json::from_value(v).unwrap();
        assert_eq!(back, d);
        let bad: std::result::Result<DelayedTf, _> =
            serde_json::from_value(serde_json::json!({"num": [1.0, 0.0, 0.0], "den": [1.0, 2.0], "delay": 0.0}));
        assert!(bad.is_err());
    }

    #[test]
    fn roots_round_trip() {
        let p = poly_mul(&[1.0, 1.0], &[1.0, 2.0, 5.0]);
        let mut r = poly_roots(&p);
        r.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        assert_relative_eq!(r[0].re, -1.0, epsilon = 1e-10);
        assert_relative_eq!(r[0].im, -2.0, epsilon = 1e-10);
        let back = poly_from_roots(&r);
        for (a, b) in back.iter().zip(&p) {
            assert_relative_eq!(a, b, epsilon = 1e-10);
        }
    }
}
