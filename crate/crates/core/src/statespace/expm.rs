use super::Matrix;
use crate::{Error, Result};

const PADE_ORDER: usize = 6;

/// `e^{At}` by scaling and squaring with a diagonal Padé approximant of order 6.
///
/// `At` is scaled by `2^−j` until its infinity norm is at most 1/2, where the
/// (6,6) approximant's truncation error is below double-precision roundoff.
pub fn expm(a: &Matrix, t: f64) -> Result<Matrix> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension(format!("expm needs a square matrix, got {}x{}", n, a.ncols())));
    }
    if !t.is_finite() || a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("expm input must be finite".into()));
    }
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let at = a * t;
    let norm = inf_norm(&at);
    let j = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let x = at / 2f64.powi(j);

    let id = Matrix::identity(n, n);
    let mut num = id.clone();
    let mut den = id.clone();
    let mut pow = id;
    let mut c = 1.0;
    let q = PADE_ORDER;
    for k in 1..=q {
        c *= (q - k + 1) as f64 / (k * (2 * q - k + 1)) as f64;
        pow = &x * pow;
        let term = &pow * c;
        num += &term;
        if k % 2 == 0 {
            den += &term;
        } else {
            den -= &term;
        }
    }
    let mut e = den
        .lu()
        .solve(&num)
        .ok_or_else(|| Error::Singular("Padé denominator is singular".into()))?;
    for _ in 0..j {
        e = &e * &e;
    }
    Ok(e)
}

fn inf_norm(m: &Matrix) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn taylor_oracle(a: &Matrix, t: f64) -> Matrix {
        let n = a.nrows();
        let at = a * t;
        let mut sum = Matrix::identity(n, n);
        let mut term = Matrix::identity(n, n);
        for k in 1..80 {
            term = &term * &at / k as f64;
            sum += &term;
        }
        sum
    }

    fn rel_err(x: &Matrix, y: &Matrix) -> f64 {
        (x - y).norm() / y.norm()
    }

    #[test]
    fn exponential_of_zero_is_identity() {
        let e = expm(&Matrix::zeros(3, 3), 2.0).unwrap();
        assert_eq!(e, Matrix::identity(3, 3));
    }

    #[test]
    fn nilpotent_exponential_is_polynomial() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = expm(&a, 0.3).unwrap();
        let want = Matrix::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 1.0]);
        assert!(rel_err(&e, &want) < 1e-14);
    }

    #[test]
    fn diagonal_exponential() {
        let a = Matrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let e = expm(&a, 1.0).unwrap();
        assert!((e[(0, 0)] - (-1f64).exp()).abs() < 1e-15);
        assert!((e[(1, 1)] - (-2f64).exp()).abs() < 1e-15);
        assert!(e[(0, 1)].abs() < 1e-16 && e[(1, 0)].abs() < 1e-16);
    }

    #[test]
    fn matches_taylor_oracle_on_aggregate_matrix() {
        let a = Matrix::from_row_slice(2, 2, &[-2.0, 0.0, 4.0, -1.0]);
        for t in [0.01, 0.3, 1.0, 2.0] {
            assert!(rel_err(&expm(&a, t).unwrap(), &taylor_oracle(&a, t)) < 1e-10);
        }
    }

    #[test]
    fn rejects_non_square() {
        assert!(matches!(expm(&Matrix::zeros(2, 3), 1.0), Err(Error::Dimension(_))));
    }

    fn stable4() -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-1.0f64..1.0, 16).prop_map(|v| {
            let mut m = Matrix::from_row_slice(4, 4, &v);
            for i in 0..4 {
                m[(i, i)] -= 4.5;
            }
            m
        })
    }

    proptest! {
        #[test]
        fn semigroup_property(a in stable4(), s in 0.0f64..2.0, t in 0.0f64..2.0) {
            let lhs = expm(&a, s + t).unwrap();
            let rhs = expm(&a, s).unwrap() * expm(&a, t).unwrap();
            prop_assert!((&lhs - &rhs).norm() <= 1e-9 * lhs.norm().max(1e-300) + 1e-15);
        }

        #[test]
        fn agrees_with_taylor_series(a in stable4(), t in 0.0f64..1.0) {
            let e = expm(&a, t).unwrap();
            prop_assert!(rel_err(&e, &taylor_oracle(&a, t)) < 1e-10);
        }
    }
}
