use nalgebra::Cholesky;

use super::Matrix;
use crate::{Error, Result};

const MAX_ITER: usize = 100;

/// True iff every eigenvalue of `a` has strictly negative real part.
pub fn is_hurwitz(a: &Matrix) -> bool {
    a.nrows() == a.ncols() && a.complex_eigenvalues().iter().all(|z| z.re < 0.0)
}

/// Solves `AᵀP + PA = −Q` for Hurwitz `A` and symmetric positive definite `Q`.
///
/// Uses the matrix-sign iteration on `[[Aᵀ, Q], [0, −A]]`, whose sign is
/// `[[−I, 2P], [0, I]]`, followed by residual refinement.
pub fn lyap_solve(a: &Matrix, q: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    if a.ncols() != n || q.nrows() != n || q.ncols() != n {
        return Err(Error::Dimension(format!(
            "lyap_solve needs square A and Q of equal size, got {}x{} and {}x{}",
            a.nrows(),
            a.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    let qn = q.norm();
    if (q - q.transpose()).norm() > 1e-12 * qn.max(1.0) || Cholesky::new(q.clone()).is_none() {
        return Err(Error::InvalidArgument("Q must be symmetric positive definite".into()));
    }
    let eigs: Vec<_> = a.complex_eigenvalues().iter().copied().collect();
    if eigs.iter().any(|z| z.re >= 0.0) {
        return Err(Error::NotHurwitz(eigs));
    }
    let mut p = sign_iteration(a, q)?;
    for _ in 0..3 {
        let r = residual(a, &p, q);
        if r.norm() <= 1e-10 * qn {
            break;
        }
        p += sign_iteration(a, &r)?;
    }
    p = (&p + p.transpose()) * 0.5;
    let res = residual(a, &p, q).norm();
    if res > 1e-8 * qn {
        return Err(Error::Singular(format!("Lyapunov residual {res:.3e} exceeds tolerance")));
    }
    Ok(p)
}

/// `AᵀP + PA + Q`.
fn residual(a: &Matrix, p: &Matrix, q: &Matrix) -> Matrix {
    a.transpose() * p + p * a + q
}

/// Solution of `AᵀX + XA = −R` for symmetric (not necessarily definite) `R`.
fn sign_iteration(a: &Matrix, r: &Matrix) -> Result<Matrix> {
    let n = a.nrows() as f64;
    let mut ak = a.clone();
    let mut rk = r.clone();
    for _ in 0..MAX_ITER {
        let inv = ak
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("singular iterate in sign-function iteration".into()))?;
        let det = ak.determinant().abs();
        let c = if det > 0.0 && det.is_finite() { det.powf(-1.0 / n) } else { 1.0 };
        let next_a = (&ak * c + &inv / c) * 0.5;
        let next_r = (&rk * c + inv.transpose() * &rk * &inv / c) * 0.5;
        let delta = (&next_a - &ak).norm() / next_a.norm();
        ak = next_a;
        rk = next_r;
        if delta < 1e-14 {
            break;
        }
    }
    Ok(rk * 0.5)
}
