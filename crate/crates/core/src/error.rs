use nalgebra::Complex;

/// Errors raised across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("improper transfer function: numerator degree {num} exceeds denominator degree {den}")]
    Improper { num: usize, den: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not Hurwitz, eigenvalues: {}", format_eigs(.0))]
    NotHurwitz(Vec<Complex<f64>>),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("matching conditions unsolvable: state residual {state:.3e}, input residual {input:.3e}")]
    Unmatched { state: f64, input: f64 },

    #[error("signal history has not been initialised")]
    UnprimedHistory,

    #[error("simulation produced a non-finite state at t = {t:.4} s")]
    NonFinite {
        t: f64,
        trace: Box<crate::sim::Trace>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

fn format_eigs(eigs: &[Complex<f64>]) -> String {
    let parts: Vec<String> = eigs
        .iter()
        .map(|z| format!("{:.4}{:+.4}i", z.re, z.im))
        .collect();
    format!("[{}]", parts.join(", "))
}
