use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    pub amplitude: f64,
    /// rad/s
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Sum of sinusoids `Σ aᵢ sin(ωᵢ t + φᵢ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Sinusoid>", into = "Vec<Sinusoid>")]
pub struct SinusoidSum {
    components: Vec<Sinusoid>,
}

impl TryFrom<Vec<Sinusoid>> for SinusoidSum {
    type Error = Error;
    fn try_from(v: Vec<Sinusoid>) -> Result<Self> {
        SinusoidSum::new(v)
    }
}

impl From<SinusoidSum> for Vec<Sinusoid> {
    fn from(s: SinusoidSum) -> Self {
        s.components
    }
}

impl SinusoidSum {
    pub fn new(components: Vec<Sinusoid>) -> Result<Self> {
        for c in &components {
            if !(c.frequency.is_finite() && c.frequency > 0.0) {
                return Err(Error::InvalidArgument(format!("sinusoid frequency must be positive, got {}", c.frequency)));
            }
            if !(c.amplitude.is_finite() && c.phase.is_finite()) {
                return Err(Error::InvalidArgument("sinusoid amplitude and phase must be finite".into()));
            }
        }
        Ok(Self { components })
    }

    /// Equal-amplitude, zero-phase components.
    pub fn uniform(amplitude: f64, frequencies: &[f64]) -> Result<Self> {
        Self::new(frequencies.iter().map(|&frequency| Sinusoid { amplitude, frequency, phase: 0.0 }).collect())
    }

    /// Main-trial signal: seven components of amplitude 0.2.
    pub fn main_trial() -> Self {
        Self::uniform(0.2, &[0.1, 0.3, 0.5, 0.7, 1.0, 1.3, 1.5]).expect("static signal is valid")
    }

    /// Warm-up signal: four components of amplitude 0.2.
    pub fn warm_up() -> Self {
        Self::uniform(0.2, &[0.1, 0.5, 1.0, 1.5]).expect("static signal is valid")
    }

    pub fn components(&self) -> &[Sinusoid] {
        &self.components
    }

    pub fn value(&self, t: f64) -> f64 {
        self.components.iter().map(|c| c.amplitude * (c.frequency * t + c.phase).sin()).sum()
    }

    /// `value(t)` for `t ≥ 0`, zero before the start of the trial.
    pub fn causal(&self, t: f64) -> f64 {
        if t < 0.0 {
            0.0
        } else {
            self.value(t)
        }
    }

    pub fn max_frequency(&self) -> f64 {
        self.components.iter().map(|c| c.frequency).fold(0.0, f64::max)
    }

    pub fn peak_bound(&self) -> f64 {
        self.components.iter().map(|c| c.amplitude.abs()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let sig = SinusoidSum::main_trial();
        assert_eq!(sig.value(0.0), 0.0);
        let one = SinusoidSum::uniform(0.2, &[1.5]).unwrap();
        assert!((one.value(std::f64::consts::PI / 3.0) - 0.2).abs() < 1e-15);
        assert!((sig.peak_bound() - 1.4).abs() < 1e-12);
        let peak = (0..200_000).map(|k| sig.value(k as f64 * 0.01).abs()).fold(0.0, f64::max);
        assert!(peak <= 1.4);
        assert_eq!(sig.max_frequency(), 1.5);
        assert_eq!(sig.causal(-1.0), 0.0);
    }

    #[test]
    fn rejects_non_positive_frequency() {
        assert!(SinusoidSum::uniform(1.0, &[0.0]).is_err());
        let bad: std::result::Result<SinusoidSum, _> =
            serde_json::from_str(r#"[{"amplitude": 1.0, "frequency": -1.0}]"#);
        assert!(bad.is_err());
    }
}
