use crossover_core::sim::{preset, warm_up_schedule, PlantSchedule, ScenarioConfig, SinusoidSum, WARM_UP_DURATION};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, ServiceError};

/// Human-driven trial: the plant schedule and reference the participant tracks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub name: String,
    pub schedule: PlantSchedule,
    pub reference_signal: SinusoidSum,
    pub duration: f64,
    pub dt: f64,
    /// Axis-to-`u_p` scale.
    pub input_gain: f64,
}

pub const WARM_UP_PRESET: &str = "warm-up";

impl TrialSpec {
    /// Plant schedule and reference signal of a scenario; pilot settings are ignored.
    pub fn from_scenario(cfg: &ScenarioConfig, input_gain: f64) -> Result<Self> {
        cfg.validate()?;
        let trial = Self {
            name: cfg.name.clone(),
            schedule: cfg.schedule(),
            reference_signal: cfg.reference_signal.clone(),
            duration: cfg.duration,
            dt: cfg.dt,
            input_gain,
        };
        trial.validate()?;
        Ok(trial)
    }

    /// Familiarisation run: four-change plant schedule over 200 s.
    pub fn warm_up(dt: f64, input_gain: f64) -> Result<Self> {
        let trial = Self {
            name: WARM_UP_PRESET.into(),
            schedule: warm_up_schedule(),
            reference_signal: SinusoidSum::warm_up(),
            duration: WARM_UP_DURATION,
            dt,
            input_gain,
        };
        trial.validate()?;
        Ok(trial)
    }

    /// Main-trial preset by name, or the warm-up run for [`WARM_UP_PRESET`].
    pub fn preset(name: &str, input_gain: f64) -> Result<Self> {
        if name == WARM_UP_PRESET {
            return Self::warm_up(0.01, input_gain);
        }
        Self::from_scenario(&preset(name)?, input_gain)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(ServiceError::Config(format!("dt: must be positive, got {}", self.dt)));
        }
        if !(self.duration.is_finite() && self.duration >= self.dt) {
            return Err(ServiceError::Config(format!("duration: must be at least dt, got {}", self.duration)));
        }
        if !(self.input_gain.is_finite() && self.input_gain > 0.0) {
            return Err(ServiceError::Config(format!("input_gain: must be positive, got {}", self.input_gain)));
        }
        self.schedule.validate()?;
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        (self.duration / self.dt).round() as u64
    }

    /// SHA-256 (hex) of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("trial serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_durations() {
        let w = TrialSpec::preset(WARM_UP_PRESET, 1.0).unwrap();
        assert_eq!(w.duration, 200.0);
        assert_eq!(w.steps(), 20_000);
        let m = TrialSpec::preset("first-order-sudden", 1.0).unwrap();
        assert_eq!((m.duration, m.schedule.changes[0].at), (140.0, 70.0));
        assert!(TrialSpec::preset("nope", 1.0).is_err());
    }

    #[test]
    fn hash_is_stable_across_re_serialization() {
        let m = TrialSpec::preset("second-order-gradual", 1.0).unwrap();
        let back: TrialSpec = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back.hash(), m.hash());
        let mut other = m.clone();
        other.input_gain = 2.0;
        assert_ne!(other.hash(), m.hash());
    }

    #[test]
    fn field_level_validation() {
        let mut m = TrialSpec::preset("first-order-sudden", 1.0).unwrap();
        m.input_gain = 0.0;
        assert!(m.validate().unwrap_err().to_string().contains("input_gain"));
    }
}
