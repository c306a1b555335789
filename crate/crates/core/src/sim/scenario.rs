use serde::{Deserialize, Serialize};

use super::signal::SinusoidSum;
use crate::pilot::{AdaptationGains, PilotConfig};
use crate::reference::{build_reference, PlantClass, ReferenceModel};
use crate::statespace::{tf_to_ss, DelayedTf, RationalTf, StateSpace};
use crate::{Error, Result};

/// Default sigmoid width in seconds.
pub const DEFAULT_SIGMOID_WIDTH: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InjectionMode {
    Sudden,
    /// Logistic blend `σ((t − t_inj)/width)` of every coefficient.
    Sigmoid { width: f64 },
}

impl InjectionMode {
    pub fn gradual() -> Self {
        Self::Sigmoid { width: DEFAULT_SIGMOID_WIDTH }
    }

    /// Blend weight toward the new plant at time `t` for a change at `at`.
    pub fn weight(self, t: f64, at: f64) -> f64 {
        match self {
            Self::Sudden => {
                if t >= at {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Sigmoid { width } => 1.0 / (1.0 + (-(t - at) / width).exp()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantChange {
    pub at: f64,
    pub to: RationalTf,
    pub mode: InjectionMode,
}

/// Piecewise plant: an initial transfer function followed by time-ordered changes.
///
/// A sigmoid change only blends from the plant of the segment it belongs to,
/// so it is inactive before the preceding change and requires equal orders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantSchedule {
    pub initial: RationalTf,
    pub changes: Vec<PlantChange>,
}

impl PlantSchedule {
    pub fn validate(&self) -> Result<()> {
        let mut prev = &self.initial;
        let mut prev_at = f64::NEG_INFINITY;
        for c in &self.changes {
            if !(c.at.is_finite() && c.at > prev_at) {
                return Err(Error::InvalidArgument("plant changes must be strictly increasing in time".into()));
            }
            if let InjectionMode::Sigmoid { width } = c.mode {
                if !(width.is_finite() && width > 0.0) {
                    return Err(Error::InvalidArgument(format!("sigmoid width must be positive, got {width}")));
                }
                if prev.den_degree() != c.to.den_degree() {
                    return Err(Error::InvalidArgument(format!(
                        "gradual plant change at {} s requires equal orders ({} vs {})",
                        c.at,
                        prev.den_degree(),
                        c.to.den_degree()
                    )));
                }
            }
            prev = &c.to;
            prev_at = c.at;
        }
        Ok(())
    }

    /// Plant transfer function at time `t`.
    pub fn tf_at(&self, t: f64) -> RationalTf {
        let mut current = self.initial.clone();
        let mut prev_at = f64::NEG_INFINITY;
        for c in &self.changes {
            if t < prev_at {
                break;
            }
            match c.mode {
                InjectionMode::Sudden => {
                    if t >= c.at {
                        current = c.to.clone();
                    }
                }
                InjectionMode::Sigmoid { .. } => {
                    let w = c.mode.weight(t, c.at);
                    current = blend(&current, &c.to, w);
                }
            }
            prev_at = c.at;
        }
        current
    }

    pub fn at(&self, t: f64) -> StateSpace {
        tf_to_ss(&self.tf_at(t))
    }

    pub fn max_order(&self) -> usize {
        self.changes.iter().map(|c| c.to.den_degree()).chain([self.initial.den_degree()]).max().unwrap_or(0)
    }
}

/// Coefficient-wise interpolation of two equal-order transfer functions (monic denominators).
fn blend(a: &RationalTf, b: &RationalTf, w: f64) -> RationalTf {
    if w <= 0.0 {
        return a.clone();
    }
    if w >= 1.0 {
        return b.clone();
    }
    let (a, b) = (a.normalized(), b.normalized());
    let mix = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p + (q - p) * w).collect() };
    let num = mix(&a.padded_num(), &b.padded_num());
    let den = mix(a.den(), b.den());
    RationalTf::new(num, den).expect("blend of valid equal-order transfer functions")
}

/// Overrides for the automatically derived reference model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReferenceSpec {
    pub plant_class: Option<PlantClass>,
    pub omega_i: Option<f64>,
}

/// Serializable scenario description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub plant_before: RationalTf,
    pub plant_after: RationalTf,
    pub injection_time: f64,
    pub injection_mode: InjectionMode,
    pub neuromuscular: DelayedTf,
    pub reference_signal: SinusoidSum,
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub pilot: PilotConfig,
    #[serde(default)]
    pub reference: ReferenceSpec,
}

fn default_name() -> String {
    "custom".into()
}
fn default_dt() -> f64 {
    0.01
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt: must be positive, got {}", self.dt)));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::InvalidArgument(format!("duration: must be positive, got {}", self.duration)));
        }
        if !(self.injection_time > 0.0 && self.injection_time < self.duration) {
            return Err(Error::InvalidArgument(format!(
                "injection_time: must lie in (0, {}), got {}",
                self.duration, self.injection_time
            )));
        }
        if self.plant_before.den_degree() != self.plant_after.den_degree() {
            return Err(Error::InvalidArgument(format!(
                "plant_after: order {} differs from plant_before order {}",
                self.plant_after.den_degree(),
                self.plant_before.den_degree()
            )));
        }
        self.schedule().validate()?;
        self.pilot.validate()
    }

    pub fn schedule(&self) -> PlantSchedule {
        PlantSchedule {
            initial: self.plant_before.clone(),
            changes: vec![PlantChange { at: self.injection_time, to: self.plant_after.clone(), mode: self.injection_mode }],
        }
    }

    pub fn tau(&self) -> f64 {
        self.neuromuscular.delay()
    }

    /// Aggregate order `n_h + n_p`.
    pub fn order(&self) -> usize {
        self.neuromuscular.tf().den_degree() + self.plant_before.den_degree()
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn build(&self) -> Result<Scenario> {
        self.validate()?;
        let class = match self.reference.plant_class {
            Some(c) => c,
            None => PlantClass::classify(&self.plant_before)?,
        };
        let omega_i = self.reference.omega_i.unwrap_or_else(|| self.reference_signal.max_frequency());
        let reference_model = build_reference(class, omega_i, self.tau(), self.order())?;
        Ok(Scenario { config: self.clone(), reference_model })
    }
}

/// Validated scenario with its fitted reference model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub reference_model: ReferenceModel,
}

impl Scenario {
    pub fn dt(&self) -> f64 {
        self.config.dt
    }
}

/// Plant realization at time `t`.
pub fn plant_at(scn: &Scenario, t: f64) -> StateSpace {
    scn.config.schedule().at(t)
}

fn tf(num: &[f64], den: &[f64]) -> RationalTf {
    RationalTf::new(num.to_vec(), den.to_vec()).expect("static transfer function is valid")
}

/// Neuromuscular model `(s+3)/(s+2)·e^{−0.3s}`.
pub fn neuromuscular_default() -> DelayedTf {
    DelayedTf::new(tf(&[1.0, 3.0], &[1.0, 2.0]), 0.3).expect("static delay is valid")
}

/// Plant pairs `(before, after)` for each plant order.
pub fn plant_pair(class: PlantClass) -> (RationalTf, RationalTf) {
    match class {
        PlantClass::Gain => (tf(&[4.0], &[1.0]), tf(&[6.0], &[1.0])),
        PlantClass::FirstOrder => (tf(&[4.0], &[1.0, 1.0]), tf(&[6.0], &[1.0, 0.5])),
        PlantClass::SecondOrder => (tf(&[4.0], &[1.0, 6.0, 5.0]), tf(&[6.0], &[1.0, 3.0, 1.25])),
    }
}

/// Adaptation rate of the second-order presets; their third-order reference
/// yields a large `‖B_mᵀP‖`, and unit rates diverge at a 10 ms step.
pub const SECOND_ORDER_GAIN: f64 = 1e-3;

pub const PRESET_NAMES: [&str; 6] = [
    "first-order-sudden",
    "first-order-gradual",
    "zero-order-sudden",
    "zero-order-gradual",
    "second-order-sudden",
    "second-order-gradual",
];

/// Main-trial preset: 140 s, change at 70 s, 10 ms step.
pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let (class, mode) = match name {
        "first-order-sudden" => (PlantClass::FirstOrder, InjectionMode::Sudden),
        "first-order-gradual" => (PlantClass::FirstOrder, InjectionMode::gradual()),
        "zero-order-sudden" => (PlantClass::Gain, InjectionMode::Sudden),
        "zero-order-gradual" => (PlantClass::Gain, InjectionMode::gradual()),
        "second-order-sudden" => (PlantClass::SecondOrder, InjectionMode::Sudden),
        "second-order-gradual" => (PlantClass::SecondOrder, InjectionMode::gradual()),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown preset '{other}'; available: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    let (plant_before, plant_after) = plant_pair(class);
    let mut pilot = PilotConfig::default();
    if class == PlantClass::SecondOrder {
        pilot.gains = AdaptationGains { theta: SECOND_ORDER_GAIN, phi: SECOND_ORDER_GAIN, lambda: SECOND_ORDER_GAIN };
    }
    Ok(ScenarioConfig {
        name: name.to_string(),
        plant_before,
        plant_after,
        injection_time: 70.0,
        injection_mode: mode,
        neuromuscular: neuromuscular_default(),
        reference_signal: SinusoidSum::main_trial(),
        duration: 140.0,
        dt: 0.01,
        pilot,
        reference: ReferenceSpec::default(),
    })
}

/// Warm-up plant schedule: `2/(s²+3s+2)` → `5/(s+2)` at 45 s (sudden) →
/// `3/(s+1)` centred at 90 s (sigmoid) → gain 4 at 150 s (sudden).
pub fn warm_up_schedule() -> PlantSchedule {
    PlantSchedule {
        initial: tf(&[2.0], &[1.0, 3.0, 2.0]),
        changes: vec![
            PlantChange { at: 45.0, to: tf(&[5.0], &[1.0, 2.0]), mode: InjectionMode::Sudden },
            PlantChange { at: 90.0, to: tf(&[3.0], &[1.0, 1.0]), mode: InjectionMode::gradual() },
            PlantChange { at: 150.0, to: tf(&[4.0], &[1.0]), mode: InjectionMode::Sudden },
        ],
    }
}

pub const WARM_UP_DURATION: f64 = 200.0;
