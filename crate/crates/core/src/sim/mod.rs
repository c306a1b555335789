//! Fixed-step scenario simulator.
//!
//! Couples the reference signal, adaptive pilot, delayed neuromuscular
//! dynamics, scheduled plant and reference model. Continuous states use
//! RK4; adaptive parameters use explicit Euler at the same step.

mod run;
mod scenario;
mod signal;
mod trace;

pub use run::{
    cohort, cohort_seeds, rk4_step, run, run_with, setup, synthetic_participant, KnownPlant, PlantIntegrator, Remnant,
    RemnantGenerator, RunOptions, Setup, DEFAULT_REMNANT_POWER, LAMBDA_COLUMNS,
};
pub use scenario::{
    neuromuscular_default, plant_at, plant_pair, preset, warm_up_schedule, InjectionMode, PlantChange, PlantSchedule,
    ReferenceSpec, Scenario, ScenarioConfig, DEFAULT_SIGMOID_WIDTH, PRESET_NAMES, SECOND_ORDER_GAIN, WARM_UP_DURATION,
};
pub use signal::{Sinusoid, SinusoidSum};
pub use trace::Trace;
