//! Adaptive human-pilot model built on delayed model reference adaptive
//! control.
//!
//! The crate is organised bottom-up:
//!
//! * [`statespace`]: LTI realizations, transfer functions, matrix
//!   exponential, Lyapunov solver.
//! * [`reference`]: crossover-frequency tables, the delayed closed-loop
//!   reference and its rational approximation.
//! * [`pilot`]: the adaptive controller (distributed-delay control law,
//!   adaptive laws, `K_r` projection, stability-margin monitor).
//! * [`sim`]: fixed-step scenario simulator and trace export.
//! * [`stats`]: envelope, confidence-interval, hypothesis-test and power
//!   analysis pipeline used to compare the model against recorded runs.

pub mod error;
pub mod pilot;
pub mod reference;
pub mod sim;
pub mod statespace;
pub mod table;
pub mod stats;

pub use error::{Error, Result};
