use std::time::{SystemTime, UNIX_EPOCH};

use crossover_core::sim::{PlantIntegrator, ScenarioConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};
use crate::record::{RecordMeta, RunRecord, Sample};
use crate::trial::TrialSpec;

/// Simulation steps per emitted display frame (100 Hz loop, 50 Hz frames).
pub const FRAME_DIVIDER: u64 = 2;

/// Request body for a new session.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    #[serde(default)]
    pub id: Option<String>,
    /// Opaque label; never a name or other identifying detail.
    #[serde(default)]
    pub participant_label: Option<String>,
    /// Preset name (main-trial presets or `warm-up`); exclusive with `scenario`.
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub scenario: Option<ScenarioConfig>,
    /// Prepend the 200 s familiarisation run (not recorded).
    #[serde(default)]
    pub warm_up: bool,
    #[serde(default)]
    pub input_gain: Option<f64>,
}

impl SessionConfig {
    pub fn trial(&self) -> Result<TrialSpec> {
        let gain = self.input_gain.unwrap_or(1.0);
        match (&self.preset, &self.scenario) {
            (Some(_), Some(_)) => Err(ServiceError::Config("preset: give either preset or scenario, not both".into())),
            (Some(name), None) => TrialSpec::preset(name, gain).map_err(|e| match e {
                ServiceError::Core(c) => ServiceError::Config(format!("preset: {}", detail(&c))),
                other => other,
            }),
            (None, Some(cfg)) => TrialSpec::from_scenario(cfg, gain).map_err(|e| match e {
                ServiceError::Core(c) => ServiceError::Config(format!("scenario.{}", detail(&c))),
                other => other,
            }),
            (None, None) => Err(ServiceError::Config("preset: one of preset or scenario is required".into())),
        }
    }
}

fn detail(e: &crossover_core::Error) -> String {
    match e {
        crossover_core::Error::InvalidArgument(msg) => msg.clone(),
        other => other.to_string(),
    }
}

/// Session lifecycle: `Idle → WarmUp → Running → Done` or `Idle → Running → Done`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Idle,
    WarmUp,
    Running,
    Done,
}

/// One simulation step as seen by the display and the recorder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutput {
    pub t: f64,
    pub error: f64,
    pub input: f64,
    pub clamped: bool,
    /// This step falls on the display-frame grid.
    pub frame: bool,
    /// Label of the phase entered at the end of this step, if any.
    pub transition: Option<&'static str>,
}

struct Stage {
    trial: TrialSpec,
    plant: PlantIntegrator,
    step: u64,
}

impl Stage {
    fn new(trial: TrialSpec) -> Result<Self> {
        let plant = PlantIntegrator::new(trial.schedule.clone(), trial.dt)?;
        Ok(Self { trial, plant, step: 0 })
    }

    fn t(&self) -> f64 {
        self.step as f64 * self.trial.dt
    }

    fn finished(&self) -> bool {
        self.step >= self.trial.steps()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub id: String,
    pub phase: Phase,
    /// Display label: `idle`, `warm-up`, `rest`, `running` or `done`.
    pub label: String,
    pub t: f64,
    pub duration: f64,
    pub rows: usize,
    pub warm_up: bool,
    pub complete: bool,
    pub scenario_hash: String,
    pub participant_label: Option<String>,
    pub started_at_unix_ms: Option<u64>,
}

/// Human-in-the-loop session state, independent of any transport.
pub struct LiveSession {
    id: String,
    participant_label: Option<String>,
    trial: TrialSpec,
    warm_up: Option<TrialSpec>,
    hash: String,
    phase: Phase,
    stage: Option<Stage>,
    record: RunRecord,
    complete: bool,
    started_at: Option<u64>,
    max_drift_frames: Option<f64>,
}

impl LiveSession {
    pub fn new(id: String, config: &SessionConfig) -> Result<Self> {
        let trial = config.trial()?;
        let warm_up = if config.warm_up {
            Some(TrialSpec::warm_up(trial.dt, trial.input_gain)?)
        } else {
            None
        };
        let hash = trial.hash();
        let cap = trial.steps() as usize;
        Ok(Self {
            id,
            participant_label: config.participant_label.clone(),
            trial,
            warm_up,
            hash,
            phase: Phase::Idle,
            stage: None,
            record: RunRecord {
                t: Vec::with_capacity(cap),
                r: Vec::with_capacity(cap),
                error: Vec::with_capacity(cap),
                input: Vec::with_capacity(cap),
                u_p: Vec::with_capacity(cap),
                y_p: Vec::with_capacity(cap),
                clamped: Vec::with_capacity(cap),
                device_lost: Vec::with_capacity(cap),
            },
            complete: false,
            started_at: None,
            max_drift_frames: None,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn trial(&self) -> &TrialSpec {
        &self.trial
    }

    pub fn dt(&self) -> f64 {
        self.trial.dt
    }

    pub fn scenario_hash(&self) -> &str {
        &self.hash
    }

    pub fn record(&self) -> &RunRecord {
        &self.record
    }

    /// Warm-up finished, waiting for the main trial to be started.
    pub fn resting(&self) -> bool {
        self.phase == Phase::WarmUp && self.stage.as_ref().is_none_or(Stage::finished)
    }

    /// The fixed-rate loop should be stepping.
    pub fn is_live(&self) -> bool {
        matches!(self.phase, Phase::WarmUp | Phase::Running) && !self.resting()
    }

    pub fn label(&self) -> &'static str {
        match self.phase {
            Phase::Idle => "idle",
            Phase::WarmUp if self.resting() => "rest",
            Phase::WarmUp => "warm-up",
            Phase::Running => "running",
            Phase::Done => "done",
        }
    }

    pub fn sim_time(&self) -> f64 {
        self.stage.as_ref().map_or(0.0, Stage::t)
    }

    pub fn status(&self) -> SessionStatus {
        SessionStatus {
            id: self.id.clone(),
            phase: self.phase,
            label: self.label().to_string(),
            t: self.sim_time(),
            duration: self.stage.as_ref().map_or(self.trial.duration, |s| s.trial.duration),
            rows: self.record.len(),
            warm_up: self.warm_up.is_some(),
            complete: self.complete,
            scenario_hash: self.hash.clone(),
            participant_label: self.participant_label.clone(),
            started_at_unix_ms: self.started_at,
        }
    }

    /// Enters the next live stage: warm-up (if configured) from idle, otherwise the main trial.
    pub fn start(&mut self) -> Result<Phase> {
        match self.phase {
            Phase::Idle => {
                self.started_at = Some(unix_ms());
                if let Some(w) = self.warm_up.clone() {
                    self.stage = Some(Stage::new(w)?);
                    self.phase = Phase::WarmUp;
                } else {
                    self.stage = Some(Stage::new(self.trial.clone())?);
                    self.phase = Phase::Running;
                }
            }
            Phase::WarmUp if self.resting() => {
                self.stage = Some(Stage::new(self.trial.clone())?);
                self.phase = Phase::Running;
            }
            _ => return Err(self.invalid("start")),
        }
        Ok(self.phase)
    }

    /// Advances one step with the participant's raw axis value.
    ///
    /// Axis values outside `[−1, 1]` are clamped (non-finite values become 0) and flagged.
    pub fn step(&mut self, raw: f64, device_lost: bool) -> Result<StepOutput> {
        if !self.is_live() {
            return Err(self.invalid("step"));
        }
        let recording = self.phase == Phase::Running;
        let stage = self.stage.as_mut().expect("live sessions have a stage");
        let axis = if raw.is_finite() { raw.clamp(-1.0, 1.0) } else { 0.0 };
        let clamped = axis != raw;
        let u_p = stage.trial.input_gain * axis;
        let t = stage.t();
        let r = stage.trial.reference_signal.value(t);
        let y_p = stage.plant.output(u_p);
        let error = r - y_p;
        let frame = stage.step % FRAME_DIVIDER == 0;
        if recording {
            self.record.push(Sample { t, r, error, input: raw, u_p, y_p, clamped, device_lost });
        }
        stage.plant.advance(u_p);
        stage.step += 1;
        let mut transition = None;
        if stage.finished() {
            if recording {
                self.phase = Phase::Done;
                self.complete = true;
            }
            transition = Some(self.label());
        }
        Ok(StepOutput { t, error, input: raw, clamped, frame, transition })
    }

    /// Ends the session early; the record is kept and marked incomplete.
    pub fn abort(&mut self) -> Result<()> {
        if self.phase == Phase::Done {
            return Err(self.invalid("abort"));
        }
        self.phase = Phase::Done;
        self.complete = false;
        Ok(())
    }

    pub fn note_drift(&mut self, frames: f64) {
        self.max_drift_frames = Some(self.max_drift_frames.map_or(frames, |m| m.max(frames)));
    }

    pub fn max_drift_frames(&self) -> Option<f64> {
        self.max_drift_frames
    }

    /// Sidecar metadata; only available once the session is done.
    pub fn meta(&self) -> Result<RecordMeta> {
        if self.phase != Phase::Done {
            return Err(self.invalid("finalize"));
        }
        if self.record.is_empty() {
            return Err(ServiceError::Empty(self.id.clone()));
        }
        Ok(RecordMeta {
            session_id: self.id.clone(),
            participant_label: self.participant_label.clone(),
            scenario_hash: self.hash.clone(),
            trial: self.trial.clone(),
            rows: self.record.len(),
            complete: self.complete,
            started_at_unix_ms: self.started_at,
            max_drift_frames: self.max_drift_frames,
        })
    }

    fn invalid(&self, action: &'static str) -> ServiceError {
        ServiceError::InvalidState { id: self.id.clone(), phase: self.label().to_string(), action }
    }
}

fn unix_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}
