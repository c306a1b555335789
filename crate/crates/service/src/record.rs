use std::path::{Path, PathBuf};

use crossover_core::sim::PlantIntegrator;
use crossover_core::table::Table;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};
use crate::trial::TrialSpec;

pub const RECORD_COLUMNS: [&str; 8] = ["t", "r", "error", "input", "u_p", "y_p", "clamped", "device_lost"];

/// Sampled series of one trial at the simulation rate.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunRecord {
    pub t: Vec<f64>,
    pub r: Vec<f64>,
    pub error: Vec<f64>,
    /// Raw axis value as received.
    pub input: Vec<f64>,
    pub u_p: Vec<f64>,
    pub y_p: Vec<f64>,
    pub clamped: Vec<bool>,
    pub device_lost: Vec<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub r: f64,
    pub error: f64,
    pub input: f64,
    pub u_p: f64,
    pub y_p: f64,
    pub clamped: bool,
    pub device_lost: bool,
}

impl RunRecord {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn push(&mut self, s: Sample) {
        self.t.push(s.t);
        self.r.push(s.r);
        self.error.push(s.error);
        self.input.push(s.input);
        self.u_p.push(s.u_p);
        self.y_p.push(s.y_p);
        self.clamped.push(s.clamped);
        self.device_lost.push(s.device_lost);
    }

    pub fn to_table(&self) -> Table {
        let mut tab = Table::new(RECORD_COLUMNS.iter().map(|s| s.to_string()).collect());
        for i in 0..self.len() {
            let flag = |b: bool| if b { 1.0 } else { 0.0 };
            tab.push_row(&[
                self.t[i],
                self.r[i],
                self.error[i],
                self.input[i],
                self.u_p[i],
                self.y_p[i],
                flag(self.clamped[i]),
                flag(self.device_lost[i]),
            ])
            .expect("row width matches headers");
        }
        tab
    }

    pub fn from_table(tab: &Table) -> Result<Self> {
        let col = |name: &str| tab.require(name).map(<[f64]>::to_vec);
        let flags = |name: &str| tab.require(name).map(|c| c.iter().map(|v| *v != 0.0).collect());
        let rec = Self {
            t: col("t")?,
            r: col("r")?,
            error: col("error")?,
            input: col("input")?,
            u_p: col("u_p")?,
            y_p: col("y_p")?,
            clamped: flags("clamped")?,
            device_lost: flags("device_lost")?,
        };
        if rec.t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ServiceError::Config("record timestamps are not strictly increasing".into()));
        }
        Ok(rec)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.to_table().write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
    }
}

/// JSON sidecar persisted next to the record CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub session_id: String,
    pub participant_label: Option<String>,
    pub scenario_hash: String,
    pub trial: TrialSpec,
    pub rows: usize,
    /// False when the trial was aborted before its full duration.
    pub complete: bool,
    pub started_at_unix_ms: Option<u64>,
    /// Largest lag of simulation time behind wall-clock time, in frames.
    pub max_drift_frames: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordPaths {
    pub csv: PathBuf,
    pub json: PathBuf,
}

/// Writes `<dir>/<session_id>.csv` and `<dir>/<session_id>.json`.
pub fn save(dir: &Path, meta: &RecordMeta, record: &RunRecord) -> Result<RecordPaths> {
    if record.is_empty() {
        return Err(ServiceError::Empty(meta.session_id.clone()));
    }
    std::fs::create_dir_all(dir)?;
    let paths = RecordPaths {
        csv: dir.join(format!("{}.csv", meta.session_id)),
        json: dir.join(format!("{}.json", meta.session_id)),
    };
    record.to_table().save(&paths.csv)?;
    std::fs::write(&paths.json, serde_json::to_vec_pretty(meta)?)?;
    Ok(paths)
}

/// Loads a record CSV and its sidecar (same stem, `.json`).
pub fn load(csv: &Path) -> Result<(RecordMeta, RunRecord)> {
    let meta: RecordMeta = serde_json::from_slice(&std::fs::read(csv.with_extension("json"))?)?;
    let record = RunRecord::from_table(&Table::load(csv)?)?;
    Ok((meta, record))
}

/// Re-integrates the plant under the recorded `u_p`; returns the largest deviation from the stored `y_p`.
pub fn replay(trial: &TrialSpec, record: &RunRecord) -> Result<f64> {
    let mut plant = PlantIntegrator::new(trial.schedule.clone(), trial.dt)?;
    let mut worst: f64 = 0.0;
    for (&u, &y) in record.u_p.iter().zip(&record.y_p) {
        worst = worst.max((plant.output(u) - y).abs());
        plant.advance(u);
    }
    Ok(worst)
}
