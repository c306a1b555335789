use crate::{Error, Result};

/// Fixed-step ring buffer of vector samples with linear-interpolation reads.
///
/// Sample `i` steps back from the latest sits at time `latest_time − i·dt`.
/// After [`History::prime`] the buffer is zero-filled, so reads before the
/// first push return zero.
#[derive(Clone, Debug)]
pub struct History {
    dim: usize,
    dt: f64,
    cap: usize,
    buf: Vec<f64>,
    head: usize,
    t0: f64,
    pushes: u64,
    primed: bool,
}

impl History {
    /// Buffer spanning at least `horizon` seconds at step `dt`.
    pub fn new(dim: usize, dt: f64, horizon: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("history step must be positive, got {dt}")));
        }
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(Error::InvalidArgument(format!("history horizon must be >= 0, got {horizon}")));
        }
        let cap = (horizon / dt - 1e-9).ceil().max(0.0) as usize + 2;
        Ok(Self { dim, dt, cap, buf: vec![0.0; cap * dim], head: 0, t0: 0.0, pushes: 0, primed: false })
    }

    /// Zero-fills the buffer; the first push lands at time `t0`.
    pub fn prime(&mut self, t0: f64) {
        self.buf.iter_mut().for_each(|v| *v = 0.0);
        self.head = 0;
        self.t0 = t0;
        self.pushes = 0;
        self.primed = true;
    }

    pub fn is_primed(&self) -> bool {
        self.primed
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn capacity(&self) -> usize {
        self.cap
    }

    /// Time of the most recent sample (`t0 − dt` before any push).
    pub fn latest_time(&self) -> f64 {
        self.t0 + (self.pushes as f64 - 1.0) * self.dt
    }

    /// Time the next push will be stamped with.
    pub fn next_time(&self) -> f64 {
        self.t0 + self.pushes as f64 * self.dt
    }

    pub fn push(&mut self, sample: &[f64]) -> Result<()> {
        if !self.primed {
            return Err(Error::UnprimedHistory);
        }
        if sample.len() != self.dim {
            return Err(Error::Dimension(format!("sample has {} entries, history holds {}", sample.len(), self.dim)));
        }
        self.head = (self.head + 1) % self.cap;
        self.buf[self.head * self.dim..(self.head + 1) * self.dim].copy_from_slice(sample);
        self.pushes += 1;
        Ok(())
    }

    /// Sample `steps` back from the latest, saturating at the oldest slot.
    pub fn back(&self, steps: usize) -> &[f64] {
        let steps = steps.min(self.cap - 1);
        let idx = (self.head + self.cap - steps) % self.cap;
        &self.buf[idx * self.dim..(idx + 1) * self.dim]
    }

    /// Linearly interpolated value at time `t`, clamped to the stored window.
    pub fn value_at(&self, t: f64, out: &mut [f64]) -> Result<()> {
        if !self.primed {
            return Err(Error::UnprimedHistory);
        }
        let lag = (self.latest_time() - t) / self.dt;
        if lag <= 0.0 {
            out.copy_from_slice(self.back(0));
            return Ok(());
        }
        let max_lag = (self.cap - 1) as f64;
        if lag >= max_lag {
            out.copy_from_slice(self.back(self.cap - 1));
            return Ok(());
        }
        let i = lag.floor() as usize;
        let f = lag - i as f64;
        let (a, b) = (self.back(i), self.back(i + 1));
        for k in 0..self.dim {
            out[k] = a[k] + f * (b[k] - a[k]);
        }
        Ok(())
    }

    pub fn scalar_at(&self, t: f64) -> Result<f64> {
        let mut v = [0.0];
        self.value_at(t, &mut v)?;
        Ok(v[0])
    }
}
