//! Online estimates of the class prior `p` and of `p(1-p)`.
//!
//! Recurrences, with `j` the number of labels consumed before a batch of
//! size `m` and `S = Σ 1[y=1]` over that batch:
//!
//! ```text
//! p̂      = T₊ / (T₊ + T₋)
//! ȳ      ← ((j+2) ȳ + S) / (j+m+2)
//! pq̂     ← ((j+1) pq̂ + Σ (1[y=1] - ȳ)²) / (j+m+1)     (uses the updated ȳ)
//! ```
//!
//! All three start at zero. The stored `pq̂` is never clamped; clamping
//! happens in [`PriorTracker::snapshot`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::ClassPrior;

/// Lower clamp applied to `pq̂` when a snapshot is taken.
pub const PQ_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PriorTracker {
    pub t_plus: u64,
    pub t_minus: u64,
    pub p_hat: f64,
    pub y_bar: f64,
    pub pq_hat: f64,
    pub j: u64,
}

/// A prior snapshot plus whether `pq̂` had to be clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snapshot {
    pub prior: ClassPrior,
    pub clamped: bool,
}

impl PriorTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, batch: &[i64]) -> Result<()> {
        let mut pos = 0u64;
        for &y in batch {
            match y {
                1 => pos += 1,
                -1 => {}
                other => {
                    return Err(Error::Label {
                        label: other,
                        domain: "{-1, +1}".into(),
                    })
                }
            }
        }
        let m = batch.len() as u64;
        if m == 0 {
            return Ok(());
        }
        self.t_plus += pos;
        self.t_minus += m - pos;
        self.p_hat = self.t_plus as f64 / (self.t_plus + self.t_minus) as f64;
        let j = self.j as f64;
        let mf = m as f64;
        self.y_bar = ((j + 2.0) * self.y_bar + pos as f64) / (j + mf + 2.0);
        let dev_pos = 1.0 - self.y_bar;
        let dev_neg = -self.y_bar;
        let sq = pos as f64 * dev_pos * dev_pos + (m - pos) as f64 * dev_neg * dev_neg;
        self.pq_hat = ((j + 1.0) * self.pq_hat + sq) / (j + mf + 1.0);
        self.j += m;
        Ok(())
    }

    pub fn is_ready(&self) -> bool {
        self.t_plus > 0 && self.t_minus > 0
    }

    /// Immutable plug-in prior; `pq̂` is clamped into `[PQ_FLOOR, 0.25]`.
    pub fn snapshot(&self) -> Result<Snapshot> {
        if !self.is_ready() {
            return Err(Error::EstimatorNotReady(format!(
                "seen {} positives and {} negatives",
                self.t_plus, self.t_minus
            )));
        }
        let clamped_pq = self.pq_hat.clamp(PQ_FLOOR, 0.25);
        Ok(Snapshot {
            prior: ClassPrior::with_pq(self.p_hat, clamped_pq)?,
            clamped: clamped_pq != self.pq_hat,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
