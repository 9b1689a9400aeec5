use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const CSV_HEADER: &str = "step,stage,samples,train_auc,test_auc,pairwise_loss,elapsed_s";

/// One evaluation point. Metrics are `None` when no dataset was supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u64,
    pub stage: usize,
    pub samples: u64,
    pub train_auc: Option<f64>,
    pub test_auc: Option<f64>,
    pub pairwise_loss: Option<f64>,
    pub elapsed_s: f64,
    /// Whether the record is for a stage average rather than the current iterate.
    pub averaged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub step: u64,
    pub stage: usize,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub k: usize,
    pub eta: f64,
    /// Number of points in the stage average.
    pub points: u64,
    pub m_k: u64,
    pub alpha_bar: f64,
    pub samples_end: u64,
}

/// Per-stage record for PPD-AdaGrad; `s_final` and `s_prev` are the
/// cumulative gradient norms after `t_k` and `t_k - 1` gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaGradStageLog {
    pub k: usize,
    pub t_k: u64,
    pub delta: f64,
    pub m_big: Option<f64>,
    pub c: Option<f64>,
    pub l_tilde: Option<f64>,
    pub s_final: Vec<f64>,
    pub s_prev: Vec<f64>,
    pub capped: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub run_id: String,
    pub records: Vec<TraceRecord>,
    pub events: Vec<TraceEvent>,
    pub stages: Vec<StageLog>,
    pub adagrad: Vec<AdaGradStageLog>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunTrace {
    pub fn new(run_id: impl Into<String>) -> Self {
        RunTrace {
            run_id: run_id.into(),
            ..Self::default()
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.step,
                r.stage,
                r.samples,
                opt(r.train_auc),
                opt(r.test_auc),
                opt(r.pairwise_loss),
                r.elapsed_s
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Samples consumed at the first record whose test AUC reaches `target`.
    pub fn samples_to_target(&self, target: f64) -> Option<u64> {
        self.records
            .iter()
            .find(|r| r.test_auc.is_some_and(|a| a >= target))
            .map(|r| r.samples)
    }

    pub fn last_record(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn events_of(&self, kind: &str) -> impl Iterator<Item = &TraceEvent> {
        let kind = kind.to_string();
        self.events.iter().filter(move |e| e.kind == kind)
    }
}
