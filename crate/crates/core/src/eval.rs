//! Ranking metrics.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::objective::pairwise_loss_from_scores;
use crate::parallel::{map_slice, Exec};

/// How a positive/negative score tie is counted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ties {
    /// Mann-Whitney convention: a tie counts 1/2.
    #[default]
    Half,
    /// `Pr(s⁺ ≥ s⁻)`: a tie counts 1.
    Inclusive,
}

/// Binary AUC with ties counted 1/2.
pub fn auc_binary(scores_pos: &[f64], scores_neg: &[f64]) -> Result<f64> {
    auc_binary_with(scores_pos, scores_neg, Ties::Half)
}

/// Sort-and-rank AUC in `O(n log n)`.
pub fn auc_binary_with(scores_pos: &[f64], scores_neg: &[f64], ties: Ties) -> Result<f64> {
    if scores_pos.is_empty() || scores_neg.is_empty() {
        return Err(Error::ClassMissing(format!(
            "auc needs both classes (pos={}, neg={})",
            scores_pos.len(),
            scores_neg.len()
        )));
    }
    if scores_pos.iter().chain(scores_neg).any(|s| s.is_nan()) {
        return Err(Error::Numeric {
            step: 0,
            what: "NaN score".into(),
        });
    }
    let mut neg = scores_neg.to_vec();
    neg.sort_unstable_by(f64::total_cmp);
    let mut pos = scores_pos.to_vec();
    pos.sort_unstable_by(f64::total_cmp);

    // Walk positives in ascending order, tracking how many negatives lie
    // strictly below / at the current score. Counts are integers, so the
    // result is exact up to the final division.
    let (mut below, mut upto) = (0usize, 0usize);
    let (mut wins, mut tied) = (0u128, 0u128);
    for &s in &pos {
        while below < neg.len() && neg[below] < s {
            below += 1;
        }
        upto = upto.max(below);
        while upto < neg.len() && neg[upto] <= s {
            upto += 1;
        }
        wins += below as u128;
        tied += (upto - below) as u128;
    }
    let denom = pos.len() as f64 * neg.len() as f64;
    let num = match ties {
        Ties::Half => wins as f64 + 0.5 * tied as f64,
        Ties::Inclusive => (wins + tied) as f64,
    };
    Ok(num / denom)
}

/// Scores of a model on a binary dataset, split by class.
pub fn class_scores(m: &ModelParams, d: &Dataset, exec: Exec) -> Result<(Vec<f64>, Vec<f64>)> {
    if let Some(e) = d.examples.first() {
        m.forward(&e.x)?;
    }
    let scores = map_slice(exec, &d.examples, |e| m.score(&e.x));
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (s, e) in scores.into_iter().zip(&d.examples) {
        if e.y == 1 {
            pos.push(s);
        } else {
            neg.push(s);
        }
    }
    Ok((pos, neg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSnapshot {
    pub auc: f64,
    pub pairwise_loss: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub step: u64,
}

/// AUC and mean pairwise squared loss of `m` on `d`.
pub fn evaluate(m: &ModelParams, d: &Dataset, step: u64, exec: Exec) -> Result<MetricSnapshot> {
    let (pos, neg) = class_scores(m, d, exec)?;
    let auc = auc_binary(&pos, &neg)?;
    let pairwise_loss = pairwise_loss_from_scores(&pos, &neg)?;
    Ok(MetricSnapshot {
        auc,
        pairwise_loss,
        n_pos: pos.len(),
        n_neg: neg.len(),
        step,
    })
}
