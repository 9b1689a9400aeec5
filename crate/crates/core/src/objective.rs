//! The saddle-point AUC objective.
//!
//! For a scorer `h(w; x)` and class prior `p = Pr(y = 1)`, the per-sample
//! function is
//!
//! ```text
//! F(w, a, b, α; z) = (1-p)(h-a)² 1[y=1] + p(h-b)² 1[y=-1]
//!                  + 2(1+α)(p h 1[y=-1] - (1-p) h 1[y=1]) - p(1-p) α²
//! ```
//!
//! Minimizing over `(w, a, b)` and maximizing over `α` the expectation of
//! `F` is equivalent to minimizing the pairwise square loss
//! `E[(1 - h(x⁺) + h(x⁻))²]`. On a finite dataset the identity is exact with
//! `p` replaced by the empirical positive fraction;
//! [`saddle_equivalence_check`] evaluates its residual.
//!
//! When the prior is estimated online the `α²` coefficient is the separate
//! estimate [`ClassPrior::p_times_q`], not `p(1-p)`.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Example, Task};
use crate::error::{Error, Result};
use crate::eval::{auc_binary_with, Ties};
use crate::model::{score_grad_with, score_with, Arch, ModelParams};
use crate::parallel::{map_indexed, map_slice, Exec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassPrior {
    pub p: f64,
    /// Estimate of `p(1-p)`; equals it exactly for a known prior.
    pub p_times_q: f64,
}

impl ClassPrior {
    pub fn new(p: f64) -> Result<Self> {
        Self::with_pq(p, p * (1.0 - p))
    }

    pub fn with_pq(p: f64, p_times_q: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::config("p", format!("{p} is outside (0, 1)")));
        }
        if !(p_times_q > 0.0 && p_times_q <= 0.25) {
            return Err(Error::config(
                "p_times_q",
                format!("{p_times_q} is outside (0, 0.25]"),
            ));
        }
        Ok(ClassPrior { p, p_times_q })
    }

    /// Empirical positive fraction of a binary dataset.
    pub fn from_dataset(d: &Dataset) -> Result<Self> {
        let (pos, neg) = d.class_counts();
        if pos == 0 || neg == 0 {
            return Err(Error::ClassMissing(format!(
                "prior needs both classes (pos={pos}, neg={neg})"
            )));
        }
        Self::new(pos as f64 / d.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalDualState {
    pub w: Vec<f64>,
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
}

impl PrimalDualState {
    pub fn new(w: Vec<f64>) -> Self {
        PrimalDualState {
            w,
            a: 0.0,
            b: 0.0,
            alpha: 0.0,
        }
    }

    /// `u = (w, a, b, α)` as one vector of length `|w| + 3`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut u = Vec::with_capacity(self.w.len() + 3);
        u.extend_from_slice(&self.w);
        u.extend([self.a, self.b, self.alpha]);
        u
    }

    pub fn from_flat(u: &[f64]) -> Self {
        let n = u.len() - 3;
        PrimalDualState {
            w: u[..n].to_vec(),
            a: u[n],
            b: u[n + 1],
            alpha: u[n + 2],
        }
    }

    pub fn model(&self, arch: Arch) -> Result<ModelParams> {
        ModelParams::new(arch, self.w.clone())
    }
}

/// Value and partial derivatives of `F` with respect to `(h, a, b, α)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Partials {
    pub loss: f64,
    pub d_h: f64,
    pub d_a: f64,
    pub d_b: f64,
    pub d_alpha: f64,
}

/// Shared kernel for the binary and pairwise multi-class objectives.
///
/// `weight_pos` multiplies the squared term of the "positive" side
/// (`1-p` in the binary case, `p_j` for the pair `(i, j)`), `weight_neg` that
/// of the "negative" side, and `quad` is the coefficient of `α²`.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn partials(
    h: f64,
    is_pos: bool,
    is_neg: bool,
    a: f64,
    b: f64,
    alpha: f64,
    weight_pos: f64,
    weight_neg: f64,
    quad: f64,
) -> Partials {
    let ip = f64::from(u8::from(is_pos));
    let ineg = f64::from(u8::from(is_neg));
    let ra = h - a;
    let rb = h - b;
    let lin = weight_neg * ineg - weight_pos * ip;
    Partials {
        loss: weight_pos * ra * ra * ip + weight_neg * rb * rb * ineg + 2.0 * (1.0 + alpha) * lin * h
            - quad * alpha * alpha,
        d_h: 2.0 * weight_pos * ra * ip + 2.0 * weight_neg * rb * ineg + 2.0 * (1.0 + alpha) * lin,
        d_a: -2.0 * weight_pos * ra * ip,
        d_b: -2.0 * weight_neg * rb * ineg,
        d_alpha: 2.0 * lin * h - 2.0 * quad * alpha,
    }
}

fn binary_side(y: i64) -> Result<(bool, bool)> {
    match y {
        1 => Ok((true, false)),
        -1 => Ok((false, true)),
        other => Err(Error::Label {
            label: other,
            domain: "{-1, +1}".into(),
        }),
    }
}

#[inline]
pub(crate) fn binary_partials(h: f64, y: i64, a: f64, b: f64, alpha: f64, prior: &ClassPrior) -> Result<Partials> {
    let (is_pos, is_neg) = binary_side(y)?;
    Ok(partials(h, is_pos, is_neg, a, b, alpha, 1.0 - prior.p, prior.p, prior.p_times_q))
}

fn check_dims(arch: &Arch, w: &[f64], x: &[f64]) -> Result<()> {
    if w.len() != arch.num_params() {
        return Err(Error::Dimension {
            expected: arch.num_params(),
            got: w.len(),
        });
    }
    if x.len() != arch.input_dim() {
        return Err(Error::Dimension {
            expected: arch.input_dim(),
            got: x.len(),
        });
    }
    Ok(())
}

pub fn loss_f(s: &PrimalDualState, prior: &ClassPrior, z: &Example, arch: &Arch) -> Result<f64> {
    check_dims(arch, &s.w, &z.x)?;
    let h = score_with(arch, &s.w, &z.x);
    Ok(binary_partials(h, z.y, s.a, s.b, s.alpha, prior)?.loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VGrad {
    pub w: Vec<f64>,
    pub a: f64,
    pub b: f64,
}

/// `∇_(w,a,b) F` at one sample.
pub fn grad_v(s: &PrimalDualState, prior: &ClassPrior, z: &Example, arch: &Arch) -> Result<VGrad> {
    check_dims(arch, &s.w, &z.x)?;
    let mut gw = vec![0.0; s.w.len()];
    let h = score_grad_with(arch, &s.w, &z.x, &mut gw);
    let d = binary_partials(h, z.y, s.a, s.b, s.alpha, prior)?;
    for g in &mut gw {
        *g *= d.d_h;
    }
    Ok(VGrad {
        w: gw,
        a: d.d_a,
        b: d.d_b,
    })
}

/// `∂F/∂α` at one sample.
pub fn grad_alpha(s: &PrimalDualState, prior: &ClassPrior, z: &Example, arch: &Arch) -> Result<f64> {
    check_dims(arch, &s.w, &z.x)?;
    let h = score_with(arch, &s.w, &z.x);
    Ok(binary_partials(h, z.y, s.a, s.b, s.alpha, prior)?.d_alpha)
}

/// Adds `scale · (∇_v F, ∂F/∂α)` at flat state `u = (w, a, b, α)` into `out`.
///
/// `scratch` must have length `|w|`. Dimensions are the caller's contract.
pub(crate) fn accumulate_sample_grad(
    arch: &Arch,
    u: &[f64],
    prior: &ClassPrior,
    z: &Example,
    scale: f64,
    out: &mut [f64],
    scratch: &mut [f64],
) -> Result<f64> {
    let n = u.len() - 3;
    let h = score_grad_with(arch, &u[..n], &z.x, scratch);
    let d = binary_partials(h, z.y, u[n], u[n + 1], u[n + 2], prior)?;
    let c = scale * d.d_h;
    for (o, g) in out[..n].iter_mut().zip(scratch.iter()) {
        *o += c * g;
    }
    out[n] += scale * d.d_a;
    out[n + 1] += scale * d.d_b;
    out[n + 2] += scale * d.d_alpha;
    Ok(h)
}

/// Average of `F` over a dataset.
pub fn mean_loss_f(s: &PrimalDualState, prior: &ClassPrior, d: &Dataset, arch: &Arch, exec: Exec) -> Result<f64> {
    if d.is_empty() {
        return Err(Error::EmptyInput("mean loss over empty dataset".into()));
    }
    let terms = map_slice(exec, &d.examples, |z| loss_f(s, prior, z, arch));
    let mut total = 0.0;
    for t in terms {
        total += t?;
    }
    Ok(total / d.len() as f64)
}

fn split_scores(m: &ModelParams, d: &Dataset, exec: Exec) -> Result<(Vec<f64>, Vec<f64>)> {
    if d.task != Task::Binary {
        return Err(Error::Unsupported("binary objective on multi-class data".into()));
    }
    let (pos, neg) = crate::eval::class_scores(m, d, exec)?;
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::ClassMissing(format!(
            "need at least one positive and one negative (pos={}, neg={})",
            pos.len(),
            neg.len()
        )));
    }
    Ok((pos, neg))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Empirical inner optima `a* = E[h|y=1]`, `b* = E[h|y=-1]`, `α* = b* - a*`.
pub fn optimal_ab_alpha(m: &ModelParams, d: &Dataset) -> Result<(f64, f64, f64)> {
    let (pos, neg) = split_scores(m, d, Exec::Sequential)?;
    let a = mean(&pos);
    let b = mean(&neg);
    Ok((a, b, b - a))
}

/// Mean of `(1 - h(x⁺) + h(x⁻))²` over all positive/negative pairs,
/// evaluated pair by pair.
pub fn pairwise_auc_loss(m: &ModelParams, d: &Dataset) -> Result<f64> {
    pairwise_auc_loss_with(m, d, Exec::default())
}

pub fn pairwise_auc_loss_with(m: &ModelParams, d: &Dataset, exec: Exec) -> Result<f64> {
    let (pos, neg) = split_scores(m, d, exec)?;
    let rows = map_indexed(exec, pos.len(), |i| {
        let hp = pos[i];
        neg.iter()
            .map(|hn| {
                let r = 1.0 - hp + hn;
                r * r
            })
            .sum::<f64>()
    });
    let total: f64 = rows.into_iter().sum();
    Ok(total / (pos.len() as f64 * neg.len() as f64))
}

/// Pairwise square loss from class-conditional moments, in `O(n)`:
/// `1 + Var⁺ + Var⁻ + (m⁺ - m⁻)² - 2m⁺ + 2m⁻`.
pub fn pairwise_loss_from_scores(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::ClassMissing("pairwise loss needs both classes".into()));
    }
    let mp = mean(pos);
    let mn = mean(neg);
    let vp = pos.iter().map(|h| (h - mp) * (h - mp)).sum::<f64>() / pos.len() as f64;
    let vn = neg.iter().map(|h| (h - mn) * (h - mn)).sum::<f64>() / neg.len() as f64;
    let gap = 1.0 - mp + mn;
    Ok(vp + vn + gap * gap)
}

/// Full-batch pairwise square loss `Var⁺ + Var⁻ + (1 - m⁺ + m⁻)²` and its
/// gradient in `w`.
///
/// With `g = 1 - m⁺ + m⁻`, a positive contributes `2(h - m⁺ - g)∇h / n⁺`
/// and a negative `2(h - m⁻ + g)∇h / n⁻`.
pub fn pairwise_loss_and_grad(arch: &Arch, w: &[f64], d: &Dataset, exec: Exec) -> Result<(f64, Vec<f64>)> {
    if w.len() != arch.num_params() {
        return Err(Error::Dimension {
            expected: arch.num_params(),
            got: w.len(),
        });
    }
    if d.dim != arch.input_dim() {
        return Err(Error::Dimension {
            expected: arch.input_dim(),
            got: d.dim,
        });
    }
    let (n_pos, n_neg) = d.class_counts();
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::ClassMissing(format!(
            "pairwise loss needs both classes (pos={n_pos}, neg={n_neg})"
        )));
    }
    let scores = map_slice(exec, &d.examples, |z| score_with(arch, w, &z.x));
    let (mut sp, mut sn) = (0.0, 0.0);
    for (h, z) in scores.iter().zip(&d.examples) {
        if z.y == 1 {
            sp += h;
        } else {
            sn += h;
        }
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    let (mp, mn) = (sp / np, sn / nn);
    let gap = 1.0 - mp + mn;
    let (mut vp, mut vn) = (0.0, 0.0);
    for (h, z) in scores.iter().zip(&d.examples) {
        if z.y == 1 {
            vp += (h - mp) * (h - mp);
        } else {
            vn += (h - mn) * (h - mn);
        }
    }
    // Fixed-size chunks summed in order keep the result independent of `exec`.
    const CHUNK: usize = 256;
    let chunks = d.len().div_ceil(CHUNK);
    let partial = map_indexed(exec, chunks, |c| {
        let mut acc = vec![0.0; w.len()];
        let mut g = vec![0.0; w.len()];
        for i in c * CHUNK..((c + 1) * CHUNK).min(d.len()) {
            let z = &d.examples[i];
            let h = score_grad_with(arch, w, &z.x, &mut g);
            let coef = if z.y == 1 {
                2.0 * (h - mp - gap) / np
            } else {
                2.0 * (h - mn + gap) / nn
            };
            for (o, gi) in acc.iter_mut().zip(&g) {
                *o += coef * gi;
            }
        }
        acc
    });
    let mut grad = vec![0.0; w.len()];
    for acc in partial {
        for (o, a) in grad.iter_mut().zip(&acc) {
            *o += a;
        }
    }
    Ok((vp / np + vn / nn + gap * gap, grad))
}

/// `|P(w) - 1 - mean_F(w, a*, b*, α*) / (p̂(1-p̂))|` on the empirical measure.
pub fn saddle_equivalence_check(m: &ModelParams, d: &Dataset) -> Result<f64> {
    let pairwise = pairwise_auc_loss(m, d)?;
    let prior = ClassPrior::from_dataset(d)?;
    let (a, b, alpha) = optimal_ab_alpha(m, d)?;
    let state = PrimalDualState {
        w: m.w.clone(),
        a,
        b,
        alpha,
    };
    let mean_f = mean_loss_f(&state, &prior, d, &m.arch, Exec::default())?;
    Ok((pairwise - 1.0 - mean_f / prior.p_times_q).abs())
}

/// One scorer per class plus `c × c` auxiliary matrices (diagonal unused).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiClassState {
    pub w: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub alpha: Vec<Vec<f64>>,
    pub priors: Vec<f64>,
}

impl MultiClassState {
    /// Zero auxiliary matrices around the given per-class parameters.
    pub fn new(w: Vec<Vec<f64>>, priors: Vec<f64>) -> Result<Self> {
        let c = w.len();
        if c < 2 || priors.len() != c {
            return Err(Error::config("priors", "need c >= 2 classes and one prior each"));
        }
        let total: f64 = priors.iter().sum();
        if priors.iter().any(|&q| q < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::config("priors", "must be nonnegative and sum to 1"));
        }
        let zeros = vec![vec![0.0; c]; c];
        Ok(MultiClassState {
            w,
            a: zeros.clone(),
            b: zeros.clone(),
            alpha: zeros,
            priors,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.w.len()
    }

    fn check_pair(&self, i: usize, j: usize) -> Result<()> {
        let c = self.num_classes();
        if i == j || i >= c || j >= c {
            return Err(Error::Index { i, j });
        }
        Ok(())
    }
}

fn multiclass_partials(
    state: &MultiClassState,
    i: usize,
    j: usize,
    h: f64,
    y: i64,
) -> Partials {
    let (pi, pj) = (state.priors[i], state.priors[j]);
    partials(
        h,
        y == i as i64,
        y == j as i64,
        state.a[i][j],
        state.b[i][j],
        state.alpha[i][j],
        pj,
        pi,
        pi * pj,
    )
}

/// `F_ij(w_i, a_ij, b_ij, α_ij; z)` for the ordered class pair `(i, j)`.
pub fn multiclass_loss_fij(state: &MultiClassState, i: usize, j: usize, z: &Example, arch: &Arch) -> Result<f64> {
    state.check_pair(i, j)?;
    check_dims(arch, &state.w[i], &z.x)?;
    let h = score_with(arch, &state.w[i], &z.x);
    Ok(multiclass_partials(state, i, j, h, z.y).loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairGrad {
    pub w_i: Vec<f64>,
    pub a_ij: f64,
    pub b_ij: f64,
    pub alpha_ij: f64,
}

/// Gradients of `F_ij` with respect to `w_i`, `a_ij`, `b_ij` and `α_ij`.
pub fn multiclass_grads(state: &MultiClassState, i: usize, j: usize, z: &Example, arch: &Arch) -> Result<PairGrad> {
    state.check_pair(i, j)?;
    check_dims(arch, &state.w[i], &z.x)?;
    let mut gw = vec![0.0; state.w[i].len()];
    let h = score_grad_with(arch, &state.w[i], &z.x, &mut gw);
    let d = multiclass_partials(state, i, j, h, z.y);
    for g in &mut gw {
        *g *= d.d_h;
    }
    Ok(PairGrad {
        w_i: gw,
        a_ij: d.d_a,
        b_ij: d.d_b,
        alpha_ij: d.d_alpha,
    })
}

/// `1/(c(c-1)) Σ_i Σ_{j≠i} F_ij` at one sample.
pub fn multiclass_objective(state: &MultiClassState, z: &Example, arch: &Arch) -> Result<f64> {
    let c = state.num_classes();
    let mut total = 0.0;
    for i in 0..c {
        for j in (0..c).filter(|&j| j != i) {
            total += multiclass_loss_fij(state, i, j, z, arch)?;
        }
    }
    Ok(total / (c * (c - 1)) as f64)
}

/// One-vs-one averaged AUC: mean over ordered class pairs `(i, j)` of
/// `Pr(h_i(x) > h_i(x') | y=i, y'=j)` with ties per `ties`.
pub fn multiclass_auc(models: &[ModelParams], d: &Dataset, ties: Ties) -> Result<f64> {
    let c = models.len();
    if c < 2 || d.num_classes() != c {
        return Err(Error::config(
            "models",
            format!("{c} scorers for a {}-class dataset", d.num_classes()),
        ));
    }
    let labels: Vec<usize> = d
        .examples
        .iter()
        .map(|e| match d.task {
            Task::Binary => usize::from(e.y != 1),
            Task::MultiClass { .. } => e.y as usize,
        })
        .collect();
    let mut total = 0.0;
    for (i, m) in models.iter().enumerate() {
        if let Some(e) = d.examples.first() {
            m.forward(&e.x)?;
        }
        let scores: Vec<f64> = d.examples.iter().map(|e| m.score(&e.x)).collect();
        let of_class = |k: usize| -> Vec<f64> {
            scores
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == k)
                .map(|(s, _)| *s)
                .collect()
        };
        let own = of_class(i);
        for j in (0..c).filter(|&j| j != i) {
            let other = of_class(j);
            if own.is_empty() || other.is_empty() {
                return Err(Error::ClassMissing(format!("class pair ({i}, {j}) not represented")));
            }
            total += auc_binary_with(&own, &other, ties)?;
        }
    }
    Ok(total / (c * (c - 1)) as f64)
}

/// Softmax over the pre-sigmoid outputs of `c` heads; the scores sum to 1.
pub fn softmax_scores(models: &[ModelParams], x: &[f64]) -> Result<Vec<f64>> {
    let logits = models.iter().map(|m| m.logit(x)).collect::<Result<Vec<_>>>()?;
    let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}
