//! Differentiable scorers `h(w; x)` with analytic parameter gradients.
//!
//! Sigmoid-output kinds (`LinearSigmoid`, `Mlp`) keep `h` inside `(0, 1)` and
//! are the ones the min-max optimizers accept. `LeakyRaw` is the unbounded
//! single-unit Leaky-ReLU scorer `h = act(wᵀx)` used by the PL audit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{dot_unchecked, norm2, standard_normal, Rng};

pub const DEFAULT_C1: f64 = 1.0;
pub const DEFAULT_C2: f64 = 0.01;
pub const DEFAULT_HIDDEN: usize = 16;

/// Largest double below one; sigmoid outputs are clamped to
/// `[f64::MIN_POSITIVE, SIGMOID_CEIL]` so they never saturate to exactly 0 or 1.
const SIGMOID_CEIL: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Arch {
    LinearSigmoid { dim: usize },
    LeakyRaw { dim: usize, c1: f64, c2: f64 },
    /// `sigmoid(w2 · act(W1 x + b1) + b2)`; parameters are laid out as
    /// `W1` (row-major, `hidden × dim`), `b1`, `w2`, `b2`.
    Mlp { dim: usize, hidden: usize, c1: f64, c2: f64 },
}

impl Arch {
    pub fn input_dim(&self) -> usize {
        match *self {
            Arch::LinearSigmoid { dim } | Arch::LeakyRaw { dim, .. } | Arch::Mlp { dim, .. } => dim,
        }
    }

    pub fn num_params(&self) -> usize {
        match *self {
            Arch::LinearSigmoid { dim } | Arch::LeakyRaw { dim, .. } => dim,
            Arch::Mlp { dim, hidden, .. } => hidden * dim + hidden + hidden + 1,
        }
    }

    pub fn is_sigmoid_output(&self) -> bool {
        !matches!(self, Arch::LeakyRaw { .. })
    }

    pub fn mlp(dim: usize) -> Self {
        Arch::Mlp {
            dim,
            hidden: DEFAULT_HIDDEN,
            c1: DEFAULT_C1,
            c2: DEFAULT_C2,
        }
    }

    pub fn leaky(dim: usize) -> Self {
        Arch::LeakyRaw {
            dim,
            c1: DEFAULT_C1,
            c2: DEFAULT_C2,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.input_dim() == 0 {
            return Err(Error::config("arch.dim", "must be at least 1"));
        }
        match *self {
            Arch::LeakyRaw { c1, c2, .. } | Arch::Mlp { c1, c2, .. } => {
                if !(c1 > 0.0 && c2 > 0.0) {
                    return Err(Error::config("arch.c1/c2", "slopes must be positive"));
                }
            }
            Arch::LinearSigmoid { .. } => {}
        }
        if let Arch::Mlp { hidden: 0, .. } = self {
            return Err(Error::config("arch.hidden", "must be at least 1"));
        }
        Ok(())
    }
}

#[inline]
fn leaky(z: f64, c1: f64, c2: f64) -> f64 {
    if z > 0.0 {
        c1 * z
    } else {
        c2 * z
    }
}

#[inline]
fn leaky_slope(z: f64, c1: f64, c2: f64) -> f64 {
    if z > 0.0 {
        c1
    } else {
        c2
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    let s = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, SIGMOID_CEIL)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreAndGrad {
    pub h: f64,
    pub grad_w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub arch: Arch,
    pub w: Vec<f64>,
}

impl ModelParams {
    pub fn new(arch: Arch, w: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if w.len() != arch.num_params() {
            return Err(Error::Dimension {
                expected: arch.num_params(),
                got: w.len(),
            });
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                step: 0,
                what: "non-finite model parameter".into(),
            });
        }
        Ok(ModelParams { arch, w })
    }

    pub fn zeros(arch: Arch) -> Result<Self> {
        Self::new(arch, vec![0.0; arch.num_params()])
    }

    /// Gaussian initialization with per-layer scale `1/sqrt(fan_in)`; biases start at 0.
    pub fn init(arch: Arch, rng: &mut Rng) -> Result<Self> {
        arch.validate()?;
        let w = match arch {
            Arch::LinearSigmoid { dim } | Arch::LeakyRaw { dim, .. } => {
                let s = 1.0 / (dim as f64).sqrt();
                (0..dim).map(|_| s * standard_normal(rng)).collect()
            }
            Arch::Mlp { dim, hidden, .. } => {
                let s1 = 1.0 / (dim as f64).sqrt();
                let s2 = 1.0 / (hidden as f64).sqrt();
                let mut w = Vec::with_capacity(arch.num_params());
                w.extend((0..hidden * dim).map(|_| s1 * standard_normal(rng)));
                w.extend(std::iter::repeat_n(0.0, hidden));
                w.extend((0..hidden).map(|_| s2 * standard_normal(rng)));
                w.push(0.0);
                w
            }
        };
        Ok(ModelParams { arch, w })
    }

    pub fn with_params(&self, w: Vec<f64>) -> Result<Self> {
        Self::new(self.arch, w)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arch.input_dim() {
            return Err(Error::Dimension {
                expected: self.arch.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.score(x))
    }

    pub fn forward_grad(&self, x: &[f64]) -> Result<ScoreAndGrad> {
        self.check_input(x)?;
        let mut grad_w = vec![0.0; self.w.len()];
        let h = self.score_grad_into(x, &mut grad_w);
        Ok(ScoreAndGrad { h, grad_w })
    }

    /// Unchecked forward pass; `x` must have the input dimension.
    pub(crate) fn score(&self, x: &[f64]) -> f64 {
        score_with(&self.arch, &self.w, x)
    }

    /// Unchecked forward + backward; overwrites `grad` with `∂h/∂w`.
    pub(crate) fn score_grad_into(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        score_grad_with(&self.arch, &self.w, x, grad)
    }

    /// Pre-sigmoid output for sigmoid-output kinds.
    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let h = self.score(x);
        match self.arch {
            Arch::LeakyRaw { .. } => Ok(h),
            _ => Ok((h / (1.0 - h)).ln()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: ModelParams = serde_json::from_str(s)?;
        Self::new(m.arch, m.w)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// Forward pass for parameters `w` of `arch`; dimensions are not checked.
pub(crate) fn score_with(arch: &Arch, w: &[f64], x: &[f64]) -> f64 {
    match *arch {
        Arch::LinearSigmoid { .. } => sigmoid(dot_unchecked(w, x)),
        Arch::LeakyRaw { c1, c2, .. } => leaky(dot_unchecked(w, x), c1, c2),
        Arch::Mlp { dim, hidden, c1, c2 } => {
            let (w1, rest) = w.split_at(hidden * dim);
            let (b1, rest) = rest.split_at(hidden);
            let (w2, b2) = rest.split_at(hidden);
            let mut z = b2[0];
            for j in 0..hidden {
                let pre = dot_unchecked(&w1[j * dim..(j + 1) * dim], x) + b1[j];
                z += w2[j] * leaky(pre, c1, c2);
            }
            sigmoid(z)
        }
    }
}

/// Forward + backward; overwrites `grad` with `∂h/∂w`. Dimensions are not checked.
pub(crate) fn score_grad_with(arch: &Arch, w: &[f64], x: &[f64], grad: &mut [f64]) -> f64 {
    match *arch {
        Arch::LinearSigmoid { .. } => {
            let h = sigmoid(dot_unchecked(w, x));
            let s = h * (1.0 - h);
            for (g, xi) in grad.iter_mut().zip(x) {
                *g = s * xi;
            }
            h
        }
        Arch::LeakyRaw { c1, c2, .. } => {
            let z = dot_unchecked(w, x);
            let s = leaky_slope(z, c1, c2);
            for (g, xi) in grad.iter_mut().zip(x) {
                *g = s * xi;
            }
            leaky(z, c1, c2)
        }
        Arch::Mlp { dim, hidden, c1, c2 } => {
            let (w1, rest) = w.split_at(hidden * dim);
            let (b1, rest) = rest.split_at(hidden);
            let (w2, b2) = rest.split_at(hidden);
            let mut pre = vec![0.0; hidden];
            let mut z = b2[0];
            for j in 0..hidden {
                pre[j] = dot_unchecked(&w1[j * dim..(j + 1) * dim], x) + b1[j];
                z += w2[j] * leaky(pre[j], c1, c2);
            }
            let h = sigmoid(z);
            let dz = h * (1.0 - h);
            let (gw1, grest) = grad.split_at_mut(hidden * dim);
            let (gb1, grest) = grest.split_at_mut(hidden);
            let (gw2, gb2) = grest.split_at_mut(hidden);
            gb2[0] = dz;
            for j in 0..hidden {
                gw2[j] = dz * leaky(pre[j], c1, c2);
                let dpre = dz * w2[j] * leaky_slope(pre[j], c1, c2);
                gb1[j] = dpre;
                for (g, xi) in gw1[j * dim..(j + 1) * dim].iter_mut().zip(x) {
                    *g = dpre * xi;
                }
            }
            h
        }
    }
}

/// `max_i ‖∇_w h(w; x_i)‖₂` over the dataset: an empirical lower bound on L̃.
pub fn lipschitz_estimate(m: &ModelParams, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyInput("lipschitz estimate needs data".into()));
    }
    let mut grad = vec![0.0; m.w.len()];
    let mut best = 0.0_f64;
    for e in &data.examples {
        m.check_input(&e.x)?;
        m.score_grad_into(&e.x, &mut grad);
        best = best.max(norm2(&grad));
    }
    Ok(best)
}
