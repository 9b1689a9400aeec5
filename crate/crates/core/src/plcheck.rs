//! Numerical checks of the Polyak-Łojasiewicz (PL) machinery.
//!
//! A function satisfies PL with constant `μ` when
//! `μ (f(w) − f*) ≤ ½ ‖∇f(w)‖²`, i.e. the ratio `2μ(f − f*)/‖∇f‖²` stays at
//! or below one. [`audit_pl`] evaluates that ratio on a set of probes.

use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Example, Task};
use crate::error::{Error, Result};
use crate::model::{Arch, ModelParams};
use crate::numerics::{derive_seed, norm2, seeded_rng, standard_normal, Rng};
use crate::objective::pairwise_loss_and_grad;
use crate::optimizers::{full_batch_oracle, OracleParams};
use crate::parallel::{map_slice, Exec};

/// Probes with gradient norm and suboptimality both below this are skipped.
pub const SKIP_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlReport {
    pub mu_claimed: f64,
    /// Largest `2μ(f − f*)/‖∇f‖²` over the evaluated probes.
    pub worst_ratio: f64,
    pub num_probes: usize,
    pub violations: usize,
    pub skipped: usize,
    pub tol: f64,
    /// Gradient bound on the scorer used to derive `mu_claimed`, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_tilde: Option<f64>,
}

impl PlReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("{v} must be positive and finite")))
    }
}

/// PL constant of the saddle objective in `(v, α)` given a PL constant
/// `mu_prime` of the pairwise objective in `w` and a bound `l_tilde` on
/// `‖∇_w h‖`.
pub fn mu_transfer(mu_prime: f64, l_tilde: f64, p: f64) -> Result<f64> {
    positive("mu_prime", mu_prime)?;
    positive("l_tilde", l_tilde)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::config("p", format!("{p} is outside (0, 1)")));
    }
    let lo = p.min(1.0 - p);
    let first = 1.0 / (2.0 * lo) + 2.0 * l_tilde * l_tilde / (mu_prime * lo * lo);
    Ok(1.0 / first.max(2.0 / mu_prime))
}

fn lambda_min(field: &str, m: &[Vec<f64>]) -> Result<f64> {
    let d = m.len();
    if d == 0 {
        return Err(Error::config(field, "empty matrix"));
    }
    for row in m {
        if row.len() != d {
            return Err(Error::config(field, "matrix is not square"));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::config(field, "non-finite entry"));
        }
    }
    let scale = m.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    for i in 0..d {
        for j in 0..i {
            if (m[i][j] - m[j][i]).abs() > 1e-12 * scale {
                return Err(Error::config(field, format!("not symmetric at ({i}, {j})")));
            }
        }
    }
    let mat = DMatrix::from_fn(d, d, |i, j| m[i][j]);
    let eig = mat.symmetric_eigen();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    // PSD input; round-off below zero is clipped.
    Ok(min.max(0.0))
}

/// PL constant of `E[(1 − σ(wᵀx) + σ(wᵀx′))²]` for a Leaky-ReLU `σ` with
/// slopes `c1` (positive side) and `c2`, given the uncentered second moments
/// of each class.
pub fn mu_one_hidden_layer(c1: f64, c2: f64, cov_pos: &[Vec<f64>], cov_neg: &[Vec<f64>]) -> Result<f64> {
    if !c1.is_finite() || !c2.is_finite() {
        return Err(Error::config("c1/c2", "slopes must be finite"));
    }
    if cov_pos.len() != cov_neg.len() {
        return Err(Error::Dimension {
            expected: cov_pos.len(),
            got: cov_neg.len(),
        });
    }
    let lp = lambda_min("cov_pos", cov_pos)?;
    let ln = lambda_min("cov_neg", cov_neg)?;
    Ok(2.0 * (c1 * c1).min(c2 * c2) * (lp + ln))
}

/// Evaluates the PL ratio at each probe. `f` returns value and gradient.
pub fn audit_pl<F>(f: F, probes: &[Vec<f64>], f_star: f64, mu: f64, tol: f64, exec: Exec) -> Result<PlReport>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)> + Sync + Send,
{
    positive("mu", mu)?;
    if !(tol >= 0.0) || !f_star.is_finite() {
        return Err(Error::config("tol", "tol must be nonnegative and f_star finite"));
    }
    let evals = map_slice(exec, probes, |w| f(w));
    let mut worst = 0.0f64;
    let mut violations = 0;
    let mut skipped = 0;
    for (i, r) in evals.into_iter().enumerate() {
        let (fv, g) = r?;
        let gap = fv - f_star;
        if gap < -tol {
            return Err(Error::config(
                "f_star",
                format!("probe {i} has f = {fv} below f_star = {f_star}"),
            ));
        }
        let gap = gap.max(0.0);
        let gn = norm2(&g);
        if gn < SKIP_EPS && gap < SKIP_EPS {
            skipped += 1;
            continue;
        }
        let ratio = if gn < SKIP_EPS {
            f64::INFINITY
        } else {
            2.0 * mu * gap / (gn * gn)
        };
        if ratio > 1.0 + tol {
            violations += 1;
        }
        worst = worst.max(ratio);
    }
    Ok(PlReport {
        mu_claimed: mu,
        worst_ratio: worst,
        num_probes: probes.len(),
        violations,
        skipped,
        tol,
        l_tilde: None,
    })
}

/// Points drawn uniformly from the Euclidean ball of the given radius.
pub fn ball_probes(n: usize, dim: usize, radius: f64, rng: &mut Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let dir: Vec<f64> = (0..dim).map(|_| standard_normal(rng)).collect();
            let nrm = norm2(&dir).max(f64::MIN_POSITIVE);
            let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
            dir.iter().map(|v| v * r / nrm).collect()
        })
        .collect()
}

/// Uncentered second moment `mean(x xᵀ)` of the examples with label `label`.
pub fn second_moment(d: &Dataset, label: i64) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; d.dim]; d.dim];
    let mut n = 0usize;
    for e in d.examples.iter().filter(|e| e.y == label) {
        n += 1;
        for i in 0..d.dim {
            for j in 0..d.dim {
                m[i][j] += e.x[i] * e.x[j];
            }
        }
    }
    let n = n.max(1) as f64;
    for row in &mut m {
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    m
}

/// Standard Gaussian inputs for both classes, balanced, with each class
/// re-centered so its empirical mean is exactly zero.
pub fn leaky_construction(n: usize, dim: usize, rng: &mut Rng) -> Result<Dataset> {
    if n < 4 || dim == 0 {
        return Err(Error::config("n", "need at least 4 examples and dim > 0"));
    }
    let mut examples: Vec<Example> = (0..n)
        .map(|i| {
            let x = (0..dim).map(|_| standard_normal(rng)).collect();
            Example::new(x, if i % 2 == 0 { 1 } else { -1 })
        })
        .collect();
    for label in [1, -1] {
        let mut mean = vec![0.0; dim];
        let mut cnt = 0.0;
        for e in examples.iter().filter(|e| e.y == label) {
            cnt += 1.0;
            for (m, x) in mean.iter_mut().zip(&e.x) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= cnt;
        }
        for e in examples.iter_mut().filter(|e| e.y == label) {
            for (x, m) in e.x.iter_mut().zip(&mean) {
                *x -= m;
            }
        }
    }
    Dataset::new(examples, dim, Task::Binary)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LeakyAuditParams {
    pub n: usize,
    pub dim: usize,
    pub c1: f64,
    pub c2: f64,
    /// `μ` is this fraction of the closed form on empirical moments.
    pub safety: f64,
    pub probes: usize,
    pub radius: f64,
    pub restarts: usize,
    pub oracle_iters: usize,
    pub tol: f64,
}

impl Default for LeakyAuditParams {
    fn default() -> Self {
        LeakyAuditParams {
            n: 2000,
            dim: 3,
            c1: 1.0,
            c2: 0.1,
            safety: 0.9,
            probes: 500,
            radius: 10.0,
            restarts: 20,
            oracle_iters: 5000,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakyAudit {
    pub report: PlReport,
    pub f_star: f64,
    pub mu_closed_form: f64,
    pub oracle_grad_norm: f64,
}

/// Full audit on the Leaky-ReLU construction: builds the data, finds `f*`
/// by multi-restart full-batch descent, and audits random probes.
pub fn leaky_audit(params: &LeakyAuditParams, seed: u64, exec: Exec) -> Result<LeakyAudit> {
    positive("safety", params.safety)?;
    positive("radius", params.radius)?;
    if params.restarts == 0 {
        return Err(Error::config("restarts", "must be at least 1"));
    }
    let mut rng = seeded_rng(derive_seed(seed, 0));
    let data = leaky_construction(params.n, params.dim, &mut rng)?;
    let arch = Arch::LeakyRaw {
        dim: params.dim,
        c1: params.c1,
        c2: params.c2,
    };
    let mu_cf = mu_one_hidden_layer(
        params.c1,
        params.c2,
        &second_moment(&data, 1),
        &second_moment(&data, -1),
    )?;

    let oracle = OracleParams {
        max_iters: params.oracle_iters,
        grad_tol: 1e-10,
        init_step: 1.0,
    };
    let mut init_rng = seeded_rng(derive_seed(seed, 1));
    let inits = ball_probes(params.restarts, params.dim, params.radius, &mut init_rng);
    let mut best: Option<(f64, f64)> = None;
    for w0 in inits {
        let out = full_batch_oracle(&ModelParams::new(arch, w0)?, &data, &oracle, exec)?;
        if best.is_none_or(|(f, _)| out.loss < f) {
            best = Some((out.loss, out.grad_norm));
        }
    }
    let (f_star, oracle_grad_norm) = best.expect("at least one restart");

    let mut probe_rng = seeded_rng(derive_seed(seed, 2));
    let probes = ball_probes(params.probes, params.dim, params.radius, &mut probe_rng);
    let mu = params.safety * mu_cf;
    let report = audit_pl(
        |w| pairwise_loss_and_grad(&arch, w, &data, Exec::Sequential),
        &probes,
        f_star,
        mu,
        params.tol,
        exec,
    )?;
    Ok(LeakyAudit {
        report,
        f_star,
        mu_closed_form: mu_cf,
        oracle_grad_norm,
    })
}
