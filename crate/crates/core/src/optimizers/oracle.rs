use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::norm2;
use crate::objective::pairwise_loss_and_grad;
use crate::parallel::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleParams {
    pub max_iters: usize,
    /// Stop once `‖∇P‖₂` falls below this.
    pub grad_tol: f64,
    pub init_step: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams {
            max_iters: 2000,
            grad_tol: 1e-10,
            init_step: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub model: ModelParams,
    pub loss: f64,
    pub grad_norm: f64,
    pub iters: usize,
}

/// Full-batch gradient descent on the pairwise square loss with Armijo
/// backtracking, starting from `init`. Returns the best iterate seen.
pub fn full_batch_oracle(init: &ModelParams, data: &Dataset, params: &OracleParams, exec: Exec) -> Result<OracleResult> {
    if params.max_iters == 0 || !(params.init_step > 0.0) {
        return Err(Error::config("oracle", "max_iters and init_step must be positive"));
    }
    let arch = init.arch;
    let mut w = init.w.clone();
    let (mut f, mut g) = pairwise_loss_and_grad(&arch, &w, data, exec)?;
    let mut step = params.init_step;
    let mut best = (f, w.clone(), norm2(&g));
    let mut iters = 0;
    while iters < params.max_iters {
        let gn = norm2(&g);
        if gn <= params.grad_tol {
            break;
        }
        iters += 1;
        let gn2 = gn * gn;
        let mut accepted = false;
        while step > 1e-20 {
            let trial: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - step * gi).collect();
            let (ft, gt) = pairwise_loss_and_grad(&arch, &trial, data, exec)?;
            if ft.is_finite() && ft <= f - 0.5 * step * gn2 {
                w = trial;
                f = ft;
                g = gt;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        if f < best.0 {
            best = (f, w.clone(), norm2(&g));
        }
        step *= 2.0;
    }
    Ok(OracleResult {
        model: ModelParams::new(arch, best.1)?,
        loss: best.0,
        grad_norm: best.2,
        iters,
    })
}
