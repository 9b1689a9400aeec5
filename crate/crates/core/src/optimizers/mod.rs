//! Stochastic min-max solvers for the saddle-point AUC objective.
//!
//! All solvers work on the flat vector `u = (w, a, b, α)`; the primal part
//! `v = (w, a, b)` is everything but the last coordinate. One run is a
//! sequential chain of updates driven by a [`StreamSource`]; data-parallel
//! work is limited to evaluation and minibatch scoring.
//!
//! * [`ppd_sg_run`]: stagewise proximal primal-dual SGD with geometric decay
//!   and a minibatch restart of `α` at every stage end.
//! * [`ppd_adagrad_run`]: the same outer loop with a diagonal AdaGrad
//!   dual-averaging inner solver and a data-adaptive stage length.
//! * [`pga_run`]: polynomial decay, ball projections, averaged dual.
//! * [`oauc_run`]: single-loop primal-dual SGD.
//! * [`ce_sgd_run`]: cross-entropy SGD on the scorer output.

mod baselines;
mod oracle;
mod ppd;
mod schedule;
mod trace;

use std::time::Instant;

pub use baselines::{ce_sgd_run, oauc_run, pga_run, project_ball, CeParams, OaucParams, PgaParams, StepRule};
pub use oracle::{full_batch_oracle, OracleParams, OracleResult};
pub use ppd::{adagrad_update, ppd_adagrad_run, ppd_sg_run, stopping_rule_holds, AdaGradInnerState};
pub use schedule::{
    constant_c, schedule_pga, schedule_practical, schedule_theoretical, stage_plan, Mode, ScheduleParams, StageLength,
    StagePlan, Variant,
};
pub use trace::{AdaGradStageLog, RunTrace, StageLog, TraceEvent, TraceRecord, CSV_HEADER};

use crate::data::{Dataset, Example, StreamSource};
use crate::error::{Error, Result};
use crate::eval::{auc_binary, class_scores};
use crate::model::{score_grad_with, Arch, ModelParams};
use crate::numerics::{all_finite, norm2, norm_inf};
use crate::objective::{accumulate_sample_grad, pairwise_loss_from_scores, ClassPrior, PrimalDualState};
use crate::parallel::Exec;
use crate::streaming::PriorTracker;

/// Where the `p`-dependent coefficients of `F` come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorMode {
    Known(ClassPrior),
    /// Online estimates, frozen before each sample (or minibatch) is consumed.
    /// `fallback` is used until both classes have been seen.
    Streaming { fallback: ClassPrior },
}

/// Run-level options shared by every solver.
#[derive(Debug, Clone)]
pub struct RunOptions<'a> {
    pub prior: PriorMode,
    /// Samples per stochastic gradient.
    pub batch: usize,
    /// Evaluate the current iterate every `eval_every` gradients; 0 disables.
    pub eval_every: u64,
    pub train: Option<&'a Dataset>,
    pub test: Option<&'a Dataset>,
    pub exec: Exec,
    /// Record wall-clock seconds; otherwise `elapsed_s` is 0 so traces are
    /// byte-reproducible.
    pub wall_clock: bool,
    /// Seed for randomness outside the stream (PGA's output stage).
    pub seed: u64,
    /// Samples drawn to estimate missing constants.
    pub calibration: usize,
    pub run_id: String,
}

impl<'a> RunOptions<'a> {
    pub fn new(prior: PriorMode) -> Self {
        RunOptions {
            prior,
            batch: 1,
            eval_every: 0,
            train: None,
            test: None,
            exec: Exec::default(),
            wall_clock: false,
            seed: 0,
            calibration: 100,
            run_id: "run".into(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::config("batch", "must be at least 1"));
        }
        if self.calibration == 0 {
            return Err(Error::config("calibration", "must be at least 1"));
        }
        Ok(())
    }
}

/// Final state, its model, and the trace. For cross-entropy SGD the
/// auxiliary `a, b, α` are left at zero.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: PrimalDualState,
    pub model: ModelParams,
    pub trace: RunTrace,
}

/// Constants estimated from a calibration sample at a fixed state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    /// `max ‖ĝ‖∞` with `ĝ = (∇_v F, -∂F/∂α)`.
    pub grad_inf: f64,
    /// `max ‖ĝ‖₂`.
    pub grad_bound: f64,
    /// `max ‖∇_w h‖₂`.
    pub l_tilde: f64,
    /// Larger of the two class-conditional score variances.
    pub sigma2: f64,
}

pub(crate) fn check_model(model: &ModelParams, dim: usize, require_sigmoid: bool) -> Result<()> {
    if model.arch.input_dim() != dim {
        return Err(Error::Dimension {
            expected: model.arch.input_dim(),
            got: dim,
        });
    }
    if require_sigmoid && !model.arch.is_sigmoid_output() {
        return Err(Error::Unsupported(
            "the saddle-point solvers need a sigmoid-output model".into(),
        ));
    }
    Ok(())
}

/// Dual restart `ᾱ = mean h(x⁻) − mean h(x⁺)` over `batch`; `None` when a
/// class is absent.
pub fn dual_restart_estimate(model: &ModelParams, batch: Vec<Example>, exec: Exec) -> Result<Option<f64>> {
    let d = Dataset {
        examples: batch,
        dim: model.arch.input_dim(),
        task: crate::data::Task::Binary,
    };
    let (pos, neg) = class_scores(model, &d, exec)?;
    if pos.is_empty() || neg.is_empty() {
        return Ok(None);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(Some(mean(&neg) - mean(&pos)))
}

/// Bookkeeping shared by all solvers: counters, prior, trace, evaluation.
pub(crate) struct Ctx<'o, 'a> {
    pub opts: &'o RunOptions<'a>,
    pub arch: Arch,
    pub tracker: PriorTracker,
    pub trace: RunTrace,
    pub step: u64,
    pub samples: u64,
    pub stage: usize,
    start: Instant,
    warned_not_ready: bool,
    warned_clamp: bool,
    pub scratch: Vec<f64>,
}

impl<'o, 'a> Ctx<'o, 'a> {
    pub fn new(opts: &'o RunOptions<'a>, arch: Arch) -> Result<Self> {
        opts.validate()?;
        Ok(Ctx {
            opts,
            arch,
            tracker: PriorTracker::new(),
            trace: RunTrace::new(opts.run_id.clone()),
            step: 0,
            samples: 0,
            stage: 0,
            start: Instant::now(),
            warned_not_ready: false,
            warned_clamp: false,
            scratch: vec![0.0; arch.num_params()],
        })
    }

    pub fn event(&mut self, kind: &str, message: impl Into<String>) {
        self.trace.events.push(TraceEvent {
            step: self.step,
            stage: self.stage,
            kind: kind.into(),
            message: message.into(),
        });
    }

    /// The prior to plug into `F` for the next sample.
    pub fn prior(&mut self) -> Result<ClassPrior> {
        match self.opts.prior {
            PriorMode::Known(p) => Ok(p),
            PriorMode::Streaming { fallback } => {
                if !self.tracker.is_ready() {
                    if !self.warned_not_ready {
                        self.warned_not_ready = true;
                        self.event("estimator_not_ready", "using the fallback prior until both classes are seen");
                    }
                    return Ok(fallback);
                }
                let snap = self.tracker.snapshot()?;
                if snap.clamped && !self.warned_clamp {
                    self.warned_clamp = true;
                    self.event("pq_clamped", format!("raw p(1-p) estimate {} clamped", self.tracker.pq_hat));
                }
                Ok(snap.prior)
            }
        }
    }

    /// Draws `n` samples, counting them and feeding the tracker.
    pub fn draw<S: StreamSource>(&mut self, src: &mut S, n: usize) -> Result<Vec<Example>> {
        let batch: Vec<Example> = (0..n).map(|_| src.next_example()).collect();
        self.samples += n as u64;
        if matches!(self.opts.prior, PriorMode::Streaming { .. }) {
            let labels: Vec<i64> = batch.iter().map(|z| z.y).collect();
            self.tracker.update(&labels)?;
        }
        Ok(batch)
    }

    /// Minibatch gradient `(∇_v F, ∂F/∂α)` at `u`, written into `out`, with
    /// the prior frozen before the batch is drawn.
    pub fn stoch_grad<S: StreamSource>(&mut self, src: &mut S, u: &[f64], out: &mut [f64]) -> Result<()> {
        let prior = self.prior()?;
        let batch = self.draw(src, self.opts.batch)?;
        out.fill(0.0);
        let scale = 1.0 / batch.len() as f64;
        for z in &batch {
            accumulate_sample_grad(&self.arch, u, &prior, z, scale, out, &mut self.scratch)?;
        }
        self.step += 1;
        Ok(())
    }

    pub fn check_finite(&self, u: &[f64], what: &str) -> Result<()> {
        if all_finite(u) {
            Ok(())
        } else {
            Err(Error::Numeric {
                step: self.step,
                what: format!("non-finite {what}"),
            })
        }
    }

    fn elapsed(&self) -> f64 {
        if self.opts.wall_clock {
            self.start.elapsed().as_secs_f64()
        } else {
            0.0
        }
    }

    /// Records metrics of the scorer with parameters `w`.
    pub fn record(&mut self, w: &[f64], averaged: bool) -> Result<()> {
        let model = ModelParams::new(self.arch, w.to_vec())?;
        let exec = self.opts.exec;
        let mut train_auc = None;
        let mut test_auc = None;
        let mut pairwise_loss = None;
        if let Some(d) = self.opts.train {
            let (pos, neg) = class_scores(&model, d, exec)?;
            train_auc = Some(auc_binary(&pos, &neg)?);
            pairwise_loss = Some(pairwise_loss_from_scores(&pos, &neg)?);
        }
        if let Some(d) = self.opts.test {
            let (pos, neg) = class_scores(&model, d, exec)?;
            test_auc = Some(auc_binary(&pos, &neg)?);
            if pairwise_loss.is_none() {
                pairwise_loss = Some(pairwise_loss_from_scores(&pos, &neg)?);
            }
        }
        let rec = TraceRecord {
            step: self.step,
            stage: self.stage,
            samples: self.samples,
            train_auc,
            test_auc,
            pairwise_loss,
            elapsed_s: self.elapsed(),
            averaged,
        };
        self.trace.records.push(rec);
        Ok(())
    }

    pub fn maybe_record(&mut self, w: &[f64]) -> Result<()> {
        let every = self.opts.eval_every;
        if every > 0 && self.step.is_multiple_of(every) {
            self.record(w, false)?;
        }
        Ok(())
    }

    /// Estimates missing constants at flat state `u` (prox term is zero there).
    pub fn calibrate<S: StreamSource>(&mut self, src: &mut S, u: &[f64]) -> Result<Calibration> {
        let n = self.opts.calibration;
        let prior = self.prior()?;
        let batch = self.draw(src, n)?;
        let dim_w = self.arch.num_params();
        let mut g = vec![0.0; u.len()];
        let mut gh = vec![0.0; dim_w];
        let (mut grad_inf, mut grad_bound, mut l_tilde) = (0.0_f64, 0.0_f64, 0.0_f64);
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for z in &batch {
            g.fill(0.0);
            accumulate_sample_grad(&self.arch, u, &prior, z, 1.0, &mut g, &mut self.scratch)?;
            g[dim_w + 2] = -g[dim_w + 2];
            grad_inf = grad_inf.max(norm_inf(&g));
            grad_bound = grad_bound.max(norm2(&g));
            let h = score_grad_with(&self.arch, &u[..dim_w], &z.x, &mut gh);
            l_tilde = l_tilde.max(norm2(&gh));
            if z.y == 1 {
                pos.push(h);
            } else {
                neg.push(h);
            }
        }
        let var = |v: &[f64]| {
            if v.len() < 2 {
                return 0.0;
            }
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|h| (h - m) * (h - m)).sum::<f64>() / (v.len() - 1) as f64
        };
        let cal = Calibration {
            grad_inf,
            grad_bound,
            l_tilde,
            sigma2: var(&pos).max(var(&neg)),
        };
        self.event(
            "calibration",
            format!(
                "{n} samples: max|g|_inf={:.6e} G={:.6e} L_tilde={:.6e} sigma2={:.6e}",
                cal.grad_inf, cal.grad_bound, cal.l_tilde, cal.sigma2
            ),
        );
        Ok(cal)
    }

    /// `ᾱ = mean h(x⁻) - mean h(x⁺)` over a fresh minibatch of size `m`;
    /// `None` if a class is missing.
    pub fn restart_alpha<S: StreamSource>(&mut self, src: &mut S, w: &[f64], m: u64) -> Result<Option<f64>> {
        let m = usize::try_from(m).map_err(|_| Error::config("m_k", "too large"))?;
        let batch = self.draw(src, m)?;
        let model = ModelParams::new(self.arch, w.to_vec())?;
        dual_restart_estimate(&model, batch, self.opts.exec)
    }

    pub fn finish(self, u: &[f64]) -> Result<RunOutput> {
        let state = PrimalDualState::from_flat(u);
        let model = ModelParams::new(self.arch, state.w.clone())?;
        Ok(RunOutput {
            state,
            model,
            trace: self.trace,
        })
    }
}

/// `p` for schedule formulas: the known value or the current estimate.
pub(crate) fn schedule_p(ctx: &mut Ctx<'_, '_>) -> Result<f64> {
    Ok(ctx.prior()?.p)
}
