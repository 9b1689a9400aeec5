use crate::data::StreamSource;
use crate::error::Result;
use crate::model::ModelParams;
use crate::numerics::norm_inf;
use crate::objective::PrimalDualState;

use super::schedule::{stage_plan, Mode, ScheduleParams, StageLength, Variant};
use super::trace::{AdaGradStageLog, StageLog};
use super::{check_model, schedule_p, Ctx, RunOptions, RunOutput};

/// Fills constants the theoretical schedule needs but the user left unset.
fn fill_constants<S: StreamSource>(
    ctx: &mut Ctx<'_, '_>,
    src: &mut S,
    u: &[f64],
    sp: &ScheduleParams,
    need_delta: bool,
) -> Result<ScheduleParams> {
    let mut sp = sp.clone();
    let theo = sp.mode == Mode::Theoretical;
    let missing = theo && (sp.l_tilde.is_none() || sp.grad_bound.is_none() || sp.sigma2.is_none());
    if missing || (need_delta && sp.delta.is_none()) {
        let cal = ctx.calibrate(src, u)?;
        if theo {
            sp.l_tilde.get_or_insert(cal.l_tilde.max(f64::MIN_POSITIVE));
            sp.grad_bound.get_or_insert(cal.grad_bound.max(f64::MIN_POSITIVE));
            sp.sigma2.get_or_insert(cal.sigma2);
        }
        if need_delta && sp.delta.is_none() {
            let delta = (1.1 * cal.grad_inf).max(1e-12);
            ctx.event("delta_default", format!("delta = 1.1 * max|g|_inf = {delta:.6e}"));
            sp.delta = Some(delta);
        }
    }
    Ok(sp)
}

fn restart<S: StreamSource>(ctx: &mut Ctx<'_, '_>, src: &mut S, u_bar: &[f64], m_k: u64, prev: f64) -> Result<f64> {
    let n = u_bar.len() - 3;
    match ctx.restart_alpha(src, &u_bar[..n], m_k)? {
        Some(a) => Ok(a),
        None => {
            ctx.event(
                "dual_restart_fallback",
                format!("minibatch of {m_k} lacks a class; keeping alpha = {prev}"),
            );
            Ok(prev)
        }
    }
}

/// One proximal primal-dual step on flat `u`; the last coordinate is `α`.
pub(crate) fn sg_step(u: &mut [f64], u0: &[f64], g: &[f64], eta: f64, inv_gamma: f64) {
    let n = u.len() - 1;
    for i in 0..n {
        u[i] -= eta * (g[i] + inv_gamma * (u[i] - u0[i]));
    }
    u[n] += eta * g[n];
}

/// Stagewise proximal primal-dual SGD.
///
/// Stage `k` starts from `u₀ = (v̄_{k-1}, ᾱ_{k-1})`, takes `T_k - 1` steps
///
/// ```text
/// v ← v - η_k (ĝ_v + (v - v₀)/γ)      α ← α + η_k ĝ_α
/// ```
///
/// averages the `T_k` primal points including `v₀`, then re-estimates `ᾱ_k`
/// from a fresh minibatch of `m_k` samples. `γ = ∞` removes the proximal term.
/// The initial `w` comes from `model`; `a = b = α = 0`.
pub fn ppd_sg_run<S: StreamSource>(
    model: &ModelParams,
    src: &mut S,
    sp: &ScheduleParams,
    opts: &RunOptions<'_>,
) -> Result<RunOutput> {
    sp.validate()?;
    check_model(model, src.dim(), true)?;
    let inv_gamma = 1.0 / sp.effective_gamma()?;
    let mut ctx = Ctx::new(opts, model.arch)?;
    let n = model.w.len();
    let mut u_bar = PrimalDualState::new(model.w.clone()).to_flat();
    let sp = fill_constants(&mut ctx, src, &u_bar, sp, false)?;
    ctx.record(&u_bar[..n], true)?;

    let mut g = vec![0.0; n + 3];
    for k in 1..=sp.stages {
        ctx.stage = k;
        let p = schedule_p(&mut ctx)?;
        let plan = stage_plan(&sp, k, p, Variant::Sg)?;
        let mut t_k = plan.fixed_len().unwrap_or(1);
        if t_k > sp.t_max {
            ctx.event("stage_cap", format!("T_k = {t_k} capped at {}", sp.t_max));
            t_k = sp.t_max;
        }
        let eta = plan.eta;
        let u0 = u_bar.clone();
        let mut u = u0.clone();
        let mut sum = u0.clone();
        for _ in 1..t_k {
            ctx.stoch_grad(src, &u, &mut g)?;
            sg_step(&mut u, &u0, &g, eta, inv_gamma);
            ctx.check_finite(&u, "iterate")?;
            for (acc, x) in sum.iter_mut().zip(&u) {
                *acc += x;
            }
            ctx.maybe_record(&u[..n])?;
        }
        let inv_t = 1.0 / t_k as f64;
        for (b, s) in u_bar.iter_mut().zip(&sum) {
            *b = s * inv_t;
        }
        u_bar[n + 2] = restart(&mut ctx, src, &u_bar, plan.m_k, u0[n + 2])?;
        ctx.check_finite(&u_bar, "stage average")?;
        ctx.trace.stages.push(StageLog {
            k,
            eta,
            points: t_k,
            m_k: plan.m_k,
            alpha_bar: u_bar[n + 2],
            samples_end: ctx.samples,
        });
        ctx.record(&u_bar[..n], true)?;
    }
    ctx.finish(&u_bar)
}

/// `u₀ - η (δ + s)⁻¹ ⊙ Σĝ`: the minimizer of
/// `η⟨Σĝ/t, u⟩ + ψ_t(u)/t` with `ψ_t(u) = ½⟨u - u₀, (δI + diag s)(u - u₀)⟩`.
pub fn adagrad_update(u0: &[f64], grad_sum: &[f64], s: &[f64], delta: f64, eta: f64, out: &mut [f64]) {
    for i in 0..out.len() {
        out[i] = u0[i] - eta * grad_sum[i] / (delta + s[i]);
    }
}

/// Running sums of one AdaGrad stage; `s_i = ‖ĝ_{1:t,i}‖₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaGradInnerState {
    pub s: Vec<f64>,
    pub grad_sum: Vec<f64>,
    pub u0: Vec<f64>,
    pub t: u64,
    sq: Vec<f64>,
}

impl AdaGradInnerState {
    pub fn new(u0: Vec<f64>) -> Self {
        let d = u0.len();
        AdaGradInnerState {
            s: vec![0.0; d],
            grad_sum: vec![0.0; d],
            u0,
            t: 0,
            sq: vec![0.0; d],
        }
    }

    pub fn push(&mut self, g: &[f64]) {
        self.t += 1;
        for i in 0..g.len() {
            self.grad_sum[i] += g[i];
            self.sq[i] += g[i] * g[i];
            self.s[i] = self.sq[i].sqrt();
        }
    }

    /// `u_{t+1}` after `t` pushed gradients.
    pub fn point(&self, eta: f64, delta: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.u0.len()];
        adagrad_update(&self.u0, &self.grad_sum, &self.s, delta, eta, &mut out);
        out
    }
}

/// `τ ≥ M max((δ + max s) max(1, 8L̃²)/c, 2c(Σs + D(δ + max s)))`.
pub fn stopping_rule_holds(tau: u64, m_big: f64, c: f64, delta: f64, l_tilde: f64, s: &[f64]) -> bool {
    let max_s = s.iter().copied().fold(0.0, f64::max);
    let sum_s: f64 = s.iter().sum();
    let dim = s.len() as f64;
    let lhs = (delta + max_s) * 1f64.max(8.0 * l_tilde * l_tilde) / c;
    let rhs = 2.0 * c * (sum_s + dim * (delta + max_s));
    tau as f64 >= m_big * lhs.max(rhs)
}

/// PPD-SG's outer loop with a diagonal AdaGrad dual-averaging inner solver.
///
/// Inner gradients are `ĝ = (ĝ_v + (v - v₀)/γ, -ĝ_α)` at the current point.
/// In theoretical mode a stage ends at the first `τ` meeting the stopping
/// rule (the `τ` points `u_1..u_τ` are averaged); in practical mode after
/// `T_k` points. Either way a stage never exceeds `t_max` points.
pub fn ppd_adagrad_run<S: StreamSource>(
    model: &ModelParams,
    src: &mut S,
    sp: &ScheduleParams,
    opts: &RunOptions<'_>,
) -> Result<RunOutput> {
    sp.validate()?;
    check_model(model, src.dim(), true)?;
    let inv_gamma = 1.0 / sp.effective_gamma()?;
    let mut ctx = Ctx::new(opts, model.arch)?;
    let n = model.w.len();
    let dim_u = n + 3;
    let mut u_bar = PrimalDualState::new(model.w.clone()).to_flat();
    let sp = fill_constants(&mut ctx, src, &u_bar, sp, true)?;
    let delta = sp.delta.expect("filled above");
    ctx.record(&u_bar[..n], true)?;

    let mut g = vec![0.0; dim_u];
    let mut ghat = vec![0.0; dim_u];
    for k in 1..=sp.stages {
        ctx.stage = k;
        let p = schedule_p(&mut ctx)?;
        let plan = stage_plan(&sp, k, p, Variant::AdaGrad { dim_u })?;
        let eta = plan.eta;
        let u0 = u_bar.clone();
        let mut inner = AdaGradInnerState::new(u0.clone());
        let mut u = u0.clone();
        let mut sum = vec![0.0; dim_u];
        let mut s_prev = vec![0.0; dim_u];
        let mut capped = false;
        let mut warned_delta = false;
        let points = loop {
            for (acc, x) in sum.iter_mut().zip(&u) {
                *acc += x;
            }
            let points = inner.t + 1;
            if let StageLength::Fixed(t_k) = plan.length {
                if points >= t_k {
                    break points;
                }
            }
            if points >= sp.t_max {
                capped = true;
                ctx.event("stopping_time_cap", format!("stage {k} reached t_max = {}", sp.t_max));
                break points;
            }
            ctx.stoch_grad(src, &u, &mut g)?;
            for i in 0..n + 2 {
                ghat[i] = g[i] + inv_gamma * (u[i] - u0[i]);
            }
            ghat[n + 2] = -g[n + 2];
            if !warned_delta && sp.mode == Mode::Theoretical && norm_inf(&ghat) > delta {
                warned_delta = true;
                ctx.event("delta_exceeded", format!("|g|_inf = {:.6e} > delta", norm_inf(&ghat)));
            }
            s_prev.copy_from_slice(&inner.s);
            inner.push(&ghat);
            if let StageLength::StoppingTime { m_big, c } = plan.length {
                let l_tilde = sp.l_tilde.unwrap_or(0.0);
                if stopping_rule_holds(inner.t, m_big, c, delta, l_tilde, &inner.s) {
                    break points;
                }
            }
            adagrad_update(&u0, &inner.grad_sum, &inner.s, delta, eta, &mut u);
            ctx.check_finite(&u, "iterate")?;
            ctx.maybe_record(&u[..n])?;
        };
        let inv_t = 1.0 / points as f64;
        for (b, s) in u_bar.iter_mut().zip(&sum) {
            *b = s * inv_t;
        }
        u_bar[n + 2] = restart(&mut ctx, src, &u_bar, plan.m_k, u0[n + 2])?;
        ctx.check_finite(&u_bar, "stage average")?;
        let (m_big, c) = match plan.length {
            StageLength::StoppingTime { m_big, c } => (Some(m_big), Some(c)),
            StageLength::Fixed(_) => (None, None),
        };
        ctx.trace.adagrad.push(AdaGradStageLog {
            k,
            t_k: points,
            delta,
            m_big,
            c,
            l_tilde: sp.l_tilde,
            s_final: inner.s.clone(),
            s_prev: s_prev.clone(),
            capped,
        });
        ctx.trace.stages.push(StageLog {
            k,
            eta,
            points,
            m_k: plan.m_k,
            alpha_bar: u_bar[n + 2],
            samples_end: ctx.samples,
        });
        ctx.record(&u_bar[..n], true)?;
    }
    ctx.finish(&u_bar)
}
