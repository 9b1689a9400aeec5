use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::StreamSource;
use crate::error::{Error, Result};
use crate::model::{score_grad_with, ModelParams};
use crate::numerics::{derive_seed, norm2, seeded_rng};
use crate::objective::PrimalDualState;

use super::ppd::sg_step;
use super::schedule::{schedule_pga, ScheduleParams};
use super::trace::StageLog;
use super::{check_model, Ctx, RunOptions, RunOutput};

/// Radii of PGA's feasible sets `‖v‖ ≤ r1`, `|α| ≤ r2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgaParams {
    pub r1: f64,
    pub r2: f64,
}

impl PgaParams {
    fn validate(&self) -> Result<()> {
        if !(self.r1 > 0.0) {
            return Err(Error::config("r1", "must be positive"));
        }
        if !(self.r2 > 0.0) {
            return Err(Error::config("r2", "must be positive"));
        }
        Ok(())
    }
}

/// Radial projection onto `{v : ‖v‖₂ ≤ r}`.
pub fn project_ball(v: &mut [f64], r: f64) {
    let norm = norm2(v);
    if norm > r {
        let s = r / norm;
        for x in v.iter_mut() {
            *x *= s;
        }
    }
}

/// Proximally guided primal-dual SGD with `η_k = η₀/k`, `T_k = T₀k²`.
///
/// Each stage runs `T_k` projected steps from `(v̄_{k-1}, ᾱ_{k-1})` and
/// averages both `v_1..v_{T_k}` and `α_1..α_{T_k}`. The returned state is
/// the average of a stage drawn uniformly from `1..=K`.
pub fn pga_run<S: StreamSource>(
    model: &ModelParams,
    src: &mut S,
    sp: &ScheduleParams,
    pga: &PgaParams,
    opts: &RunOptions<'_>,
) -> Result<RunOutput> {
    sp.validate()?;
    pga.validate()?;
    if sp.t0 == 0 {
        return Err(Error::config("t0", "must be at least 1"));
    }
    check_model(model, src.dim(), true)?;
    let inv_gamma = 1.0 / sp.effective_gamma()?;
    let mut ctx = Ctx::new(opts, model.arch)?;
    let n = model.w.len();
    let mut u_bar = PrimalDualState::new(model.w.clone()).to_flat();
    ctx.record(&u_bar[..n], true)?;

    let mut g = vec![0.0; n + 3];
    let mut averages = Vec::with_capacity(sp.stages);
    for k in 1..=sp.stages {
        ctx.stage = k;
        let plan = schedule_pga(sp, k)?;
        let t_k = plan.fixed_len().expect("pga stages have fixed length");
        let eta = plan.eta;
        let u0 = u_bar.clone();
        let mut u = u0.clone();
        let mut sum = vec![0.0; n + 3];
        for _ in 0..t_k {
            ctx.stoch_grad(src, &u, &mut g)?;
            sg_step(&mut u, &u0, &g, eta, inv_gamma);
            project_ball(&mut u[..n + 2], pga.r1);
            u[n + 2] = u[n + 2].clamp(-pga.r2, pga.r2);
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
        ctx.trace.stages.push(StageLog {
            k,
            eta,
            points: t_k,
            m_k: 0,
            alpha_bar: u_bar[n + 2],
            samples_end: ctx.samples,
        });
        ctx.record(&u_bar[..n], true)?;
        averages.push(u_bar.clone());
    }
    let mut rng = seeded_rng(derive_seed(opts.seed, 0x5047_4120));
    let tau = rng.random_range(1..=sp.stages);
    ctx.event("output_stage", format!("returning the average of stage {tau}"));
    ctx.finish(&averages[tau - 1])
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `η_t = η₀/√t`.
    #[default]
    InvSqrt,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OaucParams {
    pub eta0: f64,
    pub steps: u64,
    pub rule: StepRule,
}

impl OaucParams {
    pub fn step_size(&self, t: u64) -> f64 {
        match self.rule {
            StepRule::InvSqrt => self.eta0 / (t as f64).sqrt(),
            StepRule::Constant => self.eta0,
        }
    }
}

/// Single-loop primal-dual SGD without proximal term or restarts.
///
/// Returns the average of the primal iterates `v_0..v_T` (including the
/// start) and the last `α`.
pub fn oauc_run<S: StreamSource>(
    model: &ModelParams,
    src: &mut S,
    params: &OaucParams,
    opts: &RunOptions<'_>,
) -> Result<RunOutput> {
    if params.steps == 0 {
        return Err(Error::config("steps", "must be at least 1"));
    }
    if !(params.eta0 > 0.0 && params.eta0.is_finite()) {
        return Err(Error::config("eta0", "must be positive and finite"));
    }
    check_model(model, src.dim(), true)?;
    let mut ctx = Ctx::new(opts, model.arch)?;
    ctx.stage = 1;
    let n = model.w.len();
    let mut u = PrimalDualState::new(model.w.clone()).to_flat();
    let mut sum = u.clone();
    // unused: the proximal coefficient is zero
    let anchor = u.clone();
    ctx.record(&u[..n], true)?;
    let mut g = vec![0.0; n + 3];
    for t in 1..=params.steps {
        let eta = params.step_size(t);
        ctx.stoch_grad(src, &u, &mut g)?;
        sg_step(&mut u, &anchor, &g, eta, 0.0);
        ctx.check_finite(&u, "iterate")?;
        for (acc, x) in sum.iter_mut().zip(&u) {
            *acc += x;
        }
        ctx.maybe_record(&u[..n])?;
    }
    let inv = 1.0 / (params.steps + 1) as f64;
    let mut out: Vec<f64> = sum.iter().map(|s| s * inv).collect();
    out[n + 2] = u[n + 2];
    ctx.record(&out[..n], true)?;
    ctx.finish(&out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeParams {
    pub eta0: f64,
    pub steps: u64,
    /// After each listed step the step size is divided by 10.
    pub decay_steps: Vec<u64>,
}

impl CeParams {
    /// Step size used for update `t` (1-based).
    pub fn step_size(&self, t: u64) -> f64 {
        let decays = self.decay_steps.iter().filter(|&&d| d < t).count();
        self.eta0 / 10f64.powi(decays as i32)
    }
}

pub(crate) const CE_CLAMP: f64 = 1e-12;

/// Adds `scale · ∇_w` of `-[1[y=1] log h + 1[y=-1] log(1-h)]` into `out`.
/// Returns whether `h` had to be clamped away from 0 or 1.
pub(crate) fn ce_grad_into(model: &ModelParams, z: &crate::data::Example, scale: f64, out: &mut [f64], scratch: &mut [f64]) -> Result<bool> {
    let h_raw = score_grad_with(&model.arch, &model.w, &z.x, scratch);
    let h = h_raw.clamp(CE_CLAMP, 1.0 - CE_CLAMP);
    let coef = match z.y {
        1 => -1.0 / h,
        -1 => 1.0 / (1.0 - h),
        other => {
            return Err(Error::Label {
                label: other,
                domain: "{-1, +1}".into(),
            })
        }
    };
    for (o, g) in out.iter_mut().zip(scratch.iter()) {
        *o += scale * coef * g;
    }
    Ok(h != h_raw)
}

/// Cross-entropy SGD on the sigmoid output.
pub fn ce_sgd_run<S: StreamSource>(
    model: &ModelParams,
    src: &mut S,
    params: &CeParams,
    opts: &RunOptions<'_>,
) -> Result<RunOutput> {
    if !(params.eta0 > 0.0 && params.eta0.is_finite()) {
        return Err(Error::config("eta0", "must be positive and finite"));
    }
    check_model(model, src.dim(), true)?;
    let mut ctx = Ctx::new(opts, model.arch)?;
    ctx.stage = 1;
    let mut m = model.clone();
    let n = m.w.len();
    let mut g = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut warned = false;
    ctx.record(&m.w, true)?;
    for t in 1..=params.steps {
        let eta = params.step_size(t);
        let batch = ctx.draw(src, opts.batch)?;
        g.fill(0.0);
        let scale = 1.0 / batch.len() as f64;
        for z in &batch {
            let clamped = ce_grad_into(&m, z, scale, &mut g, &mut scratch)?;
            if clamped && !warned {
                warned = true;
                ctx.event("ce_clamp", "score saturated; log clamped at 1e-12");
            }
        }
        for (w, gi) in m.w.iter_mut().zip(&g) {
            *w -= eta * gi;
        }
        ctx.step += 1;
        ctx.check_finite(&m.w, "weights")?;
        if params.decay_steps.contains(&t) {
            ctx.stage += 1;
        }
        ctx.maybe_record(&m.w)?;
    }
    ctx.record(&m.w, true)?;
    let mut u = m.w.clone();
    u.extend([0.0; 3]);
    ctx.finish(&u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_two_gaussians, Dataset, Example, GaussianStream, ResampleStream};
    use crate::model::Arch;
    use crate::numerics::seeded_rng;
    use crate::objective::ClassPrior;
    use crate::optimizers::{ppd_sg_run, PriorMode};

    fn problem(seed: u64) -> Dataset {
        let mut rng = seeded_rng(seed);
        gen_two_gaussians(300, 2, &[0.5; 2], &[-0.5; 2], 1.0, 0.4, &mut rng).unwrap()
    }

    fn opts<'a>() -> RunOptions<'a> {
        RunOptions::new(PriorMode::Known(ClassPrior::new(0.4).unwrap()))
    }

    #[test]
    fn radial_projection() {
        let mut v = vec![3.0, 4.0];
        project_ball(&mut v, 2.5);
        assert!((norm2(&v) - 2.5).abs() < 1e-15);
        assert!((v[0] / v[1] - 0.75).abs() < 1e-15);
        let mut w = vec![0.1, 0.2];
        project_ball(&mut w, 1.0);
        assert_eq!(w, vec![0.1, 0.2]);
    }

    #[test]
    fn pga_respects_feasible_sets() {
        let d = problem(1);
        let mut rng = seeded_rng(2);
        let m = ModelParams::init(Arch::LinearSigmoid { dim: 2 }, &mut rng).unwrap();
        let sp = ScheduleParams {
            eta0: 2.0,
            t0: 5,
            stages: 4,
            gamma: Some(1.0),
            ..ScheduleParams::default()
        };
        let pga = PgaParams { r1: 0.3, r2: 0.05 };
        let o = RunOptions {
            eval_every: 1,
            ..opts()
        };
        let mut src = ResampleStream::new(&d, 3).unwrap();
        let out = pga_run(&m, &mut src, &sp, &pga, &o).unwrap();
        let v = [out.state.w.clone(), vec![out.state.a, out.state.b]].concat();
        assert!(norm2(&v) <= pga.r1 + 1e-12);
        assert!(out.state.alpha.abs() <= pga.r2);
        let points: Vec<u64> = out.trace.stages.iter().map(|s| s.points).collect();
        assert_eq!(points, vec![5, 20, 45, 80]);
        let etas: Vec<f64> = out.trace.stages.iter().map(|s| s.eta).collect();
        assert_eq!(etas[2], 2.0 / 3.0);
        assert_eq!(out.trace.events_of("output_stage").count(), 1);
    }

    #[test]
    fn oauc_step_sizes() {
        let p = OaucParams {
            eta0: 0.8,
            steps: 10,
            rule: StepRule::InvSqrt,
        };
        assert_eq!(p.step_size(4), 0.4);
        assert_eq!(p.step_size(1), 0.8);
    }

    #[test]
    fn oauc_constant_matches_ppd_sg_without_prox() {
        let d = problem(4);
        let mut rng = seeded_rng(5);
        let m = ModelParams::init(Arch::LinearSigmoid { dim: 2 }, &mut rng).unwrap();
        let params = OaucParams {
            eta0: 0.07,
            steps: 150,
            rule: StepRule::Constant,
        };
        let a = oauc_run(&m, &mut ResampleStream::new(&d, 6).unwrap(), &params, &opts()).unwrap();
        let sp = ScheduleParams {
            eta0: 0.07,
            t0: 151,
            stages: 1,
            gamma: Some(f64::INFINITY),
            ..ScheduleParams::default()
        };
        let b = ppd_sg_run(&m, &mut ResampleStream::new(&d, 6).unwrap(), &sp, &opts()).unwrap();
        assert_eq!(a.state.w, b.state.w);
        assert_eq!((a.state.a, a.state.b), (b.state.a, b.state.b));
    }

    #[test]
    fn oauc_zero_gradient_step_is_identity() {
        let mut u = [0.0; 5];
        sg_step(&mut u, &[1.0; 5], &[0.0; 5], 0.3, 0.0);
        assert_eq!(u, [0.0; 5]);
    }

    #[test]
    fn ce_gradient_vanishes_at_zero_input() {
        let m = ModelParams::zeros(Arch::LinearSigmoid { dim: 1 }).unwrap();
        let z = Example::new(vec![0.0], 1);
        let mut out = vec![0.0; 1];
        let mut scratch = vec![0.0; 1];
        assert!(!ce_grad_into(&m, &z, 1.0, &mut out, &mut scratch).unwrap());
        assert_eq!(out, vec![0.0]);
    }

    #[test]
    fn ce_gradient_hand_value() {
        let m = ModelParams::zeros(Arch::LinearSigmoid { dim: 3 }).unwrap();
        let x = vec![0.4, -1.0, 2.0];
        let z = Example::new(x.clone(), 1);
        let mut out = vec![0.0; 3];
        let mut scratch = vec![0.0; 3];
        ce_grad_into(&m, &z, 1.0, &mut out, &mut scratch).unwrap();
        for (g, xi) in out.iter().zip(&x) {
            assert!((g + 0.5 * xi).abs() < 1e-15);
        }
    }

    #[test]
    fn ce_expected_gradient_vanishes_on_symmetric_data() {
        let m = ModelParams::zeros(Arch::LinearSigmoid { dim: 2 }).unwrap();
        let mut src = GaussianStream::new(vec![1.0, -0.5], vec![-1.0, 0.5], 1.0, 0.5, 12).unwrap();
        let n = 20_000;
        let mut sums = [0.0; 2];
        let mut sq = [0.0; 2];
        let mut scratch = vec![0.0; 2];
        for _ in 0..n {
            let z = src.next_example();
            let mut g = vec![0.0; 2];
            ce_grad_into(&m, &z, 1.0, &mut g, &mut scratch).unwrap();
            for i in 0..2 {
                sums[i] += g[i];
                sq[i] += g[i] * g[i];
            }
        }
        // at w = 0: E[g] = -0.5 p E[x|+] + 0.5 (1-p) E[x|-] = -0.5 μ for mirrored means
        for i in 0..2 {
            let mean = sums[i] / n as f64;
            let se = ((sq[i] / n as f64 - mean * mean) / n as f64).sqrt();
            let expected = -0.5 * [1.0, -0.5][i];
            assert!((mean - expected).abs() <= 3.0 * se, "coord {i}: {mean} vs {expected}");
        }
        // balanced data with means at zero: expected gradient is zero
        let mut src = GaussianStream::new(vec![0.0; 2], vec![0.0; 2], 1.0, 0.5, 13).unwrap();
        let mut s = 0.0;
        let mut s2 = 0.0;
        for _ in 0..n {
            let z = src.next_example();
            let mut g = vec![0.0; 2];
            ce_grad_into(&m, &z, 1.0, &mut g, &mut scratch).unwrap();
            s += g[0];
            s2 += g[0] * g[0];
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!(mean.abs() <= 3.0 * se);
    }

    #[test]
    fn ce_decay_schedule() {
        let p = CeParams {
            eta0: 0.5,
            steps: 100,
            decay_steps: vec![10, 50],
        };
        assert_eq!(p.step_size(10), 0.5);
        assert_eq!(p.step_size(11), 0.5 / 10.0);
        assert_eq!(p.step_size(51), 0.5 / 100.0);
    }

    #[test]
    fn ce_run_improves_auc() {
        let d = problem(7);
        let m = ModelParams::zeros(Arch::LinearSigmoid { dim: 2 }).unwrap();
        let o = RunOptions { test: Some(&d), ..opts() };
        let params = CeParams {
            eta0: 0.5,
            steps: 500,
            decay_steps: vec![250],
        };
        let out = ce_sgd_run(&m, &mut ResampleStream::new(&d, 8).unwrap(), &params, &o).unwrap();
        assert!(out.trace.last_record().unwrap().test_auc.unwrap() > 0.7);
    }
}
