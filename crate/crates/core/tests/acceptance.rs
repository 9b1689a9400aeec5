//! Acceptance criteria 1-11. Runs as a plain binary (no libtest harness) so
//! every criterion prints exactly one PASS/FAIL line; exits non-zero if any
//! criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::Rng as _;

use ppdauc::data::{gen_two_gaussians, make_imbalanced, Dataset, Example, ResampleStream, Task};
use ppdauc::eval::{auc_binary, evaluate, Ties};
use ppdauc::model::{Arch, ModelParams};
use ppdauc::numerics::{derive_seed, finite_diff_grad, max_rel_err, seeded_rng, standard_normal, Rng};
use ppdauc::objective::{
    grad_alpha, grad_v, loss_f, multiclass_auc, multiclass_grads, multiclass_loss_fij, optimal_ab_alpha,
    saddle_equivalence_check, ClassPrior, MultiClassState, PrimalDualState,
};
use ppdauc::optimizers::{
    adagrad_update, constant_c, dual_restart_estimate, full_batch_oracle, pga_run, ppd_adagrad_run, ppd_sg_run,
    schedule_practical, schedule_theoretical, stopping_rule_holds, Mode, OracleParams, PgaParams, PriorMode,
    RunOptions, ScheduleParams, StageLength, Variant,
};
use ppdauc::parallel::Exec;
use ppdauc::plcheck::{leaky_audit, LeakyAuditParams};
use ppdauc::streaming::PriorTracker;

// Pinned thresholds.
const C1_INSTANCES: usize = 100;
const C1_RESIDUAL: f64 = 1e-9;
const C1_BUDGET: Duration = Duration::from_secs(5);
const C2_POINTS: usize = 100;
const C2_REL_TOL: f64 = 1e-4;
const C2_FD_STEP: f64 = 1e-6;
const C2_BUDGET: Duration = Duration::from_secs(30);
const C3_FORMULA_TOL: f64 = 1e-12;
const C3_STATED_VALUE: f64 = 1.061566;
const C3_STATED_TOL: f64 = 1e-5;
const C4_RATIO_TOL: f64 = 1e-12;
const C4_MAX_K: usize = 10;
const C5_STEPS: usize = 100;
const C5_TOL: f64 = 1e-10;
const C6_M: usize = 10_000;
const C6_REPS: u64 = 200;
const C6_SE_MULT: f64 = 3.0;
const C7_TRACKERS: u64 = 200;
const C7_LABELS: usize = 100_000;
const C7_P: f64 = 0.3;
const C7_SE_MULT: f64 = 3.0;
const C7_RECUR_TOL: f64 = 1e-12;
const C7_HISTORY: usize = 1000;
const C8_MU_SAFETY: f64 = 0.9;
const C8_PROBES: usize = 500;
const C8_BUDGET: Duration = Duration::from_secs(60);
const C9_TARGET_FRAC: f64 = 0.95;
const C9_SEEDS: u64 = 9;
const C9_BUDGET: Duration = Duration::from_secs(60);
const C10_INSTANCES: usize = 1000;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: String) -> Outcome {
    if cond {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn rand_vec(rng: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * standard_normal(rng)).collect()
}

fn random_arch(rng: &mut Rng) -> Arch {
    let dim = rng.random_range(1..=5);
    match rng.random_range(0..3) {
        0 => Arch::LinearSigmoid { dim },
        1 => Arch::LeakyRaw {
            dim,
            c1: 1.0,
            c2: 0.1,
        },
        _ => Arch::Mlp {
            dim,
            hidden: rng.random_range(1..=6),
            c1: 1.0,
            c2: 0.05,
        },
    }
}

/// A labelled sample of size `n` with both classes present.
fn random_binary(rng: &mut Rng, n: usize, dim: usize) -> Dataset {
    let examples = (0..n)
        .map(|i| {
            let y = match i {
                0 => 1,
                1 => -1,
                _ if rng.random::<f64>() < 0.4 => 1,
                _ => -1,
            };
            Example::new(rand_vec(rng, dim, 1.0), y)
        })
        .collect();
    Dataset::new(examples, dim, Task::Binary).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded_rng(101);
    let mut worst = 0.0f64;
    for _ in 0..C1_INSTANCES {
        let arch = random_arch(&mut rng);
        let model = ModelParams::init(arch, &mut rng).unwrap();
        let n = rng.random_range(4..=200);
        let d = random_binary(&mut rng, n, arch.input_dim());
        worst = worst.max(saddle_equivalence_check(&model, &d).unwrap());
    }
    let el = start.elapsed();
    check(
        worst <= C1_RESIDUAL && el < C1_BUDGET,
        format!("max residual {worst:.3e} (<= {C1_RESIDUAL:e}), {el:.2?} (< {C1_BUDGET:?})"),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded_rng(202);
    let (mut e_v, mut e_a, mut e_mc, mut e_model) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..C2_POINTS {
        let arch = random_arch(&mut rng);
        let dim = arch.input_dim();
        let np = arch.num_params();
        let p = rng.random_range(0.05..0.95);
        let prior = ClassPrior::new(p).unwrap();
        let y = if rng.random::<bool>() { 1 } else { -1 };
        let z = Example::new(rand_vec(&mut rng, dim, 1.0), y);
        let mut s = PrimalDualState::new(rand_vec(&mut rng, np, 0.7));
        s.a = rng.random_range(-1.0..1.0);
        s.b = rng.random_range(-1.0..1.0);
        s.alpha = rng.random_range(-1.0..1.0);

        // grad_v over the flat (w, a, b).
        let g = grad_v(&s, &prior, &z, &arch).unwrap();
        let mut x0 = s.w.clone();
        x0.extend([s.a, s.b]);
        let f = |x: &[f64]| {
            let mut t = s.clone();
            t.w = x[..np].to_vec();
            t.a = x[np];
            t.b = x[np + 1];
            loss_f(&t, &prior, &z, &arch).unwrap()
        };
        let fd = finite_diff_grad(f, &x0, C2_FD_STEP).unwrap();
        let mut an = g.w.clone();
        an.extend([g.a, g.b]);
        e_v = e_v.max(max_rel_err(&fd, &an));

        let fa = |x: &[f64]| {
            let mut t = s.clone();
            t.alpha = x[0];
            loss_f(&t, &prior, &z, &arch).unwrap()
        };
        let fd = finite_diff_grad(fa, &[s.alpha], C2_FD_STEP).unwrap();
        e_a = e_a.max(max_rel_err(&fd, &[grad_alpha(&s, &prior, &z, &arch).unwrap()]));

        // Model backward pass.
        let m = ModelParams::new(arch, s.w.clone()).unwrap();
        let sg = m.forward_grad(&z.x).unwrap();
        let fm = |w: &[f64]| m.with_params(w.to_vec()).unwrap().forward(&z.x).unwrap();
        let fd = finite_diff_grad(fm, &m.w, C2_FD_STEP).unwrap();
        e_model = e_model.max(max_rel_err(&fd, &sg.grad_w));

        // Multi-class pair gradients, c = 3.
        let c = 3;
        let mut priors: Vec<f64> = (0..c).map(|_| rng.random_range(0.1..1.0)).collect();
        let tot: f64 = priors.iter().sum();
        priors.iter_mut().for_each(|q| *q /= tot);
        let last = 1.0 - priors[..c - 1].iter().sum::<f64>();
        priors[c - 1] = last;
        let ws = (0..c).map(|_| rand_vec(&mut rng, np, 0.7)).collect();
        let mut st = MultiClassState::new(ws, priors).unwrap();
        let i = rng.random_range(0..c);
        let j = (i + rng.random_range(1..c)) % c;
        st.a[i][j] = rng.random_range(-1.0..1.0);
        st.b[i][j] = rng.random_range(-1.0..1.0);
        st.alpha[i][j] = rng.random_range(-1.0..1.0);
        let zy = Example::new(z.x.clone(), rng.random_range(0..c as i64));
        let pg = multiclass_grads(&st, i, j, &zy, &arch).unwrap();
        let mut x0 = st.w[i].clone();
        x0.extend([st.a[i][j], st.b[i][j], st.alpha[i][j]]);
        let fmc = |x: &[f64]| {
            let mut t = st.clone();
            t.w[i] = x[..np].to_vec();
            t.a[i][j] = x[np];
            t.b[i][j] = x[np + 1];
            t.alpha[i][j] = x[np + 2];
            multiclass_loss_fij(&t, i, j, &zy, &arch).unwrap()
        };
        let fd = finite_diff_grad(fmc, &x0, C2_FD_STEP).unwrap();
        let mut an = pg.w_i.clone();
        an.extend([pg.a_ij, pg.b_ij, pg.alpha_ij]);
        e_mc = e_mc.max(max_rel_err(&fd, &an));
    }
    let el = start.elapsed();
    let worst = e_v.max(e_a).max(e_mc).max(e_model);
    check(
        worst <= C2_REL_TOL && el < C2_BUDGET,
        format!(
            "max rel err grad_v {e_v:.1e}, grad_alpha {e_a:.1e}, multiclass {e_mc:.1e}, model {e_model:.1e} \
             (<= {C2_REL_TOL:e}) over {C2_POINTS} points, {el:.2?}"
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut worst = 0.0f64;
    for p in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let big = f64::max(p, 1.0 - p);
        let direct = 2.0 / (std::f64::consts::E * (1.0 / big).ln());
        worst = worst.max((constant_c(p).unwrap() - direct).abs());
    }
    let c_half = constant_c(0.5).unwrap();
    let stated_gap = (c_half - C3_STATED_VALUE).abs();
    let formula_ok = worst <= C3_FORMULA_TOL;
    let stated_ok = stated_gap <= C3_STATED_TOL;
    let msg = format!(
        "formula identity max err {worst:.1e} (<= {C3_FORMULA_TOL:e}) {}; C(0.5) = {c_half:.9} vs stated \
         {C3_STATED_VALUE} +- {C3_STATED_TOL:e}: gap {stated_gap:.2e} {}",
        if formula_ok { "ok" } else { "FAILED" },
        if stated_ok { "ok" } else { "FAILED (stated value is inconsistent with the formula)" },
    );
    check(formula_ok && stated_ok, msg)
}

fn criterion_4() -> Outcome {
    let mut worst = 0.0f64;
    for (mu, l) in [(0.2, 1.0), (1.0, 3.0), (0.01, 0.5)] {
        let sp = ScheduleParams {
            mode: Mode::Theoretical,
            eta0: 0.3,
            mu: Some(mu),
            smoothness: Some(l),
            l_tilde: Some(0.5),
            grad_bound: Some(2.0),
            sigma2: Some(0.1),
            ..ScheduleParams::default()
        };
        let expect = (-(mu / l) / (5.0 + mu / l)).exp();
        for k in 1..=C4_MAX_K {
            let a = schedule_theoretical(&sp, k, 0.3, Variant::Sg).unwrap();
            let b = schedule_theoretical(&sp, k + 1, 0.3, Variant::Sg).unwrap();
            worst = worst.max((b.eta / a.eta - expect).abs());
        }
    }
    let mut exact = true;
    for (eta0, t0) in [(0.1, 200u64), (1.0, 1), (0.37, 17)] {
        let sp = ScheduleParams {
            eta0,
            t0,
            ..ScheduleParams::default()
        };
        for k in 0..=C4_MAX_K {
            let plan = schedule_practical(&sp, k + 1).unwrap();
            let t_ok = plan.length == StageLength::Fixed(t0 * 3u64.pow(k as u32));
            let eta_ok = plan.eta == eta0 / 3f64.powi(k as i32);
            exact &= t_ok && eta_ok;
        }
    }
    check(
        worst <= C4_RATIO_TOL && exact,
        format!("max |eta ratio - exp(-r)| {worst:.1e} (<= {C4_RATIO_TOL:e}); practical T_s, eta_s exact for s <= {C4_MAX_K}: {exact}"),
    )
}

/// Minimizer of `eta*g*u + (h/2)(u - u0)^2` by bisection on the derivative.
fn scalar_argmin(u0: f64, g: f64, h: f64, eta: f64) -> f64 {
    let deriv = |u: f64| eta * g + h * (u - u0);
    let (mut lo, mut hi) = (u0 - 1.0, u0 + 1.0);
    while deriv(lo) > 0.0 {
        lo -= 2.0 * (hi - lo);
    }
    while deriv(hi) < 0.0 {
        hi += 2.0 * (hi - lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if deriv(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn criterion_5() -> Outcome {
    let mut rng = seeded_rng(505);
    let mut worst = 0.0f64;
    for _ in 0..C5_STEPS {
        let n = rng.random_range(1..=12);
        let u0 = rand_vec(&mut rng, n, 1.0);
        let gsum = rand_vec(&mut rng, n, 3.0);
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
        let delta = rng.random_range(1e-3..2.0);
        let eta = rng.random_range(1e-3..2.0);
        let mut out = vec![0.0; n];
        adagrad_update(&u0, &gsum, &s, delta, eta, &mut out);
        for i in 0..n {
            let x = scalar_argmin(u0[i], gsum[i], delta + s[i], eta);
            worst = worst.max((out[i] - x).abs() / (1.0 + x.abs()));
        }
    }

    let mut stages = 0;
    let mut rule_ok = true;
    for seed in 0..3 {
        let mut r = seeded_rng(derive_seed(55, seed));
        let d = gen_two_gaussians(400, 3, &[0.5; 3], &[-0.5; 3], 1.0, 0.3, &mut r).unwrap();
        let m = ModelParams::zeros(Arch::LinearSigmoid { dim: 3 }).unwrap();
        let sp = ScheduleParams {
            mode: Mode::Theoretical,
            eta0: 0.5,
            stages: 3,
            mu: Some(0.2),
            smoothness: Some(1.0),
            t_max: 100_000,
            ..ScheduleParams::default()
        };
        let opts = RunOptions::new(PriorMode::Known(ClassPrior::from_dataset(&d).unwrap()));
        let out = ppd_adagrad_run(&m, &mut ResampleStream::new(&d, seed).unwrap(), &sp, &opts).unwrap();
        for log in &out.trace.adagrad {
            stages += 1;
            let (mb, c, lt) = (log.m_big.unwrap(), log.c.unwrap(), log.l_tilde.unwrap());
            rule_ok &= !log.capped;
            rule_ok &= stopping_rule_holds(log.t_k, mb, c, log.delta, lt, &log.s_final);
            rule_ok &= !stopping_rule_holds(log.t_k - 1, mb, c, log.delta, lt, &log.s_prev);
        }
    }
    check(
        worst <= C5_TOL && rule_ok && stages > 0,
        format!(
            "update vs scalar argmin max err {worst:.1e} (<= {C5_TOL:e}) over {C5_STEPS} steps; \
             stopping rule exact on {stages} logged stages: {rule_ok}"
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = seeded_rng(606);
    let d = gen_two_gaussians(2000, 3, &[0.4; 3], &[-0.4; 3], 1.0, 0.3, &mut rng).unwrap();
    let model = ModelParams::init(Arch::LinearSigmoid { dim: 3 }, &mut rng).unwrap();
    let (_, _, alpha_star) = optimal_ab_alpha(&model, &d).unwrap();

    let ests: Vec<f64> = (0..C6_REPS)
        .map(|rep| {
            let mut src = ResampleStream::new(&d, derive_seed(6, rep)).unwrap();
            let batch: Vec<Example> = (0..C6_M).map(|_| ppdauc::data::StreamSource::next_example(&mut src)).collect();
            dual_restart_estimate(&model, batch, Exec::default()).unwrap().unwrap()
        })
        .collect();
    let n = ests.len() as f64;
    let mean = ests.iter().sum::<f64>() / n;
    let sd = (ests.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let se = sd / n.sqrt();
    let mse = ests.iter().map(|e| (e - alpha_star).powi(2)).sum::<f64>() / n;

    let var = |label: i64| {
        let h: Vec<f64> = d
            .examples
            .iter()
            .filter(|e| e.y == label)
            .map(|e| model.forward(&e.x).unwrap())
            .collect();
        let m = h.iter().sum::<f64>() / h.len() as f64;
        h.iter().map(|v| (v - m).powi(2)).sum::<f64>() / h.len() as f64
    };
    let sigma2 = var(1).max(var(-1));
    let p = d.positive_fraction().unwrap();
    let bound = 2.0 * (sigma2 + constant_c(p).unwrap()) / (C6_M as f64 * p * (1.0 - p));
    let bias = (mean - alpha_star).abs();
    check(
        bias <= C6_SE_MULT * se && mse <= bound,
        format!(
            "|mean - alpha*| {bias:.2e} (<= {C6_SE_MULT} SE = {:.2e}); MSE {mse:.2e} (<= bound {bound:.2e})",
            C6_SE_MULT * se
        ),
    )
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    (m, sd / n.sqrt())
}

fn criterion_7() -> Outcome {
    let mut ps = Vec::new();
    let mut pqs = Vec::new();
    for t in 0..C7_TRACKERS {
        let mut rng = seeded_rng(derive_seed(707, t));
        let mut tr = PriorTracker::new();
        let mut left = C7_LABELS;
        while left > 0 {
            let m = left.min(1000);
            let batch: Vec<i64> = (0..m).map(|_| if rng.random::<f64>() < C7_P { 1 } else { -1 }).collect();
            tr.update(&batch).unwrap();
            left -= m;
        }
        ps.push(tr.p_hat);
        pqs.push(tr.pq_hat);
    }
    let (mp, sep) = mean_se(&ps);
    let (mpq, sepq) = mean_se(&pqs);
    let pq_true = C7_P * (1.0 - C7_P);
    let p_ok = (mp - C7_P).abs() <= C7_SE_MULT * sep;
    let pq_ok = (mpq - pq_true).abs() <= C7_SE_MULT * sepq;

    // Streaming recurrences against a from-scratch recomputation over the
    // whole history: y_bar = T+/(J+2), pq = sum_b sum_{i in b} (1[y_i] - y_bar_b)^2 / (J+1).
    let mut rng = seeded_rng(708);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let mut tr = PriorTracker::new();
        let mut history: Vec<Vec<i64>> = Vec::new();
        let mut total = 0;
        while total < C7_HISTORY {
            let m = rng.random_range(1..=40).min(C7_HISTORY - total);
            let batch: Vec<i64> = (0..m).map(|_| if rng.random::<f64>() < 0.3 { 1 } else { -1 }).collect();
            tr.update(&batch).unwrap();
            history.push(batch);
            total += m;

            let all: Vec<i64> = history.iter().flatten().copied().collect();
            let jn = all.len() as f64;
            let pos = all.iter().filter(|&&y| y == 1).count() as f64;
            let mut seen = 0.0;
            let mut pos_seen = 0.0;
            let mut sq = 0.0;
            for b in &history {
                seen += b.len() as f64;
                pos_seen += b.iter().filter(|&&y| y == 1).count() as f64;
                let yb = pos_seen / (seen + 2.0);
                sq += b.iter().map(|&y| (if y == 1 { 1.0 } else { 0.0 } - yb).powi(2)).sum::<f64>();
            }
            let p_batch = pos / jn;
            let ybar = pos / (jn + 2.0);
            let pq_batch = sq / (jn + 1.0);
            worst = worst
                .max((tr.p_hat - p_batch).abs())
                .max((tr.y_bar - ybar).abs())
                .max((tr.pq_hat - pq_batch).abs());
        }
    }
    check(
        p_ok && pq_ok && worst <= C7_RECUR_TOL,
        format!(
            "mean p_hat {mp:.5} (|err| {:.1e} <= {:.1e}), mean pq_hat {mpq:.5} (|err| {:.1e} <= {:.1e}); \
             recurrence vs recomputation {worst:.1e} (<= {C7_RECUR_TOL:e})",
            (mp - C7_P).abs(),
            C7_SE_MULT * sep,
            (mpq - pq_true).abs(),
            C7_SE_MULT * sepq
        ),
    )
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let params = LeakyAuditParams {
        safety: C8_MU_SAFETY,
        probes: C8_PROBES,
        ..LeakyAuditParams::default()
    };
    let a = leaky_audit(&params, 808, Exec::default()).unwrap();
    let el = start.elapsed();
    let r = &a.report;
    check(
        r.violations == 0 && r.num_probes == C8_PROBES && el < C8_BUDGET,
        format!(
            "violations {} over {} probes (skipped {}), worst ratio {:.3}, mu {:.4} = {C8_MU_SAFETY} x {:.4}, \
             f* {:.6} (oracle grad norm {:.1e}), {el:.2?}",
            r.violations, r.num_probes, r.skipped, r.worst_ratio, r.mu_claimed, a.mu_closed_form, a.f_star, a.oracle_grad_norm
        ),
    )
}

/// Two-Gaussian task: d = 20, class means +-0.5/sqrt(20) per coordinate,
/// 9091 balanced draws with 90% of the negatives removed (about 5000
/// examples, 10:1). Train and test are independent draws.
fn race_task() -> (Dataset, Dataset) {
    let d = 20;
    let mp: Vec<f64> = (0..d).map(|_| 0.5 / (d as f64).sqrt()).collect();
    let mn: Vec<f64> = mp.iter().map(|x| -x).collect();
    let mut rng = seeded_rng(1);
    let tr = gen_two_gaussians(9091, d, &mp, &mn, 1.0, 0.5, &mut rng).unwrap();
    let tr = make_imbalanced(&tr, 0.9, &mut rng).unwrap();
    let te = gen_two_gaussians(9091, d, &mp, &mn, 1.0, 0.5, &mut rng).unwrap();
    let te = make_imbalanced(&te, 0.9, &mut rng).unwrap();
    (tr, te)
}

fn median(mut v: Vec<u64>) -> u64 {
    v.sort_unstable();
    v[v.len() / 2]
}

fn criterion_9() -> Outcome {
    let (tr, te) = race_task();
    let arch = Arch::LinearSigmoid { dim: 20 };
    let m0 = ModelParams::zeros(arch).unwrap();
    let oracle = full_batch_oracle(
        &m0,
        &tr,
        &OracleParams {
            max_iters: 2000,
            ..OracleParams::default()
        },
        Exec::default(),
    )
    .unwrap();
    let oracle_auc = evaluate(&oracle.model, &te, 0, Exec::default()).unwrap().auc;
    let target = C9_TARGET_FRAC * oracle_auc;
    let prior = ClassPrior::from_dataset(&tr).unwrap();
    let sp = ScheduleParams {
        eta0: 1.0,
        t0: 300,
        m0: 20,
        stages: 6,
        gamma: Some(10.0),
        ..ScheduleParams::default()
    };
    let pga = PgaParams { r1: 1e3, r2: 1e3 };
    let (mut a_s, mut b_s) = (Vec::new(), Vec::new());
    let mut slowest = Duration::ZERO;
    for seed in 0..C9_SEEDS {
        let opts = RunOptions {
            eval_every: 25,
            test: Some(&te),
            seed,
            ..RunOptions::new(PriorMode::Known(prior))
        };
        let t = Instant::now();
        let a = ppd_sg_run(&m0, &mut ResampleStream::new(&tr, seed).unwrap(), &sp, &opts).unwrap();
        slowest = slowest.max(t.elapsed());
        let t = Instant::now();
        let b = pga_run(&m0, &mut ResampleStream::new(&tr, seed).unwrap(), &sp, &pga, &opts).unwrap();
        slowest = slowest.max(t.elapsed());
        a_s.push(a.trace.samples_to_target(target).unwrap_or(u64::MAX));
        b_s.push(b.trace.samples_to_target(target).unwrap_or(u64::MAX));
    }
    let wins = a_s.iter().zip(&b_s).filter(|(a, b)| a < b).count();
    let (ma, mb) = (median(a_s.clone()), median(b_s.clone()));
    check(
        ma < mb && slowest < C9_BUDGET,
        format!(
            "target {target:.4} (= {C9_TARGET_FRAC} x oracle {oracle_auc:.4}); median samples PPD-SG {ma} vs PGA {mb} \
             over {C9_SEEDS} seeds (PPD-SG strictly fewer in {wins}); slowest run {slowest:.2?}"
        ),
    )
}

fn brute_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let (mut wins, mut ties) = (0u64, 0u64);
    for &a in pos {
        for &b in neg {
            if a > b {
                wins += 1;
            } else if a == b {
                ties += 1;
            }
        }
    }
    (wins as f64 + 0.5 * ties as f64) / (pos.len() as f64 * neg.len() as f64)
}

fn criterion_10() -> Outcome {
    let mut rng = seeded_rng(1010);
    let mut mismatches = 0;
    for i in 0..C10_INSTANCES {
        let np = rng.random_range(1..=60);
        let nn = rng.random_range(1..=60);
        // Coarse grids on half the instances force ties.
        let draw = |rng: &mut Rng| {
            if i % 2 == 0 {
                rng.random_range(0..8) as f64 / 4.0
            } else {
                rng.random::<f64>()
            }
        };
        let pos: Vec<f64> = (0..np).map(|_| draw(&mut rng)).collect();
        let neg: Vec<f64> = (0..nn).map(|_| draw(&mut rng)).collect();
        if auc_binary(&pos, &neg).unwrap() != brute_auc(&pos, &neg) {
            mismatches += 1;
        }
    }

    let c = 3;
    let examples: Vec<Example> = (0..30)
        .map(|i| Example::new(rand_vec(&mut rng, 2, 1.0), (i % c) as i64))
        .collect();
    let d = Dataset::new(examples, 2, Task::MultiClass { classes: c }).unwrap();
    let models: Vec<ModelParams> = (0..c)
        .map(|_| ModelParams::new(Arch::LinearSigmoid { dim: 2 }, rand_vec(&mut rng, 2, 1.0)).unwrap())
        .collect();
    let fast = multiclass_auc(&models, &d, Ties::Half).unwrap();
    let mut total = 0.0;
    for i in 0..c {
        let of = |k: usize| -> Vec<f64> {
            d.examples
                .iter()
                .filter(|e| e.y == k as i64)
                .map(|e| models[i].forward(&e.x).unwrap())
                .collect()
        };
        for j in (0..c).filter(|&j| j != i) {
            total += brute_auc(&of(i), &of(j));
        }
    }
    let slow = total / (c * (c - 1)) as f64;
    check(
        mismatches == 0 && fast == slow,
        format!(
            "binary: {mismatches} mismatches over {C10_INSTANCES} instances; multiclass {fast} vs brute force {slow}"
        ),
    )
}

fn criterion_11() -> Outcome {
    let mut rng = seeded_rng(1111);
    let d = gen_two_gaussians(600, 4, &[0.4; 4], &[-0.4; 4], 1.0, 0.2, &mut rng).unwrap();
    let m = ModelParams::init(Arch::mlp(4), &mut seeded_rng(7)).unwrap();
    let sp = ScheduleParams {
        eta0: 0.5,
        t0: 50,
        m0: 20,
        stages: 3,
        gamma: Some(5.0),
        ..ScheduleParams::default()
    };
    let run = |exec: Exec| {
        let opts = RunOptions {
            eval_every: 10,
            train: Some(&d),
            test: Some(&d),
            exec,
            seed: 3,
            ..RunOptions::new(PriorMode::Streaming {
                fallback: ClassPrior::new(0.5).unwrap(),
            })
        };
        let a = ppd_sg_run(&m, &mut ResampleStream::new(&d, 9).unwrap(), &sp, &opts).unwrap();
        let b = ppd_adagrad_run(&m, &mut ResampleStream::new(&d, 9).unwrap(), &sp, &opts).unwrap();
        let c = pga_run(&m, &mut ResampleStream::new(&d, 9).unwrap(), &sp, &PgaParams { r1: 100.0, r2: 100.0 }, &opts).unwrap();
        [a, b, c].map(|o| o.trace.to_csv_string())
    };
    let first = run(Exec::default());
    let second = run(Exec::default());
    let seq = run(Exec::Sequential);
    let same = first == second && first == seq;
    let rows: usize = first.iter().map(|s| s.lines().count()).sum();
    check(
        same,
        format!("3 solvers x repeated run (and sequential vs default executor): byte-identical CSV = {same} ({rows} rows)"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("saddle-point equivalence", criterion_1),
        ("gradient correctness", criterion_2),
        ("constant C", criterion_3),
        ("schedule closed forms", criterion_4),
        ("AdaGrad update and stopping time", criterion_5),
        ("dual-restart consistency", criterion_6),
        ("streaming estimators", criterion_7),
        ("PL audit", criterion_8),
        ("convergence race", criterion_9),
        ("AUC metric", criterion_10),
        ("determinism", criterion_11),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let (tag, detail) = match &outcome {
            Ok(m) => ("PASS", m),
            Err(m) => ("FAIL", m),
        };
        println!("criterion {:>2} {tag} [{name}] {detail} ({:.2?})", i + 1, start.elapsed());
        if outcome.is_err() {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 11 criteria PASS");
    } else {
        println!("acceptance: FAIL on criteria {failed:?}");
        std::process::exit(1);
    }
}
