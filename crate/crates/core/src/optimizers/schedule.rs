//! Stage schedules: the geometric closed forms tied to the PL constants,
//! the practical factor-of-three schedule, and the polynomial PGA schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Theoretical,
    #[default]
    Practical,
}

/// Constants driving the stagewise solvers.
///
/// `mu` and `smoothness` have no estimator and are only required in
/// theoretical mode. `l_tilde`, `grad_bound` and `sigma2` may be filled from
/// a calibration sample (see [`super::calibrate`]); `delta` defaults to a
/// calibrated bound on `‖ĝ‖∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleParams {
    pub mode: Mode,
    pub eta0: f64,
    pub t0: u64,
    pub m0: u64,
    pub stages: usize,
    pub gamma: Option<f64>,
    pub mu: Option<f64>,
    pub smoothness: Option<f64>,
    pub l_tilde: Option<f64>,
    pub grad_bound: Option<f64>,
    pub sigma2: Option<f64>,
    pub delta: Option<f64>,
    /// Hard cap on an adaptive AdaGrad stage.
    pub t_max: u64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        ScheduleParams {
            mode: Mode::Practical,
            eta0: 0.1,
            t0: 200,
            m0: 200,
            stages: 4,
            gamma: None,
            mu: None,
            smoothness: None,
            l_tilde: None,
            grad_bound: None,
            sigma2: None,
            delta: None,
            t_max: 1_000_000,
        }
    }
}

fn positive(field: &str, v: Option<f64>) -> Result<f64> {
    match v {
        Some(x) if x > 0.0 && !x.is_nan() => Ok(x),
        Some(x) => Err(Error::config(field, format!("{x} must be positive"))),
        None => Err(Error::config(field, "required in theoretical mode")),
    }
}

impl ScheduleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(Error::config("eta0", "must be positive and finite"));
        }
        if self.stages == 0 {
            return Err(Error::config("stages", "need at least one stage"));
        }
        if self.mode == Mode::Practical && (self.t0 == 0 || self.m0 == 0) {
            return Err(Error::config("t0/m0", "must be at least 1"));
        }
        if self.t_max == 0 {
            return Err(Error::config("t_max", "must be at least 1"));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0) {
                return Err(Error::config("gamma", "must be positive (inf disables the proximal term)"));
            }
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::config("delta", "must be positive"));
            }
        }
        if self.mode == Mode::Theoretical {
            self.rate()?;
            let l = positive("smoothness", self.smoothness)?;
            if let Some(g) = self.gamma {
                if g > 1.0 / l {
                    return Err(Error::config("gamma", "must not exceed 1/L in theoretical mode"));
                }
            }
        }
        Ok(())
    }

    /// Proximal parameter: explicit value, else `1/(2L)` in theoretical mode.
    pub fn effective_gamma(&self) -> Result<f64> {
        match (self.gamma, self.mode) {
            (Some(g), _) => Ok(g),
            (None, Mode::Theoretical) => Ok(0.5 / positive("smoothness", self.smoothness)?),
            (None, Mode::Practical) => Err(Error::config("gamma", "must be set in practical mode")),
        }
    }

    /// `(μ/L) / (5 + μ/L)`.
    fn rate(&self) -> Result<f64> {
        let ratio = positive("mu", self.mu)? / positive("smoothness", self.smoothness)?;
        Ok(ratio / (5.0 + ratio))
    }
}

/// How long a stage runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageLength {
    /// `T_k` averaged points.
    Fixed(u64),
    /// AdaGrad stopping time with multiplier `M_k` and coupling `c`.
    StoppingTime { m_big: f64, c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    pub k: usize,
    pub eta: f64,
    pub length: StageLength,
    /// Unrounded stage length (or `M_k` for a stopping-time stage).
    pub length_exact: f64,
    pub m_k: u64,
}

impl StagePlan {
    pub fn fixed_len(&self) -> Option<u64> {
        match self.length {
            StageLength::Fixed(t) => Some(t),
            StageLength::StoppingTime { .. } => None,
        }
    }
}

/// Which solver a theoretical schedule is for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Sg,
    AdaGrad { dim_u: usize },
}

/// `C = 2/ln(1/q) · q^(1/ln(1/q))` with `q = max(p, 1-p)`; equals `2/(e ln(1/q))`.
pub fn constant_c(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::config("p", format!("{p} is outside (0, 1)")));
    }
    let q = p.max(1.0 - p);
    let l = (1.0 / q).ln();
    Ok(2.0 / l * q.powf(1.0 / l))
}

fn ceil_count(v: f64, field: &str) -> Result<u64> {
    if !v.is_finite() || v > u64::MAX as f64 / 2.0 {
        return Err(Error::config(field, format!("schedule value {v} is not representable")));
    }
    Ok((v.ceil() as u64).max(1))
}

/// Stage-`k` plan (1-based) from the PL-rate closed forms.
///
/// SG: `η_k = η₀ e^{-(k-1)r}`, `T_k = max(2,16L̃²)/(Lη₀) e^{(k-1)r}`,
/// `m_k = 2(σ²+C)L / (p(1-p)G²η₀ max(2,16L̃²)) e^{kr}`.
/// AdaGrad: half-rate step decay, `M_k = 4c/(Lη₀) e^{(k-1)r/2}` with
/// `c = 1/sqrt(d+3)`, `m_k = 2(σ²+C) / (p(1-p)η₀²(d+3)) e^{kr}`.
pub fn schedule_theoretical(sp: &ScheduleParams, k: usize, p: f64, variant: Variant) -> Result<StagePlan> {
    if k == 0 {
        return Err(Error::config("k", "stages are numbered from 1"));
    }
    let r = sp.rate()?;
    let l = positive("smoothness", sp.smoothness)?;
    let sigma2 = match sp.sigma2 {
        Some(s) if s >= 0.0 => s,
        Some(s) => return Err(Error::config("sigma2", format!("{s} must be nonnegative"))),
        None => return Err(Error::config("sigma2", "required in theoretical mode")),
    };
    let c_const = constant_c(p)?;
    let pq = p * (1.0 - p);
    let km1 = (k - 1) as f64;
    match variant {
        Variant::Sg => {
            let lt = positive("l_tilde", sp.l_tilde)?;
            let g = positive("grad_bound", sp.grad_bound)?;
            let lead = (2.0_f64).max(16.0 * lt * lt);
            let t_exact = lead / (l * sp.eta0) * (km1 * r).exp();
            let m_exact = 2.0 * (sigma2 + c_const) * l / (pq * g * g * sp.eta0 * lead) * (k as f64 * r).exp();
            Ok(StagePlan {
                k,
                eta: sp.eta0 * (-km1 * r).exp(),
                length: StageLength::Fixed(ceil_count(t_exact, "T_k")?),
                length_exact: t_exact,
                m_k: ceil_count(m_exact, "m_k")?,
            })
        }
        Variant::AdaGrad { dim_u } => {
            let c = 1.0 / (dim_u as f64).sqrt();
            let m_big = 4.0 * c / (l * sp.eta0) * (0.5 * km1 * r).exp();
            let m_exact = 2.0 * (sigma2 + c_const) / (pq * sp.eta0 * sp.eta0 * dim_u as f64) * (k as f64 * r).exp();
            Ok(StagePlan {
                k,
                eta: sp.eta0 * (-0.5 * km1 * r).exp(),
                length: StageLength::StoppingTime { m_big, c },
                length_exact: m_big,
                m_k: ceil_count(m_exact, "m_k")?,
            })
        }
    }
}

/// `η_k = η₀/3^{k-1}`, `T_k = T₀·3^{k-1}`, `m_k = m₀·3^{k-1}` (1-based `k`).
pub fn schedule_practical(sp: &ScheduleParams, k: usize) -> Result<StagePlan> {
    if k == 0 {
        return Err(Error::config("k", "stages are numbered from 1"));
    }
    let pow = 3u64
        .checked_pow((k - 1) as u32)
        .ok_or_else(|| Error::config("stages", "3^(k-1) overflows"))?;
    let t = sp
        .t0
        .checked_mul(pow)
        .ok_or_else(|| Error::config("t0", "T_k overflows"))?;
    let m = sp
        .m0
        .checked_mul(pow)
        .ok_or_else(|| Error::config("m0", "m_k overflows"))?;
    Ok(StagePlan {
        k,
        eta: sp.eta0 / 3f64.powi((k - 1) as i32),
        length: StageLength::Fixed(t),
        length_exact: t as f64,
        m_k: m,
    })
}

/// Dispatches on the mode in `sp`.
pub fn stage_plan(sp: &ScheduleParams, k: usize, p: f64, variant: Variant) -> Result<StagePlan> {
    match sp.mode {
        Mode::Theoretical => schedule_theoretical(sp, k, p, variant),
        Mode::Practical => schedule_practical(sp, k),
    }
}

/// PGA: `η_k = η₀/k`, `T_k = T₀·k²`.
pub fn schedule_pga(sp: &ScheduleParams, k: usize) -> Result<StagePlan> {
    if k == 0 {
        return Err(Error::config("k", "stages are numbered from 1"));
    }
    let t = sp
        .t0
        .checked_mul((k * k) as u64)
        .ok_or_else(|| Error::config("t0", "T_k overflows"))?;
    Ok(StagePlan {
        k,
        eta: sp.eta0 / k as f64,
        length: StageLength::Fixed(t),
        length_exact: t as f64,
        m_k: 0,
    })
}
