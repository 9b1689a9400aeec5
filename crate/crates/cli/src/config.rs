use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ppdauc::model::{Arch, DEFAULT_C1, DEFAULT_C2, DEFAULT_HIDDEN};
use ppdauc::optimizers::{
    schedule_practical, Mode, OracleParams, ScheduleParams, StageLength, StepRule,
};
use ppdauc::plcheck::LeakyAuditParams;
use ppdauc::{Error, Result};

/// `γ` used in practical mode when the file leaves it unset; theoretical
/// mode derives `γ = 1/(2L)` instead.
pub const PRACTICAL_GAMMA: f64 = 10.0;

pub const OPTIMIZERS: [&str; 5] = ["ppd_sg", "ppd_adagrad", "pga", "oauc", "ce_sgd"];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    /// One of [`OPTIMIZERS`] or `all`.
    pub optimizer: String,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub schedule: ScheduleParams,
    pub pga: PgaConfig,
    pub oauc: OaucConfig,
    pub ce: CeConfig,
    pub run: RunConfig,
    pub oracle: OracleParams,
    pub race: RaceConfig,
    pub plcheck: LeakyAuditParams,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            optimizer: "ppd_sg".into(),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            schedule: ScheduleParams {
                eta0: 1.0,
                t0: 300,
                m0: 20,
                stages: 6,
                ..ScheduleParams::default()
            },
            pga: PgaConfig::default(),
            oauc: OaucConfig::default(),
            ce: CeConfig::default(),
            run: RunConfig::default(),
            oracle: OracleParams::default(),
            race: RaceConfig::default(),
            plcheck: LeakyAuditParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Gaussian,
    Libsvm,
    Csv,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    /// Draws before the imbalanced split (gaussian source).
    pub n: usize,
    pub n_test: usize,
    pub dim: usize,
    /// Distance between the class means.
    pub separation: f64,
    pub p: f64,
    /// Fraction of training negatives removed.
    pub drop_frac: f64,
    /// Also remove negatives from the test set.
    pub imbalance_test: bool,
    pub path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    /// Held-out fraction when no `test_path` is given.
    pub test_frac: f64,
    pub label_column: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Gaussian,
            n: 9091,
            n_test: 2000,
            dim: 20,
            separation: 1.0,
            p: 0.5,
            drop_frac: 0.9,
            imbalance_test: false,
            path: None,
            test_path: None,
            test_frac: 0.2,
            label_column: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    Linear,
    Mlp,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub arch: ArchKind,
    pub hidden: usize,
    pub c1: f64,
    pub c2: f64,
    /// Start from all-zero weights instead of a seeded random init. Defaults
    /// to zeros for the linear model and a random init for the MLP.
    pub zero_init: Option<bool>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            arch: ArchKind::Linear,
            hidden: DEFAULT_HIDDEN,
            c1: DEFAULT_C1,
            c2: DEFAULT_C2,
            zero_init: None,
        }
    }
}

impl ModelConfig {
    pub fn zero_init(&self) -> bool {
        self.zero_init.unwrap_or(self.arch == ArchKind::Linear)
    }

    pub fn arch(&self, dim: usize) -> Arch {
        match self.arch {
            ArchKind::Linear => Arch::LinearSigmoid { dim },
            ArchKind::Mlp => Arch::Mlp {
                dim,
                hidden: self.hidden,
                c1: self.c1,
                c2: self.c2,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PgaConfig {
    pub r1: f64,
    pub r2: f64,
}

impl Default for PgaConfig {
    fn default() -> Self {
        PgaConfig { r1: 1e3, r2: 1e3 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OaucConfig {
    pub eta0: f64,
    /// Defaults to the practical PPD-SG iteration budget.
    pub steps: Option<u64>,
    pub rule: StepRule,
}

impl Default for OaucConfig {
    fn default() -> Self {
        OaucConfig {
            eta0: 1.0,
            steps: None,
            rule: StepRule::InvSqrt,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CeConfig {
    pub eta0: f64,
    pub steps: Option<u64>,
    pub decay_steps: Vec<u64>,
}

impl Default for CeConfig {
    fn default() -> Self {
        CeConfig {
            eta0: 0.1,
            steps: None,
            decay_steps: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    /// Class prior computed from the training set.
    Known,
    /// Online estimates with a 0.5 fallback.
    Streaming,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecKind {
    Parallel,
    Sequential,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub batch: usize,
    pub eval_every: u64,
    pub prior: PriorKind,
    pub exec: ExecKind,
    /// Record wall-clock time (makes traces non-reproducible).
    pub wall_clock: bool,
    pub calibration: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            batch: 1,
            eval_every: 100,
            prior: PriorKind::Known,
            exec: ExecKind::Parallel,
            wall_clock: false,
            calibration: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RaceConfig {
    /// Target test AUC as a fraction of the full-batch oracle's.
    pub target_frac: f64,
}

impl Default for RaceConfig {
    fn default() -> Self {
        RaceConfig { target_frac: 0.95 }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub optimizer: Option<String>,
    pub mode: Option<Mode>,
}

impl Config {
    /// Parses `text` layered over [`Config::default`]: a table in the file
    /// only replaces the keys it names.
    pub fn from_toml(text: &str) -> Result<Config> {
        let de_err = |e: toml::de::Error| Error::config(toml_field(&e), e.message().to_string());
        let user: toml::Table = toml::from_str(text).map_err(de_err)?;
        let mut base = toml::Table::try_from(Config::default())
            .map_err(|e| Error::config("config", e.to_string()))?;
        merge(&mut base, user);
        toml::Value::Table(base).try_into().map_err(de_err)
    }

    pub fn load(path: Option<&Path>, ov: &Overrides) -> Result<Config> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::config("config", format!("cannot read {}: {e}", p.display())))?;
                Config::from_toml(&text)?
            }
            None => Config::default(),
        };
        if let Some(s) = ov.seed {
            cfg.seed = s;
        }
        if let Some(o) = &ov.optimizer {
            cfg.optimizer = o.clone();
        }
        if let Some(m) = ov.mode {
            cfg.schedule.mode = m;
        }
        if cfg.schedule.mode == Mode::Practical && cfg.schedule.gamma.is_none() {
            cfg.schedule.gamma = Some(PRACTICAL_GAMMA);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.optimizer != "all" && !OPTIMIZERS.contains(&self.optimizer.as_str()) {
            return Err(Error::config(
                "optimizer",
                format!("unknown `{}`; expected one of {} or all", self.optimizer, OPTIMIZERS.join(", ")),
            ));
        }
        let d = &self.data;
        if d.dim == 0 {
            return Err(Error::config("data.dim", "must be positive"));
        }
        if !(d.separation >= 0.0 && d.separation.is_finite()) {
            return Err(Error::config("data.separation", "must be nonnegative"));
        }
        if !(0.0..1.0).contains(&d.drop_frac) {
            return Err(Error::config("data.drop_frac", "must lie in [0, 1)"));
        }
        if !(d.test_frac > 0.0 && d.test_frac < 1.0) {
            return Err(Error::config("data.test_frac", "must lie in (0, 1)"));
        }
        if d.source != DataSource::Gaussian && d.path.is_none() {
            return Err(Error::config("data.path", "required for file sources"));
        }
        if self.model.arch == ArchKind::Mlp && self.model.hidden == 0 {
            return Err(Error::config("model.hidden", "must be positive"));
        }
        if self.run.eval_every == 0 {
            return Err(Error::config("run.eval_every", "must be positive"));
        }
        if !(self.race.target_frac > 0.0 && self.race.target_frac <= 1.0) {
            return Err(Error::config("race.target_frac", "must lie in (0, 1]"));
        }
        self.schedule.validate().map_err(|e| prefix(e, "schedule"))?;
        Ok(())
    }

    /// Iterations PPD-SG would take under the practical schedule; used as
    /// the default budget for the single-loop baselines.
    pub fn matched_steps(&self) -> Result<u64> {
        let practical = ScheduleParams {
            mode: Mode::Practical,
            ..self.schedule.clone()
        };
        let mut total = 0u64;
        for k in 1..=practical.stages {
            if let StageLength::Fixed(t) = schedule_practical(&practical, k)?.length {
                total = total.saturating_add(t.saturating_sub(1).max(1));
            }
        }
        Ok(total.max(1))
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}

/// Qualifies the field of a config error with its section.
pub fn prefix(e: Error, section: &str) -> Error {
    match e {
        Error::Config { field, reason } if !field.contains('.') => Error::Config {
            field: format!("{section}.{field}"),
            reason,
        },
        other => other,
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Best-effort name of the offending key in a TOML error.
fn toml_field(e: &toml::de::Error) -> String {
    let msg = e.message();
    for marker in ["unknown field `", "missing field `"] {
        if let Some(i) = msg.find(marker) {
            let rest = &msg[i + marker.len()..];
            if let Some(end) = rest.find('`') {
                return rest[..end].to_string();
            }
        }
    }
    "config".into()
}
