use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use ppdauc::data::{
    gen_two_gaussians, make_imbalanced, read_csv, read_libsvm, write_libsvm, Dataset, LabelMode, ResampleStream,
};
use ppdauc::eval::evaluate;
use ppdauc::model::ModelParams;
use ppdauc::numerics::{derive_seed, seeded_rng};
use ppdauc::objective::ClassPrior;
use ppdauc::optimizers::{
    ce_sgd_run, full_batch_oracle, oauc_run, pga_run, ppd_adagrad_run, ppd_sg_run, CeParams, OaucParams,
    PgaParams, PriorMode, RunOptions, RunOutput,
};
use ppdauc::parallel::Exec;
use ppdauc::plcheck::leaky_audit;
use ppdauc::{Error, Result};

use crate::config::{Config, DataSource, ExecKind, PriorKind, OPTIMIZERS};
use crate::output::{write_atomic, write_json};

// Sub-seed indices, fixed so that runs are reproducible from the master seed.
const SEED_TRAIN: u64 = 0;
const SEED_TEST: u64 = 1;
const SEED_INIT: u64 = 2;
const SEED_STREAM: u64 = 100;
const SEED_OPT: u64 = 200;

pub struct Data {
    pub train: Dataset,
    pub test: Dataset,
}

fn pad(mut d: Dataset, dim: usize) -> Dataset {
    for e in &mut d.examples {
        e.x.resize(dim, 0.0);
    }
    d.dim = dim;
    d
}

fn read_file(cfg: &Config, path: &Path) -> Result<Dataset> {
    match cfg.data.source {
        DataSource::Csv => read_csv(path, cfg.data.label_column, LabelMode::Binary),
        _ => read_libsvm(path, LabelMode::Binary),
    }
}

/// Builds the train/test pair: negatives are removed from the training set
/// (and optionally the test set) at rate `drop_frac`.
pub fn load_data(cfg: &Config) -> Result<Data> {
    let d = &cfg.data;
    let mut rng_train = seeded_rng(derive_seed(cfg.seed, SEED_TRAIN));
    let mut rng_test = seeded_rng(derive_seed(cfg.seed, SEED_TEST));
    let (train, test) = match d.source {
        DataSource::Gaussian => {
            let half = 0.5 * d.separation / (d.dim as f64).sqrt();
            let mp = vec![half; d.dim];
            let mn = vec![-half; d.dim];
            let tr = gen_two_gaussians(d.n, d.dim, &mp, &mn, 1.0, d.p, &mut rng_train)?;
            let te = gen_two_gaussians(d.n_test, d.dim, &mp, &mn, 1.0, d.p, &mut rng_test)?;
            (tr, te)
        }
        DataSource::Libsvm | DataSource::Csv => {
            let path = d.path.as_ref().ok_or_else(|| Error::config("data.path", "required"))?;
            let all = read_file(cfg, path)?;
            match &d.test_path {
                Some(tp) => {
                    let te = read_file(cfg, tp)?;
                    let dim = all.dim.max(te.dim);
                    (pad(all, dim), pad(te, dim))
                }
                None => all.split(d.test_frac, &mut rng_test)?,
            }
        }
    };
    let train = make_imbalanced(&train, d.drop_frac, &mut rng_train)?;
    let test = if d.imbalance_test {
        make_imbalanced(&test, d.drop_frac, &mut rng_test)?
    } else {
        test
    };
    for (name, set) in [("train", &train), ("test", &test)] {
        let (p, n) = set.class_counts();
        if p == 0 || n == 0 {
            return Err(Error::config("data", format!("{name} set lacks a class ({p} positive, {n} negative)")));
        }
    }
    Ok(Data { train, test })
}

fn exec(cfg: &Config) -> Exec {
    match cfg.run.exec {
        ExecKind::Sequential => Exec::Sequential,
        ExecKind::Parallel => Exec::default(),
    }
}

pub fn initial_model(cfg: &Config, dim: usize) -> Result<ModelParams> {
    let arch = cfg.model.arch(dim);
    if cfg.model.zero_init() {
        ModelParams::zeros(arch)
    } else {
        ModelParams::init(arch, &mut seeded_rng(derive_seed(cfg.seed, SEED_INIT)))
    }
}

fn contender_index(name: &str) -> u64 {
    OPTIMIZERS.iter().position(|o| *o == name).unwrap_or(0) as u64
}

/// Runs one optimizer by name from `model` on the training stream.
pub fn run_optimizer(cfg: &Config, name: &str, data: &Data, model: &ModelParams) -> Result<RunOutput> {
    let idx = contender_index(name);
    let prior = match cfg.run.prior {
        PriorKind::Known => PriorMode::Known(ClassPrior::from_dataset(&data.train)?),
        PriorKind::Streaming => PriorMode::Streaming {
            fallback: ClassPrior::new(0.5)?,
        },
    };
    let opts = RunOptions {
        batch: cfg.run.batch,
        eval_every: cfg.run.eval_every,
        train: Some(&data.train),
        test: Some(&data.test),
        exec: exec(cfg),
        wall_clock: cfg.run.wall_clock,
        seed: derive_seed(cfg.seed, SEED_OPT + idx),
        calibration: cfg.run.calibration,
        run_id: name.to_string(),
        ..RunOptions::new(prior)
    };
    let mut src = ResampleStream::new(&data.train, derive_seed(cfg.seed, SEED_STREAM + idx))?;
    let sp = &cfg.schedule;
    let out = match name {
        "ppd_sg" => ppd_sg_run(model, &mut src, sp, &opts),
        "ppd_adagrad" => ppd_adagrad_run(model, &mut src, sp, &opts),
        "pga" => pga_run(
            model,
            &mut src,
            sp,
            &PgaParams {
                r1: cfg.pga.r1,
                r2: cfg.pga.r2,
            },
            &opts,
        ),
        "oauc" => {
            let p = OaucParams {
                eta0: cfg.oauc.eta0,
                steps: cfg.oauc.steps.map_or_else(|| cfg.matched_steps(), Ok)?,
                rule: cfg.oauc.rule,
            };
            oauc_run(model, &mut src, &p, &opts)
        }
        "ce_sgd" => {
            let p = CeParams {
                eta0: cfg.ce.eta0,
                steps: cfg.ce.steps.map_or_else(|| cfg.matched_steps(), Ok)?,
                decay_steps: cfg.ce.decay_steps.clone(),
            };
            ce_sgd_run(model, &mut src, &p, &opts)
        }
        other => return Err(Error::config("optimizer", format!("unknown `{other}`"))),
    };
    out.map_err(|e| match name {
        "ppd_sg" | "ppd_adagrad" | "pga" => crate::config::prefix(e, "schedule"),
        "oauc" => crate::config::prefix(e, "oauc"),
        "ce_sgd" => crate::config::prefix(e, "ce"),
        _ => e,
    })
}

fn selected(cfg: &Config) -> Vec<&'static str> {
    if cfg.optimizer == "all" {
        OPTIMIZERS.to_vec()
    } else {
        OPTIMIZERS.iter().copied().filter(|o| *o == cfg.optimizer).collect()
    }
}

#[derive(Serialize)]
struct SetStats {
    n: usize,
    n_pos: usize,
    n_neg: usize,
    dim: usize,
}

fn stats(d: &Dataset) -> SetStats {
    let (n_pos, n_neg) = d.class_counts();
    SetStats {
        n: d.len(),
        n_pos,
        n_neg,
        dim: d.dim,
    }
}

fn data_summary(data: &Data) -> Value {
    json!({ "train": stats(&data.train), "test": stats(&data.test) })
}

fn run_summary(out: &RunOutput, data: &Data, exec: Exec) -> Result<Value> {
    let test = evaluate(&out.model, &data.test, 0, exec)?;
    let train = evaluate(&out.model, &data.train, 0, exec)?;
    let last = out.trace.last_record();
    Ok(json!({
        "final": {
            "train_auc": train.auc,
            "test_auc": test.auc,
            "pairwise_loss": train.pairwise_loss,
            "samples": last.map(|r| r.samples),
            "steps": last.map(|r| r.step),
        },
        "state": { "a": out.state.a, "b": out.state.b, "alpha": out.state.alpha },
        "stages": out.trace.stages,
        "adagrad": out.trace.adagrad,
        "events": out.trace.events,
    }))
}

fn write_outputs(dir: &Path, name: &str, out: &RunOutput) -> Result<()> {
    write_atomic(&dir.join(format!("{name}.csv")), out.trace.to_csv_string().as_bytes())?;
    let mut ckpt = out.model.to_json()?;
    ckpt.push('\n');
    write_atomic(&dir.join(format!("{name}_model.json")), ckpt.as_bytes())
}

fn run_all(cfg: &Config, names: &[&str], data: &Data, model: &ModelParams) -> Result<Vec<RunOutput>> {
    // Each contender owns its derived seeds, so the parallel schedule does
    // not affect any trace.
    names
        .par_iter()
        .map(|name| run_optimizer(cfg, name, data, model))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

pub fn cmd_run(cfg: &Config, out_dir: &Path) -> Result<()> {
    let data = load_data(cfg)?;
    let model = initial_model(cfg, data.train.dim)?;
    let names = selected(cfg);
    let outs = run_all(cfg, &names, &data, &model)?;
    let mut per = serde_json::Map::new();
    for (name, out) in names.iter().zip(&outs) {
        write_outputs(out_dir, name, out)?;
        let s = run_summary(out, &data, exec(cfg))?;
        eprintln!(
            "{name}: test_auc {:.4}, samples {}",
            s["final"]["test_auc"].as_f64().unwrap_or(f64::NAN),
            s["final"]["samples"]
        );
        per.insert(name.to_string(), s);
    }
    let summary = json!({
        "command": "run",
        "seed": cfg.seed,
        "data": data_summary(&data),
        "optimizers": per,
        "config": cfg.to_json_value(),
    });
    write_json(&out_dir.join("summary.json"), &summary)
}

pub fn cmd_race(cfg: &Config, out_dir: &Path) -> Result<()> {
    let data = load_data(cfg)?;
    let model = initial_model(cfg, data.train.dim)?;
    let ex = exec(cfg);
    let oracle = full_batch_oracle(&model, &data.train, &cfg.oracle, ex)?;
    let oracle_auc = evaluate(&oracle.model, &data.test, 0, ex)?.auc;
    let target = cfg.race.target_frac * oracle_auc;
    let names = selected(&Config {
        optimizer: "all".into(),
        ..cfg.clone()
    });
    let outs = run_all(cfg, &names, &data, &model)?;
    let mut rows = Vec::new();
    for (name, out) in names.iter().zip(&outs) {
        write_outputs(out_dir, name, out)?;
        let reached = out.trace.samples_to_target(target);
        let s = run_summary(out, &data, ex)?;
        eprintln!("{name}: samples to target {}", reached.map_or("-".into(), |v| v.to_string()));
        rows.push(json!({
            "optimizer": name,
            "samples_to_target": reached,
            "final": s["final"],
            "events": s["events"],
        }));
    }
    let winner = names
        .iter()
        .zip(&outs)
        .filter_map(|(n, o)| o.trace.samples_to_target(target).map(|s| (s, *n)))
        .min()
        .map(|(_, n)| n);
    let summary = json!({
        "command": "race",
        "seed": cfg.seed,
        "data": data_summary(&data),
        "oracle": { "test_auc": oracle_auc, "train_loss": oracle.loss, "grad_norm": oracle.grad_norm, "iters": oracle.iters },
        "target_auc": target,
        "contenders": rows,
        "winner": winner,
        "config": cfg.to_json_value(),
    });
    write_json(&out_dir.join("summary.json"), &summary)
}

pub fn cmd_plcheck(cfg: &Config, out_dir: &Path) -> Result<()> {
    let audit = leaky_audit(&cfg.plcheck, cfg.seed, exec(cfg)).map_err(|e| crate::config::prefix(e, "plcheck"))?;
    let r = &audit.report;
    eprintln!(
        "plcheck: {} violations over {} probes, worst ratio {:.4}, mu {:.5}",
        r.violations, r.num_probes, r.worst_ratio, r.mu_claimed
    );
    write_json(&out_dir.join("plreport.json"), r)?;
    let summary = json!({
        "command": "plcheck",
        "seed": cfg.seed,
        "report": r,
        "f_star": audit.f_star,
        "mu_closed_form": audit.mu_closed_form,
        "oracle_grad_norm": audit.oracle_grad_norm,
        "config": cfg.to_json_value(),
    });
    write_json(&out_dir.join("summary.json"), &summary)
}

pub fn cmd_datagen(cfg: &Config, out_dir: &Path) -> Result<()> {
    let data = load_data(cfg)?;
    for (name, d) in [("train.libsvm", &data.train), ("test.libsvm", &data.test)] {
        let mut buf = Vec::new();
        write_libsvm(d, &mut buf).map_err(|e| Error::Io {
            path: out_dir.join(name),
            source: e,
        })?;
        write_atomic(&out_dir.join(name), &buf)?;
    }
    let summary = json!({
        "command": "datagen",
        "seed": cfg.seed,
        "data": data_summary(&data),
        "config": cfg.to_json_value(),
    });
    eprintln!("datagen: {}", summary["data"]);
    write_json(&out_dir.join("summary.json"), &summary)
}
