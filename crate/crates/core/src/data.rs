//! Labeled examples, synthetic generators, imbalanced-split construction and
//! LIBSVM / CSV ingestion.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{derive_seed, seeded_rng, standard_normal, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub x: Vec<f64>,
    /// `-1`/`+1` for binary tasks, `0..c` for multi-class tasks.
    pub y: i64,
}

impl Example {
    pub fn new(x: Vec<f64>, y: i64) -> Self {
        Example { x, y }
    }

    pub fn is_positive(&self) -> bool {
        self.y == 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Binary,
    MultiClass { classes: usize },
}

/// How raw file labels are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelMode {
    /// `{0, -1} -> -1`, `{1, +1} -> +1`.
    Binary,
    /// Non-negative integers taken verbatim.
    MultiClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub dim: usize,
    pub task: Task,
}

impl Dataset {
    pub fn new(examples: Vec<Example>, dim: usize, task: Task) -> Result<Self> {
        for e in &examples {
            if e.x.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: e.x.len(),
                });
            }
            check_label(e.y, task)?;
        }
        Ok(Dataset { examples, dim, task })
    }

    pub fn empty(dim: usize, task: Task) -> Self {
        Dataset {
            examples: Vec::new(),
            dim,
            task,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        match self.task {
            Task::Binary => 2,
            Task::MultiClass { classes } => classes,
        }
    }

    /// `(positives, negatives)` for a binary dataset.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.examples.iter().filter(|e| e.y == 1).count();
        (pos, self.examples.len() - pos)
    }

    pub fn positive_fraction(&self) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        let (pos, _) = self.class_counts();
        Some(pos as f64 / self.len() as f64)
    }

    /// Per-class example counts for a multi-class dataset.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_classes()];
        for e in &self.examples {
            let idx = match self.task {
                Task::Binary => usize::from(e.y == 1),
                Task::MultiClass { .. } => e.y as usize,
            };
            h[idx] += 1;
        }
        h
    }

    /// Maps a multi-class dataset onto `+1` (classes listed in `positive`)
    /// and `-1` (all others).
    pub fn binarize(&self, positive: &[i64]) -> Result<Dataset> {
        if self.task == Task::Binary {
            return Ok(self.clone());
        }
        let examples = self
            .examples
            .iter()
            .map(|e| Example::new(e.x.clone(), if positive.contains(&e.y) { 1 } else { -1 }))
            .collect();
        Ok(Dataset {
            examples,
            dim: self.dim,
            task: Task::Binary,
        })
    }

    pub fn shuffled(&self, rng: &mut Rng) -> Dataset {
        let mut out = self.clone();
        out.examples.shuffle(rng);
        out
    }

    /// Random split into `(train, test)` with `test_frac` of the examples held out.
    pub fn split(&self, test_frac: f64, rng: &mut Rng) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&test_frac) {
            return Err(Error::config("test_frac", "must lie in [0, 1)"));
        }
        let shuffled = self.shuffled(rng);
        let n_test = (test_frac * self.len() as f64).round() as usize;
        let mut examples = shuffled.examples;
        let train = examples.split_off(n_test);
        Ok((
            Dataset {
                examples: train,
                dim: self.dim,
                task: self.task,
            },
            Dataset {
                examples,
                dim: self.dim,
                task: self.task,
            },
        ))
    }
}

fn check_label(y: i64, task: Task) -> Result<()> {
    match task {
        Task::Binary if y == 1 || y == -1 => Ok(()),
        Task::Binary => Err(Error::Label {
            label: y,
            domain: "{-1, +1}".into(),
        }),
        Task::MultiClass { classes } if (0..classes as i64).contains(&y) => Ok(()),
        Task::MultiClass { classes } => Err(Error::Label {
            label: y,
            domain: format!("0..{classes}"),
        }),
    }
}

fn check_prob(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::config("p", format!("{p} is outside (0, 1)")))
    }
}

/// Two isotropic Gaussian classes; labels are Bernoulli(`p`) on `+1`.
pub fn gen_two_gaussians(
    n: usize,
    dim: usize,
    mean_pos: &[f64],
    mean_neg: &[f64],
    scale: f64,
    p: f64,
    rng: &mut Rng,
) -> Result<Dataset> {
    check_prob(p)?;
    if !(scale > 0.0) {
        return Err(Error::config("scale", "must be positive"));
    }
    for m in [mean_pos, mean_neg] {
        if m.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: m.len(),
            });
        }
    }
    let examples = (0..n)
        .map(|_| {
            let positive = rng.random::<f64>() < p;
            let mean = if positive { mean_pos } else { mean_neg };
            let x = mean.iter().map(|m| m + scale * standard_normal(rng)).collect();
            Example::new(x, if positive { 1 } else { -1 })
        })
        .collect();
    Ok(Dataset {
        examples,
        dim,
        task: Task::Binary,
    })
}

/// Gaussian blobs, one per class, with class priors `priors`.
pub fn gen_gaussian_classes(
    n: usize,
    means: &[Vec<f64>],
    scale: f64,
    priors: &[f64],
    rng: &mut Rng,
) -> Result<Dataset> {
    if means.is_empty() || means.len() != priors.len() {
        return Err(Error::config("priors", "need one prior per class mean"));
    }
    let total: f64 = priors.iter().sum();
    if priors.iter().any(|&q| q < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::config("priors", "must be nonnegative and sum to 1"));
    }
    let dim = means[0].len();
    if means.iter().any(|m| m.len() != dim) {
        return Err(Error::config("means", "class means differ in dimension"));
    }
    let examples = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut class = priors.len() - 1;
            for (c, q) in priors.iter().enumerate() {
                acc += q;
                if u < acc {
                    class = c;
                    break;
                }
            }
            let x = means[class]
                .iter()
                .map(|m| m + scale * standard_normal(rng))
                .collect();
            Example::new(x, class as i64)
        })
        .collect();
    Ok(Dataset {
        examples,
        dim,
        task: Task::MultiClass {
            classes: priors.len(),
        },
    })
}

/// Drops negatives so that exactly `floor((1 - drop_frac) * #neg)` remain.
/// Positives are untouched; the result is shuffled.
pub fn make_imbalanced(d: &Dataset, drop_frac: f64, rng: &mut Rng) -> Result<Dataset> {
    if d.task != Task::Binary {
        return Err(Error::Unsupported(
            "imbalanced split needs binary labels".into(),
        ));
    }
    if !(0.0..1.0).contains(&drop_frac) {
        return Err(Error::config("drop_frac", "must lie in [0, 1)"));
    }
    let (pos, neg): (Vec<&Example>, Vec<&Example>) = d.examples.iter().partition(|e| e.y == 1);
    let keep = ((1.0 - drop_frac) * neg.len() as f64 + 1e-9).floor() as usize;
    let keep = keep.min(neg.len());
    let mut chosen = index::sample(rng, neg.len(), keep).into_vec();
    chosen.sort_unstable();
    let mut examples: Vec<Example> = pos.into_iter().cloned().collect();
    examples.extend(chosen.into_iter().map(|i| neg[i].clone()));
    examples.shuffle(rng);
    Ok(Dataset {
        examples,
        dim: d.dim,
        task: Task::Binary,
    })
}

fn parse_label(raw: &str, mode: LabelMode, line: usize) -> Result<i64> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::Parse {
        line,
        reason: format!("bad label `{raw}`"),
    })?;
    if v.fract() != 0.0 {
        return Err(Error::Parse {
            line,
            reason: format!("non-integer label `{raw}`"),
        });
    }
    let v = v as i64;
    match mode {
        LabelMode::Binary => match v {
            1 => Ok(1),
            0 | -1 => Ok(-1),
            other => Err(Error::Label {
                label: other,
                domain: "{-1, 0, +1}".into(),
            }),
        },
        LabelMode::MultiClass if v >= 0 => Ok(v),
        LabelMode::MultiClass => Err(Error::Label {
            label: v,
            domain: "non-negative integers".into(),
        }),
    }
}

fn task_for(mode: LabelMode, examples: &[Example]) -> Task {
    match mode {
        LabelMode::Binary => Task::Binary,
        LabelMode::MultiClass => Task::MultiClass {
            classes: examples.iter().map(|e| e.y as usize + 1).max().unwrap_or(0),
        },
    }
}

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Parses `label idx:val ...` records (1-based indices).
pub fn parse_libsvm<R: BufRead>(reader: R, mode: LabelMode) -> Result<Dataset> {
    let mut rows: Vec<(i64, Vec<(usize, f64)>)> = Vec::new();
    let mut dim = 0;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            reason: e.to_string(),
        })?;
        let line = line.trim_end_matches('\r').trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label = parse_label(tokens.next().unwrap_or_default(), mode, lineno)?;
        let mut feats = Vec::new();
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno,
                reason: format!("expected idx:val, got `{tok}`"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line: lineno,
                reason: format!("bad index `{idx}`"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: lineno,
                    reason: "feature indices are 1-based".into(),
                });
            }
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                line: lineno,
                reason: format!("bad value `{val}`"),
            })?;
            if !val.is_finite() {
                return Err(Error::Parse {
                    line: lineno,
                    reason: "non-finite feature".into(),
                });
            }
            dim = dim.max(idx);
            feats.push((idx - 1, val));
        }
        rows.push((label, feats));
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("libsvm file has no records".into()));
    }
    let examples: Vec<Example> = rows
        .into_iter()
        .map(|(y, feats)| {
            let mut x = vec![0.0; dim];
            for (j, v) in feats {
                x[j] = v;
            }
            Example::new(x, y)
        })
        .collect();
    let task = task_for(mode, &examples);
    Ok(Dataset { examples, dim, task })
}

pub fn read_libsvm(path: impl AsRef<Path>, mode: LabelMode) -> Result<Dataset> {
    parse_libsvm(open(path.as_ref())?, mode)
}

/// Writes non-zero features only; floats use shortest round-trip formatting.
pub fn write_libsvm<W: Write>(d: &Dataset, mut out: W) -> std::io::Result<()> {
    for e in &d.examples {
        match d.task {
            Task::Binary => write!(out, "{}", if e.y == 1 { "+1" } else { "-1" })?,
            Task::MultiClass { .. } => write!(out, "{}", e.y)?,
        }
        for (j, v) in e.x.iter().enumerate() {
            if *v != 0.0 {
                write!(out, " {}:{:?}", j + 1, v)?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Parses a CSV with a header row. `label_column` is zero-based.
pub fn parse_csv<R: BufRead>(reader: R, label_column: usize, mode: LabelMode) -> Result<Dataset> {
    let mut lines = reader.lines().enumerate();
    let ncols = loop {
        match lines.next() {
            None => return Err(Error::EmptyInput("csv file is empty".into())),
            Some((i, line)) => {
                let line = line.map_err(|e| Error::Parse {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
                let line = line.trim_end_matches('\r');
                if !line.trim().is_empty() {
                    break line.split(',').count();
                }
            }
        }
    };
    if label_column >= ncols {
        return Err(Error::config(
            "label_column",
            format!("{label_column} out of range for {ncols} columns"),
        ));
    }
    let mut examples = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            reason: e.to_string(),
        })?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != ncols {
            return Err(Error::Parse {
                line: lineno,
                reason: format!("expected {ncols} cells, found {}", cells.len()),
            });
        }
        let mut x = Vec::with_capacity(ncols - 1);
        let mut y = 0;
        for (c, cell) in cells.iter().enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                return Err(Error::Parse {
                    line: lineno,
                    reason: format!("missing value in column {c}"),
                });
            }
            if c == label_column {
                y = parse_label(cell, mode, lineno)?;
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    reason: format!("bad number `{cell}` in column {c}"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line: lineno,
                        reason: "non-finite feature".into(),
                    });
                }
                x.push(v);
            }
        }
        examples.push(Example::new(x, y));
    }
    if examples.is_empty() {
        return Err(Error::EmptyInput("csv file has a header but no records".into()));
    }
    let task = task_for(mode, &examples);
    Ok(Dataset {
        examples,
        dim: ncols - 1,
        task,
    })
}

pub fn read_csv(path: impl AsRef<Path>, label_column: usize, mode: LabelMode) -> Result<Dataset> {
    parse_csv(open(path.as_ref())?, label_column, mode)
}

/// An unbounded supply of examples.
///
/// A source is single-consumer; parallel workers each take a `fork`.
pub trait StreamSource {
    fn next_example(&mut self) -> Example;

    fn dim(&self) -> usize;

    /// An independent source for worker `index`, seeded from this one's seed.
    fn fork(&self, index: u64) -> Self
    where
        Self: Sized;
}

/// Uniform sampling with replacement from a finite dataset.
#[derive(Debug, Clone)]
pub struct ResampleStream<'a> {
    data: &'a Dataset,
    seed: u64,
    rng: Rng,
}

impl<'a> ResampleStream<'a> {
    pub fn new(data: &'a Dataset, seed: u64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyInput("cannot stream from an empty dataset".into()));
        }
        Ok(ResampleStream {
            data,
            seed,
            rng: seeded_rng(seed),
        })
    }
}

impl StreamSource for ResampleStream<'_> {
    fn next_example(&mut self) -> Example {
        let i = self.rng.random_range(0..self.data.len());
        self.data.examples[i].clone()
    }

    fn dim(&self) -> usize {
        self.data.dim
    }

    fn fork(&self, index: u64) -> Self {
        let seed = derive_seed(self.seed, index);
        ResampleStream {
            data: self.data,
            seed,
            rng: seeded_rng(seed),
        }
    }
}

/// Fresh draws from the two-Gaussian model of [`gen_two_gaussians`].
#[derive(Debug, Clone)]
pub struct GaussianStream {
    mean_pos: Vec<f64>,
    mean_neg: Vec<f64>,
    scale: f64,
    p: f64,
    seed: u64,
    rng: Rng,
}

impl GaussianStream {
    pub fn new(mean_pos: Vec<f64>, mean_neg: Vec<f64>, scale: f64, p: f64, seed: u64) -> Result<Self> {
        check_prob(p)?;
        if mean_pos.len() != mean_neg.len() {
            return Err(Error::Dimension {
                expected: mean_pos.len(),
                got: mean_neg.len(),
            });
        }
        if !(scale > 0.0) {
            return Err(Error::config("scale", "must be positive"));
        }
        Ok(GaussianStream {
            mean_pos,
            mean_neg,
            scale,
            p,
            seed,
            rng: seeded_rng(seed),
        })
    }
}

impl StreamSource for GaussianStream {
    fn next_example(&mut self) -> Example {
        let positive = self.rng.random::<f64>() < self.p;
        let mean = if positive { &self.mean_pos } else { &self.mean_neg };
        let x = mean
            .iter()
            .map(|m| m + self.scale * standard_normal(&mut self.rng))
            .collect();
        Example::new(x, if positive { 1 } else { -1 })
    }

    fn dim(&self) -> usize {
        self.mean_pos.len()
    }

    fn fork(&self, index: u64) -> Self {
        let seed = derive_seed(self.seed, index);
        GaussianStream {
            seed,
            rng: seeded_rng(seed),
            ..self.clone()
        }
    }
}
