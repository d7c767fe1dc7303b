//! Run trajectories: persistence plus fixed-budget and median analytics.
//!
//! File format:
//!
//! ```text
//! # algo=<name> instance=<name> seed=<int> budget=<int> dim=15
//! <evaluation> <best_so_far>
//! ```
//!
//! Only improvements are logged; the first evaluation always is.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lower_median;

#[derive(Debug, Error)]
pub enum RunLogError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid trajectory: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunHeader {
    pub algorithm: String,
    pub instance: String,
    pub seed: u64,
    pub budget: u64,
    pub dimension: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub evaluation: u64,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrajectory {
    pub header: RunHeader,
    pub points: Vec<TrajectoryPoint>,
}

impl RunTrajectory {
    pub fn new(header: RunHeader, improvements: &[(u64, f64)]) -> Self {
        Self {
            header,
            points: improvements
                .iter()
                .map(|&(evaluation, best_so_far)| TrajectoryPoint {
                    evaluation,
                    best_so_far,
                })
                .collect(),
        }
    }

    /// Improvements only, starting at evaluation 1, within the budget.
    pub fn validate(&self) -> Result<(), RunLogError> {
        let first = self
            .points
            .first()
            .ok_or_else(|| RunLogError::Invalid("no points logged".into()))?;
        if first.evaluation != 1 {
            return Err(RunLogError::Invalid(format!(
                "first point at evaluation {}, expected 1",
                first.evaluation
            )));
        }
        for w in self.points.windows(2) {
            if w[1].evaluation <= w[0].evaluation {
                return Err(RunLogError::Invalid(format!(
                    "evaluations not increasing at {}",
                    w[1].evaluation
                )));
            }
            if w[1].best_so_far.partial_cmp(&w[0].best_so_far) != Some(Ordering::Less) {
                return Err(RunLogError::Invalid(format!(
                    "best-so-far does not decrease at evaluation {}",
                    w[1].evaluation
                )));
            }
        }
        if let Some(last) = self.points.last() {
            if last.evaluation > self.header.budget {
                return Err(RunLogError::Invalid(format!(
                    "evaluation {} beyond budget {}",
                    last.evaluation, self.header.budget
                )));
            }
        }
        if self.points.iter().any(|p| p.best_so_far.is_nan()) {
            return Err(RunLogError::Invalid("NaN fitness".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let h = &self.header;
        let mut out = format!(
            "# algo={} instance={} seed={} budget={} dim={}\n",
            h.algorithm, h.instance, h.seed, h.budget, h.dimension
        );
        for p in &self.points {
            let _ = writeln!(out, "{} {:?}", p.evaluation, p.best_so_far);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, RunLogError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, head) = lines.next().ok_or(RunLogError::Parse {
            line: 1,
            message: "empty file".into(),
        })?;
        let header = parse_header(head)?;
        let mut points = Vec::new();
        for (line, text) in lines {
            if text.trim().is_empty() {
                continue;
            }
            let bad = |message: &str| RunLogError::Parse {
                line,
                message: message.to_string(),
            };
            let mut parts = text.split_whitespace();
            let evaluation = parts
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad("expected `<evaluation> <best_so_far>`"))?;
            let best_so_far = parts
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad("expected `<evaluation> <best_so_far>`"))?;
            if parts.next().is_some() {
                return Err(bad("trailing fields"));
            }
            points.push(TrajectoryPoint {
                evaluation,
                best_so_far,
            });
        }
        let run = Self { header, points };
        run.validate()?;
        Ok(run)
    }

    /// Best-so-far after `budget` evaluations; `+inf` before the first point.
    pub fn value_at(&self, budget: u64) -> f64 {
        let idx = self.points.partition_point(|p| p.evaluation <= budget);
        if idx == 0 {
            f64::INFINITY
        } else {
            self.points[idx - 1].best_so_far
        }
    }

    pub fn final_best(&self) -> f64 {
        self.points.last().map_or(f64::INFINITY, |p| p.best_so_far)
    }
}

fn parse_header(line: &str) -> Result<RunHeader, RunLogError> {
    let bad = |message: String| RunLogError::Parse { line: 1, message };
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| bad("header must start with `#`".into()))?;
    let mut fields = BTreeMap::new();
    for token in body.split_whitespace() {
        let (k, v) = token
            .split_once('=')
            .ok_or_else(|| bad(format!("malformed header field `{token}`")))?;
        fields.insert(k, v);
    }
    let get = |k: &str| {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| bad(format!("missing header field `{k}`")))
    };
    let num = |k: &str| -> Result<u64, RunLogError> {
        get(k)?
            .parse()
            .map_err(|_| bad(format!("header field `{k}` is not an integer")))
    };
    Ok(RunHeader {
        algorithm: get("algo")?.to_string(),
        instance: get("instance")?.to_string(),
        seed: num("seed")?,
        budget: num("budget")?,
        dimension: num("dim")? as usize,
    })
}

/// `logs/<instance>/<algo>/run_<seed>.dat`
pub fn run_path(root: &Path, instance: &str, algorithm: &str, seed: u64) -> PathBuf {
    root.join(instance)
        .join(algorithm)
        .join(format!("run_{seed}.dat"))
}

pub fn write_run(path: &Path, run: &RunTrajectory) -> Result<(), RunLogError> {
    run.validate()?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, run.to_text())?;
    Ok(())
}

pub fn read_run(path: &Path) -> Result<RunTrajectory, RunLogError> {
    RunTrajectory::parse(&fs::read_to_string(path)?)
}

/// Every `run_*.dat` below `root`, in path order. Unreadable files are returned as errors.
pub fn read_all_runs(root: &Path) -> Result<Vec<RunTrajectory>, RunLogError> {
    let mut files = Vec::new();
    collect_runs(root, &mut files)?;
    files.sort();
    files.iter().map(|p| read_run(p)).collect()
}

fn collect_runs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), RunLogError> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_runs(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "dat")
            && path
                .file_name()
                .is_some_and(|n| n.to_string_lossy().starts_with("run_"))
        {
            out.push(path);
        }
    }
    Ok(())
}

/// Pointwise lower median of `value_at` over runs, on the evaluation grid.
pub fn median_trajectory(runs: &[&RunTrajectory], grid: &[u64]) -> Vec<(u64, f64)> {
    assert!(!runs.is_empty(), "median of zero runs");
    grid.iter()
        .map(|&e| {
            let values: Vec<f64> = runs.iter().map(|r| r.value_at(e)).collect();
            (e, lower_median(&values).expect("non-empty"))
        })
        .collect()
}

/// `n` evaluation counts evenly spaced over `1..=budget`.
pub fn linear_grid(budget: u64, n: usize) -> Vec<u64> {
    assert!(n >= 1 && budget >= 1);
    let mut grid: Vec<u64> = (1..=n as u64)
        .map(|i| ((i * budget) as f64 / n as f64).round().max(1.0) as u64)
        .collect();
    grid.dedup();
    grid
}

/// Shared histogram edges: `bins` equal-width bins spanning the values.
pub fn shared_edges(values: &[f64], bins: usize) -> Vec<f64> {
    assert!(bins >= 1 && !values.is_empty());
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        hi = lo + 1.0;
    }
    (0..=bins)
        .map(|i| lo + (hi - lo) * i as f64 / bins as f64)
        .collect()
}

/// Counts per bin `[e_i, e_{i+1})`, the last bin closed. Values outside the edges are dropped.
pub fn histogram(values: &[f64], edges: &[f64]) -> Vec<usize> {
    assert!(edges.len() >= 2);
    let bins = edges.len() - 1;
    let mut counts = vec![0; bins];
    for &v in values {
        if v < edges[0] || v > edges[bins] {
            continue;
        }
        let i = edges
            .partition_point(|&e| e <= v)
            .saturating_sub(1)
            .min(bins - 1);
        counts[i] += 1;
    }
    counts
}

/// First grid evaluation where `a - b` takes the sign opposite to its
/// first non-zero sign.
pub fn crossing_point(a: &[(u64, f64)], b: &[(u64, f64)]) -> Option<u64> {
    let mut initial = 0.0;
    for (&(e, va), &(eb, vb)) in a.iter().zip(b) {
        debug_assert_eq!(e, eb, "trajectories must share a grid");
        let s = (va - vb).signum();
        if va == vb {
            continue;
        }
        if initial == 0.0 {
            initial = s;
        } else if s != initial {
            return Some(e);
        }
    }
    None
}

/// Best-so-far values at a fixed budget, keyed by (algorithm, instance), ordered by seed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FixedBudgetTable {
    pub budget: u64,
    pub values: BTreeMap<(String, String), Vec<(u64, f64)>>,
}

impl FixedBudgetTable {
    pub fn from_runs<'a>(runs: impl IntoIterator<Item = &'a RunTrajectory>, budget: u64) -> Self {
        let mut values: BTreeMap<(String, String), Vec<(u64, f64)>> = BTreeMap::new();
        for run in runs {
            values
                .entry((run.header.algorithm.clone(), run.header.instance.clone()))
                .or_default()
                .push((run.header.seed, run.value_at(budget)));
        }
        for v in values.values_mut() {
            v.sort_by_key(|&(seed, _)| seed);
        }
        Self { budget, values }
    }

    pub fn samples(&self, algorithm: &str, instance: &str) -> Option<Vec<f64>> {
        self.values
            .get(&(algorithm.to_string(), instance.to_string()))
            .map(|v| v.iter().map(|&(_, x)| x).collect())
    }

    /// `instance,algo,seed,budget,value`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("instance,algo,seed,budget,value\n");
        for ((algo, instance), rows) in &self.values {
            for &(seed, value) in rows {
                let _ = writeln!(out, "{instance},{algo},{seed},{},{value}", self.budget);
            }
        }
        out
    }
}
