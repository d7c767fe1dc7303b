//! Experiment commands: instance generation, the portfolio run grid,
//! feature extraction, selector evaluation and pairwise KS tests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use radarnet::ela::{self, FeatureSource, FeatureTable, FeatureVector};
use radarnet::manifest::{self, Manifest};
use radarnet::optimizers::{self, AlgorithmSpec, RunStatus, PORTFOLIO_NAMES};
use radarnet::runlog::{self, FixedBudgetTable, RunTrajectory};
use radarnet::selector::{self, LossSummary, PerformanceTable, SelectorError};
use radarnet::stats;
use radarnet::{Instance, RadarPhysics};

/// Name of the baseline comparator in selection reports.
pub const BASELINE: &str = "CMA_00000000000";
pub const TRAIN_FRACTION: f64 = 0.8;

/// Generate the synthetic census into `out` and return its manifest.
pub fn gen_instances(out: &Path, seed: u64, tiles: usize) -> Result<Manifest> {
    let census = manifest::generate_tiles(seed, tiles);
    let m = manifest::write_census(out, &census)
        .with_context(|| format!("writing census to {}", out.display()))?;
    let (f, i, mt) = manifest::class_census(census.iter().map(|c| c.class));
    info!(
        "{} instances: {f} flat, {i} intermediate, {mt} mountainous",
        census.len()
    );
    Ok(m)
}

/// Instances of a manifest with shared physics.
pub fn load_instances(manifest_path: &Path, physics: &RadarPhysics) -> Result<Vec<Instance>> {
    let text = fs::read_to_string(manifest_path)
        .with_context(|| format!("reading {}", manifest_path.display()))?;
    let m = Manifest::parse(&text)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    m.instances
        .iter()
        .map(|e| e.instance(base, physics).map_err(Into::into))
        .collect()
}

pub fn load_physics(path: Option<&Path>) -> Result<RadarPhysics> {
    match path {
        None => Ok(RadarPhysics::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(RadarPhysics::from_key_values(&text)?)
        }
    }
}

/// Resolve `all` or a comma-separated list of portfolio names.
pub fn parse_algorithms(list: &str) -> Result<Vec<String>> {
    if list.trim() == "all" {
        return Ok(PORTFOLIO_NAMES.iter().map(|s| s.to_string()).collect());
    }
    let names: Vec<String> = list.split(',').map(|s| s.trim().to_string()).collect();
    for n in &names {
        if optimizers::portfolio_index(n).is_none() {
            bail!("unknown algorithm `{n}`");
        }
    }
    Ok(names)
}

/// Parse `a..b` (exclusive), `a..=b` or a comma-separated list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let text = text.trim();
    let seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..=") {
        (a.parse()?..=b.parse()?).collect()
    } else if let Some((a, b)) = text.split_once("..") {
        (a.parse()?..b.parse()?).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse())
            .collect::<Result<_, _>>()?
    };
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() || seeds.is_empty() {
        bail!("seeds must be distinct and non-empty");
    }
    Ok(seeds)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub executed: usize,
    pub skipped: usize,
    pub quarantined: usize,
    pub aborted: usize,
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn partial_path(path: &Path) -> PathBuf {
    with_suffix(path, ".partial")
}

fn temp_path(path: &Path) -> PathBuf {
    with_suffix(path, ".tmp")
}

/// A finished log counts when it parses, validates and matches the task.
fn complete_log(path: &Path, algorithm: &str, instance: &str, seed: u64, budget: u64) -> bool {
    runlog::read_run(path).is_ok_and(|r| {
        r.validate().is_ok()
            && r.header.algorithm == algorithm
            && r.header.instance == instance
            && r.header.seed == seed
            && r.header.budget == budget
    })
}

/// Execute the algorithm x instance x seed grid into `logs`, skipping
/// complete logs. Logs are written to a `.tmp` file and renamed when done;
/// unusable logs and interrupted writes are moved aside with a `.partial`
/// suffix and the run is repeated.
pub fn run_grid(
    instances: &[Instance],
    algorithms: &[String],
    seeds: &[u64],
    budget: u64,
    logs: &Path,
    jobs: usize,
) -> Result<RunSummary> {
    if budget == 0 {
        bail!("budget must be positive");
    }
    let specs: Vec<AlgorithmSpec> = algorithms.iter().map(|a| AlgorithmSpec::named(a)).collect();
    let mut summary = RunSummary::default();
    let mut tasks = Vec::new();
    for inst in instances {
        for spec in &specs {
            for &seed in seeds {
                let path = runlog::run_path(logs, &inst.name, &spec.name, seed);
                if complete_log(&path, &spec.name, &inst.name, seed, budget) {
                    summary.skipped += 1;
                    continue;
                }
                for stale in [path.clone(), temp_path(&path)] {
                    if stale.exists() {
                        warn!("quarantining {}", stale.display());
                        fs::rename(&stale, partial_path(&path))?;
                        summary.quarantined += 1;
                    }
                }
                tasks.push((inst, spec, seed, path));
            }
        }
    }
    let next = AtomicUsize::new(0);
    let outcome = Mutex::new((0usize, 0usize, None::<anyhow::Error>));
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, tasks.len().max(1)) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some((inst, spec, seed, path)) = tasks.get(k) else {
                    break;
                };
                let result = execute(inst, spec, *seed, budget, path);
                let mut o = outcome.lock().unwrap();
                match result {
                    Ok(aborted) => {
                        o.0 += 1;
                        o.1 += usize::from(aborted);
                    }
                    Err(e) => {
                        o.2.get_or_insert(e);
                        next.store(tasks.len(), Ordering::Relaxed);
                    }
                }
            });
        }
    });
    let (executed, aborted, err) = outcome.into_inner().unwrap();
    if let Some(e) = err {
        return Err(e);
    }
    summary.executed = executed;
    summary.aborted = aborted;
    Ok(summary)
}

fn execute(
    inst: &Instance,
    spec: &AlgorithmSpec,
    seed: u64,
    budget: u64,
    path: &Path,
) -> Result<bool> {
    let result = optimizers::run(spec, inst, &inst.name, budget, seed)
        .with_context(|| format!("{} on {} seed {seed}", spec.name, inst.name))?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let temp = temp_path(path);
    runlog::write_run(&temp, &result.trajectory)?;
    fs::rename(&temp, path)?;
    let aborted = matches!(result.status, RunStatus::Aborted(_));
    if let RunStatus::Aborted(why) = &result.status {
        warn!("{} on {} seed {seed} aborted: {why}", spec.name, inst.name);
    }
    Ok(aborted)
}

/// Feature rows for every instance from one source.
pub fn feature_table(
    instances: &[Instance],
    source: FeatureSource,
    reps: u64,
) -> Result<FeatureTable> {
    let mut table = FeatureTable::default();
    for inst in instances {
        let fv = match source {
            FeatureSource::Dem => ela::dem_features(&inst.grid),
            FeatureSource::Radar => ela::radar_features(inst, reps)
                .with_context(|| format!("features of {}", inst.name))?,
        };
        table.rows.push((inst.name.clone(), source, fv));
    }
    Ok(table)
}

pub fn features_by_instance(
    table: &FeatureTable,
    source: FeatureSource,
) -> BTreeMap<String, FeatureVector> {
    table
        .rows
        .iter()
        .filter(|(_, s, _)| *s == source)
        .map(|(i, _, f)| (i.clone(), f.clone()))
        .collect()
}

/// Read all runs below `logs`; logs shorter than `budget` are an error.
pub fn fixed_budget_table(logs: &Path, budget: u64) -> Result<FixedBudgetTable> {
    let runs = runlog::read_all_runs(logs)
        .with_context(|| format!("reading logs in {}", logs.display()))?;
    let short: Vec<String> = runs
        .iter()
        .filter(|r| r.header.budget < budget)
        .map(|r| {
            format!(
                "{}/{}/{}",
                r.header.instance, r.header.algorithm, r.header.seed
            )
        })
        .collect();
    if !short.is_empty() {
        bail!("runs with budget below {budget}: {}", short.join(", "));
    }
    Ok(FixedBudgetTable::from_runs(runs.iter(), budget))
}

/// Median-performance table; a missing (instance, algorithm) pair is
/// reported as an explicit gap list.
pub fn performance_table(fixed: &FixedBudgetTable) -> Result<PerformanceTable> {
    match PerformanceTable::from_fixed_budget(fixed) {
        Ok(t) => Ok(t),
        Err(SelectorError::Incomplete(gaps)) => {
            let list: Vec<String> = gaps.iter().map(|(i, a)| format!("{i}/{a}")).collect();
            bail!("missing logs for {} cells: {}", list.len(), list.join(", "))
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparatorRow {
    pub split: u64,
    pub comparator: String,
    pub summary: LossSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub budget: u64,
    pub rows: Vec<ComparatorRow>,
    /// SBS chosen on each split's training instances.
    pub sbs: Vec<String>,
}

impl SelectionReport {
    /// `split,comparator,median_loss,test_instances`
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("split,comparator,median_loss,test_instances\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.split,
                r.comparator,
                r.summary.median,
                r.summary.per_instance.len()
            );
        }
        out
    }

    /// `split,comparator,instance,algorithm,loss`
    pub fn detail_csv(&self) -> String {
        let mut out = String::from("split,comparator,instance,algorithm,loss\n");
        for r in &self.rows {
            for (inst, algo, loss) in &r.summary.per_instance {
                let _ = writeln!(out, "{},{},{inst},{algo},{loss}", r.split, r.comparator);
            }
        }
        out
    }

    pub fn rows_for<'a>(
        &'a self,
        comparator: &'a str,
    ) -> impl Iterator<Item = &'a ComparatorRow> + 'a {
        self.rows.iter().filter(move |r| r.comparator == comparator)
    }
}

/// Train and evaluate the selectors on `splits` random 80/20 splits; split
/// `s` uses seed `seed + s`. Comparators: VBS, SBS (chosen on the training
/// part), the vanilla CMA-ES baseline and one selector per feature source.
pub fn select_report(
    table: &PerformanceTable,
    features: &[(FeatureSource, BTreeMap<String, FeatureVector>)],
    splits: u64,
    seed: u64,
) -> Result<SelectionReport> {
    let mut rows = Vec::new();
    let mut sbs_list = Vec::new();
    for s in 0..splits {
        let (train, test) =
            selector::split(table.instances(), TRAIN_FRACTION, seed.wrapping_add(s));
        if test.is_empty() {
            bail!("split {s} leaves no test instances");
        }
        let sbs = table.sbs(&train)?;
        rows.push(ComparatorRow {
            split: s,
            comparator: "VBS".into(),
            summary: selector::evaluate_vbs(table, &test)?,
        });
        rows.push(ComparatorRow {
            split: s,
            comparator: "SBS".into(),
            summary: selector::evaluate_fixed(&sbs, table, &test)?,
        });
        if table.algorithms().iter().any(|a| a == BASELINE) {
            rows.push(ComparatorRow {
                split: s,
                comparator: BASELINE.into(),
                summary: selector::evaluate_fixed(BASELINE, table, &test)?,
            });
        }
        for (source, fv) in features {
            let model = selector::train(fv, table, &train, seed, s)?;
            rows.push(ComparatorRow {
                split: s,
                comparator: format!("S_{source}"),
                summary: selector::evaluate_selector(&model, table, fv, &test)?,
            });
        }
        sbs_list.push(sbs);
    }
    Ok(SelectionReport {
        budget: table.budget,
        rows,
        sbs: sbs_list,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KsRow {
    pub instance: String,
    pub algorithm_a: String,
    pub algorithm_b: String,
    pub outcome: stats::KsOutcome,
}

/// KS tests for every unordered pair of distinct algorithms on each instance.
pub fn ks_report(fixed: &FixedBudgetTable, alpha: f64) -> Vec<KsRow> {
    let mut by_instance: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (algo, inst) in fixed.values.keys() {
        by_instance.entry(inst).or_default().push(algo);
    }
    let mut rows = Vec::new();
    for (inst, mut algos) in by_instance {
        algos.sort_by(|a, b| selector::portfolio_order(a, b));
        for (i, a) in algos.iter().enumerate() {
            for b in &algos[i + 1..] {
                let sa = fixed.samples(a, inst).expect("present");
                let sb = fixed.samples(b, inst).expect("present");
                rows.push(KsRow {
                    instance: inst.to_string(),
                    algorithm_a: a.to_string(),
                    algorithm_b: b.to_string(),
                    outcome: stats::ks_test(&sa, &sb, alpha),
                });
            }
        }
    }
    rows
}

pub fn ks_csv(rows: &[KsRow]) -> String {
    let mut out = String::from("instance,algo_a,algo_b,statistic,critical,reject\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.instance,
            r.algorithm_a,
            r.algorithm_b,
            r.outcome.statistic,
            r.outcome.critical,
            r.outcome.reject
        );
    }
    out
}

/// Trajectories of a finished grid, for validation in callers.
pub fn read_logs(logs: &Path) -> Result<Vec<RunTrajectory>> {
    Ok(runlog::read_all_runs(logs)?)
}
