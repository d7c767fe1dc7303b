//! Performance analytics (VBS, SBS, relative loss) and the per-algorithm
//! random-forest selector.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ela::{FeatureVector, FEATURE_COUNT, FEATURE_NAMES};
use crate::lower_median;
use crate::optimizers::portfolio_index;
use crate::runlog::FixedBudgetTable;

pub const TREES: usize = 100;

#[derive(Debug, Error)]
pub enum SelectorError {
    #[error("need at least {needed} instances, got {got}")]
    TooFewInstances { needed: usize, got: usize },
    #[error("no features for instance `{0}`")]
    MissingFeatures(String),
    #[error("feature vector has {0} entries, expected {FEATURE_COUNT}")]
    LengthMismatch(usize),
    #[error("performance table is missing {} (instance, algorithm) entries, first: {:?}", .0.len(), .0.first())]
    Incomplete(Vec<(String, String)>),
    #[error("unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("model bundle: {0}")]
    Bundle(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Orders algorithm names by portfolio position; names outside the portfolio go last, alphabetically.
pub fn portfolio_order(a: &str, b: &str) -> std::cmp::Ordering {
    let key = |s: &str| (portfolio_index(s).unwrap_or(usize::MAX), s.to_string());
    key(a).cmp(&key(b))
}

/// Median fitness per (instance, algorithm) at one budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceTable {
    pub budget: u64,
    instances: Vec<String>,
    algorithms: Vec<String>,
    values: BTreeMap<(String, String), f64>,
}

impl PerformanceTable {
    /// Build from explicit (instance, algorithm, median) entries; the grid must be complete.
    pub fn from_entries(
        budget: u64,
        entries: impl IntoIterator<Item = (String, String, f64)>,
    ) -> Result<Self, SelectorError> {
        let mut values = BTreeMap::new();
        let mut instances = Vec::new();
        let mut algorithms = Vec::new();
        for (inst, algo, v) in entries {
            if !instances.contains(&inst) {
                instances.push(inst.clone());
            }
            if !algorithms.contains(&algo) {
                algorithms.push(algo.clone());
            }
            values.insert((inst, algo), v);
        }
        instances.sort();
        algorithms.sort_by(|a, b| portfolio_order(a, b));
        let missing: Vec<(String, String)> = instances
            .iter()
            .flat_map(|i| algorithms.iter().map(move |a| (i.clone(), a.clone())))
            .filter(|k| !values.contains_key(k))
            .collect();
        if !missing.is_empty() {
            return Err(SelectorError::Incomplete(missing));
        }
        Ok(Self {
            budget,
            instances,
            algorithms,
            values,
        })
    }

    /// Lower median over seeds of every cell of a fixed-budget table.
    pub fn from_fixed_budget(table: &FixedBudgetTable) -> Result<Self, SelectorError> {
        let entries: Vec<(String, String, f64)> = table
            .values
            .iter()
            .map(|((algo, inst), runs)| {
                let v: Vec<f64> = runs.iter().map(|r| r.1).collect();
                (
                    inst.clone(),
                    algo.clone(),
                    lower_median(&v).unwrap_or(f64::INFINITY),
                )
            })
            .collect();
        Self::from_entries(table.budget, entries)
    }

    pub fn instances(&self) -> &[String] {
        &self.instances
    }

    /// Algorithms in portfolio order.
    pub fn algorithms(&self) -> &[String] {
        &self.algorithms
    }

    pub fn fitness(&self, instance: &str, algorithm: &str) -> Option<f64> {
        self.values
            .get(&(instance.to_string(), algorithm.to_string()))
            .copied()
    }

    fn row(&self, instance: &str) -> Result<Vec<f64>, SelectorError> {
        self.algorithms
            .iter()
            .map(|a| {
                self.fitness(instance, a)
                    .ok_or_else(|| SelectorError::UnknownInstance(instance.to_string()))
            })
            .collect()
    }

    /// Best algorithm on `instance`; ties go to the earlier portfolio member.
    pub fn vbs(&self, instance: &str) -> Result<(String, f64), SelectorError> {
        let row = self.row(instance)?;
        let best = (0..row.len()).fold(0, |b, i| if row[i] < row[b] { i } else { b });
        Ok((self.algorithms[best].clone(), row[best]))
    }

    pub fn relative_loss(&self, algorithm: &str, instance: &str) -> Result<f64, SelectorError> {
        let (_, best) = self.vbs(instance)?;
        let f = self
            .fitness(instance, algorithm)
            .ok_or_else(|| SelectorError::UnknownInstance(instance.to_string()))?;
        Ok(relative_loss(f, best))
    }

    /// Algorithm with the smallest lower-median relative loss over `instances`.
    pub fn sbs(&self, instances: &[String]) -> Result<String, SelectorError> {
        if instances.is_empty() {
            return Err(SelectorError::TooFewInstances { needed: 1, got: 0 });
        }
        let mut best: Option<(f64, &String)> = None;
        for algo in &self.algorithms {
            let losses = instances
                .iter()
                .map(|i| self.relative_loss(algo, i))
                .collect::<Result<Vec<_>, _>>()?;
            let m = lower_median(&losses).expect("non-empty");
            if best.is_none_or(|(b, _)| m < b) {
                best = Some((m, algo));
            }
        }
        Ok(best.expect("non-empty portfolio").1.clone())
    }

    /// Median relative loss of `algorithm` over `instances`.
    pub fn median_loss(&self, algorithm: &str, instances: &[String]) -> Result<f64, SelectorError> {
        let losses = instances
            .iter()
            .map(|i| self.relative_loss(algorithm, i))
            .collect::<Result<Vec<_>, _>>()?;
        lower_median(&losses).ok_or(SelectorError::TooFewInstances { needed: 1, got: 0 })
    }
}

/// Percent excess of `f` over `best`; a zero `best` gives 0 when matched and +inf otherwise.
pub fn relative_loss(f: f64, best: f64) -> f64 {
    if best == 0.0 {
        if f == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        100.0 * (f - best) / best
    }
}

/// Uniform train/test split without replacement; the train part has `floor(fraction * n)` members.
pub fn split(instances: &[String], train_fraction: f64, seed: u64) -> (Vec<String>, Vec<String>) {
    let mut shuffled = instances.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (train_fraction * instances.len() as f64).floor() as usize;
    let test = shuffled.split_off(n_train);
    (shuffled, test)
}

/// SBS winner counts over `n_splits` independent training splits.
pub fn sbs_stability(
    table: &PerformanceTable,
    n_splits: u64,
    train_fraction: f64,
    seed: u64,
) -> Result<BTreeMap<String, u64>, SelectorError> {
    let mut counts = BTreeMap::new();
    for s in 0..n_splits {
        let (train, _) = split(table.instances(), train_fraction, seed.wrapping_add(s));
        *counts.entry(table.sbs(&train)?).or_insert(0) += 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// CART regression tree grown to purity on variance reduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn fit(x: &[Vec<f64>], y: &[f64], sample: &[usize]) -> Self {
        let mut tree = Self { nodes: Vec::new() };
        tree.grow(x, y, sample.to_vec());
        tree
    }

    fn grow(&mut self, x: &[Vec<f64>], y: &[f64], idx: Vec<usize>) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: leaf_value(y, &idx),
        });
        if idx.len() < 2 || idx.iter().all(|&i| y[i] == y[idx[0]]) {
            return id;
        }
        let Some((feature, threshold)) = best_split(x, y, &idx) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| x[i][feature] <= threshold);
        let left = self.grow(x, y, l);
        let right = self.grow(x, y, r);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    pub fn predict(&self, features: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if features[feature] <= threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }
}

fn leaf_value(y: &[f64], idx: &[usize]) -> f64 {
    let first = y[idx[0]];
    if idx.iter().all(|&i| y[i] == first) {
        first
    } else {
        idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64
    }
}

/// Split minimizing the children's summed squared error; first best wins.
fn best_split(x: &[Vec<f64>], y: &[f64], idx: &[usize]) -> Option<(usize, f64)> {
    let n = idx.len() as f64;
    let total: f64 = idx.iter().map(|&i| y[i]).sum();
    let total_sq: f64 = idx.iter().map(|&i| y[i] * y[i]).sum();
    let parent_sse = total_sq - total * total / n;
    let mut best: Option<(f64, usize, f64)> = None;
    let mut order = idx.to_vec();
    #[allow(clippy::needless_range_loop)]
    for f in 0..x[idx[0]].len() {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let (mut s, mut sq) = (0.0, 0.0);
        for k in 0..order.len() - 1 {
            let v = y[order[k]];
            s += v;
            sq += v * v;
            let (lo, hi) = (x[order[k]][f], x[order[k + 1]][f]);
            if lo == hi {
                continue;
            }
            let nl = (k + 1) as f64;
            let nr = n - nl;
            let sse = (sq - s * s / nl) + ((total_sq - sq) - (total - s) * (total - s) / nr);
            if sse < parent_sse - 1e-12 * parent_sse.abs() && best.is_none_or(|b| sse < b.0) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some((sse, f, threshold));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

/// Bagged regression trees for one algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub algorithm: String,
    pub feature_order: Vec<String>,
    pub seed: u64,
    pub split_id: u64,
    pub trees: Vec<RegressionTree>,
}

impl ForestModel {
    pub fn fit(
        algorithm: &str,
        x: &[Vec<f64>],
        y: &[f64],
        trees: usize,
        seed: u64,
        split_id: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = y.len();
        let trees = (0..trees)
            .map(|_| {
                let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                RegressionTree::fit(x, y, &sample)
            })
            .collect();
        Self {
            algorithm: algorithm.to_string(),
            feature_order: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            seed,
            split_id,
            trees,
        }
    }

    /// Mean of the tree outputs, kept within their range.
    pub fn predict(&self, features: &[f64]) -> f64 {
        let outputs: Vec<f64> = self.trees.iter().map(|t| t.predict(features)).collect();
        let lo = outputs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = outputs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lo == hi {
            return lo;
        }
        (outputs.iter().sum::<f64>() / outputs.len() as f64).clamp(lo, hi)
    }
}

/// One forest per algorithm plus the training medians used for NaN imputation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selector {
    pub models: Vec<ForestModel>,
    pub imputation: Vec<f64>,
    pub feature_order: Vec<String>,
    pub seed: u64,
    pub split_id: u64,
}

fn impute(v: &[f64], medians: &[f64]) -> Vec<f64> {
    v.iter()
        .zip(medians)
        .map(|(x, m)| if x.is_nan() { *m } else { *x })
        .collect()
}

/// Fit one forest per algorithm of `table` on the training instances.
pub fn train(
    features: &BTreeMap<String, FeatureVector>,
    table: &PerformanceTable,
    train_instances: &[String],
    seed: u64,
    split_id: u64,
) -> Result<Selector, SelectorError> {
    if train_instances.len() < 2 {
        return Err(SelectorError::TooFewInstances {
            needed: 2,
            got: train_instances.len(),
        });
    }
    let rows: Vec<&FeatureVector> = train_instances
        .iter()
        .map(|i| {
            features
                .get(i)
                .ok_or_else(|| SelectorError::MissingFeatures(i.clone()))
        })
        .collect::<Result<_, _>>()?;
    if let Some(bad) = rows.iter().find(|r| r.0.len() != FEATURE_COUNT) {
        return Err(SelectorError::LengthMismatch(bad.0.len()));
    }
    let imputation: Vec<f64> = (0..FEATURE_COUNT)
        .map(|k| {
            let col: Vec<f64> = rows
                .iter()
                .map(|r| r.0[k])
                .filter(|v| !v.is_nan())
                .collect();
            lower_median(&col).unwrap_or(0.0)
        })
        .collect();
    let x: Vec<Vec<f64>> = rows.iter().map(|r| impute(&r.0, &imputation)).collect();
    let models = table
        .algorithms()
        .iter()
        .enumerate()
        .map(|(a, algo)| {
            let y = train_instances
                .iter()
                .map(|i| {
                    table
                        .fitness(i, algo)
                        .ok_or_else(|| SelectorError::UnknownInstance(i.clone()))
                })
                .collect::<Result<Vec<f64>, _>>()?;
            let forest_seed = seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(a as u64);
            Ok(ForestModel::fit(algo, &x, &y, TREES, forest_seed, split_id))
        })
        .collect::<Result<Vec<_>, SelectorError>>()?;
    Ok(Selector {
        models,
        imputation,
        feature_order: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        seed,
        split_id,
    })
}

impl Selector {
    /// Algorithms ranked by ascending predicted fitness; ties keep portfolio order.
    pub fn select(&self, features: &FeatureVector) -> Result<Vec<(String, f64)>, SelectorError> {
        if features.0.len() != FEATURE_COUNT {
            return Err(SelectorError::LengthMismatch(features.0.len()));
        }
        let x = impute(&features.0, &self.imputation);
        let mut ranked: Vec<(String, f64)> = self
            .models
            .iter()
            .map(|m| (m.algorithm.clone(), m.predict(&x)))
            .collect();
        ranked.sort_by(|a, b| a.1.total_cmp(&b.1));
        Ok(ranked)
    }

    pub fn save(&self, dir: &Path) -> Result<(), SelectorError> {
        std::fs::create_dir_all(dir)?;
        let meta = BundleMeta {
            algorithms: self.models.iter().map(|m| m.algorithm.clone()).collect(),
            imputation: self.imputation.iter().map(|v| Some(*v)).collect(),
            feature_order: self.feature_order.clone(),
            seed: self.seed,
            split_id: self.split_id,
            trees: TREES,
        };
        std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
        for m in &self.models {
            std::fs::write(
                dir.join(format!("forest_{}.json", m.algorithm)),
                serde_json::to_string(m)?,
            )?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, SelectorError> {
        let meta: BundleMeta =
            serde_json::from_str(&std::fs::read_to_string(dir.join("meta.json"))?)?;
        if meta.feature_order.len() != FEATURE_COUNT || meta.imputation.len() != FEATURE_COUNT {
            return Err(SelectorError::Bundle(
                "feature order does not have 33 entries".into(),
            ));
        }
        let models = meta
            .algorithms
            .iter()
            .map(|a| {
                let text = std::fs::read_to_string(dir.join(format!("forest_{a}.json")))?;
                let m: ForestModel = serde_json::from_str(&text)?;
                if m.algorithm != *a {
                    return Err(SelectorError::Bundle(format!(
                        "forest file for {a} names {}",
                        m.algorithm
                    )));
                }
                Ok(m)
            })
            .collect::<Result<Vec<_>, SelectorError>>()?;
        Ok(Self {
            models,
            imputation: meta
                .imputation
                .iter()
                .map(|v| v.unwrap_or(f64::NAN))
                .collect(),
            feature_order: meta.feature_order,
            seed: meta.seed,
            split_id: meta.split_id,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct BundleMeta {
    algorithms: Vec<String>,
    imputation: Vec<Option<f64>>,
    feature_order: Vec<String>,
    seed: u64,
    split_id: u64,
    trees: usize,
}

/// Per-instance choice and loss of a selection rule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossSummary {
    pub per_instance: Vec<(String, String, f64)>,
    pub median: f64,
}

fn summarize(per_instance: Vec<(String, String, f64)>) -> LossSummary {
    let losses: Vec<f64> = per_instance.iter().map(|r| r.2).collect();
    LossSummary {
        median: lower_median(&losses).unwrap_or(f64::NAN),
        per_instance,
    }
}

/// Loss of the rank-1 algorithm on each test instance.
pub fn evaluate_selector(
    selector: &Selector,
    table: &PerformanceTable,
    features: &BTreeMap<String, FeatureVector>,
    test_instances: &[String],
) -> Result<LossSummary, SelectorError> {
    let rows = test_instances
        .iter()
        .map(|i| {
            let fv = features
                .get(i)
                .ok_or_else(|| SelectorError::MissingFeatures(i.clone()))?;
            let pick = selector.select(fv)?.remove(0).0;
            let loss = table.relative_loss(&pick, i)?;
            Ok((i.clone(), pick, loss))
        })
        .collect::<Result<Vec<_>, SelectorError>>()?;
    Ok(summarize(rows))
}

/// Loss of always picking `algorithm`.
pub fn evaluate_fixed(
    algorithm: &str,
    table: &PerformanceTable,
    test_instances: &[String],
) -> Result<LossSummary, SelectorError> {
    let rows = test_instances
        .iter()
        .map(|i| {
            Ok((
                i.clone(),
                algorithm.to_string(),
                table.relative_loss(algorithm, i)?,
            ))
        })
        .collect::<Result<Vec<_>, SelectorError>>()?;
    Ok(summarize(rows))
}

/// Loss of the per-instance best algorithm (zero by construction).
pub fn evaluate_vbs(
    table: &PerformanceTable,
    test_instances: &[String],
) -> Result<LossSummary, SelectorError> {
    let rows = test_instances
        .iter()
        .map(|i| {
            let (algo, _) = table.vbs(i)?;
            let loss = table.relative_loss(&algo, i)?;
            Ok((i.clone(), algo, loss))
        })
        .collect::<Result<Vec<_>, SelectorError>>()?;
    Ok(summarize(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::PORTFOLIO_NAMES;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("inst{i:03}")).collect()
    }

    fn table_from(f: impl Fn(usize, usize) -> f64, n: usize) -> PerformanceTable {
        let entries = (0..n).flat_map(|i| {
            let f = &f;
            PORTFOLIO_NAMES
                .iter()
                .enumerate()
                .map(move |(a, name)| (format!("inst{i:03}"), name.to_string(), f(i, a)))
        });
        PerformanceTable::from_entries(500, entries.collect::<Vec<_>>()).unwrap()
    }

    fn features_for(
        n: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> BTreeMap<String, FeatureVector> {
        (0..n)
            .map(|i| {
                (
                    format!("inst{i:03}"),
                    FeatureVector((0..33).map(|k| f(i, k)).collect()),
                )
            })
            .collect()
    }

    #[test]
    fn vbs_picks_the_best_and_breaks_ties_by_portfolio() {
        let t = table_from(|i, a| if a == 7 { 10.0 } else { 20.0 + i as f64 }, 3);
        assert_eq!(t.vbs("inst001").unwrap(), ("PSO".to_string(), 10.0));
        let flat = table_from(|_, _| 5.0, 2);
        assert_eq!(flat.vbs("inst000").unwrap().0, "RandomSearch");
        assert!(matches!(
            t.vbs("nope"),
            Err(SelectorError::UnknownInstance(_))
        ));
    }

    #[test]
    fn relative_loss_cases() {
        assert_eq!(relative_loss(100.0, 100.0), 0.0);
        assert!((relative_loss(115.0, 100.0) - 15.0).abs() < 1e-12);
        assert_eq!(relative_loss(5.0, 0.0), f64::INFINITY);
        assert_eq!(relative_loss(0.0, 0.0), 0.0);
    }

    #[test]
    fn sbs_with_small_median_loss_and_single_instance() {
        // DE_2500_chile loses 0.39% everywhere; every other member is best on a few
        // instances but far off elsewhere
        let t = table_from(
            |i, a| {
                if a == 3 {
                    1000.0 * 1.0039
                } else if i % 13 == a {
                    1000.0
                } else {
                    1100.0 + a as f64
                }
            },
            40,
        );
        let all = t.instances().to_vec();
        assert_eq!(t.sbs(&all).unwrap(), "DE_2500_chile");
        assert!((t.median_loss("DE_2500_chile", &all).unwrap() - 0.39).abs() < 1e-9);
        let one = vec![all[5].clone()];
        assert_eq!(t.sbs(&one).unwrap(), t.vbs(&all[5]).unwrap().0);
    }

    #[test]
    fn incomplete_tables_are_rejected() {
        let entries = vec![
            ("a".to_string(), "DE".to_string(), 1.0),
            ("b".to_string(), "PSO".to_string(), 1.0),
        ];
        match PerformanceTable::from_entries(500, entries) {
            Err(SelectorError::Incomplete(m)) => assert_eq!(m.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn split_sizes_and_determinism() {
        let inst = names(153);
        let (train, test) = split(&inst, 0.8, 4);
        assert_eq!((train.len(), test.len()), (122, 31));
        assert!(train.iter().all(|t| !test.contains(t)));
        assert_eq!(split(&inst, 0.8, 4), (train.clone(), test));
        assert_ne!(split(&inst, 0.8, 5).0, train);
    }

    #[test]
    fn stability_counts_sum_to_splits() {
        let t = table_from(
            |i, a| {
                if a == 9 {
                    1.0
                } else {
                    2.0 + ((i * 7 + a) % 5) as f64
                }
            },
            20,
        );
        let c = sbs_stability(&t, 1000, 0.8, 0).unwrap();
        assert_eq!(c.values().sum::<u64>(), 1000);
        assert_eq!(c.get("CMA_00100001000"), Some(&1000));
    }

    #[test]
    fn tree_fits_training_points_exactly() {
        let x: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![(i % 5) as f64, (i / 5) as f64])
            .collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] * 3.0 - r[1]).collect();
        let idx: Vec<usize> = (0..20).collect();
        let tree = RegressionTree::fit(&x, &y, &idx);
        for (xi, yi) in x.iter().zip(&y) {
            assert_eq!(tree.predict(xi), *yi);
        }
    }

    #[test]
    fn constant_target_forest_predicts_exactly() {
        let feats = features_for(10, |i, k| (i * 31 + k) as f64 * 0.37);
        let t = table_from(|i, a| if a == 0 { 0.1 } else { (i * a) as f64 }, 10);
        let train_set = t.instances().to_vec();
        let s = train(&feats, &t, &train_set, 3, 0).unwrap();
        let probe = FeatureVector(vec![123.0; 33]);
        let ranked = s.select(&probe).unwrap();
        let rs = ranked.iter().find(|r| r.0 == "RandomSearch").unwrap();
        assert_eq!(rs.1, 0.1);
    }

    #[test]
    fn selection_ranking_and_imputation() {
        let feats = features_for(12, |i, k| ((i + 1) * (k + 2)) as f64 % 7.0);
        let t = table_from(|i, a| ((i * 13 + a * 7) % 11) as f64 + 1.0, 12);
        let instances = t.instances().to_vec();
        let s = train(&feats, &t, &instances, 1, 0).unwrap();
        let mut fv = feats["inst003"].clone();
        fv.0[4] = f64::NAN;
        let ranked = s.select(&fv).unwrap();
        assert_eq!(ranked.len(), 13);
        let mut algos: Vec<&str> = ranked.iter().map(|r| r.0.as_str()).collect();
        assert!(ranked.windows(2).all(|w| w[0].1 <= w[1].1));
        algos.sort();
        let mut portfolio = PORTFOLIO_NAMES.to_vec();
        portfolio.sort();
        assert_eq!(algos, portfolio);
        assert!(matches!(
            s.select(&FeatureVector(vec![0.0; 5])),
            Err(SelectorError::LengthMismatch(5))
        ));
        let again = train(&feats, &t, &instances, 1, 0).unwrap();
        assert_eq!(again.select(&fv).unwrap(), ranked);
        assert!(matches!(
            train(&feats, &t, &instances[..1], 1, 0),
            Err(SelectorError::TooFewInstances { .. })
        ));
    }

    #[test]
    fn perfect_fixed_and_vbs_evaluations() {
        let t = table_from(|i, a| ((i * 5 + a * 3) % 7) as f64 + 1.0, 15);
        let inst = t.instances().to_vec();
        let sbs = t.sbs(&inst).unwrap();
        let fixed = evaluate_fixed(&sbs, &t, &inst).unwrap();
        assert_eq!(fixed.median, t.median_loss(&sbs, &inst).unwrap());
        let vbs = evaluate_vbs(&t, &inst).unwrap();
        assert_eq!(vbs.median, 0.0);
        // features identify instances uniquely, so the trained forests reproduce the table
        let feats = features_for(15, |i, _| i as f64);
        let s = train(&feats, &t, &inst, 0, 0).unwrap();
        let e = evaluate_selector(&s, &t, &feats, &inst).unwrap();
        assert!(e.per_instance.iter().all(|r| r.2 >= 0.0));
        assert!(e.median >= vbs.median);
    }

    #[test]
    fn bundle_round_trip() {
        let feats = features_for(8, |i, k| (i + k) as f64);
        let t = table_from(|i, a| (i + a) as f64 + 1.0, 8);
        let inst = t.instances().to_vec();
        let mut s = train(&feats, &t, &inst, 9, 2).unwrap();
        s.imputation[0] = f64::NAN;
        let dir = std::env::temp_dir().join(format!("radarnet-bundle-{}", std::process::id()));
        s.save(&dir).unwrap();
        let back = Selector::load(&dir).unwrap();
        std::fs::remove_dir_all(&dir).unwrap();
        assert_eq!(back.models, s.models);
        assert!(back.imputation[0].is_nan());
        assert_eq!(back.split_id, 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn predictions_stay_within_training_targets(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let feats = features_for(10, |_, _| rng.random_range(-1.0..1.0));
            let t = table_from(|i, a| ((i * 17 + a * 5 + seed as usize) % 23) as f64, 10);
            let inst = t.instances().to_vec();
            let s = train(&feats, &t, &inst, seed, 0).unwrap();
            let mut r2 = ChaCha8Rng::seed_from_u64(seed + 1);
            let probe = FeatureVector((0..33).map(|_| r2.random_range(-3.0..3.0)).collect());
            for (algo, p) in s.select(&probe).unwrap() {
                let ys: Vec<f64> = inst.iter().map(|i| t.fitness(i, &algo).unwrap()).collect();
                let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(p >= lo && p <= hi);
            }
        }

        #[test]
        fn vbs_dominates_sbs(seed in 0u64..500) {
            let t = table_from(|i, a| ((i * 7 + a * 11 + seed as usize * 3) % 19) as f64 + 1.0, 9);
            let inst = t.instances().to_vec();
            let sbs = t.sbs(&inst).unwrap();
            for i in &inst {
                let v = t.vbs(i).unwrap().1;
                let s = t.fitness(i, &sbs).unwrap();
                let worst = t.algorithms().iter().map(|a| t.fitness(i, a).unwrap()).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(v <= s && s <= worst);
            }
            prop_assert!(t.median_loss(&sbs, &inst).unwrap() >= 0.0);
        }
    }
}
