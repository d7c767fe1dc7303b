//! Exploratory landscape analysis: 33 cheap features of a sampled function.
//!
//! Families: y-distribution (3), linear/quadratic meta-models (9),
//! dispersion (16) and information content (5). The roster is fixed; models
//! trained on feature vectors depend on column identity.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coverage::{EvalError, EvaluationCounter, Objective};
use crate::sobol::Sobol;
use crate::terrain::ElevationGrid;

pub const FEATURE_COUNT: usize = 33;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "ela_distr.skewness",
    "ela_distr.kurtosis",
    "ela_distr.number_of_peaks",
    "ela_meta.lin_simple.adj_r2",
    "ela_meta.lin_simple.intercept",
    "ela_meta.lin_simple.coef.min",
    "ela_meta.lin_simple.coef.max",
    "ela_meta.lin_simple.coef.max_by_min",
    "ela_meta.lin_w_interact.adj_r2",
    "ela_meta.quad_simple.adj_r2",
    "ela_meta.quad_simple.cond",
    "ela_meta.quad_w_interact.adj_r2",
    "disp.ratio_mean_02",
    "disp.ratio_mean_05",
    "disp.ratio_mean_10",
    "disp.ratio_mean_25",
    "disp.ratio_median_02",
    "disp.ratio_median_05",
    "disp.ratio_median_10",
    "disp.ratio_median_25",
    "disp.diff_mean_02",
    "disp.diff_mean_05",
    "disp.diff_mean_10",
    "disp.diff_mean_25",
    "disp.diff_median_02",
    "disp.diff_median_05",
    "disp.diff_median_10",
    "disp.diff_median_25",
    "ic.h_max",
    "ic.eps_s",
    "ic.eps_max",
    "ic.eps_ratio",
    "ic.m0",
];

/// Samples per dimension for objective-based designs.
pub const SAMPLES_PER_DIMENSION: usize = 50;
const DISP_QUANTILES: [f64; 4] = [0.02, 0.05, 0.10, 0.25];
const IC_GRID_POINTS: usize = 1000;

#[derive(Debug, Error)]
pub enum ElaError {
    #[error("design has {n} points in dimension {d}; need at least {needed}")]
    TooSmall { n: usize, d: usize, needed: usize },
    #[error("design rows have inconsistent lengths")]
    Ragged,
    #[error("non-finite value in design")]
    NonFinite,
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("feature table line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Sample points in `[0,1]^d` with their function values.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl Design {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self, ElaError> {
        let d = x.first().map_or(0, Vec::len);
        if x.len() != y.len() || x.iter().any(|r| r.len() != d) {
            return Err(ElaError::Ragged);
        }
        if x.iter().flatten().chain(&y).any(|v| !v.is_finite()) {
            return Err(ElaError::NonFinite);
        }
        let needed = 2 * d + 2;
        if x.len() < needed {
            return Err(ElaError::TooSmall {
                n: x.len(),
                d,
                needed,
            });
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }
}

/// `n` consecutive Sobol points starting at index `rep_seed * n`, evaluated
/// under a budget of exactly `n`.
pub fn sobol_design(
    objective: &dyn Objective,
    n: usize,
    rep_seed: u64,
) -> Result<Design, ElaError> {
    let counter = EvaluationCounter::new(objective, Some(n as u64));
    let mut sobol = Sobol::new(objective.dimension());
    sobol.seek(rep_seed * n as u64);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let p = sobol.next_point();
        y.push(counter.evaluate(&p)?);
        x.push(p);
    }
    Design::new(x, y)
}

/// Every cell of the grid: normalized cell-center coordinates against altitude.
pub fn dem_design(grid: &ElevationGrid) -> Design {
    let (w, h) = (grid.width(), grid.height());
    let mut x = Vec::with_capacity(w * h);
    let mut y = Vec::with_capacity(w * h);
    for row in 0..h {
        for col in 0..w {
            x.push(vec![
                (col as f64 + 0.5) / w as f64,
                (row as f64 + 0.5) / h as f64,
            ]);
            y.push(grid.cell(row, col));
        }
    }
    Design::new(x, y).expect("grid designs are well formed")
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Skewness, excess kurtosis (both bias-corrected) and number of density peaks.
pub fn ela_distr(y: &[f64]) -> [f64; 3] {
    let n = y.len() as f64;
    let m = mean(y);
    let moment = |k: i32| y.iter().map(|v| (v - m).powi(k)).sum::<f64>() / n;
    let m2 = moment(2);
    if m2 <= 0.0 || y.len() < 4 {
        return [f64::NAN, f64::NAN, 1.0];
    }
    let g1 = moment(3) / m2.powf(1.5);
    let g2 = moment(4) / (m2 * m2) - 3.0;
    let skew = g1 * (n * (n - 1.0)).sqrt() / (n - 2.0);
    let kurt = ((n + 1.0) * g2 + 6.0) * (n - 1.0) / ((n - 2.0) * (n - 3.0));
    [skew, kurt, number_of_peaks(y) as f64]
}

/// Silverman's rule-of-thumb bandwidth, with the usual fallbacks for
/// degenerate spread.
fn silverman_bandwidth(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let m = mean(y);
    let sd = (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let iqr = quantile(y, 0.75) - quantile(y, 0.25);
    let mut lo = sd.min(iqr / 1.34);
    if lo <= 0.0 {
        lo = if sd > 0.0 {
            sd
        } else if y[0] != 0.0 {
            y[0].abs()
        } else {
            1.0
        };
    }
    0.9 * lo * n.powf(-0.2)
}

/// Modes of a Gaussian KDE on 512 points whose mass exceeds a tenth of the largest.
pub fn number_of_peaks(y: &[f64]) -> usize {
    const POINTS: usize = 512;
    let bw = silverman_bandwidth(y);
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * bw;
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * bw;
    let step = (hi - lo) / (POINTS - 1) as f64;
    let norm = 1.0 / (y.len() as f64 * bw * (2.0 * std::f64::consts::PI).sqrt());
    let density: Vec<f64> = (0..POINTS)
        .map(|i| {
            let t = lo + step * i as f64;
            norm * y
                .iter()
                .map(|v| (-0.5 * ((t - v) / bw).powi(2)).exp())
                .sum::<f64>()
        })
        .collect();
    let mut cuts = vec![0];
    for i in 1..POINTS - 1 {
        if density[i] < density[i - 1] && density[i] <= density[i + 1] {
            cuts.push(i);
        }
    }
    cuts.push(POINTS - 1);
    let masses: Vec<f64> = cuts
        .windows(2)
        .map(|w| {
            density[w[0]..=w[1]]
                .windows(2)
                .map(|p| 0.5 * (p[0] + p[1]) * step)
                .sum()
        })
        .collect();
    let largest = masses.iter().copied().fold(0.0, f64::max);
    masses.iter().filter(|&&m| m > 0.1 * largest).count().max(1)
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let h = (s.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(s.len() - 1);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

struct Fit {
    coefficients: DVector<f64>,
    adj_r2: f64,
}

fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> Fit {
    let n = y.len();
    let p = columns.len();
    let a = DMatrix::from_fn(
        n,
        p + 1,
        |i, j| if j == 0 { 1.0 } else { columns[j - 1][i] },
    );
    let b = DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    let tol = svd.singular_values.max() * (n.max(p + 1) as f64) * f64::EPSILON;
    let coefficients = svd.solve(&b, tol).expect("both factors computed");
    let residual = &b - &a * &coefficients;
    let ss_res = residual.norm_squared();
    let m = mean(y);
    let ss_tot: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
    let adj_r2 = if n <= p + 1 || ss_tot <= 0.0 {
        f64::NAN
    } else {
        let r2 = 1.0 - ss_res / ss_tot;
        1.0 - (1.0 - r2) * (n - 1) as f64 / (n - p - 1) as f64
    };
    Fit {
        coefficients,
        adj_r2,
    }
}

/// Four least-squares meta-models and their summary statistics.
pub fn ela_meta(design: &Design) -> [f64; 9] {
    let d = design.dimension();
    let col = |j: usize| -> Vec<f64> { design.x.iter().map(|r| r[j]).collect() };
    let linear: Vec<Vec<f64>> = (0..d).map(col).collect();
    let squares: Vec<Vec<f64>> = linear
        .iter()
        .map(|c| c.iter().map(|v| v * v).collect())
        .collect();
    let mut interactions = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            interactions.push(
                linear[i]
                    .iter()
                    .zip(&linear[j])
                    .map(|(a, b)| a * b)
                    .collect::<Vec<f64>>(),
            );
        }
    }
    let concat = |parts: &[&[Vec<f64>]]| -> Vec<Vec<f64>> {
        parts.iter().flat_map(|p| p.iter().cloned()).collect()
    };

    let lin = least_squares(&linear, &design.y);
    let lin_inter = least_squares(&concat(&[&linear, &interactions]), &design.y);
    let quad = least_squares(&concat(&[&linear, &squares]), &design.y);
    let quad_inter = least_squares(&concat(&[&linear, &interactions, &squares]), &design.y);

    let abs_lin: Vec<f64> = lin.coefficients.iter().skip(1).map(|v| v.abs()).collect();
    let cmin = abs_lin.iter().copied().fold(f64::INFINITY, f64::min);
    let cmax = abs_lin.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let abs_sq: Vec<f64> = quad
        .coefficients
        .iter()
        .skip(1 + d)
        .map(|v| v.abs())
        .collect();
    let qmin = abs_sq.iter().copied().fold(f64::INFINITY, f64::min);
    let qmax = abs_sq.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    [
        lin.adj_r2,
        lin.coefficients[0],
        cmin,
        cmax,
        cmax / cmin,
        lin_inter.adj_r2,
        quad.adj_r2,
        qmax / qmin,
        quad_inter.adj_r2,
    ]
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn pairwise_stats(points: &[&Vec<f64>]) -> (f64, f64) {
    let mut d = Vec::with_capacity(points.len() * (points.len() - 1) / 2);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            d.push(distance(points[i], points[j]));
        }
    }
    let median = crate::lower_median(&d).unwrap_or(f64::NAN);
    (mean(&d), median)
}

/// Dispersion of the best points relative to the whole sample.
pub fn disp(design: &Design) -> [f64; 16] {
    let all: Vec<&Vec<f64>> = design.x.iter().collect();
    let (full_mean, full_median) = pairwise_stats(&all);
    let mut out = [f64::NAN; 16];
    for (k, &q) in DISP_QUANTILES.iter().enumerate() {
        let threshold = quantile(&design.y, q);
        let subset: Vec<&Vec<f64>> = design
            .x
            .iter()
            .zip(&design.y)
            .filter(|(_, &v)| v <= threshold)
            .map(|(x, _)| x)
            .collect();
        if subset.len() < 2 {
            continue;
        }
        let (m, med) = pairwise_stats(&subset);
        out[k] = m / full_mean;
        out[4 + k] = med / full_median;
        out[8 + k] = m - full_mean;
        out[12 + k] = med - full_median;
    }
    out
}

/// Greedy nearest-neighbour tour from point 0; ties go to the lower index.
pub fn nearest_neighbour_tour(x: &[Vec<f64>]) -> Vec<usize> {
    let n = x.len();
    let mut visited = vec![false; n];
    let mut tour = Vec::with_capacity(n);
    let mut current = 0;
    visited[0] = true;
    tour.push(0);
    for _ in 1..n {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (j, seen) in visited.iter().enumerate() {
            if !seen {
                let dd = distance(&x[current], &x[j]);
                if dd < best_d {
                    best_d = dd;
                    best = j;
                }
            }
        }
        visited[best] = true;
        tour.push(best);
        current = best;
    }
    tour
}

/// `{0} ∪ 10^linspace(-5, 15, 1000)`.
pub fn ic_epsilon_grid() -> Vec<f64> {
    let mut g = vec![0.0];
    g.extend(
        (0..IC_GRID_POINTS)
            .map(|i| 10f64.powf(-5.0 + 20.0 * i as f64 / (IC_GRID_POINTS - 1) as f64)),
    );
    g
}

fn symbols(slopes: &[f64], eps: f64) -> Vec<i8> {
    slopes
        .iter()
        .map(|&s| {
            if s > eps {
                1
            } else if s < -eps {
                -1
            } else {
                0
            }
        })
        .collect()
}

/// Entropy (base 6) of the ordered symbol pairs that change symbol.
pub fn information_entropy(psi: &[i8]) -> f64 {
    if psi.len() < 2 {
        return 0.0;
    }
    let mut counts = [[0usize; 3]; 3];
    for w in psi.windows(2) {
        if w[0] != w[1] {
            counts[(w[0] + 1) as usize][(w[1] + 1) as usize] += 1;
        }
    }
    let total = (psi.len() - 1) as f64;
    counts
        .iter()
        .flatten()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln() / 6f64.ln()
        })
        .sum()
}

/// Partial information: runs of alternating non-zero symbols relative to the sequence length.
pub fn partial_information(psi: &[i8]) -> f64 {
    let nonzero: Vec<i8> = psi.iter().copied().filter(|&s| s != 0).collect();
    if nonzero.is_empty() || psi.is_empty() {
        return 0.0;
    }
    let changes = nonzero.windows(2).filter(|w| w[0] != w[1]).count();
    (changes + 1) as f64 / psi.len() as f64
}

/// Slopes between consecutive tour points, normalized by their distance.
pub fn tour_slopes(design: &Design) -> Vec<f64> {
    let tour = nearest_neighbour_tour(&design.x);
    tour.windows(2)
        .map(|w| {
            let dist = distance(&design.x[w[0]], &design.x[w[1]]);
            let dy = design.y[w[1]] - design.y[w[0]];
            if dist > 0.0 {
                dy / dist
            } else {
                0.0
            }
        })
        .collect()
}

/// `[h_max, eps_s, eps_max, eps_ratio, m0]` from tour slopes.
pub fn ic_from_slopes(slopes: &[f64]) -> [f64; 5] {
    if slopes.iter().all(|&s| s == 0.0) {
        return [0.0, f64::NAN, f64::NAN, f64::NAN, f64::NAN];
    }
    let grid = ic_epsilon_grid();
    let mut h_max = f64::NEG_INFINITY;
    let mut eps_max = f64::NAN;
    let mut eps_s = f64::NAN;
    let mut eps_ratio = f64::NAN;
    let m0 = partial_information(&symbols(slopes, 0.0));
    for &eps in &grid {
        let psi = symbols(slopes, eps);
        let h = information_entropy(&psi);
        if h > h_max {
            h_max = h;
            eps_max = eps;
        }
        if eps > 0.0 {
            if eps_s.is_nan() && h < 0.05 {
                eps_s = eps.log10();
            }
            if eps_ratio.is_nan() && partial_information(&psi) < 0.5 * m0 {
                eps_ratio = eps.log10();
            }
        }
    }
    [h_max, eps_s, eps_max, eps_ratio, m0]
}

pub fn ic(design: &Design) -> [f64; 5] {
    ic_from_slopes(&tour_slopes(design))
}

/// The 33 features in roster order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.0[i])
    }
}

pub fn features(design: &Design) -> FeatureVector {
    let mut v = Vec::with_capacity(FEATURE_COUNT);
    v.extend(ela_distr(&design.y));
    v.extend(ela_meta(design));
    v.extend(disp(design));
    v.extend(ic(design));
    debug_assert_eq!(v.len(), FEATURE_COUNT);
    FeatureVector(v)
}

/// Per-feature lower median over the non-NaN entries.
pub fn median_aggregate(vectors: &[FeatureVector]) -> FeatureVector {
    assert!(!vectors.is_empty(), "median of no feature vectors");
    FeatureVector(
        (0..FEATURE_COUNT)
            .map(|k| {
                let col: Vec<f64> = vectors
                    .iter()
                    .map(|v| v.0[k])
                    .filter(|v| !v.is_nan())
                    .collect();
                crate::lower_median(&col).unwrap_or(f64::NAN)
            })
            .collect(),
    )
}

/// Objective-based features: `reps` Sobol designs of `50 d` points, median-aggregated.
pub fn radar_features(objective: &dyn Objective, reps: u64) -> Result<FeatureVector, ElaError> {
    let n = SAMPLES_PER_DIMENSION * objective.dimension();
    let vectors = (0..reps)
        .map(|r| sobol_design(objective, n, r).map(|d| features(&d)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(median_aggregate(&vectors))
}

pub fn dem_features(grid: &ElevationGrid) -> FeatureVector {
    features(&dem_design(grid))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSource {
    Radar,
    Dem,
}

impl std::fmt::Display for FeatureSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeatureSource::Radar => "radar",
            FeatureSource::Dem => "dem",
        })
    }
}

impl FromStr for FeatureSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "radar" => Ok(FeatureSource::Radar),
            "dem" => Ok(FeatureSource::Dem),
            other => Err(format!("unknown feature source `{other}`")),
        }
    }
}

/// Rows of `instance,source,<33 features>`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTable {
    pub rows: Vec<(String, FeatureSource, FeatureVector)>,
}

impl FeatureTable {
    pub fn header() -> String {
        let mut h = String::from("instance,source");
        for n in FEATURE_NAMES {
            h.push(',');
            h.push_str(n);
        }
        h
    }

    pub fn to_csv(&self) -> String {
        let mut out = Self::header();
        out.push('\n');
        for (inst, src, fv) in &self.rows {
            write!(out, "{inst},{src}").unwrap();
            for v in &fv.0 {
                write!(out, ",{v:?}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ElaError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == Self::header() => {}
            Some((i, _)) => {
                return Err(ElaError::Parse {
                    line: i + 1,
                    message: "unexpected header".into(),
                })
            }
            None => return Ok(Self::default()),
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            let err = |message: String| ElaError::Parse {
                line: i + 1,
                message,
            };
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != FEATURE_COUNT + 2 {
                return Err(err(format!(
                    "expected {} fields, got {}",
                    FEATURE_COUNT + 2,
                    fields.len()
                )));
            }
            let src = fields[1].parse().map_err(err)?;
            let values = fields[2..]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|e| err(format!("`{f}`: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push((fields[0].to_string(), src, FeatureVector(values)));
        }
        Ok(Self { rows })
    }

    pub fn get(&self, instance: &str, source: FeatureSource) -> Option<&FeatureVector> {
        self.rows
            .iter()
            .find(|(i, s, _)| i == instance && *s == source)
            .map(|(_, _, f)| f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::FnObjective;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_design(n: usize, d: usize, seed: u64, f: impl Fn(&[f64]) -> f64) -> Design {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random()).collect())
            .collect();
        let y = x.iter().map(|r| f(r)).collect();
        Design::new(x, y).unwrap()
    }

    fn idx(name: &str) -> usize {
        FEATURE_NAMES.iter().position(|n| *n == name).unwrap()
    }

    #[test]
    fn roster_has_33_unique_names() {
        let mut n = FEATURE_NAMES.to_vec();
        n.sort();
        n.dedup();
        assert_eq!(n.len(), 33);
    }

    #[test]
    fn design_preconditions() {
        assert!(matches!(
            Design::new(vec![vec![0.0; 3]; 7], vec![0.0; 7]),
            Err(ElaError::TooSmall { needed: 8, .. })
        ));
        assert!(matches!(
            Design::new(vec![vec![0.0; 1]; 4], vec![0.0; 3]),
            Err(ElaError::Ragged)
        ));
        assert!(matches!(
            Design::new(vec![vec![0.0]; 4], vec![0.0, 1.0, f64::NAN, 2.0]),
            Err(ElaError::NonFinite)
        ));
    }

    #[test]
    fn sobol_designs_depend_on_rep_seed() {
        let f = FnObjective::new(15, |x: &[f64]| x[0]);
        let a = sobol_design(&f, 750, 0).unwrap();
        let b = sobol_design(&f, 750, 1).unwrap();
        assert_eq!(a.len(), 750);
        assert_ne!(a.x, b.x);
        assert!(a.x.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        let all: Vec<Vec<f64>> = Sobol::new(15).take(1500).collect();
        assert_eq!(b.x[..], all[750..]);
    }

    #[test]
    fn dem_design_layout() {
        let alts: Vec<f64> = (0..900).map(f64::from).collect();
        let g = ElevationGrid::instance("g", alts).unwrap();
        let d = dem_design(&g);
        assert_eq!(d.len(), 900);
        assert_eq!(d.dimension(), 2);
        assert_eq!(d.x[31], vec![1.5 / 30.0, 1.5 / 30.0]);
        assert_eq!(d.y[31], 31.0);
        assert_eq!(dem_design(&g), d);
        let flat = dem_design(&ElevationGrid::constant("c", 7.0));
        assert!(flat.y.iter().all(|&v| v == 7.0));
    }

    #[test]
    fn distr_on_symmetric_and_normal_samples() {
        let mut y: Vec<f64> = (1..=50).map(|i| (i as f64).sqrt()).collect();
        y.extend(y.clone().iter().map(|v| -v));
        assert!(ela_distr(&y)[0].abs() < 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let [skew, kurt, peaks] = ela_distr(&z);
        assert!(skew.abs() < 0.1);
        assert!(kurt.abs() < 0.15, "{kurt}");
        assert_eq!(peaks, 1.0);
    }

    #[test]
    fn bimodal_sample_has_two_peaks() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y: Vec<f64> = (0..2000)
            .map(|i| {
                let z: f64 = rng.sample(StandardNormal);
                z + if i % 2 == 0 { -6.0 } else { 6.0 }
            })
            .collect();
        assert_eq!(number_of_peaks(&y), 2);
        // a small third bump below a tenth of the largest mode's mass is ignored
        let mut y3 = y.clone();
        y3.extend((0..50).map(|_| 20.0 + rng.sample::<f64, _>(StandardNormal)));
        assert_eq!(number_of_peaks(&y3), 2);
    }

    #[test]
    fn constant_y_is_degenerate() {
        let d = random_design(40, 2, 0, |_| 3.0);
        let f = features(&d);
        assert!(f.0[0].is_nan() && f.0[1].is_nan());
        assert_eq!(f.0[2], 1.0);
        assert_eq!(f.get("ic.h_max"), Some(0.0));
        assert!(f.0[idx("ic.eps_s")..].iter().all(|v| v.is_nan()));
        assert!(f.get("ela_meta.lin_simple.adj_r2").unwrap().is_nan());
    }

    #[test]
    fn meta_recovers_exact_models() {
        let coef: Vec<f64> = (1..=15).map(|i| i as f64 * 0.1).collect();
        let d = random_design(750, 15, 3, |x| {
            2.5 + x.iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>()
        });
        let m = ela_meta(&d);
        assert!((m[0] - 1.0).abs() < 1e-9);
        assert!((m[1] - 2.5).abs() < 1e-9);
        assert!((m[2] - 0.1).abs() < 1e-9);
        assert!((m[3] - 1.5).abs() < 1e-9);
        assert!((m[4] - 15.0).abs() < 1e-6);

        let d = random_design(750, 15, 4, |x| x.iter().map(|v| v * v).sum());
        let m = ela_meta(&d);
        assert!((m[6] - 1.0).abs() < 1e-9);
        assert!((m[7] - 1.0).abs() < 1e-6, "{}", m[7]);
        assert!((m[8] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn meta_on_noise_explains_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = random_design(750, 15, 6, |_| 0.0);
        let y: Vec<f64> = (0..750).map(|_| rng.random()).collect();
        let d = Design::new(d.x, y).unwrap();
        assert!(ela_meta(&d)[0] <= 0.05);
    }

    #[test]
    fn meta_survives_singular_design() {
        let x: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![i as f64 / 20.0, i as f64 / 20.0])
            .collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] + r[1]).collect();
        let m = ela_meta(&Design::new(x, y).unwrap());
        assert!((m[0] - 1.0).abs() < 1e-9);
        assert!((m[6] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn disp_null_and_clustered() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_design(750, 15, 8, |_| 0.0).x;
        let y: Vec<f64> = (0..750).map(|_| rng.random()).collect();
        let f = disp(&Design::new(x.clone(), y).unwrap());
        for r in &f[..8] {
            assert!((r - 1.0).abs() <= 0.1, "{r}");
        }
        let y: Vec<f64> = x.iter().map(|r| distance(r, &[0.3; 15])).collect();
        let f = disp(&Design::new(x, y).unwrap());
        assert!(f[0] < 1.0);
        assert!(f.iter().take(8).all(|v| *v > 0.0));
    }

    #[test]
    fn disp_diff_matches_ratio_parts() {
        let d = random_design(200, 3, 9, |x| x[0] + x[1] * x[2]);
        let all: Vec<&Vec<f64>> = d.x.iter().collect();
        let (fm, fmed) = pairwise_stats(&all);
        let f = disp(&d);
        for k in 0..4 {
            assert!((f[8 + k] - (f[k] * fm - fm)).abs() < 1e-12);
            assert!((f[12 + k] - (f[4 + k] * fmed - fmed)).abs() < 1e-12);
        }
    }

    #[test]
    fn ic_hand_computed_sequences() {
        // strictly increasing: no symbol changes anywhere
        let [h, eps_s, _, _, m0] = ic_from_slopes(&[1.0; 10]);
        assert_eq!(h, 0.0);
        assert_eq!(m0, 0.1);
        assert!((eps_s + 5.0).abs() < 1e-12);

        // alternating: every pair changes, (1,-1) and (-1,1) split 5/4 over 9 pairs
        let alt: Vec<f64> = (0..10)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let psi = symbols(&alt, 0.0);
        let expected =
            -(5.0 / 9.0f64 * (5.0 / 9.0f64).ln() + 4.0 / 9.0 * (4.0f64 / 9.0).ln()) / 6f64.ln();
        assert!((information_entropy(&psi) - expected).abs() < 1e-15);
        let v = ic_from_slopes(&alt);
        assert!((v[0] - expected).abs() < 1e-15);
        assert_eq!(v[2], 0.0);
        assert_eq!(v[4], 1.0);
        // all slopes have magnitude 1: everything is flat just above eps = 1
        let first_above = ic_epsilon_grid().into_iter().find(|&e| e >= 1.0).unwrap();
        assert_eq!(v[1], first_above.log10());
        assert_eq!(v[3], first_above.log10());
    }

    #[test]
    fn tour_breaks_ties_by_index() {
        let x = vec![vec![0.5], vec![0.75], vec![0.25], vec![1.0]];
        assert_eq!(nearest_neighbour_tour(&x), vec![0, 1, 3, 2]);
    }

    #[test]
    fn feature_vector_and_dem_determinism() {
        let g = crate::terrain::generate_synthetic(3, crate::TerrainClass::Mountainous);
        let a = dem_features(&g);
        let b = dem_features(&g);
        assert_eq!(a.0.len(), 33);
        assert_eq!(
            a.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let adj = [3, 8, 9, 11];
        assert!(adj.iter().all(|&i| a.0[i] <= 1.0));
    }

    #[test]
    fn median_aggregation() {
        let a = FeatureVector(vec![1.0; 33]);
        let mut b = FeatureVector(vec![2.0; 33]);
        b.0[5] = f64::NAN;
        let mut c = FeatureVector(vec![f64::NAN; 33]);
        c.0[0] = 0.0;
        let many: Vec<FeatureVector> = (0..100)
            .map(|i| if i % 2 == 0 { a.clone() } else { b.clone() })
            .collect();
        let m = median_aggregate(&many);
        assert_eq!(m.0[0], 1.0);
        assert_eq!(m.0[5], 1.0);
        assert_eq!(median_aggregate(std::slice::from_ref(&a)), a);
        let m = median_aggregate(&[FeatureVector(vec![f64::NAN; 33]), c]);
        assert_eq!(m.0[0], 0.0);
        assert!(m.0[1].is_nan());
    }

    #[test]
    fn feature_table_round_trip() {
        let mut v = vec![0.25; 33];
        v[3] = f64::NAN;
        let t = FeatureTable {
            rows: vec![
                ("a".into(), FeatureSource::Radar, FeatureVector(v.clone())),
                (
                    "a".into(),
                    FeatureSource::Dem,
                    FeatureVector(vec![1.0 / 3.0; 33]),
                ),
            ],
        };
        let back = FeatureTable::parse(&t.to_csv()).unwrap();
        assert_eq!(back.rows.len(), 2);
        assert!(back.get("a", FeatureSource::Radar).unwrap().0[3].is_nan());
        assert_eq!(
            back.get("a", FeatureSource::Dem),
            t.get("a", FeatureSource::Dem)
        );
        assert!(FeatureTable::parse("instance,source\nx").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn duplicating_the_design_keeps_distr_and_meta(seed in 0u64..1000) {
            let d = random_design(60, 2, seed, |x| (3.0 * x[0]).sin() + x[1] * x[1]);
            let mut x2 = d.x.clone();
            x2.extend(d.x.clone());
            let mut y2 = d.y.clone();
            y2.extend(d.y.clone());
            let dd = Design::new(x2, y2).unwrap();
            let (a, b) = (ela_distr(&d.y), ela_distr(&dd.y));
            // bias corrections depend on n; 0.1 covers n = 60 versus 120
            prop_assert!((a[0] - b[0]).abs() < 0.1 * a[0].abs().max(1.0));
            prop_assert!((a[1] - b[1]).abs() < 0.2 * a[1].abs().max(1.0));
            let (ma, mb) = (ela_meta(&d), ela_meta(&dd));
            for k in [1usize, 2, 3, 4, 7] {
                prop_assert!((ma[k] - mb[k]).abs() < 1e-6 * ma[k].abs().max(1.0));
            }
            prop_assert!(mb[0] >= ma[0] - 1e-6);
        }

        #[test]
        fn adjusted_r2_bounded_and_ratios_positive(seed in 0u64..1000) {
            let d = random_design(80, 3, seed, |x| x[0] * x[1] - x[2]);
            let m = ela_meta(&d);
            for k in [0usize, 5, 6, 8] {
                prop_assert!(m[k] <= 1.0 + 1e-12);
            }
            prop_assert!(disp(&d)[..8].iter().all(|v| *v > 0.0));
        }
    }
}
