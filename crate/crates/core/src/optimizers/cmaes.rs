use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Never, Step};
use crate::coverage::EvaluationCounter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RestartStrategy {
    None,
    Ipop,
    Bipop,
}

/// Module switches encoded by the 11-digit CMA name suffix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CmaModules {
    pub active: bool,
    pub elitist: bool,
    pub mirrored: bool,
    pub pairwise: bool,
    pub restart: RestartStrategy,
}

impl CmaModules {
    /// Digits 0 (active), 1 (elitist), 2 (mirrored), 7 (pairwise selection) and
    /// 10 (0 none, 1 IPOP, 2 BIPOP) are supported; every other digit must be 0.
    pub fn from_digits(digits: &str) -> Option<Self> {
        let d: Vec<u32> = digits
            .chars()
            .map(|c| c.to_digit(10))
            .collect::<Option<_>>()?;
        if d.len() != 11 {
            return None;
        }
        let flag = |i: usize| match d[i] {
            0 => Some(false),
            1 => Some(true),
            _ => None,
        };
        if [3, 4, 5, 6, 8, 9].iter().any(|&i| d[i] != 0) {
            return None;
        }
        let restart = match d[10] {
            0 => RestartStrategy::None,
            1 => RestartStrategy::Ipop,
            2 => RestartStrategy::Bipop,
            _ => return None,
        };
        let m = Self {
            active: flag(0)?,
            elitist: flag(1)?,
            mirrored: flag(2)?,
            pairwise: flag(7)?,
            restart,
        };
        if m.pairwise && !m.mirrored {
            return None;
        }
        Some(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmaParams {
    pub modules: CmaModules,
    pub sigma0: f64,
}

impl Default for CmaParams {
    fn default() -> Self {
        Self {
            modules: CmaModules::from_digits("00000000000").unwrap(),
            sigma0: 0.2,
        }
    }
}

/// Snapshot of one generation, for inspection in tests.
#[derive(Debug, Clone, PartialEq)]
pub struct CmaGeneration {
    pub restart: usize,
    pub mean: Vec<f64>,
    pub sigma: f64,
    /// Sampled steps `y = B D z` before box repair.
    pub steps: Vec<Vec<f64>>,
    pub fitness: Vec<f64>,
    /// Best value among the parents selected for the next generation.
    pub best_parent: f64,
}

struct Strategy {
    n: usize,
    lambda: usize,
    mu: usize,
    weights: Vec<f64>,
    mueff: f64,
    cc: f64,
    cs: f64,
    c1: f64,
    cmu: f64,
    damps: f64,
    chi_n: f64,
    mean: DVector<f64>,
    sigma: f64,
    c: DMatrix<f64>,
    b: DMatrix<f64>,
    d: DVector<f64>,
    inv_sqrt_c: DMatrix<f64>,
    pc: DVector<f64>,
    ps: DVector<f64>,
    generation: usize,
    parents: Vec<(DVector<f64>, f64)>,
    history: VecDeque<f64>,
}

impl Strategy {
    fn new(n: usize, lambda: usize, mean: DVector<f64>, sigma: f64, active: bool) -> Self {
        let nf = n as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=lambda)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
            .collect();
        let pos_sum: f64 = raw[..mu].iter().sum();
        let pos_sq: f64 = raw[..mu].iter().map(|w| w * w).sum();
        let mueff = pos_sum * pos_sum / pos_sq;
        let cc = (4.0 + mueff / nf) / (nf + 4.0 + 2.0 * mueff / nf);
        let cs = (mueff + 2.0) / (nf + mueff + 5.0);
        let c1 = 2.0 / ((nf + 1.3).powi(2) + mueff);
        let cmu = (1.0 - c1).min(2.0 * (mueff - 2.0 + 1.0 / mueff) / ((nf + 2.0).powi(2) + mueff));
        let damps = 1.0 + 2.0 * (((mueff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + cs;
        let mut weights: Vec<f64> = raw.iter().map(|w| w.max(0.0) / pos_sum).collect();
        let neg = &raw[mu..];
        if active && !neg.is_empty() {
            let neg_sum: f64 = neg.iter().map(|w| w.abs()).sum();
            let neg_sq: f64 = neg.iter().map(|w| w * w).sum();
            let mueff_neg = neg_sum * neg_sum / neg_sq;
            let alpha_mu = 1.0 + c1 / cmu;
            let alpha_mueff = 1.0 + 2.0 * mueff_neg / (mueff + 2.0);
            let alpha_posdef = (1.0 - c1 - cmu) / (nf * cmu);
            let scale = alpha_mu.min(alpha_mueff).min(alpha_posdef) / neg_sum;
            for (w, r) in weights[mu..].iter_mut().zip(neg) {
                *w = r * scale;
            }
        }
        Self {
            n,
            lambda,
            mu,
            weights,
            mueff,
            cc,
            cs,
            c1,
            cmu,
            damps,
            chi_n: nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf)),
            mean,
            sigma,
            c: DMatrix::identity(n, n),
            b: DMatrix::identity(n, n),
            d: DVector::from_element(n, 1.0),
            inv_sqrt_c: DMatrix::identity(n, n),
            pc: DVector::zeros(n),
            ps: DVector::zeros(n),
            generation: 0,
            parents: Vec::new(),
            history: VecDeque::new(),
        }
    }

    fn decompose(&mut self) {
        let sym = (&self.c + self.c.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym.clone());
        self.c = sym;
        self.b = eig.eigenvectors;
        self.d = eig.eigenvalues.map(|v| v.max(1e-300).sqrt());
        let inv = DMatrix::from_diagonal(&self.d.map(|v| 1.0 / v));
        self.inv_sqrt_c = &self.b * inv * self.b.transpose();
    }

    fn stagnated(&self, current_range: f64) -> bool {
        let tolx = self.sigma
            * self
                .c
                .diagonal()
                .iter()
                .map(|v| v.sqrt())
                .fold(0.0, f64::max)
                .max(self.pc.amax());
        if tolx < 1e-11 {
            return true;
        }
        let (dmax, dmin) = (self.d.max(), self.d.min());
        if (dmax / dmin).powi(2) > 1e14 {
            return true;
        }
        let window = 10 + (30.0 * self.n as f64 / self.lambda as f64).ceil() as usize;
        if self.history.len() >= window {
            let hmax = self
                .history
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            let hmin = self.history.iter().copied().fold(f64::INFINITY, f64::min);
            if hmax - hmin < 1e-12 && current_range < 1e-12 {
                return true;
            }
        }
        !self.sigma.is_finite()
    }
}

fn default_lambda(n: usize) -> usize {
    4 + (3.0 * (n as f64).ln()).floor() as usize
}

fn uniform_mean(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random::<f64>())
}

pub(crate) fn minimize(
    counter: &EvaluationCounter<'_>,
    rng: &mut impl Rng,
    p: &CmaParams,
    mut trace: Option<&mut Vec<CmaGeneration>>,
) -> Step<Never> {
    let n = counter.dimension();
    let m = p.modules;
    let lambda_default = default_lambda(n);
    let even = |l: usize| if m.mirrored && l % 2 == 1 { l + 1 } else { l };
    let mut lambda = even(lambda_default);
    let mut sigma0 = p.sigma0;
    let (mut large_budget, mut small_budget) = (0u64, 0u64);
    let mut large_exponent = 0u32;
    let mut in_large = true;
    for restart in 0.. {
        let start = counter.count();
        let mean = uniform_mean(rng, n);
        let mut s = Strategy::new(n, lambda, mean, sigma0, m.active);
        let outcome = run_once(counter, rng, &mut s, m, restart, &mut trace);
        let used = counter.count() - start;
        if in_large {
            large_budget += used;
        } else {
            small_budget += used;
        }
        outcome?;
        match m.restart {
            RestartStrategy::None => {}
            RestartStrategy::Ipop => lambda = even(lambda * 2),
            RestartStrategy::Bipop => {
                if large_budget <= small_budget {
                    in_large = true;
                    large_exponent += 1;
                    lambda = even(lambda_default << large_exponent);
                    sigma0 = p.sigma0;
                } else {
                    in_large = false;
                    let u: f64 = rng.random();
                    let ratio =
                        0.5 * (lambda_default << large_exponent) as f64 / lambda_default as f64;
                    lambda = even(
                        ((lambda_default as f64) * ratio.powf(u * u))
                            .floor()
                            .max(2.0) as usize,
                    );
                    sigma0 = p.sigma0 * 10f64.powf(-2.0 * rng.random::<f64>());
                }
            }
        }
    }
    unreachable!("restart loop is unbounded")
}

/// One CMA-ES run until a stopping criterion fires (`Ok`) or the counter refuses (`Err`).
fn run_once(
    counter: &EvaluationCounter<'_>,
    rng: &mut impl Rng,
    s: &mut Strategy,
    m: CmaModules,
    restart: usize,
    trace: &mut Option<&mut Vec<CmaGeneration>>,
) -> Step {
    let n = s.n;
    loop {
        let mut steps: Vec<DVector<f64>> = Vec::with_capacity(s.lambda);
        let mut ys = Vec::with_capacity(s.lambda);
        let mut fs = Vec::with_capacity(s.lambda);
        let mut xs = Vec::with_capacity(s.lambda);
        let mut z = DVector::zeros(n);
        for k in 0..s.lambda {
            if m.mirrored && k % 2 == 1 {
                z = -z;
            } else {
                z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            }
            let y = &s.b * z.component_mul(&s.d);
            let x = (&s.mean + &y * s.sigma).map(|v| v.clamp(0.0, 1.0));
            let y_repaired = (&x - &s.mean) / s.sigma;
            steps.push(y);
            let f = counter.evaluate(x.as_slice());
            let f = match f {
                Ok(f) => f,
                Err(e) => {
                    if let Some(t) = trace.as_deref_mut() {
                        let best_parent = s.parents.first().map_or(f64::INFINITY, |p| p.1);
                        t.push(snapshot(s, restart, &steps, &fs, best_parent));
                    }
                    return Err(e);
                }
            };
            fs.push(f);
            ys.push(y_repaired);
            xs.push(x);
        }

        // candidate pool: (step, fitness, point)
        let mut pool: Vec<(DVector<f64>, f64, DVector<f64>)> = Vec::new();
        if m.pairwise {
            for k in (0..s.lambda).step_by(2) {
                let w = if k + 1 < s.lambda && fs[k + 1] < fs[k] {
                    k + 1
                } else {
                    k
                };
                pool.push((ys[w].clone(), fs[w], xs[w].clone()));
            }
        } else {
            for k in 0..s.lambda {
                pool.push((ys[k].clone(), fs[k], xs[k].clone()));
            }
        }
        if m.elitist {
            for (x, f) in &s.parents {
                pool.push(((x - &s.mean) / s.sigma, *f, x.clone()));
            }
        }
        pool.sort_by(|a, b| a.1.total_cmp(&b.1));

        let mu = s.mu.min(pool.len());
        let neg = s.lambda - s.mu;
        let mut assigned: Vec<(usize, f64)> = (0..mu).map(|i| (i, s.weights[i])).collect();
        let pos_sum: f64 = assigned.iter().map(|a| a.1).sum();
        assigned.iter_mut().for_each(|a| a.1 /= pos_sum);
        if m.active {
            let tail = neg.min(pool.len() - mu);
            for j in 0..tail {
                assigned.push((pool.len() - tail + j, s.weights[s.mu + (neg - tail) + j]));
            }
        }

        let old_mean = s.mean.clone();
        let mut shift = DVector::zeros(n);
        for &(i, w) in assigned.iter().filter(|a| a.1 > 0.0) {
            shift += &pool[i].0 * w;
        }
        s.mean = (&old_mean + &shift * s.sigma).map(|v| v.clamp(0.0, 1.0));
        let step = (&s.mean - &old_mean) / s.sigma;

        let csn = (s.cs * (2.0 - s.cs) * s.mueff).sqrt();
        s.ps = &s.ps * (1.0 - s.cs) + &s.inv_sqrt_c * &step * csn;
        let gen = (s.generation + 1) as f64;
        let hsig_ratio = s.ps.norm() / (1.0 - (1.0 - s.cs).powf(2.0 * gen)).sqrt() / s.chi_n;
        let hsig = if hsig_ratio < 1.4 + 2.0 / (n as f64 + 1.0) {
            1.0
        } else {
            0.0
        };
        let ccn = (s.cc * (2.0 - s.cc) * s.mueff).sqrt();
        s.pc = &s.pc * (1.0 - s.cc) + &step * (hsig * ccn);
        let delta = (1.0 - hsig) * s.cc * (2.0 - s.cc);

        let weight_sum: f64 = assigned.iter().map(|a| a.1).sum();
        let mut rank_mu = DMatrix::zeros(n, n);
        for &(i, w) in &assigned {
            let y = &pool[i].0;
            let w = if w < 0.0 {
                let norm2 = (&s.inv_sqrt_c * y).norm_squared();
                if norm2 > 0.0 {
                    w * n as f64 / norm2
                } else {
                    0.0
                }
            } else {
                w
            };
            rank_mu += y * y.transpose() * w;
        }
        s.c = &s.c * (1.0 + s.c1 * delta - s.c1 - s.cmu * weight_sum)
            + &s.pc * s.pc.transpose() * s.c1
            + rank_mu * s.cmu;
        let exponent = (s.cs / s.damps) * (s.ps.norm() / s.chi_n - 1.0);
        s.sigma *= exponent.min(1.0).exp();
        s.decompose();
        s.generation += 1;

        if m.elitist {
            s.parents = pool[..mu].iter().map(|(_, f, x)| (x.clone(), *f)).collect();
        }
        let gen_best = fs.iter().copied().fold(f64::INFINITY, f64::min);
        let gen_worst = fs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        s.history.push_back(gen_best);
        let window = 10 + (30.0 * n as f64 / s.lambda as f64).ceil() as usize;
        while s.history.len() > window {
            s.history.pop_front();
        }
        if let Some(t) = trace.as_deref_mut() {
            let mut snap = snapshot(s, restart, &steps, &fs, pool[0].1);
            snap.mean = old_mean.iter().copied().collect();
            t.push(snap);
        }
        if s.stagnated(gen_worst - gen_best) {
            return Ok(());
        }
    }
}

fn snapshot(
    s: &Strategy,
    restart: usize,
    steps: &[DVector<f64>],
    fs: &[f64],
    best_parent: f64,
) -> CmaGeneration {
    CmaGeneration {
        restart,
        mean: s.mean.iter().copied().collect(),
        sigma: s.sigma,
        steps: steps.iter().map(|y| y.iter().copied().collect()).collect(),
        fitness: fs.to_vec(),
        best_parent,
    }
}

#[cfg(test)]
/// Run CMA-ES under `counter`, recording every generation.
pub(crate) fn traced(
    counter: &EvaluationCounter<'_>,
    seed: u64,
    p: &CmaParams,
) -> Vec<CmaGeneration> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Vec::new();
    let _ = minimize(counter, &mut rng, p, Some(&mut trace));
    trace
}
