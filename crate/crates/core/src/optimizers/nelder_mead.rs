use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{eval_clamped, uniform_point, Never, Step};
use crate::coverage::EvaluationCounter;

const RHO: f64 = 1.0;
const CHI: f64 = 2.0;
const PSI: f64 = 0.5;
const SIGMA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadParams {
    pub xatol: f64,
    pub fatol: f64,
    /// Iteration cap per start, times the dimension.
    pub maxiter_per_dim: usize,
}

impl Default for NelderMeadParams {
    fn default() -> Self {
        Self {
            xatol: 1e-4,
            fatol: 1e-4,
            maxiter_per_dim: 200,
        }
    }
}

pub(crate) fn minimize(
    counter: &EvaluationCounter<'_>,
    rng: &mut impl Rng,
    p: &NelderMeadParams,
) -> Step<Never> {
    let d = counter.dimension();
    loop {
        let x0 = uniform_point(rng, d);
        descend(counter, x0, p)?;
    }
}

/// One simplex descent from `x0`; returns when converged or out of iterations.
pub(crate) fn descend(counter: &EvaluationCounter<'_>, x0: Vec<f64>, p: &NelderMeadParams) -> Step {
    let n = x0.len();
    let mut simplex = vec![x0.clone()];
    for k in 0..n {
        let mut y = x0.clone();
        y[k] = if y[k] != 0.0 { 1.05 * y[k] } else { 0.00025 };
        simplex.push(y);
    }
    let mut fs = Vec::with_capacity(n + 1);
    for x in simplex.iter_mut() {
        fs.push(eval_clamped(counter, x)?);
    }
    for _ in 0..p.maxiter_per_dim * n {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| fs[a].total_cmp(&fs[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        fs = order.iter().map(|&i| fs[i]).collect();

        let x_spread = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let f_spread = fs[1..]
            .iter()
            .map(|f| (f - fs[0]).abs())
            .fold(0.0, f64::max);
        if x_spread <= p.xatol && f_spread <= p.fatol {
            return Ok(());
        }

        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let mut xr = along(RHO);
        let fr = eval_clamped(counter, &mut xr)?;
        let mut shrink = false;
        if fr < fs[0] {
            let mut xe = along(RHO * CHI);
            let fe = eval_clamped(counter, &mut xe)?;
            if fe < fr {
                simplex[n] = xe;
                fs[n] = fe;
            } else {
                simplex[n] = xr;
                fs[n] = fr;
            }
        } else if fr < fs[n - 1] {
            simplex[n] = xr;
            fs[n] = fr;
        } else if fr < fs[n] {
            let mut xc = along(PSI * RHO);
            let fc = eval_clamped(counter, &mut xc)?;
            if fc <= fr {
                simplex[n] = xc;
                fs[n] = fc;
            } else {
                shrink = true;
            }
        } else {
            let mut xcc = along(-PSI);
            let fcc = eval_clamped(counter, &mut xcc)?;
            if fcc < fs[n] {
                simplex[n] = xcc;
                fs[n] = fcc;
            } else {
                shrink = true;
            }
        }
        if shrink {
            let best = simplex[0].clone();
            for j in 1..=n {
                for (x, b) in simplex[j].iter_mut().zip(&best) {
                    *x = b + SIGMA * (*x - b);
                }
                fs[j] = eval_clamped(counter, &mut simplex[j])?;
            }
        }
    }
    Ok(())
}
