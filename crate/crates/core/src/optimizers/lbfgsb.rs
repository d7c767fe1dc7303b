use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{uniform_point, Never, Step};
use crate::coverage::EvaluationCounter;

/// Projected limited-memory BFGS with a finite-difference gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbfgsbParams {
    pub fd_step: f64,
    pub memory: usize,
    pub pgtol: f64,
    /// Relative reduction below which a start counts as converged.
    pub ftol: f64,
}

impl Default for LbfgsbParams {
    fn default() -> Self {
        Self {
            fd_step: 0.01,
            memory: 10,
            pgtol: 1e-5,
            ftol: 1e7 * f64::EPSILON,
        }
    }
}

/// Forward differences, switching to backward where the step would leave the box.
/// Costs exactly `x.len()` evaluations.
pub fn forward_difference_gradient(
    counter: &EvaluationCounter<'_>,
    x: &[f64],
    fx: f64,
    h: f64,
) -> Result<Vec<f64>, crate::coverage::EvalError> {
    let mut g = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let step = if x[i] + h <= 1.0 { h } else { -h };
        probe[i] = x[i] + step;
        let fp = counter.evaluate(&probe)?;
        probe[i] = x[i];
        g.push((fp - fx) / step);
    }
    Ok(g)
}

pub(crate) fn minimize(
    counter: &EvaluationCounter<'_>,
    rng: &mut impl Rng,
    p: &LbfgsbParams,
) -> Step<Never> {
    let d = counter.dimension();
    loop {
        descend(counter, uniform_point(rng, d), p)?;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn is_free(x: f64, g: f64) -> bool {
    !((x <= 0.0 && g > 0.0) || (x >= 1.0 && g < 0.0))
}

fn descend(counter: &EvaluationCounter<'_>, mut x: Vec<f64>, p: &LbfgsbParams) -> Step {
    let mut fx = counter.evaluate(&x)?;
    let mut g = forward_difference_gradient(counter, &x, fx, p.fd_step)?;
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::new();
    for iter in 0..15000 {
        let pg = x
            .iter()
            .zip(&g)
            .map(|(xi, gi)| ((xi - gi).clamp(0.0, 1.0) - xi).abs())
            .fold(0.0, f64::max);
        if pg <= p.pgtol {
            return Ok(());
        }
        let free: Vec<bool> = x.iter().zip(&g).map(|(&xi, &gi)| is_free(xi, gi)).collect();
        let mask = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .zip(&free)
                .map(|(a, &f)| if f { *a } else { 0.0 })
                .collect()
        };

        // two-loop recursion on the free coordinates
        let mut q = mask(&g);
        let mut alphas = Vec::with_capacity(memory.len());
        for (s, y) in memory.iter().rev() {
            let (s, y) = (mask(s), mask(y));
            let sy = dot(&s, &y);
            if sy <= 1e-12 {
                alphas.push(None);
                continue;
            }
            let a = dot(&s, &q) / sy;
            for (qi, yi) in q.iter_mut().zip(&y) {
                *qi -= a * yi;
            }
            alphas.push(Some((a, sy)));
        }
        if let Some((s, y)) = memory.back() {
            let (s, y) = (mask(s), mask(y));
            let (sy, yy) = (dot(&s, &y), dot(&y, &y));
            if sy > 1e-12 && yy > 0.0 {
                q.iter_mut().for_each(|v| *v *= sy / yy);
            }
        }
        for ((s, y), alpha) in memory.iter().zip(alphas.iter().rev()) {
            if let Some((a, sy)) = alpha {
                let (s, y) = (mask(s), mask(y));
                let b = dot(&y, &q) / sy;
                for (qi, si) in q.iter_mut().zip(&s) {
                    *qi += (a - b) * si;
                }
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let gfree = mask(&g);
        if dot(&gfree, &dir) >= 0.0 {
            memory.clear();
            dir = gfree.iter().map(|v| -v).collect();
        }

        let mut alpha = if iter == 0 || memory.is_empty() {
            (1.0 / dot(&dir, &dir).sqrt()).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..20 {
            let xn: Vec<f64> = x
                .iter()
                .zip(&dir)
                .map(|(a, b)| (a + alpha * b).clamp(0.0, 1.0))
                .collect();
            let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            if step.iter().all(|v| *v == 0.0) {
                break;
            }
            let fn_ = counter.evaluate(&xn)?;
            if fn_ <= fx + 1e-4 * dot(&g, &step) {
                accepted = Some((xn, fn_));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            return Ok(());
        };
        let gn = forward_difference_gradient(counter, &xn, fnew, p.fd_step)?;
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-10 {
            memory.push_back((s, y));
            if memory.len() > p.memory.max(1) {
                memory.pop_front();
            }
        }
        let reduction = (fx - fnew) / fx.abs().max(fnew.abs()).max(1.0);
        x = xn;
        fx = fnew;
        g = gn;
        if reduction <= p.ftol {
            return Ok(());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::{FnObjective, Objective};

    #[test]
    fn gradient_costs_one_evaluation_per_coordinate() {
        let f = FnObjective::new(3, |x: &[f64]| x[0] * 2.0 + x[1] * x[1] - x[2]);
        let counter = EvaluationCounter::new(&f, None);
        let x = [0.5, 0.5, 0.995];
        let fx = f.evaluate(&x).unwrap();
        let g = forward_difference_gradient(&counter, &x, fx, 0.01).unwrap();
        assert_eq!(counter.count(), 3);
        assert!((g[0] - 2.0).abs() < 1e-9);
        assert!((g[1] - 1.01).abs() < 1e-9);
        assert!((g[2] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn bound_constrained_linear_goes_to_corner() {
        let f = FnObjective::new(4, |x: &[f64]| x[0] - x[1] + 2.0 * x[2] - x[3]);
        let counter = EvaluationCounter::new(&f, Some(400));
        let _ = descend(&counter, vec![0.5; 4], &LbfgsbParams::default());
        assert!((counter.best().unwrap().0 + 2.0).abs() < 1e-9);
    }
}
