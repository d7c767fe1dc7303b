use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{eval_clamped, uniform_point, Never, Step};
use crate::coverage::EvaluationCounter;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Mutation {
    Constant(f64),
    /// Redrawn uniformly from `[lo, hi)` once per generation.
    Dither(f64, f64),
}

/// DE/rand/1/bin with an absolute population size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeParams {
    pub popsize: usize,
    pub mutation: Mutation,
    pub recombination: f64,
}

pub(crate) fn minimize(
    counter: &EvaluationCounter<'_>,
    rng: &mut impl Rng,
    p: &DeParams,
) -> Step<Never> {
    let d = counter.dimension();
    let np = p.popsize;
    let mut pop: Vec<Vec<f64>> = (0..np).map(|_| uniform_point(rng, d)).collect();
    let mut fit = Vec::with_capacity(np);
    for x in pop.iter_mut() {
        fit.push(eval_clamped(counter, x)?);
    }
    loop {
        let f = match p.mutation {
            Mutation::Constant(f) => f,
            Mutation::Dither(lo, hi) if hi > lo => rng.random_range(lo..hi),
            Mutation::Dither(lo, _) => lo,
        };
        for i in 0..np {
            // three distinct donors, none equal to the target
            let mut donors = [0usize; 3];
            let picks = sample(rng, np - 1, 3);
            for (slot, k) in donors.iter_mut().zip(picks.iter()) {
                *slot = if k >= i { k + 1 } else { k };
            }
            let [r1, r2, r3] = donors;
            let j_rand = rng.random_range(0..d);
            let mut trial = pop[i].clone();
            for j in 0..d {
                if j == j_rand || rng.random::<f64>() < p.recombination {
                    trial[j] = pop[r1][j] + f * (pop[r2][j] - pop[r3][j]);
                }
            }
            let ft = eval_clamped(counter, &mut trial)?;
            if ft <= fit[i] {
                pop[i] = trial;
                fit[i] = ft;
            }
        }
    }
}
