use rand::Rng;

use super::{uniform_point, Never, Step};
use crate::coverage::EvaluationCounter;
use crate::sobol::Sobol;

/// Stride between the Sobol offsets of consecutive seeds.
pub(crate) const SOBOL_SEED_STRIDE: u64 = 1 << 16;

pub(crate) fn random_search(counter: &EvaluationCounter<'_>, rng: &mut impl Rng) -> Step<Never> {
    let d = counter.dimension();
    loop {
        counter.evaluate(&uniform_point(rng, d))?;
    }
}

/// Consecutive Sobol points starting at a seed-dependent index.
pub(crate) fn sobol_search(counter: &EvaluationCounter<'_>, seed: u64) -> Step<Never> {
    let mut sobol = Sobol::new(counter.dimension());
    sobol.seek((seed % SOBOL_SEED_STRIDE) * SOBOL_SEED_STRIDE);
    loop {
        counter.evaluate(&sobol.next_point())?;
    }
}
