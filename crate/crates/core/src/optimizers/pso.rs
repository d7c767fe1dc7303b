use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{uniform_point, Never, Step};
use crate::coverage::EvaluationCounter;

/// Global-best particle swarm with constriction-style constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoParams {
    pub swarm: usize,
    pub inertia: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for PsoParams {
    fn default() -> Self {
        Self {
            swarm: 10,
            inertia: 0.7298,
            c1: 1.49618,
            c2: 1.49618,
        }
    }
}

const V_MAX: f64 = 1.0;

pub(crate) fn minimize(
    counter: &EvaluationCounter<'_>,
    rng: &mut impl Rng,
    p: &PsoParams,
) -> Step<Never> {
    let d = counter.dimension();
    let mut pos: Vec<Vec<f64>> = (0..p.swarm).map(|_| uniform_point(rng, d)).collect();
    let mut vel: Vec<Vec<f64>> = (0..p.swarm)
        .map(|_| (0..d).map(|_| rng.random_range(-0.1..0.1)).collect())
        .collect();
    let mut pbest = pos.clone();
    let mut pbest_f = Vec::with_capacity(p.swarm);
    for x in &pos {
        pbest_f.push(counter.evaluate(x)?);
    }
    let mut g = argmin(&pbest_f);
    loop {
        for i in 0..p.swarm {
            for j in 0..d {
                let (r1, r2): (f64, f64) = (rng.random(), rng.random());
                let v = p.inertia * vel[i][j]
                    + p.c1 * r1 * (pbest[i][j] - pos[i][j])
                    + p.c2 * r2 * (pbest[g][j] - pos[i][j]);
                vel[i][j] = v.clamp(-V_MAX, V_MAX);
                let x = pos[i][j] + vel[i][j];
                if !(0.0..=1.0).contains(&x) {
                    vel[i][j] = 0.0;
                }
                pos[i][j] = x.clamp(0.0, 1.0);
            }
            let f = counter.evaluate(&pos[i])?;
            if f < pbest_f[i] {
                pbest_f[i] = f;
                pbest[i] = pos[i].clone();
                if f < pbest_f[g] {
                    g = i;
                }
            }
        }
    }
}

fn argmin(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |best, i| if v[i] < v[best] { i } else { best })
}
