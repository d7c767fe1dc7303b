//! The coverage objective and the budgeted evaluation wrapper.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::radar_model::{self, DecodeError, NetworkConfig, RadarPhysics, RadarView};
use crate::terrain::ElevationGrid;
use crate::{DIMENSION, DOMAIN_SIZE, GRID_CELLS, VOXEL_COUNT};

/// Default detection threshold for a voxel to count as covered.
pub const DEFAULT_TAU: f64 = 0.9;
/// Bytes in a packed coverage bitset.
/// Margin keeping the bound-based shortcut strictly inside the exact decision.
const DECISION_SLACK: f64 = 1e-12;

pub const BITSET_BYTES: usize = VOXEL_COUNT.div_ceil(8);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("evaluation budget of {budget} exhausted")]
    BudgetExhausted { budget: u64 },
    #[error("objective returned non-finite value {value} at evaluation {evaluation}")]
    NonFinite { value: f64, evaluation: u64 },
    #[error("{0}")]
    Other(String),
}

/// A black-box minimization problem over `[0,1]^d`.
pub trait Objective: Sync {
    fn dimension(&self) -> usize;
    fn evaluate(&self, x: &[f64]) -> Result<f64, EvalError>;
}

/// Closure-backed objective, mostly for benchmark functions.
pub struct FnObjective<F> {
    dimension: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnObjective<F> {
    pub fn new(dimension: usize, f: F) -> Self {
        Self { dimension, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Objective for FnObjective<F> {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64, EvalError> {
        Ok((self.f)(x))
    }
}

/// One problem instance: terrain, detection physics and threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub name: String,
    pub grid: ElevationGrid,
    pub physics: RadarPhysics,
    pub tau: f64,
}

impl Instance {
    pub fn new(grid: ElevationGrid, physics: RadarPhysics, tau: f64) -> Self {
        assert!(tau > 0.0 && tau < 1.0, "tau must lie in (0, 1)");
        assert_eq!(grid.width(), GRID_CELLS);
        assert_eq!(grid.height(), GRID_CELLS);
        Self {
            name: grid.name().to_string(),
            grid,
            physics,
            tau,
        }
    }

    pub fn with_defaults(grid: ElevationGrid) -> Self {
        Self::new(grid, RadarPhysics::default(), DEFAULT_TAU)
    }

    /// Count voxels whose fused detection probability reaches `tau`.
    pub fn coverage(&self, config: &NetworkConfig) -> CoverageResult {
        self.coverage_with(config, [true; 4])
    }

    /// Coverage with only the radars flagged in `active` switched on.
    pub fn coverage_with(&self, config: &NetworkConfig, active: [bool; 4]) -> CoverageResult {
        let cell = DOMAIN_SIZE / GRID_CELLS as f64;
        let cells = GRID_CELLS * GRID_CELLS;
        // azimuth-independent terms per radar and cell, in radar order
        let ceiling = radar_model::TerrainCeiling::new(&self.grid);
        let mut views: Vec<[Option<RadarView>; 4]> = Vec::with_capacity(cells);
        for iy in 0..GRID_CELLS {
            let ty = (iy as f64 + 0.5) * cell;
            for ix in 0..GRID_CELLS {
                let tx = (ix as f64 + 0.5) * cell;
                let mut row = [None; 4];
                for ((slot, radar), _) in row
                    .iter_mut()
                    .zip(&config.radars)
                    .zip(active)
                    .filter(|(_, on)| *on)
                {
                    *slot = radar_model::radar_view(
                        &self.grid,
                        &self.physics,
                        radar,
                        tx,
                        ty,
                        Some(&ceiling),
                    );
                }
                views.push(row);
            }
        }
        let mut bits = vec![0u8; BITSET_BYTES];
        let mut covered = 0;
        let mut set = |k: usize| {
            bits[k / 8] |= 1 << (k % 8);
            covered += 1;
        };
        for (c, row) in views.iter().enumerate() {
            // the aspect term moves each probability within [lo, hi]; cells
            // decided for every azimuth skip the per-bin products
            let (mut missed_lo, mut missed_hi) = (1.0, 1.0);
            for view in row.iter().flatten() {
                let (lo, hi) = radar_model::view_probability_bounds(&self.physics, view);
                missed_lo *= 1.0 - hi;
                missed_hi *= 1.0 - lo;
            }
            if 1.0 - missed_lo < self.tau - DECISION_SLACK {
                continue;
            }
            if 1.0 - missed_hi >= self.tau + DECISION_SLACK {
                (0..GRID_CELLS).for_each(|itheta| set(itheta * cells + c));
                continue;
            }
            for itheta in 0..GRID_CELLS {
                let theta = radar_model::azimuth_center(itheta);
                let mut missed = 1.0;
                for view in row.iter().flatten() {
                    missed *= 1.0 - radar_model::view_probability(&self.physics, view, theta);
                }
                if 1.0 - missed >= self.tau {
                    set(itheta * cells + c);
                }
            }
        }
        CoverageResult { covered, bits }
    }

    pub fn evaluate_vector(&self, v: &[f64]) -> Result<CoverageResult, DecodeError> {
        let config = radar_model::decode(v, &self.physics)?;
        Ok(self.coverage(&config))
    }

    /// Non-covered voxel count of the decoded configuration; lower is better.
    pub fn fitness(&self, v: &[f64]) -> Result<f64, DecodeError> {
        Ok(self.evaluate_vector(v)?.uncovered() as f64)
    }
}

impl Objective for Instance {
    fn dimension(&self) -> usize {
        DIMENSION
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64, EvalError> {
        Ok(self.fitness(x)?)
    }
}

/// Covered voxels as a bitset, bit `k` = voxel `itheta * 900 + iy * 30 + ix`, LSB first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageResult {
    covered: usize,
    bits: Vec<u8>,
}

impl CoverageResult {
    pub fn from_bitset(bits: Vec<u8>) -> Option<Self> {
        if bits.len() != BITSET_BYTES {
            return None;
        }
        let covered = (0..VOXEL_COUNT)
            .filter(|&k| bits[k / 8] >> (k % 8) & 1 == 1)
            .count();
        Some(Self { covered, bits })
    }

    pub fn covered(&self) -> usize {
        self.covered
    }

    pub fn uncovered(&self) -> usize {
        VOXEL_COUNT - self.covered
    }

    pub fn is_covered(&self, k: usize) -> bool {
        self.bits[k / 8] >> (k % 8) & 1 == 1
    }

    pub fn bitset(&self) -> &[u8] {
        &self.bits
    }

    /// Covered azimuth bins per (iy, ix) column, row-major, each in `0..=30`.
    pub fn column_counts(&self) -> Vec<u8> {
        let cells = GRID_CELLS * GRID_CELLS;
        let mut counts = vec![0u8; cells];
        for k in 0..VOXEL_COUNT {
            if self.is_covered(k) {
                counts[k % cells] += 1;
            }
        }
        counts
    }
}

#[derive(Debug, Default)]
struct CounterState {
    count: u64,
    best: Option<(f64, Vec<f64>)>,
    improvements: Vec<(u64, f64)>,
}

/// Counts evaluations, tracks the best-so-far point and logs every
/// improvement. Calls past the budget fail with [`EvalError::BudgetExhausted`].
///
/// The state lock is held across the objective call so that evaluation
/// indices and improvements stay in call order under concurrent use.
pub struct EvaluationCounter<'a> {
    objective: &'a dyn Objective,
    budget: Option<u64>,
    state: Mutex<CounterState>,
}

impl<'a> EvaluationCounter<'a> {
    pub fn new(objective: &'a dyn Objective, budget: Option<u64>) -> Self {
        Self {
            objective,
            budget,
            state: Mutex::new(CounterState::default()),
        }
    }

    pub fn dimension(&self) -> usize {
        self.objective.dimension()
    }

    pub fn budget(&self) -> Option<u64> {
        self.budget
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64, EvalError> {
        let mut state = self.state.lock().expect("counter lock poisoned");
        if let Some(budget) = self.budget {
            if state.count >= budget {
                return Err(EvalError::BudgetExhausted { budget });
            }
        }
        state.count += 1;
        let evaluation = state.count;
        let value = self.objective.evaluate(x)?;
        if !value.is_finite() {
            return Err(EvalError::NonFinite { value, evaluation });
        }
        if state.best.as_ref().is_none_or(|(b, _)| value < *b) {
            state.best = Some((value, x.to_vec()));
            state.improvements.push((evaluation, value));
        }
        Ok(value)
    }

    pub fn count(&self) -> u64 {
        self.state.lock().expect("counter lock poisoned").count
    }

    pub fn remaining(&self) -> Option<u64> {
        self.budget.map(|b| b.saturating_sub(self.count()))
    }

    pub fn best(&self) -> Option<(f64, Vec<f64>)> {
        self.state
            .lock()
            .expect("counter lock poisoned")
            .best
            .clone()
    }

    /// (evaluation index, new best value) for every strict improvement.
    pub fn improvements(&self) -> Vec<(u64, f64)> {
        self.state
            .lock()
            .expect("counter lock poisoned")
            .improvements
            .clone()
    }

    pub fn reset(&self) {
        *self.state.lock().expect("counter lock poisoned") = CounterState::default();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::{generate_synthetic, TerrainClass};

    #[test]
    fn dead_radars_cover_nothing() {
        let physics = RadarPhysics {
            snr_ref_staring: -999.0,
            snr_ref_rotating: -999.0,
            ..RadarPhysics::default()
        };
        let inst = Instance::new(ElevationGrid::constant("flat", 0.0), physics, DEFAULT_TAU);
        let res = inst.evaluate_vector(&[0.5; 15]).unwrap();
        assert_eq!(res.covered(), 0);
        assert_eq!(inst.fitness(&[0.5; 15]).unwrap(), 27_000.0);
    }

    #[test]
    fn overpowered_radars_cover_everything() {
        let physics = RadarPhysics {
            snr_ref_rotating: 500.0,
            vertical_beamwidth: 360.0,
            ..RadarPhysics::default()
        };
        let inst = Instance::new(ElevationGrid::constant("flat", 0.0), physics, DEFAULT_TAU);
        assert_eq!(inst.fitness(&[0.5; 15]).unwrap(), 0.0);
    }

    #[test]
    fn counts_add_up_and_repeat() {
        let inst = Instance::with_defaults(generate_synthetic(3, TerrainClass::Intermediate));
        let v: Vec<f64> = (0..15).map(|i| ((i * 7 + 3) % 11) as f64 / 10.0).collect();
        let a = inst.evaluate_vector(&v).unwrap();
        let b = inst.evaluate_vector(&v).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.covered() + a.uncovered(), VOXEL_COUNT);
        let bits = a
            .bitset()
            .iter()
            .map(|b| b.count_ones() as usize)
            .sum::<usize>();
        assert_eq!(bits, a.covered());
        assert_eq!(
            a.column_counts().iter().map(|&c| c as usize).sum::<usize>(),
            a.covered()
        );
        assert_eq!(CoverageResult::from_bitset(a.bitset().to_vec()).unwrap(), a);
        assert_eq!(a.bitset().len(), 3_375);
    }

    #[test]
    fn counter_tracks_budget_and_best() {
        let f = FnObjective::new(1, |x: &[f64]| x[0]);
        let counter = EvaluationCounter::new(&f, Some(3));
        assert_eq!(counter.evaluate(&[5.0]).unwrap(), 5.0);
        counter.evaluate(&[7.0]).unwrap();
        counter.evaluate(&[2.0]).unwrap();
        assert_eq!(counter.count(), 3);
        assert_eq!(counter.best().unwrap().0, 2.0);
        assert_eq!(counter.improvements(), vec![(1, 5.0), (3, 2.0)]);
        assert_eq!(
            counter.evaluate(&[0.0]),
            Err(EvalError::BudgetExhausted { budget: 3 })
        );
        assert_eq!(counter.count(), 3);
    }

    #[test]
    fn counter_budget_500() {
        let f = FnObjective::new(1, |x: &[f64]| x[0]);
        let counter = EvaluationCounter::new(&f, Some(500));
        let mut last_best = f64::INFINITY;
        for i in 0..500 {
            counter.evaluate(&[((i * 37) % 101) as f64]).unwrap();
            let best = counter.best().unwrap().0;
            assert!(best <= last_best);
            last_best = best;
        }
        assert!(matches!(
            counter.evaluate(&[0.0]),
            Err(EvalError::BudgetExhausted { budget: 500 })
        ));
    }

    #[test]
    fn counter_flags_nan() {
        let f = FnObjective::new(1, |_: &[f64]| f64::NAN);
        let counter = EvaluationCounter::new(&f, None);
        assert!(matches!(
            counter.evaluate(&[0.0]),
            Err(EvalError::NonFinite { evaluation: 1, .. })
        ));
        assert!(counter.best().is_none());
    }

    #[test]
    fn counter_is_consistent_across_threads() {
        let f = FnObjective::new(1, |x: &[f64]| x[0]);
        let counter = EvaluationCounter::new(&f, Some(400));
        std::thread::scope(|s| {
            for t in 0..4 {
                let counter = &counter;
                s.spawn(move || {
                    for i in 0..150 {
                        let _ = counter.evaluate(&[1000.0 - (t * 150 + i) as f64]);
                    }
                });
            }
        });
        assert_eq!(counter.count(), 400);
        let imp = counter.improvements();
        assert!(imp.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 > w[1].1));
    }
}
