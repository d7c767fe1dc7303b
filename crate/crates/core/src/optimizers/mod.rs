//! The 13-algorithm derivative-free portfolio over `[0,1]^d`.
//!
//! Every algorithm draws points until the evaluation counter refuses a call
//! with [`EvalError::BudgetExhausted`]; local searches restart from fresh
//! uniform points when they converge, so each run consumes its whole budget.
//! Points are clamped to the box before evaluation.

mod cmaes;
mod de;
mod lbfgsb;
mod nelder_mead;
mod powell;
mod pso;
mod sampling;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coverage::{EvalError, EvaluationCounter, Objective};
use crate::runlog::{RunHeader, RunTrajectory};

pub use cmaes::{CmaGeneration, CmaModules, CmaParams};
pub use de::{DeParams, Mutation};
pub use lbfgsb::{forward_difference_gradient, LbfgsbParams};
pub use nelder_mead::NelderMeadParams;
pub use powell::PowellParams;
pub use pso::PsoParams;

/// Canonical portfolio names, in portfolio order.
pub const PORTFOLIO_NAMES: [&str; 13] = [
    "RandomSearch",
    "SobolSearch",
    "DE",
    "DE_2500_chile",
    "NelderMead",
    "Powell",
    "LBFGSB",
    "PSO",
    "CMA_00000000000",
    "CMA_00100001000",
    "CMA_01000000000",
    "CMA_10000000000",
    "CMA_11000000002",
];

#[derive(Debug, Error)]
pub enum RunError {
    #[error("unsupported algorithm `{0}`")]
    UnknownAlgorithm(String),
    #[error("bad hyperparameter for {algorithm}: {message}")]
    Hyperparameter { algorithm: String, message: String },
    #[error("budget must be at least 1")]
    ZeroBudget,
    #[error(transparent)]
    Objective(EvalError),
}

/// Named algorithm plus hyperparameter overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSpec {
    pub name: String,
    #[serde(default)]
    pub hyperparameters: BTreeMap<String, f64>,
    #[serde(default = "default_true")]
    pub seedable: bool,
}

fn default_true() -> bool {
    true
}

impl AlgorithmSpec {
    pub fn named(name: &str) -> Self {
        let mut hp = BTreeMap::new();
        let mut set = |k: &str, v: f64| {
            hp.insert(k.to_string(), v);
        };
        match name {
            "DE" => {
                set("popsize", 15.0);
                set("mutation_min", 0.5);
                set("mutation_max", 1.0);
                set("recombination", 0.7);
            }
            "DE_2500_chile" => {
                set("popsize", 6.0);
                set("mutation", 0.1);
                set("recombination", 0.58);
            }
            "LBFGSB" => set("fd_step", 0.01),
            "PSO" => {
                set("swarm", 10.0);
                set("inertia", 0.7298);
                set("c1", 1.49618);
                set("c2", 1.49618);
            }
            _ => {}
        }
        Self {
            name: name.to_string(),
            hyperparameters: hp,
            seedable: true,
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.hyperparameters.insert(key.to_string(), value);
        self
    }

    fn get(&self, key: &str) -> Option<f64> {
        self.hyperparameters.get(key).copied()
    }

    pub fn build(&self) -> Result<Algorithm, RunError> {
        let bad = |message: String| RunError::Hyperparameter {
            algorithm: self.name.clone(),
            message,
        };
        let known: &[&str] = match self.name.as_str() {
            "RandomSearch" | "SobolSearch" => &[],
            "DE" | "DE_2500_chile" => &[
                "popsize",
                "mutation",
                "mutation_min",
                "mutation_max",
                "recombination",
            ],
            "NelderMead" => &["xatol", "fatol", "maxiter_per_dim"],
            "Powell" => &["xtol", "ftol"],
            "LBFGSB" => &["fd_step", "memory", "pgtol", "ftol"],
            "PSO" => &["swarm", "inertia", "c1", "c2"],
            n if n.starts_with("CMA_") => &["sigma0"],
            other => return Err(RunError::UnknownAlgorithm(other.to_string())),
        };
        if let Some(k) = self
            .hyperparameters
            .keys()
            .find(|k| !known.contains(&k.as_str()))
        {
            return Err(bad(format!("unknown hyperparameter `{k}`")));
        }
        Ok(match self.name.as_str() {
            "RandomSearch" => Algorithm::RandomSearch,
            "SobolSearch" => Algorithm::SobolSearch,
            "DE" | "DE_2500_chile" => {
                let popsize = self.get("popsize").unwrap_or(15.0);
                if popsize < 4.0 || popsize.fract() != 0.0 {
                    return Err(bad(format!(
                        "popsize must be an integer >= 4, got {popsize}"
                    )));
                }
                let mutation = match (
                    self.get("mutation"),
                    self.get("mutation_min"),
                    self.get("mutation_max"),
                ) {
                    (Some(f), None, None) => Mutation::Constant(f),
                    (None, Some(lo), Some(hi)) if lo <= hi => Mutation::Dither(lo, hi),
                    (None, None, None) => Mutation::Dither(0.5, 1.0),
                    _ => {
                        return Err(bad(
                            "give either mutation or mutation_min/mutation_max".into()
                        ))
                    }
                };
                let recombination = self.get("recombination").unwrap_or(0.7);
                if !(0.0..=1.0).contains(&recombination) {
                    return Err(bad("recombination must lie in [0, 1]".into()));
                }
                Algorithm::De(DeParams {
                    popsize: popsize as usize,
                    mutation,
                    recombination,
                })
            }
            "NelderMead" => {
                let d = NelderMeadParams::default();
                Algorithm::NelderMead(NelderMeadParams {
                    xatol: self.get("xatol").unwrap_or(d.xatol),
                    fatol: self.get("fatol").unwrap_or(d.fatol),
                    maxiter_per_dim: self
                        .get("maxiter_per_dim")
                        .map_or(d.maxiter_per_dim, |v| v as usize),
                })
            }
            "Powell" => {
                let d = PowellParams::default();
                Algorithm::Powell(PowellParams {
                    xtol: self.get("xtol").unwrap_or(d.xtol),
                    ftol: self.get("ftol").unwrap_or(d.ftol),
                })
            }
            "LBFGSB" => {
                let d = LbfgsbParams::default();
                let fd_step = self.get("fd_step").unwrap_or(d.fd_step);
                if fd_step <= 0.0 {
                    return Err(bad("fd_step must be positive".into()));
                }
                Algorithm::Lbfgsb(LbfgsbParams {
                    fd_step,
                    memory: self.get("memory").map_or(d.memory, |v| v as usize),
                    pgtol: self.get("pgtol").unwrap_or(d.pgtol),
                    ftol: self.get("ftol").unwrap_or(d.ftol),
                })
            }
            "PSO" => {
                let d = PsoParams::default();
                let swarm = self.get("swarm").map_or(d.swarm, |v| v as usize);
                if swarm < 1 {
                    return Err(bad("swarm must be positive".into()));
                }
                Algorithm::Pso(PsoParams {
                    swarm,
                    inertia: self.get("inertia").unwrap_or(d.inertia),
                    c1: self.get("c1").unwrap_or(d.c1),
                    c2: self.get("c2").unwrap_or(d.c2),
                })
            }
            name => {
                let digits = &name[4..];
                let modules = CmaModules::from_digits(digits)
                    .ok_or_else(|| RunError::UnknownAlgorithm(name.to_string()))?;
                let sigma0 = self.get("sigma0").unwrap_or(CmaParams::default().sigma0);
                if sigma0 <= 0.0 {
                    return Err(bad("sigma0 must be positive".into()));
                }
                Algorithm::Cma(CmaParams { modules, sigma0 })
            }
        })
    }
}

/// The fixed 13-member portfolio in canonical order.
pub fn portfolio() -> Vec<AlgorithmSpec> {
    PORTFOLIO_NAMES
        .iter()
        .map(|n| AlgorithmSpec::named(n))
        .collect()
}

/// Position of `name` in the portfolio, used for tie-breaking.
pub fn portfolio_index(name: &str) -> Option<usize> {
    PORTFOLIO_NAMES.iter().position(|n| *n == name)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Algorithm {
    RandomSearch,
    SobolSearch,
    De(DeParams),
    NelderMead(NelderMeadParams),
    Powell(PowellParams),
    Lbfgsb(LbfgsbParams),
    Pso(PsoParams),
    Cma(CmaParams),
}

impl Algorithm {
    /// Minimize until the counter's budget is spent. Returns the counter's
    /// refusal (or an objective failure) as the terminating error.
    pub fn minimize(&self, counter: &EvaluationCounter<'_>, seed: u64) -> EvalError {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let result = match self {
            Algorithm::RandomSearch => sampling::random_search(counter, &mut rng),
            Algorithm::SobolSearch => sampling::sobol_search(counter, seed),
            Algorithm::De(p) => de::minimize(counter, &mut rng, p),
            Algorithm::NelderMead(p) => nelder_mead::minimize(counter, &mut rng, p),
            Algorithm::Powell(p) => powell::minimize(counter, &mut rng, p),
            Algorithm::Lbfgsb(p) => lbfgsb::minimize(counter, &mut rng, p),
            Algorithm::Pso(p) => pso::minimize(counter, &mut rng, p),
            Algorithm::Cma(p) => cmaes::minimize(counter, &mut rng, p, None),
        };
        match result {
            Ok(never) => match never {},
            Err(e) => e,
        }
    }
}

/// Uninhabited: the algorithms only ever return through an error.
pub enum Never {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RunStatus {
    Completed,
    Aborted(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub algorithm: String,
    pub instance: String,
    pub seed: u64,
    pub trajectory: RunTrajectory,
    pub final_best: f64,
    pub best_point: Option<Vec<f64>>,
    pub evaluations_used: u64,
    pub status: RunStatus,
}

/// Run one algorithm on `objective` for `budget` evaluations, logging every improvement.
pub fn run(
    spec: &AlgorithmSpec,
    objective: &dyn Objective,
    instance: &str,
    budget: u64,
    seed: u64,
) -> Result<RunResult, RunError> {
    if budget == 0 {
        return Err(RunError::ZeroBudget);
    }
    let algorithm = spec.build()?;
    let counter = EvaluationCounter::new(objective, Some(budget));
    let status = match algorithm.minimize(&counter, seed) {
        EvalError::BudgetExhausted { .. } => RunStatus::Completed,
        EvalError::NonFinite { value, evaluation } => RunStatus::Aborted(format!(
            "non-finite fitness {value} at evaluation {evaluation}"
        )),
        other => return Err(RunError::Objective(other)),
    };
    let header = RunHeader {
        algorithm: spec.name.clone(),
        instance: instance.to_string(),
        seed,
        budget,
        dimension: objective.dimension(),
    };
    let trajectory = RunTrajectory::new(header, &counter.improvements());
    let best = counter.best();
    Ok(RunResult {
        algorithm: spec.name.clone(),
        instance: instance.to_string(),
        seed,
        final_best: trajectory.final_best(),
        best_point: best.map(|(_, x)| x),
        evaluations_used: counter.count(),
        trajectory,
        status,
    })
}

pub(crate) type Step<T = ()> = Result<T, EvalError>;

pub(crate) fn clamp_unit(x: &mut [f64]) {
    for v in x.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
}

pub(crate) fn uniform_point(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random::<f64>()).collect()
}

/// Evaluate after clamping to the unit box; returns the clamped point's value.
pub(crate) fn eval_clamped(counter: &EvaluationCounter<'_>, x: &mut [f64]) -> Step<f64> {
    clamp_unit(x);
    counter.evaluate(x)
}

#[cfg(test)]
pub(crate) mod test_functions {
    pub fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| (v - 0.5) * (v - 0.5)).sum()
    }

    /// Separable, many local minima on every axis.
    pub fn rastrigin_unit(x: &[f64]) -> f64 {
        x.iter()
            .map(|v| {
                let z = 10.24 * (v - 0.5) - 0.3;
                z * z - 10.0 * (2.0 * std::f64::consts::PI * z).cos() + 10.0
            })
            .sum()
    }
}
