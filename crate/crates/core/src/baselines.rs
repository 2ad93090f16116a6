//! Heuristic failure-penalty baselines: plain expected improvement on an
//! unconstrained GP whose failed evaluations are filled in with a fixed high
//! cost, the initial observation's cost, or the running worst cost.

use crate::acquisition::{self, AcquisitionContext, SearchOptions};
use crate::benchmarks::HybridObservation;
use crate::error::{Error, Result};
use crate::gp::{GpDataset, GpModel};
use crate::hyperopt::{self, MapOptions, PriorSpec};

/// How failed evaluations are priced into the objective dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyStrategy {
    /// Fixed penalty, configured as an upper bound on the objective.
    HighCost { bound: f64 },
    /// The objective value of the initial evaluation; `fallback_bound`
    /// covers the degenerate run whose initial evaluation already failed.
    MiddleCost { fallback_bound: f64 },
    /// The worst successful observation so far, re-applied to all past
    /// failures every iteration; `fallback_bound` covers runs with no
    /// success yet.
    AdaptiveCost { fallback_bound: f64 },
}

impl PenaltyStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::HighCost { .. } => "hc",
            Self::MiddleCost { .. } => "mc",
            Self::AdaptiveCost { .. } => "ac",
        }
    }
}

/// Objective dataset with penalties substituted for failures.
#[derive(Debug, Clone)]
pub struct PenalizedDataset {
    pub dataset: GpDataset,
    /// True when a middle/adaptive strategy had no reference value and used
    /// its fallback bound instead.
    pub fell_back: bool,
}

/// Prices every evaluation in `evals`: successes keep their observation,
/// failures receive the strategy's penalty (recomputed from the full record,
/// so adaptive penalties re-value old failures).
pub fn penalize(
    evals: &[(Vec<f64>, HybridObservation)],
    strategy: &PenaltyStrategy,
) -> Result<PenalizedDataset> {
    if evals.is_empty() {
        return Err(Error::EmptyDataset("penalty pricing needs evaluations".into()));
    }
    let mut fell_back = false;
    let penalty = match strategy {
        PenaltyStrategy::HighCost { bound } => *bound,
        PenaltyStrategy::MiddleCost { fallback_bound } => {
            match evals[0].1.objective_value() {
                Some(v) => v,
                None => {
                    fell_back = true;
                    *fallback_bound
                }
            }
        }
        PenaltyStrategy::AdaptiveCost { fallback_bound } => {
            let worst = evals
                .iter()
                .filter_map(|(_, obs)| obs.objective_value())
                .fold(f64::NEG_INFINITY, f64::max);
            if worst.is_finite() {
                worst
            } else {
                fell_back = true;
                *fallback_bound
            }
        }
    };

    let mut dataset = GpDataset::empty();
    for (x, obs) in evals {
        dataset.push(x.clone(), obs.objective_value().unwrap_or(penalty))?;
    }
    Ok(PenalizedDataset { dataset, fell_back })
}

/// One baseline planning step: MAP-fit a standard GP on the penalized
/// dataset and maximize plain expected improvement over the unit hypercube.
pub fn baseline_step(
    evals: &[(Vec<f64>, HybridObservation)],
    strategy: &PenaltyStrategy,
    priors: &PriorSpec,
    map_opts: &MapOptions,
    search_opts: &SearchOptions,
    seed: u64,
) -> Result<Vec<f64>> {
    let model = fit_penalized(evals, strategy, priors, map_opts, seed)?;
    let eta = model
        .dataset()
        .values()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let ctx = AcquisitionContext {
        objective: &model,
        constraints: &[],
        eta_cons: Some(eta),
        delta: 0.0,
    };
    acquisition::maximize(&ctx, search_opts, seed)
}

pub(crate) fn fit_penalized(
    evals: &[(Vec<f64>, HybridObservation)],
    strategy: &PenaltyStrategy,
    priors: &PriorSpec,
    map_opts: &MapOptions,
    seed: u64,
) -> Result<GpModel> {
    let penalized = penalize(evals, strategy)?;
    let map = hyperopt::map_fit_objective(&penalized.dataset, priors, map_opts, seed);
    GpModel::fit(penalized.dataset, map.hyper, priors.noise_variance)
}
