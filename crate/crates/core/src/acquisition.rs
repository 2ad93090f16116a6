//! Expected improvement, its constrained composition with the hybrid-data
//! constraint models, the probe-and-refine maximizer, and the high-confidence
//! best-guess report.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::Result;
use crate::exec;
use crate::gp::GpModel;
use crate::gpcr::GpcrModel;
use crate::math::{normal_cdf, normal_pdf, UnivariateGaussian};
use crate::optim::{halton_probes, pattern_search};

/// Everything the acquisition needs: the fitted objective model, one fitted
/// constraint model per constraint, the best constrained observation when one
/// exists, and the feasibility slack for the final report.
#[derive(Debug)]
pub struct AcquisitionContext<'a> {
    pub objective: &'a GpModel,
    pub constraints: &'a [GpcrModel],
    /// Best (lowest) objective observation among successful experiments;
    /// absent until the first success.
    pub eta_cons: Option<f64>,
    pub delta: f64,
}

/// Probe-and-refine budget of the inner maximizer.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SearchOptions {
    /// Quasi-random probes per input dimension.
    pub probes_per_dim: usize,
    /// How many top probes seed the local refinement.
    pub refine_starts: usize,
    /// Pattern-search evaluations per refinement start.
    pub refine_evals: usize,
    /// Initial pattern-search step, in domain units.
    pub refine_step: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            probes_per_dim: 2000,
            refine_starts: 10,
            refine_evals: 120,
            refine_step: 0.05,
        }
    }
}

/// Closed-form expected improvement of `pred` below the incumbent `eta`.
pub fn expected_improvement(pred: &UnivariateGaussian, eta: f64) -> f64 {
    let sd = pred.sd();
    if sd == 0.0 {
        return (eta - pred.mean).max(0.0);
    }
    let z = (eta - pred.mean) / sd;
    ((eta - pred.mean) * normal_cdf(z) + sd * normal_pdf(z)).max(0.0)
}

/// Probability that every constraint is satisfied at `x`.
pub fn constraint_satisfaction(ctx: &AcquisitionContext, x: &[f64]) -> Result<f64> {
    let mut gamma = 1.0;
    for model in ctx.constraints {
        gamma *= model.prob_success(x)?;
    }
    Ok(gamma)
}

/// Constrained expected improvement at `x`. Without any safe observation the
/// objective is ignored and the value is the satisfaction probability alone.
pub fn eic_value(ctx: &AcquisitionContext, x: &[f64]) -> Result<f64> {
    let gamma = constraint_satisfaction(ctx, x)?;
    match ctx.eta_cons {
        Some(eta) => {
            if gamma == 0.0 {
                return Ok(0.0);
            }
            let pred = ctx.objective.predict(x)?;
            Ok(expected_improvement(&pred, eta) * gamma)
        }
        None => Ok(gamma),
    }
}

fn probe_count(opts: &SearchOptions, dim: usize) -> usize {
    (opts.probes_per_dim * dim).max(1)
}

/// Indices of the `k` largest values, ties resolved toward lower indices.
fn top_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

fn argmax_with_lowest_index(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if v.total_cmp(&values[best]) == std::cmp::Ordering::Greater {
            best = i;
        }
    }
    best
}

/// Approximate maximizer of the acquisition over the unit hypercube: a
/// rotated Halton probe sweep refined by pattern search from the best probes.
/// A fully dead surface falls back to the probe with the largest satisfaction
/// probability. Deterministic given `seed`.
pub fn maximize(ctx: &AcquisitionContext, opts: &SearchOptions, seed: u64) -> Result<Vec<f64>> {
    let dim = ctx.objective.hyper().dim();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let probes = halton_probes(dim, probe_count(opts, dim), &mut rng);
    let values = exec::map_indexed(probes.len(), |i| {
        eic_value(ctx, &probes[i]).unwrap_or(f64::NEG_INFINITY)
    });

    let starts = top_indices(&values, opts.refine_starts);
    let mut best_point = probes[starts[0]].clone();
    let mut best_value = values[starts[0]];
    let refined = exec::map_indexed(starts.len(), |s| {
        let mut f = |x: &[f64]| eic_value(ctx, x).unwrap_or(f64::NEG_INFINITY);
        pattern_search(
            &mut f,
            &probes[starts[s]],
            opts.refine_step,
            1e-6,
            opts.refine_evals,
            Some((0.0, 1.0)),
        )
    });
    for r in &refined {
        if r.value > best_value {
            best_value = r.value;
            best_point = r.point.clone();
        }
    }

    if best_value <= 0.0 {
        // Dead surface: explore by satisfaction probability alone.
        let gammas = exec::map_indexed(probes.len(), |i| {
            constraint_satisfaction(ctx, &probes[i]).unwrap_or(f64::NEG_INFINITY)
        });
        return Ok(probes[argmax_with_lowest_index(&gammas)].clone());
    }
    Ok(best_point)
}

/// Final report of a run: the posterior-mean minimizer among points whose
/// satisfaction probability reaches 1 - delta.
#[derive(Debug, Clone)]
pub struct BestGuess {
    pub point: Vec<f64>,
    /// False when no probed point reached the feasibility level and the
    /// max-satisfaction fallback was returned instead.
    pub feasible: bool,
}

/// Minimizes the objective posterior mean subject to the satisfaction level,
/// by the same probe-and-refine scheme as [`maximize`]. With an empty
/// probabilistic-feasible set, returns the probe of maximal satisfaction,
/// flagged. Deterministic given `seed`.
pub fn best_guess(ctx: &AcquisitionContext, opts: &SearchOptions, seed: u64) -> Result<BestGuess> {
    let dim = ctx.objective.hyper().dim();
    let level = 1.0 - ctx.delta;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let probes = halton_probes(dim, probe_count(opts, dim), &mut rng);

    // Score = (-mean, gamma) when feasible: maximize lexicographically so
    // mean ties break toward larger satisfaction.
    let score = |x: &[f64]| -> Result<Option<(f64, f64)>> {
        let gamma = constraint_satisfaction(ctx, x)?;
        if gamma >= level {
            Ok(Some((-ctx.objective.predict(x)?.mean, gamma)))
        } else {
            Ok(None)
        }
    };

    let scored = exec::map_indexed(probes.len(), |i| score(&probes[i]).ok().flatten());
    let feasible: Vec<usize> = (0..probes.len()).filter(|i| scored[*i].is_some()).collect();

    if feasible.is_empty() {
        let gammas = exec::map_indexed(probes.len(), |i| {
            constraint_satisfaction(ctx, &probes[i]).unwrap_or(f64::NEG_INFINITY)
        });
        return Ok(BestGuess {
            point: probes[argmax_with_lowest_index(&gammas)].clone(),
            feasible: false,
        });
    }

    let mut order = feasible.clone();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (scored[a].unwrap(), scored[b].unwrap());
        sb.0.total_cmp(&sa.0)
            .then(sb.1.total_cmp(&sa.1))
            .then(a.cmp(&b))
    });
    order.truncate(opts.refine_starts);

    let mut best_point = probes[order[0]].clone();
    let mut best_score = scored[order[0]].unwrap();
    let refined = exec::map_indexed(order.len(), |s| {
        let mut f = |x: &[f64]| match score(x) {
            Ok(Some((neg_mean, _))) => neg_mean,
            _ => f64::NEG_INFINITY,
        };
        pattern_search(
            &mut f,
            &probes[order[s]],
            opts.refine_step,
            1e-6,
            opts.refine_evals,
            Some((0.0, 1.0)),
        )
    });
    for r in &refined {
        if !r.value.is_finite() {
            continue;
        }
        if let Ok(Some(s)) = score(&r.point) {
            if s > best_score {
                best_score = s;
                best_point = r.point.clone();
            }
        }
    }
    Ok(BestGuess {
        point: best_point,
        feasible: true,
    })
}
