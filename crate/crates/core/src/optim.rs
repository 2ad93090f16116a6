//! Derivative-free search primitives: compass pattern search and rotated
//! Halton probe sequences. Used by both the hyperparameter MAP fits and the
//! acquisition maximizer.

use rand::Rng;

/// Outcome of a pattern-search run.
#[derive(Debug, Clone)]
pub struct SearchResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Maximizes `f` by compass search from `start`: probe +-step along each
/// coordinate, move to the first improvement, halve the step on a full failed
/// round. Stops when `budget` evaluations are spent or the step drops under
/// `min_step`. When `bounds` is set, iterates are clamped to [lo, hi] per
/// coordinate. Deterministic.
pub fn pattern_search(
    f: &mut dyn FnMut(&[f64]) -> f64,
    start: &[f64],
    initial_step: f64,
    min_step: f64,
    budget: usize,
    bounds: Option<(f64, f64)>,
) -> SearchResult {
    let clamp = |x: &mut Vec<f64>| {
        if let Some((lo, hi)) = bounds {
            for v in x.iter_mut() {
                *v = v.clamp(lo, hi);
            }
        }
    };
    let mut best = start.to_vec();
    clamp(&mut best);
    let mut best_value = f(&best);
    let mut evals = 1;
    let mut step = initial_step;

    while evals < budget && step >= min_step {
        let mut improved = false;
        'coords: for d in 0..best.len() {
            for sign in [1.0, -1.0] {
                if evals >= budget {
                    break 'coords;
                }
                let mut candidate = best.clone();
                candidate[d] += sign * step;
                clamp(&mut candidate);
                if candidate == best {
                    continue;
                }
                let value = f(&candidate);
                evals += 1;
                if value > best_value {
                    best = candidate;
                    best_value = value;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }

    SearchResult {
        point: best,
        value: best_value,
        evaluations: evals,
    }
}

const PRIMES: [u64; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];

/// van der Corput radical inverse of `index` in the given base.
fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut result = 0.0;
    while index > 0 {
        result += (index % base) as f64 * inv;
        index /= base;
        inv /= base as f64;
    }
    result
}

/// `count` low-discrepancy probes in [0,1)^dim: a Halton sequence under a
/// seeded random shift (Cranley-Patterson rotation), so distinct seeds give
/// distinct but individually deterministic probe sets.
pub fn halton_probes(dim: usize, count: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    assert!(dim <= PRIMES.len(), "probe generator supports up to {} dims", PRIMES.len());
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    (0..count)
        .map(|i| {
            (0..dim)
                .map(|d| {
                    let u = radical_inverse(i as u64 + 1, PRIMES[d]) + shift[d];
                    u - u.floor()
                })
                .collect()
        })
        .collect()
}
