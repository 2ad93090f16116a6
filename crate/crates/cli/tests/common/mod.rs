//! Shared oracle machinery for the acceptance suite: random hybrid problem
//! generation from a GP prior and a rejection sampler for the exact
//! step-constrained posterior.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::Distribution;

use crashbo::gpcr::{GpcrHyper, HybridDataset};
use crashbo::kernel::{self, KernelHyper};

/// A generated test problem: hybrid data whose labels come from a latent GP
/// draw thresholded at zero, plus the hyperparameters that generated it.
pub struct GeneratedProblem {
    pub dataset: HybridDataset,
    pub hyper: GpcrHyper,
}

/// Draws `n` points in `dim` dimensions, samples a latent constraint from
/// the kernel prior, labels each point by the sign against threshold zero,
/// and attaches noisy values to the safe ones. Kernel hyperparameters come
/// from the same hyperpriors the optimizer itself uses, and inputs are kept
/// at least 1.8 lengthscales apart: they stand for distinct experiments, and
/// near-duplicate step constraints drive any moment-matching approximation
/// of this posterior family outside its accuracy regime regardless of
/// implementation.
pub fn generate_problem(n: usize, dim: usize, noise_sd: f64, rng: &mut ChaCha12Rng) -> GeneratedProblem {
    loop {
        let lengthscale: f64 = rand_distr::Beta::new(1.5, 15.0).unwrap().sample(rng);
        let lengthscale = lengthscale.max(0.02);
        let scale: f64 = rand_distr::Gamma::new(2.0, 1.0).unwrap().sample(rng);
        let scale = scale.clamp(0.2, 6.0);
        let kernel = KernelHyper::isotropic(dim, lengthscale, scale).unwrap();
        let Some(points) = separated_points(n, dim, 1.8 * lengthscale, rng) else {
            continue; // lengthscale too long to separate n points; redraw
        };
        let gram = kernel::gram(&points, &kernel, 1e-10).unwrap();
        let chol = Cholesky::new(gram).expect("jittered Gram factorizes");
        let z = DVector::from_fn(n, |_, _| rand_distr::StandardNormal.sample(rng));
        let latent = chol.l() * z;

        let mut dataset = HybridDataset::default();
        for (i, x) in points.into_iter().enumerate() {
            if latent[i] <= 0.0 {
                let eps: f64 = rand_distr::StandardNormal.sample(rng);
                dataset.push_safe(x, latent[i] + noise_sd * eps).unwrap();
            } else {
                dataset.push_fail(x).unwrap();
            }
        }
        // The threshold prior support requires y_max < 0 here; noise can
        // push a safe observation above the true threshold, in which case
        // the draw is retried.
        if dataset.y_max().is_some_and(|y| y >= 0.0) {
            continue;
        }
        let hyper = GpcrHyper {
            kernel,
            noise_variance: noise_sd * noise_sd,
            threshold: 0.0,
        };
        return GeneratedProblem { dataset, hyper };
    }
}

/// Up to `n` uniform points with pairwise Euclidean distance at least
/// `min_dist`, or `None` when 200 consecutive rejections suggest the spacing
/// is infeasible.
fn separated_points(
    n: usize,
    dim: usize,
    min_dist: f64,
    rng: &mut ChaCha12Rng,
) -> Option<Vec<Vec<f64>>> {
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut rejections = 0;
    while points.len() < n {
        let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        let ok = points.iter().all(|p| {
            let d2: f64 = p.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
            d2.sqrt() >= min_dist
        });
        if ok {
            points.push(x);
            rejections = 0;
        } else {
            rejections += 1;
            if rejections > 200 {
                return None;
            }
        }
    }
    Some(points)
}

/// Moment estimates from accepted samples with their Monte-Carlo standard
/// errors: `(mean, se_mean, var, se_var)` per coordinate.
pub struct RejectionMoments {
    pub mean: Vec<f64>,
    pub se_mean: Vec<f64>,
    pub var: Vec<f64>,
    pub se_var: Vec<f64>,
    pub accepted: usize,
}

/// Samples the exact posterior by drawing from the tilted Gaussian
/// `N(mean, cov)` and accepting draws that satisfy every step factor:
/// safe coordinates at or below the threshold, failed ones at or above it.
/// Returns `None` if `max_proposals` runs out first.
pub fn rejection_moments(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    n_safe: usize,
    threshold: f64,
    target_accepted: usize,
    max_proposals: usize,
    rng: &mut ChaCha12Rng,
) -> Option<RejectionMoments> {
    let n = mean.len();
    let chol = Cholesky::new(cov.clone()).expect("tilted covariance factorizes");
    let mut samples: Vec<DVector<f64>> = Vec::with_capacity(target_accepted);
    let mut proposals = 0usize;
    while samples.len() < target_accepted {
        proposals += 1;
        if proposals > max_proposals {
            return None;
        }
        let z = DVector::from_fn(n, |_, _| rand_distr::StandardNormal.sample(rng));
        let g = mean + chol.l() * z;
        let ok = (0..n).all(|i| {
            if i < n_safe {
                g[i] <= threshold
            } else {
                g[i] >= threshold
            }
        });
        if ok {
            samples.push(g);
        }
    }

    let m = samples.len() as f64;
    let mut out = RejectionMoments {
        mean: vec![0.0; n],
        se_mean: vec![0.0; n],
        var: vec![0.0; n],
        se_var: vec![0.0; n],
        accepted: samples.len(),
    };
    for i in 0..n {
        let mean_i = samples.iter().map(|s| s[i]).sum::<f64>() / m;
        let var_i = samples.iter().map(|s| (s[i] - mean_i).powi(2)).sum::<f64>() / (m - 1.0);
        let m4 = samples.iter().map(|s| (s[i] - mean_i).powi(4)).sum::<f64>() / m;
        out.mean[i] = mean_i;
        out.var[i] = var_i;
        out.se_mean[i] = (var_i / m).sqrt();
        out.se_var[i] = ((m4 - var_i * var_i).max(0.0) / m).sqrt();
    }
    Some(out)
}
