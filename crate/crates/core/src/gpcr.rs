//! Single-output GP over a constraint observed through hybrid data: real
//! values where the experiment succeeded, bare failure labels where it
//! crashed.
//!
//! The likelihood couples a Gaussian factor per successful observation with a
//! step factor per point: success mass lives at g <= c, failure mass at
//! g >= c. Folding the Gaussian factors into the prior leaves an unnormalized
//! Gaussian tilt times the step factors; that product is approximated by a
//! full-covariance Gaussian fitted with expectation propagation, one
//! univariate truncated-moment match per step factor.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::gp::check_unit_cube;
use crate::kernel::{self, KernelHyper, DEFAULT_JITTER};
use crate::math::{
    log_normal_cdf, truncated_moments, TruncationSide, UnivariateGaussian,
};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Diagonal hygiene added to the tilted covariance after the Schur update.
const TILT_JITTER: f64 = 1e-10;
/// Cavity precisions at or below this are treated as degenerate.
const MIN_CAVITY_PRECISION: f64 = 1e-12;

/// Safe inputs with real constraint observations plus failed inputs carrying
/// only their label. Site ordering everywhere is safe block first, then the
/// failure block.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HybridDataset {
    safe_inputs: Vec<Vec<f64>>,
    safe_values: Vec<f64>,
    fail_inputs: Vec<Vec<f64>>,
}

impl HybridDataset {
    pub fn new(
        safe_inputs: Vec<Vec<f64>>,
        safe_values: Vec<f64>,
        fail_inputs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if safe_inputs.len() != safe_values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} safe inputs vs {} safe values",
                safe_inputs.len(),
                safe_values.len()
            )));
        }
        let mut ds = Self::default();
        for (x, y) in safe_inputs.into_iter().zip(safe_values) {
            ds.push_safe(x, y)?;
        }
        for x in fail_inputs {
            ds.push_fail(x)?;
        }
        Ok(ds)
    }

    pub fn push_safe(&mut self, x: Vec<f64>, y: f64) -> Result<()> {
        self.check_point(&x)?;
        if !y.is_finite() {
            return Err(Error::InvalidParameter(format!("non-finite observation {y}")));
        }
        self.safe_inputs.push(x);
        self.safe_values.push(y);
        Ok(())
    }

    pub fn push_fail(&mut self, x: Vec<f64>) -> Result<()> {
        self.check_point(&x)?;
        self.fail_inputs.push(x);
        Ok(())
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        check_unit_cube(x)?;
        if let Some(d) = self.dim() {
            if d != x.len() {
                return Err(Error::DimensionMismatch(format!(
                    "point of dim {} added to dataset of dim {d}",
                    x.len()
                )));
            }
        }
        Ok(())
    }

    pub fn n_safe(&self) -> usize {
        self.safe_inputs.len()
    }

    pub fn n_fail(&self) -> usize {
        self.fail_inputs.len()
    }

    pub fn len(&self) -> usize {
        self.n_safe() + self.n_fail()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> Option<usize> {
        self.safe_inputs
            .first()
            .or_else(|| self.fail_inputs.first())
            .map(Vec::len)
    }

    pub fn safe_inputs(&self) -> &[Vec<f64>] {
        &self.safe_inputs
    }

    pub fn safe_values(&self) -> &[f64] {
        &self.safe_values
    }

    pub fn fail_inputs(&self) -> &[Vec<f64>] {
        &self.fail_inputs
    }

    /// Largest safe observation, the lower support edge for the threshold.
    pub fn y_max(&self) -> Option<f64> {
        self.safe_values.iter().cloned().fold(None, |acc, v| {
            Some(acc.map_or(v, |a: f64| a.max(v)))
        })
    }

    /// All inputs in canonical site order (safe block, then failures).
    pub fn ordered_inputs(&self) -> Vec<Vec<f64>> {
        let mut out = self.safe_inputs.clone();
        out.extend(self.fail_inputs.iter().cloned());
        out
    }
}

/// Hyperparameters of the constraint model: kernel, fixed observation noise
/// variance, and the success/failure threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct GpcrHyper {
    pub kernel: KernelHyper,
    pub noise_variance: f64,
    pub threshold: f64,
}

/// Knobs of the expectation-propagation loop.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct EpOptions {
    pub max_sweeps: usize,
    /// Weight of the freshly matched site parameters in each update.
    pub damping: f64,
    /// Convergence threshold on the largest scale-relative change of the
    /// site natural parameters within a sweep.
    pub tolerance: f64,
    /// Lower bound on matched site variances.
    pub site_variance_floor: f64,
}

impl Default for EpOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 50,
            damping: 0.8,
            tolerance: 1e-6,
            site_variance_floor: 1e-10,
        }
    }
}

/// Per-site natural parameters (precision and precision-weighted mean), one
/// pair per step factor in canonical site order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SiteParams {
    pub precisions: Vec<f64>,
    pub shifts: Vec<f64>,
}

impl SiteParams {
    pub fn zeros(n: usize) -> Self {
        Self {
            precisions: vec![0.0; n],
            shifts: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.precisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.precisions.is_empty()
    }
}

/// Converged (or best-effort) EP approximation of the step-constrained
/// posterior over the latent constraint values at the training inputs.
#[derive(Debug, Clone)]
pub struct EpState {
    pub sites: SiteParams,
    pub posterior_mean: DVector<f64>,
    pub posterior_cov: DMatrix<f64>,
    /// EP estimate of the log mass of the tilted Gaussian times the step
    /// factors; excludes the Gaussian-product constant.
    pub log_evidence: f64,
    pub converged: bool,
    pub sweeps_used: usize,
}

/// Folds the Gaussian observation factors of the safe block into the GP
/// prior. Returns `(mean, cov, log_scale)` such that
/// `exp(log_scale) * N(g | mean, cov)` equals the prior times the Gaussian
/// likelihood of the safe observations; failure coordinates contribute no
/// Gaussian factor.
pub fn gaussian_product(
    dataset: &HybridDataset,
    hyper: &GpcrHyper,
) -> Result<(DVector<f64>, DMatrix<f64>, f64)> {
    let tilt = compute_tilt(dataset, hyper)?;
    Ok((tilt.mean, tilt.cov, tilt.log_scale))
}

/// The tilted Gaussian of [`gaussian_product`]. It depends on the kernel and
/// the noise but not on the threshold, so threshold-only moves during the
/// hyperparameter search can reuse it.
#[derive(Debug, Clone)]
pub(crate) struct Tilt {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub log_scale: f64,
}

pub(crate) fn compute_tilt(dataset: &HybridDataset, hyper: &GpcrHyper) -> Result<Tilt> {
    let prior = kernel::gram(&dataset.ordered_inputs(), &hyper.kernel, DEFAULT_JITTER)?;
    let (mean, cov, log_scale) =
        tilted_from_gram(&prior, dataset.n_safe(), dataset.safe_values(), hyper.noise_variance)?;
    Ok(Tilt { mean, cov, log_scale })
}

fn tilted_from_gram(
    prior: &DMatrix<f64>,
    n_safe: usize,
    safe_values: &[f64],
    noise_variance: f64,
) -> Result<(DVector<f64>, DMatrix<f64>, f64)> {
    if !noise_variance.is_finite() || noise_variance <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "noise variance must be positive, got {noise_variance}"
        )));
    }
    let n = prior.nrows();
    if n_safe == 0 {
        let mut cov = prior.clone();
        for i in 0..n {
            cov[(i, i)] += TILT_JITTER;
        }
        return Ok((DVector::zeros(n), cov, 0.0));
    }

    let mut a = prior.view((0, 0), (n_safe, n_safe)).into_owned();
    for i in 0..n_safe {
        a[(i, i)] += noise_variance;
    }
    let chol_a = Cholesky::new(a).ok_or_else(|| {
        Error::Conditioning(format!("safe-block system of {n_safe} points not factorizable"))
    })?;
    let y = DVector::from_column_slice(safe_values);
    let weights = chol_a.solve(&y);
    let cross = prior.view((0, 0), (n, n_safe)).into_owned();
    let mean = &cross * &weights;
    let solved = chol_a.solve(&cross.transpose());
    let mut cov = prior - &cross * &solved;
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    for i in 0..n {
        cov[(i, i)] = cov[(i, i)].max(0.0) + TILT_JITTER;
    }
    let log_det: f64 = 2.0 * chol_a.l().diagonal().iter().map(|d: &f64| d.ln()).sum::<f64>();
    let log_scale = -0.5 * (y.dot(&weights) + log_det + n_safe as f64 * LN_2PI);
    Ok((mean, cov, log_scale))
}

/// Truncation side of site `i`: success mass sits below the threshold,
/// failure mass above it.
fn site_side(i: usize, n_safe: usize) -> TruncationSide {
    if i < n_safe {
        TruncationSide::Below
    } else {
        TruncationSide::Above
    }
}

/// Fits the EP approximation for `dataset` under `hyper`. `warm` seeds the
/// site parameters (must match the dataset's site count); `seed` drives the
/// per-sweep site visiting order.
pub fn ep_fit(
    dataset: &HybridDataset,
    hyper: &GpcrHyper,
    opts: &EpOptions,
    warm: Option<&SiteParams>,
    seed: u64,
) -> Result<EpState> {
    let (mean, cov, _) = gaussian_product(dataset, hyper)?;
    ep_core(&mean, &cov, dataset.n_safe(), hyper.threshold, opts, warm, seed)
}

/// Recomputes `(Sigma, mu)` in place from the tilted Gaussian and the current
/// sites, returning `logdet B`. Only sites with positive precision enter the
/// linear algebra, so the cost is O(k N^2 + k^3) in the number k of active
/// sites.
fn refresh_posterior(
    tilted_mean: &DVector<f64>,
    tilted_cov: &DMatrix<f64>,
    sites: &SiteParams,
    sigma: &mut DMatrix<f64>,
    mu: &mut DVector<f64>,
) -> Result<f64> {
    let n = sites.len();
    let shifts = DVector::from_column_slice(&sites.shifts);
    sigma.copy_from(tilted_cov);
    let active: Vec<usize> = (0..n).filter(|&i| sites.precisions[i] > 0.0).collect();
    let k = active.len();
    if k == 0 {
        mu.copy_from(tilted_mean);
        mu.gemv(1.0, sigma, &shifts, 1.0);
        return Ok(0.0);
    }
    let sw: Vec<f64> = active.iter().map(|&i| sites.precisions[i].sqrt()).collect();
    // B = I_k + diag(sw) SigmaTilde[A, A] diag(sw); inactive rows are identity.
    let mut b = DMatrix::identity(k, k);
    for (a, &i) in active.iter().enumerate() {
        for (c, &j) in active.iter().enumerate() {
            b[(a, c)] += sw[a] * tilted_cov[(i, j)] * sw[c];
        }
    }
    let chol_b = Cholesky::new(b)
        .ok_or_else(|| Error::Conditioning("EP site system not factorizable".into()))?;
    let log_det_b: f64 = 2.0 * chol_b.l().diagonal().iter().map(|d: &f64| d.ln()).sum::<f64>();

    // scaled = diag(sw) SigmaTilde[A, :], k x n.
    let mut scaled = DMatrix::zeros(k, n);
    for (a, &i) in active.iter().enumerate() {
        for j in 0..n {
            scaled[(a, j)] = sw[a] * tilted_cov[(i, j)];
        }
    }
    let mut solved = scaled.clone();
    chol_b.solve_mut(&mut solved);
    sigma.gemm_tr(-1.0, &scaled, &solved, 1.0);
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (sigma[(i, j)] + sigma[(j, i)]);
            sigma[(i, j)] = v;
            sigma[(j, i)] = v;
        }
    }

    // mu = sigma * shifts + (I + SigmaTilde W)^-1 tilted_mean
    let mut swm = DVector::from_fn(k, |a, _| sw[a] * tilted_mean[active[a]]);
    chol_b.solve_mut(&mut swm);
    mu.copy_from(tilted_mean);
    mu.gemv(1.0, sigma, &shifts, 1.0);
    mu.gemv_tr(-1.0, &scaled, &swm, 1.0);
    Ok(log_det_b)
}

fn ep_core(
    tilted_mean: &DVector<f64>,
    tilted_cov: &DMatrix<f64>,
    n_safe: usize,
    threshold: f64,
    opts: &EpOptions,
    warm: Option<&SiteParams>,
    seed: u64,
) -> Result<EpState> {
    let n = tilted_mean.len();
    if n == 0 {
        return Err(Error::EmptyDataset("EP over zero sites".into()));
    }
    let mut sites = match warm {
        Some(w) if w.len() == n => w.clone(),
        _ => SiteParams::zeros(n),
    };
    let mut sigma = DMatrix::zeros(n, n);
    let mut mu = DVector::zeros(n);
    let mut col = DVector::zeros(n);
    let mut log_det_b = refresh_posterior(tilted_mean, tilted_cov, &sites, &mut sigma, &mut mu)?;

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut converged = false;
    let mut sweeps = 0;

    while sweeps < opts.max_sweeps {
        order.shuffle(&mut rng);
        let mut max_delta = 0.0_f64;
        for &i in &order {
            let marg_var = sigma[(i, i)];
            if marg_var <= 0.0 {
                continue;
            }
            let cav_prec = 1.0 / marg_var - sites.precisions[i];
            if cav_prec <= MIN_CAVITY_PRECISION {
                continue; // leave this site unchanged
            }
            let cav_var = 1.0 / cav_prec;
            let cav_mean = (mu[i] / marg_var - sites.shifts[i]) * cav_var;
            let cavity = UnivariateGaussian::new(cav_mean, cav_var)?;
            let tilt = truncated_moments(&cavity, threshold, site_side(i, n_safe))?;
            let matched_var = tilt.variance.max(opts.site_variance_floor);
            let new_prec = (1.0 / matched_var - cav_prec).max(0.0);
            let new_shift = tilt.mean / matched_var - cav_mean * cav_prec;

            let d_prec = opts.damping * (new_prec - sites.precisions[i]);
            let d_shift = opts.damping * (new_shift - sites.shifts[i]);
            // Scale-relative step sizes; updates at round-off level are
            // skipped so vacuous sites cost no matrix work.
            let rel = (d_prec.abs() / (1.0 + new_prec.abs()))
                .max(d_shift.abs() / (1.0 + new_shift.abs()));
            if rel < 1e-13 {
                continue;
            }
            let denom = 1.0 + d_prec * marg_var;
            if denom <= MIN_CAVITY_PRECISION {
                continue;
            }
            sites.precisions[i] += d_prec;
            sites.shifts[i] += d_shift;
            max_delta = max_delta.max(rel);

            col.copy_from(&sigma.column(i));
            sigma.ger(-d_prec / denom, &col, &col, 1.0);
            mu.axpy((d_shift - d_prec * mu[i]) / denom, &col, 1.0);
        }
        sweeps += 1;
        // Rank-one updates are exact; the from-scratch refresh is round-off
        // hygiene, so an occasional one suffices. Converged and final states
        // are always refreshed because the evidence reads logdet B.
        let stopping = max_delta < opts.tolerance || sweeps == opts.max_sweeps;
        if stopping || sweeps % 3 == 0 {
            log_det_b = refresh_posterior(tilted_mean, tilted_cov, &sites, &mut sigma, &mut mu)?;
        }
        if max_delta < opts.tolerance {
            converged = true;
            break;
        }
    }

    let log_evidence = ep_log_evidence(
        tilted_mean, &sigma, &mu, &sites, n_safe, threshold, log_det_b,
    )?;
    Ok(EpState {
        sites,
        posterior_mean: mu,
        posterior_cov: sigma,
        log_evidence,
        converged,
        sweeps_used: sweeps,
    })
}

/// EP estimate of `log \int N(g | tilted) prod_i step_i(g_i) dg`, consistent
/// with the current sites and the refreshed posterior.
fn ep_log_evidence(
    tilted_mean: &DVector<f64>,
    sigma: &DMatrix<f64>,
    mu: &DVector<f64>,
    sites: &SiteParams,
    n_safe: usize,
    threshold: f64,
    log_det_b: f64,
) -> Result<f64> {
    let n = sites.len();
    let mut acc = -0.5 * log_det_b;
    for i in 0..n {
        let tau = sites.precisions[i];
        let nu = sites.shifts[i];
        acc += 0.5 * (nu * (mu[i] + tilted_mean[i]) - mu[i] * tau * tilted_mean[i]);

        let side = site_side(i, n_safe);
        let marg_var = sigma[(i, i)];
        let cav_prec = if marg_var > 0.0 {
            1.0 / marg_var - tau
        } else {
            0.0
        };
        if marg_var <= 0.0 || cav_prec <= MIN_CAVITY_PRECISION {
            // Degenerate cavity: count the factor mass under the marginal.
            let marginal = UnivariateGaussian::new(mu[i], marg_var.max(TILT_JITTER))?;
            acc += truncated_moments(&marginal, threshold, side)?.log_mass;
            continue;
        }
        let cav_var = 1.0 / cav_prec;
        let cav_mean = (mu[i] / marg_var - nu) * cav_var;
        let cavity = UnivariateGaussian::new(cav_mean, cav_var)?;
        let tilt = truncated_moments(&cavity, threshold, side)?;
        acc += tilt.log_mass + 0.5 * (1.0 + tau * cav_var).ln()
            - 0.5 * (mu[i] * mu[i] / marg_var - cav_mean * cav_mean * cav_prec);
    }
    Ok(acc)
}

/// EP approximation of the full log evidence of the hybrid observations,
/// including the Gaussian-product constant. Non-convergence is reported as
/// negative infinity so hyperparameter search rejects the candidate.
pub fn log_evidence(
    dataset: &HybridDataset,
    hyper: &GpcrHyper,
    opts: &EpOptions,
    warm: Option<&SiteParams>,
    seed: u64,
) -> Result<f64> {
    let (value, state) = evidence_and_state(dataset, hyper, opts, warm, seed)?;
    Ok(if state.converged { value } else { f64::NEG_INFINITY })
}

pub(crate) fn evidence_and_state(
    dataset: &HybridDataset,
    hyper: &GpcrHyper,
    opts: &EpOptions,
    warm: Option<&SiteParams>,
    seed: u64,
) -> Result<(f64, EpState)> {
    let tilt = compute_tilt(dataset, hyper)?;
    evidence_with_tilt(&tilt, dataset.n_safe(), hyper.threshold, opts, warm, seed)
}

pub(crate) fn evidence_with_tilt(
    tilt: &Tilt,
    n_safe: usize,
    threshold: f64,
    opts: &EpOptions,
    warm: Option<&SiteParams>,
    seed: u64,
) -> Result<(f64, EpState)> {
    let state = ep_core(&tilt.mean, &tilt.cov, n_safe, threshold, opts, warm, seed)?;
    Ok((state.log_evidence + tilt.log_scale, state))
}

/// Closed-form probability that the constraint is satisfied at a location
/// with predictive distribution `pred`.
pub fn success_probability(pred: &UnivariateGaussian, threshold: f64) -> f64 {
    let sd = pred.sd();
    if sd == 0.0 {
        return if pred.mean <= threshold { 1.0 } else { 0.0 };
    }
    log_normal_cdf((threshold - pred.mean) / sd).exp().clamp(0.0, 1.0)
}

/// A fitted constraint model: the tilted Gaussian, the EP state, and the
/// factorizations backing O(n^2) predictions. Immutable after `fit`.
#[derive(Debug, Clone)]
pub struct GpcrModel {
    dataset: HybridDataset,
    hyper: GpcrHyper,
    tilted_mean: DVector<f64>,
    tilted_cov: DMatrix<f64>,
    log_scale: f64,
    ep: EpState,
    ordered_inputs: Vec<Vec<f64>>,
    /// K^-1 mu_EP, for predictive means.
    weights: DVector<f64>,
    /// K^-1 - K^-1 Sigma_EP K^-1, for predictive variances.
    proj: DMatrix<f64>,
    jitter_used: f64,
}

impl GpcrModel {
    pub fn fit(
        dataset: HybridDataset,
        hyper: GpcrHyper,
        opts: &EpOptions,
        warm: Option<&SiteParams>,
        seed: u64,
    ) -> Result<Self> {
        Self::fit_with_jitter(dataset, hyper, opts, warm, seed, DEFAULT_JITTER)
    }

    pub fn fit_with_jitter(
        dataset: HybridDataset,
        hyper: GpcrHyper,
        opts: &EpOptions,
        warm: Option<&SiteParams>,
        seed: u64,
        base_jitter: f64,
    ) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset("constraint model needs observations".into()));
        }
        if let Some(y_max) = dataset.y_max() {
            if !(hyper.threshold > y_max) {
                return Err(Error::InvalidParameter(format!(
                    "threshold {} must exceed the largest safe observation {y_max}",
                    hyper.threshold
                )));
            }
        }
        if dataset.dim() != Some(hyper.kernel.dim()) {
            return Err(Error::DimensionMismatch(format!(
                "dataset dim {:?} vs kernel dim {}",
                dataset.dim(),
                hyper.kernel.dim()
            )));
        }
        let ordered = dataset.ordered_inputs();
        let (prior, chol_k, jitter_used) =
            kernel::gram_cholesky(&ordered, &hyper.kernel, 0.0, base_jitter)?;
        let (tilted_mean, tilted_cov, log_scale) =
            tilted_from_gram(&prior, dataset.n_safe(), dataset.safe_values(), hyper.noise_variance)?;
        let ep = ep_core(
            &tilted_mean,
            &tilted_cov,
            dataset.n_safe(),
            hyper.threshold,
            opts,
            warm,
            seed,
        )?;
        let weights = chol_k.solve(&ep.posterior_mean);
        let k_inv = chol_k.inverse();
        let mut proj = &k_inv - &k_inv * &ep.posterior_cov * &k_inv;
        let n = ordered.len();
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (proj[(i, j)] + proj[(j, i)]);
                proj[(i, j)] = v;
                proj[(j, i)] = v;
            }
        }
        Ok(Self {
            dataset,
            hyper,
            tilted_mean,
            tilted_cov,
            log_scale,
            ep,
            ordered_inputs: ordered,
            weights,
            proj,
            jitter_used,
        })
    }

    pub fn dataset(&self) -> &HybridDataset {
        &self.dataset
    }

    pub fn hyper(&self) -> &GpcrHyper {
        &self.hyper
    }

    pub fn threshold(&self) -> f64 {
        self.hyper.threshold
    }

    pub fn ep(&self) -> &EpState {
        &self.ep
    }

    pub fn tilted_mean(&self) -> &DVector<f64> {
        &self.tilted_mean
    }

    pub fn tilted_cov(&self) -> &DMatrix<f64> {
        &self.tilted_cov
    }

    /// Log of the Gaussian-product constant folded out of the prior.
    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    /// Full EP log evidence including the Gaussian-product constant.
    pub fn log_evidence(&self) -> f64 {
        self.ep.log_evidence + self.log_scale
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    /// Predictive distribution of the latent constraint at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<UnivariateGaussian> {
        let n = self.ordered_inputs.len();
        let mut k = DVector::zeros(n);
        for (i, xi) in self.ordered_inputs.iter().enumerate() {
            k[i] = kernel::matern52(xi, x, &self.hyper.kernel)?;
        }
        let mean = k.dot(&self.weights);
        let variance = (self.hyper.kernel.scale() - k.dot(&(&self.proj * &k))).max(0.0);
        UnivariateGaussian::new(mean, variance)
    }

    /// Probability that an experiment at `x` satisfies the constraint.
    pub fn prob_success(&self, x: &[f64]) -> Result<f64> {
        Ok(success_probability(&self.predict(x)?, self.hyper.threshold))
    }
}
