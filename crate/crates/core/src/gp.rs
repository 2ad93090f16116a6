//! Standard GP regression for the objective, conditioned on successful
//! observations only.

use nalgebra::{Cholesky, DVector, Dyn};

use crate::error::{Error, Result};
use crate::kernel::{self, KernelHyper, DEFAULT_JITTER};
use crate::math::UnivariateGaussian;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Inputs in the unit hypercube paired with noisy objective observations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GpDataset {
    inputs: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl GpDataset {
    pub fn new(inputs: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if inputs.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} inputs vs {} values",
                inputs.len(),
                values.len()
            )));
        }
        let mut ds = Self::default();
        for (x, y) in inputs.into_iter().zip(values) {
            ds.push(x, y)?;
        }
        Ok(ds)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) -> Result<()> {
        check_unit_cube(&x)?;
        if let Some(first) = self.inputs.first() {
            if first.len() != x.len() {
                return Err(Error::DimensionMismatch(format!(
                    "point of dim {} added to dataset of dim {}",
                    x.len(),
                    first.len()
                )));
            }
        }
        if !y.is_finite() {
            return Err(Error::InvalidParameter(format!("non-finite observation {y}")));
        }
        self.inputs.push(x);
        self.values.push(y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub(crate) fn check_unit_cube(x: &[f64]) -> Result<()> {
    if x.iter().any(|v| !v.is_finite() || *v < -1e-9 || *v > 1.0 + 1e-9) {
        return Err(Error::InvalidParameter(format!(
            "point {x:?} outside the unit hypercube"
        )));
    }
    Ok(())
}

/// A fitted GP regressor. Immutable after `fit`; O(n) mean and O(n^2)
/// variance per prediction.
#[derive(Debug, Clone)]
pub struct GpModel {
    dataset: GpDataset,
    hyper: KernelHyper,
    noise_variance: f64,
    factor: Option<Factor>,
}

#[derive(Debug, Clone)]
struct Factor {
    chol: Cholesky<f64, Dyn>,
    /// (K + sigma^2 I)^-1 y
    alpha: DVector<f64>,
    jitter: f64,
}

impl GpModel {
    pub fn fit(dataset: GpDataset, hyper: KernelHyper, noise_variance: f64) -> Result<Self> {
        Self::fit_with_jitter(dataset, hyper, noise_variance, DEFAULT_JITTER)
    }

    pub fn fit_with_jitter(
        dataset: GpDataset,
        hyper: KernelHyper,
        noise_variance: f64,
        base_jitter: f64,
    ) -> Result<Self> {
        if !noise_variance.is_finite() || noise_variance <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "noise variance must be positive, got {noise_variance}"
            )));
        }
        if let Some(first) = dataset.inputs().first() {
            if first.len() != hyper.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "dataset dim {} vs kernel dim {}",
                    first.len(),
                    hyper.dim()
                )));
            }
        }
        let factor = if dataset.is_empty() {
            None
        } else {
            let (_, chol, jitter) =
                kernel::gram_cholesky(dataset.inputs(), &hyper, noise_variance, base_jitter)
                    .map_err(|e| {
                        Error::Conditioning(format!(
                            "objective GP fit on {} points failed: {e}",
                            dataset.len()
                        ))
                    })?;
            let y = DVector::from_column_slice(dataset.values());
            let alpha = chol.solve(&y);
            Some(Factor { chol, alpha, jitter })
        };
        Ok(Self {
            dataset,
            hyper,
            noise_variance,
            factor,
        })
    }

    pub fn dataset(&self) -> &GpDataset {
        &self.dataset
    }

    pub fn hyper(&self) -> &KernelHyper {
        &self.hyper
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    fn cross_covariance(&self, x: &[f64]) -> Result<DVector<f64>> {
        let mut k = DVector::zeros(self.dataset.len());
        for (i, xi) in self.dataset.inputs().iter().enumerate() {
            k[i] = kernel::matern52(xi, x, &self.hyper)?;
        }
        Ok(k)
    }

    /// Posterior predictive at `x`; the prior N(0, scale) when no data.
    pub fn predict(&self, x: &[f64]) -> Result<UnivariateGaussian> {
        let prior_var = self.hyper.scale();
        let Some(factor) = &self.factor else {
            return UnivariateGaussian::new(0.0, prior_var);
        };
        let k = self.cross_covariance(x)?;
        let mean = k.dot(&factor.alpha);
        let variance = (prior_var - k.dot(&factor.chol.solve(&k))).max(0.0);
        UnivariateGaussian::new(mean, variance)
    }

    /// Gaussian evidence of the observations under the fitted kernel.
    pub fn log_marginal_likelihood(&self) -> Result<f64> {
        let factor = self.factor.as_ref().ok_or_else(|| {
            Error::EmptyDataset("log marginal likelihood needs observations".into())
        })?;
        let n = self.dataset.len() as f64;
        let y = DVector::from_column_slice(self.dataset.values());
        let quad = y.dot(&factor.alpha);
        let log_det: f64 = factor.chol.l().diagonal().iter().map(|d: &f64| d.ln()).sum::<f64>() * 2.0;
        Ok(-0.5 * (quad + log_det + n * LN_2PI))
    }

    pub fn jitter_used(&self) -> Option<f64> {
        self.factor.as_ref().map(|f| f.jitter)
    }
}
