//! Matern-5/2 covariance on the unit hypercube and jitter-escalated Gram
//! factorization.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

/// First jitter added to a Gram diagonal before factorization.
pub const DEFAULT_JITTER: f64 = 1e-8;
/// Jitter ceiling for the x10 escalation schedule.
pub const MAX_JITTER: f64 = 1e-4;

const SQRT_5: f64 = 2.236_067_977_499_79;

/// Kernel hyperparameters: one lengthscale per input dimension and the output
/// variance, so that k(x, x) equals `scale`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KernelHyper {
    lengthscales: Vec<f64>,
    scale: f64,
}

impl KernelHyper {
    pub fn new(lengthscales: Vec<f64>, scale: f64) -> Result<Self> {
        if lengthscales.is_empty() {
            return Err(Error::InvalidParameter("no lengthscales given".into()));
        }
        if lengthscales.iter().any(|l| !l.is_finite() || *l <= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lengthscales must be positive, got {lengthscales:?}"
            )));
        }
        if !scale.is_finite() || scale <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "kernel scale must be positive, got {scale}"
            )));
        }
        Ok(Self { lengthscales, scale })
    }

    /// One shared lengthscale across all `dim` inputs.
    pub fn isotropic(dim: usize, lengthscale: f64, scale: f64) -> Result<Self> {
        Self::new(vec![lengthscale; dim], scale)
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// Matern-5/2 covariance between two points, `scale * (1 + sqrt5 r + 5r^2/3) exp(-sqrt5 r)`
/// with r the lengthscale-weighted Euclidean distance.
pub fn matern52(x: &[f64], y: &[f64], hyper: &KernelHyper) -> Result<f64> {
    if x.len() != hyper.dim() || y.len() != hyper.dim() {
        return Err(Error::DimensionMismatch(format!(
            "kernel over {} dims applied to points of dims {} and {}",
            hyper.dim(),
            x.len(),
            y.len()
        )));
    }
    let mut r2 = 0.0;
    for ((a, b), l) in x.iter().zip(y).zip(&hyper.lengthscales) {
        let d = (a - b) / l;
        r2 += d * d;
    }
    let r = r2.sqrt();
    Ok(hyper.scale * (1.0 + SQRT_5 * r + 5.0 * r2 / 3.0) * (-SQRT_5 * r).exp())
}

/// Gram matrix of `points` with `jitter` added on the diagonal.
pub fn gram(points: &[Vec<f64>], hyper: &KernelHyper, jitter: f64) -> Result<DMatrix<f64>> {
    if points.is_empty() {
        return Err(Error::EmptyDataset("gram of zero points".into()));
    }
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = matern52(&points[i], &points[j], hyper)?;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    for i in 0..n {
        k[(i, i)] += jitter;
    }
    Ok(k)
}

/// Cholesky factor of the Gram matrix plus an extra diagonal `shift`
/// (measurement noise), escalating the jitter x10 from `base_jitter` up to
/// [`MAX_JITTER`] until the factorization succeeds.
///
/// Returns the factored matrix, its factor, and the jitter that was needed.
pub fn gram_cholesky(
    points: &[Vec<f64>],
    hyper: &KernelHyper,
    shift: f64,
    base_jitter: f64,
) -> Result<(DMatrix<f64>, Cholesky<f64, Dyn>, f64)> {
    let base = gram(points, hyper, 0.0)?;
    let mut jitter = base_jitter.max(f64::MIN_POSITIVE);
    loop {
        let mut k = base.clone();
        for i in 0..points.len() {
            k[(i, i)] += shift + jitter;
        }
        if let Some(chol) = Cholesky::new(k.clone()) {
            return Ok((k, chol, jitter));
        }
        jitter *= 10.0;
        if jitter > MAX_JITTER {
            return Err(Error::Conditioning(format!(
                "Gram matrix of {} points not factorizable up to jitter {MAX_JITTER:e} (scale {:e})",
                points.len(),
                hyper.scale()
            )));
        }
    }
}
