//! Scalar Gaussian utilities shared by all models: log-space normal CDF and
//! one-sided truncated-normal moments, stable far into the tails.

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// A univariate Gaussian given by mean and (non-negative) variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnivariateGaussian {
    pub mean: f64,
    pub variance: f64,
}

impl UnivariateGaussian {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() || !variance.is_finite() || variance < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "Gaussian requires finite mean and variance >= 0, got N({mean}, {variance})"
            )));
        }
        Ok(Self { mean, variance })
    }

    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / SQRT_2)
}

/// log of the standard normal CDF, accurate over the whole real line.
///
/// The middle range goes through `erfc`; the deep lower tail uses the
/// divergent asymptotic expansion truncated at its smallest term, which keeps
/// the relative error around 1e-14 for z <= -8. The upper branch evaluates
/// log1p of the mirrored tail mass.
pub fn log_normal_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z < -7.0 {
        log_cdf_lower_tail(z)
    } else if z <= 6.0 {
        (0.5 * statrs::function::erf::erfc(-z / SQRT_2)).ln()
    } else {
        (-normal_cdf(-z)).ln_1p()
    }
}

/// log Phi(z) for z <= -7 via the tail expansion
/// Phi(z) = phi(z)/(-z) * (1 - 1/z^2 + 3/z^4 - 15/z^6 + ...).
fn log_cdf_lower_tail(z: f64) -> f64 {
    debug_assert!(z < 0.0);
    let u = 1.0 / (z * z);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        let next = term * -((2 * k - 1) as f64) * u;
        if next.abs() >= term.abs() {
            break; // smallest term of the divergent series reached
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    -0.5 * z * z - LN_SQRT_2PI - (-z).ln() + sum.ln()
}

/// Which side of the bound survives the truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruncationSide {
    /// Keep g <= bound.
    Below,
    /// Keep g >= bound.
    Above,
}

/// Zeroth, first and second moments of a one-sided truncated Gaussian.
#[derive(Debug, Clone, Copy)]
pub struct TruncatedMoments {
    /// log of the surviving probability mass.
    pub log_mass: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Moments of `cavity` truncated to one side of `bound`.
///
/// Extreme standardized margins never produce NaN: the mass is kept in log
/// space and beyond |z| = 30 the hazard ratio and the variance ratio switch
/// to their asymptotic expansions.
pub fn truncated_moments(
    cavity: &UnivariateGaussian,
    bound: f64,
    side: TruncationSide,
) -> Result<TruncatedMoments> {
    if cavity.variance <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "truncation requires positive cavity variance, got {}",
            cavity.variance
        )));
    }
    match side {
        TruncationSide::Below => Ok(truncated_below(cavity.mean, cavity.variance, bound)),
        TruncationSide::Above => {
            // Reflect: g >= bound  <=>  -g <= -bound with -g ~ N(-mean, var).
            let m = truncated_below(-cavity.mean, cavity.variance, -bound);
            Ok(TruncatedMoments {
                log_mass: m.log_mass,
                mean: -m.mean,
                variance: m.variance,
            })
        }
    }
}

fn truncated_below(mean: f64, variance: f64, bound: f64) -> TruncatedMoments {
    if bound == f64::INFINITY {
        return TruncatedMoments {
            log_mass: 0.0,
            mean,
            variance,
        };
    }
    let sd = variance.sqrt();
    let z = (bound - mean) / sd;
    let log_mass = log_normal_cdf(z);

    // hazard = phi(z)/Phi(z); ratio = Var[g|g<=b]/Var[g].
    let (hazard, ratio) = if z > -30.0 {
        let h = (-0.5 * z * z - LN_SQRT_2PI - log_mass).exp();
        (h, (1.0 - z * h - h * h).clamp(0.0, 1.0))
    } else {
        // hazard ~ -z (1 + u - 2u^2 + 10u^3 - 74u^4), u = 1/z^2
        let u = 1.0 / (z * z);
        let h = -z * (1.0 + u * (1.0 + u * (-2.0 + u * (10.0 - 74.0 * u))));
        let r = u * (1.0 + u * (-6.0 + u * (50.0 - 518.0 * u)));
        (h, r.clamp(0.0, 1.0))
    };

    TruncatedMoments {
        log_mass,
        mean: mean - sd * hazard,
        variance: variance * ratio,
    }
}
