//! Weibull sleep timers and hazard-driven probe-rate adaptation.
//!
//! A sleeping node draws its next wake-up from a Weibull law whose scale is the
//! inverse of its probe rate. Before each sleep round the probe rate is replaced
//! by the Weibull hazard evaluated at the network's age, so reserve nodes wake
//! more and more often as the deployment ages.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum SchedError {
    #[error("Weibull scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("Weibull shape must be positive and finite, got {0}")]
    InvalidShape(f64),
    #[error("probe rate must be positive and finite, got {0}")]
    InvalidRate(f64),
    #[error("uniform variate must lie in the open interval (0, 1), got {0}")]
    UniformOutOfRange(f64),
    #[error("elapsed time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("invalid clamp bounds: [{0}, {1}]")]
    InvalidBounds(f64, f64),
}

/// Weibull law with scale `alpha` (seconds, the inverse of the probe rate) and
/// dimensionless shape `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullParams<T> {
    alpha: T,
    beta: T,
}

impl<T: Scalar> WeibullParams<T> {
    pub fn new(alpha: T, beta: T) -> Result<Self, SchedError> {
        if !(alpha > T::zero()) || !alpha.is_finite() {
            return Err(SchedError::InvalidScale(alpha.to_f64_lossy()));
        }
        if !(beta > T::zero()) || !beta.is_finite() {
            return Err(SchedError::InvalidShape(beta.to_f64_lossy()));
        }
        Ok(Self { alpha, beta })
    }

    /// Scale taken as the inverse of a probe rate.
    pub fn from_rate(rate: ProbeRate<T>, beta: T) -> Result<Self, SchedError> {
        Self::new(rate.value().recip(), beta)
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    /// `F(t) = 1 - exp(-(t/alpha)^beta)`.
    pub fn cdf(&self, t: T) -> T {
        if t <= T::zero() {
            return T::zero();
        }
        T::one() - self.survival(t)
    }

    pub fn survival(&self, t: T) -> T {
        if t <= T::zero() {
            return T::one();
        }
        (-(t / self.alpha).powf(self.beta)).exp()
    }

    /// Unclamped inverse of the survival function: the `t` with `S(t) = r`,
    /// i.e. `alpha * ln(1/r)^(1/beta)`.
    pub fn inverse_survival(&self, r: T) -> Result<T, SchedError> {
        check_uniform(r)?;
        Ok(self.alpha * (-r.ln()).powf(self.beta.recip()))
    }

    /// Mean of the law, `alpha * Gamma(1 + 1/beta)`.
    pub fn mean(&self) -> T {
        self.alpha * gamma(T::one() + self.beta.recip())
    }
}

/// Probe rate in events per second.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbeRate<T>(T);

impl<T: Scalar> ProbeRate<T> {
    pub fn new(lambda: T) -> Result<Self, SchedError> {
        if !(lambda > T::zero()) || !lambda.is_finite() {
            return Err(SchedError::InvalidRate(lambda.to_f64_lossy()));
        }
        Ok(Self(lambda))
    }

    pub fn value(self) -> T {
        self.0
    }
}

/// Bounds applied to sampled sleep times: `[min, max_factor * alpha]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SleepBounds<T> {
    pub min: T,
    pub max_factor: T,
}

impl<T: Scalar> SleepBounds<T> {
    pub fn new(min: T, max_factor: T) -> Result<Self, SchedError> {
        if !(min > T::zero()) || !(max_factor > T::zero()) || !min.is_finite() || !max_factor.is_finite() {
            return Err(SchedError::InvalidBounds(min.to_f64_lossy(), max_factor.to_f64_lossy()));
        }
        Ok(Self { min, max_factor })
    }

    /// Clamp for a law with the given scale. When `max_factor * alpha` falls
    /// below `min` the lower bound wins.
    pub fn clamp(&self, t: T, alpha: T) -> T {
        let hi = (self.max_factor * alpha).max(self.min);
        t.max(self.min).min(hi)
    }
}

impl<T: Scalar> Default for SleepBounds<T> {
    fn default() -> Self {
        Self { min: T::one(), max_factor: T::lit(10.0) }
    }
}

/// Bounds applied to updated probe rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBounds<T> {
    pub min: T,
    pub max: T,
}

impl<T: Scalar> RateBounds<T> {
    pub fn new(min: T, max: T) -> Result<Self, SchedError> {
        if !(min > T::zero()) || !(max >= min) || !max.is_finite() {
            return Err(SchedError::InvalidBounds(min.to_f64_lossy(), max.to_f64_lossy()));
        }
        Ok(Self { min, max })
    }

    pub fn clamp(&self, lambda: T) -> ProbeRate<T> {
        let v = if lambda.is_nan() || lambda <= self.min {
            self.min
        } else if lambda >= self.max {
            self.max
        } else {
            lambda
        };
        ProbeRate(v)
    }
}

impl<T: Scalar> Default for RateBounds<T> {
    fn default() -> Self {
        Self { min: T::lit(1e-4), max: T::lit(10.0) }
    }
}

fn check_uniform<T: Scalar>(r: T) -> Result<(), SchedError> {
    if r > T::zero() && r < T::one() {
        Ok(())
    } else {
        Err(SchedError::UniformOutOfRange(r.to_f64_lossy()))
    }
}

/// Sleep duration for a uniform draw `r`, clamped to `bounds`.
pub fn sample_sleep_time<T: Scalar>(
    params: &WeibullParams<T>,
    r: T,
    bounds: &SleepBounds<T>,
) -> Result<T, SchedError> {
    let raw = params.inverse_survival(r)?;
    Ok(bounds.clamp(raw, params.alpha))
}

/// Weibull hazard `h(t) = (beta/alpha) (t/alpha)^(beta-1)`.
///
/// At `t = 0` this is `0` for `beta > 1`, `1/alpha` for `beta = 1` and
/// unbounded for `beta < 1`.
pub fn hazard_rate<T: Scalar>(t: T, params: &WeibullParams<T>) -> Result<T, SchedError> {
    if t < T::zero() || t.is_nan() {
        return Err(SchedError::NegativeTime(t.to_f64_lossy()));
    }
    let WeibullParams { alpha, beta } = *params;
    if beta == T::one() {
        return Ok(alpha.recip());
    }
    Ok(beta / alpha * (t / alpha).powf(beta - T::one()))
}

/// New probe rate: the hazard at network age `t_network` of the law whose
/// scale is the inverse of the old rate, clamped to `bounds`.
pub fn update_probe_rate<T: Scalar>(
    old: ProbeRate<T>,
    t_network: T,
    beta: T,
    bounds: &RateBounds<T>,
) -> Result<ProbeRate<T>, SchedError> {
    let params = WeibullParams::from_rate(old, beta)?;
    let h = hazard_rate(t_network, &params)?;
    Ok(bounds.clamp(h))
}

/// Lanczos approximation (g = 7, n = 9), accurate to ~1e-15 for positive
/// arguments. Only used for reporting mean sleep times.
pub(crate) fn gamma<T: Scalar>(x: T) -> T {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x.to_f64_lossy();
    let g = if x < 0.5 {
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma_pos(1.0 - x, &COEF))
    } else {
        gamma_pos(x, &COEF)
    };
    T::lit(g)
}

fn gamma_pos(x: f64, coef: &[f64; 9]) -> f64 {
    let x = x - 1.0;
    let mut a = coef[0];
    let t = x + 7.5;
    for (i, c) in coef.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}
