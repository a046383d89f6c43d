//! Mean functions for the independence model and the conditional
//! Poisson autoregressions.
//!
//! Every function here is pure. Boundary values such as `alpha = 0` or
//! `beta = 0` are accepted so that reductions between the models can be
//! checked directly; fitting never produces them.
//!
//! Lagged counts are taken as given. Callers that feed realized counts
//! apply [`floor_lag`] first so that a zero never enters a conditional
//! mean.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Ar2Params, IndepParams, UnifiedParams};
use crate::series::Window;

/// Default replacement for a zero lagged count.
pub const DEFAULT_ZERO_FLOOR: f64 = 0.5;

/// Fitted or theoretical mean at each offset of a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanCurve {
    pub offsets: Vec<i64>,
    pub means: Vec<f64>,
}

/// `(alpha * k + 1)^(-beta)`, the shape of the decay at distance `k`.
#[inline]
pub(crate) fn decay(alpha: f64, beta: f64, k: f64) -> f64 {
    (-beta * (alpha * k).ln_1p()).exp()
}

/// Lagged regressor after the zero-count floor.
#[inline]
pub fn floor_lag(count: f64, floor: f64) -> f64 {
    count.max(floor)
}

/// `gamma / (alpha |t - t0| + 1)^beta`.
pub fn power_decay_mean(params: &IndepParams, t_offset: i64) -> f64 {
    params.gamma * decay(params.alpha, params.beta, t_offset.unsigned_abs() as f64)
}

/// `(((m - lag) alpha + 1) / (m alpha + 1))^beta`.
pub fn ar_decay_factor(alpha: f64, beta: f64, m: usize, lag: usize) -> Result<f64> {
    if m < lag || lag == 0 {
        return Err(Error::LagExceedsIndex { m, lag });
    }
    Ok(lag_factor(alpha, beta, m, lag))
}

#[inline]
pub(crate) fn lag_factor(alpha: f64, beta: f64, m: usize, lag: usize) -> f64 {
    let num = (m - lag) as f64 * alpha + 1.0;
    let den = m as f64 * alpha + 1.0;
    (num / den).powf(beta)
}

/// Mean of `y_{t0+1}` given `y_{t0}`: `y_t0 / (alpha + 1)^beta`.
pub fn ar1_first_step_mean(alpha: f64, beta: f64, y_t0: f64) -> f64 {
    y_t0 * decay(alpha, beta, 1.0)
}

/// Mean of `y_{t0+m}` under the AR(2) specification, `m >= 2`.
pub fn ar2_conditional_mean(params: &Ar2Params, y_prev1: f64, y_prev2: f64, m: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::LagExceedsIndex { m, lag: 2 });
    }
    Ok(ar2_mean_unchecked(params, y_prev1, y_prev2, m))
}

#[inline]
pub(crate) fn ar2_mean_unchecked(params: &Ar2Params, y_prev1: f64, y_prev2: f64, m: usize) -> f64 {
    let Ar2Params { alpha, beta, s } = *params;
    let lag1 = if s != 0.0 {
        s * y_prev1 * lag_factor(alpha, beta, m, 1)
    } else {
        0.0
    };
    let lag2 = if s != 1.0 {
        (1.0 - s) * y_prev2 * lag_factor(alpha, beta, m, 2)
    } else {
        0.0
    };
    lag1 + lag2
}

/// `base^exponent`, refusing a zero base under a fractional exponent.
#[inline]
fn geometric_power(base: f64, exponent: f64) -> Result<f64> {
    if base == 0.0 && exponent > 0.0 && exponent < 1.0 {
        return Err(Error::ZeroBaseFractionalPower { exponent });
    }
    Ok(if exponent == 0.0 {
        1.0
    } else if exponent == 1.0 {
        base
    } else {
        base.powf(exponent)
    })
}

/// Mean of `y_{t0+m}` under the unifying model, `m >= 2`.
///
/// Each lag term is a geometric mixture of the independence-shaped value
/// anchored at `y_t0` and the realized lagged count, carried forward by
/// the same decay factor as the AR(2) model.
pub fn unified_conditional_mean(
    params: &UnifiedParams,
    y_t0: f64,
    y_prev1: f64,
    y_prev2: f64,
    m: usize,
) -> Result<f64> {
    if m < 2 {
        return Err(Error::LagExceedsIndex { m, lag: 2 });
    }
    let UnifiedParams { alpha, beta, w, u, v } = *params;
    let mut mean = 0.0;
    if w != 0.0 {
        let anchor = y_t0 * decay(alpha, beta, (m - 1) as f64);
        let mix = geometric_power(anchor, u)? * geometric_power(y_prev1, 1.0 - u)?;
        mean += w * mix * lag_factor(alpha, beta, m, 1);
    }
    if w != 1.0 {
        let anchor = y_t0 * decay(alpha, beta, (m - 2) as f64);
        let mix = geometric_power(anchor, v)? * geometric_power(y_prev2, 1.0 - v)?;
        mean += (1.0 - w) * mix * lag_factor(alpha, beta, m, 2);
    }
    Ok(mean)
}

/// Independence-model mean at every offset of `window`.
pub fn fitted_curve_independence(params: &IndepParams, window: Window) -> MeanCurve {
    let offsets: Vec<i64> = window.offsets().collect();
    let means = offsets.iter().map(|&t| power_decay_mean(params, t)).collect();
    MeanCurve { offsets, means }
}
