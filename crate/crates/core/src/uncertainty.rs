//! Closed-form Fisher information and Wald confidence intervals.
//!
//! Only the independence model (3x3) and the AR(1) model (2x2) have
//! closed forms; the AR(2) and unifying models are reported without
//! standard errors.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::params::IndepParams;
use crate::series::Window;

/// Inverting above this condition number raises [`Error::SingularFisher`].
pub const MAX_CONDITION: f64 = 1e12;

/// Symmetric information matrix with named rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherMatrix {
    pub order: Vec<String>,
    pub entries: Vec<Vec<f64>>,
}

impl FisherMatrix {
    fn from_rows(order: &[&str], entries: Vec<Vec<f64>>) -> Self {
        Self {
            order: order.iter().map(|s| s.to_string()).collect(),
            entries,
        }
    }

    pub fn dim(&self) -> usize {
        self.order.len()
    }

    pub fn get(&self, row: &str, col: &str) -> Option<f64> {
        let i = self.order.iter().position(|n| n == row)?;
        let j = self.order.iter().position(|n| n == col)?;
        Some(self.entries[i][j])
    }

    fn matrix(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.entries[i][j])
    }

    /// Restriction to the named parameters, in the given order.
    pub fn submatrix(&self, names: &[&str]) -> Option<FisherMatrix> {
        let idx: Option<Vec<usize>> = names
            .iter()
            .map(|n| self.order.iter().position(|o| o == n))
            .collect();
        let idx = idx?;
        let entries = idx
            .iter()
            .map(|&i| idx.iter().map(|&j| self.entries[i][j]).collect())
            .collect();
        Some(Self::from_rows(names, entries))
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| self.entries[i][j] == self.entries[j][i]))
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.matrix()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Eigenvalues non-negative up to `1e-10 * trace`.
    pub fn is_psd(&self) -> bool {
        let trace: f64 = (0..self.dim()).map(|i| self.entries[i][i]).sum();
        let tol = 1e-10 * trace.abs();
        self.eigenvalues().iter().all(|&e| e >= -tol)
    }

    /// Ratio of extreme eigenvalues; infinite when the smallest is not positive.
    pub fn condition_number(&self) -> f64 {
        let ev = self.eigenvalues();
        let (lo, hi) = (ev[0], ev[ev.len() - 1]);
        if lo <= 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    /// Inverse, i.e. the asymptotic covariance of the estimates.
    pub fn inverse(&self) -> Result<Vec<Vec<f64>>> {
        let condition = self.condition_number();
        if !(condition <= MAX_CONDITION) {
            return Err(Error::SingularFisher { condition });
        }
        let inv = self
            .matrix()
            .lu()
            .try_inverse()
            .ok_or(Error::SingularFisher { condition })?;
        let n = self.dim();
        // Symmetrize away rounding from the elimination.
        Ok((0..n)
            .map(|i| (0..n).map(|j| 0.5 * (inv[(i, j)] + inv[(j, i)])).collect())
            .collect())
    }
}

/// Expected information of the independence model over `window`.
pub fn fisher_independence(params: &IndepParams, window: Window) -> FisherMatrix {
    let IndepParams { alpha, beta, gamma } = *params;
    let (mut aa, mut ab, mut bb, mut ag, mut bg, mut gg) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for t in window.offsets() {
        let d = t.unsigned_abs() as f64;
        let base = alpha * d + 1.0;
        let lg = (alpha * d).ln_1p();
        let p0 = (-beta * lg).exp(); // base^-beta
        let p1 = p0 / base; // base^-(beta+1)
        let p2 = p1 / base; // base^-(beta+2)
        aa += d * d * p2;
        ab += lg * d * p1;
        bb += lg * lg * p0;
        ag += d * p1;
        bg += lg * p0;
        gg += p0;
    }
    let i_aa = gamma * beta * beta * aa;
    let i_ab = beta * gamma * ab;
    let i_bb = gamma * bb;
    let i_ag = -beta * ag;
    let i_bg = -bg;
    let i_gg = gg / gamma;
    FisherMatrix::from_rows(
        &["alpha", "beta", "gamma"],
        vec![
            vec![i_aa, i_ab, i_ag],
            vec![i_ab, i_bb, i_bg],
            vec![i_ag, i_bg, i_gg],
        ],
    )
}

/// Expected conditional information of the AR(1) model given `y0`, over
/// steps `1..=horizon`.
pub fn fisher_ar1(alpha: f64, beta: f64, y0: f64, horizon: usize) -> Result<FisherMatrix> {
    if horizon == 0 {
        return Err(Error::TooFewPoints { needed: 1, got: 0 });
    }
    let (mut aa, mut ab, mut bb) = (0.0, 0.0, 0.0);
    for t in 1..=horizon {
        let prev = (t - 1) as f64 * alpha + 1.0;
        let cur = t as f64 * alpha + 1.0;
        let ln_ratio = (prev / cur).ln();
        let cur_pow = cur.powf(-beta);
        aa += cur_pow / (prev * prev * cur * cur);
        ab += cur_pow / (prev * cur) * ln_ratio;
        bb += cur_pow * ln_ratio * ln_ratio;
    }
    let i_aa = beta * beta * y0 * aa;
    let i_ab = -beta * y0 * ab;
    let i_bb = y0 * bb;
    Ok(FisherMatrix::from_rows(
        &["alpha", "beta"],
        vec![vec![i_aa, i_ab], vec![i_ab, i_bb]],
    ))
}

/// One Wald interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamInterval {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceIntervals {
    pub level: f64,
    pub intervals: Vec<ParamInterval>,
}

impl ConfidenceIntervals {
    pub fn get(&self, name: &str) -> Option<&ParamInterval> {
        self.intervals.iter().find(|i| i.name == name)
    }

    /// Copy with lower bounds clipped at zero, for positive parameters.
    pub fn truncated_at_zero(&self) -> Self {
        let mut out = self.clone();
        for i in &mut out.intervals {
            i.lower = i.lower.max(0.0);
        }
        out
    }
}

/// Two-sided standard normal quantile for `level`.
pub fn normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("confidence level {level} not in (0, 1)")));
    }
    let std = Normal::standard();
    Ok(std.inverse_cdf(0.5 * (1.0 + level)))
}

/// `estimate +- z * sqrt((I^-1)_ii)` for each parameter, in the order of
/// `fisher.order`.
pub fn confidence_intervals(estimates: &[f64], fisher: &FisherMatrix, level: f64) -> Result<ConfidenceIntervals> {
    if estimates.len() != fisher.dim() {
        return Err(Error::InvalidConfig(format!(
            "{} estimates for a {}x{} information matrix",
            estimates.len(),
            fisher.dim(),
            fisher.dim()
        )));
    }
    let z = normal_quantile(level)?;
    let cov = fisher.inverse()?;
    let intervals = estimates
        .iter()
        .zip(&fisher.order)
        .enumerate()
        .map(|(i, (&est, name))| {
            let se = cov[i][i].max(0.0).sqrt();
            ParamInterval {
                name: name.clone(),
                estimate: est,
                std_error: se,
                lower: est - z * se,
                upper: est + z * se,
            }
        })
        .collect();
    Ok(ConfidenceIntervals { level, intervals })
}

/// `I_alpha_alpha` of the independence model over windows `(-T, T)` for
/// `T = 0..=max_half_window`.
///
/// The terms behave like `t^(2 - (beta + 2)) = t^-beta`, so the sequence
/// settles when `beta > 1` and grows without bound otherwise.
pub fn fisher_series_divergence_report(params: &IndepParams, max_half_window: usize) -> Vec<(usize, f64)> {
    let IndepParams { alpha, beta, gamma } = *params;
    let scale = gamma * beta * beta;
    let mut out = Vec::with_capacity(max_half_window + 1);
    let mut sum = 0.0;
    out.push((0, 0.0));
    for t in 1..=max_half_window {
        let d = t as f64;
        let term = d * d * (-(beta + 2.0) * (alpha * d).ln_1p()).exp();
        sum += 2.0 * term;
        out.push((t, scale * sum));
    }
    out
}
