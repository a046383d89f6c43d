//! Parameter records for the four models.
//!
//! Fields are public so evaluation code and tests can use boundary values
//! such as `alpha = 0`; fitters always go through [`IndepParams::new`] and
//! friends, which enforce the interior constraints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Power-law decay independence model: `gamma / (alpha |t| + 1)^beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndepParams {
    /// Steepness around the event (1/day).
    pub alpha: f64,
    /// Long-range decay exponent.
    pub beta: f64,
    /// Peak level (counts).
    pub gamma: f64,
}

/// Conditional AR(2) parameters; `s = 1` is the AR(1) model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ar2Params {
    pub alpha: f64,
    pub beta: f64,
    /// Weight of the lag-1 term.
    pub s: f64,
}

/// Five-parameter unifying model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnifiedParams {
    pub alpha: f64,
    pub beta: f64,
    /// Lag-1 versus lag-2 mixture weight.
    pub w: f64,
    /// Independence weight inside the lag-1 term.
    pub u: f64,
    /// Independence weight inside the lag-2 term.
    pub v: f64,
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be positive and finite",
        })
    }
}

fn unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must lie in [0, 1]",
        })
    }
}

impl IndepParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let p = Self { alpha, beta, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        positive("alpha", self.alpha)?;
        positive("beta", self.beta)?;
        positive("gamma", self.gamma)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.alpha, self.beta, self.gamma]
    }
}

impl Ar2Params {
    pub fn new(alpha: f64, beta: f64, s: f64) -> Result<Self> {
        let p = Self { alpha, beta, s };
        p.validate()?;
        Ok(p)
    }

    /// AR(1): the lag-1 weight pinned to one.
    pub fn ar1(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(alpha, beta, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        positive("alpha", self.alpha)?;
        positive("beta", self.beta)?;
        unit("s", self.s)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.alpha, self.beta, self.s]
    }
}

impl UnifiedParams {
    pub fn new(alpha: f64, beta: f64, w: f64, u: f64, v: f64) -> Result<Self> {
        let p = Self { alpha, beta, w, u, v };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        positive("alpha", self.alpha)?;
        positive("beta", self.beta)?;
        unit("w", self.w)?;
        unit("u", self.u)?;
        unit("v", self.v)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.alpha, self.beta, self.w, self.u, self.v]
    }
}

/// Parameters of any fitted model, tagged by model family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelParams {
    Independence(IndepParams),
    Ar1 { alpha: f64, beta: f64 },
    Ar2(Ar2Params),
    Unified(UnifiedParams),
}

impl ModelParams {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            ModelParams::Independence(p) => p.to_vec(),
            ModelParams::Ar1 { alpha, beta } => vec![*alpha, *beta],
            ModelParams::Ar2(p) => p.to_vec(),
            ModelParams::Unified(p) => p.to_vec(),
        }
    }

    pub fn names(&self) -> &'static [&'static str] {
        match self {
            ModelParams::Independence(_) => &["alpha", "beta", "gamma"],
            ModelParams::Ar1 { .. } => &["alpha", "beta"],
            ModelParams::Ar2(_) => &["alpha", "beta", "s"],
            ModelParams::Unified(_) => &["alpha", "beta", "w", "u", "v"],
        }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            ModelParams::Independence(p) => p.alpha,
            ModelParams::Ar1 { alpha, .. } => *alpha,
            ModelParams::Ar2(p) => p.alpha,
            ModelParams::Unified(p) => p.alpha,
        }
    }

    pub fn beta(&self) -> f64 {
        match self {
            ModelParams::Independence(p) => p.beta,
            ModelParams::Ar1 { beta, .. } => *beta,
            ModelParams::Ar2(p) => p.beta,
            ModelParams::Unified(p) => p.beta,
        }
    }
}
