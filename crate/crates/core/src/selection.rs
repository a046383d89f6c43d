//! AIC and the conditional-model comparison table.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{
    fit_ar1, fit_ar2, fit_independence, fit_unified_face, fit_unified_with, FitOptions, FitResult, UnifiedFace,
};
use crate::params::{ModelParams, UnifiedParams};
use crate::series::{EventSeries, Window};

/// `2k - 2 log L`.
pub fn aic(log_likelihood: f64, n_params: usize) -> f64 {
    2.0 * n_params as f64 - 2.0 * log_likelihood
}

/// Rows fitted by [`compare_models`], in table order.
pub const MODEL_NAMES: [&str; 6] = ["ar1", "ar2", "unified", "unified_w1", "unified_w1_u1", "unified_w1_u0"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<ModelParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_likelihood: Option<f64>,
    pub n_params: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    /// False for rows whose likelihood conditions differently and so must
    /// not compete on AIC.
    pub comparable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Full fit behind the row (not serialized; the row repeats its key
    /// numbers).
    #[serde(skip)]
    pub fit: Option<FitResult>,
}

impl ComparisonRow {
    fn from_fit(model: &str, fit: Result<FitResult>, n_params: usize) -> Self {
        match fit {
            Ok(f) => Self {
                model: model.to_string(),
                params: Some(f.params),
                log_likelihood: Some(f.log_likelihood),
                n_params: f.n_params,
                aic: Some(aic(f.log_likelihood, f.n_params)),
                converged: Some(f.converged),
                comparable: true,
                error: None,
                fit: Some(f),
            },
            Err(e) => Self {
                model: model.to_string(),
                params: None,
                log_likelihood: None,
                n_params,
                aic: None,
                converged: None,
                comparable: true,
                error: Some(e.to_string()),
                fit: None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub rows: Vec<ComparisonRow>,
    /// Comparable row with the smallest AIC.
    pub best: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CompareOptions {
    /// Adds an independence-model row over `(0, horizon)`. It is reported
    /// but never selected, since its likelihood does not condition on the
    /// event-day count.
    pub include_independence: bool,
}

/// Smallest AIC; ties within `1e-9` go to fewer parameters, then to the
/// earlier row.
fn select_best(rows: &[ComparisonRow]) -> Option<String> {
    let mut best: Option<&ComparisonRow> = None;
    for row in rows.iter().filter(|r| r.comparable) {
        let Some(a) = row.aic.filter(|a| a.is_finite()) else {
            continue;
        };
        best = match best {
            None => Some(row),
            Some(b) => {
                let ba = b.aic.expect("selected rows have an AIC");
                if a < ba - 1e-9 || ((a - ba).abs() <= 1e-9 && row.n_params < b.n_params) {
                    Some(row)
                } else {
                    Some(b)
                }
            }
        };
    }
    best.map(|r| r.model.clone())
}

/// Fits the conditional family on `(0, horizon)` and ranks it by AIC.
///
/// Rows: AR(1), AR(2), the unifying model, and its `w = 1` restrictions
/// with `u` free, `u = 1` and `u = 0`. A row whose fit fails is reported
/// with its error instead of aborting the comparison.
pub fn compare_models(
    series: &EventSeries,
    horizon: usize,
    options: &FitOptions,
    compare: CompareOptions,
) -> Result<ModelComparison> {
    options.validate()?;
    if horizon < 5 {
        return Err(Error::TooFewPoints { needed: 5, got: horizon });
    }
    series.after_event(horizon)?;

    let ar1 = fit_ar1(series, horizon, options);
    let ar2 = fit_ar2(series, horizon, options);
    let unified = match &ar2 {
        Ok(f) => fit_unified_with(series, horizon, Some(f), options),
        Err(e) => Err(e.clone()),
    };

    let w1 = UnifiedFace { w: Some(1.0), ..UnifiedFace::FREE };
    let w1_u1 = UnifiedFace { u: Some(1.0), ..w1 };
    let w1_u0 = UnifiedFace { u: Some(0.0), ..w1 };

    // w = 1, u = 0 makes the unified mean the AR(1) mean term for term, so
    // that row is the AR(1) fit embedded rather than a second search that
    // could differ by optimizer noise.
    let embed = |f: &FitResult| UnifiedParams { alpha: f.params.alpha(), beta: f.params.beta(), w: 1.0, u: 0.0, v: 1.0 };
    let fit_u0 = match &ar1 {
        Ok(f) => Ok(FitResult {
            params: ModelParams::Unified(embed(f)),
            n_params: w1_u0.n_params(),
            ..f.clone()
        }),
        Err(e) => Err(e.clone()),
    };
    let fit_u1 = fit_unified_face(series, horizon, w1_u1, &[], options);
    let mut w1_starts: Vec<UnifiedParams> = ar1.as_ref().ok().map(embed).into_iter().collect();
    if let Ok(f) = &fit_u1 {
        w1_starts.push(f.unified().expect("unified fit"));
    }
    let fit_w1 = fit_unified_face(series, horizon, w1, &w1_starts, options);

    let mut rows = vec![
        ComparisonRow::from_fit("ar1", ar1, 2),
        ComparisonRow::from_fit("ar2", ar2, 3),
        ComparisonRow::from_fit("unified", unified, 5),
        ComparisonRow::from_fit("unified_w1", fit_w1, w1.n_params()),
        ComparisonRow::from_fit("unified_w1_u1", fit_u1, w1_u1.n_params()),
        ComparisonRow::from_fit("unified_w1_u0", fit_u0, w1_u0.n_params()),
    ];

    if compare.include_independence {
        let window = Window { lo: 0, hi: horizon as i64 };
        let mut row = ComparisonRow::from_fit("independence", fit_independence(series, window, options), 3);
        row.comparable = false;
        rows.push(row);
    }

    let best = select_best(&rows);
    Ok(ModelComparison { rows, best })
}
