//! Log-likelihoods and maximum-likelihood fitting.
//!
//! The independence model has an analytic score and is fitted by BFGS in
//! log-parameters. The conditional models are fitted by Nelder-Mead: the
//! positive parameters are log-transformed and the weights in `[0, 1]` go
//! through a logistic transform. A weight whose transformed value leaves
//! `[-8, 8]` is declared to sit on the boundary; it is then pinned to 0 or
//! 1 exactly and the remaining parameters are polished on that face.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::models::{
    ar1_first_step_mean, ar2_mean_unchecked, floor_lag, unified_conditional_mean, DEFAULT_ZERO_FLOOR,
};
use crate::optim::{bfgs, nelder_mead, BfgsSettings, SimplexSettings};
use crate::par::{self, Execution};
use crate::params::{Ar2Params, IndepParams, ModelParams, UnifiedParams};
use crate::series::{EventSeries, Window};

/// Transformed weights beyond this magnitude are treated as boundary values.
pub const BOUNDARY_LOGIT: f64 = 8.0;

/// Multi-start candidates closer than this in log-likelihood are ties.
const TIE_EPS: f64 = 1e-9;

/// Settings shared by every fitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Relative gradient tolerance for BFGS.
    pub grad_tol: f64,
    /// Simplex diameter tolerance in transformed coordinates.
    pub x_tol: f64,
    pub max_evals: usize,
    /// Starts for the unifying model, including the default one.
    pub n_starts: usize,
    pub rng_seed: u64,
    /// Replacement for zero lagged counts.
    pub zero_floor: f64,
    #[serde(skip, default)]
    pub execution: Execution,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            x_tol: 1e-9,
            max_evals: 10_000,
            n_starts: 8,
            rng_seed: 0,
            zero_floor: DEFAULT_ZERO_FLOOR,
            execution: Execution::default(),
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.grad_tol > 0.0) || !(self.x_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.max_evals == 0 || self.n_starts == 0 {
            return bad("max_evals and n_starts must be at least 1");
        }
        if !(self.zero_floor > 0.0) || !self.zero_floor.is_finite() {
            return bad("zero floor must be positive");
        }
        Ok(())
    }

    fn simplex(&self) -> SimplexSettings {
        SimplexSettings {
            x_tol: self.x_tol,
            max_evals: self.max_evals,
            initial_step: 0.5,
            restarts: 2,
        }
    }

    fn bfgs(&self) -> BfgsSettings {
        BfgsSettings {
            grad_tol: self.grad_tol,
            max_evals: self.max_evals,
        }
    }
}

/// A fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ModelParams,
    pub log_likelihood: f64,
    pub n_params: usize,
    pub converged: bool,
    pub n_evaluations: usize,
    pub window: Window,
    /// Infinity norm of the score in log-parameters (independence model).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gradient_norm: Option<f64>,
    /// Weights reported exactly on the boundary of `[0, 1]`.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub boundary: Vec<String>,
    /// Spread of log-likelihoods across multi-start runs; a large spread
    /// points at a flat or multimodal surface.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub start_spread: Option<f64>,
}

impl FitResult {
    /// Turns a non-converged fit into an error.
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NonConvergence {
                evaluations: self.n_evaluations,
            })
        }
    }

    pub fn indep(&self) -> Option<IndepParams> {
        match self.params {
            ModelParams::Independence(p) => Some(p),
            _ => None,
        }
    }

    pub fn ar2(&self) -> Option<Ar2Params> {
        match self.params {
            ModelParams::Ar2(p) => Some(p),
            ModelParams::Ar1 { alpha, beta } => Some(Ar2Params { alpha, beta, s: 1.0 }),
            _ => None,
        }
    }

    pub fn unified(&self) -> Option<UnifiedParams> {
        match self.params {
            ModelParams::Unified(p) => Some(p),
            _ => None,
        }
    }
}

/// Before/after fit with a shared peak level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymmetricFit {
    pub before: FitResult,
    pub after: FitResult,
    pub gamma_shared: f64,
}

/// Gradient of the independence log-likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndepScore {
    pub d_alpha: f64,
    pub d_beta: f64,
    pub d_gamma: f64,
}

pub(crate) fn ln_factorial(y: u64) -> f64 {
    if y < 2 {
        0.0
    } else {
        ln_gamma(y as f64 + 1.0)
    }
}

#[inline]
fn log_pmf_raw(y: f64, mu: f64) -> f64 {
    if y == 0.0 {
        -mu
    } else {
        y * mu.ln() - mu
    }
}

/// `y log(mu) - mu - log(y!)`.
pub fn poisson_log_pmf(y: u64, mu: f64) -> Result<f64> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::NonPositiveMean(mu));
    }
    Ok(log_pmf_raw(y as f64, mu) - ln_factorial(y))
}

/// Window data for the independence model.
#[derive(Debug, Clone)]
pub(crate) struct IndepData {
    dist: Vec<f64>,
    y: Vec<f64>,
    ln_fact: f64,
}

impl IndepData {
    pub(crate) fn new(series: &EventSeries, window: Window) -> Result<Self> {
        let slice = series.relative_window_slice(window)?;
        Ok(Self {
            dist: slice.iter().map(|&(t, _)| t.unsigned_abs() as f64).collect(),
            y: slice.iter().map(|&(_, c)| c as f64).collect(),
            ln_fact: slice.iter().map(|&(_, c)| ln_factorial(c)).sum(),
        })
    }

    pub(crate) fn len(&self) -> usize {
        self.y.len()
    }

    pub(crate) fn loglik(&self, alpha: f64, beta: f64, gamma: f64) -> f64 {
        let ln_gamma_ = gamma.ln();
        let mut acc = 0.0;
        for (&d, &y) in self.dist.iter().zip(&self.y) {
            let ln_mu = ln_gamma_ - beta * (alpha * d).ln_1p();
            let mu = ln_mu.exp();
            acc += if y == 0.0 { -mu } else { y * ln_mu - mu };
        }
        acc - self.ln_fact
    }

    pub(crate) fn loglik_and_score(&self, alpha: f64, beta: f64, gamma: f64) -> (f64, IndepScore) {
        let ln_g = gamma.ln();
        let (mut l, mut da, mut db, mut dg) = (0.0, 0.0, 0.0, 0.0);
        for (&d, &y) in self.dist.iter().zip(&self.y) {
            let lg = (alpha * d).ln_1p();
            let ln_mu = ln_g - beta * lg;
            let mu = ln_mu.exp();
            l += if y == 0.0 { -mu } else { y * ln_mu - mu };
            let resid = y - mu;
            da -= beta * d * resid / (1.0 + alpha * d);
            db -= lg * resid;
            dg += resid;
        }
        let score = IndepScore {
            d_alpha: da,
            d_beta: db,
            d_gamma: dg / gamma,
        };
        (l - self.ln_fact, score)
    }
}

/// Independence log-likelihood over a window.
pub fn loglik_independence(params: &IndepParams, series: &EventSeries, window: Window) -> Result<f64> {
    let data = IndepData::new(series, window)?;
    Ok(data.loglik(params.alpha, params.beta, params.gamma))
}

/// Analytic score of [`loglik_independence`].
pub fn score_independence(params: &IndepParams, series: &EventSeries, window: Window) -> Result<IndepScore> {
    let data = IndepData::new(series, window)?;
    Ok(data.loglik_and_score(params.alpha, params.beta, params.gamma).1)
}

/// Post-event counts for the conditional models.
#[derive(Debug, Clone)]
pub(crate) struct CondData {
    /// Observed `y_{t0}, ..., y_{t0+T}`.
    y: Vec<f64>,
    /// Same counts after the zero floor, used as regressors.
    z: Vec<f64>,
    /// `sum log(y_m!)` for `m = 1..=T`.
    ln_fact: f64,
}

impl CondData {
    pub(crate) fn new(series: &EventSeries, horizon: usize, floor: f64) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::HorizonOutOfRange {
                horizon,
                available: series.points_after(),
            });
        }
        let counts = series.after_event(horizon)?;
        Ok(Self {
            y: counts.iter().map(|&c| c as f64).collect(),
            z: counts.iter().map(|&c| floor_lag(c as f64, floor)).collect(),
            ln_fact: counts[1..].iter().map(|&c| ln_factorial(c)).sum(),
        })
    }

    pub(crate) fn loglik_ar2(&self, p: &Ar2Params) -> f64 {
        let mut acc = log_pmf_raw(self.y[1], ar1_first_step_mean(p.alpha, p.beta, self.z[0]));
        for m in 2..self.y.len() {
            let mu = ar2_mean_unchecked(p, self.z[m - 1], self.z[m - 2], m);
            acc += log_pmf_raw(self.y[m], mu);
        }
        acc - self.ln_fact
    }

    pub(crate) fn loglik_unified(&self, p: &UnifiedParams) -> f64 {
        let mut acc = log_pmf_raw(self.y[1], ar1_first_step_mean(p.alpha, p.beta, self.z[0]));
        for m in 2..self.y.len() {
            let mu = unified_conditional_mean(p, self.z[0], self.z[m - 1], self.z[m - 2], m).unwrap_or(f64::NAN);
            acc += log_pmf_raw(self.y[m], mu);
        }
        acc - self.ln_fact
    }
}

/// Conditional AR(2) log-likelihood of `y_{t0+1..=t0+T}` given `y_{t0}`.
pub fn loglik_ar2(params: &Ar2Params, series: &EventSeries, horizon: usize, zero_floor: f64) -> Result<f64> {
    Ok(CondData::new(series, horizon, zero_floor)?.loglik_ar2(params))
}

/// Conditional log-likelihood of the unifying model.
pub fn loglik_unified(params: &UnifiedParams, series: &EventSeries, horizon: usize, zero_floor: f64) -> Result<f64> {
    Ok(CondData::new(series, horizon, zero_floor)?.loglik_unified(params))
}

fn ensure_points(needed: usize, got: usize) -> Result<()> {
    if got < needed {
        Err(Error::TooFewPoints { needed, got })
    } else {
        Ok(())
    }
}

fn initial_gamma(series: &EventSeries, floor: f64) -> f64 {
    (series.peak() as f64).max(floor)
}

/// Maximum-likelihood fit of the independence model over `window`.
pub fn fit_independence(series: &EventSeries, window: Window, options: &FitOptions) -> Result<FitResult> {
    let start = IndepParams {
        alpha: 1.0,
        beta: 1.0,
        gamma: initial_gamma(series, options.zero_floor),
    };
    fit_independence_from(series, window, start, options)
}

/// As [`fit_independence`], from a caller-chosen interior start.
pub fn fit_independence_from(
    series: &EventSeries,
    window: Window,
    start: IndepParams,
    options: &FitOptions,
) -> Result<FitResult> {
    options.validate()?;
    start.validate()?;
    let data = IndepData::new(series, window)?;
    ensure_points(3, data.len())?;

    let fg = |x: &[f64]| {
        let (a, b, g) = (x[0].exp(), x[1].exp(), x[2].exp());
        let (l, s) = data.loglik_and_score(a, b, g);
        (-l, vec![-s.d_alpha * a, -s.d_beta * b, -s.d_gamma * g])
    };
    let x0 = [start.alpha.ln(), start.beta.ln(), start.gamma.ln()];
    let min = minimize_smooth(fg, &x0, options);

    Ok(FitResult {
        params: ModelParams::Independence(IndepParams {
            alpha: min.x[0].exp(),
            beta: min.x[1].exp(),
            gamma: min.x[2].exp(),
        }),
        log_likelihood: -min.value,
        n_params: 3,
        converged: min.converged,
        n_evaluations: min.evaluations,
        window,
        gradient_norm: min.gradient_norm,
        boundary: Vec::new(),
        start_spread: None,
    })
}

/// BFGS, with one simplex polish and a second BFGS pass if the first one
/// stalls short of the gradient tolerance.
fn minimize_smooth<F>(fg: F, x0: &[f64], options: &FitOptions) -> crate::optim::Minimum
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let first = bfgs(&fg, x0, options.bfgs());
    if first.converged {
        return first;
    }
    let used = first.evaluations;
    let budget = options.max_evals.saturating_sub(used).max(1);
    let polish = nelder_mead(
        |x| fg(x).0,
        &first.x,
        SimplexSettings {
            max_evals: budget / 2 + 1,
            ..options.simplex()
        },
    );
    let mut second = bfgs(
        &fg,
        &polish.x,
        BfgsSettings {
            max_evals: budget / 2 + 1,
            ..options.bfgs()
        },
    );
    second.evaluations += used + polish.evaluations;
    if second.value <= first.value {
        second
    } else {
        crate::optim::Minimum {
            evaluations: second.evaluations,
            ..first
        }
    }
}

/// Fits `(alpha, beta)` on `window` with `gamma` held at `gamma`.
fn fit_shape_fixed_gamma(
    data: &IndepData,
    gamma: f64,
    window: Window,
    options: &FitOptions,
) -> FitResult {
    let fg = |x: &[f64]| {
        let (a, b) = (x[0].exp(), x[1].exp());
        let (l, s) = data.loglik_and_score(a, b, gamma);
        (-l, vec![-s.d_alpha * a, -s.d_beta * b])
    };
    let min = minimize_smooth(fg, &[0.0, 0.0], options);
    FitResult {
        params: ModelParams::Independence(IndepParams {
            alpha: min.x[0].exp(),
            beta: min.x[1].exp(),
            gamma,
        }),
        log_likelihood: -min.value,
        n_params: 2,
        converged: min.converged,
        n_evaluations: min.evaluations,
        window,
        gradient_norm: min.gradient_norm,
        boundary: Vec::new(),
        start_spread: None,
    }
}

/// Before/after protocol: `(alpha_b, beta_b, gamma)` on
/// `(-before_days, 0)`, then `(alpha_a, beta_a)` on `(0, after_days)` with
/// `gamma` carried over unchanged.
pub fn fit_asymmetric(
    series: &EventSeries,
    before_days: usize,
    after_days: usize,
    options: &FitOptions,
) -> Result<AsymmetricFit> {
    let before_w = Window::new(-(before_days as i64), 0)?;
    let after_w = Window::new(0, after_days as i64)?;
    series.check_window(before_w)?;
    series.check_window(after_w)?;

    let before = fit_independence(series, before_w, options)?;
    let gamma_shared = before.indep().expect("independence fit").gamma;

    ensure_points(2, after_days)?;
    let data = IndepData::new(series, after_w)?;
    let after = fit_shape_fixed_gamma(&data, gamma_shared, after_w, options);

    Ok(AsymmetricFit {
        before,
        after,
        gamma_shared,
    })
}

/// Fits the independence model to many series over the same window.
pub fn fit_independence_batch(
    series: &[EventSeries],
    window: Window,
    options: &FitOptions,
) -> Vec<Result<FitResult>> {
    let inner = FitOptions {
        execution: Execution::Sequential,
        ..*options
    };
    par::map_slice(options.execution, series, |s| fit_independence(s, window, &inner))
}

/// How a coordinate enters the simplex search.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    Positive,
    Unit,
    Fixed(f64),
}

const LOGIT_CLAMP: f64 = 30.0;

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln().clamp(-LOGIT_CLAMP, LOGIT_CLAMP)
}

fn to_internal(natural: &[f64], slots: &[Slot]) -> Vec<f64> {
    natural
        .iter()
        .zip(slots)
        .filter_map(|(&v, slot)| match slot {
            Slot::Positive => Some(v.ln()),
            Slot::Unit => Some(logit(v)),
            Slot::Fixed(_) => None,
        })
        .collect()
}

fn to_natural(x: &[f64], slots: &[Slot]) -> Vec<f64> {
    let mut free = x.iter();
    slots
        .iter()
        .map(|slot| match slot {
            Slot::Positive => free.next().expect("free coordinate").exp(),
            Slot::Unit => logistic(*free.next().expect("free coordinate")),
            Slot::Fixed(v) => *v,
        })
        .collect()
}

#[derive(Debug, Clone)]
struct Candidate {
    natural: Vec<f64>,
    loglik: f64,
    evaluations: usize,
    converged: bool,
    slots: Vec<Slot>,
}

/// Simplex search over the free slots, then boundary pinning and a polish
/// on the boundary face.
fn simplex_fit<L>(loglik: &L, start: &[f64], slots: &[Slot], options: &FitOptions) -> Candidate
where
    L: Fn(&[f64]) -> f64,
{
    let objective = |slots: &[Slot]| {
        let slots = slots.to_vec();
        move |x: &[f64]| -loglik(&to_natural(x, &slots))
    };

    let x0 = to_internal(start, slots);
    let min = nelder_mead(objective(slots), &x0, options.simplex());
    let mut best = Candidate {
        natural: to_natural(&min.x, slots),
        loglik: -min.value,
        evaluations: min.evaluations,
        converged: min.converged,
        slots: slots.to_vec(),
    };

    let mut pinned = slots.to_vec();
    let mut free_idx = 0;
    let mut any = false;
    for slot in pinned.iter_mut() {
        match slot {
            Slot::Positive => free_idx += 1,
            Slot::Unit => {
                let x = min.x[free_idx];
                if x.abs() > BOUNDARY_LOGIT {
                    *slot = Slot::Fixed(if x > 0.0 { 1.0 } else { 0.0 });
                    any = true;
                }
                free_idx += 1;
            }
            Slot::Fixed(_) => {}
        }
    }

    if any {
        let start: Vec<f64> = best
            .natural
            .iter()
            .zip(&pinned)
            .map(|(&v, slot)| if let Slot::Fixed(p) = slot { *p } else { v })
            .collect();
        let x0 = to_internal(&start, &pinned);
        let face = nelder_mead(objective(&pinned), &x0, options.simplex());
        let face_ll = -face.value;
        best.evaluations += face.evaluations;
        if face_ll >= best.loglik - 1e-9 * best.loglik.abs().max(1.0) {
            best.natural = to_natural(&face.x, &pinned);
            best.loglik = face_ll;
            best.converged = face.converged;
            best.slots = pinned;
        }
    }
    best
}

/// Highest log-likelihood; near-ties go to the lexicographically smallest
/// parameter vector.
fn pick_best(candidates: &[Candidate]) -> &Candidate {
    let top = candidates
        .iter()
        .map(|c| c.loglik)
        .filter(|l| l.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    candidates
        .iter()
        .filter(|c| c.loglik.is_finite() && top - c.loglik < TIE_EPS)
        .min_by(|a, b| {
            a.natural
                .iter()
                .zip(&b.natural)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap_or(&candidates[0])
}

fn boundary_names(c: &Candidate, names: &[&str], original: &[Slot]) -> Vec<String> {
    c.slots
        .iter()
        .zip(original)
        .zip(names)
        .filter(|((now, was), _)| matches!(now, Slot::Fixed(_)) && **was == Slot::Unit)
        .map(|(_, n)| n.to_string())
        .collect()
}

fn conditional_window(horizon: usize) -> Window {
    Window {
        lo: 0,
        hi: horizon as i64,
    }
}

const AR_NAMES: [&str; 3] = ["alpha", "beta", "s"];

fn ar_face_s1(data: &CondData, options: &FitOptions) -> Candidate {
    let ll = |p: &[f64]| data.loglik_ar2(&Ar2Params { alpha: p[0], beta: p[1], s: p[2] });
    simplex_fit(&ll, &[1.0, 1.0, 1.0], &[Slot::Positive, Slot::Positive, Slot::Fixed(1.0)], options)
}

/// AR(1) fit: the AR(2) likelihood with `s = 1`.
pub fn fit_ar1(series: &EventSeries, horizon: usize, options: &FitOptions) -> Result<FitResult> {
    options.validate()?;
    ensure_points(2, horizon)?;
    let data = CondData::new(series, horizon, options.zero_floor)?;
    let c = ar_face_s1(&data, options);
    Ok(FitResult {
        params: ModelParams::Ar1 {
            alpha: c.natural[0],
            beta: c.natural[1],
        },
        log_likelihood: c.loglik,
        n_params: 2,
        converged: c.converged,
        n_evaluations: c.evaluations,
        window: conditional_window(horizon),
        gradient_norm: None,
        boundary: Vec::new(),
        start_spread: None,
    })
}

/// AR(2) fit with `s` restricted to `[0, 1]`.
pub fn fit_ar2(series: &EventSeries, horizon: usize, options: &FitOptions) -> Result<FitResult> {
    options.validate()?;
    ensure_points(3, horizon)?;
    let data = CondData::new(series, horizon, options.zero_floor)?;
    let ll = |p: &[f64]| data.loglik_ar2(&Ar2Params { alpha: p[0], beta: p[1], s: p[2] });
    let slots = [Slot::Positive, Slot::Positive, Slot::Unit];
    let interior = simplex_fit(&ll, &[1.0, 1.0, 0.8], &slots, options);
    let face = ar_face_s1(&data, options);
    let evaluations = interior.evaluations + face.evaluations;
    let candidates = [interior, face];
    let best = pick_best(&candidates);
    let boundary = boundary_names(best, &AR_NAMES, &slots);
    Ok(FitResult {
        params: ModelParams::Ar2(Ar2Params {
            alpha: best.natural[0],
            beta: best.natural[1],
            s: best.natural[2],
        }),
        log_likelihood: best.loglik,
        n_params: 3,
        converged: best.converged,
        n_evaluations: evaluations,
        window: conditional_window(horizon),
        gradient_norm: None,
        boundary,
        start_spread: None,
    })
}

/// Restriction of the unifying model: `Some(v)` pins a weight.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UnifiedFace {
    pub w: Option<f64>,
    pub u: Option<f64>,
    pub v: Option<f64>,
}

impl UnifiedFace {
    pub const FREE: UnifiedFace = UnifiedFace {
        w: None,
        u: None,
        v: None,
    };

    /// Slots for `(alpha, beta, w, u, v)`. A weight that cannot affect the
    /// likelihood (lag-2 weights when `w = 1`, lag-1 weights when `w = 0`)
    /// is pinned to 1.
    fn slots(&self) -> [Slot; 5] {
        let pin = |x: Option<f64>| x.map_or(Slot::Unit, Slot::Fixed);
        let mut u = pin(self.u);
        let mut v = pin(self.v);
        match self.w {
            Some(w) if w == 1.0 && self.v.is_none() => v = Slot::Fixed(1.0),
            Some(w) if w == 0.0 && self.u.is_none() => u = Slot::Fixed(1.0),
            _ => {}
        }
        [Slot::Positive, Slot::Positive, pin(self.w), u, v]
    }

    /// Free parameters that affect the likelihood.
    pub fn n_params(&self) -> usize {
        let w_free = self.w.is_none();
        let lag1_live = self.w != Some(0.0);
        let lag2_live = self.w != Some(1.0);
        2 + usize::from(w_free)
            + usize::from(self.u.is_none() && lag1_live)
            + usize::from(self.v.is_none() && lag2_live)
    }
}

const UNIFIED_NAMES: [&str; 5] = ["alpha", "beta", "w", "u", "v"];

fn unified_result(c: &Candidate, original: &[Slot], n_params: usize, evaluations: usize, horizon: usize) -> FitResult {
    FitResult {
        params: ModelParams::Unified(UnifiedParams {
            alpha: c.natural[0],
            beta: c.natural[1],
            w: c.natural[2],
            u: c.natural[3],
            v: c.natural[4],
        }),
        log_likelihood: c.loglik,
        n_params,
        converged: c.converged,
        n_evaluations: evaluations,
        window: conditional_window(horizon),
        gradient_norm: None,
        boundary: boundary_names(c, &UNIFIED_NAMES, original),
        start_spread: None,
    }
}

fn apply_face(p: &UnifiedParams, slots: &[Slot; 5]) -> Vec<f64> {
    p.to_vec()
        .into_iter()
        .zip(slots)
        .map(|(v, s)| match s {
            Slot::Fixed(x) => *x,
            Slot::Unit => v.clamp(1e-6, 1.0 - 1e-6),
            Slot::Positive => v,
        })
        .collect()
}

/// Fits a restriction of the unifying model from each of `starts`
/// (projected onto the face) plus the default start.
pub fn fit_unified_face(
    series: &EventSeries,
    horizon: usize,
    face: UnifiedFace,
    starts: &[UnifiedParams],
    options: &FitOptions,
) -> Result<FitResult> {
    options.validate()?;
    let n_params = face.n_params();
    ensure_points(n_params, horizon)?;
    let data = CondData::new(series, horizon, options.zero_floor)?;
    let slots = face.slots();
    let ll = |p: &[f64]| data.loglik_unified(&UnifiedParams { alpha: p[0], beta: p[1], w: p[2], u: p[3], v: p[4] });

    let mut all = vec![UnifiedParams { alpha: 1.0, beta: 1.0, w: 0.5, u: 0.5, v: 0.5 }];
    all.extend_from_slice(starts);
    let inner = FitOptions {
        execution: Execution::Sequential,
        ..*options
    };
    let candidates = par::map_slice(options.execution, &all, |p| {
        simplex_fit(&ll, &apply_face(p, &slots), &slots, &inner)
    });
    let evaluations = candidates.iter().map(|c| c.evaluations).sum();
    let best = pick_best(&candidates);
    Ok(unified_result(best, &slots, n_params, evaluations, horizon))
}

/// Random interior starts drawn from the box
/// `log alpha, log beta ~ U(log 0.1, log 10)`, `w, u, v ~ U(0.01, 0.99)`.
pub fn random_unified_starts(n: usize, seed: u64) -> Vec<UnifiedParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = 10f64.ln();
    (0..n)
        .map(|_| UnifiedParams {
            alpha: rng.random_range(-span..span).exp(),
            beta: rng.random_range(-span..span).exp(),
            w: rng.random_range(0.01..0.99),
            u: rng.random_range(0.01..0.99),
            v: rng.random_range(0.01..0.99),
        })
        .collect()
}

/// Unifying-model fit with multiple starts.
pub fn fit_unified(series: &EventSeries, horizon: usize, options: &FitOptions) -> Result<FitResult> {
    fit_unified_with(series, horizon, None, options)
}

/// As [`fit_unified`], reusing an AR(2) fit if one is at hand.
///
/// Besides the random starts, the search always covers the `u = v = 0`
/// face started from the AR(2) optimum and the `u = v = 1` face, so the
/// result is never worse than either nested model.
pub fn fit_unified_with(
    series: &EventSeries,
    horizon: usize,
    ar2: Option<&FitResult>,
    options: &FitOptions,
) -> Result<FitResult> {
    options.validate()?;
    ensure_points(5, horizon)?;
    let ar2_owned;
    let ar2 = match ar2.and_then(FitResult::ar2) {
        Some(p) => p,
        None => {
            ar2_owned = fit_ar2(series, horizon, options)?;
            ar2_owned.ar2().expect("ar2 fit")
        }
    };
    let data = CondData::new(series, horizon, options.zero_floor)?;
    let ll = |p: &[f64]| data.loglik_unified(&UnifiedParams { alpha: p[0], beta: p[1], w: p[2], u: p[3], v: p[4] });
    let free = UnifiedFace::FREE.slots();

    let mut starts = vec![UnifiedParams { alpha: 1.0, beta: 1.0, w: 0.5, u: 0.5, v: 0.5 }];
    starts.extend(random_unified_starts(options.n_starts.saturating_sub(1), options.rng_seed));
    let inner = FitOptions {
        execution: Execution::Sequential,
        ..*options
    };
    let mut candidates = par::map_slice(options.execution, &starts, |p| simplex_fit(&ll, &p.to_vec(), &free, &inner));
    let spread = {
        let lls: Vec<f64> = candidates.iter().map(|c| c.loglik).filter(|l| l.is_finite()).collect();
        let hi = lls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = lls.iter().copied().fold(f64::INFINITY, f64::min);
        (hi - lo).max(0.0)
    };

    let ar_face = [Slot::Positive, Slot::Positive, Slot::Unit, Slot::Fixed(0.0), Slot::Fixed(0.0)];
    let w0 = ar2.s.clamp(1e-6, 1.0 - 1e-6);
    let ar_cand = simplex_fit(&ll, &[ar2.alpha, ar2.beta, w0, 0.0, 0.0], &ar_face, options);
    let indep_face = [Slot::Positive, Slot::Positive, Slot::Fixed(1.0), Slot::Fixed(1.0), Slot::Fixed(1.0)];
    let indep_cand = simplex_fit(&ll, &[1.0, 1.0, 1.0, 1.0, 1.0], &indep_face, options);
    candidates.push(ar_cand);
    candidates.push(indep_cand);

    let evaluations = candidates.iter().map(|c| c.evaluations).sum();
    let best = pick_best(&candidates);
    let mut result = unified_result(best, &free, 5, evaluations, horizon);
    result.start_spread = Some(spread);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::validate_series;
    use approx::assert_relative_eq;

    #[test]
    fn log_pmf_examples() {
        assert_eq!(poisson_log_pmf(0, 1.0).unwrap(), -1.0);
        assert_eq!(poisson_log_pmf(1, 1.0).unwrap(), -1.0);
        // mpmath: 5 log 3.2 - 3.2 - log 120
        assert_relative_eq!(poisson_log_pmf(5, 3.2).unwrap(), -2.171_737_693_753_642, max_relative = 1e-13);
        assert_eq!(poisson_log_pmf(3, 0.0), Err(Error::NonPositiveMean(0.0)));
        assert!(poisson_log_pmf(3, f64::INFINITY).is_err());
    }

    #[test]
    fn log_pmf_matches_naive_product() {
        for y in 0u64..20 {
            let mu: f64 = 4.7;
            let fact: f64 = (1..=y).map(|k| k as f64).product();
            let naive = (mu.powi(y as i32) * (-mu).exp() / fact).ln();
            assert_relative_eq!(poisson_log_pmf(y, mu).unwrap(), naive, max_relative = 1e-12);
        }
    }

    #[test]
    fn independence_loglik_examples() {
        let s = validate_series(&[7], 0).unwrap();
        let w = Window::new(0, 0).unwrap();
        let p = IndepParams { alpha: 2.0, beta: 3.0, gamma: 7.0 };
        let expected = 7.0 * 7f64.ln() - 7.0 - 5040f64.ln();
        assert_relative_eq!(loglik_independence(&p, &s, w).unwrap(), expected, max_relative = 1e-13);

        let s = validate_series(&[5, 10, 5], 1).unwrap();
        let w = Window::new(-1, 1).unwrap();
        let p = IndepParams { alpha: 1.0, beta: 1.0, gamma: 10.0 };
        let ll = loglik_independence(&p, &s, w).unwrap();
        assert_relative_eq!(ll, -5.559_166_004_358_147, max_relative = 1e-12);
        let termwise: f64 = [(5, 5.0), (10, 10.0), (5, 5.0)]
            .iter()
            .map(|&(y, mu)| poisson_log_pmf(y, mu).unwrap())
            .sum();
        assert_relative_eq!(ll, termwise, max_relative = 1e-14);
    }

    #[test]
    fn score_on_peak_window() {
        let s = validate_series(&[3, 40, 9], 1).unwrap();
        let p = IndepParams { alpha: 0.7, beta: 1.3, gamma: 32.0 };
        let g = score_independence(&p, &s, Window::new(0, 0).unwrap()).unwrap();
        assert_eq!(g.d_alpha, 0.0);
        assert_eq!(g.d_beta, 0.0);
        assert_relative_eq!(g.d_gamma, 40.0 / 32.0 - 1.0, max_relative = 1e-14);
    }

    #[test]
    fn ar2_loglik_examples() {
        let s = validate_series(&[100, 50, 30], 0).unwrap();
        let p = Ar2Params { alpha: 1.0, beta: 1.0, s: 1.0 };
        let ll = loglik_ar2(&p, &s, 2, 0.5).unwrap();
        // mpmath: lp(50, 50) + lp(30, 100/3)
        assert_relative_eq!(ll, -5.671_449_442_929_777, max_relative = 1e-12);

        let t1 = loglik_ar2(&Ar2Params { alpha: 0.4, beta: 2.0, s: 0.3 }, &s, 1, 0.5).unwrap();
        assert_relative_eq!(t1, poisson_log_pmf(50, 100.0 / 1.4f64.powi(2)).unwrap(), max_relative = 1e-13);
        assert!(matches!(loglik_ar2(&p, &s, 3, 0.5), Err(Error::HorizonOutOfRange { .. })));
    }

    #[test]
    fn unified_loglik_matches_termwise_oracle() {
        let s = validate_series(&[400, 170, 0, 60, 41, 22], 0).unwrap();
        let p = UnifiedParams { alpha: 0.8, beta: 1.6, w: 0.35, u: 0.4, v: 0.75 };
        let floor = 0.5;
        let ll = loglik_unified(&p, &s, 5, floor).unwrap();

        // Written out directly from the model definition.
        let y = [400.0, 170.0, 0.0, 60.0, 41.0, 22.0];
        let z: Vec<f64> = y.iter().map(|&v: &f64| v.max(floor)).collect();
        let (a, b) = (p.alpha, p.beta);
        let mut oracle = poisson_log_pmf(170, z[0] / (a + 1.0).powf(b)).unwrap();
        for m in 2..=5usize {
            let mf = m as f64;
            let t1 = (z[0] / ((mf - 1.0) * a + 1.0).powf(b)).powf(p.u)
                * z[m - 1].powf(1.0 - p.u)
                * (((mf - 1.0) * a + 1.0) / (mf * a + 1.0)).powf(b);
            let t2 = (z[0] / ((mf - 2.0) * a + 1.0).powf(b)).powf(p.v)
                * z[m - 2].powf(1.0 - p.v)
                * (((mf - 2.0) * a + 1.0) / (mf * a + 1.0)).powf(b);
            let mu = p.w * t1 + (1.0 - p.w) * t2;
            oracle += poisson_log_pmf(y[m] as u64, mu).unwrap();
        }
        assert_relative_eq!(ll, oracle, max_relative = 1e-12);
    }

    #[test]
    fn unified_reductions_on_likelihood() {
        let s = validate_series(&[900, 400, 210, 160, 90, 70, 41], 0).unwrap();
        for &w in &[0.0, 0.3, 1.0] {
            let a = loglik_unified(&UnifiedParams { alpha: 0.9, beta: 1.4, w, u: 0.0, v: 0.0 }, &s, 6, 0.5).unwrap();
            let b = loglik_ar2(&Ar2Params { alpha: 0.9, beta: 1.4, s: w }, &s, 6, 0.5).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
        let a = loglik_unified(&UnifiedParams { alpha: 0.9, beta: 1.4, w: 0.4, u: 1.0, v: 1.0 }, &s, 6, 0.5).unwrap();
        let b: f64 = (1..=6)
            .map(|m| poisson_log_pmf(s.counts()[m], 900.0 / (m as f64 * 0.9 + 1.0).powf(1.4)).unwrap())
            .sum();
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    fn noiseless(alpha: f64, beta: f64, gamma: f64, half: i64) -> EventSeries {
        let p = IndepParams { alpha, beta, gamma };
        let counts: Vec<u64> = (-half..=half)
            .map(|t| crate::models::power_decay_mean(&p, t).round() as u64)
            .collect();
        EventSeries::new(counts, half).unwrap()
    }

    #[test]
    fn independence_recovers_noiseless_truth() {
        let s = noiseless(1.0, 1.5, 10_000.0, 14);
        let fit = fit_independence(&s, Window::symmetric(14), &FitOptions::default()).unwrap();
        assert!(fit.converged, "{fit:?}");
        let p = fit.indep().unwrap();
        assert!((p.alpha - 1.0).abs() < 0.02);
        assert!((p.beta - 1.5).abs() < 0.03);
        assert!((p.gamma / 10_000.0 - 1.0).abs() < 0.02);
        let g = score_independence(&p, &s, Window::symmetric(14)).unwrap();
        assert!(g.d_gamma.abs() * p.gamma < 1e-4 && g.d_alpha.abs() < 1e-3 && g.d_beta.abs() < 1e-3);
    }

    #[test]
    fn independence_needs_three_points() {
        let s = validate_series(&[5, 100, 7], 1).unwrap();
        assert_eq!(
            fit_independence(&s, Window::new(0, 0).unwrap(), &FitOptions::default()).unwrap_err(),
            Error::TooFewPoints { needed: 3, got: 1 }
        );
    }

    #[test]
    fn asymmetric_on_symmetric_data() {
        let s = noiseless(1.2, 1.4, 50_000.0, 10);
        let fit = fit_asymmetric(&s, 7, 10, &FitOptions::default()).unwrap();
        let (b, a) = (fit.before.indep().unwrap(), fit.after.indep().unwrap());
        assert_eq!(a.gamma.to_bits(), fit.gamma_shared.to_bits());
        assert_eq!(b.gamma.to_bits(), fit.gamma_shared.to_bits());
        assert!((b.alpha - a.alpha).abs() < 0.02 * a.alpha, "{b:?} {a:?}");
        assert!((b.beta - a.beta).abs() < 0.02 * a.beta);
        assert_eq!(fit.after.n_params, 2);
    }

    #[test]
    fn asymmetric_errors() {
        let s = noiseless(1.2, 1.4, 50_000.0, 10);
        assert_eq!(
            fit_asymmetric(&s, 7, 0, &FitOptions::default()).unwrap_err(),
            Error::TooFewPoints { needed: 2, got: 0 }
        );
        assert!(matches!(
            fit_asymmetric(&s, 11, 3, &FitOptions::default()),
            Err(Error::WindowOutOfRange { .. })
        ));
    }

    #[test]
    fn conditional_fits_need_enough_horizon() {
        let s = validate_series(&[100, 50, 30, 20, 12, 9], 0).unwrap();
        let o = FitOptions::default();
        assert_eq!(fit_ar2(&s, 2, &o).unwrap_err(), Error::TooFewPoints { needed: 3, got: 2 });
        assert_eq!(fit_ar1(&s, 1, &o).unwrap_err(), Error::TooFewPoints { needed: 2, got: 1 });
        assert_eq!(fit_unified(&s, 4, &o).unwrap_err(), Error::TooFewPoints { needed: 5, got: 4 });
        assert!(matches!(fit_ar2(&s, 6, &o), Err(Error::HorizonOutOfRange { .. })));
    }

    #[test]
    fn face_parameter_counts() {
        assert_eq!(UnifiedFace::FREE.n_params(), 5);
        let w1 = UnifiedFace { w: Some(1.0), ..UnifiedFace::FREE };
        assert_eq!(w1.n_params(), 3);
        assert_eq!(UnifiedFace { u: Some(1.0), ..w1 }.n_params(), 2);
        assert_eq!(UnifiedFace { u: Some(0.0), ..w1 }.n_params(), 2);
        assert_eq!(UnifiedFace { w: None, u: Some(0.0), v: Some(0.0) }.n_params(), 3);
    }

    #[test]
    fn transforms_round_trip() {
        let slots = [Slot::Positive, Slot::Unit, Slot::Fixed(0.25)];
        let nat = [3.5, 0.2, 0.25];
        let back = to_natural(&to_internal(&nat, &slots), &slots);
        for (a, b) in nat.iter().zip(&back) {
            assert_relative_eq!(a, b, max_relative = 1e-14);
        }
    }

    #[test]
    fn options_validation() {
        let o = FitOptions { zero_floor: 0.0, ..FitOptions::default() };
        assert!(o.validate().is_err());
        let o = FitOptions { n_starts: 0, ..FitOptions::default() };
        assert!(o.validate().is_err());
    }
}
