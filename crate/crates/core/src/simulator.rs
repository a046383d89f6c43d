//! Parametric simulation of event series.
//!
//! Replicate `i` draws from a ChaCha8 stream keyed by `(seed, i)`, so the
//! output does not depend on how replicates are scheduled.
//!
//! Poisson variates come from sequential-search inversion when the mean is
//! below 30 and from Hörmann's PTRS transformed rejection otherwise. Both
//! consume uniforms from the stream in a fixed pattern; changing either
//! algorithm changes every seeded stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::models::{
    ar1_first_step_mean, ar2_mean_unchecked, floor_lag, power_decay_mean, unified_conditional_mean,
    DEFAULT_ZERO_FLOOR,
};
use crate::par::{self, Execution};
use crate::params::{Ar2Params, IndepParams, UnifiedParams};
use crate::series::{EventSeries, Window};

/// Generating model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum SimModel {
    /// Independent Poisson counts. `after`, when present, gives the
    /// `(alpha, beta)` used for `t > t0`, with `gamma` shared.
    Independence {
        params: IndepParams,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        after: Option<(f64, f64)>,
    },
    Ar1 { alpha: f64, beta: f64, y_t0: u64 },
    Ar2 { params: Ar2Params, y_t0: u64 },
    Unified { params: UnifiedParams, y_t0: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub model: SimModel,
    /// Offsets to generate. Conditional models generate `t > t0` from
    /// their recursion; pre-event offsets come from the independence model
    /// with `gamma = y_t0` and the same `(alpha, beta)`.
    pub window: Window,
    pub rng_seed: u64,
    pub n_replicates: usize,
    #[serde(default = "default_floor")]
    pub zero_floor: f64,
    #[serde(skip, default)]
    pub execution: Execution,
}

fn default_floor() -> f64 {
    DEFAULT_ZERO_FLOOR
}

impl SimConfig {
    pub fn new(model: SimModel, window: Window, rng_seed: u64, n_replicates: usize) -> Self {
        Self {
            model,
            window,
            rng_seed,
            n_replicates,
            zero_floor: DEFAULT_ZERO_FLOOR,
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_replicates == 0 {
            return Err(Error::InvalidConfig("n_replicates must be at least 1".into()));
        }
        if self.window.lo > 0 || self.window.hi < 0 {
            return Err(Error::InvalidConfig("window must contain the event day (offset 0)".into()));
        }
        if !(self.zero_floor > 0.0) || !self.zero_floor.is_finite() {
            return Err(Error::InvalidConfig("zero floor must be positive".into()));
        }
        match self.model {
            SimModel::Independence { params, after } => {
                params.validate()?;
                if let Some((a, b)) = after {
                    IndepParams::new(a, b, params.gamma)?;
                }
            }
            SimModel::Ar1 { alpha, beta, .. } => {
                Ar2Params::ar1(alpha, beta)?;
            }
            SimModel::Ar2 { params, .. } => params.validate()?,
            SimModel::Unified { params, .. } => params.validate()?,
        }
        Ok(())
    }
}

/// Stream for replicate `index` of `seed`.
pub fn replicate_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// One Poisson variate with mean `mu`.
pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mu: f64) -> u64 {
    if !(mu > 0.0) {
        return 0;
    }
    if mu < 30.0 {
        poisson_inversion(rng, mu)
    } else {
        poisson_ptrs(rng, mu)
    }
}

fn poisson_inversion<R: Rng + ?Sized>(rng: &mut R, mu: f64) -> u64 {
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-mu).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= mu / k as f64;
        let next = cdf + p;
        if next == cdf {
            break;
        }
        cdf = next;
    }
    k
}

/// Transformed rejection with squeeze (Hörmann 1993), for `mu >= 10`.
fn poisson_ptrs<R: Rng + ?Sized>(rng: &mut R, mu: f64) -> u64 {
    let ln_mu = mu.ln();
    let smu = mu.sqrt();
    let b = 0.931 + 2.53 * smu;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mu + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        if v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln() <= -mu + k * ln_mu - ln_gamma(k + 1.0) {
            return k as u64;
        }
    }
}

fn build_series(counts: Vec<u64>, window: Window) -> EventSeries {
    let labels = window.offsets().map(|t| t.to_string()).collect();
    EventSeries::new(counts, -window.lo)
        .and_then(|s| s.with_labels(labels))
        .expect("window contains the event day")
}

fn independence_path(rng: &mut ChaCha8Rng, params: &IndepParams, after: Option<(f64, f64)>, window: Window) -> Vec<u64> {
    window
        .offsets()
        .map(|t| {
            let p = match after {
                Some((alpha, beta)) if t > 0 => IndepParams { alpha, beta, ..*params },
                _ => *params,
            };
            sample_poisson(rng, power_decay_mean(&p, t))
        })
        .collect()
}

/// Pre-event counts from the independence model anchored at `y_t0`, then
/// `y_t0` itself, then the conditional recursion for `t > 0`.
fn conditional_path<M>(rng: &mut ChaCha8Rng, alpha: f64, beta: f64, y_t0: u64, window: Window, floor: f64, mean: M) -> Vec<u64>
where
    M: Fn(&[f64], usize) -> f64,
{
    let mut out = Vec::with_capacity(window.len());
    let pre = IndepParams { alpha, beta, gamma: y_t0 as f64 };
    for t in window.lo..0 {
        out.push(sample_poisson(rng, power_decay_mean(&pre, t)));
    }
    out.push(y_t0);
    // z holds floored regressors z_0 = max(y_t0, floor), z_1, ...
    let mut z = vec![floor_lag(y_t0 as f64, floor)];
    for m in 1..=window.hi.max(0) as usize {
        let mu = if m == 1 {
            ar1_first_step_mean(alpha, beta, z[0])
        } else {
            mean(&z, m)
        };
        let y = sample_poisson(rng, mu);
        out.push(y);
        z.push(floor_lag(y as f64, floor));
    }
    out
}

fn generate(config: &SimConfig, index: usize) -> EventSeries {
    let mut rng = replicate_rng(config.rng_seed, index);
    let w = config.window;
    let floor = config.zero_floor;
    let counts = match config.model {
        SimModel::Independence { params, after } => independence_path(&mut rng, &params, after, w),
        SimModel::Ar1 { alpha, beta, y_t0 } => {
            let p = Ar2Params { alpha, beta, s: 1.0 };
            conditional_path(&mut rng, alpha, beta, y_t0, w, floor, |z, m| ar2_mean_unchecked(&p, z[m - 1], z[m - 2], m))
        }
        SimModel::Ar2 { params: p, y_t0 } => {
            conditional_path(&mut rng, p.alpha, p.beta, y_t0, w, floor, |z, m| ar2_mean_unchecked(&p, z[m - 1], z[m - 2], m))
        }
        SimModel::Unified { params: p, y_t0 } => conditional_path(&mut rng, p.alpha, p.beta, y_t0, w, floor, |z, m| {
            unified_conditional_mean(&p, z[0], z[m - 1], z[m - 2], m).expect("floored regressors are positive")
        }),
    };
    build_series(counts, w)
}

/// Any model, dispatched on `config.model`.
pub fn simulate(config: &SimConfig) -> Result<Vec<EventSeries>> {
    config.validate()?;
    Ok(par::map_indexed(config.execution, config.n_replicates, |i| generate(config, i)))
}

fn wrong_model(expected: &str) -> Error {
    Error::InvalidConfig(format!("configuration is not for the {expected} model"))
}

pub fn simulate_independence(config: &SimConfig) -> Result<Vec<EventSeries>> {
    match config.model {
        SimModel::Independence { .. } => simulate(config),
        _ => Err(wrong_model("independence")),
    }
}

/// AR(1) or AR(2) paths.
pub fn simulate_ar(config: &SimConfig) -> Result<Vec<EventSeries>> {
    match config.model {
        SimModel::Ar1 { .. } | SimModel::Ar2 { .. } => simulate(config),
        _ => Err(wrong_model("ar1/ar2")),
    }
}

pub fn simulate_unified(config: &SimConfig) -> Result<Vec<EventSeries>> {
    match config.model {
        SimModel::Unified { .. } => simulate(config),
        _ => Err(wrong_model("unified")),
    }
}

/// Writes a series as `label,count` CSV with a `day,count` header.
pub fn write_csv<W: std::io::Write>(series: &EventSeries, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    wtr.write_record(["day", "count"]).map_err(io)?;
    for (i, c) in series.counts().iter().enumerate() {
        let label = match series.labels() {
            Some(l) => l[i].clone(),
            None => (i as i64 - series.t0_index() as i64).to_string(),
        };
        wtr.write_record([label, c.to_string()]).map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn poisson_moments_both_branches() {
        for &mu in &[0.3, 4.0, 29.5, 30.0, 250.0, 1e5] {
            let mut rng = replicate_rng(7, 0);
            let xs: Vec<f64> = (0..40_000).map(|_| sample_poisson(&mut rng, mu) as f64).collect();
            let (m, v) = mean_var(&xs);
            let se = (mu / xs.len() as f64).sqrt();
            assert!((m - mu).abs() < 5.0 * se, "mu {mu}: mean {m}");
            assert!((v / mu - 1.0).abs() < 0.05, "mu {mu}: var {v}");
        }
    }

    #[test]
    fn poisson_small_mean_pmf() {
        // Frequencies against the exact pmf at mu = 2.
        let mut rng = replicate_rng(11, 3);
        let n = 200_000;
        let mut hist = [0usize; 8];
        for _ in 0..n {
            let k = sample_poisson(&mut rng, 2.0) as usize;
            if k < 8 {
                hist[k] += 1;
            }
        }
        let mut p = (-2.0f64).exp();
        for (k, &h) in hist.iter().enumerate() {
            if k > 0 {
                p *= 2.0 / k as f64;
            }
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((h as f64 / n as f64 - p).abs() < 5.0 * se, "k={k}");
        }
    }

    #[test]
    fn zero_mean_gives_zero() {
        let mut rng = replicate_rng(1, 0);
        assert_eq!(sample_poisson(&mut rng, 0.0), 0);
    }

    fn indep_config(gamma: f64, beta: f64, window: Window, n: usize) -> SimConfig {
        SimConfig::new(
            SimModel::Independence {
                params: IndepParams { alpha: 1.0, beta, gamma },
                after: None,
            },
            window,
            42,
            n,
        )
    }

    #[test]
    fn peak_mean_law_of_large_numbers() {
        let cfg = indep_config(1e6, 1.0, Window::new(0, 0).unwrap(), 10_000);
        let reps = simulate_independence(&cfg).unwrap();
        let m = reps.iter().map(|s| s.peak() as f64).sum::<f64>() / reps.len() as f64;
        assert!((m / 1e6 - 1.0).abs() < 0.005);
    }

    #[test]
    fn flat_generator_has_poisson_variance() {
        let cfg = indep_config(400.0, 1e-12, Window::new(-2, 2).unwrap(), 10_000);
        let reps = simulate(&cfg).unwrap();
        for j in 0..5 {
            let xs: Vec<f64> = reps.iter().map(|s| s.counts()[j] as f64).collect();
            let (m, v) = mean_var(&xs);
            assert!((m / 400.0 - 1.0).abs() < 0.01);
            assert!((0.95..=1.05).contains(&(v / m)));
        }
    }

    #[test]
    fn deterministic_and_schedule_independent() {
        let mut cfg = indep_config(5000.0, 1.5, Window::new(-7, 14).unwrap(), 64);
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        cfg.execution = Execution::Sequential;
        let c = simulate(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        cfg.rng_seed += 1;
        assert_ne!(simulate(&cfg).unwrap(), a);
    }

    #[test]
    fn unified_with_zero_weights_reproduces_ar2_paths() {
        let w = Window::new(-3, 20).unwrap();
        let ar = SimConfig::new(
            SimModel::Ar2 { params: Ar2Params { alpha: 0.7, beta: 1.6, s: 0.4 }, y_t0: 20_000 },
            w,
            9,
            20,
        );
        let uni = SimConfig::new(
            SimModel::Unified {
                params: UnifiedParams { alpha: 0.7, beta: 1.6, w: 0.4, u: 0.0, v: 0.0 },
                y_t0: 20_000,
            },
            w,
            9,
            20,
        );
        assert_eq!(simulate_ar(&ar).unwrap(), simulate_unified(&uni).unwrap());
    }

    #[test]
    fn zero_peak_uses_floored_anchor() {
        // y_t0 = 0 is floored to 0.5, so E[y_1] = 0.5 / (alpha + 1)^beta.
        let cfg = SimConfig::new(SimModel::Ar1 { alpha: 1.0, beta: 1.0, y_t0: 0 }, Window::new(0, 5).unwrap(), 5, 20_000);
        let reps = simulate_ar(&cfg).unwrap();
        let m = reps.iter().map(|s| s.counts()[1] as f64).sum::<f64>() / reps.len() as f64;
        assert!((m - 0.25).abs() < 5.0 * (0.25f64 / 20_000.0).sqrt(), "{m}");
        assert!(reps.iter().all(|s| s.counts()[0] == 0));
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = indep_config(10.0, 1.0, Window::new(-1, 1).unwrap(), 0);
        assert!(simulate(&cfg).is_err());
        cfg.n_replicates = 1;
        assert!(simulate_ar(&cfg).is_err());
        cfg.window = Window::new(1, 3).unwrap();
        assert!(simulate(&cfg).is_err());
    }

    #[test]
    fn asymmetric_generator_uses_after_shape() {
        let cfg = SimConfig::new(
            SimModel::Independence {
                params: IndepParams { alpha: 1.0, beta: 0.5, gamma: 1e6 },
                after: Some((1.0, 3.0)),
            },
            Window::new(-3, 3).unwrap(),
            3,
            1,
        );
        let s = &simulate(&cfg).unwrap()[0];
        // After side decays as 4^-3, before side as 4^-0.5.
        assert!(s.counts()[6] < s.counts()[0] / 10);
    }

    #[test]
    fn csv_output_layout() {
        let s = EventSeries::new(vec![3, 9, 4], 1).unwrap();
        let mut buf = Vec::new();
        write_csv(&s, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "day,count\n-1,3\n0,9\n1,4\n");
    }
}
