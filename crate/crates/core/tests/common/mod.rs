//! Helpers shared by the integration-test targets.
#![allow(dead_code)]

use decaypois::params::IndepParams;
use decaypois::series::{EventSeries, Window};

/// `l(p1) - l(p0)` for the independence model, summed term by term as
/// `y * dlog(mu) - mu0 * expm1(dlog(mu))`, with `dlog(mu)` built from
/// `ln_1p` of the parameter increments. The plain difference of two
/// log-likelihoods loses every digit below `eps * |l|`, which at large
/// `gamma` swamps a finite-difference quotient.
pub fn loglik_increment(p0: &IndepParams, p1: &IndepParams, series: &EventSeries, window: Window) -> f64 {
    let mut acc = 0.0;
    for (t, y) in series.relative_window_slice(window).unwrap() {
        let d = t.unsigned_abs() as f64;
        let l0 = (p0.alpha * d).ln_1p();
        let l1 = (p1.alpha * d).ln_1p();
        let dl = ((p1.alpha - p0.alpha) * d / (1.0 + p0.alpha * d)).ln_1p();
        let dlog_mu = ((p1.gamma - p0.gamma) / p0.gamma).ln_1p() - ((p1.beta - p0.beta) * l1 + p0.beta * dl);
        let mu0 = p0.gamma * (-p0.beta * l0).exp();
        acc += y as f64 * dlog_mu - mu0 * dlog_mu.exp_m1();
    }
    acc
}

/// Five-point central differences of the independence log-likelihood with
/// step `h = 1e-5 * (1 + |theta|)` per coordinate, ordered
/// `(alpha, beta, gamma)`. The fourth-order stencil matters at large
/// `gamma`: third derivatives scale with `gamma`, and the three-point
/// quotient's `h^2/6` bias would sit far above `1e-6` relative.
pub fn central_difference_score(p: &IndepParams, series: &EventSeries, window: Window) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (i, o) in out.iter_mut().enumerate() {
        let x = p.to_vec()[i];
        let h = 1e-5 * (1.0 + x.abs());
        let inc = |delta: f64| {
            let mut v = p.to_vec();
            v[i] += delta;
            loglik_increment(p, &IndepParams { alpha: v[0], beta: v[1], gamma: v[2] }, series, window)
        };
        *o = (8.0 * (inc(h) - inc(-h)) - (inc(2.0 * h) - inc(-2.0 * h))) / (12.0 * h);
    }
    out
}
