//! Unconstrained minimizers used by the fitters.
//!
//! [`bfgs`] is a quasi-Newton method with a strong-Wolfe line search, used
//! where an analytic gradient exists. [`nelder_mead`] is a derivative-free
//! simplex search with restarts. Both minimize; non-finite objective values
//! are treated as `+inf`.

/// Outcome of a minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
    /// Infinity norm of the final gradient, when one is available.
    pub gradient_norm: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsSettings {
    /// Stop when `|grad|_inf <= grad_tol * max(1, |f|)`.
    pub grad_tol: f64,
    pub max_evals: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexSettings {
    /// Stop when every vertex lies within `x_tol` of the best one.
    pub x_tol: f64,
    pub max_evals: usize,
    /// Edge length of the initial simplex.
    pub initial_step: f64,
    /// Fresh simplices built around the best point after convergence.
    pub restarts: usize,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn axpy(x: &[f64], step: f64, dir: &[f64]) -> Vec<f64> {
    x.iter().zip(dir).map(|(a, d)| a + step * d).collect()
}

struct Counted<F> {
    f: F,
    evals: usize,
}

impl<F: FnMut(&[f64]) -> (f64, Vec<f64>)> Counted<F> {
    fn call(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
        self.evals += 1;
        let (v, g) = (self.f)(x);
        let v = sanitize(v);
        if v.is_finite() && g.iter().all(|d| d.is_finite()) {
            (v, g)
        } else {
            (f64::INFINITY, g)
        }
    }
}

/// Quasi-Newton minimization; `fg` returns the value and the gradient.
pub fn bfgs<F>(fg: F, x0: &[f64], settings: BfgsSettings) -> Minimum
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut obj = Counted { f: fg, evals: 0 };
    let mut x = x0.to_vec();
    let (mut f, mut g) = obj.call(&x);
    let mut h = identity(n);
    let mut first = true;

    let tol = |f: f64| settings.grad_tol * f.abs().max(1.0);

    if !f.is_finite() {
        return Minimum {
            x,
            value: f,
            evaluations: obj.evals,
            converged: false,
            gradient_norm: None,
        };
    }

    loop {
        let gnorm = inf_norm(&g);
        if gnorm <= tol(f) {
            return Minimum {
                x,
                value: f,
                evaluations: obj.evals,
                converged: true,
                gradient_norm: Some(gnorm),
            };
        }
        if obj.evals >= settings.max_evals {
            break;
        }

        let mut dir = mat_vec(&h, &g).into_iter().map(|d| -d).collect::<Vec<_>>();
        if dot(&dir, &g) >= 0.0 {
            h = identity(n);
            dir = g.iter().map(|d| -d).collect();
        }

        let Some((step, f_new, g_new)) = wolfe_search(&mut obj, &x, f, &g, &dir, settings.max_evals)
        else {
            if h != identity(n) {
                // Retry once along steepest descent before giving up.
                h = identity(n);
                first = true;
                continue;
            }
            break;
        };

        let s: Vec<f64> = dir.iter().map(|d| step * d).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        x = axpy(&x, 1.0, &s);
        let f_prev = f;
        f = f_new;
        g = g_new;

        if sy > 1e-300 {
            if first {
                let scale = sy / dot(&y, &y);
                h = identity(n);
                for (i, row) in h.iter_mut().enumerate() {
                    row[i] = scale;
                }
                first = false;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }

        // Progress has stalled at machine precision.
        if (f_prev - f).abs() <= f64::EPSILON * f.abs() && inf_norm(&s) <= f64::EPSILON * (1.0 + inf_norm(&x)) {
            break;
        }
    }

    let gnorm = inf_norm(&g);
    Minimum {
        converged: gnorm <= tol(f),
        x,
        value: f,
        evaluations: obj.evals,
        gradient_norm: Some(gnorm),
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

/// Inverse-Hessian update `H <- (I - r s y^T) H (I - r y s^T) + r s s^T`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y);
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
/// Relative size of objective noise tolerated by the approximate Wolfe test.
const F_NOISE: f64 = 1e-10;

/// Approximate Wolfe conditions (Hager & Zhang): the slope has shrunk from
/// `d0` to within `[C2 d0, -0.8 d0]` and `f` has not risen beyond rounding
/// noise. Near an optimum with strong curvature, objective differences
/// drop below rounding while the gradient is still accurate; this test lets
/// the search keep making progress on the gradient alone.
fn approx_wolfe(f: f64, d: f64, f0: f64, d0: f64) -> bool {
    f <= f0 + F_NOISE * f0.abs().max(1.0) && d >= C2 * d0 && d <= -0.8 * d0
}

/// Strong-Wolfe line search (bracketing then zoom by safeguarded
/// quadratic interpolation), with the approximate Wolfe test as a fallback
/// acceptance rule.
fn wolfe_search<F>(
    obj: &mut Counted<F>,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    dir: &[f64],
    max_evals: usize,
) -> Option<(f64, f64, Vec<f64>)>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let d0 = dot(g0, dir);
    if d0 >= 0.0 {
        return None;
    }

    let eval = |obj: &mut Counted<F>, a: f64| {
        let (f, g) = obj.call(&axpy(x, a, dir));
        let d = dot(&g, dir);
        (f, g, d)
    };

    let mut a_prev = 0.0;
    let mut f_prev = f0;
    let mut d_prev = d0;
    let mut a = 1.0;

    for iter in 0..60 {
        if obj.evals >= max_evals {
            return None;
        }
        let (f, g, d) = eval(obj, a);
        if !f.is_finite() {
            a = a_prev + 0.25 * (a - a_prev);
            continue;
        }
        if approx_wolfe(f, d, f0, d0) {
            return Some((a, f, g));
        }
        if f > f0 + C1 * a * d0 || (iter > 0 && f >= f_prev) {
            return zoom(obj, x, f0, d0, dir, (a_prev, f_prev, d_prev), (a, f), max_evals);
        }
        if d.abs() <= -C2 * d0 {
            return Some((a, f, g));
        }
        if d >= 0.0 {
            return zoom(obj, x, f0, d0, dir, (a, f, d), (a_prev, f_prev), max_evals);
        }
        a_prev = a;
        f_prev = f;
        d_prev = d;
        a *= 2.0;
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn zoom<F>(
    obj: &mut Counted<F>,
    x: &[f64],
    f0: f64,
    d0: f64,
    dir: &[f64],
    lo: (f64, f64, f64),
    hi: (f64, f64),
    max_evals: usize,
) -> Option<(f64, f64, Vec<f64>)>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (mut a_lo, mut f_lo, mut d_lo) = lo;
    let (mut a_hi, mut f_hi) = hi;
    let mut best: Option<(f64, f64, Vec<f64>)> = None;

    for _ in 0..60 {
        if obj.evals >= max_evals {
            break;
        }
        // Minimizer of the quadratic through (a_lo, f_lo, d_lo) and (a_hi, f_hi).
        let width = a_hi - a_lo;
        let denom = 2.0 * (f_hi - f_lo - d_lo * width);
        let mut a = if denom.is_finite() && denom > 0.0 {
            a_lo - d_lo * width * width / denom
        } else {
            a_lo + 0.5 * width
        };
        let (lo_b, hi_b) = if a_lo < a_hi { (a_lo, a_hi) } else { (a_hi, a_lo) };
        let margin = 0.1 * (hi_b - lo_b);
        if !(a > lo_b + margin && a < hi_b - margin) {
            a = 0.5 * (a_lo + a_hi);
        }

        let (f, g) = obj.call(&axpy(x, a, dir));
        let d = dot(&g, dir);
        if f.is_finite() && approx_wolfe(f, d, f0, d0) {
            return Some((a, f, g));
        }
        if f.is_finite() && f < f0 && best.as_ref().is_none_or(|b| f < b.1) {
            best = Some((a, f, g.clone()));
        }
        if !f.is_finite() || f > f0 + C1 * a * d0 || f >= f_lo {
            a_hi = a;
            f_hi = f;
        } else {
            if d.abs() <= -C2 * d0 {
                return Some((a, f, g));
            }
            if d * (a_hi - a_lo) >= 0.0 {
                a_hi = a_lo;
                f_hi = f_lo;
            }
            a_lo = a;
            f_lo = f;
            d_lo = d;
        }
        if (a_hi - a_lo).abs() <= 1e-16 * a_lo.abs().max(1e-16) {
            break;
        }
    }
    // Accept any sufficient decrease found on the way.
    best.filter(|b| b.1 <= f0 + C1 * b.0 * d0)
}

/// Derivative-free simplex minimization with restarts.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], settings: SimplexSettings) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut call = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        sanitize(f(x))
    };

    if n == 0 {
        let value = call(x0, &mut evals);
        return Minimum {
            x: Vec::new(),
            value,
            evaluations: evals,
            converged: true,
            gradient_norm: None,
        };
    }

    let mut best_x = x0.to_vec();
    let mut best_f = call(x0, &mut evals);
    let mut converged = false;

    for round in 0..=settings.restarts {
        let (x, fx, ok) = simplex_run(&mut call, &best_x, best_f, settings, &mut evals);
        let improved = fx < best_f - 1e-12 * best_f.abs().max(1.0);
        if fx <= best_f {
            best_x = x;
            best_f = fx;
        }
        converged = ok;
        if !ok || (round > 0 && !improved) {
            break;
        }
    }

    Minimum {
        x: best_x,
        value: best_f,
        evaluations: evals,
        converged,
        gradient_norm: None,
    }
}

fn simplex_run<C>(
    call: &mut C,
    x0: &[f64],
    f0: f64,
    settings: SimplexSettings,
    evals: &mut usize,
) -> (Vec<f64>, f64, bool)
where
    C: FnMut(&[f64], &mut usize) -> f64,
{
    let n = x0.len();
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut vals: Vec<f64> = Vec::with_capacity(n + 1);
    pts.push(x0.to_vec());
    vals.push(f0);
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += settings.initial_step;
        vals.push(call(&p, evals));
        pts.push(p);
    }

    loop {
        // Sort vertices best first; ties keep their index order.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let diameter = pts[1..]
            .iter()
            .map(|p| inf_norm(&p.iter().zip(&pts[0]).map(|(a, b)| a - b).collect::<Vec<_>>()))
            .fold(0.0f64, f64::max);
        if diameter < settings.x_tol {
            return (pts[0].clone(), vals[0], true);
        }
        if *evals >= settings.max_evals {
            return (pts[0].clone(), vals[0], false);
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| pts[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&pts[n])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(1.0);
        let fr = call(&xr, evals);
        if fr < vals[0] {
            let xe = along(2.0);
            let fe = call(&xe, evals);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[n] {
            let xc = along(0.5);
            let fc = call(&xc, evals);
            (xc, fc)
        } else {
            let xc = along(-0.5);
            let fc = call(&xc, evals);
            (xc, fc)
        };
        if fc < vals[n].min(fr) {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        // Shrink toward the best vertex.
        for i in 1..=n {
            let p: Vec<f64> = pts[i]
                .iter()
                .zip(&pts[0])
                .map(|(a, b)| b + 0.5 * (a - b))
                .collect();
            vals[i] = call(&p, evals);
            pts[i] = p;
        }
    }
}
