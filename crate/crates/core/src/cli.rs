//! Command-line front end: CSV ingestion, fit orchestration, JSON and
//! table reports, plot data and simulation output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::{fit_ar1, fit_ar2, fit_asymmetric, fit_unified, FitOptions, FitResult};
use crate::models::{ar1_first_step_mean, ar2_conditional_mean, floor_lag, power_decay_mean};
use crate::params::{Ar2Params, IndepParams, ModelParams, UnifiedParams};
use crate::selection::{aic, compare_models, CompareOptions, ModelComparison};
use crate::series::{EventSeries, Window};
use crate::simulator::{simulate, write_csv, SimConfig, SimModel};
use crate::uncertainty::{confidence_intervals, fisher_independence, ConfidenceIntervals, FisherMatrix};

/// Exit code for a fit that did not converge (the report is still written).
pub const EXIT_NONCONVERGENCE: i32 = 1;
/// Exit code for input or configuration errors.
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "decaypois", version, about = "Power-law decay Poisson models for event-centered count series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit models to a `label,count` CSV series.
    Fit(FitArgs),
    /// Generate synthetic series.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelChoice {
    All,
    Indep,
    Ar1,
    Ar2,
    Unified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Table,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Input CSV (`label,count`, header optional).
    pub input: PathBuf,
    /// Event day: a row label, or a 0-based row index. Defaults to the
    /// largest count.
    #[arg(long)]
    pub t0: Option<String>,
    #[arg(long, default_value_t = 7)]
    pub before_days: usize,
    /// Days after the event (default: all available).
    #[arg(long)]
    pub after_days: Option<usize>,
    /// Horizon for the conditional models (default: after-days).
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long, value_enum, default_value_t = ModelChoice::All)]
    pub model: ModelChoice,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, env = "DECAYPOIS_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Zero-count floor for lagged regressors.
    #[arg(long, default_value_t = crate::models::DEFAULT_ZERO_FLOOR)]
    pub delta: f64,
    /// Also report the independence model in the AIC table (not comparable).
    #[arg(long)]
    pub include_independence: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Write per-offset observed and fitted values as CSV.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimModelChoice {
    Independence,
    Ar1,
    Ar2,
    Unified,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// JSON `SimConfig`; replaces the model and window flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SimModelChoice::Independence)]
    pub model: SimModelChoice,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Peak level (independence model).
    #[arg(long, default_value_t = 1000.0)]
    pub gamma: f64,
    /// After-event alpha (independence model; default: alpha).
    #[arg(long)]
    pub alpha_after: Option<f64>,
    /// After-event beta (independence model; default: beta).
    #[arg(long)]
    pub beta_after: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub s: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w: f64,
    #[arg(long, default_value_t = 1.0)]
    pub u: f64,
    #[arg(long, default_value_t = 1.0)]
    pub v: f64,
    /// Event-day count (conditional models).
    #[arg(long, default_value_t = 1000)]
    pub y_t0: u64,
    #[arg(long, default_value_t = 7)]
    pub before_days: u32,
    #[arg(long, default_value_t = 14)]
    pub after_days: u32,
    #[arg(long, env = "DECAYPOIS_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    #[arg(long, default_value_t = crate::models::DEFAULT_ZERO_FLOOR)]
    pub delta: f64,
    /// Single output file; with several replicates a `replicate` column is
    /// prepended.
    #[arg(long, conflicts_with = "output_dir")]
    pub output: Option<PathBuf>,
    /// Directory receiving one `rep_NNNN.csv` per replicate.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

// ---------------------------------------------------------------- ingest

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Parses `label,count` CSV text. The first row is a header when its count
/// field is not an integer.
pub fn parse_csv(text: &str, t0_spec: Option<&str>) -> Result<(EventSeries, Vec<String>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut labels = Vec::new();
    let mut raw = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(i as u64 + 1, |p| p.line());
        if rec.len() != 2 {
            return Err(parse_err(line, format!("expected 2 fields, found {}", rec.len())));
        }
        let count = rec[1].parse::<i64>();
        if i == 0 && count.is_err() {
            continue;
        }
        let count = count.map_err(|_| parse_err(line, format!("count {:?} is not an integer", &rec[1])))?;
        labels.push(rec[0].to_string());
        raw.push(count);
    }
    if raw.is_empty() {
        return Err(Error::EmptySeries);
    }
    if let Some(i) = raw.iter().position(|&c| c < 0) {
        return Err(Error::NegativeCount(i));
    }

    let mut warnings = Vec::new();
    let t0 = match t0_spec {
        Some(spec) => match labels.iter().position(|l| l == spec) {
            Some(i) => i,
            None => match spec.parse::<usize>() {
                Ok(i) if i < raw.len() => i,
                _ => return Err(Error::T0NotFound(spec.to_string())),
            },
        },
        None => {
            // First maximum, so ties resolve to the earliest day.
            let max = *raw.iter().max().expect("non-empty");
            let i = raw.iter().position(|&c| c == max).expect("max exists");
            warnings.push(format!("no --t0 given; using the largest count at row {i} (label {:?})", labels[i]));
            i
        }
    };
    let counts = raw.into_iter().map(|c| c as u64).collect();
    let series = EventSeries::new(counts, t0 as i64)?.with_labels(labels)?;
    Ok((series, warnings))
}

/// Reads a series from a CSV file; see [`parse_csv`].
pub fn ingest_csv(path: &Path, t0_spec: Option<&str>) -> Result<(EventSeries, Vec<String>)> {
    let text = fs::read_to_string(path)?;
    parse_csv(&text, t0_spec)
}

// ---------------------------------------------------------------- report

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputSummary {
    pub n_points: usize,
    pub t0_index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t0_label: Option<String>,
    pub peak_count: u64,
    pub before_days: usize,
    pub after_days: usize,
    pub horizon: usize,
    pub seed: u64,
    pub zero_floor: f64,
    pub level: f64,
}

/// One stage of the before/after independence fit with its Wald intervals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub fit: FitResult,
    pub aic: f64,
    pub fisher: Option<FisherMatrix>,
    /// Lower bounds clipped at zero.
    pub intervals: Option<ConfidenceIntervals>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndependenceReport {
    pub gamma_shared: f64,
    pub before: StageReport,
    pub after: StageReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalReport {
    pub model: String,
    pub fit: FitResult,
    pub aic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub t: i64,
    pub observed: u64,
    pub fitted_before: Option<f64>,
    pub fitted_after: Option<f64>,
    pub fitted_ar2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub input: InputSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub independence: Option<IndependenceReport>,
    pub conditional: Vec<ConditionalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ModelComparison>,
    pub curve: Vec<CurvePoint>,
    /// True when every reported fit converged.
    pub converged: bool,
    pub warnings: Vec<String>,
}

fn stage(fit: FitResult, fisher: Result<FisherMatrix>, estimates: &[f64], level: f64, warnings: &mut Vec<String>, name: &str) -> StageReport {
    let aic = aic(fit.log_likelihood, fit.n_params);
    let fisher = match fisher {
        Ok(f) => Some(f),
        Err(e) => {
            warnings.push(format!("{name}: {e}"));
            None
        }
    };
    let intervals = fisher.as_ref().and_then(|f| match confidence_intervals(estimates, f, level) {
        Ok(ci) => Some(ci.truncated_at_zero()),
        Err(e) => {
            warnings.push(format!("{name}: no confidence intervals: {e}"));
            None
        }
    });
    StageReport { fit, aic, fisher, intervals }
}

fn independence_report(series: &EventSeries, before: usize, after: usize, opts: &FitOptions, level: f64, warnings: &mut Vec<String>) -> Result<IndependenceReport> {
    let fit = fit_asymmetric(series, before, after, opts)?;
    let b = fit.before.indep().expect("independence fit");
    let a = fit.after.indep().expect("independence fit");
    let before_w = Window::new(-(before as i64), 0)?;
    let after_w = Window::new(0, after as i64)?;
    let fisher_b = Ok(fisher_independence(&b, before_w));
    // gamma is carried over from the before stage, so only (alpha, beta) vary.
    let fisher_a = fisher_independence(&a, after_w)
        .submatrix(&["alpha", "beta"])
        .ok_or_else(|| Error::InvalidConfig("missing Fisher entries".into()));
    Ok(IndependenceReport {
        gamma_shared: fit.gamma_shared,
        before: stage(fit.before, fisher_b, &b.to_vec(), level, warnings, "before"),
        after: stage(fit.after, fisher_a, &[a.alpha, a.beta], level, warnings, "after"),
    })
}

fn conditional(model: &str, fit: FitResult) -> ConditionalReport {
    ConditionalReport {
        model: model.to_string(),
        aic: aic(fit.log_likelihood, fit.n_params),
        fit,
    }
}

/// One-step-ahead AR(2) means for `t = 1..=horizon`.
fn ar2_one_step(series: &EventSeries, p: &Ar2Params, horizon: usize, floor: f64) -> Vec<f64> {
    let y = series.after_event(horizon).expect("horizon validated");
    let z: Vec<f64> = y.iter().map(|&c| floor_lag(c as f64, floor)).collect();
    (1..=horizon)
        .map(|m| {
            if m == 1 {
                ar1_first_step_mean(p.alpha, p.beta, z[0])
            } else {
                ar2_conditional_mean(p, z[m - 1], z[m - 2], m).expect("m >= 2")
            }
        })
        .collect()
}

fn build_curve(series: &EventSeries, before: usize, after: usize, indep: Option<&IndependenceReport>, ar2: Option<(&Ar2Params, usize)>, floor: f64) -> Vec<CurvePoint> {
    let lo = -(before as i64);
    let hi = after.max(ar2.map_or(0, |(_, h)| h)) as i64;
    let ar2_means = ar2.map(|(p, h)| ar2_one_step(series, p, h, floor));
    (lo..=hi)
        .filter_map(|t| {
            let observed = series.at_offset(t)?;
            let fb = indep.filter(|_| t <= 0).and_then(|r| r.before.fit.indep()).map(|p| power_decay_mean(&p, t));
            let fa = indep
                .filter(|_| t >= 0 && t <= after as i64)
                .and_then(|r| r.after.fit.indep())
                .map(|p| power_decay_mean(&p, t));
            let far2 = ar2_means.as_ref().and_then(|m| if t >= 1 { m.get(t as usize - 1).copied() } else { None });
            Some(CurvePoint {
                t,
                observed,
                fitted_before: fb,
                fitted_after: fa,
                fitted_ar2: far2,
            })
        })
        .collect()
}

/// Runs the fitting pipeline selected by `args` on `series`.
pub fn build_report(series: &EventSeries, args: &FitArgs, mut warnings: Vec<String>) -> Result<Report> {
    let opts = FitOptions {
        rng_seed: args.seed,
        zero_floor: args.delta,
        ..FitOptions::default()
    };
    opts.validate()?;
    crate::uncertainty::normal_quantile(args.level)?;
    let available = series.points_after();
    let after = args.after_days.unwrap_or(available);
    if after > available {
        return Err(Error::HorizonOutOfRange { horizon: after, available });
    }
    let horizon = args.horizon.unwrap_or(after);
    if horizon > available {
        return Err(Error::HorizonOutOfRange { horizon, available });
    }
    if args.before_days > series.t0_index() {
        return Err(Error::WindowOutOfRange {
            lo: -(args.before_days as i64),
            hi: 0,
        });
    }

    let want = |m: ModelChoice| args.model == ModelChoice::All || args.model == m;
    let independence = if want(ModelChoice::Indep) {
        Some(independence_report(series, args.before_days, after, &opts, args.level, &mut warnings)?)
    } else {
        None
    };

    let mut conditional_rows = Vec::new();
    let mut comparison = None;
    if args.model == ModelChoice::All {
        let cmp = compare_models(
            series,
            horizon,
            &opts,
            CompareOptions {
                include_independence: args.include_independence,
            },
        )?;
        if args.include_independence {
            warnings.push("independence row uses a different conditioning and is not AIC-comparable".into());
        }
        for row in &cmp.rows {
            if let Some(e) = &row.error {
                warnings.push(format!("{}: {e}", row.model));
            }
        }
        for name in ["ar1", "ar2", "unified"] {
            if let Some(fit) = cmp.rows.iter().find(|r| r.model == name).and_then(|r| r.fit.clone()) {
                conditional_rows.push(conditional(name, fit));
            }
        }
        comparison = Some(cmp);
    } else {
        let fit = match args.model {
            ModelChoice::Ar1 => Some(fit_ar1(series, horizon, &opts)?),
            ModelChoice::Ar2 => Some(fit_ar2(series, horizon, &opts)?),
            ModelChoice::Unified => Some(fit_unified(series, horizon, &opts)?),
            _ => None,
        };
        if let Some(fit) = fit {
            let name = match args.model {
                ModelChoice::Ar1 => "ar1",
                ModelChoice::Ar2 => "ar2",
                _ => "unified",
            };
            conditional_rows.push(conditional(name, fit));
        }
    }

    let ar2 = conditional_rows.iter().find_map(|r| match (&r.model[..], r.fit.params) {
        ("ar2", ModelParams::Ar2(p)) => Some(p),
        _ => None,
    });
    let curve = build_curve(series, args.before_days, after, independence.as_ref(), ar2.as_ref().map(|p| (p, horizon)), args.delta);

    let mut converged = conditional_rows.iter().all(|r| r.fit.converged);
    if let Some(ind) = &independence {
        converged &= ind.before.fit.converged && ind.after.fit.converged;
    }
    if let Some(cmp) = &comparison {
        converged &= cmp.rows.iter().all(|r| r.converged != Some(false));
    }

    let t0 = series.t0_index();
    Ok(Report {
        input: InputSummary {
            n_points: series.len(),
            t0_index: t0,
            t0_label: series.labels().map(|l| l[t0].clone()),
            peak_count: series.peak(),
            before_days: args.before_days,
            after_days: after,
            horizon,
            seed: args.seed,
            zero_floor: args.delta,
            level: args.level,
        },
        independence,
        conditional: conditional_rows,
        comparison,
        curve,
        converged,
        warnings,
    })
}

/// Ingests `args.input` and builds the report.
pub fn run_fit(args: &FitArgs) -> Result<Report> {
    let (series, warnings) = ingest_csv(&args.input, args.t0.as_deref())?;
    build_report(&series, args, warnings)
}

// ---------------------------------------------------------------- render

/// Six significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&mag) {
        format!("{x:.5e}")
    } else {
        let decimals = (5 - mag).max(0) as usize;
        format!("{x:.decimals$}")
    }
}

fn opt6(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), sig6)
}

fn params_line(p: &ModelParams) -> String {
    p.names()
        .iter()
        .zip(p.to_vec())
        .map(|(n, v)| format!("{n}={}", sig6(v)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Human-readable rendering of a report.
pub fn render_table(report: &Report) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    let i = &report.input;
    let _ = writeln!(
        s,
        "points {}  t0 index {}{}  peak {}  before {}  after {}  horizon {}",
        i.n_points,
        i.t0_index,
        i.t0_label.as_ref().map(|l| format!(" ({l})")).unwrap_or_default(),
        i.peak_count,
        i.before_days,
        i.after_days,
        i.horizon
    );
    if let Some(ind) = &report.independence {
        let _ = writeln!(s, "\nindependence model (shared gamma {})", sig6(ind.gamma_shared));
        for (name, st) in [("before", &ind.before), ("after", &ind.after)] {
            let _ = writeln!(
                s,
                "  {name:<7} loglik {}  k {}  AIC {}  converged {}",
                sig6(st.fit.log_likelihood),
                st.fit.n_params,
                sig6(st.aic),
                st.fit.converged
            );
            if let Some(ci) = &st.intervals {
                for iv in &ci.intervals {
                    let _ = writeln!(
                        s,
                        "    {:<6} {:>12}  se {:>12}  {}% CI [{}, {}]",
                        iv.name,
                        sig6(iv.estimate),
                        sig6(iv.std_error),
                        100.0 * ci.level,
                        sig6(iv.lower),
                        sig6(iv.upper)
                    );
                }
            } else {
                let _ = writeln!(s, "    {}", params_line(&st.fit.params));
            }
        }
    }
    if !report.conditional.is_empty() {
        let _ = writeln!(s, "\nconditional models");
        for r in &report.conditional {
            let _ = writeln!(
                s,
                "  {:<8} loglik {:>12}  k {}  AIC {:>12}  {}{}",
                r.model,
                sig6(r.fit.log_likelihood),
                r.fit.n_params,
                sig6(r.aic),
                params_line(&r.fit.params),
                if r.fit.converged { "" } else { "  (not converged)" }
            );
        }
    }
    if let Some(cmp) = &report.comparison {
        let _ = writeln!(s, "\nAIC comparison");
        for r in &cmp.rows {
            let mark = if cmp.best.as_deref() == Some(r.model.as_str()) { "*" } else { " " };
            let note = match (&r.error, r.comparable) {
                (Some(e), _) => format!("  error: {e}"),
                (None, false) => "  (not comparable)".into(),
                _ => String::new(),
            };
            let _ = writeln!(s, " {mark}{:<14} k {}  AIC {:>12}{note}", r.model, r.n_params, opt6(r.aic));
        }
    }
    for w in &report.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}

/// Plot data as CSV: `t,observed,fitted_before,fitted_after,fitted_ar2`.
pub fn write_plot_data<W: Write>(curve: &[CurvePoint], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    wtr.write_record(["t", "observed", "fitted_before", "fitted_after", "fitted_ar2"]).map_err(io)?;
    let cell = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for p in curve {
        wtr.write_record([p.t.to_string(), p.observed.to_string(), cell(p.fitted_before), cell(p.fitted_after), cell(p.fitted_ar2)])
            .map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- simulate

/// Builds the simulation config from flags or from `--config`.
pub fn sim_config(args: &SimulateArgs) -> Result<SimConfig> {
    let mut cfg = if let Some(path) = &args.config {
        let text = fs::read_to_string(path)?;
        serde_json::from_str::<SimConfig>(&text).map_err(|e| Error::InvalidConfig(e.to_string()))?
    } else {
        let model = match args.model {
            SimModelChoice::Independence => SimModel::Independence {
                params: IndepParams::new(args.alpha, args.beta, args.gamma)?,
                after: match (args.alpha_after, args.beta_after) {
                    (None, None) => None,
                    (a, b) => Some((a.unwrap_or(args.alpha), b.unwrap_or(args.beta))),
                },
            },
            SimModelChoice::Ar1 => SimModel::Ar1 {
                alpha: args.alpha,
                beta: args.beta,
                y_t0: args.y_t0,
            },
            SimModelChoice::Ar2 => SimModel::Ar2 {
                params: Ar2Params::new(args.alpha, args.beta, args.s)?,
                y_t0: args.y_t0,
            },
            SimModelChoice::Unified => SimModel::Unified {
                params: UnifiedParams::new(args.alpha, args.beta, args.w, args.u, args.v)?,
                y_t0: args.y_t0,
            },
        };
        let window = Window::new(-(args.before_days as i64), args.after_days as i64)?;
        let mut cfg = SimConfig::new(model, window, args.seed, args.replicates);
        cfg.zero_floor = args.delta;
        cfg
    };
    if args.config.is_none() {
        cfg.rng_seed = args.seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_replicates_csv<W: Write>(reps: &[EventSeries], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    wtr.write_record(["replicate", "day", "count"]).map_err(io)?;
    for (r, s) in reps.iter().enumerate() {
        let labels = s.labels().expect("simulated series are labelled");
        for (l, c) in labels.iter().zip(s.counts()) {
            wtr.write_record([r.to_string(), l.clone(), c.to_string()]).map_err(io)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Generates the series and writes them; returns the written paths.
pub fn run_simulate<W: Write>(args: &SimulateArgs, stdout: W) -> Result<Vec<PathBuf>> {
    let cfg = sim_config(args)?;
    let reps = simulate(&cfg)?;
    if let Some(dir) = &args.output_dir {
        fs::create_dir_all(dir)?;
        let mut paths = Vec::with_capacity(reps.len());
        for (i, s) in reps.iter().enumerate() {
            let path = dir.join(format!("rep_{i:04}.csv"));
            write_csv(s, fs::File::create(&path)?)?;
            paths.push(path);
        }
        return Ok(paths);
    }
    let write = |out: &mut dyn Write| -> Result<()> {
        if reps.len() == 1 {
            write_csv(&reps[0], out)
        } else {
            write_replicates_csv(&reps, out)
        }
    };
    match &args.output {
        Some(path) => {
            let mut f = fs::File::create(path)?;
            write(&mut f)?;
            Ok(vec![path.clone()])
        }
        None => {
            let mut out = stdout;
            write(&mut out)?;
            Ok(Vec::new())
        }
    }
}

// ---------------------------------------------------------------- entry

#[derive(Serialize)]
struct ErrorBody {
    kind: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    line: Option<u64>,
}

/// Machine-readable error: `{"error": {"kind", "message", "line"?}}`.
pub fn error_json(e: &Error) -> String {
    let line = match e {
        Error::Parse { line, .. } => Some(*line),
        _ => None,
    };
    let body = ErrorBody {
        kind: e.kind(),
        message: e.to_string(),
        line,
    };
    serde_json::json!({ "error": body }).to_string()
}

fn emit<W: Write>(path: Option<&Path>, stdout: &mut W, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn fit_command<W: Write, E: Write>(args: &FitArgs, stdout: &mut W, stderr: &mut E) -> Result<i32> {
    let report = run_fit(args)?;
    for w in &report.warnings {
        let _ = writeln!(stderr, "warning: {w}");
    }
    let text = match args.format {
        OutputFormat::Json => {
            let mut t = serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?;
            t.push('\n');
            t
        }
        OutputFormat::Table => render_table(&report),
    };
    emit(args.output.as_deref(), stdout, &text)?;
    if let Some(p) = &args.plot_data {
        write_plot_data(&report.curve, fs::File::create(p)?)?;
    }
    Ok(if report.converged { 0 } else { EXIT_NONCONVERGENCE })
}

/// Runs a parsed command line; returns the process exit code.
pub fn run<W: Write, E: Write>(cli: &Cli, stdout: &mut W, stderr: &mut E) -> i32 {
    let result = match &cli.command {
        Command::Fit(args) => fit_command(args, stdout, stderr),
        Command::Simulate(args) => run_simulate(args, &mut *stdout).map(|_| 0),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stdout, "{}", error_json(&e));
            EXIT_INPUT
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_header_and_label_t0() {
        let (s, w) = parse_csv("day,count\n-1,5\n0,100\n1,7", Some("0")).unwrap();
        assert_eq!(s.counts(), &[5, 100, 7]);
        assert_eq!(s.t0_index(), 1);
        assert!(w.is_empty());
    }

    #[test]
    fn index_t0_and_crlf_without_header() {
        let (s, _) = parse_csv("a,1\r\nb,9\r\nc,3\r\n", Some("2")).unwrap();
        assert_eq!(s.t0_index(), 2);
        assert_eq!(s.labels().unwrap()[0], "a");
    }

    #[test]
    fn argmax_fallback_warns() {
        let (s, w) = parse_csv("day,count\n-1,5\n0,100\n1,100", None).unwrap();
        assert_eq!(s.t0_index(), 1);
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn ingest_errors() {
        assert_eq!(parse_csv("x,y\n1,abc", None).unwrap_err(), Error::Parse { line: 2, message: "count \"abc\" is not an integer".into() });
        assert_eq!(parse_csv("day,count\n-1,5\n0,100", Some("x")).unwrap_err(), Error::T0NotFound("x".into()));
        assert_eq!(parse_csv("day,count\n-1,5\n0,-3", Some("0")).unwrap_err(), Error::NegativeCount(1));
        assert!(matches!(parse_csv("a,1\nb,2,3", None).unwrap_err(), Error::Parse { line: 2, .. }));
        assert_eq!(parse_csv("day,count\n", None).unwrap_err(), Error::EmptySeries);
    }

    #[test]
    fn error_json_carries_line() {
        let v: serde_json::Value = serde_json::from_str(&error_json(&Error::Parse { line: 4, message: "bad".into() })).unwrap();
        assert_eq!(v["error"]["kind"], "ParseError");
        assert_eq!(v["error"]["line"], 4);
        let v: serde_json::Value = serde_json::from_str(&error_json(&Error::EmptySeries)).unwrap();
        assert!(v["error"].get("line").is_none());
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(690.606), "690.606");
        assert_eq!(sig6(1.0), "1.00000");
        assert_eq!(sig6(-0.00123456789), "-0.00123457");
        assert_eq!(sig6(8820.5931), "8820.59");
        assert_eq!(sig6(1234567.0), "1.23457e6");
        assert_eq!(sig6(0.0), "0");
    }
}
