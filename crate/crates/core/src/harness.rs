//! Experiment drivers behind the command-line front end: convergence tables,
//! invariant drift series, long-run orbits and tableau certification.
//!
//! Every rendered output starts with `# ` followed by the configuration as
//! one line of JSON, then whitespace-separated columns.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{integrate, IterationConfig, IterationMode, Scheme, StepRecord, BASE_RK_TOL};
use crate::linalg::{norm2, sub};
use crate::ordercond::{verify_order, OrderReport};
use crate::predictor::PredictorKind;
use crate::problems::{ProblemId, QuadraticOde};
use crate::tableau::TableauId;

/// Tolerance of the order-condition certification.
pub const CERTIFY_TOL: f64 = 1e-12;

/// Errors at or below this level are excluded from slope fits.
pub const SLOPE_FLOOR: f64 = 1e-13;

/// Number of smallest valid step sizes used in slope fits.
pub const SLOPE_POINTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: String,
    pub tableau: String,
    /// A partitioned pair replaces tableau, predictor and iteration settings.
    pub pair: Option<String>,
    pub predictor: String,
    pub mode: IterationMode,
    pub k: Vec<usize>,
    /// Entries `T/n` (fraction of the problem period) or plain numbers.
    pub h_list: Vec<String>,
    /// End time in problem periods.
    pub periods: f64,
    pub out: Option<String>,
    pub subsample: usize,
    pub seed: u64,
    /// Order to certify; the pair's declared order when absent.
    pub order: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: "euler".into(),
            tableau: "gauss:3".into(),
            pair: None,
            predictor: "cerk".into(),
            mode: IterationMode::SemiImplicit,
            k: (1..=6).collect(),
            h_list: (4..=9).map(|n| format!("T/{}", 1u32 << n)).collect(),
            periods: 1.0,
            out: None,
            subsample: 64,
            seed: 0,
            order: None,
        }
    }
}

/// One resolved step size: `h` and the number of steps per period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSize {
    pub h: f64,
    pub steps_per_period: f64,
}

impl ExperimentConfig {
    pub fn header(&self) -> String {
        format!("# {}", serde_json::to_string(self).expect("config serialises"))
    }

    pub fn problem_id(&self) -> Result<ProblemId> {
        self.problem.parse()
    }

    pub fn build_problem(&self) -> Result<Box<dyn QuadraticOde>> {
        self.problem_id()?.build()
    }

    pub fn predictor_kind(&self) -> Result<PredictorKind> {
        let kind: PredictorKind = self.predictor.parse()?;
        Ok(match kind {
            PredictorKind::Perturbed { amplitude, .. } if !self.predictor.contains("seed=") => {
                PredictorKind::Perturbed {
                    amplitude,
                    seed: self.seed,
                }
            }
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.k.is_empty() || self.k.iter().any(|k| !(1..=12).contains(k)) {
            return Err(Error::Config("k values must lie in 1..=12".into()));
        }
        if !(self.periods > 0.0) || !self.periods.is_finite() {
            return Err(Error::Config("periods must be positive".into()));
        }
        if self.subsample == 0 {
            return Err(Error::Config("subsample must be positive".into()));
        }
        if self.h_list.is_empty() {
            return Err(Error::Config("h list is empty".into()));
        }
        Ok(())
    }

    /// Resolves the h list against the period `period`; the list must decrease strictly.
    pub fn step_sizes(&self, period: f64) -> Result<Vec<StepSize>> {
        let sizes = self
            .h_list
            .iter()
            .map(|s| parse_step(s, period))
            .collect::<Result<Vec<_>>>()?;
        if sizes.windows(2).any(|w| !(w[1].h < w[0].h)) {
            return Err(Error::Config("h list must be strictly decreasing".into()));
        }
        Ok(sizes)
    }

    /// The scheme of one table column: a pair, or the tableau iterated `k` times.
    pub fn scheme(&self, k: usize) -> Result<Scheme> {
        if let Some(pair) = &self.pair {
            return Ok(Scheme::Partitioned(pair.parse::<TableauId>()?.partitioned()?));
        }
        Ok(Scheme::Iterated {
            tableau: self.tableau.parse::<TableauId>()?.butcher()?,
            predictor: self.predictor_kind()?,
            config: IterationConfig::fixed(self.mode, k),
        })
    }

    fn base_scheme(&self) -> Result<Scheme> {
        let tableau = match &self.pair {
            Some(pair) => pair.parse::<TableauId>()?.partitioned()?.main().clone(),
            None => self.tableau.parse::<TableauId>()?.butcher()?,
        };
        Ok(Scheme::BaseRk {
            tableau,
            tol: BASE_RK_TOL,
        })
    }

    /// Column labels and schemes: one per k (or the pair), then the base method.
    fn columns(&self) -> Result<Vec<(String, Scheme)>> {
        let mut cols = Vec::new();
        if self.pair.is_some() {
            cols.push(("prk".to_string(), self.scheme(1)?));
        } else {
            for &k in &self.k {
                cols.push((format!("k={k}"), self.scheme(k)?));
            }
        }
        cols.push(("base".to_string(), self.base_scheme()?));
        Ok(cols)
    }
}

/// Parses `T/n`, `T` or a positive number.
pub fn parse_step(s: &str, period: f64) -> Result<StepSize> {
    let s = s.trim();
    let bad = || Error::Config(format!("cannot parse step size `{s}`"));
    if s == "T" {
        return Ok(StepSize {
            h: period,
            steps_per_period: 1.0,
        });
    }
    if let Some(n) = s.strip_prefix("T/") {
        let n: f64 = n.parse().map_err(|_| bad())?;
        if !(n > 0.0) {
            return Err(bad());
        }
        return Ok(StepSize {
            h: period / n,
            steps_per_period: n,
        });
    }
    let h: f64 = s.parse().map_err(|_| bad())?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(bad());
    }
    Ok(StepSize {
        h,
        steps_per_period: period / h,
    })
}

/// Whole number of steps covering `periods` periods; the step is adjusted to land on the end time.
fn steps_for(size: StepSize, period: f64, periods: f64) -> (f64, usize) {
    let n = (size.steps_per_period * periods).round().max(1.0) as usize;
    (period * periods / n as f64, n)
}

/// Least-squares slope of `log err` against `log h` over the smallest
/// [`SLOPE_POINTS`] step sizes whose error is finite and above [`SLOPE_FLOOR`].
pub fn fit_slope(hs: &[f64], errs: &[f64]) -> f64 {
    let mut pts: Vec<(f64, f64)> = hs
        .iter()
        .zip(errs)
        .filter(|(_, e)| e.is_finite() && **e > SLOPE_FLOOR)
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.truncate(SLOPE_POINTS);
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn fmt_value(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.6e}")
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub columns: Vec<String>,
    pub hs: Vec<f64>,
    /// `errors[row][col]`; `inf` marks a diverged run.
    pub errors: Vec<Vec<f64>>,
    pub slopes: Vec<f64>,
}

impl ConvergenceTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.errors.iter().map(|r| r[j]).collect())
    }

    pub fn slope(&self, name: &str) -> Option<f64> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.slopes[j])
    }

    pub fn render(&self, cfg: &ExperimentConfig) -> String {
        let mut s = cfg.header();
        s.push('\n');
        let _ = writeln!(s, "# h {}", self.columns.join(" "));
        for (h, row) in self.hs.iter().zip(&self.errors) {
            let cells: Vec<String> = row.iter().map(|&v| fmt_value(v)).collect();
            let _ = writeln!(s, "{h:.6e} {}", cells.join(" "));
        }
        let slopes: Vec<String> = self.slopes.iter().map(|v| format!("{v:.3}")).collect();
        let _ = writeln!(s, "# slope {}", slopes.join(" "));
        s
    }
}

/// Relative error at the end of one run; `inf` when the run diverged.
fn run_error(problem: &dyn QuadraticOde, scheme: &Scheme, h: f64, n: usize) -> Result<f64> {
    let y0 = problem.initial_state();
    match integrate(problem, scheme, 0.0, &y0, h, n, None) {
        Ok(traj) => {
            let exact = problem.exact_solution(h * n as f64)?;
            Ok(norm2(&sub(traj.last(), &exact)) / norm2(&exact))
        }
        Err(e) if e.is_diverged() => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Relative end-time error for every (h, column) cell, cells run in parallel.
pub fn convergence_study(cfg: &ExperimentConfig) -> Result<ConvergenceTable> {
    cfg.validate()?;
    let problem = cfg.build_problem()?;
    if !problem.has_exact_solution() {
        return Err(Error::Unsupported(format!("{} has no reference solution", problem.name())));
    }
    let period = problem.period();
    let sizes = cfg.step_sizes(period)?;
    let columns = cfg.columns()?;
    let runs: Vec<(f64, usize)> = sizes.iter().map(|&s| steps_for(s, period, cfg.periods)).collect();
    let cells: Vec<(usize, usize)> = (0..runs.len())
        .flat_map(|r| (0..columns.len()).map(move |c| (r, c)))
        .collect();
    let values = cells
        .par_iter()
        .map(|&(r, c)| run_error(problem.as_ref(), &columns[c].1, runs[r].0, runs[r].1))
        .collect::<Result<Vec<f64>>>()?;
    let ncol = columns.len();
    let errors: Vec<Vec<f64>> = values.chunks(ncol).map(<[f64]>::to_vec).collect();
    let hs: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let slopes = (0..ncol)
        .map(|c| {
            let col: Vec<f64> = errors.iter().map(|row| row[c]).collect();
            fit_slope(&hs, &col)
        })
        .collect();
    Ok(ConvergenceTable {
        columns: columns.into_iter().map(|c| c.0).collect(),
        hs,
        errors,
        slopes,
    })
}

#[derive(Debug, Clone)]
pub struct DriftSeries {
    pub columns: Vec<String>,
    pub times: Vec<f64>,
    /// `values[row][col]`: relative invariant errors at the sampled times.
    pub values: Vec<Vec<f64>>,
    /// Maximum over every step (not only the sampled ones) per column.
    pub max: Vec<f64>,
}

impl DriftSeries {
    pub fn max_of(&self, name: &str) -> Option<f64> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.max[j])
    }

    pub fn render(&self, cfg: &ExperimentConfig) -> String {
        let mut s = cfg.header();
        s.push('\n');
        let _ = writeln!(s, "# t {}", self.columns.join(" "));
        for (t, row) in self.times.iter().zip(&self.values) {
            let cells: Vec<String> = row.iter().map(|&v| fmt_value(v)).collect();
            let _ = writeln!(s, "{t:.6e} {}", cells.join(" "));
        }
        let maxes: Vec<String> = self.max.iter().map(|&v| fmt_value(v)).collect();
        let _ = writeln!(s, "# max {}", maxes.join(" "));
        s
    }
}

fn relative_change(now: f64, start: f64) -> f64 {
    let d = (now - start).abs();
    if start.abs() > f64::MIN_POSITIVE {
        d / start.abs()
    } else {
        d
    }
}

/// Relative errors of `V` and every extra observable, per scheme column, at the
/// first step size of the h list, sampled every `subsample` steps.
pub fn drift_study(cfg: &ExperimentConfig) -> Result<DriftSeries> {
    cfg.validate()?;
    let problem = cfg.build_problem()?;
    let period = problem.period();
    let size = cfg.step_sizes(period)?[0];
    let (h, n) = steps_for(size, period, cfg.periods);
    let names = problem.observable_names();
    let schemes: Vec<(String, Scheme)> = match &cfg.pair {
        Some(_) => vec![("prk".into(), cfg.scheme(1)?)],
        None => cfg
            .k
            .iter()
            .map(|&k| Ok((format!("k={k}"), cfg.scheme(k)?)))
            .collect::<Result<_>>()?,
    };
    let y0 = problem.initial_state();
    let v0 = problem.invariant(&y0);
    let o0 = problem.observables(&y0);
    let per_scheme = schemes
        .par_iter()
        .map(|(_, scheme)| {
            let mut series: Vec<Vec<f64>> = Vec::new();
            let mut obs = |_: usize, _: f64, r: &StepRecord| {
                let mut row = vec![relative_change(r.invariant_after, v0)];
                for (o, s) in problem.observables(&r.y1).iter().zip(&o0) {
                    row.push(relative_change(*o, *s));
                }
                series.push(row);
            };
            integrate(problem.as_ref(), scheme, 0.0, &y0, h, n, Some(&mut obs))?;
            Ok(series)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut columns = Vec::new();
    for (label, _) in &schemes {
        columns.push(format!("V[{label}]"));
        for name in &names {
            columns.push(format!("{name}[{label}]"));
        }
    }
    let width = 1 + names.len();
    let mut max = vec![0.0f64; columns.len()];
    let mut times = Vec::new();
    let mut values = Vec::new();
    for step in 0..n {
        let mut row = Vec::with_capacity(columns.len());
        for (s, series) in per_scheme.iter().enumerate() {
            for (j, v) in series[step].iter().enumerate() {
                max[s * width + j] = max[s * width + j].max(*v);
                row.push(*v);
            }
        }
        if (step + 1) % cfg.subsample == 0 || step + 1 == n {
            times.push(h * (step + 1) as f64);
            values.push(row);
        }
    }
    Ok(DriftSeries {
        columns,
        times,
        values,
        max,
    })
}

#[derive(Debug, Clone)]
pub struct Orbit {
    pub times: Vec<f64>,
    pub positions: Vec<[f64; 2]>,
    /// Largest Euclidean state norm over the whole run.
    pub max_norm: f64,
}

impl Orbit {
    pub fn render(&self, cfg: &ExperimentConfig) -> String {
        let mut s = cfg.header();
        s.push('\n');
        s.push_str("# t y1 y2\n");
        for (t, p) in self.times.iter().zip(&self.positions) {
            let _ = writeln!(s, "{t:.6e} {:.12e} {:.12e}", p[0], p[1]);
        }
        s
    }
}

/// Positions over the final period of a long Kepler run at the first step size.
pub fn orbit_dump(cfg: &ExperimentConfig) -> Result<Orbit> {
    cfg.validate()?;
    if !matches!(cfg.problem_id()?, ProblemId::Kepler { .. }) {
        return Err(Error::Config("orbit output is defined for the Kepler problem".into()));
    }
    let problem = cfg.build_problem()?;
    let period = problem.period();
    let size = cfg.step_sizes(period)?[0];
    let (h, n) = steps_for(size, period, cfg.periods);
    let per_period = ((n as f64 / cfg.periods).round() as usize).clamp(1, n);
    let traj = integrate(problem.as_ref(), &cfg.scheme(cfg.k[0])?, 0.0, &problem.initial_state(), h, n, None)?;
    let max_norm = traj.states.iter().map(|y| norm2(y)).fold(0.0, f64::max);
    let first = n - per_period;
    Ok(Orbit {
        times: traj.times[first..n].to_vec(),
        positions: traj.states[first..n].iter().map(|y| [y[0], y[1]]).collect(),
        max_norm,
    })
}

/// Order-condition report for the configured pair.
pub fn certify(cfg: &ExperimentConfig) -> Result<OrderReport> {
    let id = cfg
        .pair
        .as_deref()
        .ok_or_else(|| Error::Config("certification needs a partitioned pair".into()))?;
    let pair = id.parse::<TableauId>()?.partitioned()?;
    let order = cfg.order.unwrap_or(pair.declared_order());
    Ok(verify_order(&pair, order, CERTIFY_TOL))
}

/// Writes `text` to `cfg.out`, or returns it when no path is set.
pub fn emit(cfg: &ExperimentConfig, text: &str) -> Result<Option<String>> {
    match &cfg.out {
        Some(path) => {
            std::fs::write(path, text)?;
            Ok(None)
        }
        None => Ok(Some(text.to_string())),
    }
}
