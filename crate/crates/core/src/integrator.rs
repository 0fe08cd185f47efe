//! The linearly implicit conservative step, its iterated variants, the
//! partitioned stepper and the converged base-method reference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, norm_inf, solve_stages, sub, DenseMatrix};
use crate::predictor::{Predictor, PredictorKind};
use crate::problems::QuadraticOde;
use crate::tableau::{ButcherTableau, PartitionedTableau};

/// Canonical residual below which a tableau is treated as conservative.
pub const CANONICAL_TOL: f64 = 1e-12;

/// A stage norm above `DIVERGENCE_FACTOR · (1 + ‖y0‖)` aborts the step.
pub const DIVERGENCE_FACTOR: f64 = 1e8;

/// Default iteration cap of the residual stopping rule.
pub const DEFAULT_MAX_K: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IterationMode {
    SemiImplicit,
    Explicit,
}

impl std::fmt::Display for IterationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            IterationMode::SemiImplicit => "semi",
            IterationMode::Explicit => "explicit",
        })
    }
}

impl std::str::FromStr for IterationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "semi" | "semi-implicit" => Ok(IterationMode::SemiImplicit),
            "explicit" => Ok(IterationMode::Explicit),
            other => Err(Error::Config(format!("unknown iteration mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StoppingRule {
    /// Exactly `k ≥ 1` iterations.
    Fixed(usize),
    /// Iterate until the maximal stage displacement is at most `tol · (1 + ‖y0‖∞)`,
    /// or until it stops decreasing below [`STAGNATION_TOL`]` · (1 + ‖y0‖∞)`
    /// (the roundoff plateau).
    Residual { tol: f64, max_k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationConfig {
    pub mode: IterationMode,
    pub stop: StoppingRule,
    /// Keep every stage iterate in the step record.
    pub record_history: bool,
}

impl IterationConfig {
    pub fn fixed(mode: IterationMode, k: usize) -> Self {
        Self {
            mode,
            stop: StoppingRule::Fixed(k),
            record_history: false,
        }
    }

    pub fn residual(mode: IterationMode, tol: f64) -> Self {
        Self {
            mode,
            stop: StoppingRule::Residual {
                tol,
                max_k: DEFAULT_MAX_K,
            },
            record_history: false,
        }
    }

    pub fn with_history(mut self) -> Self {
        self.record_history = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.stop {
            StoppingRule::Fixed(0) => Err(Error::Config("at least one iteration is required".into())),
            StoppingRule::Residual { tol, max_k } if !(tol > 0.0) || max_k == 0 => Err(Error::Config(
                "residual rule needs a positive tolerance and cap".into(),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub y1: Vec<f64>,
    /// Final stage values `Y_i^{(k)}`.
    pub stages: Vec<Vec<f64>>,
    /// Stage sets `Y^{(0)}, …, Y^{(k)}` when requested.
    pub iterate_history: Option<Vec<Vec<Vec<f64>>>>,
    pub invariant_before: f64,
    pub invariant_after: f64,
    pub iterations: usize,
    /// Largest ∞-norm residual over the linear solves of the step.
    pub linear_residual: f64,
    /// False when the tableau is not canonical, so `V` need not be conserved.
    pub conservative: bool,
}

impl StepRecord {
    pub fn invariant_error(&self) -> f64 {
        (self.invariant_after - self.invariant_before).abs()
    }
}

fn frozen_skews(problem: &dyn QuadraticOde, yhat: &[Vec<f64>]) -> Result<Vec<DenseMatrix>> {
    yhat.iter().map(|y| problem.skew(y)).collect()
}

fn check_stage_count(t: &ButcherTableau, stages: &[Vec<f64>], d: usize) -> Result<()> {
    if stages.len() != t.stages() || stages.iter().any(|y| y.len() != d) {
        return Err(Error::Config(format!(
            "expected {} stage vectors of length {d}",
            t.stages()
        )));
    }
    Ok(())
}

fn guard(stages: &[Vec<f64>], y0: &[f64]) -> Result<()> {
    let limit = DIVERGENCE_FACTOR * (1.0 + norm_inf(y0));
    for y in stages {
        let n = norm_inf(y);
        if !(n <= limit) {
            return Err(Error::Diverged { norm: n, limit });
        }
    }
    Ok(())
}

/// Linear stage solve with `S` frozen at `shat`; returns stages and solve residual.
fn linear_stages(
    problem: &dyn QuadraticOde,
    t: &ButcherTableau,
    y0: &[f64],
    h: f64,
    shat: &[DenseMatrix],
) -> Result<(Vec<Vec<f64>>, f64)> {
    let sol = solve_stages(problem.q_matrix(), y0, h, t.a(), shat).map_err(|e| match e {
        e @ Error::SingularMatrix { .. } => Error::StepTooLarge {
            h,
            source: Box::new(e),
        },
        e => e,
    })?;
    guard(&sol.stages, y0)?;
    Ok((sol.stages, sol.residual))
}

/// `y0 + h Σ b_i S_i ∇V(Y_i)`.
fn output_line(
    problem: &dyn QuadraticOde,
    t: &ButcherTableau,
    y0: &[f64],
    h: f64,
    shat: &[DenseMatrix],
    stages: &[Vec<f64>],
) -> Vec<f64> {
    let mut y1 = y0.to_vec();
    for (i, (si, yi)) in shat.iter().zip(stages).enumerate() {
        let bi = t.b()[i];
        if bi != 0.0 {
            axpy(h * bi, &si.matvec(&problem.grad(yi)), &mut y1);
        }
    }
    y1
}

fn finish(
    problem: &dyn QuadraticOde,
    t: &ButcherTableau,
    y0: &[f64],
    y1: Vec<f64>,
    stages: Vec<Vec<f64>>,
    history: Option<Vec<Vec<Vec<f64>>>>,
    iterations: usize,
    linear_residual: f64,
) -> StepRecord {
    StepRecord {
        invariant_before: problem.invariant(y0),
        invariant_after: problem.invariant(&y1),
        y1,
        stages,
        iterate_history: history,
        iterations,
        linear_residual,
        conservative: t.canonical_residual() <= CANONICAL_TOL,
    }
}

/// One conservative step with the structure matrix frozen at the predictions `yhat`.
pub fn conservative_step(
    problem: &dyn QuadraticOde,
    t: &ButcherTableau,
    y0: &[f64],
    h: f64,
    yhat: &[Vec<f64>],
) -> Result<StepRecord> {
    check_stage_count(t, yhat, y0.len())?;
    let shat = frozen_skews(problem, yhat)?;
    let (stages, res) = linear_stages(problem, t, y0, h, &shat)?;
    let y1 = output_line(problem, t, y0, h, &shat, &stages);
    Ok(finish(problem, t, y0, y1, stages, None, 1, res))
}

fn max_displacement(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| norm_inf(&sub(x, y)))
        .fold(0.0, f64::max)
}

/// What the loop should do after producing iterate number `it`.
enum Next {
    Continue,
    Stop,
}

/// Displacement level below which a non-decreasing residual iteration is
/// taken to have reached roundoff.
pub const STAGNATION_TOL: f64 = 1e-11;

fn next_action(cfg: &IterationConfig, it: usize, displacement: f64, previous: f64, y0: &[f64]) -> Result<Next> {
    match cfg.stop {
        StoppingRule::Fixed(k) => Ok(if it >= k { Next::Stop } else { Next::Continue }),
        StoppingRule::Residual { tol, max_k } => {
            let scale = 1.0 + norm_inf(y0);
            let stalled = displacement >= previous && displacement <= STAGNATION_TOL * scale;
            if displacement <= tol * scale || stalled {
                Ok(Next::Stop)
            } else if it >= max_k {
                Err(Error::NoConvergence {
                    iterations: it,
                    displacement,
                })
            } else {
                Ok(Next::Continue)
            }
        }
    }
}

/// Semi-implicit iteration: each pass is one linear solve with `S` frozen at
/// the previous iterate; the output pairs `S(Y^{(k−1)})` with `Y^{(k)}`.
pub fn semi_implicit_iterate(
    problem: &dyn QuadraticOde,
    t: &ButcherTableau,
    y0: &[f64],
    h: f64,
    initial: &[Vec<f64>],
    cfg: &IterationConfig,
) -> Result<StepRecord> {
    cfg.validate()?;
    if cfg.mode != IterationMode::SemiImplicit {
        return Err(Error::Config("semi-implicit iteration called with explicit mode".into()));
    }
    check_stage_count(t, initial, y0.len())?;
    let mut history = cfg.record_history.then(|| vec![initial.to_vec()]);
    let mut prev = initial.to_vec();
    let mut residual: f64 = 0.0;
    let mut last_disp = f64::INFINITY;
    let mut it = 0;
    loop {
        it += 1;
        let shat = frozen_skews(problem, &prev)?;
        let (stages, res) = linear_stages(problem, t, y0, h, &shat)?;
        residual = residual.max(res);
        if let Some(hist) = history.as_mut() {
            hist.push(stages.clone());
        }
        let disp = max_displacement(&stages, &prev);
        if let Next::Stop = next_action(cfg, it, disp, last_disp, y0)? {
            let y1 = output_line(problem, t, y0, h, &shat, &stages);
            return Ok(finish(problem, t, y0, y1, stages, history, it, residual));
        }
        prev = stages;
        last_disp = disp;
    }
}

/// Explicit iteration: `k − 1` updates `Y ← y0 + h A S(Y)∇V(Y)` without
/// linear solves, then one semi-implicit solve and the output line.
pub fn explicit_iterate(
    problem: &dyn QuadraticOde,
    t: &ButcherTableau,
    y0: &[f64],
    h: f64,
    initial: &[Vec<f64>],
    cfg: &IterationConfig,
) -> Result<StepRecord> {
    cfg.validate()?;
    if cfg.mode != IterationMode::Explicit {
        return Err(Error::Config("explicit iteration called with semi-implicit mode".into()));
    }
    check_stage_count(t, initial, y0.len())?;
    let s = t.stages();
    let mut history = cfg.record_history.then(|| vec![initial.to_vec()]);
    let mut prev = initial.to_vec();
    let mut last_disp = f64::INFINITY;
    let mut it = 0;
    let explicit_updates = match cfg.stop {
        StoppingRule::Fixed(k) => Some(k - 1),
        StoppingRule::Residual { .. } => None,
    };
    loop {
        if explicit_updates == Some(it) {
            break;
        }
        it += 1;
        let f: Vec<Vec<f64>> = prev.iter().map(|y| problem.rhs(y)).collect::<Result<_>>()?;
        let next: Vec<Vec<f64>> = (0..s)
            .map(|i| {
                let mut y = y0.to_vec();
                for (j, fj) in f.iter().enumerate() {
                    let a = t.a()[(i, j)];
                    if a != 0.0 {
                        axpy(h * a, fj, &mut y);
                    }
                }
                y
            })
            .collect();
        guard(&next, y0)?;
        if let Some(hist) = history.as_mut() {
            hist.push(next.clone());
        }
        let disp = max_displacement(&next, &prev);
        prev = next;
        if explicit_updates.is_none() {
            if let Next::Stop = next_action(cfg, it, disp, last_disp, y0)? {
                break;
            }
        }
        last_disp = disp;
    }
    let shat = frozen_skews(problem, &prev)?;
    let (stages, res) = linear_stages(problem, t, y0, h, &shat)?;
    if let Some(hist) = history.as_mut() {
        hist.push(stages.clone());
    }
    let y1 = output_line(problem, t, y0, h, &shat, &stages);
    Ok(finish(problem, t, y0, y1, stages, history, it + 1, res))
}

/// Dispatches on `cfg.mode`.
pub fn iterate(
    problem: &dyn QuadraticOde,
    t: &ButcherTableau,
    y0: &[f64],
    h: f64,
    initial: &[Vec<f64>],
    cfg: &IterationConfig,
) -> Result<StepRecord> {
    match cfg.mode {
        IterationMode::SemiImplicit => semi_implicit_iterate(problem, t, y0, h, initial, cfg),
        IterationMode::Explicit => explicit_iterate(problem, t, y0, h, initial, cfg),
    }
}

/// Partitioned step: explicit predictor stages `Z_i`, then one conservative
/// solve with `S` frozen at `Z`.
pub fn prk_step(problem: &dyn QuadraticOde, p: &PartitionedTableau, y0: &[f64], h: f64) -> Result<StepRecord> {
    let s = p.stages();
    let ahat = p.ahat();
    let mut z: Vec<Vec<f64>> = Vec::with_capacity(s);
    let mut fz: Vec<Vec<f64>> = Vec::with_capacity(s);
    for i in 0..s {
        let mut zi = y0.to_vec();
        for (j, fj) in fz.iter().enumerate() {
            let a = ahat[(i, j)];
            if a != 0.0 {
                axpy(h * a, fj, &mut zi);
            }
        }
        fz.push(problem.rhs(&zi)?);
        z.push(zi);
    }
    conservative_step(problem, p.main(), y0, h, &z)
}

/// The base Runge–Kutta method, realised as the semi-implicit iteration run
/// to a stage displacement of at most `tol` (relative to `1 + ‖y0‖∞`).
pub fn base_rk_reference(
    problem: &dyn QuadraticOde,
    t: &ButcherTableau,
    y0: &[f64],
    h: f64,
    tol: f64,
) -> Result<StepRecord> {
    if !(tol > 0.0) {
        return Err(Error::Config("reference tolerance must be positive".into()));
    }
    let initial = vec![y0.to_vec(); t.stages()];
    semi_implicit_iterate(
        problem,
        t,
        y0,
        h,
        &initial,
        &IterationConfig::residual(IterationMode::SemiImplicit, tol),
    )
}

/// Default tolerance of the base-method reference.
pub const BASE_RK_TOL: f64 = 1e-15;

#[derive(Debug, Clone)]
pub enum Scheme {
    Iterated {
        tableau: ButcherTableau,
        predictor: PredictorKind,
        config: IterationConfig,
    },
    Partitioned(PartitionedTableau),
    BaseRk { tableau: ButcherTableau, tol: f64 },
}

/// States `y_0, …, y_N` at times `t_0 + n h`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory holds the initial state")
    }
}

/// Observer called after every step with `(step index, time, record)`.
pub type Observer<'a> = dyn FnMut(usize, f64, &StepRecord) + 'a;

/// Steps a scheme `n_steps` times from `(t0, y0)`. Errors carry the step index.
pub fn integrate(
    problem: &dyn QuadraticOde,
    scheme: &Scheme,
    t0: f64,
    y0: &[f64],
    h: f64,
    n_steps: usize,
    observer: Option<&mut Observer<'_>>,
) -> Result<Trajectory> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Config(format!("step size must be positive, got {h}")));
    }
    if n_steps == 0 {
        return Err(Error::Config("at least one step is required".into()));
    }
    if y0.len() != problem.dim() {
        return Err(Error::Config(format!(
            "initial state has {} components, problem has {}",
            y0.len(),
            problem.dim()
        )));
    }
    let mut observer = observer;
    let mut predictor = match scheme {
        Scheme::Iterated { predictor, config, .. } => {
            config.validate()?;
            Some(Predictor::new(*predictor))
        }
        _ => None,
    };
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    times.push(t0);
    states.push(y0.to_vec());
    let mut y = y0.to_vec();
    for n in 0..n_steps {
        let t = t0 + n as f64 * h;
        let mut step = || -> Result<StepRecord> {
            match scheme {
                Scheme::Iterated { tableau, config, .. } => {
                    let pr = predictor.as_mut().expect("iterated scheme has a predictor");
                    let init = pr.predict(problem, t, &y, h, tableau.c())?;
                    let rec = iterate(problem, tableau, &y, h, &init, config)?;
                    pr.record(problem, &y, &rec.y1, &rec.stages, tableau.c(), h)?;
                    Ok(rec)
                }
                Scheme::Partitioned(p) => prk_step(problem, p, &y, h),
                Scheme::BaseRk { tableau, tol } => base_rk_reference(problem, tableau, &y, h, *tol),
            }
        };
        let rec = step().map_err(|e| Error::StepFailed {
            step: n,
            source: Box::new(e),
        })?;
        let t1 = t0 + (n + 1) as f64 * h;
        if let Some(obs) = observer.as_mut() {
            obs(n, t1, &rec);
        }
        y = rec.y1.clone();
        times.push(t1);
        states.push(rec.y1);
    }
    Ok(Trajectory { times, states })
}
