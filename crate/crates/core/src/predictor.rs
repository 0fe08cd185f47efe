//! Stage predictions `Ŷ_i ≈ y(t + c_i h)` used to freeze the structure matrix.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, lu_solve, DenseMatrix};
use crate::problems::{QuadraticOde, Stiffness};

/// The data a history-based predictor keeps from the previous step.
#[derive(Debug, Clone)]
pub struct PreviousStep {
    pub y_start: Vec<f64>,
    pub y_end: Vec<f64>,
    /// Final stage values, with abscissae `c` relative to the previous step.
    pub stages: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    /// `S(y)∇V(y)` at both ends; only filled when a predictor asks for it.
    pub derivatives: Option<(Vec<f64>, Vec<f64>)>,
    pub h: f64,
}

/// Predictor memory threaded between steps; empty before the first step.
#[derive(Debug, Clone, Default)]
pub struct PredictorState {
    previous: Option<PreviousStep>,
}

impl PredictorState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.previous.is_none()
    }

    pub fn previous(&self) -> Option<&PreviousStep> {
        self.previous.as_ref()
    }

    pub fn record(&mut self, step: PreviousStep) -> Result<()> {
        if step.c.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::Config("stage abscissae must lie in [0, 1]".into()));
        }
        if step.c.len() != step.stages.len() {
            return Err(Error::Config("one abscissa per stage is required".into()));
        }
        self.previous = Some(step);
        Ok(())
    }

    pub fn clear(&mut self) {
        self.previous = None;
    }
}

/// `Ŷ_i = y0 + c_i h S(y0)∇V(y0)`; local accuracy `h²`.
pub fn euler_predictor(problem: &dyn QuadraticOde, y0: &[f64], h: f64, c: &[f64]) -> Result<Vec<Vec<f64>>> {
    let f = problem.rhs(y0)?;
    Ok(c.iter()
        .map(|&ci| {
            let mut y = y0.to_vec();
            axpy(ci * h, &f, &mut y);
            y
        })
        .collect())
}

fn lagrange_eval(nodes: &[f64], values: &[&[f64]], t: f64) -> Vec<f64> {
    let d = values[0].len();
    let mut out = vec![0.0; d];
    for (n, (&xn, vn)) in nodes.iter().zip(values).enumerate() {
        let mut w = 1.0;
        for (m, &xm) in nodes.iter().enumerate() {
            if m != n {
                w *= (t - xm) / (xn - xm);
            }
        }
        axpy(w, vn, &mut out);
    }
    out
}

fn require_previous(state: &PredictorState, h: f64) -> Result<&PreviousStep> {
    let prev = state.previous().ok_or(Error::FirstStep)?;
    if (prev.h - h).abs() > 1e-12 * h.abs() {
        return Err(Error::Config(format!(
            "history predictors need a constant step (previous {}, current {h})",
            prev.h
        )));
    }
    Ok(prev)
}

/// Lagrange extrapolation through the previous step's stages (at `c_j − 1`)
/// and the current start value (at 0). Stages with `c_j = 0` are padding and
/// carry no new information, so they are skipped; repeated abscissae are
/// used once.
pub fn extrapolation_predictor(state: &PredictorState, h: f64, c: &[f64]) -> Result<Vec<Vec<f64>>> {
    let prev = require_previous(state, h)?;
    let mut nodes = vec![0.0];
    let mut values: Vec<&[f64]> = vec![&prev.y_end];
    for (cj, yj) in prev.c.iter().zip(&prev.stages) {
        let x = cj - 1.0;
        if *cj == 0.0 || nodes.iter().any(|&n| (n - x).abs() <= 1e-14) {
            continue;
        }
        nodes.push(x);
        values.push(yj);
    }
    Ok(c.iter().map(|&ci| lagrange_eval(&nodes, &values, ci)).collect())
}

/// Cubic Hermite interpolant on the previous step `[−1, 0]` (relative time),
/// extrapolated to each `c_i`.
pub fn hermite_predictor(state: &PredictorState, h: f64, c: &[f64]) -> Result<Vec<Vec<f64>>> {
    let prev = require_previous(state, h)?;
    let (f0, f1) = prev
        .derivatives
        .as_ref()
        .ok_or_else(|| Error::Config("Hermite prediction needs endpoint derivatives".into()))?;
    Ok(c.iter()
        .map(|&ci| {
            let s = 1.0 + ci;
            let (s2, s3) = (s * s, s * s * s);
            let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
            let h10 = s3 - 2.0 * s2 + s;
            let h01 = -2.0 * s3 + 3.0 * s2;
            let h11 = s3 - s2;
            let mut y = vec![0.0; prev.y_end.len()];
            axpy(h00, &prev.y_start, &mut y);
            axpy(h10 * h, f0, &mut y);
            axpy(h01, &prev.y_end, &mut y);
            axpy(h11 * h, f1, &mut y);
            y
        })
        .collect())
}

const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];

const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];

// Coefficients of the fourth-order continuous extension.
const DP_D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// Interior points where the quintic extension takes its extra derivatives.
const BOOT_THETA: [f64; 2] = [1.0 / 3.0, 2.0 / 3.0];

/// Inverse of the 4×4 matrix mapping `(α₂..α₅)` to the conditions
/// `P(1)`, `P'(1)`, `P'(θa)`, `P'(θb)`.
fn boot_inverse() -> &'static DenseMatrix {
    static INV: OnceLock<DenseMatrix> = OnceLock::new();
    INV.get_or_init(|| {
        let mut m = DenseMatrix::zeros(4, 4);
        for (col, p) in (2..=5).enumerate() {
            let pf = p as f64;
            m[(0, col)] = 1.0;
            m[(1, col)] = pf;
            m[(2, col)] = pf * BOOT_THETA[0].powi(p - 1);
            m[(3, col)] = pf * BOOT_THETA[1].powi(p - 1);
        }
        let mut inv = DenseMatrix::zeros(4, 4);
        for j in 0..4 {
            let mut e = vec![0.0; 4];
            e[j] = 1.0;
            let col = lu_solve(&m, &e).expect("bootstrap matrix is regular");
            for i in 0..4 {
                inv[(i, j)] = col[i];
            }
        }
        inv
    })
}

/// Dense output `P(θ) = y0 + Σ_{m=1}^{5} α_m θ^m` of one continuous explicit step.
#[derive(Debug, Clone)]
pub struct ContinuousStep {
    y0: Vec<f64>,
    alpha: [Vec<f64>; 5],
}

impl ContinuousStep {
    pub fn eval(&self, theta: f64) -> Vec<f64> {
        let mut y = self.y0.clone();
        let mut p = 1.0;
        for a in &self.alpha {
            p *= theta;
            axpy(p, a, &mut y);
        }
        y
    }

    pub fn end(&self) -> Vec<f64> {
        self.eval(1.0)
    }
}

fn combine(y0: &[f64], h: f64, coeffs: &[f64], k: &[Vec<f64>]) -> Vec<f64> {
    let mut y = y0.to_vec();
    for (a, kj) in coeffs.iter().zip(k) {
        if *a != 0.0 {
            axpy(h * a, kj, &mut y);
        }
    }
    y
}

/// One continuous explicit step for `y' = f(τ, y)`, `τ ∈ [0, h]`: the
/// Dormand–Prince 5(4) pair with its quartic extension, lifted to a quintic
/// with uniform local error `O(h⁶)` by two extra derivative evaluations.
pub fn cerk_step<F>(f: F, y0: &[f64], h: f64) -> Result<ContinuousStep>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
    for i in 0..7 {
        let yi = combine(y0, h, &DP_A[i][..i.min(6)], &k);
        k.push(f(DP_C[i] * h, &yi)?);
    }
    let y1 = combine(y0, h, &DP_A[6], &k);
    let r2: Vec<f64> = y1.iter().zip(y0).map(|(a, b)| a - b).collect();
    let r3: Vec<f64> = (0..y0.len()).map(|n| h * k[0][n] - r2[n]).collect();
    let r4: Vec<f64> = (0..y0.len()).map(|n| r2[n] - h * k[6][n] - r3[n]).collect();
    let r5 = combine(&vec![0.0; y0.len()], h, &DP_D, &k);
    let quartic = |t: f64| -> Vec<f64> {
        let u = 1.0 - t;
        (0..y0.len())
            .map(|n| y0[n] + t * (r2[n] + u * (r3[n] + t * (r4[n] + u * r5[n]))))
            .collect()
    };
    let mut boot = Vec::with_capacity(2);
    for &t in &BOOT_THETA {
        boot.push(f(t * h, &quartic(t))?);
    }

    let d = y0.len();
    let a1: Vec<f64> = k[0].iter().map(|v| h * v).collect();
    let inv = boot_inverse();
    let mut alpha = [a1.clone(), vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]];
    for n in 0..d {
        let rhs = [
            y1[n] - y0[n] - a1[n],
            h * k[6][n] - a1[n],
            h * boot[0][n] - a1[n],
            h * boot[1][n] - a1[n],
        ];
        let sol = inv.matvec(&rhs);
        for m in 0..4 {
            alpha[m + 1][n] = sol[m];
        }
    }
    Ok(ContinuousStep {
        y0: y0.to_vec(),
        alpha,
    })
}

/// Continuous explicit prediction, local accuracy `h⁶`. Stiff problems are
/// integrated in the variable `z = e^{−τA} y` and mapped back.
pub fn cerk_predictor(problem: &dyn QuadraticOde, y0: &[f64], h: f64, c: &[f64]) -> Result<Vec<Vec<f64>>> {
    match (problem.stiffness(), problem.stiff_split()) {
        (Stiffness::Stiff, Some(split)) => {
            let step = cerk_step(
                |tau, z| {
                    let y = split.exp_linear(tau, z);
                    Ok(split.exp_linear(-tau, &split.nonlinear(&y)))
                },
                y0,
                h,
            )?;
            Ok(c.iter()
                .map(|&ci| split.exp_linear(ci * h, &step.eval(ci)))
                .collect())
        }
        _ => cerk_predictor_untransformed(problem, y0, h, c),
    }
}

/// Continuous explicit prediction applied directly to `ẏ = S(y)∇V(y)`.
pub fn cerk_predictor_untransformed(
    problem: &dyn QuadraticOde,
    y0: &[f64],
    h: f64,
    c: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let step = cerk_step(|_, y| problem.rhs(y), y0, h)?;
    Ok(c.iter().map(|&ci| step.eval(ci)).collect())
}

/// `y(t + c_i h)` from the closed-form solution.
pub fn exact_predictor(problem: &dyn QuadraticOde, t: f64, h: f64, c: &[f64]) -> Result<Vec<Vec<f64>>> {
    if !problem.has_exact_solution() {
        return Err(Error::Unsupported(format!(
            "{} has no closed-form solution to predict from",
            problem.name()
        )));
    }
    c.iter().map(|&ci| problem.exact_solution(t + ci * h)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PredictorKind {
    Euler,
    Extrapolation,
    Hermite,
    Cerk,
    Exact,
    /// Euler prediction plus seeded uniform noise in `[−amplitude, amplitude]`,
    /// a deliberately poor predictor for conservation tests.
    Perturbed { amplitude: f64, seed: u64 },
}

impl PredictorKind {
    /// Local accuracy exponent `q` for an `s`-stage tableau; `None` means exact.
    pub fn declared_q(&self, s: usize) -> Option<usize> {
        match self {
            PredictorKind::Euler => Some(2),
            PredictorKind::Extrapolation => Some(s + 1),
            PredictorKind::Hermite => Some(4),
            PredictorKind::Cerk => Some(6),
            PredictorKind::Exact => None,
            PredictorKind::Perturbed { .. } => Some(0),
        }
    }

    fn uses_history(&self) -> bool {
        matches!(self, PredictorKind::Extrapolation | PredictorKind::Hermite)
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictorKind::Euler => f.write_str("euler"),
            PredictorKind::Extrapolation => f.write_str("extrapolation"),
            PredictorKind::Hermite => f.write_str("hermite"),
            PredictorKind::Cerk => f.write_str("cerk"),
            PredictorKind::Exact => f.write_str("exact"),
            PredictorKind::Perturbed { amplitude, seed } => {
                write!(f, "perturbed:amp={amplitude},seed={seed}")
            }
        }
    }
}

impl FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Ok(match s {
            "euler" => PredictorKind::Euler,
            "extrapolation" => PredictorKind::Extrapolation,
            "hermite" => PredictorKind::Hermite,
            "cerk" => PredictorKind::Cerk,
            "exact" => PredictorKind::Exact,
            "perturbed" => PredictorKind::Perturbed {
                amplitude: 1e-2,
                seed: 0,
            },
            _ => {
                let bad = || Error::Config(format!("unknown predictor `{s}`"));
                let rest = s.strip_prefix("perturbed:").ok_or_else(bad)?;
                let (mut amplitude, mut seed) = (1e-2, 0);
                for part in rest.split(',') {
                    match part.split_once('=') {
                        Some(("amp", v)) => amplitude = v.parse().map_err(|_| bad())?,
                        Some(("seed", v)) => seed = v.parse().map_err(|_| bad())?,
                        _ => return Err(bad()),
                    }
                }
                PredictorKind::Perturbed { amplitude, seed }
            }
        })
    }
}

/// A predictor together with its history and, for the perturbed kind, its RNG.
#[derive(Debug, Clone)]
pub struct Predictor {
    kind: PredictorKind,
    state: PredictorState,
    rng: Option<ChaCha8Rng>,
}

impl Predictor {
    pub fn new(kind: PredictorKind) -> Self {
        let rng = match kind {
            PredictorKind::Perturbed { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        Self {
            kind,
            state: PredictorState::new(),
            rng,
        }
    }

    pub fn kind(&self) -> PredictorKind {
        self.kind
    }

    pub fn state(&self) -> &PredictorState {
        &self.state
    }

    /// Predictions for the step `[t, t + h]` starting at `y0`. History-based
    /// kinds fall back to the continuous explicit predictor on the first step.
    pub fn predict(
        &mut self,
        problem: &dyn QuadraticOde,
        t: f64,
        y0: &[f64],
        h: f64,
        c: &[f64],
    ) -> Result<Vec<Vec<f64>>> {
        match self.kind {
            PredictorKind::Euler => euler_predictor(problem, y0, h, c),
            PredictorKind::Cerk => cerk_predictor(problem, y0, h, c),
            PredictorKind::Exact => exact_predictor(problem, t, h, c),
            PredictorKind::Extrapolation | PredictorKind::Hermite if self.state.is_empty() => {
                cerk_predictor(problem, y0, h, c)
            }
            PredictorKind::Extrapolation => extrapolation_predictor(&self.state, h, c),
            PredictorKind::Hermite => hermite_predictor(&self.state, h, c),
            PredictorKind::Perturbed { amplitude, .. } => {
                let mut out = euler_predictor(problem, y0, h, c)?;
                let rng = self.rng.as_mut().expect("perturbed predictor owns an RNG");
                for y in &mut out {
                    for v in y.iter_mut() {
                        *v += rng.gen_range(-amplitude..=amplitude);
                    }
                }
                Ok(out)
            }
        }
    }

    /// Stores the finished step for history-based kinds; a no-op otherwise.
    pub fn record(
        &mut self,
        problem: &dyn QuadraticOde,
        y_start: &[f64],
        y_end: &[f64],
        stages: &[Vec<f64>],
        c: &[f64],
        h: f64,
    ) -> Result<()> {
        if !self.kind.uses_history() {
            return Ok(());
        }
        let derivatives = if self.kind == PredictorKind::Hermite {
            let f0 = match self.state.previous() {
                Some(p) if p.y_end == y_start => p.derivatives.as_ref().map(|d| d.1.clone()),
                _ => None,
            };
            let f0 = match f0 {
                Some(f) => f,
                None => problem.rhs(y_start)?,
            };
            Some((f0, problem.rhs(y_end)?))
        } else {
            None
        };
        self.state.record(PreviousStep {
            y_start: y_start.to_vec(),
            y_end: y_end.to_vec(),
            stages: stages.to_vec(),
            c: c.to_vec(),
            derivatives,
            h,
        })
    }

    pub fn reset(&mut self) {
        self.state.clear();
        if let PredictorKind::Perturbed { seed, .. } = self.kind {
            self.rng = Some(ChaCha8Rng::seed_from_u64(seed));
        }
    }
}
