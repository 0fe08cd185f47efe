//! Test problems of the form `ẏ = S(y) ∇V(y)` with `V(y) = ½⟨y, Qy⟩`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, RngCore};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm_inf, DenseMatrix};
use crate::special::{elliptic_k, jacobi_elliptic, solve_kepler_equation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stiffness {
    NonStiff,
    Stiff,
}

/// Splitting `ẏ = A y + g(y)` of a stiff problem, with `e^{tA}` available in closed form.
pub trait StiffSplit {
    /// `e^{tA} y`.
    fn exp_linear(&self, t: f64, y: &[f64]) -> Vec<f64>;
    /// The non-stiff remainder `g(y)`.
    fn nonlinear(&self, y: &[f64]) -> Vec<f64>;
}

/// A system `ẏ = S(y) Q y` with skew-symmetric `S(y)` and symmetric `Q`.
pub trait QuadraticOde: Send + Sync {
    fn name(&self) -> String;

    fn dim(&self) -> usize;

    /// The skew-symmetric structure matrix `S(y)`.
    fn skew(&self, y: &[f64]) -> Result<DenseMatrix>;

    /// The symmetric matrix of the invariant.
    fn q_matrix(&self) -> &DenseMatrix;

    /// `∇V(y) = Q y`.
    fn grad(&self, y: &[f64]) -> Vec<f64> {
        self.q_matrix().matvec(y)
    }

    /// `V(y) = ½⟨y, Qy⟩`.
    fn invariant(&self, y: &[f64]) -> f64 {
        0.5 * dot(y, &self.grad(y))
    }

    /// Right-hand side `S(y) ∇V(y)`.
    fn rhs(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.skew(y)?.matvec(&self.grad(y)))
    }

    fn initial_state(&self) -> Vec<f64>;

    /// Period of the reference solution (the natural time unit of the experiments).
    fn period(&self) -> f64;

    fn has_exact_solution(&self) -> bool {
        false
    }

    fn exact_solution(&self, _t: f64) -> Result<Vec<f64>> {
        Err(Error::Unsupported(format!("{} has no closed-form solution", self.name())))
    }

    /// Names of extra scalar observables tracked by drift studies.
    fn observable_names(&self) -> Vec<&'static str> {
        Vec::new()
    }

    fn observables(&self, _y: &[f64]) -> Vec<f64> {
        Vec::new()
    }

    fn stiffness(&self) -> Stiffness {
        Stiffness::NonStiff
    }

    fn stiff_split(&self) -> Option<&dyn StiffSplit> {
        None
    }

    /// A random state in the region where `S` is defined, for property tests.
    fn sample_state(&self, rng: &mut dyn RngCore) -> Vec<f64>;
}

/// Euler's equations of free rigid-body rotation, `H(y) = ½|y|²`.
#[derive(Debug, Clone)]
pub struct RigidBodyProblem {
    pub alpha: f64,
    pub beta: f64,
    y0: Vec<f64>,
    q: DenseMatrix,
    /// `(amplitude, m)` of the closed form `(A sn, cn, dn)(t | m)` when known.
    exact: Option<(f64, f64)>,
    period: f64,
}

impl RigidBodyProblem {
    pub fn new(alpha: f64, beta: f64, y0: Vec<f64>) -> Result<Self> {
        if y0.len() != 3 {
            return Err(Error::Config("rigid body state has 3 components".into()));
        }
        Ok(Self {
            alpha,
            beta,
            y0,
            q: DenseMatrix::identity(3),
            exact: None,
            period: f64::NAN,
        })
    }

    /// `α = 1 + 1/√1.51`, `β = 1 − 0.51/√1.51`, `y₀ = (0, 1, 1)`.
    ///
    /// With these values `α − β = √1.51`, `α − 1 = 1/√1.51` and
    /// `1 − β = 0.51/√1.51`, so the solution is `(√1.51 sn, cn, dn)(t | 0.51)`.
    pub fn standard() -> Self {
        let r = 1.51f64.sqrt();
        let m = 0.51;
        let period = 4.0 * elliptic_k(m).expect("m in range");
        Self {
            alpha: 1.0 + 1.0 / r,
            beta: 1.0 - 0.51 / r,
            y0: vec![0.0, 1.0, 1.0],
            q: DenseMatrix::identity(3),
            exact: Some((r, m)),
            period,
        }
    }

    /// The second quadratic invariant `I(y) = (y₁² + β y₂² + α y₃²)/2`.
    pub fn secondary_invariant(&self, y: &[f64]) -> f64 {
        0.5 * (y[0] * y[0] + self.beta * y[1] * y[1] + self.alpha * y[2] * y[2])
    }
}

impl QuadraticOde for RigidBodyProblem {
    fn name(&self) -> String {
        "euler".into()
    }

    fn dim(&self) -> usize {
        3
    }

    fn skew(&self, y: &[f64]) -> Result<DenseMatrix> {
        let (a, b) = (self.alpha, self.beta);
        Ok(DenseMatrix::from_row_major(
            3,
            3,
            vec![
                0.0,
                a * y[2],
                -b * y[1],
                -a * y[2],
                0.0,
                y[0],
                b * y[1],
                -y[0],
                0.0,
            ],
        ))
    }

    fn q_matrix(&self) -> &DenseMatrix {
        &self.q
    }

    fn rhs(&self, y: &[f64]) -> Result<Vec<f64>> {
        let (a, b) = (self.alpha, self.beta);
        Ok(vec![
            (a - b) * y[1] * y[2],
            (1.0 - a) * y[0] * y[2],
            (b - 1.0) * y[0] * y[1],
        ])
    }

    fn initial_state(&self) -> Vec<f64> {
        self.y0.clone()
    }

    fn period(&self) -> f64 {
        self.period
    }

    fn has_exact_solution(&self) -> bool {
        self.exact.is_some()
    }

    fn exact_solution(&self, t: f64) -> Result<Vec<f64>> {
        let (amp, m) = self
            .exact
            .ok_or_else(|| Error::Unsupported("rigid body with custom parameters".into()))?;
        let (sn, cn, dn) = jacobi_elliptic(t, m)?;
        Ok(vec![amp * sn, cn, dn])
    }

    fn observable_names(&self) -> Vec<&'static str> {
        vec!["I"]
    }

    fn observables(&self, y: &[f64]) -> Vec<f64> {
        vec![self.secondary_invariant(y)]
    }

    fn sample_state(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect()
    }
}

/// Kepler two-body problem with `V(y) = y₁y₄ − y₂y₃` (angular momentum).
#[derive(Debug, Clone)]
pub struct KeplerProblem {
    pub e: f64,
    q: DenseMatrix,
}

/// Squared radius below which the Kepler structure matrix is not evaluated.
pub const KEPLER_MIN_R2: f64 = 1e-12;

impl KeplerProblem {
    /// Periapsis start `(1 − e, 0, 0, √((1+e)/(1−e)))`, period `2π`.
    pub fn standard(e: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&e) {
            return Err(Error::Domain(format!("eccentricity {e} outside [0, 1)")));
        }
        let mut q = DenseMatrix::zeros(4, 4);
        q[(0, 3)] = 1.0;
        q[(3, 0)] = 1.0;
        q[(1, 2)] = -1.0;
        q[(2, 1)] = -1.0;
        Ok(Self { e, q })
    }

    /// Hamiltonian energy `|v|²/2 − 1/r` (not quadratic; a diagnostic only).
    pub fn energy(&self, y: &[f64]) -> f64 {
        0.5 * (y[2] * y[2] + y[3] * y[3]) - 1.0 / (y[0] * y[0] + y[1] * y[1]).sqrt()
    }

    fn inv_r3(y: &[f64]) -> Result<f64> {
        let r2 = y[0] * y[0] + y[1] * y[1];
        if !(r2 >= KEPLER_MIN_R2) {
            return Err(Error::Domain(format!(
                "near-collision state (r² = {r2:.3e}): structure matrix undefined"
            )));
        }
        Ok(1.0 / (r2 * r2.sqrt()))
    }
}

impl QuadraticOde for KeplerProblem {
    fn name(&self) -> String {
        format!("kepler:e={}", self.e)
    }

    fn dim(&self) -> usize {
        4
    }

    fn skew(&self, y: &[f64]) -> Result<DenseMatrix> {
        let w = Self::inv_r3(y)?;
        let mut s = DenseMatrix::zeros(4, 4);
        s[(0, 1)] = -1.0;
        s[(1, 0)] = 1.0;
        s[(2, 3)] = -w;
        s[(3, 2)] = w;
        Ok(s)
    }

    fn q_matrix(&self) -> &DenseMatrix {
        &self.q
    }

    fn rhs(&self, y: &[f64]) -> Result<Vec<f64>> {
        let w = Self::inv_r3(y)?;
        Ok(vec![y[2], y[3], -w * y[0], -w * y[1]])
    }

    fn initial_state(&self) -> Vec<f64> {
        let e = self.e;
        vec![1.0 - e, 0.0, 0.0, ((1.0 + e) / (1.0 - e)).sqrt()]
    }

    fn period(&self) -> f64 {
        2.0 * PI
    }

    fn has_exact_solution(&self) -> bool {
        true
    }

    /// Two-body motion with unit mean motion: `E − e sin E = t`, position
    /// `(cos E − e, √(1−e²) sin E)`, velocity by `Ė = 1/(1 − e cos E)`.
    fn exact_solution(&self, t: f64) -> Result<Vec<f64>> {
        let e = self.e;
        let ecc = solve_kepler_equation(t, e, 1e-15)?;
        let (s, c) = ecc.sin_cos();
        let b = (1.0 - e * e).sqrt();
        let rate = 1.0 / (1.0 - e * c);
        Ok(vec![c - e, b * s, -s * rate, b * c * rate])
    }

    fn observable_names(&self) -> Vec<&'static str> {
        vec!["energy"]
    }

    fn observables(&self, y: &[f64]) -> Vec<f64> {
        vec![self.energy(y)]
    }

    fn sample_state(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let r = rng.gen_range(0.5..2.0);
        let th = rng.gen_range(0.0..2.0 * PI);
        vec![
            r * th.cos(),
            r * th.sin(),
            rng.gen_range(-1.5..1.5),
            rng.gen_range(-1.5..1.5),
        ]
    }
}

/// Fourier-spectral operators on a periodic grid of `d` points over `[0, L)`.
#[derive(Clone)]
pub struct SpectralGrid {
    d: usize,
    length: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Angular wavenumbers `2πj/L`, FFT ordering, Nyquist entry included.
    wavenumbers: Vec<f64>,
}

impl fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralGrid")
            .field("d", &self.d)
            .field("length", &self.length)
            .finish()
    }
}

/// Imaginary residue tolerated when returning to real space.
const REAL_RESIDUE_TOL: f64 = 1e-12;

impl SpectralGrid {
    pub fn new(d: usize, length: f64) -> Result<Self> {
        if d < 2 || !d.is_power_of_two() {
            return Err(Error::Config(format!("grid size {d} is not a power of two")));
        }
        let mut planner = FftPlanner::new();
        let wavenumbers = (0..d)
            .map(|n| {
                let j = if n <= d / 2 { n as f64 } else { n as f64 - d as f64 };
                2.0 * PI * j / length
            })
            .collect();
        Ok(Self {
            d,
            length,
            forward: planner.plan_fft_forward(d),
            inverse: planner.plan_fft_inverse(d),
            wavenumbers,
        })
    }

    pub fn len(&self) -> usize {
        self.d
    }

    pub fn is_empty(&self) -> bool {
        self.d == 0
    }

    fn is_nyquist(&self, n: usize) -> bool {
        n == self.d / 2
    }

    /// Multiplies Fourier mode `n` by `multiplier(n)` and returns to real space.
    fn apply_multiplier(&self, y: &[f64], multiplier: impl Fn(usize) -> Complex64) -> Vec<f64> {
        assert_eq!(y.len(), self.d, "grid vector length mismatch");
        let mut buf: Vec<Complex64> = y.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        for (n, z) in buf.iter_mut().enumerate() {
            *z *= multiplier(n);
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.d as f64;
        let out: Vec<f64> = buf.iter().map(|z| z.re * scale).collect();
        // Non-finite states are left for the caller's divergence checks.
        if y.iter().all(|v| v.is_finite()) {
            let residue = buf.iter().fold(0.0f64, |m, z| m.max(z.im.abs())) * scale;
            let size = 1.0 + norm_inf(y) + norm_inf(&out);
            assert!(
                residue <= REAL_RESIDUE_TOL * size,
                "spectral operator produced imaginary residue {residue:.3e}"
            );
        }
        out
    }

    /// Spectral derivative of odd order 1 or 3; the Nyquist mode is dropped.
    pub fn diff(&self, y: &[f64], order: u32) -> Vec<f64> {
        assert!(order == 1 || order == 3, "only first and third derivatives");
        self.apply_multiplier(y, |n| {
            if self.is_nyquist(n) {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, self.wavenumbers[n]).powu(order)
            }
        })
    }

    /// `e^{tA} y` with `A = −δₓ³`: mode `n` picks up `exp(−t (iκₙ)³)`.
    pub fn exp_minus_third_derivative(&self, t: f64, y: &[f64]) -> Vec<f64> {
        self.apply_multiplier(y, |n| {
            if self.is_nyquist(n) {
                Complex64::new(1.0, 0.0)
            } else {
                let k = self.wavenumbers[n];
                Complex64::from_polar(1.0, t * k * k * k)
            }
        })
    }

    /// Dense matrix of a linear grid operator, column `j` = `op(e_j)`.
    fn dense(&self, op: impl Fn(&[f64]) -> Vec<f64>) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.d, self.d);
        let mut e = vec![0.0; self.d];
        for j in 0..self.d {
            e[j] = 1.0;
            let col = op(&e);
            for i in 0..self.d {
                m[(i, j)] = col[i];
            }
            e[j] = 0.0;
        }
        m
    }
}

fn antisymmetrise(m: &DenseMatrix) -> DenseMatrix {
    let n = m.rows();
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = 0.5 * (m[(i, j)] - m[(j, i)]);
        }
    }
    out
}

/// Norm-preserving Fourier-spectral semi-discretisation of the periodic KdV
/// equation `u_t + 6uu_x + u_xxx = 0`, referenced to a cnoidal travelling wave.
#[derive(Debug, Clone)]
pub struct KdVSpectralProblem {
    pub d: usize,
    /// Elliptic modulus `k` of the cnoidal wave (parameter `m = k²`).
    pub k: f64,
    pub kappa: f64,
    pub u0: f64,
    pub x0: f64,
    length: f64,
    speed: f64,
    period: f64,
    dx: f64,
    grid: SpectralGrid,
    d1: DenseMatrix,
    d3: DenseMatrix,
    q: DenseMatrix,
}

impl KdVSpectralProblem {
    pub fn new(d: usize, k: f64, kappa: f64, u0: f64, x0: f64) -> Result<Self> {
        let m = k * k;
        // One spatial period of cn²(κx | m) is 2K(m)/κ.
        let length = 2.0 * elliptic_k(m)? / kappa;
        let speed = 6.0 * u0 + 4.0 * (2.0 * m - 1.0) * kappa * kappa;
        let period = (length / (speed * kappa)).abs();
        let grid = SpectralGrid::new(d, length)?;
        // Odd spectral derivatives are skew; remove the FFT roundoff that breaks it.
        let d1 = antisymmetrise(&grid.dense(|v| grid.diff(v, 1)));
        let d3 = antisymmetrise(&grid.dense(|v| grid.diff(v, 3)));
        let dx = length / d as f64;
        Ok(Self {
            d,
            k,
            kappa,
            u0,
            x0,
            length,
            speed,
            period,
            dx,
            grid,
            d1,
            d3,
            q: DenseMatrix::identity(d).scaled(dx),
        })
    }

    /// `k = √0.1`, `u₀ = 0`, `κ = 1`, `x₀ = 0`.
    pub fn standard(d: usize) -> Result<Self> {
        Self::new(d, 0.1f64.sqrt(), 1.0, 0.0, 0.0)
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn wave_speed(&self) -> f64 {
        self.speed
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Grid points `x_j = j Δx`, `j = 1..d`.
    pub fn grid_points(&self) -> Vec<f64> {
        (1..=self.d).map(|j| j as f64 * self.dx).collect()
    }

    pub fn spectral_diff(&self, y: &[f64], order: u32) -> Vec<f64> {
        self.grid.diff(y, order)
    }

    pub fn expa_apply(&self, t: f64, y: &[f64]) -> Vec<f64> {
        self.grid.exp_minus_third_derivative(t, y)
    }

    /// `S(v) w` without the `1/Δx` scaling, i.e. `−2(v δₓw + δₓ(v w)) − δₓ³w`.
    pub fn apply_operator(&self, v: &[f64], w: &[f64]) -> Vec<f64> {
        let dw = self.grid.diff(w, 1);
        let vw: Vec<f64> = v.iter().zip(w).map(|(a, b)| a * b).collect();
        let dvw = self.grid.diff(&vw, 1);
        let d3w = self.grid.diff(w, 3);
        (0..self.d)
            .map(|i| -2.0 * (v[i] * dw[i] + dvw[i]) - d3w[i])
            .collect()
    }

    /// Cnoidal wave `u₀ + 2k²κ² cn²(κ(x − x₀ − ct) | k²)`.
    pub fn cnoidal(&self, t: f64, x: f64) -> Result<f64> {
        let m = self.k * self.k;
        let (_, cn, _) = jacobi_elliptic(self.kappa * (x - self.x0 - self.speed * t), m)?;
        Ok(self.u0 + 2.0 * m * self.kappa * self.kappa * cn * cn)
    }
}

impl StiffSplit for KdVSpectralProblem {
    fn exp_linear(&self, t: f64, y: &[f64]) -> Vec<f64> {
        self.expa_apply(t, y)
    }

    fn nonlinear(&self, y: &[f64]) -> Vec<f64> {
        let dy = self.grid.diff(y, 1);
        let y2: Vec<f64> = y.iter().map(|v| v * v).collect();
        let dy2 = self.grid.diff(&y2, 1);
        (0..self.d).map(|i| -2.0 * (y[i] * dy[i] + dy2[i])).collect()
    }
}

impl QuadraticOde for KdVSpectralProblem {
    fn name(&self) -> String {
        format!("kdv:d={}", self.d)
    }

    fn dim(&self) -> usize {
        self.d
    }

    /// `S(v) = (−2(diag(v) D + D diag(v)) − D³) / Δx`, so that `S(v) Q v`
    /// with `Q = Δx I` is the spectral KdV right-hand side.
    fn skew(&self, v: &[f64]) -> Result<DenseMatrix> {
        let n = self.d;
        let inv_dx = 1.0 / self.dx;
        let mut s = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                s[(i, j)] = inv_dx * (-2.0 * (v[i] + v[j]) * self.d1[(i, j)] - self.d3[(i, j)]);
            }
        }
        Ok(s)
    }

    fn q_matrix(&self) -> &DenseMatrix {
        &self.q
    }

    fn grad(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| v * self.dx).collect()
    }

    fn rhs(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.apply_operator(y, y))
    }

    fn initial_state(&self) -> Vec<f64> {
        self.exact_solution(0.0).expect("cnoidal parameters are valid")
    }

    fn period(&self) -> f64 {
        self.period
    }

    fn has_exact_solution(&self) -> bool {
        true
    }

    fn exact_solution(&self, t: f64) -> Result<Vec<f64>> {
        self.grid_points().into_iter().map(|x| self.cnoidal(t, x)).collect()
    }

    fn observable_names(&self) -> Vec<&'static str> {
        vec!["mass"]
    }

    fn observables(&self, y: &[f64]) -> Vec<f64> {
        vec![y.iter().sum::<f64>() * self.dx]
    }

    fn stiffness(&self) -> Stiffness {
        Stiffness::Stiff
    }

    fn stiff_split(&self) -> Option<&dyn StiffSplit> {
        Some(self)
    }

    fn sample_state(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        (0..self.d).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }
}

/// Command-line problem identifiers: `euler`, `kepler:e=<val>`, `kdv:d=<val>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProblemId {
    Euler,
    Kepler { e: f64 },
    Kdv { d: usize },
}

impl ProblemId {
    pub fn build(&self) -> Result<Box<dyn QuadraticOde>> {
        Ok(match self {
            ProblemId::Euler => Box::new(RigidBodyProblem::standard()),
            ProblemId::Kepler { e } => Box::new(KeplerProblem::standard(*e)?),
            ProblemId::Kdv { d } => Box::new(KdVSpectralProblem::standard(*d)?),
        })
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemId::Euler => f.write_str("euler"),
            ProblemId::Kepler { e } => write!(f, "kepler:e={e}"),
            ProblemId::Kdv { d } => write!(f, "kdv:d={d}"),
        }
    }
}

impl FromStr for ProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "euler" {
            return Ok(ProblemId::Euler);
        }
        let bad = || Error::Config(format!("cannot parse problem `{s}`"));
        if let Some(rest) = s.strip_prefix("kepler:e=") {
            let e: f64 = rest.parse().map_err(|_| bad())?;
            return Ok(ProblemId::Kepler { e });
        }
        if let Some(rest) = s.strip_prefix("kdv:d=") {
            let d: usize = rest.parse().map_err(|_| bad())?;
            return Ok(ProblemId::Kdv { d });
        }
        Err(bad())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{norm2, sub};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn check_skew(p: &dyn QuadraticOde, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..200 {
            let y = p.sample_state(&mut rng);
            let w = p.sample_state(&mut rng);
            let s = p.skew(&y).unwrap();
            assert!(s.skew_residual() <= 1e-13 * (1.0 + s.max_abs()), "{}", p.name());
            let form = dot(&w, &s.matvec(&w));
            assert!(form.abs() <= 1e-11 * dot(&w, &w) * (1.0 + s.norm_inf()));
            let g = p.grad(&y);
            let cons = dot(&g, &s.matvec(&g));
            assert!(cons.abs() <= 1e-12 * (1.0 + dot(&g, &g) * s.norm_inf()));
        }
    }

    #[test]
    fn structure_matrices_are_skew() {
        check_skew(&RigidBodyProblem::standard(), 1);
        check_skew(&KeplerProblem::standard(0.6).unwrap(), 2);
        check_skew(&KdVSpectralProblem::standard(16).unwrap(), 3);
    }

    #[test]
    fn rhs_fast_paths_agree_with_matrix_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let problems: Vec<Box<dyn QuadraticOde>> = vec![
            Box::new(RigidBodyProblem::standard()),
            Box::new(KeplerProblem::standard(0.3).unwrap()),
            Box::new(KdVSpectralProblem::standard(16).unwrap()),
        ];
        for p in &problems {
            for _ in 0..20 {
                let y = p.sample_state(&mut rng);
                let slow = p.skew(&y).unwrap().matvec(&p.grad(&y));
                let fast = p.rhs(&y).unwrap();
                assert!(norm_inf(&sub(&slow, &fast)) <= 1e-10 * (1.0 + norm_inf(&slow)));
            }
        }
    }

    #[test]
    fn rigid_body_exact_solution() {
        let p = RigidBodyProblem::standard();
        assert_eq!(p.exact_solution(0.0).unwrap(), vec![0.0, 1.0, 1.0]);
        assert!((p.period() - 7.450563209330954).abs() < 1e-12);
        for i in 0..100 {
            let t = 0.0745 * i as f64;
            let y = p.exact_solution(t).unwrap();
            // Derivative of the closed form from the Jacobi derivative identities.
            let (sn, cn, dn) = jacobi_elliptic(t, 0.51).unwrap();
            let dy = [1.51f64.sqrt() * cn * dn, -sn * dn, -0.51 * sn * cn];
            let f = p.rhs(&y).unwrap();
            for c in 0..3 {
                assert!((dy[c] - f[c]).abs() <= 1e-10);
            }
            assert!((p.invariant(&y) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn kepler_exact_solution() {
        let p = KeplerProblem::standard(0.6).unwrap();
        let y0 = p.initial_state();
        let e0 = p.exact_solution(0.0).unwrap();
        assert!(norm_inf(&sub(&y0, &e0)) < 1e-15);
        let v0 = p.invariant(&y0);
        assert!((v0 - (1.0 - 0.36f64).sqrt()).abs() < 1e-15);
        for i in 0..200 {
            let t = 0.05 * i as f64;
            let y = p.exact_solution(t).unwrap();
            assert!((p.invariant(&y) - v0).abs() < 1e-12);
            // Velocity equals the derivative of position (central differences).
            let eps = 1e-6;
            let yp = p.exact_solution(t + eps).unwrap();
            let ym = p.exact_solution(t - eps).unwrap();
            let f = p.rhs(&y).unwrap();
            for c in 0..4 {
                assert!(((yp[c] - ym[c]) / (2.0 * eps) - f[c]).abs() < 1e-7);
            }
        }
        let yt = p.exact_solution(2.0 * PI).unwrap();
        assert!(norm_inf(&sub(&yt, &y0)) < 1e-10);
    }

    #[test]
    fn kepler_rejects_collision_and_bad_eccentricity() {
        let p = KeplerProblem::standard(0.1).unwrap();
        assert!(matches!(p.skew(&[0.0, 0.0, 1.0, 1.0]), Err(Error::Domain(_))));
        assert!(KeplerProblem::standard(1.0).is_err());
        assert!(KeplerProblem::standard(-0.1).is_err());
    }

    #[test]
    fn kdv_parameters() {
        let p = KdVSpectralProblem::standard(16).unwrap();
        assert!((p.length() - 3.2248826974404383).abs() < 1e-10);
        assert!((p.wave_speed() + 3.2).abs() < 1e-15);
        assert!((p.period() - 1.007775842950137).abs() < 1e-10);
        assert!(matches!(KdVSpectralProblem::standard(12), Err(Error::Config(_))));
    }

    #[test]
    fn kdv_exact_invariant_is_constant() {
        let p = KdVSpectralProblem::standard(16).unwrap();
        let v0 = p.invariant(&p.initial_state());
        for i in 0..10 {
            let y = p.exact_solution(0.1 * i as f64).unwrap();
            assert!((p.invariant(&y) - v0).abs() <= 1e-8);
        }
    }

    #[test]
    fn kdv_dense_operator_is_skew() {
        let p = KdVSpectralProblem::standard(16).unwrap();
        let v = p.initial_state();
        let mut m = DenseMatrix::zeros(16, 16);
        let mut e = vec![0.0; 16];
        for j in 0..16 {
            e[j] = 1.0;
            let col = p.apply_operator(&v, &e);
            for i in 0..16 {
                m[(i, j)] = col[i];
            }
            e[j] = 0.0;
        }
        assert!(m.skew_residual() <= 1e-11);
    }

    #[test]
    fn spectral_derivatives() {
        let p = KdVSpectralProblem::standard(16).unwrap();
        let x = p.grid_points();
        let kw = 2.0 * PI / p.length();
        let ones = vec![1.0; 16];
        assert!(norm_inf(&p.spectral_diff(&ones, 1)) < 1e-13);
        let y: Vec<f64> = x.iter().map(|&x| (kw * x).sin()).collect();
        let dy = p.spectral_diff(&y, 1);
        let d3y = p.spectral_diff(&y, 3);
        for i in 0..16 {
            assert!((dy[i] - kw * (kw * x[i]).cos()).abs() < 1e-12);
            assert!((d3y[i] + kw.powi(3) * (kw * x[i]).cos()).abs() < 1e-10);
        }
        let thrice = p.spectral_diff(&p.spectral_diff(&dy, 1), 1);
        assert!(norm_inf(&sub(&thrice, &d3y)) < 1e-10);
    }

    #[test]
    fn exponential_is_unitary_group() {
        let p = KdVSpectralProblem::standard(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = p.sample_state(&mut rng);
        assert!(norm_inf(&sub(&p.expa_apply(0.0, &y), &y)) < 1e-14);
        for t in [0.01, 0.3, 2.0] {
            let z = p.expa_apply(t, &y);
            assert!((norm2(&z) - norm2(&y)).abs() < 1e-13);
            let back = p.expa_apply(-t, &z);
            assert!(norm_inf(&sub(&back, &y)) < 1e-12);
        }
    }

    #[test]
    fn problem_ids() {
        for s in ["euler", "kepler:e=0.6", "kdv:d=16"] {
            let id: ProblemId = s.parse().unwrap();
            assert_eq!(id.to_string(), s);
            assert!(id.build().is_ok());
        }
        assert!("kdv:d=10".parse::<ProblemId>().unwrap().build().is_err());
        assert!("pendulum".parse::<ProblemId>().is_err());
    }
}
