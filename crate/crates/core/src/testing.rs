//! Synthetic problems with known trajectories, for unit tests.

use rand::{Rng, RngCore};

use crate::error::Result;
use crate::linalg::DenseMatrix;
use crate::problems::QuadraticOde;

/// State `(clock, u, w)` with `V = w²/2` and trajectory `(t, p(t), 1)`.
///
/// `S` couples `w` to the clock with weight 1 and to `u` with weight
/// `p'(clock)`, so `ẏ = (w, p'(clock) w, 0)`.
pub struct PolynomialProblem {
    coeffs: Vec<f64>,
    q: DenseMatrix,
}

impl PolynomialProblem {
    /// `p(t) = Σ coeffs[k] t^k`.
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self {
            coeffs,
            q: DenseMatrix::diagonal(&[0.0, 0.0, 1.0]),
        }
    }

    fn p(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    fn dp(&self, t: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * t + k as f64 * c)
    }
}

impl QuadraticOde for PolynomialProblem {
    fn name(&self) -> String {
        "polynomial".into()
    }

    fn dim(&self) -> usize {
        3
    }

    fn skew(&self, y: &[f64]) -> Result<DenseMatrix> {
        let g = self.dp(y[0]);
        let mut s = DenseMatrix::zeros(3, 3);
        s[(0, 2)] = 1.0;
        s[(2, 0)] = -1.0;
        s[(1, 2)] = g;
        s[(2, 1)] = -g;
        Ok(s)
    }

    fn q_matrix(&self) -> &DenseMatrix {
        &self.q
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![0.0, self.p(0.0), 1.0]
    }

    fn period(&self) -> f64 {
        1.0
    }

    fn has_exact_solution(&self) -> bool {
        true
    }

    fn exact_solution(&self, t: f64) -> Result<Vec<f64>> {
        Ok(vec![t, self.p(t), 1.0])
    }

    fn sample_state(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }
}

/// `ẏ = S Q y` with constant skew `S`: a linear problem.
pub struct LinearProblem {
    s: DenseMatrix,
    q: DenseMatrix,
    y0: Vec<f64>,
}

impl LinearProblem {
    pub fn new(s: DenseMatrix, q: DenseMatrix, y0: Vec<f64>) -> Self {
        Self { s, q, y0 }
    }

    /// A 4-dimensional example with `Q = I`.
    pub fn rotation() -> Self {
        let s = DenseMatrix::from_rows(&[
            vec![0.0, 1.0, -0.5, 0.2],
            vec![-1.0, 0.0, 0.3, -0.7],
            vec![0.5, -0.3, 0.0, 1.1],
            vec![-0.2, 0.7, -1.1, 0.0],
        ]);
        Self::new(s, DenseMatrix::identity(4), vec![1.0, -0.5, 0.25, 2.0])
    }
}

impl QuadraticOde for LinearProblem {
    fn name(&self) -> String {
        "linear".into()
    }

    fn dim(&self) -> usize {
        self.y0.len()
    }

    fn skew(&self, _y: &[f64]) -> Result<DenseMatrix> {
        Ok(self.s.clone())
    }

    fn q_matrix(&self) -> &DenseMatrix {
        &self.q
    }

    fn initial_state(&self) -> Vec<f64> {
        self.y0.clone()
    }

    fn period(&self) -> f64 {
        1.0
    }

    fn sample_state(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        (0..self.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }
}
