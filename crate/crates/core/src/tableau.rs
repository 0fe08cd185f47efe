//! Butcher tableaux of canonical Runge–Kutta methods and the partitioned
//! pairs whose explicit half supplies the frozen-operator stages.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{lu_solve, DenseMatrix};

/// Tolerance for structural checks on built-in tableaux.
pub const STRUCTURE_TOL: f64 = 1e-13;

/// Stage coefficients `(A, b, c)` of an `s`-stage Runge–Kutta method.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    a: DenseMatrix,
    b: Vec<f64>,
    c: Vec<f64>,
    order: usize,
}

impl ButcherTableau {
    pub fn new(a: DenseMatrix, b: Vec<f64>, c: Vec<f64>, order: usize) -> Result<Self> {
        let s = b.len();
        if s == 0 {
            return Err(Error::InvalidTableau("at least one stage is required".into()));
        }
        if a.rows() != s || a.cols() != s || c.len() != s {
            return Err(Error::InvalidTableau(format!(
                "A is {}x{}, b has {} entries, c has {}",
                a.rows(),
                a.cols(),
                s,
                c.len()
            )));
        }
        if order == 0 {
            return Err(Error::InvalidTableau("declared order must be positive".into()));
        }
        if !a.all_finite() || b.iter().chain(&c).any(|v| !v.is_finite()) {
            return Err(Error::InvalidTableau("non-finite coefficient".into()));
        }
        Ok(Self { a, b, c, order })
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn declared_order(&self) -> usize {
        self.order
    }

    /// `max_i |c_i − Σ_j a_ij|`.
    pub fn row_sum_defect(&self) -> f64 {
        (0..self.stages())
            .map(|i| (self.c[i] - self.a.row(i).iter().sum::<f64>()).abs())
            .fold(0.0, f64::max)
    }

    /// `max_{i,j} |b_i a_ij + b_j a_ji − b_i b_j|`.
    pub fn canonical_residual(&self) -> f64 {
        let s = self.stages();
        let mut r: f64 = 0.0;
        for i in 0..s {
            for j in 0..s {
                let v = self.b[i] * self.a[(i, j)] + self.b[j] * self.a[(j, i)] - self.b[i] * self.b[j];
                r = r.max(v.abs());
            }
        }
        r
    }

    /// Prepends `n` stages with zero rows, zero weights and zero abscissae.
    /// The resulting method is the same integrator with redundant stages.
    pub fn with_leading_zero_stages(&self, n: usize) -> Self {
        let s = self.stages();
        let mut a = DenseMatrix::zeros(s + n, s + n);
        for i in 0..s {
            for j in 0..s {
                a[(i + n, j + n)] = self.a[(i, j)];
            }
        }
        let mut b = vec![0.0; n];
        b.extend_from_slice(&self.b);
        let mut c = vec![0.0; n];
        c.extend_from_slice(&self.c);
        Self {
            a,
            b,
            c,
            order: self.order,
        }
    }
}

/// True iff the canonical residual is at most `tol`.
pub fn is_canonical(t: &ButcherTableau, tol: f64) -> bool {
    assert!(tol > 0.0, "tolerance must be positive");
    t.canonical_residual() <= tol
}

/// Legendre polynomial `P_n(x)` and its derivative by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Roots of `P_s` on (−1, 1) by Newton iteration from Chebyshev-like guesses.
fn legendre_roots(s: usize) -> Vec<f64> {
    let mut roots = Vec::with_capacity(s);
    for i in 1..=s {
        let mut x = (PI * (i as f64 - 0.25) / (s as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(s, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        roots.push(x);
    }
    roots.sort_by(f64::total_cmp);
    roots
}

/// The `s`-stage Gauss collocation method (order `2s`).
pub fn gauss(s: usize) -> Result<ButcherTableau> {
    if s == 0 {
        return Err(Error::InvalidTableau("Gauss method needs s >= 1".into()));
    }
    let c: Vec<f64> = legendre_roots(s).into_iter().map(|x| 0.5 * (1.0 + x)).collect();
    // Rows of the transposed Vandermonde matrix: entry (k, j) = c_j^k.
    let mut vt = DenseMatrix::zeros(s, s);
    for k in 0..s {
        for j in 0..s {
            vt[(k, j)] = c[j].powi(k as i32);
        }
    }
    let quad: Vec<f64> = (1..=s).map(|k| 1.0 / k as f64).collect();
    let b = lu_solve(&vt, &quad)?;
    let mut a = DenseMatrix::zeros(s, s);
    for i in 0..s {
        let rhs: Vec<f64> = (1..=s).map(|k| c[i].powi(k as i32) / k as f64).collect();
        let row = lu_solve(&vt, &rhs)?;
        for j in 0..s {
            a[(i, j)] = row[j];
        }
    }
    ButcherTableau::new(a, b, c, 2 * s)
}

/// `α = (2 + 2^{−1/3} + 2^{1/3}) / 3`, the weight of the order-3 three-stage
/// diagonally implicit canonical method.
pub fn dirk3_alpha() -> f64 {
    let r = 2f64.cbrt();
    (2.0 + 1.0 / r + r) / 3.0
}

/// Weight vectors with published orders for the diagonally implicit canonical family.
fn known_dirk_families() -> Vec<(Vec<f64>, usize)> {
    let alpha = dirk3_alpha();
    let p = 1.0 / (4.0 - 4f64.cbrt());
    vec![
        (vec![1.0], 2),
        (vec![0.5, 0.5], 2),
        (vec![alpha, alpha, 1.0 - 2.0 * alpha], 3),
        (vec![p, p, 1.0 - 4.0 * p, p, p], 4),
    ]
}

/// Diagonally implicit canonical method built from its weights:
/// `a_ij = b_j (j < i)`, `a_ii = b_i / 2`, `c_i = b_1 + … + b_{i−1} + b_i / 2`.
///
/// Weights that match a known family carry its published order. Any other
/// consistent weight vector is declared order 2: the canonical condition
/// summed over all `(i, j)` forces `Σ b_i c_i = 1/2`.
pub fn dirk_canonical(b: &[f64]) -> Result<ButcherTableau> {
    if b.is_empty() || b.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidTableau("weights must be finite and non-empty".into()));
    }
    let sum: f64 = b.iter().sum();
    if (sum - 1.0).abs() > STRUCTURE_TOL {
        return Err(Error::InvalidTableau(format!(
            "weights sum to {sum}, an inconsistent quadrature"
        )));
    }
    let s = b.len();
    let mut a = DenseMatrix::zeros(s, s);
    let mut c = Vec::with_capacity(s);
    let mut partial = 0.0;
    for i in 0..s {
        for j in 0..i {
            a[(i, j)] = b[j];
        }
        a[(i, i)] = 0.5 * b[i];
        c.push(partial + 0.5 * b[i]);
        partial += b[i];
    }
    let order = known_dirk_families()
        .into_iter()
        .find(|(fam, _)| {
            fam.len() == s && fam.iter().zip(b).all(|(x, y)| (x - y).abs() <= STRUCTURE_TOL)
        })
        .map_or(2, |(_, p)| p);
    ButcherTableau::new(a, b.to_vec(), c, order)
}

/// The three-stage order-3 member of the diagonally implicit canonical family.
pub fn dirk3() -> ButcherTableau {
    let alpha = dirk3_alpha();
    dirk_canonical(&[alpha, alpha, 1.0 - 2.0 * alpha]).expect("preset weights are consistent")
}

/// A canonical main method paired with a strictly lower-triangular predictor tableau.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedTableau {
    main: ButcherTableau,
    ahat: DenseMatrix,
    chat: Vec<f64>,
    order: usize,
}

impl PartitionedTableau {
    pub fn new(main: ButcherTableau, ahat: DenseMatrix, chat: Vec<f64>, order: usize) -> Result<Self> {
        let s = main.stages();
        if ahat.rows() != s || ahat.cols() != s || chat.len() != s {
            return Err(Error::InvalidTableau(format!(
                "predictor tableau must be {s}x{s} with {s} abscissae"
            )));
        }
        if !ahat.is_strictly_lower_triangular() {
            return Err(Error::InvalidTableau(
                "predictor coefficients must vanish on and above the diagonal".into(),
            ));
        }
        let canon = main.canonical_residual();
        if canon > STRUCTURE_TOL {
            return Err(Error::InvalidTableau(format!(
                "main method is not canonical (residual {canon:.3e})"
            )));
        }
        Ok(Self {
            main,
            ahat,
            chat,
            order,
        })
    }

    pub fn main(&self) -> &ButcherTableau {
        &self.main
    }

    pub fn ahat(&self) -> &DenseMatrix {
        &self.ahat
    }

    pub fn chat(&self) -> &[f64] {
        &self.chat
    }

    pub fn stages(&self) -> usize {
        self.main.stages()
    }

    pub fn declared_order(&self) -> usize {
        self.order
    }

    /// `max_i |ĉ_i − Σ_j â_ij|`.
    pub fn predictor_row_sum_defect(&self) -> f64 {
        (0..self.stages())
            .map(|i| (self.chat[i] - self.ahat.row(i).iter().sum::<f64>()).abs())
            .fold(0.0, f64::max)
    }

    /// `max |ĉ_i − c_i|` over stages that carry weight (`b_i ≠ 0`).
    pub fn abscissa_mismatch(&self) -> f64 {
        (0..self.stages())
            .filter(|&i| self.main.b[i] != 0.0)
            .map(|i| (self.chat[i] - self.main.c[i]).abs())
            .fold(0.0, f64::max)
    }
}

/// Order-4 pair built on the two-stage Gauss method with three padding stages.
pub fn prk_gauss2() -> PartitionedTableau {
    let r3 = 3f64.sqrt();
    let main = gauss2_exact().with_leading_zero_stages(3);
    let mut ahat = DenseMatrix::zeros(5, 5);
    ahat[(1, 0)] = 0.25;
    ahat[(2, 1)] = 0.5;
    ahat[(3, 0)] = 1.0 / 6.0;
    ahat[(3, 2)] = 1.0 / 3.0 - r3 / 6.0;
    ahat[(4, 0)] = 1.0 / 6.0;
    ahat[(4, 2)] = 1.0 / 3.0 + r3 / 6.0;
    let chat = vec![0.0, 0.25, 0.5, 0.5 - r3 / 6.0, 0.5 + r3 / 6.0];
    PartitionedTableau::new(main, ahat, chat, 4).expect("built-in pair is valid")
}

/// Residual of the order-3 constraint `α²γ₁ + α(1−2α)γ₂ + 3α(1−2α)γ₃ − 1/3`.
pub fn dirk3_pair_constraint(gamma: [f64; 3]) -> f64 {
    let a = dirk3_alpha();
    a * a * gamma[0] + a * (1.0 - 2.0 * a) * gamma[1] + 3.0 * a * (1.0 - 2.0 * a) * gamma[2]
        - 1.0 / 3.0
}

/// Default free parameters `(1/(3α²), 0, 0)` of the order-3 pair.
pub fn dirk3_pair_default_gamma() -> [f64; 3] {
    let a = dirk3_alpha();
    [1.0 / (3.0 * a * a), 0.0, 0.0]
}

/// Order-3 pair on the three-stage diagonally implicit canonical method.
pub fn prk_dirk3(gamma: [f64; 3]) -> Result<PartitionedTableau> {
    let residual = dirk3_pair_constraint(gamma);
    if !(residual.abs() <= 1e-12) {
        return Err(Error::InvalidTableau(format!(
            "free parameters violate the order-3 constraint (residual {residual:.3e})"
        )));
    }
    let a = dirk3_alpha();
    let [g1, g2, g3] = gamma;
    let main = dirk3().with_leading_zero_stages(1);
    let mut ahat = DenseMatrix::zeros(4, 4);
    ahat[(1, 0)] = 0.5 * a;
    ahat[(2, 0)] = 1.5 * a - g1;
    ahat[(2, 1)] = g1;
    ahat[(3, 0)] = 0.5 + a - g2 - g3;
    ahat[(3, 1)] = g2;
    ahat[(3, 2)] = g3;
    let chat = vec![0.0, 0.5 * a, 1.5 * a, 0.5 + a];
    PartitionedTableau::new(main, ahat, chat, 3)
}

/// Two-stage Gauss tableau from its closed form.
fn gauss2_exact() -> ButcherTableau {
    let r3 = 3f64.sqrt();
    let a = DenseMatrix::from_rows(&[
        vec![0.25, 0.25 - r3 / 6.0],
        vec![0.25 + r3 / 6.0, 0.25],
    ]);
    ButcherTableau::new(a, vec![0.5, 0.5], vec![0.5 - r3 / 6.0, 0.5 + r3 / 6.0], 4)
        .expect("closed-form tableau is valid")
}

/// Identifier of a built-in scheme tableau, as used on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum TableauId {
    Gauss(usize),
    Dirk3,
    Dirk(Vec<f64>),
    PrkGauss2,
    PrkDirk3,
}

impl TableauId {
    pub fn is_partitioned(&self) -> bool {
        matches!(self, TableauId::PrkGauss2 | TableauId::PrkDirk3)
    }

    pub fn butcher(&self) -> Result<ButcherTableau> {
        match self {
            TableauId::Gauss(s) => gauss(*s),
            TableauId::Dirk3 => Ok(dirk3()),
            TableauId::Dirk(b) => dirk_canonical(b),
            TableauId::PrkGauss2 | TableauId::PrkDirk3 => Err(Error::Config(format!(
                "`{self}` is a partitioned pair, not a single tableau"
            ))),
        }
    }

    pub fn partitioned(&self) -> Result<PartitionedTableau> {
        match self {
            TableauId::PrkGauss2 => Ok(prk_gauss2()),
            TableauId::PrkDirk3 => prk_dirk3(dirk3_pair_default_gamma()),
            _ => Err(Error::Config(format!("`{self}` is not a partitioned pair"))),
        }
    }
}

impl fmt::Display for TableauId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TableauId::Gauss(s) => write!(f, "gauss:{s}"),
            TableauId::Dirk3 => f.write_str("dirk3"),
            TableauId::Dirk(b) => {
                let parts: Vec<String> = b.iter().map(f64::to_string).collect();
                write!(f, "dirk:{}", parts.join(","))
            }
            TableauId::PrkGauss2 => f.write_str("prk-gauss2"),
            TableauId::PrkDirk3 => f.write_str("prk-dirk3"),
        }
    }
}

impl FromStr for TableauId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "dirk3" => return Ok(TableauId::Dirk3),
            "prk-gauss2" => return Ok(TableauId::PrkGauss2),
            "prk-dirk3" => return Ok(TableauId::PrkDirk3),
            _ => {}
        }
        if let Some(n) = s.strip_prefix("gauss:") {
            let n: usize = n
                .parse()
                .map_err(|_| Error::Config(format!("bad stage count in `{s}`")))?;
            if n == 0 {
                return Err(Error::Config("gauss needs at least one stage".into()));
            }
            return Ok(TableauId::Gauss(n));
        }
        if let Some(ws) = s.strip_prefix("dirk:") {
            let b = ws
                .split(',')
                .map(|w| w.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::Config(format!("bad weights in `{s}`")))?;
            return Ok(TableauId::Dirk(b));
        }
        Err(Error::Config(format!("unknown tableau `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn gauss1_is_midpoint() {
        let t = gauss(1).unwrap();
        assert!(close(t.c()[0], 0.5, 1e-15));
        assert!(close(t.a()[(0, 0)], 0.5, 1e-15));
        assert!(close(t.b()[0], 1.0, 1e-15));
        assert_eq!(t.declared_order(), 2);
    }

    #[test]
    fn gauss2_matches_closed_form() {
        let t = gauss(2).unwrap();
        let e = gauss2_exact();
        for i in 0..2 {
            assert!(close(t.c()[i], e.c()[i], 1e-14));
            assert!(close(t.b()[i], e.b()[i], 1e-14));
            for j in 0..2 {
                assert!(close(t.a()[(i, j)], e.a()[(i, j)], 1e-14));
            }
        }
    }

    #[test]
    fn gauss3_matches_closed_form() {
        let t = gauss(3).unwrap();
        let r15 = 15f64.sqrt();
        let a = [
            [5.0 / 36.0, 2.0 / 9.0 - r15 / 15.0, 5.0 / 36.0 - r15 / 30.0],
            [5.0 / 36.0 + r15 / 24.0, 2.0 / 9.0, 5.0 / 36.0 - r15 / 24.0],
            [5.0 / 36.0 + r15 / 30.0, 2.0 / 9.0 + r15 / 15.0, 5.0 / 36.0],
        ];
        let b = [5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0];
        let c = [0.5 - r15 / 10.0, 0.5, 0.5 + r15 / 10.0];
        for i in 0..3 {
            assert!(close(t.b()[i], b[i], 1e-14));
            assert!(close(t.c()[i], c[i], 1e-14));
            for j in 0..3 {
                assert!(close(t.a()[(i, j)], a[i][j], 1e-14), "a[{i}][{j}]");
            }
        }
        assert_eq!(t.declared_order(), 6);
    }

    #[test]
    fn gauss_collocation_and_canonical_up_to_six_stages() {
        for s in 1..=6 {
            let t = gauss(s).unwrap();
            assert!(t.row_sum_defect() <= 1e-13, "s={s}");
            assert!(is_canonical(&t, 1e-13), "s={s}: {}", t.canonical_residual());
            for k in 1..=s {
                for i in 0..s {
                    let lhs: f64 = (0..s).map(|j| t.a()[(i, j)] * t.c()[j].powi(k as i32 - 1)).sum();
                    assert!(close(lhs, t.c()[i].powi(k as i32) / k as f64, 1e-12));
                }
                let q: f64 = (0..s).map(|i| t.b()[i] * t.c()[i].powi(k as i32 - 1)).sum();
                assert!(close(q, 1.0 / k as f64, 1e-12));
            }
            assert!(t.c().windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn explicit_euler_is_not_canonical() {
        let t = ButcherTableau::new(DenseMatrix::zeros(1, 1), vec![1.0], vec![0.0], 1).unwrap();
        assert!(!is_canonical(&t, 1e-13));
        assert!(close(t.canonical_residual(), 1.0, 0.0));
    }

    #[test]
    fn dirk_single_stage_is_midpoint() {
        let t = dirk_canonical(&[1.0]).unwrap();
        assert_eq!(t.c(), &[0.5]);
        assert_eq!(t.a()[(0, 0)], 0.5);
        assert_eq!(t.declared_order(), 2);
    }

    #[test]
    fn dirk_half_half_is_canonical() {
        let t = dirk_canonical(&[0.5, 0.5]).unwrap();
        assert!(is_canonical(&t, 1e-13));
        assert!(t.canonical_residual() <= 1e-15);
    }

    #[test]
    fn dirk3_family() {
        let alpha = dirk3_alpha();
        assert!(close(alpha, 1.3512071919596578, 1e-15));
        let t = dirk3();
        let expected = [alpha / 2.0, 1.5 * alpha, 0.5 + alpha];
        for (c, e) in t.c().iter().zip(expected) {
            assert!(close(*c, e, 1e-15));
        }
        assert_eq!(t.declared_order(), 3);
        assert!(t.canonical_residual() <= 1e-15);
    }

    #[test]
    fn dirk_unknown_weights_declare_order_two() {
        let t = dirk_canonical(&[0.2, 0.3, 0.5]).unwrap();
        assert_eq!(t.declared_order(), 2);
        let bc: f64 = t.b().iter().zip(t.c()).map(|(b, c)| b * c).sum();
        assert!(close(bc, 0.5, 1e-15));
    }

    #[test]
    fn dirk_rejects_inconsistent_weights() {
        assert!(matches!(dirk_canonical(&[0.5, 0.4]), Err(Error::InvalidTableau(_))));
        assert!(dirk_canonical(&[]).is_err());
        assert!(dirk_canonical(&[f64::NAN]).is_err());
    }

    #[test]
    fn suzuki_preset_is_order_four() {
        let p = 1.0 / (4.0 - 4f64.cbrt());
        let t = dirk_canonical(&[p, p, 1.0 - 4.0 * p, p, p]).unwrap();
        assert_eq!(t.declared_order(), 4);
    }

    #[test]
    fn prk_gauss2_structure() {
        let p = prk_gauss2();
        assert_eq!(p.stages(), 5);
        assert_eq!(p.declared_order(), 4);
        assert!(is_canonical(p.main(), 1e-13));
        assert!(p.ahat().is_strictly_lower_triangular());
        assert!(p.predictor_row_sum_defect() <= 1e-13);
        assert!(p.abscissa_mismatch() <= 1e-13);
        assert!(p.main().row_sum_defect() <= 1e-13);
    }

    #[test]
    fn prk_dirk3_structure() {
        let g = dirk3_pair_default_gamma();
        assert!(dirk3_pair_constraint(g).abs() < 1e-15);
        let p = prk_dirk3(g).unwrap();
        assert_eq!(p.declared_order(), 3);
        assert!(is_canonical(p.main(), 1e-13));
        assert!(p.predictor_row_sum_defect() <= 1e-13);
        assert!(p.abscissa_mismatch() <= 1e-13);
        for i in 0..4 {
            assert_eq!(p.chat()[i], p.main().c()[i]);
        }
    }

    #[test]
    fn prk_dirk3_rejects_bad_gamma() {
        assert!(close(dirk3_pair_constraint([0.0; 3]), -1.0 / 3.0, 1e-15));
        assert!(matches!(prk_dirk3([0.0; 3]), Err(Error::InvalidTableau(_))));
    }

    #[test]
    fn partitioned_rejects_diagonal_entries() {
        let main = gauss(1).unwrap();
        let ahat = DenseMatrix::from_rows(&[vec![0.5]]);
        assert!(PartitionedTableau::new(main, ahat, vec![0.5], 2).is_err());
    }

    #[test]
    fn midpoint_augmentation_pair() {
        let main = gauss(1).unwrap().with_leading_zero_stages(1);
        let ahat = DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![0.5, 0.0]]);
        let p = PartitionedTableau::new(main, ahat, vec![0.0, 0.5], 2).unwrap();
        assert!(is_canonical(p.main(), 1e-15));
    }

    #[test]
    fn tableau_ids_round_trip() {
        for id in ["gauss:1", "gauss:2", "gauss:3", "dirk3", "prk-gauss2", "prk-dirk3"] {
            let parsed: TableauId = id.parse().unwrap();
            assert_eq!(parsed.to_string(), id);
        }
        assert!("gauss:0".parse::<TableauId>().is_err());
        assert!("rk4".parse::<TableauId>().is_err());
        assert!(TableauId::PrkGauss2.butcher().is_err());
        assert!(TableauId::Gauss(2).partitioned().is_err());
    }
}
