//! Dense linear algebra for the stage equations.
//!
//! The linearly implicit step needs one solve of an `s·d × s·d` system per
//! iteration. Sizes stay small (a few hundred unknowns at most), so the
//! block system is materialised densely and factorised with partially
//! pivoted LU.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Relative pivot threshold: a pivot below `PIVOT_RTOL · ‖M‖∞` is singular.
pub const PIVOT_RTOL: f64 = 1e-14;

/// Row-major dense real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "entries length must be rows*cols");
        Self { rows, cols, data }
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self::from_row_major(r, c, data)
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// Induced ∞-norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        norm_inf(&self.data)
    }

    /// `max |M + Mᵀ|` entrywise; zero for an exactly skew matrix.
    pub fn skew_residual(&self) -> f64 {
        assert!(self.is_square());
        let mut r: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                r = r.max((self[(i, j)] + self[(j, i)]).abs());
            }
        }
        r
    }

    pub fn is_strictly_lower_triangular(&self) -> bool {
        (0..self.rows).all(|i| (i..self.cols).all(|j| self[(i, j)] == 0.0))
    }

    pub fn is_lower_triangular(&self) -> bool {
        (0..self.rows).all(|i| (i + 1..self.cols).all(|j| self[(i, j)] == 0.0))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Maximum absolute entry; NaN if any entry is NaN.
pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m: f64, v| if v.is_nan() || m.is_nan() { f64::NAN } else { m.max(v.abs()) })
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// LU factors with partial pivoting, `P·M = L·U` stored in place.
#[derive(Debug, Clone)]
pub struct LuDecomposition {
    lu: DenseMatrix,
    perm: Vec<usize>,
}

impl LuDecomposition {
    pub fn new(m: &DenseMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Config(format!(
                "LU needs a square matrix, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        let n = m.rows();
        let threshold = PIVOT_RTOL * m.norm_inf();
        let mut lu = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(pivot > threshold) {
                return Err(Error::SingularMatrix {
                    pivot,
                    threshold,
                    column: k,
                });
            }
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let inv = 1.0 / lu[(k, k)];
            for i in k + 1..n {
                let factor = lu[(i, k)] * inv;
                if factor == 0.0 {
                    continue;
                }
                lu[(i, k)] = factor;
                for j in k + 1..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] -= factor * u;
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.lu.rows();
        assert_eq!(rhs.len(), n, "rhs length mismatch");
        let mut x: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let s: f64 = row[..i].iter().zip(&x[..i]).map(|(l, v)| l * v).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s: f64 = row[i + 1..].iter().zip(&x[i + 1..]).map(|(u, v)| u * v).sum();
            x[i] = (x[i] - s) / row[i];
        }
        x
    }
}

/// Solves `M x = rhs` by partially pivoted LU.
pub fn lu_solve(m: &DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != m.rows() {
        return Err(Error::Config(format!(
            "rhs length {} does not match matrix with {} rows",
            rhs.len(),
            m.rows()
        )));
    }
    Ok(LuDecomposition::new(m)?.solve(rhs))
}

/// Assembles the block system of one linearly implicit stage solve:
/// block `(i, j)` is `δ_ij I − h a_ij Ŝ_j Q` and every right-hand block is `y0`.
pub fn assemble_stage_system(
    q: &DenseMatrix,
    y0: &[f64],
    h: f64,
    a: &DenseMatrix,
    shat: &[DenseMatrix],
) -> Result<(DenseMatrix, Vec<f64>)> {
    let s = a.rows();
    let d = y0.len();
    check_stage_inputs(q, d, a, shat)?;
    let products: Vec<DenseMatrix> = shat.iter().map(|sj| sj.matmul(q)).collect();
    let n = s * d;
    let mut m = DenseMatrix::zeros(n, n);
    for i in 0..s {
        for j in 0..s {
            let coeff = h * a[(i, j)];
            let p = &products[j];
            for r in 0..d {
                for c in 0..d {
                    let mut v = -coeff * p[(r, c)];
                    if i == j && r == c {
                        v += 1.0;
                    }
                    m[(i * d + r, j * d + c)] = v;
                }
            }
        }
    }
    let rhs = (0..s).flat_map(|_| y0.iter().copied()).collect();
    Ok((m, rhs))
}

/// Splits a stacked solution vector into `s` stage vectors of length `d`.
pub fn unstack(x: &[f64], d: usize) -> Vec<Vec<f64>> {
    x.chunks(d).map(<[f64]>::to_vec).collect()
}

/// Stage solve through the block system (any tableau). The unknowns are the
/// increments `Y_i − y0`, which keeps the rounding error proportional to
/// `h` rather than to `‖y0‖`.
pub fn solve_stages_block(
    q: &DenseMatrix,
    y0: &[f64],
    h: f64,
    a: &DenseMatrix,
    shat: &[DenseMatrix],
) -> Result<StageSolution> {
    let (m, rhs) = assemble_stage_system(q, y0, h, a, shat)?;
    let d = y0.len();
    let s = a.rows();
    let forced: Vec<Vec<f64>> = shat.iter().map(|sj| sj.matvec(&q.matvec(y0))).collect();
    let mut inc_rhs = vec![0.0; s * d];
    for i in 0..s {
        for (j, fj) in forced.iter().enumerate() {
            let coeff = h * a[(i, j)];
            if coeff != 0.0 {
                axpy(coeff, fj, &mut inc_rhs[i * d..(i + 1) * d]);
            }
        }
    }
    let z = lu_solve(&m, &inc_rhs)?;
    let x: Vec<f64> = z.iter().enumerate().map(|(n, zn)| y0[n % d] + zn).collect();
    let residual = norm_inf(&sub(&m.matvec(&x), &rhs));
    Ok(StageSolution {
        stages: unstack(&x, d),
        residual,
    })
}

/// Stage solve for lower-triangular `A`: `s` sequential solves of size `d`.
pub fn solve_stages_dirk(
    q: &DenseMatrix,
    y0: &[f64],
    h: f64,
    a: &DenseMatrix,
    shat: &[DenseMatrix],
) -> Result<StageSolution> {
    let s = a.rows();
    let d = y0.len();
    check_stage_inputs(q, d, a, shat)?;
    if !a.is_lower_triangular() {
        return Err(Error::InvalidTableau(
            "sequential stage solve needs a lower-triangular A".into(),
        ));
    }
    let products: Vec<DenseMatrix> = shat.iter().map(|sj| sj.matmul(q)).collect();
    let mut stages: Vec<Vec<f64>> = Vec::with_capacity(s);
    let mut residual: f64 = 0.0;
    for i in 0..s {
        // Increment form: (I − h a_ii P_i) z = h Σ_{j<i} a_ij P_j Y_j + h a_ii P_i y0.
        let mut rhs = y0.to_vec();
        let mut inc_rhs = vec![0.0; d];
        for (j, yj) in stages.iter().enumerate() {
            let coeff = h * a[(i, j)];
            if coeff != 0.0 {
                axpy(coeff, &products[j].matvec(yj), &mut inc_rhs);
            }
        }
        axpy(1.0, &inc_rhs, &mut rhs);
        axpy(h * a[(i, i)], &products[i].matvec(y0), &mut inc_rhs);
        let mut m = products[i].scaled(-h * a[(i, i)]);
        for r in 0..d {
            m[(r, r)] += 1.0;
        }
        let z = lu_solve(&m, &inc_rhs)?;
        let yi: Vec<f64> = y0.iter().zip(&z).map(|(a, b)| a + b).collect();
        residual = residual.max(norm_inf(&sub(&m.matvec(&yi), &rhs)));
        stages.push(yi);
    }
    Ok(StageSolution { stages, residual })
}

/// Picks the sequential path when `A` is lower triangular, the block path otherwise.
pub fn solve_stages(
    q: &DenseMatrix,
    y0: &[f64],
    h: f64,
    a: &DenseMatrix,
    shat: &[DenseMatrix],
) -> Result<StageSolution> {
    if a.is_lower_triangular() {
        solve_stages_dirk(q, y0, h, a, shat)
    } else {
        solve_stages_block(q, y0, h, a, shat)
    }
}

/// Stage vectors together with the ∞-norm residual of the linear solve(s).
#[derive(Debug, Clone)]
pub struct StageSolution {
    pub stages: Vec<Vec<f64>>,
    pub residual: f64,
}

fn check_stage_inputs(q: &DenseMatrix, d: usize, a: &DenseMatrix, shat: &[DenseMatrix]) -> Result<()> {
    if !a.is_square() || shat.len() != a.rows() {
        return Err(Error::Config(format!(
            "need {} frozen skew matrices for a {}x{} coefficient matrix, got {}",
            a.rows(),
            a.rows(),
            a.cols(),
            shat.len()
        )));
    }
    if q.rows() != d || q.cols() != d || shat.iter().any(|m| m.rows() != d || m.cols() != d) {
        return Err(Error::Config(format!("operator dimensions must be {d}x{d}")));
    }
    Ok(())
}
