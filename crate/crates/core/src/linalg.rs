//! Small dense real-matrix kernel.
//!
//! Everything here is sized for the games this crate solves (state and joint
//! control dimensions up to about 16), so the algorithms favour robustness
//! and simplicity over asymptotic speed: LU with partial pivoting for solves,
//! cyclic Jacobi for symmetric eigenvalues, and a Gelfand-formula estimate for
//! the spectral radius of a general square matrix.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is numerically singular (pivot {pivot:e})")]
    Singular { pivot: f64 },
    #[error("Jacobi eigenvalue sweep did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("matrix is numerically zero")]
    AllZero,
    #[error("overflow while estimating spectral radius")]
    Overflow,
    #[error("non-finite entry produced")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Numerical tolerances shared by every check in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Smallest Cholesky pivot still counted as positive.
    pub pd_pivot: f64,
    /// Allowed asymmetry, relative to the matrix scale.
    pub symmetry: f64,
    /// Matrix equality, relative to the scale of the operands.
    pub mat_eq: f64,
    /// Required gap below one for a spectral radius to count as stable.
    pub spectral_margin: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            pd_pivot: 1e-10,
            symmetry: 1e-8,
            mat_eq: 1e-8,
            spectral_margin: 1e-6,
        }
    }
}

impl Tolerances {
    /// Override a single field by name; used by the CLI `--tol key=value`.
    pub fn set(&mut self, key: &str, value: f64) -> std::result::Result<(), String> {
        match key {
            "pd_pivot" => self.pd_pivot = value,
            "symmetry" => self.symmetry = value,
            "mat_eq" => self.mat_eq = value,
            "spectral_margin" => self.spectral_margin = value,
            other => return Err(format!("unknown tolerance `{other}`")),
        }
        Ok(())
    }
}

/// Dense row-major real matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mat{}x{}", self.rows, self.cols)?;
        f.debug_list().entries(self.row_iter()).finish()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Mat {
    type Error = LinalgError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Mat::from_rows(&rows)
    }
}

impl From<Mat> for Vec<Vec<f64>> {
    fn from(m: Mat) -> Self {
        m.row_iter().map(<[f64]>::to_vec).collect()
    }
}

impl Mat {
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

    pub fn diag(entries: &[f64]) -> Self {
        let mut m = Self::zeros(entries.len(), entries.len());
        for (i, &v) in entries.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(Self {
            rows,
            cols,
            data: data.to_vec(),
        })
    }

    /// Builds a matrix from nested rows. An empty outer list is rejected.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(LinalgError::DimensionMismatch("matrix has no rows".into()));
        };
        let cols = first.len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LinalgError::DimensionMismatch("ragged rows".into()));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_slice(rows.len(), cols, &data)
    }

    pub fn column(v: &[f64]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
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

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, so a zero-column matrix yields no rows
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
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

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// (M + Mᵀ)/2. Panics if not square.
    pub fn symmetrize(&self) -> Self {
        assert!(self.is_square(), "symmetrize on non-square matrix");
        let mut s = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest entrywise asymmetry |Mᵢⱼ − Mⱼᵢ|.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Copy of the `rows x cols` block starting at (`r0`, `c0`).
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        assert!(r0 + rows <= self.rows && c0 + cols <= self.cols);
        let mut b = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                b[(i, j)] = self[(r0 + i, c0 + j)];
            }
        }
        b
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Mat) {
        assert!(r0 + block.rows <= self.rows && c0 + block.cols <= self.cols);
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r0 + i, c0 + j)] = block[(i, j)];
            }
        }
    }

    pub fn hstack(left: &Mat, right: &Mat) -> Result<Self> {
        if left.rows != right.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "hstack of {} and {} rows",
                left.rows, right.rows
            )));
        }
        let mut m = Self::zeros(left.rows, left.cols + right.cols);
        m.set_block(0, 0, left);
        m.set_block(0, left.cols, right);
        Ok(m)
    }

    pub fn vstack(top: &Mat, bottom: &Mat) -> Result<Self> {
        if top.cols != bottom.cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "vstack of {} and {} columns",
                top.cols, bottom.cols
            )));
        }
        let mut m = Self::zeros(top.rows + bottom.rows, top.cols);
        m.set_block(0, 0, top);
        m.set_block(top.rows, 0, bottom);
        Ok(m)
    }

    pub fn matmul(&self, rhs: &Mat) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.data[k * rhs.cols + j];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok(self
            .row_iter()
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// xᵀ M x for square M.
    pub fn quad_form(&self, x: &[f64]) -> Result<f64> {
        let mx = self.matvec(x)?;
        Ok(dot(x, &mx))
    }

    /// Aᵀ M A, the congruence used by every Riccati update.
    pub fn congruence(&self, a: &Mat) -> Result<Self> {
        a.transpose().matmul(&self.matmul(a)?)
    }

    fn zip_with(&self, rhs: &Mat, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape() != rhs.shape() {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn try_add(&self, rhs: &Mat) -> Result<Self> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn try_sub(&self, rhs: &Mat) -> Result<Self> {
        self.zip_with(rhs, |a, b| a - b)
    }

    /// Solves `self · X = rhs` by LU factorisation with partial pivoting.
    pub fn solve(&self, rhs: &Mat) -> Result<Self> {
        if !self.is_square() {
            return Err(LinalgError::NonSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        if rhs.rows != self.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "system of order {} with {} right-hand-side rows",
                self.rows, rhs.rows
            )));
        }
        let n = self.rows;
        let mut lu = self.clone();
        let mut x = rhs.clone();
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot <= f64::EPSILON * scale * n as f64 {
                return Err(LinalgError::Singular { pivot });
            }
            if p != k {
                lu.swap_rows(p, k);
                x.swap_rows(p, k);
            }
            for i in (k + 1)..n {
                let factor = lu[(i, k)] / lu[(k, k)];
                if factor == 0.0 {
                    continue;
                }
                for j in k..n {
                    lu[(i, j)] -= factor * lu[(k, j)];
                }
                for j in 0..x.cols {
                    x[(i, j)] -= factor * x[(k, j)];
                }
            }
        }
        for k in (0..n).rev() {
            for j in 0..x.cols {
                let mut acc = x[(k, j)];
                for c in (k + 1)..n {
                    acc -= lu[(k, c)] * x[(c, j)];
                }
                x[(k, j)] = acc / lu[(k, k)];
            }
        }
        if !x.is_finite() {
            return Err(LinalgError::NonFinite);
        }
        Ok(x)
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    /// Spectral norm ‖M‖₂ (zero for the zero matrix).
    pub fn norm2(&self) -> Result<f64> {
        if self.data.iter().all(|&v| v == 0.0) {
            return Ok(0.0);
        }
        let gram = self.gram();
        let eig = sym_eig(&gram)?;
        Ok(eig.last().copied().unwrap_or(0.0).max(0.0).sqrt())
    }

    /// MᵀM or MMᵀ, whichever is smaller; both carry the nonzero singular values.
    fn gram(&self) -> Mat {
        let t = self.transpose();
        if self.cols <= self.rows {
            t.matmul(self).expect("conformable")
        } else {
            self.matmul(&t).expect("conformable")
        }
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

// Operator forms panic on shape mismatch; the fallible `try_*`/`matmul`
// methods are the ones used on user-supplied data.
impl Add for &Mat {
    type Output = Mat;

    fn add(self, rhs: &Mat) -> Mat {
        self.try_add(rhs).expect("matrix shapes must agree")
    }
}

impl Sub for &Mat {
    type Output = Mat;

    fn sub(self, rhs: &Mat) -> Mat {
        self.try_sub(rhs).expect("matrix shapes must agree")
    }
}

impl Mul for &Mat {
    type Output = Mat;

    fn mul(self, rhs: &Mat) -> Mat {
        self.matmul(rhs).expect("matrix shapes must agree")
    }
}

impl Neg for &Mat {
    type Output = Mat;

    fn neg(self) -> Mat {
        self.scale(-1.0)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn vec_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn vec_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn vec_sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Outcome of a Cholesky positive-definiteness test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdCheck {
    pub is_pd: bool,
    /// Smallest pivot dᵢ of the LDLᵀ-style factorisation; ≤ 0 on failure.
    pub min_pivot: f64,
}

/// Cholesky-based positive-definiteness test on the symmetric part of `m`.
///
/// The factorisation stops at the first pivot that is not above `tol`; that
/// pivot is reported as `min_pivot`.
pub fn cholesky_pd(m: &Mat, tol: f64) -> Result<PdCheck> {
    if !m.is_square() {
        return Err(LinalgError::NonSquare {
            rows: m.rows,
            cols: m.cols,
        });
    }
    let n = m.rows;
    let s = m.symmetrize();
    let mut l = Mat::zeros(n, n);
    let mut min_pivot = f64::INFINITY;
    for j in 0..n {
        let mut d = s[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        min_pivot = min_pivot.min(d);
        if !(d > tol) {
            return Ok(PdCheck {
                is_pd: false,
                min_pivot: if d.is_nan() { f64::NEG_INFINITY } else { d },
            });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut v = s[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    Ok(PdCheck {
        is_pd: true,
        min_pivot: if n == 0 { 0.0 } else { min_pivot },
    })
}

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_OFF_TOL: f64 = 1e-12;

/// Eigenvalues of the symmetric part of `m`, ascending, by cyclic Jacobi.
///
/// Sweeps stop once the off-diagonal Frobenius norm drops below
/// `1e-12 · max(1, ‖M‖_F)`.
pub fn sym_eig(m: &Mat) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(LinalgError::NonSquare {
            rows: m.rows,
            cols: m.cols,
        });
    }
    if !m.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let n = m.rows;
    let mut a = m.symmetrize();
    let threshold = JACOBI_OFF_TOL * a.frobenius().max(1.0);
    let off = |a: &Mat| {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += 2.0 * a[(i, j)] * a[(i, j)];
            }
        }
        s.sqrt()
    };
    let mut converged = off(&a) < threshold;
    let mut sweeps = 0;
    while !converged {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(LinalgError::NoConvergence { sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
        converged = off(&a) < threshold;
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularExtremes {
    pub sigma_max: f64,
    /// Smallest singular value above the tolerance.
    pub sigma_min_pos: f64,
}

/// Largest and smallest nonzero singular values, from the eigenvalues of the
/// Gram matrix.
pub fn singular_extremes(m: &Mat, tol: f64) -> Result<SingularExtremes> {
    let eig = sym_eig(&m.gram())?;
    let sv: Vec<f64> = eig.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let sigma_max = sv.last().copied().unwrap_or(0.0);
    let sigma_min_pos = sv
        .iter()
        .copied()
        .find(|&s| s > tol)
        .ok_or(LinalgError::AllZero)?;
    Ok(SingularExtremes {
        sigma_max,
        sigma_min_pos,
    })
}

const GELFAND_SQUARINGS: u32 = 7;

/// Spectral-radius estimate ‖M^(2^7)‖₂^(1/128) via repeated squaring.
///
/// Each iterate is normalised before squaring and the scale is carried in
/// log space, so the estimate neither overflows nor underflows. The result
/// is an upper bound on ρ(M) that is tight for well-conditioned eigenbases.
pub fn spectral_radius_est(m: &Mat) -> Result<f64> {
    if !m.is_square() {
        return Err(LinalgError::NonSquare {
            rows: m.rows,
            cols: m.cols,
        });
    }
    if !m.is_finite() {
        return Err(LinalgError::Overflow);
    }
    let mut x = m.clone();
    let mut log_scale = 0.0_f64;
    for _ in 0..GELFAND_SQUARINGS {
        let c = x.norm2()?;
        if c == 0.0 {
            return Ok(0.0);
        }
        x = x.scale(1.0 / c);
        log_scale += c.ln();
        x = x.matmul(&x)?;
        log_scale *= 2.0;
        if !x.is_finite() {
            return Err(LinalgError::Overflow);
        }
    }
    let c = x.norm2()?;
    if c == 0.0 {
        return Ok(0.0);
    }
    let rho = ((log_scale + c.ln()) / f64::from(1u32 << GELFAND_SQUARINGS)).exp();
    if rho.is_finite() {
        Ok(rho)
    } else {
        Err(LinalgError::Overflow)
    }
}

/// Scale-aware matrix equality: max |aᵢⱼ − bᵢⱼ| ≤ tol · max(1, |a|max, |b|max).
pub fn approx_eq(a: &Mat, b: &Mat, tol: f64) -> Result<bool> {
    Ok(relative_residual(a, b)? <= tol)
}

/// max |aᵢⱼ − bᵢⱼ| / max(1, |a|max, |b|max).
pub fn relative_residual(a: &Mat, b: &Mat) -> Result<f64> {
    let diff = a.try_sub(b)?;
    Ok(diff.max_abs() / a.max_abs().max(b.max_abs()).max(1.0))
}
