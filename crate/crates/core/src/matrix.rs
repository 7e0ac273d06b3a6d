//! Dense row-major storage and the small set of factorizations the
//! estimators need: Householder QR least squares, one-sided Jacobi SVD and
//! Gram-inverse application through the stored triangular factor.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// Dense column vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector<T> {
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Wraps row-major `data`; fails unless `data.len() == rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Like [`from_row_major`](Self::from_row_major) but also rejects NaN/Inf.
    pub fn from_row_major_finite(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        let m = Self::from_row_major(rows, cols, data)?;
        m.ensure_finite()?;
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::from_row_major(rows.len(), cols, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn diag(values: &[T]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
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

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> DenseVector<T> {
        DenseVector::from_vec((0..self.rows).map(|i| self[(i, j)]).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidInput("matrix contains NaN or Inf".into()))
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            let o = out.row_mut(i);
            for (k, &aik) in a.iter().enumerate() {
                if aik == T::zero() {
                    continue;
                }
                for (oj, &bkj) in o.iter_mut().zip(other.row(k)) {
                    *oj += aik * bkj;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &DenseVector<T>) -> Result<DenseVector<T>> {
        if self.cols != v.len() {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v.as_slice())).collect())
    }

    /// `selfᵀ · v` without forming the transpose.
    pub fn tr_matvec(&self, v: &DenseVector<T>) -> Result<DenseVector<T>> {
        if self.rows != v.len() {
            return Err(Error::ShapeMismatch(format!(
                "({}x{})ᵀ times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        Ok(DenseVector::from_vec(out))
    }

    /// `selfᵀ · self`.
    pub fn gram(&self) -> Self {
        let p = self.cols;
        let mut g = Self::zeros(p, p);
        for i in 0..self.rows {
            let r = self.row(i);
            for a in 0..p {
                let ra = r[a];
                for b in a..p {
                    g.data[a * p + b] += ra * r[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                g.data[a * p + b] = g.data[b * p + a];
            }
        }
        g
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch("matrix sum".into()));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        })
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&a| a * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> T {
        norm(&self.data)
    }

    /// Gathers the listed rows (duplicates allowed) into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Copies rows `range` into a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        Self {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    pub fn with_row_removed(&self, row: usize) -> Self {
        let keep: Vec<usize> = (0..self.rows).filter(|&i| i != row).collect();
        self.select_rows(&keep)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&a| f(a)).collect(),
        }
    }

    /// Converts to another scalar type through `f64`.
    pub fn cast<U: Real>(&self) -> DenseMatrix<U> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&a| U::lit(a.as_f64())).collect(),
        }
    }

    /// Column-major copy of the entries.
    pub(crate) fn to_col_major(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.data.len()];
        for i in 0..self.rows {
            for (j, &a) in self.row(i).iter().enumerate() {
                out[j * self.rows + i] = a;
            }
        }
        out
    }
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Real> DenseVector<T> {
    pub fn zeros(len: usize) -> Self {
        Self {
            data: vec![T::zero(); len],
        }
    }

    pub fn from_vec(data: Vec<T>) -> Self {
        Self { data }
    }

    pub fn from_vec_finite(data: Vec<T>) -> Result<Self> {
        let v = Self { data };
        v.ensure_finite()?;
        Ok(v)
    }

    pub fn from_slice(data: &[T]) -> Self {
        Self {
            data: data.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidInput("vector contains NaN or Inf".into()))
        }
    }

    pub fn norm(&self) -> T {
        norm(&self.data)
    }

    pub fn dot(&self, other: &Self) -> T {
        dot(&self.data, &other.data)
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect()
    }

    pub fn add(&self, other: &Self) -> Self {
        self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect()
    }

    pub fn scale(&self, s: T) -> Self {
        self.data.iter().map(|&a| a * s).collect()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        indices.iter().map(|&i| self.data[i]).collect()
    }

    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self::from_slice(&self.data[start..end])
    }

    /// Views the vector as an `n x 1` matrix.
    pub fn to_column_matrix(&self) -> DenseMatrix<T> {
        DenseMatrix {
            rows: self.data.len(),
            cols: 1,
            data: self.data.clone(),
        }
    }

    pub fn cast<U: Real>(&self) -> DenseVector<U> {
        self.data.iter().map(|&a| U::lit(a.as_f64())).collect()
    }
}

impl<T> Index<usize> for DenseVector<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.data[i]
    }
}

impl<T> IndexMut<usize> for DenseVector<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.data[i]
    }
}

impl<T> FromIterator<T> for DenseVector<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        Self {
            data: iter.into_iter().collect(),
        }
    }
}

impl<'a, T> IntoIterator for &'a DenseVector<T> {
    type Item = &'a T;
    type IntoIter = std::slice::Iter<'a, T>;
    fn into_iter(self) -> Self::IntoIter {
        self.data.iter()
    }
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Euclidean norm with scaling against overflow.
pub(crate) fn norm<T: Real>(a: &[T]) -> T {
    let scale = a.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    if scale == T::zero() || !scale.is_finite() {
        return scale;
    }
    let ss: T = a.iter().map(|&x| (x / scale) * (x / scale)).sum();
    scale * ss.sqrt()
}

/// Output of a Householder-QR least-squares solve.
#[derive(Debug, Clone)]
pub struct LeastSquaresSolution<T> {
    pub coefficients: DenseVector<T>,
    pub residuals: DenseVector<T>,
    /// Upper-triangular `R` (row-major, `p x p`) with `ZᵀZ = RᵀR`.
    pub gram_inverse_factor: DenseMatrix<T>,
}

/// Solves `min ‖y − Zβ‖₂` by Householder QR of `Z`.
///
/// Fails with [`Error::RankDeficient`] when a diagonal entry of `R` falls
/// below `Real::rank_tolerance() · max |r_kk|`.
pub fn solve_ls<T: Real>(z: &DenseMatrix<T>, y: &DenseVector<T>) -> Result<LeastSquaresSolution<T>> {
    let (n, p) = z.shape();
    if y.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "design has {n} rows but response has {}",
            y.len()
        )));
    }
    if p == 0 || n < p {
        return Err(Error::InvalidInput(format!(
            "least squares needs rows >= cols >= 1, got {n}x{p}"
        )));
    }
    z.ensure_finite()?;
    y.ensure_finite()?;

    let mut a = z.to_col_major();
    let mut qty = y.as_slice().to_vec();
    let mut r = DenseMatrix::zeros(p, p);

    for k in 0..p {
        let (head, tail) = a.split_at_mut((k + 1) * n);
        let col = &mut head[k * n + k..(k + 1) * n];
        let alpha_norm = norm(col);
        if alpha_norm == T::zero() {
            r[(k, k)] = T::zero();
            for j in k + 1..p {
                r[(k, j)] = tail[(j - k - 1) * n + k];
            }
            continue;
        }
        let alpha = if col[0] > T::zero() { -alpha_norm } else { alpha_norm };
        // v = x - alpha e1, stored in place of the column.
        col[0] -= alpha;
        let vnorm2 = dot(col, col);
        let two_over = T::lit(2.0) / vnorm2;
        for j in k + 1..p {
            let cj = &mut tail[(j - k - 1) * n + k..(j - k) * n];
            let s = dot(col, cj) * two_over;
            for (c, &v) in cj.iter_mut().zip(col.iter()) {
                *c -= s * v;
            }
            r[(k, j)] = cj[0];
        }
        let yk = &mut qty[k..];
        let s = dot(col, yk) * two_over;
        for (c, &v) in yk.iter_mut().zip(col.iter()) {
            *c -= s * v;
        }
        r[(k, k)] = alpha;
    }

    check_rank(&r)?;
    let coefficients = back_substitute(&r, &qty[..p]);
    let fitted = z.matvec(&coefficients)?;
    let residuals = y.sub(&fitted);
    Ok(LeastSquaresSolution {
        coefficients,
        residuals,
        gram_inverse_factor: r,
    })
}

fn check_rank<T: Real>(r: &DenseMatrix<T>) -> Result<()> {
    let p = r.rows();
    let max = (0..p).fold(T::zero(), |m, k| m.max(r[(k, k)].abs()));
    let threshold = T::rank_tolerance() * max;
    for k in 0..p {
        let v = r[(k, k)].abs();
        if max == T::zero() || v < threshold || !v.is_finite() {
            return Err(Error::RankDeficient {
                index: k,
                value: v.as_f64(),
            });
        }
    }
    Ok(())
}

/// Solves `R x = b` for upper-triangular `R`.
pub(crate) fn back_substitute<T: Real>(r: &DenseMatrix<T>, b: &[T]) -> DenseVector<T> {
    let p = r.rows();
    let mut x = vec![T::zero(); p];
    for i in (0..p).rev() {
        let row = r.row(i);
        let s = dot(&row[i + 1..], &x[i + 1..]);
        x[i] = (b[i] - s) / row[i];
    }
    DenseVector::from_vec(x)
}

/// Solves `Rᵀ x = b` for upper-triangular `R`, given `R` transposed
/// (i.e. lower-triangular, row-major).
pub(crate) fn forward_substitute_lower<T: Real>(l: &DenseMatrix<T>, b: &[T], x: &mut [T]) {
    for i in 0..l.rows() {
        let row = l.row(i);
        let s = dot(&row[..i], &x[..i]);
        x[i] = (b[i] - s) / row[i];
    }
}

/// Returns `(ZᵀZ)⁻¹ v` using the stored factor: `Rᵀ w = v`, then `R x = w`.
pub fn apply_gram_inverse<T: Real>(
    sol: &LeastSquaresSolution<T>,
    v: &DenseVector<T>,
) -> Result<DenseVector<T>> {
    let r = &sol.gram_inverse_factor;
    let p = r.rows();
    if v.len() != p {
        return Err(Error::ShapeMismatch(format!(
            "vector of length {} against {p}x{p} Gram factor",
            v.len()
        )));
    }
    check_rank(r)?;
    let lower = r.transpose();
    let mut w = vec![T::zero(); p];
    forward_substitute_lower(&lower, v.as_slice(), &mut w);
    Ok(back_substitute(r, &w))
}

/// Thin singular value decomposition `A = U diag(σ) Vᵀ`.
#[derive(Debug, Clone)]
pub struct ThinSvd<T> {
    /// `rows(A) x cols(A)`, orthonormal columns.
    pub u: DenseMatrix<T>,
    /// Sorted descending.
    pub singular_values: DenseVector<T>,
    /// `cols(A) x cols(A)`, orthogonal.
    pub v: DenseMatrix<T>,
}

/// Sweep cap for the Jacobi iteration.
pub const JACOBI_MAX_SWEEPS: usize = 30;

/// Thin SVD of a tall (or square) matrix by one-sided (Hestenes) Jacobi.
///
/// A pair of columns is rotated while `|aᵢ·aⱼ| > tol · ‖aᵢ‖‖aⱼ‖` and
/// `|aᵢ·aⱼ| > tol · ‖A‖_F²`; the iteration stops after a sweep without
/// rotations and fails after [`JACOBI_MAX_SWEEPS`].
pub fn thin_svd<T: Real>(a: &DenseMatrix<T>) -> Result<ThinSvd<T>> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::InvalidInput(format!(
            "thin_svd expects rows >= cols, got {m}x{n}; transpose first"
        )));
    }
    a.ensure_finite()?;
    let tol = T::jacobi_tolerance();
    let fro2 = {
        let f = a.frobenius_norm();
        f * f
    };

    let mut cols = a.to_col_major();
    let mut v = DenseMatrix::<T>::identity(n).to_col_major();

    let mut converged = n < 2;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for j in 0..n {
            for k in j + 1..n {
                let (cj, ck) = two_columns(&mut cols, m, j, k);
                let alpha = dot(cj, cj);
                let beta = dot(ck, ck);
                let gamma = dot(cj, ck);
                if gamma.abs() <= tol * (alpha * beta).sqrt() || gamma.abs() <= tol * tol * fro2 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(cj, ck, c, s);
                let (vj, vk) = two_columns(&mut v, n, j, k);
                rotate(vj, vk, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            sweeps: JACOBI_MAX_SWEEPS,
        });
    }

    let mut order: Vec<(usize, T)> = (0..n).map(|j| (j, norm(&cols[j * m..(j + 1) * m]))).collect();
    order.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap_or(std::cmp::Ordering::Equal));

    let sigma_max = order.first().map_or(T::zero(), |x| x.1);
    let mut u = DenseMatrix::zeros(m, n);
    let mut vout = DenseMatrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    let mut null_columns = Vec::new();
    for (out, &(j, s)) in order.iter().enumerate() {
        sigma.push(s);
        for i in 0..n {
            vout[(i, out)] = v[j * n + i];
        }
        if s > T::epsilon() * sigma_max && s > T::zero() {
            for i in 0..m {
                u[(i, out)] = cols[j * m + i] / s;
            }
        } else {
            null_columns.push(out);
        }
    }
    complete_orthonormal_columns(&mut u, &null_columns);
    Ok(ThinSvd {
        u,
        singular_values: DenseVector::from_vec(sigma),
        v: vout,
    })
}

fn two_columns<T>(buf: &mut [T], len: usize, j: usize, k: usize) -> (&mut [T], &mut [T]) {
    debug_assert!(j < k);
    let (left, right) = buf.split_at_mut(k * len);
    (&mut left[j * len..(j + 1) * len], &mut right[..len])
}

fn rotate<T: Real>(x: &mut [T], y: &mut [T], c: T, s: T) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

/// Fills the listed (zero) columns of `u` with unit vectors orthogonal to
/// every other column, by Gram-Schmidt against the standard basis.
fn complete_orthonormal_columns<T: Real>(u: &mut DenseMatrix<T>, targets: &[usize]) {
    let (m, n) = u.shape();
    let mut candidate = 0;
    for &t in targets {
        while candidate < m {
            let mut w = vec![T::zero(); m];
            w[candidate] = T::one();
            candidate += 1;
            for _ in 0..2 {
                for j in (0..n).filter(|&j| j != t) {
                    let proj: T = (0..m).map(|i| u[(i, j)] * w[i]).sum();
                    for (i, wi) in w.iter_mut().enumerate() {
                        *wi -= proj * u[(i, j)];
                    }
                }
            }
            let nw = norm(&w);
            if nw > T::lit(0.5) {
                for (i, wi) in w.iter().enumerate() {
                    u[(i, t)] = *wi / nw;
                }
                break;
            }
        }
    }
}
