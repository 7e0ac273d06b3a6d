//! Subsampled randomized Hadamard transform `Π = √(n′/n_subs) · S · H · D`.
//!
//! Inputs with a row count that is not a power of two are zero-padded to
//! `n′ = next_power_of_two(n)`; padding rows contribute nothing to a
//! least-squares objective, and the isometry constant uses `n′`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, DenseVector};
use crate::rng;
use crate::scalar::Real;

const SIGN_STREAM: u64 = 1;
const INDEX_STREAM: u64 = 2;

/// Normalized fast Walsh-Hadamard transform, `v ← (1/√n) H_n v`.
pub fn fwht_in_place<T: Real>(v: &mut [T]) -> Result<()> {
    let n = v.len();
    if !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    fwht_unnormalized(v);
    let s = T::one() / T::lit(n as f64).sqrt();
    for x in v.iter_mut() {
        *x *= s;
    }
    Ok(())
}

/// Vector form of [`fwht_in_place`].
pub fn fwht<T: Real>(v: &DenseVector<T>) -> Result<DenseVector<T>> {
    let mut out = v.clone();
    fwht_in_place(out.as_mut_slice())?;
    Ok(out)
}

fn fwht_unnormalized<T: Real>(v: &mut [T]) {
    let n = v.len();
    let mut h = 1;
    while h < n {
        for block in v.chunks_exact_mut(2 * h) {
            let (a, b) = block.split_at_mut(h);
            for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                let (s, d) = (*x + *y, *x - *y);
                *x = s;
                *y = d;
            }
        }
        h *= 2;
    }
}

/// A drawn SRHT: random signs `D`, sampled rows `S` and the scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchOperator {
    pub seed: u64,
    pub original_rows: usize,
    pub padded_rows: usize,
    pub subsample_count: usize,
    /// Diagonal of `D`, length `padded_rows`, entries ±1.
    pub sign_flips: Vec<i8>,
    /// Rows of `H D A` kept by `S`; uniform over `[0, padded_rows)`, with replacement.
    pub sampled_indices: Vec<usize>,
    /// `√(padded_rows / subsample_count)`.
    pub scale: f64,
}

/// Draws an SRHT for `n` input rows keeping `n_subs` rows.
///
/// Signs and sampled indices come from independent streams of the same seed.
pub fn build_sketch(n: usize, n_subs: usize, seed: u64) -> Result<SketchOperator> {
    if n == 0 {
        return Err(Error::InvalidCounts("sketch needs at least one input row".into()));
    }
    let padded = n.next_power_of_two();
    if n_subs == 0 || n_subs > padded {
        return Err(Error::InvalidCounts(format!(
            "n_subs = {n_subs} must lie in [1, {padded}] for n = {n}"
        )));
    }
    let mut signs = rng::stream(seed, SIGN_STREAM);
    let sign_flips = (0..padded)
        .map(|_| if signs.random::<bool>() { 1 } else { -1 })
        .collect();
    let mut picks = rng::stream(seed, INDEX_STREAM);
    let sampled_indices = (0..n_subs).map(|_| picks.random_range(0..padded)).collect();
    Ok(SketchOperator {
        seed,
        original_rows: n,
        padded_rows: padded,
        subsample_count: n_subs,
        sign_flips,
        sampled_indices,
        scale: (padded as f64 / n_subs as f64).sqrt(),
    })
}

impl SketchOperator {
    /// Sketch that keeps every padded row exactly once (a random orthogonal
    /// rotation `H D`). Used to check reductions to the unsketched problem.
    pub fn full(n: usize, seed: u64) -> Result<Self> {
        let mut op = build_sketch(n, n.next_power_of_two(), seed)?;
        op.sampled_indices = (0..op.padded_rows).collect();
        Ok(op)
    }

    /// Replaces the sampled rows, keeping signs and recomputing the scale.
    pub fn with_indices(mut self, indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() || indices.iter().any(|&i| i >= self.padded_rows) {
            return Err(Error::InvalidCounts("sampled indices out of range".into()));
        }
        self.subsample_count = indices.len();
        self.scale = (self.padded_rows as f64 / indices.len() as f64).sqrt();
        self.sampled_indices = indices;
        Ok(self)
    }

    /// `Π A`: pads, flips signs, transforms every column, gathers and scales.
    pub fn apply<T: Real>(&self, a: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        apply_sketch(self, a)
    }

    pub fn apply_vector<T: Real>(&self, v: &DenseVector<T>) -> Result<DenseVector<T>> {
        Ok(DenseVector::from_vec(apply_sketch(self, &v.to_column_matrix())?.into_vec()))
    }
}

/// Computes `Π A` (`n_subs x cols(A)`), one column at a time.
pub fn apply_sketch<T: Real>(op: &SketchOperator, a: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let (n, p) = a.shape();
    if n != op.original_rows {
        return Err(Error::ShapeMismatch(format!(
            "sketch built for {} rows applied to {n} rows",
            op.original_rows
        )));
    }
    let padded = op.padded_rows;
    // H is applied unnormalized; fold 1/√n′ into the output scale.
    let scale = T::lit(op.scale / (padded as f64).sqrt());
    let mut out = DenseMatrix::zeros(op.subsample_count, p);
    let mut buf = vec![T::zero(); padded];
    let data = a.as_slice();
    for j in 0..p {
        for (i, slot) in buf[..n].iter_mut().enumerate() {
            let x = data[i * p + j];
            *slot = if op.sign_flips[i] > 0 { x } else { -x };
        }
        buf[n..].iter_mut().for_each(|x| *x = T::zero());
        fwht_unnormalized(&mut buf);
        for (r, &idx) in op.sampled_indices.iter().enumerate() {
            out[(r, j)] = buf[idx] * scale;
        }
    }
    Ok(out)
}
