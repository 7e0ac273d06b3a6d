//! Regression diagnostics: leverage, influence (Cook's distance), the
//! leave-one-out coefficients and their randomized approximations.

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::{
    apply_gram_inverse, dot, forward_substitute_lower, thin_svd, DenseMatrix, DenseVector,
    LeastSquaresSolution,
};
use crate::rng;
use crate::scalar::Real;
use crate::srht::{build_sketch, SketchOperator};

/// Leverages are clamped to at most `1 - LEVERAGE_CLAMP_GAP` before the
/// influence denominator is formed.
pub const LEVERAGE_CLAMP_GAP: f64 = 1e-6;

/// Leave-one-out is undefined once `l_i >= 1 - LOO_LEVERAGE_GAP`.
pub const LOO_LEVERAGE_GAP: f64 = 1e-10;

pub const DEFAULT_HISTOGRAM_BINS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticsMode {
    Exact,
    Approximate,
}

/// Per-row residuals, leverages and influences.
#[derive(Debug, Clone)]
pub struct DiagnosticsReport<T> {
    pub residuals: DenseVector<T>,
    pub leverages: DenseVector<T>,
    pub influences: DenseVector<T>,
    pub mode: DiagnosticsMode,
    /// Rows whose leverage was clamped (or was negative) before forming the influence.
    pub leverage_clamp_count: usize,
}

impl<T: Real> DiagnosticsReport<T> {
    pub fn new(residuals: DenseVector<T>, leverages: DenseVector<T>, mode: DiagnosticsMode) -> Result<Self> {
        let (influences, leverage_clamp_count) = influence_with_clamp_count(&residuals, &leverages)?;
        Ok(Self {
            residuals,
            leverages,
            influences,
            mode,
            leverage_clamp_count,
        })
    }
}

/// Exact diagnostics from a full least-squares fit of `z`.
pub fn exact_diagnostics<T: Real>(z: &DenseMatrix<T>, sol: &LeastSquaresSolution<T>) -> Result<DiagnosticsReport<T>> {
    let leverages = exact_leverage(z, sol)?;
    DiagnosticsReport::new(sol.residuals.clone(), leverages, DiagnosticsMode::Exact)
}

/// `l_i = z_i (ZᵀZ)⁻¹ z_iᵀ = ‖R⁻ᵀ z_iᵀ‖²`, one triangular solve per row.
pub fn exact_leverage<T: Real>(z: &DenseMatrix<T>, sol: &LeastSquaresSolution<T>) -> Result<DenseVector<T>> {
    let r = &sol.gram_inverse_factor;
    let p = r.rows();
    if z.cols() != p {
        return Err(Error::ShapeMismatch(format!(
            "design has {} columns, factor is {p}x{p}",
            z.cols()
        )));
    }
    if (0..p).any(|k| r[(k, k)] == T::zero()) {
        return Err(Error::RankDeficient {
            index: (0..p).find(|&k| r[(k, k)] == T::zero()).unwrap_or(0),
            value: 0.0,
        });
    }
    let lower = r.transpose();
    let mut w = vec![T::zero(); p];
    Ok((0..z.rows())
        .map(|i| {
            forward_substitute_lower(&lower, z.row(i), &mut w);
            dot(&w, &w)
        })
        .collect())
}

fn clamp_leverage<T: Real>(l: T) -> (T, bool) {
    let hi = T::one() - T::lit(LEVERAGE_CLAMP_GAP);
    if l > hi {
        (hi, true)
    } else if l < T::zero() {
        (T::zero(), true)
    } else {
        (l, false)
    }
}

fn influence_with_clamp_count<T: Real>(e: &DenseVector<T>, l: &DenseVector<T>) -> Result<(DenseVector<T>, usize)> {
    if e.len() != l.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} residuals against {} leverages",
            e.len(),
            l.len()
        )));
    }
    let mut clamped = 0;
    let d = e
        .iter()
        .zip(l.iter())
        .map(|(&ei, &li)| {
            let (li, hit) = clamp_leverage(li);
            clamped += hit as usize;
            let gap = T::one() - li;
            ei * ei * li / (gap * gap)
        })
        .collect();
    Ok((d, clamped))
}

/// Cook's distance `d_i = e_i² l_i / (1 − l_i)²`, with leverages clamped to
/// `[0, 1 − 1e-6]`.
pub fn influence<T: Real>(e: &DenseVector<T>, l: &DenseVector<T>) -> Result<DenseVector<T>> {
    influence_with_clamp_count(e, l).map(|(d, _)| d)
}

/// `d̃_i = ẽ_i² l̃_i / (1 − l̃_i)²` for sketched residuals and leverages.
/// Sketched leverages can exceed one, so the clamp matters here.
pub fn approx_influence<T: Real>(e: &DenseVector<T>, l: &DenseVector<T>) -> Result<DenseVector<T>> {
    influence(e, l)
}

/// Leave-one-out coefficients by Sherman-Morrison:
/// `β̂₋ᵢ = β̂ − (ZᵀZ)⁻¹ z_iᵀ e_i / (1 − l_i)`.
pub fn loo_coefficients<T: Real>(
    z: &DenseMatrix<T>,
    y: &DenseVector<T>,
    sol: &LeastSquaresSolution<T>,
    row: usize,
) -> Result<DenseVector<T>> {
    if row >= z.rows() || y.len() != z.rows() {
        return Err(Error::ShapeMismatch(format!("row {row} of a {}-row problem", z.rows())));
    }
    let zi = DenseVector::from_slice(z.row(row));
    let g_zi = apply_gram_inverse(sol, &zi)?;
    let li = zi.dot(&g_zi);
    if li >= T::one() - T::lit(LOO_LEVERAGE_GAP) {
        return Err(Error::LeverageOne {
            row,
            leverage: li.as_f64(),
        });
    }
    let ei = y[row] - zi.dot(&sol.coefficients);
    Ok(sol.coefficients.sub(&g_zi.scale(ei / (T::one() - li))))
}

/// Right-hand projection `Π₂` used by the sketched leverage estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RightProjection {
    /// i.i.d. ±1/√r2 signs, `p x r2`.
    Signs { r2: usize },
    /// No projection (`Π₂ = I_p`); reduces the estimate to the leverage of
    /// the sketched basis.
    Identity,
}

/// Default first-sketch size `max(2p, ⌈p ln p⌉)`.
pub fn default_r1(p: usize) -> usize {
    let plogp = (p as f64 * (p.max(1) as f64).ln()).ceil() as usize;
    (2 * p).max(plogp)
}

/// Default right-projection width `⌈p/2⌉`.
pub fn default_r2(p: usize) -> usize {
    p.div_ceil(2).max(1)
}

const PROJECTION_STREAM: u64 = 3;

/// Approximate leverages from an `r1`-row SRHT of `z` followed by a
/// `p x r2` sign projection.
pub fn approx_leverage<T: Real>(z: &DenseMatrix<T>, r1: usize, r2: usize, seed: u64) -> Result<DenseVector<T>> {
    let p = z.cols();
    if r1 < p {
        return Err(Error::InvalidCounts(format!("r1 = {r1} must be at least p = {p}")));
    }
    if r2 == 0 || r2 > p {
        return Err(Error::InvalidCounts(format!("r2 = {r2} must lie in [1, {p}]")));
    }
    let op = build_sketch(z.rows(), r1, seed)?;
    approx_leverage_with_sketch(z, &op.apply(z)?, RightProjection::Signs { r2 }, seed)
}

/// Approximate leverages given an already sketched design `Π₁Z`.
///
/// Forms `R⁻¹ = V Σ⁻¹` from the SVD of the sketch and returns the squared
/// row norms of `Z R⁻¹ Π₂`; `R⁻¹Π₂` is formed first so the cost is `O(n p r2)`.
pub fn approx_leverage_with_sketch<T: Real>(
    z: &DenseMatrix<T>,
    sketched: &DenseMatrix<T>,
    projection: RightProjection,
    seed: u64,
) -> Result<DenseVector<T>> {
    let p = z.cols();
    if sketched.cols() != p {
        return Err(Error::ShapeMismatch("sketch and design disagree on columns".into()));
    }
    if sketched.rows() < p {
        return Err(Error::InvalidCounts(format!(
            "sketch has {} rows, needs at least p = {p}",
            sketched.rows()
        )));
    }
    let svd = thin_svd(sketched)?;
    let sigma = svd.singular_values.as_slice();
    let smax = sigma[0];
    let smin = sigma[p - 1];
    if smax.is_nan() || smax <= T::zero() || smin < T::rank_tolerance() * smax {
        return Err(Error::SketchRankDeficient {
            ratio: if smax > T::zero() { (smin / smax).as_f64() } else { 0.0 },
        });
    }
    let r_inv = DenseMatrix::from_fn(p, p, |i, j| svd.v[(i, j)] / sigma[j]);
    let basis = match projection {
        RightProjection::Identity => r_inv,
        RightProjection::Signs { r2 } => {
            if r2 == 0 || r2 > p {
                return Err(Error::InvalidCounts(format!("r2 = {r2} must lie in [1, {p}]")));
            }
            let mut signs = rng::stream(seed, PROJECTION_STREAM);
            let s = T::one() / T::lit(r2 as f64).sqrt();
            let pi2 = DenseMatrix::from_fn(p, r2, |_, _| if signs.random::<bool>() { s } else { -s });
            r_inv.matmul(&pi2)?
        }
    };
    let u = z.matmul(&basis)?;
    Ok((0..u.rows()).map(|i| dot(u.row(i), u.row(i))).collect())
}

/// Approximate diagnostics: residuals from a sketched fit and leverages
/// from [`approx_leverage_with_sketch`].
pub fn approx_diagnostics<T: Real>(
    z: &DenseMatrix<T>,
    approx_residuals: DenseVector<T>,
    op: &SketchOperator,
    sketched: &DenseMatrix<T>,
    r2: usize,
) -> Result<DiagnosticsReport<T>> {
    let leverages = approx_leverage_with_sketch(z, sketched, RightProjection::Signs { r2 }, op.seed)?;
    DiagnosticsReport::new(approx_residuals, leverages, DiagnosticsMode::Approximate)
}

/// ℓ1 distance between the normalized histograms of `a` and `b` on common
/// equal-width bins spanning the pooled range. Lies in `[0, 2]`.
pub fn histogram_l1_distance<T: Real>(a: &[T], b: &[T], bins: usize) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("histogram inputs must be non-empty".into()));
    }
    if bins < 2 {
        return Err(Error::InvalidInput("need at least two bins".into()));
    }
    let (lo, hi) = pooled_range(a, b)?;
    let ha = histogram(a, lo, hi, bins);
    let hb = histogram(b, lo, hi, bins);
    Ok(ha.iter().zip(&hb).map(|(x, y)| (x - y).abs()).sum())
}

pub(crate) fn pooled_range<T: Real>(a: &[T], b: &[T]) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &x in a.iter().chain(b) {
        let x = x.as_f64();
        if !x.is_finite() {
            return Err(Error::InvalidInput("histogram input contains NaN or Inf".into()));
        }
        lo = lo.min(x);
        hi = hi.max(x);
    }
    if lo == hi {
        return Err(Error::DegenerateRange(lo));
    }
    Ok((lo, hi))
}

/// Probability-mass histogram on `bins` equal-width bins over `[lo, hi]`;
/// the right edge belongs to the last bin.
pub fn histogram<T: Real>(values: &[T], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut counts = vec![0.0; bins];
    let width = (hi - lo) / bins as f64;
    for &x in values {
        let k = (((x.as_f64() - lo) / width).floor() as isize).clamp(0, bins as isize - 1);
        counts[k as usize] += 1.0;
    }
    let total = values.len() as f64;
    counts.iter_mut().for_each(|c| *c /= total);
    counts
}
