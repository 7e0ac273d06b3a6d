//! Row sampling for the subsampled estimators.

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How `n_subs` rows are drawn from a probability vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingScheme {
    /// Successive draws proportional to the weights, each row at most once.
    #[default]
    WithoutReplacement,
    /// Independent categorical draws (alias method); duplicates possible.
    WithReplacement,
}

/// Probabilities `∝ 1/s_i` after flooring every score at
/// `floor_ratio · max_j s_j`.
///
/// Returns `(probabilities, uniform_fallback)`; when every score is at or
/// below zero the distribution is uniform and the flag is set.
pub fn inverse_weight_probabilities(scores: &[f64], floor_ratio: f64) -> Result<(Vec<f64>, bool)> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("no scores to weight".into()));
    }
    if scores.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::InvalidInput("scores must be finite and non-negative".into()));
    }
    let max = scores.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Ok((uniform(scores.len()), true));
    }
    let floor = (floor_ratio * max).max(f64::MIN_POSITIVE);
    let inv: Vec<f64> = scores.iter().map(|&s| 1.0 / s.max(floor)).collect();
    Ok((normalize(&inv)?, false))
}

/// Probabilities `∝ w_i` for non-negative weights.
pub fn proportional_probabilities(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
    }
    normalize(weights)
}

pub fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

fn normalize(w: &[f64]) -> Result<Vec<f64>> {
    // Rescale by the max first so tiny or huge weights do not over/underflow the sum.
    let max = w.iter().copied().fold(0.0, f64::max);
    if max.is_nan() || max <= 0.0 || !max.is_finite() {
        return Err(Error::InvalidInput("weights sum to zero".into()));
    }
    let scaled: Vec<f64> = w.iter().map(|&x| x / max).collect();
    let total: f64 = scaled.iter().sum();
    Ok(scaled.into_iter().map(|x| x / total).collect())
}

/// Draws `count` row indices from `probabilities`.
pub fn draw_rows<R: Rng + ?Sized>(
    probabilities: &[f64],
    count: usize,
    scheme: SamplingScheme,
    rng: &mut R,
) -> Result<Vec<usize>> {
    match scheme {
        SamplingScheme::WithReplacement => {
            let alias = WeightedAliasIndex::new(probabilities.to_vec())
                .map_err(|e| Error::InvalidInput(format!("alias table: {e}")))?;
            Ok((0..count).map(|_| alias.sample(rng)).collect())
        }
        SamplingScheme::WithoutReplacement => weighted_without_replacement(probabilities, count, rng),
    }
}

/// Weighted sampling without replacement by exponential keys
/// (`key_i = ln(u_i) / w_i`, keep the `count` largest). Equivalent to drawing
/// rows one at a time proportionally to the remaining weights. Log keys stay
/// ordered for weights spanning many orders of magnitude.
///
/// Zero-weight rows are only returned once every positive-weight row is
/// taken. Output is sorted by key, largest first.
pub fn weighted_without_replacement<R: Rng + ?Sized>(
    weights: &[f64],
    count: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = weights.len();
    if count > n {
        return Err(Error::InvalidCounts(format!(
            "cannot draw {count} distinct rows from {n}"
        )));
    }
    let mut keys: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            // random::<f64>() is in [0, 1); map to (0, 1].
            let u: f64 = 1.0 - rng.random::<f64>();
            let key = if w > 0.0 { u.ln() / w } else { f64::NEG_INFINITY };
            (key, i)
        })
        .collect();
    let by_key_desc = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if count < n && count > 0 {
        keys.select_nth_unstable_by(count - 1, by_key_desc);
    }
    keys.truncate(count);
    keys.sort_by(by_key_desc);
    Ok(keys.into_iter().map(|(_, i)| i).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn inverse_weights_floor_and_normalize() {
        let (p, fallback) = inverse_weight_probabilities(&[1.0, 2.0, 4.0], 1e-12).unwrap();
        assert!(!fallback);
        let expect = [4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0];
        for (a, b) in p.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        // a zero score is floored rather than dividing by zero
        let (p, _) = inverse_weight_probabilities(&[0.0, 1.0], 1e-3).unwrap();
        assert!((p[0] / p[1] - 1e3).abs() < 1e-6);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_zero_scores_fall_back_to_uniform() {
        let (p, fallback) = inverse_weight_probabilities(&[0.0; 4], 1e-12).unwrap();
        assert!(fallback);
        assert_eq!(p, vec![0.25; 4]);
        assert!(inverse_weight_probabilities(&[1.0, f64::NAN], 1e-12).is_err());
        assert!(inverse_weight_probabilities(&[-1.0], 1e-12).is_err());
    }

    #[test]
    fn constant_scores_are_uniform() {
        let (p, _) = inverse_weight_probabilities(&[3.5; 5], 1e-12).unwrap();
        assert!(p.iter().all(|&x| (x - 0.2).abs() < 1e-15));
    }

    #[test]
    fn without_replacement_is_distinct_and_reproducible() {
        let w = proportional_probabilities(&[1.0, 5.0, 0.0, 2.0, 9.0]).unwrap();
        let a = weighted_without_replacement(&w, 4, &mut rng::stream(3, 0)).unwrap();
        let b = weighted_without_replacement(&w, 4, &mut rng::stream(3, 0)).unwrap();
        assert_eq!(a, b);
        let mut s = a.clone();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), 4);
        assert!(!a.contains(&2), "zero weight drawn before positive ones");
        assert!(weighted_without_replacement(&w, 6, &mut rng::stream(3, 0)).is_err());
    }

    #[test]
    fn without_replacement_first_draw_follows_weights() {
        let w = [0.1, 0.2, 0.7];
        let mut counts = [0usize; 3];
        let mut r = rng::stream(11, 0);
        for _ in 0..20_000 {
            counts[weighted_without_replacement(&w, 1, &mut r).unwrap()[0]] += 1;
        }
        for (c, p) in counts.iter().zip(w) {
            let f = *c as f64 / 20_000.0;
            assert!((f - p).abs() < 0.015, "{f} vs {p}");
        }
    }

    #[test]
    fn extreme_weight_ratios_keep_order() {
        // a floored row with weight 1e-15 relative must not tie with the rest
        let w = [1e-15, 1.0, 1e-300, 0.5];
        let picks = weighted_without_replacement(&w, 3, &mut rng::stream(2, 0)).unwrap();
        assert!(picks.contains(&1) && picks.contains(&3));
    }

    #[test]
    fn alias_draws_pass_chi_square_for_uniform() {
        let p = uniform(8);
        let draws = draw_rows(&p, 10_000, SamplingScheme::WithReplacement, &mut rng::stream(5, 0)).unwrap();
        let mut counts = [0f64; 8];
        for d in draws {
            counts[d] += 1.0;
        }
        let expected = 10_000.0 / 8.0;
        let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        // 7 degrees of freedom, 99.9% quantile ≈ 24.3
        assert!(chi2 < 24.3, "chi2 = {chi2}");
    }
}
