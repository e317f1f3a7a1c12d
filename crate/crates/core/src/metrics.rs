//! Validation metrics: distance between mean features, Spearman rank
//! correlation with a t-test p-value, and k-NN manifold recall.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::domain::FeatureVec;
use crate::error::{Error, Result};
use crate::linalg::distance;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub rho: f64,
    /// Two-sided; `None` when `n < 3`.
    pub p_value: Option<f64>,
    pub n: usize,
}

fn mean<T: Scalar>(xs: &[FeatureVec<T>]) -> Vec<T> {
    let d = xs[0].dim();
    let mut m = vec![T::zero(); d];
    for x in xs {
        for (a, &v) in m.iter_mut().zip(x.iter()) {
            *a += v;
        }
    }
    let n = T::of_usize(xs.len());
    m.iter_mut().for_each(|a| *a /= n);
    m
}

/// `‖mean(gen) − mean(reference)‖₂`.
pub fn l2_mean_feature_distance<T: Scalar>(
    gen: &[FeatureVec<T>],
    reference: &[FeatureVec<T>],
) -> Result<T> {
    if gen.is_empty() {
        return Err(Error::Empty("generated feature set"));
    }
    if reference.is_empty() {
        return Err(Error::Empty("reference feature set"));
    }
    let d = gen[0].dim();
    for x in gen.iter().chain(reference) {
        x.check_dim(d)?;
    }
    Ok(distance(&mean(gen), &mean(reference)))
}

/// 1-based ranks; tied values share the average of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && xs[idx[j]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Two-sided p-value of `t = ρ·√((n−2)/(1−ρ²))` under Student-t with `n−2` df.
pub fn correlation_p_value(rho: f64, n: usize) -> Option<f64> {
    if n < 3 {
        return None;
    }
    let df = (n - 2) as f64;
    if 1.0 - rho * rho <= 0.0 {
        return Some(0.0);
    }
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    Some((2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0))
}

/// Spearman's ρ with average-rank ties.
pub fn spearman<T: Scalar>(xs: &[T], ys: &[T]) -> Result<CorrelationResult> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            found: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::Empty("correlation input (need at least 2 pairs)"));
    }
    let to64 = |v: &[T]| -> Result<Vec<f64>> {
        v.iter()
            .map(|x| {
                let f = x.to_f64_lossy();
                f.is_finite()
                    .then_some(f)
                    .ok_or(Error::NonFinite("correlation input"))
            })
            .collect()
    };
    let rx = average_ranks(&to64(xs)?);
    let ry = average_ranks(&to64(ys)?);
    let rho = pearson(&rx, &ry).ok_or_else(|| {
        if rx.iter().all(|r| *r == rx[0]) {
            Error::UndefinedCorrelation("first argument")
        } else {
            Error::UndefinedCorrelation("second argument")
        }
    })?;
    Ok(CorrelationResult {
        rho,
        p_value: correlation_p_value(rho, xs.len()),
        n: xs.len(),
    })
}

/// Share of `real` points inside the union of balls around each generated
/// point, each ball's radius being the distance to its `k`-th nearest
/// generated neighbor (itself excluded).
pub fn knn_recall<T: Scalar>(
    real: &[FeatureVec<T>],
    gen: &[FeatureVec<T>],
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if gen.len() <= k {
        return Err(Error::TooFewPoints { k, n: gen.len() });
    }
    if real.is_empty() {
        return Err(Error::Empty("real feature set"));
    }
    let radii: Vec<T> = gen
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let mut d: Vec<T> = gen
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, h)| distance(g, h))
                .collect();
            let (_, kth, _) = d.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap());
            *kth
        })
        .collect();
    let covered = real
        .iter()
        .filter(|r| {
            gen.iter()
                .zip(&radii)
                .any(|(g, &rad)| distance(r, g) <= rad)
        })
        .count();
    Ok(covered as f64 / real.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FeatureVec<f64> {
        FeatureVec(v.to_vec())
    }

    #[test]
    fn l2_identity_and_translation() {
        let a = vec![fv(&[1.0, 2.0]), fv(&[3.0, -1.0])];
        assert_eq!(l2_mean_feature_distance(&a, &a).unwrap(), 0.0);
        let shifted: Vec<_> = a.iter().map(|x| fv(&[x[0] + 3.0, x[1] - 4.0])).collect();
        assert!((l2_mean_feature_distance(&shifted, &a).unwrap() - 5.0).abs() < 1e-12);
        assert!(l2_mean_feature_distance(&[], &a).is_err());
    }

    #[test]
    fn spearman_perfect_orders() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let down = [9.0, 7.0, 4.0, 0.0, -3.0];
        assert_eq!(spearman(&x, &down).unwrap().rho, -1.0);
        let up = spearman(&x, &x).unwrap();
        assert_eq!(up.rho, 1.0);
        assert_eq!(up.p_value, Some(0.0));
    }

    #[test]
    fn spearman_zero_variance_is_undefined() {
        assert!(matches!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation("first argument"))
        ));
        assert!(matches!(
            spearman(&[1.0, 2.0, 3.0], &[0.5, 0.5, 0.5]),
            Err(Error::UndefinedCorrelation("second argument"))
        ));
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(
            average_ranks(&[10.0, 20.0, 10.0, 30.0, 20.0]),
            vec![1.5, 3.5, 1.5, 5.0, 3.5]
        );
    }

    #[test]
    fn p_value_matches_reference_table() {
        // scipy.stats.t.sf(2.0, 10) * 2 = 0.07338803477074..., i.e. rho with t = 2 at n = 12
        let rho = 2.0 / (10.0f64 + 4.0).sqrt();
        let p = correlation_p_value(rho, 12).unwrap();
        assert!((p - 0.073388034770740).abs() < 1e-9, "{p}");
    }

    #[test]
    fn recall_self_cover_and_far_shift() {
        let pts: Vec<_> = (0..8)
            .map(|i| fv(&[i as f64, (i * i) as f64 * 0.1]))
            .collect();
        assert_eq!(knn_recall(&pts, &pts, 1).unwrap(), 1.0);
        let far: Vec<_> = pts.iter().map(|p| fv(&[p[0] + 1e6, p[1]])).collect();
        assert_eq!(knn_recall(&pts, &far, 3).unwrap(), 0.0);
        assert!(matches!(
            knn_recall(&pts, &pts[..3], 3),
            Err(Error::TooFewPoints { k: 3, n: 3 })
        ));
    }
}
