//! Independent reference implementations used by the integration and
//! acceptance tests. Everything here is written from the definitions with
//! plain loops and deliberately shares no code paths with the library.

#![allow(dead_code)]

use evosteal::embed::{triplet_loss_and_grad, Encoders};
use evosteal::surrogate::{batch_loss_and_grad, AttackerModel, LabelMode, TrainExample};
use evosteal::{ClassId, FeatureVec, Matrix};
use rand::Rng;
use rand_distr::StandardNormal;

pub const FD_STEP: f64 = 1e-5;

pub fn normal_vec<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn normal_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix<f64> {
    Matrix::from_vec(rows, cols, normal_vec(rows * cols, rng)).unwrap()
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn matvec(m: &Matrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.rows())
        .map(|r| (0..m.cols()).map(|c| m[(r, c)] * v[c]).sum())
        .collect()
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = l2(&v);
    v.into_iter().map(|x| x / n).collect()
}

/// Cosine similarity computed from scratch.
pub fn brute_cosine(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let (na, nb) = (l2(a), l2(b));
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        d / (na * nb)
    }
}

/// Contrastive prompt loss written directly from its definition.
pub fn reference_prompt_loss(
    enc: &Encoders<f64>,
    rows: &Matrix<f64>,
    images: &[(Vec<f64>, bool)],
) -> f64 {
    let l = rows.rows();
    let mean: Vec<f64> = (0..rows.cols())
        .map(|c| (0..l).map(|r| rows[(r, c)]).sum::<f64>() / l as f64)
        .collect();
    let t = unit(matvec(&enc.text_map, &mean));
    images
        .iter()
        .map(|(x, is_target)| {
            let a = unit(matvec(&enc.image_map, x));
            let cos: f64 = a.iter().zip(&t).map(|(p, q)| p * q).sum();
            if *is_target {
                1.0 - cos
            } else {
                cos.max(0.0)
            }
        })
        .sum()
}

/// Relative error `max|a − n| / max(max|n|, max|a|)` between an analytic
/// and a numerical gradient.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let scale = analytic
        .iter()
        .chain(numeric)
        .map(|v| v.abs())
        .fold(1e-12, f64::max);
    diff / scale
}

/// One random contrastive-loss instance. Hinge terms whose cosine sits
/// within `1e-3` of the kink are redrawn so the central difference never
/// straddles it.
pub fn prompt_loss_fd_instance<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let d = rng.random_range(3..=8);
        let l = rng.random_range(1..=5);
        let enc = Encoders {
            text_map: normal_matrix(d, d, rng),
            image_map: normal_matrix(d, d, rng),
        };
        let rows = normal_matrix(l, d, rng);
        let n_img = rng.random_range(1..=4);
        let images: Vec<(Vec<f64>, bool)> = (0..n_img)
            .map(|i| (normal_vec(d, rng), i == 0 || rng.random_bool(0.5)))
            .collect();

        let mean: Vec<f64> = (0..d)
            .map(|c| (0..l).map(|r| rows[(r, c)]).sum::<f64>() / l as f64)
            .collect();
        let t = unit(matvec(&enc.text_map, &mean));
        let near_kink = images.iter().any(|(x, target)| {
            let a = unit(matvec(&enc.image_map, x));
            !target && a.iter().zip(&t).map(|(p, q)| p * q).sum::<f64>().abs() < 1e-3
        });
        if near_kink || l2(&matvec(&enc.text_map, &mean)) < 1e-2 {
            continue;
        }

        let feats: Vec<(FeatureVec<f64>, bool)> = images
            .iter()
            .map(|(x, b)| (FeatureVec(x.clone()), *b))
            .collect();
        let refs: Vec<(&FeatureVec<f64>, bool)> = feats.iter().map(|(x, b)| (x, *b)).collect();
        let analytic = triplet_loss_and_grad(&enc, &rows, &refs).unwrap();
        assert!(!analytic.degenerate);

        let mut numeric = Vec::with_capacity(l * d);
        for i in 0..l * d {
            let mut plus = rows.clone();
            plus.as_mut_slice()[i] += FD_STEP;
            let mut minus = rows.clone();
            minus.as_mut_slice()[i] -= FD_STEP;
            numeric.push(
                (reference_prompt_loss(&enc, &plus, &images)
                    - reference_prompt_loss(&enc, &minus, &images))
                    / (2.0 * FD_STEP),
            );
        }
        return relative_error(analytic.grad.as_slice(), &numeric);
    }
}

/// Cross-entropy plus weight decay written directly from its definition.
pub fn reference_cross_entropy(
    weights: &[f64],
    bias: &[f64],
    dim: usize,
    batch: &[(Vec<f64>, Vec<f64>)],
    weight_decay: f64,
) -> f64 {
    let k = bias.len();
    let mut total = 0.0;
    for (x, q) in batch {
        let z: Vec<f64> = (0..k)
            .map(|c| (0..dim).map(|j| weights[c * dim + j] * x[j]).sum::<f64>() + bias[c])
            .collect();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += (0..k).map(|c| -q[c] * (z[c] - lse)).sum::<f64>();
    }
    total / batch.len() as f64 + 0.5 * weight_decay * weights.iter().map(|w| w * w).sum::<f64>()
}

/// One random attacker cross-entropy instance, alternating hard and soft
/// targets.
pub fn cross_entropy_fd_instance<R: Rng>(rng: &mut R, soft: bool) -> f64 {
    let d = rng.random_range(2..=6);
    let k = rng.random_range(2..=5);
    let wd = if rng.random_bool(0.5) {
        0.0
    } else {
        rng.random_range(1e-4..1e-1)
    };
    let model = AttackerModel {
        weights: normal_matrix(k, d, rng),
        bias: normal_vec(k, rng),
    };
    let n = rng.random_range(1..=6);
    let examples: Vec<TrainExample<f64>> = (0..n)
        .map(|_| {
            let hard = rng.random_range(0..k);
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = raw.iter().sum();
            TrainExample {
                feature: FeatureVec(normal_vec(d, rng)),
                hard: ClassId(hard),
                soft: Some(raw.into_iter().map(|v| v / s).collect()),
            }
        })
        .collect();
    let mode = if soft {
        LabelMode::Soft
    } else {
        LabelMode::Hard
    };
    let batch: Vec<(Vec<f64>, Vec<f64>)> = examples
        .iter()
        .map(|e| {
            let q = if soft {
                e.soft.clone().unwrap()
            } else {
                (0..k)
                    .map(|c| if c == e.hard.0 { 1.0 } else { 0.0 })
                    .collect()
            };
            (e.feature.0.clone(), q)
        })
        .collect();
    let refs: Vec<&TrainExample<f64>> = examples.iter().collect();
    let (_, grad) = batch_loss_and_grad(&model, &refs, mode, wd);

    let mut params: Vec<f64> = model.weights.as_slice().to_vec();
    params.extend_from_slice(&model.bias);
    let f = |p: &[f64]| reference_cross_entropy(&p[..k * d], &p[k * d..], d, &batch, wd);
    let numeric: Vec<f64> = (0..params.len())
        .map(|i| {
            let mut plus = params.clone();
            plus[i] += FD_STEP;
            let mut minus = params.clone();
            minus[i] -= FD_STEP;
            (f(&plus) - f(&minus)) / (2.0 * FD_STEP)
        })
        .collect();
    let mut analytic = grad.weights.as_slice().to_vec();
    analytic.extend_from_slice(&grad.bias);
    relative_error(&analytic, &numeric)
}

/// Cosine-nearest row, lowest index on ties.
pub fn brute_nearest(vocab: &Matrix<f64>, v: &[f64]) -> usize {
    let mut best = 0;
    let mut best_cos = f64::NEG_INFINITY;
    for r in 0..vocab.rows() {
        let c = brute_cosine(vocab.row(r), v);
        if c > best_cos {
            best = r;
            best_cos = c;
        }
    }
    best
}

/// Average (mid) ranks, 1-based, by counting.
pub fn brute_ranks(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|&x| {
            let less = xs.iter().filter(|&&y| y < x).count() as f64;
            let equal = xs.iter().filter(|&&y| y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Spearman's rho and its two-sided p-value via the regularized incomplete
/// beta function.
pub fn brute_spearman(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let (rx, ry) = (brute_ranks(xs), brute_ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    let rho = cov / (vx * vy).sqrt();
    let df = n - 2.0;
    let p = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t2 = rho * rho * df / (1.0 - rho * rho);
        statrs::function::beta::beta_reg(df / 2.0, 0.5, df / (df + t2))
    };
    Some((rho, p))
}

/// Recall by exhaustive distance tables.
pub fn brute_knn_recall(real: &[Vec<f64>], gen: &[Vec<f64>], k: usize) -> f64 {
    let dist = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let radii: Vec<f64> = gen
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let mut ds: Vec<f64> = gen
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, h)| dist(g, h))
                .collect();
            ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
            ds[k - 1]
        })
        .collect();
    let covered = real
        .iter()
        .filter(|r| gen.iter().zip(&radii).any(|(g, &rad)| dist(r, g) <= rad))
        .count();
    covered as f64 / real.len() as f64
}

/// First index holding the maximum.
pub fn brute_elite(scores: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    best
}
