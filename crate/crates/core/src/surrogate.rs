//! Linear softmax attacker trained on harvested (sample, victim label)
//! pairs, and its evaluation on the victim's test data.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{ClassId, FeatureVec};
use crate::error::{Error, Result};
use crate::linalg::{argmax_first, dot, Matrix};
use crate::scalar::Scalar;
use crate::world::LabeledPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    Hard,
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    Constant,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub schedule: Schedule,
    pub label_mode: LabelMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            schedule: Schedule::Cosine,
            label_mode: LabelMode::Hard,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0
            || self.batch_size == 0
            || self.learning_rate.is_nan()
            || self.learning_rate <= 0.0
        {
            return Err(Error::InvalidConfig(
                "train: epochs and batch_size must be >= 1 and learning_rate > 0".into(),
            ));
        }
        Ok(())
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        match self.schedule {
            Schedule::Constant => self.learning_rate,
            Schedule::Cosine => {
                let frac = epoch as f64 / self.epochs as f64;
                0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * frac).cos())
            }
        }
    }
}

/// One training pair. `soft` holds the victim's probability vector when
/// soft-label access is simulated.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample<T> {
    pub feature: FeatureVec<T>,
    pub hard: ClassId,
    pub soft: Option<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AttackerModel<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> AttackerModel<T> {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            weights: Matrix::zeros(classes, dim),
            bias: vec![T::zero(); classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn logits(&self, x: &[T]) -> Vec<T> {
        self.weights
            .row_iter()
            .zip(&self.bias)
            .map(|(w, &b)| dot(w, x) + b)
            .collect()
    }

    pub fn predict(&self, x: &[T]) -> ClassId {
        ClassId(argmax_first(&self.logits(x)).unwrap_or(0))
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.bias.iter().all(|b| b.is_finite())
    }
}

fn softmax<T: Scalar>(z: &[T]) -> Vec<T> {
    let max = z.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let e: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
    let s = e.iter().fold(T::zero(), |a, &b| a + b);
    e.into_iter().map(|v| v / s).collect()
}

fn target<T: Scalar>(ex: &TrainExample<T>, classes: usize, mode: LabelMode) -> Vec<T> {
    match (mode, &ex.soft) {
        (LabelMode::Soft, Some(p)) => p.clone(),
        _ => {
            let mut q = vec![T::zero(); classes];
            q[ex.hard.0] = T::one();
            q
        }
    }
}

/// Mean cross-entropy over `batch` plus `(weight_decay/2)·|W|²`, with its
/// gradient in `(W, b)`.
pub fn batch_loss_and_grad<T: Scalar>(
    model: &AttackerModel<T>,
    batch: &[&TrainExample<T>],
    mode: LabelMode,
    weight_decay: f64,
) -> (T, AttackerModel<T>) {
    let k = model.classes();
    let mut grad = AttackerModel::zeros(k, model.weights.cols());
    let mut loss = T::zero();
    let n = T::of_usize(batch.len().max(1));
    for ex in batch {
        let p = softmax(&model.logits(&ex.feature));
        let q = target(ex, k, mode);
        for c in 0..k {
            if q[c] > T::zero() {
                loss -= q[c] * p[c].max(T::min_positive_value()).ln();
            }
            let delta = (p[c] - q[c]) / n;
            grad.bias[c] += delta;
            for (g, &x) in grad.weights.row_mut(c).iter_mut().zip(ex.feature.iter()) {
                *g += delta * x;
            }
        }
    }
    loss /= n;
    let wd = T::of(weight_decay);
    if wd > T::zero() {
        let sq = model
            .weights
            .as_slice()
            .iter()
            .fold(T::zero(), |a, &w| a + w * w);
        loss += wd * sq / T::of(2.0);
        for (g, &w) in grad
            .weights
            .as_mut_slice()
            .iter_mut()
            .zip(model.weights.as_slice())
        {
            *g += wd * w;
        }
    }
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained<T> {
    pub model: AttackerModel<T>,
    /// Full-dataset loss before training, then after each epoch.
    pub losses: Vec<T>,
    /// Fewer than two distinct labels were present.
    pub degenerate_coverage: bool,
}

fn dataset_loss<T: Scalar>(
    model: &AttackerModel<T>,
    data: &[TrainExample<T>],
    cfg: &TrainConfig,
) -> T {
    let all: Vec<&TrainExample<T>> = data.iter().collect();
    batch_loss_and_grad(model, &all, cfg.label_mode, cfg.weight_decay).0
}

/// Mini-batch SGD with momentum on the cross-entropy. Deterministic given `rng`.
pub fn train_attacker<T: Scalar, R: Rng + ?Sized>(
    data: &[TrainExample<T>],
    classes: usize,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Trained<T>> {
    cfg.validate()?;
    let first = data.first().ok_or(Error::Empty("training set"))?;
    let dim = first.feature.dim();
    for ex in data {
        ex.feature.check_dim(dim)?;
        if ex.hard.0 >= classes {
            return Err(Error::InvalidConfig(format!(
                "label {} >= classes {classes}",
                ex.hard
            )));
        }
        if let (LabelMode::Soft, Some(p)) = (cfg.label_mode, &ex.soft) {
            if p.len() != classes {
                return Err(Error::DimensionMismatch {
                    expected: classes,
                    found: p.len(),
                });
            }
        }
    }
    let mut seen = vec![false; classes];
    data.iter().for_each(|ex| seen[ex.hard.0] = true);
    let degenerate_coverage = seen.iter().filter(|s| **s).count() < 2;

    let mut model = AttackerModel::zeros(classes, dim);
    for w in model.weights.as_mut_slice() {
        *w = T::of(0.01 * rng.sample::<f64, _>(StandardNormal));
    }
    let mut velocity = AttackerModel::<T>::zeros(classes, dim);
    let mu = T::of(cfg.momentum);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = vec![dataset_loss(&model, data, cfg)];

    for epoch in 0..cfg.epochs {
        let lr = T::of(cfg.lr_at(epoch));
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&TrainExample<T>> = chunk.iter().map(|&i| &data[i]).collect();
            let (_, g) = batch_loss_and_grad(&model, &batch, cfg.label_mode, cfg.weight_decay);
            let params = model
                .weights
                .as_mut_slice()
                .iter_mut()
                .chain(model.bias.iter_mut());
            let vel = velocity
                .weights
                .as_mut_slice()
                .iter_mut()
                .chain(velocity.bias.iter_mut());
            let grads = g.weights.as_slice().iter().chain(g.bias.iter());
            for ((p, v), &gi) in params.zip(vel).zip(grads) {
                *v = mu * *v + gi;
                *p -= lr * *v;
            }
        }
        losses.push(dataset_loss(&model, data, cfg));
    }
    if !model.is_finite() {
        return Err(Error::NonFinite("attacker parameters"));
    }
    Ok(Trained {
        model,
        losses,
        degenerate_coverage,
    })
}

/// Fraction of points whose argmax logit matches the ground-truth label.
pub fn evaluate_accuracy<T: Scalar>(
    model: &AttackerModel<T>,
    test: &[LabeledPoint<T>],
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let hits = test
        .iter()
        .filter(|p| model.predict(&p.feature) == p.label)
        .count();
    Ok(hits as f64 / test.len() as f64)
}
