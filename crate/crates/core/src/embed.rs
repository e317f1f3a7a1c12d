//! Shared text/image embedding space: vocabulary, soft and hard prompts,
//! the linear encoders, the contrastive similarity loss with its exact
//! gradient, nearest-neighbor projection onto the vocabulary, and Adam.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::FeatureVec;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};
use crate::scalar::Scalar;

/// Token embedding table, one row per token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Vocabulary<T> {
    embeddings: Matrix<T>,
    norms: Vec<T>,
}

impl<T: Scalar> Vocabulary<T> {
    pub fn new(embeddings: Matrix<T>) -> Result<Self> {
        if embeddings.rows() < 2 {
            return Err(Error::InvalidConfig(
                "vocabulary needs at least 2 tokens".into(),
            ));
        }
        if !embeddings.is_finite() {
            return Err(Error::NonFinite("vocabulary"));
        }
        let norms: Vec<T> = embeddings.row_iter().map(norm).collect();
        if let Some(i) = norms.iter().position(|n| *n <= T::zero()) {
            return Err(Error::InvalidConfig(format!(
                "vocabulary row {i} has zero norm"
            )));
        }
        Ok(Self { embeddings, norms })
    }

    pub fn len(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn embedding(&self, token: usize) -> &[T] {
        self.embeddings.row(token)
    }

    pub fn embeddings(&self) -> &Matrix<T> {
        &self.embeddings
    }

    /// Looks up the embedding rows of a hard prompt.
    pub fn lookup(&self, prompt: &HardPrompt) -> Matrix<T> {
        let d = self.dim();
        let mut m = Matrix::zeros(prompt.len(), d);
        for (i, &t) in prompt.tokens.iter().enumerate() {
            m.row_mut(i).copy_from_slice(self.embedding(t));
        }
        m
    }

    /// Soft prompt of `length` rows copied from uniformly drawn tokens.
    pub fn random_prompt<R: Rng + ?Sized>(&self, length: usize, rng: &mut R) -> SoftPrompt<T> {
        let tokens = HardPrompt {
            tokens: (0..length)
                .map(|_| rng.random_range(0..self.len()))
                .collect(),
        };
        SoftPrompt(self.lookup(&tokens))
    }

    /// Cosine-nearest token; ties go to the lowest index.
    pub fn nearest(&self, v: &[T]) -> usize {
        let vn = norm(v);
        let mut best = 0;
        let mut best_sim = T::neg_infinity();
        for (i, row) in self.embeddings.row_iter().enumerate() {
            let denom = vn * self.norms[i];
            let sim = if denom > T::zero() {
                dot(row, v) / denom
            } else {
                T::zero()
            };
            if sim > best_sim {
                best_sim = sim;
                best = i;
            }
        }
        best
    }
}

/// Continuous prompt: `L` rows in embedding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent, bound = "T: Scalar")]
pub struct SoftPrompt<T>(pub Matrix<T>);

impl<T: Scalar> SoftPrompt<T> {
    pub fn rows(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }
}

/// Discrete prompt: `L` vocabulary indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HardPrompt {
    pub tokens: Vec<usize>,
}

impl HardPrompt {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Text encoder `T(p) = normalize(W_T · mean(rows))` and image encoder
/// `I(x) = normalize(M_I · x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Encoders<T> {
    pub text_map: Matrix<T>,
    pub image_map: Matrix<T>,
}

/// Output of an encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding<T> {
    /// Unit-norm feature, or `e_0` when degenerate.
    pub unit: FeatureVec<T>,
    /// Pre-normalization output of the linear map.
    pub raw: Vec<T>,
    /// The linear output was zero (or non-finite) and could not be normalized.
    pub degenerate: bool,
}

impl<T: Scalar> Encoding<T> {
    fn from_raw(raw: Vec<T>) -> Self {
        let n = norm(&raw);
        if n > T::zero() && n.is_finite() {
            let unit = FeatureVec(raw.iter().map(|&x| x / n).collect());
            Self {
                unit,
                raw,
                degenerate: false,
            }
        } else {
            Self {
                unit: FeatureVec::basis(raw.len(), 0),
                raw,
                degenerate: true,
            }
        }
    }

    pub fn raw_norm(&self) -> T {
        norm(&self.raw)
    }
}

impl<T: Scalar> Encoders<T> {
    pub fn identity(dim: usize) -> Self {
        Self {
            text_map: Matrix::identity(dim),
            image_map: Matrix::identity(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.image_map.rows()
    }

    /// Encodes prompt rows (soft, or hard rows looked up from the vocabulary).
    pub fn encode_text(&self, rows: &Matrix<T>) -> Encoding<T> {
        Encoding::from_raw(self.text_map.mul_vec(&rows.mean_row()))
    }

    pub fn encode_image(&self, x: &[T]) -> Encoding<T> {
        Encoding::from_raw(self.image_map.mul_vec(x))
    }
}

/// Contrastive similarity between a unit image feature and a unit text
/// feature: `1 − cos` for target-class images, `max(0, cos)` otherwise.
pub fn similarity_loss<T: Scalar>(img: &[T], txt: &[T], is_target: bool) -> Result<T> {
    if !img.iter().chain(txt).all(|x| x.is_finite()) {
        return Err(Error::NonFinite("similarity_loss input"));
    }
    let cos = dot(img, txt);
    Ok(if is_target {
        T::one() - cos
    } else {
        cos.max(T::zero())
    })
}

/// An encoded image paired with its victim verdict relative to the target.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTerm<T> {
    pub unit: Vec<T>,
    pub is_target: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad<T> {
    pub loss: T,
    /// `∂loss/∂rows`, same shape as the prompt.
    pub grad: Matrix<T>,
    /// Text encoding was degenerate; `grad` is zero.
    pub degenerate: bool,
}

/// Loss summed over pre-encoded image terms, with its exact gradient in the
/// prompt rows.
///
/// With `m = mean(rows)`, `u = W_T m`, `t = u/|u|` and `c_k = a_k·t`:
/// `∂c_k/∂u = (a_k − c_k t)/|u|`, and every row receives `W_Tᵀ(·)/L`.
pub fn loss_and_grad_encoded<T: Scalar>(
    encoders: &Encoders<T>,
    rows: &Matrix<T>,
    terms: &[ImageTerm<T>],
) -> Result<LossGrad<T>> {
    if terms.is_empty() {
        return Err(Error::Empty("triplet sample list"));
    }
    if !rows.is_finite() {
        return Err(Error::NonFinite("prompt rows"));
    }
    let text = encoders.encode_text(rows);
    let t = text.unit.as_slice();
    let mut loss = T::zero();
    let mut g_u = vec![T::zero(); t.len()];
    for term in terms {
        loss += similarity_loss(&term.unit, t, term.is_target)?;
        let cos = dot(&term.unit, t);
        let coeff = if term.is_target {
            -T::one()
        } else if cos > T::zero() {
            T::one()
        } else {
            continue;
        };
        for ((g, &a), &ti) in g_u.iter_mut().zip(&term.unit).zip(t) {
            *g += coeff * (a - cos * ti);
        }
    }
    let mut grad = Matrix::zeros(rows.rows(), rows.cols());
    if text.degenerate {
        return Ok(LossGrad {
            loss,
            grad,
            degenerate: true,
        });
    }
    let scale = T::one() / (text.raw_norm() * T::of_usize(rows.rows()));
    let row_grad: Vec<T> = encoders
        .text_map
        .tr_mul_vec(&g_u)
        .into_iter()
        .map(|x| x * scale)
        .collect();
    for i in 0..rows.rows() {
        grad.row_mut(i).copy_from_slice(&row_grad);
    }
    Ok(LossGrad {
        loss,
        grad,
        degenerate: false,
    })
}

/// Encodes raw images and evaluates [`loss_and_grad_encoded`].
pub fn triplet_loss_and_grad<T: Scalar>(
    encoders: &Encoders<T>,
    rows: &Matrix<T>,
    samples: &[(&FeatureVec<T>, bool)],
) -> Result<LossGrad<T>> {
    let terms = encode_terms(encoders, samples)?;
    loss_and_grad_encoded(encoders, rows, &terms)
}

pub fn encode_terms<T: Scalar>(
    encoders: &Encoders<T>,
    samples: &[(&FeatureVec<T>, bool)],
) -> Result<Vec<ImageTerm<T>>> {
    samples
        .iter()
        .map(|(x, is_target)| {
            x.check_dim(encoders.dim())?;
            Ok(ImageTerm {
                unit: encoders.encode_image(x).unit.0,
                is_target: *is_target,
            })
        })
        .collect()
}

/// Replaces each row with its cosine-nearest vocabulary row.
pub fn project_to_vocab<T: Scalar>(
    soft: &SoftPrompt<T>,
    vocab: &Vocabulary<T>,
) -> (SoftPrompt<T>, HardPrompt) {
    let tokens: Vec<usize> = soft.0.row_iter().map(|r| vocab.nearest(r)).collect();
    let hard = HardPrompt { tokens };
    (SoftPrompt(vocab.lookup(&hard)), hard)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled (AdamW-style) decay.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam with bias correction and optional decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    m: Matrix<T>,
    v: Matrix<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(rows: usize, cols: usize, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &Matrix<T> {
        &self.m
    }

    pub fn second_moment(&self) -> &Matrix<T> {
        &self.v
    }

    /// Applies one update in place. Returns `false` (state untouched) when the
    /// gradient has a non-finite entry.
    pub fn step(&mut self, params: &mut Matrix<T>, grad: &Matrix<T>) -> bool {
        assert_eq!(params.shape(), grad.shape(), "gradient shape");
        assert_eq!(params.shape(), self.m.shape(), "optimizer state shape");
        if !grad.is_finite() {
            return false;
        }
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let lr = T::of(c.learning_rate);
        let eps = T::of(c.epsilon);
        let decay = T::one() - lr * T::of(c.weight_decay);
        let bc1 = T::one() - b1.powi(self.step as i32);
        let bc2 = T::one() - b2.powi(self.step as i32);
        let it = params
            .as_mut_slice()
            .iter_mut()
            .zip(grad.as_slice())
            .zip(self.m.as_mut_slice().iter_mut().zip(self.v.as_mut_slice()));
        for ((p, &g), (m, v)) in it {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p = *p * decay - lr * m_hat / (v_hat.sqrt() + eps);
        }
        true
    }
}
