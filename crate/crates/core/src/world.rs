//! Synthetic oracle bundle standing in for the generator, the
//! vision-language encoders and the deployed victim classifier.
//!
//! Images are feature vectors in `R^d`. The victim scores a point by its
//! cosine with `K` orthonormal class prototypes. Seeds are contaminated with
//! a distractor direction orthogonal to every prototype, which the victim
//! ignores but a prompt fitted to the seed alone picks up.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{ClassId, FeatureVec, LabeledSample};
use crate::embed::{Encoders, HardPrompt, Vocabulary};
use crate::error::{Error, Result};
use crate::linalg::{argmax_first, cosine, gram_schmidt_step, normalized, Matrix};
use crate::rng::substream;
use crate::scalar::Scalar;

const SEED_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub dim: usize,
    pub classes: usize,
    pub vocab_size: usize,
    pub prompt_length: usize,
    pub generator_noise: f64,
    pub victim_noise: f64,
    pub distractor_strength: f64,
    pub softmax_temperature: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub rng_seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            classes: 4,
            vocab_size: 128,
            prompt_length: 16,
            generator_noise: 0.1,
            victim_noise: 0.3,
            distractor_strength: 0.5,
            softmax_temperature: 10.0,
            train_per_class: 100,
            test_per_class: 500,
            rng_seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.classes < 2 {
            return fail("world.classes must be at least 2");
        }
        if self.dim < self.classes {
            return fail("world.dim must be at least world.classes");
        }
        if self.vocab_size < 2 {
            return fail("world.vocab_size must be at least 2");
        }
        if self.prompt_length == 0 {
            return fail("world.prompt_length must be at least 1");
        }
        if !(self.generator_noise >= 0.0
            && self.victim_noise >= 0.0
            && self.distractor_strength >= 0.0)
        {
            return fail("world noise scales and distractor_strength must be non-negative");
        }
        if self.softmax_temperature.is_nan() || self.softmax_temperature <= 0.0 {
            return fail("world.softmax_temperature must be positive");
        }
        if self.train_per_class == 0 || self.test_per_class == 0 {
            return fail("world train/test sizes must be at least 1 per class");
        }
        Ok(())
    }
}

/// A ground-truth labeled point from the victim's data distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LabeledPoint<T> {
    pub feature: FeatureVec<T>,
    pub label: ClassId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Victim answer for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub class: ClassId,
    /// `softmax(scores / τ)`; only consumed when soft-label access is enabled.
    pub probs: Vec<T>,
    /// The query was the zero vector; `class` defaults to 0.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct World<T> {
    pub config: WorldConfig,
    pub vocab: Vocabulary<T>,
    pub encoders: Encoders<T>,
    pub gen_map: Matrix<T>,
    pub gen_offset: Vec<T>,
    pub prototypes: Vec<Vec<T>>,
    pub distractor: Vec<T>,
    pub victim_train: Vec<LabeledPoint<T>>,
    pub victim_test: Vec<LabeledPoint<T>>,
    /// One victim-correct seed per class, indexed by class id.
    pub seeds: Vec<LabeledSample<T>>,
}

fn gaussian<T: Scalar, R: Rng + ?Sized>(dim: usize, sigma: f64, rng: &mut R) -> Vec<T> {
    (0..dim)
        .map(|_| T::of(sigma * rng.sample::<f64, _>(StandardNormal)))
        .collect()
}

fn orthonormal_draw<T: Scalar, R: Rng + ?Sized>(
    dim: usize,
    basis: &[Vec<T>],
    rng: &mut R,
) -> Vec<T> {
    loop {
        let v = gaussian::<T, _>(dim, 1.0, rng);
        if let Some(q) = gram_schmidt_step(&v, basis) {
            return q;
        }
    }
}

/// Builds the world deterministically from `cfg.rng_seed`.
pub fn build_world<T: Scalar>(cfg: &WorldConfig) -> Result<World<T>> {
    cfg.validate()?;
    let d = cfg.dim;
    let seed = cfg.rng_seed;

    let mut rng = substream(seed, "world/vocab", &[]);
    let vocab = Vocabulary::new(Matrix::standard_normal(cfg.vocab_size, d, &mut rng))?;

    let mut rng = substream(seed, "world/prototypes", &[]);
    let mut prototypes = Vec::with_capacity(cfg.classes);
    for _ in 0..cfg.classes {
        let q = orthonormal_draw(d, &prototypes, &mut rng);
        prototypes.push(q);
    }
    let distractor = if d > cfg.classes {
        orthonormal_draw(d, &prototypes, &mut rng)
    } else {
        orthonormal_draw(d, &[], &mut rng)
    };

    let mut world = World {
        config: cfg.clone(),
        vocab,
        encoders: Encoders::identity(d),
        gen_map: Matrix::identity(d),
        gen_offset: vec![T::zero(); d],
        prototypes,
        distractor,
        victim_train: Vec::new(),
        victim_test: Vec::new(),
        seeds: Vec::new(),
    };

    world.victim_train = world.sample_victim_data(
        cfg.train_per_class,
        &mut substream(seed, "world/victim-data", &[0]),
    );
    world.victim_test = world.sample_victim_data(
        cfg.test_per_class,
        &mut substream(seed, "world/victim-data", &[1]),
    );

    for c in 0..cfg.classes {
        let mut rng = substream(seed, "world/seeds", &[c as u64]);
        let seed_sample = world.draw_seed(ClassId(c), &mut rng)?;
        world.seeds.push(seed_sample);
    }
    Ok(world)
}

impl<T: Scalar> World<T> {
    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn classes(&self) -> usize {
        self.config.classes
    }

    pub fn with_text_map(mut self, m: Matrix<T>) -> Result<Self> {
        self.check_square(&m)?;
        self.encoders.text_map = m;
        Ok(self)
    }

    pub fn with_image_map(mut self, m: Matrix<T>) -> Result<Self> {
        self.check_square(&m)?;
        self.encoders.image_map = m;
        Ok(self)
    }

    pub fn with_generator(mut self, m: Matrix<T>, offset: Vec<T>) -> Result<Self> {
        self.check_square(&m)?;
        if offset.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: offset.len(),
            });
        }
        self.gen_map = m;
        self.gen_offset = offset;
        Ok(self)
    }

    fn check_square(&self, m: &Matrix<T>) -> Result<()> {
        let d = self.dim();
        if m.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: if m.rows() != d { m.rows() } else { m.cols() },
            });
        }
        Ok(())
    }

    fn draw_seed<R: Rng + ?Sized>(&self, class: ClassId, rng: &mut R) -> Result<LabeledSample<T>> {
        let d = self.dim();
        let alpha = T::of(self.config.distractor_strength);
        for _ in 0..SEED_ATTEMPTS {
            let noise = gaussian::<T, _>(d, self.config.victim_noise, rng);
            let x: Vec<T> = (0..d)
                .map(|i| self.prototypes[class.0][i] + alpha * self.distractor[i] + noise[i])
                .collect();
            if self.victim_predict(&x).class == class {
                return Ok(LabeledSample {
                    feature: FeatureVec(x),
                    predicted: class,
                });
            }
        }
        Err(Error::SeedResamplingExhausted {
            class: class.0,
            attempts: SEED_ATTEMPTS,
        })
    }

    /// Pre-normalization text encoding of a hard prompt.
    pub fn raw_text(&self, prompt: &HardPrompt) -> Vec<T> {
        self.encoders.encode_text(&self.vocab.lookup(prompt)).raw
    }

    /// The generator's noiseless output for `prompt`.
    pub fn generate_mean(&self, prompt: &HardPrompt) -> Vec<T> {
        let mut x = self.gen_map.mul_vec(&self.raw_text(prompt));
        for (xi, &b) in x.iter_mut().zip(&self.gen_offset) {
            *xi += b;
        }
        x
    }

    /// Synthesizes one sample: `A_G · t_raw(prompt) + b_G + ε`.
    pub fn generate<R: Rng + ?Sized>(&self, prompt: &HardPrompt, rng: &mut R) -> FeatureVec<T> {
        let mut x = self.generate_mean(prompt);
        let noise = gaussian::<T, _>(self.dim(), self.config.generator_noise, rng);
        for (xi, e) in x.iter_mut().zip(noise) {
            *xi += e;
        }
        FeatureVec(x)
    }

    /// Cosine scores against each prototype.
    pub fn victim_scores(&self, x: &[T]) -> Vec<T> {
        self.prototypes.iter().map(|mu| cosine(x, mu)).collect()
    }

    pub fn victim_predict(&self, x: &[T]) -> Prediction<T> {
        let scores = self.victim_scores(x);
        let degenerate = normalized(x).is_none();
        let class = if degenerate {
            ClassId(0)
        } else {
            ClassId(argmax_first(&scores).unwrap_or(0))
        };
        let tau = T::of(self.config.softmax_temperature);
        let max = scores.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let exps: Vec<T> = scores.iter().map(|&s| ((s - max) / tau).exp()).collect();
        let total = exps.iter().fold(T::zero(), |a, &b| a + b);
        Prediction {
            class,
            probs: exps.into_iter().map(|e| e / total).collect(),
            degenerate,
        }
    }

    /// `per_class` draws of `μ_c + N(0, σ_v² I)` for every class, in class order.
    pub fn sample_victim_data<R: Rng + ?Sized>(
        &self,
        per_class: usize,
        rng: &mut R,
    ) -> Vec<LabeledPoint<T>> {
        let d = self.dim();
        let mut out = Vec::with_capacity(per_class * self.classes());
        for (c, mu) in self.prototypes.iter().enumerate() {
            for _ in 0..per_class {
                let noise = gaussian::<T, _>(d, self.config.victim_noise, rng);
                let x = mu.iter().zip(noise).map(|(&m, e)| m + e).collect();
                out.push(LabeledPoint {
                    feature: FeatureVec(x),
                    label: ClassId(c),
                });
            }
        }
        out
    }

    pub fn victim_data(&self, split: Split) -> &[LabeledPoint<T>] {
        match split {
            Split::Train => &self.victim_train,
            Split::Test => &self.victim_test,
        }
    }

    /// Victim top-1 accuracy on ground-truth labeled points.
    pub fn victim_accuracy(&self, data: &[LabeledPoint<T>]) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let hits = data
            .iter()
            .filter(|p| self.victim_predict(&p.feature).class == p.label)
            .count();
        hits as f64 / data.len() as f64
    }

    /// Features of one class from a labeled split.
    pub fn class_features(&self, split: Split, class: ClassId) -> Vec<FeatureVec<T>> {
        self.victim_data(split)
            .iter()
            .filter(|p| p.label == class)
            .map(|p| p.feature.clone())
            .collect()
    }

    /// Serializes the full world to a binary snapshot.
    pub fn to_snapshot(&self) -> Vec<u8> {
        bincode::serialize(self).expect("world is always serializable")
    }

    pub fn from_snapshot(bytes: &[u8]) -> Result<Self> {
        bincode::deserialize(bytes)
            .map_err(|e| Error::InvalidConfig(format!("bad world snapshot: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot, norm};

    fn small(seed: u64) -> WorldConfig {
        WorldConfig {
            rng_seed: seed,
            train_per_class: 20,
            test_per_class: 20,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn prototypes_orthonormal_and_distractor_orthogonal() {
        let w: World<f64> = build_world(&small(3)).unwrap();
        for (i, a) in w.prototypes.iter().enumerate() {
            assert!((norm(a) - 1.0).abs() < 1e-12);
            assert!(dot(a, &w.distractor).abs() < 1e-12);
            for b in &w.prototypes[i + 1..] {
                assert!(dot(a, b).abs() < 1e-12);
            }
        }
        assert!((norm(&w.distractor) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_dimensional_two_class_world() {
        let cfg = WorldConfig {
            dim: 2,
            classes: 2,
            ..small(1)
        };
        let w: World<f64> = build_world(&cfg).unwrap();
        assert!(dot(&w.prototypes[0], &w.prototypes[1]).abs() < 1e-12);
        assert!((norm(&w.prototypes[1]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn build_is_deterministic() {
        let a: World<f64> = build_world(&small(9)).unwrap();
        let b: World<f64> = build_world(&small(9)).unwrap();
        assert_eq!(a.to_snapshot(), b.to_snapshot());
        assert_eq!(World::<f64>::from_snapshot(&a.to_snapshot()).unwrap(), a);
    }

    #[test]
    fn seeds_are_victim_correct() {
        let w: World<f64> = build_world(&small(4)).unwrap();
        for (c, s) in w.seeds.iter().enumerate() {
            assert_eq!(s.predicted, ClassId(c));
            assert_eq!(w.victim_predict(&s.feature).class, ClassId(c));
        }
    }

    #[test]
    fn impossible_seed_reports_error() {
        let cfg = WorldConfig {
            victim_noise: 0.0,
            distractor_strength: 0.5,
            ..small(0)
        };
        // noiseless seeds always succeed
        assert!(build_world::<f64>(&cfg).is_ok());
        let cfg = WorldConfig {
            dim: 2,
            classes: 2,
            victim_noise: 0.0,
            distractor_strength: 50.0,
            ..small(0)
        };
        // with d == K the distractor is not orthogonal and swamps the prototype,
        // so one of the two classes can never get a correct seed
        assert!(matches!(
            build_world::<f64>(&cfg),
            Err(Error::SeedResamplingExhausted { .. })
        ));
    }

    #[test]
    fn victim_recovers_prototypes_and_breaks_ties_low() {
        let w: World<f64> = build_world(&small(5)).unwrap();
        let p = w.victim_predict(&w.prototypes[2]);
        assert_eq!(p.class, ClassId(2));
        assert_eq!(argmax_first(&p.probs), Some(2));
        let mid: Vec<f64> = w.prototypes[0]
            .iter()
            .zip(&w.prototypes[1])
            .map(|(a, b)| a + b)
            .collect();
        assert_eq!(w.victim_predict(&mid).class, ClassId(0));
        let off: Vec<f64> = w.prototypes[1]
            .iter()
            .zip(&w.distractor)
            .map(|(a, b)| a + 0.3 * b)
            .collect();
        assert_eq!(w.victim_predict(&off).class, ClassId(1));
        let zero = w.victim_predict(&[0.0; 16]);
        assert!(zero.degenerate);
        assert_eq!(zero.class, ClassId(0));
        let total: f64 = p.probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_generator_returns_raw_encoding() {
        let cfg = WorldConfig {
            generator_noise: 0.0,
            ..small(2)
        };
        let w: World<f64> = build_world(&cfg).unwrap();
        let prompt = HardPrompt {
            tokens: vec![3, 7, 7, 1],
        };
        let mut rng = substream(0, "t", &[]);
        assert_eq!(w.generate(&prompt, &mut rng).0, w.raw_text(&prompt));
    }

    #[test]
    fn noisy_generator_is_stochastic() {
        let w: World<f64> = build_world(&small(2)).unwrap();
        let prompt = HardPrompt {
            tokens: vec![0; 16],
        };
        let mut rng = substream(0, "t", &[]);
        assert_ne!(w.generate(&prompt, &mut rng), w.generate(&prompt, &mut rng));
    }

    #[test]
    fn generator_noise_averages_out() {
        let w: World<f64> = build_world(&small(6)).unwrap();
        let prompt = HardPrompt {
            tokens: (0..16).collect(),
        };
        let mean = w.generate_mean(&prompt);
        let mut rng = substream(1, "lln", &[]);
        let n = 10_000;
        let mut acc = vec![0.0; w.dim()];
        for _ in 0..n {
            for (a, x) in acc.iter_mut().zip(w.generate(&prompt, &mut rng).0) {
                *a += x / n as f64;
            }
        }
        let dev: Vec<f64> = acc.iter().zip(&mean).map(|(a, m)| a - m).collect();
        let bound = 3.0 * w.config.generator_noise * (w.dim() as f64).sqrt() / 100.0;
        assert!(norm(&dev) < bound, "{} >= {bound}", norm(&dev));
    }

    #[test]
    fn noiseless_victim_data_sits_on_prototypes() {
        let cfg = WorldConfig {
            victim_noise: 0.0,
            ..small(7)
        };
        let w: World<f64> = build_world(&cfg).unwrap();
        for p in &w.victim_test {
            assert_eq!(p.feature.0, w.prototypes[p.label.0]);
        }
        assert_eq!(w.victim_accuracy(&w.victim_test), 1.0);
    }

    #[test]
    fn zero_distractor_seed_matches_victim_distribution() {
        let cfg = WorldConfig {
            distractor_strength: 0.0,
            ..small(8)
        };
        let w: World<f64> = build_world(&cfg).unwrap();
        // α = 0: the seed is the first victim-correct draw of μ_c + N(0, σ_v² I)
        for c in 0..w.classes() {
            let mut rng = substream(8, "world/seeds", &[c as u64]);
            let expected = loop {
                let noise = gaussian::<f64, _>(16, cfg.victim_noise, &mut rng);
                let x: Vec<f64> = w.prototypes[c]
                    .iter()
                    .zip(noise)
                    .map(|(m, e)| m + e)
                    .collect();
                if w.victim_predict(&x).class == ClassId(c) {
                    break x;
                }
            };
            assert_eq!(w.seeds[c].feature.0, expected);
        }
    }

    #[test]
    fn default_victim_is_accurate() {
        let cfg = WorldConfig {
            test_per_class: 1000,
            ..WorldConfig::default()
        };
        let w: World<f64> = build_world(&cfg).unwrap();
        assert!(w.victim_accuracy(&w.victim_test) > 0.95);
    }

    #[test]
    fn train_and_test_disjoint() {
        let w: World<f64> = build_world(&small(10)).unwrap();
        for a in &w.victim_train {
            assert!(w.victim_test.iter().all(|b| b.feature != a.feature));
        }
    }

    #[test]
    fn victim_is_scale_invariant() {
        let w: World<f64> = build_world(&small(11)).unwrap();
        for p in w.victim_test.iter().take(20) {
            let scaled: Vec<f64> = p.feature.iter().map(|x| 3.7 * x).collect();
            assert_eq!(
                w.victim_predict(&p.feature).class,
                w.victim_predict(&scaled).class
            );
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            WorldConfig {
                dim: 3,
                classes: 4,
                ..Default::default()
            },
            WorldConfig {
                softmax_temperature: 0.0,
                ..Default::default()
            },
            WorldConfig {
                victim_noise: -1.0,
                ..Default::default()
            },
            WorldConfig {
                vocab_size: 1,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(matches!(
                build_world::<f64>(&cfg),
                Err(Error::InvalidConfig(_))
            ));
        }
    }
}
