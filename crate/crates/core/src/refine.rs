//! Prompt refinement: optimize a soft prompt against a triplet with the
//! straight-through projected-gradient scheme and return the hard prompt.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{FeatureVec, ImageBank, Triplet};
use crate::embed::{
    encode_terms, loss_and_grad_encoded, project_to_vocab, Adam, AdamConfig, HardPrompt, ImageTerm,
    LossGrad, SoftPrompt,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::world::World;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub prompt_length: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            learning_rate: 0.1,
            prompt_length: 16,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig(
                "refine.learning_rate must be positive".into(),
            ));
        }
        if self.prompt_length == 0 {
            return Err(Error::InvalidConfig(
                "refine.prompt_length must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Hook invoked once per optimization step, before the update is applied.
pub trait RefineObserver<T> {
    fn on_step(
        &mut self,
        _step: usize,
        _soft: &SoftPrompt<T>,
        _projected: &SoftPrompt<T>,
        _eval: &LossGrad<T>,
    ) {
    }
}

impl<T> RefineObserver<T> for () {}

#[derive(Debug, Clone, PartialEq)]
pub struct Refined<T> {
    pub prompt: HardPrompt,
    /// Loss at the projection of the random initialization.
    pub initial_loss: T,
    /// Loss at the returned hard prompt.
    pub final_loss: T,
    pub degenerate_steps: usize,
    pub skipped_steps: usize,
}

/// Looks up the present slots of `triplet`. Seed and positive samples count
/// as target-class images; the negative does not.
pub fn triplet_samples<'a, T: Scalar>(
    bank: &'a ImageBank<T>,
    triplet: &Triplet,
) -> Result<Vec<(&'a FeatureVec<T>, bool)>> {
    if triplet.seed().is_none() {
        return Err(Error::EmptyTriplet);
    }
    let mut out = Vec::with_capacity(3);
    for id in triplet.slots.iter().flatten() {
        let s = bank.get(*id)?;
        out.push((&s.feature, s.predicted == bank.target()));
    }
    Ok(out)
}

/// Refines a prompt for the samples referenced by `triplet`.
pub fn refine_prompt<T: Scalar, R: Rng + ?Sized>(
    world: &World<T>,
    bank: &ImageBank<T>,
    triplet: &Triplet,
    cfg: &RefineConfig,
    rng: &mut R,
) -> Result<Refined<T>> {
    let samples = triplet_samples(bank, triplet)?;
    refine_samples(world, &samples, cfg, rng, &mut ())
}

/// Single-image refinement from the seed alone (the contrastive objective
/// with empty positive and negative slots).
pub fn refine_from_image<T: Scalar, R: Rng + ?Sized>(
    world: &World<T>,
    image: &FeatureVec<T>,
    cfg: &RefineConfig,
    rng: &mut R,
) -> Result<Refined<T>> {
    refine_samples(world, &[(image, true)], cfg, rng, &mut ())
}

/// Core loop: project, evaluate loss and gradient at the projected prompt,
/// update the continuous prompt; finally project once more.
pub fn refine_samples<T: Scalar, R: Rng + ?Sized, O: RefineObserver<T>>(
    world: &World<T>,
    samples: &[(&FeatureVec<T>, bool)],
    cfg: &RefineConfig,
    rng: &mut R,
    observer: &mut O,
) -> Result<Refined<T>> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyTriplet);
    }
    let terms: Vec<ImageTerm<T>> = encode_terms(&world.encoders, samples)?;
    let mut soft = world.vocab.random_prompt(cfg.prompt_length, rng);
    let mut opt = Adam::new(
        cfg.prompt_length,
        world.dim(),
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
    );

    let mut initial_loss = None;
    let mut degenerate_steps = 0;
    let mut skipped_steps = 0;
    for step in 0..cfg.steps {
        let (projected, _) = project_to_vocab(&soft, &world.vocab);
        let eval = loss_and_grad_encoded(&world.encoders, projected.rows(), &terms)?;
        initial_loss.get_or_insert(eval.loss);
        degenerate_steps += usize::from(eval.degenerate);
        observer.on_step(step, &soft, &projected, &eval);
        if !opt.step(&mut soft.0, &eval.grad) {
            skipped_steps += 1;
        }
    }

    let (projected, prompt) = project_to_vocab(&soft, &world.vocab);
    let final_loss = loss_and_grad_encoded(&world.encoders, projected.rows(), &terms)?.loss;
    Ok(Refined {
        prompt,
        initial_loss: initial_loss.unwrap_or(final_loss),
        final_loss,
        degenerate_steps,
        skipped_steps,
    })
}
