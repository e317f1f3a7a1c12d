//! Simulation of genetic prompt evolution for black-box model extraction.
//!
//! A synthetic world supplies a vocabulary of token embeddings, paired text
//! and image encoders, a prompt-conditioned image generator and a
//! hard-label victim classifier. The attacker holds one correctly classified
//! seed image per class and a fixed query budget. It evolves triplets of
//! (seed, positive, negative) images, refines a discrete prompt for each
//! triplet against a contrastive similarity loss, scores prompts by how often
//! the victim agrees with the intended class, and finally trains a surrogate
//! classifier on everything it queried.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! end-to-end [`harness`] runs in `f64`.

pub mod domain;
pub mod embed;
pub mod error;
pub mod evolve;
pub mod fitness;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod refine;
pub mod rng;
pub mod scalar;
pub mod surrogate;
pub mod world;

pub use domain::{
    BudgetLedger, ClassId, FeatureVec, FitnessScores, ImageBank, LabeledSample, Population,
    SampleId, Slot, Triplet,
};
pub use embed::{project_to_vocab, Encoders, HardPrompt, SoftPrompt, Vocabulary};
pub use error::{Error, Result};
pub use evolve::{crossover, mutate, reproduce, select_elite, tournament_select, EvolveConfig};
pub use fitness::{evaluate_prompt, prompt_consistency, EvalOutcome};
pub use harness::{emit_reports, run_ablation_no_reproduction, run_attack, RunConfig, RunReport};
pub use linalg::Matrix;
pub use metrics::{knn_recall, l2_mean_feature_distance, spearman, CorrelationResult};
pub use refine::{refine_prompt, RefineConfig};
pub use scalar::Scalar;
pub use surrogate::{evaluate_accuracy, train_attacker, AttackerModel, LabelMode, TrainConfig};
pub use world::{build_world, World, WorldConfig};

pub type FeatureVec64 = FeatureVec<f64>;
pub type FeatureVec32 = FeatureVec<f32>;
pub type World64 = World<f64>;
pub type World32 = World<f32>;
pub type ImageBank64 = ImageBank<f64>;
pub type ImageBank32 = ImageBank<f32>;
pub type Vocabulary64 = Vocabulary<f64>;
pub type Vocabulary32 = Vocabulary<f32>;
pub type AttackerModel64 = AttackerModel<f64>;
pub type AttackerModel32 = AttackerModel<f32>;
