use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::EvolveConfig;
use crate::refine::RefineConfig;
use crate::surrogate::TrainConfig;
use crate::world::WorldConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub world: WorldConfig,
    /// Victim queries per class.
    pub budget: usize,
    /// Samples synthesized per prompt evaluation.
    pub batch: usize,
    pub refine: RefineConfig,
    pub evolve: EvolveConfig,
    pub train: TrainConfig,
    /// Log the distance between each batch mean and the victim class mean.
    pub record_pc_l2: bool,
    pub record_recall: bool,
    pub recall_k: usize,
    /// Also run the refinement-only baseline and report it alongside.
    pub compare_ablation: bool,
    /// Also train an attacker on soft labels for the same harvested data.
    pub soft_labels: bool,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            budget: 200,
            batch: 10,
            refine: RefineConfig::default(),
            evolve: EvolveConfig::default(),
            train: TrainConfig::default(),
            record_pc_l2: true,
            record_recall: true,
            recall_k: 3,
            compare_ablation: false,
            soft_labels: false,
            out_dir: PathBuf::from("runs/latest"),
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Laptop-scale defaults (100 refinement steps, 200 queries per class).
    pub fn desk() -> Self {
        Self::default()
    }

    /// The full-size hyperparameters: 500 refinement steps and 500 queries
    /// per class.
    pub fn full() -> Self {
        Self {
            budget: 500,
            refine: RefineConfig {
                steps: 500,
                ..RefineConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" | "default" => Ok(Self::desk()),
            "full" => Ok(Self::full()),
            other => Err(Error::InvalidConfig(format!(
                "unknown preset {other:?} (expected desk or full)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.refine.validate()?;
        self.evolve.validate()?;
        self.train.validate()?;
        if self.batch == 0 || self.budget < self.batch {
            return Err(Error::InvalidConfig(format!(
                "need budget >= batch >= 1, got budget {} and batch {}",
                self.budget, self.batch
            )));
        }
        if self.refine.prompt_length != self.world.prompt_length {
            return Err(Error::InvalidConfig(format!(
                "refine.prompt_length ({}) differs from world.prompt_length ({})",
                self.refine.prompt_length, self.world.prompt_length
            )));
        }
        if self.recall_k == 0 {
            return Err(Error::InvalidConfig("recall_k must be at least 1".into()));
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}
