//! Does a higher-consistency prompt make a better attacker? For each class
//! pick two prompts from an evolution run, one at the top of the PC
//! distribution and one at the lower quartile, draw a fixed number of images
//! from each, keep only the victim-positive ones and train attackers on
//! equally sized sets.

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::report::Strategy;
use super::run::{execute, train_and_score};
use crate::domain::{BudgetLedger, ClassId, ImageBank};
use crate::embed::HardPrompt;
use crate::error::Result;
use crate::fitness::evaluate_prompt;
use crate::rng::substream;
use crate::surrogate::TrainExample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcStudy {
    pub seed: u64,
    /// PC of the chosen (high, low) prompt per class.
    pub chosen_pc: Vec<(f64, f64)>,
    /// Positives kept per class after size matching.
    pub matched: Vec<usize>,
    pub high_accuracy: f64,
    pub low_accuracy: f64,
}

/// Index into an ascending list of `n` values at quantile `q`, nearest rank.
pub fn percentile_index(n: usize, q: f64) -> usize {
    assert!(n > 0, "percentile of an empty list");
    let q = q.clamp(0.0, 1.0);
    ((q * (n - 1) as f64).round() as usize).min(n - 1)
}

fn positives_of(
    world: &crate::world::World<f64>,
    class: ClassId,
    prompt: &HardPrompt,
    images: usize,
    seed: u64,
    key: &[u64],
) -> Result<Vec<TrainExample<f64>>> {
    let mut bank = ImageBank::with_seed(class, world.seeds[class.0].clone())?;
    let mut ledger = BudgetLedger::new(images);
    let mut rng = substream(seed, "pc-study", key);
    evaluate_prompt(world, prompt, &mut ledger, &mut bank, images, &mut rng)?;
    Ok(bank
        .positives()
        .iter()
        .map(|&id| {
            let s = bank.get(id).expect("bank ids are valid");
            TrainExample {
                feature: s.feature.clone(),
                hard: s.predicted,
                soft: None,
            }
        })
        .collect())
}

/// Runs the attack once, then the two-prompt comparison with `images` draws
/// per prompt.
pub fn pc_percentile_study(cfg: &RunConfig, images: usize, low_quantile: f64) -> Result<PcStudy> {
    let run = execute(cfg, Strategy::Evolution)?;
    let world = &run.world;
    let mut chosen_pc = Vec::new();
    let mut matched = Vec::new();
    let mut high_set = Vec::new();
    let mut low_set = Vec::new();
    for report in &run.report.classes {
        let class = ClassId(report.class);
        let mut evals: Vec<_> = report.evaluations.iter().collect();
        evals.sort_by(|a, b| a.pc.total_cmp(&b.pc));
        let high = evals[evals.len() - 1];
        let low = evals[percentile_index(evals.len(), low_quantile)];
        let c = class.0 as u64;
        let prompt = |tokens: &[usize]| HardPrompt {
            tokens: tokens.to_vec(),
        };
        let mut hi = positives_of(
            world,
            class,
            &prompt(&high.tokens),
            images,
            cfg.seed,
            &[c, 1],
        )?;
        let lo = positives_of(
            world,
            class,
            &prompt(&low.tokens),
            images,
            cfg.seed,
            &[c, 0],
        )?;
        let n = hi.len().min(lo.len());
        hi.truncate(n);
        chosen_pc.push((high.pc, low.pc));
        matched.push(n);
        high_set.extend(hi);
        low_set.extend(lo.into_iter().take(n));
    }
    let (_, high_accuracy) =
        train_and_score(world, &high_set, &cfg.train, cfg.seed, "pc-study/train")?;
    let (_, low_accuracy) =
        train_and_score(world, &low_set, &cfg.train, cfg.seed, "pc-study/train")?;
    Ok(PcStudy {
        seed: cfg.seed,
        chosen_pc,
        matched,
        high_accuracy,
        low_accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_index_endpoints() {
        assert_eq!(percentile_index(1, 0.25), 0);
        assert_eq!(percentile_index(5, 0.0), 0);
        assert_eq!(percentile_index(5, 1.0), 4);
        assert_eq!(percentile_index(5, 0.25), 1);
        assert_eq!(percentile_index(9, 0.25), 2);
    }
}
