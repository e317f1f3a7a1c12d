//! The per-class attack loop, attacker training and run assembly.

use std::time::Instant;

use rayon::prelude::*;

use super::config::RunConfig;
use super::report::{
    BaselineSummary, ClassReport, EvalRecord, GenerationTrace, RecallReport, RunReport, Strategy,
};
use crate::domain::{
    BudgetLedger, ClassId, FeatureVec, FitnessScores, ImageBank, Population, Triplet,
};
use crate::error::{Error, Result};
use crate::evolve::{elite_index, reproduce};
use crate::fitness::evaluate_prompt;
use crate::metrics::{knn_recall, l2_mean_feature_distance};
use crate::refine::refine_prompt;
use crate::rng::substream;
use crate::surrogate::{
    evaluate_accuracy, train_attacker, AttackerModel, LabelMode, TrainConfig, TrainExample,
};
use crate::world::{build_world, Split, World};

/// Everything a finished run produced, for callers that need more than the
/// report (banks for recall comparisons, the trained attacker).
#[derive(Debug, Clone)]
pub struct Run {
    pub world: World<f64>,
    pub banks: Vec<ImageBank<f64>>,
    pub model: AttackerModel<f64>,
    pub report: RunReport,
}

/// Attack loop for one class. Uses only substreams keyed by this class, so
/// classes are independent of processing order.
pub fn attack_class(
    world: &World<f64>,
    cfg: &RunConfig,
    class: ClassId,
    strategy: Strategy,
) -> Result<(ImageBank<f64>, ClassReport)> {
    let c = class.0 as u64;
    let mut bank = ImageBank::with_seed(class, world.seeds[class.0].clone())?;
    let seed_id = bank.seeds()[0];
    let mut ledger = BudgetLedger::new(cfg.budget);
    let mut pop = Population::initial(seed_id, cfg.evolve.population);
    let class_mean_ref = world.class_features(Split::Train, class);

    let mut generations = Vec::new();
    let mut evaluations = Vec::new();
    let mut best_so_far = 0.0f64;

    while !ledger.is_exhausted() {
        let generation = pop.generation;
        let wrap = |triplet: usize| {
            move |e: Error| Error::Attack {
                class: class.0,
                generation,
                triplet,
                source: Box::new(e),
            }
        };
        let mut fitness = FitnessScores::default();
        for (i, triplet) in pop.triplets.iter().enumerate() {
            if ledger.is_exhausted() {
                break;
            }
            let key = [c, generation as u64, i as u64];
            let effective = match strategy {
                Strategy::Evolution => *triplet,
                Strategy::SeedOnly => Triplet::seed_only(seed_id),
            };
            let refined = refine_prompt(
                world,
                &bank,
                &effective,
                &cfg.refine,
                &mut substream(cfg.seed, "refine", &key),
            )
            .map_err(wrap(i))?;
            let outcome = evaluate_prompt(
                world,
                &refined.prompt,
                &mut ledger,
                &mut bank,
                cfg.batch,
                &mut substream(cfg.seed, "generate", &key),
            )
            .map_err(wrap(i))?;
            let Some(outcome) = outcome else { break };
            let l2_distance = if cfg.record_pc_l2 {
                let feats: Vec<FeatureVec<f64>> =
                    outcome.samples.iter().map(|s| s.feature.clone()).collect();
                Some(l2_mean_feature_distance(&feats, &class_mean_ref).map_err(wrap(i))?)
            } else {
                None
            };
            fitness.push(outcome.pc);
            evaluations.push(EvalRecord {
                generation,
                triplet: i,
                pc: outcome.pc,
                batch: outcome.samples.len(),
                l2_distance,
                tokens: outcome.prompt.tokens,
                initial_loss: refined.initial_loss,
                final_loss: refined.final_loss,
            });
        }
        if fitness.is_empty() {
            break;
        }
        let elite = elite_index(&fitness)?;
        best_so_far = best_so_far.max(fitness.scores[elite]);
        generations.push(GenerationTrace {
            generation,
            triplets: pop.triplets.clone(),
            fitness: fitness.scores.clone(),
            elite,
            best_so_far,
        });
        if ledger.is_exhausted() {
            break;
        }
        pop = match strategy {
            Strategy::Evolution => reproduce(
                &pop,
                &fitness,
                &bank,
                &cfg.evolve,
                &mut substream(cfg.seed, "evolve", &[c, generation as u64]),
            )
            .map_err(|e| Error::Attack {
                class: class.0,
                generation,
                triplet: elite,
                source: Box::new(e),
            })?,
            Strategy::SeedOnly => Population {
                generation: generation + 1,
                ..Population::initial(seed_id, cfg.evolve.population)
            },
        };
    }

    let report = ClassReport {
        class: class.0,
        queries: ledger.consumed(),
        seeds: bank.seeds().len(),
        positives: bank.positives().len(),
        negatives: bank.negatives().len(),
        generations,
        evaluations,
    };
    Ok((bank, report))
}

/// Seeds, positives and negatives of every class, labeled by the victim.
pub fn harvested_examples(
    world: &World<f64>,
    banks: &[ImageBank<f64>],
    with_soft: bool,
) -> Vec<TrainExample<f64>> {
    banks
        .iter()
        .flat_map(|b| b.samples())
        .map(|s| TrainExample {
            feature: s.feature.clone(),
            hard: s.predicted,
            soft: with_soft.then(|| world.victim_predict(&s.feature).probs),
        })
        .collect()
}

pub fn train_and_score(
    world: &World<f64>,
    data: &[TrainExample<f64>],
    train: &TrainConfig,
    seed: u64,
    stream: &str,
) -> Result<(AttackerModel<f64>, f64)> {
    let mode = match train.label_mode {
        LabelMode::Hard => 0,
        LabelMode::Soft => 1,
    };
    let trained = train_attacker(
        data,
        world.classes(),
        train,
        &mut substream(seed, stream, &[mode]),
    )?;
    let acc = evaluate_accuracy(&trained.model, &world.victim_test)?;
    Ok((trained.model, acc))
}

/// Per-class recall of the victim test data against harvested positives.
pub fn positive_recall(
    world: &World<f64>,
    banks: &[ImageBank<f64>],
    k: usize,
) -> Result<RecallReport> {
    let per_class = banks
        .iter()
        .map(|b| {
            let positives = b.features(b.positives());
            if positives.len() <= k {
                return Ok(None);
            }
            let real = world.class_features(Split::Test, b.target());
            knn_recall(&real, &positives, k).map(Some)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean =
        per_class.iter().map(|r| r.unwrap_or(0.0)).sum::<f64>() / per_class.len().max(1) as f64;
    Ok(RecallReport { k, per_class, mean })
}

/// Runs the full pipeline with the given strategy on a freshly built world.
pub fn execute(cfg: &RunConfig, strategy: Strategy) -> Result<Run> {
    cfg.validate()?;
    let world: World<f64> = build_world(&cfg.world)?;
    execute_in(world, cfg, strategy)
}

/// Runs the pipeline in an existing world.
pub fn execute_in(world: World<f64>, cfg: &RunConfig, strategy: Strategy) -> Result<Run> {
    cfg.validate()?;
    let started = Instant::now();
    let per_class = (0..world.classes())
        .into_par_iter()
        .map(|c| attack_class(&world, cfg, ClassId(c), strategy))
        .collect::<Result<Vec<_>>>()?;
    let (banks, classes): (Vec<_>, Vec<_>) = per_class.into_iter().unzip();

    let hard_cfg = TrainConfig {
        label_mode: LabelMode::Hard,
        ..cfg.train
    };
    let data = harvested_examples(&world, &banks, cfg.soft_labels);
    let (model, attacker_accuracy) = train_and_score(&world, &data, &hard_cfg, cfg.seed, "train")?;
    let attacker_accuracy_soft = if cfg.soft_labels {
        let soft_cfg = TrainConfig {
            label_mode: LabelMode::Soft,
            ..cfg.train
        };
        Some(train_and_score(&world, &data, &soft_cfg, cfg.seed, "train")?.1)
    } else {
        None
    };
    let recall = if cfg.record_recall {
        Some(positive_recall(&world, &banks, cfg.recall_k)?)
    } else {
        None
    };

    let report = RunReport {
        seed: cfg.seed,
        strategy,
        config: cfg.clone(),
        victim_accuracy: world.victim_accuracy(&world.victim_test),
        total_queries: classes.iter().map(|c| c.queries).sum(),
        classes,
        attacker_accuracy,
        attacker_accuracy_soft,
        recall,
        ablation: None,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok(Run {
        world,
        banks,
        model,
        report,
    })
}

fn with_optional_ablation(cfg: &RunConfig, strategy: Strategy) -> Result<RunReport> {
    let main = execute(cfg, strategy)?;
    let mut report = main.report;
    if cfg.compare_ablation && strategy == Strategy::Evolution {
        let base = execute_in(main.world, cfg, Strategy::SeedOnly)?;
        report.ablation = Some(BaselineSummary {
            strategy: Strategy::SeedOnly,
            attacker_accuracy: base.report.attacker_accuracy,
            recall: base.report.recall,
        });
        report.wall_clock_secs += base.report.wall_clock_secs;
    }
    Ok(report)
}

/// Triplet evolution with contrastive refinement, then attacker training.
pub fn run_attack(cfg: &RunConfig) -> Result<RunReport> {
    with_optional_ablation(cfg, Strategy::Evolution)
}

/// Same budget and batch structure, but every prompt is refined from the
/// seed alone and the population never evolves.
pub fn run_ablation_no_reproduction(cfg: &RunConfig) -> Result<RunReport> {
    with_optional_ablation(cfg, Strategy::SeedOnly)
}
