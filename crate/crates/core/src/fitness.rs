//! Prompt consistency: the fraction of a synthesized batch that the victim
//! assigns to the target class. Every queried sample is banked.

use rand::Rng;

use crate::domain::{BudgetLedger, ImageBank, LabeledSample, SampleId};
use crate::embed::HardPrompt;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::world::World;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome<T> {
    pub pc: f64,
    /// Queried samples in synthesis order; length equals the granted batch.
    pub samples: Vec<LabeledSample<T>>,
    pub ids: Vec<SampleId>,
    pub prompt: HardPrompt,
}

/// Fraction of `samples` predicted as `target`.
pub fn prompt_consistency<T: Scalar>(
    samples: &[LabeledSample<T>],
    target: crate::domain::ClassId,
) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let hits = samples.iter().filter(|s| s.predicted == target).count();
    hits as f64 / samples.len() as f64
}

/// Charges up to `batch` queries, synthesizes that many samples from
/// `prompt`, queries the victim, banks the results and returns the PC.
/// `Ok(None)` means the class budget is exhausted.
pub fn evaluate_prompt<T: Scalar, R: Rng + ?Sized>(
    world: &World<T>,
    prompt: &HardPrompt,
    ledger: &mut BudgetLedger,
    bank: &mut ImageBank<T>,
    batch: usize,
    rng: &mut R,
) -> Result<Option<EvalOutcome<T>>> {
    if batch == 0 {
        return Err(Error::InvalidConfig("batch size must be at least 1".into()));
    }
    if let Some(&t) = prompt.tokens.iter().find(|&&t| t >= world.vocab.len()) {
        return Err(Error::InvalidConfig(format!(
            "token {t} outside vocabulary"
        )));
    }
    let granted = ledger.charge(batch);
    if granted == 0 {
        return Ok(None);
    }
    let mut samples = Vec::with_capacity(granted);
    let mut ids = Vec::with_capacity(granted);
    for _ in 0..granted {
        let x = world.generate(prompt, rng);
        let predicted = world.victim_predict(&x).class;
        let sample = LabeledSample {
            feature: x,
            predicted,
        };
        ids.push(bank.insert(sample.clone())?);
        samples.push(sample);
    }
    Ok(Some(EvalOutcome {
        pc: prompt_consistency(&samples, bank.target()),
        samples,
        ids,
        prompt: prompt.clone(),
    }))
}
