//! Domain types shared across the attack pipeline: feature vectors, labeled
//! samples, triplet genomes, the per-class image bank and the query ledger.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A point in the shared embedding space. Synthetic "images" and encoded
/// prompts both live here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent, bound = "T: Scalar")]
pub struct FeatureVec<T>(pub Vec<T>);

impl<T: Scalar> FeatureVec<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![T::zero(); dim])
    }

    /// Standard basis vector `e_i`.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = vec![T::zero(); dim];
        v[i] = T::one();
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: self.dim(),
            });
        }
        Ok(())
    }
}

impl<T> std::ops::Deref for FeatureVec<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub usize);

impl ClassId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl std::fmt::Display for ClassId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Stable handle of a sample stored in an [`ImageBank`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SampleId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LabeledSample<T> {
    pub feature: FeatureVec<T>,
    /// The victim's top-1 answer for `feature`.
    pub predicted: ClassId,
}

/// Slot order of a triplet genome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Seed = 0,
    Positive = 1,
    Negative = 2,
}

impl Slot {
    pub const ALL: [Slot; 3] = [Slot::Seed, Slot::Positive, Slot::Negative];
}

/// `(seed, positive, negative)` genome; any slot may be empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Triplet {
    pub slots: [Option<SampleId>; 3],
}

impl Triplet {
    pub fn new(
        seed: Option<SampleId>,
        positive: Option<SampleId>,
        negative: Option<SampleId>,
    ) -> Self {
        Self {
            slots: [seed, positive, negative],
        }
    }

    pub fn seed_only(seed: SampleId) -> Self {
        Self::new(Some(seed), None, None)
    }

    pub fn get(&self, slot: Slot) -> Option<SampleId> {
        self.slots[slot as usize]
    }

    pub fn seed(&self) -> Option<SampleId> {
        self.get(Slot::Seed)
    }

    pub fn positive(&self) -> Option<SampleId> {
        self.get(Slot::Positive)
    }

    pub fn negative(&self) -> Option<SampleId> {
        self.get(Slot::Negative)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Population {
    pub triplets: Vec<Triplet>,
    pub generation: usize,
}

impl Population {
    /// Generation zero: `size` copies of the seed-only triplet.
    pub fn initial(seed: SampleId, size: usize) -> Self {
        Self {
            triplets: vec![Triplet::seed_only(seed); size],
            generation: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }
}

/// Prompt-consistency scores of the evaluated prefix of a population.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitnessScores {
    pub scores: Vec<f64>,
}

impl FitnessScores {
    pub fn new(scores: Vec<f64>) -> Self {
        debug_assert!(scores.iter().all(|s| (0.0..=1.0).contains(s)));
        Self { scores }
    }

    pub fn push(&mut self, pc: f64) {
        debug_assert!((0.0..=1.0).contains(&pc));
        self.scores.push(pc);
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Per-class query budget: `consumed` never exceeds `cap`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetLedger {
    cap: usize,
    consumed: usize,
}

impl BudgetLedger {
    pub fn new(cap: usize) -> Self {
        Self { cap, consumed: 0 }
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn consumed(&self) -> usize {
        self.consumed
    }

    pub fn remaining(&self) -> usize {
        self.cap - self.consumed
    }

    pub fn is_exhausted(&self) -> bool {
        self.consumed >= self.cap
    }

    /// Grants `min(requested, remaining)` queries. A zero grant means the
    /// budget is spent; the final batch of a run is clamped so that
    /// `consumed` lands exactly on `cap`.
    pub fn charge(&mut self, requested: usize) -> usize {
        let granted = requested.min(self.remaining());
        self.consumed += granted;
        granted
    }
}

/// Seed, positive and negative sample sets for one target class.
///
/// Samples are stored once by value; sets and triplets hold [`SampleId`]s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ImageBank<T> {
    target: ClassId,
    dim: usize,
    samples: Vec<LabeledSample<T>>,
    seeds: Vec<SampleId>,
    positives: Vec<SampleId>,
    negatives: Vec<SampleId>,
}

impl<T: Scalar> ImageBank<T> {
    /// Creates a bank holding the single seed sample of `target`.
    pub fn with_seed(target: ClassId, seed: LabeledSample<T>) -> Result<Self> {
        if seed.predicted != target {
            return Err(Error::InvalidConfig(format!(
                "seed for class {target} is classified as {}",
                seed.predicted
            )));
        }
        let mut bank = Self {
            target,
            dim: seed.feature.dim(),
            samples: Vec::new(),
            seeds: Vec::new(),
            positives: Vec::new(),
            negatives: Vec::new(),
        };
        bank.samples.push(seed);
        bank.seeds.push(SampleId(0));
        Ok(bank)
    }

    pub fn target(&self) -> ClassId {
        self.target
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Routes a queried sample into the positive or negative set.
    pub fn insert(&mut self, sample: LabeledSample<T>) -> Result<SampleId> {
        sample.feature.check_dim(self.dim)?;
        let id = SampleId(self.samples.len());
        if sample.predicted == self.target {
            self.positives.push(id);
        } else {
            self.negatives.push(id);
        }
        self.samples.push(sample);
        Ok(id)
    }

    pub fn get(&self, id: SampleId) -> Result<&LabeledSample<T>> {
        self.samples.get(id.0).ok_or(Error::UnknownSample(id.0))
    }

    pub fn seeds(&self) -> &[SampleId] {
        &self.seeds
    }

    pub fn positives(&self) -> &[SampleId] {
        &self.positives
    }

    pub fn negatives(&self) -> &[SampleId] {
        &self.negatives
    }

    /// Candidate set feeding a triplet slot during mutation.
    pub fn candidates(&self, slot: Slot) -> &[SampleId] {
        match slot {
            Slot::Seed => &self.seeds,
            Slot::Positive => &self.positives,
            Slot::Negative => &self.negatives,
        }
    }

    /// Number of synthetic samples, i.e. queries spent for this class.
    pub fn synthetic_len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    /// All stored samples: the seed first, then synthetic ones in query order.
    pub fn samples(&self) -> &[LabeledSample<T>] {
        &self.samples
    }

    pub fn features(&self, ids: &[SampleId]) -> Vec<FeatureVec<T>> {
        ids.iter()
            .map(|id| self.samples[id.0].feature.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(predicted: usize) -> LabeledSample<f64> {
        LabeledSample {
            feature: FeatureVec::zeros(3),
            predicted: ClassId(predicted),
        }
    }

    fn bank() -> ImageBank<f64> {
        ImageBank::with_seed(ClassId(2), sample(2)).unwrap()
    }

    #[test]
    fn routes_by_prediction() {
        let mut b = bank();
        b.insert(sample(2)).unwrap();
        assert_eq!((b.positives().len(), b.negatives().len()), (1, 0));
        b.insert(sample(0)).unwrap();
        assert_eq!((b.positives().len(), b.negatives().len()), (1, 1));
        assert_eq!(b.seeds().len(), 1);
    }

    #[test]
    fn counts_add_up() {
        let mut b = bank();
        for _ in 0..7 {
            b.insert(sample(2)).unwrap();
        }
        for _ in 0..3 {
            b.insert(sample(1)).unwrap();
        }
        assert_eq!(b.synthetic_len(), 10);
    }

    #[test]
    fn rejects_wrong_dimension() {
        let mut b = bank();
        let bad = LabeledSample {
            feature: FeatureVec::zeros(4),
            predicted: ClassId(2),
        };
        assert!(matches!(
            b.insert(bad),
            Err(Error::DimensionMismatch {
                expected: 3,
                found: 4
            })
        ));
        assert_eq!(b.synthetic_len(), 0);
    }

    #[test]
    fn seed_must_match_target() {
        assert!(ImageBank::with_seed(ClassId(1), sample(0)).is_err());
    }

    #[test]
    fn ledger_clamps() {
        let mut l = BudgetLedger::new(500);
        assert_eq!(l.charge(10), 10);
        assert_eq!(l.consumed(), 10);

        let mut l = BudgetLedger {
            cap: 500,
            consumed: 495,
        };
        assert_eq!(l.charge(10), 5);
        assert_eq!(l.consumed(), 500);
        assert_eq!(l.charge(10), 0);
        assert!(l.is_exhausted());
    }

    proptest! {
        #[test]
        fn grants_sum_to_cap(cap in 1usize..2000, batch in 1usize..64) {
            let mut l = BudgetLedger::new(cap);
            let mut total = 0;
            loop {
                let g = l.charge(batch);
                prop_assert!(l.consumed() <= l.cap());
                if g == 0 { break; }
                total += g;
            }
            prop_assert_eq!(total, cap);
        }

        #[test]
        fn bank_size_tracks_grants(labels in proptest::collection::vec(0usize..4, 0..60)) {
            let mut b = bank();
            let mut l = BudgetLedger::new(40);
            for &p in &labels {
                if l.charge(1) == 0 { break; }
                b.insert(sample(p)).unwrap();
            }
            prop_assert_eq!(b.synthetic_len(), l.consumed());
            for id in b.positives() { prop_assert_eq!(b.get(*id).unwrap().predicted, ClassId(2)); }
            for id in b.negatives() { prop_assert_ne!(b.get(*id).unwrap().predicted, ClassId(2)); }
        }
    }
}
