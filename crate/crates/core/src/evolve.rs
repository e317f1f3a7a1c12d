//! Triplet reproduction: elitism, tournament selection, single-point
//! crossover over cyclically paired parents, and per-slot mutation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{FitnessScores, ImageBank, Population, Slot, Triplet};
use crate::error::{Error, Result};
use crate::linalg::argmax_first;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolveConfig {
    pub population: usize,
    pub parents: usize,
    pub tournament: usize,
    pub mutation_prob: f64,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            population: 10,
            parents: 5,
            tournament: 5,
            mutation_prob: 0.6,
        }
    }
}

impl EvolveConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.population;
        let ok = n >= 2
            && (1..=n).contains(&self.parents)
            && (1..=n).contains(&self.tournament)
            && (0.0..=1.0).contains(&self.mutation_prob);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "evolve: need population >= 2, 1 <= parents, tournament <= population and \
                 mutation_prob in [0, 1]; got {self:?}"
            )))
        }
    }
}

/// Index of the fittest evaluated triplet; ties go to the lowest index.
pub fn elite_index(fit: &FitnessScores) -> Result<usize> {
    argmax_first(&fit.scores).ok_or(Error::Empty("fitness scores"))
}

pub fn select_elite(pop: &Population, fit: &FitnessScores) -> Result<Triplet> {
    Ok(pop.triplets[elite_index(fit)?])
}

/// One tournament: the drawn indices and the index that won.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TournamentDraw {
    pub drawn: Vec<usize>,
    pub winner: usize,
}

/// Runs `cfg.parents` tournaments of size `cfg.tournament` over the evaluated
/// prefix, drawing with replacement.
pub fn tournament_draws<R: Rng + ?Sized>(
    fit: &FitnessScores,
    cfg: &EvolveConfig,
    rng: &mut R,
) -> Result<Vec<TournamentDraw>> {
    let n = fit.len();
    if n == 0 {
        return Err(Error::Empty("fitness scores"));
    }
    let draws = (0..cfg.parents)
        .map(|_| {
            let drawn: Vec<usize> = (0..cfg.tournament)
                .map(|_| rng.random_range(0..n))
                .collect();
            let mut winner = drawn[0];
            for &i in &drawn[1..] {
                let (fi, fw) = (fit.scores[i], fit.scores[winner]);
                if fi > fw || (fi == fw && i < winner) {
                    winner = i;
                }
            }
            TournamentDraw { drawn, winner }
        })
        .collect();
    Ok(draws)
}

pub fn tournament_select<R: Rng + ?Sized>(
    pop: &Population,
    fit: &FitnessScores,
    cfg: &EvolveConfig,
    rng: &mut R,
) -> Result<Vec<Triplet>> {
    Ok(tournament_draws(fit, cfg, rng)?
        .into_iter()
        .map(|d| pop.triplets[d.winner])
        .collect())
}

/// Child takes `a`'s slots before `split` and `b`'s from `split` on.
pub fn crossover_at(a: &Triplet, b: &Triplet, split: usize) -> Triplet {
    debug_assert!((1..=2).contains(&split));
    let mut child = *b;
    child.slots[..split].copy_from_slice(&a.slots[..split]);
    child
}

/// Single-point crossover with the split drawn uniformly from `{1, 2}`.
pub fn crossover<R: Rng + ?Sized>(a: &Triplet, b: &Triplet, rng: &mut R) -> Triplet {
    crossover_at(a, b, rng.random_range(1..=2))
}

/// Each slot is independently resampled with probability `p_m` from the
/// matching bank set; an empty set leaves the slot empty.
pub fn mutate<T: Scalar, R: Rng + ?Sized>(
    t: &Triplet,
    bank: &ImageBank<T>,
    p_m: f64,
    rng: &mut R,
) -> Triplet {
    let mut out = *t;
    for slot in Slot::ALL {
        if rng.random_bool(p_m) {
            let pool = bank.candidates(slot);
            out.slots[slot as usize] = if pool.is_empty() {
                None
            } else {
                Some(pool[rng.random_range(0..pool.len())])
            };
        }
    }
    out
}

/// Next population: the elite at slot 0, then `N − 1` mutated crossover
/// children of parent pairs `(i, i+1 mod N_p)` taken in cyclic order.
pub fn reproduce<T: Scalar, R: Rng + ?Sized>(
    pop: &Population,
    fit: &FitnessScores,
    bank: &ImageBank<T>,
    cfg: &EvolveConfig,
    rng: &mut R,
) -> Result<Population> {
    cfg.validate()?;
    if fit.len() > pop.len() {
        return Err(Error::InvalidConfig(
            "more fitness scores than triplets".into(),
        ));
    }
    let elite = select_elite(pop, fit)?;
    let parents = tournament_select(pop, fit, cfg, rng)?;
    let np = parents.len();
    let mut triplets = Vec::with_capacity(cfg.population);
    triplets.push(elite);
    for i in 0..cfg.population - 1 {
        let a = &parents[i % np];
        let b = &parents[(i + 1) % np];
        let child = crossover(a, b, rng);
        triplets.push(mutate(&child, bank, cfg.mutation_prob, rng));
    }
    Ok(Population {
        triplets,
        generation: pop.generation + 1,
    })
}
