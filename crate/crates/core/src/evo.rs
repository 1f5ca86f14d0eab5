//! Steady-state genetic algorithm over binary chromosomes.
//!
//! Each generation picks two parents by negative assortative mating,
//! produces two children by uniform crossover, mutates each child with
//! probability `p_mut` (one random bit flip), evaluates them, and lets the
//! best two of {children, two worst members} occupy the two worst slots.
//! Initial-population evaluations count toward `max_evals`.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Mutex;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::{active_counts, hamming_genes, Chromosome, EncodingKind};
use crate::rng::{derive_seed, derived_rng, stream, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population_size: usize,
    pub max_evals: usize,
    pub nam_candidates: usize,
    pub p_mut: f64,
    pub p_one: f64,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population_size: 30,
            max_evals: 200,
            nam_candidates: 3,
            p_mut: 0.07,
            p_one: 0.5,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 4 {
            return Err(Error::InvalidConfig("population_size must be >= 4".into()));
        }
        if self.nam_candidates == 0 {
            return Err(Error::InvalidConfig("nam_candidates must be >= 1".into()));
        }
        for (name, p) in [("p_mut", self.p_mut), ("p_one", self.p_one)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be in [0, 1], got {p}"
                )));
            }
        }
        if self.max_evals < self.population_size {
            return Err(Error::InvalidConfig(format!(
                "max_evals ({}) must be >= population_size ({})",
                self.max_evals, self.population_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitnessRecord {
    pub chromosome: Chromosome,
    pub fitness: f64,
    pub active: usize,
    pub eval_index: usize,
    pub seed_used: u64,
}

impl FitnessRecord {
    /// `eval_index, fitness, active, total, chromosome`
    pub fn log_line(&self) -> String {
        format!(
            "{}, {}, {}, {}, {}",
            self.eval_index,
            self.fitness,
            self.active,
            self.chromosome.len(),
            self.chromosome
        )
    }

    pub fn active_fraction(&self) -> f64 {
        if self.chromosome.is_empty() {
            0.0
        } else {
            self.active as f64 / self.chromosome.len() as f64
        }
    }
}

/// Orders records so that `Greater` means `a` is the better solution:
/// higher fitness, then fewer active genes, then the earlier evaluation.
pub fn compare(a: &FitnessRecord, b: &FitnessRecord) -> Ordering {
    a.fitness
        .total_cmp(&b.fitness)
        .then_with(|| b.active.cmp(&a.active))
        .then_with(|| b.eval_index.cmp(&a.eval_index))
}

/// A fitness function. The seed is derived per evaluation so stochastic
/// evaluators (training a head) stay reproducible when run in parallel.
pub trait Fitness: Sync {
    fn evaluate(&self, chromosome: &Chromosome, seed: u64) -> Result<f64>;
}

impl<F> Fitness for F
where
    F: Fn(&Chromosome, u64) -> Result<f64> + Sync,
{
    fn evaluate(&self, chromosome: &Chromosome, seed: u64) -> Result<f64> {
        self(chromosome, seed)
    }
}

/// Memoizes a deterministic fitness by gene string. The seed is ignored on
/// cache hits, so this must not wrap a stochastic evaluator.
pub struct CachedFitness<F> {
    inner: F,
    cache: Mutex<HashMap<Vec<bool>, f64>>,
}

impl<F: Fitness> CachedFitness<F> {
    pub fn new(inner: F) -> Self {
        CachedFitness {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn cached_entries(&self) -> usize {
        self.cache.lock().unwrap().len()
    }
}

impl<F: Fitness> Fitness for CachedFitness<F> {
    fn evaluate(&self, chromosome: &Chromosome, seed: u64) -> Result<f64> {
        if let Some(&v) = self.cache.lock().unwrap().get(&chromosome.genes) {
            return Ok(v);
        }
        let v = self.inner.evaluate(chromosome, seed)?;
        self.cache
            .lock()
            .unwrap()
            .insert(chromosome.genes.clone(), v);
        Ok(v)
    }
}

/// Fixed-size population kept sorted worst to best.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    members: Vec<FitnessRecord>,
}

impl Population {
    pub fn new(mut members: Vec<FitnessRecord>) -> Self {
        members.sort_by(compare);
        Population { members }
    }

    pub fn members(&self) -> &[FitnessRecord] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn best(&self) -> &FitnessRecord {
        self.members.last().expect("non-empty population")
    }

    pub fn worst(&self) -> &FitnessRecord {
        &self.members[0]
    }
}

/// Assigns evaluation indices and seeds, runs evaluations, keeps history.
struct Evaluator<'a, F: ?Sized> {
    fitness: &'a F,
    seed: u64,
    history: Vec<FitnessRecord>,
}

impl<'a, F: Fitness + ?Sized> Evaluator<'a, F> {
    fn evaluate(&mut self, chromosomes: Vec<Chromosome>) -> Result<Vec<FitnessRecord>> {
        let base = self.history.len();
        let seed = self.seed;
        let fitness = self.fitness;
        let results: Vec<Result<FitnessRecord>> = chromosomes
            .into_par_iter()
            .enumerate()
            .map(|(offset, chromosome)| {
                let eval_index = base + offset;
                let seed_used = derive_seed(seed, stream::EVAL, eval_index as u64);
                let wrap = |source: Error, chromosome: &Chromosome| Error::Fitness {
                    eval_index,
                    chromosome: chromosome.to_string(),
                    source: Box::new(source),
                };
                let value = fitness
                    .evaluate(&chromosome, seed_used)
                    .map_err(|e| wrap(e, &chromosome))?;
                if value.is_nan() {
                    return Err(wrap(Error::Other("fitness is NaN".into()), &chromosome));
                }
                Ok(FitnessRecord {
                    active: active_counts(&chromosome).0,
                    chromosome,
                    fitness: value,
                    eval_index,
                    seed_used,
                })
            })
            .collect();
        let records = results.into_iter().collect::<Result<Vec<_>>>()?;
        self.history.extend(records.iter().cloned());
        Ok(records)
    }
}

/// Draws each gene independently: 1 when `r <= p_one` for `r` uniform on
/// `[0, 1)`.
pub fn random_chromosome(kind: EncodingKind, len: usize, p_one: f64, rng: &mut Rng) -> Chromosome {
    let genes = (0..len).map(|_| rng.random::<f64>() <= p_one).collect();
    Chromosome::new(kind, genes)
}

fn initialize_with<F: Fitness + ?Sized>(
    cfg: &GaConfig,
    kind: EncodingKind,
    length: usize,
    evaluator: &mut Evaluator<'_, F>,
    rng: &mut Rng,
) -> Result<Population> {
    if length == 0 {
        return Err(Error::InvalidConfig(
            "chromosome length must be >= 1".into(),
        ));
    }
    // p_one = 0 must give all zeros even though r can be exactly 0.
    let chromosomes = (0..cfg.population_size)
        .map(|_| {
            if cfg.p_one == 0.0 {
                Chromosome::zeros(kind, length)
            } else {
                random_chromosome(kind, length, cfg.p_one, rng)
            }
        })
        .collect();
    Ok(Population::new(evaluator.evaluate(chromosomes)?))
}

/// Creates and evaluates the initial population. Returns the population and
/// the evaluation history (one record per member).
pub fn initialize<F: Fitness + ?Sized>(
    cfg: &GaConfig,
    kind: EncodingKind,
    length: usize,
    fitness: &F,
) -> Result<(Population, Vec<FitnessRecord>)> {
    cfg.validate()?;
    let mut rng = derived_rng(cfg.seed, stream::GA, 0);
    let mut evaluator = Evaluator {
        fitness,
        seed: cfg.seed,
        history: Vec::new(),
    };
    let pop = initialize_with(cfg, kind, length, &mut evaluator, &mut rng)?;
    Ok((pop, evaluator.history))
}

/// Negative assortative mating. Returns member indices `(parent1,
/// parent2)`: parent1 is uniform; parent2 is the candidate, out of
/// `candidates` uniform draws with replacement, farthest in Hamming
/// distance from parent1, the first drawn winning ties.
pub fn select_nam(pop: &Population, candidates: usize, rng: &mut Rng) -> (usize, usize) {
    let n = pop.len();
    let first = rng.random_range(0..n);
    let genes = &pop.members[first].chromosome.genes;
    let mut best = rng.random_range(0..n);
    let mut best_distance = hamming_genes(genes, &pop.members[best].chromosome.genes);
    for _ in 1..candidates {
        let c = rng.random_range(0..n);
        let d = hamming_genes(genes, &pop.members[c].chromosome.genes);
        if d > best_distance {
            best = c;
            best_distance = d;
        }
    }
    (first, best)
}

/// Uniform crossover driven by an explicit stream of draws in `[0, 1]`,
/// one per gene: `r <= 0.5` keeps the parents' genes in place, otherwise
/// they swap.
pub fn crossover_with_draws(
    p: &Chromosome,
    q: &Chromosome,
    mut draw: impl FnMut() -> f64,
) -> (Chromosome, Chromosome) {
    debug_assert_eq!(p.len(), q.len());
    let mut a = Vec::with_capacity(p.len());
    let mut b = Vec::with_capacity(q.len());
    for (&pi, &qi) in p.genes.iter().zip(&q.genes) {
        if draw() <= 0.5 {
            a.push(pi);
            b.push(qi);
        } else {
            a.push(qi);
            b.push(pi);
        }
    }
    (Chromosome::new(p.kind, a), Chromosome::new(q.kind, b))
}

pub fn crossover_uniform(
    p: &Chromosome,
    q: &Chromosome,
    rng: &mut Rng,
) -> (Chromosome, Chromosome) {
    crossover_with_draws(p, q, || rng.random::<f64>())
}

/// With probability `p_mut`, flips exactly one uniformly chosen gene.
pub fn mutate(c: &Chromosome, p_mut: f64, rng: &mut Rng) -> Chromosome {
    let mut out = c.clone();
    if !out.is_empty() && rng.random::<f64>() < p_mut {
        let i = rng.random_range(0..out.len());
        out.genes[i] = !out.genes[i];
    }
    out
}

/// Offspring compete with the same number of worst members; the best of
/// that pool take the worst slots.
pub fn replace(pop: &mut Population, offspring: Vec<FitnessRecord>) {
    let k = offspring.len().min(pop.len());
    let mut pool: Vec<FitnessRecord> = pop.members.drain(..k).collect();
    pool.extend(offspring);
    pool.sort_by(compare);
    let survivors = pool.split_off(pool.len() - k);
    pop.members.extend(survivors);
    pop.members.sort_by(compare);
}

#[derive(Debug, Clone)]
pub struct GaOutcome {
    pub best: FitnessRecord,
    pub history: Vec<FitnessRecord>,
    pub population: Population,
}

/// Runs the GA until exactly `max_evals` evaluations have been made.
pub fn run<F: Fitness + ?Sized>(
    cfg: &GaConfig,
    kind: EncodingKind,
    length: usize,
    fitness: &F,
) -> Result<GaOutcome> {
    cfg.validate()?;
    let mut rng = derived_rng(cfg.seed, stream::GA, 0);
    let mut evaluator = Evaluator {
        fitness,
        seed: cfg.seed,
        history: Vec::with_capacity(cfg.max_evals),
    };
    let mut pop = initialize_with(cfg, kind, length, &mut evaluator, &mut rng)?;

    while evaluator.history.len() < cfg.max_evals {
        let (i, j) = select_nam(&pop, cfg.nam_candidates, &mut rng);
        let (a, b) = crossover_uniform(
            &pop.members[i].chromosome,
            &pop.members[j].chromosome,
            &mut rng,
        );
        let a = mutate(&a, cfg.p_mut, &mut rng);
        let b = mutate(&b, cfg.p_mut, &mut rng);
        let mut children = vec![a, b];
        children.truncate(cfg.max_evals - evaluator.history.len());
        let records = evaluator.evaluate(children)?;
        replace(&mut pop, records);
    }

    let best = evaluator
        .history
        .iter()
        .max_by(|a, b| compare(a, b))
        .cloned()
        .expect("at least one evaluation");
    Ok(GaOutcome {
        best,
        history: evaluator.history,
        population: pop,
    })
}

/// Running best under [`compare`], one entry per evaluation.
pub fn running_best(history: &[FitnessRecord]) -> Vec<&FitnessRecord> {
    let mut out: Vec<&FitnessRecord> = Vec::with_capacity(history.len());
    for r in history {
        match out.last() {
            Some(best) if compare(best, r) != Ordering::Less => out.push(best),
            _ => out.push(r),
        }
    }
    out
}
