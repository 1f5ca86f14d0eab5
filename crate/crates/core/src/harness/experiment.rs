use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{Mode, RunConfig};
use super::report::{report_table, RunReport, RunRow};
use crate::baselines::{
    best_fixed, reference_grid, run_neuron_pruning, run_polynomial_decay, run_reference,
    run_weight_pruning, DecaySchedule,
};
use crate::dataset::{load_dataset, make_folds, FeatureDataset, FoldPair};
use crate::encoding::{decode, Chromosome, EncodingKind};
use crate::evo::{self, GaConfig};
use crate::net::{
    active_fraction, evaluate, save_weights, train, HeadArchitecture, SparseMask, TrainConfig,
    TrainedHead,
};
use crate::{Error, Result};

/// Environment variable capping parallel evaluations.
pub const THREADS_ENV: &str = "EVOPRUNE_THREADS";

/// Result of one mode on one train/test pair.
#[derive(Debug, Clone)]
pub struct FoldResult {
    pub accuracy: f64,
    pub active_fraction: f64,
    pub evaluations: usize,
    pub log: Vec<String>,
    pub head: Option<TrainedHead>,
}

/// Loads the configured data and returns the train/test pairs.
pub fn load_pairs(cfg: &RunConfig) -> Result<(String, Vec<FoldPair>)> {
    let data = load_dataset(&cfg.dataset.path, cfg.dataset.format())?;
    let name = cfg
        .dataset
        .name
        .clone()
        .unwrap_or_else(|| data.name().to_string());
    if let Some(test_path) = &cfg.dataset.test_path {
        let test = load_dataset(test_path, cfg.dataset.format())?;
        if test.feature_dim() != data.feature_dim() || test.n_classes() != data.n_classes() {
            return Err(Error::DimensionMismatch {
                location: test_path.display().to_string(),
                reason: format!(
                    "test set is d={}, C={}; train set is d={}, C={}",
                    test.feature_dim(),
                    test.n_classes(),
                    data.feature_dim(),
                    data.n_classes()
                ),
            });
        }
        return Ok((name, vec![(data, test)]));
    }
    let split = cfg.split.as_ref().expect("validated");
    Ok((name, make_folds(&data, split)?))
}

/// Fitness of a chromosome: test accuracy of a head trained under its mask.
pub fn accuracy_fitness<'a>(
    arch: &'a HeadArchitecture,
    train_set: &'a FeatureDataset,
    test_set: &'a FeatureDataset,
    train_cfg: &'a TrainConfig,
) -> impl Fn(&Chromosome, u64) -> Result<f64> + Sync + 'a {
    move |chrom, seed| {
        let mask = decode(chrom, arch)?;
        let head = train(arch, &mask, train_set, &train_cfg.with_seed(seed))?;
        evaluate(&head, test_set)
    }
}

fn mask_chromosomes(mask: &SparseMask, layers: &[usize]) -> String {
    layers
        .iter()
        .map(|&l| {
            let genes = mask.layer(l - 1).iter().map(|&v| v != 0.0).collect();
            Chromosome::new(EncodingKind::Connections { layer: l }, genes).to_string()
        })
        .collect::<Vec<_>>()
        .join(";")
}

fn weight_active_fraction(mask: &SparseMask, layers: &[usize]) -> (usize, usize) {
    layers.iter().fold((0, 0), |(a, t), &l| {
        (a + mask.active_weights(l - 1), t + mask.layer(l - 1).len())
    })
}

/// Runs `cfg.mode` once on a train/test pair.
pub fn run_fold(
    cfg: &RunConfig,
    arch: &HeadArchitecture,
    pair: &FoldPair,
    seed: u64,
    sparsity: Option<f64>,
) -> Result<FoldResult> {
    let (train_set, test_set) = pair;
    let train_cfg = cfg.train.with_seed(seed);
    let sparsity = || sparsity.ok_or_else(|| Error::MissingReport("sparsity unresolved".into()));
    let baseline = &cfg.baseline;

    match cfg.mode {
        Mode::EvolveNeuronsL1
        | Mode::EvolveNeuronsL2
        | Mode::EvolveBoth
        | Mode::EvolveConnections
        | Mode::EvolveFs => {
            let kind = cfg
                .mode
                .encoding(cfg.connection_layer)
                .expect("evolve mode");
            let length = kind.chromosome_len(arch)?;
            let ga = GaConfig {
                seed,
                ..cfg.ga.clone()
            };
            let fitness = accuracy_fitness(arch, train_set, test_set, &cfg.train);
            let outcome = evo::run(&ga, kind, length, &fitness)?;
            let head = if cfg.save_weights {
                let mask = decode(&outcome.best.chromosome, arch)?;
                Some(train(
                    arch,
                    &mask,
                    train_set,
                    &cfg.train.with_seed(outcome.best.seed_used),
                )?)
            } else {
                None
            };
            Ok(FoldResult {
                accuracy: outcome.best.fitness,
                active_fraction: outcome.best.active_fraction(),
                evaluations: outcome.history.len(),
                log: outcome.history.iter().map(|r| r.log_line()).collect(),
                head,
            })
        }
        Mode::BaselineWeight | Mode::BaselinePolydecay => {
            let s = sparsity()?;
            let layers = &baseline.target_layers;
            let head = if cfg.mode == Mode::BaselineWeight {
                run_weight_pruning(
                    arch,
                    train_set,
                    &train_cfg,
                    layers,
                    s,
                    baseline.finetune_epochs,
                )?
            } else {
                let nb = train_cfg.batches_per_epoch(train_set.n_samples()) as u64;
                let d = &cfg.decay;
                let sched = DecaySchedule {
                    initial_sparsity: d.initial_sparsity.min(s),
                    final_sparsity: s,
                    start_step: d.start_epoch * nb,
                    end_step: d.end_epochs * nb,
                    frequency: d.frequency_epochs * nb,
                    exponent: d.exponent,
                    batches_per_epoch: nb,
                };
                run_polynomial_decay(arch, train_set, &sched, &train_cfg, layers, d.cumulative)?
                    .head
            };
            let accuracy = evaluate(&head, test_set)?;
            let (active, total) = weight_active_fraction(&head.mask, layers);
            Ok(FoldResult {
                accuracy,
                active_fraction: active as f64 / total as f64,
                evaluations: 1,
                log: vec![format!(
                    "0, {accuracy}, {active}, {total}, {}",
                    mask_chromosomes(&head.mask, layers)
                )],
                head: Some(head),
            })
        }
        Mode::BaselineNeuron => {
            let s = sparsity()?;
            let layer = baseline.target_layers[0];
            let head = run_neuron_pruning(
                arch,
                train_set,
                &train_cfg,
                layer,
                s,
                baseline.finetune_epochs,
            )?;
            let accuracy = evaluate(&head, test_set)?;
            let kind = EncodingKind::Neurons { layer };
            let live = head.mask.live_units(layer - 1);
            let chrom = Chromosome::new(kind, live.clone());
            let active = live.iter().filter(|&&u| u).count();
            Ok(FoldResult {
                accuracy,
                active_fraction: active_fraction(&head.mask, kind),
                evaluations: 1,
                log: vec![format!("0, {accuracy}, {active}, {}, {chrom}", live.len())],
                head: Some(head),
            })
        }
        Mode::ReferenceDense => {
            let head = run_reference(arch, train_set, &train_cfg, 1.0)?;
            let accuracy = evaluate(&head, test_set)?;
            let units: usize = arch.hidden_sizes.iter().sum();
            Ok(FoldResult {
                accuracy,
                active_fraction: 1.0,
                evaluations: 1,
                log: vec![format!("0, {accuracy}, {units}, {units}, -")],
                head: Some(head),
            })
        }
        Mode::ReferenceGrid => {
            let grid = reference_grid(arch, train_set, test_set, &train_cfg)?;
            let best = best_fixed(&grid).expect("non-empty grid");
            let total: usize = arch.hidden_sizes.iter().sum();
            let log = grid
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    let units: usize = e.head.arch.hidden_sizes.iter().sum();
                    format!("{i}, {}, {units}, {total}, -", e.test_accuracy)
                })
                .collect();
            let entry = &grid[best];
            let units: usize = entry.head.arch.hidden_sizes.iter().sum();
            Ok(FoldResult {
                accuracy: entry.test_accuracy,
                active_fraction: units as f64 / total as f64,
                evaluations: grid.len(),
                log,
                head: Some(entry.head.clone()),
            })
        }
    }
}

fn resolve_sparsity(cfg: &RunConfig) -> Result<Option<f64>> {
    if !cfg.mode.is_baseline() {
        return Ok(None);
    }
    if let Some(s) = cfg.baseline.sparsity {
        return Ok(Some(s));
    }
    let path = cfg
        .baseline
        .reference_report
        .as_ref()
        .ok_or_else(|| Error::MissingReport("no sparsity and no reference report".into()))?;
    let reference = RunReport::load(path)?;
    if !reference.mode.is_evolve() {
        return Err(Error::InvalidConfig(format!(
            "reference report {} is a {} run, not a GA run",
            path.display(),
            reference.mode
        )));
    }
    let s = (1.0 - reference.mean_active_fraction()).clamp(0.0, 1.0);
    if s >= 1.0 {
        return Err(Error::InvalidConfig(
            "reference GA run has no active units; nothing to match".into(),
        ));
    }
    Ok(Some(s))
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("{THREADS_ENV}={v:?} is not a count")))?;
        builder = builder.num_threads(n.max(1));
    }
    builder
        .build()
        .map_err(|e| Error::Other(format!("thread pool: {e}")))
}

type RunOutput = (RunRow, Vec<String>, Option<TrainedHead>);

/// Runs every configured repetition in memory. Run `i` uses seed
/// `cfg.seed + i`; with k-fold splits each run covers every fold and
/// reports the fold mean.
pub fn execute(cfg: &RunConfig) -> Result<(RunReport, Vec<Option<TrainedHead>>)> {
    cfg.validate()?;
    let sparsity = resolve_sparsity(cfg)?;
    let (name, pairs) = load_pairs(cfg)?;
    let arch = HeadArchitecture::for_dataset(&pairs[0].0, cfg.hidden_sizes.clone())?;
    let k_fold = pairs.len() > 1;

    let pool = thread_pool()?;
    let results: Vec<Result<RunOutput>> = pool.install(|| {
        (0..cfg.n_runs)
            .into_par_iter()
            .map(|run| {
                let seed = cfg.seed + run as u64;
                let start = Instant::now();
                let mut log = Vec::new();
                let (mut acc, mut active, mut evals) = (0.0, 0.0, 0);
                let mut first_head = None;
                for (fold, pair) in pairs.iter().enumerate() {
                    let r = run_fold(cfg, &arch, pair, seed, sparsity)?;
                    if k_fold {
                        log.push(format!("# fold {fold}"));
                    }
                    log.extend(r.log);
                    acc += r.accuracy;
                    active += r.active_fraction;
                    evals += r.evaluations;
                    if fold == 0 {
                        first_head = r.head;
                    }
                }
                let folds = pairs.len() as f64;
                Ok((
                    RunRow {
                        run,
                        seed,
                        accuracy: acc / folds,
                        active_fraction: active / folds,
                        evaluations: evals,
                        wall_time_s: start.elapsed().as_secs_f64(),
                    },
                    log,
                    first_head,
                ))
            })
            .collect()
    });

    let mut rows = Vec::new();
    let mut logs = Vec::new();
    let mut heads = Vec::new();
    for r in results {
        let (row, log, head) = r?;
        rows.push(row);
        logs.push(log);
        heads.push(head);
    }
    Ok((RunReport::new(name, cfg.mode, sparsity, rows, logs), heads))
}

/// Writes `report.csv`, `report.txt`, `report.json`, `runs.csv` and one
/// `evals_run{i}.log` per run into `dir`.
pub fn write_report(report: &RunReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: &str| {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))
    };
    let table = report_table(std::slice::from_ref(report));
    write("report.csv", &table.csv)?;
    write("runs.csv", &report.runs_csv())?;
    write("report.json", &(report.to_json() + "\n"))?;

    let mut txt = table.text.clone();
    txt.push('\n');
    txt.push_str(&format!("mode: {}\n", report.mode));
    if let Some(s) = report.sparsity {
        txt.push_str(&format!("target sparsity: {s}\n"));
    }
    for r in &report.runs {
        txt.push_str(&format!(
            "run {}  seed {}  accuracy {}  active {}%  evals {}  time {:.1}s\n",
            r.run,
            r.seed,
            super::report::format_fixed(r.accuracy, 3),
            super::report::format_fixed(100.0 * r.active_fraction, 3),
            r.evaluations,
            r.wall_time_s
        ));
    }
    write("report.txt", &txt)?;

    for (i, log) in report.logs.iter().enumerate() {
        let mut body = log.join("\n");
        body.push('\n');
        write(&format!("evals_run{i}.log"), &body)?;
    }
    Ok(())
}

/// Executes the configured experiment and writes its outputs to
/// `cfg.out_dir`.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunReport> {
    let (report, heads) = execute(cfg)?;
    write_report(&report, &cfg.out_dir)?;
    if cfg.save_weights {
        for (i, head) in heads.iter().enumerate() {
            if let Some(head) = head {
                save_weights(head, cfg.out_dir.join(format!("weights_run{i}.eptw")))?;
            }
        }
    }
    Ok(report)
}
