//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use evoprune_core::baselines::DecaySchedule;
use evoprune_core::encoding::{decode, hamming, Chromosome, EncodingKind};
use evoprune_core::evo::{
    crossover_uniform, crossover_with_draws, mutate, random_chromosome, replace, run, running_best,
    select_nam, FitnessRecord, GaConfig, Population,
};
use evoprune_core::harness::{run_experiment, DatasetConfig, Mode, RunConfig, RunReport};
use evoprune_core::net::{train, HeadArchitecture, TrainConfig};
use evoprune_core::rng::rng_from_seed;
use evoprune_core::synth::{generate, SyntheticSpec};
use rand::Rng;
use tempfile::TempDir;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- schedule

fn schedule_oracle(si: f64, sf: f64, ki: u64, kf: u64, alpha: f64, k: u64) -> f64 {
    let remaining = (kf - k) as f64 / (kf - ki) as f64;
    let w = if remaining == 0.0 {
        0.0
    } else {
        (alpha * remaining.ln()).exp()
    };
    si * w + sf * (1.0 - w)
}

fn schedule() -> Outcome {
    let mut rng = rng_from_seed(2024);
    let mut worst = 0.0f64;
    let mut boundary_ok = true;
    for _ in 0..1000 {
        let si = rng.random_range(0.0..0.9);
        let sf = rng.random_range(si..0.999);
        let ki = rng.random_range(0..500u64);
        let kf = ki + rng.random_range(1..5000u64);
        let sched = DecaySchedule {
            initial_sparsity: si,
            final_sparsity: sf,
            start_step: ki,
            end_step: kf,
            frequency: rng.random_range(1..50),
            exponent: rng.random_range(0.25..6.0),
            batches_per_epoch: 1,
        };
        boundary_ok &= sched.sparsity_at(ki).unwrap() == si && sched.sparsity_at(kf).unwrap() == sf;
        for _ in 0..20 {
            let k = rng.random_range(ki..=kf);
            let got = sched.sparsity_at(k).unwrap();
            let want = schedule_oracle(si, sf, ki, kf, sched.exponent, k);
            worst = worst.max((got - want).abs());
        }
    }
    outcome(
        worst <= 1e-12 && boundary_ok,
        format!("max |error| {worst:.1e} over 20,000 steps, boundaries exact: {boundary_ok}"),
    )
}

// ---------------------------------------------------------------- GA oracle

fn weighted_onemax(
    weights: &[f64],
) -> impl Fn(&Chromosome, u64) -> evoprune_core::Result<f64> + Sync + '_ {
    move |c, _| {
        Ok(c.genes
            .iter()
            .zip(weights)
            .map(|(&g, &w)| if g { w } else { 0.0 })
            .sum())
    }
}

fn exhaustive_best(weights: &[f64]) -> f64 {
    (0u32..1 << weights.len())
        .map(|bits| {
            weights
                .iter()
                .enumerate()
                .filter(|(i, _)| bits >> i & 1 == 1)
                .map(|(_, w)| w)
                .sum::<f64>()
        })
        .fold(f64::MIN, f64::max)
}

fn ga_oracle() -> Outcome {
    let kind = EncodingKind::FeatureSelection;
    let mut hits = 0;
    for seed in 0..50u64 {
        let mut rng = rng_from_seed(10_000 + seed);
        let weights: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..3.0)).collect();
        let optimum = exhaustive_best(&weights);
        let cfg = GaConfig {
            max_evals: 4096,
            seed,
            ..GaConfig::default()
        };
        let out = run(&cfg, kind, 12, &weighted_onemax(&weights)).unwrap();
        if (out.best.fitness - optimum).abs() < 1e-12 {
            hits += 1;
        }
    }
    outcome(
        hits >= 45,
        format!("{hits}/50 runs found the exhaustive optimum"),
    )
}

// ---------------------------------------------------------------- budget

fn budget() -> Outcome {
    let kind = EncodingKind::Neurons { layer: 1 };
    let surrogate = |c: &Chromosome, seed: u64| -> evoprune_core::Result<f64> {
        let ones = c.genes.iter().filter(|&&g| g).count() as f64;
        Ok(ones / c.len() as f64 + (seed % 97) as f64 * 1e-4)
    };
    let mut bad = Vec::new();
    for evals in [200, 300] {
        for seed in 0..20 {
            let cfg = GaConfig {
                population_size: 30,
                max_evals: evals,
                seed,
                ..GaConfig::default()
            };
            let out = run(&cfg, kind, 64, &surrogate).unwrap();
            let best = running_best(&out.history);
            let monotone = best.windows(2).all(|w| w[1].fitness >= w[0].fitness);
            let indices_ok = out
                .history
                .iter()
                .enumerate()
                .all(|(i, r)| r.eval_index == i);
            if out.history.len() != evals || !monotone || !indices_ok {
                bad.push(format!(
                    "evals {evals} seed {seed}: {} records",
                    out.history.len()
                ));
            }
        }
    }
    outcome(
        bad.is_empty(),
        if bad.is_empty() {
            "40/40 runs exact and monotone".into()
        } else {
            bad.join("; ")
        },
    )
}

// ---------------------------------------------------------------- operator laws

fn rank_key(r: &FitnessRecord) -> (f64, i64, i64) {
    (r.fitness, -(r.active as i64), -(r.eval_index as i64))
}

fn by_key(a: &FitnessRecord, b: &FitnessRecord) -> Ordering {
    rank_key(a).partial_cmp(&rank_key(b)).unwrap()
}

fn record(rng: &mut impl Rng, c: Chromosome, index: usize) -> FitnessRecord {
    let active = c.genes.iter().filter(|&&g| g).count();
    FitnessRecord {
        chromosome: c,
        // coarse grid so ties, and their tie-breaks, occur often
        fitness: rng.random_range(0..6) as f64 / 5.0,
        active,
        eval_index: index,
        seed_used: 0,
    }
}

fn operator_laws() -> Outcome {
    const CASES: usize = 10_000;
    let kind = EncodingKind::FeatureSelection;
    let mut rng = rng_from_seed(77);
    let mut failures: Vec<String> = Vec::new();

    // crossover: per-locus multiset preservation, plus the draw rule
    for case in 0..CASES {
        let len = rng.random_range(1..80);
        let p = random_chromosome(kind, len, rng.random(), &mut rng);
        let q = random_chromosome(kind, len, rng.random(), &mut rng);
        let (a, b) = crossover_uniform(&p, &q, &mut rng);
        let locus = (0..len).all(|i| {
            let mut x = [p.genes[i], q.genes[i]];
            let mut y = [a.genes[i], b.genes[i]];
            x.sort();
            y.sort();
            x == y
        });
        let draws: Vec<f64> = (0..len).map(|_| rng.random()).collect();
        let mut it = draws.iter();
        let (c, d) = crossover_with_draws(&p, &q, || *it.next().unwrap());
        let rule = (0..len).all(|i| {
            let keep = draws[i] <= 0.5;
            (c.genes[i], d.genes[i])
                == if keep {
                    (p.genes[i], q.genes[i])
                } else {
                    (q.genes[i], p.genes[i])
                }
        });
        if !(locus && rule) {
            failures.push(format!("crossover case {case}"));
            break;
        }
    }

    // mutation: distance 0 or 1; always 1 at p_mut = 1, never at 0; rate ~ p_mut
    let mut flips = 0usize;
    let p_mut = 0.3;
    for case in 0..CASES {
        let len = rng.random_range(1..80);
        let c = random_chromosome(kind, len, 0.5, &mut rng);
        let m = mutate(&c, p_mut, &mut rng);
        let dist = hamming(&c, &m).unwrap();
        flips += dist;
        let always = hamming(&c, &mutate(&c, 1.0, &mut rng)).unwrap();
        let never = hamming(&c, &mutate(&c, 0.0, &mut rng)).unwrap();
        if dist > 1 || always != 1 || never != 0 {
            failures.push(format!("mutation case {case}"));
            break;
        }
    }
    let rate = flips as f64 / CASES as f64;
    let sigma = (p_mut * (1.0 - p_mut) / CASES as f64).sqrt();
    if (rate - p_mut).abs() > 5.0 * sigma {
        failures.push(format!("mutation rate {rate}"));
    }

    // NAM: parent2 is the farthest of the drawn candidates, first on ties
    for case in 0..CASES {
        let n = rng.random_range(2..12);
        let len = rng.random_range(1..10);
        let members = (0..n)
            .map(|i| {
                let c = random_chromosome(kind, len, 0.5, &mut rng);
                record(&mut rng, c, i)
            })
            .collect();
        let pop = Population::new(members);
        let candidates = rng.random_range(1..5);
        let mut replay = rng.clone();
        let (p1, p2) = select_nam(&pop, candidates, &mut rng);
        let first = replay.random_range(0..n);
        let drawn: Vec<usize> = (0..candidates).map(|_| replay.random_range(0..n)).collect();
        let m = pop.members();
        let dist = |j: usize| hamming(&m[first].chromosome, &m[j].chromosome).unwrap();
        let max = drawn.iter().map(|&j| dist(j)).max().unwrap();
        let expected = *drawn.iter().find(|&&j| dist(j) == max).unwrap();
        if p1 != first || p2 != expected {
            failures.push(format!("NAM case {case}"));
            break;
        }
    }

    // replacement: the two worst slots go to the best two of {two worst, two children}
    for case in 0..CASES {
        let n = rng.random_range(2..10);
        let len = rng.random_range(1..8);
        let members: Vec<FitnessRecord> = (0..n)
            .map(|i| {
                let c = random_chromosome(kind, len, 0.5, &mut rng);
                record(&mut rng, c, i)
            })
            .collect();
        let children: Vec<FitnessRecord> = (0..2)
            .map(|i| {
                let c = random_chromosome(kind, len, 0.5, &mut rng);
                record(&mut rng, c, n + i)
            })
            .collect();
        let mut sorted = members.clone();
        sorted.sort_by(by_key);
        let mut pool: Vec<FitnessRecord> = sorted[..2].to_vec();
        pool.extend(children.iter().cloned());
        pool.sort_by(by_key);
        let mut expected: Vec<usize> = sorted[2..].iter().map(|r| r.eval_index).collect();
        expected.extend(pool[2..].iter().map(|r| r.eval_index));
        expected.sort();

        let mut pop = Population::new(members);
        replace(&mut pop, children);
        let mut got: Vec<usize> = pop.members().iter().map(|r| r.eval_index).collect();
        got.sort();
        let ordered = pop
            .members()
            .windows(2)
            .all(|w| by_key(&w[0], &w[1]) != Ordering::Greater);
        if got != expected || !ordered || pop.len() != n {
            failures.push(format!("replacement case {case}"));
            break;
        }
    }

    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("crossover, mutation (rate {rate:.4}), NAM, replacement: {CASES} cases each")
        } else {
            failures.join("; ")
        },
    )
}

// ---------------------------------------------------------------- masks

fn mask_preservation() -> Outcome {
    let spec = SyntheticSpec {
        n_classes: 3,
        feature_dim: 16,
        informative: 4,
        n_train: 120,
        n_test: 3,
        separation: 1.0,
        seed: 9,
    };
    let data = generate(&spec).unwrap().0;
    let cfg = TrainConfig::default();
    let mut rng = rng_from_seed(4);
    let mut checked = 0usize;
    let mut violations = 0usize;
    for widths in [vec![8], vec![8, 8]] {
        let arch = HeadArchitecture::for_dataset(&data, widths.clone()).unwrap();
        let mut kinds = vec![
            EncodingKind::Neurons { layer: 1 },
            EncodingKind::Connections { layer: 1 },
            EncodingKind::FeatureSelection,
        ];
        if widths.len() == 2 {
            kinds.extend([
                EncodingKind::Neurons { layer: 2 },
                EncodingKind::Connections { layer: 2 },
                EncodingKind::NeuronsBoth,
            ]);
        }
        for kind in kinds {
            let len = kind.chromosome_len(&arch).unwrap();
            let chrom = random_chromosome(kind, len, 0.5, &mut rng);
            let mask = decode(&chrom, &arch).unwrap();
            let head = train(&arch, &mask, &data, &cfg.with_seed(checked as u64)).unwrap();
            for (layer, m) in head.layers.iter().zip(head.mask.layers()) {
                for (w, &v) in layer.weights.iter().zip(m) {
                    if v == 0.0 {
                        checked += 1;
                        if w.to_bits() != 0 {
                            violations += 1;
                        }
                    }
                }
            }
        }
    }
    let gradient = gradient_check();
    outcome(
        violations == 0 && gradient.pass,
        format!(
            "{checked} masked weights, {violations} non-zero; {}",
            gradient.detail
        ),
    )
}

fn gradient_check() -> Outcome {
    use evoprune_core::ndarray::{Array1, Array2};
    use evoprune_core::net::{loss_and_gradients, Activation, Layer};

    let h = 1e-6;
    let mut rng = rng_from_seed(31);
    let mut worst = 0.0f64;
    let mut compared = 0usize;
    for widths in [vec![8], vec![8, 8]] {
        let mut dims = vec![16];
        dims.extend(&widths);
        dims.push(3);
        let masks: Vec<Array2<f64>> = dims
            .windows(2)
            .map(|w| Array2::from_shape_fn((w[0], w[1]), |_| f64::from(rng.random_bool(0.7))))
            .collect();
        let mut layers: Vec<Layer<f64>> = dims
            .windows(2)
            .zip(&masks)
            .map(|(w, m)| Layer {
                weights: Array2::from_shape_fn((w[0], w[1]), |_| rng.random_range(-0.8..0.8)) * m,
                bias: Array1::from_shape_fn(w[1], |_| rng.random_range(-0.3..0.3)),
            })
            .collect();
        let x = Array2::from_shape_fn((10, 16), |_| rng.random_range(-1.5..1.5));
        let y: Vec<usize> = (0..10).map(|_| rng.random_range(0..3)).collect();
        let n = y.len() as f64;
        let (_, grads) = loss_and_gradients(&layers, &masks, Activation::Relu, x.view(), &y);
        for l in 0..layers.len() {
            let (rows, cols) = masks[l].dim();
            for i in 0..rows {
                for j in 0..cols {
                    if masks[l][[i, j]] == 0.0 {
                        continue;
                    }
                    let orig = layers[l].weights[[i, j]];
                    layers[l].weights[[i, j]] = orig + h;
                    let up =
                        loss_and_gradients(&layers, &masks, Activation::Relu, x.view(), &y).0 / n;
                    layers[l].weights[[i, j]] = orig - h;
                    let down =
                        loss_and_gradients(&layers, &masks, Activation::Relu, x.view(), &y).0 / n;
                    layers[l].weights[[i, j]] = orig;
                    let fd = (up - down) / (2.0 * h);
                    let g = grads[l].weights[[i, j]];
                    // floor: central differences in f64 carry ~1e-10 of rounding noise
                    let scale = g.abs().max(fd.abs()).max(1e-4);
                    worst = worst.max((g - fd).abs() / scale);
                    compared += 1;
                }
            }
        }
    }
    outcome(
        worst <= 1e-4,
        format!("gradient check max rel err {worst:.1e} over {compared} weights"),
    )
}

// ---------------------------------------------------------------- desk-scale comparisons

const SEEDS: usize = 5;

fn write_synthetic(dir: &Path) {
    let (train, test) = generate(&SyntheticSpec::default()).unwrap();
    train.save_binary(dir.join("train.eptl")).unwrap();
    test.save_binary(dir.join("test.eptl")).unwrap();
}

fn desk_config(dir: &Path, mode: Mode) -> RunConfig {
    let mut cfg = RunConfig::new(
        DatasetConfig {
            path: dir.join("train.eptl"),
            format: None,
            test_path: Some(dir.join("test.eptl")),
            name: Some("synthetic".into()),
        },
        mode,
    );
    cfg.hidden_sizes = vec![32];
    cfg.train.learning_rate = 0.05;
    cfg.train.max_epochs = 200;
    cfg.ga.population_size = 30;
    cfg.ga.max_evals = 200;
    cfg.n_runs = SEEDS;
    cfg.out_dir = dir.join(mode.name());
    cfg
}

struct Desk {
    ga: RunReport,
    dense: RunReport,
    weight: RunReport,
    neuron: RunReport,
    /// Dense reference plus GA.
    dense_and_ga_time: Duration,
}

fn desk_runs(dir: &Path) -> Desk {
    write_synthetic(dir);
    let start = Instant::now();
    let dense = run_experiment(&desk_config(dir, Mode::ReferenceDense)).unwrap();
    let ga_cfg = desk_config(dir, Mode::EvolveFs);
    let ga = run_experiment(&ga_cfg).unwrap();
    let dense_and_ga_time = start.elapsed();
    let baseline = |mode| {
        let mut cfg = desk_config(dir, mode);
        cfg.baseline.reference_report = Some(ga_cfg.out_dir.clone());
        run_experiment(&cfg).unwrap()
    };
    Desk {
        weight: baseline(Mode::BaselineWeight),
        neuron: baseline(Mode::BaselineNeuron),
        ga,
        dense,
        dense_and_ga_time,
    }
}

fn ga_beats_dense(d: &Desk) -> Outcome {
    let active = d.ga.mean_active_fraction();
    outcome(
        d.ga.mean_accuracy >= d.dense.mean_accuracy && active <= 0.75,
        format!(
            "GA accuracy {:.4} vs dense {:.4}, GA active fraction {active:.4}",
            d.ga.mean_accuracy, d.dense.mean_accuracy
        ),
    )
}

fn ga_matches_pruning(d: &Desk) -> Outcome {
    let ga = d.ga.mean_accuracy;
    let (w, n) = (d.weight.mean_accuracy, d.neuron.mean_accuracy);
    outcome(
        ga >= w - 0.01 && ga >= n - 0.01,
        format!(
            "GA {ga:.4} vs weight pruning {w:.4} and neuron pruning {n:.4} at sparsity {:.4}",
            d.weight.sparsity.unwrap_or(f64::NAN)
        ),
    )
}

// ---------------------------------------------------------------- determinism

fn determinism(dir: &Path) -> Outcome {
    let mut mismatched = Vec::new();
    let mut compared = 0;
    for mode in [
        Mode::EvolveFs,
        Mode::EvolveNeuronsL1,
        Mode::EvolveConnections,
    ] {
        let mk = |tag: &str| {
            let mut cfg = desk_config(dir, mode);
            cfg.ga.population_size = 10;
            cfg.ga.max_evals = 30;
            cfg.hidden_sizes = vec![16];
            cfg.n_runs = 2;
            cfg.out_dir = dir.join(format!("det-{}-{tag}", mode.name()));
            cfg
        };
        let (a, b) = (mk("a"), mk("b"));
        run_experiment(&a).unwrap();
        run_experiment(&b).unwrap();
        for name in ["evals_run0.log", "evals_run1.log", "report.csv", "runs.csv"] {
            compared += 1;
            if fs::read(a.out_dir.join(name)).unwrap() != fs::read(b.out_dir.join(name)).unwrap() {
                mismatched.push(format!("{mode} {name}"));
            }
        }
    }
    outcome(
        mismatched.is_empty(),
        if mismatched.is_empty() {
            format!("{compared} files byte-identical across repeated runs")
        } else {
            format!("differs: {}", mismatched.join(", "))
        },
    )
}

// ----------------------------------------------------------------

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> (Outcome, Duration, bool) {
    let start = Instant::now();
    let out = f();
    let took = start.elapsed();
    let in_time = limit.is_none_or(|l| took <= l);
    (out, took, in_time)
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let tmp = TempDir::new().unwrap();
    let secs = Duration::from_secs;
    let mut results: Vec<(&str, Outcome, Duration, bool)> = Vec::new();
    let record = |results: &mut Vec<_>, name, limit, f: &mut dyn FnMut() -> Outcome| {
        let (o, t, ok) = timed(limit, f);
        results.push((name, o, t, ok));
    };

    record(
        &mut results,
        "schedule correctness",
        Some(secs(1)),
        &mut schedule,
    );
    record(
        &mut results,
        "GA oracle equivalence",
        Some(secs(30)),
        &mut ga_oracle,
    );
    record(&mut results, "budget audit", Some(secs(10)), &mut budget);
    record(
        &mut results,
        "operator laws",
        Some(secs(30)),
        &mut operator_laws,
    );
    record(
        &mut results,
        "mask preservation",
        Some(secs(60)),
        &mut mask_preservation,
    );

    let desk_dir = tmp.path().join("desk");
    fs::create_dir_all(&desk_dir).unwrap();
    let start = Instant::now();
    let desk = desk_runs(&desk_dir);
    let desk_time = start.elapsed();
    let o = ga_beats_dense(&desk);
    results.push((
        "desk-scale feature selection vs dense",
        o,
        desk.dense_and_ga_time,
        desk.dense_and_ga_time <= secs(600),
    ));
    let o = ga_matches_pruning(&desk);
    results.push((
        "desk-scale GA vs pruning at matched sparsity",
        o,
        desk_time,
        desk_time <= secs(900),
    ));

    let det_dir = tmp.path().join("det");
    fs::create_dir_all(&det_dir).unwrap();
    write_synthetic(&det_dir);
    record(&mut results, "determinism", None, &mut || {
        determinism(&det_dir)
    });

    let mut failed = 0;
    for (name, o, took, in_time) in &results {
        let pass = o.pass && *in_time;
        if !pass {
            failed += 1;
        }
        let late = if *in_time { "" } else { " [over time limit]" };
        println!(
            "{} {name}: {} ({:.2}s){late}",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
