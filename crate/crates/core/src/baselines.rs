//! Reference heads and magnitude-based pruning methods to compare against.

use serde::{Deserialize, Serialize};

use crate::dataset::FeatureDataset;
use crate::net::{
    evaluate, fine_tune, train, HeadArchitecture, Layer, SgdSession, SparseMask, TrainConfig,
    TrainedHead,
};
use crate::rng::{derive_seed, stream};
use crate::{Error, Result};

/// Polynomial sparsity schedule over training steps:
/// `S(k) = S_f + (S_i - S_f) * (1 - (k - K_i) / (K_f - K_i))^alpha`,
/// applied whenever `k mod F == 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecaySchedule {
    pub initial_sparsity: f64,
    pub final_sparsity: f64,
    pub start_step: u64,
    pub end_step: u64,
    pub frequency: u64,
    pub exponent: f64,
    pub batches_per_epoch: u64,
}

impl DecaySchedule {
    /// `S_i = 0.1`, `K_i = 0`, `K_f = 25 nb`, `F = 5 nb`, `alpha = 3`.
    pub fn standard(batches_per_epoch: u64, final_sparsity: f64) -> Self {
        DecaySchedule {
            initial_sparsity: 0.1,
            final_sparsity,
            start_step: 0,
            end_step: 25 * batches_per_epoch,
            frequency: 5 * batches_per_epoch,
            exponent: 3.0,
            batches_per_epoch,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (si, sf) = (self.initial_sparsity, self.final_sparsity);
        if !(0.0 <= si && si <= sf && sf < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "need 0 <= S_i <= S_f < 1, got S_i = {si}, S_f = {sf}"
            )));
        }
        if self.start_step >= self.end_step {
            return Err(Error::InvalidConfig("K_i must be < K_f".into()));
        }
        if self.frequency == 0 {
            return Err(Error::InvalidConfig("F must be >= 1".into()));
        }
        if self.exponent.is_nan() || self.exponent <= 0.0 {
            return Err(Error::InvalidConfig("alpha must be > 0".into()));
        }
        if self.batches_per_epoch == 0 {
            return Err(Error::InvalidConfig("nb must be >= 1".into()));
        }
        Ok(())
    }

    pub fn sparsity_at(&self, step: u64) -> Result<f64> {
        if step < self.start_step || step > self.end_step {
            return Err(Error::StepOutOfRange {
                step,
                start: self.start_step,
                end: self.end_step,
            });
        }
        if step == self.start_step {
            return Ok(self.initial_sparsity);
        }
        if step == self.end_step {
            return Ok(self.final_sparsity);
        }
        let progress = (step - self.start_step) as f64 / (self.end_step - self.start_step) as f64;
        Ok(self.final_sparsity
            + (self.initial_sparsity - self.final_sparsity) * (1.0 - progress).powf(self.exponent))
    }

    /// Steps in `[K_i, K_f]` where the schedule fires.
    pub fn application_steps(&self) -> Vec<u64> {
        (self.start_step..=self.end_step)
            .filter(|k| k % self.frequency == 0)
            .collect()
    }
}

pub fn sparsity_at(sched: &DecaySchedule, step: u64) -> Result<f64> {
    sched.sparsity_at(step)
}

/// `floor(fraction * total)`, robust to representation error such as
/// `0.29 * 100 = 28.999999999999996`.
pub fn floor_count(fraction: f64, total: usize) -> usize {
    (((fraction * total as f64) + 1e-9).floor() as usize).min(total)
}

fn check_fraction(s: f64) -> Result<()> {
    if !(0.0..1.0).contains(&s) {
        return Err(Error::InvalidConfig(format!(
            "sparsity must be in [0, 1), got {s}"
        )));
    }
    Ok(())
}

fn check_layer(head_arch: &HeadArchitecture, layer: usize) -> Result<()> {
    if layer == 0 || layer > head_arch.n_hidden() {
        return Err(Error::InvalidConfig(format!(
            "hidden layer {layer} does not exist (head has {})",
            head_arch.n_hidden()
        )));
    }
    Ok(())
}

/// Masks the smallest-magnitude weights of `layers` (1-based hidden layer
/// numbers) so that `floor(sparsity * P)` of their `P` weights are zero.
/// Positions already masked in `base` are ranked first, so masks only grow.
/// Ties on magnitude go to the lower flat index (layers in the given order,
/// row-major within a layer).
pub fn magnitude_mask(
    weights: &[Layer<f32>],
    base: &SparseMask,
    layers: &[usize],
    sparsity: f64,
) -> SparseMask {
    // (already masked, |w|, flat index, weight layer, index within layer)
    let mut entries: Vec<(bool, f32, usize, usize, usize)> = Vec::new();
    for &l in layers {
        let m = base.layer(l - 1);
        for (local, (&w, &mv)) in weights[l - 1].weights.iter().zip(m.iter()).enumerate() {
            entries.push((mv == 0.0, w.abs(), entries.len(), l - 1, local));
        }
    }
    let already = entries.iter().filter(|e| e.0).count();
    let target = floor_count(sparsity, entries.len()).max(already);
    entries.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut mask = base.clone();
    for &(_, _, _, layer, local) in entries.iter().take(target) {
        let m = mask.layer_mut(layer);
        let cols = m.ncols();
        m[[local / cols, local % cols]] = 0.0;
    }
    mask
}

/// One-shot magnitude pruning over the union of `target_layers`.
pub fn prune_weights(
    head: &TrainedHead,
    target_layers: &[usize],
    sparsity: f64,
) -> Result<SparseMask> {
    check_fraction(sparsity)?;
    if target_layers.is_empty() {
        return Err(Error::InvalidConfig("no target layers".into()));
    }
    for &l in target_layers {
        check_layer(&head.arch, l)?;
    }
    Ok(magnitude_mask(
        &head.layers,
        &head.mask,
        target_layers,
        sparsity,
    ))
}

/// Removes the `floor(sparsity * width)` units of hidden layer `layer` with
/// the lowest mean absolute input weight (lowest index first on ties).
pub fn prune_neurons(head: &TrainedHead, layer: usize, sparsity: f64) -> Result<SparseMask> {
    check_fraction(sparsity)?;
    check_layer(&head.arch, layer)?;
    let w = &head.layers[layer - 1].weights;
    let mut scores: Vec<(f64, usize)> = w
        .columns()
        .into_iter()
        .enumerate()
        .map(|(j, col)| {
            let mean = col.iter().map(|v| f64::from(v.abs())).sum::<f64>() / col.len() as f64;
            (mean, j)
        })
        .collect();
    scores.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let count = floor_count(sparsity, scores.len());
    let mut mask = head.mask.clone();
    let m = mask.layer_mut(layer - 1);
    for &(_, j) in scores.iter().take(count) {
        m.column_mut(j).fill(0.0);
    }
    Ok(mask)
}

/// Dense training followed by one-shot weight pruning and fine-tuning.
pub fn run_weight_pruning(
    arch: &HeadArchitecture,
    data: &FeatureDataset,
    cfg: &TrainConfig,
    target_layers: &[usize],
    sparsity: f64,
    finetune_epochs: usize,
) -> Result<TrainedHead> {
    let dense = train(arch, &SparseMask::dense(arch), data, cfg)?;
    let mask = prune_weights(&dense, target_layers, sparsity)?;
    fine_tune(&dense, &mask, data, finetune_epochs, &finetune_config(cfg))
}

/// Dense training followed by one-shot neuron pruning and fine-tuning.
pub fn run_neuron_pruning(
    arch: &HeadArchitecture,
    data: &FeatureDataset,
    cfg: &TrainConfig,
    layer: usize,
    sparsity: f64,
    finetune_epochs: usize,
) -> Result<TrainedHead> {
    let dense = train(arch, &SparseMask::dense(arch), data, cfg)?;
    let mask = prune_neurons(&dense, layer, sparsity)?;
    fine_tune(&dense, &mask, data, finetune_epochs, &finetune_config(cfg))
}

fn finetune_config(cfg: &TrainConfig) -> TrainConfig {
    cfg.with_seed(derive_seed(cfg.seed, stream::SHUFFLE, 1))
}

#[derive(Debug, Clone)]
pub struct DecayOutcome {
    pub head: TrainedHead,
    /// `(step, target sparsity)` at every application.
    pub applications: Vec<(u64, f64)>,
}

/// Dense training, then `K_f` further SGD steps during which the weights of
/// `target_layers` are magnitude-pruned to `sparsity_at(k)` whenever the
/// schedule fires. The last application happens at `k = K_f`, after the
/// final update. With `cumulative`, pruned weights never return.
pub fn run_polynomial_decay(
    arch: &HeadArchitecture,
    data: &FeatureDataset,
    sched: &DecaySchedule,
    cfg: &TrainConfig,
    target_layers: &[usize],
    cumulative: bool,
) -> Result<DecayOutcome> {
    sched.validate()?;
    let nb = cfg.batches_per_epoch(data.n_samples()) as u64;
    if nb != sched.batches_per_epoch {
        return Err(Error::InvalidConfig(format!(
            "schedule assumes {} batches per epoch, data gives {nb}",
            sched.batches_per_epoch
        )));
    }
    for &l in target_layers {
        check_layer(arch, l)?;
    }
    let dense = train(arch, &SparseMask::dense(arch), data, cfg)?;
    let dense_mask = SparseMask::dense(arch);
    let ft_cfg = finetune_config(cfg);
    let mut session = SgdSession::new(dense.layers.clone(), dense_mask.clone(), data, &ft_cfg);

    let mut applications = Vec::new();
    let mut apply = |step: u64, weights: &[Layer<f32>], mask: &mut SparseMask| -> bool {
        if step < sched.start_step || step > sched.end_step || !step.is_multiple_of(sched.frequency)
        {
            return false;
        }
        let s = sched.sparsity_at(step).expect("step in range");
        let base = if cumulative {
            mask.clone()
        } else {
            dense_mask.clone()
        };
        *mask = magnitude_mask(weights, &base, target_layers, s);
        applications.push((step, s));
        true
    };

    let mut step = 0u64;
    let mut extra_epochs = 0;
    while step < sched.end_step {
        let loss = session.epoch(&mut step, &mut apply);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch: dense.epochs_run + extra_epochs,
            });
        }
        extra_epochs += 1;
    }
    let mut final_mask = session.mask.clone();
    if apply(sched.end_step, &session.layers, &mut final_mask) {
        session = SgdSession::new(session.layers, final_mask, data, &ft_cfg);
    }

    let train_accuracy = session.accuracy();
    Ok(DecayOutcome {
        head: TrainedHead {
            arch: arch.clone(),
            activation: cfg.activation,
            mask: session.mask.clone(),
            layers: session.layers,
            train_accuracy,
            test_accuracy: None,
            epochs_run: dense.epochs_run + extra_epochs,
            history: dense.history,
        },
        applications,
    })
}

/// Architecture with every hidden layer scaled to `round(fraction * width)`
/// (at least one unit).
pub fn scaled_architecture(arch: &HeadArchitecture, fraction: f64) -> Result<HeadArchitecture> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "width fraction must be in (0, 1], got {fraction}"
        )));
    }
    let hidden = arch
        .hidden_sizes
        .iter()
        .map(|&w| ((fraction * w as f64).round() as usize).max(1))
        .collect();
    HeadArchitecture::new(arch.input_dim, hidden, arch.n_classes)
}

/// Trains an unmasked head whose hidden widths are scaled by `fraction`;
/// `1.0` is the unpruned reference.
pub fn run_reference(
    arch: &HeadArchitecture,
    data: &FeatureDataset,
    cfg: &TrainConfig,
    fraction: f64,
) -> Result<TrainedHead> {
    let scaled = scaled_architecture(arch, fraction)?;
    train(&scaled, &SparseMask::dense(&scaled), data, cfg)
}

pub const GRID_FRACTIONS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone)]
pub struct GridEntry {
    pub fraction: f64,
    pub head: TrainedHead,
    pub test_accuracy: f64,
}

/// Trains one reference head per fraction in [`GRID_FRACTIONS`] and scores
/// each on `test`.
pub fn reference_grid(
    arch: &HeadArchitecture,
    train_set: &FeatureDataset,
    test_set: &FeatureDataset,
    cfg: &TrainConfig,
) -> Result<Vec<GridEntry>> {
    GRID_FRACTIONS
        .iter()
        .map(|&fraction| {
            let mut head = run_reference(arch, train_set, cfg, fraction)?;
            let acc = evaluate(&head, test_set)?;
            head.test_accuracy = Some(acc);
            Ok(GridEntry {
                fraction,
                head,
                test_accuracy: acc,
            })
        })
        .collect()
}

/// Index of the best grid entry: highest test accuracy, smaller width on
/// ties.
pub fn best_fixed(grid: &[GridEntry]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, e) in grid.iter().enumerate() {
        match best {
            Some(b) if grid[b].test_accuracy >= e.test_accuracy => {}
            _ => best = Some(i),
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Activation;
    use ndarray::{array, Array1, Array2};

    fn head_with(weights: Array2<f32>) -> TrainedHead {
        let (rows, cols) = weights.dim();
        let arch = HeadArchitecture::new(rows, vec![cols], 2).unwrap();
        TrainedHead {
            mask: SparseMask::dense(&arch),
            layers: vec![
                Layer {
                    bias: Array1::zeros(cols),
                    weights,
                },
                Layer::zeros(cols, 2),
            ],
            arch,
            activation: Activation::Relu,
            train_accuracy: 0.0,
            test_accuracy: None,
            epochs_run: 0,
            history: vec![],
        }
    }

    #[test]
    fn table_schedule_boundaries_and_midpoint() {
        let s = DecaySchedule::standard(10, 0.5);
        assert_eq!(s.sparsity_at(0).unwrap(), 0.1);
        assert_eq!(s.sparsity_at(250).unwrap(), 0.5);
        assert!(s.sparsity_at(251).is_err());
        let mid = DecaySchedule {
            start_step: 0,
            end_step: 100,
            ..s.clone()
        };
        assert!((mid.sparsity_at(50).unwrap() - 0.45).abs() < 1e-15);
    }

    #[test]
    fn six_application_points() {
        let nb = 15;
        let s = DecaySchedule::standard(nb, 0.6);
        let steps = s.application_steps();
        assert_eq!(steps, (0..=5).map(|e| e * 5 * nb).collect::<Vec<_>>());
    }

    #[test]
    fn constant_schedule_when_bounds_equal() {
        let s = DecaySchedule::standard(4, 0.1);
        for k in s.application_steps() {
            assert!((s.sparsity_at(k).unwrap() - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn weight_pruning_small_example() {
        let head = head_with(array![[0.5, -0.1, 0.3, -0.4]]);
        let mask = prune_weights(&head, &[1], 0.5).unwrap();
        assert_eq!(mask.layer(0), &array![[1.0, 0.0, 0.0, 1.0]]);
        assert!(prune_weights(&head, &[1], 0.0).unwrap().is_dense());
    }

    #[test]
    fn weight_pruning_tie_goes_to_lower_index() {
        let head = head_with(array![[0.2, 0.9, -0.2, 0.7]]);
        let mask = prune_weights(&head, &[1], 0.25).unwrap();
        assert_eq!(mask.layer(0), &array![[0.0, 1.0, 1.0, 1.0]]);
    }

    #[test]
    fn neuron_pruning_small_example() {
        // column means 0.9, 0.1, 0.5, 0.2
        let head = head_with(array![[0.9, -0.1, 0.4, 0.2], [-0.9, 0.1, 0.6, -0.2]]);
        let mask = prune_neurons(&head, 1, 0.5).unwrap();
        assert_eq!(mask.live_units(0), vec![true, false, true, false]);
        assert!(mask.is_column_constant(0));
        assert!(prune_neurons(&head, 1, 0.0).unwrap().is_dense());
        assert!(prune_neurons(&head, 1, 0.2).unwrap().is_dense());
        assert!(prune_neurons(&head, 2, 0.5).is_err());
    }

    #[test]
    fn floor_count_is_robust() {
        assert_eq!(floor_count(0.29, 100), 29);
        assert_eq!(floor_count(0.54, 512), 276);
        assert_eq!(floor_count(0.0, 7), 0);
    }

    #[test]
    fn cumulative_mask_only_grows() {
        let w = array![[0.1, 0.2, 0.3, 0.4]];
        let head = head_with(w.clone());
        let first = magnitude_mask(&head.layers, &head.mask, &[1], 0.5);
        // Make the pruned weights large; cumulative masking keeps them out.
        let mut layers = head.layers.clone();
        layers[0].weights = array![[9.0, 9.0, 0.3, 0.4]];
        let second = magnitude_mask(&layers, &first, &[1], 0.75);
        assert_eq!(second.layer(0), &array![[0.0, 0.0, 0.0, 1.0]]);
    }

    #[test]
    fn scaled_widths() {
        let arch = HeadArchitecture::new(10, vec![512], 3).unwrap();
        assert_eq!(
            scaled_architecture(&arch, 1.0).unwrap().hidden_sizes,
            vec![512]
        );
        assert_eq!(
            scaled_architecture(&arch, 0.5).unwrap().hidden_sizes,
            vec![256]
        );
        assert!(scaled_architecture(&arch, 0.0).is_err());
    }

    #[test]
    fn best_fixed_prefers_smaller_on_tie() {
        let head = head_with(array![[1.0]]);
        let grid: Vec<GridEntry> = [0.5, 0.7, 0.7, 0.6]
            .iter()
            .zip(GRID_FRACTIONS)
            .map(|(&acc, fraction)| GridEntry {
                fraction,
                head: head.clone(),
                test_accuracy: acc,
            })
            .collect();
        assert_eq!(best_fixed(&grid), Some(1));
    }
}
