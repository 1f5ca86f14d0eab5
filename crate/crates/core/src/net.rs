//! Masked fully-connected classifier heads.
//!
//! A head is one or two hidden layers followed by a softmax output layer.
//! Each weight matrix has shape `(inputs, units)` and is paired with a 0/1
//! mask of the same shape. Masks are applied multiplicatively after every
//! SGD update, so pruned positions stay exactly zero through training and
//! inference. A unit whose mask column is all zero is dead: its bias is held
//! at zero as well.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, LinalgScalar, ScalarOperand, Zip};
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureDataset;
use crate::encoding::EncodingKind;
use crate::rng::{derived_rng, stream, Rng};
use crate::{Error, Result};

/// Scalar types the head can be evaluated in. Training uses `f32`; `f64`
/// exists for gradient checking.
pub trait Real:
    Float + LinalgScalar + ScalarOperand + std::fmt::Debug + Send + Sync + 'static
{
}
impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadArchitecture {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub n_classes: usize,
}

impl HeadArchitecture {
    pub fn new(input_dim: usize, hidden_sizes: Vec<usize>, n_classes: usize) -> Result<Self> {
        let arch = HeadArchitecture {
            input_dim,
            hidden_sizes,
            n_classes,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_sizes.is_empty() || self.hidden_sizes.len() > 2 {
            return Err(Error::InvalidArchitecture(format!(
                "expected 1 or 2 hidden layers, got {}",
                self.hidden_sizes.len()
            )));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::InvalidArchitecture(
                "hidden widths must be >= 1".into(),
            ));
        }
        if self.input_dim == 0 {
            return Err(Error::InvalidArchitecture("input_dim must be >= 1".into()));
        }
        if self.n_classes < 2 {
            return Err(Error::InvalidArchitecture("n_classes must be >= 2".into()));
        }
        Ok(())
    }

    /// `(rows, cols)` of every weight matrix, output layer last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden_sizes);
        dims.push(self.n_classes);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn n_hidden(&self) -> usize {
        self.hidden_sizes.len()
    }

    pub fn for_dataset(data: &FeatureDataset, hidden_sizes: Vec<usize>) -> Result<Self> {
        Self::new(data.feature_dim(), hidden_sizes, data.n_classes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply<F: Real>(self, z: &mut Array2<F>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| v.max(F::zero())),
            Activation::Tanh => z.mapv_inplace(Float::tanh),
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output<F: Real>(self, a: F) -> F {
        match self {
            Activation::Relu => {
                if a > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
            Activation::Tanh => F::one() - a * a,
        }
    }
}

/// Per-layer binary masks, output layer included.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMask {
    layers: Vec<Array2<f32>>,
}

impl SparseMask {
    pub fn dense(arch: &HeadArchitecture) -> Self {
        SparseMask {
            layers: arch.layer_shapes().into_iter().map(Array2::ones).collect(),
        }
    }

    pub fn from_layers(arch: &HeadArchitecture, layers: Vec<Array2<f32>>) -> Result<Self> {
        let mask = SparseMask { layers };
        mask.check_shapes(arch)?;
        if let Some(v) = mask
            .layers
            .iter()
            .flat_map(|m| m.iter())
            .find(|&&v| v != 0.0 && v != 1.0)
        {
            return Err(Error::InvalidMask(format!("mask entry {v} is not 0 or 1")));
        }
        Ok(mask)
    }

    pub fn check_shapes(&self, arch: &HeadArchitecture) -> Result<()> {
        let shapes = arch.layer_shapes();
        if shapes.len() != self.layers.len() {
            return Err(Error::InvalidMask(format!(
                "{} mask layers for {} weight layers",
                self.layers.len(),
                shapes.len()
            )));
        }
        for (l, (m, shape)) in self.layers.iter().zip(&shapes).enumerate() {
            if m.dim() != *shape {
                return Err(Error::InvalidMask(format!(
                    "layer {l} mask is {:?}, weights are {shape:?}",
                    m.dim()
                )));
            }
        }
        Ok(())
    }

    pub fn layers(&self) -> &[Array2<f32>] {
        &self.layers
    }

    pub fn layer(&self, index: usize) -> &Array2<f32> {
        &self.layers[index]
    }

    pub(crate) fn layer_mut(&mut self, index: usize) -> &mut Array2<f32> {
        &mut self.layers[index]
    }

    /// Whether each unit of weight layer `index` still has an input.
    pub fn live_units(&self, index: usize) -> Vec<bool> {
        self.layers[index]
            .columns()
            .into_iter()
            .map(|c| c.iter().any(|&v| v != 0.0))
            .collect()
    }

    pub fn active_weights(&self, index: usize) -> usize {
        self.layers[index].iter().filter(|&&v| v != 0.0).count()
    }

    pub fn is_dense(&self) -> bool {
        self.layers.iter().all(|m| m.iter().all(|&v| v == 1.0))
    }

    /// True when every column of layer `index` is all zeros or all ones.
    pub fn is_column_constant(&self, index: usize) -> bool {
        self.layers[index]
            .columns()
            .into_iter()
            .all(|c| c.iter().all(|&v| v == c[0]))
    }

    /// True when every row of layer `index` is all zeros or all ones.
    pub fn is_row_constant(&self, index: usize) -> bool {
        self.layers[index]
            .rows()
            .into_iter()
            .all(|r| r.iter().all(|&v| v == r[0]))
    }
}

/// Share of prunable structure left active, measured the way `kind`
/// prunes: units for neuron kinds, input features for feature selection,
/// and single weights for connection kinds.
pub fn active_fraction(mask: &SparseMask, kind: EncodingKind) -> f64 {
    let ratio = |a: usize, t: usize| if t == 0 { 0.0 } else { a as f64 / t as f64 };
    let live = |l: usize| {
        let units = mask.live_units(l);
        (units.iter().filter(|&&u| u).count(), units.len())
    };
    match kind {
        EncodingKind::Neurons { layer } => {
            let (a, t) = live(layer - 1);
            ratio(a, t)
        }
        EncodingKind::NeuronsBoth => {
            let (a1, t1) = live(0);
            let (a2, t2) = live(1);
            ratio(a1 + a2, t1 + t2)
        }
        EncodingKind::Connections { layer } => {
            let m = mask.layer(layer - 1);
            ratio(mask.active_weights(layer - 1), m.len())
        }
        EncodingKind::FeatureSelection => {
            let m = mask.layer(0);
            let active = m
                .rows()
                .into_iter()
                .filter(|r| r.iter().any(|&v| v != 0.0))
                .count();
            ratio(active, m.nrows())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f32,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub activation: Activation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 32,
            max_epochs: 600,
            patience: 10,
            seed: 0,
            activation: Activation::Relu,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::InvalidConfig("patience must be >= 1".into()));
        }
        if self.max_epochs < self.patience {
            return Err(Error::InvalidConfig(format!(
                "max_epochs ({}) must be >= patience ({})",
                self.max_epochs, self.patience
            )));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        TrainConfig {
            seed,
            ..self.clone()
        }
    }

    /// Batches per epoch over `n` samples.
    pub fn batches_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<F> {
    pub weights: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Real> Layer<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Layer {
            weights: Array2::zeros((rows, cols)),
            bias: Array1::zeros(cols),
        }
    }

    pub fn cast<G: Real>(&self) -> Layer<G> {
        let c = |v: &F| G::from(*v).expect("float cast");
        Layer {
            weights: self.weights.map(c),
            bias: self.bias.map(c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedHead {
    pub arch: HeadArchitecture,
    pub activation: Activation,
    pub layers: Vec<Layer<f32>>,
    pub mask: SparseMask,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub epochs_run: usize,
    pub history: Vec<EpochStats>,
}

impl TrainedHead {
    pub fn predict_proba(&self, x: ArrayView2<f32>) -> Array2<f32> {
        let mut z = forward(&self.layers, self.activation, x)
            .pop()
            .expect("logits");
        softmax_rows(&mut z);
        z
    }

    pub fn predict(&self, x: ArrayView2<f32>) -> Vec<usize> {
        let logits = forward(&self.layers, self.activation, x)
            .pop()
            .expect("logits");
        logits.outer_iter().map(|r| argmax(r)).collect()
    }

    /// Hidden units still connected, summed over hidden layers.
    pub fn live_hidden_units(&self) -> usize {
        (0..self.arch.n_hidden())
            .map(|l| self.mask.live_units(l).iter().filter(|&&u| u).count())
            .sum()
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax<F: Real>(row: ArrayView1<F>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn softmax_rows<F: Real>(z: &mut Array2<F>) {
    for mut row in z.outer_iter_mut() {
        let max = row.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Layer outputs for input `x`: hidden activations followed by the logits.
pub fn forward<F: Real>(layers: &[Layer<F>], act: Activation, x: ArrayView2<F>) -> Vec<Array2<F>> {
    let mut outputs: Vec<Array2<F>> = Vec::with_capacity(layers.len());
    for (l, layer) in layers.iter().enumerate() {
        let input = if l == 0 { x } else { outputs[l - 1].view() };
        let mut z = input.dot(&layer.weights) + &layer.bias;
        if l + 1 < layers.len() {
            act.apply(&mut z);
        }
        outputs.push(z);
    }
    outputs
}

/// Mean cross-entropy over the batch and its gradients with respect to
/// every parameter, with masked weights and dead biases given zero
/// gradient.
///
/// The loss returned is the sum of per-sample losses accumulated in `f64`,
/// so epoch totals do not depend on how samples were batched.
pub fn loss_and_gradients<F: Real>(
    layers: &[Layer<F>],
    masks: &[Array2<F>],
    act: Activation,
    x: ArrayView2<F>,
    labels: &[usize],
) -> (f64, Vec<Layer<F>>) {
    let batch = labels.len();
    let inv_b = F::one() / F::from(batch).unwrap();
    let mut outputs = forward(layers, act, x);
    let mut delta = outputs.pop().expect("logits");

    let mut loss = 0.0f64;
    for (mut row, &y) in delta.outer_iter_mut().zip(labels) {
        let max = row.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
        let sum = row
            .iter()
            .map(|&v| (v - max).exp())
            .fold(F::zero(), |a, b| a + b);
        let log_z = max + sum.ln();
        loss += (log_z - row[y]).to_f64().unwrap();
        row.mapv_inplace(|v| (v - log_z).exp() * inv_b);
        row[y] = row[y] - inv_b;
    }

    let mut grads: Vec<Layer<F>> = Vec::with_capacity(layers.len());
    for l in (0..layers.len()).rev() {
        let input = if l == 0 { x } else { outputs[l - 1].view() };
        let mut dw = input.t().dot(&delta);
        let mut db = delta.sum_axis(Axis(0));
        Zip::from(&mut dw).and(&masks[l]).for_each(|g, &m| {
            if m == F::zero() {
                *g = F::zero();
            }
        });
        for (j, col) in masks[l].columns().into_iter().enumerate() {
            if col.iter().all(|&v| v == F::zero()) {
                db[j] = F::zero();
            }
        }
        if l > 0 {
            let mut next = delta.dot(&layers[l].weights.t());
            Zip::from(&mut next)
                .and(&outputs[l - 1])
                .for_each(|d, &a| *d = *d * act.derivative_from_output(a));
            delta = next;
        }
        grads.push(Layer {
            weights: dw,
            bias: db,
        });
    }
    grads.reverse();
    (loss, grads)
}

fn apply_mask(layers: &mut [Layer<f32>], mask: &SparseMask) {
    for (layer, m) in layers.iter_mut().zip(mask.layers()) {
        // assignment rather than multiplication, so pruned weights are +0.0
        Zip::from(&mut layer.weights).and(m).for_each(|w, &v| {
            if v == 0.0 {
                *w = 0.0;
            }
        });
        for (j, col) in m.columns().into_iter().enumerate() {
            if col.iter().all(|&v| v == 0.0) {
                layer.bias[j] = 0.0;
            }
        }
    }
}

fn init_layers(arch: &HeadArchitecture, rng: &mut Rng) -> Vec<Layer<f32>> {
    arch.layer_shapes()
        .into_iter()
        .map(|(rows, cols)| {
            let limit = (6.0 / (rows + cols) as f64).sqrt() as f32;
            Layer {
                weights: Array2::from_shape_simple_fn((rows, cols), || {
                    rng.random_range(-limit..=limit)
                }),
                bias: Array1::zeros(cols),
            }
        })
        .collect()
}

fn check_inputs(arch: &HeadArchitecture, mask: &SparseMask, data: &FeatureDataset) -> Result<()> {
    arch.validate()?;
    mask.check_shapes(arch)?;
    if data.feature_dim() != arch.input_dim {
        return Err(Error::DimensionMismatch {
            location: "training set".into(),
            reason: format!(
                "feature_dim {} vs architecture input_dim {}",
                data.feature_dim(),
                arch.input_dim
            ),
        });
    }
    if data.n_classes() != arch.n_classes {
        return Err(Error::DimensionMismatch {
            location: "training set".into(),
            reason: format!(
                "{} classes vs architecture n_classes {}",
                data.n_classes(),
                arch.n_classes
            ),
        });
    }
    Ok(())
}

/// Accuracy of `layers` on the full dataset.
fn accuracy_of(layers: &[Layer<f32>], act: Activation, data: &FeatureDataset) -> f64 {
    let logits = forward(layers, act, data.features().view())
        .pop()
        .expect("logits");
    let correct = logits
        .outer_iter()
        .zip(data.labels())
        .filter(|(row, &y)| argmax(row.view()) == y)
        .count();
    correct as f64 / data.n_samples() as f64
}

/// Mini-batch SGD state shared by the trainer and the pruning baselines.
pub(crate) struct SgdSession<'a> {
    pub layers: Vec<Layer<f32>>,
    pub mask: SparseMask,
    data: &'a FeatureDataset,
    cfg: &'a TrainConfig,
    order: Vec<usize>,
    shuffle_rng: Rng,
}

impl<'a> SgdSession<'a> {
    pub fn new(
        layers: Vec<Layer<f32>>,
        mask: SparseMask,
        data: &'a FeatureDataset,
        cfg: &'a TrainConfig,
    ) -> Self {
        let mut session = SgdSession {
            layers,
            mask,
            data,
            cfg,
            order: (0..data.n_samples()).collect(),
            shuffle_rng: derived_rng(cfg.seed, stream::SHUFFLE, 0),
        };
        apply_mask(&mut session.layers, &session.mask);
        session
    }

    /// One pass over the shuffled data. `before_step` runs ahead of every
    /// update with the global step index and may rewrite the mask, returning
    /// true when it did; the new mask is applied before the update. Returns
    /// the epoch-mean loss.
    pub fn epoch(
        &mut self,
        step: &mut u64,
        mut before_step: impl FnMut(u64, &[Layer<f32>], &mut SparseMask) -> bool,
    ) -> f64 {
        self.order.shuffle(&mut self.shuffle_rng);
        let mut masks = self.mask.layers.clone();
        let lr = self.cfg.learning_rate;
        let mut total = 0.0f64;
        for chunk in self.order.chunks(self.cfg.batch_size) {
            if before_step(*step, &self.layers, &mut self.mask) {
                apply_mask(&mut self.layers, &self.mask);
                masks = self.mask.layers.clone();
            }
            let x = self.data.features().select(Axis(0), chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| self.data.labels()[i]).collect();
            let (loss, grads) =
                loss_and_gradients(&self.layers, &masks, self.cfg.activation, x.view(), &y);
            total += loss;
            for (layer, g) in self.layers.iter_mut().zip(&grads) {
                layer.weights.scaled_add(-lr, &g.weights);
                layer.bias.scaled_add(-lr, &g.bias);
            }
            apply_mask(&mut self.layers, &self.mask);
            *step += 1;
        }
        total / self.data.n_samples() as f64
    }

    pub fn accuracy(&self) -> f64 {
        accuracy_of(&self.layers, self.cfg.activation, self.data)
    }
}

/// Trains a masked head with mini-batch SGD on softmax cross-entropy.
///
/// Training stops after `max_epochs` or once the epoch-mean loss has failed
/// to strictly decrease for `patience` consecutive epochs. The parameters
/// returned are those of the epoch with the highest full-train-set accuracy
/// (earliest such epoch on ties).
pub fn train(
    arch: &HeadArchitecture,
    mask: &SparseMask,
    data: &FeatureDataset,
    cfg: &TrainConfig,
) -> Result<TrainedHead> {
    let mut init_rng = derived_rng(cfg.seed, stream::INIT, 0);
    let layers = init_layers(arch, &mut init_rng);
    train_from(arch, layers, mask, data, cfg)
}

/// Same as [`train`] but starting from the given parameters.
pub fn train_from(
    arch: &HeadArchitecture,
    layers: Vec<Layer<f32>>,
    mask: &SparseMask,
    data: &FeatureDataset,
    cfg: &TrainConfig,
) -> Result<TrainedHead> {
    cfg.validate()?;
    check_inputs(arch, mask, data)?;
    if data.n_samples() < 2 {
        return Err(Error::DegenerateDataset(format!(
            "{} training sample(s)",
            data.n_samples()
        )));
    }

    let mut session = SgdSession::new(layers, mask.clone(), data, cfg);
    let mut best_layers = session.layers.clone();
    let mut best_accuracy = f64::NEG_INFINITY;
    let mut best_loss = f64::INFINITY;
    let mut stale = 0;
    let mut history = Vec::new();
    let mut step = 0;

    for epoch in 0..cfg.max_epochs {
        let loss = session.epoch(&mut step, |_, _, _| false);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let accuracy = session.accuracy();
        history.push(EpochStats {
            loss,
            train_accuracy: accuracy,
        });
        if accuracy > best_accuracy {
            best_accuracy = accuracy;
            best_layers.clone_from(&session.layers);
        }
        if loss < best_loss {
            best_loss = loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    Ok(TrainedHead {
        arch: arch.clone(),
        activation: cfg.activation,
        layers: best_layers,
        mask: mask.clone(),
        train_accuracy: best_accuracy,
        test_accuracy: None,
        epochs_run: history.len(),
        history,
    })
}

/// Continues training `head` under `mask` for exactly `epochs` epochs with
/// no early stopping, returning the final parameters.
pub fn fine_tune(
    head: &TrainedHead,
    mask: &SparseMask,
    data: &FeatureDataset,
    epochs: usize,
    cfg: &TrainConfig,
) -> Result<TrainedHead> {
    cfg.validate()?;
    check_inputs(&head.arch, mask, data)?;
    let mut session = SgdSession::new(head.layers.clone(), mask.clone(), data, cfg);
    let mut step = 0;
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let loss = session.epoch(&mut step, |_, _, _| false);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        history.push(EpochStats {
            loss,
            train_accuracy: session.accuracy(),
        });
    }
    let train_accuracy = session.accuracy();
    Ok(TrainedHead {
        arch: head.arch.clone(),
        activation: head.activation,
        layers: session.layers,
        mask: mask.clone(),
        train_accuracy,
        test_accuracy: None,
        epochs_run: epochs,
        history,
    })
}

/// Fraction of test rows whose argmax prediction equals the label.
pub fn evaluate(head: &TrainedHead, test: &FeatureDataset) -> Result<f64> {
    if test.n_samples() == 0 {
        return Err(Error::EmptyTestSet);
    }
    if test.feature_dim() != head.arch.input_dim {
        return Err(Error::DimensionMismatch {
            location: "test set".into(),
            reason: format!(
                "feature_dim {} vs head input_dim {}",
                test.feature_dim(),
                head.arch.input_dim
            ),
        });
    }
    Ok(accuracy_of(&head.layers, head.activation, test))
}

pub const WEIGHT_MAGIC: &[u8; 4] = b"EPTW";

/// Serializes the head's parameters:
/// `"EPTW" | version u32 = 1 | layer count u32`, then per layer
/// `rows u32 | cols u32 | rows*cols f32 row-major | cols f32 biases`.
pub fn weights_to_bytes(layers: &[Layer<f32>]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHT_MAGIC);
    out.extend_from_slice(&1u32.to_le_bytes());
    out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for layer in layers {
        let (rows, cols) = layer.weights.dim();
        out.extend_from_slice(&(rows as u32).to_le_bytes());
        out.extend_from_slice(&(cols as u32).to_le_bytes());
        for v in layer.weights.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn weights_from_bytes(bytes: &[u8]) -> Result<Vec<Layer<f32>>> {
    let mut pos = 0usize;
    let mut take = |len: usize| -> Result<&[u8]> {
        let slice = bytes
            .get(pos..pos + len)
            .ok_or_else(|| Error::MalformedHeader {
                offset: pos as u64,
                reason: "truncated weight file".into(),
            })?;
        pos += len;
        Ok(slice)
    };
    if take(4)? != WEIGHT_MAGIC {
        return Err(Error::MalformedHeader {
            offset: 0,
            reason: "bad magic, expected EPTW".into(),
        });
    }
    let word = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap()) as usize;
    let version = word(take(4)?);
    if version != 1 {
        return Err(Error::MalformedHeader {
            offset: 4,
            reason: format!("unsupported version {version}"),
        });
    }
    let n_layers = word(take(4)?);
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let rows = word(take(4)?);
        let cols = word(take(4)?);
        let raw = take(4 * (rows * cols + cols))?;
        let vals: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        layers.push(Layer {
            weights: Array2::from_shape_vec((rows, cols), vals[..rows * cols].to_vec())
                .expect("sized"),
            bias: Array1::from(vals[rows * cols..].to_vec()),
        });
    }
    Ok(layers)
}

pub fn save_weights(head: &TrainedHead, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, weights_to_bytes(&head.layers)).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<Vec<Layer<f32>>> {
    let path = path.as_ref();
    weights_from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
