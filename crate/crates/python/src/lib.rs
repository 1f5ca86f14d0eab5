//! Python bindings: datasets, chromosomes, head training, the GA loop with a
//! Python fitness callable, the decay schedule and the experiment harness.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use evoprune_core::baselines::{self, DecaySchedule};
use evoprune_core::dataset::{self, DatasetFormat, FeatureDataset};
use evoprune_core::encoding::{self, EncodingKind};
use evoprune_core::evo::{self, FitnessRecord, GaConfig};
use evoprune_core::harness::{self, RunConfig};
use evoprune_core::ndarray::Array2;
use evoprune_core::net::{self, HeadArchitecture, SparseMask, TrainConfig, TrainedHead};
use evoprune_core::synth::{self, SyntheticSpec};
use evoprune_core::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_format(format: Option<&str>, path: &std::path::Path) -> PyResult<DatasetFormat> {
    match format {
        Some(f) => f.parse().map_err(to_py),
        None => Ok(DatasetFormat::from_path(path)),
    }
}

/// Feature matrix with integer labels.
#[pyclass(name = "Dataset", module = "evoprune", frozen, from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: FeatureDataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (features, labels, n_classes=None, name="dataset"))]
    fn new(
        features: Vec<Vec<f32>>,
        labels: Vec<usize>,
        n_classes: Option<usize>,
        name: &str,
    ) -> PyResult<Self> {
        let d = features.first().map_or(0, Vec::len);
        if features.iter().any(|r| r.len() != d) {
            return Err(PyValueError::new_err("feature rows have different lengths"));
        }
        let n = features.len();
        let flat: Vec<f32> = features.into_iter().flatten().collect();
        let x = Array2::from_shape_vec((n, d), flat)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let c = n_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
        let inner = FeatureDataset::new(name, x, labels, c).map_err(to_py)?;
        Ok(PyDataset { inner })
    }

    /// Loads a binary feature file or a CSV.
    #[staticmethod]
    #[pyo3(signature = (path, format=None))]
    fn load(path: PathBuf, format: Option<&str>) -> PyResult<Self> {
        let format = parse_format(format, &path)?;
        let inner = dataset::load_dataset(&path, format).map_err(to_py)?;
        Ok(PyDataset { inner })
    }

    #[pyo3(signature = (path, format=None))]
    fn save(&self, path: PathBuf, format: Option<&str>) -> PyResult<()> {
        match parse_format(format, &path)? {
            DatasetFormat::Binary => self.inner.save_binary(&path),
            DatasetFormat::Csv => self.inner.save_csv(&path),
        }
        .map_err(to_py)
    }

    #[getter]
    fn n_samples(&self) -> usize {
        self.inner.n_samples()
    }

    #[getter]
    fn feature_dim(&self) -> usize {
        self.inner.feature_dim()
    }

    #[getter]
    fn n_classes(&self) -> usize {
        self.inner.n_classes()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels().to_vec()
    }

    fn features(&self) -> Vec<Vec<f32>> {
        self.inner
            .features()
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect()
    }

    fn class_counts(&self) -> Vec<usize> {
        self.inner.class_counts()
    }

    fn subset(&self, indices: Vec<usize>) -> PyResult<Self> {
        let n = self.inner.n_samples();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(PyValueError::new_err(format!(
                "index {bad} out of range for {n} samples"
            )));
        }
        let name = self.inner.name().to_string();
        Ok(PyDataset {
            inner: self.inner.subset(&indices, name),
        })
    }

    /// Stratified k-fold split; returns `(train, test)` for one fold.
    fn fold(&self, k: usize, seed: u64, index: usize) -> PyResult<(Self, Self)> {
        let (a, b) = dataset::make_fold(&self.inner, k, seed, index).map_err(to_py)?;
        Ok((PyDataset { inner: a }, PyDataset { inner: b }))
    }

    fn __len__(&self) -> usize {
        self.inner.n_samples()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(name={:?}, n={}, d={}, C={})",
            self.inner.name(),
            self.inner.n_samples(),
            self.inner.feature_dim(),
            self.inner.n_classes()
        )
    }
}

/// Binary chromosome tagged with its encoding, e.g. `N1:1011`.
#[pyclass(
    name = "Chromosome",
    module = "evoprune",
    frozen,
    eq,
    hash,
    from_py_object
)]
#[derive(Clone, PartialEq, Eq, Hash)]
struct PyChromosome {
    inner: encoding::Chromosome,
}

fn parse_kind(kind: &str) -> PyResult<EncodingKind> {
    kind.parse().map_err(to_py)
}

#[pymethods]
impl PyChromosome {
    #[new]
    fn new(kind: &str, genes: Vec<bool>) -> PyResult<Self> {
        Ok(PyChromosome {
            inner: encoding::Chromosome::new(parse_kind(kind)?, genes),
        })
    }

    /// Parses the `<kind>:<bits>` text form.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PyChromosome {
            inner: text.parse().map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn ones(kind: &str, length: usize) -> PyResult<Self> {
        Ok(PyChromosome {
            inner: encoding::Chromosome::ones(parse_kind(kind)?, length),
        })
    }

    #[staticmethod]
    fn zeros(kind: &str, length: usize) -> PyResult<Self> {
        Ok(PyChromosome {
            inner: encoding::Chromosome::zeros(parse_kind(kind)?, length),
        })
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind.tag()
    }

    #[getter]
    fn genes(&self) -> Vec<bool> {
        self.inner.genes.clone()
    }

    fn bitstring(&self) -> String {
        self.inner.bitstring()
    }

    /// `(active, total)` gene counts.
    fn active_counts(&self) -> (usize, usize) {
        encoding::active_counts(&self.inner)
    }

    fn hamming(&self, other: &PyChromosome) -> PyResult<usize> {
        encoding::hamming(&self.inner, &other.inner).map_err(to_py)
    }

    /// Per-layer 0/1 masks for a head of the given shape.
    fn decode(
        &self,
        input_dim: usize,
        hidden_sizes: Vec<usize>,
        n_classes: usize,
    ) -> PyResult<Vec<Vec<Vec<f32>>>> {
        let arch = HeadArchitecture::new(input_dim, hidden_sizes, n_classes).map_err(to_py)?;
        let mask = encoding::decode(&self.inner, &arch).map_err(to_py)?;
        Ok(mask_to_lists(&mask))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Chromosome({:?})", self.inner.to_string())
    }
}

/// Length of a chromosome of `kind` for the given head shape.
#[pyfunction]
fn chromosome_length(
    kind: &str,
    input_dim: usize,
    hidden_sizes: Vec<usize>,
    n_classes: usize,
) -> PyResult<usize> {
    let arch = HeadArchitecture::new(input_dim, hidden_sizes, n_classes).map_err(to_py)?;
    parse_kind(kind)?.chromosome_len(&arch).map_err(to_py)
}

fn mask_to_lists(mask: &SparseMask) -> Vec<Vec<Vec<f32>>> {
    mask.layers()
        .iter()
        .map(|l| l.rows().into_iter().map(|r| r.to_vec()).collect())
        .collect()
}

/// A trained masked head.
#[pyclass(name = "Head", module = "evoprune", frozen)]
struct PyHead {
    inner: TrainedHead,
}

#[pymethods]
impl PyHead {
    #[getter]
    fn train_accuracy(&self) -> f64 {
        self.inner.train_accuracy
    }

    #[getter]
    fn epochs_run(&self) -> usize {
        self.inner.epochs_run
    }

    #[getter]
    fn hidden_sizes(&self) -> Vec<usize> {
        self.inner.arch.hidden_sizes.clone()
    }

    #[getter]
    fn live_hidden_units(&self) -> usize {
        self.inner.live_hidden_units()
    }

    /// `(loss, train_accuracy)` per epoch.
    fn history(&self) -> Vec<(f64, f64)> {
        self.inner
            .history
            .iter()
            .map(|s| (s.loss, s.train_accuracy))
            .collect()
    }

    fn mask(&self) -> Vec<Vec<Vec<f32>>> {
        mask_to_lists(&self.inner.mask)
    }

    /// `(weights, bias)` per layer; weights are `(inputs, units)`.
    fn weights(&self) -> Vec<(Vec<Vec<f32>>, Vec<f32>)> {
        self.inner
            .layers
            .iter()
            .map(|l| {
                (
                    l.weights.rows().into_iter().map(|r| r.to_vec()).collect(),
                    l.bias.to_vec(),
                )
            })
            .collect()
    }

    fn evaluate(&self, py: Python<'_>, data: &PyDataset) -> PyResult<f64> {
        py.detach(|| net::evaluate(&self.inner, &data.inner))
            .map_err(to_py)
    }

    fn predict(&self, data: &PyDataset) -> Vec<usize> {
        self.inner.predict(data.inner.features().view())
    }

    fn save_weights(&self, path: PathBuf) -> PyResult<()> {
        net::save_weights(&self.inner, path).map_err(to_py)
    }
}

#[allow(clippy::too_many_arguments)]
fn train_config(
    learning_rate: f32,
    batch_size: usize,
    max_epochs: usize,
    patience: usize,
    seed: u64,
    activation: &str,
) -> PyResult<TrainConfig> {
    let activation = match activation.to_ascii_lowercase().as_str() {
        "relu" => net::Activation::Relu,
        "tanh" => net::Activation::Tanh,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown activation {other:?}"
            )))
        }
    };
    Ok(TrainConfig {
        learning_rate,
        batch_size,
        max_epochs,
        patience,
        seed,
        activation,
    })
}

/// Trains a head on `data`, masked by `chromosome` when given.
#[pyfunction]
#[pyo3(signature = (data, hidden_sizes, chromosome=None, learning_rate=0.01, batch_size=32, max_epochs=600, patience=10, seed=0, activation="relu"))]
#[allow(clippy::too_many_arguments)]
fn train_head(
    py: Python<'_>,
    data: &PyDataset,
    hidden_sizes: Vec<usize>,
    chromosome: Option<&PyChromosome>,
    learning_rate: f32,
    batch_size: usize,
    max_epochs: usize,
    patience: usize,
    seed: u64,
    activation: &str,
) -> PyResult<PyHead> {
    let cfg = train_config(
        learning_rate,
        batch_size,
        max_epochs,
        patience,
        seed,
        activation,
    )?;
    let arch = HeadArchitecture::for_dataset(&data.inner, hidden_sizes).map_err(to_py)?;
    let mask = match chromosome {
        Some(c) => encoding::decode(&c.inner, &arch).map_err(to_py)?,
        None => SparseMask::dense(&arch),
    };
    let inner = py
        .detach(|| net::train(&arch, &mask, &data.inner, &cfg))
        .map_err(to_py)?;
    Ok(PyHead { inner })
}

fn record_dict<'py>(py: Python<'py>, r: &FitnessRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("eval_index", r.eval_index)?;
    d.set_item("fitness", r.fitness)?;
    d.set_item("active", r.active)?;
    d.set_item("total", r.chromosome.len())?;
    d.set_item("chromosome", r.chromosome.to_string())?;
    d.set_item("seed", r.seed_used)?;
    Ok(d)
}

/// Runs the steady-state GA. `fitness(chromosome, seed) -> float` is called
/// once per evaluation; the result dict holds `best` and `history`.
#[pyfunction]
#[pyo3(signature = (kind, length, fitness, population_size=30, max_evals=200, nam_candidates=3, p_mut=0.07, p_one=0.5, seed=0))]
#[allow(clippy::too_many_arguments)]
fn run_ga<'py>(
    py: Python<'py>,
    kind: &str,
    length: usize,
    fitness: Py<PyAny>,
    population_size: usize,
    max_evals: usize,
    nam_candidates: usize,
    p_mut: f64,
    p_one: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = GaConfig {
        population_size,
        max_evals,
        nam_candidates,
        p_mut,
        p_one,
        seed,
    };
    let kind = parse_kind(kind)?;
    let call = |c: &encoding::Chromosome, s: u64| -> evoprune_core::Result<f64> {
        Python::attach(|py| {
            let chrom = Py::new(py, PyChromosome { inner: c.clone() })?;
            fitness.call1(py, (chrom, s))?.extract::<f64>(py)
        })
        .map_err(|e: PyErr| Error::Other(e.to_string()))
    };
    let outcome = py
        .detach(|| evo::run(&cfg, kind, length, &call))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("best", record_dict(py, &outcome.best)?)?;
    let history = outcome
        .history
        .iter()
        .map(|r| record_dict(py, r))
        .collect::<PyResult<Vec<_>>>()?;
    out.set_item("history", history)?;
    Ok(out)
}

/// Target sparsity of the polynomial decay schedule at `step`.
#[pyfunction]
#[pyo3(signature = (step, initial_sparsity, final_sparsity, start_step, end_step, frequency=1, exponent=3.0))]
fn sparsity_at(
    step: u64,
    initial_sparsity: f64,
    final_sparsity: f64,
    start_step: u64,
    end_step: u64,
    frequency: u64,
    exponent: f64,
) -> PyResult<f64> {
    let sched = DecaySchedule {
        initial_sparsity,
        final_sparsity,
        start_step,
        end_step,
        frequency,
        exponent,
        batches_per_epoch: 1,
    };
    baselines::sparsity_at(&sched, step).map_err(to_py)
}

/// Runs an experiment from a JSON config file (or a JSON string when
/// `from_string` is set) and returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (config, from_string=false, out_dir=None))]
fn run_experiment<'py>(
    py: Python<'py>,
    config: &str,
    from_string: bool,
    out_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg: RunConfig = if from_string {
        RunConfig::from_json(config).map_err(to_py)?
    } else {
        RunConfig::from_file(config).map_err(to_py)?
    };
    if let Some(o) = out_dir {
        cfg.out_dir = o;
    }
    let report = py.detach(|| harness::run_experiment(&cfg)).map_err(to_py)?;
    let json = py.import("json")?;
    json.call_method1("loads", (report.to_json(),))
}

/// Gaussian-cluster `(train, test)` pair for quick experiments.
#[pyfunction]
#[pyo3(signature = (n_classes=3, feature_dim=64, informative=8, n_train=600, n_test=300, separation=0.6, seed=0))]
fn synthetic(
    n_classes: usize,
    feature_dim: usize,
    informative: usize,
    n_train: usize,
    n_test: usize,
    separation: f32,
    seed: u64,
) -> PyResult<(PyDataset, PyDataset)> {
    let spec = SyntheticSpec {
        n_classes,
        feature_dim,
        informative,
        n_train,
        n_test,
        separation,
        seed,
    };
    let (a, b) = synth::generate(&spec).map_err(to_py)?;
    Ok((PyDataset { inner: a }, PyDataset { inner: b }))
}

#[pymodule]
fn evoprune(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyChromosome>()?;
    m.add_class::<PyHead>()?;
    m.add_function(wrap_pyfunction!(chromosome_length, m)?)?;
    m.add_function(wrap_pyfunction!(train_head, m)?)?;
    m.add_function(wrap_pyfunction!(run_ga, m)?)?;
    m.add_function(wrap_pyfunction!(sparsity_at, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
