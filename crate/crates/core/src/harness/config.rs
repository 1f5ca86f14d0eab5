use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetFormat, SplitSpec};
use crate::encoding::EncodingKind;
use crate::evo::GaConfig;
use crate::net::TrainConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "reference-dense")]
    ReferenceDense,
    #[serde(rename = "reference-grid")]
    ReferenceGrid,
    #[serde(rename = "evolve-neurons-L1")]
    EvolveNeuronsL1,
    #[serde(rename = "evolve-neurons-L2")]
    EvolveNeuronsL2,
    #[serde(rename = "evolve-both")]
    EvolveBoth,
    #[serde(rename = "evolve-connections")]
    EvolveConnections,
    #[serde(rename = "evolve-fs")]
    EvolveFs,
    #[serde(rename = "baseline-weight")]
    BaselineWeight,
    #[serde(rename = "baseline-neuron")]
    BaselineNeuron,
    #[serde(rename = "baseline-polydecay")]
    BaselinePolydecay,
}

impl Mode {
    /// Report column order.
    pub const ALL: [Mode; 10] = [
        Mode::ReferenceDense,
        Mode::ReferenceGrid,
        Mode::EvolveNeuronsL1,
        Mode::EvolveNeuronsL2,
        Mode::EvolveBoth,
        Mode::EvolveConnections,
        Mode::EvolveFs,
        Mode::BaselineWeight,
        Mode::BaselineNeuron,
        Mode::BaselinePolydecay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::ReferenceDense => "reference-dense",
            Mode::ReferenceGrid => "reference-grid",
            Mode::EvolveNeuronsL1 => "evolve-neurons-L1",
            Mode::EvolveNeuronsL2 => "evolve-neurons-L2",
            Mode::EvolveBoth => "evolve-both",
            Mode::EvolveConnections => "evolve-connections",
            Mode::EvolveFs => "evolve-fs",
            Mode::BaselineWeight => "baseline-weight",
            Mode::BaselineNeuron => "baseline-neuron",
            Mode::BaselinePolydecay => "baseline-polydecay",
        }
    }

    pub fn is_evolve(self) -> bool {
        self.encoding(1).is_some()
    }

    pub fn is_baseline(self) -> bool {
        matches!(
            self,
            Mode::BaselineWeight | Mode::BaselineNeuron | Mode::BaselinePolydecay
        )
    }

    pub fn is_reference(self) -> bool {
        matches!(self, Mode::ReferenceDense | Mode::ReferenceGrid)
    }

    /// Chromosome kind searched by an evolve mode.
    pub fn encoding(self, connection_layer: usize) -> Option<EncodingKind> {
        match self {
            Mode::EvolveNeuronsL1 => Some(EncodingKind::Neurons { layer: 1 }),
            Mode::EvolveNeuronsL2 => Some(EncodingKind::Neurons { layer: 2 }),
            Mode::EvolveBoth => Some(EncodingKind::NeuronsBoth),
            Mode::EvolveConnections => Some(EncodingKind::Connections {
                layer: connection_layer,
            }),
            Mode::EvolveFs => Some(EncodingKind::FeatureSelection),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<_> = Mode::ALL.iter().map(|m| m.name()).collect();
                Error::InvalidConfig(format!(
                    "unknown mode {s:?}; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<DatasetFormat>,
    /// A separate file holding the predefined test partition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_path: Option<PathBuf>,
    /// Label used in reports; defaults to the file stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl DatasetConfig {
    pub fn format(&self) -> DatasetFormat {
        self.format
            .unwrap_or_else(|| DatasetFormat::from_path(&self.path))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    /// Target sparsity; resolved from `reference_report` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<f64>,
    /// A GA run's `report.json` (or its directory).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_report: Option<PathBuf>,
    /// 1-based hidden layers to prune.
    pub target_layers: Vec<usize>,
    pub finetune_epochs: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            sparsity: None,
            reference_report: None,
            target_layers: vec![1],
            finetune_epochs: 25,
        }
    }
}

/// Polynomial decay parameters in epochs; converted to steps once the
/// number of batches per epoch is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecayConfig {
    pub initial_sparsity: f64,
    pub start_epoch: u64,
    pub end_epochs: u64,
    pub frequency_epochs: u64,
    pub exponent: f64,
    pub cumulative: bool,
}

impl Default for DecayConfig {
    fn default() -> Self {
        DecayConfig {
            initial_sparsity: 0.1,
            start_epoch: 0,
            end_epochs: 25,
            frequency_epochs: 5,
            exponent: 3.0,
            cumulative: true,
        }
    }
}

fn default_hidden() -> Vec<usize> {
    vec![512]
}

fn default_runs() -> usize {
    5
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_connection_layer() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSpec>,
    #[serde(default = "default_hidden")]
    pub hidden_sizes: Vec<usize>,
    pub mode: Mode,
    #[serde(default)]
    pub ga: GaConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_connection_layer")]
    pub connection_layer: usize,
    #[serde(default)]
    pub baseline: BaselineConfig,
    #[serde(default)]
    pub decay: DecayConfig,
    #[serde(default = "default_runs")]
    pub n_runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub save_weights: bool,
}

impl RunConfig {
    pub fn new(dataset: DatasetConfig, mode: Mode) -> Self {
        RunConfig {
            dataset,
            split: None,
            hidden_sizes: default_hidden(),
            mode,
            ga: GaConfig::default(),
            train: TrainConfig::default(),
            connection_layer: 1,
            baseline: BaselineConfig::default(),
            decay: DecayConfig::default(),
            n_runs: default_runs(),
            seed: 0,
            out_dir: default_out(),
            save_weights: false,
        }
    }

    /// Reads a JSON config. Relative dataset and report paths are resolved
    /// against the config file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            let fix = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            fix(&mut cfg.dataset.path);
            if let Some(p) = cfg.dataset.test_path.as_mut() {
                fix(p);
            }
            if let Some(p) = cfg.baseline.reference_report.as_mut() {
                fix(p);
            }
        }
        Ok(cfg)
    }

    /// Parses a JSON config; relative paths stay relative to the working directory.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_runs == 0 {
            return Err(Error::InvalidConfig("n_runs must be >= 1".into()));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.len() > 2 {
            return Err(Error::InvalidConfig(
                "hidden_sizes must list one or two layer widths".into(),
            ));
        }
        self.train.validate()?;
        let n_hidden = self.hidden_sizes.len();
        match self.mode {
            Mode::EvolveNeuronsL2 | Mode::EvolveBoth if n_hidden != 2 => {
                return Err(Error::InvalidConfig(format!(
                    "mode {} needs a two-layer head, hidden_sizes has {n_hidden}",
                    self.mode
                )));
            }
            Mode::EvolveConnections
                if self.connection_layer == 0 || self.connection_layer > n_hidden =>
            {
                return Err(Error::InvalidConfig(format!(
                    "connection_layer {} does not exist",
                    self.connection_layer
                )));
            }
            _ => {}
        }
        if self.mode.is_evolve() {
            self.ga.validate()?;
        }
        if self.mode.is_baseline() {
            let b = &self.baseline;
            if b.target_layers.is_empty() || b.target_layers.iter().any(|&l| l == 0 || l > n_hidden)
            {
                return Err(Error::InvalidConfig(format!(
                    "baseline target_layers {:?} invalid for {n_hidden} hidden layer(s)",
                    b.target_layers
                )));
            }
            if b.sparsity.is_none() && b.reference_report.is_none() {
                return Err(Error::MissingReport(
                    "baseline modes need baseline.sparsity or baseline.reference_report".into(),
                ));
            }
            if let Some(s) = b.sparsity {
                if !(0.0..1.0).contains(&s) {
                    return Err(Error::InvalidConfig(format!(
                        "baseline sparsity {s} not in [0, 1)"
                    )));
                }
            }
        }
        if self.mode == Mode::BaselinePolydecay {
            let d = &self.decay;
            if d.frequency_epochs == 0
                || d.start_epoch >= d.end_epochs
                || d.exponent.is_nan()
                || d.exponent <= 0.0
            {
                return Err(Error::InvalidConfig("invalid decay schedule".into()));
            }
        }
        if self.split.is_some() && self.dataset.test_path.is_some() {
            return Err(Error::InvalidConfig(
                "give either split or dataset.test_path, not both".into(),
            ));
        }
        if self.split.is_none() && self.dataset.test_path.is_none() {
            return Err(Error::InvalidConfig(
                "no test partition: set split or dataset.test_path".into(),
            ));
        }
        Ok(())
    }
}
