//! Binary chromosomes and their decoding into head masks.
//!
//! | kind              | genes                  | a zero gene removes                 |
//! |-------------------|------------------------|-------------------------------------|
//! | `Neurons{l}`      | width of hidden `l`    | every input weight of unit `i`      |
//! | `NeuronsBoth`     | width 1 + width 2      | as above, layer 1 units then 2      |
//! | `Connections{l}`  | inputs x units of `l`  | weight `(i, j)`, gene `i * units + j` |
//! | `FeatureSelection`| input dim `d`          | feature `i` (row `i` of layer 1)    |
//!
//! Layers not addressed by the kind, and the output layer, stay dense.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::net::{HeadArchitecture, SparseMask};
use crate::{Error, Result};

/// Which part of the head a chromosome controls. Layer indices are 1-based
/// hidden-layer numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EncodingKind {
    Neurons { layer: usize },
    NeuronsBoth,
    Connections { layer: usize },
    FeatureSelection,
}

impl EncodingKind {
    /// Gene count for this kind on `arch`.
    pub fn chromosome_len(self, arch: &HeadArchitecture) -> Result<usize> {
        let hidden = |layer: usize| {
            if layer == 0 || layer > arch.n_hidden() {
                Err(Error::InvalidArchitecture(format!(
                    "{self} addresses hidden layer {layer}, head has {}",
                    arch.n_hidden()
                )))
            } else {
                Ok(arch.hidden_sizes[layer - 1])
            }
        };
        match self {
            EncodingKind::Neurons { layer } => hidden(layer),
            EncodingKind::NeuronsBoth => {
                if arch.n_hidden() != 2 {
                    return Err(Error::InvalidArchitecture(format!(
                        "NB needs two hidden layers, head has {}",
                        arch.n_hidden()
                    )));
                }
                Ok(arch.hidden_sizes[0] + arch.hidden_sizes[1])
            }
            EncodingKind::Connections { layer } => {
                let units = hidden(layer)?;
                let inputs = if layer == 1 {
                    arch.input_dim
                } else {
                    arch.hidden_sizes[layer - 2]
                };
                Ok(inputs * units)
            }
            EncodingKind::FeatureSelection => Ok(arch.input_dim),
        }
    }

    pub fn tag(self) -> String {
        match self {
            EncodingKind::Neurons { layer } => format!("N{layer}"),
            EncodingKind::NeuronsBoth => "NB".into(),
            EncodingKind::Connections { layer } => format!("C{layer}"),
            EncodingKind::FeatureSelection => "FS".into(),
        }
    }
}

impl fmt::Display for EncodingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

impl FromStr for EncodingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let layer = |rest: &str| {
            rest.parse::<usize>()
                .ok()
                .filter(|&l| l >= 1)
                .ok_or_else(|| Error::ParseChromosome(format!("bad layer in kind {s:?}")))
        };
        match s {
            "NB" => Ok(EncodingKind::NeuronsBoth),
            "FS" => Ok(EncodingKind::FeatureSelection),
            _ if s.starts_with('N') => Ok(EncodingKind::Neurons {
                layer: layer(&s[1..])?,
            }),
            _ if s.starts_with('C') => Ok(EncodingKind::Connections {
                layer: layer(&s[1..])?,
            }),
            _ => Err(Error::ParseChromosome(format!("unknown kind {s:?}"))),
        }
    }
}

impl TryFrom<String> for EncodingKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<EncodingKind> for String {
    fn from(k: EncodingKind) -> String {
        k.tag()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Chromosome {
    pub genes: Vec<bool>,
    pub kind: EncodingKind,
}

impl Chromosome {
    pub fn new(kind: EncodingKind, genes: Vec<bool>) -> Self {
        Chromosome { genes, kind }
    }

    pub fn ones(kind: EncodingKind, len: usize) -> Self {
        Chromosome::new(kind, vec![true; len])
    }

    pub fn zeros(kind: EncodingKind, len: usize) -> Self {
        Chromosome::new(kind, vec![false; len])
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    pub fn bitstring(&self) -> String {
        self.genes
            .iter()
            .map(|&g| if g { '1' } else { '0' })
            .collect()
    }

    pub fn from_bitstring(kind: EncodingKind, bits: &str) -> Result<Self> {
        let genes = bits
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::ParseChromosome(format!(
                    "gene {other:?} is not 0 or 1"
                ))),
            })
            .collect::<Result<_>>()?;
        Ok(Chromosome::new(kind, genes))
    }
}

/// `<kind>:<bitstring>`, e.g. `N1:0110`.
impl fmt::Display for Chromosome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.bitstring())
    }
}

impl FromStr for Chromosome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, bits) = s
            .trim()
            .split_once(':')
            .ok_or_else(|| Error::ParseChromosome(format!("missing ':' in {s:?}")))?;
        Chromosome::from_bitstring(kind.parse()?, bits)
    }
}

/// `(ones, length)` of the gene vector.
pub fn active_counts(chrom: &Chromosome) -> (usize, usize) {
    (chrom.genes.iter().filter(|&&g| g).count(), chrom.len())
}

/// Number of positions at which two chromosomes of the same kind differ.
pub fn hamming(a: &Chromosome, b: &Chromosome) -> Result<usize> {
    if a.kind != b.kind {
        return Err(Error::KindMismatch(a.kind.tag(), b.kind.tag()));
    }
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            kind: a.kind.tag(),
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(hamming_genes(&a.genes, &b.genes))
}

pub(crate) fn hamming_genes(a: &[bool], b: &[bool]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Turns a chromosome into the mask it encodes for `arch`.
pub fn decode(chrom: &Chromosome, arch: &HeadArchitecture) -> Result<SparseMask> {
    let expected = chrom.kind.chromosome_len(arch)?;
    if chrom.len() != expected {
        return Err(Error::LengthMismatch {
            kind: chrom.kind.tag(),
            expected,
            actual: chrom.len(),
        });
    }
    let mut mask = SparseMask::dense(arch);
    let kill_columns = |mask: &mut SparseMask, layer: usize, genes: &[bool]| {
        let m = mask.layer_mut(layer);
        for (j, &g) in genes.iter().enumerate() {
            if !g {
                m.column_mut(j).fill(0.0);
            }
        }
    };
    match chrom.kind {
        EncodingKind::Neurons { layer } => kill_columns(&mut mask, layer - 1, &chrom.genes),
        EncodingKind::NeuronsBoth => {
            let (first, second) = chrom.genes.split_at(arch.hidden_sizes[0]);
            kill_columns(&mut mask, 0, first);
            kill_columns(&mut mask, 1, second);
        }
        EncodingKind::Connections { layer } => {
            let m = mask.layer_mut(layer - 1);
            for (slot, &g) in m.iter_mut().zip(&chrom.genes) {
                if !g {
                    *slot = 0.0;
                }
            }
        }
        EncodingKind::FeatureSelection => {
            let m = mask.layer_mut(0);
            for (i, &g) in chrom.genes.iter().enumerate() {
                if !g {
                    m.row_mut(i).fill(0.0);
                }
            }
        }
    }
    Ok(mask)
}
