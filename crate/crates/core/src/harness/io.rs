//! Dataset files and full-precision JSON output.

use std::io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{DiscreteDistribution, EmpiricalDistribution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSource {
    pub index: usize,
    pub points: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousDataset {
    pub dim: usize,
    pub sources: Vec<PointSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomSource {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDataset {
    pub atoms: Vec<String>,
    pub sources: Vec<AtomSource>,
}

/// Either point samples in R^d or distributions over a finite atom list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Dataset {
    Continuous(ContinuousDataset),
    Discrete(DiscreteDataset),
}

/// Positions that put sources in index order; indices must be a permutation of 0..M.
fn index_order(indices: &[usize]) -> Result<Vec<usize>> {
    let m = indices.len();
    let mut pos = vec![usize::MAX; m];
    for (p, &i) in indices.iter().enumerate() {
        if i >= m || pos[i] != usize::MAX {
            return Err(Error::Input(format!(
                "source indices must be a permutation of 0..{m}, found {i}"
            )));
        }
        pos[i] = p;
    }
    Ok(pos)
}

impl Dataset {
    pub fn num_sources(&self) -> usize {
        match self {
            Dataset::Continuous(d) => d.sources.len(),
            Dataset::Discrete(d) => d.sources.len(),
        }
    }
}

impl ContinuousDataset {
    /// Samples in source-index order.
    pub fn to_empirical(&self) -> Result<Vec<EmpiricalDistribution>> {
        if self.sources.is_empty() {
            return Err(Error::Input("dataset has no sources".into()));
        }
        let order = index_order(&self.sources.iter().map(|s| s.index).collect::<Vec<_>>())?;
        order
            .into_iter()
            .map(|p| {
                let s = &self.sources[p];
                let e = EmpiricalDistribution::new(s.index, s.points.clone())?;
                if e.dim() != self.dim {
                    return Err(Error::Input(format!(
                        "source {} has dimension {}, dataset declares {}",
                        s.index,
                        e.dim(),
                        self.dim
                    )));
                }
                Ok(e)
            })
            .collect()
    }
}

impl DiscreteDataset {
    /// Distributions in source-index order, with sample sizes (`None` for exact masses).
    pub fn to_distributions(&self) -> Result<(Vec<DiscreteDistribution>, Vec<Option<usize>>)> {
        if self.sources.is_empty() {
            return Err(Error::Input("dataset has no sources".into()));
        }
        let atoms: Vec<u64> = (0..self.atoms.len() as u64).collect();
        let order = index_order(&self.sources.iter().map(|s| s.index).collect::<Vec<_>>())?;
        let mut dists = Vec::with_capacity(order.len());
        let mut sizes = Vec::with_capacity(order.len());
        for p in order {
            let s = &self.sources[p];
            match (&s.mass, &s.counts) {
                (Some(m), None) => {
                    if m.len() != atoms.len() {
                        return Err(Error::Input(format!("source {}: mass length mismatch", s.index)));
                    }
                    dists.push(DiscreteDistribution::new(atoms.clone(), m.clone())?);
                    sizes.push(None);
                }
                (None, Some(c)) => {
                    if c.len() != atoms.len() {
                        return Err(Error::Input(format!("source {}: counts length mismatch", s.index)));
                    }
                    dists.push(DiscreteDistribution::from_counts(atoms.clone(), c)?);
                    sizes.push(Some(c.iter().sum::<u64>() as usize));
                }
                _ => {
                    return Err(Error::Input(format!(
                        "source {} must give exactly one of mass or counts",
                        s.index
                    )))
                }
            }
        }
        Ok((dists, sizes))
    }
}

/// JSON formatter that writes every float with 17 significant digits.
#[derive(Debug, Clone, Copy, Default)]
pub struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value == 0.0 {
            // keeps the sign of negative zero out of the output
            return writer.write_all(b"0.0");
        }
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Compact JSON with full-precision floats.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Input(format!("serialization failed: {e}")))?;
    Ok(String::from_utf8(buf).expect("JSON output is UTF-8"))
}

pub fn from_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Input(format!("malformed JSON: {e}")))
}
