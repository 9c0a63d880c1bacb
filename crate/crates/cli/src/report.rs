//! Result files written by the commands and read back by `evaluate`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use decontam::demix::DemixTraceRecord;
use decontam::finite::FiniteTraceRecord;
use decontam::measure::SignedMixtureEstimate;
use decontam::partial::PartialLabelTraceRecord;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub source: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub components: Vec<Component>,
    pub dependency_set: Vec<usize>,
}

impl From<&SignedMixtureEstimate> for EstimateReport {
    fn from(e: &SignedMixtureEstimate) -> Self {
        Self {
            components: e
                .components()
                .iter()
                .map(|&(source, weight)| Component { source, weight })
                .collect(),
            dependency_set: e.dependency_set(),
        }
    }
}

impl EstimateReport {
    pub fn to_estimate(&self) -> decontam::Result<SignedMixtureEstimate> {
        SignedMixtureEstimate::new(self.components.iter().map(|c| (c.source, c.weight)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaReport {
    pub kappa: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nus: Option<Vec<f64>>,
    pub residue_weights: Option<Vec<Component>>,
    pub dependency_set: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Trace {
    Exact(Vec<ExactTraceRow>),
    Estimated(Vec<EstimatedTraceRow>),
    Labels(Vec<LabelTraceRow>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactTraceRow {
    pub level: usize,
    pub n: usize,
    pub nu: f64,
    pub face_test: bool,
    pub residues: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatedTraceRow {
    pub level: usize,
    pub n: usize,
    pub epsilon: f64,
    pub face_test: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelTraceRow {
    pub k: usize,
    pub residues_built: bool,
    pub accepted: bool,
}

impl From<&DemixTraceRecord> for ExactTraceRow {
    fn from(r: &DemixTraceRecord) -> Self {
        Self {
            level: r.level,
            n: r.n,
            nu: r.nu,
            face_test: r.face_test,
            residues: r.residues.clone(),
        }
    }
}

impl From<&FiniteTraceRecord> for EstimatedTraceRow {
    fn from(r: &FiniteTraceRecord) -> Self {
        Self {
            level: r.level,
            n: r.n,
            epsilon: r.epsilon,
            face_test: r.face_test,
        }
    }
}

impl From<&PartialLabelTraceRecord> for LabelTraceRow {
    fn from(r: &PartialLabelTraceRecord) -> Self {
        Self {
            k: r.k,
            residues_built: r.residues_built,
            accepted: r.accepted,
        }
    }
}

/// Output of `demix` and `partial-label`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub engine: String,
    pub seed: u64,
    /// Recovered distributions over the dataset atoms (exact engine).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bases: Option<Vec<Vec<f64>>>,
    /// Signed combinations of the sources (empirical engine).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimates: Option<Vec<EstimateReport>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<u8>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pure_rows: Option<Vec<usize>>,
    #[serde(default)]
    pub experimental: bool,
    pub assumptions: BTreeMap<String, String>,
    pub trace: Trace,
}

pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// CSV with one row per trace record (exact traces: one row per residue).
pub fn trace_csv(trace: &Trace) -> String {
    let mut out = String::new();
    match trace {
        Trace::Exact(rows) => {
            out.push_str("level,n,nu,face_test,residue,coords\n");
            for r in rows {
                for (i, c) in r.residues.iter().enumerate() {
                    let coords: Vec<String> = c.iter().map(|&x| fmt_f64(x)).collect();
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{}",
                        r.level,
                        r.n,
                        fmt_f64(r.nu),
                        r.face_test,
                        i,
                        coords.join(" ")
                    );
                }
            }
        }
        Trace::Estimated(rows) => {
            out.push_str("level,n,epsilon,face_test\n");
            for r in rows {
                let _ = writeln!(out, "{},{},{},{}", r.level, r.n, fmt_f64(r.epsilon), r.face_test);
            }
        }
        Trace::Labels(rows) => {
            out.push_str("k,residues_built,accepted\n");
            for r in rows {
                let _ = writeln!(out, "{},{},{}", r.k, r.residues_built, r.accepted);
            }
        }
    }
    out
}

/// Per-estimate score rows.
pub fn score_csv(score: &decontam::harness::AlignmentScore) -> String {
    let mut out = String::from("estimate,base,distance\n");
    for (i, (&j, &d)) in score.permutation.iter().zip(&score.distances).enumerate() {
        let _ = writeln!(out, "{i},{j},{}", fmt_f64(d));
    }
    out
}

/// Sweep rows: one per base per trial; failed trials get infinite distances.
pub fn sweep_csv(results: &[decontam::harness::TrialResult], l: usize) -> String {
    let mut out = String::from("n,seed,base,distance,error\n");
    for r in results {
        let n = r.n.map(|n| n.to_string()).unwrap_or_default();
        match &r.score {
            Some(s) => {
                for (&base, &d) in s.permutation.iter().zip(&s.distances) {
                    let _ = writeln!(out, "{n},{},{base},{},", r.seed, fmt_f64(d));
                }
            }
            None => {
                let err = csv_field(r.error.as_deref().unwrap_or(""));
                for base in 0..l {
                    let _ = writeln!(out, "{n},{},{base},inf,{err}", r.seed);
                }
            }
        }
    }
    out
}
