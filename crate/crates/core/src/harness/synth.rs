//! Synthetic contamination instances with known bases.

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as NormalCdf};

use super::io::{AtomSource, ContinuousDataset, Dataset, DiscreteDataset, PointSource};
use crate::error::{Error, Result};
use crate::kappa::check_joint_irreducibility;
use crate::measure::DiscreteDistribution;
use crate::partial::{check_condition_c, check_condition_d, PartialLabelMatrix};
use crate::rng::dirichlet_uniform;

pub const DEFAULT_ORACLE_SIZE: usize = 100_000;
pub const MAX_MIXING_RETRIES: usize = 1000;
pub const MAX_LABEL_REJECTIONS: usize = 10_000;
/// Smallest exclusive-region mass accepted for a truncated Gaussian base.
pub const MIN_EXCLUSIVE_MASS: f64 = 0.01;
const RANK_TOL: f64 = 1e-10;

// independent random streams of one seed
const STREAM_BASES: u64 = 1;
const STREAM_MIXING: u64 = 2;
const STREAM_LABELS: u64 = 3;
const STREAM_TRAINING: u64 = 4;
const STREAM_ORACLE: u64 = 5;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Interval on the first coordinate; `None` ends are infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slab {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl Slab {
    fn lo(&self) -> f64 {
        self.lo.unwrap_or(f64::NEG_INFINITY)
    }

    fn hi(&self) -> f64 {
        self.hi.unwrap_or(f64::INFINITY)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo() <= x && x <= self.hi()
    }

    fn overlaps(&self, other: &Slab) -> bool {
        self.lo() <= other.hi() && other.lo() <= self.hi()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseSpec {
    /// Base j puts mass on its own anchor atom j plus shared atoms L..atoms.
    AnchoredDiscrete { atoms: usize },
    /// Isotropic Gaussian j with every other base's exclusive slab removed.
    TruncatedGaussian {
        means: Vec<Vec<f64>>,
        sigmas: Vec<f64>,
        exclusive_slabs: Vec<Slab>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixingSpec {
    Matrix(Vec<Vec<f64>>),
    Random { min_singular_value: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSpec {
    #[default]
    None,
    Matrix(PartialLabelMatrix),
    Random,
}

fn default_oracle_size() -> usize {
    DEFAULT_ORACLE_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub bases: BaseSpec,
    pub mixing: MixingSpec,
    #[serde(default)]
    pub labels: LabelSpec,
    /// Points per source; `None` emits exact masses (discrete bases only).
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "default_oracle_size")]
    pub n_oracle: usize,
    pub seed: u64,
}

impl InstanceSpec {
    /// Two unit-variance Gaussians at -2 and 2 on the line.
    pub fn gaussian_pair(n: usize, seed: u64) -> Self {
        Self {
            l: 2,
            m: 2,
            bases: BaseSpec::TruncatedGaussian {
                means: vec![vec![-2.0], vec![2.0]],
                sigmas: vec![1.0, 1.0],
                exclusive_slabs: vec![
                    Slab { lo: None, hi: Some(-2.0) },
                    Slab { lo: Some(2.0), hi: None },
                ],
            },
            mixing: MixingSpec::Random { min_singular_value: 0.2 },
            labels: LabelSpec::None,
            n: Some(n),
            n_oracle: DEFAULT_ORACLE_SIZE,
            seed,
        }
    }

    /// Three unit-variance Gaussians at -3, 0 and 3 on the line.
    pub fn gaussian_triple(n: usize, seed: u64) -> Self {
        Self {
            l: 3,
            m: 3,
            bases: BaseSpec::TruncatedGaussian {
                means: vec![vec![-3.0], vec![0.0], vec![3.0]],
                sigmas: vec![1.0, 1.0, 1.0],
                exclusive_slabs: vec![
                    Slab { lo: None, hi: Some(-3.5) },
                    Slab { lo: Some(-0.5), hi: Some(0.5) },
                    Slab { lo: Some(3.5), hi: None },
                ],
            },
            mixing: MixingSpec::Random { min_singular_value: 0.2 },
            labels: LabelSpec::None,
            n: Some(n),
            n_oracle: DEFAULT_ORACLE_SIZE,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.l < 2 {
            return Err(Error::Input(format!("need at least 2 bases, got {}", self.l)));
        }
        if self.m < self.l {
            return Err(Error::Input(format!("M = {} must be at least L = {}", self.m, self.l)));
        }
        if self.n == Some(0) {
            return Err(Error::Input("per-source sample size must be positive".into()));
        }
        match &self.bases {
            BaseSpec::AnchoredDiscrete { atoms } => {
                if *atoms < self.l {
                    return Err(Error::Input(format!("{atoms} atoms cannot anchor {} bases", self.l)));
                }
            }
            BaseSpec::TruncatedGaussian {
                means,
                sigmas,
                exclusive_slabs,
            } => {
                if means.len() != self.l || sigmas.len() != self.l || exclusive_slabs.len() != self.l {
                    return Err(Error::Input("Gaussian parameters must have one entry per base".into()));
                }
                let d = means[0].len();
                if d == 0 || means.iter().any(|m| m.len() != d) {
                    return Err(Error::Input("Gaussian means must share a positive dimension".into()));
                }
                if sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                    return Err(Error::Input("sigmas must be positive".into()));
                }
                for (i, a) in exclusive_slabs.iter().enumerate() {
                    if a.lo() > a.hi() {
                        return Err(Error::Input(format!("slab {i} is empty")));
                    }
                    if exclusive_slabs[i + 1..].iter().any(|b| a.overlaps(b)) {
                        return Err(Error::Input("exclusive slabs must be disjoint".into()));
                    }
                }
                if self.n.is_none() {
                    return Err(Error::Input("Gaussian instances need a sample size n".into()));
                }
                if self.n_oracle == 0 {
                    return Err(Error::Input("oracle sample size must be positive".into()));
                }
            }
        }
        if let MixingSpec::Random { min_singular_value } = self.mixing {
            if !(min_singular_value > 0.0) {
                return Err(Error::Input("min_singular_value must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseTruth {
    Discrete {
        masses: Vec<Vec<f64>>,
    },
    TruncatedGaussian {
        means: Vec<Vec<f64>>,
        sigmas: Vec<f64>,
        exclusive_slabs: Vec<Slab>,
        /// Mass each base puts on its own slab.
        exclusive_mass: Vec<f64>,
        /// Oracle samples, one source per base.
        oracle: Vec<PointSource>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub mixing: Vec<Vec<f64>>,
    pub labels: Option<PartialLabelMatrix>,
    pub bases: BaseTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub joint_irreducibility: bool,
    /// Exclusive-support condition; holds by construction for Gaussian bases.
    pub support_condition: Option<bool>,
    pub min_exclusive_mass: Option<f64>,
    pub mixing_rank: usize,
    pub min_singular_value: f64,
    pub condition_c: Option<bool>,
    pub condition_d: Option<bool>,
}

impl ConditionReport {
    /// True when every checked condition holds.
    pub fn all_hold(&self, l: usize) -> bool {
        self.joint_irreducibility
            && self.support_condition != Some(false)
            && self.mixing_rank == l
            && self.condition_c != Some(false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthInstance {
    pub dataset: Dataset,
    pub truth: GroundTruth,
    pub report: ConditionReport,
}

/// Singular values of a row-major matrix.
fn singular_values(rows: &[Vec<f64>]) -> Vec<f64> {
    let m = DMatrix::from_fn(rows.len(), rows[0].len(), |r, c| rows[r][c]);
    m.singular_values().iter().copied().collect()
}

fn rank(sv: &[f64]) -> usize {
    let max = sv.iter().copied().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > RANK_TOL * max.max(1.0)).count()
}

/// Row-stochastic M×L matrix with Dirichlet rows on each row's support.
fn random_mixing<R: Rng>(
    rng: &mut R,
    m: usize,
    l: usize,
    labels: Option<&PartialLabelMatrix>,
    min_singular_value: f64,
) -> Result<Vec<Vec<f64>>> {
    for _ in 0..MAX_MIXING_RETRIES {
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let support: Vec<usize> = match labels {
                    Some(s) => (0..l).filter(|&j| s.rows()[i][j] == 1).collect(),
                    None => (0..l).collect(),
                };
                let w = dirichlet_uniform(rng, support.len());
                let mut row = vec![0.0; l];
                for (j, x) in support.into_iter().zip(w) {
                    row[j] = x;
                }
                row
            })
            .collect();
        let sv = singular_values(&rows);
        if sv.iter().copied().fold(f64::INFINITY, f64::min) >= min_singular_value {
            return Ok(rows);
        }
    }
    Err(Error::Generation(format!(
        "no mixing matrix with smallest singular value >= {min_singular_value} in {MAX_MIXING_RETRIES} draws"
    )))
}

fn check_mixing(rows: &[Vec<f64>], m: usize, l: usize, labels: Option<&PartialLabelMatrix>) -> Result<()> {
    if rows.len() != m || rows.iter().any(|r| r.len() != l) {
        return Err(Error::Input(format!("mixing matrix must be {m} x {l}")));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Input(format!("mixing row {i} is not a probability vector")));
        }
        if let Some(s) = labels {
            if r.iter().zip(&s.rows()[i]).any(|(&x, &b)| b == 0 && x > 0.0) {
                return Err(Error::Input(format!("mixing row {i} uses a base its label row excludes")));
            }
        }
    }
    Ok(())
}

fn sample_labels<R: Rng>(rng: &mut R, m: usize, l: usize) -> Result<PartialLabelMatrix> {
    if l < 2 || m < 1 {
        return Err(Error::Input(format!("cannot sample labels for M = {m}, L = {l}")));
    }
    for _ in 0..MAX_LABEL_REJECTIONS {
        let rows: Vec<Vec<u8>> = (0..m)
            .map(|_| loop {
                let row: Vec<u8> = (0..l).map(|_| rng.random_bool(0.5) as u8).collect();
                if row.iter().filter(|&&b| b == 1).count() >= 2 {
                    break row;
                }
            })
            .collect();
        let s = PartialLabelMatrix::new(rows)?;
        if check_condition_c(&s) && covers_every_label(s.rows(), l) {
            return Ok(s);
        }
    }
    Err(Error::Generation(format!(
        "no {m} x {l} label matrix with distinct columns and a full-rank mixing in {MAX_LABEL_REJECTIONS} draws"
    )))
}

/// True iff every label can be matched to its own row. Without such a
/// matching no mixing matrix supported on the labels has rank L.
fn covers_every_label(rows: &[Vec<u8>], l: usize) -> bool {
    fn augment(label: usize, rows: &[Vec<u8>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for (i, row) in rows.iter().enumerate() {
            if row[label] == 1 && !seen[i] {
                seen[i] = true;
                if owner[i].is_none_or(|other| augment(other, rows, seen, owner)) {
                    owner[i] = Some(label);
                    return true;
                }
            }
        }
        false
    }
    let mut owner = vec![None; rows.len()];
    (0..l).all(|label| augment(label, rows, &mut vec![false; rows.len()], &mut owner))
}

/// Random label matrix with at least two labels per row, pairwise distinct
/// columns and a row matching that covers every label.
pub fn sample_partial_labels(m: usize, l: usize, seed: u64) -> Result<PartialLabelMatrix> {
    sample_labels(&mut stream(seed, STREAM_LABELS), m, l)
}

fn anchored_bases<R: Rng>(rng: &mut R, l: usize, atoms: usize) -> Vec<Vec<f64>> {
    (0..l)
        .map(|j| {
            let mut mass = vec![0.0; atoms];
            if atoms == l {
                mass[j] = 1.0;
                return mass;
            }
            let anchor = 0.2 + 0.3 * rng.random::<f64>();
            mass[j] = anchor;
            let shared = dirichlet_uniform(rng, atoms - l);
            for (x, w) in mass[l..].iter_mut().zip(shared) {
                *x = (1.0 - anchor) * w;
            }
            mass
        })
        .collect()
}

/// Draws from one isotropic Gaussian with a set of slabs on the first coordinate cut out.
struct TruncatedSampler {
    normals: Vec<Normal<f64>>,
    excluded: Vec<Slab>,
}

impl TruncatedSampler {
    fn new(mean: &[f64], sigma: f64, excluded: Vec<Slab>) -> Result<Self> {
        let normals = mean
            .iter()
            .map(|&mu| Normal::new(mu, sigma).map_err(|e| Error::Input(format!("bad Gaussian: {e}"))))
            .collect::<Result<_>>()?;
        Ok(Self { normals, excluded })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        loop {
            let x: Vec<f64> = self.normals.iter().map(|n| n.sample(rng)).collect();
            if !self.excluded.iter().any(|s| s.contains(x[0])) {
                return x;
            }
        }
    }
}

fn interval_mass(n: &NormalCdf, s: &Slab) -> f64 {
    n.cdf(s.hi()) - n.cdf(s.lo())
}

/// Mass base `j` puts on its own slab once the other slabs are removed.
fn exclusive_masses(means: &[Vec<f64>], sigmas: &[f64], slabs: &[Slab]) -> Result<Vec<f64>> {
    (0..means.len())
        .map(|j| {
            let n = NormalCdf::new(means[j][0], sigmas[j]).map_err(|e| Error::Input(format!("bad Gaussian: {e}")))?;
            let removed: f64 = (0..slabs.len()).filter(|&k| k != j).map(|k| interval_mass(&n, &slabs[k])).sum();
            let kept = 1.0 - removed;
            if kept <= 0.0 {
                return Err(Error::Input(format!("base {j} has no mass outside the other slabs")));
            }
            Ok(interval_mass(&n, &slabs[j]) / kept)
        })
        .collect()
}

fn categorical(weights: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(weights).map_err(|e| Error::Input(format!("bad weights: {e}")))
}

/// Generates a contaminated dataset, its ground truth and a condition report.
pub fn synth_instance(spec: &InstanceSpec) -> Result<SynthInstance> {
    spec.validate()?;
    let (l, m) = (spec.l, spec.m);
    let labels = match &spec.labels {
        LabelSpec::None => None,
        LabelSpec::Matrix(s) => {
            if s.num_sources() != m || s.num_labels() != l {
                return Err(Error::Input(format!("label matrix must be {m} x {l}")));
            }
            Some(s.clone())
        }
        LabelSpec::Random => Some(sample_labels(&mut stream(spec.seed, STREAM_LABELS), m, l)?),
    };
    let mixing = match &spec.mixing {
        MixingSpec::Matrix(rows) => {
            check_mixing(rows, m, l, labels.as_ref())?;
            rows.clone()
        }
        MixingSpec::Random { min_singular_value } => random_mixing(
            &mut stream(spec.seed, STREAM_MIXING),
            m,
            l,
            labels.as_ref(),
            *min_singular_value,
        )?,
    };
    let sv = singular_values(&mixing);
    let mut report = ConditionReport {
        joint_irreducibility: true,
        support_condition: None,
        min_exclusive_mass: None,
        mixing_rank: rank(&sv),
        min_singular_value: sv.iter().copied().fold(f64::INFINITY, f64::min),
        condition_c: labels.as_ref().map(check_condition_c),
        condition_d: labels.as_ref().map(check_condition_d),
    };
    let mut bases_rng = stream(spec.seed, STREAM_BASES);
    let mut training = stream(spec.seed, STREAM_TRAINING);
    let pickers = mixing.iter().map(|r| categorical(r)).collect::<Result<Vec<_>>>()?;

    let (dataset, bases) = match &spec.bases {
        BaseSpec::AnchoredDiscrete { atoms } => {
            let masses = anchored_bases(&mut bases_rng, l, *atoms);
            let dists = masses
                .iter()
                .map(|p| DiscreteDistribution::from_masses(p.clone()))
                .collect::<Result<Vec<_>>>()?;
            report.joint_irreducibility = check_joint_irreducibility(&dists)?;
            let sources = match spec.n {
                None => (0..m)
                    .map(|i| {
                        let mass = (0..*atoms)
                            .map(|a| (0..l).map(|j| mixing[i][j] * masses[j][a]).sum())
                            .collect();
                        AtomSource {
                            index: i,
                            mass: Some(mass),
                            counts: None,
                        }
                    })
                    .collect(),
                Some(n) => {
                    let atom_pickers = masses.iter().map(|p| categorical(p)).collect::<Result<Vec<_>>>()?;
                    (0..m)
                        .map(|i| {
                            let mut counts = vec![0u64; *atoms];
                            for _ in 0..n {
                                let j = pickers[i].sample(&mut training);
                                counts[atom_pickers[j].sample(&mut training)] += 1;
                            }
                            AtomSource {
                                index: i,
                                mass: None,
                                counts: Some(counts),
                            }
                        })
                        .collect()
                }
            };
            let dataset = Dataset::Discrete(DiscreteDataset {
                atoms: (0..*atoms).map(|a| format!("a{a}")).collect(),
                sources,
            });
            (dataset, BaseTruth::Discrete { masses })
        }
        BaseSpec::TruncatedGaussian {
            means,
            sigmas,
            exclusive_slabs,
        } => {
            let exclusive_mass = exclusive_masses(means, sigmas, exclusive_slabs)?;
            let min_mass = exclusive_mass.iter().copied().fold(f64::INFINITY, f64::min);
            report.support_condition = Some(min_mass >= MIN_EXCLUSIVE_MASS);
            report.min_exclusive_mass = Some(min_mass);
            report.joint_irreducibility = min_mass > 0.0;
            let samplers = (0..l)
                .map(|j| {
                    let excluded = (0..l).filter(|&k| k != j).map(|k| exclusive_slabs[k]).collect();
                    TruncatedSampler::new(&means[j], sigmas[j], excluded)
                })
                .collect::<Result<Vec<_>>>()?;
            let n = spec.n.expect("validated");
            let sources = (0..m)
                .map(|i| PointSource {
                    index: i,
                    points: (0..n)
                        .map(|_| {
                            let j = pickers[i].sample(&mut training);
                            samplers[j].sample(&mut training)
                        })
                        .collect(),
                })
                .collect();
            let mut oracle_rng = stream(spec.seed, STREAM_ORACLE);
            let oracle = samplers
                .iter()
                .enumerate()
                .map(|(j, s)| PointSource {
                    index: j,
                    points: (0..spec.n_oracle).map(|_| s.sample(&mut oracle_rng)).collect(),
                })
                .collect();
            let dataset = Dataset::Continuous(ContinuousDataset {
                dim: means[0].len(),
                sources,
            });
            let bases = BaseTruth::TruncatedGaussian {
                means: means.clone(),
                sigmas: sigmas.clone(),
                exclusive_slabs: exclusive_slabs.clone(),
                exclusive_mass,
                oracle,
            };
            (dataset, bases)
        }
    };
    Ok(SynthInstance {
        dataset,
        truth: GroundTruth { mixing, labels, bases },
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn anchored(l: usize, n: Option<usize>, seed: u64) -> InstanceSpec {
        InstanceSpec {
            l,
            m: l,
            bases: BaseSpec::AnchoredDiscrete { atoms: 10 },
            mixing: MixingSpec::Random { min_singular_value: 0.05 },
            labels: LabelSpec::None,
            n,
            n_oracle: DEFAULT_ORACLE_SIZE,
            seed,
        }
    }

    #[test]
    fn anchored_bases_are_jointly_irreducible() {
        for seed in 0..10 {
            let inst = synth_instance(&anchored(3, None, seed)).unwrap();
            assert!(inst.report.joint_irreducibility);
            assert!(inst.report.all_hold(3));
            assert!(inst.report.min_singular_value >= 0.05);
        }
    }

    #[test]
    fn exact_masses_are_the_mixtures() {
        let inst = synth_instance(&anchored(3, None, 4)).unwrap();
        let BaseTruth::Discrete { masses } = &inst.truth.bases else { panic!() };
        let Dataset::Discrete(d) = &inst.dataset else { panic!() };
        for (i, src) in d.sources.iter().enumerate() {
            let mass = src.mass.as_ref().unwrap();
            for a in 0..10 {
                let want: f64 = (0..3).map(|j| inst.truth.mixing[i][j] * masses[j][a]).sum();
                assert!((mass[a] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gaussian_exclusive_mass_matches_numerical_integration() {
        let spec = InstanceSpec::gaussian_triple(500, 1);
        let inst = synth_instance(&spec).unwrap();
        let BaseTruth::TruncatedGaussian { exclusive_mass, .. } = &inst.truth.bases else { panic!() };
        // midpoint rule over the truncated density
        let pdf = |x: f64, mu: f64| (-(x - mu) * (x - mu) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let slabs = [(-12.0, -3.5), (-0.5, 0.5), (3.5, 12.0)];
        let means = [-3.0, 0.0, 3.0];
        let h = 1e-4;
        for j in 0..3 {
            let mut inside = 0.0;
            let mut total = 0.0;
            let mut x = -12.0 + h / 2.0;
            while x < 12.0 {
                let cut = (0..3).any(|k| k != j && slabs[k].0 <= x && x <= slabs[k].1);
                if !cut {
                    let p = pdf(x, means[j]) * h;
                    total += p;
                    if slabs[j].0 <= x && x <= slabs[j].1 {
                        inside += p;
                    }
                }
                x += h;
            }
            assert!((exclusive_mass[j] - inside / total).abs() < 1e-6, "{j}");
            assert!(exclusive_mass[j] >= MIN_EXCLUSIVE_MASS);
        }
        assert_eq!(inst.report.support_condition, Some(true));
    }

    #[test]
    fn gaussian_samples_avoid_other_slabs() {
        let mut spec = InstanceSpec::gaussian_pair(2000, 3);
        spec.mixing = MixingSpec::Matrix(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        spec.n_oracle = 2000;
        let inst = synth_instance(&spec).unwrap();
        let Dataset::Continuous(d) = &inst.dataset else { panic!() };
        // identity mixing: source i is a pure sample of base i
        assert!(d.sources[0].points.iter().all(|p| p[0] < 2.0));
        assert!(d.sources[1].points.iter().all(|p| p[0] > -2.0));
        let mean0: f64 = d.sources[0].points.iter().map(|p| p[0]).sum::<f64>() / 2000.0;
        assert!((mean0 + 2.0).abs() < 0.1);
        let BaseTruth::TruncatedGaussian { oracle, .. } = &inst.truth.bases else { panic!() };
        assert_ne!(oracle[0].points, d.sources[0].points);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = InstanceSpec::gaussian_pair(300, 9);
        assert_eq!(synth_instance(&spec).unwrap(), synth_instance(&spec).unwrap());
        let a = synth_instance(&anchored(4, Some(200), 2)).unwrap();
        let b = synth_instance(&anchored(4, Some(200), 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn impossible_singular_value_is_a_generation_error() {
        let mut spec = anchored(3, None, 0);
        spec.mixing = MixingSpec::Random { min_singular_value: 2.0 };
        assert!(matches!(synth_instance(&spec), Err(Error::Generation(_))));
    }

    #[test]
    fn sampled_labels_satisfy_both_conditions() {
        for seed in 0..50 {
            let s = sample_partial_labels(3, 3, seed).unwrap();
            assert!(check_condition_c(&s) && check_condition_d(&s));
            assert!(s.rows().iter().all(|r| r.iter().filter(|&&b| b == 1).count() >= 2));
        }
        assert!(matches!(sample_partial_labels(1, 2, 0), Err(Error::Generation(_))));
    }

    #[test]
    fn label_matching() {
        let covered = vec![vec![1, 1, 0], vec![1, 0, 1], vec![1, 0, 1]];
        assert!(covers_every_label(&covered, 3));
        // labels 2 and 3 only appear in row 0
        let starved = vec![vec![1, 0, 1, 1], vec![1, 1, 0, 0], vec![1, 1, 0, 0], vec![1, 1, 0, 0]];
        assert!(!covers_every_label(&starved, 4));
        for seed in 0..50 {
            let s = sample_partial_labels(4, 4, seed).unwrap();
            assert!(covers_every_label(s.rows(), 4));
        }
    }

    #[test]
    fn walkthrough_label_matrix_passes_checks() {
        let s = PartialLabelMatrix::new(vec![vec![1, 1, 0], vec![1, 0, 1], vec![1, 1, 1]]).unwrap();
        assert!(check_condition_c(&s) && check_condition_d(&s));
    }

    #[test]
    fn labelled_mixing_respects_support() {
        let mut spec = anchored(3, None, 6);
        spec.labels = LabelSpec::Random;
        let inst = synth_instance(&spec).unwrap();
        let s = inst.truth.labels.as_ref().unwrap();
        for (row, lab) in inst.truth.mixing.iter().zip(s.rows()) {
            for (x, b) in row.iter().zip(lab) {
                assert!(*b == 1 || *x == 0.0);
            }
        }
        assert_eq!(inst.report.condition_c, Some(true));
    }

    #[test]
    fn spec_json_shape() {
        let text = r#"{"L":2,"M":2,"bases":{"kind":"anchored_discrete","atoms":5},
            "mixing":{"random":{"min_singular_value":0.1}},"labels":"random","seed":3}"#;
        let spec: InstanceSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.n_oracle, DEFAULT_ORACLE_SIZE);
        assert_eq!(spec.labels, LabelSpec::Random);
    }
}
