//! Synthetic instances, dataset files, scoring and seeded convergence sweeps.

pub mod align;
pub mod io;
pub mod synth;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use align::{align_and_score, sup_distance, AlignmentScore, ScoreMode, MAX_ALIGNED_BASES};
pub use io::{from_json, to_json, AtomSource, ContinuousDataset, Dataset, DiscreteDataset, PointSource};
pub use synth::{
    sample_partial_labels, synth_instance, BaseSpec, BaseTruth, ConditionReport, GroundTruth, InstanceSpec,
    LabelSpec, MixingSpec, Slab, SynthInstance,
};

use crate::error::{Error, Result};
use crate::finite::{demix_hat, partial_label_hat, EstimateBundle, DEFAULT_MIN_SAMPLE_SIZE};
use crate::measure::{
    build_candidates, CandidateSetList, ClassKind, DiscreteDistribution, EmpiricalDistribution, EstimationContext,
    MassTable, SignedMixtureEstimate,
};

/// Smallest candidate budget used when none is given.
pub const DEFAULT_CANDIDATE_FLOOR: usize = 4096;

/// Candidate budget for `pooled` points: at least one set per point.
pub fn default_cap(pooled: usize) -> usize {
    pooled.max(DEFAULT_CANDIDATE_FLOOR)
}

/// Candidates built from the pooled samples and the matching estimation context.
pub fn empirical_context(
    sources: &[EmpiricalDistribution],
    class: ClassKind,
    cap: Option<usize>,
    seed: u64,
    penalty_scale: f64,
    vc_dimension: Option<usize>,
) -> Result<(CandidateSetList, EstimationContext)> {
    let pooled: Vec<Vec<f64>> = sources.iter().flat_map(|s| s.points().iter().cloned()).collect();
    let cap = cap.unwrap_or_else(|| default_cap(pooled.len()));
    let candidates = build_candidates(class, &pooled, cap, seed)?;
    let mut ctx = EstimationContext::empirical(sources, &candidates, penalty_scale)?;
    if let Some(v) = vc_dimension {
        ctx = ctx.with_vc_dimension(v)?;
    }
    Ok((candidates, ctx))
}

/// Estimation context over discrete sources; exact masses carry no sample
/// size, so they are only accepted without penalties.
pub fn discrete_context(
    sources: &[DiscreteDistribution],
    sample_sizes: &[Option<usize>],
    penalty_scale: f64,
    vc_dimension: Option<usize>,
) -> Result<EstimationContext> {
    let sizes = sample_sizes
        .iter()
        .enumerate()
        .map(|(i, n)| match n {
            Some(n) => Ok(*n),
            None if penalty_scale == 0.0 => Ok(usize::MAX),
            None => Err(Error::Input(format!(
                "source {i} gives exact masses, so penalties need --penalty-scale 0"
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ctx = EstimationContext::discrete(sources, sizes, penalty_scale)?;
    if let Some(v) = vc_dimension {
        ctx = ctx.with_vc_dimension(v)?;
    }
    Ok(ctx)
}

/// Estimator settings for a seeded trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub class: ClassKind,
    pub cap: Option<usize>,
    pub penalty_scale: f64,
    pub min_n: usize,
    pub vc_dimension: Option<usize>,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            class: ClassKind::Balls,
            cap: None,
            penalty_scale: 1.0,
            min_n: DEFAULT_MIN_SAMPLE_SIZE,
            vc_dimension: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub n: Option<usize>,
    pub seed: u64,
    pub score: Option<AlignmentScore>,
    pub error: Option<String>,
}

impl TrialResult {
    /// Worst per-base distance; a failed run counts as infinitely far.
    pub fn max_distance(&self) -> f64 {
        self.score.as_ref().map_or(f64::INFINITY, |s| s.max_distance)
    }
}

fn run_estimator(
    ctx: &EstimationContext,
    truth: &GroundTruth,
    seed: u64,
    min_n: usize,
) -> Result<(EstimateBundle, ScoreMode)> {
    match &truth.labels {
        Some(s) => Ok((partial_label_hat(ctx, s, seed, min_n)?, ScoreMode::Exact)),
        None => {
            let inputs: Vec<_> = (0..ctx.num_sources()).map(SignedMixtureEstimate::source).collect();
            Ok((demix_hat(ctx, &inputs, seed, min_n)?, ScoreMode::Permute))
        }
    }
}

fn score_instance(spec: &InstanceSpec, config: &TrialConfig) -> Result<AlignmentScore> {
    let inst = synth_instance(spec)?;
    if inst.truth.labels.is_none() && spec.m != spec.l {
        return Err(Error::Unsupported("finite-sample demixing needs M = L".into()));
    }
    match (&inst.dataset, &inst.truth.bases) {
        (Dataset::Continuous(d), BaseTruth::TruncatedGaussian { oracle, .. }) => {
            let sources = d.to_empirical()?;
            let (candidates, ctx) = empirical_context(
                &sources,
                config.class,
                config.cap,
                spec.seed,
                config.penalty_scale,
                config.vc_dimension,
            )?;
            let (bundle, mode) = run_estimator(&ctx, &inst.truth, spec.seed, config.min_n)?;
            let oracle = oracle
                .iter()
                .map(|o| EmpiricalDistribution::new(o.index, o.points.clone()))
                .collect::<Result<Vec<_>>>()?;
            let table = MassTable::from_empirical(&oracle, &candidates)?;
            let truth: Vec<Vec<f64>> = (0..oracle.len()).map(|j| table.row(j).to_vec()).collect();
            let est = bundle.estimates.iter().map(|e| ctx.values(e)).collect::<Result<Vec<_>>>()?;
            align_and_score(&est, &truth, mode)
        }
        (Dataset::Discrete(d), BaseTruth::Discrete { masses }) => {
            let (sources, sizes) = d.to_distributions()?;
            let ctx = discrete_context(&sources, &sizes, config.penalty_scale, config.vc_dimension)?;
            let (bundle, mode) = run_estimator(&ctx, &inst.truth, spec.seed, config.min_n)?;
            let est = bundle.estimates.iter().map(|e| ctx.values(e)).collect::<Result<Vec<_>>>()?;
            align_and_score(&est, masses, mode)
        }
        _ => unreachable!("dataset kind follows the base kind"),
    }
}

/// Generates one instance, estimates its bases and scores them against the truth.
pub fn run_trial(spec: &InstanceSpec, config: &TrialConfig) -> TrialResult {
    let (score, error) = match score_instance(spec, config) {
        Ok(s) => (Some(s), None),
        Err(e) => (None, Some(e.to_string())),
    };
    TrialResult {
        n: spec.n,
        seed: spec.seed,
        score,
        error,
    }
}

/// Runs `template` at every sample size for seeds `template.seed .. template.seed + seeds`.
/// Results are ordered by sample size, then seed.
pub fn sweep(template: &InstanceSpec, sizes: &[usize], seeds: u64, config: &TrialConfig) -> Vec<TrialResult> {
    let jobs: Vec<InstanceSpec> = sizes
        .iter()
        .flat_map(|&n| {
            (0..seeds).map(move |s| InstanceSpec {
                n: Some(n),
                seed: template.seed.wrapping_add(s),
                ..template.clone()
            })
        })
        .collect();
    jobs.par_iter().map(|spec| run_trial(spec, config)).collect()
}

/// Median; even counts average the two middle values.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        return f64::NAN;
    }
    if k % 2 == 1 {
        v[k / 2]
    } else {
        (v[k / 2 - 1] + v[k / 2]) / 2.0
    }
}
