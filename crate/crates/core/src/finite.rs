//! Finite-sample demixing and partial-label recovery built on penalized
//! residue estimates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::demix::MAX_RESAMPLING_INDEX;
use crate::error::{Error, Result};
use crate::measure::{EstimationContext, SignedMixtureEstimate};
use crate::partial::{
    apply_assignment, assign_vertices, unit_index, check_condition_c, check_condition_d, PartialLabelMatrix,
    VertexVerdict, MAX_MIXING_INDEX,
};
use crate::rng::dirichlet_uniform;

/// Default smallest per-source sample size accepted by the estimators.
pub const DEFAULT_MIN_SAMPLE_SIZE: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteTraceRecord {
    pub level: usize,
    pub n: usize,
    /// Face-test threshold 2^-(n+1).
    pub epsilon: f64,
    pub face_test: bool,
}

/// Estimates with the bookkeeping of how they were obtained.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateBundle {
    pub estimates: Vec<SignedMixtureEstimate>,
    pub trace: Vec<FiniteTraceRecord>,
    /// Vertex-test index at acceptance (partial-label runs only).
    pub k: Option<usize>,
    /// Assignment matrix applied to the demixed estimates (partial-label runs only).
    pub matrix: Option<Vec<Vec<u8>>>,
    /// Sources whose label row was (or became) a single label and were taken as base estimates directly.
    pub pure_rows: Vec<usize>,
}

/// Checks that every sample is at least `min_n` points.
pub fn check_sample_sizes(ctx: &EstimationContext, min_n: usize) -> Result<()> {
    if let Some((i, n)) = ctx
        .sample_sizes()
        .iter()
        .enumerate()
        .find(|(_, &n)| n < min_n)
    {
        return Err(Error::Input(format!(
            "source {i} has {n} points, below the minimum {min_n}"
        )));
    }
    Ok(())
}

/// Finite-sample demixing of `inputs` (usually the raw sources).
pub fn demix_hat(
    ctx: &EstimationContext,
    inputs: &[SignedMixtureEstimate],
    seed: u64,
    min_n: usize,
) -> Result<EstimateBundle> {
    if inputs.len() < 2 {
        return Err(Error::Input(format!("demixing needs at least 2 inputs, got {}", inputs.len())));
    }
    check_sample_sizes(ctx, min_n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Vec::new();
    let estimates = demix_hat_level(ctx, inputs, 0, &mut rng, &mut trace)?;
    Ok(EstimateBundle {
        estimates,
        trace,
        k: None,
        matrix: None,
        pure_rows: Vec::new(),
    })
}

fn demix_hat_level(
    ctx: &EstimationContext,
    s: &[SignedMixtureEstimate],
    level: usize,
    rng: &mut ChaCha8Rng,
    trace: &mut Vec<FiniteTraceRecord>,
) -> Result<Vec<SignedMixtureEstimate>> {
    let k = s.len();
    if k == 2 {
        return Ok(vec![ctx.residue_hat(&s[0], &s[1])?, ctx.residue_hat(&s[1], &s[0])?]);
    }
    let w = dirichlet_uniform(rng, k - 1);
    let q = weighted(&s[1..], &w)?;
    let mut accepted = None;
    for n in 2..=MAX_RESAMPLING_INDEX {
        let inv = 1.0 / n as f64;
        let r = s[1..]
            .iter()
            .map(|si| {
                let m = SignedMixtureEstimate::affine(&[(inv, si), (1.0 - inv, &q)])?;
                ctx.residue_hat(&m, &s[0])
            })
            .collect::<Result<Vec<_>>>()?;
        let epsilon = 0.5f64.powi(n as i32 + 1);
        let verdict = face_test_hat(ctx, &r, epsilon)?;
        trace.push(FiniteTraceRecord {
            level,
            n,
            epsilon,
            face_test: verdict,
        });
        if verdict {
            accepted = Some(r);
            break;
        }
    }
    let r = accepted.ok_or_else(|| {
        Error::Convergence(format!(
            "estimated face test never passed for n <= {MAX_RESAMPLING_INDEX} at recursion level {level}"
        ))
    })?;
    let mut out = demix_hat_level(ctx, &r, level + 1, rng, trace)?;
    let mean = weighted(s, &vec![1.0 / k as f64; k])?;
    let last = out
        .iter()
        .try_fold(mean, |acc, qi| ctx.residue_hat(&acc, qi))?;
    out.push(last);
    Ok(out)
}

/// False iff some pair has κ̂(Q_i | ResidueHat(Q_i | Q_j)) ≥ 1 − ε.
pub fn face_test_hat(ctx: &EstimationContext, q: &[SignedMixtureEstimate], epsilon: f64) -> Result<bool> {
    for i in 0..q.len() {
        for j in 0..q.len() {
            if i == j {
                continue;
            }
            let r = ctx.residue_hat(&q[i], &q[j])?;
            if ctx.kappa_hat(&q[i], &r)?.kappa >= 1.0 - epsilon {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// True iff κ̂(Q₁ | ResidueHat(Q₁ | Q₂)) ≤ 1 − ε.
pub fn face_contain_hat(
    ctx: &EstimationContext,
    q1: &SignedMixtureEstimate,
    q2: &SignedMixtureEstimate,
    epsilon: f64,
) -> Result<bool> {
    let r = ctx.residue_hat(q1, q2)?;
    Ok(ctx.kappa_hat(q1, &r)?.kappa <= 1.0 - epsilon)
}

/// Finite-sample vertex test. Candidates with κ̂(Q̂_i | Q̂_j) > ε for some
/// pair are rejected outright; otherwise the support-containment verdicts come
/// from [`face_contain_hat`] of each source against each candidate.
///
/// A source indistinguishable from a candidate counts as containing it; a
/// pair whose κ̂ cannot be estimated counts as not containing it.
pub fn vertex_test_hat(
    ctx: &EstimationContext,
    s: &PartialLabelMatrix,
    sources: &[SignedMixtureEstimate],
    candidates: &[SignedMixtureEstimate],
    epsilon: f64,
) -> VertexVerdict {
    let l = candidates.len();
    for i in 0..l {
        for j in 0..l {
            if i != j {
                let overlap = ctx
                    .kappa_hat(&candidates[i], &candidates[j])
                    .map_or(true, |k| k.kappa > epsilon);
                if overlap {
                    return VertexVerdict::reject_identity(l);
                }
            }
        }
    }
    assign_vertices(s, candidates.len(), |j, i| {
        match face_contain_hat(ctx, &sources[j], &candidates[i], epsilon) {
            Ok(v) => v,
            Err(Error::Degenerate(_)) => true,
            Err(_) => false,
        }
    })
}

/// Result of peeling off sources whose label row names a single base.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedInstance {
    /// Label matrix restricted to the surviving sources and labels.
    pub labels: Option<PartialLabelMatrix>,
    /// Original indices of the surviving sources.
    pub source_rows: Vec<usize>,
    /// Original indices of the surviving labels.
    pub label_columns: Vec<usize>,
    /// Estimates of the surviving sources after the residue steps.
    pub estimates: Vec<SignedMixtureEstimate>,
    /// `(label, source row, estimate)` for every base read off a pure row.
    pub resolved: Vec<(usize, usize, SignedMixtureEstimate)>,
}

/// Repeatedly takes a source whose row is a single label j, residues every
/// other source that carries j against it and drops j from their rows.
pub fn reduce_to_condition_d(
    ctx: &EstimationContext,
    s: &PartialLabelMatrix,
    sources: &[SignedMixtureEstimate],
) -> Result<ReducedInstance> {
    if !check_condition_c(s) {
        return Err(Error::Input("label matrix has two identical columns".into()));
    }
    let m = s.num_sources();
    let l = s.num_labels();
    let mut rows: Vec<Vec<u8>> = s.rows().to_vec();
    let mut est = sources.to_vec();
    let mut processed = vec![false; m];
    let mut resolved: Vec<(usize, usize, SignedMixtureEstimate)> = Vec::new();
    loop {
        let pure = (0..m).find(|&i| !processed[i] && unit_index(&rows[i]).is_some());
        let Some(p) = pure else { break };
        let label = unit_index(&rows[p]).expect("pure row");
        if let Some((_, other, _)) = resolved.iter().find(|(lab, _, _)| *lab == label) {
            return Err(Error::Degenerate(format!(
                "sources {other} and {p} both estimate base {label} alone"
            )));
        }
        processed[p] = true;
        for i in 0..m {
            if processed[i] || rows[i][label] == 0 {
                continue;
            }
            if unit_index(&rows[i]).is_some() {
                // another pure row on the same label
                return Err(Error::Degenerate(format!(
                    "sources {p} and {i} both estimate base {label} alone"
                )));
            }
            est[i] = ctx.residue_hat(&est[i], &est[p])?;
            rows[i][label] = 0;
        }
        resolved.push((label, p, est[p].clone()));
    }
    let source_rows: Vec<usize> = (0..m).filter(|&i| !processed[i]).collect();
    let label_columns: Vec<usize> = (0..l)
        .filter(|j| !resolved.iter().any(|(lab, _, _)| lab == j))
        .collect();
    let labels = if source_rows.is_empty() {
        None
    } else {
        let sub = source_rows
            .iter()
            .map(|&i| label_columns.iter().map(|&j| rows[i][j]).collect())
            .collect();
        Some(PartialLabelMatrix::new(sub)?)
    };
    Ok(ReducedInstance {
        labels,
        estimates: source_rows.iter().map(|&i| est[i].clone()).collect(),
        source_rows,
        label_columns,
        resolved,
    })
}

/// Finite-sample partial-label recovery; estimates are returned in base index order.
pub fn partial_label_hat(
    ctx: &EstimationContext,
    s: &PartialLabelMatrix,
    seed: u64,
    min_n: usize,
) -> Result<EstimateBundle> {
    let l = s.num_labels();
    let m = s.num_sources();
    if m != l {
        return Err(Error::Input(format!(
            "finite-sample partial-label recovery needs a square label matrix, got {m} x {l}"
        )));
    }
    if m != ctx.num_sources() {
        return Err(Error::Input(format!(
            "{m} label rows but {} sources",
            ctx.num_sources()
        )));
    }
    if !check_condition_c(s) {
        return Err(Error::Input("label matrix has two identical columns".into()));
    }
    check_sample_sizes(ctx, min_n)?;
    let sources: Vec<SignedMixtureEstimate> = (0..m).map(SignedMixtureEstimate::source).collect();
    if check_condition_d(s) {
        let bundle = solve_square(ctx, s, &sources, seed)?;
        return Ok(bundle);
    }
    let reduced = reduce_to_condition_d(ctx, s, &sources)?;
    let mut out: Vec<Option<SignedMixtureEstimate>> = vec![None; l];
    for (label, _, e) in &reduced.resolved {
        out[*label] = Some(e.clone());
    }
    let mut bundle = EstimateBundle {
        estimates: Vec::new(),
        trace: Vec::new(),
        k: None,
        matrix: None,
        pure_rows: reduced.resolved.iter().map(|(_, p, _)| *p).collect(),
    };
    if let Some(sub) = &reduced.labels {
        if sub.num_labels() != sub.num_sources() {
            return Err(Error::Degenerate(format!(
                "reduction left {} sources for {} labels",
                sub.num_sources(),
                sub.num_labels()
            )));
        }
        let inner = solve_square(ctx, sub, &reduced.estimates, seed)?;
        for (pos, &label) in reduced.label_columns.iter().enumerate() {
            out[label] = Some(inner.estimates[pos].clone());
        }
        bundle.trace = inner.trace;
        bundle.k = inner.k;
        bundle.matrix = inner.matrix;
    }
    bundle.estimates = out
        .into_iter()
        .enumerate()
        .map(|(j, e)| e.ok_or_else(|| Error::Degenerate(format!("no estimate produced for base {j}"))))
        .collect::<Result<_>>()?;
    Ok(bundle)
}

fn solve_square(
    ctx: &EstimationContext,
    s: &PartialLabelMatrix,
    sources: &[SignedMixtureEstimate],
    seed: u64,
) -> Result<EstimateBundle> {
    if sources.len() == 1 {
        return Ok(EstimateBundle {
            estimates: sources.to_vec(),
            trace: Vec::new(),
            k: None,
            matrix: None,
            pure_rows: Vec::new(),
        });
    }
    let demixed = demix_hat(ctx, sources, seed, 0)?;
    for k in 2..=MAX_MIXING_INDEX {
        let verdict = vertex_test_hat(ctx, s, sources, &demixed.estimates, 1.0 / k as f64);
        if verdict.found {
            return Ok(EstimateBundle {
                estimates: apply_assignment(&verdict.matrix, &demixed.estimates)?,
                trace: demixed.trace,
                k: Some(k),
                matrix: Some(verdict.matrix),
                pure_rows: Vec::new(),
            });
        }
    }
    Err(Error::Convergence(format!(
        "estimated vertex test never accepted for k <= {MAX_MIXING_INDEX}"
    )))
}

/// Σ w_i E_i for simplex weights.
fn weighted(xs: &[SignedMixtureEstimate], w: &[f64]) -> Result<SignedMixtureEstimate> {
    let terms: Vec<(f64, &SignedMixtureEstimate)> = w.iter().copied().zip(xs).collect();
    SignedMixtureEstimate::affine(&terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demix::{demix, face_test};
    use crate::measure::{DiscreteDistribution, SimplexPoint};
    use crate::partial::{partial_label, vertex_test};

    fn dd(w: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::from_masses(w.to_vec()).unwrap()
    }

    fn plug_in(sources: &[DiscreteDistribution]) -> EstimationContext {
        EstimationContext::discrete(sources, vec![1_000_000; sources.len()], 0.0).unwrap()
    }

    fn as_distribution(ctx: &EstimationContext, e: &SignedMixtureEstimate) -> Vec<f64> {
        ctx.values(e).unwrap()
    }

    fn src(m: usize) -> Vec<SignedMixtureEstimate> {
        (0..m).map(SignedMixtureEstimate::source).collect()
    }

    /// Mixtures of anchored bases over 5 atoms.
    fn instance() -> (Vec<DiscreteDistribution>, Vec<DiscreteDistribution>) {
        let bases = vec![
            dd(&[0.5, 0.0, 0.0, 0.3, 0.2]),
            dd(&[0.0, 0.4, 0.0, 0.3, 0.3]),
            dd(&[0.0, 0.0, 0.6, 0.1, 0.3]),
        ];
        let pi = [[0.6, 0.4, 0.0], [0.3, 0.0, 0.7], [0.2, 0.5, 0.3]];
        let mixed = pi
            .iter()
            .map(|row| {
                let m: Vec<f64> = (0..5)
                    .map(|a| row.iter().zip(&bases).map(|(p, b)| p * b.mass()[a]).sum())
                    .collect();
                dd(&m)
            })
            .collect();
        (bases, mixed)
    }

    #[test]
    fn plug_in_demix_matches_exact_up_to_order() {
        let (_, mixed) = instance();
        let ctx = plug_in(&mixed);
        for seed in 0..5 {
            let exact = demix(&mixed, seed).unwrap().bases;
            let hat = demix_hat(&ctx, &src(3), seed, DEFAULT_MIN_SAMPLE_SIZE).unwrap();
            for e in &hat.estimates {
                let v = as_distribution(&ctx, e);
                let best = exact
                    .iter()
                    .map(|b| crate::measure::linf(b.mass(), &v))
                    .fold(f64::INFINITY, f64::min);
                assert!(best < 1e-9, "seed {seed}: {best}");
            }
            for w in &hat.trace {
                assert_eq!(w.epsilon, 0.5f64.powi(w.n as i32 + 1));
            }
        }
    }

    #[test]
    fn plug_in_face_test_matches_exact() {
        let (_, mixed) = instance();
        let ctx = plug_in(&mixed);
        assert_eq!(face_test_hat(&ctx, &src(3), 0.01).unwrap(), face_test(&mixed));
        assert!(!face_test_hat(&ctx, &src(3), 1.0).unwrap());
    }

    #[test]
    fn identical_samples_are_degenerate() {
        let a = dd(&[0.3, 0.7]);
        let ctx = plug_in(&[a.clone(), a]);
        assert!(matches!(demix_hat(&ctx, &src(2), 0, 10), Err(Error::Degenerate(_))));
        assert!(matches!(
            face_contain_hat(&ctx, &src(2)[0], &src(2)[1], 0.1),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn small_samples_are_rejected() {
        let ctx = EstimationContext::discrete(&[dd(&[0.3, 0.7]), dd(&[0.6, 0.4])], vec![50, 500], 1.0).unwrap();
        assert!(matches!(demix_hat(&ctx, &src(2), 0, 200), Err(Error::Input(_))));
    }

    #[test]
    fn face_contain_follows_support() {
        // Q2 supported inside Q1's support -> contained; disjoint -> not.
        let ctx = plug_in(&[dd(&[0.5, 0.5, 0.0]), dd(&[1.0, 0.0, 0.0]), dd(&[0.0, 0.0, 1.0])]);
        let s = src(3);
        assert!(face_contain_hat(&ctx, &s[0], &s[1], 0.01).unwrap());
        for eps in [0.01, 0.3, 0.9] {
            assert!(!face_contain_hat(&ctx, &s[0], &s[2], eps).unwrap());
        }
    }

    fn walkthrough() -> (PartialLabelMatrix, Vec<DiscreteDistribution>, Vec<DiscreteDistribution>) {
        let s = PartialLabelMatrix::new(vec![vec![1, 1, 0], vec![1, 0, 1], vec![1, 1, 1]]).unwrap();
        let (bases, _) = instance();
        let pi = [[0.4, 0.6, 0.0], [0.7, 0.0, 0.3], [0.2, 0.3, 0.5]];
        let mixed = pi
            .iter()
            .map(|row| {
                let m: Vec<f64> = (0..5)
                    .map(|a| row.iter().zip(&bases).map(|(p, b)| p * b.mass()[a]).sum())
                    .collect();
                dd(&m)
            })
            .collect();
        (s, bases, mixed)
    }

    #[test]
    fn plug_in_vertex_test_matches_exact() {
        let (s, bases, mixed) = walkthrough();
        let ctx = EstimationContext::discrete(
            &mixed.iter().chain(&bases).cloned().collect::<Vec<_>>(),
            vec![1_000_000; 6],
            0.0,
        )
        .unwrap();
        let order = [1usize, 2, 0];
        let cand_hat: Vec<SignedMixtureEstimate> = order.iter().map(|&j| SignedMixtureEstimate::source(3 + j)).collect();
        let cand: Vec<DiscreteDistribution> = order.iter().map(|&j| bases[j].clone()).collect();
        let exact = vertex_test(&s, &mixed, &cand);
        let hat = vertex_test_hat(&ctx, &s, &src(3), &cand_hat, 0.01);
        assert!(exact.found);
        assert_eq!(exact, hat);
    }

    #[test]
    fn plug_in_partial_label_matches_exact() {
        let (s, bases, mixed) = walkthrough();
        let ctx = plug_in(&mixed);
        for seed in 0..5 {
            let exact = partial_label(&s, &mixed, seed).unwrap();
            let hat = partial_label_hat(&ctx, &s, seed, DEFAULT_MIN_SAMPLE_SIZE).unwrap();
            for j in 0..3 {
                let v = as_distribution(&ctx, &hat.estimates[j]);
                assert!(crate::measure::linf(exact.bases[j].mass(), &v) < 1e-9);
                assert!(bases[j].linf(&exact.bases[j]) < 1e-9);
            }
        }
    }

    #[test]
    fn reduction_peels_pure_row() {
        let bases = [dd(&[1.0, 0.0, 0.0]), dd(&[0.0, 0.5, 0.5])];
        let mixed = vec![bases[0].clone(), dd(&[0.4, 0.3, 0.3])];
        let ctx = plug_in(&mixed);
        let s = PartialLabelMatrix::new(vec![vec![1, 0], vec![1, 1]]).unwrap();
        let red = reduce_to_condition_d(&ctx, &s, &src(2)).unwrap();
        assert_eq!(red.resolved.len(), 2);
        assert!(red.labels.is_none());
        let second = red.resolved.iter().find(|r| r.0 == 1).unwrap();
        let v = as_distribution(&ctx, &second.2);
        assert!(crate::measure::linf(&v, bases[1].mass()) < 1e-12);
        let out = partial_label_hat(&ctx, &s, 0, 10).unwrap();
        assert!(crate::measure::linf(&as_distribution(&ctx, &out.estimates[1]), bases[1].mass()) < 1e-12);
        assert!(crate::measure::linf(&as_distribution(&ctx, &out.estimates[0]), bases[0].mass()) < 1e-12);
    }

    #[test]
    fn reduction_without_pure_rows_is_identity() {
        let (s, _, mixed) = walkthrough();
        let ctx = plug_in(&mixed);
        let red = reduce_to_condition_d(&ctx, &s, &src(3)).unwrap();
        assert!(red.resolved.is_empty());
        assert_eq!(red.estimates, src(3));
        assert_eq!(red.labels.unwrap(), s);
    }

    #[test]
    fn reduction_with_one_pure_row_on_three_labels() {
        let (_, bases, _) = walkthrough();
        let pi = [[1.0, 0.0, 0.0], [0.3, 0.7, 0.0], [0.5, 0.2, 0.3]];
        let mixed: Vec<DiscreteDistribution> = pi
            .iter()
            .map(|row| {
                dd(&(0..5)
                    .map(|a| row.iter().zip(&bases).map(|(p, b)| p * b.mass()[a]).sum())
                    .collect::<Vec<f64>>())
            })
            .collect();
        let s = PartialLabelMatrix::new(vec![vec![1, 0, 0], vec![1, 1, 0], vec![1, 1, 1]]).unwrap();
        let ctx = plug_in(&mixed);
        let out = partial_label_hat(&ctx, &s, 4, 10).unwrap();
        for j in 0..3 {
            let v = as_distribution(&ctx, &out.estimates[j]);
            assert!(crate::measure::linf(&v, bases[j].mass()) < 1e-9, "base {j}");
        }
    }

    #[test]
    fn violating_c_is_rejected() {
        let ctx = plug_in(&[dd(&[0.3, 0.7]), dd(&[0.6, 0.4])]);
        let s = PartialLabelMatrix::new(vec![vec![1, 1], vec![1, 1]]).unwrap();
        assert!(matches!(partial_label_hat(&ctx, &s, 0, 10), Err(Error::Input(_))));
    }

    #[test]
    fn estimates_keep_unit_weight_sum() {
        let (_, mixed) = instance();
        let ctx = EstimationContext::discrete(&mixed, vec![1_000_000; 3], 0.05).unwrap();
        if let Ok(b) = demix_hat(&ctx, &src(3), 1, 10) {
            for e in &b.estimates {
                assert!((e.weight_sum() - 1.0).abs() < 1e-9);
                assert!(e.components().len() <= 2 * 2 * 2 * 3);
            }
        }
    }
}
