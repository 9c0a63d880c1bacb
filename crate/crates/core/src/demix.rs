//! Exact demixing: recovers the base distributions, up to permutation, from
//! as many linearly independent mixtures of them.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kappa::{kappa_two_exact, residue_exact, KAPPA_ONE_TOL};
use crate::measure::SimplexPoint;
use crate::rng::dirichlet_uniform;

/// Largest resampling index tried by the estimated loop before giving up.
pub const MAX_RESAMPLING_INDEX: usize = 64;

/// The exact loop tries n = 2, 4, 8, …, 2^63: ν = (n − 1)/n still runs up
/// to 1, but gets within round-off of it inside the iteration cap. Near-tied
/// hull draws need n in the thousands.
pub const MAX_RESAMPLING_DOUBLINGS: u32 = 63;

/// Relative singular-value floor below which inputs count as linearly dependent.
const RANK_TOL: f64 = 1e-10;

/// One pass of the resampling loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemixTraceRecord {
    /// Recursion depth, 0 at the top call.
    pub level: usize,
    pub n: usize,
    /// Resampling proportion (n − 1)/n.
    pub nu: f64,
    pub face_test: bool,
    /// Coordinates of the residues R_2, …, R_K of this pass.
    pub residues: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct DemixOutput<T> {
    pub bases: Vec<T>,
    pub trace: Vec<DemixTraceRecord>,
}

/// Recovers `inputs.len()` bases from as many contaminated distributions.
pub fn demix<T: SimplexPoint>(inputs: &[T], seed: u64) -> Result<DemixOutput<T>> {
    if inputs.len() < 2 {
        return Err(Error::Input(format!("demix needs at least 2 inputs, got {}", inputs.len())));
    }
    check_same_dimension(inputs)?;
    check_full_rank(inputs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Vec::new();
    let bases = demix_level(inputs, 0, &mut rng, &mut trace)?;
    Ok(DemixOutput { bases, trace })
}

fn demix_level<T: SimplexPoint>(
    s: &[T],
    level: usize,
    rng: &mut ChaCha8Rng,
    trace: &mut Vec<DemixTraceRecord>,
) -> Result<Vec<T>> {
    let k = s.len();
    if k == 2 {
        return Ok(vec![residue_exact(&s[0], &s[1])?, residue_exact(&s[1], &s[0])?]);
    }
    let w = dirichlet_uniform(rng, k - 1);
    let q = combine(&s[1..], &w)?;
    let mut accepted = None;
    for t in 1..=MAX_RESAMPLING_DOUBLINGS {
        let n = 1usize << t;
        let nu = (n - 1) as f64 / n as f64;
        let r = s[1..]
            .iter()
            .map(|si| residue_exact(&combine2(si, 1.0 / n as f64, &q, nu)?, &s[0]))
            .collect::<Result<Vec<T>>>()?;
        let verdict = face_test(&r);
        trace.push(DemixTraceRecord {
            level,
            n,
            nu,
            face_test: verdict,
            residues: r.iter().map(|x| x.coords().to_vec()).collect(),
        });
        if verdict {
            accepted = Some(r);
            break;
        }
    }
    let r = accepted.ok_or_else(|| {
        Error::Convergence(format!(
            "face test never passed for n <= 2^{MAX_RESAMPLING_DOUBLINGS} at recursion level {level}"
        ))
    })?;
    let mut q_out = demix_level(&r, level + 1, rng, trace)?;
    let last = peel_last(s, &q_out)?;
    q_out.push(last);
    Ok(q_out)
}

/// Starting from the mean of `s`, takes successive residues against each recovered base.
pub fn peel_last<T: SimplexPoint>(s: &[T], recovered: &[T]) -> Result<T> {
    let mean = combine(s, &vec![1.0 / s.len() as f64; s.len()])?;
    recovered
        .iter()
        .try_fold(mean, |acc, qi| residue_exact(&acc, qi))
}

/// True iff no input equals its residue with respect to another input, i.e.
/// all inputs lie in the relative interior of the same face.
///
/// Identical inputs are reported as not on a common face.
pub fn face_test<T: SimplexPoint>(q: &[T]) -> bool {
    for i in 0..q.len() {
        for j in 0..q.len() {
            if i == j {
                continue;
            }
            let contained = residue_exact(&q[i], &q[j])
                .and_then(|r| kappa_two_exact(&q[i], &r))
                .map(|k| k.kappa >= 1.0 - KAPPA_ONE_TOL)
                .unwrap_or(true);
            if contained {
                return false;
            }
        }
    }
    true
}

/// Demixes `l` random points of the convex hull of `inputs` (`inputs.len() >= l`).
pub fn nonsquare_demix<T: SimplexPoint>(inputs: &[T], l: usize, seed: u64) -> Result<DemixOutput<T>> {
    if l > inputs.len() {
        return Err(Error::Input(format!(
            "cannot recover {l} bases from {} inputs",
            inputs.len()
        )));
    }
    if l < 2 {
        return Err(Error::Input("need at least 2 bases".into()));
    }
    check_same_dimension(inputs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = (0..l)
        .map(|_| {
            let w = dirichlet_uniform(&mut rng, inputs.len());
            combine(inputs, &w)
        })
        .collect::<Result<Vec<T>>>()?;
    demix(&draws, seed.wrapping_add(1))
}

/// Σ w_i x_i.
pub(crate) fn combine<T: SimplexPoint>(xs: &[T], w: &[f64]) -> Result<T> {
    let dim = xs[0].dim();
    let mut out = vec![0.0; dim];
    for (x, &wi) in xs.iter().zip(w) {
        for (o, v) in out.iter_mut().zip(x.coords()) {
            *o += wi * v;
        }
    }
    xs[0].rebuild(out)
}

fn combine2<T: SimplexPoint>(a: &T, wa: f64, b: &T, wb: f64) -> Result<T> {
    let out = a
        .coords()
        .iter()
        .zip(b.coords())
        .map(|(x, y)| wa * x + wb * y)
        .collect();
    a.rebuild(out)
}

fn check_same_dimension<T: SimplexPoint>(xs: &[T]) -> Result<()> {
    let d = xs[0].dim();
    if xs.iter().any(|x| x.dim() != d) {
        return Err(Error::Input("inputs live in different spaces".into()));
    }
    Ok(())
}

/// Rejects inputs whose coordinate vectors are linearly dependent.
pub fn check_full_rank<T: SimplexPoint>(xs: &[T]) -> Result<()> {
    let k = xs.len();
    let d = xs[0].dim();
    if k > d {
        return Err(Error::Assumption(format!(
            "{k} inputs in dimension {d} cannot be linearly independent"
        )));
    }
    let m = DMatrix::from_fn(d, k, |r, c| xs[c].coords()[r]);
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= RANK_TOL * max.max(1.0) {
        return Err(Error::Assumption(format!(
            "inputs are linearly dependent (smallest singular value {min:.3e})"
        )));
    }
    Ok(())
}
