//! Exact decontamination with a partial label matrix: recovers the bases in
//! their own index order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::demix::combine;
use crate::error::{Error, Result};
use crate::kappa::{kappa_multi_exact, kappa_two_exact};
use crate::measure::SimplexPoint;
use crate::rng::dirichlet_uniform;

/// Largest mixing index tried by [`partial_label`].
pub const MAX_MIXING_INDEX: usize = 64;

/// κ values above this count as strictly positive.
pub const POSITIVE_KAPPA_TOL: f64 = 1e-9;

/// Binary M×L matrix; entry (i, j) is 1 when base j may contaminate source i.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<u8>>", into = "Vec<Vec<u8>>")]
pub struct PartialLabelMatrix {
    rows: Vec<Vec<u8>>,
}

impl PartialLabelMatrix {
    pub fn new(rows: Vec<Vec<u8>>) -> Result<Self> {
        let width = rows.first().map(Vec::len).unwrap_or(0);
        if width == 0 {
            return Err(Error::Input("label matrix is empty".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != width {
                return Err(Error::Input(format!("label row {i} has length {}, expected {width}", r.len())));
            }
            if r.iter().any(|&v| v > 1) {
                return Err(Error::Input(format!("label row {i} is not binary")));
            }
            if r.iter().all(|&v| v == 0) {
                return Err(Error::Input(format!("label row {i} has no label")));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.rows
    }

    pub fn num_sources(&self) -> usize {
        self.rows.len()
    }

    pub fn num_labels(&self) -> usize {
        self.rows[0].len()
    }

    /// `Some(j)` if row `i` is the standard basis row e_j.
    pub fn pure_label(&self, i: usize) -> Option<usize> {
        unit_index(&self.rows[i])
    }
}

impl TryFrom<Vec<Vec<u8>>> for PartialLabelMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<u8>>) -> Result<Self> {
        Self::new(rows)
    }
}

impl From<PartialLabelMatrix> for Vec<Vec<u8>> {
    fn from(m: PartialLabelMatrix) -> Self {
        m.rows
    }
}

pub(crate) fn unit_index(row: &[u8]) -> Option<usize> {
    let mut ones = row.iter().enumerate().filter(|(_, &v)| v == 1);
    match (ones.next(), ones.next()) {
        (Some((j, _)), None) => Some(j),
        _ => None,
    }
}

/// Condition (C): no two columns are identical.
pub fn check_condition_c(s: &PartialLabelMatrix) -> bool {
    columns_distinct(s.rows())
}

/// Condition (D): no row is a standard basis row.
pub fn check_condition_d(s: &PartialLabelMatrix) -> bool {
    (0..s.num_sources()).all(|i| s.pure_label(i).is_none())
}

pub(crate) fn columns_distinct(rows: &[Vec<u8>]) -> bool {
    let l = rows.first().map(Vec::len).unwrap_or(0);
    for a in 0..l {
        for b in a + 1..l {
            if rows.iter().all(|r| r[a] == r[b]) {
                return false;
            }
        }
    }
    true
}

/// Greedy running componentwise minimum over the rows of `b`, keeping a row's
/// minimum only if at least one 1 survives.
pub fn find_set(b: &[Vec<u8>]) -> Result<Vec<u8>> {
    if b.iter().all(|r| r.iter().all(|&v| v == 0)) {
        return Err(Error::Input("find_set needs a nonzero entry".into()));
    }
    // Start from a row that carries a 1.
    let start = b.iter().position(|r| r.contains(&1)).expect("checked above");
    let mut v = b[start].clone();
    for row in b {
        let cand: Vec<u8> = v.iter().zip(row).map(|(a, c)| (*a).min(*c)).collect();
        if cand.iter().map(|&x| x as usize).sum::<usize>() >= 1 {
            v = cand;
        }
    }
    Ok(v)
}

/// Outcome of a vertex test: whether a permutation was found, and the
/// (transposed) assignment matrix. When `found`, row j of `matrix` selects
/// the candidate equal to base j.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VertexVerdict {
    pub found: bool,
    pub matrix: Vec<Vec<u8>>,
}

impl VertexVerdict {
    pub(crate) fn reject_identity(l: usize) -> Self {
        Self {
            found: false,
            matrix: identity(l),
        }
    }

    /// `perm[j]` = index of the candidate equal to base j.
    pub fn as_permutation(&self) -> Option<Vec<usize>> {
        if !self.found {
            return None;
        }
        self.matrix.iter().map(|r| unit_index(r)).collect()
    }
}

fn identity(l: usize) -> Vec<Vec<u8>> {
    (0..l)
        .map(|i| (0..l).map(|j| u8::from(i == j)).collect())
        .collect()
}

fn is_permutation(c: &[Vec<u8>]) -> bool {
    let l = c.len();
    c.iter().all(|r| r.iter().map(|&v| v as usize).sum::<usize>() == 1)
        && (0..l).all(|j| c.iter().map(|r| r[j] as usize).sum::<usize>() == 1)
}

fn transpose(c: &[Vec<u8>]) -> Vec<Vec<u8>> {
    let l = c.len();
    (0..l).map(|j| (0..l).map(|i| c[i][j]).collect()).collect()
}

/// Builds the assignment matrix from support-containment verdicts and runs
/// the elimination rounds. `contains(j, i)` reports whether source j shares
/// a positive proportion with candidate i.
pub(crate) fn assign_vertices(
    s: &PartialLabelMatrix,
    l: usize,
    mut contains: impl FnMut(usize, usize) -> bool,
) -> VertexVerdict {
    let mut c = vec![vec![1u8; l]; l];
    for (i, ci) in c.iter_mut().enumerate() {
        for (j, sj) in s.rows().iter().enumerate() {
            if contains(j, i) {
                ci.iter_mut().zip(sj).for_each(|(a, b)| *a = (*a).min(*b));
            }
        }
    }
    for _ in 0..l {
        for i in 0..l {
            if let Some(j) = unit_index(&c[i]) {
                for (r, row) in c.iter_mut().enumerate() {
                    row[j] = u8::from(r == i);
                }
            }
        }
    }
    VertexVerdict {
        found: is_permutation(&c),
        matrix: transpose(&c),
    }
}

/// Tests whether `candidates` is a permutation of the bases, and if so finds it.
pub fn vertex_test<T: SimplexPoint>(s: &PartialLabelMatrix, contaminated: &[T], candidates: &[T]) -> VertexVerdict {
    let l = candidates.len();
    for i in 0..l {
        for j in 0..l {
            if i == j {
                continue;
            }
            let overlap = kappa_two_exact(&candidates[i], &candidates[j])
                .map(|k| k.kappa > POSITIVE_KAPPA_TOL)
                .unwrap_or(true);
            if overlap {
                return VertexVerdict::reject_identity(l);
            }
        }
    }
    assign_vertices(s, l, |j, i| {
        kappa_two_exact(&contaminated[j], &candidates[i])
            .map(|k| k.kappa > POSITIVE_KAPPA_TOL)
            // identical distributions: κ = 1
            .unwrap_or(true)
    })
}

/// Rows of `matrix` select entries of `items`: output j = items[k] where matrix[j][k] = 1.
pub fn apply_assignment<T: Clone>(matrix: &[Vec<u8>], items: &[T]) -> Result<Vec<T>> {
    matrix
        .iter()
        .map(|row| {
            unit_index(row)
                .map(|k| items[k].clone())
                .ok_or_else(|| Error::Input("assignment row is not a unit vector".into()))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PartialLabelOutput<T> {
    /// Bases in index order.
    pub bases: Vec<T>,
    /// Mixing index at which the vertex test accepted.
    pub k: usize,
    pub matrix: Vec<Vec<u8>>,
    /// More sources than labels: no identifiability guarantee backs this case.
    pub experimental: bool,
    pub trace: Vec<PartialLabelTraceRecord>,
}

/// One mixing index tried by [`partial_label`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialLabelTraceRecord {
    pub k: usize,
    /// False when some residue had κ = 1 and the round was skipped.
    pub residues_built: bool,
    pub accepted: bool,
}

/// Recovers the bases in index order from contaminated distributions and their partial labels.
pub fn partial_label<T: SimplexPoint>(
    s: &PartialLabelMatrix,
    contaminated: &[T],
    seed: u64,
) -> Result<PartialLabelOutput<T>> {
    let l = s.num_labels();
    let m = s.num_sources();
    if contaminated.len() != m {
        return Err(Error::Input(format!(
            "{m} label rows but {} contaminated distributions",
            contaminated.len()
        )));
    }
    if l < 2 || m < l {
        return Err(Error::Input(format!("need 2 <= L <= M, got L = {l}, M = {m}")));
    }
    if !check_condition_c(s) {
        return Err(Error::Input("label matrix has two identical columns".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q: Vec<T> = (0..l)
        .map(|_| combine(contaminated, &dirichlet_uniform(&mut rng, m)))
        .collect::<Result<_>>()?;
    let mut w = q.clone();
    let mut trace = Vec::new();
    for k in 2..=MAX_MIXING_INDEX {
        if !rebuild_candidates(&q, &mut w, k)? {
            trace.push(PartialLabelTraceRecord {
                k,
                residues_built: false,
                accepted: false,
            });
            continue;
        }
        let verdict = vertex_test(s, contaminated, &w);
        trace.push(PartialLabelTraceRecord {
            k,
            residues_built: true,
            accepted: verdict.found,
        });
        if verdict.found {
            return Ok(PartialLabelOutput {
                bases: apply_assignment(&verdict.matrix, &w)?,
                k,
                matrix: verdict.matrix,
                experimental: m > l,
                trace,
            });
        }
    }
    Err(Error::Convergence(format!(
        "vertex test never accepted for k <= {MAX_MIXING_INDEX}"
    )))
}

/// One pass of W_i ← Residue((1/k)Q_i + (1 − 1/k)Q̄_i | {Q_j}_{j>i} ∪ {W_j}_{j<i}).
/// Returns false if some multi-sample κ reached 1.
fn rebuild_candidates<T: SimplexPoint>(q: &[T], w: &mut [T], k: usize) -> Result<bool> {
    let l = q.len();
    let inv_k = 1.0 / k as f64;
    for i in 0..l {
        let pool: Vec<T> = q[i + 1..]
            .iter()
            .cloned()
            .chain(w[..i].iter().cloned())
            .collect();
        let mean = combine(&pool, &vec![1.0 / (l - 1) as f64; l - 1])?;
        let target = combine(&[q[i].clone(), mean], &[inv_k, 1.0 - inv_k])?;
        match kappa_multi_exact(&target, &pool)?.residue {
            Some(r) => w[i] = r,
            None => return Ok(false),
        }
    }
    Ok(true)
}
