//! Matching estimates to true bases and scoring the match.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest base count scored by exhaustive permutation search.
pub const MAX_ALIGNED_BASES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Best permutation of estimates onto bases.
    Permute,
    /// Estimate i is scored against base i.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentScore {
    /// Estimate i is matched to base `permutation[i]`.
    pub permutation: Vec<usize>,
    /// Sup-distance of each estimate to its matched base.
    pub distances: Vec<f64>,
    pub max_distance: f64,
    pub mean_distance: f64,
}

/// Largest absolute difference over the evaluated sets.
pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Rearranges `p` into the next permutation in lexicographic order.
fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).expect("successor exists");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Scores estimates against oracles, both given as their values on a shared
/// list of evaluation sets. In permute mode the permutation minimizing the
/// largest distance wins, then the smallest total; remaining ties go to the
/// lexicographically first permutation.
pub fn align_and_score(estimates: &[Vec<f64>], oracles: &[Vec<f64>], mode: ScoreMode) -> Result<AlignmentScore> {
    let l = oracles.len();
    if estimates.len() != l || l == 0 {
        return Err(Error::Input(format!("{} estimates for {l} bases", estimates.len())));
    }
    let width = oracles[0].len();
    if estimates.iter().chain(oracles).any(|v| v.len() != width) {
        return Err(Error::Input("estimates and oracles must be evaluated on the same sets".into()));
    }
    let dist: Vec<Vec<f64>> = estimates
        .iter()
        .map(|e| oracles.iter().map(|o| sup_distance(e, o)).collect())
        .collect();
    let cost = |p: &[usize]| {
        let d: Vec<f64> = p.iter().enumerate().map(|(i, &j)| dist[i][j]).collect();
        let max = d.iter().copied().fold(0.0, f64::max);
        let sum: f64 = d.iter().sum();
        (max, sum)
    };
    let mut perm: Vec<usize> = (0..l).collect();
    let mut best = perm.clone();
    if mode == ScoreMode::Permute {
        if l > MAX_ALIGNED_BASES {
            return Err(Error::Input(format!(
                "permutation search supports at most {MAX_ALIGNED_BASES} bases, got {l}"
            )));
        }
        let mut best_cost = cost(&perm);
        while next_permutation(&mut perm) {
            let c = cost(&perm);
            if c.0 < best_cost.0 || (c.0 == best_cost.0 && c.1 < best_cost.1) {
                best_cost = c;
                best.clone_from(&perm);
            }
        }
    }
    let distances: Vec<f64> = best.iter().enumerate().map(|(i, &j)| dist[i][j]).collect();
    Ok(AlignmentScore {
        max_distance: distances.iter().copied().fold(0.0, f64::max),
        mean_distance: distances.iter().sum::<f64>() / l as f64,
        permutation: best,
        distances,
    })
}
