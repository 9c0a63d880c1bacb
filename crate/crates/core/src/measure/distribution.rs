use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coordinates at or below this magnitude are treated as outside the support.
pub const SUPPORT_TOL: f64 = 1e-12;

/// Largest negative coordinate accepted (and clamped to zero) when building a simplex point.
pub const NEGATIVE_TOL: f64 = 1e-12;

/// Tolerance on the coordinate sum of user-supplied simplex points.
pub const SUM_TOL: f64 = 1e-9;

/// A point of a probability simplex on which the exact engine operates.
///
/// Both mixture proportions and discrete distributions are probability
/// vectors; the exact algorithms only need the coordinates and a way to
/// rebuild a point of the same kind from new coordinates.
pub trait SimplexPoint: Clone + std::fmt::Debug {
    fn coords(&self) -> &[f64];

    /// New point of the same kind (same atom list) holding `coords`.
    fn rebuild(&self, coords: Vec<f64>) -> Result<Self>;

    fn dim(&self) -> usize {
        self.coords().len()
    }

    /// L∞ distance between coordinate vectors.
    fn linf(&self, other: &Self) -> f64 {
        linf(self.coords(), other.coords())
    }
}

pub(crate) fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Validates and normalizes a probability vector: clamps tiny negatives, rescales to sum 1.
fn normalize_simplex(mut w: Vec<f64>, negative_tol: f64) -> Result<Vec<f64>> {
    if w.is_empty() {
        return Err(Error::Input("empty probability vector".into()));
    }
    for x in w.iter_mut() {
        if !x.is_finite() {
            return Err(Error::Input("non-finite probability".into()));
        }
        if *x < -negative_tol {
            return Err(Error::Input(format!("negative probability {x}")));
        }
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > SUM_TOL {
        return Err(Error::Input(format!("probabilities sum to {total}, expected 1")));
    }
    w.iter_mut().for_each(|x| *x /= total);
    Ok(w)
}

/// A point of the (L-1)-simplex: the coefficients of a distribution in the base distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureProportion {
    weights: Vec<f64>,
}

impl MixtureProportion {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        Ok(Self {
            weights: normalize_simplex(weights, NEGATIVE_TOL)?,
        })
    }

    /// Standard basis vector `e_index` of the `len`-simplex.
    pub fn vertex(len: usize, index: usize) -> Self {
        let mut weights = vec![0.0; len];
        weights[index] = 1.0;
        Self { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Indices of the strictly positive coordinates.
    pub fn support(&self) -> Vec<usize> {
        support_of(&self.weights)
    }
}

impl SimplexPoint for MixtureProportion {
    fn coords(&self) -> &[f64] {
        &self.weights
    }

    fn rebuild(&self, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != self.weights.len() {
            return Err(Error::Input("proportion length mismatch".into()));
        }
        Self::new(coords)
    }
}

pub(crate) fn support_of(w: &[f64]) -> Vec<usize> {
    w.iter()
        .enumerate()
        .filter(|(_, &x)| x > SUPPORT_TOL)
        .map(|(i, _)| i)
        .collect()
}

/// Probability vector over a finite list of opaque atom identifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    atoms: Vec<u64>,
    mass: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(atoms: Vec<u64>, mass: Vec<f64>) -> Result<Self> {
        if atoms.len() != mass.len() {
            return Err(Error::Input(format!(
                "{} atoms but {} masses",
                atoms.len(),
                mass.len()
            )));
        }
        let mut seen = HashSet::with_capacity(atoms.len());
        if !atoms.iter().all(|a| seen.insert(*a)) {
            return Err(Error::Input("duplicate atom identifier".into()));
        }
        Ok(Self {
            atoms,
            mass: normalize_simplex(mass, NEGATIVE_TOL)?,
        })
    }

    /// Distribution on atoms `0..mass.len()`.
    pub fn from_masses(mass: Vec<f64>) -> Result<Self> {
        let atoms = (0..mass.len() as u64).collect();
        Self::new(atoms, mass)
    }

    /// Distribution proportional to nonnegative counts.
    pub fn from_counts(atoms: Vec<u64>, counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::Input("all counts are zero".into()));
        }
        let mass = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Self::new(atoms, mass)
    }

    pub fn atoms(&self) -> &[u64] {
        &self.atoms
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Total mass of the atoms at the given positions.
    pub fn mass_of(&self, positions: &[usize]) -> Result<f64> {
        positions
            .iter()
            .map(|&p| {
                self.mass
                    .get(p)
                    .copied()
                    .ok_or_else(|| Error::Input(format!("atom position {p} out of range")))
            })
            .sum()
    }
}

impl SimplexPoint for DiscreteDistribution {
    fn coords(&self) -> &[f64] {
        &self.mass
    }

    fn rebuild(&self, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != self.atoms.len() {
            return Err(Error::Input("mass length mismatch".into()));
        }
        Ok(Self {
            atoms: self.atoms.clone(),
            mass: normalize_simplex(coords, NEGATIVE_TOL)?,
        })
    }
}

/// The sample of one contaminated source: `n_i` points in R^d.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    points: Vec<Vec<f64>>,
    dim: usize,
    source_index: usize,
    // Ascending copy of the coordinates, kept for d = 1 interval counting.
    sorted_1d: Option<Vec<f64>>,
}

impl EmpiricalDistribution {
    pub fn new(source_index: usize, points: Vec<Vec<f64>>) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::Input(format!("source {source_index} has no points")))?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::Input("points must have dimension >= 1".into()));
        }
        for p in &points {
            if p.len() != dim {
                return Err(Error::Input(format!(
                    "source {source_index}: mixed point dimensions {} and {}",
                    dim,
                    p.len()
                )));
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::Input(format!("source {source_index}: non-finite coordinate")));
            }
        }
        let sorted_1d = (dim == 1).then(|| {
            let mut xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
            xs.sort_by(f64::total_cmp);
            xs
        });
        Ok(Self {
            points,
            dim,
            source_index,
            sorted_1d,
        })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn source_index(&self) -> usize {
        self.source_index
    }

    /// Number of points inside the closed interval `[lo, hi]`; d = 1 only.
    pub(crate) fn count_in_interval(&self, lo: f64, hi: f64) -> Option<usize> {
        let xs = self.sorted_1d.as_ref()?;
        let start = xs.partition_point(|&x| x < lo);
        let end = xs.partition_point(|&x| x <= hi);
        Some(end.saturating_sub(start))
    }
}
