use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distribution::{DiscreteDistribution, EmpiricalDistribution, SUM_TOL};
use super::sets::{ratio_order, CandidateSetList, Measure, SetDescriptor};
use crate::error::{Error, Result};

/// Denominators at or below this value make a candidate set inadmissible.
pub const DENOMINATOR_TOL: f64 = 1e-12;

/// Values within this distance of the minimum count as ties; the first wins.
pub const TIE_TOL: f64 = 1e-12;

/// An affine combination of source distributions, `Σ w_i P̃_i` with `Σ w_i = 1`.
///
/// Weights may be negative. Components are sorted by source index; a source
/// stays in the list (and in the dependency set) even if its merged weight
/// cancels to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedMixtureEstimate {
    components: Vec<(usize, f64)>,
}

impl SignedMixtureEstimate {
    pub fn new(components: Vec<(usize, f64)>) -> Result<Self> {
        Self::build(components).map_err(|e| match e {
            Error::Numerical(m) => Error::Input(m),
            other => other,
        })
    }

    /// The raw empirical distribution of one source.
    pub fn source(index: usize) -> Self {
        Self {
            components: vec![(index, 1.0)],
        }
    }

    /// `Σ c_k E_k` for coefficients summing to one.
    pub fn affine(terms: &[(f64, &SignedMixtureEstimate)]) -> Result<Self> {
        let components = terms
            .iter()
            .flat_map(|(c, est)| est.components.iter().map(move |&(i, w)| (i, c * w)))
            .collect();
        Self::build(components)
    }

    fn build(mut components: Vec<(usize, f64)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Numerical("estimate has no components".into()));
        }
        if components.iter().any(|(_, w)| !w.is_finite()) {
            return Err(Error::Numerical("non-finite estimate weight".into()));
        }
        components.sort_by_key(|&(i, _)| i);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(components.len());
        for (i, w) in components {
            match merged.last_mut() {
                Some((j, acc)) if *j == i => *acc += w,
                _ => merged.push((i, w)),
            }
        }
        let total: f64 = merged.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::Numerical(format!("estimate weights sum to {total}, expected 1")));
        }
        Ok(Self { components: merged })
    }

    pub fn components(&self) -> &[(usize, f64)] {
        &self.components
    }

    /// Source indices the estimate depends on.
    pub fn dependency_set(&self) -> Vec<usize> {
        self.components.iter().map(|&(i, _)| i).collect()
    }

    pub fn weight_sum(&self) -> f64 {
        self.components.iter().map(|(_, w)| w).sum()
    }

    /// Σ w_i · P̃_i(S); not clamped to [0, 1].
    pub fn evaluate<M: Measure>(&self, sources: &[M], set: &SetDescriptor) -> Result<f64> {
        let mut acc = 0.0;
        for &(i, w) in &self.components {
            let src = sources
                .get(i)
                .ok_or_else(|| Error::Input(format!("estimate references missing source {i}")))?;
            acc += w * src.measure(set)?;
        }
        Ok(acc)
    }
}

/// VC penalty `γ(I) = Σ_{i∈I} 3·sqrt((V·ln(n_i+1) + ln(2 n_i)) / n_i)`.
pub fn vc_penalty(dependency_set: &[usize], sample_sizes: &[usize], vc_dimension: usize) -> Result<f64> {
    if vc_dimension == 0 {
        return Err(Error::Input("VC dimension must be >= 1".into()));
    }
    let v = vc_dimension as f64;
    let mut total = 0.0;
    for &i in dependency_set {
        let n = *sample_sizes
            .get(i)
            .ok_or_else(|| Error::Input(format!("no sample size for source {i}")))?;
        if n == 0 {
            return Err(Error::Input(format!("source {i} has sample size 0")));
        }
        let n = n as f64;
        total += 3.0 * ((v * (n + 1.0).ln() + (2.0 * n).ln()) / n).sqrt();
    }
    Ok(total)
}

/// Masses of every source on every column (row-major, sources × columns).
#[derive(Debug, Clone, PartialEq)]
pub struct MassTable {
    rows: Vec<Vec<f64>>,
}

impl MassTable {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = rows.first().map(Vec::len).unwrap_or(0);
        if width == 0 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::Input("mass table must be a non-empty rectangle".into()));
        }
        Ok(Self { rows })
    }

    /// Empirical fractions of each sample on each candidate set.
    pub fn from_empirical(sources: &[EmpiricalDistribution], candidates: &CandidateSetList) -> Result<Self> {
        for (pos, s) in sources.iter().enumerate() {
            if s.source_index() != pos {
                return Err(Error::Input(format!(
                    "source at position {pos} carries index {}",
                    s.source_index()
                )));
            }
        }
        Self::from_measures(sources, candidates.sets())
    }

    /// Exact masses of discrete distributions on each candidate set.
    pub fn from_discrete(sources: &[DiscreteDistribution], candidates: &CandidateSetList) -> Result<Self> {
        Self::from_measures(sources, candidates.sets())
    }

    fn from_measures<M: Measure + Sync>(sources: &[M], sets: &[SetDescriptor]) -> Result<Self> {
        let rows = sources
            .iter()
            .map(|src| sets.par_iter().map(|s| src.measure(s)).collect::<Result<Vec<f64>>>())
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    pub fn num_sources(&self) -> usize {
        self.rows.len()
    }

    pub fn num_columns(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, source: usize) -> &[f64] {
        &self.rows[source]
    }

    /// Values of `estimate` on every column.
    pub fn values(&self, estimate: &SignedMixtureEstimate) -> Result<Vec<f64>> {
        for &(i, _) in estimate.components() {
            if i >= self.rows.len() {
                return Err(Error::Input(format!("estimate references missing source {i}")));
            }
        }
        let width = self.num_columns();
        Ok((0..width)
            .into_par_iter()
            .with_min_len(1024)
            .map(|c| {
                estimate
                    .components()
                    .iter()
                    .map(|&(i, w)| w * self.rows[i][c])
                    .sum()
            })
            .collect())
    }
}

/// How the columns of the mass table become candidate sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateMode {
    /// Each column is one candidate set.
    Fixed,
    /// Columns are atoms; each (F, H) pair is searched over the prefix sets
    /// of atoms ordered by the ratio F(x)/H(x).
    RatioSublevel,
}

/// Result of a penalized κ search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaEstimate {
    /// Clamped to [0, 1].
    pub kappa: f64,
    /// Position of the minimizing set in the enumeration (prefix length − 1 in
    /// ratio-sublevel mode).
    pub set_index: usize,
}

/// Everything the penalized estimators need: source masses, sample sizes and the penalty setup.
#[derive(Debug, Clone)]
pub struct EstimationContext {
    table: MassTable,
    sample_sizes: Vec<usize>,
    vc_dimension: usize,
    penalty_scale: f64,
    mode: CandidateMode,
}

impl EstimationContext {
    pub fn new(
        table: MassTable,
        sample_sizes: Vec<usize>,
        vc_dimension: usize,
        penalty_scale: f64,
        mode: CandidateMode,
    ) -> Result<Self> {
        if sample_sizes.len() != table.num_sources() {
            return Err(Error::Input(format!(
                "{} sample sizes for {} sources",
                sample_sizes.len(),
                table.num_sources()
            )));
        }
        if sample_sizes.contains(&0) {
            return Err(Error::Input("sample sizes must be >= 1".into()));
        }
        if vc_dimension == 0 {
            return Err(Error::Input("VC dimension must be >= 1".into()));
        }
        if !(penalty_scale.is_finite() && penalty_scale >= 0.0) {
            return Err(Error::Input(format!("penalty scale {penalty_scale} must be finite and >= 0")));
        }
        Ok(Self {
            table,
            sample_sizes,
            vc_dimension,
            penalty_scale,
            mode,
        })
    }

    /// Context over point samples and a fixed candidate family.
    pub fn empirical(
        sources: &[EmpiricalDistribution],
        candidates: &CandidateSetList,
        penalty_scale: f64,
    ) -> Result<Self> {
        let table = MassTable::from_empirical(sources, candidates)?;
        let sizes = sources.iter().map(EmpiricalDistribution::len).collect();
        Self::new(table, sizes, candidates.vc_dimension(), penalty_scale, CandidateMode::Fixed)
    }

    /// Context over discrete distributions searched with ratio-sublevel sets.
    ///
    /// With `penalty_scale = 0` the penalized κ equals the exact κ.
    pub fn discrete(sources: &[DiscreteDistribution], sample_sizes: Vec<usize>, penalty_scale: f64) -> Result<Self> {
        let first = sources
            .first()
            .ok_or_else(|| Error::Input("no sources".into()))?;
        if sources.iter().any(|s| s.atoms() != first.atoms()) {
            return Err(Error::Input("discrete sources must share one atom list".into()));
        }
        let rows = sources.iter().map(|s| s.mass().to_vec()).collect();
        let v = first.atoms().len();
        Self::new(MassTable::new(rows)?, sample_sizes, v, penalty_scale, CandidateMode::RatioSublevel)
    }

    pub fn with_vc_dimension(mut self, vc_dimension: usize) -> Result<Self> {
        if vc_dimension == 0 {
            return Err(Error::Input("VC dimension must be >= 1".into()));
        }
        self.vc_dimension = vc_dimension;
        Ok(self)
    }

    pub fn table(&self) -> &MassTable {
        &self.table
    }

    pub fn sample_sizes(&self) -> &[usize] {
        &self.sample_sizes
    }

    pub fn vc_dimension(&self) -> usize {
        self.vc_dimension
    }

    pub fn penalty_scale(&self) -> f64 {
        self.penalty_scale
    }

    pub fn mode(&self) -> CandidateMode {
        self.mode
    }

    pub fn num_sources(&self) -> usize {
        self.table.num_sources()
    }

    /// Scaled penalty γ(𝒟(estimate)).
    pub fn penalty(&self, estimate: &SignedMixtureEstimate) -> Result<f64> {
        if self.penalty_scale == 0.0 {
            return Ok(0.0);
        }
        Ok(self.penalty_scale
            * vc_penalty(&estimate.dependency_set(), &self.sample_sizes, self.vc_dimension)?)
    }

    /// Penalized κ̂(F | H): the minimum over candidate sets of
    /// `(F(S) + γ_F) / (H(S) − γ_H)₊`, skipping sets whose denominator vanishes.
    pub fn kappa_hat(&self, f: &SignedMixtureEstimate, h: &SignedMixtureEstimate) -> Result<KappaEstimate> {
        let fv = self.table.values(f)?;
        let hv = self.table.values(h)?;
        let gf = self.penalty(f)?;
        let gh = self.penalty(h)?;
        let ratios: Vec<f64> = match self.mode {
            CandidateMode::Fixed => fv
                .iter()
                .zip(&hv)
                .map(|(&a, &b)| penalized_ratio(a, b, gf, gh))
                .collect(),
            CandidateMode::RatioSublevel => {
                let order = ratio_order(&fv, &hv);
                let (mut cf, mut ch) = (0.0, 0.0);
                order
                    .iter()
                    .map(|&a| {
                        cf += fv[a];
                        ch += hv[a];
                        penalized_ratio(cf, ch, gf, gh)
                    })
                    .collect()
            }
        };
        let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        if !min.is_finite() {
            return Err(Error::Estimation(format!(
                "no candidate set has positive penalized denominator (penalty {gh:.6})"
            )));
        }
        let set_index = ratios
            .iter()
            .position(|&r| r <= min + TIE_TOL)
            .expect("minimum is attained");
        Ok(KappaEstimate {
            kappa: min.clamp(0.0, 1.0),
            set_index,
        })
    }

    /// ResidueHat(F | H) = (F − κ̂H)/(1 − κ̂) as an affine combination.
    pub fn residue_hat(&self, f: &SignedMixtureEstimate, h: &SignedMixtureEstimate) -> Result<SignedMixtureEstimate> {
        let kappa = self.kappa_hat(f, h)?.kappa;
        residue_with_kappa(f, h, kappa)
    }

    /// Values of an estimate on each column of the table.
    pub fn values(&self, estimate: &SignedMixtureEstimate) -> Result<Vec<f64>> {
        self.table.values(estimate)
    }
}

fn penalized_ratio(f: f64, h: f64, gf: f64, gh: f64) -> f64 {
    let den = (h - gh).max(0.0);
    if den <= DENOMINATOR_TOL {
        f64::INFINITY
    } else {
        (f + gf) / den
    }
}

/// `(F − κH)/(1 − κ)`; fails when κ is numerically 1.
pub fn residue_with_kappa(
    f: &SignedMixtureEstimate,
    h: &SignedMixtureEstimate,
    kappa: f64,
) -> Result<SignedMixtureEstimate> {
    if kappa >= 1.0 - 1e-9 {
        return Err(Error::Degenerate(format!(
            "estimated kappa reached {kappa}: the estimates cannot be separated"
        )));
    }
    let scale = 1.0 / (1.0 - kappa);
    SignedMixtureEstimate::affine(&[(scale, f), (-kappa * scale, h)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn penalty_matches_direct_formula() {
        let g = vc_penalty(&[0], &[100], 2).unwrap();
        let direct = 3.0 * ((2.0 * 101f64.ln() + 200f64.ln()) / 100.0).sqrt();
        assert!((g - direct).abs() < 1e-15);
        assert!((g - 1.1435).abs() < 1e-4);
        assert_eq!(vc_penalty(&[], &[100], 2).unwrap(), 0.0);
        let both = vc_penalty(&[0, 1], &[100, 300], 2).unwrap();
        let sep = vc_penalty(&[0], &[100, 300], 2).unwrap() + vc_penalty(&[1], &[100, 300], 2).unwrap();
        assert_eq!(both, sep);
    }

    #[test]
    fn penalty_decreases_in_n() {
        let mut prev = f64::INFINITY;
        for n in 3..2000 {
            let g = vc_penalty(&[0], &[n], 3).unwrap();
            assert!(g < prev);
            prev = g;
        }
    }

    #[test]
    fn signed_mixture_is_linear() {
        let f = DiscreteDistribution::from_masses(vec![0.6, 0.4]).unwrap();
        let h = DiscreteDistribution::from_masses(vec![0.4, 0.6]).unwrap();
        let est = SignedMixtureEstimate::new(vec![(0, 2.0), (1, -1.0)]).unwrap();
        let v = est.evaluate(&[f, h], &SetDescriptor::Atoms(vec![0])).unwrap();
        assert!((v - 0.8).abs() < 1e-15);
    }

    #[test]
    fn construction_checks_weight_sum() {
        assert!(SignedMixtureEstimate::new(vec![(0, 0.5)]).is_err());
        let e = SignedMixtureEstimate::new(vec![(2, 0.5), (0, 0.25), (2, 0.25)]).unwrap();
        assert_eq!(e.components(), &[(0, 0.25), (2, 0.75)]);
        assert_eq!(e.dependency_set(), vec![0, 2]);
    }

    #[test]
    fn cancelled_components_stay_in_dependency_set() {
        let a = SignedMixtureEstimate::new(vec![(0, 2.0), (1, -1.0)]).unwrap();
        let b = SignedMixtureEstimate::source(1);
        let c = SignedMixtureEstimate::affine(&[(0.5, &a), (0.5, &b)]).unwrap();
        assert_eq!(c.dependency_set(), vec![0, 1]);
        assert_eq!(c.components()[1].1, 0.0);
    }

    #[test]
    fn swamped_denominator_is_estimation_error() {
        let srcs = vec![
            DiscreteDistribution::from_masses(vec![0.5, 0.5]).unwrap(),
            DiscreteDistribution::from_masses(vec![0.2, 0.8]).unwrap(),
        ];
        let ctx = EstimationContext::discrete(&srcs, vec![5, 5], 1.0).unwrap();
        let err = ctx
            .kappa_hat(&SignedMixtureEstimate::source(0), &SignedMixtureEstimate::source(1))
            .unwrap_err();
        assert!(matches!(err, Error::Estimation(_)));
    }

    #[test]
    fn plug_in_kappa_is_exact_ratio() {
        let srcs = vec![
            DiscreteDistribution::from_masses(vec![0.8, 0.2]).unwrap(),
            DiscreteDistribution::from_masses(vec![0.3, 0.7]).unwrap(),
        ];
        let ctx = EstimationContext::discrete(&srcs, vec![100, 100], 0.0).unwrap();
        let k = ctx
            .kappa_hat(&SignedMixtureEstimate::source(0), &SignedMixtureEstimate::source(1))
            .unwrap();
        assert!((k.kappa - 2.0 / 7.0).abs() < 1e-12);
        let r = ctx
            .residue_hat(&SignedMixtureEstimate::source(0), &SignedMixtureEstimate::source(1))
            .unwrap();
        assert!((r.weight_sum() - 1.0).abs() < 1e-12);
        let v = ctx.values(&r).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-12 && v[1].abs() < 1e-12);
    }

    #[test]
    fn zero_kappa_residue_is_identity() {
        let f = SignedMixtureEstimate::new(vec![(0, 1.5), (1, -0.5)]).unwrap();
        let h = SignedMixtureEstimate::source(2);
        let r = residue_with_kappa(&f, &h, 0.0).unwrap();
        assert_eq!(r.components(), &[(0, 1.5), (1, -0.5), (2, 0.0)]);
        assert!(matches!(residue_with_kappa(&f, &h, 1.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn first_minimizer_wins_ties() {
        let table = MassTable::new(vec![vec![0.2, 0.1, 0.2], vec![0.4, 0.2, 0.4]]).unwrap();
        let ctx = EstimationContext::new(table, vec![10, 10], 1, 0.0, CandidateMode::Fixed).unwrap();
        let k = ctx
            .kappa_hat(&SignedMixtureEstimate::source(0), &SignedMixtureEstimate::source(1))
            .unwrap();
        assert_eq!(k.set_index, 0);
        assert!((k.kappa - 0.5).abs() < 1e-15);
    }
}
