use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::distribution::{DiscreteDistribution, EmpiricalDistribution, SUPPORT_TOL};
use crate::error::{Error, Result};

/// Family of measurable sets searched by the penalized κ estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassKind {
    /// Closed Euclidean balls; VC dimension d + 1.
    Balls,
    /// Closed axis-aligned boxes; VC dimension 2d.
    AxisRectangles,
    /// Prefix sets of atoms ordered by a mass ratio (finite sample spaces).
    RatioSublevel,
}

impl ClassKind {
    /// VC dimension of the class over R^d (over `d` atoms for ratio sublevel sets).
    pub fn vc_dimension(self, d: usize) -> usize {
        match self {
            ClassKind::Balls => d + 1,
            ClassKind::AxisRectangles => 2 * d,
            ClassKind::RatioSublevel => d,
        }
    }
}

/// One measurable set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetDescriptor {
    Ball { center: Vec<f64>, radius: f64 },
    Rectangle { lo: Vec<f64>, hi: Vec<f64> },
    /// Atom positions (indices into the shared atom list).
    Atoms(Vec<usize>),
}

impl SetDescriptor {
    /// Ambient dimension for geometric sets, `None` for atom subsets.
    pub fn dim(&self) -> Option<usize> {
        match self {
            SetDescriptor::Ball { center, .. } => Some(center.len()),
            SetDescriptor::Rectangle { lo, .. } => Some(lo.len()),
            SetDescriptor::Atoms(_) => None,
        }
    }

    /// Membership test for a point of R^d. Atom subsets contain no points.
    pub fn contains(&self, p: &[f64]) -> bool {
        match self {
            SetDescriptor::Ball { center, radius } => {
                let d2: f64 = center.iter().zip(p).map(|(c, x)| (c - x) * (c - x)).sum();
                d2 <= radius * radius
            }
            SetDescriptor::Rectangle { lo, hi } => p
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(x, (l, h))| *l <= *x && *x <= *h),
            SetDescriptor::Atoms(_) => false,
        }
    }
}

/// Measures that can be evaluated on a set descriptor.
pub trait Measure {
    fn measure(&self, set: &SetDescriptor) -> Result<f64>;
}

impl Measure for EmpiricalDistribution {
    /// Fraction of the sample inside `set`.
    fn measure(&self, set: &SetDescriptor) -> Result<f64> {
        match set.dim() {
            None => {
                return Err(Error::Input(
                    "atom subsets cannot be evaluated on point samples".into(),
                ))
            }
            Some(d) if d != self.dim() => {
                return Err(Error::Input(format!(
                    "set has dimension {d}, sample has dimension {}",
                    self.dim()
                )))
            }
            _ => {}
        }
        let interval = match set {
            SetDescriptor::Ball { center, radius } if self.dim() == 1 => {
                Some((center[0] - radius, center[0] + radius))
            }
            SetDescriptor::Rectangle { lo, hi } if self.dim() == 1 => Some((lo[0], hi[0])),
            _ => None,
        };
        let count = match interval.and_then(|(lo, hi)| self.count_in_interval(lo, hi)) {
            Some(c) => c,
            None => self.points().iter().filter(|p| set.contains(p)).count(),
        };
        Ok(count as f64 / self.len() as f64)
    }
}

impl Measure for DiscreteDistribution {
    fn measure(&self, set: &SetDescriptor) -> Result<f64> {
        match set {
            SetDescriptor::Atoms(positions) => self.mass_of(positions),
            _ => Err(Error::Input(
                "discrete distributions are evaluated on atom subsets only".into(),
            )),
        }
    }
}

/// A finite enumeration of sets from one VC class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSetList {
    kind: ClassKind,
    sets: Vec<SetDescriptor>,
    vc_dimension: usize,
}

impl CandidateSetList {
    pub fn new(kind: ClassKind, sets: Vec<SetDescriptor>, vc_dimension: usize) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::Input("candidate set list is empty".into()));
        }
        if vc_dimension == 0 {
            return Err(Error::Input("VC dimension must be >= 1".into()));
        }
        Ok(Self {
            kind,
            sets,
            vc_dimension,
        })
    }

    /// The `A` prefix sets of atoms sorted by `numerator / denominator`.
    ///
    /// Atoms with no denominator mass go last. For a fixed pair of measures,
    /// every sublevel set `{x : F(x) < t H(x)}` is one of these prefixes.
    pub fn ratio_sublevel(numerator: &[f64], denominator: &[f64]) -> Result<Self> {
        if numerator.len() != denominator.len() || numerator.is_empty() {
            return Err(Error::Input("ratio sublevel sets need equal, non-empty mass vectors".into()));
        }
        let order = ratio_order(numerator, denominator);
        let sets = (1..=order.len())
            .map(|k| {
                let mut prefix = order[..k].to_vec();
                prefix.sort_unstable();
                SetDescriptor::Atoms(prefix)
            })
            .collect();
        Self::new(ClassKind::RatioSublevel, sets, numerator.len())
    }

    /// Singleton atom sets `{0}, {1}, ..., {A-1}`.
    pub fn atom_singletons(n_atoms: usize) -> Result<Self> {
        let sets = (0..n_atoms).map(|a| SetDescriptor::Atoms(vec![a])).collect();
        Self::new(ClassKind::RatioSublevel, sets, n_atoms.max(1))
    }

    pub fn kind(&self) -> ClassKind {
        self.kind
    }

    pub fn sets(&self) -> &[SetDescriptor] {
        &self.sets
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn vc_dimension(&self) -> usize {
        self.vc_dimension
    }

    /// Appends the sets of `other` (same class) after the current ones.
    pub fn extended(&self, other: &CandidateSetList) -> Result<Self> {
        if other.kind != self.kind {
            return Err(Error::Input("cannot merge candidate lists of different classes".into()));
        }
        let mut sets = self.sets.clone();
        sets.extend(other.sets.iter().cloned());
        Self::new(self.kind, sets, self.vc_dimension.max(other.vc_dimension))
    }
}

/// Atom positions ordered by ascending `num/den`, atoms with `den <= SUPPORT_TOL` last.
pub(crate) fn ratio_order(num: &[f64], den: &[f64]) -> Vec<usize> {
    let (mut supported, rest): (Vec<usize>, Vec<usize>) =
        (0..num.len()).partition(|&a| den[a] > SUPPORT_TOL);
    supported.sort_by(|&a, &b| (num[a] / den[a]).total_cmp(&(num[b] / den[b])).then(a.cmp(&b)));
    supported.extend(rest);
    supported
}

/// Enumerates data-anchored candidate sets from the pooled sample.
///
/// Balls are centred at pooled points with radii equal to distances to other
/// pooled points; rectangles are products of per-axis intervals whose
/// endpoints are data coordinates (d <= 3). When the full family exceeds
/// `cap`, exactly `cap` members are taken along a seeded stride through the
/// enumeration order.
pub fn build_candidates(
    kind: ClassKind,
    pooled: &[Vec<f64>],
    cap: usize,
    seed: u64,
) -> Result<CandidateSetList> {
    let n = pooled.len();
    if n < 2 {
        return Err(Error::Input(format!("need at least 2 pooled points, got {n}")));
    }
    if cap < n {
        return Err(Error::Input(format!("cap {cap} is below the pooled sample size {n}")));
    }
    let d = pooled[0].len();
    if d == 0 || pooled.iter().any(|p| p.len() != d) {
        return Err(Error::Input("pooled points have inconsistent dimension".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        ClassKind::Balls => {
            let total = (n as u128) * (n as u128 - 1);
            let sets = stride_indices(total, cap, &mut rng)
                .into_iter()
                .map(|idx| {
                    let center = (idx / (n as u128 - 1)) as usize;
                    let mut other = (idx % (n as u128 - 1)) as usize;
                    if other >= center {
                        other += 1;
                    }
                    let c = &pooled[center];
                    let radius = c
                        .iter()
                        .zip(&pooled[other])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    SetDescriptor::Ball {
                        center: c.clone(),
                        radius,
                    }
                })
                .collect();
            CandidateSetList::new(kind, sets, kind.vc_dimension(d))
        }
        ClassKind::AxisRectangles => {
            if d > 3 {
                return Err(Error::Unsupported(format!(
                    "axis rectangles are enumerated for d <= 3 only, got d = {d}"
                )));
            }
            let breaks: Vec<Vec<f64>> = (0..d)
                .map(|a| {
                    let mut v: Vec<f64> = pooled.iter().map(|p| p[a]).collect();
                    v.sort_by(f64::total_cmp);
                    v.dedup();
                    v
                })
                .collect();
            let per_axis: Vec<u128> = breaks
                .iter()
                .map(|b| {
                    let m = b.len() as u128;
                    m * (m + 1) / 2
                })
                .collect();
            let total = per_axis.iter().product::<u128>();
            let sets = stride_indices(total, cap, &mut rng)
                .into_iter()
                .map(|mut idx| {
                    let mut lo = Vec::with_capacity(d);
                    let mut hi = Vec::with_capacity(d);
                    for (b, &count) in breaks.iter().zip(&per_axis) {
                        let (i, j) = decode_pair(idx % count, b.len() as u128);
                        idx /= count;
                        lo.push(b[i]);
                        hi.push(b[j]);
                    }
                    SetDescriptor::Rectangle { lo, hi }
                })
                .collect();
            CandidateSetList::new(kind, sets, kind.vc_dimension(d))
        }
        ClassKind::RatioSublevel => Err(Error::Input(
            "ratio sublevel sets are built from a pair of atom masses, not from points".into(),
        )),
    }
}

/// `min(total, cap)` distinct indices in `0..total`: all of them, or a seeded
/// stride `off, off + step, ...` (mod total) with `step` coprime to `total`.
fn stride_indices(total: u128, cap: usize, rng: &mut ChaCha8Rng) -> Vec<u128> {
    if total <= cap as u128 {
        return (0..total).collect();
    }
    let off = rng.random_range(0..total);
    let mut step = total / 3 + rng.random_range(0..(total / 3).max(1));
    while gcd(step, total) != 1 {
        step += 1;
    }
    let mut idx = off;
    let mut out = Vec::with_capacity(cap);
    for _ in 0..cap {
        out.push(idx);
        idx = (idx + step) % total;
    }
    out
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Inverse of the enumeration of pairs `i <= j < m` ordered by `i`, then `j`.
fn decode_pair(t: u128, m: u128) -> (usize, usize) {
    // first index of row i: i*m - i*(i-1)/2
    let row_start = |i: u128| i * m - i * i.saturating_sub(1) / 2;
    let (mut lo, mut hi) = (0u128, m - 1);
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if row_start(mid) <= t {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let i = lo;
    let j = i + (t - row_start(i));
    (i as usize, j as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_pair_enumerates_upper_triangle() {
        let m = 5u128;
        let mut seen = Vec::new();
        for t in 0..m * (m + 1) / 2 {
            seen.push(decode_pair(t, m));
        }
        let mut expected = Vec::new();
        for i in 0..5 {
            for j in i..5 {
                expected.push((i, j));
            }
        }
        assert_eq!(seen, expected);
    }

    #[test]
    fn stride_is_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut idx = stride_indices(9900, 500, &mut rng);
        assert_eq!(idx.len(), 500);
        idx.sort_unstable();
        idx.dedup();
        assert_eq!(idx.len(), 500);
        assert!(idx.iter().all(|&i| i < 9900));
    }

    #[test]
    fn three_points_give_at_most_six_balls() {
        let pts = vec![vec![0.0], vec![1.0], vec![3.0]];
        let c = build_candidates(ClassKind::Balls, &pts, 100, 0).unwrap();
        assert!(c.len() <= 6);
        assert_eq!(c.vc_dimension(), 2);
    }

    #[test]
    fn hundred_points_cap_500_is_exact_and_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Vec<f64>> = (0..100)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let a = build_candidates(ClassKind::Balls, &pts, 500, 7).unwrap();
        let b = build_candidates(ClassKind::Balls, &pts, 500, 7).unwrap();
        assert_eq!(a.len(), 500);
        assert_eq!(a, b);
        assert_eq!(a.vc_dimension(), 3);
    }

    #[test]
    fn rectangles_reject_high_dimension() {
        let pts = vec![vec![0.0; 4], vec![1.0; 4]];
        let err = build_candidates(ClassKind::AxisRectangles, &pts, 10, 0).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn rectangles_cover_data_breakpoints() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 2.0]];
        let c = build_candidates(ClassKind::AxisRectangles, &pts, 100, 0).unwrap();
        // 3 intervals per axis
        assert_eq!(c.len(), 9);
        assert_eq!(c.vc_dimension(), 4);
        assert!(c.sets().contains(&SetDescriptor::Rectangle {
            lo: vec![0.0, 0.0],
            hi: vec![1.0, 2.0]
        }));
    }

    #[test]
    fn cap_below_sample_size_is_rejected() {
        let pts = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(build_candidates(ClassKind::Balls, &pts, 2, 0).is_err());
        assert!(build_candidates(ClassKind::Balls, &pts[..1], 10, 0).is_err());
    }

    #[test]
    fn ratio_sublevel_has_one_prefix_per_atom() {
        let c = CandidateSetList::ratio_sublevel(&[0.1, 0.2, 0.3, 0.4], &[0.4, 0.3, 0.2, 0.1]).unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(c.sets()[0], SetDescriptor::Atoms(vec![0]));
        assert_eq!(c.sets()[3], SetDescriptor::Atoms(vec![0, 1, 2, 3]));
    }

    #[test]
    fn empirical_interval_fraction() {
        let e = EmpiricalDistribution::new(0, vec![vec![0.1], vec![0.9]]).unwrap();
        let s = SetDescriptor::Rectangle {
            lo: vec![0.0],
            hi: vec![0.5],
        };
        assert_eq!(e.measure(&s).unwrap(), 0.5);
        let ball = SetDescriptor::Ball {
            center: vec![0.25],
            radius: 0.25,
        };
        assert_eq!(e.measure(&ball).unwrap(), 0.5);
    }

    #[test]
    fn fast_path_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random::<f64>()]).collect();
        let e = EmpiricalDistribution::new(0, pts.clone()).unwrap();
        for _ in 0..50 {
            let c = rng.random::<f64>();
            let r = rng.random::<f64>() * 0.3;
            let s = SetDescriptor::Ball {
                center: vec![c],
                radius: r,
            };
            let brute = pts.iter().filter(|p| s.contains(p)).count() as f64 / 200.0;
            assert_eq!(e.measure(&s).unwrap(), brute);
        }
    }

    #[test]
    fn dimension_mismatch_is_input_error() {
        let e = EmpiricalDistribution::new(0, vec![vec![0.1, 0.2]]).unwrap();
        let s = SetDescriptor::Ball {
            center: vec![0.0],
            radius: 1.0,
        };
        assert!(matches!(e.measure(&s), Err(Error::Input(_))));
    }

    #[test]
    fn discrete_mass_on_atom_subset() {
        let d = DiscreteDistribution::from_masses(vec![0.2, 0.3, 0.5]).unwrap();
        let v = d.measure(&SetDescriptor::Atoms(vec![0, 2])).unwrap();
        assert!((v - 0.7).abs() < 1e-15);
    }
}
