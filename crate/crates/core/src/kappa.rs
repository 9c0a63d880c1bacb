//! Exact κ* and residues on probability vectors (mixture proportions or
//! discrete distributions), plus the joint irreducibility check.

use crate::error::{Error, Result};
use crate::lp::{maximize, Constraint, LpOutcome, Relation};
use crate::measure::{DiscreteDistribution, SimplexPoint, SUPPORT_TOL};

/// Two points closer than this in L∞ are treated as equal.
pub const EQUALITY_TOL: f64 = 1e-12;

/// Residue coordinates below this are rounded up to zero; below its negation
/// the computation is rejected.
const RESIDUE_NEGATIVE_TOL: f64 = 1e-9;

/// Total multi-sample proportion at or above `1 − KAPPA_ONE_TOL` counts as κ = 1.
pub const KAPPA_ONE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct KappaResult<T> {
    /// In [0, 1].
    pub kappa: f64,
    /// `None` only when a multi-sample κ reaches 1.
    pub residue: Option<T>,
    /// Per-component proportions (multi-sample only; empty otherwise).
    pub nus: Vec<f64>,
}

/// κ*(F | H) = min over atoms with H(x) > 0 of F(x)/H(x), and the residue
/// G = (F − κH)/(1 − κ).
pub fn kappa_two_exact<T: SimplexPoint>(f: &T, h: &T) -> Result<KappaResult<T>> {
    check_same_space(f, h)?;
    if f.linf(h) <= EQUALITY_TOL {
        return Err(Error::Degenerate("kappa of a distribution against itself".into()));
    }
    let (fc, hc) = (f.coords(), h.coords());
    let (argmin, ratio) = hc
        .iter()
        .enumerate()
        .filter(|(_, &hx)| hx > SUPPORT_TOL)
        .map(|(x, &hx)| (x, fc[x] / hx))
        .fold((usize::MAX, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
    if argmin == usize::MAX {
        return Err(Error::Input("second argument has no mass".into()));
    }
    let kappa = ratio.clamp(0.0, 1.0);
    if kappa >= 1.0 {
        return Err(Error::Degenerate("kappa is 1: the distributions coincide".into()));
    }
    let mut g: Vec<f64> = fc
        .iter()
        .zip(hc)
        .map(|(a, b)| (a - kappa * b) / (1.0 - kappa))
        .collect();
    // The minimizing atom is exactly zero in exact arithmetic.
    g[argmin] = 0.0;
    let residue = f.rebuild(clean_residue(g)?)?;
    Ok(KappaResult {
        kappa,
        residue: Some(residue),
        nus: Vec::new(),
    })
}

/// Residue(F | H).
pub fn residue_exact<T: SimplexPoint>(f: &T, h: &T) -> Result<T> {
    Ok(kappa_two_exact(f, h)?
        .residue
        .expect("two-sample residue always exists"))
}

/// κ*(F₀ | F₁, …, F_K) via the LP max Σν s.t. Σ ν_i F_i ≤ F₀, ν ≥ 0.
///
/// The residue is the LP's vertex; it need not be the only maximizer.
pub fn kappa_multi_exact<T: SimplexPoint>(f0: &T, others: &[T]) -> Result<KappaResult<T>> {
    if others.is_empty() {
        return Err(Error::Input("multi-sample kappa needs at least one component".into()));
    }
    for o in others {
        check_same_space(f0, o)?;
    }
    let dim = f0.dim();
    let snap = |v: f64| if v.abs() < SUPPORT_TOL { 0.0 } else { v };
    let target: Vec<f64> = f0.coords().iter().map(|&v| snap(v)).collect();
    let comps: Vec<Vec<f64>> = others
        .iter()
        .map(|o| o.coords().iter().map(|&v| snap(v)).collect())
        .collect();
    let constraints: Vec<Constraint> = (0..dim)
        .map(|x| Constraint::new(comps.iter().map(|c| c[x]).collect(), Relation::Le, target[x]))
        .collect();
    let objective = vec![1.0; others.len()];
    let nus = match maximize(&objective, &constraints, &[])? {
        LpOutcome::Optimal { x, .. } => x.into_iter().map(|v| v.max(0.0)).collect::<Vec<_>>(),
        other => {
            return Err(Error::Numerical(format!("kappa linear program ended {other:?}")));
        }
    };
    let total: f64 = nus.iter().sum();
    if total >= 1.0 - KAPPA_ONE_TOL {
        return Ok(KappaResult {
            kappa: 1.0,
            residue: None,
            nus,
        });
    }
    let g: Vec<f64> = (0..dim)
        .map(|x| {
            let used: f64 = nus.iter().zip(&comps).map(|(n, c)| n * c[x]).sum();
            (target[x] - used) / (1.0 - total)
        })
        .collect();
    let residue = f0.rebuild(clean_residue(g)?)?;
    Ok(KappaResult {
        kappa: total.clamp(0.0, 1.0),
        residue: Some(residue),
        nus,
    })
}

/// Multi-sample residue; fails with `Degenerate` when κ = 1.
pub fn multi_residue_exact<T: SimplexPoint>(f0: &T, others: &[T]) -> Result<T> {
    kappa_multi_exact(f0, others)?
        .residue
        .ok_or_else(|| Error::Degenerate("multi-sample kappa is 1".into()))
}

/// True iff every distribution in the linear span of `bases` that is a
/// probability vector lies in their convex hull.
///
/// For each i solves min γ_i s.t. Σ γ_j P_j ≥ 0 atomwise, Σ γ_j = 1 (γ free).
pub fn check_joint_irreducibility(bases: &[DiscreteDistribution]) -> Result<bool> {
    if bases.len() < 2 {
        return Err(Error::Input("joint irreducibility needs at least two bases".into()));
    }
    let atoms = bases[0].atoms();
    if bases.iter().any(|b| b.atoms() != atoms) {
        return Err(Error::Input("bases must share one atom list".into()));
    }
    let l = bases.len();
    let mut constraints: Vec<Constraint> = (0..atoms.len())
        .map(|x| Constraint::new(bases.iter().map(|b| b.mass()[x]).collect(), Relation::Ge, 0.0))
        .collect();
    constraints.push(Constraint::new(vec![1.0; l], Relation::Eq, 1.0));
    let free = vec![true; l];
    for i in 0..l {
        let mut objective = vec![0.0; l];
        objective[i] = -1.0;
        match maximize(&objective, &constraints, &free)? {
            LpOutcome::Optimal { value, .. } => {
                if -value < -1e-9 {
                    return Ok(false);
                }
            }
            LpOutcome::Unbounded => return Ok(false),
            LpOutcome::Infeasible => {
                return Err(Error::Numerical("irreducibility program is infeasible".into()))
            }
        }
    }
    Ok(true)
}

fn check_same_space<T: SimplexPoint>(a: &T, b: &T) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Input(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Rounds tiny negatives to zero (rejecting real ones), snaps tiny entries and renormalizes.
fn clean_residue(mut g: Vec<f64>) -> Result<Vec<f64>> {
    for v in g.iter_mut() {
        if !v.is_finite() || *v < -RESIDUE_NEGATIVE_TOL {
            return Err(Error::Numerical(format!("residue coordinate {v} is negative")));
        }
        if *v < SUPPORT_TOL {
            *v = 0.0;
        }
    }
    let total: f64 = g.iter().sum();
    if total <= 0.0 {
        return Err(Error::Numerical("residue has no mass".into()));
    }
    g.iter_mut().for_each(|v| *v /= total);
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::MixtureProportion;
    use proptest::prelude::*;

    #[test]
    fn degenerate_anchored_program_stays_feasible() {
        // degenerate pivots here once produced a tableau that drifted off the constraints
        let rows = [
            [0.2783225040320131, 0.0, 0.0, 0.0, 0.062444365482519706, 0.22016570902203597, 0.11602548298001884, 0.09024437881850905, 0.22204561158012678, 0.010751948084776674],
            [0.0, 0.37720897495466266, 0.0, 0.0, 0.08524935627036449, 0.2366353113530859, 0.10833843180792317, 0.11999027923709968, 0.030503235461751425, 0.04207441091511258],
            [0.0, 0.0, 0.37292159204153785, 0.0, 0.023892523027881717, 0.0004499594308869153, 0.008014492014370857, 0.20864816004900513, 0.14586591270029028, 0.24020736073602728],
            [0.0, 0.0, 0.0, 0.22782457357847408, 0.36674535824588084, 0.13728920321774704, 0.1558939461304429, 0.044235838628914684, 0.0008428469365712582, 0.0671682332619693],
        ];
        let bases: Vec<_> = rows
            .iter()
            .map(|r| dd(r))
            .collect();
        assert!(check_joint_irreducibility(&bases).unwrap());
    }

    fn mp(w: &[f64]) -> MixtureProportion {
        MixtureProportion::new(w.to_vec()).unwrap()
    }

    fn dd(w: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::from_masses(w.to_vec()).unwrap()
    }

    /// min over non-empty atom subsets of F(S)/H(S), subsets with H(S) > 0.
    fn subset_oracle(f: &[f64], h: &[f64]) -> f64 {
        let a = f.len();
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << a) {
            let (mut fs, mut hs) = (0.0, 0.0);
            for x in 0..a {
                if mask >> x & 1 == 1 {
                    fs += f[x];
                    hs += h[x];
                }
            }
            if hs > 1e-12 {
                best = best.min(fs / hs);
            }
        }
        best.min(1.0)
    }

    #[test]
    fn disjoint_supports_give_zero() {
        let r = kappa_two_exact(&dd(&[1.0, 0.0]), &dd(&[0.0, 1.0])).unwrap();
        assert_eq!(r.kappa, 0.0);
        assert_eq!(r.residue.unwrap().mass(), &[1.0, 0.0]);
    }

    #[test]
    fn half_overlap() {
        let r = kappa_two_exact(&dd(&[0.5, 0.5]), &dd(&[1.0, 0.0])).unwrap();
        assert!((r.kappa - 0.5).abs() < 1e-15);
        assert_eq!(r.residue.unwrap().mass(), &[0.0, 1.0]);
    }

    #[test]
    fn two_sevenths() {
        let (f, h) = (dd(&[0.8, 0.2]), dd(&[0.3, 0.7]));
        let r = kappa_two_exact(&f, &h).unwrap();
        assert!((r.kappa - subset_oracle(f.mass(), h.mass())).abs() < 1e-12);
        assert!((r.kappa - 2.0 / 7.0).abs() < 1e-12);
        let g = r.residue.unwrap();
        assert!((g.mass()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_inputs_are_degenerate() {
        let f = dd(&[0.3, 0.7]);
        assert!(matches!(kappa_two_exact(&f, &f), Err(Error::Degenerate(_))));
    }

    #[test]
    fn multi_sample_uniform_point() {
        let r = kappa_multi_exact(&mp(&[1.0 / 3.0; 3]), &[mp(&[0.0, 1.0, 0.0]), mp(&[0.0, 0.0, 1.0])]).unwrap();
        assert!((r.kappa - 2.0 / 3.0).abs() < 1e-9);
        assert!((r.nus[0] - 1.0 / 3.0).abs() < 1e-9 && (r.nus[1] - 1.0 / 3.0).abs() < 1e-9);
        assert!(r.residue.unwrap().linf(&mp(&[1.0, 0.0, 0.0])) < 1e-9);
        // lattice oracle
        let mut best: f64 = 0.0;
        for a in 0..=1000 {
            for b in 0..=(1000 - a) {
                let (x, y) = (a as f64 / 1000.0, b as f64 / 1000.0);
                if x <= 1.0 / 3.0 + 1e-12 && y <= 1.0 / 3.0 + 1e-12 {
                    best = best.max(x + y);
                }
            }
        }
        assert!((best - r.kappa).abs() < 2e-3);
    }

    #[test]
    fn multi_sample_zero_case() {
        let r = kappa_multi_exact(&mp(&[1.0, 0.0]), &[mp(&[0.0, 1.0])]).unwrap();
        assert_eq!(r.kappa, 0.0);
        assert!(r.residue.unwrap().linf(&mp(&[1.0, 0.0])) < 1e-12);
    }

    #[test]
    fn multi_sample_full_containment_is_flagged() {
        let r = kappa_multi_exact(&mp(&[0.5, 0.5]), &[mp(&[1.0, 0.0]), mp(&[0.0, 1.0])]).unwrap();
        assert_eq!(r.kappa, 1.0);
        assert!(r.residue.is_none());
        assert!(matches!(
            multi_residue_exact(&mp(&[0.5, 0.5]), &[mp(&[1.0, 0.0]), mp(&[0.0, 1.0])]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn anchored_bases_are_irreducible() {
        let bases = vec![
            dd(&[0.5, 0.0, 0.0, 0.5]),
            dd(&[0.0, 0.6, 0.0, 0.4]),
            dd(&[0.0, 0.0, 0.7, 0.3]),
        ];
        assert!(check_joint_irreducibility(&bases).unwrap());
    }

    #[test]
    fn convex_redundant_bases_are_not() {
        let bases = vec![dd(&[0.5, 0.5]), dd(&[1.0, 0.0]), dd(&[0.0, 1.0])];
        assert!(!check_joint_irreducibility(&bases).unwrap());
    }

    #[test]
    fn overlapping_pair_is_not() {
        // (0.5,0.5) and (0.2,0.8): the span contains (0,1) which is outside the hull.
        let bases = vec![dd(&[0.5, 0.5]), dd(&[0.2, 0.8])];
        assert!(!check_joint_irreducibility(&bases).unwrap());
    }

    fn simplex_point(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, len).prop_filter_map("zero vector", |v| {
            let s: f64 = v.iter().sum();
            (s > 1e-3).then(|| v.iter().map(|x| x / s).collect())
        })
    }

    fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..=6).prop_flat_map(|l| (simplex_point(l), simplex_point(l)))
    }

    proptest! {
        #[test]
        fn residue_reconstructs_input((f, h) in pair()) {
            let (f, h) = (mp(&f), mp(&h));
            prop_assume!(f.linf(&h) > 1e-6);
            let r = kappa_two_exact(&f, &h).unwrap();
            let g = r.residue.unwrap();
            for x in 0..f.dim() {
                let back = (1.0 - r.kappa) * g.weights()[x] + r.kappa * h.weights()[x];
                prop_assert!((back - f.weights()[x]).abs() < 1e-9);
            }
            let min = g.weights().iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!(min <= 1e-9);
        }

        #[test]
        fn two_sample_matches_subset_oracle((f, h) in pair()) {
            let (fd, hd) = (dd(&f), dd(&h));
            prop_assume!(fd.linf(&hd) > 1e-6);
            let r = kappa_two_exact(&fd, &hd).unwrap();
            prop_assert!((r.kappa - subset_oracle(fd.mass(), hd.mass())).abs() < 1e-9);
        }

        #[test]
        fn single_component_lp_matches_ratio((f, h) in pair()) {
            let (f, h) = (mp(&f), mp(&h));
            prop_assume!(f.linf(&h) > 1e-6);
            let two = kappa_two_exact(&f, &h).unwrap();
            let multi = kappa_multi_exact(&f, std::slice::from_ref(&h)).unwrap();
            prop_assert!((two.kappa - multi.kappa).abs() < 1e-9);
        }
    }
}
