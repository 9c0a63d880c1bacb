//! Distributions, signed mixture estimates and candidate set families.

mod distribution;
mod estimate;
mod sets;

pub use distribution::{
    DiscreteDistribution, EmpiricalDistribution, MixtureProportion, SimplexPoint, NEGATIVE_TOL,
    SUM_TOL, SUPPORT_TOL,
};
#[cfg(test)]
pub(crate) use distribution::linf;
pub use estimate::{
    residue_with_kappa, vc_penalty, CandidateMode, EstimationContext, KappaEstimate, MassTable,
    SignedMixtureEstimate, DENOMINATOR_TOL, TIE_TOL,
};
pub use sets::{build_candidates, CandidateSetList, ClassKind, Measure, SetDescriptor};
