//! Numerical verification of the sampler's quantitative behaviour:
//! contraction rates, deviation and growth envelopes, local weak/strong
//! error orders, closed-form mixing constants, asymptotic-bias scaling,
//! and modified self-concordance of barrier factors.

mod bias;
mod constants;
mod contraction;
mod duality;
mod envelope;
mod local_error;
mod msc;
mod order;

pub use bias::{bias_scan, BiasPoint, BiasScan};
pub use constants::{
    constants_for_instance, instance_anchors, mixing_constants, strong_error_envelope,
    weak_error_envelope, ConstantsInput, InstanceAnchors, MixingConstants,
};
pub use contraction::{contraction_rate, RateFit};
pub use duality::{canonical_suite_cases, duality_suite, MapSuiteResult};
pub use envelope::{deviation_check, growth_check, growth_gamma, EnvelopePoint, EnvelopeReport};
pub use local_error::{local_errors, local_strong_error, local_weak_error, ErrorEstimate, LocalErrors};
pub use msc::{epsilon_family_map, epsilon_family_witness, msc_pair_ratio, msc_report_polytope, MscReport};
pub use order::{fit_order, OrderFit};
