//! Randomized numerical checks of the functional inequalities behind the
//! entropy estimate.

mod checks;
mod constants;
mod sampling;

pub use checks::{
    check_gagliardo_instance, check_gamma_bound, check_n2_inequality, h2_norm, log_sobolev_pair, GammaCheck,
    GnsInstance, N2Check,
};
pub use constants::{eval_c0_gamma, gamma_for_dimension, CoercivityConstants};
pub use sampling::{derive_seed, sample_test_function, sample_with_derivatives, SampleSpec, SampledFunction};
mod suites;

pub use suites::{
    constructive_exponents, dummy_refinement, dummy_report, gamma_adversarial, gamma_suite, gns_suite,
    logsob_suite, n2_required_constants, n2_study, AdversarialReport, ConstructiveExponents,
    InequalityReport, N2Study, RefinementStudy, SuiteConfig, GAMMA_TOL,
};
