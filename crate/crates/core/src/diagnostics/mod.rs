//! Numerical checks of the standing assumptions and lemmas.

mod axioms;
mod constants;
mod monitor;
mod rate;

pub use axioms::{gradient_fd_check, manifold_axioms, AxiomCheck, AxiomOptions, AxiomReport};
pub use constants::{estimate_constants, ConstantEstimates, Estimate, Region, RegionSummary, MIN_VALID_SAMPLES, SAFETY};
pub use monitor::{
    expectation_identity, lemma_bound, lemma_monitor, random_state, CheckKind, LemmaConstants, MonitorReport, Violation,
};
pub use rate::{fit_rate, RateFit};
