//! Estimators over count records and density matrices.

mod chsh;
mod entanglement;
mod fits;
mod tomography;

use serde::{Deserialize, Serialize};

pub use chsh::{analytic_polarizer_counts, bell_s, correlation_e, ChshResult, ChshSettings};
pub use entanglement::{
    concurrence, eof, fidelity, fidelity_between, higher_order_fidelity_estimate, EntanglementReport,
};
pub use fits::{fringe_visibility, hom_visibility, FringeFit, HomFit, CHSH_VISIBILITY_BOUND};
pub use tomography::{
    analytic_tomography_counts, bootstrap_metrics, james_settings, mle_from_frequencies, overcomplete_settings, projector,
    tomography_mle,
    BootstrapSummary, MleOptions, TomographyResult,
};

/// A value with its one-standard-deviation uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn new(value: f64, stderr: f64) -> Self {
        Estimate { value, stderr }
    }
}
