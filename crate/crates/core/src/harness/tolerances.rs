//! Pass/fail thresholds of every experiment, in one place.
//!
//! Each experiment copies the values it uses into its report, so a report
//! always states the tolerance each verdict was made against.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Exact identities of the jump map and drift.
    pub identity: f64,
    /// Target slope of `E sup‖μᵐ − p‖²` against `m`.
    pub lln_slope: f64,
    pub lln_slope_tol: f64,
    /// Largest allowed ratio of the last to the first tilt-limit mean.
    pub tilt_final_ratio: f64,
    /// Allowed increase between consecutive tilt-limit means, in standard
    /// errors of the difference.
    pub tilt_monotone_se: f64,
    /// Allowed deviation of the coupling slope from `−(1 − 2θ)`.
    pub coupling_slope_tol: f64,
    /// Allowed deviation of the fluctuation second-moment slope from `−2θ`.
    pub clt_slope_tol: f64,
    /// `|Ī(G₀(ψ)) − ½‖ψ‖²|` for jump round trips.
    pub jump_roundtrip: f64,
    /// `|I − Ī|` on per-cell controls.
    pub jump_i_vs_ibar: f64,
    /// Relative error of the diffusion round trip at the base grid.
    pub diffusion_roundtrip_rel: f64,
    /// Required error reduction factor when refining to `dx/2, dt/4`.
    pub diffusion_refinement_ratio: f64,
    /// Mass conservation of the grid solvers.
    pub conservation: f64,
    /// Closed-form Hilbert seminorm check.
    pub seminorm: f64,
    /// Monte Carlo identities, in standard errors.
    pub mc_se: f64,
    /// Allowed deviation of the fourth-moment slope from −2.
    pub moment_slope_tol: f64,
    /// Total variation between simulated and exact jump-chain marginals.
    pub exactness_tv: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            identity: 1e-12,
            lln_slope: -1.0,
            lln_slope_tol: 0.2,
            tilt_final_ratio: 0.5,
            tilt_monotone_se: 2.0,
            coupling_slope_tol: 0.3,
            clt_slope_tol: 0.3,
            jump_roundtrip: 1e-6,
            jump_i_vs_ibar: 1e-8,
            diffusion_roundtrip_rel: 0.02,
            diffusion_refinement_ratio: 0.5,
            conservation: 1e-8,
            seminorm: 1e-8,
            mc_se: 3.0,
            moment_slope_tol: 0.3,
            exactness_tv: 0.02,
        }
    }
}
