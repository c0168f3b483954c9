//! Dissipative Hamiltonian mechanics with convex gap accounting.
//!
//! The crate models evolutions `dq/dt = dH/dp + eta_q`, `-dp/dt = dH/dq +
//! eta_p` in which the deviation `eta` from the conservative flow is drawn
//! from a convex dissipation law. Each law assigns the pair (velocity,
//! deviation) an information content `I >= 0`; `I = 0` characterises the
//! admissible evolutions, and `exp(-I)` is the likelihood the law assigns
//! to a proposed step.
//!
//! Modules:
//! * [`extended`]: extended-real arithmetic where +inf encodes constraints.
//! * [`phase`]: phase-space vectors, the duality pairing and symplectic form.
//! * [`convex`]: a conjugation-closed algebra of convex shapes with exact
//!   polars, subdifferentials and proximal maps.
//! * [`dissipation`]: the dissipation laws and their information contents.
//! * [`models`]: Hamiltonian test systems (oscillators, elastoplastic and
//!   damaging solids, unilateral contact).
//! * [`integrators`]: certified steppers that report the deviation and its
//!   information content alongside the state.
//! * [`diagnostics`]: trajectory audits (gap functionals, energy ledgers,
//!   brute-force likelihood maximisation).
//! * [`validation`]: deterministic self-check suites used by the CLI.

pub mod convex;
pub mod diagnostics;
pub mod dissipation;
pub mod error;
pub mod extended;
pub mod integrators;
pub mod models;
pub mod phase;
pub mod validation;

pub use convex::{n_monotone_check, ConjugateTable, ConvexSpec, MonotoneOptions, SeparablePart};
pub use diagnostics::{
    brute_force_gap, energy_audit, gap_functional, snap_to_grid, AuditReport, EtaGrid, GridSearch,
};
pub use dissipation::{damage_rate_potential, AxiomsReport, DissipationLaw, EtaSlot, HalfSpace};
pub use integrators::{
    extract_eta, integrate, step, IntegrateOptions, RunOutcome, RunStatus, StepResult, Trajectory,
};
pub use models::{Forcing, HamiltonianModel, StateLayout};
pub use error::{Error, Result};
pub use extended::ExtReal;
pub use phase::{dual_pairing, symplectic_form, PhaseVector};
pub use validation::{
    run_validation, scenario_catalogue, spec_catalogue, Mutation, Scenario, SuiteResult,
    ValidationSummary,
};

/// Numerical slacks shared across the crate. Each constant states what it
/// guards; tests pin acceptance thresholds to these values rather than
/// re-declaring magic numbers.
pub mod tol {
    /// Entrywise slack for closed-form subdifferential membership.
    pub const MEMBERSHIP: f64 = 1e-8;
    /// Slack below zero tolerated for quantities that are nonnegative in
    /// exact arithmetic (Fenchel gaps, dissipation rates, cyclic sums).
    pub const NONNEGATIVE: f64 = 1e-9;
    /// Fixed-point iteration: convergence threshold and iteration cap.
    pub const FIXED_POINT: f64 = 1e-12;
    pub const FIXED_POINT_MAX_ITERS: usize = 100;
    /// Central finite-difference step for gradient cross-checks.
    pub const FD_STEP: f64 = 1e-5;
    /// Penetration slack when evaluating hard constraints.
    pub const PENETRATION: f64 = 1e-12;
    /// Default half-width of the band around a constraint boundary inside
    /// which a state with active reaction is treated as "on" the boundary.
    pub const BOUNDARY_BAND: f64 = 1e-2;
    /// Approach speeds below this are not counted as impacts.
    pub const IMPACT_SPEED: f64 = 1e-2;
    /// Default per-step information-content budget is this factor times dt.
    pub const RESIDUAL_PER_DT: f64 = 1e-6;
    /// Relative closure demanded of the trajectory energy ledger.
    pub const LEDGER_RELATIVE: f64 = 1e-4;
}
