//! Trajectory audits: accumulated information content, grid-search
//! oracles for the per-step minimisation, and the energy ledger.

use serde::{Serialize, Serializer};

use crate::dissipation::{DissipationLaw, EtaSlot};
use crate::extended::ExtReal;
use crate::integrators::Trajectory;
use crate::models::HamiltonianModel;
use crate::phase::PhaseVector;
use crate::{tol, Error, Result};

/// Largest number of candidate deviations a grid search may evaluate.
pub const MAX_GRID_EVALUATIONS: usize = 10_000_000;

/// Left-endpoint sum of per-step information contents weighted by the
/// step lengths. Zero for an empty trajectory.
pub fn gap_functional(trajectory: &Trajectory) -> ExtReal {
    let mut total = ExtReal::ZERO;
    for (k, residual) in trajectory.residuals.iter().enumerate() {
        let dt = trajectory.times[k + 1] - trajectory.times[k];
        total = total + residual.scale(dt);
    }
    total
}

/// A uniform one-dimensional grid shared by every active deviation slot.
#[derive(Clone, Copy, Debug)]
pub struct EtaGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl EtaGrid {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidParameter {
                name: "EtaGrid.range",
                reason: format!("need finite lo < hi, got [{lo}, {hi}]"),
            });
        }
        if points < 2 {
            return Err(Error::InvalidParameter {
                name: "EtaGrid.points",
                reason: format!("need at least two nodes, got {points}"),
            });
        }
        Ok(EtaGrid { lo, hi, points })
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    pub fn node(&self, index: usize) -> f64 {
        if index + 1 == self.points {
            self.hi
        } else {
            self.lo + index as f64 * self.spacing()
        }
    }

    /// Grid node closest to `x` (clamped to the range).
    pub fn nearest(&self, x: f64) -> f64 {
        let raw = ((x - self.lo) / self.spacing()).round();
        let index = raw.clamp(0.0, (self.points - 1) as f64) as usize;
        self.node(index)
    }
}

/// Result of an exhaustive deviation search.
#[derive(Clone, Debug)]
pub struct GridSearch {
    pub best_eta: PhaseVector,
    pub best_value: ExtReal,
    pub spacing: f64,
    pub evaluations: usize,
}

/// Minimises the information content over deviations whose active slots
/// range over the grid; all other slots are pinned at zero, which every
/// law requires of them anyway. Only laws with at most three active
/// slots are searchable this way.
pub fn brute_force_gap(
    law: &DissipationLaw,
    z: &PhaseVector,
    z_dot: &PhaseVector,
    grid: &EtaGrid,
) -> Result<GridSearch> {
    EtaGrid::new(grid.lo, grid.hi, grid.points)?;
    let n = z.dim();
    let slots = law.active_eta_slots(n);
    if slots.len() > 3 {
        return Err(Error::UnsupportedOperation {
            op: "brute_force_gap",
            detail: format!(
                "law `{}` has {} active deviation slots; exhaustive search \
                 is limited to three",
                law.name(),
                slots.len()
            ),
        });
    }
    let evaluations = grid.points.checked_pow(slots.len() as u32).unwrap_or(usize::MAX);
    if evaluations > MAX_GRID_EVALUATIONS {
        return Err(Error::UnsupportedOperation {
            op: "brute_force_gap",
            detail: format!(
                "{evaluations} candidate deviations exceed the cap of {MAX_GRID_EVALUATIONS}"
            ),
        });
    }

    let mut eta_q = vec![0.0; n];
    let mut eta_p = vec![0.0; n];
    let mut best_eta = PhaseVector::zeros(n);
    let mut best_value = ExtReal::INFINITY;
    let mut indices = vec![0usize; slots.len()];
    let mut count = 0usize;
    loop {
        for (slot, &index) in slots.iter().zip(&indices) {
            let value = grid.node(index);
            match slot {
                EtaSlot::Q(i) => eta_q[*i] = value,
                EtaSlot::P(i) => eta_p[*i] = value,
            }
        }
        let eta = PhaseVector::new(eta_q.clone(), eta_p.clone())?;
        let value = law.information_content(z, z_dot, &eta)?;
        count += 1;
        if value < best_value {
            best_value = value;
            best_eta = eta;
        }
        // odometer over the slot indices
        let mut carry = true;
        for digit in indices.iter_mut() {
            if *digit + 1 < grid.points {
                *digit += 1;
                carry = false;
                break;
            }
            *digit = 0;
        }
        if carry || slots.is_empty() {
            break;
        }
    }
    Ok(GridSearch {
        best_eta,
        best_value,
        spacing: grid.spacing(),
        evaluations: count,
    })
}

/// Snaps a deviation onto the grid: active slots move to their nearest
/// node, all other slots are zeroed. Used to compare a stepper's
/// deviation against the grid minimiser on equal footing.
pub fn snap_to_grid(
    law: &DissipationLaw,
    eta: &PhaseVector,
    grid: &EtaGrid,
) -> Result<PhaseVector> {
    let n = eta.dim();
    let mut eta_q = vec![0.0; n];
    let mut eta_p = vec![0.0; n];
    for slot in law.active_eta_slots(n) {
        match slot {
            EtaSlot::Q(i) => eta_q[i] = grid.nearest(eta.q()[i]),
            EtaSlot::P(i) => eta_p[i] = grid.nearest(eta.p()[i]),
        }
    }
    PhaseVector::new(eta_q, eta_p)
}

fn serialize_extended<S: Serializer>(value: &ExtReal, serializer: S) -> std::result::Result<S::Ok, S::Error> {
    if value.is_finite() {
        serializer.serialize_f64(value.value())
    } else {
        serializer.serialize_str("inf")
    }
}

/// Energy ledger and per-step bookkeeping for a recorded trajectory.
///
/// The ledger asserts that the energy drop matches the booked dissipation
/// and itemised impact losses after removing the energy injected through
/// any explicit time dependence:
/// `H(end) - H(start) + dissipated + losses - external ~ 0`,
/// relative to the larger of one, the starting energy and the total
/// energy turnover, plus an allowance for the conservative part of the
/// scheme: a momentum-first step carries a bounded shadow-energy
/// oscillation of order `dt * |<dH/dq, dH/dp>|` that no bookkeeping can
/// remove.
#[derive(Clone, Debug, Serialize)]
pub struct AuditReport {
    pub steps: usize,
    #[serde(serialize_with = "serialize_extended")]
    pub gap_functional: ExtReal,
    pub max_step_residual: f64,
    /// Steps whose information content exceeded the per-step audit
    /// threshold (`RESIDUAL_PER_DT * dt`); diagnostic, not a gate.
    pub flagged_steps: usize,
    pub energy_start: f64,
    pub energy_end: f64,
    pub dissipated_work: f64,
    pub impact_losses: f64,
    /// Energy injected by the explicit time dependence of the energy
    /// function, summed as end-of-step differences.
    pub external_work: f64,
    pub ledger_defect: f64,
    pub ledger_scale: f64,
    /// Shadow-energy oscillation allowance of the conservative scheme.
    pub drift_allowance: f64,
    pub ledger_closed: bool,
    pub violations: Vec<String>,
    pub passed: bool,
}

/// Audits a trajectory against the model that produced it.
pub fn energy_audit(model: &HamiltonianModel, trajectory: &Trajectory) -> Result<AuditReport> {
    let steps = trajectory.steps();
    let mut external_work = 0.0;
    let mut turnover = 0.0;
    let mut flagged = 0usize;
    let mut max_residual = 0.0f64;
    let mut max_dt = 0.0f64;
    let mut max_gradient_product = 0.0f64;
    let mut violations = Vec::new();

    for (k, (z, t)) in trajectory.states.iter().zip(&trajectory.times).enumerate() {
        let dh_dq = model.dh_dq(z, *t)?;
        let dh_dp = model.dh_dp(z, *t)?;
        let product: f64 = dh_dq.iter().zip(&dh_dp).map(|(a, b)| a * b).sum();
        max_gradient_product = max_gradient_product.max(product.abs());
        if k == steps {
            break;
        }

        let t1 = trajectory.times[k + 1];
        let z1 = &trajectory.states[k + 1];
        let injected = model.energy(z1, t1)? - model.energy(z1, *t)?;
        external_work += injected;
        turnover += injected.abs();
        max_dt = max_dt.max(t1 - t);

        let residual = trajectory.residuals[k];
        let threshold = tol::RESIDUAL_PER_DT * (t1 - t);
        if !residual.is_finite() || residual.value() > threshold {
            flagged += 1;
        }
        if residual.is_finite() {
            max_residual = max_residual.max(residual.value());
        }
    }

    let energy_start = trajectory.energies.first().copied().unwrap_or(0.0);
    let energy_end = trajectory.energies.last().copied().unwrap_or(0.0);
    let dissipated_work = trajectory.total_dissipated();
    let impact_losses = trajectory.total_impact_loss();
    turnover += dissipated_work.abs() + impact_losses.abs();

    let ledger_defect =
        energy_end - energy_start + dissipated_work + impact_losses - external_work;
    let ledger_scale = 1.0f64.max(energy_start.abs()).max(turnover);
    let drift_allowance = max_dt * max_gradient_product;
    let ledger_closed =
        ledger_defect.abs() <= tol::LEDGER_RELATIVE * ledger_scale + drift_allowance;
    if !ledger_closed {
        violations.push(format!(
            "energy ledger defect {ledger_defect:.6e} exceeds {:.1e} of scale {ledger_scale:.6e} \
             plus the drift allowance {drift_allowance:.3e}",
            tol::LEDGER_RELATIVE
        ));
    }
    if flagged > 0 {
        violations.push(format!(
            "{flagged} of {steps} steps exceeded the per-step information threshold \
             (worst finite value {max_residual:.3e})"
        ));
    }

    Ok(AuditReport {
        steps,
        gap_functional: gap_functional(trajectory),
        max_step_residual: max_residual,
        flagged_steps: flagged,
        energy_start,
        energy_end,
        dissipated_work,
        impact_losses,
        external_work,
        ledger_defect,
        ledger_scale,
        drift_allowance,
        ledger_closed,
        violations,
        passed: ledger_closed && flagged == 0,
    })
}
