//! Certified steppers.
//!
//! Every stepper advances the state with a semi-implicit scheme (momentum
//! first, then configuration at the new momentum) and returns, next to the
//! new state, a *certificate*: the rates it realised, the deviation `eta`
//! it applied, and the information content the dissipation law charges
//! that triple. Admissible steps certify at (numerically) zero cost; a
//! step whose certificate exceeds the configured budget aborts the run
//! rather than silently continuing.
//!
//! Discrete conventions. The deviation of a step from `(q0, p0)` at `t`
//! to `(q1, p1)` is measured against partial derivatives evaluated at the
//! mixed state `(q0, p1)` at time `t`; the internal-variable laws evaluate
//! the slot that drives their flow rule at the end-of-step configuration
//! instead (see [`extract_eta`]). Certificates use the stepper's internal
//! closed-form rates, which agree with the finite differences
//! `(z1 - z0) / dt` up to representation rounding.

use serde::Serialize;

use crate::dissipation::DissipationLaw;
use crate::extended::ExtReal;
use crate::models::HamiltonianModel;
use crate::phase::{dot, dual_pairing, PhaseVector};
use crate::{tol, Error, Result};

/// One certified step.
#[derive(Clone, Debug)]
pub struct StepResult {
    pub z_next: PhaseVector,
    /// Rates the stepper realised, in closed form.
    pub rates: PhaseVector,
    /// Deviation from the conservative flow applied over the step.
    pub eta: PhaseVector,
    /// Information content of `(state, rates, eta)` under the law.
    pub residual: ExtReal,
    pub solver_iterations: usize,
    /// True when the step resolved a contact with approach speed above
    /// [`tol::IMPACT_SPEED`].
    pub impact: bool,
    /// True when a restitution impact makes a positive residual expected;
    /// such steps are reported but not gated.
    pub gate_exempt: bool,
    /// Energy removed by a flagged impact, measured as the drop of `H`.
    pub impact_loss: f64,
    /// Dissipated energy `<<rates, eta>> * dt` (zero on flagged impacts,
    /// where the loss is itemised separately).
    pub dissipation: f64,
}

/// Integration window and gating parameters.
#[derive(Clone, Debug)]
pub struct IntegrateOptions {
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    /// Largest admissible per-step information content outside exempt
    /// impacts; defaults to [`tol::RESIDUAL_PER_DT`] `* dt`.
    pub residual_budget: f64,
    /// Contact restitution coefficient in `[0, 1]`; 0 is fully inelastic.
    pub restitution: f64,
}

impl IntegrateOptions {
    pub fn new(t_start: f64, t_end: f64, dt: f64) -> Self {
        IntegrateOptions {
            t_start,
            t_end,
            dt,
            residual_budget: tol::RESIDUAL_PER_DT * dt,
            restitution: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter {
                name: "IntegrateOptions.dt",
                reason: format!("must be positive and finite, got {}", self.dt),
            });
        }
        if !self.t_start.is_finite() || !self.t_end.is_finite() || self.t_end < self.t_start {
            return Err(Error::InvalidParameter {
                name: "IntegrateOptions.window",
                reason: format!("need finite t_start <= t_end, got [{}, {}]", self.t_start, self.t_end),
            });
        }
        if !(self.residual_budget.is_finite() && self.residual_budget > 0.0) {
            return Err(Error::InvalidParameter {
                name: "IntegrateOptions.residual_budget",
                reason: format!("must be positive and finite, got {}", self.residual_budget),
            });
        }
        if !(0.0..=1.0).contains(&self.restitution) {
            return Err(Error::InvalidParameter {
                name: "IntegrateOptions.restitution",
                reason: format!("must lie in [0, 1], got {}", self.restitution),
            });
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        ((self.t_end - self.t_start) / self.dt).round() as usize
    }
}

/// How a run ended.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// The run stopped early; the trajectory holds everything up to the
    /// offending step.
    Aborted { time: f64, reason: String },
}

/// Trajectory data. `times`, `states`, `energies` and the cumulative
/// tallies have one entry per node (steps + 1); `rates`, `etas`,
/// `residuals` and `impacts` have one entry per step.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhaseVector>,
    pub energies: Vec<f64>,
    pub rates: Vec<PhaseVector>,
    pub etas: Vec<PhaseVector>,
    pub residuals: Vec<ExtReal>,
    pub impacts: Vec<bool>,
    /// Cumulative dissipated energy up to each node.
    pub dissipated: Vec<f64>,
    /// Cumulative itemised impact losses up to each node.
    pub impact_losses: Vec<f64>,
}

impl Trajectory {
    fn with_start(z0: PhaseVector, t0: f64, h0: f64, capacity: usize) -> Self {
        let mut t = Trajectory {
            times: Vec::with_capacity(capacity + 1),
            states: Vec::with_capacity(capacity + 1),
            energies: Vec::with_capacity(capacity + 1),
            rates: Vec::with_capacity(capacity),
            etas: Vec::with_capacity(capacity),
            residuals: Vec::with_capacity(capacity),
            impacts: Vec::with_capacity(capacity),
            dissipated: Vec::with_capacity(capacity + 1),
            impact_losses: Vec::with_capacity(capacity + 1),
        };
        t.times.push(t0);
        t.states.push(z0);
        t.energies.push(h0);
        t.dissipated.push(0.0);
        t.impact_losses.push(0.0);
        t
    }

    pub fn steps(&self) -> usize {
        self.etas.len()
    }

    pub fn final_state(&self) -> &PhaseVector {
        self.states.last().expect("trajectory holds the start node")
    }

    pub fn total_dissipated(&self) -> f64 {
        *self.dissipated.last().expect("start node present")
    }

    pub fn total_impact_loss(&self) -> f64 {
        *self.impact_losses.last().expect("start node present")
    }

    /// Largest finite step residual (0 for an empty run); +inf residuals
    /// abort runs and so never appear in completed trajectories.
    pub fn max_residual(&self) -> f64 {
        self.residuals
            .iter()
            .filter(|r| r.is_finite())
            .fold(0.0, |acc, r| acc.max(r.value()))
    }
}

/// A completed or aborted run with its per-step audit trail.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub status: RunStatus,
    /// Human-readable notes about tolerated irregularities (for example
    /// restitution impacts with positive information content).
    pub violations: Vec<String>,
}

/// Advances one step under the given law. Dispatches to the dedicated
/// stepper for each law; the separable law has no dedicated stepper and
/// is rejected.
pub fn step(
    model: &HamiltonianModel,
    law: &DissipationLaw,
    z: &PhaseVector,
    t: f64,
    dt: f64,
    restitution: f64,
) -> Result<StepResult> {
    match law {
        DissipationLaw::Pure => step_pure(model, law, z, t, dt),
        DissipationLaw::Viscous { phi } => step_viscous(model, law, phi, z, t, dt),
        DissipationLaw::Plastic { phi } => step_plastic(model, law, phi, z, t, dt),
        DissipationLaw::Damage { threshold } => step_damage(model, law, *threshold, z, t, dt),
        DissipationLaw::Contact { constraint, .. } => {
            step_contact(model, law, constraint, restitution, z, t, dt)
        }
        DissipationLaw::Separable { .. } => Err(Error::UnsupportedOperation {
            op: "step",
            detail: "the separable law has no dedicated stepper; express it as \
                     viscous/plastic/damage or evaluate it as an audit"
                .into(),
        }),
    }
}

/// Runs the chosen stepper over the window. Numerical failures (budget
/// overruns, divergence, non-finite states) abort the run and return the
/// partial trajectory; usage errors (bad dimensions, invalid options)
/// fail outright.
pub fn integrate(
    model: &HamiltonianModel,
    law: &DissipationLaw,
    z0: &PhaseVector,
    opts: &IntegrateOptions,
) -> Result<RunOutcome> {
    opts.validate()?;
    model.validate()?;
    let n = model.dim();
    law.validate_for_dim(n)?;
    if z0.dim() != n {
        return Err(Error::DimensionMismatch {
            context: "integrate initial state",
            expected: n,
            found: z0.dim(),
        });
    }
    if matches!(law, DissipationLaw::Separable { .. }) {
        return Err(Error::UnsupportedOperation {
            op: "integrate",
            detail: "the separable law has no dedicated stepper".into(),
        });
    }

    let steps = opts.steps();
    let h0 = model.energy(z0, opts.t_start)?;
    let mut trajectory = Trajectory::with_start(z0.clone(), opts.t_start, h0, steps);
    let mut violations = Vec::new();

    for k in 0..steps {
        let t = opts.t_start + k as f64 * opts.dt;
        let z = trajectory.states.last().expect("start node present").clone();
        let result = match step(model, law, &z, t, opts.dt, opts.restitution) {
            Ok(r) => r,
            Err(
                e @ (Error::SolverDiverged { .. }
                | Error::StepRejected { .. }
                | Error::NonFinite { .. }),
            ) => {
                return Ok(RunOutcome {
                    trajectory,
                    status: RunStatus::Aborted {
                        time: t,
                        reason: e.to_string(),
                    },
                    violations,
                });
            }
            Err(e) => return Err(e),
        };

        let finite_state = result
            .z_next
            .q()
            .iter()
            .chain(result.z_next.p())
            .all(|x| x.is_finite());
        if !finite_state {
            return Ok(RunOutcome {
                trajectory,
                status: RunStatus::Aborted {
                    time: t,
                    reason: "state left the finite range".into(),
                },
                violations,
            });
        }

        let over_budget = !result.residual.is_finite()
            || result.residual.value() > opts.residual_budget;
        if over_budget {
            if result.gate_exempt {
                violations.push(format!(
                    "step {k} (t = {t:.6}): restitution impact with information \
                     content {:?} above the budget {:.3e}",
                    result.residual, opts.residual_budget
                ));
            } else {
                return Ok(RunOutcome {
                    trajectory,
                    status: RunStatus::Aborted {
                        time: t,
                        reason: format!(
                            "step information content {:?} exceeds the budget {:.3e}",
                            result.residual, opts.residual_budget
                        ),
                    },
                    violations,
                });
            }
        }

        let t_next = opts.t_start + (k + 1) as f64 * opts.dt;
        let energy = model.energy(&result.z_next, t_next)?;
        trajectory.times.push(t_next);
        trajectory.energies.push(energy);
        trajectory
            .dissipated
            .push(trajectory.total_dissipated() + result.dissipation);
        trajectory
            .impact_losses
            .push(trajectory.total_impact_loss() + result.impact_loss);
        trajectory.states.push(result.z_next);
        trajectory.rates.push(result.rates);
        trajectory.etas.push(result.eta);
        trajectory.residuals.push(result.residual);
        trajectory.impacts.push(result.impact);
    }

    Ok(RunOutcome {
        trajectory,
        status: RunStatus::Completed,
        violations,
    })
}

/// Reconstructs the deviation of a recorded step from the states alone,
/// using the same evaluation conventions the steppers certify against:
/// partials at the mixed state `(q0, p1)` at the step's start time, except
/// that the plastic internal force and the damage driving force are taken
/// at the end-of-step configuration.
pub fn extract_eta(
    model: &HamiltonianModel,
    law: &DissipationLaw,
    z0: &PhaseVector,
    z1: &PhaseVector,
    t: f64,
    dt: f64,
) -> Result<PhaseVector> {
    let n = model.dim();
    if z0.dim() != n || z1.dim() != n {
        return Err(Error::DimensionMismatch {
            context: "extract_eta states",
            expected: n,
            found: z0.dim().min(z1.dim()),
        });
    }
    let qd: Vec<f64> = z1
        .q()
        .iter()
        .zip(z0.q())
        .map(|(a, b)| (a - b) / dt)
        .collect();
    let pd: Vec<f64> = z1
        .p()
        .iter()
        .zip(z0.p())
        .map(|(a, b)| (a - b) / dt)
        .collect();
    let mix = PhaseVector::new(z0.q().to_vec(), z1.p().to_vec())?;
    let dh_dp = model.dh_dp(&mix, t)?;
    let mut dh_dq = model.dh_dq(&mix, t)?;
    match law {
        DissipationLaw::Plastic { .. } | DissipationLaw::Damage { .. } => {
            // The internal driving force is measured where the flow rule
            // was resolved: the end-of-step configuration.
            dh_dq[1] = model.dh_dq(z1, t)?[1];
        }
        _ => {}
    }
    let eta_q: Vec<f64> = qd.iter().zip(&dh_dp).map(|(v, g)| v - g).collect();
    let eta_p: Vec<f64> = pd.iter().zip(&dh_dq).map(|(v, g)| -v - g).collect();
    PhaseVector::new(eta_q, eta_p)
}

/// Solves `p1 = p0 - dt * dH/dq((q0, p1), t)` by fixed point; converges
/// on the second sweep whenever the force does not depend on momentum.
fn implicit_momentum(
    model: &HamiltonianModel,
    z: &PhaseVector,
    t: f64,
    dt: f64,
) -> Result<(Vec<f64>, usize)> {
    let mut p1 = z.p().to_vec();
    for iteration in 1..=tol::FIXED_POINT_MAX_ITERS {
        let trial = PhaseVector::new(z.q().to_vec(), p1.clone())?;
        let force = model.dh_dq(&trial, t)?;
        let next: Vec<f64> = z
            .p()
            .iter()
            .zip(&force)
            .map(|(p0, f)| p0 - dt * f)
            .collect();
        let delta = next
            .iter()
            .zip(&p1)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        p1 = next;
        if delta <= tol::FIXED_POINT {
            return Ok((p1, iteration));
        }
    }
    Err(Error::SolverDiverged {
        op: "implicit momentum update",
        iterations: tol::FIXED_POINT_MAX_ITERS,
        last_delta: f64::NAN,
    })
}

fn certify(
    law: &DissipationLaw,
    z: &PhaseVector,
    rates: &PhaseVector,
    eta: &PhaseVector,
) -> Result<ExtReal> {
    law.information_content(z, rates, eta)
}

fn step_pure(
    model: &HamiltonianModel,
    law: &DissipationLaw,
    z: &PhaseVector,
    t: f64,
    dt: f64,
) -> Result<StepResult> {
    let (p1, iterations) = implicit_momentum(model, z, t, dt)?;
    let mix = PhaseVector::new(z.q().to_vec(), p1.clone())?;
    let velocity = model.dh_dp(&mix, t)?;
    let q1: Vec<f64> = z
        .q()
        .iter()
        .zip(&velocity)
        .map(|(q0, v)| q0 + dt * v)
        .collect();
    let pd: Vec<f64> = p1.iter().zip(z.p()).map(|(a, b)| (a - b) / dt).collect();
    let rates = PhaseVector::new(velocity, pd)?;
    let eta = PhaseVector::zeros(z.dim());
    let residual = certify(law, z, &rates, &eta)?;
    Ok(StepResult {
        z_next: PhaseVector::new(q1, p1)?,
        dissipation: 0.0,
        rates,
        eta,
        residual,
        solver_iterations: iterations,
        impact: false,
        gate_exempt: false,
        impact_loss: 0.0,
    })
}

fn step_viscous(
    model: &HamiltonianModel,
    law: &DissipationLaw,
    phi: &crate::convex::ConvexSpec,
    z: &PhaseVector,
    t: f64,
    dt: f64,
) -> Result<StepResult> {
    let n = z.dim();
    let mass = model.kinetic_mass();
    let lambda = dt / mass;
    // Resolve p1 = mass * prox_{lambda phi}(v_free(p1)) by fixed point;
    // one extra sweep confirms convergence for momentum-independent
    // forces.
    let mut p1 = z.p().to_vec();
    let mut iterations = 0;
    let (v_free, v_next) = loop {
        iterations += 1;
        let trial = PhaseVector::new(z.q().to_vec(), p1.clone())?;
        let force = model.dh_dq(&trial, t)?;
        let v_free: Vec<f64> = z
            .p()
            .iter()
            .zip(&force)
            .map(|(p0, f)| (p0 - dt * f) / mass)
            .collect();
        let v_next = phi.prox(&v_free, lambda)?;
        let next: Vec<f64> = v_next.iter().map(|v| mass * v).collect();
        let delta = next
            .iter()
            .zip(&p1)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        p1 = next;
        if delta <= tol::FIXED_POINT {
            break (v_free, v_next);
        }
        if iterations >= tol::FIXED_POINT_MAX_ITERS {
            return Err(Error::SolverDiverged {
                op: "viscous momentum update",
                iterations,
                last_delta: delta,
            });
        }
    };
    let eta_p: Vec<f64> = v_free
        .iter()
        .zip(&v_next)
        .map(|(free, next)| (free - next) / lambda)
        .collect();
    let q1: Vec<f64> = z
        .q()
        .iter()
        .zip(&v_next)
        .map(|(q0, v)| q0 + dt * v)
        .collect();
    let pd: Vec<f64> = p1.iter().zip(z.p()).map(|(a, b)| (a - b) / dt).collect();
    let rates = PhaseVector::new(v_next, pd)?;
    let eta = PhaseVector::new(vec![0.0; n], eta_p)?;
    let residual = certify(law, z, &rates, &eta)?;
    let dissipation = dual_pairing(&rates, &eta)? * dt;
    Ok(StepResult {
        z_next: PhaseVector::new(q1, p1)?,
        rates,
        eta,
        residual,
        solver_iterations: iterations,
        impact: false,
        gate_exempt: false,
        impact_loss: 0.0,
        dissipation,
    })
}

fn step_plastic(
    model: &HamiltonianModel,
    law: &DissipationLaw,
    phi: &crate::convex::ConvexSpec,
    z: &PhaseVector,
    t: f64,
    dt: f64,
) -> Result<StepResult> {
    let stiffness = model.internal_stiffness().ok_or(Error::UnsupportedOperation {
        op: "step_plastic",
        detail: format!("model `{}` has no internal elastic coupling", model.name()),
    })?;
    let mass = model.kinetic_mass();
    let (q0, p0) = (z.q(), z.p());

    // Momentum first, at the frozen internal variable.
    let force = model.dh_dq(z, t)?;
    let p1 = p0[0] - dt * force[0];
    let q1 = q0[0] + dt * p1 / mass;

    // Elastic trial force at the frozen internal variable, then the
    // return map: the implicit flow rule is exactly a proximal step of
    // the elastic-domain potential.
    let trial = PhaseVector::new(vec![q1, q0[1]], vec![p1, p0[1]])?;
    let sigma_trial = -model.dh_dq(&trial, t)?[1];
    let sigma_next = phi.prox(&[sigma_trial], stiffness * dt)?[0];
    let slip = (sigma_trial - sigma_next) / stiffness;
    let flow = slip / dt;
    let q_i1 = q0[1] + slip;
    let p_i1 = p0[1] + dt * sigma_next;

    let z_next = PhaseVector::new(vec![q1, q_i1], vec![p1, p_i1])?;
    // Certified rates: the internal momentum rate is the resolved force
    // itself, which the update realises up to representation rounding.
    let rates = PhaseVector::new(
        vec![(q1 - q0[0]) / dt, flow],
        vec![(p1 - p0[0]) / dt, sigma_next],
    )?;
    let eta = PhaseVector::new(vec![0.0, flow], vec![0.0, 0.0])?;
    let residual = certify(law, z, &rates, &eta)?;
    let dissipation = dual_pairing(&rates, &eta)? * dt;
    Ok(StepResult {
        z_next,
        rates,
        eta,
        residual,
        solver_iterations: 1,
        impact: false,
        gate_exempt: false,
        impact_loss: 0.0,
        dissipation,
    })
}

fn step_damage(
    model: &HamiltonianModel,
    law: &DissipationLaw,
    threshold: f64,
    z: &PhaseVector,
    t: f64,
    dt: f64,
) -> Result<StepResult> {
    let inertia = model.damage_inertia().ok_or(Error::UnsupportedOperation {
        op: "step_damage",
        detail: format!("model `{}` has no damage variable", model.name()),
    })?;
    let mass = model.kinetic_mass();
    let (q0, p0) = (z.q(), z.p());

    // Momentum and configuration first, at the frozen damage state.
    let force = model.dh_dq(z, t)?;
    let p1 = p0[0] - dt * force[0];
    let q1 = q0[0] + dt * p1 / mass;

    // Driving force at the new configuration; the damage momentum obeys a
    // complementarity update: it slides at the threshold while positive
    // and sticks at zero otherwise.
    let probe = PhaseVector::new(vec![q1, q0[1]], vec![p1, p0[1]])?;
    let driving = -model.dh_dq(&probe, t)?[1];
    let r_free = p0[1] + dt * (driving - threshold);
    let (mut r1, mut drive) = if r_free > 0.0 {
        (r_free, threshold)
    } else {
        (0.0, driving + p0[1] / dt)
    };

    // Growth cap: the damage variable may not leave [0, 1]. A binding cap
    // means the threshold law cannot be honoured this step; the certified
    // deviation then honestly exceeds the threshold and the certificate
    // goes infinite.
    let r_cap = (inertia * (1.0 - q0[1]) / dt).max(0.0);
    if r1 > r_cap {
        r1 = r_cap;
        drive = driving - (r1 - p0[1]) / dt;
    }

    let rate = r1 / inertia;
    let d1 = q0[1] + dt * rate;
    let z_next = PhaseVector::new(vec![q1, d1], vec![p1, r1])?;
    let rates = PhaseVector::new(
        vec![(q1 - q0[0]) / dt, rate],
        vec![(p1 - p0[0]) / dt, (r1 - p0[1]) / dt],
    )?;
    let eta = PhaseVector::new(vec![0.0, 0.0], vec![0.0, drive])?;
    let residual = certify(law, z, &rates, &eta)?;
    let dissipation = dual_pairing(&rates, &eta)? * dt;
    Ok(StepResult {
        z_next,
        rates,
        eta,
        residual,
        solver_iterations: 1,
        impact: false,
        gate_exempt: false,
        impact_loss: 0.0,
        dissipation,
    })
}

#[allow(clippy::too_many_arguments)]
fn step_contact(
    model: &HamiltonianModel,
    law: &DissipationLaw,
    constraint: &crate::dissipation::HalfSpace,
    restitution: f64,
    z: &PhaseVector,
    t: f64,
    dt: f64,
) -> Result<StepResult> {
    let n = z.dim();
    let mass = model.kinetic_mass();
    let normal = &constraint.normal;
    let force = model.dh_dq(z, t)?;
    let p_free: Vec<f64> = z
        .p()
        .iter()
        .zip(&force)
        .map(|(p0, f)| p0 - dt * f)
        .collect();
    let v_free: Vec<f64> = p_free.iter().map(|p| p / mass).collect();
    let q_trial: Vec<f64> = z
        .q()
        .iter()
        .zip(&v_free)
        .map(|(q0, v)| q0 + dt * v)
        .collect();

    if constraint.gap(&q_trial) >= 0.0 {
        // Free step: the trial state respects the constraint.
        let pd: Vec<f64> = p_free.iter().zip(z.p()).map(|(a, b)| (a - b) / dt).collect();
        let rates = PhaseVector::new(v_free, pd)?;
        let eta = PhaseVector::zeros(n);
        let residual = certify(law, z, &rates, &eta)?;
        return Ok(StepResult {
            z_next: PhaseVector::new(q_trial, p_free)?,
            rates,
            eta,
            residual,
            solver_iterations: 1,
            impact: false,
            gate_exempt: false,
            impact_loss: 0.0,
            dissipation: 0.0,
        });
    }

    // The trial penetrates, so the free velocity approaches the wall.
    // Remove (and with restitution, reflect) its normal component and
    // hold the configuration: the state hovers on the current side of
    // the boundary while the reaction absorbs the approach. Restitution
    // only engages above the impact speed threshold; slower approaches
    // settle inelastically, which cuts off the accumulation of ever
    // smaller rebounds and lets the state come to rest.
    let nn = dot(normal, normal);
    let approach = dot(normal, &v_free) / nn; // negative: into the wall
    let approach_speed = -approach * nn.sqrt();
    let impact = approach_speed > tol::IMPACT_SPEED;
    let bounce = if impact { restitution } else { 0.0 };
    let v_next: Vec<f64> = v_free
        .iter()
        .zip(normal)
        .map(|(v, a)| v - (1.0 + bounce) * approach * a)
        .collect();
    let q_next: Vec<f64> = z
        .q()
        .iter()
        .zip(&v_next)
        .map(|(q0, v)| q0 + dt * v)
        .collect();
    let p_next: Vec<f64> = v_next.iter().map(|v| mass * v).collect();
    let eta_p: Vec<f64> = p_free
        .iter()
        .zip(&p_next)
        .map(|(free, next)| (free - next) / dt)
        .collect();
    let pd: Vec<f64> = p_next.iter().zip(z.p()).map(|(a, b)| (a - b) / dt).collect();
    let gate_exempt = impact && bounce > 0.0;

    let z_next = PhaseVector::new(q_next, p_next)?;
    let impact_loss = if impact {
        model.energy(z, t)? - model.energy(&z_next, t + dt)?
    } else {
        0.0
    };
    let rates = PhaseVector::new(v_next, pd)?;
    let eta = PhaseVector::new(vec![0.0; n], eta_p)?;
    let residual = certify(law, z, &rates, &eta)?;
    let dissipation = if impact {
        0.0
    } else {
        dual_pairing(&rates, &eta)? * dt
    };
    Ok(StepResult {
        z_next,
        rates,
        eta,
        residual,
        solver_iterations: 1,
        impact,
        gate_exempt,
        impact_loss,
        dissipation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::ConvexSpec;
    use crate::dissipation::HalfSpace;
    use crate::models::Forcing;

    fn oscillator() -> HamiltonianModel {
        HamiltonianModel::HarmonicOscillator {
            mass: 1.0,
            stiffness: 1.0,
        }
    }

    fn viscous_law(c: f64) -> DissipationLaw {
        DissipationLaw::Viscous {
            phi: ConvexSpec::Quadratic {
                a: c,
                center: vec![0.0],
            },
        }
    }

    fn plastic_setup() -> (HamiltonianModel, DissipationLaw) {
        (
            HamiltonianModel::ElastoPlastic {
                mass: 1.0,
                stiffness: 1.0,
                forcing: Forcing::Sinusoid {
                    amplitude: 2.0,
                    angular_frequency: 1.0,
                    phase: 0.0,
                },
            },
            DissipationLaw::Plastic {
                phi: ConvexSpec::IndicatorBox {
                    lo: vec![-1.0],
                    hi: vec![1.0],
                },
            },
        )
    }

    fn damage_setup() -> (HamiltonianModel, DissipationLaw) {
        (
            HamiltonianModel::DamagingSpring {
                mass: 1.0,
                damage_inertia: 1.0,
                stiffness: 1.0,
                forcing: Forcing::Zero,
            },
            DissipationLaw::Damage { threshold: 1.0 },
        )
    }

    fn ball_setup() -> (HamiltonianModel, DissipationLaw) {
        (
            HamiltonianModel::ContactBall {
                mass: 1.0,
                gravity: 10.0,
            },
            DissipationLaw::Contact {
                constraint: HalfSpace {
                    normal: vec![1.0],
                    offset: 0.0,
                },
                boundary_band: tol::BOUNDARY_BAND,
            },
        )
    }

    fn pv(q: &[f64], p: &[f64]) -> PhaseVector {
        PhaseVector::new(q.to_vec(), p.to_vec()).unwrap()
    }

    #[test]
    fn pure_run_reports_exact_zero_deviations_and_bounded_drift() {
        let model = oscillator();
        let opts = IntegrateOptions::new(0.0, 10.0, 1e-3);
        let out = integrate(&model, &DissipationLaw::Pure, &pv(&[1.0], &[0.0]), &opts).unwrap();
        assert_eq!(out.status, RunStatus::Completed);
        let traj = &out.trajectory;
        assert_eq!(traj.steps(), 10_000);
        for eta in &traj.etas {
            assert!(eta.is_zero(), "conservative step carried a deviation");
        }
        let drift = traj
            .energies
            .iter()
            .fold(0.0f64, |acc, h| acc.max((h - 0.5).abs()));
        assert!(drift <= 1e-3, "energy drift {drift:.3e} too large");
        // the exact solution is q = cos t
        let q_end = traj.final_state().q()[0];
        assert!(
            (q_end - 10.0f64.cos()).abs() <= 1e-2,
            "q(10) = {q_end}, expected {}",
            10.0f64.cos()
        );
    }

    #[test]
    fn momentum_fixed_point_settles_on_the_second_sweep() {
        let model = oscillator();
        let result = step(
            &model,
            &DissipationLaw::Pure,
            &pv(&[1.0], &[0.3]),
            0.0,
            1e-3,
            0.0,
        )
        .unwrap();
        assert_eq!(result.solver_iterations, 2);
    }

    #[test]
    fn viscous_run_matches_the_underdamped_closed_form() {
        let model = oscillator();
        let c = 0.2;
        let opts = IntegrateOptions::new(0.0, 5.0, 1e-4);
        let out = integrate(&model, &viscous_law(c), &pv(&[1.0], &[0.0]), &opts).unwrap();
        assert_eq!(out.status, RunStatus::Completed);
        let traj = &out.trajectory;
        // q(t) = exp(-c t / 2) (cos(w t) + (c / (2 w)) sin(w t)),
        // w = sqrt(1 - c^2/4)
        let w = (1.0 - c * c / 4.0).sqrt();
        let mut worst = 0.0f64;
        for (t, z) in traj.times.iter().zip(&traj.states) {
            let exact = (-0.5 * c * t).exp() * ((w * t).cos() + c / (2.0 * w) * (w * t).sin());
            worst = worst.max((z.q()[0] - exact).abs());
        }
        assert!(worst <= 5e-4, "deviation from closed form {worst:.3e}");
        assert!(traj.max_residual() <= 1e-10, "residual {:.3e}", traj.max_residual());
        // energy decreases monotonically under damping
        for pair in traj.energies.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9, "energy rose: {pair:?}");
        }
        // dissipated work accounts for the energy lost
        let lost = traj.energies[0] - traj.energies.last().unwrap();
        let booked = traj.total_dissipated();
        assert!(
            (lost - booked).abs() <= 1e-4 * lost.max(1.0),
            "lost {lost:.6e}, booked {booked:.6e}"
        );
    }

    #[test]
    fn plastic_step_clamps_the_force_and_certifies_for_free() {
        let (model, law) = plastic_setup();
        // stretched well past yield: the return map must clamp
        let z = pv(&[2.0, 0.0], &[0.0, 0.0]);
        let result = step(&model, &law, &z, 0.0, 1e-3, 0.0).unwrap();
        let sigma = result.rates.p()[1];
        assert!(sigma <= 1.0 + 1e-12, "stress {sigma} beyond the elastic domain");
        let flow = result.eta.q()[1];
        assert!(flow > 0.0, "expected plastic flow, got {flow}");
        assert_eq!(
            result.residual,
            ExtReal::ZERO,
            "sliding step must certify exactly"
        );
        assert!(result.dissipation > 0.0);
        // well inside the elastic domain nothing flows
        let z = pv(&[0.3, 0.0], &[0.0, 0.0]);
        let result = step(&model, &law, &z, 0.0, 1e-3, 0.0).unwrap();
        assert_eq!(result.eta.q()[1], 0.0);
        assert_eq!(result.z_next.q()[1], 0.0);
        assert_eq!(result.residual, ExtReal::ZERO);
    }

    #[test]
    fn damage_grows_only_past_the_threshold_and_at_the_threshold_price() {
        let (model, law) = damage_setup();
        // elastic energy 0.5 * q^2 = 0.18 below threshold 1: nothing moves
        let z = pv(&[0.6, 0.0], &[0.0, 0.0]);
        let result = step(&model, &law, &z, 0.0, 1e-3, 0.0).unwrap();
        assert_eq!(result.z_next.q()[1], 0.0, "damage grew below threshold");
        assert_eq!(result.z_next.p()[1], 0.0);
        assert_eq!(result.residual, ExtReal::ZERO);
        // far past the threshold the driving deviation sits exactly at it
        let z = pv(&[2.0, 0.0], &[0.0, 0.0]);
        let result = step(&model, &law, &z, 0.0, 1e-3, 0.0).unwrap();
        assert!(result.z_next.p()[1] > 0.0, "damage momentum must engage");
        assert_eq!(result.eta.p()[1], 1.0, "driving deviation off the threshold");
        assert_eq!(result.residual, ExtReal::ZERO);
        assert!(result.z_next.q()[1] > 0.0);
    }

    #[test]
    fn damage_saturation_aborts_with_an_honest_certificate() {
        let (model, law) = damage_setup();
        // nearly broken and still driven hard: the cap must bind soon and
        // the run abort rather than pretend the threshold law held
        let z0 = pv(&[3.0, 0.9999], &[0.0, 0.0]);
        let opts = IntegrateOptions::new(0.0, 1.0, 1e-3);
        let out = integrate(&model, &law, &z0, &opts).unwrap();
        match &out.status {
            RunStatus::Aborted { reason, .. } => {
                assert!(reason.contains("information content"), "reason: {reason}");
            }
            RunStatus::Completed => {
                panic!("saturated damage run completed; d = {:?}", out.trajectory.final_state())
            }
        }
        // damage never left the admissible range on the recorded part
        for z in &out.trajectory.states {
            assert!(z.q()[1] <= 1.0 + 1e-12, "d = {} escaped [0, 1]", z.q()[1]);
        }
    }

    #[test]
    fn ball_lands_softly_and_rests_at_minus_weight() {
        let (model, law) = ball_setup();
        let opts = IntegrateOptions::new(0.0, 3.0, 1e-4);
        let out = integrate(&model, &law, &pv(&[10.0], &[0.0]), &opts).unwrap();
        assert_eq!(out.status, RunStatus::Completed);
        assert!(out.violations.is_empty(), "{:?}", out.violations);
        let traj = &out.trajectory;
        // never penetrates
        for z in &traj.states {
            assert!(z.q()[0] >= 0.0, "penetrated to {}", z.q()[0]);
        }
        // at least one flagged impact (the initial landing at speed ~14)
        assert!(traj.impacts.iter().any(|&i| i), "landing was not flagged");
        assert!(traj.total_impact_loss() > 90.0, "loss {}", traj.total_impact_loss());
        // final state: resting on the floor, reaction balancing the weight
        let z_end = traj.final_state();
        assert!(z_end.q()[0] < 1e-6, "still {} above the floor", z_end.q()[0]);
        assert!(z_end.p()[0].abs() < 1e-9, "still moving at {}", z_end.p()[0]);
        let eta_p = traj.etas.last().unwrap().p()[0];
        assert!(
            (eta_p + 10.0).abs() <= 1e-9,
            "resting reaction {eta_p}, expected -10"
        );
        // every step certified: zero information content throughout
        assert_eq!(traj.max_residual(), 0.0);
    }

    #[test]
    fn restitution_impacts_are_reported_but_not_gated() {
        let (model, law) = ball_setup();
        let mut opts = IntegrateOptions::new(0.0, 2.0, 1e-4);
        opts.restitution = 0.5;
        let out = integrate(&model, &law, &pv(&[2.0], &[0.0]), &opts).unwrap();
        assert_eq!(out.status, RunStatus::Completed);
        assert!(
            !out.violations.is_empty(),
            "bouncy impacts must be reported as violations"
        );
        // the ball leaves the floor again after the first impact; dropped
        // from 2 it lands at speed sqrt(40) and rebounds to about half
        // restitution squared of the height
        let first_hit = out
            .trajectory
            .impacts
            .iter()
            .position(|&i| i)
            .expect("the landing must be flagged");
        let apex = out.trajectory.states[first_hit + 1..]
            .iter()
            .map(|z| z.q()[0])
            .fold(0.0f64, f64::max);
        assert!(
            (apex - 0.5).abs() < 0.05,
            "rebound apex {apex}, expected about 0.5"
        );
        // it settles again before the window closes
        let z_end = out.trajectory.final_state();
        assert!(z_end.q()[0] < 1e-4, "still {} above the floor", z_end.q()[0]);
    }

    #[test]
    fn reported_deviations_match_the_reconstruction_from_states() {
        let cases: Vec<(HamiltonianModel, DissipationLaw, PhaseVector)> = vec![
            (oscillator(), DissipationLaw::Pure, pv(&[1.0], &[0.4])),
            (oscillator(), viscous_law(0.2), pv(&[1.0], &[0.4])),
            {
                let (m, l) = plastic_setup();
                (m, l, pv(&[2.0, 0.3], &[0.5, 0.0]))
            },
            {
                let (m, l) = damage_setup();
                (m, l, pv(&[2.0, 0.1], &[0.5, 0.0]))
            },
            {
                let (m, l) = ball_setup();
                (m, l, pv(&[1e-5], &[-0.005]))
            },
        ];
        for (model, law, z0) in cases {
            let dt = 1e-4;
            let mut z = z0;
            let mut t = 0.0;
            for _ in 0..50 {
                let result = step(&model, &law, &z, t, dt, 0.0).unwrap();
                let recon = extract_eta(&model, &law, &z, &result.z_next, t, dt).unwrap();
                let gap = recon.sub(&result.eta).unwrap().norm_inf();
                assert!(
                    gap <= 1e-9,
                    "{}: reported eta {:?} vs reconstructed {:?}",
                    law.name(),
                    result.eta,
                    recon
                );
                z = result.z_next;
                t += dt;
            }
        }
    }

    #[test]
    fn integrate_rejects_the_separable_law_and_bad_options() {
        let model = oscillator();
        let law = DissipationLaw::Separable {
            phi: ConvexSpec::Quadratic {
                a: 1.0,
                center: vec![0.0, 0.0],
            },
        };
        assert!(matches!(
            integrate(&model, &law, &pv(&[1.0], &[0.0]), &IntegrateOptions::new(0.0, 1.0, 1e-3)),
            Err(Error::UnsupportedOperation { .. })
        ));
        let mut opts = IntegrateOptions::new(0.0, 1.0, 1e-3);
        opts.dt = 0.0;
        assert!(integrate(&model, &DissipationLaw::Pure, &pv(&[1.0], &[0.0]), &opts).is_err());
    }

    #[test]
    fn zero_length_window_returns_the_start_node_only() {
        let model = oscillator();
        let opts = IntegrateOptions::new(2.0, 2.0, 1e-3);
        let out = integrate(&model, &DissipationLaw::Pure, &pv(&[1.0], &[0.0]), &opts).unwrap();
        assert_eq!(out.status, RunStatus::Completed);
        assert_eq!(out.trajectory.steps(), 0);
        assert_eq!(out.trajectory.times, vec![2.0]);
        assert_eq!(out.trajectory.dissipated, vec![0.0]);
    }

    #[test]
    fn trajectory_lengths_stay_consistent() {
        let model = oscillator();
        let opts = IntegrateOptions::new(0.0, 0.1, 1e-3);
        let out = integrate(&model, &viscous_law(0.3), &pv(&[1.0], &[0.0]), &opts).unwrap();
        let traj = &out.trajectory;
        let nodes = traj.times.len();
        assert_eq!(traj.states.len(), nodes);
        assert_eq!(traj.energies.len(), nodes);
        assert_eq!(traj.dissipated.len(), nodes);
        assert_eq!(traj.impact_losses.len(), nodes);
        assert_eq!(traj.etas.len(), nodes - 1);
        assert_eq!(traj.rates.len(), nodes - 1);
        assert_eq!(traj.residuals.len(), nodes - 1);
        assert_eq!(traj.impacts.len(), nodes - 1);
    }
}
