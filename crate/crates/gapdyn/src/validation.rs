//! Deterministic, seeded validation battery.
//!
//! Each suite probes one structural property end to end — conjugate
//! inequalities, grid oracles, monotone graphs, law axioms, stepper
//! certificates, scenario invariants, energy ledgers and convergence
//! order — and reports a pass/fail verdict with the worst observed
//! values. The whole battery is reproducible from a single seed.
//!
//! A deliberate fault can be injected with [`Mutation::MisSignedPolar`],
//! which evaluates conjugates at the sign-flipped dual point. The battery
//! must then fail, which demonstrates that the inequalities it checks are
//! sharp enough to catch a mis-signed implementation.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::convex::{n_monotone_check, ConvexSpec, MonotoneOptions};
use crate::diagnostics::{brute_force_gap, energy_audit, snap_to_grid, EtaGrid};
use crate::dissipation::{damage_rate_potential, DissipationLaw, HalfSpace};
use crate::integrators::{integrate, step, IntegrateOptions, RunOutcome, RunStatus};
use crate::models::{Forcing, HamiltonianModel};
use crate::phase::{dot, PhaseVector};
use crate::{tol, Result};

/// Deliberate fault injection for the battery.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutation {
    #[default]
    None,
    /// Evaluate every conjugate at `-y` instead of `y`, modelling a
    /// sign error in the polar construction.
    MisSignedPolar,
}

impl FromStr for Mutation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "none" => Ok(Mutation::None),
            "mis-signed-polar" | "mis_signed_polar" => Ok(Mutation::MisSignedPolar),
            other => Err(format!(
                "unknown mutation `{other}`; expected `none` or `mis-signed-polar`"
            )),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationSummary {
    pub seed: u64,
    pub mutation: Mutation,
    pub suites: Vec<SuiteResult>,
    pub passed: bool,
}

/// The convex shapes every conjugate-facing suite ranges over.
pub fn spec_catalogue() -> Vec<ConvexSpec> {
    vec![
        ConvexSpec::Quadratic {
            a: 1.0,
            center: vec![0.0],
        },
        ConvexSpec::Quadratic {
            a: 2.5,
            center: vec![0.3],
        },
        ConvexSpec::Quadratic {
            a: 0.4,
            center: vec![1.0, -2.0],
        },
        ConvexSpec::Linear { slope: vec![1.2] },
        ConvexSpec::Linear {
            slope: vec![0.0, -1.0],
        },
        ConvexSpec::IndicatorPoint { point: vec![0.5] },
        ConvexSpec::IndicatorBox {
            lo: vec![-1.0],
            hi: vec![2.0],
        },
        ConvexSpec::IndicatorBox {
            lo: vec![0.0],
            hi: vec![f64::INFINITY],
        },
        ConvexSpec::SupportBox { radius: 1.5 },
        ConvexSpec::Sum {
            terms: vec![
                ConvexSpec::Quadratic {
                    a: 2.0,
                    center: vec![0.0],
                },
                ConvexSpec::Linear { slope: vec![-0.7] },
            ],
        },
        damage_rate_potential(1.0),
        ConvexSpec::SeparableProduct {
            dim: 3,
            parts: vec![
                crate::convex::SeparablePart {
                    spec: ConvexSpec::Quadratic {
                        a: 1.5,
                        center: vec![0.0],
                    },
                    coords: vec![0],
                },
                crate::convex::SeparablePart {
                    spec: ConvexSpec::SupportBox { radius: 0.8 },
                    coords: vec![2],
                },
            ],
        },
    ]
}

/// A named, fully pinned simulation setup.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: &'static str,
    pub model: HamiltonianModel,
    pub law: DissipationLaw,
    pub z0: PhaseVector,
    pub opts: IntegrateOptions,
}

/// The five shipped scenarios, one per dedicated stepper.
pub fn scenario_catalogue() -> Vec<Scenario> {
    let pv = |q: &[f64], p: &[f64]| PhaseVector::new(q.to_vec(), p.to_vec()).expect("finite");
    let mut damped_opts = IntegrateOptions::new(0.0, 10.0, 1e-4);
    damped_opts.residual_budget = 1e-8;
    vec![
        Scenario {
            name: "pure_oscillator",
            model: HamiltonianModel::HarmonicOscillator {
                mass: 1.0,
                stiffness: 1.0,
            },
            law: DissipationLaw::Pure,
            z0: pv(&[1.0], &[0.0]),
            opts: {
                let mut o = IntegrateOptions::new(0.0, 100.0, 1e-3);
                o.residual_budget = 1e-9;
                o
            },
        },
        Scenario {
            name: "damped_oscillator",
            model: HamiltonianModel::HarmonicOscillator {
                mass: 1.0,
                stiffness: 1.0,
            },
            law: DissipationLaw::Viscous {
                phi: ConvexSpec::Quadratic {
                    a: 0.2,
                    center: vec![0.0],
                },
            },
            z0: pv(&[1.0], &[0.0]),
            opts: damped_opts,
        },
        Scenario {
            name: "plastic_cycle",
            model: HamiltonianModel::ElastoPlastic {
                mass: 1.0,
                stiffness: 1.0,
                forcing: Forcing::Sinusoid {
                    amplitude: 2.0,
                    angular_frequency: 1.0,
                    phase: 0.0,
                },
            },
            law: DissipationLaw::Plastic {
                phi: ConvexSpec::IndicatorBox {
                    lo: vec![-1.0],
                    hi: vec![1.0],
                },
            },
            z0: pv(&[0.0, 0.0], &[0.0, 0.0]),
            opts: IntegrateOptions::new(0.0, 4.0 * std::f64::consts::PI, 1e-4),
        },
        Scenario {
            name: "damage_growth",
            model: HamiltonianModel::DamagingSpring {
                mass: 1.0,
                damage_inertia: 1.0,
                stiffness: 1.0,
                forcing: Forcing::Zero,
            },
            law: DissipationLaw::Damage { threshold: 1.0 },
            z0: pv(&[1.2, 0.0], &[1.0, 0.0]),
            opts: IntegrateOptions::new(0.0, 0.9, 1e-4),
        },
        Scenario {
            name: "bouncing_ball",
            model: HamiltonianModel::ContactBall {
                mass: 1.0,
                gravity: 10.0,
            },
            law: DissipationLaw::Contact {
                constraint: HalfSpace {
                    normal: vec![1.0],
                    offset: 0.0,
                },
                boundary_band: tol::BOUNDARY_BAND,
            },
            z0: pv(&[10.0], &[0.0]),
            opts: IntegrateOptions::new(0.0, 3.0, 1e-4),
        },
    ]
}

/// Runs the whole battery. Every suite runs even after failures so the
/// summary shows the full picture.
pub fn run_validation(seed: u64, mutation: Mutation) -> Result<ValidationSummary> {
    let scenarios = scenario_catalogue();
    let mut runs = Vec::with_capacity(scenarios.len());
    for scenario in &scenarios {
        let outcome = integrate(&scenario.model, &scenario.law, &scenario.z0, &scenario.opts)?;
        runs.push((scenario, outcome));
    }

    let suites = vec![
        fenchel_inequality_suite(seed ^ 0x01, mutation)?,
        biconjugation_suite()?,
        conjugate_grid_suite()?,
        monotone_graph_suite(seed ^ 0x04)?,
        law_axiom_suite(seed ^ 0x05)?,
        gradient_consistency_suite(seed ^ 0x06)?,
        stepper_certificate_suite()?,
        scenario_invariant_suite(&runs)?,
        energy_ledger_suite(&runs)?,
        convergence_order_suite()?,
    ];
    let passed = suites.iter().all(|s| s.passed);
    Ok(ValidationSummary {
        seed,
        mutation,
        suites,
        passed,
    })
}

fn verdict(name: &'static str, failures: Vec<String>, detail_ok: String) -> SuiteResult {
    if failures.is_empty() {
        SuiteResult {
            name,
            passed: true,
            detail: detail_ok,
        }
    } else {
        let shown = failures.iter().take(3).cloned().collect::<Vec<_>>().join("; ");
        SuiteResult {
            name,
            passed: false,
            detail: format!("{} failures, first: {}", failures.len(), shown),
        }
    }
}

/// Conjugate inequality: `f(x) + f*(y) >= <x, y>` on sampled pairs, with
/// equality when `y` is a subgradient at `x`.
fn fenchel_inequality_suite(seed: u64, mutation: Mutation) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let catalogue = spec_catalogue();
    let mut failures = Vec::new();
    let mut worst_gap = f64::INFINITY;
    let mut worst_equality = 0.0f64;
    let draws = 10_000;

    for k in 0..draws {
        let spec = &catalogue[k % catalogue.len()];
        let polar = spec.polar()?;
        let x = spec.sample_domain_point(&mut rng);
        let y = polar.sample_domain_point(&mut rng);
        let y_eval: Vec<f64> = match mutation {
            Mutation::None => y.clone(),
            Mutation::MisSignedPolar => y.iter().map(|v| -v).collect(),
        };
        let fx = spec.eval(&x)?;
        let fy = polar.eval(&y_eval)?;
        let gap = fx + fy + crate::ExtReal::from(-dot(&x, &y));
        if gap.is_finite() {
            worst_gap = worst_gap.min(gap.value());
            if gap.value() < -tol::NONNEGATIVE {
                failures.push(format!(
                    "negative gap {:.3e} for {spec:?} at x = {x:?}, y = {y:?}",
                    gap.value()
                ));
            }
        }

        // Equality at subgradients.
        let u = spec.sample_subgradient(&x, &mut rng);
        let u_eval: Vec<f64> = match mutation {
            Mutation::None => u.clone(),
            Mutation::MisSignedPolar => u.iter().map(|v| -v).collect(),
        };
        let fu = polar.eval(&u_eval)?;
        let gap = fx + fu + crate::ExtReal::from(-dot(&x, &u));
        let defect = if gap.is_finite() {
            gap.value().abs()
        } else {
            f64::INFINITY
        };
        worst_equality = worst_equality.max(defect);
        if defect > tol::NONNEGATIVE {
            failures.push(format!(
                "subgradient equality defect {defect:.3e} for {spec:?} at x = {x:?}, u = {u:?}"
            ));
        }
    }

    Ok(verdict(
        "fenchel_inequality",
        failures,
        format!(
            "{draws} draws; smallest gap {worst_gap:.3e}, worst equality defect {worst_equality:.3e}"
        ),
    ))
}

/// Applying the polar twice returns the original values.
fn biconjugation_suite() -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xb1c0);
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for spec in spec_catalogue() {
        let back = spec.polar()?.polar()?;
        for _ in 0..500 {
            let x = spec.sample_domain_point(&mut rng);
            let original = spec.eval(&x)?;
            let recovered = back.eval(&x)?;
            match (original.is_finite(), recovered.is_finite()) {
                (true, true) => {
                    let defect = (original.value() - recovered.value()).abs()
                        / (1.0 + original.value().abs());
                    worst = worst.max(defect);
                    if defect > tol::NONNEGATIVE {
                        failures.push(format!(
                            "value changed by {defect:.3e} under double polar of {spec:?}"
                        ));
                    }
                }
                (a, b) if a != b => {
                    failures.push(format!(
                        "finiteness changed under double polar of {spec:?} at {x:?}"
                    ));
                }
                _ => {}
            }
        }
    }
    Ok(verdict(
        "biconjugation",
        failures,
        format!("worst relative defect {worst:.3e}"),
    ))
}

/// Closed-form conjugates agree with a grid supremum where the grid can
/// represent it (finite values, maximiser inside the window).
fn conjugate_grid_suite() -> Result<SuiteResult> {
    let specs: Vec<ConvexSpec> = spec_catalogue()
        .into_iter()
        .filter(|s| s.dim() == 1)
        .collect();
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for spec in &specs {
        let polar = spec.polar()?;
        let table = spec.numerical_conjugate(-5.0, 5.0, 4001)?;
        for (y, value) in table.ys.iter().zip(&table.values) {
            if y.abs() > 3.0 {
                continue;
            }
            let analytic = polar.eval(&[*y])?;
            if !analytic.is_finite() {
                continue;
            }
            if !value.is_finite() {
                failures.push(format!(
                    "grid table infinite where the closed form is {:.3e} (y = {y})",
                    analytic.value()
                ));
                continue;
            }
            let allowed = 2.0 * table.spacing * (1.0 + y.abs());
            let defect = (value.value() - analytic.value()).abs();
            worst = worst.max(defect / allowed);
            if defect > allowed {
                failures.push(format!(
                    "table {:.6e} vs closed form {:.6e} at y = {y} for {spec:?}",
                    value.value(),
                    analytic.value()
                ));
            }
        }
    }
    Ok(verdict(
        "conjugate_grid_oracle",
        failures,
        format!(
            "{} line specs against a 4001-node grid; worst defect at {worst:.3} of the allowance",
            specs.len()
        ),
    ))
}

/// Subdifferential graphs are n-monotone for every order; a rotation is
/// monotone but fails order two; an anti-monotone graph fails order one.
fn monotone_graph_suite(seed: u64) -> Result<SuiteResult> {
    let mut failures = Vec::new();
    let opts = MonotoneOptions {
        seed,
        ..MonotoneOptions::default()
    };

    let quadratic: Vec<(Vec<f64>, Vec<f64>)> = (0..25)
        .map(|i| {
            let x = -3.0 + 0.25 * i as f64;
            (vec![x], vec![1.7 * (x - 0.4)])
        })
        .collect();
    for n in 1..=3 {
        if !n_monotone_check(&quadratic, n, &opts)? {
            failures.push(format!("gradient graph rejected at order {n}"));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x77);
    let support = ConvexSpec::SupportBox { radius: 1.5 };
    let kinked: Vec<(Vec<f64>, Vec<f64>)> = (0..40)
        .map(|_| {
            let x = support.sample_domain_point(&mut rng);
            let u = support.sample_subgradient(&x, &mut rng);
            (x, u)
        })
        .collect();
    for n in 1..=2 {
        if !n_monotone_check(&kinked, n, &opts)? {
            failures.push(format!("kinked subgradient graph rejected at order {n}"));
        }
    }

    // A quarter turn preserves <x, Jx> = 0: monotone of order one, but
    // it admits cycles that violate order two.
    let mut rotation: Vec<(Vec<f64>, Vec<f64>)> = (0..16)
        .map(|i| {
            let angle = i as f64 * std::f64::consts::PI / 8.0;
            let x = vec![angle.cos(), angle.sin()];
            let jx = vec![-x[1], x[0]];
            (x, jx)
        })
        .collect();
    rotation.push((vec![1.0, 0.0], vec![0.0, 1.0]));
    rotation.push((vec![0.0, 1.0], vec![-1.0, 0.0]));
    rotation.push((vec![-1.0, 0.0], vec![0.0, -1.0]));
    if !n_monotone_check(&rotation, 1, &opts)? {
        failures.push("rotation graph rejected at order one".into());
    }
    if n_monotone_check(&rotation, 2, &opts)? {
        failures.push("rotation graph accepted at order two".into());
    }

    let flipped: Vec<(Vec<f64>, Vec<f64>)> =
        (0..10).map(|i| (vec![i as f64], vec![-(i as f64)])).collect();
    if n_monotone_check(&flipped, 1, &opts)? {
        failures.push("anti-monotone graph accepted at order one".into());
    }

    Ok(verdict(
        "monotone_graphs",
        failures,
        "orders 1-3 on gradient graphs; rotation and flip counterexamples rejected".into(),
    ))
}

/// The law axioms hold at representative states.
fn law_axiom_suite(seed: u64) -> Result<SuiteResult> {
    let pv = |q: &[f64], p: &[f64]| PhaseVector::new(q.to_vec(), p.to_vec()).expect("finite");
    let cases: Vec<(DissipationLaw, PhaseVector)> = vec![
        (DissipationLaw::Pure, pv(&[1.0], &[0.5])),
        (
            DissipationLaw::Separable {
                phi: ConvexSpec::Quadratic {
                    a: 0.8,
                    center: vec![0.0, 0.0],
                },
            },
            pv(&[1.0], &[0.5]),
        ),
        (
            DissipationLaw::Viscous {
                phi: ConvexSpec::Quadratic {
                    a: 0.2,
                    center: vec![0.0],
                },
            },
            pv(&[1.0], &[0.5]),
        ),
        (
            DissipationLaw::Plastic {
                phi: ConvexSpec::IndicatorBox {
                    lo: vec![-1.0],
                    hi: vec![1.0],
                },
            },
            pv(&[1.5, 0.2], &[0.3, 0.0]),
        ),
        (
            DissipationLaw::Damage { threshold: 1.0 },
            pv(&[1.5, 0.3], &[0.2, 0.4]),
        ),
        (
            DissipationLaw::Contact {
                constraint: HalfSpace {
                    normal: vec![1.0],
                    offset: 0.0,
                },
                boundary_band: tol::BOUNDARY_BAND,
            },
            pv(&[0.0], &[0.0]),
        ),
        (
            DissipationLaw::Contact {
                constraint: HalfSpace {
                    normal: vec![1.0],
                    offset: 0.0,
                },
                boundary_band: tol::BOUNDARY_BAND,
            },
            pv(&[2.0], &[-0.3]),
        ),
    ];
    let mut failures = Vec::new();
    for (k, (law, z)) in cases.iter().enumerate() {
        let report = law.axioms_check(z, 250, seed.wrapping_add(k as u64), tol::NONNEGATIVE)?;
        if !report.passed {
            failures.push(format!("axioms failed for `{}`: {report:?}", law.name()));
        }
    }
    Ok(verdict(
        "law_axioms",
        failures,
        "nonnegativity, slotwise midpoint convexity, zero-gap attainment, infeasible pricing".into(),
    ))
}

/// Analytic gradients agree with central finite differences.
fn gradient_consistency_suite(seed: u64) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let models = vec![
        HamiltonianModel::HarmonicOscillator {
            mass: 1.3,
            stiffness: 0.7,
        },
        HamiltonianModel::Pendulum {
            mass: 0.8,
            gravity: 9.81,
            length: 1.4,
        },
        HamiltonianModel::ElastoPlastic {
            mass: 1.0,
            stiffness: 2.0,
            forcing: Forcing::Sinusoid {
                amplitude: 1.5,
                angular_frequency: 2.0,
                phase: 0.3,
            },
        },
        HamiltonianModel::DamagingSpring {
            mass: 1.1,
            damage_inertia: 0.6,
            stiffness: 1.8,
            forcing: Forcing::Constant { value: 0.4 },
        },
        HamiltonianModel::ContactBall {
            mass: 2.0,
            gravity: 9.81,
        },
    ];
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for model in &models {
        let n = model.dim();
        for _ in 0..40 {
            let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut qv = q;
            if matches!(model, HamiltonianModel::DamagingSpring { .. }) {
                qv[1] = rng.gen_range(0.0..1.0);
            }
            let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let z = PhaseVector::new(qv, p)?;
            let t = rng.gen_range(0.0..5.0);
            let analytic = model.gradient(&z, t)?;
            let numeric = model.finite_difference_gradient(&z, t, tol::FD_STEP)?;
            let scale = 1.0f64.max(analytic.norm_inf());
            let defect = analytic.sub(&numeric)?.norm_inf() / scale;
            worst = worst.max(defect);
            if defect > 1e-6 {
                failures.push(format!(
                    "{}: gradient defect {defect:.3e} at t = {t:.3}",
                    model.name()
                ));
            }
        }
    }
    Ok(verdict(
        "gradient_consistency",
        failures,
        format!("worst relative defect {worst:.3e} across {} models", models.len()),
    ))
}

/// Twenty steps per scenario: reported deviations match the state-based
/// reconstruction, and on representative dissipative states the reported
/// deviation is grid-optimal for the step's information content.
fn stepper_certificate_suite() -> Result<SuiteResult> {
    let mut failures = Vec::new();
    let mut worst_recon = 0.0f64;
    for scenario in scenario_catalogue() {
        let dt = scenario.opts.dt;
        let mut z = scenario.z0.clone();
        let mut t = scenario.opts.t_start;
        for _ in 0..20 {
            let result = step(
                &scenario.model,
                &scenario.law,
                &z,
                t,
                dt,
                scenario.opts.restitution,
            )?;
            let recon = crate::integrators::extract_eta(
                &scenario.model,
                &scenario.law,
                &z,
                &result.z_next,
                t,
                dt,
            )?;
            let defect = recon.sub(&result.eta)?.norm_inf();
            worst_recon = worst_recon.max(defect);
            if defect > 1e-9 {
                failures.push(format!(
                    "{}: reconstruction defect {defect:.3e}",
                    scenario.name
                ));
            }
            if !result.gate_exempt
                && (!result.residual.is_finite()
                    || result.residual.value() > scenario.opts.residual_budget)
            {
                failures.push(format!(
                    "{}: step residual {:?} above budget",
                    scenario.name, result.residual
                ));
            }
            z = result.z_next;
            t += dt;
        }
    }

    // Grid optimality at states where the laws genuinely dissipate.
    let pv = |q: &[f64], p: &[f64]| PhaseVector::new(q.to_vec(), p.to_vec()).expect("finite");
    let scenarios = scenario_catalogue();
    let fine = EtaGrid::new(-5.0, 5.0, 20_001)?;
    let coarse_wide = EtaGrid::new(-15.0, 15.0, 60_001)?;
    let probes: Vec<(&Scenario, PhaseVector, EtaGrid)> = vec![
        (&scenarios[1], pv(&[0.3], &[1.2]), fine),
        (&scenarios[2], pv(&[2.0, 0.0], &[0.0, 0.0]), fine),
        (&scenarios[3], pv(&[2.0, 0.1], &[0.3, 0.0]), fine),
        (&scenarios[4], pv(&[1e-5], &[-0.005]), coarse_wide),
    ];
    for (scenario, z, grid) in probes {
        let result = step(&scenario.model, &scenario.law, &z, 0.0, scenario.opts.dt, 0.0)?;
        let search = brute_force_gap(&scenario.law, &z, &result.rates, &grid)?;
        let snapped = snap_to_grid(&scenario.law, &result.eta, &grid)?;
        let at_snapped = scenario
            .law
            .information_content(&z, &result.rates, &snapped)?;
        let best = search.best_value;
        let excess = match (at_snapped.is_finite(), best.is_finite()) {
            (true, true) => at_snapped.value() - best.value(),
            (false, false) => 0.0,
            _ => f64::INFINITY,
        };
        if excess > 1e-6 {
            failures.push(format!(
                "{}: snapped deviation costs {excess:.3e} above the grid optimum",
                scenario.name
            ));
        }
    }

    Ok(verdict(
        "stepper_certificates",
        failures,
        format!("worst reconstruction defect {worst_recon:.3e}; grid optimality on 4 probes"),
    ))
}

/// Behavioural invariants of the shipped scenarios.
fn scenario_invariant_suite(runs: &[(&Scenario, RunOutcome)]) -> Result<SuiteResult> {
    let mut failures = Vec::new();
    for (scenario, outcome) in runs {
        if outcome.status != RunStatus::Completed {
            failures.push(format!("{}: {:?}", scenario.name, outcome.status));
            continue;
        }
        if !outcome.violations.is_empty() {
            failures.push(format!(
                "{}: {} violations",
                scenario.name,
                outcome.violations.len()
            ));
        }
        let traj = &outcome.trajectory;
        match scenario.name {
            "pure_oscillator" => {
                if !traj.etas.iter().all(|e| e.is_zero()) {
                    failures.push("pure_oscillator: nonzero deviation".into());
                }
                let h0 = traj.energies[0];
                let drift = traj
                    .energies
                    .iter()
                    .fold(0.0f64, |acc, h| acc.max((h - h0).abs()));
                if drift > 1e-3 {
                    failures.push(format!("pure_oscillator: drift {drift:.3e}"));
                }
                let worst = traj
                    .times
                    .iter()
                    .zip(&traj.states)
                    .fold(0.0f64, |acc, (t, z)| acc.max((z.q()[0] - t.cos()).abs()));
                if worst > 1e-2 {
                    failures.push(format!("pure_oscillator: trajectory error {worst:.3e}"));
                }
            }
            "damped_oscillator" => {
                let c = 0.2;
                let w = (1.0f64 - c * c / 4.0).sqrt();
                let worst = traj.times.iter().zip(&traj.states).fold(0.0f64, |acc, (t, z)| {
                    let exact =
                        (-0.5 * c * t).exp() * ((w * t).cos() + c / (2.0 * w) * (w * t).sin());
                    acc.max((z.q()[0] - exact).abs())
                });
                if worst > 5e-3 {
                    failures.push(format!("damped_oscillator: trajectory error {worst:.3e}"));
                }
                if traj.energies.windows(2).any(|w| w[1] > w[0] + 1e-9) {
                    failures.push("damped_oscillator: energy increased".into());
                }
            }
            "plastic_cycle" => {
                for z in &traj.states {
                    let stress = z.q()[0] - z.q()[1];
                    if stress.abs() > 1.0 + tol::NONNEGATIVE {
                        failures.push(format!("plastic_cycle: stress {stress:.6}"));
                        break;
                    }
                }
                if traj.dissipated.windows(2).any(|w| w[1] < w[0] - tol::NONNEGATIVE) {
                    failures.push("plastic_cycle: negative dissipation increment".into());
                }
                if traj.total_dissipated() < 1.0 {
                    failures.push(format!(
                        "plastic_cycle: loop dissipated only {:.3}",
                        traj.total_dissipated()
                    ));
                }
            }
            "damage_growth" => {
                for pair in traj.states.windows(2) {
                    if pair[1].q()[1] < pair[0].q()[1] {
                        failures.push("damage_growth: damage decreased".into());
                        break;
                    }
                }
                let d_end = traj.final_state().q()[1];
                if !(0.0..=1.0 + tol::PENETRATION).contains(&d_end) || d_end == 0.0 {
                    failures.push(format!("damage_growth: final damage {d_end}"));
                }
                for eta in &traj.etas {
                    if eta.p()[1] > 1.0 + tol::NONNEGATIVE {
                        failures.push(format!(
                            "damage_growth: driving deviation {} above threshold",
                            eta.p()[1]
                        ));
                        break;
                    }
                }
            }
            "bouncing_ball" => {
                if traj.states.iter().any(|z| z.q()[0] < 0.0) {
                    failures.push("bouncing_ball: penetrated the floor".into());
                }
                for (rates, eta) in traj.rates.iter().zip(&traj.etas) {
                    if dot(rates.q(), eta.p()).abs() > tol::NONNEGATIVE {
                        failures.push("bouncing_ball: reaction does work".into());
                        break;
                    }
                }
                let eta_end = traj.etas.last().expect("steps > 0").p()[0];
                if (eta_end + 10.0).abs() > tol::NONNEGATIVE {
                    failures.push(format!(
                        "bouncing_ball: resting reaction {eta_end}, expected -10"
                    ));
                }
            }
            other => failures.push(format!("unknown scenario `{other}`")),
        }
    }
    Ok(verdict(
        "scenario_invariants",
        failures,
        format!("{} scenarios behaved as pinned", runs.len()),
    ))
}

/// Every shipped run closes its energy ledger.
fn energy_ledger_suite(runs: &[(&Scenario, RunOutcome)]) -> Result<SuiteResult> {
    let mut failures = Vec::new();
    let mut details = Vec::new();
    for (scenario, outcome) in runs {
        let report = energy_audit(&scenario.model, &outcome.trajectory)?;
        details.push(format!("{} defect {:.2e}", scenario.name, report.ledger_defect));
        if !report.passed {
            failures.push(format!(
                "{}: {:?}",
                scenario.name,
                report.violations.join("; ")
            ));
        }
    }
    Ok(verdict("energy_ledgers", failures, details.join(", ")))
}

/// Halving the step roughly halves the trajectory error for the
/// first-order schemes, against closed-form references.
fn convergence_order_suite() -> Result<SuiteResult> {
    let model = HamiltonianModel::HarmonicOscillator {
        mass: 1.0,
        stiffness: 1.0,
    };
    let z0 = PhaseVector::new(vec![1.0], vec![0.0])?;
    let mut failures = Vec::new();
    let mut details = Vec::new();

    let pure_error = |dt: f64| -> Result<f64> {
        let out = integrate(&model, &DissipationLaw::Pure, &z0, &IntegrateOptions::new(0.0, 1.0, dt))?;
        Ok(out
            .trajectory
            .times
            .iter()
            .zip(&out.trajectory.states)
            .fold(0.0f64, |acc, (t, z)| acc.max((z.q()[0] - t.cos()).abs())))
    };
    let c = 0.2;
    let w = (1.0f64 - c * c / 4.0).sqrt();
    let law = DissipationLaw::Viscous {
        phi: ConvexSpec::Quadratic {
            a: c,
            center: vec![0.0],
        },
    };
    let viscous_error = |dt: f64| -> Result<f64> {
        let out = integrate(&model, &law, &z0, &IntegrateOptions::new(0.0, 1.0, dt))?;
        Ok(out.trajectory.times.iter().zip(&out.trajectory.states).fold(
            0.0f64,
            |acc, (t, z)| {
                let exact = (-0.5 * c * t).exp() * ((w * t).cos() + c / (2.0 * w) * (w * t).sin());
                acc.max((z.q()[0] - exact).abs())
            },
        ))
    };

    for (name, error_fn) in [
        ("conservative", &pure_error as &dyn Fn(f64) -> Result<f64>),
        ("viscous", &viscous_error as &dyn Fn(f64) -> Result<f64>),
    ] {
        let e1 = error_fn(4e-3)?;
        let e2 = error_fn(2e-3)?;
        let e3 = error_fn(1e-3)?;
        for (coarse, fine) in [(e1, e2), (e2, e3)] {
            let ratio = coarse / fine;
            details.push(format!("{name} ratio {ratio:.3}"));
            if !(1.7..=2.3).contains(&ratio) {
                failures.push(format!(
                    "{name}: error ratio {ratio:.3} outside [1.7, 2.3] \
                     (errors {coarse:.3e} -> {fine:.3e})"
                ));
            }
        }
    }
    Ok(verdict("convergence_order", failures, details.join(", ")))
}
