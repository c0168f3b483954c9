//! Dissipation laws: convex bookkeeping for deviations from Hamiltonian
//! flow.
//!
//! A law looks at a state `z`, the realised rates `z_dot = (dq/dt, dp/dt)`
//! and the deviation pair `eta = (eta_q, eta_p)` from the conservative
//! flow, and charges the triple an information content `I >= 0` (extended
//! real). `I = 0` marks the evolutions the law deems admissible,
//! `exp(-I)` is the likelihood it assigns, and `+inf` marks forbidden
//! combinations. The bipotential `b = I + <<z_dot, eta>>` is convex in
//! each slot separately and dominates the duality pairing; these are the
//! axioms [`DissipationLaw::axioms_check`] probes numerically.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::convex::ConvexSpec;
use crate::extended::ExtReal;
use crate::phase::{dot, dual_pairing, PhaseVector};
use crate::{tol, Error, Result};

/// Admissible set `M = { q : <normal, q> >= offset }` for unilateral
/// contact, with signed gap `g(q) = <normal, q> - offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl HalfSpace {
    pub fn gap(&self, q: &[f64]) -> f64 {
        dot(&self.normal, q) - self.offset
    }

    fn validate(&self) -> Result<()> {
        if self.normal.iter().all(|&x| x == 0.0) {
            return Err(Error::InvalidParameter {
                name: "HalfSpace.normal",
                reason: "must be a nonzero vector".into(),
            });
        }
        if self.normal.iter().any(|x| !x.is_finite()) || !self.offset.is_finite() {
            return Err(Error::InvalidParameter {
                name: "HalfSpace",
                reason: "entries must be finite".into(),
            });
        }
        Ok(())
    }
}

fn default_boundary_band() -> f64 {
    tol::BOUNDARY_BAND
}

/// A coordinate of the deviation pair that a law allows to be nonzero.
/// Grid searches over deviations only need to range over these.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EtaSlot {
    /// Index into the `eta_q` block.
    Q(usize),
    /// Index into the `eta_p` block.
    P(usize),
}

/// The dissipation laws.
///
/// * `Pure`: no deviation tolerated; `I = 0` iff `eta = 0`.
/// * `Separable { phi }`: `I = phi(z_dot) + phi*(eta) - <<z_dot, eta>>`
///   with `phi` over the flattened rate vector `[dq/dt; dp/dt]` and the
///   conjugate taken in the duality pairing (block swap).
/// * `Viscous { phi }`: rate potential on `dq/dt` alone; the deviation
///   acts through `eta_p` and `eta_q` must vanish.
/// * `Plastic { phi }`: two coordinate blocks `[q, q_i]`; `phi` constrains
///   the internal force `dp_i/dt` (elastic domain) and its conjugate
///   prices the internal flow carried by `eta_{q,i}`.
/// * `Damage { threshold }`: blocks `[q, d]` / `[p, r]`; `d` must stay in
///   `[0, 1]`, its rate must be nonnegative and costs `threshold` per
///   unit, and the driving deviation `eta_r` may not exceed `threshold`.
/// * `Contact { constraint, .. }`: `q` must satisfy the half-space
///   constraint, reactions `eta_p` lie in the (inward) normal cone and
///   velocities in the tangent cone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DissipationLaw {
    Pure,
    Separable {
        phi: ConvexSpec,
    },
    Viscous {
        phi: ConvexSpec,
    },
    Plastic {
        phi: ConvexSpec,
    },
    Damage {
        threshold: f64,
    },
    Contact {
        constraint: HalfSpace,
        /// States with an active reaction are accepted as "on the
        /// boundary" when their gap is below this band; the shipped
        /// steppers park resting states within `O(dt^2)` of the surface.
        #[serde(default = "default_boundary_band")]
        boundary_band: f64,
    },
}

/// Rate potential of the damage law: `threshold * rate` on `rate >= 0`,
/// `+inf` for negative rates. Its conjugate is the indicator of
/// `(-inf, threshold]`, which is exactly the admissible range of the
/// driving deviation.
pub fn damage_rate_potential(threshold: f64) -> ConvexSpec {
    ConvexSpec::Sum {
        terms: vec![
            ConvexSpec::Linear {
                slope: vec![threshold],
            },
            ConvexSpec::IndicatorBox {
                lo: vec![0.0],
                hi: vec![f64::INFINITY],
            },
        ],
    }
}

impl DissipationLaw {
    pub fn name(&self) -> &'static str {
        match self {
            DissipationLaw::Pure => "pure",
            DissipationLaw::Separable { .. } => "separable",
            DissipationLaw::Viscous { .. } => "viscous",
            DissipationLaw::Plastic { .. } => "plastic",
            DissipationLaw::Damage { .. } => "damage",
            DissipationLaw::Contact { .. } => "contact",
        }
    }

    /// Validates parameters, including that every convex piece the law
    /// relies on has a registered conjugate.
    pub fn validate(&self) -> Result<()> {
        match self {
            DissipationLaw::Pure => Ok(()),
            DissipationLaw::Separable { phi }
            | DissipationLaw::Viscous { phi }
            | DissipationLaw::Plastic { phi } => {
                phi.validate()?;
                phi.polar()?;
                Ok(())
            }
            DissipationLaw::Damage { threshold } => {
                if !(threshold.is_finite() && *threshold > 0.0) {
                    return Err(Error::InvalidParameter {
                        name: "Damage.threshold",
                        reason: format!("must be positive and finite, got {threshold}"),
                    });
                }
                Ok(())
            }
            DissipationLaw::Contact {
                constraint,
                boundary_band,
            } => {
                constraint.validate()?;
                if !(boundary_band.is_finite() && *boundary_band > 0.0) {
                    return Err(Error::InvalidParameter {
                        name: "Contact.boundary_band",
                        reason: format!("must be positive and finite, got {boundary_band}"),
                    });
                }
                Ok(())
            }
        }
    }

    /// Checks that the law fits a phase space with `n` coordinates per
    /// block (the internal-variable laws fix the block layout).
    pub fn validate_for_dim(&self, n: usize) -> Result<()> {
        self.validate()?;
        let expect = |cond: bool, law: &'static str, model: &'static str| {
            if cond {
                Ok(())
            } else {
                Err(Error::LayoutMismatch { law, model })
            }
        };
        match self {
            DissipationLaw::Pure => Ok(()),
            DissipationLaw::Separable { phi } => expect(
                phi.dim() == 2 * n,
                "separable potential over [dq/dt; dp/dt]",
                "phase dimension does not match the potential",
            ),
            DissipationLaw::Viscous { phi } => expect(
                phi.dim() == n,
                "viscous potential over dq/dt",
                "phase dimension does not match the potential",
            ),
            DissipationLaw::Plastic { phi } => expect(
                n == 2 && phi.dim() == 1,
                "plastic: blocks [q, q_i] with scalar elastic domain",
                "needs exactly two coordinates per block",
            ),
            DissipationLaw::Damage { .. } => expect(
                n == 2,
                "damage: blocks [q, d] / [p, r]",
                "needs exactly two coordinates per block",
            ),
            DissipationLaw::Contact { constraint, .. } => expect(
                constraint.normal.len() == n,
                "contact: constraint normal over the q block",
                "phase dimension does not match the constraint",
            ),
        }
    }

    /// Coordinates of the deviation that the law allows to be nonzero;
    /// all other coordinates carry an exact-zero constraint.
    pub fn active_eta_slots(&self, n: usize) -> Vec<EtaSlot> {
        match self {
            DissipationLaw::Pure => Vec::new(),
            DissipationLaw::Separable { .. } => (0..n)
                .map(EtaSlot::Q)
                .chain((0..n).map(EtaSlot::P))
                .collect(),
            DissipationLaw::Viscous { .. } | DissipationLaw::Contact { .. } => {
                (0..n).map(EtaSlot::P).collect()
            }
            DissipationLaw::Plastic { .. } => vec![EtaSlot::Q(1)],
            DissipationLaw::Damage { .. } => vec![EtaSlot::P(1)],
        }
    }

    /// Information content `I(z, z_dot, eta) >= 0` (extended real).
    ///
    /// Exact-zero constraints on inactive deviation coordinates are
    /// checked exactly; state admissibility (damage range, penetration)
    /// uses a slack of [`tol::PENETRATION`] so that states produced by
    /// floating-point steppers are not rejected for rounding.
    pub fn information_content(
        &self,
        z: &PhaseVector,
        z_dot: &PhaseVector,
        eta: &PhaseVector,
    ) -> Result<ExtReal> {
        let n = z.dim();
        if z_dot.dim() != n || eta.dim() != n {
            return Err(Error::DimensionMismatch {
                context: "information_content",
                expected: n,
                found: z_dot.dim().min(eta.dim()),
            });
        }
        self.validate_for_dim(n)?;
        match self {
            DissipationLaw::Pure => Ok(ExtReal::indicator(eta.is_zero())),
            DissipationLaw::Separable { phi } => {
                let value = ExtReal::sum([
                    phi.eval(&z_dot.to_flat())?,
                    phi.polar()?.eval(&eta.to_swapped_flat())?,
                ]);
                Ok(value.sub_finite(dual_pairing(z_dot, eta)?))
            }
            DissipationLaw::Viscous { phi } => {
                let clean = eta.q().iter().all(|&x| x == 0.0);
                let value = ExtReal::sum([
                    ExtReal::indicator(clean),
                    phi.eval(z_dot.q())?,
                    phi.polar()?.eval(eta.p())?,
                ]);
                Ok(value.sub_finite(dual_pairing(z_dot, eta)?))
            }
            DissipationLaw::Plastic { phi } => {
                let force = z_dot.p()[1]; // rate of the internal momentum
                let flow = eta.q()[1]; // internal flow carried by the deviation
                let clean =
                    eta.q()[0] == 0.0 && eta.p()[0] == 0.0 && eta.p()[1] == 0.0;
                let value = ExtReal::sum([
                    ExtReal::indicator(clean),
                    phi.eval(&[force])?,
                    phi.polar()?.eval(&[flow])?,
                ]);
                Ok(value.sub_finite(dual_pairing(z_dot, eta)?))
            }
            DissipationLaw::Damage { threshold } => {
                let d = z.q()[1];
                let rate = z_dot.q()[1];
                let drive = eta.p()[1];
                let slack = tol::PENETRATION;
                let clean =
                    eta.q()[0] == 0.0 && eta.q()[1] == 0.0 && eta.p()[0] == 0.0;
                let value = ExtReal::sum([
                    ExtReal::indicator(clean),
                    ExtReal::indicator((-slack..=1.0 + slack).contains(&d)),
                    ExtReal::indicator(rate >= -slack),
                    ExtReal::indicator(drive <= threshold + slack),
                    ExtReal::from(threshold * rate),
                ]);
                Ok(value.sub_finite(dual_pairing(z_dot, eta)?))
            }
            DissipationLaw::Contact {
                constraint,
                boundary_band,
            } => Ok(contact_information(
                constraint,
                *boundary_band,
                z,
                z_dot,
                eta,
            )),
        }
    }

    /// Likelihood `exp(-I)`: 1 on admissible evolutions, 0 on forbidden
    /// ones.
    pub fn likelihood(
        &self,
        z: &PhaseVector,
        z_dot: &PhaseVector,
        eta: &PhaseVector,
    ) -> Result<f64> {
        let info = self.information_content(z, z_dot, eta)?;
        Ok(if info.is_finite() {
            (-info.value()).exp()
        } else {
            0.0
        })
    }

    /// Bipotential `b(z_dot, eta) = I + <<z_dot, eta>>`; dominates the
    /// pairing and is convex in each slot separately.
    pub fn bipotential_value(
        &self,
        z: &PhaseVector,
        z_dot: &PhaseVector,
        eta: &PhaseVector,
    ) -> Result<ExtReal> {
        let info = self.information_content(z, z_dot, eta)?;
        Ok(info + ExtReal::from(dual_pairing(z_dot, eta)?))
    }

    /// True when the triple sits on the zero set of the information
    /// content within `slack`.
    pub fn zero_gap_holds(
        &self,
        z: &PhaseVector,
        z_dot: &PhaseVector,
        eta: &PhaseVector,
        slack: f64,
    ) -> Result<bool> {
        let info = self.information_content(z, z_dot, eta)?;
        Ok(info.is_finite() && info.value().abs() <= slack)
    }

    /// When the law is driven by a convex rate potential, returns it as a
    /// spec over the flattened rate vector `[dq/dt; dp/dt]`; the zero set
    /// of the information content is then exactly the subdifferential
    /// inclusion `swap(eta) in subdifferential(potential)(rates)`. Contact
    /// is genuinely non-separable and returns `None`.
    pub fn separable_potential(&self, n: usize) -> Option<ConvexSpec> {
        match self {
            DissipationLaw::Pure => Some(ConvexSpec::Linear {
                slope: vec![0.0; 2 * n],
            }),
            DissipationLaw::Separable { phi } => Some(phi.clone()),
            DissipationLaw::Viscous { phi } => Some(ConvexSpec::SeparableProduct {
                dim: 2 * n,
                parts: vec![crate::convex::SeparablePart {
                    spec: phi.clone(),
                    coords: (0..n).collect(),
                }],
            }),
            DissipationLaw::Plastic { phi } => {
                if n != 2 {
                    return None;
                }
                Some(ConvexSpec::SeparableProduct {
                    dim: 4,
                    parts: vec![crate::convex::SeparablePart {
                        spec: phi.clone(),
                        coords: vec![3],
                    }],
                })
            }
            DissipationLaw::Damage { threshold } => {
                if n != 2 {
                    return None;
                }
                Some(ConvexSpec::SeparableProduct {
                    dim: 4,
                    parts: vec![crate::convex::SeparablePart {
                        spec: damage_rate_potential(*threshold),
                        coords: vec![1],
                    }],
                })
            }
            DissipationLaw::Contact { .. } => None,
        }
    }

    fn contact_parts(&self) -> Option<(&HalfSpace, f64)> {
        match self {
            DissipationLaw::Contact {
                constraint,
                boundary_band,
            } => Some((constraint, *boundary_band)),
            _ => None,
        }
    }

    /// Membership in the normal cone `N(q | M)`: `{0}` at interior
    /// points, the inward ray `{ -s * normal : s >= 0 }` on the boundary
    /// band. Contact law only; `q` outside `M` is a usage error.
    pub fn normal_cone_contains(&self, q: &[f64], u: &[f64], slack: f64) -> Result<bool> {
        let (hs, band) = self.contact_parts().ok_or(Error::UnsupportedOperation {
            op: "normal_cone_contains",
            detail: format!("law `{}` has no constraint set", self.name()),
        })?;
        let g = hs.gap(q);
        if g < -tol::PENETRATION {
            return Err(Error::OutsideConstraint { violation: -g });
        }
        if g > band {
            return Ok(u.iter().all(|x| x.abs() <= slack));
        }
        Ok(on_inward_ray(u, &hs.normal, slack))
    }

    /// Membership in the tangent cone `T(q | M)`: everything at interior
    /// points, `{ v : <normal, v> >= 0 }` on the boundary band.
    pub fn tangent_cone_contains(&self, q: &[f64], v: &[f64], slack: f64) -> Result<bool> {
        let (hs, band) = self.contact_parts().ok_or(Error::UnsupportedOperation {
            op: "tangent_cone_contains",
            detail: format!("law `{}` has no constraint set", self.name()),
        })?;
        let g = hs.gap(q);
        if g < -tol::PENETRATION {
            return Err(Error::OutsideConstraint { violation: -g });
        }
        if g > band {
            return Ok(true);
        }
        Ok(dot(&hs.normal, v) >= -slack * (1.0 + norm_inf(v)))
    }

    /// Draws `(z_dot, eta)` with finite information content at `z`; with
    /// `zero_gap` the pair is constructed on the zero set.
    pub fn sample_pair<R: Rng>(
        &self,
        z: &PhaseVector,
        rng: &mut R,
        zero_gap: bool,
    ) -> Result<(PhaseVector, PhaseVector)> {
        let n = z.dim();
        self.validate_for_dim(n)?;
        let spread = |rng: &mut R, n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()
        };
        match self {
            DissipationLaw::Pure => Ok((
                PhaseVector::new(spread(rng, n), spread(rng, n))?,
                PhaseVector::zeros(n),
            )),
            DissipationLaw::Separable { phi } => {
                let flat = phi.sample_domain_point(rng);
                let u = if zero_gap {
                    phi.sample_subgradient(&flat, rng)
                } else {
                    let other = phi.sample_domain_point(rng);
                    phi.sample_subgradient(&other, rng)
                };
                let z_dot = PhaseVector::from_flat(&flat)?;
                // swap(flat(eta)) = u, so flat(eta) = [u_p; u_q].
                let mut swapped = u[n..].to_vec();
                swapped.extend_from_slice(&u[..n]);
                Ok((z_dot, PhaseVector::from_flat(&swapped)?))
            }
            DissipationLaw::Viscous { phi } => {
                let qd = phi.sample_domain_point(rng);
                let ep = if zero_gap {
                    phi.sample_subgradient(&qd, rng)
                } else {
                    let other = phi.sample_domain_point(rng);
                    phi.sample_subgradient(&other, rng)
                };
                Ok((
                    PhaseVector::new(qd, spread(rng, n))?,
                    PhaseVector::new(vec![0.0; n], ep)?,
                ))
            }
            DissipationLaw::Plastic { phi } => {
                let force = phi.sample_domain_point(rng)[0];
                let flow = if zero_gap {
                    phi.sample_subgradient(&[force], rng)[0]
                } else {
                    let other = phi.sample_domain_point(rng);
                    phi.sample_subgradient(&other, rng)[0]
                };
                let z_dot = PhaseVector::new(
                    spread(rng, 2),
                    vec![rng.gen_range(-2.0..2.0), force],
                )?;
                let eta = PhaseVector::new(vec![0.0, flow], vec![0.0, 0.0])?;
                Ok((z_dot, eta))
            }
            DissipationLaw::Damage { threshold } => {
                let ramp = damage_rate_potential(*threshold);
                let rate = ramp.sample_domain_point(rng)[0];
                let drive = if zero_gap {
                    ramp.sample_subgradient(&[rate], rng)[0]
                } else {
                    let other = ramp.sample_domain_point(rng);
                    ramp.sample_subgradient(&other, rng)[0]
                };
                let z_dot = PhaseVector::new(
                    vec![rng.gen_range(-2.0..2.0), rate],
                    spread(rng, 2),
                )?;
                let eta = PhaseVector::new(vec![0.0, 0.0], vec![0.0, drive])?;
                Ok((z_dot, eta))
            }
            DissipationLaw::Contact {
                constraint,
                boundary_band,
            } => {
                let g = constraint.gap(z.q());
                if g < -tol::PENETRATION {
                    return Err(Error::OutsideConstraint { violation: -g });
                }
                let on_boundary = g <= *boundary_band;
                let active = on_boundary && rng.gen::<f64>() < 0.5;
                let normal = &constraint.normal;
                let nn = dot(normal, normal);
                let mut qd = spread(rng, n);
                let ep = if active {
                    let strength = rng.gen_range(0.0..3.0);
                    // Active reactions require tangent velocities; project
                    // out the inward component, keeping an outward drift
                    // only for pairs that are allowed a positive gap.
                    let along = dot(normal, &qd) / nn;
                    for (v, ni) in qd.iter_mut().zip(normal) {
                        *v -= along * ni;
                    }
                    if !zero_gap {
                        let outward = rng.gen_range(0.0..1.0);
                        for (v, ni) in qd.iter_mut().zip(normal) {
                            *v += outward * ni;
                        }
                    }
                    normal.iter().map(|ni| -strength * ni).collect()
                } else {
                    vec![0.0; n]
                };
                Ok((
                    PhaseVector::new(qd, spread(rng, n))?,
                    PhaseVector::new(vec![0.0; n], ep)?,
                ))
            }
        }
    }

    /// Numerical probe of the defining properties: nonnegativity of the
    /// information content, midpoint convexity of the bipotential in each
    /// slot, attainment of zero information at every sampled rate, and
    /// (for the internal-variable laws) that infeasible rates price every
    /// deviation at `+inf`.
    pub fn axioms_check(
        &self,
        z: &PhaseVector,
        samples: usize,
        seed: u64,
        slack: f64,
    ) -> Result<AxiomsReport> {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut report = AxiomsReport {
            samples,
            worst_information_deficit: 0.0,
            worst_rate_midpoint_defect: 0.0,
            worst_deviation_midpoint_defect: 0.0,
            worst_zero_gap_information: 0.0,
            infeasible_rates_all_infinite: true,
            passed: false,
        };

        for _ in 0..samples {
            let (zd1, e1) = self.sample_pair(z, &mut rng, false)?;
            let (zd2, e2) = self.sample_pair(z, &mut rng, false)?;

            let info1 = self.information_content(z, &zd1, &e1)?;
            if info1.is_finite() && info1.value() < 0.0 {
                report.worst_information_deficit =
                    report.worst_information_deficit.max(-info1.value());
            }

            // Midpoint convexity in the rate slot at fixed deviation.
            let b1 = self.bipotential_value(z, &zd1, &e1)?;
            let b2 = self.bipotential_value(z, &zd2, &e1)?;
            if b1.is_finite() && b2.is_finite() {
                let mid = zd1.add(&zd2)?.scale(0.5);
                let bm = self.bipotential_value(z, &mid, &e1)?;
                let bound = 0.5 * (b1.value() + b2.value());
                let defect = if bm.is_finite() {
                    bm.value() - bound
                } else {
                    f64::INFINITY
                };
                report.worst_rate_midpoint_defect =
                    report.worst_rate_midpoint_defect.max(defect);
            }

            // Midpoint convexity in the deviation slot at fixed rate.
            let c1 = self.bipotential_value(z, &zd1, &e1)?;
            let c2 = self.bipotential_value(z, &zd1, &e2)?;
            if c1.is_finite() && c2.is_finite() {
                let mid = e1.add(&e2)?.scale(0.5);
                let cm = self.bipotential_value(z, &zd1, &mid)?;
                let bound = 0.5 * (c1.value() + c2.value());
                let defect = if cm.is_finite() {
                    cm.value() - bound
                } else {
                    f64::INFINITY
                };
                report.worst_deviation_midpoint_defect =
                    report.worst_deviation_midpoint_defect.max(defect);
            }

            // Zero information is attainable at every sampled rate.
            let (zd0, e0) = self.sample_pair(z, &mut rng, true)?;
            let info0 = self.information_content(z, &zd0, &e0)?;
            let attained = if info0.is_finite() {
                info0.value().abs()
            } else {
                f64::INFINITY
            };
            report.worst_zero_gap_information =
                report.worst_zero_gap_information.max(attained);
        }

        // Rates outside the feasible set price every deviation at +inf.
        report.infeasible_rates_all_infinite = match self {
            DissipationLaw::Plastic { phi } => {
                let mut ok = true;
                for k in 0..16 {
                    let force = 1e3 + k as f64; // far outside any shipped elastic domain
                    let z_dot = PhaseVector::new(vec![0.0, 0.0], vec![0.0, force])?;
                    for flow in [-1.0, 0.0, 1.0] {
                        let eta = PhaseVector::new(vec![0.0, flow], vec![0.0, 0.0])?;
                        ok &= self
                            .information_content(z, &z_dot, &eta)?
                            .is_infinite();
                    }
                    let _ = phi;
                }
                ok
            }
            DissipationLaw::Damage { threshold } => {
                let mut ok = true;
                for k in 0..16 {
                    let rate = -1e-3 * (1.0 + k as f64);
                    let z_dot = PhaseVector::new(vec![0.0, rate], vec![0.0, 0.0])?;
                    for drive in [0.0, 0.5 * threshold, *threshold] {
                        let eta = PhaseVector::new(vec![0.0, 0.0], vec![0.0, drive])?;
                        ok &= self
                            .information_content(z, &z_dot, &eta)?
                            .is_infinite();
                    }
                }
                ok
            }
            _ => true,
        };

        report.passed = report.worst_information_deficit <= slack
            && report.worst_rate_midpoint_defect <= slack
            && report.worst_deviation_midpoint_defect <= slack
            && report.worst_zero_gap_information <= slack
            && report.infeasible_rates_all_infinite;
        Ok(report)
    }
}

/// Outcome of [`DissipationLaw::axioms_check`]; `worst_*` fields are the
/// largest violations observed (0 when every sample satisfied the
/// property exactly).
#[derive(Clone, Debug, Serialize)]
pub struct AxiomsReport {
    pub samples: usize,
    pub worst_information_deficit: f64,
    pub worst_rate_midpoint_defect: f64,
    pub worst_deviation_midpoint_defect: f64,
    pub worst_zero_gap_information: f64,
    pub infeasible_rates_all_infinite: bool,
    pub passed: bool,
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// `u = -s * normal` for some `s >= 0`, entrywise within `slack`.
fn on_inward_ray(u: &[f64], normal: &[f64], slack: f64) -> bool {
    let nn = dot(normal, normal);
    let strength = -dot(u, normal) / nn;
    if strength < -slack {
        return false;
    }
    let scale = 1.0 + norm_inf(u);
    u.iter()
        .zip(normal)
        .all(|(ui, ni)| (ui + strength * ni).abs() <= slack * scale)
}

/// Contact information content with the discrete activity convention: a
/// zero reaction only requires non-penetration (free flight across the
/// boundary band is admissible), while a nonzero reaction must be an
/// inward normal applied within the band to a tangent velocity, and then
/// costs `-<dq/dt, eta_p>` (nonnegative by cone polarity).
fn contact_information(
    hs: &HalfSpace,
    band: f64,
    z: &PhaseVector,
    z_dot: &PhaseVector,
    eta: &PhaseVector,
) -> ExtReal {
    let g = hs.gap(z.q());
    if g < -tol::PENETRATION {
        return ExtReal::INFINITY;
    }
    if eta.q().iter().any(|&x| x != 0.0) {
        return ExtReal::INFINITY;
    }
    let ep = eta.p();
    if ep.iter().all(|&x| x == 0.0) {
        return ExtReal::ZERO;
    }
    if g > band {
        return ExtReal::INFINITY; // reactions act only on the boundary
    }
    if !on_inward_ray(ep, &hs.normal, tol::MEMBERSHIP) {
        return ExtReal::INFINITY;
    }
    let qd = z_dot.q();
    if dot(&hs.normal, qd) < -tol::MEMBERSHIP * (1.0 + norm_inf(qd)) {
        return ExtReal::INFINITY; // velocity must not point into the wall
    }
    ExtReal::from(-dot(qd, ep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn viscous(c: f64) -> DissipationLaw {
        DissipationLaw::Viscous {
            phi: ConvexSpec::Quadratic {
                a: c,
                center: vec![0.0],
            },
        }
    }

    fn plastic(limit: f64) -> DissipationLaw {
        DissipationLaw::Plastic {
            phi: ConvexSpec::IndicatorBox {
                lo: vec![-limit],
                hi: vec![limit],
            },
        }
    }

    fn contact_line() -> DissipationLaw {
        DissipationLaw::Contact {
            constraint: HalfSpace {
                normal: vec![1.0],
                offset: 0.0,
            },
            boundary_band: tol::BOUNDARY_BAND,
        }
    }

    fn pv(q: &[f64], p: &[f64]) -> PhaseVector {
        PhaseVector::new(q.to_vec(), p.to_vec()).unwrap()
    }

    #[test]
    fn pure_law_rejects_any_deviation() {
        let law = DissipationLaw::Pure;
        let z = pv(&[1.0], &[0.5]);
        let zd = pv(&[0.5], &[-1.0]);
        let ok = law
            .information_content(&z, &zd, &PhaseVector::zeros(1))
            .unwrap();
        assert_eq!(ok, ExtReal::ZERO);
        let bad = law
            .information_content(&z, &zd, &pv(&[0.0], &[1e-15]))
            .unwrap();
        assert!(bad.is_infinite(), "tiny deviation must cost +inf, got {bad:?}");
    }

    #[test]
    fn viscous_content_is_the_fenchel_gap_of_the_rate_potential() {
        let law = viscous(0.5);
        let z = pv(&[0.0], &[0.0]);
        // matched pair: eta_p = c * v
        let zd = pv(&[2.0], &[0.0]);
        let eta = pv(&[0.0], &[1.0]);
        let info = law.information_content(&z, &zd, &eta).unwrap();
        assert!(info.value().abs() <= 1e-12, "matched pair, got {info:?}");
        // mismatched pair: gap = (c v - eta_p)^2 / (2c) = (1 - 0.4)^2 / 1
        let eta = pv(&[0.0], &[0.4]);
        let info = law.information_content(&z, &zd, &eta).unwrap();
        assert!(
            (info.value() - 0.36).abs() <= 1e-12,
            "expected 0.36, got {info:?}"
        );
        // any eta_q is forbidden
        let eta = pv(&[1e-12], &[1.0]);
        assert!(law.information_content(&z, &zd, &eta).unwrap().is_infinite());
    }

    #[test]
    fn plastic_content_enforces_the_elastic_domain_and_normality() {
        let law = plastic(1.0);
        let z = pv(&[0.0, 0.0], &[0.0, 0.0]);
        // at the yield surface, flow along the outward normal is free
        let zd = pv(&[0.1, 0.3], &[0.2, 1.0]);
        let eta = pv(&[0.0, 0.7], &[0.0, 0.0]);
        let info = law.information_content(&z, &zd, &eta).unwrap();
        assert!(info.value().abs() <= 1e-12, "normality pair, got {info:?}");
        // reversed flow at the same surface pays 2 * limit * |flow|
        let eta = pv(&[0.0, -0.7], &[0.0, 0.0]);
        let info = law.information_content(&z, &zd, &eta).unwrap();
        assert!((info.value() - 1.4).abs() <= 1e-12, "got {info:?}");
        // forces outside the elastic domain are forbidden outright
        let zd = pv(&[0.1, 0.3], &[0.2, 1.5]);
        let eta = PhaseVector::zeros(2);
        assert!(law.information_content(&z, &zd, &eta).unwrap().is_infinite());
    }

    #[test]
    fn damage_content_prices_growth_at_the_threshold() {
        let law = DissipationLaw::Damage { threshold: 1.0 };
        let z = pv(&[1.0, 0.3], &[0.0, 0.05]);
        // growth driven exactly at the threshold is free
        let zd = pv(&[0.0, 0.5], &[0.0, 0.5]);
        let eta = pv(&[0.0, 0.0], &[0.0, 1.0]);
        let info = law.information_content(&z, &zd, &eta).unwrap();
        assert!(info.value().abs() <= 1e-12, "threshold growth, got {info:?}");
        // growth below the threshold pays rate * (threshold - drive)
        let eta = pv(&[0.0, 0.0], &[0.0, 0.8]);
        let info = law.information_content(&z, &zd, &eta).unwrap();
        assert!((info.value() - 0.1).abs() <= 1e-12, "got {info:?}");
        // healing is forbidden, as is exceeding the threshold
        let shrink = pv(&[0.0, -0.1], &[0.0, 0.0]);
        assert!(law
            .information_content(&z, &shrink, &PhaseVector::zeros(2))
            .unwrap()
            .is_infinite());
        let hot = pv(&[0.0, 0.0], &[0.0, 1.1]);
        assert!(law
            .information_content(&z, &zd, &hot)
            .unwrap()
            .is_infinite());
        // damage outside [0, 1] is inadmissible regardless of rates
        let broken = pv(&[1.0, 1.5], &[0.0, 0.0]);
        assert!(law
            .information_content(&broken, &zd, &eta)
            .unwrap()
            .is_infinite());
    }

    #[test]
    fn contact_content_follows_the_cone_rules() {
        let law = contact_line();
        // free flight in the interior: zero reaction costs nothing
        let z = pv(&[5.0], &[-1.0]);
        let zd = pv(&[-1.0], &[-10.0]);
        let info = law
            .information_content(&z, &zd, &PhaseVector::zeros(1))
            .unwrap();
        assert_eq!(info, ExtReal::ZERO);
        // but an interior reaction is forbidden
        let push = pv(&[0.0], &[-3.0]);
        assert!(law.information_content(&z, &zd, &push).unwrap().is_infinite());
        // resting on the boundary: inward reaction and zero velocity
        let z = pv(&[0.0], &[0.0]);
        let rest = pv(&[0.0], &[0.0]);
        let info = law.information_content(&z, &rest, &push).unwrap();
        assert_eq!(info, ExtReal::ZERO);
        // an outward (adhesive) reaction is not in the normal cone
        let pull = pv(&[0.0], &[3.0]);
        assert!(law.information_content(&z, &rest, &pull).unwrap().is_infinite());
        // a reacting state must not move into the wall
        let into = pv(&[-1.0], &[0.0]);
        assert!(law.information_content(&z, &into, &push).unwrap().is_infinite());
        // departing against a reaction costs the pairing
        let leave = pv(&[2.0], &[0.0]);
        let info = law.information_content(&z, &leave, &push).unwrap();
        assert!((info.value() - 6.0).abs() <= 1e-12, "got {info:?}");
        // penetration is inadmissible
        let sunk = pv(&[-1.0], &[0.0]);
        assert!(law
            .information_content(&sunk, &rest, &PhaseVector::zeros(1))
            .unwrap()
            .is_infinite());
    }

    #[test]
    fn cone_membership_matches_hand_examples() {
        let law = contact_line();
        let slack = 1e-9;
        // boundary point: inward ray only
        assert!(law.normal_cone_contains(&[0.0], &[-3.0], slack).unwrap());
        assert!(!law.normal_cone_contains(&[0.0], &[3.0], slack).unwrap());
        // interior point: {0}
        assert!(law.normal_cone_contains(&[2.0], &[0.0], slack).unwrap());
        assert!(!law.normal_cone_contains(&[2.0], &[-3.0], slack).unwrap());
        // tangent cone: outward and sliding velocities at the boundary
        assert!(law.tangent_cone_contains(&[0.0], &[4.0], slack).unwrap());
        assert!(law.tangent_cone_contains(&[0.0], &[0.0], slack).unwrap());
        assert!(!law.tangent_cone_contains(&[0.0], &[-4.0], slack).unwrap());
        assert!(law.tangent_cone_contains(&[2.0], &[-4.0], slack).unwrap());
        // outside the set the cones are undefined
        assert!(matches!(
            law.normal_cone_contains(&[-1.0], &[0.0], slack),
            Err(Error::OutsideConstraint { .. })
        ));
    }

    #[test]
    fn likelihood_is_exponential_in_the_information() {
        let law = viscous(0.5);
        let z = pv(&[0.0], &[0.0]);
        let zd = pv(&[2.0], &[0.0]);
        let matched = pv(&[0.0], &[1.0]);
        let off = pv(&[0.0], &[0.4]);
        let forbidden = pv(&[1.0], &[1.0]);
        assert!((law.likelihood(&z, &zd, &matched).unwrap() - 1.0).abs() <= 1e-12);
        let expected = (-0.36f64).exp();
        assert!((law.likelihood(&z, &zd, &off).unwrap() - expected).abs() <= 1e-12);
        assert_eq!(law.likelihood(&z, &zd, &forbidden).unwrap(), 0.0);
    }

    #[test]
    fn sampled_zero_gap_pairs_match_the_potential_inclusion() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let laws: Vec<(DissipationLaw, PhaseVector)> = vec![
            (DissipationLaw::Pure, pv(&[0.3], &[0.4])),
            (viscous(0.5), pv(&[0.3], &[0.4])),
            (plastic(1.0), pv(&[0.1, 0.0], &[0.2, 0.0])),
            (
                DissipationLaw::Damage { threshold: 1.0 },
                pv(&[1.0, 0.2], &[0.1, 0.0]),
            ),
            (
                DissipationLaw::Separable {
                    phi: ConvexSpec::Quadratic {
                        a: 2.0,
                        center: vec![0.0, 0.0],
                    },
                },
                pv(&[0.3], &[0.4]),
            ),
        ];
        for (law, z) in laws {
            let n = z.dim();
            let potential = law.separable_potential(n).unwrap();
            for _ in 0..200 {
                let (zd, eta) = law.sample_pair(&z, &mut rng, true).unwrap();
                assert!(
                    law.zero_gap_holds(&z, &zd, &eta, 1e-9).unwrap(),
                    "{}: sampled pair off the zero set",
                    law.name()
                );
                let inc = potential
                    .subgradient_contains(&zd.to_flat(), &eta.to_swapped_flat(), tol::MEMBERSHIP)
                    .unwrap();
                assert!(inc, "{}: inclusion test disagrees with zero gap", law.name());
            }
        }
    }

    #[test]
    fn axioms_hold_for_every_law() {
        let cases: Vec<(DissipationLaw, PhaseVector)> = vec![
            (DissipationLaw::Pure, pv(&[0.5], &[0.1])),
            (viscous(0.5), pv(&[0.5], &[0.1])),
            (plastic(1.0), pv(&[0.1, 0.0], &[0.0, 0.0])),
            (
                DissipationLaw::Damage { threshold: 1.0 },
                pv(&[1.0, 0.4], &[0.2, 0.1]),
            ),
            (contact_line(), pv(&[0.0], &[0.0])),  // resting on the wall
            (contact_line(), pv(&[3.0], &[-1.0])), // free flight
            (
                DissipationLaw::Separable {
                    phi: ConvexSpec::Quadratic {
                        a: 1.5,
                        center: vec![0.0, 0.0],
                    },
                },
                pv(&[0.5], &[0.1]),
            ),
        ];
        for (law, z) in cases {
            let report = law.axioms_check(&z, 400, 7, 1e-9).unwrap();
            assert!(
                report.passed,
                "{} axioms violated: {report:?}",
                law.name()
            );
        }
    }

    #[test]
    fn layout_guards_reject_mismatched_dimensions() {
        let law = plastic(1.0);
        assert!(matches!(
            law.validate_for_dim(1),
            Err(Error::LayoutMismatch { .. })
        ));
        let law = DissipationLaw::Damage { threshold: 1.0 };
        assert!(matches!(
            law.validate_for_dim(3),
            Err(Error::LayoutMismatch { .. })
        ));
        let law = viscous(0.5);
        assert!(law.validate_for_dim(1).is_ok());
        assert!(matches!(
            law.validate_for_dim(2),
            Err(Error::LayoutMismatch { .. })
        ));
    }

    #[test]
    fn serde_defaults_the_boundary_band() {
        let text = r#"{"type":"contact","constraint":{"normal":[1.0],"offset":0.0}}"#;
        let law: DissipationLaw = serde_json::from_str(text).unwrap();
        match law {
            DissipationLaw::Contact { boundary_band, .. } => {
                assert_eq!(boundary_band, tol::BOUNDARY_BAND)
            }
            other => panic!("parsed into {other:?}"),
        }
    }
}
