//! Hamiltonian test systems.
//!
//! Each model provides its energy `H(z, t)`, the two partial-derivative
//! blocks `dH/dq` and `dH/dp`, and metadata (state layout, effective
//! mass). The `gradient` method packs the partials in duality order --
//! `dH/dp` in the q slot and `dH/dq` in the p slot -- so that the
//! conservative flow is its phase-space conjugate.

use serde::{Deserialize, Serialize};

use crate::phase::PhaseVector;
use crate::{Error, Result};

/// Names and interpretation of the coordinate blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateLayout {
    /// One configuration coordinate: `[q] / [p]`.
    Plain,
    /// Configuration plus an internal (plastic) variable:
    /// `[q, q_i] / [p, p_i]`.
    Internal,
    /// Configuration plus a damage variable and its driving momentum:
    /// `[q, d] / [p, r]`.
    Damage,
}

impl StateLayout {
    pub fn blocks(&self) -> usize {
        match self {
            StateLayout::Plain => 1,
            StateLayout::Internal | StateLayout::Damage => 2,
        }
    }

    pub fn q_names(&self) -> &'static [&'static str] {
        match self {
            StateLayout::Plain => &["q"],
            StateLayout::Internal => &["q", "q_i"],
            StateLayout::Damage => &["q", "d"],
        }
    }

    pub fn p_names(&self) -> &'static [&'static str] {
        match self {
            StateLayout::Plain => &["p"],
            StateLayout::Internal => &["p", "p_i"],
            StateLayout::Damage => &["p", "r"],
        }
    }
}

/// Time-dependent external load applied to the primary coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Forcing {
    Zero,
    Constant {
        value: f64,
    },
    Sinusoid {
        amplitude: f64,
        angular_frequency: f64,
        phase: f64,
    },
    /// Piecewise-linear interpolation through `(t, value)` knots, held
    /// constant beyond the first and last knot.
    PiecewiseLinear {
        knots: Vec<[f64; 2]>,
    },
}

impl Forcing {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Forcing::Zero => 0.0,
            Forcing::Constant { value } => *value,
            Forcing::Sinusoid {
                amplitude,
                angular_frequency,
                phase,
            } => amplitude * (angular_frequency * t + phase).sin(),
            Forcing::PiecewiseLinear { knots } => {
                let first = knots.first().expect("validated nonempty");
                let last = knots.last().expect("validated nonempty");
                if t <= first[0] {
                    return first[1];
                }
                if t >= last[0] {
                    return last[1];
                }
                let i = knots.partition_point(|k| k[0] <= t);
                let (a, b) = (&knots[i - 1], &knots[i]);
                let w = (t - a[0]) / (b[0] - a[0]);
                a[1] + w * (b[1] - a[1])
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Forcing::Zero => Ok(()),
            Forcing::Constant { value } => {
                if value.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter {
                        name: "Forcing::Constant.value",
                        reason: "must be finite".into(),
                    })
                }
            }
            Forcing::Sinusoid {
                amplitude,
                angular_frequency,
                phase,
            } => {
                if [amplitude, angular_frequency, phase]
                    .iter()
                    .all(|x| x.is_finite())
                {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter {
                        name: "Forcing::Sinusoid",
                        reason: "parameters must be finite".into(),
                    })
                }
            }
            Forcing::PiecewiseLinear { knots } => {
                if knots.is_empty() {
                    return Err(Error::InvalidParameter {
                        name: "Forcing::PiecewiseLinear.knots",
                        reason: "must not be empty".into(),
                    });
                }
                if knots.iter().any(|k| !k[0].is_finite() || !k[1].is_finite()) {
                    return Err(Error::InvalidParameter {
                        name: "Forcing::PiecewiseLinear.knots",
                        reason: "entries must be finite".into(),
                    });
                }
                if knots.windows(2).any(|w| w[0][0] >= w[1][0]) {
                    return Err(Error::InvalidParameter {
                        name: "Forcing::PiecewiseLinear.knots",
                        reason: "times must be strictly increasing".into(),
                    });
                }
                Ok(())
            }
        }
    }
}

/// The model catalogue.
///
/// * `HarmonicOscillator`: `H = p^2/(2 mass) + stiffness q^2 / 2`.
/// * `Pendulum`: `H = p^2/(2 mass length^2) + mass gravity length (1 - cos q)`.
/// * `ElastoPlastic`: blocks `[q, q_i]`;
///   `H = p^2/(2 mass) + stiffness (q - q_i)^2 / 2 - q f(t)`, the internal
///   momentum `p_i` carries no kinetic term.
/// * `DamagingSpring`: blocks `[q, d]` / `[p, r]`;
///   `H = p^2/(2 mass) + r^2/(2 damage_inertia)
///        + (1 - d) stiffness q^2 / 2 - q f(t)`.
/// * `ContactBall`: `H = p^2/(2 mass) + mass gravity q` above a floor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HamiltonianModel {
    HarmonicOscillator {
        mass: f64,
        stiffness: f64,
    },
    Pendulum {
        mass: f64,
        gravity: f64,
        length: f64,
    },
    ElastoPlastic {
        mass: f64,
        stiffness: f64,
        forcing: Forcing,
    },
    DamagingSpring {
        mass: f64,
        damage_inertia: f64,
        stiffness: f64,
        forcing: Forcing,
    },
    ContactBall {
        mass: f64,
        gravity: f64,
    },
}

impl HamiltonianModel {
    pub fn name(&self) -> &'static str {
        match self {
            HamiltonianModel::HarmonicOscillator { .. } => "harmonic_oscillator",
            HamiltonianModel::Pendulum { .. } => "pendulum",
            HamiltonianModel::ElastoPlastic { .. } => "elasto_plastic",
            HamiltonianModel::DamagingSpring { .. } => "damaging_spring",
            HamiltonianModel::ContactBall { .. } => "contact_ball",
        }
    }

    pub fn layout(&self) -> StateLayout {
        match self {
            HamiltonianModel::HarmonicOscillator { .. }
            | HamiltonianModel::Pendulum { .. }
            | HamiltonianModel::ContactBall { .. } => StateLayout::Plain,
            HamiltonianModel::ElastoPlastic { .. } => StateLayout::Internal,
            HamiltonianModel::DamagingSpring { .. } => StateLayout::Damage,
        }
    }

    /// Coordinates per block.
    pub fn dim(&self) -> usize {
        self.layout().blocks()
    }

    /// Effective inertia of the primary coordinate: `dH/dp = p / kinetic_mass`.
    pub fn kinetic_mass(&self) -> f64 {
        match self {
            HamiltonianModel::HarmonicOscillator { mass, .. }
            | HamiltonianModel::ElastoPlastic { mass, .. }
            | HamiltonianModel::DamagingSpring { mass, .. }
            | HamiltonianModel::ContactBall { mass, .. } => *mass,
            HamiltonianModel::Pendulum { mass, length, .. } => mass * length * length,
        }
    }

    /// Inertia of the damage-driving momentum, when the model has one.
    pub fn damage_inertia(&self) -> Option<f64> {
        match self {
            HamiltonianModel::DamagingSpring { damage_inertia, .. } => Some(*damage_inertia),
            _ => None,
        }
    }

    /// Elastic modulus coupling the primary coordinate to the internal
    /// variable, when the model has one.
    pub fn internal_stiffness(&self) -> Option<f64> {
        match self {
            HamiltonianModel::ElastoPlastic { stiffness, .. } => Some(*stiffness),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &'static str| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive and finite, got {v}"),
                })
            }
        };
        match self {
            HamiltonianModel::HarmonicOscillator { mass, stiffness } => {
                positive(*mass, "HarmonicOscillator.mass")?;
                positive(*stiffness, "HarmonicOscillator.stiffness")
            }
            HamiltonianModel::Pendulum {
                mass,
                gravity,
                length,
            } => {
                positive(*mass, "Pendulum.mass")?;
                positive(*gravity, "Pendulum.gravity")?;
                positive(*length, "Pendulum.length")
            }
            HamiltonianModel::ElastoPlastic {
                mass,
                stiffness,
                forcing,
            } => {
                positive(*mass, "ElastoPlastic.mass")?;
                positive(*stiffness, "ElastoPlastic.stiffness")?;
                forcing.validate()
            }
            HamiltonianModel::DamagingSpring {
                mass,
                damage_inertia,
                stiffness,
                forcing,
            } => {
                positive(*mass, "DamagingSpring.mass")?;
                positive(*damage_inertia, "DamagingSpring.damage_inertia")?;
                positive(*stiffness, "DamagingSpring.stiffness")?;
                forcing.validate()
            }
            HamiltonianModel::ContactBall { mass, gravity } => {
                positive(*mass, "ContactBall.mass")?;
                positive(*gravity, "ContactBall.gravity")
            }
        }
    }

    fn check_state(&self, z: &PhaseVector) -> Result<()> {
        if z.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "model state",
                expected: self.dim(),
                found: z.dim(),
            });
        }
        Ok(())
    }

    /// Total energy `H(z, t)`.
    pub fn energy(&self, z: &PhaseVector, t: f64) -> Result<f64> {
        self.check_state(z)?;
        let (q, p) = (z.q(), z.p());
        Ok(match self {
            HamiltonianModel::HarmonicOscillator { mass, stiffness } => {
                p[0] * p[0] / (2.0 * mass) + 0.5 * stiffness * q[0] * q[0]
            }
            HamiltonianModel::Pendulum {
                mass,
                gravity,
                length,
            } => {
                p[0] * p[0] / (2.0 * mass * length * length)
                    + mass * gravity * length * (1.0 - q[0].cos())
            }
            HamiltonianModel::ElastoPlastic {
                mass,
                stiffness,
                forcing,
            } => {
                let stretch = q[0] - q[1];
                p[0] * p[0] / (2.0 * mass) + 0.5 * stiffness * stretch * stretch
                    - q[0] * forcing.value(t)
            }
            HamiltonianModel::DamagingSpring {
                mass,
                damage_inertia,
                stiffness,
                forcing,
            } => {
                p[0] * p[0] / (2.0 * mass)
                    + p[1] * p[1] / (2.0 * damage_inertia)
                    + 0.5 * (1.0 - q[1]) * stiffness * q[0] * q[0]
                    - q[0] * forcing.value(t)
            }
            HamiltonianModel::ContactBall { mass, gravity } => {
                p[0] * p[0] / (2.0 * mass) + mass * gravity * q[0]
            }
        })
    }

    /// Partial derivatives with respect to the configuration block.
    pub fn dh_dq(&self, z: &PhaseVector, t: f64) -> Result<Vec<f64>> {
        self.check_state(z)?;
        let q = z.q();
        Ok(match self {
            HamiltonianModel::HarmonicOscillator { stiffness, .. } => {
                vec![stiffness * q[0]]
            }
            HamiltonianModel::Pendulum {
                mass,
                gravity,
                length,
            } => vec![mass * gravity * length * q[0].sin()],
            HamiltonianModel::ElastoPlastic {
                stiffness, forcing, ..
            } => {
                let tension = stiffness * (q[0] - q[1]);
                vec![tension - forcing.value(t), -tension]
            }
            HamiltonianModel::DamagingSpring {
                stiffness, forcing, ..
            } => vec![
                (1.0 - q[1]) * stiffness * q[0] - forcing.value(t),
                -0.5 * stiffness * q[0] * q[0],
            ],
            HamiltonianModel::ContactBall { mass, gravity } => vec![mass * gravity],
        })
    }

    /// Partial derivatives with respect to the momentum block.
    pub fn dh_dp(&self, z: &PhaseVector, _t: f64) -> Result<Vec<f64>> {
        self.check_state(z)?;
        let p = z.p();
        Ok(match self {
            HamiltonianModel::HarmonicOscillator { mass, .. } => vec![p[0] / mass],
            HamiltonianModel::Pendulum { mass, length, .. } => {
                vec![p[0] / (mass * length * length)]
            }
            HamiltonianModel::ElastoPlastic { mass, .. } => vec![p[0] / mass, 0.0],
            HamiltonianModel::DamagingSpring {
                mass,
                damage_inertia,
                ..
            } => vec![p[0] / mass, p[1] / damage_inertia],
            HamiltonianModel::ContactBall { mass, .. } => vec![p[0] / mass],
        })
    }

    /// The gradient in duality order: `dH/dp` in the q slot, `dH/dq` in
    /// the p slot. Pairing it with a displacement reproduces the first
    /// variation of `H`.
    pub fn gradient(&self, z: &PhaseVector, t: f64) -> Result<PhaseVector> {
        PhaseVector::new(self.dh_dp(z, t)?, self.dh_dq(z, t)?)
    }

    /// Conservative flow `(dq/dt, dp/dt) = (dH/dp, -dH/dq)`, the
    /// conjugate of [`HamiltonianModel::gradient`].
    pub fn flow_field(&self, z: &PhaseVector, t: f64) -> Result<PhaseVector> {
        Ok(self.gradient(z, t)?.conjugate())
    }

    /// Central-difference approximation of [`HamiltonianModel::gradient`]
    /// with step `h`, used to cross-check the hand-written derivatives.
    pub fn finite_difference_gradient(
        &self,
        z: &PhaseVector,
        t: f64,
        h: f64,
    ) -> Result<PhaseVector> {
        self.check_state(z)?;
        let n = z.dim();
        let mut dq = vec![0.0; n];
        let mut dp = vec![0.0; n];
        for i in 0..n {
            let bump = |dq_i: f64, dp_i: f64| -> Result<f64> {
                let mut q = z.q().to_vec();
                let mut p = z.p().to_vec();
                q[i] += dq_i;
                p[i] += dp_i;
                self.energy(&PhaseVector::new(q, p)?, t)
            };
            dq[i] = (bump(h, 0.0)? - bump(-h, 0.0)?) / (2.0 * h);
            dp[i] = (bump(0.0, h)? - bump(0.0, -h)?) / (2.0 * h);
        }
        PhaseVector::new(dp, dq)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn pv(q: &[f64], p: &[f64]) -> PhaseVector {
        PhaseVector::new(q.to_vec(), p.to_vec()).unwrap()
    }

    fn catalogue() -> Vec<HamiltonianModel> {
        vec![
            HamiltonianModel::HarmonicOscillator {
                mass: 1.0,
                stiffness: 1.0,
            },
            HamiltonianModel::Pendulum {
                mass: 2.0,
                gravity: 9.81,
                length: 0.5,
            },
            HamiltonianModel::ElastoPlastic {
                mass: 1.0,
                stiffness: 1.0,
                forcing: Forcing::Sinusoid {
                    amplitude: 2.0,
                    angular_frequency: 1.0,
                    phase: 0.0,
                },
            },
            HamiltonianModel::DamagingSpring {
                mass: 1.0,
                damage_inertia: 1.0,
                stiffness: 1.0,
                forcing: Forcing::Zero,
            },
            HamiltonianModel::ContactBall {
                mass: 1.0,
                gravity: 10.0,
            },
        ]
    }

    #[test]
    fn energies_match_hand_values() {
        let ho = &catalogue()[0];
        assert_eq!(ho.energy(&pv(&[1.0], &[0.0]), 0.0).unwrap(), 0.5);
        assert_eq!(ho.energy(&pv(&[0.0], &[2.0]), 0.0).unwrap(), 2.0);

        let ball = &catalogue()[4];
        assert_eq!(ball.energy(&pv(&[10.0], &[0.0]), 0.0).unwrap(), 100.0);

        // undamaged spring stores the full elastic energy, broken one none
        let spring = &catalogue()[3];
        assert_eq!(spring.energy(&pv(&[2.0, 0.0], &[0.0, 0.0]), 0.0).unwrap(), 2.0);
        assert_eq!(spring.energy(&pv(&[2.0, 1.0], &[0.0, 0.0]), 0.0).unwrap(), 0.0);

        // plastic spring only charges the elastic stretch q - q_i
        let ep = &catalogue()[2];
        let rest = ep.energy(&pv(&[3.0, 3.0], &[0.0, 0.0]), 0.0).unwrap();
        assert_eq!(rest, 0.0);
    }

    #[test]
    fn pendulum_reduces_to_oscillator_for_small_angles() {
        let pendulum = HamiltonianModel::Pendulum {
            mass: 1.0,
            gravity: 9.81,
            length: 1.0,
        };
        // restoring torque ~ m g l q for small q
        let torque = pendulum.dh_dq(&pv(&[1e-4], &[0.0]), 0.0).unwrap()[0];
        assert!((torque - 9.81e-4).abs() <= 1e-10, "torque {torque}");
    }

    #[test]
    fn gradients_agree_with_central_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for model in catalogue() {
            let n = model.dim();
            for _ in 0..50 {
                let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let z = PhaseVector::new(q, p).unwrap();
                let t = rng.gen_range(0.0..10.0);
                let exact = model.gradient(&z, t).unwrap();
                let approx = model
                    .finite_difference_gradient(&z, t, crate::tol::FD_STEP)
                    .unwrap();
                let err = exact.sub(&approx).unwrap().norm_inf();
                let scale = 1.0f64.max(exact.norm_inf());
                assert!(
                    err / scale <= 1e-6,
                    "{}: gradient mismatch {err:.3e} at {z:?}",
                    model.name()
                );
            }
        }
    }

    #[test]
    fn flow_field_is_the_conjugate_gradient() {
        let ho = &catalogue()[0];
        let z = pv(&[1.0], &[0.5]);
        let flow = ho.flow_field(&z, 0.0).unwrap();
        // dq/dt = p/m, dp/dt = -k q
        assert_eq!(flow.q(), &[0.5]);
        assert_eq!(flow.p(), &[-1.0]);
    }

    #[test]
    fn piecewise_forcing_interpolates_and_clamps() {
        let f = Forcing::PiecewiseLinear {
            knots: vec![[0.0, 0.0], [1.0, 2.0], [3.0, -2.0]],
        };
        f.validate().unwrap();
        assert_eq!(f.value(-1.0), 0.0);
        assert_eq!(f.value(0.5), 1.0);
        assert_eq!(f.value(2.0), 0.0);
        assert_eq!(f.value(5.0), -2.0);
        let bad = Forcing::PiecewiseLinear {
            knots: vec![[1.0, 0.0], [1.0, 2.0]],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn layouts_expose_column_names() {
        assert_eq!(StateLayout::Damage.q_names(), &["q", "d"]);
        assert_eq!(StateLayout::Damage.p_names(), &["p", "r"]);
        assert_eq!(StateLayout::Internal.q_names(), &["q", "q_i"]);
        assert_eq!(StateLayout::Plain.blocks(), 1);
        let models = catalogue();
        assert_eq!(models[2].layout(), StateLayout::Internal);
        assert_eq!(models[3].layout(), StateLayout::Damage);
    }

    #[test]
    fn validation_rejects_nonpositive_parameters() {
        let bad = HamiltonianModel::HarmonicOscillator {
            mass: 0.0,
            stiffness: 1.0,
        };
        assert!(bad.validate().is_err());
        let bad = HamiltonianModel::Pendulum {
            mass: 1.0,
            gravity: -9.81,
            length: 1.0,
        };
        assert!(bad.validate().is_err());
        for model in catalogue() {
            model.validate().unwrap();
        }
    }

    #[test]
    fn serde_round_trips_the_catalogue() {
        for model in catalogue() {
            let text = serde_json::to_string(&model).unwrap();
            let back: HamiltonianModel = serde_json::from_str(&text).unwrap();
            assert_eq!(model, back);
        }
    }
}
