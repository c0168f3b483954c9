//! Randomized invariants for the convex layer and the phase-space
//! pairings.

use proptest::prelude::*;

use gapdyn::{dual_pairing, symplectic_form, ConvexSpec, PhaseVector};

const MEMBERSHIP_SLACK: f64 = 1e-8;
const GAP_SLACK: f64 = 1e-9;

fn line_spec() -> impl Strategy<Value = ConvexSpec> {
    prop_oneof![
        (0.1f64..4.0, -2.0f64..2.0).prop_map(|(a, c)| ConvexSpec::Quadratic {
            a,
            center: vec![c],
        }),
        (-3.0f64..3.0).prop_map(|s| ConvexSpec::Linear { slope: vec![s] }),
        (-2.0f64..2.0).prop_map(|x| ConvexSpec::IndicatorPoint { point: vec![x] }),
        (-3.0f64..0.0, 0.0f64..3.0).prop_map(|(lo, hi)| ConvexSpec::IndicatorBox {
            lo: vec![lo],
            hi: vec![hi],
        }),
        (0.1f64..3.0).prop_map(|r| ConvexSpec::SupportBox { radius: r }),
    ]
}

proptest! {
    /// The conjugate inequality holds for every sampled pair, whether or
    /// not the points are related.
    #[test]
    fn conjugate_inequality_never_goes_negative(
        spec in line_spec(),
        x in -4.0f64..4.0,
        y in -4.0f64..4.0,
    ) {
        let gap = spec.fenchel_gap(&[x], &[y]).unwrap();
        if gap.is_finite() {
            prop_assert!(
                gap.value() >= -GAP_SLACK,
                "gap {} below zero for {:?} at x = {}, y = {}",
                gap.value(), spec, x, y
            );
        }
    }

    /// The polar of the polar gives the original values back.
    #[test]
    fn double_polar_preserves_values(spec in line_spec(), x in -4.0f64..4.0) {
        let back = spec.polar().unwrap().polar().unwrap();
        let a = spec.eval(&[x]).unwrap();
        let b = back.eval(&[x]).unwrap();
        prop_assert_eq!(
            a.is_finite(), b.is_finite(),
            "finiteness changed under double polar of {:?} at {}", &spec, x
        );
        if a.is_finite() {
            prop_assert!(
                (a.value() - b.value()).abs() <= GAP_SLACK * (1.0 + a.value().abs()),
                "double polar of {:?} moved {} to {}", &spec, a.value(), b.value()
            );
        }
    }

    /// The proximal point is optimal: the displacement it leaves behind,
    /// scaled back by the step, is a subgradient at the result.
    #[test]
    fn prox_residual_is_a_subgradient(
        spec in line_spec(),
        x0 in -4.0f64..4.0,
        lambda in 0.05f64..5.0,
    ) {
        let p = spec.prox(&[x0], lambda).unwrap();
        let residual = (x0 - p[0]) / lambda;
        prop_assert!(
            spec.subgradient_contains(&p, &[residual], MEMBERSHIP_SLACK).unwrap(),
            "prox residual {} not a subgradient of {:?} at {}",
            residual, spec, p[0]
        );
        // and the prox objective at p does not exceed the objective at x0
        let value = |x: f64| spec.eval(&[x]).unwrap();
        let objective = |x: f64| {
            value(x).scale(1.0) + gapdyn::ExtReal::from((x - x0).powi(2) / (2.0 * lambda))
        };
        let at_p = objective(p[0]);
        let at_start = objective(x0);
        if at_start.is_finite() {
            prop_assert!(
                at_p.is_finite() && at_p.value() <= at_start.value() + GAP_SLACK,
                "prox point {:?} worse than the start for {:?}", at_p, spec
            );
        }
    }

    /// The duality pairing is symmetric and the symplectic form is its
    /// antisymmetric sibling under conjugation.
    #[test]
    fn pairing_and_form_are_linked_by_conjugation(
        q1 in prop::collection::vec(-5.0f64..5.0, 1..4),
        p1 in prop::collection::vec(-5.0f64..5.0, 1..4),
        q2 in prop::collection::vec(-5.0f64..5.0, 1..4),
        p2 in prop::collection::vec(-5.0f64..5.0, 1..4),
    ) {
        let n = q1.len().min(p1.len()).min(q2.len()).min(p2.len());
        let z1 = PhaseVector::new(q1[..n].to_vec(), p1[..n].to_vec()).unwrap();
        let z2 = PhaseVector::new(q2[..n].to_vec(), p2[..n].to_vec()).unwrap();
        let ab = dual_pairing(&z1, &z2).unwrap();
        let ba = dual_pairing(&z2, &z1).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab.abs()),
            "pairing asymmetric: {} vs {}", ab, ba);
        let form = symplectic_form(&z1, &z2).unwrap();
        let via_conjugate = dual_pairing(&z1.conjugate(), &z2).unwrap();
        prop_assert!((form - via_conjugate).abs() <= 1e-12 * (1.0 + form.abs()),
            "form {} differs from conjugated pairing {}", form, via_conjugate);
    }

    /// Prox with a vanishingly small step stays near the starting point
    /// whenever the start is in the domain.
    #[test]
    fn prox_with_tiny_step_barely_moves_interior_points(
        spec in line_spec(),
        x0 in -4.0f64..4.0,
    ) {
        if spec.eval(&[x0]).unwrap().is_finite() {
            let p = spec.prox(&[x0], 1e-9).unwrap();
            prop_assert!(
                (p[0] - x0).abs() <= 1e-6,
                "prox of {:?} jumped from {} to {} despite a 1e-9 step",
                spec, x0, p[0]
            );
        }
    }
}
