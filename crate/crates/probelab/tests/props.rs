//! Property tests over randomized geometry and coefficient inputs.

use probelab::expr::Expr;
use probelab::geometry::{impact_parameter_oracle, Needle, Point};
use probelab::scenario::InclusionShape;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn impact_parameter_monotone_under_growth(
        cx in -0.4f64..0.4,
        cy in -0.4f64..0.4,
        r1 in 0.05f64..0.25,
        grow in 0.01f64..0.2,
        theta in 0.0f64..std::f64::consts::TAU,
    ) {
        let r2 = r1 + grow;
        prop_assume!((cx * cx + cy * cy).sqrt() + r2 < 0.95);
        let a = Point::new(theta.cos(), theta.sin());
        let b = Point::new(-theta.cos(), -theta.sin());
        let needle = Needle::new(vec![a, b]).unwrap();
        let small = InclusionShape::disk(cx, cy, r1);
        let big = InclusionShape::disk(cx, cy, r2);
        let t_small = impact_parameter_oracle(&needle, Some(&small));
        let t_big = impact_parameter_oracle(&needle, Some(&big));
        prop_assert!(t_small >= t_big - 1e-12);
    }

    #[test]
    fn impact_parameter_stable_under_polyline_refinement(
        cx in -0.3f64..0.3,
        cy in -0.3f64..0.3,
        r in 0.08f64..0.3,
        wx in -0.4f64..0.4,
        wy in -0.4f64..0.4,
    ) {
        prop_assume!((cx * cx + cy * cy).sqrt() + r < 0.9);
        prop_assume!((wx * wx + wy * wy).sqrt() < 0.85);
        let needle = Needle::new(vec![
            Point::new(-1.0, 0.0),
            Point::new(wx, wy),
            Point::new(0.8, 0.6),
        ]);
        let Ok(needle) = needle else { return Ok(()); };
        let shape = InclusionShape::disk(cx, cy, r);
        let t0 = impact_parameter_oracle(&needle, Some(&shape));
        let t1 = impact_parameter_oracle(&needle.refined(), Some(&shape));
        prop_assert!((t0 - t1).abs() < 1e-9, "{} vs {}", t0, t1);
    }

    #[test]
    fn expression_roundtrip_evaluates_identically(
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
        c in 0.1f64..3.0,
        x in -1.0f64..1.0,
        y in -1.0f64..1.0,
    ) {
        let src = format!("{a} + {b}*x*y + exp(x/{c}) - sqrt(y*y + {c})");
        let e1 = Expr::parse(&src).unwrap();
        let e2 = Expr::parse(&e1.pretty()).unwrap();
        let v1 = e1.eval(x, y).unwrap();
        let v2 = e2.eval(x, y).unwrap();
        prop_assert!((v1 - v2).abs() <= 1e-14 * v1.abs().max(1.0));
    }

    #[test]
    fn signed_distance_sign_matches_containment(
        cx in -0.3f64..0.3,
        cy in -0.3f64..0.3,
        r in 0.1f64..0.4,
        px in -1.0f64..1.0,
        py in -1.0f64..1.0,
    ) {
        let shape = InclusionShape::disk(cx, cy, r);
        let p = Point::new(px, py);
        let sd = shape.signed_distance(p);
        let inside = ((px - cx).powi(2) + (py - cy).powi(2)).sqrt() < r;
        if sd < -1e-12 {
            prop_assert!(inside);
        } else if sd > 1e-12 {
            prop_assert!(!inside);
        }
    }
}
