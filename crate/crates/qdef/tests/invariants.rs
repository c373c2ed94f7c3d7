//! Structural invariants over random admissible inputs.

use nalgebra::DMatrix;
use proptest::prelude::*;
use qdef::highdim::{orthogonality_defect, tt_backlund, GridN, Pseudosphere, TtParams};
use qdef::tangency::tc_symmetry_defect;
use qdef::{Family, Ruling, TcState};

fn families() -> impl Strategy<Value = Family> {
    prop_oneof![
        Just(Family::central(4.0, -1.0, 1.0).unwrap()),
        Just(Family::paraboloid(1.0, -1.0).unwrap()),
        (2.0..6.0f64, -3.0..-0.5f64, 0.5..1.5f64).prop_map(|(a1, a2, a3)| Family::central(a1, a2, a3).unwrap()),
    ]
}

/// Member parameter away from the reference member and the range ends.
fn member(f: &Family, t: f64) -> f64 {
    let (lo, hi) = f.z_range();
    let z = lo + (hi - lo) * (0.1 + 0.8 * t);
    if z.abs() < 0.05 {
        z + 0.1
    } else {
        z
    }
}

/// Chart point pair with the ruling parameters kept apart.
fn chart_pair() -> impl Strategy<Value = (f64, f64)> {
    (-2.0..2.0f64, 0.3..2.0f64, any::<bool>()).prop_map(|(u, gap, up)| (u, if up { u + gap } else { u - gap }))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn ivory_preserves_cross_distances(f in families(), t in 0.0..1.0f64, p in chart_pair(), q in chart_pair()) {
        let z = member(&f, t);
        let d1 = (f.point(0.0, p.0, p.1) - f.point(z, q.0, q.1)).norm();
        let d2 = (f.point(z, p.0, p.1) - f.point(0.0, q.0, q.1)).norm();
        prop_assert!((d1 - d2).abs() <= 1e-10 * d1.max(1.0));
    }

    #[test]
    fn ivory_image_lies_on_the_target_member(f in families(), t in 0.0..1.0f64, p in chart_pair()) {
        let z = member(&f, t);
        let image = f.ivory_between(0.0, z, &f.point(0.0, p.0, p.1)).unwrap();
        prop_assert!(f.relative_residual(z, &image) <= 1e-10);
        prop_assert!((image - f.point(z, p.0, p.1)).norm() <= 1e-10 * image.norm().max(1.0));
    }

    #[test]
    fn ivory_motion_is_proper_rigid(f in families(), t in 0.0..1.0f64, p in chart_pair(), q in chart_pair(), u in any::<bool>()) {
        let z = member(&f, t);
        let ruling = if u { Ruling::U } else { Ruling::V };
        if let Ok(m) = f.rmpia_between(0.0, z, p, q, ruling) {
            prop_assert!((m.determinant() - 1.0).abs() <= 1e-10);
            prop_assert!(m.orthogonality_defect() <= 1e-10);
            let target = f.point(z, p.0, p.1);
            prop_assert!((m.apply(&f.point(0.0, p.0, p.1)) - target).norm() <= 1e-9 * target.norm().max(1.0));
        }
    }

    #[test]
    fn tangency_is_symmetric(f in families(), t in 0.0..1.0f64, p in chart_pair(), v1 in -2.0..2.0f64) {
        let z = member(&f, t);
        if let Ok(s) = TcState::solve(&f, z, p, v1) {
            prop_assume!((s.u1 - s.v1).abs() >= 0.3 && s.u1.abs() <= 20.0);
            let p1 = (s.u1, s.v1);
            let x00 = f.point(0.0, p.0, p.1);
            let scale = (f.point(z, p1.0, p1.1) - x00).norm() * f.normal_hat_unchecked(0.0, &x00).norm();
            prop_assert!(tc_symmetry_defect(&f, z, p, p1).abs() <= 1e-10 * scale.max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn leaves_stay_orthogonal(sigma in 0.7..2.0f64, angle in 0.2..1.0f64) {
        let source = Pseudosphere::new(&[1.0]).unwrap();
        let grid = GridN::cube(&[0.7, 0.0], 0.3, 32);
        let params = TtParams::new(2, sigma).unwrap();
        let init = DMatrix::from_row_slice(2, 2, &[angle.cos(), angle.sin(), -angle.sin(), angle.cos()]);
        let leaf = tt_backlund(&source, &grid, &params, &init).unwrap();
        let drift = leaf.orthogonality_drift();
        prop_assert!(drift <= 1e-8, "drift {drift:e}");
        prop_assert!(orthogonality_defect(&init) <= 1e-14);
    }
}
