use std::f64::consts::{FRAC_PI_2, PI};

use boxvis::geometry::{
    bounding_cap, caps_disjoint, clip, intersect, solid_angle, subtract_with_overlap, Dims,
    GreatCircleHalfSpace, ObjectBox, ObjectClass, SphericalPolygon, Vec3,
};
use boxvis::oracle::{estimate_solid_angle, OracleConfig};
use proptest::prelude::*;

/// Closed-form solid angle of an `a × b` rectangle seen on-axis at distance `d`.
fn rectangle_omega(a: f64, b: f64, d: f64) -> f64 {
    4.0 * (a * b / (2.0 * d * (4.0 * d * d + a * a + b * b).sqrt())).atan()
}

fn arb_box() -> impl Strategy<Value = ObjectBox> {
    (
        3.0..40.0f64,
        -PI..PI,
        -2.5..2.5f64,
        (0.3..6.0f64, 0.3..3.0f64, 0.3..3.5f64),
        -PI..PI,
    )
        .prop_map(|(r, az, z, (l, w, h), yaw)| {
            let c = Vec3::new(r * az.cos(), r * az.sin(), z);
            ObjectBox::new(0, ObjectClass::Car, c, Dims::new(l, w, h), yaw).unwrap()
        })
        .prop_filter("origin clear of the box", |b| b.origin_clearance() > 0.5)
}

fn arb_unit() -> impl Strategy<Value = Vec3> {
    (-1.0..1.0f64, -PI..PI).prop_map(|(z, phi)| {
        let s = (1.0 - z * z).sqrt();
        Vec3::new(s * phi.cos(), s * phi.sin(), z)
    })
}

fn area_of(p: &Option<SphericalPolygon>) -> f64 {
    p.as_ref().map_or(0.0, SphericalPolygon::area)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn clip_splits_area(b in arb_box(), n in arb_unit()) {
        let poly = b.silhouette().unwrap();
        let hs = GreatCircleHalfSpace::new(n).unwrap();
        let total = area_of(&clip(&poly, &hs)) + area_of(&clip(&poly, &hs.flipped()));
        // pieces below the minimum area are dropped, hence the small slack
        prop_assert!((total - poly.area()).abs() < 1e-9, "{total} vs {}", poly.area());
    }

    #[test]
    fn intersection_no_larger_than_inputs(a in arb_box(), b in arb_box()) {
        let (pa, pb) = (a.silhouette().unwrap(), b.silhouette().unwrap());
        let i = area_of(&intersect(&pa, &pb));
        prop_assert!(i <= pa.area().min(pb.area()) + 1e-12);
        let j = area_of(&intersect(&pb, &pa));
        prop_assert!((i - j).abs() < 1e-9);
    }

    #[test]
    fn disjoint_caps_mean_empty_intersection(a in arb_box(), b in arb_box()) {
        let (pa, pb) = (a.silhouette().unwrap(), b.silhouette().unwrap());
        if caps_disjoint(&bounding_cap(&pa), &bounding_cap(&pb)) {
            prop_assert!(intersect(&pa, &pb).is_none());
        }
    }

    #[test]
    fn subtraction_conserves_area(a in arb_box(), b in arb_box()) {
        let (pa, pb) = (a.silhouette().unwrap(), b.silhouette().unwrap());
        let s = subtract_with_overlap(std::slice::from_ref(&pa), &pb);
        let kept: f64 = s.remaining.iter().map(SphericalPolygon::area).sum();
        prop_assert!((kept + s.removed_area - pa.area()).abs() < 1e-9);
        prop_assert!((s.removed_area - area_of(&intersect(&pa, &pb))).abs() < 1e-9);
    }

    #[test]
    fn solid_angle_invariant_under_yaw_rotation_and_scaling(
        b in arb_box(), angle in -PI..PI, scale in 0.1..10.0f64,
    ) {
        let w = b.silhouette().unwrap().area();
        let r = b.rotated_z(angle).silhouette().unwrap().area();
        let s = b.scaled(scale).silhouette().unwrap().area();
        prop_assert!((w - r).abs() <= 1e-9 * w.max(1e-3));
        prop_assert!((w - s).abs() <= 1e-9 * w.max(1e-3));
    }

    #[test]
    fn silhouette_below_hemisphere(b in arb_box()) {
        let w = solid_angle(&b.silhouette().unwrap()).unwrap();
        prop_assert!(w > 0.0 && w < 2.0 * PI);
    }

    #[test]
    fn on_axis_rectangle_matches_closed_form(
        a in 0.05..20.0f64, bw in 0.05..20.0f64, d in 0.2..100.0f64,
    ) {
        let (ha, hb) = (a / 2.0, bw / 2.0);
        let poly = SphericalPolygon::new(vec![
            Vec3::new(d, -ha, -hb),
            Vec3::new(d, ha, -hb),
            Vec3::new(d, ha, hb),
            Vec3::new(d, -ha, hb),
        ]).unwrap();
        let expected = rectangle_omega(a, bw, d);
        prop_assert!((poly.area() - expected).abs() <= 1e-9 * expected);
    }
}

#[test]
fn octant_is_quarter_hemisphere() {
    let p = SphericalPolygon::new(vec![Vec3::X, Vec3::Y, Vec3::Z]).unwrap();
    assert!((p.area() - FRAC_PI_2).abs() <= 1e-12);
}

#[test]
fn box_solid_angle_agrees_with_ray_sampling() {
    let boxes = [
        (Vec3::new(6.0, 1.0, -0.5), Dims::new(4.0, 1.8, 1.5), 0.3),
        (Vec3::new(-3.0, 4.0, 0.0), Dims::new(1.0, 1.0, 1.0), 1.1),
        (Vec3::new(20.0, -8.0, -1.0), Dims::new(0.6, 0.6, 1.8), -2.0),
        (Vec3::new(2.0, 0.0, 0.0), Dims::new(1.0, 6.0, 3.0), 0.0),
    ];
    for (k, (c, d, yaw)) in boxes.into_iter().enumerate() {
        let b = ObjectBox::new(k as u64, ObjectClass::Other, c, d, yaw).unwrap();
        let exact = b.silhouette().unwrap().area();
        let est = estimate_solid_angle(
            &b,
            OracleConfig {
                sample_count: 400_000,
                seed: 5,
            },
        )
        .unwrap();
        let z = (est.mean - exact).abs() / est.std_error;
        assert!(
            z < 4.5,
            "box {k}: exact {exact} estimate {} (z = {z})",
            est.mean
        );
    }
}
