use nalgebra::{Matrix3, Vector3, Vector4};
use proptest::prelude::*;
use slewplan_core::quat::*;

fn unit_quat() -> impl Strategy<Value = UnitQuaternion> {
    prop::array::uniform4(-1.0f64..1.0)
        .prop_filter("away from zero", |v| Vector4::from(*v).norm() > 0.1)
        .prop_map(|v| UnitQuaternion::from_vec4(Vector4::from(v).normalize()).unwrap())
}

fn axis() -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-1.0f64..1.0)
        .prop_filter("away from zero", |v| Vector3::from(*v).norm() > 0.1)
        .prop_map(|v| Vector3::from(v).normalize())
}

/// Rodrigues' formula.
fn rodrigues(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let k = cross_matrix(axis);
    Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn conjugate_product_is_identity(q in unit_quat()) {
        let e = q.conj().mul(&q);
        prop_assert!((e.as_vec4() - Vector4::new(0.0, 0.0, 0.0, 1.0)).amax() < 1e-12);
    }

    #[test]
    fn error_quaternion_recomposes(q in unit_quat(), qd in unit_quat()) {
        let e = error_quaternion(&q, &qd);
        let back = qd.mul(&e);
        prop_assert!((back.as_vec4() - q.as_vec4()).amax() < 1e-12);
    }

    #[test]
    fn error_matrix_is_exactly_the_conjugate_product(q in prop::array::uniform4(-2.0f64..2.0), qd in unit_quat()) {
        let q = Vector4::from(q);
        let affine = error_matrix(&qd) * q;
        let product = hamilton(&qd.conj().as_vec4(), &q);
        prop_assert!((affine - product).amax() < 1e-14);
    }

    #[test]
    fn slerp_stays_on_the_sphere(q0 in unit_quat(), q1 in unit_quat(), t in 0.0f64..=1.0) {
        prop_assert!((slerp(&q0, &q1, t).as_vec4().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn axis_angle_round_trip_preserves_rotation(a in axis(), angle in 0.0f64..std::f64::consts::PI) {
        let q = AxisAngle::new(a, angle).unwrap().to_quaternion();
        let back = AxisAngle::from_quaternion(&q).to_quaternion();
        let diff = q.to_rotation_matrix() - back.to_rotation_matrix();
        prop_assert!(diff.norm() < 1e-9);
        prop_assert!((q.to_rotation_matrix() - rodrigues(&a, angle)).norm() < 1e-12);
    }

    #[test]
    fn rotation_matrix_round_trip_up_to_sign(q in unit_quat()) {
        let back = UnitQuaternion::from_rotation_matrix(&q.to_rotation_matrix());
        let d = (back.as_vec4() - q.as_vec4()).amax().min((back.as_vec4() + q.as_vec4()).amax());
        prop_assert!(d < 1e-12);
    }

    #[test]
    fn angle_is_symmetric_and_sign_blind(q0 in unit_quat(), q1 in unit_quat()) {
        let a = q0.angle_to(&q1);
        prop_assert!((0.0..=std::f64::consts::PI + 1e-12).contains(&a));
        prop_assert!((a - q1.angle_to(&q0)).abs() < 1e-9);
        prop_assert!((a - q0.angle_to(&q1.neg())).abs() < 1e-9);
    }
}

#[test]
fn hundred_axes_are_spread_out() {
    let axes = equidistributed_axes(100);
    assert_eq!(axes.len(), 100);
    let mut min_sep = f64::INFINITY;
    for i in 0..axes.len() {
        assert!((axes[i].norm() - 1.0).abs() < 1e-12);
        for j in 0..i {
            min_sep = min_sep.min(axes[i].angle(&axes[j]));
        }
    }
    assert!(min_sep.to_degrees() >= 15.0, "min separation {}", min_sep.to_degrees());
    assert_eq!(equidistributed_axes(100), axes);
}
