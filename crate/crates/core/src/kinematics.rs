//! Fixed-size algebra and rotation helpers.

use nalgebra::{Matrix3, Quaternion, SMatrix, SVector, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Vec6 = SVector<f64, 6>;
pub type Mat6 = SMatrix<f64, 6, 6>;
pub type Vec12 = SVector<f64, 12>;
pub type Mat12 = SMatrix<f64, 12, 12>;
pub type UnitQuat = UnitQuaternion<f64>;

/// Default asymmetry tolerance accepted by [`vec`].
pub const SKEW_TOL: f64 = 1e-10;

pub fn e1() -> Vec3 {
    Vec3::x()
}

/// Skew matrix with `hat(u) * w == u.cross(w)`.
pub fn hat(u: &Vec3) -> Mat3 {
    Mat3::new(0.0, -u.z, u.y, u.z, 0.0, -u.x, -u.y, u.x, 0.0)
}

/// Inverse of [`hat`]; nearly skew input is projected onto its skew part.
pub fn vec(m: &Mat3) -> Result<Vec3> {
    vec_tol(m, SKEW_TOL)
}

pub fn vec_tol(m: &Mat3, tol: f64) -> Result<Vec3> {
    let asymmetry = (m + m.transpose()).norm();
    if asymmetry > tol {
        return Err(Error::NotSkew { asymmetry });
    }
    Ok(skew_vec(m))
}

/// vec of the skew part, without any check.
pub fn skew_vec(m: &Mat3) -> Vec3 {
    0.5 * Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)])
}

pub fn quat_to_rot(q: &UnitQuat) -> Mat3 {
    q.to_rotation_matrix().into_inner()
}

pub fn rot_to_quat(r: &Mat3) -> UnitQuat {
    UnitQuaternion::from_matrix(r)
}

/// Unit quaternion from (w, x, y, z), normalized.
pub fn quat(w: f64, x: f64, y: f64, z: f64) -> UnitQuat {
    UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z))
}

/// One step of `dq/dt = q * (0, omega/2)`; `omega` is the body angular velocity
/// over the step (use the midpoint value for second order).
pub fn quat_step(q: &UnitQuat, omega: &Vec3, dt: f64) -> UnitQuat {
    let inc = UnitQuaternion::from_scaled_axis(omega * dt);
    UnitQuaternion::new_normalize(q.into_inner() * inc.into_inner())
}

/// One step of `dR/dt = R hat(omega)` through the quaternion exponential.
pub fn rot_step(r: &Mat3, omega: &Vec3, dt: f64) -> Mat3 {
    quat_to_rot(&quat_step(&rot_to_quat(r), omega, dt))
}

pub fn exp_so3(omega: &Vec3) -> Mat3 {
    quat_to_rot(&UnitQuaternion::from_scaled_axis(*omega))
}

/// Rotation vector of `r` (inverse of [`exp_so3`] for angles below pi).
pub fn log_so3(r: &Mat3) -> Vec3 {
    rot_to_quat(r).scaled_axis()
}

pub fn is_rotation(m: &Mat3, tol: f64) -> bool {
    (m.transpose() * m - Mat3::identity()).norm() <= tol && m.determinant() > 0.0
}

/// Frobenius distance of `m` from orthonormality.
pub fn orthonormality_drift(m: &Mat3) -> f64 {
    (m.transpose() * m - Mat3::identity()).norm()
}

/// `diag(r, r)`.
pub fn rbar(r: &Mat3) -> Mat6 {
    let mut out = Mat6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(r);
    out
}

pub fn block_diag6(a: &Mat6, b: &Mat6) -> Mat12 {
    let mut out = Mat12::zeros();
    out.fixed_view_mut::<6, 6>(0, 0).copy_from(a);
    out.fixed_view_mut::<6, 6>(6, 6).copy_from(b);
    out
}

pub fn blocks6(a: &Mat6, b: &Mat6, c: &Mat6, d: &Mat6) -> Mat12 {
    let mut out = Mat12::zeros();
    out.fixed_view_mut::<6, 6>(0, 0).copy_from(a);
    out.fixed_view_mut::<6, 6>(0, 6).copy_from(b);
    out.fixed_view_mut::<6, 6>(6, 0).copy_from(c);
    out.fixed_view_mut::<6, 6>(6, 6).copy_from(d);
    out
}

pub fn stack6(a: &Vec6, b: &Vec6) -> Vec12 {
    let mut out = Vec12::zeros();
    out.fixed_rows_mut::<6>(0).copy_from(a);
    out.fixed_rows_mut::<6>(6).copy_from(b);
    out
}

pub fn stack3(a: &Vec3, b: &Vec3) -> Vec6 {
    let mut out = Vec6::zeros();
    out.fixed_rows_mut::<3>(0).copy_from(a);
    out.fixed_rows_mut::<3>(3).copy_from(b);
    out
}

pub fn top6(y: &Vec12) -> Vec6 {
    y.fixed_rows::<6>(0).into_owned()
}

pub fn bottom6(y: &Vec12) -> Vec6 {
    y.fixed_rows::<6>(6).into_owned()
}

pub fn part3(y: &Vec12, k: usize) -> Vec3 {
    y.fixed_rows::<3>(3 * k).into_owned()
}

pub fn head3(y: &Vec6) -> Vec3 {
    y.fixed_rows::<3>(0).into_owned()
}

pub fn tail3(y: &Vec6) -> Vec3 {
    y.fixed_rows::<3>(3).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn hat_is_cross_product() {
        assert_eq!(hat(&Vec3::x()) * Vec3::y(), Vec3::z());
        assert_eq!(hat(&Vec3::zeros()), Mat3::zeros());
        let u = Vec3::new(2.0, -1.0, 3.0);
        assert_eq!(hat(&u) * u, Vec3::zeros());
    }

    #[test]
    fn vec_inverts_hat_and_rejects_symmetric() {
        let u = Vec3::new(4.0, 5.0, 6.0);
        assert_eq!(vec(&hat(&u)).unwrap(), u);
        assert_eq!(vec(&Mat3::zeros()).unwrap(), Vec3::zeros());
        assert!(matches!(vec(&Mat3::identity()), Err(Error::NotSkew { .. })));
        let mut noisy = hat(&u);
        noisy[(0, 1)] += 1e-12;
        let got = vec(&noisy).unwrap();
        assert!((got - u).norm() < 1e-12);
    }

    #[test]
    fn quaternion_examples() {
        assert_eq!(quat_to_rot(&quat(1.0, 0.0, 0.0, 0.0)), Mat3::identity());
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let r = quat_to_rot(&quat(h, 0.0, 0.0, h));
        assert!((r * Vec3::x() - Vec3::y()).norm() < 1e-15);
    }

    #[test]
    fn rot_step_integrates_constant_rate() {
        assert_eq!(rot_step(&Mat3::identity(), &Vec3::zeros(), 0.1), Mat3::identity());
        let omega = Vec3::z();
        let dt = 1e-4;
        let n = (FRAC_PI_2 / dt).round() as usize;
        let dt = FRAC_PI_2 / n as f64;
        let mut r = Mat3::identity();
        for _ in 0..n {
            r = rot_step(&r, &omega, dt);
        }
        // closed form: exp(pi/2 hat(e3)) maps e1 -> e2, e2 -> -e1
        let expected = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((r - expected).norm() < 1e-6);
        assert!(orthonormality_drift(&r) < 1e-12);
    }

    #[test]
    fn is_rotation_examples() {
        assert!(is_rotation(&Mat3::identity(), 1e-12));
        assert!(!is_rotation(&Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0)), 1.0));
    }

    proptest! {
        #[test]
        fn hat_anticommutes(a in prop::array::uniform3(-10.0..10.0f64), b in prop::array::uniform3(-10.0..10.0f64)) {
            let (u, v) = (Vec3::from(a), Vec3::from(b));
            prop_assert!((hat(&u) * v + hat(&v) * u).norm() < 1e-12);
            prop_assert_eq!(vec(&hat(&u)).unwrap(), u);
        }

        #[test]
        fn quaternions_give_rotations(q in prop::array::uniform4(-1.0..1.0f64)) {
            prop_assume!(q.iter().map(|c| c * c).sum::<f64>() > 1e-3);
            let r = quat_to_rot(&quat(q[0], q[1], q[2], q[3]));
            prop_assert!(is_rotation(&r, 1e-10));
        }

        #[test]
        fn rot_step_group_property(w in prop::array::uniform3(-3.0..3.0f64), dt in 1e-3..0.1f64) {
            let omega = Vec3::from(w);
            let r0 = exp_so3(&Vec3::new(0.3, -0.2, 0.5));
            let two = rot_step(&rot_step(&r0, &omega, dt), &omega, dt);
            let one = rot_step(&r0, &omega, 2.0 * dt);
            prop_assert!((two - one).norm() < 10.0 * dt.powi(3));
        }

        #[test]
        fn rot_step_stays_orthonormal(w in prop::array::uniform3(-5.0..5.0f64)) {
            let omega = Vec3::from(w);
            let mut r = Mat3::identity();
            for _ in 0..500 {
                r = rot_step(&r, &omega, 0.01);
                prop_assert!(orthonormality_drift(&r) < 1e-12);
            }
        }
    }
}
