//! Attitude algebra: skew-symmetric operator, quaternion attitude matrix and
//! the quaternion kinematics matrix.
//!
//! Quaternions are stored vector part first, scalar last: `q = [q1 q2 q3 q4]`.
//! The attitude matrix `A(q)` maps inertial-frame vectors into the body frame.

use nalgebra::{Matrix3, Matrix4x3, Vector3, Vector4};

use crate::error::AttitudeError;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Mat4x3 = Matrix4x3<f64>;

/// Tolerance used when validating that an input quaternion has unit norm.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Returns `a^×`, the matrix with `skew(a) * b == a.cross(b)`.
pub fn skew(a: &Vec3) -> Mat3 {
    Mat3::new(
        0.0, -a.z, a.y, //
        a.z, 0.0, -a.x, //
        -a.y, a.x, 0.0,
    )
}

/// Attitude quaternion, vector part first and scalar part last.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    coords: Vector4<f64>,
}

impl Quaternion {
    /// The target attitude `q̄ = (0, 0, 0, 1)`.
    pub const IDENTITY: Quaternion = Quaternion {
        coords: Vector4::new(0.0, 0.0, 0.0, 1.0),
    };

    /// Builds a quaternion from raw components without normalizing.
    pub fn new(q1: f64, q2: f64, q3: f64, q4: f64) -> Self {
        Self {
            coords: Vector4::new(q1, q2, q3, q4),
        }
    }

    pub fn from_parts(vector: Vec3, scalar: f64) -> Self {
        Self::new(vector.x, vector.y, vector.z, scalar)
    }

    pub fn from_vector4(coords: Vector4<f64>) -> Self {
        Self { coords }
    }

    /// Builds a unit quaternion, rejecting inputs that are zero or non-finite.
    pub fn normalized(q1: f64, q2: f64, q3: f64, q4: f64) -> Result<Self, AttitudeError> {
        let mut q = Self::new(q1, q2, q3, q4);
        q.renormalize()?;
        Ok(q)
    }

    /// Vector part `q_v`.
    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.coords.x, self.coords.y, self.coords.z)
    }

    /// Scalar part `q_4`.
    pub fn scalar(&self) -> f64 {
        self.coords.w
    }

    pub fn as_vector4(&self) -> &Vector4<f64> {
        &self.coords
    }

    pub fn norm(&self) -> f64 {
        self.coords.norm()
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c.is_finite())
    }

    /// Rescales in place to unit norm and returns the norm before rescaling.
    pub fn renormalize(&mut self) -> Result<f64, AttitudeError> {
        let norm = self.coords.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(AttitudeError::Degenerate(norm));
        }
        self.coords /= norm;
        Ok(norm)
    }

    pub fn check_unit(&self) -> Result<(), AttitudeError> {
        let norm = self.norm();
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE || !norm.is_finite() {
            return Err(AttitudeError::NotUnit(norm));
        }
        Ok(())
    }
}

impl std::ops::Neg for Quaternion {
    type Output = Quaternion;

    fn neg(self) -> Quaternion {
        Quaternion {
            coords: -self.coords,
        }
    }
}

/// `A(q) = (q4² − q_vᵀq_v) I + 2 q_v q_vᵀ − 2 q4 q_v^×`.
pub fn attitude_matrix(q: &Quaternion) -> Result<Mat3, AttitudeError> {
    q.check_unit()?;
    Ok(attitude_matrix_unchecked(q))
}

/// Same as [`attitude_matrix`] but skips the unit-norm check. Used on the
/// integrator's hot path where the state is renormalized every step.
pub(crate) fn attitude_matrix_unchecked(q: &Quaternion) -> Mat3 {
    let qv = q.vector();
    let q4 = q.scalar();
    Mat3::identity() * (q4 * q4 - qv.dot(&qv)) + qv * qv.transpose() * 2.0 - skew(&qv) * (2.0 * q4)
}

/// `W(q) = ½ [q4 I + q_v^× ; −q_vᵀ]`, so that `q̇ = W(q) ω`.
pub fn kinematics_matrix(q: &Quaternion) -> Result<Mat4x3, AttitudeError> {
    q.check_unit()?;
    Ok(kinematics_matrix_unchecked(q))
}

pub(crate) fn kinematics_matrix_unchecked(q: &Quaternion) -> Mat4x3 {
    let qv = q.vector();
    let top = Mat3::identity() * q.scalar() + skew(&qv);
    let mut w = Mat4x3::zeros();
    w.fixed_view_mut::<3, 3>(0, 0).copy_from(&top);
    w.fixed_view_mut::<1, 3>(3, 0).copy_from(&(-qv.transpose()));
    w * 0.5
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;

    fn unit_quat() -> impl Strategy<Value = Quaternion> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("non-degenerate", |(a, b, c, d)| a * a + b * b + c * c + d * d > 1e-3)
            .prop_map(|(a, b, c, d)| Quaternion::normalized(a, b, c, d).unwrap())
    }

    fn vec3() -> impl Strategy<Value = Vec3> {
        (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    #[test]
    fn skew_of_x_times_y_is_z() {
        let r = skew(&Vec3::x()) * Vec3::y();
        assert_eq!(r, Vec3::z());
        assert_eq!(skew(&Vec3::zeros()), Mat3::zeros());
    }

    #[test]
    fn skew_matches_cross_on_basis() {
        let basis = [Vec3::x(), Vec3::y(), Vec3::z()];
        for a in &basis {
            for b in &basis {
                assert_eq!(skew(a) * b, a.cross(b));
            }
        }
    }

    #[test]
    fn identity_quaternion_gives_identity_matrix() {
        let a = attitude_matrix(&Quaternion::IDENTITY).unwrap();
        assert_eq!(a, Mat3::identity());
    }

    #[test]
    fn half_turn_about_x() {
        let a = attitude_matrix(&Quaternion::new(1.0, 0.0, 0.0, 0.0)).unwrap();
        assert_eq!(a, Mat3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0)));
    }

    #[test]
    fn rejects_non_unit_quaternion() {
        let q = Quaternion::new(0.0, 0.0, 0.0, 1.01);
        assert!(matches!(attitude_matrix(&q), Err(AttitudeError::NotUnit(_))));
        assert!(kinematics_matrix(&q).is_err());
        // within the 1e-6 validation tolerance
        let q = Quaternion::new(0.0, 0.0, 0.0, 1.0 + 5e-7);
        assert!(attitude_matrix(&q).is_ok());
    }

    #[test]
    fn renormalize_rejects_zero() {
        assert!(Quaternion::normalized(0.0, 0.0, 0.0, 0.0).is_err());
        assert!(Quaternion::normalized(f64::NAN, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn kinematics_at_identity_halves_rate() {
        let w = kinematics_matrix(&Quaternion::IDENTITY).unwrap();
        let omega = Vec3::new(0.3, -0.2, 0.7);
        let qdot = w * omega;
        assert_eq!(qdot, Vector4::new(0.15, -0.1, 0.35, 0.0));
    }

    proptest! {
        #[test]
        fn skew_is_cross_product(a in vec3(), b in vec3()) {
            let lhs = skew(&a) * b;
            let rhs = a.cross(&b);
            prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
            prop_assert_eq!(skew(&a) + skew(&a).transpose(), Mat3::zeros());
        }

        #[test]
        fn attitude_matrix_is_rotation(q in unit_quat()) {
            let a = attitude_matrix(&q).unwrap();
            prop_assert!((a * a.transpose() - Mat3::identity()).norm() < 1e-12);
            prop_assert!((a.determinant() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn attitude_matrix_double_cover(q in unit_quat()) {
            let a = attitude_matrix(&q).unwrap();
            let b = attitude_matrix(&-q).unwrap();
            prop_assert!((a - b).norm() < 1e-15);
        }

        #[test]
        fn kinematics_gram_is_quarter_identity(q in unit_quat()) {
            let w = kinematics_matrix(&q).unwrap();
            let gram = w.transpose() * w;
            prop_assert!((gram - Mat3::identity() * 0.25).norm() < 1e-12);
        }

        #[test]
        fn kinematics_preserve_norm(q in unit_quat(), omega in vec3()) {
            let qdot = kinematics_matrix(&q).unwrap() * omega;
            let radial = q.as_vector4().dot(&qdot);
            prop_assert!(radial.abs() < 1e-12 * (1.0 + omega.norm()));
        }
    }

    #[test]
    fn quarter_turn_about_z_maps_inertial_x_to_body_minus_y() {
        // A(q) for a rotation of +90° about z (frame rotation) maps inertial x to body −y.
        let half = std::f64::consts::FRAC_PI_4;
        let q = Quaternion::new(0.0, 0.0, half.sin(), half.cos());
        let a = attitude_matrix(&q).unwrap();
        let bx = a * Vec3::x();
        assert_relative_eq!(bx, Vec3::new(0.0, -1.0, 0.0), epsilon = 1e-15);
    }
}
