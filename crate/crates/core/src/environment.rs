//! Circular-orbit propagation and the tilted-dipole geomagnetic field.

use std::f64::consts::PI;

use crate::attmath::{attitude_matrix_unchecked, Quaternion, Vec3};
use crate::error::ModelError;

/// Earth mean radius (m).
pub const EARTH_RADIUS: f64 = 6_371_000.0;
/// Earth gravitational parameter (m³/s²).
pub const EARTH_MU: f64 = 3.986_004_418e14;
/// Earth's average rotation rate used by the dipole model, in degrees per day.
pub const EARTH_RATE_DEG_PER_DAY: f64 = 360.99;
/// Dipole strength for epoch 2010 (Wb·m).
pub const DIPOLE_MOMENT_2010: f64 = 7.746e15;
/// Dipole coelevation for epoch 2010 (deg).
pub const DIPOLE_COELEVATION_2010_DEG: f64 = 170.0;

/// Converts a rate given in degrees per day to rad/s.
pub fn deg_per_day_to_rad_per_s(rate: f64) -> f64 {
    rate.to_radians() / 86_400.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitParams {
    /// Orbit radius (m).
    pub radius: f64,
    /// Inclination (rad).
    pub inclination: f64,
    /// Right ascension of the ascending node (rad).
    pub raan: f64,
    /// In-plane phase at t = 0 (rad).
    pub initial_phase: f64,
    /// Orbital rate (rad/s).
    pub rate: f64,
}

impl OrbitParams {
    /// Circular orbit at the given altitude above [`EARTH_RADIUS`], with the
    /// Keplerian rate `n = sqrt(μ/R³)`.
    pub fn from_altitude(
        altitude: f64,
        inclination: f64,
        raan: f64,
        initial_phase: f64,
    ) -> Result<Self, ModelError> {
        Self::from_radius(EARTH_RADIUS + altitude, inclination, raan, initial_phase)
    }

    pub fn from_radius(
        radius: f64,
        inclination: f64,
        raan: f64,
        initial_phase: f64,
    ) -> Result<Self, ModelError> {
        let orbit = Self {
            radius,
            inclination,
            raan,
            initial_phase,
            rate: (EARTH_MU / radius.powi(3)).sqrt(),
        };
        orbit.validate()?;
        Ok(orbit)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.radius > EARTH_RADIUS) || !self.radius.is_finite() {
            return Err(ModelError::invalid(
                "orbit.radius",
                format!("{} m is not above the Earth radius", self.radius),
            ));
        }
        if !(self.rate > 0.0) || !self.rate.is_finite() {
            return Err(ModelError::invalid("orbit.rate", "must be positive"));
        }
        for (name, v) in [
            ("orbit.inclination", self.inclination),
            ("orbit.raan", self.raan),
            ("orbit.initial_phase", self.initial_phase),
        ] {
            if !v.is_finite() {
                return Err(ModelError::invalid(name, "must be finite"));
            }
        }
        Ok(())
    }

    /// Orbital period 2π/n (s).
    pub fn period(&self) -> f64 {
        2.0 * PI / self.rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipoleParams {
    /// Total dipole strength μ_m (Wb·m).
    pub moment: f64,
    /// Dipole coelevation θ_m (rad).
    pub coelevation: f64,
    /// Right ascension of the dipole at t = 0 (rad).
    pub initial_ra: f64,
    /// Earth rotation rate (rad/s).
    pub earth_rate: f64,
}

impl DipoleParams {
    /// Epoch-2010 dipole with the given right ascension at t = 0.
    pub fn epoch_2010(initial_ra: f64) -> Self {
        Self {
            moment: DIPOLE_MOMENT_2010,
            coelevation: DIPOLE_COELEVATION_2010_DEG.to_radians(),
            initial_ra,
            earth_rate: deg_per_day_to_rad_per_s(EARTH_RATE_DEG_PER_DAY),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.moment > 0.0) || !self.moment.is_finite() {
            return Err(ModelError::invalid("dipole.moment", "must be positive"));
        }
        if !(0.0..=PI).contains(&self.coelevation) {
            return Err(ModelError::invalid("dipole.coelevation", "must lie in [0, π]"));
        }
        if !self.initial_ra.is_finite() || !self.earth_rate.is_finite() {
            return Err(ModelError::invalid("dipole", "angles and rates must be finite"));
        }
        Ok(())
    }
}

/// Orbit plus geomagnetic dipole: everything needed to evaluate `B^i(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Environment {
    pub orbit: OrbitParams,
    pub dipole: DipoleParams,
}

impl Environment {
    pub fn new(orbit: OrbitParams, dipole: DipoleParams) -> Result<Self, ModelError> {
        orbit.validate()?;
        dipole.validate()?;
        Ok(Self { orbit, dipole })
    }

    /// The reference scenario: 450 km circular orbit at 87° inclination,
    /// Ω = 0, φ₀ = 0.94 rad, and the 2010 dipole with α₀ = 4.54 rad.
    pub fn reference() -> Self {
        let orbit = OrbitParams::from_altitude(450_000.0, 87f64.to_radians(), 0.0, 0.94)
            .expect("reference orbit is valid");
        Self {
            orbit,
            dipole: DipoleParams::epoch_2010(4.54),
        }
    }

    pub fn position(&self, t: f64) -> Vec3 {
        orbit_position(t, &self.orbit)
    }

    pub fn field_inertial(&self, t: f64) -> Vec3 {
        field_inertial(t, &self.orbit, &self.dipole)
    }

    pub fn field_body(&self, q: &Quaternion, t: f64) -> Vec3 {
        field_body(q, t, self)
    }
}

/// `r^i(t) = R_z(Ω) R_x(incl) (R cos(nt+φ₀), R sin(nt+φ₀), 0)`.
pub fn orbit_position(t: f64, orbit: &OrbitParams) -> Vec3 {
    let (su, cu) = (orbit.rate * t + orbit.initial_phase).sin_cos();
    let (si, ci) = orbit.inclination.sin_cos();
    let (so, co) = orbit.raan.sin_cos();
    let xp = orbit.radius * cu;
    let yp = orbit.radius * su;
    // R_x(incl) applied to (xp, yp, 0)
    let (x1, y1, z1) = (xp, ci * yp, si * yp);
    Vec3::new(co * x1 - so * y1, so * x1 + co * y1, z1)
}

/// Unit direction of the Earth's dipole in the inertial frame at time t.
pub fn dipole_direction(t: f64, dipole: &DipoleParams) -> Vec3 {
    let (st, ct) = dipole.coelevation.sin_cos();
    let (sa, ca) = (dipole.earth_rate * t + dipole.initial_ra).sin_cos();
    Vec3::new(st * ca, st * sa, ct)
}

/// Dipole field at the spacecraft, inertial frame (T).
pub fn field_inertial(t: f64, orbit: &OrbitParams, dipole: &DipoleParams) -> Vec3 {
    let r = orbit_position(t, orbit);
    let m_hat = dipole_direction(t, dipole);
    dipole_field(&r, &m_hat, dipole.moment)
}

/// `B = (μ_m/‖r‖³)(3(m̂ᵀr̂)r̂ − m̂)`.
pub fn dipole_field(r: &Vec3, m_hat: &Vec3, moment: f64) -> Vec3 {
    let dist = r.norm();
    let r_hat = r / dist;
    (r_hat * (3.0 * m_hat.dot(&r_hat)) - m_hat) * (moment / (dist * dist * dist))
}

/// `B^b = A(q) B^i(t)`.
pub fn field_body(q: &Quaternion, t: f64, env: &Environment) -> Vec3 {
    attitude_matrix_unchecked(q) * env.field_inertial(t)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;

    fn equatorial(radius: f64) -> OrbitParams {
        OrbitParams::from_radius(radius, 0.0, 0.0, 0.0).unwrap()
    }

    #[test]
    fn reference_orbit_constants() {
        let env = Environment::reference();
        assert_eq!(env.orbit.radius, 6_821_000.0);
        assert!((env.orbit.period() - 5600.0).abs() < 20.0, "{}", env.orbit.period());
        assert_relative_eq!(env.dipole.earth_rate, 360.99 * PI / 180.0 / 86_400.0);
    }

    #[test]
    fn position_at_epoch_on_x_axis() {
        let r = orbit_position(0.0, &equatorial(7.0e6));
        assert_eq!(r, Vec3::new(7.0e6, 0.0, 0.0));
    }

    #[test]
    fn polar_quarter_orbit_reaches_north() {
        let mut orbit = equatorial(7.0e6);
        orbit.inclination = PI / 2.0;
        let r = orbit_position(PI / (2.0 * orbit.rate), &orbit);
        assert_relative_eq!(r, Vec3::new(0.0, 0.0, 7.0e6), epsilon = 1e-6);
    }

    #[test]
    fn rejects_orbit_below_surface() {
        assert!(OrbitParams::from_radius(6.0e6, 0.0, 0.0, 0.0).is_err());
        let mut dipole = DipoleParams::epoch_2010(0.0);
        dipole.coelevation = 4.0;
        assert!(dipole.validate().is_err());
        dipole.coelevation = 1.0;
        dipole.moment = -1.0;
        assert!(dipole.validate().is_err());
    }

    #[test]
    fn aligned_dipole_points_south() {
        let mut dipole = DipoleParams::epoch_2010(1.3);
        dipole.coelevation = PI;
        for t in [0.0, 1234.5, 86_400.0] {
            let m = dipole_direction(t, &dipole);
            assert_relative_eq!(m, Vec3::new(0.0, 0.0, -1.0), epsilon = 1e-15);
        }
    }

    #[test]
    fn dipole_direction_at_epoch() {
        let dipole = DipoleParams::epoch_2010(4.54);
        let th = 170f64.to_radians();
        let expected = Vec3::new(th.sin() * 4.54f64.cos(), th.sin() * 4.54f64.sin(), th.cos());
        assert_eq!(dipole_direction(0.0, &dipole), expected);
    }

    #[test]
    fn pole_and_equator_field() {
        let mu = 7.746e15;
        let radius: f64 = 7.0e6;
        let b0 = mu / radius.powi(3);
        let m = Vec3::new(0.0, 0.6, 0.8);
        let pole = dipole_field(&(m * radius), &m, mu);
        assert_relative_eq!(pole, m * (2.0 * b0), max_relative = 1e-14);
        let perp = Vec3::new(0.0, 0.8, -0.6);
        let equator = dipole_field(&(perp * radius), &m, mu);
        assert_relative_eq!(equator, -m * b0, max_relative = 1e-14, epsilon = 1e-22);
    }

    #[test]
    fn reference_field_at_epoch_fixture() {
        // Independent scalar evaluation of the dipole formula (NumPy, float64)
        // for the reference scenario at t = 0.
        let b = Environment::reference().field_inertial(0.0);
        let expected = Vec3::new(
            -3.464_281_749_024_916_4e-5,
            1.640_982_105_442_005_8e-6,
            -2.432_600_970_079_748e-5,
        );
        assert_relative_eq!(b, expected, max_relative = 1e-12);
    }

    #[test]
    fn body_field_at_identity_and_half_turn() {
        let env = Environment::reference();
        let t = 300.0;
        let bi = env.field_inertial(t);
        assert_eq!(env.field_body(&Quaternion::IDENTITY, t), bi);
        let bb = env.field_body(&Quaternion::new(1.0, 0.0, 0.0, 0.0), t);
        assert_eq!(bb, Vec3::new(bi.x, -bi.y, -bi.z));
    }

    #[test]
    fn aligned_dipole_field_is_orbit_periodic() {
        let mut env = Environment::reference();
        env.dipole.coelevation = PI;
        let period = env.orbit.period();
        for k in 0..20 {
            let t = 137.0 * k as f64;
            let a = env.field_inertial(t);
            let b = env.field_inertial(t + period);
            assert!((a - b).norm() <= 1e-9 * a.norm());
        }
    }

    proptest! {
        #[test]
        fn position_norm_is_radius(t in 0.0..1.0e6f64, incl in 0.0..PI, raan in 0.0..6.3f64, phase in 0.0..6.3f64) {
            let orbit = OrbitParams::from_radius(6.9e6, incl, raan, phase).unwrap();
            let r = orbit_position(t, &orbit);
            prop_assert!((r.norm() - orbit.radius).abs() <= 1e-9 * orbit.radius);
        }

        #[test]
        fn dipole_direction_is_unit(t in 0.0..1.0e7f64, th in 0.0..PI, a0 in 0.0..6.3f64) {
            let mut d = DipoleParams::epoch_2010(a0);
            d.coelevation = th;
            prop_assert!((dipole_direction(t, &d).norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn field_magnitude_within_dipole_bounds(t in 0.0..1.0e6f64) {
            let env = Environment::reference();
            let b0 = env.dipole.moment / env.orbit.radius.powi(3);
            let b = env.field_inertial(t).norm();
            prop_assert!(b >= b0 * (1.0 - 1e-12) && b <= 2.0 * b0 * (1.0 + 1e-12));
        }

        #[test]
        fn body_field_preserves_magnitude(a in -1.0..1.0f64, b in -1.0..1.0f64, c in -1.0..1.0f64, d in 0.1..1.0f64, t in 0.0..1.0e5f64) {
            let env = Environment::reference();
            let q = Quaternion::normalized(a, b, c, d).unwrap();
            let bi = env.field_inertial(t).norm();
            let bb = env.field_body(&q, t).norm();
            prop_assert!((bb - bi).abs() <= 1e-12 * bi);
        }
    }
}
