//! Coordinate frames and Euler-angle kinematics.
//!
//! Attitude is a yaw → pitch → roll (3-2-1) sequence from the inertial frame
//! `I` to the body frame `B`. Angles are never wrapped; wrapping is a display
//! concern.

use libm::{cos, sin, tan};

use crate::error::{domain, Error, Result};
use crate::linalg::{self, Mat3, Vec3};

/// Half-width of the forbidden band around pitch = ±π/2 for the rate transform.
pub const SINGULARITY_GUARD: f64 = 1e-6;

/// Yaw, pitch and roll in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EulerAngles {
    pub psi: f64,
    pub theta: f64,
    pub phi: f64,
}

impl EulerAngles {
    pub fn new(psi: f64, theta: f64, phi: f64) -> Self {
        Self { psi, theta, phi }
    }

    pub fn is_finite(&self) -> bool {
        self.psi.is_finite() && self.theta.is_finite() && self.phi.is_finite()
    }

    fn check_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(domain("Euler angles must be finite"))
        }
    }
}

/// Body-axis angular velocity (p, q, r) in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BodyRates {
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

impl BodyRates {
    pub fn new(p: f64, q: f64, r: f64) -> Self {
        Self { p, q, r }
    }

    pub fn as_array(&self) -> Vec3 {
        [self.p, self.q, self.r]
    }

    pub fn from_array(v: Vec3) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

/// Euler-angle rates (φ̇, θ̇, ψ̇) in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EulerRates {
    pub phi_dot: f64,
    pub theta_dot: f64,
    pub psi_dot: f64,
}

impl EulerRates {
    pub fn new(phi_dot: f64, theta_dot: f64, psi_dot: f64) -> Self {
        Self { phi_dot, theta_dot, psi_dot }
    }

    pub fn as_array(&self) -> Vec3 {
        [self.phi_dot, self.theta_dot, self.psi_dot]
    }
}

/// Orthonormal direction-cosine matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix3(pub Mat3);

impl RotationMatrix3 {
    pub fn identity() -> Self {
        Self(linalg::IDENTITY)
    }

    /// The inverse rotation (equal to the transpose).
    pub fn transpose(&self) -> Self {
        Self(linalg::transpose(&self.0))
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        linalg::mat_vec(&self.0, v)
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self(linalg::mat_mul(&self.0, &other.0))
    }

    pub fn determinant(&self) -> f64 {
        linalg::det(&self.0)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }
}

/// Single-axis rotation of the frame about z by `psi`.
pub fn yaw_matrix(psi: f64) -> RotationMatrix3 {
    let (s, c) = (sin(psi), cos(psi));
    RotationMatrix3([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
}

/// Single-axis rotation of the frame about y by `theta`.
pub fn pitch_matrix(theta: f64) -> RotationMatrix3 {
    let (s, c) = (sin(theta), cos(theta));
    RotationMatrix3([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])
}

/// Single-axis rotation of the frame about x by `phi`.
pub fn roll_matrix(phi: f64) -> RotationMatrix3 {
    let (s, c) = (sin(phi), cos(phi));
    RotationMatrix3([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])
}

/// `H_I^B`: maps inertial-frame components into body-frame components.
pub fn rotation_body_from_inertial(angles: &EulerAngles) -> Result<RotationMatrix3> {
    angles.check_finite()?;
    let (sps, cps) = (sin(angles.psi), cos(angles.psi));
    let (sth, cth) = (sin(angles.theta), cos(angles.theta));
    let (sph, cph) = (sin(angles.phi), cos(angles.phi));
    Ok(RotationMatrix3([
        [cth * cps, cth * sps, -sth],
        [sph * sth * cps - cph * sps, sph * sth * sps + cph * cps, sph * cth],
        [cph * sth * cps + sph * sps, cph * sth * sps - sph * cps, cph * cth],
    ]))
}

/// `H_B^I`: maps body-frame components into inertial-frame components.
pub fn rotation_inertial_from_body(angles: &EulerAngles) -> Result<RotationMatrix3> {
    Ok(rotation_body_from_inertial(angles)?.transpose())
}

/// Θ̇ = L_B^I ω_B. Refuses to evaluate inside the gimbal-lock guard band.
pub fn euler_rates_from_body_rates(angles: &EulerAngles, rates: &BodyRates) -> Result<EulerRates> {
    angles.check_finite()?;
    let cth = cos(angles.theta);
    if cth.abs() <= sin(SINGULARITY_GUARD) {
        return Err(Error::Singularity { theta: angles.theta });
    }
    let (sph, cph) = (sin(angles.phi), cos(angles.phi));
    let tth = tan(angles.theta);
    let BodyRates { p, q, r } = *rates;
    Ok(EulerRates {
        phi_dot: p + sph * tth * q + cph * tth * r,
        theta_dot: cph * q - sph * r,
        psi_dot: (sph * q + cph * r) / cth,
    })
}

/// ω_B = L_I^B Θ̇.
pub fn body_rates_from_euler_rates(angles: &EulerAngles, euler_rates: &EulerRates) -> Result<BodyRates> {
    angles.check_finite()?;
    if !linalg::all_finite(&euler_rates.as_array()) {
        return Err(domain("Euler rates must be finite"));
    }
    let (sth, cth) = (sin(angles.theta), cos(angles.theta));
    let (sph, cph) = (sin(angles.phi), cos(angles.phi));
    let EulerRates { phi_dot, theta_dot, psi_dot } = *euler_rates;
    Ok(BodyRates {
        p: phi_dot - sth * psi_dot,
        q: cph * theta_dot + sph * cth * psi_dot,
        r: -sph * theta_dot + cph * cth * psi_dot,
    })
}

/// Cross-product matrix ω̃ with ω̃·v = ω × v.
pub fn skew(rates: &BodyRates) -> Mat3 {
    skew_vec(&rates.as_array())
}

pub fn skew_vec(w: &Vec3) -> Mat3 {
    [[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::FRAC_PI_2;

    fn assert_mat_close(a: &Mat3, b: &Mat3, tol: f64) {
        for i in 0..3 {
            for j in 0..3 {
                assert!((a[i][j] - b[i][j]).abs() <= tol, "({i},{j}): {} vs {}", a[i][j], b[i][j]);
            }
        }
    }

    #[test]
    fn zero_angles_give_identity() {
        let h = rotation_body_from_inertial(&EulerAngles::default()).unwrap();
        assert_mat_close(&h.0, &linalg::IDENTITY, 0.0);
    }

    #[test]
    fn pure_roll_reduces_to_single_axis_matrix() {
        let h = rotation_body_from_inertial(&EulerAngles::new(0.0, 0.0, FRAC_PI_2)).unwrap();
        assert_mat_close(&h.0, &[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]], 1e-15);
    }

    #[test]
    fn matches_product_of_single_axis_matrices() {
        let angles = EulerAngles::new(0.3, 0.2, 0.1);
        let oracle = roll_matrix(0.1).compose(&pitch_matrix(0.2)).compose(&yaw_matrix(0.3));
        let h = rotation_body_from_inertial(&angles).unwrap();
        assert_mat_close(&h.0, &oracle.0, 1e-15);
    }

    #[test]
    fn non_finite_angles_rejected() {
        let bad = EulerAngles::new(f64::NAN, 0.0, 0.0);
        assert!(matches!(rotation_body_from_inertial(&bad), Err(Error::Domain(_))));
        assert!(body_rates_from_euler_rates(&bad, &EulerRates::default()).is_err());
    }

    #[test]
    fn level_attitude_rates_pass_through() {
        let angles = EulerAngles::default();
        let e = euler_rates_from_body_rates(&angles, &BodyRates::new(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(e.as_array(), [1.0, 2.0, 3.0]);
        let b = body_rates_from_euler_rates(&angles, &EulerRates::new(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(b.as_array(), [1.0, 2.0, 3.0]);
    }

    #[test]
    fn gimbal_lock_is_refused() {
        let angles = EulerAngles::new(0.0, FRAC_PI_2, 0.0);
        let err = euler_rates_from_body_rates(&angles, &BodyRates::new(0.1, 0.2, 0.3)).unwrap_err();
        assert!(matches!(err, Error::Singularity { .. }));
        let near = EulerAngles::new(0.0, -FRAC_PI_2 + 0.5e-6, 0.0);
        assert!(euler_rates_from_body_rates(&near, &BodyRates::default()).is_err());
        let outside = EulerAngles::new(0.0, FRAC_PI_2 - 1e-3, 0.0);
        assert!(euler_rates_from_body_rates(&outside, &BodyRates::default()).is_ok());
    }

    // Independent route: build L_I^B entrywise and invert it numerically.
    #[test]
    fn euler_rates_match_inverted_rate_matrix() {
        let (theta, phi) = (0.4_f64, 0.2_f64);
        let l_ib: Mat3 = [
            [1.0, 0.0, -theta.sin()],
            [0.0, phi.cos(), phi.sin() * theta.cos()],
            [0.0, -phi.sin(), phi.cos() * theta.cos()],
        ];
        let l_bi = linalg::inverse(&l_ib).unwrap();
        let expected = linalg::mat_vec(&l_bi, &[0.1, 0.2, 0.3]);
        let got = euler_rates_from_body_rates(&EulerAngles::new(0.0, theta, phi), &BodyRates::new(0.1, 0.2, 0.3))
            .unwrap()
            .as_array();
        for k in 0..3 {
            assert!((got[k] - expected[k]).abs() < 1e-14, "{got:?} vs {expected:?}");
        }
    }

    #[test]
    fn body_rates_match_direct_matrix_evaluation() {
        let (theta, phi) = (0.4_f64, 0.2_f64);
        let (a, b, c) = (0.1, 0.2, 0.3);
        let expected = [
            a - theta.sin() * c,
            phi.cos() * b + phi.sin() * theta.cos() * c,
            -phi.sin() * b + phi.cos() * theta.cos() * c,
        ];
        let got = body_rates_from_euler_rates(&EulerAngles::new(1.0, theta, phi), &EulerRates::new(a, b, c))
            .unwrap()
            .as_array();
        assert_eq!(got, expected);
    }

    #[test]
    fn skew_of_zero_is_zero_and_unit_cross_product_holds() {
        assert_eq!(skew(&BodyRates::default()), [[0.0; 3]; 3]);
        let m = skew(&BodyRates::new(1.0, 0.0, 0.0));
        assert_eq!(linalg::mat_vec(&m, &[0.0, 1.0, 0.0]), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn skew_matches_componentwise_cross_product() {
        let w = [0.3, -1.7, 2.2];
        let v = [-0.4, 0.9, 1.3];
        let oracle = [w[1] * v[2] - w[2] * v[1], w[2] * v[0] - w[0] * v[2], w[0] * v[1] - w[1] * v[0]];
        let got = linalg::mat_vec(&skew_vec(&w), &v);
        for k in 0..3 {
            assert!((got[k] - oracle[k]).abs() < 1e-14);
        }
    }
}
