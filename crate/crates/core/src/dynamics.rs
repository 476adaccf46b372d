//! Rigid-body equations of motion, actuator and aerodynamic wrenches, and a
//! fixed-step RK4 integrator.
//!
//! Conventions: the inertial frame has z along gravity, buoyancy acts at the
//! centre of gravity (force only), drag is quadratic per body axis, and the
//! added mass is folded into [`VehicleParams::mass`].

use alloc::format;
use alloc::vec::Vec;

use libm::{cos, sin};

use crate::error::{config, domain, Error, Result};
use crate::frames::{self, BodyRates, EulerAngles, EulerRates};
use crate::linalg::{self, Mat3, Vec3};

pub const DEFAULT_GRAVITY: f64 = 9.81;
pub const DEFAULT_AIR_DENSITY: f64 = 1.2;
pub const DEFAULT_SPEED_CAP: f64 = 100.0;
pub const DEFAULT_TIME_STEP: f64 = 1e-3;

/// Mass, inertia, buoyancy and drag properties of the vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleParams {
    /// kg, including added mass.
    pub mass: f64,
    /// kg·m², body axes.
    pub inertia: Mat3,
    /// N, acting opposite to gravity.
    pub buoyancy: f64,
    /// m/s².
    pub gravity: f64,
    /// Per-body-axis drag coefficient.
    pub drag_coeff: Vec3,
    /// Per-body-axis frontal area, m².
    pub frontal_area: Vec3,
    /// kg/m³.
    pub air_density: f64,
    /// Linear rotational damping, N·m·s/rad. Zero unless configured.
    pub rotational_damping: f64,
    /// Translational speed above which integration is declared divergent, m/s.
    pub speed_cap: f64,
}

impl VehicleParams {
    /// Neutrally buoyant vehicle with a diagonal inertia and no drag.
    pub fn neutrally_buoyant(mass: f64, principal_inertia: Vec3) -> Self {
        Self {
            mass,
            inertia: [
                [principal_inertia[0], 0.0, 0.0],
                [0.0, principal_inertia[1], 0.0],
                [0.0, 0.0, principal_inertia[2]],
            ],
            buoyancy: mass * DEFAULT_GRAVITY,
            gravity: DEFAULT_GRAVITY,
            drag_coeff: [0.0; 3],
            frontal_area: [0.0; 3],
            air_density: DEFAULT_AIR_DENSITY,
            rotational_damping: 0.0,
            speed_cap: DEFAULT_SPEED_CAP,
        }
    }

    /// Neutrally buoyant spherical hull: the same frontal area π·r² and drag
    /// coefficient on every axis and an isotropic inertia.
    pub fn sphere(mass: f64, inertia: f64, radius: f64, drag_coeff: f64) -> Self {
        let area = core::f64::consts::PI * radius * radius;
        Self { drag_coeff: [drag_coeff; 3], frontal_area: [area; 3], ..Self::neutrally_buoyant(mass, [inertia; 3]) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(config("mass must be positive"));
        }
        if !(self.buoyancy >= 0.0 && self.buoyancy.is_finite()) {
            return Err(config("buoyancy must be non-negative"));
        }
        if !(self.gravity.is_finite() && self.gravity >= 0.0) {
            return Err(config("gravity must be finite and non-negative"));
        }
        if !(self.air_density > 0.0 && self.air_density.is_finite()) {
            return Err(config("air density must be positive"));
        }
        if self.drag_coeff.iter().chain(self.frontal_area.iter()).any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(config("drag coefficients and frontal areas must be non-negative"));
        }
        if !(self.rotational_damping >= 0.0 && self.rotational_damping.is_finite()) {
            return Err(config("rotational damping must be non-negative"));
        }
        if !(self.speed_cap > 0.0) {
            return Err(config("speed cap must be positive"));
        }
        check_spd(&self.inertia)
    }

    pub fn is_neutrally_buoyant(&self) -> bool {
        let weight = self.mass * self.gravity;
        (self.buoyancy - weight).abs() < 1e-9 * weight
    }

    /// Pitch-axis moment of inertia used by the longitudinal model.
    pub fn pitch_inertia(&self) -> f64 {
        self.inertia[1][1]
    }

    /// Gravity minus buoyancy per unit mass, along inertial z.
    fn net_gravity(&self) -> f64 {
        self.gravity - self.buoyancy / self.mass
    }

    fn drag_force(&self, axis: usize, speed: f64) -> f64 {
        -0.5 * self.drag_coeff[axis] * self.air_density * self.frontal_area[axis] * speed * speed.abs()
    }
}

fn check_spd(m: &Mat3) -> Result<()> {
    let scale = m.iter().flatten().fold(0.0_f64, |a, v| a.max(v.abs()));
    for i in 0..3 {
        for j in 0..i {
            if (m[i][j] - m[j][i]).abs() > 1e-12 * scale.max(1.0) {
                return Err(config("inertia matrix must be symmetric"));
            }
        }
    }
    let minor2 = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if !(m[0][0] > 0.0 && minor2 > 0.0 && linalg::det(m) > 0.0) {
        return Err(config("inertia matrix must be positive definite"));
    }
    Ok(())
}

/// One propeller: lift constant, arm geometry and thrust direction.
#[derive(Debug, Clone, PartialEq)]
pub struct PropellerConfig {
    /// k in f = k·ω², N·s²/rad².
    pub lift_constant: f64,
    /// Distance from the propeller hub to the centre of mass, m.
    pub arm_length: f64,
    /// Direction angles of the arm with respect to the body axes, rad.
    pub arm_direction: Vec3,
    /// Direction angles of the thrust vector with respect to the body axes, rad.
    pub tilt: Vec3,
    /// Maps ω² to reaction torque, N·m·s²/rad².
    pub torque_coefficient: f64,
    /// +1 or −1.
    pub spin_sign: f64,
}

impl PropellerConfig {
    /// Build from direction cosines instead of direction angles.
    pub fn from_direction_cosines(
        lift_constant: f64,
        arm_length: f64,
        arm_cosines: Vec3,
        thrust_cosines: Vec3,
        torque_coefficient: f64,
        spin_sign: f64,
    ) -> Self {
        let angles = |c: Vec3| c.map(|x| libm::acos(x.clamp(-1.0, 1.0)));
        Self {
            lift_constant,
            arm_length,
            arm_direction: angles(arm_cosines),
            tilt: angles(thrust_cosines),
            torque_coefficient,
            spin_sign,
        }
    }

    pub fn arm_cosines(&self) -> Vec3 {
        self.arm_direction.map(cos)
    }

    pub fn thrust_cosines(&self) -> Vec3 {
        self.tilt.map(cos)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lift_constant > 0.0) {
            return Err(config("lift constant must be positive"));
        }
        if !(self.arm_length >= 0.0) {
            return Err(config("arm length must be non-negative"));
        }
        if self.spin_sign != 1.0 && self.spin_sign != -1.0 {
            return Err(config("spin sign must be +1 or -1"));
        }
        for (what, c) in [("arm", self.arm_cosines()), ("thrust", self.thrust_cosines())] {
            if (linalg::norm(&c) - 1.0).abs() > 1e-9 {
                return Err(config(format!("{what} direction cosines must have unit norm")));
            }
        }
        Ok(())
    }
}

/// Force and moment in body axes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Wrench {
    pub force: Vec3,
    pub moment: Vec3,
}

impl Wrench {
    pub fn new(force: Vec3, moment: Vec3) -> Self {
        Self { force, moment }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn add(&self, other: &Wrench) -> Wrench {
        Wrench { force: linalg::add(&self.force, &other.force), moment: linalg::add(&self.moment, &other.moment) }
    }
}

/// Sum of propeller thrusts and moments for the given rotor speeds (rad/s).
///
/// Moments follow the arm/thrust direction-cosine sums, plus each rotor's
/// reaction torque `spin_sign·c_T·ω²` projected on its thrust axis.
pub fn thrust_wrench(propellers: &[PropellerConfig], speeds: &[f64]) -> Result<Wrench> {
    if propellers.len() != speeds.len() {
        return Err(config(format!("{} propellers but {} rotor speeds", propellers.len(), speeds.len())));
    }
    let mut w = Wrench::zero();
    for (prop, &omega) in propellers.iter().zip(speeds) {
        if !(omega >= 0.0) {
            return Err(domain("rotor speeds must be non-negative"));
        }
        let f = prop.lift_constant * omega * omega;
        let torque = prop.torque_coefficient * omega * omega * prop.spin_sign;
        let a = prop.thrust_cosines();
        let b = prop.arm_cosines();
        let l = prop.arm_length;
        for k in 0..3 {
            w.force[k] += f * a[k];
        }
        w.moment[0] += f * a[1] * l * b[2] + f * a[2] * l * b[1] + torque * a[0];
        w.moment[1] += f * a[0] * l * b[2] + f * a[2] * l * b[0] + torque * a[1];
        w.moment[2] += f * a[0] * l * b[1] + f * a[1] * l * b[0] + torque * a[2];
    }
    Ok(w)
}

/// Full 6-DOF state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState {
    /// Inertial position, m.
    pub position: Vec3,
    pub angles: EulerAngles,
    /// Body-frame translational velocity (u, v, w), m/s.
    pub velocity: Vec3,
    pub rates: BodyRates,
}

/// Time derivative of a [`VehicleState`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateDerivative {
    pub position_dot: Vec3,
    pub euler_rates: EulerRates,
    pub velocity_dot: Vec3,
    pub rates_dot: Vec3,
}

impl VehicleState {
    pub fn to_array(&self) -> [f64; 12] {
        let r = self.position;
        let a = self.angles;
        let v = self.velocity;
        let w = self.rates;
        [r[0], r[1], r[2], a.psi, a.theta, a.phi, v[0], v[1], v[2], w.p, w.q, w.r]
    }

    pub fn from_array(y: &[f64; 12]) -> Self {
        Self {
            position: [y[0], y[1], y[2]],
            angles: EulerAngles::new(y[3], y[4], y[5]),
            velocity: [y[6], y[7], y[8]],
            rates: BodyRates::new(y[9], y[10], y[11]),
        }
    }
}

impl StateDerivative {
    /// Same component order as [`VehicleState::to_array`].
    pub fn to_array(&self) -> [f64; 12] {
        let r = self.position_dot;
        let e = self.euler_rates;
        let v = self.velocity_dot;
        let w = self.rates_dot;
        [r[0], r[1], r[2], e.psi_dot, e.theta_dot, e.phi_dot, v[0], v[1], v[2], w[0], w[1], w[2]]
    }
}

/// Quadratic per-axis drag opposing the body-frame velocity, plus linear
/// rotational damping.
pub fn aero_wrench(state: &VehicleState, params: &VehicleParams) -> Wrench {
    let v = state.velocity;
    let force = [params.drag_force(0, v[0]), params.drag_force(1, v[1]), params.drag_force(2, v[2])];
    let moment = linalg::scale(&state.rates.as_array(), -params.rotational_damping);
    Wrench { force, moment }
}

/// Rigid-body state derivative under the applied (actuator) wrench; drag is
/// added internally.
pub fn state_derivative(state: &VehicleState, wrench: &Wrench, params: &VehicleParams) -> Result<StateDerivative> {
    let total = wrench.add(&aero_wrench(state, params));
    let h_ib = frames::rotation_body_from_inertial(&state.angles)?;
    let omega = state.rates.as_array();

    let gravity_body = h_ib.apply(&[0.0, 0.0, params.net_gravity()]);
    let coriolis = linalg::cross(&omega, &state.velocity);
    let velocity_dot =
        linalg::sub(&linalg::add(&linalg::scale(&total.force, 1.0 / params.mass), &gravity_body), &coriolis);

    let inertia_inv = linalg::inverse(&params.inertia).ok_or_else(|| config("inertia matrix is singular"))?;
    let angular_momentum = linalg::mat_vec(&params.inertia, &omega);
    let gyro = linalg::cross(&omega, &angular_momentum);
    let rates_dot = linalg::mat_vec(&inertia_inv, &linalg::sub(&total.moment, &gyro));

    let position_dot = h_ib.transpose().apply(&state.velocity);
    let euler_rates = frames::euler_rates_from_body_rates(&state.angles, &state.rates)?;

    Ok(StateDerivative { position_dot, euler_rates, velocity_dot, rates_dot })
}

/// Vertical-plane state: inertial x and z, pitch, body velocities and pitch rate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LongitudinalState {
    pub x: f64,
    pub z: f64,
    pub theta: f64,
    pub u: f64,
    pub w: f64,
    pub q: f64,
}

impl LongitudinalState {
    pub fn to_array(&self) -> [f64; 6] {
        [self.x, self.z, self.theta, self.u, self.w, self.q]
    }

    pub fn from_array(y: &[f64; 6]) -> Self {
        Self { x: y[0], z: y[1], theta: y[2], u: y[3], w: y[4], q: y[5] }
    }

    /// Inertial velocity (ẋ, ż).
    pub fn inertial_velocity(&self) -> [f64; 2] {
        let (s, c) = (sin(self.theta), cos(self.theta));
        [self.u * c + self.w * s, -self.u * s + self.w * c]
    }
}

/// Body-frame actuator force (F_x, F_z) and pitching moment for the vertical-plane model.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LongitudinalInput {
    pub force: [f64; 2],
    pub moment: f64,
}

/// Vertical-plane equations of motion; drag on u and w is added internally.
pub fn longitudinal_derivative(
    state: &LongitudinalState,
    force: [f64; 2],
    moment: f64,
    params: &VehicleParams,
) -> [f64; 6] {
    let LongitudinalState { theta, u, w, q, .. } = *state;
    let (s, c) = (sin(theta), cos(theta));
    let m = params.mass;
    let buoy = params.buoyancy / m;
    let fx = force[0] + params.drag_force(0, u);
    let fz = force[1] + params.drag_force(2, w);
    let total_moment = moment - params.rotational_damping * q;
    [
        u * c + w * s,
        -u * s + w * c,
        q,
        fx / m - params.gravity * s + buoy * s - q * w,
        fz / m + params.gravity * c - buoy * c + q * u,
        total_moment / params.pitch_inertia(),
    ]
}

/// F_I·v_I + M_I·ω_I, W. Negative values are regeneration opportunities.
pub fn mechanical_power(force: &Vec3, velocity: &Vec3, moment: &Vec3, omega: &Vec3) -> f64 {
    linalg::dot(force, velocity) + linalg::dot(moment, omega)
}

/// One classical fourth-order Runge–Kutta step.
pub fn rk4_step<const N: usize, F>(t: f64, y: &[f64; N], dt: f64, mut f: F) -> Result<[f64; N]>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let shifted = |base: &[f64; N], k: &[f64; N], h: f64| {
        let mut out = *base;
        for i in 0..N {
            out[i] += h * k[i];
        }
        out
    };
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * dt, &shifted(y, &k1, 0.5 * dt))?;
    let k3 = f(t + 0.5 * dt, &shifted(y, &k2, 0.5 * dt))?;
    let k4 = f(t + dt, &shifted(y, &k3, dt))?;
    let mut out = *y;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(out)
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(domain("time step must be positive"))
    }
}

fn divergence(step: usize, y: &[f64], speed: f64, cap: f64) -> Result<()> {
    if !linalg::all_finite(y) {
        return Err(Error::Divergence { step, reason: "non-finite state".into() });
    }
    if speed > cap {
        return Err(Error::Divergence { step, reason: format!("speed {speed:.3} m/s exceeds cap {cap} m/s") });
    }
    Ok(())
}

/// Advance the 6-DOF state by `dt`. `input` supplies the actuator wrench at
/// each RK4 stage time.
pub fn integrate_step<F>(
    state: &VehicleState,
    t: f64,
    dt: f64,
    step: usize,
    params: &VehicleParams,
    mut input: F,
) -> Result<VehicleState>
where
    F: FnMut(f64, &VehicleState) -> Wrench,
{
    check_dt(dt)?;
    let y = rk4_step(t, &state.to_array(), dt, |ts, ys| {
        let s = VehicleState::from_array(ys);
        let wrench = input(ts, &s);
        Ok(state_derivative(&s, &wrench, params)?.to_array())
    })?;
    let next = VehicleState::from_array(&y);
    divergence(step, &y, linalg::norm(&next.velocity), params.speed_cap)?;
    Ok(next)
}

/// Advance the vertical-plane state by `dt`.
pub fn integrate_longitudinal_step<F>(
    state: &LongitudinalState,
    t: f64,
    dt: f64,
    step: usize,
    params: &VehicleParams,
    mut input: F,
) -> Result<LongitudinalState>
where
    F: FnMut(f64, &LongitudinalState) -> LongitudinalInput,
{
    check_dt(dt)?;
    let y = rk4_step(t, &state.to_array(), dt, |ts, ys| {
        let s = LongitudinalState::from_array(ys);
        let u = input(ts, &s);
        Ok(longitudinal_derivative(&s, u.force, u.moment, params))
    })?;
    let next = LongitudinalState::from_array(&y);
    divergence(step, &y, libm::hypot(next.u, next.w), params.speed_cap)?;
    Ok(next)
}

/// Integrate a vertical-plane trajectory over `steps` steps with a fixed input.
pub fn integrate_longitudinal(
    initial: &LongitudinalState,
    input: LongitudinalInput,
    dt: f64,
    steps: usize,
    params: &VehicleParams,
) -> Result<Vec<LongitudinalState>> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut s = *initial;
    out.push(s);
    for k in 0..steps {
        s = integrate_longitudinal_step(&s, k as f64 * dt, dt, k, params, |_, _| input)?;
        out.push(s);
    }
    Ok(out)
}
