//! PID loops, reference signals, closed-loop simulation of the vertical-plane
//! model with power accounting, step-response metrics and duty-cycle reports.
//!
//! The two force loops act on inertial x and z position errors and command a
//! thrust vector that is rotated into body axes; the pitch loop commands a
//! pure moment.

use alloc::format;
use alloc::vec::Vec;

use libm::{cos, sin, sqrt};

use crate::dynamics::{self, LongitudinalInput, LongitudinalState, VehicleParams, DEFAULT_TIME_STEP};
use crate::error::{config, domain, Result};
use crate::powertrain::{self, PvArrayConfig};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl PidGains {
    pub fn new(kp: f64, ki: f64, kd: f64) -> Self {
        Self { kp, ki, kd }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.kp, self.ki, self.kd].iter().all(|g| *g >= 0.0 && g.is_finite()) {
            Ok(())
        } else {
            Err(config("PID gains must be finite and non-negative"))
        }
    }
}

/// Integrator and previous error of one PID loop.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidState {
    pub integral: f64,
    pub prev_error: Option<f64>,
}

/// One controller update. The output is clamped to ±`limit`; the integral is
/// held while the output saturates and `|ki·integral|` never exceeds `limit`.
pub fn pid_step(state: &PidState, error: f64, dt: f64, gains: &PidGains, limit: f64) -> Result<(f64, PidState)> {
    if !(dt > 0.0) {
        return Err(domain("time step must be positive"));
    }
    if !(limit > 0.0) {
        return Err(domain("output limit must be positive"));
    }
    let prev = state.prev_error.unwrap_or(error);
    let derivative = (error - prev) / dt;
    let mut integral = state.integral + 0.5 * (error + prev) * dt;
    if gains.ki > 0.0 {
        let cap = limit / gains.ki;
        integral = integral.clamp(-cap, cap);
    }
    let raw = gains.kp * error + gains.ki * integral + gains.kd * derivative;
    if raw.abs() > limit {
        integral = state.integral;
    }
    let output = (gains.kp * error + gains.ki * integral + gains.kd * derivative).clamp(-limit, limit);
    Ok((output, PidState { integral, prev_error: Some(error) }))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceSignal {
    /// Zero up to and including `time`, then `amplitude`.
    Step {
        amplitude: f64,
        time: f64,
    },
    Ramp {
        slope: f64,
    },
    /// (t, value) breakpoints, strictly increasing in t. Held constant outside.
    PiecewiseLinear(Vec<(f64, f64)>),
}

impl ReferenceSignal {
    pub fn step(amplitude: f64) -> Self {
        ReferenceSignal::Step { amplitude, time: 0.0 }
    }

    pub fn zero() -> Self {
        ReferenceSignal::step(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ReferenceSignal::Step { amplitude, time } => {
                if !(amplitude.is_finite() && time.is_finite() && *time >= 0.0) {
                    return Err(config("step reference needs finite amplitude and non-negative time"));
                }
            }
            ReferenceSignal::Ramp { slope } => {
                if !slope.is_finite() {
                    return Err(config("ramp slope must be finite"));
                }
            }
            ReferenceSignal::PiecewiseLinear(points) => {
                if points.is_empty() {
                    return Err(config("piecewise reference needs at least one breakpoint"));
                }
                if points.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
                    return Err(config("piecewise breakpoints must be finite"));
                }
                if points.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(config("piecewise breakpoints must be strictly increasing in time"));
                }
            }
        }
        Ok(())
    }
}

pub fn reference_value(signal: &ReferenceSignal, t: f64) -> f64 {
    match signal {
        ReferenceSignal::Step { amplitude, time } => {
            if t > *time {
                *amplitude
            } else {
                0.0
            }
        }
        ReferenceSignal::Ramp { slope } => slope * t,
        ReferenceSignal::PiecewiseLinear(points) => {
            let (first, last) = (points[0], points[points.len() - 1]);
            if t <= first.0 {
                return first.1;
            }
            if t >= last.0 {
                return last.1;
            }
            let k = points.partition_point(|p| p.0 <= t);
            let (t0, v0) = points[k - 1];
            let (t1, v1) = points[k];
            v0 + (v1 - v0) * (t - t0) / (t1 - t0)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlScenario {
    pub vehicle: VehicleParams,
    pub array: PvArrayConfig,
    pub gains_force: PidGains,
    pub gains_pitch: PidGains,
    pub x_reference: ReferenceSignal,
    pub z_reference: ReferenceSignal,
    pub theta_reference: ReferenceSignal,
    /// s.
    pub horizon: f64,
    /// s.
    pub dt: f64,
    /// Per body axis, N.
    pub force_limit: f64,
    /// N·m.
    pub moment_limit: f64,
    /// When set, the wrench is scaled down so that mechanical power never
    /// exceeds this multiple of generated power.
    pub power_limit_ratio: Option<f64>,
    /// Credit negative mechanical power back instead of flooring it at zero.
    pub signed_power: bool,
    pub initial: LongitudinalState,
}

impl ControlScenario {
    /// Zero references, unit limits scaled to the vehicle weight, default time step.
    pub fn new(
        vehicle: VehicleParams,
        array: PvArrayConfig,
        gains_force: PidGains,
        gains_pitch: PidGains,
        horizon: f64,
    ) -> Self {
        let weight = vehicle.mass * vehicle.gravity;
        Self {
            vehicle,
            array,
            gains_force,
            gains_pitch,
            x_reference: ReferenceSignal::zero(),
            z_reference: ReferenceSignal::zero(),
            theta_reference: ReferenceSignal::zero(),
            horizon,
            dt: DEFAULT_TIME_STEP,
            force_limit: 2.0 * weight,
            moment_limit: weight,
            power_limit_ratio: None,
            signed_power: false,
            initial: LongitudinalState::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.vehicle.validate()?;
        if !self.vehicle.is_neutrally_buoyant() {
            return Err(config(format!(
                "vehicle must be neutrally buoyant: buoyancy {} N vs weight {} N",
                self.vehicle.buoyancy,
                self.vehicle.mass * self.vehicle.gravity
            )));
        }
        self.array.validate()?;
        self.gains_force.validate()?;
        self.gains_pitch.validate()?;
        for r in [&self.x_reference, &self.z_reference, &self.theta_reference] {
            r.validate()?;
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(config("horizon must be positive"));
        }
        if !(self.dt > 0.0 && self.dt <= self.horizon) {
            return Err(config("time step must be positive and no longer than the horizon"));
        }
        if !(self.force_limit > 0.0 && self.moment_limit > 0.0) {
            return Err(config("force and moment limits must be positive"));
        }
        if let Some(r) = self.power_limit_ratio {
            if !(r > 0.0 && r.is_finite()) {
                return Err(config("power limit ratio must be positive"));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        libm::round(self.horizon / self.dt) as usize
    }
}

/// One row of a closed-loop run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimSample {
    pub t: f64,
    pub x: f64,
    pub z: f64,
    pub theta: f64,
    pub u: f64,
    pub w: f64,
    pub q: f64,
    pub fx: f64,
    pub fz: f64,
    pub moment: f64,
    pub consumed: f64,
    pub generated: f64,
    pub nondimensional: f64,
}

impl SimSample {
    pub const CSV_HEADER: &'static str = "t,x,z,theta,u,w,q,Fx,Fz,M,Pc,Pg,Pnon";

    pub fn to_row(&self) -> [f64; 13] {
        [
            self.t,
            self.x,
            self.z,
            self.theta,
            self.u,
            self.w,
            self.q,
            self.fx,
            self.fz,
            self.moment,
            self.consumed,
            self.generated,
            self.nondimensional,
        ]
    }

    pub fn from_row(r: &[f64; 13]) -> Self {
        Self {
            t: r[0],
            x: r[1],
            z: r[2],
            theta: r[3],
            u: r[4],
            w: r[5],
            q: r[6],
            fx: r[7],
            fz: r[8],
            moment: r[9],
            consumed: r[10],
            generated: r[11],
            nondimensional: r[12],
        }
    }

    pub fn state(&self) -> LongitudinalState {
        LongitudinalState { x: self.x, z: self.z, theta: self.theta, u: self.u, w: self.w, q: self.q }
    }
}

/// Step-response figures. `None` marks a quantity that is undefined for the run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PerformanceMetrics {
    pub rise_time: Option<f64>,
    pub settling_time: Option<f64>,
    pub overshoot: Option<f64>,
    pub peak_time: Option<f64>,
    pub steady_state_error: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChannelMetrics {
    pub x: PerformanceMetrics,
    pub z: PerformanceMetrics,
    pub theta: PerformanceMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub samples: Vec<SimSample>,
    pub metrics: ChannelMetrics,
}

impl SimResult {
    pub fn max_nondimensional(&self) -> f64 {
        self.samples.iter().map(|s| s.nondimensional).fold(0.0, f64::max)
    }

    /// Recompute P_g and P_non for a different generated power, keeping the trajectory.
    pub fn with_generated_power(&self, generated: f64) -> Result<SimResult> {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                Ok(SimSample {
                    generated,
                    nondimensional: powertrain::nondimensional_power(s.consumed, generated)?,
                    ..*s
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SimResult { samples, metrics: self.metrics })
    }
}

fn clamp_sym(v: f64, limit: f64) -> f64 {
    v.clamp(-limit, limit)
}

/// Run the closed loop over the scenario horizon. The wrench is held constant
/// over each integration step.
pub fn simulate_closed_loop(scenario: &ControlScenario) -> Result<SimResult> {
    scenario.validate()?;
    let params = &scenario.vehicle;
    let generated = powertrain::generated_power(&scenario.array);
    if !(generated > 0.0) {
        return Err(config("generated power must be positive"));
    }
    let dt = scenario.dt;
    let steps = scenario.steps();
    let mut state = scenario.initial;
    let (mut pid_x, mut pid_z, mut pid_theta) = (PidState::default(), PidState::default(), PidState::default());
    let mut samples = Vec::with_capacity(steps + 1);

    for k in 0..=steps {
        let t = k as f64 * dt;
        let ex = reference_value(&scenario.x_reference, t) - state.x;
        let ez = reference_value(&scenario.z_reference, t) - state.z;
        let et = reference_value(&scenario.theta_reference, t) - state.theta;
        let (fx_i, sx) = pid_step(&pid_x, ex, dt, &scenario.gains_force, scenario.force_limit)?;
        let (fz_i, sz) = pid_step(&pid_z, ez, dt, &scenario.gains_force, scenario.force_limit)?;
        let (m, st) = pid_step(&pid_theta, et, dt, &scenario.gains_pitch, scenario.moment_limit)?;
        (pid_x, pid_z, pid_theta) = (sx, sz, st);

        let (s, c) = (sin(state.theta), cos(state.theta));
        let mut fx = clamp_sym(c * fx_i - s * fz_i, scenario.force_limit);
        let mut fz = clamp_sym(s * fx_i + c * fz_i, scenario.force_limit);
        let mut moment = clamp_sym(m, scenario.moment_limit);

        let mut mech = fx * state.u + fz * state.w + moment * state.q;
        if let Some(ratio) = scenario.power_limit_ratio {
            let budget = ratio * generated;
            if mech > budget {
                let scale = budget / mech;
                fx *= scale;
                fz *= scale;
                moment *= scale;
                mech = budget;
            }
        }
        let consumed = if scenario.signed_power { mech } else { mech.max(0.0) };
        samples.push(SimSample {
            t,
            x: state.x,
            z: state.z,
            theta: state.theta,
            u: state.u,
            w: state.w,
            q: state.q,
            fx,
            fz,
            moment,
            consumed,
            generated,
            nondimensional: consumed / generated,
        });
        if k == steps {
            break;
        }
        let input = LongitudinalInput { force: [fx, fz], moment };
        state = dynamics::integrate_longitudinal_step(&state, t, dt, k, params, |_, _| input)?;
    }

    let series = |f: fn(&SimSample) -> f64| samples.iter().map(|s| (s.t, f(s))).collect::<Vec<_>>();
    let metrics = ChannelMetrics {
        x: performance_metrics(&series(|s| s.x), &scenario.x_reference)?,
        z: performance_metrics(&series(|s| s.z), &scenario.z_reference)?,
        theta: performance_metrics(&series(|s| s.theta), &scenario.theta_reference)?,
    };
    Ok(SimResult { samples, metrics })
}

/// Rise (10-90%), settling (2% band), overshoot and peak time relative to the
/// step amplitude. Times are measured from the step instant. Non-step
/// references only report the final tracking error.
pub fn performance_metrics(series: &[(f64, f64)], reference: &ReferenceSignal) -> Result<PerformanceMetrics> {
    let Some(&(t_end, y_end)) = series.last() else {
        return Err(domain("metrics need a non-empty series"));
    };
    let steady_state_error = Some((reference_value(reference, t_end) - y_end).abs());
    let ReferenceSignal::Step { amplitude, time } = *reference else {
        return Ok(PerformanceMetrics { steady_state_error, ..Default::default() });
    };
    if amplitude == 0.0 {
        return Ok(PerformanceMetrics { steady_state_error, ..Default::default() });
    }
    let norm: Vec<(f64, f64)> = series.iter().map(|&(t, y)| (t, y / amplitude)).collect();

    let crossing = |level: f64| -> Option<f64> {
        let first = norm.first()?;
        if first.1 >= level {
            return Some(first.0);
        }
        norm.windows(2).find(|w| w[1].1 >= level).map(|w| {
            let ((t0, y0), (t1, y1)) = (w[0], w[1]);
            t0 + (level - y0) / (y1 - y0) * (t1 - t0)
        })
    };
    let rise_time = match (crossing(0.1), crossing(0.9)) {
        (Some(a), Some(b)) => Some(b - a),
        _ => None,
    };

    let band = 0.02;
    let settling_time = match norm.iter().rposition(|&(_, y)| (y - 1.0).abs() > band) {
        None => Some(0.0),
        Some(i) if i + 1 < norm.len() => Some((norm[i + 1].0 - time).max(0.0)),
        Some(_) => None,
    };

    let (peak_t, peak) =
        norm.iter().copied().fold((norm[0].0, f64::NEG_INFINITY), |best, p| if p.1 > best.1 { p } else { best });
    Ok(PerformanceMetrics {
        rise_time,
        settling_time,
        overshoot: Some((peak - 1.0).max(0.0)),
        peak_time: Some((peak_t - time).max(0.0)),
        steady_state_error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentReport {
    pub start: f64,
    pub end: f64,
    pub max_nondimensional: f64,
    pub mean_nondimensional: f64,
    pub self_powered: bool,
}

/// Per-window P_non statistics over inclusive time windows.
pub fn duty_cycle_report(result: &SimResult, segments: &[(f64, f64)]) -> Result<Vec<SegmentReport>> {
    let horizon = result.samples.last().map(|s| s.t).unwrap_or(0.0);
    let slack = 1e-9 * horizon.max(1.0);
    segments
        .iter()
        .map(|&(start, end)| {
            if !(start <= end) || start < -slack || end > horizon + slack {
                return Err(config(format!("segment [{start}, {end}] is not within [0, {horizon}]")));
            }
            let window: Vec<f64> = result
                .samples
                .iter()
                .filter(|s| s.t >= start - slack && s.t <= end + slack)
                .map(|s| s.nondimensional)
                .collect();
            if window.is_empty() {
                return Err(config(format!("segment [{start}, {end}] contains no samples")));
            }
            let max = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean = window.iter().sum::<f64>() / window.len() as f64;
            Ok(SegmentReport {
                start,
                end,
                max_nondimensional: max,
                mean_nondimensional: mean,
                self_powered: max <= 1.0,
            })
        })
        .collect()
}

/// Rotor speeds (rad/s) of a fore/aft motor pair producing total thrust
/// `force` and pitching moment `moment`.
pub fn two_motor_allocation(force: f64, moment: f64, lift_constant: f64, arm_length: f64) -> Result<[f64; 2]> {
    if !(lift_constant > 0.0 && arm_length > 0.0) {
        return Err(domain("lift constant and arm length must be positive"));
    }
    let sum = force / lift_constant;
    let diff = moment / (lift_constant * arm_length);
    let sq = [(sum + diff) / 2.0, (sum - diff) / 2.0];
    if sq.iter().any(|v| *v < 0.0) {
        return Err(domain(format!("wrench ({force} N, {moment} N·m) needs reversed rotor thrust")));
    }
    Ok(sq.map(sqrt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn pid_zero_error_gives_zero() {
        let gains = PidGains::new(5.0, 2.0, 1.0);
        let mut s = PidState::default();
        for _ in 0..10 {
            let (out, next) = pid_step(&s, 0.0, 0.01, &gains, 100.0).unwrap();
            assert_eq!(out, 0.0);
            s = next;
        }
    }

    #[test]
    fn pid_proportional() {
        let (out, _) = pid_step(&PidState::default(), 3.0, 0.01, &PidGains::new(2.0, 0.0, 0.0), 100.0).unwrap();
        assert_eq!(out, 6.0);
    }

    #[test]
    fn pid_integral_of_constant_error() {
        let gains = PidGains::new(0.0, 1.0, 0.0);
        let mut s = PidState::default();
        let mut out = 0.0;
        for _ in 0..2000 {
            (out, s) = pid_step(&s, 1.0, 1e-3, &gains, 100.0).unwrap();
        }
        assert!(close(out, 2.0, 1e-3), "{out}");
    }

    #[test]
    fn pid_derivative_backward_difference() {
        let gains = PidGains::new(0.0, 0.0, 1.0);
        let (first, s) = pid_step(&PidState::default(), 1.0, 0.5, &gains, 100.0).unwrap();
        assert_eq!(first, 0.0);
        let (second, _) = pid_step(&s, 2.0, 0.5, &gains, 100.0).unwrap();
        assert_eq!(second, 2.0);
    }

    #[test]
    fn pid_anti_windup_bounds_integral() {
        let gains = PidGains::new(1.0, 4.0, 0.0);
        let mut s = PidState::default();
        for _ in 0..5000 {
            let (out, next) = pid_step(&s, 50.0, 1e-2, &gains, 10.0).unwrap();
            assert!(out.abs() <= 10.0);
            assert!(next.integral.abs() <= 10.0 / 4.0 + 1e-12);
            s = next;
        }
    }

    #[test]
    fn pid_rejects_bad_dt() {
        assert!(pid_step(&PidState::default(), 1.0, 0.0, &PidGains::default(), 1.0).is_err());
    }

    #[test]
    fn reference_examples() {
        assert_eq!(reference_value(&ReferenceSignal::Ramp { slope: 5.0 }, 2.0), 10.0);
        let step = ReferenceSignal::step(1.0);
        assert_eq!(reference_value(&step, 0.0), 0.0);
        assert_eq!(reference_value(&step, 1e-9), 1.0);
        let pw = ReferenceSignal::PiecewiseLinear(vec![(0.0, 0.0), (2.0, 4.0), (5.0, 4.0)]);
        assert_eq!(reference_value(&pw, 1.0), 2.0);
        assert_eq!(reference_value(&pw, 9.0), 4.0);
        assert!(ReferenceSignal::PiecewiseLinear(vec![(0.0, 0.0), (0.0, 1.0)]).validate().is_err());
    }

    #[test]
    fn metrics_first_order() {
        let series: Vec<(f64, f64)> = (0..=10_000)
            .map(|k| {
                let t = k as f64 * 1e-3;
                (t, 1.0 - (-t).exp())
            })
            .collect();
        let m = performance_metrics(&series, &ReferenceSignal::step(1.0)).unwrap();
        assert!(close(m.rise_time.unwrap(), 9f64.ln(), 1e-4));
        assert_eq!(m.overshoot, Some(0.0));
        assert!(close(m.settling_time.unwrap(), 50f64.ln(), 2e-3));
    }

    #[test]
    fn metrics_perfect_tracking() {
        let series: Vec<(f64, f64)> = (0..=100).map(|k| (k as f64 * 1e-3, if k == 0 { 0.0 } else { 1.0 })).collect();
        let m = performance_metrics(&series, &ReferenceSignal::step(1.0)).unwrap();
        assert!(m.rise_time.unwrap() < 1e-3);
        assert_eq!(m.overshoot, Some(0.0));
    }

    #[test]
    fn metrics_overshoot_and_unsettled() {
        let series = vec![(0.0, 0.0), (1.0, 1.2), (2.0, 0.9), (3.0, 1.1)];
        let m = performance_metrics(&series, &ReferenceSignal::step(1.0)).unwrap();
        assert!(close(m.overshoot.unwrap(), 0.2, 1e-12));
        assert_eq!(m.peak_time, Some(1.0));
        assert_eq!(m.settling_time, None);
    }

    #[test]
    fn metrics_on_ramp_only_report_error() {
        let series = vec![(0.0, 0.0), (1.0, 0.9)];
        let m = performance_metrics(&series, &ReferenceSignal::Ramp { slope: 1.0 }).unwrap();
        assert!(m.overshoot.is_none() && m.rise_time.is_none());
        assert!(close(m.steady_state_error.unwrap(), 0.1, 1e-12));
        assert!(performance_metrics(&[], &ReferenceSignal::step(1.0)).is_err());
    }

    #[test]
    fn allocation_round_trip() {
        let (k, l) = (0.02, 1.65);
        let w = two_motor_allocation(40.0, 5.0, k, l).unwrap();
        assert!(close(k * w[0] * w[0] + k * w[1] * w[1], 40.0, 1e-9));
        assert!(close(k * l * (w[0] * w[0] - w[1] * w[1]), 5.0, 1e-9));
        assert!(two_motor_allocation(1.0, 100.0, k, l).is_err());
    }
}
