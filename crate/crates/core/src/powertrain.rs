//! DC motor electromechanics, drive/regeneration power, PWM duty-cycle power,
//! the single-diode photovoltaic cell and bulk solar generation.
//!
//! Armature inductance is neglected in every power computation.

use alloc::vec::Vec;

use libm::exp;

use crate::error::{config, domain, Error, Result};

/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602e-19;
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.381e-23;
/// Standard surface irradiance, W/m².
pub const STANDARD_IRRADIANCE: f64 = 1000.0;
/// Absolute tolerance on the PV current root, A.
pub const PV_CURRENT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MotorParams {
    /// N·m/A.
    pub torque_constant: f64,
    /// V·s/rad.
    pub voltage_constant: f64,
    /// Armature resistance, Ω.
    pub resistance: f64,
    /// Armature inductance, H. Kept for reference only.
    pub inductance: f64,
    /// kg·m².
    pub rotor_inertia: f64,
    /// N·m·s/rad.
    pub prop_damping: f64,
    /// V.
    pub supply_voltage: f64,
}

impl MotorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.torque_constant > 0.0 && self.voltage_constant > 0.0 && self.resistance > 0.0) {
            return Err(config("motor torque constant, voltage constant and resistance must be positive"));
        }
        if !(self.rotor_inertia > 0.0) {
            return Err(config("rotor inertia must be positive"));
        }
        if !(self.prop_damping >= 0.0 && self.inductance >= 0.0) {
            return Err(config("damping and inductance must be non-negative"));
        }
        Ok(())
    }

    /// In SI units the torque and back-EMF constants coincide. Returns false
    /// when they differ by more than 1e-9 relative.
    pub fn constants_consistent(&self) -> bool {
        (self.torque_constant - self.voltage_constant).abs()
            <= 1e-9 * self.torque_constant.abs().max(self.voltage_constant.abs())
    }
}

/// Armature current direction relative to the supply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriveMode {
    Drive,
    Regenerate,
}

impl DriveMode {
    pub fn sign(self) -> f64 {
        match self {
            DriveMode::Drive => 1.0,
            DriveMode::Regenerate => -1.0,
        }
    }
}

impl TryFrom<f64> for DriveMode {
    type Error = Error;

    fn try_from(alpha: f64) -> Result<Self> {
        if alpha == 1.0 {
            Ok(DriveMode::Drive)
        } else if alpha == -1.0 {
            Ok(DriveMode::Regenerate)
        } else {
            Err(domain("drive mode must be +1 (drive) or -1 (regenerate)"))
        }
    }
}

/// Rotor angular acceleration, rad/s².
pub fn motor_speed_derivative(omega: f64, armature_current: f64, params: &MotorParams) -> f64 {
    (params.torque_constant * armature_current - params.prop_damping * omega) / params.rotor_inertia
}

/// Shaft torque for an applied voltage; negative when back-EMF exceeds the supply.
pub fn torque_from_voltage(voltage: f64, omega: f64, params: &MotorParams) -> f64 {
    params.torque_constant * (voltage - params.voltage_constant * omega) / params.resistance
}

/// Electrical power drawn from the source to produce `torque` at `omega`.
pub fn motor_power(torque: f64, omega: f64, params: &MotorParams) -> f64 {
    let current = torque / params.torque_constant;
    (params.resistance * current + params.voltage_constant * omega) * current
}

/// Battery-side power with a PV current contribution. Negative values mean
/// the battery is being charged.
pub fn motor_power_with_pv(
    torque: f64,
    omega: f64,
    mode: DriveMode,
    pv_current: f64,
    params: &MotorParams,
) -> Result<f64> {
    if !(pv_current >= 0.0) {
        return Err(domain("PV current must be non-negative"));
    }
    let current = torque / params.torque_constant;
    let voltage = params.resistance * current + params.voltage_constant * omega;
    Ok(voltage * (mode.sign() * current - pv_current))
}

/// Average power for a PWM duty cycle.
pub fn duty_cycle_power(duty: f64, voltage: f64, current: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&duty) {
        return Err(domain("duty cycle must lie in [0, 1]"));
    }
    Ok(duty * voltage * current)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PvCellParams {
    /// A.
    pub short_circuit_current: f64,
    /// Dark saturation current, A.
    pub saturation_current: f64,
    /// Ω.
    pub series_resistance: f64,
    /// Ω. May be infinite.
    pub shunt_resistance: f64,
    /// Diode ideality factor in [1, 2].
    pub ideality: f64,
    /// Junction temperature, K.
    pub temperature: f64,
}

impl Default for PvCellParams {
    /// Monocrystalline cell fitted to a 0.58 V / 5.93 A operating point and a
    /// 3.42 W maximum power point (see `scripts/calibrate_pv_cell.py`).
    fn default() -> Self {
        Self {
            short_circuit_current: 5.95,
            saturation_current: 1.668685e-9,
            series_resistance: 0.0,
            shunt_resistance: 10.0,
            ideality: 1.3,
            temperature: 298.15,
        }
    }
}

impl PvCellParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.short_circuit_current > 0.0 && self.saturation_current > 0.0) {
            return Err(config("short-circuit and saturation currents must be positive"));
        }
        if !(self.series_resistance >= 0.0 && self.shunt_resistance > 0.0) {
            return Err(config("series resistance must be non-negative and shunt resistance positive"));
        }
        if !(1.0..=2.0).contains(&self.ideality) {
            return Err(config("ideality factor must lie in [1, 2]"));
        }
        if !(self.temperature > 0.0) {
            return Err(config("junction temperature must be positive"));
        }
        Ok(())
    }

    /// n·k_B·T/q, V.
    pub fn thermal_voltage(&self) -> f64 {
        self.ideality * BOLTZMANN * self.temperature / ELEMENTARY_CHARGE
    }

    /// Residual I_SC − I_d − I_SH − I of the implicit cell equation.
    fn residual(&self, voltage: f64, current: f64) -> f64 {
        let junction = voltage + current * self.series_resistance;
        let diode = self.saturation_current * (exp(junction / self.thermal_voltage()) - 1.0);
        let shunt = if self.shunt_resistance.is_infinite() { 0.0 } else { junction / self.shunt_resistance };
        self.short_circuit_current - diode - shunt - current
    }
}

/// Solution of the implicit cell equation at a terminal voltage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PvOperatingPoint {
    pub current: f64,
    /// True when the voltage is at or beyond open circuit and the current was clamped to zero.
    pub open_circuit: bool,
}

/// Load current at terminal voltage `voltage` by bisection on [0, 1.001·I_SC].
pub fn pv_current(voltage: f64, cell: &PvCellParams) -> Result<PvOperatingPoint> {
    if !(voltage >= 0.0 && voltage.is_finite()) {
        return Err(domain("PV voltage must be non-negative"));
    }
    let mut lo = 0.0;
    let mut hi = 1.001 * cell.short_circuit_current;
    if cell.residual(voltage, lo) <= 0.0 {
        return Ok(PvOperatingPoint { current: 0.0, open_circuit: true });
    }
    // The residual is strictly decreasing in current, so a root in the bracket
    // exists whenever g(0) > 0 and g(hi) < 0.
    if cell.residual(voltage, hi) > 0.0 {
        return Err(Error::Numeric { what: "pv_current bracket".into(), residual: cell.residual(voltage, hi) });
    }
    for _ in 0..200 {
        if hi - lo <= PV_CURRENT_TOLERANCE {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if cell.residual(voltage, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if hi - lo > PV_CURRENT_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        return Err(Error::Numeric { what: "pv_current bisection".into(), residual: cell.residual(voltage, mid) });
    }
    Ok(PvOperatingPoint { current: 0.5 * (lo + hi), open_circuit: false })
}

/// Voltage at which the load current vanishes.
pub fn open_circuit_voltage(cell: &PvCellParams) -> Result<f64> {
    let mut lo = 0.0;
    let mut hi = cell.thermal_voltage();
    while cell.residual(hi, 0.0) > 0.0 {
        hi *= 2.0;
        if !hi.is_finite() || hi > 1e6 {
            return Err(Error::Numeric {
                what: "open_circuit_voltage bracket".into(),
                residual: cell.residual(hi, 0.0),
            });
        }
    }
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if cell.residual(mid, 0.0) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IvPoint {
    pub voltage: f64,
    pub current: f64,
    pub power: f64,
}

/// Evenly spaced I-V/P-V samples on [0, v_max].
pub fn pv_iv_curve(cell: &PvCellParams, v_max: f64, samples: usize) -> Result<Vec<IvPoint>> {
    if samples < 2 {
        return Err(domain("an I-V curve needs at least two samples"));
    }
    if !(v_max > 0.0) {
        return Err(domain("maximum voltage must be positive"));
    }
    let step = v_max / (samples - 1) as f64;
    (0..samples)
        .map(|k| {
            let voltage = if k + 1 == samples { v_max } else { k as f64 * step };
            let current = pv_current(voltage, cell)?.current;
            Ok(IvPoint { voltage, current, power: voltage * current })
        })
        .collect()
}

/// Sampled point of maximum power.
pub fn max_power_point(curve: &[IvPoint]) -> Option<IvPoint> {
    curve.iter().copied().fold(None, |best: Option<IvPoint>, p| match best {
        Some(b) if b.power >= p.power => Some(b),
        _ => Some(p),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PvArrayConfig {
    pub cell: PvCellParams,
    pub series_count: u32,
    pub parallel_count: u32,
    /// m².
    pub total_area: f64,
    pub overall_efficiency: f64,
    /// W/m².
    pub irradiance: f64,
}

impl PvArrayConfig {
    /// Single-string array with the default cell.
    pub fn bulk(total_area: f64, overall_efficiency: f64) -> Self {
        Self {
            cell: PvCellParams::default(),
            series_count: 1,
            parallel_count: 1,
            total_area,
            overall_efficiency,
            irradiance: STANDARD_IRRADIANCE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cell.validate()?;
        if self.series_count == 0 || self.parallel_count == 0 {
            return Err(config("series and parallel counts must be positive"));
        }
        if !(self.total_area > 0.0 && self.total_area.is_finite()) {
            return Err(config("PV area must be positive"));
        }
        if !(self.overall_efficiency > 0.0 && self.overall_efficiency < 1.0) {
            return Err(config("PV efficiency must lie in (0, 1)"));
        }
        if !(self.irradiance >= 0.0 && self.irradiance.is_finite()) {
            return Err(config("irradiance must be non-negative"));
        }
        Ok(())
    }
}

/// Bulk solar generation irradiance·η·area, W.
pub fn generated_power(array: &PvArrayConfig) -> f64 {
    array.irradiance * array.overall_efficiency * array.total_area
}

/// P_c / P_g.
pub fn nondimensional_power(consumed: f64, generated: f64) -> Result<f64> {
    if !(generated > 0.0) {
        return Err(domain("generated power must be positive"));
    }
    Ok(consumed / generated)
}

/// Consumed, generated and nondimensional power at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSample {
    pub consumed: f64,
    pub generated: f64,
    pub nondimensional: f64,
}

impl PowerSample {
    pub fn new(consumed: f64, generated: f64) -> Result<Self> {
        Ok(Self { consumed, generated, nondimensional: nondimensional_power(consumed, generated)? })
    }

    pub fn is_self_powered(&self) -> bool {
        self.nondimensional <= 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn motor() -> MotorParams {
        MotorParams {
            torque_constant: 0.05,
            voltage_constant: 0.05,
            resistance: 0.5,
            inductance: 0.0,
            rotor_inertia: 1e-4,
            prop_damping: 2e-5,
            supply_voltage: 12.0,
        }
    }

    #[test]
    fn speed_derivative_examples() {
        let m = motor();
        let omega = 300.0;
        let steady = m.prop_damping * omega / m.torque_constant;
        assert!(motor_speed_derivative(omega, steady, &m).abs() < 1e-12);
        assert!((motor_speed_derivative(0.0, 1.0, &m) - 500.0).abs() < 1e-9);
        let undamped = MotorParams { prop_damping: 0.0, ..m };
        assert_eq!(motor_speed_derivative(1234.0, 0.0, &undamped), 0.0);
    }

    #[test]
    fn torque_examples() {
        let m = motor();
        assert_eq!(torque_from_voltage(12.0, 12.0 / 0.05, &m), 0.0);
        assert!((torque_from_voltage(12.0, 0.0, &m) - 1.2).abs() < 1e-12);
        assert!((torque_from_voltage(24.0, 0.0, &m) - 2.0 * torque_from_voltage(12.0, 0.0, &m)).abs() < 1e-12);
        assert!(torque_from_voltage(12.0, 400.0, &m) < 0.0);
    }

    #[test]
    fn motor_power_examples() {
        let m = motor();
        assert_eq!(motor_power(0.0, 100.0, &m), 0.0);
        assert!((motor_power(1.0, 100.0, &m) - 300.0).abs() < 1e-9);
        assert!((motor_power(0.7, 0.0, &m) - 0.5 * (0.7_f64 / 0.05).powi(2)).abs() < 1e-9);
    }

    #[test]
    fn pv_assisted_power_examples() {
        let m = motor();
        let drive = motor_power_with_pv(1.0, 100.0, DriveMode::Drive, 0.0, &m).unwrap();
        assert_eq!(drive, motor_power(1.0, 100.0, &m));
        let regen = motor_power_with_pv(1.0, 100.0, DriveMode::Regenerate, 0.0, &m).unwrap();
        assert!((regen + 300.0).abs() < 1e-9);
        let balanced = motor_power_with_pv(1.0, 100.0, DriveMode::Drive, 20.0, &m).unwrap();
        assert!(balanced.abs() < 1e-9);
        assert!(motor_power_with_pv(1.0, 100.0, DriveMode::Drive, -1.0, &m).is_err());
    }

    #[test]
    fn drive_mode_from_sign() {
        assert_eq!(DriveMode::try_from(1.0).unwrap(), DriveMode::Drive);
        assert_eq!(DriveMode::try_from(-1.0).unwrap(), DriveMode::Regenerate);
        assert!(matches!(DriveMode::try_from(0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn duty_cycle_examples() {
        assert_eq!(duty_cycle_power(0.0, 12.0, 5.0).unwrap(), 0.0);
        assert_eq!(duty_cycle_power(1.0, 12.0, 5.0).unwrap(), 60.0);
        assert_eq!(duty_cycle_power(0.5, 12.0, 5.0).unwrap(), 30.0);
        assert!(duty_cycle_power(1.01, 12.0, 5.0).is_err());
        assert!(duty_cycle_power(-0.01, 12.0, 5.0).is_err());
    }

    #[test]
    fn ideal_short_circuit() {
        let cell = PvCellParams { shunt_resistance: f64::INFINITY, ..Default::default() };
        let op = pv_current(0.0, &cell).unwrap();
        assert!((op.current - cell.short_circuit_current).abs() < 1e-8);
        assert!(!op.open_circuit);
    }

    #[test]
    fn open_circuit_gives_zero() {
        let cell = PvCellParams::default();
        let voc = open_circuit_voltage(&cell).unwrap();
        assert!(pv_current(voc, &cell).unwrap().current < 1e-8);
        let beyond = pv_current(voc + 0.1, &cell).unwrap();
        assert_eq!(beyond.current, 0.0);
        assert!(beyond.open_circuit);
    }

    #[test]
    fn pv_current_solves_the_implicit_equation() {
        let cell = PvCellParams { series_resistance: 0.02, ..Default::default() };
        for v in [0.0, 0.2, 0.45, 0.55, 0.6] {
            let i = pv_current(v, &cell).unwrap().current;
            // Residual slope magnitude is at least 1 A/A, so |g| bounds the current error.
            assert!(cell.residual(v, i).abs() < 1e-7, "v={v} residual={}", cell.residual(v, i));
        }
    }

    #[test]
    fn negative_voltage_rejected() {
        assert!(pv_current(-0.1, &PvCellParams::default()).is_err());
    }

    #[test]
    fn calibrated_cell_operating_point() {
        let i = pv_current(0.58, &PvCellParams::default()).unwrap().current;
        assert!((i - 5.93).abs() / 5.93 < 0.02, "I(0.58 V) = {i}");
    }

    #[test]
    fn iv_curve_endpoints_and_mpp() {
        let cell = PvCellParams::default();
        let voc = open_circuit_voltage(&cell).unwrap();
        let curve = pv_iv_curve(&cell, voc, 400).unwrap();
        assert!((curve[0].current - pv_current(0.0, &cell).unwrap().current).abs() < 1e-12);
        assert_eq!(curve[0].power, 0.0);
        assert!(curve.last().unwrap().power.abs() < 1e-6);
        let mpp = max_power_point(&curve).unwrap();
        assert!((mpp.power - 3.42).abs() / 3.42 < 0.05, "MPP {}", mpp.power);
        assert!(pv_iv_curve(&cell, voc, 1).is_err());
    }

    #[test]
    fn generated_power_examples() {
        let sphere = PvArrayConfig::bulk(core::f64::consts::PI * 1.25 * 1.25, 0.10);
        assert!((generated_power(&sphere) - 490.87).abs() < 0.01);
        let slab = PvArrayConfig::bulk(6.0, 0.20);
        assert!((generated_power(&slab) - 1200.0).abs() < 1e-9);
        let empty = PvArrayConfig { total_area: 0.0, ..slab };
        assert_eq!(generated_power(&empty), 0.0);
        assert!(empty.validate().is_err());
    }

    #[test]
    fn nondimensional_examples() {
        assert_eq!(nondimensional_power(490.87, 490.87).unwrap(), 1.0);
        assert_eq!(nondimensional_power(0.0, 490.87).unwrap(), 0.0);
        assert!((nondimensional_power(245.4, 490.87).unwrap() - 0.5).abs() < 1e-3);
        assert!(nondimensional_power(1.0, 0.0).is_err());
        let s = PowerSample::new(100.0, 200.0).unwrap();
        assert!(s.is_self_powered());
    }

    #[test]
    fn unit_mismatch_flagged() {
        let mut m = motor();
        assert!(m.constants_consistent());
        m.voltage_constant = 0.06;
        assert!(!m.constants_consistent());
    }
}
