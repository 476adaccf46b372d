//! TOML scenario files. Every physical key carries its unit as a suffix and
//! unknown keys are rejected.

use std::f64::consts::PI;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use selfpowered_core::control::{ControlScenario, PidGains, ReferenceSignal};
use selfpowered_core::dynamics::{
    LongitudinalState, VehicleParams, DEFAULT_AIR_DENSITY, DEFAULT_GRAVITY, DEFAULT_SPEED_CAP, DEFAULT_TIME_STEP,
};
use selfpowered_core::ouq::{BoundedInput, SearchBudget, DEFAULT_ITERATIONS, DEFAULT_STARTS};
use selfpowered_core::powertrain::{PvArrayConfig, PvCellParams, STANDARD_IRRADIANCE};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub vehicle: Option<VehicleSection>,
    pub pv: Option<PvSection>,
    pub control: Option<ControlSection>,
    pub simulation: Option<SimulationSection>,
    pub ouq: Option<OuqSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSection {
    pub mass_kg: f64,
    /// Isotropic inertia; ignored when `principal_inertia_kg_m2` is given.
    pub inertia_kg_m2: Option<f64>,
    pub principal_inertia_kg_m2: Option<[f64; 3]>,
    /// Spherical hull: sets every frontal area to π·r².
    pub hull_radius_m: Option<f64>,
    pub frontal_area_m2: Option<f64>,
    #[serde(default = "one")]
    pub drag_coefficient: f64,
    /// Defaults to the weight (neutral buoyancy).
    pub buoyancy_n: Option<f64>,
    #[serde(default = "default_gravity")]
    pub gravity_m_s2: f64,
    #[serde(default = "default_density")]
    pub air_density_kg_m3: f64,
    #[serde(default)]
    pub rotational_damping_n_m_s: f64,
    #[serde(default = "default_speed_cap")]
    pub speed_cap_m_s: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PvSection {
    pub efficiency: f64,
    /// Defaults to the hull's projected area π·r².
    pub area_m2: Option<f64>,
    #[serde(default = "default_irradiance")]
    pub irradiance_w_m2: f64,
    #[serde(default = "one_u32")]
    pub series_count: u32,
    #[serde(default = "one_u32")]
    pub parallel_count: u32,
    pub cell: Option<CellSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSection {
    pub short_circuit_current_a: Option<f64>,
    pub saturation_current_a: Option<f64>,
    pub series_resistance_ohm: Option<f64>,
    pub shunt_resistance_ohm: Option<f64>,
    pub ideality: Option<f64>,
    pub temperature_k: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSection {
    #[serde(default)]
    pub kp: f64,
    #[serde(default)]
    pub ki: f64,
    #[serde(default)]
    pub kd: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    pub kind: String,
    pub amplitude: Option<f64>,
    pub time_s: Option<f64>,
    pub slope_per_s: Option<f64>,
    pub points: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    pub force_gains: GainsSection,
    pub pitch_gains: GainsSection,
    /// Defaults to twice the weight.
    pub force_limit_n: Option<f64>,
    /// Defaults to the weight times one metre.
    pub moment_limit_n_m: Option<f64>,
    pub power_limit_ratio: Option<f64>,
    #[serde(default)]
    pub signed_power: bool,
    pub x_reference: Option<ReferenceSection>,
    pub z_reference: Option<ReferenceSection>,
    pub theta_reference: Option<ReferenceSection>,
    /// Inclusive (start, end) windows; defaults to the whole horizon.
    pub duty_cycles_s: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub horizon_s: f64,
    #[serde(default = "default_dt")]
    pub dt_s: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSection {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    #[serde(default = "two")]
    pub support_points: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuqSection {
    /// `sum` or `closed_loop_pnon_max`.
    pub response: String,
    #[serde(default = "one")]
    pub mean_constraint: f64,
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    pub seed: Option<u64>,
    pub inputs: Vec<InputSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: Option<String>,
    #[serde(default = "default_format")]
    pub format: String,
    #[serde(default = "default_timeseries")]
    pub timeseries: String,
    #[serde(default = "default_metrics")]
    pub metrics: String,
    #[serde(default = "default_duty")]
    pub duty_cycles: String,
    #[serde(default = "default_gain_map")]
    pub gain_map: String,
    #[serde(default = "default_ouq_report")]
    pub ouq_report: String,
    #[serde(default = "default_manifest")]
    pub manifest: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        toml::from_str("").expect("output defaults")
    }
}

fn one() -> f64 {
    1.0
}
fn one_u32() -> u32 {
    1
}
fn two() -> usize {
    2
}
fn default_gravity() -> f64 {
    DEFAULT_GRAVITY
}
fn default_density() -> f64 {
    DEFAULT_AIR_DENSITY
}
fn default_speed_cap() -> f64 {
    DEFAULT_SPEED_CAP
}
fn default_irradiance() -> f64 {
    STANDARD_IRRADIANCE
}
fn default_dt() -> f64 {
    DEFAULT_TIME_STEP
}
fn default_starts() -> usize {
    DEFAULT_STARTS
}
fn default_iterations() -> usize {
    DEFAULT_ITERATIONS
}
fn default_format() -> String {
    "csv".into()
}
fn default_timeseries() -> String {
    "timeseries.csv".into()
}
fn default_metrics() -> String {
    "metrics.txt".into()
}
fn default_duty() -> String {
    "duty_cycles.csv".into()
}
fn default_gain_map() -> String {
    "gain_map.csv".into()
}
fn default_ouq_report() -> String {
    "ouq_report.txt".into()
}
fn default_manifest() -> String {
    "manifest.txt".into()
}

/// Parsed scenario plus the raw bytes it came from.
pub struct LoadedScenario {
    pub file: ScenarioFile,
    pub raw: Vec<u8>,
}

pub fn load(path: &Path) -> Result<LoadedScenario> {
    let raw = std::fs::read(path).with_context(|| format!("cannot read scenario {}", path.display()))?;
    let text = std::str::from_utf8(&raw).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let file = parse(text).with_context(|| format!("in scenario {}", path.display()))?;
    Ok(LoadedScenario { file, raw })
}

pub fn parse(text: &str) -> Result<ScenarioFile> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| anyhow!("{e}"))?;
    if file.output.format != "csv" {
        bail!("output.format '{}' is not supported (only csv)", file.output.format);
    }
    Ok(file)
}

impl ScenarioFile {
    fn section<'a, T>(value: &'a Option<T>, name: &str) -> Result<&'a T> {
        value.as_ref().ok_or_else(|| anyhow!("scenario is missing the [{name}] section"))
    }

    pub fn vehicle_params(&self) -> Result<VehicleParams> {
        let v = Self::section(&self.vehicle, "vehicle")?;
        let inertia = match (v.principal_inertia_kg_m2, v.inertia_kg_m2) {
            (Some(p), _) => p,
            (None, Some(i)) => [i; 3],
            (None, None) => bail!("vehicle needs inertia_kg_m2 or principal_inertia_kg_m2"),
        };
        let area = match (v.frontal_area_m2, v.hull_radius_m) {
            (Some(a), _) => a,
            (None, Some(r)) => PI * r * r,
            (None, None) => bail!("vehicle needs frontal_area_m2 or hull_radius_m"),
        };
        let mut p = VehicleParams::neutrally_buoyant(v.mass_kg, inertia);
        p.gravity = v.gravity_m_s2;
        p.buoyancy = v.buoyancy_n.unwrap_or(v.mass_kg * v.gravity_m_s2);
        p.drag_coeff = [v.drag_coefficient; 3];
        p.frontal_area = [area; 3];
        p.air_density = v.air_density_kg_m3;
        p.rotational_damping = v.rotational_damping_n_m_s;
        p.speed_cap = v.speed_cap_m_s;
        p.validate()?;
        Ok(p)
    }

    pub fn cell_params(&self) -> PvCellParams {
        let d = PvCellParams::default();
        let Some(c) = self.pv.as_ref().and_then(|p| p.cell.as_ref()) else {
            return d;
        };
        PvCellParams {
            short_circuit_current: c.short_circuit_current_a.unwrap_or(d.short_circuit_current),
            saturation_current: c.saturation_current_a.unwrap_or(d.saturation_current),
            series_resistance: c.series_resistance_ohm.unwrap_or(d.series_resistance),
            shunt_resistance: c.shunt_resistance_ohm.unwrap_or(d.shunt_resistance),
            ideality: c.ideality.unwrap_or(d.ideality),
            temperature: c.temperature_k.unwrap_or(d.temperature),
        }
    }

    pub fn pv_array(&self) -> Result<PvArrayConfig> {
        let pv = Self::section(&self.pv, "pv")?;
        let area = match (pv.area_m2, self.vehicle.as_ref().and_then(|v| v.hull_radius_m)) {
            (Some(a), _) => a,
            (None, Some(r)) => PI * r * r,
            (None, None) => bail!("pv needs area_m2 (or vehicle.hull_radius_m)"),
        };
        let array = PvArrayConfig {
            cell: self.cell_params(),
            series_count: pv.series_count,
            parallel_count: pv.parallel_count,
            total_area: area,
            overall_efficiency: pv.efficiency,
            irradiance: pv.irradiance_w_m2,
        };
        array.validate()?;
        Ok(array)
    }

    pub fn control_scenario(&self) -> Result<ControlScenario> {
        let c = Self::section(&self.control, "control")?;
        let sim = Self::section(&self.simulation, "simulation")?;
        let gains = |g: &GainsSection| PidGains::new(g.kp, g.ki, g.kd);
        let mut s = ControlScenario::new(
            self.vehicle_params()?,
            self.pv_array()?,
            gains(&c.force_gains),
            gains(&c.pitch_gains),
            sim.horizon_s,
        );
        s.dt = sim.dt_s;
        s.force_limit = c.force_limit_n.unwrap_or(s.force_limit);
        s.moment_limit = c.moment_limit_n_m.unwrap_or(s.moment_limit);
        s.power_limit_ratio = c.power_limit_ratio;
        s.signed_power = c.signed_power;
        s.x_reference = reference(c.x_reference.as_ref(), "x_reference")?;
        s.z_reference = reference(c.z_reference.as_ref(), "z_reference")?;
        s.theta_reference = reference(c.theta_reference.as_ref(), "theta_reference")?;
        s.initial = LongitudinalState::default();
        s.validate()?;
        Ok(s)
    }

    pub fn duty_cycles(&self, horizon: f64) -> Vec<(f64, f64)> {
        match self.control.as_ref().and_then(|c| c.duty_cycles_s.as_ref()) {
            Some(list) => list.iter().map(|w| (w[0], w[1])).collect(),
            None => vec![(0.0, horizon)],
        }
    }

    pub fn ouq_inputs(&self) -> Result<Vec<BoundedInput>> {
        let o = Self::section(&self.ouq, "ouq")?;
        let inputs: Vec<BoundedInput> =
            o.inputs.iter().map(|i| BoundedInput::new(i.name.clone(), i.lower, i.upper, i.support_points)).collect();
        for i in &inputs {
            i.validate()?;
        }
        Ok(inputs)
    }

    pub fn search_budget(&self, seed: u64) -> Result<SearchBudget> {
        let o = Self::section(&self.ouq, "ouq")?;
        Ok(SearchBudget { starts: o.starts, iterations: o.iterations, seed })
    }
}

fn reference(section: Option<&ReferenceSection>, name: &str) -> Result<ReferenceSignal> {
    let Some(r) = section else {
        return Ok(ReferenceSignal::zero());
    };
    let need = |v: Option<f64>, key: &str| v.ok_or_else(|| anyhow!("control.{name} ({}) needs '{key}'", r.kind));
    let signal = match r.kind.as_str() {
        "step" => ReferenceSignal::Step { amplitude: need(r.amplitude, "amplitude")?, time: r.time_s.unwrap_or(0.0) },
        "ramp" => ReferenceSignal::Ramp { slope: need(r.slope_per_s, "slope_per_s")? },
        "piecewise" => {
            let points = r.points.as_ref().ok_or_else(|| anyhow!("control.{name} (piecewise) needs 'points'"))?;
            ReferenceSignal::PiecewiseLinear(points.iter().map(|p| (p[0], p[1])).collect())
        }
        other => bail!("control.{name}: unknown kind '{other}' (expected step, ramp or piecewise)"),
    };
    signal.validate()?;
    Ok(signal)
}

/// Apply a named closed-loop parameter to a scenario copy.
pub fn set_parameter(s: &mut ControlScenario, name: &str, value: f64) -> Result<()> {
    match name {
        "force_kp" => s.gains_force.kp = value,
        "force_ki" => s.gains_force.ki = value,
        "force_kd" => s.gains_force.kd = value,
        "pitch_kp" => s.gains_pitch.kp = value,
        "pitch_ki" => s.gains_pitch.ki = value,
        "pitch_kd" => s.gains_pitch.kd = value,
        "efficiency" => s.array.overall_efficiency = value,
        "drag_coefficient" => s.vehicle.drag_coeff = [value; 3],
        other => bail!(
            "unknown closed-loop input '{other}' (expected force_kp, force_ki, force_kd, pitch_kp, pitch_ki, pitch_kd, efficiency or drag_coefficient)"
        ),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[vehicle]
mass_kg = 11.3
inertia_kg_m2 = 2.76
hull_radius_m = 1.25

[pv]
efficiency = 0.1

[control]
force_gains = { kp = 1.0, kd = 2.0 }
pitch_gains = { kp = 3.0 }
force_limit_n = 100.0
moment_limit_n_m = 10.0
z_reference = { kind = "step", amplitude = 1.0 }

[simulation]
horizon_s = 2.0
"#;

    #[test]
    fn minimal_scenario_builds() {
        let f = parse(MINIMAL).unwrap();
        let s = f.control_scenario().unwrap();
        assert_eq!(s.gains_force, PidGains::new(1.0, 0.0, 2.0));
        assert!((s.array.total_area - PI * 1.5625).abs() < 1e-12);
        assert_eq!(s.dt, 1e-3);
        assert_eq!(f.output.timeseries, "timeseries.csv");
        assert_eq!(f.duty_cycles(2.0), vec![(0.0, 2.0)]);
    }

    #[test]
    fn unknown_key_reports_location() {
        let bad = MINIMAL.replace("mass_kg", "mass");
        let err = format!("{:#}", parse(&bad).unwrap_err());
        assert!(err.contains("line"), "{err}");
        assert!(err.contains("mass"), "{err}");
    }

    #[test]
    fn missing_section_is_named() {
        let f = parse("[pv]\nefficiency = 0.1\narea_m2 = 1.0\n").unwrap();
        let err = f.control_scenario().unwrap_err().to_string();
        assert!(err.contains("[control]"), "{err}");
    }

    #[test]
    fn reference_kinds() {
        let r = ReferenceSection {
            kind: "ramp".into(),
            amplitude: None,
            time_s: None,
            slope_per_s: Some(5.0),
            points: None,
        };
        assert_eq!(reference(Some(&r), "x").unwrap(), ReferenceSignal::Ramp { slope: 5.0 });
        let bad = ReferenceSection { kind: "sine".into(), ..r };
        assert!(reference(Some(&bad), "x").is_err());
    }
}
