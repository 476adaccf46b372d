//! Closed-form solar-powered cruise speed for cuboid and ellipsoid hulls,
//! updated aspect ratios for partial PV coverage or changed drag, and the
//! acceleration/velocity self-powered frontier.
//!
//! Every speed reduces to `(irradiance·η·ratio / (½·ρ·cd_max))^(1/3)` where
//! `ratio` is L/b (cuboid) or L/D (ellipsoid).

use alloc::vec::Vec;
use core::f64::consts::PI;

use libm::cbrt;

use crate::dynamics::DEFAULT_AIR_DENSITY;
use crate::error::{config, domain, Error, Result};
use crate::powertrain::STANDARD_IRRADIANCE;

const CD_MIN: f64 = 0.001;
const CD_MAX: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HullShape {
    Cuboid,
    Ellipsoid,
}

impl HullShape {
    /// Drag coefficient used as the upper bound in the reference charts.
    pub fn reference_cd_max(self) -> f64 {
        match self {
            HullShape::Cuboid => 2.0,
            HullShape::Ellipsoid => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HullDims {
    /// Width a, height b, length L, m.
    Cuboid { width: f64, height: f64, length: f64 },
    /// Height D, width b, length L, m.
    Ellipsoid { height: f64, width: f64, length: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HullGeometry {
    pub dims: HullDims,
    pub cd_max: f64,
    pub cd_actual: f64,
}

impl HullGeometry {
    pub fn cuboid(width: f64, height: f64, length: f64, cd_max: f64, cd_actual: f64) -> Self {
        Self { dims: HullDims::Cuboid { width, height, length }, cd_max, cd_actual }
    }

    pub fn ellipsoid(height: f64, width: f64, length: f64, cd_max: f64, cd_actual: f64) -> Self {
        Self { dims: HullDims::Ellipsoid { height, width, length }, cd_max, cd_actual }
    }

    pub fn shape(&self) -> HullShape {
        match self.dims {
            HullDims::Cuboid { .. } => HullShape::Cuboid,
            HullDims::Ellipsoid { .. } => HullShape::Ellipsoid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (x, y, z) = match self.dims {
            HullDims::Cuboid { width, height, length } => (width, height, length),
            HullDims::Ellipsoid { height, width, length } => (height, width, length),
        };
        if !(x > 0.0 && y > 0.0 && z > 0.0) || ![x, y, z].iter().all(|v| v.is_finite()) {
            return Err(config("hull dimensions must be positive"));
        }
        for cd in [self.cd_max, self.cd_actual] {
            if !(cd > CD_MIN && cd <= CD_MAX) {
                return Err(config("drag coefficients must lie in (0.001, 5]"));
            }
        }
        Ok(())
    }

    /// Frontal area facing the flow: a·b or π·b·D/4.
    pub fn frontal_area(&self) -> f64 {
        match self.dims {
            HullDims::Cuboid { width, height, .. } => width * height,
            HullDims::Ellipsoid { height, width, .. } => PI * width * height / 4.0,
        }
    }

    /// Top surface (cuboid) or projected planform (ellipsoid) area.
    pub fn top_area(&self) -> f64 {
        match self.dims {
            HullDims::Cuboid { width, length, .. } => width * length,
            HullDims::Ellipsoid { width, length, .. } => PI * width * length / 4.0,
        }
    }

    /// L/b or L/D.
    pub fn aspect_ratio(&self) -> f64 {
        match self.dims {
            HullDims::Cuboid { height, length, .. } => length / height,
            HullDims::Ellipsoid { height, length, .. } => length / height,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedQuery {
    pub geometry: HullGeometry,
    pub efficiency: f64,
    /// m². `None` means the full top or projected area is covered.
    pub pv_area: Option<f64>,
    pub air_density: f64,
    pub irradiance: f64,
}

impl SpeedQuery {
    pub fn new(geometry: HullGeometry, efficiency: f64) -> Self {
        Self { geometry, efficiency, pv_area: None, air_density: DEFAULT_AIR_DENSITY, irradiance: STANDARD_IRRADIANCE }
    }

    pub fn with_pv_area(mut self, area: f64) -> Self {
        self.pv_area = Some(area);
        self
    }

    fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if !(self.efficiency >= 0.0 && self.efficiency < 1.0) {
            return Err(config("efficiency must lie in [0, 1)"));
        }
        if let Some(a) = self.pv_area {
            if !(a > 0.0) {
                return Err(config("PV area must be positive"));
            }
        }
        if !(self.air_density > 0.0 && self.irradiance >= 0.0) {
            return Err(config("air density must be positive and irradiance non-negative"));
        }
        Ok(())
    }
}

/// Cruise speed at which bulk solar power balances drag power for a given ratio.
pub fn speed_from_ratio(ratio: f64, efficiency: f64, cd_max: f64, air_density: f64, irradiance: f64) -> f64 {
    cbrt(irradiance * efficiency * ratio / (0.5 * air_density * cd_max))
}

/// Effective aspect ratio for partial PV coverage and/or a drag coefficient
/// other than `cd_max`.
pub fn updated_ratio(geometry: &HullGeometry, pv_area: f64) -> Result<f64> {
    if !(pv_area > 0.0) {
        return Err(domain("PV area must be positive"));
    }
    Ok(geometry.cd_max * pv_area / (geometry.cd_actual * geometry.frontal_area()))
}

fn speed(query: &SpeedQuery, expected: HullShape) -> Result<f64> {
    if query.geometry.shape() != expected {
        return Err(Error::Shape(alloc::format!("expected {expected:?} geometry, got {:?}", query.geometry.shape())));
    }
    query.validate()?;
    let g = &query.geometry;
    let power = query.irradiance * query.efficiency;
    match query.pv_area {
        None => Ok(cbrt(power * g.top_area() / (0.5 * query.air_density * g.cd_max * g.frontal_area()))),
        Some(area) => Ok(speed_from_ratio(
            updated_ratio(g, area)?,
            query.efficiency,
            g.cd_max,
            query.air_density,
            query.irradiance,
        )),
    }
}

pub fn cuboid_speed(query: &SpeedQuery) -> Result<f64> {
    speed(query, HullShape::Cuboid)
}

pub fn ellipsoid_speed(query: &SpeedQuery) -> Result<f64> {
    speed(query, HullShape::Ellipsoid)
}

/// Dispatch on the query's hull shape.
pub fn solar_speed(query: &SpeedQuery) -> Result<f64> {
    speed(query, query.geometry.shape())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableSpec {
    pub shape: HullShape,
    pub efficiencies: Vec<f64>,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub samples: usize,
    pub cd_max: f64,
    pub air_density: f64,
    pub irradiance: f64,
}

impl TableSpec {
    pub fn new(shape: HullShape, efficiencies: Vec<f64>, ratio_range: (f64, f64), samples: usize) -> Self {
        Self {
            shape,
            efficiencies,
            ratio_min: ratio_range.0,
            ratio_max: ratio_range.1,
            samples,
            cd_max: shape.reference_cd_max(),
            air_density: DEFAULT_AIR_DENSITY,
            irradiance: STANDARD_IRRADIANCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedRow {
    pub ratio: f64,
    pub efficiency: f64,
    pub speed: f64,
}

/// Speed grid, efficiency-major, ratios evenly spaced and inclusive of both ends.
pub fn speed_table(spec: &TableSpec) -> Result<Vec<SpeedRow>> {
    if spec.samples < 2 {
        return Err(domain("a speed table needs at least two ratio samples"));
    }
    if !(spec.ratio_min > 0.0 && spec.ratio_max > spec.ratio_min) {
        return Err(domain("ratio range must be positive and increasing"));
    }
    if spec.efficiencies.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(domain("efficiencies must lie in (0, 1)"));
    }
    if !(spec.cd_max > 0.0 && spec.air_density > 0.0 && spec.irradiance > 0.0) {
        return Err(config("drag coefficient, air density and irradiance must be positive"));
    }
    let step = (spec.ratio_max - spec.ratio_min) / (spec.samples - 1) as f64;
    let mut rows = Vec::with_capacity(spec.samples * spec.efficiencies.len());
    for &eta in &spec.efficiencies {
        for k in 0..spec.samples {
            let ratio = if k + 1 == spec.samples { spec.ratio_max } else { spec.ratio_min + k as f64 * step };
            let speed = speed_from_ratio(ratio, eta, spec.cd_max, spec.air_density, spec.irradiance);
            rows.push(SpeedRow { ratio, efficiency: eta, speed });
        }
    }
    Ok(rows)
}

/// Quadratic drag description for the frontier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DragModel {
    pub cd: f64,
    /// m².
    pub area: f64,
    /// kg/m³.
    pub air_density: f64,
}

impl DragModel {
    pub fn power(&self, v: f64) -> f64 {
        0.5 * self.air_density * self.cd * self.area * v * v * v
    }
}

/// Largest acceleration at speed `v` that keeps consumed power within `generated`.
pub fn accel_frontier(v: f64, mass: f64, drag: &DragModel, generated: f64) -> Result<f64> {
    if !(v > 0.0) {
        return Err(domain("frontier velocity must be positive"));
    }
    if !(generated > 0.0) {
        return Err(domain("generated power must be positive"));
    }
    if !(mass > 0.0) {
        return Err(domain("mass must be positive"));
    }
    Ok((generated - drag.power(v)) / (mass * v))
}

/// Speed at which drag alone consumes all generated power.
pub fn frontier_speed(drag: &DragModel, generated: f64) -> f64 {
    cbrt(generated / (0.5 * drag.air_density * drag.cd * drag.area))
}

/// Evenly spaced frontier samples on [v_min, v_max] as (velocity, acceleration).
pub fn accel_frontier_curve(
    v_min: f64,
    v_max: f64,
    samples: usize,
    mass: f64,
    drag: &DragModel,
    generated: f64,
) -> Result<Vec<(f64, f64)>> {
    if samples < 2 || !(v_max > v_min) {
        return Err(domain("frontier needs at least two samples over an increasing range"));
    }
    let step = (v_max - v_min) / (samples - 1) as f64;
    (0..samples)
        .map(|k| {
            let v = if k + 1 == samples { v_max } else { v_min + k as f64 * step };
            Ok((v, accel_frontier(v, mass, drag, generated)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn cuboid_full_coverage() {
        // 2 m wide, 1 m high, 3 m long gives L/b = 3.
        let g = HullGeometry::cuboid(2.0, 1.0, 3.0, 2.0, 2.0);
        let v = cuboid_speed(&SpeedQuery::new(g, 0.20)).unwrap();
        assert!(close(v, 500f64.cbrt(), 1e-12));
        assert!(close(v, 7.9, 0.05));
    }

    #[test]
    fn quadrotor_partial_coverage() {
        let g = HullGeometry::cuboid(2.0, 1.0, 3.0, 2.0, 1.0);
        assert!(close(updated_ratio(&g, 0.47).unwrap(), 0.47, 1e-12));
        let v = cuboid_speed(&SpeedQuery::new(g, 0.20).with_pv_area(0.47)).unwrap();
        assert!(close(v, 4.28, 0.01), "{v}");
    }

    #[test]
    fn zero_efficiency_gives_zero_speed() {
        let g = HullGeometry::cuboid(2.0, 1.0, 3.0, 2.0, 2.0);
        assert_eq!(cuboid_speed(&SpeedQuery::new(g, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn ellipsoid_examples() {
        let g = HullGeometry::ellipsoid(1.6, 2.5, 2.5, 1.0, 1.0);
        let v = ellipsoid_speed(&SpeedQuery::new(g, 0.05)).unwrap();
        assert!(close(v, 5.07, 0.005), "{v}");

        let ratio = updated_ratio(&g, 0.60).unwrap();
        assert!(close(ratio, 0.19, 0.005), "{ratio}");
        let v = ellipsoid_speed(&SpeedQuery::new(g, 0.05).with_pv_area(0.60)).unwrap();
        assert!(close(v, 2.52, 0.01), "{v}");
    }

    #[test]
    fn trirotor_and_low_drag() {
        let tri = HullGeometry::ellipsoid(1.10, 1.75, 2.0, 1.0, 0.5);
        let ratio = updated_ratio(&tri, 0.432).unwrap();
        assert!(close(ratio, 0.57, 0.005), "{ratio}");
        let v = ellipsoid_speed(&SpeedQuery::new(tri, 0.089).with_pv_area(0.432)).unwrap();
        assert!(close(v, 4.36, 0.04), "{v}");

        let slick = HullGeometry { cd_actual: 0.005, ..tri };
        let ratio = updated_ratio(&slick, 0.432).unwrap();
        assert!(close(ratio, 57.1, 0.1), "{ratio}");
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let g = HullGeometry::ellipsoid(1.0, 1.0, 2.0, 1.0, 1.0);
        assert!(matches!(cuboid_speed(&SpeedQuery::new(g, 0.1)), Err(Error::Shape(_))));
        let c = HullGeometry::cuboid(1.0, 1.0, 2.0, 2.0, 2.0);
        assert!(matches!(ellipsoid_speed(&SpeedQuery::new(c, 0.1)), Err(Error::Shape(_))));
    }

    #[test]
    fn full_coverage_matches_updated_ratio_path() {
        for g in [HullGeometry::cuboid(2.0, 1.3, 5.0, 2.0, 2.0), HullGeometry::ellipsoid(1.2, 2.0, 6.0, 1.0, 1.0)] {
            let direct = solar_speed(&SpeedQuery::new(g, 0.15)).unwrap();
            let via = solar_speed(&SpeedQuery::new(g, 0.15).with_pv_area(g.top_area())).unwrap();
            assert!(close(direct, via, 1e-12));
        }
    }

    #[test]
    fn table_rows_for_low_drag_ellipsoid() {
        let spec = TableSpec::new(HullShape::Ellipsoid, alloc::vec![0.05, 0.10], (1.0, 57.1), 2);
        let rows = speed_table(&spec).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[1].ratio, 57.1);
        assert!(close(rows[1].speed, 16.8197, 0.01), "{}", rows[1].speed);
        assert!(close(rows[3].speed, 21.1915, 0.01), "{}", rows[3].speed);
        assert!(speed_table(&TableSpec { samples: 1, ..spec }).is_err());
    }

    #[test]
    fn doubling_efficiency_scales_by_cube_root_two() {
        let a = speed_from_ratio(4.0, 0.1, 1.0, 1.2, 1000.0);
        let b = speed_from_ratio(4.0, 0.2, 1.0, 1.2, 1000.0);
        assert!(close(b / a, 2f64.cbrt(), 1e-12));
    }

    #[test]
    fn frontier_examples() {
        let drag = DragModel { cd: 1.0, area: 4.909, air_density: 1.2 };
        let a = accel_frontier(2.0, 11.3, &drag, 490.87).unwrap();
        assert!(close(a, 20.68, 0.005), "{a}");
        let vs = frontier_speed(&drag, 490.87);
        assert!(accel_frontier(vs, 11.3, &drag, 490.87).unwrap().abs() < 1e-9);
        assert!(accel_frontier(0.0, 11.3, &drag, 490.87).is_err());
        assert!(accel_frontier(1.5 * vs, 11.3, &drag, 490.87).unwrap() < 0.0);
    }
}
