use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use selfpowered_core::control::{self, PerformanceMetrics, SimResult, SimSample};
use selfpowered_core::ouq::{
    self, AdmissibleSet, BoundEstimate, BoundedInput, GainCell, GainConstraints, GainMap, ProductMeasure, DEFAULT_SEED,
};
use selfpowered_core::powertrain::{self, PvCellParams};
use selfpowered_core::solar_speed::{self, DragModel, HullGeometry, HullShape, SpeedQuery, TableSpec};
use selfpowered_core::Error as CoreError;

use crate::output::{num, opt, Csv, RunOutput};
use crate::scenario::{self, LoadedScenario};
use crate::{
    Cli, Command, FrontierArgs, GainMapArgs, OuqArgs, PvCurveArgs, ShapeArg, SimulateArgs, SolarSpeedArgs,
    EXIT_NOT_SELF_POWERED, EXIT_OK,
};

pub fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::SolarSpeed(a) => solar_speed_cmd(cli, a, out),
        Command::Simulate(a) => simulate_cmd(cli, a, out),
        Command::GainMap(a) => gain_map_cmd(cli, a, out),
        Command::OuqBounds(a) => ouq_cmd(cli, a, out),
        Command::PvCurve(a) => pv_curve_cmd(cli, a, out),
        Command::AccelFrontier(a) => frontier_cmd(cli, a, out),
    }
}

fn scenario_dir(cli: &Cli, loaded: &LoadedScenario, path: &Path) -> PathBuf {
    if let Some(d) = &cli.out_dir {
        return d.clone();
    }
    match &loaded.file.output.directory {
        Some(d) => path.parent().unwrap_or(Path::new(".")).join(d),
        None => PathBuf::from("."),
    }
}

fn seed(cli: &Cli, loaded: Option<&LoadedScenario>) -> u64 {
    cli.seed.or_else(|| loaded.and_then(|l| l.file.ouq.as_ref()).and_then(|o| o.seed)).unwrap_or(DEFAULT_SEED)
}

fn solar_speed_cmd(cli: &Cli, a: &SolarSpeedArgs, out: &mut dyn Write) -> Result<i32> {
    if !(a.eta > 0.0 && a.eta < 1.0) {
        bail!("--eta must lie in (0, 1), got {}", a.eta);
    }
    let shape = match a.shape {
        ShapeArg::Cuboid => HullShape::Cuboid,
        ShapeArg::Ellipsoid => HullShape::Ellipsoid,
    };
    let cd_max = a.cd_max.unwrap_or(shape.reference_cd_max());
    let cd_actual = a.cd_actual.unwrap_or(cd_max);
    let required: &[(&str, Option<f64>)] = match shape {
        HullShape::Cuboid => &[("--a", a.a), ("--b", a.b), ("--L", a.length)],
        HullShape::Ellipsoid => &[("--D", a.height_d), ("--b", a.b), ("--L", a.length)],
    };
    let missing: Vec<&str> = required.iter().filter(|(_, v)| v.is_none()).map(|(k, _)| *k).collect();
    let mut text = String::new();
    if missing.is_empty() {
        let geometry = match shape {
            HullShape::Cuboid => HullGeometry::cuboid(a.a.unwrap(), a.b.unwrap(), a.length.unwrap(), cd_max, cd_actual),
            HullShape::Ellipsoid => {
                HullGeometry::ellipsoid(a.height_d.unwrap(), a.b.unwrap(), a.length.unwrap(), cd_max, cd_actual)
            }
        };
        let mut q = SpeedQuery::new(geometry, a.eta);
        q.pv_area = a.a_pv;
        q.air_density = a.rho;
        q.irradiance = a.irradiance;
        let v = solar_speed::solar_speed(&q)?;
        if let Some(area) = a.a_pv {
            writeln!(text, "updated_ratio={}", num(solar_speed::updated_ratio(&geometry, area)?))?;
        }
        writeln!(text, "v_solar_mps={}", num(v))?;
    } else if !a.table {
        bail!("{:?} geometry needs {}", a.shape, missing.join(", "));
    }

    let mut run = match &cli.out_dir {
        Some(d) => Some(RunOutput::new(d, "solar-speed", format!("{a:?}").as_bytes(), seed(cli, None))?),
        None => None,
    };
    if a.table {
        let etas = if a.etas.is_empty() { vec![a.eta] } else { a.etas.clone() };
        let mut spec = TableSpec::new(shape, etas, (a.ratio_min, a.ratio_max), a.samples);
        spec.cd_max = cd_max;
        spec.air_density = a.rho;
        spec.irradiance = a.irradiance;
        let mut csv = Csv::new("ratio,eta,speed_mps");
        for r in solar_speed::speed_table(&spec)? {
            csv.floats(&[r.ratio, r.efficiency, r.speed]);
        }
        let csv = csv.into_string();
        match run.as_mut() {
            Some(r) => {
                r.write("speed_table.csv", &csv)?;
            }
            None => text.push_str(&csv),
        }
    }
    out.write_all(text.as_bytes())?;
    if let Some(r) = run {
        r.finish("manifest.txt")?;
    }
    Ok(EXIT_OK)
}

fn timeseries_csv(result: &SimResult) -> String {
    let mut csv = Csv::new(SimSample::CSV_HEADER);
    for s in &result.samples {
        csv.floats(&s.to_row());
    }
    csv.into_string()
}

fn metrics_block(name: &str, m: &PerformanceMetrics, text: &mut String) {
    let field = |v: Option<f64>| v.map(num).unwrap_or_else(|| "absent".into());
    let _ = writeln!(text, "[{name}]");
    let _ = writeln!(text, "rise_time_s={}", field(m.rise_time));
    let _ = writeln!(text, "settling_time_s={}", field(m.settling_time));
    let _ = writeln!(text, "overshoot={}", field(m.overshoot));
    let _ = writeln!(text, "peak_time_s={}", field(m.peak_time));
    let _ = writeln!(text, "steady_state_error={}", field(m.steady_state_error));
}

fn simulate_cmd(cli: &Cli, a: &SimulateArgs, out: &mut dyn Write) -> Result<i32> {
    let loaded = scenario::load(&a.scenario)?;
    let mut sc = loaded.file.control_scenario()?;
    let overrides = [
        ("force_kp", a.force_kp),
        ("force_ki", a.force_ki),
        ("force_kd", a.force_kd),
        ("pitch_kp", a.pitch_kp),
        ("pitch_ki", a.pitch_ki),
        ("pitch_kd", a.pitch_kd),
    ];
    for (name, value) in overrides {
        if let Some(v) = value {
            scenario::set_parameter(&mut sc, name, v)?;
        }
    }
    let result = control::simulate_closed_loop(&sc).context("closed-loop simulation failed")?;
    let segments = loaded.file.duty_cycles(sc.horizon);
    let report = control::duty_cycle_report(&result, &segments)?;
    let verdict = report.iter().all(|r| r.self_powered);

    let mut metrics = String::new();
    metrics_block("x", &result.metrics.x, &mut metrics);
    metrics_block("z", &result.metrics.z, &mut metrics);
    metrics_block("theta", &result.metrics.theta, &mut metrics);
    writeln!(metrics, "[power]")?;
    writeln!(metrics, "generated_w={}", num(powertrain::generated_power(&sc.array)))?;
    writeln!(metrics, "max_pnon={}", num(result.max_nondimensional()))?;
    writeln!(metrics, "verdict={}", if verdict { "self-powered" } else { "not-self-powered" })?;

    let mut duty = Csv::new("start_s,end_s,pnon_max,pnon_mean,self_powered");
    for r in &report {
        duty.row([
            num(r.start),
            num(r.end),
            num(r.max_nondimensional),
            num(r.mean_nondimensional),
            r.self_powered.to_string(),
        ]);
    }

    let o = &loaded.file.output;
    let dir = scenario_dir(cli, &loaded, &a.scenario);
    let mut run = RunOutput::new(&dir, "simulate", &loaded.raw, seed(cli, Some(&loaded)))?;
    run.write(&o.timeseries, &timeseries_csv(&result))?;
    run.write(&o.metrics, &metrics)?;
    run.write(&o.duty_cycles, &duty.into_string())?;
    run.finish(&o.manifest)?;
    out.write_all(metrics.as_bytes())?;
    Ok(if verdict { EXIT_OK } else { EXIT_NOT_SELF_POWERED })
}

/// kp-major sweep, evaluated in parallel and collected in grid order.
pub fn parallel_gain_map(
    template: &control::ControlScenario,
    kp_range: &BoundedInput,
    kd_range: &BoundedInput,
    resolution: (usize, usize),
) -> Result<GainMap> {
    template.validate()?;
    let axis = ouq::step_axis(template)?;
    let kp = kp_range.grid(resolution.0)?;
    let kd = kd_range.grid(resolution.1)?;
    let cells = (0..kp.len() * kd.len())
        .into_par_iter()
        .map(|n| ouq::evaluate_gain_cell(template, axis, kp[n / kd.len()], kd[n % kd.len()]))
        .collect::<Result<Vec<GainCell>, CoreError>>()?;
    Ok(GainMap { kp, kd, cells })
}

fn gain_map_cmd(cli: &Cli, a: &GainMapArgs, out: &mut dyn Write) -> Result<i32> {
    let loaded = scenario::load(&a.scenario)?;
    let template = loaded.file.control_scenario()?;
    let map = parallel_gain_map(
        &template,
        &BoundedInput::new("kp", a.kp_min, a.kp_max, 1),
        &BoundedInput::new("kd", a.kd_min, a.kd_max, 1),
        (a.kp_points, a.kd_points),
    )?;
    let constraints = GainConstraints {
        pnon_max: a.pnon_max,
        overshoot_max: a.overshoot_max,
        velocity_min: a.vmin,
        peak_time_max: a.peak_time_max,
    };
    let region = ouq::feasible_region(&map, &constraints);
    let header = if a.feasible { format!("{},feasible", GainCell::CSV_HEADER) } else { GainCell::CSV_HEADER.into() };
    let mut csv = Csv::new(&header);
    for (c, ok) in map.cells.iter().zip(&region.mask) {
        let mut row = vec![
            num(c.kp),
            num(c.kd),
            num(c.pnon_max),
            opt(c.overshoot),
            num(c.vmax),
            opt(c.peak_time),
            c.diverged.to_string(),
        ];
        if a.feasible {
            row.push(ok.to_string());
        }
        csv.row(row);
    }

    let mut summary = String::new();
    writeln!(summary, "cells={}", map.cells.len())?;
    writeln!(summary, "diverged={}", map.cells.iter().filter(|c| c.diverged).count())?;
    if a.feasible {
        writeln!(summary, "feasible={}", region.count)?;
        match region.extents {
            Some((p0, p1, d0, d1)) => {
                writeln!(summary, "feasible_kp={}..{} feasible_kd={}..{}", num(p0), num(p1), num(d0), num(d1))?
            }
            None => writeln!(summary, "feasible_kp=none feasible_kd=none")?,
        }
    }
    let o = &loaded.file.output;
    let dir = scenario_dir(cli, &loaded, &a.scenario);
    let mut run = RunOutput::new(&dir, "gain-map", &loaded.raw, seed(cli, Some(&loaded)))?;
    run.write(&o.gain_map, &csv.into_string())?;
    run.finish(&o.manifest)?;
    out.write_all(summary.as_bytes())?;
    Ok(EXIT_OK)
}

fn witness_lines(prefix: &str, inputs: &[BoundedInput], m: &ProductMeasure, text: &mut String) {
    for (input, atoms) in inputs.iter().zip(&m.marginals) {
        let atoms: Vec<String> = atoms.iter().map(|a| format!("{}@{}", num(a.weight), num(a.location))).collect();
        let _ = writeln!(text, "{prefix}_witness.{}={}", input.name, atoms.join(";"));
    }
}

fn bound_lines(prefix: &str, inputs: &[BoundedInput], b: &BoundEstimate, text: &mut String) {
    let _ = writeln!(text, "{prefix}_bound={}", num(b.value));
    let _ = writeln!(text, "{prefix}_mean={}", num(b.mean));
    let _ = writeln!(text, "{prefix}_evaluations={}", b.evaluations);
    witness_lines(prefix, inputs, &b.witness, text);
}

fn ouq_cmd(cli: &Cli, a: &OuqArgs, out: &mut dyn Write) -> Result<i32> {
    let loaded = scenario::load(&a.scenario)?;
    let section = loaded.file.ouq.as_ref().context("scenario is missing the [ouq] section")?;
    let inputs = loaded.file.ouq_inputs()?;
    let seed = seed(cli, Some(&loaded));
    let budget = loaded.file.search_budget(seed)?;

    let (lower, upper) = match section.response.as_str() {
        "sum" => {
            let mut set = AdmissibleSet::new(inputs.clone(), |x: &[f64]| Ok(x.iter().sum::<f64>()));
            set.mean_constraint = section.mean_constraint;
            (ouq::ouq_lower_bound(&set, &budget)?, ouq::ouq_upper_bound(&set, &budget)?)
        }
        "closed_loop_pnon_max" => {
            let template = loaded.file.control_scenario()?;
            for i in &inputs {
                scenario::set_parameter(&mut template.clone(), &i.name, i.lower)?;
            }
            let names: Vec<String> = inputs.iter().map(|i| i.name.clone()).collect();
            let response = |x: &[f64]| -> selfpowered_core::Result<f64> {
                let mut s = template.clone();
                for (n, v) in names.iter().zip(x) {
                    scenario::set_parameter(&mut s, n, *v).map_err(|e| CoreError::Config(e.to_string()))?;
                }
                match control::simulate_closed_loop(&s) {
                    Ok(r) => Ok(r.max_nondimensional()),
                    // A runaway trajectory is a failure of the self-powered condition.
                    Err(CoreError::Divergence { .. }) => Ok(f64::INFINITY),
                    Err(e) => Err(e),
                }
            };
            let mut set = AdmissibleSet::new(inputs.clone(), response);
            set.mean_constraint = section.mean_constraint;
            (ouq::ouq_lower_bound(&set, &budget)?, ouq::ouq_upper_bound(&set, &budget)?)
        }
        other => bail!("ouq.response '{other}' is not supported (expected sum or closed_loop_pnon_max)"),
    };

    let mut report = String::new();
    writeln!(report, "response={}", section.response)?;
    for i in &inputs {
        writeln!(report, "input.{}=[{}, {}] support_points={}", i.name, num(i.lower), num(i.upper), i.support_points)?;
    }
    writeln!(report, "mean_constraint={}", num(section.mean_constraint))?;
    writeln!(report, "seed={seed}")?;
    writeln!(report, "starts={}", budget.starts)?;
    writeln!(report, "iterations={}", budget.iterations)?;
    bound_lines("lower", &inputs, &lower, &mut report);
    bound_lines("upper", &inputs, &upper, &mut report);

    let o = &loaded.file.output;
    let dir = scenario_dir(cli, &loaded, &a.scenario);
    let mut run = RunOutput::new(&dir, "ouq-bounds", &loaded.raw, seed)?;
    run.write(&o.ouq_report, &report)?;
    run.finish(&o.manifest)?;
    out.write_all(report.as_bytes())?;
    Ok(EXIT_OK)
}

fn pv_curve_cmd(cli: &Cli, a: &PvCurveArgs, out: &mut dyn Write) -> Result<i32> {
    let base = match &a.scenario {
        Some(p) => scenario::load(p)?.file.cell_params(),
        None => PvCellParams::default(),
    };
    let cell = PvCellParams {
        short_circuit_current: a.isc.unwrap_or(base.short_circuit_current),
        saturation_current: a.i0.unwrap_or(base.saturation_current),
        series_resistance: a.rs.unwrap_or(base.series_resistance),
        shunt_resistance: a.rsh.unwrap_or(base.shunt_resistance),
        ideality: a.ideality.unwrap_or(base.ideality),
        temperature: a.temperature_k.unwrap_or(base.temperature),
    };
    cell.validate()?;
    let voc = powertrain::open_circuit_voltage(&cell)?;
    let curve = powertrain::pv_iv_curve(&cell, a.v_max.unwrap_or(voc), a.samples)?;
    let mut csv = Csv::new("voltage_V,current_A,power_W");
    for p in &curve {
        csv.floats(&[p.voltage, p.current, p.power]);
    }
    let csv = csv.into_string();
    match &cli.out_dir {
        Some(d) => {
            let mpp = powertrain::max_power_point(&curve).expect("curve has samples");
            let mut run = RunOutput::new(d, "pv-curve", format!("{a:?}").as_bytes(), seed(cli, None))?;
            run.write("pv_curve.csv", &csv)?;
            run.finish("manifest.txt")?;
            writeln!(out, "open_circuit_voltage_v={}", num(voc))?;
            writeln!(out, "mpp_voltage_v={}", num(mpp.voltage))?;
            writeln!(out, "mpp_current_a={}", num(mpp.current))?;
            writeln!(out, "mpp_power_w={}", num(mpp.power))?;
        }
        None => out.write_all(csv.as_bytes())?,
    }
    Ok(EXIT_OK)
}

fn frontier_cmd(cli: &Cli, a: &FrontierArgs, out: &mut dyn Write) -> Result<i32> {
    let area = a.area_m2.unwrap_or(PI * 1.25 * 1.25);
    let drag = DragModel { cd: a.cd, area, air_density: a.rho };
    if !(a.cd > 0.0 && area > 0.0 && a.rho > 0.0) {
        bail!("--cd, --area-m2 and --rho must be positive");
    }
    let generated = match a.pg_w {
        Some(p) => p,
        None => {
            if !(a.eta > 0.0 && a.eta < 1.0) {
                bail!("--eta must lie in (0, 1), got {}", a.eta);
            }
            a.irradiance * a.eta * a.a_pv.unwrap_or(area)
        }
    };
    let v_max = a.v_max.unwrap_or_else(|| solar_speed::frontier_speed(&drag, generated));
    let curve = solar_speed::accel_frontier_curve(a.v_min, v_max, a.samples, a.mass_kg, &drag, generated)?;
    let mut csv = Csv::new("velocity_mps,accel_mps2");
    for (v, acc) in curve {
        csv.floats(&[v, acc]);
    }
    let csv = csv.into_string();
    match &cli.out_dir {
        Some(d) => {
            let mut run = RunOutput::new(d, "accel-frontier", format!("{a:?}").as_bytes(), seed(cli, None))?;
            run.write("accel_frontier.csv", &csv)?;
            run.finish("manifest.txt")?;
            writeln!(out, "generated_w={}", num(generated))?;
            writeln!(out, "v_solar_mps={}", num(solar_speed::frontier_speed(&drag, generated)))?;
        }
        None => out.write_all(csv.as_bytes())?,
    }
    Ok(EXIT_OK)
}
