use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use selfpowered::output::parse_numeric;
use selfpowered::{EXIT_DIVERGED, EXIT_INFEASIBLE, EXIT_NOT_SELF_POWERED, EXIT_OK, EXIT_USAGE};
use selfpowered_core::control::SimSample;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.scenario"))
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selfpowered")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn value(text: &str, key: &str) -> f64 {
    let prefix = format!("{key}=");
    text.lines().find_map(|l| l.strip_prefix(&prefix)).unwrap_or_else(|| panic!("no {key} in {text}")).parse().unwrap()
}

fn simulate_into(dir: &Path, name: &str, extra: &[&str]) -> Output {
    let path = scenario(name);
    let mut args = vec!["--out-dir", dir.to_str().unwrap(), "simulate", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn write_scenario(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("case.scenario");
    fs::write(&path, text).unwrap();
    path
}

const VEHICLE: &str =
    "[vehicle]\nmass_kg = 11.3\ninertia_kg_m2 = 2.76\nhull_radius_m = 1.25\n\n[pv]\nefficiency = 0.1\n";

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&run(&["--help"])), EXIT_OK);
    assert_eq!(code(&run(&["simulate", "--help"])), EXIT_OK);
    assert_eq!(code(&run(&["--version"])), EXIT_OK);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&run(&[])), EXIT_USAGE);
    assert_eq!(code(&run(&["fly"])), EXIT_USAGE);
    assert_eq!(code(&run(&["simulate", "/nonexistent/file.scenario"])), EXIT_USAGE);
    assert_eq!(
        code(&run(&["solar-speed", "--shape", "cuboid", "--eta", "1.5", "--L", "3", "--a", "1", "--b", "1"])),
        EXIT_USAGE
    );
    let missing = run(&["solar-speed", "--shape", "ellipsoid", "--eta", "0.1", "--L", "3"]);
    assert_eq!(code(&missing), EXIT_USAGE);
    let err = String::from_utf8_lossy(&missing.stderr);
    assert!(err.contains("--D") && err.contains("--b"), "{err}");
}

#[test]
fn unknown_scenario_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), &format!("{VEHICLE}\n[simulation]\nhorizon_s = 1.0\nwarp_factor = 9\n"));
    let o = run(&["--out-dir", dir.path().to_str().unwrap(), "simulate", path.to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_USAGE);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warp_factor"));
}

#[test]
fn verdict_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&simulate_into(&dir.path().join("ok"), "step_climb", &[])), EXIT_OK);
    let bad = simulate_into(&dir.path().join("bad"), "aggressive_plateau", &[]);
    assert_eq!(code(&bad), EXIT_NOT_SELF_POWERED);
    assert!(stdout(&bad).contains("verdict=not-self-powered"));
}

#[test]
fn divergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{}\n[control]\nforce_gains = {{ kp = 200.0, ki = 0.0, kd = 100.0 }}\npitch_gains = {{ kp = 6.4, ki = 0.25, kd = 14.6 }}\n\
         force_limit_n = 1000.0\nx_reference = {{ kind = \"step\", amplitude = 100.0 }}\n[simulation]\nhorizon_s = 10.0\n",
        VEHICLE.replace("[pv]", "speed_cap_m_s = 0.5\n\n[pv]")
    );
    let path = write_scenario(dir.path(), &text);
    let o = run(&["--out-dir", dir.path().to_str().unwrap(), "simulate", path.to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_DIVERGED, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn infeasible_ouq_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        dir.path(),
        "[ouq]\nresponse = \"sum\"\nmean_constraint = 1.0\ninputs = [{ name = \"x\", lower = 2.0, upper = 3.0 }]\n",
    );
    let o = run(&["--out-dir", dir.path().to_str().unwrap(), "ouq-bounds", path.to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_INFEASIBLE, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn simulate_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&simulate_into(&a, "ramp_climb", &[])), EXIT_OK);
    assert_eq!(code(&simulate_into(&b, "ramp_climb", &[])), EXIT_OK);
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 4);
    for name in names {
        let (fa, fb) = (fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
        if name == "manifest.txt" {
            let strip = |t: &[u8]| -> Vec<String> {
                String::from_utf8_lossy(t)
                    .lines()
                    .filter(|l| !l.starts_with("wall_clock_s="))
                    .map(String::from)
                    .collect()
            };
            assert_eq!(strip(&fa), strip(&fb));
        } else {
            assert_eq!(fa, fb, "{name:?} differs between runs");
        }
    }
}

#[test]
fn timeseries_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&simulate_into(dir.path(), "step_climb", &[])), EXIT_OK);
    let text = fs::read_to_string(dir.path().join("step_climb.csv")).unwrap();
    let (header, rows) = parse_numeric(&text).unwrap();
    assert_eq!(header.join(","), SimSample::CSV_HEADER);
    assert_eq!(rows.len(), 30_001);
    let mut rebuilt = String::from(SimSample::CSV_HEADER);
    rebuilt.push('\n');
    for r in &rows {
        let sample = SimSample::from_row(&r.as_slice().try_into().unwrap());
        let fields: Vec<String> = sample.to_row().iter().map(|v| selfpowered::output::num(*v)).collect();
        rebuilt.push_str(&fields.join(","));
        rebuilt.push('\n');
    }
    assert_eq!(rebuilt, text);
}

#[test]
fn gain_map_smoke_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario("gain_map");
    let o = run(&[
        "--out-dir",
        dir.path().to_str().unwrap(),
        "gain-map",
        path.to_str().unwrap(),
        "--kp-points",
        "3",
        "--kd-points",
        "3",
        "--feasible",
        "--pnon-max",
        "1",
    ]);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("cells=9"));
    let (header, rows) = parse_numeric(&fs::read_to_string(dir.path().join("gain_map.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 9);
    assert_eq!(header.last().unwrap(), "feasible");
    let col = |n: &str| header.iter().position(|h| h == n).unwrap();
    assert_eq!((rows[0][col("kp")], rows[0][col("kd")], rows[0][col("pnon_max")]), (0.0, 0.0, 0.0));
    assert_eq!((rows[1][col("kp")], rows[1][col("kd")]), (0.0, 500.0));

    let cell = &rows[4];
    assert_eq!((cell[col("kp")], cell[col("kd")]), (500.0, 500.0));
    let sim_dir = dir.path().join("replay");
    let o = simulate_into(&sim_dir, "gain_map", &["--force-kp", "500", "--force-kd", "500"]);
    assert!(code(&o) == EXIT_OK || code(&o) == EXIT_NOT_SELF_POWERED);
    let (h, series) = parse_numeric(&fs::read_to_string(sim_dir.join("timeseries.csv")).unwrap()).unwrap();
    let pnon = h.iter().position(|c| c == "Pnon").unwrap();
    let peak = series.iter().map(|r| r[pnon]).fold(0.0, f64::max);
    let expected = cell[col("pnon_max")];
    assert!((peak - expected).abs() <= 1e-9 * expected.max(1.0), "{peak} vs {expected}");
}

#[test]
fn solar_speed_examples() {
    let o =
        run(&["solar-speed", "--shape", "cuboid", "--L", "3", "--b", "1", "--a", "1", "--eta", "0.2", "--cd-max", "2"]);
    assert_eq!(code(&o), EXIT_OK);
    assert!((value(&stdout(&o), "v_solar_mps") - 7.937).abs() < 1e-3);

    let o = run(&["solar-speed", "--shape", "ellipsoid", "--L", "1.5625", "--D", "1", "--b", "1", "--eta", "0.05"]);
    assert!((value(&stdout(&o), "v_solar_mps") - 5.0685).abs() < 1e-3);

    // Quarter coverage of a unit ellipsoid: ratio = A_pv / (π/4).
    let o = run(&[
        "solar-speed",
        "--shape",
        "ellipsoid",
        "--L",
        "1",
        "--D",
        "1",
        "--b",
        "1",
        "--eta",
        "0.05",
        "--a-pv",
        "0.19634954084936207",
    ]);
    let text = stdout(&o);
    assert!((value(&text, "updated_ratio") - 0.25).abs() < 1e-12);

    let o =
        run(&["solar-speed", "--shape", "cuboid", "--eta", "0.1", "--table", "--etas", "0.05,0.1", "--samples", "5"]);
    assert_eq!(code(&o), EXIT_OK);
    let (header, rows) = parse_numeric(&stdout(&o)).unwrap();
    assert_eq!(header, ["ratio", "eta", "speed_mps"]);
    assert_eq!(rows.len(), 10);
    assert!(rows[..5].windows(2).all(|w| w[1][2] > w[0][2]));
}

#[test]
fn pv_curve_reports_mpp() {
    let o = run(&["pv-curve"]);
    assert_eq!(code(&o), EXIT_OK);
    let (_, rows) = parse_numeric(&stdout(&o)).unwrap();
    assert_eq!(rows.len(), 200);
    assert!(rows.windows(2).all(|w| w[1][1] <= w[0][1]));
    let best = rows.iter().map(|r| r[2]).fold(f64::NEG_INFINITY, f64::max);

    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--out-dir", dir.path().to_str().unwrap(), "pv-curve"]);
    assert_eq!(value(&stdout(&o), "mpp_power_w"), best);
    assert!(dir.path().join("pv_curve.csv").exists() && dir.path().join("manifest.txt").exists());
}

#[test]
fn frontier_reaches_zero_at_solar_speed() {
    let o = run(&["accel-frontier"]);
    assert_eq!(code(&o), EXIT_OK);
    let (header, rows) = parse_numeric(&stdout(&o)).unwrap();
    assert_eq!(header, ["velocity_mps", "accel_mps2"]);
    assert_eq!(rows.len(), 100);
    let last = rows.last().unwrap();
    assert!((last[0] - 5.5032).abs() < 1e-3);
    assert!(last[1].abs() < 1e-9);
    assert!(rows.windows(2).all(|w| w[1][1] < w[0][1]));
}

#[test]
fn ouq_report_for_shipped_problem() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario("ouq_identity");
    let o = run(&["--out-dir", dir.path().to_str().unwrap(), "ouq-bounds", path.to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_OK);
    let text = stdout(&o);
    assert_eq!(value(&text, "lower_bound"), 0.0);
    assert!(value(&text, "upper_bound") <= 1.0 + 1e-9);
    assert_eq!(fs::read_to_string(dir.path().join("ouq_report.txt")).unwrap(), text);

    let again = run(&["--out-dir", dir.path().to_str().unwrap(), "ouq-bounds", path.to_str().unwrap()]);
    assert_eq!(stdout(&again), text);
    let reseeded =
        run(&["--seed", "7", "--out-dir", dir.path().to_str().unwrap(), "ouq-bounds", path.to_str().unwrap()]);
    assert!(stdout(&reseeded).contains("seed=7"));
}
