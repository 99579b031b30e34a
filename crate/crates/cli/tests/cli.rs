use std::f64::consts::{E, PI};
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use baroreflex::dde::Trajectory;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_baroreflex"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn write_trajectory(dir: &Path, name: &str, f: impl Fn(f64) -> f64) -> String {
    let mesh: Vec<f64> = (0..=12_000).map(|k| k as f64 * 0.01).collect();
    let states = mesh.iter().map(|&t| vec![f(t), 0.0]).collect();
    let traj = Trajectory::from_samples(mesh, states).unwrap();
    let file = dir.join(name);
    traj.write_csv(fs::File::create(&file).unwrap(), &["T_s", "H"]).unwrap();
    path(&file).to_string()
}

fn read_traj(file: &Path) -> (Vec<String>, Trajectory) {
    Trajectory::read_csv(std::io::BufReader::new(fs::File::open(file).unwrap())).unwrap()
}

#[test]
fn analyze_reference_points() {
    let v = stdout_json(&run(&["analyze", "--d-s", "1", "--tau-s", &E.to_string()]));
    assert_eq!(v["class"], "CriticallyDampedSink");
    assert!((v["lambda"]["re"].as_f64().unwrap() + 1.0).abs() < 1e-10);

    let v = stdout_json(&run(&["analyze", "--d-s", "1", "--tau-s", &(2.0 / PI).to_string()]));
    assert_eq!(v["class"], "LimitCycle");
    assert!(v["lambda"]["re"].as_f64().unwrap().abs() < 1e-10);
    assert!((v["lambda"]["im"].as_f64().unwrap() - PI / 2.0).abs() < 1e-10);

    let v = stdout_json(&run(&["analyze", "--d-s", "1", "--tau-s", &(2.0 * E).to_string()]));
    assert_eq!(v["class"], "OverdampedSink");
    assert!((v["boundaries"]["transcritical"]["tau_s"].as_f64().unwrap() - E).abs() < 1e-15);
}

#[test]
fn analyze_grid_emits_one_line_per_point() {
    let out = run(&["analyze", "--grid", "1:2:0.5 x 1:3:1"]);
    assert!(out.status.success());
    let lines: Vec<Value> =
        String::from_utf8(out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 9);
    assert_eq!(lines[0]["D_s"], 1.0);
    assert_eq!(lines[0]["tau_s"], 1.0);
}

#[test]
fn input_errors_exit_with_two() {
    assert_eq!(run(&["analyze", "--d-s", "-1", "--tau-s", "1"]).status.code(), Some(2));
    assert_eq!(run(&["analyze", "--grid", "1:2:0.3 x 1"]).status.code(), Some(2));
    assert_eq!(run(&["sweep", "--grid", "1:2:0.5 x 1", "--workers", "0"]).status.code(), Some(2));
    assert_eq!(run(&["classify", "/nonexistent/trajectory.csv"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--subject", "7", "--synth"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--mode", "homo", "--model", "full"]).status.code(), Some(2));
    assert_eq!(run(&["bogus"]).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate", "--mode", "homo", "--set", "D_s=10", "--set", "tau_s=0.1", "--horizon", "100000", "--out",
        path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn classify_canonical_signals() {
    let dir = tempfile::tempdir().unwrap();
    let damped = write_trajectory(dir.path(), "damped.csv", |t| (-0.1 * t).exp() * (2.0 * PI * t / 5.0).sin());
    let v = stdout_json(&run(&["classify", &damped, "--t-cut", "0"]));
    assert_eq!(v["class"], "SpiralIn");
    assert!(v["slope"].as_f64().unwrap() < -0.01);
    assert!(v["n_extrema"].as_u64().unwrap() >= 40);

    let steady = write_trajectory(dir.path(), "steady.csv", |t| 0.3 * (2.0 * PI * t / 5.0).sin());
    let v = stdout_json(&run(&["classify", &steady, "--t-cut", "0"]));
    assert_eq!(v["class"], "LimitCycle");
    assert!((v["r2"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let decay = write_trajectory(dir.path(), "decay.csv", |t| (-t).exp());
    let v = stdout_json(&run(&["classify", &decay]));
    assert_eq!(v["class"], "Sink");
    assert_eq!(v["amplitudes"].as_array().unwrap().len(), 0);
    assert!(v["slope"].is_null());
}

#[test]
fn classify_rejects_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "t,T_s\n0,1\n1,oops\n").unwrap();
    let out = run(&["classify", path(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let good = write_trajectory(dir.path(), "ok.csv", |t| t);
    assert_eq!(run(&["classify", &good, "--component", "T_p"]).status.code(), Some(2));
    // window starts after the data ends
    assert_eq!(run(&["classify", &good, "--t-cut", "500"]).status.code(), Some(2));
}

#[test]
fn full_and_reduced_agree_on_table_points() {
    let dir = tempfile::tempdir().unwrap();
    for (subject, d, tau) in [("1", "9.2", "7.5"), ("2", "4.7", "5.4"), ("3", "5.6", "5.2")] {
        let mut classes = Vec::new();
        for model in ["reduced", "full"] {
            let out_dir = dir.path().join(format!("{model}{subject}"));
            let sim = run(&[
                "simulate", "--synth", "--subject", subject, "--model", model, "--set", &format!("D_s={d}"), "--set",
                &format!("tau_s={tau}"), "--out", path(&out_dir),
            ]);
            assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));
            let traj = out_dir.join("trajectory.csv");
            let v = stdout_json(&run(&["classify", path(&traj), "--t-stop", "65"]));
            classes.push(v["class"].as_str().unwrap().to_string());
        }
        assert_eq!(classes[0], classes[1], "subject {subject}");
    }
}

#[test]
fn synthetic_response_rises_during_strain_and_recovers() {
    let dir = tempfile::tempdir().unwrap();
    let sim = run(&["simulate", "--synth", "--out", path(dir.path())]);
    assert!(sim.status.success());
    let (names, traj) = read_traj(&dir.path().join("trajectory.csv"));
    assert_eq!(names, ["T_s", "H"]);
    let at = |t: f64| traj.dense_eval(t).unwrap();
    let rest = at(0.0);
    let strain_peak = (0..=150).map(|k| at(20.0 + 0.1 * k as f64)[0]).fold(f64::MIN, f64::max);
    assert!(strain_peak > rest[0] + 0.05, "T_s {strain_peak} vs rest {}", rest[0]);
    let hr_peak = (0..=150).map(|k| at(20.0 + 0.1 * k as f64)[1]).fold(f64::MIN, f64::max);
    assert!(hr_peak > rest[1] + 5.0);
    let end = at(traj.t_end());
    assert!((end[0] - rest[0]).abs() < 0.05 && (end[1] - rest[1]).abs() < 2.0, "{end:?} vs {rest:?}");

    let trace = fs::read_to_string(dir.path().join("forcing.csv")).unwrap();
    assert!(trace.starts_with("t,sbp,f,g\n"));
}

#[test]
fn constant_record_gives_flat_traces() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("flat.csv");
    let rows: String = (0..=6000).map(|k| format!("{},{}\n", k as f64 * 0.01, 149.0)).collect();
    fs::write(&data, format!("t,P\n{rows}")).unwrap();
    for model in ["reduced", "full"] {
        let out_dir = dir.path().join(model);
        let sim = run(&[
            "simulate", "--data", path(&data), "--envelope", "--model", model, "--set", "t_s=500", "--set", "t_e=510",
            "--out", path(&out_dir),
        ]);
        assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));
        let (_, traj) = read_traj(&out_dir.join("trajectory.csv"));
        let x0 = traj.state(0).to_vec();
        let drift = traj.states().flat_map(|s| s.iter().zip(&x0).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>()).fold(0.0, f64::max);
        assert!(drift < 1e-6, "{model}: drift {drift}");
    }
}

#[test]
fn ingest_writes_the_forcing_schema_and_reloads_identically() {
    let dir = tempfile::tempdir().unwrap();
    let ing = run(&["ingest", "--synth", "--subject", "2", "--out", path(dir.path())]);
    assert!(ing.status.success(), "{}", String::from_utf8_lossy(&ing.stderr));
    let file = dir.path().join("forcing.json");
    let v: Value = serde_json::from_str(&fs::read_to_string(&file).unwrap()).unwrap();
    assert_eq!(v["coeffs"].as_array().unwrap().len(), 11);
    assert!(v["t_map"]["scale"].is_number() && v["t_map"]["shift"].is_number());
    assert_eq!(v["span"], serde_json::json!([-30.0, 125.0]));
    assert_eq!(v["baseline"]["P_bar"], 117.0);
    assert_eq!(v["baseline"]["H_bar"], 87.0);
    assert_eq!(v["baseline"]["age"], 27.0);

    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&["simulate", "--synth", "--subject", "2", "--out", path(&a)]).status.success());
    assert!(run(&["simulate", "--forcing", path(&file), "--out", path(&b)]).status.success());
    assert_eq!(fs::read(a.join("trajectory.csv")).unwrap(), fs::read(b.join("trajectory.csv")).unwrap());
}

#[test]
fn ingest_of_pulsatile_record() {
    use baroreflex::models::SubjectBaseline;
    use baroreflex::signal::{synth_pulsatile, VmProfile};
    let dir = tempfile::tempdir().unwrap();
    let base = SubjectBaseline::subject(1).unwrap();
    let raw = synth_pulsatile(&base, 20.0, 35.0, &VmProfile::default(), 75.0, 0.005).unwrap();
    let data = dir.path().join("raw.csv");
    let rows: String = raw.times().iter().zip(raw.values()).map(|(t, p)| format!("{t},{p}\n")).collect();
    fs::write(&data, rows).unwrap();
    let out = run(&["ingest", "--data", path(&data), "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("forcing.json")).unwrap()).unwrap();
    // the first beat maximum sets the start of the envelope
    assert!(v["span"][0].as_f64().unwrap() < -29.0);
}

#[test]
fn single_cell_sweep_and_worker_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one");
    let out = run(&["sweep", "--grid", "2 x 6", "--out", path(&one)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(one.join("region_map.csv")).unwrap();
    assert_eq!(csv.lines().collect::<Vec<_>>(), ["D_s,tau_s,class_code", "2,6,0"]);
    assert!(fs::read_to_string(one.join("region_map.pgm")).unwrap().starts_with("P2\n1 1\n255\n"));
    let report: Value = serde_json::from_str(&fs::read_to_string(one.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["mode"], "homogeneous");
    assert_eq!(report["failed_cells"], 0);

    let grid = "0.5:4:0.5 x 0.5:4:0.5";
    let serial = dir.path().join("serial");
    let parallel = dir.path().join("parallel");
    assert!(run(&["sweep", "--grid", grid, "--out", path(&serial)]).status.success());
    assert!(run(&["sweep", "--grid", grid, "--workers", "3", "--out", path(&parallel)]).status.success());
    assert_eq!(fs::read(serial.join("region_map.csv")).unwrap(), fs::read(parallel.join("region_map.csv")).unwrap());
    let hash = |d: &Path| {
        let v: Value = serde_json::from_str(&fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
        v["provenance"]["config_hash"].clone()
    };
    assert_eq!(hash(&serial), hash(&parallel));
}

#[test]
fn forced_sweep_needs_a_forcing_source() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["sweep", "--grid", "1 x 1", "--mode", "nonhomo", "--out", path(dir.path())]).status.code(), Some(2));
    let out = run(&["sweep", "--grid", "9.2 x 7.5", "--mode", "nonhomo", "--synth", "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("region_map.csv")).unwrap();
    assert_eq!(csv.lines().nth(1), Some("9.2,7.5,0"));
}
