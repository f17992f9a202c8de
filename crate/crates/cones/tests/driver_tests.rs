//! Pipeline driver: report schema, determinism, artifacts, and the CLI.

mod common;

use std::process::Command;

use cones::driver::{emit_field_ply, emit_trace_csv, report_json, run_pipeline, Config};
use cones::shapes;
use common::to_obj;

#[test]
fn report_schema_keys_and_holonomy_presence() {
    let report = run_pipeline(shapes::icosphere(2), &Config::default()).unwrap();
    let v = report_json(&report);
    for key in ["mesh", "config", "cones", "n_c", "n_0", "distortion", "iterations", "trace", "timings", "termination"] {
        assert!(v.get(key).is_some(), "missing key {key}");
    }
    let mesh = &v["mesh"];
    assert_eq!(mesh["n_vertices"], 162);
    assert_eq!(mesh["genus"], 0);
    assert_eq!(mesh["n_boundary_loops"], 0);
    assert!(v.get("holonomy").is_none(), "genus 0 must not report holonomy");
    for c in v["cones"].as_array().unwrap() {
        assert!(c["vertex"].is_u64() && c["z"].is_i64());
    }
    for t in v["trace"].as_array().unwrap() {
        assert!(t["event"].is_string() && t["E"].is_number() && t["n_c"].is_u64());
    }

    let torus = run_pipeline(shapes::flat_grid_torus(8, 8), &Config::default()).unwrap();
    let tv = report_json(&torus);
    let h = tv.get("holonomy").expect("genus 1 must report holonomy");
    assert_eq!(h["r"].as_array().unwrap().len(), 2);
    assert!(h["e_dif"].is_number());
}

#[test]
fn reports_are_deterministic() {
    let cfg = Config::default();
    let a = report_json(&run_pipeline(shapes::icosphere(3), &cfg).unwrap());
    let b = report_json(&run_pipeline(shapes::icosphere(3), &cfg).unwrap());
    // Wall-clock timings legitimately differ between runs.
    for (k, v) in a.as_object().unwrap() {
        if k != "timings" {
            assert_eq!(v, &b[k], "nondeterministic key {k}");
        }
    }
}

#[test]
fn trace_follows_the_pipeline_order() {
    let mut cfg = Config::default();
    cfg.epsilon_tar = 0.05; // force a few iterations on the sphere
    cfg.max_iter = 6;
    let report = run_pipeline(shapes::icosphere(3), &cfg).unwrap();
    let events: Vec<&str> = report.trace.iter().map(|t| t.event).collect();
    assert_eq!(events[0], "init");
    // Per iteration: add, solve-angles, move, remove, in that order.
    let order = ["add", "solve-angles", "move", "remove"];
    let mut phase = 0usize;
    for e in &events[1..] {
        let idx = order.iter().position(|o| o == e).expect("unknown event");
        assert_eq!(idx, phase % 4, "out-of-order event {e}");
        phase += 1;
    }
    // Iteration counter is non-decreasing and dense.
    for w in report.trace.windows(2) {
        assert!(w[1].iteration >= w[0].iteration);
    }
}

#[test]
fn ply_and_csv_artifacts_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = shapes::icosphere(1);
    let report = run_pipeline(shapes::icosphere(1), &Config::default()).unwrap();

    let ply = dir.path().join("field.ply");
    emit_field_ply(&mesh, &report.u, &ply).unwrap();
    let text = std::fs::read_to_string(&ply).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("ply"));
    assert_eq!(lines.next(), Some("format ascii 1.0"));
    assert!(text.contains(&format!("element vertex {}", mesh.n_vertices())));
    assert!(text.contains(&format!("element face {}", mesh.n_faces())));
    // One data row per vertex with 4 floats at 6 decimals.
    let body: Vec<&str> = text.lines().skip_while(|l| *l != "end_header").skip(1).collect();
    assert_eq!(body.len(), mesh.n_vertices() + mesh.n_faces());
    let first: Vec<&str> = body[0].split_whitespace().collect();
    assert_eq!(first.len(), 4);
    assert_eq!(first[0].split('.').nth(1).unwrap().len(), 6);

    let csv = dir.path().join("trace.csv");
    emit_trace_csv(&report, &csv).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iteration,event,E,n_c,sum_z,eta"));
    assert_eq!(lines.count(), report.trace.len());
}

#[test]
fn config_validation_rejects_bad_inputs() {
    let mut cfg = Config::default();
    cfg.epsilon_tar = 0.0;
    assert!(cfg.validate().is_err());
    let mut cfg = Config::default();
    cfg.n_b = (1, 2); // must contain 0
    assert!(cfg.validate().is_err());
    let mut cfg = Config::default();
    cfg.max_iter = 0;
    assert!(cfg.validate().is_err());
    assert!(Config::default().validate().is_ok());
}

#[test]
fn cli_solves_a_cube_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let obj = dir.path().join("cube.obj");
    std::fs::write(&obj, to_obj(&shapes::cube(6))).unwrap();
    let out = dir.path().join("report.json");
    let ply = dir.path().join("field.ply");
    let csv = dir.path().join("trace.csv");

    let status = Command::new(env!("CARGO_BIN_EXE_cones"))
        .args([
            "solve",
            obj.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--field",
            ply.to_str().unwrap(),
            "--trace",
            csv.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0), "cube run must reach the target");

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["n_c"], 8);
    assert!(report["distortion"].as_f64().unwrap() <= 1e-6);
    assert!(ply.exists() && csv.exists());
}

#[test]
fn cli_reports_errors_with_exit_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let obj = dir.path().join("broken.obj");
    std::fs::write(&obj, "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n").unwrap();
    let output = Command::new(env!("CARGO_BIN_EXE_cones"))
        .args(["solve", obj.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(!output.stderr.is_empty(), "error must be reported on stderr");
}

#[test]
fn iteration_cap_yields_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let obj = dir.path().join("sphere.obj");
    std::fs::write(&obj, to_obj(&shapes::icosphere(2))).unwrap();
    // Unreachable target with a tiny iteration budget.
    let output = Command::new(env!("CARGO_BIN_EXE_cones"))
        .args([
            "solve",
            obj.to_str().unwrap(),
            "--target-distortion",
            "1e-12",
            "--max-iter",
            "2",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn audits_pass_on_default_runs() {
    for (mesh, closed) in [
        (shapes::icosphere(2), true),
        (shapes::disk(4), false),
        (shapes::flat_grid_torus(8, 8), true),
    ] {
        let report = run_pipeline(mesh, &Config::default()).unwrap();
        assert!(report.audit.sum_z_ok, "Σz audit failed");
        assert!(report.audit.bounds_ok, "bounds audit failed");
        assert!(report.audit.yamabe_residual < 1e-8, "residual {}", report.audit.yamabe_residual);
        if closed {
            let sum: i64 = report.cones.iter().map(|&(_, z)| z).sum();
            let want = 8 * (1 - report.genus as i64);
            assert_eq!(sum, want);
        }
    }
}
