use ctalab::Error;
use ctalab_cli::{parse, run, validate_only};
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::Command;

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ctalab-cli-{}-{tag}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn bin(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ctalab")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let e = e.unwrap();
        let name = e.file_name().into_string().unwrap();
        if e.file_type().unwrap().is_dir() {
            out.extend(listing(&e.path()).into_iter().map(|f| format!("{name}/{f}")));
        } else {
            out.push(name);
        }
    }
    out.sort();
    out
}

const JACOBI: &str = r#"{
  "geometry": {"kind": "flat_disk", "n": 3, "interval": [-1, 1]},
  "tasks": [
    {"kind": "jacobi", "name": "golden", "ray": {"point": [0.1, 0.2], "direction": [1, 0.5], "step": 0.01}, "eps": 0.1}
  ]
}"#;

#[test]
fn empty_task_list_writes_manifest_only() {
    let dir = scratch("empty");
    let out = dir.join("out");
    let m = run(r#"{"geometry": {"kind": "flat_disk"}}"#, None, &out, 1, None).unwrap();
    assert!(m.tasks.is_empty());
    assert_eq!(listing(&out), vec!["manifest.json"]);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    // defaults are spelled out
    assert_eq!(v["config"]["geometry"]["n"], 3);
    assert_eq!(v["config"]["geometry"]["params"]["radius"], 1.0);
    assert_eq!(v["config"]["geometry"]["conformal"]["kind"], "unit");
    assert_eq!(v["config"]["seed"], 0);
    assert_eq!(v["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn golden_jacobi_csv_is_byte_identical_across_runs() {
    let dir = scratch("golden");
    let cfg = write_config(&dir, JACOBI);
    let mut csvs = Vec::new();
    let mut manifests = Vec::new();
    for k in 0..2 {
        let out = dir.join(format!("out{k}"));
        let o = bin(&["jacobi", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        csvs.push(std::fs::read(out.join("golden/jacobi.csv")).unwrap());
        manifests.push(std::fs::read(out.join("manifest.json")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(manifests[0], manifests[1]);
    let text = String::from_utf8(csvs[0].clone()).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("t,Y11_re,Y11_im"), "{header}");
    assert!(header.ends_with("detY_re,detY_im,c_cons"), "{header}");
    // the recorded hash is the hash of the file
    let v: Value = serde_json::from_slice(&manifests[0]).unwrap();
    let entry = &v["tasks"][0]["files"][0];
    assert_eq!(entry["path"], "golden/jacobi.csv");
    assert_eq!(entry["sha256"].as_str().unwrap(), ctalab_cli::run::sha256_hex(&csvs[0]));
    assert!(v["tasks"][0]["summary"]["min_im_eigenvalue"].as_f64().unwrap() > 0.0);
}

#[test]
fn malformed_geometry_kind_names_the_field() {
    let text = r#"{"geometry": {"kind": "torus", "n": 3}, "tasks": []}"#;
    match parse(text) {
        Err(Error::ConfigInvalid { field, reason }) => {
            assert_eq!(field, "geometry.kind");
            assert!(reason.contains("torus"), "{reason}");
        }
        other => panic!("expected ConfigInvalid, got {other:?}"),
    }
    let dir = scratch("malformed");
    let cfg = write_config(&dir, text);
    let out = dir.join("out");
    let o = bin(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("geometry.kind"));
    assert!(!out.exists());
}

#[test]
fn field_level_diagnostics() {
    let cases = [
        (r#"{"geometry": {"kind": "flat_disk", "params": {"radius": -1}}}"#, "geometry"),
        (r#"{"geometry": {"kind": "sphere_cap", "params": {"radius": 1}}}"#, "geometry.params"),
        (r#"{"geometry": {"kind": "flat_disk", "n": 5}}"#, "geometry"),
        (r#"{"geometry": {"kind": "flat_disk"}, "tasks": [{"kind": "geodesic", "name": "a", "ray": {"point": [0], "direction": [1, 0]}}]}"#, "tasks[0].ray"),
        (r#"{"geometry": {"kind": "flat_disk"}, "tasks": [{"kind": "geodesic", "name": "a", "ray": {"point": [0, 0], "direction": [1, 0]}}, {"kind": "geodesic", "name": "a", "ray": {"point": [0, 0], "direction": [0, 1]}}]}"#, "tasks[1].name"),
        (r#"{"geometry": {"kind": "flat_disk"}, "tasks": [{"kind": "invert", "name": "a", "ray": {"point": [0, 0], "direction": [1, 0]}, "field": {"kind": "zero"}, "method": "j1_split"}]}"#, "tasks[0].method"),
        (r#"{"geometry": {"kind": "flat_disk"}, "tasks": [{"kind": "recover", "name": "r", "task": {"lambdas": []}}]}"#, "tasks[0].task"),
        (r#"{"geometry": {"kind": "flat_disk"}, "bogus": 1}"#, "bogus"),
    ];
    for (text, want) in cases {
        match validate_only(text, None) {
            Err(Error::ConfigInvalid { field, .. }) => assert_eq!(field, want, "{text}"),
            other => panic!("{text}: expected ConfigInvalid, got {other:?}"),
        }
    }
    // unknown keys inside a task are reported against that task
    let typo = r#"{"geometry": {"kind": "flat_disk"}, "tasks": [{"kind": "geodesic", "name": "a", "rey": {}}]}"#;
    match validate_only(typo, None) {
        Err(Error::ConfigInvalid { field, reason }) => {
            assert!(field.starts_with("tasks[0]"), "{field}");
            assert!(reason.contains("rey"), "{reason}");
        }
        other => panic!("expected ConfigInvalid, got {other:?}"),
    }
}

#[test]
fn validate_only_checks_and_writes_nothing() {
    let dir = scratch("validate");
    let cfg = write_config(&dir, JACOBI);
    let out = dir.join("out");
    let o = bin(&["run", "--validate-only", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("config ok"));
    assert!(!out.exists());
    let bad = write_config(&dir, r#"{"geometry": {"kind": "flat_disk"}, "tasks": [{"kind": "jacobi", "name": "j", "ray": {"point": [0, 0], "direction": [1, 0]}, "eps": 0}]}"#);
    let o = bin(&["jacobi", "--validate-only", "--config", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("tasks[0].eps"));
}

const MIXED: &str = r#"{
  "seed": 7,
  "geometry": {"kind": "flat_disk", "n": 3},
  "tasks": [
    {"kind": "geodesic", "name": "ray", "ray": {"point": [0.0, 0.1], "direction": [1, 0]}},
    {"kind": "transform", "name": "j2", "ray": {"point": [0.0, 0.1], "direction": [1, 0]},
     "field": {"kind": "gaussian", "center": [0.1, 0.0], "width": 0.7, "amplitude": 1.0},
     "transform": "second", "eps": [0.1, 0.01]},
    {"kind": "invert", "name": "point", "ray": {"point": [0.0, 0.1], "direction": [1, 0]},
     "field": {"kind": "gaussian", "center": [0.1, 0.0], "width": 0.7, "amplitude": 1.0}, "method": "j2"},
    {"kind": "dn", "name": "dn", "domain": {"lo": [-0.5, -0.5, -0.5], "hi": [0.5, 0.5, 0.5], "cells": [8, 8, 8]},
     "series": [{"kind": "zero"}, {"kind": "constant", "re": 1.0, "im": 0.0}],
     "boundary": {"kind": "trig", "k": [1.0, 2.0], "amplitude": 1.0}}
  ]
}"#;

#[test]
fn every_task_kind_writes_its_files_independent_of_threads() {
    let dir = scratch("mixed");
    let a = run(MIXED, None, &dir.join("a"), 1, None).unwrap();
    let b = run(MIXED, None, &dir.join("b"), 3, None).unwrap();
    assert_eq!(a.failed(), 0, "{:?}", a.tasks);
    assert_eq!(
        listing(&dir.join("a")),
        vec!["dn/dn.csv", "j2/transform.csv", "manifest.json", "point/invert.json", "ray/geodesic.csv"]
    );
    for f in listing(&dir.join("a")) {
        assert_eq!(std::fs::read(dir.join("a").join(&f)).unwrap(), std::fs::read(dir.join("b").join(&f)).unwrap(), "{f}");
    }
    assert_eq!(b.seed, 7);
    let rel = a.tasks[2].summary["relative_error"].as_f64().unwrap();
    assert!(rel < 0.03, "J2 point inversion relative error {rel}");
    let dn = std::fs::read_to_string(dir.join("a/dn/dn.csv")).unwrap();
    assert!(dn.starts_with("node,f_re,f_im,dn_re,dn_im\n"));
    let faces = a.tasks[3].summary["face_points"].as_u64().unwrap() as usize;
    // every node of the six 9 x 9 faces, edges once per face
    assert_eq!(faces, 6 * 9 * 9);
    assert_eq!(dn.lines().count(), 1 + faces);
}

#[test]
fn subcommand_selects_its_tasks_and_seed_flag_is_recorded() {
    let dir = scratch("select");
    let m = run(MIXED, Some("geodesic"), &dir.join("out"), 2, Some(42)).unwrap();
    assert_eq!(m.tasks.len(), 1);
    assert_eq!(m.command, "geodesic");
    assert_eq!(m.seed, 42);
    assert_eq!(m.config.seed, 42);
    assert_eq!(listing(&dir.join("out")), vec!["manifest.json", "ray/geodesic.csv"]);
    let csv = std::fs::read_to_string(dir.join("out/ray/geodesic.csv")).unwrap();
    assert!(csv.starts_with("t,x1,x2,v1,v2\n"));
}

#[test]
fn module_error_gives_nonzero_exit_and_is_recorded() {
    let dir = scratch("moderr");
    // boundary data far outside the small-data radius
    let cfg = write_config(
        &dir,
        r#"{"geometry": {"kind": "flat_disk"}, "tasks": [
            {"kind": "solve", "name": "big", "domain": {"lo": [0, 0, 0], "hi": [1, 1, 1], "cells": [4, 4, 4]},
             "series": [{"kind": "zero"}, {"kind": "constant", "re": 1.0, "im": 0.0}],
             "boundary": {"kind": "constant", "re": 1.0, "im": 0.0}, "amplitude": 10.0}]}"#,
    );
    let out = dir.join("out");
    let o = bin(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(v["tasks"][0]["status"], "error");
    assert!(v["tasks"][0]["error"].as_str().unwrap().contains("small"), "{}", v["tasks"][0]["error"]);
}

#[test]
fn solve_and_recover_outputs() {
    let dir = scratch("recover");
    let text = r#"{"geometry": {"kind": "flat_disk"}, "tasks": [
        {"kind": "solve", "name": "u", "domain": {"lo": [0, 0, 0], "hi": [1, 1, 1], "cells": [4, 4, 4]},
         "series": [{"kind": "zero"}, {"kind": "constant", "re": 1.0, "im": 0.0}],
         "boundary": {"kind": "constant", "re": 1.0, "im": 0.0}},
        {"kind": "recover", "name": "v3", "task": {
            "truth": [{"kind": "zero"}, {"kind": "zero"},
                      {"kind": "bump", "center": [0.1, 0.05], "radius": 0.35, "amplitude": 1.0, "x0": {"kind": "cos", "omega": 3.141592653589793}}],
            "targets": [[0.0, 0.0]], "x0_grid": [0.0]}}]}"#;
    let m = run(text, None, &dir.join("out"), 2, None).unwrap();
    assert_eq!(m.failed(), 0, "{:?}", m.tasks);
    let solve = std::fs::read_to_string(dir.join("out/u/solve.csv")).unwrap();
    assert!(solve.starts_with("node,x1,x2,x3,u_re,u_im\n"));
    assert_eq!(solve.lines().count(), 1 + 125);
    assert!(m.tasks[0].summary["max_picard_ratio"].as_f64().unwrap() < 1.0);
    let rec = std::fs::read_to_string(dir.join("out/v3/recovered.csv")).unwrap();
    assert!(rec.starts_with("x0,p_index,m,Vm_re,Vm_im,err_est,truth_re,truth_im\n"));
    assert_eq!(rec.lines().count(), 2);
    let err = m.tasks[1].summary["max_relative_error"].as_f64().unwrap();
    assert!(err < 0.10, "recovered V3 relative error {err}");
}

#[test]
fn moment_route_and_cgo_rates_through_the_runner() {
    let dir = scratch("moments");
    let text = r#"{"geometry": {"kind": "flat_disk", "n": 3, "interval": [-0.5, 0.5]}, "tasks": [
        {"kind": "invert", "name": "m", "ray": {"point": [0.0, 0.0], "direction": [1, 0], "margin": 1.0},
         "field": {"kind": "gaussian", "center": [0.0, 0.0], "width": 1.0, "amplitude": 1.0}, "method": "j1_moments"},
        {"kind": "cgo-rates", "name": "q", "ray": {"point": [0.0, 0.0], "direction": [1, 0], "margin": 0.5},
         "assemble": {"lambdas": [20, 40], "x0_points": 33, "torus_points": 64}}]}"#;
    let m = run(text, None, &dir.join("out"), 2, None).unwrap();
    assert_eq!(m.failed(), 0, "{:?}", m.tasks);
    let l2 = m.tasks[0].summary["l2_relative_error"].as_f64().unwrap();
    assert!(l2 < 0.05, "moment route L2 error {l2}");
    let csv = std::fs::read_to_string(dir.join("out/m/invert.csv")).unwrap();
    assert!(csv.starts_with("t,f_re,f_im,truth_re,truth_im\n"));
    let rates = std::fs::read_to_string(dir.join("out/q/rates.csv")).unwrap();
    assert!(rates.starts_with("lambda,norm_name,value\n"));
    assert!(rates.lines().any(|l| l.starts_with("20,quasimode_l2,")), "{rates}");
    assert!(m.tasks[1].summary["slopes"]["quasimode_l2"].is_f64());
}
