//! Task execution, the worker pool and the output directory.

use crate::config::{
    CgoRatesTask, Coefficient, ExperimentConfig, InvertTask, InversionMethod, JacobiTask, RaySpec, SolveTask, Task,
    TransformChoice, TransformTask,
};
use ctalab::cgo::{assemble_cgo, build_amplitude, build_phase, Quasimode};
use ctalab::jacobi::{conjugate_scan, curvature_along, riccati_path, solve_jacobi, CMat, CurvaturePath, JacobiPair};
use ctalab::manifold::{trace_geodesic_with, CtaChart, GeodesicPath, TraceOptions};
use ctalab::pde::{dn_map, solve_semilinear, DirichletSolver, SeriesGrid};
use ctalab::potential::{series_from_specs, Field, FieldSpec};
use ctalab::raytransform::{ForwardOracle, GeodesicSample, TransformKind};
use ctalab::recon::{recover_v2, recover_vm};
use ctalab::{Error, Result, C64};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Files and a JSON summary produced by one task, before anything touches the disk.
#[derive(Debug, Clone)]
pub struct TaskOutput {
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct TaskRecord {
    pub name: String,
    pub kind: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub files: Vec<FileEntry>,
    pub summary: Value,
}

/// Run metadata written to `manifest.json`. Carries no timestamps or thread counts, so identical
/// configs give identical manifests.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: ExperimentConfig,
    pub tasks: Vec<TaskRecord>,
}

impl Manifest {
    pub fn failed(&self) -> usize {
        self.tasks.iter().filter(|t| t.status != "ok").count()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s.into_bytes()
}

fn trace(chart: &CtaChart, ray: &RaySpec) -> Result<(GeodesicPath, CurvaturePath)> {
    let norm = chart.geometry.norm2(&ray.point, &ray.direction).sqrt();
    let theta: Vec<f64> = ray.direction.iter().map(|v| v / norm).collect();
    let opts = TraceOptions { margin: ray.margin, ..Default::default() };
    let path = trace_geodesic_with(chart, &ray.point, &theta, ray.step, &opts)?;
    let k = curvature_along(&path, chart)?;
    Ok((path, k))
}

/// `f(x0, gamma(t))` on the path grid.
fn sample(path: &GeodesicPath, spec: &FieldSpec, n: usize, x0: f64) -> Result<GeodesicSample> {
    let f = spec.build(n)?;
    Ok(GeodesicSample::from_field(path, |x| {
        let mut full = Vec::with_capacity(x.len() + 1);
        full.push(x0);
        full.extend_from_slice(x);
        f.eval(&full)
    }))
}

fn geodesic(chart: &CtaChart, ray: &RaySpec) -> Result<TaskOutput> {
    let (path, _) = trace(chart, ray)?;
    Ok(TaskOutput {
        files: vec![("geodesic.csv".into(), path.to_csv().into_bytes())],
        summary: json!({ "tau_minus": path.tau_minus, "tau_plus": path.tau_plus, "samples": path.len() }),
    })
}

fn jacobi(chart: &CtaChart, t: &JacobiTask) -> Result<TaskOutput> {
    let (path, k) = trace(chart, &t.ray)?;
    let y = JacobiPair::new(&k, t.anchor)?.family(t.eps)?;
    let r = riccati_path(&y, path.tau_minus, path.tau_plus)?;
    let conj = conjugate_scan(&k)?;
    Ok(TaskOutput {
        files: vec![("jacobi.csv".into(), y.to_csv().into_bytes())],
        summary: json!({
            "tau_minus": path.tau_minus,
            "tau_plus": path.tau_plus,
            "min_im_eigenvalue": r.min_im_eigenvalue(),
            "max_asymmetry": r.max_asymmetry(),
            "c_drift": r.c_drift(),
            "conjugate_points": conj,
        }),
    })
}

fn transform(chart: &CtaChart, t: &TransformTask) -> Result<TaskOutput> {
    let (path, k) = trace(chart, &t.ray)?;
    let oracle = ForwardOracle::new(sample(&path, &t.field, chart.n, t.x0)?, JacobiPair::new(&k, t.anchor)?);
    let kind = match t.transform {
        TransformChoice::First => TransformKind::First,
        TransformChoice::Second => TransformKind::Second,
    };
    let curve = oracle.curve(kind, &t.eps, t.zeta)?;
    Ok(TaskOutput {
        files: vec![("transform.csv".into(), curve.to_csv().into_bytes())],
        summary: json!({ "tau_minus": path.tau_minus, "tau_plus": path.tau_plus, "points": curve.eps.len() }),
    })
}

fn invert(chart: &CtaChart, t: &InvertTask) -> Result<TaskOutput> {
    let (path, k) = trace(chart, &t.ray)?;
    let f = sample(&path, &t.field, chart.n, t.x0)?;
    let mut at_p = vec![t.x0];
    at_p.extend_from_slice(&t.ray.point);
    let truth = t.field.build(chart.n)?.eval(&at_p);
    if t.method == InversionMethod::J1Moments {
        let anchor = t.anchor.unwrap_or(path.tau_minus - t.ray.margin);
        let oracle = ForwardOracle::new(f.clone(), JacobiPair::new(&k, anchor)?);
        let rep = oracle.invert_moments(&t.moments)?;
        let mut csv = String::from("t,f_re,f_im,truth_re,truth_im\n");
        let (mut num, mut den) = (0.0, 0.0);
        // the reconstruction lives on [tau_-, tau_+] only
        let window = rep.f.times.iter().zip(&rep.f.values).filter(|(s, _)| (path.tau_minus..=path.tau_plus).contains(*s));
        for (s, v) in window {
            let tr = f.at(*s);
            num += (v - tr).norm_sqr();
            den += tr.norm_sqr();
            csv.push_str(&format!("{:e},{:e},{:e},{:e},{:e}\n", s, v.re, v.im, tr.re, tr.im));
        }
        let l2 = if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
        let summary = json!({
            "method": t.method,
            "anchor": anchor,
            "l2_relative_error": l2,
            "data_residual": rep.data_residual,
            "condition": rep.condition,
        });
        return Ok(TaskOutput {
            files: vec![("invert.csv".into(), csv.into_bytes()), ("invert.json".into(), json_bytes(&rep))],
            summary,
        });
    }
    let oracle = ForwardOracle::new(f, JacobiPair::new(&k, t.anchor.unwrap_or(0.0))?);
    let rep = match t.method {
        InversionMethod::J2 => oracle.invert_j2(&t.limit)?,
        _ => oracle.invert_j1_split(&t.limit)?,
    };
    let rel = (rep.estimate - truth).norm() / truth.norm().max(f64::MIN_POSITIVE);
    let summary = json!({
        "method": t.method,
        "estimate": [rep.estimate.re, rep.estimate.im],
        "error_bound": rep.error_bound,
        "truth": [truth.re, truth.im],
        "relative_error": rel,
    });
    Ok(TaskOutput { files: vec![("invert.json".into(), json_bytes(&rep))], summary })
}

fn direct_problem(t: &SolveTask, dn: bool) -> Result<TaskOutput> {
    let n = t.domain.dim();
    let series = series_from_specs(n, &t.series)?;
    let solver = DirichletSolver::new(&t.domain, &series.coeff(1))?;
    let grid = SeriesGrid::new(&t.domain, &series);
    let g = t.boundary.build(n)?;
    let f: Vec<C64> = t.domain.trace_of(|x| g.eval(x) * t.amplitude);
    if dn {
        let rec = dn_map(&solver, &grid, &f, &t.semilinear)?;
        return Ok(TaskOutput {
            files: vec![("dn.csv".into(), rec.to_csv().into_bytes())],
            summary: json!({ "iterations": rec.iterations, "residual": rec.residual, "face_points": rec.faces.len() }),
        });
    }
    let sol = solve_semilinear(&solver, &grid, &f, &t.semilinear)?;
    let mut csv = String::from("node");
    for a in 1..=n {
        csv.push_str(&format!(",x{a}"));
    }
    csv.push_str(",u_re,u_im\n");
    for (i, u) in sol.u.iter().enumerate() {
        csv.push_str(&i.to_string());
        for x in t.domain.point(i) {
            csv.push_str(&format!(",{x:e}"));
        }
        csv.push_str(&format!(",{:e},{:e}\n", u.re, u.im));
    }
    Ok(TaskOutput {
        files: vec![("solve.csv".into(), csv.into_bytes())],
        summary: json!({
            "iterations": sol.iterations,
            "residual": sol.residual,
            "continuity": sol.continuity,
            "max_picard_ratio": sol.max_ratio(),
        }),
    })
}

fn cgo_rates(chart: &CtaChart, t: &CgoRatesTask) -> Result<TaskOutput> {
    let (path, k) = trace(chart, &t.ray)?;
    let m = k.dim();
    let y = solve_jacobi(&k, 0.0, &CMat::identity(m, m), &(CMat::identity(m, m) * C64::new(0.0, 1.0)), true)?;
    let ph = build_phase(&path, &y, t.order)?;
    let v1: Field = t.v1.build(chart.n)?;
    let (plus, minus) = build_amplitude(&ph, &v1, &t.amplitude)?;
    let q = Quasimode::new(ph, plus, minus);
    let (rep, _) = assemble_cgo(&q, t.sign, &v1, &t.assemble, false)?;
    let slopes: serde_json::Map<String, Value> = rep.slopes.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
    Ok(TaskOutput { files: vec![("rates.csv".into(), rep.to_csv().into_bytes())], summary: json!({ "slopes": slopes }) })
}

/// Run one task; nothing is written here.
pub fn execute(cfg: &ExperimentConfig, task: &Task) -> Result<TaskOutput> {
    let chart = cfg.geometry.chart()?;
    match task {
        Task::Geodesic(t) => geodesic(&chart, &t.ray),
        Task::Jacobi(t) => jacobi(&chart, t),
        Task::Transform(t) => transform(&chart, t),
        Task::Invert(t) => invert(&chart, t),
        Task::Solve(t) => direct_problem(t, false),
        Task::Dn(t) => direct_problem(t, true),
        Task::CgoRates(t) => cgo_rates(&chart, t),
        Task::Recover(t) => {
            let rec = match t.coefficient {
                Coefficient::Vm => recover_vm(&t.task)?,
                Coefficient::V2 => recover_v2(&t.task)?,
            };
            let summary = json!({
                "m": rec.m,
                "mode": rec.mode,
                "max_relative_error": rec.max_rel_error(),
                "reference": rec.reference,
                "known_fraction": rec.known_fraction,
            });
            Ok(TaskOutput {
                files: vec![("recovered.csv".into(), rec.to_csv().into_bytes()), ("recovered.json".into(), json_bytes(&rec))],
                summary,
            })
        }
    }
}

/// Run `tasks` on at most `threads` workers; results come back in task order.
pub fn execute_all(cfg: &ExperimentConfig, tasks: &[&Task], threads: usize) -> Vec<Result<TaskOutput>> {
    let slots: Vec<Mutex<Option<Result<TaskOutput>>>> = tasks.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = threads.max(1).min(tasks.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= tasks.len() {
                    break;
                }
                let out = execute(cfg, tasks[i]);
                *slots[i].lock().unwrap() = Some(out);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().unwrap().expect("every slot is filled")).collect()
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::InvalidInput(format!("cannot write {}: {e}", path.display()))
}

/// Validate, run the selected tasks and write `out/<task>/...` plus `out/manifest.json`.
/// `only` restricts the run to tasks of one subcommand kind.
pub fn run(config_text: &str, only: Option<&str>, out: &Path, threads: usize, seed: Option<u64>) -> Result<Manifest> {
    let parsed = crate::config::parse(config_text)?;
    parsed.validate()?;
    let cfg = parsed.explicit(seed)?;
    let selected: Vec<&Task> = cfg.tasks.iter().filter(|t| only.is_none_or(|k| t.kind() == k)).collect();
    let results = execute_all(&cfg, &selected, threads);
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let mut records = Vec::new();
    for (task, res) in selected.iter().zip(results) {
        let mut rec = TaskRecord {
            name: task.name().to_string(),
            kind: task.kind().to_string(),
            status: "ok".into(),
            error: None,
            files: Vec::new(),
            summary: Value::Null,
        };
        match res {
            Ok(output) => {
                let dir = out.join(task.name());
                std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
                for (file, bytes) in &output.files {
                    let p = dir.join(file);
                    std::fs::write(&p, bytes).map_err(|e| io_err(&p, e))?;
                    rec.files.push(FileEntry { path: format!("{}/{file}", task.name()), bytes: bytes.len(), sha256: sha256_hex(bytes) });
                }
                rec.summary = output.summary;
            }
            Err(e) => {
                rec.status = "error".into();
                rec.error = Some(e.to_string());
            }
        }
        records.push(rec);
    }
    let manifest = Manifest {
        tool: "ctalab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: only.unwrap_or("run").into(),
        seed: cfg.seed,
        config_sha256: sha256_hex(&serde_json::to_vec(&cfg).expect("config serializes")),
        config: cfg,
        tasks: records,
    };
    let p = out.join("manifest.json");
    std::fs::write(&p, json_bytes(&manifest)).map_err(|e| io_err(&p, e))?;
    Ok(manifest)
}

/// Parse and validate only.
pub fn validate_only(config_text: &str, seed: Option<u64>) -> Result<ExperimentConfig> {
    let parsed = crate::config::parse(config_text)?;
    parsed.validate()?;
    parsed.explicit(seed)
}
