//! Inversion driver: DN data -> weighted ray transforms of `F V_m(xi, .)` along geodesics ->
//! pointwise values -> Fourier synthesis in `x0`.
//!
//! The moment values `lambda^{(n-2)/2} int V (U^- U^+)^2` (and the `rho / 2 rho` pairings for
//! `V_2`) come either from a synthetic oracle that integrates the volume side of the Green
//! identity with quasimodes in place of the CGO solutions, or from the discretized DN map.

mod beam;
mod full;
mod synthesis;
mod synthetic;

pub use beam::Beam;
pub use full::{full_moment, FullDnContext};
pub use synthesis::{lambda_limit, trig_synthesis, LambdaFit, TrigSynthesis};
pub use synthetic::{grid_moment, synthetic_moments};

use crate::error::{Error, Result};
use crate::jacobi::{curvature_along, JacobiPair};
use crate::manifold::{trace_geodesic_with, CtaChart, GeodesicPath, Geometry, TraceOptions};
use crate::pde::{nonvanishing_solution, DirichletSolver, DiscreteDomain, SemilinearConfig};
use crate::potential::{series_from_specs, Field, FieldSpec, PotentialSeries};
use crate::raytransform::{
    branch_sign_at_zero, invert_j1_moments, invert_j1_point_split, invert_j2_point, normalization_integral, LimitConfig,
    MomentConfig,
};
use crate::C64;
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconMode {
    /// Volume integrals of the Green identity evaluated directly with quasimodes.
    SyntheticDn,
    /// Boundary pairings of divided differences of the discrete DN map.
    FullDn,
}

/// Which product of quasimodes is paired with the unknown coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentKind {
    /// `(U^+_rho U^-_rho)^2`, the `V_m` (`m >= 3`) moment.
    Quartic,
    /// `U^-_{2 rho} (U^+_rho)^2`.
    PlusPair,
    /// `U^+_{2 rho} (U^-_rho)^2`.
    MinusPair,
}

/// Quasimode construction used by the driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeamConfig {
    pub phase_order: usize,
    /// Transversal degree of the principal amplitude.
    pub amp_degree: usize,
    /// Cutoff radius of `chi(|y''| / delta)`.
    pub delta: f64,
    /// Arc-length step of the traced geodesics.
    pub path_step: f64,
    /// Extension of the geodesics beyond the chart; the moment route anchors `anchor_margin` before `tau_-`.
    pub anchor_margin: f64,
    /// Anchor scaling `Y0 -> y0_scale Y0` (gauge).
    pub y0_scale: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig { phase_order: 2, amp_degree: 0, delta: 1.0, path_step: 1e-2, anchor_margin: 0.5, y0_scale: 1.0 }
    }
}

/// Beam-adapted tensor quadrature of the synthetic oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureConfig {
    /// Gauss-Legendre nodes in `x0` over `I`.
    pub x0_nodes: usize,
    /// Gauss-Legendre nodes per transversal direction.
    pub y_nodes: usize,
    /// Gauss-Legendre nodes per `t` panel.
    pub t_nodes: usize,
    /// Longest `t` panel.
    pub t_panel: f64,
    /// Transversal half-width in units of the Gaussian standard deviation.
    pub width_factor: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig { x0_nodes: 48, y_nodes: 48, t_nodes: 8, t_panel: 0.05, width_factor: 8.0 }
    }
}

/// Parameters of the full DN route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DnConfig {
    /// Divided-difference step in the normalized amplitudes.
    pub step: f64,
    pub richardson: bool,
    pub semilinear: SemilinearConfig,
    /// Grid points required per wavelength `2 pi / lambda` on every axis.
    pub points_per_wavelength: f64,
}

impl Default for DnConfig {
    fn default() -> Self {
        DnConfig {
            step: 0.1,
            richardson: true,
            semilinear: SemilinearConfig { r0: 1.0, tol: 1e-14, max_iter: 200 },
            points_per_wavelength: 6.0,
        }
    }
}

/// One reconstruction experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconTask {
    /// Index of the recovered coefficient `V_m`.
    pub m: usize,
    pub mode: ReconMode,
    pub n: usize,
    /// Coefficients `V_1, V_2, ...` that generate the DN data.
    pub truth: Vec<FieldSpec>,
    /// Coefficients registered as known (`V_1 ... V_{m-1}`); defaults to the truth.
    pub known: Option<Vec<FieldSpec>>,
    /// The box `I x Omega` and its grid (DN route and `W_p`).
    pub domain: DiscreteDomain,
    /// Target points `T` in `Omega`.
    pub targets: Vec<Vec<f64>>,
    /// Unit direction of the geodesic through every target.
    pub direction: Vec<f64>,
    pub x0_grid: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// Lower bound on `lambda eps` at the bottom of the ladder. The stationary-phase error of an
    /// `eps` beam scales like `1 / (lambda eps)`, so at small `eps` the whole ladder is scaled up
    /// by `lambda_eps / (lambdas[0] eps)`. Zero keeps the ladder fixed.
    pub lambda_eps: f64,
    /// Frequencies `xi` are sampled in `[-sigma0 / 4, sigma0 / 4]`, `sigma = -xi / 4`.
    pub sigma0: f64,
    pub n_xi: usize,
    /// Trigonometric modes `|k| <= trig_modes` of period `|I|` in the `x0` synthesis.
    pub trig_modes: usize,
    pub limit: LimitConfig,
    pub moments: MomentConfig,
    pub beam: BeamConfig,
    pub quadrature: QuadratureConfig,
    pub dn: DnConfig,
    /// Guard on `|W_p|^{m-3}`.
    pub wp_threshold: f64,
}

impl Default for ReconTask {
    fn default() -> Self {
        ReconTask {
            m: 3,
            mode: ReconMode::SyntheticDn,
            n: 3,
            truth: vec![FieldSpec::Zero],
            known: None,
            domain: DiscreteDomain { lo: vec![-1.0, -0.5, -0.5], hi: vec![1.0, 0.5, 0.5], cells: vec![16, 16, 16] },
            targets: vec![vec![0.0, 0.0]],
            direction: vec![1.0, 0.0],
            x0_grid: (0..9).map(|i| -0.8 + 0.2 * i as f64).collect(),
            lambdas: vec![1e4, 4e4, 1.6e5, 6.4e5],
            lambda_eps: 1e9,
            sigma0: 4.0 * std::f64::consts::PI,
            n_xi: 17,
            trig_modes: 1,
            limit: LimitConfig::default(),
            moments: MomentConfig::default(),
            beam: BeamConfig::default(),
            quadrature: QuadratureConfig::default(),
            dn: DnConfig::default(),
            wp_threshold: 1e-6,
        }
    }
}

impl ReconTask {
    pub fn validate(&self) -> Result<()> {
        let bad = |s: String| Err(Error::InvalidInput(s));
        if self.n != 3 && self.n != 4 {
            return bad(format!("dimension n = {} not in {{3, 4}}", self.n));
        }
        if self.m < 2 {
            return bad("m must be at least 2".into());
        }
        if self.domain.dim() != self.n {
            return bad("domain dimension must equal n".into());
        }
        let d = self.n - 1;
        if self.direction.len() != d || (self.direction.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() > 1e-12 {
            return bad("direction must be a unit vector in Omega".into());
        }
        if self.targets.is_empty() {
            return bad("no target points".into());
        }
        for p in &self.targets {
            if p.len() != d || p.iter().enumerate().any(|(a, &v)| !(v > self.domain.lo[a + 1] && v < self.domain.hi[a + 1])) {
                return bad(format!("target {p:?} is not interior to the box"));
            }
        }
        if self.lambdas.is_empty() || self.lambdas.iter().any(|&l| !(l > 0.0)) || !(self.lambda_eps >= 0.0) {
            return bad("lambda ladder must be nonempty and positive".into());
        }
        if self.n_xi == 0 || self.n_xi < 2 * self.trig_modes + 1 {
            return bad("need n_xi >= 2 trig_modes + 1".into());
        }
        if self.n_xi > 1 && !(self.sigma0 > 0.0) {
            return bad("sigma0 must be positive".into());
        }
        if !(2..=4).contains(&self.beam.phase_order) || self.beam.amp_degree > self.beam.phase_order + 2 {
            return bad("phase order must be 2..=4 and amplitude degree at most order + 2".into());
        }
        if !(self.beam.y0_scale > 0.0) || !(self.beam.anchor_margin > 0.0) || !(self.beam.path_step > 0.0) {
            return bad("beam scales must be positive".into());
        }
        if self.mode == ReconMode::FullDn {
            let freq = if self.m == 2 { 2.0 } else { 1.0 };
            for &e in &self.limit.eps_grid {
                for l in self.ladder(e) {
                    self.check_budget(freq * l)?;
                }
            }
            if self.m > 3 {
                return bad("the full DN route supports m = 2 and m = 3".into());
            }
        }
        Ok(())
    }

    /// Largest resolvable frequency of the grid.
    pub fn lambda_budget(&self) -> f64 {
        let hmax = (0..self.domain.dim()).map(|a| self.domain.h(a)).fold(0.0, f64::max);
        2.0 * std::f64::consts::PI / (self.dn.points_per_wavelength * hmax)
    }

    fn check_budget(&self, lambda: f64) -> Result<()> {
        let budget = self.lambda_budget();
        if lambda > budget {
            return Err(Error::ModeMismatch { lambda, budget });
        }
        Ok(())
    }

    /// Parameter interval on which the straight line through target `j` lies in the box.
    pub fn box_segment(&self, j: usize) -> (f64, f64) {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for (a, (&p, &v)) in self.targets[j].iter().zip(&self.direction).enumerate() {
            if v.abs() > 1e-14 {
                let (t1, t2) = ((self.domain.lo[a + 1] - p) / v, (self.domain.hi[a + 1] - p) / v);
                lo = lo.max(t1.min(t2));
                hi = hi.min(t1.max(t2));
            }
        }
        (lo, hi)
    }

    /// The `lambda` ladder used for beams of width parameter `eps`.
    pub fn ladder(&self, eps: f64) -> Vec<f64> {
        let s = (self.lambda_eps / (self.lambdas[0] * eps)).max(1.0);
        self.lambdas.iter().map(|l| l * s).collect()
    }

    /// `xi` grid, symmetric about 0.
    pub fn xi_grid(&self) -> Vec<f64> {
        if self.n_xi == 1 {
            return vec![0.0];
        }
        let r = self.sigma0 / 4.0;
        (0..self.n_xi).map(|i| -r + 2.0 * r * i as f64 / (self.n_xi - 1) as f64).collect()
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.xi_grid().iter().map(|xi| -xi / 4.0).collect()
    }

    pub fn truth_series(&self) -> Result<PotentialSeries> {
        series_from_specs(self.n, &self.truth)
    }

    /// Registered coefficients `V_1 ... V_{m-1}`.
    pub fn known_series(&self) -> Result<PotentialSeries> {
        let specs = self.known.as_ref().unwrap_or(&self.truth);
        let k = specs.len().min(self.m - 1);
        series_from_specs(self.n, &specs[..k])
    }

    /// Flat chart whose disk contains the box.
    pub fn chart(&self) -> Result<CtaChart> {
        let d = self.n - 1;
        let mut r2: f64 = 0.0;
        for a in 1..=d {
            r2 += self.domain.lo[a].abs().max(self.domain.hi[a].abs()).powi(2);
        }
        CtaChart::new(self.n, [self.domain.lo[0], self.domain.hi[0]], Geometry::FlatDisk { radius: 1.05 * r2.sqrt() })
    }

    /// The geodesic through target `j`, parametrized so that `gamma(0) = p_j`.
    pub fn geodesic(&self, chart: &CtaChart, j: usize) -> Result<GeodesicPath> {
        let opts = TraceOptions { margin: self.beam.anchor_margin + 0.5, ..Default::default() };
        trace_geodesic_with(chart, &self.targets[j], &self.direction, self.beam.path_step, &opts)
    }
}

/// Moment value at one `(lambda, sigma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentValue {
    pub lambda: f64,
    pub sigma: f64,
    /// `lambda^{(n-2)/2}` times the volume integral (after subtracting the known `H` pairing).
    pub value: C64,
    /// Full route: `-int f^- d_nu L` (scaled), before the subtraction.
    pub boundary: Option<C64>,
    /// Full route: the subtracted `int H U^-` (scaled).
    pub known_term: Option<C64>,
}

/// `F V_m(xi, gamma_p(0))` on the `xi` grid for one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierSlice {
    pub p_index: usize,
    pub xi: Vec<f64>,
    pub values: Vec<C64>,
    /// Extrapolation error bars of the point inversions.
    pub errors: Vec<f64>,
}

impl FourierSlice {
    /// `max |F(-xi) - conj F(xi)|`, zero for a real coefficient.
    pub fn conjugate_defect(&self) -> f64 {
        let k = self.xi.len();
        (0..k).map(|i| (self.values[k - 1 - i] - self.values[i].conj()).norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveredPoint {
    pub x0: f64,
    pub p_index: usize,
    pub m: usize,
    pub value: C64,
    pub err_est: f64,
    pub truth: Option<C64>,
    /// `|value - truth| / reference`.
    pub rel_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveredPotential {
    pub m: usize,
    pub mode: ReconMode,
    pub points: Vec<RecoveredPoint>,
    pub slices: Vec<FourierSlice>,
    /// `max |V_m|` of the registered truth over the reported points (relative-error scale).
    pub reference: f64,
    /// `|W_p(x0, p)|^{m-3}` per reported point (`m > 3`).
    pub wp_factor: Vec<f64>,
    /// Full route: largest `|known H pairing| / |boundary pairing|` met. A wrong registered lower
    /// coefficient shifts the moments by a fraction of this size at finite `lambda`.
    pub known_fraction: Option<f64>,
}

impl RecoveredPotential {
    pub fn max_rel_error(&self) -> f64 {
        self.points.iter().filter_map(|p| p.rel_error).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.points.iter().map(|p| p.value.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_error(&self) -> f64 {
        self.points.iter().filter_map(|p| p.truth.map(|t| (p.value - t).norm())).fold(0.0, f64::max)
    }

    pub fn max_imag(&self) -> f64 {
        self.points.iter().map(|p| p.value.im.abs()).fold(0.0, f64::max)
    }

    /// `x0, p_index, m, Vm_re, Vm_im, err_est, truth_re, truth_im`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x0,p_index,m,Vm_re,Vm_im,err_est,truth_re,truth_im\n");
        for p in &self.points {
            let (tr, ti) = p.truth.map_or((String::new(), String::new()), |t| (format!("{:e}", t.re), format!("{:e}", t.im)));
            out.push_str(&format!("{},{},{},{:e},{:e},{:e},{},{}\n", p.x0, p.p_index, p.m, p.value.re, p.value.im, p.err_est, tr, ti));
        }
        out
    }
}

/// `lambda^{(n-2)/2} int V_m (U^- U^+)^2` for one `rho`, with `V_m` the truth (times `W_p^{m-3}`).
pub fn dn_moment_v3(task: &ReconTask, beam: &Beam, rho: C64) -> Result<MomentValue> {
    match task.mode {
        ReconMode::SyntheticDn => {
            let vt = weighted_truth(task, None)?;
            let v = synthetic_moments(task, beam, &[MomentKind::Quartic], rho.re, &[rho.im], &vt)?;
            Ok(MomentValue { lambda: rho.re, sigma: rho.im, value: v[0][0], boundary: None, known_term: None })
        }
        ReconMode::FullDn => {
            let ctx = FullDnContext::new(task)?;
            full_moment(task, &ctx, beam, MomentKind::Quartic, rho)
        }
    }
}

/// The pair `lambda^{(n-2)/2} int V_2 U^-_{2 rho} (U^+_rho)^2` and its dual.
pub fn dn_moment_v2(task: &ReconTask, beam: &Beam, rho: C64) -> Result<(MomentValue, MomentValue)> {
    let mut t2 = task.clone();
    t2.m = 2;
    match task.mode {
        ReconMode::SyntheticDn => {
            let vt = weighted_truth(&t2, None)?;
            let v = synthetic_moments(&t2, beam, &[MomentKind::PlusPair, MomentKind::MinusPair], rho.re, &[rho.im], &vt)?;
            let mk = |z: C64| MomentValue { lambda: rho.re, sigma: rho.im, value: z, boundary: None, known_term: None };
            Ok((mk(v[0][0]), mk(v[1][0])))
        }
        ReconMode::FullDn => {
            let ctx = FullDnContext::new(&t2)?;
            Ok((full_moment(&t2, &ctx, beam, MomentKind::PlusPair, rho)?, full_moment(&t2, &ctx, beam, MomentKind::MinusPair, rho)?))
        }
    }
}

/// `V_m W^{m-3}` as a field, `W` interpolated from a grid function on the task domain.
fn weighted_truth(task: &ReconTask, w: Option<Arc<Vec<C64>>>) -> Result<Field> {
    let vm = task.truth_series()?.coeff(task.m);
    let Some(w) = w else { return Ok(vm) };
    if vm.is_zero() || task.m <= 3 {
        return Ok(vm);
    }
    let domain = task.domain.clone();
    let p = (task.m - 3) as i32;
    Ok(Field::new(move |x| vm.eval(x) * domain.interpolate(&w, x).powi(p)))
}

/// Point moments for every `(lambda, sigma)` of the task: `out[kind][lambda][sigma]`.
fn moment_table(
    task: &ReconTask,
    ctx: Option<&FullDnContext>,
    beam: &Beam,
    kinds: &[MomentKind],
    lambdas: &[f64],
    vt: &Field,
    known_fraction: &mut Option<f64>,
) -> Result<Vec<Vec<Vec<C64>>>> {
    let sigmas = task.sigmas();
    let mut out = vec![Vec::with_capacity(lambdas.len()); kinds.len()];
    for &lambda in lambdas {
        match (task.mode, ctx) {
            (ReconMode::FullDn, Some(ctx)) => {
                for (k, &kind) in kinds.iter().enumerate() {
                    let mut row = Vec::with_capacity(sigmas.len());
                    for &s in &sigmas {
                        let v = full_moment(task, ctx, beam, kind, C64::new(lambda, s))?;
                        if let (Some(b), Some(h)) = (v.boundary, v.known_term) {
                            let r = if b.norm() > 0.0 { h.norm() / b.norm() } else { 0.0 };
                            *known_fraction = Some(known_fraction.unwrap_or(0.0).max(r));
                        }
                        row.push(v.value);
                    }
                    out[k].push(row);
                }
            }
            _ => {
                let rows = synthetic_moments(task, beam, kinds, lambda, &sigmas, vt)?;
                for (k, row) in rows.into_iter().enumerate() {
                    out[k].push(row);
                }
            }
        }
    }
    Ok(out)
}

/// lambda-limits of a `[lambda][sigma]` table, divided by the calibration.
fn limits(lambdas: &[f64], table: &[Vec<C64>], calibration: f64) -> Vec<(C64, f64)> {
    let ns = table[0].len();
    (0..ns)
        .map(|s| {
            let vals: Vec<C64> = table.iter().map(|row| row[s]).collect();
            let fit = lambda_limit(lambdas, &vals);
            (fit.limit / calibration, fit.residual / calibration)
        })
        .collect()
}

struct TargetGeometry {
    path: GeodesicPath,
    curvature: crate::jacobi::CurvaturePath,
}

fn target_geometry(task: &ReconTask, chart: &CtaChart, j: usize) -> Result<TargetGeometry> {
    let path = task.geodesic(chart, j)?;
    let curvature = curvature_along(&path, chart)?;
    Ok(TargetGeometry { path, curvature })
}

fn finish(
    task: &ReconTask,
    slices: Vec<FourierSlice>,
    wp: &[Option<Arc<Vec<C64>>>],
) -> Result<RecoveredPotential> {
    let truth = task.truth_series()?.coeff(task.m);
    let (a, b) = (task.domain.lo[0], task.domain.hi[0]);
    let mut points = Vec::new();
    let mut wp_factor = Vec::new();
    for s in &slices {
        let syn = trig_synthesis(&s.xi, &s.values, &s.errors, a, b, task.trig_modes, &task.x0_grid)?;
        let p = &task.targets[s.p_index];
        for (k, &x0) in task.x0_grid.iter().enumerate() {
            let mut x = vec![x0];
            x.extend_from_slice(p);
            let mut value = syn.values[k];
            let mut err = syn.errors[k];
            if let Some(Some(w)) = wp.get(s.p_index) {
                let f = task.domain.interpolate(w, &x).powi((task.m - 3) as i32);
                if f.norm() < task.wp_threshold {
                    return Err(Error::WpTooSmall { value: f.norm() });
                }
                value /= f;
                err /= f.norm();
                wp_factor.push(f.norm());
            }
            points.push(RecoveredPoint { x0, p_index: s.p_index, m: task.m, value, err_est: err, truth: Some(truth.eval(&x)), rel_error: None });
        }
    }
    let reference = points.iter().filter_map(|p| p.truth.map(|t| t.norm())).fold(0.0, f64::max);
    if reference > 0.0 {
        for p in points.iter_mut() {
            p.rel_error = p.truth.map(|t| (p.value - t).norm() / reference);
        }
    }
    Ok(RecoveredPotential { m: task.m, mode: task.mode, points, slices, reference, wp_factor, known_fraction: None })
}

/// `W_p` for every target (`m > 3`), from the known `V_1`.
fn nonvanishing_weights(task: &ReconTask) -> Result<Vec<Option<Arc<Vec<C64>>>>> {
    if task.m <= 3 {
        return Ok(vec![None; task.targets.len()]);
    }
    let solver = DirichletSolver::new(&task.domain, &task.known_series()?.coeff(1))?;
    let x0mid = 0.5 * (task.domain.lo[0] + task.domain.hi[0]);
    task.targets
        .iter()
        .map(|p| {
            let mut x = vec![x0mid];
            x.extend_from_slice(p);
            // the conditioning guard is applied per reported point
            let w = nonvanishing_solution(&solver, &x, 0.0)?;
            Ok(Some(Arc::new(w.w)))
        })
        .collect()
}

/// Recover `V_m`, `m >= 3`, at `x0_grid x T` through `J2` point inversions of the moment limits.
pub fn recover_vm(task: &ReconTask) -> Result<RecoveredPotential> {
    task.validate()?;
    if task.m < 3 {
        return Err(Error::InvalidInput("recover_vm needs m >= 3".into()));
    }
    let chart = task.chart()?;
    let xi = task.xi_grid();
    let wp = nonvanishing_weights(task)?;
    let ctx = match task.mode {
        ReconMode::FullDn => Some(FullDnContext::new(task)?),
        ReconMode::SyntheticDn => None,
    };
    let d = task.n - 2;
    let gauge = task.beam.y0_scale.powi(d as i32);
    let mut known_fraction = None;
    let mut slices = Vec::new();
    for j in 0..task.targets.len() {
        let geo = target_geometry(task, &chart, j)?;
        let pair = JacobiPair::new(&geo.curvature, 0.0)?;
        let vt = weighted_truth(task, wp[j].clone())?;
        // J2 data per eps: [sigma] -> value
        let mut data: Vec<(f64, Vec<(C64, f64)>)> = Vec::new();
        for &eps in &task.limit.eps_grid {
            let y = pair.family(eps)?.scaled(task.beam.y0_scale);
            let beam = Beam::new(task, &geo.path, &y)?;
            let ladder = task.ladder(eps);
            let table = moment_table(task, ctx.as_ref(), &beam, &[MomentKind::Quartic], &ladder, &vt, &mut known_fraction)?;
            // |det (s Y)|^{-1} = s^{-d} |det Y|^{-1}
            let lim = limits(&ladder, &table[0], beam.calibration() / gauge);
            data.push((eps, lim));
        }
        // tolerances are relative to the size of the whole slice: F V vanishes at isolated xi
        let zeta = task.limit.zetas.iter().copied().fold(0.0, f64::max);
        let mut floor: f64 = 0.0;
        for (e, v) in &data {
            let nz = normalization_integral(zeta, *e, task.n)?;
            floor = v.iter().map(|z| z.0.norm() / nz).fold(floor, f64::max);
        }
        let limit = LimitConfig { scale_floor: task.limit.scale_floor.max(floor), ..task.limit.clone() };
        let mut values = Vec::with_capacity(xi.len());
        let mut errors = Vec::with_capacity(xi.len());
        for s in 0..xi.len() {
            let oracle = |e: f64| -> Result<C64> {
                data.iter()
                    .find(|(x, _)| *x == e)
                    .map(|(_, v)| v[s].0)
                    .ok_or_else(|| Error::InvalidInput(format!("no data at eps = {e}")))
            };
            let rep = invert_j2_point(&oracle, task.n, &limit)?;
            let fit_err = data.iter().map(|(_, v)| v[s].1).fold(0.0, f64::max);
            values.push(rep.estimate);
            errors.push(rep.error_bound + fit_err);
        }
        slices.push(FourierSlice { p_index: j, xi: xi.clone(), values, errors });
    }
    let mut out = finish(task, slices, &wp)?;
    out.known_fraction = known_fraction;
    Ok(out)
}

/// Recover `V_2` at `x0_grid x T` from the `rho / 2 rho` pairings through `J1` inversions
/// (moment route for `n = 3`, split route for `n = 4`).
pub fn recover_v2(task: &ReconTask) -> Result<RecoveredPotential> {
    let mut task = task.clone();
    task.m = 2;
    task.validate()?;
    let task = &task;
    let chart = task.chart()?;
    let xi = task.xi_grid();
    let ctx = match task.mode {
        ReconMode::FullDn => Some(FullDnContext::new(task)?),
        ReconMode::SyntheticDn => None,
    };
    let d = task.n - 2;
    let gauge = task.beam.y0_scale.powf(0.5 * d as f64);
    let vt = weighted_truth(task, None)?;
    let known_fraction = RefCell::new(None);
    let mut slices = Vec::new();
    for j in 0..task.targets.len() {
        let geo = target_geometry(task, &chart, j)?;
        // the data only see the part of the geodesic inside the box
        let (lo, hi) = task.box_segment(j);
        let (lo, hi) = (lo.max(geo.path.tau_minus), hi.min(geo.path.tau_plus));
        let anchor = if task.n == 3 { lo - task.beam.anchor_margin } else { 0.0 };
        let pair = JacobiPair::new(&geo.curvature, anchor)?;
        // eps -> per sigma (J1 of Re F, J1 of Im F)
        let cache: RefCell<HashMap<u64, Vec<(C64, C64)>>> = RefCell::new(HashMap::new());
        let fill = |e: f64| -> Result<()> {
            if cache.borrow().contains_key(&e.to_bits()) {
                return Ok(());
            }
            let y = pair.family(e)?.scaled(task.beam.y0_scale);
            let beam = Beam::new(task, &geo.path, &y)?;
            let ladder = task.ladder(e);
            let table = moment_table(
                task,
                ctx.as_ref(),
                &beam,
                &[MomentKind::PlusPair, MomentKind::MinusPair],
                &ladder,
                &vt,
                &mut known_fraction.borrow_mut(),
            )?;
            let cal = beam.calibration() / gauge;
            let s1 = limits(&ladder, &table[0], cal);
            let s2 = limits(&ladder, &table[1], cal);
            let row = s1
                .iter()
                .zip(&s2)
                .map(|(a, b)| {
                    let even = (a.0 + b.0) * 0.5;
                    let odd = (a.0 - b.0) / C64::new(0.0, 2.0);
                    (C64::new(even.re, odd.re), C64::new(even.im, odd.im))
                })
                .collect();
            cache.borrow_mut().insert(e.to_bits(), row);
            Ok(())
        };
        let mut values = Vec::with_capacity(xi.len());
        let mut errors = Vec::with_capacity(xi.len());
        for s in 0..xi.len() {
            let mut parts = [0.0; 2];
            let mut err = 0.0;
            for (part, out) in parts.iter_mut().enumerate() {
                let oracle = |e: f64| -> Result<C64> {
                    fill(e)?;
                    let row = &cache.borrow()[&e.to_bits()];
                    Ok(if part == 0 { row[s].0 } else { row[s].1 })
                };
                if task.n == 3 {
                    let rep = invert_j1_moments(&oracle, &pair, lo, hi, &task.moments)?;
                    *out = rep.f.at(0.0).re;
                    // truncation: compare with two fewer Legendre degrees on the same data
                    let k_max = task.moments.k_max.saturating_sub(2).max(1);
                    let cfg = MomentConfig { k_max, k_fit: task.moments.k_fit.min(task.moments.n_eps - 1).max(k_max + 1), ..task.moments.clone() };
                    let coarse = invert_j1_moments(&oracle, &pair, lo, hi, &cfg)?;
                    err += (coarse.f.at(0.0).re - *out).abs() + rep.data_residual * rep.f.max_abs();
                } else {
                    let e0 = task.limit.eps_grid[0];
                    let sign = branch_sign_at_zero(&pair.family(e0)?, geo.path.tau_minus)?;
                    let rep = invert_j1_point_split(&oracle, sign, &task.limit)?;
                    *out = rep.estimate.re;
                    err += rep.error_bound;
                }
            }
            values.push(C64::new(parts[0], parts[1]));
            errors.push(err);
        }
        slices.push(FourierSlice { p_index: j, xi: xi.clone(), values, errors });
    }
    let mut out = finish(task, slices, &vec![None; task.targets.len()])?;
    out.known_fraction = known_fraction.into_inner();
    Ok(out)
}
