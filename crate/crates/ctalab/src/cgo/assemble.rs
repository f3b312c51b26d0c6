//! Completion of a quasimode to a CGO solution on a truncated cylinder and the norm ladder.

use super::{Quasimode, Sign};
use crate::cylinder::{apply_conjugated, conjugated_solve, window_cutoff, CylinderConfig, CylinderFunction, EigenBasis, SolveReport};
use crate::error::{Error, Result};
use crate::potential::Field;
use crate::quad::{loglog_slope, uniform_derivative};
use crate::C64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssembleConfig {
    pub lambdas: Vec<f64>,
    pub sigma: f64,
    /// Admissible range `|sigma| <= sigma0`.
    pub sigma0: f64,
    /// `x0` interval of the model manifold.
    pub x0_interval: [f64; 2],
    /// Grid extension beyond the interval on each side.
    pub x0_margin: f64,
    pub x0_points: usize,
    /// Transversal torus `[-side/2, side/2)^{n-1}` with `torus_points` nodes per axis.
    pub torus_side: f64,
    pub torus_points: usize,
    /// The model manifold is `x0_interval x {|x'| <= domain_radius}`.
    pub domain_radius: f64,
    /// Ramp of the cutoffs that localize the source near the manifold.
    pub ramp: f64,
    /// Target decay order `s` (recorded with every solution).
    pub target_s: f64,
    pub cylinder: CylinderConfig,
}

impl Default for AssembleConfig {
    fn default() -> Self {
        AssembleConfig {
            lambdas: vec![20.0, 40.0, 80.0, 160.0],
            sigma: 0.5,
            sigma0: 2.0,
            x0_interval: [-1.0, 1.0],
            x0_margin: 0.5,
            x0_points: 97,
            torus_side: 3.2,
            torus_points: 256,
            domain_radius: 1.0,
            ramp: 0.25,
            target_s: 0.0,
            cylinder: CylinderConfig::default(),
        }
    }
}

impl AssembleConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| Err(Error::ConfigInvalid { field: field.into(), reason: reason.into() });
        if self.lambdas.is_empty() || self.lambdas.iter().any(|l| !(*l > 0.0)) {
            return bad("lambdas", "need at least one positive lambda");
        }
        if !(self.sigma.abs() <= self.sigma0) {
            return bad("sigma", "|sigma| exceeds sigma0");
        }
        if !(self.x0_interval[1] > self.x0_interval[0]) {
            return bad("x0_interval", "empty interval");
        }
        if self.x0_points < 16 || self.torus_points < 8 {
            return bad("x0_points", "grid too coarse");
        }
        if !(self.ramp > 0.0) || !(self.x0_margin >= self.ramp) {
            return bad("ramp", "ramp must be positive and fit inside the x0 margin");
        }
        if !(self.domain_radius + self.ramp < 0.5 * self.torus_side) {
            return bad("torus_side", "torus must contain the cutoff support");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub lambda: f64,
    pub norm_name: String,
    pub value: f64,
}

/// One completed solution `U = e^{+-lambda x0}(e^{i sigma x0} V + R)` with the growth factor removed.
#[derive(Debug, Clone)]
pub struct CgoSolution {
    pub sign: Sign,
    pub rho: C64,
    pub target_s: f64,
    pub remainder: CylinderFunction,
    pub solve: SolveReport,
    /// `||L(e^{i sigma x0} V + R)|| / ||L(e^{i sigma x0} V)||` on the model manifold.
    pub pde_residual: f64,
    pub norms: Vec<RateRow>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CgoReport {
    pub rows: Vec<RateRow>,
    /// Log-log slope against lambda of every recorded norm.
    pub slopes: Vec<(String, f64)>,
}

impl CgoReport {
    pub fn slope(&self, name: &str) -> Option<f64> {
        self.slopes.iter().find(|s| s.0 == name).map(|s| s.1)
    }

    /// Rates CSV `lambda,norm_name,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lambda,norm_name,value\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{:.12e}\n", r.lambda, r.norm_name, r.value));
        }
        s
    }
}

/// Mask of the model manifold and the localizing cutoff on the cylinder grid.
struct Layout {
    x0: Vec<f64>,
    basis: EigenBasis,
    inside: Vec<bool>,
    cutoff: Vec<f64>,
}

fn layout(cfg: &AssembleConfig, dim: usize) -> Result<Layout> {
    let [a, b] = cfg.x0_interval;
    let x0 = CylinderFunction::grid(a - cfg.x0_margin, b + cfg.x0_margin, cfg.x0_points);
    let basis = EigenBasis::cube(dim, cfg.torus_side, cfg.torus_points)?;
    let m = basis.len();
    let radii: Vec<f64> = (0..m).map(|j| basis.point(j).iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut inside = Vec::with_capacity(x0.len() * m);
    let mut cutoff = Vec::with_capacity(x0.len() * m);
    for &t in &x0 {
        let wt = window_cutoff(t, a, b, cfg.ramp);
        let tin = t >= a && t <= b;
        for &r in &radii {
            inside.push(tin && r <= cfg.domain_radius);
            cutoff.push(wt * window_cutoff(r, -1.0, cfg.domain_radius, cfg.ramp));
        }
    }
    Ok(Layout { x0, basis, inside, cutoff })
}

/// `e^{i sigma x0} V` on the cylinder grid.
fn sample_quasimode(q: &Quasimode, sign: Sign, rho: C64, lay: &Layout) -> Result<CylinderFunction> {
    let amp = match sign {
        Sign::Plus => &q.plus,
        Sign::Minus => &q.minus,
    };
    if amp.vk.is_empty() {
        // V does not depend on x0: one transversal evaluation suffices
        let m = lay.basis.len();
        let slice: Vec<C64> = (0..m).map(|j| q.eval(sign, rho, &[0.0].iter().copied().chain(lay.basis.point(j)).collect::<Vec<_>>())).collect();
        let mut values = Vec::with_capacity(lay.x0.len() * m);
        for &t in &lay.x0 {
            let e = C64::new(0.0, rho.im * t).exp();
            values.extend(slice.iter().map(|v| v * e));
        }
        Ok(CylinderFunction { x0: lay.x0.clone(), basis: lay.basis.clone(), values })
    } else {
        CylinderFunction::from_fn(lay.x0.clone(), lay.basis.clone(), |x| q.eval(sign, rho, x))
    }
}

/// Spectral transversal gradient and 9-point `x0` derivative.
fn gradients(u: &CylinderFunction) -> Vec<Vec<C64>> {
    let m = u.basis.len();
    let d = u.basis.dim();
    let mut out = vec![Vec::with_capacity(u.values.len()); d + 1];
    let nx = u.x0.len();
    let mut d0 = vec![C64::new(0.0, 0.0); u.values.len()];
    let mut line = vec![C64::new(0.0, 0.0); nx];
    for j in 0..m {
        for i in 0..nx {
            line[i] = u.values[i * m + j];
        }
        for (i, v) in uniform_derivative(&line, u.dx0(), 1, 9).into_iter().enumerate() {
            d0[i * m + j] = v;
        }
    }
    out[0] = d0;
    let wv: Vec<Vec<f64>> = (0..m).map(|l| u.basis.wavevector(l)).collect();
    for i in 0..nx {
        let coef = u.basis.forward(u.slice(i));
        for a in 0..d {
            let dc: Vec<C64> = coef.iter().zip(&wv).map(|(c, w)| c * C64::new(0.0, w[a])).collect();
            out[a + 1].extend(u.basis.inverse(&dc));
        }
    }
    out
}

struct Masked {
    l1: f64,
    l2: f64,
    h1: f64,
    c0: f64,
    c1: f64,
}

fn masked_norms(u: &CylinderFunction, inside: &[bool]) -> Masked {
    let dv = u.dx0() * u.basis.cell_volume();
    let g = gradients(u);
    let (mut l1, mut l2, mut g2, mut c0, mut c1) = (0.0, 0.0, 0.0, 0.0f64, 0.0f64);
    for (k, v) in u.values.iter().enumerate() {
        if !inside[k] {
            continue;
        }
        let a = v.norm();
        let gs: f64 = g.iter().map(|c| c[k].norm_sqr()).sum();
        l1 += a * dv;
        l2 += a * a * dv;
        g2 += gs * dv;
        c0 = c0.max(a);
        c1 = c1.max(gs.sqrt());
    }
    Masked { l1, l2: l2.sqrt(), h1: (l2 + g2).sqrt(), c0, c1: c0 + c1 }
}

fn masked_l2_diff(a: &CylinderFunction, b: Option<&CylinderFunction>, inside: &[bool]) -> f64 {
    let dv = a.dx0() * a.basis.cell_volume();
    let mut s = 0.0;
    for (k, v) in a.values.iter().enumerate() {
        if inside[k] {
            let w = match b {
                Some(b) => v + b.values[k],
                None => *v,
            };
            s += w.norm_sqr() * dv;
        }
    }
    s.sqrt()
}

/// Completes the quasimode for one `lambda`: the source `F = -chi L_{+-lambda}(e^{i sigma x0} V)`
/// (cut off near the model manifold) is handed to the cylinder right inverse.
pub fn assemble_one(q: &Quasimode, sign: Sign, lambda: f64, v1: &Field, cfg: &AssembleConfig) -> Result<CgoSolution> {
    cfg.validate()?;
    let dim = q.phase.path.dim();
    let lay = layout(cfg, dim)?;
    let rho = C64::new(lambda, cfg.sigma);
    let lam = lambda * sign.value();
    // the torus reaches beyond the jet: the y1 window keeps the samples smooth
    let mut qw = q.clone();
    qw.t_window = Some(q.effective_window());
    let u = sample_quasimode(&qw, sign, rho, &lay)?;
    drop(qw);
    let lu = apply_conjugated(&u, lam, v1);
    let mut f = lu.clone();
    f.values.iter_mut().zip(&lay.cutoff).for_each(|(v, c)| *v *= -c);
    let sol = conjugated_solve(&f, lam, v1, &cfg.cylinder)?;
    let mut full = u.clone();
    full.values.iter_mut().zip(&sol.r.values).for_each(|(a, b)| *a += b);
    let res = apply_conjugated(&full, lam, v1);
    let everywhere = vec![true; lay.inside.len()];
    let src_total = masked_l2_diff(&f, None, &everywhere);
    let rem_total = masked_l2_diff(&sol.r, None, &everywhere);
    let src = masked_l2_diff(&lu, None, &lay.inside);
    let pde_residual = if src > 0.0 { masked_l2_diff(&res, None, &lay.inside) / src } else { 0.0 };
    let qn = masked_norms(&u, &lay.inside);
    let sn = masked_norms(&lu, &lay.inside);
    let rn = masked_norms(&sol.r, &lay.inside);
    let row = |name: &str, value: f64| RateRow { lambda, norm_name: name.into(), value };
    let norms = vec![
        row("quasimode_l1", qn.l1),
        row("quasimode_l2", qn.l2),
        row("quasimode_c0", qn.c0),
        row("quasimode_c1", qn.c1),
        row("residual_l2", sn.l2),
        row("residual_h1", sn.h1),
        row("remainder_l2", rn.l2),
        row("remainder_h1", rn.h1),
        row("remainder_c0", rn.c0),
        row("source_l2", src_total),
        row("remainder_total_l2", rem_total),
        row("pde_residual", pde_residual),
    ];
    Ok(CgoSolution { sign, rho, target_s: cfg.target_s, remainder: sol.r, solve: sol.report, pde_residual, norms })
}

/// Runs the `lambda` ladder and collects the norm table with log-log slopes. Solutions are
/// returned only when `keep` is set (each remainder is a full cylinder grid).
pub fn assemble_cgo(q: &Quasimode, sign: Sign, v1: &Field, cfg: &AssembleConfig, keep: bool) -> Result<(CgoReport, Vec<CgoSolution>)> {
    cfg.validate()?;
    let mut report = CgoReport::default();
    let mut kept = Vec::new();
    for &lambda in &cfg.lambdas {
        let sol = assemble_one(q, sign, lambda, v1, cfg)?;
        report.rows.extend(sol.norms.iter().cloned());
        if keep {
            kept.push(sol);
        }
    }
    let mut names: Vec<String> = Vec::new();
    for r in &report.rows {
        if !names.contains(&r.norm_name) {
            names.push(r.norm_name.clone());
        }
    }
    if cfg.lambdas.len() >= 2 {
        for name in names {
            let (x, y): (Vec<f64>, Vec<f64>) =
                report.rows.iter().filter(|r| r.norm_name == name).map(|r| (r.lambda, r.value)).unzip();
            if y.iter().all(|v| *v > 0.0) {
                report.slopes.push((name, loglog_slope(&x, &y)));
            }
        }
    }
    Ok((report, kept))
}
