//! Jacobi weighted ray transforms
//!
//! ```text
//! J1_Y f = int f(gamma(t)) (det Y(t))^{-1/2} dt,    J2_Y f = int f(gamma(t)) |det Y(t)|^{-1} dt
//! ```
//!
//! over `[tau_-, tau_+]`, and three constructive inversions: the `eps -> 0` localization of `J2`,
//! the imaginary-part split of `J1` for `n = 4`, and the moment route of `J1` for `n = 3`.

use crate::error::{Error, Result};
use crate::jacobi::{ComplexJacobiField, JacobiPair};
use crate::manifold::GeodesicPath;
use crate::quad::{cellwise_gauss, chebyshev_nodes, gauss_legendre_on, legendre_all, uniform_stencil};
use crate::C64;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Samples of `f(gamma(t_i))` on a uniform grid together with the exit times.
#[derive(Debug, Clone, Serialize)]
pub struct GeodesicSample {
    pub times: Vec<f64>,
    pub values: Vec<C64>,
    pub tau_minus: f64,
    pub tau_plus: f64,
}

impl GeodesicSample {
    /// Restrict a field `f(x)` to the path samples.
    pub fn from_field(path: &GeodesicPath, f: impl Fn(&[f64]) -> C64) -> Self {
        GeodesicSample {
            times: path.times.clone(),
            values: path.pos.iter().map(|x| f(x)).collect(),
            tau_minus: path.tau_minus,
            tau_plus: path.tau_plus,
        }
    }

    /// Sample a function of the arclength parameter on the path grid.
    pub fn from_time_fn(path: &GeodesicPath, f: impl Fn(f64) -> C64) -> Self {
        GeodesicSample {
            times: path.times.clone(),
            values: path.times.iter().map(|&t| f(t)).collect(),
            tau_minus: path.tau_minus,
            tau_plus: path.tau_plus,
        }
    }

    /// Cubic interpolation at `t`.
    pub fn at(&self, t: f64) -> C64 {
        let h = self.times[1] - self.times[0];
        let (start, w) = uniform_stencil(self.times[0], h, self.times.len(), t);
        (0..4).map(|j| self.values[start + j] * w[j]).sum()
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn scaled_sum(&self, a: C64, other: &GeodesicSample, b: C64) -> GeodesicSample {
        GeodesicSample {
            values: self.values.iter().zip(&other.values).map(|(u, v)| a * u + b * v).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    First,
    Second,
}

/// Transform values along an `eps` ladder.
#[derive(Debug, Clone, Serialize)]
pub struct TransformCurve {
    pub kind: TransformKind,
    pub eps: Vec<f64>,
    pub values: Vec<C64>,
    pub zeta: Option<f64>,
}

impl TransformCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps,J_re,J_im\n");
        for (e, v) in self.eps.iter().zip(&self.values) {
            out.push_str(&format!("{:.12e},{:.12e},{:.12e}\n", e, v.re, v.im));
        }
        out
    }
}

/// Continuous branch of `sqrt(det Y(t))`, principal at the left end of the window.
struct Branch<'a> {
    y: &'a ComplexJacobiField,
    nodes: Vec<f64>,
    vals: Vec<C64>,
    /// Location of the smallest `|det Y|` node.
    t_min: f64,
    /// Approximate `int |det Y|^{-1/2}` over the window.
    mass: f64,
}

const BRANCH_STEP: f64 = 0.5;

impl<'a> Branch<'a> {
    fn new(y: &'a ComplexJacobiField, a: f64, b: f64) -> Result<Self> {
        let mut coarse = vec![a];
        coarse.extend(y.times.iter().copied().filter(|&t| t > a + 1e-12 && t < b - 1e-12));
        coarse.push(b);
        let mut nodes = vec![a];
        let mut dets = vec![y.det_at(a)];
        for w in coarse.windows(2) {
            Self::refine(y, w[0], w[1], *dets.last().unwrap(), &mut nodes, &mut dets, 0);
        }
        let scale = dets.iter().map(|d| d.norm()).fold(0.0, f64::max);
        let (imin, dmin) = dets
            .iter()
            .enumerate()
            .map(|(i, d)| (i, d.norm()))
            .fold((0, f64::INFINITY), |acc, p| if p.1 < acc.1 { p } else { acc });
        if dmin < 1e-12 * scale {
            return Err(Error::BranchAmbiguity { t: nodes[imin] });
        }
        let mut vals = Vec::with_capacity(dets.len());
        vals.push(dets[0].sqrt());
        for d in &dets[1..] {
            let s = d.sqrt();
            let prev = *vals.last().unwrap();
            vals.push(if (s - prev).norm() <= (s + prev).norm() { s } else { -s });
        }
        let mass = nodes
            .windows(2)
            .zip(vals.windows(2))
            .map(|(t, v)| 0.5 * (t[1] - t[0]) * (1.0 / v[0].norm() + 1.0 / v[1].norm()))
            .sum();
        let t_min = nodes[imin];
        Ok(Branch { y, nodes, vals, t_min, mass })
    }

    fn refine(
        y: &ComplexJacobiField,
        l: f64,
        r: f64,
        dl: C64,
        nodes: &mut Vec<f64>,
        dets: &mut Vec<C64>,
        depth: usize,
    ) {
        let dr = y.det_at(r);
        if depth < 40 && (dr / dl).arg().abs() > BRANCH_STEP {
            let m = 0.5 * (l + r);
            Self::refine(y, l, m, dl, nodes, dets, depth + 1);
            let dm = *dets.last().unwrap();
            Self::refine(y, m, r, dm, nodes, dets, depth + 1);
        } else {
            nodes.push(r);
            dets.push(dr);
        }
    }

    /// `sqrt(det Y(t))` on the tracked branch.
    fn sqrt_det(&self, t: f64) -> C64 {
        let i = self.nodes.partition_point(|&s| s <= t).saturating_sub(1).min(self.nodes.len() - 1);
        let s = self.y.det_at(t).sqrt();
        let prev = self.vals[i];
        if (s - prev).norm() <= (s + prev).norm() {
            s
        } else {
            -s
        }
    }
}

/// Nodes and values of the continuous branch of `sqrt(det Y)` on `[a, b]`, principal at `a`.
/// Evaluate with [`branch_sqrt_det`].
pub(crate) fn sqrt_det_branch(y: &ComplexJacobiField, a: f64, b: f64) -> Result<(Vec<f64>, Vec<C64>)> {
    let br = Branch::new(y, a, b)?;
    Ok((br.nodes, br.vals))
}

pub(crate) fn branch_sqrt_det(y: &ComplexJacobiField, nodes: &[f64], vals: &[C64], t: f64) -> C64 {
    let i = nodes.partition_point(|&s| s <= t).saturating_sub(1).min(nodes.len() - 1);
    let s = y.det_at(t).sqrt();
    let prev = vals[i];
    if (s - prev).norm() <= (s + prev).norm() {
        s
    } else {
        -s
    }
}

const REL_TOL: f64 = 1e-13;

fn check_grid(f: &GeodesicSample, y: &ComplexJacobiField) -> Result<()> {
    if f.times.len() != y.times.len() || (f.times[0] - y.times[0]).abs() > 1e-9 {
        return Err(Error::InvalidInput("sample grid does not match the Jacobi field grid".into()));
    }
    Ok(())
}

/// `J1` over `[tau_-, tau_+]`.
pub fn j1_forward(f: &GeodesicSample, y: &ComplexJacobiField) -> Result<C64> {
    let (inner, outer) = j1_forward_parts(f, y, 0.0)?;
    Ok(inner + outer)
}

/// `J1` split into the part over `(-zeta, zeta)` and the rest, branch tracked from `tau_-`.
pub fn j1_forward_parts(f: &GeodesicSample, y: &ComplexJacobiField, zeta: f64) -> Result<(C64, C64)> {
    check_grid(f, y)?;
    let (a, b) = (f.tau_minus, f.tau_plus);
    let br = Branch::new(y, a, b)?;
    let tol = REL_TOL * br.mass * f.max_abs().max(1e-300);
    let g = |t: f64| f.at(t) / br.sqrt_det(t);
    split_integral(&g, &f.times, a, b, zeta, br.t_min, tol)
}

/// `J2` over `[tau_-, tau_+]`.
pub fn j2_forward(f: &GeodesicSample, y: &ComplexJacobiField) -> Result<C64> {
    let (inner, outer) = j2_forward_parts(f, y, 0.0)?;
    Ok(inner + outer)
}

/// `J2` split into the part over `(-zeta, zeta)` and the rest.
pub fn j2_forward_parts(f: &GeodesicSample, y: &ComplexJacobiField, zeta: f64) -> Result<(C64, C64)> {
    check_grid(f, y)?;
    let (a, b) = (f.tau_minus, f.tau_plus);
    let br = Branch::new(y, a, b)?;
    let mass: f64 = br
        .nodes
        .windows(2)
        .zip(br.vals.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (1.0 / v[0].norm_sqr() + 1.0 / v[1].norm_sqr()))
        .sum();
    let tol = REL_TOL * mass * f.max_abs().max(1e-300);
    let g = |t: f64| f.at(t) / y.det_at(t).norm();
    split_integral(&g, &f.times, a, b, zeta, br.t_min, tol)
}

fn split_integral(
    g: &dyn Fn(f64) -> C64,
    times: &[f64],
    a: f64,
    b: f64,
    zeta: f64,
    t_min: f64,
    tol: f64,
) -> Result<(C64, C64)> {
    let cells = |l: f64, r: f64| -> Vec<f64> {
        let mut pts = vec![l];
        pts.extend(times.iter().copied().filter(|&t| t > l + 1e-12 && t < r - 1e-12));
        if t_min > l + 1e-12 && t_min < r - 1e-12 {
            pts.push(t_min);
        }
        pts.push(r);
        pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        pts.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
        pts
    };
    if zeta <= 0.0 {
        return Ok((cellwise_gauss(&g, &cells(a, b), tol), C64::new(0.0, 0.0)));
    }
    let (l, r) = ((-zeta).max(a), zeta.min(b));
    let inner = cellwise_gauss(&g, &cells(l, r), tol);
    let outer = cellwise_gauss(&g, &cells(a, l), tol) + cellwise_gauss(&g, &cells(r, b), tol);
    Ok((inner, outer))
}

/// Orientation `+-1` of the tracked branch of `sqrt(det Y)` at `t = 0` relative to
/// `(t - i eps)^{(n-2)/2}`; `Y` must be an `eps` family anchored at `0`.
pub fn branch_sign_at_zero(y: &ComplexJacobiField, tau_minus: f64) -> Result<f64> {
    let br = Branch::new(y, tau_minus, 0.0)?;
    let v = br.sqrt_det(0.0);
    let eps = -y.y0[(0, 0)].im;
    let m = y.dim() as i32;
    let reference = C64::new(0.0, -eps).powf(m as f64 / 2.0);
    Ok(if (v / reference).re >= 0.0 { 1.0 } else { -1.0 })
}

/// `int_{-zeta}^{zeta} |t - i eps|^{-(n-2)} dt` in closed form.
pub fn normalization_integral(zeta: f64, eps: f64, n: usize) -> Result<f64> {
    if !(zeta > eps && eps > 0.0) {
        return Err(Error::InvalidInput("need zeta > eps > 0".into()));
    }
    match n {
        3 => Ok(2.0 * (zeta / eps).asinh()),
        4 => Ok(2.0 / eps * (zeta / eps).atan()),
        _ => Err(Error::InvalidInput(format!("dimension n = {n} not in {{3, 4}}"))),
    }
}

/// `int_{-zeta}^{zeta} Im (t - i eps)^{-1} dt = 2 arctan(zeta / eps)`.
pub fn oscillatory_integral(zeta: f64, eps: f64) -> f64 {
    2.0 * (zeta / eps).atan()
}

/// Forward transforms of a fixed `f` for any `eps`, as seen by the inversion drivers.
#[derive(Debug, Clone)]
pub struct ForwardOracle {
    pub f: GeodesicSample,
    pub pair: JacobiPair,
}

impl ForwardOracle {
    pub fn new(f: GeodesicSample, pair: JacobiPair) -> Self {
        ForwardOracle { f, pair }
    }

    pub fn j1(&self, eps: f64) -> Result<C64> {
        j1_forward(&self.f, &self.pair.family(eps)?)
    }

    pub fn j2(&self, eps: f64) -> Result<C64> {
        j2_forward(&self.f, &self.pair.family(eps)?)
    }

    fn real_input(&self) -> Result<()> {
        let max_imag = self.f.max_imag();
        if max_imag > 1e-12 {
            return Err(Error::NonRealInput { max_imag });
        }
        Ok(())
    }

    /// [`invert_j2_point`] at the anchor of the pair.
    pub fn invert_j2(&self, cfg: &LimitConfig) -> Result<InversionReport> {
        invert_j2_point(&|e| self.j2(e), self.pair.x.dim() + 2, cfg)
    }

    /// [`invert_j1_point_split`] at the anchor of the pair, `n = 4`.
    pub fn invert_j1_split(&self, cfg: &LimitConfig) -> Result<InversionReport> {
        self.real_input()?;
        if self.pair.x.dim() != 2 {
            return Err(Error::InvalidInput("the J1 split inversion needs n = 4".into()));
        }
        let e0 = *cfg.eps_grid.first().ok_or_else(|| Error::InvalidInput("empty eps grid".into()))?;
        let sigma = branch_sign_at_zero(&self.pair.family(e0)?, self.f.tau_minus)?;
        invert_j1_point_split(&|e| self.j1(e), sigma, cfg)
    }

    /// [`invert_j1_moments`] with the pair anchored before `tau_-`, `n = 3`.
    pub fn invert_moments(&self, cfg: &MomentConfig) -> Result<MomentReport> {
        self.real_input()?;
        invert_j1_moments(&|e| self.j1(e), &self.pair, self.f.tau_minus, self.f.tau_plus, cfg)
    }

    pub fn curve(&self, kind: TransformKind, eps: &[f64], zeta: Option<f64>) -> Result<TransformCurve> {
        let values = eps
            .iter()
            .map(|&e| match kind {
                TransformKind::First => self.j1(e),
                TransformKind::Second => self.j2(e),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TransformCurve { kind, eps: eps.to_vec(), values, zeta })
    }
}

/// Parameters of the `eps -> 0`, `zeta -> 0` extrapolations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimitConfig {
    /// Roughly geometric ladder with ratio about 1/3, decreasing.
    pub eps_grid: Vec<f64>,
    pub zetas: Vec<f64>,
    /// Relative tolerance on the spread of the last two extrapolants.
    pub tol: f64,
    /// Lower bound on the magnitude the tolerance is relative to, for values that vanish.
    pub scale_floor: f64,
}

impl Default for LimitConfig {
    fn default() -> Self {
        LimitConfig { eps_grid: vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3], zetas: vec![0.4, 0.2, 0.1], tol: 0.05, scale_floor: 0.0 }
    }
}

/// `eps_k = eps0 3^{-k}`, `k = 0..count`.
pub fn eps_ladder(eps0: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| eps0 * 3f64.powi(-(k as i32))).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct InversionReport {
    pub estimate: C64,
    pub error_bound: f64,
    pub eps_grid: Vec<f64>,
    pub zeta: f64,
    /// `(zeta, extrapolated estimate)` for every window in the outer loop.
    pub per_zeta: Vec<(f64, C64)>,
}

/// One Richardson sweep removing an `eps^p` term from a sequence on a geometric ladder.
fn richardson(vals: &[C64], eps: &[f64], p: f64) -> Vec<C64> {
    vals.windows(2)
        .zip(eps.windows(2))
        .map(|(v, e)| {
            let q = (e[1] / e[0]).powf(p);
            (v[1] - v[0] * q) / (1.0 - q)
        })
        .collect()
}

/// Least-squares line `a + b zeta`; returns `(a, max residual)`.
fn zeta_fit(per: &[(f64, C64)]) -> (C64, f64) {
    if per.len() < 2 {
        return (per[0].1, 0.0);
    }
    let n = per.len() as f64;
    let mz = per.iter().map(|p| p.0).sum::<f64>() / n;
    let mv: C64 = per.iter().map(|p| p.1).sum::<C64>() / n;
    let szz: f64 = per.iter().map(|p| (p.0 - mz).powi(2)).sum();
    let szv: C64 = per.iter().map(|p| (p.1 - mv) * (p.0 - mz)).sum();
    let slope = szv / szz;
    let a = mv - slope * mz;
    let res = per.iter().map(|p| (p.1 - a - slope * p.0).norm()).fold(0.0, f64::max);
    (a, res)
}

fn finish(per: Vec<(f64, C64)>, spreads: &[f64], cfg: &LimitConfig) -> Result<InversionReport> {
    let (est, res) = zeta_fit(&per);
    let spread = spreads.iter().copied().fold(0.0, f64::max);
    let scale = est.norm().max(per.iter().map(|p| p.1.norm()).fold(0.0, f64::max)).max(cfg.scale_floor).max(1e-300);
    if spread > cfg.tol * scale {
        return Err(Error::NoConvergence { spread, tol: cfg.tol * scale });
    }
    let zeta = per.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    Ok(InversionReport { estimate: est, error_bound: spread + res, eps_grid: cfg.eps_grid.clone(), zeta, per_zeta: per })
}

fn ladder_below(cfg: &LimitConfig, zeta: f64) -> Result<Vec<f64>> {
    let e: Vec<f64> = cfg.eps_grid.iter().copied().filter(|&e| e < zeta).collect();
    if e.len() < 4 {
        return Err(Error::InvalidInput(format!("need at least four eps values below zeta = {zeta}")));
    }
    if e.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput("eps grid must be strictly decreasing".into()));
    }
    Ok(e)
}

/// Recover `f(p)` from `eps -> J2_{Y^eps} f` with `Y^eps` anchored at `p = gamma(0)`.
///
/// `J2 = f(p) N(zeta, eps) + B(eps)` with `B` bounded, so consecutive differences divided by the
/// increments of the normalization integral `N` cancel `B`; a second Richardson sweep in `eps`
/// removes the leading remainder.
pub fn invert_j2_point(oracle: &dyn Fn(f64) -> Result<C64>, n: usize, cfg: &LimitConfig) -> Result<InversionReport> {
    let mut cache: Vec<(f64, C64)> = Vec::new();
    let mut eval = |e: f64| -> Result<C64> {
        if let Some(v) = cache.iter().find(|c| c.0 == e) {
            return Ok(v.1);
        }
        let v = oracle(e)?;
        cache.push((e, v));
        Ok(v)
    };
    let p = if n == 4 { 2.0 } else { 1.0 };
    let mut per = Vec::new();
    let mut spreads = Vec::new();
    for &zeta in &cfg.zetas {
        let eps = ladder_below(cfg, zeta)?;
        let j = eps.iter().map(|&e| eval(e)).collect::<Result<Vec<_>>>()?;
        let nz = eps.iter().map(|&e| normalization_integral(zeta, e, n)).collect::<Result<Vec<_>>>()?;
        let lvl1: Vec<C64> = (0..eps.len() - 1).map(|k| (j[k] - j[k + 1]) / (nz[k] - nz[k + 1])).collect();
        let lvl2 = richardson(&lvl1, &eps[..eps.len() - 1], p);
        let l = lvl2.len();
        spreads.push((lvl2[l - 1] - lvl2[l - 2]).norm());
        per.push((zeta, lvl2[l - 1]));
    }
    finish(per, &spreads, cfg)
}

/// Recover a real `f(p)` from `eps -> J1_{Y^eps} f` (`n = 4`) through
/// `S_eps = J1 - conj J1 ~ 2 pi i sigma f(p)`, with the finite-window oscillatory integral
/// `2 arctan(zeta / eps)` in place of `pi`. `sigma` is [`branch_sign_at_zero`].
pub fn invert_j1_point_split(
    oracle: &dyn Fn(f64) -> Result<C64>,
    sigma: f64,
    cfg: &LimitConfig,
) -> Result<InversionReport> {
    let mut cache: Vec<(f64, C64)> = Vec::new();
    let mut eval = |e: f64| -> Result<C64> {
        if let Some(v) = cache.iter().find(|c| c.0 == e) {
            return Ok(v.1);
        }
        let v = oracle(e)?;
        cache.push((e, v));
        Ok(v)
    };
    let mut per = Vec::new();
    let mut spreads = Vec::new();
    for &zeta in &cfg.zetas {
        let eps = ladder_below(cfg, zeta)?;
        let est = eps
            .iter()
            .map(|&e| {
                let s = eval(e)?;
                let s_eps = s - s.conj();
                Ok(s_eps / C64::new(0.0, 2.0 * sigma * oscillatory_integral(zeta, e)))
            })
            .collect::<Result<Vec<C64>>>()?;
        let lvl1 = richardson(&est, &eps, 1.0);
        let lvl2 = richardson(&lvl1, &eps[..eps.len() - 1], 2.0);
        let l = lvl2.len();
        spreads.push((lvl2[l - 1] - lvl2[l - 2]).norm());
        per.push((zeta, lvl2[l - 1]));
    }
    finish(per, &spreads, cfg)
}

/// Parameters of the `n = 3` moment route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MomentConfig {
    /// Highest moment order; the reconstruction uses Legendre degrees `0..=k_max`.
    pub k_max: usize,
    /// Degree of the polynomial fit of `eps -> J1` near `eps = 0`.
    pub k_fit: usize,
    /// Chebyshev `eps` nodes inside the Taylor disk.
    pub n_eps: usize,
    /// Fraction of the Taylor radius `1 / max X~` covered by the Chebyshev nodes.
    pub radius_fraction: f64,
    /// Log-spaced nodes beyond the Taylor radius, up to `eps_span / max X~`.
    pub n_eps_wide: usize,
    pub eps_span: f64,
    /// Relative Tikhonov level: singular values below `tikhonov * s_max` are damped.
    pub tikhonov: f64,
    pub cond_cap: f64,
}

impl Default for MomentConfig {
    fn default() -> Self {
        MomentConfig {
            k_max: 8,
            k_fit: 16,
            n_eps: 32,
            radius_fraction: 0.9,
            n_eps_wide: 24,
            eps_span: 20.0,
            tikhonov: 1e-8,
            cond_cap: 1e12,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    /// Reconstruction of `f` on the samples inside `[tau_-, tau_+]`.
    pub f: GeodesicSample,
    /// Moments `int f X^{-1/2} X~^k dt` read off the Taylor fit of the data near `eps = 0`.
    pub moments: Vec<f64>,
    /// The same moments of the reconstruction.
    pub refit_moments: Vec<f64>,
    /// Relative residual of the reconstruction against the transform data.
    pub data_residual: f64,
    pub condition: f64,
    pub eps_grid: Vec<f64>,
    pub max_imag_moment: f64,
}

fn binom_half(k: usize) -> f64 {
    // binom(2k, k) / 4^k
    (1..=k).fold(1.0, |acc, j| acc * (2 * j - 1) as f64 / (2 * j) as f64)
}

/// Monomial coefficients of `T_j(2u - 1)` for `j = 0..=deg`.
fn shifted_chebyshev_monomials(deg: usize) -> Vec<Vec<f64>> {
    let mut t: Vec<Vec<f64>> = vec![vec![1.0], vec![-1.0, 2.0]];
    for j in 2..=deg {
        let (a, b) = (&t[j - 1], &t[j - 2]);
        let mut c = vec![0.0; j + 1];
        for (k, v) in a.iter().enumerate() {
            c[k + 1] += 4.0 * v;
            c[k] -= 2.0 * v;
        }
        for (k, v) in b.iter().enumerate() {
            c[k] -= v;
        }
        t.push(c);
    }
    t.truncate(deg + 1);
    t
}

/// The change of variables `t~ = X~(t) = Z / X` along the window.
struct MomentGeometry {
    idx: Vec<usize>,
    xs: Vec<f64>,
    xt: Vec<f64>,
    lo: f64,
    hi: f64,
}

fn moment_geometry(pair: &JacobiPair, tau_minus: f64, tau_plus: f64) -> Result<MomentGeometry> {
    if pair.x.dim() != 1 {
        return Err(Error::InvalidInput("moment route needs n = 3".into()));
    }
    let idx: Vec<usize> = pair.x.window(tau_minus, tau_plus).collect();
    let xs: Vec<f64> = idx.iter().map(|&i| pair.x.y[i][(0, 0)].re).collect();
    let zs: Vec<f64> = idx.iter().map(|&i| pair.z.y[i][(0, 0)].re).collect();
    if xs.iter().any(|&x| x <= 0.0) {
        return Err(Error::InvalidInput("X must stay positive on the window (conjugate point)".into()));
    }
    let xt: Vec<f64> = xs.iter().zip(&zs).map(|(x, z)| z / x).collect();
    if let Some(w) = (0..xt.len() - 1).find(|&k| xt[k + 1] >= xt[k]) {
        return Err(Error::NonMonotone { t: pair.x.times[idx[w]] });
    }
    let xt_of = |t: f64| pair.z.at(t).0[(0, 0)].re / pair.x.at(t).0[(0, 0)].re;
    Ok(MomentGeometry { idx, xs, xt, lo: xt_of(tau_plus), hi: xt_of(tau_minus) })
}

/// Taylor coefficients of `eps -> J1` fitted on `eps` nodes inside `(0, e_hi]`, divided by those
/// of `(1 - i eps t~)^{-1/2}`. Returns the moments and the largest imaginary part met.
pub fn taylor_moments(eps: &[f64], vals: &[C64], e_hi: f64, k_fit: usize, k_max: usize) -> Result<(Vec<f64>, f64)> {
    if k_fit <= k_max || eps.len() <= k_fit {
        return Err(Error::InvalidInput("need k_max < k_fit < number of eps nodes".into()));
    }
    let a = DMatrix::from_fn(eps.len(), k_fit + 1, |r, j| {
        let s = (2.0 * eps[r] / e_hi - 1.0).clamp(-1.0, 1.0);
        (j as f64 * s.acos()).cos()
    });
    let svd = a.svd(true, true);
    let mut cheb = vec![C64::new(0.0, 0.0); k_fit + 1];
    for part in 0..2 {
        let b = DVector::from_iterator(eps.len(), vals.iter().map(|v| if part == 0 { v.re } else { v.im }));
        let sol = svd.solve(&b, 1e-14).map_err(|e| Error::InvalidInput(e.to_string()))?;
        for j in 0..=k_fit {
            cheb[j] += if part == 0 { C64::new(sol[j], 0.0) } else { C64::new(0.0, sol[j]) };
        }
    }
    let tm = shifted_chebyshev_monomials(k_fit);
    let mut moments = Vec::with_capacity(k_max + 1);
    let mut max_imag: f64 = 0.0;
    for k in 0..=k_max {
        // coefficient of u^k, u = eps / e_hi
        let ck: C64 = (k..=k_fit).map(|j| cheb[j] * tm[j][k]).sum();
        let mu = ck / e_hi.powi(k as i32) / (C64::new(0.0, 1.0).powi(k as i32) * binom_half(k));
        max_imag = max_imag.max(mu.im.abs());
        moments.push(mu.re);
    }
    Ok((moments, max_imag))
}

/// Tikhonov solution of `a x = b` with damping `(level * s_max)^2`; returns `(x, condition)`.
fn tikhonov_solve(a: DMatrix<f64>, b: &DVector<f64>, level: f64) -> (DVector<f64>, f64) {
    let sv = a.svd(true, true);
    let smax = sv.singular_values.max();
    let cond = smax / sv.singular_values.min();
    let u = sv.u.as_ref().unwrap();
    let vt = sv.v_t.as_ref().unwrap();
    let alpha = (level * smax).powi(2);
    let mut x = DVector::zeros(vt.nrows());
    for i in 0..sv.singular_values.len() {
        let s = sv.singular_values[i];
        x += vt.row(i).transpose() * (s / (s * s + alpha) * u.column(i).dot(b));
    }
    (x, cond)
}

/// Legendre coefficients of `g` on `[lo, hi]` fitted to `J1(eps) = int g(t~) (1 - i eps t~)^{-1/2} dt~`,
/// the generating function of the moments summed in closed form.
/// Returns `(coefficients, condition, relative residual)`.
pub fn fit_legendre_kernel(
    eps: &[f64],
    vals: &[C64],
    lo: f64,
    hi: f64,
    degree: usize,
    tikhonov: f64,
) -> (DVector<f64>, f64, f64) {
    let kk = degree + 1;
    let (gx, gw) = gauss_legendre_on(64, lo, hi);
    let sm = |tt: f64| (2.0 * tt - (lo + hi)) / (hi - lo);
    let rows = 2 * eps.len();
    let mut a = DMatrix::zeros(rows, kk);
    let mut b = DVector::zeros(rows);
    for (r, (&e, v)) in eps.iter().zip(vals).enumerate() {
        // every sample carries comparable relative weight
        let scale = if v.norm() > 0.0 { 1.0 / v.norm() } else { 1.0 };
        for (xq, wq) in gx.iter().zip(&gw) {
            let ker = C64::new(1.0, -e * xq).sqrt().inv() * *wq;
            let p = legendre_all(degree, sm(*xq));
            for j in 0..kk {
                a[(2 * r, j)] += ker.re * p[j] * scale;
                a[(2 * r + 1, j)] += ker.im * p[j] * scale;
            }
        }
        b[2 * r] = v.re * scale;
        b[2 * r + 1] = v.im * scale;
    }
    let (coef, cond) = tikhonov_solve(a.clone(), &b, tikhonov);
    let residual = (&a * &coef - &b).norm() / b.norm().max(1e-300);
    (coef, cond, residual)
}

/// Recover `f` along `gamma` (`n = 3`) from `eps -> J1_{Y^eps} f`, `Y^eps = X - i eps Z` anchored
/// at `pair.anchor < tau_-`.
///
/// With `t~ = X~(t)` and `g = f X^{-1/2} / |X~'|`, `J1(eps) = int g(t~) (1 - i eps t~)^{-1/2} dt~`,
/// whose Taylor coefficients are `binom(2k, k) 4^{-k} i^k` times the moments of `g`. The moments
/// near `eps = 0` are extracted for reporting; `g` itself is fitted in a Legendre basis against
/// the generating function on a wider `eps` range, which sidesteps the truncation error of the
/// Taylor fit.
pub fn invert_j1_moments(
    oracle: &dyn Fn(f64) -> Result<C64>,
    pair: &JacobiPair,
    tau_minus: f64,
    tau_plus: f64,
    cfg: &MomentConfig,
) -> Result<MomentReport> {
    let geo = moment_geometry(pair, tau_minus, tau_plus)?;
    let (lo, hi) = (geo.lo, geo.hi);
    let max_abs = lo.abs().max(hi.abs());
    let e_hi = cfg.radius_fraction / max_abs;
    let near = chebyshev_nodes(cfg.n_eps, 0.0, e_hi);
    let wide: Vec<f64> = (1..=cfg.n_eps_wide)
        .map(|i| e_hi * (cfg.eps_span / cfg.radius_fraction).powf(i as f64 / cfg.n_eps_wide as f64))
        .collect();
    let near_vals = near.iter().map(|&e| oracle(e)).collect::<Result<Vec<_>>>()?;
    let wide_vals = wide.iter().map(|&e| oracle(e)).collect::<Result<Vec<_>>>()?;

    // (a) moments from the Taylor fit
    let (moments, max_imag_moment) = taylor_moments(&near, &near_vals, e_hi, cfg.k_fit, cfg.k_max)?;

    // (b), (c) Legendre fit of g on [X~(tau_+), X~(tau_-)]
    let eps: Vec<f64> = near.iter().chain(&wide).copied().collect();
    let vals: Vec<C64> = near_vals.into_iter().chain(wide_vals).collect();
    let (coef, condition, data_residual) = fit_legendre_kernel(&eps, &vals, lo, hi, cfg.k_max, cfg.tikhonov);
    if condition > cfg.cond_cap {
        return Err(Error::IllConditioned { cond: condition, cap: cfg.cond_cap });
    }
    let sm = |tt: f64| (2.0 * tt - (lo + hi)) / (hi - lo);
    let g = |tt: f64| {
        let p = legendre_all(cfg.k_max, sm(tt));
        (0..=cfg.k_max).map(|j| coef[j] * p[j]).sum::<f64>()
    };
    let (gx, gw) = gauss_legendre_on(64, lo, hi);
    let refit_moments = (0..=cfg.k_max)
        .map(|k| gx.iter().zip(&gw).map(|(x, w)| w * g(*x) * x.powi(k as i32)).sum())
        .collect();

    // (d) f = g(X~) |X~'| X^{1/2}, X~' = W / X^2
    let w = pair.wronskian();
    let mut values = vec![C64::new(0.0, 0.0); pair.x.times.len()];
    for (j, &i) in geo.idx.iter().enumerate() {
        let x = geo.xs[j];
        values[i] = C64::new(g(geo.xt[j]) * w[i].abs() / (x * x) * x.sqrt(), 0.0);
    }
    Ok(MomentReport {
        f: GeodesicSample { times: pair.x.times.clone(), values, tau_minus, tau_plus },
        moments,
        refit_moments,
        data_residual,
        condition,
        eps_grid: eps,
        max_imag_moment,
    })
}

/// Moments `int f X^{-1/2} X~^k dt` computed directly (test and diagnostics helper).
pub fn direct_moments(f: &GeodesicSample, pair: &JacobiPair, k_max: usize) -> Vec<f64> {
    let (gx, gw) = gauss_legendre_on(200, f.tau_minus, f.tau_plus);
    let mut out = vec![0.0; k_max + 1];
    for (t, w) in gx.iter().zip(&gw) {
        let x = pair.x.at(*t).0[(0, 0)].re;
        let z = pair.z.at(*t).0[(0, 0)].re;
        let base = f.at(*t).re / x.sqrt() * w;
        for (k, o) in out.iter_mut().enumerate() {
            *o += base * (z / x).powi(k as i32);
        }
    }
    out
}
