//! Gaussian quasimodes `e^{i rho Theta} a` concentrated along a geodesic, and their completion
//! to exponentially growing solutions `e^{+-lambda x0}(e^{i sigma x0} V + R)`.
//!
//! The phase `Theta = y1 + H y''.y''/2 + Theta_3 + ...` and the amplitude `v_0 + rho^{-1} v_1 + ...`
//! are stored as polynomials in the transversal Fermi variables `y''` with coefficients sampled
//! along the geodesic (and, for `k >= 1`, on a `(y0, y1)` grid).

mod assemble;
mod dbar;
mod poly;

pub use assemble::{assemble_cgo, assemble_one, AssembleConfig, CgoReport, CgoSolution, RateRow};
pub use dbar::{dbar_apply, dbar_solve};
pub use poly::{FitPlan, Poly};

use crate::cylinder::window_cutoff;
use crate::error::{Error, Result};
use crate::jacobi::{riccati_path, CMat, ComplexJacobiField};
use crate::manifold::{FermiChart, GeodesicPath};
use crate::potential::Field;
use crate::quad::{uniform_derivative, uniform_stencil};
use crate::raytransform::{branch_sqrt_det, sqrt_det_branch};
use crate::C64;
use dbar::grid_derivative;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

fn cz() -> C64 {
    C64::new(0.0, 0.0)
}

/// Inverse metric `g^{ij}` and drift `b^j = |g|^{-1/2} d_i(|g|^{1/2} g^{ij})` at one axis point as
/// polynomials in `y''`; index 0 is the `y1` direction.
#[derive(Debug, Clone)]
pub struct MetricJet {
    pub ginv: Vec<Vec<Poly>>,
    pub drift: Vec<Poly>,
}

impl MetricJet {
    fn flat(d: usize, deg: usize) -> Self {
        let m = d + 1;
        let ginv = (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| if i == j { Poly::constant(d, deg, C64::new(1.0, 0.0)) } else { Poly::zero(d, deg) })
                    .collect()
            })
            .collect();
        MetricJet { ginv, drift: vec![Poly::zero(d, deg); m] }
    }

    /// `<da, db>_g` for functions given by their `y1`-derivative and transversal polynomial.
    fn inner(&self, at: &Poly, a: &Poly, bt: &Poly, b: &Poly, deg: usize) -> Poly {
        let d = a.d;
        let mut grad_a = vec![at.clone()];
        let mut grad_b = vec![bt.clone()];
        for v in 0..d {
            grad_a.push(a.deriv(v));
            grad_b.push(b.deriv(v));
        }
        let mut out = Poly::zero(d, deg);
        for i in 0..=d {
            for j in 0..=d {
                let g = &self.ginv[i][j];
                if g.max_abs() == 0.0 {
                    continue;
                }
                out = out.add(&g.mul(&grad_a[i].mul(&grad_b[j], deg), deg));
            }
        }
        out
    }

    /// `Delta_g f` from `f_tt`, `f_t` and the transversal polynomial `f`.
    fn laplace(&self, ftt: &Poly, ft: &Poly, f: &Poly, deg: usize) -> Poly {
        let d = f.d;
        let mut out = self.ginv[0][0].mul(ftt, deg);
        out = out.add(&self.drift[0].mul(ft, deg));
        for a in 0..d {
            let fa = f.deriv(a);
            out = out.add(&self.ginv[0][a + 1].mul(&ft.deriv(a), deg).scale(C64::new(2.0, 0.0)));
            out = out.add(&self.drift[a + 1].mul(&fa, deg));
            for b in 0..d {
                out = out.add(&self.ginv[a + 1][b + 1].mul(&fa.deriv(b), deg));
            }
        }
        out
    }
}

/// Metric jets along the axis from least-squares fits of the pulled-back metric on a small disk
/// of transversal radius `radius`; `y1`-derivatives by sixth-order differences.
fn fitted_metric_jets(fermi: &FermiChart, times: &[f64], d: usize, deg: usize, radius: f64) -> Result<Vec<MetricJet>> {
    let m = d + 1;
    // fit well beyond the needed degree so that the kept coefficients are not aliased
    let plan = FitPlan::new(d, deg + 5, radius);
    let ns = plan.nodes.len();
    let mut ginv_fit: Vec<Vec<Vec<Poly>>> = Vec::with_capacity(times.len());
    let mut sg_fit: Vec<Vec<Vec<Poly>>> = Vec::with_capacity(times.len());
    let mut inv_s_fit: Vec<Poly> = Vec::with_capacity(times.len());
    for &t in times {
        let mut gi = vec![vec![vec![cz(); ns]; m]; m];
        let mut sgi = vec![vec![vec![cz(); ns]; m]; m];
        let mut inv_s = vec![cz(); ns];
        for (k, y) in plan.nodes.iter().enumerate() {
            let mut p = vec![t];
            p.extend_from_slice(y);
            let g = fermi.metric(&p)?;
            let s = g.determinant().sqrt();
            let inv = g.try_inverse().ok_or(Error::OutsideTube { radius: fermi.delta_prime })?;
            inv_s[k] = C64::new(1.0 / s, 0.0);
            for i in 0..m {
                for j in 0..m {
                    gi[i][j][k] = C64::new(inv[(i, j)], 0.0);
                    sgi[i][j][k] = C64::new(s * inv[(i, j)], 0.0);
                }
            }
        }
        ginv_fit.push(gi.iter().map(|row| row.iter().map(|v| plan.fit(v).with_deg(deg)).collect()).collect());
        sg_fit.push(sgi.iter().map(|row| row.iter().map(|v| plan.fit(v).with_deg(deg + 1)).collect()).collect());
        inv_s_fit.push(plan.fit(&inv_s).with_deg(deg));
    }
    let h = times[1] - times[0];
    let nt = times.len();
    // d_t (s g^{0j}) coefficientwise
    let ncoef = sg_fit[0][0][0].c.len();
    let mut dt_sg0: Vec<Vec<Poly>> = vec![vec![Poly::zero(d, deg + 1); m]; nt];
    for j in 0..m {
        for c in 0..ncoef {
            let series: Vec<C64> = sg_fit.iter().map(|f| f[0][j].c[c]).collect();
            let der = uniform_derivative(&series, h, 1, 7);
            for (i, v) in der.into_iter().enumerate() {
                dt_sg0[i][j].c[c] = v;
            }
        }
    }
    Ok((0..nt)
        .map(|i| {
            let drift = (0..m)
                .map(|j| {
                    let mut div = dt_sg0[i][j].clone();
                    for a in 0..d {
                        div = div.add(&sg_fit[i][a + 1][j].deriv(a));
                    }
                    inv_s_fit[i].mul(&div.with_deg(deg), deg)
                })
                .collect();
            MetricJet { ginv: ginv_fit[i].clone(), drift }
        })
        .collect())
}

/// Matrix of `P -> (H y'').grad P` on homogeneous polynomials of degree `k`.
fn hgrad_matrix(h: &CMat, d: usize, k: usize) -> CMat {
    let w = Poly::width(d, k);
    let mut out = CMat::zeros(w, w);
    for col in 0..w {
        let mut e = Poly::zero(d, k);
        let mut v = vec![cz(); w];
        v[col] = C64::new(1.0, 0.0);
        e.set_part(k, &v);
        let mut acc = Poly::zero(d, k);
        for a in 0..d {
            let da = e.deriv(a);
            for b in 0..d {
                acc.axpy(h[(a, b)], &da.times_var(b, k));
            }
        }
        for (r, c) in acc.part(k).into_iter().enumerate() {
            out[(r, col)] = c;
        }
    }
    out
}

fn quad_form(h: &CMat, d: usize, deg: usize) -> Poly {
    let mut p = Poly::zero(d, deg.max(2));
    if d == 1 {
        p.c[2] = h[(0, 0)] * 0.5;
    } else {
        let i20 = p.index(2, 0);
        let i11 = p.index(1, 1);
        let i02 = p.index(0, 2);
        p.c[i20] = h[(0, 0)] * 0.5;
        p.c[i11] = (h[(0, 1)] + h[(1, 0)]) * 0.5;
        p.c[i02] = h[(1, 1)] * 0.5;
    }
    p.with_deg(deg)
}

fn to_cmat(k: &nalgebra::DMatrix<f64>) -> CMat {
    k.map(|v| C64::new(v, 0.0))
}

/// Cubic interpolation of a uniformly sampled sequence of polynomials.
fn interp_poly(v: &[Poly], t0: f64, h: f64, t: f64) -> Poly {
    let (s, w) = uniform_stencil(t0, h, v.len(), t);
    let mut p = v[s].scale(C64::new(w[0], 0.0));
    for k in 1..4 {
        p.axpy(C64::new(w[k], 0.0), &v[s + k]);
    }
    p
}

fn interp_mat(v: &[CMat], t0: f64, h: f64, t: f64) -> CMat {
    let (s, w) = uniform_stencil(t0, h, v.len(), t);
    (0..4).fold(CMat::zeros(v[0].nrows(), v[0].ncols()), |acc, k| acc + &v[s + k] * C64::new(w[k], 0.0))
}

fn interp_vec(v: &[Vec<C64>], t0: f64, h: f64, t: f64) -> Vec<C64> {
    let (s, w) = uniform_stencil(t0, h, v.len(), t);
    (0..v[0].len()).map(|c| (0..4).map(|k| v[s + k][c] * w[k]).sum()).collect()
}

/// RK4 for `x' = -M(t) x + r(t)` on the node grid, with midpoint data interpolated, starting
/// from `x(times[i0]) = 0` and sweeping in both directions.
fn linear_sweep(times: &[f64], mats: &[CMat], rhs: &[Vec<C64>], i0: usize) -> Vec<Vec<C64>> {
    let h = times[1] - times[0];
    let t0 = times[0];
    let w = rhs[0].len();
    let f = |t: f64, x: &nalgebra::DVector<C64>| -> nalgebra::DVector<C64> {
        let m = interp_mat(mats, t0, h, t);
        let r = nalgebra::DVector::from_vec(interp_vec(rhs, t0, h, t));
        r - m * x
    };
    let fnode = |i: usize, x: &nalgebra::DVector<C64>| -> nalgebra::DVector<C64> {
        nalgebra::DVector::from_vec(rhs[i].clone()) - &mats[i] * x
    };
    let mut out = vec![vec![cz(); w]; times.len()];
    for dir in [1isize, -1] {
        let mut x = nalgebra::DVector::from_element(w, cz());
        let mut i = i0 as isize;
        let hs = h * dir as f64;
        while (i + dir) >= 0 && ((i + dir) as usize) < times.len() {
            let iu = i as usize;
            let tm = times[iu] + 0.5 * hs;
            let k1 = fnode(iu, &x);
            let k2 = f(tm, &(&x + &k1 * C64::new(0.5 * hs, 0.0)));
            let k3 = f(tm, &(&x + &k2 * C64::new(0.5 * hs, 0.0)));
            let k4 = fnode((i + dir) as usize, &(&x + &k3 * C64::new(hs, 0.0)));
            x += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * C64::new(hs / 6.0, 0.0);
            i += dir;
            out[i as usize] = x.iter().copied().collect();
        }
    }
    out
}

/// Phase jet `Theta = sum_k Theta_k` along a geodesic.
#[derive(Debug, Clone)]
pub struct PhaseJet {
    pub n: usize,
    pub order: usize,
    /// Initial point of the `Theta_k` (`k >= 3`) cascade.
    pub tau0: f64,
    pub times: Vec<f64>,
    /// Full `Theta` (degree `<= order`) and its `y1`-derivatives at every node.
    pub theta: Vec<Poly>,
    pub theta_t: Vec<Poly>,
    pub theta_tt: Vec<Poly>,
    pub h: Vec<CMat>,
    pub c_cons: f64,
    pub metric: Vec<MetricJet>,
    pub path: GeodesicPath,
    pub jacobi: ComplexJacobiField,
    branch: (Vec<f64>, Vec<C64>),
    fermi: Option<FermiChart>,
}

/// Serializable regression snapshot of a phase jet.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseSnapshot {
    pub order: usize,
    pub tau0: f64,
    pub times: Vec<f64>,
    pub theta: Vec<Poly>,
}

/// Options for [`build_phase_with`].
#[derive(Debug, Clone)]
pub struct PhaseOptions {
    /// Fermi tube radius used for curved geometries.
    pub delta_prime: f64,
    /// Sampling radius of the metric fits.
    pub fit_radius: f64,
    /// Initial point for the `Theta_k` cascade; defaults to the Jacobi anchor clamped to the path.
    pub tau0: Option<f64>,
}

impl Default for PhaseOptions {
    fn default() -> Self {
        PhaseOptions { delta_prime: 0.2, fit_radius: 0.12, tau0: None }
    }
}

pub fn build_phase(path: &GeodesicPath, y: &ComplexJacobiField, order: usize) -> Result<PhaseJet> {
    build_phase_with(path, y, order, &PhaseOptions::default())
}

/// `Theta_0 = y1`, `Theta_1 = 0`, `Theta_2 = H y''.y'' / 2` with `H = Y' Y^{-1}`; `Theta_3`,
/// `Theta_4` solve `d_t Theta_k + (H y'').grad Theta_k = E_k / 2` with zero data at `tau0`, where
/// `E_k` is the degree-`k` part of `1 - <dTheta^{<k}, dTheta^{<k}>_g`.
pub fn build_phase_with(path: &GeodesicPath, y: &ComplexJacobiField, order: usize, opts: &PhaseOptions) -> Result<PhaseJet> {
    if order > 4 {
        return Err(Error::UnsupportedOrder(order));
    }
    if order < 2 {
        return Err(Error::InvalidInput("phase order must be at least 2".into()));
    }
    let d = y.dim();
    if !(d == 1 || d == 2) || path.dim() != d + 1 {
        return Err(Error::InvalidInput("transversal dimension must be 1 or 2".into()));
    }
    let ric = riccati_path(y, path.ext_minus, path.ext_plus)?;
    let times = ric.times.clone();
    let nt = times.len();
    let ht = times[1] - times[0];
    let flat = path.geometry.is_flat();
    let fermi = if flat { None } else { Some(FermiChart::new(path.clone(), opts.delta_prime)) };
    let metric = match &fermi {
        None => vec![MetricJet::flat(d, order); nt],
        Some(f) => fitted_metric_jets(f, &times, d, order, opts.fit_radius)?,
    };
    let mut branch = sqrt_det_branch(y, times[0], times[nt - 1])?;
    // orient the branch so that it is principal at tau_-
    let at_minus = branch_sqrt_det(y, &branch.0, &branch.1, path.tau_minus);
    let principal = y.det_at(path.tau_minus).sqrt();
    if (at_minus - principal).norm() > (at_minus + principal).norm() {
        branch.1.iter_mut().for_each(|v| *v = -*v);
    }
    let tau0 = opts.tau0.unwrap_or(y.tau0).clamp(times[0], times[nt - 1]);
    let i0 = ((tau0 - times[0]) / ht).round() as usize;

    let mut theta = Vec::with_capacity(nt);
    let mut theta_t = Vec::with_capacity(nt);
    for (i, &t) in times.iter().enumerate() {
        let k = to_cmat(&y.curvature().at(t));
        let hm = &ric.h[i];
        let hdot = -(hm * hm) - k;
        let mut p = quad_form(hm, d, order);
        p.c[0] = C64::new(t, 0.0);
        let mut pt = quad_form(&hdot, d, order);
        pt.c[0] = C64::new(1.0, 0.0);
        theta.push(p);
        theta_t.push(pt);
    }
    for k in 3..=order {
        let mats: Vec<CMat> = ric.h.iter().map(|h| hgrad_matrix(h, d, k)).collect();
        let rhs: Vec<Vec<C64>> = (0..nt)
            .map(|i| {
                let lower = theta[i].below(k);
                let lower_t = theta_t[i].below(k);
                let g = metric[i].inner(&lower_t, &lower, &lower_t, &lower, k);
                g.part(k).into_iter().map(|v| -v * 0.5).collect()
            })
            .collect();
        let sol = linear_sweep(&times, &mats, &rhs, i0);
        for i in 0..nt {
            theta[i].set_part(k, &sol[i]);
            let dv = nalgebra::DVector::from_vec(rhs[i].clone())
                - &mats[i] * nalgebra::DVector::from_vec(sol[i].clone());
            theta_t[i].set_part(k, dv.as_slice());
        }
    }
    let ncoef = theta_t[0].c.len();
    let mut theta_tt = vec![Poly::zero(d, order); nt];
    for c in 0..ncoef {
        let series: Vec<C64> = theta_t.iter().map(|p| p.c[c]).collect();
        for (i, v) in uniform_derivative(&series, ht, 1, 7).into_iter().enumerate() {
            theta_tt[i].c[c] = v;
        }
    }
    Ok(PhaseJet {
        n: d + 2,
        order,
        tau0: times[i0],
        times,
        theta,
        theta_t,
        theta_tt,
        h: ric.h,
        c_cons: ric.c_cons,
        metric,
        path: path.clone(),
        jacobi: y.clone(),
        branch,
        fermi,
    })
}

impl PhaseJet {
    pub fn dim(&self) -> usize {
        self.n - 2
    }

    fn step(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn t_range(&self) -> (f64, f64) {
        (self.times[0], self.times[self.times.len() - 1])
    }

    pub fn is_flat(&self) -> bool {
        self.fermi.is_none()
    }

    /// `H(t) = Y'(t) Y(t)^{-1}` from the Jacobi field.
    pub fn h_at(&self, t: f64) -> CMat {
        let (yv, yd) = self.jacobi.at(t);
        yd * yv.try_inverse().unwrap_or_else(|| CMat::zeros(self.dim(), self.dim()))
    }

    /// `sqrt(det Y(t))` on the branch that is principal at `tau_-`.
    pub fn sqrt_det(&self, t: f64) -> C64 {
        branch_sqrt_det(&self.jacobi, &self.branch.0, &self.branch.1, t)
    }

    /// `(Theta, d_t Theta)` at `t` as polynomials in `y''`. The quadratic part is evaluated from
    /// the Jacobi field, higher parts are interpolated.
    pub fn at(&self, t: f64) -> (Poly, Poly) {
        let d = self.dim();
        let hm = self.h_at(t);
        let k = to_cmat(&self.jacobi.curvature().at(t));
        let hdot = -(&hm * &hm) - k;
        let mut p = quad_form(&hm, d, self.order);
        p.c[0] = C64::new(t, 0.0);
        let mut pt = quad_form(&hdot, d, self.order);
        pt.c[0] = C64::new(1.0, 0.0);
        if self.order > 2 {
            let hi = interp_poly(&self.theta, self.times[0], self.step(), t);
            let hit = interp_poly(&self.theta_t, self.times[0], self.step(), t);
            for k in 3..=self.order {
                p.set_part(k, &hi.part(k));
                pt.set_part(k, &hit.part(k));
            }
        }
        (p, pt)
    }

    pub fn eval(&self, t: f64, y: &[f64]) -> C64 {
        self.at(t).0.eval(y)
    }

    /// Smallest eigenvalue of `Im H` over the nodes: `Im Theta_2 >= lambda_min |y''|^2 / 2`.
    pub fn min_im_h(&self) -> f64 {
        self.h
            .iter()
            .map(|h| {
                let im = h.map(|z| z.im);
                ((&im + im.transpose()) * 0.5).symmetric_eigenvalues().min()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Fermi coordinates `(y1, y'')` of a chart point, `None` outside the tube.
    pub fn fermi_coords(&self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        match &self.fermi {
            None => {
                let i = self.path.index_of_zero();
                let base = &self.path.pos[i];
                let v = &self.path.vel[i];
                let diff: Vec<f64> = x.iter().zip(base).map(|(a, b)| a - b).collect();
                let t = diff.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
                let ys = self.path.frame[i]
                    .iter()
                    .map(|e| diff.iter().zip(e).map(|(a, b)| a * b).sum::<f64>())
                    .collect();
                Some((t, ys))
            }
            Some(f) => {
                let y = f.inverse(x).ok()?;
                Some((y[0], y[1..].to_vec()))
            }
        }
    }

    /// `1 - <dTheta, dTheta>_g` at Fermi point `(t, y'')`, using the pulled-back metric itself
    /// (not its jet) and fourth-order central differences in `t` of `Theta` with step `dt`.
    pub fn eikonal_defect(&self, t: f64, y: &[f64], dt: f64) -> Result<C64> {
        let d = self.dim();
        let f = |s: f64| self.eval(t + s * dt, y);
        let theta_t = (f(-2.0) - f(2.0) + (f(1.0) - f(-1.0)) * 8.0) / (12.0 * dt);
        let p = self.at(t).0;
        let mut grad = vec![theta_t];
        for a in 0..d {
            grad.push(p.deriv(a).eval(y));
        }
        let ginv = match &self.fermi {
            None => nalgebra::DMatrix::identity(d + 1, d + 1),
            Some(f) => {
                let mut q = vec![t];
                q.extend_from_slice(y);
                f.metric(&q)?.try_inverse().ok_or(Error::OutsideTube { radius: f.delta_prime })?
            }
        };
        let mut s = C64::new(1.0, 0.0);
        for i in 0..=d {
            for j in 0..=d {
                s -= grad[i] * grad[j] * ginv[(i, j)];
            }
        }
        Ok(s)
    }

    pub fn snapshot(&self) -> PhaseSnapshot {
        PhaseSnapshot { order: self.order, tau0: self.tau0, times: self.times.clone(), theta: self.theta.clone() }
    }

    /// `Theta` conjugated coefficientwise (for the minus quasimode).
    fn conj_parts(&self, i: usize, sign: Sign) -> (Poly, Poly, Poly, CMat) {
        let (p, pt, ptt, h) = (&self.theta[i], &self.theta_t[i], &self.theta_tt[i], &self.h[i]);
        match sign {
            Sign::Plus => (p.clone(), pt.clone(), ptt.clone(), h.clone()),
            Sign::Minus => (p.conj(), pt.conj(), ptt.conj(), h.map(|z| z.conj())),
        }
    }
}

/// Options of [`build_amplitude`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmplitudeConfig {
    /// Number of correction terms `v_1 ... v_{N_amp}`.
    pub n_amp: usize,
    /// Transversal degree of every `v_k`; defaults to the phase order.
    pub degree: Option<usize>,
    /// Cutoff radius `delta` of `chi(|y''| / delta)`.
    pub delta: f64,
    /// `x0` interval `I` on which the corrections are needed.
    pub x0_interval: [f64; 2],
    /// Square cell size of the `(y0, y1)` grid for the d-bar solves.
    pub dbar_step: f64,
    /// Width of the smooth taper applied to the d-bar sources.
    pub ramp: f64,
}

impl Default for AmplitudeConfig {
    fn default() -> Self {
        AmplitudeConfig { n_amp: 0, degree: None, delta: 1.0, x0_interval: [-1.0, 1.0], dbar_step: 1.0 / 32.0, ramp: 0.25 }
    }
}

/// Amplitude `a = (v_0 + rho^{-1} v_1 + ...) chi(|y''| / delta)` for one sign. For the minus sign
/// `v_0` is stored already conjugated and the expansion parameter is `conj(rho)`.
#[derive(Debug, Clone)]
pub struct AmplitudeJet {
    pub sign: Sign,
    pub delta: f64,
    pub degree: usize,
    pub times: Vec<f64>,
    pub v0: Vec<Poly>,
    pub v0_t: Vec<Poly>,
    /// `(y0, y1)` grid of the corrections: `vk[k - 1][i * t_grid.len() + j]`.
    pub x0_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub vk: Vec<Vec<Poly>>,
    /// `v_00` is evaluated exactly as `(det Y)^{-1/2}` rather than interpolated.
    exact_v00: bool,
}

/// Profile with `chi = 1` on `|s| <= 1/2` and `chi = 0` for `|s| >= 1`.
pub fn chi(s: f64) -> f64 {
    window_cutoff(s.abs(), -1.0, 0.5, 0.5)
}

/// Principal amplitude `v_0 = sum_j v_0j`: `v_00 = (det Y)^{-1/2}` and for `j >= 1`
/// `d_t c + (H y'').grad c + [Delta Theta]_0 c / 2 = -[<dTheta, dV> + Delta Theta V / 2]_j`
/// (`V` the part of degree `< j`) with zero data at the left end of the tube.
fn principal_amplitude(phase: &PhaseJet, degree: usize) -> (Vec<Poly>, Vec<Poly>) {
    let d = phase.dim();
    let nt = phase.times.len();
    let mut v0 = Vec::with_capacity(nt);
    let mut v0t = Vec::with_capacity(nt);
    let mut lap0 = Vec::with_capacity(nt);
    for i in 0..nt {
        let (p, pt, ptt, _) = phase.conj_parts(i, Sign::Plus);
        let lap = phase.metric[i].laplace(&ptt, &pt, &p, degree.max(1));
        lap0.push(lap.c[0]);
        let c = 1.0 / phase.sqrt_det(phase.times[i]);
        v0.push(Poly::constant(d, degree, c));
        v0t.push(Poly::constant(d, degree, -c * lap.c[0] * 0.5));
    }
    for j in 1..=degree {
        let mats: Vec<CMat> = (0..nt)
            .map(|i| {
                let w = Poly::width(d, j);
                hgrad_matrix(&phase.h[i], d, j) + CMat::identity(w, w) * (lap0[i] * 0.5)
            })
            .collect();
        let rhs: Vec<Vec<C64>> = (0..nt)
            .map(|i| {
                let (p, pt, ptt, _) = phase.conj_parts(i, Sign::Plus);
                let mj = &phase.metric[i];
                let lower = v0[i].below(j);
                let lower_t = v0t[i].below(j);
                let lap = mj.laplace(&ptt, &pt, &p, j);
                let mut s = mj.inner(&pt, &p, &lower_t, &lower, j);
                s = s.add(&lap.mul(&lower, j).scale(C64::new(0.5, 0.0)));
                s.part(j).into_iter().map(|v| -v).collect()
            })
            .collect();
        let sol = linear_sweep(&phase.times, &mats, &rhs, 0);
        for i in 0..nt {
            v0[i].set_part(j, &sol[i]);
            let dv = nalgebra::DVector::from_vec(rhs[i].clone()) - &mats[i] * nalgebra::DVector::from_vec(sol[i].clone());
            v0t[i].set_part(j, dv.as_slice());
        }
    }
    (v0, v0t)
}

/// Polynomial jets of `V_1(y0, F(y1, y''))` on a `(y0, y1)` grid.
fn potential_jets(phase: &PhaseJet, v1: &Field, x0: &[f64], tg: &[f64], degree: usize) -> Result<Vec<Poly>> {
    let d = phase.dim();
    let plan = FitPlan::new(d, degree + 5, 0.1);
    let mut out = Vec::with_capacity(x0.len() * tg.len());
    let fermi = phase.fermi.clone();
    let mut pts: Vec<Vec<Vec<f64>>> = Vec::with_capacity(tg.len());
    for &t in tg {
        let row = plan
            .nodes
            .iter()
            .map(|y| match &fermi {
                None => {
                    let (x, _) = phase.path.state_at(t);
                    let fr = phase.path.frame_at(t);
                    let mut p = x.clone();
                    for (a, e) in fr.iter().enumerate() {
                        for (pk, ek) in p.iter_mut().zip(e) {
                            *pk += y[a] * ek;
                        }
                    }
                    Ok(p)
                }
                Some(f) => {
                    let mut q = vec![t];
                    q.extend_from_slice(y);
                    f.forward(&q)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        pts.push(row);
    }
    for &s in x0 {
        for row in &pts {
            let vals: Vec<C64> = row
                .iter()
                .map(|p| {
                    let mut x = vec![s];
                    x.extend_from_slice(p);
                    v1.eval(&x)
                })
                .collect();
            out.push(plan.fit(&vals).with_deg(degree));
        }
    }
    Ok(out)
}

/// Builds the `+` and `-` amplitudes. `v_k` (`k >= 1`) solve the d-bar transport problem
/// `(d_0 + i d_1) c + i B_j c = Q_j / 2` degree by degree through the integrating factor
/// `W' = W B_j` and [`dbar_solve`].
pub fn build_amplitude(phase: &PhaseJet, v1: &Field, cfg: &AmplitudeConfig) -> Result<(AmplitudeJet, AmplitudeJet)> {
    let degree = cfg.degree.unwrap_or(phase.order);
    if degree > phase.order + 2 {
        return Err(Error::InvalidInput("amplitude degree exceeds the phase jet".into()));
    }
    if !(cfg.delta > 0.0) || !(cfg.dbar_step > 0.0) || !(cfg.ramp > 0.0) {
        return Err(Error::InvalidInput("delta, dbar_step and ramp must be positive".into()));
    }
    if let Some(f) = &phase.fermi {
        if cfg.delta > f.delta_prime {
            return Err(Error::InvalidInput(format!(
                "cutoff radius {} exceeds the Fermi tube radius {}",
                cfg.delta, f.delta_prime
            )));
        }
    }
    let (v0, v0t) = principal_amplitude(phase, degree);
    let mut out = Vec::new();
    for sign in [Sign::Plus, Sign::Minus] {
        let (sv0, sv0t) = match sign {
            Sign::Plus => (v0.clone(), v0t.clone()),
            Sign::Minus => (v0.iter().map(Poly::conj).collect(), v0t.iter().map(Poly::conj).collect()),
        };
        out.push(AmplitudeJet {
            sign,
            delta: cfg.delta,
            degree,
            times: phase.times.clone(),
            v0: sv0,
            v0_t: sv0t,
            x0_grid: Vec::new(),
            t_grid: Vec::new(),
            vk: Vec::new(),
            exact_v00: degree == 0 || phase.is_flat(),
        });
    }
    if cfg.n_amp > 0 {
        let hs = cfg.dbar_step;
        let (tlo, thi) = phase.t_range();
        let n1 = ((thi - tlo) / hs).floor() as usize + 1;
        let tg: Vec<f64> = (0..n1).map(|j| tlo + j as f64 * hs).collect();
        let a0 = cfg.x0_interval[0] - cfg.ramp;
        let n0 = ((cfg.x0_interval[1] + cfg.ramp - a0) / hs).ceil() as usize + 1;
        let x0: Vec<f64> = (0..n0).map(|i| a0 + i as f64 * hs).collect();
        if n0 < 8 || n1 < 8 {
            return Err(Error::InvalidInput("d-bar grid too coarse".into()));
        }
        let vjets = if v1.is_zero() { None } else { Some(potential_jets(phase, v1, &x0, &tg, degree)?) };
        let taper: Vec<f64> = x0
            .iter()
            .flat_map(|&s| {
                let ws = window_cutoff(s, cfg.x0_interval[0], cfg.x0_interval[1], cfg.ramp);
                tg.iter()
                    .map(move |&t| ws * window_cutoff(t, tlo + cfg.ramp, thi - cfg.ramp, cfg.ramp))
            })
            .collect();
        for amp in out.iter_mut() {
            amp.x0_grid = x0.clone();
            amp.t_grid = tg.clone();
            for k in 1..=cfg.n_amp {
                let vk = subprincipal(phase, amp, k, vjets.as_deref(), &taper)?;
                amp.vk.push(vk);
            }
        }
    }
    let minus = out.pop().unwrap();
    let plus = out.pop().unwrap();
    Ok((plus, minus))
}

/// Phase data at an arbitrary `t` for one sign: `(Theta, Theta_t, Theta_tt, H)`.
fn phase_local(phase: &PhaseJet, sign: Sign, t: f64) -> (Poly, Poly, Poly, CMat) {
    let (t0, h) = (phase.times[0], phase.step());
    let mut p = interp_poly(&phase.theta, t0, h, t);
    let mut pt = interp_poly(&phase.theta_t, t0, h, t);
    let mut ptt = interp_poly(&phase.theta_tt, t0, h, t);
    let mut hm = interp_mat(&phase.h, t0, h, t);
    if sign == Sign::Minus {
        p = p.conj();
        pt = pt.conj();
        ptt = ptt.conj();
        hm = hm.map(|z| z.conj());
    }
    (p, pt, ptt, hm)
}

fn subprincipal(phase: &PhaseJet, amp: &AmplitudeJet, k: usize, vjets: Option<&[Poly]>, taper: &[f64]) -> Result<Vec<Poly>> {
    let d = phase.dim();
    let deg = amp.degree;
    let (x0, tg) = (&amp.x0_grid, &amp.t_grid);
    let (n0, n1) = (x0.len(), tg.len());
    let hs = tg[1] - tg[0];
    let s = amp.sign.value();
    let metric_at = |t: f64| -> MetricJet {
        if phase.is_flat() {
            return phase.metric[0].clone();
        }
        let (t0, h) = (phase.times[0], phase.step());
        let (st, w) = uniform_stencil(t0, h, phase.times.len(), t);
        let blend = |get: &dyn Fn(&MetricJet) -> &Poly| -> Poly {
            let mut p = get(&phase.metric[st]).scale(C64::new(w[0], 0.0));
            for q in 1..4 {
                p.axpy(C64::new(w[q], 0.0), get(&phase.metric[st + q]));
            }
            p
        };
        let m = d + 1;
        MetricJet {
            ginv: (0..m).map(|i| (0..m).map(|j| blend(&|mj: &MetricJet| &mj.ginv[i][j])).collect()).collect(),
            drift: (0..m).map(|j| blend(&|mj: &MetricJet| &mj.drift[j])).collect(),
        }
    };
    let local: Vec<(Poly, Poly, Poly, CMat, MetricJet)> = tg
        .iter()
        .map(|&t| {
            let (p, pt, ptt, hm) = phase_local(phase, amp.sign, t);
            (p, pt, ptt, hm, metric_at(t))
        })
        .collect();
    // previous term and its derivatives on the grid
    let prev: Vec<Poly>;
    let (prev_t, prev_tt, prev_00): (Vec<Poly>, Vec<Poly>, Vec<Poly>);
    if k == 1 {
        let (t0, h) = (phase.times[0], phase.step());
        let v0: Vec<Poly> = tg.iter().map(|&t| interp_poly(&amp.v0, t0, h, t)).collect();
        let v0t: Vec<Poly> = tg.iter().map(|&t| interp_poly(&amp.v0_t, t0, h, t)).collect();
        let ncoef = v0[0].c.len();
        let mut v0tt = vec![Poly::zero(d, deg); n1];
        for c in 0..ncoef {
            let series: Vec<C64> = v0t.iter().map(|p| p.c[c]).collect();
            for (j, v) in uniform_derivative(&series, hs, 1, 7).into_iter().enumerate() {
                v0tt[j].c[c] = v;
            }
        }
        prev = (0..n0 * n1).map(|q| v0[q % n1].clone()).collect();
        prev_t = (0..n0 * n1).map(|q| v0t[q % n1].clone()).collect();
        prev_tt = (0..n0 * n1).map(|q| v0tt[q % n1].clone()).collect();
        prev_00 = vec![Poly::zero(d, deg); n0 * n1];
    } else {
        prev = amp.vk[k - 2].clone();
        let derive = |axis: usize, order: usize| -> Vec<Poly> {
            let ncoef = prev[0].c.len();
            let mut out = vec![Poly::zero(d, deg); n0 * n1];
            for c in 0..ncoef {
                let f: Vec<C64> = prev.iter().map(|p| p.c[c]).collect();
                for (q, v) in grid_derivative(&f, n0, n1, hs, axis, order, 7).into_iter().enumerate() {
                    out[q].c[c] = v;
                }
            }
            out
        };
        prev_t = derive(1, 1);
        prev_tt = derive(1, 2);
        prev_00 = derive(0, 2);
    }
    // P v_{k-1} = -d_0^2 v - Delta_g v + V_1 v
    let pv: Vec<Poly> = (0..n0 * n1)
        .map(|q| {
            let j = q % n1;
            let mj = &local[j].4;
            let mut r = prev_00[q].add(&mj.laplace(&prev_tt[q], &prev_t[q], &prev[q], deg)).scale(C64::new(-1.0, 0.0));
            if let Some(vj) = vjets {
                r = r.add(&vj[q].mul(&prev[q], deg));
            }
            r
        })
        .collect();
    let mut cur = vec![Poly::zero(d, deg); n0 * n1];
    for jdeg in 0..=deg {
        let w = Poly::width(d, jdeg);
        // d_t of the already computed lower part
        let ncoef = cur[0].c.len();
        let mut cur_t = vec![Poly::zero(d, deg); n0 * n1];
        if jdeg > 0 {
            for c in 0..ncoef {
                let f: Vec<C64> = cur.iter().map(|p| p.c[c]).collect();
                for (q, v) in grid_derivative(&f, n0, n1, hs, 1, 1, 7).into_iter().enumerate() {
                    cur_t[q].c[c] = v;
                }
            }
        }
        let mut rhs: Vec<Vec<C64>> = Vec::with_capacity(n0 * n1);
        for q in 0..n0 * n1 {
            let j = q % n1;
            let (p, pt, ptt, _, mj) = &local[j];
            let lower = cur[q].below(jdeg);
            let lower_t = cur_t[q].below(jdeg);
            let lap = mj.laplace(ptt, pt, p, jdeg);
            let coupling = mj.inner(pt, p, &lower_t, &lower, jdeg).add(&lap.mul(&lower, jdeg).scale(C64::new(0.5, 0.0)));
            let pp = pv[q].part(jdeg);
            let cp = coupling.part(jdeg);
            rhs.push((0..w).map(|a| pp[a] * (0.5 * s) - C64::i() * cp[a]).collect());
        }
        // integrating factor W' = W B on the t grid, W(tau0) = I
        let bmat: Vec<CMat> = local
            .iter()
            .map(|(p, pt, ptt, hm, mj)| {
                let lap0 = mj.laplace(ptt, pt, p, 0).c[0];
                hgrad_matrix(hm, d, jdeg) + CMat::identity(w, w) * (lap0 * 0.5)
            })
            .collect();
        let wf = integrating_factor(&bmat, tg, phase.tau0.clamp(tg[0], tg[n1 - 1]));
        let mut comps = vec![vec![cz(); n0 * n1]; w];
        for q in 0..n0 * n1 {
            let j = q % n1;
            let r = &wf[j] * nalgebra::DVector::from_vec(rhs[q].clone());
            for a in 0..w {
                comps[a][q] = r[a] * taper[q];
            }
        }
        let sols: Vec<Vec<C64>> = comps.iter().map(|f| dbar_solve(f, n0, n1, hs)).collect();
        for q in 0..n0 * n1 {
            let j = q % n1;
            let u = nalgebra::DVector::from_iterator(w, (0..w).map(|a| sols[a][q]));
            let c = wf[j].clone().try_inverse().ok_or(Error::InvalidInput("singular integrating factor".into()))? * u;
            cur[q].set_part(jdeg, c.as_slice());
        }
    }
    Ok(cur)
}

/// `W' = W B(t)` on a uniform grid with `W(tau0) = I` (RK4, midpoint `B` by averaging).
fn integrating_factor(b: &[CMat], tg: &[f64], tau0: f64) -> Vec<CMat> {
    let n = tg.len();
    let hs = tg[1] - tg[0];
    let w = b[0].nrows();
    let i0 = ((tau0 - tg[0]) / hs).round() as usize;
    let mid = |i: usize, j: usize| -> CMat {
        // cubic midpoint interpolation where possible
        let (lo, hi) = (i.min(j), i.max(j));
        if lo >= 1 && hi + 1 < n {
            (&b[lo] + &b[hi]) * C64::new(9.0 / 16.0, 0.0) - (&b[lo - 1] + &b[hi + 1]) * C64::new(1.0 / 16.0, 0.0)
        } else {
            (&b[lo] + &b[hi]) * C64::new(0.5, 0.0)
        }
    };
    let mut out = vec![CMat::identity(w, w); n];
    for dir in [1isize, -1] {
        let mut cur = CMat::identity(w, w);
        let mut i = i0 as isize;
        let h = C64::new(hs * dir as f64, 0.0);
        while (i + dir) >= 0 && ((i + dir) as usize) < n {
            let (iu, ju) = (i as usize, (i + dir) as usize);
            let bm = mid(iu, ju);
            let k1 = &cur * &b[iu];
            let k2 = (&cur + &k1 * (h * 0.5)) * &bm;
            let k3 = (&cur + &k2 * (h * 0.5)) * &bm;
            let k4 = (&cur + &k3 * h) * &b[ju];
            cur += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * (h / 6.0);
            i += dir;
            out[i as usize] = cur.clone();
        }
    }
    out
}

impl AmplitudeJet {
    /// `v_0 + r^{-1} v_1 + ...` at `(y0, t, y'')` without the cutoff; `r` is `rho` for the plus
    /// amplitude and `conj(rho)` for the minus one.
    pub fn series(&self, phase: &PhaseJet, r: C64, y0: f64, t: f64, y: &[f64]) -> C64 {
        let h = self.times[1] - self.times[0];
        let mut v = if self.exact_v00 && self.degree == 0 {
            let c = 1.0 / phase.sqrt_det(t);
            if self.sign == Sign::Minus {
                c.conj()
            } else {
                c
            }
        } else {
            let mut p = interp_poly(&self.v0, self.times[0], h, t);
            if self.exact_v00 {
                let c = 1.0 / phase.sqrt_det(t);
                p.c[0] = if self.sign == Sign::Minus { c.conj() } else { c };
            }
            p.eval(y)
        };
        let mut rk = C64::new(1.0, 0.0);
        for k in 1..=self.vk.len() {
            rk /= r;
            v += self.term(k, y0, t, y) * rk;
        }
        v
    }

    /// Correction `v_k(y0, t, y'')` for `k >= 1` by bicubic interpolation; zero off the grid.
    pub fn term(&self, k: usize, y0: f64, t: f64, y: &[f64]) -> C64 {
        let vk = match self.vk.get(k.wrapping_sub(1)) {
            Some(v) => v,
            None => return cz(),
        };
        let (n0, n1) = (self.x0_grid.len(), self.t_grid.len());
        let hs = self.t_grid[1] - self.t_grid[0];
        let (x0a, ta) = (self.x0_grid[0], self.t_grid[0]);
        if !(y0 >= x0a && y0 <= self.x0_grid[n0 - 1] && t >= ta && t <= self.t_grid[n1 - 1]) {
            return cz();
        }
        let (si, wi) = uniform_stencil(x0a, hs, n0, y0);
        let (sj, wj) = uniform_stencil(ta, hs, n1, t);
        let mut acc = cz();
        for a in 0..4 {
            for b in 0..4 {
                acc += vk[(si + a) * n1 + sj + b].eval(y) * (wi[a] * wj[b]);
            }
        }
        acc
    }
}

/// A phase with its two amplitudes; evaluates `e^{i sigma y0} V_rho^{+-}` with the growth
/// factor `e^{+-lambda x0}` removed.
#[derive(Debug, Clone)]
pub struct Quasimode {
    pub phase: PhaseJet,
    pub plus: AmplitudeJet,
    pub minus: AmplitudeJet,
    /// Optional smooth cutoff in `y1`: `(lo, hi, ramp)`, equal to 1 on `[lo, hi]`.
    pub t_window: Option<(f64, f64, f64)>,
}

impl Quasimode {
    pub fn new(phase: PhaseJet, plus: AmplitudeJet, minus: AmplitudeJet) -> Self {
        Quasimode { phase, plus, minus, t_window: None }
    }

    /// The configured `y1` window, or one vanishing `0.05` inside the jet range with ramp `0.15`.
    pub fn effective_window(&self) -> (f64, f64, f64) {
        let (lo, hi) = self.phase.t_range();
        self.t_window.unwrap_or((lo + 0.2, hi - 0.2, 0.15))
    }

    /// Value at Fermi point `(y0, t, y'')`.
    pub fn eval_fermi(&self, sign: Sign, rho: C64, y0: f64, t: f64, y: &[f64]) -> C64 {
        let amp = match sign {
            Sign::Plus => &self.plus,
            Sign::Minus => &self.minus,
        };
        let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let c = chi(r / amp.delta);
        let (tlo, thi) = self.phase.t_range();
        if c == 0.0 || t < tlo || t > thi {
            return cz();
        }
        let tw = match self.t_window {
            Some((a, b, ramp)) => window_cutoff(t, a, b, ramp),
            None => 1.0,
        };
        if tw == 0.0 {
            return cz();
        }
        let theta = self.phase.eval(t, y);
        let (ph, rr) = match sign {
            Sign::Plus => (C64::i() * rho * theta, rho),
            Sign::Minus => (-C64::i() * rho.conj() * theta.conj(), rho.conj()),
        };
        let a = amp.series(&self.phase, rr, y0, t, y);
        (C64::i() * rho.im * y0 + ph).exp() * a * (c * tw)
    }

    /// Value at a chart point `[x0, x'...]`.
    pub fn eval(&self, sign: Sign, rho: C64, x: &[f64]) -> C64 {
        match self.phase.fermi_coords(&x[1..]) {
            Some((t, y)) => self.eval_fermi(sign, rho, x[0], t, &y),
            None => cz(),
        }
    }
}

/// `e^{i sigma x0} V_rho^{+-}` at the given chart points (growth factor removed).
pub fn quasimode_eval(q: &Quasimode, rho: C64, sign: Sign, points: &[Vec<f64>]) -> Vec<C64> {
    points.iter().map(|x| q.eval(sign, rho, x)).collect()
}
