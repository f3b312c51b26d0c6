//! Complex Jacobi fields `Y'' + K Y = 0` in a parallel frame, the Riccati matrix `H = Y' Y^{-1}`,
//! the `epsilon` families used by the ray-transform inversions, and conjugate point scans.
//!
//! `K_{ba}(t) = g(R(e_a, gamma'), gamma'), e_b)` is the Jacobi operator of the transversal
//! metric restricted to the normal bundle, so the unit sphere has `K = I`.

use crate::error::{Error, Result};
use crate::manifold::{CtaChart, GeodesicPath};
use crate::quad::{quintic_hermite, uniform_stencil};
use crate::C64;
use nalgebra::DMatrix;

pub type CMat = DMatrix<C64>;

/// Curvature matrices `K(t_i)` on a uniform grid.
#[derive(Debug, Clone)]
pub struct CurvaturePath {
    pub times: Vec<f64>,
    pub k: Vec<DMatrix<f64>>,
}

impl CurvaturePath {
    /// Sample `f` on `t_i = t0 + i h`, `i = 0..len`.
    pub fn from_fn(t0: f64, h: f64, len: usize, f: impl Fn(f64) -> DMatrix<f64>) -> Self {
        let times: Vec<f64> = (0..len).map(|i| t0 + i as f64 * h).collect();
        let k = times.iter().map(|&t| f(t)).collect();
        CurvaturePath { times, k }
    }

    /// Constant curvature on `[t0, t1]` with step close to `h`.
    pub fn constant(t0: f64, t1: f64, h: f64, k: DMatrix<f64>) -> Self {
        let len = ((t1 - t0) / h).ceil() as usize + 1;
        CurvaturePath::from_fn(t0, (t1 - t0) / (len - 1) as f64, len, |_| k.clone())
    }

    pub fn dim(&self) -> usize {
        self.k[0].nrows()
    }

    pub fn step(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn range(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }

    /// Cubic interpolation of `K` at `t`.
    pub fn at(&self, t: f64) -> DMatrix<f64> {
        let (start, w) = uniform_stencil(self.times[0], self.step(), self.times.len(), t);
        let mut out = DMatrix::zeros(self.dim(), self.dim());
        for (j, wj) in w.iter().enumerate() {
            out += &self.k[start + j] * *wj;
        }
        out
    }

    /// Largest asymmetry `|K - K^T|` over the samples.
    pub fn asymmetry(&self) -> f64 {
        self.k.iter().map(|k| (k - k.transpose()).abs().max()).fold(0.0, f64::max)
    }
}

/// Curvature along a traced geodesic, in its parallel frame.
pub fn curvature_along(path: &GeodesicPath, chart: &CtaChart) -> Result<CurvaturePath> {
    let d = path.dim();
    if d != chart.dim() || path.geometry != chart.geometry {
        return Err(Error::InvalidInput("path was not traced on this chart".into()));
    }
    if path.len() < 4 {
        return Err(Error::InvalidInput("path needs at least four samples".into()));
    }
    let geo = &chart.geometry;
    let m = d - 1;
    let k = (0..path.len())
        .map(|i| {
            let (x, v, fr) = (&path.pos[i], &path.vel[i], &path.frame[i]);
            let riem = geo.riemann(x);
            DMatrix::from_fn(m, m, |b, a| geo.jacobi_form(x, &riem, &fr[a], v, &fr[b]))
        })
        .collect();
    Ok(CurvaturePath { times: path.times.clone(), k })
}

/// Solution of the matrix Jacobi equation sampled on the curvature grid.
#[derive(Debug, Clone)]
pub struct ComplexJacobiField {
    pub times: Vec<f64>,
    pub y: Vec<CMat>,
    pub yd: Vec<CMat>,
    pub tau0: f64,
    pub y0: CMat,
    pub y1: CMat,
    /// Whether the anchor data satisfy the admissibility condition.
    pub member: bool,
    curvature: CurvaturePath,
}

fn cmat(k: &DMatrix<f64>) -> CMat {
    k.map(|v| C64::new(v, 0.0))
}

fn rk4_linear(kp: &CurvaturePath, t: f64, y: &CMat, yd: &CMat, h: f64) -> (CMat, CMat) {
    let k0 = cmat(&kp.at(t));
    let km = cmat(&kp.at(t + 0.5 * h));
    let k1 = cmat(&kp.at(t + h));
    let hc = C64::new(h, 0.0);
    let half = C64::new(0.5 * h, 0.0);
    let a1 = yd.clone();
    let b1 = -(&k0 * y);
    let y2 = y + &a1 * half;
    let a2 = yd + &b1 * half;
    let b2 = -(&km * &y2);
    let y3 = y + &a2 * half;
    let a3 = yd + &b2 * half;
    let b3 = -(&km * &y3);
    let y4 = y + &a3 * hc;
    let a4 = yd + &b3 * hc;
    let b4 = -(&k1 * &y4);
    let sixth = C64::new(h / 6.0, 0.0);
    let two = C64::new(2.0, 0.0);
    (
        y + (&a1 + &a2 * two + &a3 * two + &a4) * sixth,
        yd + (&b1 + &b2 * two + &b3 * two + &b4) * sixth,
    )
}

/// Admissibility at the anchor: `Y0` invertible, `Y1 Y0^{-1}` symmetric with positive definite
/// imaginary part.
pub fn admissible(y0: &CMat, y1: &CMat) -> bool {
    let Some(inv) = y0.clone().try_inverse() else {
        return false;
    };
    let h = y1 * inv;
    let scale = h.iter().map(|z| z.norm()).fold(1.0, f64::max);
    if (&h - h.transpose()).iter().any(|z| z.norm() > 1e-10 * scale) {
        return false;
    }
    let im = h.map(|z| z.im);
    let sym = (&im + im.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min() > 0.0
}

/// Integrate `Y'' + K Y = 0` from `Y(tau0) = Y0`, `Y'(tau0) = Y1` over the whole curvature grid.
///
/// With `require_member` the anchor must satisfy [`admissible`].
pub fn solve_jacobi(
    k: &CurvaturePath,
    tau0: f64,
    y0: &CMat,
    y1: &CMat,
    require_member: bool,
) -> Result<ComplexJacobiField> {
    let m = k.dim();
    if y0.shape() != (m, m) || y1.shape() != (m, m) {
        return Err(Error::InvalidInput(format!("anchor matrices must be {m}x{m}")));
    }
    let (lo, hi) = k.range();
    if !(tau0 >= lo - 1e-12 && tau0 <= hi + 1e-12) {
        return Err(Error::InvalidInput(format!("anchor {tau0} outside [{lo}, {hi}]")));
    }
    let member = admissible(y0, y1);
    if require_member && !member {
        return Err(Error::SingularAnchor);
    }
    let n = k.times.len();
    let h = k.step();
    let u = (tau0 - lo) / h;
    let mut i_lo = u.floor() as isize;
    let mut frac = u - i_lo as f64;
    if frac > 1.0 - 1e-9 {
        i_lo += 1;
        frac = 0.0;
    }
    let i_lo = (i_lo.max(0) as usize).min(n - 1);
    let mut y = vec![CMat::zeros(m, m); n];
    let mut yd = vec![CMat::zeros(m, m); n];
    // forward sweep
    let (mut cy, mut cyd, mut t) = (y0.clone(), y1.clone(), tau0);
    let first_fwd = if frac < 1e-9 {
        y[i_lo] = y0.clone();
        yd[i_lo] = y1.clone();
        i_lo + 1
    } else {
        i_lo + 1
    };
    for i in first_fwd..n {
        let step = k.times[i] - t;
        let (a, b) = rk4_linear(k, t, &cy, &cyd, step);
        cy = a;
        cyd = b;
        t = k.times[i];
        y[i] = cy.clone();
        yd[i] = cyd.clone();
    }
    // backward sweep
    let (mut cy, mut cyd, mut t) = (y0.clone(), y1.clone(), tau0);
    let last_bwd = if frac < 1e-9 { i_lo as isize - 1 } else { i_lo as isize };
    for i in (0..=last_bwd).rev() {
        let i = i as usize;
        let step = k.times[i] - t;
        let (a, b) = rk4_linear(k, t, &cy, &cyd, step);
        cy = a;
        cyd = b;
        t = k.times[i];
        y[i] = cy.clone();
        yd[i] = cyd.clone();
    }
    Ok(ComplexJacobiField {
        times: k.times.clone(),
        y,
        yd,
        tau0,
        y0: y0.clone(),
        y1: y1.clone(),
        member,
        curvature: k.clone(),
    })
}

impl ComplexJacobiField {
    pub fn dim(&self) -> usize {
        self.y0.nrows()
    }

    pub fn curvature(&self) -> &CurvaturePath {
        &self.curvature
    }

    fn h(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    /// Quintic Hermite interpolation of `(Y, Y')` at `t`, using `Y'' = -K Y` at the nodes.
    pub fn at(&self, t: f64) -> (CMat, CMat) {
        let h = self.h();
        let u = (t - self.times[0]) / h;
        let i = (u.floor().max(0.0) as usize).min(self.times.len() - 2);
        let s = u - i as f64;
        let (b, db) = quintic_hermite(s);
        let a0 = -(cmat(&self.curvature.k[i]) * &self.y[i]);
        let a1 = -(cmat(&self.curvature.k[i + 1]) * &self.y[i + 1]);
        let c = |x: f64| C64::new(x, 0.0);
        let parts = [&self.y[i], &self.yd[i], &a0, &self.y[i + 1], &self.yd[i + 1], &a1];
        let scale = [1.0, h, h * h, 1.0, h, h * h];
        let mut y = CMat::zeros(self.dim(), self.dim());
        let mut yd = CMat::zeros(self.dim(), self.dim());
        for j in 0..6 {
            y += parts[j] * c(b[j] * scale[j]);
            yd += parts[j] * c(db[j] * scale[j] / h);
        }
        (y, yd)
    }

    pub fn det_at(&self, t: f64) -> C64 {
        self.at(t).0.determinant()
    }

    /// The field `s Y` (same Riccati matrix `H`, anchor data scaled by `s`).
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        let c = C64::new(s, 0.0);
        out.y.iter_mut().chain(out.yd.iter_mut()).for_each(|m| *m *= c);
        out.y0 *= c;
        out.y1 *= c;
        out
    }

    pub fn dets(&self) -> Vec<C64> {
        self.y.iter().map(|y| y.determinant()).collect()
    }

    /// Index range of samples inside `[a, b]`.
    pub fn window(&self, a: f64, b: f64) -> std::ops::RangeInclusive<usize> {
        let h = self.h();
        let t0 = self.times[0];
        let i0 = ((a - t0) / h - 1e-9).ceil().max(0.0) as usize;
        let i1 = (((b - t0) / h + 1e-9).floor() as usize).min(self.times.len() - 1);
        i0..=i1
    }

    /// CSV with columns `t, Re(Y_ij).., Im(Y_ij).., detY_re, detY_im, c_cons`.
    pub fn to_csv(&self) -> String {
        let m = self.dim();
        let mut out = String::from("t");
        for part in ["re", "im"] {
            for i in 1..=m {
                for j in 1..=m {
                    out.push_str(&format!(",Y{i}{j}_{part}"));
                }
            }
        }
        out.push_str(",detY_re,detY_im,c_cons\n");
        for (i, t) in self.times.iter().enumerate() {
            out.push_str(&format!("{:.12e}", t));
            for z in self.y[i].transpose().iter() {
                out.push_str(&format!(",{:.12e}", z.re));
            }
            for z in self.y[i].transpose().iter() {
                out.push_str(&format!(",{:.12e}", z.im));
            }
            let det = self.y[i].determinant();
            let c = riccati_at(&self.y[i], &self.yd[i]).map(|(_, c)| c).unwrap_or(f64::NAN);
            out.push_str(&format!(",{:.12e},{:.12e},{:.12e}\n", det.re, det.im, c));
        }
        out
    }
}

/// `H = Y' Y^{-1}` and `det(Im H) |det Y|^2`.
fn riccati_at(y: &CMat, yd: &CMat) -> Option<(CMat, f64)> {
    let inv = y.clone().try_inverse()?;
    let h = yd * inv;
    let im = h.map(|z| z.im);
    let c = im.determinant() * y.determinant().norm_sqr();
    Some((h, c))
}

/// Fundamental real solutions `X` (`X = 0`, `X' = I`) and `Z` (`Z = I`, `Z' = 0`) at an anchor.
#[derive(Debug, Clone)]
pub struct JacobiPair {
    pub x: ComplexJacobiField,
    pub z: ComplexJacobiField,
    pub anchor: f64,
}

impl JacobiPair {
    pub fn new(k: &CurvaturePath, anchor: f64) -> Result<Self> {
        let m = k.dim();
        let zero = CMat::zeros(m, m);
        let id = CMat::identity(m, m);
        let x = solve_jacobi(k, anchor, &zero, &id, false)?;
        let z = solve_jacobi(k, anchor, &id, &zero, false)?;
        Ok(JacobiPair { x, z, anchor })
    }

    /// `Y^eps = X - i eps Z`, admissible at the anchor for every `eps > 0`.
    pub fn family(&self, eps: f64) -> Result<ComplexJacobiField> {
        if !(eps > 0.0) {
            return Err(Error::InvalidInput("epsilon must be positive".into()));
        }
        let s = C64::new(0.0, -eps);
        let m = self.x.dim();
        let id = CMat::identity(m, m);
        Ok(ComplexJacobiField {
            times: self.x.times.clone(),
            y: self.x.y.iter().zip(&self.z.y).map(|(x, z)| x + z * s).collect(),
            yd: self.x.yd.iter().zip(&self.z.yd).map(|(x, z)| x + z * s).collect(),
            tau0: self.anchor,
            y0: &id * s,
            y1: id,
            member: true,
            curvature: self.x.curvature.clone(),
        })
    }

    /// Scalar Wronskian `W_{Z,X} = Z' X - X' Z` at every sample (`m = 1` only).
    pub fn wronskian(&self) -> Vec<f64> {
        (0..self.x.times.len())
            .map(|i| (self.z.yd[i][(0, 0)] * self.x.y[i][(0, 0)] - self.x.yd[i][(0, 0)] * self.z.y[i][(0, 0)]).re)
            .collect()
    }
}

/// `Y^eps` anchored at `t = 0`: `Y(0) = -i eps I`, `Y'(0) = I`.
pub fn epsilon_family(k: &CurvaturePath, eps: f64) -> Result<ComplexJacobiField> {
    JacobiPair::new(k, 0.0)?.family(eps)
}

/// `Y^eps` anchored at `anchor` (typically `tau'_-`).
pub fn epsilon_family_at(k: &CurvaturePath, anchor: f64, eps: f64) -> Result<ComplexJacobiField> {
    JacobiPair::new(k, anchor)?.family(eps)
}

#[derive(Debug, Clone)]
pub struct RiccatiPath {
    pub times: Vec<f64>,
    pub h: Vec<CMat>,
    pub det_y: Vec<C64>,
    /// `det(Im H) |det Y|^2` at each sample.
    pub c_samples: Vec<f64>,
    /// Value at the anchor (or the window start if the anchor is outside).
    pub c_cons: f64,
}

impl RiccatiPath {
    /// Relative spread of the conserved quantity.
    pub fn c_drift(&self) -> f64 {
        let (lo, hi) = self
            .c_samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &c| (a.min(c), b.max(c)));
        (hi - lo) / self.c_cons.abs()
    }

    /// Smallest eigenvalue of the symmetric part of `Im H` over the window.
    pub fn min_im_eigenvalue(&self) -> f64 {
        self.h
            .iter()
            .map(|h| {
                let im = h.map(|z| z.im);
                ((&im + im.transpose()) * 0.5).symmetric_eigenvalues().min()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest `|H - H^T|` over the window.
    pub fn max_asymmetry(&self) -> f64 {
        self.h.iter().map(|h| (h - h.transpose()).iter().map(|z| z.norm()).fold(0.0, f64::max)).fold(0.0, f64::max)
    }
}

/// `H = Y' Y^{-1}` on the samples inside `[a, b]`.
pub fn riccati_path(y: &ComplexJacobiField, a: f64, b: f64) -> Result<RiccatiPath> {
    let idx: Vec<usize> = y.window(a, b).collect();
    if idx.is_empty() {
        return Err(Error::InvalidInput("empty Riccati window".into()));
    }
    let det_y: Vec<C64> = idx.iter().map(|&i| y.y[i].determinant()).collect();
    let scale = det_y.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut h = Vec::with_capacity(idx.len());
    let mut c_samples = Vec::with_capacity(idx.len());
    for (j, &i) in idx.iter().enumerate() {
        if det_y[j].norm() < 1e-12 * scale {
            return Err(Error::ConjugatePointHit { t: y.times[i] });
        }
        let (hm, c) = riccati_at(&y.y[i], &y.yd[i]).ok_or(Error::ConjugatePointHit { t: y.times[i] })?;
        h.push(hm);
        c_samples.push(c);
    }
    // zeros between samples: refine interior local minima of |det Y|
    for j in 1..idx.len().saturating_sub(1) {
        let (a, b, cc) = (det_y[j - 1].norm(), det_y[j].norm(), det_y[j + 1].norm());
        if b <= a && b <= cc {
            let (t, v) = golden_min(|t| y.det_at(t).norm(), y.times[idx[j - 1]], y.times[idx[j + 1]]);
            if v < 1e-12 * scale {
                return Err(Error::ConjugatePointHit { t });
            }
        }
    }
    let times: Vec<f64> = idx.iter().map(|&i| y.times[i]).collect();
    let j0 = times
        .iter()
        .enumerate()
        .min_by(|p, q| (p.1 - y.tau0).abs().partial_cmp(&(q.1 - y.tau0).abs()).unwrap())
        .map(|p| p.0)
        .unwrap();
    let c_cons = c_samples[j0];
    Ok(RiccatiPath { times, h, det_y, c_samples, c_cons })
}

/// Zeros of `det X(t)` for `X(0) = 0`, `X'(0) = I`, away from `t = 0`.
pub fn conjugate_scan(k: &CurvaturePath) -> Result<Vec<f64>> {
    let (lo, hi) = k.range();
    if !(lo < 0.0 && hi > 0.0) {
        return Err(Error::InvalidInput("curvature grid must contain t = 0".into()));
    }
    let pair = JacobiPair::new(k, 0.0)?;
    let x = &pair.x;
    let det = |t: f64| x.det_at(t).re;
    let dets: Vec<f64> = x.y.iter().map(|y| y.determinant().re).collect();
    let scale = dets.iter().map(|d| d.abs()).fold(0.0, f64::max);
    let thresh = 1e-12 * scale;
    let n = dets.len();
    let i0 = x.window(0.0, 0.0).next().unwrap_or(0);
    let mut found = Vec::new();
    // skip the anchor neighbourhood where det X ~ t^m vanishes trivially
    let guard = 2usize;
    let scan = |range: Vec<usize>, found: &mut Vec<f64>| {
        for w in range.windows(3) {
            let (a, b, c) = (w[0], w[1], w[2]);
            if dets[a] == 0.0 || dets[a].signum() != dets[b].signum() && dets[b] != 0.0 {
                let (mut l, mut r) = (x.times[a].min(x.times[b]), x.times[a].max(x.times[b]));
                let sl = det(l).signum();
                for _ in 0..80 {
                    let mid = 0.5 * (l + r);
                    if det(mid).signum() == sl {
                        l = mid;
                    } else {
                        r = mid;
                    }
                }
                found.push(0.5 * (l + r));
            } else if dets[b].abs() <= dets[a].abs() && dets[b].abs() <= dets[c].abs() && dets[b].signum() == dets[c].signum() {
                // touching zero
                let (l, r) = (x.times[a].min(x.times[c]), x.times[a].max(x.times[c]));
                let (t, v) = golden_min(|t| det(t).abs(), l, r);
                if v <= thresh {
                    found.push(t);
                }
            }
        }
    };
    if i0 + guard < n {
        scan((i0 + guard..n).collect(), &mut found);
    }
    if i0 >= guard {
        scan((0..=i0 - guard).rev().collect(), &mut found);
    }
    found.sort_by(|a, b| a.partial_cmp(b).unwrap());
    found.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    Ok(found)
}

/// Golden-section minimum of `f` on `[l, r]`.
fn golden_min(f: impl Fn(f64) -> f64, mut l: f64, mut r: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let (p, q) = (r - g * (r - l), l + g * (r - l));
        if f(p) < f(q) {
            r = q;
        } else {
            l = p;
        }
    }
    let t = 0.5 * (l + r);
    (t, f(t))
}
