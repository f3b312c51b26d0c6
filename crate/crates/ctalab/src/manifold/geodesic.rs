//! Geodesic tracing (classical RK4 with bisection at the boundary) and parallel frames.

use super::{CtaChart, Geometry};
use crate::error::{Error, Result};
use crate::quad::quintic_hermite;
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct TraceOptions {
    /// Length of the extension `[tau'_-, tau_-]` and `[tau_+, tau'_+]`.
    pub margin: f64,
    /// Arc-length cap in each direction before declaring the geodesic trapped.
    pub arc_cap: f64,
    /// Optional transversal basis at `t = 0`; defaults to Gram-Schmidt on coordinate axes.
    pub basis: Option<Vec<Vec<f64>>>,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions { margin: 0.1, arc_cap: 50.0, basis: None }
    }
}

/// A unit-speed geodesic sampled on the uniform grid `t_i = i h` covering `[tau'_-, tau'_+]`.
#[derive(Debug, Clone, Serialize)]
pub struct GeodesicPath {
    #[serde(skip)]
    pub geometry: Geometry,
    pub h: f64,
    pub times: Vec<f64>,
    pub pos: Vec<Vec<f64>>,
    pub vel: Vec<Vec<f64>>,
    /// `frame[i][alpha]`: parallel orthonormal frame of the normal bundle.
    pub frame: Vec<Vec<Vec<f64>>>,
    pub tau_minus: f64,
    pub tau_plus: f64,
    pub ext_minus: f64,
    pub ext_plus: f64,
}

fn rhs(geo: &Geometry, d: usize, s: &[f64]) -> Vec<f64> {
    let x = &s[..d];
    let v = &s[d..2 * d];
    let mut out = Vec::with_capacity(s.len());
    out.extend_from_slice(v);
    out.extend(geo.geodesic_accel(x, v));
    for e in s[2 * d..].chunks(d) {
        out.extend(geo.transport_rate(x, v, e));
    }
    out
}

pub(crate) fn rk4_step(geo: &Geometry, d: usize, s: &[f64], h: f64) -> Vec<f64> {
    let k1 = rhs(geo, d, s);
    let tmp: Vec<f64> = s.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
    let k2 = rhs(geo, d, &tmp);
    let tmp: Vec<f64> = s.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
    let k3 = rhs(geo, d, &tmp);
    let tmp: Vec<f64> = s.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
    let k4 = rhs(geo, d, &tmp);
    (0..s.len())
        .map(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

fn default_basis(geo: &Geometry, x: &[f64], v: &[f64]) -> Vec<Vec<f64>> {
    let d = x.len();
    let mut vecs: Vec<Vec<f64>> = vec![v.to_vec()];
    for axis in 0..d {
        if vecs.len() == d {
            break;
        }
        let mut w = vec![0.0; d];
        w[axis] = 1.0;
        for u in &vecs {
            let c = geo.inner(x, &w, u) / geo.inner(x, u, u);
            for k in 0..d {
                w[k] -= c * u[k];
            }
        }
        let nw = geo.norm2(x, &w).sqrt();
        if nw > 1e-6 {
            vecs.push(w.iter().map(|c| c / nw).collect());
        }
    }
    vecs.remove(0);
    vecs
}

fn check_basis(geo: &Geometry, x: &[f64], v: &[f64], basis: &[Vec<f64>]) -> Result<()> {
    let d = x.len();
    if basis.len() != d - 1 || basis.iter().any(|b| b.len() != d) {
        return Err(Error::DegenerateBasis);
    }
    for (a, ea) in basis.iter().enumerate() {
        if geo.inner(x, ea, v).abs() > 1e-8 {
            return Err(Error::DegenerateBasis);
        }
        for (b, eb) in basis.iter().enumerate() {
            let target = if a == b { 1.0 } else { 0.0 };
            if (geo.inner(x, ea, eb) - target).abs() > 1e-8 {
                return Err(Error::DegenerateBasis);
            }
        }
    }
    Ok(())
}

struct Sweep {
    states: Vec<Vec<f64>>,
    exit: f64,
}

/// Integrate in one direction (`sign = +-1`) until `margin` past the boundary crossing.
/// The crossing is bisected on the last step well below the `h^2` requirement.
fn sweep(geo: &Geometry, d: usize, s0: &[f64], h: f64, sign: f64, opts: &TraceOptions) -> Result<Sweep> {
    let mut states = vec![s0.to_vec()];
    let mut exit: Option<f64> = None;
    let mut k = 0usize;
    loop {
        let cur = states.last().unwrap().clone();
        let next = rk4_step(geo, d, &cur, sign * h);
        let t_next = (k + 1) as f64 * h;
        if exit.is_none() && geo.boundary_fn(&next[..d]) >= 0.0 {
            let (mut lo, mut hi) = (0.0, h);
            while hi - lo > (h * h).min(1e-13) {
                let mid = 0.5 * (lo + hi);
                let s = rk4_step(geo, d, &cur, sign * mid);
                if geo.boundary_fn(&s[..d]) >= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            exit = Some(k as f64 * h + 0.5 * (lo + hi));
        }
        states.push(next);
        k += 1;
        match exit {
            Some(tau) if t_next >= tau + opts.margin => return Ok(Sweep { states, exit: tau }),
            None if t_next > opts.arc_cap => return Err(Error::TrappedGeodesic { cap: opts.arc_cap }),
            _ => {}
        }
    }
}

/// Trace the maximal geodesic through `x` with unit initial velocity `theta`.
pub fn trace_geodesic(chart: &CtaChart, x: &[f64], theta: &[f64], h: f64) -> Result<GeodesicPath> {
    trace_geodesic_with(chart, x, theta, h, &TraceOptions::default())
}

pub fn trace_geodesic_with(
    chart: &CtaChart,
    x: &[f64],
    theta: &[f64],
    h: f64,
    opts: &TraceOptions,
) -> Result<GeodesicPath> {
    let geo = &chart.geometry;
    let d = chart.dim();
    if x.len() != d || theta.len() != d {
        return Err(Error::InvalidInput(format!("expected {d} transversal coordinates")));
    }
    if !(h > 0.0) || !(opts.margin >= 0.0) {
        return Err(Error::InvalidInput("step and margin must be positive".into()));
    }
    if geo.boundary_fn(x) >= 0.0 {
        return Err(Error::InvalidInput("start point is not interior".into()));
    }
    let norm = geo.norm2(x, theta).sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::NonUnitSpeed { norm });
    }
    let basis = match &opts.basis {
        Some(b) => {
            check_basis(geo, x, theta, b)?;
            b.clone()
        }
        None => default_basis(geo, x, theta),
    };
    let mut s0: Vec<f64> = x.iter().chain(theta).copied().collect();
    for b in &basis {
        s0.extend_from_slice(b);
    }
    let fwd = sweep(geo, d, &s0, h, 1.0, opts)?;
    let bwd = sweep(geo, d, &s0, h, -1.0, opts)?;
    Ok(assemble(geo.clone(), d, h, fwd, bwd))
}

fn assemble(geometry: Geometry, d: usize, h: f64, fwd: Sweep, bwd: Sweep) -> GeodesicPath {
    let nb = bwd.states.len() - 1;
    let nf = fwd.states.len() - 1;
    let mut states: Vec<Vec<f64>> = bwd.states.into_iter().skip(1).rev().collect();
    states.extend(fwd.states);
    let times = (0..states.len()).map(|i| (i as f64 - nb as f64) * h).collect();
    let pos = states.iter().map(|s| s[..d].to_vec()).collect();
    let vel = states.iter().map(|s| s[d..2 * d].to_vec()).collect();
    let frame = states.iter().map(|s| s[2 * d..].chunks(d).map(|c| c.to_vec()).collect()).collect();
    GeodesicPath {
        geometry,
        h,
        times,
        pos,
        vel,
        frame,
        tau_minus: -bwd.exit,
        tau_plus: fwd.exit,
        ext_minus: -(nb as f64) * h,
        ext_plus: nf as f64 * h,
    }
}

/// Parallel-transport an orthonormal basis of `gamma_dot(0)^perp` along the path.
pub fn parallel_frame(path: &GeodesicPath, basis: &[Vec<f64>]) -> Result<Vec<Vec<Vec<f64>>>> {
    let geo = &path.geometry;
    let i0 = path.index_of_zero();
    let d = path.dim();
    let (x, v) = (&path.pos[i0], &path.vel[i0]);
    check_basis(geo, x, v, basis)?;
    let mut s0: Vec<f64> = x.iter().chain(v.iter()).copied().collect();
    for b in basis {
        s0.extend_from_slice(b);
    }
    let n = path.times.len();
    let mut out = vec![Vec::new(); n];
    for (sign, range) in [(1.0, (i0..n).collect::<Vec<_>>()), (-1.0, (0..=i0).rev().collect())] {
        let mut s = s0.clone();
        for (step, &i) in range.iter().enumerate() {
            if step > 0 {
                s = rk4_step(geo, d, &s, sign * path.h);
            }
            out[i] = s[2 * d..].chunks(d).map(|c| c.to_vec()).collect();
        }
    }
    Ok(out)
}

impl GeodesicPath {
    pub fn dim(&self) -> usize {
        self.pos[0].len()
    }

    pub fn index_of_zero(&self) -> usize {
        (-self.times[0] / self.h).round() as usize
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Bracketing interval index and local coordinate `s in [0, 1]`.
    fn locate(&self, t: f64) -> (usize, f64) {
        let u = (t - self.times[0]) / self.h;
        let i = (u.floor().max(0.0) as usize).min(self.times.len() - 2);
        (i, u - i as f64)
    }

    /// Quintic Hermite interpolation of position and velocity at `t`.
    pub fn state_at(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let (i, s) = self.locate(t);
        let geo = &self.geometry;
        let (x0, v0, x1, v1) = (&self.pos[i], &self.vel[i], &self.pos[i + 1], &self.vel[i + 1]);
        let a0 = geo.geodesic_accel(x0, v0);
        let a1 = geo.geodesic_accel(x1, v1);
        let h = self.h;
        let d = self.dim();
        let mut x = vec![0.0; d];
        let mut v = vec![0.0; d];
        let (b, db) = quintic_hermite(s);
        for k in 0..d {
            let c = [x0[k], h * v0[k], h * h * a0[k], x1[k], h * v1[k], h * h * a1[k]];
            x[k] = (0..6).map(|j| b[j] * c[j]).sum();
            v[k] = (0..6).map(|j| db[j] * c[j]).sum::<f64>() / h;
        }
        (x, v)
    }

    /// Cubic Hermite interpolation of the parallel frame at `t`.
    pub fn frame_at(&self, t: f64) -> Vec<Vec<f64>> {
        let (i, s) = self.locate(t);
        let geo = &self.geometry;
        let h = self.h;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s),
            s * (1.0 - s) * (1.0 - s),
            s * s * (3.0 - 2.0 * s),
            s * s * (s - 1.0),
        );
        self.frame[i]
            .iter()
            .zip(&self.frame[i + 1])
            .map(|(e0, e1)| {
                let r0 = geo.transport_rate(&self.pos[i], &self.vel[i], e0);
                let r1 = geo.transport_rate(&self.pos[i + 1], &self.vel[i + 1], e1);
                (0..e0.len())
                    .map(|k| h00 * e0[k] + h10 * h * r0[k] + h01 * e1[k] + h11 * h * r1[k])
                    .collect()
            })
            .collect()
    }

    /// Largest deviation of `|gamma_dot|_g` from 1 over the samples.
    pub fn speed_defect(&self) -> f64 {
        self.pos
            .iter()
            .zip(&self.vel)
            .map(|(x, v)| (self.geometry.norm2(x, v).sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest orthonormality defect of `{gamma_dot, e_alpha}`.
    pub fn frame_defect(&self) -> f64 {
        let geo = &self.geometry;
        let mut worst: f64 = 0.0;
        for ((x, v), fr) in self.pos.iter().zip(&self.vel).zip(&self.frame) {
            for (a, ea) in fr.iter().enumerate() {
                worst = worst.max(geo.inner(x, ea, v).abs());
                for (b, eb) in fr.iter().enumerate() {
                    let target = if a == b { 1.0 } else { 0.0 };
                    worst = worst.max((geo.inner(x, ea, eb) - target).abs());
                }
            }
        }
        worst
    }

    /// CSV with columns `t, x1..x{d}, v1..v{d}`.
    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut out = String::from("t");
        for k in 1..=d {
            out.push_str(&format!(",x{k}"));
        }
        for k in 1..=d {
            out.push_str(&format!(",v{k}"));
        }
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(&format!("{:.12e}", self.times[i]));
            for c in self.pos[i].iter().chain(&self.vel[i]) {
                out.push_str(&format!(",{:.12e}", c));
            }
            out.push('\n');
        }
        out
    }

    /// Transversal normal vector `sum_alpha y^alpha e_alpha(t)`.
    pub fn normal_vector(&self, t: f64, y: &[f64]) -> Vec<f64> {
        let fr = self.frame_at(t);
        let d = self.dim();
        let mut w = vec![0.0; d];
        for (ya, e) in y.iter().zip(&fr) {
            for k in 0..d {
                w[k] += ya * e[k];
            }
        }
        w
    }

    /// Euclidean distance based nearest sample index.
    pub fn nearest_index(&self, p: &[f64]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, x) in self.pos.iter().enumerate() {
            let d2: f64 = x.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < best.0 {
                best = (d2, i);
            }
        }
        best.1
    }
}
