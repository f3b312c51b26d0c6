//! Fermi coordinates `(y1, y'')` along a traced geodesic: `F(y) = exp_{gamma(y1)}(y^a e_a(y1))`.

use super::{dot, GeodesicPath, Geometry};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

const EXP_STEPS: usize = 128;

#[derive(Debug, Clone)]
pub struct FermiChart {
    pub path: GeodesicPath,
    pub delta_prime: f64,
}

/// Exact derivatives of the geodesic acceleration: `(d a / d x, d a / d v)`.
fn accel_jacobian(geo: &Geometry, x: &[f64], v: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let d = x.len();
    let (_, dphi, hphi) = geo.phi_jet(x);
    let pv = dot(&dphi, v);
    let vv = dot(v, v);
    let hv: Vec<f64> = (0..d).map(|m| dot(&hphi[m], v)).collect();
    let mut ax = vec![vec![0.0; d]; d];
    let mut av = vec![vec![0.0; d]; d];
    for k in 0..d {
        for m in 0..d {
            ax[k][m] = -2.0 * hv[m] * v[k] + vv * hphi[k][m];
            let delta = if k == m { 1.0 } else { 0.0 };
            av[k][m] = -2.0 * dphi[m] * v[k] - 2.0 * pv * delta + 2.0 * v[m] * dphi[k];
        }
    }
    (ax, av)
}

/// Geodesic flow together with `m` tangent-linear perturbations, `steps` RK4 steps to time 1.
/// State layout: `[x, v, (dx_j, dv_j) for j]`.
fn flow_tangent(geo: &Geometry, x: &[f64], v: &[f64], seeds: &[(Vec<f64>, Vec<f64>)]) -> Vec<f64> {
    let d = x.len();
    let mut s: Vec<f64> = x.iter().chain(v).copied().collect();
    for (dx, dv) in seeds {
        s.extend_from_slice(dx);
        s.extend_from_slice(dv);
    }
    let f = |s: &[f64]| -> Vec<f64> {
        let x = &s[..d];
        let v = &s[d..2 * d];
        let mut out = Vec::with_capacity(s.len());
        out.extend_from_slice(v);
        out.extend(geo.geodesic_accel(x, v));
        let (ax, av) = accel_jacobian(geo, x, v);
        for blk in s[2 * d..].chunks(2 * d) {
            let (dx, dv) = blk.split_at(d);
            out.extend_from_slice(dv);
            for k in 0..d {
                out.push(dot(&ax[k], dx) + dot(&av[k], dv));
            }
        }
        out
    };
    let h = 1.0 / EXP_STEPS as f64;
    for _ in 0..EXP_STEPS {
        let k1 = f(&s);
        let t: Vec<f64> = s.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
        let k2 = f(&t);
        let t: Vec<f64> = s.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
        let k3 = f(&t);
        let t: Vec<f64> = s.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
        let k4 = f(&t);
        for i in 0..s.len() {
            s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    s
}

impl FermiChart {
    pub fn new(path: GeodesicPath, delta_prime: f64) -> Self {
        FermiChart { path, delta_prime }
    }

    fn check(&self, y: &[f64]) -> Result<()> {
        let d = self.path.dim();
        if y.len() != d {
            return Err(Error::InvalidInput(format!("expected {d} Fermi coordinates")));
        }
        let r = dot(&y[1..], &y[1..]).sqrt();
        if r >= self.delta_prime || y[0] < self.path.ext_minus || y[0] > self.path.ext_plus {
            return Err(Error::OutsideTube { radius: self.delta_prime });
        }
        Ok(())
    }

    /// Map Fermi coordinates `(y1, y'')` to chart coordinates.
    pub fn forward(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check(y)?;
        Ok(self.forward_unchecked(y).0)
    }

    /// Chart point and Jacobian `dF/dy` (columns ordered `y1, y2, ...`).
    pub fn forward_with_jacobian(&self, y: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        self.check(y)?;
        Ok(self.forward_unchecked(y))
    }

    fn forward_unchecked(&self, y: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let geo = &self.path.geometry;
        let d = self.path.dim();
        let (x, v) = self.path.state_at(y[0]);
        let fr = self.path.frame_at(y[0]);
        let mut w = vec![0.0; d];
        let mut dw = vec![0.0; d];
        for (a, e) in fr.iter().enumerate() {
            let rate = geo.transport_rate(&x, &v, e);
            for k in 0..d {
                w[k] += y[a + 1] * e[k];
                dw[k] += y[a + 1] * rate[k];
            }
        }
        let mut seeds = vec![(v.clone(), dw)];
        for e in &fr {
            seeds.push((vec![0.0; d], e.clone()));
        }
        let s = flow_tangent(geo, &x, &w, &seeds);
        let p = s[..d].to_vec();
        let mut jac = DMatrix::zeros(d, d);
        for (j, blk) in s[2 * d..].chunks(2 * d).enumerate() {
            for k in 0..d {
                jac[(k, j)] = blk[k];
            }
        }
        (p, jac)
    }

    /// Inverse map by Newton iteration from the nearest-sample projection.
    pub fn inverse(&self, p: &[f64]) -> Result<Vec<f64>> {
        let path = &self.path;
        let geo = &path.geometry;
        let d = path.dim();
        let i = path.nearest_index(p);
        let (x, v, fr) = (&path.pos[i], &path.vel[i], &path.frame[i]);
        let diff: Vec<f64> = p.iter().zip(x).map(|(a, b)| a - b).collect();
        let mut y = vec![path.times[i] + geo.inner(x, &diff, v)];
        for e in fr {
            y.push(geo.inner(x, &diff, e));
        }
        for _ in 0..40 {
            let r = dot(&y[1..], &y[1..]).sqrt();
            if r >= self.delta_prime * 1.5 || y[0] < path.ext_minus || y[0] > path.ext_plus {
                return Err(Error::OutsideTube { radius: self.delta_prime });
            }
            let (q, jac) = self.forward_unchecked(&y);
            let res = DVector::from_iterator(d, q.iter().zip(p).map(|(a, b)| a - b));
            let step = jac.lu().solve(&res).ok_or(Error::OutsideTube { radius: self.delta_prime })?;
            for k in 0..d {
                y[k] -= step[k];
            }
            if step.norm() < 1e-14 {
                break;
            }
        }
        self.check(&y)?;
        Ok(y)
    }

    /// Pulled-back metric `g_F(y)` in Fermi coordinates.
    pub fn metric(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        let (p, jac) = self.forward_with_jacobian(y)?;
        let w = self.path.geometry.conformal_weight(&p);
        Ok(jac.transpose() * &jac * w)
    }

    /// Largest deviation of `g_F(y1, 0)` from the identity and of its first derivatives from
    /// zero (central differences with step `h`).
    pub fn axis_defect(&self, y1: f64, h: f64) -> Result<(f64, f64)> {
        let d = self.path.dim();
        let mut y = vec![0.0; d];
        y[0] = y1;
        let g0 = self.metric(&y)?;
        let dev = (g0 - DMatrix::identity(d, d)).abs().max();
        let mut ddev: f64 = 0.0;
        for i in 0..d {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[i] += h;
            ym[i] -= h;
            let dg = (self.metric(&yp)? - self.metric(&ym)?) / (2.0 * h);
            ddev = ddev.max(dg.abs().max());
        }
        Ok((dev, ddev))
    }
}
