//! Dirichlet solves for `P = -Delta_h + V1` on the box grid.
//!
//! The shifted Laplacian `-Delta_h + s` is diagonal in the tensor sine basis, so it is inverted
//! exactly by DST-I along every axis. A constant `V1` is solved that way directly; a variable
//! `V1` uses restarted GMRES right-preconditioned by the shifted Laplacian with `s = mean V1`.

use super::{sup_norm, DiscreteDomain};
use crate::error::{Error, Result};
use crate::potential::Field;
use crate::C64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

const PIVOT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Clone)]
pub struct DirichletSolver {
    domain: DiscreteDomain,
    v1: Vec<C64>,
    interior: Vec<usize>,
    ishape: Vec<usize>,
    shift: C64,
    constant: bool,
    eig: Vec<Vec<f64>>,
    ffts: Vec<Arc<dyn Fft<f64>>>,
    pivot_ratio: f64,
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl std::fmt::Debug for DirichletSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DirichletSolver")
            .field("domain", &self.domain)
            .field("constant", &self.constant)
            .field("pivot_ratio", &self.pivot_ratio)
            .finish()
    }
}

impl DirichletSolver {
    pub fn new(domain: &DiscreteDomain, v1: &Field) -> Result<Self> {
        let values = if v1.is_zero() { vec![C64::new(0.0, 0.0); domain.len()] } else { domain.sample(|x| v1.eval(x)) };
        Self::from_values(domain, values)
    }

    /// `v1` sampled on every node of `domain`.
    pub fn from_values(domain: &DiscreteDomain, v1: Vec<C64>) -> Result<Self> {
        if v1.len() != domain.len() {
            return Err(Error::InvalidInput("potential grid does not match the domain".into()));
        }
        let interior = domain.interior_nodes();
        let ishape = domain.interior_shape();
        let first = v1[interior[0]];
        let constant = interior.iter().all(|&i| v1[i] == first);
        let eig: Vec<Vec<f64>> = (0..domain.dim())
            .map(|a| {
                let n = domain.cells[a] as f64;
                let h = domain.h(a);
                (1..domain.cells[a]).map(|k| 4.0 / (h * h) * (0.5 * std::f64::consts::PI * k as f64 / n).sin().powi(2)).collect()
            })
            .collect();
        let mut planner = FftPlanner::new();
        let ffts = domain.cells.iter().map(|&c| planner.plan_fft_forward(2 * c)).collect();
        let mut s = Self {
            domain: domain.clone(),
            v1,
            interior,
            ishape,
            shift: C64::new(0.0, 0.0),
            constant,
            eig,
            ffts,
            pivot_ratio: 1.0,
            tol: 1e-13,
            restart: 60,
            max_iter: 3000,
        };
        if constant {
            s.shift = first;
            s.pivot_ratio = s.spectral_ratio(first);
            if s.pivot_ratio < PIVOT_FLOOR {
                return Err(Error::DirichletEigenvalue { ratio: s.pivot_ratio });
            }
        } else {
            let mean = s.interior.iter().map(|&i| s.v1[i]).sum::<C64>() / s.interior.len() as f64;
            let r = s.spectral_ratio(mean);
            s.shift = if r > 1e-6 { mean } else { C64::new(0.0, 0.0) };
            s.pivot_ratio = s.spectral_ratio(s.shift);
        }
        Ok(s)
    }

    pub fn domain(&self) -> &DiscreteDomain {
        &self.domain
    }

    /// `V1` on every node.
    pub fn v1(&self) -> &[C64] {
        &self.v1
    }

    /// `min |mu + s| / max |mu + s|` over the discrete Dirichlet spectrum `mu` of `-Delta_h`,
    /// for the shift `s` used by the spectral factor.
    pub fn pivot_ratio(&self) -> f64 {
        self.pivot_ratio
    }

    fn spectral_ratio(&self, s: C64) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        self.for_each_eig(|_, mu| {
            let v = (mu + s).norm();
            lo = lo.min(v);
            hi = hi.max(v);
        });
        lo / hi
    }

    fn for_each_eig(&self, mut f: impl FnMut(usize, f64)) {
        let total: usize = self.ishape.iter().product();
        let d = self.ishape.len();
        let mut m = vec![0usize; d];
        for idx in 0..total {
            let mu: f64 = (0..d).map(|a| self.eig[a][m[a]]).sum();
            f(idx, mu);
            for a in (0..d).rev() {
                m[a] += 1;
                if m[a] < self.ishape[a] {
                    break;
                }
                m[a] = 0;
            }
        }
    }

    /// In-place DST-I along one axis of an interior array: `y_k = sum_j x_j sin(pi j k / N)`.
    fn dst_axis(&self, data: &mut [C64], axis: usize) {
        let m = self.ishape[axis];
        let n2 = 2 * (m + 1);
        let inner: usize = self.ishape[axis + 1..].iter().product();
        let outer: usize = self.ishape[..axis].iter().product();
        let fft = &self.ffts[axis];
        let mut buf = vec![C64::new(0.0, 0.0); n2];
        let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let half_i = C64::new(0.0, 0.5);
        for o in 0..outer {
            for i in 0..inner {
                let base = o * m * inner + i;
                buf.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
                for j in 0..m {
                    let v = data[base + j * inner];
                    buf[j + 1] = v;
                    buf[n2 - 1 - j] = -v;
                }
                fft.process_with_scratch(&mut buf, &mut scratch);
                for k in 0..m {
                    data[base + k * inner] = half_i * buf[k + 1];
                }
            }
        }
    }

    /// Exact inverse of `-Delta_h + shift` on interior arrays.
    fn spectral_solve(&self, b: &[C64]) -> Vec<C64> {
        let mut u = b.to_vec();
        for a in 0..self.ishape.len() {
            self.dst_axis(&mut u, a);
        }
        let shift = self.shift;
        self.for_each_eig(|idx, mu| u[idx] /= mu + shift);
        for a in 0..self.ishape.len() {
            self.dst_axis(&mut u, a);
        }
        let scale: f64 = self.domain.cells.iter().map(|&c| 2.0 / c as f64).product();
        u.iter_mut().for_each(|z| *z *= scale);
        u
    }

    /// `(-Delta_h + V1) u` for an interior array with zero boundary values.
    fn apply_interior(&self, u: &[C64]) -> Vec<C64> {
        let d = self.ishape.len();
        let mut strides = vec![1usize; d];
        for a in (0..d.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * self.ishape[a + 1];
        }
        let inv_h2: Vec<f64> = (0..d).map(|a| 1.0 / self.domain.h(a).powi(2)).collect();
        let mut m = vec![0usize; d];
        let mut out = vec![C64::new(0.0, 0.0); u.len()];
        for idx in 0..u.len() {
            let mut acc = self.v1[self.interior[idx]] * u[idx];
            for a in 0..d {
                let mut nb = -2.0 * u[idx];
                if m[a] > 0 {
                    nb += u[idx - strides[a]];
                }
                if m[a] + 1 < self.ishape[a] {
                    nb += u[idx + strides[a]];
                }
                acc -= nb * inv_h2[a];
            }
            out[idx] = acc;
            for a in (0..d).rev() {
                m[a] += 1;
                if m[a] < self.ishape[a] {
                    break;
                }
                m[a] = 0;
            }
        }
        out
    }

    /// Solves `P_h u = b` on interior nodes (zero Dirichlet data).
    pub fn solve_interior(&self, b: &[C64]) -> Result<(Vec<C64>, SolveStats)> {
        let bnorm = l2(b);
        if bnorm == 0.0 {
            return Ok((vec![C64::new(0.0, 0.0); b.len()], SolveStats { iterations: 0, residual: 0.0 }));
        }
        if self.constant {
            return Ok((self.spectral_solve(b), SolveStats { iterations: 0, residual: 0.0 }));
        }
        self.gmres(b, bnorm)
    }

    fn gmres(&self, b: &[C64], bnorm: f64) -> Result<(Vec<C64>, SolveStats)> {
        let n = b.len();
        let zero = C64::new(0.0, 0.0);
        let mut x = vec![zero; n];
        let mut r = b.to_vec();
        let mut rnorm = bnorm;
        let mut iters = 0;
        let m = self.restart;
        while iters < self.max_iter {
            let mut basis: Vec<Vec<C64>> = vec![r.iter().map(|z| z / rnorm).collect()];
            let mut hess = vec![vec![zero; m]; m + 1];
            let (mut cs, mut sn) = (vec![zero; m], vec![zero; m]);
            let mut g = vec![zero; m + 1];
            g[0] = C64::new(rnorm, 0.0);
            let mut k_used = 0;
            for k in 0..m {
                iters += 1;
                let mut w = self.apply_interior(&self.spectral_solve(&basis[k]));
                for (j, v) in basis.iter().enumerate() {
                    let hjk: C64 = v.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
                    hess[j][k] = hjk;
                    w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= hjk * vi);
                }
                let wn = l2(&w);
                hess[k + 1][k] = C64::new(wn, 0.0);
                for j in 0..k {
                    let t = cs[j].conj() * hess[j][k] + sn[j].conj() * hess[j + 1][k];
                    hess[j + 1][k] = -sn[j] * hess[j][k] + cs[j] * hess[j + 1][k];
                    hess[j][k] = t;
                }
                let (a, bb) = (hess[k][k], hess[k + 1][k]);
                let den = (a.norm_sqr() + bb.norm_sqr()).sqrt();
                if den == 0.0 {
                    k_used = k;
                    break;
                }
                cs[k] = a / den;
                sn[k] = bb / den;
                hess[k][k] = C64::new(den, 0.0);
                hess[k + 1][k] = zero;
                g[k + 1] = -sn[k] * g[k];
                g[k] = cs[k].conj() * g[k];
                k_used = k + 1;
                if g[k + 1].norm() <= self.tol * bnorm || wn == 0.0 || iters >= self.max_iter {
                    break;
                }
                basis.push(w.iter().map(|z| z / wn).collect());
            }
            // back substitution
            let mut y = vec![zero; k_used];
            for i in (0..k_used).rev() {
                let mut s = g[i];
                for j in i + 1..k_used {
                    s -= hess[i][j] * y[j];
                }
                y[i] = s / hess[i][i];
            }
            let mut z = vec![zero; n];
            for (j, yj) in y.iter().enumerate() {
                z.iter_mut().zip(&basis[j]).for_each(|(zi, vi)| *zi += yj * vi);
            }
            let dx = self.spectral_solve(&z);
            x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
            let ax = self.apply_interior(&x);
            r = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            rnorm = l2(&r);
            if rnorm <= 10.0 * self.tol * bnorm {
                return Ok((x, SolveStats { iterations: iters, residual: rnorm / bnorm }));
            }
        }
        Err(Error::SolverStalled { residual: rnorm / bnorm, iterations: iters })
    }

    /// `P_h u` on interior nodes of a full grid function (zero on the boundary).
    pub fn apply(&self, u: &[C64]) -> Vec<C64> {
        let mut out = self.domain.neg_laplacian(u);
        for &i in &self.interior {
            out[i] += self.v1[i] * u[i];
        }
        out
    }

    /// `G^S F`: solves `P_h u = F` with zero boundary data; `F` is read on interior nodes.
    pub fn green_source(&self, f: &[C64]) -> Result<Vec<C64>> {
        Ok(self.green_source_stats(f)?.0)
    }

    pub fn green_source_stats(&self, f: &[C64]) -> Result<(Vec<C64>, SolveStats)> {
        let b: Vec<C64> = self.interior.iter().map(|&i| f[i]).collect();
        let (w, st) = self.solve_interior(&b)?;
        let mut u = vec![C64::new(0.0, 0.0); self.domain.len()];
        for (&i, v) in self.interior.iter().zip(w) {
            u[i] = v;
        }
        Ok((u, st))
    }

    /// `G^D f` for boundary data `f` over [`DiscreteDomain::boundary_nodes`].
    pub fn green_dirichlet(&self, f: &[C64]) -> Result<Vec<C64>> {
        let ub = self.domain.extend_boundary(f);
        if sup_norm(f) == 0.0 {
            return Ok(ub);
        }
        let lifted = self.apply(&ub);
        let b: Vec<C64> = self.interior.iter().map(|&i| -lifted[i]).collect();
        let (w, _) = self.solve_interior(&b)?;
        let mut u = ub;
        for (&i, v) in self.interior.iter().zip(w) {
            u[i] = v;
        }
        Ok(u)
    }

    /// `G^D` applied to the trace of a closed-form function.
    pub fn green_dirichlet_fn(&self, f: impl Fn(&[f64]) -> C64) -> Result<Vec<C64>> {
        self.green_dirichlet(&self.domain.trace_of(f))
    }
}

fn l2(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
