//! Right inverse of the conjugated operator `L_lambda = -(d_0 + lambda)^2 - Delta' + V_1`
//! on the cylinder `R x T`, where `T` is a flat torus enclosing the transversal chart.
//!
//! Each transversal Fourier mode `psi_l` decouples into the ODE
//! `-(d_0 + lambda - sqrt(mu_l)) (d_0 + lambda + sqrt(mu_l)) R_l = F_l`, solved by two first-order
//! operators `S_a = (d_0 + a)^{-1}` with the causal (`a > 0`) or anticausal (`a < 0`) kernel.

use crate::error::{Error, Result};
use crate::potential::Field;
use crate::quad::{gauss_legendre_on, uniform_derivative};
use crate::C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Flat torus `prod_a [-L_a/2, L_a/2)` with its Fourier eigenbasis
/// `psi_k(x) = exp(i sum_a 2 pi k_a (x_a + L_a/2) / L_a) / sqrt(vol)`, `mu_k = |2 pi k / L|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    pub sides: Vec<f64>,
    pub shape: Vec<usize>,
}

impl EigenBasis {
    pub fn new(sides: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        if sides.is_empty() || sides.len() != shape.len() || sides.len() > 3 {
            return Err(Error::InvalidInput("torus needs 1 to 3 matching sides and grid sizes".into()));
        }
        if sides.iter().any(|&l| !(l > 0.0)) || shape.iter().any(|&n| n < 2) {
            return Err(Error::InvalidInput("torus sides must be positive and grids at least 2 points".into()));
        }
        Ok(EigenBasis { sides, shape })
    }

    /// Cube torus of side `side` with `points` nodes per axis.
    pub fn cube(d: usize, side: f64, points: usize) -> Result<Self> {
        Self::new(vec![side; d], vec![points; d])
    }

    pub fn dim(&self) -> usize {
        self.sides.len()
    }

    /// Number of grid nodes, equal to the number of representable modes.
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn volume(&self) -> f64 {
        self.sides.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.volume() / self.len() as f64
    }

    fn unflatten(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            out[a] = idx % self.shape[a];
            idx /= self.shape[a];
        }
        out
    }

    /// Transversal grid node with flat index `idx`.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.unflatten(idx)
            .iter()
            .enumerate()
            .map(|(a, &j)| -0.5 * self.sides[a] + j as f64 * self.sides[a] / self.shape[a] as f64)
            .collect()
    }

    /// Integer wave numbers of mode `idx` in FFT ordering.
    pub fn wavenumber(&self, idx: usize) -> Vec<i64> {
        self.unflatten(idx)
            .iter()
            .zip(&self.shape)
            .map(|(&j, &n)| if j < n / 2 { j as i64 } else { j as i64 - n as i64 })
            .collect()
    }

    /// Flat index of the mode with wave numbers `k`, if representable.
    pub fn index_of(&self, k: &[i64]) -> Option<usize> {
        if k.len() != self.dim() {
            return None;
        }
        let mut idx = 0;
        for (a, &ka) in k.iter().enumerate() {
            let n = self.shape[a] as i64;
            if ka < -(n / 2) || ka >= n - n / 2 {
                return None;
            }
            idx = idx * self.shape[a] + ka.rem_euclid(n) as usize;
        }
        Some(idx)
    }

    pub fn wavevector(&self, idx: usize) -> Vec<f64> {
        self.wavenumber(idx).iter().zip(&self.sides).map(|(&k, &l)| 2.0 * PI * k as f64 / l).collect()
    }

    /// Eigenvalue of `-Delta'` for mode `idx`.
    pub fn mu(&self, idx: usize) -> f64 {
        self.wavevector(idx).iter().map(|w| w * w).sum()
    }

    /// `(index, mu)` for every representable mode, with `mu` nondecreasing.
    pub fn spectrum(&self) -> Vec<(usize, f64)> {
        let mut s: Vec<(usize, f64)> = (0..self.len()).map(|i| (i, self.mu(i))).collect();
        s.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        s
    }

    pub fn psi(&self, idx: usize, x: &[f64]) -> C64 {
        let phase: f64 = self
            .wavevector(idx)
            .iter()
            .zip(x.iter().zip(&self.sides))
            .map(|(w, (xa, l))| w * (xa + 0.5 * l))
            .sum();
        C64::from_polar(1.0 / self.volume().sqrt(), phase)
    }

    /// Coefficients `<u, psi_k>` of a grid function on the torus.
    pub fn forward(&self, values: &[C64]) -> Vec<C64> {
        let mut buf = values.to_vec();
        self.fft(&mut buf, false);
        let s = self.cell_volume() / self.volume().sqrt();
        buf.iter_mut().for_each(|v| *v *= s);
        buf
    }

    /// Grid values of `sum_k c_k psi_k`.
    pub fn inverse(&self, coeffs: &[C64]) -> Vec<C64> {
        let mut buf = coeffs.to_vec();
        self.fft(&mut buf, true);
        let s = 1.0 / self.volume().sqrt();
        buf.iter_mut().for_each(|v| *v *= s);
        buf
    }

    fn fft(&self, data: &mut [C64], inverse: bool) {
        let mut planner = FftPlanner::<f64>::new();
        let d = self.dim();
        for a in 0..d {
            let n = self.shape[a];
            let stride: usize = self.shape[a + 1..].iter().product();
            let plan = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
            let mut line = vec![C64::new(0.0, 0.0); n];
            let outer = data.len() / (n * stride);
            for o in 0..outer {
                for s in 0..stride {
                    let base = o * n * stride + s;
                    for j in 0..n {
                        line[j] = data[base + j * stride];
                    }
                    plan.process(&mut line);
                    for j in 0..n {
                        data[base + j * stride] = line[j];
                    }
                }
            }
        }
    }
}

/// Grid function on `x0-grid x torus`; `values[i * basis.len() + j]` is the value at `(x0[i], point(j))`.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderFunction {
    pub x0: Vec<f64>,
    pub basis: EigenBasis,
    pub values: Vec<C64>,
}

impl CylinderFunction {
    /// Samples `f([x0, x'...])`. The `x0` grid must be uniform.
    pub fn from_fn(x0: Vec<f64>, basis: EigenBasis, f: impl Fn(&[f64]) -> C64) -> Result<Self> {
        check_uniform(&x0)?;
        let m = basis.len();
        let pts: Vec<Vec<f64>> = (0..m).map(|j| basis.point(j)).collect();
        let mut x = vec![0.0; basis.dim() + 1];
        let mut values = Vec::with_capacity(x0.len() * m);
        for &t in &x0 {
            x[0] = t;
            for p in &pts {
                x[1..].copy_from_slice(p);
                values.push(f(&x));
            }
        }
        Ok(CylinderFunction { x0, basis, values })
    }

    pub fn zeros_like(&self) -> Self {
        CylinderFunction { values: vec![C64::new(0.0, 0.0); self.values.len()], ..self.clone() }
    }

    /// Uniform grid of `n` points on `[a, b]`.
    pub fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    pub fn dx0(&self) -> f64 {
        self.x0[1] - self.x0[0]
    }

    pub fn slice(&self, i: usize) -> &[C64] {
        let m = self.basis.len();
        &self.values[i * m..(i + 1) * m]
    }

    /// Mode coefficients in the same layout as `values`.
    pub fn modes(&self) -> Vec<C64> {
        let m = self.basis.len();
        let mut out = Vec::with_capacity(self.values.len());
        for i in 0..self.x0.len() {
            out.extend(self.basis.forward(&self.values[i * m..(i + 1) * m]));
        }
        out
    }

    pub fn from_modes(x0: Vec<f64>, basis: EigenBasis, modes: &[C64]) -> Self {
        let m = basis.len();
        let mut values = Vec::with_capacity(modes.len());
        for i in 0..x0.len() {
            values.extend(basis.inverse(&modes[i * m..(i + 1) * m]));
        }
        CylinderFunction { x0, basis, values }
    }

    /// Discrete `L^2` norm over the whole grid.
    pub fn l2_norm(&self) -> f64 {
        (self.dx0() * self.basis.cell_volume() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// Discrete `H^k` norm: `sum_l sum_{i <= k} (1 + mu_l)^{k - i} ||d_0^i u_l||^2`,
    /// with 9-point finite differences in `x0`.
    pub fn sobolev_norm(&self, k: usize) -> f64 {
        let m = self.basis.len();
        let modes = self.modes();
        let dx = self.dx0();
        let mut total = 0.0;
        let mut line = vec![C64::new(0.0, 0.0); self.x0.len()];
        for l in 0..m {
            for (i, v) in line.iter_mut().enumerate() {
                *v = modes[i * m + l];
            }
            let w = 1.0 + self.basis.mu(l);
            for order in 0..=k {
                let d = if order == 0 { line.clone() } else { uniform_derivative(&line, dx, order, 9) };
                total += w.powi((k - order) as i32) * d.iter().map(|v| v.norm_sqr()).sum::<f64>();
            }
        }
        (dx * total).sqrt()
    }

    pub fn scaled(&self, s: C64) -> Self {
        CylinderFunction { values: self.values.iter().map(|v| v * s).collect(), ..self.clone() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        CylinderFunction { values, ..self.clone() }
    }

    /// Pointwise product with a field evaluated at `[x0, x'...]`.
    pub fn multiply(&self, v: &Field) -> Self {
        if v.is_zero() {
            return self.zeros_like();
        }
        let m = self.basis.len();
        let pts: Vec<Vec<f64>> = (0..m).map(|j| self.basis.point(j)).collect();
        let mut x = vec![0.0; self.basis.dim() + 1];
        let mut values = self.values.clone();
        for (i, &t) in self.x0.iter().enumerate() {
            x[0] = t;
            for (j, p) in pts.iter().enumerate() {
                x[1..].copy_from_slice(p);
                values[i * m + j] *= v.eval(&x);
            }
        }
        CylinderFunction { values, ..self.clone() }
    }

    /// Multiply by the `x0` cutoff `window_cutoff(x0, a, b, ramp)`.
    pub fn windowed(&self, a: f64, b: f64, ramp: f64) -> Self {
        let m = self.basis.len();
        let mut values = self.values.clone();
        for (i, &t) in self.x0.iter().enumerate() {
            let c = window_cutoff(t, a, b, ramp);
            values[i * m..(i + 1) * m].iter_mut().for_each(|v| *v *= c);
        }
        CylinderFunction { values, ..self.clone() }
    }
}

/// Smooth cutoff equal to 1 on `[a, b]` and 0 outside `[a - ramp, b + ramp]`.
pub fn window_cutoff(x: f64, a: f64, b: f64, ramp: f64) -> f64 {
    let s = if x < a {
        (a - x) / ramp
    } else if x > b {
        (x - b) / ramp
    } else {
        return 1.0;
    };
    if s >= 1.0 {
        return 0.0;
    }
    let f = |u: f64| if u <= 0.0 { 0.0 } else { (-1.0 / u).exp() };
    f(1.0 - s) / (f(1.0 - s) + f(s))
}

fn check_uniform(x0: &[f64]) -> Result<()> {
    if x0.len() < 9 {
        return Err(Error::InvalidInput("x0 grid needs at least 9 points".into()));
    }
    let h = x0[1] - x0[0];
    if !(h > 0.0) || x0.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0)) {
        return Err(Error::InvalidInput("x0 grid must be uniform and increasing".into()));
    }
    Ok(())
}

const STENCIL: usize = 6;

/// `int_0^1 exp(-c (1 - u)) u^k du` for `k < STENCIL`.
fn exp_moments(c: f64) -> [f64; STENCIL] {
    let mut m = [0.0; STENCIL];
    if c > 8.0 {
        // upward recurrence is stable once k / c < 1
        m[0] = -(-c).exp_m1() / c;
        for k in 1..STENCIL {
            m[k] = (1.0 - k as f64 * m[k - 1]) / c;
        }
    } else {
        let (x, w) = gauss_legendre_on(24, 0.0, 1.0);
        for (u, wi) in x.iter().zip(&w) {
            let e = wi * (-c * (1.0 - u)).exp();
            let mut p = 1.0;
            for mk in m.iter_mut() {
                *mk += e * p;
                p *= u;
            }
        }
    }
    m
}

/// Monomial coefficients of the Lagrange basis polynomials on `nodes`.
fn lagrange_monomials(nodes: &[f64; STENCIL]) -> [[f64; STENCIL]; STENCIL] {
    let mut out = [[0.0; STENCIL]; STENCIL];
    for (m, row) in out.iter_mut().enumerate() {
        let mut p = vec![1.0];
        let mut denom = 1.0;
        for (i, &ui) in nodes.iter().enumerate() {
            if i == m {
                continue;
            }
            let mut q = vec![0.0; p.len() + 1];
            for (k, &c) in p.iter().enumerate() {
                q[k + 1] += c;
                q[k] -= ui * c;
            }
            p = q;
            denom *= nodes[m] - ui;
        }
        for (k, c) in p.iter().enumerate() {
            row[k] = c / denom;
        }
    }
    out
}

/// `y' + a y = h` with `y = 0` before the first node, `a > 0`. The kernel is integrated exactly
/// against the local quintic interpolant of `h`, so the step is stable for any `a dx`.
fn causal_solve(h: &[C64], dx: f64, a: f64) -> Vec<C64> {
    let n = h.len();
    let c = a * dx;
    let decay = (-c).exp();
    let mom = exp_moments(c);
    // one weight set per stencil placement relative to the cell
    let weights: Vec<[f64; STENCIL]> = (0..STENCIL)
        .map(|shift| {
            let mut nodes = [0.0; STENCIL];
            for (i, u) in nodes.iter_mut().enumerate() {
                *u = i as f64 - shift as f64;
            }
            let lm = lagrange_monomials(&nodes);
            let mut w = [0.0; STENCIL];
            for m in 0..STENCIL {
                w[m] = dx * (0..STENCIL).map(|k| lm[m][k] * mom[k]).sum::<f64>();
            }
            w
        })
        .collect();
    let mut y = vec![C64::new(0.0, 0.0); n];
    for j in 0..n - 1 {
        let start = j.saturating_sub(2).min(n - STENCIL);
        let w = &weights[j - start];
        let inc: C64 = (0..STENCIL).map(|m| h[start + m] * w[m]).sum();
        y[j + 1] = y[j] * decay + inc;
    }
    y
}

/// `S_a h = F^{-1}[F h / (i xi + a)]` on a uniform grid of spacing `dx`, assuming `h` vanishes
/// outside the grid. Evaluated as the convolution with `e^{-ax} H(x)` (`a > 0`) or
/// `-e^{-ax} H(-x)` (`a < 0`).
pub fn s_a_apply(h: &[C64], dx: f64, a: f64) -> Result<Vec<C64>> {
    if a == 0.0 {
        return Err(Error::ZeroSymbol);
    }
    if h.len() < STENCIL || !(dx > 0.0) {
        return Err(Error::InvalidInput("S_a needs at least 6 samples and a positive spacing".into()));
    }
    if a > 0.0 {
        return Ok(causal_solve(h, dx, a));
    }
    let rev: Vec<C64> = h.iter().rev().copied().collect();
    Ok(causal_solve(&rev, dx, -a).into_iter().rev().map(|v| -v).collect())
}

/// `-S_{lambda + s} S_{lambda - s} h`, the inverse of `-(d_0 + lambda)^2 + s^2` on one mode.
fn mode_inverse(h: &[C64], dx: f64, lambda: f64, s: f64) -> Result<Vec<C64>> {
    let (a, b) = (lambda - s, lambda + s);
    if a * b > 0.0 {
        let inner = s_a_apply(h, dx, a)?;
        return Ok(s_a_apply(&inner, dx, b)?.into_iter().map(|v| -v).collect());
    }
    // opposite signs: compose via partial fractions so each factor only sees data inside the grid
    let ya = s_a_apply(h, dx, a)?;
    let yb = s_a_apply(h, dx, b)?;
    Ok(ya.iter().zip(&yb).map(|(p, q)| -(p - q) / (b - a)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CylinderConfig {
    /// Solves with `|lambda| <= lambda0` are refused.
    pub lambda0: f64,
    pub resonance_margin: f64,
    /// Fraction of the energy of `F` allowed in discarded modes.
    pub truncation_energy: f64,
    pub neumann_tol: f64,
    pub neumann_max_iter: usize,
}

impl Default for CylinderConfig {
    fn default() -> Self {
        CylinderConfig {
            lambda0: 1.0,
            resonance_margin: 1e-6,
            truncation_energy: 1e-10,
            neumann_tol: 1e-12,
            neumann_max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub lambda: f64,
    pub residual_l2: f64,
    pub norm_ratio: f64,
    pub modes: usize,
    #[serde(skip)]
    pub discarded_energy: f64,
    #[serde(skip)]
    pub neumann_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct CylinderSolution {
    pub r: CylinderFunction,
    pub report: SolveReport,
}

/// Modes kept after discarding the weakest modes whose total energy stays below `tol` times
/// the total (roundoff-level modes never enter the resonance check). Returns
/// `(kept indices in nondecreasing mu, discarded energy fraction)`.
fn truncate(basis: &EigenBasis, modes: &[C64], nx: usize, tol: f64) -> (Vec<usize>, f64) {
    let m = basis.len();
    let energy: Vec<f64> = (0..m).map(|l| (0..nx).map(|i| modes[i * m + l].norm_sqr()).sum()).collect();
    let total: f64 = energy.iter().sum();
    if total == 0.0 {
        return (Vec::new(), 0.0);
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| energy[a].total_cmp(&energy[b]));
    let mut dropped = 0.0;
    let mut cut = 0;
    while cut < m && dropped + energy[order[cut]] <= tol * total {
        dropped += energy[order[cut]];
        cut += 1;
    }
    let mut kept = order[cut..].to_vec();
    kept.sort_by(|&a, &b| basis.mu(a).total_cmp(&basis.mu(b)).then(a.cmp(&b)));
    (kept, dropped / total)
}

/// Free (`V_1 = 0`) solve in mode space on the retained modes.
fn free_solve(f: &CylinderFunction, lambda: f64, cfg: &CylinderConfig) -> Result<(CylinderFunction, usize, f64)> {
    let m = f.basis.len();
    let nx = f.x0.len();
    let modes = f.modes();
    let (kept, discarded) = truncate(&f.basis, &modes, nx, cfg.truncation_energy);
    let l2 = lambda * lambda;
    if let Some((mu, gap)) =
        kept.iter().map(|&l| (f.basis.mu(l), (l2 - f.basis.mu(l)).abs())).min_by(|a, b| a.1.total_cmp(&b.1))
    {
        if gap < cfg.resonance_margin {
            return Err(Error::ResonantLambda { mu, gap });
        }
    }
    let dx = f.dx0();
    let mut out = vec![C64::new(0.0, 0.0); modes.len()];
    let mut line = vec![C64::new(0.0, 0.0); nx];
    for &l in &kept {
        for (i, v) in line.iter_mut().enumerate() {
            *v = modes[i * m + l];
        }
        let r = mode_inverse(&line, dx, lambda, f.basis.mu(l).sqrt())?;
        for (i, v) in r.into_iter().enumerate() {
            out[i * m + l] = v;
        }
    }
    Ok((CylinderFunction::from_modes(f.x0.clone(), f.basis.clone(), &out), kept.len(), discarded))
}

/// Discrete `L_lambda u = -(d_0 + lambda)^2 u - Delta' u + V_1 u`: 9-point differences in `x0`,
/// spectral `Delta'`.
pub fn apply_conjugated(u: &CylinderFunction, lambda: f64, v1: &Field) -> CylinderFunction {
    let m = u.basis.len();
    let nx = u.x0.len();
    let dx = u.dx0();
    let modes = u.modes();
    let mut out = vec![C64::new(0.0, 0.0); modes.len()];
    let mut line = vec![C64::new(0.0, 0.0); nx];
    for l in 0..m {
        for (i, v) in line.iter_mut().enumerate() {
            *v = modes[i * m + l];
        }
        let d1 = uniform_derivative(&line, dx, 1, 9);
        let d2 = uniform_derivative(&line, dx, 2, 9);
        let mu = u.basis.mu(l);
        for i in 0..nx {
            out[i * m + l] = -(d2[i] + d1[i] * (2.0 * lambda) + line[i] * (lambda * lambda)) + line[i] * mu;
        }
    }
    let mut r = CylinderFunction::from_modes(u.x0.clone(), u.basis.clone(), &out);
    if !v1.is_zero() {
        let pot = u.multiply(v1);
        r.values.iter_mut().zip(&pot.values).for_each(|(a, b)| *a += b);
    }
    r
}

/// `||L_lambda u - f|| / ||f||` over the rows at least 4 points away from the `x0` ends,
/// where the 9-point stencil is centered.
pub fn relative_residual(u: &CylinderFunction, f: &CylinderFunction, lambda: f64, v1: &Field) -> f64 {
    let lu = apply_conjugated(u, lambda, v1);
    let m = u.basis.len();
    let nx = u.x0.len();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 4..nx - 4 {
        for j in 0..m {
            let k = i * m + j;
            num += (lu.values[k] - f.values[k]).norm_sqr();
            den += f.values[k].norm_sqr();
        }
    }
    if den == 0.0 {
        return num.sqrt();
    }
    (num / den).sqrt()
}

/// Solve `L_lambda R = F` mode by mode with `R_l = -S_{lambda + sqrt(mu_l)} S_{lambda - sqrt(mu_l)} F_l`,
/// then correct for `V_1` with the fixed-point loop `R_{j+1} = R_0 - Solve_0(V_1 R_j)`.
pub fn conjugated_solve(
    f: &CylinderFunction,
    lambda: f64,
    v1: &Field,
    cfg: &CylinderConfig,
) -> Result<CylinderSolution> {
    if !(lambda.abs() > cfg.lambda0) {
        return Err(Error::InvalidInput(format!("|lambda| = {} must exceed lambda0 = {}", lambda.abs(), cfg.lambda0)));
    }
    let (r0, modes, discarded) = free_solve(f, lambda, cfg)?;
    let mut r = r0.clone();
    let mut iterations = 0;
    if !v1.is_zero() {
        let mut prev_step = f64::INFINITY;
        loop {
            iterations += 1;
            let (corr, _, _) = free_solve(&r.multiply(v1), lambda, cfg)?;
            let next = r0.sub(&corr);
            let step = next.sub(&r).l2_norm();
            let scale = next.l2_norm().max(f64::MIN_POSITIVE);
            r = next;
            if step <= cfg.neumann_tol * scale {
                break;
            }
            let ratio = step / prev_step;
            if (iterations > 2 && ratio >= 1.0) || iterations >= cfg.neumann_max_iter {
                return Err(Error::NeumannDivergence { ratio });
            }
            prev_step = step;
        }
    }
    let fnorm = f.l2_norm();
    let report = SolveReport {
        lambda,
        residual_l2: relative_residual(&r, f, lambda, v1),
        norm_ratio: if fnorm > 0.0 { r.l2_norm() / fnorm } else { 0.0 },
        modes,
        discarded_energy: discarded,
        neumann_iterations: iterations,
    };
    Ok(CylinderSolution { r, report })
}
