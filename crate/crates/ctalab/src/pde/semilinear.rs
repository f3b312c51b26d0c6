//! Picard iteration for `-Delta u + V(x, u) = 0`, `u = f` on the boundary, and the DN map.

use super::{sup_norm, DirichletSolver, DiscreteDomain, FacePoint};
use crate::error::{Error, Result};
use crate::potential::PotentialSeries;
use crate::C64;
use serde::{Deserialize, Serialize};

/// Coefficients `V_1 ... V_K` sampled on the grid.
#[derive(Debug, Clone)]
pub struct SeriesGrid {
    /// `values[k - 1][node] = V_k(x_node)`.
    pub values: Vec<Vec<C64>>,
}

impl SeriesGrid {
    pub fn new(domain: &DiscreteDomain, series: &PotentialSeries) -> Self {
        let values = (1..=series.order())
            .map(|k| {
                let f = series.coeff(k);
                if f.is_zero() {
                    vec![C64::new(0.0, 0.0); domain.len()]
                } else {
                    domain.sample(|x| f.eval(x))
                }
            })
            .collect();
        SeriesGrid { values }
    }

    pub fn order(&self) -> usize {
        self.values.len()
    }

    /// `V_k` on the grid, `None` when not stored or identically zero.
    pub fn coeff(&self, k: usize) -> Option<&[C64]> {
        self.values.get(k - 1).filter(|v| v.iter().any(|z| *z != C64::new(0.0, 0.0))).map(|v| v.as_slice())
    }

    /// `V~(x, u) = V(x, u) - V_1(x) u` on every node.
    pub fn tilde(&self, u: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); u.len()];
        let mut fact = 1.0;
        for k in 2..=self.order() {
            fact *= k as f64;
            if let Some(v) = self.coeff(k) {
                for i in 0..u.len() {
                    out[i] += v[i] * u[i].powu(k as u32) / fact;
                }
            }
        }
        out
    }

    pub fn is_linear(&self) -> bool {
        (2..=self.order()).all(|k| self.coeff(k).is_none())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SemilinearConfig {
    /// Small-data radius for `||f||_inf`.
    pub r0: f64,
    /// Stop when successive Picard iterates differ by less than `tol * ||u||_inf`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SemilinearConfig {
    fn default() -> Self {
        SemilinearConfig { r0: 0.5, tol: 1e-12, max_iter: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemilinearSolution {
    pub u: Vec<C64>,
    pub iterations: usize,
    /// Ratios of successive Picard increments.
    pub ratios: Vec<f64>,
    /// `||P_h u + V~(x, u)||_inf` on interior nodes.
    pub residual: f64,
    /// Empirical continuity constant `||u||_inf / ||f||_inf`.
    pub continuity: f64,
}

impl SemilinearSolution {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }
}

/// Fixed point of `T_f(w) = -G^S V~(x, G^D f + w)`, returned as `u = G^D f + w`.
pub fn solve_semilinear(solver: &DirichletSolver, series: &SeriesGrid, f: &[C64], cfg: &SemilinearConfig) -> Result<SemilinearSolution> {
    let fnorm = sup_norm(f);
    if fnorm > cfg.r0 {
        return Err(Error::SmallDataViolated { norm: fnorm, r0: cfg.r0 });
    }
    let lin = solver.green_dirichlet(f)?;
    let zero = C64::new(0.0, 0.0);
    let mut w = vec![zero; lin.len()];
    let mut ratios = Vec::new();
    let mut prev_step = f64::INFINITY;
    let mut growth = 0;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let u: Vec<C64> = lin.iter().zip(&w).map(|(a, b)| a + b).collect();
        let src = series.tilde(&u);
        let next: Vec<C64> = solver.green_source(&src)?.into_iter().map(|z| -z).collect();
        let step = next.iter().zip(&w).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        w = next;
        let scale = sup_norm(&lin).max(sup_norm(&w)).max(f64::MIN_POSITIVE);
        if !step.is_finite() {
            return Err(Error::ContractionFailure { iterations });
        }
        // ratios at the roundoff floor carry no information
        if prev_step.is_finite() && prev_step > 0.0 && step > 1e3 * f64::EPSILON * scale {
            let r = step / prev_step;
            ratios.push(r);
            growth = if r >= 1.0 && step > 1e-3 * scale { growth + 1 } else { 0 };
            if growth >= 3 {
                return Err(Error::ContractionFailure { iterations });
            }
        }
        // stop at the tolerance or at the roundoff floor
        if step <= cfg.tol * scale || (step <= 64.0 * f64::EPSILON * scale && step >= prev_step) {
            break;
        }
        if iterations >= cfg.max_iter {
            return Err(Error::ContractionFailure { iterations });
        }
        prev_step = step;
    }
    let u: Vec<C64> = lin.iter().zip(&w).map(|(a, b)| a + b).collect();
    let mut res = solver.apply(&u);
    let vt = series.tilde(&u);
    let domain = solver.domain();
    let mut residual = 0.0f64;
    for i in domain.interior_nodes() {
        res[i] += vt[i];
        residual = residual.max(res[i].norm());
    }
    let continuity = if fnorm > 0.0 { sup_norm(&u) / fnorm } else { 0.0 };
    Ok(SemilinearSolution { u, iterations, ratios, residual, continuity })
}

/// DN map record: boundary datum, solution and outward normal derivative per face point.
#[derive(Debug, Clone, PartialEq)]
pub struct DnRecord {
    pub f: Vec<C64>,
    pub faces: Vec<FacePoint>,
    /// `Lambda_V f` at each face point.
    pub dn: Vec<C64>,
    pub u: Vec<C64>,
    pub iterations: usize,
    pub residual: f64,
}

impl DnRecord {
    /// CSV with columns `node, f_re, f_im, dn_re, dn_im`, one row per face point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,f_re,f_im,dn_re,dn_im\n");
        for (fp, d) in self.faces.iter().zip(&self.dn) {
            let v = self.u[fp.node];
            out.push_str(&format!("{},{:e},{:e},{:e},{:e}\n", fp.node, v.re, v.im, d.re, d.im));
        }
        out
    }
}

pub fn dn_map(solver: &DirichletSolver, series: &SeriesGrid, f: &[C64], cfg: &SemilinearConfig) -> Result<DnRecord> {
    let sol = solve_semilinear(solver, series, f, cfg)?;
    let domain = solver.domain();
    Ok(DnRecord {
        f: f.to_vec(),
        faces: domain.face_points(),
        dn: domain.normal_derivative(&sol.u),
        u: sol.u,
        iterations: sol.iterations,
        residual: sol.residual,
    })
}

/// Half the largest amplitude `a = 2^k * a_start` for which Picard contracts on `a * shape`.
pub fn measure_r0(solver: &DirichletSolver, series: &SeriesGrid, shape: &[C64], a_start: f64, doublings: usize) -> f64 {
    let unit = sup_norm(shape).max(f64::MIN_POSITIVE);
    let cfg = SemilinearConfig { r0: f64::INFINITY, tol: 1e-10, max_iter: 300 };
    let mut best = 0.0;
    let mut a = a_start;
    for _ in 0..doublings {
        let f: Vec<C64> = shape.iter().map(|z| z * (a / unit)).collect();
        match solve_semilinear(solver, series, &f, &cfg) {
            Ok(s) if s.max_ratio() < 1.0 => best = a,
            _ => break,
        }
        a *= 2.0;
    }
    0.5 * best
}
