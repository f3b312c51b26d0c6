//! Multiple-fold linearization: divided differences in `eps` and the direct hierarchy,
//! the Green pairing and nonvanishing solutions `W_p`.

use super::{solve_semilinear, DirichletSolver, DiscreteDomain, SemilinearConfig, SeriesGrid};
use crate::error::{Error, Result};
use crate::C64;
use serde::{Deserialize, Serialize};

/// `(offset, weight)` pairs of the central stencil for the `order`-th derivative, in units of `h`.
fn stencil(order: usize) -> Result<&'static [(f64, f64)]> {
    Ok(match order {
        1 => &[(-1.0, -0.5), (1.0, 0.5)],
        2 => &[(-1.0, 1.0), (0.0, -2.0), (1.0, 1.0)],
        3 => &[(-2.0, -0.5), (-1.0, 1.0), (1.0, -1.0), (2.0, 0.5)],
        _ => return Err(Error::InvalidInput(format!("divided differences support orders 1..=3, got {order}"))),
    })
}

fn tensor_difference<F>(beta: &[usize], step: f64, eval: &mut F) -> Result<Vec<C64>>
where
    F: FnMut(&[f64]) -> Result<Vec<C64>>,
{
    let active: Vec<(usize, &'static [(f64, f64)])> =
        beta.iter().enumerate().filter(|(_, &b)| b > 0).map(|(k, &b)| stencil(b).map(|s| (k, s))).collect::<Result<_>>()?;
    let total: usize = beta.iter().sum();
    let mut acc: Option<Vec<C64>> = None;
    let mut pos = vec![0usize; active.len()];
    loop {
        let mut eps = vec![0.0; beta.len()];
        let mut w = 1.0;
        for (j, (k, st)) in active.iter().enumerate() {
            eps[*k] = st[pos[j]].0 * step;
            w *= st[pos[j]].1;
        }
        let vals = eval(&eps)?;
        match acc.as_mut() {
            None => acc = Some(vals.iter().map(|v| v * w).collect()),
            Some(a) => a.iter_mut().zip(&vals).for_each(|(x, v)| *x += v * w),
        }
        let mut j = 0;
        loop {
            if j == active.len() {
                let scale = step.powi(total as i32);
                return Ok(acc.unwrap_or_default().into_iter().map(|z| z / scale).collect());
            }
            pos[j] += 1;
            if pos[j] < active[j].1.len() {
                break;
            }
            pos[j] = 0;
            j += 1;
        }
    }
}

/// Mixed central divided difference `d^beta_eps G(eps)|_0` of a vector-valued map, with an
/// optional Richardson step `(4 D(h/2) - D(h)) / 3`.
pub fn divided_difference<F>(beta: &[usize], step: f64, richardson: bool, mut eval: F) -> Result<Vec<C64>>
where
    F: FnMut(&[f64]) -> Result<Vec<C64>>,
{
    if beta.iter().sum::<usize>() == 0 || beta.iter().sum::<usize>() > 3 {
        return Err(Error::InvalidInput("need 1 <= |beta| <= 3".into()));
    }
    let coarse = tensor_difference(beta, step, &mut eval)?;
    if !richardson {
        return Ok(coarse);
    }
    let fine = tensor_difference(beta, 0.5 * step, &mut eval)?;
    Ok(fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect())
}

fn combine(family: &[Vec<C64>], eps: &[f64]) -> Vec<C64> {
    let mut f = vec![C64::new(0.0, 0.0); family[0].len()];
    for (fk, &e) in family.iter().zip(eps) {
        if e != 0.0 {
            f.iter_mut().zip(fk).for_each(|(a, b)| *a += b * e);
        }
    }
    f
}

/// `d^beta_eps u_eps|_0` for `f_eps = sum eps_k f_k` (boundary data), on every node.
pub fn linearize_divided_difference(
    solver: &DirichletSolver,
    series: &SeriesGrid,
    family: &[Vec<C64>],
    beta: &[usize],
    step: f64,
    richardson: bool,
    cfg: &SemilinearConfig,
) -> Result<Vec<C64>> {
    if family.len() != beta.len() || family.is_empty() {
        return Err(Error::InvalidInput("beta must have one entry per datum".into()));
    }
    divided_difference(beta, step, richardson, |eps| Ok(solve_semilinear(solver, series, &combine(family, eps), cfg)?.u))
}

/// Complex-step first derivative `(u(i h f) - u(-i h f)) / (2 i h)`.
pub fn linearize_complex_step(solver: &DirichletSolver, series: &SeriesGrid, f: &[C64], step: f64, cfg: &SemilinearConfig) -> Result<Vec<C64>> {
    let ih = C64::new(0.0, step);
    let plus: Vec<C64> = f.iter().map(|z| z * ih).collect();
    let minus: Vec<C64> = f.iter().map(|z| -z * ih).collect();
    let up = solve_semilinear(solver, series, &plus, cfg)?.u;
    let um = solve_semilinear(solver, series, &minus, cfg)?.u;
    Ok(up.iter().zip(&um).map(|(a, b)| (a - b) / (2.0 * ih)).collect())
}

/// Solutions of the linearized cascade for `f_1 ... f_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    pub m: usize,
    /// `derivs[mask]` is `d^{beta(mask)}_eps u|_0` for the 0/1 multi-index of `mask` (`derivs[0]` is zero).
    pub derivs: Vec<Vec<C64>>,
    /// `L = -d_1 ... d_m u|_0`.
    pub l: Vec<C64>,
    /// `H` in `P L = V_m prod G^D f_k + H`.
    pub h: Vec<C64>,
    /// `V_m prod G^D f_k`.
    pub leading: Vec<C64>,
}

impl Hierarchy {
    /// Full right-hand side `V_m prod G^D f_k + H`.
    pub fn source(&self) -> Vec<C64> {
        self.leading.iter().zip(&self.h).map(|(a, b)| a + b).collect()
    }
}

/// Set partitions of `mask` as lists of block masks.
fn partitions(mask: usize) -> Vec<Vec<usize>> {
    if mask == 0 {
        return vec![vec![]];
    }
    let low = mask & mask.wrapping_neg();
    let rest = mask ^ low;
    let mut out = Vec::new();
    // every subset of rest joins the block of the lowest element
    let mut sub = rest;
    loop {
        let block = low | sub;
        for mut p in partitions(mask ^ block) {
            p.push(block);
            out.push(p);
        }
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & rest;
    }
    out
}

/// Runs the cascade `P u_S = -sum_{pi, |pi| >= 2} V_{|pi|} prod_B u_B` from the linear solutions.
pub fn hierarchy_from_linear(solver: &DirichletSolver, series: &SeriesGrid, linear: &[Vec<C64>]) -> Result<Hierarchy> {
    let m = linear.len();
    if !(2..=4).contains(&m) {
        return Err(Error::InvalidInput(format!("hierarchy order must be 2, 3 or 4, got {m}")));
    }
    let len = linear[0].len();
    let zero = C64::new(0.0, 0.0);
    let full = (1usize << m) - 1;
    let mut derivs = vec![vec![zero; len]; full + 1];
    for (k, u) in linear.iter().enumerate() {
        derivs[1 << k] = u.clone();
    }
    let mut masks: Vec<usize> = (1..=full).filter(|s| s.count_ones() >= 2).collect();
    masks.sort_by_key(|s| s.count_ones());
    let (mut leading, mut h) = (vec![zero; len], vec![zero; len]);
    for &mask in &masks {
        let mut src = vec![zero; len];
        for p in partitions(mask) {
            let k = p.len();
            if k < 2 {
                continue;
            }
            let Some(vk) = series.coeff(k) else { continue };
            let target = if mask == full && k == m { &mut leading } else if mask == full { &mut h } else { &mut src };
            for i in 0..len {
                let mut prod = vk[i];
                for &b in &p {
                    prod *= derivs[b][i];
                }
                target[i] += prod;
            }
        }
        if mask == full {
            src = leading.iter().zip(&h).map(|(a, b)| a + b).collect();
        }
        derivs[mask] = solver.green_source(&src)?.into_iter().map(|z| -z).collect();
    }
    let l = derivs[full].iter().map(|z| -z).collect();
    Ok(Hierarchy { m, derivs, l, h, leading })
}

/// Direct linearized hierarchy for boundary data `f_1 ... f_m`.
pub fn direct_hierarchy_solve(solver: &DirichletSolver, series: &SeriesGrid, family: &[Vec<C64>]) -> Result<Hierarchy> {
    let linear = family.iter().map(|f| solver.green_dirichlet(f)).collect::<Result<Vec<_>>>()?;
    hierarchy_from_linear(solver, series, &linear)
}

/// Both sides of the Green identity for `P w = 0`:
/// `-int_dM w d_nu L + int_dM d_nu w L` and `int_M w rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairingReport {
    pub boundary: C64,
    pub volume: C64,
    pub discrepancy: f64,
}

pub fn greens_pairing(domain: &DiscreteDomain, w: &[C64], l: &[C64], rhs: &[C64]) -> PairingReport {
    let dw = domain.normal_derivative(w);
    let dl = domain.normal_derivative(l);
    let faces = domain.face_points();
    let vals: Vec<C64> = faces.iter().zip(dw.iter().zip(&dl)).map(|(fp, (a, b))| -w[fp.node] * b + a * l[fp.node]).collect();
    let boundary = domain.boundary_integrate(&vals);
    let prod: Vec<C64> = w.iter().zip(rhs).map(|(a, b)| a * b).collect();
    let volume = domain.integrate(&prod);
    PairingReport { boundary, volume, discrepancy: (boundary - volume).norm() }
}

/// A solution of `P W = 0` with `|W(p)|` maximal over a small dictionary of boundary data.
#[derive(Debug, Clone, PartialEq)]
pub struct NonvanishingSolution {
    pub w: Vec<C64>,
    pub trace: Vec<C64>,
    pub label: String,
    pub value: C64,
}

pub fn nonvanishing_solution(solver: &DirichletSolver, p: &[f64], threshold: f64) -> Result<NonvanishingSolution> {
    let domain = solver.domain();
    if p.len() != domain.dim() {
        return Err(Error::InvalidInput("point dimension does not match the domain".into()));
    }
    let mut dictionary: Vec<(String, Box<dyn Fn(&[f64]) -> C64>)> = vec![("constant".into(), Box::new(|_: &[f64]| C64::new(1.0, 0.0)))];
    for a in 0..domain.dim() {
        let (lo, hi) = (domain.lo[a], domain.hi[a]);
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        dictionary.push((format!("linear_{a}"), Box::new(move |x: &[f64]| C64::new((x[a] - mid) / half, 0.0))));
        dictionary.push((format!("cos_{a}"), Box::new(move |x: &[f64]| C64::new((std::f64::consts::PI * (x[a] - lo) / (hi - lo)).cos(), 0.0))));
    }
    let mut best: Option<NonvanishingSolution> = None;
    for (label, f) in dictionary {
        let trace = domain.trace_of(&f);
        let w = solver.green_dirichlet(&trace)?;
        let value = domain.interpolate(&w, p);
        if best.as_ref().map_or(true, |b| value.norm() > b.value.norm()) {
            best = Some(NonvanishingSolution { w, trace, label, value });
        }
    }
    match best {
        Some(b) if b.value.norm() >= threshold.max(1e-8) => Ok(b),
        _ => Err(Error::SearchFailed),
    }
}
