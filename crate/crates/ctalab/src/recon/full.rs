//! Moments from boundary pairings of divided differences of the discrete DN map.

use super::{Beam, MomentKind, MomentValue, ReconTask};
use crate::cgo::Sign;
use crate::error::Result;
use crate::pde::{divided_difference, dn_map, hierarchy_from_linear, sup_norm, DirichletSolver, SeriesGrid};
use crate::C64;

/// Solvers and sampled coefficients shared by all moments of a task.
pub struct FullDnContext {
    /// Generates the data (`V_1` of the truth).
    pub data_solver: DirichletSolver,
    pub truth: SeriesGrid,
    /// Linear solutions for the known `H` (registered `V_1`).
    pub known_solver: Option<DirichletSolver>,
    pub known: SeriesGrid,
}

impl FullDnContext {
    pub fn new(task: &ReconTask) -> Result<Self> {
        let truth = task.truth_series()?;
        let known = task.known_series()?;
        let data_solver = DirichletSolver::new(&task.domain, &truth.coeff(1))?;
        let same_v1 = task.known.as_ref().map_or(true, |k| k.first() == task.truth.first());
        let known_solver = if same_v1 { None } else { Some(DirichletSolver::new(&task.domain, &known.coeff(1))?) };
        Ok(FullDnContext {
            data_solver,
            truth: SeriesGrid::new(&task.domain, &truth),
            known_solver,
            known: SeriesGrid::new(&task.domain, &known),
        })
    }

    fn known_solver(&self) -> &DirichletSolver {
        self.known_solver.as_ref().unwrap_or(&self.data_solver)
    }
}

/// Trace of the full CGO profile `e^{+-lambda x0} (quasimode)` on the boundary nodes.
fn cgo_trace(task: &ReconTask, beam: &Beam, sign: Sign, rho: C64) -> Vec<C64> {
    task.domain.trace_of(|x| beam.quasimode.eval(sign, rho, x) * (sign.value() * rho.re * x[0]).exp())
}

/// One moment through `-int_dM w d_nu L = int w (V_m prod u_k + H)` with `L = -d^beta u`:
/// `Quartic` uses `beta = (2, 1)` on `(f^+_rho, f^-_rho)` and `w = u^-_rho`, the pairs use
/// `beta = 2` on `f^{+-}_rho` and `w = u^{-+}_{2 rho}`. The known `H` pairing is subtracted.
pub fn full_moment(task: &ReconTask, ctx: &FullDnContext, beam: &Beam, kind: MomentKind, rho: C64) -> Result<MomentValue> {
    let freq = if kind == MomentKind::Quartic { 1.0 } else { 2.0 };
    let budget = task.lambda_budget();
    if freq * rho.re > budget {
        return Err(crate::Error::ModeMismatch { lambda: freq * rho.re, budget });
    }
    let domain = &task.domain;
    let (family, weights, beta, w_sign, w_rho) = match kind {
        MomentKind::Quartic => {
            let fp = cgo_trace(task, beam, Sign::Plus, rho);
            let fm = cgo_trace(task, beam, Sign::Minus, rho);
            (vec![fp, fm], vec![2, 1], vec![2usize, 1], Sign::Minus, rho)
        }
        MomentKind::PlusPair => (vec![cgo_trace(task, beam, Sign::Plus, rho)], vec![2], vec![2], Sign::Minus, rho * 2.0),
        MomentKind::MinusPair => (vec![cgo_trace(task, beam, Sign::Minus, rho)], vec![2], vec![2], Sign::Plus, rho * 2.0),
    };
    let norms: Vec<f64> = family.iter().map(|f| sup_norm(f).max(f64::MIN_POSITIVE)).collect();
    let unit: Vec<Vec<C64>> = family.iter().zip(&norms).map(|(f, s)| f.iter().map(|z| z / *s).collect()).collect();
    let dd = divided_difference(&beta, task.dn.step, task.dn.richardson, |eps| {
        let mut f = vec![C64::new(0.0, 0.0); unit[0].len()];
        for (u, &e) in unit.iter().zip(eps) {
            f.iter_mut().zip(u).for_each(|(a, b)| *a += b * e);
        }
        Ok(dn_map(&ctx.data_solver, &ctx.truth, &f, &task.dn.semilinear)?.dn)
    })?;
    let gain: f64 = norms.iter().zip(&weights).map(|(s, &k)| s.powi(k)).product();
    let w_fn = |x: &[f64]| beam.quasimode.eval(w_sign, w_rho, x) * (w_sign.value() * w_rho.re * x[0]).exp();
    // -w d_nu L with d_nu L = -gain dd
    let vals: Vec<C64> = domain.face_points().iter().zip(&dd).map(|(fp, d)| w_fn(&domain.point(fp.node)) * d * gain).collect();
    let boundary = domain.boundary_integrate(&vals);
    let known_term = if kind == MomentKind::Quartic && task.m >= 3 {
        let solver = ctx.known_solver();
        let up = solver.green_dirichlet(&family[0])?;
        let um = solver.green_dirichlet(&family[1])?;
        let h = hierarchy_from_linear(solver, &ctx.known, &[up.clone(), up, um.clone()])?.h;
        domain.integrate(&h.iter().zip(&um).map(|(a, b)| a * b).collect::<Vec<_>>())
    } else {
        C64::new(0.0, 0.0)
    };
    let scale = rho.re.powf(0.5 * (task.n - 2) as f64);
    Ok(MomentValue {
        lambda: rho.re,
        sigma: rho.im,
        value: (boundary - known_term) * scale,
        boundary: Some(boundary * scale),
        known_term: Some(known_term * scale),
    })
}
