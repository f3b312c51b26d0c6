//! Synthetic moments: the volume side of the Green identity evaluated with quasimodes.

use super::{Beam, MomentKind, ReconTask};
use crate::cgo::{chi, Sign};
use crate::error::{Error, Result};
use crate::potential::Field;
use crate::quad::gauss_legendre_on;
use crate::C64;

/// `t` breakpoints: uniform panels over `[lo, hi]` plus a geometric grading `anchor +- scale 2^k`.
fn t_breaks(lo: f64, hi: f64, panel: f64, anchor: f64, scale: f64) -> Vec<f64> {
    let np = ((hi - lo) / panel).ceil().max(1.0) as usize;
    let mut b: Vec<f64> = (0..=np).map(|i| lo + (hi - lo) * i as f64 / np as f64).collect();
    let mut r = scale;
    while r < panel {
        b.push(anchor - r);
        b.push(anchor + r);
        r *= 2.0;
    }
    b.push(anchor);
    b.retain(|&t| t >= lo && t <= hi);
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.dedup_by(|x, y| (*x - *y).abs() < 1e-13);
    b
}

/// `t` range of the box `Omega` seen along the beam axis, clipped to the jet range.
fn t_range(task: &ReconTask, beam: &Beam) -> Option<(f64, f64)> {
    let d = task.n - 1;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for corner in 0..(1usize << d) {
        let t: f64 = (0..d)
            .map(|a| {
                let c = if corner >> a & 1 == 1 { task.domain.hi[a + 1] } else { task.domain.lo[a + 1] };
                (c - beam.origin[a]) * beam.direction[a]
            })
            .sum();
        lo = lo.min(t);
        hi = hi.max(t);
    }
    let (jl, jh) = beam.quasimode.phase.t_range();
    let (lo, hi) = (lo.max(jl), hi.min(jh));
    (hi > lo).then_some((lo, hi))
}

fn inside(task: &ReconTask, x: &[f64]) -> bool {
    x.iter().enumerate().all(|(a, &v)| v >= task.domain.lo[a + 1] && v <= task.domain.hi[a + 1])
}

/// Tensor Gauss-Legendre nodes on `[-r, r]^d`.
fn y_nodes(d: usize, n: usize, r: f64) -> Vec<(Vec<f64>, f64)> {
    let (x, w) = gauss_legendre_on(n, -r, r);
    match d {
        1 => x.iter().zip(&w).map(|(a, wa)| (vec![*a], *wa)).collect(),
        _ => x.iter().zip(&w).flat_map(|(a, wa)| x.iter().zip(&w).map(move |(b, wb)| (vec![*a, *b], wa * wb))).collect(),
    }
}

/// `lambda^{d/2} int_{I x Omega} V (quasimode product)` for every kind and every `sigma`:
/// `out[kind][sigma]`. The `sigma` dependence factors as `e^{4 i sigma x0} e^{-4 sigma Re Theta}`
/// times the `sigma = 0` product, so a single pass serves all frequencies.
pub fn synthetic_moments(task: &ReconTask, beam: &Beam, kinds: &[MomentKind], lambda: f64, sigmas: &[f64], v: &Field) -> Result<Vec<Vec<C64>>> {
    let zero = C64::new(0.0, 0.0);
    let mut out = vec![vec![zero; sigmas.len()]; kinds.len()];
    if v.is_zero() {
        return Ok(out);
    }
    let Some((tlo, thi)) = t_range(task, beam) else { return Ok(out) };
    let q = &beam.quasimode;
    let phase = &q.phase;
    let d = task.n - 2;
    let qc = &task.quadrature;
    let (x0, w0) = gauss_legendre_on(qc.x0_nodes, task.domain.lo[0], task.domain.hi[0]);
    // e^{4 i sigma x0_j} w_j
    let table: Vec<Vec<C64>> = sigmas.iter().map(|&s| x0.iter().zip(&w0).map(|(x, w)| C64::new(0.0, 4.0 * s * x).exp() * *w).collect()).collect();
    let breaks = t_breaks(tlo, thi, qc.t_panel, beam.anchor, beam.scale);
    let (gt, gw) = gauss_legendre_on(qc.t_nodes, 0.0, 1.0);
    let l1 = C64::new(lambda, 0.0);
    let delta = q.plus.delta;
    let flat_amp = q.plus.degree == 0;
    let mut vals = vec![zero; x0.len()];
    let mut x = vec![0.0; task.n];
    for pan in breaks.windows(2) {
        let len = pan[1] - pan[0];
        for (gti, gwi) in gt.iter().zip(&gw) {
            let t = pan[0] + len * gti;
            let wt = len * gwi;
            let hm = phase.h_at(t);
            let im = hm.map(|z| z.im);
            let mu = ((&im + im.transpose()) * 0.5).symmetric_eigenvalues().min();
            if !(mu > 0.0) {
                return Err(Error::InvalidInput(format!("Im H not positive at t = {t}")));
            }
            let r = (qc.width_factor / (4.0 * lambda * mu).sqrt()).min(delta);
            let theta = phase.at(t).0;
            let a0 = flat_amp.then(|| (q.plus.series(phase, l1, 0.0, t, &vec![0.0; d]), q.minus.series(phase, l1, 0.0, t, &vec![0.0; d])));
            for (y, wy) in y_nodes(d, qc.y_nodes, r) {
                let xp = beam.point(t, &y);
                if !inside(task, &xp) {
                    continue;
                }
                let c = chi(y.iter().map(|v| v * v).sum::<f64>().sqrt() / delta);
                if c == 0.0 {
                    continue;
                }
                let th = theta.eval(&y);
                let (ap, am) = a0.unwrap_or_else(|| (q.plus.series(phase, l1, 0.0, t, &y), q.minus.series(phase, l1, 0.0, t, &y)));
                // every product carries the same Gaussian e^{2 i lambda (Theta - conj Theta)}
                let g = (-4.0 * lambda * th.im).exp();
                let prods: Vec<C64> = kinds
                    .iter()
                    .map(|k| match k {
                        MomentKind::Quartic => (ap * am).powi(2) * (g * c.powi(4)),
                        // amplitudes carry no rho dependence without corrections
                        MomentKind::PlusPair => ap * ap * am * (g * c.powi(3)),
                        MomentKind::MinusPair => am * am * ap * (g * c.powi(3)),
                    })
                    .collect();
                if prods.iter().all(|p| p.norm() == 0.0) {
                    continue;
                }
                x[1..].copy_from_slice(&xp);
                for (j, &s) in x0.iter().enumerate() {
                    x[0] = s;
                    vals[j] = v.eval(&x);
                }
                let w = wt * wy;
                for (si, &sg) in sigmas.iter().enumerate() {
                    let vs: C64 = table[si].iter().zip(&vals).map(|(e, v)| e * v).sum();
                    let f = vs * ((-4.0 * sg * th.re).exp() * w);
                    for (k, p) in prods.iter().enumerate() {
                        out[k][si] += p * f;
                    }
                }
            }
        }
    }
    let scale = lambda.powf(0.5 * d as f64);
    out.iter_mut().flatten().for_each(|z| *z *= scale);
    Ok(out)
}

/// The same moment by the trapezoid rule on the task grid, with the quasimodes at the full `rho`.
pub fn grid_moment(task: &ReconTask, beam: &Beam, kind: MomentKind, rho: C64, v: &Field) -> C64 {
    let q = &beam.quasimode;
    let two = rho * 2.0;
    let f = task.domain.sample(|x| {
        let vx = v.eval(x);
        if vx == C64::new(0.0, 0.0) {
            return vx;
        }
        let p = match kind {
            MomentKind::Quartic => (q.eval(Sign::Plus, rho, x) * q.eval(Sign::Minus, rho, x)).powi(2),
            MomentKind::PlusPair => q.eval(Sign::Plus, rho, x).powi(2) * q.eval(Sign::Minus, two, x),
            MomentKind::MinusPair => q.eval(Sign::Minus, rho, x).powi(2) * q.eval(Sign::Plus, two, x),
        };
        vx * p
    });
    task.domain.integrate(&f) * rho.re.powf(0.5 * (task.n - 2) as f64)
}
