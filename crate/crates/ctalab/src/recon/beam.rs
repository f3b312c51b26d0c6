//! Quasimode beams along the target geodesics.

use super::ReconTask;
use crate::cgo::{build_amplitude, build_phase, AmplitudeConfig, Quasimode};
use crate::error::{Error, Result};
use crate::jacobi::ComplexJacobiField;
use crate::manifold::GeodesicPath;

/// A Gaussian beam `e^{i rho Theta} a` along a straight geodesic of the flat transversal disk.
#[derive(Debug, Clone)]
pub struct Beam {
    pub quasimode: Quasimode,
    /// `gamma(0)` and `gamma'(0)` in `Omega`.
    pub origin: Vec<f64>,
    pub direction: Vec<f64>,
    /// Orthonormal normal frame `e_alpha`.
    pub frame: Vec<Vec<f64>>,
    /// Anchor `tau0` of the Jacobi field and the length scale `|Y0| / |Y1|` there.
    pub anchor: f64,
    pub scale: f64,
}

impl Beam {
    pub fn new(task: &ReconTask, path: &GeodesicPath, y: &ComplexJacobiField) -> Result<Self> {
        if !path.geometry.is_flat() {
            return Err(Error::InvalidInput("the reconstruction driver supports the flat disk only".into()));
        }
        let phase = build_phase(path, y, task.beam.phase_order)?;
        let cfg = AmplitudeConfig {
            n_amp: 0,
            degree: Some(task.beam.amp_degree),
            delta: task.beam.delta,
            x0_interval: [task.domain.lo[0], task.domain.hi[0]],
            ..Default::default()
        };
        let v1 = task.known_series()?.coeff(1);
        let (plus, minus) = build_amplitude(&phase, &v1, &cfg)?;
        let i = path.index_of_zero();
        let scale = y.y0.norm() / y.y1.norm();
        Ok(Beam {
            quasimode: Quasimode::new(phase, plus, minus),
            origin: path.pos[i].clone(),
            direction: path.vel[i].clone(),
            frame: path.frame[i].clone(),
            anchor: y.tau0,
            scale,
        })
    }

    /// `gamma(t) + sum y_alpha e_alpha`.
    pub fn point(&self, t: f64, y: &[f64]) -> Vec<f64> {
        let mut p: Vec<f64> = self.origin.iter().zip(&self.direction).map(|(o, v)| o + t * v).collect();
        for (ya, e) in y.iter().zip(&self.frame) {
            p.iter_mut().zip(e).for_each(|(pk, ek)| *pk += ya * ek);
        }
        p
    }

    pub fn c_cons(&self) -> f64 {
        self.quasimode.phase.c_cons
    }

    /// `(pi / 2)^{d/2} c^{-1/2}`: the stationary-phase limit of `lambda^{d/2} int e^{-4 lambda Im Theta} |a|^4 dy''`
    /// is this constant times `|det Y|^{-1}`.
    pub fn calibration(&self) -> f64 {
        let d = self.frame.len() as f64;
        (0.5 * std::f64::consts::PI).powf(0.5 * d) / self.c_cons().abs().sqrt()
    }
}
