//! Product-type model manifolds `I x M` with a conformally flat transversal metric
//! `g = e^{2 phi} delta` on a single chart, geodesics, parallel frames, Fermi
//! coordinates and the reduction to `c = 1`.

mod conformal;
mod fermi;
mod geodesic;

pub use conformal::{conformal_reduce, conformal_reduce_on, ConformalFactor};
pub use fermi::FermiChart;
pub use geodesic::{parallel_frame, trace_geodesic, trace_geodesic_with, GeodesicPath, TraceOptions};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Shipped transversal geometries. All are conformally flat, `g = e^{2 phi} delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    /// Euclidean ball of the given radius.
    FlatDisk { radius: f64 },
    /// Unit-curvature cap of polar angle `cap_angle` in stereographic coordinates.
    SphereCap { cap_angle: f64 },
    /// Ball with `phi = amplitude * exp(-|x|^2 / width^2)`.
    ConformalDisk { radius: f64, amplitude: f64, width: f64 },
}

impl Geometry {
    pub fn flat_disk() -> Self {
        Geometry::FlatDisk { radius: 1.0 }
    }

    pub fn sphere_cap() -> Self {
        Geometry::SphereCap { cap_angle: 1.2 }
    }

    pub fn conformal_disk() -> Self {
        Geometry::ConformalDisk { radius: 1.0, amplitude: 0.1, width: 0.6 }
    }

    /// Chart radius of the transversal domain `Omega`.
    pub fn radius(&self) -> f64 {
        match *self {
            Geometry::FlatDisk { radius } | Geometry::ConformalDisk { radius, .. } => radius,
            Geometry::SphereCap { cap_angle } => (0.5 * cap_angle).tan(),
        }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self, Geometry::FlatDisk { .. })
    }

    fn validate(&self) -> Result<()> {
        let bad = |s: &str| Err(Error::InvalidInput(s.to_string()));
        match *self {
            Geometry::FlatDisk { radius } if !(radius > 0.0) => bad("radius must be positive"),
            Geometry::SphereCap { cap_angle } if !(cap_angle > 0.0 && cap_angle < 0.5 * std::f64::consts::PI) => {
                bad("cap_angle must lie in (0, pi/2)")
            }
            Geometry::ConformalDisk { radius, width, .. } if !(radius > 0.0 && width > 0.0) => {
                bad("radius and width must be positive")
            }
            _ => Ok(()),
        }
    }

    /// Conformal exponent `phi`, its gradient and Hessian at `x`.
    pub fn phi_jet(&self, x: &[f64]) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
        let d = x.len();
        let r2: f64 = x.iter().map(|v| v * v).sum();
        match *self {
            Geometry::FlatDisk { .. } => (0.0, vec![0.0; d], vec![vec![0.0; d]; d]),
            Geometry::SphereCap { .. } => {
                // phi = ln 2 - ln(1 + r^2)
                let q = 1.0 + r2;
                let grad = x.iter().map(|v| -2.0 * v / q).collect();
                let hess = (0..d)
                    .map(|i| {
                        (0..d)
                            .map(|j| {
                                let delta = if i == j { 1.0 } else { 0.0 };
                                -2.0 * delta / q + 4.0 * x[i] * x[j] / (q * q)
                            })
                            .collect()
                    })
                    .collect();
                (std::f64::consts::LN_2 - q.ln(), grad, hess)
            }
            Geometry::ConformalDisk { amplitude, width, .. } => {
                let s2 = width * width;
                let p = amplitude * (-r2 / s2).exp();
                let grad = x.iter().map(|v| -2.0 * v / s2 * p).collect();
                let hess = (0..d)
                    .map(|i| {
                        (0..d)
                            .map(|j| {
                                let delta = if i == j { 1.0 } else { 0.0 };
                                p * (4.0 * x[i] * x[j] / (s2 * s2) - 2.0 * delta / s2)
                            })
                            .collect()
                    })
                    .collect();
                (p, grad, hess)
            }
        }
    }

    /// Metric conformal factor `e^{2 phi(x)}`.
    pub fn conformal_weight(&self, x: &[f64]) -> f64 {
        (2.0 * self.phi_jet(x).0).exp()
    }

    /// `|v|_g^2`.
    pub fn norm2(&self, x: &[f64], v: &[f64]) -> f64 {
        self.conformal_weight(x) * dot(v, v)
    }

    /// `g(u, v)`.
    pub fn inner(&self, x: &[f64], u: &[f64], v: &[f64]) -> f64 {
        self.conformal_weight(x) * dot(u, v)
    }

    /// Christoffel symbols `Gamma^k_{ij}` indexed `[k][i][j]`.
    pub fn christoffel(&self, x: &[f64]) -> Vec<Vec<Vec<f64>>> {
        let d = x.len();
        let (_, dphi, _) = self.phi_jet(x);
        let mut gam = vec![vec![vec![0.0; d]; d]; d];
        for (k, gk) in gam.iter_mut().enumerate() {
            for (i, gki) in gk.iter_mut().enumerate() {
                for (j, g) in gki.iter_mut().enumerate() {
                    let mut v = 0.0;
                    if i == k {
                        v += dphi[j];
                    }
                    if j == k {
                        v += dphi[i];
                    }
                    if i == j {
                        v -= dphi[k];
                    }
                    *g = v;
                }
            }
        }
        gam
    }

    /// Geodesic acceleration `-Gamma^k_{ij} v^i v^j`.
    pub fn geodesic_accel(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let (_, dphi, _) = self.phi_jet(x);
        let dv = dot(&dphi, v);
        let vv = dot(v, v);
        (0..x.len()).map(|k| -2.0 * dv * v[k] + vv * dphi[k]).collect()
    }

    /// Covariant correction `-Gamma^k_{ij} v^i e^j` for parallel transport.
    pub fn transport_rate(&self, x: &[f64], v: &[f64], e: &[f64]) -> Vec<f64> {
        let (_, dphi, _) = self.phi_jet(x);
        let pv = dot(&dphi, v);
        let pe = dot(&dphi, e);
        let ve = dot(v, e);
        (0..x.len()).map(|k| -(pv * e[k] + pe * v[k] - ve * dphi[k])).collect()
    }

    /// Riemann tensor `R^l_{ijk}` (`R(d_i, d_j) d_k = R^l_{ijk} d_l`) from central
    /// differences of the Christoffel symbols.
    pub fn riemann(&self, x: &[f64]) -> Vec<Vec<Vec<Vec<f64>>>> {
        let d = x.len();
        let h = 1e-4;
        let mut dgam = vec![vec![vec![vec![0.0; d]; d]; d]; d]; // [m][l][j][k] = d_m Gamma^l_{jk}
        for m in 0..d {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[m] += h;
            xm[m] -= h;
            let mut xp2 = x.to_vec();
            let mut xm2 = x.to_vec();
            xp2[m] += 2.0 * h;
            xm2[m] -= 2.0 * h;
            let (gp, gm, gp2, gm2) = (
                self.christoffel(&xp),
                self.christoffel(&xm),
                self.christoffel(&xp2),
                self.christoffel(&xm2),
            );
            for l in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        dgam[m][l][j][k] =
                            (8.0 * (gp[l][j][k] - gm[l][j][k]) - (gp2[l][j][k] - gm2[l][j][k])) / (12.0 * h);
                    }
                }
            }
        }
        let gam = self.christoffel(x);
        let mut r = vec![vec![vec![vec![0.0; d]; d]; d]; d]; // [l][i][j][k]
        for l in 0..d {
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        let mut v = dgam[i][l][j][k] - dgam[j][l][i][k];
                        for m in 0..d {
                            v += gam[l][i][m] * gam[m][j][k] - gam[l][j][m] * gam[m][i][k];
                        }
                        r[l][i][j][k] = v;
                    }
                }
            }
        }
        r
    }

    /// Jacobi operator `g(R(u, v) v, w)`.
    pub fn jacobi_form(&self, x: &[f64], riem: &[Vec<Vec<Vec<f64>>>], u: &[f64], v: &[f64], w: &[f64]) -> f64 {
        let d = x.len();
        let mut rv = vec![0.0; d];
        for (l, rl) in rv.iter_mut().enumerate() {
            let mut s = 0.0;
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        s += riem[l][i][j][k] * u[i] * v[j] * v[k];
                    }
                }
            }
            *rl = s;
        }
        self.inner(x, &rv, w)
    }

    /// Boundary defining function of `Omega`: negative inside.
    pub fn boundary_fn(&self, x: &[f64]) -> f64 {
        dot(x, x) - self.radius().powi(2)
    }
}

/// Model manifold `I x M` of dimension `n` with conformal factor `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtaChart {
    pub n: usize,
    pub interval: [f64; 2],
    pub geometry: Geometry,
    #[serde(default)]
    pub conformal: ConformalFactor,
}

impl CtaChart {
    pub fn new(n: usize, interval: [f64; 2], geometry: Geometry) -> Result<Self> {
        let chart = CtaChart { n, interval, geometry, conformal: ConformalFactor::Unit };
        chart.validate()?;
        Ok(chart)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n != 3 && self.n != 4 {
            return Err(Error::InvalidInput(format!("dimension n = {} not in {{3, 4}}", self.n)));
        }
        if !(self.interval[0] < self.interval[1]) {
            return Err(Error::InvalidInput("interval must satisfy a0 < b0".into()));
        }
        self.geometry.validate()?;
        self.conformal.validate()
    }

    /// Transversal dimension `n - 1`.
    pub fn dim(&self) -> usize {
        self.n - 1
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
