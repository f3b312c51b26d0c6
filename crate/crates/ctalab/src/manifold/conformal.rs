//! Conformal factors `c(x0, x')` and the reduction of `-Delta_{c g} u + V(x, u) = 0` to the
//! product metric `dx0^2 + g`.

use super::{dot, Geometry};
use crate::error::{Error, Result};
use crate::potential::{Field, PotentialSeries};
use crate::C64;
use serde::{Deserialize, Serialize};

/// Positive conformal factor on `I x M`, written in full coordinates `x = (x0, x')`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConformalFactor {
    #[default]
    Unit,
    Constant { value: f64 },
    /// `1 + amplitude * exp(-|x - center|^2 / width^2)`; an empty center means the origin.
    Gaussian {
        amplitude: f64,
        width: f64,
        #[serde(default)]
        center: Vec<f64>,
    },
    /// `1 / c`.
    Reciprocal { of: Box<ConformalFactor> },
}

/// Value, gradient and Hessian of a scalar at a point.
#[derive(Debug, Clone)]
struct Jet {
    v: f64,
    g: Vec<f64>,
    h: Vec<Vec<f64>>,
}

impl Jet {
    fn constant(n: usize, v: f64) -> Jet {
        Jet { v, g: vec![0.0; n], h: vec![vec![0.0; n]; n] }
    }

    fn mul(&self, o: &Jet) -> Jet {
        let n = self.g.len();
        let g = (0..n).map(|i| self.g[i] * o.v + self.v * o.g[i]).collect();
        let h = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| self.h[i][j] * o.v + self.g[i] * o.g[j] + self.g[j] * o.g[i] + self.v * o.h[i][j])
                    .collect()
            })
            .collect();
        Jet { v: self.v * o.v, g, h }
    }

    /// `f^p` by the chain rule.
    fn powf(&self, p: f64) -> Jet {
        let n = self.g.len();
        let f1 = p * self.v.powf(p - 1.0);
        let f2 = p * (p - 1.0) * self.v.powf(p - 2.0);
        let g = self.g.iter().map(|gi| f1 * gi).collect();
        let h = (0..n)
            .map(|i| (0..n).map(|j| f1 * self.h[i][j] + f2 * self.g[i] * self.g[j]).collect())
            .collect();
        Jet { v: self.v.powf(p), g, h }
    }
}

impl ConformalFactor {
    pub fn validate(&self) -> Result<()> {
        match self {
            ConformalFactor::Unit => Ok(()),
            ConformalFactor::Constant { value } if *value > 0.0 => Ok(()),
            ConformalFactor::Constant { .. } => Err(Error::InvalidInput("constant conformal factor must be positive".into())),
            ConformalFactor::Gaussian { amplitude, width, .. } if *amplitude > -1.0 && *width > 0.0 => Ok(()),
            ConformalFactor::Gaussian { .. } => {
                Err(Error::InvalidInput("gaussian conformal factor needs amplitude > -1 and width > 0".into()))
            }
            ConformalFactor::Reciprocal { of } => of.validate(),
        }
    }

    pub fn is_unit(&self) -> bool {
        matches!(self, ConformalFactor::Unit)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.jet(x).v
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.jet(x).g
    }

    pub fn hessian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.jet(x).h
    }

    fn jet(&self, x: &[f64]) -> Jet {
        let n = x.len();
        match self {
            ConformalFactor::Unit => Jet::constant(n, 1.0),
            ConformalFactor::Constant { value } => Jet::constant(n, *value),
            ConformalFactor::Gaussian { amplitude, width, center } => {
                let s2 = width * width;
                let dx: Vec<f64> = (0..n).map(|i| x[i] - center.get(i).copied().unwrap_or(0.0)).collect();
                let e = amplitude * (-dot(&dx, &dx) / s2).exp();
                let g = dx.iter().map(|d| -2.0 * d / s2 * e).collect();
                let h = (0..n)
                    .map(|i| {
                        (0..n)
                            .map(|j| {
                                let delta = if i == j { 1.0 } else { 0.0 };
                                e * (4.0 * dx[i] * dx[j] / (s2 * s2) - 2.0 * delta / s2)
                            })
                            .collect()
                    })
                    .collect();
                Jet { v: 1.0 + e, g, h }
            }
            ConformalFactor::Reciprocal { of } => of.jet(x).powf(-1.0),
        }
    }
}

/// `Delta` of the product metric `dx0^2 + e^{2 phi} delta` applied to a jet at `x`.
fn product_laplacian(geo: &Geometry, x: &[f64], f: &Jet) -> f64 {
    let n = x.len();
    let d = n - 1;
    let (phi, dphi, _) = geo.phi_jet(&x[1..]);
    let lap_e: f64 = (1..n).map(|i| f.h[i][i]).sum();
    let drift = (d as f64 - 2.0) * dot(&dphi, &f.g[1..]);
    f.h[0][0] + (-2.0 * phi).exp() * (lap_e + drift)
}

/// Reduce `-Delta_{c g} u + V(x, u) = 0` to `-Delta_g w + V^(x, w) = 0` with `u = c^{-(n-2)/4} w`,
/// where `g = dx0^2 + g_M`.
pub fn conformal_reduce(v: &PotentialSeries, c: &ConformalFactor, geometry: &Geometry) -> Result<PotentialSeries> {
    conformal_reduce_on(v, c, &ConformalFactor::Unit, geometry)
}

/// As [`conformal_reduce`] for the metric `c b g` reduced to `b g`.
///
/// With `b = 1` this is the plain reduction; reducing by `1/c` on top of `b = c` undoes it.
pub fn conformal_reduce_on(
    v: &PotentialSeries,
    c: &ConformalFactor,
    base: &ConformalFactor,
    geometry: &Geometry,
) -> Result<PotentialSeries> {
    c.validate()?;
    base.validate()?;
    let n = v.n;
    if n != 3 && n != 4 {
        return Err(Error::InvalidInput(format!("dimension n = {n} not in {{3, 4}}")));
    }
    let beta = (n as f64 - 2.0) / 4.0;
    let gamma = (n as f64 + 2.0) / 4.0;
    let order = v.order().max(1);
    let mut coeffs = Vec::with_capacity(order);
    for k in 1..=order {
        let vk = v.coeff(k);
        let p = gamma - k as f64 * beta;
        let scaled = if vk.is_zero() || c.is_unit() {
            vk
        } else {
            let c = c.clone();
            Field::new(move |x| vk.eval(x) * c.value(x).powf(p))
        };
        coeffs.push(scaled);
    }
    if !(c.is_unit() || matches!(c, ConformalFactor::Constant { .. }) && base.is_unit()) {
        let (c, b, geo) = (c.clone(), base.clone(), geometry.clone());
        let q = Field::new(move |x| {
            let cj = c.jet(x);
            let bj = b.jet(x);
            let lap_bc = product_laplacian(&geo, x, &bj.mul(&cj).powf(beta));
            let lap_b = product_laplacian(&geo, x, &bj.powf(beta));
            let val = cj.v.powf(-beta) * bj.v.powf(-gamma) * (lap_bc - cj.v.powf(beta) * lap_b);
            C64::new(val, 0.0)
        });
        coeffs[0] = coeffs[0].add(&q);
    }
    Ok(PotentialSeries::new(n, coeffs))
}
