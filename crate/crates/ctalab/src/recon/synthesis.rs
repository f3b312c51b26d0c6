//! Large-`lambda` extrapolation and Fourier synthesis in `x0`.

use crate::error::{Error, Result};
use crate::C64;
use nalgebra::{DMatrix, DVector};

/// Least-squares fit `S(lambda) = limit + slope / sqrt(lambda)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaFit {
    pub limit: C64,
    pub slope: C64,
    /// RMS misfit of the samples.
    pub residual: f64,
}

pub fn lambda_limit(lambdas: &[f64], values: &[C64]) -> LambdaFit {
    let n = lambdas.len();
    if n == 1 {
        return LambdaFit { limit: values[0], slope: C64::new(0.0, 0.0), residual: 0.0 };
    }
    let s: Vec<f64> = lambdas.iter().map(|l| 1.0 / l.sqrt()).collect();
    let (sm, vm) = (s.iter().sum::<f64>() / n as f64, values.iter().sum::<C64>() / n as f64);
    let sxx: f64 = s.iter().map(|x| (x - sm).powi(2)).sum();
    let sxy: C64 = s.iter().zip(values).map(|(x, v)| (v - vm) * (x - sm)).sum();
    let slope = sxy / sxx;
    let limit = vm - slope * sm;
    let residual = (s.iter().zip(values).map(|(x, v)| (v - limit - slope * *x).norm_sqr()).sum::<f64>() / n as f64).sqrt();
    LambdaFit { limit, slope, residual }
}

/// Values and error bars of a trigonometric synthesis on the `x0` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigSynthesis {
    pub coefficients: Vec<C64>,
    pub values: Vec<C64>,
    pub errors: Vec<f64>,
}

/// `sin(x) / x`.
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Fits `V(x0) = sum_{|k| <= modes} c_k e^{i omega_k (x0 - c)}` on `I = [a, b]`,
/// `omega_k = 2 pi k / |I|`, to `int_I e^{-i xi x0} V dx0` sampled at `xi`, and evaluates it on `x0`.
/// Error bars propagate `errors` linearly through the pseudo-inverse.
pub fn trig_synthesis(xi: &[f64], values: &[C64], errors: &[f64], a: f64, b: f64, modes: usize, x0: &[f64]) -> Result<TrigSynthesis> {
    let nk = 2 * modes + 1;
    if xi.len() < nk || values.len() != xi.len() || errors.len() != xi.len() {
        return Err(Error::InvalidInput("too few frequency samples for the synthesis".into()));
    }
    let (c, p) = (0.5 * (a + b), b - a);
    let omega = |k: usize| 2.0 * std::f64::consts::PI * (k as f64 - modes as f64) / p;
    let design = DMatrix::from_fn(xi.len(), nk, |i, k| (C64::new(0.0, -xi[i] * c)).exp() * (p * sinc(0.5 * (omega(k) - xi[i]) * p)));
    let pinv = design.pseudo_inverse(1e-12).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let coef = &pinv * DVector::from_column_slice(values);
    let basis = DMatrix::from_fn(x0.len(), nk, |j, k| C64::new(0.0, omega(k) * (x0[j] - c)).exp());
    let vals = &basis * &coef;
    let gain = &basis * &pinv;
    let errs = (0..x0.len()).map(|j| (0..xi.len()).map(|i| gain[(j, i)].norm() * errors[i]).sum()).collect();
    Ok(TrigSynthesis { coefficients: coef.iter().copied().collect(), values: vals.iter().copied().collect(), errors: errs })
}
