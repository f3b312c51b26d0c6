//! Closed-form coefficient fields and the power series `V(x, z) = sum_k V_k(x) z^k / k!`.

use crate::error::{Error, Result};
use crate::C64;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

type FieldFn = Arc<dyn Fn(&[f64]) -> C64 + Send + Sync>;

/// A complex scalar field on `I x M`, evaluated at `x = (x0, x1, ..., x_{n-1})`.
#[derive(Clone)]
pub struct Field {
    f: FieldFn,
    zero: bool,
}

impl fmt::Debug for Field {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(fm, "Field {{ zero: {} }}", self.zero)
    }
}

impl Field {
    pub fn new(f: impl Fn(&[f64]) -> C64 + Send + Sync + 'static) -> Self {
        Field { f: Arc::new(f), zero: false }
    }

    pub fn zero() -> Self {
        Field { f: Arc::new(|_| C64::new(0.0, 0.0)), zero: true }
    }

    pub fn constant(c: C64) -> Self {
        if c == C64::new(0.0, 0.0) {
            return Field::zero();
        }
        Field::new(move |_| c)
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> C64 {
        (self.f)(x)
    }

    /// True only for fields constructed as identically zero.
    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn scaled(&self, s: C64) -> Field {
        if self.zero {
            return Field::zero();
        }
        let f = self.f.clone();
        Field::new(move |x| s * f(x))
    }

    pub fn add(&self, other: &Field) -> Field {
        match (self.zero, other.zero) {
            (true, _) => other.clone(),
            (_, true) => self.clone(),
            _ => {
                let (f, g) = (self.f.clone(), other.f.clone());
                Field::new(move |x| f(x) + g(x))
            }
        }
    }
}

/// Taylor coefficients `V_1 ... V_K` of the nonlinearity; `coeffs[k - 1] = V_k`.
#[derive(Clone, Debug)]
pub struct PotentialSeries {
    pub n: usize,
    pub coeffs: Vec<Field>,
}

impl PotentialSeries {
    pub fn new(n: usize, coeffs: Vec<Field>) -> Self {
        PotentialSeries { n, coeffs }
    }

    /// `V_k` (zero beyond the stored order).
    pub fn coeff(&self, k: usize) -> Field {
        assert!(k >= 1, "the series has no constant term");
        self.coeffs.get(k - 1).cloned().unwrap_or_else(Field::zero)
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    /// `V(x, z)`.
    pub fn eval(&self, x: &[f64], z: C64) -> C64 {
        self.eval_from(x, z, 1)
    }

    /// `V(x, z) - V_1(x) z`.
    pub fn eval_tilde(&self, x: &[f64], z: C64) -> C64 {
        self.eval_from(x, z, 2)
    }

    fn eval_from(&self, x: &[f64], z: C64, k0: usize) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        let mut zk = C64::new(1.0, 0.0);
        let mut fact = 1.0;
        for (i, f) in self.coeffs.iter().enumerate() {
            let k = i + 1;
            zk *= z;
            fact *= k as f64;
            if k >= k0 && !f.is_zero() {
                acc += f.eval(x) * zk / fact;
            }
        }
        acc
    }

    /// Coefficients values `V_k(x)` for `k = 1..=K`.
    pub fn values(&self, x: &[f64]) -> Vec<C64> {
        self.coeffs.iter().map(|f| if f.is_zero() { C64::new(0.0, 0.0) } else { f.eval(x) }).collect()
    }
}

/// Dependence on `x0` of a separable registered field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    #[default]
    Const,
    /// `1 + slope * x0`.
    Linear { slope: f64 },
    /// `cos(omega * x0)`.
    Cos { omega: f64 },
}

impl Profile {
    pub fn eval(&self, x0: f64) -> f64 {
        match *self {
            Profile::Const => 1.0,
            Profile::Linear { slope } => 1.0 + slope * x0,
            Profile::Cos { omega } => (omega * x0).cos(),
        }
    }
}

/// Registered closed-form field library used by configs and tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSpec {
    Zero,
    Constant {
        re: f64,
        #[serde(default)]
        im: f64,
    },
    /// `amplitude * exp(1 - 1/(1 - s^2)) * profile(x0)`, `s = |x' - center| / radius`.
    Bump {
        center: Vec<f64>,
        radius: f64,
        amplitude: f64,
        #[serde(default)]
        x0: Profile,
    },
    /// `amplitude * exp(-|x' - center|^2 / width^2) * profile(x0)`.
    Gaussian {
        center: Vec<f64>,
        width: f64,
        amplitude: f64,
        #[serde(default)]
        x0: Profile,
    },
    /// `amplitude * prod_i cos(k_i x_i) * profile(x0)`.
    Trig {
        k: Vec<f64>,
        amplitude: f64,
        #[serde(default)]
        x0: Profile,
    },
    /// `sum_j coeffs[j] x0^j`.
    PolyX0 { coeffs: Vec<f64> },
}

/// Smooth compactly supported bump with `b(0) = 1`, support `|s| < 1`.
pub fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

impl FieldSpec {
    pub fn build(&self, n: usize) -> Result<Field> {
        let d = n - 1;
        let check = |c: &Vec<f64>| -> Result<()> {
            if c.len() != d {
                return Err(Error::InvalidInput(format!("field center must have {d} components")));
            }
            Ok(())
        };
        Ok(match self.clone() {
            FieldSpec::Zero => Field::zero(),
            FieldSpec::Constant { re, im } => Field::constant(C64::new(re, im)),
            FieldSpec::Bump { center, radius, amplitude, x0 } => {
                check(&center)?;
                if !(radius > 0.0) {
                    return Err(Error::InvalidInput("bump radius must be positive".into()));
                }
                Field::new(move |x| {
                    let r2: f64 = x[1..].iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum();
                    C64::new(amplitude * bump(r2.sqrt() / radius) * x0.eval(x[0]), 0.0)
                })
            }
            FieldSpec::Gaussian { center, width, amplitude, x0 } => {
                check(&center)?;
                Field::new(move |x| {
                    let r2: f64 = x[1..].iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum();
                    C64::new(amplitude * (-r2 / (width * width)).exp() * x0.eval(x[0]), 0.0)
                })
            }
            FieldSpec::Trig { k, amplitude, x0 } => {
                check(&k)?;
                Field::new(move |x| {
                    let p: f64 = x[1..].iter().zip(&k).map(|(a, b)| (a * b).cos()).product();
                    C64::new(amplitude * p * x0.eval(x[0]), 0.0)
                })
            }
            FieldSpec::PolyX0 { coeffs } => Field::new(move |x| {
                C64::new(coeffs.iter().rev().fold(0.0, |acc, c| acc * x[0] + c), 0.0)
            }),
        })
    }
}

/// Build a series from registered specs, `specs[k - 1]` describing `V_k`.
pub fn series_from_specs(n: usize, specs: &[FieldSpec]) -> Result<PotentialSeries> {
    let coeffs = specs.iter().map(|s| s.build(n)).collect::<Result<Vec<_>>>()?;
    Ok(PotentialSeries::new(n, coeffs))
}
