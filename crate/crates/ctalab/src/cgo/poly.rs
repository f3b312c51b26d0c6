//! Dense complex polynomials in the transversal Fermi variables `y''` (one or two of them).

use crate::C64;
use serde::{Deserialize, Serialize};

/// Polynomial of total degree `<= deg` in `d in {1, 2}` variables.
///
/// Coefficients are grouped by total degree `k`; within a degree the monomial
/// `y_2^{k-a} y_3^a` sits at offset `a` (only `a = 0` exists for `d = 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poly {
    pub d: usize,
    pub deg: usize,
    pub c: Vec<C64>,
}

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

impl Poly {
    /// Number of monomials of exact degree `k`.
    pub fn width(d: usize, k: usize) -> usize {
        if d == 1 {
            1
        } else {
            k + 1
        }
    }

    fn offset(d: usize, k: usize) -> usize {
        if d == 1 {
            k
        } else {
            k * (k + 1) / 2
        }
    }

    pub fn zero(d: usize, deg: usize) -> Self {
        assert!(d == 1 || d == 2, "transversal dimension must be 1 or 2");
        Poly { d, deg, c: vec![zero(); Self::offset(d, deg + 1)] }
    }

    pub fn constant(d: usize, deg: usize, v: C64) -> Self {
        let mut p = Self::zero(d, deg);
        p.c[0] = v;
        p
    }

    /// Index of `y_2^i y_3^j`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        Self::offset(self.d, i + j) + j
    }

    /// Exponents of every stored coefficient, in storage order.
    pub fn exponents(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.c.len());
        for k in 0..=self.deg {
            for a in 0..Self::width(self.d, k) {
                out.push((k - a, a));
            }
        }
        out
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        if i + j > self.deg || (self.d == 1 && j > 0) {
            return zero();
        }
        self.c[self.index(i, j)]
    }

    pub fn eval(&self, y: &[f64]) -> C64 {
        let mut acc = zero();
        if self.d == 1 {
            for &c in self.c.iter().rev() {
                acc = acc * y[0] + c;
            }
            return acc;
        }
        let mut pa = [1.0; 16];
        let mut pb = [1.0; 16];
        for k in 1..=self.deg {
            pa[k] = pa[k - 1] * y[0];
            pb[k] = pb[k - 1] * y[1];
        }
        let mut idx = 0;
        for k in 0..=self.deg {
            for a in 0..=k {
                acc += self.c[idx] * (pa[k - a] * pb[a]);
                idx += 1;
            }
        }
        acc
    }

    /// Homogeneous part of degree `k` as a coefficient vector.
    pub fn part(&self, k: usize) -> Vec<C64> {
        if k > self.deg {
            return vec![zero(); Self::width(self.d, k)];
        }
        let o = Self::offset(self.d, k);
        self.c[o..o + Self::width(self.d, k)].to_vec()
    }

    pub fn set_part(&mut self, k: usize, v: &[C64]) {
        let o = Self::offset(self.d, k);
        self.c[o..o + Self::width(self.d, k)].copy_from_slice(v);
    }

    /// Keep only the terms of degree `< k`.
    pub fn below(&self, k: usize) -> Poly {
        let mut p = self.clone();
        let o = Self::offset(self.d, k.min(self.deg + 1));
        p.c[o..].iter_mut().for_each(|c| *c = zero());
        p
    }

    /// Change the degree cap, dropping or zero-filling terms.
    pub fn with_deg(&self, deg: usize) -> Poly {
        let mut p = Poly::zero(self.d, deg);
        let n = p.c.len().min(self.c.len());
        p.c[..n].copy_from_slice(&self.c[..n]);
        p
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let mut p = if o.deg > self.deg { self.with_deg(o.deg) } else { self.clone() };
        for (a, b) in p.c.iter_mut().zip(&o.c) {
            *a += b;
        }
        p
    }

    pub fn axpy(&mut self, s: C64, o: &Poly) {
        for (a, b) in self.c.iter_mut().zip(&o.c) {
            *a += s * b;
        }
    }

    pub fn scale(&self, s: C64) -> Poly {
        Poly { c: self.c.iter().map(|v| v * s).collect(), ..self.clone() }
    }

    pub fn conj(&self) -> Poly {
        Poly { c: self.c.iter().map(|v| v.conj()).collect(), ..self.clone() }
    }

    /// Product truncated at degree `deg`.
    pub fn mul(&self, o: &Poly, deg: usize) -> Poly {
        let mut p = Poly::zero(self.d, deg);
        let ea = self.exponents();
        let eb = o.exponents();
        for (ia, &(i1, j1)) in ea.iter().enumerate() {
            let ca = self.c[ia];
            if ca == zero() {
                continue;
            }
            for (ib, &(i2, j2)) in eb.iter().enumerate() {
                if i1 + j1 + i2 + j2 > deg {
                    break;
                }
                let cb = o.c[ib];
                if cb != zero() {
                    let k = p.index(i1 + i2, j1 + j2);
                    p.c[k] += ca * cb;
                }
            }
        }
        p
    }

    /// Partial derivative in variable `var` (0 for `y_2`, 1 for `y_3`).
    pub fn deriv(&self, var: usize) -> Poly {
        let mut p = Poly::zero(self.d, self.deg.saturating_sub(1));
        if self.deg == 0 {
            return p;
        }
        for (idx, &(i, j)) in self.exponents().iter().enumerate() {
            let c = self.c[idx];
            match var {
                0 if i > 0 => {
                    let k = p.index(i - 1, j);
                    p.c[k] += c * i as f64;
                }
                1 if j > 0 => {
                    let k = p.index(i, j - 1);
                    p.c[k] += c * j as f64;
                }
                _ => {}
            }
        }
        p.with_deg(self.deg)
    }

    /// Multiply by the linear monomial `y_var`, truncated at `deg`.
    pub fn times_var(&self, var: usize, deg: usize) -> Poly {
        let mut p = Poly::zero(self.d, deg);
        for (idx, &(i, j)) in self.exponents().iter().enumerate() {
            let (a, b) = if var == 0 { (i + 1, j) } else { (i, j + 1) };
            if a + b <= deg {
                let k = p.index(a, b);
                p.c[k] += self.c[idx];
            }
        }
        p
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Least-squares fit of a degree-`deg` polynomial to samples `(y, value)` using the supplied
/// pseudo-inverse from [`FitPlan`].
#[derive(Debug, Clone)]
pub struct FitPlan {
    pub d: usize,
    pub deg: usize,
    pub nodes: Vec<Vec<f64>>,
    pinv: nalgebra::DMatrix<f64>,
}

impl FitPlan {
    /// Chebyshev-type nodes on `|y| <= radius` and the normal-equation pseudo-inverse.
    pub fn new(d: usize, deg: usize, radius: f64) -> Self {
        let m = 2 * deg + 3;
        let cheb: Vec<f64> = (0..m)
            .map(|i| radius * ((2 * i + 1) as f64 * std::f64::consts::PI / (2 * m) as f64).cos())
            .collect();
        let nodes: Vec<Vec<f64>> = if d == 1 {
            cheb.iter().map(|&a| vec![a]).collect()
        } else {
            let m2 = deg + 4;
            let c2: Vec<f64> = (0..m2)
                .map(|i| radius * ((2 * i + 1) as f64 * std::f64::consts::PI / (2 * m2) as f64).cos())
                .collect();
            c2.iter().flat_map(|&a| c2.iter().map(move |&b| vec![a, b])).collect()
        };
        let proto = Poly::zero(d, deg);
        let ex = proto.exponents();
        // monomials in y / radius keep the least-squares problem well conditioned
        let a = nalgebra::DMatrix::from_fn(nodes.len(), ex.len(), |r, c| {
            let (i, j) = ex[c];
            let y = &nodes[r];
            (y[0] / radius).powi(i as i32) * if d == 2 { (y[1] / radius).powi(j as i32) } else { 1.0 }
        });
        let mut pinv = a.svd(true, true).pseudo_inverse(1e-13).expect("fit matrix is regular");
        for (c, &(i, j)) in ex.iter().enumerate() {
            let s = radius.powi(-((i + j) as i32));
            pinv.row_mut(c).scale_mut(s);
        }
        FitPlan { d, deg, nodes, pinv }
    }

    pub fn fit(&self, values: &[C64]) -> Poly {
        let mut p = Poly::zero(self.d, self.deg);
        for (r, c) in p.c.iter_mut().enumerate() {
            *c = values.iter().enumerate().map(|(k, v)| v * self.pinv[(r, k)]).sum();
        }
        p
    }
}
