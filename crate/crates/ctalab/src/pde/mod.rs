//! Discretized direct problem on a box `M = prod [lo_a, hi_a]` with the flat product metric:
//! Dirichlet Green operators of `P = -Delta + V1`, the Picard solver for
//! `-Delta u + V(x, u) = 0`, the DN map and the multiple-fold linearization.
//!
//! Grid functions are stored on all nodes (boundary included) in row-major order, axis 0
//! slowest. Boundary data are vectors over [`DiscreteDomain::boundary_nodes`].

mod linearize;
mod semilinear;
mod solver;

pub use linearize::{
    direct_hierarchy_solve, divided_difference, greens_pairing, hierarchy_from_linear, linearize_complex_step,
    linearize_divided_difference, nonvanishing_solution, Hierarchy, NonvanishingSolution, PairingReport,
};
pub use semilinear::{dn_map, measure_r0, solve_semilinear, DnRecord, SemilinearConfig, SemilinearSolution, SeriesGrid};
pub use solver::{DirichletSolver, SolveStats};

use crate::error::{Error, Result};
use crate::C64;
use serde::{Deserialize, Serialize};

/// One quadrature point of a boundary face: the node, the face (axis and side) and the face weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FacePoint {
    pub node: usize,
    pub axis: usize,
    /// `true` on the face `x_axis = hi`.
    pub upper: bool,
    pub weight: f64,
}

/// Tensor grid over a box with `cells[a]` cells along axis `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub cells: Vec<usize>,
}

impl DiscreteDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, cells: Vec<usize>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() || lo.len() != cells.len() {
            return Err(Error::InvalidInput("box bounds and cell counts must have equal nonzero length".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(b > a)) {
            return Err(Error::InvalidInput("empty box side".into()));
        }
        if cells.iter().any(|&c| c < 4) {
            return Err(Error::InvalidInput("need at least 4 cells per axis".into()));
        }
        Ok(DiscreteDomain { lo, hi, cells })
    }

    /// `[0, 1]^d` with `cells` cells per axis.
    pub fn unit_cube(d: usize, cells: usize) -> Result<Self> {
        DiscreteDomain::new(vec![0.0; d], vec![1.0; d], vec![cells; d])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn h(&self, a: usize) -> f64 {
        (self.hi[a] - self.lo[a]) / self.cells[a] as f64
    }

    pub fn shape(&self) -> Vec<usize> {
        self.cells.iter().map(|c| c + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.cells.iter().map(|c| c + 1).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn interior_shape(&self) -> Vec<usize> {
        self.cells.iter().map(|c| c - 1).collect()
    }

    pub fn interior_len(&self) -> usize {
        self.cells.iter().map(|c| c - 1).product()
    }

    fn strides(&self) -> Vec<usize> {
        let shape = self.shape();
        let mut s = vec![1; shape.len()];
        for a in (0..shape.len() - 1).rev() {
            s[a] = s[a + 1] * shape[a + 1];
        }
        s
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let shape = self.shape();
        let mut m = vec![0; shape.len()];
        for a in (0..shape.len()).rev() {
            m[a] = idx % shape[a];
            idx /= shape[a];
        }
        m
    }

    pub fn index(&self, m: &[usize]) -> usize {
        m.iter().zip(self.shape()).fold(0, |acc, (&i, s)| acc * s + i)
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx).iter().enumerate().map(|(a, &i)| self.lo[a] + i as f64 * self.h(a)).collect()
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        self.multi_index(idx).iter().zip(&self.cells).any(|(&i, &c)| i == 0 || i == c)
    }

    /// Global indices of the boundary nodes, ascending.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_boundary(i)).collect()
    }

    /// Global indices of the interior nodes in the solver ordering.
    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_boundary(i)).collect()
    }

    /// Samples `f` on every node.
    pub fn sample(&self, f: impl Fn(&[f64]) -> C64) -> Vec<C64> {
        (0..self.len()).map(|i| f(&self.point(i))).collect()
    }

    /// Samples `f` on the boundary nodes.
    pub fn trace_of(&self, f: impl Fn(&[f64]) -> C64) -> Vec<C64> {
        self.boundary_nodes().iter().map(|&i| f(&self.point(i))).collect()
    }

    /// Restricts a grid function to the boundary nodes.
    pub fn trace(&self, u: &[C64]) -> Vec<C64> {
        self.boundary_nodes().iter().map(|&i| u[i]).collect()
    }

    /// Trapezoid weights on every node.
    pub fn weights(&self) -> Vec<f64> {
        (0..self.len())
            .map(|idx| {
                self.multi_index(idx)
                    .iter()
                    .enumerate()
                    .map(|(a, &i)| if i == 0 || i == self.cells[a] { 0.5 * self.h(a) } else { self.h(a) })
                    .product()
            })
            .collect()
    }

    pub fn integrate(&self, u: &[C64]) -> C64 {
        self.weights().iter().zip(u).map(|(w, v)| v * *w).sum()
    }

    /// Quadrature points of every face; nodes on edges appear once per face they bound.
    pub fn face_points(&self) -> Vec<FacePoint> {
        let d = self.dim();
        let mut out = Vec::new();
        for a in 0..d {
            for upper in [false, true] {
                let side = if upper { self.cells[a] } else { 0 };
                for idx in 0..self.len() {
                    let m = self.multi_index(idx);
                    if m[a] != side {
                        continue;
                    }
                    let weight = (0..d)
                        .filter(|&b| b != a)
                        .map(|b| if m[b] == 0 || m[b] == self.cells[b] { 0.5 * self.h(b) } else { self.h(b) })
                        .product();
                    out.push(FacePoint { node: idx, axis: a, upper, weight });
                }
            }
        }
        out
    }

    /// Outward normal derivative at every face point, one-sided three-point stencil.
    pub fn normal_derivative(&self, u: &[C64]) -> Vec<C64> {
        let st = self.strides();
        self.face_points()
            .iter()
            .map(|fp| {
                let s = st[fp.axis];
                let h = self.h(fp.axis);
                let (u1, u2) = if fp.upper { (u[fp.node - s], u[fp.node - 2 * s]) } else { (u[fp.node + s], u[fp.node + 2 * s]) };
                (3.0 * u[fp.node] - 4.0 * u1 + u2) / (2.0 * h)
            })
            .collect()
    }

    /// `sum_faces weight * values` for values given per face point.
    pub fn boundary_integrate(&self, values: &[C64]) -> C64 {
        self.face_points().iter().zip(values).map(|(fp, v)| v * fp.weight).sum()
    }

    /// Discrete `-Delta u` on interior nodes (zero on the boundary).
    pub fn neg_laplacian(&self, u: &[C64]) -> Vec<C64> {
        let st = self.strides();
        let mut out = vec![C64::new(0.0, 0.0); self.len()];
        for idx in 0..self.len() {
            if self.is_boundary(idx) {
                continue;
            }
            let mut acc = C64::new(0.0, 0.0);
            for (a, &s) in st.iter().enumerate() {
                let h2 = self.h(a).powi(2);
                acc += (2.0 * u[idx] - u[idx - s] - u[idx + s]) / h2;
            }
            out[idx] = acc;
        }
        out
    }

    /// Multilinear interpolation of a grid function at `x` (clamped to the box).
    pub fn interpolate(&self, u: &[C64], x: &[f64]) -> C64 {
        let d = self.dim();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for a in 0..d {
            let s = ((x[a] - self.lo[a]) / self.h(a)).clamp(0.0, self.cells[a] as f64);
            let i = (s.floor() as usize).min(self.cells[a] - 1);
            base[a] = i;
            frac[a] = s - i as f64;
        }
        let mut acc = C64::new(0.0, 0.0);
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut m = base.clone();
            for a in 0..d {
                if corner >> a & 1 == 1 {
                    m[a] += 1;
                    w *= frac[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w != 0.0 {
                acc += u[self.index(&m)] * w;
            }
        }
        acc
    }

    /// Scatters boundary values into a grid function that vanishes in the interior.
    pub fn extend_boundary(&self, f: &[C64]) -> Vec<C64> {
        let mut u = vec![C64::new(0.0, 0.0); self.len()];
        for (&i, &v) in self.boundary_nodes().iter().zip(f) {
            u[i] = v;
        }
        u
    }
}

pub(crate) fn sup_norm(u: &[C64]) -> f64 {
    u.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
