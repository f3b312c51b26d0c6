//! Inverse of `d_0 + i d_1` in the plane by convolution with the Cauchy kernel.

use crate::quad::uniform_derivative;
use crate::C64;
use rustfft::{FftDirection, FftPlanner};
use std::f64::consts::PI;

/// In-place 2-D FFT of a row-major `n0 x n1` array.
pub(crate) fn fft2(data: &mut [C64], n0: usize, n1: usize, dir: FftDirection) {
    let mut planner = FftPlanner::new();
    let p1 = planner.plan_fft(n1, dir);
    for row in data.chunks_mut(n1) {
        p1.process(row);
    }
    let p0 = planner.plan_fft(n0, dir);
    let mut col = vec![C64::new(0.0, 0.0); n0];
    for j in 0..n1 {
        for i in 0..n0 {
            col[i] = data[i * n1 + j];
        }
        p0.process(&mut col);
        for i in 0..n0 {
            data[i * n1 + j] = col[i];
        }
    }
}

/// Derivative along axis 0 (`axis = 0`) or axis 1 of a row-major grid function.
pub(crate) fn grid_derivative(f: &[C64], n0: usize, n1: usize, h: f64, axis: usize, order: usize, width: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); f.len()];
    if axis == 1 {
        for i in 0..n0 {
            let d = uniform_derivative(&f[i * n1..(i + 1) * n1], h, order, width);
            out[i * n1..(i + 1) * n1].copy_from_slice(&d);
        }
    } else {
        let mut line = vec![C64::new(0.0, 0.0); n0];
        for j in 0..n1 {
            for i in 0..n0 {
                line[i] = f[i * n1 + j];
            }
            let d = uniform_derivative(&line, h, order, width);
            for i in 0..n0 {
                out[i * n1 + j] = d[i];
            }
        }
    }
    out
}

/// `r = Gamma * F` with `Gamma(y) = 1 / (2 pi (y0 + i y1))`, so that `(d_0 + i d_1) r = F`.
///
/// `F` is sampled on a grid with equal spacing `h` in both directions (`f[i * n1 + j]` at
/// `(i h, j h)`) and treated as zero outside it. The convolution is the punctured lattice sum
/// (zero padded to twice the size in each direction) plus the cell correction
/// `-(h^2 / 2 pi) d_z F`, which makes the rule fourth order for smooth compactly supported `F`.
pub fn dbar_solve(f: &[C64], n0: usize, n1: usize, h: f64) -> Vec<C64> {
    assert_eq!(f.len(), n0 * n1, "grid size mismatch");
    let (p0, p1) = (2 * n0, 2 * n1);
    let mut kern = vec![C64::new(0.0, 0.0); p0 * p1];
    for a in 0..p0 {
        let da = if a < n0 { a as f64 } else { a as f64 - p0 as f64 };
        for b in 0..p1 {
            let db = if b < n1 { b as f64 } else { b as f64 - p1 as f64 };
            if a == 0 && b == 0 {
                continue;
            }
            kern[a * p1 + b] = h / (2.0 * PI * C64::new(da, db));
        }
    }
    let mut pad = vec![C64::new(0.0, 0.0); p0 * p1];
    for i in 0..n0 {
        for j in 0..n1 {
            pad[i * p1 + j] = f[i * n1 + j] * h * h;
        }
    }
    // kernel carries 1/h from 1/(2 pi w); the data carries the cell area h^2
    kern.iter_mut().for_each(|k| *k /= h * h);
    fft2(&mut kern, p0, p1, FftDirection::Forward);
    fft2(&mut pad, p0, p1, FftDirection::Forward);
    for (a, k) in pad.iter_mut().zip(&kern) {
        *a *= k;
    }
    fft2(&mut pad, p0, p1, FftDirection::Inverse);
    let norm = 1.0 / (p0 * p1) as f64;
    let d0 = grid_derivative(f, n0, n1, h, 0, 1, 5);
    let d1 = grid_derivative(f, n0, n1, h, 1, 1, 5);
    let mut out = vec![C64::new(0.0, 0.0); n0 * n1];
    for i in 0..n0 {
        for j in 0..n1 {
            let k = i * n1 + j;
            let dz = (d0[k] - C64::i() * d1[k]) * 0.5;
            out[k] = pad[i * p1 + j] * norm - dz * (h * h / (2.0 * PI));
        }
    }
    out
}

/// `(d_0 + i d_1) r` with fourth-order differences.
pub fn dbar_apply(r: &[C64], n0: usize, n1: usize, h: f64) -> Vec<C64> {
    let d0 = grid_derivative(r, n0, n1, h, 0, 1, 5);
    let d1 = grid_derivative(r, n0, n1, h, 1, 1, 5);
    d0.iter().zip(&d1).map(|(a, b)| a + C64::i() * b).collect()
}
