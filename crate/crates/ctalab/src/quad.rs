//! Quadrature and interpolation helpers shared by the transforms and the PDE layer.

use crate::C64;

/// Quintic Hermite basis on `[0, 1]` for `(f0, f0', f0'', f1, f1', f1'')` and its derivative.
pub fn quintic_hermite(s: f64) -> ([f64; 6], [f64; 6]) {
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s3 * s;
    let s5 = s4 * s;
    let b = [
        1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5,
        s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5,
        0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5,
        10.0 * s3 - 15.0 * s4 + 6.0 * s5,
        -4.0 * s3 + 7.0 * s4 - 3.0 * s5,
        0.5 * s3 - s4 + 0.5 * s5,
    ];
    let db = [
        -30.0 * s2 + 60.0 * s3 - 30.0 * s4,
        1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4,
        s - 4.5 * s2 + 6.0 * s3 - 2.5 * s4,
        30.0 * s2 - 60.0 * s3 + 30.0 * s4,
        -12.0 * s2 + 28.0 * s3 - 15.0 * s4,
        1.5 * s2 - 4.0 * s3 + 2.5 * s4,
    ];
    (b, db)
}

/// Weights of the 4-point Lagrange interpolant through nodes `-1, 0, 1, 2` at `s in [0, 1]`.
pub fn lagrange4(s: f64) -> [f64; 4] {
    [
        -s * (s - 1.0) * (s - 2.0) / 6.0,
        (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
        -(s + 1.0) * s * (s - 2.0) / 2.0,
        (s + 1.0) * s * (s - 1.0) / 6.0,
    ]
}

/// Stencil start and local weights for cubic interpolation on a uniform grid of `len` nodes.
pub fn uniform_stencil(t0: f64, h: f64, len: usize, t: f64) -> (usize, [f64; 4]) {
    assert!(len >= 4, "need at least four samples");
    let u = (t - t0) / h;
    let i = (u.floor().max(0.0) as usize).min(len - 2);
    let start = i.saturating_sub(1).min(len - 4);
    // shift so that the nodes are start, start+1, ...; local coordinate relative to node start+1
    let s = u - (start + 1) as f64;
    (start, lagrange4(s))
}

fn simpson_rec<F: Fn(f64) -> C64>(
    f: &F,
    a: f64,
    b: f64,
    fa: C64,
    fm: C64,
    fb: C64,
    whole: C64,
    tol: f64,
    depth: usize,
) -> C64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.norm() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson on `[a, b]` with absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64, tol: f64) -> C64 {
    if b <= a {
        return C64::new(0.0, 0.0);
    }
    // a coarse uniform presplit keeps the recursion from missing narrow features
    let pieces = 16;
    let w = (b - a) / pieces as f64;
    let mut acc = C64::new(0.0, 0.0);
    let mut fl = f(a);
    for j in 0..pieces {
        let (l, r) = (a + j as f64 * w, a + (j + 1) as f64 * w);
        let m = 0.5 * (l + r);
        let (fm, fr) = (f(m), f(r));
        let whole = (r - l) / 6.0 * (fl + 4.0 * fm + fr);
        acc += simpson_rec(f, l, r, fl, fm, fr, whole, tol / pieces as f64, 40);
        fl = fr;
    }
    acc
}

/// Adaptive Simpson over `[a, b]` split at the interior `breaks`.
pub fn integrate_with_breaks<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64, breaks: &[f64], tol: f64) -> C64 {
    let mut pts = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&p| p > a && p < b).collect();
    inner.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.extend(inner);
    pts.push(b);
    let share = tol / (pts.len() - 1) as f64;
    pts.windows(2).map(|w| adaptive_simpson(f, w[0], w[1], share)).sum()
}

/// Sum of adaptive 7-point Gauss-Legendre integrals over the cells of `nodes` (sorted).
///
/// Each cell is halved until the halves agree with the whole to its share of `tol`, which is
/// proportional to its length. Suited to piecewise-smooth integrands with kinks at the nodes.
pub fn cellwise_gauss<F: Fn(f64) -> C64>(f: &F, nodes: &[f64], tol: f64) -> C64 {
    if nodes.len() < 2 {
        return C64::new(0.0, 0.0);
    }
    let (x, w) = gauss_legendre(7);
    let rule = |a: f64, b: f64| -> C64 {
        let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
        x.iter().zip(&w).map(|(xi, wi)| f(c + r * xi) * (r * wi)).sum()
    };
    let total = nodes[nodes.len() - 1] - nodes[0];
    let mut acc = C64::new(0.0, 0.0);
    // explicit stack of (a, b, whole, depth)
    let mut stack = Vec::new();
    for cell in nodes.windows(2) {
        if cell[1] <= cell[0] {
            continue;
        }
        stack.push((cell[0], cell[1], rule(cell[0], cell[1]), 0usize));
        while let Some((a, b, whole, depth)) = stack.pop() {
            let m = 0.5 * (a + b);
            let (l, r) = (rule(a, m), rule(m, b));
            let diff = (l + r - whole).norm();
            // integrands built from interpolated matrices carry ~1e-13 relative noise
            if depth >= 30 || diff <= tol * (b - a) / total || diff <= 1e-12 * (l.norm() + r.norm()) {
                acc += l + r;
            } else {
                stack.push((a, m, l, depth + 1));
                stack.push((m, b, r, depth + 1));
            }
        }
    }
    acc
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Gauss-Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
    (x.iter().map(|xi| c + r * xi).collect(), w.iter().map(|wi| r * wi).collect())
}

/// Chebyshev points of the first kind on `[a, b]`, increasing.
pub fn chebyshev_nodes(n: usize, a: f64, b: f64) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let th = std::f64::consts::PI * (2 * (n - 1 - j) + 1) as f64 / (2 * n) as f64;
            0.5 * (a + b) + 0.5 * (b - a) * th.cos()
        })
        .collect()
}

/// Legendre polynomials `P_0..P_k` at `x`.
pub fn legendre_all(k: usize, x: f64) -> Vec<f64> {
    let mut p = vec![1.0; k + 1];
    if k >= 1 {
        p[1] = x;
    }
    for j in 2..=k {
        p[j] = ((2 * j - 1) as f64 * x * p[j - 1] - (j - 1) as f64 * p[j - 2]) / j as f64;
    }
    p
}

/// Finite-difference weights for the `m`-th derivative at `x0` from nodes `xs` (Fornberg).
pub fn fd_weights(xs: &[f64], x0: f64, m: usize) -> Vec<f64> {
    let n = xs.len();
    assert!(n > m, "need more nodes than the derivative order");
    let mut c = vec![vec![0.0; m + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] *= c4 / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// `m`-th derivative of uniformly sampled data using `width`-point stencils,
/// centered in the interior and shifted one-sided near the ends.
pub fn uniform_derivative(v: &[C64], h: f64, m: usize, width: usize) -> Vec<C64> {
    let n = v.len();
    assert!(n >= width && width > m, "stencil wider than the data");
    let half = width / 2;
    let mut cache: Vec<Option<Vec<f64>>> = vec![None; width];
    (0..n)
        .map(|i| {
            let start = i.saturating_sub(half).min(n - width);
            let off = i - start;
            let w = cache[off].get_or_insert_with(|| {
                let xs: Vec<f64> = (0..width).map(|j| j as f64 - off as f64).collect();
                fd_weights(&xs, 0.0, m).into_iter().map(|c| c / h.powi(m as i32)).collect()
            });
            w.iter().zip(&v[start..start + width]).map(|(c, x)| *x * *c).sum()
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
