use ctalab::jacobi::{curvature_along, solve_jacobi, CMat, CurvaturePath, JacobiPair};
use ctalab::manifold::{trace_geodesic, trace_geodesic_with, CtaChart, Geometry, TraceOptions};
use ctalab::quad::gauss_legendre_on;
use ctalab::raytransform::*;
use ctalab::{Error, C64};
use proptest::prelude::*;

const H: f64 = 1e-3;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Straight chord through the center of the flat unit disk, `[tau_-, tau_+] = [-1, 1]`.
fn flat(n: usize, margin: f64) -> (ctalab::manifold::GeodesicPath, CurvaturePath) {
    let ch = CtaChart::new(n, [-0.5, 0.5], Geometry::flat_disk()).unwrap();
    let mut x = vec![0.0; n - 1];
    x[0] = 0.0;
    let mut th = vec![0.0; n - 1];
    th[0] = 1.0;
    let opts = TraceOptions { margin, ..Default::default() };
    let p = trace_geodesic_with(&ch, &x, &th, H, &opts).unwrap();
    let k = curvature_along(&p, &ch).unwrap();
    (p, k)
}

fn curved(n: usize, geometry: Geometry) -> (ctalab::manifold::GeodesicPath, CurvaturePath) {
    let ch = CtaChart::new(n, [-0.5, 0.5], geometry).unwrap();
    let x: Vec<f64> = (0..n - 1).map(|i| 0.05 * (i + 1) as f64).collect();
    let dir: Vec<f64> = (0..n - 1).map(|i| 1.0 - 0.3 * i as f64).collect();
    let nrm = ch.geometry.norm2(&x, &dir).sqrt();
    let th: Vec<f64> = dir.iter().map(|v| v / nrm).collect();
    let p = trace_geodesic(&ch, &x, &th, H).unwrap();
    let k = curvature_along(&p, &ch).unwrap();
    (p, k)
}

/// Composite Gauss-Legendre on a mesh graded towards `t = 0`.
fn graded_quad(g: impl Fn(f64) -> C64, a: f64, b: f64, eps: f64) -> C64 {
    let mut pts = vec![0.0];
    let mut w = eps.min(1e-3) / 4.0;
    while w < b.max(-a) {
        pts.push(w);
        pts.insert(0, -w);
        w *= 1.5;
    }
    pts.retain(|&t| t > a && t < b);
    pts.insert(0, a);
    pts.push(b);
    let mut acc = c(0.0, 0.0);
    for s in pts.windows(2) {
        let (x, wq) = gauss_legendre_on(20, s[0], s[1]);
        for (t, wt) in x.iter().zip(&wq) {
            acc += g(*t) * *wt;
        }
    }
    acc
}

#[test]
fn normalization_closed_forms() {
    let v = normalization_integral(1.0, 0.1, 4).unwrap();
    assert!((v - 29.422553486074).abs() < 1e-9, "{v}");
    let v3 = normalization_integral(1.0, 1e-3, 3).unwrap();
    assert!((v3 - 2.0 * (1000.0 + 1_000_001f64.sqrt()).ln()).abs() < 1e-9, "{v3}");
    assert!((v3 - 15.2018).abs() < 1e-4);
    for (n, e) in [(3, 0.05), (4, 0.02)] {
        let q = graded_quad(|t| c(c(t, -e).norm().powi(-(n as i32 - 2)), 0.0), -0.7, 0.7, e);
        assert!((q.re - normalization_integral(0.7, e, n).unwrap()).abs() < 1e-10);
    }
    assert!(normalization_integral(0.1, 0.2, 3).is_err());
    assert!(normalization_integral(1.0, 0.1, 5).is_err());
}

#[test]
fn normalization_grows_like_pi_over_eps() {
    for e in [1e-2, 1e-3, 1e-4] {
        let v = normalization_integral(1.0, e, 4).unwrap();
        assert!((v * e / std::f64::consts::PI - 1.0).abs() < 1.0 * e, "{e}: {v}");
    }
}

#[test]
fn oscillatory_integral_tends_to_pi() {
    let e = 1e-4;
    let q = graded_quad(|t| c((1.0 / c(t, -e)).im, 0.0), -0.5, 0.5, e);
    assert!((q.re - oscillatory_integral(0.5, e)).abs() < 1e-9);
    assert!((oscillatory_integral(0.5, e) - std::f64::consts::PI).abs() < 5.0 * e);
}

#[test]
fn zero_input_gives_zero() {
    let (p, k) = flat(4, 0.1);
    let pair = JacobiPair::new(&k, 0.0).unwrap();
    let f = GeodesicSample::from_time_fn(&p, |_| c(0.0, 0.0));
    let y = pair.family(0.1).unwrap();
    assert_eq!(j1_forward(&f, &y).unwrap(), c(0.0, 0.0));
    assert_eq!(j2_forward(&f, &y).unwrap(), c(0.0, 0.0));
}

#[test]
fn flat_j1_matches_antiderivative() {
    // det Y = (t - i eps)^{n-2}; the branch principal at t = -1 continues to
    // -(t - i eps) for n = 4 and to the principal root for n = 3
    let (p4, k4) = flat(4, 0.1);
    let (p3, k3) = flat(3, 0.1);
    let pair4 = JacobiPair::new(&k4, 0.0).unwrap();
    let pair3 = JacobiPair::new(&k3, 0.0).unwrap();
    for eps in [1.0, 0.1, 1e-3] {
        let f4 = GeodesicSample::from_time_fn(&p4, |_| c(1.0, 0.0));
        let j4 = j1_forward(&f4, &pair4.family(eps).unwrap()).unwrap();
        let oracle4 = -((c(1.0, -eps)).ln() - c(-1.0, -eps).ln());
        assert!((j4 - oracle4).norm() < 1e-10, "n=4 eps={eps}: {j4} vs {oracle4}");
        let f3 = GeodesicSample::from_time_fn(&p3, |_| c(1.0, 0.0));
        let j3 = j1_forward(&f3, &pair3.family(eps).unwrap()).unwrap();
        let oracle3 = 2.0 * (c(1.0, -eps).sqrt() - c(-1.0, -eps).sqrt());
        assert!((j3 - oracle3).norm() < 1e-10, "n=3 eps={eps}: {j3} vs {oracle3}");
    }
    let f4 = GeodesicSample::from_time_fn(&p4, |_| c(1.0, 0.0));
    let j = j1_forward(&f4, &pair4.family(1.0).unwrap()).unwrap();
    assert!((j - c(0.0, -std::f64::consts::FRAC_PI_2)).norm() < 1e-10);
}

#[test]
fn flat_j2_closed_form_and_split() {
    let (p, k) = flat(4, 0.1);
    let pair = JacobiPair::new(&k, 0.0).unwrap();
    let f = GeodesicSample::from_time_fn(&p, |_| c(1.0, 0.0));
    let y = pair.family(0.1).unwrap();
    let j = j2_forward(&f, &y).unwrap();
    assert!((j.re - 29.422553486074).abs() < 1e-9 && j.im.abs() < 1e-12, "{j}");
    let zeta = 0.3;
    let (inner, outer) = j2_forward_parts(&f, &y, zeta).unwrap();
    assert!((inner.re - normalization_integral(zeta, 0.1, 4).unwrap()).abs() < 1e-9);
    let tail = 2.0 * 10.0 * ((1.0f64 / 0.1).atan() - (zeta / 0.1).atan());
    assert!((outer.re - tail).abs() < 1e-9);
}

#[test]
fn sphere_transforms_match_quadrature_oracle() {
    // on S^n the eps family is (sin t - i eps cos t) I, principal root continuous for |t| < pi/2
    for n in [3usize, 4] {
        let (p, k) = curved(n, Geometry::sphere_cap());
        assert!(p.tau_plus < 1.5 && p.tau_minus > -1.5);
        let pair = JacobiPair::new(&k, 0.0).unwrap();
        let m = (n - 2) as f64;
        let f_t = |t: f64| c(t.cos() + 0.3 * t, 0.2 * t * t);
        let f = GeodesicSample::from_time_fn(&p, f_t);
        for eps in [0.3, 0.05] {
            let y = pair.family(eps).unwrap();
            let d = |t: f64| c(t.sin(), -eps * t.cos());
            // n = 4: the root of d^2 continuous from the principal value at tau_- is s d
            let s = if n == 4 { (d(p.tau_minus) * d(p.tau_minus)).sqrt() / d(p.tau_minus) } else { c(1.0, 0.0) };
            let root = |t: f64| if n == 4 { s * d(t) } else { d(t).sqrt() };
            let o1 = graded_quad(|t| f_t(t) / root(t), p.tau_minus, p.tau_plus, eps);
            let o2 = graded_quad(|t| f_t(t) / d(t).norm().powf(m), p.tau_minus, p.tau_plus, eps);
            let j1 = j1_forward(&f, &y).unwrap();
            let j2 = j2_forward(&f, &y).unwrap();
            assert!((j1 - o1).norm() < 1e-9 * o1.norm().max(1.0), "n={n} eps={eps}: {j1} vs {o1}");
            assert!((j2 - o2).norm() < 1e-9 * o2.norm().max(1.0), "n={n} eps={eps}: {j2} vs {o2}");
        }
    }
}

#[test]
fn forward_transforms_are_linear() {
    let (p, k) = curved(4, Geometry::conformal_disk());
    let pair = JacobiPair::new(&k, 0.0).unwrap();
    let f = GeodesicSample::from_time_fn(&p, |t| c((2.0 * t).sin(), 0.5));
    let g = GeodesicSample::from_time_fn(&p, |t| c(1.0 + t * t, -t));
    let (a, b) = (c(0.7, -1.3), c(-2.0, 0.4));
    let fg = f.scaled_sum(a, &g, b);
    for eps in [0.5, 0.01] {
        let y = pair.family(eps).unwrap();
        for fwd in [j1_forward, j2_forward] {
            let lhs = fwd(&fg, &y).unwrap();
            let rhs = a * fwd(&f, &y).unwrap() + b * fwd(&g, &y).unwrap();
            assert!((lhs - rhs).norm() <= 1e-12 * rhs.norm().max(1.0), "{lhs} vs {rhs}");
        }
    }
}

#[test]
fn conjugate_point_in_window_is_rejected() {
    let (p, k) = flat(3, 0.1);
    let y = solve_jacobi(&k, 0.0, &CMat::zeros(1, 1), &CMat::identity(1, 1), false).unwrap();
    let f = GeodesicSample::from_time_fn(&p, |_| c(1.0, 0.0));
    assert!(matches!(j1_forward(&f, &y), Err(Error::BranchAmbiguity { .. })));
    assert!(matches!(j2_forward(&f, &y), Err(Error::BranchAmbiguity { .. })));
}

#[test]
fn curve_csv_layout() {
    let (p, k) = flat(3, 0.1);
    let oracle = ForwardOracle::new(GeodesicSample::from_time_fn(&p, |_| c(1.0, 0.0)), JacobiPair::new(&k, 0.0).unwrap());
    let curve = oracle.curve(TransformKind::Second, &[0.1, 0.01], Some(0.5)).unwrap();
    let csv = curve.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "eps,J_re,J_im");
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[1].split(',').count(), 3);
}

#[test]
fn j2_inversion_constant_is_exact() {
    let (p, k) = flat(4, 0.1);
    let oracle = ForwardOracle::new(GeodesicSample::from_time_fn(&p, |_| c(2.5, 0.0)), JacobiPair::new(&k, 0.0).unwrap());
    let r = oracle.invert_j2(&LimitConfig::default()).unwrap();
    assert!((r.estimate - c(2.5, 0.0)).norm() < 1e-4, "{:?}", r.estimate);
}

#[test]
fn j2_inversion_flat_cos() {
    let (p, k) = flat(4, 0.1);
    let oracle = ForwardOracle::new(GeodesicSample::from_time_fn(&p, |t| c(t.cos(), 0.0)), JacobiPair::new(&k, 0.0).unwrap());
    let r = oracle.invert_j2(&LimitConfig::default()).unwrap();
    assert!((r.estimate - c(1.0, 0.0)).norm() < 0.02, "{:?}", r.estimate);
    assert_eq!(r.per_zeta.len(), 3);
    let json = serde_json::to_value(&r).unwrap();
    for key in ["estimate", "error_bound", "eps_grid", "zeta"] {
        assert!(json.get(key).is_some(), "{key}");
    }
}

#[test]
fn j2_inversion_curved_fields() {
    for (n, geo) in [(3, Geometry::sphere_cap()), (4, Geometry::sphere_cap()), (3, Geometry::conformal_disk()), (4, Geometry::conformal_disk())] {
        let (p, k) = curved(n, geo);
        let field = |x: &[f64]| c((-(x[0] - 0.1).powi(2) - 2.0 * x[1].powi(2)).exp(), 0.0);
        let truth = field(&p.pos[p.index_of_zero()]);
        let oracle = ForwardOracle::new(GeodesicSample::from_field(&p, field), JacobiPair::new(&k, 0.0).unwrap());
        let r = oracle.invert_j2(&LimitConfig::default()).unwrap();
        assert!((r.estimate - truth).norm() < 0.02 * truth.norm(), "n={n}: {} vs {truth}", r.estimate);
    }
}

#[test]
fn j2_tail_converges_as_eps_shrinks() {
    // B = J2 - f(p) N stays bounded and settles as eps -> 0
    let (p, k) = flat(3, 0.1);
    let pair = JacobiPair::new(&k, 0.0).unwrap();
    let f = GeodesicSample::from_time_fn(&p, |t| c(1.0 + t * t, 0.0));
    let zeta = 0.2;
    let b: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&e| j2_forward(&f, &pair.family(e).unwrap()).unwrap().re - normalization_integral(zeta, e, 3).unwrap())
        .collect();
    assert!((b[2] - b[1]).abs() < 0.2 * (b[1] - b[0]).abs() + 1e-6, "{b:?}");
}

#[test]
fn j1_split_flat_quadratic() {
    let (p, k) = flat(4, 0.1);
    let oracle = ForwardOracle::new(GeodesicSample::from_time_fn(&p, |t| c(1.0 + t * t, 0.0)), JacobiPair::new(&k, 0.0).unwrap());
    let r = oracle.invert_j1_split(&LimitConfig::default()).unwrap();
    assert!((r.estimate.re - 1.0).abs() < 0.03 && r.estimate.im.abs() < 1e-9, "{:?}", r.estimate);
}

#[test]
fn j1_split_constant_and_curved() {
    let (p, k) = flat(4, 0.1);
    let oracle = ForwardOracle::new(GeodesicSample::from_time_fn(&p, |_| c(-1.5, 0.0)), JacobiPair::new(&k, 0.0).unwrap());
    let r = oracle.invert_j1_split(&LimitConfig::default()).unwrap();
    assert!((r.estimate.re + 1.5).abs() < 0.01, "{:?}", r.estimate);
    for geo in [Geometry::sphere_cap(), Geometry::conformal_disk()] {
        let (p, k) = curved(4, geo);
        let field = |x: &[f64]| c(1.0 + x[0] - x[1] * x[2], 0.0);
        let truth = field(&p.pos[p.index_of_zero()]).re;
        let oracle = ForwardOracle::new(GeodesicSample::from_field(&p, field), JacobiPair::new(&k, 0.0).unwrap());
        let r = oracle.invert_j1_split(&LimitConfig::default()).unwrap();
        assert!((r.estimate.re - truth).abs() < 0.03 * truth.abs(), "{} vs {truth}", r.estimate);
    }
}

#[test]
fn j1_split_rejects_complex_input() {
    let (p, k) = flat(4, 0.1);
    let oracle = ForwardOracle::new(GeodesicSample::from_time_fn(&p, |t| c(1.0, 1e-6 * t)), JacobiPair::new(&k, 0.0).unwrap());
    assert!(matches!(oracle.invert_j1_split(&LimitConfig::default()), Err(Error::NonRealInput { .. })));
}

#[test]
fn j1_tail_decays_linearly() {
    for geo in [Geometry::flat_disk(), Geometry::sphere_cap(), Geometry::conformal_disk()] {
        let (p, k) = curved(4, geo);
        let pair = JacobiPair::new(&k, 0.0).unwrap();
        let f = GeodesicSample::from_time_fn(&p, |t| c(1.0 + 0.5 * t, 0.0));
        let zeta = 0.2;
        let eps = [4e-3, 2e-3, 1e-3, 5e-4];
        let a3: Vec<f64> = eps
            .iter()
            .map(|&e| {
                let (_, outer) = j1_forward_parts(&f, &pair.family(e).unwrap(), zeta).unwrap();
                (outer - outer.conj()).norm()
            })
            .collect();
        let lx: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
        let ly: Vec<f64> = a3.iter().map(|a| a.ln()).collect();
        let mx = lx.iter().sum::<f64>() / 4.0;
        let my = ly.iter().sum::<f64>() / 4.0;
        let slope = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert!((0.8..=1.2).contains(&slope), "slope {slope}");
    }
}

fn moment_setup(f_t: impl Fn(f64) -> C64) -> (ForwardOracle, ctalab::manifold::GeodesicPath) {
    let (p, k) = flat(3, 1.0);
    let pair = JacobiPair::new(&k, p.tau_minus - 1.0).unwrap();
    (ForwardOracle::new(GeodesicSample::from_time_fn(&p, f_t), pair), p)
}

fn rel_l2(est: &GeodesicSample, truth: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (x, w) = gauss_legendre_on(100, a + 1e-9, b - 1e-9);
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, wt) in x.iter().zip(&w) {
        num += (est.at(*t).re - truth(*t)).powi(2) * wt;
        den += truth(*t).powi(2) * wt;
    }
    (num / den).sqrt()
}

#[test]
fn moment_route_gaussian() {
    let (oracle, p) = moment_setup(|t| c((-t * t).exp(), 0.0));
    let r = oracle.invert_moments(&MomentConfig::default()).unwrap();
    let err = rel_l2(&r.f, |t| (-t * t).exp(), p.tau_minus, p.tau_plus);
    println!("L2 {err:.3e} cond {:.2e} residual {:.2e}", r.condition, r.data_residual);
    assert!(err <= 0.05, "L2 error {err}");
    // low-order moments of the Taylor fit against direct quadrature
    let direct = direct_moments(&oracle.f, &oracle.pair, 8);
    for k in 0..=4 {
        assert!((r.moments[k] - direct[k]).abs() < 1e-5 * direct[0], "k={k}: {} vs {}", r.moments[k], direct[k]);
    }
    // the reconstruction reproduces the moments it was fitted to
    for k in 0..=8 {
        assert!((r.refit_moments[k] - direct[k]).abs() < 1e-2 * direct[0], "k={k}: {} vs {}", r.refit_moments[k], direct[k]);
    }
    assert!(r.data_residual < 1e-6);
}

#[test]
fn moment_route_curved_geometry() {
    // on the sphere the anchor must stay within pi of tau_+
    for (geo, margin, x, dir) in [
        (Geometry::conformal_disk(), 1.0, [0.3, 0.1], [0.6, 1.0]),
        (Geometry::sphere_cap(), 0.6, [0.0, 0.5], [1.0, 0.0]),
    ] {
        let ch = CtaChart::new(3, [-0.5, 0.5], geo).unwrap();
        let nrm = ch.geometry.norm2(&x, &dir).sqrt();
        let th = [dir[0] / nrm, dir[1] / nrm];
        let opts = TraceOptions { margin, ..Default::default() };
        let p = trace_geodesic_with(&ch, &x, &th, H, &opts).unwrap();
        let k = curvature_along(&p, &ch).unwrap();
        let pair = JacobiPair::new(&k, p.tau_minus - margin).unwrap();
        let field = |y: &[f64]| c(1.0 + 0.5 * (2.0 * y[0]).sin() * y[1], 0.0);
        let truth: Vec<f64> = p.pos.iter().map(|y| field(y).re).collect();
        let oracle = ForwardOracle::new(GeodesicSample::from_field(&p, field), pair);
        let r = oracle.invert_moments(&MomentConfig::default()).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for i in oracle.pair.x.window(p.tau_minus, p.tau_plus) {
            num += (r.f.values[i].re - truth[i]).powi(2);
            den += truth[i].powi(2);
        }
        let err = (num / den).sqrt();
        assert!(err <= 0.05, "margin {margin}: L2 error {err}");
    }
}

#[test]
fn moment_route_zero_input() {
    let (oracle, _) = moment_setup(|_| c(0.0, 0.0));
    let r = oracle.invert_moments(&MomentConfig::default()).unwrap();
    assert!(r.moments.iter().all(|m| m.abs() < 1e-14));
    assert!(r.f.values.iter().all(|v| v.norm() < 1e-12));
}

#[test]
fn flat_x_tilde_is_reciprocal() {
    let (p, k) = flat(3, 1.0);
    let anchor = p.tau_minus - 1.0;
    let pair = JacobiPair::new(&k, anchor).unwrap();
    let w = pair.wronskian();
    for i in pair.x.window(p.tau_minus, p.tau_plus) {
        let t = pair.x.times[i];
        let xt = pair.z.y[i][(0, 0)].re / pair.x.y[i][(0, 0)].re;
        assert!((xt - 1.0 / (t - anchor)).abs() < 1e-10);
        assert!((w[i] + 1.0).abs() < 1e-10);
    }
}

#[test]
fn moment_route_rejects_conjugate_anchor() {
    let (p, k) = flat(3, 1.0);
    let pair = JacobiPair::new(&k, 0.0).unwrap();
    let oracle = ForwardOracle::new(GeodesicSample::from_time_fn(&p, |_| c(1.0, 0.0)), pair);
    assert!(oracle.invert_moments(&MomentConfig::default()).is_err());
}

#[test]
fn moment_route_condition_cap() {
    let (oracle, _) = moment_setup(|t| c((-t * t).exp(), 0.0));
    let cfg = MomentConfig { cond_cap: 10.0, ..Default::default() };
    assert!(matches!(oracle.invert_moments(&cfg), Err(Error::IllConditioned { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn j2_of_positive_input_is_positive(a in 0.1f64..2.0, b in -1.0f64..1.0, eps in 0.01f64..1.0) {
        let (p, k) = flat(3, 0.1);
        let pair = JacobiPair::new(&k, 0.0).unwrap();
        let f = GeodesicSample::from_time_fn(&p, |t| c(a + 0.5 * a * (b * t).sin(), 0.0));
        let j = j2_forward(&f, &pair.family(eps).unwrap()).unwrap();
        prop_assert!(j.re > 0.0 && j.im.abs() < 1e-12);
    }

    #[test]
    fn j1_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, w in 0.5f64..4.0, eps in 0.01f64..1.0) {
        let (p, k) = flat(4, 0.1);
        let pair = JacobiPair::new(&k, 0.0).unwrap();
        let f = GeodesicSample::from_time_fn(&p, |t| c((w * t).cos(), 0.0));
        let g = GeodesicSample::from_time_fn(&p, |t| c(t, 1.0));
        let y = pair.family(eps).unwrap();
        let lhs = j1_forward(&f.scaled_sum(c(a, 0.0), &g, c(b, 0.0)), &y).unwrap();
        let rhs = a * j1_forward(&f, &y).unwrap() + b * j1_forward(&g, &y).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-12 * rhs.norm().max(1.0));
    }
}

