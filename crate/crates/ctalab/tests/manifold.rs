use ctalab::manifold::{
    conformal_reduce, conformal_reduce_on, parallel_frame, trace_geodesic, trace_geodesic_with, ConformalFactor, CtaChart,
    FermiChart, Geometry, TraceOptions,
};
use ctalab::potential::{Field, PotentialSeries};
use ctalab::{Error, C64};
use proptest::prelude::*;

fn chart(n: usize, geometry: Geometry) -> CtaChart {
    CtaChart::new(n, [-0.5, 0.5], geometry).unwrap()
}

fn unit_dir(geo: &Geometry, x: &[f64], v: &[f64]) -> Vec<f64> {
    let n = geo.norm2(x, v).sqrt();
    v.iter().map(|c| c / n).collect()
}

#[test]
fn flat_chord_through_center() {
    let c = chart(3, Geometry::flat_disk());
    let p = trace_geodesic(&c, &[0.0, 0.0], &[1.0, 0.0], 1e-3).unwrap();
    assert!((p.tau_plus - 1.0).abs() < 1e-6, "{}", p.tau_plus);
    assert!((p.tau_minus + 1.0).abs() < 1e-6);
    for (t, x) in p.times.iter().zip(&p.pos) {
        assert!((x[0] - t).abs() < 1e-12 && x[1].abs() < 1e-15);
    }
    assert!(p.ext_plus >= p.tau_plus + 0.1 - 1e-12 && p.ext_minus <= p.tau_minus - 0.1 + 1e-12);
}

#[test]
fn flat_off_center_chord() {
    let c = chart(3, Geometry::flat_disk());
    let p = trace_geodesic(&c, &[0.5, 0.0], &[0.0, 1.0], 1e-3).unwrap();
    assert!((p.tau_plus - 0.75f64.sqrt()).abs() < 1e-6);
}

#[test]
fn flat_exit_symmetry() {
    let c = chart(4, Geometry::flat_disk());
    let x = [0.2, -0.3, 0.1];
    let th = unit_dir(&c.geometry, &x, &[0.3, 0.5, -0.2]);
    let neg: Vec<f64> = th.iter().map(|v| -v).collect();
    let h = 1e-3;
    let a = trace_geodesic(&c, &x, &th, h).unwrap();
    let b = trace_geodesic(&c, &x, &neg, h).unwrap();
    assert!((a.tau_plus + b.tau_minus).abs() < 2.0 * h * h);
    assert!((a.tau_minus + b.tau_plus).abs() < 2.0 * h * h);
}

#[test]
fn rejects_non_unit_direction() {
    let c = chart(3, Geometry::sphere_cap());
    let err = trace_geodesic(&c, &[0.0, 0.0], &[1.0, 0.0], 1e-3).unwrap_err();
    assert!(matches!(err, Error::NonUnitSpeed { .. }));
}

#[test]
fn trapped_geodesic_is_reported() {
    let c = chart(3, Geometry::flat_disk());
    let opts = TraceOptions { arc_cap: 0.5, ..Default::default() };
    let err = trace_geodesic_with(&c, &[0.0, 0.0], &[1.0, 0.0], 1e-2, &opts).unwrap_err();
    assert!(matches!(err, Error::TrappedGeodesic { .. }));
}

/// Great circle `p(t) = cos t p0 + sin t u0` on the unit sphere; chart `x = (p1, p2) / (1 + p3)`.
fn sphere_exit_oracle(x: &[f64], v: &[f64], cap: f64) -> (f64, f64) {
    let r2 = x[0] * x[0] + x[1] * x[1];
    let p0 = [2.0 * x[0] / (1.0 + r2), 2.0 * x[1] / (1.0 + r2), (1.0 - r2) / (1.0 + r2)];
    // differential of the inverse stereographic map
    let mut u0 = [0.0; 3];
    for j in 0..2 {
        let mut dp = [0.0; 3];
        for i in 0..2 {
            let delta = if i == j { 1.0 } else { 0.0 };
            dp[i] = 2.0 * delta / (1.0 + r2) - 4.0 * x[i] * x[j] / (1.0 + r2).powi(2);
        }
        dp[2] = -4.0 * x[j] / (1.0 + r2).powi(2);
        for k in 0..3 {
            u0[k] += dp[k] * v[j];
        }
    }
    // p3(t) = a cos t + b sin t = R cos(t - psi) reaches cos(cap)
    let (a, b) = (p0[2], u0[2]);
    let rr = (a * a + b * b).sqrt();
    let psi = b.atan2(a);
    let w = (cap.cos() / rr).acos();
    (psi - w, psi + w)
}

#[test]
fn sphere_exit_times_match_great_circles() {
    let cap = 1.2;
    let c = chart(3, Geometry::SphereCap { cap_angle: cap });
    for (x, dir) in [([0.0, 0.0], [1.0, 0.0]), ([0.2, 0.1], [0.3, 1.0]), ([-0.3, 0.25], [1.0, -0.4])] {
        let th = unit_dir(&c.geometry, &x, &dir);
        let p = trace_geodesic(&c, &x, &th, 1e-3).unwrap();
        let (tm, tp) = sphere_exit_oracle(&x, &th, cap);
        assert!((p.tau_minus - tm).abs() < 1e-8, "{} {}", p.tau_minus, tm);
        assert!((p.tau_plus - tp).abs() < 1e-8, "{} {}", p.tau_plus, tp);
    }
}

#[test]
fn sphere_exit_times_match_fine_step_reference() {
    let c = chart(3, Geometry::sphere_cap());
    let x = [0.15, -0.2];
    let th = unit_dir(&c.geometry, &x, &[0.7, 0.4]);
    let coarse = trace_geodesic(&c, &x, &th, 1e-2).unwrap();
    let fine = trace_geodesic(&c, &x, &th, 1e-4).unwrap();
    assert!((coarse.tau_plus - fine.tau_plus).abs() < 1e-7);
    assert!((coarse.tau_minus - fine.tau_minus).abs() < 1e-7);
}

#[test]
fn unit_speed_on_all_geometries() {
    for geo in [Geometry::flat_disk(), Geometry::sphere_cap(), Geometry::conformal_disk()] {
        for n in [3, 4] {
            let c = chart(n, geo.clone());
            let x: Vec<f64> = (0..n - 1).map(|i| 0.1 * (i as f64 + 1.0)).collect();
            let raw: Vec<f64> = (0..n - 1).map(|i| 1.0 - 0.3 * i as f64).collect();
            let th = unit_dir(&geo, &x, &raw);
            let p = trace_geodesic(&c, &x, &th, 1e-3).unwrap();
            assert!(p.speed_defect() <= 1e-6, "{geo:?} n={n}: {}", p.speed_defect());
            assert!(p.frame_defect() <= 1e-6);
            assert!(p.tau_minus < 0.0 && p.tau_plus > 0.0);
        }
    }
}

#[test]
fn flat_frame_is_constant() {
    let c = chart(4, Geometry::flat_disk());
    let p = trace_geodesic(&c, &[0.1, 0.0, 0.2], &[0.0, 1.0, 0.0], 1e-2).unwrap();
    let e0 = p.frame[p.index_of_zero()].clone();
    for fr in &p.frame {
        for (a, b) in fr.iter().zip(&e0) {
            for (u, v) in a.iter().zip(b) {
                assert!((u - v).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn conformal_frame_matches_fine_resolution() {
    let c = chart(4, Geometry::conformal_disk());
    let x = [0.1, -0.2, 0.05];
    let th = unit_dir(&c.geometry, &x, &[1.0, 0.3, -0.2]);
    let coarse = trace_geodesic(&c, &x, &th, 1e-2).unwrap();
    let fine = trace_geodesic(&c, &x, &th, 1e-3).unwrap();
    let (i0c, i0f) = (coarse.index_of_zero(), fine.index_of_zero());
    let mut worst: f64 = 0.0;
    for k in -50i64..=50 {
        let ic = (i0c as i64 + k) as usize;
        let jf = (i0f as i64 + 10 * k) as usize;
        for (a, b) in coarse.frame[ic].iter().zip(&fine.frame[jf]) {
            for (u, v) in a.iter().zip(b) {
                worst = worst.max((u - v).abs());
            }
        }
    }
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn frame_round_trip() {
    let c = chart(3, Geometry::conformal_disk());
    let x = [0.1, 0.2];
    let th = unit_dir(&c.geometry, &x, &[1.0, -0.5]);
    let p = trace_geodesic(&c, &x, &th, 1e-3).unwrap();
    let j = p.index_of_zero() + 600;
    let back: Vec<f64> = p.vel[j].iter().map(|v| -v).collect();
    let opts = TraceOptions { basis: Some(p.frame[j].clone()), ..Default::default() };
    let q = trace_geodesic_with(&c, &p.pos[j], &back, 1e-3, &opts).unwrap();
    let k = q.index_of_zero() + 600;
    let i0 = p.index_of_zero();
    for (a, b) in q.frame[k].iter().zip(&p.frame[i0]) {
        for (u, v) in a.iter().zip(b) {
            assert!((u - v).abs() < 1e-9);
        }
    }
    // parallel_frame on the same path reproduces the stored frame
    let fr = parallel_frame(&p, &p.frame[i0]).unwrap();
    assert!((fr[j][0][0] - p.frame[j][0][0]).abs() < 1e-14);
}

#[test]
fn degenerate_basis_rejected() {
    let c = chart(4, Geometry::flat_disk());
    let p = trace_geodesic(&c, &[0.0; 3], &[1.0, 0.0, 0.0], 1e-2).unwrap();
    let err = parallel_frame(&p, &[vec![0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap_err();
    assert_eq!(err, Error::DegenerateBasis);
}

#[test]
fn csv_has_expected_columns() {
    let c = chart(4, Geometry::flat_disk());
    let p = trace_geodesic(&c, &[0.0; 3], &[1.0, 0.0, 0.0], 0.1).unwrap();
    let csv = p.to_csv();
    assert!(csv.starts_with("t,x1,x2,x3,v1,v2,v3\n"));
    assert_eq!(csv.lines().count(), p.len() + 1);
}

#[test]
fn fermi_flat_axis() {
    let c = chart(3, Geometry::flat_disk());
    let p = trace_geodesic(&c, &[0.0, 0.0], &[1.0, 0.0], 1e-2).unwrap();
    let f = FermiChart::new(p, 0.2);
    let y = f.inverse(&[0.3, 0.1]).unwrap();
    assert!((y[0] - 0.3).abs() < 1e-12 && (y[1].abs() - 0.1).abs() < 1e-12);
    let x = f.forward(&[0.3, 0.1]).unwrap();
    assert!((x[0] - 0.3).abs() < 1e-12 && (x[1].abs() - 0.1).abs() < 1e-12);
}

#[test]
fn fermi_on_axis_and_round_trip() {
    let c = chart(4, Geometry::sphere_cap());
    let x = [0.1, 0.0, -0.1];
    let th = unit_dir(&c.geometry, &x, &[0.5, 1.0, 0.2]);
    let p = trace_geodesic(&c, &x, &th, 1e-3).unwrap();
    let f = FermiChart::new(p.clone(), 0.2);
    let j = p.index_of_zero() + 300;
    let y = f.inverse(&p.pos[j]).unwrap();
    assert!((y[0] - p.times[j]).abs() < 1e-10);
    assert!(y[1].abs() < 1e-10 && y[2].abs() < 1e-10);
    for yy in [[0.2, 0.05, -0.1], [-0.4, 0.12, 0.03], [0.0, -0.1, -0.1]] {
        let q = f.forward(&yy).unwrap();
        let back = f.inverse(&q).unwrap();
        for (a, b) in back.iter().zip(&yy) {
            assert!((a - b).abs() < 1e-8);
        }
    }
    assert!(matches!(f.forward(&[0.0, 0.3, 0.0]), Err(Error::OutsideTube { .. })));
}

#[test]
fn fermi_axis_normalization() {
    for geo in [Geometry::sphere_cap(), Geometry::conformal_disk()] {
        let c = chart(3, geo.clone());
        let x = [0.05, 0.1];
        let th = unit_dir(&geo, &x, &[1.0, 0.2]);
        let p = trace_geodesic(&c, &x, &th, 1e-3).unwrap();
        let f = FermiChart::new(p, 0.2);
        for y1 in [-0.4, 0.0, 0.35] {
            let (dev, ddev) = f.axis_defect(y1, 1e-4).unwrap();
            assert!(dev <= 1e-6, "{geo:?}: {dev}");
            assert!(ddev <= 1e-4, "{geo:?}: {ddev}");
        }
    }
}

fn gaussian_field(a: f64, cx: [f64; 3]) -> Field {
    Field::new(move |x| {
        let r2: f64 = x.iter().zip(&cx).map(|(u, v)| (u - v) * (u - v)).sum();
        C64::new(a * (-r2).exp(), 0.3 * a * x[0])
    })
}

#[test]
fn reduction_with_unit_factor_is_identity() {
    let v = PotentialSeries::new(3, vec![gaussian_field(1.0, [0.0; 3]), gaussian_field(-2.0, [0.1, 0.2, 0.0])]);
    let r = conformal_reduce(&v, &ConformalFactor::Unit, &Geometry::sphere_cap()).unwrap();
    let x = [0.1, 0.2, -0.3];
    for k in 1..=2 {
        assert_eq!(r.coeff(k).eval(&x), v.coeff(k).eval(&x));
    }
}

#[test]
fn reduction_with_constant_factor() {
    let c0: f64 = 1.7;
    for n in [3usize, 4] {
        let v = PotentialSeries::new(n, vec![Field::constant(C64::new(0.5, 0.0)), Field::constant(C64::new(2.0, 1.0)), Field::constant(C64::new(1.0, 0.0))]);
        let r = conformal_reduce(&v, &ConformalFactor::Constant { value: c0 }, &Geometry::flat_disk()).unwrap();
        let x = vec![0.0; n];
        for k in 1..=3 {
            let p = (n as f64 + 2.0) / 4.0 - k as f64 * (n as f64 - 2.0) / 4.0;
            let want = v.coeff(k).eval(&x) * c0.powf(p);
            assert!((r.coeff(k).eval(&x) - want).norm() < 1e-14);
        }
    }
}

/// `w^{-1} Delta w` for `w = c^{(n-2)/4}` on `dx0^2 + e^{2 phi} delta` from nested central differences.
fn fd_potential(c: &ConformalFactor, geo: &Geometry, x: &[f64]) -> f64 {
    let n = x.len();
    let beta = (n as f64 - 2.0) / 4.0;
    let h = 1e-3;
    let w = |y: &[f64]| c.value(y).powf(beta);
    let weight = |y: &[f64]| geo.conformal_weight(&y[1..]).powf((n as f64 - 1.0) / 2.0);
    let mut lap = 0.0;
    for i in 0..n {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += 0.5 * h;
        xm[i] -= 0.5 * h;
        let flux = |y: &[f64]| {
            let mut yp = y.to_vec();
            let mut ym = y.to_vec();
            yp[i] += 0.5 * h;
            ym[i] -= 0.5 * h;
            let gi = if i == 0 { 1.0 } else { 1.0 / geo.conformal_weight(&y[1..]) };
            weight(y) * gi * (w(&yp) - w(&ym)) / h
        };
        lap += (flux(&xp) - flux(&xm)) / h;
    }
    lap / weight(x) / w(x)
}

#[test]
fn radial_reduction_matches_finite_difference_laplacian() {
    let c = ConformalFactor::Gaussian { amplitude: 0.4, width: 0.7, center: vec![] };
    let geo = Geometry::conformal_disk();
    let v = PotentialSeries::new(3, vec![Field::zero(), Field::constant(C64::new(2.0, 0.0))]);
    let r = conformal_reduce(&v, &c, &geo).unwrap();
    for x in [[0.1, 0.2, -0.1], [-0.3, 0.05, 0.4], [0.0, 0.0, 0.0]] {
        let q = fd_potential(&c, &geo, &x);
        assert!((r.coeff(1).eval(&x).re - q).abs() < 1e-5, "{} {}", r.coeff(1).eval(&x).re, q);
        let want2 = 2.0 * c.value(&x).powf(5.0 / 4.0 - 0.5);
        assert!((r.coeff(2).eval(&x).re - want2).abs() < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn reduce_then_undo_recovers_coefficients(
        amp in -0.5f64..1.0,
        width in 0.3f64..1.2,
        n in 3usize..5,
        x0 in -0.5f64..0.5,
        x1 in -0.6f64..0.6,
        x2 in -0.6f64..0.6,
        x3 in -0.6f64..0.6,
    ) {
        let c = ConformalFactor::Gaussian { amplitude: amp, width, center: vec![0.1, -0.1, 0.0, 0.2] };
        let inv = ConformalFactor::Reciprocal { of: Box::new(c.clone()) };
        let geo = Geometry::sphere_cap();
        let v = PotentialSeries::new(n, vec![gaussian_field(1.0, [0.0; 3]), gaussian_field(0.7, [0.2, 0.0, 0.1]), gaussian_field(-1.3, [0.0, 0.3, 0.0])]);
        let r = conformal_reduce(&v, &c, &geo).unwrap();
        let back = conformal_reduce_on(&r, &inv, &c, &geo).unwrap();
        let x = [x0, x1, x2, x3];
        let x = &x[..n];
        for k in 1..=3 {
            let (a, b) = (back.coeff(k).eval(x), v.coeff(k).eval(x));
            prop_assert!((a - b).norm() <= 1e-8 * b.norm().max(1.0), "k={} {} {}", k, a, b);
        }
    }
}
