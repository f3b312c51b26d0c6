use ctalab::pde::*;
use ctalab::potential::{Field, PotentialSeries};
use ctalab::{Error, C64};
use proptest::prelude::*;
use std::f64::consts::PI;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn sup(u: &[C64]) -> f64 {
    u.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn square(cells: usize) -> DiscreteDomain {
    DiscreteDomain::unit_cube(2, cells).unwrap()
}

/// Smooth complex potential used where a variable `V1` is needed.
fn v1_field() -> Field {
    Field::new(|x: &[f64]| c(1.5 * (-((x[0] - 0.4).powi(2) + (x[1] - 0.6).powi(2)) / 0.08).exp(), 0.3 * x[0]))
}

fn quadratic_series(n: usize, v1: Field) -> PotentialSeries {
    let v2 = Field::new(|x: &[f64]| c(2.0 + x[0], 0.5 * x[1]));
    PotentialSeries::new(n, vec![v1, v2])
}

fn cubic_series(v1: Field) -> PotentialSeries {
    let v2 = Field::new(|x: &[f64]| c(1.0 + x[1], 0.0));
    let v3 = Field::new(|x: &[f64]| c(3.0 * (PI * x[0]).cos(), 1.0));
    PotentialSeries::new(2, vec![v1, v2, v3])
}

fn edge_datum(x: &[f64]) -> C64 {
    if (x[1] - 1.0).abs() < 1e-12 {
        c((PI * x[0]).sin(), 0.0)
    } else {
        c(0.0, 0.0)
    }
}

#[test]
fn dirichlet_separation_of_variables() {
    // u = sin(pi x) sinh(pi y) / sinh(pi)
    let exact = |x: &[f64]| (PI * x[0]).sin() * (PI * x[1]).sinh() / PI.sinh();
    let mut errs = Vec::new();
    for cells in [16usize, 32, 64] {
        let d = square(cells);
        let s = DirichletSolver::new(&d, &Field::zero()).unwrap();
        let u = s.green_dirichlet_fn(edge_datum).unwrap();
        let e = (0..d.len()).map(|i| (u[i].re - exact(&d.point(i))).abs()).fold(0.0, f64::max);
        errs.push(e);
    }
    println!("separation errors {errs:?}");
    assert!(errs[2] < 1e-3);
    for w in errs.windows(2) {
        assert!((w[0] / w[1] - 4.0).abs() < 0.4);
    }
}

#[test]
fn dn_map_closed_form_far_edge() {
    // outward normal on y = 0 is -d_y: Lambda f = -pi sin(pi x) / sinh(pi)
    let mut errs = Vec::new();
    for cells in [16usize, 32, 64] {
        let d = square(cells);
        let s = DirichletSolver::new(&d, &Field::zero()).unwrap();
        let series = SeriesGrid::new(&d, &PotentialSeries::new(2, vec![Field::zero()]));
        let f = d.trace_of(edge_datum);
        let rec = dn_map(&s, &series, &f, &SemilinearConfig { r0: 2.0, ..Default::default() }).unwrap();
        let mut worst = 0.0f64;
        for (fp, v) in rec.faces.iter().zip(&rec.dn) {
            if fp.axis == 1 && !fp.upper {
                let x = d.point(fp.node)[0];
                worst = worst.max((v - c(-PI * (PI * x).sin() / PI.sinh(), 0.0)).norm());
            }
        }
        errs.push(worst);
    }
    println!("far-edge DN errors {errs:?}");
    assert!(errs[2] < 1e-3);
    assert!(errs[1] / errs[2] > 3.2);
}

#[test]
fn green_source_manufactured_order_two() {
    // w = sin(pi x) sin(pi y) e^{x}, F = (-Delta + V1) w in closed form
    let v1 = v1_field();
    let w = |x: &[f64]| (PI * x[0]).sin() * (PI * x[1]).sin() * x[0].exp();
    let lap = |x: &[f64]| {
        let (sx, cx, sy) = ((PI * x[0]).sin(), (PI * x[0]).cos(), (PI * x[1]).sin());
        let e = x[0].exp();
        // d_xx (sin(pi x) e^x) = e^x ((1 - pi^2) sin + 2 pi cos)
        e * sy * ((1.0 - PI * PI) * sx + 2.0 * PI * cx) - PI * PI * w(x)
    };
    let mut errs = Vec::new();
    let mut hs = Vec::new();
    for cells in [16usize, 32, 64, 128] {
        let d = square(cells);
        let s = DirichletSolver::new(&d, &v1).unwrap();
        let vv = v1.clone();
        let f = d.sample(|x| -lap(x) + vv.eval(x) * w(x));
        let u = s.green_source(&f).unwrap();
        errs.push((0..d.len()).map(|i| (u[i] - w(&d.point(i))).norm()).fold(0.0, f64::max));
        hs.push(1.0 / cells as f64);
    }
    let order = ctalab::quad::loglog_slope(&hs, &errs);
    println!("manufactured errors {errs:?} order {order:.3}");
    assert!((order - 2.0).abs() <= 0.2);
}

#[test]
fn green_source_inverts_the_discrete_operator() {
    let d = DiscreteDomain::new(vec![-0.25, -0.5, -0.5], vec![0.25, 0.5, 0.5], vec![24, 16, 20]).unwrap();
    let v1 = Field::new(|x: &[f64]| c(2.0 + x[1], -x[0]));
    let s = DirichletSolver::new(&d, &v1).unwrap();
    let w = d.sample(|x| {
        let b = (0..3).map(|a| (x[a] - d.lo[a]) * (d.hi[a] - x[a])).product::<f64>();
        c(b * (1.0 + x[0]), b * x[2])
    });
    let f = s.apply(&w);
    let u = s.green_source(&f).unwrap();
    println!("3-D discrete inverse error {:e}", diff(&u, &w));
    assert!(diff(&u, &w) < 1e-10 * sup(&w));
}

#[test]
fn green_operators_are_linear() {
    let d = square(32);
    let s = DirichletSolver::new(&d, &v1_field()).unwrap();
    let f1 = d.trace_of(|x| c(x[0] * x[1], 1.0));
    let f2 = d.trace_of(|x| c((3.0 * x[0]).cos(), x[1]));
    let (a, b) = (c(0.7, -1.3), c(-2.0, 0.4));
    let comb: Vec<C64> = f1.iter().zip(&f2).map(|(x, y)| a * x + b * y).collect();
    let u = s.green_dirichlet(&comb).unwrap();
    let (u1, u2) = (s.green_dirichlet(&f1).unwrap(), s.green_dirichlet(&f2).unwrap());
    let lin: Vec<C64> = u1.iter().zip(&u2).map(|(x, y)| a * x + b * y).collect();
    assert!(diff(&u, &lin) < 1e-12 * sup(&lin));
    let g1 = d.sample(|x| c(x[0], x[1] * x[1]));
    let g2 = d.sample(|x| c((x[0] + x[1]).sin(), 0.0));
    let gc: Vec<C64> = g1.iter().zip(&g2).map(|(x, y)| a * x + b * y).collect();
    let v = s.green_source(&gc).unwrap();
    let (v1, v2) = (s.green_source(&g1).unwrap(), s.green_source(&g2).unwrap());
    let lin: Vec<C64> = v1.iter().zip(&v2).map(|(x, y)| a * x + b * y).collect();
    assert!(diff(&v, &lin) < 1e-12 * sup(&lin));
}

#[test]
fn dirichlet_eigenvalue_is_rejected() {
    let cells = 16;
    let d = square(cells);
    let h = 1.0 / cells as f64;
    let mu = 2.0 * 4.0 / (h * h) * (0.5 * PI * h).sin().powi(2);
    let err = DirichletSolver::new(&d, &Field::constant(c(-mu, 0.0))).unwrap_err();
    assert!(matches!(err, Error::DirichletEigenvalue { .. }), "{err:?}");
    assert!(DirichletSolver::new(&d, &Field::constant(c(-mu + 1.0, 0.0))).is_ok());
}

#[test]
fn semilinear_trivial_cases() {
    let d = square(32);
    let s = DirichletSolver::new(&d, &v1_field()).unwrap();
    let f = d.trace_of(|x| c(0.1 * x[0], 0.05));
    let lin_series = SeriesGrid::new(&d, &PotentialSeries::new(2, vec![v1_field()]));
    let sol = solve_semilinear(&s, &lin_series, &f, &SemilinearConfig::default()).unwrap();
    assert_eq!(sol.iterations, 1);
    assert_eq!(sol.u, s.green_dirichlet(&f).unwrap());
    let series = SeriesGrid::new(&d, &cubic_series(v1_field()));
    let zero = vec![c(0.0, 0.0); f.len()];
    let z = solve_semilinear(&s, &series, &zero, &SemilinearConfig::default()).unwrap();
    assert!(z.u.iter().all(|v| *v == c(0.0, 0.0)));
    let rec = dn_map(&s, &series, &zero, &SemilinearConfig::default()).unwrap();
    assert!(rec.dn.iter().all(|v| *v == c(0.0, 0.0)));
    let big: Vec<C64> = f.iter().map(|v| v * 100.0).collect();
    assert!(matches!(
        solve_semilinear(&s, &series, &big, &SemilinearConfig::default()),
        Err(Error::SmallDataViolated { .. })
    ));
}

/// `-u'' + u^2 = 0`, `u(0) = a`, `u(1) = b` by RK4 shooting with a secant iteration on `u'(0)`.
fn shooting(a: f64, b: f64, steps: usize) -> impl Fn(f64) -> f64 {
    let run = move |s: f64| -> Vec<f64> {
        let h = 1.0 / steps as f64;
        let f = |y: [f64; 2]| [y[1], y[0] * y[0]];
        let mut y = [a, s];
        let mut out = vec![a];
        for _ in 0..steps {
            let k1 = f(y);
            let k2 = f([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
            let k3 = f([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
            let k4 = f([y[0] + h * k3[0], y[1] + h * k3[1]]);
            for i in 0..2 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            out.push(y[0]);
        }
        out
    };
    let (mut s0, mut s1) = (b - a, b - a + 0.1);
    let (mut r0, mut r1) = (run(s0)[steps] - b, run(s1)[steps] - b);
    for _ in 0..50 {
        if r1.abs() < 1e-15 {
            break;
        }
        let s2 = s1 - r1 * (s1 - s0) / (r1 - r0);
        s0 = s1;
        r0 = r1;
        s1 = s2;
        r1 = run(s1)[steps] - b;
    }
    let path = run(s1);
    move |x: f64| {
        let i = (x * steps as f64).round() as usize;
        path[i]
    }
}

#[test]
fn one_dimensional_quadratic_matches_shooting() {
    let (a, b) = (0.3, 0.1);
    let oracle = shooting(a, b, 32768);
    let d = DiscreteDomain::new(vec![0.0], vec![1.0], vec![4096]).unwrap();
    let s = DirichletSolver::new(&d, &Field::zero()).unwrap();
    let series = SeriesGrid::new(&d, &PotentialSeries::new(1, vec![Field::zero(), Field::constant(c(2.0, 0.0))]));
    let f = vec![c(a, 0.0), c(b, 0.0)];
    let sol = solve_semilinear(&s, &series, &f, &SemilinearConfig::default()).unwrap();
    let err = (0..d.len()).map(|i| (sol.u[i].re - oracle(d.point(i)[0])).abs()).fold(0.0, f64::max);
    println!("shooting error {err:e}, iterations {}, max ratio {:.3}", sol.iterations, sol.max_ratio());
    assert!(err < 1e-8);
    assert!(sol.max_ratio() < 1.0);
}

#[test]
fn green_pairing_of_linear_solutions_is_symmetric() {
    let mut defects = Vec::new();
    for cells in [16usize, 32, 64] {
        let d = square(cells);
        let s = DirichletSolver::new(&d, &v1_field()).unwrap();
        let u1 = s.green_dirichlet_fn(|x| c(1.0 + x[0] * x[1], 0.0)).unwrap();
        let u2 = s.green_dirichlet_fn(|x| c((2.0 * x[0]).cos(), x[1])).unwrap();
        let (d1, d2) = (d.normal_derivative(&u1), d.normal_derivative(&u2));
        let faces = d.face_points();
        let a: Vec<C64> = faces.iter().zip(&d2).map(|(fp, v)| u1[fp.node] * v).collect();
        let b: Vec<C64> = faces.iter().zip(&d1).map(|(fp, v)| u2[fp.node] * v).collect();
        let (ia, ib) = (d.boundary_integrate(&a), d.boundary_integrate(&b));
        defects.push((ia - ib).norm() / ia.norm());
    }
    println!("pairing symmetry defects {defects:?}");
    assert!(defects[2] < 1e-2);
    assert!(defects[1] / defects[2] > 3.0);
}

#[test]
fn picard_contracts_on_shipped_potentials() {
    let d = square(32);
    let shape = d.trace_of(|x| c(1.0 + 0.5 * (PI * x[0]).sin(), 0.3 * x[1]));
    for (name, series) in [("quadratic", quadratic_series(2, v1_field())), ("cubic", cubic_series(Field::zero()))] {
        let s = DirichletSolver::new(&d, &series.coeff(1)).unwrap();
        let grid = SeriesGrid::new(&d, &series);
        let r0 = measure_r0(&s, &grid, &shape, 0.05, 10);
        assert!(r0 > 0.0);
        let cfg = SemilinearConfig { r0, ..Default::default() };
        let mut consts = Vec::new();
        for scale in [0.25, 0.5, 1.0] {
            let unit = sup(&shape);
            let f: Vec<C64> = shape.iter().map(|v| v * (scale * r0 / unit)).collect();
            let sol = solve_semilinear(&s, &grid, &f, &cfg).unwrap();
            assert!(sol.max_ratio() < 1.0, "{name}: ratio {}", sol.max_ratio());
            assert!(sol.residual < 1e-9 * sup(&sol.u).max(1e-300) * 4096.0);
            consts.push(sol.continuity);
        }
        println!("{name}: r0 {r0:.3}, continuity {consts:?}");
        // continuity constant stable under refinement
        let d2 = square(64);
        let s2 = DirichletSolver::new(&d2, &series.coeff(1)).unwrap();
        let g2 = SeriesGrid::new(&d2, &series);
        let shape2 = d2.trace_of(|x| c(1.0 + 0.5 * (PI * x[0]).sin(), 0.3 * x[1]));
        let f2: Vec<C64> = shape2.iter().map(|v| v * (r0 / sup(&shape2))).collect();
        let c2 = solve_semilinear(&s2, &g2, &f2, &cfg).unwrap().continuity;
        assert!((c2 - consts[2]).abs() < 0.01 * consts[2]);
    }
}

#[test]
fn first_order_linearization() {
    let d = square(24);
    let s = DirichletSolver::new(&d, &v1_field()).unwrap();
    let f = d.trace_of(|x| c(1.0 + x[0], -x[1]));
    let gd = s.green_dirichlet(&f).unwrap();
    let cfg = SemilinearConfig { tol: 1e-15, ..Default::default() };
    // linear V: exact up to roundoff
    let lin = SeriesGrid::new(&d, &PotentialSeries::new(2, vec![v1_field()]));
    let u = linearize_divided_difference(&s, &lin, &[f.clone()], &[1], 0.1, false, &cfg).unwrap();
    assert!(diff(&u, &gd) < 1e-12 * sup(&gd));
    // nonlinear V: O(h^2) for the central stencil, and the complex step
    let series = SeriesGrid::new(&d, &cubic_series(v1_field()));
    let mut errs = Vec::new();
    for h in [0.08, 0.04, 0.02] {
        let u = linearize_divided_difference(&s, &series, &[f.clone()], &[1], h, false, &cfg).unwrap();
        errs.push(diff(&u, &gd));
    }
    println!("beta = (1) errors {errs:?}");
    assert!((errs[0] / errs[1] - 4.0).abs() < 0.8 && (errs[1] / errs[2] - 4.0).abs() < 0.8);
    let cs = linearize_complex_step(&s, &series, &f, 0.02, &cfg).unwrap();
    println!("complex step error {:e}", diff(&cs, &gd));
    assert!(diff(&cs, &gd) < 2.0 * errs[2]);
}

/// Errors of the divided difference against the hierarchy for three halvings of the step.
fn cross_errors(series: &PotentialSeries, beta: &[usize], family: &[Vec<C64>], hierarchy_family: &[Vec<C64>], d: &DiscreteDomain, steps: &[f64]) -> Vec<f64> {
    let s = DirichletSolver::new(d, &series.coeff(1)).unwrap();
    let grid = SeriesGrid::new(d, series);
    let hier = direct_hierarchy_solve(&s, &grid, hierarchy_family).unwrap();
    let target: Vec<C64> = hier.l.iter().map(|z| -z).collect();
    let cfg = SemilinearConfig { r0: 2.0, tol: 1e-15, ..Default::default() };
    steps
        .iter()
        .map(|&h| diff(&linearize_divided_difference(&s, &grid, family, beta, h, false, &cfg).unwrap(), &target) / sup(&target))
        .collect()
}

#[test]
fn second_order_cross_validation() {
    let d = square(20);
    let f1 = d.trace_of(|x| c(1.0 + x[0], 0.2));
    let f2 = d.trace_of(|x| c((PI * x[1]).cos(), x[0]));
    let series = quadratic_series(2, v1_field());
    let errs = cross_errors(&series, &[1, 1], &[f1.clone(), f2.clone()], &[f1.clone(), f2.clone()], &d, &[0.2, 0.1, 0.05]);
    println!("beta (1,1) errors {errs:?}");
    for w in errs.windows(2) {
        assert!((w[0] / w[1] - 4.0).abs() <= 0.8);
    }
    // beta = (2) on a single datum is the hierarchy with f1 = f2
    let errs = cross_errors(&series, &[2], &[f1.clone()], &[f1.clone(), f1.clone()], &d, &[0.2, 0.1, 0.05]);
    println!("beta (2) errors {errs:?}");
    for w in errs.windows(2) {
        assert!((w[0] / w[1] - 4.0).abs() <= 0.8);
    }
    let s = DirichletSolver::new(&d, &series.coeff(1)).unwrap();
    let h = direct_hierarchy_solve(&s, &SeriesGrid::new(&d, &series), &[f1, f2]).unwrap();
    assert!(h.h.iter().all(|z| *z == c(0.0, 0.0)));
}

#[test]
fn third_order_cross_validation() {
    let d = square(16);
    let f1 = d.trace_of(|x| c(1.0 + x[0], 0.2));
    let f2 = d.trace_of(|x| c((PI * x[1]).cos(), x[0]));
    let f3 = d.trace_of(|x| c(0.5, x[0] * x[1]));
    // V3 = 0, V2 != 0: L is driven by H alone
    let series = quadratic_series(2, v1_field());
    let s = DirichletSolver::new(&d, &series.coeff(1)).unwrap();
    let grid = SeriesGrid::new(&d, &series);
    let hier = direct_hierarchy_solve(&s, &grid, &[f1.clone(), f2.clone(), f3.clone()]).unwrap();
    assert!(hier.leading.iter().all(|z| *z == c(0.0, 0.0)));
    assert!(sup(&hier.h) > 0.0);
    let errs = cross_errors(&series, &[1, 1, 1], &[f1.clone(), f2.clone(), f3.clone()], &[f1.clone(), f2.clone(), f3.clone()], &d, &[0.2, 0.1, 0.05]);
    println!("beta (1,1,1) errors {errs:?}");
    for w in errs.windows(2) {
        assert!((w[0] / w[1] - 4.0).abs() <= 0.8);
    }
    let cubic = cubic_series(v1_field());
    let errs = cross_errors(&cubic, &[2, 1], &[f1.clone(), f3.clone()], &[f1.clone(), f1.clone(), f3.clone()], &d, &[0.2, 0.1, 0.05]);
    println!("beta (2,1) errors {errs:?}");
    for w in errs.windows(2) {
        assert!((w[0] / w[1] - 4.0).abs() <= 0.8);
    }
    let zero = vec![c(0.0, 0.0); f1.len()];
    let z = direct_hierarchy_solve(&s, &SeriesGrid::new(&d, &cubic), &[zero.clone(), zero.clone(), zero]).unwrap();
    assert!(z.l.iter().all(|v| *v == c(0.0, 0.0)));
}

#[test]
fn dn_divided_differences_determine_normal_derivative_of_l() {
    let d = square(20);
    let series = cubic_series(v1_field());
    let s = DirichletSolver::new(&d, &series.coeff(1)).unwrap();
    let grid = SeriesGrid::new(&d, &series);
    let f1 = d.trace_of(|x| c(1.0 + x[0], 0.2));
    let f2 = d.trace_of(|x| c((PI * x[1]).cos(), x[0]));
    let hier = direct_hierarchy_solve(&s, &grid, &[f1.clone(), f2.clone()]).unwrap();
    let target: Vec<C64> = d.normal_derivative(&hier.l).iter().map(|z| -z).collect();
    let cfg = SemilinearConfig { r0: 2.0, tol: 1e-15, ..Default::default() };
    let family = [f1, f2];
    let mut errs = Vec::new();
    for h in [0.2, 0.1, 0.05] {
        let dn = divided_difference(&[1, 1], h, false, |eps| {
            let f: Vec<C64> = (0..family[0].len()).map(|i| family[0][i] * eps[0] + family[1][i] * eps[1]).collect();
            Ok(dn_map(&s, &grid, &f, &cfg)?.dn)
        })
        .unwrap();
        errs.push(diff(&dn, &target) / sup(&target));
    }
    println!("DN divided-difference errors {errs:?}");
    assert!((errs[0] / errs[1] - 4.0).abs() <= 0.8 && (errs[1] / errs[2] - 4.0).abs() <= 0.8);
}

#[test]
fn greens_pairing_manufactured_pairs() {
    // quadratic pair: w = x^2 - y^2 harmonic, L = x(1-x) y(1-y), rhs = -Delta L; every
    // stencil is exact on it, so the discrete identity holds to roundoff
    let d = square(16);
    let w = d.sample(|x| c(x[0] * x[0] - x[1] * x[1], 0.0));
    let l = d.sample(|x| c(x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]), 0.0));
    let rhs = d.sample(|x| c(2.0 * (x[1] * (1.0 - x[1]) + x[0] * (1.0 - x[0])), 0.0));
    assert!(greens_pairing(&d, &w, &l, &rhs).discrepancy < 1e-13);
    // higher-degree pair: w = x^3 - 3 x y^2, L = x^2 (1-x) y (1-y)
    let mut disc = Vec::new();
    for cells in [16usize, 32, 64] {
        let d = square(cells);
        let w = d.sample(|x| c(x[0].powi(3) - 3.0 * x[0] * x[1] * x[1], 0.0));
        let l = d.sample(|x| c(x[0] * x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]), 0.0));
        // -Delta L = -(2 - 6x) y(1-y) + 2 x^2 (1-x)
        let rhs = d.sample(|x| c(-(2.0 - 6.0 * x[0]) * x[1] * (1.0 - x[1]) + 2.0 * x[0] * x[0] * (1.0 - x[0]), 0.0));
        let rep = greens_pairing(&d, &w, &l, &rhs);
        disc.push(rep.discrepancy);
        let zero = vec![c(0.0, 0.0); d.len()];
        let z = greens_pairing(&d, &zero, &l, &rhs);
        assert_eq!(z.boundary, c(0.0, 0.0));
        assert_eq!(z.volume, c(0.0, 0.0));
    }
    println!("polynomial pairing discrepancies {disc:?}");
    assert!(disc[2] < 1e-3);
    assert!(disc[1] / disc[2] > 3.0);
}

#[test]
fn greens_pairing_separable_closed_form() {
    // w = e^{pi x} sin(pi y), L as above; the volume side against Gauss-Legendre quadrature
    let (gx, gw) = ctalab::quad::gauss_legendre_on(40, 0.0, 1.0);
    let mut exact = 0.0;
    for (x, wx) in gx.iter().zip(&gw) {
        for (y, wy) in gx.iter().zip(&gw) {
            exact += wx * wy * (PI * x).exp() * (PI * y).sin() * 2.0 * (y * (1.0 - y) + x * (1.0 - x));
        }
    }
    let mut errs = Vec::new();
    for cells in [32usize, 64] {
        let d = square(cells);
        let s = DirichletSolver::new(&d, &Field::zero()).unwrap();
        let w = s.green_dirichlet_fn(|x| c((PI * x[0]).exp() * (PI * x[1]).sin(), 0.0)).unwrap();
        let l = d.sample(|x| c(x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]), 0.0));
        let rhs = d.sample(|x| c(2.0 * (x[1] * (1.0 - x[1]) + x[0] * (1.0 - x[0])), 0.0));
        let rep = greens_pairing(&d, &w, &l, &rhs);
        errs.push(((rep.boundary - exact).norm() / exact.abs(), (rep.volume - exact).norm() / exact.abs()));
    }
    println!("separable pairing errors {errs:?}");
    assert!(errs[1].0 < 2e-3 && errs[1].1 < 2e-3);
    assert!(errs[0].1 / errs[1].1 > 3.0);
}

#[test]
fn nonvanishing_solutions() {
    let d = square(32);
    let s = DirichletSolver::new(&d, &Field::zero()).unwrap();
    let w = nonvanishing_solution(&s, &[0.5, 0.5], 1e-8).unwrap();
    assert_eq!(w.label, "constant");
    assert!((w.value - 1.0).norm() < 1e-12);
    assert!(w.w.iter().all(|v| (v - 1.0).norm() < 1e-12));
    let bump = Field::new(|x: &[f64]| c(0.5 * (-((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)) / 0.02).exp(), 0.0));
    let s = DirichletSolver::new(&d, &bump).unwrap();
    let w = nonvanishing_solution(&s, &[0.5, 0.5], 1e-8).unwrap();
    let dev = (w.value - 1.0).norm();
    println!("bump: W(p) = {} via {}", w.value, w.label);
    assert!(dev > 1e-4 && dev < 0.1);
    let near = nonvanishing_solution(&s, &[0.02, 0.97], 1e-8).unwrap();
    assert!(near.value.norm() > 0.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn discrete_operator_is_symmetric(seed in 0u64..1000) {
        // sum u (P v) = sum v (P u) for grid functions vanishing on the boundary
        let d = DiscreteDomain::new(vec![0.0, 0.0], vec![1.0, 1.5], vec![12, 9]).unwrap();
        let s = DirichletSolver::new(&d, &v1_field()).unwrap();
        let r = |i: usize, k: u64| ((i as f64 * 12.9898 + (seed + k) as f64 * 78.233).sin() * 43758.5453).fract();
        let mk = |k: u64| -> Vec<C64> {
            (0..d.len()).map(|i| if d.is_boundary(i) { c(0.0, 0.0) } else { c(r(i, k), r(i, k + 7)) }).collect()
        };
        let (u, v) = (mk(1), mk(2));
        let (pu, pv) = (s.apply(&u), s.apply(&v));
        let a: C64 = u.iter().zip(&pv).map(|(x, y)| x * y).sum();
        let b: C64 = v.iter().zip(&pu).map(|(x, y)| x * y).sum();
        prop_assert!((a - b).norm() < 1e-10 * a.norm().max(1.0));
    }

    #[test]
    fn dirichlet_solution_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let d = square(12);
        let s = DirichletSolver::new(&d, &v1_field()).unwrap();
        let f1 = d.trace_of(|x| c(x[0], 1.0));
        let f2 = d.trace_of(|x| c(x[1] * x[1], -x[0]));
        let comb: Vec<C64> = f1.iter().zip(&f2).map(|(x, y)| x * a + y * b).collect();
        let u = s.green_dirichlet(&comb).unwrap();
        let (u1, u2) = (s.green_dirichlet(&f1).unwrap(), s.green_dirichlet(&f2).unwrap());
        let lin: Vec<C64> = u1.iter().zip(&u2).map(|(x, y)| x * a + y * b).collect();
        prop_assert!(diff(&u, &lin) < 1e-12 * sup(&lin).max(1.0));
    }
}
