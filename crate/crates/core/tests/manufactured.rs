use amlmc_core::estimator::{poisson_indicators, EstimatorConfig};
use amlmc_core::fem::{error_norms, solve_linear_poisson, LinearSolver};
use amlmc_core::mesh::{build_rectangle_mesh, uniform_refine};
use amlmc_core::{BoundaryTag, Mesh, Point};
use std::f64::consts::PI;

fn exact(p: Point) -> f64 {
    (PI * p[0]).sin() * (PI * p[1]).sin()
}

fn exact_grad(p: Point) -> [f64; 2] {
    [PI * (PI * p[0]).cos() * (PI * p[1]).sin(), PI * (PI * p[0]).sin() * (PI * p[1]).cos()]
}

fn source(p: Point) -> f64 {
    2.0 * PI * PI * exact(p)
}

struct Level {
    h: f64,
    l2: f64,
    h1: f64,
    eta: f64,
}

fn sweep(levels: usize) -> Vec<Level> {
    let mut mesh: Mesh = build_rectangle_mesh(1.0, 1.0, 0.125, [BoundaryTag::DirichletSource; 4]).unwrap();
    let mut out = Vec::new();
    for _ in 0..levels {
        let eps = vec![1.0; mesh.num_elements()];
        let w = solve_linear_poisson(&mesh, &eps, source, |_| 0.0, LinearSolver::Cholesky).unwrap();
        let e = error_norms(&mesh, &w, exact, exact_grad, None);
        let eta = poisson_indicators(&mesh, &eps, &w, source, &EstimatorConfig::default()).total().sqrt();
        out.push(Level { h: mesh.max_diameter(), l2: e.l2, h1: e.h1_semi, eta });
        mesh = uniform_refine(&mesh).unwrap();
    }
    out
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = (x.iter().map(|v| v.ln()).collect(), y.iter().map(|v| v.ln()).collect());
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

#[test]
fn p1_rates_on_smooth_solution() {
    let lv = sweep(4);
    let h: Vec<f64> = lv.iter().map(|l| l.h).collect();
    let s1 = slope(&h, &lv.iter().map(|l| l.h1).collect::<Vec<_>>());
    let s0 = slope(&h, &lv.iter().map(|l| l.l2).collect::<Vec<_>>());
    assert!((s1 - 1.0).abs() <= 0.15, "H1 slope {s1}");
    assert!((s0 - 2.0).abs() <= 0.2, "L2 slope {s0}");
}

#[test]
fn effectivity_is_stable() {
    let lv = sweep(4);
    let eff: Vec<f64> = lv.iter().map(|l| l.eta / l.h1).collect();
    let (lo, hi) = eff.iter().fold((f64::MAX, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    assert!(lo >= 0.2 && hi <= 20.0, "{eff:?}");
    assert!(hi / lo <= 4.0, "{eff:?}");
    assert!(lv.windows(2).all(|w| w[1].eta < w[0].eta));
}

#[test]
fn estimator_is_homogeneous() {
    let mesh = build_rectangle_mesh(1.0, 1.0, 0.25, [BoundaryTag::DirichletSource; 4]).unwrap();
    let eps = vec![1.0; mesh.num_elements()];
    let cfg = EstimatorConfig::default();
    let w = solve_linear_poisson(&mesh, &eps, source, |_| 0.0, LinearSolver::Cholesky).unwrap();
    let eta = poisson_indicators(&mesh, &eps, &w, source, &cfg).total().sqrt();
    let scaled = |p: Point| -3.0 * source(p);
    let w3 = solve_linear_poisson(&mesh, &eps, scaled, |_| 0.0, LinearSolver::Cholesky).unwrap();
    let eta3 = poisson_indicators(&mesh, &eps, &w3, scaled, &cfg).total().sqrt();
    assert!((eta3 / eta - 3.0).abs() < 1e-10);
}

#[test]
fn linear_solution_is_reproduced() {
    let mesh = build_rectangle_mesh(1.0, 1.0, 0.25, [BoundaryTag::DirichletSource; 4]).unwrap();
    let eps = vec![2.0; mesh.num_elements()];
    let w = solve_linear_poisson(&mesh, &eps, |_| 0.0, |p| 1.0 + 2.0 * p[0] - p[1], LinearSolver::Cholesky).unwrap();
    for (v, p) in mesh.vertices().iter().enumerate() {
        assert!((w[v] - (1.0 + 2.0 * p[0] - p[1])).abs() < 1e-12);
    }
    let eta = poisson_indicators(&mesh, &eps, &w, |_| 0.0, &EstimatorConfig::default()).total();
    assert!(eta < 1e-20);
}
