use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;

use lamination_core::area::{riemannian_area, triangle_area};
use lamination_core::charts::{build_glue_profile, BoxChart};
use lamination_core::mesh::{initial_annulus, slice_mesh, SurfaceMesh, VertexFlag};
use lamination_core::metric::{ChartPoint, MetricField};
use lamination_core::solver::{
    mean_curvature_residual, minimize_area, translation_disjointness, Bounds, SolveResult, SolveStatus, SolverConfig,
};
use lamination_core::warp::WarpProfile;
use proptest::prelude::*;

fn annulus_metric(eps: f64) -> MetricField {
    MetricField::glued(WarpProfile::standard(), build_glue_profile(eps, eps / 2.0).unwrap())
}

fn cfg(n: u32) -> SolverConfig {
    SolverConfig { residual_tol: 1e-4, bounds: Bounds::box_chart(n), ..SolverConfig::default() }
}

/// n = 1, ε = 0.3 on 16 rings × 33 levels.
fn small_solve() -> &'static (SurfaceMesh, SolveResult) {
    static RUN: OnceLock<(SurfaceMesh, SolveResult)> = OnceLock::new();
    RUN.get_or_init(|| {
        let chart = BoxChart::new(1, 0.3).unwrap();
        let start = initial_annulus(&chart, 16, 33).unwrap();
        let res = minimize_area(&start, &annulus_metric(0.3), &cfg(1)).unwrap();
        (start, res)
    })
}

/// Independent oracle: metric frozen at the centroid, area ½√det of the
/// 2 × 2 Gram matrix of the edge vectors.
fn gram_area(metric: &MetricField, c: &[[f64; 3]; 3]) -> f64 {
    let centroid = ChartPoint::new(
        (c[0][0] + c[1][0] + c[2][0]) / 3.0,
        (c[0][1] + c[1][1] + c[2][1]) / 3.0,
        (c[0][2] + c[1][2] + c[2][2]) / 3.0,
    );
    let g = metric.tensor(centroid);
    let u = [c[1][0] - c[0][0], c[1][1] - c[0][1], c[1][2] - c[0][2]];
    let v = [c[2][0] - c[0][0], c[2][1] - c[0][1], c[2][2] - c[0][2]];
    let (uu, uv, vv) = (g.inner(u, u), g.inner(u, v), g.inner(v, v));
    0.5 * (uu * vv - uv * uv).max(0.0).sqrt()
}

#[test]
fn solve_converges_with_monotone_area() {
    let (start, res) = small_solve();
    assert_eq!(res.status, SolveStatus::Converged);
    assert!(res.area_history.windows(2).all(|w| w[1] <= w[0]));
    assert!(res.final_area() < res.area_history[0]);
    assert!(res.max_residual <= 1e-4 && res.grad_norm <= 1e-6);
    let field = mean_curvature_residual(&res.mesh, &annulus_metric(0.3)).unwrap();
    assert!(field.values.iter().flatten().all(|&r| r <= 1e-4));
    assert_eq!(res.telemetry.len(), res.iterations + 1);
    assert_eq!(res.mesh.vertex_count(), start.vertex_count());
}

#[test]
fn fixed_vertices_are_bitwise_unchanged() {
    let (start, res) = small_solve();
    for (v, f) in start.flags.iter().enumerate() {
        if *f == VertexFlag::Fixed {
            assert_eq!(start.vertices[v], res.mesh.vertices[v]);
        }
    }
    // only z moves in the height-graph parametrisation
    for (a, b) in start.vertices.iter().zip(&res.mesh.vertices) {
        assert_eq!((a.phi, a.theta), (b.phi, b.theta));
    }
}

/// (φ, θ, z) → (φ, −θ, −z) with levels reversed, triangles carried along.
fn half_turn(mesh: &SurfaceMesh) -> SurfaceMesh {
    let g = mesh.grid.unwrap();
    let image = |v: usize| g.index(v % g.ring_len, g.levels - 1 - v / g.ring_len);
    let mut out = mesh.clone();
    for v in 0..mesh.vertex_count() {
        let p = mesh.vertices[v];
        out.vertices[image(v)] = ChartPoint::new(p.phi, -p.theta, -p.z);
        out.flags[image(v)] = mesh.flags[v];
    }
    out.triangles = mesh.triangles.iter().map(|t| [image(t[0]), image(t[2]), image(t[1])]).collect();
    out
}

#[test]
fn solve_commutes_with_the_half_turn() {
    // the half-turn preserves the boundary circles and the metric
    let (start, res) = small_solve();
    let metric = annulus_metric(0.3);
    let mirrored = minimize_area(&half_turn(start), &metric, &cfg(1)).unwrap();
    assert_eq!(mirrored.status, SolveStatus::Converged);
    let expected = half_turn(&res.mesh);
    let worst = expected
        .vertices
        .iter()
        .zip(&mirrored.mesh.vertices)
        .map(|(a, b)| (a.z - b.z).abs())
        .fold(0.0, f64::max);
    // equal up to the spread of iterates inside the stopping tolerance
    assert!(worst < 1e-4, "{worst}");
    assert!((mirrored.final_area() - res.final_area()).abs() < 1e-9);
}

#[test]
fn solution_is_disjoint_from_its_rotations() {
    let (_, res) = small_solve();
    for e in translation_disjointness(&res.mesh, &[PI / 4.0, FRAC_PI_2, PI], 1e-12).unwrap() {
        assert!(e.disjoint, "{e:?}");
        assert!(e.closest_approach > 0.0);
    }
}

#[test]
fn minimal_slice_start_stops_immediately() {
    let metric = MetricField::base(WarpProfile::standard());
    let slice = slice_mesh(64, 128, 0.0).unwrap();
    let res = minimize_area(&slice, &metric, &SolverConfig::default()).unwrap();
    assert_eq!(res.status, SolveStatus::Converged);
    assert!(res.iterations <= 2);
}

#[test]
fn slice_area_converges_under_refinement() {
    let w = WarpProfile::standard();
    let metric = MetricField::base(w.clone());
    let exact = 4.0 * PI * w.value(FRAC_PI_2).powi(2);
    let errors: Vec<f64> = [(8, 16), (16, 32), (32, 64), (64, 128)]
        .iter()
        .map(|&(a, b)| (riemannian_area(&slice_mesh(a, b, FRAC_PI_2).unwrap(), &metric).unwrap() - exact).abs())
        .collect();
    assert!(errors.windows(2).all(|w| w[1] < w[0] / 3.0), "{errors:?}");
}

#[test]
fn area_is_rotation_invariant() {
    let (_, res) = small_solve();
    let metric = annulus_metric(0.3);
    let a = riemannian_area(&res.mesh, &metric).unwrap();
    for &t in &[0.3, -1.0, 2.5] {
        let b = riemannian_area(&res.mesh.rotate_theta(t), &metric).unwrap();
        assert!((a - b).abs() <= 1e-12 * a);
    }
}

#[test]
fn invalid_configuration_is_rejected() {
    let (start, _) = small_solve();
    let bad = SolverConfig { backtrack: 1.5, ..SolverConfig::default() };
    assert!(minimize_area(start, &annulus_metric(0.3), &bad).is_err());
}

#[test]
fn non_convergence_is_reported() {
    let (start, _) = small_solve();
    let res = minimize_area(start, &annulus_metric(0.3), &SolverConfig { max_iterations: 3, ..cfg(1) }).unwrap();
    assert_ne!(res.status, SolveStatus::Converged);
    assert_eq!(res.iterations, 3);
}

proptest! {
    #[test]
    fn triangle_area_matches_gram_oracle(
        phi in 0.2f64..2.9, theta in -5.0f64..5.0, z in -3.0f64..3.0,
        d in prop::array::uniform6(-0.1f64..0.1),
    ) {
        let metric = annulus_metric(0.2);
        let c = [[phi, theta, z], [phi + d[0], theta + d[1], z + d[2]], [phi + d[3], theta + d[4], z + d[5]]];
        let a = triangle_area(&metric, &c);
        prop_assert!((a - gram_area(&metric, &c)).abs() <= 1e-12 * (1.0 + a));
    }

    #[test]
    fn triangle_area_is_orientation_free(d in prop::array::uniform6(-0.2f64..0.2)) {
        let metric = MetricField::base(WarpProfile::standard());
        let c = [[1.0, 0.5, 0.2], [1.0 + d[0], 0.5 + d[1], 0.2 + d[2]], [1.0 + d[3], 0.5 + d[4], 0.2 + d[5]]];
        let r = [c[0], c[2], c[1]];
        prop_assert!((triangle_area(&metric, &c) - triangle_area(&metric, &r)).abs() < 1e-15);
    }
}
