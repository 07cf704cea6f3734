use std::f64::consts::FRAC_PI_2;

use lamination_core::config::RunConfig;
use lamination_core::diagnostics::{
    curvature_map, disk_check, gamma_components, lamination_entry, lamination_trend, sheet_census, trace_monotonicity,
    write_report_csvs, DiagnosticSettings, Transversal, AXIS_MARGIN,
};
use lamination_core::charts::BoxChart;
use lamination_core::mesh::{initial_annulus, slice_mesh, sphere_graph, SurfaceMesh};
use lamination_core::metric::{ChartPoint, MetricField};
use lamination_core::pipeline::run_sequence;
use lamination_core::warp::WarpProfile;
use proptest::prelude::*;

/// Disjoint union of meshes (unstructured).
fn union(parts: &[SurfaceMesh]) -> SurfaceMesh {
    let mut out = SurfaceMesh { grid: None, ..parts[0].clone() };
    out.vertices.clear();
    out.triangles.clear();
    out.flags.clear();
    for m in parts {
        let off = out.vertices.len();
        out.vertices.extend(&m.vertices);
        out.flags.extend(&m.flags);
        out.triangles.extend(m.triangles.iter().map(|t| [t[0] + off, t[1] + off, t[2] + off]));
    }
    out
}

fn slices(heights: &[f64]) -> SurfaceMesh {
    union(&heights.iter().map(|&z| slice_mesh(16, 32, z).unwrap()).collect::<Vec<_>>())
}

fn settings() -> DiagnosticSettings {
    DiagnosticSettings::from_config(&RunConfig::default()).unwrap()
}

#[test]
fn ruled_annulus_passes_the_trace_check() {
    for n in 1..=2 {
        let chart = BoxChart::new(n, 0.3).unwrap();
        let mesh = initial_annulus(&chart, 16, 16 * n as usize + 1).unwrap();
        let r = trace_monotonicity(&mesh, 16).unwrap();
        assert_eq!(r.pass_fraction, 1.0);
        assert_eq!(r.polylines, 16);
        assert!(r.worst.is_none());
    }
}

#[test]
fn zigzag_is_located() {
    let chart = BoxChart::new(1, 0.3).unwrap();
    let mut mesh = initial_annulus(&chart, 16, 17).unwrap();
    let g = mesh.grid.unwrap();
    // push level 8 of rings 4 and 5 below level 7
    for k in [4, 5] {
        mesh.vertices[g.index(k, 8)].z = mesh.vertices[g.index(k, 7)].z - 0.2;
    }
    let r = trace_monotonicity(&mesh, 16).unwrap();
    assert!(r.pass_fraction < 1.0);
    let w = r.worst.unwrap();
    assert!((4..=5).contains(&w.ring) || w.ring == 3, "{w:?}");
    assert!(w.level == 7 || w.level == 8, "{w:?}");
    assert!(w.magnitude > 0.0);
    assert!(trace_monotonicity(&mesh, 0).is_err());
}

#[test]
fn census_of_stacked_slices() {
    let mesh = slices(&[-0.5, 0.2, 0.9, 2.0]);
    let t = Transversal::new(1.3, 0.77, 1.0).unwrap();
    let c = sheet_census(&mesh, &t);
    assert_eq!(c.count, 3);
    assert_eq!(c.above, vec![0.9, 0.2]);
    assert_eq!(c.below, vec![-0.5]);
    assert!(c.two_sided());
    assert_eq!(c.min_abs_height(), Some(0.2));
    assert!((c.spacing_ratios[0] - 0.2 / 0.9).abs() < 1e-15);
    assert!(!c.perturbed);
}

#[test]
fn equally_spaced_slices_have_zero_gap_variation() {
    let c = sheet_census(&slices(&[-0.9, -0.3, 0.3, 0.9]), &Transversal::new(1.0, 2.0, 1.0).unwrap());
    assert!(c.gap_cv().unwrap() < 1e-12);
    let c = sheet_census(&slices(&[-0.9, -0.8, 0.3, 0.9]), &Transversal::new(1.0, 2.0, 1.0).unwrap());
    assert!(c.gap_cv().unwrap() > 0.25);
}

#[test]
fn transversal_through_a_vertex_is_nudged() {
    let mesh = slice_mesh(16, 32, 0.4).unwrap();
    let vertex = mesh.vertices[5 * 32 + 3];
    let c = sheet_census(&mesh, &Transversal::new(vertex.phi, vertex.theta, 1.0).unwrap());
    assert!(c.perturbed && !c.touching);
    assert_eq!(c.count, 1);
}

#[test]
fn transversal_rejects_axis_positions() {
    assert!(Transversal::new(AXIS_MARGIN / 2.0, 0.0, 1.0).is_err());
    assert!(Transversal::new(1.0, 0.0, 4.0).is_err());
}

#[test]
fn gamma_crossings() {
    assert_eq!(gamma_components(&slice_mesh(16, 32, 0.5).unwrap(), AXIS_MARGIN), 0);
    // a tilted graph meets Γ in a great circle, split in two by the margin
    let tilted = sphere_graph(32, 64, |phi, theta| 0.3 * phi.sin() * theta.cos()).unwrap();
    assert_eq!(gamma_components(&tilted, AXIS_MARGIN), 2);
}

#[test]
fn assembled_first_annulus_meets_gamma_twice() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig { n_list: vec![1], halvings: 0, rings: 16, levels_per_wrap: 16, out_dir: dir.path().into(), ..RunConfig::default() };
    let (_, entries) = run_sequence(&cfg).unwrap();
    let mesh = &entries[0].assembled.as_ref().unwrap().mesh;
    assert_eq!(gamma_components(mesh, AXIS_MARGIN), 2);
    let e = lamination_entry(1, mesh, &cfg.warp_profile(), &settings()).unwrap();
    assert!(e.two_sided);
    assert_eq!(e.self_intersections, 0);
    assert!(e.ulsc.iter().all(|u| u.all_disks), "{:?}", e.ulsc);
}

#[test]
fn slice_curvature_matches_closed_form() {
    let w = WarpProfile::standard();
    let metric = MetricField::base(w.clone());
    let expected = {
        let (f, d) = (w.value(FRAC_PI_2), 0.25);
        2.0 * (d / f) * (d / f)
    };
    let m = curvature_map(&slice_mesh(64, 128, FRAC_PI_2).unwrap(), &metric, &[0.3]);
    let band = &m.bands[1];
    assert!(band.count > 0);
    assert!((band.mean - expected).abs() < 0.1 * expected, "{} vs {expected}", band.mean);
    assert!((band.max - expected).abs() < 0.1 * expected, "{} vs {expected}", band.max);
    let flat = curvature_map(&slice_mesh(64, 128, 0.0).unwrap(), &metric, &[0.3]);
    assert!(flat.bands[1].max < 1e-8, "{}", flat.bands[1].max);
    assert!(flat.excluded > 0);
}

#[test]
fn flat_patch_is_one_disk_at_every_resolution() {
    let metric = MetricField::base(WarpProfile::standard());
    for (a, b) in [(16, 32), (32, 64), (64, 128)] {
        let v = disk_check(&slice_mesh(a, b, 0.5).unwrap(), &metric, ChartPoint::new(FRAC_PI_2, 1.0, 0.5), 0.4).unwrap();
        assert_eq!(v.len(), 1, "{a}x{b}");
        assert!(v[0].disk);
    }
}

#[test]
fn empty_ball_has_no_components() {
    let metric = MetricField::base(WarpProfile::standard());
    let v = disk_check(&slice_mesh(16, 32, 0.5).unwrap(), &metric, ChartPoint::new(1.0, 1.0, 2.0), 0.2).unwrap();
    assert!(v.is_empty());
    assert!(disk_check(&slice_mesh(16, 32, 0.5).unwrap(), &metric, ChartPoint::new(1.0, 1.0, 2.0), 2.0).is_err());
}

#[test]
fn polar_band_is_not_a_disk() {
    let metric = MetricField::base(WarpProfile::standard());
    let mut mesh = slice_mesh(32, 64, 0.0).unwrap();
    let cap: Vec<bool> = mesh.vertices.iter().map(|p| p.phi < 0.1).collect();
    mesh.triangles.retain(|t| !t.iter().any(|&v| cap[v]));
    let v = disk_check(&mesh, &metric, ChartPoint::new(0.0, 0.0, 0.0), 0.5).unwrap();
    assert_eq!(v.len(), 1);
    assert!(!v[0].disk);
    assert_eq!(v[0].euler_characteristic, 0);
    // with the cap it is a disk again
    let full = disk_check(&slice_mesh(32, 64, 0.0).unwrap(), &metric, ChartPoint::new(0.0, 0.0, 0.0), 0.5).unwrap();
    assert_eq!(full.len(), 1);
    assert!(full[0].disk);
}

#[test]
fn trend_needs_two_entries() {
    let w = WarpProfile::standard();
    let e = lamination_entry(1, &slice_mesh(32, 64, 0.3).unwrap(), &w, &settings()).unwrap();
    let single = lamination_trend(vec![e.clone()]);
    assert!(single.trend.is_none());
    assert!(!single.two_sided_all);
    let mut twin = e.clone();
    twin.n = 2;
    let pair = lamination_trend(vec![twin, e]);
    assert_eq!(pair.entries[0].n, 1);
    let t = pair.trend.unwrap();
    assert_eq!(t.count_slope, 0.0);
    assert_eq!(t.min_height_slope, 0.0);
    assert!(t.counts_nondecreasing);
    assert!(!t.min_height_decreasing);
}

#[test]
fn report_csvs_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let w = WarpProfile::standard();
    let entries = vec![
        lamination_entry(1, &slice_mesh(32, 64, 0.6).unwrap(), &w, &settings()).unwrap(),
        lamination_entry(2, &sphere_graph(32, 64, |_, t| 0.3 * t.sin()).unwrap(), &w, &settings()).unwrap(),
    ];
    let report = lamination_trend(entries);
    assert_eq!(report.trend.as_ref().map(|t| t.counts_nondecreasing), Some(true));
    write_report_csvs(&report, dir.path()).unwrap();
    let heights = std::fs::read_to_string(dir.path().join("crossing_heights.csv")).unwrap();
    assert_eq!(heights.lines().count(), 1 + 2);
    assert!(dir.path().join("curvature_bands.csv").exists());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn census_is_stable_under_small_moves(phi in 0.3f64..2.8, theta in 0.0f64..6.2, dp in -1e-4f64..1e-4, dt in -1e-4f64..1e-4) {
        let mesh = slices(&[-0.7, -0.1, 0.4]);
        let a = sheet_census(&mesh, &Transversal::new(phi, theta, 1.0).unwrap());
        let b = sheet_census(&mesh, &Transversal::new(phi + dp, theta + dt, 1.0).unwrap());
        for (x, y) in a.heights().iter().zip(b.heights()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert_eq!(a.count, 3);
    }

    #[test]
    fn graph_census_finds_the_graph_value(phi in 0.3f64..2.8, theta in 0.0f64..6.2) {
        // piecewise-linear interpolation of a smooth graph
        let mesh = sphere_graph(64, 128, |p, t| 0.5 + 0.2 * p.sin() * t.cos()).unwrap();
        let c = sheet_census(&mesh, &Transversal::new(phi, theta, 2.0).unwrap());
        prop_assert_eq!(c.count, 1);
        let exact = 0.5 + 0.2 * phi.sin() * theta.cos();
        prop_assert!((c.heights()[0] - exact).abs() < 2e-3);
    }
}

#[test]
fn lamination_entry_needs_a_structured_base_mesh() {
    let w = WarpProfile::standard();
    assert!(lamination_entry(1, &slices(&[0.1, 0.2]), &w, &settings()).is_err());
    let chart = BoxChart::new(1, 0.3).unwrap();
    assert!(lamination_entry(1, &initial_annulus(&chart, 16, 17).unwrap(), &w, &settings()).is_err());
}

#[test]
fn product_slices_are_flat() {
    let metric = MetricField::base(WarpProfile::product());
    let m = curvature_map(&slice_mesh(32, 64, 1.0).unwrap(), &metric, &[0.3]);
    assert!(m.bands.iter().all(|b| b.max < 1e-8));
}
