//! Discrete area minimisation with fixed boundary: preconditioned nonlinear
//! conjugate gradients (or plain gradient descent) with a projected Armijo
//! backtracking line search.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::area::{area_and_gradient, hessian_diagonal, triangle_area};
use crate::error::{Error, Result};
use crate::mesh::intersect::{closest_vertex_distance, mesh_intersections};
use crate::mesh::{triangle_quality, SurfaceMesh};
use crate::metric::{ChartPoint, MetricField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ncg,
    Gradient,
}

/// Coordinate bounds applied after every step; infinite entries are inactive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Bounds {
    pub fn unbounded() -> Self {
        Self { lo: [f64::NEG_INFINITY; 3], hi: [f64::INFINITY; 3] }
    }

    /// θ ∈ [−nπ, nπ], z ∈ [−π, π].
    pub fn box_chart(n: u32) -> Self {
        let tm = n as f64 * std::f64::consts::PI;
        let pi = std::f64::consts::PI;
        Self { lo: [f64::NEG_INFINITY, -tm, -pi], hi: [f64::INFINITY, tm, pi] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Bound on max_v |projected gradient at v| in the inverse metric.
    pub grad_tol: f64,
    /// Bound on the max mean-curvature residual.
    pub residual_tol: f64,
    pub backtrack: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
    pub stall_limit: usize,
    pub quality_floor: f64,
    pub method: Method,
    pub bounds: Bounds,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 20_000,
            grad_tol: 1e-6,
            residual_tol: 1e-4,
            backtrack: 0.5,
            armijo: 1e-4,
            max_backtracks: 60,
            stall_limit: 50,
            quality_floor: 1e-8,
            method: Method::Ncg,
            bounds: Bounds::unbounded(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.grad_tol >= 0.0
            && self.residual_tol >= 0.0
            && self.backtrack > 0.0
            && self.backtrack < 1.0
            && self.armijo > 0.0
            && self.armijo < 1.0
            && self.max_backtracks > 0
            && self.stall_limit > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid solver configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRow {
    pub iteration: usize,
    pub area: f64,
    pub grad_norm: f64,
    pub max_residual: f64,
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub mesh: SurfaceMesh,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Area before the first step and after every accepted step.
    pub area_history: Vec<f64>,
    pub telemetry: Vec<TelemetryRow>,
    pub grad_norm: f64,
    pub max_residual: f64,
}

impl SolveResult {
    pub fn final_area(&self) -> f64 {
        *self.area_history.last().unwrap_or(&f64::NAN)
    }
}

/// Per-vertex mean curvature residual |δA_v| / mass_v over free vertices,
/// with δA_v the area gradient along the mesh's free axes measured in the
/// inverse metric; `None` at fixed and axis vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualField {
    pub values: Vec<Option<f64>>,
    pub max: f64,
}

impl ResidualField {
    /// Sorted free-vertex residuals.
    pub fn sorted(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.values.iter().flatten().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn quantile(&self, q: f64) -> f64 {
        let v = self.sorted();
        if v.is_empty() {
            return 0.0;
        }
        v[((v.len() - 1) as f64 * q.clamp(0.0, 1.0)).round() as usize]
    }
}

/// Gradient restricted to free vertices and axes, with components that push
/// through an active bound zeroed.
fn project_gradient(mesh: &SurfaceMesh, grad: &mut [[f64; 3]], bounds: &Bounds) {
    for (v, g) in grad.iter_mut().enumerate() {
        if !mesh.flags[v].is_free() {
            *g = [0.0; 3];
            continue;
        }
        for k in 0..3 {
            if !mesh.free_axes[k] {
                g[k] = 0.0;
            }
        }
        let x = mesh.vertices[v].to_array();
        for k in 0..3 {
            if (x[k] <= bounds.lo[k] && g[k] > 0.0) || (x[k] >= bounds.hi[k] && g[k] < 0.0) {
                g[k] = 0.0;
            }
        }
    }
}

/// Inverse-metric norm of a covector at a vertex.
fn dual_norm(g: &[f64; 3], metric_diag: [f64; 3]) -> f64 {
    (g[0] * g[0] / metric_diag[0] + g[1] * g[1] / metric_diag[1] + g[2] * g[2] / metric_diag[2]).sqrt()
}

struct Stationarity {
    grad_norm: f64,
    max_residual: f64,
    residuals: Vec<Option<f64>>,
}

fn stationarity(mesh: &SurfaceMesh, metric: &MetricField, grad: &[[f64; 3]], mass: &[f64]) -> Result<Stationarity> {
    let mut grad_norm: f64 = 0.0;
    let mut max_residual: f64 = 0.0;
    let mut residuals = vec![None; mesh.vertices.len()];
    for v in 0..mesh.vertices.len() {
        if !mesh.flags[v].is_free() {
            continue;
        }
        if !(mass[v] > 0.0) {
            return Err(Error::DegenerateStar(v));
        }
        let n = dual_norm(&grad[v], metric.tensor(mesh.vertices[v]).diag());
        let r = n / mass[v];
        grad_norm = grad_norm.max(n);
        max_residual = max_residual.max(r);
        residuals[v] = Some(r);
    }
    Ok(Stationarity { grad_norm, max_residual, residuals })
}

/// Discrete mean curvature residual of `mesh` along its free axes.
pub fn mean_curvature_residual(mesh: &SurfaceMesh, metric: &MetricField) -> Result<ResidualField> {
    mesh.check_finite()?;
    let (_, mut grad, mass) = area_and_gradient(mesh, metric)?;
    project_gradient(mesh, &mut grad, &Bounds::unbounded());
    let s = stationarity(mesh, metric, &grad, &mass)?;
    Ok(ResidualField { values: s.residuals, max: s.max_residual })
}

/// Per-triangle (area, quality), computed in parallel.
fn triangle_stats(mesh: &SurfaceMesh, metric: &MetricField) -> Vec<(f64, f64)> {
    (0..mesh.triangles.len())
        .into_par_iter()
        .map(|t| {
            let c = mesh.corners(t);
            (triangle_area(metric, &c), triangle_quality(metric, &c))
        })
        .collect()
}

fn mean_edge_length(mesh: &SurfaceMesh, metric: &MetricField) -> f64 {
    let edges = mesh.edges();
    if edges.is_empty() {
        return 1.0;
    }
    let total: f64 = (0..mesh.triangles.len())
        .map(|t| {
            let c = mesh.corners(t);
            let g = metric.tensor(ChartPoint::from_array(crate::mesh::centroid(&c)));
            (0..3).map(|i| g.norm(crate::mesh::sub(c[(i + 1) % 3], c[i]))).sum::<f64>()
        })
        .sum();
    total / (3 * mesh.triangles.len()) as f64
}

/// Minimises the discrete Riemannian area over the free coordinates.
/// Boundary and axis vertices are never written.
pub fn minimize_area(initial: &SurfaceMesh, metric: &MetricField, cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    initial.check_finite()?;
    let mut mesh = initial.clone();
    let mut stats = triangle_stats(&mesh, metric);
    if let Some(t) = stats.iter().position(|s| !s.0.is_finite()) {
        return Err(Error::NonFinite { what: "triangle area".into(), index: t });
    }
    if let Some((t, s)) = stats
        .iter()
        .enumerate()
        .filter(|(_, s)| !(s.1 >= cfg.quality_floor))
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
    {
        return Err(Error::DegenerateMesh { triangle: t, quality: s.1 });
    }
    let mut area: f64 = stats.iter().map(|s| s.0).sum();
    let mut history = vec![area];
    let mut telemetry = Vec::new();
    let free_vertices: Vec<usize> = (0..mesh.vertices.len()).filter(|&v| mesh.flags[v].is_free()).collect();
    let restart_every = free_vertices.len().max(1);
    let target_move = 0.05 * mean_edge_length(&mesh, metric);

    let mut prev: Option<(Vec<[f64; 3]>, Vec<[f64; 3]>)> = None; // (gradient, preconditioned gradient)
    let mut direction: Vec<[f64; 3]> = vec![[0.0; 3]; mesh.vertices.len()];
    let mut step_guess: Option<f64> = None;
    let mut since_restart = 0;
    let mut failures = 0;
    let mut iteration = 0;
    let mut last_step = 0.0;

    let status = loop {
        let (_, mut grad, mass) = area_and_gradient(&mesh, metric)?;
        project_gradient(&mesh, &mut grad, &cfg.bounds);
        let st = stationarity(&mesh, metric, &grad, &mass)?;
        telemetry.push(TelemetryRow {
            iteration,
            area,
            grad_norm: st.grad_norm,
            max_residual: st.max_residual,
            step: last_step,
        });
        if st.grad_norm <= cfg.grad_tol && st.max_residual <= cfg.residual_tol {
            break SolveStatus::Converged;
        }
        if iteration >= cfg.max_iterations {
            break SolveStatus::MaxIterations;
        }
        iteration += 1;

        let hess = hessian_diagonal(&mesh, metric);
        let mut precond = vec![[0.0; 3]; mesh.vertices.len()];
        for &v in &free_vertices {
            let g = metric.tensor(mesh.vertices[v]).diag();
            for k in 0..3 {
                let floor = 1e-6 * mass[v] * g[k];
                precond[v][k] = grad[v][k] / hess[v][k].max(floor);
            }
        }

        let mut steepest = true;
        if cfg.method == Method::Ncg && since_restart < restart_every {
            if let Some((g_old, s_old)) = &prev {
                let mut num = 0.0;
                let mut den = 0.0;
                for &v in &free_vertices {
                    for k in 0..3 {
                        num += grad[v][k] * (precond[v][k] - s_old[v][k]);
                        den += g_old[v][k] * s_old[v][k];
                    }
                }
                let beta = if den > 0.0 { (num / den).max(0.0) } else { 0.0 };
                if beta > 0.0 {
                    let mut slope = 0.0;
                    for &v in &free_vertices {
                        for k in 0..3 {
                            direction[v][k] = -precond[v][k] + beta * direction[v][k];
                            slope += grad[v][k] * direction[v][k];
                        }
                    }
                    steepest = slope >= 0.0;
                }
            }
        }
        if steepest {
            since_restart = 0;
            for &v in &free_vertices {
                for k in 0..3 {
                    direction[v][k] = -precond[v][k];
                }
            }
        }
        since_restart += 1;
        prev = Some((grad.clone(), precond));

        let max_move = free_vertices
            .iter()
            .map(|&v| metric.tensor(mesh.vertices[v]).norm(direction[v]))
            .fold(0.0, f64::max);
        if !(max_move > 0.0) {
            break SolveStatus::Stalled;
        }
        let mut alpha = step_guess.map_or(target_move / max_move, |s| (2.0 * s).min(target_move / max_move * 1e3));

        let mut accepted = None;
        for _ in 0..cfg.max_backtracks {
            let mut trial = mesh.clone();
            let mut slope = 0.0;
            for &v in &free_vertices {
                let mut x = trial.vertices[v].to_array();
                for k in 0..3 {
                    if !mesh.free_axes[k] {
                        continue;
                    }
                    let old = x[k];
                    x[k] = (old + alpha * direction[v][k]).clamp(cfg.bounds.lo[k], cfg.bounds.hi[k]);
                    slope += grad[v][k] * (x[k] - old);
                }
                trial.vertices[v] = ChartPoint::from_array(x);
            }
            let trial_stats = triangle_stats(&trial, metric);
            let ok_quality = trial_stats.iter().all(|s| s.1 >= cfg.quality_floor && s.0.is_finite());
            if ok_quality {
                let delta: f64 = trial_stats.iter().zip(&stats).map(|(n, o)| n.0 - o.0).sum();
                let next = area + delta;
                if delta <= cfg.armijo * slope && next < area {
                    accepted = Some((trial, trial_stats, next));
                    break;
                }
            }
            alpha *= cfg.backtrack;
        }

        match accepted {
            Some((trial, trial_stats, next)) => {
                mesh = trial;
                stats = trial_stats;
                area = next;
                history.push(area);
                step_guess = Some(alpha);
                last_step = alpha;
                failures = 0;
            }
            None => {
                failures += 1;
                step_guess = None;
                last_step = 0.0;
                if steepest || failures >= cfg.stall_limit {
                    break SolveStatus::Stalled;
                }
                // retry from steepest descent
                prev = None;
            }
        }
    };

    let last = telemetry.last().copied().unwrap_or(TelemetryRow {
        iteration: 0,
        area,
        grad_norm: f64::NAN,
        max_residual: f64::NAN,
        step: 0.0,
    });
    Ok(SolveResult {
        mesh,
        status,
        iterations: iteration,
        area_history: history,
        telemetry,
        grad_norm: last.grad_norm,
        max_residual: last.max_residual,
    })
}

pub fn write_telemetry_csv(rows: &[TelemetryRow], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "iteration,area,grad_norm,max_residual,step")?;
    for r in rows {
        writeln!(f, "{},{:?},{:?},{:?},{:?}", r.iteration, r.area, r.grad_norm, r.max_residual, r.step)?;
    }
    f.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisjointnessEntry {
    pub theta0: f64,
    pub disjoint: bool,
    pub intersections: usize,
    pub closest_approach: f64,
}

/// Checks the surface against its θ-translates in the cover chart.
pub fn translation_disjointness(mesh: &SurfaceMesh, shifts: &[f64], tol: f64) -> Result<Vec<DisjointnessEntry>> {
    shifts
        .iter()
        .map(|&theta0| {
            let moved = mesh.rotate_theta(theta0);
            let hits = mesh_intersections(mesh, &moved, tol)?;
            Ok(DisjointnessEntry {
                theta0,
                disjoint: hits.is_empty(),
                intersections: hits.len(),
                closest_approach: closest_vertex_distance(mesh, &moved),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charts::{build_glue_profile, BoxChart};
    use crate::mesh::{initial_annulus, slice_mesh, sphere_graph};
    use crate::warp::WarpProfile;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn slice_residual_matches_closed_form() {
        let w = WarpProfile::standard();
        let metric = MetricField::base(w.clone());
        let m = slice_mesh(64, 128, PI / 2.0).unwrap();
        let r = mean_curvature_residual(&m, &metric).unwrap();
        for v in r.values.iter().flatten() {
            assert_relative_eq!(*v, 0.4, max_relative = 1e-9);
        }
    }

    #[test]
    fn product_slice_is_minimal() {
        let metric = MetricField::base(WarpProfile::product());
        let m = slice_mesh(16, 32, 0.7).unwrap();
        assert!(mean_curvature_residual(&m, &metric).unwrap().max < 1e-14);
    }

    #[test]
    fn graph_relaxes_to_slice_in_product_metric() {
        let metric = MetricField::base(WarpProfile::product());
        let m = sphere_graph(12, 24, |phi, _| 0.3 * phi.sin()).unwrap();
        let cfg = SolverConfig { grad_tol: 1e-7, residual_tol: 1e-5, ..Default::default() };
        let res = minimize_area(&m, &metric, &cfg).unwrap();
        assert_eq!(res.status, SolveStatus::Converged);
        assert!(res.mesh.vertices.iter().all(|p| p.z.abs() < 1e-5));
        assert!(res.area_history.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn fixed_vertices_are_untouched() {
        let chart = BoxChart::new(1, 0.3).unwrap();
        let glue = build_glue_profile(0.3, 0.1).unwrap();
        let metric = MetricField::glued(WarpProfile::standard(), glue);
        let m = initial_annulus(&chart, 16, 16).unwrap();
        let cfg = SolverConfig { max_iterations: 30, bounds: Bounds::box_chart(1), ..Default::default() };
        let res = minimize_area(&m, &metric, &cfg).unwrap();
        for v in 0..m.vertex_count() {
            if !m.flags[v].is_free() {
                assert_eq!(res.mesh.vertices[v], m.vertices[v]);
            }
            assert_eq!(res.mesh.vertices[v].phi, m.vertices[v].phi);
        }
        assert!(res.area_history.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn degenerate_input_is_rejected() {
        let metric = MetricField::base(WarpProfile::product());
        let mut m = sphere_graph(4, 8, |_, _| 0.0).unwrap();
        let g = m.grid.unwrap();
        m.vertices[g.index(2, 2)] = m.vertices[g.index(3, 2)];
        assert!(matches!(
            minimize_area(&m, &metric, &SolverConfig::default()),
            Err(Error::DegenerateMesh { .. })
        ));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let metric = MetricField::base(WarpProfile::product());
        let mut m = sphere_graph(4, 8, |_, _| 0.0).unwrap();
        m.vertices[10].z = f64::NAN;
        assert!(matches!(
            minimize_area(&m, &metric, &SolverConfig::default()),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn translation_checks() {
        let chart = BoxChart::new(1, 0.3).unwrap();
        let m = initial_annulus(&chart, 16, 16).unwrap();
        let e = translation_disjointness(&m, &[0.0, 4.0 * PI], 1e-12).unwrap();
        assert!(!e[0].disjoint);
        assert!(e[1].disjoint);
    }
}
