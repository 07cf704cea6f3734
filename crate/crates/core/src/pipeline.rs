//! ε-continuation of the Plateau solves, truncation to the core region,
//! projection to Ω, reflection across the axes, and run persistence.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::area::riemannian_area;
use crate::charts::{build_glue_profile, wrap_theta, BoxChart};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::mesh::intersect::self_intersections;
use crate::mesh::io::{sidecar_path, write_mesh};
use crate::mesh::{
    boundary_loops, euler_characteristic, initial_annulus_on, ChartKind, Grid, SurfaceMesh,
    VertexFlag, HEIGHT_GRAPH,
};
use crate::metric::{ChartPoint, MetricField};
use crate::solver::{minimize_area, write_telemetry_csv, SolveStatus, SolverConfig, TelemetryRow};
use crate::warp::WarpProfile;

/// Ring positions closer than this fraction of the uniform spacing to an ε
/// wall are moved onto the wall instead of adding a ring.
const SNAP_FRACTION: f64 = 0.25;
const PHI_TOL: f64 = 1e-12;
pub const SEAM_TOL: f64 = 1e-9;
pub const INTERSECTION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationSchedule {
    pub eps0: f64,
    /// Stages j = 0..=halvings use ε_j = ε₀ / 2^j.
    pub halvings: usize,
    /// Glue blend width as a fraction of ε_j.
    pub blend_fraction: f64,
    pub rings: usize,
    pub levels_per_wrap: usize,
}

impl ContinuationSchedule {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            eps0: cfg.eps0,
            halvings: cfg.halvings,
            blend_fraction: cfg.blend_fraction,
            rings: cfg.rings,
            levels_per_wrap: cfg.levels_per_wrap,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps0 > 0.0 && self.eps0 < PI / 4.0) {
            return Err(Error::InvalidArgument(format!("eps0 = {} outside (0, pi/4)", self.eps0)));
        }
        if !(self.blend_fraction > 0.0 && self.blend_fraction <= 0.5) {
            return Err(Error::InvalidArgument(format!("blend fraction {} outside (0, 0.5]", self.blend_fraction)));
        }
        if self.rings < 16 || self.levels_per_wrap < 16 {
            return Err(Error::InvalidArgument("rings and levels per wrap must be >= 16".into()));
        }
        Ok(())
    }

    pub fn eps(&self, stage: usize) -> f64 {
        self.eps0 / 2f64.powi(stage as i32)
    }

    pub fn levels(&self, n: u32) -> usize {
        self.levels_per_wrap * n as usize + 1
    }

    /// Ring layout for `stage`: uniform rings plus rings on every wall
    /// φ = ε_i, π − ε_i with i ≤ stage.
    pub fn ring_layout(&self, stage: usize) -> Vec<f64> {
        let walls: Vec<f64> = (0..=stage).map(|i| self.eps(i)).collect();
        ring_layout(self.rings, &walls)
    }
}

/// Uniform layout kπ/R with each wall φ = ε, π − ε either snapped onto the
/// nearest ring (within a quarter spacing) or inserted.
pub fn ring_layout(rings: usize, eps_values: &[f64]) -> Vec<f64> {
    let h = PI / rings as f64;
    let mut phis: Vec<f64> = (0..rings).map(|k| PI * k as f64 / rings as f64).collect();
    let mut locked = vec![false; rings];
    let mut extra = Vec::new();
    for &e in eps_values {
        for target in [e, PI - e] {
            let (idx, dist) = phis
                .iter()
                .enumerate()
                .map(|(i, &p)| (i, (p - target).abs()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("nonempty layout");
            if dist <= SNAP_FRACTION * h && !locked[idx] && idx != 0 {
                phis[idx] = target;
                locked[idx] = true;
            } else if dist > PHI_TOL {
                extra.push(target);
            }
        }
    }
    phis.extend(extra);
    phis.sort_by(f64::total_cmp);
    phis.dedup_by(|a, b| (*a - *b).abs() <= PHI_TOL);
    phis
}

/// Level-by-level periodic (period π) linear interpolation of z from one
/// ring layout onto another. θ and flags come from `template`.
pub fn resample_rings(from: &SurfaceMesh, template: &SurfaceMesh) -> Result<SurfaceMesh> {
    let (gf, gt) = match (from.grid, template.grid) {
        (Some(a), Some(b)) if a.levels == b.levels && a.ring_periodic && b.ring_periodic => (a, b),
        _ => return Err(Error::Pipeline("resampling needs periodic grids with equal level counts".into())),
    };
    let src: Vec<f64> = (0..gf.ring_len).map(|k| from.vertices[k].phi).collect();
    let mut out = template.clone();
    for l in 1..gt.levels - 1 {
        for k in 0..gt.ring_len {
            let phi = template.vertices[gt.index(k, l)].phi;
            let i = src.partition_point(|&p| p <= phi);
            let (lo, hi, plo, phi_hi) = if i == 0 {
                (gf.ring_len - 1, 0, src[gf.ring_len - 1] - PI, src[0])
            } else if i == gf.ring_len {
                (gf.ring_len - 1, 0, src[gf.ring_len - 1], src[0] + PI)
            } else {
                (i - 1, i, src[i - 1], src[i])
            };
            let t = (phi - plo) / (phi_hi - plo);
            let (za, zb) = (from.vertices[gf.index(lo, l)].z, from.vertices[gf.index(hi, l)].z);
            out.vertices[gt.index(k, l)].z = za + t * (zb - za);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    pub eps: f64,
    pub blend_width: f64,
    pub ring_phis: Vec<f64>,
    pub status: SolveStatus,
    pub retried: bool,
    pub iterations: usize,
    /// Final area in the stage's glued metric.
    pub area: f64,
    /// Area of the part over φ ∈ [ε₀, π − ε₀] in the unglued metric.
    pub core_area: f64,
    /// Relative change of `core_area` against the previous stage.
    pub core_area_change: Option<f64>,
    /// Max |Δz| over rings shared with the previous stage inside the core.
    pub max_core_shift: Option<f64>,
    pub ring_spacing: f64,
    pub grad_norm: f64,
    pub max_residual: f64,
    pub area_monotone: bool,
    #[serde(skip)]
    pub telemetry: Vec<TelemetryRow>,
    #[serde(skip)]
    pub area_history: Vec<f64>,
    #[serde(skip)]
    pub mesh: Option<SurfaceMesh>,
}

impl StageRecord {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuationRecord {
    pub n: u32,
    pub stages: Vec<StageRecord>,
    pub complete: bool,
    pub failure: Option<String>,
}

impl ContinuationRecord {
    pub fn final_mesh(&self) -> Option<&SurfaceMesh> {
        self.stages.last().and_then(|s| s.mesh.as_ref())
    }
}

/// Area over triangles whose corners all lie in φ ∈ [ε₀, π − ε₀].
pub fn core_area(mesh: &SurfaceMesh, profile: &WarpProfile, eps0: f64) -> f64 {
    let metric = MetricField::base(profile.clone());
    (0..mesh.triangles.len())
        .map(|t| mesh.corners(t))
        .filter(|c| c.iter().all(|p| p[0] >= eps0 - PHI_TOL && p[0] <= PI - eps0 + PHI_TOL))
        .map(|c| crate::area::triangle_area(&metric, &c))
        .sum()
}

fn core_shift(prev: &SurfaceMesh, next: &SurfaceMesh, eps0: f64) -> f64 {
    let (gp, gn) = (prev.grid.expect("structured"), next.grid.expect("structured"));
    let mut worst: f64 = 0.0;
    for kn in 0..gn.ring_len {
        let phi = next.vertices[kn].phi;
        if phi < eps0 - PHI_TOL || phi > PI - eps0 + PHI_TOL {
            continue;
        }
        if let Some(kp) = (0..gp.ring_len).find(|&k| (prev.vertices[k].phi - phi).abs() <= PHI_TOL) {
            for l in 0..gn.levels {
                let d = (next.vertices[gn.index(kn, l)].z - prev.vertices[gp.index(kp, l)].z).abs();
                worst = worst.max(d);
            }
        }
    }
    worst
}

/// One solve plus, if it does not converge, a single retry from the final
/// iterate with a fresh search direction and twice the iteration budget.
fn solve_with_retry(
    initial: &SurfaceMesh,
    metric: &MetricField,
    cfg: &SolverConfig,
) -> Result<(crate::solver::SolveResult, bool)> {
    let first = minimize_area(initial, metric, cfg)?;
    if first.status == SolveStatus::Converged {
        return Ok((first, false));
    }
    let retry_cfg = SolverConfig { max_iterations: 2 * cfg.max_iterations, ..cfg.clone() };
    let mut second = minimize_area(&first.mesh, metric, &retry_cfg)?;
    let offset = first.iterations;
    let mut history = first.area_history;
    history.extend(second.area_history.iter().skip(1));
    let mut telemetry = first.telemetry;
    telemetry.extend(second.telemetry.iter().map(|r| TelemetryRow { iteration: r.iteration + offset, ..*r }));
    second.area_history = history;
    second.telemetry = telemetry;
    second.iterations += offset;
    Ok((second, true))
}

/// Solves stages ε₀, ε₀/2, … in their own glued metrics, each warm-started
/// from the previous stage resampled onto its ring layout.
pub fn continuation_run(
    profile: &WarpProfile,
    n: u32,
    schedule: &ContinuationSchedule,
    cfg: &SolverConfig,
) -> Result<ContinuationRecord> {
    schedule.validate()?;
    cfg.validate()?;
    let mut stages: Vec<StageRecord> = Vec::new();
    let mut previous: Option<SurfaceMesh> = None;
    let mut failure = None;
    for j in 0..=schedule.halvings {
        let eps = schedule.eps(j);
        let blend = schedule.blend_fraction * eps;
        let chart = BoxChart::new(n, eps)?;
        let metric = MetricField::glued(profile.clone(), build_glue_profile(eps, blend)?);
        let phis = schedule.ring_layout(j);
        let template = initial_annulus_on(&chart, &phis, schedule.levels(n))?;
        let start = match &previous {
            Some(prev) => resample_rings(prev, &template)?,
            None => template,
        };
        let (res, retried) = solve_with_retry(&start, &metric, cfg)?;
        let core = core_area(&res.mesh, profile, schedule.eps0);
        let (change, shift) = match (stages.last(), &previous) {
            (Some(p), Some(pm)) => (Some((core - p.core_area) / p.core_area), Some(core_shift(pm, &res.mesh, schedule.eps0))),
            _ => (None, None),
        };
        let record = StageRecord {
            stage: j,
            eps,
            blend_width: blend,
            ring_phis: phis,
            status: res.status,
            retried,
            iterations: res.iterations,
            area: res.final_area(),
            core_area: core,
            core_area_change: change,
            max_core_shift: shift,
            ring_spacing: PI / schedule.rings as f64,
            grad_norm: res.grad_norm,
            max_residual: res.max_residual,
            area_monotone: res.area_history.windows(2).all(|w| w[1] < w[0]),
            telemetry: res.telemetry,
            area_history: res.area_history,
            mesh: Some(res.mesh.clone()),
        };
        let ok = record.converged();
        stages.push(record);
        if !ok {
            failure = Some(format!("stage {j} (eps = {eps}) ended {:?} after a retry", res.status));
            break;
        }
        previous = Some(res.mesh);
    }
    Ok(ContinuationRecord { n, complete: failure.is_none(), failure, stages })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutCurve {
    /// φ of the wall the curve lies on.
    pub wall_phi: f64,
    pub points: Vec<ChartPoint>,
    pub theta_monotone: bool,
    pub z_monotone: bool,
}

impl CutCurve {
    fn new(wall_phi: f64, mut points: Vec<ChartPoint>) -> Self {
        if points.len() > 1 && points[0].z > points[points.len() - 1].z {
            points.reverse();
        }
        let strictly = |f: &dyn Fn(&ChartPoint) -> f64| {
            let d: Vec<f64> = points.windows(2).map(|w| f(&w[1]) - f(&w[0])).collect();
            d.iter().all(|&x| x > 0.0) || d.iter().all(|&x| x < 0.0)
        };
        let theta_monotone = strictly(&|p| p.theta);
        let z_monotone = strictly(&|p| p.z);
        Self { wall_phi, points, theta_monotone, z_monotone }
    }
}

#[derive(Debug, Clone)]
pub struct Truncation {
    pub mesh: SurfaceMesh,
    pub cuts: Vec<CutCurve>,
}

/// The part of `mesh` over φ ∈ [ε, π − ε], in the cover chart. Triangles
/// crossing a wall are clipped; vertices already inside are never moved.
pub fn truncate_to_core(mesh: &SurfaceMesh, eps: f64) -> Result<Truncation> {
    if !(eps > 0.0 && eps < PI / 2.0) {
        return Err(Error::InvalidArgument(format!("eps = {eps} outside (0, pi/2)")));
    }
    if mesh.chart == ChartKind::Base {
        return Err(Error::InvalidArgument("truncation expects a box or cover chart mesh".into()));
    }
    let (lo, hi) = (eps, PI - eps);
    let inside = |phi: f64| phi >= lo - PHI_TOL && phi <= hi + PHI_TOL;
    let wraps = (0..mesh.triangles.len()).any(|t| {
        let c = mesh.corners(t);
        c.iter().zip(mesh.triangles[t]).any(|(p, v)| p[0] != mesh.vertices[v].phi)
    });
    if !wraps && mesh.vertices.iter().all(|p| inside(p.phi)) {
        return Ok(Truncation { mesh: mesh.clone(), cuts: Vec::new() });
    }
    if let Some(t) = truncate_structured(mesh, lo, hi) {
        return t;
    }
    truncate_general(mesh, lo, hi)
}

/// Fast path: a structured grid with whole rings on both walls.
fn truncate_structured(mesh: &SurfaceMesh, lo: f64, hi: f64) -> Option<Result<Truncation>> {
    let g = mesh.grid?;
    let ring_phi: Vec<f64> = (0..g.ring_len).map(|k| mesh.vertices[k].phi).collect();
    let rings_constant = (0..g.levels).all(|l| (0..g.ring_len).all(|k| mesh.vertices[g.index(k, l)].phi == ring_phi[k]));
    let has = |w: f64| ring_phi.iter().any(|&p| (p - w).abs() <= PHI_TOL);
    if !rings_constant || !has(lo) || !has(hi) || ring_phi.windows(2).any(|w| !(w[1] > w[0])) {
        return None;
    }
    let keep: Vec<usize> = (0..g.ring_len)
        .filter(|&k| ring_phi[k] >= lo - PHI_TOL && ring_phi[k] <= hi + PHI_TOL)
        .collect();
    let rc = keep.len();
    let grid = Grid { ring_len: rc, levels: g.levels, ring_periodic: false };
    let mut vertices = Vec::with_capacity(grid.vertex_count());
    let mut flags = Vec::with_capacity(grid.vertex_count());
    for l in 0..g.levels {
        for (i, &k) in keep.iter().enumerate() {
            let v = g.index(k, l);
            vertices.push(mesh.vertices[v]);
            let wall = i == 0 || i + 1 == rc;
            flags.push(if wall && mesh.flags[v] == VertexFlag::Interior { VertexFlag::Fixed } else { mesh.flags[v] });
        }
    }
    let core = SurfaceMesh::from_grid(vertices, flags, grid, ChartKind::Cover, mesh.free_axes);
    let cuts = [(0, lo), (rc - 1, hi)]
        .into_iter()
        .map(|(i, w)| CutCurve::new(w, (0..g.levels).map(|l| core.vertices[grid.index(i, l)]).collect()))
        .collect();
    Some(Ok(Truncation { mesh: core, cuts }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum ClipKey {
    Vertex(usize),
    Cut { edge: [usize; 2], wall: u8 },
}

#[derive(Debug, Clone, Copy)]
struct ClipVertex {
    p: [f64; 3],
    key: ClipKey,
    /// Original edge containing the segment to the next polygon vertex.
    edge_to_next: Option<[usize; 2]>,
}

fn ordered(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

/// Sutherland–Hodgman against the half-space sign·(φ − w) ≥ 0.
fn clip(poly: &[ClipVertex], w: f64, sign: f64, wall: u8) -> Vec<ClipVertex> {
    let d = |v: &ClipVertex| sign * (v.p[0] - w);
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let (da, db) = (d(&a), d(&b));
        let crossing = |edge_to_next: Option<[usize; 2]>| {
            let t = da / (da - db);
            let mut p = [0.0; 3];
            for k in 0..3 {
                p[k] = a.p[k] + t * (b.p[k] - a.p[k]);
            }
            p[0] = w;
            let edge = a.edge_to_next.unwrap_or([usize::MAX; 2]);
            ClipVertex { p, key: ClipKey::Cut { edge, wall }, edge_to_next }
        };
        match (da >= 0.0, db >= 0.0) {
            (true, true) => out.push(a),
            (true, false) => {
                if da > 0.0 {
                    out.push(a);
                    out.push(crossing(None));
                } else {
                    out.push(ClipVertex { edge_to_next: None, ..a });
                }
            }
            (false, true) => {
                if db > 0.0 {
                    out.push(crossing(a.edge_to_next));
                }
            }
            (false, false) => {}
        }
    }
    out
}

/// General path: clip every triangle, weld by key, fan-triangulate.
fn truncate_general(mesh: &SurfaceMesh, lo: f64, hi: f64) -> Result<Truncation> {
    let mut index: BTreeMap<ClipKey, usize> = BTreeMap::new();
    let mut vertices: Vec<ChartPoint> = Vec::new();
    let mut flags: Vec<VertexFlag> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    for t in 0..mesh.triangles.len() {
        let tri = mesh.triangles[t];
        let mut c = mesh.corners(t);
        let shift = PI * ((c[0][0] + c[1][0] + c[2][0]) / 3.0 / PI).floor();
        if mesh.chart.period(0).is_some() {
            for p in &mut c {
                p[0] -= shift;
            }
        }
        let mut poly: Vec<ClipVertex> = (0..3)
            .map(|i| ClipVertex {
                p: c[i],
                key: ClipKey::Vertex(tri[i]),
                edge_to_next: Some(ordered(tri[i], tri[(i + 1) % 3])),
            })
            .collect();
        poly = clip(&poly, lo, 1.0, 0);
        if poly.len() >= 3 {
            poly = clip(&poly, hi, -1.0, 1);
        }
        if poly.len() < 3 {
            continue;
        }
        let ids: Vec<usize> = poly
            .iter()
            .map(|v| {
                *index.entry(v.key).or_insert_with(|| {
                    let (point, flag) = match v.key {
                        ClipKey::Vertex(o) => (mesh.vertices[o], mesh.flags[o]),
                        ClipKey::Cut { .. } => (ChartPoint::from_array(v.p), VertexFlag::Fixed),
                    };
                    vertices.push(point);
                    flags.push(flag);
                    vertices.len() - 1
                })
            })
            .collect();
        for k in 1..ids.len() - 1 {
            let f = [ids[0], ids[k], ids[k + 1]];
            if f[0] != f[1] && f[1] != f[2] && f[0] != f[2] {
                triangles.push(f);
            }
        }
    }
    if triangles.is_empty() {
        return Err(Error::Pipeline("truncation left no triangles: the surface lies in the tubes".into()));
    }
    let core = SurfaceMesh { vertices, triangles, flags, grid: None, chart: ChartKind::Cover, free_axes: mesh.free_axes };
    let mut cuts = Vec::new();
    for w in [lo, hi] {
        let on = |v: usize| (core.vertices[v].phi - w).abs() <= PHI_TOL;
        let segs: Vec<[usize; 2]> = boundary_segments(&core.triangles).into_iter().filter(|e| on(e[0]) && on(e[1])).collect();
        for chain in chain_segments(&segs) {
            cuts.push(CutCurve::new(w, chain.iter().map(|&v| core.vertices[v]).collect()));
        }
    }
    Ok(Truncation { mesh: core, cuts })
}

fn boundary_segments(triangles: &[[usize; 3]]) -> Vec<[usize; 2]> {
    let mut count: BTreeMap<[usize; 2], usize> = BTreeMap::new();
    for t in triangles {
        for e in [[t[0], t[1]], [t[1], t[2]], [t[2], t[0]]] {
            *count.entry(ordered(e[0], e[1])).or_default() += 1;
        }
    }
    count.into_iter().filter(|(_, c)| *c == 1).map(|(e, _)| e).collect()
}

/// Chains segments into maximal polylines, starting from degree-one ends.
fn chain_segments(segs: &[[usize; 2]]) -> Vec<Vec<usize>> {
    let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for e in segs {
        adj.entry(e[0]).or_default().push(e[1]);
        adj.entry(e[1]).or_default().push(e[0]);
    }
    let mut chains = Vec::new();
    loop {
        let start = adj
            .iter()
            .find(|(_, v)| v.len() == 1)
            .or_else(|| adj.iter().find(|(_, v)| !v.is_empty()))
            .map(|(&k, _)| k);
        let Some(start) = start else { break };
        let mut chain = vec![start];
        let mut cur = start;
        while let Some(next) = adj.get_mut(&cur).and_then(|v| v.pop()) {
            if let Some(back) = adj.get_mut(&next) {
                if let Some(i) = back.iter().position(|&x| x == cur) {
                    back.swap_remove(i);
                }
            }
            chain.push(next);
            cur = next;
        }
        chains.push(chain);
    }
    chains
}

/// θ reduced mod 2π; the mesh is relabelled as living in Ω.
pub fn project_mesh_to_base(mesh: &SurfaceMesh) -> Result<SurfaceMesh> {
    if mesh.chart.period(0).is_some() {
        return Err(Error::InvalidArgument("project the truncated core, not the glued annulus".into()));
    }
    let mut out = mesh.clone();
    for v in &mut out.vertices {
        v.theta = wrap_theta(v.theta);
    }
    out.chart = ChartKind::Base;
    Ok(out)
}

/// Adds an axis ring at φ = 0 before the first ring and at φ = π after the
/// last, each level carrying the (θ, z) of the adjacent ring.
pub fn extend_to_axis(core: &SurfaceMesh) -> Result<SurfaceMesh> {
    let g = core
        .grid
        .filter(|g| !g.ring_periodic)
        .ok_or_else(|| Error::Pipeline("axis extension needs a structured, non-periodic core".into()))?;
    let grid = Grid { ring_len: g.ring_len + 2, levels: g.levels, ring_periodic: false };
    let mut vertices = Vec::with_capacity(grid.vertex_count());
    let mut flags = Vec::with_capacity(grid.vertex_count());
    for l in 0..g.levels {
        let first = core.vertices[g.index(0, l)];
        let last = core.vertices[g.index(g.ring_len - 1, l)];
        vertices.push(ChartPoint { phi: 0.0, ..first });
        flags.push(VertexFlag::Axis);
        for k in 0..g.ring_len {
            vertices.push(core.vertices[g.index(k, l)]);
            flags.push(core.flags[g.index(k, l)]);
        }
        vertices.push(ChartPoint { phi: PI, ..last });
        flags.push(VertexFlag::Axis);
    }
    Ok(SurfaceMesh::from_grid(vertices, flags, grid, core.chart, core.free_axes))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssemblyReport {
    pub core_area: f64,
    pub area: f64,
    pub euler_characteristic: i64,
    pub boundary_loops: usize,
    pub boundary_heights: Vec<f64>,
    pub seam_edges: usize,
    /// max |π − dihedral angle| over interior edges touching an axis.
    pub seam_dihedral_deviation: f64,
}

#[derive(Debug, Clone)]
pub struct AssembledSurface {
    pub mesh: SurfaceMesh,
    pub report: AssemblyReport,
}

/// Closes a base-chart core (first and last rings on the axes) with its
/// image under θ ↦ θ + π. Each level becomes one loop
/// [axis 0, core rings, axis π, copied rings in reverse]. The copy uses the
/// mirrored quad diagonal so every copied triangle is an exact image.
pub fn reflect_and_assemble(core: &SurfaceMesh, profile: &WarpProfile, seam_tol: f64) -> Result<AssembledSurface> {
    let g = core
        .grid
        .filter(|g| !g.ring_periodic && g.ring_len >= 3)
        .ok_or_else(|| Error::Assembly("core must be a structured, non-periodic grid".into()))?;
    if core.chart != ChartKind::Base {
        return Err(Error::Assembly("core must be projected to the base chart".into()));
    }
    let rc = g.ring_len;
    for l in 0..g.levels {
        let (a, b) = (core.vertices[g.index(0, l)], core.vertices[g.index(rc - 1, l)]);
        if a.phi.abs() > seam_tol || (PI - b.phi).abs() > seam_tol {
            return Err(Error::Assembly(format!(
                "level {l}: seam vertices at phi = {} and {} are not on the axes (tol {seam_tol})",
                a.phi, b.phi
            )));
        }
        for k in 1..rc - 1 {
            let p = core.vertices[g.index(k, l)].phi;
            if p <= seam_tol || p >= PI - seam_tol {
                return Err(Error::Assembly(format!("level {l}: interior ring {k} touches an axis")));
            }
        }
    }
    // cut rings become interior once the surface is closed at the axes
    let seam_flag = |l: usize| if l == 0 || l + 1 == g.levels { VertexFlag::Fixed } else { VertexFlag::Interior };
    let p_len = 2 * (rc - 1);
    let grid = Grid { ring_len: p_len, levels: g.levels, ring_periodic: true };
    let mut vertices = Vec::with_capacity(grid.vertex_count());
    let mut flags = Vec::with_capacity(grid.vertex_count());
    for l in 0..g.levels {
        for k in 0..rc {
            let v = g.index(k, l);
            let mut p = core.vertices[v];
            let axis = k == 0 || k == rc - 1;
            if axis {
                p.phi = if k == 0 { 0.0 } else { PI };
            }
            vertices.push(p);
            flags.push(if axis { VertexFlag::Axis } else { seam_flag(l) });
        }
        for k in (1..rc - 1).rev() {
            let v = g.index(k, l);
            let p = core.vertices[v];
            vertices.push(ChartPoint { theta: wrap_theta(p.theta + PI), ..p });
            flags.push(seam_flag(l));
        }
    }
    // core loop position k ↦ copy loop position
    let image = |k: usize| if k == 0 || k == rc - 1 { k } else { p_len - k };
    let mut triangles = Vec::with_capacity(4 * (rc - 1) * (g.levels - 1));
    for l in 0..g.levels - 1 {
        for k in 0..rc - 1 {
            let (a, b, c, d) = (grid.index(k, l), grid.index(k + 1, l), grid.index(k + 1, l + 1), grid.index(k, l + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
        for k in 0..rc - 1 {
            let (a, b) = (grid.index(image(k), l), grid.index(image(k + 1), l));
            let (c, d) = (grid.index(image(k + 1), l + 1), grid.index(image(k), l + 1));
            triangles.push([a, c, b]);
            triangles.push([a, d, c]);
        }
    }
    let mesh = SurfaceMesh { vertices, triangles, flags, grid: Some(grid), chart: ChartKind::Base, free_axes: HEIGHT_GRAPH };
    let metric = MetricField::base(profile.clone());
    let loops = boundary_loops(&mesh.triangles);
    let mut boundary_heights: Vec<f64> = loops.iter().map(|l| mesh.vertices[l[0]].z).collect();
    boundary_heights.sort_by(f64::total_cmp);
    let (seam_edges, seam_dihedral_deviation) = seam_dihedral(&mesh, profile);
    let report = AssemblyReport {
        core_area: riemannian_area(core, &metric)?,
        area: riemannian_area(&mesh, &metric)?,
        euler_characteristic: euler_characteristic(&mesh.triangles),
        boundary_loops: loops.len(),
        boundary_heights,
        seam_edges,
        seam_dihedral_deviation,
    };
    Ok(AssembledSurface { mesh, report })
}

/// Pole-centred coordinates (r cos θ, r sin θ, z) with r the angle to the pole.
fn pole_chart(p: ChartPoint, north: bool) -> [f64; 3] {
    let r = if north { p.phi } else { PI - p.phi };
    let (s, c) = p.theta.sin_cos();
    [r * c, r * s, p.z]
}

/// Full metric in pole-centred coordinates; smooth through r = 0.
fn pole_metric(profile: &WarpProfile, x: [f64; 3]) -> [[f64; 3]; 3] {
    let w2 = profile.value(x[2]).powi(2);
    let r2 = x[0] * x[0] + x[1] * x[1];
    let mut g = [[0.0; 3]; 3];
    if r2 < 1e-24 {
        g[0][0] = w2;
        g[1][1] = w2;
    } else {
        let r = r2.sqrt();
        let s = r.sin() / r;
        let u = [x[0], x[1]];
        let v = [-x[1], x[0]];
        for i in 0..2 {
            for j in 0..2 {
                g[i][j] = w2 * (u[i] * u[j] + s * s * v[i] * v[j]) / r2;
            }
        }
    }
    g[2][2] = 1.0;
    g
}

fn inner3(g: &[[f64; 3]; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            s += a[i] * g[i][j] * b[j];
        }
    }
    s
}

/// Dihedral angle along e0→e1 between the triangles reaching a and b.
fn dihedral_full(g: &[[f64; 3]; 3], e0: [f64; 3], e1: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let sub = |p: [f64; 3], q: [f64; 3]| [p[0] - q[0], p[1] - q[1], p[2] - q[2]];
    let e = sub(e1, e0);
    let ee = inner3(g, e, e);
    let perp = |p: [f64; 3]| {
        let d = sub(p, e0);
        let s = inner3(g, d, e) / ee;
        [d[0] - s * e[0], d[1] - s * e[1], d[2] - s * e[2]]
    };
    let (wa, wb) = (perp(a), perp(b));
    let c = inner3(g, wa, wb) / (inner3(g, wa, wa) * inner3(g, wb, wb)).sqrt();
    c.clamp(-1.0, 1.0).acos()
}

/// Count of interior edges with an axis endpoint, and the max deviation of
/// their dihedral angles from π, measured in pole-centred coordinates.
pub fn seam_dihedral(mesh: &SurfaceMesh, profile: &WarpProfile) -> (usize, f64) {
    let mut faces: BTreeMap<[usize; 2], Vec<usize>> = BTreeMap::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for e in [[tri[0], tri[1]], [tri[1], tri[2]], [tri[2], tri[0]]] {
            faces.entry(ordered(e[0], e[1])).or_default().push(t);
        }
    }
    let mut count = 0;
    let mut worst: f64 = 0.0;
    for (e, ts) in &faces {
        let axis_end = e.iter().copied().find(|&v| mesh.flags[v] == VertexFlag::Axis);
        let (Some(pole), [t0, t1]) = (axis_end, ts.as_slice()) else { continue };
        let north = mesh.vertices[pole].phi < PI / 2.0;
        let other = |t: usize| *mesh.triangles[t].iter().find(|v| !e.contains(v)).expect("triangle");
        let q = |v: usize| pole_chart(mesh.vertices[v], north);
        let (p0, p1) = (q(e[0]), q(e[1]));
        let mid = [(p0[0] + p1[0]) / 2.0, (p0[1] + p1[1]) / 2.0, (p0[2] + p1[2]) / 2.0];
        let g = pole_metric(profile, mid);
        let angle = dihedral_full(&g, p0, p1, q(other(*t0)), q(other(*t1)));
        count += 1;
        worst = worst.max((PI - angle).abs());
    }
    (count, worst)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the run directory.
    pub path: String,
    pub sha256: String,
}

pub fn file_entry(root: &Path, rel: &str) -> Result<FileEntry> {
    let bytes = std::fs::read(root.join(rel))?;
    Ok(FileEntry { path: rel.to_string(), sha256: hex::encode(Sha256::digest(&bytes)) })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageEntry {
    #[serde(flatten)]
    pub record: StageRecord,
    pub mesh_file: FileEntry,
    pub telemetry_file: FileEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutSummary {
    pub wall_phi: f64,
    pub points: usize,
    pub theta_monotone: bool,
    pub z_monotone: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordEntry {
    pub n: u32,
    pub complete: bool,
    pub error: Option<String>,
    pub stages: Vec<StageEntry>,
    pub cuts: Vec<CutSummary>,
    pub core_file: Option<FileEntry>,
    pub assembled_file: Option<FileEntry>,
    pub assembly: Option<AssemblyReport>,
    pub self_intersections: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub crate_version: String,
    pub config_hash: String,
    pub config: BTreeMap<String, String>,
    pub records: Vec<RecordEntry>,
}

impl RunManifest {
    pub fn load(run_dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(run_dir.join(MANIFEST))?)?)
    }

    pub fn all_complete(&self) -> bool {
        self.records.iter().all(|r| r.complete)
    }
}

pub const MANIFEST: &str = "manifest.json";

/// In-memory results of one n, alongside what was persisted.
#[derive(Debug, Clone)]
pub struct SequenceEntry {
    pub n: u32,
    pub record: Option<ContinuationRecord>,
    pub truncation: Option<Truncation>,
    pub assembled: Option<AssembledSurface>,
    pub error: Option<String>,
}

/// Truncate the final stage to its own core, project, close up at the axes
/// and reflect.
pub fn assemble_record(record: &ContinuationRecord, profile: &WarpProfile) -> Result<(Truncation, AssembledSurface)> {
    let stage = record.stages.last().ok_or_else(|| Error::Pipeline("record has no stages".into()))?;
    let mesh = stage.mesh.as_ref().ok_or_else(|| Error::Pipeline("stage mesh not loaded".into()))?;
    let truncation = truncate_to_core(mesh, stage.eps)?;
    let projected = project_mesh_to_base(&truncation.mesh)?;
    let closed = extend_to_axis(&projected)?;
    let assembled = reflect_and_assemble(&closed, profile, SEAM_TOL)?;
    Ok((truncation, assembled))
}

fn provenance(n: u32, stage: Option<usize>, cfg_hash: &str) -> serde_json::Value {
    serde_json::json!({ "n": n, "stage": stage, "config_hash": cfg_hash })
}

fn run_one(n: u32, cfg: &RunConfig, root: &Path, cfg_hash: &str) -> (RecordEntry, SequenceEntry) {
    let mut entry = RecordEntry {
        n,
        complete: false,
        error: None,
        stages: Vec::new(),
        cuts: Vec::new(),
        core_file: None,
        assembled_file: None,
        assembly: None,
        self_intersections: None,
    };
    let mut seq = SequenceEntry { n, record: None, truncation: None, assembled: None, error: None };
    let result = (|| -> Result<()> {
        let dir = format!("n{n}");
        std::fs::create_dir_all(root.join(&dir))?;
        let profile = cfg.warp_profile();
        let record = continuation_run(&profile, n, &ContinuationSchedule::from_config(cfg), &cfg.solver(n))?;
        for s in &record.stages {
            let mesh_rel = format!("{dir}/stage{}.obj", s.stage);
            let tel_rel = format!("{dir}/stage{}_telemetry.csv", s.stage);
            let mesh = s.mesh.as_ref().expect("fresh stage carries its mesh");
            write_mesh(mesh, &root.join(&mesh_rel), provenance(n, Some(s.stage), cfg_hash))?;
            write_telemetry_csv(&s.telemetry, &root.join(&tel_rel))?;
            entry.stages.push(StageEntry {
                record: s.clone(),
                mesh_file: file_entry(root, &mesh_rel)?,
                telemetry_file: file_entry(root, &tel_rel)?,
            });
        }
        entry.complete = record.complete;
        entry.error = record.failure.clone();
        if record.complete {
            let (truncation, assembled) = assemble_record(&record, &profile)?;
            let core_rel = format!("{dir}/core.obj");
            let asm_rel = format!("{dir}/assembled.obj");
            write_mesh(&truncation.mesh, &root.join(&core_rel), provenance(n, None, cfg_hash))?;
            write_mesh(&assembled.mesh, &root.join(&asm_rel), provenance(n, None, cfg_hash))?;
            entry.core_file = Some(file_entry(root, &core_rel)?);
            entry.assembled_file = Some(file_entry(root, &asm_rel)?);
            entry.cuts = truncation
                .cuts
                .iter()
                .map(|c| CutSummary {
                    wall_phi: c.wall_phi,
                    points: c.points.len(),
                    theta_monotone: c.theta_monotone,
                    z_monotone: c.z_monotone,
                })
                .collect();
            entry.self_intersections = Some(self_intersections(&assembled.mesh, INTERSECTION_TOL).len());
            entry.assembly = Some(assembled.report.clone());
            seq.truncation = Some(truncation);
            seq.assembled = Some(assembled);
        }
        seq.record = Some(record);
        Ok(())
    })();
    if let Err(e) = result {
        entry.complete = false;
        entry.error = Some(e.to_string());
        seq.error = Some(e.to_string());
    }
    (entry, seq)
}

/// Runs every n of the config (concurrently across n), persisting stage
/// meshes, telemetry, the core and the assembled surface under `out_dir`,
/// then writes the manifest. Failures of one n are recorded, not raised.
pub fn run_sequence(cfg: &RunConfig) -> Result<(RunManifest, Vec<SequenceEntry>)> {
    cfg.validate()?;
    let root: PathBuf = cfg.out_dir.clone();
    std::fs::create_dir_all(&root)?;
    let hash = cfg.hash();
    let results: Vec<(RecordEntry, SequenceEntry)> =
        cfg.n_list.par_iter().map(|&n| run_one(n, cfg, &root, &hash)).collect();
    let (records, entries): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let mut config = cfg.canonical();
    config.remove("out_dir");
    config.remove("threads");
    let manifest = RunManifest { crate_version: env!("CARGO_PKG_VERSION").to_string(), config_hash: hash, config, records };
    std::fs::write(root.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok((manifest, entries))
}

/// Mesh files a manifest refers to, with a verdict on each: `Ok` when the
/// file and its sidecar exist and the hash matches.
pub fn verify_run_files(run_dir: &Path, manifest: &RunManifest) -> Vec<(String, std::result::Result<(), String>)> {
    let mut files: Vec<&FileEntry> = Vec::new();
    for r in &manifest.records {
        for s in &r.stages {
            files.push(&s.mesh_file);
            files.push(&s.telemetry_file);
        }
        files.extend(r.core_file.iter());
        files.extend(r.assembled_file.iter());
    }
    files
        .into_iter()
        .map(|f| {
            let p = run_dir.join(&f.path);
            let verdict = match file_entry(run_dir, &f.path) {
                Err(_) => Err("missing".to_string()),
                Ok(e) if e.sha256 != f.sha256 => Err("hash mismatch".to_string()),
                Ok(_) if f.path.ends_with(".obj") && !sidecar_path(&p).exists() => Err("missing sidecar".to_string()),
                Ok(_) => Ok(()),
            };
            (f.path.clone(), verdict)
        })
        .collect()
}

/// Concatenates the per-stage telemetry files of a run into one CSV with
/// columns n, stage, iteration, area, grad_norm, max_residual, step.
pub fn write_area_histories(run_dir: &Path, manifest: &RunManifest, dest: &Path) -> Result<()> {
    use std::io::Write as _;
    let mut out = std::io::BufWriter::new(std::fs::File::create(dest)?);
    writeln!(out, "n,stage,iteration,area,grad_norm,max_residual,step")?;
    for r in &manifest.records {
        for s in &r.stages {
            let text = std::fs::read_to_string(run_dir.join(&s.telemetry_file.path))?;
            for line in text.lines().skip(1) {
                writeln!(out, "{},{},{line}", r.n, s.record.stage)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
