//! Measurements on solved and assembled surfaces: trace monotonicity, sheet
//! counts along a transversal, a discrete |A|² proxy, disk structure of ball
//! intersections, and the per-n lamination report.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::mesh::intersect::self_intersections;
use crate::mesh::{boundary_loops, euler_characteristic, nearest_image, ChartKind, SurfaceMesh, VertexFlag};
use crate::metric::{ChartPoint, MetricField};
use crate::pipeline::INTERSECTION_TOL;
use crate::warp::WarpProfile;

/// Transversals and census regions stay this far (in φ) from the axes.
pub const AXIS_MARGIN: f64 = 0.1;
const TOUCH_TOL: f64 = 1e-12;
const DEDUP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceViolation {
    pub phi: f64,
    /// First ring of the pair the plane cuts.
    pub ring: usize,
    /// Level at which the polyline turns back.
    pub level: usize,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub planes: usize,
    pub polylines: usize,
    pub passed: usize,
    pub pass_fraction: f64,
    /// Planes that met no admissible ring pair.
    pub skipped: Vec<f64>,
    pub worst: Option<TraceViolation>,
}

/// Cuts the mesh with `planes` planes φ = (s + ½)π/planes and checks that
/// along every resulting polyline both θ and z are strictly monotone in the
/// level index. Ring pairs touching an axis are not cut.
pub fn trace_monotonicity(mesh: &SurfaceMesh, planes: usize) -> Result<TraceReport> {
    let g = mesh
        .grid
        .ok_or_else(|| Error::InvalidArgument("trace check needs a structured mesh".into()))?;
    if planes == 0 {
        return Err(Error::InvalidArgument("at least one plane".into()));
    }
    let phi_period = mesh.chart.period(0);
    let theta_period = mesh.chart.period(1);
    let pairs: Vec<(usize, usize)> = (0..g.ring_len - 1)
        .map(|k| (k, k + 1))
        .chain(g.ring_periodic.then_some((g.ring_len - 1, 0)))
        .collect();
    let mut polylines = 0;
    let mut passed = 0;
    let mut skipped = Vec::new();
    let mut worst: Option<TraceViolation> = None;
    for s in 0..planes {
        let target = PI * (s as f64 + 0.5) / planes as f64;
        let mut hit = false;
        for &(ka, kb) in &pairs {
            let (va, vb) = (g.index(ka, 0), g.index(kb, 0));
            if mesh.flags[va] == VertexFlag::Axis || mesh.flags[vb] == VertexFlag::Axis {
                continue;
            }
            let a = mesh.vertices[va].phi;
            let mut b = mesh.vertices[vb].phi;
            if let Some(p) = phi_period {
                b = a + nearest_image(b - a, p);
            }
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let shifted = match phi_period {
                Some(p) if target + p <= hi => target + p,
                Some(p) if target - p >= lo => target - p,
                _ => target,
            };
            if !(shifted >= lo && shifted <= hi) || hi == lo {
                continue;
            }
            hit = true;
            let t = (shifted - a) / (b - a);
            let point = |l: usize| {
                let (p, mut q) = (mesh.vertices[g.index(ka, l)], mesh.vertices[g.index(kb, l)]);
                if let Some(tp) = theta_period {
                    q.theta = p.theta + nearest_image(q.theta - p.theta, tp);
                }
                (p.theta + t * (q.theta - p.theta), p.z + t * (q.z - p.z))
            };
            let pts: Vec<(f64, f64)> = (0..g.levels).map(point).collect();
            let mut dtheta: Vec<f64> = pts.windows(2).map(|w| w[1].0 - w[0].0).collect();
            if let Some(tp) = theta_period {
                for d in &mut dtheta {
                    *d = nearest_image(*d, tp);
                }
            }
            let dz: Vec<f64> = pts.windows(2).map(|w| w[1].1 - w[0].1).collect();
            let backward = |d: &[f64]| {
                let sign = d.iter().sum::<f64>().signum();
                d.iter()
                    .enumerate()
                    .map(|(i, &x)| (i, -sign * x))
                    .max_by(|x, y| x.1.total_cmp(&y.1))
                    .unwrap_or((0, f64::NEG_INFINITY))
            };
            let (lz, mz) = backward(&dz);
            let (lt, mt) = backward(&dtheta);
            polylines += 1;
            if mz < 0.0 && mt < 0.0 {
                passed += 1;
                continue;
            }
            let (level, magnitude) = if mz >= mt { (lz, mz) } else { (lt, mt) };
            if worst.is_none_or(|w| magnitude > w.magnitude) {
                worst = Some(TraceViolation { phi: target, ring: ka, level, magnitude });
            }
        }
        if !hit {
            skipped.push(target);
        }
    }
    let pass_fraction = if polylines == 0 { 0.0 } else { passed as f64 / polylines as f64 };
    Ok(TraceReport { planes, polylines, passed, pass_fraction, skipped, worst })
}

/// The vertical segment {φ = φ*, θ = θ*, 0 < |z| ≤ δ}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transversal {
    pub phi: f64,
    pub theta: f64,
    pub delta: f64,
}

impl Transversal {
    pub fn new(phi: f64, theta: f64, delta: f64) -> Result<Self> {
        if !(phi > AXIS_MARGIN && phi < PI - AXIS_MARGIN) {
            return Err(Error::InvalidArgument(format!("transversal phi = {phi} too close to an axis")));
        }
        if !(delta > 0.0 && delta < PI) || !theta.is_finite() {
            return Err(Error::InvalidArgument(format!("transversal delta = {delta} outside (0, pi)")));
        }
        Ok(Self { phi, theta, delta })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SheetCensus {
    pub transversal: Transversal,
    /// Crossings above Γ, z₁ > z₂ > … > 0.
    pub above: Vec<f64>,
    /// Crossings below Γ by decreasing |z|.
    pub below: Vec<f64>,
    /// Crossings with z = 0 exactly.
    pub on_gamma: usize,
    pub count: usize,
    /// z_{k+1} / z_k along `above`.
    pub spacing_ratios: Vec<f64>,
    /// The transversal touched an edge or vertex and was nudged once.
    pub perturbed: bool,
    /// Still touching after the nudge.
    pub touching: bool,
}

impl SheetCensus {
    /// All crossing heights in increasing order.
    pub fn heights(&self) -> Vec<f64> {
        let mut h: Vec<f64> = self.below.iter().chain(self.above.iter()).copied().collect();
        h.extend(std::iter::repeat_n(0.0, self.on_gamma));
        h.sort_by(f64::total_cmp);
        h
    }

    pub fn two_sided(&self) -> bool {
        !self.above.is_empty() && !self.below.is_empty()
    }

    pub fn min_abs_height(&self) -> Option<f64> {
        self.heights().into_iter().map(f64::abs).min_by(f64::total_cmp)
    }

    /// Coefficient of variation of the gaps between consecutive heights.
    pub fn gap_cv(&self) -> Option<f64> {
        let h = self.heights();
        if h.len() < 3 {
            return None;
        }
        let gaps: Vec<f64> = h.windows(2).map(|w| w[1] - w[0]).collect();
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / gaps.len() as f64;
        Some(var.sqrt() / mean)
    }
}

/// Heights of the mesh over (φ, θ), plus whether any hit is within the touch
/// tolerance of a triangle edge.
fn crossings(mesh: &SurfaceMesh, phi: f64, theta: f64) -> (Vec<f64>, bool) {
    let theta_period = mesh.chart.period(1);
    let phi_period = mesh.chart.period(0);
    let mut touch = false;
    let mut zs = Vec::new();
    for t in 0..mesh.triangles.len() {
        let c = mesh.corners(t);
        let mut q = [phi, theta];
        if let Some(p) = theta_period {
            q[1] = c[0][1] + nearest_image(theta - c[0][1], p);
        }
        if let Some(p) = phi_period {
            q[0] = c[0][0] + nearest_image(phi - c[0][0], p);
        }
        let (x0, y0) = (c[0][0], c[0][1]);
        let (ax, ay) = (c[1][0] - x0, c[1][1] - y0);
        let (bx, by) = (c[2][0] - x0, c[2][1] - y0);
        let det = ax * by - ay * bx;
        if det == 0.0 {
            continue;
        }
        let (px, py) = (q[0] - x0, q[1] - y0);
        let u = (px * by - py * bx) / det;
        let v = (ax * py - ay * px) / det;
        let w = 1.0 - u - v;
        let m = u.min(v).min(w);
        if m < -TOUCH_TOL {
            continue;
        }
        if m <= TOUCH_TOL {
            touch = true;
        }
        zs.push(w * c[0][2] + u * c[1][2] + v * c[2][2]);
    }
    (zs, touch)
}

/// Crossings of the transversal with the surface, deduplicated and split by
/// side of Γ = {z = 0}.
pub fn sheet_census(mesh: &SurfaceMesh, t: &Transversal) -> SheetCensus {
    let (mut zs, mut touching) = crossings(mesh, t.phi, t.theta);
    let perturbed = touching;
    if touching {
        let (z2, again) = crossings(mesh, t.phi + 1e-7, t.theta + 1.4142e-7);
        zs = z2;
        touching = again;
    }
    zs.retain(|z| z.abs() <= t.delta);
    zs.sort_by(f64::total_cmp);
    zs.dedup_by(|a, b| (*a - *b).abs() <= DEDUP_TOL);
    let mut above: Vec<f64> = zs.iter().copied().filter(|&z| z > 0.0).collect();
    above.reverse();
    let below: Vec<f64> = zs.iter().copied().filter(|&z| z < 0.0).collect();
    let on_gamma = zs.iter().filter(|&&z| z == 0.0).count();
    let spacing_ratios = above.windows(2).map(|w| w[1] / w[0]).collect();
    SheetCensus {
        transversal: *t,
        count: zs.len(),
        above,
        below,
        on_gamma,
        spacing_ratios,
        perturbed,
        touching,
    }
}

/// Number of connected curves in mesh ∩ {z = 0}, over triangles with all
/// corners in φ ∈ [margin, π − margin].
pub fn gamma_components(mesh: &SurfaceMesh, margin: f64) -> usize {
    let mut ids: BTreeMap<[usize; 2], usize> = BTreeMap::new();
    let mut parent: Vec<usize> = Vec::new();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let side = |v: usize| mesh.vertices[v].z >= 0.0;
    for tri in &mesh.triangles {
        if tri.iter().any(|&v| {
            let phi = mesh.vertices[v].phi;
            phi < margin || phi > PI - margin
        }) {
            continue;
        }
        let mut crossing = Vec::with_capacity(2);
        for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
            if side(a) != side(b) {
                let key = if a < b { [a, b] } else { [b, a] };
                let next = ids.len();
                let id = *ids.entry(key).or_insert_with(|| {
                    parent.push(next);
                    next
                });
                crossing.push(id);
            }
        }
        if let [x, y] = crossing[..] {
            let (rx, ry) = (find(&mut parent, x), find(&mut parent, y));
            parent[rx] = ry;
        }
    }
    let n = parent.len();
    let mut roots: Vec<usize> = (0..n).map(|x| find(&mut parent, x)).collect();
    roots.sort_unstable();
    roots.dedup();
    roots.len()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureBand {
    /// Angular distance to the nearest axis, [lo, hi).
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureMap {
    /// |A|² proxy; `None` at boundary and axis vertices.
    #[serde(skip)]
    pub values: Vec<Option<f64>>,
    pub excluded: usize,
    pub bands: Vec<CurvatureBand>,
}

fn axis_distance(phi: f64) -> f64 {
    let p = phi.rem_euclid(PI);
    p.min(PI - p)
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    if d.abs() < 1e-300 {
        return None;
    }
    let mut x = [0.0; 3];
    for (i, xi) in x.iter_mut().enumerate() {
        let mut m = a;
        for r in 0..3 {
            m[r][i] = b[r];
        }
        *xi = det(m) / d;
    }
    Some(x)
}

/// Discrete |A|² from the covariant variation of vertex normals across each
/// one-ring, fitted by a symmetric shape operator in least squares, then
/// aggregated by angular distance to the axes. `bands` are the interior
/// band edges; the outermost band is unbounded.
pub fn curvature_map(mesh: &SurfaceMesh, metric: &MetricField, bands: &[f64]) -> CurvatureMap {
    use crate::mesh::{cross, dot, sub};
    let star = mesh.vertex_triangles();
    let nv = mesh.vertices.len();
    // covector normals summed over the star, then raised and normalised
    let normals: Vec<Option<[f64; 3]>> = (0..nv)
        .into_par_iter()
        .map(|v| {
            let mut nu = [0.0; 3];
            for &t in &star[v] {
                let c = mesh.corners(t);
                let n = cross(sub(c[1], c[0]), sub(c[2], c[0]));
                for k in 0..3 {
                    nu[k] += n[k];
                }
            }
            let gd = metric.tensor(mesh.vertices[v]).diag();
            if gd.iter().any(|&x| !(x > 0.0)) {
                return None;
            }
            let up = [nu[0] / gd[0], nu[1] / gd[1], nu[2] / gd[2]];
            let len = dot(up, nu).sqrt();
            (len > 0.0).then(|| [up[0] / len, up[1] / len, up[2] / len])
        })
        .collect();
    // one-ring edge vectors in each triangle's unwrapped frame
    let ring = |v: usize| -> Vec<(usize, [f64; 3])> {
        let mut out: Vec<(usize, [f64; 3])> = Vec::new();
        for &t in &star[v] {
            let c = mesh.corners(t);
            let tri = mesh.triangles[t];
            let i = tri.iter().position(|&x| x == v).expect("star");
            for j in 0..3 {
                if j != i && !out.iter().any(|(w, _)| *w == tri[j]) {
                    out.push((tri[j], sub(c[j], c[i])));
                }
            }
        }
        out
    };
    let values: Vec<Option<f64>> = (0..nv)
        .into_par_iter()
        .map(|v| {
            if mesh.flags[v] != VertexFlag::Interior {
                return None;
            }
            // axis neighbours have no usable chart normal; fit without them
            let nbrs: Vec<(usize, [f64; 3])> =
                ring(v).into_iter().filter(|(w, _)| mesh.flags[*w] != VertexFlag::Axis).collect();
            if nbrs.len() < 3 {
                return None;
            }
            let nv_ = normals[v]?;
            let p = mesh.vertices[v];
            let jet = metric.jet(p.phi, p.z);
            let g = jet.tensor();
            let gamma = jet.christoffel();
            let tangent = |x: [f64; 3]| {
                let s = g.inner(x, nv_);
                [x[0] - s * nv_[0], x[1] - s * nv_[1], x[2] - s * nv_[2]]
            };
            // orthonormal tangent frame from the two best-separated edges
            let t1 = {
                let e = tangent(nbrs[0].1);
                let l = g.norm(e);
                [e[0] / l, e[1] / l, e[2] / l]
            };
            let t2 = nbrs
                .iter()
                .map(|(_, e)| {
                    let e = tangent(*e);
                    let s = g.inner(e, t1);
                    [e[0] - s * t1[0], e[1] - s * t1[1], e[2] - s * t1[2]]
                })
                .max_by(|a, b| g.norm(*a).total_cmp(&g.norm(*b)))?;
            let l2 = g.norm(t2);
            if !(l2 > 0.0) {
                return None;
            }
            let t2 = [t2[0] / l2, t2[1] / l2, t2[2] / l2];
            let mut ata = [[0.0; 3]; 3];
            let mut atb = [0.0; 3];
            for (w, e) in &nbrs {
                let nw = normals[*w]?;
                let mut d = [nw[0] - nv_[0], nw[1] - nv_[1], nw[2] - nv_[2]];
                for k in 0..3 {
                    for i in 0..3 {
                        for j in 0..3 {
                            d[k] += gamma[k][i][j] * e[i] * nv_[j];
                        }
                    }
                }
                let (a1, a2) = (g.inner(*e, t1), g.inner(*e, t2));
                let (b1, b2) = (g.inner(d, t1), g.inner(d, t2));
                for (row, rhs) in [([a1, a2, 0.0], b1), ([0.0, a1, a2], b2)] {
                    for r in 0..3 {
                        for c in 0..3 {
                            ata[r][c] += row[r] * row[c];
                        }
                        atb[r] += row[r] * rhs;
                    }
                }
            }
            let s = solve3(ata, atb)?;
            Some(s[0] * s[0] + 2.0 * s[1] * s[1] + s[2] * s[2])
        })
        .collect();
    let mut edges = vec![0.0];
    edges.extend_from_slice(bands);
    edges.push(f64::INFINITY);
    let bands = edges
        .windows(2)
        .map(|w| {
            let vals: Vec<f64> = (0..nv)
                .filter_map(|v| {
                    let d = axis_distance(mesh.vertices[v].phi);
                    values[v].filter(|_| d >= w[0] && d < w[1])
                })
                .collect();
            let count = vals.len();
            CurvatureBand {
                lo: w[0],
                hi: w[1],
                count,
                max: vals.iter().copied().fold(0.0, f64::max),
                mean: if count == 0 { 0.0 } else { vals.iter().sum::<f64>() / count as f64 },
            }
        })
        .collect();
    let excluded = values.iter().filter(|v| v.is_none()).count();
    CurvatureMap { values, excluded, bands }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiskVerdict {
    pub vertices: usize,
    pub triangles: usize,
    pub euler_characteristic: i64,
    pub boundary_loops: usize,
    pub disk: bool,
}

/// Components of the triangles lying inside the ball of radius `r` about
/// `center`, with their topology. Distances use the metric frozen at the
/// center and the nearest periodic image, so a center on an axis measures
/// θ-independent distance as it should.
pub fn disk_check(mesh: &SurfaceMesh, metric: &MetricField, center: ChartPoint, r: f64) -> Result<Vec<DiskVerdict>> {
    if !(r > 0.0 && r < PI / 2.0) {
        return Err(Error::InvalidArgument(format!("ball radius {r} outside (0, pi/2)")));
    }
    let g = metric.tensor(center);
    let c = center.to_array();
    let inside: Vec<bool> = mesh
        .vertices
        .iter()
        .map(|p| {
            let mut d = crate::mesh::sub(p.to_array(), c);
            for (axis, x) in d.iter_mut().enumerate() {
                if let Some(per) = mesh.chart.period(axis) {
                    *x = nearest_image(*x, per);
                }
            }
            g.inner(d, d) < r * r
        })
        .collect();
    // copies of one axis point (same pole, same height) are welded
    let mut pole_rep: BTreeMap<(bool, u64), usize> = BTreeMap::new();
    let rep: Vec<usize> = (0..mesh.vertices.len())
        .map(|v| {
            let p = mesh.vertices[v];
            if mesh.flags[v] != VertexFlag::Axis {
                return v;
            }
            *pole_rep.entry((p.phi < PI / 2.0, (p.z + 0.0).to_bits())).or_insert(v)
        })
        .collect();
    let tris: Vec<[usize; 3]> = mesh
        .triangles
        .iter()
        .filter(|t| t.iter().all(|&v| inside[v]))
        .map(|t| [rep[t[0]], rep[t[1]], rep[t[2]]])
        .filter(|t| t[0] != t[1] && t[1] != t[2] && t[2] != t[0])
        .collect();
    // triangle components through shared edges
    let mut parent: Vec<usize> = (0..tris.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut by_edge: BTreeMap<[usize; 2], usize> = BTreeMap::new();
    for (i, t) in tris.iter().enumerate() {
        for [a, b] in [[t[0], t[1]], [t[1], t[2]], [t[2], t[0]]] {
            let key = if a < b { [a, b] } else { [b, a] };
            if let Some(&j) = by_edge.get(&key) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri] = rj;
            } else {
                by_edge.insert(key, i);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<[usize; 3]>> = BTreeMap::new();
    for i in 0..tris.len() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(tris[i]);
    }
    Ok(groups
        .into_values()
        .map(|g| {
            let mut vs: Vec<usize> = g.iter().flatten().copied().collect();
            vs.sort_unstable();
            vs.dedup();
            let chi = euler_characteristic(&g);
            let loops = boundary_loops(&g).len();
            DiskVerdict { vertices: vs.len(), triangles: g.len(), euler_characteristic: chi, boundary_loops: loops, disk: chi == 1 && loops == 1 }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UlscVerdict {
    pub center: ChartPoint,
    pub radius: f64,
    pub components: usize,
    pub all_disks: bool,
}

/// Knobs shared by the per-n diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSettings {
    pub transversal: Transversal,
    pub curvature_bands: Vec<f64>,
    pub disk_radii: Vec<f64>,
    pub trace_planes: usize,
}

impl DiagnosticSettings {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        Ok(Self {
            transversal: Transversal::new(cfg.transversal_phi, cfg.transversal_theta, cfg.transversal_delta)?,
            curvature_bands: cfg.curvature_bands.clone(),
            disk_radii: cfg.disk_radii.clone(),
            trace_planes: 16,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaminationEntry {
    pub n: u32,
    pub census: SheetCensus,
    pub sheet_count: usize,
    pub two_sided: bool,
    pub min_abs_height: Option<f64>,
    pub mean_spacing_ratio: Option<f64>,
    pub gap_cv: Option<f64>,
    pub gamma_components: usize,
    pub trace: TraceReport,
    pub self_intersections: usize,
    pub curvature: CurvatureMap,
    pub ulsc: Vec<UlscVerdict>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrendSummary {
    pub counts_nondecreasing: bool,
    pub min_height_decreasing: bool,
    /// Least-squares slopes against n.
    pub count_slope: f64,
    pub min_height_slope: f64,
    /// Over entries with at least two crossings above Γ.
    pub spacing_ratio_slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaminationReport {
    pub entries: Vec<LaminationEntry>,
    pub two_sided_all: bool,
    /// Present only with at least two entries.
    pub trend: Option<TrendSummary>,
}

/// All per-n measurements on one assembled surface.
pub fn lamination_entry(
    n: u32,
    mesh: &SurfaceMesh,
    profile: &WarpProfile,
    settings: &DiagnosticSettings,
) -> Result<LaminationEntry> {
    if mesh.chart != ChartKind::Base {
        return Err(Error::InvalidArgument("lamination diagnostics expect an assembled base-chart mesh".into()));
    }
    let metric = MetricField::base(profile.clone());
    let census = sheet_census(mesh, &settings.transversal);
    let mut ulsc = Vec::new();
    let centers = [ChartPoint::new(0.0, 0.0, 0.0), ChartPoint::new(PI / 2.0, settings.transversal.theta, 0.0)];
    for center in centers {
        for &radius in &settings.disk_radii {
            let v = disk_check(mesh, &metric, center, radius)?;
            ulsc.push(UlscVerdict { center, radius, components: v.len(), all_disks: v.iter().all(|d| d.disk) });
        }
    }
    let ratios = &census.spacing_ratios;
    Ok(LaminationEntry {
        n,
        sheet_count: census.count,
        two_sided: census.two_sided(),
        min_abs_height: census.min_abs_height(),
        mean_spacing_ratio: (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64),
        gap_cv: census.gap_cv(),
        gamma_components: gamma_components(mesh, AXIS_MARGIN),
        trace: trace_monotonicity(mesh, settings.trace_planes)?,
        self_intersections: self_intersections(mesh, INTERSECTION_TOL).len(),
        curvature: curvature_map(mesh, &metric, &settings.curvature_bands),
        ulsc,
        census,
    })
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return 0.0;
    }
    xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx
}

/// Aggregates per-n entries (sorted by n); trend fields need two or more.
pub fn lamination_trend(mut entries: Vec<LaminationEntry>) -> LaminationReport {
    entries.sort_by_key(|e| e.n);
    let two_sided_all = !entries.is_empty() && entries.iter().all(|e| e.two_sided);
    let trend = (entries.len() >= 2).then(|| {
        let ns: Vec<f64> = entries.iter().map(|e| e.n as f64).collect();
        let counts: Vec<f64> = entries.iter().map(|e| e.sheet_count as f64).collect();
        let mins: Vec<f64> = entries.iter().map(|e| e.min_abs_height.unwrap_or(f64::NAN)).collect();
        let (rn, ratios): (Vec<f64>, Vec<f64>) =
            entries.iter().filter_map(|e| e.mean_spacing_ratio.map(|r| (e.n as f64, r))).unzip();
        TrendSummary {
            counts_nondecreasing: counts.windows(2).all(|w| w[1] >= w[0]),
            min_height_decreasing: mins.windows(2).all(|w| w[1] < w[0]),
            count_slope: slope(&ns, &counts),
            min_height_slope: slope(&ns, &mins),
            spacing_ratio_slope: (rn.len() >= 2).then(|| slope(&rn, &ratios)),
        }
    });
    LaminationReport { entries, two_sided_all, trend }
}

/// `crossing_heights.csv` and `curvature_bands.csv` under `dir`.
pub fn write_report_csvs(report: &LaminationReport, dir: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("crossing_heights.csv"))?);
    writeln!(f, "n,side,index,z")?;
    for e in &report.entries {
        for (i, z) in e.census.above.iter().enumerate() {
            writeln!(f, "{},above,{},{:?}", e.n, i + 1, z)?;
        }
        for (i, z) in e.census.below.iter().enumerate() {
            writeln!(f, "{},below,{},{:?}", e.n, i + 1, z)?;
        }
    }
    f.flush()?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("curvature_bands.csv"))?);
    writeln!(f, "n,band_lo,band_hi,count,max,mean")?;
    for e in &report.entries {
        for b in &e.curvature.bands {
            writeln!(f, "{},{:?},{:?},{},{:?},{:?}", e.n, b.lo, b.hi, b.count, b.max, b.mean)?;
        }
    }
    f.flush()?;
    Ok(())
}
