//! Triangulated surfaces in chart coordinates, their builders, and the
//! per-triangle corner unwrapping for periodic charts.

pub mod intersect;
pub mod io;

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::charts::BoxChart;
use crate::error::{Error, Result};
use crate::metric::{ChartPoint, MetricField, MetricTensor};

/// Which chart the vertex coordinates live in; decides periodic unwrapping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ChartKind {
    /// N_{n,ε}: φ has period π, θ ∈ [−nπ, nπ].
    Box { n: u32, eps: f64 },
    /// Universal cover of Ω minus the axes: nothing wraps.
    Cover,
    /// Ω itself: θ has period 2π.
    Base,
}

impl ChartKind {
    pub fn period(&self, axis: usize) -> Option<f64> {
        match (self, axis) {
            (ChartKind::Box { .. }, 0) => Some(PI),
            (ChartKind::Base, 1) => Some(TAU),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VertexFlag {
    Interior,
    /// Prescribed boundary vertex; never moved.
    Fixed,
    /// Vertex on a polar axis φ ∈ {0, π}; fixed, θ defined only modulo π.
    Axis,
}

impl VertexFlag {
    pub fn is_free(self) -> bool {
        self == VertexFlag::Interior
    }
}

/// Structured layout: vertex (k, l) has index l·ring_len + k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub ring_len: usize,
    pub levels: usize,
    pub ring_periodic: bool,
}

impl Grid {
    pub fn index(&self, k: usize, l: usize) -> usize {
        l * self.ring_len + k
    }

    pub fn vertex_count(&self) -> usize {
        self.ring_len * self.levels
    }

    /// Two triangles per quad, diagonal from (k, l) to (k+1, l+1).
    pub fn triangles(&self) -> Vec<[usize; 3]> {
        let cols = if self.ring_periodic { self.ring_len } else { self.ring_len - 1 };
        let mut tris = Vec::with_capacity(2 * cols * (self.levels - 1));
        for l in 0..self.levels - 1 {
            for k in 0..cols {
                let k1 = (k + 1) % self.ring_len;
                let a = self.index(k, l);
                let b = self.index(k1, l);
                let c = self.index(k1, l + 1);
                let d = self.index(k, l + 1);
                tris.push([a, b, c]);
                tris.push([a, c, d]);
            }
        }
        tris
    }
}

/// A triangulated surface. Coordinate axes listed in `free_axes` are the ones
/// the solver may move; the others act as parameters of a graph description.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    pub vertices: Vec<ChartPoint>,
    pub triangles: Vec<[usize; 3]>,
    pub flags: Vec<VertexFlag>,
    pub grid: Option<Grid>,
    pub chart: ChartKind,
    pub free_axes: [bool; 3],
}

/// Only z free: graphs z = f(φ, θ). Used for slices, sphere graphs and the
/// annuli, which start as the graph z = θ/n.
pub const HEIGHT_GRAPH: [bool; 3] = [false, false, true];

impl SurfaceMesh {
    pub fn from_grid(
        vertices: Vec<ChartPoint>,
        flags: Vec<VertexFlag>,
        grid: Grid,
        chart: ChartKind,
        free_axes: [bool; 3],
    ) -> Self {
        let triangles = grid.triangles();
        Self { vertices, triangles, flags, grid: Some(grid), chart, free_axes }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn free_vertex_count(&self) -> usize {
        self.flags.iter().filter(|f| f.is_free()).count()
    }

    /// Corner coordinates of triangle `t`, unwrapped into one sheet relative to
    /// its first non-axis corner. Axis corners take the θ representative modulo
    /// π nearest the reference, which makes rotated copies exact images.
    pub fn corners(&self, t: usize) -> [[f64; 3]; 3] {
        let tri = self.triangles[t];
        let reference = tri
            .iter()
            .copied()
            .find(|&v| self.flags[v] != VertexFlag::Axis)
            .unwrap_or(tri[0]);
        let r = self.vertices[reference].to_array();
        let mut out = [[0.0; 3]; 3];
        for (c, &v) in tri.iter().enumerate() {
            let p = self.vertices[v].to_array();
            let mut q = r;
            for axis in 0..3 {
                let mut d = p[axis] - r[axis];
                if let Some(period) = self.chart.period(axis) {
                    d = nearest_image(d, period);
                }
                if axis == 1 && self.flags[v] == VertexFlag::Axis && v != reference {
                    d = nearest_image(d, PI);
                }
                q[axis] = r[axis] + d;
            }
            out[c] = q;
        }
        out
    }

    /// Per-vertex incident triangle lists.
    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut star = vec![Vec::new(); self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                star[v].push(t);
            }
        }
        star
    }

    /// Undirected edges, each listed once with the smaller index first.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut edges: Vec<[usize; 2]> = self
            .triangles
            .iter()
            .flat_map(|t| [[t[0], t[1]], [t[1], t[2]], [t[2], t[0]]])
            .map(|[a, b]| if a < b { [a, b] } else { [b, a] })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Adds θ₀ to every vertex; base-chart meshes are re-wrapped into [0, 2π).
    pub fn rotate_theta(&self, theta0: f64) -> SurfaceMesh {
        let mut out = self.clone();
        for v in &mut out.vertices {
            v.theta += theta0;
            if self.chart == ChartKind::Base {
                v.theta = crate::charts::wrap_theta(v.theta);
            }
        }
        out
    }

    /// Worst triangle quality and its index; see [`triangle_quality`].
    pub fn min_quality(&self, metric: &MetricField) -> (usize, f64) {
        let mut worst = (0, f64::INFINITY);
        for t in 0..self.triangles.len() {
            let q = triangle_quality(metric, &self.corners(t));
            if !(q >= worst.1) {
                worst = (t, q);
            }
        }
        worst
    }

    /// Fails if any vertex coordinate is NaN or infinite.
    pub fn check_finite(&self) -> Result<()> {
        match self.vertices.iter().position(|p| !p.is_finite()) {
            Some(index) => Err(Error::NonFinite { what: "vertex".into(), index }),
            None => Ok(()),
        }
    }

    pub fn free_coordinates(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let axes = self.free_axes;
        self.flags
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_free())
            .flat_map(move |(v, _)| (0..3).filter(move |&a| axes[a]).map(move |a| (v, a)))
    }
}

/// V − E + F over the vertices referenced by at least one triangle.
pub fn euler_characteristic(triangles: &[[usize; 3]]) -> i64 {
    let mut used: Vec<usize> = triangles.iter().flatten().copied().collect();
    used.sort_unstable();
    used.dedup();
    let mut edges: Vec<[usize; 2]> = triangles
        .iter()
        .flat_map(|t| [[t[0], t[1]], [t[1], t[2]], [t[2], t[0]]])
        .map(|[a, b]| if a < b { [a, b] } else { [b, a] })
        .collect();
    edges.sort_unstable();
    edges.dedup();
    used.len() as i64 - edges.len() as i64 + triangles.len() as i64
}

/// Edges used by exactly one triangle, chained into closed vertex loops.
/// Non-manifold boundary vertices are walked greedily.
pub fn boundary_loops(triangles: &[[usize; 3]]) -> Vec<Vec<usize>> {
    use std::collections::BTreeMap;
    let mut count: BTreeMap<[usize; 2], usize> = BTreeMap::new();
    for t in triangles {
        for [a, b] in [[t[0], t[1]], [t[1], t[2]], [t[2], t[0]]] {
            *count.entry(if a < b { [a, b] } else { [b, a] }).or_default() += 1;
        }
    }
    let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (e, c) in &count {
        if *c == 1 {
            adj.entry(e[0]).or_default().push(e[1]);
            adj.entry(e[1]).or_default().push(e[0]);
        }
    }
    let mut loops = Vec::new();
    while let Some((&start, _)) = adj.iter().find(|(_, v)| !v.is_empty()) {
        let mut path = vec![start];
        let mut cur = start;
        while let Some(next) = adj.get_mut(&cur).and_then(|v| v.pop()) {
            if let Some(back) = adj.get_mut(&next) {
                if let Some(i) = back.iter().position(|&x| x == cur) {
                    back.swap_remove(i);
                }
            }
            if next == start {
                break;
            }
            path.push(next);
            cur = next;
        }
        loops.push(path);
    }
    loops
}

/// `d` shifted by a multiple of `period` into [−period/2, period/2].
pub fn nearest_image(d: f64, period: f64) -> f64 {
    d - period * (d / period).round()
}

/// Normalised quality 4√3·A / Σ|e|², 1 for equilateral, 0 for degenerate,
/// using the metric frozen at the centroid.
pub fn triangle_quality(metric: &MetricField, c: &[[f64; 3]; 3]) -> f64 {
    let centroid = centroid(c);
    let g = metric.tensor(ChartPoint::from_array(centroid));
    let e0 = sub(c[1], c[0]);
    let e1 = sub(c[2], c[1]);
    let e2 = sub(c[0], c[2]);
    let sum = g.inner(e0, e0) + g.inner(e1, e1) + g.inner(e2, e2);
    if !(sum > 0.0) {
        return 0.0;
    }
    let area = crate::area::triangle_area(metric, c);
    4.0 * 3f64.sqrt() * area / sum
}

/// Interior angle between the half-planes (e0, e1, a) and (e0, e1, b) along
/// the edge e0→e1, under the constant metric `g`.
pub fn dihedral_angle(g: &MetricTensor, e0: [f64; 3], e1: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let e = sub(e1, e0);
    let ee = g.inner(e, e);
    let perp = |p: [f64; 3]| {
        let d = sub(p, e0);
        let s = g.inner(d, e) / ee;
        sub(d, scale(e, s))
    };
    let (wa, wb) = (perp(a), perp(b));
    let c = g.inner(wa, wb) / (g.norm(wa) * g.norm(wb));
    c.clamp(-1.0, 1.0).acos()
}

pub(crate) fn centroid(c: &[[f64; 3]; 3]) -> [f64; 3] {
    [
        (c[0][0] + c[1][0] + c[2][0]) / 3.0,
        (c[0][1] + c[1][1] + c[2][1]) / 3.0,
        (c[0][2] + c[1][2] + c[2][2]) / 3.0,
    ]
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Ruled initial annulus in N_{n,ε} spanning the boundary circles: ring φ_k at level
/// t ∈ [0, 1] sits at θ = −nπ + 2nπt, z = −π + 2πt. Only z is free, so the
/// annulus stays a graph over the (φ, θ) box.
pub fn initial_annulus(chart: &BoxChart, rings: usize, levels: usize) -> Result<SurfaceMesh> {
    if rings < 16 {
        return Err(Error::InvalidArgument(format!("ring resolution {rings} < 16")));
    }
    initial_annulus_on(chart, &crate::charts::uniform_ring_phis(rings), levels)
}

/// As [`initial_annulus`] with an explicit, increasing ring layout in [0, π).
pub fn initial_annulus_on(chart: &BoxChart, ring_phis: &[f64], levels: usize) -> Result<SurfaceMesh> {
    let n = chart.n as usize;
    if levels < 16 * n {
        return Err(Error::InvalidArgument(format!("{levels} levels < 16n = {}", 16 * n)));
    }
    if ring_phis.len() < 3 || ring_phis.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("ring layout must be strictly increasing".into()));
    }
    let tm = chart.theta_max();
    let grid = Grid { ring_len: ring_phis.len(), levels, ring_periodic: true };
    let mut vertices = Vec::with_capacity(grid.vertex_count());
    let mut flags = Vec::with_capacity(grid.vertex_count());
    for l in 0..levels {
        let t = l as f64 / (levels - 1) as f64;
        let (theta, z) = if l == levels - 1 { (tm, PI) } else { (-tm + 2.0 * tm * t, -PI + TAU * t) };
        let boundary = l == 0 || l == levels - 1;
        for &phi in ring_phis {
            vertices.push(ChartPoint::new(phi, theta, z));
            flags.push(if boundary { VertexFlag::Fixed } else { VertexFlag::Interior });
        }
    }
    Ok(SurfaceMesh::from_grid(vertices, flags, grid, chart.kind(), HEIGHT_GRAPH))
}

/// Graph z = f(φ, θ) over the whole sphere in the base chart: rows at
/// φ = jπ/n_phi (pole rows flagged as axis), n_theta columns.
pub fn sphere_graph(n_phi: usize, n_theta: usize, f: impl Fn(f64, f64) -> f64) -> Result<SurfaceMesh> {
    if n_phi < 2 || n_theta < 3 {
        return Err(Error::InvalidArgument(format!("sphere grid {n_phi}x{n_theta} too coarse")));
    }
    let grid = Grid { ring_len: n_theta, levels: n_phi + 1, ring_periodic: true };
    let mut vertices = Vec::with_capacity(grid.vertex_count());
    let mut flags = Vec::with_capacity(grid.vertex_count());
    for j in 0..=n_phi {
        let phi = PI * j as f64 / n_phi as f64;
        let pole = j == 0 || j == n_phi;
        for i in 0..n_theta {
            let theta = TAU * i as f64 / n_theta as f64;
            vertices.push(ChartPoint::new(phi, theta, f(phi, theta)));
            flags.push(if pole { VertexFlag::Axis } else { VertexFlag::Interior });
        }
    }
    Ok(SurfaceMesh::from_grid(vertices, flags, grid, ChartKind::Base, HEIGHT_GRAPH))
}

/// The slice S² × {z} as a mesh.
pub fn slice_mesh(n_phi: usize, n_theta: usize, z: f64) -> Result<SurfaceMesh> {
    sphere_graph(n_phi, n_theta, |_, _| z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::warp::WarpProfile;

    #[test]
    fn initial_annulus_shape() {
        let chart = BoxChart::new(1, 0.3).unwrap();
        let m = initial_annulus(&chart, 16, 16).unwrap();
        assert_eq!(m.vertex_count(), 256);
        assert_eq!(m.triangles.len(), 2 * 16 * 15);
        assert!(m.vertices[..16].iter().all(|p| p.theta == -PI && p.z == -PI));
        assert!(m.vertices[240..].iter().all(|p| p.theta == PI && p.z == PI));
        assert_eq!(m.free_vertex_count(), 16 * 14);
    }

    #[test]
    fn initial_annulus_mid_level_is_centred() {
        let chart = BoxChart::new(2, 0.3).unwrap();
        let odd = initial_annulus(&chart, 16, 33).unwrap();
        let g = odd.grid.unwrap();
        let mid = odd.vertices[g.index(0, 16)];
        assert!(mid.theta.abs() < 1e-15 && mid.z.abs() < 1e-15);
        // with an even count the two middle levels straddle θ = z = 0
        let even = initial_annulus(&chart, 16, 32).unwrap();
        let g = even.grid.unwrap();
        let (a, b) = (even.vertices[g.index(3, 15)], even.vertices[g.index(3, 16)]);
        assert!((a.theta + b.theta).abs() < 1e-14 && (a.z + b.z).abs() < 1e-14);
    }

    #[test]
    fn initial_annulus_rejects_coarse_grids() {
        let chart = BoxChart::new(2, 0.3).unwrap();
        assert!(initial_annulus(&chart, 8, 64).is_err());
        assert!(initial_annulus(&chart, 16, 20).is_err());
    }

    #[test]
    fn corners_unwrap_the_phi_seam() {
        let chart = BoxChart::new(1, 0.3).unwrap();
        let m = initial_annulus(&chart, 16, 16).unwrap();
        // the quad closing the ring joins φ = 15π/16 to φ = 0 ≡ π
        let t = m
            .triangles
            .iter()
            .position(|tri| tri[0] == 15 && tri[1] == 0)
            .unwrap();
        let c = m.corners(t);
        assert!((c[1][0] - PI).abs() < 1e-14);
    }

    #[test]
    fn axis_corners_pick_nearest_theta() {
        let m = slice_mesh(4, 8, 0.0).unwrap();
        for t in 0..m.triangles.len() {
            let c = m.corners(t);
            for i in 0..3 {
                for j in 0..3 {
                    assert!((c[i][1] - c[j][1]).abs() <= PI / 4.0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn quality_of_flat_right_triangle() {
        let metric = MetricField::base(WarpProfile::product());
        let q = triangle_quality(&metric, &[[1.0, 0.0, 0.0], [1.0, 0.0, 0.1], [1.1, 0.0, 0.0]]);
        // isosceles right triangle in the (φ, z) plane: 4√3·(1/2)/(4) ≈ 0.866
        assert!((q - 3f64.sqrt() / 2.0).abs() < 1e-12);
        let flat = triangle_quality(&metric, &[[1.0, 0.0, 0.0], [1.1, 0.0, 0.0], [1.2, 0.0, 0.0]]);
        assert_eq!(flat, 0.0);
    }

    #[test]
    fn dihedral_of_orthogonal_planes() {
        let g = MetricTensor { g_phiphi: 4.0, g_thetatheta: 0.25, g_zz: 1.0 };
        let a = dihedral_angle(&g, [0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]);
        assert!((a - PI / 2.0).abs() < 1e-15);
        let flat = dihedral_angle(&g, [0.0; 3], [1.0, 0.0, 0.0], [0.3, 1.0, 0.0], [0.0, -1.0, 0.0]);
        assert!((flat - PI).abs() < 1e-15);
    }

    #[test]
    fn rotate_wraps_only_base_meshes() {
        let m = slice_mesh(4, 8, 0.0).unwrap();
        let r = m.rotate_theta(7.0);
        assert!(r.vertices.iter().all(|p| p.theta >= 0.0 && p.theta < TAU));
        let chart = BoxChart::new(1, 0.3).unwrap();
        let a = initial_annulus(&chart, 16, 16).unwrap();
        assert_eq!(a.rotate_theta(10.0).vertices[0].theta, -PI + 10.0);
    }

    #[test]
    fn edges_of_periodic_grid() {
        let g = Grid { ring_len: 16, levels: 16, ring_periodic: true };
        let m = SurfaceMesh::from_grid(
            vec![ChartPoint::default(); 256],
            vec![VertexFlag::Interior; 256],
            g,
            ChartKind::Cover,
            [true; 3],
        );
        // cylinder: V − E + F = 0
        let chi = m.vertex_count() as i64 - m.edges().len() as i64 + m.triangles.len() as i64;
        assert_eq!(chi, 0);
        assert_eq!(euler_characteristic(&m.triangles), 0);
        let loops = boundary_loops(&m.triangles);
        assert_eq!(loops.len(), 2);
        assert!(loops.iter().all(|l| l.len() == 16));
    }

    #[test]
    fn disk_topology() {
        let g = Grid { ring_len: 4, levels: 4, ring_periodic: false };
        let tris = g.triangles();
        assert_eq!(euler_characteristic(&tris), 1);
        assert_eq!(boundary_loops(&tris).len(), 1);
        assert!(boundary_loops(&[]).is_empty());
    }
}
