//! Charts on the universal cover of Ω minus the polar axes, the ε-glued
//! ambient manifolds N_{n,ε}, their boundary data, and the covering projection.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::area::area_gradient;
use crate::error::{Error, Result};
use crate::mesh::{ChartKind, Grid, SurfaceMesh, VertexFlag};
use crate::metric::{ChartPoint, MetricField, MetricTensor};
use crate::warp::WarpProfile;

/// Quintic smoothstep 6t⁵ − 15t⁴ + 10t³ and its derivative; C² at both ends.
fn smoothstep(t: f64) -> (f64, f64) {
    let t = t.clamp(0.0, 1.0);
    let t2 = t * t;
    (t * t2 * (10.0 - 15.0 * t + 6.0 * t2), 30.0 * t2 * (1.0 - 2.0 * t + t2))
}

/// Smoothed radius factor α_ε on the glued φ-circle [0, π).
///
/// Equal to sin φ on [ε, π − ε]. Below ε − b it follows a low even cap
/// q(φ) = λ(1 + sin²φ), and on [ε − b, ε] the two are blended with a quintic
/// smoothstep. The cap keeps α_ε′ strictly positive on (0, π/2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlueProfile {
    pub eps: f64,
    pub blend_width: f64,
    /// λ in the cap q(φ) = λ(1 + sin²φ).
    pub cap_scale: f64,
}

/// Fraction of sin(ε − b) the cap reaches at φ = ε.
const CAP_RATIO: f64 = 0.9;
const GLUE_CHECK_POINTS: usize = 4096;

impl GlueProfile {
    /// α_ε(φ) and α_ε′(φ).
    pub fn eval(&self, phi: f64) -> (f64, f64) {
        if phi >= self.eps && phi <= PI - self.eps {
            return phi.sin_cos();
        }
        let psi = phi.rem_euclid(PI);
        if psi <= FRAC_PI_2 {
            self.eval_half(psi)
        } else {
            let (a, da) = self.eval_half(PI - psi);
            (a, -da)
        }
    }

    pub fn value(&self, phi: f64) -> f64 {
        self.eval(phi).0
    }

    /// α_ε on [0, π/2].
    fn eval_half(&self, psi: f64) -> (f64, f64) {
        if psi >= self.eps {
            return psi.sin_cos();
        }
        let (sq, cq) = psi.sin_cos();
        let q = self.cap_scale * (1.0 + sq * sq);
        let dq = self.cap_scale * 2.0 * sq * cq;
        let start = self.eps - self.blend_width;
        if psi <= start {
            return (q, dq);
        }
        let (s, ds) = smoothstep((psi - start) / self.blend_width);
        let ds = ds / self.blend_width;
        let value = (1.0 - s) * q + s * sq;
        let deriv = ds * (sq - q) + (1.0 - s) * dq + s * cq;
        (value, deriv)
    }

    /// Grid check of the three defining conditions plus the period-π symmetry.
    pub fn check_invariants(&self) -> Result<()> {
        let n = GLUE_CHECK_POINTS;
        for i in 0..=n {
            let phi = PI * i as f64 / n as f64;
            let (a, da) = self.eval(phi);
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::GlueConstruction(format!("alpha({phi}) = {a} is not positive")));
            }
            if phi >= self.eps && phi <= PI - self.eps && (a - phi.sin()).abs() > 4.0 * f64::EPSILON {
                return Err(Error::GlueConstruction(format!("alpha({phi}) = {a} != sin(phi)")));
            }
            if i > 0 && i < n / 2 && !(da > 0.0) {
                return Err(Error::GlueConstruction(format!(
                    "alpha'({phi}) = {da} is not positive on (0, pi/2)"
                )));
            }
            if i > n / 2 && i < n && !(da < 0.0) {
                return Err(Error::GlueConstruction(format!(
                    "alpha'({phi}) = {da} is not negative on (pi/2, pi)"
                )));
            }
            let mirrored = [self.value(PI - phi), self.value(-phi), self.value(phi + PI)];
            if mirrored.iter().any(|m| (m - a).abs() > 1e-14) {
                return Err(Error::GlueConstruction(format!("symmetry violated at phi = {phi}")));
            }
        }
        Ok(())
    }
}

/// Builds α_ε with the given blend window and verifies it before returning.
pub fn build_glue_profile(eps: f64, blend_width: f64) -> Result<GlueProfile> {
    if !(eps > 0.0 && eps < FRAC_PI_2) {
        return Err(Error::InvalidArgument(format!("eps = {eps} outside (0, pi/2)")));
    }
    if !(blend_width > 0.0 && blend_width <= 0.5 * eps) {
        return Err(Error::InvalidArgument(format!(
            "blend width {blend_width} outside (0, eps/2]"
        )));
    }
    let floor = (eps - blend_width).sin();
    let cap_scale = CAP_RATIO * floor / (1.0 + eps.sin().powi(2));
    let glue = GlueProfile { eps, blend_width, cap_scale };
    glue.check_invariants()?;
    Ok(glue)
}

/// g_ε = (ω², ω²α_ε², 1); positive definite everywhere.
pub fn glued_metric_at(profile: &WarpProfile, glue: &GlueProfile, p: ChartPoint) -> MetricTensor {
    let w = profile.value(p.z);
    let a = glue.value(p.phi);
    MetricTensor { g_phiphi: w * w, g_thetatheta: w * w * a * a, g_zz: 1.0 }
}

/// N_{n,ε} = S¹_φ × [−nπ, nπ] × [−π, π] with φ of period π.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxChart {
    pub n: u32,
    pub eps: f64,
}

impl BoxChart {
    pub fn new(n: u32, eps: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidArgument("wrap count n must be >= 1".into()));
        }
        if !(eps > 0.0 && eps < PI / 4.0) {
            return Err(Error::InvalidArgument(format!("eps = {eps} outside (0, pi/4)")));
        }
        Ok(Self { n, eps })
    }

    pub fn theta_max(&self) -> f64 {
        self.n as f64 * PI
    }

    pub fn kind(&self) -> ChartKind {
        ChartKind::Box { n: self.n, eps: self.eps }
    }

    pub fn contains(&self, p: ChartPoint) -> bool {
        let tm = self.theta_max();
        p.theta >= -tm && p.theta <= tm && p.z >= -PI && p.z <= PI
    }
}

/// The four boundary walls of N_{n,ε}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Wall {
    /// {z = −π}
    Bottom,
    /// {z = π}
    Top,
    /// {θ = −nπ}
    Back,
    /// {θ = nπ}
    Front,
}

impl Wall {
    pub const ALL: [Wall; 4] = [Wall::Bottom, Wall::Top, Wall::Back, Wall::Front];

    /// Chart axis normal to the wall, and the wall's coordinate value.
    pub fn normal_axis(self, chart: &BoxChart) -> (usize, f64) {
        match self {
            Wall::Bottom => (2, -PI),
            Wall::Top => (2, PI),
            Wall::Back => (1, -chart.theta_max()),
            Wall::Front => (1, chart.theta_max()),
        }
    }

    fn is_horizontal(self) -> bool {
        matches!(self, Wall::Bottom | Wall::Top)
    }
}

impl std::fmt::Display for Wall {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Wall::Bottom => "bottom {z = -pi}",
            Wall::Top => "top {z = pi}",
            Wall::Back => "back {theta = -n pi}",
            Wall::Front => "front {theta = n pi}",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallReport {
    pub wall: Wall,
    /// |first variation| / (mass · |normal|) at each sample.
    pub residuals: Vec<f64>,
    /// Dihedral angles between this wall and each wall it meets, measured at
    /// the samples' φ along the shared edge.
    pub dihedral_angles: Vec<(Wall, f64)>,
}

impl WallReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

const WALL_PATCH: usize = 5;
const WALL_PATCH_SPACING: f64 = 0.02;

/// Mean curvature of a coordinate wall of N_{n,ε} under g_ε, measured as the
/// first variation of the discrete area of a small wall patch around each
/// sample point, plus the dihedral angles with the adjacent walls.
pub fn wall_mean_curvature(
    chart: &BoxChart,
    metric: &MetricField,
    wall: Wall,
    samples: &[ChartPoint],
) -> Result<WallReport> {
    let (axis, value) = wall.normal_axis(chart);
    let mut residuals = Vec::with_capacity(samples.len());
    for p in samples {
        let coords = p.to_array();
        if (coords[axis] - value).abs() > 1e-12 {
            return Err(Error::OffWall { wall: wall.to_string(), point: coords });
        }
        let patch = wall_patch(chart, wall, *p);
        let grad = area_gradient(&patch, metric)?;
        let masses = crate::area::vertex_masses(&patch, metric)?;
        let center = (WALL_PATCH / 2) * WALL_PATCH + WALL_PATCH / 2;
        let g = metric.tensor(patch.vertices[center]).diag();
        let normal_len = g[axis].sqrt();
        residuals.push(grad[center][axis].abs() / (masses[center] * normal_len));
    }

    let neighbours: &[Wall] = if wall.is_horizontal() {
        &[Wall::Back, Wall::Front]
    } else {
        &[Wall::Bottom, Wall::Top]
    };
    let mut dihedral_angles = Vec::new();
    for &other in neighbours {
        for p in samples {
            dihedral_angles.push((other, wall_pair_angle(chart, metric, wall, other, p.phi)));
        }
    }
    Ok(WallReport { wall, residuals, dihedral_angles })
}

/// Angle inside N_{n,ε} between two walls along their common φ-edge, from two
/// triangles, one in each wall, sharing an edge on the intersection.
pub fn wall_pair_angle(chart: &BoxChart, metric: &MetricField, a: Wall, b: Wall, phi: f64) -> f64 {
    let (axis_a, val_a) = a.normal_axis(chart);
    let (axis_b, val_b) = b.normal_axis(chart);
    let mut edge0 = [phi, 0.0, 0.0];
    edge0[axis_a] = val_a;
    edge0[axis_b] = val_b;
    let mut edge1 = edge0;
    edge1[0] += WALL_PATCH_SPACING;
    // Each wall extends from the edge along the other wall's normal axis, into the box.
    let inward = |axis: usize, val: f64| if val < 0.0 { (axis, 1.0) } else { (axis, -1.0) };
    let (ia, sa) = inward(axis_b, val_b);
    let (ib, sb) = inward(axis_a, val_a);
    let mut ca = edge0;
    ca[ia] += sa * WALL_PATCH_SPACING;
    let mut cb = edge0;
    cb[ib] += sb * WALL_PATCH_SPACING;
    let mid = ChartPoint::from_array(edge0);
    let g = metric.tensor(mid);
    crate::mesh::dihedral_angle(&g, edge0, edge1, ca, cb)
}

/// A WALL_PATCH × WALL_PATCH structured grid lying in the wall, centred at `p`.
fn wall_patch(chart: &BoxChart, wall: Wall, p: ChartPoint) -> SurfaceMesh {
    let (axis, _) = wall.normal_axis(chart);
    let in_plane: [usize; 2] = if axis == 2 { [0, 1] } else { [0, 2] };
    let half = (WALL_PATCH / 2) as f64;
    let mut vertices = Vec::with_capacity(WALL_PATCH * WALL_PATCH);
    let mut flags = Vec::with_capacity(WALL_PATCH * WALL_PATCH);
    for l in 0..WALL_PATCH {
        for k in 0..WALL_PATCH {
            let mut c = p.to_array();
            c[in_plane[0]] += (k as f64 - half) * WALL_PATCH_SPACING;
            c[in_plane[1]] += (l as f64 - half) * WALL_PATCH_SPACING;
            vertices.push(ChartPoint::from_array(c));
            let edge = k == 0 || l == 0 || k + 1 == WALL_PATCH || l + 1 == WALL_PATCH;
            flags.push(if edge { VertexFlag::Fixed } else { VertexFlag::Interior });
        }
    }
    let grid = Grid { ring_len: WALL_PATCH, levels: WALL_PATCH, ring_periodic: false };
    SurfaceMesh::from_grid(vertices, flags, grid, ChartKind::Cover, [true; 3])
}

/// θ reduced into [0, 2π); φ and z unchanged.
pub fn project_to_base(p: ChartPoint) -> ChartPoint {
    ChartPoint { theta: wrap_theta(p.theta), ..p }
}

pub fn wrap_theta(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Lift a base point to the `sheet`-th copy of the fundamental domain.
pub fn lift(p: ChartPoint, sheet: i64) -> ChartPoint {
    ChartPoint { theta: p.theta + TAU * sheet as f64, ..p }
}

/// The two boundary circles as φ-loops plus the polar axes {φ = 0}, {φ = π}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData {
    pub lower_circle: Vec<ChartPoint>,
    pub upper_circle: Vec<ChartPoint>,
    /// φ of the two polar axes.
    pub axes: [f64; 2],
    /// φ period of the loops (π in the glued chart).
    pub phi_period: f64,
}

pub fn boundary_circles(chart: &BoxChart, ring_resolution: usize) -> Result<BoundaryData> {
    if ring_resolution < 16 {
        return Err(Error::InvalidArgument(format!("ring resolution {ring_resolution} < 16")));
    }
    let phis = uniform_ring_phis(ring_resolution);
    Ok(boundary_circles_on(chart, &phis))
}

pub(crate) fn boundary_circles_on(chart: &BoxChart, phis: &[f64]) -> BoundaryData {
    let tm = chart.theta_max();
    BoundaryData {
        lower_circle: phis.iter().map(|&phi| ChartPoint::new(phi, -tm, -PI)).collect(),
        upper_circle: phis.iter().map(|&phi| ChartPoint::new(phi, tm, PI)).collect(),
        axes: [0.0, PI],
        phi_period: PI,
    }
}

/// φ_k = kπ/R, k = 0..R.
pub fn uniform_ring_phis(rings: usize) -> Vec<f64> {
    (0..rings).map(|k| PI * k as f64 / rings as f64).collect()
}
