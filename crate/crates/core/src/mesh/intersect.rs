//! Triangle–triangle intersection in chart coordinates with an AABB sweep
//! and periodic images.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{add, cross, dot, scale, sub, SurfaceMesh};
use crate::error::{Error, Result};

type Tri = [[f64; 3]; 3];

/// One intersecting triangle pair and the chart segment they share.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntersectionSegment {
    pub tri_a: usize,
    pub tri_b: usize,
    pub start: [f64; 3],
    pub end: [f64; 3],
}

fn unit_normal(t: &Tri) -> Option<[f64; 3]> {
    let n = cross(sub(t[1], t[0]), sub(t[2], t[0]));
    let len = dot(n, n).sqrt();
    (len > 1e-300).then(|| scale(n, 1.0 / len))
}

fn classify(d: f64, tol: f64) -> i8 {
    if d > tol {
        1
    } else if d < -tol {
        -1
    } else {
        0
    }
}

/// Points where triangle `t` meets the plane, given signed distances `d`.
fn plane_cut(t: &Tri, d: [f64; 3], s: [i8; 3]) -> Vec<[f64; 3]> {
    let mut pts = Vec::with_capacity(3);
    for i in 0..3 {
        if s[i] == 0 {
            pts.push(t[i]);
        }
    }
    for (i, j) in [(0, 1), (1, 2), (2, 0)] {
        if s[i] * s[j] < 0 {
            let f = d[i] / (d[i] - d[j]);
            pts.push(add(t[i], scale(sub(t[j], t[i]), f)));
        }
    }
    pts
}

/// Intersection of two chart triangles as a segment (possibly a point), or
/// `None` when they are disjoint. Plane distances within `tol` count as zero.
pub fn triangle_intersection(a: &Tri, b: &Tri, tol: f64) -> Option<([f64; 3], [f64; 3])> {
    let nb = unit_normal(b)?;
    let na = unit_normal(a)?;
    let da = [0, 1, 2].map(|i| dot(nb, sub(a[i], b[0])));
    let sa = da.map(|d| classify(d, tol));
    if sa.iter().all(|&s| s == 1) || sa.iter().all(|&s| s == -1) {
        return None;
    }
    if sa.iter().all(|&s| s == 0) {
        return coplanar_intersection(a, b, nb, tol);
    }
    let db = [0, 1, 2].map(|i| dot(na, sub(b[i], a[0])));
    let sb = db.map(|d| classify(d, tol));
    if sb.iter().all(|&s| s == 1) || sb.iter().all(|&s| s == -1) {
        return None;
    }
    if sb.iter().all(|&s| s == 0) {
        return coplanar_intersection(a, b, nb, tol);
    }
    let dir = cross(na, nb);
    let dlen = dot(dir, dir).sqrt();
    if dlen < 1e-12 {
        return coplanar_intersection(a, b, nb, tol);
    }
    let dir = scale(dir, 1.0 / dlen);
    let span = |pts: &[[f64; 3]]| -> Option<([f64; 3], f64, [f64; 3], f64)> {
        let mut lo = (*pts.first()?, f64::INFINITY);
        let mut hi = (pts[0], f64::NEG_INFINITY);
        for &p in pts {
            let s = dot(dir, p);
            if s < lo.1 {
                lo = (p, s);
            }
            if s > hi.1 {
                hi = (p, s);
            }
        }
        Some((lo.0, lo.1, hi.0, hi.1))
    };
    let (pa0, sa0, pa1, sa1) = span(&plane_cut(a, da, sa))?;
    let (pb0, sb0, pb1, sb1) = span(&plane_cut(b, db, sb))?;
    let lo = sa0.max(sb0);
    let hi = sa1.min(sb1);
    if lo > hi + tol {
        return None;
    }
    let at = |s: f64| -> [f64; 3] {
        let (p, q, s0, s1) = if sa1 - sa0 >= sb1 - sb0 { (pa0, pa1, sa0, sa1) } else { (pb0, pb1, sb0, sb1) };
        if s1 - s0 <= 0.0 {
            p
        } else {
            add(p, scale(sub(q, p), ((s - s0) / (s1 - s0)).clamp(0.0, 1.0)))
        }
    };
    Some((at(lo), at(hi.max(lo))))
}

fn orient2(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn inside2(p: [f64; 2], t: &[[f64; 2]; 3], tol: f64) -> bool {
    let area = orient2(t[0], t[1], t[2]);
    if area == 0.0 {
        return false;
    }
    let sign = area.signum();
    (0..3).all(|i| {
        let e = [t[(i + 1) % 3][0] - t[i][0], t[(i + 1) % 3][1] - t[i][1]];
        let len = (e[0] * e[0] + e[1] * e[1]).sqrt();
        sign * orient2(t[i], t[(i + 1) % 3], p) >= -tol * len
    })
}

fn segment_cross2(p: [f64; 2], q: [f64; 2], r: [f64; 2], s: [f64; 2], tol: f64) -> Option<f64> {
    let d1 = [q[0] - p[0], q[1] - p[1]];
    let d2 = [s[0] - r[0], s[1] - r[1]];
    let den = d1[0] * d2[1] - d1[1] * d2[0];
    if den.abs() < 1e-300 {
        return None;
    }
    let w = [r[0] - p[0], r[1] - p[1]];
    let t = (w[0] * d2[1] - w[1] * d2[0]) / den;
    let u = (w[0] * d1[1] - w[1] * d1[0]) / den;
    let l1 = (d1[0] * d1[0] + d1[1] * d1[1]).sqrt().max(1e-300);
    let l2 = (d2[0] * d2[0] + d2[1] * d2[1]).sqrt().max(1e-300);
    let (e1, e2) = (tol / l1, tol / l2);
    (t >= -e1 && t <= 1.0 + e1 && u >= -e2 && u <= 1.0 + e2).then_some(t.clamp(0.0, 1.0))
}

/// Coplanar case: the overlap region is summarised by its two most distant
/// candidate points (contained vertices and edge crossings).
fn coplanar_intersection(a: &Tri, b: &Tri, n: [f64; 3], tol: f64) -> Option<([f64; 3], [f64; 3])> {
    let drop = (0..3).max_by(|&i, &j| n[i].abs().total_cmp(&n[j].abs())).unwrap_or(2);
    let keep = match drop {
        0 => [1, 2],
        1 => [0, 2],
        _ => [0, 1],
    };
    let p2 = |p: [f64; 3]| [p[keep[0]], p[keep[1]]];
    let a2 = a.map(p2);
    let b2 = b.map(p2);
    let mut pts = Vec::new();
    for i in 0..3 {
        if inside2(a2[i], &b2, tol) {
            pts.push(a[i]);
        }
        if inside2(b2[i], &a2, tol) {
            pts.push(b[i]);
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            let (p, q) = (a2[i], a2[(i + 1) % 3]);
            let (r, s) = (b2[j], b2[(j + 1) % 3]);
            if let Some(t) = segment_cross2(p, q, r, s, tol) {
                pts.push(add(a[i], scale(sub(a[(i + 1) % 3], a[i]), t)));
            }
        }
    }
    let mut best: Option<([f64; 3], [f64; 3], f64)> = None;
    for i in 0..pts.len() {
        for j in i..pts.len() {
            let d = sub(pts[i], pts[j]);
            let l = dot(d, d);
            if best.is_none_or(|b| l > b.2) {
                best = Some((pts[i], pts[j], l));
            }
        }
    }
    best.map(|(p, q, _)| (p, q))
}

#[derive(Clone, Copy)]
struct Boxed {
    tri: usize,
    corners: Tri,
    lo: [f64; 3],
    hi: [f64; 3],
}

fn boxed(tri: usize, corners: Tri) -> Boxed {
    let mut lo = corners[0];
    let mut hi = corners[0];
    for c in &corners[1..] {
        for k in 0..3 {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
    }
    Boxed { tri, corners, lo, hi }
}

/// Unwrapped triangles, normalised into one period; with `images`, the
/// neighbouring periodic copies are added too.
fn collect_boxes(mesh: &SurfaceMesh, images: bool) -> Vec<Boxed> {
    let periodic = (0..3).find_map(|axis| mesh.chart.period(axis).map(|p| (axis, p)));
    let mut out = Vec::with_capacity(mesh.triangles.len() * if images { 3 } else { 1 });
    for t in 0..mesh.triangles.len() {
        let mut c = mesh.corners(t);
        match periodic {
            Some((axis, period)) => {
                let shift = period * (c[0][axis] / period).floor();
                for p in &mut c {
                    p[axis] -= shift;
                }
                let offsets: &[f64] = if images { &[-1.0, 0.0, 1.0] } else { &[0.0] };
                for &o in offsets {
                    let mut s = c;
                    for p in &mut s {
                        p[axis] += o * period;
                    }
                    out.push(boxed(t, s));
                }
            }
            None => out.push(boxed(t, c)),
        }
    }
    out
}

fn sweep_axis(boxes: &[Boxed]) -> usize {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for b in boxes {
        for k in 0..3 {
            lo[k] = lo[k].min(b.lo[k]);
            hi[k] = hi[k].max(b.hi[k]);
        }
    }
    (0..3).max_by(|&i, &j| (hi[i] - lo[i]).total_cmp(&(hi[j] - lo[j]))).unwrap_or(0)
}

fn sweep(
    a: &[Boxed],
    mut b: Vec<Boxed>,
    tol: f64,
    skip: impl Fn(usize, usize) -> bool + Sync,
) -> Vec<IntersectionSegment> {
    let axis = sweep_axis(&b);
    b.sort_by(|x, y| x.lo[axis].total_cmp(&y.lo[axis]).then(x.tri.cmp(&y.tri)));
    let reach = b.iter().map(|x| x.hi[axis] - x.lo[axis]).fold(0.0, f64::max) + tol;
    let found: Vec<Vec<IntersectionSegment>> = a
        .par_iter()
        .map(|ta| {
            let start = b.partition_point(|x| x.lo[axis] < ta.lo[axis] - reach);
            let mut hits = Vec::new();
            for tb in &b[start..] {
                if tb.lo[axis] > ta.hi[axis] + tol {
                    break;
                }
                if (0..3).any(|k| tb.lo[k] > ta.hi[k] + tol || ta.lo[k] > tb.hi[k] + tol) {
                    continue;
                }
                if skip(ta.tri, tb.tri) {
                    continue;
                }
                if let Some((start, end)) = triangle_intersection(&ta.corners, &tb.corners, tol) {
                    hits.push(IntersectionSegment { tri_a: ta.tri, tri_b: tb.tri, start, end });
                }
            }
            hits
        })
        .collect();
    let mut out: Vec<IntersectionSegment> = found.into_iter().flatten().collect();
    out.sort_by_key(|x| (x.tri_a, x.tri_b));
    out.dedup_by(|x, y| x.tri_a == y.tri_a && x.tri_b == y.tri_b);
    out
}

/// Intersections between distinct triangles of one mesh. Pairs sharing a
/// vertex index are adjacent by construction and excluded; identified seam
/// vertices share indices, so the glued seam is excluded the same way.
pub fn self_intersections(mesh: &SurfaceMesh, tol: f64) -> Vec<IntersectionSegment> {
    let a = collect_boxes(mesh, false);
    let b = collect_boxes(mesh, true);
    let tris = &mesh.triangles;
    sweep(&a, b, tol, |i, j| i >= j || tris[i].iter().any(|v| tris[j].contains(v)))
}

/// Intersections between two meshes in the same chart.
pub fn mesh_intersections(a: &SurfaceMesh, b: &SurfaceMesh, tol: f64) -> Result<Vec<IntersectionSegment>> {
    if a.chart != b.chart {
        return Err(Error::InvalidArgument("meshes live in different charts".into()));
    }
    Ok(sweep(&collect_boxes(a, false), collect_boxes(b, true), tol, |_, _| false))
}

/// Smallest chart distance between a vertex of `a` and a vertex of `b`,
/// accounting for periodic images.
pub fn closest_vertex_distance(a: &SurfaceMesh, b: &SurfaceMesh) -> f64 {
    let periodic = (0..3).find_map(|axis| b.chart.period(axis).map(|p| (axis, p)));
    let mut pts: Vec<[f64; 3]> = Vec::with_capacity(3 * b.vertices.len());
    for v in &b.vertices {
        let p = v.to_array();
        match periodic {
            Some((axis, period)) => {
                for o in [-1.0, 0.0, 1.0] {
                    let mut q = p;
                    q[axis] += o * period;
                    pts.push(q);
                }
            }
            None => pts.push(p),
        }
    }
    let axis = match periodic {
        Some((axis, _)) => (axis + 1) % 3,
        None => 1,
    };
    pts.sort_by(|x, y| x[axis].total_cmp(&y[axis]));
    a.vertices
        .par_iter()
        .map(|v| {
            let p = v.to_array();
            let i = pts.partition_point(|q| q[axis] < p[axis]);
            let mut best = f64::INFINITY;
            for q in pts[i..].iter() {
                if q[axis] - p[axis] >= best {
                    break;
                }
                best = best.min(dot(sub(*q, p), sub(*q, p)).sqrt());
            }
            for q in pts[..i].iter().rev() {
                if p[axis] - q[axis] >= best {
                    break;
                }
                best = best.min(dot(sub(*q, p), sub(*q, p)).sqrt());
            }
            best
        })
        .reduce(|| f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    #[test]
    fn crossing_triangles() {
        let a = [[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0]];
        let b = [[0.5, 0.5, -1.0], [0.5, 0.5, 1.0], [1.5, 0.0, 0.0]];
        let (p, q) = triangle_intersection(&a, &b, TOL).unwrap();
        assert!(p[2].abs() < 1e-12 && q[2].abs() < 1e-12);
    }

    #[test]
    fn separated_triangles() {
        let a = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let b = [[0.0, 0.0, 0.5], [1.0, 0.0, 0.5], [0.0, 1.0, 0.7]];
        assert!(triangle_intersection(&a, &b, TOL).is_none());
        let c = [[5.0, 5.0, -1.0], [5.0, 5.0, 1.0], [6.0, 5.0, 0.0]];
        assert!(triangle_intersection(&a, &c, TOL).is_none());
    }

    #[test]
    fn coplanar_overlap_and_separation() {
        let a = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let b = [[0.2, 0.2, 0.0], [1.2, 0.2, 0.0], [0.2, 1.2, 0.0]];
        assert!(triangle_intersection(&a, &b, TOL).is_some());
        assert!(triangle_intersection(&a, &a, TOL).is_some());
        let c = [[2.0, 2.0, 0.0], [3.0, 2.0, 0.0], [2.0, 3.0, 0.0]];
        assert!(triangle_intersection(&a, &c, TOL).is_none());
    }

    #[test]
    fn touching_at_a_vertex_counts() {
        let a = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let b = [[0.25, 0.25, 0.0], [0.25, 0.25, 1.0], [1.0, 1.0, 1.0]];
        assert!(triangle_intersection(&a, &b, TOL).is_some());
    }

    #[test]
    fn periodic_images_are_checked() {
        use crate::mesh::slice_mesh;
        let a = slice_mesh(4, 8, 0.0).unwrap();
        let mut b = slice_mesh(4, 8, 0.0).unwrap();
        for v in &mut b.vertices {
            v.z = if v.phi > 0.0 && v.phi < std::f64::consts::PI { 0.0 } else { -0.5 };
        }
        // identical interiors: must overlap everywhere, including across θ = 0
        let hits = mesh_intersections(&a, &b, TOL).unwrap();
        assert!(!hits.is_empty());
        assert!(self_intersections(&a, TOL).is_empty());
    }
}
