//! Discrete Riemannian area of chart-linear triangles and its exact gradient.
//!
//! For a triangle with chart edge vectors u, v and the diagonal metric frozen
//! at the centroid, the area is ½√Q with Q = Σₖ Dₖ nₖ², n = u × v and
//! D = (g_θθ g_zz, g_φφ g_zz, g_φφ g_θθ).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{centroid, cross, sub, SurfaceMesh};
use crate::metric::MetricField;

fn cofactors(g: [f64; 3]) -> [f64; 3] {
    [g[1] * g[2], g[0] * g[2], g[0] * g[1]]
}

fn cofactor_derivatives(g: [f64; 3], dg: [f64; 3]) -> [f64; 3] {
    [
        dg[1] * g[2] + g[1] * dg[2],
        dg[0] * g[2] + g[0] * dg[2],
        dg[0] * g[1] + g[0] * dg[1],
    ]
}

/// Riemannian area of one triangle given unwrapped chart corners.
pub fn triangle_area(metric: &MetricField, c: &[[f64; 3]; 3]) -> f64 {
    let m = centroid(c);
    let jet = metric.jet(m[0], m[2]);
    let d = cofactors(jet.g);
    let n = cross(sub(c[1], c[0]), sub(c[2], c[0]));
    let q = d[0] * n[0] * n[0] + d[1] * n[1] * n[1] + d[2] * n[2] * n[2];
    0.5 * q.max(0.0).sqrt()
}

/// Area of one triangle and its gradient with respect to the three corners.
/// Degenerate triangles (Q = 0) contribute zero to both.
pub fn triangle_area_gradient(metric: &MetricField, c: &[[f64; 3]; 3]) -> (f64, [[f64; 3]; 3]) {
    let m = centroid(c);
    let jet = metric.jet(m[0], m[2]);
    let d = cofactors(jet.g);
    let n = cross(sub(c[1], c[0]), sub(c[2], c[0]));
    let q = d[0] * n[0] * n[0] + d[1] * n[1] * n[1] + d[2] * n[2] * n[2];
    if !(q > 0.0) {
        return (0.0, [[0.0; 3]; 3]);
    }
    let root = q.sqrt();
    let area = 0.5 * root;
    let inv = 1.0 / (2.0 * root);
    let dn = [d[0] * n[0] * inv, d[1] * n[1] * inv, d[2] * n[2] * inv];
    let mut grad = [
        cross(sub(c[1], c[2]), dn),
        cross(sub(c[2], c[0]), dn),
        cross(sub(c[0], c[1]), dn),
    ];
    let dd_phi = cofactor_derivatives(jet.g, jet.dg_dphi);
    let dd_z = cofactor_derivatives(jet.g, jet.dg_dz);
    let n2 = [n[0] * n[0], n[1] * n[1], n[2] * n[2]];
    let quarter = 0.5 * inv;
    let da_phi = quarter * (dd_phi[0] * n2[0] + dd_phi[1] * n2[1] + dd_phi[2] * n2[2]);
    let da_z = quarter * (dd_z[0] * n2[0] + dd_z[1] * n2[1] + dd_z[2] * n2[2]);
    for g in &mut grad {
        g[0] += da_phi / 3.0;
        g[2] += da_z / 3.0;
    }
    (area, grad)
}

/// Per-triangle areas, computed in parallel and returned in triangle order.
pub fn triangle_areas(mesh: &SurfaceMesh, metric: &MetricField) -> Result<Vec<f64>> {
    let areas: Vec<f64> = (0..mesh.triangles.len())
        .into_par_iter()
        .map(|t| triangle_area(metric, &mesh.corners(t)))
        .collect();
    if let Some(t) = areas.iter().position(|a| !a.is_finite()) {
        return Err(Error::NonFinite { what: "triangle area".into(), index: t });
    }
    Ok(areas)
}

/// Total Riemannian area. Summed sequentially in triangle order, so the
/// result does not depend on the thread count.
pub fn riemannian_area(mesh: &SurfaceMesh, metric: &MetricField) -> Result<f64> {
    Ok(triangle_areas(mesh, metric)?.iter().sum())
}

/// Lumped vertex masses: a third of each incident triangle's area.
pub fn vertex_masses(mesh: &SurfaceMesh, metric: &MetricField) -> Result<Vec<f64>> {
    let areas = triangle_areas(mesh, metric)?;
    let mut mass = vec![0.0; mesh.vertices.len()];
    for (tri, a) in mesh.triangles.iter().zip(&areas) {
        for &v in tri {
            mass[v] += a / 3.0;
        }
    }
    Ok(mass)
}

/// Area, gradient with respect to every vertex coordinate, and lumped masses.
/// Fixed and axis vertices get a zero gradient.
pub fn area_and_gradient(
    mesh: &SurfaceMesh,
    metric: &MetricField,
) -> Result<(f64, Vec<[f64; 3]>, Vec<f64>)> {
    let per_triangle: Vec<(f64, [[f64; 3]; 3])> = (0..mesh.triangles.len())
        .into_par_iter()
        .map(|t| triangle_area_gradient(metric, &mesh.corners(t)))
        .collect();
    let mut area = 0.0;
    let mut grad = vec![[0.0; 3]; mesh.vertices.len()];
    let mut mass = vec![0.0; mesh.vertices.len()];
    for (t, (a, g)) in per_triangle.iter().enumerate() {
        if !a.is_finite() || g.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { what: "triangle area".into(), index: t });
        }
        area += a;
        for (c, &v) in mesh.triangles[t].iter().enumerate() {
            mass[v] += a / 3.0;
            for k in 0..3 {
                grad[v][k] += g[c][k];
            }
        }
    }
    for (v, flag) in mesh.flags.iter().enumerate() {
        if !flag.is_free() {
            grad[v] = [0.0; 3];
        }
    }
    Ok((area, grad, mass))
}

/// Diagonal of the area Hessian per vertex coordinate, with the metric held
/// at each triangle's centroid. Nonnegative; used as a preconditioner.
pub fn hessian_diagonal(mesh: &SurfaceMesh, metric: &MetricField) -> Vec<[f64; 3]> {
    let per_triangle: Vec<[[f64; 3]; 3]> = (0..mesh.triangles.len())
        .into_par_iter()
        .map(|t| {
            let c = mesh.corners(t);
            let m = centroid(&c);
            let d = cofactors(metric.jet(m[0], m[2]).g);
            let n = cross(sub(c[1], c[0]), sub(c[2], c[0]));
            let q = d[0] * n[0] * n[0] + d[1] * n[1] * n[1] + d[2] * n[2] * n[2];
            let mut h = [[0.0; 3]; 3];
            if !(q > 0.0) {
                return h;
            }
            let root = q.sqrt();
            for (i, hi) in h.iter_mut().enumerate() {
                let opposite = sub(c[(i + 1) % 3], c[(i + 2) % 3]);
                for (k, hk) in hi.iter_mut().enumerate() {
                    let mut e = [0.0; 3];
                    e[k] = 1.0;
                    let w = cross(e, opposite);
                    let ww = d[0] * w[0] * w[0] + d[1] * w[1] * w[1] + d[2] * w[2] * w[2];
                    let nw = d[0] * n[0] * w[0] + d[1] * n[1] * w[1] + d[2] * n[2] * w[2];
                    *hk = 0.5 * (ww / root - nw * nw / (q * root));
                }
            }
            h
        })
        .collect();
    let mut diag = vec![[0.0; 3]; mesh.vertices.len()];
    for (tri, h) in mesh.triangles.iter().zip(&per_triangle) {
        for (c, &v) in tri.iter().enumerate() {
            for k in 0..3 {
                diag[v][k] += h[c][k];
            }
        }
    }
    diag
}

/// Exact gradient of [`riemannian_area`] with respect to every vertex
/// coordinate; zero at fixed and axis vertices.
pub fn area_gradient(mesh: &SurfaceMesh, metric: &MetricField) -> Result<Vec<[f64; 3]>> {
    Ok(area_and_gradient(mesh, metric)?.1)
}

/// Area of the triangles incident to `v` only; used by finite-difference checks.
pub fn star_area(mesh: &SurfaceMesh, metric: &MetricField, star: &[usize]) -> f64 {
    star.iter().map(|&t| triangle_area(metric, &mesh.corners(t))).sum()
}
