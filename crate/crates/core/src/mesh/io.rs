//! OBJ export with a JSON sidecar carrying chart, grid and vertex flags.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ChartKind, Grid, SurfaceMesh, VertexFlag};
use crate::error::{Error, Result};
use crate::metric::ChartPoint;

/// Everything an OBJ file cannot hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSidecar {
    pub chart: ChartKind,
    pub grid: Option<Grid>,
    pub flags: Vec<VertexFlag>,
    pub free_axes: [bool; 3],
    pub provenance: serde_json::Value,
}

pub fn sidecar_path(obj: &Path) -> PathBuf {
    obj.with_extension("json")
}

/// OBJ text: `v φ θ z` lines in shortest round-trip form, then 1-based faces.
pub fn to_obj_string(mesh: &SurfaceMesh) -> String {
    let mut s = String::with_capacity(48 * mesh.vertices.len() + 24 * mesh.triangles.len());
    s.push_str("# chart coordinates: phi theta z\n");
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {:?} {:?} {:?}", v.phi, v.theta, v.z);
    }
    for t in &mesh.triangles {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s
}

pub fn parse_obj(text: &str) -> Result<(Vec<ChartPoint>, Vec<[usize; 3]>)> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        let bad = || Error::Format(format!("OBJ line {}: {line:?}", lineno + 1));
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let c: Vec<f64> = parts.map(|p| p.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
                if c.len() != 3 {
                    return Err(bad());
                }
                vertices.push(ChartPoint::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = parts
                    .map(|p| p.split('/').next().unwrap_or("").parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad())?;
                if idx.len() != 3 || idx.contains(&0) {
                    return Err(bad());
                }
                triangles.push([idx[0] - 1, idx[1] - 1, idx[2] - 1]);
            }
            _ => {}
        }
    }
    if let Some(t) = triangles.iter().position(|t| t.iter().any(|&i| i >= vertices.len())) {
        return Err(Error::Format(format!("face {} references a missing vertex", t + 1)));
    }
    Ok((vertices, triangles))
}

/// Writes `path` (OBJ) and its `.json` sidecar.
pub fn write_mesh(mesh: &SurfaceMesh, path: &Path, provenance: serde_json::Value) -> Result<()> {
    fs::write(path, to_obj_string(mesh))?;
    let sidecar = MeshSidecar {
        chart: mesh.chart,
        grid: mesh.grid,
        flags: mesh.flags.clone(),
        free_axes: mesh.free_axes,
        provenance,
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn read_mesh(path: &Path) -> Result<(SurfaceMesh, serde_json::Value)> {
    let (vertices, triangles) = parse_obj(&fs::read_to_string(path)?)?;
    let sidecar: MeshSidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    if sidecar.flags.len() != vertices.len() {
        return Err(Error::Format(format!(
            "sidecar has {} flags for {} vertices",
            sidecar.flags.len(),
            vertices.len()
        )));
    }
    let mesh = SurfaceMesh {
        vertices,
        triangles,
        flags: sidecar.flags,
        grid: sidecar.grid,
        chart: sidecar.chart,
        free_axes: sidecar.free_axes,
    };
    Ok((mesh, sidecar.provenance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charts::BoxChart;
    use crate::mesh::initial_annulus;

    #[test]
    fn round_trip_is_bitwise() {
        let chart = BoxChart::new(2, 0.3).unwrap();
        let mut mesh = initial_annulus(&chart, 16, 32).unwrap();
        mesh.vertices[40].theta = 0.1 + 0.2;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("annulus.obj");
        write_mesh(&mesh, &path, serde_json::json!({"n": 2})).unwrap();
        let (back, prov) = read_mesh(&path).unwrap();
        assert_eq!(back, mesh);
        assert_eq!(prov["n"], 2);
    }

    #[test]
    fn rejects_bad_faces() {
        assert!(parse_obj("v 0 0 0\nf 1 2 3\n").is_err());
        assert!(parse_obj("v 0 0\n").is_err());
    }
}
