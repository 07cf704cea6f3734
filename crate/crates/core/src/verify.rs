//! The metric verification suite: admissibility of ω, positivity of the
//! scalar curvature, slice mean curvature, and minimality and orthogonality
//! of the box walls.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::charts::{build_glue_profile, wall_mean_curvature, BoxChart, Wall};
use crate::error::Result;
use crate::mesh::slice_mesh;
use crate::metric::{ChartPoint, MetricField};
use crate::solver::mean_curvature_residual;
use crate::warp::{scan_scalar_curvature, validate_warp, ScalarCurvatureScan, WarpProfile, WarpReport};

pub const SCAL_POINTS: usize = 10_000;
pub const SLICE_GRID: (usize, usize) = (64, 128);
const SLICE_REL_TOL: f64 = 0.02;
const SLICE_ABS_TOL: f64 = 1e-6;
const WALL_RESIDUAL_TOL: f64 = 1e-3;
const WALL_ANGLE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceCheck {
    pub z: f64,
    pub expected: f64,
    pub min: f64,
    pub max: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallCheck {
    pub wall: Wall,
    pub max_residual: f64,
    /// max |angle − π/2| with the adjacent walls.
    pub max_angle_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricVerification {
    pub warp: WarpReport,
    pub scalar_curvature: ScalarCurvatureScan,
    pub slices: Vec<SliceCheck>,
    pub walls: Vec<WallCheck>,
    pub all_pass: bool,
}

/// Residual range on the slice {z = a} against |2ω′/ω|.
pub fn slice_check(profile: &WarpProfile, z: f64) -> Result<SliceCheck> {
    let metric = MetricField::base(profile.clone());
    let mesh = slice_mesh(SLICE_GRID.0, SLICE_GRID.1, z)?;
    let field = mean_curvature_residual(&mesh, &metric)?;
    let vals: Vec<f64> = field.values.iter().flatten().copied().collect();
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let max = vals.iter().copied().fold(0.0, f64::max);
    let expected = profile.slice_mean_curvature(z).abs();
    let passed = if expected > SLICE_ABS_TOL {
        (min - expected).abs() <= SLICE_REL_TOL * expected && (max - expected).abs() <= SLICE_REL_TOL * expected
    } else {
        max < SLICE_ABS_TOL
    };
    Ok(SliceCheck { z, expected, min, max, passed })
}

/// The four walls of N_{1,ε} under the glued metric with blend ε/2.
pub fn wall_checks(profile: &WarpProfile, eps: f64) -> Result<Vec<WallCheck>> {
    let chart = BoxChart::new(1, eps)?;
    let metric = MetricField::glued(profile.clone(), build_glue_profile(eps, eps / 2.0)?);
    Wall::ALL
        .iter()
        .map(|&wall| {
            let (axis, value) = wall.normal_axis(&chart);
            let samples: Vec<ChartPoint> = [0.1, 0.9, 1.6, 2.5]
                .iter()
                .map(|&phi| {
                    let mut c = [phi, 0.5, 0.5];
                    c[axis] = value;
                    ChartPoint::from_array(c)
                })
                .collect();
            let report = wall_mean_curvature(&chart, &metric, wall, &samples)?;
            let max_angle_error =
                report.dihedral_angles.iter().map(|(_, a)| (a - FRAC_PI_2).abs()).fold(0.0, f64::max);
            let max_residual = report.max_residual();
            Ok(WallCheck {
                wall,
                max_residual,
                max_angle_error,
                passed: max_residual < WALL_RESIDUAL_TOL && max_angle_error < WALL_ANGLE_TOL,
            })
        })
        .collect()
}

pub fn verify_metric(profile: &WarpProfile, eps: f64, check_grid: usize) -> Result<MetricVerification> {
    let warp = validate_warp(profile, check_grid)?;
    let scalar_curvature = scan_scalar_curvature(profile, SCAL_POINTS);
    let slices = vec![slice_check(profile, FRAC_PI_2)?, slice_check(profile, 0.0)?, slice_check(profile, PI)?];
    let walls = wall_checks(profile, eps)?;
    let all_pass = warp.all_pass()
        && scalar_curvature.all_positive
        && slices.iter().all(|s| s.passed)
        && walls.iter().all(|w| w.passed);
    Ok(MetricVerification { warp, scalar_curvature, slices, walls, all_pass })
}
