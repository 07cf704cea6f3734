//! Second variation of area at the slice {z = 0} along graph perturbations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::area::riemannian_area;
use crate::error::{Error, Result};
use crate::mesh::sphere_graph;
use crate::metric::MetricField;
use crate::warp::WarpProfile;

pub const MIN_SPHERE_GRID: (usize, usize) = (64, 128);
const MAX_AMPLITUDE: f64 = 0.1;

/// Quadratic polynomial in the ambient coordinates (x, y, w) of the unit
/// sphere; smooth on S², including the poles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpherePolynomial {
    /// Coefficients of 1, x, y, w, x², y², w², xy, xw, yw.
    pub coefficients: [f64; 10],
}

impl SpherePolynomial {
    pub fn constant(c: f64) -> Self {
        let mut coefficients = [0.0; 10];
        coefficients[0] = c;
        Self { coefficients }
    }

    /// Coefficients uniform in [−1, 1] from a seeded ChaCha stream.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coefficients = [0.0; 10];
        for c in &mut coefficients {
            *c = rng.gen_range(-1.0..=1.0);
        }
        Self { coefficients }
    }

    pub fn eval(&self, phi: f64, theta: f64) -> f64 {
        let (sp, cp) = phi.sin_cos();
        let (st, ct) = theta.sin_cos();
        let (x, y, w) = (sp * ct, sp * st, cp);
        let m = [1.0, x, y, w, x * x, y * y, w * w, x * y, x * w, y * w];
        self.coefficients.iter().zip(m).map(|(c, m)| c * m).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondVariation {
    /// (A(t) − 2A(0) + A(−t)) / t².
    pub value: f64,
    pub amplitude: f64,
    pub area_minus: f64,
    pub area_zero: f64,
    pub area_plus: f64,
}

/// Second central difference of the area of the graphs z = ±t·u over the
/// slice {z = 0}, on an (n_phi + 1) × n_theta sphere mesh.
pub fn graph_second_variation(
    profile: &WarpProfile,
    u: &dyn Fn(f64, f64) -> f64,
    n_phi: usize,
    n_theta: usize,
    amplitude: f64,
) -> Result<SecondVariation> {
    if amplitude > MAX_AMPLITUDE {
        return Err(Error::PerturbationTooLarge(format!(
            "amplitude {amplitude} exceeds {MAX_AMPLITUDE}"
        )));
    }
    if !(amplitude > 0.0) {
        return Err(Error::InvalidArgument(format!("amplitude {amplitude} must be positive")));
    }
    if n_phi < MIN_SPHERE_GRID.0 || n_theta < MIN_SPHERE_GRID.1 {
        return Err(Error::InvalidArgument(format!(
            "sphere grid {n_phi}x{n_theta} below {}x{}",
            MIN_SPHERE_GRID.0, MIN_SPHERE_GRID.1
        )));
    }
    let metric = MetricField::base(profile.clone());
    let area = |t: f64| -> Result<f64> {
        let mesh = sphere_graph(n_phi, n_theta, |phi, theta| t * u(phi, theta))?;
        let (worst, quality) = mesh.min_quality(&metric);
        if !(quality > 1e-8) {
            return Err(Error::DegenerateMesh { triangle: worst, quality });
        }
        riemannian_area(&mesh, &metric)
    };
    let (area_minus, area_zero, area_plus) = (area(-amplitude)?, area(0.0)?, area(amplitude)?);
    let value = (area_plus - 2.0 * area_zero + area_minus) / (amplitude * amplitude);
    Ok(SecondVariation { value, amplitude, area_minus, area_zero, area_plus })
}
