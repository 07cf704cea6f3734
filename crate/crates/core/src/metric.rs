//! Chart points, diagonal metric tensors and the metric fields the discrete
//! machinery evaluates (base warped metric and the ε-glued metric).

use serde::{Deserialize, Serialize};

use crate::charts::GlueProfile;
use crate::warp::WarpProfile;

/// Coordinates (φ, θ, z). φ is latitude, θ longitude, z the circle coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChartPoint {
    pub phi: f64,
    pub theta: f64,
    pub z: f64,
}

impl ChartPoint {
    pub const fn new(phi: f64, theta: f64, z: f64) -> Self {
        Self { phi, theta, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self { phi: a[0], theta: a[1], z: a[2] }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.phi, self.theta, self.z]
    }

    pub fn is_finite(&self) -> bool {
        self.phi.is_finite() && self.theta.is_finite() && self.z.is_finite()
    }
}

/// Diagonal metric diag(g_φφ, g_θθ, g_zz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTensor {
    pub g_phiphi: f64,
    pub g_thetatheta: f64,
    pub g_zz: f64,
}

impl MetricTensor {
    pub fn diag(&self) -> [f64; 3] {
        [self.g_phiphi, self.g_thetatheta, self.g_zz]
    }

    pub fn inner(&self, u: [f64; 3], v: [f64; 3]) -> f64 {
        self.g_phiphi * u[0] * v[0] + self.g_thetatheta * u[1] * v[1] + self.g_zz * u[2] * v[2]
    }

    pub fn norm(&self, u: [f64; 3]) -> f64 {
        self.inner(u, u).sqrt()
    }

    pub fn determinant(&self) -> f64 {
        self.g_phiphi * self.g_thetatheta * self.g_zz
    }
}

/// Metric components and their φ- and z-derivatives at one point. Nothing
/// depends on θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricJet {
    pub g: [f64; 3],
    pub dg_dphi: [f64; 3],
    pub dg_dz: [f64; 3],
}

impl MetricJet {
    pub fn tensor(&self) -> MetricTensor {
        MetricTensor { g_phiphi: self.g[0], g_thetatheta: self.g[1], g_zz: self.g[2] }
    }

    /// Christoffel symbols Γᵏᵢⱼ of the diagonal metric, indexed `[k][i][j]`.
    pub fn christoffel(&self) -> [[[f64; 3]; 3]; 3] {
        let dg = |i: usize, axis: usize| -> f64 {
            match axis {
                0 => self.dg_dphi[i],
                2 => self.dg_dz[i],
                _ => 0.0,
            }
        };
        let mut gamma = [[[0.0; 3]; 3]; 3];
        for k in 0..3 {
            let gk = self.g[k];
            if gk <= 0.0 {
                continue;
            }
            for i in 0..3 {
                for j in 0..3 {
                    let v = if i == k && j == k {
                        dg(k, k) / (2.0 * gk)
                    } else if i == k {
                        dg(k, j) / (2.0 * gk)
                    } else if j == k {
                        dg(k, i) / (2.0 * gk)
                    } else if i == j {
                        -dg(i, k) / (2.0 * gk)
                    } else {
                        0.0
                    };
                    gamma[k][i][j] = v;
                }
            }
        }
        gamma
    }
}

/// Which ambient metric a mesh is measured in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MetricField {
    /// ω²(dφ² + sin²φ dθ²) + dz².
    Base { profile: WarpProfile },
    /// ω²(dφ² + α_ε²(φ) dθ²) + dz².
    Glued { profile: WarpProfile, glue: GlueProfile },
}

impl MetricField {
    pub fn base(profile: WarpProfile) -> Self {
        MetricField::Base { profile }
    }

    pub fn glued(profile: WarpProfile, glue: GlueProfile) -> Self {
        MetricField::Glued { profile, glue }
    }

    pub fn profile(&self) -> &WarpProfile {
        match self {
            MetricField::Base { profile } | MetricField::Glued { profile, .. } => profile,
        }
    }

    /// (α, α′) of the θ-circle radius factor.
    pub fn radius_factor(&self, phi: f64) -> (f64, f64) {
        match self {
            MetricField::Base { .. } => phi.sin_cos(),
            MetricField::Glued { glue, .. } => glue.eval(phi),
        }
    }

    pub fn tensor(&self, p: ChartPoint) -> MetricTensor {
        self.jet(p.phi, p.z).tensor()
    }

    pub fn jet(&self, phi: f64, z: f64) -> MetricJet {
        let w = self.profile().jet(z);
        let (a, da) = self.radius_factor(phi);
        let w2 = w.value * w.value;
        let dw2 = 2.0 * w.value * w.d1;
        MetricJet {
            g: [w2, w2 * a * a, 1.0],
            dg_dphi: [0.0, w2 * 2.0 * a * da, 0.0],
            dg_dz: [dw2, dw2 * a * a, 0.0],
        }
    }
}
