//! Warp profiles ω(z) for the metric ω²(z)(dφ² + sin²φ dθ²) + dz² on S²×S¹,
//! the admissibility checks on ω, and closed-form curvature quantities.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{ChartPoint, MetricTensor};

/// Whether the sphere factor is actually warped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarpMode {
    Warped,
    /// ω ≡ 1 regardless of the configured shape.
    Product,
}

/// Closed-form shape of ω.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarpShape {
    /// ω(z) = 5/4 − ¼ cos z.
    Standard,
    /// ω(z) = c₀ + Σₖ cₖ cos(kz).
    Cosine(Vec<f64>),
}

/// Value and first two derivatives of ω at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpJet {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpProfile {
    pub shape: WarpShape,
    pub mode: WarpMode,
}

impl WarpProfile {
    pub fn standard() -> Self {
        Self { shape: WarpShape::Standard, mode: WarpMode::Warped }
    }

    pub fn cosine(coefficients: Vec<f64>) -> Self {
        Self { shape: WarpShape::Cosine(coefficients), mode: WarpMode::Warped }
    }

    pub fn product() -> Self {
        Self { shape: WarpShape::Standard, mode: WarpMode::Product }
    }

    pub fn is_product(&self) -> bool {
        self.mode == WarpMode::Product
    }

    pub fn jet(&self, z: f64) -> WarpJet {
        if self.is_product() {
            return WarpJet { value: 1.0, d1: 0.0, d2: 0.0 };
        }
        match &self.shape {
            WarpShape::Standard => {
                let (s, c) = z.sin_cos();
                WarpJet { value: 1.25 - 0.25 * c, d1: 0.25 * s, d2: 0.25 * c }
            }
            WarpShape::Cosine(coeffs) => {
                let mut jet = WarpJet { value: 0.0, d1: 0.0, d2: 0.0 };
                for (k, &ck) in coeffs.iter().enumerate() {
                    let kf = k as f64;
                    let (s, c) = (kf * z).sin_cos();
                    jet.value += ck * c;
                    jet.d1 -= kf * ck * s;
                    jet.d2 -= kf * kf * ck * c;
                }
                jet
            }
        }
    }

    pub fn value(&self, z: f64) -> f64 {
        self.jet(z).value
    }

    /// Base metric (ω², ω² sin²φ, 1). The θθ entry vanishes on the polar axes.
    pub fn metric_at(&self, p: ChartPoint) -> MetricTensor {
        let w = self.value(p.z);
        let s = p.phi.sin();
        MetricTensor { g_phiphi: w * w, g_thetatheta: w * w * s * s, g_zz: 1.0 }
    }

    /// Scal = −2ω″/ω + (1 − ω′²)/ω², the normalization used for the
    /// positivity claim (half the usual warped-product scalar curvature).
    pub fn scalar_curvature(&self, z: f64) -> f64 {
        let j = self.jet(z);
        -2.0 * j.d2 / j.value + (1.0 - j.d1 * j.d1) / (j.value * j.value)
    }

    /// Mean curvature 2ω′(|a|)/ω(|a|) of the slice {z = a}, taken with respect
    /// to the normal pointing towards Γ = {z = 0}.
    pub fn slice_mean_curvature(&self, a: f64) -> f64 {
        let j = self.jet(a.abs());
        2.0 * j.d1 / j.value
    }
}

/// Outcome of one admissibility condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub id: u8,
    pub description: String,
    pub passed: bool,
    /// A z value exhibiting the failure, if any.
    pub witness: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpReport {
    pub grid_size: usize,
    pub conditions: Vec<ConditionCheck>,
    /// ω > 0 on the whole grid.
    pub positive: bool,
}

impl WarpReport {
    pub fn all_pass(&self) -> bool {
        self.positive && self.conditions.iter().all(|c| c.passed)
    }

    pub fn condition(&self, id: u8) -> Option<&ConditionCheck> {
        self.conditions.iter().find(|c| c.id == id)
    }
}

const EVEN_TOL: f64 = 1e-12;

/// Checks ω(π) > ω(0) = 1, evenness, ω″(0) > 0 and that 0, π are the only
/// critical points, on a uniform grid over (−π, π] with sign-change
/// refinement of ω′.
pub fn validate_warp(profile: &WarpProfile, grid_size: usize) -> Result<WarpReport> {
    if grid_size < 64 {
        return Err(Error::InvalidArgument(format!("grid_size {grid_size} < 64")));
    }
    let h = 2.0 * PI / grid_size as f64;
    let grid: Vec<f64> = (1..=grid_size).map(|i| -PI + h * i as f64).collect();
    let mut jets = Vec::with_capacity(grid.len());
    for &z in &grid {
        let j = profile.jet(z);
        if !(j.value.is_finite() && j.d1.is_finite() && j.d2.is_finite()) {
            return Err(Error::InvalidProfile(format!("non-finite evaluation at z = {z}")));
        }
        jets.push(j);
    }
    let positive = jets.iter().all(|j| j.value > 0.0);

    let at0 = profile.jet(0.0);
    let at_pi = profile.jet(PI);
    let mut conditions = Vec::with_capacity(4);

    let c1 = (at0.value - 1.0).abs() <= EVEN_TOL && at_pi.value > at0.value;
    conditions.push(ConditionCheck {
        id: 1,
        description: "omega(pi) > omega(0) = 1".into(),
        passed: c1,
        witness: if c1 { None } else { Some(if (at0.value - 1.0).abs() > EVEN_TOL { 0.0 } else { PI }) },
        detail: format!("omega(0) = {}, omega(pi) = {}", at0.value, at_pi.value),
    });

    let mut worst_odd = (0.0f64, None);
    for &z in &grid {
        let d = (profile.value(z) - profile.value(-z)).abs();
        if d > worst_odd.0 {
            worst_odd = (d, Some(z));
        }
    }
    let c2 = worst_odd.0 <= EVEN_TOL * (1.0 + at_pi.value.abs());
    conditions.push(ConditionCheck {
        id: 2,
        description: "omega(z) = omega(-z)".into(),
        passed: c2,
        witness: if c2 { None } else { worst_odd.1 },
        detail: format!("max |omega(z) - omega(-z)| = {:.3e}", worst_odd.0),
    });

    let c3 = at0.d2 > 0.0;
    conditions.push(ConditionCheck {
        id: 3,
        description: "omega''(0) > 0".into(),
        passed: c3,
        witness: if c3 { None } else { Some(0.0) },
        detail: format!("omega''(0) = {}", at0.d2),
    });

    let extra = find_extra_critical_point(profile, &grid, &jets, h);
    conditions.push(ConditionCheck {
        id: 4,
        description: "z = 0, pi are the only critical points".into(),
        passed: extra.is_none(),
        witness: extra,
        detail: match extra {
            Some(z) => format!("omega' vanishes near z = {z:.12}"),
            None => "omega' has constant sign on (0, pi) and (-pi, 0)".into(),
        },
    });

    Ok(WarpReport { grid_size, conditions, positive })
}

/// Scans ω′ on both open half-circles; a sign change or an exact zero away
/// from {0, π} is refined by bisection into a witness.
fn find_extra_critical_point(
    profile: &WarpProfile,
    grid: &[f64],
    jets: &[WarpJet],
    h: f64,
) -> Option<f64> {
    // Grid points strictly inside the half-circles, one spacing away from 0 and ±π.
    let interior = |z: f64| z.abs() > 0.5 * h && PI - z.abs() > 0.5 * h;
    let samples: Vec<(f64, f64)> = grid
        .iter()
        .zip(jets)
        .filter(|(z, _)| interior(**z))
        .map(|(z, j)| (*z, j.d1))
        .collect();
    for &(z, d) in &samples {
        if d == 0.0 {
            return Some(z);
        }
    }
    for w in samples.windows(2) {
        let (za, da) = w[0];
        let (zb, db) = w[1];
        // Consecutive samples straddling z = 0 belong to different halves.
        if za < 0.0 && zb > 0.0 {
            continue;
        }
        if da.signum() != db.signum() {
            return Some(bisect_root(|z| profile.jet(z).d1, za, zb));
        }
    }
    None
}

fn bisect_root(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 || (b - a).abs() < 1e-15 {
            return m;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Result of scanning the scalar curvature over the circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarCurvatureScan {
    pub points: usize,
    pub min: f64,
    pub argmin: f64,
    pub max: f64,
    pub all_positive: bool,
}

/// Samples Scal on `points` uniformly spaced z in (−π, π]; the grid contains z = 0
/// whenever `points` is even.
pub fn scan_scalar_curvature(profile: &WarpProfile, points: usize) -> ScalarCurvatureScan {
    let h = 2.0 * PI / points as f64;
    let mut scan = ScalarCurvatureScan {
        points,
        min: f64::INFINITY,
        argmin: 0.0,
        max: f64::NEG_INFINITY,
        all_positive: true,
    };
    for i in 1..=points {
        let z = if 2 * i == points { 0.0 } else { -PI + h * i as f64 };
        let s = profile.scalar_curvature(z);
        if s < scan.min {
            scan.min = s;
            scan.argmin = z;
        }
        scan.max = scan.max.max(s);
        if !(s > 0.0) {
            scan.all_positive = false;
        }
    }
    scan
}
