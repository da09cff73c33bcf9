//! V-shaped cavity discretization and the point-pair geometric kernel.
//!
//! The fold (hinge) lies on the x axis. Panel A extends from the hinge along
//! `(0, -sin(θ/2), cos(θ/2))`, panel B along `(0, sin(θ/2), cos(θ/2))`, so the
//! cavity opens towards +z where the camera and the collimated source sit.
//! Facets are ordered panel A first, then panel B; within a panel row-major,
//! row 0 being the row adjacent to the fold.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Panel {
    A,
    B,
}

/// A flat rectangular surface element.
#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    pub center: Vec3,
    pub normal: Vec3,
    /// Orthonormal in-plane axes: `[along the fold, away from the fold]`.
    pub tangents: [Vec3; 2],
    pub half_extents: [f64; 2],
    pub panel: Panel,
    pub row: usize,
    pub col: usize,
}

impl Facet {
    pub fn area(&self) -> f64 {
        4.0 * self.half_extents[0] * self.half_extents[1]
    }

    /// Point at local coordinates `(u, v) ∈ [0,1]²`.
    pub fn point(&self, u: f64, v: f64) -> Vec3 {
        self.center
            + self.tangents[0] * ((2.0 * u - 1.0) * self.half_extents[0])
            + self.tangents[1] * ((2.0 * v - 1.0) * self.half_extents[1])
    }

    /// Corners in counter-clockwise order about `tangents[0] × tangents[1]`.
    pub fn corners(&self) -> [Vec3; 4] {
        [
            self.point(0.0, 0.0),
            self.point(1.0, 0.0),
            self.point(1.0, 1.0),
            self.point(0.0, 1.0),
        ]
    }

    pub fn diagonal(&self) -> f64 {
        2.0 * self.half_extents[0].hypot(self.half_extents[1])
    }
}

/// Two square panels hinged along a shared edge.
#[derive(Debug, Clone, PartialEq)]
pub struct VCavity {
    pub angle_deg: f64,
    pub panel_side: f64,
    pub facets_per_side: usize,
    pub facets: Vec<Facet>,
}

impl VCavity {
    pub fn facet_count(&self) -> usize {
        self.facets.len()
    }

    /// Facets of one panel (`n²` each).
    pub fn panel_facets(&self, panel: Panel) -> &[Facet] {
        let k = self.facets_per_side * self.facets_per_side;
        match panel {
            Panel::A => &self.facets[..k],
            Panel::B => &self.facets[k..],
        }
    }

    pub fn is_flat(&self) -> bool {
        (self.angle_deg - 180.0).abs() < 1e-12
    }
}

/// Builds a V cavity with opening angle `angle_deg`, square panels of side
/// `panel_side` and `n × n` facets per panel.
pub fn build_v_cavity(angle_deg: f64, panel_side: f64, n: usize) -> Result<VCavity> {
    if !(angle_deg > 0.0 && angle_deg <= 180.0) {
        return Err(Error::Domain(format!(
            "cavity angle must be in (0, 180] degrees, got {angle_deg}"
        )));
    }
    if !(panel_side > 0.0 && panel_side.is_finite()) {
        return Err(Error::Domain(format!("panel side must be positive, got {panel_side}")));
    }
    if n == 0 {
        return Err(Error::Domain("need at least one facet per side".into()));
    }
    let half = angle_deg.to_radians() / 2.0;
    let (s, c) = half.sin_cos();
    let along = Vec3::x();
    let panels = [
        (Panel::A, Vec3::new(0.0, -s, c), Vec3::new(0.0, c, s)),
        (Panel::B, Vec3::new(0.0, s, c), Vec3::new(0.0, -c, s)),
    ];
    let h = panel_side / n as f64;
    let mut facets = Vec::with_capacity(2 * n * n);
    for (panel, away, normal) in panels {
        for row in 0..n {
            for col in 0..n {
                let center = along * ((col as f64 + 0.5) * h) + away * ((row as f64 + 0.5) * h);
                // Keep tangents[0] × tangents[1] aligned with the normal.
                let t0 = if along.cross(&away).dot(&normal) >= 0.0 {
                    along
                } else {
                    -along
                };
                facets.push(Facet {
                    center,
                    normal,
                    tangents: [t0, away],
                    half_extents: [h / 2.0, h / 2.0],
                    panel,
                    row,
                    col,
                });
            }
        }
    }
    Ok(VCavity {
        angle_deg,
        panel_side,
        facets_per_side: n,
        facets,
    })
}

/// Point-to-point geometric kernel `cosθᵢ·cosθⱼ / Δ²` with full visibility.
///
/// Written with unnormalized difference vectors as
/// `(nᵢ·(pⱼ−pᵢ))(nⱼ·(pᵢ−pⱼ)) / Δ⁴`; back-facing pairs give 0.
pub fn geometric_kernel_point(pi: &Vec3, ni: &Vec3, pj: &Vec3, nj: &Vec3) -> Result<f64> {
    let d = pj - pi;
    let d2 = d.norm_squared();
    if d2 == 0.0 {
        return Err(Error::Singular);
    }
    let a = ni.dot(&d);
    let b = -nj.dot(&d);
    if a <= 0.0 || b <= 0.0 {
        return Ok(0.0);
    }
    Ok(a * b / (d2 * d2))
}

/// Differential-area-to-polygon form factor from a point with normal `n` to a
/// planar convex polygon wholly in front of it (Lambert's contour integral).
///
/// Equals `(1/π)·∫ K(p, q) dA_q` over the polygon.
pub fn point_to_polygon_form_factor(p: &Vec3, n: &Vec3, corners: &[Vec3]) -> f64 {
    let k = corners.len();
    let mut sum = 0.0;
    for e in 0..k {
        let a = corners[e] - p;
        let b = corners[(e + 1) % k] - p;
        let (na, nb) = (a.norm(), b.norm());
        if na == 0.0 || nb == 0.0 {
            continue;
        }
        let cr = a.cross(&b);
        let s = cr.norm();
        if s == 0.0 {
            continue;
        }
        let gamma = s.atan2(a.dot(&b));
        sum += gamma * cr.dot(n) / s;
    }
    (sum / (2.0 * std::f64::consts::PI)).abs()
}
