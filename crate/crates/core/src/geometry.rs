//! Flat-torus arithmetic around a single unit-ball obstacle.
//!
//! The torus is the cube `[-rho, rho)^3` with opposite faces identified and
//! the closed unit ball at the origin removed. `DomainGeometry::exterior()`
//! gives the same obstacle in free space (no wrapping).

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Relative tolerance for accepting a point as lying on the unit sphere.
pub const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Mode {
    Torus { rho: f64 },
    ExteriorFreeSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainGeometry {
    mode: Mode,
}

impl DomainGeometry {
    pub fn torus(rho: f64) -> Result<Self> {
        if !rho.is_finite() || rho <= 1.0 {
            return Err(Error::InvalidGeometry(format!(
                "torus half-side rho must be finite and > 1, got {rho}"
            )));
        }
        Ok(Self {
            mode: Mode::Torus { rho },
        })
    }

    pub fn exterior() -> Self {
        Self {
            mode: Mode::ExteriorFreeSpace,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Half side length, or `None` in free space.
    pub fn rho(&self) -> Option<f64> {
        match self.mode {
            Mode::Torus { rho } => Some(rho),
            Mode::ExteriorFreeSpace => None,
        }
    }

    pub fn is_torus(&self) -> bool {
        matches!(self.mode, Mode::Torus { .. })
    }

    /// Largest possible minimal-image distance, `rho * sqrt(3)` on the torus.
    pub fn diameter(&self) -> f64 {
        match self.mode {
            Mode::Torus { rho } => rho * 3f64.sqrt(),
            Mode::ExteriorFreeSpace => f64::INFINITY,
        }
    }

    /// Reduce raw coordinates to the canonical cell `[-rho, rho)^3`.
    pub fn canonicalize(&self, raw: Vec3) -> Result<TorusPoint> {
        if !raw.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("canonicalize"));
        }
        Ok(TorusPoint(self.wrap(raw)))
    }

    /// Unchecked wrap used on hot paths where finiteness is already known.
    #[inline]
    pub(crate) fn wrap(&self, raw: Vec3) -> Vec3 {
        match self.mode {
            Mode::Torus { rho } => raw.map(|c| wrap_coord(c, rho)),
            Mode::ExteriorFreeSpace => raw,
        }
    }

    /// Minimal-image representative of `x - y`.
    pub fn min_image_diff(&self, x: &TorusPoint, y: &TorusPoint) -> Result<TorusVector> {
        let d = x.0 - y.0;
        if !d.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("min_image_diff"));
        }
        Ok(TorusVector(self.wrap(d)))
    }

    #[inline]
    pub(crate) fn diff(&self, x: &Vec3, y: &Vec3) -> Vec3 {
        self.wrap(x - y)
    }

    /// Flat-torus geodesic distance; the obstacle is ignored.
    pub fn geodesic_dist(&self, x: &TorusPoint, y: &TorusPoint) -> Result<f64> {
        Ok(self.min_image_diff(x, y)?.norm())
    }

    /// Radius of the largest ball around `x` that misses every obstacle image.
    ///
    /// For a canonical point the nearest lattice centre is the origin, so this
    /// is `|x| - 1` in both modes.
    #[inline]
    pub fn free_radius(&self, x: &Vec3) -> f64 {
        x.norm() - 1.0
    }
}

#[inline]
fn wrap_coord(c: f64, rho: f64) -> f64 {
    if (-rho..rho).contains(&c) {
        return c;
    }
    let period = 2.0 * rho;
    let mut r = c - period * ((c + rho) / period).floor();
    // floor() can leave the result a rounding error outside the half-open cell
    if r >= rho {
        r -= period;
    }
    if r < -rho {
        r += period;
    }
    r
}

/// A point of the torus in canonical coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint(pub(crate) Vec3);

impl TorusPoint {
    /// Wraps a point that the caller asserts is already canonical.
    pub fn from_canonical(v: Vec3) -> Self {
        Self(v)
    }

    pub fn coords(&self) -> Vec3 {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

/// Minimal-image displacement between two torus points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusVector(pub(crate) Vec3);

impl TorusVector {
    pub fn components(&self) -> Vec3 {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

fn check_on_sphere(x: &Vec3) -> Result<f64> {
    let r = x.norm();
    if !r.is_finite() {
        return Err(Error::NonFinite("sphere point"));
    }
    if (r - 1.0).abs() > BOUNDARY_TOL {
        return Err(Error::NotOnBoundary { radius: r });
    }
    Ok(r)
}

/// Unit normal pointing into the domain, i.e. radially away from the origin.
pub fn inward_normal(x: &Vec3) -> Result<Vec3> {
    let r = check_on_sphere(x)?;
    Ok(x / r)
}

/// Orthogonal projection of `v` onto the tangent plane of the sphere at `x`.
pub fn tangent_project(x: &Vec3, v: &Vec3) -> Result<Vec3> {
    let n = inward_normal(x)?;
    Ok(project_with_normal(&n, v))
}

#[inline]
pub(crate) fn project_with_normal(n: &Vec3, v: &Vec3) -> Vec3 {
    v - n * n.dot(v)
}

/// Shape operator of the unit sphere: the identity on tangent vectors.
pub fn shape_apply(_x: &Vec3, v: &Vec3) -> Vec3 {
    *v
}
