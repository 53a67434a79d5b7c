//! Inclusion shapes, their ε-rescaling, voxelization, and quadrature rules.

mod quadrature;

pub use quadrature::{gauss_legendre, gauss_legendre_on, integrate, BallQuadrature, SphereRule};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{norm, sub, Vec3};

/// Analytic inclusion shapes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Ball { radius: f64 },
    /// Axis-aligned box with the given side lengths.
    Box { sides: [f64; 3] },
    Ellipsoid { semi_axes: [f64; 3] },
}

/// A bounded connected inclusion `Ω` together with its distinguished
/// interior point `y0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub shape: Shape,
    #[serde(default)]
    pub center: Vec3,
}

impl DomainSpec {
    pub fn unit_ball() -> Self {
        DomainSpec {
            shape: Shape::Ball { radius: 1.0 },
            center: [0.0; 3],
        }
    }

    pub fn ball(radius: f64) -> Self {
        DomainSpec {
            shape: Shape::Ball { radius },
            center: [0.0; 3],
        }
    }

    pub fn cube(side: f64) -> Self {
        DomainSpec {
            shape: Shape::Box { sides: [side; 3] },
            center: [0.0; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.shape {
            Shape::Ball { radius } => radius > 0.0 && radius.is_finite(),
            Shape::Box { sides } => sides.iter().all(|s| *s > 0.0 && s.is_finite()),
            Shape::Ellipsoid { semi_axes } => semi_axes.iter().all(|s| *s > 0.0 && s.is_finite()),
        };
        if ok && self.center.iter().all(|c| c.is_finite()) {
            Ok(())
        } else {
            Err(Error::param(format!("invalid domain parameters: {self:?}")))
        }
    }

    /// Half-widths of the axis-aligned bounding box.
    pub fn half_extents(&self) -> Vec3 {
        match self.shape {
            Shape::Ball { radius } => [radius; 3],
            Shape::Box { sides } => [sides[0] / 2.0, sides[1] / 2.0, sides[2] / 2.0],
            Shape::Ellipsoid { semi_axes } => semi_axes,
        }
    }

    /// Largest bounding-box extent; the voxel pitch is this divided by the
    /// resolution.
    pub fn diameter(&self) -> f64 {
        let e = self.half_extents();
        2.0 * e[0].max(e[1]).max(e[2])
    }

    /// Distance from `y0` to the farthest point of `Ω`.
    pub fn outer_radius(&self) -> f64 {
        match self.shape {
            Shape::Ball { radius } => radius,
            Shape::Box { sides } => 0.5 * (sides[0] * sides[0] + sides[1] * sides[1] + sides[2] * sides[2]).sqrt(),
            Shape::Ellipsoid { semi_axes } => semi_axes[0].max(semi_axes[1]).max(semi_axes[2]),
        }
    }

    pub fn exact_volume(&self) -> f64 {
        use std::f64::consts::PI;
        match self.shape {
            Shape::Ball { radius } => 4.0 * PI / 3.0 * radius.powi(3),
            Shape::Box { sides } => sides[0] * sides[1] * sides[2],
            Shape::Ellipsoid { semi_axes } => 4.0 * PI / 3.0 * semi_axes[0] * semi_axes[1] * semi_axes[2],
        }
    }

    /// Open-set membership test.
    pub fn contains(&self, x: Vec3) -> bool {
        let d = sub(x, self.center);
        match self.shape {
            Shape::Ball { radius } => d[0] * d[0] + d[1] * d[1] + d[2] * d[2] < radius * radius,
            Shape::Box { sides } => (0..3).all(|a| d[a].abs() < sides[a] / 2.0),
            Shape::Ellipsoid { semi_axes } => {
                (0..3).map(|a| (d[a] / semi_axes[a]).powi(2)).sum::<f64>() < 1.0
            }
        }
    }
}

/// Membership predicate for `Ω_ε = { y0 + ε (x − y0) : x ∈ Ω }`.
#[derive(Debug, Clone, Copy)]
pub struct ScaledDomain {
    pub spec: DomainSpec,
    pub eps: f64,
}

impl ScaledDomain {
    pub fn contains(&self, x: Vec3) -> bool {
        let c = self.spec.center;
        let y = [
            c[0] + (x[0] - c[0]) / self.eps,
            c[1] + (x[1] - c[1]) / self.eps,
            c[2] + (x[2] - c[2]) / self.eps,
        ];
        self.spec.contains(y)
    }

    pub fn outer_radius(&self) -> f64 {
        self.eps * self.spec.outer_radius()
    }
}

pub fn scale_membership(spec: &DomainSpec, eps: f64) -> Result<ScaledDomain> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::param(format!("eps must lie in (0,1), got {eps}")));
    }
    spec.validate()?;
    Ok(ScaledDomain { spec: *spec, eps })
}

/// Cell-centred voxelization of a domain on a uniform lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainGrid {
    pub h: f64,
    pub centers: Vec<Vec3>,
    pub weights: Vec<f64>,
    pub volume: f64,
    /// Integer lattice coordinates of each cell, relative to `origin`.
    pub lattice: Vec<[usize; 3]>,
    /// Position of lattice index `(0,0,0)`.
    pub origin: Vec3,
    /// Extent of the lattice bounding box in cells.
    pub dims: [usize; 3],
}

impl DomainGrid {
    /// Builds a grid from lattice cells `origin + h·index`.
    pub fn from_lattice(h: f64, origin: Vec3, lattice: Vec<[usize; 3]>) -> Result<Self> {
        if lattice.is_empty() {
            return Err(Error::DegenerateDomain("no cells".into()));
        }
        if !(h > 0.0) {
            return Err(Error::param("cell size must be positive"));
        }
        let mut dims = [0usize; 3];
        for idx in &lattice {
            for a in 0..3 {
                dims[a] = dims[a].max(idx[a] + 1);
            }
        }
        let centers = lattice
            .iter()
            .map(|idx| {
                [
                    origin[0] + h * idx[0] as f64,
                    origin[1] + h * idx[1] as f64,
                    origin[2] + h * idx[2] as f64,
                ]
            })
            .collect();
        let w = h * h * h;
        let weights = vec![w; lattice.len()];
        let volume = weights.iter().sum();
        Ok(DomainGrid {
            h,
            centers,
            weights,
            volume,
            lattice,
            origin,
            dims,
        })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Weighted inner product `Σ w_i a_i b_i`.
    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * x * y)
            .sum()
    }

    /// The grid of `Ω_ε` obtained by contracting cell centres towards
    /// `center`.
    pub fn scaled(&self, center: Vec3, eps: f64) -> DomainGrid {
        let h = self.h * eps;
        let centers = self
            .centers
            .iter()
            .map(|x| {
                [
                    center[0] + eps * (x[0] - center[0]),
                    center[1] + eps * (x[1] - center[1]),
                    center[2] + eps * (x[2] - center[2]),
                ]
            })
            .collect();
        let weights: Vec<f64> = self.weights.iter().map(|w| w * eps * eps * eps).collect();
        let volume = weights.iter().sum();
        DomainGrid {
            h,
            centers,
            weights,
            volume,
            lattice: self.lattice.clone(),
            origin: [
                center[0] + eps * (self.origin[0] - center[0]),
                center[1] + eps * (self.origin[1] - center[1]),
                center[2] + eps * (self.origin[2] - center[2]),
            ],
            dims: self.dims,
        }
    }

    /// Largest distance from `point` to any cell centre.
    pub fn max_distance_from(&self, point: Vec3) -> f64 {
        self.centers.iter().map(|c| norm(sub(*c, point))).fold(0.0, f64::max)
    }
}

/// Voxelizes `spec` with `resolution` cells across its largest extent.
pub fn voxelize(spec: &DomainSpec, resolution: usize) -> Result<DomainGrid> {
    spec.validate()?;
    if resolution < 8 {
        return Err(Error::param(format!("resolution must be >= 8, got {resolution}")));
    }
    let h = spec.diameter() / resolution as f64;
    let half = spec.half_extents();
    let mut counts = [0usize; 3];
    let mut origin = [0.0; 3];
    for a in 0..3 {
        // Whole cells covering the extent, centred on y0.
        let n = ((2.0 * half[a] / h) - 1e-9).ceil().max(1.0) as usize;
        counts[a] = n;
        origin[a] = spec.center[a] - 0.5 * (n as f64 - 1.0) * h;
    }
    let mut lattice = Vec::new();
    for i in 0..counts[0] {
        for j in 0..counts[1] {
            for k in 0..counts[2] {
                let x = [
                    origin[0] + h * i as f64,
                    origin[1] + h * j as f64,
                    origin[2] + h * k as f64,
                ];
                if spec.contains(x) {
                    lattice.push([i, j, k]);
                }
            }
        }
    }
    if lattice.is_empty() {
        return Err(Error::DegenerateDomain(format!(
            "resolution {resolution} produced no cells inside {spec:?}"
        )));
    }
    DomainGrid::from_lattice(h, origin, lattice)
}
