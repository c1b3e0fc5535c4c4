//! Model manifolds reduced to one-dimensional weighted domains.
//!
//! Two models are supported:
//!
//! * the round sphere `S^d`, restricted to functions of the polar angle
//!   `t ∈ [0, π]` measured from a fixed pole, with volume density
//!   `Vol(S^{d-1}) sin^{d-1}(t)`;
//! * the product `S^1(1/√(d-2)) × S^{d-1}`, restricted to functions of the
//!   circle coordinate `s ∈ [0, 2π/√(d-2))`, with constant density
//!   `Vol(S^{d-1})`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Smallest supported manifold dimension.
pub const MIN_DIM: usize = 3;
/// Largest supported manifold dimension; `sin^{d-1}` weights get stiff past this.
pub const MAX_DIM: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Radial functions on the round sphere.
    SphereRadial,
    /// Circle-dependent functions on `S^1(1/√(d-2)) × S^{d-1}`.
    ProductCircle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Interval whose volume weight vanishes at both ends.
    DegenerateEnds,
    Periodic,
}

/// A cohomogeneity-one model manifold.
///
/// Immutable once built; the weight is reconstructed from `kind` and `dim`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifoldModel {
    pub kind: ModelKind,
    pub dim: usize,
    pub length: f64,
    pub boundary: Boundary,
    pub total_volume: f64,
    pub scalar_curvature: f64,
}

fn check_dim(d: usize) -> Result<()> {
    if !(MIN_DIM..=MAX_DIM).contains(&d) {
        return Err(LabError::Dimension {
            d,
            min: MIN_DIM,
            max: MAX_DIM,
        });
    }
    Ok(())
}

/// `∫_0^π sin^m(t) dt`, by the Wallis recursion.
pub fn sine_power_integral(m: usize) -> f64 {
    let mut even = PI;
    let mut odd = 2.0;
    if m == 0 {
        return even;
    }
    if m == 1 {
        return odd;
    }
    let mut k = 2;
    while k <= m {
        if k % 2 == 0 {
            even *= (k as f64 - 1.0) / k as f64;
        } else {
            odd *= (k as f64 - 1.0) / k as f64;
        }
        k += 1;
    }
    if m % 2 == 0 {
        even
    } else {
        odd
    }
}

/// Surface measure of the unit `d`-sphere in `R^{d+1}`.
///
/// Uses `Vol(S^d) = Vol(S^{d-1}) ∫_0^π sin^{d-1}`, starting from `Vol(S^0) = 2`.
pub fn unit_sphere_volume(d: usize) -> f64 {
    let mut vol = 2.0;
    for k in 1..=d {
        vol *= sine_power_integral(k - 1);
    }
    vol
}

/// Sobolev conjugate exponent `2d/(d-2)`.
pub fn critical_exponent(d: usize) -> f64 {
    2.0 * d as f64 / (d as f64 - 2.0)
}

impl ManifoldModel {
    /// Radial reduction of the round sphere `S^d`, pole at `t = 0`.
    pub fn sphere(d: usize) -> Result<Self> {
        check_dim(d)?;
        Ok(Self {
            kind: ModelKind::SphereRadial,
            dim: d,
            length: PI,
            boundary: Boundary::DegenerateEnds,
            total_volume: unit_sphere_volume(d),
            scalar_curvature: (d * (d - 1)) as f64,
        })
    }

    /// Circle reduction of `S^1(1/√(d-2)) × S^{d-1}` with the product metric.
    pub fn product(d: usize) -> Result<Self> {
        check_dim(d)?;
        let length = 2.0 * PI / (d as f64 - 2.0).sqrt();
        Ok(Self {
            kind: ModelKind::ProductCircle,
            dim: d,
            length,
            boundary: Boundary::Periodic,
            total_volume: length * unit_sphere_volume(d - 1),
            scalar_curvature: ((d - 2) * (d - 1)) as f64,
        })
    }

    pub fn new(kind: ModelKind, d: usize) -> Result<Self> {
        match kind {
            ModelKind::SphereRadial => Self::sphere(d),
            ModelKind::ProductCircle => Self::product(d),
        }
    }

    /// Reduced volume density `w(t)`.
    pub fn weight(&self, t: f64) -> f64 {
        let cross = unit_sphere_volume(self.dim - 1);
        match self.kind {
            ModelKind::SphereRadial => cross * t.sin().powi(self.dim as i32 - 1),
            ModelKind::ProductCircle => cross,
        }
    }

    /// `2* = 2d/(d-2)`.
    pub fn critical_exponent(&self) -> f64 {
        critical_exponent(self.dim)
    }

    /// First nonzero eigenvalue of the Laplacian restricted to the reduced class.
    pub fn first_reduced_eigenvalue(&self) -> f64 {
        match self.kind {
            ModelKind::SphereRadial => self.dim as f64,
            ModelKind::ProductCircle => self.dim as f64 - 2.0,
        }
    }
}

#[derive(Deserialize)]
struct ModelRecord {
    kind: ModelKind,
    dim: usize,
    #[serde(default)]
    length: Option<f64>,
    #[serde(default)]
    boundary: Option<Boundary>,
    #[serde(default)]
    total_volume: Option<f64>,
    #[serde(default)]
    scalar_curvature: Option<f64>,
}

impl<'de> Deserialize<'de> for ManifoldModel {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let rec = ModelRecord::deserialize(de)?;
        let model = ManifoldModel::new(rec.kind, rec.dim).map_err(D::Error::custom)?;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
        let consistent = rec.length.is_none_or(|v| close(v, model.length))
            && rec.boundary.is_none_or(|b| b == model.boundary)
            && rec.total_volume.is_none_or(|v| close(v, model.total_volume))
            && rec.scalar_curvature.is_none_or(|v| close(v, model.scalar_curvature));
        if !consistent {
            return Err(D::Error::custom(
                "serialized model fields disagree with kind and dim",
            ));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn low_dimensional_sphere_volumes() {
        assert_relative_eq!(unit_sphere_volume(1), 2.0 * PI, max_relative = 1e-15);
        assert_relative_eq!(unit_sphere_volume(2), 4.0 * PI, max_relative = 1e-15);
        assert_relative_eq!(unit_sphere_volume(3), 2.0 * PI * PI, max_relative = 1e-15);
    }

    #[test]
    fn volumes_match_gamma_closed_form() {
        use statrs::function::gamma::gamma;
        for d in 2..=10 {
            let closed = 2.0 * PI.powf((d as f64 + 1.0) / 2.0) / gamma((d as f64 + 1.0) / 2.0);
            assert_relative_eq!(unit_sphere_volume(d), closed, max_relative = 1e-12);
        }
    }

    #[test]
    fn sphere_model() {
        let s3 = ManifoldModel::sphere(3).unwrap();
        assert_relative_eq!(s3.total_volume, 2.0 * PI * PI, max_relative = 1e-15);
        assert_eq!(ManifoldModel::sphere(4).unwrap().scalar_curvature, 12.0);
        assert!(matches!(
            ManifoldModel::sphere(2),
            Err(LabError::Dimension { d: 2, .. })
        ));
        assert!(ManifoldModel::sphere(17).is_err());
        assert_eq!(s3.weight(0.0), 0.0);
        assert!(s3.weight(PI).abs() < 1e-30);
    }

    #[test]
    fn product_model() {
        let p4 = ManifoldModel::product(4).unwrap();
        assert_eq!(p4.scalar_curvature, 6.0);
        let expected = 2.0f64.sqrt() * PI * 2.0 * PI * PI;
        assert_relative_eq!(p4.total_volume, expected, max_relative = 1e-14);
        let p3 = ManifoldModel::product(3).unwrap();
        assert_relative_eq!(p3.length, 2.0 * PI, max_relative = 1e-15);
        assert_eq!(p3.boundary, Boundary::Periodic);
        assert!(ManifoldModel::product(1).is_err());
    }

    #[test]
    fn json_round_trip_rebuilds_weight() {
        let p = ManifoldModel::product(5).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"kind\":\"product_circle\""));
        let back: ManifoldModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        let bad = json.replace("\"dim\":5", "\"dim\":6");
        assert!(serde_json::from_str::<ManifoldModel>(&bad).is_err());
    }
}
