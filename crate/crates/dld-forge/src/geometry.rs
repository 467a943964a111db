//! DLD unit-cell geometry: parameter validation, nondimensionalization and
//! the shear mapping between physical coordinates and the unit square.
//!
//! The array is normalized by the pitch `L = 2R + G`, so the pillar diameter
//! in cell units equals the pillar fraction `f = 2R / (2R + G)` and the gap
//! fraction is `g = 1 - f`. Columns tilt upward with slope `1/N`: the lattice
//! is spanned by `a1 = (1, 1/N)` and `a2 = (0, 1)`, and the shear map sends
//! `a1` to `(1, 0)` so the cell tiles the unit square.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dataset hull for the pillar fraction.
pub const F_MIN: f64 = 0.25;
pub const F_MAX: f64 = 0.75;
/// Dataset hull for the period number.
pub const N_MIN: u32 = 3;
pub const N_MAX: u32 = 10;
/// Dataset hull for the Reynolds number.
pub const RE_MIN: f64 = 0.01;
pub const RE_MAX: f64 = 25.0;

/// Minimal 2D vector used throughout the tracer and geometry code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Rotate by +90 degrees.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl std::ops::Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// The design triple (f, N, Re) plus the optional physical scale G.
///
/// Every field, trajectory and surrogate label in the toolkit is indexed by
/// one of these. `g_um` stays `None` until the automation stage fixes the
/// physical gap in micrometers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DldParams {
    /// Pillar fraction 2R/(2R+G).
    pub f: f64,
    /// Period number: rows per lateral cycle.
    pub n: u32,
    /// Reynolds number (gap-based, see the flow module).
    pub re: f64,
    /// Physical gap in micrometers, when the scale has been fixed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_um: Option<f64>,
}

impl DldParams {
    pub fn new(f: f64, n: u32, re: f64) -> Result<Self> {
        if !(F_MIN..=F_MAX).contains(&f) || !f.is_finite() {
            return Err(Error::range("f", f, F_MIN, F_MAX));
        }
        if !(N_MIN..=N_MAX).contains(&n) {
            return Err(Error::range("N", n as f64, N_MIN as f64, N_MAX as f64));
        }
        if !(RE_MIN..=RE_MAX).contains(&re) || !re.is_finite() {
            return Err(Error::range("Re", re, RE_MIN, RE_MAX));
        }
        Ok(DldParams {
            f,
            n,
            re,
            g_um: None,
        })
    }

    pub fn with_gap(mut self, g_um: f64) -> Result<Self> {
        if g_um <= 0.0 || !g_um.is_finite() {
            return Err(Error::range("G", g_um, 0.0, f64::INFINITY));
        }
        self.g_um = Some(g_um);
        Ok(self)
    }

    /// Gap fraction g = 1 - f.
    pub fn gap_fraction(&self) -> f64 {
        1.0 - self.f
    }

    /// Pitch L = 2R + G in micrometers; needs the physical gap.
    pub fn pitch_um(&self) -> Option<f64> {
        self.g_um.map(|g| g / self.gap_fraction())
    }
}

/// The normalized unit cell: one pillar plus the periodic images needed for
/// distance queries, and the lattice vectors encoding the row shift.
#[derive(Debug, Clone)]
pub struct CellGeometry {
    /// Pillar radius f/2 in unit-square coordinates.
    pub pillar_radius_unit: f64,
    /// Central pillar plus its 8 nearest periodic images, physical coords.
    pub pillar_centers: Vec<Vec2>,
    /// a1 = (1, 1/N): column-to-column step.
    pub a1: Vec2,
    /// a2 = (0, 1): row-to-row step.
    pub a2: Vec2,
    /// Period number the cell was built from.
    pub n: u32,
}

/// Central pillar position in the normalized physical cell.
pub const PILLAR_CENTER: Vec2 = Vec2::new(0.5, 0.5);

/// Build the normalized cell for a parameter triple.
pub fn unit_cell(params: &DldParams) -> Result<CellGeometry> {
    // Re-check on entry so a hand-built struct cannot smuggle bad values in.
    let params = DldParams::new(params.f, params.n, params.re)?;
    let a1 = Vec2::new(1.0, 1.0 / params.n as f64);
    let a2 = Vec2::new(0.0, 1.0);
    let mut centers = Vec::with_capacity(9);
    for m in -1i32..=1 {
        for k in -1i32..=1 {
            centers.push(PILLAR_CENTER + a1 * m as f64 + a2 * k as f64);
        }
    }
    Ok(CellGeometry {
        pillar_radius_unit: params.f / 2.0,
        pillar_centers: centers,
        a1,
        a2,
        n: params.n,
    })
}

/// Shear-map a physical point onto unit-square coordinates:
/// `(x, y) -> (x/L, -x/(N L) + y/L)`.
pub fn map_to_unit(p: Vec2, n: u32, l: f64) -> Result<Vec2> {
    check_map_args(n, l)?;
    Ok(Vec2::new(p.x / l, -p.x / (n as f64 * l) + p.y / l))
}

/// Inverse of [`map_to_unit`]: `(x', y') -> (L x', L (y' + x'/N))`.
pub fn map_from_unit(p: Vec2, n: u32, l: f64) -> Result<Vec2> {
    check_map_args(n, l)?;
    Ok(Vec2::new(l * p.x, l * (p.y + p.x / n as f64)))
}

fn check_map_args(n: u32, l: f64) -> Result<()> {
    if l <= 0.0 || !l.is_finite() {
        return Err(Error::Domain(format!("length scale L = {l} must be > 0")));
    }
    if n < 1 {
        return Err(Error::Domain("period number N must be >= 1".into()));
    }
    Ok(())
}

/// Wrap a mapped point into [0,1)^2. In mapped coordinates both lattice
/// vectors are unit axes, so the shifted-periodic rule reduces to a plain
/// fractional wrap.
pub fn wrap_unit(p: Vec2) -> Vec2 {
    Vec2::new(p.x - p.x.floor(), p.y - p.y.floor())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn unit_cell_radius_is_half_f() {
        let p = DldParams::new(0.5, 5, 1.0).unwrap();
        let cell = unit_cell(&p).unwrap();
        assert_relative_eq!(cell.pillar_radius_unit, 0.25);
    }

    #[test]
    fn unit_cell_lattice_encodes_row_shift() {
        let p = DldParams::new(0.25, 10, 1.0).unwrap();
        let cell = unit_cell(&p).unwrap();
        assert_relative_eq!(cell.pillar_radius_unit, 0.125);
        assert_relative_eq!(cell.a1.x, 1.0);
        assert_relative_eq!(cell.a1.y, 0.1);
    }

    #[test]
    fn gap_fraction_is_complement_of_f() {
        let p = DldParams::new(0.75, 3, 1.0).unwrap();
        assert_relative_eq!(p.gap_fraction(), 0.25);
        assert_eq!(unit_cell(&p).unwrap().pillar_centers.len(), 9);
    }

    #[test]
    fn params_out_of_range_rejected() {
        assert!(DldParams::new(0.2, 5, 1.0).is_err());
        assert!(DldParams::new(0.8, 5, 1.0).is_err());
        assert!(DldParams::new(0.5, 2, 1.0).is_err());
        assert!(DldParams::new(0.5, 11, 1.0).is_err());
        assert!(DldParams::new(0.5, 5, 0.001).is_err());
        assert!(DldParams::new(0.5, 5, 30.0).is_err());
        assert!(DldParams::new(0.5, 5, 1.0).unwrap().with_gap(-1.0).is_err());
    }

    #[test]
    fn map_fixes_origin() {
        let m = map_to_unit(Vec2::new(0.0, 0.0), 7, 3.0).unwrap();
        assert_eq!(m, Vec2::new(0.0, 0.0));
        let b = map_from_unit(Vec2::new(0.0, 0.0), 7, 3.0).unwrap();
        assert_eq!(b, Vec2::new(0.0, 0.0));
    }

    #[test]
    fn map_direct_substitution() {
        let l = 2.5;
        let m = map_to_unit(Vec2::new(l, 0.0), 5, l).unwrap();
        assert_relative_eq!(m.x, 1.0);
        assert_relative_eq!(m.y, -0.2);
    }

    #[test]
    fn lattice_vector_maps_to_unit_x_axis() {
        let l = 2.5;
        let m = map_to_unit(Vec2::new(l, l / 5.0), 5, l).unwrap();
        assert_relative_eq!(m.x, 1.0);
        assert_relative_eq!(m.y, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn inverse_map_direct_substitution() {
        let b = map_from_unit(Vec2::new(1.0, -0.2), 5, 1.0).unwrap();
        assert_relative_eq!(b.x, 1.0);
        assert_relative_eq!(b.y, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn map_rejects_bad_scale() {
        assert!(map_to_unit(Vec2::new(1.0, 1.0), 5, 0.0).is_err());
        assert!(map_from_unit(Vec2::new(1.0, 1.0), 5, -2.0).is_err());
    }

    proptest! {
        // Round-trip identity over [-10L, 10L]^2 to machine precision.
        #[test]
        fn round_trip_identity(
            x in -10.0f64..10.0,
            y in -10.0f64..10.0,
            n in 1u32..12,
            l in 0.1f64..10.0,
        ) {
            let p = Vec2::new(x * l, y * l);
            let rt = map_from_unit(map_to_unit(p, n, l).unwrap(), n, l).unwrap();
            prop_assert!((rt.x - p.x).abs() < 1e-12 * l.max(1.0) * 10.0);
            prop_assert!((rt.y - p.y).abs() < 1e-12 * l.max(1.0) * 10.0);
        }

        // Affine combinations commute with the map.
        #[test]
        fn map_is_affine(
            px in -5.0f64..5.0, py in -5.0f64..5.0,
            qx in -5.0f64..5.0, qy in -5.0f64..5.0,
            alpha in 0.0f64..1.0,
            n in 1u32..12,
        ) {
            let p = Vec2::new(px, py);
            let q = Vec2::new(qx, qy);
            let beta = 1.0 - alpha;
            let mixed = map_to_unit(p * alpha + q * beta, n, 2.0).unwrap();
            let combo = map_to_unit(p, n, 2.0).unwrap() * alpha
                + map_to_unit(q, n, 2.0).unwrap() * beta;
            prop_assert!((mixed.x - combo.x).abs() < 1e-12);
            prop_assert!((mixed.y - combo.y).abs() < 1e-12);
        }
    }

    #[test]
    fn map_determinant_is_inverse_area() {
        // Columns of the combined scale+shear matrix are the images of the
        // unit axes; the shear contributes unit determinant.
        let l = 4.0;
        let ex = map_to_unit(Vec2::new(1.0, 0.0), 6, l).unwrap();
        let ey = map_to_unit(Vec2::new(0.0, 1.0), 6, l).unwrap();
        let det = ex.x * ey.y - ex.y * ey.x;
        assert_relative_eq!(det, 1.0 / (l * l), epsilon = 1e-15);
    }
}
