//! Wall distance function and contact frames for particle-pillar handling.
//!
//! Distances are computed analytically from the circle geometry: for a point
//! `p` the signed distance is `min over pillar images of (|p - c| - r)`,
//! negative inside a pillar. The gridded field exists to serve interpolation
//! during tracing; it stores, at each node of the shear-mapped unit square,
//! the distance and outward unit normal of the corresponding physical point.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::geometry::{map_from_unit, map_to_unit, wrap_unit, CellGeometry, Vec2};

/// Gridded wall distance plus outward normals for one unit cell.
///
/// Grids are indexed `[(iy, ix)]` with node `(ix, iy)` at mapped position
/// `(ix/res, iy/res)`; vector components are physical Cartesian.
#[derive(Debug, Clone)]
pub struct WallField {
    pub dist: Array2<f64>,
    pub normal_x: Array2<f64>,
    pub normal_y: Array2<f64>,
    pub geometry: CellGeometry,
    pub res: usize,
}

/// Signed distance from a physical point to the nearest pillar surface.
///
/// The point is first reduced into the unit cell, so the result is exactly
/// periodic under lattice translations.
pub fn signed_distance(geom: &CellGeometry, p_phys: Vec2) -> f64 {
    let reduced = reduce_to_cell(geom, p_phys);
    let mut best = f64::INFINITY;
    for &c in &geom.pillar_centers {
        let d = (reduced - c).norm() - geom.pillar_radius_unit;
        if d < best {
            best = d;
        }
    }
    best
}

/// Outward unit normal of the nearest pillar image (radial direction).
/// Returns a zero vector only at a pillar center.
pub fn analytic_normal(geom: &CellGeometry, p_phys: Vec2) -> Vec2 {
    let reduced = reduce_to_cell(geom, p_phys);
    let mut best = f64::INFINITY;
    let mut normal = Vec2::new(0.0, 0.0);
    for &c in &geom.pillar_centers {
        let r = reduced - c;
        let len = r.norm();
        let d = len - geom.pillar_radius_unit;
        if d < best {
            best = d;
            normal = if len > 1e-14 { r * (1.0 / len) } else { Vec2::new(0.0, 0.0) };
        }
    }
    normal
}

/// Reduce a physical point into the fundamental cell using the mapped wrap.
fn reduce_to_cell(geom: &CellGeometry, p_phys: Vec2) -> Vec2 {
    let mapped = map_to_unit(p_phys, geom.n, 1.0).expect("valid cell");
    map_from_unit(wrap_unit(mapped), geom.n, 1.0).expect("valid cell")
}

/// Precompute the wall distance and normal grids for one geometry.
pub fn wall_distance_field(geom: &CellGeometry, res: usize) -> Result<WallField> {
    if res < 32 {
        return Err(Error::Domain(format!("wall grid res {res} < 32")));
    }
    let mut dist = Array2::zeros((res, res));
    let mut normal_x = Array2::zeros((res, res));
    let mut normal_y = Array2::zeros((res, res));
    let h = 1.0 / res as f64;
    for iy in 0..res {
        for ix in 0..res {
            let mapped = Vec2::new(ix as f64 * h, iy as f64 * h);
            let phys = map_from_unit(mapped, geom.n, 1.0)?;
            dist[(iy, ix)] = signed_distance(geom, phys);
            let n = analytic_normal(geom, phys);
            normal_x[(iy, ix)] = n.x;
            normal_y[(iy, ix)] = n.y;
        }
    }
    Ok(WallField {
        dist,
        normal_x,
        normal_y,
        geometry: geom.clone(),
        res,
    })
}

/// Bilinear sample of one grid at a mapped point, periodic wrap.
fn bilinear(grid: &Array2<f64>, res: usize, p_mapped: Vec2) -> f64 {
    let w = wrap_unit(p_mapped);
    let u = w.x * res as f64;
    let v = w.y * res as f64;
    let ix = u.floor() as usize % res;
    let iy = v.floor() as usize % res;
    let fx = u - u.floor();
    let fy = v - v.floor();
    let ix1 = (ix + 1) % res;
    let iy1 = (iy + 1) % res;
    let g00 = grid[(iy, ix)];
    let g10 = grid[(iy, ix1)];
    let g01 = grid[(iy1, ix)];
    let g11 = grid[(iy1, ix1)];
    g00 * (1.0 - fx) * (1.0 - fy) + g10 * fx * (1.0 - fy) + g01 * (1.0 - fx) * fy + g11 * fx * fy
}

impl WallField {
    /// Interpolated signed distance at a mapped point.
    pub fn distance_at(&self, p_mapped: Vec2) -> f64 {
        bilinear(&self.dist, self.res, p_mapped)
    }

    /// Interpolated signed distance at a physical point.
    pub fn distance_at_phys(&self, p_phys: Vec2) -> f64 {
        let mapped = map_to_unit(p_phys, self.geometry.n, 1.0).expect("valid cell");
        self.distance_at(mapped)
    }

    /// Interpolated contact frame at a physical point.
    pub fn normal_tangent_at_phys(&self, p_phys: Vec2) -> Result<(Vec2, Vec2)> {
        let mapped = map_to_unit(p_phys, self.geometry.n, 1.0)?;
        wall_normal_tangent(self, mapped)
    }
}

/// Interpolate the outward normal at a mapped point and derive the tangent.
///
/// The tangent is the normal rotated +90 degrees, so `n . t = 0` exactly.
pub fn wall_normal_tangent(wf: &WallField, p_mapped: Vec2) -> Result<(Vec2, Vec2)> {
    let nx = bilinear(&wf.normal_x, wf.res, p_mapped);
    let ny = bilinear(&wf.normal_y, wf.res, p_mapped);
    let raw = Vec2::new(nx, ny);
    let mag = raw.norm();
    if mag < 1e-6 {
        let w = wrap_unit(p_mapped);
        return Err(Error::DegenerateNormal {
            x: w.x,
            y: w.y,
            magnitude: mag,
        });
    }
    let n = raw * (1.0 / mag);
    Ok((n, n.perp()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{unit_cell, DldParams, PILLAR_CENTER};
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn cell(f: f64, n: u32) -> CellGeometry {
        unit_cell(&DldParams::new(f, n, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn distance_at_pillar_center_is_minus_radius() {
        let g = cell(0.5, 5);
        assert_relative_eq!(signed_distance(&g, PILLAR_CENTER), -0.25, epsilon = 1e-12);
    }

    #[test]
    fn distance_along_radial_ray() {
        let g = cell(0.5, 5);
        let p = PILLAR_CENTER + Vec2::new(0.4, 0.0);
        assert_relative_eq!(signed_distance(&g, p), 0.15, epsilon = 1e-12);
        let n = analytic_normal(&g, p);
        assert_relative_eq!(n.x, 1.0, epsilon = 1e-12);
        assert_relative_eq!(n.y, 0.0, epsilon = 1e-12);
    }

    // Dense boundary-sampling oracle: distance to 3600 points per circle.
    fn brute_force_distance(geom: &CellGeometry, p: Vec2) -> f64 {
        let mut best = f64::INFINITY;
        for &c in &geom.pillar_centers {
            for k in 0..3600 {
                let a = 2.0 * std::f64::consts::PI * k as f64 / 3600.0;
                let b = c + Vec2::new(a.cos(), a.sin()) * geom.pillar_radius_unit;
                best = best.min((p - b).norm());
            }
        }
        best
    }

    #[test]
    fn analytic_matches_boundary_sampling_oracle() {
        let g = cell(0.6, 4);
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..1000 {
            let p = Vec2::new(rng.gen::<f64>(), rng.gen::<f64>());
            let analytic = signed_distance(&g, p).abs();
            let brute = brute_force_distance(&g, p);
            assert!(
                (analytic - brute).abs() < 1e-3,
                "analytic {analytic} vs brute {brute} at ({}, {})",
                p.x,
                p.y
            );
        }
    }

    #[test]
    fn interpolated_normal_close_to_analytic_near_surface() {
        let g = cell(0.5, 5);
        let wf = wall_distance_field(&g, 128).unwrap();
        let mut rng = StdRng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 200 {
            let a = rng.gen::<f64>() * 2.0 * std::f64::consts::PI;
            let rr = g.pillar_radius_unit + 0.02 + 0.05 * rng.gen::<f64>();
            let p = PILLAR_CENTER + Vec2::new(a.cos(), a.sin()) * rr;
            let (n, t) = wf.normal_tangent_at_phys(p).unwrap();
            let exact = analytic_normal(&g, p);
            let angle = n.dot(exact).clamp(-1.0, 1.0).acos().to_degrees();
            assert!(angle < 1.0, "normal off by {angle} deg");
            assert!(n.dot(t).abs() < 1e-15);
            checked += 1;
        }
    }

    #[test]
    fn cardinal_directions_give_axis_frames() {
        // Interpolated normals carry O(h) directional error away from exact
        // node rows; a couple of percent at res 128.
        let g = cell(0.5, 5);
        let wf = wall_distance_field(&g, 128).unwrap();
        let right = PILLAR_CENTER + Vec2::new(0.35, 0.0);
        let (n, t) = wf.normal_tangent_at_phys(right).unwrap();
        assert!((n.x - 1.0).abs() < 0.02 && n.y.abs() < 0.02);
        assert!(t.x.abs() < 0.02 && (t.y - 1.0).abs() < 0.02);
        let above = PILLAR_CENTER + Vec2::new(0.0, 0.35);
        let (n, t) = wf.normal_tangent_at_phys(above).unwrap();
        assert!(n.x.abs() < 0.02 && (n.y - 1.0).abs() < 0.02);
        assert!((t.x + 1.0).abs() < 0.02 && t.y.abs() < 0.02);
    }

    #[test]
    fn degenerate_normal_at_pillar_center() {
        // With N = 4 and res 128 the pillar center maps onto an exact grid
        // node, where the stored normal is the zero vector.
        let g = cell(0.5, 4);
        let wf = wall_distance_field(&g, 128).unwrap();
        let mapped = map_to_unit(PILLAR_CENTER, 4, 1.0).unwrap();
        assert!(matches!(
            wall_normal_tangent(&wf, mapped),
            Err(Error::DegenerateNormal { .. })
        ));
    }

    #[test]
    fn distance_is_lattice_periodic() {
        let g = cell(0.45, 7);
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..200 {
            let p = Vec2::new(rng.gen::<f64>(), rng.gen::<f64>());
            let d0 = signed_distance(&g, p);
            let d1 = signed_distance(&g, p + g.a1);
            let d2 = signed_distance(&g, p + g.a2);
            assert!((d0 - d1).abs() < 1e-12);
            assert!((d0 - d2).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_symmetric_through_pillar_center() {
        let g = cell(0.5, 5);
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..200 {
            let dp = Vec2::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5) * 0.4;
            let d_plus = signed_distance(&g, PILLAR_CENTER + dp);
            let d_minus = signed_distance(&g, PILLAR_CENTER - dp);
            assert!((d_plus - d_minus).abs() < 1e-12);
        }
    }

    // Gap between the two nearest pillar surfaces; small values flag the
    // medial axis where the distance field kinks.
    fn medial_margin(geom: &CellGeometry, p: Vec2) -> f64 {
        let reduced = reduce_to_cell(geom, p);
        let mut dists: Vec<f64> = geom
            .pillar_centers
            .iter()
            .map(|&c| (reduced - c).norm() - geom.pillar_radius_unit)
            .collect();
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        dists[1] - dists[0]
    }

    #[test]
    fn grid_eikonal_property() {
        // |grad dist| = 1 within 5% away from pillar interiors and the
        // medial axis; the gradient is taken on the mapped grid and pushed
        // to physical axes with the shear chain rule.
        let g = cell(0.5, 5);
        let res = 128;
        let wf = wall_distance_field(&g, res).unwrap();
        let h = 1.0 / res as f64;
        let n = g.n as f64;
        let mut checked = 0usize;
        for iy in 0..res {
            for ix in 0..res {
                let d = wf.dist[(iy, ix)];
                if d < 2.0 * h {
                    continue; // interior or surface band
                }
                let p = map_from_unit(Vec2::new(ix as f64 * h, iy as f64 * h), g.n, 1.0).unwrap();
                if medial_margin(&g, p) < 6.0 * h {
                    continue; // stencil straddles the medial kink
                }
                let dxp = wf.dist[(iy, (ix + 1) % res)];
                let dxm = wf.dist[(iy, (ix + res - 1) % res)];
                let dyp = wf.dist[((iy + 1) % res, ix)];
                let dym = wf.dist[((iy + res - 1) % res, ix)];
                let gx_m = (dxp - dxm) / (2.0 * h);
                let gy_m = (dyp - dym) / (2.0 * h);
                // d/dx_phys = d/dx' - (1/N) d/dy'; d/dy_phys = d/dy'.
                let grad = Vec2::new(gx_m - gy_m / n, gy_m).norm();
                assert!(
                    (grad - 1.0).abs() <= 0.05,
                    "eikonal violated at node ({ix},{iy}): |grad| = {grad}"
                );
                checked += 1;
            }
        }
        assert!(checked > 1000, "too few nodes checked: {checked}");
    }
}
