use dld_forge::critical::critical_diameter;
use dld_forge::flow::{solve_flow, SolverConfig};
use dld_forge::geometry::{unit_cell, map_to_unit, DldParams, Vec2};
use dld_forge::tracer::{release_start, trace, Mode};
use dld_forge::walls::{signed_distance, wall_distance_field};

// Streamline-theory critical radius from the solved field: height above the
// pillar-top surface (at the gap section x=0.5) below which the flux equals
// total/N.
fn flux_critical_radius(fld: &dld_forge::flow::FlowField, params: &DldParams) -> f64 {
    let geom = unit_cell(params).unwrap();
    let res = fld.res;
    let n = params.n as f64;
    let h = 1.0 / res as f64;
    // Work in physical space along vertical line x=0.5 from pillar top surface
    // y0 = 0.5 + r up to y1 = 1.5 - r (bottom of image above).
    let r_p = geom.pillar_radius_unit;
    let y0 = 0.5 + r_p;
    let y1 = 1.5 - r_p;
    let m = 4000;
    let mut cum = vec![0.0f64; m + 1];
    for i in 0..m {
        let y = y0 + (y1 - y0) * (i as f64 + 0.5) / m as f64;
        let p = Vec2::new(0.5, y);
        let mapped = map_to_unit(p, params.n, 1.0).unwrap();
        let vel = dld_forge::flow::interpolate_velocity(fld, mapped);
        let du = if signed_distance(&geom, p) > 0.0 { vel.x } else { 0.0 };
        cum[i + 1] = cum[i] + du * (y1 - y0) / m as f64;
    }
    let total = cum[m];
    let target = total / n;
    let mut idx = 0;
    while idx < m && cum[idx + 1] < target {
        idx += 1;
    }
    let frac = (target - cum[idx]) / (cum[idx + 1] - cum[idx]);
    (idx as f64 + frac) / m as f64 * (y1 - y0) + 0.0 * h
}

fn main() {
    for (f, n) in [(0.4, 5u32), (0.5, 5), (0.5, 8), (0.6, 4), (0.3, 3)] {
        let params = DldParams::new(f, n, 0.05).unwrap();
        let field = solve_flow(&params, &SolverConfig::with_res(64)).unwrap();
        let geom = unit_cell(&params).unwrap();
        let wf = wall_distance_field(&geom, 64).unwrap();
        let rstar = flux_critical_radius(&field, &params);
        let result = critical_diameter(
            |d| {
                let start = release_start(&wf, d)?;
                let traj = trace(&field, &wf, start, d, 2)?;
                Ok(if traj.mode == Mode::Bumped { 1 } else { -1 })
            },
            f,
            1e-3,
        )
        .unwrap();
        let g = 1.0 - f;
        let davis = 1.4 * g * (n as f64).powf(-0.48);
        println!(
            "f={f} N={n}: tracer d_c={:?} flux 2r*={:.4} davis={:.4}",
            result.d_c, 2.0 * rstar, davis
        );
    }
}
