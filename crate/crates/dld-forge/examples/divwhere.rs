use dld_forge::flow::*;
use dld_forge::geometry::{unit_cell, DldParams, Vec2};
use dld_forge::walls::signed_distance;
fn main() {
    let params = DldParams::new(0.5, 5, 1.0).unwrap();
    let res = 64usize;
    let field = solve_flow(&params, &SolverConfig::with_res(res)).unwrap();
    let geom = unit_cell(&params).unwrap();
    let h = 1.0 / res as f64;
    let n = params.n as f64;
    let umax = max_speed(&field);
    let mut hist: Vec<(f64, usize, usize, f64)> = Vec::new();
    for iy in 0..res {
        for ix in 0..res {
            let xp = (ix + 1) % res; let xm = (ix + res - 1) % res;
            let yp = (iy + 1) % res; let ym = (iy + res - 1) % res;
            let fluid = |ix: usize, iy: usize| {
                let phys = Vec2::new(ix as f64 * h, iy as f64 * h + ix as f64 * h / n);
                signed_distance(&geom, phys) > 1.5 * h
            };
            if !(fluid(ix, iy) && fluid(xp, iy) && fluid(xm, iy) && fluid(ix, yp) && fluid(ix, ym)) { continue; }
            let du_dxm = (field.u[(iy, xp)] - field.u[(iy, xm)]) / (2.0 * h);
            let du_dym = (field.u[(yp, ix)] - field.u[(ym, ix)]) / (2.0 * h);
            let dv_dym = (field.v[(yp, ix)] - field.v[(ym, ix)]) / (2.0 * h);
            let div = (du_dxm - du_dym / n) + dv_dym;
            let d = signed_distance(&geom, Vec2::new(ix as f64 * h, iy as f64 * h + ix as f64 * h / n));
            hist.push((div.abs(), ix, iy, d));
        }
    }
    hist.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    println!("umax={umax:.4e} bound={:.4e}", 1e-3*umax*res as f64);
    for (div, ix, iy, d) in hist.iter().take(15) {
        println!("div={div:.3e} at ix={ix} iy={iy} dist={d:.3}");
    }
}
