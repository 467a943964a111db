use dld_forge::flow::*;
use dld_forge::geometry::DldParams;
fn main() {
    for re in [0.01, 1.0, 5.0] {
        for res in [32usize, 48, 64] {
            let params = DldParams::new(0.5, 5, re).unwrap();
            let field = solve_flow(&params, &SolverConfig::with_res(res)).unwrap();
            let bound = 1e-3 * max_speed(&field) * field.res as f64;
            let div = max_divergence(&field);
            println!("re={re} res={res}: div={div:.3e} bound={bound:.3e} ratio={:.2}", div/bound);
        }
    }
}
