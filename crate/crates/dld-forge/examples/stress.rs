use dld_forge::flow::*;
use dld_forge::geometry::DldParams;
use std::time::Instant;
fn main() {
    // Extremes of the hull at desk resolutions.
    for (f, n, re, res) in [
        (0.75, 3u32, 10.0, 32usize),
        (0.75, 10, 10.0, 32),
        (0.25, 3, 10.0, 32),
        (0.25, 10, 0.01, 32),
        (0.75, 4, 25.0, 64),
        (0.5, 5, 25.0, 48),
    ] {
        let t = Instant::now();
        let params = DldParams::new(f, n, re).unwrap();
        match solve_flow(&params, &SolverConfig::with_res(res)) {
            Ok(field) => {
                let m = measure_reynolds(&field, &params);
                let div = max_divergence(&field);
                let bound = 1e-3 * max_speed(&field) * res as f64;
                println!(
                    "f={f} N={n} Re={re} res={res}: achieved={m:.4} div_ok={} umax={:.3e} [{:?}]",
                    div < bound, max_speed(&field), t.elapsed()
                );
            }
            Err(e) => println!("f={f} N={n} Re={re} res={res}: ERROR {e} [{:?}]", t.elapsed()),
        }
    }
}
