use dld_forge::flow::*;
use dld_forge::geometry::DldParams;
use std::time::Instant;
fn main() {
    for (f, n, re, res) in [
        (0.75, 3u32, 10.0, 64usize), (0.75, 10, 10.0, 64), (0.25, 3, 10.0, 64), (0.25, 10, 10.0, 64),
        (0.75, 4, 25.0, 64), (0.5, 5, 25.0, 64), (0.75, 4, 25.0, 96),
        (0.75, 10, 10.0, 48), (0.25, 3, 10.0, 48), (0.6, 4, 10.0, 48),
    ] {
        let t = Instant::now();
        let params = DldParams::new(f, n, re).unwrap();
        match solve_flow(&params, &SolverConfig::with_res(res)) {
            Ok(field) => {
                let div = max_divergence(&field);
                let bound = 1e-3 * max_speed(&field) * res as f64;
                println!("f={f} N={n} Re={re} res={res}: ratio={:.2} achieved={:.4} [{:.1?}]",
                         div/bound, field.achieved_re, t.elapsed());
            }
            Err(e) => println!("f={f} N={n} Re={re} res={res}: ERROR {e} [{:.1?}]", t.elapsed()),
        }
    }
}
