use dld_forge::critical::critical_diameter;
use dld_forge::flow::{solve_flow, SolverConfig};
use dld_forge::geometry::{unit_cell, DldParams};
use dld_forge::tracer::{release_start, trace, Mode};
use dld_forge::walls::wall_distance_field;
use std::time::Instant;

fn dc_for(f: f64, n: u32, re: f64, res: usize) -> (Option<f64>, usize, std::time::Duration) {
    let t = Instant::now();
    let params = DldParams::new(f, n, re).unwrap();
    let field = solve_flow(&params, &SolverConfig::with_res(res)).unwrap();
    let geom = unit_cell(&params).unwrap();
    let wf = wall_distance_field(&geom, res).unwrap();
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
    (result.d_c, result.evaluations, t.elapsed())
}

fn main() {
    println!("--- Davis cross-check at Stokes (d_c vs 1.4 g N^-0.48, nondim) ---");
    for (f, n) in [(0.4, 5u32), (0.5, 5), (0.5, 8), (0.6, 4)] {
        let (dc, evals, el) = dc_for(f, n, 0.05, 64);
        let g = 1.0 - f;
        let davis = 1.4 * g * (n as f64).powf(-0.48);
        match dc {
            Some(d) => println!(
                "f={f} N={n}: d_c={d:.4} davis={davis:.4} err={:+.1}% ({evals} evals, {el:.1?})",
                100.0 * (d - davis) / davis
            ),
            None => println!("f={f} N={n}: NO dc found (davis={davis:.4}) ({el:.1?})"),
        }
    }
    println!("--- f trend at N=5, Re=1 (should increase) ---");
    for f in [0.3, 0.4, 0.5, 0.6] {
        let (dc, _, el) = dc_for(f, 5, 1.0, 64);
        println!("f={f}: d_c={dc:?} ({el:.1?})");
    }
    println!("--- N trend at f=0.5, Re=1 (should decrease) ---");
    for n in [4u32, 6, 8, 10] {
        let (dc, _, el) = dc_for(0.5, n, 1.0, 64);
        println!("N={n}: d_c={dc:?} ({el:.1?})");
    }
    println!("--- no separation at f=0.3, N=3, low Re ---");
    let (dc, _, el) = dc_for(0.3, 3, 0.1, 64);
    println!("f=0.3 N=3 Re=0.1: d_c={dc:?} ({el:.1?})");
}
