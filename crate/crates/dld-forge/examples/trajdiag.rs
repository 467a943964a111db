use dld_forge::flow::{solve_flow, SolverConfig};
use dld_forge::geometry::{unit_cell, DldParams};
use dld_forge::tracer::{period_crossings, release_start, trace, Mode};
use dld_forge::walls::wall_distance_field;

fn main() {
    let params = DldParams::new(0.5, 5, 0.05).unwrap();
    let field = solve_flow(&params, &SolverConfig::with_res(64)).unwrap();
    let geom = unit_cell(&params).unwrap();
    let wf = wall_distance_field(&geom, 64).unwrap();
    // Between tracer d_c (0.2218) and flux 2r* (0.2754): theory says zigzag.
    for d in [0.20, 0.24, 0.26, 0.30] {
        let start = release_start(&wf, d).unwrap();
        let traj = trace(&field, &wf, start, d, 4).unwrap();
        let crossings = period_crossings(&traj);
        let drifts: Vec<String> = crossings
            .windows(2)
            .map(|w| format!("{:+.3}", w[1] - w[0]))
            .collect();
        // Per-column physical drift
        let mut col_drift = Vec::new();
        let first = traj.points.first().unwrap();
        let mut next_col = first.1 + 1.0;
        let mut last_y = first.2 + first.1 / 5.0;
        for &(_, x, y) in &traj.points {
            if x >= next_col {
                let yp = y + x / 5.0;
                col_drift.push(format!("{:+.2}", yp - last_y));
                last_y = yp;
                next_col += 1.0;
            }
        }
        println!(
            "d={d}: mode={:?} contacts={} per-period drift=[{}] per-col=[{}]",
            traj.mode,
            traj.contacts.len(),
            drifts.join(", "),
            col_drift.join(", ")
        );
    }
}
