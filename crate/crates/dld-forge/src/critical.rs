//! Critical diameter extraction by bracketing and bisection over the
//! particle diameter.
//!
//! The probe diameters start at 0.1 g and 0.95 g. When the small probe
//! zigzags (-1) and the large probe bumps (+1), the interval is halved until
//! it is narrower than the tolerance and the last midpoint is the critical
//! diameter. Any other probe outcome means the configuration does not
//! separate and the result is absent.

use crate::error::Result;

/// Outcome of a bracketing run.
#[derive(Debug, Clone)]
pub struct CriticalResult {
    /// Critical diameter in unit-cell lengths, absent when no transition
    /// exists inside the probe interval.
    pub d_c: Option<f64>,
    /// Number of particle traces performed.
    pub evaluations: usize,
    /// Bracket (d1, d2) after each bisection step.
    pub bracket_history: Vec<(f64, f64)>,
}

/// Bracket and bisect `mode_fn` (+1 bumped, -1 zigzag) over the diameter.
pub fn critical_diameter<F>(mut mode_fn: F, f: f64, tol: f64) -> Result<CriticalResult>
where
    F: FnMut(f64) -> Result<i32>,
{
    assert!(tol > 0.0, "tolerance must be positive");
    let g = 1.0 - f;
    let mut d1 = 0.1 * g;
    let mut d2 = 0.95 * g;
    let mut evaluations = 0usize;
    let mut bracket_history = vec![(d1, d2)];

    let low = mode_fn(d1)?;
    evaluations += 1;
    let high = mode_fn(d2)?;
    evaluations += 1;

    if !(low == -1 && high == 1) {
        // No separation inside the probe interval.
        return Ok(CriticalResult {
            d_c: None,
            evaluations,
            bracket_history,
        });
    }

    let mut d_c = 0.5 * (d1 + d2);
    while d2 - d1 >= tol {
        let d = 0.5 * (d1 + d2);
        let value = mode_fn(d)?;
        evaluations += 1;
        if value == 1 {
            d2 = d;
        } else {
            d1 = d;
        }
        d_c = d;
        bracket_history.push((d1, d2));
    }

    Ok(CriticalResult {
        d_c: Some(d_c),
        evaluations,
        bracket_history,
    })
}

/// Default bisection tolerance in unit-cell lengths.
pub const DEFAULT_TOL: f64 = 1e-3;

/// Critical diameter of a flow field: each probe releases a particle at the
/// deterministic inlet position and classifies its transport mode.
pub fn critical_diameter_of_field(
    field: &crate::flow::FlowField,
    wf: &crate::walls::WallField,
    tol: f64,
    n_periods: usize,
) -> Result<CriticalResult> {
    use crate::tracer::{release_start, trace, Mode};
    critical_diameter(
        |d| {
            let start = release_start(wf, d)?;
            let traj = trace(field, wf, start, d, n_periods)?;
            Ok(if traj.mode == Mode::Bumped { 1 } else { -1 })
        },
        field.params.f,
        tol,
    )
}
