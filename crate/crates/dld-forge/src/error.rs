//! Error types shared across the toolkit.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A design parameter fell outside the supported range.
    #[error("parameter `{name}` = {value} outside [{min}, {max}]")]
    Range {
        name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    /// A mathematical precondition was violated (non-positive scale, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// The flow solver ran out of iterations before reaching steady state.
    #[error("solver did not converge within {iters} iterations (residual {residual:.3e})")]
    Convergence { iters: usize, residual: f64 },

    /// The pillar gap spans too few grid cells for the requested resolution.
    #[error("gap spans {cells:.1} cells at res {res}; at least {min_cells} required")]
    Resolution {
        cells: f64,
        res: usize,
        min_cells: usize,
    },

    /// Interpolated wall gradient too small to define a contact normal.
    #[error("degenerate wall normal at ({x:.4}, {y:.4}): gradient magnitude {magnitude:.3e}")]
    DegenerateNormal { x: f64, y: f64, magnitude: f64 },

    /// A traced particle exceeded the step cap without crossing the domain.
    #[error("particle stalled after {steps} steps (diameter {diameter:.4})")]
    Stall { steps: usize, diameter: f64 },

    /// A particle could not be seeded with the required clearance.
    #[error("placement error: {0}")]
    Placement(String),

    /// A trajectory was too short for the requested analysis.
    #[error("trajectory spans {got:.2} columns, {need:.2} required")]
    Span { got: f64, need: f64 },

    /// An operation contract was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Network training diverged.
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Training { epoch: usize, loss: f64 },

    /// A surrogate was queried outside its training hull.
    #[error("extrapolation: `{name}` = {value} outside trained hull [{min}, {max}]")]
    Extrapolation {
        name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    /// Network layer shapes are incompatible.
    #[error("shape error: {0}")]
    Shape(String),

    /// The optimizer found no candidate meeting the feasibility window.
    #[error("no feasible design: best attained critical diameter {best_dc:.4} um for window ({d1}, {d2}) um")]
    Infeasible { best_dc: f64, d1: f64, d2: f64 },

    /// Invalid argument to a batch operation.
    #[error("argument error: {0}")]
    Argument(String),

    /// Malformed or mismatched file content.
    #[error("format error in {path}: {reason}")]
    Format { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn range(name: &'static str, value: f64, min: f64, max: f64) -> Self {
        Error::Range {
            name,
            value,
            min,
            max,
        }
    }
}
