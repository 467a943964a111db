//! Real-coded variation operators: simulated binary crossover and
//! polynomial mutation, both clamped to the variable bounds.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// SBX over two parents. `eta` is the distribution index; larger values keep
/// children closer to the parents. Applied per variable with probability
/// one half when the pair crossover fires at all (probability `p_cross`).
pub fn sbx_crossover(
    rng: &mut ChaCha8Rng,
    parent_a: &[f64],
    parent_b: &[f64],
    bounds: &[(f64, f64)],
    eta: f64,
    p_cross: f64,
) -> (Vec<f64>, Vec<f64>) {
    let mut child_a = parent_a.to_vec();
    let mut child_b = parent_b.to_vec();
    if rng.gen::<f64>() > p_cross {
        return (child_a, child_b);
    }
    for i in 0..parent_a.len() {
        if rng.gen::<f64>() > 0.5 {
            continue;
        }
        let (p1, p2) = (parent_a[i], parent_b[i]);
        if (p1 - p2).abs() < 1e-14 {
            continue;
        }
        let u: f64 = rng.gen();
        let beta = if u <= 0.5 {
            (2.0 * u).powf(1.0 / (eta + 1.0))
        } else {
            (1.0 / (2.0 * (1.0 - u))).powf(1.0 / (eta + 1.0))
        };
        let c1 = 0.5 * ((p1 + p2) - beta * (p2 - p1).abs());
        let c2 = 0.5 * ((p1 + p2) + beta * (p2 - p1).abs());
        let (lo, hi) = bounds[i];
        child_a[i] = c1.clamp(lo, hi);
        child_b[i] = c2.clamp(lo, hi);
    }
    (child_a, child_b)
}

/// Bounded polynomial mutation with distribution index `eta`, applied per
/// variable with probability `p_mut`.
pub fn polynomial_mutation(
    rng: &mut ChaCha8Rng,
    genes: &mut [f64],
    bounds: &[(f64, f64)],
    eta: f64,
    p_mut: f64,
) {
    for i in 0..genes.len() {
        if rng.gen::<f64>() > p_mut {
            continue;
        }
        let (lo, hi) = bounds[i];
        let span = hi - lo;
        if span <= 0.0 {
            continue;
        }
        let x = genes[i];
        let d1 = (x - lo) / span;
        let d2 = (hi - x) / span;
        let u: f64 = rng.gen();
        let pow = 1.0 / (eta + 1.0);
        let delta = if u < 0.5 {
            let b = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1).powf(eta + 1.0);
            b.powf(pow) - 1.0
        } else {
            let b = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2).powf(eta + 1.0);
            1.0 - b.powf(pow)
        };
        genes[i] = (x + delta * span).clamp(lo, hi);
    }
}
