//! NSGA-III: reference-direction-niched non-dominated sorting evolutionary
//! optimizer, plus the sorting and simplex-lattice building blocks.

mod nsga3;
mod variation;

pub use nsga3::{nsga3_run, Nsga3Result};
pub use variation::{polynomial_mutation, sbx_crossover};

use crate::error::{Error, Result};

/// One candidate solution.
#[derive(Debug, Clone)]
pub struct Individual {
    pub genes: Vec<f64>,
    pub objectives: Vec<f64>,
    /// Front index after non-dominated sorting.
    pub rank: usize,
    /// Index of the associated reference direction.
    pub niche: usize,
}

/// A box-bounded multi-objective minimization problem.
pub trait MooProblem: Sync {
    fn bounds(&self) -> &[(f64, f64)];
    fn n_objectives(&self) -> usize;
    fn evaluate(&self, genes: &[f64]) -> Result<Vec<f64>>;

    fn n_vars(&self) -> usize {
        self.bounds().len()
    }
}

/// Closure-backed problem definition.
pub struct FnProblem<F> {
    pub bounds: Vec<(f64, f64)>,
    pub n_objectives: usize,
    pub f: F,
}

impl<F> MooProblem for FnProblem<F>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    fn n_objectives(&self) -> usize {
        self.n_objectives
    }

    fn evaluate(&self, genes: &[f64]) -> Result<Vec<f64>> {
        (self.f)(genes)
    }
}

/// Das-Dennis simplex lattice: all compositions of `partitions` parts over
/// `n_obj` coordinates, scaled to the unit simplex.
pub fn das_dennis(n_obj: usize, partitions: usize) -> Vec<Vec<f64>> {
    assert!(n_obj >= 1 && partitions >= 1);
    let mut out = Vec::new();
    let mut current = vec![0usize; n_obj];
    fn recurse(
        out: &mut Vec<Vec<f64>>,
        current: &mut Vec<usize>,
        level: usize,
        remaining: usize,
        partitions: usize,
    ) {
        if level == current.len() - 1 {
            current[level] = remaining;
            out.push(
                current
                    .iter()
                    .map(|&c| c as f64 / partitions as f64)
                    .collect(),
            );
            return;
        }
        for take in (0..=remaining).rev() {
            current[level] = take;
            recurse(out, current, level + 1, remaining - take, partitions);
        }
    }
    recurse(&mut out, &mut current, 0, partitions, partitions);
    out
}

/// Number of Das-Dennis points: C(partitions + n_obj - 1, n_obj - 1).
pub fn das_dennis_count(n_obj: usize, partitions: usize) -> usize {
    let mut c = 1usize;
    for i in 0..n_obj - 1 {
        c = c * (partitions + i + 1) / (i + 1);
    }
    c
}

/// A set of `count` reference directions. When `count` is not a Das-Dennis
/// number, a finer lattice is thinned by farthest-point selection (always
/// keeping the first axis point as the anchor).
pub fn reference_directions(n_obj: usize, count: usize) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Err(Error::Argument("need at least one direction".into()));
    }
    if n_obj == 1 {
        return Ok(vec![vec![1.0]; 1]);
    }
    let mut partitions = 1;
    while das_dennis_count(n_obj, partitions) < count {
        partitions += 1;
    }
    let full = das_dennis(n_obj, partitions);
    if full.len() == count {
        return Ok(full);
    }
    // Farthest-point thinning, deterministic.
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
    };
    let mut chosen: Vec<usize> = vec![0];
    let mut min_d: Vec<f64> = full.iter().map(|p| dist(p, &full[0])).collect();
    while chosen.len() < count {
        let (next, _) = min_d
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
            .unwrap();
        chosen.push(next);
        for (i, d) in min_d.iter_mut().enumerate() {
            *d = d.min(dist(&full[i], &full[next]));
        }
    }
    Ok(chosen.into_iter().map(|i| full[i].clone()).collect())
}

/// Pareto dominance under minimization: `a` dominates `b`.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// Fast non-dominated sort; returns fronts of indices, best first.
pub fn non_dominated_sort(objectives: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = objectives.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates(&objectives[i], &objectives[j]) {
                dominated_by[i].push(j);
                domination_count[j] += 1;
            } else if dominates(&objectives[j], &objectives[i]) {
                dominated_by[j].push(i);
                domination_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by[i] {
                domination_count[j] -= 1;
                if domination_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::take(&mut current));
        current = next;
    }
    fronts
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn das_dennis_three_objectives_two_partitions() {
        let dirs = das_dennis(3, 2);
        assert_eq!(dirs.len(), 6);
        assert_eq!(das_dennis_count(3, 2), 6);
        assert!(dirs.iter().any(|d| d == &vec![1.0, 0.0, 0.0]));
        for d in &dirs {
            let sum: f64 = d.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn das_dennis_two_objectives_four_partitions() {
        let dirs = das_dennis(2, 4);
        let expected = [
            vec![1.0, 0.0],
            vec![0.75, 0.25],
            vec![0.5, 0.5],
            vec![0.25, 0.75],
            vec![0.0, 1.0],
        ];
        assert_eq!(dirs.len(), 5);
        for e in &expected {
            assert!(dirs.iter().any(|d| d
                .iter()
                .zip(e)
                .all(|(a, b)| (a - b).abs() < 1e-12)));
        }
    }

    #[test]
    fn reference_directions_subsample_non_lattice_count() {
        // Five directions over three objectives is not a Das-Dennis count.
        let dirs = reference_directions(3, 5).unwrap();
        assert_eq!(dirs.len(), 5);
        for d in &dirs {
            let sum: f64 = d.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        // Deterministic.
        assert_eq!(dirs, reference_directions(3, 5).unwrap());
    }

    #[test]
    fn sort_single_point() {
        let fronts = non_dominated_sort(&[vec![0.0, 0.0]]);
        assert_eq!(fronts, vec![vec![0]]);
    }

    #[test]
    fn sort_pairwise_dominance() {
        let objs = vec![vec![1.0, 2.0], vec![2.0, 1.0], vec![3.0, 3.0]];
        let fronts = non_dominated_sort(&objs);
        assert_eq!(fronts.len(), 2);
        assert_eq!(fronts[0], vec![0, 1]);
        assert_eq!(fronts[1], vec![2]);
    }

    // Exhaustive pairwise oracle: peel non-dominated layers by brute force.
    fn brute_force_fronts(objs: &[Vec<f64>]) -> Vec<Vec<usize>> {
        let mut remaining: Vec<usize> = (0..objs.len()).collect();
        let mut fronts = Vec::new();
        while !remaining.is_empty() {
            let front: Vec<usize> = remaining
                .iter()
                .copied()
                .filter(|&i| {
                    !remaining
                        .iter()
                        .any(|&j| j != i && dominates(&objs[j], &objs[i]))
                })
                .collect();
            remaining.retain(|i| !front.contains(i));
            fronts.push(front);
        }
        fronts
    }

    #[test]
    fn sort_matches_brute_force_oracle() {
        let mut rng = StdRng::seed_from_u64(2024);
        let objs: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..3).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let fast = non_dominated_sort(&objs);
        let brute = brute_force_fronts(&objs);
        assert_eq!(fast, brute);
    }
}
