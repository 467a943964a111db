//! The NSGA-III generational loop: non-dominated sorting, ideal/nadir
//! normalization, association to reference directions by perpendicular
//! distance, and niche-preserving truncation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::error::{Error, Result};

use super::variation::{polynomial_mutation, sbx_crossover};
use super::{dominates, non_dominated_sort, Individual, MooProblem};

/// Final population and the running non-dominated archive.
#[derive(Debug, Clone)]
pub struct Nsga3Result {
    pub population: Vec<Individual>,
    pub archive: Vec<Individual>,
    pub generations: usize,
    pub evaluations: usize,
}

const SBX_ETA: f64 = 15.0;
const SBX_P: f64 = 0.9;
const PM_ETA: f64 = 20.0;

pub fn nsga3_run(
    problem: &dyn MooProblem,
    pop_size: usize,
    generations: usize,
    directions: &[Vec<f64>],
    seed: u64,
) -> Result<Nsga3Result> {
    if directions.is_empty() || pop_size < directions.len() {
        return Err(Error::Argument(format!(
            "population {pop_size} must cover the {} reference directions",
            directions.len()
        )));
    }
    let bounds = problem.bounds().to_vec();
    let n_vars = bounds.len();
    let n_obj = problem.n_objectives();
    let p_mut = 1.0 / n_vars as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut evaluations = 0usize;

    let eval = |genes: &[f64], evaluations: &mut usize| -> Result<Vec<f64>> {
        *evaluations += 1;
        let objs = problem.evaluate(genes).map_err(|e| {
            Error::Contract(format!("evaluation failed at genes {genes:?}: {e}"))
        })?;
        if objs.len() != n_obj || objs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract(format!(
                "evaluation produced invalid objectives {objs:?} at genes {genes:?}"
            )));
        }
        Ok(objs)
    };

    // Uniform random initial population.
    let mut population: Vec<Individual> = Vec::with_capacity(pop_size);
    for _ in 0..pop_size {
        let genes: Vec<f64> = bounds
            .iter()
            .map(|&(lo, hi)| lo + (hi - lo) * rng.gen::<f64>())
            .collect();
        let objectives = eval(&genes, &mut evaluations)?;
        population.push(Individual {
            genes,
            objectives,
            rank: 0,
            niche: 0,
        });
    }
    assign_ranks(&mut population);
    let mut archive: Vec<Individual> = Vec::new();
    update_archive(&mut archive, &population);

    for _ in 0..generations {
        // Offspring by rank tournament + SBX + polynomial mutation.
        let mut offspring = Vec::with_capacity(pop_size);
        while offspring.len() < pop_size {
            let a = tournament(&mut rng, &population);
            let b = tournament(&mut rng, &population);
            let (mut c1, mut c2) = sbx_crossover(
                &mut rng,
                &population[a].genes,
                &population[b].genes,
                &bounds,
                SBX_ETA,
                SBX_P,
            );
            polynomial_mutation(&mut rng, &mut c1, &bounds, PM_ETA, p_mut);
            polynomial_mutation(&mut rng, &mut c2, &bounds, PM_ETA, p_mut);
            for genes in [c1, c2] {
                if offspring.len() == pop_size {
                    break;
                }
                let objectives = eval(&genes, &mut evaluations)?;
                offspring.push(Individual {
                    genes,
                    objectives,
                    rank: 0,
                    niche: 0,
                });
            }
        }

        let mut merged = population;
        merged.extend(offspring);
        population = select_next(&mut rng, merged, pop_size, directions);
        update_archive(&mut archive, &population);
    }

    Ok(Nsga3Result {
        population,
        archive,
        generations,
        evaluations,
    })
}

fn tournament(rng: &mut ChaCha8Rng, population: &[Individual]) -> usize {
    let a = rng.gen_range(0..population.len());
    let b = rng.gen_range(0..population.len());
    if population[a].rank <= population[b].rank {
        a
    } else {
        b
    }
}

fn assign_ranks(population: &mut [Individual]) {
    let objs: Vec<Vec<f64>> = population.iter().map(|i| i.objectives.clone()).collect();
    for (rank, front) in non_dominated_sort(&objs).into_iter().enumerate() {
        for idx in front {
            population[idx].rank = rank;
        }
    }
}

/// Keep the archive mutually non-dominated.
fn update_archive(archive: &mut Vec<Individual>, population: &[Individual]) {
    for candidate in population {
        if archive
            .iter()
            .any(|a| dominates(&a.objectives, &candidate.objectives))
        {
            continue;
        }
        archive.retain(|a| !dominates(&candidate.objectives, &a.objectives));
        // Skip exact duplicates to keep the archive compact.
        if archive
            .iter()
            .any(|a| a.objectives == candidate.objectives && a.genes == candidate.genes)
        {
            continue;
        }
        archive.push(candidate.clone());
    }
}

/// Environmental selection: fill by fronts, then niche the split front.
fn select_next(
    rng: &mut ChaCha8Rng,
    mut merged: Vec<Individual>,
    pop_size: usize,
    directions: &[Vec<f64>],
) -> Vec<Individual> {
    let objs: Vec<Vec<f64>> = merged.iter().map(|i| i.objectives.clone()).collect();
    let fronts = non_dominated_sort(&objs);
    for (rank, front) in fronts.iter().enumerate() {
        for &idx in front {
            merged[idx].rank = rank;
        }
    }

    let mut chosen: Vec<usize> = Vec::with_capacity(pop_size);
    let mut split_front: Option<&Vec<usize>> = None;
    for front in &fronts {
        if chosen.len() + front.len() <= pop_size {
            chosen.extend_from_slice(front);
            if chosen.len() == pop_size {
                break;
            }
        } else {
            split_front = Some(front);
            break;
        }
    }

    if let Some(front) = split_front {
        let considered: Vec<usize> = chosen.iter().chain(front.iter()).copied().collect();
        let normalized = normalize(&objs, &considered);
        let assoc = associate(rng, &objs, &normalized, &considered, directions);
        // Niche counts over the already-accepted part.
        let mut counts = vec![0usize; directions.len()];
        for &idx in &chosen {
            counts[assoc[&idx].0] += 1;
        }
        let mut pool: Vec<usize> = front.clone();
        while chosen.len() < pop_size && !pool.is_empty() {
            // Least-crowded direction that still has candidates.
            let mut best_dir = None;
            let mut best_count = usize::MAX;
            for (j, &c) in counts.iter().enumerate() {
                if c < best_count && pool.iter().any(|&idx| assoc[&idx].0 == j) {
                    best_count = c;
                    best_dir = Some(j);
                }
            }
            let j = best_dir.expect("pool non-empty implies a direction");
            let members: Vec<usize> = pool
                .iter()
                .copied()
                .filter(|&idx| assoc[&idx].0 == j)
                .collect();
            let pick = if counts[j] == 0 {
                // Empty niche: closest to the direction.
                members
                    .iter()
                    .copied()
                    .min_by(|&a, &b| assoc[&a].1.partial_cmp(&assoc[&b].1).unwrap())
                    .unwrap()
            } else {
                members[rng.gen_range(0..members.len())]
            };
            counts[j] += 1;
            pool.retain(|&idx| idx != pick);
            chosen.push(pick);
        }
    }

    // Materialize, recording niche assignments for the final population.
    let normalized = normalize(&objs, &chosen);
    let assoc = associate(rng, &objs, &normalized, &chosen, directions);
    chosen
        .into_iter()
        .map(|idx| {
            let mut ind = merged[idx].clone();
            ind.niche = assoc[&idx].0;
            ind
        })
        .collect()
}

/// Translate by the ideal point and scale by hyperplane intercepts
/// (falling back to per-objective extent when degenerate).
fn normalize(objs: &[Vec<f64>], considered: &[usize]) -> std::collections::HashMap<usize, Vec<f64>> {
    let n_obj = objs[0].len();
    let mut ideal = vec![f64::INFINITY; n_obj];
    for &idx in considered {
        for (i, &v) in objs[idx].iter().enumerate() {
            ideal[i] = ideal[i].min(v);
        }
    }
    // Extreme points by achievement scalarizing function.
    let asf = |point: &[f64], axis: usize| -> f64 {
        point
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let w = if i == axis { 1.0 } else { 1e-6 };
                (v - ideal[i]) / w
            })
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut extremes = Vec::with_capacity(n_obj);
    for axis in 0..n_obj {
        let best = considered
            .iter()
            .copied()
            .min_by(|&a, &b| asf(&objs[a], axis).partial_cmp(&asf(&objs[b], axis)).unwrap())
            .unwrap();
        extremes.push(best);
    }
    let intercepts = hyperplane_intercepts(objs, &ideal, &extremes).unwrap_or_else(|| {
        let mut spans = vec![0.0f64; n_obj];
        for &idx in considered {
            for (i, &v) in objs[idx].iter().enumerate() {
                spans[i] = spans[i].max(v - ideal[i]);
            }
        }
        spans
    });
    considered
        .iter()
        .map(|&idx| {
            let norm = objs[idx]
                .iter()
                .enumerate()
                .map(|(i, &v)| (v - ideal[i]) / intercepts[i].max(1e-12))
                .collect();
            (idx, norm)
        })
        .collect()
}

/// Solve for the axis intercepts of the hyperplane through the extreme
/// points; None when the system is singular or produces junk.
fn hyperplane_intercepts(
    objs: &[Vec<f64>],
    ideal: &[f64],
    extremes: &[usize],
) -> Option<Vec<f64>> {
    let m = ideal.len();
    // Gaussian elimination on A x = 1 with A rows = translated extremes.
    let mut a: Vec<Vec<f64>> = extremes
        .iter()
        .map(|&e| {
            objs[e]
                .iter()
                .zip(ideal)
                .map(|(&v, &z)| v - z)
                .collect::<Vec<f64>>()
        })
        .collect();
    let mut b = vec![1.0f64; m];
    for col in 0..m {
        let pivot = (col..m).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
        })?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in 0..m {
            if row == col {
                continue;
            }
            let factor = a[row][col] / a[col][col];
            for k in col..m {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut intercepts = Vec::with_capacity(m);
    for i in 0..m {
        let coeff = b[i] / a[i][i];
        if coeff <= 1e-12 || !coeff.is_finite() {
            return None;
        }
        intercepts.push(1.0 / coeff);
    }
    Some(intercepts)
}

/// Nearest reference direction by perpendicular distance; exact ties break
/// uniformly at random so degenerate populations spread over the niches.
fn associate(
    rng: &mut ChaCha8Rng,
    _objs: &[Vec<f64>],
    normalized: &std::collections::HashMap<usize, Vec<f64>>,
    considered: &[usize],
    directions: &[Vec<f64>],
) -> std::collections::HashMap<usize, (usize, f64)> {
    let perp = |p: &[f64], d: &[f64]| -> f64 {
        let dot: f64 = p.iter().zip(d).map(|(a, b)| a * b).sum();
        let dd: f64 = d.iter().map(|x| x * x).sum();
        let proj = dot / dd;
        p.iter()
            .zip(d)
            .map(|(a, b)| (a - proj * b) * (a - proj * b))
            .sum::<f64>()
            .sqrt()
    };
    considered
        .iter()
        .map(|&idx| {
            let p = &normalized[&idx];
            let mut best = Vec::new();
            let mut best_d = f64::INFINITY;
            for (j, dir) in directions.iter().enumerate() {
                let d = perp(p, dir);
                if d < best_d - 1e-12 {
                    best_d = d;
                    best = vec![j];
                } else if (d - best_d).abs() <= 1e-12 {
                    best.push(j);
                }
            }
            let j = if best.len() == 1 {
                best[0]
            } else {
                best[rng.gen_range(0..best.len())]
            };
            (idx, (j, best_d))
        })
        .collect()
}
