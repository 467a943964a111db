//! Configuration sweeps: run solver plus critical-diameter extraction over a
//! parameter grid, persist labeled fields, split them reproducibly and
//! augment the labels through the trained field generator.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::critical::{critical_diameter_of_field, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::flow::{solve_flow, FlowField, SolverConfig};
use crate::geometry::{unit_cell, DldParams};
use crate::gridfile;
use crate::surrogate::{cnn_predict_field, DirectSample, FieldNet, FieldSample};
use crate::walls::{wall_distance_field, WallField};

/// Split assignment of one record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Dev,
    Test,
    Unassigned,
}

/// One labeled configuration. `d_c` of `None` means "extracted, no
/// separation inside the probe interval" (a legitimate label).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataRecord {
    pub params: DldParams,
    /// Field file path relative to the manifest directory.
    pub field_file: String,
    pub d_c: Option<f64>,
    pub achieved_re: f64,
    pub split: SplitTag,
    pub augmented: bool,
}

/// A configuration whose pipeline run failed, with the reason.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailureRecord {
    pub params: DldParams,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub records: Vec<DataRecord>,
    pub failures: Vec<FailureRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_seed: Option<u64>,
}

/// f-range specification (start, stop, step), inclusive of the endpoint up
/// to a step-relative tolerance.
pub type FSpec = (f64, f64, f64);

/// Expand an f-range into its values.
pub fn f_values(spec: FSpec) -> Result<Vec<f64>> {
    let (start, stop, step) = spec;
    if step <= 0.0 || stop < start {
        return Err(Error::Argument(format!(
            "bad f spec ({start}, {stop}, {step})"
        )));
    }
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let v = start + k as f64 * step;
        if v > stop + step * 1e-6 {
            break;
        }
        out.push(v);
        k += 1;
    }
    Ok(out)
}

/// Cartesian product of the sweep axes in deterministic f-major order.
pub fn generate_grid(f_spec: FSpec, n_set: &[u32], re_set: &[f64]) -> Result<Vec<DldParams>> {
    let fs = f_values(f_spec)?;
    if fs.is_empty() || n_set.is_empty() || re_set.is_empty() {
        return Err(Error::Argument("empty sweep axis".into()));
    }
    let mut grid = Vec::with_capacity(fs.len() * n_set.len() * re_set.len());
    for &f in &fs {
        for &n in n_set {
            for &re in re_set {
                grid.push(DldParams::new(f, n, re)?);
            }
        }
    }
    Ok(grid)
}

/// Everything `build_dataset` needs besides the grid.
#[derive(Debug, Clone)]
pub struct BuildConfig {
    pub solver: SolverConfig,
    pub bisect_tol: f64,
    pub n_periods: usize,
    pub jobs: usize,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            solver: SolverConfig::with_res(64),
            bisect_tol: DEFAULT_TOL,
            n_periods: 2,
            jobs: 1,
        }
    }
}

enum Outcome {
    Record(DataRecord),
    Failure(FailureRecord),
}

/// Solve every configuration, extract its critical diameter, persist the
/// field and assemble the manifest in grid order. Failures become failure
/// records, never silent drops.
pub fn build_dataset(
    configs: &[DldParams],
    cfg: &BuildConfig,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    let fields_dir = out_dir.join("fields");
    if !configs.is_empty() {
        std::fs::create_dir_all(&fields_dir)?;
    }

    let run_one = |idx: usize, params: &DldParams| -> Outcome {
        let rel = format!("fields/cfg_{idx:04}.f64");
        let result = (|| -> Result<DataRecord> {
            let field = solve_flow(params, &cfg.solver)?;
            let geom = unit_cell(params)?;
            let wf = wall_distance_field(&geom, cfg.solver.res)?;
            let crit = critical_diameter_of_field(&field, &wf, cfg.bisect_tol, cfg.n_periods)?;
            gridfile::save_field(&field, Some(crit.d_c), &out_dir.join(&rel))?;
            Ok(DataRecord {
                params: *params,
                field_file: rel.clone(),
                d_c: crit.d_c,
                achieved_re: field.achieved_re,
                split: SplitTag::Unassigned,
                augmented: false,
            })
        })();
        match result {
            Ok(record) => Outcome::Record(record),
            Err(e) => Outcome::Failure(FailureRecord {
                params: *params,
                reason: e.to_string(),
            }),
        }
    };

    let jobs = cfg.jobs.max(1).min(configs.len().max(1));
    let mut slots: Vec<Option<Outcome>> = Vec::with_capacity(configs.len());
    slots.resize_with(configs.len(), || None);
    if jobs <= 1 {
        for (idx, params) in configs.iter().enumerate() {
            slots[idx] = Some(run_one(idx, params));
        }
    } else {
        let next = AtomicUsize::new(0);
        let slots_shared = Mutex::new(&mut slots);
        std::thread::scope(|scope| {
            for _ in 0..jobs {
                scope.spawn(|| loop {
                    let idx = next.fetch_add(1, Ordering::SeqCst);
                    if idx >= configs.len() {
                        break;
                    }
                    let outcome = run_one(idx, &configs[idx]);
                    slots_shared.lock().unwrap()[idx] = Some(outcome);
                });
            }
        });
    }

    let mut manifest = DatasetManifest::default();
    for outcome in slots.into_iter().flatten() {
        match outcome {
            Outcome::Record(r) => manifest.records.push(r),
            Outcome::Failure(f) => manifest.failures.push(f),
        }
    }
    Ok(manifest)
}

/// Assign train/dev splits uniformly at random, reproducibly from the seed.
/// Records already tagged `Test` keep their tag.
pub fn split(manifest: &mut DatasetManifest, dev_fraction: f64, seed: u64) -> Result<()> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    if !(dev_fraction > 0.0 && dev_fraction < 1.0) {
        return Err(Error::Argument(format!(
            "dev fraction {dev_fraction} outside (0, 1)"
        )));
    }
    let pool: Vec<usize> = manifest
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.split != SplitTag::Test)
        .map(|(i, _)| i)
        .collect();
    let mut order = pool.clone();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let dev_count = (pool.len() as f64 * dev_fraction).round() as usize;
    for (rank, &idx) in order.iter().enumerate() {
        manifest.records[idx].split = if rank < dev_count {
            SplitTag::Dev
        } else {
            SplitTag::Train
        };
    }
    manifest.split_seed = Some(seed);
    Ok(())
}

pub fn save_manifest(manifest: &DatasetManifest, out_dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(manifest)?)?;
    if !manifest.failures.is_empty() {
        let mut csv = String::from("f,N,Re,reason\n");
        for f in &manifest.failures {
            csv.push_str(&format!(
                "{:.17e},{},{:.17e},\"{}\"\n",
                f.params.f,
                f.params.n,
                f.params.re,
                f.reason.replace('"', "'")
            ));
        }
        std::fs::write(out_dir.join("failures.csv"), csv)?;
    }
    Ok(path)
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Augmentation options; `max_field_speed` is the speed ceiling above which
/// a generated field counts as diverged.
#[derive(Debug, Clone)]
pub struct AugmentConfig {
    pub fine_re_step: f64,
    pub re_min: f64,
    pub re_max: f64,
    pub bisect_tol: f64,
    pub n_periods: usize,
    pub max_field_speed: f64,
}

/// Generate fields through the trained net on a finer Reynolds grid and
/// label them with the tracer. The Re count is `round(span / step)`.
pub fn augment(
    field_net: &FieldNet,
    base_pairs: &[(f64, u32)],
    cfg: &AugmentConfig,
) -> Result<DatasetManifest> {
    if cfg.fine_re_step <= 0.0 {
        return Err(Error::Argument("fine_re_step must be positive".into()));
    }
    let count = ((cfg.re_max - cfg.re_min) / cfg.fine_re_step).round() as usize;
    if count == 0 {
        return Err(Error::Argument("fine Re grid is empty".into()));
    }
    let mut manifest = DatasetManifest::default();
    let mut wall_cache: Option<(f64, u32, WallField)> = None;
    for &(f, n) in base_pairs {
        for k in 0..count {
            let re = cfg.re_min + k as f64 * cfg.fine_re_step;
            let params = DldParams::new(f, n, re)?;
            let outcome = (|| -> Result<(FlowField, Option<f64>)> {
                let field = cnn_predict_field(field_net, &params)?;
                let speed = crate::flow::max_speed(&field);
                if speed > cfg.max_field_speed {
                    return Err(Error::Contract(format!(
                        "generated field speed {speed:.3e} exceeds ceiling {:.3e}",
                        cfg.max_field_speed
                    )));
                }
                let wf = match &wall_cache {
                    Some((cf, cn, wf)) if *cf == f && *cn == n => wf.clone(),
                    _ => {
                        let geom = unit_cell(&params)?;
                        let wf = wall_distance_field(&geom, field.res.max(64))?;
                        wall_cache = Some((f, n, wf.clone()));
                        wf
                    }
                };
                let crit = critical_diameter_of_field(&field, &wf, cfg.bisect_tol, cfg.n_periods)?;
                Ok((field, crit.d_c))
            })();
            match outcome {
                Ok((field, d_c)) => manifest.records.push(DataRecord {
                    params,
                    field_file: String::new(),
                    d_c,
                    achieved_re: field.achieved_re,
                    split: SplitTag::Unassigned,
                    augmented: true,
                }),
                Err(e) => manifest.failures.push(FailureRecord {
                    params,
                    reason: e.to_string(),
                }),
            }
        }
    }
    Ok(manifest)
}

/// Labeled direct-predictor samples from a manifest split. Records with an
/// absent critical diameter are excluded.
pub fn direct_samples(manifest: &DatasetManifest, tag: SplitTag) -> Vec<DirectSample> {
    manifest
        .records
        .iter()
        .filter(|r| r.split == tag)
        .filter_map(|r| {
            r.d_c.map(|d_c| DirectSample {
                inputs: [r.params.f, r.params.n as f64, r.params.re],
                d_c,
            })
        })
        .collect()
}

/// Field-generator samples from a manifest split: fields are loaded, shape
/// normalized so the gap-mean speed is one, and mean-pooled down to the
/// requested resolution when needed.
pub fn field_samples(
    manifest: &DatasetManifest,
    base_dir: &Path,
    tag: SplitTag,
    res: usize,
) -> Result<Vec<FieldSample>> {
    let mut out = Vec::new();
    for record in manifest.records.iter().filter(|r| r.split == tag) {
        if record.field_file.is_empty() {
            continue;
        }
        let (field, _) = gridfile::load_field(&base_dir.join(&record.field_file))?;
        out.push(to_field_sample(&field, res)?);
    }
    Ok(out)
}

/// Shape-normalize and pool one field into a training sample.
pub fn to_field_sample(field: &FlowField, res: usize) -> Result<FieldSample> {
    if field.res % res != 0 {
        return Err(Error::Shape(format!(
            "cannot pool res {} to {res}",
            field.res
        )));
    }
    let factor = field.res / res;
    // Gap-mean speed implied by the drive closure.
    let scale = field.achieved_re * field.viscosity / field.params.gap_fraction();
    let inv = if scale.abs() > 1e-300 { 1.0 / scale } else { 0.0 };
    let pool = |plane: &ndarray::Array2<f64>| -> Vec<f64> {
        let mut out = vec![0.0; res * res];
        let w = 1.0 / (factor * factor) as f64;
        for iy in 0..res {
            for ix in 0..res {
                let mut acc = 0.0;
                for dy in 0..factor {
                    for dx in 0..factor {
                        acc += plane[(iy * factor + dy, ix * factor + dx)];
                    }
                }
                out[iy * res + ix] = acc * w * inv;
            }
        }
        out
    };
    Ok(FieldSample {
        inputs: [field.params.f, field.params.n as f64, field.params.re],
        u: pool(&field.u),
        v: pool(&field.v),
    })
}

/// The desk-scale default sweep: 6 f x 4 N x 5 Re = 120 configurations
/// (the full published grid stays one config file away).
pub fn desk_grid() -> Result<Vec<DldParams>> {
    generate_grid(
        (0.25, 0.75, 0.1),
        &[3, 5, 7, 10],
        &[0.01, 0.1, 1.0, 5.0, 10.0],
    )
}
