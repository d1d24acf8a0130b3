//! Replicated simulation study.
//!
//! For each distribution, `K` test points are drawn once. For each sample
//! size, `R` training sets are drawn and shared by every forest variant (tree
//! type x resample mode x mtry level) of that cell row. Each forest yields a
//! prediction and a bias-corrected IJ variance at every test point. The
//! empirical variance of a test point is the sample variance of its `R`
//! predictions, and the cell's MAPB is
//!
//! ```text
//! MAPB = (1/K) sum_k [ (1/R) sum_r |V_kr - Var_k| ] / Var_k
//! ```
//!
//! Every random stream is derived from `(master_seed, identifiers)`, never
//! from positions in the factor lists, so a sub-grid run reproduces the same
//! cells as the full grid.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cart::DEFAULT_MIN_NODE_SIZE;
use crate::citree::DEFAULT_ALPHA;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::{default_mtry, default_tree_count, fit_forest, ForestConfig};
use crate::ij_variance::{predict_with_variance, VarianceOptions};
use crate::numeric::{compensated_sum, median, sample_variance};
use crate::resampling::{default_subsample_size, ResampleMode};
use crate::rng::{self, derive_seed};
use crate::simgen::{gen_dataset, gen_predictors, SimFunction, SimulationSpec, N_PREDICTORS};
use crate::tree::Learner;

const TAG_TEST: u64 = 1;
const TAG_TRAIN: u64 = 2;
const TAG_FOREST: u64 = 3;

const CHECKPOINT_FORMAT: &str = "forestvar-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

/// Sample variance (denominator `R - 1`) of one test point's predictions.
pub fn empirical_variance(preds: &[f64]) -> Result<f64> {
    if preds.len() < 2 {
        return Err(Error::param("empirical variance needs at least 2 predictions"));
    }
    Ok(sample_variance(preds))
}

/// Mean absolute predictive bias. `estimates[k][r]` is the variance estimate
/// for test point `k` from training set `r`.
pub fn mapb(estimates: &[Vec<f64>], empiricals: &[f64]) -> Result<f64> {
    if estimates.len() != empiricals.len() {
        return Err(Error::DimensionMismatch {
            expected: empiricals.len(),
            got: estimates.len(),
        });
    }
    if estimates.is_empty() {
        return Err(Error::param("MAPB needs at least one test point"));
    }
    let per_point = estimates
        .iter()
        .zip(empiricals)
        .enumerate()
        .map(|(k, (row, &emp))| {
            if emp.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::ZeroEmpiricalVariance(k));
            }
            if row.is_empty() {
                return Err(Error::param(format!("test point {k} has no estimates")));
            }
            let mean_abs = compensated_sum(row.iter().map(|v| (v - emp).abs())) / row.len() as f64;
            Ok(mean_abs / emp)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(compensated_sum(per_point.iter().copied()) / per_point.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub specs: Vec<SimFunction>,
    pub n_values: Vec<usize>,
    pub mtry_levels: Vec<u8>,
    pub tree_types: Vec<Learner>,
    pub resample_modes: Vec<ResampleMode>,
    pub replicates: usize,
    pub test_points: usize,
    pub master_seed: u64,
    pub n_trees_override: Option<usize>,
    pub subsample_override: Option<usize>,
    pub min_node_size: usize,
    pub alpha: f64,
}

impl ExperimentConfig {
    /// R = K = 25 at n = 200 over the full 11 x 3 x 2 x 2 grid.
    pub fn desk() -> Self {
        Self {
            specs: SimFunction::ALL.to_vec(),
            n_values: vec![200],
            mtry_levels: vec![1, 2, 3],
            tree_types: Learner::ALL.to_vec(),
            resample_modes: ResampleMode::ALL.to_vec(),
            replicates: 25,
            test_points: 25,
            master_seed: 1,
            n_trees_override: None,
            subsample_override: None,
            min_node_size: DEFAULT_MIN_NODE_SIZE,
            alpha: DEFAULT_ALPHA,
        }
    }

    /// R = K = 100 at n = 200, 1000 and 5000.
    pub fn paper() -> Self {
        Self {
            n_values: vec![200, 1000, 5000],
            replicates: 100,
            test_points: 100,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::param("replicates must be >= 2"));
        }
        if self.test_points == 0 {
            return Err(Error::param("test points must be >= 1"));
        }
        if self.specs.is_empty()
            || self.n_values.is_empty()
            || self.mtry_levels.is_empty()
            || self.tree_types.is_empty()
            || self.resample_modes.is_empty()
        {
            return Err(Error::param("every factor list must be non-empty"));
        }
        for &level in &self.mtry_levels {
            default_mtry(N_PREDICTORS, level)?;
        }
        for &n in &self.n_values {
            if n < 2 {
                return Err(Error::param(format!("sample size {n} < 2")));
            }
            let s = self.subsample_size(n);
            if self.resample_modes.contains(&ResampleMode::Subsample) && (s < 2 || s > n) {
                return Err(Error::param(format!("subsample size {s} outside 2..={n}")));
            }
        }
        if self.n_trees_override == Some(0) {
            return Err(Error::param("tree count override must be >= 1"));
        }
        if self.n_trees_override.is_some_and(|b| b < 2) {
            return Err(Error::param("variance estimation needs at least 2 trees"));
        }
        if self.min_node_size == 0 {
            return Err(Error::param("min_node_size must be >= 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param(format!("alpha = {} outside (0, 1)", self.alpha)));
        }
        Ok(())
    }

    pub fn n_trees(&self, n: usize) -> usize {
        self.n_trees_override.unwrap_or_else(|| default_tree_count(n))
    }

    pub fn subsample_size(&self, n: usize) -> usize {
        self.subsample_override
            .unwrap_or_else(|| default_subsample_size(n))
    }

    /// All cells in run order: distribution, n, tree type, resample, mtry.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for &function in &self.specs {
            for &n in &self.n_values {
                for &tree_type in &self.tree_types {
                    for &resample in &self.resample_modes {
                        for &mtry_level in &self.mtry_levels {
                            out.push(CellKey {
                                function,
                                n,
                                mtry_level,
                                mtry: default_mtry(N_PREDICTORS, mtry_level)
                                    .expect("validated level"),
                                tree_type,
                                resample,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// Total number of trees the run will grow.
    pub fn total_trees(&self) -> u128 {
        self.cells()
            .iter()
            .map(|c| self.replicates as u128 * self.n_trees(c.n) as u128)
            .sum()
    }

    /// Human-readable warnings for configurations that are known to be slow.
    pub fn cost_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for &n in &self.n_values {
            if n >= 5000 && self.tree_types.contains(&Learner::Ci) {
                let trees = self.specs.len()
                    * self.mtry_levels.len()
                    * self.resample_modes.len()
                    * self.replicates
                    * self.n_trees(n);
                out.push(format!(
                    "conditional-inference cells at n = {n} grow {trees} trees on \
                     {n}-row resamples; expect a very long run"
                ));
            }
        }
        let total = self.total_trees();
        if total > 50_000_000 {
            out.push(format!("run grows {total} trees in total"));
        }
        out
    }

    /// SHA-256 of the canonical JSON form, used to tie checkpoints to configs.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn test_points_for(&self, function: SimFunction) -> Vec<Vec<f64>> {
        let seed = derive_seed(&[self.master_seed, TAG_TEST, function.index() as u64]);
        gen_predictors(self.test_points, &mut rng::seeded(seed))
    }

    pub fn training_set(&self, function: SimFunction, n: usize, replicate: usize) -> Dataset {
        let seed = derive_seed(&[
            self.master_seed,
            TAG_TRAIN,
            function.index() as u64,
            n as u64,
            replicate as u64,
        ]);
        gen_dataset(&SimulationSpec { function, n, seed })
    }

    pub fn forest_config(&self, key: &CellKey, replicate: usize) -> ForestConfig {
        ForestConfig {
            tree_type: key.tree_type,
            resample: key.resample,
            n_trees: self.n_trees(key.n),
            subsample_size: self.subsample_size(key.n),
            mtry: key.mtry,
            min_node_size: self.min_node_size,
            alpha: self.alpha,
            seed: derive_seed(&[
                self.master_seed,
                TAG_FOREST,
                key.function.index() as u64,
                key.n as u64,
                replicate as u64,
                key.mtry as u64,
                key.tree_type as u64,
                key.resample as u64,
            ]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub function: SimFunction,
    pub n: usize,
    pub mtry_level: u8,
    pub mtry: usize,
    pub tree_type: Learner,
    pub resample: ResampleMode,
}

impl CellKey {
    pub fn label(&self) -> String {
        format!(
            "{}_n{}_mtry{}_{}_{}",
            self.function, self.n, self.mtry, self.tree_type, self.resample
        )
    }
}

/// Per test point (outer index `k`) and replicate (inner index `r`) values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDetail {
    pub predictions: Vec<Vec<f64>>,
    pub raw: Vec<Vec<f64>>,
    pub correction: Vec<Vec<f64>>,
    pub corrected: Vec<Vec<f64>>,
    pub empirical_variance: Vec<f64>,
    /// `(1/R) sum_r |V_kr - Var_k|` per test point.
    pub mean_abs_bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub key: CellKey,
    pub median_empirical_variance: f64,
    pub mapb: f64,
    pub runtime_seconds: f64,
    pub detail: CellDetail,
}

/// Runs one cell. `training(r)` supplies the `r`-th training set.
pub fn evaluate_cell<G>(
    key: &CellKey,
    config: &ExperimentConfig,
    test_points: &[Vec<f64>],
    training: G,
) -> Result<CellResult>
where
    G: Fn(usize) -> Result<Dataset> + Sync,
{
    let start = Instant::now();
    let per_replicate = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let data = training(r)?;
            let forest = fit_forest(&data, &config.forest_config(key, r))?;
            predict_with_variance(&forest, test_points, VarianceOptions::default())
        })
        .collect::<Result<Vec<_>>>()?;

    let k = test_points.len();
    let transpose = |f: &dyn Fn(&(f64, crate::VarianceEstimate)) -> f64| -> Vec<Vec<f64>> {
        (0..k)
            .map(|kk| per_replicate.iter().map(|rep| f(&rep[kk])).collect())
            .collect()
    };
    let predictions = transpose(&|(p, _)| *p);
    let raw = transpose(&|(_, v)| v.raw);
    let correction = transpose(&|(_, v)| v.correction);
    let corrected = transpose(&|(_, v)| v.corrected);

    let empirical = predictions
        .iter()
        .map(|p| empirical_variance(p))
        .collect::<Result<Vec<_>>>()?;
    let cell_mapb = mapb(&corrected, &empirical)?;
    let mean_abs_bias = corrected
        .iter()
        .zip(&empirical)
        .map(|(row, &emp)| {
            compensated_sum(row.iter().map(|v| (v - emp).abs())) / row.len() as f64
        })
        .collect();

    Ok(CellResult {
        key: *key,
        median_empirical_variance: median(&empirical),
        mapb: cell_mapb,
        runtime_seconds: start.elapsed().as_secs_f64(),
        detail: CellDetail {
            predictions,
            raw,
            correction,
            corrected,
            empirical_variance: empirical,
            mean_abs_bias,
        },
    })
}

/// A cell whose MAPB is undefined because some test point had zero
/// empirical variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub key: CellKey,
    pub message: String,
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    /// Completed cells in run order.
    pub cells: Vec<CellResult>,
    pub failures: Vec<CellFailure>,
}

impl ExperimentResult {
    /// True when every cell of the grid was attempted.
    pub fn is_complete(&self) -> bool {
        self.cells.len() + self.failures.len() == self.config.cells().len()
    }

    pub fn cell(&self, key: &CellKey) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.key == *key)
    }

    /// Looks a cell up by its factors.
    pub fn find(
        &self,
        function: SimFunction,
        n: usize,
        mtry: usize,
        tree_type: Learner,
        resample: ResampleMode,
    ) -> Option<&CellResult> {
        self.cells.iter().find(|c| {
            c.key.function == function
                && c.key.n == n
                && c.key.mtry == mtry
                && c.key.tree_type == tree_type
                && c.key.resample == resample
        })
    }

    /// Median empirical variance over every test point of every finished cell
    /// for one distribution and sample size.
    pub fn pooled_median_empirical_variance(&self, function: SimFunction, n: usize) -> Option<f64> {
        let pooled: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.key.function == function && c.key.n == n)
            .flat_map(|c| c.detail.empirical_variance.iter().copied())
            .collect();
        (!pooled.is_empty()).then(|| median(&pooled))
    }

    /// SHA-256 over every deterministic output (everything except runtimes).
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for f in &self.failures {
            h.update(f.key.label().as_bytes());
            h.update(f.message.as_bytes());
        }
        for cell in &self.cells {
            h.update(cell.key.label().as_bytes());
            let d = &cell.detail;
            let scalars = [cell.median_empirical_variance, cell.mapb];
            let matrices = [&d.predictions, &d.raw, &d.correction, &d.corrected];
            for v in scalars
                .iter()
                .chain(matrices.iter().flat_map(|m| m.iter().flatten()))
                .chain(d.empirical_variance.iter())
                .chain(d.mean_abs_bias.iter())
            {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn write_results_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = create(path)?;
        let mut body = String::from(RESULTS_HEADER);
        body.push('\n');
        let mut rows: Vec<(CellKey, f64, f64, f64)> = self
            .cells
            .iter()
            .map(|c| (c.key, c.median_empirical_variance, c.mapb, c.runtime_seconds))
            .chain(
                self.failures
                    .iter()
                    .map(|f| (f.key, f64::NAN, f64::NAN, f.runtime_seconds)),
            )
            .collect();
        rows.sort_by_key(|r| r.0);
        for (key, median, mapb, runtime) in rows {
            body.push_str(&format!(
                "{},{},{},{},{},{median},{mapb},{runtime}\n",
                key.function, key.n, key.mtry, key.tree_type, key.resample,
            ));
        }
        out.write_all(body.as_bytes())
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }

    /// Writes `detail_<cell>.csv` for every cell into `dir` and returns the paths.
    pub fn write_detail_csvs(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        self.cells
            .iter()
            .map(|c| {
                let path = dir.join(format!("detail_{}.csv", c.key.label()));
                write_detail(c, &path)?;
                Ok(path)
            })
            .collect()
    }
}

const RESULTS_HEADER: &str =
    "distribution,n,mtry,tree_type,resample,median_empirical_variance,mapb,runtime_seconds";

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_detail(cell: &CellResult, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let d = &cell.detail;
    let mut body = String::from(
        "test_point,replicate,prediction,variance_raw,variance_correction,variance_corrected,empirical_variance\n",
    );
    for k in 0..d.predictions.len() {
        for r in 0..d.predictions[k].len() {
            body.push_str(&format!(
                "{k},{r},{},{},{},{},{}\n",
                d.predictions[k][r],
                d.raw[k][r],
                d.correction[k][r],
                d.corrected[k][r],
                d.empirical_variance[k]
            ));
        }
    }
    out.write_all(body.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// Controls for [`run_experiment`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Append-only checkpoint file. Cells already recorded there are reused.
    pub checkpoint: Option<PathBuf>,
    /// Stop after computing this many new cells (the result is then partial).
    pub max_new_cells: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
enum Record {
    Done(CellResult),
    Failed(CellFailure),
}

impl Record {
    fn key(&self) -> CellKey {
        match self {
            Record::Done(c) => c.key,
            Record::Failed(f) => f.key,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    version: u32,
    config_fingerprint: String,
    config: ExperimentConfig,
}

/// Runs every cell of the grid, in order, reusing and extending a checkpoint
/// when one is given.
///
/// A cell with a zero empirical variance is recorded in
/// [`ExperimentResult::failures`] and the run continues; any other error
/// aborts the run.
///
/// The checkpoint is a JSON-lines file: a header object
/// `{"format", "version", "config_fingerprint", "config"}` followed by one
/// record per finished cell, either `{"status": "done", ...CellResult}` or
/// `{"status": "failed", ...CellFailure}`. A torn final line is ignored.
pub fn run_experiment(config: &ExperimentConfig, options: &RunOptions) -> Result<ExperimentResult> {
    config.validate()?;
    for warning in config.cost_warnings() {
        log::warn!("{warning}");
    }
    let mut records: Vec<Record> = match &options.checkpoint {
        Some(path) if path.exists() => read_checkpoint(path, config)?,
        Some(path) => {
            write_checkpoint_header(path, config)?;
            Vec::new()
        }
        None => Vec::new(),
    };
    let finished: HashSet<CellKey> = records.iter().map(Record::key).collect();
    let mut test_points: BTreeMap<SimFunction, Vec<Vec<f64>>> = BTreeMap::new();
    let mut fresh = 0usize;

    for key in config.cells() {
        if finished.contains(&key) {
            continue;
        }
        if options.max_new_cells.is_some_and(|m| fresh >= m) {
            break;
        }
        let points = test_points
            .entry(key.function)
            .or_insert_with(|| config.test_points_for(key.function));
        let start = Instant::now();
        let record = match evaluate_cell(&key, config, points, |r| {
            Ok(config.training_set(key.function, key.n, r))
        }) {
            Ok(result) => {
                log::info!(
                    "{}: MAPB {:.4}, median empirical variance {:.6}, {:.1}s",
                    key.label(),
                    result.mapb,
                    result.median_empirical_variance,
                    result.runtime_seconds
                );
                Record::Done(result)
            }
            Err(e @ Error::ZeroEmpiricalVariance(_)) => {
                log::warn!("{}: {e}", key.label());
                Record::Failed(CellFailure {
                    key,
                    message: e.to_string(),
                    runtime_seconds: start.elapsed().as_secs_f64(),
                })
            }
            Err(e) => return Err(e),
        };
        if let Some(path) = &options.checkpoint {
            append_checkpoint(path, &record)?;
        }
        records.push(record);
        fresh += 1;
    }

    records.sort_by_key(Record::key);
    let mut cells = Vec::new();
    let mut failures = Vec::new();
    for record in records {
        match record {
            Record::Done(c) => cells.push(c),
            Record::Failed(f) => failures.push(f),
        }
    }
    Ok(ExperimentResult {
        config: config.clone(),
        cells,
        failures,
    })
}

// Run order: distribution, n, tree type, resample, mtry level.
impl PartialOrd for CellKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for CellKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (
            self.function,
            self.n,
            self.tree_type,
            self.resample,
            self.mtry_level,
        )
            .cmp(&(
                other.function,
                other.n,
                other.tree_type,
                other.resample,
                other.mtry_level,
            ))
    }
}

fn write_checkpoint_header(path: &Path, config: &ExperimentConfig) -> Result<()> {
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        config_fingerprint: config.fingerprint(),
        config: config.clone(),
    };
    let mut out = create(path)?;
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

fn append_checkpoint(path: &Path, record: &Record) -> Result<()> {
    let mut line = serde_json::to_vec(record)?;
    line.push(b'\n');
    let mut file = OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    file.write_all(&line)
        .and_then(|_| file.sync_data())
        .map_err(|e| Error::io(path, e))
}

fn read_checkpoint(path: &Path, config: &ExperimentConfig) -> Result<Vec<Record>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Format(format!("{}: empty checkpoint", path.display())))?
        .map_err(|e| Error::io(path, e))?;
    let header: CheckpointHeader = serde_json::from_str(&header_line)?;
    if header.format != CHECKPOINT_FORMAT || header.version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "{}: not a v{CHECKPOINT_VERSION} checkpoint",
            path.display()
        )));
    }
    if header.config_fingerprint != config.fingerprint() {
        return Err(Error::Format(format!(
            "{}: checkpoint was written for a different configuration",
            path.display()
        )));
    }
    let wanted: HashSet<CellKey> = config.cells().into_iter().collect();
    let mut records = Vec::new();
    let mut valid_len = header_line.len() + 1;
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        match serde_json::from_str::<Record>(&line) {
            Ok(record) if wanted.contains(&record.key()) => {
                valid_len += line.len() + 1;
                records.push(record);
            }
            _ => {
                log::warn!("{}: ignoring unreadable trailing record", path.display());
                break;
            }
        }
    }
    // Drop a torn tail so later appends start on a clean line.
    let file = OpenOptions::new()
        .write(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    file.set_len(valid_len as u64)
        .map_err(|e| Error::io(path, e))?;
    Ok(records)
}

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub distribution: SimFunction,
    pub n: usize,
    pub mtry: usize,
    pub tree_type: Learner,
    pub resample: ResampleMode,
    pub median_empirical_variance: f64,
    pub mapb: f64,
    pub runtime_seconds: f64,
}

pub fn read_results_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != RESULTS_HEADER {
        return Err(Error::Format(format!(
            "{}: expected header '{RESULTS_HEADER}'",
            path.display()
        )));
    }
    let bad = |line: usize, what: &str| {
        Error::Format(format!("{}: line {}: bad {what}", path.display(), line + 2))
    };
    reader
        .records()
        .enumerate()
        .map(|(line, rec)| {
            let rec = rec?;
            let num = |i: usize, what: &str| rec[i].parse::<f64>().map_err(|_| bad(line, what));
            let int = |i: usize, what: &str| rec[i].parse::<usize>().map_err(|_| bad(line, what));
            Ok(ResultRow {
                distribution: rec[0].parse().map_err(|_| bad(line, "distribution"))?,
                n: int(1, "n")?,
                mtry: int(2, "mtry")?,
                tree_type: rec[3].parse().map_err(|_| bad(line, "tree_type"))?,
                resample: rec[4].parse().map_err(|_| bad(line, "resample"))?,
                median_empirical_variance: num(5, "median_empirical_variance")?,
                mapb: num(6, "mapb")?,
                runtime_seconds: num(7, "runtime_seconds")?,
            })
        })
        .collect()
}

/// Groups rows by sample size; within a size, rows are ordered by
/// distribution (table order), then lexicographically by
/// `(resample, tree_type, mtry)`.
pub fn figure_tables(rows: &[ResultRow]) -> BTreeMap<usize, Vec<ResultRow>> {
    let mut by_n: BTreeMap<usize, Vec<ResultRow>> = BTreeMap::new();
    for row in rows {
        by_n.entry(row.n).or_default().push(row.clone());
    }
    for table in by_n.values_mut() {
        table.sort_by(|a, b| {
            (a.distribution.index(), a.resample.as_str(), a.tree_type.as_str(), a.mtry).cmp(&(
                b.distribution.index(),
                b.resample.as_str(),
                b.tree_type.as_str(),
                b.mtry,
            ))
        });
    }
    by_n
}

/// Writes `mapb_n<N>.csv` per sample size and returns the paths.
pub fn write_figure_csvs(rows: &[ResultRow], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    figure_tables(rows)
        .into_iter()
        .map(|(n, table)| {
            let path = dir.join(format!("mapb_n{n}.csv"));
            let mut out = create(&path)?;
            let mut body = String::from("distribution,mtry,tree_type,resample,mapb\n");
            for r in table {
                body.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.distribution, r.mtry, r.tree_type, r.resample, r.mapb
                ));
            }
            out.write_all(body.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}
