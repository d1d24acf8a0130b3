//! Random forests that keep the resample count matrix of every tree.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cart::{fit_cart_presorted, DEFAULT_MIN_NODE_SIZE};
use crate::citree::{fit_citree_presorted, validate_alpha, DEFAULT_ALPHA};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numeric::compensated_sum;
use crate::resampling::{default_subsample_size, draw_counts, ResampleCounts, ResampleMode};
use crate::rng;
use crate::tree::{check_point, Learner, Presorted, TreeModel};

const FORMAT_NAME: &str = "forestvar-forest";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub tree_type: Learner,
    pub resample: ResampleMode,
    pub n_trees: usize,
    /// Subsample size; ignored for bootstrap forests.
    pub subsample_size: usize,
    pub mtry: usize,
    pub min_node_size: usize,
    /// Significance level for conditional-inference splits.
    pub alpha: f64,
    pub seed: u64,
}

impl ForestConfig {
    /// Defaults for an `n x p` training set: `B = 5n`, `s = round(n^0.7)`,
    /// `mtry = max(floor(p/3), 1)`, node size 5, alpha 0.05, seed 0.
    pub fn with_defaults(tree_type: Learner, resample: ResampleMode, n: usize, p: usize) -> Self {
        Self {
            tree_type,
            resample,
            n_trees: default_tree_count(n),
            subsample_size: default_subsample_size(n),
            mtry: default_mtry(p, 1).unwrap_or(1),
            min_node_size: DEFAULT_MIN_NODE_SIZE,
            alpha: DEFAULT_ALPHA,
            seed: 0,
        }
    }

    /// Resample size actually drawn per tree.
    pub fn effective_size(&self, n: usize) -> usize {
        match self.resample {
            ResampleMode::Bootstrap => n,
            ResampleMode::Subsample => self.subsample_size,
        }
    }

    pub fn validate(&self, n: usize, p: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::param("number of trees must be >= 1"));
        }
        if self.mtry == 0 || self.mtry > p {
            return Err(Error::param(format!("mtry = {} outside 1..={p}", self.mtry)));
        }
        if self.min_node_size == 0 {
            return Err(Error::param("min_node_size must be >= 1"));
        }
        if n < 2 {
            return Err(Error::param("training set needs at least 2 rows"));
        }
        if self.resample == ResampleMode::Subsample
            && (self.subsample_size < 2 || self.subsample_size > n)
        {
            return Err(Error::param(format!(
                "subsample size {} outside 2..={n}",
                self.subsample_size
            )));
        }
        if self.tree_type == Learner::Ci {
            validate_alpha(self.alpha)?;
        }
        Ok(())
    }
}

/// `mtry` presets: level 1 is `max(floor(p/3), 1)`, level 2
/// `max(floor(2p/3), 1)`, level 3 `max(p, 1)`, except that level 3 with
/// `p = 10` gives 9 so the forest does not collapse to plain bagging.
pub fn default_mtry(p: usize, level: u8) -> Result<usize> {
    if p == 0 {
        return Err(Error::param("p must be >= 1"));
    }
    let m = match level {
        1 => p / 3,
        2 => 2 * p / 3,
        3 if p == 10 => 9,
        3 => p,
        other => return Err(Error::param(format!("mtry level {other} not in 1..=3"))),
    };
    Ok(m.max(1))
}

pub fn default_tree_count(n: usize) -> usize {
    5 * n
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    trees: Vec<TreeModel>,
    counts: Vec<ResampleCounts>,
    config: ForestConfig,
    n: usize,
    column_names: Vec<String>,
}

/// Trains `config.n_trees` trees. Tree `b` draws its resample and its split
/// candidates from stream `b` of `config.seed`, so the result does not depend
/// on how rayon schedules the work.
pub fn fit_forest(data: &Dataset, config: &ForestConfig) -> Result<ForestModel> {
    config.validate(data.n(), data.p())?;
    let presorted = Presorted::new(data);
    let n = data.n();
    let s = config.effective_size(n);
    let fitted = (0..config.n_trees)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(config.seed, b as u64);
            let counts = draw_counts(config.resample, n, s, &mut rng)?;
            let tree = match config.tree_type {
                Learner::Cart => fit_cart_presorted(
                    data,
                    &counts,
                    config.mtry,
                    config.min_node_size,
                    &presorted,
                    &mut rng,
                )?,
                Learner::Ci => fit_citree_presorted(
                    data,
                    &counts,
                    config.mtry,
                    config.min_node_size,
                    config.alpha,
                    &presorted,
                    &mut rng,
                )?,
            };
            Ok((tree, counts))
        })
        .collect::<Result<Vec<_>>>()?;
    let (trees, counts) = fitted.into_iter().unzip();
    Ok(ForestModel {
        trees,
        counts,
        config: config.clone(),
        n,
        column_names: data.column_names().to_vec(),
    })
}

#[derive(Serialize, Deserialize)]
struct ForestFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: ForestModel,
}

impl ForestModel {
    /// Assembles a forest from parts, checking the count-matrix invariants.
    pub fn from_parts(
        trees: Vec<TreeModel>,
        counts: Vec<ResampleCounts>,
        config: ForestConfig,
        n: usize,
        column_names: Vec<String>,
    ) -> Result<Self> {
        let model = Self {
            trees,
            counts,
            config,
            n,
            column_names,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        if self.trees.is_empty() || self.trees.len() != self.counts.len() {
            return Err(Error::Format(format!(
                "{} trees but {} count vectors",
                self.trees.len(),
                self.counts.len()
            )));
        }
        let p = self.column_names.len();
        for (b, (tree, counts)) in self.trees.iter().zip(&self.counts).enumerate() {
            tree.validate()?;
            counts.validate()?;
            if tree.p() != p {
                return Err(Error::Format(format!("tree {b} has p = {}, expected {p}", tree.p())));
            }
            if counts.n() != self.n || counts.mode() != self.config.resample {
                return Err(Error::Format(format!("count vector {b} does not match the forest")));
            }
        }
        Ok(())
    }

    pub fn trees(&self) -> &[TreeModel] {
        &self.trees
    }

    pub fn counts(&self) -> &[ResampleCounts] {
        &self.counts
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Training-set size.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.column_names.len()
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// Resample size `s` used by every tree (`n` for bootstrap).
    pub fn resample_size(&self) -> usize {
        self.counts[0].size()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let per_tree = self.predict_per_tree(x)?;
        Ok(compensated_sum(per_tree.iter().copied()) / per_tree.len() as f64)
    }

    pub fn predict_per_tree(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_point(x, self.p())?;
        Ok(self.per_tree_unchecked(x))
    }

    pub(crate) fn per_tree_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.trees.iter().map(|t| t.predict_unchecked(x)).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let doc = ForestFileRef {
            format: FORMAT_NAME,
            version: FORMAT_VERSION,
            model: self,
        };
        serde_json::to_writer(&mut out, &doc)?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let doc: ForestFile = serde_json::from_reader(BufReader::new(file))?;
        if doc.format != FORMAT_NAME || doc.version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "expected {FORMAT_NAME} v{FORMAT_VERSION}, found {} v{}",
                doc.format, doc.version
            )));
        }
        doc.model.validate()?;
        Ok(doc.model)
    }
}

#[derive(Serialize)]
struct ForestFileRef<'a> {
    format: &'static str,
    version: u32,
    #[serde(flatten)]
    model: &'a ForestModel,
}
