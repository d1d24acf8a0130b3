//! Regression random forests with per-prediction variance estimates.
//!
//! The crate is organised bottom-up:
//!
//! * [`data`]: the [`Dataset`] type and CSV ingestion.
//! * [`resampling`]: bootstrap and subsample draws stored as count vectors.
//! * [`tree`]: the shared [`TreeModel`] representation and node-growing loop.
//! * [`cart`]: squared-error split search.
//! * [`citree`]: conditional-inference trees driven by permutation-test statistics.
//! * [`forest`]: ensembles that keep their resample count matrix.
//! * [`ij_variance`]: infinitesimal-jackknife and jackknife-after-bootstrap variances.
//! * [`simgen`]: synthetic benchmark distributions.
//! * [`experiment`]: the replicated simulation study (empirical variance and MAPB).

pub mod cart;
pub mod citree;
pub mod data;
mod error;
pub mod experiment;
pub mod forest;
pub mod ij_variance;
pub mod numeric;
pub mod resampling;
pub mod rng;
pub mod simgen;
pub mod tree;

pub use data::Dataset;
pub use error::{Error, Result};
pub use forest::{default_mtry, default_tree_count, fit_forest, ForestConfig, ForestModel};
pub use ij_variance::{
    ij_components, ij_variance, jackknife_after_bootstrap, predict_with_variance, BiasCorrection,
    Estimator,
    VarianceEstimate, VarianceOptions,
};
pub use resampling::{default_subsample_size, ResampleCounts, ResampleMode};
pub use simgen::{SimFunction, SimulationSpec};
pub use tree::{Learner, SplitRule, TreeModel};
