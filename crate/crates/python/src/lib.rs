//! Python bindings for `forestvar`.
//!
//! ```python
//! import forestvar_py as fv
//! x, y = fv.simulate("SUM1", 200, seed=1)
//! forest = fv.Forest.fit(x, y, tree_type="cart", resample="subsample", seed=7)
//! for pred, raw, correction, corrected in forest.predict_with_variance(x[:5]):
//!     ...
//! ```

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use forestvar::data::Dataset;
use forestvar::experiment;
use forestvar::simgen::{self, gen_dataset, SimulationSpec};
use forestvar::{
    BiasCorrection, Error, ForestConfig, ForestModel, Learner, ResampleMode, VarianceEstimate,
    VarianceOptions,
};

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io { .. } | Error::Csv(_) => PyIOError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

type Estimate = (f64, f64, f64);

fn triple(v: &VarianceEstimate) -> Estimate {
    (v.raw, v.correction, v.corrected)
}

/// A fitted regression forest that keeps its resample counts.
#[pyclass(module = "forestvar_py", frozen)]
struct Forest {
    inner: ForestModel,
}

#[pymethods]
impl Forest {
    /// Fits a forest to row-major features `x` and responses `y`. Unset
    /// options use the defaults `B = 5n`, `s = round(n^0.7)`, `mtry = max(floor(p/3), 1)`.
    #[staticmethod]
    #[pyo3(signature = (x, y, tree_type="cart", resample="bootstrap", n_trees=None, subsample_size=None, mtry=None, min_node_size=5, alpha=0.05, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        py: Python<'_>,
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        tree_type: &str,
        resample: &str,
        n_trees: Option<usize>,
        subsample_size: Option<usize>,
        mtry: Option<usize>,
        min_node_size: usize,
        alpha: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let data = Dataset::from_rows(&x, y).map_err(to_py)?;
        let mut config =
            ForestConfig::with_defaults(parse::<Learner>(tree_type)?, parse::<ResampleMode>(resample)?, data.n(), data.p());
        if let Some(b) = n_trees {
            config.n_trees = b;
        }
        if let Some(s) = subsample_size {
            config.subsample_size = s;
        }
        if let Some(m) = mtry {
            config.mtry = m;
        }
        config.min_node_size = min_node_size;
        config.alpha = alpha;
        config.seed = seed;
        let inner = py
            .detach(|| forestvar::fit_forest(&data, &config))
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ForestModel::load(path).map_err(to_py)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(to_py)
    }

    #[getter]
    fn n_trees(&self) -> usize {
        self.inner.n_trees()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.predict(&x).map_err(to_py)
    }

    fn predict_per_tree(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.predict_per_tree(&x).map_err(to_py)
    }

    /// `(raw, correction, corrected)` IJ variance at `x`.
    #[pyo3(signature = (x, bias_correction="auto", floor=false))]
    fn ij_variance(&self, x: Vec<f64>, bias_correction: &str, floor: bool) -> PyResult<Estimate> {
        let options = VarianceOptions {
            correction: parse::<BiasCorrection>(bias_correction)?,
            floor,
        };
        forestvar::ij_variance::ij_variance_with(&self.inner, &x, options)
            .map(|v| triple(&v))
            .map_err(to_py)
    }

    /// One `(prediction, raw, correction, corrected)` tuple per row.
    #[pyo3(signature = (rows, bias_correction="auto", floor=false))]
    fn predict_with_variance(
        &self,
        py: Python<'_>,
        rows: Vec<Vec<f64>>,
        bias_correction: &str,
        floor: bool,
    ) -> PyResult<Vec<(f64, f64, f64, f64)>> {
        let options = VarianceOptions {
            correction: parse::<BiasCorrection>(bias_correction)?,
            floor,
        };
        let out = py
            .detach(|| forestvar::predict_with_variance(&self.inner, &rows, options))
            .map_err(to_py)?;
        Ok(out
            .iter()
            .map(|(p, v)| (*p, v.raw, v.correction, v.corrected))
            .collect())
    }

    fn jackknife_after_bootstrap(&self, x: Vec<f64>) -> PyResult<f64> {
        forestvar::jackknife_after_bootstrap(&self.inner, &x)
            .map(|v| v.corrected)
            .map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let c = self.inner.config();
        format!(
            "Forest(tree_type='{}', resample='{}', n_trees={}, mtry={}, n={}, p={})",
            c.tree_type,
            c.resample,
            c.n_trees,
            c.mtry,
            self.inner.n(),
            self.inner.p()
        )
    }
}

/// Simulated `(x, y)` for one of the benchmark distributions.
#[pyfunction]
fn simulate(name: &str, n: usize, seed: u64) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let spec = SimulationSpec::new(parse(name)?, n, seed).map_err(to_py)?;
    let data = gen_dataset(&spec);
    Ok((data.rows(), data.response().to_vec()))
}

#[pyfunction]
fn apply_function(name: &str, x: Vec<f64>) -> PyResult<f64> {
    simgen::apply_function(name, &x).map_err(to_py)
}

#[pyfunction]
fn default_subsample_size(n: usize) -> usize {
    forestvar::default_subsample_size(n)
}

#[pyfunction]
fn default_tree_count(n: usize) -> usize {
    forestvar::default_tree_count(n)
}

#[pyfunction]
fn default_mtry(p: usize, level: u8) -> PyResult<usize> {
    forestvar::default_mtry(p, level).map_err(to_py)
}

#[pyfunction]
fn empirical_variance(preds: Vec<f64>) -> PyResult<f64> {
    experiment::empirical_variance(&preds).map_err(to_py)
}

#[pyfunction]
fn mapb(estimates: Vec<Vec<f64>>, empiricals: Vec<f64>) -> PyResult<f64> {
    experiment::mapb(&estimates, &empiricals).map_err(to_py)
}

#[pymodule]
fn forestvar_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Forest>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(apply_function, m)?)?;
    m.add_function(wrap_pyfunction!(default_subsample_size, m)?)?;
    m.add_function(wrap_pyfunction!(default_tree_count, m)?)?;
    m.add_function(wrap_pyfunction!(default_mtry, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_variance, m)?)?;
    m.add_function(wrap_pyfunction!(mapb, m)?)?;
    Ok(())
}
