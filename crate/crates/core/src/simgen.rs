//! Synthetic benchmark data: ten independent normal predictors and eleven
//! deterministic outcome functions.
//!
//! `X1..X5 ~ N(0, 1)` and `X6..X10 ~ N(10, 5)` (variance 5). Outcomes carry no
//! noise term. The formulas are kept exactly as published, including SQ5 with
//! four squared terms and AND5 with four indicators divided by five.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;

pub const N_PREDICTORS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SimFunction {
    #[serde(rename = "SUM1")]
    Sum1,
    #[serde(rename = "SUM3")]
    Sum3,
    #[serde(rename = "SUM5")]
    Sum5,
    #[serde(rename = "SQ1")]
    Sq1,
    #[serde(rename = "SQ3")]
    Sq3,
    #[serde(rename = "SQ5")]
    Sq5,
    #[serde(rename = "OR1")]
    Or1,
    #[serde(rename = "OR3")]
    Or3,
    #[serde(rename = "OR5")]
    Or5,
    #[serde(rename = "AND3")]
    And3,
    #[serde(rename = "AND5")]
    And5,
}

fn ind(cond: bool) -> f64 {
    if cond {
        1.0
    } else {
        0.0
    }
}

impl SimFunction {
    pub const ALL: [SimFunction; 11] = [
        SimFunction::Sum1,
        SimFunction::Sum3,
        SimFunction::Sum5,
        SimFunction::Sq1,
        SimFunction::Sq3,
        SimFunction::Sq5,
        SimFunction::Or1,
        SimFunction::Or3,
        SimFunction::Or5,
        SimFunction::And3,
        SimFunction::And5,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SimFunction::Sum1 => "SUM1",
            SimFunction::Sum3 => "SUM3",
            SimFunction::Sum5 => "SUM5",
            SimFunction::Sq1 => "SQ1",
            SimFunction::Sq3 => "SQ3",
            SimFunction::Sq5 => "SQ5",
            SimFunction::Or1 => "OR1",
            SimFunction::Or3 => "OR3",
            SimFunction::Or5 => "OR5",
            SimFunction::And3 => "AND3",
            SimFunction::And5 => "AND5",
        }
    }

    /// Position in the canonical table order.
    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&f| f == self).expect("listed")
    }

    /// Zero-based predictor indices the function reads.
    pub fn used_variables(self) -> &'static [usize] {
        match self {
            SimFunction::Sum1 | SimFunction::Sq1 | SimFunction::Or1 => &[0],
            SimFunction::Sum3 | SimFunction::Sq3 | SimFunction::Or3 => &[0, 2, 4],
            SimFunction::Sum5 => &[0, 2, 4, 5, 6],
            SimFunction::Sq5 | SimFunction::And5 => &[0, 2, 4, 5],
            SimFunction::Or5 => &[0, 1, 2, 4, 5],
            SimFunction::And3 => &[0, 1, 2],
        }
    }

    /// Evaluates the outcome at `x` (length 10; `x[0]` is `X1`).
    pub fn apply(self, x: &[f64]) -> f64 {
        let &[x1, x2, x3, _, x5, x6, x7, _, _, _] = &x[..N_PREDICTORS] else {
            unreachable!("slice has exactly ten elements")
        };
        match self {
            SimFunction::Sum1 => x1,
            SimFunction::Sum3 => x1 + x3 + x5,
            SimFunction::Sum5 => x1 + x3 + x5 + x6 + x7,
            SimFunction::Sq1 => x1 * x1,
            SimFunction::Sq3 => x1 * x1 + x3 * x3 + x5 * x5,
            SimFunction::Sq5 => x1 * x1 + x3 * x3 + x5 * x5 + x6 * x6,
            SimFunction::Or1 => ind(x1 > 0.4),
            SimFunction::Or3 => ind(x1 > 0.4) * ind(x3 > 0.6) * ind(x5 > 0.4),
            SimFunction::Or5 => {
                ind(x1 > 0.4) * ind(x2 > 0.6) * ind(x3 > 0.4) * ind(x5 > 0.4) * ind(x6 > 6.0)
            }
            SimFunction::And3 => (ind(x1 > 0.4) + ind(x2 > 0.6) + ind(x3 > 0.4)) / 3.0,
            SimFunction::And5 => {
                (ind(x1 > 0.4) + ind(x3 > 0.6) + ind(x5 > 0.4) + ind(x6 > 6.0)) / 5.0
            }
        }
    }

    fn valid_names() -> String {
        Self::ALL.map(Self::name).join(", ")
    }
}

impl fmt::Display for SimFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SimFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownSimulation {
                name: s.to_owned(),
                valid: Self::valid_names(),
            })
    }
}

/// Evaluates the named outcome function.
pub fn apply_function(name: &str, x: &[f64]) -> Result<f64> {
    let f: SimFunction = name.parse()?;
    if x.len() != N_PREDICTORS {
        return Err(Error::DimensionMismatch {
            expected: N_PREDICTORS,
            got: x.len(),
        });
    }
    Ok(f.apply(x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub function: SimFunction,
    pub n: usize,
    pub seed: u64,
}

impl SimulationSpec {
    pub fn new(function: SimFunction, n: usize, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::param("simulated datasets need n >= 2"));
        }
        Ok(Self { function, n, seed })
    }
}

/// `n` rows of the ten predictors, drawn row by row.
pub fn gen_predictors<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let low = Normal::new(0.0, 1.0).expect("valid normal");
    let high = Normal::new(10.0, 5f64.sqrt()).expect("valid normal");
    (0..n)
        .map(|_| {
            (0..N_PREDICTORS)
                .map(|j| {
                    if j < 5 {
                        low.sample(rng)
                    } else {
                        high.sample(rng)
                    }
                })
                .collect()
        })
        .collect()
}

pub fn predictor_names() -> Vec<String> {
    (1..=N_PREDICTORS).map(|j| format!("x{j}")).collect()
}

pub fn gen_dataset(spec: &SimulationSpec) -> Dataset {
    let rows = gen_predictors(spec.n, &mut rng::seeded(spec.seed));
    let y = rows.iter().map(|x| spec.function.apply(x)).collect();
    Dataset::from_rows(&rows, y).expect("generated data is finite and rectangular")
}
