//! Bootstrap and subsample resamples, represented as per-observation counts.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleMode {
    /// `n` draws with replacement.
    Bootstrap,
    /// `s` draws without replacement.
    Subsample,
}

impl ResampleMode {
    pub const ALL: [ResampleMode; 2] = [ResampleMode::Bootstrap, ResampleMode::Subsample];

    pub fn as_str(self) -> &'static str {
        match self {
            ResampleMode::Bootstrap => "bootstrap",
            ResampleMode::Subsample => "subsample",
        }
    }
}

impl fmt::Display for ResampleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ResampleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bootstrap" => Ok(ResampleMode::Bootstrap),
            "subsample" => Ok(ResampleMode::Subsample),
            other => Err(Error::param(format!(
                "unknown resample mode '{other}' (expected bootstrap or subsample)"
            ))),
        }
    }
}

/// How many times each training observation appears in one resample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResampleCounts {
    counts: Vec<u32>,
    mode: ResampleMode,
    size: usize,
}

impl ResampleCounts {
    /// Wraps an explicit count vector after checking the mode invariant:
    /// bootstrap counts sum to `n`; subsample counts are 0/1 and sum to `size`.
    pub fn from_counts(counts: Vec<u32>, mode: ResampleMode, size: usize) -> Result<Self> {
        let rc = Self { counts, mode, size };
        rc.validate()?;
        Ok(rc)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.counts.len();
        if n == 0 {
            return Err(Error::param("resample over zero observations"));
        }
        let total = self.total();
        match self.mode {
            ResampleMode::Bootstrap => {
                if self.size != n || total != n as u64 {
                    return Err(Error::InvalidData(format!(
                        "bootstrap counts must sum to n = {n} (size {}, sum {total})",
                        self.size
                    )));
                }
            }
            ResampleMode::Subsample => {
                if self.size == 0 || self.size > n {
                    return Err(Error::InvalidData(format!(
                        "subsample size {} outside 1..={n}",
                        self.size
                    )));
                }
                if self.counts.iter().any(|&c| c > 1) || total != self.size as u64 {
                    return Err(Error::InvalidData(format!(
                        "subsample counts must be 0/1 summing to {} (sum {total})",
                        self.size
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn mode(&self) -> ResampleMode {
        self.mode
    }

    /// Intended resample size `s` (equal to `n` for bootstrap).
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn n(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    /// Number of observations drawn at least once.
    pub fn distinct(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Every observation with weight one.
    pub fn unit(n: usize) -> Self {
        Self {
            counts: vec![1; n],
            mode: ResampleMode::Subsample,
            size: n,
        }
    }
}

/// Tallies `n` uniform draws with replacement from `0..n`.
pub fn bootstrap_counts<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<ResampleCounts> {
    if n == 0 {
        return Err(Error::param("bootstrap needs n >= 1"));
    }
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1;
    }
    Ok(ResampleCounts {
        counts,
        mode: ResampleMode::Bootstrap,
        size: n,
    })
}

/// Marks `s` indices chosen uniformly without replacement from `0..n`.
pub fn subsample_counts<R: Rng + ?Sized>(n: usize, s: usize, rng: &mut R) -> Result<ResampleCounts> {
    if s == 0 || s > n {
        return Err(Error::param(format!("subsample size {s} outside 1..={n}")));
    }
    let mut counts = vec![0u32; n];
    for i in rand::seq::index::sample(rng, n, s) {
        counts[i] = 1;
    }
    Ok(ResampleCounts {
        counts,
        mode: ResampleMode::Subsample,
        size: s,
    })
}

pub fn draw_counts<R: Rng + ?Sized>(
    mode: ResampleMode,
    n: usize,
    s: usize,
    rng: &mut R,
) -> Result<ResampleCounts> {
    match mode {
        ResampleMode::Bootstrap => bootstrap_counts(n, rng),
        ResampleMode::Subsample => subsample_counts(n, s, rng),
    }
}

/// `n^0.7` rounded to the nearest integer (halves round up).
pub fn default_subsample_size(n: usize) -> usize {
    ((n as f64).powf(0.7) + 0.5).floor() as usize
}
