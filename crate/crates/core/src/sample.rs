//! Sample containers and basic empirical statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SampleError {
    #[error("sample is empty")]
    Empty,
    #[error("sample contains non-finite value at index {0}")]
    NonFinite(usize),
    #[error("replicate columns have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// A validated univariate sample: nonempty, all values finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Sample {
    values: Vec<f64>,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self, SampleError> {
        if values.is_empty() {
            return Err(SampleError::Empty);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SampleError::NonFinite(i));
        }
        Ok(Sample { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    /// Unbiased sample variance (n-1 denominator); 0 for a single point.
    pub fn variance(&self) -> f64 {
        variance(&self.values)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sorted(&self) -> Vec<f64> {
        let mut s = self.values.clone();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        s
    }
}

impl TryFrom<Vec<f64>> for Sample {
    type Error = SampleError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Sample::new(v)
    }
}

impl From<Sample> for Vec<f64> {
    fn from(s: Sample) -> Vec<f64> {
        s.values
    }
}

/// Two aligned columns of replicated measurements of the same latent values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicates {
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Replicates {
    pub fn new(first: Vec<f64>, second: Vec<f64>) -> Result<Self, SampleError> {
        if first.len() != second.len() {
            return Err(SampleError::LengthMismatch(first.len(), second.len()));
        }
        Sample::new(first.clone())?;
        Sample::new(second.clone())?;
        Ok(Replicates { first, second })
    }

    pub fn len(&self) -> usize {
        self.first.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> &[f64] {
        &self.first
    }

    pub fn second(&self) -> &[f64] {
        &self.second
    }

    pub fn first_sample(&self) -> Sample {
        Sample::new(self.first.clone()).expect("validated at construction")
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

/// Linear-interpolation sample quantile (R type 7) of a pre-sorted slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let p = p.clamp(0.0, 1.0);
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}
