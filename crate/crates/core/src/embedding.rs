//! Dense embedding vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `| ||v|| - 1 |` for a vector to count as unit-norm.
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// A finite, non-empty real vector.
///
/// The unit-norm flag is derived from the values at construction time, so
/// it can never disagree with them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Embedding {
    values: Vec<f64>,
    unit: bool,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("embedding has no components"));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { id: None, index });
        }
        let unit = (l2_norm(&values) - 1.0).abs() <= UNIT_NORM_TOL;
        Ok(Self { values, unit })
    }

    /// Widens 32-bit storage values.
    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn is_unit(&self) -> bool {
        self.unit
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    pub fn normalized(&self) -> Result<Self> {
        normalize(&self.values)
    }

    pub fn dot(&self, other: &Embedding) -> Result<f64> {
        check_dims(self.dim(), other.dim())?;
        Ok(dot(&self.values, &other.values))
    }

    /// Cosine similarity; zero when either vector has zero norm.
    pub fn cosine(&self, other: &Embedding) -> Result<f64> {
        let d = self.dot(other)?;
        let denom = self.norm() * other.norm();
        Ok(if denom > 0.0 { d / denom } else { 0.0 })
    }
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Self {
        e.values
    }
}

/// Scales `v` to unit L2 norm.
pub fn normalize(v: &[f64]) -> Result<Embedding> {
    if v.is_empty() {
        return Err(Error::Empty("embedding has no components"));
    }
    if let Some(index) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { id: None, index });
    }
    let n = l2_norm(v);
    if n == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(Embedding {
        values: v.iter().map(|x| x / n).collect(),
        unit: true,
    })
}

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}
