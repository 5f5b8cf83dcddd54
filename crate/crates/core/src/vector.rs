//! Dense float32 embedding vectors and the handful of linear-algebra helpers
//! the rest of the crate needs. Accumulation is always done in f64.

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

/// Tolerance on `|‖v‖ − 1|` for a vector to count as unit norm.
pub const UNIT_NORM_TOL: f64 = 1e-4;

/// A fixed-length vector of channel activations.
///
/// Serializes as a JSON array of the values widened to f64, so a vector
/// written directly and one written through `serde_json::Value` produce the
/// same text.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "Vec<f32>")]
pub struct EmbeddingVector(Vec<f32>);

impl Serialize for EmbeddingVector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.0.iter().map(|&x| x as f64))
    }
}

impl TryFrom<Vec<f32>> for EmbeddingVector {
    type Error = Error;

    fn try_from(values: Vec<f32>) -> Result<Self> {
        Self::new(values)
    }
}

impl EmbeddingVector {
    /// Wraps raw values, rejecting empty or non-finite input.
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty vector".into()));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteVector("<anonymous>".into()));
        }
        Ok(Self(values))
    }

    /// Wraps and scales to unit length.
    pub fn unit(values: Vec<f32>) -> Result<Self> {
        Self::new(values)?.normalized()
    }

    pub(crate) fn from_f64(values: &[f64]) -> Self {
        Self(values.iter().map(|&x| x as f32).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_NORM_TOL
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n < 1e-12 {
            return Err(Error::InvalidArgument(
                "cannot normalize a zero vector".into(),
            ));
        }
        Ok(Self(
            self.0.iter().map(|&x| (x as f64 / n) as f32).collect(),
        ))
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|&x| -x).collect())
    }

    pub fn cosine(&self, other: &Self) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::dim(self.dim(), other.dim()));
        }
        Ok(cosine(&self.0, &other.0))
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&x| x as f64).collect()
    }
}

impl AsRef<[f32]> for EmbeddingVector {
    fn as_ref(&self) -> &[f32] {
        &self.0
    }
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub fn norm(a: &[f32]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_f64(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine similarity clamped to [-1, 1]; zero vectors give 0.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        return 0.0;
    }
    (dot(a, b) / denom).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nan_and_empty() {
        assert!(matches!(
            EmbeddingVector::new(vec![0.0, f32::NAN]),
            Err(Error::NonFiniteVector(_))
        ));
        assert!(EmbeddingVector::new(vec![]).is_err());
    }

    #[test]
    fn unit_has_unit_norm() {
        let v = EmbeddingVector::unit(vec![3.0, 4.0]).unwrap();
        assert!(v.is_unit());
        assert_eq!(v.as_slice(), &[0.6, 0.8]);
    }

    #[test]
    fn zero_vector_cannot_be_normalized() {
        assert!(EmbeddingVector::unit(vec![0.0; 3]).is_err());
    }

    #[test]
    fn cosine_range() {
        assert_eq!(cosine(&[1.0, 0.0], &[-2.0, 0.0]), -1.0);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
    }
}
