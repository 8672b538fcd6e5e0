use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// ERGM natural parameters, one per enabled statistic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ThetaVector(Vec<f64>);

impl ThetaVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("theta entry {v}")));
        }
        Ok(ThetaVector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        ThetaVector(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &[f64]) -> Result<f64> {
        Error::check_dim(self.0.len(), other.len())?;
        Ok(self.0.iter().zip(other).map(|(a, b)| a * b).sum())
    }
}

impl Deref for ThetaVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ThetaVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        ThetaVector::new(v)
    }
}

impl From<ThetaVector> for Vec<f64> {
    fn from(t: ThetaVector) -> Self {
        t.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(ThetaVector::new(vec![0.0, f64::NAN]).is_err());
        assert!(ThetaVector::new(vec![f64::INFINITY]).is_err());
        assert!(serde_json::from_str::<ThetaVector>("[1.0, 2.0]").is_ok());
    }

    #[test]
    fn dot_checks_dimension() {
        let t = ThetaVector::new(vec![0.5, -1.0, 2.0]).unwrap();
        assert_eq!(t.dot(&[2.0, 1.0, 1.0]).unwrap(), 2.0);
        assert!(t.dot(&[1.0]).is_err());
    }
}
