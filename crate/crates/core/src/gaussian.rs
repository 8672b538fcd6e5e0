//! Multivariate normal priors and random-walk proposals.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::theta::ThetaVector;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMvNormal", into = "RawMvNormal")]
pub struct MvNormal {
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
    /// Lower Cholesky factor, row-major.
    chol: Vec<f64>,
    log_norm: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMvNormal {
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
}

impl TryFrom<RawMvNormal> for MvNormal {
    type Error = Error;

    fn try_from(raw: RawMvNormal) -> Result<Self> {
        MvNormal::new(raw.mean, raw.covariance)
    }
}

impl From<MvNormal> for RawMvNormal {
    fn from(m: MvNormal) -> Self {
        RawMvNormal {
            mean: m.mean,
            covariance: m.covariance,
        }
    }
}

pub type PriorSpec = MvNormal;

impl MvNormal {
    pub fn new(mean: Vec<f64>, covariance: Vec<Vec<f64>>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::invalid("normal distribution needs dimension >= 1"));
        }
        Error::check_dim(d, covariance.len())?;
        for row in &covariance {
            Error::check_dim(d, row.len())?;
        }
        for i in 0..d {
            for j in 0..i {
                if (covariance[i][j] - covariance[j][i]).abs()
                    > 1e-12 * (covariance[i][j].abs() + covariance[j][i].abs()).max(1.0)
                {
                    return Err(Error::invalid("covariance is not symmetric"));
                }
            }
        }
        if mean.iter().chain(covariance.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("normal distribution parameters".into()));
        }
        let m = DMatrix::from_fn(d, d, |i, j| covariance[i][j]);
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::invalid("covariance is not positive definite"))?;
        let l = chol.l();
        let log_det: f64 = 2.0 * (0..d).map(|i| l[(i, i)].ln()).sum::<f64>();
        let chol_rows = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| l[(i, j)]).collect();
        Ok(MvNormal {
            mean,
            covariance,
            chol: chol_rows,
            log_norm: -0.5 * (d as f64 * LN_2PI + log_det),
        })
    }

    /// `N(0, variance · I)`.
    pub fn isotropic(dim: usize, variance: f64) -> Result<Self> {
        Self::diagonal(vec![0.0; dim], vec![variance; dim])
    }

    pub fn diagonal(mean: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        Error::check_dim(mean.len(), variances.len())?;
        let d = variances.len();
        let cov = (0..d)
            .map(|i| (0..d).map(|j| if i == j { variances[i] } else { 0.0 }).collect())
            .collect();
        Self::new(mean, cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &[Vec<f64>] {
        &self.covariance
    }

    pub fn marginal_sd(&self, k: usize) -> f64 {
        self.covariance[k][k].sqrt()
    }

    /// Solves `L y = (x − μ)` and returns `y`.
    fn whiten(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut y = vec![0.0; d];
        for i in 0..d {
            let mut s = x[i] - self.mean[i];
            for j in 0..i {
                s -= self.chol[i * d + j] * y[j];
            }
            y[i] = s / self.chol[i * d + i];
        }
        y
    }

    /// Squared Mahalanobis distance from the mean.
    pub fn mahalanobis_sq(&self, x: &[f64]) -> Result<f64> {
        Error::check_dim(self.dim(), x.len())?;
        Ok(self.whiten(x).iter().map(|v| v * v).sum())
    }

    /// Full log density, normalising constant included.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        Ok(self.log_norm - 0.5 * self.mahalanobis_sq(x)?)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        (0..d)
            .map(|i| self.mean[i] + (0..=i).map(|j| self.chol[i * d + j] * z[j]).sum::<f64>())
            .collect()
    }

    pub fn sample_theta<R: Rng + ?Sized>(&self, rng: &mut R) -> ThetaVector {
        ThetaVector::new(self.sample(rng)).expect("normal draws are finite")
    }
}

/// Symmetric Gaussian random walk `θ' ~ N(θ, Σ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProposal", into = "RawProposal")]
pub struct ProposalSpec {
    step: MvNormal,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProposal {
    covariance: Vec<Vec<f64>>,
}

impl TryFrom<RawProposal> for ProposalSpec {
    type Error = Error;

    fn try_from(raw: RawProposal) -> Result<Self> {
        ProposalSpec::new(raw.covariance)
    }
}

impl From<ProposalSpec> for RawProposal {
    fn from(p: ProposalSpec) -> Self {
        RawProposal {
            covariance: p.step.covariance,
        }
    }
}

impl ProposalSpec {
    pub fn new(covariance: Vec<Vec<f64>>) -> Result<Self> {
        let d = covariance.len();
        Ok(ProposalSpec {
            step: MvNormal::new(vec![0.0; d], covariance)?,
        })
    }

    /// `N(θ, sd² I)`.
    pub fn isotropic(dim: usize, sd: f64) -> Result<Self> {
        Ok(ProposalSpec {
            step: MvNormal::isotropic(dim, sd * sd)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.step.dim()
    }

    pub fn covariance(&self) -> &[Vec<f64>] {
        self.step.covariance()
    }

    /// Covariance multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let cov = self
            .step
            .covariance()
            .iter()
            .map(|row| row.iter().map(|v| v * factor).collect())
            .collect();
        ProposalSpec::new(cov)
    }

    pub fn propose<R: Rng + ?Sized>(&self, theta: &ThetaVector, rng: &mut R) -> Result<ThetaVector> {
        Error::check_dim(self.dim(), theta.len())?;
        let step = self.step.sample(rng);
        ThetaVector::new(theta.iter().zip(step).map(|(t, s)| t + s).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use approx::assert_abs_diff_eq;

    #[test]
    fn standard_normal_mode() {
        let n = MvNormal::isotropic(3, 1.0).unwrap();
        assert_abs_diff_eq!(n.log_density(&[0.0; 3]).unwrap(), -2.756815, epsilon = 1e-6);
        assert_abs_diff_eq!(
            n.log_density(&[1.0, 0.0, 0.0]).unwrap(),
            -2.756815 - 0.5,
            epsilon = 1e-6
        );
    }

    #[test]
    fn wide_prior_difference() {
        let n = MvNormal::isotropic(3, 10.0).unwrap();
        let a = [1.0, -2.0, 0.5];
        let b = [0.3, 0.0, 3.0];
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        assert_abs_diff_eq!(
            n.log_density(&a).unwrap() - n.log_density(&b).unwrap(),
            -(sq(&a) - sq(&b)) / 20.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn correlated_density_matches_closed_form() {
        let n = MvNormal::new(vec![1.0, -1.0], vec![vec![2.0, 0.6], vec![0.6, 1.0]]).unwrap();
        let x = [0.2, 0.4];
        let det: f64 = 2.0 * 1.0 - 0.36;
        let (dx, dy) = (x[0] - 1.0, x[1] + 1.0);
        let quad = (1.0 * dx * dx - 2.0 * 0.6 * dx * dy + 2.0 * dy * dy) / det;
        let expect = -LN_2PI - 0.5 * det.ln() - 0.5 * quad;
        assert_abs_diff_eq!(n.log_density(&x).unwrap(), expect, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_covariance() {
        assert!(MvNormal::new(vec![0.0, 0.0], vec![vec![1.0, 2.0], vec![2.0, 1.0]]).is_err());
        assert!(MvNormal::new(vec![0.0, 0.0], vec![vec![1.0, 0.5], vec![0.0, 1.0]]).is_err());
        assert!(MvNormal::new(vec![0.0], vec![vec![1.0, 0.0]]).is_err());
        assert!(MvNormal::isotropic(2, 1.0).unwrap().log_density(&[0.0]).is_err());
    }

    #[test]
    fn sample_moments() {
        let n = MvNormal::new(vec![1.0, -2.0], vec![vec![4.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let mut rng = rng_from_seed(1);
        let draws: Vec<_> = (0..100_000).map(|_| n.sample(&mut rng)).collect();
        let m0 = draws.iter().map(|d| d[0]).sum::<f64>() / draws.len() as f64;
        let c01 = draws.iter().map(|d| (d[0] - 1.0) * (d[1] + 2.0)).sum::<f64>() / draws.len() as f64;
        assert_abs_diff_eq!(m0, 1.0, epsilon = 0.03);
        assert_abs_diff_eq!(c01, 1.0, epsilon = 0.05);
    }

    #[test]
    fn serde_roundtrip() {
        let p = ProposalSpec::isotropic(2, 0.1).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<ProposalSpec>(&s).unwrap(), p);
        let n: MvNormal =
            serde_json::from_str(r#"{"mean":[0,0],"covariance":[[10,0],[0,10]]}"#).unwrap();
        assert_eq!(n, MvNormal::isotropic(2, 10.0).unwrap());
    }
}
