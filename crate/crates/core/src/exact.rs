//! Exact enumeration of all labelled graphs on `n <= 5` vertices.
//!
//! The table groups the `2^{n(n-1)/2}` graphs by statistics vector, so the
//! normaliser `c(θ) = Σ_y exp(θ·h(y))` becomes a short weighted sum. Used as
//! the ground-truth oracle for the sampler, the exchange algorithm and NPE.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::PriorSpec;
use crate::graph::Graph;
use crate::stats::{shared_partner_profile, summary_stats, StatKind, StatsConfig, SummaryStats};
use crate::theta::ThetaVector;

pub const MAX_EXACT_N: usize = 5;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExactEntry {
    pub stats: SummaryStats,
    pub multiplicity: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExactModel {
    n: usize,
    cfg: StatsConfig,
    table: Vec<ExactEntry>,
}

impl ExactModel {
    pub fn enumerate(n: usize, cfg: &StatsConfig) -> Result<Self> {
        if !(2..=MAX_EXACT_N).contains(&n) {
            return Err(Error::invalid(format!(
                "exact enumeration supports 2 <= n <= {MAX_EXACT_N}, got {n}"
            )));
        }
        let pairs = n * (n - 1) / 2;
        // Graphs with equal (edges, profiles) have bitwise equal statistics.
        let mut groups: BTreeMap<Vec<u64>, (SummaryStats, u64)> = BTreeMap::new();
        for mask in 0..(1u64 << pairs) {
            let g = Graph::from_pair_mask(n, mask);
            let profile = shared_partner_profile(&g);
            let mut key = vec![g.edge_count() as u64];
            key.extend(&profile.connected);
            key.extend(&profile.nonconnected);
            groups
                .entry(key)
                .or_insert_with(|| (summary_stats(&g, cfg), 0))
                .1 += 1;
        }
        let table = groups
            .into_values()
            .map(|(stats, multiplicity)| ExactEntry { stats, multiplicity })
            .collect();
        Ok(ExactModel {
            n,
            cfg: cfg.clone(),
            table,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn config(&self) -> &StatsConfig {
        &self.cfg
    }

    pub fn table(&self) -> &[ExactEntry] {
        &self.table
    }

    /// Errors unless the table was built for exactly `(n, cfg)`.
    pub fn ensure_matches(&self, n: usize, cfg: &StatsConfig) -> Result<()> {
        if self.n != n || &self.cfg != cfg {
            return Err(Error::invalid(format!(
                "exact table built for n = {} with {:?}, asked for n = {n} with {:?}",
                self.n, self.cfg, cfg
            )));
        }
        Ok(())
    }

    fn log_weights(&self, theta: &ThetaVector) -> Result<Vec<f64>> {
        if theta.len() != self.cfg.dim() {
            return Err(Error::invalid(format!(
                "theta has dimension {} but the exact table has {} statistics",
                theta.len(),
                self.cfg.dim()
            )));
        }
        self.table
            .iter()
            .map(|e| Ok((e.multiplicity as f64).ln() + theta.dot(&e.stats)?))
            .collect()
    }
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `log c(θ)`, via log-sum-exp over the table.
pub fn exact_log_normalizer(theta: &ThetaVector, model: &ExactModel) -> Result<f64> {
    Ok(log_sum_exp(&model.log_weights(theta)?))
}

pub fn exact_normalizer(theta: &ThetaVector, model: &ExactModel) -> Result<f64> {
    Ok(exact_log_normalizer(theta, model)?.exp())
}

/// Probability of each distinct statistics vector under `ERGM(θ)`.
pub fn exact_stat_distribution(
    theta: &ThetaVector,
    model: &ExactModel,
) -> Result<Vec<(SummaryStats, f64)>> {
    let lw = model.log_weights(theta)?;
    let log_c = log_sum_exp(&lw);
    Ok(model
        .table
        .iter()
        .zip(lw)
        .map(|(e, w)| (e.stats.clone(), (w - log_c).exp()))
        .collect())
}

/// Posterior of a one-parameter model on a uniform grid, normalised by the
/// trapezoid rule. The likelihood uses the exact normaliser.
#[derive(Clone, Debug)]
pub struct GridPosterior {
    grid: Vec<f64>,
    density: Vec<f64>,
    step: f64,
}

impl GridPosterior {
    pub fn new(
        model: &ExactModel,
        prior: &PriorSpec,
        x_obs: &SummaryStats,
        lo: f64,
        hi: f64,
        step: f64,
    ) -> Result<Self> {
        if model.cfg.dim() != 1 || prior.dim() != 1 || x_obs.len() != 1 {
            return Err(Error::invalid("grid posterior needs a one-parameter model"));
        }
        if !(hi > lo && step > 0.0) {
            return Err(Error::invalid("grid bounds must satisfy lo < hi and step > 0"));
        }
        let count = ((hi - lo) / step).round() as usize + 1;
        let grid: Vec<f64> = (0..count).map(|k| lo + k as f64 * step).collect();
        let log_post: Vec<f64> = grid
            .iter()
            .map(|&t| {
                let theta = ThetaVector::new(vec![t])?;
                Ok(t * x_obs[0] - exact_log_normalizer(&theta, model)? + prior.log_density(&[t])?)
            })
            .collect::<Result<_>>()?;
        let max = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let unnorm: Vec<f64> = log_post.iter().map(|l| (l - max).exp()).collect();
        let z = trapezoid(&unnorm, step);
        Ok(GridPosterior {
            grid,
            density: unnorm.iter().map(|u| u / z).collect(),
            step,
        })
    }

    /// Grid `[-4, 4]` with spacing 0.01.
    pub fn standard(model: &ExactModel, prior: &PriorSpec, x_obs: &SummaryStats) -> Result<Self> {
        Self::new(model, prior, x_obs, -4.0, 4.0, 0.01)
    }

    pub fn mean(&self) -> f64 {
        let f: Vec<f64> = self.grid.iter().zip(&self.density).map(|(t, d)| t * d).collect();
        trapezoid(&f, self.step)
    }

    pub fn sd(&self) -> f64 {
        let m = self.mean();
        let f: Vec<f64> = self
            .grid
            .iter()
            .zip(&self.density)
            .map(|(t, d)| (t - m) * (t - m) * d)
            .collect();
        trapezoid(&f, self.step).sqrt()
    }

    /// Draws from the piecewise-constant approximation of the density.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<ThetaVector> {
        let mut cdf = Vec::with_capacity(self.density.len());
        let mut acc = 0.0;
        for d in &self.density {
            acc += d;
            cdf.push(acc);
        }
        (0..count)
            .map(|_| {
                let u = rng.random::<f64>() * acc;
                let k = cdf.partition_point(|&c| c < u).min(self.grid.len() - 1);
                let jitter = (rng.random::<f64>() - 0.5) * self.step;
                ThetaVector::new(vec![self.grid[k] + jitter]).expect("finite grid point")
            })
            .collect()
    }
}

fn trapezoid(values: &[f64], step: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..values.len() - 1].iter().sum();
    step * (inner + 0.5 * (values[0] + values[values.len() - 1]))
}

/// Edges-only config used throughout the enumeration tests.
pub fn edges_only_model(n: usize) -> Result<ExactModel> {
    ExactModel::enumerate(n, &StatsConfig::new(crate::stats::DEFAULT_DECAY, vec![StatKind::Edges])?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn choose(n: u64, k: u64) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    #[test]
    fn multiplicities_cover_all_graphs() {
        for n in 2..=5 {
            let m = ExactModel::enumerate(n, &StatsConfig::default()).unwrap();
            let total: u64 = m.table().iter().map(|e| e.multiplicity).sum();
            assert_eq!(total, 1 << (n * (n - 1) / 2));
        }
        assert!(ExactModel::enumerate(6, &StatsConfig::default()).is_err());
    }

    #[test]
    fn normalizer_values() {
        let m3 = edges_only_model(3).unwrap();
        assert_abs_diff_eq!(exact_normalizer(&ThetaVector::zeros(1), &m3).unwrap(), 8.0, epsilon = 1e-12);
        let t = ThetaVector::new(vec![2f64.ln()]).unwrap();
        assert_abs_diff_eq!(exact_normalizer(&t, &m3).unwrap(), 27.0, epsilon = 1e-10);
        let m4 = ExactModel::enumerate(4, &StatsConfig::default()).unwrap();
        assert_abs_diff_eq!(exact_normalizer(&ThetaVector::zeros(3), &m4).unwrap(), 64.0, epsilon = 1e-10);
        assert!(exact_normalizer(&ThetaVector::zeros(1), &m4).is_err());
    }

    #[test]
    fn stat_distribution_is_binomial() {
        let m3 = edges_only_model(3).unwrap();
        for (theta, base, z) in [(0.0, 1.0f64, 8.0), (2f64.ln(), 2.0, 27.0)] {
            let dist = exact_stat_distribution(&ThetaVector::new(vec![theta]).unwrap(), &m3).unwrap();
            assert_abs_diff_eq!(dist.iter().map(|(_, p)| p).sum::<f64>(), 1.0, epsilon = 1e-12);
            for (s, p) in dist {
                let k = s[0] as u64;
                assert_abs_diff_eq!(p, choose(3, k) * base.powi(k as i32) / z, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn mismatched_config_detected() {
        let m = edges_only_model(4).unwrap();
        assert!(m.ensure_matches(4, &StatsConfig::default()).is_err());
        assert!(m.ensure_matches(5, m.config()).is_err());
        assert!(m.ensure_matches(4, &m.config().clone()).is_ok());
    }

    #[test]
    fn grid_posterior_flat_likelihood_recovers_prior() {
        // A huge prior sd puts the grid posterior close to the normalised likelihood.
        let m = edges_only_model(3).unwrap();
        let prior = PriorSpec::isotropic(1, 1e6).unwrap();
        let post = GridPosterior::new(&m, &prior, &SummaryStats::new(vec![1.5]), -8.0, 8.0, 0.001).unwrap();
        // Likelihood exp(1.5θ)/(1+e^θ)^3 is symmetric about 0.
        assert_abs_diff_eq!(post.mean(), 0.0, epsilon = 1e-6);
    }
}
