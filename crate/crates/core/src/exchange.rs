//! Exchange algorithm for the doubly intractable ERGM posterior.
//!
//! Each step proposes `θ' ~ N(θ, Σ)`, simulates an auxiliary network
//! `y' ~ ERGM(θ')` and accepts with log ratio
//!
//! ```text
//! (θ' − θ)·(h(y_obs) − h(y')) + log π(θ') − log π(θ)
//! ```
//!
//! in which both normalising constants cancel.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{PriorSpec, ProposalSpec};
use crate::graph::Graph;
use crate::rng::{item_seed, rng_from_seed, SimRng};
use crate::sim::{simulate_network_with_rng, SimConfig};
use crate::stats::{summary_stats, SummaryStats};
use crate::theta::ThetaVector;

/// Where each auxiliary simulation starts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuxInit {
    /// From `sim.init` every time, so auxiliary draws are independent.
    #[default]
    Fresh,
    /// From the previous auxiliary network.
    Reuse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExchangeConfig {
    /// Total exchange steps `T`.
    pub iterations: usize,
    pub burn_in: usize,
    pub proposal: ProposalSpec,
    #[serde(default)]
    pub aux_init: AuxInit,
    /// Tune the proposal scale during burn-in towards ~25% acceptance.
    #[serde(default)]
    pub adaptive: bool,
}

impl ExchangeConfig {
    /// Burn-in 1,000 then 6,000 retained samples, `Σ = 0.1² I`.
    pub fn with_defaults(dim: usize) -> Result<Self> {
        Ok(ExchangeConfig {
            iterations: 7_000,
            burn_in: 1_000,
            proposal: ProposalSpec::isotropic(dim, 0.1)?,
            aux_init: AuxInit::Fresh,
            adaptive: false,
        })
    }
}

/// Log acceptance ratio of the exchange move `θ → θ'`.
pub fn exchange_log_ratio(
    theta: &ThetaVector,
    proposed: &ThetaVector,
    x_obs: &SummaryStats,
    x_aux: &SummaryStats,
    prior: &PriorSpec,
) -> Result<f64> {
    let p = theta.len();
    for d in [proposed.len(), x_obs.len(), x_aux.len(), prior.dim()] {
        Error::check_dim(p, d)?;
    }
    let data: f64 = (0..p)
        .map(|k| (proposed[k] - theta[k]) * (x_obs[k] - x_aux[k]))
        .sum();
    Ok(data + prior.log_density(proposed)? - prior.log_density(theta)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub theta: ThetaVector,
    pub accepted: bool,
}

/// Stateful single-chain sampler; holds the auxiliary network when reused.
pub struct ExchangeSampler<'a> {
    x_obs: &'a SummaryStats,
    prior: &'a PriorSpec,
    proposal: ProposalSpec,
    sim: &'a SimConfig,
    aux_init: AuxInit,
    aux: Option<Graph>,
}

impl<'a> ExchangeSampler<'a> {
    pub fn new(
        x_obs: &'a SummaryStats,
        prior: &'a PriorSpec,
        proposal: ProposalSpec,
        sim: &'a SimConfig,
        aux_init: AuxInit,
    ) -> Result<Self> {
        sim.validate()?;
        let p = sim.dim();
        for d in [x_obs.len(), prior.dim(), proposal.dim()] {
            Error::check_dim(p, d)?;
        }
        Ok(ExchangeSampler {
            x_obs,
            prior,
            proposal,
            sim,
            aux_init,
            aux: None,
        })
    }

    pub fn step<R: Rng + ?Sized>(&mut self, theta: &ThetaVector, rng: &mut R) -> Result<StepOutcome> {
        let proposed = self.proposal.propose(theta, rng)?;
        let start = match self.aux_init {
            AuxInit::Fresh => None,
            AuxInit::Reuse => self.aux.take(),
        };
        let y_aux = simulate_network_with_rng(&proposed, self.sim, start, rng)?;
        let x_aux = summary_stats(&y_aux, &self.sim.stats);
        if self.aux_init == AuxInit::Reuse {
            self.aux = Some(y_aux);
        }
        let log_ratio = exchange_log_ratio(theta, &proposed, self.x_obs, &x_aux, self.prior)?;
        let accepted = log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio;
        Ok(StepOutcome {
            theta: if accepted { proposed } else { theta.clone() },
            accepted,
        })
    }
}

/// One exchange step with a fresh auxiliary simulation.
pub fn exchange_step<R: Rng + ?Sized>(
    theta: &ThetaVector,
    x_obs: &SummaryStats,
    prior: &PriorSpec,
    proposal: &ProposalSpec,
    sim: &SimConfig,
    rng: &mut R,
) -> Result<StepOutcome> {
    ExchangeSampler::new(x_obs, prior, proposal.clone(), sim, AuxInit::Fresh)?.step(theta, rng)
}

/// `samples[0]` is the initial prior draw; `samples[t]` the state after step
/// `t`. Downstream summaries use `samples[burn_in + 1..]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorChain {
    pub samples: Vec<ThetaVector>,
    pub accepted: Vec<bool>,
    pub burn_in: usize,
}

impl PosteriorChain {
    pub fn acceptance_rate(&self) -> f64 {
        if self.accepted.is_empty() {
            return 0.0;
        }
        self.accepted.iter().filter(|&&a| a).count() as f64 / self.accepted.len() as f64
    }

    pub fn post_burn_in(&self) -> &[ThetaVector] {
        &self.samples[(self.burn_in + 1).min(self.samples.len())..]
    }

    pub fn mean(&self) -> Vec<f64> {
        coordinate_mean(self.post_burn_in())
    }

    pub fn sd(&self) -> Vec<f64> {
        coordinate_sd(self.post_burn_in())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let p = self.samples.first().map_or(0, |s| s.len());
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<String> = std::iter::once("step".to_string())
            .chain((1..=p).map(|k| format!("theta_{k}")))
            .chain(std::iter::once("accepted".to_string()))
            .collect();
        w.write_record(&header)?;
        for (t, s) in self.samples.iter().enumerate() {
            let acc = t.checked_sub(1).is_some_and(|k| self.accepted[k]);
            let row: Vec<String> = std::iter::once(t.to_string())
                .chain(s.iter().map(|v| v.to_string()))
                .chain(std::iter::once(u8::from(acc).to_string()))
                .collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn coordinate_mean(samples: &[ThetaVector]) -> Vec<f64> {
    let Some(first) = samples.first() else {
        return Vec::new();
    };
    let mut m = vec![0.0; first.len()];
    for s in samples {
        for (a, v) in m.iter_mut().zip(s.iter()) {
            *a += v;
        }
    }
    m.iter_mut().for_each(|a| *a /= samples.len() as f64);
    m
}

pub(crate) fn coordinate_sd(samples: &[ThetaVector]) -> Vec<f64> {
    let m = coordinate_mean(samples);
    let denom = (samples.len().max(2) - 1) as f64;
    (0..m.len())
        .map(|k| {
            (samples.iter().map(|s| (s[k] - m[k]).powi(2)).sum::<f64>() / denom).sqrt()
        })
        .collect()
}

/// Runs one chain of `cfg.iterations` steps from a prior draw.
pub fn run_exchange(
    x_obs: &SummaryStats,
    prior: &PriorSpec,
    cfg: &ExchangeConfig,
    sim: &SimConfig,
    seed: u64,
) -> Result<PosteriorChain> {
    let mut rng = rng_from_seed(seed);
    run_exchange_with_rng(x_obs, prior, cfg, sim, &mut rng)
}

pub fn run_exchange_with_rng(
    x_obs: &SummaryStats,
    prior: &PriorSpec,
    cfg: &ExchangeConfig,
    sim: &SimConfig,
    rng: &mut SimRng,
) -> Result<PosteriorChain> {
    if cfg.iterations <= cfg.burn_in {
        return Err(Error::invalid(format!(
            "iterations ({}) must exceed burn_in ({})",
            cfg.iterations, cfg.burn_in
        )));
    }
    let mut sampler = ExchangeSampler::new(x_obs, prior, cfg.proposal.clone(), sim, cfg.aux_init)?;
    let mut theta = prior.sample_theta(rng);
    let mut samples = Vec::with_capacity(cfg.iterations + 1);
    let mut accepted = Vec::with_capacity(cfg.iterations);
    samples.push(theta.clone());

    const WINDOW: usize = 50;
    let mut window_accepts = 0usize;
    for t in 0..cfg.iterations {
        let out = sampler.step(&theta, rng)?;
        window_accepts += usize::from(out.accepted);
        accepted.push(out.accepted);
        theta = out.theta;
        samples.push(theta.clone());

        if cfg.adaptive && t < cfg.burn_in && (t + 1) % WINDOW == 0 {
            let rate = window_accepts as f64 / WINDOW as f64;
            sampler.proposal = sampler.proposal.scaled((2.0 * (rate - 0.25)).exp())?;
            window_accepts = 0;
        }
    }
    Ok(PosteriorChain {
        samples,
        accepted,
        burn_in: cfg.burn_in,
    })
}

/// Independent chains, one per observation, seeded `item_seed(seed, m)`.
pub fn run_exchange_chains(
    observations: &[SummaryStats],
    prior: &PriorSpec,
    cfg: &ExchangeConfig,
    sim: &SimConfig,
    seed: u64,
) -> Result<Vec<PosteriorChain>> {
    observations
        .par_iter()
        .enumerate()
        .map(|(m, x)| run_exchange(x, prior, cfg, sim, item_seed(seed, m as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::StatsConfig;
    use approx::assert_abs_diff_eq;

    fn theta(v: &[f64]) -> ThetaVector {
        ThetaVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn identical_proposal_has_unit_ratio() {
        let prior = PriorSpec::isotropic(3, 10.0).unwrap();
        let t = theta(&[0.3, -0.2, 1.0]);
        let x = SummaryStats::new(vec![4.0, 2.0, 1.0]);
        let x_aux = SummaryStats::new(vec![9.0, 0.0, 3.0]);
        assert_eq!(exchange_log_ratio(&t, &t, &x, &x_aux, &prior).unwrap(), 0.0);
    }

    #[test]
    fn equal_statistics_leave_prior_ratio() {
        let prior = PriorSpec::isotropic(3, 10.0).unwrap();
        let a = theta(&[0.3, -0.2, 1.0]);
        let b = theta(&[1.3, 0.2, -1.0]);
        let x = SummaryStats::new(vec![4.0, 2.0, 1.0]);
        let r = exchange_log_ratio(&a, &b, &x, &x, &prior).unwrap();
        let expect = prior.log_density(&b).unwrap() - prior.log_density(&a).unwrap();
        assert_abs_diff_eq!(r, expect, epsilon = 1e-14);
    }

    #[test]
    fn ratio_invariant_to_prior_offset() {
        // Adding a constant to both log-prior terms leaves the ratio unchanged.
        let p1 = PriorSpec::isotropic(1, 4.0).unwrap();
        let a = theta(&[0.1]);
        let b = theta(&[0.7]);
        let x = SummaryStats::new(vec![3.0]);
        let xa = SummaryStats::new(vec![5.0]);
        let r = exchange_log_ratio(&a, &b, &x, &xa, &p1).unwrap();
        let la = p1.log_density(&a).unwrap() + 17.0;
        let lb = p1.log_density(&b).unwrap() + 17.0;
        assert_abs_diff_eq!(r, (0.6 * -2.0) + lb - la, epsilon = 1e-12);
    }

    #[test]
    fn chain_shapes_and_errors() {
        let sim = SimConfig::new(5, StatsConfig::edges_only()).with_iterations(100);
        let prior = PriorSpec::isotropic(1, 10.0).unwrap();
        let x = SummaryStats::new(vec![5.0]);
        let mut cfg = ExchangeConfig::with_defaults(1).unwrap();
        cfg.iterations = 1;
        cfg.burn_in = 0;
        let chain = run_exchange(&x, &prior, &cfg, &sim, 1).unwrap();
        assert_eq!(chain.samples.len(), 2);
        assert_eq!(chain.accepted.len(), 1);
        assert_eq!(chain.post_burn_in().len(), 1);

        cfg.burn_in = 1;
        assert!(run_exchange(&x, &prior, &cfg, &sim, 1).is_err());
    }

    #[test]
    fn chains_are_deterministic() {
        let sim = SimConfig::new(5, StatsConfig::default()).with_iterations(100);
        let prior = PriorSpec::isotropic(3, 10.0).unwrap();
        let x = SummaryStats::new(vec![5.0, 3.0, 4.0]);
        let mut cfg = ExchangeConfig::with_defaults(3).unwrap();
        cfg.iterations = 200;
        cfg.burn_in = 50;
        cfg.aux_init = AuxInit::Reuse;
        cfg.adaptive = true;
        let a = run_exchange(&x, &prior, &cfg, &sim, 9).unwrap();
        let b = run_exchange(&x, &prior, &cfg, &sim, 9).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a.acceptance_rate()));
    }

    #[test]
    fn csv_layout() {
        let chain = PosteriorChain {
            samples: vec![theta(&[0.5]), theta(&[1.0])],
            accepted: vec![true],
            burn_in: 0,
        };
        let mut buf = Vec::new();
        chain.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "step,theta_1,accepted\n0,0.5,0\n1,1,1\n");
    }
}
