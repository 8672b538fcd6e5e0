//! Amortised NPE and sequential NPE (atomic loss) on top of the MAF.
//!
//! Training is minibatch Adam on either the plain NLL or the atomic loss.
//! Minibatch gradients are split into fixed chunks evaluated in parallel and
//! summed in chunk order, so results do not depend on the thread count.

use ndarray::{Array1, Array2, Axis};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::TrainingSet;
use crate::error::{Error, Result};
use crate::exact::{log_sum_exp, ExactModel, GridPosterior};
use crate::exchange::{run_exchange, ExchangeConfig};
use crate::flow::{stack_rows, AdamState, FlowArchitecture, MafModel, Standardizer};
use crate::gaussian::PriorSpec;
use crate::harness::point_estimate;
use crate::rng::{derive_seed, rng_from_seed, SimRng};
use crate::sim::{simulate_stats, simulate_stats_batch, SimConfig};
use crate::stats::SummaryStats;
use crate::theta::ThetaVector;

/// Rows per parallel gradient task.
const CHUNK_ROWS: usize = 128;
/// Support box half-width, in prior marginal sds.
pub const SUPPORT_BOX_SDS: f64 = 6.0;
/// Rejection fraction above which sampling reports leakage.
pub const MAX_REJECTION: f64 = 0.99;

const TAG_SPLIT: u64 = 1;
const TAG_INIT: u64 = 2;
const TAG_PRIOR: u64 = 3;
const TAG_VALIDATION: u64 = 4;
const TAG_ROUND: u64 = 1_000;
const TAG_DIAGNOSTIC: u64 = 2_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NpeConfig {
    /// Pairs simulated per round (`B`).
    pub num_pairs: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub validation_fraction: f64,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub num_transforms: usize,
    pub hidden_units: usize,
    pub hidden_layers: usize,
}

impl Default for NpeConfig {
    fn default() -> Self {
        NpeConfig {
            num_pairs: 50_000,
            epochs: 200,
            batch_size: 256,
            learning_rate: 5e-4,
            validation_fraction: 0.1,
            early_stop_patience: 20,
            seed: 0,
            num_transforms: 5,
            hidden_units: 50,
            hidden_layers: 2,
        }
    }
}

impl NpeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.num_pairs < self.batch_size {
            return Err(Error::invalid(format!(
                "need num_pairs >= batch_size >= 1, got {} and {}",
                self.num_pairs, self.batch_size
            )));
        }
        if !(0.0..=0.5).contains(&self.validation_fraction) {
            return Err(Error::invalid("validation_fraction must lie in [0, 0.5]"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        self.architecture(1, 1).validate()
    }

    pub fn architecture(&self, p: usize, context_dim: usize) -> FlowArchitecture {
        FlowArchitecture {
            p,
            context_dim,
            num_transforms: self.num_transforms,
            hidden_units: self.hidden_units,
            hidden_layers: self.hidden_layers,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnpeConfig {
    pub npe: NpeConfig,
    pub rounds: usize,
    #[serde(default = "default_atoms")]
    pub atoms_per_batch: usize,
    pub x_obs: SummaryStats,
    /// Posterior draws at `x_obs` summarised after every round.
    #[serde(default = "default_diagnostic_draws")]
    pub diagnostic_draws: usize,
    /// Posterior-predictive simulations per round; 0 skips them.
    #[serde(default)]
    pub predictive_draws: usize,
}

fn default_atoms() -> usize {
    10
}

fn default_diagnostic_draws() -> usize {
    2_000
}

impl SnpeConfig {
    pub fn new(npe: NpeConfig, rounds: usize, x_obs: SummaryStats) -> Self {
        SnpeConfig {
            npe,
            rounds,
            atoms_per_batch: default_atoms(),
            x_obs,
            diagnostic_draws: default_diagnostic_draws(),
            predictive_draws: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.npe.validate()?;
        if self.rounds == 0 {
            return Err(Error::invalid("rounds must be >= 1"));
        }
        if self.atoms_per_batch < 2 || self.atoms_per_batch > self.npe.batch_size {
            return Err(Error::invalid(format!(
                "need 2 <= atoms_per_batch <= batch_size, got {}",
                self.atoms_per_batch
            )));
        }
        if self.diagnostic_draws == 0 {
            return Err(Error::invalid("diagnostic_draws must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Mean training loss per epoch.
    pub train_loss: Vec<f64>,
    /// Validation loss before training, then after each epoch.
    pub validation_loss: Vec<f64>,
    /// Index into `validation_loss` of the returned parameters.
    pub best_epoch: usize,
}

impl TrainingReport {
    pub fn initial_validation_loss(&self) -> f64 {
        self.validation_loss[0]
    }

    pub fn best_validation_loss(&self) -> f64 {
        self.validation_loss[self.best_epoch]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundDiagnostics {
    /// 1-based round number.
    pub round: usize,
    /// Cumulative training pairs after this round.
    pub n_pairs: usize,
    pub training: TrainingReport,
    pub posterior_mean: Vec<f64>,
    pub posterior_sd: Vec<f64>,
    /// Rejection fraction of the support-box check at `x_obs`.
    pub leakage: f64,
    pub predictive_mean: Option<Vec<f64>>,
}

/// θ from the prior, one simulated `x` per θ, round 0. Draws are seeded from
/// `sim.seed`.
pub fn simulate_prior_round(prior: &PriorSpec, count: usize, sim: &SimConfig) -> Result<TrainingSet> {
    if count == 0 {
        return Err(Error::invalid("prior round needs at least one pair"));
    }
    Error::check_dim(sim.dim(), prior.dim())?;
    let mut rng = rng_from_seed(derive_seed(sim.seed, TAG_PRIOR));
    let thetas: Vec<ThetaVector> = (0..count).map(|_| prior.sample_theta(&mut rng)).collect();
    simulate_stats_batch(&thetas, sim)
}

#[derive(Clone, Copy)]
enum Loss {
    Nll,
    /// Needs `Data::log_prior`.
    Atomic { atoms: usize },
}

/// Dense copies of the training set plus cached prior log densities.
struct Data {
    theta: Array2<f64>,
    x: Array2<f64>,
    log_prior: Vec<f64>,
}

impl Data {
    fn new(set: &TrainingSet, prior: Option<&PriorSpec>) -> Result<Self> {
        let p = set.dim();
        let theta = stack_rows(set.pairs().iter().map(|q| q.theta.as_slice()), p);
        let x = stack_rows(set.pairs().iter().map(|q| q.x.as_slice()), p);
        let log_prior = match prior {
            Some(pr) => set
                .pairs()
                .iter()
                .map(|q| pr.log_density(&q.theta))
                .collect::<Result<_>>()?,
            None => Vec::new(),
        };
        Ok(Data { theta, x, log_prior })
    }
}

fn chunk_bounds(rows: usize) -> Vec<(usize, usize)> {
    (0..rows)
        .step_by(CHUNK_ROWS)
        .map(|a| (a, (a + CHUNK_ROWS).min(rows)))
        .collect()
}

fn par_log_prob(model: &MafModel, theta: &Array2<f64>, x: &Array2<f64>) -> Result<Array1<f64>> {
    let parts: Vec<Array1<f64>> = chunk_bounds(theta.nrows())
        .into_par_iter()
        .map(|(a, b)| {
            model.log_prob_batch(
                theta.slice(ndarray::s![a..b, ..]),
                x.slice(ndarray::s![a..b, ..]),
            )
        })
        .collect::<Result<_>>()?;
    let views: Vec<_> = parts.iter().map(|v| v.view()).collect();
    Ok(ndarray::concatenate(Axis(0), &views).expect("1-d chunks"))
}

fn par_weighted_grad(model: &MafModel, theta: &Array2<f64>, x: &Array2<f64>, w: &[f64]) -> Result<Vec<f64>> {
    let parts: Vec<Vec<f64>> = chunk_bounds(theta.nrows())
        .into_par_iter()
        .map(|(a, b)| {
            model
                .weighted_log_prob_grad(
                    theta.slice(ndarray::s![a..b, ..]),
                    x.slice(ndarray::s![a..b, ..]),
                    &w[a..b],
                )
                .map(|(_, g)| g)
        })
        .collect::<Result<_>>()?;
    let mut total = vec![0.0; model.param_count()];
    for g in parts {
        for (t, v) in total.iter_mut().zip(g) {
            *t += v;
        }
    }
    Ok(total)
}

/// Softmax-normalised `log[r_own / Σ_a r_a]` from log ratios `log r_a`.
pub fn atomic_log_weight(log_ratios: &[f64], own: usize) -> Result<f64> {
    if own >= log_ratios.len() {
        return Err(Error::invalid("own atom index out of range"));
    }
    Ok(log_ratios[own] - log_sum_exp(log_ratios))
}

/// `log[(q(θ|x)/π(θ)) / Σ_{θ'∈atoms} q(θ'|x)/π(θ')]`.
pub fn atomic_log_prob(
    model: &MafModel,
    theta: &ThetaVector,
    x: &SummaryStats,
    atoms: &[ThetaVector],
    prior: &PriorSpec,
) -> Result<f64> {
    if atoms.len() < 2 {
        return Err(Error::invalid("atomic loss needs at least two atoms"));
    }
    let own = atoms
        .iter()
        .position(|a| a == theta)
        .ok_or_else(|| Error::invalid("theta is not one of the atoms"))?;
    let th = stack_rows(atoms.iter().map(|a| a.as_slice()), model.p());
    let xs = stack_rows(std::iter::repeat_n(x.as_slice(), atoms.len()), model.context_dim());
    let lq = model.log_prob_batch(th.view(), xs.view())?;
    let ratios: Vec<f64> = atoms
        .iter()
        .zip(lq.iter())
        .map(|(a, q)| Ok(q - prior.log_density(a)?))
        .collect::<Result<_>>()?;
    atomic_log_weight(&ratios, own)
}

/// Expanded rows for the atomic loss: for each batch row `b`, its own θ then
/// `atoms − 1` others from the batch, all paired with `x_b`.
fn atom_rows<R: Rng + ?Sized>(batch: &[usize], atoms: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let len = batch.len();
    let mut rows = Vec::with_capacity(len * atoms);
    for (pos, &b) in batch.iter().enumerate() {
        rows.push((b, b));
        for j in index::sample(rng, len - 1, atoms - 1).iter() {
            let other = if j >= pos { j + 1 } else { j };
            rows.push((batch[other], b));
        }
    }
    rows
}

/// Summed loss over `batch` and, if requested, the gradient of the
/// batch-mean loss.
fn batch_loss<R: Rng + ?Sized>(
    model: &MafModel,
    data: &Data,
    batch: &[usize],
    loss: Loss,
    rng: &mut R,
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    let len = batch.len();
    match loss {
        Loss::Nll => {
            let th = data.theta.select(Axis(0), batch);
            let xs = data.x.select(Axis(0), batch);
            let lp = par_log_prob(model, &th, &xs)?;
            let grad = if want_grad {
                Some(par_weighted_grad(model, &th, &xs, &vec![-1.0 / len as f64; len])?)
            } else {
                None
            };
            Ok((-lp.sum(), grad))
        }
        Loss::Atomic { atoms, .. } => {
            let m = atoms.min(len);
            if m < 2 {
                return Ok((0.0, want_grad.then(|| vec![0.0; model.param_count()])));
            }
            let rows = atom_rows(batch, m, rng);
            let th_idx: Vec<usize> = rows.iter().map(|r| r.0).collect();
            let x_idx: Vec<usize> = rows.iter().map(|r| r.1).collect();
            let th = data.theta.select(Axis(0), &th_idx);
            let xs = data.x.select(Axis(0), &x_idx);
            let lq = par_log_prob(model, &th, &xs)?;
            let mut total = 0.0;
            let mut weights = vec![0.0; rows.len()];
            for b in 0..len {
                let span = b * m..(b + 1) * m;
                let ratios: Vec<f64> = span
                    .clone()
                    .map(|r| lq[r] - data.log_prior[th_idx[r]])
                    .collect();
                let lse = log_sum_exp(&ratios);
                total -= ratios[0] - lse;
                for (k, r) in span.enumerate() {
                    let soft = (ratios[k] - lse).exp();
                    weights[r] = (soft - f64::from(u8::from(k == 0))) / len as f64;
                }
            }
            let grad = if want_grad {
                Some(par_weighted_grad(model, &th, &xs, &weights)?)
            } else {
                None
            };
            Ok((total, grad))
        }
    }
}

fn mean_loss(model: &MafModel, data: &Data, idx: &[usize], cfg: &NpeConfig, loss: Loss) -> Result<f64> {
    // Fixed atoms so successive epochs are compared on the same objective.
    let mut rng = rng_from_seed(derive_seed(cfg.seed, TAG_VALIDATION));
    let mut total = 0.0;
    for batch in idx.chunks(cfg.batch_size) {
        total += batch_loss(model, data, batch, loss, &mut rng, false)?.0;
    }
    Ok(total / idx.len() as f64)
}

fn fit(
    model: &mut MafModel,
    data: &Data,
    train_idx: &[usize],
    val_idx: &[usize],
    cfg: &NpeConfig,
    loss: Loss,
    rng: &mut SimRng,
) -> Result<TrainingReport> {
    let monitor = if val_idx.is_empty() { train_idx } else { val_idx };
    let check = |v: f64, what: &str| {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numerical(format!("{what} is not finite")))
        }
    };
    let mut best_params = model.params();
    let mut report = TrainingReport {
        train_loss: Vec::new(),
        validation_loss: vec![check(mean_loss(model, data, monitor, cfg, loss)?, "initial validation loss")?],
        best_epoch: 0,
    };
    let mut params = best_params.clone();
    let mut adam = AdamState::new(params.len(), cfg.learning_rate);
    let mut order = train_idx.to_vec();
    let mut since_best = 0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (l, g) = batch_loss(model, data, batch, loss, rng, true)?;
            let g = g.expect("gradient requested");
            check(l, &format!("training loss in epoch {epoch}"))?;
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("non-finite gradient in epoch {epoch}")));
            }
            epoch_loss += l;
            adam.step(&mut params, &g)?;
            model.set_params(&params)?;
        }
        report.train_loss.push(epoch_loss / order.len() as f64);
        let val = check(mean_loss(model, data, monitor, cfg, loss)?, "validation loss")?;
        report.validation_loss.push(val);
        if val < report.best_validation_loss() {
            report.best_epoch = epoch;
            best_params.clone_from(&params);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                break;
            }
        }
    }
    model.set_params(&best_params)?;
    Ok(report)
}

/// Shuffled split of `offset..offset + count` into (train, validation).
fn split(offset: usize, count: usize, fraction: f64, rng: &mut SimRng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (offset..offset + count).collect();
    idx.shuffle(rng);
    let n_val = ((fraction * count as f64).floor() as usize).min(count.saturating_sub(1));
    let train = idx.split_off(n_val);
    (train, idx)
}

struct FirstRound {
    model: MafModel,
    report: TrainingReport,
    train_idx: Vec<usize>,
    val_idx: Vec<usize>,
    rng: SimRng,
}

fn first_round(set: &TrainingSet, cfg: &NpeConfig) -> Result<FirstRound> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    if set.pairs().iter().any(|q| q.round != 0) {
        return Err(Error::invalid("amortised training expects prior-round (round 0) pairs only"));
    }
    let mut rng = rng_from_seed(derive_seed(cfg.seed, TAG_SPLIT));
    let (train_idx, val_idx) = split(0, set.len(), cfg.validation_fraction, &mut rng);
    let pairs = set.pairs();
    let standardizer = Standardizer::fit(
        train_idx.iter().map(|&i| pairs[i].theta.as_slice()),
        train_idx.iter().map(|&i| pairs[i].x.as_slice()),
    )?;
    let p = set.dim();
    let mut model = MafModel::new(cfg.architecture(p, p), standardizer, derive_seed(cfg.seed, TAG_INIT))?;
    let data = Data::new(set, None)?;
    let report = fit(&mut model, &data, &train_idx, &val_idx, cfg, Loss::Nll, &mut rng)?;
    Ok(FirstRound {
        model,
        report,
        train_idx,
        val_idx,
        rng,
    })
}

/// Fits `q(θ | x)` by minibatch Adam on the NLL and returns the parameters
/// with the best validation loss.
pub fn train_npe(set: &TrainingSet, cfg: &NpeConfig) -> Result<(MafModel, TrainingReport)> {
    let r = first_round(set, cfg)?;
    Ok((r.model, r.report))
}

/// Flow draws at `x_obs` plus the support-box rejection fraction.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorDraws {
    pub samples: Vec<ThetaVector>,
    pub rejection_fraction: f64,
}

fn in_box(theta: &[f64], prior: &PriorSpec) -> bool {
    theta
        .iter()
        .enumerate()
        .all(|(k, t)| (t - prior.mean()[k]).abs() <= SUPPORT_BOX_SDS * prior.marginal_sd(k))
}

/// Draws from `q(· | x_obs)`. With `truncate`, draws outside the box of
/// ±6 prior sds are rejected and redrawn.
pub fn posterior_sample<R: Rng + ?Sized>(
    model: &MafModel,
    x_obs: &SummaryStats,
    count: usize,
    prior: &PriorSpec,
    truncate: bool,
    rng: &mut R,
) -> Result<PosteriorDraws> {
    Error::check_dim(prior.dim(), model.p())?;
    if !truncate {
        return Ok(PosteriorDraws {
            samples: model.sample(x_obs, count, rng)?,
            rejection_fraction: 0.0,
        });
    }
    if count == 0 {
        return Err(Error::invalid("sample count must be >= 1"));
    }
    let mut samples = Vec::with_capacity(count);
    let mut examined = 0usize;
    while samples.len() < count {
        let batch = (2 * (count - samples.len())).max(256);
        for s in model.sample(x_obs, batch, rng)? {
            if samples.len() == count {
                break;
            }
            examined += 1;
            if in_box(&s, prior) {
                samples.push(s);
            }
        }
        let rejected = 1.0 - samples.len() as f64 / examined as f64;
        if rejected > MAX_REJECTION {
            return Err(Error::Leakage { rejected });
        }
    }
    Ok(PosteriorDraws {
        rejection_fraction: 1.0 - count as f64 / examined as f64,
        samples,
    })
}

fn summarize(samples: &[ThetaVector]) -> (Vec<f64>, Vec<f64>) {
    let p = samples[0].len();
    let n = samples.len() as f64;
    let mean: Vec<f64> = (0..p).map(|k| samples.iter().map(|s| s[k]).sum::<f64>() / n).collect();
    let sd = (0..p)
        .map(|k| (samples.iter().map(|s| (s[k] - mean[k]).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt())
        .collect();
    (mean, sd)
}

fn diagnose(
    model: &MafModel,
    cfg: &SnpeConfig,
    prior: &PriorSpec,
    sim: &SimConfig,
    round: usize,
    n_pairs: usize,
    training: TrainingReport,
) -> Result<RoundDiagnostics> {
    let seed = derive_seed(cfg.npe.seed, TAG_DIAGNOSTIC + round as u64);
    let mut rng = rng_from_seed(seed);
    let draws = posterior_sample(model, &cfg.x_obs, cfg.diagnostic_draws, prior, true, &mut rng)?;
    let (posterior_mean, posterior_sd) = summarize(&draws.samples);
    let predictive_mean = if cfg.predictive_draws > 0 {
        let thetas: Vec<ThetaVector> = draws.samples.iter().cycle().take(cfg.predictive_draws).cloned().collect();
        let xs = simulate_stats(&thetas, &sim.clone().with_seed(seed))?;
        let n = xs.len() as f64;
        Some((0..sim.dim()).map(|k| xs.iter().map(|x| x[k]).sum::<f64>() / n).collect())
    } else {
        None
    };
    Ok(RoundDiagnostics {
        round,
        n_pairs,
        training,
        posterior_mean,
        posterior_sd,
        leakage: draws.rejection_fraction,
        predictive_mean,
    })
}

/// Sequential NPE. Round 1 is exactly [`train_npe`] on
/// `simulate_prior_round(prior, B, sim)`; later rounds draw θ from the
/// current posterior at `x_obs`, append the new pairs and continue training
/// on all pairs with the atomic loss.
pub fn train_snpe(
    cfg: &SnpeConfig,
    prior: &PriorSpec,
    sim: &SimConfig,
) -> Result<(MafModel, Vec<RoundDiagnostics>)> {
    cfg.validate()?;
    sim.validate()?;
    Error::check_dim(sim.dim(), prior.dim())?;
    Error::check_dim(sim.dim(), cfg.x_obs.len())?;
    let b = cfg.npe.num_pairs;
    let mut set = simulate_prior_round(prior, b, sim)?;
    let FirstRound {
        mut model,
        report,
        mut train_idx,
        mut val_idx,
        mut rng,
    } = first_round(&set, &cfg.npe)?;
    let mut diagnostics = vec![diagnose(&model, cfg, prior, sim, 1, set.len(), report)?];
    for round in 2..=cfg.rounds {
        let proposal = posterior_sample(&model, &cfg.x_obs, b, prior, true, &mut rng)?;
        let sim_r = sim.clone().with_seed(derive_seed(sim.seed, TAG_ROUND + round as u64));
        let fresh = simulate_stats_batch(&proposal.samples, &sim_r)?.with_round(round as u32 - 1);
        let (t, v) = split(set.len(), fresh.len(), cfg.npe.validation_fraction, &mut rng);
        train_idx.extend(t);
        val_idx.extend(v);
        set.extend(fresh)?;
        let data = Data::new(&set, Some(prior))?;
        let loss = Loss::Atomic {
            atoms: cfg.atoms_per_batch,
        };
        let report = fit(&mut model, &data, &train_idx, &val_idx, &cfg.npe, loss, &mut rng)?;
        diagnostics.push(diagnose(&model, cfg, prior, sim, round, set.len(), report)?);
    }
    Ok((model, diagnostics))
}

/// Anything that turns an observation into posterior draws.
pub trait PosteriorEstimator: Sync {
    fn dim(&self) -> usize;

    /// `count` posterior draws at `x_obs`, deterministic in `seed`.
    fn draw(&self, x_obs: &SummaryStats, count: usize, seed: u64) -> Result<Vec<ThetaVector>>;

    fn posterior_mean(&self, x_obs: &SummaryStats, count: usize, seed: u64) -> Result<ThetaVector> {
        point_estimate(&self.draw(x_obs, count, seed)?)
    }
}

/// A trained flow, optionally truncated to the support box.
pub struct NpeEstimator<'a> {
    pub model: &'a MafModel,
    pub prior: &'a PriorSpec,
    pub truncate: bool,
}

impl PosteriorEstimator for NpeEstimator<'_> {
    fn dim(&self) -> usize {
        self.model.p()
    }

    fn draw(&self, x_obs: &SummaryStats, count: usize, seed: u64) -> Result<Vec<ThetaVector>> {
        let mut rng = rng_from_seed(seed);
        Ok(posterior_sample(self.model, x_obs, count, self.prior, self.truncate, &mut rng)?.samples)
    }
}

/// Exchange algorithm with `count` post-burn-in iterations.
pub struct ExchangeEstimator<'a> {
    pub prior: &'a PriorSpec,
    pub config: &'a ExchangeConfig,
    pub sim: &'a SimConfig,
}

impl PosteriorEstimator for ExchangeEstimator<'_> {
    fn dim(&self) -> usize {
        self.prior.dim()
    }

    fn draw(&self, x_obs: &SummaryStats, count: usize, seed: u64) -> Result<Vec<ThetaVector>> {
        let cfg = ExchangeConfig {
            iterations: self.config.burn_in + count,
            ..self.config.clone()
        };
        let chain = run_exchange(x_obs, self.prior, &cfg, self.sim, seed)?;
        Ok(chain.post_burn_in().to_vec())
    }
}

/// Exact grid posterior of a one-parameter enumerable model.
pub struct GridEstimator<'a> {
    pub model: &'a ExactModel,
    pub prior: &'a PriorSpec,
}

impl PosteriorEstimator for GridEstimator<'_> {
    fn dim(&self) -> usize {
        1
    }

    fn draw(&self, x_obs: &SummaryStats, count: usize, seed: u64) -> Result<Vec<ThetaVector>> {
        let post = GridPosterior::standard(self.model, self.prior, x_obs)?;
        Ok(post.sample(count, &mut rng_from_seed(seed)))
    }

    fn posterior_mean(&self, x_obs: &SummaryStats, _count: usize, _seed: u64) -> Result<ThetaVector> {
        ThetaVector::new(vec![GridPosterior::standard(self.model, self.prior, x_obs)?.mean()])
    }
}
