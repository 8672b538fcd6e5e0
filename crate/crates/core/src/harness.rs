//! Bias-evaluation protocols: stratified truths, ME/MAE/RMSE, data-space
//! magnitude classification, predictive coverage and paired method
//! comparison, plus the two-sample tests used for calibration.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::npe::PosteriorEstimator;
use crate::rng::{derive_seed, item_seed, rng_from_seed};
use crate::sim::{simulate_stats, SimConfig};
use crate::stats::{StatKind, SummaryStats};
use crate::theta::ThetaVector;

/// Stratum boundaries (edge counts) for 90 vertices.
pub const REFERENCE_STRATA: [f64; 5] = [0.0, 275.0, 550.0, 825.0, 1100.0];
/// Number of vertex pairs at 90 vertices.
pub const REFERENCE_PAIRS: f64 = 4005.0;

/// Four half-open edge-count intervals scaled by `pairs(n) / pairs(90)`.
pub fn edge_strata(n: usize) -> [(f64, f64); 4] {
    let scale = (n * n.saturating_sub(1) / 2) as f64 / REFERENCE_PAIRS;
    let b = REFERENCE_STRATA.map(|v| v * scale);
    [(b[0], b[1]), (b[1], b[2]), (b[2], b[3]), (b[3], b[4])]
}

fn stratum_of(edges: f64, strata: &[(f64, f64); 4]) -> Option<usize> {
    strata.iter().position(|&(lo, hi)| edges >= lo && edges < hi)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalCase {
    pub case_id: usize,
    pub theta_true: ThetaVector,
    pub stratum: usize,
}

/// Axis-aligned box θ is drawn from when searching for truths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SearchBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        Error::check_dim(lower.len(), upper.len())?;
        if lower.is_empty() || lower.iter().zip(&upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u)) {
            return Err(Error::invalid("search box needs finite lower < upper"));
        }
        Ok(SearchBox { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ThetaVector {
        let v = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| rng.random_range(l..u))
            .collect();
        ThetaVector::new(v).expect("box is finite")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrataConfig {
    pub target_counts: [usize; 4],
    /// Pilot simulations per candidate θ.
    pub pilot: usize,
    /// Fraction of pilot draws that must fall in the stratum.
    pub min_in_stratum: f64,
    pub max_attempts: usize,
}

impl Default for StrataConfig {
    fn default() -> Self {
        StrataConfig {
            target_counts: [2; 4],
            pilot: 5,
            min_in_stratum: 0.8,
            max_attempts: 20_000,
        }
    }
}

/// Rejection-samples θ from `search` until every stratum holds its target
/// count. A candidate is kept when its pilot mean edge count lies in a
/// stratum that still needs cases and enough pilot draws agree.
pub fn stratified_truths(
    cfg: &StrataConfig,
    search: &SearchBox,
    sim: &SimConfig,
    seed: u64,
) -> Result<Vec<EvalCase>> {
    Error::check_dim(sim.dim(), search.dim())?;
    let edge_pos = sim
        .stats
        .stat_set()
        .iter()
        .position(|k| *k == StatKind::Edges)
        .ok_or_else(|| Error::invalid("stratification needs the edges statistic"))?;
    if cfg.pilot == 0 {
        return Err(Error::invalid("pilot must be >= 1"));
    }
    let strata = edge_strata(sim.n);
    let mut remaining = cfg.target_counts;
    let mut cases = Vec::new();
    const BLOCK: usize = 32;
    let mut attempt = 0;
    while remaining.iter().any(|&r| r > 0) {
        if attempt >= cfg.max_attempts {
            return Err(Error::Exhausted(format!(
                "strata still need {remaining:?} cases after {attempt} attempts"
            )));
        }
        let block: Vec<usize> = (attempt..(attempt + BLOCK).min(cfg.max_attempts)).collect();
        attempt += block.len();
        let evaluated: Vec<(ThetaVector, Vec<f64>)> = block
            .par_iter()
            .map(|&a| {
                let s = item_seed(seed, a as u64);
                let theta = search.sample(&mut rng_from_seed(s));
                let pilot_cfg = sim.clone().with_seed(derive_seed(s, 1));
                let xs = simulate_stats(&vec![theta.clone(); cfg.pilot], &pilot_cfg)?;
                Ok((theta, xs.iter().map(|x| x[edge_pos]).collect()))
            })
            .collect::<Result<_>>()?;
        for (theta, edges) in evaluated {
            let mean = edges.iter().sum::<f64>() / edges.len() as f64;
            let Some(k) = stratum_of(mean, &strata) else { continue };
            let agree = edges.iter().filter(|&&e| stratum_of(e, &strata) == Some(k)).count();
            if remaining[k] > 0 && agree as f64 >= cfg.min_in_stratum * edges.len() as f64 {
                remaining[k] -= 1;
                cases.push(EvalCase {
                    case_id: cases.len(),
                    theta_true: theta,
                    stratum: k,
                });
            }
        }
    }
    Ok(cases)
}

/// Coordinatewise posterior mean.
pub fn point_estimate(samples: &[ThetaVector]) -> Result<ThetaVector> {
    let first = samples.first().ok_or_else(|| Error::Empty("posterior samples".into()))?;
    let p = first.len();
    let mut acc = vec![0.0; p];
    for s in samples {
        Error::check_dim(p, s.len())?;
        for (a, v) in acc.iter_mut().zip(s.iter()) {
            *a += v;
        }
    }
    ThetaVector::new(acc.into_iter().map(|a| a / samples.len() as f64).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub me: Vec<f64>,
    pub mae: Vec<f64>,
    pub rmse: Vec<f64>,
    pub estimates: Vec<ThetaVector>,
}

/// ME, MAE, RMSE of `truth − estimate`, per coordinate.
pub fn bias_metrics(truths: &[ThetaVector], estimates: &[ThetaVector]) -> Result<BiasReport> {
    Error::check_dim(truths.len(), estimates.len())?;
    let first = truths.first().ok_or_else(|| Error::Empty("bias evaluation cases".into()))?;
    let p = first.len();
    let k = truths.len() as f64;
    let (mut me, mut mae, mut mse) = (vec![0.0; p], vec![0.0; p], vec![0.0; p]);
    for (t, e) in truths.iter().zip(estimates) {
        Error::check_dim(p, t.len())?;
        Error::check_dim(p, e.len())?;
        for c in 0..p {
            let d = t[c] - e[c];
            me[c] += d / k;
            mae[c] += d.abs() / k;
            mse[c] += d * d / k;
        }
    }
    Ok(BiasReport {
        me,
        mae,
        rmse: mse.into_iter().map(f64::sqrt).collect(),
        estimates: estimates.to_vec(),
    })
}

/// Quantile of sorted data by linear interpolation between the closest
/// order statistics (`h = (n − 1)q`).
pub fn quantile(sorted: &[f64], q: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::Empty("quantile input".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid("quantile level must lie in [0, 1]"));
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatBias {
    pub q05: f64,
    pub q95: f64,
    pub predictive_mean: f64,
    pub small: bool,
    /// Percentage of predictive draws inside `[q05, q95]`.
    pub coverage: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MagnitudeEntry {
    pub case_id: usize,
    pub stats: Vec<StatBias>,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct MagnitudeReport {
    pub entries: Vec<MagnitudeEntry>,
}

/// Small bias when the predictive mean lies in the 5–95% band of the true
/// data, per statistic.
pub fn magnitude_classify(x_true: &[SummaryStats], x_pred: &[SummaryStats]) -> Result<Vec<StatBias>> {
    let first = x_true.first().ok_or_else(|| Error::Empty("true statistics".into()))?;
    if x_pred.is_empty() {
        return Err(Error::Empty("predictive statistics".into()));
    }
    let p = first.len();
    for x in x_true.iter().chain(x_pred) {
        Error::check_dim(p, x.len())?;
    }
    (0..p)
        .map(|k| {
            let mut col: Vec<f64> = x_true.iter().map(|x| x[k]).collect();
            col.sort_by(f64::total_cmp);
            let q05 = quantile(&col, 0.05)?;
            let q95 = quantile(&col, 0.95)?;
            let inside = |v: f64| v >= q05 && v <= q95;
            let predictive_mean = x_pred.iter().map(|x| x[k]).sum::<f64>() / x_pred.len() as f64;
            let covered = x_pred.iter().filter(|x| inside(x[k])).count();
            Ok(StatBias {
                q05,
                q95,
                predictive_mean,
                small: inside(predictive_mean),
                coverage: 100.0 * covered as f64 / x_pred.len() as f64,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasEvalConfig {
    /// Observations per case (`M`).
    pub replicates: usize,
    pub posterior_draws: usize,
    /// Predictive simulations per replicate estimate.
    pub predictive_draws: usize,
    pub seed: u64,
}

impl Default for BiasEvalConfig {
    fn default() -> Self {
        BiasEvalConfig {
            replicates: 50,
            posterior_draws: 10_000,
            predictive_draws: 100,
            seed: 0,
        }
    }
}

struct CaseResult {
    case_id: usize,
    truth: ThetaVector,
    estimate: ThetaVector,
    magnitude: Vec<StatBias>,
}

fn case_seed(seed: u64, case_id: usize) -> u64 {
    derive_seed(seed, case_id as u64)
}

/// Observations `x_m ~ ERGM(θ_true)` for one case.
fn case_observations(case: &EvalCase, replicates: usize, sim: &SimConfig, seed: u64) -> Result<Vec<SummaryStats>> {
    let cfg = sim.clone().with_seed(derive_seed(case_seed(seed, case.case_id), 1));
    simulate_stats(&vec![case.theta_true.clone(); replicates], &cfg)
}

fn replicate_means(
    estimator: &dyn PosteriorEstimator,
    xs: &[SummaryStats],
    draws: usize,
    seed: u64,
) -> Result<Vec<ThetaVector>> {
    xs.par_iter()
        .enumerate()
        .map(|(m, x)| estimator.posterior_mean(x, draws, item_seed(seed, m as u64)))
        .collect()
}

fn eval_case(
    case: &EvalCase,
    estimator: &dyn PosteriorEstimator,
    sim: &SimConfig,
    cfg: &BiasEvalConfig,
) -> Result<CaseResult> {
    let base = case_seed(cfg.seed, case.case_id);
    let xs = case_observations(case, cfg.replicates, sim, cfg.seed)?;
    let means = replicate_means(estimator, &xs, cfg.posterior_draws, derive_seed(base, 2))?;
    let estimate = point_estimate(&means)?;
    let pred_thetas: Vec<ThetaVector> = means
        .iter()
        .flat_map(|m| std::iter::repeat_n(m.clone(), cfg.predictive_draws))
        .collect();
    let magnitude = if pred_thetas.is_empty() {
        Vec::new()
    } else {
        let x_pred = simulate_stats(&pred_thetas, &sim.clone().with_seed(derive_seed(base, 3)))?;
        magnitude_classify(&xs, &x_pred)?
    };
    Ok(CaseResult {
        case_id: case.case_id,
        truth: case.theta_true.clone(),
        estimate,
        magnitude,
    })
}

/// For each case: `M` observations, one posterior mean per observation,
/// averaged into `θ̂^k`; predictive draws at every replicate mean feed the
/// magnitude classification. Results are ordered by `case_id`.
pub fn run_bias_eval(
    cases: &[EvalCase],
    estimator: &dyn PosteriorEstimator,
    sim: &SimConfig,
    cfg: &BiasEvalConfig,
) -> Result<(BiasReport, MagnitudeReport)> {
    if cases.is_empty() {
        return Err(Error::Empty("bias evaluation cases".into()));
    }
    if cfg.replicates == 0 || cfg.posterior_draws == 0 {
        return Err(Error::invalid("replicates and posterior_draws must be >= 1"));
    }
    let mut results: Vec<CaseResult> = cases
        .par_iter()
        .map(|c| eval_case(c, estimator, sim, cfg))
        .collect::<Result<_>>()?;
    results.sort_by_key(|r| r.case_id);
    let truths: Vec<ThetaVector> = results.iter().map(|r| r.truth.clone()).collect();
    let estimates: Vec<ThetaVector> = results.iter().map(|r| r.estimate.clone()).collect();
    let report = bias_metrics(&truths, &estimates)?;
    let magnitude = MagnitudeReport {
        entries: results
            .into_iter()
            .map(|r| MagnitudeEntry {
                case_id: r.case_id,
                stats: r.magnitude,
            })
            .collect(),
    };
    Ok((report, magnitude))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub replicates: usize,
    pub npe_draws: usize,
    /// Post-burn-in exchange iterations per replicate.
    pub exchange_draws: usize,
    pub seed: u64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            replicates: 50,
            npe_draws: 10_000,
            exchange_draws: 6_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedRow {
    pub replicate: usize,
    pub method: String,
    pub theta: ThetaVector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub theta_true: ThetaVector,
    pub rows: Vec<PairedRow>,
}

impl PairedComparison {
    pub fn method_means(&self, method: &str) -> Vec<&ThetaVector> {
        self.rows.iter().filter(|r| r.method == method).map(|r| &r.theta).collect()
    }

    /// Mean over replicates of `|θ̂_a − θ̂_b|`, per coordinate.
    pub fn mean_abs_difference(&self, a: &str, b: &str) -> Vec<f64> {
        let (xa, xb) = (self.method_means(a), self.method_means(b));
        let p = self.theta_true.len();
        let n = xa.len().min(xb.len()).max(1) as f64;
        (0..p)
            .map(|k| xa.iter().zip(&xb).map(|(u, v)| (u[k] - v[k]).abs()).sum::<f64>() / n)
            .collect()
    }

    /// `replicate,method,theta_1..p`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let p = self.theta_true.len();
        let mut header = vec!["replicate".to_string(), "method".to_string()];
        header.extend((1..=p).map(|k| format!("theta_{k}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.replicate.to_string(), r.method.clone()];
            rec.extend(r.theta.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Long format for density and contour plots: `method,coordinate,value`.
    pub fn write_plot_csv<W: Write>(&self, writer: W, names: &[&str]) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["method", "coordinate", "value"])?;
        for r in &self.rows {
            for (k, v) in r.theta.iter().enumerate() {
                let name = names.get(k).map_or_else(|| format!("theta_{}", k + 1), |s| s.to_string());
                w.write_record([r.method.clone(), name, v.to_string()])?;
            }
        }
        for (k, v) in self.theta_true.iter().enumerate() {
            let name = names.get(k).map_or_else(|| format!("theta_{}", k + 1), |s| s.to_string());
            w.write_record(["truth".to_string(), name, v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const METHOD_NPE: &str = "npe";
pub const METHOD_EXCHANGE: &str = "exchange";

/// Both methods on the same `M` observations of one case; `2·M` rows.
pub fn compare_methods(
    case: &EvalCase,
    npe: &dyn PosteriorEstimator,
    exchange: &dyn PosteriorEstimator,
    sim: &SimConfig,
    cfg: &CompareConfig,
) -> Result<PairedComparison> {
    if cfg.replicates == 0 {
        return Err(Error::invalid("replicates must be >= 1"));
    }
    let base = case_seed(cfg.seed, case.case_id);
    let xs = case_observations(case, cfg.replicates, sim, cfg.seed)?;
    let a = replicate_means(npe, &xs, cfg.npe_draws, derive_seed(base, 4))?;
    let b = replicate_means(exchange, &xs, cfg.exchange_draws, derive_seed(base, 5))?;
    let mut rows = Vec::with_capacity(2 * cfg.replicates);
    for (m, (ta, tb)) in a.into_iter().zip(b).enumerate() {
        rows.push(PairedRow {
            replicate: m,
            method: METHOD_NPE.into(),
            theta: ta,
        });
        rows.push(PairedRow {
            replicate: m,
            method: METHOD_EXCHANGE.into(),
            theta: tb,
        });
    }
    Ok(PairedComparison {
        theta_true: case.theta_true.clone(),
        rows,
    })
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("KS samples".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankSumResult {
    /// Rank sum of the first sample.
    pub w: f64,
    pub z: f64,
    pub p_value: f64,
}

/// Wilcoxon rank-sum test, two-sided, normal approximation with tie
/// correction (no continuity correction).
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<RankSumResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("rank-sum samples".into()));
    }
    let mut all: Vec<(f64, bool)> = a.iter().map(|&v| (v, true)).chain(b.iter().map(|&v| (v, false))).collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n = all.len();
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let mut w = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        w += rank * all[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let nt = n as f64;
    let mean = n1 * (nt + 1.0) / 2.0;
    let var = n1 * n2 / 12.0 * ((nt + 1.0) - tie_term / (nt * (nt - 1.0)).max(1.0));
    let z = if var > 0.0 { (w - mean) / var.sqrt() } else { 0.0 };
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(RankSumResult {
        w,
        z,
        p_value: (2.0 * (1.0 - normal.cdf(z.abs()))).min(1.0),
    })
}
