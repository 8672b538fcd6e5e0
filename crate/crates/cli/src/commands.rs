use std::fs;
use std::path::{Path, PathBuf};

use ergm_sbi::exchange::run_exchange;
use ergm_sbi::flow::{load_checkpoint, save_checkpoint, MafModel};
use ergm_sbi::harness::{
    compare_methods, ks_statistic, run_bias_eval, stratified_truths, wilcoxon_rank_sum, BiasEvalConfig,
    CompareConfig, EvalCase, MagnitudeReport, METHOD_EXCHANGE, METHOD_NPE,
};
use ergm_sbi::npe::{
    posterior_sample, simulate_prior_round, train_npe, train_snpe, ExchangeEstimator, NpeEstimator, SnpeConfig,
};
use ergm_sbi::rng::{derive_seed, rng_from_seed};
use ergm_sbi::sim::simulate_stats_batch;
use ergm_sbi::{Error, StatsConfig, ThetaVector, TrainingSet};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{hex, ConfigError, RunConfig};

// Stream tags under the global seed.
const TAG_SIM: u64 = 1;
const TAG_TRAIN: u64 = 2;
const TAG_SAMPLE: u64 = 3;
const TAG_STRATA: u64 = 4;
const TAG_EVALUATE: u64 = 5;
const TAG_COMPARE: u64 = 6;
const TAG_EXCHANGE: u64 = 7;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Oracle(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Oracle(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => f.write_str(m),
            CliError::Oracle(m) => write!(f, "self-test failed: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidArgument(_) | Error::DimensionMismatch { .. } | Error::Empty(_) | Error::Parse(_) => {
                CliError::Config(msg)
            }
            Error::NonFinite(_) | Error::Numerical(_) | Error::Leakage { .. } => CliError::Numerical(msg),
            _ => CliError::Runtime(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Serialize)]
struct OutputFile {
    path: String,
    bytes: usize,
    sha256: String,
}

/// Collects written files for the command manifest.
struct Outputs<'a> {
    cfg: &'a RunConfig,
    files: Vec<OutputFile>,
}

impl<'a> Outputs<'a> {
    fn new(cfg: &'a RunConfig) -> CliResult<Self> {
        fs::create_dir_all(&cfg.output_dir)?;
        Ok(Outputs { cfg, files: Vec::new() })
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, bytes)?;
        self.record(path, bytes);
        Ok(())
    }

    fn write_named(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.cfg.output_dir.join(name);
        self.write(&path, bytes)
    }

    fn record(&mut self, path: &Path, bytes: &[u8]) {
        self.files.push(OutputFile {
            path: path.display().to_string(),
            bytes: bytes.len(),
            sha256: hex(&Sha256::digest(bytes)),
        });
    }

    fn finish(self, command: &str, details: Value) -> CliResult<()> {
        let manifest = json!({
            "tool": "ergm-sbi",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "config_hash": self.cfg.hash(),
            "seed": self.cfg.seed,
            "outputs": self.files,
            "details": details,
        });
        let path = self.cfg.output_dir.join(format!("{command}.manifest.json"));
        fs::write(path, pretty(&manifest)?)?;
        Ok(())
    }
}

fn pretty<T: Serialize>(v: &T) -> CliResult<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v).map_err(|e| CliError::Runtime(e.to_string()))?;
    s.push(b'\n');
    Ok(s)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> ergm_sbi::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn theta_rows(thetas: &[Vec<f64>]) -> CliResult<Vec<ThetaVector>> {
    thetas
        .iter()
        .map(|t| ThetaVector::new(t.clone()).map_err(CliError::from))
        .collect()
}

pub fn simulate(cfg: &RunConfig) -> CliResult<()> {
    let sim = cfg.sim_config(derive_seed(cfg.seed, TAG_SIM));
    let set = match &cfg.simulate.thetas {
        Some(thetas) => simulate_stats_batch(&theta_rows(thetas)?, &sim)?,
        None => {
            let count = cfg.simulate.count.unwrap_or(cfg.npe.num_pairs);
            simulate_prior_round(&cfg.prior(), count, &sim)?
        }
    };
    let mut out = Outputs::new(cfg)?;
    let bytes = csv_bytes(|b| set.write_csv(b))?;
    out.write(&cfg.dataset_path(), &bytes)?;
    out.finish("simulate", json!({ "rows": set.len(), "dim": set.dim() }))
}

fn npe_config(cfg: &RunConfig) -> ergm_sbi::npe::NpeConfig {
    ergm_sbi::npe::NpeConfig {
        seed: derive_seed(cfg.seed, TAG_TRAIN),
        ..cfg.npe.clone()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Npe,
    Snpe,
}

pub fn train(cfg: &RunConfig, mode: Mode) -> CliResult<()> {
    let sim = cfg.sim_config(derive_seed(cfg.seed, TAG_SIM));
    let prior = cfg.prior();
    let npe = npe_config(cfg);
    let mut out = Outputs::new(cfg)?;
    let trained = match mode {
        Mode::Npe => {
            let set = match &cfg.dataset {
                Some(path) => read_dataset(path, cfg.dim())?,
                None => simulate_prior_round(&prior, npe.num_pairs, &sim)?,
            };
            train_npe(&set, &npe).map(|(m, report)| (m, json!({ "mode": "npe", "pairs": set.len(), "report": report })))
        }
        Mode::Snpe => {
            let snpe = SnpeConfig {
                npe,
                rounds: cfg.snpe.rounds,
                atoms_per_batch: cfg.snpe.atoms_per_batch,
                x_obs: cfg.x_obs()?,
                diagnostic_draws: cfg.snpe.diagnostic_draws,
                predictive_draws: cfg.snpe.predictive_draws,
            };
            snpe.validate()?;
            train_snpe(&snpe, &prior, &sim).map(|(m, rounds)| (m, json!({ "mode": "snpe", "rounds": rounds })))
        }
    };
    let (model, details) = match trained {
        Ok(t) => t,
        Err(e) => {
            let err = CliError::from(e);
            if matches!(err, CliError::Numerical(_)) {
                let dump = json!({ "error": err.to_string(), "config_hash": cfg.hash(), "config": cfg });
                out.write_named("train.failure.json", &pretty(&dump)?)?;
            }
            return Err(err);
        }
    };
    let path = cfg.checkpoint_path();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save_checkpoint(&model, &cfg.stats, &path)?;
    let bytes = fs::read(&path)?;
    out.record(&path, &bytes);
    out.finish("train", details)
}

fn read_dataset(path: &Path, dim: usize) -> CliResult<TrainingSet> {
    let file = fs::File::open(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let set = TrainingSet::read_csv(file)?;
    if set.dim() != dim {
        return Err(CliError::Config(format!(
            "dataset {} has dimension {}, statistics have {dim}",
            path.display(),
            set.dim()
        )));
    }
    Ok(set)
}

fn load_model(cfg: &RunConfig) -> CliResult<MafModel> {
    let path: PathBuf = cfg.checkpoint_path();
    let (model, stats): (MafModel, StatsConfig) = load_checkpoint(&path).map_err(|e| match e {
        Error::Io(io) => CliError::Config(format!("{}: {io}", path.display())),
        other => CliError::from(other),
    })?;
    if stats != cfg.stats {
        return Err(CliError::Config(format!(
            "checkpoint {} was trained on statistics {:?}, config has {:?}",
            path.display(),
            stats.stat_set(),
            cfg.stats.stat_set()
        )));
    }
    Ok(model)
}

fn write_theta_csv(rows: &[ThetaVector], p: usize) -> CliResult<Vec<u8>> {
    let mut s = (1..=p).map(|k| format!("theta_{k}")).collect::<Vec<_>>().join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    Ok(s.into_bytes())
}

fn column_means(rows: &[ThetaVector], p: usize) -> Vec<f64> {
    (0..p)
        .map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / rows.len().max(1) as f64)
        .collect()
}

pub fn sample(cfg: &RunConfig) -> CliResult<()> {
    let model = load_model(cfg)?;
    let x = cfg.x_obs()?;
    let mut rng = rng_from_seed(derive_seed(cfg.seed, TAG_SAMPLE));
    let draws = posterior_sample(&model, &x, cfg.sample.count, &cfg.prior(), cfg.sample.truncate, &mut rng)?;
    let p = model.p();
    let mut out = Outputs::new(cfg)?;
    out.write_named("samples.csv", &write_theta_csv(&draws.samples, p)?)?;
    out.finish(
        "sample",
        json!({
            "count": draws.samples.len(),
            "rejection_fraction": draws.rejection_fraction,
            "mean": column_means(&draws.samples, p),
        }),
    )
}

fn magnitude_csv(report: &MagnitudeReport, names: &[&str]) -> Vec<u8> {
    let mut s = String::from("case_id,statistic,q05,q95,predictive_mean,small,coverage\n");
    for e in &report.entries {
        for (name, b) in names.iter().zip(&e.stats) {
            s.push_str(&format!(
                "{},{name},{},{},{},{},{}\n",
                e.case_id, b.q05, b.q95, b.predictive_mean, b.small, b.coverage
            ));
        }
    }
    s.into_bytes()
}

fn cases_csv(cases: &[EvalCase], p: usize) -> Vec<u8> {
    let mut s = String::from("case_id,stratum");
    for k in 1..=p {
        s.push_str(&format!(",theta_{k}"));
    }
    s.push('\n');
    for c in cases {
        s.push_str(&format!("{},{}", c.case_id, c.stratum));
        for v in c.theta_true.iter() {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    s.into_bytes()
}

pub fn evaluate(cfg: &RunConfig) -> CliResult<()> {
    let model = load_model(cfg)?;
    let ev = &cfg.evaluate;
    let search = ev
        .search_box
        .as_ref()
        .ok_or_else(|| CliError::Config("evaluate needs `evaluate.search_box`".into()))?;
    let sim = cfg.sim_config(derive_seed(cfg.seed, TAG_SIM));
    let prior = cfg.prior();
    let cases = stratified_truths(&ev.strata, search, &sim, derive_seed(cfg.seed, TAG_STRATA))?;
    let estimator = NpeEstimator {
        model: &model,
        prior: &prior,
        truncate: ev.truncate,
    };
    let bias_cfg = BiasEvalConfig {
        replicates: ev.replicates,
        posterior_draws: ev.posterior_draws,
        predictive_draws: ev.predictive_draws,
        seed: derive_seed(cfg.seed, TAG_EVALUATE),
    };
    let (report, magnitude) = run_bias_eval(&cases, &estimator, &sim, &bias_cfg)?;
    let names: Vec<&str> = cfg.stats.stat_set().iter().map(|k| k.name()).collect();
    let mut out = Outputs::new(cfg)?;
    out.write_named("cases.csv", &cases_csv(&cases, cfg.dim()))?;
    out.write_named("bias_report.json", &pretty(&report)?)?;
    out.write_named("magnitude.json", &pretty(&magnitude)?)?;
    out.write_named("magnitude.csv", &magnitude_csv(&magnitude, &names))?;
    out.finish(
        "evaluate",
        json!({ "cases": cases.len(), "me": report.me, "mae": report.mae, "rmse": report.rmse }),
    )
}

pub fn compare(cfg: &RunConfig) -> CliResult<()> {
    let model = load_model(cfg)?;
    let cmp_cfg = &cfg.compare;
    let xcfg = cfg
        .exchange
        .as_ref()
        .ok_or_else(|| CliError::Config("compare needs an `[exchange]` section".into()))?;
    let truth = cmp_cfg
        .theta_true
        .clone()
        .ok_or_else(|| CliError::Config("compare needs `compare.theta_true`".into()))?;
    let sim = cfg.sim_config(derive_seed(cfg.seed, TAG_SIM));
    let prior = cfg.prior();
    let npe = NpeEstimator {
        model: &model,
        prior: &prior,
        truncate: cmp_cfg.truncate,
    };
    let exchange = ExchangeEstimator {
        prior: &prior,
        config: xcfg,
        sim: &sim,
    };
    // The stratum label is not used by the comparison.
    let case = EvalCase {
        case_id: 0,
        theta_true: ThetaVector::new(truth)?,
        stratum: 0,
    };
    let compare_cfg = CompareConfig {
        replicates: cmp_cfg.replicates,
        npe_draws: cmp_cfg.npe_draws,
        exchange_draws: cmp_cfg.exchange_draws,
        seed: derive_seed(cfg.seed, TAG_COMPARE),
    };
    let result = compare_methods(&case, &npe, &exchange, &sim, &compare_cfg)?;
    let names: Vec<&str> = cfg.stats.stat_set().iter().map(|k| k.name()).collect();
    let p = cfg.dim();
    let mut tests = Vec::with_capacity(p);
    for k in 0..p {
        let a: Vec<f64> = result.method_means(METHOD_NPE).iter().map(|t| t[k]).collect();
        let b: Vec<f64> = result.method_means(METHOD_EXCHANGE).iter().map(|t| t[k]).collect();
        let rs = wilcoxon_rank_sum(&a, &b)?;
        tests.push(json!({
            "statistic": names[k],
            "ks": ks_statistic(&a, &b)?,
            "rank_sum_z": rs.z,
            "rank_sum_p": rs.p_value,
        }));
    }
    let mut out = Outputs::new(cfg)?;
    out.write_named("paired.csv", &csv_bytes(|b| result.write_csv(b))?)?;
    out.write_named("plot.csv", &csv_bytes(|b| result.write_plot_csv(b, &names))?)?;
    let npe_rows: Vec<ThetaVector> = result.method_means(METHOD_NPE).into_iter().cloned().collect();
    let ex_rows: Vec<ThetaVector> = result.method_means(METHOD_EXCHANGE).into_iter().cloned().collect();
    out.finish(
        "compare",
        json!({
            "replicates": compare_cfg.replicates,
            "npe_mean": column_means(&npe_rows, p),
            "exchange_mean": column_means(&ex_rows, p),
            "mean_abs_difference": result.mean_abs_difference(METHOD_NPE, METHOD_EXCHANGE),
            "tests": tests,
        }),
    )
}

pub fn exchange(cfg: &RunConfig) -> CliResult<()> {
    let xcfg = cfg
        .exchange
        .as_ref()
        .ok_or_else(|| CliError::Config("exchange needs an `[exchange]` section".into()))?;
    let x = cfg.x_obs()?;
    let sim = cfg.sim_config(derive_seed(cfg.seed, TAG_SIM));
    let chain = run_exchange(&x, &cfg.prior(), xcfg, &sim, derive_seed(cfg.seed, TAG_EXCHANGE))?;
    let mut out = Outputs::new(cfg)?;
    out.write_named("chain.csv", &csv_bytes(|b| chain.write_csv(b))?)?;
    out.finish(
        "exchange",
        json!({
            "iterations": xcfg.iterations,
            "burn_in": chain.burn_in,
            "acceptance_rate": chain.acceptance_rate(),
            "mean": chain.mean(),
            "sd": chain.sd(),
        }),
    )
}
