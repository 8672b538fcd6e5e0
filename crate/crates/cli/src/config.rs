//! Run configuration: one TOML file plus `--set key=value` overrides.
//!
//! Precedence, lowest first: built-in defaults, the config file, `--set`
//! overrides in command-line order, then the dedicated `--seed` flag.

use std::path::{Path, PathBuf};

use ergm_sbi::exchange::ExchangeConfig;
use ergm_sbi::harness::{SearchBox, StrataConfig};
use ergm_sbi::npe::NpeConfig;
use ergm_sbi::sim::DEFAULT_ITERATIONS;
use ergm_sbi::{InitGraph, PriorSpec, SimConfig, StatsConfig, SummaryStats};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn cfg_err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Every random stream of every command derives from this.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub stats: StatsConfig,
    pub sim: SimSection,
    /// Defaults to `N(0, I)`.
    pub prior: Option<PriorSpec>,
    pub x_obs: Option<Vec<f64>>,
    /// Checkpoint written by `train`, read by `sample`, `evaluate` and `compare`.
    /// Defaults to `<output_dir>/model.json`.
    pub checkpoint: Option<PathBuf>,
    /// Training-set CSV written by `simulate`. When set, `train --mode npe`
    /// reads it instead of simulating.
    pub dataset: Option<PathBuf>,
    pub simulate: SimulateSection,
    pub npe: NpeConfig,
    pub snpe: SnpeSection,
    pub exchange: Option<ExchangeConfig>,
    pub sample: SampleSection,
    pub evaluate: EvaluateSection,
    pub compare: CompareSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output_dir: PathBuf::from("out"),
            stats: StatsConfig::default(),
            sim: SimSection::default(),
            prior: None,
            x_obs: None,
            checkpoint: None,
            dataset: None,
            simulate: SimulateSection::default(),
            npe: NpeConfig::default(),
            snpe: SnpeSection::default(),
            exchange: None,
            sample: SampleSection::default(),
            evaluate: EvaluateSection::default(),
            compare: CompareSection::default(),
        }
    }
}

/// Simulator settings; statistics and seed come from the top level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub n: usize,
    pub iterations: usize,
    pub init: InitGraph,
    pub thin: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            n: 16,
            iterations: DEFAULT_ITERATIONS,
            init: InitGraph::Empty,
            thin: 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// Explicit parameter vectors. When absent, `count` draws from the prior.
    pub thetas: Option<Vec<Vec<f64>>>,
    pub count: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnpeSection {
    pub rounds: usize,
    pub atoms_per_batch: usize,
    pub diagnostic_draws: usize,
    pub predictive_draws: usize,
}

impl Default for SnpeSection {
    fn default() -> Self {
        SnpeSection {
            rounds: 4,
            atoms_per_batch: 10,
            diagnostic_draws: 2_000,
            predictive_draws: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub count: usize,
    /// Reject draws outside the prior's ±6 sd box.
    pub truncate: bool,
}

impl Default for SampleSection {
    fn default() -> Self {
        SampleSection {
            count: 1_000,
            truncate: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub replicates: usize,
    pub posterior_draws: usize,
    pub predictive_draws: usize,
    pub truncate: bool,
    pub search_box: Option<SearchBox>,
    pub strata: StrataConfig,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            replicates: 50,
            posterior_draws: 10_000,
            predictive_draws: 100,
            truncate: true,
            search_box: None,
            strata: StrataConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    pub theta_true: Option<Vec<f64>>,
    pub replicates: usize,
    pub npe_draws: usize,
    pub exchange_draws: usize,
    pub truncate: bool,
}

impl Default for CompareSection {
    fn default() -> Self {
        CompareSection {
            theta_true: None,
            replicates: 50,
            npe_draws: 10_000,
            exchange_draws: 6_000,
            truncate: true,
        }
    }
}

/// Seed fields of embedded library structs that would shadow the global seed.
const SHADOWED_SEEDS: &[&str] = &["npe.seed"];

/// Reads `path` (if any), applies overrides and deserialises.
pub fn load(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<RunConfig, ConfigError> {
    let mut doc = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| cfg_err(format!("{}: {e}", p.display())))?;
            text.parse::<toml::Table>()
                .map_err(|e| cfg_err(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    if let Some(s) = seed {
        let s = i64::try_from(s).map_err(|_| cfg_err("--seed must fit in a signed 64-bit integer"))?;
        doc.insert("seed".into(), toml::Value::Integer(s));
    }
    for key in SHADOWED_SEEDS {
        if lookup(&doc, key).is_some() {
            return Err(cfg_err(format!("`{key}` is derived from the global `seed`; set that instead")));
        }
    }
    let cfg: RunConfig = toml::Value::Table(doc)
        .try_into()
        .map_err(|e: toml::de::Error| cfg_err(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn lookup<'a>(doc: &'a toml::Table, dotted: &str) -> Option<&'a toml::Value> {
    let mut parts = dotted.split('.');
    let mut cur = doc.get(parts.next()?)?;
    for p in parts {
        cur = cur.as_table()?.get(p)?;
    }
    Some(cur)
}

/// `a.b.c=value`; the value is parsed as a TOML value, falling back to a bare string.
pub fn apply_override(doc: &mut toml::Table, item: &str) -> Result<(), ConfigError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| cfg_err(format!("override `{item}` is not key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(cfg_err(format!("bad override key `{key}`")));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut table = doc;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| cfg_err(format!("override `{key}`: `{p}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn dim(&self) -> usize {
        self.stats.dim()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = self.dim();
        let check = |what: &str, found: usize| {
            if found == p {
                Ok(())
            } else {
                Err(cfg_err(format!("{what} has dimension {found}, statistics have {p}")))
            }
        };
        if let Some(prior) = &self.prior {
            check("prior", prior.dim())?;
        }
        if let Some(x) = &self.x_obs {
            check("x_obs", x.len())?;
        }
        if let Some(thetas) = &self.simulate.thetas {
            for t in thetas {
                check("simulate.thetas entry", t.len())?;
            }
        }
        if let Some(ex) = &self.exchange {
            check("exchange.proposal", ex.proposal.dim())?;
        }
        if let Some(b) = &self.evaluate.search_box {
            check("evaluate.search_box", b.dim())?;
        }
        if let Some(t) = &self.compare.theta_true {
            check("compare.theta_true", t.len())?;
        }
        self.npe.validate().map_err(|e| cfg_err(e.to_string()))?;
        self.sim_config(0).validate().map_err(|e| cfg_err(e.to_string()))?;
        Ok(())
    }

    pub fn sim_config(&self, seed: u64) -> SimConfig {
        SimConfig {
            n: self.sim.n,
            stats: self.stats.clone(),
            iterations: self.sim.iterations,
            init: self.sim.init.clone(),
            seed,
            thin: self.sim.thin,
        }
    }

    pub fn prior(&self) -> PriorSpec {
        self.prior
            .clone()
            .unwrap_or_else(|| PriorSpec::isotropic(self.dim(), 1.0).expect("dimension >= 1"))
    }

    pub fn x_obs(&self) -> Result<SummaryStats, ConfigError> {
        self.x_obs
            .clone()
            .map(SummaryStats::new)
            .ok_or_else(|| cfg_err("this command needs `x_obs`"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.output_dir.join("model.json"))
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.dataset.clone().unwrap_or_else(|| self.output_dir.join("dataset.csv"))
    }

    /// SHA-256 of the resolved configuration as JSON.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, overrides: &[&str]) -> Result<RunConfig, ConfigError> {
        let dir = std::env::temp_dir().join(format!("ergm-sbi-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(format!("{:x}.toml", Sha256::digest(text.as_bytes())[0]));
        std::fs::write(&path, text).unwrap();
        let ov: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        load(Some(&path), &ov, None)
    }

    #[test]
    fn defaults_are_valid() {
        let cfg = load(None, &[], None).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.prior().dim(), 3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse("sead = 3\n", &[]).is_err());
        assert!(parse("[sim]\nvertices = 3\n", &[]).is_err());
        assert!(parse("[npe]\nepoch = 3\n", &[]).is_err());
    }

    #[test]
    fn overrides_win_over_file() {
        let cfg = parse("seed = 3\n[sim]\nn = 10\n", &["sim.n=12", "npe.epochs=7", "output_dir=runs/a"]).unwrap();
        assert_eq!(cfg.sim.n, 12);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.npe.epochs, 7);
        assert_eq!(cfg.output_dir, PathBuf::from("runs/a"));
        let cfg = parse("x_obs = [1, 2, 3]\n", &["x_obs=[4.0, 5.0, 6.5]"]).unwrap();
        assert_eq!(cfg.x_obs, Some(vec![4.0, 5.0, 6.5]));
    }

    #[test]
    fn dimensions_must_agree() {
        assert!(parse("x_obs = [1.0, 2.0]\n", &[]).is_err());
        assert!(parse("[stats]\nstat_set = [\"edges\"]\nx_obs = [1.0]\n", &[]).is_err());
        assert!(parse("x_obs = [1.0]\n[stats]\nstat_set = [\"edges\"]\n", &[]).is_ok());
        assert!(parse("[prior]\nmean = [0.0]\ncovariance = [[1.0]]\n", &[]).is_err());
    }

    #[test]
    fn library_seeds_cannot_shadow_global_seed() {
        assert!(parse("[npe]\nseed = 4\n", &[]).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = load(None, &[], None).unwrap();
        let b = load(None, &["seed=1".into()], None).unwrap();
        assert_eq!(a.hash(), RunConfig::default().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
