//! ERGM simulation by Metropolis–Hastings single-pair toggling.
//!
//! The proposal picks an unordered vertex pair uniformly and flips it, so it
//! is symmetric and the acceptance probability is `min(1, exp(θ·Δh))`.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::TrainingSet;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::{item_seed, rng_from_seed};
use crate::stats::{summary_stats, ChangeStats, StatsConfig, SummaryStats};
use crate::theta::ThetaVector;

/// Default MH steps per network realisation.
pub const DEFAULT_ITERATIONS: usize = 50_000;

static SIMULATOR_CALLS: AtomicU64 = AtomicU64::new(0);

/// Number of network realisations produced by this process so far.
pub fn simulator_calls() -> u64 {
    SIMULATOR_CALLS.load(Ordering::Relaxed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitGraph {
    Empty,
    Full,
    Given(Graph),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Vertex count of every simulated network.
    pub n: usize,
    #[serde(default)]
    pub stats: StatsConfig,
    /// MH toggle proposals per realisation.
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_init")]
    pub init: InitGraph,
    #[serde(default)]
    pub seed: u64,
    /// Steps between recorded states in [`simulate_trace`].
    #[serde(default = "default_thin")]
    pub thin: usize,
}

fn default_iterations() -> usize {
    DEFAULT_ITERATIONS
}

fn default_init() -> InitGraph {
    InitGraph::Empty
}

fn default_thin() -> usize {
    1
}

impl SimConfig {
    pub fn new(n: usize, stats: StatsConfig) -> Self {
        SimConfig {
            n,
            stats,
            iterations: DEFAULT_ITERATIONS,
            init: InitGraph::Empty,
            seed: 0,
            thin: 1,
        }
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_init(mut self, init: InitGraph) -> Self {
        self.init = init;
        self
    }

    pub fn with_thin(mut self, thin: usize) -> Self {
        self.thin = thin;
        self
    }

    pub fn dim(&self) -> usize {
        self.stats.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("simulation needs n >= 2"));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be >= 1"));
        }
        if self.thin == 0 {
            return Err(Error::invalid("thin must be >= 1"));
        }
        if let InitGraph::Given(g) = &self.init {
            Error::check_dim(self.n, g.n())?;
        }
        Ok(())
    }

    pub fn initial_graph(&self) -> Graph {
        match &self.init {
            InitGraph::Empty => Graph::empty(self.n),
            InitGraph::Full => Graph::complete(self.n),
            InitGraph::Given(g) => g.clone(),
        }
    }
}

/// `θ·h`, the log of the unnormalised ERGM density.
pub fn log_unnorm_density(theta: &ThetaVector, h: &SummaryStats) -> Result<f64> {
    theta.dot(h)
}

/// A sampler bound to one `(n, stats)` model; reuses its change-statistic
/// tables and scratch buffer across steps.
pub struct Toggler<'a> {
    theta: &'a [f64],
    change: ChangeStats,
    delta: Vec<f64>,
}

impl<'a> Toggler<'a> {
    pub fn new(theta: &'a ThetaVector, n: usize, stats: &StatsConfig) -> Result<Self> {
        Error::check_dim(stats.dim(), theta.len())?;
        Ok(Toggler {
            theta: theta.as_slice(),
            change: ChangeStats::new(n, stats),
            delta: vec![0.0; stats.dim()],
        })
    }

    /// One MH proposal applied in place; returns whether it was accepted.
    #[inline]
    pub fn step<R: Rng + ?Sized>(&mut self, g: &mut Graph, rng: &mut R) -> bool {
        let n = g.n();
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        self.change.delta_into(g, i, j, &mut self.delta);
        let log_ratio: f64 = self.theta.iter().zip(&self.delta).map(|(t, d)| t * d).sum();
        let accept = log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio;
        if accept {
            g.toggle_unchecked(i, j);
        }
        accept
    }

    pub fn run<R: Rng + ?Sized>(&mut self, g: &mut Graph, steps: usize, rng: &mut R) {
        for _ in 0..steps {
            self.step(g, rng);
        }
    }
}

/// One MH step from `g`, returning the next state.
pub fn mh_step<R: Rng + ?Sized>(
    g: &Graph,
    theta: &ThetaVector,
    stats: &StatsConfig,
    rng: &mut R,
) -> Result<Graph> {
    if g.n() < 2 {
        return Err(Error::invalid("MH step needs n >= 2"));
    }
    let mut next = g.clone();
    Toggler::new(theta, g.n(), stats)?.step(&mut next, rng);
    Ok(next)
}

/// Runs `cfg.iterations` steps from `start` (or the configured initial
/// graph) using the caller's random stream.
pub fn simulate_network_with_rng<R: Rng + ?Sized>(
    theta: &ThetaVector,
    cfg: &SimConfig,
    start: Option<Graph>,
    rng: &mut R,
) -> Result<Graph> {
    cfg.validate()?;
    let mut g = start.unwrap_or_else(|| cfg.initial_graph());
    Error::check_dim(cfg.n, g.n())?;
    Toggler::new(theta, cfg.n, &cfg.stats)?.run(&mut g, cfg.iterations, rng);
    SIMULATOR_CALLS.fetch_add(1, Ordering::Relaxed);
    Ok(g)
}

/// One network realisation, deterministic in `cfg.seed`.
pub fn simulate_network(theta: &ThetaVector, cfg: &SimConfig) -> Result<Graph> {
    let mut rng = rng_from_seed(cfg.seed);
    simulate_network_with_rng(theta, cfg, None, &mut rng)
}

/// Burns in for `cfg.iterations` steps, then records `draws` statistics
/// vectors spaced `cfg.thin` steps apart.
pub fn simulate_trace(theta: &ThetaVector, cfg: &SimConfig, draws: usize) -> Result<Vec<SummaryStats>> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    let mut g = cfg.initial_graph();
    let mut toggler = Toggler::new(theta, cfg.n, &cfg.stats)?;
    toggler.run(&mut g, cfg.iterations, &mut rng);
    let mut out = Vec::with_capacity(draws);
    for _ in 0..draws {
        toggler.run(&mut g, cfg.thin, &mut rng);
        out.push(summary_stats(&g, &cfg.stats));
    }
    SIMULATOR_CALLS.fetch_add(1, Ordering::Relaxed);
    Ok(out)
}

/// Config for item `index` of a batch: same model, seed split off `cfg.seed`.
pub fn item_config(cfg: &SimConfig, index: usize) -> SimConfig {
    SimConfig {
        seed: item_seed(cfg.seed, index as u64),
        ..cfg.clone()
    }
}

/// Statistics of one independent realisation per θ, in input order.
pub fn simulate_stats(thetas: &[ThetaVector], cfg: &SimConfig) -> Result<Vec<SummaryStats>> {
    cfg.validate()?;
    thetas
        .par_iter()
        .enumerate()
        .map(|(b, theta)| {
            let item = item_config(cfg, b);
            let g = simulate_network(theta, &item)?;
            Ok(summary_stats(&g, &cfg.stats))
        })
        .collect()
}

/// Pairs `(θ_b, x_b)` with `x_b = h(y_b)`, `y_b ~ ERGM(θ_b)`; round 0.
pub fn simulate_stats_batch(thetas: &[ThetaVector], cfg: &SimConfig) -> Result<TrainingSet> {
    let xs = simulate_stats(thetas, cfg)?;
    let mut set = TrainingSet::new(cfg.dim());
    for (theta, x) in thetas.iter().zip(xs) {
        set.push(theta.clone(), x, 0)?;
    }
    Ok(set)
}
