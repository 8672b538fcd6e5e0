//! Network summary statistics: edge count, GWESP and GWNSP.
//!
//! The geometrically weighted statistics share one kernel,
//!
//! ```text
//! w(i) = exp(τ) · (1 − (1 − exp(−τ))^i)
//! ```
//!
//! applied to the shared-partner profile of connected pairs (GWESP) or of
//! non-connected pairs (GWNSP). Consecutive weights differ by
//! `w(i+1) − w(i) = (1 − exp(−τ))^i`, which is what makes the change
//! statistics cheap: toggling `{i, j}` only moves pairs that gain or lose
//! `i` or `j` as a shared partner.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Decay used by the reference neuroimaging ERGM fits.
pub const DEFAULT_DECAY: f64 = 0.75;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatKind {
    Edges,
    Gwesp,
    Gwnsp,
}

impl StatKind {
    pub const ALL: [StatKind; 3] = [StatKind::Edges, StatKind::Gwesp, StatKind::Gwnsp];

    fn slot(self) -> usize {
        match self {
            StatKind::Edges => 0,
            StatKind::Gwesp => 1,
            StatKind::Gwnsp => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StatKind::Edges => "edges",
            StatKind::Gwesp => "gwesp",
            StatKind::Gwnsp => "gwnsp",
        }
    }
}

impl fmt::Display for StatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StatKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "edges" => Ok(StatKind::Edges),
            "gwesp" => Ok(StatKind::Gwesp),
            "gwnsp" => Ok(StatKind::Gwnsp),
            other => Err(Error::invalid(format!("unknown statistic `{other}`"))),
        }
    }
}

/// Which statistics are enabled, in which order, and the GW decay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStatsConfig", into = "RawStatsConfig")]
pub struct StatsConfig {
    decay: f64,
    stat_set: Vec<StatKind>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStatsConfig {
    #[serde(default = "default_decay")]
    decay: f64,
    #[serde(default = "default_stat_set")]
    stat_set: Vec<StatKind>,
}

fn default_decay() -> f64 {
    DEFAULT_DECAY
}

fn default_stat_set() -> Vec<StatKind> {
    StatKind::ALL.to_vec()
}

impl TryFrom<RawStatsConfig> for StatsConfig {
    type Error = Error;

    fn try_from(raw: RawStatsConfig) -> Result<Self> {
        StatsConfig::new(raw.decay, raw.stat_set)
    }
}

impl From<StatsConfig> for RawStatsConfig {
    fn from(cfg: StatsConfig) -> Self {
        RawStatsConfig {
            decay: cfg.decay,
            stat_set: cfg.stat_set,
        }
    }
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            decay: DEFAULT_DECAY,
            stat_set: StatKind::ALL.to_vec(),
        }
    }
}

impl StatsConfig {
    pub fn new(decay: f64, stat_set: Vec<StatKind>) -> Result<Self> {
        if !(decay >= 0.0 && decay.is_finite()) {
            return Err(Error::invalid(format!("decay must be finite and >= 0, got {decay}")));
        }
        if stat_set.is_empty() {
            return Err(Error::invalid("stat_set must not be empty"));
        }
        for (k, s) in stat_set.iter().enumerate() {
            if stat_set[..k].contains(s) {
                return Err(Error::invalid(format!("duplicate statistic `{s}`")));
            }
        }
        Ok(StatsConfig { decay, stat_set })
    }

    /// Edges-only model, whose normaliser has a closed form.
    pub fn edges_only() -> Self {
        StatsConfig {
            decay: DEFAULT_DECAY,
            stat_set: vec![StatKind::Edges],
        }
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn stat_set(&self) -> &[StatKind] {
        &self.stat_set
    }

    pub fn dim(&self) -> usize {
        self.stat_set.len()
    }

    fn needs_gw(&self) -> bool {
        self.stat_set.iter().any(|s| *s != StatKind::Edges)
    }

    fn project(&self, full: [f64; 3]) -> Vec<f64> {
        self.stat_set.iter().map(|s| full[s.slot()]).collect()
    }
}

/// A statistics vector `h(y)` in `stat_set` order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SummaryStats(Vec<f64>);

impl SummaryStats {
    pub fn new(values: Vec<f64>) -> Self {
        SummaryStats(values)
    }

    pub fn zeros(dim: usize) -> Self {
        SummaryStats(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for SummaryStats {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for SummaryStats {
    fn from(v: Vec<f64>) -> Self {
        SummaryStats(v)
    }
}

/// Shared-partner counts. Entry `k` of each vector counts pairs with exactly
/// `k + 1` common neighbours; pairs with none are not stored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SharedPartnerProfile {
    pub connected: Vec<u64>,
    pub nonconnected: Vec<u64>,
}

impl SharedPartnerProfile {
    /// Count of connected pairs sharing exactly `i >= 1` partners.
    pub fn connected_at(&self, i: usize) -> u64 {
        i.checked_sub(1)
            .and_then(|k| self.connected.get(k))
            .copied()
            .unwrap_or(0)
    }

    pub fn nonconnected_at(&self, i: usize) -> u64 {
        i.checked_sub(1)
            .and_then(|k| self.nonconnected.get(k))
            .copied()
            .unwrap_or(0)
    }
}

pub fn shared_partner_profile(g: &Graph) -> SharedPartnerProfile {
    let len = g.n().saturating_sub(2);
    let mut connected = vec![0u64; len];
    let mut nonconnected = vec![0u64; len];
    for u in 0..g.n() {
        for v in (u + 1)..g.n() {
            let c = g.common_neighbours(u, v);
            if c == 0 {
                continue;
            }
            if g.has_edge(u, v) {
                connected[c - 1] += 1;
            } else {
                nonconnected[c - 1] += 1;
            }
        }
    }
    SharedPartnerProfile {
        connected,
        nonconnected,
    }
}

/// Kernel weights `w(0..=max_partners)`, with `w(0) = 0`.
#[derive(Clone, Debug)]
pub(crate) struct GwWeights(Vec<f64>);

impl GwWeights {
    pub(crate) fn new(decay: f64, max_partners: usize) -> Self {
        let scale = decay.exp();
        let ratio = 1.0 - (-decay).exp();
        let mut pow = 1.0;
        let mut w = Vec::with_capacity(max_partners + 1);
        w.push(0.0);
        for _ in 1..=max_partners {
            pow *= ratio;
            w.push(scale * (1.0 - pow));
        }
        GwWeights(w)
    }

    #[inline]
    pub(crate) fn at(&self, i: usize) -> f64 {
        self.0[i]
    }

    fn apply(&self, counts: &[u64]) -> f64 {
        counts
            .iter()
            .enumerate()
            .map(|(k, &c)| self.0[k + 1] * c as f64)
            .sum()
    }
}

/// Geometrically weighted sum over a profile vector (entry `k` holds the
/// count for `k + 1` shared partners).
pub fn gw_statistic(counts: &[u64], decay: f64) -> Result<f64> {
    if !(decay >= 0.0 && decay.is_finite()) {
        return Err(Error::invalid(format!("decay must be finite and >= 0, got {decay}")));
    }
    Ok(GwWeights::new(decay, counts.len()).apply(counts))
}

pub fn summary_stats(g: &Graph, cfg: &StatsConfig) -> SummaryStats {
    let mut full = [g.edge_count() as f64, 0.0, 0.0];
    if cfg.needs_gw() {
        let profile = shared_partner_profile(g);
        let weights = GwWeights::new(cfg.decay, g.n().saturating_sub(2));
        full[1] = weights.apply(&profile.connected);
        full[2] = weights.apply(&profile.nonconnected);
    }
    SummaryStats(cfg.project(full))
}

/// Reusable change-statistic evaluator for one `(n, cfg)`; the MH sampler
/// builds one per chain so the weight table is computed once.
#[derive(Clone, Debug)]
pub struct ChangeStats {
    cfg: StatsConfig,
    weights: GwWeights,
    needs_gw: bool,
}

impl ChangeStats {
    pub fn new(n: usize, cfg: &StatsConfig) -> Self {
        ChangeStats {
            cfg: cfg.clone(),
            weights: GwWeights::new(cfg.decay, n.saturating_sub(2)),
            needs_gw: cfg.needs_gw(),
        }
    }

    pub fn config(&self) -> &StatsConfig {
        &self.cfg
    }

    /// `(Δedges, ΔGWESP, ΔGWNSP)` for toggling `{i, j}`; the pair must be valid.
    pub(crate) fn delta_full(&self, g: &Graph, i: usize, j: usize) -> [f64; 3] {
        let adding = !g.has_edge(i, j);
        let mut d = [if adding { 1.0 } else { -1.0 }, 0.0, 0.0];
        if !self.needs_gw {
            return d;
        }
        let w = &self.weights;

        // {i, j} keeps its partner count but switches class.
        let own = w.at(g.common_neighbours(i, j));
        if adding {
            d[1] += own;
            d[2] -= own;
        } else {
            d[1] -= own;
            d[2] += own;
        }

        // Every k adjacent to one endpoint gains/loses the other endpoint's
        // partner relation through the toggled edge.
        let mut shift = |a: usize, b: usize| {
            for k in g.neighbours(a) {
                if k == b {
                    continue;
                }
                let before = g.common_neighbours(b, k);
                let after = if adding { before + 1 } else { before - 1 };
                let dw = w.at(after) - w.at(before);
                if g.has_edge(b, k) {
                    d[1] += dw;
                } else {
                    d[2] += dw;
                }
            }
        };
        shift(i, j);
        shift(j, i);
        d
    }

    /// Δh in `stat_set` order, written into `out`.
    #[inline]
    pub(crate) fn delta_into(&self, g: &Graph, i: usize, j: usize, out: &mut [f64]) {
        let full = self.delta_full(g, i, j);
        for (o, s) in out.iter_mut().zip(self.cfg.stat_set.iter()) {
            *o = full[s.slot()];
        }
    }

    pub fn delta(&self, g: &Graph, i: usize, j: usize) -> Result<Vec<f64>> {
        g.validate_pair(i, j)?;
        Ok(self.cfg.project(self.delta_full(g, i, j)))
    }
}

/// `h(g with {i, j} toggled) − h(g)`, computed incrementally.
pub fn change_stats(g: &Graph, i: usize, j: usize, cfg: &StatsConfig) -> Result<Vec<f64>> {
    ChangeStats::new(g.n(), cfg).delta(g, i, j)
}
