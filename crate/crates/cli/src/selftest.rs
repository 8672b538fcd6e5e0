//! Enumeration oracle checks on graphs with at most five vertices.

use std::collections::HashMap;

use ergm_sbi::exact::{edges_only_model, exact_log_normalizer, exact_stat_distribution, ExactModel};
use ergm_sbi::sim::simulate_trace;
use ergm_sbi::stats::{change_stats, summary_stats};
use ergm_sbi::{Graph, SimConfig, StatsConfig, SummaryStats, ThetaVector};

use crate::commands::{CliError, CliResult};

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn theta(v: &[f64]) -> ThetaVector {
    ThetaVector::new(v.to_vec()).expect("finite")
}

fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

/// Every labelled graph on `n` vertices.
fn all_graphs(n: usize) -> impl Iterator<Item = Graph> {
    (0u64..1 << (n * (n - 1) / 2)).map(move |mask| Graph::from_pair_mask(n, mask))
}

fn normalizer_identities() -> ergm_sbi::Result<Check> {
    let mut worst = 0.0f64;
    for n in 2..=5 {
        let m = n * (n - 1) / 2;
        let model = edges_only_model(n)?;
        for t in [-1.5f64, 0.0, 0.7] {
            // c(θ) = (1 + e^θ)^m for the edges-only model.
            let closed = m as f64 * t.exp().ln_1p();
            worst = worst.max((exact_log_normalizer(&theta(&[t]), &model)? - closed).abs());
        }
        let full = ExactModel::enumerate(n, &StatsConfig::default())?;
        let zero = exact_log_normalizer(&theta(&[0.0; 3]), &full)?;
        worst = worst.max((zero - m as f64 * 2f64.ln()).abs());
    }
    Ok(Check {
        name: "normaliser identities",
        pass: worst < 1e-9,
        detail: format!("max log error {worst:.2e}"),
    })
}

fn distribution_sums() -> ergm_sbi::Result<Check> {
    let model = ExactModel::enumerate(5, &StatsConfig::default())?;
    let mut worst = 0.0f64;
    for t in [[0.0, 0.0, 0.0], [-1.0, 0.4, -0.3], [0.5, -0.2, 0.1]] {
        let total: f64 = exact_stat_distribution(&theta(&t), &model)?.iter().map(|(_, p)| p).sum();
        worst = worst.max((total - 1.0).abs());
    }
    Ok(Check {
        name: "exact distribution sums to one",
        pass: worst < 1e-12,
        detail: format!("max deviation {worst:.2e}"),
    })
}

fn change_stats_exhaustive() -> ergm_sbi::Result<Check> {
    let cfg = StatsConfig::default();
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for n in 3..=5 {
        for g in all_graphs(n) {
            let before = summary_stats(&g, &cfg);
            for (i, j) in pairs(n) {
                let delta = change_stats(&g, i, j, &cfg)?;
                let after = summary_stats(&g.toggled(i, j)?, &cfg);
                for k in 0..delta.len() {
                    worst = worst.max((after[k] - before[k] - delta[k]).abs());
                }
                checked += 1;
            }
        }
    }
    Ok(Check {
        name: "change statistics on every graph",
        pass: worst < 1e-9,
        detail: format!("{checked} toggles, max error {worst:.2e}"),
    })
}

fn key(s: &SummaryStats) -> Vec<u64> {
    s.iter().map(|v| (v * 1e9).round() as i64 as u64).collect()
}

fn sampler_total_variation() -> ergm_sbi::Result<Check> {
    let stats = StatsConfig::default();
    let model = ExactModel::enumerate(4, &stats)?;
    let th = theta(&[-0.4, 0.3, -0.2]);
    let draws = 200_000;
    let cfg = SimConfig::new(4, stats).with_iterations(1_000).with_thin(10).with_seed(17);
    let mut freq: HashMap<Vec<u64>, f64> = HashMap::new();
    for s in simulate_trace(&th, &cfg, draws)? {
        *freq.entry(key(&s)).or_default() += 1.0 / draws as f64;
    }
    let mut tv = 0.0;
    for (s, p) in exact_stat_distribution(&th, &model)? {
        tv += (freq.remove(&key(&s)).unwrap_or(0.0) - p).abs();
    }
    tv = 0.5 * (tv + freq.values().sum::<f64>());
    Ok(Check {
        name: "sampler vs enumeration (n = 4)",
        pass: tv < 0.02,
        detail: format!("total variation {tv:.4}"),
    })
}

pub fn run() -> CliResult<()> {
    let checks = [
        normalizer_identities,
        distribution_sums,
        change_stats_exhaustive,
        sampler_total_variation,
    ];
    let mut failed = Vec::new();
    for check in checks {
        let c = check().map_err(|e| CliError::Oracle(e.to_string()))?;
        println!("[{}] {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        if !c.pass {
            failed.push(c.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Oracle(failed.join(", ")))
    }
}
