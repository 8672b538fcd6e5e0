use ergm_sbi::exchange::{exchange_log_ratio, run_exchange, ExchangeConfig};
use ergm_sbi::flow::{FlowArchitecture, MafModel, Standardizer};
use ergm_sbi::harness::{bias_metrics, point_estimate};
use ergm_sbi::npe::atomic_log_weight;
use ergm_sbi::rng::rng_from_seed;
use ergm_sbi::sim::{item_config, simulate_network, simulate_stats};
use ergm_sbi::stats::{change_stats, gw_statistic, shared_partner_profile, summary_stats};
use ergm_sbi::{Graph, PriorSpec, ProposalSpec, SimConfig, StatsConfig, SummaryStats, ThetaVector, TrainingSet};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn graph_from_bits(n: usize, bits: &[bool]) -> Graph {
    let mut g = Graph::empty(n);
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            if bits[k % bits.len()] {
                g.toggle(i, j).unwrap();
            }
            k += 1;
        }
    }
    g
}

prop_compose! {
    fn arb_graph(lo: usize, hi: usize)(n in lo..=hi, seed in any::<u64>(), density in 0.0f64..1.0) -> Graph {
        let mut rng = rng_from_seed(seed);
        let bits: Vec<bool> = (0..n * (n - 1) / 2).map(|_| rng.random::<f64>() < density).collect();
        graph_from_bits(n, &bits)
    }
}

prop_compose! {
    fn arb_graph_pair(lo: usize, hi: usize)(g in arb_graph(lo, hi), a in any::<u32>(), b in any::<u32>()) -> (Graph, usize, usize) {
        let n = g.n();
        let i = a as usize % n;
        let j = (i + 1 + b as usize % (n - 1)) % n;
        (g, i, j)
    }
}

/// Triple-loop shared-partner counts, indexed by count (entry 0 unused).
fn profile_oracle(g: &Graph) -> (Vec<u64>, Vec<u64>) {
    let n = g.n();
    let mut conn = vec![0u64; n.max(2) - 1];
    let mut non = vec![0u64; n.max(2) - 1];
    for i in 0..n {
        for j in i + 1..n {
            let c = (0..n).filter(|&k| k != i && k != j && g.has_edge(i, k) && g.has_edge(j, k)).count();
            if c > 0 {
                if g.has_edge(i, j) {
                    conn[c] += 1;
                } else {
                    non[c] += 1;
                }
            }
        }
    }
    (conn, non)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn change_stats_match_recomputation((g, i, j) in arb_graph_pair(5, 20)) {
        let cfg = StatsConfig::default();
        let before = summary_stats(&g, &cfg);
        let after = summary_stats(&g.toggled(i, j).unwrap(), &cfg);
        let delta = change_stats(&g, i, j, &cfg).unwrap();
        for k in 0..3 {
            prop_assert!((after[k] - before[k] - delta[k]).abs() <= 1e-9);
        }
    }

    #[test]
    fn change_stats_are_antisymmetric((g, i, j) in arb_graph_pair(3, 15)) {
        let cfg = StatsConfig::default();
        let fwd = change_stats(&g, i, j, &cfg).unwrap();
        let back = change_stats(&g.toggled(i, j).unwrap(), i, j, &cfg).unwrap();
        for k in 0..3 {
            prop_assert!((fwd[k] + back[k]).abs() <= 1e-9);
        }
    }

    #[test]
    fn profile_matches_triple_loop(g in arb_graph(2, 20)) {
        let p = shared_partner_profile(&g);
        let (conn, non) = profile_oracle(&g);
        for c in 1..g.n().saturating_sub(1) {
            prop_assert_eq!(p.connected_at(c), conn[c]);
            prop_assert_eq!(p.nonconnected_at(c), non[c]);
        }
        prop_assert!(p.connected.iter().sum::<u64>() <= g.edge_count() as u64);
    }

    #[test]
    fn stats_invariant_under_relabelling(g in arb_graph(2, 20), seed in any::<u64>()) {
        let mut perm: Vec<usize> = (0..g.n()).collect();
        perm.shuffle(&mut rng_from_seed(seed));
        let h = g.permuted(&perm).unwrap();
        let cfg = StatsConfig::default();
        prop_assert_eq!(summary_stats(&g, &cfg), summary_stats(&h, &cfg));
    }

    #[test]
    fn stats_are_nonnegative_and_edges_integral(g in arb_graph(2, 20)) {
        let s = summary_stats(&g, &StatsConfig::default());
        prop_assert_eq!(s[0], g.edge_count() as f64);
        prop_assert!(s.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn gw_is_monotone(counts in prop::collection::vec(0u64..50, 1..20), idx in any::<usize>(), decay in 0.0f64..3.0) {
        let base = gw_statistic(&counts, decay).unwrap();
        let mut bumped = counts.clone();
        let k = idx % counts.len();
        bumped[k] += 1;
        prop_assert!(gw_statistic(&bumped, decay).unwrap() >= base);
    }

    #[test]
    fn toggle_is_symmetric_involution((g, i, j) in arb_graph_pair(2, 20)) {
        let mut h = g.clone();
        h.toggle(i, j).unwrap();
        prop_assert_eq!(h.has_edge(i, j), h.has_edge(j, i));
        prop_assert_ne!(h.has_edge(i, j), g.has_edge(i, j));
        prop_assert_eq!(h.edges().len(), h.edge_count());
        h.toggle(j, i).unwrap();
        prop_assert_eq!(h, g);
    }

    #[test]
    fn graph_text_round_trip(g in arb_graph(1, 20)) {
        let back: Graph = g.to_text().parse().unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn atomic_weight_ignores_constant_shift(r in prop::collection::vec(-20.0f64..20.0, 2..12), c in -50.0f64..50.0, own in any::<usize>()) {
        let own = own % r.len();
        let shifted: Vec<f64> = r.iter().map(|v| v + c).collect();
        let a = atomic_log_weight(&r, own).unwrap();
        let b = atomic_log_weight(&shifted, own).unwrap();
        prop_assert!((a - b).abs() <= 1e-10);
        prop_assert!(a <= 1e-12);
    }

    #[test]
    fn bias_metric_inequalities(pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..30)) {
        let t: Vec<ThetaVector> = pairs.iter().map(|p| ThetaVector::new(vec![p.0]).unwrap()).collect();
        let e: Vec<ThetaVector> = pairs.iter().map(|p| ThetaVector::new(vec![p.1]).unwrap()).collect();
        let r = bias_metrics(&t, &e).unwrap();
        let tol = 1e-12 * r.rmse[0].max(1.0);
        prop_assert!(r.me[0].abs() <= r.mae[0] + tol);
        prop_assert!(r.mae[0] <= r.rmse[0] + tol);
    }

    #[test]
    fn point_estimate_ignores_order(v in prop::collection::vec(-10.0f64..10.0, 1..40), seed in any::<u64>()) {
        let s: Vec<ThetaVector> = v.iter().map(|&x| ThetaVector::new(vec![x, -x]).unwrap()).collect();
        let mut shuffled = s.clone();
        shuffled.shuffle(&mut rng_from_seed(seed));
        let (a, b) = (point_estimate(&s).unwrap(), point_estimate(&shuffled).unwrap());
        prop_assert!((a[0] - b[0]).abs() <= 1e-12 && (a[1] - b[1]).abs() <= 1e-12);
    }

    #[test]
    fn exchange_ratio_uses_prior_differences(t in -3.0f64..3.0, tp in -3.0f64..3.0, xo in 0.0f64..10.0, xa in 0.0f64..10.0, var in 0.5f64..20.0) {
        let prior = PriorSpec::isotropic(1, var).unwrap();
        let got = exchange_log_ratio(
            &ThetaVector::new(vec![t]).unwrap(),
            &ThetaVector::new(vec![tp]).unwrap(),
            &SummaryStats::new(vec![xo]),
            &SummaryStats::new(vec![xa]),
            &prior,
        ).unwrap();
        // Unnormalised log prior: the constant must cancel.
        let want = (tp - t) * (xo - xa) - (tp * tp - t * t) / (2.0 * var);
        prop_assert!((got - want).abs() <= 1e-9);
    }

    #[test]
    fn training_set_csv_round_trip(rows in prop::collection::vec((prop::collection::vec(-1e6f64..1e6, 3), 0u32..5), 0..20)) {
        let mut set = TrainingSet::new(3);
        for (v, r) in &rows {
            set.push(ThetaVector::new(v.clone()).unwrap(), SummaryStats::new(v.iter().map(|x| x.abs()).collect()), *r).unwrap();
        }
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        prop_assert_eq!(TrainingSet::read_csv(buf.as_slice()).unwrap(), set);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn simulation_is_deterministic(seed in any::<u64>(), t in prop::collection::vec(-1.0f64..1.0, 3)) {
        let cfg = SimConfig::new(8, StatsConfig::default()).with_iterations(500).with_seed(seed);
        let th = ThetaVector::new(t).unwrap();
        prop_assert_eq!(simulate_network(&th, &cfg).unwrap(), simulate_network(&th, &cfg).unwrap());
    }

    #[test]
    fn batch_equals_single_calls(seed in any::<u64>()) {
        let cfg = SimConfig::new(6, StatsConfig::default()).with_iterations(300).with_seed(seed);
        let thetas: Vec<ThetaVector> = (0..5).map(|k| ThetaVector::new(vec![-0.5 + 0.2 * k as f64, 0.1, -0.1]).unwrap()).collect();
        let batch = simulate_stats(&thetas, &cfg).unwrap();
        for (b, th) in thetas.iter().enumerate() {
            let g = simulate_network(th, &item_config(&cfg, b)).unwrap();
            prop_assert_eq!(&batch[b], &summary_stats(&g, &cfg.stats));
        }
    }

    #[test]
    fn exchange_sees_graphs_only_through_statistics(g in arb_graph(5, 5), seed in any::<u64>()) {
        let mut perm: Vec<usize> = (0..5).collect();
        perm.shuffle(&mut rng_from_seed(seed));
        let sim = SimConfig::new(5, StatsConfig::edges_only()).with_iterations(50);
        let prior = PriorSpec::isotropic(1, 10.0).unwrap();
        let cfg = ExchangeConfig {
            iterations: 300,
            burn_in: 50,
            proposal: ProposalSpec::isotropic(1, 0.5).unwrap(),
            ..ExchangeConfig::with_defaults(1).unwrap()
        };
        let a = run_exchange(&summary_stats(&g, &sim.stats), &prior, &cfg, &sim, 3).unwrap();
        let h = g.permuted(&perm).unwrap();
        let b = run_exchange(&summary_stats(&h, &sim.stats), &prior, &cfg, &sim, 3).unwrap();
        prop_assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn made_masks_are_autoregressive(seed in any::<u64>(), p in 1usize..5) {
        let arch = FlowArchitecture { p, context_dim: 2, num_transforms: 1, hidden_units: 7, hidden_layers: 2 };
        let mut m = MafModel::new(arch, Standardizer::identity(p, 2), seed).unwrap();
        let mut rng = rng_from_seed(seed ^ 1);
        let params: Vec<f64> = (0..m.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        m.set_params(&params).unwrap();
        let theta: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = [0.2, -0.4];
        let z = m.forward(&theta, &x).unwrap().0;
        for j in 0..p {
            let mut t = theta.clone();
            t[j] += 0.5;
            let zj = m.forward(&t, &x).unwrap().0;
            for i in 0..j {
                prop_assert_eq!(z[i], zj[i]);
            }
        }
    }
}
