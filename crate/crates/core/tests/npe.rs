use approx::assert_abs_diff_eq;
use ergm_sbi::exact::edges_only_model;
use ergm_sbi::flow::{FlowArchitecture, MafModel, Standardizer};
use ergm_sbi::npe::{
    posterior_sample, simulate_prior_round, train_npe, train_snpe, GridEstimator, NpeConfig, NpeEstimator,
    PosteriorEstimator, SnpeConfig,
};
use ergm_sbi::rng::rng_from_seed;
use ergm_sbi::{Error, PriorSpec, SimConfig, StatsConfig, SummaryStats, ThetaVector, TrainingSet};
use rand_distr::{Distribution, StandardNormal};

fn small_cfg(pairs: usize, seed: u64) -> NpeConfig {
    NpeConfig {
        num_pairs: pairs,
        epochs: 30,
        batch_size: 64,
        learning_rate: 2e-3,
        early_stop_patience: 5,
        seed,
        num_transforms: 2,
        hidden_units: 16,
        ..NpeConfig::default()
    }
}

fn edges_sim(n: usize, seed: u64) -> SimConfig {
    SimConfig::new(n, StatsConfig::edges_only()).with_iterations(100).with_seed(seed)
}

#[test]
fn prior_round_shapes_and_determinism() {
    let prior = PriorSpec::isotropic(1, 10.0).unwrap();
    let one = simulate_prior_round(&prior, 1, &edges_sim(4, 0)).unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!(one.pairs()[0].round, 0);
    let a = simulate_prior_round(&prior, 50, &edges_sim(4, 3)).unwrap();
    let b = simulate_prior_round(&prior, 50, &edges_sim(4, 3)).unwrap();
    assert_eq!(a, b);
    assert!(simulate_prior_round(&prior, 0, &edges_sim(4, 3)).is_err());
}

#[test]
fn prior_round_theta_mean() {
    let prior = PriorSpec::isotropic(3, 10.0).unwrap();
    let sim = SimConfig::new(4, StatsConfig::default()).with_iterations(5).with_seed(1);
    let set = simulate_prior_round(&prior, 100_000, &sim).unwrap();
    for k in 0..3 {
        let m = set.thetas().map(|t| t[k]).sum::<f64>() / set.len() as f64;
        assert_abs_diff_eq!(m, 0.0, epsilon = 0.1);
    }
}

#[test]
fn uninformative_data_recovers_prior() {
    let mut rng = rng_from_seed(5);
    let mut set = TrainingSet::new(1);
    for _ in 0..5_000 {
        let t: f64 = StandardNormal.sample(&mut rng);
        set.push(ThetaVector::new(vec![t]).unwrap(), SummaryStats::new(vec![3.0]), 0).unwrap();
    }
    let (model, report) = train_npe(&set, &small_cfg(5_000, 2)).unwrap();
    assert!(report.best_validation_loss() <= report.initial_validation_loss());
    let x = SummaryStats::new(vec![3.0]);
    let draws = model.sample_array(&x, 40_000, &mut rng_from_seed(1)).unwrap();
    let col = draws.column(0);
    assert_abs_diff_eq!(col.mean().unwrap(), 0.0, epsilon = 0.1);
    assert_abs_diff_eq!(col.std(1.0), 1.0, epsilon = 0.1);
}

#[test]
fn training_rejects_later_rounds_and_bad_configs() {
    let prior = PriorSpec::isotropic(1, 1.0).unwrap();
    let set = simulate_prior_round(&prior, 100, &edges_sim(4, 0)).unwrap().with_round(2);
    assert!(train_npe(&set, &small_cfg(100, 0)).is_err());
    let bad = NpeConfig {
        validation_fraction: 0.9,
        ..small_cfg(100, 0)
    };
    let set = simulate_prior_round(&prior, 100, &edges_sim(4, 0)).unwrap();
    assert!(train_npe(&set, &bad).is_err());
}

#[test]
fn single_round_snpe_equals_npe() {
    let prior = PriorSpec::isotropic(1, 1.0).unwrap();
    let sim = edges_sim(4, 8);
    let cfg = small_cfg(800, 4);
    let set = simulate_prior_round(&prior, cfg.num_pairs, &sim).unwrap();
    let (npe, _) = train_npe(&set, &cfg).unwrap();
    let snpe_cfg = SnpeConfig::new(cfg, 1, SummaryStats::new(vec![2.0]));
    let (snpe, diags) = train_snpe(&snpe_cfg, &prior, &sim).unwrap();
    assert_eq!(npe, snpe);
    assert_eq!(diags.len(), 1);
}

#[test]
fn snpe_reuses_all_rounds() {
    let prior = PriorSpec::isotropic(1, 1.0).unwrap();
    let mut cfg = SnpeConfig::new(small_cfg(300, 1), 3, SummaryStats::new(vec![4.0]));
    cfg.npe.epochs = 3;
    cfg.diagnostic_draws = 200;
    cfg.predictive_draws = 50;
    let (_, diags) = train_snpe(&cfg, &prior, &edges_sim(4, 2)).unwrap();
    let sizes: Vec<usize> = diags.iter().map(|d| d.n_pairs).collect();
    assert_eq!(sizes, vec![300, 600, 900]);
    assert!(diags.iter().all(|d| d.predictive_mean.is_some() && d.leakage < 0.5));
    let again = train_snpe(&cfg, &prior, &edges_sim(4, 2)).unwrap().1;
    assert_eq!(diags, again);
}

#[test]
fn snpe_requires_matching_observation() {
    let prior = PriorSpec::isotropic(1, 1.0).unwrap();
    let cfg = SnpeConfig::new(small_cfg(300, 1), 2, SummaryStats::new(vec![4.0, 1.0]));
    assert!(train_snpe(&cfg, &prior, &edges_sim(4, 2)).is_err());
}

fn identity_flow(mean: f64) -> MafModel {
    let arch = FlowArchitecture::with_defaults(2, 2);
    let st = Standardizer {
        theta_mean: vec![mean; 2],
        ..Standardizer::identity(2, 2)
    };
    MafModel::new(arch, st, 0).unwrap()
}

#[test]
fn posterior_sampling_and_leakage() {
    let prior = PriorSpec::isotropic(2, 1.0).unwrap();
    let x = SummaryStats::new(vec![0.0, 0.0]);
    let plain = posterior_sample(&identity_flow(0.0), &x, 20_000, &prior, false, &mut rng_from_seed(1)).unwrap();
    assert_eq!(plain.samples.len(), 20_000);
    let m = plain.samples.iter().map(|s| s[0]).sum::<f64>() / 20_000.0;
    assert_abs_diff_eq!(m, 0.0, epsilon = 0.03);

    let boxed = posterior_sample(&identity_flow(0.0), &x, 5_000, &prior, true, &mut rng_from_seed(2)).unwrap();
    assert!(boxed.rejection_fraction < 1e-3);

    let shifted = posterior_sample(&identity_flow(50.0), &x, 100, &prior, true, &mut rng_from_seed(3));
    assert!(matches!(shifted, Err(Error::Leakage { .. })));
}

#[test]
fn estimators_share_an_interface() {
    let prior = PriorSpec::isotropic(1, 1.0).unwrap();
    let exact = edges_only_model(4).unwrap();
    let grid = GridEstimator {
        model: &exact,
        prior: &prior,
    };
    let x = SummaryStats::new(vec![3.0]);
    let m = grid.posterior_mean(&x, 1, 0).unwrap();
    let draws = grid.draw(&x, 50_000, 4).unwrap();
    let mc = draws.iter().map(|t| t[0]).sum::<f64>() / draws.len() as f64;
    assert_abs_diff_eq!(m[0], mc, epsilon = 0.02);

    let flow = MafModel::new(FlowArchitecture::with_defaults(1, 1), Standardizer::identity(1, 1), 0).unwrap();
    let npe = NpeEstimator {
        model: &flow,
        prior: &prior,
        truncate: true,
    };
    assert_eq!(npe.draw(&x, 10, 1).unwrap(), npe.draw(&x, 10, 1).unwrap());
    assert_eq!(npe.dim(), 1);
}
