use super::*;
use crate::funcmap::synthesize_bandlimited;
use crate::gradcheck::random_instance;
use crate::graph::{generate_community_graph, spectral_decompose, CommunityParams};
use proptest::prelude::*;

fn sbm_basis(nodes: usize, k: usize, seed: u64) -> Arc<SpectralBasis> {
    let g = generate_community_graph(
        &CommunityParams {
            nodes,
            communities: 3,
            p_in: 0.7,
            p_out: 0.1,
            weight_in: 1.0,
            weight_out: 0.2,
        },
        seed,
    )
    .unwrap();
    Arc::new(spectral_decompose(&g.laplacian(), k).unwrap())
}

fn random_mask(rows: usize, cols: usize, count: usize, seed: u64) -> Mask {
    let mut all: Vec<_> = (0..cols).flat_map(|j| (0..rows).map(move |i| (i, j))).collect();
    all.shuffle(&mut rng::seeded(seed));
    Mask::from_indices(rows, cols, all.into_iter().take(count)).unwrap()
}

#[test]
fn split_sizes_and_partition() {
    let mask = random_mask(20, 10, 100, 1);
    let split = split_observed(&mask, 0.05, 7).unwrap();
    assert_eq!(split.val.count(), 5);
    assert_eq!(split.train.count(), 95);
    assert!(split.train.is_disjoint(&split.val));
    assert_eq!(split.train.union(&split.val).unwrap(), mask);
}

#[test]
fn split_is_deterministic_by_seed() {
    let mask = random_mask(20, 10, 100, 1);
    assert_eq!(split_observed(&mask, 0.05, 3).unwrap(), split_observed(&mask, 0.05, 3).unwrap());
    assert_ne!(split_observed(&mask, 0.3, 3).unwrap(), split_observed(&mask, 0.3, 4).unwrap());
}

#[test]
fn split_half_of_ten() {
    let mask = random_mask(5, 5, 10, 2);
    let split = split_observed(&mask, 0.5, 0).unwrap();
    assert_eq!((split.train.count(), split.val.count()), (5, 5));
}

#[test]
fn split_rejects_degenerate_inputs() {
    assert!(split_observed(&random_mask(4, 4, 3, 0), 0.05, 0).is_err());
    assert!(split_observed(&random_mask(4, 4, 10, 0), 1.0, 0).is_err());
    assert!(split_observed(&random_mask(4, 4, 10, 0), -0.1, 0).is_err());
    let all = split_observed(&random_mask(4, 4, 10, 0), 0.0, 0).unwrap();
    assert_eq!(all.val.count(), 0);
}

#[test]
fn init_uses_identity_and_projection() {
    let (rb, cb) = (sbm_basis(12, 4, 1), sbm_basis(9, 4, 2));
    let mut r = rng::seeded(5);
    let full = DMatrix::from_fn(12, 9, |_, _| {
        let z: f64 = rand_distr::StandardNormal.sample(&mut r);
        z
    });
    let obs = MaskedMatrix::observe(&full, random_mask(12, 9, 50, 3)).unwrap();
    let model = init_model(&obs, rb.clone(), cb.clone()).unwrap();
    assert_eq!(model.p(), &DMatrix::identity(4, 4));
    assert_eq!(model.q(), &DMatrix::identity(4, 4));

    // Explicit triple sum over the observed entries.
    let (phi, psi) = (rb.vectors(), cb.vectors());
    let oracle = DMatrix::from_fn(4, 4, |a, b| {
        obs.entries().iter().map(|&(i, j, v)| phi[(i, a)] * v * psi[(j, b)]).sum::<f64>()
    });
    assert!((model.c() - oracle).amax() <= 1e-12);

    let empty = MaskedMatrix::observe(&full, Mask::empty(12, 9)).unwrap();
    assert_eq!(init_model(&empty, rb, cb).unwrap().c(), &DMatrix::zeros(4, 4));
}

use rand_distr::Distribution;

#[test]
fn one_plain_step_matches_gradient_update() {
    let (model, obs) = random_instance(8, 7, 3, 11).unwrap();
    let config = FitConfig {
        k: 3,
        learning_rate: 1e-3,
        mu: 0.1,
        ..FitConfig::default()
    };
    let grads = config.objective().gradients(&model, &obs).unwrap();
    let mut trainer = Trainer::new(model.clone(), obs, &config).unwrap();
    trainer.step().unwrap();
    let lr = config.learning_rate;
    assert_eq!(trainer.model().c(), &(model.c() - &grads.c * lr));
    assert_eq!(trainer.model().p(), &(model.p() - &grads.p * lr));
    assert_eq!(trainer.model().q(), &(model.q() - &grads.q * lr));
}

#[test]
fn frozen_transforms_stay_identity() {
    let (model, obs) = random_instance(8, 7, 3, 12).unwrap();
    let model = FunctionalModel::with_identity_transforms(model.c().clone(), Arc::new(model.row_basis().clone()), Arc::new(model.col_basis().clone())).unwrap();
    for optimizer in [OptimizerKind::PlainGd, OptimizerKind::Adam] {
        let config = FitConfig {
            k: 3,
            learning_rate: 1e-2,
            train_transforms: false,
            optimizer,
            ..FitConfig::default()
        };
        let mut trainer = Trainer::new(model.clone(), obs.clone(), &config).unwrap();
        for _ in 0..10 {
            trainer.step().unwrap();
        }
        assert_eq!(trainer.model().p(), &DMatrix::identity(3, 3));
        assert_eq!(trainer.model().q(), &DMatrix::identity(3, 3));
        assert_ne!(trainer.model().c(), model.c());
    }
}

#[test]
fn adam_first_step_moves_each_entry_by_lr() {
    // With bias correction the first update is lr * g / (|g| + eps).
    let (model, obs) = random_instance(8, 7, 3, 13).unwrap();
    let config = FitConfig {
        k: 3,
        learning_rate: 1e-3,
        optimizer: OptimizerKind::Adam,
        ..FitConfig::default()
    };
    let g = config.objective().gradients(&model, &obs).unwrap();
    let mut trainer = Trainer::new(model.clone(), obs, &config).unwrap();
    trainer.step().unwrap();
    let moved = model.c() - trainer.model().c();
    for (d, gi) in moved.iter().zip(g.c.iter()) {
        let expect = 1e-3 * gi / (gi.abs() + 1e-8);
        assert!((d - expect).abs() <= 1e-15, "{d} vs {expect}");
    }
}

fn bandlimited_problem(seed: u64) -> (MaskedMatrix, Arc<SpectralBasis>, Arc<SpectralBasis>) {
    let (rb, cb) = (sbm_basis(15, 5, seed), sbm_basis(12, 5, seed + 100));
    let m = synthesize_bandlimited(&rb, &cb, 3, seed, 1.0).unwrap();
    let obs = MaskedMatrix::observe(&m, Mask::full(15, 12)).unwrap();
    (obs, rb, cb)
}

#[test]
fn convex_fit_is_monotone_and_exact() {
    let (obs, rb, cb) = bandlimited_problem(3);
    let config = FitConfig {
        k: 5,
        mu: 0.0,
        learning_rate: 0.1,
        max_iters: Some(400),
        val_ratio: 0.0,
        train_transforms: false,
        ..FitConfig::default()
    };
    let split = split_observed(obs.mask(), 0.0, 0).unwrap();
    let result = fit(&obs, &split, rb, cb, &config).unwrap();
    for w in result.history.windows(2) {
        assert!(w[1].total <= w[0].total, "{} > {}", w[1].total, w[0].total);
    }
    let norm2 = obs.values().norm_squared();
    let data = config.objective().energy(&result.model, &Observations::new(&obs)).unwrap().data;
    assert!(data <= 1e-8 * norm2, "data term {data}");
}

#[test]
fn zero_learning_rate_keeps_initial_model() {
    let (obs, rb, cb) = bandlimited_problem(4);
    let config = FitConfig {
        k: 5,
        learning_rate: 0.0,
        max_iters: Some(25),
        patience: 1000,
        val_ratio: 0.2,
        ..FitConfig::default()
    };
    let split = split_observed(obs.mask(), 0.2, 1).unwrap();
    let init = init_model(&obs.restrict(&split.train).unwrap(), rb.clone(), cb.clone()).unwrap();
    let result = fit(&obs, &split, rb, cb, &config).unwrap();
    assert_eq!(result.iterations_run, 25);
    assert_eq!(result.model.c(), init.c());
    assert_eq!(result.model.p(), init.p());
    assert_eq!(result.model.q(), init.q());
}

#[test]
fn divergence_is_reported() {
    let (obs, rb, cb) = bandlimited_problem(5);
    let config = FitConfig {
        k: 5,
        learning_rate: 1e6,
        max_iters: Some(500),
        val_ratio: 0.1,
        ..FitConfig::default()
    };
    let split = split_observed(obs.mask(), 0.1, 0).unwrap();
    match fit(&obs, &split, rb, cb, &config) {
        Err(Error::Diverged { learning_rate, .. }) => assert_eq!(learning_rate, 1e6),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn patience_stops_a_stalled_run() {
    let (obs, rb, cb) = bandlimited_problem(6);
    let config = FitConfig {
        k: 5,
        learning_rate: 0.0,
        max_iters: Some(1000),
        patience: 7,
        val_ratio: 0.2,
        ..FitConfig::default()
    };
    let split = split_observed(obs.mask(), 0.2, 0).unwrap();
    let result = fit(&obs, &split, rb, cb, &config).unwrap();
    assert_eq!(result.stop_reason, StopReason::Patience);
    // First evaluation sets the reference, then seven stalled checks.
    assert_eq!(result.iterations_run, 8);
    assert_eq!(result.history.len(), result.iterations_run);
}

#[test]
fn bases_must_match_k() {
    let (obs, rb, cb) = bandlimited_problem(7);
    let config = FitConfig { k: 4, ..FitConfig::default() };
    assert!(fit_observed(&obs, rb, cb, &config).is_err());
}

#[test]
fn config_serde_round_trip() {
    let config = FitConfig {
        optimizer: OptimizerKind::Adam,
        baseline: Baseline::Sgmc,
        max_iters: Some(10),
        ..FitConfig::default()
    };
    let text = serde_json::to_string(&config).unwrap();
    assert!(text.contains("\"adaptive\""));
    assert_eq!(serde_json::from_str::<FitConfig>(&text).unwrap(), config);
    let partial: FitConfig = serde_json::from_str(r#"{"mu": 0.5}"#).unwrap();
    assert_eq!(partial.mu, 0.5);
    assert_eq!(partial.learning_rate, 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn fit_is_deterministic_and_keeps_the_best_checkpoint(
        seed in 0u64..1000,
        adam in any::<bool>(),
        raw in any::<bool>(),
    ) {
        let (rb, cb) = (sbm_basis(14, 4, seed), sbm_basis(11, 4, seed + 1));
        let m = synthesize_bandlimited(&rb, &cb, 2, seed, 1.0).unwrap();
        let obs = MaskedMatrix::observe(&m, random_mask(14, 11, 90, seed)).unwrap();
        let config = FitConfig {
            k: 4,
            mu: 1e-3,
            learning_rate: if adam { 1e-2 } else { 5e-3 },
            optimizer: if adam { OptimizerKind::Adam } else { OptimizerKind::PlainGd },
            reg_target: if raw { RegTarget::Raw } else { RegTarget::Effective },
            max_iters: Some(150),
            val_ratio: 0.2,
            seed,
            ..FitConfig::default()
        };
        let split = split_observed(obs.mask(), config.val_ratio, seed).unwrap();
        let a = fit(&obs, &split, rb.clone(), cb.clone(), &config).unwrap();
        let b = fit(&obs, &split, rb, cb, &config).unwrap();
        prop_assert_eq!(&a.history, &b.history);
        prop_assert_eq!(a.model.c(), b.model.c());

        let val = Observations::new(&obs.restrict(&split.val).unwrap());
        let returned = observed_rmse(&a.model, &val);
        prop_assert_eq!(returned, a.best_val_rmse);
        for h in &a.history {
            prop_assert!(returned <= h.val_rmse);
        }
    }
}
