mod common;

use merl_core::agent::{AgentLayout, AgentParams, Architecture, HeadToggles, ParamGroup, PolicyDistribution};
use merl_core::algo::{
    clip_g, collect_rollout, combined_loss, combined_loss_grad, compute_gae, compute_returns, gae_from,
    normalize_advantages, ppo_policy_objective, update, Actor, Features, HyperParams, Learner, RolloutBatch,
};
use merl_core::diffcore::finite_difference_flat;
use merl_core::envs::{make_env, Action};
use merl_core::harness::{rng_stream, ExperimentConfig, Trainer};
use merl_core::merl::{build_merl_targets, segment_rollout, MerlTargets};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use common::gae_oracle;

fn point_mass_agent(arch: Architecture, seed: u64) -> AgentParams {
    let spec = make_env("point_mass_2d", &Value::Null).unwrap().spec();
    let layout = AgentLayout {
        obs_dim: spec.observation.dim,
        action: spec.action,
        hidden: vec![8, 8],
        architecture: arch,
    };
    AgentParams::init(&layout, &mut rng_stream(seed, 0), &mut rng_stream(seed, 1)).unwrap()
}

fn actors(n: usize, seed: u64) -> Vec<Actor> {
    (0..n)
        .map(|i| {
            Actor::new(
                make_env("point_mass_2d", &Value::Null).unwrap(),
                rng_stream(seed, 100 + i as u64),
            )
        })
        .collect()
}

fn prepared(params: &AgentParams, horizon: usize, n_actors: usize, hyper: &HyperParams) -> (RolloutBatch, MerlTargets) {
    let mut batch = collect_rollout(&mut actors(n_actors, 3), params, horizon).unwrap();
    batch.advantages = compute_gae(&batch, hyper.gamma, hyper.lambda);
    batch.returns = compute_returns(&batch);
    let targets = build_merl_targets(&batch, &segment_rollout(&batch));
    (batch, targets)
}

#[test]
fn gae_matches_double_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for lambda in [0.0, 0.5, 0.95, 1.0] {
        for _ in 0..200 {
            let n = rng.random_range(1..=20);
            let r: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let nv: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let terminal: Vec<bool> = (0..n).map(|_| rng.random_bool(0.15)).collect();
            let ends: Vec<bool> = terminal.iter().map(|&d| d || rng.random_bool(0.1)).collect();
            let got = gae_from(&r, &v, &terminal, &ends, &nv, 0.99, lambda);
            let want = gae_oracle(&r, &v, &terminal, &ends, &nv, 0.99, lambda);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-10, "lambda {lambda}: {g} vs {w}");
            }
        }
    }
}

#[test]
fn gae_lambda_one_is_discounted_return_to_boundary() {
    // Two segments: a terminal one and a truncated one that bootstraps 5.
    let r = [1.0, 2.0, 3.0, -1.0, 0.5];
    let v = [0.2, 0.4, 0.6, 0.8, 1.0];
    let terminal = [false, false, true, false, false];
    let ends = [false, false, true, false, true];
    let nv = [0.0, 0.0, 0.0, 0.0, 5.0];
    let g = 0.9;
    let adv = gae_from(&r, &v, &terminal, &ends, &nv, g, 1.0);
    let ret = [
        1.0 + g * 2.0 + g * g * 3.0,
        2.0 + g * 3.0,
        3.0,
        -1.0 + g * 0.5 + g * g * 5.0,
        0.5 + g * 5.0,
    ];
    for t in 0..5 {
        assert!((adv[t] + v[t] - ret[t]).abs() < 1e-12);
    }
}

#[test]
fn clip_g_examples() {
    assert_eq!(clip_g(0.2, 1.0), 1.2);
    assert_eq!(clip_g(0.2, -1.0), -0.8);
    assert_eq!(clip_g(0.1, 0.0), 0.0);
    assert_eq!(clip_g(0.5, 4.0), 6.0);
}

#[test]
fn objective_at_old_policy_is_mean_advantage() {
    let hyper = HyperParams::control();
    let params = point_mass_agent(Architecture::Separate, 0);
    let (batch, _) = prepared(&params, 64, 1, &hyper);
    let idx: Vec<usize> = (0..64).collect();
    let (obj, bd) = ppo_policy_objective(&batch, &params, &idx, &batch.advantages, 0.2).unwrap();
    let mean = batch.advantages.iter().sum::<f64>() / 64.0;
    assert!((obj - mean).abs() <= 1e-12);
    assert!((bd.mean_ratio - 1.0).abs() < 1e-12);
    assert_eq!(bd.clip_fraction, 0.0);
}

#[test]
fn objective_matches_elementwise_min_of_clipped_ratio() {
    let hyper = HyperParams::control();
    let params = point_mass_agent(Architecture::Separate, 1);
    let (mut batch, _) = prepared(&params, 64, 1, &hyper);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    batch
        .old_log_probs
        .iter_mut()
        .for_each(|l| *l += rng.random_range(-0.5..0.5));
    let adv: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
    let idx: Vec<usize> = (0..64).collect();
    let eps = 0.2;
    let mut want = 0.0;
    for (t, a) in adv.iter().enumerate() {
        let lp = params
            .policy_distribution(batch.obs(t))
            .unwrap()
            .log_prob(&batch.actions[t])
            .unwrap();
        let ratio = (lp - batch.old_log_probs[t]).exp();
        want += (ratio * a).min(ratio.clamp(1.0 - eps, 1.0 + eps) * a);
    }
    want /= 64.0;
    let (got, _) = ppo_policy_objective(&batch, &params, &idx, &adv, eps).unwrap();
    assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
}

#[test]
fn clipped_region_has_exactly_zero_policy_gradient() {
    let mut hyper = HyperParams::control();
    hyper.value_coef = 0.0;
    let params = point_mass_agent(Architecture::Separate, 2);
    let (mut batch, targets) = prepared(&params, 32, 1, &hyper);
    // ratio = e > 1 + ε with positive advantages everywhere
    batch.old_log_probs.iter_mut().for_each(|l| *l -= 1.0);
    let adv = vec![0.7; 32];
    let idx: Vec<usize> = (0..32).collect();
    let features = Features::default();
    let (bd, grads) = combined_loss_grad(
        &batch,
        &targets,
        &params,
        &idx,
        &adv,
        &hyper,
        HeadToggles::NONE,
        &features,
    )
    .unwrap();
    assert_eq!(bd.clip_fraction, 1.0);
    assert!(grads.to_flat(ParamGroup::Policy).iter().all(|g| *g == 0.0));

    let flat = params.to_flat(ParamGroup::Policy);
    let fd = finite_difference_flat(
        |x| {
            let mut p = params.clone();
            p.set_flat(ParamGroup::Policy, x).unwrap();
            ppo_policy_objective(&batch, &p, &idx, &adv, hyper.clip_eps).unwrap().0
        },
        &flat,
        1e-5,
    )
    .unwrap();
    assert!(fd.iter().all(|g| g.abs() < 1e-9));
}

#[test]
fn first_update_step_matches_hand_computation() {
    for arch in [Architecture::Separate, Architecture::SharedTrunk] {
        let mut hyper = HyperParams::control();
        hyper.horizon = 16;
        hyper.minibatch_size = 16;
        hyper.epochs = 1;
        hyper.lr = 1e-3;
        let features = Features {
            normalize_advantages: false,
            max_grad_norm: None,
            entropy_coef: 0.0,
        };
        let params = point_mass_agent(arch, 4);
        let (batch, targets) = prepared(&params, 16, 1, &hyper);
        let idx: Vec<usize> = (0..16).collect();
        let flat = params.to_flat(ParamGroup::All);
        let fd = finite_difference_flat(
            |x| {
                let mut p = params.clone();
                p.set_flat(ParamGroup::All, x).unwrap();
                combined_loss(
                    &batch,
                    &targets,
                    &p,
                    &idx,
                    &batch.advantages,
                    &hyper,
                    HeadToggles::ALL,
                    &features,
                )
                .unwrap()
                .total
            },
            &flat,
            1e-6,
        )
        .unwrap();

        let mut learner = Learner::new(params.clone());
        update(
            &batch,
            &targets,
            &mut learner,
            &hyper,
            HeadToggles::ALL,
            &features,
            &mut rng_stream(0, 2),
        )
        .unwrap();
        let after = learner.params.to_flat(ParamGroup::All);
        let mut checked = 0;
        for i in 0..flat.len() {
            let moved = after[i] - flat[i];
            if fd[i].abs() > 1e-6 {
                let want = -hyper.lr * fd[i] / (fd[i].abs() + 1e-8);
                assert!(
                    (moved - want).abs() < 1e-9,
                    "{arch:?} {}: {moved} vs {want}",
                    params.locate(ParamGroup::All, i)
                );
                checked += 1;
            } else {
                assert!(moved.abs() <= hyper.lr * (1.0 + 1e-9));
            }
        }
        assert!(checked > flat.len() / 2);
    }
}

#[test]
fn zero_epochs_leave_the_learner_untouched() {
    let mut hyper = HyperParams::control();
    hyper.epochs = 0;
    let params = point_mass_agent(Architecture::Separate, 5);
    let (batch, targets) = prepared(&params, 64, 1, &hyper);
    let mut learner = Learner::new(params.clone());
    let before = learner.clone();
    let stats = update(
        &batch,
        &targets,
        &mut learner,
        &hyper,
        HeadToggles::ALL,
        &Features::default(),
        &mut rng_stream(0, 2),
    )
    .unwrap();
    assert_eq!(stats.minibatches, 0);
    assert_eq!(learner, before);
}

#[test]
fn zero_coefficients_reduce_to_plain_ppo_bit_for_bit() {
    let mut cfg = ExperimentConfig::profile("control").unwrap();
    cfg.hyper.horizon = 256;
    cfg.hyper.epochs = 2;
    cfg.hyper.c_ve = 0.0;
    cfg.hyper.c_fs = 0.0;
    let mut with = Trainer::new(&cfg, &cfg.env, 7, HeadToggles::ALL).unwrap();
    let mut without = Trainer::new(&cfg, &cfg.env, 7, HeadToggles::NONE).unwrap();
    for _ in 0..10 {
        let a = with.iterate().unwrap();
        let b = without.iterate().unwrap();
        assert_eq!(a.mean_return.map(f64::to_bits), b.mean_return.map(f64::to_bits));
        assert_eq!(a.stats.policy_objective.to_bits(), b.stats.policy_objective.to_bits());
        assert_eq!(a.stats.value_mse.to_bits(), b.stats.value_mse.to_bits());
    }
    let (pa, pb) = (&with.learner.params, &without.learner.params);
    assert_eq!(pa.to_flat(ParamGroup::Policy), pb.to_flat(ParamGroup::Policy));
    assert_eq!(pa.value_trunk, pb.value_trunk);
    assert_eq!(pa.value_head, pb.value_head);
}

#[test]
fn rollout_is_deterministic_and_laid_out_in_blocks() {
    let params = point_mass_agent(Architecture::Separate, 6);
    let a = collect_rollout(&mut actors(2, 9), &params, 4).unwrap();
    let b = collect_rollout(&mut actors(2, 9), &params, 4).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 8);
    for t in 0..8 {
        assert_eq!(a.is_block_tail(t), t == 3 || t == 7);
        assert_eq!(a.bootstrap_values[t] != 0.0, t == 3 || t == 7);
        if t == 3 || t == 7 {
            assert_eq!(a.bootstrap_values[t], params.value(a.next_obs(t)).unwrap());
        } else {
            assert_eq!(a.next_obs(t), a.obs(t + 1));
        }
    }
    assert_ne!(a.obs(0), a.obs(4));
}

#[test]
fn near_deterministic_policy_matches_direct_simulation() {
    let mut params = point_mass_agent(Architecture::Separate, 8);
    params.log_std.iter_mut().for_each(|s| *s = -30.0);
    let batch = collect_rollout(&mut actors(1, 10), &params, 50).unwrap();

    let mut env = make_env("point_mass_2d", &Value::Null).unwrap();
    let mut obs = env.reset(rng_stream(10, 100).random());
    for t in 0..50 {
        assert!(obs.iter().zip(batch.obs(t)).all(|(a, b)| (a - b).abs() < 1e-9));
        let PolicyDistribution::Gaussian { mean, .. } = params.policy_distribution(&obs).unwrap() else {
            panic!("continuous policy")
        };
        let r = env.step(&Action::Continuous(mean)).unwrap();
        assert!((r.reward - batch.rewards[t]).abs() < 1e-9);
        assert_eq!(r.terminal, batch.terminal[t]);
        obs = r.observation;
    }
}

#[test]
fn swapped_actor_starts_a_fresh_episode() {
    let mut a = actors(1, 11);
    let before = a[0].observation().to_vec();
    a[0].swap_env(make_env("point_mass_2d", &Value::Null).unwrap());
    assert_ne!(a[0].observation(), &before[..]);
    assert_eq!(a[0].env_id(), "point_mass_2d");
}

proptest! {
    #[test]
    fn normalized_advantages_have_zero_mean_unit_variance(xs in prop::collection::vec(-100.0f64..100.0, 2..300)) {
        let n = xs.len() as f64;
        let mean0 = xs.iter().sum::<f64>() / n;
        prop_assume!(xs.iter().any(|x| (x - mean0).abs() > 1e-6));
        let z = normalize_advantages(&xs);
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        prop_assert!(mean.abs() <= 1e-9);
        prop_assert!((var - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn presets_carry_the_published_defaults() {
    let c = HyperParams::control();
    assert_eq!(
        (c.horizon, c.lr, c.epochs, c.minibatch_size, c.num_actors, c.clip_eps),
        (2048, 3e-4, 10, 64, 1, 0.2)
    );
    let s = HyperParams::shared();
    assert_eq!(
        (s.horizon, s.lr, s.epochs, s.minibatch_size, s.num_actors, s.clip_eps),
        (128, 2.5e-4, 3, 32, 4, 0.1)
    );
    for h in [c, s] {
        assert_eq!(
            (h.gamma, h.lambda, h.value_coef, h.c_ve, h.c_fs),
            (0.99, 0.95, 0.5, 0.5, 0.01)
        );
    }
}
