use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use merl_core::agent::{AgentLayout, AgentParams, Architecture, HeadToggles};
use merl_core::algo::{collect_rollout, compute_gae, compute_returns, update, Actor, Features, HyperParams, Learner};
use merl_core::diffcore::{Activation, MlpParams};
use merl_core::envs::make_env;
use merl_core::harness::rng_stream;
use merl_core::merl::{build_merl_targets, compute_vex, segment_rollout};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mlp(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = MlpParams::init(&[4, 64, 64], Activation::Tanh, Activation::Tanh, 1.0, &mut rng).unwrap();
    let x = [0.1, -0.3, 0.5, 0.2];
    c.bench_function("mlp_forward_4x64x64", |b| b.iter(|| net.forward(&x).unwrap()));
    let (_, cache) = net.forward(&x).unwrap();
    let g = vec![1.0; 64];
    c.bench_function("mlp_backward_4x64x64", |b| b.iter(|| net.backward(&cache, &g).unwrap()));
}

fn vex(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r: Vec<f64> = (0..2048).map(|_| rng.random_range(-1.0..1.0)).collect();
    let v: Vec<f64> = (0..2048).map(|_| rng.random_range(-1.0..1.0)).collect();
    c.bench_function("compute_vex_2048", |b| b.iter(|| compute_vex(&r, &v)));
}

fn update_step(c: &mut Criterion) {
    let mut hyper = HyperParams::control();
    hyper.horizon = 512;
    hyper.epochs = 1;
    let env = make_env("point_mass_2d", &serde_json::Value::Null).unwrap();
    let spec = env.spec();
    let layout = AgentLayout {
        obs_dim: spec.observation.dim,
        action: spec.action,
        hidden: vec![64, 64],
        architecture: Architecture::Separate,
    };
    let params = AgentParams::init(&layout, &mut rng_stream(0, 0), &mut rng_stream(0, 1)).unwrap();
    let mut actors = vec![Actor::new(env, rng_stream(0, 100))];
    let mut batch = collect_rollout(&mut actors, &params, hyper.horizon).unwrap();
    batch.advantages = compute_gae(&batch, hyper.gamma, hyper.lambda);
    batch.returns = compute_returns(&batch);
    let targets = build_merl_targets(&batch, &segment_rollout(&batch));
    let features = Features::default();

    let mut group = c.benchmark_group("update_512");
    for heads in [HeadToggles::NONE, HeadToggles::ALL] {
        group.bench_with_input(BenchmarkId::from_parameter(heads.name()), &heads, |b, &heads| {
            b.iter(|| {
                let mut learner = Learner::new(params.clone());
                let mut rng = rng_stream(0, 2);
                update(&batch, &targets, &mut learner, &hyper, heads, &features, &mut rng).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, mlp, vex, update_step);
criterion_main!(benches);
