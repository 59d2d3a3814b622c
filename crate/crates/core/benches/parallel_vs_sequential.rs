//! Data-parallel against sequential execution for the two hot paths: the
//! minibatch gradients of an update and the per-point test episodes of a
//! sweep. On a single core both modes should cost the same.

use autopilot_core::config::WorkbenchConfig;
use autopilot_core::dynamics::NonNominalKind;
use autopilot_core::env::OBS_DIM;
use autopilot_core::exec::Execution;
use autopilot_core::train::{sweep, Agent};
use autopilot_core::trpo::{policy_loss_grad, value_loss_grad, Batch, Penalty, PolicyBatch};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn minibatch(n: usize) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut b = Batch::new(OBS_DIM);
    for _ in 0..n {
        let obs: Vec<f64> = (0..OBS_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
        b.push(
            &obs,
            rng.random_range(-0.05..0.05),
            rng.random_range(-10.0..10.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-5.0..5.0),
        );
    }
    b
}

fn gradients(c: &mut Criterion) {
    let settings = WorkbenchConfig::default().settings();
    let agent = Agent::new(&settings).unwrap();
    let policy = agent.policy();
    let data = minibatch(settings.trpo.minibatch_size);
    let pb = PolicyBatch::with_old_policy(data.clone(), policy);
    let penalty = Penalty {
        alpha: 1.0,
        beta: 1.0,
        radius: 0.01,
        log_ratio_clamp: 30.0,
    };
    let mut g = c.benchmark_group("minibatch_gradients");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new("policy", name), |b| {
            b.iter(|| policy_loss_grad(&pb, policy, &penalty, exec).unwrap())
        });
        g.bench_function(BenchmarkId::new("value", name), |b| {
            b.iter(|| value_loss_grad(&data, &agent.learner.value_net, 100.0, exec).unwrap())
        });
    }
    g.finish();
}

fn sweeps(c: &mut Criterion) {
    let cfg = WorkbenchConfig::default();
    let env = cfg.env();
    let agent = Agent::new(&cfg.settings()).unwrap();
    let grid = [-0.2, 0.2];
    let mut g = c.benchmark_group("parametric_sweep_two_points");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| sweep(&env, &agent, &agent, NonNominalKind::Parametric, &grid, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, gradients, sweeps);
criterion_main!(benches);
