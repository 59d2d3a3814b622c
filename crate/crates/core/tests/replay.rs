//! Prioritised sampling, the replay gate and hindsight relabelling.

mod common;

use autopilot_core::config::WorkbenchConfig;
use autopilot_core::dynamics::Perturbation;
use autopilot_core::env::{plateau_tracking_error, plateau_windows, ConstantPolicy, HerStrategy, Normalizer, OBS_DIM};
use autopilot_core::replay::{ReplayBuffer, SampleBranch, SerGate};
use autopilot_core::signal::generate_command;
use common::{step, trajectory};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Buffer of one batch whose steps carry the given TD magnitudes and levels.
fn buffer(tds: &[f64], levels: &[u8]) -> ReplayBuffer {
    let steps = tds
        .iter()
        .zip(levels)
        .map(|(&td, &priority)| autopilot_core::env::StepRecord {
            td,
            priority,
            ..step(td)
        })
        .collect();
    let mut b = ReplayBuffer::new(4);
    b.push_batch(vec![trajectory(steps)]);
    b
}

#[test]
fn scarce_successes_get_their_quota() {
    let n = 1000;
    let tds: Vec<f64> = (0..n).map(|i| ((i * 7919) % n) as f64).collect();
    let levels: Vec<u8> = (0..n).map(|i| u8::from(i % 10 == 0)).collect();
    let mut b = buffer(&tds, &levels);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let draws = 100_000;
    let (idx, info) = b.bper_sample(draws, 0.25, &mut rng).unwrap();
    assert_eq!(info.branch, SampleBranch::Balanced);
    assert_eq!((info.n0, info.n1), (900, 100));
    let frac = idx.iter().filter(|&&i| levels[i] == 1).count() as f64 / draws as f64;
    assert!((frac - 0.25).abs() <= 0.02, "success fraction {frac}");
    assert_eq!(info.drawn_success, (frac * draws as f64).round() as usize);
}

#[test]
fn rank_two_to_one_odds() {
    let mut b = buffer(&[1.0, 2.0], &[0, 0]);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 100_000;
    // One pool only, so the quota branch reassigns everything to it.
    let (idx, _) = b.bper_sample(n, 0.25, &mut rng).unwrap();
    let hits = idx.iter().filter(|&&i| i == 1).count() as f64;
    let p = 2.0 / 3.0;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    assert!((hits - n as f64 * p).abs() < 4.0 * sd, "{hits} of {n}");
    assert_eq!(b.probabilities(0.25), vec![1.0 / 3.0, 2.0 / 3.0]);
}

#[test]
fn abundant_successes_melt_the_pools() {
    let mut b = buffer(&[3.0, 2.0, 1.0, 0.5], &[1, 1, 0, 0]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (_, info) = b.bper_sample(10, 0.25, &mut rng).unwrap();
    assert_eq!(info.branch, SampleBranch::Molten);
    let h = 1.0 + 0.5 + 1.0 / 3.0 + 0.25;
    let expected = [1.0 / h, 0.5 / h, 1.0 / 3.0 / h, 0.25 / h];
    for (p, e) in b.probabilities(0.25).iter().zip(expected) {
        assert!((p - e).abs() < 1e-15);
    }
}

#[test]
fn gate_boundary_is_inclusive() {
    let mut g = SerGate::new(2.0);
    assert!(!g.is_open());
    g.observe(2.0);
    assert!(g.is_open());
    g.observe(2.0 + f64::EPSILON * 2.0);
    assert!(!g.is_open());
}

#[test]
fn closed_gate_trains_on_everything_in_order() {
    let mut b = ReplayBuffer::new(2);
    for k in 0..3 {
        let steps = (0..5)
            .map(|i| autopilot_core::env::StepRecord {
                action: (10 * k + i) as f64,
                ..step(0.0)
            })
            .collect();
        b.push_batch(vec![trajectory(steps)]);
    }
    let set = b.full_training_set();
    let expected: Vec<f64> = (10..15).chain(20..25).map(f64::from).collect();
    assert_eq!(set.actions, expected);
    assert_eq!(set.obs.len(), expected.len() * OBS_DIM);
}

proptest! {
    #[test]
    fn probabilities_form_a_distribution(
        rows in prop::collection::vec((0.0f64..10.0, 0u8..2), 1..200),
        quota in 0.05f64..0.95,
    ) {
        let (tds, levels): (Vec<f64>, Vec<u8>) = rows.into_iter().unzip();
        let mut b = buffer(&tds, &levels);
        let p = b.probabilities(quota);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let mut ranks = b.ranks();
        ranks.sort_unstable();
        prop_assert_eq!(ranks, (1..=tds.len()).collect::<Vec<_>>());
        let n1 = levels.iter().filter(|&&l| l == 1).count();
        if n1 > 0 && n1 < tds.len() && (n1 as f64) < quota * tds.len() as f64 {
            let success: f64 = p.iter().zip(&levels).filter(|(_, &l)| l == 1).map(|(p, _)| p).sum();
            prop_assert!((success - quota).abs() < 1e-9);
        }
    }

    #[test]
    fn eviction_keeps_the_newest_batches(capacity in 1usize..6, pushes in 0usize..15) {
        let mut b = ReplayBuffer::new(capacity);
        for k in 0..pushes {
            b.push_batch(vec![trajectory(vec![step(k as f64)])]);
        }
        let kept: Vec<f64> = b.steps().map(|s| s.error).collect();
        let expected: Vec<f64> = (pushes.saturating_sub(capacity)..pushes).map(|k| k as f64).collect();
        prop_assert_eq!(kept, expected);
    }
}

fn missile_episode(seed: u64, eta: f64) -> (autopilot_core::env::MissileEnv, autopilot_core::env::Trajectory) {
    let env = WorkbenchConfig::default().env();
    let command = generate_command(seed, 6.0, &env.episode.signal);
    let actor = ConstantPolicy { eta, variance: 1e-6 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = env
        .run_episode(&actor, &Normalizer::new(OBS_DIM), &command, &Perturbation::Nominal, true, &mut rng)
        .unwrap();
    (env, t)
}

#[test]
fn mean_relabelling_centres_the_plateaus() {
    for seed in 0..5 {
        let (env, t) = missile_episode(seed, -0.01);
        let h = env.relabel(&t, HerStrategy::Mean, &Normalizer::new(OBS_DIM)).unwrap();
        assert!(plateau_tracking_error(&h).unwrap().abs() < 1e-9);
        assert!(h.synthetic);
        for (a, b) in t.steps.iter().zip(&h.steps) {
            assert_eq!((a.action, a.accel, a.eta), (b.action, b.accel, b.eta));
        }
    }
}

#[test]
fn final_relabelling_hits_the_last_plateau_sample() {
    let (env, t) = missile_episode(9, 0.02);
    let h = env.relabel(&t, HerStrategy::Final, &Normalizer::new(OBS_DIM)).unwrap();
    for w in plateau_windows(&h).unwrap() {
        let last = w.end - 1;
        assert_eq!(h.command.samples[last], h.steps[last].accel);
    }
}
