//! Training loop, curriculum, divergence screen and sweeps on small stand-in
//! environments.

mod common;

use autopilot_core::checkpoint::Checkpoint;
use autopilot_core::dynamics::{NonNominalKind, NonNominalSpec, Perturbation};
use autopilot_core::env::{
    HerStrategy, Normalizer, PerformanceReport, StepRecord, Thresholds, Trajectory, OBS_DIM,
};
use autopilot_core::exec::Execution;
use autopilot_core::train::{
    better, default_grid, divergence_screen, sweep_with, train, Agent, CurriculumConfig,
    CurriculumState, Environment, RobustifyConfig, TrainSettings, Trainer,
};
use autopilot_core::trpo::{sample_action, GaussianPolicy};
use proptest::prelude::*;
use rand_chacha::ChaCha8Rng;

const STEPS: usize = 64;
const TARGET: f64 = 0.05;

/// One-action bandit: every step asks for the same deflection, the reward is
/// the negative squared miss and the "tracking error" is the miss itself.
struct Bandit;

fn step(obs: [f64; OBS_DIM], obs_norm: [f64; OBS_DIM], action: f64, log_prob: f64, std: f64) -> StepRecord {
    let miss = action - TARGET;
    StepRecord {
        obs,
        obs_norm,
        action,
        eta_cmd: action,
        eta_applied: action,
        log_prob,
        std,
        eta: action,
        reward: -(miss / 0.01).powi(2),
        priority: u8::from(miss.abs() < 0.005),
        ..common::step(miss)
    }
}

fn report(miss: f64) -> PerformanceReport {
    PerformanceReport::from_values([miss.abs(), 0.0, 0.0, 0.0, 0.0], miss.abs(), false, &Thresholds::default())
}

impl Environment for Bandit {
    fn collect(
        &self,
        policy: &GaussianPolicy,
        normalizer: &Normalizer,
        _cap: f64,
        perturbation: &Perturbation,
        _command_seed: u64,
        rng: &mut ChaCha8Rng,
    ) -> autopilot_core::Result<Trajectory> {
        let obs = [1.0; OBS_DIM];
        let mut obs_norm = [0.0; OBS_DIM];
        normalizer.normalize_into(&obs, 10.0, &mut obs_norm);
        let steps = (0..STEPS)
            .map(|_| {
                let (a, lp, std) = sample_action(policy, &obs_norm, 0.0, true, rng);
                step(obs, obs_norm, a, lp, std)
            })
            .collect();
        Ok(Trajectory {
            perturbation: *perturbation,
            ..common::trajectory(steps)
        })
    }

    fn test(
        &self,
        policy: &GaussianPolicy,
        normalizer: &Normalizer,
        _perturbation: &Perturbation,
    ) -> autopilot_core::Result<PerformanceReport> {
        let obs_norm = normalizer.normalize(&[1.0; OBS_DIM]);
        Ok(report(policy.mean(&obs_norm) - TARGET))
    }

    fn relabel(&self, _: &Trajectory, _: HerStrategy, _: &Normalizer) -> Option<autopilot_core::Result<Trajectory>> {
        None
    }
}

fn bandit_settings(seed: u64) -> TrainSettings {
    let mut s = TrainSettings {
        seed,
        execution: Execution::Sequential,
        ..Default::default()
    };
    s.network.hidden = Some(vec![8]);
    s.network.initial_log_var = -7.0;
    s.replay.capacity = 1;
    s.replay.episodes_per_batch = 1;
    s.replay.gate_threshold = 0.0;
    s.trpo.minibatch_size = 16;
    s.trpo.max_minibatches_per_epoch = 0;
    s.trpo.lr_policy = 1e-3;
    s.curriculum.test_interval = 10;
    s
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[test]
fn zero_budget_leaves_agent_untouched() {
    let s = bandit_settings(3);
    let run = train(&s, &Bandit, 0, &mut ()).unwrap();
    assert_eq!(run.agent, Agent::new(&s).unwrap());
    assert!(run.diagnostics.is_empty() && run.tests.is_empty());
    assert_eq!(run.agent.updates, 0);
}

#[test]
fn bandit_reward_improves() {
    let s = bandit_settings(11);
    let run = train(&s, &Bandit, 200, &mut ()).unwrap();
    let rewards: Vec<f64> = run.diagnostics.iter().map(|d| d.total_reward).collect();
    let (first, last) = (mean(&rewards[..20]), mean(&rewards[180..]));
    assert!(last > first, "first 20 {first}, last 20 {last}");
    assert_eq!(run.faults, 0);
}

#[test]
fn same_seed_same_run() {
    let s = bandit_settings(5);
    let a = train(&s, &Bandit, 30, &mut ()).unwrap();
    let b = train(&s, &Bandit, 30, &mut ()).unwrap();
    assert_eq!(a.diagnostics, b.diagnostics);
    assert_eq!(a.agent, b.agent);
}

#[test]
fn split_runs_match_one_run() {
    let s = bandit_settings(9);
    let whole = train(&s, &Bandit, 20, &mut ()).unwrap();
    let mut t = Trainer::new(&s, &Bandit, Agent::new(&s).unwrap(), NonNominalSpec::nominal());
    t.run(7, &mut ()).unwrap();
    t.run(13, &mut ()).unwrap();
    assert_eq!(t.agent, whole.agent);
    assert_eq!(t.diagnostics, whole.diagnostics);
}

#[test]
fn resuming_from_a_checkpoint_matches_one_run() {
    // One batch per buffer, so the agent is the whole training state.
    let s = bandit_settings(4);
    let whole = train(&s, &Bandit, 24, &mut ()).unwrap();
    let first = train(&s, &Bandit, 11, &mut ()).unwrap();
    let text = Checkpoint {
        digest: String::new(),
        agent: first.agent,
    }
    .to_text();
    let agent = Checkpoint::from_text(&text).unwrap().agent;
    let mut t = Trainer::new(&s, &Bandit, agent, NonNominalSpec::nominal());
    t.run(13, &mut ()).unwrap();
    assert_eq!(t.agent, whole.agent);
    assert_eq!(t.diagnostics[..], whole.diagnostics[11..]);
}

#[test]
fn tests_happen_at_every_interval() {
    let s = bandit_settings(2);
    let run = train(&s, &Bandit, 35, &mut ()).unwrap();
    let at: Vec<u64> = run.tests.iter().map(|t| t.episode).collect();
    assert_eq!(at, vec![10, 20, 30]);
    assert!(run.tests[0].is_best);
    let best = run.best.unwrap();
    for t in &run.tests {
        assert!(!better(&t.report, &best.report));
    }
}

#[test]
fn screen_examples() {
    let cfg = RobustifyConfig::default();
    let w = cfg.screen_window;
    let flat = vec![1.0; 2 * w];
    assert!(!divergence_screen(&flat, 1.0, &cfg));
    let ramp: Vec<f64> = (0..2 * w).map(|i| 1.0 + 7.0 * i as f64 / (2 * w - 1) as f64).collect();
    let start = mean(&ramp[..w]);
    let expect = mean(&ramp[w..]) > cfg.screen_floor.max(cfg.screen_factor * start);
    assert_eq!(divergence_screen(&ramp, start, &cfg), expect);
    // Exactly at the threshold does not count as divergence.
    let limit = cfg.screen_floor.max(cfg.screen_factor * 1.0);
    assert!(!divergence_screen(&vec![limit; w], 1.0, &cfg));
    assert!(divergence_screen(&vec![limit * 1.001; w], 1.0, &cfg));
    assert!(!divergence_screen(&vec![1e9; w - 1], 1.0, &cfg));
}

#[test]
fn default_grids_are_evenly_spaced() {
    for (kind, lo, hi) in [
        (NonNominalKind::Latency, 0.0, 40.0),
        (NonNominalKind::Estimation, -0.10, 0.10),
        (NonNominalKind::Parametric, -0.40, 0.40),
    ] {
        let g = default_grid(kind);
        assert!((g[0] - lo).abs() < 1e-12 && (g[g.len() - 1] - hi).abs() < 1e-12);
        let step = g[1] - g[0];
        assert!(g.windows(2).all(|w| (w[1] - w[0] - step).abs() < 1e-12));
    }
}

#[test]
fn self_sweep_has_no_wins() {
    let grid = default_grid(NonNominalKind::Latency);
    let r = sweep_with(NonNominalKind::Latency, &grid, Execution::Sequential, |v| {
        Ok((report(v), report(v)))
    })
    .unwrap();
    assert_eq!(r.success_rate, [0.0; 5]);
    assert_eq!(r.reports_a.len(), grid.len());
}

#[test]
fn empty_sweep_grid_is_an_error() {
    assert!(sweep_with(NonNominalKind::Latency, &[], Execution::Sequential, |v| Ok((report(v), report(v)))).is_err());
}

proptest! {
    #[test]
    fn sweep_rate_counts_strict_wins(
        pairs in prop::collection::vec((0.0f64..5.0, 0.0f64..5.0), 1..40),
        parallel in any::<bool>(),
    ) {
        let grid: Vec<f64> = (0..pairs.len()).map(|i| i as f64).collect();
        let exec = if parallel { Execution::Parallel } else { Execution::Sequential };
        let r = sweep_with(NonNominalKind::Parametric, &grid, exec, |v| {
            let (a, b) = pairs[v as usize];
            Ok((report(a), report(b)))
        })
        .unwrap();
        let wins = pairs.iter().filter(|(a, b)| b < a).count();
        prop_assert!((r.success_rate[0] - 100.0 * wins as f64 / pairs.len() as f64).abs() < 1e-9);
    }

    #[test]
    fn curriculum_never_shrinks(errors in prop::collection::vec(0.0f64..3.0, 1..60)) {
        let cfg = CurriculumConfig::default();
        let mut c = CurriculumState::new(&cfg);
        for e in errors {
            let before = c.cap;
            let promoted = c.consider(&report(e), &cfg);
            prop_assert!(c.cap >= before && c.cap <= cfg.max_cap);
            prop_assert_eq!(promoted, c.cap > before);
        }
    }

    #[test]
    fn better_is_a_strict_order(
        a in (0.0f64..2.0, 0.0f64..2.0),
        b in (0.0f64..2.0, 0.0f64..2.0),
    ) {
        let th = Thresholds::default();
        let ra = PerformanceReport::from_values([a.0, 0.0, 0.0, 0.0, 0.0], a.1, false, &th);
        let rb = PerformanceReport::from_values([b.0, 0.0, 0.0, 0.0, 0.0], b.1, false, &th);
        prop_assert!(!(better(&ra, &rb) && better(&rb, &ra)));
        prop_assert!(!better(&ra, &ra));
    }
}
