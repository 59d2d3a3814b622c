//! Builders shared by the integration tests.
#![allow(dead_code)]

use autopilot_core::dynamics::Perturbation;
use autopilot_core::env::{StepRecord, Trajectory, OBS_DIM};
use autopilot_core::signal::{CommandSignal, Period, PeriodMask};

/// A resting step with the given tracking error; everything else zero.
pub fn step(error: f64) -> StepRecord {
    StepRecord {
        obs: [0.0; OBS_DIM],
        obs_norm: [0.0; OBS_DIM],
        command: 0.0,
        reference: 0.0,
        action: 0.0,
        eta_cmd: 0.0,
        eta_applied: 0.0,
        error_obs: 0.0,
        log_prob: 0.0,
        std: 1.0,
        eta: 0.0,
        accel: -error,
        error,
        e_u: 0.0,
        reward: 0.0,
        period: Period::Resting,
        value: 0.0,
        value_target: 0.0,
        advantage: 0.0,
        td: 0.0,
        priority: 0,
    }
}

/// A flat-command trajectory around the given steps.
pub fn trajectory(steps: Vec<StepRecord>) -> Trajectory {
    let n = steps.len();
    Trajectory {
        steps,
        command: CommandSignal::double_step(n, [0, 0], 0, (0.0, 0.0)),
        mask: PeriodMask {
            tags: vec![Period::Resting; n],
        },
        perturbation: Perturbation::Nominal,
        diverged: false,
        synthetic: false,
    }
}
