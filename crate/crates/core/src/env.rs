//! One agent/plant episode: observation, online normalisation, reward and
//! scoring against the performance objectives.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    coupled_step, ActuatorConfig, AeroConfig, Airframe, DelayLine, EstimationPlacement, Perturbation, PlantState,
};
use crate::error::{Error, Result};
use crate::signal::{classify_periods, shape, CommandSignal, Period, PeriodMask, ReferenceModelConfig, SignalConfig};
use crate::trpo::{sample_action, Actor};

pub const OBS_DIM: usize = 10;

/// Raw observation, before normalisation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Observation {
    /// Shaped reference, g.
    pub reference: f64,
    /// Measured normal acceleration, g.
    pub accel: f64,
    /// reference − accel, g.
    pub error: f64,
    /// Clipped running integral of the error, g·s.
    pub error_integral: f64,
    pub pitch_rate: f64,
    pub alpha: f64,
    pub eta: f64,
    pub eta_rate: f64,
    pub mach: f64,
    pub height_km: f64,
}

impl Observation {
    pub fn to_array(&self) -> [f64; OBS_DIM] {
        [
            self.reference,
            self.accel,
            self.error,
            self.error_integral,
            self.pitch_rate,
            self.alpha,
            self.eta,
            self.eta_rate,
            self.mach,
            self.height_km,
        ]
    }

    pub fn from_array(a: &[f64; OBS_DIM]) -> Self {
        Self {
            reference: a[0],
            accel: a[1],
            error: a[2],
            error_integral: a[3],
            pitch_rate: a[4],
            alpha: a[5],
            eta: a[6],
            eta_rate: a[7],
            mach: a[8],
            height_km: a[9],
        }
    }
}

// ---------------------------------------------------------------------------
// Normaliser

/// Running per-feature mean and population variance over every observation
/// seen during training. Identity until the first update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

pub const SIGMA_FLOOR: f64 = 1e-8;

impl Normalizer {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn from_parts(count: u64, mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        if mean.len() != variance.len() {
            return Err(Error::LengthMismatch {
                what: "normalizer statistics",
                left: mean.len(),
                right: variance.len(),
            });
        }
        let m2 = variance.iter().map(|v| v * count as f64).collect();
        Ok(Self { count, mean, m2 })
    }

    /// Exact state as stored by [`Normalizer::m2`] and friends.
    pub fn from_raw(count: u64, mean: Vec<f64>, m2: Vec<f64>) -> Result<Self> {
        if mean.len() != m2.len() {
            return Err(Error::LengthMismatch {
                what: "normalizer statistics",
                left: mean.len(),
                right: m2.len(),
            });
        }
        Ok(Self { count, mean, m2 })
    }

    /// Sum of squared deviations per feature.
    pub fn m2(&self) -> &[f64] {
        &self.m2
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> Vec<f64> {
        if self.count == 0 {
            return vec![0.0; self.dim()];
        }
        self.m2.iter().map(|m| (m / self.count as f64).max(0.0)).collect()
    }

    /// `(x − μ)/max(σ, 1e−8)` per feature, each result clipped to `±clip`.
    pub fn normalize_into(&self, x: &[f64], clip: f64, out: &mut [f64]) {
        if self.count == 0 {
            out.copy_from_slice(x);
            return;
        }
        let n = self.count as f64;
        for i in 0..x.len() {
            let sd = (self.m2[i] / n).max(0.0).sqrt().max(SIGMA_FLOOR);
            out[i] = ((x[i] - self.mean[i]) / sd).clamp(-clip, clip);
        }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.normalize_into(x, f64::INFINITY, &mut out);
        out
    }

    /// Folds a batch of rows into the running statistics (Chan et al. merge
    /// of the batch's two-pass moments).
    pub fn update<'a, I>(&mut self, rows: I)
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let dim = self.dim();
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        if rows.is_empty() {
            return;
        }
        let nb = rows.len() as f64;
        let mut bmean = vec![0.0; dim];
        for r in &rows {
            for i in 0..dim {
                bmean[i] += r[i];
            }
        }
        bmean.iter_mut().for_each(|m| *m /= nb);
        let mut bm2 = vec![0.0; dim];
        for r in &rows {
            for i in 0..dim {
                let d = r[i] - bmean[i];
                bm2[i] += d * d;
            }
        }
        let na = self.count as f64;
        let n = na + nb;
        for i in 0..dim {
            let delta = bmean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += bm2[i] + delta * delta * na * nb / n;
        }
        self.count += rows.len() as u64;
    }
}

// ---------------------------------------------------------------------------
// Reward

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    /// Actuation bound, rad.
    pub eta_max: f64,
    /// Bound on the per-step command increment, rad.
    pub e_u_max: f64,
    /// Bonus requires |e_z| below this, g.
    pub bonus_error: f64,
    /// Bonus requires |η| below this, rad.
    pub bonus_eta: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            w1: 1.0,
            w2: 10.0,
            w3: 0.05,
            w4: 2.0,
            eta_max: 15f64.to_radians(),
            e_u_max: 0.01,
            bonus_error: 3.0,
            bonus_eta: 0.2,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if [self.w1, self.w2, self.w3, self.w4].iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("reward weights must be >= 0".into()));
        }
        if !(self.e_u_max > 0.0 && self.eta_max > 0.0) {
            return Err(Error::Config("reward.e_u_max and reward.eta_max must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardTerms {
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub f4: f64,
}

impl RewardTerms {
    pub fn total(&self) -> f64 {
        self.f1 + self.f2 + self.f3 + self.f4
    }
}

/// Tracking penalty, actuation-bound penalty, actuation-rate penalty and the
/// precision bonus. `dt` is the sampling time used for the rate.
pub fn reward(e_z: f64, eta: f64, eta_prev: f64, e_u: f64, cfg: &RewardConfig, dt: f64) -> RewardTerms {
    let f1 = -cfg.w1 * e_z.abs();
    let f2 = if eta.abs() < cfg.eta_max { 0.0 } else { -cfg.w2 };
    let f3 = -cfg.w3 * ((eta - eta_prev) / dt).abs();
    let bonus = e_z.abs() < cfg.bonus_error && eta.abs() < cfg.bonus_eta && e_u.abs() < cfg.e_u_max;
    let f4 = if bonus {
        cfg.w4 * (cfg.e_u_max - e_u.abs()) / cfg.e_u_max
    } else {
        0.0
    };
    RewardTerms { f1, f2, f3, f4 }
}

/// Success level of one step: 1 when tracking, actuation and actuation
/// increment are all comfortably inside their bounds.
pub fn priority_level(e_z: f64, eta: f64, e_u: f64, cfg: &RewardConfig) -> u8 {
    let ok = e_z.abs() < 0.5 && eta.abs() < cfg.eta_max / 2.0 && e_u.abs() < cfg.e_u_max;
    u8::from(ok)
}

// ---------------------------------------------------------------------------
// Performance objectives

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// g
    pub max_resting_error: f64,
    /// %
    pub overshoot: f64,
    /// rad
    pub max_actuation: f64,
    /// rad
    pub noise_resting: f64,
    /// rad
    pub noise_transition: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            max_resting_error: 0.5,
            overshoot: 20.0,
            max_actuation: 15f64.to_radians(),
            noise_resting: 1.0,
            noise_transition: 0.2,
        }
    }
}

pub const METRIC_NAMES: [&str; 5] = ["|e_z|_max,r", "overshoot", "|eta|_max", "eta_noise,r", "eta_noise,t"];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerformanceReport {
    /// g
    pub max_resting_error: f64,
    /// % of step amplitude
    pub overshoot: f64,
    /// rad
    pub max_actuation: f64,
    /// rad
    pub noise_resting: f64,
    /// rad
    pub noise_transition: f64,
    /// g
    pub mean_abs_error: f64,
    /// Pass flags in [`METRIC_NAMES`] order.
    pub pass: [bool; 5],
    pub diverged: bool,
}

impl PerformanceReport {
    pub fn from_values(values: [f64; 5], mean_abs_error: f64, diverged: bool, th: &Thresholds) -> Self {
        let limits = [
            th.max_resting_error,
            th.overshoot,
            th.max_actuation,
            th.noise_resting,
            th.noise_transition,
        ];
        let pass = std::array::from_fn(|i| !diverged && values[i] < limits[i]);
        Self {
            max_resting_error: values[0],
            overshoot: values[1],
            max_actuation: values[2],
            noise_resting: values[3],
            noise_transition: values[4],
            mean_abs_error,
            pass,
            diverged,
        }
    }

    pub fn values(&self) -> [f64; 5] {
        [
            self.max_resting_error,
            self.overshoot,
            self.max_actuation,
            self.noise_resting,
            self.noise_transition,
        ]
    }

    pub fn passed(&self) -> usize {
        self.pass.iter().filter(|&&p| p).count()
    }

    pub fn all_pass(&self) -> bool {
        self.passed() == 5
    }
}

/// Per-step series a report is computed from.
#[derive(Debug, Clone, Copy)]
pub struct Series<'a> {
    pub accel: &'a [f64],
    pub error: &'a [f64],
    pub eta: &'a [f64],
}

/// Scores a (possibly truncated) run. Transition windows are the runs of
/// transition tags; the overshoot of a command step is measured inside the
/// window that starts at its rise against the level the command settles to.
pub fn evaluate_series(
    series: Series<'_>,
    command: &CommandSignal,
    mask: &PeriodMask,
    diverged: bool,
    th: &Thresholds,
) -> Result<PerformanceReport> {
    let n = series.accel.len();
    if series.error.len() != n || series.eta.len() != n {
        return Err(Error::LengthMismatch {
            what: "metric series",
            left: n,
            right: series.error.len().min(series.eta.len()),
        });
    }
    if mask.len() < n || command.len() < n {
        return Err(Error::LengthMismatch {
            what: "trajectory vs period mask",
            left: n,
            right: mask.len().min(command.len()),
        });
    }
    if n == 0 {
        return Ok(PerformanceReport::from_values([0.0; 5], 0.0, diverged, th));
    }
    let tags = &mask.tags[..n];

    let max_resting_error = (0..n)
        .filter(|&t| tags[t] == Period::Resting)
        .map(|t| series.error[t].abs())
        .fold(0.0, f64::max);

    let mut overshoot = 0.0f64;
    let levels = command.transition_levels();
    let windows = mask.windows();
    for (k, &rise) in command.rise_times.iter().enumerate() {
        let (before, after) = levels.get(k).copied().unwrap_or((0.0, 0.0));
        let amp = after - before;
        if amp == 0.0 || rise >= n {
            continue;
        }
        let end = windows
            .iter()
            .find(|(p, r)| *p == Period::Transition && r.contains(&rise))
            .map_or(rise + 1, |(_, r)| r.end)
            .min(n);
        for t in rise..end {
            let ex = amp.signum() * (series.accel[t] - after) / amp.abs() * 100.0;
            overshoot = overshoot.max(ex);
        }
    }

    let max_actuation = series.eta.iter().fold(0.0f64, |m, e| m.max(e.abs()));

    let mut tv = [(0.0, 0usize); 2];
    for (p, r) in windows {
        if r.start >= n {
            break;
        }
        let r = r.start..r.end.min(n);
        let total: f64 = r
            .clone()
            .filter(|&t| t > 0)
            .map(|t| (series.eta[t] - series.eta[t - 1]).abs())
            .sum();
        let slot = usize::from(p == Period::Transition);
        tv[slot].0 += total;
        tv[slot].1 += 1;
    }
    let mean_tv = |(s, c): (f64, usize)| if c == 0 { 0.0 } else { s / c as f64 };

    let mean_abs_error = series.error.iter().map(|e| e.abs()).sum::<f64>() / n as f64;
    Ok(PerformanceReport::from_values(
        [
            max_resting_error,
            overshoot,
            max_actuation,
            mean_tv(tv[0]),
            mean_tv(tv[1]),
        ],
        mean_abs_error,
        diverged,
        th,
    ))
}

pub fn evaluate_metrics(traj: &Trajectory, mask: &PeriodMask, th: &Thresholds) -> Result<PerformanceReport> {
    if traj.steps.len() > mask.len() {
        return Err(Error::LengthMismatch {
            what: "trajectory vs period mask",
            left: traj.steps.len(),
            right: mask.len(),
        });
    }
    let accel: Vec<f64> = traj.steps.iter().map(|s| s.accel).collect();
    let error: Vec<f64> = traj.steps.iter().map(|s| s.error).collect();
    let eta: Vec<f64> = traj.steps.iter().map(|s| s.eta).collect();
    evaluate_series(
        Series {
            accel: &accel,
            error: &error,
            eta: &eta,
        },
        &traj.command,
        mask,
        traj.diverged,
        th,
    )
}

// ---------------------------------------------------------------------------
// Episodes

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub obs: [f64; OBS_DIM],
    pub obs_norm: [f64; OBS_DIM],
    /// Raw command sample, g.
    pub command: f64,
    /// Shaped reference, g.
    pub reference: f64,
    /// Sampled action (log-probabilities refer to this value), rad.
    pub action: f64,
    /// Action after the deflection clamp, rad.
    pub eta_cmd: f64,
    /// Command reaching the actuator after the transport delay, rad.
    pub eta_applied: f64,
    /// Tracking error seen by the policy when acting (drives exploration).
    pub error_obs: f64,
    pub log_prob: f64,
    pub std: f64,
    /// Actuator position after the step, rad.
    pub eta: f64,
    /// Measured normal acceleration after the step, g.
    pub accel: f64,
    /// reference − accel after the step, g.
    pub error: f64,
    /// Command increment η_cmd(t) − η_cmd(t−1), rad.
    pub e_u: f64,
    pub reward: f64,
    pub period: Period,
    pub value: f64,
    pub value_target: f64,
    pub advantage: f64,
    pub td: f64,
    pub priority: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<StepRecord>,
    pub command: CommandSignal,
    pub mask: PeriodMask,
    pub perturbation: Perturbation,
    pub diverged: bool,
    /// Hindsight-relabelled copy.
    pub synthetic: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn mean_abs_error(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps.iter().map(|s| s.error.abs()).sum::<f64>() / self.steps.len() as f64
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub signal: SignalConfig,
    /// Bound on each normalised feature.
    pub obs_clip: f64,
    /// Bound on the error integral, g·s.
    pub integral_clip: f64,
    pub estimation_placement: EstimationPlacement,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            signal: SignalConfig::default(),
            obs_clip: 10.0,
            integral_clip: 5.0,
            estimation_placement: EstimationPlacement::Observation,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        self.signal.validate()?;
        if !(self.obs_clip > 0.0 && self.integral_clip > 0.0) {
            return Err(Error::Config("episode.obs_clip and episode.integral_clip must be > 0".into()));
        }
        Ok(())
    }
}

/// The surrogate missile environment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MissileEnv {
    pub aero: AeroConfig,
    pub actuator: ActuatorConfig,
    pub reference: ReferenceModelConfig,
    pub reward: RewardConfig,
    pub episode: EpisodeConfig,
    pub thresholds: Thresholds,
}

impl MissileEnv {
    pub fn dt(&self) -> f64 {
        self.episode.signal.dt
    }

    pub fn mask(&self, command: &CommandSignal) -> Result<PeriodMask> {
        classify_periods(command, self.episode.signal.transition_steps)
    }

    /// Runs one episode. The normaliser is read, never written.
    pub fn run_episode<A: Actor + ?Sized, R: Rng + ?Sized>(
        &self,
        actor: &A,
        normalizer: &Normalizer,
        command: &CommandSignal,
        perturbation: &Perturbation,
        explore: bool,
        rng: &mut R,
    ) -> Result<Trajectory> {
        let mask = self.mask(command)?;
        let dt = self.dt();
        let shaped = shape(&command.samples, &self.reference, dt);
        let airframe = Airframe::new(&self.aero, perturbation, self.episode.estimation_placement);
        let (mach_est, height_est) = airframe.estimates();
        let mut delay = DelayLine::new(perturbation.latency_ms() as usize);
        let limit = self.actuator.deflection_limit;

        let mut state = PlantState::default();
        let mut accel = 0.0;
        let mut integral = 0.0;
        let mut eta_cmd_prev = 0.0;
        let mut diverged = false;
        let mut steps = Vec::with_capacity(command.len());
        let mut obs_norm = [0.0; OBS_DIM];

        for (t, &reference) in shaped.iter().enumerate() {
            let error_obs = reference - accel;
            let obs = Observation {
                reference,
                accel,
                error: error_obs,
                error_integral: integral,
                pitch_rate: state.pitch_rate,
                alpha: state.alpha,
                eta: state.eta,
                eta_rate: state.eta_rate,
                mach: mach_est,
                height_km: height_est / 1000.0,
            }
            .to_array();
            normalizer.normalize_into(&obs, self.episode.obs_clip, &mut obs_norm);
            let (action, log_prob, std) = sample_action(actor, &obs_norm, error_obs, explore, rng);
            let eta_cmd = if action.is_finite() { action.clamp(-limit, limit) } else { action };
            let eta_applied = delay.delay(eta_cmd);
            let (next, a_z) = match coupled_step(&state, &airframe, &self.actuator, eta_applied, dt) {
                Ok(v) => v,
                Err(_) => {
                    diverged = true;
                    break;
                }
            };
            let error = reference - a_z;
            let e_u = eta_cmd - eta_cmd_prev;
            let r = reward(error, next.eta, state.eta, e_u, &self.reward, dt);
            integral = (integral + error * dt).clamp(-self.episode.integral_clip, self.episode.integral_clip);
            steps.push(StepRecord {
                obs,
                obs_norm,
                command: command.samples[t],
                reference,
                action,
                eta_cmd,
                eta_applied,
                error_obs,
                log_prob,
                std,
                eta: next.eta,
                accel: a_z,
                error,
                e_u,
                reward: r.total(),
                period: mask.tags[t],
                value: 0.0,
                value_target: 0.0,
                advantage: 0.0,
                td: 0.0,
                priority: priority_level(error, next.eta, e_u, &self.reward),
            });
            state = next;
            accel = a_z;
            eta_cmd_prev = eta_cmd;
        }

        Ok(Trajectory {
            steps,
            command: command.clone(),
            mask,
            perturbation: *perturbation,
            diverged,
            synthetic: false,
        })
    }

    /// Deterministic test episode on the fixed double step, exploration off.
    pub fn test<A: Actor + ?Sized>(
        &self,
        actor: &A,
        normalizer: &Normalizer,
        perturbation: &Perturbation,
    ) -> Result<(Trajectory, PerformanceReport)> {
        let command = CommandSignal::test_signal(&self.episode.signal);
        // Exploration is off, so the generator is never drawn from.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let traj = self.run_episode(actor, normalizer, &command, perturbation, false, &mut rng)?;
        let report = evaluate_metrics(&traj, &traj.mask, &self.thresholds)?;
        Ok((traj, report))
    }

    /// Hindsight copy of `traj` whose command steps are what the airframe
    /// actually achieved on each plateau. Actions and plant response are
    /// kept; reference-dependent features, rewards and priorities are
    /// recomputed; value/advantage fields are cleared.
    pub fn relabel(&self, traj: &Trajectory, strategy: HerStrategy, normalizer: &Normalizer) -> Result<Trajectory> {
        let plateaus = plateau_windows(traj)?;
        let amp = |w: &std::ops::Range<usize>| match strategy {
            HerStrategy::Mean => traj.steps[w.clone()].iter().map(|s| s.accel).sum::<f64>() / w.len() as f64,
            HerStrategy::Final => traj.steps[w.end - 1].accel,
        };
        let command = traj.command.with_amplitudes((amp(&plateaus[0]), amp(&plateaus[1])));
        let dt = self.dt();
        let shaped = shape(&command.samples, &self.reference, dt);

        let mut out = traj.clone();
        out.command = command;
        out.synthetic = true;
        let mut integral = 0.0;
        let mut eta_prev = 0.0;
        for (t, s) in out.steps.iter_mut().enumerate() {
            s.command = out.command.samples[t];
            s.reference = shaped[t];
            s.error_obs = s.reference - s.obs[1];
            s.obs[0] = s.reference;
            s.obs[2] = s.error_obs;
            s.obs[3] = integral;
            normalizer.normalize_into(&s.obs, self.episode.obs_clip, &mut s.obs_norm);
            s.error = s.reference - s.accel;
            s.reward = reward(s.error, s.eta, eta_prev, s.e_u, &self.reward, dt).total();
            s.priority = priority_level(s.error, s.eta, s.e_u, &self.reward);
            s.value = 0.0;
            s.value_target = 0.0;
            s.advantage = 0.0;
            s.td = 0.0;
            integral = (integral + s.error * dt).clamp(-self.episode.integral_clip, self.episode.integral_clip);
            eta_prev = s.eta;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HerStrategy {
    Mean,
    Final,
}

/// The resting windows on the two non-zero command plateaus.
pub fn plateau_windows(traj: &Trajectory) -> Result<[std::ops::Range<usize>; 2]> {
    let rises = &traj.command.rise_times;
    if rises.len() != 4 || traj.mask.len() != traj.command.len() {
        return Err(Error::Structure("trajectory has no valid period mask".into()));
    }
    let find = |rise: usize| {
        traj.mask
            .resting_after(rise)
            .filter(|w| w.end <= rises[rises.iter().position(|&r| r == rise).unwrap() + 1])
            .filter(|w| w.end <= traj.steps.len() && !w.is_empty())
            .ok_or_else(|| Error::Structure(format!("no resting plateau after rise {rise}")))
    };
    Ok([find(rises[0])?, find(rises[2])?])
}

/// Mean of command − achieved acceleration over both plateaus.
pub fn plateau_tracking_error(traj: &Trajectory) -> Result<f64> {
    let [a, b] = plateau_windows(traj)?;
    let n = (a.len() + b.len()) as f64;
    let s: f64 = a.chain(b).map(|t| traj.command.samples[t] - traj.steps[t].accel).sum();
    Ok(s / n)
}

// ---------------------------------------------------------------------------
// Stub actors

/// Always commands zero deflection.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPolicy {
    pub variance: f64,
}

impl Actor for ZeroPolicy {
    fn distribution(&self, _obs: &[f64], _e_z: f64) -> (f64, f64) {
        (0.0, self.variance.max(f64::MIN_POSITIVE))
    }
}

/// Always commands the same deflection.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy {
    pub eta: f64,
    pub variance: f64,
}

impl Actor for ConstantPolicy {
    fn distribution(&self, _obs: &[f64], _e_z: f64) -> (f64, f64) {
        (self.eta, self.variance.max(f64::MIN_POSITIVE))
    }
}
