//! The training loop: collect, relabel, estimate advantages, store, sample,
//! update; plus curriculum, intermediate testing, robustifying trainings and
//! robustness sweeps.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{NonNominalKind, NonNominalSpec, Perturbation};
use crate::env::{
    HerStrategy, MissileEnv, Normalizer, PerformanceReport, Trajectory, METRIC_NAMES, OBS_DIM,
};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::nn::{hidden_sizes, AdamState, Mlp};
use crate::replay::{ReplayBuffer, ReplayConfig, SampleBranch, SerGate};
use crate::signal::generate_command;
use crate::trpo::{gae, Exploration, GaussianPolicy, Learner, TrpoConfig, UpdateDiagnostics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Hidden layer widths; derived from the interface sizes when absent.
    pub hidden: Option<Vec<usize>>,
    /// Policy mean per unit network output, rad.
    pub action_scale: f64,
    /// Value estimate per unit network output.
    pub value_scale: f64,
    /// Initial trainable log-variance of the policy.
    pub initial_log_var: f64,
    /// Factor on the initial output-layer weights of the policy network.
    pub policy_output_gain: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: None,
            action_scale: 0.1,
            value_scale: 100.0,
            initial_log_var: -10.0,
            policy_output_gain: 0.01,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(h) = &self.hidden {
            if h.is_empty() || h.contains(&0) {
                return Err(Error::Config("network.hidden widths must be > 0".into()));
            }
        }
        if !(self.action_scale > 0.0
            && self.value_scale > 0.0
            && self.initial_log_var.is_finite()
            && self.policy_output_gain.is_finite())
        {
            return Err(Error::Config(
                "network.action_scale and value_scale must be > 0, initial_log_var and policy_output_gain finite"
                    .into(),
            ));
        }
        Ok(())
    }

    pub fn dims(&self, n_in: usize, n_out: usize) -> Vec<usize> {
        let hidden = self.hidden.clone().unwrap_or_else(|| hidden_sizes(n_in, n_out).to_vec());
        let mut d = vec![n_in];
        d.extend(hidden);
        d.push(n_out);
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    /// g
    pub start_cap: f64,
    /// g
    pub max_cap: f64,
    /// g per promotion
    pub increment: f64,
    /// Episodes between intermediate tests.
    pub test_interval: u64,
    /// Resting-error bound at full amplitude, g; scaled by max_cap/cap.
    pub promotion_error: f64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            start_cap: 2.0,
            max_cap: 10.0,
            increment: 1.0,
            test_interval: 25,
            promotion_error: 0.5,
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.start_cap >= 0.0 && self.start_cap <= self.max_cap && self.increment > 0.0) {
            return Err(Error::Config(
                "curriculum needs 0 <= start_cap <= max_cap and increment > 0".into(),
            ));
        }
        if self.test_interval == 0 || !(self.promotion_error > 0.0) {
            return Err(Error::Config("curriculum.test_interval and promotion_error must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurriculumState {
    /// Current command amplitude cap, g.
    pub cap: f64,
    pub episodes_since_promotion: u64,
}

impl CurriculumState {
    pub fn new(cfg: &CurriculumConfig) -> Self {
        Self {
            cap: cfg.start_cap,
            episodes_since_promotion: 0,
        }
    }

    /// Promotes when the test's resting error is below the bound scaled to
    /// the current cap. Returns whether a promotion happened.
    pub fn consider(&mut self, report: &PerformanceReport, cfg: &CurriculumConfig) -> bool {
        let scale = if self.cap > 0.0 { cfg.max_cap / self.cap } else { f64::INFINITY };
        let ok = !report.diverged && report.max_resting_error < cfg.promotion_error * scale;
        if ok && self.cap < cfg.max_cap {
            self.cap = (self.cap + cfg.increment).min(cfg.max_cap);
            self.episodes_since_promotion = 0;
            return true;
        }
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustifyConfig {
    pub kind: NonNominalKind,
    /// Candidate bounds; the standard candidates for the kind when empty.
    pub bounds: Vec<f64>,
    /// Episode at which the divergence screen runs.
    pub screen_episodes: u64,
    /// Total episodes for surviving bounds.
    pub total_episodes: u64,
    pub screen_window: usize,
    /// g
    pub screen_floor: f64,
    pub screen_factor: f64,
}

impl Default for RobustifyConfig {
    fn default() -> Self {
        Self {
            kind: NonNominalKind::Latency,
            bounds: Vec::new(),
            screen_episodes: 2500,
            total_episodes: 5000,
            screen_window: 100,
            screen_floor: 5.0,
            screen_factor: 2.0,
        }
    }
}

impl RobustifyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.screen_episodes > self.total_episodes || self.screen_window == 0 {
            return Err(Error::Config(
                "robustify needs screen_episodes <= total_episodes and screen_window > 0".into(),
            ));
        }
        for &b in &self.bounds {
            NonNominalSpec::new(self.kind, b)?;
        }
        Ok(())
    }

    pub fn bounds_or_default(&self) -> Vec<f64> {
        if self.bounds.is_empty() {
            default_bounds(self.kind)
        } else {
            self.bounds.clone()
        }
    }
}

/// Standard candidate bounds: latency in ms, uncertainties as 3σ fractions.
pub fn default_bounds(kind: NonNominalKind) -> Vec<f64> {
    match kind {
        NonNominalKind::None => vec![0.0],
        NonNominalKind::Latency => vec![1.0, 3.0, 5.0, 10.0],
        NonNominalKind::Estimation => vec![0.01, 0.02, 0.03, 0.05],
        NonNominalKind::Parametric => vec![0.05, 0.07, 0.10, 0.15],
    }
}

/// Settings the loop needs besides the environment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainSettings {
    pub seed: u64,
    pub execution: Execution,
    pub network: NetworkConfig,
    pub trpo: TrpoConfig,
    pub replay: ReplayConfig,
    pub curriculum: CurriculumConfig,
}

// ---------------------------------------------------------------------------
// Agent

/// Everything a checkpoint holds.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub learner: Learner,
    pub normalizer: Normalizer,
    pub curriculum: CurriculumState,
    pub gate: SerGate,
    /// Episodes collected so far.
    pub episode: u64,
    /// Updates performed so far.
    pub updates: u64,
}

impl Agent {
    pub fn new(s: &TrainSettings) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        rng.set_stream(u64::MAX);
        let dims = s.network.dims(OBS_DIM, 1);
        let mut net = Mlp::xavier(&dims, &mut rng)?;
        net.scale_output_layer(s.network.policy_output_gain);
        let policy = GaussianPolicy {
            net,
            log_var: s.network.initial_log_var,
            action_scale: s.network.action_scale,
            exploration: Exploration::from_config(&s.trpo),
        };
        let value_net = Mlp::xavier(&dims, &mut rng)?;
        Ok(Self {
            learner: Learner {
                adam_policy: AdamState::new(policy.n_params(), s.trpo.lr_policy),
                adam_value: AdamState::new(value_net.params().len(), s.trpo.lr_value),
                snapshot: policy.clone(),
                policy,
                value_net,
                value_scale: s.network.value_scale,
                alpha: s.trpo.alpha,
            },
            normalizer: Normalizer::new(OBS_DIM),
            curriculum: CurriculumState::new(&s.curriculum),
            gate: SerGate::new(s.replay.gate_threshold),
            episode: 0,
            updates: 0,
        })
    }

    pub fn policy(&self) -> &GaussianPolicy {
        &self.learner.policy
    }
}

// ---------------------------------------------------------------------------
// Environments

/// What the loop needs from an environment. [`MissileEnv`] is the real one;
/// tests use small stand-ins.
pub trait Environment: Sync {
    /// One exploring training episode.
    fn collect(
        &self,
        policy: &GaussianPolicy,
        normalizer: &Normalizer,
        cap: f64,
        perturbation: &Perturbation,
        command_seed: u64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Trajectory>;

    /// Deterministic test episode.
    fn test(&self, policy: &GaussianPolicy, normalizer: &Normalizer, perturbation: &Perturbation)
        -> Result<PerformanceReport>;

    /// Hindsight copy, if the environment supports relabelling.
    fn relabel(&self, traj: &Trajectory, strategy: HerStrategy, normalizer: &Normalizer) -> Option<Result<Trajectory>>;
}

impl Environment for MissileEnv {
    fn collect(
        &self,
        policy: &GaussianPolicy,
        normalizer: &Normalizer,
        cap: f64,
        perturbation: &Perturbation,
        command_seed: u64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Trajectory> {
        let command = generate_command(command_seed, cap, &self.episode.signal);
        self.run_episode(policy, normalizer, &command, perturbation, true, rng)
    }

    fn test(
        &self,
        policy: &GaussianPolicy,
        normalizer: &Normalizer,
        perturbation: &Perturbation,
    ) -> Result<PerformanceReport> {
        MissileEnv::test(self, policy, normalizer, perturbation).map(|(_, r)| r)
    }

    fn relabel(&self, traj: &Trajectory, strategy: HerStrategy, normalizer: &Normalizer) -> Option<Result<Trajectory>> {
        Some(MissileEnv::relabel(self, traj, strategy, normalizer))
    }
}

/// Generator for one episode: the run seed on a stream per episode index, so
/// parallel collection cannot reorder randomness.
pub fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    rng
}

/// The command seed and perturbation drawn at the start of an episode.
pub fn episode_setup(rng: &mut ChaCha8Rng, spec: &NonNominalSpec) -> (u64, Perturbation) {
    let command_seed = rng.next_u64();
    (command_seed, spec.sample(rng))
}

// ---------------------------------------------------------------------------
// Diagnostics

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub episode: u64,
    pub cap: f64,
    pub perturbation: Perturbation,
    pub mean_abs_error: f64,
    pub total_reward: f64,
    pub diverged: bool,
    pub gate_open: bool,
    pub her_episodes: usize,
    pub n0: usize,
    pub n1: usize,
    /// `None` when the full buffer was used.
    pub branch: Option<SampleBranch>,
    pub training_set: usize,
    pub update: UpdateDiagnostics,
    pub log_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRow {
    pub episode: u64,
    pub cap: f64,
    pub report: PerformanceReport,
    pub is_best: bool,
    pub promoted: bool,
}

/// Lexicographic: criteria passed, then lower mean |e_z|.
pub fn better(a: &PerformanceReport, b: &PerformanceReport) -> bool {
    let (pa, pb) = (a.passed(), b.passed());
    pa > pb || (pa == pb && a.mean_abs_error < b.mean_abs_error)
}

/// Hooks for streaming results while a run progresses.
pub trait TrainObserver {
    fn on_episode(&mut self, _row: &DiagnosticsRow) -> Result<()> {
        Ok(())
    }
    fn on_test(&mut self, _row: &TestRow, _agent: &Agent) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

#[derive(Debug, Clone)]
pub struct BestAgent {
    pub agent: Agent,
    pub report: PerformanceReport,
}

/// Outcome of a run.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub agent: Agent,
    pub best: Option<BestAgent>,
    pub diagnostics: Vec<DiagnosticsRow>,
    pub tests: Vec<TestRow>,
    pub faults: usize,
}

const MAX_FAULTS: usize = 5;

/// Stateful loop over batches; `run` may be called repeatedly.
pub struct Trainer<'a, E: Environment + ?Sized> {
    settings: &'a TrainSettings,
    env: &'a E,
    pub agent: Agent,
    pub buffer: ReplayBuffer,
    pub spec: NonNominalSpec,
    pub best: Option<BestAgent>,
    pub diagnostics: Vec<DiagnosticsRow>,
    pub tests: Vec<TestRow>,
    pub faults: usize,
    last_good: Agent,
}

impl<'a, E: Environment + ?Sized> Trainer<'a, E> {
    pub fn new(settings: &'a TrainSettings, env: &'a E, agent: Agent, spec: NonNominalSpec) -> Self {
        Self {
            settings,
            env,
            buffer: ReplayBuffer::new(settings.replay.capacity),
            spec,
            best: None,
            diagnostics: Vec::new(),
            tests: Vec::new(),
            faults: 0,
            last_good: agent.clone(),
            agent,
        }
    }

    pub fn into_run(self) -> TrainRun {
        TrainRun {
            agent: self.agent,
            best: self.best,
            diagnostics: self.diagnostics,
            tests: self.tests,
            faults: self.faults,
        }
    }

    /// Mean |e_z| per collected episode so far.
    pub fn error_history(&self) -> Vec<f64> {
        self.diagnostics.iter().map(|d| d.mean_abs_error).collect()
    }

    /// Runs `episodes` more episodes.
    pub fn run(&mut self, episodes: u64, observer: &mut dyn TrainObserver) -> Result<()> {
        let end = self.agent.episode + episodes;
        while self.agent.episode < end {
            let n = (end - self.agent.episode).min(self.settings.replay.episodes_per_batch as u64);
            self.iteration(n, observer)?;
        }
        Ok(())
    }

    fn iteration(&mut self, n: u64, observer: &mut dyn TrainObserver) -> Result<()> {
        let s = self.settings;
        let exec = s.execution;
        let first = self.agent.episode;
        let cap = self.agent.curriculum.cap;

        // Collect with an immutable snapshot of policy and normaliser.
        let real: Vec<Trajectory> = {
            let policy = &self.agent.learner.policy;
            let normalizer = &self.agent.normalizer;
            let spec = self.spec;
            let env = self.env;
            exec.map_range(0..n as usize, |j| {
                let mut rng = episode_rng(s.seed, first + j as u64);
                let (command_seed, perturbation) = episode_setup(&mut rng, &spec);
                env.collect(policy, normalizer, cap, &perturbation, command_seed, &mut rng)
            })
            .into_iter()
            .collect::<Result<_>>()?
        };

        for t in &real {
            self.agent.normalizer.update(t.steps.iter().map(|s| &s.obs[..]));
            self.agent.gate.observe(t.mean_abs_error());
        }
        self.agent.episode += n;
        self.agent.curriculum.episodes_since_promotion += n;
        let gate_open = self.agent.gate.is_open();

        // Hindsight relabelling.
        let mut synthetic = Vec::new();
        if gate_open {
            for t in &real {
                for &strategy in &s.replay.her_strategies {
                    // A trajectory cut short before its plateaus cannot be relabelled.
                    if let Some(Ok(h)) = self.env.relabel(t, strategy, &self.agent.normalizer) {
                        synthetic.push(h);
                    }
                }
            }
        }
        let her_episodes = synthetic.len();

        // Values, advantages and TD magnitudes.
        let mut batch: Vec<Trajectory> = real.iter().cloned().chain(synthetic).collect();
        {
            let learner = &self.agent.learner;
            let trpo = &s.trpo;
            let filled = exec.map(&batch, |t| annotate(t, learner, trpo));
            batch = filled.into_iter().collect::<Result<_>>()?;
        }
        self.buffer.push_batch(batch);

        // Training set.
        let mut update_rng = ChaCha8Rng::seed_from_u64(s.seed);
        update_rng.set_stream(u64::MAX - 1 - self.agent.updates);
        let (n0, n1) = self.buffer.counts();
        let (data, branch) = if gate_open {
            let (idx, info) = self
                .buffer
                .bper_sample(s.replay.training_set_size, s.replay.success_quota, &mut update_rng)?;
            (self.buffer.gather(&idx), Some(info.branch))
        } else {
            (self.buffer.full_training_set(), None)
        };

        let update = self.agent.learner.update(&data, &s.trpo, &mut update_rng, exec);
        self.agent.updates += 1;

        for (j, t) in real.iter().enumerate() {
            let row = DiagnosticsRow {
                episode: first + j as u64,
                cap,
                perturbation: t.perturbation,
                mean_abs_error: t.mean_abs_error(),
                total_reward: t.total_reward(),
                diverged: t.diverged,
                gate_open,
                her_episodes,
                n0,
                n1,
                branch,
                training_set: data.len(),
                update,
                log_var: self.agent.learner.policy.log_var,
            };
            observer.on_episode(&row)?;
            self.diagnostics.push(row);
        }

        if update.aborted {
            self.faults += 1;
            if self.faults > MAX_FAULTS {
                return Err(Error::Structure(format!(
                    "training aborted after {} non-finite updates",
                    self.faults
                )));
            }
            let (episode, updates) = (self.agent.episode, self.agent.updates);
            self.agent = self.last_good.clone();
            self.agent.episode = episode;
            self.agent.updates = updates;
        }

        let interval = s.curriculum.test_interval;
        if first / interval != self.agent.episode / interval {
            self.intermediate_test(observer)?;
        }
        Ok(())
    }

    /// Deterministic nominal test; updates the best agent and the curriculum.
    pub fn intermediate_test(&mut self, observer: &mut dyn TrainObserver) -> Result<PerformanceReport> {
        let report = intermediate_test(self.env, &self.agent)?;
        let is_best = self.best.as_ref().is_none_or(|b| better(&report, &b.report));
        if is_best {
            self.best = Some(BestAgent {
                agent: self.agent.clone(),
                report,
            });
        }
        let promoted = self.agent.curriculum.consider(&report, &self.settings.curriculum);
        self.last_good = self.agent.clone();
        let row = TestRow {
            episode: self.agent.episode,
            cap: self.agent.curriculum.cap,
            report,
            is_best,
            promoted,
        };
        observer.on_test(&row, &self.agent)?;
        self.tests.push(row);
        Ok(report)
    }
}

/// Fills value, target, advantage and TD magnitude of every step. The
/// episode end is a time limit, so the last value bootstraps the tail.
fn annotate(t: &Trajectory, learner: &Learner, cfg: &TrpoConfig) -> Result<Trajectory> {
    let mut out = t.clone();
    if out.steps.is_empty() {
        return Ok(out);
    }
    let mut values: Vec<f64> = out.steps.iter().map(|s| learner.value(&s.obs_norm)).collect();
    values.push(*values.last().expect("non-empty"));
    let rewards: Vec<f64> = out.steps.iter().map(|s| s.reward).collect();
    let (adv, targets) = gae(&rewards, &values, cfg.gamma, cfg.gae_lambda)?;
    for (i, s) in out.steps.iter_mut().enumerate() {
        s.value = values[i];
        s.advantage = adv[i];
        s.value_target = targets[i];
        s.td = (targets[i] - values[i]).abs();
    }
    Ok(out)
}

/// Deterministic −10 g/+10 g test of an agent in the nominal environment.
pub fn intermediate_test<E: Environment + ?Sized>(env: &E, agent: &Agent) -> Result<PerformanceReport> {
    env.test(agent.policy(), &agent.normalizer, &Perturbation::Nominal)
}

/// Fresh agent trained for `episodes` in the nominal environment.
pub fn train<E: Environment + ?Sized>(
    settings: &TrainSettings,
    env: &E,
    episodes: u64,
    observer: &mut dyn TrainObserver,
) -> Result<TrainRun> {
    let agent = Agent::new(settings)?;
    let mut trainer = Trainer::new(settings, env, agent, NonNominalSpec::nominal());
    trainer.run(episodes, observer)?;
    Ok(trainer.into_run())
}

// ---------------------------------------------------------------------------
// Robustifying trainings

/// True iff the mean |e_z| over the last `window` episodes exceeds
/// `max(floor, factor·start_value)`. Needs at least `window` episodes.
pub fn divergence_screen(history: &[f64], start_value: f64, cfg: &RobustifyConfig) -> bool {
    let w = cfg.screen_window;
    if history.len() < w {
        return false;
    }
    let recent = &history[history.len() - w..];
    let mean = recent.iter().sum::<f64>() / w as f64;
    mean > cfg.screen_floor.max(cfg.screen_factor * start_value)
}

#[derive(Debug, Clone)]
pub struct RobustifyOutcome {
    pub bound: f64,
    /// Mean |e_z| over the first screening window.
    pub start_value: f64,
    pub diverged: bool,
    pub run: TrainRun,
}

/// Resumes the nominal agent once per bound with per-episode draws of the
/// non-nominality, screens for divergence and finishes the survivors.
pub fn robustify<E: Environment + ?Sized>(
    settings: &TrainSettings,
    env: &E,
    nominal: &Agent,
    cfg: &RobustifyConfig,
    observers: &mut dyn FnMut(f64) -> Result<Box<dyn TrainObserver>>,
) -> Result<Vec<RobustifyOutcome>> {
    let mut out = Vec::new();
    for bound in cfg.bounds_or_default() {
        let spec = NonNominalSpec::new(cfg.kind, bound)?;
        let mut observer = observers(bound)?;
        let mut trainer = Trainer::new(settings, env, nominal.clone(), spec);
        trainer.run(cfg.screen_episodes, observer.as_mut())?;
        let history = trainer.error_history();
        let w = cfg.screen_window.min(history.len());
        let start_value = if w == 0 { 0.0 } else { history[..w].iter().sum::<f64>() / w as f64 };
        let diverged = divergence_screen(&history, start_value, cfg);
        if !diverged {
            trainer.run(cfg.total_episodes - cfg.screen_episodes, observer.as_mut())?;
        }
        out.push(RobustifyOutcome {
            bound,
            start_value,
            diverged,
            run: trainer.into_run(),
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Sweeps

/// Grid of fixed non-nominalities: latency 0..40 ms by 1 ms, estimation
/// ±10 % by 0.5 pp, parametric ±40 % by 2 pp.
pub fn default_grid(kind: NonNominalKind) -> Vec<f64> {
    let (lo, step, n) = match kind {
        NonNominalKind::None => return vec![0.0],
        NonNominalKind::Latency => (0.0, 1.0, 41),
        NonNominalKind::Estimation => (-0.10, 0.005, 41),
        NonNominalKind::Parametric => (-0.40, 0.02, 41),
    };
    (0..n).map(|i| lo + step * i as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub kind: NonNominalKind,
    pub grid: Vec<f64>,
    pub reports_a: Vec<PerformanceReport>,
    pub reports_b: Vec<PerformanceReport>,
    /// Per metric: % of grid points where B is strictly better (lower) than A.
    pub success_rate: [f64; 5],
}

impl SweepResult {
    pub fn metric_names() -> [&'static str; 5] {
        METRIC_NAMES
    }
}

/// Compares two agents over a grid using `evaluate(value) → (report_a, report_b)`.
pub fn sweep_with<F>(kind: NonNominalKind, grid: &[f64], exec: Execution, evaluate: F) -> Result<SweepResult>
where
    F: Fn(f64) -> Result<(PerformanceReport, PerformanceReport)> + Sync + Send,
{
    if grid.is_empty() {
        return Err(Error::Empty("sweep grid"));
    }
    let pairs: Vec<(PerformanceReport, PerformanceReport)> =
        exec.map(grid, |&v| evaluate(v)).into_iter().collect::<Result<_>>()?;
    let mut wins = [0usize; 5];
    for (a, b) in &pairs {
        let (va, vb) = (a.values(), b.values());
        for m in 0..5 {
            if vb[m] < va[m] {
                wins[m] += 1;
            }
        }
    }
    let success_rate = wins.map(|w| 100.0 * w as f64 / grid.len() as f64);
    let (reports_a, reports_b) = pairs.into_iter().unzip();
    Ok(SweepResult {
        kind,
        grid: grid.to_vec(),
        reports_a,
        reports_b,
        success_rate,
    })
}

/// Deterministic test of both agents at every grid value.
pub fn sweep<E: Environment + ?Sized>(
    env: &E,
    a: &Agent,
    b: &Agent,
    kind: NonNominalKind,
    grid: &[f64],
    exec: Execution,
) -> Result<SweepResult> {
    sweep_with(kind, grid, exec, |v| {
        let p = Perturbation::joint(kind, v);
        Ok((
            env.test(a.policy(), &a.normalizer, &p)?,
            env.test(b.policy(), &b.normalizer, &p)?,
        ))
    })
}
