//! Trust-region policy optimisation with a penalised KL objective.
//!
//! The policy is a scalar Gaussian whose mean is an [`Mlp`] and whose
//! log-variance is a trainable base plus a term driven by the tracking error:
//!
//! ```text
//! σ²_η = exp(σ²_log,train + k·min(|e_z| / e_scale, 1))
//! ```
//!
//! Policy loss over a batch of n samples (all log-ratios against a frozen
//! snapshot of the policy taken when the update starts):
//!
//! ```text
//! L1 = mean(A) · Π_i π_new(η_i)/π_old(η_i)      (product evaluated as exp(Σ log-ratios), clamped)
//! L2 = mean_i KL(π_old(·|s_i) ‖ π_new(·|s_i))
//! L_P = −L1 + α·max(0, L2 − δ)² + β·L2
//! ```

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{chunk_ranges, Execution};
use crate::nn::{AdamState, ForwardCache, Mlp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    /// Trust-region radius δ on the mean KL.
    pub trust_radius: f64,
    /// Initial quadratic penalty coefficient α₀.
    pub alpha: f64,
    /// Linear KL penalty coefficient β.
    pub beta: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    /// Minibatches visited per epoch (the training set is reshuffled each
    /// epoch); 0 means the whole training set.
    pub max_minibatches_per_epoch: usize,
    pub lr_policy: f64,
    pub lr_value: f64,
    /// Exploration gain k of the error-driven log-variance term.
    pub explore_gain: f64,
    /// g
    pub error_scale: f64,
    /// Bound on |Σ log-ratio| inside L1.
    pub log_ratio_clamp: f64,
    /// Samples used to measure the realised KL after an update.
    pub kl_eval_samples: usize,
    /// Global L2 bound on each minibatch gradient; 0 disables clipping.
    pub max_grad_norm: f64,
}

impl Default for TrpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            trust_radius: 0.01,
            alpha: 50.0,
            beta: 1.0,
            epochs: 10,
            minibatch_size: 512,
            max_minibatches_per_epoch: 2,
            lr_policy: 3e-4,
            lr_value: 1e-3,
            explore_gain: 1.0,
            error_scale: 5.0,
            log_ratio_clamp: 30.0,
            kl_eval_samples: 2048,
            max_grad_norm: 1.0,
        }
    }
}

impl TrpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("trpo.{m}")));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad(format!("gae_lambda must be in [0, 1], got {}", self.gae_lambda));
        }
        if !(self.trust_radius > 0.0) {
            return bad("trust_radius must be > 0".into());
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return bad("alpha and beta must be >= 0".into());
        }
        if self.minibatch_size == 0 {
            return bad("minibatch_size must be > 0".into());
        }
        if !(self.lr_policy > 0.0 && self.lr_value > 0.0) {
            return bad("learning rates must be > 0".into());
        }
        if !(self.error_scale > 0.0 && self.explore_gain >= 0.0) {
            return bad("error_scale must be > 0 and explore_gain >= 0".into());
        }
        if !(self.log_ratio_clamp > 0.0) {
            return bad("log_ratio_clamp must be > 0".into());
        }
        if !(self.max_grad_norm >= 0.0) {
            return bad("max_grad_norm must be >= 0".into());
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Advantage estimation

/// GAE over one trajectory. `values` holds `V(s_0..s_{T-1})` followed by the
/// bootstrap value, so it is one longer than `rewards`. Returns
/// `(advantages, value_targets)` with `V′_t = A_t + V_t`.
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if values.len() != rewards.len() + 1 {
        return Err(Error::LengthMismatch {
            what: "gae values (rewards + bootstrap)",
            left: rewards.len() + 1,
            right: values.len(),
        });
    }
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * values[t + 1] - values[t];
        acc = delta + gamma * lambda * acc;
        adv[t] = acc;
    }
    let targets = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, targets))
}

// ---------------------------------------------------------------------------
// Gaussian policy

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exploration {
    pub gain: f64,
    pub error_scale: f64,
}

impl Exploration {
    pub fn from_config(cfg: &TrpoConfig) -> Self {
        Self {
            gain: cfg.explore_gain,
            error_scale: cfg.error_scale,
        }
    }

    /// σ²_log,tune(e_z)
    pub fn log_var_tune(&self, e_z: f64) -> f64 {
        self.gain * (e_z.abs() / self.error_scale).min(1.0)
    }
}

/// σ²_η = exp(σ²_log,train + σ²_log,tune(e_z))
pub fn exploration_variance(e_z: f64, log_var_train: f64, exploration: &Exploration) -> f64 {
    (log_var_train + exploration.log_var_tune(e_z)).exp()
}

pub fn gaussian_log_prob(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (2.0 * PI * var).ln() - d * d / (2.0 * var)
}

/// KL(p ‖ q) between univariate Gaussians given as (mean, variance).
pub fn gaussian_kl(p: (f64, f64), q: (f64, f64)) -> Result<f64> {
    let (m1, v1) = p;
    let (m2, v2) = q;
    for v in [v1, v2] {
        if !(v > 0.0) {
            return Err(Error::NonPositiveVariance(v));
        }
    }
    let d = m1 - m2;
    Ok(0.5 * (v2 / v1).ln() + (v1 + d * d) / (2.0 * v2) - 0.5)
}

/// Anything that maps a normalised observation and the raw tracking error to
/// a Gaussian over the scalar action.
pub trait Actor: Sync {
    /// (mean, variance)
    fn distribution(&self, obs: &[f64], e_z: f64) -> (f64, f64);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub net: Mlp,
    /// σ²_log,train
    pub log_var: f64,
    /// rad per unit network output.
    pub action_scale: f64,
    pub exploration: Exploration,
}

impl GaussianPolicy {
    pub fn mean(&self, obs: &[f64]) -> f64 {
        self.action_scale * self.net.forward_scalar(obs).unwrap_or(f64::NAN)
    }

    pub fn variance(&self, e_z: f64) -> f64 {
        exploration_variance(e_z, self.log_var, &self.exploration)
    }

    /// Flat trainable vector: network parameters then the log-variance.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut p = self.net.params().to_vec();
        p.push(self.log_var);
        p
    }

    pub fn set_flat_params(&mut self, p: &[f64]) {
        let n = self.net.params().len();
        self.net.params_mut().copy_from_slice(&p[..n]);
        self.log_var = p[n];
    }

    pub fn n_params(&self) -> usize {
        self.net.params().len() + 1
    }
}

impl Actor for GaussianPolicy {
    fn distribution(&self, obs: &[f64], e_z: f64) -> (f64, f64) {
        (self.mean(obs), self.variance(e_z))
    }
}

/// Draws η ~ N(μ, σ²) (or returns μ when exploration is off) and its
/// log-density. Returns `(η, log_prob, σ)`.
pub fn sample_action<A: Actor + ?Sized, R: Rng + ?Sized>(
    actor: &A,
    obs: &[f64],
    e_z: f64,
    explore: bool,
    rng: &mut R,
) -> (f64, f64, f64) {
    let (mean, var) = actor.distribution(obs, e_z);
    let std = var.sqrt();
    let eta = if explore {
        let z: f64 = StandardNormal.sample(rng);
        mean + std * z
    } else {
        mean
    };
    (eta, gaussian_log_prob(eta, mean, var), std)
}

// ---------------------------------------------------------------------------
// Losses

/// Struct-of-arrays training data. `obs` is row-major `len × obs_dim`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch {
    pub obs_dim: usize,
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    /// Raw tracking error seen when the action was drawn (drives σ²).
    pub errors: Vec<f64>,
    pub advantages: Vec<f64>,
    pub targets: Vec<f64>,
}

impl Batch {
    pub fn new(obs_dim: usize) -> Self {
        Self {
            obs_dim,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn obs(&self, i: usize) -> &[f64] {
        &self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn push(&mut self, obs: &[f64], action: f64, error: f64, advantage: f64, target: f64) {
        debug_assert_eq!(obs.len(), self.obs_dim);
        self.obs.extend_from_slice(obs);
        self.actions.push(action);
        self.errors.push(error);
        self.advantages.push(advantage);
        self.targets.push(target);
    }

    pub fn select(&self, indices: &[usize]) -> Batch {
        let mut b = Batch::new(self.obs_dim);
        for &i in indices {
            b.push(self.obs(i), self.actions[i], self.errors[i], self.advantages[i], self.targets[i]);
        }
        b
    }
}

/// Old-policy quantities for each sample of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct OldPolicyStats {
    pub log_probs: Vec<f64>,
    pub means: Vec<f64>,
    pub vars: Vec<f64>,
}

impl OldPolicyStats {
    pub fn compute(batch: &Batch, old: &GaussianPolicy) -> Self {
        let mut s = Self {
            log_probs: Vec::with_capacity(batch.len()),
            means: Vec::with_capacity(batch.len()),
            vars: Vec::with_capacity(batch.len()),
        };
        for i in 0..batch.len() {
            let (m, v) = old.distribution(batch.obs(i), batch.errors[i]);
            s.log_probs.push(gaussian_log_prob(batch.actions[i], m, v));
            s.means.push(m);
            s.vars.push(v);
        }
        s
    }
}

/// A batch paired with the old-policy statistics the loss needs.
#[derive(Debug, Clone)]
pub struct PolicyBatch {
    pub data: Batch,
    pub old: Option<OldPolicyStats>,
}

impl PolicyBatch {
    pub fn with_old_policy(data: Batch, old: &GaussianPolicy) -> Self {
        let stats = OldPolicyStats::compute(&data, old);
        Self { data, old: Some(stats) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penalty {
    pub alpha: f64,
    pub beta: f64,
    pub radius: f64,
    pub log_ratio_clamp: f64,
}

impl Penalty {
    pub fn from_config(cfg: &TrpoConfig, alpha: f64) -> Self {
        Self {
            alpha,
            beta: cfg.beta,
            radius: cfg.trust_radius,
            log_ratio_clamp: cfg.log_ratio_clamp,
        }
    }

    pub fn combine(&self, l1: f64, l2: f64) -> f64 {
        let excess = (l2 - self.radius).max(0.0);
        -l1 + self.alpha * excess * excess + self.beta * l2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PolicyLoss {
    pub l1: f64,
    pub l2: f64,
    pub total: f64,
}

const CHUNK: usize = 64;

struct SampleEval {
    cache: ForwardCache,
    mean: f64,
    var: f64,
    log_ratio: f64,
    kl: f64,
}

fn eval_samples(
    batch: &PolicyBatch,
    policy: &GaussianPolicy,
    exec: Execution,
) -> Result<Vec<SampleEval>> {
    let old = batch.old.as_ref().ok_or(Error::MissingOldLogProbs)?;
    let data = &batch.data;
    let chunks = chunk_ranges(data.len(), CHUNK);
    let evaluated = exec.map(&chunks, |r| -> Result<Vec<SampleEval>> {
        r.clone()
            .map(|i| {
                let cache = policy.net.forward_cached(data.obs(i))?;
                let mean = policy.action_scale * cache.output()[0];
                let var = policy.variance(data.errors[i]);
                let lp = gaussian_log_prob(data.actions[i], mean, var);
                let kl = gaussian_kl((old.means[i], old.vars[i]), (mean, var))?;
                Ok(SampleEval {
                    cache,
                    mean,
                    var,
                    log_ratio: lp - old.log_probs[i],
                    kl,
                })
            })
            .collect()
    });
    let mut out = Vec::with_capacity(data.len());
    for chunk in evaluated {
        out.extend(chunk?);
    }
    Ok(out)
}

fn loss_from_evals(batch: &Batch, evals: &[SampleEval], penalty: &Penalty) -> (PolicyLoss, f64, bool) {
    let n = batch.len() as f64;
    let mean_adv = batch.advantages.iter().sum::<f64>() / n;
    let log_sum: f64 = evals.iter().map(|e| e.log_ratio).sum();
    let clamped = log_sum.abs() >= penalty.log_ratio_clamp;
    let ratio = log_sum.clamp(-penalty.log_ratio_clamp, penalty.log_ratio_clamp).exp();
    let l1 = mean_adv * ratio;
    let l2 = evals.iter().map(|e| e.kl).sum::<f64>() / n;
    let total = penalty.combine(l1, l2);
    (PolicyLoss { l1, l2, total }, ratio, clamped)
}

/// `(L_P, L1, L2)` for the current policy on a batch carrying old-policy
/// statistics.
pub fn policy_loss(batch: &PolicyBatch, policy: &GaussianPolicy, penalty: &Penalty) -> Result<PolicyLoss> {
    if batch.data.is_empty() {
        return Err(Error::Empty("policy batch"));
    }
    let evals = eval_samples(batch, policy, Execution::Sequential)?;
    Ok(loss_from_evals(&batch.data, &evals, penalty).0)
}

/// Policy loss and its gradient with respect to [`GaussianPolicy::flat_params`].
pub fn policy_loss_grad(
    batch: &PolicyBatch,
    policy: &GaussianPolicy,
    penalty: &Penalty,
    exec: Execution,
) -> Result<(PolicyLoss, Vec<f64>)> {
    let data = &batch.data;
    if data.is_empty() {
        return Err(Error::Empty("policy batch"));
    }
    let old = batch.old.as_ref().ok_or(Error::MissingOldLogProbs)?;
    let evals = eval_samples(batch, policy, exec)?;
    let (loss, ratio, clamped) = loss_from_evals(data, &evals, penalty);
    let n = data.len() as f64;
    let mean_adv = data.advantages.iter().sum::<f64>() / n;
    // ∂L_P/∂log-ratio_i and ∂L_P/∂KL_i, the same for every sample.
    let c_ratio = if clamped { 0.0 } else { -mean_adv * ratio };
    let c_kl = (2.0 * penalty.alpha * (loss.l2 - penalty.radius).max(0.0) + penalty.beta) / n;

    let n_net = policy.net.params().len();
    let chunks = chunk_ranges(data.len(), CHUNK);
    let partials = exec.map(&chunks, |r| -> Result<Vec<f64>> {
        let mut g = vec![0.0; n_net + 1];
        for i in r.clone() {
            let e = &evals[i];
            let diff = data.actions[i] - e.mean;
            let dlr_dmean = diff / e.var;
            let dlr_dlogvar = -0.5 + diff * diff / (2.0 * e.var);
            let dm = old.means[i] - e.mean;
            let dkl_dmean = -dm / e.var;
            let dkl_dlogvar = 0.5 - (old.vars[i] + dm * dm) / (2.0 * e.var);
            let d_mean = c_ratio * dlr_dmean + c_kl * dkl_dmean;
            g[n_net] += c_ratio * dlr_dlogvar + c_kl * dkl_dlogvar;
            if d_mean != 0.0 {
                policy
                    .net
                    .backward_into(&e.cache, &[policy.action_scale * d_mean], &mut g[..n_net])?;
            }
        }
        Ok(g)
    });
    let mut grads = vec![0.0; n_net + 1];
    for p in partials {
        for (a, b) in grads.iter_mut().zip(p?) {
            *a += b;
        }
    }
    Ok((loss, grads))
}

/// Mean squared error between `value_scale·net(s)` and the stored targets.
pub fn value_loss(batch: &Batch, net: &Mlp, value_scale: f64) -> Result<f64> {
    if batch.is_empty() {
        return Ok(0.0);
    }
    let mut s = 0.0;
    for i in 0..batch.len() {
        let d = value_scale * net.forward_scalar(batch.obs(i))? - batch.targets[i];
        s += d * d;
    }
    Ok(s / batch.len() as f64)
}

pub fn value_loss_grad(batch: &Batch, net: &Mlp, value_scale: f64, exec: Execution) -> Result<(f64, Vec<f64>)> {
    let n_params = net.params().len();
    if batch.is_empty() {
        return Ok((0.0, vec![0.0; n_params]));
    }
    let n = batch.len() as f64;
    let chunks = chunk_ranges(batch.len(), CHUNK);
    let partials = exec.map(&chunks, |r| -> Result<(f64, Vec<f64>)> {
        let mut g = vec![0.0; n_params];
        let mut loss = 0.0;
        for i in r.clone() {
            let cache = net.forward_cached(batch.obs(i))?;
            let d = value_scale * cache.output()[0] - batch.targets[i];
            loss += d * d;
            net.backward_into(&cache, &[2.0 * d * value_scale / n], &mut g)?;
        }
        Ok((loss, g))
    });
    let mut grads = vec![0.0; n_params];
    let mut loss = 0.0;
    for p in partials {
        let (l, g) = p?;
        loss += l;
        for (a, b) in grads.iter_mut().zip(g) {
            *a += b;
        }
    }
    Ok((loss / n, grads))
}

/// Rescales `g` onto the ball of radius `max_norm` if it lies outside; a
/// zero bound leaves it alone. The exponential in L1 can produce gradients
/// many orders of magnitude above typical ones, which would otherwise swamp
/// the ADAM second-moment estimate for thousands of steps.
pub fn clip_grad_norm(g: &mut [f64], max_norm: f64) -> f64 {
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let k = max_norm / norm;
        g.iter_mut().for_each(|x| *x *= k);
    }
    norm
}

// ---------------------------------------------------------------------------
// Update

/// Policy, value network, their optimisers and the adaptive penalty: the
/// learnable part of an agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Learner {
    pub policy: GaussianPolicy,
    /// Frozen π_old, refreshed at the start of every update.
    pub snapshot: GaussianPolicy,
    pub value_net: Mlp,
    pub value_scale: f64,
    pub adam_policy: AdamState,
    pub adam_value: AdamState,
    /// Current quadratic penalty coefficient.
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateDiagnostics {
    pub l1: f64,
    pub l2: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub alpha: f64,
    pub minibatches: usize,
    pub aborted: bool,
}

impl Learner {
    pub fn value(&self, obs: &[f64]) -> f64 {
        self.value_scale * self.value_net.forward_scalar(obs).unwrap_or(f64::NAN)
    }

    fn restore_from(&mut self, backup: &Learner) {
        self.policy = backup.policy.clone();
        self.value_net = backup.value_net.clone();
        self.adam_policy = backup.adam_policy.clone();
        self.adam_value = backup.adam_value.clone();
    }

    /// K epochs of ADAM on the policy and value losses, then the trust-region
    /// bookkeeping: α grows ×1.5 when the realised KL exceeds δ and shrinks
    /// ÷1.5 below δ/2, within `[α₀/100, 100·α₀]`.
    ///
    /// A non-finite loss or gradient aborts the update and restores the
    /// parameters held before it.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        data: &Batch,
        cfg: &TrpoConfig,
        rng: &mut R,
        exec: Execution,
    ) -> UpdateDiagnostics {
        self.snapshot = self.policy.clone();
        let mut diag = UpdateDiagnostics {
            alpha: self.alpha,
            ..Default::default()
        };
        if data.is_empty() {
            return diag;
        }
        let backup = self.clone();
        let mut indices: Vec<usize> = (0..data.len()).collect();
        let mb = cfg.minibatch_size.min(data.len());
        let per_epoch = match cfg.max_minibatches_per_epoch {
            0 => data.len().div_ceil(mb),
            m => m.min(data.len().div_ceil(mb)),
        };
        for _ in 0..cfg.epochs {
            indices.shuffle(rng);
            for k in 0..per_epoch {
                let idx = &indices[k * mb..((k + 1) * mb).min(data.len())];
                if let Err(()) = self.minibatch_step(&data.select(idx), cfg, exec) {
                    self.restore_from(&backup);
                    diag.aborted = true;
                    return diag;
                }
                diag.minibatches += 1;
            }
        }

        // Realised statistics on an evenly strided subset.
        let stride = (data.len() / cfg.kl_eval_samples.max(1)).max(1);
        let eval_idx: Vec<usize> = (0..data.len()).step_by(stride).collect();
        let eval = PolicyBatch::with_old_policy(data.select(&eval_idx), &self.snapshot);
        let penalty = Penalty::from_config(cfg, self.alpha);
        match (
            policy_loss(&eval, &self.policy, &penalty),
            value_loss(&eval.data, &self.value_net, self.value_scale),
        ) {
            (Ok(pl), Ok(vl)) if pl.total.is_finite() && vl.is_finite() => {
                diag.l1 = pl.l1;
                diag.l2 = pl.l2;
                diag.policy_loss = pl.total;
                diag.value_loss = vl;
            }
            _ => {
                self.restore_from(&backup);
                diag.aborted = true;
                return diag;
            }
        }
        self.adapt_penalty(diag.l2, cfg);
        diag.alpha = self.alpha;
        diag
    }

    fn minibatch_step(&mut self, mb: &Batch, cfg: &TrpoConfig, exec: Execution) -> Result<(), ()> {
        let pb = PolicyBatch::with_old_policy(mb.clone(), &self.snapshot);
        let penalty = Penalty::from_config(cfg, self.alpha);
        let (loss, pg) = policy_loss_grad(&pb, &self.policy, &penalty, exec).map_err(|_| ())?;
        let (vloss, vg) = value_loss_grad(mb, &self.value_net, self.value_scale, exec).map_err(|_| ())?;
        if !loss.total.is_finite() || !vloss.is_finite() {
            return Err(());
        }
        let (mut pg, mut vg) = (pg, vg);
        clip_grad_norm(&mut pg, cfg.max_grad_norm);
        clip_grad_norm(&mut vg, cfg.max_grad_norm);
        let mut p = self.policy.flat_params();
        self.adam_policy.step(&mut p, &pg).map_err(|_| ())?;
        self.policy.set_flat_params(&p);
        self.adam_value
            .step(self.value_net.params_mut(), &vg)
            .map_err(|_| ())?;
        if !self.policy.net.is_finite() || !self.policy.log_var.is_finite() || !self.value_net.is_finite() {
            return Err(());
        }
        Ok(())
    }

    /// The α rule on its own, for a realised KL.
    pub fn adapt_penalty(&mut self, realised_kl: f64, cfg: &TrpoConfig) {
        if realised_kl > cfg.trust_radius {
            self.alpha *= 1.5;
        } else if realised_kl < cfg.trust_radius / 2.0 {
            self.alpha /= 1.5;
        }
        self.alpha = self.alpha.clamp(cfg.alpha / 100.0, cfg.alpha * 100.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_policy(seed: u64) -> GaussianPolicy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GaussianPolicy {
            net: Mlp::xavier(&[3, 6, 1], &mut rng).unwrap(),
            log_var: -2.0,
            action_scale: 0.5,
            exploration: Exploration {
                gain: 1.0,
                error_scale: 5.0,
            },
        }
    }

    fn random_batch(n: usize, seed: u64) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Batch::new(3);
        for _ in 0..n {
            let obs: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            b.push(
                &obs,
                rng.random_range(-0.5..0.5),
                rng.random_range(-8.0..8.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-2.0..2.0),
            );
        }
        b
    }

    #[test]
    fn gae_lambda_zero_is_td_residual() {
        let r = [1.0, -0.5, 2.0];
        let v = [0.3, 0.1, -0.2, 0.4];
        let (a, t) = gae(&r, &v, 0.9, 0.0).unwrap();
        for i in 0..3 {
            assert_eq!(a[i], r[i] + 0.9 * v[i + 1] - v[i]);
            assert_eq!(t[i], a[i] + v[i]);
        }
    }

    #[test]
    fn gae_one_step() {
        let (a, t) = gae(&[1.0], &[0.5, 0.2], 0.99, 0.95).unwrap();
        assert!((a[0] - 0.698).abs() < 1e-12);
        assert!((t[0] - 1.198).abs() < 1e-12);
        assert!(gae(&[1.0], &[0.5], 0.99, 0.95).is_err());
    }

    #[test]
    fn exploration_variance_shape() {
        let ex = Exploration {
            gain: 1.0,
            error_scale: 5.0,
        };
        assert_eq!(exploration_variance(0.0, -3.0, &ex), (-3f64).exp());
        let mut prev = 0.0;
        for k in 0..200 {
            let v = exploration_variance(k as f64 * 0.05, -3.0, &ex);
            assert!(v >= prev);
            prev = v;
        }
        assert_eq!(exploration_variance(5.0, -3.0, &ex), (-2f64).exp());
        assert_eq!(exploration_variance(-12.0, -3.0, &ex), (-2f64).exp());
    }

    #[test]
    fn sampling() {
        let p = small_policy(0);
        let obs = [0.1, 0.2, 0.3];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (eta, lp, std) = sample_action(&p, &obs, 0.0, false, &mut rng);
        assert_eq!(eta, p.mean(&obs));
        assert!((lp + 0.5 * (2.0 * PI * std * std).ln()).abs() < 1e-12);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_action(&p, &obs, 0.0, true, &mut rng).0).collect();
        let m = draws.iter().sum::<f64>() / n as f64;
        let s = (draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((s / std - 1.0).abs() < 0.02);
    }

    #[test]
    fn tiny_variance_returns_mean() {
        let mut p = small_policy(1);
        p.log_var = -200.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let obs = [0.3, 0.0, -0.3];
        let (eta, _, _) = sample_action(&p, &obs, 0.0, true, &mut rng);
        assert!((eta - p.mean(&obs)).abs() < 1e-30);
    }

    #[test]
    fn kl_closed_forms() {
        assert_eq!(gaussian_kl((0.3, 2.0), (0.3, 2.0)).unwrap(), 0.0);
        assert!((gaussian_kl((1.0, 1.0), (0.0, 1.0)).unwrap() - 0.5).abs() < 1e-15);
        let v = gaussian_kl((0.0, 1.0), (0.0, 4.0)).unwrap();
        assert!((v - (2f64.ln() + 0.125 - 0.5)).abs() < 1e-15);
        assert!(gaussian_kl((0.0, 0.0), (0.0, 1.0)).is_err());
    }

    #[test]
    fn unchanged_policy_loss() {
        let p = small_policy(3);
        let b = random_batch(50, 4);
        let pb = PolicyBatch::with_old_policy(b.clone(), &p);
        let pen = Penalty {
            alpha: 50.0,
            beta: 1.0,
            radius: 0.01,
            log_ratio_clamp: 30.0,
        };
        let l = policy_loss(&pb, &p, &pen).unwrap();
        let mean_adv = b.advantages.iter().sum::<f64>() / 50.0;
        assert!((l.l1 - mean_adv).abs() < 1e-12);
        assert_eq!(l.l2, 0.0);
        assert!((l.total + mean_adv).abs() < 1e-12);
        let missing = PolicyBatch { data: b, old: None };
        assert!(matches!(policy_loss(&missing, &p, &pen), Err(Error::MissingOldLogProbs)));
    }

    #[test]
    fn hand_batch_with_opposite_advantages() {
        // advantages ±1 → mean 0 → L1 = 0 whatever the ratios; L_P = β·L2.
        let p_old = small_policy(5);
        let mut p_new = p_old.clone();
        p_new.log_var += 0.1;
        let mut b = Batch::new(3);
        b.push(&[0.1, 0.1, 0.1], 0.05, 0.0, 1.0, 0.0);
        b.push(&[-0.2, 0.3, 0.0], -0.02, 0.0, -1.0, 0.0);
        let pb = PolicyBatch::with_old_policy(b, &p_old);
        let pen = Penalty {
            alpha: 50.0,
            beta: 2.0,
            radius: 1.0,
            log_ratio_clamp: 30.0,
        };
        let l = policy_loss(&pb, &p_new, &pen).unwrap();
        assert_eq!(l.l1, 0.0);
        assert!(l.l2 > 0.0 && l.l2 < 1.0);
        assert!((l.total - 2.0 * l.l2).abs() < 1e-15);
    }

    #[test]
    fn hinge_is_monotone_in_radius() {
        let p_old = small_policy(6);
        let mut p_new = small_policy(7);
        p_new.log_var = -1.0;
        let pb = PolicyBatch::with_old_policy(random_batch(20, 8), &p_old);
        let mut prev = f64::INFINITY;
        for k in 0..50 {
            let pen = Penalty {
                alpha: 50.0,
                beta: 1.0,
                radius: k as f64 * 0.05,
                log_ratio_clamp: 30.0,
            };
            let l = policy_loss(&pb, &p_new, &pen).unwrap();
            assert!(l.total <= prev);
            prev = l.total;
        }
    }

    #[test]
    fn value_loss_cases() {
        let net = Mlp::zeros(&[3, 1]).unwrap();
        let mut b = random_batch(10, 2);
        b.targets.iter_mut().for_each(|t| *t = 0.0);
        assert_eq!(value_loss(&b, &net, 10.0).unwrap(), 0.0);
        b.targets.iter_mut().for_each(|t| *t = -1.5);
        assert!((value_loss(&b, &net, 10.0).unwrap() - 2.25).abs() < 1e-15);
    }

    fn learner(seed: u64) -> Learner {
        let p = small_policy(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let v = Mlp::xavier(&[3, 6, 1], &mut rng).unwrap();
        Learner {
            adam_policy: AdamState::new(p.n_params(), 1e-3),
            adam_value: AdamState::new(v.params().len(), 1e-3),
            snapshot: p.clone(),
            policy: p,
            value_net: v,
            value_scale: 1.0,
            alpha: 50.0,
        }
    }

    #[test]
    fn zero_epochs_refreshes_snapshot_only() {
        let mut l = learner(1);
        l.snapshot.log_var = 3.0;
        let before = (l.policy.clone(), l.value_net.clone());
        let cfg = TrpoConfig {
            epochs: 0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        l.update(&random_batch(64, 1), &cfg, &mut rng, Execution::Sequential);
        assert_eq!((l.policy.clone(), l.value_net.clone()), before);
        assert_eq!(l.snapshot, l.policy);
    }

    #[test]
    fn penalty_rule() {
        let cfg = TrpoConfig::default();
        let mut l = learner(2);
        l.adapt_penalty(0.05, &cfg);
        assert_eq!(l.alpha, 75.0);
        l.adapt_penalty(0.007, &cfg);
        assert_eq!(l.alpha, 75.0);
        l.adapt_penalty(0.001, &cfg);
        assert_eq!(l.alpha, 50.0);
        for _ in 0..100 {
            l.adapt_penalty(1.0, &cfg);
        }
        assert_eq!(l.alpha, 5000.0);
    }

    #[test]
    fn update_is_deterministic_and_reduces_value_loss() {
        let cfg = TrpoConfig {
            minibatch_size: 32,
            max_minibatches_per_epoch: 0,
            ..Default::default()
        };
        let b = random_batch(256, 3);
        let run = || {
            let mut l = learner(4);
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let before = value_loss(&b, &l.value_net, 1.0).unwrap();
            for _ in 0..5 {
                l.update(&b, &cfg, &mut rng, Execution::Parallel);
            }
            (l, before)
        };
        let (a, before) = run();
        let (c, _) = run();
        assert_eq!(a.policy.flat_params(), c.policy.flat_params());
        assert_eq!(a.value_net.params(), c.value_net.params());
        assert!(value_loss(&b, &a.value_net, 1.0).unwrap() < before);
    }

    #[test]
    fn non_finite_data_aborts_and_restores() {
        let mut l = learner(6);
        let before = l.clone();
        let mut b = random_batch(64, 2);
        b.targets[3] = f64::NAN;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = l.update(&b, &TrpoConfig::default(), &mut rng, Execution::Sequential);
        assert!(d.aborted);
        assert_eq!(l.policy, before.policy);
        assert_eq!(l.value_net, before.value_net);
    }
}
