//! FIFO replay over recent batches with balanced rank-prioritised sampling
//! and the scheduling gate that switches hindsight relabelling and
//! prioritised sampling on.
//!
//! Every stored step has a global rank by descending TD magnitude (ties in
//! insertion order) and priority `p_i = 1/rank(i)`. Steps are split into a
//! success pool (`l_i = 1`) and the rest. When successes are scarce
//! (`N₁ < quota·N`) a fixed share `quota` of each sample comes from the
//! success pool and each pool is drawn in proportion to `p_i`; otherwise the
//! pools are merged and a single prioritised draw is made.

use std::collections::VecDeque;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{HerStrategy, StepRecord, Trajectory, OBS_DIM};
use crate::error::{Error, Result};
use crate::trpo::Batch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayConfig {
    /// Batches kept in the buffer.
    pub capacity: usize,
    /// Episodes collected per batch.
    pub episodes_per_batch: usize,
    /// Steps drawn per update while prioritised sampling is active.
    pub training_set_size: usize,
    /// Share of each sample taken from the success pool when it is scarce.
    pub success_quota: f64,
    /// Gate opens when the previous episode's mean |e_z| is at most this, g.
    pub gate_threshold: f64,
    /// Relabelling strategies applied to each collected episode.
    pub her_strategies: Vec<HerStrategy>,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            capacity: 10,
            episodes_per_batch: 2,
            training_set_size: 5000,
            success_quota: 0.25,
            gate_threshold: 2.0,
            her_strategies: vec![HerStrategy::Mean, HerStrategy::Final],
        }
    }
}

impl ReplayConfig {
    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 || self.episodes_per_batch == 0 || self.training_set_size == 0 {
            return Err(Error::Config(
                "replay.capacity, episodes_per_batch and training_set_size must be > 0".into(),
            ));
        }
        if !(self.success_quota > 0.0 && self.success_quota < 1.0) {
            return Err(Error::Config("replay.success_quota must be in (0, 1)".into()));
        }
        if !(self.gate_threshold >= 0.0) {
            return Err(Error::Config("replay.gate_threshold must be >= 0".into()));
        }
        Ok(())
    }
}

/// Open iff the previous episode's mean tracking error is at most `threshold`.
pub fn ser_gate(previous_mean_error: f64, threshold: f64) -> bool {
    previous_mean_error <= threshold
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SerGate {
    pub threshold: f64,
    /// Mean |e_z| of the most recently collected episode.
    pub previous_error: Option<f64>,
}

impl SerGate {
    pub fn new(threshold: f64) -> Self {
        Self {
            threshold,
            previous_error: None,
        }
    }

    pub fn observe(&mut self, mean_error: f64) {
        self.previous_error = Some(mean_error);
    }

    pub fn is_open(&self) -> bool {
        self.previous_error.is_some_and(|e| ser_gate(e, self.threshold))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleBranch {
    /// Success pool scarce: fixed quota per pool.
    Balanced,
    /// Pools merged.
    Molten,
}

impl SampleBranch {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleBranch::Balanced => "balanced",
            SampleBranch::Molten => "molten",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleInfo {
    pub branch: SampleBranch,
    pub n0: usize,
    pub n1: usize,
    /// Draws taken from the success pool.
    pub drawn_success: usize,
    /// A pool with a positive quota was empty and its share was moved.
    pub reassigned: bool,
}

#[derive(Debug, Clone)]
struct RankTables {
    /// Global step index per rank (rank = position + 1).
    order: Vec<usize>,
    /// Priority 1/rank per global step index.
    priority: Vec<f64>,
    pools: [Vec<usize>; 2],
}

#[derive(Debug, Clone, Default)]
pub struct ReplayBuffer {
    capacity: usize,
    batches: VecDeque<Vec<Trajectory>>,
    ranks: Option<RankTables>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            batches: VecDeque::new(),
            ranks: None,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn batches(&self) -> impl Iterator<Item = &Vec<Trajectory>> {
        self.batches.iter()
    }

    pub fn len_batches(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total_steps() == 0
    }

    /// Appends a batch, evicting the oldest when full.
    pub fn push_batch(&mut self, batch: Vec<Trajectory>) {
        if self.batches.len() == self.capacity {
            self.batches.pop_front();
        }
        self.batches.push_back(batch);
        self.ranks = None;
    }

    /// Steps in insertion order.
    pub fn steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.batches.iter().flatten().flat_map(|t| t.steps.iter())
    }

    pub fn total_steps(&self) -> usize {
        self.batches.iter().flatten().map(|t| t.steps.len()).sum()
    }

    /// (N₀, N₁)
    pub fn counts(&self) -> (usize, usize) {
        let n1 = self.steps().filter(|s| s.priority == 1).count();
        (self.total_steps() - n1, n1)
    }

    fn rank_tables(&mut self) -> &RankTables {
        if self.ranks.is_none() {
            let tds: Vec<f64> = self.steps().map(|s| s.td).collect();
            let levels: Vec<u8> = self.steps().map(|s| s.priority).collect();
            let mut order: Vec<usize> = (0..tds.len()).collect();
            // Stable sort keeps insertion order among equal magnitudes.
            order.sort_by(|&a, &b| tds[b].total_cmp(&tds[a]));
            let mut priority = vec![0.0; tds.len()];
            for (r, &i) in order.iter().enumerate() {
                priority[i] = 1.0 / (r + 1) as f64;
            }
            let mut pools = [Vec::new(), Vec::new()];
            for (i, &l) in levels.iter().enumerate() {
                pools[usize::from(l == 1)].push(i);
            }
            self.ranks = Some(RankTables { order, priority, pools });
        }
        self.ranks.as_ref().expect("rank tables just built")
    }

    /// 1-based rank of every step, in insertion order.
    pub fn ranks(&mut self) -> Vec<usize> {
        let t = self.rank_tables();
        let mut r = vec![0; t.order.len()];
        for (k, &i) in t.order.iter().enumerate() {
            r[i] = k + 1;
        }
        r
    }

    /// Sampling probability of every step under the current branch.
    pub fn probabilities(&mut self, quota: f64) -> Vec<f64> {
        let t = self.rank_tables();
        let n = t.priority.len();
        let n1 = t.pools[1].len();
        let mut p = vec![0.0; n];
        if (n1 as f64) < quota * n as f64 && n1 > 0 && !t.pools[0].is_empty() {
            for (j, share) in [(0, 1.0 - quota), (1, quota)] {
                let s: f64 = t.pools[j].iter().map(|&i| t.priority[i]).sum();
                for &i in &t.pools[j] {
                    p[i] = share * t.priority[i] / s;
                }
            }
        } else {
            let s: f64 = t.priority.iter().sum();
            for (pi, w) in p.iter_mut().zip(&t.priority) {
                *pi = w / s;
            }
        }
        p
    }

    /// Draws `n` step indices with replacement.
    pub fn bper_sample<R: Rng + ?Sized>(&mut self, n: usize, quota: f64, rng: &mut R) -> Result<(Vec<usize>, SampleInfo)> {
        let total = self.total_steps();
        if total == 0 {
            return Err(Error::Empty("replay buffer"));
        }
        let t = self.rank_tables();
        let (n0, n1) = (t.pools[0].len(), t.pools[1].len());
        let mut info = SampleInfo {
            branch: SampleBranch::Molten,
            n0,
            n1,
            drawn_success: 0,
            reassigned: false,
        };
        let draw = |pool: &[usize], k: usize, rng: &mut R| -> Vec<usize> {
            if k == 0 {
                return Vec::new();
            }
            let w = WeightedIndex::new(pool.iter().map(|&i| t.priority[i])).expect("positive priorities");
            (0..k).map(|_| pool[w.sample(rng)]).collect()
        };
        let mut out;
        if (n1 as f64) < quota * total as f64 {
            info.branch = SampleBranch::Balanced;
            let mut k1 = (quota * n as f64).round() as usize;
            let mut k0 = n - k1;
            if n1 == 0 && k1 > 0 {
                k0 += k1;
                k1 = 0;
                info.reassigned = true;
            }
            if n0 == 0 && k0 > 0 {
                k1 += k0;
                k0 = 0;
                info.reassigned = true;
            }
            out = draw(&t.pools[0], k0, rng);
            out.extend(draw(&t.pools[1], k1, rng));
        } else {
            let all: Vec<usize> = (0..total).collect();
            out = draw(&all, n, rng);
        }
        let levels: Vec<u8> = self.steps().map(|s| s.priority).collect();
        info.drawn_success = out.iter().filter(|&&i| levels[i] == 1).count();
        Ok((out, info))
    }

    /// Training data for the given step indices.
    pub fn gather(&self, indices: &[usize]) -> Batch {
        let steps: Vec<&StepRecord> = self.steps().collect();
        let mut b = Batch::new(OBS_DIM);
        for &i in indices {
            push_step(&mut b, steps[i]);
        }
        b
    }

    /// Every stored step, in insertion order.
    pub fn full_training_set(&self) -> Batch {
        let mut b = Batch::new(OBS_DIM);
        for s in self.steps() {
            push_step(&mut b, s);
        }
        b
    }
}

fn push_step(b: &mut Batch, s: &StepRecord) {
    b.push(&s.obs_norm, s.action, s.error_obs, s.advantage, s.value_target);
}
