//! Versioned text checkpoints.
//!
//! One `key value...` record per line, floats with 17 significant digits so
//! every value round-trips bit-exactly, terminated by an `end` line. Files
//! are written to a temporary sibling and renamed into place.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::env::Normalizer;
use crate::nn::{AdamState, Mlp};
use crate::replay::SerGate;
use crate::train::{Agent, CurriculumState};
use crate::trpo::{Exploration, GaussianPolicy, Learner};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "autopilot-checkpoint";

#[derive(Debug, Error, PartialEq)]
pub enum CheckpointError {
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: String, expected: u32 },
    #[error("config digest mismatch: checkpoint has {found}, config gives {expected}")]
    Digest { expected: String, found: String },
    #[error("checkpoint truncated: {0}")]
    Truncated(String),
    #[error("checkpoint dimension error: {0}")]
    Dimension(String),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

/// An agent plus the digest of the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub digest: String,
    pub agent: Agent,
}

fn floats(out: &mut String, key: &str, xs: &[f64]) {
    let _ = write!(out, "{key} {}", xs.len());
    for x in xs {
        let _ = write!(out, " {x:.16e}");
    }
    out.push('\n');
}

fn scalar(out: &mut String, key: &str, x: f64) {
    let _ = writeln!(out, "{key} {x:.16e}");
}

fn net(out: &mut String, key: &str, net: &Mlp) {
    let dims: Vec<String> = net.dims().iter().map(|d| d.to_string()).collect();
    let _ = writeln!(out, "{key}.dims {}", dims.join(" "));
    floats(out, &format!("{key}.params"), net.params());
}

fn adam(out: &mut String, key: &str, a: &AdamState) {
    let _ = writeln!(out, "{key}.t {}", a.t);
    scalar(out, &format!("{key}.lr"), a.lr);
    floats(out, &format!("{key}.betas_eps"), &[a.beta1, a.beta2, a.eps]);
    floats(out, &format!("{key}.m"), &a.m);
    floats(out, &format!("{key}.v"), &a.v);
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let a = &self.agent;
        let l = &a.learner;
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC} {FORMAT_VERSION}");
        let _ = writeln!(out, "digest {}", self.digest);
        let _ = writeln!(out, "episode {}", a.episode);
        let _ = writeln!(out, "updates {}", a.updates);
        scalar(&mut out, "curriculum.cap", a.curriculum.cap);
        let _ = writeln!(out, "curriculum.since_promotion {}", a.curriculum.episodes_since_promotion);
        scalar(&mut out, "gate.threshold", a.gate.threshold);
        match a.gate.previous_error {
            Some(e) => scalar(&mut out, "gate.previous", e),
            None => out.push_str("gate.previous none\n"),
        }
        scalar(&mut out, "alpha", l.alpha);
        net(&mut out, "policy", &l.policy.net);
        scalar(&mut out, "policy.log_var", l.policy.log_var);
        scalar(&mut out, "policy.action_scale", l.policy.action_scale);
        floats(
            &mut out,
            "policy.exploration",
            &[l.policy.exploration.gain, l.policy.exploration.error_scale],
        );
        net(&mut out, "value", &l.value_net);
        scalar(&mut out, "value.scale", l.value_scale);
        adam(&mut out, "adam.policy", &l.adam_policy);
        adam(&mut out, "adam.value", &l.adam_value);
        let _ = writeln!(out, "normalizer.count {}", a.normalizer.count());
        floats(&mut out, "normalizer.mean", a.normalizer.mean());
        floats(&mut out, "normalizer.m2", a.normalizer.m2());
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CheckpointError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| CheckpointError::Truncated("empty file".into()))?;
        let mut head = header.split_whitespace();
        if head.next() != Some(MAGIC) {
            return Err(CheckpointError::Malformed("not a checkpoint file".into()));
        }
        let version = head.next().unwrap_or("");
        if version != FORMAT_VERSION.to_string() {
            return Err(CheckpointError::Version {
                found: version.to_string(),
                expected: FORMAT_VERSION,
            });
        }
        let mut fields: HashMap<&str, Vec<&str>> = HashMap::new();
        let mut ended = false;
        for line in lines {
            if line == "end" {
                ended = true;
                break;
            }
            let mut parts = line.split_whitespace();
            let Some(key) = parts.next() else { continue };
            fields.insert(key, parts.collect());
        }
        if !ended {
            return Err(CheckpointError::Truncated("missing end marker".into()));
        }
        let r = Reader { fields };

        let policy_net = r.net("policy")?;
        let value_net = r.net("value")?;
        let exploration = r.floats("policy.exploration")?;
        if exploration.len() != 2 {
            return Err(CheckpointError::Dimension("policy.exploration needs 2 values".into()));
        }
        let policy = GaussianPolicy {
            net: policy_net,
            log_var: r.scalar("policy.log_var")?,
            action_scale: r.scalar("policy.action_scale")?,
            exploration: Exploration {
                gain: exploration[0],
                error_scale: exploration[1],
            },
        };
        let adam_policy = r.adam("adam.policy", policy.n_params())?;
        let adam_value = r.adam("adam.value", value_net.params().len())?;
        let mean = r.floats("normalizer.mean")?;
        let m2 = r.floats("normalizer.m2")?;
        let normalizer = Normalizer::from_raw(r.int("normalizer.count")?, mean, m2)
            .map_err(|e| CheckpointError::Dimension(e.to_string()))?;
        if normalizer.dim() != policy.net.n_in() {
            return Err(CheckpointError::Dimension(format!(
                "normalizer has {} features, policy takes {}",
                normalizer.dim(),
                policy.net.n_in()
            )));
        }
        let previous_error = match r.tokens("gate.previous")?.first() {
            Some(&"none") => None,
            _ => Some(r.scalar("gate.previous")?),
        };
        let agent = Agent {
            learner: Learner {
                snapshot: policy.clone(),
                policy,
                value_net,
                value_scale: r.scalar("value.scale")?,
                adam_policy,
                adam_value,
                alpha: r.scalar("alpha")?,
            },
            normalizer,
            curriculum: CurriculumState {
                cap: r.scalar("curriculum.cap")?,
                episodes_since_promotion: r.int("curriculum.since_promotion")?,
            },
            gate: SerGate {
                threshold: r.scalar("gate.threshold")?,
                previous_error,
            },
            episode: r.int("episode")?,
            updates: r.int("updates")?,
        };
        let digest = r.tokens("digest")?.first().copied().unwrap_or("").to_string();
        Ok(Self { digest, agent })
    }

    /// Writes atomically: temporary sibling, then rename.
    pub fn save(&self, path: &Path) -> crate::Result<()> {
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        std::fs::write(&tmp, self.to_text())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Loads and, when `expected_digest` is given, checks the digest.
    pub fn load(path: &Path, expected_digest: Option<&str>) -> crate::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ckpt = Self::from_text(&text)?;
        if let Some(expected) = expected_digest {
            if ckpt.digest != expected {
                return Err(CheckpointError::Digest {
                    expected: expected.to_string(),
                    found: ckpt.digest,
                }
                .into());
            }
        }
        Ok(ckpt)
    }
}

struct Reader<'a> {
    fields: HashMap<&'a str, Vec<&'a str>>,
}

impl Reader<'_> {
    fn tokens(&self, key: &str) -> Result<&[&str], CheckpointError> {
        self.fields
            .get(key)
            .map(|v| v.as_slice())
            .ok_or_else(|| CheckpointError::Truncated(format!("missing `{key}`")))
    }

    fn parse<T: std::str::FromStr>(key: &str, tok: &str) -> Result<T, CheckpointError> {
        tok.parse()
            .map_err(|_| CheckpointError::Malformed(format!("bad value `{tok}` for `{key}`")))
    }

    fn scalar(&self, key: &str) -> Result<f64, CheckpointError> {
        let t = self.tokens(key)?;
        if t.len() != 1 {
            return Err(CheckpointError::Malformed(format!("`{key}` takes one value")));
        }
        Self::parse(key, t[0])
    }

    fn int(&self, key: &str) -> Result<u64, CheckpointError> {
        let t = self.tokens(key)?;
        Self::parse(key, t.first().copied().unwrap_or(""))
    }

    fn floats(&self, key: &str) -> Result<Vec<f64>, CheckpointError> {
        let t = self.tokens(key)?;
        let n: usize = Self::parse(key, t.first().copied().unwrap_or(""))?;
        if t.len() - 1 != n {
            return Err(CheckpointError::Dimension(format!(
                "`{key}` declares {n} values, found {}",
                t.len() - 1
            )));
        }
        t[1..].iter().map(|x| Self::parse(key, x)).collect()
    }

    fn net(&self, key: &str) -> Result<Mlp, CheckpointError> {
        let dims: Vec<usize> = self
            .tokens(&format!("{key}.dims"))?
            .iter()
            .map(|d| Self::parse(key, d))
            .collect::<Result<_, _>>()?;
        let params = self.floats(&format!("{key}.params"))?;
        Mlp::from_params(&dims, params).map_err(|e| CheckpointError::Dimension(format!("{key}: {e}")))
    }

    fn adam(&self, key: &str, n: usize) -> Result<AdamState, CheckpointError> {
        let be = self.floats(&format!("{key}.betas_eps"))?;
        let m = self.floats(&format!("{key}.m"))?;
        let v = self.floats(&format!("{key}.v"))?;
        if be.len() != 3 || m.len() != n || v.len() != n {
            return Err(CheckpointError::Dimension(format!(
                "{key}: moments must match {n} parameters"
            )));
        }
        Ok(AdamState {
            lr: self.scalar(&format!("{key}.lr"))?,
            beta1: be[0],
            beta2: be[1],
            eps: be[2],
            t: self.int(&format!("{key}.t"))?,
            m,
            v,
        })
    }
}
