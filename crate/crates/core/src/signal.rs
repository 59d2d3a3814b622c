//! Double-step command generation, the reference model and period tagging.

use std::io::Write;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Episode timing and the layout of the double-step commands.
///
/// Each step is a pulse: it rises at an onset drawn from its window, holds
/// for `step_duration` steps and returns to zero, giving four transitions.
/// The second onset is never drawn closer than `transition_steps` after the
/// first pulse ends, so the four transition windows never overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    pub steps: usize,
    /// s
    pub dt: f64,
    pub transition_steps: usize,
    pub first_onset: [usize; 2],
    pub second_onset: [usize; 2],
    pub step_duration: usize,
    /// g
    pub test_amplitudes: [f64; 2],
    pub test_onsets: [usize; 2],
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            steps: 5000,
            dt: 1e-3,
            transition_steps: 600,
            first_onset: [200, 1000],
            second_onset: [2200, 3000],
            step_duration: 1000,
            test_amplitudes: [-10.0, 10.0],
            test_onsets: [500, 2500],
        }
    }
}

impl SignalConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("episode: {m}")));
        if !(self.dt > 0.0) {
            return bad("dt must be > 0");
        }
        if self.first_onset[0] > self.first_onset[1] || self.second_onset[0] > self.second_onset[1] {
            return bad("onset windows must be ordered [lo, hi]");
        }
        if self.step_duration <= self.transition_steps {
            return bad("step_duration must exceed transition_steps so each plateau has a resting part");
        }
        if self.first_onset[1] + self.step_duration + self.transition_steps > self.second_onset[1] {
            return bad("second onset window cannot clear the first pulse's transition window");
        }
        let last_end = self.second_onset[1].max(self.test_onsets[1]) + self.step_duration + self.transition_steps;
        if last_end > self.steps {
            return bad("second pulse's return transition must fit inside the episode");
        }
        if self.test_onsets[0] + self.step_duration + self.transition_steps > self.test_onsets[1] {
            return bad("test onsets overlap");
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.steps as f64 * self.dt
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandSignal {
    /// a_z command in g, one sample per step.
    pub samples: Vec<f64>,
    /// Step indices of the four transitions.
    pub rise_times: Vec<usize>,
    /// (first, second) step amplitude in g.
    pub amplitudes: (f64, f64),
}

impl CommandSignal {
    /// Two pulses `0 → a1 → 0 → a2 → 0`.
    pub fn double_step(steps: usize, onsets: [usize; 2], duration: usize, amplitudes: (f64, f64)) -> Self {
        let rise_times = vec![onsets[0], onsets[0] + duration, onsets[1], onsets[1] + duration];
        let mut samples = vec![0.0; steps];
        for (t, s) in samples.iter_mut().enumerate() {
            if (rise_times[0]..rise_times[1]).contains(&t) {
                *s = amplitudes.0;
            } else if (rise_times[2]..rise_times[3]).contains(&t) {
                *s = amplitudes.1;
            }
        }
        Self {
            samples,
            rise_times,
            amplitudes,
        }
    }

    /// The deterministic −10 g / +10 g test signal (amplitudes from config).
    pub fn test_signal(cfg: &SignalConfig) -> Self {
        let [a, b] = cfg.test_amplitudes;
        Self::double_step(cfg.steps, cfg.test_onsets, cfg.step_duration, (a, b))
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Command level before and after each transition.
    pub fn transition_levels(&self) -> [(f64, f64); 4] {
        let (a1, a2) = self.amplitudes;
        [(0.0, a1), (a1, 0.0), (0.0, a2), (a2, 0.0)]
    }

    /// Same timing, new amplitudes.
    pub fn with_amplitudes(&self, amplitudes: (f64, f64)) -> Self {
        let onsets = [self.rise_times[0], self.rise_times[2]];
        let duration = self.rise_times[1] - self.rise_times[0];
        Self::double_step(self.samples.len(), onsets, duration, amplitudes)
    }
}

/// Random double step: amplitudes uniform in `[−cap, cap]`, onsets uniform in
/// their windows. A zero cap yields the all-zero signal with the test
/// signal's transition indices.
pub fn generate_command(seed: u64, amplitude_cap: f64, cfg: &SignalConfig) -> CommandSignal {
    let cap = amplitude_cap.max(0.0);
    if cap == 0.0 {
        return CommandSignal::double_step(cfg.steps, cfg.test_onsets, cfg.step_duration, (0.0, 0.0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let on1 = rng.random_range(cfg.first_onset[0]..=cfg.first_onset[1]);
    let earliest = cfg.second_onset[0].max(on1 + cfg.step_duration + cfg.transition_steps);
    let on2 = rng.random_range(earliest..=cfg.second_onset[1]);
    let a1 = rng.random_range(-cap..=cap);
    let a2 = rng.random_range(-cap..=cap);
    CommandSignal::double_step(cfg.steps, [on1, on2], cfg.step_duration, (a1, a2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceModelConfig {
    /// rad/s
    pub natural_frequency: f64,
    pub damping: f64,
}

impl Default for ReferenceModelConfig {
    fn default() -> Self {
        Self {
            natural_frequency: 10.0,
            damping: 0.7,
        }
    }
}

impl ReferenceModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.natural_frequency > 0.0) {
            return Err(Error::Config("reference.natural_frequency must be > 0".into()));
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::Config("reference.damping must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Second-order low-pass with unity DC gain, zero initial conditions and a
/// zero-order hold on the input: `shaped[t]` is the filter output at `t·dt`.
pub fn shape(command: &[f64], cfg: &ReferenceModelConfig, dt: f64) -> Vec<f64> {
    let wn = cfg.natural_frequency;
    let z = cfg.damping;
    let mut y = 0.0;
    let mut v = 0.0;
    let mut out = Vec::with_capacity(command.len());
    for &u in command {
        out.push(y);
        let f = |y: f64, v: f64| (v, wn * wn * (u - y) - 2.0 * z * wn * v);
        let k1 = f(y, v);
        let k2 = f(y + 0.5 * dt * k1.0, v + 0.5 * dt * k1.1);
        let k3 = f(y + 0.5 * dt * k2.0, v + 0.5 * dt * k2.1);
        let k4 = f(y + dt * k3.0, v + dt * k3.1);
        y += dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        v += dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    }
    out
}

/// 5 % settling index of a step response: first index after which the
/// response stays within ±5 % of `target`. `None` if it never settles.
pub fn settling_index(response: &[f64], target: f64) -> Option<usize> {
    let band = 0.05 * target.abs();
    let last_out = response.iter().rposition(|y| (y - target).abs() > band);
    match last_out {
        None => Some(0),
        Some(i) if i + 1 < response.len() => Some(i + 1),
        Some(_) => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Period {
    Transition,
    Resting,
}

impl Period {
    pub fn as_str(self) -> &'static str {
        match self {
            Period::Transition => "transition",
            Period::Resting => "resting",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodMask {
    pub tags: Vec<Period>,
}

impl PeriodMask {
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn count(&self, period: Period) -> usize {
        self.tags.iter().filter(|&&p| p == period).count()
    }

    /// Maximal runs of identical tags, in order.
    pub fn windows(&self) -> Vec<(Period, Range<usize>)> {
        let mut out: Vec<(Period, Range<usize>)> = Vec::new();
        for (i, &p) in self.tags.iter().enumerate() {
            match out.last_mut() {
                Some((q, r)) if *q == p => r.end = i + 1,
                _ => out.push((p, i..i + 1)),
            }
        }
        out
    }

    /// The resting run that directly follows the transition window opened at
    /// `rise`, if any.
    pub fn resting_after(&self, rise: usize) -> Option<Range<usize>> {
        let windows = self.windows();
        let idx = windows.iter().position(|(_, r)| r.contains(&rise))?;
        windows
            .get(idx + 1)
            .filter(|(p, _)| *p == Period::Resting)
            .map(|(_, r)| r.clone())
    }
}

/// Tags the `window` steps after each of the four rise times as transition
/// (overlaps merge, windows truncate at the episode end), the rest resting.
pub fn classify_periods(command: &CommandSignal, window: usize) -> Result<PeriodMask> {
    if command.rise_times.len() != 4 {
        return Err(Error::Structure(format!(
            "expected four transitions, found {}",
            command.rise_times.len()
        )));
    }
    let n = command.len();
    let mut tags = vec![Period::Resting; n];
    for &r in &command.rise_times {
        if r >= n {
            return Err(Error::Structure(format!("rise time {r} outside episode of {n} steps")));
        }
        for tag in &mut tags[r..(r + window).min(n)] {
            *tag = Period::Transition;
        }
    }
    Ok(PeriodMask { tags })
}

/// `time,command,shaped` CSV.
pub fn write_signal_csv<W: Write>(mut w: W, command: &[f64], shaped: &[f64], dt: f64) -> Result<()> {
    if command.len() != shaped.len() {
        return Err(Error::LengthMismatch {
            what: "signal csv",
            left: command.len(),
            right: shaped.len(),
        });
    }
    writeln!(w, "time,command,shaped")?;
    for (i, (c, s)) in command.iter().zip(shaped).enumerate() {
        writeln!(w, "{},{},{}", i as f64 * dt, c, s)?;
    }
    Ok(())
}
