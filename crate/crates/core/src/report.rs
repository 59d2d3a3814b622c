//! CSV and line-log output with fixed headers.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::env::{PerformanceReport, Trajectory, METRIC_NAMES};
use crate::error::Result;
use crate::train::{DiagnosticsRow, SweepResult, TestRow};

pub const DIAGNOSTICS_HEADER: &str = "episode,cap,perturbation,perturbation_a,perturbation_b,mean_abs_error,\
total_reward,diverged,gate_open,her_episodes,n0,n1,branch,training_set,l1,l2,policy_loss,value_loss,alpha,\
log_var,update_aborted";

pub const REPORT_COLUMNS: &str = "max_resting_error,overshoot,max_actuation,noise_resting,noise_transition,\
mean_abs_error,pass_resting_error,pass_overshoot,pass_actuation,pass_noise_resting,pass_noise_transition,\
passed,diverged";

pub const EPISODE_LOG_HEADER: &str = "t,reference,accel,error,eta_cmd,eta,reward,period,synthetic";

pub fn test_report_header() -> String {
    format!("episode,cap,{REPORT_COLUMNS},is_best,promoted")
}

pub fn sweep_header() -> String {
    format!("value,agent,{REPORT_COLUMNS}")
}

pub const SWEEP_SUMMARY_HEADER: &str = "metric,success_pct";

pub fn report_fields(r: &PerformanceReport) -> String {
    let v = r.values();
    let p = r.pass.map(u8::from);
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        v[0],
        v[1],
        v[2],
        v[3],
        v[4],
        r.mean_abs_error,
        p[0],
        p[1],
        p[2],
        p[3],
        p[4],
        r.passed(),
        u8::from(r.diverged)
    )
}

pub fn diagnostics_line(d: &DiagnosticsRow) -> String {
    let u = &d.update;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        d.episode,
        d.cap,
        d.perturbation.kind(),
        d.perturbation.primary_value(),
        d.perturbation.secondary_value(),
        d.mean_abs_error,
        d.total_reward,
        u8::from(d.diverged),
        u8::from(d.gate_open),
        d.her_episodes,
        d.n0,
        d.n1,
        d.branch.map_or("full", |b| b.as_str()),
        d.training_set,
        u.l1,
        u.l2,
        u.policy_loss,
        u.value_loss,
        u.alpha,
        d.log_var,
        u8::from(u.aborted)
    )
}

pub fn test_line(t: &TestRow) -> String {
    format!(
        "{},{},{},{},{}",
        t.episode,
        t.cap,
        report_fields(&t.report),
        u8::from(t.is_best),
        u8::from(t.promoted)
    )
}

/// A CSV file created fresh with its header, then only appended to.
pub struct CsvLog {
    out: BufWriter<File>,
}

impl CsvLog {
    pub fn create(path: &Path, header: &str) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{header}")?;
        out.flush()?;
        Ok(Self { out })
    }

    /// Appends to an existing log, writing the header only if the file is new.
    pub fn append(path: &Path, header: &str) -> Result<Self> {
        let fresh = !path.exists();
        let mut out = BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?);
        if fresh {
            writeln!(out, "{header}")?;
        }
        Ok(Self { out })
    }

    pub fn line(&mut self, line: &str) -> Result<()> {
        writeln!(self.out, "{line}")?;
        self.out.flush()?;
        Ok(())
    }
}

/// One step per line.
pub fn write_episode_log<W: Write>(mut w: W, traj: &Trajectory, dt: f64) -> Result<()> {
    writeln!(w, "{EPISODE_LOG_HEADER}")?;
    for (t, s) in traj.steps.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            t as f64 * dt,
            s.reference,
            s.accel,
            s.error,
            s.eta_cmd,
            s.eta,
            s.reward,
            s.period.as_str(),
            u8::from(traj.synthetic)
        )?;
    }
    Ok(())
}

/// Per grid point, one row per agent.
pub fn write_sweep_csv<W: Write>(mut w: W, s: &SweepResult) -> Result<()> {
    writeln!(w, "{}", sweep_header())?;
    for (i, v) in s.grid.iter().enumerate() {
        writeln!(w, "{v},a,{}", report_fields(&s.reports_a[i]))?;
        writeln!(w, "{v},b,{}", report_fields(&s.reports_b[i]))?;
    }
    Ok(())
}

/// One row per performance metric with the success rate of agent B.
pub fn write_sweep_summary<W: Write>(mut w: W, s: &SweepResult) -> Result<()> {
    writeln!(w, "{SWEEP_SUMMARY_HEADER}")?;
    for (name, rate) in METRIC_NAMES.iter().zip(s.success_rate) {
        writeln!(w, "{name},{rate:.2}")?;
    }
    Ok(())
}

/// Human-readable comparison against the objectives.
pub fn format_report(r: &PerformanceReport, th: &crate::env::Thresholds) -> String {
    let limits = [
        th.max_resting_error,
        th.overshoot,
        th.max_actuation,
        th.noise_resting,
        th.noise_transition,
    ];
    let units = ["g", "%", "rad", "rad", "rad"];
    let mut s = format!("{:<14} {:>12} {:>10} {:<4} {}\n", "metric", "value", "limit", "unit", "pass");
    for i in 0..5 {
        s.push_str(&format!(
            "{:<14} {:>12.6} {:>10.4} {:<4} {}\n",
            METRIC_NAMES[i],
            r.values()[i],
            limits[i],
            units[i],
            if r.pass[i] { "yes" } else { "no" }
        ));
    }
    s.push_str(&format!("mean |e_z| {:.6} g, passed {}/5", r.mean_abs_error, r.passed()));
    if r.diverged {
        s.push_str(", diverged");
    }
    s
}
