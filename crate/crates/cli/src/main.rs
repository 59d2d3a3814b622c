//! `autopilot`: train, test, robustify and sweep missile autopilot agents.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use autopilot_core::checkpoint::Checkpoint;
use autopilot_core::config::WorkbenchConfig;
use autopilot_core::dynamics::{NonNominalKind, Perturbation};
use autopilot_core::report::{
    diagnostics_line, format_report, test_line, test_report_header, write_episode_log, write_sweep_csv,
    write_sweep_summary, CsvLog, DIAGNOSTICS_HEADER,
};
use autopilot_core::train::{
    default_grid, robustify, sweep, train, Agent, DiagnosticsRow, TestRow, TrainObserver, TrainRun,
};

#[derive(Parser)]
#[command(name = "autopilot", version, about = "Reinforcement-learning workbench for a missile pitch autopilot")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a nominal agent from scratch.
    Train(TrainArgs),
    /// Deterministic −10 g/+10 g test of a checkpoint.
    Test(TestArgs),
    /// Resume a nominal agent under sampled non-nominalities, once per bound.
    Robustify(RobustifyArgs),
    /// Compare two agents over a grid of fixed non-nominalities.
    Sweep(SweepArgs),
    /// Print a checkpoint's metadata.
    InspectCheckpoint {
        checkpoint: PathBuf,
    },
    /// Print the default configuration as TOML.
    DefaultConfig,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; falls back to $AUTOPILOT_OUTPUT_DIR, then the config.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<WorkbenchConfig> {
        let mut cfg = match &self.config {
            Some(p) => WorkbenchConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
            None => WorkbenchConfig::default(),
        };
        match &self.output_dir {
            Some(d) => cfg.output_dir = d.clone(),
            None => cfg.apply_env_overrides(),
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Episode budget; overrides the config.
    #[arg(long)]
    episodes: Option<u64>,
    /// Run seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PerturbationArgs {
    /// Fixed actuation latency, whole ms.
    #[arg(long)]
    latency_ms: Option<u32>,
    /// Relative Mach estimation error.
    #[arg(long, allow_hyphen_values = true)]
    delta_mach: Option<f64>,
    /// Relative height estimation error.
    #[arg(long, allow_hyphen_values = true)]
    delta_height: Option<f64>,
    /// Relative error on the normal-force coefficient.
    #[arg(long, allow_hyphen_values = true)]
    delta_cz: Option<f64>,
    /// Relative error on the pitching-moment coefficient.
    #[arg(long, allow_hyphen_values = true)]
    delta_cm: Option<f64>,
}

impl PerturbationArgs {
    fn perturbation(&self) -> Result<Perturbation> {
        let estimation = self.delta_mach.is_some() || self.delta_height.is_some();
        let parametric = self.delta_cz.is_some() || self.delta_cm.is_some();
        let families = usize::from(self.latency_ms.is_some()) + usize::from(estimation) + usize::from(parametric);
        if families > 1 {
            bail!("latency, estimation and parametric flags are mutually exclusive");
        }
        Ok(if let Some(ms) = self.latency_ms {
            Perturbation::Latency { ms }
        } else if estimation {
            Perturbation::Estimation {
                delta_mach: self.delta_mach.unwrap_or(0.0),
                delta_height: self.delta_height.unwrap_or(0.0),
            }
        } else if parametric {
            Perturbation::Parametric {
                delta_cz: self.delta_cz.unwrap_or(0.0),
                delta_cm: self.delta_cm.unwrap_or(0.0),
            }
        } else {
            Perturbation::Nominal
        })
    }
}

#[derive(Args)]
struct TestArgs {
    checkpoint: PathBuf,
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    perturbation: PerturbationArgs,
}

#[derive(Args)]
struct RobustifyArgs {
    /// Nominal agent to resume.
    checkpoint: PathBuf,
    #[command(flatten)]
    common: Common,
    /// latency, estimation or parametric; overrides the config.
    #[arg(long)]
    kind: Option<NonNominalKind>,
    /// Candidate bound, repeatable; the standard candidates when omitted.
    #[arg(long = "bound")]
    bounds: Vec<f64>,
}

#[derive(Args)]
struct SweepArgs {
    /// Reference agent (column A).
    a: PathBuf,
    /// Compared agent (column B).
    b: PathBuf,
    #[arg(long)]
    kind: NonNominalKind,
    #[command(flatten)]
    common: Common,
}

fn main() -> std::process::ExitCode {
    match run(Cli::parse()) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Test(a) => cmd_test(a),
        Command::Robustify(a) => cmd_robustify(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::InspectCheckpoint { checkpoint } => cmd_inspect(&checkpoint),
        Command::DefaultConfig => {
            print!("{}", WorkbenchConfig::default().to_toml_string()?);
            Ok(())
        }
    }
}

/// Streams diagnostics and test rows to CSV and keeps `best.ckpt` current.
struct RunFiles {
    dir: PathBuf,
    digest: String,
    diagnostics: CsvLog,
    tests: CsvLog,
}

impl RunFiles {
    fn create(dir: &Path, digest: &str) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            digest: digest.to_string(),
            diagnostics: CsvLog::create(&dir.join("diagnostics.csv"), DIAGNOSTICS_HEADER)?,
            tests: CsvLog::create(&dir.join("test_report.csv"), &test_report_header())?,
        })
    }
}

fn save_agent(dir: &Path, name: &str, digest: &str, agent: &Agent) -> Result<()> {
    let ckpt = Checkpoint {
        digest: digest.to_string(),
        agent: agent.clone(),
    };
    ckpt.save(&dir.join(name))
        .with_context(|| format!("writing {}", dir.join(name).display()))
}

/// `final.ckpt`, plus `best.ckpt` when no intermediate test picked one.
fn finish_run(dir: &Path, digest: &str, run: &TrainRun) -> Result<()> {
    save_agent(dir, "final.ckpt", digest, &run.agent)?;
    if run.best.is_none() {
        save_agent(dir, "best.ckpt", digest, &run.agent)?;
    }
    Ok(())
}

impl TrainObserver for RunFiles {
    fn on_episode(&mut self, row: &DiagnosticsRow) -> autopilot_core::Result<()> {
        self.diagnostics.line(&diagnostics_line(row))
    }

    fn on_test(&mut self, row: &TestRow, agent: &Agent) -> autopilot_core::Result<()> {
        self.tests.line(&test_line(row))?;
        if row.is_best {
            save_agent(&self.dir, "best.ckpt", &self.digest, agent)
                .map_err(|e| autopilot_core::Error::Structure(format!("{e:#}")))?;
        }
        Ok(())
    }
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg = a.common.load()?;
    if let Some(e) = a.episodes {
        cfg.episodes = e;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let dir = cfg.output_dir.clone();
    let mut files = RunFiles::create(&dir, &cfg.digest())?;
    fs::write(dir.join("config.toml"), cfg.to_toml_string()?)?;
    let run = train(&cfg.settings(), &cfg.env(), cfg.episodes, &mut files)?;
    finish_run(&dir, &cfg.digest(), &run)?;
    println!(
        "trained {} episodes, {} intermediate tests, {} aborted updates; artifacts in {}",
        run.agent.episode,
        run.tests.len(),
        run.faults,
        dir.display()
    );
    if let Some(best) = &run.best {
        println!("best agent (episode {}):", best.agent.episode);
        println!("{}", format_report(&best.report, &cfg.thresholds));
    }
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path, None).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn warn_digest(what: &str, found: &str, expected: &str) {
    if found != expected {
        eprintln!("warning: {what} was produced with a different configuration (digest {found}, expected {expected})");
    }
}

fn cmd_test(a: TestArgs) -> Result<()> {
    let cfg = a.common.load()?;
    let ckpt = load_checkpoint(&a.checkpoint)?;
    warn_digest(&a.checkpoint.display().to_string(), &ckpt.digest, &cfg.digest());
    let perturbation = a.perturbation.perturbation()?;
    let env = cfg.env();
    let (traj, report) = env.test(ckpt.agent.policy(), &ckpt.agent.normalizer, &perturbation)?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let log = dir.join("test_episode.csv");
    let mut out = std::io::BufWriter::new(fs::File::create(&log)?);
    write_episode_log(&mut out, &traj, env.episode.signal.dt)?;
    out.flush()?;
    println!("perturbation: {perturbation:?}");
    println!("{}", format_report(&report, &cfg.thresholds));
    println!("episode log: {}", log.display());
    Ok(())
}

fn cmd_robustify(a: RobustifyArgs) -> Result<()> {
    let mut cfg = a.common.load()?;
    if let Some(k) = a.kind {
        cfg.robustify.kind = k;
    }
    if !a.bounds.is_empty() {
        cfg.robustify.bounds = a.bounds.clone();
    }
    if cfg.robustify.kind == NonNominalKind::None {
        bail!("robustify needs a non-nominal kind (latency, estimation or parametric)");
    }
    cfg.validate()?;
    let digest = cfg.digest();
    let nominal = Checkpoint::load(&a.checkpoint, Some(&digest))
        .with_context(|| format!("loading checkpoint {}", a.checkpoint.display()))?;
    let root = cfg.output_dir.clone();
    fs::create_dir_all(&root)?;
    let kind = cfg.robustify.kind;
    let mut dirs = Vec::new();
    let outcomes = robustify(
        &cfg.settings(),
        &cfg.env(),
        &nominal.agent,
        &cfg.robustify,
        &mut |bound| {
            let dir = root.join(format!("{kind}_{bound}"));
            dirs.push(dir.clone());
            let files =
                RunFiles::create(&dir, &digest).map_err(|e| autopilot_core::Error::Structure(format!("{e:#}")))?;
            Ok(Box::new(files))
        },
    )?;
    let mut summary = CsvLog::create(
        &root.join("robustify.csv"),
        "kind,bound,start_value,diverged,episodes,best_passed,best_mean_abs_error",
    )?;
    for (o, dir) in outcomes.iter().zip(&dirs) {
        finish_run(dir, &digest, &o.run)?;
        let (passed, mean) = o
            .run
            .best
            .as_ref()
            .map_or((String::new(), String::new()), |b| {
                (b.report.passed().to_string(), b.report.mean_abs_error.to_string())
            });
        summary.line(&format!(
            "{kind},{},{},{},{},{passed},{mean}",
            o.bound,
            o.start_value,
            u8::from(o.diverged),
            o.run.agent.episode
        ))?;
        println!(
            "{kind} bound {}: {}, start |e_z| {:.4} g, {} episodes",
            o.bound,
            if o.diverged { "diverged, stopped at the screen" } else { "completed" },
            o.start_value,
            o.run.agent.episode
        );
    }
    println!("artifacts in {}", root.display());
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let cfg = a.common.load()?;
    if a.kind == NonNominalKind::None {
        bail!("sweep needs a non-nominal kind (latency, estimation or parametric)");
    }
    let ca = load_checkpoint(&a.a)?;
    let cb = load_checkpoint(&a.b)?;
    warn_digest(&a.b.display().to_string(), &cb.digest, &ca.digest);
    warn_digest(&a.a.display().to_string(), &ca.digest, &cfg.digest());
    let grid = default_grid(a.kind);
    let result = sweep(&cfg.env(), &ca.agent, &cb.agent, a.kind, &grid, cfg.execution)?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let csv = dir.join(format!("sweep_{}.csv", a.kind));
    write_sweep_csv(std::io::BufWriter::new(fs::File::create(&csv)?), &result)?;
    let summary = dir.join(format!("sweep_{}_summary.csv", a.kind));
    write_sweep_summary(std::io::BufWriter::new(fs::File::create(&summary)?), &result)?;
    println!("{} sweep over {} points, success % of B over A:", a.kind, grid.len());
    for (name, rate) in autopilot_core::env::METRIC_NAMES.iter().zip(result.success_rate) {
        println!("  {name:<14} {rate:6.2}");
    }
    println!("wrote {} and {}", csv.display(), summary.display());
    Ok(())
}

fn cmd_inspect(path: &Path) -> Result<()> {
    let ckpt = load_checkpoint(path)?;
    let a = &ckpt.agent;
    let l = &a.learner;
    println!("digest            {}", ckpt.digest);
    println!("episode           {}", a.episode);
    println!("updates           {}", a.updates);
    println!("curriculum cap    {} g", a.curriculum.cap);
    println!("policy dims       {:?}", l.policy.net.dims());
    println!("value dims        {:?}", l.value_net.dims());
    println!("log-variance      {}", l.policy.log_var);
    println!("alpha             {}", l.alpha);
    println!("normalizer count  {}", a.normalizer.count());
    Ok(())
}
