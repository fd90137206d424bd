//! Command implementations for the `portsim` binary.
//!
//! Exit codes: 0 success, 1 runtime or I/O failure, 2 unreadable or
//! unparsable scenario (and bad command-line usage), 3 scenario validation
//! failure, 4 oracle reduction failure (cyclic network or path cap).

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use portsim_core::analysis::{
    export_csv, format_sig, mser_warmup, welch_moving_average, AnalysisError, Metric, MSER_BATCH, SIG_DIGITS,
};
use portsim_core::berth::BerthMode;
use portsim_core::oracle::{reduce, OracleError};
use portsim_core::{run_replications, Model, ModelError, RateTarget, Scenario, ScenarioError};

pub const SEED_ENV: &str = "PORTSIM_SEED";
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser)]
#[command(name = "portsim", version, about = "Cargo screening simulation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate a scenario, listing every violation.
    Validate(ScenarioArgs),
    /// Run replications and export per-replication metrics as CSV.
    Run(RunArgs),
    /// Set every detection rate to a common p over a grid and run each point.
    Sweep(SweepArgs),
    /// Print the exact detection curve of the scenario's acyclic reduction.
    Oracle(OracleArgs),
    /// Estimate the warm-up period of the detection-fraction series.
    Warmup(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Scenario file. The shipped `calais-default` is used when omitted.
    #[arg(long, value_name = "PATH")]
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Master seed (falls back to PORTSIM_SEED, then run.seed, then 1).
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    /// Number of replications (defaults to run.replications).
    #[arg(long)]
    pub reps: Option<u64>,
    /// Simulated minutes per replication (defaults to run.horizon).
    #[arg(long, value_name = "MIN")]
    pub horizon: Option<f64>,
    /// Output CSV path.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Let Berth squads check a lorry any number of times.
    #[arg(long, conflicts_with = "check_once")]
    pub recheck: bool,
    /// Let Berth squads check each lorry at most once.
    #[arg(long)]
    pub check_once: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OverrideTarget {
    Tp,
    Fp,
    Both,
}

impl From<OverrideTarget> for RateTarget {
    fn from(t: OverrideTarget) -> Self {
        match t {
            OverrideTarget::Tp => RateTarget::Tp,
            OverrideTarget::Fp => RateTarget::Fp,
            OverrideTarget::Both => RateTarget::Both,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[arg(long, default_value_t = 0.0)]
    pub p_start: f64,
    #[arg(long, default_value_t = 1.0)]
    pub p_end: f64,
    #[arg(long, default_value_t = 0.1)]
    pub p_step: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Which rates the common p replaces.
    #[arg(long = "override", value_enum, default_value = "tp")]
    pub target: OverrideTarget,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(ScenarioError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("{0}")]
    Usage(String),
    #[error("conservation check failed: {0}")]
    Conservation(String),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Scenario(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Scenario(ScenarioError::Invalid(_)) => 3,
            CliError::Scenario(_) | CliError::Usage(_) => 2,
            CliError::Oracle(_) => 4,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl ScenarioArgs {
    pub fn load(&self) -> Result<Scenario, CliError> {
        Ok(match &self.scenario {
            Some(p) => Scenario::from_path(p)?,
            None => Scenario::calais_default(),
        })
    }
}

impl RunArgs {
    /// The scenario with command-line overrides applied, and the seed.
    fn prepare(&self) -> Result<(Scenario, u64), CliError> {
        let mut s = self.scenario.load()?;
        if let Some(h) = self.horizon {
            if !(h.is_finite() && h >= 0.0) {
                return Err(CliError::Usage(format!("--horizon {h} must be >= 0")));
            }
            s = s.with_horizon(h);
        }
        if self.recheck {
            s = s.with_berth_mode(BerthMode::Recheck);
        } else if self.check_once {
            s = s.with_berth_mode(BerthMode::CheckOnce);
        }
        let seed = self.seed.or(s.run.seed).unwrap_or(DEFAULT_SEED);
        Ok((s, seed))
    }

    fn reps(&self, model: &Model) -> Result<u64, CliError> {
        let n = self.reps.unwrap_or(u64::from(model.run.replications));
        if n == 0 {
            return Err(CliError::Usage("--reps must be >= 1".into()));
        }
        Ok(n)
    }
}

/// Grid points `start + i * step` for `i` in `0..=floor((end - start) / step)`.
pub fn grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(0.0..=1.0).contains(&start) || !(0.0..=1.0).contains(&end) || start > end {
        return Err(CliError::Usage(format!(
            "grid needs 0 <= p-start <= p-end <= 1, got {start}..{end}"
        )));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(CliError::Usage(format!("--p-step {step} must be > 0")));
    }
    // tolerance so that 0..1 step 0.1 yields 11 points despite rounding
    let n = ((end - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n)
        .map(|i| {
            let p = start + i as f64 * step;
            ((p * 1e12).round() / 1e12).min(1.0)
        })
        .collect())
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let mut text = String::new();
    match &cli.command {
        Command::Validate(a) => validate(a, &mut text)?,
        Command::Run(a) => run(a, &mut text)?,
        Command::Sweep(a) => sweep(a, &mut text)?,
        Command::Oracle(a) => oracle(a, &mut text)?,
        Command::Warmup(a) => warmup(a, &mut text)?,
    }
    out.write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>")))
}

fn validate(a: &ScenarioArgs, out: &mut String) -> Result<(), CliError> {
    let model = a.load()?.validate()?;
    let g = &model.graph;
    writeln!(
        out,
        "valid: {} ({} nodes, {} sheds, hash {})",
        display_name(&model),
        g.nodes.len(),
        g.shed_indices().count(),
        model.hash
    )
    .ok();
    Ok(())
}

fn display_name(model: &Model) -> &str {
    if model.scenario.name.is_empty() {
        "unnamed scenario"
    } else {
        &model.scenario.name
    }
}

fn run(a: &RunArgs, out: &mut String) -> Result<(), CliError> {
    let (scenario, seed) = a.prepare()?;
    let model = scenario.validate()?;
    let reps = a.reps(&model)?;
    let set = run_replications(&model, reps, seed)?;
    for rc in &set.replications {
        if let Err(e) = rc.check_conservation() {
            return Err(CliError::Conservation(format!("replication {}: {e}", rc.replication)));
        }
    }
    let path = a.out.clone().unwrap_or_else(|| PathBuf::from("run.csv"));
    export_csv(&set, &Metric::ALL, model.run.confidence, &path)?;

    writeln!(
        out,
        "scenario {} hash {} seed {} reps {} horizon {}",
        display_name(&model),
        set.scenario_hash,
        seed,
        reps,
        model.run.horizon
    )
    .ok();
    writeln!(
        out,
        "{:<22} {:>5} {:>18} {:>18} {:>18}",
        "metric", "n", "mean", "sd", "ci95_half_width"
    )
    .ok();
    for m in Metric::ALL {
        let s = set.summarize(m, model.run.confidence);
        writeln!(
            out,
            "{:<22} {:>5} {:>18} {:>18} {:>18}",
            m.name(),
            s.n,
            format_sig((s.n > 0).then_some(s.mean), SIG_DIGITS),
            format_sig((s.n > 1).then_some(s.sd), SIG_DIGITS),
            format_sig(s.ci_half_width, SIG_DIGITS),
        )
        .ok();
    }
    writeln!(out, "wrote {}", path.display()).ok();
    Ok(())
}

/// One row of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub p: f64,
    pub mean: Option<f64>,
    pub ci95: Option<f64>,
    pub oracle_d: Option<f64>,
}

/// Runs the sweep experiment and returns its rows. The same master seed is
/// used at every grid point.
pub fn sweep_rows(a: &SweepArgs) -> Result<Vec<SweepRow>, CliError> {
    let (scenario, seed) = a.run.prepare()?;
    // validate once up front so a broken file fails before any simulation
    let base = scenario.validate()?;
    let reps = a.run.reps(&base)?;
    let target = RateTarget::from(a.target);
    let mut rows = Vec::new();
    for p in grid(a.grid.p_start, a.grid.p_end, a.grid.p_step)? {
        let model = scenario.with_common_rate(p, target).validate()?;
        let set = run_replications(&model, reps, seed)?;
        for rc in &set.replications {
            if let Err(e) = rc.check_conservation() {
                return Err(CliError::Conservation(format!(
                    "p={p} replication {}: {e}",
                    rc.replication
                )));
            }
        }
        let s = set.summarize(Metric::DetectionFraction, model.run.confidence);
        let oracle_d = reduce(&model).and_then(|r| r.detection()).ok();
        rows.push(SweepRow {
            p,
            mean: (s.n > 0).then_some(s.mean),
            ci95: s.ci_half_width,
            oracle_d,
        });
    }
    Ok(rows)
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e.into(),
    })?;
    let csv_err = |e: csv::Error| CliError::Io {
        path: path.display().to_string(),
        source: e.into(),
    };
    w.write_record(["p", "mean", "ci95", "oracle_d"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            format_sig(Some(r.p), SIG_DIGITS),
            format_sig(r.mean, SIG_DIGITS),
            format_sig(r.ci95, SIG_DIGITS),
            format_sig(r.oracle_d, SIG_DIGITS),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

fn sweep(a: &SweepArgs, out: &mut String) -> Result<(), CliError> {
    let rows = sweep_rows(a)?;
    let path = a.run.out.clone().unwrap_or_else(|| PathBuf::from("sweep.csv"));
    write_sweep_csv(&rows, &path)?;
    writeln!(out, "{:>6} {:>14} {:>14} {:>14}", "p", "mean", "ci95", "oracle_d").ok();
    for r in &rows {
        writeln!(
            out,
            "{:>6.3} {:>14} {:>14} {:>14}",
            r.p,
            fmt_opt(r.mean),
            fmt_opt(r.ci95),
            fmt_opt(r.oracle_d)
        )
        .ok();
    }
    writeln!(out, "wrote {}", path.display()).ok();
    Ok(())
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn oracle(a: &OracleArgs, out: &mut String) -> Result<(), CliError> {
    let model = a.scenario.load()?.validate()?;
    let reduced = reduce(&model)?;
    let p = grid(a.grid.p_start, a.grid.p_end, a.grid.p_step)?;
    let v = reduced.concavity_check(&p)?;
    writeln!(out, "{:>6} {:>14}", "p", "D(p)").ok();
    for (p, d) in v.p.iter().zip(&v.d) {
        writeln!(out, "{p:>6.3} {d:>14.10}").ok();
    }
    writeln!(out, "monotone: {}", yes_no(v.monotone)).ok();
    writeln!(out, "concave: {}", yes_no(v.concave)).ok();
    let above = v.above_diagonal.map_or("n/a", yes_no);
    writeln!(out, "above_diagonal: {above}").ok();
    writeln!(out, "min_stages_per_path: {}", reduced.min_stages_per_path()?).ok();
    Ok(())
}

fn warmup(a: &RunArgs, out: &mut String) -> Result<(), CliError> {
    let (scenario, seed) = a.prepare()?;
    let model = scenario.validate()?;
    let reps = a.reps(&model)?;
    let set = run_replications(&model, reps, seed)?;
    let series = set.pooled_detection_series();
    let smooth = welch_moving_average(&series, MSER_BATCH);
    if let Some(path) = &a.out {
        let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io {
            path: path.display().to_string(),
            source: e.into(),
        })?;
        let csv_err = |e: csv::Error| CliError::Io {
            path: path.display().to_string(),
            source: e.into(),
        };
        w.write_record(["window", "detection_fraction", "moving_average"])
            .map_err(csv_err)?;
        for (i, (x, m)) in series.iter().zip(&smooth).enumerate() {
            w.write_record([
                i.to_string(),
                format_sig(Some(*x), SIG_DIGITS),
                format_sig(Some(*m), SIG_DIGITS),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(io_err(path))?;
    }
    writeln!(out, "windows: {}", series.len()).ok();
    match mser_warmup(&series, MSER_BATCH) {
        Ok(m) => {
            writeln!(out, "warmup_index: {}", m.index).ok();
            writeln!(out, "warmup_batches: {}", m.batches).ok();
            writeln!(out, "capped: {}", yes_no(m.capped)).ok();
        }
        Err(e) => {
            writeln!(out, "warmup_index: NA ({e})").ok();
        }
    }
    Ok(())
}
