//! `trapbrw`: command-line driver. Every subcommand prints CSV (header
//! `experiment,seed,spec_hash,code_version,n,statistic,value,std_error,note`)
//! to stdout or to `--out`. Exit codes: 0 success, 1 failed check or runtime
//! failure, 2 usage or configuration error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use trapbrw::experiments::{self, ExperimentSpec, Output};
use trapbrw::lattice::save_environment;

#[derive(Parser)]
#[command(
    name = "trapbrw",
    version,
    about = "Branching random walks among Bernoulli traps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw an environment; saves it to --env when given
    GenEnv(Common),
    /// Vacant-cluster statistics
    Percolate(Common),
    /// Chemical-to-l1 distance ratios in the proxy cluster
    Psi(Common),
    /// Large and huge clearing scans at time n
    Clearings(Common),
    /// Exact walk survival q_k and growth exponent for k <= n
    DpSurvival(Common),
    /// Model constants and scale parameters
    Constants(Common),
    /// Monte Carlo of the killed branching random walk
    BrwSim(Common),
    /// Pair-ancestry law: exact pmf, enumeration and sampling fit
    QnCheck(Common),
    /// Second-moment machinery for confined counts
    Moments(Common),
    /// Exact and sampled growth exponents on a log grid
    LlnDiagnostic(Common),
    /// Survival frequency over several horizons
    SurvivalStudy(Common),
    /// Accessible-clearing probability against box size
    ClearingStudy(Common),
    /// Full check battery; --out names the report directory
    Verify {
        #[command(flatten)]
        common: Common,
        /// Rewrite the golden files instead of checking
        #[arg(long)]
        bless: bool,
    },
}

/// Flags mirror the config keys (`-` for `_`) and override the config file.
#[derive(Args, Clone, Default)]
struct Common {
    /// Flat key = value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra key=value override, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    d: Option<String>,
    /// Box radius
    #[arg(long = "L")]
    l: Option<String>,
    /// Vacancy probability
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    n_max: Option<String>,
    #[arg(long)]
    replicas: Option<String>,
    /// particle or count
    #[arg(long)]
    mode: Option<String>,
    /// none or survival
    #[arg(long)]
    condition: Option<String>,
    #[arg(long)]
    k2: Option<String>,
    #[arg(long = "A")]
    a: Option<String>,
    #[arg(long)]
    theta: Option<String>,
    #[arg(long)]
    k3: Option<String>,
    /// auto or comma-separated coordinates
    #[arg(long, allow_hyphen_values = true)]
    start: Option<String>,
    /// Ball radius
    #[arg(long)]
    r: Option<String>,
    #[arg(long)]
    pairs: Option<String>,
    #[arg(long)]
    min_separation: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    rho: Option<String>,
    #[arg(long)]
    horizons: Option<String>,
    #[arg(long)]
    mc_max: Option<String>,
    #[arg(long)]
    resolve_at: Option<String>,
    /// exact or absorbing
    #[arg(long)]
    boundary: Option<String>,
    /// Environment file (input; output for gen-env)
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    golden_dir: Option<String>,
    #[arg(long)]
    mem_limit_mb: Option<String>,
    #[arg(long)]
    scale: Option<String>,
    /// Output file, or directory for verify
    #[arg(long)]
    out: Option<String>,
}

impl Common {
    fn overrides(&self, command: &str) -> Result<BTreeMap<String, String>, trapbrw::Error> {
        let mut map = BTreeMap::new();
        map.insert("command".to_string(), command.to_string());
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| {
                trapbrw::Error::Config(format!("--set expects KEY=VALUE, got {kv:?}"))
            })?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let flags = [
            ("d", &self.d),
            ("L", &self.l),
            ("p", &self.p),
            ("seed", &self.seed),
            ("n", &self.n),
            ("n_max", &self.n_max),
            ("replicas", &self.replicas),
            ("mode", &self.mode),
            ("condition", &self.condition),
            ("k2", &self.k2),
            ("A", &self.a),
            ("theta", &self.theta),
            ("k3", &self.k3),
            ("start", &self.start),
            ("r", &self.r),
            ("pairs", &self.pairs),
            ("min_separation", &self.min_separation),
            ("samples", &self.samples),
            ("rho", &self.rho),
            ("horizons", &self.horizons),
            ("mc_max", &self.mc_max),
            ("resolve_at", &self.resolve_at),
            ("boundary", &self.boundary),
            ("env", &self.env),
            ("golden_dir", &self.golden_dir),
            ("mem_limit_mb", &self.mem_limit_mb),
            ("scale", &self.scale),
            ("out", &self.out),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                map.insert(k.to_string(), v.clone());
            }
        }
        Ok(map)
    }

    fn spec(&self, command: &str) -> Result<ExperimentSpec, trapbrw::Error> {
        ExperimentSpec::load(self.config.as_deref(), &self.overrides(command)?)
    }
}

/// Errors caused by the inputs rather than by the computation.
fn is_usage_error(err: &anyhow::Error) -> bool {
    use trapbrw::Error as E;
    matches!(
        err.downcast_ref::<E>(),
        Some(
            E::Config(_)
                | E::OutOfBounds { .. }
                | E::BoxTooSmall { .. }
                | E::StartIsTrap(_)
                | E::Constraint(_)
                | E::HorizonCap { .. }
                | E::Empty(_)
                | E::Format { .. }
                | E::Io(_)
        )
    )
}

fn emit(spec: &ExperimentSpec, output: &Output) -> Result<bool> {
    for w in &output.warnings {
        eprintln!("warning: {w}");
    }
    let text = experiments::render_rows(spec, &output.rows);
    match &spec.out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    for f in &output.failures {
        eprintln!("check failed: {f}");
    }
    Ok(output.failures.is_empty())
}

fn verify(spec: &ExperimentSpec, bless: bool) -> Result<bool> {
    if bless {
        experiments::bless_goldens(&spec.golden_dir)?;
        eprintln!("golden files written to {}", spec.golden_dir.display());
        return Ok(true);
    }
    let report = experiments::run_verify_suite(spec);
    let dir = spec
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("verify_out"));
    experiments::write_verify_outputs(spec, &report, &dir)?;
    for c in &report.checks {
        println!(
            "{} {} {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    println!("report written to {}", dir.join("report.csv").display());
    Ok(report.all_passed())
}

fn run(command: Command) -> Result<bool> {
    let (name, common) = match &command {
        Command::GenEnv(c) => ("gen-env", c),
        Command::Percolate(c) => ("percolate", c),
        Command::Psi(c) => ("psi", c),
        Command::Clearings(c) => ("clearings", c),
        Command::DpSurvival(c) => ("dp-survival", c),
        Command::Constants(c) => ("constants", c),
        Command::BrwSim(c) => ("brw-sim", c),
        Command::QnCheck(c) => ("qn-check", c),
        Command::Moments(c) => ("moments", c),
        Command::LlnDiagnostic(c) => ("lln-diagnostic", c),
        Command::SurvivalStudy(c) => ("survival-study", c),
        Command::ClearingStudy(c) => ("clearing-study", c),
        Command::Verify { common, .. } => ("verify", common),
    };
    let spec = common.spec(name)?;
    let output = match command {
        Command::GenEnv(_) => {
            let target = spec.env.clone();
            let generate = ExperimentSpec {
                env: None,
                ..spec.clone()
            };
            let (field, out) = experiments::run_gen_env(&generate)?;
            if let Some(path) = target {
                save_environment(&field, Path::new(&path))?;
            }
            out
        }
        Command::Percolate(_) => experiments::run_percolate(&spec)?,
        Command::Psi(_) => experiments::run_psi(&spec)?,
        Command::Clearings(_) => experiments::run_clearings(&spec)?,
        Command::DpSurvival(_) => experiments::run_dp_survival(&spec)?,
        Command::Constants(_) => experiments::run_constants(&spec)?,
        Command::BrwSim(_) => experiments::run_brw_sim(&spec)?,
        Command::QnCheck(_) => experiments::run_qn_check(&spec)?,
        Command::Moments(_) => experiments::run_moments(&spec)?,
        Command::LlnDiagnostic(_) => experiments::run_lln_diagnostic(&spec)?,
        Command::SurvivalStudy(_) => experiments::run_survival_study(&spec)?,
        Command::ClearingStudy(_) => experiments::run_clearing_study(&spec)?,
        Command::Verify { bless, .. } => return verify(&spec, bless),
    };
    emit(&spec, &output)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(if is_usage_error(&err) { 2 } else { 1 })
        }
    }
}
