//! Command-line orchestration: argument parsing, config overrides, and
//! committing artifacts with a manifest.

pub mod artifacts;
pub mod pipeline;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::Utc;
use clap::{Args, Parser, Subcommand, ValueEnum};

use critdrift::config::{ExperimentConfig, TEMPLATE};
use critdrift::fieldio;
use critdrift::verify::ToleranceTier;

use artifacts::{check_output_dir, commit, sha256_hex, RunManifest, RunMeta};
use pipeline::Pipeline;

#[derive(Debug, Parser)]
#[command(name = "critdrift", version, about = "Verification pipelines for advection-diffusion with singular drifts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TierArg {
    Analytic,
    Singular,
}

impl From<TierArg> for ToleranceTier {
    fn from(t: TierArg) -> Self {
        match t {
            TierArg::Analytic => ToleranceTier::Analytic,
            TierArg::Singular => ToleranceTier::Singular,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run schedule members, c values and SDE path chunks concurrently.
    #[arg(long)]
    pub parallel: bool,
    #[arg(long, value_enum)]
    pub tolerance_tier: Option<TierArg>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a config template with every default documented.
    Init {
        #[arg(default_value = "critdrift.toml")]
        path: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Orlicz and L^p norms of the initial datum or of a field file.
    Norm {
        #[command(flatten)]
        run: RunArgs,
        /// Scalar field file (.bin or .csv) instead of the configured datum.
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Form-bound certificates over the c sweep.
    Formbound(RunArgs),
    /// Mollified drifts along both schedules, checked against the parent certificate.
    Mollify(RunArgs),
    /// Solve every member of the primary schedule.
    Solve(RunArgs),
    /// Certificate, mollification, solves and the selected inequality checks.
    Verify(RunArgs),
    /// Hitting-probability sweep for the Hardy SDE.
    Sde(RunArgs),
    /// `verify` followed by `sde`.
    All(RunArgs),
}

#[derive(Debug)]
pub struct Outcome {
    pub passed: bool,
    pub manifest: Option<RunManifest>,
    pub output_dir: Option<PathBuf>,
}

fn load_config(run: &RunArgs) -> Result<ExperimentConfig> {
    let path = run.config.as_ref().context("--config is required")?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = run.seed {
        config.seed = seed;
    }
    if let Some(tier) = run.tolerance_tier {
        config.verifier.tier = tier.into();
    }
    if let Some(out) = &run.output {
        config.output_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

/// Digest of the resolved config, independent of the output location.
pub fn config_digest(config: &ExperimentConfig) -> Result<String> {
    let mut c = config.clone();
    c.output_dir = PathBuf::new();
    Ok(sha256_hex(&serde_json::to_vec(&c)?))
}

fn init(path: &Path, force: bool) -> Result<Outcome> {
    if path.exists() && !force {
        bail!("{} exists; pass --force to overwrite", path.display());
    }
    std::fs::write(path, TEMPLATE).with_context(|| format!("writing {}", path.display()))?;
    Ok(Outcome {
        passed: true,
        manifest: None,
        output_dir: None,
    })
}

pub fn run(cli: Cli) -> Result<Outcome> {
    let started = Utc::now();
    let (name, run, field) = match cli.command {
        Command::Init { path, force } => return init(&path, force),
        Command::Norm { run, field } => ("norm", run, field),
        Command::Formbound(r) => ("formbound", r, None),
        Command::Mollify(r) => ("mollify", r, None),
        Command::Solve(r) => ("solve", r, None),
        Command::Verify(r) => ("verify", r, None),
        Command::Sde(r) => ("sde", r, None),
        Command::All(r) => ("all", r, None),
    };

    // A bare field file needs no config; everything else does.
    let config = match (&run.config, &field) {
        (None, Some(_)) => {
            let mut c = ExperimentConfig::from_toml(MINIMAL_NORM_CONFIG)?;
            if let Some(out) = &run.output {
                c.output_dir = out.clone();
            }
            c
        }
        _ => load_config(&run)?,
    };
    let field = field
        .map(|p| fieldio::read_scalar(&p).with_context(|| format!("reading {}", p.display())))
        .transpose()?;
    let out_dir = config.output_dir.clone();
    check_output_dir(&out_dir)?;

    let mut pipeline = Pipeline::new(&config, run.parallel)?;
    let passed = match name {
        "norm" => pipeline.norm(field)?,
        "formbound" => pipeline.formbound()?,
        "mollify" => pipeline.mollify()?,
        "solve" => pipeline.solve()?,
        "verify" => pipeline.verify()?,
        "sde" => pipeline.sde()?,
        "all" => {
            let v = pipeline.verify()?;
            let s = pipeline.sde()?;
            v && s
        }
        _ => unreachable!("subcommand table"),
    };
    let manifest = commit(
        &out_dir,
        pipeline.artifacts,
        RunMeta {
            command: name.into(),
            config_sha256: config_digest(&config)?,
            seed: config.seed,
            parallel: run.parallel,
            started,
            passed,
        },
    )?;
    Ok(Outcome {
        passed,
        manifest: Some(manifest),
        output_dir: Some(out_dir),
    })
}

/// Stand-in config for `norm --field` without `--config`.
const MINIMAL_NORM_CONFIG: &str = r#"
[grid]
dim = 1
n = 8
[drift]
kind = "constant"
vector = [0.0]
[solver]
dt = 1.0
t_final = 1.0
"#;
