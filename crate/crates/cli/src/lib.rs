//! Command-line front end for the detectability experiments.

pub mod config;
pub mod output;
pub mod run;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use config::{ConfigError, ExperimentConfig, ExperimentKind};
use output::Artifact;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_INVARIANT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "spikedet", version, about = "Detectability thresholds and Monte-Carlo checks for spiked tensors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Hölder and η_max conditions (and μ_max for d = 2).
    Threshold(RunArgs),
    /// (η, log det) cloud with its upper envelope and the bound curve.
    Cloud(RunArgs),
    /// Second moment E[exp(2nη)].
    Moment(RunArgs),
    /// E₁/E₂ split of the second moment at ε.
    Split(RunArgs),
    /// Tail of the first coordinate of a uniform sphere vector.
    XiTail(RunArgs),
    /// Empirical ROC of the Monte-Carlo likelihood-ratio test.
    Roc(RunArgs),
}

impl Command {
    fn parts(&self) -> (ExperimentKind, &RunArgs) {
        match self {
            Command::Threshold(a) => (ExperimentKind::Threshold, a),
            Command::Cloud(a) => (ExperimentKind::Cloud, a),
            Command::Moment(a) => (ExperimentKind::Moment, a),
            Command::Split(a) => (ExperimentKind::Split, a),
            Command::XiTail(a) => (ExperimentKind::XiTail, a),
            Command::Roc(a) => (ExperimentKind::Roc, a),
        }
    }
}

/// Flags override values from `--config`.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// key = value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub samples: Option<String>,
    /// One or more dimensions, comma separated.
    #[arg(long)]
    pub n: Option<String>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// csv or json.
    #[arg(long)]
    pub format: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Embed wall-clock duration in the outputs (breaks byte reproducibility).
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub d: Option<String>,
    /// Comma-separated amplitudes.
    #[arg(long)]
    pub lambdas: Option<String>,
    /// Gram preset or literal matrix for all modes.
    #[arg(long)]
    pub gram: Option<String>,
    #[arg(long)]
    pub epsilon: Option<String>,
    #[arg(long)]
    pub bins: Option<String>,
    #[arg(long)]
    pub inner: Option<String>,
    #[arg(long)]
    pub outer: Option<String>,
    #[arg(long)]
    pub trials: Option<String>,
    /// Comma-separated tail thresholds for xi-tail.
    #[arg(long)]
    pub t: Option<String>,
    /// haar or direct (moment).
    #[arg(long)]
    pub method: Option<String>,
    /// haar or fixed (moment --method direct).
    #[arg(long)]
    pub prior: Option<String>,
    /// Allow zero amplitudes.
    #[arg(long)]
    pub relaxed: bool,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut o = Vec::new();
        let fields: [(&'static str, &Option<String>); 15] = [
            ("seed", &self.seed),
            ("samples", &self.samples),
            ("n", &self.n),
            ("format", &self.format),
            ("d", &self.d),
            ("lambdas", &self.lambdas),
            ("gram", &self.gram),
            ("epsilon", &self.epsilon),
            ("bins", &self.bins),
            ("inner", &self.inner),
            ("outer", &self.outer),
            ("trials", &self.trials),
            ("t", &self.t),
            ("method", &self.method),
            ("prior", &self.prior),
        ];
        for (k, v) in fields {
            if let Some(v) = v {
                o.push((k, v.clone()));
            }
        }
        if self.relaxed {
            o.push(("relaxed", "true".into()));
        }
        o
    }
}

/// Resolves the configuration: file values, then flags, then the subcommand.
pub fn resolve_config(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| ConfigError::new("--config", format!("{}: {e}", path.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    for (k, v) in args.overrides() {
        cfg.set(k, &v).map_err(|e| ConfigError { field: format!("--{}", e.field), ..e })?;
    }
    cfg.experiment = Some(kind);
    Ok(cfg)
}

pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    for a in artifacts {
        fs::write(dir.join(&a.name), &a.contents)?;
    }
    Ok(())
}

/// Runs a parsed command line and returns the process exit code.
pub fn execute(cli: &Cli) -> i32 {
    let (kind, args) = cli.command.parts();
    if let Some(t) = args.threads {
        if t == 0 {
            eprintln!("error: --threads must be positive");
            return EXIT_CONFIG;
        }
        // Fails only if a pool already exists, e.g. in tests.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let cfg = match resolve_config(kind, args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let out = match run::run(&cfg, args.timing) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Err(e) = write_artifacts(&args.out, &out.artifacts) {
        eprintln!("error: writing to {}: {e}", args.out.display());
        return EXIT_CONFIG;
    }
    for a in &out.artifacts {
        eprintln!("wrote {}", args.out.join(&a.name).display());
    }
    eprintln!("duration_seconds = {:.3}", out.duration_seconds);
    if out.violations.is_empty() {
        EXIT_OK
    } else {
        for v in &out.violations {
            eprintln!("invariant violated: {v}");
        }
        EXIT_INVARIANT
    }
}
