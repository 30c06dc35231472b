mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use commands::{CliError, Context};
use config::{ExperimentConfig, RawConfig};

/// Helmholtz Neumann-to-Dirichlet maps and monotonicity-based scatterer detection.
#[derive(Parser, Debug)]
#[command(name = "helm-mono", version)]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true, env = "HELM_MONO_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment configuration (`section.key = value` per line).
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Output directory; overrides `output.dir`.
    #[arg(short, long)]
    out: Option<PathBuf>,

    /// Extra `key=value` assignments applied after the config file.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Also write the assembled sparse matrices as CSV triplets.
    #[arg(long)]
    dump_matrices: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the triangulation.
    Mesh(Common),
    /// Largest Neumann eigenvalues of Δ + k²q.
    Eigs(Common),
    /// d(q) by inertia and by the K-pencil.
    Dq(Common),
    /// Scan k and bracket discrete resonances.
    ResonanceScan(Common),
    /// Neumann-to-Dirichlet matrix Λ(q).
    Ntd(Common),
    /// Quadratic identity between two coefficients (`q` and `q2`).
    IdentityCheck(Common),
    /// Test Λ(q) ≤_d(q2) Λ(q2).
    MonotonicityCheck(Common),
    /// Localized potential for the box `localize.b` against `localize.d`.
    Localize(Common),
    /// Pixelwise inclusion test.
    Reconstruct(Common),
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::Mesh(c) => ("mesh", c),
            Command::Eigs(c) => ("eigs", c),
            Command::Dq(c) => ("dq", c),
            Command::ResonanceScan(c) => ("resonance-scan", c),
            Command::Ntd(c) => ("ntd", c),
            Command::IdentityCheck(c) => ("identity-check", c),
            Command::MonotonicityCheck(c) => ("monotonicity-check", c),
            Command::Localize(c) => ("localize", c),
            Command::Reconstruct(c) => ("reconstruct", c),
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let (name, common) = cli.command.parts();
    let mut raw = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            RawConfig::parse(&text)?
        }
        None => RawConfig::default(),
    };
    raw.apply_overrides(&common.overrides)?;
    let cfg = ExperimentConfig::from_raw(&raw)?;
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    std::fs::create_dir_all(&out)?;

    let threads = cli.threads.unwrap_or_else(rayon::current_num_threads);
    if threads == 0 {
        return Err(CliError::Config(config::ConfigError {
            line: 0,
            key: "threads".into(),
            message: "must be at least 1".into(),
        }));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| std::io::Error::other(e.to_string()))?;

    let ctx = Context {
        cfg,
        out: out.clone(),
        dump_matrices: common.dump_matrices,
    };
    let start = Instant::now();
    let files = pool.install(|| match &cli.command {
        Command::Mesh(_) => commands::mesh(&ctx),
        Command::Eigs(_) => commands::eigs(&ctx),
        Command::Dq(_) => commands::dq(&ctx),
        Command::ResonanceScan(_) => commands::resonance_scan(&ctx),
        Command::Ntd(_) => commands::ntd(&ctx),
        Command::IdentityCheck(_) => commands::identity_check(&ctx),
        Command::MonotonicityCheck(_) => commands::monotonicity(&ctx),
        Command::Localize(_) => commands::localize(&ctx),
        Command::Reconstruct(_) => commands::reconstruct_cmd(&ctx),
    })?;
    commands::write_manifest(&out, name, threads, &raw.echo(), &files, start.elapsed().as_secs_f64())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("helm-mono: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
