//! `vortexlab` command line.
//!
//! Exit status: 0 on success or a PASS verdict, 2 on a FAIL verdict, 1 on
//! errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vortexlab::harness::{self, ExperimentSpec, RunOptions, Verdict};

#[derive(Parser)]
#[command(name = "vortexlab", version, about = "Vortex dynamics experiments for inhomogeneous condensates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Spec file, or `preset:NAME` for a bundled spec.
    #[arg(long)]
    spec: Option<String>,
    /// Output directory; defaults to the spec's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated eps values replacing the spec's list.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Grid nodes along the longer box side.
    #[arg(long)]
    resolution: Option<usize>,
    /// Suppress progress output.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Reduced dynamics plus one field run per eps.
    Run(Common),
    /// Convergence of field runs to the reduced dynamics.
    Validate(Common),
    /// Thomas-Fermi convergence study.
    TfStudy(Common),
    /// Vortex detection on a stored complex field.
    Detect {
        /// `VLCPLX1` field file.
        field: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Cluster merge radius (default four grid spacings).
        #[arg(long)]
        merge_radius: Option<f64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Background presets and the straight-line control.
    Figures {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
}

fn load_spec(c: &Common) -> vortexlab::Result<ExperimentSpec> {
    let name = c.spec.as_deref().ok_or_else(|| vortexlab::Error::BadParams("--spec is required".into()))?;
    let mut spec = match name.strip_prefix("preset:") {
        Some(p) => harness::preset(p)?,
        None => ExperimentSpec::load(Path::new(name))?,
    };
    if let Some(eps) = &c.eps {
        spec.eps = eps.clone();
    }
    if let Some(n) = c.resolution {
        spec.pde.resolution = Some(n);
    }
    spec.validate()?;
    Ok(spec)
}

fn out_dir(c: &Common, spec: &ExperimentSpec) -> Option<PathBuf> {
    c.out.clone().or_else(|| spec.output_dir.as_ref().map(|p| spec.resolve(p)))
}

fn verdict_code(v: Verdict) -> ExitCode {
    match v {
        Verdict::Pass => ExitCode::SUCCESS,
        Verdict::Fail => ExitCode::from(2),
    }
}

fn execute(cli: Cli) -> vortexlab::Result<ExitCode> {
    match cli.command {
        Command::Run(c) => {
            let spec = load_spec(&c)?;
            let out = out_dir(&c, &spec);
            let outcome = harness::run(&spec, out.as_deref(), &RunOptions { quiet: c.quiet })?;
            println!("{}", serde_json::to_string_pretty(&outcome.summary).expect("summary serializes"));
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate(c) => {
            let spec = load_spec(&c)?;
            let out = out_dir(&c, &spec);
            let (table, _) = harness::validate_theorem(&spec, out.as_deref(), &RunOptions { quiet: c.quiet })?;
            print!("{}", table.to_csv());
            println!("verdict: {:?}", table.verdict);
            Ok(verdict_code(table.verdict))
        }
        Command::TfStudy(c) => {
            let spec = load_spec(&c)?;
            let out = out_dir(&c, &spec);
            let report = harness::tf_study(&spec, out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(ExitCode::SUCCESS)
        }
        Command::Detect { field, out, merge_radius, quiet: _ } => {
            let det = harness::detect_file(&field, merge_radius, out.as_deref())?;
            print!("{}", det.to_csv());
            Ok(ExitCode::SUCCESS)
        }
        Command::Figures { out, quiet } => {
            let report = harness::figures(out.as_deref(), &RunOptions { quiet })?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(verdict_code(report.verdict))
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
