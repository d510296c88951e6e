use clap::{Args, Parser, Subcommand};
use imcf_lab::report::{default_manifest, output_dir, run_manifest, ExperimentKind, Manifest, Overrides, Status};
use std::path::PathBuf;
use std::process::ExitCode;

/// p-harmonic approximation, conjugate transforms and weak inverse mean
/// curvature flow checks.
#[derive(Parser)]
#[command(name = "imcf-lab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the p-Laplace Dirichlet problem for a corpus member.
    Solve(Common),
    /// Trace streamlines of a member or of a field dump.
    Trace(Common),
    /// Certify the exact pair of a corpus member.
    Certify(Common),
    /// p-sweep with the one-sided bound, L1 convergence and limit certificate.
    Prop1(Common),
    /// Two-sided curve brackets of the conjugate.
    Lemma42(Common),
    /// Seminorms of |grad u| near and across a singular line.
    Theorem2(Common),
    /// Run whatever experiment the manifest names.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// JSON manifest; required for `report`.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output directory (default: the manifest's, else out/<experiment>).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Nodes per side of the grid.
    #[arg(long)]
    grid: Option<usize>,
    /// Drop p values above this.
    #[arg(long)]
    p_max: Option<f64>,
    #[arg(long)]
    quiet: bool,
}

fn run(kind: Option<ExperimentKind>, c: &Common) -> Result<ExitCode, String> {
    let mut m = match (&c.manifest, kind) {
        (Some(path), _) => Manifest::load(path).map_err(|e| format!("{}: {e}", path.display()))?,
        (None, Some(k)) => default_manifest(k),
        (None, None) => return Err("`report` needs --manifest".into()),
    };
    if let Some(k) = kind {
        if m.experiment != k {
            return Err(format!("manifest names experiment `{}`, not `{}`", m.experiment.name(), k.name()));
        }
    }
    Overrides { seed: c.seed, grid: c.grid, p_max: c.p_max }.apply(&mut m).map_err(|e| e.to_string())?;
    let dir = output_dir(&m, c.out.as_deref());
    let out = run_manifest(&m, &dir).map_err(|e| e.to_string())?;
    if !c.quiet {
        for check in &out.report.checks {
            println!("{} {}: {}", if check.pass { "PASS" } else { "FAIL" }, check.name, check.detail);
        }
        if out.report.status == Status::Aborted {
            println!("ABORTED: {}", out.report.error.as_deref().unwrap_or("unknown error"));
        }
        println!("report: {}", out.report_path.display());
    }
    Ok(ExitCode::from(out.exit_code() as u8))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = match &cli.command {
        Command::Solve(c) => (Some(ExperimentKind::Solve), c),
        Command::Trace(c) => (Some(ExperimentKind::Trace), c),
        Command::Certify(c) => (Some(ExperimentKind::Certify), c),
        Command::Prop1(c) => (Some(ExperimentKind::Prop1), c),
        Command::Lemma42(c) => (Some(ExperimentKind::Lemma42), c),
        Command::Theorem2(c) => (Some(ExperimentKind::Theorem2), c),
        Command::Report(c) => (None, c),
    };
    match run(kind, common) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
