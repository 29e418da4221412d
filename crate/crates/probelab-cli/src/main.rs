//! Command-line driver: forward simulation, probe reconstruction,
//! interior-operator recovery, and the elastic kernel suite, all driven by
//! a scenario config file.

use clap::{Parser, Subcommand};
use probelab::commands::{cmd_forward, cmd_inside_dtn, cmd_kernels, cmd_probe, CommandOpts};
use probelab::config::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "probelab",
    about = "Probe-method laboratory for conductivity inclusions",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Scenario config file (TOML).
    config: PathBuf,
    /// Output directory for CSV/JSON artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker cap for parallel sections.
    #[arg(long)]
    jobs: Option<usize>,
    /// Attach validation-mode diagnostics (true-inclusion comparisons).
    #[arg(long)]
    validation: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate boundary operators and dump the measurement matrices.
    Forward {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Scan the needle family and reconstruct the inclusion boundary.
    Probe {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Recover the interior boundary operator on a known inclusion.
    InsideDtn {
        #[command(flatten)]
        common: CommonArgs,
        /// Bypass the measurement pipeline and use directly computed
        /// interior fields (diagnostic mode; implies --validation).
        #[arg(long)]
        exact_interior: bool,
    },
    /// Run the elasticity kernel identity suite.
    KernelsCheck {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn opts_of(common: &CommonArgs, exact_interior: bool) -> CommandOpts {
    CommandOpts {
        out_dir: common.out.clone(),
        seed: common.seed,
        jobs: common.jobs,
        validation: common.validation || exact_interior,
        exact_interior,
    }
}

fn run() -> probelab::Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Forward { common } => {
            let cfg = RunConfig::load(&common.config)?;
            let manifest = cmd_forward(&cfg, &opts_of(common, false))?;
            eprintln!(
                "forward: {} nodes, {} cells, gap |.|_rel = {:.3e}{}",
                manifest.mesh.vertices,
                manifest.mesh.cells,
                manifest.gap_norm_relative,
                if manifest.null_experiment {
                    " (null experiment)"
                } else {
                    ""
                }
            );
        }
        Command::Probe { common } => {
            let cfg = RunConfig::load(&common.config)?;
            let start = std::time::Instant::now();
            let artifacts = cmd_probe(&cfg, &opts_of(common, false))?;
            eprintln!(
                "probe: {} needles, {} cloud points, {:.1} s{}",
                artifacts.summary.needles.len(),
                artifacts.summary.cloud_points,
                start.elapsed().as_secs_f64(),
                match artifacts.summary.hausdorff_to_true {
                    Some(h) => format!(", hausdorff {h:.4}"),
                    None => String::new(),
                }
            );
        }
        Command::InsideDtn {
            common,
            exact_interior,
        } => {
            let cfg = RunConfig::load(&common.config)?;
            let artifacts = cmd_inside_dtn(&cfg, &opts_of(common, *exact_interior))?;
            let c = &artifacts.comparison;
            eprintln!(
                "inside-dtn: {} interface nodes, completion cond {:.2e}{}",
                c.interface_nodes,
                c.completion_condition,
                match c.lambda_minus_error_rel {
                    Some(e) => format!(", operator error {:.2}%", 100.0 * e),
                    None => String::new(),
                }
            );
        }
        Command::KernelsCheck { common } => {
            let cfg = RunConfig::load(&common.config)?;
            let report = cmd_kernels(&cfg, &opts_of(common, false))?;
            for c in &report.checks {
                eprintln!(
                    "  {:32} residual {:10.3e}{}  {}",
                    c.name,
                    c.worst_residual,
                    match c.order {
                        Some(o) => format!("  order {o:.2}"),
                        None => String::new(),
                    },
                    if c.pass { "ok" } else { "FAIL" }
                );
            }
            if !report.pass {
                return Err(probelab::Error::InvalidInput(
                    "kernel suite reported failures".into(),
                ));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
