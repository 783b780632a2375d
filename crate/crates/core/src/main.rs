use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use sentinel_core::experiment::{parse_config, run_experiment, ExperimentSpec};
use sentinel_core::sim::ProtocolKind;

/// Run Sentinel or PEAS sleep-scheduling simulations and parameter sweeps.
#[derive(Debug, Parser)]
#[command(name = "sentinel-sim", version)]
struct Cli {
    /// Experiment description (`key = value` lines, optional [energy] and [sweep] sections).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_protocol)]
    protocol: Option<ProtocolKind>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Simulated seconds.
    #[arg(long, value_name = "S")]
    duration: Option<f64>,
    #[arg(long, value_name = "N")]
    nodes: Option<u32>,
    #[arg(long, value_name = "DIR")]
    output: Option<PathBuf>,
}

fn parse_protocol(s: &str) -> Result<ProtocolKind, String> {
    s.parse()
}

fn load(cli: &Cli) -> Result<ExperimentSpec, String> {
    let mut spec = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => ExperimentSpec::default(),
    };
    // Flags win over the file; a flag also replaces any sweep over the same field.
    let mut drop_axis = |name: &str| spec.sweep.retain(|a| a.name != name);
    if cli.protocol.is_some() {
        drop_axis("protocol");
    }
    if cli.seed.is_some() {
        drop_axis("seed");
    }
    if cli.duration.is_some() {
        drop_axis("duration");
    }
    if cli.nodes.is_some() {
        drop_axis("n_nodes");
    }
    if let Some(p) = cli.protocol {
        spec.protocol = p;
        spec.base.protocol = p;
    }
    if let Some(s) = cli.seed {
        spec.base.seed = s;
    }
    if let Some(d) = cli.duration {
        spec.base.duration = d;
    }
    if let Some(n) = cli.nodes {
        spec.base.n_nodes = n;
    }
    if let Some(o) = &cli.output {
        spec.output_dir = o.clone();
    }
    let points = spec.points().map_err(|(_, m)| m)?;
    for p in &points {
        p.config.validate().map_err(|e| format!("{}: {e}", p.name))?;
    }
    Ok(spec)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // bad flags are configuration errors; help and version are not errors
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let spec = match load(&cli) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(1);
        }
    };
    match run_experiment(&spec) {
        Ok(report) => {
            for run in &report.runs {
                let s = &run.summary;
                let ratio = s.energy_ratio_vs_baseline.map(|r| format!(" saving={:.1}%", 100.0 * r)).unwrap_or_default();
                println!(
                    "{}/{} {} seed={} energy={:.3} J/node coverage={:.3} active={:.1}{ratio}",
                    run.point,
                    run.replication,
                    s.protocol.as_str(),
                    s.seed,
                    s.avg_energy_per_node,
                    s.mean_coverage,
                    s.mean_active_count
                );
            }
            println!("results written to {}", spec.output_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
