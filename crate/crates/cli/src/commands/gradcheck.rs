use std::process::ExitCode;

use anyhow::{ensure, Result};
use conflabel::gradcheck::{
    check_gradient_fn, check_loss_gradient, check_network_gradient, GradCheckConfig, GradReport,
};
use conflabel::losses::LossKind;
use conflabel::LossSpec;

use crate::{write_json, Cli};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Probes per loss, at least 100.
    #[arg(long, default_value_t = 100)]
    pub probes: usize,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    /// Maximum relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Probes this close to a clamp or kink are skipped.
    #[arg(long, default_value_t = 1e-6)]
    pub margin: f64,
    /// Skip the backpropagation checks through small networks.
    #[arg(long)]
    pub no_network: bool,
    /// Scales every analytic gradient; a negative control for the checker.
    #[arg(long, hide = true)]
    pub corrupt: Option<f64>,
}

fn corrupted(kind: LossKind, factor: f64, config: &GradCheckConfig) -> GradReport {
    let spec = LossSpec::new(kind);
    check_gradient_fn(
        kind.name(),
        |label, p| {
            let mut out = spec.evaluate(label, p);
            out.grad.iter_mut().for_each(|g| *g *= factor);
            out
        },
        |label, p| spec.kink_distance(&spec.target(label), p),
        config,
    )
}

pub fn run(cli: &Cli, args: &Args) -> Result<ExitCode> {
    ensure!(args.probes >= 100, "at least 100 probes are required, got {}", args.probes);
    let config = GradCheckConfig {
        probes: args.probes,
        step: args.step,
        tolerance: args.tolerance,
        boundary_margin: args.margin,
        seed: cli.seed.unwrap_or(0),
        ..GradCheckConfig::default()
    };
    let mut reports = Vec::new();
    for kind in LossKind::ALL {
        reports.push(match args.corrupt {
            Some(factor) => corrupted(kind, factor, &config),
            None => check_loss_gradient(kind, &config),
        });
    }
    if !args.no_network && args.corrupt.is_none() {
        reports.extend(LossKind::ALL.iter().map(|&kind| check_network_gradient(kind, &config)));
    }

    println!("{:<24} {:>7} {:>9} {:>7} {:>13}  result", "check", "probes", "excluded", "active", "max rel err");
    for r in &reports {
        println!(
            "{:<24} {:>7} {:>9} {:>7} {:>13.3e}  {}",
            r.name,
            r.probes,
            r.excluded,
            r.active,
            r.max_rel_err,
            if r.passed { "PASS" } else { "FAIL" }
        );
    }
    if let Some(out) = &cli.out {
        write_json(&out.join("gradcheck.json"), &reports)?;
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        println!("{failed} check(s) exceed relative error {:e}", args.tolerance);
        Ok(ExitCode::FAILURE)
    } else {
        println!("all checks within relative error {:e}", args.tolerance);
        Ok(ExitCode::SUCCESS)
    }
}
