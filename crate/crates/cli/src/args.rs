use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "urllc",
    version,
    about = "Latency-constrained massive-MIMO downlink scheduling simulator",
    after_help = "Any config key can also be set with a flag of the same dotted name, \
                  e.g. --traffic.lambda_gbps 3 or --cell.ue_count=16."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run all configured policies on one configuration.
    Run(RunArgs),
    /// Repeat `run` over a list of arrival rates or UE counts.
    Sweep(SweepArgs),
    /// Check the solvers against their reference oracles.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML config file; missing keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub slots: Option<usize>,
    #[arg(long)]
    pub realizations: Option<usize>,
    /// Comma-separated subset of proposed, baseline1, baseline2, wsrm.
    #[arg(long)]
    pub policies: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    /// Write one CSV trace per (policy, realization).
    #[arg(long)]
    pub traces: bool,
    /// Extra `key=value` override, e.g. `--set traffic.lambda_gbps=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// lambda_gbps or ue_count.
    #[arg(long)]
    pub sweep_var: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    pub sweep_values: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Run only these checks (omega, waterfill, ccp, mc, queue).
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<String>,
    /// Tolerance applied to every selected check instead of its default.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Also write the reports as JSON to this file.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

pub type Overrides = Vec<(String, String)>;

/// Pulls `--section.key value` and `--section.key=value` flags out of `argv`.
/// Returns the remaining arguments and the overrides in order.
pub fn split_dotted(argv: Vec<String>) -> Result<(Vec<String>, Overrides), String> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut overrides = Vec::new();
    let mut it = argv.into_iter();
    while let Some(arg) = it.next() {
        let Some(body) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let key = body.split('=').next().unwrap_or_default();
        if !key.contains('.') {
            rest.push(arg);
            continue;
        }
        match body.split_once('=') {
            Some((k, v)) => overrides.push((k.to_string(), v.to_string())),
            None => {
                let v = it.next().ok_or_else(|| format!("--{key} needs a value"))?;
                overrides.push((key.to_string(), v));
            }
        }
    }
    Ok((rest, overrides))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &[&str]) -> Vec<String> {
        s.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn dotted_flags_are_extracted() {
        let (rest, ov) = split_dotted(v(&[
            "urllc",
            "run",
            "--traffic.lambda_gbps",
            "3",
            "--seed",
            "4",
            "--cell.ue_count=8",
        ]))
        .unwrap();
        assert_eq!(rest, v(&["urllc", "run", "--seed", "4"]));
        assert_eq!(
            ov,
            vec![
                ("traffic.lambda_gbps".to_string(), "3".to_string()),
                ("cell.ue_count".to_string(), "8".to_string())
            ]
        );
    }

    #[test]
    fn dotted_flag_without_value_is_an_error() {
        assert!(split_dotted(v(&["urllc", "run", "--run.slots"])).is_err());
    }

    #[test]
    fn plain_values_with_dots_are_kept() {
        let (rest, ov) = split_dotted(v(&[
            "urllc",
            "run",
            "--config",
            "a.toml",
            "--set",
            "run.seed=2",
        ]))
        .unwrap();
        assert_eq!(rest.len(), 6);
        assert!(ov.is_empty());
    }
}
