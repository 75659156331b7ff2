mod args;

use std::fs;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use serde::Serialize;

use args::{split_dotted, Cli, Command, CommonArgs, RunArgs, SweepArgs, ValidateArgs};
use urllc_core::config::parse_override;
use urllc_core::experiment::{run_sweep, write_sweep_csv, ExperimentOutput, RunOptions, SweepVar};
use urllc_core::validate::Check;
use urllc_core::{run_experiment, Error, ScenarioConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_VALIDATION: u8 = 3;

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Io(_) => EXIT_USAGE,
            _ => EXIT_NUMERICAL,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn load_config(
    common: &CommonArgs,
    dotted: &[(String, String)],
) -> Result<ScenarioConfig, Failure> {
    let text = match &common.config {
        Some(path) => fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut overrides: Vec<(String, String)> = dotted.to_vec();
    for s in &common.set {
        overrides.push(parse_override(s)?);
    }
    if let Some(seed) = common.seed {
        overrides.push(("run.seed".into(), seed.to_string()));
    }
    if let Some(slots) = common.slots {
        overrides.push(("run.slots".into(), slots.to_string()));
    }
    if let Some(r) = common.realizations {
        overrides.push(("run.realizations".into(), r.to_string()));
    }
    if let Some(p) = &common.policies {
        let list: Vec<String> = p
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| format!("\"{s}\""))
            .collect();
        if list.is_empty() {
            return Err(Failure::usage("--policies needs at least one policy"));
        }
        overrides.push(("policy.policies".into(), format!("[{}]", list.join(", "))));
    }
    if common.traces {
        overrides.push(("output.traces".into(), "true".into()));
    }
    ScenarioConfig::from_toml_with_overrides(&text, &overrides).map_err(|e| match &common.config {
        Some(path) => Failure::usage(format!("{}: {e}", path.display())),
        None => Failure::usage(e.to_string()),
    })
}

fn run_options(common: &CommonArgs, cfg: &ScenarioConfig, trace_dir: &Path) -> RunOptions {
    RunOptions {
        jobs: common.jobs,
        trace_dir: cfg.output.traces.then(|| trace_dir.to_path_buf()),
    }
}

fn prepare_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::usage(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents)
        .map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))
}

fn print_summary(out: &ExperimentOutput) {
    for (name, m) in &out.metrics {
        println!(
            "{name:<10} avg latency {:>9.4} ms  avgUT {:>7.4} Gbps  violation rate {:.4}",
            m.avg_latency_ms.mean,
            m.avg_user_throughput_bps.mean * 1e-9,
            m.mean_violation_rate
        );
    }
}

fn cmd_run(a: RunArgs, dotted: &[(String, String)]) -> Result<(), Failure> {
    let cfg = load_config(&a.common, dotted)?;
    prepare_out(&a.common.out)?;
    let out = run_experiment(
        &cfg,
        &run_options(&a.common, &cfg, &a.common.out.join("traces")),
    )?;
    let path = a.common.out.join("aggregate.json");
    write_file(&path, &out.to_json()?)?;
    print_summary(&out);
    eprintln!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct SweepPointDoc<'a> {
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<&'a std::collections::BTreeMap<String, urllc_core::PolicyMetrics>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct SweepDoc<'a> {
    config: &'a ScenarioConfig,
    sweep_var: SweepVar,
    points: Vec<SweepPointDoc<'a>>,
}

fn cmd_sweep(a: SweepArgs, dotted: &[(String, String)]) -> Result<(), Failure> {
    let cfg = load_config(&a.common, dotted)?;
    let var: SweepVar = a.sweep_var.parse()?;
    if a.sweep_values.is_empty() {
        return Err(Failure::usage("--sweep-values is empty"));
    }
    prepare_out(&a.common.out)?;
    let mut opts = run_options(&a.common, &cfg, &a.common.out.join("traces"));
    let points = if let Some(dir) = opts.trace_dir.take() {
        a.sweep_values
            .iter()
            .flat_map(|&v| {
                let o = RunOptions {
                    jobs: opts.jobs,
                    trace_dir: Some(dir.join(format!("{var}_{v}"))),
                };
                run_sweep(&cfg, var, &[v], &o)
            })
            .collect()
    } else {
        run_sweep(&cfg, var, &a.sweep_values, &opts)
    };

    let mut csv = Vec::new();
    write_sweep_csv(&points, &mut csv)?;
    let csv_path = a.common.out.join("sweep.csv");
    write_file(&csv_path, &String::from_utf8_lossy(&csv))?;
    let doc = SweepDoc {
        config: &cfg,
        sweep_var: var,
        points: points
            .iter()
            .map(|p| SweepPointDoc {
                value: p.value,
                metrics: p.result.as_ref().ok().map(|o| &o.metrics),
                error: p.result.as_ref().err().map(|e| e.to_string()),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&doc).map_err(Error::from)?;
    write_file(&a.common.out.join("sweep.json"), &json)?;

    let mut failed = 0;
    for p in &points {
        match &p.result {
            Ok(out) => {
                println!("{var} = {}", p.value);
                print_summary(out);
            }
            Err(e) => {
                failed += 1;
                eprintln!("{var} = {}: {e}", p.value);
            }
        }
    }
    eprintln!("wrote {}", csv_path.display());
    if failed == points.len() {
        let first = points.into_iter().find_map(|p| p.result.err());
        return Err(first.map_or_else(|| Failure::usage("sweep produced no points"), Failure::from));
    }
    Ok(())
}

fn cmd_validate(a: ValidateArgs) -> Result<(), Failure> {
    let checks: Vec<Check> = if a.only.is_empty() {
        Check::ALL.to_vec()
    } else {
        a.only.iter().map(|s| s.parse()).collect::<Result<_, _>>()?
    };
    if let Some(t) = a.tol {
        if t.is_nan() || t < 0.0 {
            return Err(Failure::usage("--tol must be non-negative"));
        }
    }
    let mut reports = Vec::new();
    for c in checks {
        let r = c.run(a.tol)?;
        println!(
            "{:<10} {}  gap {:.3e}  tol {:.1e}",
            c.name(),
            if r.passed { "PASS" } else { "FAIL" },
            r.gap,
            r.tolerance
        );
        reports.push(r);
    }
    if let Some(path) = &a.json {
        write_file(
            path,
            &serde_json::to_string_pretty(&reports).map_err(Error::from)?,
        )?;
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(Failure {
            code: EXIT_VALIDATION,
            message: format!("{failed} of {} checks failed", reports.len()),
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    let (argv, dotted) = match split_dotted(std::env::args().collect()) {
        Ok(x) => x,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a, &dotted),
        Command::Sweep(a) => cmd_sweep(a, &dotted),
        Command::Validate(a) => {
            if dotted.is_empty() {
                cmd_validate(a)
            } else {
                Err(Failure::usage("validate takes no config overrides"))
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
