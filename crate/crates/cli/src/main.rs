use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pstm_sched::report::{
    self, builtin_workloads, compare_expected, parallelism_tables, render_aggregate,
    render_results_table, rows_to_csv, rows_to_json, ConfigKey, ExpectedTable, MetricsRow,
};
use pstm_sched::verifier::{Assertion, ExploreConfig, Explorer, Objective, Verdict};
use pstm_sched::{load_workload, run_with, Algorithm, SimConfig, VerifyError, Workload};

const EXIT_MISMATCH: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_BUDGET: u8 = 3;

#[derive(Parser)]
#[command(
    name = "pstm-sched",
    version,
    about = "Simulate and verify STM transaction schedulers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and print its metrics.
    Run {
        /// Built-in name (CFW, CW1, CW2) or path to a workload file.
        #[arg(long)]
        workload: String,
        #[arg(long)]
        algorithm: Algorithm,
        #[arg(long)]
        workers: usize,
        /// Include the per-tick event trace (JSON only).
        #[arg(long)]
        trace: bool,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Run every algorithm on each workload for each worker count.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
        workers: Vec<usize>,
        /// Workloads to sweep; defaults to the three built-ins.
        #[arg(long, value_delimiter = ',')]
        workload: Vec<String>,
        /// Output file; `.json` writes JSON, anything else CSV. Stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Explore all service orders and check the assertions.
    Verify {
        /// 1 to 5, or `all`.
        #[arg(long, default_value = "all")]
        assertion: String,
        /// Attach the worst-case witness for this objective.
        #[arg(long, value_enum)]
        objective: Option<ObjectiveArg>,
        /// Defaults to every built-in workload.
        #[arg(long)]
        workload: Option<String>,
        /// Defaults to every algorithm.
        #[arg(long)]
        algorithm: Option<Algorithm>,
        #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
        workers: Vec<usize>,
        #[arg(long, default_value_t = ExploreConfig::default().max_states)]
        max_states: usize,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Print result tables for the built-in workloads.
    Report {
        /// Any of 1 (two workers), 3 (three and four), 4 (makespan by nit), 5 (throughput by nit).
        #[arg(long, value_delimiter = ',', default_value = "1,3,4,5")]
        tables: Vec<u8>,
    },
    /// Compare simulator output against expected values.
    Compare {
        /// `builtin` or a path to an expected-table JSON file.
        #[arg(long, default_value = "builtin")]
        expected: String,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Na,
    Msna,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Na => Objective::Na,
            ObjectiveArg::Msna => Objective::Msna,
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl std::fmt::Display) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.to_string(),
        }
    }
}

impl From<VerifyError> for Failure {
    fn from(e: VerifyError) -> Self {
        let code = match e {
            VerifyError::StateBudgetExceeded(_) | VerifyError::WorkloadTooLarge { .. } => {
                EXIT_BUDGET
            }
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            workload,
            algorithm,
            workers,
            trace,
            format,
        } => cmd_run(&workload, algorithm, workers, trace, format),
        Command::Sweep {
            workers,
            workload,
            out,
        } => cmd_sweep(&workers, &workload, out.as_deref()),
        Command::Verify {
            assertion,
            objective,
            workload,
            algorithm,
            workers,
            max_states,
            format,
        } => cmd_verify(
            &assertion,
            objective,
            workload.as_deref(),
            algorithm,
            &workers,
            max_states,
            format,
        ),
        Command::Report { tables } => cmd_report(&tables),
        Command::Compare { expected, format } => cmd_compare(&expected, format),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn workload(name: &str) -> Result<Workload, Failure> {
    load_workload(name).map_err(Failure::usage)
}

fn cmd_run(
    name: &str,
    algorithm: Algorithm,
    workers: usize,
    trace: bool,
    format: Format,
) -> Outcome {
    let w = workload(name)?;
    let mut config = SimConfig::new(algorithm, workers);
    config.trace = trace;
    let metrics = run_with(&w, &config, &mut pstm_sched::simulator::DeterministicPolicy)
        .map_err(Failure::usage)?;
    let key = ConfigKey::new(name, algorithm, workers);
    let row = MetricsRow::from_metrics(&key, w.len(), &metrics);
    match format {
        Format::Csv => print!("{}", rows_to_csv(&[row]).map_err(Failure::usage)?),
        Format::Text => println!(
            "{key}: ms={} na={} snum={} iterations={} throughput={:.2}",
            row.ms, row.na, row.snum, row.iterations, row.throughput
        ),
        Format::Json => {
            let value = serde_json::json!({ "summary": row, "run": metrics });
            println!(
                "{}",
                serde_json::to_string_pretty(&value).map_err(Failure::usage)?
            );
        }
    }
    Ok(0)
}

fn named_workloads(names: &[String]) -> Result<Vec<(String, Workload)>, Failure> {
    if names.is_empty() {
        return Ok(builtin_workloads());
    }
    names
        .iter()
        .map(|n| Ok((n.clone(), workload(n)?)))
        .collect()
}

fn cmd_sweep(workers: &[usize], names: &[String], out: Option<&Path>) -> Outcome {
    let workloads = named_workloads(names)?;
    let rows = report::sweep(&workloads, &Algorithm::ALL, workers).map_err(Failure::usage)?;
    let json = out.is_some_and(|p| p.extension().is_some_and(|e| e == "json"));
    let text = if json {
        rows_to_json(&rows)
    } else {
        rows_to_csv(&rows)
    }
    .map_err(Failure::usage)?;
    match out {
        Some(path) => {
            fs::write(path, text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?
        }
        None => print!("{text}"),
    }
    Ok(0)
}

fn cmd_verify(
    assertion: &str,
    objective: Option<ObjectiveArg>,
    name: Option<&str>,
    algorithm: Option<Algorithm>,
    workers: &[usize],
    max_states: usize,
    format: Format,
) -> Outcome {
    let assertions: Vec<Assertion> = if assertion.eq_ignore_ascii_case("all") {
        Assertion::ALL.to_vec()
    } else {
        let a = assertion
            .parse::<u8>()
            .ok()
            .and_then(Assertion::from_number)
            .ok_or_else(|| {
                Failure::usage(format!("assertion must be 1..5 or all, got {assertion:?}"))
            })?;
        vec![a]
    };
    let workloads = match name {
        Some(n) => vec![(n.to_string(), workload(n)?)],
        None => builtin_workloads(),
    };
    let algorithms = algorithm.map_or(Algorithm::ALL.to_vec(), |a| vec![a]);
    let config = ExploreConfig {
        max_states,
        ..ExploreConfig::default()
    };

    let mut violated = false;
    let mut results = Vec::new();
    for (wname, w) in &workloads {
        for &alg in &algorithms {
            for &n in workers {
                let key = ConfigKey::new(wname.clone(), alg, n);
                let exploration = Explorer::new(w, alg, n, config)?.explore()?;
                let mut reports: Vec<_> =
                    assertions.iter().map(|&a| exploration.report(a)).collect();
                if matches!(format, Format::Text | Format::Csv) {
                    for r in &reports {
                        let value = r.value.map_or(String::new(), |v| format!(" value={v}"));
                        println!(
                            "{key:<18} {:<40} {:?}{value} (states {})",
                            r.assertion.to_string(),
                            r.verdict,
                            r.states_visited
                        );
                    }
                }
                violated |= reports.iter().any(|r| r.verdict == Verdict::Violated);
                // Witnesses are only kept in structured output, and only on request
                // or when an assertion fails.
                for r in reports.iter_mut() {
                    if r.verdict == Verdict::Valid && objective.is_none() {
                        r.witness = None;
                    }
                }
                let witness = objective.and_then(|o| exploration.witness(o.into()).cloned());
                results.push(serde_json::json!({
                    "config": key,
                    "reports": reports,
                    "witness": witness,
                }));
            }
        }
    }
    if matches!(format, Format::Json) {
        println!(
            "{}",
            serde_json::to_string_pretty(&results).map_err(Failure::usage)?
        );
    }
    Ok(if violated { EXIT_MISMATCH } else { 0 })
}

fn workload_nits(workloads: &[(String, Workload)]) -> Vec<(String, usize, usize)> {
    workloads
        .iter()
        .map(|(n, w)| (n.clone(), w.nit(), w.len()))
        .collect()
}

fn cmd_report(tables: &[u8]) -> Outcome {
    if let Some(t) = tables.iter().find(|t| ![1, 3, 4, 5].contains(*t)) {
        return Err(Failure::usage(format!(
            "unknown table {t}; expected 1, 3, 4 or 5"
        )));
    }
    let expected = ExpectedTable::builtin();
    let workloads = builtin_workloads();
    let rows = report::sweep(&workloads, &Algorithm::ALL, &[2, 3, 4]).map_err(Failure::usage)?;
    let (ms, th) =
        parallelism_tables(&rows, &workload_nits(&workloads), &[2, 3, 4]).map_err(Failure::usage)?;
    for t in tables {
        match t {
            1 => {
                println!("Table 1: two workers");
                print!("{}", render_results_table(&rows, &[2], Some(&expected)));
            }
            3 => {
                println!("Table 3: three and four workers");
                print!("{}", render_results_table(&rows, &[3, 4], Some(&expected)));
            }
            4 => print!(
                "{}",
                render_aggregate(
                    "Table 4: makespan by level of parallelism",
                    "ms",
                    &ms,
                    &expected.makespan_by_nit
                )
            ),
            _ => print!(
                "{}",
                render_aggregate(
                    "Table 5: throughput by level of parallelism",
                    "th",
                    &th,
                    &expected.throughput_by_nit
                )
            ),
        }
        println!();
    }
    Ok(0)
}

fn cmd_compare(source: &str, format: Format) -> Outcome {
    let expected = if source == "builtin" {
        ExpectedTable::builtin()
    } else {
        let text =
            fs::read_to_string(source).map_err(|e| Failure::usage(format!("{source}: {e}")))?;
        ExpectedTable::from_json(&text).map_err(Failure::usage)?
    };
    let mut names: Vec<String> = Vec::new();
    for c in &expected.cells {
        if !names.contains(&c.workload) {
            names.push(c.workload.clone());
        }
    }
    let workloads = named_workloads(&names)?;
    let mut workers: Vec<usize> = expected.cells.iter().map(|c| c.workers).collect();
    workers.sort_unstable();
    workers.dedup();
    let rows = report::sweep(&workloads, &Algorithm::ALL, &workers).map_err(Failure::usage)?;
    let diff = compare_expected(&rows, &expected);
    match format {
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(&diff).map_err(Failure::usage)?
        ),
        _ => print!("{}", diff.render()),
    }
    Ok(if diff.ok() { 0 } else { EXIT_MISMATCH })
}
