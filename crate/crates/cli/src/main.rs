//! `bitype`: prove trace equivalence of protocol files, benchmark a corpus,
//! and cross-check verdicts with the bounded oracle.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use bitype_core::{
    check_file_bounded, parse, parse_trace, replay, run, Bounds, OracleInput, OracleVerdict,
    ReplayOutcome, Report, RunOptions, Unknown, Verdict, REPORT_SCHEMA,
};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "bitype",
    version,
    about = "Type-based proofs of trace equivalence for security protocols"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Type-check a protocol file and check its constraints.
    Run {
        file: PathBuf,
        /// Print the generated constraint set.
        #[arg(long)]
        dump_constraints: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Run every `.tq` file of a directory and print a table.
    Bench {
        dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Search for an attack within bounds.
    Oracle {
        file: PathBuf,
        /// Visible actions per trace.
        #[arg(long, default_value_t = Bounds::default().trace_depth)]
        trace_depth: usize,
        /// Nesting depth of attacker recipes.
        #[arg(long, default_value_t = Bounds::default().recipe_depth)]
        recipe_depth: usize,
        /// Copies made of each replication.
        #[arg(long, default_value_t = Bounds::default().repl_bound)]
        repl_bound: u32,
        /// Fresh attacker names.
        #[arg(long, default_value_t = Bounds::default().fresh_names)]
        fresh_names: usize,
        /// Replay a trace file instead of searching.
        #[arg(long, value_name = "FILE")]
        replay: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Clone, Copy)]
struct Common {
    /// Emit JSON instead of text.
    #[arg(long)]
    json: bool,
    /// Worker threads; 1 disables parallelism.
    #[arg(long, value_name = "N")]
    parallel: Option<usize>,
}

impl Common {
    fn configure(&self) -> Result<bool> {
        if let Some(n) = self.parallel {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global()
                .context("configuring the thread pool")?;
        }
        Ok(self.parallel != Some(1))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            file,
            dump_constraints,
            common,
        } => cmd_run(&file, dump_constraints, common),
        Command::Bench { dir, common } => cmd_bench(&dir, common),
        Command::Oracle {
            file,
            trace_depth,
            recipe_depth,
            repl_bound,
            fresh_names,
            replay,
            common,
        } => {
            let bounds = Bounds {
                trace_depth,
                recipe_depth,
                repl_bound,
                fresh_names,
            };
            cmd_oracle(&file, bounds, replay.as_deref(), common)
        }
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn verdict_code(report: &Report) -> u8 {
    if report.verdict.is_proven() {
        0
    } else {
        1
    }
}

fn cmd_run(path: &Path, dump_constraints: bool, common: Common) -> Result<u8> {
    let parallel = common.configure()?;
    let src = read(path)?;
    let report = run(
        &src,
        RunOptions {
            dump_constraints,
            parallel,
        },
    )
    .with_context(|| format!("parsing {}", path.display()))?;
    if common.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("{}: {}", path.display(), report.verdict);
        println!(
            "entries: {}, constraints: {}",
            report.entry_count, report.constraint_count
        );
        let t = report.timing;
        println!(
            "time: {:.3} ms (parse {:.3}, typing {:.3}, consistency {:.3})",
            t.total_ms, t.parse_ms, t.typing_ms, t.consistency_ms
        );
        if let Some(dump) = &report.constraints {
            println!("{dump}");
        }
    }
    Ok(verdict_code(&report))
}

/// Splits `name-12.tq` into the protocol name and the session count.
fn protocol_and_sessions(path: &Path) -> (String, Option<u32>) {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    match stem.rsplit_once('-') {
        Some((name, n)) if n.parse::<u32>().is_ok() => (name.to_string(), n.parse().ok()),
        _ => (stem, None),
    }
}

struct Row {
    path: PathBuf,
    outcome: Result<Report, String>,
}

#[derive(Serialize)]
struct BenchRow<'a> {
    file: String,
    protocol: String,
    sessions: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<&'a Report>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a String>,
}

#[derive(Serialize)]
struct BenchJson<'a> {
    schema: u32,
    rows: Vec<BenchRow<'a>>,
}

fn cmd_bench(dir: &Path, common: Common) -> Result<u8> {
    let parallel = common.configure()?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "tq"))
        .collect();
    files.sort_by_key(|p| protocol_and_sessions(p));
    let opts = RunOptions {
        dump_constraints: false,
        parallel,
    };
    let check = |path: &PathBuf| Row {
        path: path.clone(),
        outcome: read(path)
            .map_err(|e| format!("{e:#}"))
            .and_then(|src| run(&src, opts).map_err(|e| e.to_string())),
    };
    let rows: Vec<Row> = if parallel {
        files.par_iter().map(check).collect()
    } else {
        files.iter().map(check).collect()
    };
    let code = rows
        .iter()
        .map(|r| match &r.outcome {
            Ok(rep) => verdict_code(rep),
            Err(_) => 2,
        })
        .max()
        .unwrap_or(0);
    if common.json {
        let rows: Vec<BenchRow> = rows
            .iter()
            .map(|r| {
                let (protocol, sessions) = protocol_and_sessions(&r.path);
                BenchRow {
                    file: r.path.display().to_string(),
                    protocol,
                    sessions,
                    report: r.outcome.as_ref().ok(),
                    error: r.outcome.as_ref().err(),
                }
            })
            .collect();
        println!(
            "{}",
            serde_json::to_string_pretty(&BenchJson {
                schema: REPORT_SCHEMA,
                rows
            })?
        );
    } else {
        print!("{}", bench_table(&rows));
    }
    Ok(code)
}

fn short_verdict(v: &Verdict) -> &'static str {
    match v {
        Verdict::ProvenEquivalent => "Proven-Equivalent",
        Verdict::Unknown(Unknown::TypeFailure(_)) => "Unknown(TypeFailure)",
        Verdict::Unknown(Unknown::InconsistentConstraints(_)) => "Unknown(InconsistentConstraints)",
        Verdict::Unknown(Unknown::OutOfFragment(_)) => "Unknown(OutOfFragment)",
    }
}

fn bench_table(rows: &[Row]) -> String {
    let header = ["protocol", "sessions", "verdict", "entries", "time (ms)"];
    let mut cells: Vec<[String; 5]> = vec![header.map(String::from)];
    for r in rows {
        let (protocol, sessions) = protocol_and_sessions(&r.path);
        let sessions = sessions.map_or_else(|| "-".to_string(), |n| n.to_string());
        cells.push(match &r.outcome {
            Ok(rep) => [
                protocol,
                sessions,
                short_verdict(&rep.verdict).to_string(),
                rep.entry_count.to_string(),
                format!("{:.3}", rep.timing.total_ms),
            ],
            Err(e) => [
                protocol,
                sessions,
                format!("error: {e}"),
                "-".into(),
                "-".into(),
            ],
        });
    }
    let widths: Vec<usize> = (0..5)
        .map(|c| cells.iter().map(|row| row[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &cells {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(s, w)| format!("{s:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn cmd_oracle(path: &Path, bounds: Bounds, trace: Option<&Path>, common: Common) -> Result<u8> {
    let parallel = common.configure()?;
    let src = read(path)?;
    let file = parse(&src).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(trace) = trace {
        let input = OracleInput::from_file(&file, &bounds);
        let (side, actions) = parse_trace(&read(trace)?, &input.pool)
            .with_context(|| format!("parsing {}", trace.display()))?;
        let outcome = replay(&input, &bounds, side, &actions);
        let (name, code) = match &outcome {
            ReplayOutcome::Matched => ("matched", 0),
            ReplayOutcome::Attack(_) => ("attack", 1),
            ReplayOutcome::NotExecutable => ("not-executable", 2),
        };
        if common.json {
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({ "schema": REPORT_SCHEMA, "replay": name }))?
            );
        } else {
            match outcome {
                ReplayOutcome::Matched => {
                    println!("the {} process matches the trace", side_other(side))
                }
                ReplayOutcome::Attack(_) => println!(
                    "attack confirmed: the {} process cannot match",
                    side_other(side)
                ),
                ReplayOutcome::NotExecutable => {
                    println!("the {side} process cannot perform the trace")
                }
            }
        }
        return Ok(code);
    }
    let report = check_file_bounded(&file, &bounds, parallel);
    let code = match report.verdict {
        OracleVerdict::NoAttackFound => 0,
        OracleVerdict::Attack(_) => 1,
    };
    if common.json {
        let mut v = json!({
            "schema": REPORT_SCHEMA,
            "bounds": bounds,
            "explored": report.explored,
            "elapsed_ms": report.elapsed_ms,
        });
        match &report.verdict {
            OracleVerdict::NoAttackFound => v["result"] = json!("no-attack-found"),
            OracleVerdict::Attack(a) => {
                v["result"] = json!("attack");
                v["side"] = json!(a.side);
                v["trace"] = json!(a.actions.iter().map(|x| x.to_string()).collect::<Vec<_>>());
                v["test"] = json!(a.test.as_ref().map(|t| t.to_string()));
            }
        }
        println!("{}", serde_json::to_string_pretty(&v)?);
    } else {
        match &report.verdict {
            OracleVerdict::NoAttackFound => println!(
                "{}: no attack found within trace depth {}, recipe depth {}, {} replication copies",
                path.display(),
                bounds.trace_depth,
                bounds.recipe_depth,
                bounds.repl_bound
            ),
            OracleVerdict::Attack(a) => {
                println!("# {}: attack", path.display());
                println!("{a}");
            }
        }
        println!(
            "# explored {} states in {:.1} ms",
            report.explored, report.elapsed_ms
        );
    }
    Ok(code)
}

fn side_other(side: bitype_core::Direction) -> &'static str {
    match side {
        bitype_core::Direction::Left => "right",
        bitype_core::Direction::Right => "left",
    }
}
