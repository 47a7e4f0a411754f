use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use cca_sim::config::Profile;
use cca_sim::expanders::ExpanderParams;
use cca_sim::harness::{export_csv, parse_jsonl, run_plan, summarize, to_csv, to_jsonl, verify_expander, ExperimentPlan, RunSpec};
use clap::{Parser, Subcommand};

/// Simulator for download, disjunction and parity on a congested clique
/// with a trusted cloud and Byzantine machines.
#[derive(Parser)]
#[command(name = "cca", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one simulation described by a JSON run file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Report destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the run file's profile.
        #[arg(long)]
        profile: Option<Profile>,
    },
    /// Run every (cell, seed) of a JSON grid and write one report per line.
    Sweep {
        #[arg(long)]
        grid: PathBuf,
        /// JSONL destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the per-cell summary as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Build a seeded LSE/GLSE and check it exhaustively.
    VerifyExpander {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Summarize a JSONL result file as CSV.
    Export {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        csv: PathBuf,
    },
}

fn read(path: &PathBuf) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_or_print(path: &Option<PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().cmd {
        Cmd::Run { config, out, profile } => {
            let mut spec: RunSpec = serde_json::from_str(&read(&config)?).context("parsing run file")?;
            if let Some(p) = profile {
                spec.profile = p;
            }
            let report = spec.run()?;
            write_or_print(&out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
            eprintln!(
                "{} n={} k={} beta={}: correct={} q_max={} t={} m={}",
                report.config.algorithm, report.config.n, report.config.k, report.config.beta, report.correct, report.q_max,
                report.t_rounds, report.m_total
            );
        }
        Cmd::Sweep { grid, out, csv } => {
            let plan: ExperimentPlan = serde_json::from_str(&read(&grid)?).context("parsing grid")?;
            let records = run_plan(&plan)?;
            let jsonl = to_jsonl(&records);
            write_or_print(&out, &jsonl)?;
            let (reports, _) = parse_jsonl(&jsonl);
            let summary = summarize(&reports);
            for s in &summary {
                eprintln!(
                    "{} n={} k={} beta={} delta={} {}: runs={} q_max_med={} correct_rate={}",
                    s.alg, s.n, s.k, s.beta, s.delta, s.adversary, s.runs, s.q_max_med, s.correct_rate
                );
            }
            let faults = records.len() - reports.len();
            if faults > 0 {
                eprintln!("{faults} cell(s) aborted by a fault; see the JSONL");
            }
            if let Some(path) = csv {
                fs::write(&path, to_csv(&summary)).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Cmd::VerifyExpander { params, seed } => {
            let p: ExpanderParams = serde_json::from_str(&read(&params)?).context("parsing expander params")?;
            let check = verify_expander(&p, seed)?;
            println!("{}", check.describe());
            if !check.verdict.pass {
                return Ok(ExitCode::from(1));
            }
        }
        Cmd::Export { input, csv } => {
            let (table, skipped) = export_csv(&read(&input)?);
            fs::write(&csv, table).with_context(|| format!("writing {}", csv.display()))?;
            if skipped > 0 {
                eprintln!("warning: skipped {skipped} malformed record(s)");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
