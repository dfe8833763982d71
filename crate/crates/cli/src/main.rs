mod commands;
mod config;

use std::io::Write;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde_json::{json, Value};

use commands::{Outcome, TableRow};
use config::{Cli, Config, UsageError};

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;

fn strip_timing(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("runtime_ms");
            map.values_mut().for_each(strip_timing);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

fn write_csv(path: &Path, rows: &[TableRow]) -> Result<(), UsageError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["outcome", "probability_model", "probability_simulated", "abs_diff"])?;
    for r in rows {
        let outcome = r.outcome.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
        w.write_record([
            outcome,
            format!("{:e}", r.probability_model),
            format!("{:e}", r.probability_simulated),
            format!("{:e}", (r.probability_simulated - r.probability_model).abs()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn report(cfg: &Config, outcome: Outcome, elapsed_ms: f64) -> Value {
    let Outcome {
        mut results, criteria, ..
    } = outcome;
    if !cfg.timing {
        strip_timing(&mut results);
    }
    let pass = criteria.iter().all(|c| c.pass);
    let mut r = json!({
        "command": cfg.command,
        "config": cfg,
        "version": env!("CARGO_PKG_VERSION"),
        "rng": wstate::random::RNG_DESCRIPTION,
        "results": results,
        "criteria": criteria,
        "pass": pass,
    });
    if cfg.timing {
        r["wall_clock_ms"] = json!(elapsed_ms);
    }
    r
}

fn execute(cfg: &Config) -> Result<bool, UsageError> {
    let start = Instant::now();
    let mut outcome = commands::run(cfg)?;
    if let Some(path) = &cfg.csv {
        let rows = outcome
            .table
            .take()
            .ok_or_else(|| UsageError(format!("`{}` has no distribution table for --csv", cfg.command)))?;
        write_csv(path, &rows)?;
    }
    let value = report(cfg, outcome, start.elapsed().as_secs_f64() * 1e3);
    let pass = value["pass"].as_bool().unwrap_or(false);
    let text = serde_json::to_string_pretty(&value)? + "\n";
    match &cfg.output {
        Some(path) => std::fs::write(path, text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = config::resolve(cli).and_then(|cfg| execute(&cfg));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("wstate: one or more criteria failed");
            ExitCode::from(EXIT_FAIL)
        }
        Err(e) => {
            eprintln!("wstate: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
