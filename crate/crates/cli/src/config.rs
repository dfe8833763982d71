use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "wstate", version, about = "Seeded runs of the W-state protocol simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub args: Flags,
}

#[derive(Subcommand, ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Multi-party CHSH test on two copies of |W_K>
    Bell,
    /// Exact probabilities of the four-party bleeding protocol
    BleedAnalytic,
    /// Sequential bleeding over K parties holding four W copies
    BleedSeq,
    /// Faux/third-quantized equivalence on random protocols
    FauxCheck,
    /// Intermediately adaptive boson sampling
    Sample,
    /// Permanent of a matrix file
    Permanent,
    /// W-like spectral criterion for a POVM file
    PovmCheck,
    /// Fidelity of |W_K>^N with the symmetric subset state
    WstateFidelity,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = self.to_possible_value().expect("no skipped variants");
        f.write_str(name.get_name())
    }
}

#[derive(Args, Debug, Default)]
pub struct Flags {
    /// Number of parties
    #[arg(long = "K", global = true)]
    pub k: Option<usize>,

    /// Number of photons (W copies)
    #[arg(long = "N", global = true)]
    pub n: Option<usize>,

    /// Modes per party
    #[arg(long = "M", global = true)]
    pub m: Option<usize>,

    #[arg(long, global = true)]
    pub trials: Option<u64>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// JSON file with any of the flags below; flags given on the command line win
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Report path (default stdout)
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    /// Matrix, plan or POVM file, depending on the command
    #[arg(long, global = true)]
    pub matrix: Option<PathBuf>,

    /// Exact distribution check instead of sampling
    #[arg(long, global = true)]
    pub crosscheck: bool,

    /// Enumerate every branch instead of sampling
    #[arg(long, global = true)]
    pub exact: bool,

    /// Distribution table as CSV
    #[arg(long, global = true)]
    pub csv: Option<PathBuf>,

    /// Include wall-clock fields (the report is then no longer byte-stable)
    #[arg(long, global = true)]
    pub timing: bool,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    command: Option<Command>,
    #[serde(rename = "K")]
    k: Option<usize>,
    #[serde(rename = "N")]
    n: Option<usize>,
    #[serde(rename = "M")]
    m: Option<usize>,
    trials: Option<u64>,
    seed: Option<u64>,
    output: Option<PathBuf>,
    matrix: Option<PathBuf>,
    crosscheck: Option<bool>,
    exact: Option<bool>,
    csv: Option<PathBuf>,
    timing: Option<bool>,
}

#[derive(Serialize, Debug, Clone, PartialEq)]
pub struct Config {
    pub command: Command,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(rename = "M", skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<PathBuf>,
    #[serde(skip)]
    pub output: Option<PathBuf>,
    #[serde(skip)]
    pub csv: Option<PathBuf>,
    pub crosscheck: bool,
    pub exact: bool,
    #[serde(skip)]
    pub timing: bool,
}

#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<E: std::error::Error> From<E> for UsageError {
    fn from(e: E) -> Self {
        UsageError(e.to_string())
    }
}

/// Merges the optional config file with the command-line flags.
pub fn resolve(cli: Cli) -> Result<Config, UsageError> {
    let file = match &cli.args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<FileConfig>(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    if let Some(c) = file.command {
        if c != cli.command {
            return Err(UsageError(format!(
                "config file is for `{c}`, command is `{}`",
                cli.command
            )));
        }
    }
    let a = cli.args;
    Ok(Config {
        command: cli.command,
        k: a.k.or(file.k),
        n: a.n.or(file.n),
        m: a.m.or(file.m),
        trials: a.trials.or(file.trials),
        seed: a.seed.or(file.seed).unwrap_or(0),
        matrix: a.matrix.or(file.matrix),
        output: a.output.or(file.output),
        csv: a.csv.or(file.csv),
        crosscheck: a.crosscheck || file.crosscheck.unwrap_or(false),
        exact: a.exact || file.exact.unwrap_or(false),
        timing: a.timing || file.timing.unwrap_or(false),
    })
}
