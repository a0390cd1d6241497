//! `danku` — scenario runner and analytics for the contest-contract
//! simulator. Four verbs: `run` executes a scenario file, `prob-table`
//! prints the partition-manipulation probabilities, `gas-report` prints
//! storage costs, and `verify-commitment` checks a revealed data group
//! against a commitment digest.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use num_rational::Ratio;

use danku_core::chain::GasSchedule;
use danku_core::files;
use danku_core::hashing::{verify_reveal, DataGroup, Digest, Nonce};
use danku_core::report::{gas_report, probability_table};
use danku_core::scenario::{run_scenario, PreparedScenario, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "danku",
    version,
    about = "Deterministic contest-contract simulator and analytics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed override: replaces the scenario seed for `run` and seeds the
    /// Monte Carlo sampler for `prob-table`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the report to this file instead of standard output.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Report format: aligned text or line-delimited JSON records.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Records,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario file and emit its run report.
    Run {
        /// Path to the scenario document.
        config: PathBuf,
    },
    /// Partition-manipulation probability table.
    ProbTable {
        /// Group counts to tabulate.
        #[arg(long, value_delimiter = ',', default_values_t = vec![5usize, 10, 15, 20, 25, 30])]
        groups: Vec<usize>,
        /// Training fraction, as a fraction ("4/5") or decimal ("0.8").
        #[arg(long, default_value = "4/5", value_parser = parse_fraction)]
        tp: Ratio<u64>,
        /// Blocks the adversarial miner may grind over.
        #[arg(long, default_value_t = 5)]
        limit: u64,
        /// Monte Carlo trials per row; 0 skips the sampled columns.
        #[arg(long, default_value_t = 20_000)]
        trials: u64,
    },
    /// Storage gas and cost table.
    GasReport {
        /// Payload sizes in bytes.
        #[arg(long, value_delimiter = ',', default_values_t = vec![512u64, 1024, 11_594_722])]
        bytes: Vec<u64>,
    },
    /// Check a revealed data group and nonce against a commitment digest.
    VerifyCommitment {
        /// Data file holding the group's points (last column = label).
        groupfile: PathBuf,
        /// Nonce as decimal or 0x-prefixed hex.
        nonce: String,
        /// Expected digest as 64 hex digits (0x prefix optional).
        digest: String,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let output = match &cli.command {
        Command::Run { config } => run(config, cli.seed, cli.format)?,
        Command::ProbTable {
            groups,
            tp,
            limit,
            trials,
        } => {
            let table = probability_table(groups, *tp, *limit, *trials, cli.seed.unwrap_or(0))
                .context("probability table")?;
            match cli.format {
                Format::Text => table.render_text(),
                Format::Records => table.render_records(),
            }
        }
        Command::GasReport { bytes } => {
            let report = gas_report(&GasSchedule::default(), bytes).context("gas report")?;
            match cli.format {
                Format::Text => report.render_text(),
                Format::Records => report.render_records(),
            }
        }
        Command::VerifyCommitment {
            groupfile,
            nonce,
            digest,
        } => verify_commitment(groupfile, nonce, digest)?,
    };
    match &cli.out {
        Some(path) => std::fs::write(path, output)
            .with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{output}"),
    }
    Ok(())
}

fn run(config_path: &Path, seed: Option<u64>, format: Format) -> Result<String> {
    let mut config = ScenarioConfig::from_path(config_path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let base = config_path.parent().unwrap_or_else(|| Path::new("."));
    let prepared = PreparedScenario::prepare(config, base)?;
    let report = run_scenario(&prepared)?;
    Ok(match format {
        Format::Text => report.render_text(),
        Format::Records => report.render_records(),
    })
}

fn verify_commitment(groupfile: &Path, nonce_text: &str, digest_text: &str) -> Result<String> {
    let points = files::load_data_points(groupfile)?;
    let group = DataGroup { points };
    let nonce = Nonce::parse(nonce_text)?;
    let expected = Digest::from_hex(digest_text)?;
    if verify_reveal(&expected, &group, &nonce) {
        Ok(format!(
            "commitment verified: {} points hash to {expected}\n",
            group.points.len()
        ))
    } else {
        bail!(
            "commitment mismatch: the group in {} with nonce {} does not hash to {}",
            groupfile.display(),
            nonce_text,
            expected
        );
    }
}

/// Parses "4/5", "0.8", or "1" into a ratio.
fn parse_fraction(text: &str) -> Result<Ratio<u64>, String> {
    let bad = || format!("{text:?} is not a fraction like 4/5 or a decimal like 0.8");
    if let Some((num, den)) = text.split_once('/') {
        let num: u64 = num.trim().parse().map_err(|_| bad())?;
        let den: u64 = den.trim().parse().map_err(|_| bad())?;
        if den == 0 {
            return Err("fraction denominator must not be zero".to_string());
        }
        return Ok(Ratio::new(num, den));
    }
    if let Some((int, frac)) = text.split_once('.') {
        let int = if int.is_empty() { "0" } else { int };
        let int: u64 = int.parse().map_err(|_| bad())?;
        if frac.is_empty() || frac.len() > 18 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let scale = 10u64.pow(frac.len() as u32);
        let frac: u64 = frac.parse().map_err(|_| bad())?;
        let num = int
            .checked_mul(scale)
            .and_then(|v| v.checked_add(frac))
            .ok_or_else(bad)?;
        return Ok(Ratio::new(num, scale));
    }
    let int: u64 = text.trim().parse().map_err(|_| bad())?;
    Ok(Ratio::from_integer(int))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fraction_forms() {
        assert_eq!(parse_fraction("4/5").unwrap(), Ratio::new(4, 5));
        assert_eq!(parse_fraction("0.8").unwrap(), Ratio::new(4, 5));
        assert_eq!(parse_fraction("80/100").unwrap(), Ratio::new(4, 5));
        assert_eq!(parse_fraction(".5").unwrap(), Ratio::new(1, 2));
        assert_eq!(parse_fraction("1").unwrap(), Ratio::from_integer(1));
        assert!(parse_fraction("4/0").is_err());
        assert!(parse_fraction("x").is_err());
        assert!(parse_fraction("0.").is_err());
    }
}
