//! Command-line definitions and config-file merging.
//!
//! Precedence is flags, then `FENSHSES_*` environment variables, then the
//! TOML file named by `--config`. The file holds one table per subcommand
//! whose keys are the long flag names:
//!
//! ```toml
//! [serve]
//! index = "codes.fidx"
//! listen = "0.0.0.0:9000"
//! ```

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::parser::ValueSource;
use clap::{ArgAction, ArgGroup, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use hamspace::SearchStrategy;

pub const ENV_PREFIX: &str = "FENSHSES_";

#[derive(Debug, Parser)]
#[command(
    name = "hamspace",
    version,
    about = "Exact search over binary codes in Hamming space"
)]
pub struct Cli {
    /// TOML file with per-subcommand defaults.
    #[arg(long, global = true, env = "FENSHSES_CONFIG", value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Uniform,
    Clustered,
}

fn parse_strategy(s: &str) -> Result<SearchStrategy, String> {
    s.parse::<SearchStrategy>().map_err(|e| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset as FBIN.
    Gen {
        #[arg(long, default_value_t = 500_000)]
        n: usize,
        #[arg(long, env = "FENSHSES_M", default_value_t = 128)]
        m: u32,
        #[arg(long, value_enum, default_value_t = ModelArg::Uniform)]
        model: ModelArg,
        /// Columns per planted cluster (clustered model).
        #[arg(long, default_value_t = 4)]
        block: u32,
        /// Per-column flip probability (clustered model).
        #[arg(long, default_value_t = 0.05)]
        flip: f64,
        #[arg(long, env = "FENSHSES_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(short, long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Optimize a bit permutation for a dataset and write the sidecar file.
    Permute {
        #[arg(long, env = "FENSHSES_DATA", value_name = "FILE")]
        data: PathBuf,
        /// Defaults to the dataset path with a `.perm` extension.
        #[arg(short, long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[arg(long, env = "FENSHSES_FILTER_WIDTH", default_value_t = hamspace::engine::DEFAULT_FILTER_WIDTH)]
        width: u32,
        #[arg(long, env = "FENSHSES_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Build a sub-code filter index (FIDX), optionally over permuted codes.
    Build {
        #[arg(long, env = "FENSHSES_DATA", value_name = "FILE")]
        data: PathBuf,
        #[arg(long, env = "FENSHSES_PERM", value_name = "FILE")]
        perm: Option<PathBuf>,
        #[arg(long, env = "FENSHSES_FILTER_WIDTH", default_value_t = hamspace::engine::DEFAULT_FILTER_WIDTH)]
        width: u32,
        /// Defaults to the dataset path with a `.fidx` extension.
        #[arg(short, long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Run one r-neighbor or k-NN query and print the JSON result.
    #[command(group(ArgGroup::new("mode").required(true)))]
    Query {
        #[command(flatten)]
        files: IndexFiles,
        /// Query code as hex, most significant digit first.
        #[arg(long)]
        code: String,
        #[arg(long, group = "mode")]
        radius: Option<u32>,
        #[arg(long, group = "mode")]
        k: Option<usize>,
        /// term_match, bit_op_scan, filtered or filtered_permuted.
        #[arg(long, env = "FENSHSES_STRATEGY", value_parser = parse_strategy)]
        strategy: Option<SearchStrategy>,
        /// Also build the per-position postings needed by term_match.
        #[arg(long, env = "FENSHSES_TERM_MATCH")]
        term_match: bool,
    },
    /// Run a latency benchmark described by a TOML config.
    Bench {
        /// Benchmark config; built-in defaults when omitted.
        #[arg(long, value_name = "FILE")]
        file: Option<PathBuf>,
        #[arg(short, long, value_name = "FILE")]
        output: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        csv: Option<PathBuf>,
        /// Also render a latency-vs-radius SVG.
        #[arg(long, value_name = "FILE")]
        plot: Option<PathBuf>,
        #[arg(long)]
        queries: Option<usize>,
        #[arg(long, env = "FENSHSES_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        throughput: bool,
    },
    /// Serve search over HTTP.
    Serve {
        #[command(flatten)]
        files: IndexFiles,
        #[arg(
            long,
            env = "FENSHSES_LISTEN",
            default_value = "127.0.0.1:8080",
            value_name = "HOST:PORT"
        )]
        listen: String,
        #[arg(long, env = "FENSHSES_TERM_MATCH")]
        term_match: bool,
    },
    /// Render a benchmark report as an SVG chart.
    Plot {
        #[arg(long, value_name = "FILE")]
        report: PathBuf,
        #[arg(short, long, value_name = "FILE")]
        out: PathBuf,
    },
}

/// Index plus the files it refers to.
#[derive(Debug, Clone, clap::Args)]
pub struct IndexFiles {
    #[arg(long, env = "FENSHSES_INDEX", value_name = "FILE")]
    pub index: PathBuf,
    /// Dataset the index was built from; defaults to the index path with a
    /// `.fbin` extension.
    #[arg(long, env = "FENSHSES_DATA", value_name = "FILE")]
    pub data: Option<PathBuf>,
    /// Permutation sidecar for permuted indexes; defaults to the index path
    /// with a `.perm` extension.
    #[arg(long, env = "FENSHSES_PERM", value_name = "FILE")]
    pub perm: Option<PathBuf>,
}

fn config_error(msg: String) -> clap::Error {
    Cli::command().error(ErrorKind::InvalidValue, msg)
}

fn scalar(key: &str, value: &toml::Value) -> Result<String, clap::Error> {
    match value {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        _ => Err(config_error(format!(
            "config key `{key}` must be a string or number"
        ))),
    }
}

/// Parses `args`, filling options not given as flags or environment
/// variables from the config file.
pub fn parse_args<I, T>(args: I) -> Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cmd = Cli::command();
    // Required options may come from the config file, so the first pass only
    // locates it and records where each given value came from.
    let matches = cmd
        .clone()
        .ignore_errors(true)
        .try_get_matches_from(&args)?;
    let Some(path) = matches.get_one::<PathBuf>("config") else {
        return Cli::from_arg_matches(&cmd.try_get_matches_from(&args)?);
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| config_error(format!("config {}: {e}", path.display())))?;

    let Some((name, sub_matches)) = matches.subcommand() else {
        return Cli::from_arg_matches(&cmd.try_get_matches_from(&args)?);
    };
    let sub_cmd = cmd
        .find_subcommand(name)
        .expect("matched subcommand exists");
    for (key, value) in &table {
        if !value.is_table() {
            return Err(config_error(format!(
                "config key `{key}` must live under a [subcommand] table"
            )));
        }
    }
    let Some(section) = table.get(name).and_then(|v| v.as_table()) else {
        return Cli::from_arg_matches(&cmd.try_get_matches_from(&args)?);
    };

    for (key, value) in section {
        let id = key.replace('-', "_");
        let arg = sub_cmd
            .get_arguments()
            .find(|a| a.get_id() == id.as_str() && a.get_long().is_some())
            .ok_or_else(|| config_error(format!("unknown key `{key}` in [{name}]")))?;
        if matches!(
            sub_matches.value_source(&id),
            Some(ValueSource::CommandLine | ValueSource::EnvVariable)
        ) {
            continue;
        }
        let flag = format!("--{}", arg.get_long().unwrap());
        match value {
            toml::Value::Boolean(true) => args.push(flag.into()),
            toml::Value::Boolean(false) => {}
            toml::Value::Array(items) => {
                for item in items {
                    args.push(flag.clone().into());
                    args.push(scalar(key, item)?.into());
                }
            }
            other => {
                args.push(flag.into());
                args.push(scalar(key, other)?.into());
            }
        }
    }
    let matches = Cli::command().try_get_matches_from(&args)?;
    Cli::from_arg_matches(&matches)
}
