//! Command-line front end.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::sync::Arc;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

use crate::analytics::{
    allocated_space_bits, approx_bits_at_least_one, coverage_bits, generate_table,
    min_bits_for_rate, Semantics, TableKind,
};
use crate::anonymizer::{Anonymizer, KdfAlgorithm, KdfGate, KdfParams};
use crate::error::Error;
use crate::pipeline::{
    anonymize_stream, ConfigFile, InputFormat, OutputFormat, SaltSource, ToolConfig, SALT_ENV,
};
use crate::simulator::{generate_table3, run_experiment, HashMode, Table3Options, TrialConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_STARTUP: i32 = 3;
pub const EXIT_PARTIAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "macanon",
    version,
    about = "Anonymize MAC addresses into k-anonymous hash buckets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Choose a digest width for a dataset size and tolerable collision rate
    Plan(PlanArgs),
    /// Print the digest-width reference tables
    Tables(TablesArgs),
    /// Replace MAC addresses in a stream with bucket identifiers
    Anonymize(AnonymizeArgs),
    /// Measure collision rates by Monte Carlo simulation
    Simulate(SimulateArgs),
    /// Size of the search space an attacker must enumerate
    AttackSurface(AttackArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SemanticsArg {
    OverallRate,
    AtLeastOne,
}

#[derive(Debug, Args)]
struct PlanArgs {
    /// Number of unique addresses expected in the dataset
    #[arg(long)]
    count: u64,
    /// Tolerable collision rate (or probability), in (0, 1)
    #[arg(long)]
    max_rate: f64,
    #[arg(long, value_enum, default_value = "overall-rate")]
    semantics: SemanticsArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TableFormat {
    Text,
    Csv,
}

#[derive(Debug, Args)]
struct TablesArgs {
    /// 1: birthday approximation, 2: exact collision rate. Both if omitted.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    which: Option<u8>,
    #[arg(long, value_enum, default_value = "text")]
    format: TableFormat,
}

#[derive(Debug, Args)]
struct KdfArgs {
    /// KDF memory cost in KiB
    #[arg(long)]
    memory_cost: Option<u32>,
    #[arg(long)]
    time_cost: Option<u32>,
    #[arg(long)]
    parallelism: Option<u32>,
    /// KDF output length in bytes
    #[arg(long)]
    output_length: Option<usize>,
    #[arg(long, value_enum)]
    algorithm: Option<AlgorithmArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Argon2d,
    Argon2i,
    Argon2id,
}

impl From<AlgorithmArg> for KdfAlgorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Argon2d => KdfAlgorithm::Argon2d,
            AlgorithmArg::Argon2i => KdfAlgorithm::Argon2i,
            AlgorithmArg::Argon2id => KdfAlgorithm::Argon2id,
        }
    }
}

impl KdfArgs {
    fn apply(&self, mut kdf: KdfParams) -> KdfParams {
        if let Some(v) = self.memory_cost {
            kdf.memory_cost = v;
        }
        if let Some(v) = self.time_cost {
            kdf.time_cost = v;
        }
        if let Some(v) = self.parallelism {
            kdf.parallelism = v;
        }
        if let Some(v) = self.output_length {
            kdf.output_length = v;
        }
        if let Some(v) = self.algorithm {
            kdf.algorithm = v.into();
        }
        kdf
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InputArg {
    Lines,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutputArg {
    Jsonl,
    Csv,
}

#[derive(Debug, Args)]
struct AnonymizeArgs {
    /// JSON configuration file; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// File holding the secret salt (hex text or raw bytes)
    #[arg(long, conflicts_with = "salt_hex")]
    salt_file: Option<PathBuf>,
    /// Secret salt as hex
    #[arg(long)]
    salt_hex: Option<String>,
    /// Accept salts shorter than 16 bytes (down to 8)
    #[arg(long)]
    allow_short_salt: bool,
    /// Extra deployment entropy appended to the salt
    #[arg(long)]
    extra_entropy: Option<String>,
    /// Digest width in bits
    #[arg(long)]
    bits: Option<u32>,
    #[command(flatten)]
    kdf: KdfArgs,
    #[arg(long, value_enum)]
    input_format: Option<InputArg>,
    /// CSV column holding the address
    #[arg(long)]
    mac_column: Option<String>,
    #[arg(long, value_enum)]
    output_format: Option<OutputArg>,
    /// Input file; standard input if omitted
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output file; standard output if omitted
    #[arg(long)]
    output: Option<PathBuf>,
    /// Upper bound on KDF memory in flight, in KiB
    #[arg(long)]
    memory_budget: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum HashArg {
    Fast,
    Kdf,
}

impl From<HashArg> for HashMode {
    fn from(h: HashArg) -> Self {
        match h {
            HashArg::Fast => HashMode::Fast,
            HashArg::Kdf => HashMode::Kdf,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportFormat {
    Text,
    Csv,
    Jsonl,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Unique addresses per round
    #[arg(long, required_unless_present = "table3")]
    count: Option<u64>,
    /// Digest width in bits
    #[arg(long, required_unless_present = "table3")]
    bits: Option<u32>,
    /// Run the whole 2^13..2^21 grid instead of one cell
    #[arg(long, conflicts_with_all = ["count", "bits"])]
    table3: bool,
    /// Dataset sizes for --table3
    #[arg(long, value_delimiter = ',', requires = "table3")]
    counts: Option<Vec<u64>>,
    #[arg(long, default_value_t = 100)]
    rounds: u32,
    #[arg(long, value_enum, default_value = "fast")]
    hash: HashArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "text")]
    format: ReportFormat,
    /// Include per-round counts in JSON lines output
    #[arg(long)]
    per_round: bool,
    /// Worker threads
    #[arg(long)]
    workers: Option<usize>,
    /// Upper bound on KDF memory in flight, in KiB
    #[arg(long)]
    memory_budget: Option<u64>,
    #[command(flatten)]
    kdf: KdfArgs,
}

#[derive(Debug, Args)]
#[group(skip)]
#[command(group(ArgGroup::new("space").required(true).multiple(false)))]
struct AttackArgs {
    /// Number of vendor prefixes that cover the target population
    #[arg(long, group = "space")]
    prefixes: Option<u64>,
    /// Fraction of all vendor prefixes that are allocated
    #[arg(long, group = "space")]
    fraction: Option<f64>,
    /// Planned digest width to compare against
    #[arg(long)]
    bits: Option<u32>,
}

/// Outcome of a command: exit code plus an optional message for stderr.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, err: impl std::fmt::Display) -> Self {
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

type CmdResult = Result<i32, Failure>;

fn usage(err: Error) -> Failure {
    Failure::new(EXIT_USAGE, err)
}

fn runtime(err: Error) -> Failure {
    let code = match err {
        Error::Validation(_) | Error::Domain(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    };
    Failure::new(code, err)
}

/// Parses `args` and runs the selected command; returns the process exit code.
pub fn run<I, T>(
    args: I,
    stdin: &mut dyn BufRead,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{rendered}");
            } else {
                let _ = write!(stderr, "{rendered}");
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Plan(a) => plan(a, stdout),
        Command::Tables(a) => tables(a, stdout),
        Command::Anonymize(a) => anonymize(a, stdin, stdout, stderr),
        Command::Simulate(a) => simulate(a, stdout),
        Command::AttackSurface(a) => attack_surface(a, stdout),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn io_fail(e: io::Error) -> Failure {
    Failure::new(EXIT_RUNTIME, e)
}

fn plan(a: PlanArgs, out: &mut dyn Write) -> CmdResult {
    let result = match a.semantics {
        SemanticsArg::OverallRate => min_bits_for_rate(a.count, a.max_rate),
        SemanticsArg::AtLeastOne => approx_bits_at_least_one(a.count, a.max_rate),
    }
    .map_err(usage)?;
    let what = match result.semantics {
        Semantics::OverallRate => "share of addresses that collide",
        Semantics::AtLeastOne => "probability of any collision",
    };
    writeln!(out, "{} bits (n = {})", result.bits, result.n).map_err(io_fail)?;
    writeln!(
        out,
        "predicted {what}: {:.3}% for {} addresses (limit {}, {})",
        result.predicted_rate * 100.0,
        a.count,
        a.max_rate,
        result.semantics
    )
    .map_err(io_fail)?;
    Ok(EXIT_OK)
}

fn tables(a: TablesArgs, out: &mut dyn Write) -> CmdResult {
    let kinds: Vec<TableKind> = match a.which {
        Some(n) => TableKind::from_number(n).into_iter().collect(),
        None => vec![TableKind::BirthdayBound, TableKind::CollisionRate],
    };
    for (i, kind) in kinds.into_iter().enumerate() {
        let table = generate_table(kind);
        let text = match a.format {
            TableFormat::Text => table.to_text(),
            TableFormat::Csv => table.to_csv(),
        };
        if i > 0 {
            writeln!(out).map_err(io_fail)?;
        }
        write!(out, "{text}").map_err(io_fail)?;
    }
    Ok(EXIT_OK)
}

fn resolve_tool_config(a: &AnonymizeArgs) -> Result<ToolConfig, Failure> {
    let startup = |e: Error| Failure::new(EXIT_STARTUP, e);
    let file = match &a.config {
        Some(path) => ConfigFile::load(path).map_err(startup)?,
        None => ConfigFile::default(),
    };
    let salt_source = if let Some(hex) = &a.salt_hex {
        SaltSource::InlineHex(hex.clone())
    } else if let Some(path) = &a.salt_file {
        SaltSource::File(path.clone())
    } else if let Some(hex) = &file.salt_hex {
        SaltSource::InlineHex(hex.clone())
    } else if let Some(path) = &file.salt_file {
        SaltSource::File(path.clone())
    } else {
        SaltSource::Env(SALT_ENV.to_owned())
    };
    let input_format = match a.input_format {
        Some(InputArg::Lines) => InputFormat::Lines,
        Some(InputArg::Csv) => InputFormat::Csv,
        None => file.input_format.unwrap_or_default(),
    };
    let output_format = match a.output_format {
        Some(OutputArg::Jsonl) => OutputFormat::Jsonl,
        Some(OutputArg::Csv) => OutputFormat::Csv,
        None => file.output_format.unwrap_or_default(),
    };
    Ok(ToolConfig {
        kdf: a.kdf.apply(file.kdf.unwrap_or_default()),
        digest_bits: a.bits.or(file.digest_bits).unwrap_or(24),
        salt_source,
        allow_short_salt: a.allow_short_salt || file.allow_short_salt.unwrap_or(false),
        extra_entropy: a
            .extra_entropy
            .clone()
            .or(file.extra_entropy)
            .map(String::into_bytes),
        input_format,
        mac_column: a
            .mac_column
            .clone()
            .or(file.mac_column)
            .unwrap_or_else(|| "mac".into()),
        output_format,
        memory_budget_kib: a.memory_budget.or(file.memory_budget_kib),
    })
}

fn anonymize(
    a: AnonymizeArgs,
    stdin: &mut dyn BufRead,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> CmdResult {
    let startup = |e: Error| Failure::new(EXIT_STARTUP, e);
    let config = resolve_tool_config(&a)?;
    let policy = config.policy().map_err(startup)?;
    let mut anonymizer = Anonymizer::new(policy).map_err(startup)?;
    if let Some(budget) = config.memory_budget_kib {
        anonymizer = anonymizer.with_gate(Arc::new(KdfGate::for_memory_budget(
            budget,
            config.kdf.memory_cost,
        )));
    }

    let mut file_in;
    let input: &mut dyn BufRead = match &a.input {
        Some(path) => {
            file_in = BufReader::new(File::open(path).map_err(|e| Failure::new(EXIT_STARTUP, e))?);
            &mut file_in
        }
        None => stdin,
    };
    let mut file_out;
    let output: &mut dyn Write = match &a.output {
        Some(path) => {
            file_out =
                BufWriter::new(File::create(path).map_err(|e| Failure::new(EXIT_STARTUP, e))?);
            &mut file_out
        }
        None => stdout,
    };

    let summary = anonymize_stream(&config, &anonymizer, input, output, &mut *stderr).map_err(
        |e| match e {
            Error::Validation(_) => Failure::new(EXIT_STARTUP, e),
            other => Failure::new(EXIT_RUNTIME, other),
        },
    )?;
    if summary.failed > 0 {
        let _ = writeln!(
            stderr,
            "{} of {} records could not be anonymized",
            summary.failed,
            summary.failed + summary.written
        );
        return Ok(EXIT_PARTIAL);
    }
    Ok(EXIT_OK)
}

fn simulate(a: SimulateArgs, out: &mut dyn Write) -> CmdResult {
    let kdf = a.kdf.apply(KdfParams::default());
    let text = if a.table3 {
        let mut options = Table3Options {
            rounds: a.rounds,
            hash_mode: a.hash.into(),
            base_seed: a.seed,
            kdf,
            workers: a.workers,
            memory_budget_kib: a.memory_budget,
            ..Table3Options::default()
        };
        if let Some(counts) = a.counts {
            options.counts = counts;
        }
        let table = generate_table3(&options).map_err(runtime)?;
        match a.format {
            ReportFormat::Text => table.to_text(),
            ReportFormat::Csv => table.to_csv(),
            ReportFormat::Jsonl => table.to_jsonl(a.per_round),
        }
    } else {
        let config = TrialConfig {
            m: a.count.unwrap_or_default(),
            digest_bits: a.bits.unwrap_or_default(),
            rounds: a.rounds,
            base_seed: a.seed,
            hash_mode: a.hash.into(),
            kdf,
            workers: a.workers,
            memory_budget_kib: a.memory_budget,
            ..TrialConfig::default()
        };
        let report = run_experiment(&config).map_err(runtime)?;
        match a.format {
            ReportFormat::Text => report.to_text(),
            ReportFormat::Csv => report.to_csv(),
            ReportFormat::Jsonl => report.to_jsonl(a.per_round),
        }
    };
    write!(out, "{text}").map_err(io_fail)?;
    Ok(EXIT_OK)
}

fn attack_surface(a: AttackArgs, out: &mut dyn Write) -> CmdResult {
    let (bits, scope) = match (a.prefixes, a.fraction) {
        (Some(k), None) => (
            coverage_bits(k).map_err(usage)?,
            format!("all addresses under {k} vendor prefixes"),
        ),
        (None, Some(f)) => (
            allocated_space_bits(f).map_err(usage)?,
            format!(
                "all addresses when {}% of vendor prefixes are allocated",
                f * 100.0
            ),
        ),
        _ => {
            return Err(Failure::new(
                EXIT_USAGE,
                "exactly one of --prefixes and --fraction is required",
            ))
        }
    };
    writeln!(out, "{bits} bits enumerate {scope}").map_err(io_fail)?;
    if let Some(planned) = a.bits {
        let line = if planned < bits {
            format!(
                "a {planned}-bit digest is below this search space: each bucket covers about 2^{} candidate addresses",
                bits - planned
            )
        } else {
            format!(
                "a {planned}-bit digest is not below this search space: buckets can be mapped back to single addresses"
            )
        };
        writeln!(out, "{line}").map_err(io_fail)?;
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut stdin = io::empty();
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("macanon").chain(args.iter().copied());
        let code = run(argv, &mut stdin, &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn plan_commands() {
        let (code, out, _) = call(&["plan", "--count", "10000", "--max-rate", "0.01"]);
        assert_eq!(code, 0);
        assert!(out.starts_with("20 bits"), "{out}");
        let (code, out, _) = call(&[
            "plan",
            "--count",
            "1000",
            "--max-rate",
            "0.05",
            "--semantics",
            "at-least-one",
        ]);
        assert_eq!(code, 0);
        assert!(out.starts_with("24 bits"), "{out}");
        assert_eq!(
            call(&["plan", "--count", "0", "--max-rate", "0.01"]).0,
            EXIT_USAGE
        );
        assert_eq!(
            call(&["plan", "--count", "10", "--max-rate", "1.5"]).0,
            EXIT_USAGE
        );
        assert_eq!(
            call(&["plan", "--count", "ten", "--max-rate", "0.1"]).0,
            EXIT_USAGE
        );
    }

    #[test]
    fn attack_surface_commands() {
        let (code, out, _) = call(&["attack-surface", "--fraction", "0.001"]);
        assert_eq!(code, 0);
        assert!(out.starts_with("39 bits"));
        let (_, out, _) = call(&["attack-surface", "--prefixes", "87", "--bits", "20"]);
        assert!(out.starts_with("31 bits"));
        assert!(out.contains("2^11"));
        let (_, out, _) = call(&["attack-surface", "--prefixes", "87", "--bits", "31"]);
        assert!(out.contains("not below"));
        assert_eq!(call(&["attack-surface", "--prefixes", "0"]).0, EXIT_USAGE);
        assert_eq!(call(&["attack-surface"]).0, EXIT_USAGE);
        assert_eq!(
            call(&["attack-surface", "--prefixes", "87", "--fraction", "0.1"]).0,
            EXIT_USAGE
        );
    }

    #[test]
    fn tables_command() {
        let (code, out, _) = call(&["tables", "--which", "2", "--format", "csv"]);
        assert_eq!(code, 0);
        assert!(out.contains("100,0.05,11\n"));
        let (_, out, _) = call(&["tables"]);
        assert!(out.contains("published grid shows 33 bits"));
        assert_eq!(call(&["tables", "--which", "3"]).0, EXIT_USAGE);
    }

    #[test]
    fn simulate_capacity_error() {
        let (code, _, err) = call(&["simulate", "--count", "9000000", "--bits", "13"]);
        assert_eq!(code, EXIT_RUNTIME);
        assert!(err.contains("cannot draw"));
        assert_eq!(call(&["simulate", "--count", "10"]).0, EXIT_USAGE);
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = call(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("attack-surface"));
    }
}
