//! `fusetune`: compile kernels, search their fusion spaces, enumerate legal
//! organisms, replay logs and check the bundled corpus.

mod commands;
mod input;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fusetune::search::{Strategy, ThreadMode};

#[derive(Debug, Parser)]
#[command(name = "fusetune", version, about = "Loop fusion and partitioning autotuner for matrix-algebra kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Emit C for one organism of a kernel (max fusion by default).
    Compile(CompileArgs),
    /// Run a search strategy and write best.c, log.jsonl and summary.json.
    Search(SearchArgs),
    /// List every legal organism of a small kernel.
    Enumerate(EnumerateArgs),
    /// Summarise a search log, optionally re-emitting its best kernel.
    Replay(ReplayArgs),
    /// Type-check, max-fuse and validate every kernel in a directory.
    Corpus(CorpusArgs),
}

#[derive(Debug, Args)]
struct CompileArgs {
    /// Kernel file, or the name of a bundled kernel.
    kernel: String,
    /// Fuse-set notation of the organism to emit.
    #[arg(long)]
    organism: Option<String>,
    /// Core count; also the thread count of partitions given without one.
    #[arg(long, default_value_t = 8)]
    cores: u32,
    #[arg(short, long, default_value = "kernel.c")]
    output: PathBuf,
    #[arg(long)]
    no_validate: bool,
}

#[derive(Debug, Args)]
struct SearchArgs {
    kernel: String,
    #[arg(long, default_value = "mfga")]
    strategy: Strategy,
    #[arg(long, value_enum, default_value_t = FitnessSource::Analytic)]
    fitness: FitnessSource,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cap on fresh fitness evaluations.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, default_value = "global")]
    threads_mode: ThreadMode,
    #[arg(long, default_value_t = 8)]
    cores: u32,
    /// `M,N` in dimension order, `M=..,N=..` by name, or one value for all.
    #[arg(long, default_value = "1000")]
    extents: String,
    /// Compiler command with `{cc}`, `{src}` and `{bin}` placeholders.
    #[arg(long)]
    cc_template: Option<String>,
    /// Timed repetitions per empirical evaluation.
    #[arg(long, default_value_t = 5)]
    reps: u32,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    max_generations: Option<u32>,
    #[arg(long)]
    mutation_rate: Option<f64>,
    /// Largest kernel the exhaustive and orthogonal strategies accept.
    #[arg(long)]
    exhaustive_ops: Option<usize>,
    /// Search the full legal space instead of operand-sharing fusions only.
    #[arg(long)]
    no_prune: bool,
    #[arg(long, default_value = "fusetune-out")]
    out: PathBuf,
    #[arg(long)]
    no_validate: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FitnessSource {
    Analytic,
    Empirical,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ThreadChoice {
    Const,
    Global,
    PerPartition,
}

#[derive(Debug, Args)]
struct EnumerateArgs {
    kernel: String,
    /// Fusion structures only, without partitions.
    #[arg(long)]
    no_partitions: bool,
    #[arg(long)]
    no_prune: bool,
    /// How partitions draw thread counts from 1..=max-threads; `const`
    /// fixes them at one.
    #[arg(long, value_enum, default_value_t = ThreadChoice::Const)]
    thread_space: ThreadChoice,
    #[arg(long, default_value_t = 8)]
    max_threads: u32,
    #[arg(long, default_value_t = 4)]
    max_ops: usize,
    /// Also print the naive digit-encoding size for the same configuration.
    #[arg(long)]
    digit_space: bool,
    /// Fusion depth used for the digit encoding.
    #[arg(long, default_value_t = 3)]
    depth: u32,
    /// Print the total only.
    #[arg(long)]
    count_only: bool,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    log: PathBuf,
    /// Kernel the log belongs to; required for `--emit`.
    #[arg(long)]
    kernel: Option<String>,
    /// Write C for the best logged organism.
    #[arg(long)]
    emit: Option<PathBuf>,
    #[arg(long)]
    no_validate: bool,
}

#[derive(Debug, Args)]
struct CorpusArgs {
    #[arg(long, default_value = "kernels")]
    dir: PathBuf,
    /// Restrict the run to one kernel by file stem.
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long, default_value_t = 8)]
    cores: u32,
}

/// Failure classes with their exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Invalid(String),
    Toolchain(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Invalid(_) => 2,
            Failure::Toolchain(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Invalid(m) | Failure::Toolchain(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Compile(a) => commands::compile(a),
        Command::Search(a) => commands::search(a),
        Command::Enumerate(a) => commands::enumerate(a),
        Command::Replay(a) => commands::replay(a),
        Command::Corpus(a) => commands::corpus(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
