use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qmdp_core::analysis::{execute, Format, Mode, RunManifest};

/// Quantum MDP trajectory simulator.
#[derive(Parser)]
#[command(name = "qmdp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the dynamic or static circuit and decode trajectories.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = CircuitMode::Dynamic)]
        mode: CircuitMode,
        /// Exact distribution instead of sampling (the default without --shots).
        #[arg(long, conflicts_with = "shots")]
        analytic: bool,
    },
    /// Amplify trajectories with a target return using Grover search.
    Grover {
        #[command(flatten)]
        common: Common,
        /// Target return as a bit string; omitted, the highest reachable return is searched.
        #[arg(long = "return", value_name = "BITS")]
        target_return: Option<String>,
        /// Required start state as a bit string.
        #[arg(long, value_name = "BITS")]
        start: Option<String>,
        /// Required final state as a bit string.
        #[arg(long, value_name = "BITS")]
        end: Option<String>,
    },
    /// Enumerate every trajectory classically.
    Enumerate {
        #[command(flatten)]
        common: Common,
    },
    /// Check a trajectory corpus and extract its transition support.
    Ingest {
        #[command(flatten)]
        common: Common,
    },
    /// Total variation distance between two distribution files.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value = "qmdp-out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
        format: OutputFormat,
    },
}

#[derive(Args)]
struct Common {
    /// MDP configuration (TOML or JSON); the bundled example MDP when omitted.
    #[arg(long)]
    mdp: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    steps: usize,
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Corpus CSV (`id,bits`) used to label trajectories.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "qmdp-out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum CircuitMode {
    Dynamic,
    Static,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Csv => Format::Csv,
            OutputFormat::Json => Format::Json,
        }
    }
}

fn manifest(mode: Mode, common: Common) -> RunManifest {
    let mut m = RunManifest::new(mode, common.out);
    m.mdp_path = common.mdp;
    m.corpus_path = common.corpus;
    m.steps = common.steps;
    m.shots = common.shots;
    m.seed = common.seed;
    m.format = common.format.into();
    m
}

fn build(command: Command) -> RunManifest {
    match command {
        Command::Run { common, mode, .. } => {
            let mode = match mode {
                CircuitMode::Dynamic => Mode::Dynamic,
                CircuitMode::Static => Mode::Static,
            };
            manifest(mode, common)
        }
        Command::Grover {
            common,
            target_return,
            start,
            end,
        } => {
            let mut m = manifest(Mode::Grover, common);
            m.target_return = target_return;
            m.start_state = start;
            m.end_state = end;
            m
        }
        Command::Enumerate { common } => manifest(Mode::Enumerate, common),
        Command::Ingest { common } => manifest(Mode::Ingest, common),
        Command::Compare { a, b, out, format } => {
            let mut m = RunManifest::new(Mode::Compare, out);
            m.inputs = vec![a, b];
            m.format = format.into();
            m
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let manifest = build(cli.command);
    let result = execute(&manifest).and_then(|report| {
        report.write_to(&manifest.out)?;
        print!("{}", report.summary);
        Ok(report.failure)
    });
    match result {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(err)) | Err(err) => {
            eprintln!("qmdp: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
