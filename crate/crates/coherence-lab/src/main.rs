//! Command-line front end: each subcommand drives one experiment from
//! `coherence_lab::harness` and writes a deterministic CSV or JSON report.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use coherence_lab::envs::PadlockConfig;
use coherence_lab::harness::{
    run_dataset_gen, run_oracle_check, run_padlock, run_stock_trader, run_three_cards,
    run_tictactoe, OutputFormat, Report,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_PROPERTY_FAILURE: u8 = 3;

#[derive(Parser)]
#[command(name = "coherence-lab", version, about = "Exact experiments on goal-conditioned predictive agents")]
struct Cli {
    /// JSON config file; explicit command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (directory for dataset-gen); stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Iteration or fine-tuning rounds.
    #[arg(long, global = true)]
    rounds: Option<usize>,
    /// Games or episodes per evaluation batch.
    #[arg(long, global = true)]
    games: Option<usize>,
    /// Report format.
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Iterated goal-conditioning on the three-cards toy.
    ThreeCardsConvergence,
    /// Exact delusion numbers for the one-step stock trader.
    StockTrader,
    /// Exact and surrogate padlock delusion, with fine-tuning rounds.
    Padlock,
    /// Tic-tac-toe surrogate self-play across seeds and rounds.
    Tictactoe,
    /// Cross-check the conditioning operator on random instances.
    OracleCheck,
    /// Write the token datasets used by the surrogate experiments.
    DatasetGen,
}

/// Optional JSON config file; any present field replaces the built-in
/// default, and explicit flags replace both.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    rounds: Option<usize>,
    games: Option<usize>,
    format: Option<OutputFormat>,
    padlock: Option<PadlockFileConfig>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PadlockFileConfig {
    n_fixed: usize,
    n_random: usize,
    fixed_code: u32,
    horizon: usize,
}

struct Resolved {
    seed: u64,
    rounds: Option<usize>,
    games: Option<usize>,
    format: OutputFormat,
    padlock: PadlockConfig,
}

fn resolve(cli: &Cli) -> Result<Resolved, String> {
    let file: FileConfig = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("reading {}: {e}", path.display()))?;
            serde_json::from_str(&text)
                .map_err(|e| format!("parsing {}: {e}", path.display()))?
        }
        None => FileConfig::default(),
    };
    let padlock = match file.padlock {
        Some(p) => PadlockConfig::new(p.n_fixed, p.n_random, p.fixed_code, p.horizon),
        None => PadlockConfig::new(3, 2, 0b101, 7),
    };
    Ok(Resolved {
        seed: cli.seed.or(file.seed).unwrap_or(17),
        rounds: cli.rounds.or(file.rounds),
        games: cli.games.or(file.games),
        format: cli.format.map(OutputFormat::from).or(file.format).unwrap_or(OutputFormat::Csv),
        padlock,
    })
}

fn write_report(report: &Report, out: &Option<PathBuf>, format: OutputFormat) -> Result<(), String> {
    let text = report.render(format);
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| format!("writing {}: {e}", path.display())),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| format!("writing stdout: {e}")),
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("COHERENCE_LAB_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n >= 1 => {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .expect("thread pool is configured once, before any use");
            }
            _ => {
                eprintln!("COHERENCE_LAB_THREADS must be a positive integer, got {threads:?}");
                return ExitCode::from(EXIT_CONFIG);
            }
        }
    }
    let cli = Cli::parse();
    let resolved = match resolve(&cli) {
        Ok(r) => r,
        Err(message) => {
            eprintln!("config error: {message}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match run(&cli, &resolved) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli, cfg: &Resolved) -> Result<ExitCode, String> {
    match cli.command {
        Command::ThreeCardsConvergence => {
            let run = run_three_cards(cfg.rounds.unwrap_or(12));
            write_report(&run.report, &cli.out, cfg.format)?;
        }
        Command::StockTrader => {
            let run = run_stock_trader().map_err(|e| e.to_string())?;
            write_report(&run.report, &cli.out, cfg.format)?;
        }
        Command::Padlock => {
            let run = run_padlock(
                &cfg.padlock,
                cfg.rounds.unwrap_or(1),
                cfg.games.unwrap_or(20_000),
                cfg.seed,
            )
            .map_err(|e| e.to_string())?;
            write_report(&run.report, &cli.out, cfg.format)?;
        }
        Command::Tictactoe => {
            let seeds: Vec<u64> = (0..4).map(|i| cfg.seed + 100 * i).collect();
            let run = run_tictactoe(cfg.rounds.unwrap_or(2), cfg.games.unwrap_or(2_000), &seeds);
            eprintln!("enumerated {} complete games", run.n_games_enumerated);
            write_report(&run.report, &cli.out, cfg.format)?;
        }
        Command::OracleCheck => {
            let run = run_oracle_check(cfg.games.unwrap_or(200), cfg.seed);
            write_report(&run.report, &cli.out, cfg.format)?;
            for o in &run.outcomes {
                eprintln!(
                    "{}: {} on {} instances",
                    o.name,
                    if o.passed() { "pass" } else { "FAIL" },
                    o.instances
                );
            }
            if !run.passed {
                return Ok(ExitCode::from(EXIT_PROPERTY_FAILURE));
            }
        }
        Command::DatasetGen => {
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("datasets"));
            let report =
                run_dataset_gen(&dir, &cfg.padlock, cfg.games.unwrap_or(1_000), cfg.seed)
                    .map_err(|e| e.to_string())?;
            print!("{}", report.render(cfg.format));
        }
    }
    Ok(ExitCode::SUCCESS)
}
