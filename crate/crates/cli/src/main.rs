//! `al-seqtag`: run active-learning emulations, validate corpora, and report
//! or plot learning curves.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use al_seqtag::corpus::{ColumnMap, Scheme};
use al_seqtag::engine::{Experiment, ExperimentConfig, RunRecord};
use al_seqtag::metrics::LearningCurve;
use al_seqtag_cli::{plot, report, validate, CliError};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "al-seqtag", version, about = "Pool-based active learning emulation for sequence tagging")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every repeat of an experiment configuration.
    Run {
        /// JSON experiment configuration.
        config: PathBuf,
        /// Recompute runs even when records exist.
        #[arg(long)]
        force: bool,
        /// Override the base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides the configuration).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate learning curves and phase timings from a records directory.
    Report {
        dir: PathBuf,
        /// Where to write the per-iteration CSV (default: <dir>/report.csv).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Draw learning curves as SVG from a records directory or report CSV.
    Plot { input: PathBuf, output: PathBuf },
    /// Print corpus statistics and tag-scheme violations.
    Validate {
        corpus: PathBuf,
        #[arg(long, default_value = "IOB2")]
        scheme: Scheme,
        #[arg(long, value_enum, default_value_t = Columns::Auto)]
        columns: Columns,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Columns {
    Auto,
    Conll2003,
    WordPosTag,
    WordTag,
}

impl Columns {
    fn map(self) -> Option<ColumnMap> {
        match self {
            Columns::Auto => None,
            Columns::Conll2003 => Some(ColumnMap::CONLL2003),
            Columns::WordPosTag => Some(ColumnMap::WORD_POS_TAG),
            Columns::WordTag => Some(ColumnMap::WORD_TAG),
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("AL_SEQTAG_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("AL_SEQTAG_THREADS must be a non-negative integer, got {v:?}")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    Ok(())
}

fn write_curve_csv(curve: &LearningCurve, path: &Path) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Write { path: path.to_path_buf(), source: std::io::Error::other(e.to_string()) };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for p in &curve.points {
        w.serialize(p).map_err(io)?;
    }
    w.flush().map_err(|source| CliError::Write { path: path.to_path_buf(), source })
}

fn cmd_run(config: &Path, force: bool, seed: Option<u64>, out: Option<PathBuf>) -> Result<String, CliError> {
    let text = std::fs::read_to_string(config)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", config.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(s) = seed {
        cfg.base_seed = s;
    }
    let dir = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("runs"));
    cfg.output_dir = Some(dir.clone());
    cfg.validate()?;

    let exp = Experiment::prepare(cfg)?;
    let output = exp.run_all(force)?;
    let hash = exp.config_hash().to_string();
    let curve_path = dir.join(&hash).join("curve.csv");
    write_curve_csv(&output.curve, &curve_path)?;

    let mut s = String::new();
    let _ = writeln!(s, "config {hash}: {} run(s), {} training tokens", output.records.len(), exp.total_tokens());
    for r in &output.records {
        let status = if output.reused.contains(&r.run_seed) { "skipped (cached record reused)" } else { "completed" };
        let _ = writeln!(s, "seed {}: {status}", r.run_seed);
    }
    let _ = writeln!(s, "{:>9}  {:>8}  {:>16}", "iteration", "labeled", "successor F1");
    for p in &output.curve.points {
        let _ = writeln!(
            s,
            "{:>9}  {:>7.2}%  {:>7.2} ± {:<6.2}",
            p.iteration,
            100.0 * p.labeled_token_fraction,
            100.0 * p.mean_f1,
            100.0 * p.std_f1
        );
    }
    let _ = writeln!(s, "records: {}", dir.join(&hash).display());
    let _ = writeln!(s, "curve: {}", curve_path.display());
    Ok(s)
}

fn cmd_report(dir: &Path, csv: Option<PathBuf>) -> Result<String, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Data(format!("{} is not a directory", dir.display())));
    }
    let records = RunRecord::load_dir(dir)?;
    let table = report::render(&records)?;
    let csv = csv.unwrap_or_else(|| dir.join("report.csv"));
    report::write_csv(&report::rows(&records), &csv)?;
    Ok(format!("{table}\nCSV: {}\n", csv.display()))
}

fn dispatch(cli: Cli) -> Result<String, CliError> {
    configure_threads()?;
    match cli.command {
        Command::Run { config, force, seed, out } => cmd_run(&config, force, seed, out),
        Command::Report { dir, csv } => cmd_report(&dir, csv),
        Command::Plot { input, output } => {
            let n = plot::plot(&input, &output)?;
            Ok(format!("wrote {} ({n} curves)\n", output.display()))
        }
        Command::Validate { corpus, scheme, columns } => {
            let v = validate::validate_file(&corpus, columns.map(), scheme)?;
            let name = corpus.file_name().map_or_else(|| corpus.display().to_string(), |n| n.to_string_lossy().into());
            Ok(v.render(&name, scheme))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
