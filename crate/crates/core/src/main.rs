use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use nilsoliton::document::{corpus_document, parse_algebra, parse_symmetric_matrix, AlgebraDocument};
use nilsoliton::pipeline::{certify, run, Command, Options, RunReport, DEFAULT_SEED, TOOL, VERSION};
use nilsoliton::{corpus, Error, Result};

/// Decide whether a nilpotent Lie algebra carries a nilsoliton metric.
///
/// Exit codes: 0 soliton found, 10 no soliton, 20 inconclusive, 1 input error.
#[derive(Parser, Debug)]
#[command(name = "nilsoliton", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Suppress the human summary on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    /// Seed for randomised steps.
    #[arg(long, global = true, env = "NILSOLITON_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Include wall-clock times in the report (makes output non-reproducible).
    #[arg(long, global = true)]
    timings: bool,
    /// Write the certificate, if any, to this file.
    #[arg(long, global = true, value_name = "PATH")]
    certificate_out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct Input {
    /// Algebra document (JSON); `-` or absent reads stdin.
    input: Option<PathBuf>,
    /// Use a built-in algebra instead of a file.
    #[arg(long, value_name = "NAME", conflicts_with = "input")]
    corpus: Option<String>,
}

#[derive(Args, Debug, Clone)]
struct SearchArgs {
    /// Frames sampled when the pre-Einstein spectrum repeats (0 disables the search).
    #[arg(long, default_value_t = 32)]
    search: usize,
    /// Worker threads for the search.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args, Debug, Clone)]
struct FlowArgs {
    #[arg(long, default_value_t = 20_000)]
    max_iter: usize,
    /// Gradient-norm tolerance.
    #[arg(long, default_value_t = 1e-11)]
    tol: f64,
    /// Start from a seeded random point at this distance from the origin.
    #[arg(long, default_value_t = 0.0)]
    start_radius: f64,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Check the Jacobi identity and nilpotency.
    Validate(Input),
    /// Derivation algebra.
    Der(Input),
    /// Pre-Einstein derivation.
    PreEinstein(Input),
    /// Ricci endomorphism and soliton fit.
    Ricci(Input),
    /// Weight of a symmetric direction.
    Nu {
        #[command(flatten)]
        input: Input,
        /// JSON file `{"dim": n, "rows": [[...]]}`.
        #[arg(long, value_name = "FILE")]
        lambda: PathBuf,
    },
    /// Convex-hull criterion, with a frame search for repeated spectra.
    Criterion {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Gradient flow of the energy.
    Flow {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        flow: FlowArgs,
    },
    /// Re-verify a certificate file (or a report containing one).
    Certify {
        certificate: PathBuf,
    },
    /// Full pipeline with a verdict.
    Report {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        search: SearchArgs,
        #[command(flatten)]
        flow: FlowArgs,
    },
    /// List built-in algebras, or print one as a document.
    Corpus {
        name: Option<String>,
    },
}

fn read_text(path: Option<&PathBuf>) -> Result<String> {
    let mut text = String::new();
    match path {
        Some(p) if p.as_os_str() != "-" => {
            text = std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
        }
        _ => {
            std::io::stdin().read_to_string(&mut text).map_err(|e| Error::Io(e.to_string()))?;
        }
    }
    Ok(text)
}

fn load(input: &Input) -> Result<(AlgebraDocument, Vec<String>)> {
    if let Some(name) = &input.corpus {
        return Ok((corpus_document(name)?, Vec::new()));
    }
    let parsed = parse_algebra(&read_text(input.input.as_ref())?)?;
    Ok((parsed.document, parsed.warnings))
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    error: ErrorBody<'a>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    code: &'a str,
    module: &'a str,
    message: String,
}

fn execute(cli: &Cli) -> Result<Option<RunReport>> {
    let mut opts = Options { seed: cli.seed, timings: cli.timings, ..Options::default() };
    let apply_search = |opts: &mut Options, s: &SearchArgs| {
        opts.search_budget = s.search;
        opts.workers = s.workers.max(1);
    };
    let apply_flow = |opts: &mut Options, f: &FlowArgs| {
        opts.flow.max_iter = f.max_iter;
        opts.flow.grad_tol = f.tol;
        opts.flow.seed = cli.seed;
        opts.start_radius = f.start_radius;
    };
    let (input, command) = match &cli.command {
        Cmd::Validate(i) => (i, Command::Validate),
        Cmd::Der(i) => (i, Command::Der),
        Cmd::PreEinstein(i) => (i, Command::PreEinstein),
        Cmd::Ricci(i) => (i, Command::Ricci),
        Cmd::Nu { input, lambda } => {
            opts.lambda = Some(parse_symmetric_matrix(&read_text(Some(lambda))?)?);
            (input, Command::Nu)
        }
        Cmd::Criterion { input, search } => {
            apply_search(&mut opts, search);
            (input, Command::Criterion)
        }
        Cmd::Flow { input, flow } => {
            apply_flow(&mut opts, flow);
            (input, Command::Flow)
        }
        Cmd::Report { input, search, flow } => {
            apply_search(&mut opts, search);
            apply_flow(&mut opts, flow);
            (input, Command::Report)
        }
        Cmd::Certify { certificate } => return certify(&read_text(Some(certificate))?, &opts).map(Some),
        Cmd::Corpus { name: None } => {
            for name in corpus::names() {
                println!("{name}");
            }
            return Ok(None);
        }
        Cmd::Corpus { name: Some(name) } => {
            println!("{}", corpus_document(name)?.render());
            return Ok(None);
        }
    };
    let (doc, warnings) = load(input)?;
    run(&doc, &warnings, command, &opts).map(Some)
}

fn command_name(cmd: &Cmd) -> &'static str {
    match cmd {
        Cmd::Validate(_) => "validate",
        Cmd::Der(_) => "der",
        Cmd::PreEinstein(_) => "pre-einstein",
        Cmd::Ricci(_) => "ricci",
        Cmd::Nu { .. } => "nu",
        Cmd::Criterion { .. } => "criterion",
        Cmd::Flow { .. } => "flow",
        Cmd::Certify { .. } => "certify",
        Cmd::Report { .. } => "report",
        Cmd::Corpus { .. } => "corpus",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage mistakes are input errors too; help and version are not.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(report)) => {
            if let (Some(path), Some(cert)) = (&cli.certificate_out, &report.certificate) {
                let text = serde_json::to_string_pretty(cert).expect("certificates serialise");
                if let Err(e) = std::fs::write(path, text + "\n") {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return ExitCode::from(1);
                }
            }
            // A closed pipe downstream is not an error worth a panic.
            let _ = writeln!(std::io::stdout().lock(), "{}", report.to_json());
            if !cli.quiet {
                for w in &report.warnings {
                    eprintln!("warning: {w}");
                }
                for line in &report.summary {
                    eprintln!("{line}");
                }
            }
            ExitCode::from(report.exit_code as u8)
        }
        Err(e) => {
            let body = ErrorReport {
                tool: TOOL,
                version: VERSION,
                command: command_name(&cli.command),
                error: ErrorBody { code: e.code(), module: e.module(), message: e.to_string() },
            };
            let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&body).expect("errors serialise"));
            if !cli.quiet {
                eprintln!("error [{}] {}: {e}", e.module(), e.code());
            }
            ExitCode::from(1)
        }
    }
}
