//! Library side of the `muse` binary: argument types, command
//! implementations, and the exit-code policy, kept callable from tests.

pub mod args;
pub mod bench;
pub mod commands;
pub mod config;
pub mod report;

use anyhow::Result;
use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use config::{defaults, KvConfig};

/// A bad flag combination (distinct from malformed data files).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 1;
        }
        if let Some(core) = cause.downcast_ref::<muse_core::Error>() {
            return match core {
                muse_core::Error::NonFinite { .. } => 3,
                _ => 2,
            };
        }
    }
    2
}

pub fn run(cli: Cli) -> Result<()> {
    let kv = KvConfig::load(cli.config.as_deref())?;
    let threads = kv.resolve(cli.threads, "threads", defaults::THREADS)?;
    match &cli.command {
        Command::TrainVocab(a) => commands::train_vocab(a, &kv),
        Command::Train(a) => commands::train(a, &kv),
        Command::Encode(a) => commands::encode(a, &kv, threads),
        Command::Index(a) => commands::index(a),
        Command::Search(a) => commands::search(a, &kv),
        Command::EvalSr(a) => commands::eval_sr(a, &kv, threads),
        Command::EvalReqa(a) => commands::eval_reqa(a, &kv, threads),
        Command::EvalBitext(a) => commands::eval_bitext(a, &kv, threads),
        Command::EvalSts(a) => commands::eval_sts(a, &kv, threads),
        Command::Probe(a) => commands::probe(a, &kv, threads),
        Command::Bench(a) => run_bench_command(a, &kv),
    }
}

fn run_bench_command(a: &args::BenchArgs, kv: &KvConfig) -> Result<()> {
    let lengths: Vec<usize> = match &a.lengths {
        Some(raw) => raw
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| UsageError(format!("bad --lengths {raw:?}")))?,
        None => bench::DEFAULT_LENGTHS.to_vec(),
    };
    let batch = kv.resolve(a.batch, "batch", 32)?;
    let repeats = kv.resolve(a.repeats, "repeats", 3)?;
    let seed = kv.resolve(a.seed, "seed", defaults::SEED)?;
    let max_len = lengths.iter().copied().max().unwrap_or(1);
    let models = match (&a.model, &a.vocab) {
        (Some(model_path), Some(vocab_path)) => {
            let m = commands::load_model(model_path, vocab_path)?;
            vec![(m.config.arch, m.config, m.params)]
        }
        (Some(_), None) | (None, Some(_)) => {
            anyhow::bail!(UsageError("--model and --vocab go together".into()))
        }
        (None, None) => match a.arch.as_str() {
            "transformer" => vec![bench::random_model(Arch::Transformer, max_len, seed)?],
            "cnn" => vec![bench::random_model(Arch::Cnn, max_len, seed)?],
            "both" => vec![
                bench::random_model(Arch::Transformer, max_len, seed)?,
                bench::random_model(Arch::Cnn, max_len, seed)?,
            ],
            other => anyhow::bail!(UsageError(format!("unknown --arch {other:?}"))),
        },
    };
    let report = bench::run_bench(&models, &lengths, batch, repeats, seed)?;
    std::fs::write(&a.output, serde_json::to_string_pretty(&report)? + "\n")?;
    for e in &report.entries {
        println!(
            "{} len {:>4}: {:>10.1} us/sentence, {:>12} activation bytes",
            e.arch, e.length, e.mean_us_per_sentence, e.activation_bytes
        );
    }
    println!("report -> {}", a.output.display());
    Ok(())
}

use muse_core::Arch;

/// Full CLI entry: parses args, runs, maps errors to exit codes.
pub fn main_from_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(argv) {
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            0
        }
        Err(e) => {
            let _ = e.print();
            1
        }
        Ok(cli) => match run(cli) {
            Ok(()) => 0,
            Err(err) => {
                eprintln!("error: {err:#}");
                exit_code(&err)
            }
        },
    }
}
