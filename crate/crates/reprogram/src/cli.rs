//! Command-line entry points.
//!
//! Exit codes: 0 success, 2 configuration error (bad flags, schema
//! violations, violated preconditions), 3 runtime failure.

use crate::blackbox::{serve_model, BlackboxEndpoint};
use crate::checkpoint;
use crate::config::RunConfig;
use crate::diagnostics::{input_gradient_l1, risk_bound_report};
use crate::error::{Error, Result};
use crate::model::{accuracy, train_source, ArchLayer, SourceTrainConfig};
use crate::output_map::OutputMap;
use crate::report;
use crate::train::{evaluate_accuracy, reprogram, reprogram_via_oracle, TrainMode};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

#[derive(Parser, Debug)]
#[command(
    name = "reprogram",
    version,
    about = "Repurpose a frozen classifier by training an input transform and an output mapping"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the source classifier and write its frozen checkpoint.
    TrainSource(RunArgs),
    /// Train the transform and output map against the frozen checkpoint;
    /// writes a report directory.
    Reprogram(RunArgs),
    /// Print target-task accuracy of a finished run.
    Evaluate(RunArgs),
    /// Print the risk-bound diagnostic table for a finished run
    /// (requires a one-to-one label mapping).
    Diagnose(RunArgs),
    /// Serve a checkpoint as a black-box endpoint over stdin/stdout.
    Serve {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Path to the JSON run config.
    #[arg(long)]
    config: PathBuf,
    /// Override every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the training mode.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<TrainMode>,
    /// Override the report directory.
    #[arg(long)]
    report_dir: Option<PathBuf>,
}

fn parse_mode(s: &str) -> std::result::Result<TrainMode, String> {
    match s {
        "white_box" => Ok(TrainMode::WhiteBox),
        "black_box" => Ok(TrainMode::BlackBox),
        other => Err(format!("unknown mode {other:?}, expected white_box or black_box")),
    }
}

/// Parse and run; returns the process exit code.
pub fn run_cli(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::TrainSource(args) => cmd_train_source(args),
        Command::Reprogram(args) => cmd_reprogram(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Diagnose(args) => cmd_diagnose(args),
        Command::Serve { checkpoint } => cmd_serve(&checkpoint),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_) | Error::Assumption(_) | Error::Capacity(_) => 2,
        // Serde errors surface from config parsing (schema violations);
        // data-file problems raise Data/Parse instead.
        Error::Json(_) => 2,
        _ => 3,
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    cfg.apply_overrides(args.seed, args.mode, args.report_dir.clone());
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train_source(args: RunArgs) -> Result<()> {
    let cfg = load_config(&args)?;
    let (train, test) = cfg.source_data()?;
    let arch = build_arch(train.dim(), &cfg.source_train.hidden, train.num_classes);
    let train_cfg = SourceTrainConfig {
        epochs: cfg.source_train.epochs,
        batch_size: cfg.source_train.batch_size,
        learning_rate: cfg.source_train.learning_rate,
        momentum: cfg.source_train.momentum,
        seed: cfg.source_train.seed,
    };
    let model = train_source(&train.samples, &train.labels, &arch, &train_cfg)?;
    if let Some(parent) = cfg.checkpoint.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    checkpoint::save(&model, &cfg.checkpoint)?;
    let train_acc = accuracy(&model.forward(&train.samples)?, &train.labels);
    let test_acc = accuracy(&model.forward(&test.samples)?, &test.labels);
    println!("checkpoint {}", cfg.checkpoint.display());
    println!("digest {}", model.param_digest());
    println!("train_accuracy {train_acc:.4}");
    println!("test_accuracy {test_acc:.4}");
    Ok(())
}

fn build_arch(input_dim: usize, hidden: &[usize], num_classes: usize) -> Vec<ArchLayer> {
    let mut arch = Vec::new();
    let mut width = input_dim;
    for &h in hidden {
        arch.push(ArchLayer::Dense { in_dim: width, out_dim: h });
        arch.push(ArchLayer::Relu);
        width = h;
    }
    arch.push(ArchLayer::Dense { in_dim: width, out_dim: num_classes });
    arch.push(ArchLayer::Softmax);
    arch
}

fn cmd_reprogram(args: RunArgs) -> Result<()> {
    let cfg = load_config(&args)?;
    let model = checkpoint::load(&cfg.checkpoint)?;
    let (train, test) = cfg.target_data()?;
    let digest_before = model.param_digest();

    let (transform, output_map, trace) = match (&cfg.blackbox_cmd, cfg.reprogram.mode) {
        (Some(cmd), TrainMode::BlackBox) => {
            let mut endpoint =
                BlackboxEndpoint::spawn(cmd, model.input_dim(), model.num_classes())?;
            let out = reprogram_via_oracle(&mut endpoint, &train, &test, &cfg.reprogram)?;
            endpoint.shutdown()?;
            out
        }
        _ => reprogram(&model, &train, &test, &cfg.reprogram)?,
    };

    let digest_after = model.param_digest();
    if digest_before != digest_after {
        return Err(Error::Frozen(format!("digest changed: {digest_before} -> {digest_after}")));
    }

    report::write_report(&cfg.report_dir, &cfg, &transform, &output_map, &trace)?;
    let last = trace.records.last().expect("at least one epoch");
    println!("report {}", cfg.report_dir.display());
    println!("digest {digest_after}");
    println!("final_loss {:.6}", last.loss);
    println!("train_accuracy {:.4}", last.train_acc);
    println!("test_accuracy {:.4}", last.test_acc);
    println!("queries {}", last.queries);
    Ok(())
}

fn cmd_evaluate(args: RunArgs) -> Result<()> {
    let cfg = load_config(&args)?;
    let model = checkpoint::load(&cfg.checkpoint)?;
    let (_, test) = cfg.target_data()?;
    let transform = report::read_transform(&cfg.report_dir)?;
    let output_map = report::read_output_map(&cfg.report_dir)?;
    let acc = evaluate_accuracy(&model, &transform, &output_map, &test)?;
    println!("test_accuracy {acc:.4}");
    Ok(())
}

fn cmd_diagnose(args: RunArgs) -> Result<()> {
    let cfg = load_config(&args)?;
    let model = checkpoint::load(&cfg.checkpoint)?;
    let transform = report::read_transform(&cfg.report_dir)?;
    let output_map = report::read_output_map(&cfg.report_dir)?;
    let mapping = match &output_map {
        OutputMap::Mapping(m) if m.is_one_to_one() => m.clone(),
        OutputMap::Mapping(_) => {
            return Err(Error::Assumption(
                "the risk bound assumes a one-to-one label mapping; this run used a many-to-one mapping"
                    .into(),
            ))
        }
        OutputMap::Head(_) => {
            return Err(Error::Assumption(
                "the risk bound assumes a one-to-one label mapping; this run used a linear head"
                    .into(),
            ))
        }
    };
    let (_, source_test) = cfg.source_data()?;
    let (_, target_test) = cfg.target_data()?;
    let bound = risk_bound_report(
        &model,
        &transform,
        &mapping,
        &source_test.samples,
        Some(&source_test.labels),
        &target_test,
        cfg.diagnostics.n_rep,
    )?;
    let table = report::write_risk_table(&cfg.report_dir, &bound)?;
    print!("{table}");

    if cfg.reprogram.mode == TrainMode::WhiteBox {
        let l1 = input_gradient_l1(
            cfg.reprogram.mode,
            &model,
            &transform,
            &output_map,
            &target_test.samples,
            &target_test.labels,
            cfg.reprogram.loss,
        )?;
        println!("input_gradient_l1 {l1:.6}");
    }
    Ok(())
}

fn cmd_serve(path: &Path) -> Result<()> {
    let model = checkpoint::load(path)?;
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let served = serve_model(&model, &mut stdin.lock(), &mut stdout.lock())?;
    eprintln!("served {served}");
    Ok(())
}
