use clap::{Parser, Subcommand};
use epistack::pipeline::{
    self, artifacts::Layout, DirLock, PipelineConfig, PipelineError,
};
use std::path::PathBuf;
use std::process::ExitCode;

/// GWAS case/control analysis: quality control, logistic association scans,
/// stacked sparse-autoencoder pretraining and deep-classifier evaluation.
#[derive(Parser)]
#[command(name = "epistack", version, about)]
struct Cli {
    /// Pipeline configuration file (JSON). Missing fields take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory owning all stage artifacts.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Master seed overriding the configured one.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic cohort configured under `data`.
    Simulate,
    /// Orient alleles, run individual and marker QC, write splits.
    Qc,
    /// Per-variant logistic regression scan over the clean cohort.
    Scan,
    /// Train one baseline classifier per p-value threshold.
    Baseline {
        /// Restrict the sweep to a single threshold.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Pretrain the autoencoder stack and fine-tune per-depth classifiers.
    Stack {
        /// Restrict fine-tuning to the stack layer of this width.
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Re-evaluate a saved model on one split.
    Evaluate {
        /// Path to a model container written by `baseline` or `stack`.
        #[arg(long)]
        model: PathBuf,
        /// Split to evaluate: train, valid or test.
        #[arg(long, default_value = "test")]
        split: String,
        /// Decision threshold override (defaults to the stored one).
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Collate all artifacts into summary.json / summary.txt.
    Report,
    /// Run simulate, qc, scan, baseline, stack and report in order.
    Run,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut config = match &cli.config {
        Some(path) => {
            let bytes = std::fs::read(path)
                .map_err(|e| PipelineError::Validation(format!("cannot read {path:?}: {e}")))?;
            serde_json::from_slice(&bytes)
                .map_err(|e| PipelineError::Validation(format!("bad config {path:?}: {e}")))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(out) = &cli.output {
        config.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| PipelineError::Validation(format!("thread pool: {e}")))?;
    }
    let mut config = load_config(&cli)?;
    let out = config.output_dir.clone();
    let layout = Layout::new(&out);

    match cli.command {
        Command::Simulate => {
            let _lock = DirLock::acquire(&layout)?;
            pipeline::simulate_stage(&config, &out)?;
            eprintln!("dataset written under {}", layout.dataset_dir().display());
        }
        Command::Qc => {
            let _lock = DirLock::acquire(&layout)?;
            let report = pipeline::qc_stage(&config, &out)?;
            eprintln!(
                "qc: samples {} -> {}, variants {} -> {}",
                report.samples_before,
                report.samples_after,
                report.variants_before,
                report.variants_after
            );
        }
        Command::Scan => {
            let _lock = DirLock::acquire(&layout)?;
            let results = pipeline::scan_stage(&config, &out)?;
            eprintln!("scanned {} variants", results.len());
        }
        Command::Baseline { threshold } => {
            let _lock = DirLock::acquire(&layout)?;
            if let Some(t) = threshold {
                config.thresholds = vec![t];
            }
            let rows = pipeline::baseline_stage(&config, &out)?;
            for row in rows {
                match row.test {
                    Some(m) => eprintln!("p < {}: test auc {:.4}", row.label, m.auc),
                    None => eprintln!("p < {}: skipped", row.label),
                }
            }
        }
        Command::Stack { depth } => {
            let _lock = DirLock::acquire(&layout)?;
            if let Some(width) = depth {
                // keep the stack geometry down to the requested width
                config.stack_sizes.retain(|&s| s >= width);
                if config.stack_sizes.last() != Some(&width) {
                    return Err(PipelineError::Validation(format!(
                        "--depth {width} is not one of the configured stack sizes"
                    )));
                }
            }
            let rows = pipeline::stack_stage(&config, &out)?;
            for row in rows {
                if let Some(m) = row.test {
                    eprintln!("depth {}: test auc {:.4}", row.label, m.auc);
                }
            }
        }
        Command::Evaluate {
            model,
            split,
            threshold,
        } => {
            let report = pipeline::evaluate_model(&model, &out, &split, threshold)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::Report => {
            let summary = pipeline::report_stage(&config, &out)?;
            println!(
                "{}",
                std::fs::read_to_string(layout.summary_text()).unwrap_or_default()
            );
            let _ = summary;
        }
        Command::Run => {
            let summary = pipeline::run_full(&config, &out)?;
            println!(
                "{}",
                std::fs::read_to_string(layout.summary_text()).unwrap_or_default()
            );
            let _ = summary;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
