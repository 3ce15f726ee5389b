//! `fcpipe`, the pipeline driver for scenario-specific function-calling data:
//! synthesize questions, extract call instructions, validate and assemble
//! datasets, evaluate model outputs, analyze tool confusion, and merge LoRA
//! adapters. Every stage writes a manifest with the content hashes of its
//! inputs and outputs so runs are auditable end to end.

mod config;
mod manifest;
mod stages;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::FileConfig;
use stages::Ctx;

#[derive(Parser)]
#[command(name = "fcpipe", version, about = "Function-calling training data pipeline")]
struct Cli {
    /// Run configuration file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed; flows into every random choice and every manifest.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for stage results and manifests.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress progress output on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    /// Print the stage summary as a JSON object on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate per-tool seed questions (optionally importing human seeds).
    Seeds {
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        pools: Option<PathBuf>,
        #[arg(long, value_name = "N")]
        per_tool: Option<usize>,
        /// JSONL of human-annotated seeds to append.
        #[arg(long)]
        human: Option<PathBuf>,
    },
    /// Apply the augmentation strategies to every seed.
    Augment {
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        pools: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<PathBuf>,
        /// Augmentations per AI seed.
        #[arg(long)]
        count: Option<usize>,
        /// Augmentations per human seed.
        #[arg(long)]
        human_count: Option<usize>,
    },
    /// Extract call instructions and propagate them along lineage.
    Extract {
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        pools: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<PathBuf>,
        #[arg(long)]
        augmented: Option<PathBuf>,
    },
    /// Validate question/instruction pairs and apply the retention quota.
    Validate {
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        questions: Option<PathBuf>,
        #[arg(long)]
        instructions: Option<PathBuf>,
        /// Seeds file, used to inherit provenance per sample.
        #[arg(long)]
        seeds: Option<PathBuf>,
        /// Keep at most N samples per tool.
        #[arg(long)]
        quota: Option<usize>,
        /// Skip the string-argument grounding check.
        #[arg(long)]
        no_grounding: bool,
    },
    /// Write the dataset in an interchange format with randomized tool lists.
    Assemble {
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        samples: Option<PathBuf>,
        /// sharegpt, alpaca, openai, or bfcl_v3.
        #[arg(long)]
        format: String,
        /// Show each sample only its answer tool plus K sampled distractors
        /// instead of the full catalog.
        #[arg(long, value_name = "K")]
        distractors: Option<usize>,
    },
    /// Split samples into train/eval with per-tool coverage.
    Split {
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long, default_value_t = 0.9)]
        fraction: f64,
        #[arg(long)]
        no_stratify: bool,
    },
    /// Emit the external-trainer configuration with the cutoff guard.
    TrainConfig {
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        samples: Option<PathBuf>,
        /// Skip estimation and use this maximum sample length.
        #[arg(long)]
        estimated_max_len: Option<usize>,
        /// Override a config field, e.g. --set cutoff_len=4096 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Judge model outputs against expected calls and aggregate stage rates.
    Eval {
        #[arg(long)]
        cases: PathBuf,
        #[arg(long)]
        outputs: PathBuf,
        /// Case-fold argument values when comparing.
        #[arg(long)]
        fold_values: bool,
        /// Compare tool names case-sensitively.
        #[arg(long)]
        no_fold_tools: bool,
    },
    /// Build the tool-selection confusion matrix and per-tool P/R/F1.
    Confusion {
        #[arg(long)]
        cases: PathBuf,
        #[arg(long)]
        verdicts: PathBuf,
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Additional models for the comparison table: name=verdicts.jsonl
        /// (repeatable).
        #[arg(long = "compare", value_name = "NAME=PATH")]
        compare: Vec<String>,
    },
    /// Merge LoRA adapters in weight space.
    MergeLora {
        /// Adapter bundle stems or header paths.
        #[arg(long, num_args = 1.., required = true)]
        adapters: Vec<PathBuf>,
        /// linear, cat, dare_linear, svd, ties, or ties_svd.
        #[arg(long)]
        strategy: String,
        /// Comma-separated weights, one per adapter.
        #[arg(long)]
        weights: String,
        #[arg(long)]
        density: Option<f64>,
        #[arg(long)]
        target_rank: Option<usize>,
    },
    /// Rewrite tool descriptions (long/short/none variants).
    VariantCatalog {
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// long, short, or none.
        #[arg(long)]
        variant: String,
        /// JSON map of tool name to short description (required for short).
        #[arg(long)]
        overrides: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<i32> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(file.rng_seed).unwrap_or(0);
    let out_dir = cli
        .out
        .clone()
        .or_else(|| file.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let ctx = Ctx {
        file,
        seed,
        out_dir,
        quiet: cli.quiet,
        json: cli.json,
    };

    match &cli.command {
        Command::Seeds {
            catalog,
            pools,
            per_tool,
            human,
        } => stages::seeds(&ctx, catalog, pools, *per_tool, human),
        Command::Augment {
            catalog,
            pools,
            seeds,
            count,
            human_count,
        } => stages::augment(&ctx, catalog, pools, seeds, *count, *human_count),
        Command::Extract {
            catalog,
            pools,
            seeds,
            augmented,
        } => stages::extract(&ctx, catalog, pools, seeds, augmented),
        Command::Validate {
            catalog,
            questions,
            instructions,
            seeds,
            quota,
            no_grounding,
        } => stages::validate(
            &ctx,
            catalog,
            questions,
            instructions,
            seeds,
            *quota,
            *no_grounding,
        ),
        Command::Assemble {
            catalog,
            samples,
            format,
            distractors,
        } => stages::assemble(&ctx, catalog, samples, format, *distractors),
        Command::Split {
            catalog,
            samples,
            fraction,
            no_stratify,
        } => stages::split(&ctx, catalog, samples, *fraction, *no_stratify),
        Command::TrainConfig {
            catalog,
            samples,
            estimated_max_len,
            set,
        } => stages::train_config(&ctx, catalog, samples, *estimated_max_len, set),
        Command::Eval {
            cases,
            outputs,
            fold_values,
            no_fold_tools,
        } => stages::eval_stage(&ctx, cases, outputs, *fold_values, *no_fold_tools),
        Command::Confusion {
            cases,
            verdicts,
            catalog,
            compare,
        } => stages::confusion(&ctx, cases, verdicts, catalog, compare),
        Command::MergeLora {
            adapters,
            strategy,
            weights,
            density,
            target_rank,
        } => stages::merge_lora(&ctx, adapters, strategy, weights, *density, *target_rank),
        Command::VariantCatalog {
            catalog,
            variant,
            overrides,
        } => stages::variant_catalog(&ctx, catalog, variant, overrides),
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(error) => {
            eprintln!("error: {error:#}");
            std::process::exit(1);
        }
    }
}
