// SPDX-License-Identifier: MIT OR Apache-2.0

//! Command-line front end for the causelens pipeline.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use causelens::condition::{Condition, Language, Order};
use causelens::synth::SynthConfig;
use clap::{Args, Parser, Subcommand};

use crate::commands::Context;
use crate::config::{FileConfig, FlagOverrides, RunConfig, OUT_ENV};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "causelens", version, about = "Bilingual causal-chain attention analysis")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Lexicon JSON (default: bundled lexicon).
    #[arg(long, global = true)]
    pub lexicon: Option<PathBuf>,
    /// Trace bundle root, laid out as <traces>/<condition>/<sample_key>/.
    #[arg(long, global = true)]
    pub traces: Option<PathBuf>,
    /// Output directory (falls back to $CAUSELENS_OUT, then ./out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Comma-separated languages: en, zh
    #[arg(long, global = true, value_delimiter = ',')]
    pub languages: Option<Vec<Language>>,
    /// Comma-separated chain orders: forward, reversed
    #[arg(long, global = true, value_delimiter = ',')]
    pub orders: Option<Vec<Order>>,
    /// Anchor whose hidden states feed the cosine profiles.
    #[arg(long, global = true)]
    pub anchor: Option<String>,
    /// Fraction of variance kept before CCA, in (0, 1].
    #[arg(long, global = true)]
    pub variance_keep: Option<f64>,
    /// Aggregate RCAR over correctly answered samples only.
    #[arg(long, global = true)]
    pub correct_only: bool,
    /// Maximum worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Model id recorded in tables and forwarded to extraction.
    #[arg(long, global = true)]
    pub model: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the annotated dataset to dataset.jsonl.
    Generate,
    /// Map annotated spans to token indices for every trace.
    Align,
    /// Attention ratios, per-layer RCAR and condition trajectories.
    Rcar,
    /// Pairwise SVCCA between condition trajectory matrices.
    Svcca {
        #[arg(long, value_delimiter = ',')]
        conditions: Option<Vec<Condition>>,
    },
    /// Layerwise cosine similarity of anchor hidden states.
    Reprsim,
    /// Score answers and write accuracy tables.
    Eval,
    /// Write SVG figures and their CSV data.
    Report,
    /// generate, align, rcar, svcca, reprsim, eval and report in one run.
    Pipeline,
    /// Write deterministic synthetic trace bundles into --traces.
    SynthTraces(SynthArgs),
    /// Check trace bundles against the format invariants.
    Validate {
        /// Bundle directories (default: every bundle under --traces).
        paths: Vec<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 24)]
    pub layers: usize,
    #[arg(long, default_value_t = 16)]
    pub heads: usize,
    #[arg(long, default_value_t = 32)]
    pub hidden_dim: usize,
    /// Probability that a synthetic answer is correct.
    #[arg(long, default_value_t = 0.9)]
    pub accuracy: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Samples per domain and condition.
    #[arg(long, default_value_t = 5)]
    pub per_domain: usize,
}

impl GlobalArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let flags = FlagOverrides {
            lexicon: self.lexicon.clone(),
            languages: self.languages.clone(),
            orders: self.orders.clone(),
            traces: self.traces.clone(),
            out: self.out.clone(),
            anchor: self.anchor.clone(),
            variance_keep: self.variance_keep,
            correct_only: self.correct_only,
            jobs: self.jobs,
            model: self.model.clone(),
        };
        let env_out = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
        RunConfig::resolve(file, flags, env_out)
    }
}

/// Run a parsed command line; returns the JSON summary printed on success.
pub fn run(cli: &Cli) -> Result<serde_json::Value, CliError> {
    let cfg = cli.global.resolve()?;
    let ctx = Context::new(cfg)?;
    let summary = match &cli.command {
        Command::Generate => commands::generate(&ctx)?,
        Command::Align => commands::align(&ctx, &commands::load_analyses(&ctx)?)?,
        Command::Rcar => commands::rcar(&ctx, &commands::load_analyses(&ctx)?)?,
        Command::Svcca { conditions } => {
            commands::svcca_cmd(&ctx, &commands::load_analyses(&ctx)?, conditions.as_deref())?
        }
        Command::Reprsim => commands::reprsim(&ctx, &commands::load_analyses(&ctx)?)?,
        Command::Eval => commands::eval(&ctx, &commands::load_analyses(&ctx)?)?,
        Command::Report => commands::report(&ctx, &commands::load_analyses(&ctx)?)?,
        Command::Pipeline => commands::pipeline(&ctx)?,
        Command::SynthTraces(a) => {
            if !(0.0..=1.0).contains(&a.accuracy) {
                return Err(CliError::Invalid(format!("--accuracy must lie in [0, 1], got {}", a.accuracy)));
            }
            if a.layers == 0 || a.heads == 0 || a.hidden_dim == 0 {
                return Err(CliError::Invalid("--layers, --heads and --hidden-dim must be positive".into()));
            }
            let synth = SynthConfig {
                model_id: cli.global.model.clone().unwrap_or_else(|| "synthetic".into()),
                num_layers: a.layers,
                num_heads: a.heads,
                hidden_dim: a.hidden_dim,
                accuracy: a.accuracy,
                seed: a.seed,
            };
            // Bundles live outside the output directory; no report is written.
            return commands::synth_traces(&ctx, &synth, a.per_domain);
        }
        Command::Validate { paths } => {
            let (summary, invalid) = commands::validate(&ctx, paths)?;
            println!("{summary}");
            if invalid > 0 {
                return Err(CliError::ValidationFailed(invalid));
            }
            return Ok(serde_json::Value::Null);
        }
    };
    commands::write_report(&ctx)?;
    Ok(summary)
}
