//! The `opttree` command line: corpus training, decoding runs, benchmark
//! sweeps, and calibration reports.
//!
//! Every command honors `--seed`; all stochastic behavior replays exactly.
//! Exit codes: 0 on success, 1 for runtime failures, 2 for usage and input
//! errors (malformed flags, unreadable files, incompatible models).

use crate::bench::{
    compare_builders, correlate, expectation_pairs, run_benchmark, BenchReport, BenchRow,
};
use crate::builder::TreeShape;
use crate::decoding::{run_decoding, BuilderKind, DecodeConfig, StepResult};
use crate::oracle::{
    splitmix64, train_ngram, NgramModel, Oracle, SyntheticPair, SyntheticPairConfig, Vocabulary,
};
use crate::tree::TokenId;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable inputs, incompatible models: exit code 2.
    #[error("{0}")]
    Input(String),
    /// Failures after inputs were accepted, such as write errors: exit 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    fn input(err: impl std::fmt::Display) -> Self {
        CliError::Input(err.to_string())
    }

    fn runtime(err: impl std::fmt::Display) -> Self {
        CliError::Runtime(err.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "opttree",
    version,
    about = "Speculative decoding with adaptive draft trees"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an n-gram model from a text corpus.
    Train(TrainArgs),
    /// Generate tokens with speculative decoding.
    Decode(DecodeArgs),
    /// Compare tree builders on the same prompts.
    Bench(BenchArgs),
    /// Benchmark across node budgets, thresholds, or temperatures.
    Sweep(SweepArgs),
    /// Record expected versus realized acceptance lengths.
    Correlate(CorrelateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TokenizerKind {
    /// Raw bytes; 256-token vocabulary.
    Bytes,
    /// Whitespace-separated words; vocabulary from the corpus.
    Words,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// UTF-8 text corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Context length in tokens; 0 trains a unigram model.
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    /// Additive smoothing pseudo-count. Keep it well below 1/vocabulary,
    /// or sparse contexts flatten toward uniform.
    #[arg(long, default_value_t = 0.01)]
    pub smoothing: f64,
    #[arg(long, value_enum, default_value_t = TokenizerKind::Words)]
    pub tokenizer: TokenizerKind,
    /// Where to write the model file.
    #[arg(long)]
    pub out: PathBuf,
}

/// Which oracles a command runs against: trained model files or a seeded
/// synthetic pair.
#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Trained target model file.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Trained draft model file; defaults to the target model.
    #[arg(long)]
    pub draft: Option<PathBuf>,
    /// Use a synthetic target/draft pair instead of model files.
    #[arg(long)]
    pub synthetic: bool,
    /// Probability that the synthetic draft matches the target's
    /// distribution at any given context.
    #[arg(long, default_value_t = 0.8)]
    pub agreement: f64,
    /// Synthetic vocabulary size.
    #[arg(long, default_value_t = 48)]
    pub synthetic_vocab: usize,
    /// Context window of the synthetic pair.
    #[arg(long, default_value_t = 4)]
    pub synthetic_window: u32,
    /// Seed of the synthetic pair's distributions; independent of the
    /// decoding seed.
    #[arg(long, default_value_t = 0)]
    pub synthetic_seed: u64,
}

#[derive(Debug, Args)]
pub struct PromptArgs {
    /// Inline prompt; text, or space-separated token ids with --ids.
    #[arg(long)]
    pub prompt: Option<String>,
    /// File with one prompt per line.
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    /// Treat prompts as space-separated token ids and print ids back.
    #[arg(long)]
    pub ids: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BuilderChoice {
    Opt,
    Binary,
    Fixed,
    Sequence,
    None,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Draft-tree node budget.
    #[arg(long, default_value_t = 50)]
    pub nodes: usize,
    /// Expectation-gain stopping threshold.
    #[arg(long, default_value_t = 0.7)]
    pub threshold: f64,
    /// Draft-tree depth cap; defaults to the node budget.
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// 0 decodes greedily; positive values sample.
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
    #[arg(long, value_enum, default_value_t = BuilderChoice::Opt)]
    pub builder: BuilderChoice,
    /// Tree shape file for --builder fixed; a bundled 25-node shape is
    /// used when omitted.
    #[arg(long)]
    pub shape: Option<PathBuf>,
    /// Parallel chains for --builder sequence.
    #[arg(long, default_value_t = 5)]
    pub seq_k: usize,
    /// Tokens per chain for --builder sequence.
    #[arg(long, default_value_t = 5)]
    pub seq_m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl GenArgs {
    fn builder_kind(&self, choice: BuilderChoice) -> Result<BuilderKind, CliError> {
        Ok(match choice {
            BuilderChoice::Opt => BuilderKind::Opt,
            BuilderChoice::Binary => BuilderKind::Binary,
            BuilderChoice::Fixed => match &self.shape {
                Some(path) => {
                    let text = read_to_string(path)?;
                    BuilderKind::Fixed(TreeShape::from_json(&text).map_err(CliError::input)?)
                }
                None => BuilderKind::Fixed(TreeShape::default_25()),
            },
            BuilderChoice::Sequence => BuilderKind::Sequence {
                chains: self.seq_k,
                length: self.seq_m,
            },
            BuilderChoice::None => BuilderKind::None,
        })
    }

    fn decode_config(&self, max_new_tokens: usize) -> Result<DecodeConfig, CliError> {
        let cfg = DecodeConfig {
            builder: self.builder_kind(self.builder)?,
            node_budget: self.nodes,
            threshold: self.threshold,
            max_depth: self.max_depth,
            temperature: self.temperature,
            max_new_tokens,
            seed: self.seed,
        };
        cfg.validate().map_err(CliError::input)?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[command(flatten)]
    pub models: ModelArgs,
    #[command(flatten)]
    pub prompt: PromptArgs,
    #[command(flatten)]
    pub gen: GenArgs,
    #[arg(long, default_value_t = 64)]
    pub max_new_tokens: usize,
    /// Directory for the step log and run manifest; stdout only when
    /// omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Step log file name inside --out.
    #[arg(long, default_value = "steps.jsonl")]
    pub log: String,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub models: ModelArgs,
    #[command(flatten)]
    pub prompt: PromptArgs,
    #[command(flatten)]
    pub gen: GenArgs,
    /// Builders to compare.
    #[arg(long, value_enum, value_delimiter = ',',
          default_values_t = [BuilderChoice::Opt, BuilderChoice::Binary,
                              BuilderChoice::Fixed, BuilderChoice::Sequence,
                              BuilderChoice::None])]
    pub builders: Vec<BuilderChoice>,
    #[arg(long, default_value_t = 64)]
    pub max_new_tokens: usize,
    /// Directory for bench.csv, bench.json, and the run manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub models: ModelArgs,
    #[command(flatten)]
    pub prompt: PromptArgs,
    #[command(flatten)]
    pub gen: GenArgs,
    /// Node budgets to sweep, ascending.
    #[arg(long, value_delimiter = ',')]
    pub budgets: Option<Vec<usize>>,
    /// Stopping thresholds to sweep.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    /// Temperatures to sweep.
    #[arg(long, value_delimiter = ',')]
    pub temperatures: Option<Vec<f64>>,
    /// Worker threads for sweep points.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value_t = 64)]
    pub max_new_tokens: usize,
    /// Directory for sweep.csv, sweep.json, and the run manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[command(flatten)]
    pub models: ModelArgs,
    #[command(flatten)]
    pub prompt: PromptArgs,
    #[command(flatten)]
    pub gen: GenArgs,
    /// Decoding steps to record before aggregating.
    #[arg(long, default_value_t = 8000)]
    pub steps: usize,
    #[arg(long, default_value_t = 64)]
    pub max_new_tokens: usize,
    /// Directory for grid.csv, grid.json, and the run manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Everything needed to replay a run, timings aside.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub config: ConfigEcho,
    pub oracles: serde_json::Value,
    pub inputs: serde_json::Value,
    pub outputs: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct ConfigEcho {
    pub builder: String,
    pub node_budget: usize,
    pub threshold: f64,
    pub max_depth: Option<usize>,
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub seed: u64,
}

impl ConfigEcho {
    fn from(cfg: &DecodeConfig) -> Self {
        ConfigEcho {
            builder: cfg.builder.label().to_string(),
            node_budget: cfg.node_budget,
            threshold: cfg.threshold,
            max_depth: cfg.max_depth,
            temperature: cfg.temperature,
            max_new_tokens: cfg.max_new_tokens,
            seed: cfg.seed,
        }
    }
}

/// The two oracles a command runs plus what the manifest should say about
/// them. Text prompts need a vocabulary, so synthetic pairs only accept
/// token-id prompts.
struct LoadedOracles {
    target: Box<dyn Oracle>,
    draft: Box<dyn Oracle>,
    vocab: Option<Vocabulary>,
    descriptor: serde_json::Value,
}

fn read_to_string(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn load_oracles(args: &ModelArgs) -> Result<LoadedOracles, CliError> {
    if args.synthetic && args.target.is_some() {
        return Err(CliError::Input(
            "--synthetic and --target are mutually exclusive".into(),
        ));
    }
    if args.synthetic {
        let cfg = SyntheticPairConfig {
            vocab_size: args.synthetic_vocab,
            context_window: args.synthetic_window as usize,
            seed: args.synthetic_seed,
            agreement: args.agreement,
            ..SyntheticPairConfig::default()
        };
        let pair = SyntheticPair::new(cfg).map_err(CliError::input)?;
        let descriptor = serde_json::json!({
            "kind": "synthetic",
            "agreement": args.agreement,
            "vocab_size": args.synthetic_vocab,
            "context_window": args.synthetic_window,
            "seed": args.synthetic_seed,
        });
        return Ok(LoadedOracles {
            target: Box::new(pair.target()),
            draft: Box::new(pair.draft()),
            vocab: None,
            descriptor,
        });
    }
    let target_path = args
        .target
        .as_ref()
        .ok_or_else(|| CliError::Input("pass --target MODEL or --synthetic".into()))?;
    let target = NgramModel::from_json(&read_to_string(target_path)?).map_err(CliError::input)?;
    let draft = match &args.draft {
        Some(path) => NgramModel::from_json(&read_to_string(path)?).map_err(CliError::input)?,
        None => target.clone(),
    };
    if target.vocab() != draft.vocab() {
        return Err(CliError::Input(format!(
            "target and draft vocabularies differ ({} vs {} tokens)",
            target.vocab().size(),
            draft.vocab().size()
        )));
    }
    let descriptor = serde_json::json!({
        "kind": "ngram",
        "target": {
            "path": target_path.display().to_string(),
            "order": target.order(),
            "smoothing": target.smoothing(),
            "contexts": target.context_count(),
        },
        "draft": {
            "path": args.draft.as_ref().unwrap_or(target_path).display().to_string(),
            "order": draft.order(),
            "smoothing": draft.smoothing(),
            "contexts": draft.context_count(),
        },
        "vocab_size": target.vocab().size(),
    });
    let vocab = target.vocab().clone();
    Ok(LoadedOracles {
        target: Box::new(target),
        draft: Box::new(draft),
        vocab: Some(vocab),
        descriptor,
    })
}

impl LoadedOracles {
    fn encode_prompt(&self, line: &str, ids: bool) -> Result<Vec<TokenId>, CliError> {
        let tokens = if ids {
            line.split_whitespace()
                .map(|w| {
                    w.parse::<u32>()
                        .map(TokenId)
                        .map_err(|_| CliError::Input(format!("bad token id {w:?}")))
                })
                .collect::<Result<Vec<_>, _>>()?
        } else {
            match &self.vocab {
                Some(vocab) => vocab.encode(line).map_err(CliError::input)?,
                None => {
                    return Err(CliError::Input(
                        "synthetic oracles have no text vocabulary; pass token ids with --ids"
                            .into(),
                    ))
                }
            }
        };
        if tokens.is_empty() {
            return Err(CliError::Input(format!("prompt {line:?} has no tokens")));
        }
        let vocab_size = self.target.vocab_size();
        if let Some(bad) = tokens.iter().find(|t| t.index() >= vocab_size) {
            return Err(CliError::Input(format!(
                "token id {bad} is out of range for a vocabulary of {vocab_size}"
            )));
        }
        Ok(tokens)
    }

    fn render(&self, tokens: &[TokenId], ids: bool) -> String {
        if ids || self.vocab.is_none() {
            return tokens
                .iter()
                .map(|t| t.index().to_string())
                .collect::<Vec<_>>()
                .join(" ");
        }
        self.vocab.as_ref().expect("checked above").decode(tokens)
    }
}

/// Reads prompts per the flags: an inline prompt, or a prompts file with
/// blank lines skipped.
fn load_prompts(args: &PromptArgs, oracles: &LoadedOracles) -> Result<Vec<Vec<TokenId>>, CliError> {
    let lines: Vec<String> = match (&args.prompt, &args.prompts) {
        (Some(_), Some(_)) => {
            return Err(CliError::Input(
                "--prompt and --prompts are mutually exclusive".into(),
            ))
        }
        (Some(text), None) => vec![text.clone()],
        (None, Some(path)) => read_to_string(path)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(str::to_string)
            .collect(),
        (None, None) => {
            return Err(CliError::Input(
                "pass --prompt TEXT or --prompts FILE".into(),
            ))
        }
    };
    if lines.is_empty() {
        return Err(CliError::Input("the prompts file holds no prompts".into()));
    }
    lines
        .iter()
        .map(|line| oracles.encode_prompt(line, args.ids))
        .collect()
}

fn write_output(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(manifest).expect("manifest serialization cannot fail");
    write_output(dir, "manifest.json", &format!("{json}\n"))
}

#[derive(Debug, Serialize)]
struct StepLogRecord {
    prompt: usize,
    step: usize,
    acceptance_length: usize,
    accepted: Vec<u32>,
    bonus: u32,
    expectation: f64,
    tree_nodes: usize,
    tree_depth: usize,
    drafting_steps: usize,
    /// Wall-clock timings; the only non-deterministic fields in the log.
    draft_us: u128,
    verify_us: u128,
}

fn step_log(runs: &[Vec<StepResult>]) -> String {
    let mut out = String::new();
    for (prompt, steps) in runs.iter().enumerate() {
        for (step, s) in steps.iter().enumerate() {
            let record = StepLogRecord {
                prompt,
                step,
                acceptance_length: s.acceptance_length(),
                accepted: s.verify.accepted.iter().map(|t| t.0).collect(),
                bonus: s.verify.bonus.0,
                expectation: s.expectation,
                tree_nodes: s.tree_nodes,
                tree_depth: s.tree_depth,
                drafting_steps: s.drafting_steps,
                draft_us: s.draft_time.as_micros(),
                verify_us: s.verify_time.as_micros(),
            };
            let line = serde_json::to_string(&record).expect("record serialization cannot fail");
            out.push_str(&line);
            out.push('\n');
        }
    }
    out
}

fn input_echo(models: &ModelArgs, prompt: &PromptArgs) -> serde_json::Value {
    serde_json::json!({
        "target": models.target.as_ref().map(|p| p.display().to_string()),
        "draft": models.draft.as_ref().map(|p| p.display().to_string()),
        "prompt": prompt.prompt,
        "prompts": prompt.prompts.as_ref().map(|p| p.display().to_string()),
        "ids": prompt.ids,
    })
}

fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let text = read_to_string(&args.corpus)?;
    let (vocab, corpus) = match args.tokenizer {
        TokenizerKind::Bytes => {
            let vocab = Vocabulary::bytes();
            let tokens = vocab.encode(&text).map_err(CliError::input)?;
            (vocab, tokens)
        }
        TokenizerKind::Words => {
            let vocab = Vocabulary::from_words(&text);
            let tokens = vocab.encode(&text).map_err(CliError::input)?;
            (vocab, tokens)
        }
    };
    let model = train_ngram(&corpus, args.order, args.smoothing, vocab).map_err(CliError::input)?;
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)
                .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        }
    }
    std::fs::write(&args.out, model.to_json())
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", args.out.display())))?;
    println!(
        "trained order-{} model: vocabulary {}, contexts {}, written to {}",
        model.order(),
        model.vocab().size(),
        model.context_count(),
        args.out.display()
    );
    Ok(())
}

fn cmd_decode(args: &DecodeArgs) -> Result<(), CliError> {
    let oracles = load_oracles(&args.models)?;
    let prompts = load_prompts(&args.prompt, &oracles)?;
    if args.max_new_tokens == 0 {
        for _ in &prompts {
            println!();
        }
        return Ok(());
    }
    let cfg = args.gen.decode_config(args.max_new_tokens)?;
    let mut runs = Vec::new();
    for (i, prompt) in prompts.iter().enumerate() {
        let mut prompt_cfg = cfg.clone();
        prompt_cfg.seed = splitmix64(cfg.seed ^ splitmix64(i as u64 + 1));
        let (generated, steps) = run_decoding(
            prompt,
            oracles.target.as_ref(),
            oracles.draft.as_ref(),
            &prompt_cfg,
        )
        .map_err(CliError::runtime)?;
        println!("{}", oracles.render(&generated, args.prompt.ids));
        runs.push(steps);
    }
    if let Some(dir) = &args.out {
        write_output(dir, &args.log, &step_log(&runs))?;
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: "decode".into(),
            seed: cfg.seed,
            config: ConfigEcho::from(&cfg),
            oracles: oracles.descriptor.clone(),
            inputs: input_echo(&args.models, &args.prompt),
            outputs: vec![args.log.clone(), "manifest.json".into()],
        };
        write_manifest(dir, &manifest)?;
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    if args.builders.is_empty() {
        return Err(CliError::Input("pass at least one builder".into()));
    }
    let oracles = load_oracles(&args.models)?;
    let prompts = load_prompts(&args.prompt, &oracles)?;
    let base = args.gen.decode_config(args.max_new_tokens)?;
    let builders = args
        .builders
        .iter()
        .map(|&choice| args.gen.builder_kind(choice))
        .collect::<Result<Vec<_>, _>>()?;
    let report = compare_builders(
        &prompts,
        oracles.target.as_ref(),
        oracles.draft.as_ref(),
        &base,
        builders,
    )
    .map_err(CliError::runtime)?;
    print!("{}", report.to_csv());
    if let Some(dir) = &args.out {
        write_report(dir, "bench", &report)?;
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: "bench".into(),
            seed: base.seed,
            config: ConfigEcho::from(&base),
            oracles: oracles.descriptor.clone(),
            inputs: input_echo(&args.models, &args.prompt),
            outputs: vec![
                "bench.csv".into(),
                "bench.json".into(),
                "manifest.json".into(),
            ],
        };
        write_manifest(dir, &manifest)?;
    }
    Ok(())
}

fn write_report(dir: &Path, stem: &str, report: &BenchReport) -> Result<(), CliError> {
    write_output(dir, &format!("{stem}.csv"), &report.to_csv())?;
    write_output(
        dir,
        &format!("{stem}.json"),
        &format!("{}\n", report.to_json()),
    )
}

/// Runs one benchmark per sweep configuration, farming points out to
/// `jobs` workers. Rows keep the input order, so the report is identical
/// whatever the parallelism.
fn run_sweep_points(
    prompts: &[Vec<TokenId>],
    target: &dyn Oracle,
    draft: &dyn Oracle,
    configs: &[DecodeConfig],
    jobs: usize,
) -> Result<BenchReport, CliError> {
    let jobs = jobs.max(1).min(configs.len().max(1));
    if jobs == 1 {
        let mut rows = Vec::new();
        for cfg in configs {
            rows.push(
                run_benchmark(prompts, target, draft, cfg)
                    .map_err(CliError::runtime)?
                    .0,
            );
        }
        return Ok(BenchReport { rows });
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<BenchRow, String>>> = Vec::new();
    slots.resize_with(configs.len(), || None);
    let slots = std::sync::Mutex::new(slots);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= configs.len() {
                    break;
                }
                let result = run_benchmark(prompts, target, draft, &configs[i])
                    .map(|(row, _)| row)
                    .map_err(|e| e.to_string());
                slots.lock().expect("no panics hold this lock")[i] = Some(result);
            });
        }
    });
    let slots = slots.into_inner().expect("workers have finished");
    let mut rows = Vec::with_capacity(configs.len());
    for slot in slots {
        match slot.expect("every index was claimed by a worker") {
            Ok(row) => rows.push(row),
            Err(e) => return Err(CliError::Runtime(e)),
        }
    }
    Ok(BenchReport { rows })
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let oracles = load_oracles(&args.models)?;
    let prompts = load_prompts(&args.prompt, &oracles)?;
    let base = args.gen.decode_config(args.max_new_tokens)?;
    let axes = [
        args.budgets.is_some(),
        args.thresholds.is_some(),
        args.temperatures.is_some(),
    ];
    if axes.iter().filter(|&&s| s).count() != 1 {
        return Err(CliError::Input(
            "pass exactly one of --budgets, --thresholds, --temperatures".into(),
        ));
    }
    let configs: Vec<DecodeConfig> = if let Some(budgets) = &args.budgets {
        if budgets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::Input("budgets must be strictly ascending".into()));
        }
        budgets
            .iter()
            .map(|&node_budget| DecodeConfig {
                node_budget,
                ..base.clone()
            })
            .collect()
    } else if let Some(thresholds) = &args.thresholds {
        thresholds
            .iter()
            .map(|&threshold| DecodeConfig {
                threshold,
                ..base.clone()
            })
            .collect()
    } else {
        args.temperatures
            .as_ref()
            .expect("one axis is set")
            .iter()
            .map(|&temperature| DecodeConfig {
                temperature,
                ..base.clone()
            })
            .collect()
    };
    for cfg in &configs {
        cfg.validate().map_err(CliError::input)?;
    }
    let report = run_sweep_points(
        &prompts,
        oracles.target.as_ref(),
        oracles.draft.as_ref(),
        &configs,
        args.jobs,
    )?;
    print!("{}", report.to_csv());
    if let Some(dir) = &args.out {
        write_report(dir, "sweep", &report)?;
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: "sweep".into(),
            seed: base.seed,
            config: ConfigEcho::from(&base),
            oracles: oracles.descriptor.clone(),
            inputs: input_echo(&args.models, &args.prompt),
            outputs: vec![
                "sweep.csv".into(),
                "sweep.json".into(),
                "manifest.json".into(),
            ],
        };
        write_manifest(dir, &manifest)?;
    }
    Ok(())
}

fn cmd_correlate(args: &CorrelateArgs) -> Result<(), CliError> {
    if args.steps < 2 {
        return Err(CliError::Input(
            "correlation needs at least 2 recorded steps".into(),
        ));
    }
    let oracles = load_oracles(&args.models)?;
    let prompts = load_prompts(&args.prompt, &oracles)?;
    let cfg = args.gen.decode_config(args.max_new_tokens)?;
    let mut steps: Vec<StepResult> = Vec::with_capacity(args.steps);
    let mut round = 0u64;
    while steps.len() < args.steps {
        let prompt = &prompts[(round as usize) % prompts.len()];
        let mut run_cfg = cfg.clone();
        run_cfg.seed = splitmix64(cfg.seed ^ splitmix64(round + 1));
        let (_, run_steps) = run_decoding(
            prompt,
            oracles.target.as_ref(),
            oracles.draft.as_ref(),
            &run_cfg,
        )
        .map_err(CliError::runtime)?;
        steps.extend(run_steps);
        round += 1;
    }
    steps.truncate(args.steps);
    let grid = correlate(&expectation_pairs(&steps)).map_err(CliError::runtime)?;
    println!(
        "pearson {:.4} over {} steps{}",
        grid.pearson,
        grid.steps,
        if grid.degenerate { " (degenerate)" } else { "" }
    );
    if let Some(dir) = &args.out {
        write_output(dir, "grid.csv", &grid.to_csv())?;
        write_output(dir, "grid.json", &format!("{}\n", grid.to_json()))?;
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: "correlate".into(),
            seed: cfg.seed,
            config: ConfigEcho::from(&cfg),
            oracles: oracles.descriptor.clone(),
            inputs: input_echo(&args.models, &args.prompt),
            outputs: vec![
                "grid.csv".into(),
                "grid.json".into(),
                "manifest.json".into(),
            ],
        };
        write_manifest(dir, &manifest)?;
    }
    Ok(())
}

/// Dispatches a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Decode(args) => cmd_decode(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Correlate(args) => cmd_correlate(args),
    }
}
