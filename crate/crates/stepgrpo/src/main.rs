//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on configuration errors, 2 on I/O or file
//! parsing errors.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stepgrpo::analyzer;
use stepgrpo::checkpoint::load_checkpoint;
use stepgrpo::config::load_config;
use stepgrpo::error::{HarnessError, Result};
use stepgrpo::eval::{evaluate, EvalOptions, TaskSpec};
use stepgrpo::report;
use stepgrpo::trace::{read_jsonl, TraceRecord};
use stepgrpo::trainer::{train, MAX_ANSWER_TOKENS};

use stepgrpo_core::rollout::{induce_answer, run_rollout, RolloutConfig};
use stepgrpo_core::seeds::derive_seed;
use stepgrpo_core::toylang::generate_task;

#[derive(Parser)]
#[command(
    name = "stepgrpo",
    about = "Step-aware group-relative policy optimization at desk scale",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write checkpoints, traces, and metrics
    Train(TrainArgs),
    /// Evaluate a checkpoint with plain generation (no truncation gate)
    Eval(EvalArgs),
    /// Print one annotated rollout for a task
    Rollout(RolloutArgs),
    /// Analytics over trace and metrics files
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
}

#[derive(Args)]
struct TrainArgs {
    /// Flat key = value config file
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Task range as seed:count:difficulty
    #[arg(long)]
    tasks: String,
    #[arg(long)]
    out: PathBuf,
    /// Generations per task
    #[arg(long, default_value_t = 4)]
    samples: usize,
    #[arg(long, default_value_t = 0.6)]
    temperature: f64,
    #[arg(long = "top-p", default_value_t = 0.9)]
    top_p: f64,
    #[arg(long = "max-tokens", default_value_t = 128)]
    max_tokens: usize,
}

#[derive(Args)]
struct RolloutArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long = "task-seed")]
    task_seed: u64,
    /// Disable the confidence gate (plain sampling)
    #[arg(long = "no-gate")]
    no_gate: bool,
    #[arg(long, default_value_t = 2)]
    difficulty: u32,
    #[arg(long, default_value_t = 0.95)]
    delta: f64,
    #[arg(long = "max-tokens", default_value_t = 128)]
    max_tokens: usize,
    /// Sampling stream seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum AnalyzeCmd {
    /// Compression rate: per-task mean token ratio of model over vanilla
    Cr(CrArgs),
    /// Semantic density distribution (steps per token)
    Density(DensityArgs),
    /// Heuristic step-composition proportions
    Composition(CompositionArgs),
    /// Step-aligned accuracy/length table across runs
    Dynamics(DynamicsArgs),
}

#[derive(Args)]
struct CrArgs {
    #[arg(long = "model-dir")]
    model_dir: PathBuf,
    #[arg(long = "vanilla-dir")]
    vanilla_dir: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct DensityArgs {
    #[arg(long)]
    traces: PathBuf,
    /// Treat the input as plain text, one reasoning trace per line
    #[arg(long)]
    text: bool,
    /// Trigger words for text mode (comma separated)
    #[arg(long, default_value = "Wait,Alternatively")]
    triggers: String,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct CompositionArgs {
    #[arg(long)]
    traces: PathBuf,
    /// Normalized edit-distance threshold for the redundancy proxy
    #[arg(long, default_value_t = 0.2)]
    threshold: f64,
    #[arg(long)]
    text: bool,
    #[arg(long, default_value = "Wait,Alternatively")]
    triggers: String,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct DynamicsArgs {
    /// One or more metrics.jsonl files
    #[arg(long, num_args = 1.., required = true)]
    metrics: Vec<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Rollout(args) => cmd_rollout(args),
        Command::Analyze(cmd) => cmd_analyze(cmd),
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let summary = train(&cfg, &args.out)?;
    let m = &summary.final_metrics;
    println!(
        "trained {} steps -> {} (final: accuracy {:.3}, mean_tokens {:.1}, mean_k {:.2})",
        cfg.total_steps,
        summary.run_dir.display(),
        m.accuracy,
        m.mean_tokens,
        m.mean_k
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let tasks = TaskSpec::parse(&args.tasks)?;
    let opts = EvalOptions {
        temperature: args.temperature,
        top_p: args.top_p,
        max_tokens: args.max_tokens,
        samples_per_task: args.samples,
    };
    let summary = evaluate(&args.checkpoint, &tasks, &opts, Some(&args.out))?;
    report::print_eval_summary(&summary);
    Ok(())
}

fn cmd_rollout(args: RolloutArgs) -> Result<()> {
    let (params, vocab) = load_checkpoint(&args.checkpoint)?;
    let task = generate_task(&vocab, args.task_seed, args.difficulty)?;
    let cfg = RolloutConfig {
        delta: args.delta,
        max_tokens: args.max_tokens,
        max_answer_tokens: MAX_ANSWER_TOKENS,
        dynamic_rollout_enabled: !args.no_gate,
        ..RolloutConfig::for_vocab(&vocab)
    };
    cfg.validate(&vocab)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[args.seed, task.id]));
    let completion = run_rollout(&params, &vocab, &task, &cfg, &mut rng)?;

    let prompt: Vec<&str> = task.prompt.iter().map(|&t| vocab.symbol(t)).collect();
    println!(
        "task {} (difficulty {}): prompt `{}`  ground truth `{}`",
        task.id,
        task.difficulty,
        prompt.join(" "),
        task.ground_truth
    );
    let rendered: Vec<&str> = completion.tokens.iter().map(|&t| vocab.symbol(t)).collect();
    println!(
        "completion ({} tokens, k = {}, terminal = {}):",
        completion.tokens.len(),
        completion.step_count,
        completion.terminal_reason.as_str()
    );
    println!("  {}", rendered.join(" "));

    // replay the gate probes for annotation; the gate is greedy, so this
    // reconstruction is exact
    if cfg.dynamic_rollout_enabled {
        let tail = completion
            .induced_answer
            .as_ref()
            .map(|a| a.len() + cfg.induction_prompt.len())
            .unwrap_or(0);
        let free_len = completion.tokens.len() - tail;
        for &pos in &completion.trigger_positions {
            if pos >= free_len {
                continue;
            }
            let mut ctx = task.prompt.clone();
            ctx.extend_from_slice(&completion.tokens[..=pos]);
            let probe = induce_answer(&params, &vocab, &ctx, &cfg)?;
            let ans: Vec<&str> = probe.answer.iter().map(|&t| vocab.symbol(t)).collect();
            let verdict = if !probe.answer.is_empty()
                && stepgrpo_core::rollout::truncation_decision(probe.confidence, cfg.delta)
            {
                "exit"
            } else {
                "resume"
            };
            println!(
                "  gate @ token {pos} (`{}`): induced `{}`, confidence {:.4} (p = {:.4}) -> {verdict}",
                vocab.symbol(completion.tokens[pos]),
                ans.join(" "),
                probe.confidence,
                probe.confidence.exp()
            );
        }
    }
    match stepgrpo_core::reward::extract_answer(&completion.tokens, &vocab) {
        Some(answer) => {
            let correct = stepgrpo_core::toylang::check_answer(&task, &answer);
            println!("answer: `{answer}`  correct: {correct}");
        }
        None => println!("answer: none extracted"),
    }
    Ok(())
}

fn cmd_analyze(cmd: AnalyzeCmd) -> Result<()> {
    match cmd {
        AnalyzeCmd::Cr(args) => {
            let stats = analyzer::task_stats_from_dirs(&args.model_dir, &args.vanilla_dir)?;
            let cr = analyzer::compression_rate(&stats)?;
            report::print_cr(&stats, cr);
            if let Some(path) = args.csv {
                report::csv_cr(&path, &stats, cr)?;
            }
        }
        AnalyzeCmd::Density(args) => {
            let densities = if args.text {
                let text = std::fs::read_to_string(&args.traces)
                    .map_err(HarnessError::io(&args.traces))?;
                let triggers: Vec<&str> = args.triggers.split(',').collect();
                let lines: Vec<&str> = text.lines().collect();
                analyzer::densities_from_text(&lines, &triggers)
            } else {
                let records: Vec<TraceRecord> = read_jsonl(&args.traces)?;
                analyzer::densities_from_traces(&records)
            };
            let rep = analyzer::density_report(&densities)?;
            report::print_density(&rep);
            if let Some(path) = args.csv {
                report::csv_density(&path, &rep)?;
            }
        }
        AnalyzeCmd::Composition(args) => {
            let rep = if args.text {
                let text = std::fs::read_to_string(&args.traces)
                    .map_err(HarnessError::io(&args.traces))?;
                let triggers: Vec<&str> = args.triggers.split(',').collect();
                let lines: Vec<&str> = text.lines().collect();
                analyzer::composition_report_text(&lines, &triggers, args.threshold)?
            } else {
                let records: Vec<TraceRecord> = read_jsonl(&args.traces)?;
                analyzer::composition_report(&records, args.threshold)?
            };
            report::print_composition(&rep, args.threshold);
            if let Some(path) = args.csv {
                report::csv_composition(&path, &rep)?;
            }
        }
        AnalyzeCmd::Dynamics(args) => {
            let table = analyzer::dynamics_table(&args.metrics)?;
            report::print_dynamics(&table);
            if let Some(path) = args.csv {
                report::csv_dynamics(&path, &table)?;
            }
        }
    }
    Ok(())
}
