use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use infodeficit::run::{
    cmd_eval, cmd_gen_synthetic, cmd_predict, cmd_preprocess, cmd_train, PastInput, RunConfig,
};
use infodeficit::{Error, Result};

/// Information-deficit models for search sessions.
#[derive(Parser)]
#[command(name = "infodeficit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter a query log into vocabulary, example and candidate files.
    Preprocess(ConfigArgs),
    /// Write a synthetic query log with a known retention law.
    GenSynthetic(ConfigArgs),
    /// Train a model on preprocessed examples.
    Train(ConfigArgs),
    /// Evaluate one or more checkpoints.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        /// Checkpoints to evaluate; defaults to the configured one.
        #[arg(long = "ckpt")]
        checkpoints: Vec<PathBuf>,
    },
    /// Score the words of a query, or rank candidate next queries.
    Predict {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        query: String,
        /// Earlier step as `QUERY => URL URL ...`, most recent first.
        #[arg(long)]
        past: Vec<String>,
        #[arg(long)]
        candidate: Vec<String>,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Any configuration key, as KEY=VALUE.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    workdir: Option<String>,
    #[arg(long)]
    checkpoint: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    embed_dim: Option<String>,
    #[arg(long)]
    char_embed_dim: Option<String>,
    #[arg(long)]
    hidden_dim: Option<String>,
    #[arg(long)]
    context_window: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    vocab_capacity: Option<String>,
    #[arg(long)]
    session_gap_secs: Option<String>,
    #[arg(long)]
    max_url_chars: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    init_from: Option<String>,
    #[arg(long)]
    context_order: Option<String>,
    #[arg(long)]
    eval_split: Option<String>,
    #[arg(long)]
    synthetic_sessions: Option<String>,
    #[arg(long)]
    synthetic_vocab: Option<String>,
    #[arg(long)]
    deficit_strength: Option<String>,
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    disable_deficit: bool,
    #[arg(long)]
    disable_context: bool,
    #[arg(long)]
    last_query_only: bool,
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    report_wall_time: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut config = RunConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            config.apply_text(&text)?;
        }
        let values = [
            ("task", &self.task),
            ("input", &self.input),
            ("workdir", &self.workdir),
            ("checkpoint", &self.checkpoint),
            ("seed", &self.seed),
            ("embed_dim", &self.embed_dim),
            ("char_embed_dim", &self.char_embed_dim),
            ("hidden_dim", &self.hidden_dim),
            ("context_window", &self.context_window),
            ("k", &self.k),
            ("vocab_capacity", &self.vocab_capacity),
            ("session_gap_secs", &self.session_gap_secs),
            ("max_url_chars", &self.max_url_chars),
            ("alpha", &self.alpha),
            ("batch_size", &self.batch_size),
            ("epochs", &self.epochs),
            ("init_from", &self.init_from),
            ("context_order", &self.context_order),
            ("eval_split", &self.eval_split),
            ("synthetic_sessions", &self.synthetic_sessions),
            ("synthetic_vocab", &self.synthetic_vocab),
            ("deficit_strength", &self.deficit_strength),
        ];
        for (key, value) in values {
            if let Some(v) = value {
                config.set(key, v)?;
            }
        }
        let flags = [
            ("resume", self.resume),
            ("disable_deficit", self.disable_deficit),
            ("disable_context", self.disable_context),
            ("last_query_only", self.last_query_only),
            ("baseline", self.baseline),
            ("report_wall_time", self.report_wall_time),
        ];
        for (key, on) in flags {
            if on {
                config.set(key, "true")?;
            }
        }
        for pair in &self.set {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected KEY=VALUE, got `{pair}`")))?;
            config.set(k.trim(), v.trim())?;
        }
        Ok(config)
    }
}

fn parse_past(raw: &str) -> PastInput {
    match raw.split_once("=>") {
        Some((q, urls)) => PastInput {
            query: q.trim().to_string(),
            clicks: urls.split_whitespace().map(str::to_string).collect(),
        },
        None => PastInput {
            query: raw.trim().to_string(),
            clicks: Vec::new(),
        },
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess(args) => {
            let manifest = cmd_preprocess(&args.resolve()?)?;
            println!("{}", serde_json::to_string(&manifest.totals)?);
        }
        Command::GenSynthetic(args) => {
            let summary = cmd_gen_synthetic(&args.resolve()?)?;
            println!("{}", serde_json::to_string(&summary)?);
        }
        Command::Train(args) => print!("{}", cmd_train(&args.resolve()?)?.to_text()),
        Command::Eval {
            config,
            checkpoints,
        } => print!("{}", cmd_eval(&config.resolve()?, &checkpoints)?.to_text()),
        Command::Predict {
            config,
            query,
            past,
            candidate,
        } => {
            let past: Vec<PastInput> = past.iter().map(|p| parse_past(p)).collect();
            for (text, value) in cmd_predict(&config.resolve()?, &query, &past, &candidate)? {
                println!("{text}\t{value}");
            }
        }
    }
    Ok(())
}

fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let message = e.to_string();
            let first = message
                .lines()
                .next()
                .unwrap_or_default()
                .trim_start_matches("error: ");
            eprintln!("{}", error_line("usage", first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}
