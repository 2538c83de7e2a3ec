//! `proxylm`: runs the synthetic-data and DP federated fine-tuning pipeline
//! one stage at a time, or end to end.
//!
//! Every subcommand reads a TOML config, writes its outputs plus a
//! `<subcommand>.manifest.json` into `--out`, and reports failures as a
//! JSON object on stderr with a nonzero exit code.

use clap::{error::ErrorKind, Parser, Subcommand, ValueEnum};
use proxylm_core::corpus::{Corpus, Vocabulary};
use proxylm_core::experiment::{self as exp, BackendKind, ExperimentConfig, ExperimentError, Manifest};
use proxylm_core::model::ModelParameters;
use proxylm_core::par::{self, Parallelism};
use proxylm_core::privacy::PrivacyReport;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

type Result<T> = std::result::Result<T, ExperimentError>;

#[derive(Parser, Debug)]
#[command(name = "proxylm", version, about = "Synthetic pre-training data and DP federated fine-tuning for small LMs")]
struct Cli {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [default: out, or <manifest dir>/replay for replay].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config's completion backend.
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendArg>,
    /// Worker threads (0 = all cores, 1 = sequential). Never changes results.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendArg {
    Mock,
    Remote,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "snake_case", deny_unknown_fields)]
enum Command {
    /// Simulate the public web corpus and the private chat corpus.
    Simulate,
    /// Generate chats through the receiver, topic, conversation chain.
    Synth,
    /// Keep the public documents the backend scores as chat-like.
    Filter {
        #[arg(long)]
        input: PathBuf,
    },
    /// Convert a subsample of filtered articles into chats.
    Transform {
        #[arg(long)]
        input: PathBuf,
    },
    /// Build a frequency vocabulary over one or more corpora.
    Vocab {
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Pre-train a model on the concatenation of the inputs.
    Pretrain {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        /// Train once per (lr, eps) of the sweep grid and score each on --eval.
        #[arg(long, requires = "eval")]
        sweep: bool,
        #[arg(long)]
        eval: Option<PathBuf>,
    },
    /// DP-FTRL fine-tuning on the simulated private population.
    Flrun {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        private: PathBuf,
        #[arg(long)]
        rounds: Option<u64>,
    },
    /// Federated evaluation on the holdout clients.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        private: PathBuf,
    },
    /// Filter a synthetic corpus with a pre-trained and a fine-tuned model.
    Refine {
        #[arg(long)]
        pre: PathBuf,
        #[arg(long)]
        fine: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Privacy accounting for the configured run, or for a given rho.
    Account {
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        rounds: Option<u64>,
        #[arg(long)]
        noise_multiplier: Option<f64>,
        #[arg(long)]
        min_separation: Option<u64>,
        #[arg(long)]
        max_participations: Option<u64>,
    },
    /// Run the whole comparison and write the accuracy curves.
    Experiment {
        #[arg(long)]
        rounds: Option<u64>,
    },
    /// Re-run a subcommand from its manifest and compare outputs.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

fn emit_error(kind: &str, message: &str) {
    let body = serde_json::json!({ "error": { "kind": kind, "message": message } });
    let _ = writeln!(std::io::stderr(), "{body}");
}

fn progress(message: &str) {
    static START: OnceLock<Instant> = OnceLock::new();
    let secs = START.get_or_init(Instant::now).elapsed().as_secs_f64();
    let line = serde_json::json!({ "progress": message, "elapsed_s": (secs * 10.0).round() / 10.0 });
    let _ = writeln!(std::io::stderr(), "{line}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            emit_error("usage", e.render().to_string().trim());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            emit_error(e.kind(), &e.to_string());
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let threads = cli.threads;
    if let Command::Replay { manifest } = &cli.command {
        let out = match &cli.out {
            Some(o) => o.clone(),
            None => manifest.parent().unwrap_or(Path::new(".")).join("replay"),
        };
        return replay(manifest, &out, threads);
    }
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(b) = cli.backend {
        cfg.backend.kind = match b {
            BackendArg::Mock => BackendKind::Mock,
            BackendArg::Remote => BackendKind::Remote,
        };
    }
    let out = cli.out.unwrap_or_else(|| PathBuf::from("out"));
    let manifest = execute(cfg, cli.command, &out, threads)?;
    println!("{}", serde_json::json!({ "subcommand": manifest.subcommand, "outputs": manifest.outputs }));
    Ok(())
}

fn replay(path: &Path, out: &Path, threads: usize) -> Result<()> {
    let recorded = Manifest::read(path)?;
    recorded.verify_inputs()?;
    let cmd: Command = serde_json::from_value(recorded.args.clone())
        .map_err(|e| ExperimentError::Manifest(format!("bad args: {e}")))?;
    if matches!(cmd, Command::Replay { .. }) {
        return Err(ExperimentError::Manifest("cannot replay a replay".into()));
    }
    let fresh = execute(recorded.config.clone(), cmd, out, threads)?;
    let mismatched = recorded.mismatched_outputs(out);
    let missing: Vec<&String> = fresh.outputs.keys().filter(|k| !recorded.outputs.contains_key(*k)).collect();
    println!(
        "{}",
        serde_json::json!({
            "replayed": recorded.subcommand,
            "outputs": recorded.outputs.len(),
            "mismatched": mismatched,
            "unrecorded": missing,
        })
    );
    if !mismatched.is_empty() || !missing.is_empty() {
        return Err(ExperimentError::Manifest(format!(
            "replay differs from the recorded run: {mismatched:?}"
        )));
    }
    Ok(())
}

fn canonical(path: &Path) -> Result<PathBuf> {
    path.canonicalize().map_err(|e| ExperimentError::Input {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Synth => "synth",
            Command::Filter { .. } => "filter",
            Command::Transform { .. } => "transform",
            Command::Vocab { .. } => "vocab",
            Command::Pretrain { .. } => "pretrain",
            Command::Flrun { .. } => "flrun",
            Command::Evaluate { .. } => "evaluate",
            Command::Refine { .. } => "refine",
            Command::Account { .. } => "account",
            Command::Experiment { .. } => "experiment",
            Command::Replay { .. } => "replay",
        }
    }

    /// Input files, resolved to absolute paths so manifests replay from
    /// any working directory.
    fn inputs_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            Command::Filter { input } | Command::Transform { input } => vec![input],
            Command::Vocab { inputs } => inputs.iter_mut().collect(),
            Command::Pretrain { vocab, inputs, eval, .. } => {
                let mut v: Vec<&mut PathBuf> = vec![vocab];
                v.extend(inputs.iter_mut());
                v.extend(eval.iter_mut());
                v
            }
            Command::Flrun { model, vocab, private, .. } | Command::Evaluate { model, vocab, private } => {
                vec![model, vocab, private]
            }
            Command::Refine { pre, fine, vocab, input } => vec![pre, fine, vocab, input],
            _ => Vec::new(),
        }
    }

    /// Applies subcommand overrides to the config.
    fn apply_overrides(&self, cfg: &mut ExperimentConfig) {
        match *self {
            Command::Flrun { rounds: Some(r), .. } | Command::Experiment { rounds: Some(r) } => cfg.fl.rounds = r,
            Command::Account {
                rho,
                delta,
                rounds,
                noise_multiplier,
                min_separation,
                max_participations,
            } => {
                if rho.is_some() {
                    cfg.privacy.rho = rho;
                }
                if let Some(d) = delta {
                    cfg.privacy.target_delta = d;
                }
                if let Some(r) = rounds {
                    cfg.fl.rounds = r;
                }
                if let Some(z) = noise_multiplier {
                    cfg.fl.noise_multiplier = z;
                }
                if let Some(s) = min_separation {
                    cfg.fl.min_separation = s;
                }
                if max_participations.is_some() {
                    cfg.privacy.max_participations = max_participations;
                }
            }
            _ => {}
        }
    }
}

/// Output directory plus the manifest being filled in.
struct Run<'a> {
    dir: &'a Path,
    manifest: Manifest,
}

impl Run<'_> {
    fn out_err(&self, name: &str, e: impl ToString) -> ExperimentError {
        ExperimentError::Output {
            path: self.dir.join(name).display().to_string(),
            message: e.to_string(),
        }
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        std::fs::write(self.dir.join(name), text).map_err(|e| self.out_err(name, e))?;
        self.manifest.output(self.dir, name)
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| self.out_err(name, e))? + "\n";
        self.text(name, &text)
    }

    fn jsonl<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut text = String::new();
        for r in rows {
            text.push_str(&serde_json::to_string(r).map_err(|e| self.out_err(name, e))?);
            text.push('\n');
        }
        self.text(name, &text)
    }

    fn corpus(&mut self, name: &str, corpus: &Corpus) -> Result<()> {
        corpus.write_jsonl(self.dir.join(name))?;
        self.manifest.output(self.dir, name)
    }

    fn model(&mut self, name: &str, p: &ModelParameters) -> Result<()> {
        p.save(self.dir.join(name))?;
        self.manifest.output(self.dir, name)
    }

    fn vocab(&mut self, name: &str, v: &Vocabulary) -> Result<()> {
        v.write(self.dir.join(name))?;
        self.manifest.output(self.dir, name)
    }
}

fn read_corpus(path: &Path) -> Result<Corpus> {
    Corpus::read_jsonl(path).map_err(|e| ExperimentError::Input {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn read_vocab(path: &Path) -> Result<Vocabulary> {
    Vocabulary::read(path).map_err(|e| ExperimentError::Input {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn read_model(path: &Path, vocab: &Vocabulary) -> Result<ModelParameters> {
    let p = ModelParameters::load(path).map_err(|e| ExperimentError::Input {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    if p.config().vocab_size != vocab.size() {
        return Err(ExperimentError::Config(format!(
            "model {} has vocab size {}, vocabulary has {}",
            path.display(),
            p.config().vocab_size,
            vocab.size()
        )));
    }
    Ok(p)
}

#[derive(Serialize)]
struct PrivacyOutput<'a> {
    #[serde(flatten)]
    report: &'a PrivacyReport,
    statement: String,
}

fn privacy_output(report: &PrivacyReport) -> PrivacyOutput<'_> {
    PrivacyOutput {
        report,
        statement: report.statement(),
    }
}

fn execute(mut cfg: ExperimentConfig, mut cmd: Command, out: &Path, threads: usize) -> Result<Manifest> {
    cmd.apply_overrides(&mut cfg);
    cfg.validate()?;
    for p in cmd.inputs_mut() {
        *p = canonical(p)?;
    }
    std::fs::create_dir_all(out).map_err(|e| ExperimentError::Output {
        path: out.display().to_string(),
        message: e.to_string(),
    })?;
    let mut manifest = Manifest::new(cmd.name(), &cfg);
    manifest.args = serde_json::to_value(&cmd).expect("command serializes");
    for p in cmd.inputs_mut() {
        manifest.input(p)?;
    }
    let mut run = Run { dir: out, manifest };
    let par = par::for_threads(threads);
    par::with_threads(threads, || stage(&cfg, &cmd, &mut run, par))?;
    let name = format!("{}.manifest.json", cmd.name());
    run.manifest.write(&out.join(name))?;
    Ok(run.manifest)
}

fn stage(cfg: &ExperimentConfig, cmd: &Command, run: &mut Run<'_>, par: Parallelism) -> Result<()> {
    match cmd {
        Command::Simulate => {
            run.corpus("raw.jsonl", &exp::simulate_raw(cfg))?;
            run.corpus("private.jsonl", &exp::simulate_private(cfg))?;
        }
        Command::Synth => {
            let backend = exp::backend(cfg)?;
            let (corpus, stats) = exp::synthesize(cfg, backend.as_ref(), par)?;
            run.corpus("generated_chat.jsonl", &corpus)?;
            run.json("synth_stats.json", &stats)?;
        }
        Command::Filter { input } => {
            let backend = exp::backend(cfg)?;
            let (corpus, stats) = exp::filter(cfg, backend.as_ref(), &read_corpus(input)?, par)?;
            run.corpus("filtered.jsonl", &corpus)?;
            run.json("filter_stats.json", &stats)?;
        }
        Command::Transform { input } => {
            let backend = exp::backend(cfg)?;
            let (corpus, stats) = exp::transform(cfg, backend.as_ref(), &read_corpus(input)?, par)?;
            run.corpus("transformed.jsonl", &corpus)?;
            run.json("transform_stats.json", &stats)?;
        }
        Command::Vocab { inputs } => {
            let corpora = inputs.iter().map(|p| read_corpus(p)).collect::<Result<Vec<_>>>()?;
            let refs: Vec<&Corpus> = corpora.iter().collect();
            run.vocab("vocab.txt", &exp::build_vocab(cfg, &refs))?;
        }
        Command::Pretrain { vocab, inputs, sweep, eval } => {
            let vocab = read_vocab(vocab)?;
            let mut corpus = Corpus::default();
            for p in inputs {
                corpus.examples.extend(read_corpus(p)?.examples);
            }
            if *sweep {
                let eval = read_corpus(eval.as_deref().expect("clap enforces --eval"))?;
                let points = exp::sweep_pretrain(cfg, &vocab, &corpus, &eval, par)?;
                run.json("sweep.json", &points)?;
            } else {
                let (model, report) = exp::pretrain_on(cfg, &vocab, &corpus, par)?;
                run.model("model.json", &model)?;
                run.json("pretrain_report.json", &report)?;
            }
        }
        Command::Flrun { model, vocab, private, .. } => {
            let vocab = read_vocab(vocab)?;
            let w0 = read_model(model, &vocab)?;
            let (train, holdout) = exp::populations(cfg, &vocab, &read_corpus(private)?)?;
            let rounds = cfg.fl.rounds;
            let result = exp::fl_run(cfg, w0, &train, &holdout, par, |m, _| {
                if let Some(acc) = m.eval_accuracy {
                    progress(&format!("round {}/{rounds}: accuracy {acc:.4}", m.round));
                }
                Ok(())
            })?;
            run.model("fl_model.json", &result.outcome.params)?;
            run.jsonl("metrics.jsonl", &result.outcome.metrics)?;
            run.json("privacy.json", &privacy_output(&result.privacy))?;
        }
        Command::Evaluate { model, vocab, private } => {
            let vocab = read_vocab(vocab)?;
            let params = read_model(model, &vocab)?;
            let (_, holdout) = exp::populations(cfg, &vocab, &read_corpus(private)?)?;
            let r = exp::evaluate(cfg, &params, &holdout, par)?;
            let summary = serde_json::json!({
                "accuracy": format!("{:.2} ± {:.2}", 100.0 * r.mean, 100.0 * r.std),
                "mean": r.mean,
                "std": r.std,
                "runs": r.runs,
                "counts": r.counts,
                "holdout_clients": holdout.len(),
            });
            run.json("eval.json", &summary)?;
        }
        Command::Refine { pre, fine, vocab, input } => {
            let vocab = read_vocab(vocab)?;
            let pre = read_model(pre, &vocab)?;
            let fine = read_model(fine, &vocab)?;
            let r = exp::refine(cfg, &pre, &fine, &vocab, &read_corpus(input)?, par)?;
            run.corpus("refined.jsonl", &r.corpus)?;
            run.json("refine_stats.json", &serde_json::json!({ "stats": r.stats, "sweep": r.sweep }))?;
        }
        Command::Account { .. } => {
            let report = exp::account(cfg)?;
            run.json("privacy.json", &privacy_output(&report))?;
            run.text("privacy_statement.txt", &report.statement())?;
        }
        Command::Experiment { .. } => {
            let result = exp::run_end_to_end(cfg, par, &mut |m| progress(m))?;
            run.text("accuracy_curves.csv", &exp::curves_csv(&result.curves))?;
            run.json("summary.json", &result)?;
            if let Some(a) = &result.artifacts {
                run.vocab("vocab.txt", &a.vocab)?;
                run.corpus("refined.jsonl", &a.refined)?;
            }
        }
        Command::Replay { .. } => unreachable!("handled before dispatch"),
    }
    Ok(())
}
