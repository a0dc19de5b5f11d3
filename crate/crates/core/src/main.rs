use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kgqa::config::{BackendSpec, ENV_CONFIG};
use kgqa::eval::{load_dataset, run_benchmark};
use kgqa::llm::ScriptedBackend;
use kgqa::pipeline::{run_pipeline, BackendSet};
use kgqa::trace::{trace_records, write_trace, BackendLabels};
use kgqa::{load_graph_file, KnowledgeGraph, PipelineConfig};

#[derive(Parser)]
#[command(name = "kgqa", version, about = "Answer questions over a triple graph")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a graph file and report its size.
    Ingest {
        #[arg(long)]
        graph: PathBuf,
    },
    /// Answer one question.
    Ask {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        question: String,
        /// Write the full trace as line-delimited JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Score a dataset of questions.
    Bench {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Write per-example scores as line-delimited JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Validate a scripted-backend file.
    ScriptCheck {
        #[arg(long)]
        script: PathBuf,
    },
}

#[derive(Args)]
struct RunOpts {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Serve every model role from this script.
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    hops: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    no_decomposition: bool,
    #[arg(long)]
    no_global_keys: bool,
    #[arg(long)]
    no_verification: bool,
    /// Override any config key, as `key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl RunOpts {
    /// File, then environment, then flags.
    fn resolve(&self) -> Result<PipelineConfig, String> {
        let mut cfg = PipelineConfig::default();
        let file = self
            .config
            .clone()
            .or_else(|| std::env::var_os(ENV_CONFIG).map(PathBuf::from));
        if let Some(path) = file {
            cfg.apply_file(&path).map_err(|e| e.to_string())?;
        }
        cfg.apply_env(std::env::vars()).map_err(|e| e.to_string())?;
        if let Some(path) = &self.script {
            let spec = BackendSpec::Script(path.display().to_string());
            cfg.res_backend = spec.clone();
            cfg.ver_backend = spec;
        }
        if let Some(e) = self.epsilon {
            cfg.epsilon = e;
        }
        if let Some(h) = self.hops {
            cfg.hops = h;
        }
        if let Some(d) = self.max_depth {
            cfg.max_depth = d;
        }
        if self.no_decomposition {
            cfg.decomposition_enabled = false;
        }
        if self.no_global_keys {
            cfg.global_keys_enabled = false;
        }
        if self.no_verification {
            cfg.verification_enabled = false;
        }
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
            cfg.set(k.trim(), v).map_err(|e| e.to_string())?;
        }
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

fn graph(path: &Path) -> Result<KnowledgeGraph, String> {
    load_graph_file(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, String> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| format!("{}: {e}", path.display()))
}

fn run(cli: Cli) -> Result<(), String> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Ingest { graph: path } => {
            let g = graph(&path)?;
            writeln!(out, "triples: {}", g.triple_count()).map_err(|e| e.to_string())?;
            writeln!(out, "entities: {}", g.entity_count()).map_err(|e| e.to_string())?;
            writeln!(out, "digest: {}", g.digest()).map_err(|e| e.to_string())?;
        }
        Command::Ask {
            graph: path,
            question,
            trace,
            opts,
        } => {
            let cfg = opts.resolve()?;
            let g = graph(&path)?;
            let set = BackendSet::from_config(&cfg).map_err(|e| e.to_string())?;
            let result = run_pipeline(&question, &g, &cfg, set.handles()).map_err(|e| e.to_string())?;
            if let Some(tp) = trace {
                let labels = BackendLabels {
                    res: set.res.identity().to_string(),
                    ver: set.ver.identity().to_string(),
                };
                let records = trace_records(&result, &cfg, &g.digest(), labels);
                write_trace(create(&tp)?, &records).map_err(|e| format!("{}: {e}", tp.display()))?;
            }
            writeln!(out, "{}", result.final_answer()).map_err(|e| e.to_string())?;
        }
        Command::Bench {
            graph: path,
            dataset,
            report,
            workers,
            opts,
        } => {
            let cfg = opts.resolve()?;
            let g = graph(&path)?;
            let file = File::open(&dataset).map_err(|e| format!("{}: {e}", dataset.display()))?;
            let data = load_dataset(BufReader::new(file)).map_err(|e| format!("{}: {e}", dataset.display()))?;
            let set = BackendSet::from_config(&cfg).map_err(|e| e.to_string())?;
            let handles = set.handles();
            let metrics = run_benchmark(
                &data,
                |q| run_pipeline(q, &g, &cfg, handles).map(|t| t.final_answer().to_string()),
                workers,
            )
            .map_err(|e| e.to_string())?;
            if let Some(rp) = report {
                let mut w = create(&rp)?;
                for ex in &metrics.per_example {
                    let line = serde_json::to_string(ex).map_err(|e| e.to_string())?;
                    writeln!(w, "{line}").map_err(|e| format!("{}: {e}", rp.display()))?;
                }
                w.flush().map_err(|e| format!("{}: {e}", rp.display()))?;
            }
            write!(out, "{}", metrics.summary_table()).map_err(|e| e.to_string())?;
        }
        Command::ScriptCheck { script } => {
            let b = ScriptedBackend::from_file("script", &script).map_err(|e| format!("{}: {e}", script.display()))?;
            writeln!(out, "rules: {}", b.rules().len()).map_err(|e| e.to_string())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", first.trim());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
