use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use lemon_core::bench::{bench_train_step, bench_transform, TransformBenchOptions};
use lemon_core::checkpoint::Checkpoint;
use lemon_core::config;
use lemon_core::gradcheck::{run_gradcheck, GradcheckOptions};
use lemon_core::pipeline::{
    embed_corpus, epoch_means, load_corpus, transform_corpus, transform_stats, write_line_graphs,
    Trainer,
};
use lemon_core::tensor::Primitive;
use lemon_core::Error;

const CHECKPOINT_FILE: &str = "checkpoint.bin";
const METRICS_FILE: &str = "metrics.jsonl";

#[derive(Parser)]
#[command(
    name = "lemon",
    version,
    about = "Dual-view contrastive pre-training on molecular graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a graph corpus into line graphs with provenance maps.
    Transform {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pre-train the dual-helix encoder.
    Pretrain {
        #[arg(long)]
        corpus: PathBuf,
        /// Flat key=value file; the desk preset is used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        /// Override one config key, e.g. `--set alpha=0`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Compare analytic gradients against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        depth: usize,
        #[arg(long, default_value_t = 8)]
        hidden: usize,
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Write graph-level embeddings of a corpus, one JSON array per line.
    Embed {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 256)]
        chunk: usize,
    },
    /// Time the transformation or a training step.
    Bench {
        #[arg(long, value_enum)]
        mode: BenchMode,
        /// Corpus sizes for transform mode.
        #[arg(long, value_delimiter = ',', default_values_t = [10_000, 20_000, 40_000])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 4)]
        degree_cap: usize,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        /// Corpus size for train-step mode.
        #[arg(long, default_value_t = 200)]
        corpus: usize,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchMode {
    Transform,
    TrainStep,
}

/// Error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io(_) | Error::Config(_) | Error::ConfigMismatch(_) | Error::Checkpoint(_) => 2,
            _ => 1,
        };
        Failure {
            code,
            error: e.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<Error>() {
            Some(
                Error::Io(_) | Error::Config(_) | Error::ConfigMismatch(_) | Error::Checkpoint(_),
            ) => 2,
            Some(_) => 1,
            None if error.downcast_ref::<std::io::Error>().is_some() => 2,
            None => 1,
        };
        Failure { code, error }
    }
}

fn config_error(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: error.into(),
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LEMON_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Transform { input, out } => cmd_transform(&input, &out),
        Command::Pretrain {
            corpus,
            config,
            out,
            resume,
            overrides,
        } => cmd_pretrain(&corpus, config.as_deref(), &out, resume, &overrides),
        Command::Gradcheck {
            seed,
            depth,
            hidden,
            inject_fault,
        } => cmd_gradcheck(seed, depth, hidden, inject_fault.as_deref()),
        Command::Embed {
            corpus,
            ckpt,
            out,
            chunk,
        } => cmd_embed(&corpus, &ckpt, &out, chunk),
        Command::Bench {
            mode,
            sizes,
            degree_cap,
            repeats,
            corpus,
            steps,
            seed,
        } => cmd_bench(mode, &sizes, degree_cap, repeats, corpus, steps, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn cmd_transform(input: &Path, out: &Path) -> CmdResult {
    let corpus = load_corpus(input)?;
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let views = transform_corpus(&corpus.graphs, threads)?;
    let mut w = create(out)?;
    write_line_graphs(&mut w, &views)?;
    w.flush().map_err(Error::from)?;
    let s = transform_stats(&corpus.graphs, &views);
    println!("graphs {}", s.graphs);
    println!("skipped_edgeless {}", corpus.rejected_empty.len());
    println!("total_edges {}", s.total_edges);
    println!("total_line_edges {}", s.total_line_edges);
    println!("mean_blowup {:.6}", s.mean_blowup);
    Ok(())
}

fn parse_override(s: &str) -> Result<(String, String), Failure> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| config_error(anyhow::anyhow!("override {s:?} is not KEY=VALUE")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn cmd_pretrain(
    corpus: &Path,
    config_path: Option<&Path>,
    out: &Path,
    resume: bool,
    overrides: &[String],
) -> CmdResult {
    let file_pairs = match config_path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("cannot read {}", p.display()))
                .map_err(config_error)?;
            config::parse_pairs(&text)
                .with_context(|| format!("in {}", p.display()))
                .map_err(config_error)?
        }
        None => Vec::new(),
    };
    let overrides = overrides
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>, _>>()?;
    let cfg = config::resolve(&file_pairs, &overrides).map_err(config_error)?;
    eprintln!("# resolved config");
    eprint!("{}", config::render(&cfg));

    let graphs = load_corpus(corpus)?.graphs;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let ckpt_path = out.join(CHECKPOINT_FILE);
    let metrics_path = out.join(METRICS_FILE);
    let mut trainer = if resume {
        let ckpt = Checkpoint::load(&ckpt_path)?;
        log::info!(
            "resuming at step {} after {} epochs",
            ckpt.step,
            ckpt.epochs_done
        );
        Trainer::resume(graphs, cfg, ckpt)?
    } else {
        Trainer::new(graphs, cfg)?
    };
    let metrics_file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(resume)
        .truncate(!resume)
        .open(&metrics_path)
        .with_context(|| format!("cannot open {}", metrics_path.display()))?;
    let mut metrics = BufWriter::new(metrics_file);
    let records = trainer.run(&mut |rec| {
        serde_json::to_writer(&mut metrics, rec).map_err(std::io::Error::from)?;
        metrics.write_all(b"\n")?;
        Ok(())
    })?;
    metrics.flush().map_err(Error::from)?;
    trainer.checkpoint().save(&ckpt_path)?;
    for (epoch, mean) in epoch_means(&records) {
        println!("epoch {} mean_loss {:.6}", epoch + 1, mean);
    }
    Ok(())
}

fn cmd_gradcheck(seed: u64, depth: usize, hidden: usize, fault: Option<&str>) -> CmdResult {
    let fault = match fault {
        None => None,
        Some(name) => Some(
            Primitive::from_name(name)
                .ok_or_else(|| config_error(anyhow::anyhow!("unknown primitive {name:?}")))?,
        ),
    };
    let report = run_gradcheck(&GradcheckOptions {
        seed,
        depth,
        hidden,
        fault,
    })?;
    for c in &report.components {
        println!(
            "{:<12} {:.3e} {}",
            c.component,
            c.max_rel_error,
            if c.passed { "ok" } else { "FAIL" }
        );
    }
    let failing: Vec<&str> = report.failing().map(|c| c.component.as_str()).collect();
    if failing.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: 1,
            error: anyhow::anyhow!("gradient check failed: {}", failing.join(", ")),
        })
    }
}

fn cmd_embed(corpus: &Path, ckpt: &Path, out: &Path, chunk: usize) -> CmdResult {
    let graphs = load_corpus(corpus)?.graphs;
    let ckpt = Checkpoint::load(ckpt)?;
    let vocab = ckpt.params.config().vocab;
    for (i, g) in graphs.iter().enumerate() {
        if let Err((value, size)) = g.check_vocab(&vocab) {
            return Err(anyhow::anyhow!(
                "graph {}: feature {value} outside vocabulary of size {size}",
                i + 1
            )
            .into());
        }
    }
    let rows = embed_corpus(&graphs, &ckpt.params, chunk)?;
    let mut w = create(out)?;
    for r in rows {
        serde_json::to_writer(&mut w, &r).context("serializing embedding")?;
        w.write_all(b"\n").map_err(Error::from)?;
    }
    w.flush().map_err(Error::from)?;
    Ok(())
}

fn cmd_bench(
    mode: BenchMode,
    sizes: &[usize],
    degree_cap: usize,
    repeats: usize,
    corpus: usize,
    steps: usize,
    seed: u64,
) -> CmdResult {
    match mode {
        BenchMode::Transform => {
            let sizes: [usize; 3] = sizes
                .try_into()
                .map_err(|_| config_error(anyhow::anyhow!("--sizes takes exactly three values")))?;
            let r = bench_transform(&TransformBenchOptions {
                sizes,
                degree_cap,
                repeats,
                seed,
                ..TransformBenchOptions::default()
            })?;
            for p in &r.points {
                println!(
                    "graphs {} edges {} seconds {:.6}",
                    p.graphs, p.total_edges, p.seconds
                );
            }
            println!("exponent {:.3}", r.exponent);
            for s in &r.stars {
                println!(
                    "star {} line_edges {} expected {}",
                    s.degree, s.line_edges, s.expected
                );
            }
        }
        BenchMode::TrainStep => {
            let mut cfg = lemon_core::pipeline::TrainConfig::desk();
            cfg.seed = seed;
            let r = bench_train_step(corpus, steps, &cfg)?;
            println!("transform_passes {}", r.transform_passes);
            println!("transform_once_seconds {:.6}", r.transform_seconds);
            println!("steps {}", r.steps);
            let n = r.steps.max(1) as f64;
            println!("forward_seconds_per_step {:.6}", r.forward_seconds / n);
            println!("backward_seconds_per_step {:.6}", r.backward_seconds / n);
            println!("optimizer_seconds_per_step {:.6}", r.optimizer_seconds / n);
        }
    }
    Ok(())
}
