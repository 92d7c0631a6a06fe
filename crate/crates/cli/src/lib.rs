//! The `marn` command line: dataset generation, training, evaluation,
//! gradient checking and attention export driven by TOML configs.
//!
//! Exit codes: 0 success, 2 config or input error, 3 training divergence,
//! 4 gradient-check failure.

pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use indexmap::IndexMap;
use marn_core::checkpoint::{load_checkpoint, save_checkpoint};
use marn_core::data::{generate_synthetic, load_jsonl, write_jsonl_to, DatasetSplit};
use marn_core::gradcheck::{check_params, GradCheckRow, DEFAULT_STEP};
use marn_core::harness::{evaluate, train, write_history_csv, HarnessError};
use marn_core::tape::Fault;
use marn_core::{Marn, MultimodalSequence, ParamStore, Tape, Task};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use config::{GenConfig, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_GRADCHECK: i32 = 4;

/// Largest model `gradcheck` accepts.
pub const GRADCHECK_MAX_PARAMS: usize = 5000;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
const GRADCHECK_STEPS: usize = 5;

#[derive(Debug, Parser)]
#[command(name = "marn", version, about = "Multi-attention recurrent network for multimodal sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset
    Gen(Common),
    /// Train a model and evaluate it on the test split
    Train(Common),
    /// Evaluate a checkpoint on the test split
    Eval {
        #[command(flatten)]
        common: Common,
        /// defaults to <out_dir>/checkpoint.json
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Compare analytic and numeric gradients of every parameter tensor
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Export the attention coefficients of one sequence as CSV
    Attn {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        id: String,
        /// defaults to <out_dir>/checkpoint.json
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// output directory, overriding the config
    #[arg(long)]
    out: Option<PathBuf>,
    /// overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config, self.seed)?;
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        Ok(cfg)
    }
}

/// Parameter tensors whose gradients disagree with finite differences.
#[derive(Debug)]
pub struct GradcheckFailure(pub Vec<String>);

impl fmt::Display for GradcheckFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "gradient check failed for: {}", self.0.join(", "))
    }
}

impl std::error::Error for GradcheckFailure {}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Output goes to `out`, diagnostics to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

/// Maps an error chain onto the exit-code table.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<GradcheckFailure>() {
            return EXIT_GRADCHECK;
        }
        if let Some(HarnessError::Divergence { .. }) = cause.downcast_ref::<HarnessError>() {
            return EXIT_DIVERGED;
        }
    }
    EXIT_INPUT
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Gen(c) => cmd_gen(&c, out),
        Command::Train(c) => cmd_train(&c.run_config()?, out),
        Command::Eval { common, checkpoint } => cmd_eval(&common.run_config()?, checkpoint, out),
        Command::Gradcheck { common, inject_fault } => {
            let fault = match inject_fault.as_deref() {
                None => None,
                Some("tanh") => Some(Fault::TanhDerivative),
                Some(other) => bail!("unknown fault {other:?}"),
            };
            cmd_gradcheck(&common.run_config()?, fault, out)
        }
        Command::Attn { common, id, checkpoint } => cmd_attn(&common.run_config()?, &id, checkpoint, out),
    }
}

/// Writes every file into a temporary sibling first and renames only after
/// all of them succeeded.
fn write_all_atomic(dir: &Path, files: &[(&str, Vec<u8>)]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let mut staged = Vec::new();
    let result = (|| -> Result<()> {
        for (name, bytes) in files {
            let tmp = dir.join(format!(".{name}.tmp"));
            staged.push(tmp.clone());
            fs::write(&tmp, bytes).with_context(|| format!("cannot write {}", tmp.display()))?;
        }
        for (name, _) in files {
            let tmp = dir.join(format!(".{name}.tmp"));
            fs::rename(&tmp, dir.join(name)).with_context(|| format!("cannot write {}", dir.join(name).display()))?;
        }
        Ok(())
    })();
    if result.is_err() {
        for tmp in staged {
            let _ = fs::remove_file(tmp);
        }
    }
    result
}

fn jsonl_bytes(seqs: &[MultimodalSequence]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_jsonl_to(&mut buf, seqs)?;
    Ok(buf)
}

fn cmd_gen(args: &Common, out: &mut dyn Write) -> Result<()> {
    let cfg = GenConfig::load(&args.config, args.seed)?;
    let dir = args.out.clone().or(cfg.out_dir.clone()).context("no output directory: pass --out or set out_dir")?;
    let split = generate_synthetic(&cfg.task, cfg.n)?;
    let manifest = json!({
        "n": cfg.n,
        "seed": cfg.task.seed,
        "counts": { "train": split.train.len(), "validation": split.validation.len(), "test": split.test.len() },
        "task": cfg.task,
    });
    let mut manifest = serde_json::to_vec_pretty(&manifest)?;
    manifest.push(b'\n');
    let files = [
        ("train.jsonl", jsonl_bytes(&split.train)?),
        ("validation.jsonl", jsonl_bytes(&split.validation)?),
        ("test.jsonl", jsonl_bytes(&split.test)?),
        ("manifest.json", manifest),
    ];
    write_all_atomic(&dir, &files)?;
    writeln!(
        out,
        "wrote {} train, {} validation, {} test sequences to {}",
        split.train.len(),
        split.validation.len(),
        split.test.len(),
        dir.display()
    )?;
    Ok(())
}

fn load_split(cfg: &RunConfig) -> Result<DatasetSplit> {
    let paths = cfg.data()?;
    let load = |p: &Path| load_jsonl(p).with_context(|| format!("cannot load {}", p.display()));
    Ok(DatasetSplit { train: load(&paths.train)?, validation: load(&paths.validation)?, test: load(&paths.test)? })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let tc = cfg.train_config()?;
    let split = load_split(cfg)?;
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("cannot create {}", cfg.out_dir.display()))?;
    let (model, init) = Marn::build(&cfg.model)?;
    let outcome = train(&model, &init, &split.train, &split.validation, tc)?;

    let mut ckpt = create(&cfg.out_dir.join("checkpoint.json"))?;
    save_checkpoint(&mut ckpt, &cfg.model, &outcome.params)?;
    ckpt.flush()?;
    let mut hist = create(&cfg.out_dir.join("history.csv"))?;
    write_history_csv(&mut hist, &outcome.history)?;
    hist.flush()?;

    let report = evaluate(&model, &outcome.params, &split.test)?;
    let doc = json!({
        "variant": cfg.model.variant.as_str(),
        "params": outcome.params.numel(),
        "epochs_run": outcome.history.len(),
        "best_epoch": outcome.best_epoch,
        "test": report,
    });
    let text = serde_json::to_string_pretty(&doc)?;
    fs::write(cfg.out_dir.join("report.json"), format!("{text}\n"))?;
    writeln!(out, "{text}")?;
    Ok(())
}

fn restore(cfg: &RunConfig, checkpoint: Option<PathBuf>) -> Result<(Marn, ParamStore)> {
    let path = checkpoint.unwrap_or_else(|| cfg.out_dir.join("checkpoint.json"));
    let file = File::open(&path).with_context(|| format!("cannot open checkpoint {}", path.display()))?;
    let store = load_checkpoint(std::io::BufReader::new(file), &cfg.model)
        .with_context(|| format!("checkpoint {} does not match the config", path.display()))?;
    let (model, _) = Marn::layout(&cfg.model)?;
    Ok((model, store))
}

fn cmd_eval(cfg: &RunConfig, checkpoint: Option<PathBuf>, out: &mut dyn Write) -> Result<()> {
    let test_path = &cfg.data()?.test;
    let test = load_jsonl(test_path).with_context(|| format!("cannot load {}", test_path.display()))?;
    let (model, store) = restore(cfg, checkpoint)?;
    let report = evaluate(&model, &store, &test)?;
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(())
}

/// Random input of length 5 drawn from `seed`, with a valid label.
pub fn gradcheck_sequence(model: &Marn, seed: u64) -> MultimodalSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let streams: IndexMap<String, Vec<Vec<f64>>> = model
        .config()
        .modalities
        .iter()
        .map(|m| {
            let rows = (0..GRADCHECK_STEPS).map(|_| (0..m.d_in).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            (m.name.clone(), rows)
        })
        .collect();
    let label = match model.config().task {
        Task::Classification { classes } => rng.gen_range(0..classes) as f64,
        Task::Regression => rng.gen_range(-1.0..1.0),
    };
    MultimodalSequence { id: "gradcheck".into(), label, streams }
}

/// Per-tensor gradient check of the loss on [`gradcheck_sequence`].
pub fn gradcheck_rows(cfg: &RunConfig, fault: Option<Fault>) -> Result<Vec<GradCheckRow>> {
    let (model, mut store) = Marn::build(&cfg.model)?;
    if store.numel() > GRADCHECK_MAX_PARAMS {
        bail!("gradcheck needs a tiny model: {} parameters exceed the limit of {GRADCHECK_MAX_PARAMS}", store.numel());
    }
    let seq = gradcheck_sequence(&model, cfg.seed);
    let rows = check_params(
        &mut store,
        DEFAULT_STEP,
        |s| model.loss_value(s, &seq),
        |s| {
            let mut tape = Tape::new();
            if let Some(f) = fault {
                tape.inject_fault(f);
            }
            let loss = model.loss(&mut tape, s, &seq)?;
            tape.backward(loss, s)
        },
    )?;
    Ok(rows)
}

fn cmd_gradcheck(cfg: &RunConfig, fault: Option<Fault>, out: &mut dyn Write) -> Result<()> {
    let rows = gradcheck_rows(cfg, fault)?;
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(9);
    writeln!(out, "{:width$}  {:>6}  {:>12}  status", "parameter", "numel", "max_rel_err")?;
    let mut failing = Vec::new();
    for r in &rows {
        let ok = r.max_error <= GRADCHECK_TOLERANCE;
        if !ok {
            failing.push(r.name.clone());
        }
        writeln!(out, "{:width$}  {:>6}  {:>12.3e}  {}", r.name, r.numel, r.max_error, if ok { "ok" } else { "FAIL" })?;
    }
    if failing.is_empty() {
        Ok(())
    } else {
        Err(GradcheckFailure(failing).into())
    }
}

fn cmd_attn(cfg: &RunConfig, id: &str, checkpoint: Option<PathBuf>, out: &mut dyn Write) -> Result<()> {
    if !cfg.model.variant.has_mab() {
        bail!("variant {} has no attention block", cfg.model.variant.as_str());
    }
    let split = load_split(cfg)?;
    let seq = split.find(id).with_context(|| format!("no sequence with id {id:?}"))?;
    let (model, store) = restore(cfg, checkpoint)?;
    let trace = model.run(&store, seq, true)?.trace.context("no attention trace recorded")?;
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("cannot create {}", cfg.out_dir.display()))?;
    let path = cfg.out_dir.join(format!("attention-{id}.csv"));
    let mut sink = create(&path)?;
    let rows = trace.write_csv(&mut sink)?;
    sink.flush()?;
    writeln!(out, "wrote {rows} rows to {}", path.display())?;
    Ok(())
}
