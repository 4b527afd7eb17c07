use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use hcmt_core::checkpoint::Checkpoint;
use hcmt_core::data::load_dataset;
use hcmt_core::metrics::{aggregate, Metric};
use hcmt_core::trainer::{evaluate_network, StepRecord, Trainer};
use hcmt_core::{Error, TrainConfig, TrainReport};

use crate::config::{self, mode_name};
use crate::evaluate::write_scores;
use crate::failure::{write_err, CliResult, Failure};
use crate::run_dir::{resolve_out, RunDir};
use crate::ConfigArgs;

pub const SNAPSHOT: &str = "config.cfg";
pub const STEPS: &str = "steps.jsonl";
pub const CHECKPOINTS: &str = "checkpoints";

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Run directory. Relative paths resolve under `$HCMT_RUN_ROOT`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Continue the run in `--out` from its latest checkpoint, using its
    /// config snapshot.
    #[arg(long, conflicts_with_all = ["config", "set"])]
    pub resume: bool,
}

pub fn run(args: TrainArgs) -> CliResult<()> {
    if args.resume {
        let out = args
            .out
            .as_deref()
            .ok_or_else(|| Failure::config("--resume needs --out pointing at an existing run"))?;
        return resume(RunDir::reopen(resolve_out(Some(out), ""))?);
    }
    let cfg = config::resolve(&args.config, None)?;
    // Data problems surface before anything is written.
    let data = load_dataset(&cfg.data)?;
    let mut dir = RunDir::create(resolve_out(args.out.as_deref(), &mode_name(&cfg)))?;
    dir.write(SNAPSHOT, cfg.to_text())?;
    dir.write("split.txt", data.split().to_text())?;
    dir.log(&format!(
        "training {} for {} iterations into {}",
        config::method_label(&cfg),
        cfg.total_iterations,
        dir.path().display()
    ));
    let trainer = Trainer::new(&cfg)?;
    drive(&mut dir, trainer, &cfg, &data, Vec::new())
}

fn resume(mut dir: RunDir) -> CliResult<()> {
    let text = config::read_text(&dir.join(SNAPSHOT))?;
    let cfg = config::resolve(&crate::ConfigArgs::default(), Some(&text))?;
    let ckpt_path = latest_checkpoint(&dir.join(CHECKPOINTS))?;
    let ckpt = Checkpoint::<f32>::load(&ckpt_path)?;
    let data = load_dataset(&cfg.data)?;
    let previous: Vec<StepRecord> = read_steps(&dir.join(STEPS))?
        .into_iter()
        .filter(|r| r.t < ckpt.iteration)
        .collect();
    if previous.len() != ckpt.iteration {
        return Err(Failure::other(format!(
            "{} holds {} records before iteration {}",
            STEPS,
            previous.len(),
            ckpt.iteration
        )));
    }
    dir.log(&format!("resuming from {} at iteration {}", ckpt_path.display(), ckpt.iteration));
    let trainer = Trainer::resume(&cfg, ckpt)?;
    drive(&mut dir, trainer, &cfg, &data, previous)
}

/// Newest `iter_*.ckpt` or `final.ckpt` in `dir`.
fn latest_checkpoint(dir: &Path) -> CliResult<PathBuf> {
    let entries = std::fs::read_dir(dir).map_err(|e| Failure::config(format!("{}: {e}", dir.display())))?;
    let mut best: Option<(usize, PathBuf)> = None;
    for entry in entries.filter_map(|e| e.ok()) {
        let name = entry.file_name().to_string_lossy().into_owned();
        let rank = if name == "final.ckpt" {
            usize::MAX
        } else if let Some(n) = name.strip_prefix("iter_").and_then(|s| s.strip_suffix(".ckpt")) {
            match n.parse() {
                Ok(n) => n,
                Err(_) => continue,
            }
        } else {
            continue;
        };
        if best.as_ref().map_or(true, |(r, _)| rank > *r) {
            best = Some((rank, entry.path()));
        }
    }
    best.map(|(_, p)| p)
        .ok_or_else(|| Failure::config(format!("no checkpoints in {}", dir.display())))
}

fn read_steps(path: &Path) -> CliResult<Vec<StepRecord>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Failure::other(format!("{}: {e}", path.display()))),
    };
    BufReader::new(file)
        .lines()
        .map(|line| {
            let line = line.map_err(|e| Failure::other(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&line).map_err(|e| Failure::other(format!("{}: {e}", path.display())))
        })
        .collect()
}

fn write_steps(path: &Path, records: &[StepRecord]) -> CliResult<File> {
    let mut f = File::create(path).map_err(|e| write_err(path, e))?;
    for r in records {
        writeln!(f, "{}", serde_json::to_string(r).expect("records serialize")).map_err(|e| write_err(path, e))?;
    }
    Ok(f)
}

fn drive(
    dir: &mut RunDir,
    mut trainer: Trainer,
    cfg: &TrainConfig,
    data: &hcmt_core::data::Dataset,
    previous: Vec<StepRecord>,
) -> CliResult<()> {
    let steps_path = dir.join(STEPS);
    let mut steps = write_steps(&steps_path, &previous)?;
    let every = (cfg.total_iterations / 20).max(1);
    let mut lines = Vec::new();
    let mut io_error = None;
    let outcome = trainer.run(data, Some(&dir.join(CHECKPOINTS)), |r| {
        if io_error.is_none() {
            if let Err(e) = writeln!(steps, "{}", serde_json::to_string(r).expect("records serialize")) {
                io_error = Some(e);
            }
        }
        if (r.t + 1) % every == 0 || r.t + 1 == cfg.total_iterations {
            lines.push(format!(
                "iter {:>6} lr {:.2e} lambda {:.4} l_sup {:.5} l_unsup {:.6} total {:.5}",
                r.t + 1,
                r.lr,
                r.lambda,
                r.l_sup,
                r.l_unsup,
                r.total
            ));
        }
    });
    for l in &lines {
        dir.log(l);
    }
    if let Some(e) = io_error {
        return Err(write_err(&steps_path, e));
    }
    let mut report = match outcome {
        Ok(r) => r,
        Err(e @ Error::NonFinite { .. }) => return Err(non_finite(dir, &trainer, e)),
        Err(e) => return Err(e.into()),
    };
    let mut records = previous;
    records.append(&mut report.records);
    let report = TrainReport { records, ..report };
    report
        .write_csv(&dir.join("report.csv"))
        .map_err(|e| write_err(&dir.join("report.csv"), e))?;

    let mut summary = report.summary();
    summary["mode"] = serde_json::Value::String(mode_name(cfg));
    if !data.test.is_empty() {
        let scores = evaluate_network(trainer.eval_network(), &data.test, cfg)?;
        let mean = aggregate(&scores, cfg.eval_empty_policy)?;
        let table = write_scores(dir, "metrics", &config::method_label(cfg), &scores, &mean, &Metric::ALL)?;
        dir.log(&format!("test split:\n{table}"));
        summary["test"] = serde_json::to_value(&mean).expect("scores serialize");
    }
    dir.write("summary.json", serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
    dir.log(&format!("finished in {:.1}s", report.wall_clock_seconds));
    dir.keep();
    Ok(())
}

/// Keeps the run directory with a diagnostic dump and the state at the
/// failing iteration.
fn non_finite(dir: &mut RunDir, trainer: &Trainer, e: Error) -> Failure {
    dir.keep();
    let (iteration, detail) = match &e {
        Error::NonFinite { iteration, detail } => (*iteration, detail.clone()),
        _ => unreachable!("only called for non-finite errors"),
    };
    let state = dir.join(CHECKPOINTS).join("diverged.ckpt");
    let saved = std::fs::create_dir_all(dir.join(CHECKPOINTS))
        .ok()
        .and_then(|_| trainer.checkpoint().save(&state).ok())
        .map(|_| state);
    let dump = serde_json::json!({
        "iteration": iteration,
        "detail": detail,
        "checkpoint": saved,
    });
    let _ = dir.write("nonfinite.json", serde_json::to_string_pretty(&dump).expect("dump serializes"));
    dir.log(&format!("aborted: {e}"));
    e.into()
}
