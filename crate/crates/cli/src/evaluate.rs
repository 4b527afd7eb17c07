use std::path::PathBuf;

use clap::{Args, ValueEnum};
use hcmt_core::checkpoint::Checkpoint;
use hcmt_core::data::load_dataset;
use hcmt_core::metrics::{aggregate, format_table, write_case_csv, CaseScore, MeanScores, Metric};
use hcmt_core::trainer::{evaluate_network, EvalNetwork, Trainer};
use hcmt_core::Network;

use crate::config;
use crate::failure::{write_err, CliResult, Failure};
use crate::run_dir::{resolve_out, RunDir};
use crate::ConfigArgs;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Test,
    Labeled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Student,
    Teacher,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Checkpoint to score. Without one, freshly initialized weights are
    /// scored. Its embedded config is the base unless `--config` is given.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    pub split: Split,
    /// Overrides `eval.network`.
    #[arg(long, value_enum)]
    pub network: Option<Which>,
    /// Comma-separated subset of dice, jaccard, asd, hd95.
    #[arg(long, default_value = "dice,jaccard,asd,hd95")]
    pub metrics: String,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

pub fn run(args: EvaluateArgs) -> CliResult<()> {
    let metrics = Metric::parse_list(&args.metrics)?;
    let ckpt = args
        .checkpoint
        .as_deref()
        .map(Checkpoint::<f32>::load)
        .transpose()?;
    let embedded = match (&args.config.config, &ckpt) {
        (None, Some(c)) => c.config.clone(),
        _ => None,
    };
    let mut cfg = config::resolve(&args.config, embedded.as_deref())?;
    if let Some(w) = args.network {
        cfg.eval_network = match w {
            Which::Student => EvalNetwork::Student,
            Which::Teacher => EvalNetwork::Teacher,
        };
    }
    let network = match &ckpt {
        Some(c) => {
            if c.spec != cfg.network {
                return Err(Failure::config(
                    "checkpoint network spec differs from the configured network",
                ));
            }
            let params = match cfg.eval_network {
                EvalNetwork::Student => c.student.clone(),
                EvalNetwork::Teacher => c
                    .teacher
                    .clone()
                    .ok_or_else(|| Failure::config("checkpoint has no teacher to evaluate"))?,
            };
            Network::from_parameters(&cfg.network, params)?
        }
        None => Trainer::new(&cfg)?.student().clone(),
    };
    let data = load_dataset(&cfg.data)?;
    let cases = match args.split {
        Split::Test => &data.test,
        Split::Labeled => &data.labeled,
    };
    if cases.is_empty() {
        return Err(hcmt_core::Error::Data("the selected split has no cases".into()).into());
    }
    let mut dir = RunDir::create(resolve_out(args.out.as_deref(), "eval"))?;
    let scores = evaluate_network(&network, cases, &cfg)?;
    let mean = aggregate(&scores, cfg.eval_empty_policy)?;
    let label = if ckpt.is_some() {
        config::method_label(&cfg)
    } else {
        "initialization".to_string()
    };
    let table = write_scores(&dir, "metrics", &label, &scores, &mean, &metrics)?;
    dir.write("config.cfg", cfg.to_text())?;
    print!("{table}");
    dir.log(&format!("scored {} cases into {}", scores.len(), dir.path().display()));
    dir.keep();
    Ok(())
}

/// Writes `<stem>.csv` (per case), `<stem>.json` (mean) and `<stem>.md`
/// (table); returns the table.
pub fn write_scores(
    dir: &RunDir,
    stem: &str,
    label: &str,
    scores: &[CaseScore],
    mean: &MeanScores,
    metrics: &[Metric],
) -> CliResult<String> {
    let csv_path = dir.join(format!("{stem}.csv"));
    let file = std::fs::File::create(&csv_path).map_err(|e| write_err(&csv_path, e))?;
    write_case_csv(file, scores, metrics)?;
    dir.write(format!("{stem}.json"), serde_json::to_string_pretty(mean).expect("scores serialize"))?;
    let table = format_table(&[(label.to_string(), mean.clone())], metrics);
    dir.write(format!("{stem}.md"), &table)?;
    Ok(table)
}
