use std::path::PathBuf;

use clap::Args;
use hcmt_core::data::load_dataset;
use hcmt_core::metrics::{format_table, write_case_csv, MeanScores, Metric};
use hcmt_core::trainer::{run_mode, Mode};
use hcmt_core::TrainConfig;

use crate::config;
use crate::failure::{write_err, CliResult, Failure};
use crate::run_dir::{resolve_out, RunDir};
use crate::ConfigArgs;

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Comma-separated modes, or `all`.
    #[arg(long, default_value = "all")]
    pub modes: String,
    /// Comma-separated seeds. Each seed sets `seed`, `data.split_seed` and
    /// `data.synthetic.seed`; results are averaged over seeds.
    #[arg(long, value_name = "LIST")]
    pub seeds: Option<String>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

fn parse_seeds(s: &str) -> CliResult<Vec<u64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Failure::config(format!("seed {v:?} is not an unsigned integer")))
        })
        .collect()
}

/// Same seeds and data as `base` except for the seed triple.
pub fn seeded(base: &TrainConfig, seed: u64) -> TrainConfig {
    let mut c = base.clone();
    c.seed = seed;
    c.data.split_seed = seed;
    c.data.synthetic_seed = seed;
    c
}

/// Mean of per-seed means. Distances are undefined if any seed's are.
pub fn mean_over_seeds(runs: &[MeanScores]) -> MeanScores {
    let n = runs.len() as f64;
    let avg = |f: fn(&MeanScores) -> Option<f64>| -> Option<f64> {
        runs.iter().map(f).collect::<Option<Vec<f64>>>().map(|v| v.iter().sum::<f64>() / n)
    };
    MeanScores {
        dice: runs.iter().map(|r| r.dice).sum::<f64>() / n,
        jaccard: runs.iter().map(|r| r.jaccard).sum::<f64>() / n,
        asd: avg(|r| r.asd),
        hd95: avg(|r| r.hd95),
        cases: runs.iter().map(|r| r.cases).sum(),
        undefined: runs.iter().map(|r| r.undefined).sum(),
    }
}

pub fn run(args: AblateArgs) -> CliResult<()> {
    let modes = Mode::parse_list(&args.modes)?;
    let base = config::resolve(&args.config, None)?;
    let seeds = match &args.seeds {
        Some(s) => parse_seeds(s)?,
        None => vec![base.seed],
    };
    let datasets = seeds
        .iter()
        .map(|&s| load_dataset(&seeded(&base, s).data))
        .collect::<hcmt_core::Result<Vec<_>>>()?;
    let mut dir = RunDir::create(resolve_out(args.out.as_deref(), "ablate"))?;
    dir.write("config.cfg", base.to_text())?;

    let results_path = dir.join("results.csv");
    let mut results = String::from("seed,mode,dice,jaccard,asd,hd95,undefined\n");
    let mut per_mode: Vec<Vec<MeanScores>> = vec![Vec::new(); modes.len()];
    for (&seed, data) in seeds.iter().zip(&datasets) {
        let cfg = seeded(&base, seed);
        for (k, &mode) in modes.iter().enumerate() {
            dir.log(&format!("seed {seed}: training {}", mode.label()));
            let outcome = run_mode(&cfg, mode, data, None, |_| {})?;
            let sub = format!("{}/seed_{seed}", mode.name());
            let report_path = dir.join(format!("{sub}/report.csv"));
            std::fs::create_dir_all(dir.join(&sub)).map_err(|e| write_err(&dir.join(&sub), e))?;
            outcome.report.write_csv(&report_path)?;
            let cases_path = dir.join(format!("{sub}/metrics.csv"));
            let f = std::fs::File::create(&cases_path).map_err(|e| write_err(&cases_path, e))?;
            write_case_csv(f, &outcome.scores, &Metric::ALL)?;
            let m = &outcome.mean;
            let opt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.6}"));
            results.push_str(&format!(
                "{seed},{},{:.6},{:.6},{},{},{}\n",
                mode.name(),
                m.dice,
                m.jaccard,
                opt(m.asd),
                opt(m.hd95),
                m.undefined
            ));
            dir.log(&format!("seed {seed}: {} dice {:.2}", mode.label(), m.dice));
            per_mode[k].push(outcome.mean);
        }
    }
    std::fs::write(&results_path, results).map_err(|e| write_err(&results_path, e))?;

    let rows: Vec<(String, MeanScores)> = modes
        .iter()
        .zip(&per_mode)
        .map(|(m, runs)| (m.label().to_string(), mean_over_seeds(runs)))
        .collect();
    let table = format_table(&rows, &Metric::ALL);
    dir.write("table.md", &table)?;
    let summary: Vec<serde_json::Value> = rows
        .iter()
        .zip(&modes)
        .map(|((_, s), m)| serde_json::json!({ "mode": m.name(), "seeds": seeds, "mean": s }))
        .collect();
    dir.write("summary.json", serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
    print!("{table}");
    dir.keep();
    Ok(())
}
