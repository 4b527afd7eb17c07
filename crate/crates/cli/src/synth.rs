use std::path::PathBuf;

use clap::{Args, ValueEnum};
use hcmt_core::data::{generate_synthetic, save_mask, save_volume};

use crate::config;
use crate::failure::CliResult;
use crate::run_dir::{resolve_out, RunDir};
use crate::ConfigArgs;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FileFormat {
    Nrrd,
    Nii,
    #[value(name = "nii.gz")]
    NiiGz,
    Raw,
}

impl FileFormat {
    fn extension(self) -> &'static str {
        match self {
            FileFormat::Nrrd => "nrrd",
            FileFormat::Nii => "nii",
            FileFormat::NiiGz => "nii.gz",
            FileFormat::Raw => "raw",
        }
    }
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// `data.synthetic.*` keys shape the generator.
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Number of cases; defaults to labeled + unlabeled + test.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long, value_enum, default_value_t = FileFormat::Nrrd)]
    pub format: FileFormat,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// Writes `<out>/<id>/image.<ext>` and `label.<ext>` per case, plus
/// `data.cfg` with the keys that load the directory back.
pub fn run(args: SynthArgs) -> CliResult<()> {
    let cfg = config::resolve(&args.config, None)?;
    let d = &cfg.data;
    let count = args.count.unwrap_or(d.labeled + d.unlabeled + d.test);
    let cases = generate_synthetic(&d.synthetic, d.synthetic_seed, count)?;
    let mut dir = RunDir::create(resolve_out(args.out.as_deref(), "synthetic"))?;
    let ext = args.format.extension();
    for c in &cases {
        let case_dir = dir.join(c.id());
        std::fs::create_dir_all(&case_dir).map_err(|e| crate::failure::write_err(&case_dir, e))?;
        save_volume(&case_dir.join(format!("image.{ext}")), &c.volume)?;
        if let Some(m) = &c.mask {
            save_mask(&case_dir.join(format!("label.{ext}")), m, c.volume.spacing())?;
        }
    }
    let root = std::fs::canonicalize(dir.path()).unwrap_or_else(|_| dir.path().to_path_buf());
    let patch = d.synthetic_patch;
    dir.write(
        "data.cfg",
        format!(
            "data.source = directory\ndata.root = {}\ndata.image_pattern = {{id}}/image.{ext}\n\
             data.label_pattern = {{id}}/label.{ext}\ndata.patch = {},{},{}\n",
            root.display(),
            patch[0],
            patch[1],
            patch[2]
        ),
    )?;
    dir.log(&format!("wrote {count} cases to {}", dir.path().display()));
    dir.keep();
    Ok(())
}
