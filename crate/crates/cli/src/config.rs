use std::path::Path;

use hcmt_core::TrainConfig;

use crate::failure::{CliResult, Failure};
use crate::ConfigArgs;

/// Defaults, then `base` text (e.g. a snapshot), then the file, then the
/// overrides.
pub fn resolve(args: &ConfigArgs, base: Option<&str>) -> CliResult<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(text) = base {
        cfg.apply_text(text).map_err(|e| Failure::config(format!("embedded config: {e}")))?;
    }
    if let Some(path) = &args.config {
        let text = read_text(path)?;
        cfg.apply_text(&text)
            .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    }
    for kv in &args.set {
        cfg.apply_override(kv)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))
}

/// Display name of the configured mode, or its flag triple.
pub fn method_label(cfg: &TrainConfig) -> String {
    match cfg.mode() {
        Some(m) => m.label().to_string(),
        None => format!(
            "hs={} hu={} teacher={}",
            cfg.flags.use_hs, cfg.flags.use_hu, cfg.flags.use_teacher
        ),
    }
}

pub fn mode_name(cfg: &TrainConfig) -> String {
    cfg.mode().map_or_else(|| "custom".to_string(), |m| m.name().to_string())
}
