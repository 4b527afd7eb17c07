use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::failure::{write_err, CliResult, Failure};

pub const RUN_ROOT_ENV: &str = "HCMT_RUN_ROOT";

/// `out` if absolute; otherwise relative to `$HCMT_RUN_ROOT` when set.
/// Without `out`, `<root>/<default_name>` where root defaults to `runs`.
pub fn resolve_out(out: Option<&Path>, default_name: &str) -> PathBuf {
    let root = std::env::var_os(RUN_ROOT_ENV).map(PathBuf::from);
    match (out, root) {
        (Some(p), _) if p.is_absolute() => p.to_path_buf(),
        (Some(p), Some(root)) => root.join(p),
        (Some(p), None) => p.to_path_buf(),
        (None, root) => root.unwrap_or_else(|| PathBuf::from("runs")).join(default_name),
    }
}

/// An output directory that is deleted again unless [`RunDir::keep`] is
/// called, so failed commands leave nothing behind.
pub struct RunDir {
    path: PathBuf,
    created: bool,
    keep: bool,
    log: Option<File>,
}

impl RunDir {
    /// Creates `path`. An existing non-empty directory is refused.
    pub fn create(path: PathBuf) -> CliResult<Self> {
        let existed = path.exists();
        if existed {
            let non_empty = fs::read_dir(&path)
                .map_err(|e| write_err(&path, e))?
                .next()
                .is_some();
            if non_empty {
                return Err(Failure::config(format!(
                    "output directory {} already exists and is not empty",
                    path.display()
                )));
            }
        }
        fs::create_dir_all(&path).map_err(|e| write_err(&path, e))?;
        Ok(RunDir {
            path,
            created: !existed,
            keep: false,
            log: None,
        })
    }

    /// Reopens a directory written by an earlier command.
    pub fn reopen(path: PathBuf) -> CliResult<Self> {
        if !path.is_dir() {
            return Err(Failure::config(format!("run directory {} does not exist", path.display())));
        }
        Ok(RunDir {
            path,
            created: false,
            keep: true,
            log: None,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn join(&self, name: impl AsRef<Path>) -> PathBuf {
        self.path.join(name)
    }

    pub fn keep(&mut self) {
        self.keep = true;
    }

    pub fn write(&self, name: impl AsRef<Path>, contents: impl AsRef<[u8]>) -> CliResult<PathBuf> {
        let path = self.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| write_err(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| write_err(&path, e))?;
        Ok(path)
    }

    /// Appends to `log.txt` and echoes through the logger.
    pub fn log(&mut self, line: &str) {
        log::info!("{line}");
        if self.log.is_none() {
            self.log = OpenOptions::new().create(true).append(true).open(self.join("log.txt")).ok();
        }
        if let Some(f) = &mut self.log {
            let _ = writeln!(f, "{line}");
        }
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        if self.created && !self.keep {
            self.log = None;
            let _ = fs::remove_dir_all(&self.path);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dropped_directories_disappear_unless_kept() {
        let tmp = tempfile::tempdir().unwrap();
        let a = tmp.path().join("a");
        drop(RunDir::create(a.clone()).unwrap());
        assert!(!a.exists());
        let mut kept = RunDir::create(a.clone()).unwrap();
        kept.write("x.txt", "1").unwrap();
        kept.keep();
        drop(kept);
        assert!(a.join("x.txt").is_file());
        assert_eq!(RunDir::create(a).err().unwrap().code, crate::failure::EXIT_CONFIG);
    }
}
