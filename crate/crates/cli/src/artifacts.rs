//! Output-file discipline: locking, overwrite refusal, atomic replacement and
//! the JSON record written beside every artifact.

use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

const LOCK_FILE: &str = ".manic.lock";

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(out: &Path) -> CliResult<Self> {
        let dir = parent_dir(out);
        fs::create_dir_all(&dir)?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(CliError::Usage(format!(
                "{} is locked by another run (remove {} if it is stale)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn parent_dir(out: &Path) -> PathBuf {
    match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Refuses to replace an existing output unless forced.
pub fn check_overwrite(out: &Path, force: bool) -> CliResult<()> {
    if out.exists() && !force {
        return Err(CliError::Usage(format!(
            "{} already exists; pass --force to overwrite",
            out.display()
        )));
    }
    Ok(())
}

fn staging(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    out.with_file_name(name)
}

/// Writes through a temporary sibling so readers never see half a file.
pub fn write_atomic(out: &Path, bytes: &[u8]) -> CliResult<()> {
    let tmp = staging(out);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, out)?;
    Ok(())
}

/// Builds a directory artifact in a staging directory, then swaps it in.
pub fn write_dir_atomic(out: &Path, fill: impl FnOnce(&Path) -> CliResult<()>) -> CliResult<()> {
    let tmp = staging(out);
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    if let Err(e) = fill(&tmp) {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }
    if out.exists() {
        fs::remove_dir_all(out)?;
    }
    fs::rename(&tmp, out)?;
    Ok(())
}

#[derive(Serialize)]
struct RunRecord<'a, M: Serialize> {
    command: &'a str,
    config_hash: String,
    config: &'a RunConfig,
    metrics: &'a M,
}

/// Path of the record kept beside `out`.
pub fn record_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".run.json");
    out.with_file_name(name)
}

/// Writes `<out>.run.json` with the resolved config, its hash and metrics.
pub fn write_record<M: Serialize>(out: &Path, command: &str, cfg: &RunConfig, metrics: &M) -> CliResult<()> {
    let record = RunRecord {
        command,
        config_hash: cfg.hash(),
        config: cfg,
        metrics,
    };
    write_atomic(&record_path(out), &serde_json::to_vec_pretty(&record)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("a.bin");
        let lock = OutputLock::acquire(&out).unwrap();
        assert!(matches!(OutputLock::acquire(&out), Err(CliError::Usage(_))));
        drop(lock);
        assert!(OutputLock::acquire(&out).is_ok());
    }

    #[test]
    fn failed_directory_build_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("model");
        let r = write_dir_atomic(&out, |tmp| {
            fs::create_dir_all(tmp)?;
            fs::write(tmp.join("x"), b"1")?;
            Err(CliError::Runtime("boom".into()))
        });
        assert!(r.is_err());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn overwrite_needs_force() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("a");
        check_overwrite(&out, false).unwrap();
        write_atomic(&out, b"x").unwrap();
        assert!(check_overwrite(&out, false).is_err());
        check_overwrite(&out, true).unwrap();
    }
}
