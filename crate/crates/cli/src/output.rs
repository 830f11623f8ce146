use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

/// The run directory. Every file goes through [`RunDir::write`] so the
/// manifest can list its checksum.
pub struct RunDir {
    root: PathBuf,
    files: BTreeMap<String, String>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| CliError::output(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Renders into memory, then writes `rel` (a `/`-separated path).
    pub fn write<E>(
        &mut self,
        rel: &str,
        render: impl FnOnce(&mut Vec<u8>) -> Result<(), E>,
    ) -> Result<(), CliError>
    where
        E: std::fmt::Display,
    {
        let path = self.root.join(rel);
        let mut buf = Vec::new();
        render(&mut buf).map_err(|e| {
            CliError::output(&path, std::io::Error::other(e.to_string()))
        })?;
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
        }
        std::fs::write(&path, &buf).map_err(|e| CliError::output(&path, e))?;
        self.files.insert(rel.to_string(), hex(&Sha256::digest(&buf)));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        self.write(rel, |buf| {
            serde_json::to_writer_pretty(&mut *buf, value)?;
            buf.push(b'\n');
            Ok::<_, serde_json::Error>(())
        })
    }

    pub fn files(&self) -> &BTreeMap<String, String> {
        &self.files
    }

    /// `manifest.json`: command, version, seed, resolved config and the
    /// sha256 of every file written. No timestamps, no thread count.
    pub fn finish(mut self, command: &str, cfg: &RunConfig) -> Result<PathBuf, CliError> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            command: &'a str,
            version: &'a str,
            seed: u64,
            config: &'a RunConfig,
            files: &'a BTreeMap<String, String>,
        }
        let files = std::mem::take(&mut self.files);
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: cfg.seed,
            config: cfg,
            files: &files,
        };
        let path = self.root.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::output(&path, std::io::Error::other(e)))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::output(&path, e))?;
        Ok(path)
    }
}

/// File-name-safe version of a scope or sector name.
pub fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stems() {
        assert_eq!(file_stem("Real Estate"), "Real_Estate");
        assert_eq!(file_stem("a/b"), "a_b");
    }

    #[test]
    fn checksums_are_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = RunDir::create(dir.path()).unwrap();
        run.write("x/y.txt", |b| {
            b.extend_from_slice(b"abc");
            Ok::<_, std::io::Error>(())
        })
        .unwrap();
        assert_eq!(
            run.files()["x/y.txt"],
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(std::fs::read(dir.path().join("x/y.txt")).unwrap(), b"abc");
    }
}
