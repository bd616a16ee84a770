//! Output directory with atomic writes and a digest inventory.

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileRecord {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

pub struct OutputDir {
    dir: PathBuf,
    files: Vec<FileRecord>,
}

/// Writer that hashes everything passing through it.
struct Hashing<W> {
    inner: W,
    hasher: Sha256,
    bytes: u64,
}

impl<W: Write> Write for Hashing<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        self.bytes += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
        Ok(OutputDir { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[FileRecord] {
        &self.files
    }

    /// Writes `name` through a temporary file in the same directory, then renames it.
    pub fn write<F>(&mut self, name: &str, fill: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let record = self.write_untracked(name, fill)?;
        self.files.retain(|f| f.name != name);
        self.files.push(record);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)
        })
    }

    fn write_untracked<F>(&self, name: &str, fill: F) -> Result<FileRecord, CliError>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let target = self.dir.join(name);
        let err = |e: std::io::Error| CliError::io(target.display(), e);
        let tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(err)?;
        let (hasher, bytes) = {
            let mut w = Hashing { inner: BufWriter::new(tmp.as_file()), hasher: Sha256::new(), bytes: 0 };
            fill(&mut w).map_err(err)?;
            w.flush().map_err(err)?;
            (w.hasher, w.bytes)
        };
        tmp.as_file().sync_all().map_err(err)?;
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644)).map_err(err)?;
        }
        tmp.persist(&target).map_err(|e| err(e.error))?;
        Ok(FileRecord { name: name.to_string(), bytes, sha256: hex::encode(hasher.finalize()) })
    }

    /// The manifest is not listed in its own inventory.
    pub fn write_manifest(&self, manifest: &serde_json::Value) -> Result<(), CliError> {
        self.write_untracked(MANIFEST, |w| {
            serde_json::to_writer_pretty(&mut *w, manifest)?;
            writeln!(w)
        })
        .map(|_| ())
    }
}
