//! Outputs are written to a temporary file next to their destination and
//! only renamed into place once every output of a command is complete.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use tempfile::NamedTempFile;

use crate::Invalid;

pub struct Staged {
    tmp: NamedTempFile,
    dest: PathBuf,
}

impl Staged {
    pub fn write<F>(dest: &Path, fill: F) -> Result<Self>
    where
        F: FnOnce(&mut BufWriter<&File>) -> taxkd::Result<()>,
    {
        let dir = match dest.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let tmp = NamedTempFile::new_in(&dir)
            .with_context(|| format!("creating temporary file in {}", dir.display()))?;
        {
            let mut w = BufWriter::new(tmp.as_file());
            fill(&mut w).with_context(|| format!("writing {}", dest.display()))?;
            w.flush()?;
        }
        Ok(Self {
            tmp,
            dest: dest.to_path_buf(),
        })
    }

    fn commit(self) -> Result<()> {
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            self.tmp
                .as_file()
                .set_permissions(fs::Permissions::from_mode(0o644))?;
        }
        self.tmp.as_file().sync_all()?;
        self.tmp
            .persist(&self.dest)
            .with_context(|| format!("moving output into {}", self.dest.display()))?;
        log::info!("wrote {}", self.dest.display());
        Ok(())
    }
}

/// Renames every staged file into place. Nothing is renamed unless all
/// outputs were produced.
pub fn commit_all(staged: Vec<Staged>) -> Result<()> {
    for s in staged {
        s.commit()?;
    }
    Ok(())
}

/// Fails with a validation error unless every path opens for reading.
pub fn require_readable<'a, I: IntoIterator<Item = &'a Path>>(paths: I) -> Result<()> {
    for p in paths {
        if p.is_dir() {
            return Err(Invalid(format!("{} is a directory, expected a file", p.display())).into());
        }
        File::open(p).map_err(|e| Invalid(format!("cannot read {}: {e}", p.display())))?;
    }
    Ok(())
}
