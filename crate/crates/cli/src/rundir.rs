use std::fs;
use std::path::{Path, PathBuf};

use crate::{CliError, CliResult};

/// Output directory of one invocation. Files handed out by [`RunDir::file`]
/// are tracked so a failed run can remove what it wrote.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    created: bool,
    written: Vec<PathBuf>,
}

impl RunDir {
    /// Opens `root`, creating it if needed. An existing non-empty directory
    /// is refused when `fresh` is set.
    pub fn open(root: &Path, fresh: bool) -> CliResult<Self> {
        let exists = root.exists();
        if exists && fresh && fs::read_dir(root)?.next().is_some() {
            return Err(CliError::Usage(format!(
                "output directory {} is not empty",
                root.display()
            )));
        }
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            created: !exists,
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Path of an artifact inside the run directory; parent directories are
    /// created on demand.
    pub fn file(&mut self, rel: &str) -> CliResult<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.written.push(path.clone());
        Ok(path)
    }

    /// Removes everything this run wrote; the directory itself too if the
    /// run created it.
    pub fn discard(self) {
        if self.created {
            let _ = fs::remove_dir_all(&self.root);
            return;
        }
        for p in self.written.iter().rev() {
            let _ = fs::remove_file(p);
        }
    }
}
