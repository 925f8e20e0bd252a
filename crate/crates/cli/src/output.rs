//! Output directory handling: refuse to clobber, clean up on failure.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::{CliError, CliResult};

pub struct OutputDir {
    root: PathBuf,
    created_root: bool,
    written: Vec<PathBuf>,
    committed: bool,
}

impl OutputDir {
    /// A non-empty existing directory is an error unless `force` is set.
    pub fn create(root: &Path, force: bool) -> CliResult<Self> {
        let existed = root.exists();
        if existed {
            let non_empty = fs::read_dir(root)
                .map_err(|e| CliError::Runtime(e.into()))?
                .next()
                .is_some();
            if non_empty && !force {
                return Err(CliError::Usage(anyhow::anyhow!(
                    "output directory {} is not empty (pass --force to overwrite)",
                    root.display()
                )));
            }
        } else {
            fs::create_dir_all(root).map_err(|e| CliError::Runtime(e.into()))?;
        }
        Ok(Self {
            root: root.to_path_buf(),
            created_root: !existed,
            written: Vec::new(),
            committed: false,
        })
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.root.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Runtime(anyhow::anyhow!("{}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.into()))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
        if self.created_root {
            let _ = fs::remove_dir(&self.root);
        }
    }
}
