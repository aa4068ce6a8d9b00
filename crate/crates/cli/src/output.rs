use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::CliError;

/// Outputs held in memory until the whole command has succeeded.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    /// Writes every file through a temporary name and renames it into place.
    /// On any failure the files written so far are removed.
    pub fn commit(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        let out_err = |p: &Path, e: std::io::Error| CliError::Output(format!("{}: {e}", p.display()));
        fs::create_dir_all(dir).map_err(|e| out_err(dir, e))?;
        let mut written: Vec<PathBuf> = Vec::new();
        let result = (|| {
            for (name, bytes) in &self.files {
                let target = dir.join(name);
                let tmp = dir.join(format!(".{name}.partial"));
                let res = fs::File::create(&tmp)
                    .and_then(|mut f| f.write_all(bytes).and_then(|_| f.sync_all()))
                    .and_then(|_| fs::rename(&tmp, &target));
                if let Err(e) = res {
                    let _ = fs::remove_file(&tmp);
                    return Err(out_err(&target, e));
                }
                written.push(target);
            }
            Ok(())
        })();
        match result {
            Ok(()) => Ok(written),
            Err(e) => {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                Err(e)
            }
        }
    }
}
