//! Atomic result files: every file is written to a temporary sibling and
//! renamed into place, so readers never see a partial result.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot encode {path}: {message}")]
    Encode { path: PathBuf, message: String },
}

pub struct OutputDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, OutputError> {
        std::fs::create_dir_all(root).map_err(|source| OutputError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Writes `name` through `fill`, then renames it into place.
    pub fn write_with(
        &mut self,
        name: &str,
        fill: impl FnOnce(&mut dyn Write) -> Result<(), String>,
    ) -> Result<(), OutputError> {
        let path = self.root.join(name);
        let io = |source| OutputError::Io {
            path: path.clone(),
            source,
        };
        let mut tmp = NamedTempFile::new_in(&self.root).map_err(io)?;
        {
            let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
            fill(&mut buf).map_err(|message| OutputError::Encode {
                path: path.clone(),
                message,
            })?;
            buf.flush().map_err(io)?;
        }
        tmp.persist(&path).map_err(|e| io(e.error))?;
        self.written.push(path);
        Ok(())
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), OutputError> {
        self.write_with(name, |w| w.write_all(bytes).map_err(|e| e.to_string()))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), OutputError> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(|e| e.to_string())?;
            w.write_all(b"\n").map_err(|e| e.to_string())
        })
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), OutputError> {
        self.write_with(name, |w| {
            let mut out = csv::Writer::from_writer(w);
            for row in rows {
                out.serialize(row).map_err(|e| e.to_string())?;
            }
            out.flush().map_err(|e| e.to_string())
        })
    }

    /// One JSON document per line.
    pub fn write_json_lines<T: Serialize>(&mut self, name: &str, items: &[T]) -> Result<(), OutputError> {
        self.write_with(name, |w| {
            for item in items {
                serde_json::to_writer(&mut *w, item).map_err(|e| e.to_string())?;
                w.write_all(b"\n").map_err(|e| e.to_string())?;
            }
            Ok(())
        })
    }
}
