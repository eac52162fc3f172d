use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::RunError;

/// Shortest decimal that parses back to the same `f64`, with an exponent
/// for very small or very large magnitudes.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// and a rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let io = |e: std::io::Error| RunError::Io(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// `<path>.summary.json`.
pub fn summary_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".summary.json");
    PathBuf::from(s)
}

/// Destination of a run: a file (plus summary) or standard output.
pub struct Sink<'a> {
    pub path: Option<&'a Path>,
}

impl Sink<'_> {
    pub fn emit(&self, body: &[u8], summary: &serde_json::Value) -> Result<(), RunError> {
        match self.path {
            Some(path) => {
                write_atomic(path, body)?;
                let mut text = serde_json::to_string_pretty(summary).expect("summary serializes");
                text.push('\n');
                write_atomic(&summary_path(path), text.as_bytes())
            }
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(body)?;
                out.flush()?;
                Ok(())
            }
        }
    }
}
