//! Small filesystem helpers shared by the artifact writers.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub type IoFailure = (PathBuf, std::io::Error);

/// Writes via a sibling temporary file and rename so readers never observe
/// a partial artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoFailure> {
    let fail = |e| (path.to_path_buf(), e);
    let mut tmp_name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp).map_err(fail)?;
        f.write_all(bytes).map_err(fail)?;
        f.sync_all().map_err(fail)?;
    }
    fs::rename(&tmp, path).map_err(fail)
}

pub fn read_to_string(path: &Path) -> Result<String, IoFailure> {
    fs::read_to_string(path).map_err(|e| (path.to_path_buf(), e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, IoFailure> {
    fs::read(path).map_err(|e| (path.to_path_buf(), e))
}
