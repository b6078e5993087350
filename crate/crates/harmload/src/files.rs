use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{FileError, FileResult};

/// Writes `bytes` to a sibling temporary file and renames it over `path`, so
/// readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> FileResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| FileError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| FileError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| FileError::io(&tmp, e))?;
    f.sync_all().map_err(|e| FileError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| FileError::io(path, e))
}

pub fn read_string(path: &Path) -> FileResult<String> {
    fs::read_to_string(path).map_err(|e| FileError::io(path, e))
}

/// `serde_json` message without its trailing position, which callers report
/// in their own terms.
pub(crate) fn json_message(e: &serde_json::Error) -> String {
    let s = e.to_string();
    match s.rfind(" at line ") {
        Some(k) => s[..k].to_string(),
        None => s,
    }
}

/// Deserializes one JSON document, naming the offending field on failure.
pub(crate) fn from_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, (usize, String)> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let line = e.inner().line();
        let path = e.path().to_string();
        let msg = json_message(e.inner());
        if path == "." {
            (line, msg)
        } else {
            (line, format!("field `{path}`: {msg}"))
        }
    })?;
    de.end().map_err(|e| (e.line(), json_message(&e)))?;
    Ok(value)
}
