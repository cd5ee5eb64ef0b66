//! JSON reading with unknown-key detection.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// What to do with keys the file format does not define.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KeyPolicy {
    /// Reject the file.
    #[default]
    Strict,
    /// Log a warning and ignore the key.
    Lax,
}

pub fn parse<T: DeserializeOwned>(text: &str, path: &Path, policy: KeyPolicy) -> Result<T> {
    let json_err = |source| Error::Json { path: path.to_path_buf(), source };
    let mut unknown = Vec::new();
    let mut de = serde_json::Deserializer::from_str(text);
    let value: T = serde_ignored::deserialize(&mut de, |p| unknown.push(p.to_string())).map_err(json_err)?;
    de.end().map_err(json_err)?;
    if !unknown.is_empty() {
        match policy {
            KeyPolicy::Strict => return Err(Error::UnknownKeys { path: path.to_path_buf(), keys: unknown }),
            KeyPolicy::Lax => {
                for key in &unknown {
                    log::warn!("{}: ignoring unknown key {key}", path.display());
                }
            }
        }
    }
    Ok(value)
}

pub fn read<T: DeserializeOwned>(path: &Path, policy: KeyPolicy) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    parse(&text, path, policy)
}

/// Pretty JSON with a trailing newline.
pub fn to_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn write<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_string(value)).map_err(Error::io(path))
}
