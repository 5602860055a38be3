use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Parses a file holding either one JSON object or an array of them.
pub fn read_many<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = read_text(path)?;
    let parsed = if text.trim_start().starts_with('[') {
        serde_json::from_str(&text)
    } else {
        serde_json::from_str(&text).map(|one| vec![one])
    };
    parsed.with_context(|| format!("{}: malformed JSON", path.display()))
}

/// Writes `payload` to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, payload: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, payload).with_context(|| format!("cannot write {}", p.display())),
        None => {
            println!("{payload}");
            Ok(())
        }
    }
}

/// `TUBELINK_SEED`, when set, wins over the command-line seed.
pub fn effective_seed(flag: Option<u64>) -> Result<Option<u64>> {
    match std::env::var("TUBELINK_SEED") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| crate::UsageError(format!("TUBELINK_SEED=`{v}` is not an unsigned integer")).into()),
        _ => Ok(flag),
    }
}
