use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::LlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CassetteMode {
    /// Serve recorded responses; call the transport and append on a miss.
    Record,
    /// Serve recorded responses only; a miss is an error.
    Replay,
    /// Always call the transport; nothing is read or written.
    Passthrough,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub digest: String,
    pub request: Value,
    pub response: Value,
}

/// Request digest → recorded response, optionally backed by a JSON-lines
/// file that is rewritten (sorted by digest) after each new recording.
#[derive(Debug)]
pub struct Cassette {
    mode: CassetteMode,
    path: Option<PathBuf>,
    entries: Mutex<BTreeMap<String, CassetteEntry>>,
}

impl Cassette {
    pub fn in_memory(mode: CassetteMode) -> Self {
        Cassette { mode, path: None, entries: Mutex::new(BTreeMap::new()) }
    }

    pub fn from_entries(mode: CassetteMode, entries: Vec<CassetteEntry>) -> Self {
        let map = entries.into_iter().map(|e| (e.digest.clone(), e)).collect();
        Cassette { mode, path: None, entries: Mutex::new(map) }
    }

    /// Open a cassette file. A missing file is an empty cassette in record
    /// mode and an error in replay mode.
    pub fn open(path: impl Into<PathBuf>, mode: CassetteMode) -> Result<Self, LlmError> {
        let path = path.into();
        let file_err = |detail: String| LlmError::CassetteFile { path: path.display().to_string(), detail };
        let mut map = BTreeMap::new();
        match fs::read_to_string(&path) {
            Ok(text) => {
                for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                    let entry: CassetteEntry =
                        serde_json::from_str(line).map_err(|e| file_err(format!("line {}: {e}", i + 1)))?;
                    map.insert(entry.digest.clone(), entry);
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound && mode != CassetteMode::Replay => {}
            Err(e) => return Err(file_err(e.to_string())),
        }
        Ok(Cassette { mode, path: Some(path), entries: Mutex::new(map) })
    }

    pub fn mode(&self) -> CassetteMode {
        self.mode
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn entries(&self) -> Vec<CassetteEntry> {
        self.entries.lock().expect("cassette lock").values().cloned().collect()
    }

    pub fn get(&self, digest: &str) -> Option<CassetteEntry> {
        self.entries.lock().expect("cassette lock").get(digest).cloned()
    }

    /// Serve `digest` from the cassette or, when the mode allows, from
    /// `call`. The lock is not held during `call`.
    pub(crate) fn lookup_or(
        &self,
        digest: &str,
        request: Value,
        call: impl FnOnce() -> Result<Value, LlmError>,
    ) -> Result<Value, LlmError> {
        if self.mode != CassetteMode::Passthrough {
            if let Some(e) = self.get(digest) {
                return Ok(e.response);
            }
        }
        if self.mode == CassetteMode::Replay {
            return Err(LlmError::CassetteMiss { digest: digest.to_string() });
        }
        let response = call()?;
        if self.mode == CassetteMode::Record {
            let mut entries = self.entries.lock().expect("cassette lock");
            entries.entry(digest.to_string()).or_insert_with(|| CassetteEntry {
                digest: digest.to_string(),
                request,
                response: response.clone(),
            });
            if let Some(path) = &self.path {
                write_sorted(path, &entries)?;
            }
        }
        Ok(response)
    }
}

fn write_sorted(path: &Path, entries: &BTreeMap<String, CassetteEntry>) -> Result<(), LlmError> {
    let mut text = String::new();
    for e in entries.values() {
        text.push_str(&serde_json::to_string(e).expect("entries serialize"));
        text.push('\n');
    }
    let err = |e: std::io::Error| LlmError::CassetteFile { path: path.display().to_string(), detail: e.to_string() };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(err)?;
    }
    let tmp = path.with_extension("jsonl.tmp");
    fs::write(&tmp, text).map_err(err)?;
    fs::rename(&tmp, path).map_err(err)
}
