use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::commands::{execute, read_json, Resolved};
use crate::output::json_bytes;
use crate::{Format, InternalError};

pub const MANIFEST_NAME: &str = "manifest.json";

/// Everything needed to reproduce a run. Output paths are relative to the
/// manifest's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub invocation: Resolved,
    pub master_seed: Option<u64>,
    pub format: Format,
    /// Worker count at the time of the run; informational only.
    pub workers: usize,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub outputs: Vec<String>,
}

pub fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

pub fn write_run(
    resolved: &Resolved,
    format: Format,
    out: &Path,
    outputs: Vec<String>,
    started: u128,
) -> anyhow::Result<()> {
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        invocation: resolved.clone(),
        master_seed: resolved.master_seed(),
        format,
        workers: rayon::current_num_threads(),
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        outputs,
    };
    std::fs::write(out.join(MANIFEST_NAME), json_bytes(&manifest)?)?;
    Ok(())
}

/// Re-executes `manifest_path` into `out` (default `<dir>/replay`) and
/// compares every output byte for byte.
pub fn replay(manifest_path: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    let manifest: RunManifest = read_json(manifest_path)?;
    let dir = manifest_path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| dir.join("replay"));
    let started = now_ms();
    let outputs = execute(&manifest.invocation, manifest.format, &out)?;
    write_run(&manifest.invocation, manifest.format, &out, outputs.clone(), started)?;
    if outputs != manifest.outputs {
        return Err(InternalError(format!(
            "replay produced outputs {outputs:?}, manifest lists {:?}",
            manifest.outputs
        ))
        .into());
    }
    let mut mismatched = Vec::new();
    for name in &outputs {
        let original = std::fs::read(dir.join(name))?;
        let replayed = std::fs::read(out.join(name))?;
        if original != replayed {
            mismatched.push(name.clone());
        }
    }
    if !mismatched.is_empty() {
        return Err(InternalError(format!("replay differs in {}", mismatched.join(", "))).into());
    }
    println!("replay identical: {} file(s) in {}", outputs.len(), out.display());
    Ok(())
}
