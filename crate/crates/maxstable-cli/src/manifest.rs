//! Run manifests: every output file gets a sibling `<file>.manifest.json`
//! recording the resolved parameters, the seed, a hash of the parameter
//! set, and the crate versions — enough to reproduce the output bitwise
//! with the same binary.

use std::fs;
use std::path::Path;

use maxstable::error::Result;
use serde_json::{json, Value};

/// 64-bit FNV-1a, used for stable content hashes in manifests.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Hash of a file's raw bytes, recorded for input files consumed by a run.
pub fn file_hash(path: &Path) -> Result<String> {
    Ok(format!("fnv1a64:{:016x}", fnv1a64(&fs::read(path)?)))
}

/// Write `<out>.manifest.json` next to the output file at `out`.
///
/// The config hash covers the canonical JSON of the resolved parameters
/// (serde_json orders object keys), so two runs with the same hash, seed,
/// and versions produce identical output bytes.
pub fn write(out: &Path, command: &str, parameters: Value, seed: Option<u64>) -> Result<()> {
    let canonical = parameters.to_string();
    let manifest = json!({
        "command": command,
        "parameters": parameters,
        "seed": seed,
        "config_hash": format!("fnv1a64:{:016x}", fnv1a64(canonical.as_bytes())),
        "versions": {
            "maxstable": maxstable::VERSION,
            "maxstable-cli": env!("CARGO_PKG_VERSION"),
        },
    });
    let mut path = out.as_os_str().to_owned();
    path.push(".manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
