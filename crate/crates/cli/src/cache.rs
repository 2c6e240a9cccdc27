//! On-disk cache for threshold tables.
//!
//! Files are keyed by the exact bit patterns of the grid parameters and store
//! values in shortest round-trip form, so a cached value parses back to the
//! freshly computed `f64`.

use std::path::PathBuf;

use crate::output::write_atomic;

pub const CACHE_ENV: &str = "SEMICYCLE_CACHE_DIR";

pub fn cache_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os(CACHE_ENV) {
        return PathBuf::from(dir);
    }
    if let Some(dir) = std::env::var_os("XDG_CACHE_HOME") {
        return PathBuf::from(dir).join("semicycle");
    }
    if let Some(home) = std::env::var_os("HOME") {
        return PathBuf::from(home).join(".cache").join("semicycle");
    }
    std::env::temp_dir().join("semicycle-cache")
}

pub fn key(prefix: &str, floats: &[f64], ints: &[usize]) -> String {
    let mut k = prefix.to_string();
    for f in floats {
        k += &format!("-{:016x}", f.to_bits());
    }
    for i in ints {
        k += &format!("-{i}");
    }
    k
}

pub fn load(key: &str) -> Option<String> {
    std::fs::read_to_string(cache_dir().join(format!("{key}.csv"))).ok()
}

/// Best effort: a read-only cache location only costs recomputation.
pub fn store(key: &str, contents: &str) {
    let dir = cache_dir();
    let stored = std::fs::create_dir_all(&dir).and_then(|_| write_atomic(&dir.join(format!("{key}.csv")), contents));
    if let Err(e) = stored {
        eprintln!("warning: could not write threshold cache in {}: {e}", dir.display());
    }
}

/// Cached scalar, computed by `f` on a miss.
pub fn scalar<E>(key: &str, f: impl FnOnce() -> Result<f64, E>) -> Result<f64, E> {
    if let Some(v) = load(key).and_then(|s| s.trim().parse::<f64>().ok()) {
        return Ok(v);
    }
    let v = f()?;
    store(key, &format!("{v}\n"));
    Ok(v)
}
