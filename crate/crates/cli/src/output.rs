//! Reports and plot data.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

/// SHA-256 over the run configuration followed by every input file.
pub fn content_hash(config: &Value, inputs: &[PathBuf]) -> Result<String, CliError> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config)?);
    for p in inputs {
        let bytes = fs::read(p).map_err(|e| CliError::Io(p.clone(), e))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(format!("{:x}", h.finalize()))
}

// Timings differ between runs; reports stay byte-identical without them.
fn strip_timing(v: &mut Value) {
    match v {
        Value::Object(m) => {
            m.retain(|k, _| !matches!(k.as_str(), "wall_time" | "wall_time_s" | "seconds"));
            m.values_mut().for_each(strip_timing);
        }
        Value::Array(a) => a.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

/// The full report: configuration, input hash and result.
pub fn report(config: &Value, hash: &str, result: impl Serialize, timing: bool) -> Result<Value, CliError> {
    let mut result = serde_json::to_value(result)?;
    if !timing {
        strip_timing(&mut result);
    }
    Ok(serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "input_hash": hash,
        "result": result,
    }))
}

/// Pretty JSON to `path`, or to stdout without one.
pub fn emit(report: &Value, path: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(report)? + "\n";
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Io(p.to_path_buf(), e)),
        None => {
            std::io::stdout().lock().write_all(text.as_bytes()).map_err(|e| CliError::Io("<stdout>".into(), e))
        }
    }
}

/// Two whitespace-separated columns at `path`, with labels and extra
/// metadata in a `.json` file next to it.
pub fn emit_plot_data(
    path: &Path,
    columns: [&str; 2],
    rows: &[(f64, f64)],
    meta: Value,
) -> Result<(), CliError> {
    let mut text = format!("# {} {}\n", columns[0], columns[1]);
    for (x, y) in rows {
        text.push_str(&format!("{x:.12e} {y:.12e}\n"));
    }
    fs::write(path, text).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    let side = sidecar(path);
    let meta = serde_json::json!({ "columns": columns, "rows": rows.len(), "meta": meta });
    fs::write(&side, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| CliError::Io(side, e))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timing_keys_are_removed_at_any_depth() {
        let mut v = serde_json::json!({ "a": 1, "seconds": 2, "b": [{ "wall_time_s": 3, "c": 4 }] });
        strip_timing(&mut v);
        assert_eq!(v, serde_json::json!({ "a": 1, "b": [{ "c": 4 }] }));
    }

    #[test]
    fn hash_depends_on_config_and_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("x.csv");
        fs::write(&f, "1\n").unwrap();
        let a = content_hash(&serde_json::json!({ "p": 1.25 }), std::slice::from_ref(&f)).unwrap();
        let b = content_hash(&serde_json::json!({ "p": 1.3 }), std::slice::from_ref(&f)).unwrap();
        fs::write(&f, "2\n").unwrap();
        let c = content_hash(&serde_json::json!({ "p": 1.25 }), &[f]).unwrap();
        assert_eq!(a.len(), 64);
        assert!(a != b && a != c);
    }

    #[test]
    fn plot_data_has_two_columns_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("t.dat");
        emit_plot_data(&f, ["rho", "d"], &[(0.1, 1.0), (0.2, 2.0)], Value::Null).unwrap();
        let text = fs::read_to_string(&f).unwrap();
        let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data.len(), 2);
        assert!(data.iter().all(|l| l.split_whitespace().count() == 2));
        assert!(sidecar(&f).exists());
    }
}
