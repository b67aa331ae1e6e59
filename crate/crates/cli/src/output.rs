use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Overrides the directory used for default output file names.
pub const OUT_DIR_ENV: &str = "CAUSAL_RD_OUT_DIR";

pub fn resolve_out(out: Option<&Path>, default_name: &str) -> PathBuf {
    match out {
        Some(p) => p.to_path_buf(),
        None => {
            std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".")).join(default_name)
        }
    }
}

/// 17 significant digits, scientific, locale-free.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::Io(e.to_string()))?;
    for r in rows {
        w.write_record(r).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

pub fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s.into_bytes()
}

#[derive(Serialize)]
struct OutputDigest {
    file: String,
    bytes: usize,
    sha256: String,
}

/// Everything needed to rerun a command: `--config <manifest>` replays it.
#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    parameters: &'a Value,
    seed: u64,
    tool_version: &'static str,
    outputs: Vec<OutputDigest>,
}

/// Writes `bytes` to `path` and a manifest to `<path>.manifest.json`.
pub fn emit(path: &Path, bytes: &[u8], command: &str, parameters: &Value, seed: u64) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let file = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    let manifest = Manifest {
        command,
        parameters,
        seed,
        tool_version: env!("CARGO_PKG_VERSION"),
        outputs: vec![OutputDigest { file, bytes: bytes.len(), sha256: hex::encode(Sha256::digest(bytes)) }],
    };
    let mpath = manifest_path(path);
    fs::write(&mpath, json_bytes(&manifest)).map_err(|e| CliError::Io(format!("{}: {e}", mpath.display())))
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(0.0), "0.0000000000000000e0");
        assert_eq!(num(22400.0), "2.2400000000000000e4");
        assert_eq!(opt_num(None), "");
        for v in [0.4122953056414114, 1e-300, 7.0 / 3.0] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn paths() {
        assert_eq!(manifest_path(Path::new("a/b.csv")), PathBuf::from("a/b.csv.manifest.json"));
        assert_eq!(resolve_out(Some(Path::new("x.csv")), "d.csv"), PathBuf::from("x.csv"));
    }
}
