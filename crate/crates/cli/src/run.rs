//! Output directories: the manifest goes first, then artifacts by name.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn file_digest(path: &Path) -> CliResult<String> {
    Ok(sha256_hex(&read_bytes(path)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of(path: &Path) -> CliResult<Self> {
        Ok(Self {
            path: path.display().to_string(),
            sha256: file_digest(path)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Resolved settings after flag, file and default precedence.
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub seeds: Vec<u64>,
    /// File names inside the output directory.
    pub outputs: Vec<String>,
}

/// An output directory whose manifest has been written.
#[derive(Debug)]
pub struct Run {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Run {
    pub fn start(
        dir: &Path,
        subcommand: &str,
        config: &impl Serialize,
        inputs: &[&Path],
        seeds: Vec<u64>,
        outputs: &[&str],
    ) -> CliResult<Self> {
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            config: serde_json::to_value(config)
                .map_err(|e| CliError::validation(format!("config snapshot: {e}")))?,
            inputs: inputs
                .iter()
                .map(|p| InputDigest::of(p))
                .collect::<CliResult<_>>()?,
            seeds,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        };
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let run = Self {
            dir: dir.to_path_buf(),
            manifest,
        };
        let body = to_json(&run.manifest)?;
        let path = run.dir.join(MANIFEST_FILE);
        fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
        Ok(run)
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> CliResult<()> {
        debug_assert!(
            self.manifest.outputs.iter().any(|o| o == name),
            "{name} missing from the manifest"
        );
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))
    }

    pub fn write_json(&self, name: &str, value: &impl Serialize) -> CliResult<()> {
        self.write(name, to_json(value)?.as_bytes())
    }

    pub fn write_csv<R: AsRef<[String]>>(
        &self,
        name: &str,
        header: &[&str],
        rows: &[R],
    ) -> CliResult<()> {
        self.write(name, &csv_bytes(header, rows)?)
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json(value: &impl Serialize) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::validation(format!("serialize: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn csv_bytes<R: AsRef<[String]>>(header: &[&str], rows: &[R]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::validation(format!("csv: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r.as_ref()).map_err(err)?;
    }
    w.into_inner()
        .map_err(|e| CliError::validation(format!("csv: {e}")))
}

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    format!("{x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_is_written_before_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        fs::write(&input, b"abc").unwrap();
        let out = dir.path().join("out");
        let run = Run::start(&out, "test", &serde_json::json!({"k": 1}), &[&input], vec![3], &["a.csv"])
            .unwrap();
        let names: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from(MANIFEST_FILE)]);
        let m: RunManifest =
            serde_json::from_slice(&fs::read(out.join(MANIFEST_FILE)).unwrap()).unwrap();
        assert_eq!(&m, run.manifest());
        assert_eq!(
            m.inputs[0].sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        run.write_csv("a.csv", &["x", "y"], &[vec!["1".to_string(), "a,b".to_string()]])
            .unwrap();
        assert_eq!(fs::read_to_string(out.join("a.csv")).unwrap(), "x,y\n1,\"a,b\"\n");
    }

    #[test]
    fn missing_input_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let e = Run::start(
            dir.path(),
            "t",
            &(),
            &[&dir.path().join("nope")],
            vec![],
            &[],
        )
        .unwrap_err();
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 0.0, 1e-300] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }
}
