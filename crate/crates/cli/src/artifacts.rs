use std::fs::{File, OpenOptions, TryLockError};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const TOOL: &str = concat!("acam-drf ", env!("CARGO_PKG_VERSION"));
pub const ARTIFACT_VERSION: u32 = 1;

pub const MODEL: &str = "model.json";
pub const PLAN: &str = "plan.json";
pub const RESULTS: &str = "results.csv";
pub const COST: &str = "cost.json";

/// Common wrapper for every JSON artifact.
#[derive(Debug, Serialize, Deserialize)]
pub struct Envelope<P> {
    pub version: u32,
    pub kind: String,
    pub tool: String,
    pub config_sha256: String,
    /// Hash of the configuration sections the payload depends on.
    pub input_sha256: String,
    pub payload: P,
}

/// Exclusive lock on the output directory, held for the command's lifetime.
pub struct OutDir {
    pub path: PathBuf,
    _lock: File,
}

impl OutDir {
    pub fn open(path: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(path)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))?;
        let lock_path = path.join(".lock");
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_path)
            .map_err(|e| CliError::Runtime(format!("cannot open {}: {e}", lock_path.display())))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(TryLockError::WouldBlock) => {
                return Err(CliError::Runtime(format!(
                    "{} is locked by another acam-drf process",
                    path.display()
                )))
            }
            Err(TryLockError::Error(e)) => {
                return Err(CliError::Runtime(format!("cannot lock {}: {e}", path.display())))
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            _lock: lock,
        })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// Write via a temporary file and rename so readers never see partial output.
    pub fn write_with(
        &self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    ) -> Result<(), CliError> {
        let tmp = self.file(&format!(".{name}.tmp"));
        let file = File::create(&tmp).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", tmp.display())))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush()?;
        drop(w);
        std::fs::rename(&tmp, self.file(name))?;
        Ok(())
    }

    pub fn write_json<P: Serialize>(&self, name: &str, env: &Envelope<P>) -> Result<(), CliError> {
        self.write_with(name, |w| {
            serde_json::to_writer(&mut *w, env)?;
            w.write_all(b"\n")?;
            Ok(())
        })
    }

    pub fn read_json<P: DeserializeOwned>(
        &self,
        name: &str,
        command: &'static str,
        expected_input: &str,
    ) -> Result<Envelope<P>, CliError> {
        let path = self.file(name);
        let missing = |detail: String| CliError::MissingArtifact {
            artifact: path.display().to_string(),
            command,
            detail,
        };
        let file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(missing("not found".into())),
            Err(e) => return Err(CliError::Runtime(format!("cannot read {}: {e}", path.display()))),
        };
        // Trees nest one JSON level per node.
        let mut de = serde_json::Deserializer::from_reader(BufReader::new(file));
        de.disable_recursion_limit();
        let env: Envelope<P> = Deserialize::deserialize(&mut de)
            .map_err(|e| CliError::Runtime(format!("{} is corrupt: {e}", path.display())))?;
        if env.version != ARTIFACT_VERSION {
            return Err(missing(format!("artifact version {} is not supported", env.version)));
        }
        if env.input_sha256 != expected_input {
            return Err(missing("was produced from a different configuration".into()));
        }
        Ok(env)
    }
}

pub fn envelope<P>(kind: &str, config_sha256: &str, input_sha256: &str, payload: P) -> Envelope<P> {
    Envelope {
        version: ARTIFACT_VERSION,
        kind: kind.into(),
        tool: TOOL.into(),
        config_sha256: config_sha256.into(),
        input_sha256: input_sha256.into(),
        payload,
    }
}

/// Comment header for CSV artifacts.
pub fn csv_header(w: &mut impl Write, kind: &str, config_sha256: &str) -> std::io::Result<()> {
    writeln!(w, "# {kind}; tool={TOOL}; config_sha256={config_sha256}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_lock_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let _a = OutDir::open(dir.path()).unwrap();
        assert!(matches!(OutDir::open(dir.path()), Err(CliError::Runtime(_))));
    }

    #[test]
    fn round_trip_and_staleness() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutDir::open(dir.path()).unwrap();
        out.write_json("x.json", &envelope("x", "c", "i", vec![1, 2, 3]))
            .unwrap();
        let env: Envelope<Vec<i32>> = out.read_json("x.json", "train", "i").unwrap();
        assert_eq!(env.payload, vec![1, 2, 3]);
        let stale = out.read_json::<Vec<i32>>("x.json", "train", "other").unwrap_err();
        assert_eq!(stale.exit_code(), 3);
        let missing = out.read_json::<Vec<i32>>("y.json", "compile", "i").unwrap_err();
        assert!(missing.to_string().contains("acam-drf compile"));
    }
}
