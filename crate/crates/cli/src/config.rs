use std::path::{Path, PathBuf};

use acam_drf::compiler::CompileOptions;
use acam_drf::datasets::semg::SemgSynthConfig;
use acam_drf::device::DeviceParams;
use acam_drf::forest::CascadeParams;
use acam_drf::simulator::{Mode, SweepAxis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Synthetic sEMG recordings featurized in memory.
    SemgSynth {
        #[serde(default)]
        synth: SemgSynthConfig,
        /// Fixed like a recorded dataset; the run seed does not change it.
        #[serde(default = "dataset_seed")]
        dataset_seed: u64,
    },
    Csv {
        path: PathBuf,
        #[serde(default = "label")]
        label_column: String,
    },
    Mnist {
        images: PathBuf,
        labels: PathBuf,
        /// Keep only the first `limit` samples.
        #[serde(default)]
        limit: Option<usize>,
        /// Map pixels to 0/1 at this level.
        #[serde(default)]
        binarize: Option<f64>,
    },
}

fn dataset_seed() -> u64 {
    0
}

fn label() -> String {
    "label".into()
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::SemgSynth {
            synth: SemgSynthConfig::default(),
            dataset_seed: dataset_seed(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeviceSource {
    File(PathBuf),
    Inline(DeviceParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    /// Builtin names or parameter file paths.
    pub technologies: Vec<String>,
    pub baseline: Option<String>,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            technologies: vec!["fefet".into(), "reram".into()],
            baseline: Some("cpu-baseline".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default)]
    pub mode: Option<Mode>,
    /// Defaults to the compile section.
    #[serde(default)]
    pub bits: Option<u32>,
    #[serde(default)]
    pub msb_lsb: Option<(u32, u32)>,
    /// Defaults to 0 on the precision and trees axes.
    #[serde(default)]
    pub sigma_frac: Option<f64>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default = "test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub cascade: CascadeParams,
    #[serde(default)]
    pub compile: CompileOptions,
    #[serde(default)]
    pub device: Option<DeviceSource>,
    #[serde(default = "ideal")]
    pub mode: Mode,
    #[serde(default)]
    pub cost: CostConfig,
    #[serde(default)]
    pub sweeps: Vec<SweepSpec>,
}

fn test_fraction() -> f64 {
    0.2
}

fn ideal() -> Mode {
    Mode::Ideal
}

/// Command-line values that override the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub mode: Option<Mode>,
}

/// A validated configuration with paths resolved against the config file.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub device: DeviceParams,
    pub out: PathBuf,
    source: String,
}

/// 1-based line of the first occurrence of `"key"` in the source text.
fn line_of(source: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    source.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

impl Loaded {
    fn invalid(&self, key: &str, msg: impl std::fmt::Display) -> CliError {
        match line_of(&self.source, key) {
            Some(line) => CliError::Config(format!("line {line}: {key}: {msg}")),
            None => CliError::Config(format!("{key}: {msg}")),
        }
    }

    /// SHA-256 of the effective configuration, output directory excluded.
    pub fn hash(&self) -> String {
        let mut c = self.config.clone();
        c.out = None;
        hash_json(&c)
    }

    /// Hash of the sections that determine the trained model.
    pub fn train_hash(&self) -> String {
        hash_json(&(
            self.config.seed,
            &self.config.dataset,
            self.config.test_fraction,
            &self.config.cascade,
        ))
    }

    pub fn compile_hash(&self) -> String {
        hash_json(&(self.train_hash(), &self.config.compile))
    }
}

fn hash_json<S: Serialize>(v: &S) -> String {
    let bytes = serde_json::to_vec(v).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

pub fn load(path: &Path, ov: &Overrides) -> Result<Loaded, CliError> {
    let source = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut config: RunConfig = serde_json::from_str(&source).map_err(|e| {
        CliError::Config(format!(
            "{}: line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    match &mut config.dataset {
        DatasetConfig::SemgSynth { .. } => {}
        DatasetConfig::Csv { path, .. } => resolve(&base, path),
        DatasetConfig::Mnist { images, labels, .. } => {
            resolve(&base, images);
            resolve(&base, labels);
        }
    }
    if let Some(DeviceSource::File(p)) = &mut config.device {
        resolve(&base, p);
    }
    if let Some(seed) = ov.seed {
        config.seed = seed;
    }
    if let Some(mode) = ov.mode {
        config.mode = mode;
    }
    let out = match (&ov.out, &config.out) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) if o.is_relative() => base.join(o),
        (None, Some(o)) => o.clone(),
        (None, None) => PathBuf::from("out"),
    };
    let mut loaded = Loaded {
        config,
        device: DeviceParams::default(),
        out,
        source,
    };
    loaded.device = loaded.validate()?;
    Ok(loaded)
}

impl Loaded {
    fn validate(&self) -> Result<DeviceParams, CliError> {
        let c = &self.config;
        let missing = |key: &str, p: &Path| -> Result<(), CliError> {
            if p.is_file() {
                Ok(())
            } else {
                Err(self.invalid(key, format!("file {} does not exist", p.display())))
            }
        };
        match &c.dataset {
            DatasetConfig::SemgSynth { .. } => {}
            DatasetConfig::Csv { path, .. } => missing("path", path)?,
            DatasetConfig::Mnist {
                images,
                labels,
                limit,
                binarize,
            } => {
                missing("images", images)?;
                missing("labels", labels)?;
                if *limit == Some(0) {
                    return Err(self.invalid("limit", "must be positive"));
                }
                if binarize.is_some_and(|t| !(t > 0.0 && t <= 1.0)) {
                    return Err(self.invalid("binarize", "must lie in (0, 1]"));
                }
            }
        }
        if !(c.test_fraction > 0.0 && c.test_fraction < 1.0) {
            return Err(self.invalid("test_fraction", "must lie in (0, 1)"));
        }
        c.cascade.validate().map_err(|e| self.invalid("cascade", e))?;
        c.compile.validate().map_err(|e| self.invalid("compile", e))?;
        let device = match &c.device {
            None => DeviceParams::default(),
            Some(DeviceSource::Inline(d)) => d.clone(),
            Some(DeviceSource::File(p)) => {
                missing("device", p)?;
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| {
                    CliError::Config(format!(
                        "{}: line {}, column {}: {e}",
                        p.display(),
                        e.line(),
                        e.column()
                    ))
                })?
            }
        };
        device.validate().map_err(|e| self.invalid("device", e))?;
        if c.cost.technologies.is_empty() {
            return Err(self.invalid("technologies", "list at least one technology"));
        }
        for t in c.cost.technologies.iter().chain(&c.cost.baseline) {
            acam_drf::cost::CostParams::load(t).map_err(|e| self.invalid("cost", e))?;
        }
        for s in &c.sweeps {
            self.sweep_config(s).validate().map_err(|e| self.invalid("sweeps", e))?;
        }
        Ok(device)
    }

    pub fn sweep_config(&self, s: &SweepSpec) -> acam_drf::simulator::SweepConfig {
        let c = &self.config;
        acam_drf::simulator::SweepConfig {
            axis: s.axis,
            values: s.values.clone(),
            trials: s.trials,
            seed: c.seed,
            mode: s.mode.unwrap_or(c.mode),
            bits: s.bits.unwrap_or(c.compile.bits),
            sigma_frac: s.sigma_frac.unwrap_or(0.0),
            msb_lsb: match s.bits {
                Some(_) => s.msb_lsb,
                None => s.msb_lsb.or(c.compile.msb_lsb),
            },
            geometry: c.compile.geometry,
            cascade: c.cascade.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, text: &str) -> PathBuf {
        let p = dir.join("config.json");
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let l = load(&write(dir.path(), r#"{"seed": 3}"#), &Overrides::default()).unwrap();
        assert_eq!(l.config.test_fraction, 0.2);
        assert_eq!(l.config.compile, CompileOptions::default());
        assert!(matches!(l.config.dataset, DatasetConfig::SemgSynth { .. }));
    }

    #[test]
    fn seed_is_mandatory() {
        let dir = tempfile::tempdir().unwrap();
        let e = load(
            &write(dir.path(), "{\n  \"test_fraction\": 0.3\n}"),
            &Overrides::default(),
        )
        .unwrap_err();
        assert!(matches!(e, CliError::Config(ref m) if m.contains("seed")), "{e}");
    }

    #[test]
    fn syntax_error_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let e = load(
            &write(dir.path(), "{\n  \"seed\": 1,\n  \"mode\": ideal\n}"),
            &Overrides::default(),
        )
        .unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
    }

    #[test]
    fn semantic_error_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let text = "{\n  \"seed\": 1,\n  \"compile\": {\n    \"bits\": 0\n  }\n}";
        let e = load(&write(dir.path(), text), &Overrides::default()).unwrap_err();
        assert!(e.to_string().starts_with("line 3"), "{e}");
    }

    #[test]
    fn missing_input_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let text = r#"{"seed": 1, "dataset": {"kind": "csv", "path": "nope.csv"}}"#;
        let e = load(&write(dir.path(), text), &Overrides::default()).unwrap_err();
        assert!(e.to_string().contains("does not exist"), "{e}");
    }

    #[test]
    fn overrides_apply_and_out_is_not_hashed() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), r#"{"seed": 1}"#);
        let a = load(
            &p,
            &Overrides {
                out: Some("a".into()),
                ..Default::default()
            },
        )
        .unwrap();
        let b = load(
            &p,
            &Overrides {
                out: Some("b".into()),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = load(
            &p,
            &Overrides {
                seed: Some(2),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(c.config.seed, 2);
        assert_ne!(a.train_hash(), c.train_hash());
    }
}
