//! Run manifests: what was run, with which settings, and what it produced.

use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::ValueEnum;
use dclose::BBox;
use serde::{Deserialize, Serialize};

use crate::config::Settings;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dclose,
    Drise,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Dclose => "D-CLOSE",
            Method::Drise => "D-RISE",
        }
    }
}

/// Which object to explain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSel {
    /// Index into the detections on the clean image.
    Index { index: usize },
    /// A box with a one-hot class vector.
    Explicit {
        #[serde(rename = "box")]
        bbox: BBox,
        class_id: usize,
    },
}

/// A fully resolved command; replaying it with the same settings reproduces
/// the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Job {
    Explain {
        image: PathBuf,
        detector: String,
        target: TargetSel,
        method: Method,
    },
    Sanity {
        image: PathBuf,
        detector: String,
        target: TargetSel,
        method: Method,
        random_seed: u64,
    },
    Errordiff {
        image: PathBuf,
        detector: String,
        first: TargetSel,
        second: TargetSel,
        method: Method,
    },
    Benchmark {
        corpus: PathBuf,
        detector: String,
        ablation: bool,
        jobs: usize,
    },
    Render {
        map: PathBuf,
        image: PathBuf,
        diff: bool,
    },
    ConvertCoco {
        annotations: PathBuf,
        image_root: Option<PathBuf>,
        output: PathBuf,
    },
    Suite {
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

impl Stage {
    pub fn new(name: impl Into<String>, elapsed: Duration) -> Self {
        Self { name: name.into(), seconds: elapsed.as_secs_f64() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub masks: u64,
    pub grid: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub job: Job,
    pub settings: Settings,
    pub seeds: Seeds,
    /// Detector as the backend describes itself.
    pub detector: Option<String>,
    pub stages: Vec<Stage>,
    /// Masked or perturbed images sent to the detector.
    pub detector_calls: usize,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(job: Job, settings: Settings) -> Self {
        let seeds = Seeds { masks: settings.explain.master_seed, grid: settings.drise.seed };
        Self {
            tool: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            job,
            settings,
            seeds,
            detector: None,
            stages: Vec::new(),
            detector_calls: 0,
            outputs: Vec::new(),
        }
    }

    pub fn stage(&mut self, name: impl Into<String>, elapsed: Duration) {
        self.stages.push(Stage::new(name, elapsed));
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::output(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| CliError::output(path, e))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| {
            CliError::Parse(format!("manifest {}: line {}, column {}: {e}", path.display(), e.line(), e.column()))
        })
    }
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let job = Job::Explain {
            image: "a.png".into(),
            detector: "synthetic:blob".into(),
            target: TargetSel::Explicit { bbox: BBox::new(1.0, 2.0, 3.0, 4.0).unwrap(), class_id: 2 },
            method: Method::Drise,
        };
        let mut m = RunManifest::new(job, Settings::default());
        m.stage("x", Duration::from_millis(1500));
        m.detector_calls = 4000;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        m.write(&path).unwrap();
        assert_eq!(RunManifest::read(&path).unwrap(), m);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"command\": \"explain\""));
        assert!(text.contains("\"kind\": \"explicit\""));
    }

    #[test]
    fn truncated_manifest_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(&path, "{\n  \"tool\": \"x\",\n  oops\n}").unwrap();
        let err = RunManifest::read(&path).unwrap_err();
        assert_eq!(err.exit_code(), 7);
        assert!(err.to_string().contains("line 3"), "{err}");
    }
}
