//! Run manifest and on-disk layout of a study directory.
//!
//! ```text
//! <out-dir>/manifest.json
//! <out-dir>/leadfield.txt          fine lead field, header `m n`
//! <out-dir>/positions.txt          fine source positions
//! <out-dir>/rep_000/observations.txt
//! <out-dir>/rep_000/sources.txt    simulated activity of the three sources
//! <out-dir>/rep_000/truth.json
//! <out-dir>/rep_000/one-step_00.json   one estimate per (method, grid index)
//! <out-dir>/evaluations.tsv
//! <out-dir>/report/{table1,errors,best}.tsv and summary.json
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use sparse_cps::io::{read_json, write_json, CrossSpectrumRecord};
use sparse_cps::sim::{Configuration, MvarModel, SimulationSpec};
use sparse_cps::study::{EstimationConfig, Method};

pub const MANIFEST_SCHEMA: &str = "sparse-cps/manifest/v1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LEADFIELD_FILE: &str = "leadfield.txt";
pub const POSITIONS_FILE: &str = "positions.txt";
pub const EVALUATIONS_FILE: &str = "evaluations.tsv";
pub const REPORT_DIR: &str = "report";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeadFieldSource {
    Synthetic,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub software_version: String,
    pub seed: u64,
    pub spec: SimulationSpec,
    pub lead_field: LeadFieldSource,
    /// Set by the last estimation stage.
    pub estimation: Option<EstimationConfig>,
    /// Root seed of the solver initialization streams of the last estimation.
    pub estimation_seed: u64,
    /// Paths relative to the run directory.
    pub files: BTreeSet<String>,
    /// Wall time per stage in seconds; the only field that varies between
    /// identical runs.
    pub timings_seconds: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(spec: SimulationSpec, lead_field: LeadFieldSource) -> Self {
        Self {
            schema: MANIFEST_SCHEMA.to_string(),
            software_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: spec.seed,
            estimation_seed: spec.seed,
            spec,
            lead_field,
            estimation: None,
            files: BTreeSet::new(),
            timings_seconds: BTreeMap::new(),
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let manifest: Self = read_json(&path)
            .with_context(|| format!("cannot read {}; run `simulate` first", path.display()))?;
        if manifest.schema != MANIFEST_SCHEMA {
            bail!("{}: unsupported schema `{}`", path.display(), manifest.schema);
        }
        Ok(manifest)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST_FILE), self).context("cannot write the manifest")
    }

    pub fn record(&mut self, dir: &Path, path: &Path) {
        let rel = path.strip_prefix(dir).unwrap_or(path);
        self.files.insert(rel.to_string_lossy().into_owned());
    }

    /// Listed files that are missing on disk.
    pub fn missing_files(&self, dir: &Path) -> Vec<String> {
        self.files.iter().filter(|f| !dir.join(f).is_file()).cloned().collect()
    }
}

pub fn rep_dir(dir: &Path, rep: usize) -> PathBuf {
    dir.join(format!("rep_{rep:03}"))
}

pub fn estimate_file(dir: &Path, rep: usize, method: Method, grid_index: usize) -> PathBuf {
    rep_dir(dir, rep).join(format!("{}_{grid_index:02}.json", method.label()))
}

/// Ground truth of one repetition; `true_pairs` are fine-space indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub repetition: usize,
    pub configuration: Configuration,
    pub source_indices: [usize; 3],
    pub true_pairs: Vec<(usize, usize)>,
    pub model: MvarModel,
}

/// One estimated source cross-spectrum with its grid coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub repetition: usize,
    pub method: Method,
    pub grid_index: usize,
    pub scale: f64,
    pub lambda: f64,
    pub frequency_bin: usize,
    pub iterations: usize,
    pub converged: bool,
    pub spectrum: CrossSpectrumRecord,
}

pub fn read_truth(dir: &Path, rep: usize) -> Result<TruthRecord> {
    let path = rep_dir(dir, rep).join("truth.json");
    read_json(&path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn write_record<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_json(path, value).with_context(|| format!("cannot write {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips_losslessly() {
        let spec = SimulationSpec::desk_scale(Configuration::Two, 11);
        let mut m = RunManifest::new(spec.clone(), LeadFieldSource::Synthetic);
        m.estimation = Some(EstimationConfig::for_spec(&spec));
        m.files.insert("rep_000/truth.json".into());
        m.timings_seconds.insert("simulate".into(), 0.1 + 0.2);
        let text = serde_json::to_string(&m).unwrap();
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn layout_names() {
        let dir = Path::new("run");
        assert_eq!(rep_dir(dir, 7), Path::new("run/rep_007"));
        assert_eq!(
            estimate_file(dir, 2, Method::TwoStep, 3),
            Path::new("run/rep_002/two-step_03.json")
        );
    }
}
