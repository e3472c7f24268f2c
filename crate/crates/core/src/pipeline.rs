//! File-to-file pipeline stages and the artifact manifest.
//!
//! Every stage reads its inputs from disk and writes its outputs to disk so
//! each one can run alone. When a manifest is supplied, inputs it lists are
//! checked against their recorded SHA-256 before the stage runs, and the
//! stage's outputs are recorded afterwards.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::{build_catalog, Catalog, CatalogConfig, CatalogSource, ExclusionRule};
use crate::profiles::{
    assemble_profiles, cluster_general_values, Clustering, ProfileDocument, ProfileTemplate,
    Standardization,
};
use crate::survey::{
    correlate_values_preferences, ingest_csv, write_correlations, IngestReport, SurveyDataset,
    ValueSource, SCHEMA_VERSION,
};

pub const TOOL_VERSION: &str = concat!("vcpa ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{path}: {cause}")]
    Input { path: PathBuf, cause: String },
    #[error("{path}: hash mismatch, manifest has {expected}, file has {actual}")]
    HashMismatch {
        path: PathBuf,
        expected: String,
        actual: String,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: write failed: {cause}")]
    Output { path: PathBuf, cause: String },
}

impl PipelineError {
    /// 1 for problems with what the caller supplied, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Output { .. } => 2,
            _ => 1,
        }
    }

    pub fn input(path: &Path, cause: impl ToString) -> Self {
        PipelineError::Input {
            path: path.to_path_buf(),
            cause: cause.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Relative to the manifest's directory when possible.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub tool_version: String,
    /// Keyed by artifact role: survey, correlations, clusters, profiles, catalog, ...
    pub artifacts: BTreeMap<String, ArtifactEntry>,
}

impl Default for PipelineManifest {
    fn default() -> Self {
        PipelineManifest {
            tool_version: TOOL_VERSION.to_string(),
            artifacts: BTreeMap::new(),
        }
    }
}

pub fn sha256_file(path: &Path) -> Result<(String, u64), PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::input(path, e))?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

fn relative_to(base: &Path, path: &Path) -> String {
    let abs = |p: &Path| std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    let (b, p) = (abs(base), abs(path));
    p.strip_prefix(&b)
        .map(|r| r.to_path_buf())
        .unwrap_or(p)
        .to_string_lossy()
        .replace('\\', "/")
}

/// A manifest file on disk. Missing files start empty.
pub struct ManifestFile {
    path: PathBuf,
    pub manifest: PipelineManifest,
}

impl ManifestFile {
    pub fn open(path: &Path) -> Result<Self, PipelineError> {
        let manifest = if path.exists() {
            read_json(path)?
        } else {
            PipelineManifest::default()
        };
        Ok(ManifestFile {
            path: path.to_path_buf(),
            manifest,
        })
    }

    fn dir(&self) -> PathBuf {
        match self.path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        }
    }

    /// Checks `path` against its manifest entry, if it has one.
    pub fn verify(&self, path: &Path) -> Result<(), PipelineError> {
        let rel = relative_to(&self.dir(), path);
        let Some(entry) = self.manifest.artifacts.values().find(|e| e.path == rel) else {
            return Ok(());
        };
        let (actual, _) = sha256_file(path)?;
        if actual != entry.sha256 {
            return Err(PipelineError::HashMismatch {
                path: path.to_path_buf(),
                expected: entry.sha256.clone(),
                actual,
            });
        }
        Ok(())
    }

    pub fn record(&mut self, role: &str, path: &Path) -> Result<(), PipelineError> {
        let (sha256, bytes) = sha256_file(path)?;
        let entry = ArtifactEntry {
            path: relative_to(&self.dir(), path),
            sha256,
            bytes,
        };
        self.manifest.artifacts.insert(role.to_string(), entry);
        Ok(())
    }

    pub fn save(&self) -> Result<(), PipelineError> {
        write_json(&self.path, &self.manifest)
    }
}

/// Runs `stage` with manifest checks around it when `manifest` is given.
pub fn with_manifest<F>(
    manifest: Option<&Path>,
    inputs: &[&Path],
    outputs: &[(&str, &Path)],
    stage: F,
) -> Result<(), PipelineError>
where
    F: FnOnce() -> Result<(), PipelineError>,
{
    let Some(mpath) = manifest else {
        return stage();
    };
    let mut m = ManifestFile::open(mpath)?;
    for input in inputs {
        m.verify(input)?;
    }
    stage()?;
    for (role, path) in outputs {
        m.record(role, path)?;
    }
    m.save()
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::input(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::input(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::Output {
            path: path.to_path_buf(),
            cause: e.to_string(),
        })?;
    }
    std::fs::write(path, text).map_err(|e| PipelineError::Output {
        path: path.to_path_buf(),
        cause: e.to_string(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::Output {
        path: path.to_path_buf(),
        cause: e.to_string(),
    })?;
    text.push('\n');
    write_text(path, &text)
}

/// `SOURCE_DATE_EPOCH` if set, else the file's modification time, so reruns
/// on unchanged input produce identical output.
fn ingest_timestamp(path: &Path) -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.parse().ok())
    {
        return t;
    }
    std::fs::metadata(path)
        .and_then(|m| m.modified())
        .ok()
        .and_then(|t| t.duration_since(std::time::UNIX_EPOCH).ok())
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Survey CSV to dataset JSON. Rejected rows are returned in the report,
/// not treated as failure; a file with no valid rows is.
pub fn ingest_stage(input: &Path, output: &Path) -> Result<IngestReport, PipelineError> {
    let mut report = ingest_csv(input, SCHEMA_VERSION).map_err(|e| PipelineError::input(input, e))?;
    if report.dataset.is_empty() {
        return Err(PipelineError::input(input, "no valid rows"));
    }
    report.dataset.source_file = input
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default();
    report.dataset.ingested_at = ingest_timestamp(input);
    write_json(output, &report.dataset)?;
    Ok(report)
}

/// Reads a dataset from either an ingested JSON document or a raw CSV.
pub fn load_dataset(path: &Path) -> Result<SurveyDataset, PipelineError> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let report = ingest_csv(path, SCHEMA_VERSION).map_err(|e| PipelineError::input(path, e))?;
        if !report.rejections.is_empty() {
            return Err(PipelineError::input(path, report.rejection_text().trim_end()));
        }
        Ok(report.dataset)
    } else {
        read_json(path)
    }
}

pub fn correlate_stage(input: &Path, output: &Path, source: ValueSource) -> Result<usize, PipelineError> {
    let dataset = load_dataset(input)?;
    let rows = correlate_values_preferences(&dataset, source).map_err(|e| PipelineError::input(input, e))?;
    let mut buf = Vec::new();
    write_correlations(&rows, &mut buf).map_err(|e| PipelineError::Output {
        path: output.to_path_buf(),
        cause: e.to_string(),
    })?;
    write_text(output, &String::from_utf8_lossy(&buf))?;
    Ok(rows.iter().filter(|r| r.is_degenerate()).count())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDocument {
    pub k: usize,
    pub standardization: Standardization,
    pub respondent_ids: Vec<String>,
    #[serde(flatten)]
    pub clustering: Clustering,
}

pub fn cluster_stage(
    input: &Path,
    output: &Path,
    k: usize,
    standardization: Standardization,
) -> Result<ClusterDocument, PipelineError> {
    let dataset = load_dataset(input)?;
    let clustering = cluster_general_values(&dataset, k, standardization).map_err(|e| PipelineError::input(input, e))?;
    let doc = ClusterDocument {
        k,
        standardization,
        respondent_ids: dataset.responses.iter().map(|r| r.respondent_id.clone()).collect(),
        clustering,
    };
    write_json(output, &doc)?;
    Ok(doc)
}

pub fn profiles_stage(
    input: &Path,
    output: &Path,
    k: usize,
    templates: Option<&Path>,
    standardization: Standardization,
) -> Result<ProfileDocument, PipelineError> {
    let dataset = load_dataset(input)?;
    let templates: Option<Vec<ProfileTemplate>> = templates.map(read_json).transpose()?;
    let (doc, _) = assemble_profiles(&dataset, k, templates.as_deref(), standardization)
        .map_err(|e| PipelineError::input(input, e))?;
    write_text(output, &doc.to_json())?;
    Ok(doc)
}

/// Catalog build options read from a TOML file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CatalogToml {
    pub catalog: CatalogConfig,
}

pub fn catalog_stage(
    input: &Path,
    exclusions: Option<&Path>,
    output: &Path,
    config: &CatalogConfig,
) -> Result<Catalog, PipelineError> {
    let source: CatalogSource = read_json(input)?;
    let rules: Vec<ExclusionRule> = match exclusions {
        Some(p) => read_json(p)?,
        None => Vec::new(),
    };
    let catalog = build_catalog(&source, &rules, config).map_err(|e| PipelineError::input(input, e))?;
    write_text(output, &catalog.to_json())?;
    Ok(catalog)
}

/// Fixed file names used by [`run_all`] inside its output directory.
pub const ARTIFACTS: [(&str, &str); 5] = [
    ("survey", "survey.json"),
    ("correlations", "correlations.csv"),
    ("clusters", "clusters.json"),
    ("profiles", "profiles.json"),
    ("catalog", "catalog.json"),
];

/// Runs ingest, correlate, cluster, profiles, and catalog into `out_dir`
/// and writes `out_dir/manifest.json`.
pub fn run_all(
    survey_csv: &Path,
    catalog_source: &Path,
    exclusions: Option<&Path>,
    out_dir: &Path,
    k: usize,
) -> Result<PipelineManifest, PipelineError> {
    let path = |name: &str| out_dir.join(name);
    let manifest = out_dir.join("manifest.json");
    let survey = path(ARTIFACTS[0].1);
    ingest_stage(survey_csv, &survey)?;
    correlate_stage(&survey, &path(ARTIFACTS[1].1), ValueSource::General)?;
    cluster_stage(&survey, &path(ARTIFACTS[2].1), k, Standardization::ByVariable)?;
    profiles_stage(&survey, &path(ARTIFACTS[3].1), k, None, Standardization::ByVariable)?;
    catalog_stage(catalog_source, exclusions, &path(ARTIFACTS[4].1), &CatalogConfig::default())?;
    let mut m = ManifestFile {
        path: manifest,
        manifest: PipelineManifest::default(),
    };
    for (role, name) in ARTIFACTS {
        m.record(role, &path(name))?;
    }
    m.save()?;
    Ok(m.manifest)
}
