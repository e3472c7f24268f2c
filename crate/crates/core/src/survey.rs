//! Survey export ingestion, preference closure, and the value/preference
//! correlation table.
//!
//! # CSV schema (version `1`)
//!
//! One row per respondent, header required, UTF-8, comma separated:
//!
//! | column                    | content                                   |
//! |---------------------------|-------------------------------------------|
//! | `respondent_id`           | opaque, unique                            |
//! | `variant`                 | `LoseIt` or `OpenLitterMap`               |
//! | `gv_<value>`              | general value score 1..=9 (10 columns)    |
//! | `av_<value>`              | app-specific value score 1..=9 (10 cols)  |
//! | `pref_<mode>_<data_type>` | `0`/`1` acceptance (37 columns)           |
//! | `demo_<anything>`         | optional, stored verbatim                 |
//!
//! `<value>` is the snake-case value name (`self_direction`), `<mode>` one of
//! `unlinked`/`linked`/`tracked`, `<data_type>` the snake-case data type.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{StatsError, SurveyError};
use crate::model::{
    Practice, PreferenceSet, SurveyResponse, SurveyVariant, ValueName, ValueScore, ValueVector,
};
use crate::stats::{spearman, TestResult};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyDataset {
    pub responses: Vec<SurveyResponse>,
    pub source_file: String,
    /// Unix seconds.
    pub ingested_at: u64,
}

impl SurveyDataset {
    pub fn new(responses: Vec<SurveyResponse>, source_file: impl Into<String>) -> Self {
        SurveyDataset {
            responses,
            source_file: source_file.into(),
            ingested_at: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn get(&self, respondent_id: &str) -> Option<&SurveyResponse> {
        self.responses
            .iter()
            .find(|r| r.respondent_id == respondent_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowRejection {
    /// 1-based line in the source file (header is line 1).
    pub line: u64,
    pub respondent_id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    pub dataset: SurveyDataset,
    pub rejections: Vec<RowRejection>,
    pub rows_read: usize,
}

impl IngestReport {
    /// One line per rejected row: `line N [id]: reason`.
    pub fn rejection_text(&self) -> String {
        let mut out = String::new();
        for r in &self.rejections {
            let id = r.respondent_id.as_deref().unwrap_or("-");
            out.push_str(&format!("line {} [{}]: {}\n", r.line, id, r.reason));
        }
        out
    }
}

/// Header for the schema, in the canonical column order.
pub fn schema_header() -> Vec<String> {
    let mut cols = vec!["respondent_id".to_string(), "variant".to_string()];
    cols.extend(ValueName::ALL.iter().map(|v| format!("gv_{}", v.column_key())));
    cols.extend(ValueName::ALL.iter().map(|v| format!("av_{}", v.column_key())));
    cols.extend(Practice::all().into_iter().map(Practice::column_name));
    cols
}

pub fn ingest_csv(path: &Path, schema_version: &str) -> Result<IngestReport, SurveyError> {
    let file = std::fs::File::open(path).map_err(|source| SurveyError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut report = ingest_reader(file, schema_version)?;
    report.dataset.source_file = path.display().to_string();
    Ok(report)
}

struct Columns {
    id: usize,
    variant: usize,
    general: [usize; 10],
    app: [usize; 10],
    prefs: Vec<(Practice, usize)>,
    demo: Vec<(String, usize)>,
}

fn resolve_columns(header: &csv::StringRecord) -> Result<Columns, SurveyError> {
    let index: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h, i)).collect();
    if index.len() != header.len() {
        return Err(SurveyError::SchemaMismatch("duplicate column names".into()));
    }
    let find = |name: &str| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| SurveyError::SchemaMismatch(format!("missing column `{name}`")))
    };
    let mut general = [0; 10];
    let mut app = [0; 10];
    for v in ValueName::ALL {
        general[v.index()] = find(&format!("gv_{}", v.column_key()))?;
        app[v.index()] = find(&format!("av_{}", v.column_key()))?;
    }
    let prefs = Practice::all()
        .into_iter()
        .map(|p| find(&p.column_name()).map(|i| (p, i)))
        .collect::<Result<Vec<_>, _>>()?;
    let known: BTreeSet<String> = schema_header().into_iter().collect();
    let mut demo = Vec::new();
    for (i, h) in header.iter().enumerate() {
        if let Some(key) = h.strip_prefix("demo_") {
            demo.push((key.to_string(), i));
        } else if !known.contains(h) {
            return Err(SurveyError::SchemaMismatch(format!("unexpected column `{h}`")));
        }
    }
    Ok(Columns {
        id: find("respondent_id")?,
        variant: find("variant")?,
        general,
        app,
        prefs,
        demo,
    })
}

fn parse_row(cols: &Columns, rec: &csv::StringRecord) -> Result<SurveyResponse, String> {
    let field = |i: usize| rec.get(i).map(str::trim).unwrap_or("");
    let respondent_id = field(cols.id).to_string();
    if respondent_id.is_empty() {
        return Err("empty respondent_id".into());
    }
    let scores = |idx: &[usize; 10], prefix: &str| -> Result<ValueVector, String> {
        let mut out = [ValueScore::new(1).expect("1 is in range"); 10];
        for v in ValueName::ALL {
            let raw = field(idx[v.index()]);
            let n: i64 = raw
                .parse()
                .map_err(|_| format!("{prefix}_{}: not an integer: `{raw}`", v.column_key()))?;
            out[v.index()] = ValueScore::new(n).map_err(|_| {
                format!("{prefix}_{}: score out of [1,9]: {n}", v.column_key())
            })?;
        }
        Ok(ValueVector::new(out))
    };
    let general_values = scores(&cols.general, "gv")?;
    let app_values = scores(&cols.app, "av")?;
    let mut preferences = PreferenceSet::new();
    for &(practice, i) in &cols.prefs {
        match field(i) {
            "1" => {
                preferences.insert(practice);
            }
            "0" => {}
            other => {
                return Err(format!(
                    "{}: expected 0 or 1, got `{other}`",
                    practice.column_name()
                ))
            }
        }
    }
    let survey_variant: SurveyVariant = field(cols.variant)
        .parse()
        .map_err(|_| format!("unknown variant `{}`", field(cols.variant)))?;
    let demographics = cols
        .demo
        .iter()
        .map(|(k, i)| (k.clone(), field(*i).to_string()))
        .collect();
    Ok(SurveyResponse {
        respondent_id,
        general_values,
        app_values,
        preferences: close_preferences(&preferences),
        survey_variant,
        demographics,
    })
}

/// Parses a survey export from any reader. Row-level problems are collected
/// in the report; only header problems abort.
pub fn ingest_reader<R: Read>(reader: R, schema_version: &str) -> Result<IngestReport, SurveyError> {
    if schema_version != SCHEMA_VERSION {
        return Err(SurveyError::SchemaMismatch(format!(
            "unsupported schema version `{schema_version}` (expected {SCHEMA_VERSION})"
        )));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let cols = resolve_columns(&header)?;
    let mut seen = BTreeSet::new();
    let mut responses = Vec::new();
    let mut rejections = Vec::new();
    let mut rows_read = 0;
    for rec in rdr.records() {
        rows_read += 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                rejections.push(RowRejection {
                    line,
                    respondent_id: None,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec.get(cols.id).map(|s| s.trim().to_string());
        if rec.len() != header.len() {
            rejections.push(RowRejection {
                line,
                respondent_id: id,
                reason: format!("expected {} fields, got {}", header.len(), rec.len()),
            });
            continue;
        }
        match parse_row(&cols, &rec) {
            Ok(resp) => {
                if seen.insert(resp.respondent_id.clone()) {
                    responses.push(resp);
                } else {
                    rejections.push(RowRejection {
                        line,
                        respondent_id: Some(resp.respondent_id),
                        reason: "Duplicate respondent_id".into(),
                    });
                }
            }
            Err(reason) => rejections.push(RowRejection {
                line,
                respondent_id: id,
                reason,
            }),
        }
    }
    Ok(IngestReport {
        dataset: SurveyDataset::new(responses, String::new()),
        rejections,
        rows_read,
    })
}

/// Writes responses back out in the schema-`1` CSV layout.
pub fn write_csv<W: std::io::Write>(responses: &[SurveyResponse], writer: W) -> Result<(), SurveyError> {
    let demo_keys: BTreeSet<&String> = responses
        .iter()
        .flat_map(|r| r.demographics.keys())
        .collect();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = schema_header();
    header.extend(demo_keys.iter().map(|k| format!("demo_{k}")));
    w.write_record(&header)?;
    let practices = Practice::all();
    for r in responses {
        let mut row = vec![r.respondent_id.clone(), r.survey_variant.to_string()];
        row.extend(r.general_values.iter().map(|(_, s)| s.get().to_string()));
        row.extend(r.app_values.iter().map(|(_, s)| s.get().to_string()));
        row.extend(
            practices
                .iter()
                .map(|p| if r.preferences.contains(p) { "1" } else { "0" }.to_string()),
        );
        row.extend(
            demo_keys
                .iter()
                .map(|k| r.demographics.get(*k).cloned().unwrap_or_default()),
        );
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| SurveyError::Csv(e.into()))?;
    Ok(())
}

/// Minimal superset in which accepting a practice implies accepting every
/// less invasive mode of the same data type (where that mode exists).
pub fn close_preferences(prefs: &PreferenceSet) -> PreferenceSet {
    let mut out = prefs.clone();
    for p in prefs.iter() {
        let mut mode = p.mode();
        while let Some(weaker) = mode.weaker() {
            match Practice::new(weaker, p.data_type()) {
                Ok(q) => {
                    out.insert(q);
                }
                Err(_) => break,
            }
            mode = weaker;
        }
    }
    out
}

/// Which value battery to correlate against acceptance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueSource {
    #[default]
    General,
    App,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub value: ValueName,
    pub practice: Practice,
    /// `None` when either vector is constant.
    pub result: Option<TestResult>,
}

impl CorrelationRow {
    pub fn is_degenerate(&self) -> bool {
        self.result.is_none()
    }
}

/// Spearman correlation between each value's scores and each practice's 0/1
/// acceptance indicator, 10 x 37 rows in canonical order.
pub fn correlate_values_preferences(
    dataset: &SurveyDataset,
    source: ValueSource,
) -> Result<Vec<CorrelationRow>, SurveyError> {
    if dataset.is_empty() {
        return Err(SurveyError::EmptyDataset);
    }
    let practices = Practice::all();
    let indicators: Vec<Vec<f64>> = practices
        .iter()
        .map(|p| {
            dataset
                .responses
                .iter()
                .map(|r| f64::from(u8::from(r.preferences.contains(p))))
                .collect()
        })
        .collect();
    let mut rows = Vec::with_capacity(ValueName::ALL.len() * practices.len());
    for value in ValueName::ALL {
        let scores: Vec<f64> = dataset
            .responses
            .iter()
            .map(|r| {
                let vec = match source {
                    ValueSource::General => &r.general_values,
                    ValueSource::App => &r.app_values,
                };
                vec.get(value).get() as f64
            })
            .collect();
        for (practice, ind) in practices.iter().zip(&indicators) {
            let result = match spearman(&scores, ind) {
                Ok(r) => Some(r),
                Err(StatsError::DegenerateInput) => None,
                Err(e) => return Err(e.into()),
            };
            rows.push(CorrelationRow {
                value,
                practice: *practice,
                result,
            });
        }
    }
    Ok(rows)
}

/// CSV export: `value,practice,rho,p_value,df,degenerate`.
pub fn write_correlations<W: std::io::Write>(rows: &[CorrelationRow], writer: W) -> Result<(), SurveyError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["value", "practice", "rho", "p_value", "df", "degenerate"])?;
    for row in rows {
        let (rho, p, df) = match &row.result {
            Some(r) => (
                r.statistic.to_string(),
                r.p_value.to_string(),
                r.df_or_groups.to_string(),
            ),
            None => (String::new(), String::new(), String::new()),
        };
        w.write_record([
            row.value.as_str().to_string(),
            row.practice.to_string(),
            rho,
            p,
            df,
            row.is_degenerate().to_string(),
        ])?;
    }
    w.flush().map_err(|e| SurveyError::Csv(e.into()))?;
    Ok(())
}

/// Count of acceptances per practice across the given responses.
pub(crate) fn acceptance_counts<'a>(
    members: impl IntoIterator<Item = &'a SurveyResponse>,
) -> BTreeMap<Practice, u32> {
    let mut counts: BTreeMap<Practice, u32> = Practice::all().into_iter().map(|p| (p, 0)).collect();
    for r in members {
        for p in r.preferences.iter() {
            *counts.entry(*p).or_default() += 1;
        }
    }
    counts
}
