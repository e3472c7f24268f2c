use std::collections::BTreeSet;

use vcpa::error::SurveyError;
use vcpa::model::{CollectionMode, DataType, Practice, ValueName};
use vcpa::survey::{
    correlate_values_preferences, ingest_reader, schema_header, write_csv, SurveyDataset,
    ValueSource, SCHEMA_VERSION,
};

fn row(id: &str, gv: [i64; 10], prefs: &[&str]) -> String {
    let prefs: BTreeSet<&str> = prefs.iter().copied().collect();
    schema_header()
        .iter()
        .map(|col| match col.as_str() {
            "respondent_id" => id.to_string(),
            "variant" => "LoseIt".to_string(),
            c if c.starts_with("gv_") || c.starts_with("av_") => {
                let key = &c[3..];
                let v = ValueName::ALL.iter().position(|v| v.column_key() == key).unwrap();
                gv[v].to_string()
            }
            c if c.starts_with("pref_") => u8::from(prefs.contains(c)).to_string(),
            _ => String::new(),
        })
        .collect::<Vec<_>>()
        .join(",")
}

fn csv(rows: &[String]) -> String {
    let mut s = schema_header().join(",");
    for r in rows {
        s.push('\n');
        s.push_str(r);
    }
    s.push('\n');
    s
}

const MID: [i64; 10] = [5; 10];

#[test]
fn three_well_formed_rows() {
    let text = csv(&[row("a", MID, &[]), row("b", MID, &[]), row("c", MID, &[])]);
    let report = ingest_reader(text.as_bytes(), SCHEMA_VERSION).unwrap();
    assert_eq!(report.dataset.len(), 3);
    assert!(report.rejections.is_empty());
}

#[test]
fn score_zero_is_rejected_with_line() {
    let mut bad = MID;
    bad[3] = 0;
    let text = csv(&[row("a", MID, &[]), row("b", bad, &[])]);
    let report = ingest_reader(text.as_bytes(), SCHEMA_VERSION).unwrap();
    assert_eq!(report.dataset.len(), 1);
    assert_eq!(report.rejections.len(), 1);
    assert_eq!(report.rejections[0].line, 3);
    assert!(report.rejections[0].reason.contains("score out of [1,9]"), "{}", report.rejections[0].reason);
    assert!(report.rejection_text().starts_with("line 3 [b]:"));
}

#[test]
fn duplicate_id_second_row_rejected() {
    let text = csv(&[row("a", MID, &[]), row("a", MID, &[])]);
    let report = ingest_reader(text.as_bytes(), SCHEMA_VERSION).unwrap();
    assert_eq!(report.dataset.len(), 1);
    assert_eq!(report.rejections[0].line, 3);
    assert!(report.rejections[0].reason.contains("Duplicate"));
}

#[test]
fn rows_are_never_fabricated() {
    let mut bad = MID;
    bad[0] = 10;
    let text = csv(&[row("a", MID, &[]), row("b", bad, &[]), row("a", MID, &[]), "c,LoseIt,1".into()]);
    let report = ingest_reader(text.as_bytes(), SCHEMA_VERSION).unwrap();
    assert_eq!(report.rows_read, 4);
    assert_eq!(report.dataset.len() + report.rejections.len(), report.rows_read);
}

#[test]
fn unknown_column_and_version_are_schema_errors() {
    let text = format!("{},extra\n", schema_header().join(","));
    assert!(matches!(ingest_reader(text.as_bytes(), SCHEMA_VERSION), Err(SurveyError::SchemaMismatch(_))));
    let text = csv(&[]);
    assert!(matches!(ingest_reader(text.as_bytes(), "2"), Err(SurveyError::SchemaMismatch(_))));
}

#[test]
fn closure_applied_at_ingest() {
    let text = csv(&[row("a", MID, &["pref_tracked_location", "pref_tracked_contact_info"])]);
    let report = ingest_reader(text.as_bytes(), SCHEMA_VERSION).unwrap();
    let prefs = &report.dataset.responses[0].preferences;
    let p = |m, d| Practice::new(m, d).unwrap();
    assert!(prefs.contains(&p(CollectionMode::Linked, DataType::Location)));
    assert!(prefs.contains(&p(CollectionMode::Unlinked, DataType::Location)));
    assert!(prefs.contains(&p(CollectionMode::Linked, DataType::ContactInfo)));
    assert_eq!(prefs.len(), 5);
}

#[test]
fn csv_round_trip() {
    let text = csv(&[row("a", [1, 2, 3, 4, 5, 6, 7, 8, 9, 1], &["pref_linked_usage_data"]), row("b", MID, &[])]);
    let first = ingest_reader(text.as_bytes(), SCHEMA_VERSION).unwrap().dataset;
    let mut buf = Vec::new();
    write_csv(&first.responses, &mut buf).unwrap();
    let second = ingest_reader(buf.as_slice(), SCHEMA_VERSION).unwrap().dataset;
    assert_eq!(first.responses, second.responses);
}

/// Security scores decide tracked acceptance: anyone with Security >= 6
/// rejects all tracked practices, everyone else accepts them.
#[test]
fn security_against_tracked_is_negative() {
    let mut rows = Vec::new();
    let tracked: Vec<String> = DataType::ALL
        .iter()
        .map(|d| Practice::new(CollectionMode::Tracked, *d).unwrap().column_name())
        .collect();
    for i in 0..40 {
        let mut gv = MID;
        gv[9] = 1 + (i % 9);
        gv[0] = 1 + (i * 7 % 9);
        let prefs: Vec<&str> = if gv[9] >= 6 { vec![] } else { tracked.iter().map(String::as_str).collect() };
        rows.push(row(&format!("r{i}"), gv, &prefs));
    }
    let text = csv(&rows);
    let ds: SurveyDataset = ingest_reader(text.as_bytes(), SCHEMA_VERSION).unwrap().dataset;
    let table = correlate_values_preferences(&ds, ValueSource::General).unwrap();
    assert_eq!(table.len(), 370);
    for r in table.iter().filter(|r| r.value == ValueName::Security && r.practice.mode() == CollectionMode::Tracked) {
        assert!(r.result.as_ref().unwrap().statistic < 0.0);
    }
    // brute-force sign check: mean Security of acceptors below that of rejectors
    let accept: Vec<f64> = ds.responses.iter().filter(|r| !r.preferences.is_empty()).map(|r| r.general_values.as_f64()[9]).collect();
    let reject: Vec<f64> = ds.responses.iter().filter(|r| r.preferences.is_empty()).map(|r| r.general_values.as_f64()[9]).collect();
    assert!(accept.iter().sum::<f64>() / (accept.len() as f64) < reject.iter().sum::<f64>() / (reject.len() as f64));
}

#[test]
fn everyone_accepting_is_flagged_degenerate() {
    let rows: Vec<String> = (0..5)
        .map(|i| {
            let mut gv = MID;
            gv[0] = 1 + i;
            row(&format!("r{i}"), gv, &["pref_unlinked_usage_data"])
        })
        .collect();
    let ds = ingest_reader(csv(&rows).as_bytes(), SCHEMA_VERSION).unwrap().dataset;
    let table = correlate_values_preferences(&ds, ValueSource::General).unwrap();
    let usage = Practice::new(CollectionMode::Unlinked, DataType::UsageData).unwrap();
    assert!(table.iter().filter(|r| r.practice == usage).all(|r| r.is_degenerate()));
    assert_eq!(table.len(), 370);
}

#[test]
fn empty_dataset_is_error() {
    let ds = SurveyDataset::new(Vec::new(), "none");
    assert!(matches!(correlate_values_preferences(&ds, ValueSource::General), Err(SurveyError::EmptyDataset)));
}
