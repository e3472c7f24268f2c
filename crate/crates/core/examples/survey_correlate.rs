//! Ingest the bundled survey CSV and list the strongest value/practice
//! correlations.
//!
//!     cargo run --example survey_correlate [path/to/survey.csv]

use std::path::PathBuf;

use vcpa::survey::{correlate_values_preferences, ingest_csv, ValueSource, SCHEMA_VERSION};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/survey.csv"));
    let report = ingest_csv(&path, SCHEMA_VERSION)?;
    println!(
        "{} rows read, {} kept, {} rejected",
        report.rows_read,
        report.dataset.len(),
        report.rejections.len()
    );
    print!("{}", report.rejection_text());

    let rows = correlate_values_preferences(&report.dataset, ValueSource::General)?;
    let mut valid: Vec<_> = rows.iter().filter_map(|r| r.result.map(|t| (r, t))).collect();
    valid.sort_by(|a, b| b.1.statistic.abs().total_cmp(&a.1.statistic.abs()));
    println!("{} degenerate pairs", rows.len() - valid.len());
    for (row, t) in valid.iter().take(10) {
        println!("{:<14} {:<28} rho {:+.3}  p {:.2e}", format!("{:?}", row.value), row.practice.to_string(), t.statistic, t.p_value);
    }
    Ok(())
}
