//! Run scripted participants against a live store, then compute the
//! consistency and engagement report from its event log.
//!
//!     cargo run --example simulate_and_report

use vcpa::analytics::build_report;
use vcpa::catalog::Catalog;
use vcpa::client::HttpStore;
use vcpa::engine::{Engine, EngineConfig};
use vcpa::eventlog;
use vcpa::pipeline::{catalog_stage, profiles_stage, read_json};
use vcpa::profiles::ProfileDocument;
use vcpa::service::{spawn, ClockMode, ServiceConfig};
use vcpa::simulate::{catalog_source, population, run_sessions, PopulationSpec, SessionPlan};
use vcpa::survey::write_csv;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let work = tempfile::tempdir()?;
    let path = |name: &str| work.path().join(name);

    let (responses, _) = population(&PopulationSpec::default());
    write_csv(&responses, std::fs::File::create(path("survey.csv"))?)?;
    let (source, rules, plan) = catalog_source(42);
    std::fs::write(path("source.json"), serde_json::to_string(&source)?)?;
    std::fs::write(path("exclusions.json"), serde_json::to_string(&rules)?)?;
    println!("planted merges {:?}, duplicates {:?}", plan.merged_pairs, plan.duplicates);

    profiles_stage(&path("survey.csv"), &path("profiles.json"), 3, None, Default::default())?;
    catalog_stage(&path("source.json"), Some(&path("exclusions.json")), &path("catalog.json"), &Default::default())?;

    let service = spawn(ServiceConfig {
        listen: "127.0.0.1:0".into(),
        catalog_path: path("catalog.json"),
        profiles_path: path("profiles.json"),
        log_path: path("events.jsonl"),
        fsync: false,
        clock: ClockMode::Client,
        ..ServiceConfig::default()
    })?;
    let profiles: ProfileDocument = read_json(&path("profiles.json"))?;
    let truth = run_sessions(&HttpStore::new(service.base_url()), &profiles, &SessionPlan::default())?;
    println!("{} sessions simulated", truth.len());
    drop(service);

    let catalog: Catalog = read_json(&path("catalog.json"))?;
    let engine = Engine::new(catalog, profiles, EngineConfig::default());
    let log = eventlog::load(&path("events.jsonl"))?;
    let entry: Vec<f64> = truth.iter().map(|t| t.entry_concern as f64).collect();
    let exit: Vec<f64> = entry.iter().map(|c| (c - 1.0).max(1.0)).collect();
    let report = build_report(&engine, &log, Some((&entry, &exit)))?;
    print!("{}", report.summary());
    Ok(())
}
