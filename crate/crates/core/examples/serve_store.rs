//! Start the mock app store on an ephemeral port and drive it over HTTP
//! with the bundled client, then print the session's event log.
//!
//!     cargo run --example serve_store

use std::path::PathBuf;

use vcpa::client::HttpStore;
use vcpa::engine::UserAction;
use vcpa::model::TrafficLight;
use vcpa::pipeline::{catalog_stage, profiles_stage};
use vcpa::service::{spawn, ClockMode, ServiceConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let work = tempfile::tempdir()?;
    let profiles = work.path().join("profiles.json");
    let catalog = work.path().join("catalog.json");
    profiles_stage(&fixtures.join("survey.csv"), &profiles, 3, None, Default::default())?;
    catalog_stage(
        &fixtures.join("catalog_source.json"),
        Some(&fixtures.join("exclusions.json")),
        &catalog,
        &Default::default(),
    )?;

    let service = spawn(ServiceConfig {
        listen: "127.0.0.1:0".into(),
        catalog_path: catalog,
        profiles_path: profiles,
        log_path: work.path().join("events.jsonl"),
        clock: ClockMode::Client,
        ..ServiceConfig::default()
    })?;
    println!("store at {}", service.base_url());
    let store = HttpStore::new(service.base_url());

    let session = store.create_session(Some(6))?.session_id;
    store.act(&session, &UserAction::SelectProfile { profile_id: "goal-setter".into() }, Some(2_000))?;
    let scores = store.scores(&session)?;
    let red = scores.iter().find(|s| s.light == TrafficLight::Red).map(|s| s.app_id.clone());
    if let Some(app) = red {
        let resp = store.act(&session, &UserAction::Download { app_id: app.clone() }, Some(20_000))?;
        println!("download {app}: {:?}", resp.decision);
        let resp = store.act(&session, &UserAction::Ignore { reason: "my friends use it".into() }, Some(25_000))?;
        println!("ignored, {} events", resp.events.len());
    }

    for ev in store.log(&session)? {
        println!("{:>3} {:>6} ms {:?}", ev.seq, ev.elapsed_ms, ev.kind);
    }
    Ok(())
}
