//! Score the catalog for a persona and walk one participant through the
//! notice flow in memory: red app, alternatives, exploratory check.
//!
//!     cargo run --example score_and_notify

use std::path::PathBuf;

use vcpa::catalog::{build_catalog, CatalogConfig, CatalogSource, ExclusionRule};
use vcpa::engine::{Engine, EngineConfig, NoticeDecision, SessionState, UserAction};
use vcpa::model::TrafficLight;
use vcpa::pipeline::{load_dataset, read_json};
use vcpa::profiles::{assemble_profiles, Standardization};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let dataset = load_dataset(&dir.join("survey.csv"))?;
    let (profiles, _) = assemble_profiles(&dataset, 3, None, Standardization::ByVariable)?;
    let source: CatalogSource = read_json(&dir.join("catalog_source.json"))?;
    let rules: Vec<ExclusionRule> = read_json(&dir.join("exclusions.json"))?;
    let catalog = build_catalog(&source, &rules, &CatalogConfig::default())?;
    let engine = Engine::new(catalog, profiles, EngineConfig::default());

    let persona = "helpful-neighbor";
    let scores = engine.score_catalog(persona)?;
    let count = |l: TrafficLight| scores.iter().filter(|s| s.light == l).count();
    println!(
        "{persona}: {} green, {} yellow, {} red",
        count(TrafficLight::Green),
        count(TrafficLight::Yellow),
        count(TrafficLight::Red)
    );

    let mut state = SessionState::new("demo");
    let act = |state: &mut SessionState, action: UserAction, t: u64| -> Result<_, Box<dyn std::error::Error>> {
        let out = engine.apply(state, &action, t)?;
        for ev in &out.events {
            println!("  [{:>6} ms] {:?}", t, ev);
        }
        Ok(out)
    };
    act(&mut state, UserAction::SelectProfile { profile_id: persona.into() }, 1_000)?;

    let red = scores.iter().find(|s| s.light == TrafficLight::Red).expect("a red app");
    let out = act(&mut state, UserAction::Download { app_id: red.app_id.clone() }, 30_000)?;
    if let Some(NoticeDecision::SelectiveNotice { coefficient, .. }) = out.decision {
        println!("{} fits {:.0}% of {persona}s", red.app_id, coefficient * 100.0);
        let alts = act(&mut state, UserAction::OpenAlternatives { app_id: red.app_id.clone() }, 32_000)?;
        let alts = alts.alternatives.unwrap_or_default();
        for a in &alts {
            println!("  alternative {} ({:.2}, {:?})", a.app_id, a.coefficient, a.light);
        }
        if let Some(first) = alts.first() {
            act(&mut state, UserAction::Download { app_id: first.app_id.clone() }, 40_000)?;
        }
    }

    // inside the exploratory window the next download asks about the persona first
    let green = scores
        .iter()
        .find(|s| s.light == TrafficLight::Green && !state.downloaded.contains(&s.app_id))
        .expect("a green app");
    let out = act(&mut state, UserAction::Download { app_id: green.app_id.clone() }, 215_000)?;
    println!("decision: {:?}", out.decision);
    act(&mut state, UserAction::AnswerExploratory { kept_profile: true, new_profile_id: None }, 220_000)?;
    println!("on the phone: {:?}", state.downloaded);
    Ok(())
}
