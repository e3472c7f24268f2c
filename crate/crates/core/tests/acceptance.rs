//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the report reads top to bottom.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vcpa::analytics::{engagement, replay_metrics};
use vcpa::catalog::{build_catalog, Catalog, CatalogConfig, CatalogSource, FamilySeed};
use vcpa::client::HttpStore;
use vcpa::engine::{min_acceptance, Engine, EngineConfig, NoticeDecision, SessionState, UserAction};
use vcpa::eventlog;
use vcpa::model::{AppRecord, CollectionMode, DataType, Practice, PreferenceSet, TrafficLight, ValueName};
use vcpa::pipeline::read_json;
use vcpa::profiles::{
    adjusted_rand_index, characterize_clusters, cluster_general_values, ProfileDocument,
    Standardization, ValueProfile,
};
use vcpa::simulate::{
    brute_force_coefficient, population, run_sessions, truth_consistency, AgentKind,
    PopulationSpec, SessionPlan,
};
use vcpa::survey::{close_preferences, SurveyDataset};

type Check = fn() -> Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn app(id: &str, practices: BTreeSet<Practice>) -> AppRecord {
    AppRecord {
        app_id: id.into(),
        name: id.into(),
        description: String::new(),
        keywords: [id.to_string()].into(),
        practices,
        icon_ref: None,
        family_id: None,
    }
}

fn single_family_engine(apps: Vec<AppRecord>, profiles: Vec<ValueProfile>) -> Engine {
    let seeds = vec![FamilySeed {
        seed_app_id: apps[0].app_id.clone(),
        similar_app_ids: apps[1..].iter().map(|a| a.app_id.clone()).collect(),
    }];
    let catalog = build_catalog(&CatalogSource { apps, seeds }, &[], &CatalogConfig::default()).unwrap();
    let doc = ProfileDocument {
        k: profiles.len(),
        standardization: Standardization::ByVariable,
        source_file: "acceptance".into(),
        profiles,
        value_tests: vec![],
    };
    Engine::new(catalog, doc, EngineConfig::default())
}

fn coefficient_oracle() -> Result<(), String> {
    let start = Instant::now();
    let (responses, _) = population(&PopulationSpec { per_archetype: [40, 40, 40], ..Default::default() });
    let ds = SurveyDataset::new(responses.clone(), "acceptance");
    let ids: Vec<String> = responses.iter().map(|r| r.respondent_id.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let all = Practice::all();
    for pair in 0..1000 {
        let members: Vec<String> = ids.choose_multiple(&mut rng, 50).cloned().collect();
        let profile = ValueProfile::bare("p", &ds, &members).map_err(|e| e.to_string())?;
        let n = rng.gen_range(0..=6);
        let practices: BTreeSet<Practice> = all.choose_multiple(&mut rng, n).copied().collect();
        let a = app("x", practices);
        let got = min_acceptance(&profile, &a).map_err(|e| e.to_string())?;
        let want = brute_force_coefficient(&responses, &members.iter().cloned().collect(), &a);
        ensure(got == want, || format!("pair {pair}: engine {got:?}, brute force {want:?}"))?;
    }
    ensure(start.elapsed() < Duration::from_secs(5), || format!("took {:?}", start.elapsed()))
}

fn threshold_sweep() -> Result<(), String> {
    // 20 members: accepted counts give coefficients 0, .05, .1, .3, .5, .7, 1
    let counts = [0u32, 1, 2, 6, 10, 14, 20];
    let want = ["Red", "Red", "Yellow", "Yellow", "Yellow", "Green", "Green"];
    let practices: Vec<Practice> = DataType::ALL[..7]
        .iter()
        .map(|d| Practice::new(CollectionMode::Tracked, *d).unwrap())
        .collect();
    let mut acceptance_count: BTreeMap<Practice, u32> = Practice::all().into_iter().map(|p| (p, 20)).collect();
    for (p, c) in practices.iter().zip(counts) {
        acceptance_count.insert(*p, c);
    }
    let profile = ValueProfile {
        profile_id: "p".into(),
        display_name: "P".into(),
        persona_text: String::new(),
        member_ids: (0..20).map(|i| format!("m{i}")).collect(),
        top_values: vec![],
        significantly_higher: BTreeSet::new(),
        significantly_lower: BTreeSet::new(),
        higher_bonferroni: BTreeSet::new(),
        lower_bonferroni: BTreeSet::new(),
        acceptance_fraction: acceptance_count.iter().map(|(p, c)| (*p, *c as f64 / 20.0)).collect(),
        acceptance_count,
    };
    let apps: Vec<AppRecord> = practices
        .iter()
        .enumerate()
        .map(|(i, p)| app(&format!("a{i}"), [*p].into()))
        .collect();
    let engine = single_family_engine(apps, vec![profile]);
    let mut state = SessionState::new("s");
    engine
        .apply(&mut state, &UserAction::SelectProfile { profile_id: "p".into() }, 0)
        .map_err(|e| e.to_string())?;
    for (i, name) in want.iter().enumerate() {
        let id = format!("a{i}");
        let d = engine.decide_on_download(&state, &id, 1_000).map_err(|e| e.to_string())?;
        let (light, selective) = match &d {
            NoticeDecision::Proceed { light, .. } => (*light, false),
            NoticeDecision::SelectiveNotice { light, .. } => (*light, true),
            other => return Err(format!("{id}: unexpected {other:?}")),
        };
        ensure(format!("{light:?}") == *name, || format!("{id}: {light:?}, expected {name}"))?;
        ensure(selective == (light == TrafficLight::Red), || format!("{id}: notice {selective} on {light:?}"))?;
    }
    Ok(())
}

fn clustering_blobs() -> Result<(), String> {
    let start = Instant::now();
    let (responses, planted) = common::planted_blobs(
        2024,
        30,
        [common::GOAL_SETTER_LIKE, common::ADVENTURER_LIKE, common::NEIGHBOR_LIKE],
        0.5,
    );
    let ds = SurveyDataset::new(responses, "blobs");
    let c = cluster_general_values(&ds, 3, Standardization::ByVariable).map_err(|e| e.to_string())?;
    let ari = adjusted_rand_index(&c.labels, &planted);
    ensure(ari == 1.0, || format!("ARI {ari}"))?;
    let (chars, _) = characterize_clusters(&ds, &c.member_sets).map_err(|e| e.to_string())?;
    let goal = chars
        .iter()
        .find(|ch| ch.mean_scores[&ValueName::Power] > 6.0)
        .ok_or("no Power-high cluster")?;
    for v in [ValueName::Power, ValueName::Achievement, ValueName::Hedonism] {
        ensure(goal.significantly_higher.contains(&v), || format!("{v:?} not flagged higher"))?;
    }
    ensure(start.elapsed() < Duration::from_secs(10), || format!("took {:?}", start.elapsed()))
}

fn statistics_oracle() -> Result<(), String> {
    let counts = common::check_reference(&common::reference())?;
    ensure(counts.iter().all(|&n| n >= 20), || format!("too few reference cases: {counts:?}"))
}

fn closure_laws() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let all = Practice::all();
    let random_set = |rng: &mut ChaCha8Rng| -> PreferenceSet { all.iter().filter(|_| rng.gen_bool(0.3)).copied().collect() };
    for i in 0..10_000 {
        let s = random_set(&mut rng);
        let t = random_set(&mut rng);
        let cs = close_preferences(&s);
        ensure(s.is_subset(&cs), || format!("set {i}: not extensive"))?;
        ensure(close_preferences(&cs) == cs, || format!("set {i}: not idempotent"))?;
        let union: PreferenceSet = s.iter().chain(t.iter()).copied().collect();
        ensure(cs.is_subset(&close_preferences(&union)), || format!("set {i}: not monotone"))?;
        for p in cs.iter() {
            if let Some(w) = p.mode().weaker() {
                if let Ok(q) = Practice::new(w, p.data_type()) {
                    ensure(cs.contains(&q), || format!("set {i}: {p:?} without {q:?}"))?;
                }
            }
        }
    }
    Ok(())
}

fn family_pipeline() -> Result<(), String> {
    let source: CatalogSource = read_json(&common::fixture("catalog_source.json")).map_err(|e| e.to_string())?;
    let rules: Vec<vcpa::catalog::ExclusionRule> = read_json(&common::fixture("exclusions.json")).map_err(|e| e.to_string())?;
    let catalog = build_catalog(&source, &rules, &CatalogConfig::default()).map_err(|e| e.to_string())?;
    catalog.check_partition().map_err(|e| e.to_string())?;
    let comps = common::union_find_components(&source, CatalogConfig::default().merge_min_shared);
    let winners = common::jaccard_oracle(&source, &comps);
    let excluded = common::exclusion_ids(&rules);
    let mut expected: Vec<BTreeSet<String>> = comps
        .iter()
        .enumerate()
        .map(|(ci, c)| {
            c.iter()
                .filter(|a| winners.get(*a).map_or(true, |w| *w == ci) && !excluded.contains(*a))
                .cloned()
                .collect::<BTreeSet<String>>()
        })
        .filter(|s| !s.is_empty())
        .collect();
    expected.sort();
    let mut got: Vec<BTreeSet<String>> = catalog.families.values().cloned().collect();
    got.sort();
    ensure(got == expected, || format!("families differ: {got:?} vs {expected:?}"))
}

fn exploratory_timing() -> Result<(), String> {
    let apps: Vec<AppRecord> = (0..4).map(|i| app(&format!("a{i}"), BTreeSet::new())).collect();
    let (responses, _) = population(&PopulationSpec { per_archetype: [2, 2, 2], ..Default::default() });
    let ds = SurveyDataset::new(responses, "tiny");
    let ids: Vec<String> = ds.responses.iter().map(|r| r.respondent_id.clone()).collect();
    let p = ValueProfile::bare("p", &ds, &ids).map_err(|e| e.to_string())?;
    let engine = single_family_engine(apps, vec![p]);
    let mut state = SessionState::new("s");
    engine
        .apply(&mut state, &UserAction::SelectProfile { profile_id: "p".into() }, 0)
        .map_err(|e| e.to_string())?;
    let mut fired = Vec::new();
    for (i, t) in [200u64, 211, 239, 241].iter().enumerate() {
        let out = engine
            .apply(&mut state, &UserAction::Download { app_id: format!("a{i}") }, t * 1_000)
            .map_err(|e| e.to_string())?;
        let exploratory = matches!(out.decision, Some(NoticeDecision::ExploratoryNotice { .. }));
        fired.push(exploratory);
        if exploratory {
            engine
                .apply(
                    &mut state,
                    &UserAction::AnswerExploratory { kept_profile: true, new_profile_id: None },
                    t * 1_000,
                )
                .map_err(|e| e.to_string())?;
        }
    }
    ensure(fired == [false, true, false, false], || format!("fired at {fired:?}"))
}

fn engine_from(store: &common::Store) -> Result<Engine, String> {
    let catalog: Catalog = read_json(&store.catalog_path).map_err(|e| e.to_string())?;
    let profiles: ProfileDocument = read_json(&store.profiles_path).map_err(|e| e.to_string())?;
    Ok(Engine::new(catalog, profiles, EngineConfig::default()))
}

fn end_to_end() -> Result<(), String> {
    let (responses, _) = population(&PopulationSpec { per_archetype: [30, 30, 30], ..Default::default() });
    let store = common::start_store(&responses);
    let engine = engine_from(&store)?;
    let client = HttpStore::new(store.service.base_url());
    let plan = SessionPlan { sessions: 30, ..Default::default() };
    let truth = run_sessions(&client, engine.profiles(), &plan).map_err(|e| e.to_string())?;
    let log = eventlog::load(&store.log_path).map_err(|e| e.to_string())?;
    let sessions = eventlog::by_session(&log);
    ensure(sessions.len() == 30, || format!("{} sessions in log", sessions.len()))?;
    for t in &truth {
        let events = sessions.get(&t.session_id).ok_or(format!("{} missing from log", t.session_id))?;
        let replay = replay_metrics(&engine, events).map_err(|e| format!("{}: {e}", t.session_id))?;
        ensure(replay.decisions == t.decisions, || format!("{}: decisions differ\nreplay {:?}\ntruth  {:?}", t.session_id, replay.decisions, t.decisions))?;
        let m = &replay.metrics;
        let want = truth_consistency(t, &responses, engine.profiles(), &engine.catalog().apps, 0.1);
        ensure((m.downloads_consistent, m.downloads_total) == want, || {
            format!("{}: consistency {:?} vs truth {want:?}", t.session_id, (m.downloads_consistent, m.downloads_total))
        })?;
        ensure((m.selective_notices, m.alternatives_clicks) == (t.selective_notices, t.clicks), || {
            format!("{}: notices/clicks differ", t.session_id)
        })?;
        ensure(m.profile_id == t.final_profile, || format!("{}: profile differs", t.session_id))?;
    }
    Ok(())
}

fn engagement_split() -> Result<(), String> {
    let (responses, _) = population(&PopulationSpec { per_archetype: [30, 30, 30], ..Default::default() });
    let store = common::start_store(&responses);
    let engine = engine_from(&store)?;
    let client = HttpStore::new(store.service.base_url());
    let plan = SessionPlan { seed: 11, sessions: 40, ..Default::default() };
    let truth = run_sessions(&client, engine.profiles(), &plan).map_err(|e| e.to_string())?;
    let log = eventlog::load(&store.log_path).map_err(|e| e.to_string())?;
    let r = engagement(&log);
    let always = truth.iter().filter(|t| t.agent == AgentKind::AlwaysClick).count();
    let never = truth.iter().filter(|t| t.agent == AgentKind::NeverClick).count();
    ensure((always, never) == (10, 10), || format!("planted {always}/{never}"))?;
    ensure(r.sessions_with_notices == 40, || format!("{} sessions saw notices", r.sessions_with_notices))?;
    ensure((r.high, r.low, r.middle) == (10, 10, 20), || {
        format!("recovered high {} low {} middle {}", r.high, r.low, r.middle)
    })
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 9] = [
        ("coefficient matches brute force on 1000 random pairs", coefficient_oracle),
        ("traffic lights and selective notices across the threshold sweep", threshold_sweep),
        ("planted value clusters recovered with ARI 1 and flagged values", clustering_blobs),
        ("statistics agree with the reference implementation", statistics_oracle),
        ("preference closure laws hold on 10000 random sets", closure_laws),
        ("family merge and duplicate resolution match the oracles", family_pipeline),
        ("exploratory notice fires once inside its window", exploratory_timing),
        ("live sessions replay to identical decisions and metrics", end_to_end),
        ("engagement split recovers the planted 25%/25%", engagement_split),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(()) => println!("PASS {name}"),
            Err(e) => {
                failed += 1;
                println!("FAIL {name}: {e}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
