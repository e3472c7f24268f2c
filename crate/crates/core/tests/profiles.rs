mod common;

use std::collections::BTreeMap;

use vcpa::model::{SurveyResponse, ValueName, ValueVector};
use vcpa::pipeline::load_dataset;
use vcpa::profiles::{
    adjusted_rand_index, assemble_profiles, characterize_clusters, cluster_general_values,
    top_values, variance_ranking, ProfileTemplate, Standardization,
};
use vcpa::simulate::Archetype;
use vcpa::survey::SurveyDataset;

use common::{planted_blobs, ADVENTURER_LIKE, GOAL_SETTER_LIKE, NEIGHBOR_LIKE};

fn blobs_dataset(seed: u64) -> (SurveyDataset, Vec<usize>) {
    let (responses, labels) = planted_blobs(seed, 30, [GOAL_SETTER_LIKE, ADVENTURER_LIKE, NEIGHBOR_LIKE], 0.5);
    (SurveyDataset::new(responses, "blobs"), labels)
}

#[test]
fn planted_blobs_recovered_exactly() {
    let (ds, planted) = blobs_dataset(11);
    let c = cluster_general_values(&ds, 3, Standardization::ByVariable).unwrap();
    assert_eq!(adjusted_rand_index(&c.labels, &planted), 1.0);
    assert_eq!(c.member_sets.iter().map(Vec::len).collect::<Vec<_>>(), vec![30, 30, 30]);
    assert_eq!(c.dendrogram.merges.len(), 89);
    assert!(c.dendrogram.merges.windows(2).all(|w| w[0].height <= w[1].height + 1e-12));
}

#[test]
fn goal_setter_like_cluster_is_flagged_higher() {
    let (ds, _) = blobs_dataset(12);
    let c = cluster_general_values(&ds, 3, Standardization::ByVariable).unwrap();
    let (chars, tests) = characterize_clusters(&ds, &c.member_sets).unwrap();
    assert_eq!(tests.len(), 10);
    let goal = chars
        .iter()
        .find(|ch| ch.mean_scores[&ValueName::Power] > 6.0)
        .expect("a power-high cluster");
    for v in [ValueName::Power, ValueName::Achievement, ValueName::Hedonism] {
        assert!(goal.significantly_higher.contains(&v), "{v:?} not flagged");
    }
    assert!(!goal.significantly_lower.contains(&ValueName::Power));
}

#[test]
fn null_population_flags_nothing() {
    // one blob split arbitrarily in three: no value should separate all clusters
    let (responses, _) = planted_blobs(99, 30, [[5.0; 10]; 3], 1.2);
    let ds = SurveyDataset::new(responses, "null");
    let sets: Vec<Vec<String>> = (0..3)
        .map(|c| ds.responses.iter().skip(c).step_by(3).map(|r| r.respondent_id.clone()).collect())
        .collect();
    let (chars, _) = characterize_clusters(&ds, &sets).unwrap();
    for ch in &chars {
        assert!(ch.higher_bonferroni.is_empty() && ch.lower_bonferroni.is_empty());
    }
}

fn response(id: &str, scores: [i64; 10]) -> SurveyResponse {
    SurveyResponse {
        respondent_id: id.to_string(),
        general_values: ValueVector::from_raw(scores).unwrap(),
        app_values: ValueVector::from_raw(scores).unwrap(),
        preferences: Default::default(),
        survey_variant: vcpa::model::SurveyVariant::LoseIt,
        demographics: BTreeMap::new(),
    }
}

#[test]
fn helpful_neighbor_top_values() {
    // Power Achv Hedo Stim SelfD Univ Bene Trad Conf Secu
    let rows = [
        response("a", [2, 3, 3, 4, 4, 6, 9, 5, 7, 8]),
        response("b", [3, 2, 3, 4, 5, 6, 8, 5, 7, 8]),
        response("c", [2, 3, 4, 3, 4, 5, 9, 6, 8, 7]),
    ];
    let refs: Vec<&SurveyResponse> = rows.iter().collect();
    assert_eq!(
        top_values(&refs, 3),
        vec![ValueName::Benevolence, ValueName::Security, ValueName::Conformity]
    );
}

#[test]
fn top_value_ties_use_canonical_order() {
    let rows = [response("a", [7, 7, 7, 7, 1, 1, 1, 1, 1, 1])];
    let refs: Vec<&SurveyResponse> = rows.iter().collect();
    assert_eq!(
        top_values(&refs, 3),
        vec![ValueName::Power, ValueName::Achievement, ValueName::Hedonism]
    );
}

#[test]
fn bundled_survey_yields_three_personas() {
    let ds = load_dataset(&common::fixture("survey.csv")).unwrap();
    let labels: Vec<(String, Archetype)> =
        serde_json::from_str(&std::fs::read_to_string(common::fixture("survey_labels.json")).unwrap()).unwrap();
    let (doc, clustering) = assemble_profiles(&ds, 3, None, Standardization::ByVariable).unwrap();
    let planted: Vec<usize> = labels
        .iter()
        .map(|(_, a)| Archetype::ALL.iter().position(|x| x == a).unwrap())
        .collect();
    assert_eq!(adjusted_rand_index(&clustering.labels, &planted), 1.0);

    let goal = doc.get("goal-setter").unwrap();
    assert!(goal.top_values.contains(&ValueName::Power));
    assert!(goal.significantly_higher.contains(&ValueName::Achievement));
    let neighbor = doc.get("helpful-neighbor").unwrap();
    assert_eq!(neighbor.top_values[0], ValueName::Benevolence);
    let adventurer = doc.get("adventurer").unwrap();
    assert!(adventurer.significantly_higher.contains(&ValueName::Stimulation));
    assert!(adventurer.persona_text.contains("Adventurer"));

    // members partition the dataset and fractions stay in [0, 1]
    let total: usize = doc.profiles.iter().map(|p| p.member_ids.len()).sum();
    assert_eq!(total, ds.len());
    for p in &doc.profiles {
        assert_eq!(p.acceptance_fraction.len(), 37);
        assert!(p.acceptance_fraction.values().all(|f| (0.0..=1.0).contains(f)));
        for (practice, count) in &p.acceptance_count {
            assert_eq!(*count as f64 / p.member_ids.len() as f64, p.acceptance_fraction[practice]);
        }
    }
    // Power, Achievement and Hedonism vary most across this population
    let top3: Vec<ValueName> = variance_ranking(&ds).into_iter().take(3).map(|(v, _)| v).collect();
    assert!(top3.contains(&ValueName::Power));
}

#[test]
fn custom_templates_must_name_top_values() {
    let ds = load_dataset(&common::fixture("survey.csv")).unwrap();
    let bad = vec![
        ProfileTemplate {
            profile_id: "x".into(),
            display_name: "X".into(),
            persona: "{name}".into(),
            anchor_values: vec![],
        };
        3
    ];
    assert!(assemble_profiles(&ds, 3, Some(&bad), Standardization::ByVariable).is_err());
    let templates: Vec<ProfileTemplate> =
        serde_json::from_str(&std::fs::read_to_string(common::fixture("personas.json")).unwrap()).unwrap();
    let (doc, _) = assemble_profiles(&ds, 3, Some(&templates), Standardization::ByVariable).unwrap();
    assert!(doc.get("achiever").unwrap().top_values.contains(&ValueName::Achievement));
    assert!(doc.get("carer").unwrap().persona_text.starts_with("Carer puts family"));
}

#[test]
fn too_few_responses_is_error() {
    let ds = SurveyDataset::new(vec![response("a", [5; 10]), response("b", [4; 10])], "tiny");
    assert!(cluster_general_values(&ds, 3, Standardization::ByVariable).is_err());
}

#[test]
fn clustering_is_deterministic() {
    let (ds, _) = blobs_dataset(5);
    let a = cluster_general_values(&ds, 3, Standardization::ByVariable).unwrap();
    let b = cluster_general_values(&ds, 3, Standardization::ByVariable).unwrap();
    assert_eq!(a, b);
}
