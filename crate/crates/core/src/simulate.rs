//! Seeded synthetic data for end-to-end runs: a cluster-structured survey
//! population, a desk-scale app catalog with planted overlaps, and scripted
//! participants that browse the store over HTTP while keeping their own
//! ground-truth bookkeeping.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::catalog::{CatalogSource, ExclusionRule, FamilySeed};
use crate::client::{ClientError, HttpStore};
use crate::engine::{NoticeDecision, UserAction};
use crate::model::{
    AppRecord, CollectionMode, DataType, Practice, PreferenceSet, SurveyResponse, SurveyVariant,
    TrafficLight, ValueScore, ValueVector,
};
use crate::profiles::ProfileDocument;
use crate::survey::close_preferences;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Archetype {
    Adventurer,
    GoalSetter,
    HelpfulNeighbor,
}

impl Archetype {
    pub const ALL: [Archetype; 3] = [
        Archetype::Adventurer,
        Archetype::GoalSetter,
        Archetype::HelpfulNeighbor,
    ];

    /// Mean general-value scores in canonical value order.
    pub fn centroid(self) -> [f64; 10] {
        // Power Achv Hedo Stim SelfD Univ Bene Trad Conf Secu
        match self {
            Archetype::Adventurer => [3.0, 4.0, 6.0, 7.0, 8.0, 6.0, 5.0, 3.0, 3.0, 4.0],
            Archetype::GoalSetter => [8.0, 8.0, 8.0, 5.0, 6.0, 5.0, 5.0, 4.0, 5.0, 5.0],
            Archetype::HelpfulNeighbor => [2.0, 3.0, 3.0, 4.0, 4.0, 6.0, 8.0, 5.0, 7.0, 7.5],
        }
    }

    /// Probability of accepting unlinked / linked / tracked collection of a
    /// typical data type.
    fn mode_rates(self) -> [f64; 3] {
        match self {
            Archetype::Adventurer => [0.9, 0.65, 0.4],
            Archetype::GoalSetter => [0.8, 0.5, 0.25],
            Archetype::HelpfulNeighbor => [0.55, 0.2, 0.05],
        }
    }
}

/// How willing people are to share a data type relative to a typical one.
fn type_factor(dt: DataType) -> f64 {
    match dt {
        DataType::Financial | DataType::SensitiveInfo | DataType::Contacts => 0.15,
        DataType::BrowsingHistory | DataType::PhoneContent | DataType::OtherIdentifiers => 0.5,
        DataType::HealthAndFitness | DataType::UsageData | DataType::DiagnosticData => 1.1,
        _ => 0.8,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub seed: u64,
    pub per_archetype: [usize; 3],
    /// Within-cluster standard deviation of value scores before rounding.
    pub value_sd: f64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        PopulationSpec {
            seed: 42,
            per_archetype: [91, 91, 91],
            value_sd: 0.8,
        }
    }
}

/// Respondents grouped by archetype, interleaved so row order carries no signal.
pub fn population(spec: &PopulationSpec) -> (Vec<SurveyResponse>, Vec<Archetype>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.value_sd.max(1e-9)).expect("finite sd");
    let mut plan: Vec<Archetype> = Archetype::ALL
        .iter()
        .zip(spec.per_archetype)
        .flat_map(|(a, n)| std::iter::repeat_n(*a, n))
        .collect();
    plan.shuffle(&mut rng);
    let mut out = Vec::with_capacity(plan.len());
    for (i, arch) in plan.iter().enumerate() {
        let centroid = arch.centroid();
        let mut score = |mean: f64| {
            let v = (mean + noise.sample(&mut rng)).round().clamp(1.0, 9.0);
            ValueScore::new(v as i64).expect("clamped")
        };
        let general: [ValueScore; 10] = std::array::from_fn(|k| score(centroid[k]));
        // app-specific values sit a little closer to the middle
        let app: [ValueScore; 10] = std::array::from_fn(|k| score((centroid[k] + 5.0) / 2.0));
        let rates = arch.mode_rates();
        let mut prefs = PreferenceSet::new();
        for dt in DataType::ALL {
            let u: f64 = rng.gen();
            for (m, mode) in CollectionMode::ALL.into_iter().enumerate() {
                if u < (rates[m] * type_factor(dt)).min(0.98) {
                    if let Ok(p) = Practice::new(mode, dt) {
                        prefs.insert(p);
                    }
                }
            }
        }
        let variant = if rng.gen_bool(0.5) {
            SurveyVariant::LoseIt
        } else {
            SurveyVariant::OpenLitterMap
        };
        let mut demographics = BTreeMap::new();
        demographics.insert(
            "age_band".to_string(),
            ["18-24", "25-34", "35-44", "45-64", "65+"][rng.gen_range(0..5)].to_string(),
        );
        out.push(SurveyResponse {
            respondent_id: format!("r{:04}", i + 1),
            general_values: ValueVector::new(general),
            app_values: ValueVector::new(app),
            preferences: close_preferences(&prefs),
            survey_variant: variant,
            demographics,
        });
    }
    (out, plan)
}

const THEMES: [(&str, [&str; 6]); 10] = [
    ("run", ["running", "gps", "pace", "marathon", "distance", "route"]),
    ("yoga", ["yoga", "stretch", "flexibility", "pose", "flow", "mat"]),
    ("calm", ["meditation", "mindfulness", "calm", "breathing", "focus", "anxiety"]),
    ("diet", ["diet", "calorie", "nutrition", "meal", "weight", "macro"]),
    ("sleep", ["sleep", "snore", "alarm", "dream", "rest", "night"]),
    ("cycle", ["cycling", "bike", "ride", "cadence", "trail", "gps"]),
    ("lift", ["strength", "gym", "weights", "reps", "muscle", "bodybuilding"]),
    ("cycle-track", ["period", "ovulation", "fertility", "cycle", "pregnancy", "symptoms"]),
    ("water", ["water", "hydration", "drink", "reminder", "habit", "intake"]),
    ("steps", ["steps", "pedometer", "walking", "activity", "move", "goal"]),
];

const GENERIC: [&str; 6] = ["health", "fitness", "tracker", "workout", "wellness", "coach"];

/// What the catalog generator planted, for oracle checks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogPlan {
    /// Pairs of seed families that share at least two apps.
    pub merged_pairs: Vec<(String, String)>,
    /// Apps listed by exactly two families that do not merge.
    pub duplicates: Vec<String>,
    pub excluded: Vec<String>,
}

fn app_id(theme: &str, i: usize) -> String {
    format!("{theme}-{i}")
}

fn random_practices(rng: &mut ChaCha8Rng) -> BTreeSet<Practice> {
    let n = rng.gen_range(0..=6);
    let mut out = BTreeSet::new();
    if n == 0 {
        return out;
    }
    let all = Practice::all();
    let harsh = rng.gen_bool(0.4);
    if harsh {
        let dt = [DataType::Financial, DataType::SensitiveInfo, DataType::Contacts]
            [rng.gen_range(0..3)];
        out.insert(Practice::new(CollectionMode::Tracked, dt).expect("tracked always valid"));
    }
    while out.len() < n {
        let p = all[rng.gen_range(0..all.len())];
        let mild = matches!(
            p.data_type(),
            DataType::HealthAndFitness | DataType::UsageData | DataType::DiagnosticData
        ) || p.mode() != CollectionMode::Tracked;
        if mild || rng.gen_bool(0.2) {
            out.insert(p);
        }
    }
    out
}

/// Ten seed families of ten apps each. Families 0 and 1 share two apps;
/// families (2,3), (4,5), (6,7) each share one app; three apps are marked
/// for exclusion.
pub fn catalog_source(seed: u64) -> (CatalogSource, Vec<ExclusionRule>, CatalogPlan) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut members: Vec<Vec<String>> = THEMES
        .iter()
        .map(|(t, _)| (0..10).map(|i| app_id(t, i)).collect())
        .collect();
    // family 1 lists two of family 0's apps instead of its own last two
    members[1][8] = app_id(THEMES[0].0, 8);
    members[1][9] = app_id(THEMES[0].0, 9);
    let mut duplicates = Vec::new();
    for (home, other) in [(2usize, 3usize), (4, 5), (6, 7)] {
        let dup = app_id(THEMES[home].0, 9);
        members[other][9] = dup.clone();
        duplicates.push(dup);
    }

    let mut apps = BTreeMap::new();
    for (f, list) in members.iter().enumerate() {
        for id in list {
            if apps.contains_key(id) {
                continue;
            }
            let home = THEMES
                .iter()
                .position(|(t, _)| id.rsplit_once('-').map(|(p, _)| p) == Some(*t))
                .unwrap_or(f);
            let (theme, words) = THEMES[home];
            let mut keywords: BTreeSet<String> = words
                .choose_multiple(&mut rng, 4)
                .map(|s| s.to_string())
                .collect();
            keywords.extend(GENERIC.choose_multiple(&mut rng, 2).map(|s| s.to_string()));
            if duplicates.contains(id) {
                // borrow a couple of words from the other family's vocabulary
                let other = members.iter().position(|m| m.contains(id) && m[0] != list[0]).unwrap_or(f);
                let other = if other == home { f } else { other };
                keywords.extend(THEMES[other].1.choose_multiple(&mut rng, 2).map(|s| s.to_string()));
            }
            let number = id.rsplit_once('-').map(|(_, n)| n).unwrap_or("0");
            let mut name = theme.replace('-', " ");
            if let Some(first) = name.get_mut(0..1) {
                first.make_ascii_uppercase();
            }
            apps.insert(
                id.clone(),
                AppRecord {
                    app_id: id.clone(),
                    name: format!("{name} Pal {number}"),
                    description: format!("A {} app for {}.", words[0], words[1]),
                    keywords,
                    practices: random_practices(&mut rng),
                    icon_ref: Some(format!("icons/{id}.png")),
                    family_id: None,
                },
            );
        }
    }
    let seeds = members
        .iter()
        .map(|m| FamilySeed {
            seed_app_id: m[0].clone(),
            similar_app_ids: m[1..].to_vec(),
        })
        .collect();
    let excluded: Vec<(String, &str)> = vec![
        (app_id(THEMES[3].0, 4), "product-dependent"),
        (app_id(THEMES[5].0, 6), "geographic"),
        (app_id(THEMES[9].0, 2), "occupation"),
    ];
    let rules = excluded
        .iter()
        .map(|(id, reason)| ExclusionRule {
            app_id: id.clone(),
            reason: reason.to_string(),
        })
        .collect();
    (
        CatalogSource {
            apps: apps.into_values().collect(),
            seeds,
        },
        rules,
        CatalogPlan {
            merged_pairs: vec![(
                format!("family-{}", app_id(THEMES[0].0, 0)),
                format!("family-{}", app_id(THEMES[1].0, 0)),
            )],
            duplicates,
            excluded: excluded.into_iter().map(|(id, _)| id).collect(),
        },
    )
}

/// Participant behaviour when a selective notice appears.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentKind {
    /// Always opens the alternatives page.
    AlwaysClick,
    /// Always downloads anyway, giving a reason.
    NeverClick,
    /// Alternates, starting with a click.
    Alternating,
}

impl AgentKind {
    /// 25% always-click, 25% never-click, 50% alternating, by session index.
    pub fn for_index(i: usize) -> AgentKind {
        match i % 4 {
            0 => AgentKind::AlwaysClick,
            1 => AgentKind::NeverClick,
            _ => AgentKind::Alternating,
        }
    }
}

const REASONS: [&str; 4] = [
    "I am not sure what tracked, linked, unlinked means, so I am not sure what they collect exactly",
    "I need this app for my training plan",
    "my friends use it",
    "the alternatives did not look as good",
];

/// What a simulated participant believes happened, recorded independently of
/// the service's log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTruth {
    pub session_id: String,
    pub agent: AgentKind,
    pub decisions: Vec<NoticeDecision>,
    /// Apps on the phone at the end and the profile in effect when each was downloaded.
    pub phone: BTreeMap<String, String>,
    pub selective_notices: u32,
    pub clicks: u32,
    pub final_profile: String,
    pub entry_concern: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub seed: u64,
    pub sessions: usize,
    /// Selective notices each participant tries to reach.
    pub min_notices: u32,
    pub attempts: (usize, usize),
}

impl Default for SessionPlan {
    fn default() -> Self {
        SessionPlan {
            seed: 7,
            sessions: 30,
            min_notices: 2,
            attempts: (8, 14),
        }
    }
}

struct Agent<'a> {
    store: &'a HttpStore,
    session: String,
    kind: AgentKind,
    rng: ChaCha8Rng,
    clock: u64,
    profile: String,
    profile_ids: Vec<String>,
    truth: SessionTruth,
}

impl Agent<'_> {
    fn tick(&mut self, lo: u64, hi: u64) -> u64 {
        self.clock += self.rng.gen_range(lo..=hi);
        self.clock
    }

    fn act(&mut self, action: UserAction) -> Result<crate::service::ActionResponse, ClientError> {
        let t = self.tick(500, 4_000);
        self.store.act(&self.session, &action, Some(t))
    }

    fn download(&mut self, app: &str) -> Result<(), ClientError> {
        let resp = self.act(UserAction::Download {
            app_id: app.to_string(),
        })?;
        if let Some(d) = resp.decision {
            self.handle(d)?;
        }
        Ok(())
    }

    fn handle(&mut self, decision: NoticeDecision) -> Result<(), ClientError> {
        self.truth.decisions.push(decision.clone());
        match decision {
            NoticeDecision::Proceed { app_id, .. } => {
                self.truth.phone.insert(app_id, self.profile.clone());
            }
            NoticeDecision::ExploratoryNotice { .. } => {
                let keep = self.rng.gen_bool(0.6);
                let new_profile = if keep {
                    None
                } else {
                    let others: Vec<&String> = self.profile_ids.iter().filter(|p| **p != self.profile).collect();
                    others.choose(&mut self.rng).map(|p| p.to_string())
                };
                let keep = keep || new_profile.is_none();
                if let Some(p) = &new_profile {
                    self.profile = p.clone();
                }
                let resp = self.act(UserAction::AnswerExploratory {
                    kept_profile: keep,
                    new_profile_id: new_profile,
                })?;
                if let Some(d) = resp.decision {
                    self.handle(d)?;
                }
            }
            NoticeDecision::SelectiveNotice { app_id, .. } => {
                self.truth.selective_notices += 1;
                let click = match self.kind {
                    AgentKind::AlwaysClick => true,
                    AgentKind::NeverClick => false,
                    AgentKind::Alternating => self.truth.selective_notices % 2 == 1,
                };
                if click {
                    self.truth.clicks += 1;
                    let resp = self.act(UserAction::OpenAlternatives { app_id })?;
                    let pick = resp
                        .alternatives
                        .unwrap_or_default()
                        .into_iter()
                        .find(|a| !self.truth.phone.contains_key(&a.app_id));
                    if let Some(alt) = pick {
                        self.download(&alt.app_id)?;
                    }
                } else {
                    let reason = REASONS[self.rng.gen_range(0..REASONS.len())].to_string();
                    self.act(UserAction::Ignore { reason })?;
                    self.truth.phone.insert(app_id, self.profile.clone());
                }
            }
        }
        Ok(())
    }

    fn pick_app(&mut self, want_red: bool) -> Result<Option<String>, ClientError> {
        let scores = self.store.scores(&self.session)?;
        let pool: Vec<String> = scores
            .into_iter()
            .filter(|s| !self.truth.phone.contains_key(&s.app_id))
            .filter(|s| !want_red || s.light == TrafficLight::Red)
            .map(|s| s.app_id)
            .collect();
        Ok(pool.choose(&mut self.rng).cloned())
    }
}

/// Drives `plan.sessions` participants through a running service that uses
/// the client clock.
pub fn run_sessions(
    store: &HttpStore,
    profiles: &ProfileDocument,
    plan: &SessionPlan,
) -> Result<Vec<SessionTruth>, ClientError> {
    let profile_ids: Vec<String> = profiles.profiles.iter().map(|p| p.profile_id.clone()).collect();
    let mut out = Vec::with_capacity(plan.sessions);
    for i in 0..plan.sessions {
        let mut rng = ChaCha8Rng::seed_from_u64(plan.seed.wrapping_mul(1_000_003).wrapping_add(i as u64));
        let entry_concern = rng.gen_range(1..=9u8);
        let created = store.create_session(Some(entry_concern))?;
        let profile = profile_ids[rng.gen_range(0..profile_ids.len())].clone();
        let kind = AgentKind::for_index(i);
        let mut agent = Agent {
            store,
            session: created.session_id.clone(),
            kind,
            rng,
            clock: 0,
            profile: profile.clone(),
            profile_ids: profile_ids.clone(),
            truth: SessionTruth {
                session_id: created.session_id,
                agent: kind,
                decisions: Vec::new(),
                phone: BTreeMap::new(),
                selective_notices: 0,
                clicks: 0,
                final_profile: String::new(),
                entry_concern,
            },
        };
        agent.act(UserAction::SelectProfile { profile_id: profile })?;
        let attempts = agent.rng.gen_range(plan.attempts.0..=plan.attempts.1);
        for n in 0..attempts {
            agent.tick(8_000, 30_000);
            let want_red = agent.truth.selective_notices < plan.min_notices || agent.rng.gen_bool(0.3);
            let app = match agent.pick_app(want_red)? {
                Some(a) => Some(a),
                None => agent.pick_app(false)?,
            };
            let Some(app) = app else { break };
            if agent.rng.gen_bool(0.5) {
                agent.act(UserAction::ViewApp { app_id: app.clone() })?;
            }
            agent.download(&app)?;
            if n > 2 && agent.rng.gen_bool(0.12) {
                let on_phone: Vec<String> = agent.truth.phone.keys().cloned().collect();
                if let Some(victim) = on_phone.choose(&mut agent.rng).cloned() {
                    agent.act(UserAction::Remove {
                        app_id: victim.clone(),
                    })?;
                    agent.truth.phone.remove(&victim);
                }
            }
        }
        agent.truth.final_profile = agent.profile.clone();
        out.push(agent.truth);
    }
    Ok(out)
}

/// Recounts a profile's coefficient for an app straight from the raw survey
/// responses of its members.
pub fn brute_force_coefficient(
    responses: &[SurveyResponse],
    members: &BTreeSet<String>,
    app: &AppRecord,
) -> (u32, u32) {
    let rows: Vec<&SurveyResponse> = responses
        .iter()
        .filter(|r| members.contains(&r.respondent_id))
        .collect();
    let n = rows.len() as u32;
    let min = app
        .practices
        .iter()
        .map(|p| rows.iter().filter(|r| r.preferences.contains(p)).count() as u32)
        .min()
        .unwrap_or(n);
    (min, n)
}

/// Ground-truth consistency tally for one simulated session.
pub fn truth_consistency(
    truth: &SessionTruth,
    responses: &[SurveyResponse],
    profiles: &ProfileDocument,
    apps: &BTreeMap<String, AppRecord>,
    threshold: f64,
) -> (u32, u32) {
    let mut consistent = 0;
    for (app, profile) in &truth.phone {
        let members = &profiles.get(profile).expect("known profile").member_ids;
        let (accepting, n) = brute_force_coefficient(responses, members, &apps[app]);
        if accepting as f64 / n as f64 > threshold {
            consistent += 1;
        }
    }
    (consistent, truth.phone.len() as u32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_is_seeded() {
        let spec = PopulationSpec {
            seed: 3,
            per_archetype: [5, 5, 5],
            ..Default::default()
        };
        let (a, la) = population(&spec);
        let (b, lb) = population(&spec);
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert_eq!(a.len(), 15);
    }

    #[test]
    fn catalog_plan_shape() {
        let (src, rules, plan) = catalog_source(1);
        assert_eq!(src.seeds.len(), 10);
        assert_eq!(src.apps.len(), 95);
        assert_eq!(rules.len(), 3);
        assert_eq!(plan.duplicates.len(), 3);
        assert!(src.apps.iter().all(|a| !a.keywords.is_empty()));
    }
}
