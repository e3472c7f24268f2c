#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;

use vcpa::catalog::{CatalogSource, ExclusionRule};
use vcpa::model::{SurveyResponse, ValueScore, ValueVector};
use vcpa::service::{self, ClockMode, RunningService, ServiceConfig};
use vcpa::stats::{dunn_posthoc, kruskal_wallis, spearman, welch_t};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

#[derive(Deserialize)]
pub struct SpearmanCase {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub rho: f64,
    pub p: f64,
}

#[derive(Deserialize)]
pub struct KruskalCase {
    pub groups: Vec<Vec<f64>>,
    pub h: f64,
    pub p: f64,
}

#[derive(Deserialize)]
pub struct DunnCase {
    pub groups: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
pub struct WelchCase {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub t: f64,
    pub p: f64,
    pub df: f64,
}

/// Values computed by scipy, frozen by `tests/fixtures/gen_stats_reference.py`.
#[derive(Deserialize)]
pub struct Reference {
    pub spearman: Vec<SpearmanCase>,
    pub kruskal: Vec<KruskalCase>,
    pub dunn: Vec<DunnCase>,
    pub welch: Vec<WelchCase>,
}

pub fn reference() -> Reference {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/stats_reference.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub const STAT_TOL: f64 = 1e-9;
pub const P_TOL: f64 = 1e-6;

fn close(what: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    if (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{what}: got {got}, want {want}"))
    }
}

/// Checks every reference case; returns (spearman, kruskal, dunn, welch) counts.
pub fn check_reference(r: &Reference) -> Result<[usize; 4], String> {
    for (n, c) in r.spearman.iter().enumerate() {
        let got = spearman(&c.x, &c.y).map_err(|e| format!("spearman #{n}: {e}"))?;
        close(&format!("spearman #{n} rho"), got.statistic, c.rho, STAT_TOL)?;
        close(&format!("spearman #{n} p"), got.p_value, c.p, P_TOL)?;
    }
    for (n, c) in r.kruskal.iter().enumerate() {
        let got = kruskal_wallis(&c.groups).map_err(|e| format!("kruskal #{n}: {e}"))?;
        close(&format!("kruskal #{n} H"), got.statistic, c.h, STAT_TOL)?;
        close(&format!("kruskal #{n} p"), got.p_value, c.p, P_TOL)?;
    }
    for (n, c) in r.dunn.iter().enumerate() {
        let got = dunn_posthoc(&c.groups).map_err(|e| format!("dunn #{n}: {e}"))?;
        let z = got.z_matrix();
        for a in 0..c.groups.len() {
            for b in 0..c.groups.len() {
                close(&format!("dunn #{n} z[{a}][{b}]"), z[a][b], c.z[a][b], STAT_TOL)?;
                if a != b {
                    let p = got.get(a, b).unwrap().result.p_value;
                    close(&format!("dunn #{n} p[{a}][{b}]"), p, c.p[a][b], P_TOL)?;
                }
            }
        }
    }
    for (n, c) in r.welch.iter().enumerate() {
        let got = welch_t(&c.a, &c.b).map_err(|e| format!("welch #{n}: {e}"))?;
        close(&format!("welch #{n} t"), got.statistic, c.t, STAT_TOL)?;
        close(&format!("welch #{n} p"), got.p_value, c.p, P_TOL)?;
        close(&format!("welch #{n} df"), got.df_or_groups, c.df, STAT_TOL)?;
    }
    Ok([r.spearman.len(), r.kruskal.len(), r.dunn.len(), r.welch.len()])
}

/// Three planted 10-d blobs with rounded, clipped scores. Returns responses
/// and the planted label of each.
pub fn planted_blobs(seed: u64, per_blob: usize, centers: [[f64; 10]; 3], sd: f64) -> (Vec<SurveyResponse>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sd).unwrap();
    let mut out = Vec::new();
    let mut labels = Vec::new();
    for i in 0..per_blob * 3 {
        let blob = i % 3;
        let scores: [ValueScore; 10] = std::array::from_fn(|k| {
            let v = (centers[blob][k] + noise.sample(&mut rng)).round().clamp(1.0, 9.0);
            ValueScore::new(v as i64).unwrap()
        });
        out.push(SurveyResponse {
            respondent_id: format!("b{i:03}"),
            general_values: ValueVector::new(scores),
            app_values: ValueVector::new(scores),
            preferences: Default::default(),
            survey_variant: if rng.gen_bool(0.5) {
                vcpa::model::SurveyVariant::LoseIt
            } else {
                vcpa::model::SurveyVariant::OpenLitterMap
            },
            demographics: BTreeMap::new(),
        });
        labels.push(blob);
    }
    (out, labels)
}

/// Canonical value order: Power Achv Hedo Stim SelfD Univ Bene Trad Conf Secu.
pub const GOAL_SETTER_LIKE: [f64; 10] = [8.0, 8.0, 8.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0];
pub const ADVENTURER_LIKE: [f64; 10] = [2.0, 2.0, 5.0, 8.0, 8.0, 5.0, 5.0, 2.0, 2.0, 2.0];
pub const NEIGHBOR_LIKE: [f64; 10] = [2.0, 2.0, 2.0, 2.0, 2.0, 5.0, 8.0, 8.0, 8.0, 8.0];

/// Families as connected components of the "shares at least `min_shared`
/// apps" graph, by union-find, repeated on the merged sets until stable.
pub fn union_find_components(source: &CatalogSource, min_shared: usize) -> Vec<BTreeSet<String>> {
    let mut sets: Vec<BTreeSet<String>> = source
        .seeds
        .iter()
        .map(|s| std::iter::once(s.seed_app_id.clone()).chain(s.similar_app_ids.iter().cloned()).collect())
        .collect();
    fn find(p: &mut Vec<usize>, x: usize) -> usize {
        if p[x] != x {
            let r = find(p, p[x]);
            p[x] = r;
        }
        p[x]
    }
    loop {
        let mut parent: Vec<usize> = (0..sets.len()).collect();
        for a in 0..sets.len() {
            for b in a + 1..sets.len() {
                if sets[a].intersection(&sets[b]).count() >= min_shared {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
        let mut comps: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
        for (i, s) in sets.iter().enumerate() {
            let r = find(&mut parent, i);
            comps.entry(r).or_default().extend(s.iter().cloned());
        }
        let next: Vec<BTreeSet<String>> = comps.into_values().collect();
        if next.len() == sets.len() {
            return next;
        }
        sets = next;
    }
}

/// For each app in more than one component, the component index it should
/// keep: best Jaccard against the other non-duplicate members' keywords,
/// ties to the larger component, then the smaller family id.
pub fn jaccard_oracle(source: &CatalogSource, comps: &[BTreeSet<String>]) -> BTreeMap<String, usize> {
    let keywords: BTreeMap<&str, &BTreeSet<String>> =
        source.apps.iter().map(|a| (a.app_id.as_str(), &a.keywords)).collect();
    let mut count: BTreeMap<&str, usize> = BTreeMap::new();
    for c in comps {
        for a in c {
            *count.entry(a.as_str()).or_default() += 1;
        }
    }
    let family_id = |c: &BTreeSet<String>| {
        let seed = source
            .seeds
            .iter()
            .filter(|s| c.contains(&s.seed_app_id))
            .map(|s| format!("family-{}", s.seed_app_id))
            .min()
            .unwrap();
        seed
    };
    let mut out = BTreeMap::new();
    for (&app, &n) in &count {
        if n < 2 {
            continue;
        }
        let mut best: Option<(f64, usize, String, usize)> = None;
        for (ci, c) in comps.iter().enumerate().filter(|(_, c)| c.contains(app)) {
            let mut union = BTreeSet::new();
            for other in c.iter().filter(|o| count[o.as_str()] == 1) {
                union.extend(keywords[other.as_str()].iter().cloned());
            }
            let mine = keywords[app];
            let inter = mine.intersection(&union).count() as f64;
            let uni = mine.union(&union).count() as f64;
            let j = if uni == 0.0 { 0.0 } else { inter / uni };
            let size = c.iter().filter(|o| count[o.as_str()] == 1).count();
            let cand = (j, size, family_id(c), ci);
            best = match best {
                None => Some(cand),
                Some(b) => {
                    let better = cand.0 > b.0
                        || (cand.0 == b.0 && cand.1 > b.1)
                        || (cand.0 == b.0 && cand.1 == b.1 && cand.2 < b.2);
                    Some(if better { cand } else { b })
                }
            };
        }
        out.insert(app.to_string(), best.unwrap().3);
    }
    out
}

pub struct Store {
    pub dir: tempfile::TempDir,
    pub service: RunningService,
    pub catalog_path: PathBuf,
    pub profiles_path: PathBuf,
    pub log_path: PathBuf,
}

/// Builds profiles and catalog from `survey` and the bundled catalog
/// fixture, then starts a client-clock service on an ephemeral port.
pub fn start_store(responses: &[SurveyResponse]) -> Store {
    let dir = tempfile::tempdir().unwrap();
    let survey = dir.path().join("survey.csv");
    let mut buf = Vec::new();
    vcpa::survey::write_csv(responses, &mut buf).unwrap();
    std::fs::write(&survey, buf).unwrap();
    let profiles_path = dir.path().join("profiles.json");
    let catalog_path = dir.path().join("catalog.json");
    vcpa::pipeline::profiles_stage(&survey, &profiles_path, 3, None, Default::default()).unwrap();
    vcpa::pipeline::catalog_stage(
        &fixture("catalog_source.json"),
        Some(&fixture("exclusions.json")),
        &catalog_path,
        &Default::default(),
    )
    .unwrap();
    let log_path = dir.path().join("events.jsonl");
    let config = ServiceConfig {
        listen: "127.0.0.1:0".into(),
        catalog_path: catalog_path.clone(),
        profiles_path: profiles_path.clone(),
        log_path: log_path.clone(),
        fsync: false,
        clock: ClockMode::Client,
        ..ServiceConfig::default()
    };
    let service = service::spawn(config).unwrap();
    Store {
        dir,
        service,
        catalog_path,
        profiles_path,
        log_path,
    }
}

pub fn exclusion_ids(rules: &[ExclusionRule]) -> BTreeSet<String> {
    rules.iter().map(|r| r.app_id.clone()).collect()
}
