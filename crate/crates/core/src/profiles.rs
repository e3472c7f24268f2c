//! Value profile mining: Ward clustering of standardized general values,
//! rank-test characterization of each cluster, and persona assembly.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{ProfileError, StatsError};
use crate::model::{Practice, SurveyResponse, ValueName};
use crate::stats::{dunn_posthoc, kruskal_wallis, zscore_by_row, zscore_by_variable, TestResult};
use crate::survey::{acceptance_counts, SurveyDataset};

/// Significance level for the characterization tests.
pub const ALPHA: f64 = 0.05;
/// How many top-ranked values each profile reports.
pub const TOP_VALUES: usize = 3;

/// Serializes `BTreeMap<Practice, T>` with `Mode:DataType` string keys.
pub(crate) mod practice_map {
    use std::collections::BTreeMap;

    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::model::Practice;

    pub fn serialize<S, T>(map: &BTreeMap<Practice, T>, s: S) -> Result<S::Ok, S::Error>
    where
        S: Serializer,
        T: Serialize,
    {
        use serde::ser::SerializeMap;
        // emitted in Practice order, not string order
        let mut m = s.serialize_map(Some(map.len()))?;
        for (k, v) in map {
            m.serialize_entry(&k.to_string(), v)?;
        }
        m.end()
    }

    pub fn deserialize<'de, D, T>(d: D) -> Result<BTreeMap<Practice, T>, D::Error>
    where
        D: Deserializer<'de>,
        T: Deserialize<'de>,
    {
        let raw = BTreeMap::<String, T>::deserialize(d)?;
        raw.into_iter()
            .map(|(k, v)| k.parse::<Practice>().map(|p| (p, v)).map_err(D::Error::custom))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// Node ids: `0..n` are leaves, `n + i` is the node created by merge `i`.
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaves: usize,
    pub merges: Vec<Merge>,
    pub leaf_order: Vec<usize>,
}

impl Dendrogram {
    /// Cluster label per leaf after undoing the last `k - 1` merges.
    ///
    /// Labels are numbered by each cluster's smallest leaf index.
    pub fn cut(&self, k: usize) -> Vec<usize> {
        let n = self.leaves;
        let k = k.clamp(1, n.max(1));
        let mut parent: Vec<usize> = (0..2 * n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (i, m) in self.merges.iter().take(n - k).enumerate() {
            let node = n + i;
            let ra = find(&mut parent, m.a);
            let rb = find(&mut parent, m.b);
            parent[ra] = node;
            parent[rb] = node;
        }
        let mut label_of_root = HashMap::new();
        (0..n)
            .map(|leaf| {
                let root = find(&mut parent, leaf);
                let next = label_of_root.len();
                *label_of_root.entry(root).or_insert(next)
            })
            .collect()
    }
}

/// Agglomerative clustering with Ward linkage on Euclidean distance.
///
/// At equal heights the pair with the lexicographically smallest
/// (min-leaf, min-leaf) indices merges first.
pub fn ward_linkage(points: &[Vec<f64>]) -> Dendrogram {
    let n = points.len();
    if n == 0 {
        return Dendrogram {
            leaves: 0,
            merges: Vec::new(),
            leaf_order: Vec::new(),
        };
    }
    // slot i always holds the cluster whose smallest leaf is i
    let mut dist = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut node = (0..n).collect::<Vec<_>>();
    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
        for i in (0..n).filter(|&i| active[i]) {
            for j in (i + 1..n).filter(|&j| active[j]) {
                if dist[i][j] < best.2 {
                    best = (i, j, dist[i][j]);
                }
            }
        }
        let (i, j, height) = best;
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for k in (0..n).filter(|&k| active[k] && k != i && k != j) {
            let nk = size[k] as f64;
            let d2 = ((nk + ni) * dist[k][i].powi(2) + (nk + nj) * dist[k][j].powi(2)
                - nk * height.powi(2))
                / (ni + nj + nk);
            let d = d2.max(0.0).sqrt();
            dist[k][i] = d;
            dist[i][k] = d;
        }
        merges.push(Merge {
            a: node[i],
            b: node[j],
            height,
            size: size[i] + size[j],
        });
        active[j] = false;
        size[i] += size[j];
        node[i] = n + step;
    }
    let leaf_order = leaf_order(n, &merges);
    Dendrogram {
        leaves: n,
        merges,
        leaf_order,
    }
}

fn leaf_order(n: usize, merges: &[Merge]) -> Vec<usize> {
    if n == 1 {
        return vec![0];
    }
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![n + merges.len() - 1];
    while let Some(id) = stack.pop() {
        if id < n {
            order.push(id);
        } else {
            let m = &merges[id - n];
            stack.push(m.b);
            stack.push(m.a);
        }
    }
    order
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Standardization {
    /// z-score each value across respondents.
    #[default]
    ByVariable,
    /// z-score each respondent across values (diagnostic).
    ByRespondent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub dendrogram: Dendrogram,
    /// Cluster label per response, in dataset order.
    pub labels: Vec<usize>,
    /// Respondent ids per cluster, each in dataset order.
    pub member_sets: Vec<Vec<String>>,
}

pub fn general_value_matrix(responses: &[SurveyResponse]) -> Vec<Vec<f64>> {
    responses
        .iter()
        .map(|r| r.general_values.as_f64().to_vec())
        .collect()
}

pub fn cluster_general_values(
    dataset: &SurveyDataset,
    k: usize,
    standardization: Standardization,
) -> Result<Clustering, ProfileError> {
    let n = dataset.len();
    if k < 2 || n < k {
        return Err(ProfileError::TooFewResponses { n, k });
    }
    let raw = general_value_matrix(&dataset.responses);
    let z = match standardization {
        Standardization::ByVariable => zscore_by_variable(&raw)?,
        Standardization::ByRespondent => zscore_by_row(&raw)?,
    };
    let dendrogram = ward_linkage(&z);
    let labels = dendrogram.cut(k);
    let mut member_sets = vec![Vec::new(); k];
    for (r, &l) in dataset.responses.iter().zip(&labels) {
        member_sets[l].push(r.respondent_id.clone());
    }
    Ok(Clustering {
        dendrogram,
        labels,
        member_sets,
    })
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len() as f64;
    let choose2 = |x: f64| x * (x - 1.0) / 2.0;
    let mut table: HashMap<(usize, usize), f64> = HashMap::new();
    let mut rows: HashMap<usize, f64> = HashMap::new();
    let mut cols: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    let index: f64 = table.values().map(|&v| choose2(v)).sum();
    let sum_a: f64 = rows.values().map(|&v| choose2(v)).sum();
    let sum_b: f64 = cols.values().map(|&v| choose2(v)).sum();
    let expected = sum_a * sum_b / choose2(n);
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTest {
    pub value: ValueName,
    /// `None` when every respondent gave the same score.
    pub kruskal_wallis: Option<TestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterCharacter {
    pub top_values: Vec<ValueName>,
    pub significantly_higher: BTreeSet<ValueName>,
    pub significantly_lower: BTreeSet<ValueName>,
    pub higher_bonferroni: BTreeSet<ValueName>,
    pub lower_bonferroni: BTreeSet<ValueName>,
    pub mean_scores: BTreeMap<ValueName, f64>,
}

fn resolve_members<'a>(
    dataset: &'a SurveyDataset,
    member_sets: &[Vec<String>],
) -> Result<Vec<Vec<&'a SurveyResponse>>, ProfileError> {
    let by_id: HashMap<&str, &SurveyResponse> = dataset
        .responses
        .iter()
        .map(|r| (r.respondent_id.as_str(), r))
        .collect();
    member_sets
        .iter()
        .enumerate()
        .map(|(c, ids)| {
            if ids.is_empty() {
                return Err(ProfileError::EmptyCluster(c));
            }
            ids.iter()
                .map(|id| {
                    by_id
                        .get(id.as_str())
                        .copied()
                        .ok_or_else(|| ProfileError::UnknownRespondent(id.clone()))
                })
                .collect()
        })
        .collect()
}

/// Values with the highest mean score, descending; ties in canonical order.
pub fn top_values(members: &[&SurveyResponse], count: usize) -> Vec<ValueName> {
    let means = mean_scores(members);
    let mut ranked: Vec<ValueName> = ValueName::ALL.to_vec();
    ranked.sort_by(|a, b| means[b].total_cmp(&means[a]).then(a.cmp(b)));
    ranked.truncate(count);
    ranked
}

fn mean_scores(members: &[&SurveyResponse]) -> BTreeMap<ValueName, f64> {
    ValueName::ALL
        .into_iter()
        .map(|v| {
            let sum: f64 = members
                .iter()
                .map(|r| r.general_values.get(v).get() as f64)
                .sum();
            (v, sum / members.len() as f64)
        })
        .collect()
}

/// Kruskal-Wallis per value across clusters, then Dunn where significant.
///
/// A value is significantly higher for a cluster when every pairwise Dunn
/// comparison against the other clusters has p < 0.05 and the cluster's mean
/// rank is the larger one. Lower is the mirror image.
pub fn characterize_clusters(
    dataset: &SurveyDataset,
    member_sets: &[Vec<String>],
) -> Result<(Vec<ClusterCharacter>, Vec<ValueTest>), ProfileError> {
    let clusters = resolve_members(dataset, member_sets)?;
    let k = clusters.len();
    if k < 2 {
        return Err(ProfileError::TooFewResponses { n: dataset.len(), k });
    }
    let mut out: Vec<ClusterCharacter> = clusters
        .iter()
        .map(|members| ClusterCharacter {
            top_values: top_values(members, TOP_VALUES),
            significantly_higher: BTreeSet::new(),
            significantly_lower: BTreeSet::new(),
            higher_bonferroni: BTreeSet::new(),
            lower_bonferroni: BTreeSet::new(),
            mean_scores: mean_scores(members),
        })
        .collect();
    let mut tests = Vec::with_capacity(ValueName::ALL.len());
    for value in ValueName::ALL {
        let groups: Vec<Vec<f64>> = clusters
            .iter()
            .map(|m| m.iter().map(|r| r.general_values.get(value).get() as f64).collect())
            .collect();
        let kw = match kruskal_wallis(&groups) {
            Ok(r) => Some(r),
            Err(StatsError::DegenerateInput) | Err(StatsError::TooFewSamples { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        tests.push(ValueTest {
            value,
            kruskal_wallis: kw,
        });
        let Some(kw) = kw else { continue };
        if kw.p_value >= ALPHA {
            continue;
        }
        let dunn = dunn_posthoc(&groups)?;
        for (c, character) in out.iter_mut().enumerate() {
            let cmps: Vec<_> = (0..k).filter(|&d| d != c).filter_map(|d| dunn.get(c, d)).collect();
            let all = |raw: bool, higher: bool| {
                cmps.iter().all(|cmp| {
                    let p = if raw { cmp.result.p_value } else { cmp.p_bonferroni };
                    let z = cmp.result.statistic;
                    p < ALPHA && if higher { z > 0.0 } else { z < 0.0 }
                })
            };
            if all(true, true) {
                character.significantly_higher.insert(value);
            }
            if all(true, false) {
                character.significantly_lower.insert(value);
            }
            if all(false, true) {
                character.higher_bonferroni.insert(value);
            }
            if all(false, false) {
                character.lower_bonferroni.insert(value);
            }
        }
    }
    Ok((out, tests))
}

/// Values sorted by sample variance of their general scores, descending.
pub fn variance_ranking(dataset: &SurveyDataset) -> Vec<(ValueName, f64)> {
    let n = dataset.len() as f64;
    let mut out: Vec<(ValueName, f64)> = ValueName::ALL
        .into_iter()
        .map(|v| {
            let xs: Vec<f64> = dataset
                .responses
                .iter()
                .map(|r| r.general_values.get(v).get() as f64)
                .collect();
            let m = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
            (v, var)
        })
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

/// Exact acceptance counts for a member set, keyed by every valid practice.
pub fn acceptance_count_table(
    dataset: &SurveyDataset,
    member_set: &[String],
) -> Result<BTreeMap<Practice, u32>, ProfileError> {
    let members = resolve_members(dataset, std::slice::from_ref(&member_set.to_vec()))?;
    Ok(acceptance_counts(members[0].iter().copied()))
}

/// Fraction of members accepting each of the 37 practices.
pub fn acceptance_fractions(
    dataset: &SurveyDataset,
    member_set: &[String],
) -> Result<BTreeMap<Practice, f64>, ProfileError> {
    let n = member_set.len() as f64;
    Ok(acceptance_count_table(dataset, member_set)?
        .into_iter()
        .map(|(p, c)| (p, c as f64 / n))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueProfile {
    pub profile_id: String,
    pub display_name: String,
    pub persona_text: String,
    pub member_ids: BTreeSet<String>,
    pub top_values: Vec<ValueName>,
    pub significantly_higher: BTreeSet<ValueName>,
    pub significantly_lower: BTreeSet<ValueName>,
    #[serde(default)]
    pub higher_bonferroni: BTreeSet<ValueName>,
    #[serde(default)]
    pub lower_bonferroni: BTreeSet<ValueName>,
    #[serde(with = "practice_map")]
    pub acceptance_fraction: BTreeMap<Practice, f64>,
    /// Exact numerators behind `acceptance_fraction`; denominator is `member_ids.len()`.
    #[serde(with = "practice_map")]
    pub acceptance_count: BTreeMap<Practice, u32>,
}

impl ValueProfile {
    pub fn member_count(&self) -> u32 {
        self.member_ids.len() as u32
    }

    /// A profile with acceptance tables only, no characterization or persona.
    pub fn bare(
        profile_id: &str,
        dataset: &SurveyDataset,
        members: &[String],
    ) -> Result<ValueProfile, ProfileError> {
        let counts = acceptance_count_table(dataset, members)?;
        let n = members.len() as f64;
        Ok(ValueProfile {
            profile_id: profile_id.to_string(),
            display_name: profile_id.to_string(),
            persona_text: String::new(),
            member_ids: members.iter().cloned().collect(),
            top_values: Vec::new(),
            significantly_higher: BTreeSet::new(),
            significantly_lower: BTreeSet::new(),
            higher_bonferroni: BTreeSet::new(),
            lower_bonferroni: BTreeSet::new(),
            acceptance_fraction: counts.iter().map(|(p, &c)| (*p, c as f64 / n)).collect(),
            acceptance_count: counts,
        })
    }
}

/// Display copy for one profile.
///
/// `persona` may use `{name}`, `{top_values}`, `{higher}` and `{lower}`;
/// `{top_values}` is required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileTemplate {
    pub profile_id: String,
    pub display_name: String,
    pub persona: String,
    /// Values this persona is meant to capture; used to match templates to clusters.
    #[serde(default)]
    pub anchor_values: Vec<ValueName>,
}

impl ProfileTemplate {
    fn render(&self, character: &ClusterCharacter) -> String {
        let list = |vals: &mut dyn Iterator<Item = ValueName>| {
            let names: Vec<&str> = vals.map(ValueName::display_name).collect();
            match names.len() {
                0 => "none".to_string(),
                1 => names[0].to_string(),
                n => format!("{} and {}", names[..n - 1].join(", "), names[n - 1]),
            }
        };
        self.persona
            .replace("{name}", &self.display_name)
            .replace("{top_values}", &list(&mut character.top_values.iter().copied()))
            .replace("{higher}", &list(&mut character.significantly_higher.iter().copied()))
            .replace("{lower}", &list(&mut character.significantly_lower.iter().copied()))
    }
}

/// The three personas used by the mock store study.
pub fn default_templates() -> Vec<ProfileTemplate> {
    let t = |id: &str, name: &str, anchors: &[ValueName], blurb: &str| ProfileTemplate {
        profile_id: id.to_string(),
        display_name: name.to_string(),
        persona: format!(
            "{blurb} Top values: {{top_values}}. Rates higher than others on {{higher}}; lower on {{lower}}."
        ),
        anchor_values: anchors.to_vec(),
    };
    vec![
        t(
            "adventurer",
            "Adventurer",
            &[ValueName::Stimulation, ValueName::SelfDirection],
            "{name} wants freedom to choose their own path and to try new things.",
        ),
        t(
            "goal-setter",
            "Goal Setter",
            &[ValueName::Power, ValueName::Achievement, ValueName::Hedonism],
            "{name} is driven by ambition, success and enjoying the rewards.",
        ),
        t(
            "helpful-neighbor",
            "Helpful Neighbor",
            &[ValueName::Benevolence, ValueName::Security, ValueName::Conformity],
            "{name} looks after the people around them and values a stable, orderly life.",
        ),
    ]
}

fn generic_templates(k: usize) -> Vec<ProfileTemplate> {
    (1..=k)
        .map(|i| ProfileTemplate {
            profile_id: format!("profile-{i}"),
            display_name: format!("Profile {i}"),
            persona: "{name} ranks {top_values} highest.".to_string(),
            anchor_values: Vec::new(),
        })
        .collect()
}

/// Template index for each cluster maximizing anchor overlap with the
/// cluster's top and significantly-higher values. Falls back to index order.
fn match_templates(templates: &[ProfileTemplate], characters: &[ClusterCharacter]) -> Vec<usize> {
    let k = characters.len();
    let identity: Vec<usize> = (0..k).collect();
    if k > 8 || templates.iter().all(|t| t.anchor_values.is_empty()) {
        return identity;
    }
    let score = |t: &ProfileTemplate, c: &ClusterCharacter| -> usize {
        t.anchor_values
            .iter()
            .map(|v| {
                usize::from(c.top_values.contains(v)) + usize::from(c.significantly_higher.contains(v))
            })
            .sum()
    };
    let mut best = (identity.clone(), usize::MIN);
    let mut perm = identity;
    loop {
        let s: usize = perm
            .iter()
            .enumerate()
            .map(|(c, &t)| score(&templates[t], &characters[c]))
            .sum();
        if s > best.1 {
            best = (perm.clone(), s);
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    best.0
}

fn next_permutation(xs: &mut [usize]) -> bool {
    let Some(i) = (1..xs.len()).rev().find(|&i| xs[i - 1] < xs[i]) else {
        return false;
    };
    let j = (i..xs.len()).rev().find(|&j| xs[j] > xs[i - 1]).expect("pivot exists");
    xs.swap(i - 1, j);
    xs[i..].reverse();
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileDocument {
    pub k: usize,
    pub standardization: Standardization,
    pub source_file: String,
    pub profiles: Vec<ValueProfile>,
    pub value_tests: Vec<ValueTest>,
}

impl ProfileDocument {
    pub fn get(&self, profile_id: &str) -> Option<&ValueProfile> {
        self.profiles.iter().find(|p| p.profile_id == profile_id)
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("profiles serialize");
        s.push('\n');
        s
    }
}

/// Cluster, characterize, and render personas. Without templates the three
/// default personas are used for k = 3 and generic names otherwise.
pub fn assemble_profiles(
    dataset: &SurveyDataset,
    k: usize,
    templates: Option<&[ProfileTemplate]>,
    standardization: Standardization,
) -> Result<(ProfileDocument, Clustering), ProfileError> {
    let templates = match templates {
        Some(t) => t.to_vec(),
        None if k == 3 => default_templates(),
        None => generic_templates(k),
    };
    if templates.len() != k {
        return Err(ProfileError::TemplateCount {
            got: templates.len(),
            k,
        });
    }
    if let Some(t) = templates.iter().find(|t| !t.persona.contains("{top_values}")) {
        return Err(ProfileError::TemplateMissingTopValues(t.profile_id.clone()));
    }
    let clustering = cluster_general_values(dataset, k, standardization)?;
    let (characters, value_tests) = characterize_clusters(dataset, &clustering.member_sets)?;
    let assignment = match_templates(&templates, &characters);
    let mut profiles = Vec::with_capacity(k);
    for (c, character) in characters.iter().enumerate() {
        let template = &templates[assignment[c]];
        let members = &clustering.member_sets[c];
        let counts = acceptance_count_table(dataset, members)?;
        let n = members.len() as f64;
        profiles.push(ValueProfile {
            profile_id: template.profile_id.clone(),
            display_name: template.display_name.clone(),
            persona_text: template.render(character),
            member_ids: members.iter().cloned().collect(),
            top_values: character.top_values.clone(),
            significantly_higher: character.significantly_higher.clone(),
            significantly_lower: character.significantly_lower.clone(),
            higher_bonferroni: character.higher_bonferroni.clone(),
            lower_bonferroni: character.lower_bonferroni.clone(),
            acceptance_fraction: counts.iter().map(|(p, &c)| (*p, c as f64 / n)).collect(),
            acceptance_count: counts,
        });
    }
    Ok((
        ProfileDocument {
            k,
            standardization,
            source_file: dataset.source_file.clone(),
            profiles,
            value_tests,
        },
        clustering,
    ))
}
