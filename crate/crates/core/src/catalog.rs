//! Mock store catalog construction.
//!
//! Each seed app plus its similar apps forms a provisional family. Families
//! that overlap by at least `merge_min_shared` apps are merged (to a fixed
//! point), apps still listed in several families are assigned to the family
//! whose keyword union is most similar by Jaccard index, and explicitly
//! excluded apps are dropped.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::CatalogError;
use crate::model::AppRecord;

pub type FamilyId = String;
pub type Families = BTreeMap<FamilyId, BTreeSet<String>>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilySeed {
    pub seed_app_id: String,
    pub similar_app_ids: Vec<String>,
}

/// Static input: app records plus the seed/similar lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogSource {
    pub apps: Vec<AppRecord>,
    pub seeds: Vec<FamilySeed>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionRule {
    pub app_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CatalogConfig {
    /// Two families merge when they share at least this many apps.
    pub merge_min_shared: usize,
}

impl Default for CatalogConfig {
    fn default() -> Self {
        CatalogConfig {
            merge_min_shared: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub apps: BTreeMap<String, AppRecord>,
    pub families: Families,
    pub exclusions: Vec<ExclusionRule>,
}

impl Catalog {
    pub fn app(&self, app_id: &str) -> Option<&AppRecord> {
        self.apps.get(app_id)
    }

    pub fn family_of(&self, app_id: &str) -> Option<&FamilyId> {
        self.apps.get(app_id)?.family_id.as_ref()
    }

    pub fn family_members(&self, family_id: &str) -> impl Iterator<Item = &AppRecord> {
        self.families
            .get(family_id)
            .into_iter()
            .flatten()
            .filter_map(|id| self.apps.get(id))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("catalog serializes");
        s.push('\n');
        s
    }

    /// Checks that families partition the included apps and every app has keywords.
    pub fn check_partition(&self) -> Result<(), String> {
        let mut seen = BTreeSet::new();
        for (fid, members) in &self.families {
            if members.is_empty() {
                return Err(format!("family {fid} is empty"));
            }
            for m in members {
                if !seen.insert(m) {
                    return Err(format!("app {m} is in more than one family"));
                }
                match self.apps.get(m) {
                    None => return Err(format!("family {fid} lists unknown app {m}")),
                    Some(a) if a.family_id.as_deref() != Some(fid) => {
                        return Err(format!("app {m} has family_id {:?}, expected {fid}", a.family_id))
                    }
                    Some(a) if a.keywords.is_empty() => {
                        return Err(format!("app {m} has no keywords"))
                    }
                    _ => {}
                }
            }
        }
        if seen.len() != self.apps.len() {
            return Err(format!(
                "{} apps included but {} belong to families",
                self.apps.len(),
                seen.len()
            ));
        }
        Ok(())
    }
}

fn family_id_for(seed: &str) -> FamilyId {
    format!("family-{seed}")
}

/// One provisional family per seed: the seed plus its similar apps.
pub fn build_families(seeds: &[FamilySeed]) -> Result<Families, CatalogError> {
    if seeds.is_empty() {
        return Err(CatalogError::NoSeeds);
    }
    let mut out = Families::new();
    for seed in seeds {
        if seed.similar_app_ids.contains(&seed.seed_app_id) {
            return Err(CatalogError::SelfSimilar(seed.seed_app_id.clone()));
        }
        let members: BTreeSet<String> = std::iter::once(seed.seed_app_id.clone())
            .chain(seed.similar_app_ids.iter().cloned())
            .collect();
        if out.insert(family_id_for(&seed.seed_app_id), members).is_some() {
            return Err(CatalogError::DuplicateSeed(seed.seed_app_id.clone()));
        }
    }
    Ok(out)
}

/// Unions families that share any app (connected components of the share graph).
pub fn merge_shared(families: &Families) -> Families {
    merge_shared_with(families, 1)
}

/// Unions families sharing at least `min_shared` apps, repeated until no such
/// pair remains. Merged families keep the smallest member family id.
pub fn merge_shared_with(families: &Families, min_shared: usize) -> Families {
    let min_shared = min_shared.max(1);
    let mut current = families.clone();
    loop {
        let ids: Vec<&FamilyId> = current.keys().collect();
        let sets: Vec<&BTreeSet<String>> = current.values().collect();
        let mut parent: Vec<usize> = (0..ids.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut changed = false;
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                if sets[i].intersection(sets[j]).take(min_shared).count() >= min_shared {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        // roots are the smallest index, hence the smallest id
                        parent[ri.max(rj)] = ri.min(rj);
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return current;
        }
        let mut next = Families::new();
        for i in 0..ids.len() {
            let root = find(&mut parent, i);
            next.entry(ids[root].clone())
                .or_default()
                .extend(sets[i].iter().cloned());
        }
        current = next;
    }
}

/// |A ∩ B| / |A ∪ B|.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> Result<f64, CatalogError> {
    let union = a.union(b).count();
    if union == 0 {
        return Err(CatalogError::BothEmpty);
    }
    Ok(a.intersection(b).count() as f64 / union as f64)
}

/// Apps listed in more than one family, with the families listing them.
pub fn duplicates(families: &Families) -> BTreeMap<String, Vec<FamilyId>> {
    let mut owners: BTreeMap<String, Vec<FamilyId>> = BTreeMap::new();
    for (fid, members) in families {
        for m in members {
            owners.entry(m.clone()).or_default().push(fid.clone());
        }
    }
    owners.retain(|_, fams| fams.len() > 1);
    owners
}

/// Assigns every duplicated app to exactly one of its families.
///
/// A family is represented by the keyword union of its non-duplicated
/// members. The app goes to the family with the highest Jaccard similarity;
/// ties prefer the larger family, then the smaller family id.
pub fn resolve_duplicates(
    families: &Families,
    apps: &BTreeMap<String, AppRecord>,
) -> Result<Families, CatalogError> {
    let dups = duplicates(families);
    let keywords = |id: &String| {
        apps.get(id)
            .map(|a| &a.keywords)
            .ok_or_else(|| CatalogError::UnknownApp(id.clone()))
    };
    let mut unions: BTreeMap<&FamilyId, (BTreeSet<String>, usize)> = BTreeMap::new();
    for (fid, members) in families {
        let mut kw = BTreeSet::new();
        let mut count = 0;
        for m in members.iter().filter(|m| !dups.contains_key(*m)) {
            kw.extend(keywords(m)?.iter().cloned());
            count += 1;
        }
        unions.insert(fid, (kw, count));
    }
    let mut out = families.clone();
    for (app, fams) in &dups {
        let app_kw = keywords(app)?;
        let mut best: Option<(&FamilyId, f64, usize)> = None;
        for fid in fams {
            let (kw, size) = &unions[fid];
            let score = jaccard(app_kw, kw)?;
            let better = match best {
                None => true,
                Some((bid, bs, bsize)) => {
                    score > bs || (score == bs && (*size > bsize || (*size == bsize && fid < bid)))
                }
            };
            if better {
                best = Some((fid, score, *size));
            }
        }
        let winner = best.expect("duplicate has at least two families").0;
        for fid in fams.iter().filter(|f| *f != winner) {
            out.get_mut(fid).expect("family exists").remove(app);
        }
    }
    out.retain(|_, m| !m.is_empty());
    Ok(out)
}

/// Removes the listed apps, recording the reason, and drops emptied families.
pub fn apply_exclusions(catalog: &Catalog, rules: &[ExclusionRule]) -> Result<Catalog, CatalogError> {
    let mut out = catalog.clone();
    for rule in rules {
        if out.apps.remove(&rule.app_id).is_none() {
            return Err(CatalogError::UnknownApp(rule.app_id.clone()));
        }
        for members in out.families.values_mut() {
            members.remove(&rule.app_id);
        }
        out.exclusions.push(rule.clone());
    }
    out.families.retain(|_, m| !m.is_empty());
    Ok(out)
}

/// Full pipeline: families, merge, duplicate resolution, exclusions.
pub fn build_catalog(
    source: &CatalogSource,
    rules: &[ExclusionRule],
    config: &CatalogConfig,
) -> Result<Catalog, CatalogError> {
    let mut apps = BTreeMap::new();
    for app in &source.apps {
        if app.keywords.is_empty() {
            return Err(CatalogError::MissingKeywords(app.app_id.clone()));
        }
        if apps.insert(app.app_id.clone(), app.clone()).is_some() {
            return Err(CatalogError::DuplicateApp(app.app_id.clone()));
        }
    }
    let families = build_families(&source.seeds)?;
    if let Some(missing) = families.values().flatten().find(|id| !apps.contains_key(*id)) {
        return Err(CatalogError::UnknownApp(missing.clone()));
    }
    let merged = merge_shared_with(&families, config.merge_min_shared);
    let resolved = resolve_duplicates(&merged, &apps)?;

    let mut exclusions = Vec::new();
    let mut included = BTreeMap::new();
    for (id, mut app) in apps {
        match resolved.iter().find(|(_, m)| m.contains(&id)) {
            Some((fid, _)) => {
                app.family_id = Some(fid.clone());
                included.insert(id, app);
            }
            None => exclusions.push(ExclusionRule {
                app_id: id,
                reason: "not in any family".into(),
            }),
        }
    }
    let catalog = Catalog {
        apps: included,
        families: resolved,
        exclusions,
    };
    apply_exclusions(&catalog, rules)
}
