//! Build app families from seed lists: merge overlapping families, settle
//! apps claimed by several families, then apply exclusions.
//!
//!     cargo run --example build_catalog

use std::path::PathBuf;

use vcpa::catalog::{build_catalog, build_families, duplicates, merge_shared_with, CatalogConfig, CatalogSource, ExclusionRule};
use vcpa::pipeline::read_json;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let source: CatalogSource = read_json(&dir.join("catalog_source.json"))?;
    let rules: Vec<ExclusionRule> = read_json(&dir.join("exclusions.json"))?;

    let seeded = build_families(&source.seeds)?;
    let config = CatalogConfig::default();
    let merged = merge_shared_with(&seeded, config.merge_min_shared);
    println!("{} seed families, {} after merging", seeded.len(), merged.len());
    for (app, claimants) in duplicates(&merged) {
        println!("  {app} claimed by {claimants:?}");
    }

    let catalog = build_catalog(&source, &rules, &config)?;
    for (family, members) in &catalog.families {
        println!("{family}: {} apps", members.len());
    }
    for e in &catalog.exclusions {
        println!("excluded {} ({})", e.app_id, e.reason);
    }
    Ok(())
}
