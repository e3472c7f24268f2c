//! Cluster general values with Ward linkage and print the resulting
//! personas with their distinguishing values.
//!
//!     cargo run --example build_profiles

use std::path::PathBuf;

use vcpa::pipeline::load_dataset;
use vcpa::profiles::{assemble_profiles, variance_ranking, Standardization};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/survey.csv");
    let dataset = load_dataset(&path)?;

    println!("values by variance:");
    for (value, var) in variance_ranking(&dataset).iter().take(3) {
        println!("  {value:?}: {var:.2}");
    }

    let (doc, clustering) = assemble_profiles(&dataset, 3, None, Standardization::ByVariable)?;
    let sizes: Vec<usize> = clustering.member_sets.iter().map(Vec::len).collect();
    println!("cluster sizes {sizes:?}");
    for p in &doc.profiles {
        println!("\n{} ({} members)", p.display_name, p.member_count());
        println!("  top values: {:?}", p.top_values);
        println!("  higher than the rest: {:?}", p.significantly_higher);
        println!("  lower than the rest:  {:?}", p.significantly_lower);
        println!("  {}", p.persona_text);
    }
    Ok(())
}
