//! Every offline stage in one call, with a manifest of artifact hashes.
//!
//!     cargo run --example full_pipeline [out_dir]

use std::path::PathBuf;

use vcpa::pipeline::run_all;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let tmp = tempfile::tempdir()?;
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| tmp.path().to_path_buf());
    let manifest = run_all(
        &fixtures.join("survey.csv"),
        &fixtures.join("catalog_source.json"),
        Some(&fixtures.join("exclusions.json")),
        &out,
        3,
    )?;
    println!("{}", manifest.tool_version);
    for (role, entry) in &manifest.artifacts {
        println!("{role:<16} {:>8} bytes  {}  {}", entry.bytes, &entry.sha256[..16], entry.path);
    }
    Ok(())
}
