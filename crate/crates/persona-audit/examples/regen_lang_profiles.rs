//! Rebuilds `data/lang_profiles.json` from the seed corpora in
//! `data/lang_seed/`. Run after editing or adding seeds:
//!
//! ```text
//! cargo run -p persona-audit --example regen_lang_profiles
//! ```
//!
//! A unit test checks that the shipped file matches what this produces.

use std::fs;
use std::path::Path;

use persona_audit::preprocess::build_profile;

fn main() -> anyhow::Result<()> {
    let data_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let seed_dir = data_dir.join("lang_seed");
    let mut codes: Vec<String> = Vec::new();
    for entry in fs::read_dir(&seed_dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("txt") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                codes.push(stem.to_string());
            }
        }
    }
    codes.sort();
    let mut profiles = Vec::new();
    for code in &codes {
        let corpus = fs::read_to_string(seed_dir.join(format!("{code}.txt")))?;
        profiles.push(build_profile(code, &corpus));
    }
    let out_path = data_dir.join("lang_profiles.json");
    let body = serde_json::to_string_pretty(&profiles)?;
    fs::write(&out_path, body + "\n")?;
    println!(
        "wrote {} profiles ({}) to {}",
        profiles.len(),
        codes.join(", "),
        out_path.display()
    );
    Ok(())
}
