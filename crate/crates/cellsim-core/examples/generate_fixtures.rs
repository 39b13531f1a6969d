//! Regenerates the `.bench` fixtures bundled under `fixtures/` at the
//! repository root. The benchmark-scale circuits are seeded synthetic
//! reconstructions (see the `synth` module docs); rerunning this example
//! always reproduces the committed files byte for byte.
//!
//! Usage: `cargo run -p cellsim-core --example generate_fixtures [out_dir]`

use std::path::PathBuf;

use cellsim_core::synth::{benchmark_profiles, generate_bench, C17_BENCH, FULL_ADDER_BENCH};

fn main() {
    let out_dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures"));
    std::fs::create_dir_all(&out_dir).expect("create fixtures directory");

    let mut files = vec![
        ("c17.bench".to_string(), C17_BENCH.to_string()),
        ("fulladder.bench".to_string(), FULL_ADDER_BENCH.to_string()),
    ];
    for profile in benchmark_profiles() {
        let text = generate_bench(&profile).expect("generate benchmark fixture");
        files.push((format!("{}.bench", profile.name), text));
    }

    for (name, text) in files {
        let path = out_dir.join(&name);
        std::fs::write(&path, &text).expect("write fixture");
        println!("wrote {} ({} bytes)", path.display(), text.len());
    }
}
