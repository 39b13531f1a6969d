//! Validates the committed `.bench` fixtures: published gate totals, mapping
//! behavior at benchmark scale, logical equivalence, and byte-stable
//! regeneration from the bundled generator profiles.

use std::path::PathBuf;

use cellsim_core::celllib::{CellKind, TechnologyParams};
use cellsim_core::netlist::{check_equivalence, parse_bench, tech_map};
use cellsim_core::synth::{benchmark_profiles, generate_bench, C17_BENCH, FULL_ADDER_BENCH};

fn fixture(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn committed_fixtures_match_their_generators() {
    assert_eq!(fixture("c17.bench"), C17_BENCH);
    assert_eq!(fixture("fulladder.bench"), FULL_ADDER_BENCH);
    for profile in benchmark_profiles() {
        let regenerated = generate_bench(&profile).unwrap();
        assert_eq!(
            fixture(&format!("{}.bench", profile.name)),
            regenerated,
            "{} fixture drifted from its generator profile",
            profile.name
        );
    }
}

#[test]
fn benchmark_fixtures_have_published_gate_totals() {
    assert_eq!(parse_bench(&fixture("c880.bench")).unwrap().gates.len(), 383);
    assert_eq!(parse_bench(&fixture("c1355.bench")).unwrap().gates.len(), 546);
    assert_eq!(parse_bench(&fixture("c17.bench")).unwrap().gates.len(), 6);
}

#[test]
fn c7552_maps_into_the_published_ballpark() {
    let tech = TechnologyParams::default();
    let raw = parse_bench(&fixture("c7552.bench")).unwrap();
    let mapped = tech_map(&raw, &tech, 0.05e-15).unwrap();
    let total = mapped.cells.len();
    // Published mapped size 3825 with a 15 percent tolerance band.
    assert!(
        (total as f64 - 3825.0).abs() <= 0.15 * 3825.0,
        "mapped c7552 total {total} outside 3825 +/- 15%"
    );
    let h = mapped.gate_counts();
    assert!(
        h[&CellKind::Nand2] >= h[&CellKind::Inv] && h[&CellKind::Nand2] >= h[&CellKind::Nor2],
        "expected NAND2 to dominate, got {h:?}"
    );
}

#[test]
fn benchmark_mappings_preserve_logic() {
    let tech = TechnologyParams::default();
    for name in ["c17.bench", "fulladder.bench", "c880.bench", "c1355.bench"] {
        let raw = parse_bench(&fixture(name)).unwrap();
        let mapped = tech_map(&raw, &tech, 0.05e-15).unwrap();
        check_equivalence(&raw, &mapped, 100, 0xF1D0).unwrap_or_else(|e| {
            panic!("{name}: {e}");
        });
    }
}

#[test]
fn mapped_histograms_sum_to_cell_totals() {
    let tech = TechnologyParams::default();
    for name in ["c880.bench", "c1355.bench", "c7552.bench"] {
        let raw = parse_bench(&fixture(name)).unwrap();
        let mapped = tech_map(&raw, &tech, 0.05e-15).unwrap();
        let total: usize = mapped.gate_counts().values().sum();
        assert_eq!(total, mapped.cells.len(), "{name}");
    }
}
