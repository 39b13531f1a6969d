//! Scratch bring-up probe: fixture histograms and cost-chain numbers.

use std::path::PathBuf;

use cellsim_core::costmodel::{
    allocate_models, improvement, stock_lut_profiles, stock_shapes, CpuSpec, GpuSpec,
};
use cellsim_core::engine::ScheduleTrace;
use cellsim_core::netlist::{parse_bench, tech_map};
use cellsim_core::TechnologyParams;

fn main() -> cellsim_core::Result<()> {
    let tech = TechnologyParams::default();
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    for name in ["fulladder", "c880", "c1355", "c7552"] {
        let text = std::fs::read_to_string(dir.join(format!("{name}.bench"))).unwrap();
        let raw = parse_bench(&text)?;
        let mapped = tech_map(&raw, &tech, 0.05e-15)?;
        let hist = mapped.gate_counts();
        let alloc = allocate_models(&hist, &stock_shapes(), &GpuSpec::default())?;
        let trace = ScheduleTrace::all_active(&mapped, 100, 5e-15);
        let report = improvement(
            &mapped,
            &trace,
            &alloc,
            &stock_shapes(),
            &stock_lut_profiles(),
            &CpuSpec::default(),
            &GpuSpec::default(),
        )?;
        println!(
            "{name}: hist={:?} alloc={:?} cores={} improvement={:.4}",
            hist.values().collect::<Vec<_>>(),
            alloc.instances.values().collect::<Vec<_>>(),
            alloc.cores_used,
            report.improvement
        );
    }
    Ok(())
}
