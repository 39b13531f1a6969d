//! Scratch bring-up probe: acceptance-path dry run (search fixtures, full
//! adder accuracy, scheduler savings).

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use cellsim_core::engine::{
    generate_noisy_inputs, reference_simulate, simulate, ModelSet, NoiseProfile, SimConfig,
};
use cellsim_core::metrics::e_sim;
use cellsim_core::mlp::{architecture_search, default_hidden_sizes, MlpModel, SearchConfig};
use cellsim_core::netlist::{parse_bench, tech_map, MappedCircuit};
use cellsim_core::{CellKind, TechnologyParams};

fn main() -> cellsim_core::Result<()> {
    let tech = TechnologyParams::default();
    let sim = SimConfig::for_tech(&tech);

    // --- Criterion-4 path: default search per kind, 20-stimulus suite.
    let mut models: BTreeMap<CellKind, MlpModel> = BTreeMap::new();
    let t_all = Instant::now();
    for kind in [CellKind::Inv, CellKind::Nand2, CellKind::Nor2] {
        let circuit = MappedCircuit::single_cell(kind);
        let profile =
            NoiseProfile::for_tech(&tech, circuit.inputs.clone(), sim.dt, sim.horizon);
        let suite = generate_noisy_inputs(20, 1234, &profile)?;
        let t0 = Instant::now();
        let (model, report) = architecture_search(
            kind,
            &tech,
            &default_hidden_sizes(),
            &suite,
            &SearchConfig::default(),
        )?;
        eprintln!(
            "{kind}: H={} in {:.1}s, rows={:?}",
            model.hidden,
            t0.elapsed().as_secs_f64(),
            report
                .rows
                .iter()
                .map(|r| format!("{}:{:.4}", r.hidden, r.max_e_sim))
                .collect::<Vec<_>>()
        );
        models.insert(kind, model);
    }
    eprintln!("total search time {:.1}s", t_all.elapsed().as_secs_f64());

    // --- Criterion-3 path: full adder, NN backend vs reference, 10 stimuli.
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let fa_text = std::fs::read_to_string(dir.join("fulladder.bench")).unwrap();
    let fa = tech_map(&parse_bench(&fa_text)?, &tech, 0.05e-15)?;
    let profile = NoiseProfile::for_tech(&tech, fa.inputs.clone(), sim.dt, sim.horizon);
    let suite = generate_noisy_inputs(10, 99, &profile)?;
    let mut set = ModelSet::analytic();
    for model in models.values() {
        set = set.with_nn(model.clone())?;
    }
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for stim in &suite {
        let reference = reference_simulate(&fa, stim, &sim, &tech)?;
        let (test, _) = simulate(&fa, stim, &sim, &tech, &set)?;
        for out in ["sum", "cout"] {
            let e = e_sim(&reference.waveform(out)?, &test.waveform(out)?, tech.v_dd)?;
            worst = worst.max(e);
        }
    }
    eprintln!(
        "full adder: max E_sim over outputs/stimuli = {:.5} ({:.1}s)",
        worst,
        t0.elapsed().as_secs_f64()
    );

    // --- Criterion-8 path: c880, one switching PI, theta on vs off.
    let c880_text = std::fs::read_to_string(dir.join("c880.bench")).unwrap();
    let c880 = tech_map(&parse_bench(&c880_text)?, &tech, 0.05e-15)?;
    let mut drives = BTreeMap::new();
    for name in &c880.inputs {
        drives.insert(name.clone(), cellsim_core::engine::Pwl::constant(0.0)?);
    }
    let flip = c880.inputs[0].clone();
    drives.insert(
        flip,
        cellsim_core::engine::Pwl::ramp(0.0, tech.v_dd, 2e-12, 1e-12)?,
    );
    let stim = cellsim_core::engine::Stimulus { horizon: sim.horizon, drives };
    let t0 = Instant::now();
    let (w_on, tr_on) = simulate(&c880, &stim, &sim, &tech, &ModelSet::analytic())?;
    let zero_theta = SimConfig { theta: 0.0, ..sim };
    let (w_off, tr_off) = simulate(&c880, &stim, &zero_theta, &tech, &ModelSet::analytic())?;
    let mut cross = 0.0f64;
    for name in w_on.nets.keys() {
        let e = e_sim(&w_off.waveform(name)?, &w_on.waveform(name)?, tech.v_dd)?;
        cross = cross.max(e);
    }
    eprintln!(
        "c880 savings: evals {} vs {} (ratio {:.4}), cross E_sim {:.3e} ({:.1}s)",
        tr_on.total_evaluations,
        tr_off.total_evaluations,
        tr_on.total_evaluations as f64 / tr_off.total_evaluations as f64,
        cross,
        t0.elapsed().as_secs_f64()
    );
    Ok(())
}
