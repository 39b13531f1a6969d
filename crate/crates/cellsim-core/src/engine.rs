//! Transient simulation of mapped circuits.
//!
//! The integrator advances every net voltage on a fixed interval grid with
//! an explicit update: each cell contributes its output current (from an
//! analytic evaluation, a table lookup, or a trained network — the
//! [`ModelSet`]) plus the charge its coupling capacitance injects when an
//! input moved during the previous interval. State is double-buffered —
//! every evaluation inside an interval reads the interval-start snapshot and
//! writes the interval-end buffer — so the result is independent of the
//! order cells are visited in.
//!
//! An activity scheduler skips cells whose node voltages all moved at most
//! `theta` in the previous interval and whose current at the last evaluation
//! was negligible; a run with `theta = 0` reproduces the
//! evaluate-everything run. [`reference_simulate`] subdivides every interval
//! to serve as the in-repo ground truth.

use std::collections::BTreeMap;
use std::io::Write as IoWrite;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::celllib::{CellKind, TechnologyParams};
use crate::error::{Error, Result};
use crate::lut::Lut;
use crate::metrics::WaveformSet;
use crate::mlp::MlpModel;
use crate::netlist::MappedCircuit;

/// Default integration interval, seconds. The explicit update is stable only
/// while `dT · (∂i/∂V) / C < 2` on every node; for the default technology
/// the steepest current slope inside the admissible box is ~3.3e-2 A/V
/// against ~0.12 fF of intrinsic node capacitance, bounding the interval at
/// ~7.3 fs. 5 fs keeps the worst-case factor near 1.4 with margin for load.
pub const DEFAULT_DT: f64 = 5e-15;
/// Default sub-steps per interval for the reference run.
pub const DEFAULT_REFINE: usize = 100;
/// Default simulated horizon, seconds.
pub const DEFAULT_HORIZON: f64 = 10e-12;
/// Default activity threshold as a fraction of the supply.
pub const DEFAULT_THETA_FRACTION: f64 = 1e-3;
/// A cell whose last evaluated |i_out| exceeds this fraction of `g_scale`
/// stays active even when its node voltages settled below `theta`: the
/// smooth current model never reaches exactly zero, so "no voltage change"
/// alone cannot prove a cell is done moving.
pub const ACTIVITY_CURRENT_FLOOR_FRACTION: f64 = 1e-6;
/// Hard cap on total integration steps per run, guarding `horizon / dT`
/// against runaway configurations.
pub const MAX_STEPS: f64 = 5e8;

/// Piecewise-linear drive: linear interpolation between breakpoints, holding
/// the first value before the first breakpoint and the last value after the
/// last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pwl {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Pwl {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let pwl = Pwl { times, values };
        pwl.validate()?;
        Ok(pwl)
    }

    /// A drive that starts at `from`, begins ramping at `t_start`, and
    /// reaches `to` after `slew` seconds.
    pub fn ramp(from: f64, to: f64, t_start: f64, slew: f64) -> Result<Self> {
        if t_start > 0.0 {
            Pwl::new(vec![0.0, t_start, t_start + slew], vec![from, from, to])
        } else {
            Pwl::new(vec![0.0, slew], vec![from, to])
        }
    }

    pub fn constant(level: f64) -> Result<Self> {
        Pwl::new(vec![0.0], vec![level])
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.is_empty() {
            return Err(Error::Validation("a drive needs at least one breakpoint".into()));
        }
        if self.times.len() != self.values.len() {
            return Err(Error::Validation(format!(
                "{} breakpoint times but {} values",
                self.times.len(),
                self.values.len()
            )));
        }
        if self.times[0] != 0.0 {
            return Err(Error::Validation(format!(
                "the first breakpoint must sit at t = 0, got {}",
                self.times[0]
            )));
        }
        if !self.times.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Validation("breakpoint times must strictly increase".into()));
        }
        if self.times.iter().chain(&self.values).any(|v| !v.is_finite()) {
            return Err(Error::Validation("drive contains a non-finite entry".into()));
        }
        Ok(())
    }

    /// Value at time `t`, holding the end values outside the breakpoint span.
    pub fn value_at(&self, t: f64) -> f64 {
        let times = &self.times;
        if t <= times[0] {
            return self.values[0];
        }
        let last = times.len() - 1;
        if t >= times[last] {
            return self.values[last];
        }
        let hi = times.partition_point(|&x| x <= t);
        let (t0, t1) = (times[hi - 1], times[hi]);
        let (v0, v1) = (self.values[hi - 1], self.values[hi]);
        v0 + (t - t0) / (t1 - t0) * (v1 - v0)
    }
}

/// Drives for every primary input over a common horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stimulus {
    /// Seconds the drives are specified for; runs may not extend past it.
    pub horizon: f64,
    pub drives: BTreeMap<String, Pwl>,
}

impl Stimulus {
    /// Hold every input at a fixed level.
    pub fn constant(levels: &BTreeMap<String, f64>, horizon: f64) -> Result<Self> {
        let drives = levels
            .iter()
            .map(|(name, &v)| Ok((name.clone(), Pwl::constant(v)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let s = Stimulus { horizon, drives };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::Validation(format!(
                "stimulus horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.drives.is_empty() {
            return Err(Error::Validation("stimulus drives no inputs".into()));
        }
        for (name, pwl) in &self.drives {
            pwl.validate().map_err(|e| {
                Error::Validation(format!("drive for input {name:?} is malformed: {e}"))
            })?;
        }
        Ok(())
    }
}

/// Which current evaluator a run is meant to use. The tag is carried by
/// configs and reports; the evaluators actually consulted are the ones in
/// the [`ModelSet`] passed to [`simulate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Analytic,
    Lut,
    Nn,
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BackendKind::Analytic => "analytic",
            BackendKind::Lut => "lut",
            BackendKind::Nn => "nn",
        })
    }
}

/// Run parameters for the transient integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Integration interval, seconds.
    pub dt: f64,
    /// Activity threshold, volts: a cell sleeps once all of its node
    /// voltages move at most this much per interval (and its current has
    /// decayed, see [`ACTIVITY_CURRENT_FLOOR_FRACTION`]).
    pub theta: f64,
    pub backend: BackendKind,
    /// Sub-steps per interval for [`reference_simulate`].
    pub refine: usize,
    /// Simulated time span, seconds.
    pub horizon: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: DEFAULT_DT,
            // One thousandth of the default 0.7 V supply.
            theta: DEFAULT_THETA_FRACTION * 0.7,
            backend: BackendKind::Analytic,
            refine: DEFAULT_REFINE,
            horizon: DEFAULT_HORIZON,
        }
    }
}

impl SimConfig {
    /// Defaults with the activity threshold scaled to `tech`'s supply.
    pub fn for_tech(tech: &TechnologyParams) -> Self {
        SimConfig { theta: DEFAULT_THETA_FRACTION * tech.v_dd, ..SimConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.theta.is_finite() && self.theta >= 0.0) {
            return Err(Error::Config(format!(
                "theta must be non-negative, got {}",
                self.theta
            )));
        }
        if self.refine == 0 {
            return Err(Error::Config("refine must be at least 1".into()));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::Config(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        Ok(())
    }

    fn interval_count(&self) -> Result<usize> {
        let ratio = self.horizon / self.dt;
        if !ratio.is_finite() || ratio > MAX_STEPS {
            return Err(Error::Config(format!(
                "horizon {} s over dt {} s needs {ratio:e} intervals; the limit is {MAX_STEPS:e}",
                self.horizon, self.dt
            )));
        }
        Ok((ratio.ceil() as usize).max(1))
    }
}

/// Current evaluator for one cell kind.
#[derive(Debug, Clone)]
pub enum KindModel {
    /// Closed-form surrogate from [`TechnologyParams`].
    Analytic,
    Lut(Lut),
    Nn(MlpModel),
}

/// One current evaluator per cell kind.
#[derive(Debug, Clone)]
pub struct ModelSet {
    slots: [KindModel; 3],
}

impl ModelSet {
    /// Analytic evaluation for every kind.
    pub fn analytic() -> Self {
        ModelSet { slots: [KindModel::Analytic, KindModel::Analytic, KindModel::Analytic] }
    }

    /// Table lookup for every kind: exactly one table per kind.
    pub fn from_luts(luts: impl IntoIterator<Item = Lut>) -> Result<Self> {
        let mut set = ModelSet::analytic();
        let mut seen = [false; 3];
        for lut in luts {
            let idx = lut.kind.index();
            if seen[idx] {
                return Err(Error::Contract(format!("two tables supplied for {}", lut.kind)));
            }
            seen[idx] = true;
            lut.validate()?;
            set.slots[idx] = KindModel::Lut(lut);
        }
        if let Some(missing) = CellKind::ALL.iter().find(|k| !seen[k.index()]) {
            return Err(Error::Contract(format!("no table supplied for {missing}")));
        }
        Ok(set)
    }

    /// Network inference for every kind: exactly one model per kind.
    pub fn from_models(models: impl IntoIterator<Item = MlpModel>) -> Result<Self> {
        let mut set = ModelSet::analytic();
        let mut seen = [false; 3];
        for model in models {
            let idx = model.kind.index();
            if seen[idx] {
                return Err(Error::Contract(format!("two models supplied for {}", model.kind)));
            }
            seen[idx] = true;
            set = set.with_nn(model)?;
        }
        if let Some(missing) = CellKind::ALL.iter().find(|k| !seen[k.index()]) {
            return Err(Error::Contract(format!("no model supplied for {missing}")));
        }
        Ok(set)
    }

    /// Replace one kind's evaluator with a trained network.
    pub fn with_nn(mut self, model: MlpModel) -> Result<Self> {
        model.validate()?;
        let expect = model.kind.eval_dim();
        if model.d_in != expect {
            return Err(Error::Contract(format!(
                "{} evaluates {expect} node voltages but the model takes {}",
                model.kind, model.d_in
            )));
        }
        let idx = model.kind.index();
        self.slots[idx] = KindModel::Nn(model);
        Ok(self)
    }

    /// Replace one kind's evaluator with a lookup table.
    pub fn with_lut(mut self, lut: Lut) -> Result<Self> {
        lut.validate()?;
        let idx = lut.kind.index();
        self.slots[idx] = KindModel::Lut(lut);
        Ok(self)
    }

    pub fn backend_for(&self, kind: CellKind) -> &KindModel {
        &self.slots[kind.index()]
    }

    /// Output current of `kind` at node voltages `point`, amperes.
    pub fn current(&self, kind: CellKind, tech: &TechnologyParams, point: &[f64]) -> Result<f64> {
        match &self.slots[kind.index()] {
            KindModel::Analytic => tech.output_current(kind, point),
            KindModel::Lut(lut) => lut.query(point),
            KindModel::Nn(model) => model.forward(point),
        }
    }
}

struct CellRt {
    kind: CellKind,
    inputs: [usize; 2],
    n_in: usize,
    output: usize,
    c_m: f64,
    inv_c: f64,
}

/// Index-resolved circuit: net names mapped to dense ids, per-cell
/// capacitance totals precomputed.
pub struct SimRuntime {
    net_names: Vec<String>,
    net_index: BTreeMap<String, usize>,
    /// Primary input net ids, in circuit input order.
    pi_ids: Vec<usize>,
    cells: Vec<CellRt>,
    /// Amperes below which a settled cell may leave the active set.
    current_floor: f64,
    v_dd: f64,
}

impl SimRuntime {
    pub fn new(circuit: &MappedCircuit, tech: &TechnologyParams) -> Result<Self> {
        tech.validate()?;
        let mut names: Vec<String> = circuit.inputs.clone();
        for cell in &circuit.cells {
            names.extend(cell.inputs.iter().cloned());
            names.push(cell.output.clone());
        }
        names.sort();
        names.dedup();
        let net_index: BTreeMap<String, usize> =
            names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();

        for port in &circuit.outputs {
            if !net_index.contains_key(&port.net) {
                return Err(Error::Contract(format!(
                    "output port {:?} reads undriven net {:?}",
                    port.name, port.net
                )));
            }
        }

        let mut cells = Vec::with_capacity(circuit.cells.len());
        for cell in &circuit.cells {
            let want = cell.kind.input_count();
            if cell.inputs.len() != want {
                return Err(Error::Contract(format!(
                    "{} drives {:?} with {} inputs but needs {want}",
                    cell.kind,
                    cell.output,
                    cell.inputs.len()
                )));
            }
            let mut inputs = [0usize; 2];
            for (slot, name) in inputs.iter_mut().zip(&cell.inputs) {
                *slot = net_index[name];
            }
            let caps = tech.caps(cell.kind);
            let load = circuit.load_caps.get(&cell.output).copied().unwrap_or(0.0);
            let c_total = caps.c_out + load + caps.c_m;
            cells.push(CellRt {
                kind: cell.kind,
                inputs,
                n_in: want,
                output: net_index[&cell.output],
                c_m: caps.c_m,
                inv_c: 1.0 / c_total,
            });
        }

        Ok(SimRuntime {
            pi_ids: circuit.inputs.iter().map(|n| net_index[n]).collect(),
            net_names: names,
            net_index,
            cells,
            current_floor: ACTIVITY_CURRENT_FLOOR_FRACTION * tech.g_scale,
            v_dd: tech.v_dd,
        })
    }

    pub fn net_id(&self, name: &str) -> Option<usize> {
        self.net_index.get(name).copied()
    }

    pub fn net_names(&self) -> &[String] {
        &self.net_names
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }
}

/// Integrator state between intervals: voltages and previous-interval deltas
/// per net, activity and last evaluated current per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub voltages: Vec<f64>,
    /// Voltage change of each net over the previous interval.
    pub deltas: Vec<f64>,
    /// Whether each cell is evaluated in the current interval.
    pub active: Vec<bool>,
    /// Output current at each cell's most recent evaluation, amperes.
    pub last_current: Vec<f64>,
    /// Completed intervals.
    pub interval: usize,
}

impl SimState {
    /// Initial state: every net at the rail its settled logic value implies
    /// under the stimulus levels at t = 0 (below half-supply reads as logic
    /// 0). All cells start active with no recorded deltas.
    pub fn dc_init(rt: &SimRuntime, circuit: &MappedCircuit, stimulus: &Stimulus) -> Result<Self> {
        let n_nets = rt.net_names.len();
        let mut logic: Vec<Option<bool>> = vec![None; n_nets];
        for (name, &id) in circuit.inputs.iter().zip(&rt.pi_ids) {
            let pwl = stimulus
                .drives
                .get(name)
                .ok_or_else(|| Error::Validation(format!("primary input {name:?} has no drive")))?;
            logic[id] = Some(pwl.value_at(0.0) > 0.5 * rt.v_dd);
        }
        // Fixpoint sweep so cell order does not matter.
        for _ in 0..=rt.cells.len() {
            let mut changed = false;
            for cell in &rt.cells {
                if logic[cell.output].is_some() {
                    continue;
                }
                let mut fanin = [false; 2];
                let mut ready = true;
                for (slot, &id) in fanin.iter_mut().zip(&cell.inputs[..cell.n_in]) {
                    match logic[id] {
                        Some(v) => *slot = v,
                        None => {
                            ready = false;
                            break;
                        }
                    }
                }
                if ready {
                    logic[cell.output] = Some(cell.kind.logic_eval(&fanin[..cell.n_in]));
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let mut voltages = vec![0.0; n_nets];
        for (id, value) in logic.iter().enumerate() {
            match value {
                Some(true) => voltages[id] = rt.v_dd,
                Some(false) => voltages[id] = 0.0,
                None => {
                    return Err(Error::Validation(format!(
                        "net {:?} is never driven; the cell list is not a complete circuit",
                        rt.net_names[id]
                    )))
                }
            }
        }
        Ok(SimState {
            voltages,
            deltas: vec![0.0; n_nets],
            active: vec![true; rt.cells.len()],
            last_current: vec![f64::INFINITY; rt.cells.len()],
            interval: 0,
        })
    }

    /// Ids of the cells active in the current interval.
    pub fn active_ids(&self) -> Vec<usize> {
        self.active
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| a.then_some(i))
            .collect()
    }
}

fn step_cell(
    rt: &SimRuntime,
    cell: &CellRt,
    voltages: &[f64],
    deltas: &[f64],
    tech: &TechnologyParams,
    models: &ModelSet,
    dt: f64,
    interval: usize,
) -> Result<(f64, f64)> {
    let mut point = [0.0f64; 3];
    let mut miller = 0.0;
    for (slot, &id) in point.iter_mut().zip(&cell.inputs[..cell.n_in]) {
        *slot = voltages[id];
        miller += cell.c_m * deltas[id];
    }
    let v_out = voltages[cell.output];
    point[cell.n_in] = v_out;
    let i_out = models.current(cell.kind, tech, &point[..cell.n_in + 1])?;
    let v_new = v_out + (dt * i_out + miller) * cell.inv_c;
    if !v_new.is_finite() {
        return Err(Error::Numerical(format!(
            "update of net {:?} at interval {interval} produced {v_new} \
             (i_out {i_out:e} A)",
            rt.net_names[cell.output]
        )));
    }
    Ok((tech.clamp_admissible(v_new), i_out))
}

/// One explicit update of `cell_id`'s output node: interval-start voltages
/// plus the input deltas held in `state` produce the interval-end output
/// voltage, clamped to the admissible box. During a run, internal nets carry
/// the previous interval's delta (the driver's move reaches its loads one
/// interval later), while primary-input nets carry the drive's movement
/// across the interval being stepped, which is known in closed form.
pub fn step_gate(
    rt: &SimRuntime,
    state: &SimState,
    cell_id: usize,
    tech: &TechnologyParams,
    models: &ModelSet,
    dt: f64,
) -> Result<f64> {
    let cell = rt
        .cells
        .get(cell_id)
        .ok_or_else(|| Error::Contract(format!("no cell with id {cell_id}")))?;
    step_cell(rt, cell, &state.voltages, &state.deltas, tech, models, dt, state.interval)
        .map(|(v, _)| v)
}

/// Activity for the next interval: a cell stays active if any of its nodes
/// (inputs or output — primary-input drives included) moved by more than
/// `theta` this interval, or if its last evaluated current is still above
/// the settling floor.
pub fn update_active_set(rt: &SimRuntime, state: &SimState, theta: f64) -> Vec<bool> {
    rt.cells
        .iter()
        .enumerate()
        .map(|(id, cell)| {
            let mut woke = state.deltas[cell.output].abs() > theta;
            for &input in &cell.inputs[..cell.n_in] {
                woke |= state.deltas[input].abs() > theta;
            }
            woke || state.last_current[id].abs() > rt.current_floor
        })
        .collect()
}

/// Per-interval activity: how many cells were evaluated, split by kind
/// (indexed by [`CellKind::index`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalActivity {
    pub index: usize,
    pub active: usize,
    pub by_kind: [usize; 3],
}

/// Evaluation schedule of a completed run: which share of the circuit was
/// evaluated in every interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleTrace {
    /// Interval length of the run, seconds.
    pub dt: f64,
    /// Activity threshold; `None` when every cell ran every interval.
    pub theta: Option<f64>,
    /// Cells in the circuit.
    pub gate_total: usize,
    pub intervals: Vec<IntervalActivity>,
    pub total_evaluations: u64,
}

impl ScheduleTrace {
    /// The schedule of a run without a scheduler: every cell of `circuit`
    /// active in each of `n_intervals` intervals.
    pub fn all_active(circuit: &MappedCircuit, n_intervals: usize, dt: f64) -> Self {
        let mut by_kind = [0usize; 3];
        for cell in &circuit.cells {
            by_kind[cell.kind.index()] += 1;
        }
        let total = circuit.cells.len();
        ScheduleTrace {
            dt,
            theta: None,
            gate_total: total,
            intervals: (0..n_intervals)
                .map(|index| IntervalActivity { index, active: total, by_kind })
                .collect(),
            total_evaluations: (total as u64) * (n_intervals as u64),
        }
    }

    /// CSV rows of `(interval index, active count, cumulative evaluations)`.
    pub fn write_csv(&self, mut w: impl IoWrite) -> std::io::Result<()> {
        writeln!(w, "interval,active,evaluations")?;
        let mut seen = 0u64;
        for row in &self.intervals {
            seen += row.active as u64;
            writeln!(w, "{},{},{}", row.index, row.active, seen)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Contract(format!("trace serialization failed: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            message: format!("not a valid schedule trace: {e}"),
        })
    }
}

struct RunOutput {
    waves: WaveformSet,
    trace: ScheduleTrace,
}

#[allow(clippy::too_many_arguments)]
fn run_transient(
    rt: &SimRuntime,
    state: &mut SimState,
    stimulus: &Stimulus,
    tech: &TechnologyParams,
    models: &ModelSet,
    dt_step: f64,
    n_steps: usize,
    theta: Option<f64>,
    record_stride: usize,
    record_dt: f64,
) -> Result<RunOutput> {
    let n_nets = rt.net_names.len();
    let n_records = n_steps / record_stride;
    let mut samples: Vec<Vec<f64>> = vec![Vec::with_capacity(n_records + 1); n_nets];
    for (net, series) in samples.iter_mut().enumerate() {
        series.push(state.voltages[net]);
    }

    let pi_drives: Vec<(usize, &Pwl)> = rt
        .pi_ids
        .iter()
        .map(|&id| {
            let name = &rt.net_names[id];
            stimulus
                .drives
                .get(name)
                .map(|pwl| (id, pwl))
                .ok_or_else(|| Error::Validation(format!("primary input {name:?} has no drive")))
        })
        .collect::<Result<_>>()?;

    // Cells fed by each primary input, for same-interval wake-up below.
    let mut pi_fanout: Vec<Vec<usize>> = vec![Vec::new(); n_nets];
    let is_pi: Vec<bool> = {
        let mut mask = vec![false; n_nets];
        for &(id, _) in &pi_drives {
            mask[id] = true;
        }
        mask
    };
    for (cell_id, cell) in rt.cells.iter().enumerate() {
        for &input in &cell.inputs[..cell.n_in] {
            if is_pi[input] {
                pi_fanout[input].push(cell_id);
            }
        }
    }

    let mut v_next = state.voltages.clone();
    let mut intervals = Vec::with_capacity(n_steps);
    let mut total_evaluations = 0u64;

    for step in 0..n_steps {
        let t_next = (step + 1) as f64 * dt_step;
        v_next.copy_from_slice(&state.voltages);
        // Primary-input trajectories are known in closed form, so cells see
        // the drive's movement across the interval being stepped — not the
        // lagged previous-interval delta that internal nets must use for
        // order independence. Sampling that movement against per-interval
        // stimulus noise would otherwise leave a step-size-independent
        // error floor through the coupling-capacitor term. Deltas of every
        // net are recomputed at commit below, so the activity rule still
        // sees actual changes; cells whose drive moves right now wake for
        // this interval so the coupling charge lands where it belongs.
        for &(id, pwl) in &pi_drives {
            let v_upcoming = tech.clamp_admissible(pwl.value_at(t_next));
            let delta = v_upcoming - state.voltages[id];
            v_next[id] = v_upcoming;
            state.deltas[id] = delta;
            if let Some(th) = theta {
                if delta.abs() > th {
                    for &cell_id in &pi_fanout[id] {
                        state.active[cell_id] = true;
                    }
                }
            }
        }

        let mut active = 0usize;
        let mut by_kind = [0usize; 3];
        for (id, cell) in rt.cells.iter().enumerate() {
            if theta.is_some() && !state.active[id] {
                continue;
            }
            let (v_new, i_out) = step_cell(
                rt,
                cell,
                &state.voltages,
                &state.deltas,
                tech,
                models,
                dt_step,
                step,
            )?;
            v_next[cell.output] = v_new;
            state.last_current[id] = i_out;
            active += 1;
            by_kind[cell.kind.index()] += 1;
        }

        for net in 0..n_nets {
            state.deltas[net] = v_next[net] - state.voltages[net];
        }
        std::mem::swap(&mut state.voltages, &mut v_next);
        state.interval = step + 1;
        if let Some(th) = theta {
            state.active = update_active_set(rt, state, th);
        }

        total_evaluations += active as u64;
        intervals.push(IntervalActivity { index: step, active, by_kind });

        if (step + 1) % record_stride == 0 {
            for (net, series) in samples.iter_mut().enumerate() {
                series.push(state.voltages[net]);
            }
        }
    }

    let times: Vec<f64> = (0..=n_records).map(|j| j as f64 * record_dt).collect();
    let nets: BTreeMap<String, Vec<f64>> =
        rt.net_names.iter().cloned().zip(samples).collect();
    Ok(RunOutput {
        waves: WaveformSet { times, nets },
        trace: ScheduleTrace {
            dt: record_dt,
            theta,
            gate_total: rt.cells.len(),
            intervals,
            total_evaluations,
        },
    })
}

fn check_run_inputs(
    circuit: &MappedCircuit,
    stimulus: &Stimulus,
    cfg: &SimConfig,
    tech: &TechnologyParams,
) -> Result<()> {
    tech.validate()?;
    cfg.validate()?;
    stimulus.validate()?;
    for name in &circuit.inputs {
        if !stimulus.drives.contains_key(name) {
            return Err(Error::Validation(format!("primary input {name:?} has no drive")));
        }
    }
    for name in stimulus.drives.keys() {
        if !circuit.inputs.contains(name) {
            return Err(Error::Validation(format!(
                "stimulus drives {name:?}, which is not a primary input"
            )));
        }
    }
    if stimulus.horizon < cfg.horizon {
        return Err(Error::Validation(format!(
            "stimulus covers {} s but the run needs {} s",
            stimulus.horizon, cfg.horizon
        )));
    }
    Ok(())
}

/// Transient run with the activity scheduler: per interval, only active
/// cells are evaluated (sleeping cells keep their output voltage), and
/// activity for the next interval follows [`update_active_set`]. Every net
/// is sampled at every interval boundary. The initial state comes from
/// [`SimState::dc_init`]; every cell is evaluated in interval 0.
pub fn simulate(
    circuit: &MappedCircuit,
    stimulus: &Stimulus,
    cfg: &SimConfig,
    tech: &TechnologyParams,
    models: &ModelSet,
) -> Result<(WaveformSet, ScheduleTrace)> {
    check_run_inputs(circuit, stimulus, cfg, tech)?;
    let n = cfg.interval_count()?;
    let rt = SimRuntime::new(circuit, tech)?;
    let mut state = SimState::dc_init(&rt, circuit, stimulus)?;
    let out = run_transient(
        &rt,
        &mut state,
        stimulus,
        tech,
        models,
        cfg.dt,
        n,
        Some(cfg.theta),
        1,
        cfg.dt,
    )?;
    Ok((out.waves, out.trace))
}

/// Ground-truth run: analytic backend, no scheduler, every interval
/// subdivided into `cfg.refine` sub-steps. Sampling stays on the interval
/// grid, so the result is directly comparable with [`simulate`] output.
pub fn reference_simulate(
    circuit: &MappedCircuit,
    stimulus: &Stimulus,
    cfg: &SimConfig,
    tech: &TechnologyParams,
) -> Result<WaveformSet> {
    check_run_inputs(circuit, stimulus, cfg, tech)?;
    let n = cfg.interval_count()?;
    let fine = (n as f64) * (cfg.refine as f64);
    if fine > MAX_STEPS {
        return Err(Error::Config(format!(
            "{n} intervals at {} sub-steps each need {fine:e} steps; the limit is {MAX_STEPS:e}",
            cfg.refine
        )));
    }
    let rt = SimRuntime::new(circuit, tech)?;
    let mut state = SimState::dc_init(&rt, circuit, stimulus)?;
    let models = ModelSet::analytic();
    let out = run_transient(
        &rt,
        &mut state,
        stimulus,
        tech,
        &models,
        cfg.dt / cfg.refine as f64,
        n * cfg.refine,
        None,
        cfg.refine,
        cfg.dt,
    )?;
    Ok(out.waves)
}

/// Shape of the random stimuli used to exercise a cell: saturated rail-to-rail
/// ramps with per-interval uniform noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    /// Input nets to drive, in order.
    pub inputs: Vec<String>,
    pub dt: f64,
    pub horizon: f64,
    pub v_dd: f64,
    /// Peak additive noise, volts.
    pub noise_amplitude: f64,
    /// Slew bounds in units of `dt`.
    pub slew_min_intervals: f64,
    pub slew_max_intervals: f64,
    /// Clamp bounds, volts.
    pub lo: f64,
    pub hi: f64,
}

impl NoiseProfile {
    /// Default shape for `tech`: noise at 5% of the supply, slews between 1
    /// and 20 intervals, clamped to the admissible box.
    pub fn for_tech(
        tech: &TechnologyParams,
        inputs: Vec<String>,
        dt: f64,
        horizon: f64,
    ) -> Self {
        NoiseProfile {
            inputs,
            dt,
            horizon,
            v_dd: tech.v_dd,
            noise_amplitude: 0.05 * tech.v_dd,
            slew_min_intervals: 1.0,
            slew_max_intervals: 20.0,
            lo: tech.admissible_lo(),
            hi: tech.admissible_hi(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::Config("noise profile drives no inputs".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon.is_finite() && self.horizon >= self.dt) {
            return Err(Error::Config(format!(
                "horizon must cover at least one interval, got {}",
                self.horizon
            )));
        }
        if !(self.v_dd.is_finite() && self.v_dd > 0.0) {
            return Err(Error::Config(format!("v_dd must be positive, got {}", self.v_dd)));
        }
        if !(self.noise_amplitude.is_finite() && self.noise_amplitude >= 0.0) {
            return Err(Error::Config(format!(
                "noise amplitude must be non-negative, got {}",
                self.noise_amplitude
            )));
        }
        if !(self.slew_min_intervals.is_finite()
            && self.slew_max_intervals.is_finite()
            && self.slew_min_intervals > 0.0
            && self.slew_min_intervals <= self.slew_max_intervals)
        {
            return Err(Error::Config(format!(
                "slew bounds must satisfy 0 < min <= max, got [{}, {}]",
                self.slew_min_intervals, self.slew_max_intervals
            )));
        }
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::Config(format!(
                "clamp bounds must be ordered, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// `n` random stimuli: per input, a rail-to-rail saturated ramp (rising or
/// falling, slew drawn uniformly from the profile's bounds) with additive
/// zero-mean uniform noise at every interval boundary, clamped to the
/// profile's box. Deterministic given `seed`.
pub fn generate_noisy_inputs(n: usize, seed: u64, profile: &NoiseProfile) -> Result<Vec<Stimulus>> {
    profile.validate()?;
    if n == 0 {
        return Err(Error::Contract("at least one stimulus must be requested".into()));
    }
    let steps = (profile.horizon / profile.dt).ceil();
    if !steps.is_finite() || steps > MAX_STEPS {
        return Err(Error::Config(format!(
            "horizon over dt needs {steps:e} intervals; the limit is {MAX_STEPS:e}"
        )));
    }
    let n_points = steps as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut suite = Vec::with_capacity(n);
    for _ in 0..n {
        let mut drives = BTreeMap::new();
        for name in &profile.inputs {
            let rising = rng.random_range(0..2u32) == 0;
            let slew = profile.dt
                * rng.random_range(profile.slew_min_intervals..=profile.slew_max_intervals);
            let mut times = Vec::with_capacity(n_points);
            let mut values = Vec::with_capacity(n_points);
            for i in 0..n_points {
                let t = i as f64 * profile.dt;
                let ramp = (t / slew).min(1.0) * profile.v_dd;
                let base = if rising { ramp } else { profile.v_dd - ramp };
                let noise = if profile.noise_amplitude > 0.0 {
                    rng.random_range(-profile.noise_amplitude..=profile.noise_amplitude)
                } else {
                    0.0
                };
                times.push(t);
                values.push((base + noise).clamp(profile.lo, profile.hi));
            }
            drives.insert(name.clone(), Pwl { times, values });
        }
        let stimulus = Stimulus { horizon: profile.horizon, drives };
        stimulus.validate()?;
        suite.push(stimulus);
    }
    Ok(suite)
}

/// CSV export: a `time` column then one column per net, one row per interval
/// boundary. Values print in shortest round-trip form, so reading the file
/// back reproduces the numbers bit-for-bit.
pub fn write_waveforms_csv(set: &WaveformSet, mut w: impl IoWrite) -> std::io::Result<()> {
    write!(w, "time")?;
    for name in set.nets.keys() {
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    for (i, t) in set.times.iter().enumerate() {
        write!(w, "{t}")?;
        for series in set.nets.values() {
            write!(w, ",{}", series[i])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn save_waveforms_csv(set: &WaveformSet, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_waveforms_csv(set, &mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_waveforms_csv(path: &Path) -> Result<WaveformSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, message: "empty waveform file".into() })?;
    let mut columns = header.split(',');
    if columns.next() != Some("time") {
        return Err(Error::Parse {
            line: 1,
            message: "the first column must be `time`".into(),
        });
    }
    let names: Vec<String> = columns.map(str::to_string).collect();
    if names.is_empty() {
        return Err(Error::Parse { line: 1, message: "no net columns".into() });
    }
    let mut times = Vec::new();
    let mut series: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let mut fields = line.split(',');
        let parse = |field: Option<&str>, lineno: usize| -> Result<f64> {
            field
                .ok_or_else(|| Error::Parse { line: lineno, message: "missing field".into() })?
                .parse::<f64>()
                .map_err(|e| Error::Parse { line: lineno, message: format!("bad number: {e}") })
        };
        times.push(parse(fields.next(), lineno)?);
        for column in series.iter_mut() {
            column.push(parse(fields.next(), lineno)?);
        }
        if fields.next().is_some() {
            return Err(Error::Parse {
                line: lineno,
                message: "more fields than header columns".into(),
            });
        }
    }
    Ok(WaveformSet {
        times,
        nets: names.into_iter().zip(series).collect(),
    })
}
