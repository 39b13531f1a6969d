//! Analytical CPU-vs-GPU timing: budgets network instances onto GPU cores,
//! prices one simulation interval on each platform, and reports the speedup
//! over a completed run's evaluation schedule.
//!
//! The CPU side models table-driven evaluation as memory-bound: every cell
//! evaluation costs a fixed number of DRAM transactions serialized over the
//! processor's memory channels, and arithmetic hides under that latency. The
//! GPU side assumes each resident network instance owns `d_in x hidden`
//! cores, so one inference costs a fixed cycle count and a kind with more
//! active cells than instances runs in ceil(active/instances) serial batches.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::celllib::CellKind;
use crate::engine::ScheduleTrace;
use crate::error::{Error, Result};
use crate::mlp::{gpu_latency_cycles, MlpModel};
use crate::netlist::MappedCircuit;

/// CPU platform parameters. Defaults describe a 24-core 2.4 GHz server part
/// whose DRAM round-trip costs about 250 cycles and that exposes four
/// independent memory channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CpuSpec {
    pub cores: usize,
    /// Core clock, hertz.
    pub base_freq: f64,
    /// DRAM round-trip latency, core clock cycles.
    pub dram_latency: f64,
    /// L1 hit latency, core clock cycles. Not on the costed path (tables of
    /// interest never fit in cache); kept for sensitivity studies.
    pub l1_latency: f64,
    /// Independent DRAM access paths; concurrent transactions per cycle.
    pub memory_channels: usize,
}

impl Default for CpuSpec {
    fn default() -> Self {
        CpuSpec {
            cores: 24,
            base_freq: 2.40e9,
            dram_latency: 250.0,
            l1_latency: 4.0,
            memory_channels: 4,
        }
    }
}

impl CpuSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cores == 0 || self.memory_channels == 0 {
            return Err(Error::Config(
                "CPU core and memory-channel counts must be positive".into(),
            ));
        }
        for (name, v) in [
            ("base_freq", self.base_freq),
            ("dram_latency", self.dram_latency),
            ("l1_latency", self.l1_latency),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "CPU {name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// GPU platform parameters. Defaults describe an 80-SM part with 64 FP32
/// cores per SM (5120 total) at 1.45 GHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpuSpec {
    /// Streaming multiprocessors.
    pub sms: usize,
    /// Single-precision cores per SM.
    pub cores_per_sm: usize,
    /// Core clock, hertz.
    pub base_freq: f64,
}

impl Default for GpuSpec {
    fn default() -> Self {
        GpuSpec { sms: 80, cores_per_sm: 64, base_freq: 1.45e9 }
    }
}

impl GpuSpec {
    pub fn total_cores(&self) -> usize {
        self.sms * self.cores_per_sm
    }

    pub fn validate(&self) -> Result<()> {
        if self.sms == 0 || self.cores_per_sm == 0 {
            return Err(Error::Config("GPU core counts must be positive".into()));
        }
        if !(self.base_freq.is_finite() && self.base_freq > 0.0) {
            return Err(Error::Config(format!(
                "GPU base_freq must be positive and finite, got {}",
                self.base_freq
            )));
        }
        Ok(())
    }
}

/// Network shape used for core budgeting, decoupled from trained weights so
/// library sizings can be priced without training anything.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub kind: CellKind,
    pub d_in: usize,
    pub hidden: usize,
}

impl ModelShape {
    pub fn of(model: &MlpModel) -> ModelShape {
        ModelShape { kind: model.kind, d_in: model.d_in, hidden: model.hidden }
    }

    /// GPU cores one resident instance occupies: one per first-layer weight.
    pub fn cores(&self) -> Result<usize> {
        if self.d_in == 0 || self.hidden == 0 {
            return Err(Error::Contract(format!(
                "model shape must be positive, got {}x{}",
                self.d_in, self.hidden
            )));
        }
        Ok(self.d_in * self.hidden)
    }

    /// Cycles one batched inference takes on its dedicated cores.
    pub fn latency_cycles(&self) -> Result<usize> {
        gpu_latency_cycles(self.d_in, self.hidden)
    }
}

/// Shapes the stock cost reports assume: a high-performance 7 nm library
/// sizing with a 10-unit hidden layer for the inverter and 20 for the
/// two-input cells. Current components of the two-input cells read both
/// inputs, the stacked-pair internal node, and the output (`d_in = 4`); the
/// inverter reads its input and output (`d_in = 2`).
pub fn stock_shapes() -> Vec<ModelShape> {
    vec![
        ModelShape { kind: CellKind::Inv, d_in: 2, hidden: 10 },
        ModelShape { kind: CellKind::Nand2, d_in: 4, hidden: 20 },
        ModelShape { kind: CellKind::Nor2, d_in: 4, hidden: 20 },
    ]
}

/// Table layout and access cost of one cell kind's lookup tables on the CPU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LutProfile {
    pub kind: CellKind,
    /// Axes of the table (voltages one evaluation depends on).
    pub dims: usize,
    /// DRAM transactions one cell evaluation costs.
    pub queries_per_eval: usize,
}

/// Lookup-table profiles the stock cost reports assume: dimensions matching
/// [`stock_shapes`] and one DRAM transaction per evaluation — a query's
/// interpolation corners sit in one contiguous block under a cell-blocked
/// table layout, so they arrive in a single burst. Raise `queries_per_eval`
/// (up to the `2^dims` separate-corner worst case) for sensitivity studies.
pub fn stock_lut_profiles() -> Vec<LutProfile> {
    vec![
        LutProfile { kind: CellKind::Inv, dims: 2, queries_per_eval: 1 },
        LutProfile { kind: CellKind::Nand2, dims: 4, queries_per_eval: 1 },
        LutProfile { kind: CellKind::Nor2, dims: 4, queries_per_eval: 1 },
    ]
}

/// How many network instances of each kind are resident on the GPU.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    /// Instances per kind; contains exactly the kinds present in the
    /// histogram it was built from.
    pub instances: BTreeMap<CellKind, usize>,
    /// Σ instances × cores-per-instance; never exceeds the GPU total.
    pub cores_used: usize,
}

impl Allocation {
    pub fn instances_of(&self, kind: CellKind) -> Option<usize> {
        self.instances.get(&kind).copied()
    }
}

fn shape_for(shapes: &[ModelShape], kind: CellKind) -> Result<&ModelShape> {
    shapes
        .iter()
        .find(|s| s.kind == kind)
        .ok_or_else(|| Error::Config(format!("no model shape supplied for {kind}")))
}

fn lut_for(luts: &[LutProfile], kind: CellKind) -> Result<&LutProfile> {
    luts.iter()
        .find(|l| l.kind == kind)
        .ok_or_else(|| Error::Config(format!("no LUT profile supplied for {kind}")))
}

/// Dedicate GPU cores to network instances in proportion to each kind's
/// gate count.
///
/// Starting from the real-valued split `n_k = total_cores × count_k / Σ_j
/// count_j × cores_j` (which equalizes `count_k / n_k`, the serial batch
/// count, across kinds), every kind gets the floor of its share, then the
/// leftover cores go one instance at a time to the kind with the highest
/// remaining gates-per-instance ratio until no kind's instance fits. Ties
/// break toward the kind earliest in [`CellKind::ALL`] order, so the result
/// is deterministic. Every kind present in the histogram gets at least one
/// instance.
pub fn allocate_models(
    hist: &BTreeMap<CellKind, usize>,
    shapes: &[ModelShape],
    gpu: &GpuSpec,
) -> Result<Allocation> {
    gpu.validate()?;
    let total_cores = gpu.total_cores();
    let present: Vec<(CellKind, usize, usize)> = {
        let mut rows = Vec::new();
        for kind in CellKind::ALL {
            let count = hist.get(&kind).copied().unwrap_or(0);
            if count == 0 {
                continue;
            }
            rows.push((kind, count, shape_for(shapes, kind)?.cores()?));
        }
        rows
    };
    if present.is_empty() {
        return Err(Error::Config("cannot allocate for an empty histogram".into()));
    }

    let weight: f64 = present.iter().map(|&(_, count, c)| (count * c) as f64).sum();
    let mut instances: Vec<usize> = present
        .iter()
        .map(|&(_, count, _)| {
            (((total_cores * count) as f64 / weight).floor() as usize).max(1)
        })
        .collect();
    let mut cores_used: usize = instances
        .iter()
        .zip(&present)
        .map(|(&n, &(_, _, c))| n * c)
        .sum();
    // Floors alone never overshoot the budget; raising a rare kind's zero
    // floor to the guaranteed single instance can. Shed instances from the
    // kind with the fewest gates per instance (ties toward the latest kind)
    // until the budget holds again; when everyone is already at one
    // instance, the library genuinely does not fit.
    while cores_used > total_cores {
        let victim = (0..present.len())
            .filter(|&i| instances[i] >= 2)
            .min_by(|&a, &b| {
                let ra = present[a].1 as f64 / instances[a] as f64;
                let rb = present[b].1 as f64 / instances[b] as f64;
                ra.total_cmp(&rb).then(b.cmp(&a))
            });
        match victim {
            Some(i) => {
                instances[i] -= 1;
                cores_used -= present[i].2;
            }
            None => {
                return Err(Error::Capacity(format!(
                    "one instance per present kind needs more than the \
                     {total_cores} available cores"
                )));
            }
        }
    }

    loop {
        let mut best: Option<(usize, f64)> = None;
        for (i, &(_, count, c)) in present.iter().enumerate() {
            if cores_used + c > total_cores {
                continue;
            }
            let ratio = count as f64 / instances[i] as f64;
            if best.map_or(true, |(_, r)| ratio > r) {
                best = Some((i, ratio));
            }
        }
        match best {
            Some((i, _)) => {
                instances[i] += 1;
                cores_used += present[i].2;
            }
            None => break,
        }
    }

    Ok(Allocation {
        instances: present
            .iter()
            .zip(&instances)
            .map(|(&(kind, _, _), &n)| (kind, n))
            .collect(),
        cores_used,
    })
}

/// Seconds the GPU needs for one simulation interval in which `active[k]`
/// cells of each kind (indexed by [`CellKind::index`]) must be evaluated.
///
/// Each kind runs `ceil(active / instances)` serial batches of its resident
/// instances, one inference latency per batch, and the kinds' batch trains
/// run back to back: the interval costs `Σ_k ceil(active_k / n_k) ×
/// latency_k` cycles. (Proportional allocation hands every kind the same
/// batch count, so the whole circuit behaves as one pool of instances
/// cycled total-work / total-instances times.)
pub fn gpu_interval_time(
    active: &[usize; 3],
    alloc: &Allocation,
    shapes: &[ModelShape],
    gpu: &GpuSpec,
) -> Result<f64> {
    gpu.validate()?;
    let mut cycles = 0.0f64;
    for kind in CellKind::ALL {
        let a = active[kind.index()];
        if a == 0 {
            continue;
        }
        let n = alloc.instances_of(kind).ok_or_else(|| {
            Error::Contract(format!(
                "{a} active {kind} cells but the allocation holds no {kind} \
                 instances"
            ))
        })?;
        let shape = shape_for(shapes, kind)?;
        let batches = a.div_ceil(n);
        cycles += (batches * shape.latency_cycles()?) as f64;
    }
    Ok(cycles / gpu.base_freq)
}

/// Seconds the CPU needs for one simulation interval in which `active[k]`
/// cells of each kind must be evaluated from lookup tables: every
/// evaluation costs `queries_per_eval` DRAM transactions, transactions
/// spread perfectly over the memory channels, and arithmetic hides under
/// the memory latency.
pub fn cpu_interval_time(
    active: &[usize; 3],
    luts: &[LutProfile],
    cpu: &CpuSpec,
) -> Result<f64> {
    cpu.validate()?;
    let mut total_queries: usize = 0;
    for kind in CellKind::ALL {
        let a = active[kind.index()];
        if a == 0 {
            continue;
        }
        total_queries += a * lut_for(luts, kind)?.queries_per_eval;
    }
    Ok(total_queries as f64 * cpu.dram_latency / (cpu.memory_channels as f64 * cpu.base_freq))
}

/// Timing verdict for one circuit and one evaluation schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub gate_total: usize,
    pub intervals: usize,
    pub allocation: Allocation,
    /// Seconds per interval with every cell active — the capacity view.
    pub cpu_peak_interval: f64,
    pub gpu_peak_interval: f64,
    /// Seconds summed over the schedule's actual per-interval activity.
    pub cpu_total: f64,
    pub gpu_total: f64,
    /// `cpu_total / gpu_total`.
    pub improvement: f64,
}

impl CostReport {
    /// Human-readable fixed-width table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<28} {:>14}", "quantity", "value");
        let _ = writeln!(out, "{:<28} {:>14}", "gates", self.gate_total);
        let _ = writeln!(out, "{:<28} {:>14}", "intervals", self.intervals);
        for (kind, n) in &self.allocation.instances {
            let _ = writeln!(out, "{:<28} {:>14}", format!("{kind} instances"), n);
        }
        let _ = writeln!(out, "{:<28} {:>14}", "GPU cores used", self.allocation.cores_used);
        for (name, v) in [
            ("CPU peak interval (s)", self.cpu_peak_interval),
            ("GPU peak interval (s)", self.gpu_peak_interval),
            ("CPU total (s)", self.cpu_total),
            ("GPU total (s)", self.gpu_total),
        ] {
            let _ = writeln!(out, "{:<28} {:>14.6e}", name, v);
        }
        let _ = writeln!(out, "{:<28} {:>14}", "improvement", format!("{:.1}x", self.improvement));
        out
    }

    pub fn save_json(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Contract(format!("cost report serialization failed: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Price `trace`'s schedule on both platforms with the SAME per-interval
/// active counts and report the speedup `cpu_total / gpu_total`.
pub fn improvement(
    circuit: &MappedCircuit,
    trace: &ScheduleTrace,
    alloc: &Allocation,
    shapes: &[ModelShape],
    luts: &[LutProfile],
    cpu: &CpuSpec,
    gpu: &GpuSpec,
) -> Result<CostReport> {
    cpu.validate()?;
    gpu.validate()?;
    if trace.gate_total != circuit.cells.len() {
        return Err(Error::Contract(format!(
            "trace covers {} gates but the circuit has {}",
            trace.gate_total,
            circuit.cells.len()
        )));
    }

    let mut all_active = [0usize; 3];
    for (kind, count) in circuit.gate_counts() {
        all_active[kind.index()] = count;
    }

    let mut cpu_total = 0.0;
    let mut gpu_total = 0.0;
    for row in &trace.intervals {
        cpu_total += cpu_interval_time(&row.by_kind, luts, cpu)?;
        gpu_total += gpu_interval_time(&row.by_kind, alloc, shapes, gpu)?;
    }
    if gpu_total == 0.0 {
        return Err(Error::Numerical(
            "improvement is undefined: the schedule needs no GPU time (no cell \
             was ever active)"
                .into(),
        ));
    }

    Ok(CostReport {
        gate_total: circuit.cells.len(),
        intervals: trace.intervals.len(),
        allocation: alloc.clone(),
        cpu_peak_interval: cpu_interval_time(&all_active, luts, cpu)?,
        gpu_peak_interval: gpu_interval_time(&all_active, alloc, shapes, gpu)?,
        cpu_total,
        gpu_total,
        improvement: cpu_total / gpu_total,
    })
}
