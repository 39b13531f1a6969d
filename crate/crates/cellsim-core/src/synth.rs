//! Deterministic random-circuit generation.
//!
//! The classic ISCAS85 benchmark files are not redistributable inside this
//! repository, so the bundled benchmark fixtures are *synthetic
//! reconstructions*: seeded random DAGs whose primary-input counts, gate-type
//! histograms, and gate totals match the published figures for the circuits
//! they stand in for (c880: 383 gates, c1355: 546 gates, and a c7552-scale
//! circuit). They are not the original netlists and compute different
//! functions; they exercise the same code paths at the same scale.
//!
//! Generation is feed-forward by construction (every gate draws its fanin
//! from already-driven nets), so the result is always a valid combinational
//! DAG. Every net left unconsumed becomes a primary output. The same profile
//! and seed always produce byte-identical text.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::netlist::{emit_bench, BoolOp, RawCircuit, RawGate};

/// A batch of same-shaped gates to place: `count` gates of `op` with
/// `arity` inputs each.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpSpec {
    pub op: BoolOp,
    pub arity: usize,
    pub count: usize,
}

/// Everything needed to regenerate one synthetic benchmark.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CircuitProfile {
    pub name: &'static str,
    pub num_inputs: usize,
    pub ops: Vec<OpSpec>,
    pub seed: u64,
}

impl CircuitProfile {
    pub fn gate_total(&self) -> usize {
        self.ops.iter().map(|s| s.count).sum()
    }
}

/// Generate `.bench` text for a profile. Deterministic in the profile seed.
pub fn generate_bench(profile: &CircuitProfile) -> Result<String> {
    if profile.num_inputs == 0 {
        return Err(Error::Config("a circuit needs at least one primary input".into()));
    }
    for spec in &profile.ops {
        let min = match spec.op {
            BoolOp::Not | BoolOp::Buff => 1,
            _ => 2,
        };
        let max = match spec.op {
            BoolOp::Not | BoolOp::Buff => 1,
            _ => usize::MAX,
        };
        if spec.arity < min || spec.arity > max {
            return Err(Error::Config(format!(
                "{} cannot take {} inputs",
                spec.op.token(),
                spec.arity
            )));
        }
    }
    if profile.gate_total() == 0 {
        return Err(Error::Config("profile places no gates".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);

    // Expand the op specs into one job per gate and shuffle so the kinds
    // interleave through the depth of the circuit. Fisher-Yates is written
    // out longhand to freeze the byte-exact output against library changes.
    let mut jobs: Vec<(BoolOp, usize)> = profile
        .ops
        .iter()
        .flat_map(|s| std::iter::repeat_n((s.op, s.arity), s.count))
        .collect();
    for i in (1..jobs.len()).rev() {
        let j = rng.random_range(0..=i);
        jobs.swap(i, j);
    }

    let mut nets: Vec<String> = (1..=profile.num_inputs).map(|i| format!("p{i}")).collect();
    let mut consumed = vec![false; profile.num_inputs];
    let mut gates = Vec::with_capacity(jobs.len());
    for (idx, (op, arity)) in jobs.iter().enumerate() {
        // Draw distinct fanin nets from everything driven so far.
        let mut picks: Vec<usize> = Vec::with_capacity(*arity);
        while picks.len() < *arity {
            let candidate = rng.random_range(0..nets.len());
            if !picks.contains(&candidate) {
                picks.push(candidate);
            }
        }
        let inputs: Vec<String> = picks.iter().map(|&i| nets[i].clone()).collect();
        for &i in &picks {
            consumed[i] = true;
        }
        let output = format!("g{}", idx + 1);
        gates.push(RawGate { output: output.clone(), op: *op, inputs });
        nets.push(output);
        consumed.push(false);
    }

    // Unconsumed nets become the primary outputs.
    let outputs: Vec<String> = nets
        .iter()
        .zip(&consumed)
        .filter(|(_, &used)| !used)
        .map(|(name, _)| name.clone())
        .collect();

    let circuit = RawCircuit {
        inputs: (1..=profile.num_inputs).map(|i| format!("p{i}")).collect(),
        outputs,
        gates,
    };
    circuit.validate()?;

    let mut text = format!(
        "# {}: synthetic reconstruction (seed {}), {} inputs, {} gates\n\
         # Generated by the bundled circuit generator; see fixtures documentation.\n",
        profile.name,
        profile.seed,
        profile.num_inputs,
        circuit.gates.len()
    );
    text.push_str(&emit_bench(&circuit));
    Ok(text)
}

/// The profiles behind the bundled benchmark-scale fixtures. Gate totals
/// match the published counts for the circuits they reconstruct (c880: 383,
/// c1355: 546) and the c7552 stand-in maps into the published ballpark.
pub fn benchmark_profiles() -> Vec<CircuitProfile> {
    use BoolOp::*;
    vec![
        CircuitProfile {
            name: "c880",
            num_inputs: 60,
            seed: 880,
            ops: vec![
                OpSpec { op: And, arity: 2, count: 111 },
                OpSpec { op: And, arity: 3, count: 6 },
                OpSpec { op: Nand, arity: 2, count: 87 },
                OpSpec { op: Or, arity: 2, count: 25 },
                OpSpec { op: Or, arity: 3, count: 4 },
                OpSpec { op: Nor, arity: 2, count: 61 },
                OpSpec { op: Not, arity: 1, count: 63 },
                OpSpec { op: Buff, arity: 1, count: 26 },
            ],
        },
        CircuitProfile {
            name: "c1355",
            num_inputs: 41,
            seed: 1355,
            ops: vec![
                OpSpec { op: Nand, arity: 2, count: 416 },
                OpSpec { op: And, arity: 2, count: 56 },
                OpSpec { op: Or, arity: 2, count: 2 },
                OpSpec { op: Not, arity: 1, count: 40 },
                OpSpec { op: Buff, arity: 1, count: 32 },
            ],
        },
        CircuitProfile {
            name: "c7552",
            num_inputs: 207,
            seed: 7552,
            ops: vec![
                OpSpec { op: Nand, arity: 2, count: 1156 },
                OpSpec { op: And, arity: 2, count: 700 },
                OpSpec { op: Or, arity: 2, count: 200 },
                OpSpec { op: Nor, arity: 2, count: 156 },
                OpSpec { op: Not, arity: 1, count: 838 },
                OpSpec { op: Buff, arity: 1, count: 462 },
            ],
        },
    ]
}

/// The canonical six-NAND c17 netlist (public-domain textbook circuit).
pub const C17_BENCH: &str = "\
# c17: five inputs, two outputs, six NAND2 gates
INPUT(1)
INPUT(2)
INPUT(3)
INPUT(6)
INPUT(7)
OUTPUT(22)
OUTPUT(23)
10 = NAND(1, 3)
11 = NAND(3, 6)
16 = NAND(2, 11)
19 = NAND(11, 7)
22 = NAND(10, 16)
23 = NAND(16, 19)
";

/// A one-bit full adder: sum and carry from two XOR, two AND, one OR.
pub const FULL_ADDER_BENCH: &str = "\
# one-bit full adder
INPUT(a)
INPUT(b)
INPUT(cin)
OUTPUT(sum)
OUTPUT(cout)
axb = XOR(a, b)
sum = XOR(axb, cin)
ab = AND(a, b)
cx = AND(cin, axb)
cout = OR(ab, cx)
";
