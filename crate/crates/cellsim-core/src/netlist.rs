//! `.bench` netlist parsing, validation, Boolean evaluation, and technology
//! mapping onto the INV / NAND2 / NOR2 cell library.
//!
//! The `.bench` dialect accepted here is the classic combinational subset:
//!
//! ```text
//! # comment
//! INPUT(a)
//! OUTPUT(y)
//! y = NAND(a, b)
//! ```
//!
//! Gate tokens are AND, NAND, OR, NOR, NOT, BUFF, and XOR. Sequential
//! elements (DFF) are rejected with a dedicated message. Mapping rules:
//! NOT becomes INV; AND2 becomes NAND2 + INV; OR2 becomes NOR2 + INV;
//! NAND2 / NOR2 map to themselves; XOR2 expands to four NAND2; gates wider
//! than two inputs decompose into balanced binary trees first. BUFF is
//! treated as a net alias: the buffered net is wired straight through, so a
//! buffer contributes no cells. Every mapping is checked for logical
//! equivalence against the raw circuit by seeded random-vector simulation.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::celllib::{CellKind, TechnologyParams};
use crate::error::{Error, Result};

/// Boolean operators accepted in `.bench` files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BoolOp {
    And,
    Nand,
    Or,
    Nor,
    Not,
    Buff,
    Xor,
}

impl BoolOp {
    fn from_token(token: &str) -> Option<BoolOp> {
        match token.to_ascii_uppercase().as_str() {
            "AND" => Some(BoolOp::And),
            "NAND" => Some(BoolOp::Nand),
            "OR" => Some(BoolOp::Or),
            "NOR" => Some(BoolOp::Nor),
            "NOT" | "INV" => Some(BoolOp::Not),
            "BUFF" | "BUF" => Some(BoolOp::Buff),
            "XOR" => Some(BoolOp::Xor),
            _ => None,
        }
    }

    pub fn token(&self) -> &'static str {
        match self {
            BoolOp::And => "AND",
            BoolOp::Nand => "NAND",
            BoolOp::Or => "OR",
            BoolOp::Nor => "NOR",
            BoolOp::Not => "NOT",
            BoolOp::Buff => "BUFF",
            BoolOp::Xor => "XOR",
        }
    }

    /// Truth function over the fanin values.
    pub fn eval(&self, inputs: &[bool]) -> bool {
        match self {
            BoolOp::And => inputs.iter().all(|&b| b),
            BoolOp::Nand => !inputs.iter().all(|&b| b),
            BoolOp::Or => inputs.iter().any(|&b| b),
            BoolOp::Nor => !inputs.iter().any(|&b| b),
            BoolOp::Not => !inputs[0],
            BoolOp::Buff => inputs[0],
            BoolOp::Xor => inputs.iter().fold(false, |acc, &b| acc ^ b),
        }
    }

    /// (min, max) permitted fanin count.
    fn arity_bounds(&self) -> (usize, usize) {
        match self {
            BoolOp::Not | BoolOp::Buff => (1, 1),
            _ => (2, usize::MAX),
        }
    }
}

/// One gate of the unmapped circuit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawGate {
    pub output: String,
    pub op: BoolOp,
    pub inputs: Vec<String>,
}

/// A parsed, structurally valid combinational circuit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawCircuit {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub gates: Vec<RawGate>,
}

/// Parse `.bench` text into a validated circuit.
pub fn parse_bench(text: &str) -> Result<RawCircuit> {
    let mut circuit = RawCircuit { inputs: Vec::new(), outputs: Vec::new(), gates: Vec::new() };
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }

        if let Some(rest) = strip_directive(line, "INPUT") {
            circuit.inputs.push(parse_net_name(rest, line_no)?);
            continue;
        }
        if let Some(rest) = strip_directive(line, "OUTPUT") {
            circuit.outputs.push(parse_net_name(rest, line_no)?);
            continue;
        }

        let (lhs, rhs) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("expected INPUT(..), OUTPUT(..), or `net = OP(..)`, got {line:?}"),
        })?;
        let output = lhs.trim().to_string();
        if output.is_empty() || output.contains(char::is_whitespace) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("bad net name {:?} on the left of `=`", lhs.trim()),
            });
        }
        let rhs = rhs.trim();
        let open = rhs.find('(').ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("expected OP(inputs...) after `=`, got {rhs:?}"),
        })?;
        if !rhs.ends_with(')') {
            return Err(Error::Parse {
                line: line_no,
                message: "missing closing parenthesis".into(),
            });
        }
        let token = rhs[..open].trim();
        if token.eq_ignore_ascii_case("DFF") || token.eq_ignore_ascii_case("SDFF") {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "sequential element {token} is not supported; only combinational circuits can be simulated"
                ),
            });
        }
        let op = BoolOp::from_token(token).ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("unknown gate token {token:?}"),
        })?;
        let args = &rhs[open + 1..rhs.len() - 1];
        let inputs: Vec<String> = args
            .split(',')
            .map(|a| a.trim().to_string())
            .filter(|a| !a.is_empty())
            .collect();
        let (min, max) = op.arity_bounds();
        if inputs.len() < min || inputs.len() > max {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "{} takes {} input(s), got {}",
                    op.token(),
                    if min == max { min.to_string() } else { format!("at least {min}") },
                    inputs.len()
                ),
            });
        }
        circuit.gates.push(RawGate { output, op, inputs });
    }
    circuit.validate()?;
    Ok(circuit)
}

fn strip_directive<'a>(line: &'a str, keyword: &str) -> Option<&'a str> {
    let rest = line.strip_prefix(keyword)?;
    let rest = rest.trim_start();
    rest.strip_prefix('(')
}

fn parse_net_name(rest: &str, line_no: usize) -> Result<String> {
    let inner = rest.strip_suffix(')').ok_or_else(|| Error::Parse {
        line: line_no,
        message: "missing closing parenthesis".into(),
    })?;
    let name = inner.trim();
    if name.is_empty() || name.contains(char::is_whitespace) || name.contains(',') {
        return Err(Error::Parse {
            line: line_no,
            message: format!("bad net name {name:?}"),
        });
    }
    Ok(name.to_string())
}

/// Canonical `.bench` emission: INPUT lines, OUTPUT lines, then gates in
/// stored order. Parsing the emission reproduces the same circuit.
pub fn emit_bench(circuit: &RawCircuit) -> String {
    let mut out = String::new();
    for name in &circuit.inputs {
        out.push_str(&format!("INPUT({name})\n"));
    }
    for name in &circuit.outputs {
        out.push_str(&format!("OUTPUT({name})\n"));
    }
    for gate in &circuit.gates {
        out.push_str(&format!(
            "{} = {}({})\n",
            gate.output,
            gate.op.token(),
            gate.inputs.join(", ")
        ));
    }
    out
}

impl RawCircuit {
    /// Structural validation: unique drivers, defined fanins and outputs,
    /// acyclicity, and non-empty interface.
    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::Validation("circuit has no primary inputs".into()));
        }
        if self.outputs.is_empty() {
            return Err(Error::Validation("circuit has no primary outputs".into()));
        }
        let mut drivers: BTreeSet<&str> = BTreeSet::new();
        for name in &self.inputs {
            if !drivers.insert(name) {
                return Err(Error::Validation(format!("net {name:?} is declared INPUT twice")));
            }
        }
        for gate in &self.gates {
            if !drivers.insert(&gate.output) {
                return Err(Error::Validation(format!(
                    "net {:?} is driven more than once",
                    gate.output
                )));
            }
        }
        for gate in &self.gates {
            for input in &gate.inputs {
                if !drivers.contains(input.as_str()) {
                    return Err(Error::Validation(format!(
                        "net {input:?} used by gate {:?} is never driven",
                        gate.output
                    )));
                }
            }
        }
        let mut seen_outputs: BTreeSet<&str> = BTreeSet::new();
        for name in &self.outputs {
            if !drivers.contains(name.as_str()) {
                return Err(Error::Validation(format!("OUTPUT net {name:?} is never driven")));
            }
            if !seen_outputs.insert(name) {
                return Err(Error::Validation(format!(
                    "net {name:?} is declared OUTPUT twice"
                )));
            }
        }
        self.topo_order()?;
        Ok(())
    }

    /// Gate indices in dependency order; fails on combinational cycles.
    pub fn topo_order(&self) -> Result<Vec<usize>> {
        let mut driver_of: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, gate) in self.gates.iter().enumerate() {
            driver_of.insert(&gate.output, i);
        }
        let primary: BTreeSet<&str> = self.inputs.iter().map(String::as_str).collect();

        // Kahn's algorithm over gate nodes, visiting ready gates in index
        // order so the result is deterministic.
        let mut indegree = vec![0usize; self.gates.len()];
        let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); self.gates.len()];
        for (i, gate) in self.gates.iter().enumerate() {
            for input in &gate.inputs {
                if primary.contains(input.as_str()) {
                    continue;
                }
                if let Some(&d) = driver_of.get(input.as_str()) {
                    indegree[i] += 1;
                    dependents[d].push(i);
                }
            }
        }
        let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<usize>> = indegree
            .iter()
            .enumerate()
            .filter(|(_, &d)| d == 0)
            .map(|(i, _)| std::cmp::Reverse(i))
            .collect();
        let mut order = Vec::with_capacity(self.gates.len());
        while let Some(std::cmp::Reverse(i)) = ready.pop() {
            order.push(i);
            for &j in &dependents[i] {
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    ready.push(std::cmp::Reverse(j));
                }
            }
        }
        if order.len() != self.gates.len() {
            let stuck = indegree
                .iter()
                .position(|&d| d > 0)
                .map(|i| self.gates[i].output.clone())
                .unwrap_or_default();
            return Err(Error::Validation(format!(
                "combinational cycle detected through net {stuck:?}"
            )));
        }
        Ok(order)
    }

    /// Evaluate the Boolean function: primary-input values in, primary-output
    /// values out.
    pub fn evaluate(&self, assignment: &BTreeMap<String, bool>) -> Result<BTreeMap<String, bool>> {
        let mut values: BTreeMap<&str, bool> = BTreeMap::new();
        for name in &self.inputs {
            let v = assignment.get(name).ok_or_else(|| {
                Error::Contract(format!("no value supplied for primary input {name:?}"))
            })?;
            values.insert(name, *v);
        }
        for &i in &self.topo_order()? {
            let gate = &self.gates[i];
            let fanin: Vec<bool> = gate.inputs.iter().map(|n| values[n.as_str()]).collect();
            values.insert(&gate.output, gate.op.eval(&fanin));
        }
        Ok(self
            .outputs
            .iter()
            .map(|name| (name.clone(), values[name.as_str()]))
            .collect())
    }
}

/// One library cell instance of the mapped circuit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellInstance {
    pub kind: CellKind,
    pub inputs: Vec<String>,
    pub output: String,
}

/// An output port: the declared name and the net that actually drives it
/// (they differ when buffers were collapsed into aliases).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputPort {
    pub name: String,
    pub net: String,
}

/// The circuit after technology mapping: only INV / NAND2 / NOR2 cells,
/// stored in topological order, with the capacitive load seen by every net.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappedCircuit {
    pub inputs: Vec<String>,
    pub outputs: Vec<OutputPort>,
    /// Cells in dependency order: a cell's fanin is produced by primary
    /// inputs or by cells appearing earlier in this list.
    pub cells: Vec<CellInstance>,
    /// External load per net in farads: wire capacitance per fanout pin plus
    /// the input capacitance of every consuming cell. Nets that feed only
    /// output ports carry zero external load.
    pub load_caps: BTreeMap<String, f64>,
    /// Buffered nets that were collapsed: original name to driving net.
    pub aliases: BTreeMap<String, String>,
}

impl MappedCircuit {
    /// A circuit holding exactly one unloaded cell of `kind`: inputs named
    /// `a` (and `b` for two-input kinds) driving output net `y`. Used to
    /// characterize a cell in isolation.
    pub fn single_cell(kind: CellKind) -> Self {
        let inputs: Vec<String> =
            ["a", "b"][..kind.input_count()].iter().map(|s| s.to_string()).collect();
        let mut load_caps: BTreeMap<String, f64> =
            inputs.iter().map(|n| (n.clone(), 0.0)).collect();
        load_caps.insert("y".into(), 0.0);
        MappedCircuit {
            cells: vec![CellInstance {
                kind,
                inputs: inputs.clone(),
                output: "y".into(),
            }],
            inputs,
            outputs: vec![OutputPort { name: "y".into(), net: "y".into() }],
            load_caps,
            aliases: BTreeMap::new(),
        }
    }

    /// Per-kind cell histogram; sums to `cells.len()`.
    pub fn gate_counts(&self) -> BTreeMap<CellKind, usize> {
        let mut counts: BTreeMap<CellKind, usize> =
            CellKind::ALL.iter().map(|&k| (k, 0)).collect();
        for cell in &self.cells {
            *counts.get_mut(&cell.kind).unwrap() += 1;
        }
        counts
    }

    /// Evaluate the mapped circuit as Boolean logic.
    pub fn evaluate(&self, assignment: &BTreeMap<String, bool>) -> Result<BTreeMap<String, bool>> {
        let mut values: BTreeMap<&str, bool> = BTreeMap::new();
        for name in &self.inputs {
            let v = assignment.get(name).ok_or_else(|| {
                Error::Contract(format!("no value supplied for primary input {name:?}"))
            })?;
            values.insert(name, *v);
        }
        for cell in &self.cells {
            let fanin: Vec<bool> = cell.inputs.iter().map(|n| values[n.as_str()]).collect();
            values.insert(&cell.output, cell.kind.logic_eval(&fanin));
        }
        Ok(self
            .outputs
            .iter()
            .map(|port| (port.name.clone(), values[port.net.as_str()]))
            .collect())
    }
}

/// Map a raw circuit onto the cell library. `wire_cap_per_fanout` is the
/// capacitance added to a net for each cell pin it drives, farads.
pub fn tech_map(
    raw: &RawCircuit,
    tech: &TechnologyParams,
    wire_cap_per_fanout: f64,
) -> Result<MappedCircuit> {
    raw.validate()?;
    tech.validate()?;
    if !(wire_cap_per_fanout.is_finite() && wire_cap_per_fanout >= 0.0) {
        return Err(Error::Config(format!(
            "wire capacitance must be non-negative, got {wire_cap_per_fanout}"
        )));
    }

    // Collapse buffers into net aliases, resolving chains transitively.
    let mut alias: BTreeMap<String, String> = BTreeMap::new();
    for gate in &raw.gates {
        if gate.op == BoolOp::Buff {
            alias.insert(gate.output.clone(), gate.inputs[0].clone());
        }
    }
    let resolve = |name: &str, alias: &BTreeMap<String, String>| -> String {
        let mut current = name;
        while let Some(next) = alias.get(current) {
            current = next;
        }
        current.to_string()
    };
    let aliases: BTreeMap<String, String> = alias
        .keys()
        .map(|name| (name.clone(), resolve(name, &alias)))
        .collect();

    let mut used_names: BTreeSet<String> = raw.inputs.iter().cloned().collect();
    used_names.extend(raw.gates.iter().map(|g| g.output.clone()));

    let mut mapper = Mapper { cells: Vec::new(), used_names, fresh_counter: 0 };
    for gate in &raw.gates {
        if gate.op == BoolOp::Buff {
            continue;
        }
        let fanin: Vec<String> =
            gate.inputs.iter().map(|n| resolve(n, &alias)).collect();
        mapper.map_gate(gate.op, &fanin, &gate.output)?;
    }

    let outputs: Vec<OutputPort> = raw
        .outputs
        .iter()
        .map(|name| OutputPort { name: name.clone(), net: resolve(name, &alias) })
        .collect();

    let cells = topo_sort_cells(&raw.inputs, mapper.cells)?;

    // External load per net: wire capacitance plus consuming-pin input
    // capacitance, accumulated over every cell pin attached to the net.
    let mut load_caps: BTreeMap<String, f64> = BTreeMap::new();
    for name in &raw.inputs {
        load_caps.insert(name.clone(), 0.0);
    }
    for cell in &cells {
        load_caps.entry(cell.output.clone()).or_insert(0.0);
    }
    for cell in &cells {
        let pin_cap = tech.caps(cell.kind).c_in;
        for input in &cell.inputs {
            *load_caps.get_mut(input).unwrap() += wire_cap_per_fanout + pin_cap;
        }
    }

    let mapped = MappedCircuit { inputs: raw.inputs.clone(), outputs, cells, load_caps, aliases };
    Ok(mapped)
}

struct Mapper {
    cells: Vec<CellInstance>,
    used_names: BTreeSet<String>,
    fresh_counter: u64,
}

impl Mapper {
    /// Allocate an intermediate net name that collides with nothing.
    fn fresh_net(&mut self, base: &str) -> String {
        loop {
            let candidate = format!("{base}${}", self.fresh_counter);
            self.fresh_counter += 1;
            if self.used_names.insert(candidate.clone()) {
                return candidate;
            }
        }
    }

    fn push(&mut self, kind: CellKind, inputs: Vec<String>, output: String) {
        self.cells.push(CellInstance { kind, inputs, output });
    }

    fn map_gate(&mut self, op: BoolOp, fanin: &[String], output: &str) -> Result<()> {
        match op {
            BoolOp::Not => {
                self.push(CellKind::Inv, vec![fanin[0].clone()], output.to_string());
            }
            BoolOp::Nand => {
                let (left, right) = self.split_tree(fanin, output, TreeKind::And)?;
                self.push(CellKind::Nand2, vec![left, right], output.to_string());
            }
            BoolOp::Nor => {
                let (left, right) = self.split_tree(fanin, output, TreeKind::Or)?;
                self.push(CellKind::Nor2, vec![left, right], output.to_string());
            }
            BoolOp::And => {
                let (left, right) = self.split_tree(fanin, output, TreeKind::And)?;
                let inner = self.fresh_net(output);
                self.push(CellKind::Nand2, vec![left, right], inner.clone());
                self.push(CellKind::Inv, vec![inner], output.to_string());
            }
            BoolOp::Or => {
                let (left, right) = self.split_tree(fanin, output, TreeKind::Or)?;
                let inner = self.fresh_net(output);
                self.push(CellKind::Nor2, vec![left, right], inner.clone());
                self.push(CellKind::Inv, vec![inner], output.to_string());
            }
            BoolOp::Xor => {
                let net = self.xor_tree(fanin, output)?;
                debug_assert_eq!(net, output);
            }
            BoolOp::Buff => {
                return Err(Error::Validation(
                    "buffers are aliased before mapping; none should remain".into(),
                ));
            }
        }
        Ok(())
    }

    /// Reduce a fanin list to two nets, each computing the AND (or OR) of
    /// its half via a balanced tree of 2-input stages.
    fn split_tree(
        &mut self,
        fanin: &[String],
        base: &str,
        tree: TreeKind,
    ) -> Result<(String, String)> {
        let mid = fanin.len().div_ceil(2);
        let left = self.reduce(&fanin[..mid], base, tree)?;
        let right = self.reduce(&fanin[mid..], base, tree)?;
        Ok((left, right))
    }

    /// Balanced reduction of `nets` under AND or OR, returning the net that
    /// carries the result.
    fn reduce(&mut self, nets: &[String], base: &str, tree: TreeKind) -> Result<String> {
        match nets.len() {
            0 => Err(Error::Validation("empty fanin while mapping".into())),
            1 => Ok(nets[0].clone()),
            _ => {
                let mid = nets.len().div_ceil(2);
                let left = self.reduce(&nets[..mid], base, tree)?;
                let right = self.reduce(&nets[mid..], base, tree)?;
                let inner = self.fresh_net(base);
                let out = self.fresh_net(base);
                match tree {
                    TreeKind::And => {
                        self.push(CellKind::Nand2, vec![left, right], inner.clone());
                        self.push(CellKind::Inv, vec![inner], out.clone());
                    }
                    TreeKind::Or => {
                        self.push(CellKind::Nor2, vec![left, right], inner.clone());
                        self.push(CellKind::Inv, vec![inner], out.clone());
                    }
                }
                Ok(out)
            }
        }
    }

    /// Balanced parity tree; each 2-input stage is the four-NAND2 form.
    /// `sink` names the final stage's output net.
    fn xor_tree(&mut self, nets: &[String], sink: &str) -> Result<String> {
        match nets.len() {
            0 => Err(Error::Validation("empty fanin while mapping".into())),
            1 => Ok(nets[0].clone()),
            _ => {
                let mid = nets.len().div_ceil(2);
                let left = self.xor_subtree(&nets[..mid], sink)?;
                let right = self.xor_subtree(&nets[mid..], sink)?;
                self.emit_xor2(&left, &right, sink);
                Ok(sink.to_string())
            }
        }
    }

    fn xor_subtree(&mut self, nets: &[String], base: &str) -> Result<String> {
        if nets.len() == 1 {
            return Ok(nets[0].clone());
        }
        let mid = nets.len().div_ceil(2);
        let left = self.xor_subtree(&nets[..mid], base)?;
        let right = self.xor_subtree(&nets[mid..], base)?;
        let out = self.fresh_net(base);
        self.emit_xor2(&left, &right, &out);
        Ok(out)
    }

    /// `out = a XOR b` as four NAND2 cells.
    fn emit_xor2(&mut self, a: &str, b: &str, out: &str) {
        let n1 = self.fresh_net(out);
        let n2 = self.fresh_net(out);
        let n3 = self.fresh_net(out);
        self.push(CellKind::Nand2, vec![a.to_string(), b.to_string()], n1.clone());
        self.push(CellKind::Nand2, vec![a.to_string(), n1.clone()], n2.clone());
        self.push(CellKind::Nand2, vec![b.to_string(), n1], n3.clone());
        self.push(CellKind::Nand2, vec![n2, n3], out.to_string());
    }
}

#[derive(Clone, Copy, PartialEq)]
enum TreeKind {
    And,
    Or,
}

/// Order cells so every fanin is a primary input or an earlier cell's
/// output; deterministic (stable by emission index).
fn topo_sort_cells(inputs: &[String], cells: Vec<CellInstance>) -> Result<Vec<CellInstance>> {
    let mut driver_of: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, cell) in cells.iter().enumerate() {
        driver_of.insert(&cell.output, i);
    }
    let primary: BTreeSet<&str> = inputs.iter().map(String::as_str).collect();
    let mut indegree = vec![0usize; cells.len()];
    let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); cells.len()];
    for (i, cell) in cells.iter().enumerate() {
        for input in &cell.inputs {
            if primary.contains(input.as_str()) {
                continue;
            }
            let &d = driver_of.get(input.as_str()).ok_or_else(|| {
                Error::Validation(format!(
                    "mapped cell {:?} consumes undriven net {input:?}",
                    cell.output
                ))
            })?;
            indegree[i] += 1;
            dependents[d].push(i);
        }
    }
    let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<usize>> = indegree
        .iter()
        .enumerate()
        .filter(|(_, &d)| d == 0)
        .map(|(i, _)| std::cmp::Reverse(i))
        .collect();
    let mut order = Vec::with_capacity(cells.len());
    while let Some(std::cmp::Reverse(i)) = ready.pop() {
        order.push(i);
        for &j in &dependents[i] {
            indegree[j] -= 1;
            if indegree[j] == 0 {
                ready.push(std::cmp::Reverse(j));
            }
        }
    }
    if order.len() != cells.len() {
        return Err(Error::Validation("mapped circuit contains a cycle".into()));
    }
    let mut slots: Vec<Option<CellInstance>> = cells.into_iter().map(Some).collect();
    Ok(order.into_iter().map(|i| slots[i].take().unwrap()).collect())
}

/// Check that `mapped` computes the same Boolean function as `raw` on
/// `vectors` seeded random input assignments.
pub fn check_equivalence(
    raw: &RawCircuit,
    mapped: &MappedCircuit,
    vectors: usize,
    seed: u64,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..vectors {
        let assignment: BTreeMap<String, bool> = raw
            .inputs
            .iter()
            .map(|name| (name.clone(), rng.random::<bool>()))
            .collect();
        let want = raw.evaluate(&assignment)?;
        let got = mapped.evaluate(&assignment)?;
        if want != got {
            let diff: Vec<&String> = want
                .iter()
                .filter(|(k, v)| got.get(*k) != Some(v))
                .map(|(k, _)| k)
                .collect();
            return Err(Error::Validation(format!(
                "mapping changed the logic: outputs {diff:?} differ on vector {trial} (seed {seed})"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const WIRE_CAP: f64 = 0.05e-15;

    fn tech() -> TechnologyParams {
        TechnologyParams::default()
    }

    fn counts(mapped: &MappedCircuit) -> (usize, usize, usize) {
        let h = mapped.gate_counts();
        (h[&CellKind::Inv], h[&CellKind::Nand2], h[&CellKind::Nor2])
    }

    #[test]
    fn minimal_three_line_bench_parses_to_one_gate() {
        let raw = parse_bench("INPUT(a)\nOUTPUT(y)\ny = NOT(a)\n").unwrap();
        assert_eq!(raw.inputs, vec!["a"]);
        assert_eq!(raw.outputs, vec!["y"]);
        assert_eq!(raw.gates.len(), 1);
        assert_eq!(raw.gates[0].op, BoolOp::Not);
    }

    #[test]
    fn comments_blanks_and_spacing_are_tolerated() {
        let text = "# header\n\n  INPUT( a )\nINPUT(b)\nOUTPUT(y)  # trailing\n y =  NAND( a , b )\n";
        let raw = parse_bench(text).unwrap();
        assert_eq!(raw.gates.len(), 1);
        assert_eq!(raw.gates[0].inputs, vec!["a", "b"]);
    }

    #[test]
    fn unknown_tokens_report_the_line_number() {
        let err = parse_bench("INPUT(a)\nOUTPUT(y)\ny = XNOR(a, a)\n").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("XNOR"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn sequential_elements_are_rejected_clearly() {
        let err = parse_bench("INPUT(a)\nOUTPUT(q)\nq = DFF(a)\n").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("sequential"));
                assert!(message.contains("DFF"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn structural_defects_are_rejected() {
        // Dangling fanin.
        assert!(matches!(
            parse_bench("INPUT(a)\nOUTPUT(y)\ny = NOT(ghost)\n"),
            Err(Error::Validation(_))
        ));
        // Double driver.
        assert!(parse_bench("INPUT(a)\nOUTPUT(y)\ny = NOT(a)\ny = NOT(a)\n").is_err());
        // Undriven output.
        assert!(parse_bench("INPUT(a)\nOUTPUT(ghost)\nx = NOT(a)\n").is_err());
        // Combinational cycle.
        assert!(matches!(
            parse_bench("INPUT(a)\nOUTPUT(x)\nx = NAND(a, y)\ny = NAND(a, x)\n"),
            Err(Error::Validation(_))
        ));
        // Arity violations.
        assert!(parse_bench("INPUT(a)\nOUTPUT(y)\ny = NOT(a, a)\n").is_err());
        assert!(parse_bench("INPUT(a)\nOUTPUT(y)\ny = AND(a)\n").is_err());
    }

    #[test]
    fn emission_is_a_parse_fixed_point() {
        let text = "INPUT(a)\nINPUT(b)\nINPUT(c)\nOUTPUT(y)\nOUTPUT(z)\n\
                    t = NAND(a, b)\ny = XOR(t, c)\nz = OR(a, t, c)\n";
        let first = parse_bench(text).unwrap();
        let emitted = emit_bench(&first);
        let second = parse_bench(&emitted).unwrap();
        assert_eq!(first, second);
        assert_eq!(emit_bench(&second), emitted);
    }

    #[test]
    fn boolean_evaluation_matches_hand_truth_tables() {
        let raw = parse_bench(
            "INPUT(a)\nINPUT(b)\nOUTPUT(s)\nOUTPUT(c)\ns = XOR(a, b)\nc = AND(a, b)\n",
        )
        .unwrap();
        for (a, b, s, c) in
            [(false, false, false, false), (true, false, true, false), (true, true, false, true)]
        {
            let assignment = BTreeMap::from([("a".into(), a), ("b".into(), b)]);
            let out = raw.evaluate(&assignment).unwrap();
            assert_eq!(out["s"], s, "sum for {a}/{b}");
            assert_eq!(out["c"], c, "carry for {a}/{b}");
        }
    }

    #[test]
    fn not_chain_maps_to_two_inverters() {
        let raw = parse_bench("INPUT(a)\nOUTPUT(y)\nx = NOT(a)\ny = NOT(x)\n").unwrap();
        let mapped = tech_map(&raw, &tech(), WIRE_CAP).unwrap();
        assert_eq!(counts(&mapped), (2, 0, 0));
        check_equivalence(&raw, &mapped, 10, 1).unwrap();
    }

    #[test]
    fn and2_maps_to_nand2_plus_inv() {
        let raw = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = AND(a, b)\n").unwrap();
        let mapped = tech_map(&raw, &tech(), WIRE_CAP).unwrap();
        assert_eq!(counts(&mapped), (1, 1, 0));
        check_equivalence(&raw, &mapped, 16, 2).unwrap();
    }

    #[test]
    fn or2_maps_to_nor2_plus_inv() {
        let raw = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = OR(a, b)\n").unwrap();
        let mapped = tech_map(&raw, &tech(), WIRE_CAP).unwrap();
        assert_eq!(counts(&mapped), (1, 0, 1));
        check_equivalence(&raw, &mapped, 16, 3).unwrap();
    }

    #[test]
    fn xor2_maps_to_four_nand2() {
        let raw = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = XOR(a, b)\n").unwrap();
        let mapped = tech_map(&raw, &tech(), WIRE_CAP).unwrap();
        assert_eq!(counts(&mapped), (0, 4, 0));
        check_equivalence(&raw, &mapped, 16, 4).unwrap();
    }

    #[test]
    fn wide_gates_decompose_into_balanced_trees() {
        // NAND3 = NAND2(AND2(a,b), c): one AND2 stage plus the root.
        let raw = parse_bench("INPUT(a)\nINPUT(b)\nINPUT(c)\nOUTPUT(y)\ny = NAND(a, b, c)\n")
            .unwrap();
        let mapped = tech_map(&raw, &tech(), WIRE_CAP).unwrap();
        assert_eq!(counts(&mapped), (1, 2, 0));
        check_equivalence(&raw, &mapped, 50, 5).unwrap();

        // AND4 = three AND2 stages.
        let raw = parse_bench(
            "INPUT(a)\nINPUT(b)\nINPUT(c)\nINPUT(d)\nOUTPUT(y)\ny = AND(a, b, c, d)\n",
        )
        .unwrap();
        let mapped = tech_map(&raw, &tech(), WIRE_CAP).unwrap();
        assert_eq!(counts(&mapped), (3, 3, 0));
        check_equivalence(&raw, &mapped, 50, 6).unwrap();

        // NOR4 = NOR2(OR2(a,b), OR2(c,d)).
        let raw = parse_bench(
            "INPUT(a)\nINPUT(b)\nINPUT(c)\nINPUT(d)\nOUTPUT(y)\ny = NOR(a, b, c, d)\n",
        )
        .unwrap();
        let mapped = tech_map(&raw, &tech(), WIRE_CAP).unwrap();
        assert_eq!(counts(&mapped), (2, 0, 3));
        check_equivalence(&raw, &mapped, 50, 7).unwrap();

        // XOR3: parity as two 4-NAND2 stages.
        let raw = parse_bench("INPUT(a)\nINPUT(b)\nINPUT(c)\nOUTPUT(y)\ny = XOR(a, b, c)\n")
            .unwrap();
        let mapped = tech_map(&raw, &tech(), WIRE_CAP).unwrap();
        assert_eq!(counts(&mapped), (0, 8, 0));
        check_equivalence(&raw, &mapped, 50, 8).unwrap();
    }

    #[test]
    fn buffers_collapse_to_aliases() {
        let raw = parse_bench(
            "INPUT(a)\nOUTPUT(y)\nOUTPUT(z)\nb1 = BUFF(a)\nb2 = BUFF(b1)\n\
             y = NOT(b2)\nz = BUFF(b1)\n",
        )
        .unwrap();
        let mapped = tech_map(&raw, &tech(), WIRE_CAP).unwrap();
        // Only the inverter survives; all buffers alias through to `a`.
        assert_eq!(counts(&mapped), (1, 0, 0));
        assert_eq!(mapped.cells[0].inputs, vec!["a"]);
        assert_eq!(mapped.aliases["b1"], "a");
        assert_eq!(mapped.aliases["b2"], "a");
        // The buffered output port is driven by the alias root.
        let z = mapped.outputs.iter().find(|p| p.name == "z").unwrap();
        assert_eq!(z.net, "a");
        check_equivalence(&raw, &mapped, 10, 9).unwrap();
    }

    #[test]
    fn mapped_cells_are_in_dependency_order() {
        // Gates listed in reverse dependency order on purpose.
        let raw = parse_bench(
            "INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = NOT(t2)\nt2 = NAND(t1, b)\nt1 = AND(a, b)\n",
        )
        .unwrap();
        let mapped = tech_map(&raw, &tech(), WIRE_CAP).unwrap();
        let mut defined: BTreeSet<&str> =
            mapped.inputs.iter().map(String::as_str).collect();
        for cell in &mapped.cells {
            for input in &cell.inputs {
                assert!(defined.contains(input.as_str()), "{input} used before defined");
            }
            defined.insert(&cell.output);
        }
        check_equivalence(&raw, &mapped, 50, 10).unwrap();
    }

    #[test]
    fn load_caps_count_wire_and_pin_capacitance_per_fanout() {
        // Net `a` feeds both NAND2 pins and one INV pin: three pins total.
        let raw = parse_bench("INPUT(a)\nOUTPUT(y)\nOUTPUT(z)\ny = NAND(a, a)\nz = NOT(a)\n")
            .unwrap();
        let mapped = tech_map(&raw, &tech(), WIRE_CAP).unwrap();
        let c_in = tech().caps(CellKind::Inv).c_in;
        let expect = 3.0 * WIRE_CAP + 3.0 * c_in;
        assert!((mapped.load_caps["a"] - expect).abs() < 1e-24);
        // Output nets feed only ports: zero external load.
        assert_eq!(mapped.load_caps["y"], 0.0);
        assert_eq!(mapped.load_caps["z"], 0.0);
    }

    #[test]
    fn equivalence_checker_flags_a_broken_mapping() {
        let raw = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = AND(a, b)\n").unwrap();
        let mut mapped = tech_map(&raw, &tech(), WIRE_CAP).unwrap();
        // Sabotage: swap the final inverter's kind so y = NAND(a, b).
        let last = mapped.cells.len() - 1;
        mapped.cells.remove(last);
        let inner = mapped.cells[0].output.clone();
        mapped.outputs[0].net = inner;
        let err = check_equivalence(&raw, &mapped, 100, 11).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn gate_counts_sum_to_cell_total() {
        let raw = parse_bench(
            "INPUT(a)\nINPUT(b)\nINPUT(c)\nOUTPUT(y)\n\
             t1 = AND(a, b)\nt2 = OR(b, c)\nt3 = XOR(t1, t2)\ny = NOR(t3, a)\n",
        )
        .unwrap();
        let mapped = tech_map(&raw, &tech(), WIRE_CAP).unwrap();
        let total: usize = mapped.gate_counts().values().sum();
        assert_eq!(total, mapped.cells.len());
        check_equivalence(&raw, &mapped, 200, 12).unwrap();
    }

    #[test]
    fn single_cell_circuits_are_unloaded_and_well_formed() {
        for kind in CellKind::ALL {
            let c = MappedCircuit::single_cell(kind);
            assert_eq!(c.inputs.len(), kind.input_count());
            assert_eq!(c.inputs[0], "a");
            assert_eq!(c.cells.len(), 1);
            assert_eq!(c.outputs, vec![OutputPort { name: "y".into(), net: "y".into() }]);
            assert_eq!(c.load_caps["y"], 0.0);
            assert_eq!(c.gate_counts()[&kind], 1);
            let assignment: BTreeMap<String, bool> =
                c.inputs.iter().map(|n| (n.clone(), true)).collect();
            let out = c.evaluate(&assignment).unwrap();
            assert_eq!(out["y"], kind.logic_eval(&vec![true; kind.input_count()]));
        }
    }
}
