// SPDX-License-Identifier: Apache-2.0
//! Gate-level netlists, a BLIF subset, topological levels, buffering and level cuts.

use std::collections::{HashMap, HashSet};
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetlistError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("net {0} is driven more than once")]
    MultiplyDriven(String),
    #[error("undefined net {0}")]
    UndefinedNet(String),
    #[error("combinational cycle through {0}")]
    Cycle(String),
    #[error("gate {output}: {op} expects {expected} inputs, got {got}")]
    Arity {
        output: String,
        op: GateOp,
        expected: usize,
        got: usize,
    },
    #[error("invalid net name {0:?}")]
    BadName(String),
    #[error("circuits have different depths ({0} vs {1})")]
    LevelMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GateOp {
    And,
    Or,
    Xor,
    Not,
    Buf,
    Const0,
    Const1,
    Nand,
    Nor,
    Xnor,
}

impl GateOp {
    pub const BINARY: [GateOp; 6] = [
        GateOp::And,
        GateOp::Or,
        GateOp::Xor,
        GateOp::Nand,
        GateOp::Nor,
        GateOp::Xnor,
    ];

    pub fn arity(self) -> usize {
        match self {
            GateOp::Const0 | GateOp::Const1 => 0,
            GateOp::Not | GateOp::Buf => 1,
            _ => 2,
        }
    }

    pub fn is_binary(self) -> bool {
        self.arity() == 2
    }

    /// Evaluates the gate on 64 packed input patterns at once.
    pub fn eval_words(self, a: u64, b: u64) -> u64 {
        match self {
            GateOp::And => a & b,
            GateOp::Or => a | b,
            GateOp::Xor => a ^ b,
            GateOp::Nand => !(a & b),
            GateOp::Nor => !(a | b),
            GateOp::Xnor => !(a ^ b),
            GateOp::Not => !a,
            GateOp::Buf => a,
            GateOp::Const0 => 0,
            GateOp::Const1 => !0,
        }
    }

    pub fn eval(self, a: bool, b: bool) -> bool {
        self.eval_words(a as u64, b as u64) & 1 == 1
    }

    // Truth table over (in0, in1) indexed by in0 | in1 << 1.
    fn table2(self) -> u8 {
        let mut t = 0u8;
        for idx in 0..4u8 {
            if self.eval(idx & 1 == 1, idx & 2 == 2) {
                t |= 1 << idx;
            }
        }
        t
    }

    fn from_table2(t: u8) -> Option<GateOp> {
        GateOp::BINARY.into_iter().find(|op| op.table2() == t)
    }

    fn cover(self) -> &'static [&'static str] {
        match self {
            GateOp::And => &["11 1"],
            GateOp::Or => &["1- 1", "-1 1"],
            GateOp::Xor => &["10 1", "01 1"],
            GateOp::Xnor => &["11 1", "00 1"],
            GateOp::Nand => &["0- 1", "-0 1"],
            GateOp::Nor => &["00 1"],
            GateOp::Not => &["0 1"],
            GateOp::Buf => &["1 1"],
            GateOp::Const0 => &[],
            GateOp::Const1 => &["1"],
        }
    }
}

impl fmt::Display for GateOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GateOp::And => "AND",
            GateOp::Or => "OR",
            GateOp::Xor => "XOR",
            GateOp::Not => "NOT",
            GateOp::Buf => "BUF",
            GateOp::Const0 => "CONST0",
            GateOp::Const1 => "CONST1",
            GateOp::Nand => "NAND",
            GateOp::Nor => "NOR",
            GateOp::Xnor => "XNOR",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gate {
    pub output: String,
    pub op: GateOp,
    pub inputs: Vec<String>,
}

impl Gate {
    pub fn new(output: impl Into<String>, op: GateOp, inputs: &[&str]) -> Gate {
        Gate {
            output: output.into(),
            op,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// A validated combinational circuit. Gates are stored in topological order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Netlist {
    pub name: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub gates: Vec<Gate>,
}

pub fn valid_net_name(s: &str) -> bool {
    !s.is_empty()
        && s
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '$' | '.'))
}

impl Netlist {
    /// Builds a netlist, sorting gates topologically (stable w.r.t. the given order).
    pub fn new(
        name: impl Into<String>,
        inputs: Vec<String>,
        outputs: Vec<String>,
        gates: Vec<Gate>,
    ) -> Result<Netlist, NetlistError> {
        let mut driven: HashSet<&str> = HashSet::new();
        for x in &inputs {
            if !valid_net_name(x) {
                return Err(NetlistError::BadName(x.clone()));
            }
            if !driven.insert(x) {
                return Err(NetlistError::MultiplyDriven(x.clone()));
            }
        }
        for g in &gates {
            if !valid_net_name(&g.output) {
                return Err(NetlistError::BadName(g.output.clone()));
            }
            if g.inputs.len() != g.op.arity() {
                return Err(NetlistError::Arity {
                    output: g.output.clone(),
                    op: g.op,
                    expected: g.op.arity(),
                    got: g.inputs.len(),
                });
            }
            if !driven.insert(&g.output) {
                return Err(NetlistError::MultiplyDriven(g.output.clone()));
            }
        }
        for g in &gates {
            for i in &g.inputs {
                if !driven.contains(i.as_str()) {
                    return Err(NetlistError::UndefinedNet(i.clone()));
                }
            }
        }
        for o in &outputs {
            if !driven.contains(o.as_str()) {
                return Err(NetlistError::UndefinedNet(o.clone()));
            }
        }
        let gates = topo_sort(&inputs, gates)?;
        Ok(Netlist {
            name: name.into(),
            inputs,
            outputs,
            gates,
        })
    }

    pub fn num_nets(&self) -> usize {
        self.inputs.len() + self.gates.len()
    }

    /// Net names in index order: inputs first, then gate outputs.
    pub fn net_names(&self) -> Vec<&str> {
        self.inputs
            .iter()
            .map(String::as_str)
            .chain(self.gates.iter().map(|g| g.output.as_str()))
            .collect()
    }

    pub fn net_index(&self) -> HashMap<&str, usize> {
        self.net_names()
            .into_iter()
            .enumerate()
            .map(|(i, n)| (n, i))
            .collect()
    }

    /// Fan-in indices of every gate.
    pub fn gate_fanins(&self) -> Vec<Vec<usize>> {
        let idx = self.net_index();
        self.gates
            .iter()
            .map(|g| g.inputs.iter().map(|i| idx[i.as_str()]).collect())
            .collect()
    }

    pub fn output_indices(&self) -> Vec<usize> {
        let idx = self.net_index();
        self.outputs.iter().map(|o| idx[o.as_str()]).collect()
    }

    /// Simulates 64 input patterns in parallel and returns the value word of every net.
    pub fn simulate_words(&self, input_words: &[u64]) -> Vec<u64> {
        assert_eq!(input_words.len(), self.inputs.len());
        let fanins = self.gate_fanins();
        self.simulate_words_with(&fanins, input_words)
    }

    pub fn simulate_words_with(&self, fanins: &[Vec<usize>], input_words: &[u64]) -> Vec<u64> {
        let mut vals = Vec::with_capacity(self.num_nets());
        vals.extend_from_slice(input_words);
        for (g, fi) in self.gates.iter().zip(fanins) {
            let a = fi.first().map_or(0, |&i| vals[i]);
            let b = fi.get(1).map_or(0, |&i| vals[i]);
            vals.push(g.op.eval_words(a, b));
        }
        vals
    }

    /// Output values for one input assignment.
    pub fn eval(&self, inputs: &[bool]) -> Vec<bool> {
        let words: Vec<u64> = inputs.iter().map(|&b| b as u64).collect();
        let vals = self.simulate_words(&words);
        self.output_indices()
            .into_iter()
            .map(|i| vals[i] & 1 == 1)
            .collect()
    }

    /// Drops gates outside the transitive fan-in of the outputs.
    pub fn prune_to_outputs(&self) -> Netlist {
        let fanins = self.gate_fanins();
        let ni = self.inputs.len();
        let mut live = vec![false; self.num_nets()];
        for o in self.output_indices() {
            live[o] = true;
        }
        for gi in (0..self.gates.len()).rev() {
            if live[ni + gi] {
                for &f in &fanins[gi] {
                    live[f] = true;
                }
            }
        }
        let gates = self
            .gates
            .iter()
            .enumerate()
            .filter(|(gi, _)| live[ni + gi])
            .map(|(_, g)| g.clone())
            .collect();
        Netlist {
            name: self.name.clone(),
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
            gates,
        }
    }
}

fn topo_sort(inputs: &[String], gates: Vec<Gate>) -> Result<Vec<Gate>, NetlistError> {
    let mut known: HashSet<String> = inputs.iter().cloned().collect();
    if gates
        .iter()
        .all(|g| {
            let ok = g.inputs.iter().all(|i| known.contains(i));
            known.insert(g.output.clone());
            ok
        })
    {
        return Ok(gates);
    }
    let pos: HashMap<&str, usize> = gates
        .iter()
        .enumerate()
        .map(|(i, g)| (g.output.as_str(), i))
        .collect();
    let mut pending = vec![0usize; gates.len()];
    let mut users: Vec<Vec<usize>> = vec![Vec::new(); gates.len()];
    for (gi, g) in gates.iter().enumerate() {
        for i in &g.inputs {
            if let Some(&src) = pos.get(i.as_str()) {
                pending[gi] += 1;
                users[src].push(gi);
            }
        }
    }
    let mut ready: std::collections::BTreeSet<usize> =
        (0..gates.len()).filter(|&g| pending[g] == 0).collect();
    let mut order = Vec::with_capacity(gates.len());
    while let Some(g) = ready.pop_first() {
        order.push(g);
        for &u in &users[g] {
            pending[u] -= 1;
            if pending[u] == 0 {
                ready.insert(u);
            }
        }
    }
    if order.len() != gates.len() {
        let stuck = (0..gates.len()).find(|&g| pending[g] > 0).unwrap();
        return Err(NetlistError::Cycle(gates[stuck].output.clone()));
    }
    let mut slots: Vec<Option<Gate>> = gates.into_iter().map(Some).collect();
    Ok(order.into_iter().map(|g| slots[g].take().unwrap()).collect())
}

/// Parses the supported BLIF subset.
pub fn parse_blif(text: &str) -> Result<Netlist, NetlistError> {
    let mut lines: Vec<(usize, String)> = Vec::new();
    let mut pending = String::new();
    let mut start = 0;
    for (no, raw) in text.lines().enumerate() {
        let raw = raw.trim_end_matches('\r');
        let raw = raw.split('#').next().unwrap_or("");
        if pending.is_empty() {
            start = no + 1;
        }
        if let Some(body) = raw.strip_suffix('\\') {
            pending.push_str(body);
            pending.push(' ');
            continue;
        }
        pending.push_str(raw);
        let l = pending.trim().to_string();
        pending.clear();
        if !l.is_empty() {
            lines.push((start, l));
        }
    }

    let mut name = String::new();
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    let mut gates = Vec::new();
    let mut seen_model = false;
    let mut i = 0;
    while i < lines.len() {
        let (no, ref l) = lines[i];
        let mut toks = l.split_whitespace();
        let kw = toks.next().unwrap();
        match kw {
            ".model" => {
                if seen_model {
                    return Err(syntax(no, "hierarchical BLIF is not supported"));
                }
                seen_model = true;
                name = toks.next().unwrap_or("").to_string();
                i += 1;
            }
            ".inputs" => {
                inputs.extend(toks.map(str::to_string));
                i += 1;
            }
            ".outputs" => {
                outputs.extend(toks.map(str::to_string));
                i += 1;
            }
            ".names" => {
                let nets: Vec<String> = toks.map(str::to_string).collect();
                if nets.is_empty() {
                    return Err(syntax(no, ".names needs at least an output"));
                }
                i += 1;
                let mut rows = Vec::new();
                while i < lines.len() && !lines[i].1.starts_with('.') {
                    rows.push(lines[i].clone());
                    i += 1;
                }
                gates.push(cover_to_gate(no, nets, &rows)?);
            }
            ".end" => break,
            _ => return Err(syntax(no, &format!("unsupported directive {kw}"))),
        }
    }
    if !seen_model {
        return Err(syntax(1, "missing .model"));
    }
    Netlist::new(name, inputs, outputs, gates)
}

fn syntax(line: usize, msg: &str) -> NetlistError {
    NetlistError::Syntax {
        line,
        msg: msg.to_string(),
    }
}

fn cover_to_gate(
    no: usize,
    mut nets: Vec<String>,
    rows: &[(usize, String)],
) -> Result<Gate, NetlistError> {
    let output = nets.pop().unwrap();
    let n = nets.len();
    if n > 2 {
        return Err(syntax(no, "covers with more than two inputs are not supported"));
    }
    let mut on = 0u8;
    let mut off = 0u8;
    let mut saw_on = false;
    let mut saw_off = false;
    for (rno, row) in rows {
        let parts: Vec<&str> = row.split_whitespace().collect();
        let (pat, out) = match (n, parts.as_slice()) {
            (0, [o]) => ("", *o),
            (_, [p, o]) if p.len() == n => (*p, *o),
            _ => return Err(syntax(*rno, "malformed cover row")),
        };
        let mut hit = 0u8;
        for idx in 0..(1u8 << n) {
            let ok = pat.chars().enumerate().all(|(k, c)| {
                let bit = idx >> k & 1 == 1;
                match c {
                    '1' => bit,
                    '0' => !bit,
                    '-' => true,
                    _ => false,
                }
            });
            if !pat.chars().all(|c| matches!(c, '0' | '1' | '-')) {
                return Err(syntax(*rno, "bad cover character"));
            }
            if ok {
                hit |= 1 << idx;
            }
        }
        match out {
            "1" => {
                saw_on = true;
                on |= hit;
            }
            "0" => {
                saw_off = true;
                off |= hit;
            }
            _ => return Err(syntax(*rno, "cover output must be 0 or 1")),
        }
    }
    if saw_on && saw_off {
        return Err(syntax(no, "mixed on-set and off-set cover"));
    }
    let full = ((1u16 << (1 << n)) - 1) as u8;
    let table = if saw_off { !off & full } else { on };
    let op = match (n, table) {
        (0, 0) => GateOp::Const0,
        (0, 1) => GateOp::Const1,
        (1, 0b10) => GateOp::Buf,
        (1, 0b01) => GateOp::Not,
        (2, t) => GateOp::from_table2(t)
            .ok_or_else(|| syntax(no, "cover is not in the gate library"))?,
        _ => return Err(syntax(no, "cover is not in the gate library")),
    };
    Ok(Gate {
        output,
        op,
        inputs: nets,
    })
}

/// Emits BLIF text; `parse_blif` reads it back to the same netlist.
pub fn emit_blif(n: &Netlist) -> String {
    let mut s = format!(".model {}\n", n.name);
    s.push_str(&format!(".inputs {}\n", n.inputs.join(" ")));
    s.push_str(&format!(".outputs {}\n", n.outputs.join(" ")));
    for g in &n.gates {
        s.push_str(".names");
        for i in &g.inputs {
            s.push(' ');
            s.push_str(i);
        }
        s.push(' ');
        s.push_str(&g.output);
        s.push('\n');
        for row in g.op.cover() {
            s.push_str(row);
            s.push('\n');
        }
    }
    s.push_str(".end\n");
    s
}

/// Per-net levels in net-index order.
pub fn levels_vec(n: &Netlist) -> Vec<usize> {
    let fanins = n.gate_fanins();
    let ni = n.inputs.len();
    let mut lv = vec![0usize; n.num_nets()];
    for (gi, fi) in fanins.iter().enumerate() {
        lv[ni + gi] = 1 + fi.iter().map(|&f| lv[f]).max().unwrap_or(0);
    }
    lv
}

pub fn topo_levels(n: &Netlist) -> IndexMap<String, usize> {
    n.net_names()
        .into_iter()
        .map(str::to_string)
        .zip(levels_vec(n))
        .collect()
}

/// Number of levels; never below one so that the output cut differs from the input cut.
pub fn depth(n: &Netlist) -> usize {
    let lv = levels_vec(n);
    n.output_indices()
        .into_iter()
        .map(|o| lv[o])
        .max()
        .unwrap_or(0)
        .max(1)
}

pub fn bufferize(n: &Netlist) -> Netlist {
    bufferize_to(n, depth(n))
}

/// Inserts buffers so every edge spans one level and pads outputs to `target` levels.
pub fn bufferize_to(n: &Netlist, target: usize) -> Netlist {
    let lv = levels_vec(n);
    let idx = n.net_index();
    let mut taken: HashSet<String> = n.net_names().into_iter().map(str::to_string).collect();
    let mut chains: HashMap<String, Vec<String>> = HashMap::new();
    let mut new_gates: Vec<(usize, Gate)> = Vec::new();

    // Returns the chain element carrying `net` at level `at`.
    let mut tap = |net: &str,
                   at: usize,
                   new_gates: &mut Vec<(usize, Gate)>,
                   taken: &mut HashSet<String>|
     -> String {
        let base = lv[idx[net]];
        if at == base {
            return net.to_string();
        }
        let chain = chains.entry(net.to_string()).or_default();
        while chain.len() < at - base {
            let prev = chain.last().cloned().unwrap_or_else(|| net.to_string());
            let mut k = chain.len() + 1;
            let mut name = format!("{net}$buf{k}");
            while taken.contains(&name) {
                k += 1;
                name = format!("{net}$buf{k}_");
            }
            taken.insert(name.clone());
            new_gates.push((
                base + chain.len() + 1,
                Gate {
                    output: name.clone(),
                    op: GateOp::Buf,
                    inputs: vec![prev],
                },
            ));
            chain.push(name);
        }
        chain[at - base - 1].clone()
    };

    let ni = n.inputs.len();
    let mut gates: Vec<(usize, Gate)> = Vec::new();
    for (gi, g) in n.gates.iter().enumerate() {
        let my = lv[ni + gi];
        let inputs = g
            .inputs
            .iter()
            .map(|i| tap(i, my - 1, &mut new_gates, &mut taken))
            .collect();
        gates.push((
            my,
            Gate {
                output: g.output.clone(),
                op: g.op,
                inputs,
            },
        ));
    }
    let outputs = n
        .outputs
        .iter()
        .map(|o| {
            let l = lv[idx[o.as_str()]];
            if l >= target {
                o.clone()
            } else {
                tap(o, target, &mut new_gates, &mut taken)
            }
        })
        .collect();
    gates.extend(new_gates);
    // Stable sort by level keeps original order within a level.
    gates.sort_by_key(|(l, _)| *l);
    Netlist {
        name: n.name.clone(),
        inputs: n.inputs.clone(),
        outputs,
        gates: gates.into_iter().map(|(_, g)| g).collect(),
    }
}

/// Bufferizes both circuits to a shared depth.
pub fn bufferize_pair(n1: &Netlist, n2: &Netlist) -> (Netlist, Netlist) {
    let d = depth(n1).max(depth(n2));
    (bufferize_to(n1, d), bufferize_to(n2, d))
}

/// Nets of one level on each side of the pair, as net indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cut {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

impl Cut {
    pub fn len(&self) -> usize {
        self.left.len() + self.right.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutPlan {
    pub levels: usize,
    pub cuts: Vec<Cut>,
    pub level1: Vec<usize>,
    pub level2: Vec<usize>,
}

impl CutPlan {
    pub fn cut_names(&self, n1: &Netlist, n2: &Netlist, i: usize) -> (Vec<String>, Vec<String>) {
        let a = n1.net_names();
        let b = n2.net_names();
        (
            self.cuts[i].left.iter().map(|&x| a[x].to_string()).collect(),
            self.cuts[i].right.iter().map(|&x| b[x].to_string()).collect(),
        )
    }
}

/// Level cuts of a bufferized pair: `Cut_i` holds every net at level `i`.
pub fn level_cuts(n1: &Netlist, n2: &Netlist) -> Result<CutPlan, NetlistError> {
    let (d1, d2) = (depth(n1), depth(n2));
    if d1 != d2 {
        return Err(NetlistError::LevelMismatch(d1, d2));
    }
    let level1 = levels_vec(n1);
    let level2 = levels_vec(n2);
    let mut cuts = vec![
        Cut {
            left: Vec::new(),
            right: Vec::new()
        };
        d1 + 1
    ];
    for (i, &l) in level1.iter().enumerate() {
        if l <= d1 {
            cuts[l].left.push(i);
        }
    }
    for (i, &l) in level2.iter().enumerate() {
        if l <= d2 {
            cuts[l].right.push(i);
        }
    }
    Ok(CutPlan {
        levels: d1,
        cuts,
        level1,
        level2,
    })
}
