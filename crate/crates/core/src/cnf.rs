// SPDX-License-Identifier: Apache-2.0
//! Clauses, Tseitin encoding, the input coupler and the miter formulas.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Not;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{bufferize_pair, level_cuts, CutPlan, GateOp, Netlist, NetlistError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CnfError {
    #[error("variable lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("{0} has {1} outputs; a single output is required")]
    MultiOutput(String, usize),
    #[error("circuits have different input counts ({0} vs {1})")]
    InputMismatch(usize, usize),
    #[error("DIMACS line {0}: {1}")]
    Dimacs(usize, String),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
}

/// Variables are numbered from 1, as in DIMACS.
pub type Var = u32;

/// A literal in DIMACS sign convention.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Lit(i32);

impl Lit {
    pub fn new(var: Var, positive: bool) -> Lit {
        debug_assert!(var > 0);
        if positive {
            Lit(var as i32)
        } else {
            Lit(-(var as i32))
        }
    }

    pub fn pos(var: Var) -> Lit {
        Lit::new(var, true)
    }

    pub fn neg(var: Var) -> Lit {
        Lit::new(var, false)
    }

    pub fn from_dimacs(x: i32) -> Lit {
        assert!(x != 0);
        Lit(x)
    }

    pub fn to_dimacs(self) -> i32 {
        self.0
    }

    pub fn var(self) -> Var {
        self.0.unsigned_abs()
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    /// Value of the literal under a variable value.
    pub fn holds(self, value: bool) -> bool {
        value == self.is_positive()
    }
}

impl Not for Lit {
    type Output = Lit;
    fn not(self) -> Lit {
        Lit(-self.0)
    }
}

impl fmt::Debug for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A sorted, duplicate-free, non-tautological disjunction.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Clause(Vec<Lit>);

impl Clause {
    /// Returns `None` for tautologies.
    pub fn new(mut lits: Vec<Lit>) -> Option<Clause> {
        lits.sort_by_key(|l| (l.var(), !l.is_positive()));
        lits.dedup();
        if lits.windows(2).any(|w| w[0].var() == w[1].var()) {
            return None;
        }
        Some(Clause(lits))
    }

    pub fn from_dimacs(lits: &[i32]) -> Option<Clause> {
        Clause::new(lits.iter().map(|&x| Lit::from_dimacs(x)).collect())
    }

    pub fn empty() -> Clause {
        Clause(Vec::new())
    }

    pub fn lits(&self) -> &[Lit] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, l: Lit) -> bool {
        self.0.contains(&l)
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.0.iter().map(|l| l.var())
    }

    /// Evaluates under a total assignment indexed by variable.
    pub fn eval(&self, value: impl Fn(Var) -> bool) -> bool {
        self.0.iter().any(|l| l.holds(value(l.var())))
    }

    pub fn subsumes(&self, other: &Clause) -> bool {
        self.0.iter().all(|l| other.0.contains(l))
    }
}

impl fmt::Debug for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnfFormula {
    pub num_vars: u32,
    pub clauses: Vec<Clause>,
    pub names: BTreeMap<Var, String>,
}

impl CnfFormula {
    pub fn new(num_vars: u32) -> CnfFormula {
        CnfFormula {
            num_vars,
            ..Default::default()
        }
    }

    /// Adds a clause; tautologies are dropped. Returns whether something was stored.
    pub fn add(&mut self, lits: Vec<Lit>) -> bool {
        match Clause::new(lits) {
            Some(c) => {
                self.push(c);
                true
            }
            None => false,
        }
    }

    pub fn push(&mut self, c: Clause) {
        if let Some(m) = c.vars().max() {
            self.num_vars = self.num_vars.max(m);
        }
        self.clauses.push(c);
    }

    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    pub fn extend(&mut self, other: &CnfFormula) {
        for c in &other.clauses {
            self.push(c.clone());
        }
        self.num_vars = self.num_vars.max(other.num_vars);
        for (v, n) in &other.names {
            self.names.entry(*v).or_insert_with(|| n.clone());
        }
    }

    pub fn conjoin(parts: &[&CnfFormula]) -> CnfFormula {
        let mut f = CnfFormula::default();
        for p in parts {
            f.extend(p);
        }
        f
    }

    /// Variables that occur in some clause, ascending.
    pub fn vars(&self) -> Vec<Var> {
        let mut v: Vec<Var> = self.clauses.iter().flat_map(|c| c.vars()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn eval(&self, value: impl Fn(Var) -> bool) -> bool {
        self.clauses.iter().all(|c| c.eval(&value))
    }

    pub fn max_width(&self) -> usize {
        self.clauses.iter().map(Clause::len).max().unwrap_or(0)
    }

    pub fn sort_clauses(&mut self) {
        self.clauses.sort();
        self.clauses.dedup();
    }
}

/// Hands out fresh variables.
#[derive(Clone, Debug)]
pub struct VarAlloc {
    next: Var,
}

impl Default for VarAlloc {
    fn default() -> Self {
        VarAlloc { next: 1 }
    }
}

impl VarAlloc {
    pub fn fresh(&mut self) -> Var {
        let v = self.next;
        self.next += 1;
        v
    }

    pub fn used(&self) -> u32 {
        self.next - 1
    }
}

/// Clauses of one gate `z = op(a, b)`.
pub fn gate_clauses(op: GateOp, z: Var, ins: &[Var]) -> Vec<Vec<Lit>> {
    let (p, n) = (Lit::pos, Lit::neg);
    let zl = |pos: bool| Lit::new(z, pos);
    let and = |out: bool, a: Var, b: Var| {
        vec![
            vec![!zl(out), p(a)],
            vec![!zl(out), p(b)],
            vec![zl(out), n(a), n(b)],
        ]
    };
    let or = |out: bool, a: Var, b: Var| {
        vec![
            vec![zl(out), n(a)],
            vec![zl(out), n(b)],
            vec![!zl(out), p(a), p(b)],
        ]
    };
    let xor = |out: bool, a: Var, b: Var| {
        vec![
            vec![!zl(out), p(a), p(b)],
            vec![!zl(out), n(a), n(b)],
            vec![zl(out), n(a), p(b)],
            vec![zl(out), p(a), n(b)],
        ]
    };
    match op {
        GateOp::And => and(true, ins[0], ins[1]),
        GateOp::Nand => and(false, ins[0], ins[1]),
        GateOp::Or => or(true, ins[0], ins[1]),
        GateOp::Nor => or(false, ins[0], ins[1]),
        GateOp::Xor => xor(true, ins[0], ins[1]),
        GateOp::Xnor => xor(false, ins[0], ins[1]),
        GateOp::Buf => vec![vec![n(z), p(ins[0])], vec![p(z), n(ins[0])]],
        GateOp::Not => vec![vec![p(z), p(ins[0])], vec![n(z), n(ins[0])]],
        GateOp::Const0 => vec![vec![n(z)]],
        GateOp::Const1 => vec![vec![p(z)]],
    }
}

/// Tseitin encoding of a circuit.
#[derive(Clone, Debug)]
pub struct Encoding {
    pub formula: CnfFormula,
    /// Variable of each net, in net-index order.
    pub net_vars: Vec<Var>,
    /// Index of the gate that produced each clause.
    pub clause_gate: Vec<usize>,
}

pub fn tseitin_encode(n: &Netlist, alloc: &mut VarAlloc) -> Encoding {
    tseitin_encode_named(n, alloc, "")
}

pub fn tseitin_encode_named(n: &Netlist, alloc: &mut VarAlloc, mark: &str) -> Encoding {
    let net_vars: Vec<Var> = (0..n.num_nets()).map(|_| alloc.fresh()).collect();
    let mut formula = CnfFormula::new(alloc.used());
    for (name, &v) in n.net_names().into_iter().zip(&net_vars) {
        formula.names.insert(v, format!("{name}{mark}"));
    }
    let ni = n.inputs.len();
    let mut clause_gate = Vec::new();
    for (gi, fi) in n.gate_fanins().iter().enumerate() {
        let ins: Vec<Var> = fi.iter().map(|&f| net_vars[f]).collect();
        for c in gate_clauses(n.gates[gi].op, net_vars[ni + gi], &ins) {
            if formula.add(c) {
                clause_gate.push(gi);
            }
        }
    }
    Encoding {
        formula,
        net_vars,
        clause_gate,
    }
}

/// `EQ(X1, X2)`: two binary clauses per pair.
pub fn eq_formula(x1: &[Var], x2: &[Var]) -> Result<CnfFormula, CnfError> {
    if x1.len() != x2.len() {
        return Err(CnfError::LengthMismatch(x1.len(), x2.len()));
    }
    let mut f = CnfFormula::default();
    for (&a, &b) in x1.iter().zip(x2) {
        f.add(vec![Lit::neg(a), Lit::pos(b)]);
        f.add(vec![Lit::pos(a), Lit::neg(b)]);
    }
    Ok(f)
}

/// Which block of the miter a variable belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    InputLeft,
    InputRight,
    InternalLeft,
    InternalRight,
    OutputLeft,
    OutputRight,
}

#[derive(Clone, Debug)]
pub struct VarRoles {
    pub role: BTreeMap<Var, Role>,
    /// Cut index of every variable.
    pub cut_of: BTreeMap<Var, usize>,
    /// Variables of each cut: left side first, then right side.
    pub cut_vars: Vec<Vec<Var>>,
    pub x1: Vec<Var>,
    pub x2: Vec<Var>,
    pub z1: Var,
    pub z2: Var,
}

#[derive(Clone, Debug)]
pub struct MiterFormulas {
    pub f1: CnfFormula,
    pub f2: CnfFormula,
    pub eq: CnfFormula,
    pub g: CnfFormula,
    pub g_rlx: CnfFormula,
    pub neq: CnfFormula,
    pub alpha: CnfFormula,
    /// Level of the gate behind each clause of `g_rlx`.
    pub rlx_levels: Vec<usize>,
    pub vars1: Vec<Var>,
    pub vars2: Vec<Var>,
}

impl MiterFormulas {
    /// `H ∧ G_rlx ∧ neq`.
    pub fn beta(&self, h: &CnfFormula) -> CnfFormula {
        let mut f = CnfFormula::conjoin(&[h, &self.g_rlx, &self.neq]);
        f.names = self.g_rlx.names.clone();
        f
    }

    /// Clauses of gates at levels `lo..=hi` of both circuits.
    pub fn level_slice(&self, lo: usize, hi: usize) -> CnfFormula {
        let mut f = CnfFormula::new(0);
        for (c, &l) in self.g_rlx.clauses.iter().zip(&self.rlx_levels) {
            if l >= lo && l <= hi {
                f.push(c.clone());
            }
        }
        f
    }
}

/// Encodes a single-output pair. Variables: nets of `n1` first, then nets of `n2`.
pub fn build_miter(
    n1: &Netlist,
    n2: &Netlist,
    plan: &CutPlan,
) -> Result<(MiterFormulas, VarRoles), CnfError> {
    for n in [n1, n2] {
        if n.outputs.len() != 1 {
            return Err(CnfError::MultiOutput(n.name.clone(), n.outputs.len()));
        }
    }
    if n1.inputs.len() != n2.inputs.len() {
        return Err(CnfError::InputMismatch(n1.inputs.len(), n2.inputs.len()));
    }
    let mut alloc = VarAlloc::default();
    let e1 = tseitin_encode_named(n1, &mut alloc, "'");
    let e2 = tseitin_encode_named(n2, &mut alloc, "''");
    let ni = n1.inputs.len();
    let x1 = e1.net_vars[..ni].to_vec();
    let x2 = e2.net_vars[..ni].to_vec();
    let z1 = e1.net_vars[n1.output_indices()[0]];
    let z2 = e2.net_vars[n2.output_indices()[0]];
    let mut eq = eq_formula(&x1, &x2)?;
    eq.num_vars = alloc.used();

    let mut g_rlx = CnfFormula::conjoin(&[&e1.formula, &e2.formula]);
    g_rlx.num_vars = alloc.used();
    let mut rlx_levels: Vec<usize> = e1
        .clause_gate
        .iter()
        .map(|&g| plan.level1[n1.inputs.len() + g])
        .collect();
    rlx_levels.extend(
        e2.clause_gate
            .iter()
            .map(|&g| plan.level2[n2.inputs.len() + g]),
    );
    let mut g = CnfFormula::conjoin(&[&eq, &e1.formula, &e2.formula]);
    g.num_vars = alloc.used();
    let mut neq = CnfFormula::new(alloc.used());
    neq.add(vec![Lit::pos(z1), Lit::pos(z2)]);
    neq.add(vec![Lit::neg(z1), Lit::neg(z2)]);
    let mut alpha = CnfFormula::conjoin(&[&g, &neq]);
    alpha.num_vars = alloc.used();

    let mut role = BTreeMap::new();
    for (k, &v) in e1.net_vars.iter().enumerate() {
        let r = if k < ni {
            Role::InputLeft
        } else if v == z1 {
            Role::OutputLeft
        } else {
            Role::InternalLeft
        };
        role.insert(v, r);
    }
    for (k, &v) in e2.net_vars.iter().enumerate() {
        let r = if k < ni {
            Role::InputRight
        } else if v == z2 {
            Role::OutputRight
        } else {
            Role::InternalRight
        };
        role.insert(v, r);
    }
    let mut cut_of = BTreeMap::new();
    let mut cut_vars = Vec::new();
    for (i, cut) in plan.cuts.iter().enumerate() {
        let vs: Vec<Var> = cut
            .left
            .iter()
            .map(|&k| e1.net_vars[k])
            .chain(cut.right.iter().map(|&k| e2.net_vars[k]))
            .collect();
        for &v in &vs {
            cut_of.insert(v, i);
        }
        cut_vars.push(vs);
    }
    let miter = MiterFormulas {
        f1: e1.formula,
        f2: e2.formula,
        eq,
        g,
        g_rlx,
        neq,
        alpha,
        rlx_levels,
        vars1: e1.net_vars,
        vars2: e2.net_vars,
    };
    let roles = VarRoles {
        role,
        cut_of,
        cut_vars,
        x1,
        x2,
        z1,
        z2,
    };
    Ok((miter, roles))
}

/// A bufferized pair with its cut plan and encoded miter.
#[derive(Clone, Debug)]
pub struct Miter {
    pub n1: Netlist,
    pub n2: Netlist,
    pub plan: CutPlan,
    pub f: MiterFormulas,
    pub roles: VarRoles,
}

impl Miter {
    pub fn new(n1: &Netlist, n2: &Netlist) -> Result<Miter, CnfError> {
        let (b1, b2) = bufferize_pair(n1, n2);
        let plan = level_cuts(&b1, &b2)?;
        let (f, roles) = build_miter(&b1, &b2, &plan)?;
        Ok(Miter {
            n1: b1,
            n2: b2,
            plan,
            f,
            roles,
        })
    }

    pub fn levels(&self) -> usize {
        self.plan.levels
    }

    pub fn cut_vars(&self, i: usize) -> &[Var] {
        &self.roles.cut_vars[i]
    }

    /// Left and right halves of a cut.
    pub fn cut_sides(&self, i: usize) -> (&[Var], &[Var]) {
        let k = self.plan.cuts[i].left.len();
        self.roles.cut_vars[i].split_at(k)
    }

    /// `F_M` for the sub-circuits below `Cut_i` (levels `1..=i`).
    pub fn below(&self, i: usize) -> CnfFormula {
        self.f.level_slice(1, i)
    }

    /// `F_M` of one side only.
    pub fn below_side(&self, i: usize, right: bool) -> CnfFormula {
        let k = self.f.f1.len();
        let mut f = CnfFormula::new(self.f.g_rlx.num_vars);
        for (j, (c, &l)) in self.f.g_rlx.clauses.iter().zip(&self.f.rlx_levels).enumerate() {
            if (j >= k) == right && (1..=i).contains(&l) {
                f.push(c.clone());
            }
        }
        f
    }

    /// Pairwise equality of the two halves of a cut, when they have equal width.
    pub fn cut_equality(&self, i: usize) -> Option<CnfFormula> {
        let (l, r) = self.cut_sides(i);
        eq_formula(l, r).ok()
    }

    pub fn var_name(&self, v: Var) -> String {
        self.f.g_rlx.names.get(&v).cloned().unwrap_or_else(|| format!("v{v}"))
    }
}

/// DIMACS text; comment lines carry the net-to-variable map.
pub fn emit_dimacs(f: &CnfFormula) -> String {
    let mut s = String::new();
    for (v, n) in &f.names {
        s.push_str(&format!("c map {v} {n}\n"));
    }
    s.push_str(&format!("p cnf {} {}\n", f.num_vars, f.clauses.len()));
    for c in &f.clauses {
        for l in c.lits() {
            s.push_str(&l.to_dimacs().to_string());
            s.push(' ');
        }
        s.push_str("0\n");
    }
    s
}

/// Reads DIMACS clauses; `c map` comments restore names. Tautologies are dropped.
pub fn parse_dimacs(text: &str) -> Result<CnfFormula, CnfError> {
    let mut f = CnfFormula::default();
    let mut declared = None;
    let mut cur: Vec<i32> = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('c') {
            let t: Vec<&str> = rest.split_whitespace().collect();
            if t.len() == 3 && t[0] == "map" {
                if let Ok(v) = t[1].parse::<Var>() {
                    f.names.insert(v, t[2].to_string());
                }
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix('p') {
            let t: Vec<&str> = rest.split_whitespace().collect();
            if t.len() != 3 || t[0] != "cnf" {
                return Err(CnfError::Dimacs(no + 1, "bad header".into()));
            }
            let nv = t[1]
                .parse::<u32>()
                .map_err(|_| CnfError::Dimacs(no + 1, "bad variable count".into()))?;
            declared = Some(nv);
            continue;
        }
        for tok in line.split_whitespace() {
            let x: i32 = tok
                .parse()
                .map_err(|_| CnfError::Dimacs(no + 1, format!("bad literal {tok}")))?;
            if x == 0 {
                if let Some(c) = Clause::from_dimacs(&cur) {
                    f.push(c);
                }
                cur.clear();
            } else {
                cur.push(x);
            }
        }
    }
    if !cur.is_empty() {
        return Err(CnfError::Dimacs(0, "unterminated clause".into()));
    }
    if let Some(nv) = declared {
        f.num_vars = f.num_vars.max(nv);
    }
    Ok(f)
}
