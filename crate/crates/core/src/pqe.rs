// SPDX-License-Identifier: Apache-2.0
//! Partial quantifier elimination: a brute-force oracle, a branching solver built on
//! D-sequents, and a solution checker.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnf::{Clause, CnfFormula, Lit, Var};
use crate::qe::{shrink_core, smallest_core, solver_for};
use crate::sat::{SatStatus, Solver};
use crate::Limits;

/// SAT-call cap for one narrowing search.
const NARROW_CALLS: u64 = 2_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PqeError {
    #[error("step budget of {0} exhausted")]
    Budget(u64),
    #[error("instance exceeds the enumeration bound ({0} free, {1} total variables)")]
    Bound(usize, usize),
    #[error("cannot join: {0}")]
    Join(String),
    #[error("line {0}: {1}")]
    Parse(usize, String),
}

/// `∃W[A ∧ B]` where `A` is to be taken out of the quantifier scope.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PqeProblem {
    pub a: CnfFormula,
    pub b: CnfFormula,
    pub w: BTreeSet<Var>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PqeStats {
    pub nodes: u64,
    pub branches: u64,
    pub dsequents: u64,
    pub resolvents: u64,
    pub noise_clauses: u64,
    pub sat_calls: u64,
    pub obligations: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PqeSolution {
    pub astar: CnfFormula,
    pub stats: PqeStats,
}

/// Target clause `target` of `A` is redundant whenever `condition` holds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DSequent {
    pub condition: Vec<Lit>,
    pub target: usize,
}

impl DSequent {
    pub fn new(mut condition: Vec<Lit>, target: usize) -> DSequent {
        condition.sort();
        condition.dedup();
        DSequent { condition, target }
    }

    pub fn is_unconditional(&self) -> bool {
        self.condition.is_empty()
    }

    pub fn mentions(&self, v: Var) -> bool {
        self.condition.iter().any(|l| l.var() == v)
    }
}

/// Joins `d0` (with `y = 0`) and `d1` (with `y = 1`) at `y`.
pub fn join_dsequents(d0: &DSequent, d1: &DSequent, y: Var) -> Result<DSequent, PqeError> {
    if d0.target != d1.target {
        return Err(PqeError::Join(format!(
            "targets differ ({} vs {})",
            d0.target, d1.target
        )));
    }
    if !d0.condition.contains(&Lit::neg(y)) || !d1.condition.contains(&Lit::pos(y)) {
        return Err(PqeError::Join(format!("conditions do not split on {y}")));
    }
    let mut cond: Vec<Lit> = d0
        .condition
        .iter()
        .chain(&d1.condition)
        .copied()
        .filter(|l| l.var() != y)
        .collect();
    cond.sort();
    cond.dedup();
    if cond.windows(2).any(|w| w[0].var() == w[1].var()) {
        return Err(PqeError::Join("conditions disagree outside the join variable".into()));
    }
    Ok(DSequent::new(cond, d0.target))
}

impl PqeProblem {
    pub fn new(a: CnfFormula, b: CnfFormula, w: impl IntoIterator<Item = Var>) -> PqeProblem {
        PqeProblem {
            a,
            b,
            w: w.into_iter().collect(),
        }
    }

    pub fn num_vars(&self) -> u32 {
        self.a.num_vars.max(self.b.num_vars)
    }

    /// Free variables: those of `A ∧ B` outside `W`.
    pub fn v(&self) -> Vec<Var> {
        let mut vs: BTreeSet<Var> = self.a.vars().into_iter().collect();
        vs.extend(self.b.vars());
        vs.into_iter().filter(|v| !self.w.contains(v)).collect()
    }

    fn ab(&self) -> CnfFormula {
        let mut f = CnfFormula::conjoin(&[&self.a, &self.b]);
        f.num_vars = self.num_vars();
        f
    }

    /// Text form: DIMACS with `c pqe A <k>` marking the first `k` clauses as `A`
    /// and an `e ... 0` line listing `W`.
    pub fn to_text(&self) -> String {
        let mut s = format!("c pqe A {}\n", self.a.len());
        s.push_str(&format!(
            "p cnf {} {}\n",
            self.num_vars(),
            self.a.len() + self.b.len()
        ));
        s.push('e');
        for v in &self.w {
            s.push_str(&format!(" {v}"));
        }
        s.push_str(" 0\n");
        for c in self.a.clauses.iter().chain(&self.b.clauses) {
            for l in c.lits() {
                s.push_str(&format!("{} ", l.to_dimacs()));
            }
            s.push_str("0\n");
        }
        s
    }

    pub fn parse(text: &str) -> Result<PqeProblem, PqeError> {
        let mut a_count: Option<usize> = None;
        let mut num_vars = 0u32;
        let mut w = BTreeSet::new();
        let mut clauses = Vec::new();
        let mut pending: Vec<i32> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let ln = i + 1;
            let bad = |m: &str| PqeError::Parse(ln, m.to_string());
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('c') {
                let toks: Vec<&str> = rest.split_whitespace().collect();
                if toks.len() == 3 && toks[0] == "pqe" && toks[1] == "A" {
                    a_count = Some(toks[2].parse().map_err(|_| bad("bad A count"))?);
                }
                continue;
            }
            if let Some(rest) = line.strip_prefix('p') {
                let toks: Vec<&str> = rest.split_whitespace().collect();
                if toks.len() != 3 || toks[0] != "cnf" {
                    return Err(bad("bad header"));
                }
                num_vars = toks[1].parse().map_err(|_| bad("bad variable count"))?;
                continue;
            }
            if let Some(rest) = line.strip_prefix('e') {
                for t in rest.split_whitespace() {
                    let v: u32 = t.parse().map_err(|_| bad("bad quantified variable"))?;
                    if v != 0 {
                        w.insert(v);
                    }
                }
                continue;
            }
            for t in line.split_whitespace() {
                let x: i32 = t.parse().map_err(|_| bad("bad literal"))?;
                if x == 0 {
                    clauses.push(std::mem::take(&mut pending));
                } else {
                    pending.push(x);
                }
            }
        }
        let k = a_count.ok_or(PqeError::Parse(0, "missing 'c pqe A' line".into()))?;
        if k > clauses.len() {
            return Err(PqeError::Parse(0, "A block longer than clause list".into()));
        }
        let mut a = CnfFormula::new(num_vars);
        let mut b = CnfFormula::new(num_vars);
        for (i, c) in clauses.into_iter().enumerate() {
            let lits = c.into_iter().map(Lit::from_dimacs).collect();
            if i < k {
                a.add(lits);
            } else {
                b.add(lits);
            }
        }
        Ok(PqeProblem { a, b, w })
    }
}

fn negate(lits: &[Lit]) -> Vec<Lit> {
    lits.iter().map(|&l| !l).collect()
}

/// Reference solution by enumerating every free point.
pub fn pqe_oracle(p: &PqeProblem) -> Result<PqeSolution, PqeError> {
    let vs = p.v();
    let total = vs.len() + p.w.len();
    if vs.len() > 20 || total > 24 {
        return Err(PqeError::Bound(vs.len(), total));
    }
    let mut s_b = Solver::from_formula(&p.b);
    let mut s_ab = Solver::from_formula(&p.ab());
    let mut stats = PqeStats::default();
    let mut astar = CnfFormula::new(p.num_vars());
    for bits in 0u64..1 << vs.len() {
        let point: Vec<Lit> = vs
            .iter()
            .enumerate()
            .map(|(k, &v)| Lit::new(v, bits >> k & 1 == 1))
            .collect();
        if astar.clauses.iter().any(|c| !c.eval(|v| bits >> vs.binary_search(&v).unwrap() & 1 == 1)) {
            continue;
        }
        stats.sat_calls += 2;
        if s_b.solve(&point) != SatStatus::Sat || s_ab.solve(&point) == SatStatus::Sat {
            continue;
        }
        // Zero point: block it, then drop literals while A ∧ B still implies the clause.
        let mut lits = negate(&point);
        let mut i = 0;
        while i < lits.len() {
            let mut trial = lits.clone();
            trial.remove(i);
            stats.sat_calls += 1;
            if s_ab.solve(&negate(&trial)) == SatStatus::Unsat {
                lits = trial;
            } else {
                i += 1;
            }
        }
        astar.add(lits);
        stats.resolvents += 1;
    }
    Ok(PqeSolution { astar, stats })
}

/// Search knobs for [`pqe_solve_with`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PqeOptions {
    pub limits: Limits,
    /// SAT checks at inner nodes, not only at leaves.
    pub node_checks: bool,
    /// Literal-dropping minimization of derived clauses.
    pub minimize: bool,
    /// With `minimize`, clauses wider than this are re-derived from the narrowest
    /// implied subset of the current point, if one of at most this width exists.
    /// 0 disables the search.
    pub narrow: usize,
}

impl Default for PqeOptions {
    fn default() -> Self {
        PqeOptions {
            limits: Limits::default(),
            node_checks: true,
            minimize: true,
            narrow: 3,
        }
    }
}

pub fn pqe_solve(p: &PqeProblem) -> Result<PqeSolution, PqeError> {
    pqe_solve_with(p, PqeOptions::default())
}

pub fn pqe_solve_with(p: &PqeProblem, opts: PqeOptions) -> Result<PqeSolution, PqeError> {
    pqe_solve_from(p, &CnfFormula::default(), opts)
}

/// Solves with `known` clauses (implied by `A ∧ B`) already part of `A*`.
pub fn pqe_solve_from(
    p: &PqeProblem,
    known: &CnfFormula,
    opts: PqeOptions,
) -> Result<PqeSolution, PqeError> {
    let mut e = Engine::new(p, known, opts, false);
    match e.run() {
        Ok(()) => Ok(e.solution()),
        Err(Abort::Budget) => Err(PqeError::Budget(opts.limits.steps)),
        Err(Abort::Found) => unreachable!("stop mode is off"),
    }
}

/// Runs the solver with `known` clauses already in `A*` and stops at the first new
/// clause it has to add. `None` means `A` is already redundant.
pub fn first_missing_clause(
    p: &PqeProblem,
    known: &CnfFormula,
    opts: PqeOptions,
) -> Result<Option<Clause>, PqeError> {
    let mut e = Engine::new(p, known, opts, true);
    match e.run() {
        Ok(()) => Ok(None),
        Err(Abort::Found) => Ok(e.astar.last().map(|&id| e.clauses[id].clone())),
        Err(Abort::Budget) => Err(PqeError::Budget(opts.limits.steps)),
    }
}

/// Checks `∃W[A ∧ B] ≡ A* ∧ ∃W[B]` with SAT calls.
pub fn verify_pqe_solution(p: &PqeProblem, s: &PqeSolution) -> bool {
    verify_pqe_with(p, &s.astar, Limits::default())
}

/// As [`verify_pqe_solution`]; returns false when the budget runs out.
pub fn verify_pqe_with(p: &PqeProblem, astar: &CnfFormula, limits: Limits) -> bool {
    let mut s_ab = solver_for(&p.ab(), limits);
    for c in &astar.clauses {
        if s_ab.solve(&negate(c.lits())) != SatStatus::Unsat {
            return false;
        }
    }
    let vs = p.v();
    let mut rhs = CnfFormula::conjoin(&[astar, &p.b]);
    rhs.num_vars = rhs.num_vars.max(p.num_vars());
    let mut s_rhs = solver_for(&rhs, limits);
    let mut steps = 0;
    loop {
        steps += 1;
        if steps > limits.steps {
            return false;
        }
        match s_rhs.solve(&[]) {
            SatStatus::Unsat => return true,
            SatStatus::Unknown => return false,
            SatStatus::Sat => {}
        }
        let point: Vec<Lit> = vs
            .iter()
            .map(|&v| Lit::new(v, s_rhs.model_value(v)))
            .collect();
        match s_ab.solve(&point) {
            SatStatus::Sat => {
                s_rhs.add_clause(&negate(&point));
            }
            _ => return false,
        }
    }
}

#[derive(Debug)]
enum Abort {
    Budget,
    Found,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Kind {
    Target,
    Quantified,
    Learned { tainted: bool },
}

enum Check {
    Sat(Vec<bool>),
    Vacuous(Vec<Lit>),
}

/// Per-target redundancy certificates handed up the search tree.
type Proofs = Vec<(usize, Vec<Lit>)>;

struct Engine<'a> {
    p: &'a PqeProblem,
    opts: PqeOptions,
    stop_at_first: bool,
    n: usize,
    is_w: Vec<bool>,
    vs: Vec<Var>,
    clauses: Vec<Clause>,
    kind: Vec<Kind>,
    occ: Vec<Vec<usize>>,
    /// Clause id of each target, indexed like `A`.
    target_ids: BTreeMap<usize, usize>,
    /// Co-occurring free variables of each quantified variable.
    w_nbrs: Vec<Vec<Var>>,
    s_f: Solver,
    s_n: Solver,
    astar: Vec<usize>,
    stats: PqeStats,
    // Node state.
    val: Vec<i8>,
    reason: Vec<Option<usize>>,
    trail: Vec<Lit>,
    phase1: usize,
    bonus: Vec<u32>,
}

fn code(l: Lit) -> usize {
    2 * l.var() as usize + usize::from(!l.is_positive())
}

impl<'a> Engine<'a> {
    fn new(p: &'a PqeProblem, known: &CnfFormula, opts: PqeOptions, stop_at_first: bool) -> Self {
        let nv = p.num_vars().max(known.num_vars) as usize;
        let n = nv + 1;
        let mut is_w = vec![false; n];
        for &w in &p.w {
            if (w as usize) < n {
                is_w[w as usize] = true;
            }
        }
        let cfg_limits = opts.limits;
        let mut e = Engine {
            p,
            opts,
            stop_at_first,
            n,
            is_w,
            vs: p.v(),
            clauses: Vec::new(),
            kind: Vec::new(),
            occ: vec![Vec::new(); 2 * n],
            target_ids: BTreeMap::new(),
            w_nbrs: vec![Vec::new(); n],
            s_f: solver_for(&CnfFormula::new(nv as u32), cfg_limits),
            s_n: solver_for(&CnfFormula::new(nv as u32), cfg_limits),
            astar: Vec::new(),
            stats: PqeStats::default(),
            val: vec![0; n],
            reason: vec![None; n],
            trail: Vec::new(),
            phase1: 0,
            bonus: vec![0; n],
        };
        for c in &p.b.clauses {
            e.insert(c.clone(), Kind::Quantified);
        }
        for c in &known.clauses {
            let id = e.insert(c.clone(), Kind::Learned { tainted: true });
            e.astar.push(id);
        }
        for (i, c) in p.a.clauses.iter().enumerate() {
            if c.vars().any(|v| e.is_w[v as usize]) {
                let id = e.insert(c.clone(), Kind::Target);
                e.target_ids.insert(i, id);
            } else {
                let id = e.insert(c.clone(), Kind::Learned { tainted: true });
                e.astar.push(id);
            }
        }
        let mut nb: Vec<BTreeSet<Var>> = vec![BTreeSet::new(); n];
        for c in &e.clauses {
            for w in c.vars().filter(|&v| e.is_w[v as usize]) {
                nb[w as usize].extend(c.vars().filter(|&v| !e.is_w[v as usize]));
            }
        }
        e.w_nbrs = nb.into_iter().map(|s| s.into_iter().collect()).collect();
        e
    }

    fn insert(&mut self, c: Clause, kind: Kind) -> usize {
        let id = self.clauses.len();
        for &l in c.lits() {
            self.occ[code(l)].push(id);
        }
        if kind != Kind::Target {
            self.s_n.add_clause(c.lits());
        }
        self.s_f.add_clause(c.lits());
        self.clauses.push(c);
        self.kind.push(kind);
        id
    }

    fn tainted(&self, id: usize) -> bool {
        matches!(self.kind[id], Kind::Target | Kind::Learned { tainted: true })
    }

    fn solution(&self) -> PqeSolution {
        let mut astar = CnfFormula::new(self.p.num_vars());
        let cs: Vec<&Clause> = self.astar.iter().map(|&i| &self.clauses[i]).collect();
        for (i, c) in cs.iter().enumerate() {
            let dominated = cs.iter().enumerate().any(|(j, d)| {
                j != i && d.subsumes(c) && (d.len() < c.len() || j < i)
            });
            if !dominated {
                astar.push((*c).clone());
            }
        }
        for v in astar.vars() {
            let name = self.p.a.names.get(&v).or_else(|| self.p.b.names.get(&v));
            if let Some(name) = name {
                astar.names.insert(v, name.clone());
            }
        }
        PqeSolution {
            astar,
            stats: self.stats,
        }
    }

    fn run(&mut self) -> Result<(), Abort> {
        let todo: Vec<usize> = self.target_ids.keys().copied().collect();
        let mut decisions = Vec::new();
        let proofs = self.node(&mut decisions, todo)?;
        debug_assert!(proofs.iter().all(|(_, c)| c.is_empty()));
        Ok(())
    }

    fn lit_val(&self, l: Lit) -> i8 {
        let v = self.val[l.var() as usize];
        if l.is_positive() {
            v
        } else {
            -v
        }
    }

    fn assign(&mut self, l: Lit, r: Option<usize>) {
        self.val[l.var() as usize] = if l.is_positive() { 1 } else { -1 };
        self.reason[l.var() as usize] = r;
        self.trail.push(l);
    }

    fn undo_to(&mut self, len: usize) {
        while self.trail.len() > len {
            let l = self.trail.pop().unwrap();
            self.val[l.var() as usize] = 0;
            self.reason[l.var() as usize] = None;
        }
    }

    /// Unit propagation from trail position `from`. Targets take part only when
    /// `targets` is set, and for trail literals below `old` only targets are checked.
    fn bcp(&mut self, from: usize, targets: bool, old: usize) -> Option<usize> {
        let mut qi = from;
        while qi < self.trail.len() {
            let l = self.trail[qi];
            qi += 1;
            let ids = self.occ[code(!l)].clone();
            for id in ids {
                let is_t = self.kind[id] == Kind::Target;
                if (is_t && !targets) || (qi <= old && !is_t) {
                    continue;
                }
                let mut unit = None;
                let mut free = 0;
                let mut sat = false;
                for &x in self.clauses[id].lits() {
                    match self.lit_val(x) {
                        1 => {
                            sat = true;
                            break;
                        }
                        0 => {
                            free += 1;
                            unit = Some(x);
                        }
                        _ => {}
                    }
                }
                if sat {
                    continue;
                }
                match free {
                    0 => return Some(id),
                    1 => {
                        let u = unit.unwrap();
                        if is_t && self.is_w[u.var() as usize] {
                            self.stats.obligations += self.occ[code(!u)].len() as u64;
                            for &d in &self.occ[code(!u)] {
                                for v in self.clauses[d].vars() {
                                    if !self.is_w[v as usize] {
                                        self.bonus[v as usize] += 1;
                                    }
                                }
                            }
                        }
                        self.assign(u, Some(id));
                    }
                    _ => {}
                }
            }
        }
        // Empty clauses never enter an occurrence list.
        None
    }

    /// Rebuilds the phase-1 trail (non-target clauses only) for `decisions`.
    /// On a conflict, returns the decisions it depends on.
    fn propagate(&mut self, decisions: &[Lit]) -> Option<Vec<Lit>> {
        self.undo_to(0);
        if (0..self.clauses.len())
            .any(|i| self.clauses[i].is_empty() && self.kind[i] != Kind::Target)
        {
            return Some(Vec::new());
        }
        let conflict = |e: &Self, id: usize| e.cone(e.clauses[id].vars());
        for id in 0..self.clauses.len() {
            if self.kind[id] != Kind::Target && self.clauses[id].len() == 1 {
                let u = self.clauses[id].lits()[0];
                match self.lit_val(u) {
                    0 => self.assign(u, Some(id)),
                    -1 => return Some(conflict(self, id)),
                    _ => {}
                }
            }
        }
        if let Some(c) = self.bcp(0, false, 0) {
            return Some(conflict(self, c));
        }
        for &d in decisions {
            match self.lit_val(d) {
                1 => continue,
                -1 => {
                    // Already implied the other way.
                    let mut cond = self.cone([d.var()]);
                    cond.push(d);
                    cond.sort();
                    return Some(cond);
                }
                _ => {}
            }
            let at = self.trail.len();
            self.assign(d, None);
            if let Some(c) = self.bcp(at, false, 0) {
                return Some(conflict(self, c));
            }
        }
        self.phase1 = self.trail.len();
        None
    }

    /// Decision literals a trail variable depends on.
    fn cone(&self, vars: impl IntoIterator<Item = Var>) -> Vec<Lit> {
        let mut seen = vec![false; self.n];
        let mut stack: Vec<Var> = vars.into_iter().collect();
        let mut out = Vec::new();
        while let Some(v) = stack.pop() {
            if seen[v as usize] || self.val[v as usize] == 0 {
                continue;
            }
            seen[v as usize] = true;
            match self.reason[v as usize] {
                None => out.push(Lit::new(v, self.val[v as usize] > 0)),
                Some(r) => stack.extend(self.clauses[r].vars().filter(|&u| u != v)),
            }
        }
        out.sort();
        out
    }

    /// Trivial-redundancy rules on the phase-1 trail.
    fn rules(&self, t: usize) -> Option<Vec<Lit>> {
        let id = self.target_ids[&t];
        let c = &self.clauses[id];
        // Satisfied, possibly by a propagated quantified literal.
        if let Some(l) = c.lits().iter().find(|&&l| self.lit_val(l) == 1) {
            return Some(self.cone([l.var()]));
        }
        // Subsumed by a non-target clause in the current subspace.
        let free: Vec<Lit> = c.lits().iter().copied().filter(|&l| self.lit_val(l) == 0).collect();
        if let Some(&l0) = free.first() {
            for &d in &self.occ[code(l0)] {
                if self.kind[d] == Kind::Target {
                    continue;
                }
                let dl = self.clauses[d].lits();
                if dl.iter().all(|&x| self.lit_val(x) == -1 || c.contains(x)) {
                    return Some(self.cone(
                        dl.iter().filter(|&&x| self.lit_val(x) == -1).map(|x| x.var()),
                    ));
                }
            }
        }
        // Blocked on an unassigned quantified variable.
        'pivot: for &y in free.iter().filter(|l| self.is_w[l.var() as usize]) {
            let mut used = Vec::new();
            for &d in &self.occ[code(!y)] {
                if d == id {
                    continue;
                }
                let dl = self.clauses[d].lits();
                if dl.iter().any(|&x| x != !y && c.contains(!x)) {
                    continue;
                }
                match dl.iter().find(|&&x| self.lit_val(x) == 1) {
                    Some(x) => used.push(x.var()),
                    None => continue 'pivot,
                }
            }
            return Some(self.cone(used));
        }
        None
    }

    /// Resolves a phase-2 conflict down to phase-1 free literals.
    fn derive(&self, confl: usize) -> (Vec<Lit>, bool) {
        let pos: BTreeMap<Var, usize> = self
            .trail
            .iter()
            .enumerate()
            .map(|(i, l)| (l.var(), i))
            .collect();
        let mut mark = vec![false; self.n];
        let mut tainted = self.tainted(confl);
        for v in self.clauses[confl].vars() {
            mark[v as usize] = true;
        }
        let mut out = Vec::new();
        for i in (0..self.trail.len()).rev() {
            let l = self.trail[i];
            let v = l.var() as usize;
            if !mark[v] {
                continue;
            }
            if self.is_w[v] || i >= self.phase1 {
                let r = self.reason[v].expect("quantified and phase-2 literals are implied");
                tainted |= self.tainted(r);
                for u in self.clauses[r].vars() {
                    if pos.contains_key(&u) {
                        mark[u as usize] = true;
                    }
                }
            } else {
                out.push(!l);
            }
        }
        (out, tainted)
    }

    fn count_sat(&mut self) {
        self.stats.sat_calls += 1;
    }

    /// Adds a clause implied by the current formula. Taint is recomputed: a clause
    /// the non-target part already implies is noise.
    fn learn(&mut self, k: Vec<Lit>, tainted: bool) -> Result<Vec<Lit>, Abort> {
        let assumps = negate(&k);
        self.count_sat();
        let (core, tainted) = match self.s_n.solve(&assumps) {
            SatStatus::Unsat => (self.s_n.core().to_vec(), false),
            SatStatus::Unknown => return Err(Abort::Budget),
            SatStatus::Sat => {
                debug_assert!(tainted);
                self.count_sat();
                match self.s_f.solve(&assumps) {
                    SatStatus::Unsat => (self.s_f.core().to_vec(), true),
                    _ => return Err(Abort::Budget),
                }
            }
        };
        let core = if self.opts.minimize {
            let s = if tainted { &mut self.s_f } else { &mut self.s_n };
            self.stats.sat_calls += core.len() as u64;
            let mut core = shrink_core(s, &core).map_err(|_| Abort::Budget)?;
            if core.len() > self.opts.narrow && self.opts.narrow > 0 {
                let pool: Vec<Lit> = self
                    .trail
                    .iter()
                    .copied()
                    .filter(|l| !self.is_w[l.var() as usize])
                    .collect();
                let found = smallest_core(
                    s,
                    &pool,
                    self.opts.narrow,
                    NARROW_CALLS,
                    &mut self.stats.sat_calls,
                );
                if let Some(c) = found.map_err(|_| Abort::Budget)? {
                    core = c;
                }
            }
            core
        } else {
            core
        };
        let k = negate(&core);
        let clause = Clause::new(k.clone()).unwrap_or_else(Clause::empty);
        let id = self.insert(clause, Kind::Learned { tainted });
        if tainted {
            self.astar.push(id);
            self.stats.resolvents += 1;
            if self.stop_at_first {
                return Err(Abort::Found);
            }
        } else {
            self.stats.noise_clauses += 1;
        }
        Ok(k)
    }

    fn check(&mut self, point: &[Lit]) -> Result<Check, Abort> {
        self.count_sat();
        match self.s_f.solve(point) {
            SatStatus::Sat => {
                let m = self.s_f.model();
                Ok(Check::Sat(m))
            }
            SatStatus::Unknown => Err(Abort::Budget),
            SatStatus::Unsat => {
                let core = self.s_f.core().to_vec();
                let k = self.learn(negate(&core), true)?;
                Ok(Check::Vacuous(k))
            }
        }
    }

    fn pick(&self, open: &[usize]) -> Option<Var> {
        let mut score = vec![0u64; self.n];
        for &t in open {
            for w in self.clauses[self.target_ids[&t]].vars() {
                if self.is_w[w as usize] {
                    for &u in &self.w_nbrs[w as usize] {
                        score[u as usize] += 4;
                    }
                }
            }
        }
        self.vs
            .iter()
            .copied()
            .filter(|&v| self.val[v as usize] == 0)
            .max_by_key(|&v| {
                (
                    score[v as usize] + self.bonus[v as usize] as u64,
                    std::cmp::Reverse(v),
                )
            })
    }

    fn node(&mut self, decisions: &mut Vec<Lit>, todo: Vec<usize>) -> Result<Proofs, Abort> {
        self.stats.nodes += 1;
        if self.stats.nodes > self.opts.limits.steps {
            return Err(Abort::Budget);
        }
        if let Some(cond) = self.propagate(decisions) {
            self.stats.dsequents += todo.len() as u64;
            return Ok(todo.into_iter().map(|t| (t, cond.clone())).collect());
        }
        let mut out = Vec::new();
        let mut open = Vec::new();
        for t in todo {
            match self.rules(t) {
                Some(cond) => out.push((t, cond)),
                None => open.push(t),
            }
        }
        self.stats.dsequents += out.len() as u64;
        if open.is_empty() {
            return Ok(out);
        }
        let vacuous = |e: &mut Self, k: &[Lit], open: Vec<usize>, out: &mut Proofs| {
            let cond = e.cone(k.iter().map(|l| l.var()));
            e.stats.dsequents += open.len() as u64;
            out.extend(open.into_iter().map(|t| (t, cond.clone())));
        };

        let p1 = self.trail.len();
        let conflict = self.bcp(0, true, p1);
        if let Some(confl) = conflict {
            let (k, tainted) = self.derive(confl);
            self.undo_to(p1);
            let k = self.learn(k, tainted)?;
            vacuous(self, &k, open, &mut out);
            return Ok(out);
        }
        self.undo_to(p1);

        let point: Vec<Lit> = self
            .trail
            .iter()
            .copied()
            .filter(|l| !self.is_w[l.var() as usize])
            .collect();
        let leaf = self.vs.iter().all(|&v| self.val[v as usize] != 0);
        let mut model = None;
        if leaf || self.opts.node_checks {
            match self.check(&point)? {
                Check::Vacuous(k) => {
                    vacuous(self, &k, open, &mut out);
                    return Ok(out);
                }
                Check::Sat(_) if leaf => {
                    let mut cond = decisions.clone();
                    cond.sort();
                    self.stats.dsequents += open.len() as u64;
                    out.extend(open.into_iter().map(|t| (t, cond.clone())));
                    return Ok(out);
                }
                Check::Sat(m) => model = Some(m),
            }
        }
        let Some(u) = self.pick(&open) else {
            unreachable!("non-leaf node without an open free variable");
        };
        let first = Lit::new(u, model.as_ref().is_some_and(|m| m[u as usize]));
        self.stats.branches += 1;

        decisions.push(first);
        let r0 = self.node(decisions, open)?;
        decisions.pop();
        let mut stash = BTreeMap::new();
        for (t, c) in r0 {
            if c.iter().any(|l| l.var() == u) {
                stash.insert(t, c);
            } else {
                out.push((t, c));
            }
        }
        if stash.is_empty() {
            return Ok(out);
        }
        decisions.push(!first);
        let r1 = self.node(decisions, stash.keys().copied().collect())?;
        decisions.pop();
        for (t, c1) in r1 {
            if !c1.iter().any(|l| l.var() == u) {
                out.push((t, c1));
                continue;
            }
            let c0 = &stash[&t];
            let (d0, d1) = if first.is_positive() {
                (DSequent::new(c1, t), DSequent::new(c0.clone(), t))
            } else {
                (DSequent::new(c0.clone(), t), DSequent::new(c1, t))
            };
            let j = join_dsequents(&d0, &d1, u).expect("branch conditions are consistent");
            self.stats.dsequents += 1;
            out.push((t, j.condition));
        }
        Ok(out)
    }
}
