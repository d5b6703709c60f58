// SPDX-License-Identifier: Apache-2.0
//! A CDCL solver: first-UIP learning, two watched literals, VSIDS, Luby restarts
//! and an assumption interface with failed-assumption cores.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cnf::{Clause, CnfFormula, Lit, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SatStatus {
    Sat,
    Unsat,
    /// Conflict budget exhausted.
    Unknown,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SatStats {
    pub decisions: u64,
    pub conflicts: u64,
    pub propagations: u64,
    pub restarts: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SatResult {
    pub status: SatStatus,
    /// Value of variables `1..=num_vars`, index 0 unused.
    pub model: Option<Vec<bool>>,
    /// Failed assumptions when UNSAT.
    pub core: Vec<Lit>,
    pub stats: SatStats,
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        self.status == SatStatus::Sat
    }

    pub fn is_unsat(&self) -> bool {
        self.status == SatStatus::Unsat
    }
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub seed: u64,
    pub var_decay: f64,
    pub clause_decay: f64,
    pub restart_base: u64,
    pub random_freq: f64,
    pub conflict_limit: Option<u64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            seed: 0,
            var_decay: 0.95,
            clause_decay: 0.999,
            restart_base: 100,
            random_freq: 0.0,
            conflict_limit: None,
        }
    }
}

// Internal literal code: 2 * (var - 1) + negated.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
struct L(u32);

impl L {
    fn from_lit(l: Lit) -> L {
        L(2 * (l.var() - 1) + (!l.is_positive()) as u32)
    }
    fn to_lit(self) -> Lit {
        Lit::new(self.var() + 1, self.0 & 1 == 0)
    }
    fn var(self) -> u32 {
        self.0 >> 1
    }
    fn neg(self) -> L {
        L(self.0 ^ 1)
    }
    fn idx(self) -> usize {
        self.0 as usize
    }
}

const UNDEF: u8 = 2;
const NO_REASON: u32 = u32::MAX;

struct ClauseData {
    lits: Vec<L>,
    learnt: bool,
    activity: f64,
    deleted: bool,
}

/// Activity-ordered binary heap over variables.
struct VarHeap {
    heap: Vec<u32>,
    pos: Vec<i32>,
}

impl VarHeap {
    fn new() -> Self {
        VarHeap {
            heap: Vec::new(),
            pos: Vec::new(),
        }
    }
    fn grow(&mut self, n: usize) {
        self.pos.resize(n, -1);
    }
    fn contains(&self, v: u32) -> bool {
        self.pos[v as usize] >= 0
    }
    fn less(act: &[f64], a: u32, b: u32) -> bool {
        let (x, y) = (act[a as usize], act[b as usize]);
        x > y || (x == y && a < b)
    }
    fn up(&mut self, mut i: usize, act: &[f64]) {
        let v = self.heap[i];
        while i > 0 {
            let p = (i - 1) / 2;
            if !Self::less(act, v, self.heap[p]) {
                break;
            }
            self.heap[i] = self.heap[p];
            self.pos[self.heap[i] as usize] = i as i32;
            i = p;
        }
        self.heap[i] = v;
        self.pos[v as usize] = i as i32;
    }
    fn down(&mut self, mut i: usize, act: &[f64]) {
        let v = self.heap[i];
        loop {
            let l = 2 * i + 1;
            if l >= self.heap.len() {
                break;
            }
            let r = l + 1;
            let c = if r < self.heap.len() && Self::less(act, self.heap[r], self.heap[l]) {
                r
            } else {
                l
            };
            if !Self::less(act, self.heap[c], v) {
                break;
            }
            self.heap[i] = self.heap[c];
            self.pos[self.heap[i] as usize] = i as i32;
            i = c;
        }
        self.heap[i] = v;
        self.pos[v as usize] = i as i32;
    }
    fn insert(&mut self, v: u32, act: &[f64]) {
        if self.contains(v) {
            return;
        }
        self.heap.push(v);
        let i = self.heap.len() - 1;
        self.pos[v as usize] = i as i32;
        self.up(i, act);
    }
    fn bumped(&mut self, v: u32, act: &[f64]) {
        if self.contains(v) {
            let i = self.pos[v as usize] as usize;
            self.up(i, act);
        }
    }
    fn pop(&mut self, act: &[f64]) -> Option<u32> {
        if self.heap.is_empty() {
            return None;
        }
        let top = self.heap[0];
        let last = self.heap.pop().unwrap();
        self.pos[top as usize] = -1;
        if !self.heap.is_empty() {
            self.heap[0] = last;
            self.pos[last as usize] = 0;
            self.down(0, act);
        }
        Some(top)
    }
}

pub struct Solver {
    cfg: SolverConfig,
    num_vars: u32,
    clauses: Vec<ClauseData>,
    watches: Vec<Vec<u32>>,
    assigns: Vec<u8>,
    level: Vec<u32>,
    reason: Vec<u32>,
    trail: Vec<L>,
    trail_lim: Vec<usize>,
    qhead: usize,
    activity: Vec<f64>,
    var_inc: f64,
    cla_inc: f64,
    heap: VarHeap,
    phase: Vec<bool>,
    seen: Vec<bool>,
    ok: bool,
    rng: ChaCha8Rng,
    stats: SatStats,
    num_learnt: usize,
    max_learnt: f64,
    model: Vec<bool>,
    core: Vec<Lit>,
}

impl Solver {
    pub fn new(num_vars: u32) -> Solver {
        Solver::with_config(num_vars, SolverConfig::default())
    }

    pub fn with_config(num_vars: u32, cfg: SolverConfig) -> Solver {
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut s = Solver {
            cfg,
            num_vars: 0,
            clauses: Vec::new(),
            watches: Vec::new(),
            assigns: Vec::new(),
            level: Vec::new(),
            reason: Vec::new(),
            trail: Vec::new(),
            trail_lim: Vec::new(),
            qhead: 0,
            activity: Vec::new(),
            var_inc: 1.0,
            cla_inc: 1.0,
            heap: VarHeap::new(),
            phase: Vec::new(),
            seen: Vec::new(),
            ok: true,
            rng,
            stats: SatStats::default(),
            num_learnt: 0,
            max_learnt: 0.0,
            model: Vec::new(),
            core: Vec::new(),
        };
        s.reserve_vars(num_vars);
        s
    }

    pub fn from_formula(f: &CnfFormula) -> Solver {
        Solver::from_formula_with(f, SolverConfig::default())
    }

    pub fn from_formula_with(f: &CnfFormula, cfg: SolverConfig) -> Solver {
        let mut s = Solver::with_config(f.num_vars, cfg);
        for c in &f.clauses {
            s.add_clause(c.lits());
        }
        s
    }

    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    pub fn stats(&self) -> SatStats {
        self.stats
    }

    pub fn set_conflict_limit(&mut self, limit: Option<u64>) {
        self.cfg.conflict_limit = limit;
    }

    /// Makes variables up to `n` available.
    pub fn reserve_vars(&mut self, n: u32) {
        if n <= self.num_vars {
            return;
        }
        let n_us = n as usize;
        self.watches.resize_with(2 * n_us, Vec::new);
        self.assigns.resize(n_us, UNDEF);
        self.level.resize(n_us, 0);
        self.reason.resize(n_us, NO_REASON);
        self.activity.resize(n_us, 0.0);
        self.phase.resize(n_us, false);
        self.seen.resize(n_us, false);
        self.heap.grow(n_us);
        for v in self.num_vars..n {
            self.heap.insert(v, &self.activity);
        }
        self.num_vars = n;
    }

    fn value(&self, l: L) -> u8 {
        let a = self.assigns[l.var() as usize];
        if a == UNDEF {
            UNDEF
        } else {
            a ^ (l.0 & 1) as u8
        }
    }

    fn decision_level(&self) -> u32 {
        self.trail_lim.len() as u32
    }

    /// Adds a clause at the root. Returns false once the formula is known UNSAT.
    pub fn add_clause(&mut self, lits: &[Lit]) -> bool {
        if !self.ok {
            return false;
        }
        self.cancel_until(0);
        if let Some(m) = lits.iter().map(|l| l.var()).max() {
            self.reserve_vars(m);
        }
        let mut ls: Vec<L> = lits.iter().map(|&l| L::from_lit(l)).collect();
        ls.sort_by_key(|l| l.0);
        ls.dedup();
        let mut out = Vec::with_capacity(ls.len());
        for (i, &l) in ls.iter().enumerate() {
            if i + 1 < ls.len() && ls[i + 1] == l.neg() {
                return true;
            }
            match self.value(l) {
                1 => return true,
                0 => {}
                _ => out.push(l),
            }
        }
        match out.len() {
            0 => {
                self.ok = false;
                false
            }
            1 => {
                self.enqueue(out[0], NO_REASON);
                if self.propagate().is_some() {
                    self.ok = false;
                }
                self.ok
            }
            _ => {
                self.attach(out, false);
                true
            }
        }
    }

    fn attach(&mut self, lits: Vec<L>, learnt: bool) -> u32 {
        let id = self.clauses.len() as u32;
        self.watches[lits[0].neg().idx()].push(id);
        self.watches[lits[1].neg().idx()].push(id);
        if learnt {
            self.num_learnt += 1;
        }
        self.clauses.push(ClauseData {
            lits,
            learnt,
            activity: 0.0,
            deleted: false,
        });
        id
    }

    fn enqueue(&mut self, l: L, reason: u32) {
        let v = l.var() as usize;
        self.assigns[v] = (l.0 & 1 == 0) as u8;
        self.level[v] = self.decision_level();
        self.reason[v] = reason;
        self.trail.push(l);
    }

    fn propagate(&mut self) -> Option<u32> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            self.stats.propagations += 1;
            let false_lit = p.neg();
            let mut ws = std::mem::take(&mut self.watches[p.idx()]);
            let mut i = 0;
            let mut j = 0;
            let mut conflict = None;
            while i < ws.len() {
                let cid = ws[i];
                i += 1;
                let c = &mut self.clauses[cid as usize];
                if c.deleted {
                    continue;
                }
                if c.lits[0] == false_lit {
                    c.lits.swap(0, 1);
                }
                let first = c.lits[0];
                let fv = {
                    let a = self.assigns[first.var() as usize];
                    if a == UNDEF {
                        UNDEF
                    } else {
                        a ^ (first.0 & 1) as u8
                    }
                };
                if fv == 1 {
                    ws[j] = cid;
                    j += 1;
                    continue;
                }
                let mut found = false;
                for k in 2..c.lits.len() {
                    let l = c.lits[k];
                    let a = self.assigns[l.var() as usize];
                    let lv = if a == UNDEF { UNDEF } else { a ^ (l.0 & 1) as u8 };
                    if lv != 0 {
                        c.lits.swap(1, k);
                        let w = c.lits[1].neg().idx();
                        self.watches[w].push(cid);
                        found = true;
                        break;
                    }
                }
                if found {
                    continue;
                }
                ws[j] = cid;
                j += 1;
                if fv == 0 {
                    conflict = Some(cid);
                    while i < ws.len() {
                        ws[j] = ws[i];
                        j += 1;
                        i += 1;
                    }
                } else {
                    self.enqueue(first, cid);
                }
            }
            ws.truncate(j);
            let back = std::mem::replace(&mut self.watches[p.idx()], ws);
            self.watches[p.idx()].extend(back);
            if conflict.is_some() {
                self.qhead = self.trail.len();
                return conflict;
            }
        }
        None
    }

    fn cancel_until(&mut self, lvl: u32) {
        if self.decision_level() <= lvl {
            return;
        }
        let start = self.trail_lim[lvl as usize];
        for k in (start..self.trail.len()).rev() {
            let l = self.trail[k];
            let v = l.var() as usize;
            self.phase[v] = l.0 & 1 == 0;
            self.assigns[v] = UNDEF;
            self.reason[v] = NO_REASON;
            self.heap.insert(v as u32, &self.activity);
        }
        self.trail.truncate(start);
        self.trail_lim.truncate(lvl as usize);
        self.qhead = start;
    }

    fn bump_var(&mut self, v: u32) {
        let a = &mut self.activity[v as usize];
        *a += self.var_inc;
        if *a > 1e100 {
            for x in self.activity.iter_mut() {
                *x *= 1e-100;
            }
            self.var_inc *= 1e-100;
        }
        self.heap.bumped(v, &self.activity);
    }

    fn bump_clause(&mut self, cid: u32) {
        let c = &mut self.clauses[cid as usize];
        if !c.learnt {
            return;
        }
        c.activity += self.cla_inc;
        if c.activity > 1e20 {
            for c in self.clauses.iter_mut().filter(|c| c.learnt) {
                c.activity *= 1e-20;
            }
            self.cla_inc *= 1e-20;
        }
    }

    fn analyze(&mut self, mut confl: u32) -> (Vec<L>, u32) {
        let mut learnt = vec![L(0)];
        let mut path = 0;
        let mut p: Option<L> = None;
        let mut idx = self.trail.len();
        let dl = self.decision_level();
        loop {
            self.bump_clause(confl);
            let lits = self.clauses[confl as usize].lits.clone();
            let skip = usize::from(p.is_some());
            for &q in &lits[skip..] {
                let v = q.var() as usize;
                if !self.seen[v] && self.level[v] > 0 {
                    self.seen[v] = true;
                    self.bump_var(q.var());
                    if self.level[v] >= dl {
                        path += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            loop {
                idx -= 1;
                if self.seen[self.trail[idx].var() as usize] {
                    break;
                }
            }
            let pl = self.trail[idx];
            p = Some(pl);
            self.seen[pl.var() as usize] = false;
            path -= 1;
            if path == 0 {
                break;
            }
            confl = self.reason[pl.var() as usize];
        }
        learnt[0] = p.unwrap().neg();
        // Drop literals implied by the rest of the clause.
        let keep: Vec<bool> = learnt
            .iter()
            .enumerate()
            .map(|(i, &l)| i == 0 || !self.redundant(l))
            .collect();
        for &l in &learnt[1..] {
            self.seen[l.var() as usize] = false;
        }
        let mut out: Vec<L> = learnt
            .into_iter()
            .zip(keep)
            .filter(|(_, k)| *k)
            .map(|(l, _)| l)
            .collect();
        let mut bt = 0;
        if out.len() > 1 {
            let mut mi = 1;
            for i in 2..out.len() {
                if self.level[out[i].var() as usize] > self.level[out[mi].var() as usize] {
                    mi = i;
                }
            }
            out.swap(1, mi);
            bt = self.level[out[1].var() as usize];
        }
        (out, bt)
    }

    // A literal whose reason clause only has seen literals is implied by the learnt clause.
    fn redundant(&self, l: L) -> bool {
        let r = self.reason[l.var() as usize];
        if r == NO_REASON {
            return false;
        }
        self.clauses[r as usize].lits[1..].iter().all(|q| {
            let v = q.var() as usize;
            self.seen[v] || self.level[v] == 0
        })
    }

    fn analyze_final(&mut self, p: L, assumptions: &[L]) -> Vec<Lit> {
        let mut core = vec![p.neg().to_lit()];
        if self.decision_level() == 0 {
            return core;
        }
        self.seen[p.var() as usize] = true;
        let start = self.trail_lim[0];
        for k in (start..self.trail.len()).rev() {
            let x = self.trail[k];
            let v = x.var() as usize;
            if !self.seen[v] {
                continue;
            }
            let r = self.reason[v];
            if r == NO_REASON {
                if self.level[v] > 0 && assumptions.contains(&x) {
                    core.push(x.to_lit());
                }
            } else {
                for &q in &self.clauses[r as usize].lits[1..] {
                    if self.level[q.var() as usize] > 0 {
                        self.seen[q.var() as usize] = true;
                    }
                }
            }
            self.seen[v] = false;
        }
        self.seen[p.var() as usize] = false;
        core.sort_by_key(|l| (l.var(), !l.is_positive()));
        core.dedup();
        core
    }

    fn reduce_db(&mut self) {
        let mut cand: Vec<u32> = (0..self.clauses.len() as u32)
            .filter(|&i| {
                let c = &self.clauses[i as usize];
                c.learnt && !c.deleted && c.lits.len() > 2
            })
            .collect();
        cand.sort_by(|&a, &b| {
            self.clauses[a as usize]
                .activity
                .partial_cmp(&self.clauses[b as usize].activity)
                .unwrap()
                .then(a.cmp(&b))
        });
        let locked = |s: &Solver, cid: u32| {
            let l0 = s.clauses[cid as usize].lits[0];
            let v = l0.var() as usize;
            s.reason[v] == cid && s.value(l0) == 1
        };
        for &cid in cand.iter().take(cand.len() / 2) {
            if !locked(self, cid) {
                self.clauses[cid as usize].deleted = true;
                self.clauses[cid as usize].lits.clear();
                self.num_learnt -= 1;
            }
        }
        for w in self.watches.iter_mut() {
            w.retain(|&c| !self.clauses[c as usize].deleted);
        }
    }

    fn luby(mut i: u64) -> u64 {
        // Position in the Luby sequence 1 1 2 1 1 2 4 ...
        let mut size = 1u64;
        let mut seq = 0u32;
        while size < i + 1 {
            seq += 1;
            size = 2 * size + 1;
        }
        while size - 1 != i {
            size = (size - 1) >> 1;
            seq -= 1;
            i %= size;
        }
        1 << seq
    }

    fn pick_branch(&mut self) -> Option<L> {
        if self.cfg.random_freq > 0.0
            && !self.heap.heap.is_empty()
            && self.rng.gen::<f64>() < self.cfg.random_freq
        {
            let k = self.rng.gen_range(0..self.heap.heap.len());
            let v = self.heap.heap[k];
            if self.assigns[v as usize] == UNDEF {
                return Some(L(2 * v + (!self.phase[v as usize]) as u32));
            }
        }
        while let Some(v) = self.heap.pop(&self.activity) {
            if self.assigns[v as usize] == UNDEF {
                return Some(L(2 * v + (!self.phase[v as usize]) as u32));
            }
        }
        None
    }

    /// Solves under assumptions. The solver stays usable afterwards.
    pub fn solve(&mut self, assumptions: &[Lit]) -> SatStatus {
        self.core.clear();
        self.model.clear();
        if !self.ok {
            return SatStatus::Unsat;
        }
        if let Some(m) = assumptions.iter().map(|l| l.var()).max() {
            self.reserve_vars(m);
        }
        let assumps: Vec<L> = assumptions.iter().map(|&l| L::from_lit(l)).collect();
        self.cancel_until(0);
        if self.propagate().is_some() {
            self.ok = false;
            return SatStatus::Unsat;
        }
        self.max_learnt = (self.clauses.len() as f64 / 3.0).max(2000.0);
        let start_conflicts = self.stats.conflicts;
        let mut restart_round = 0u64;
        loop {
            let budget = Self::luby(restart_round) * self.cfg.restart_base;
            let mut local = 0u64;
            loop {
                if let Some(confl) = self.propagate() {
                    self.stats.conflicts += 1;
                    local += 1;
                    if self.decision_level() == 0 {
                        self.ok = false;
                        return SatStatus::Unsat;
                    }
                    let (learnt, bt) = self.analyze(confl);
                    self.cancel_until(bt);
                    if learnt.len() == 1 {
                        self.enqueue(learnt[0], NO_REASON);
                    } else {
                        let l0 = learnt[0];
                        let cid = self.attach(learnt, true);
                        self.bump_clause(cid);
                        self.enqueue(l0, cid);
                    }
                    self.var_inc /= self.cfg.var_decay;
                    self.cla_inc /= self.cfg.clause_decay;
                    continue;
                }
                if let Some(lim) = self.cfg.conflict_limit {
                    if self.stats.conflicts - start_conflicts >= lim {
                        self.cancel_until(0);
                        return SatStatus::Unknown;
                    }
                }
                if local >= budget {
                    self.stats.restarts += 1;
                    self.cancel_until(0);
                    break;
                }
                if self.num_learnt as f64 >= self.max_learnt + self.trail.len() as f64 {
                    self.reduce_db();
                    self.max_learnt *= 1.1;
                }
                // Assumptions first, one decision level each.
                let mut next = None;
                while (self.decision_level() as usize) < assumps.len() {
                    let a = assumps[self.decision_level() as usize];
                    match self.value(a) {
                        1 => self.trail_lim.push(self.trail.len()),
                        0 => {
                            self.core = self.analyze_final(a.neg(), &assumps);
                            self.cancel_until(0);
                            return SatStatus::Unsat;
                        }
                        _ => {
                            next = Some(a);
                            break;
                        }
                    }
                }
                let lit = match next {
                    Some(a) => a,
                    None => match self.pick_branch() {
                        Some(l) => {
                            self.stats.decisions += 1;
                            l
                        }
                        None => {
                            self.model = (0..self.num_vars as usize)
                                .map(|v| self.assigns[v] == 1)
                                .collect();
                            self.cancel_until(0);
                            return SatStatus::Sat;
                        }
                    },
                };
                self.trail_lim.push(self.trail.len());
                self.enqueue(lit, NO_REASON);
            }
            restart_round += 1;
        }
    }

    /// Value of `v` in the last model.
    pub fn model_value(&self, v: Var) -> bool {
        self.model.get((v - 1) as usize).copied().unwrap_or(false)
    }

    /// Last model with index 0 unused.
    pub fn model(&self) -> Vec<bool> {
        let mut m = vec![false];
        m.extend_from_slice(&self.model);
        m
    }

    /// Failed assumptions of the last UNSAT call; empty when the clauses alone are UNSAT.
    pub fn core(&self) -> &[Lit] {
        &self.core
    }
}

/// One-shot solve.
pub fn solve(f: &CnfFormula, assumptions: &[Lit]) -> SatResult {
    solve_with(f, assumptions, SolverConfig::default())
}

pub fn solve_with(f: &CnfFormula, assumptions: &[Lit], cfg: SolverConfig) -> SatResult {
    let mut s = Solver::from_formula_with(f, cfg);
    let status = s.solve(assumptions);
    let model = (status == SatStatus::Sat).then(|| s.model());
    SatResult {
        status,
        model,
        core: s.core().to_vec(),
        stats: s.stats(),
    }
}

/// `f ⊨ c`, i.e. `f ∧ ¬c` is UNSAT.
pub fn implies(f: &CnfFormula, c: &Clause) -> bool {
    let assumptions: Vec<Lit> = c.lits().iter().map(|&l| !l).collect();
    solve(f, &assumptions).is_unsat()
}
