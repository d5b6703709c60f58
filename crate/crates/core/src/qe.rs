// SPDX-License-Identifier: Apache-2.0
//! Complete quantifier elimination by counterexample-guided enumeration.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::cnf::{Clause, CnfError, CnfFormula, Lit, Miter, Var};
use crate::netlist::Netlist;
use crate::sat::{SatStatus, Solver, SolverConfig};
use crate::Limits;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QeError {
    #[error("step budget of {0} exhausted")]
    Budget(u64),
    #[error("cut index {0} out of range (circuit has {1} levels)")]
    CutRange(usize, usize),
    #[error(transparent)]
    Cnf(#[from] CnfError),
}

pub(crate) fn solver_for(f: &CnfFormula, limits: Limits) -> Solver {
    let cfg = SolverConfig {
        conflict_limit: limits.sat_conflicts,
        ..Default::default()
    };
    Solver::from_formula_with(f, cfg)
}

/// Shrinks an UNSAT assumption set by dropping literals one at a time.
pub(crate) fn shrink_core(s: &mut Solver, core: &[Lit]) -> Result<Vec<Lit>, SatStatus> {
    let mut core = core.to_vec();
    let mut i = 0;
    while i < core.len() {
        let mut trial = core.clone();
        trial.remove(i);
        match s.solve(&trial) {
            SatStatus::Unsat => {
                let c = s.core();
                core = if c.is_empty() { Vec::new() } else { c.to_vec() };
                core.sort_by_key(|l| (l.var(), !l.is_positive()));
                // Dropped entries before `i` stay dropped; recheck position `i`.
                i = i.min(core.len());
            }
            SatStatus::Sat => i += 1,
            SatStatus::Unknown => return Err(SatStatus::Unknown),
        }
    }
    Ok(core)
}

/// Smallest subset of `pool` (at most `max` literals) that is UNSAT as assumptions.
/// Models of failed candidates prune the rest: an UNSAT subset must contain a pool
/// literal each such model falsifies. Gives up with `None` after `budget` SAT calls;
/// `calls` is incremented per call made.
pub(crate) fn smallest_core(
    s: &mut Solver,
    pool: &[Lit],
    max: usize,
    budget: u64,
    calls: &mut u64,
) -> Result<Option<Vec<Lit>>, SatStatus> {
    let mut search = SubsetSearch {
        s,
        pool,
        refuted: Vec::new(),
        calls: 0,
        budget,
    };
    let mut result = Ok(None);
    for size in 1..=max.min(pool.len()) {
        let mut chosen = Vec::with_capacity(size);
        match search.extend(0, size, &mut chosen) {
            Ok(Found::No) => continue,
            Ok(Found::Yes(c)) => result = Ok(Some(c)),
            Ok(Found::Exhausted) => {}
            Err(e) => result = Err(e),
        }
        break;
    }
    *calls += search.calls;
    result
}

enum Found {
    Yes(Vec<Lit>),
    No,
    Exhausted,
}

struct SubsetSearch<'a> {
    s: &'a mut Solver,
    pool: &'a [Lit],
    /// Per failed model, which pool literals it falsifies.
    refuted: Vec<Vec<bool>>,
    calls: u64,
    budget: u64,
}

impl SubsetSearch<'_> {
    fn hits_all(&self, chosen: &[usize]) -> bool {
        self.refuted.iter().all(|r| chosen.iter().any(|&i| r[i]))
    }

    fn extend(&mut self, start: usize, size: usize, chosen: &mut Vec<usize>) -> Result<Found, SatStatus> {
        if chosen.len() == size {
            if !self.hits_all(chosen) {
                return Ok(Found::No);
            }
            if self.calls >= self.budget {
                return Ok(Found::Exhausted);
            }
            self.calls += 1;
            let lits: Vec<Lit> = chosen.iter().map(|&i| self.pool[i]).collect();
            return match self.s.solve(&lits) {
                SatStatus::Unsat => Ok(Found::Yes(lits)),
                SatStatus::Sat => {
                    let row = self.pool.iter().map(|&l| !l.holds(self.s.model_value(l.var()))).collect();
                    self.refuted.push(row);
                    Ok(Found::No)
                }
                SatStatus::Unknown => Err(SatStatus::Unknown),
            };
        }
        let need = size - chosen.len();
        for i in start..=self.pool.len() - need {
            chosen.push(i);
            // With one slot left, every refuting model not yet hit must be hit by it.
            let viable = need > 1 || self.hits_all(chosen);
            let r = if viable { self.extend(i + 1, size, chosen)? } else { Found::No };
            chosen.pop();
            match r {
                Found::No => {}
                other => return Ok(other),
            }
        }
        Ok(Found::No)
    }
}

/// `∃W[f]` as a CNF over the remaining variables of `f`.
pub fn eliminate(f: &CnfFormula, w: &BTreeSet<Var>) -> Result<CnfFormula, QeError> {
    eliminate_with(f, w, Limits::default())
}

pub fn eliminate_with(
    f: &CnfFormula,
    w: &BTreeSet<Var>,
    limits: Limits,
) -> Result<CnfFormula, QeError> {
    let vs: Vec<Var> = f.vars().into_iter().filter(|v| !w.contains(v)).collect();
    project(f, &vs, limits)
}

/// Computes `R(vs) ≡ ∃(vars(f) \ vs)[f]`, clauses sorted.
pub fn project(f: &CnfFormula, vs: &[Var], limits: Limits) -> Result<CnfFormula, QeError> {
    let mut s2 = solver_for(f, limits);
    let mut s1 = Solver::new(f.num_vars);
    let mut r = CnfFormula::new(f.num_vars);
    let mut steps = 0u64;
    loop {
        steps += 1;
        if steps > limits.steps {
            return Err(QeError::Budget(limits.steps));
        }
        if s1.solve(&[]) != SatStatus::Sat {
            break;
        }
        let point: Vec<Lit> = vs.iter().map(|&v| Lit::new(v, s1.model_value(v))).collect();
        match s2.solve(&point) {
            SatStatus::Sat => {
                let block: Vec<Lit> = point.iter().map(|&l| !l).collect();
                s1.add_clause(&block);
            }
            SatStatus::Unsat => {
                let raw = s2.core().to_vec();
                let core = shrink_core(&mut s2, &raw)
                    .map_err(|_| QeError::Budget(limits.steps))?;
                let lits: Vec<Lit> = core.iter().map(|&l| !l).collect();
                s1.add_clause(&lits);
                if let Some(c) = Clause::new(lits) {
                    r.push(c);
                } else {
                    r.push(Clause::empty());
                }
                if core.is_empty() {
                    break;
                }
            }
            SatStatus::Unknown => return Err(QeError::Budget(limits.steps)),
        }
    }
    r.sort_clauses();
    for v in vs {
        if let Some(n) = f.names.get(v) {
            r.names.insert(*v, n.clone());
        }
    }
    Ok(r)
}

/// `∃W[EQ ∧ F_M]` for the sub-circuits below `Cut_i`, with `W` everything off the cut.
pub fn cut_image(n1: &Netlist, n2: &Netlist, cut_i: usize) -> Result<CnfFormula, QeError> {
    let m = Miter::new(n1, n2)?;
    cut_image_in(&m, cut_i, Limits::default())
}

pub fn cut_image_in(m: &Miter, cut_i: usize, limits: Limits) -> Result<CnfFormula, QeError> {
    if cut_i > m.levels() {
        return Err(QeError::CutRange(cut_i, m.levels()));
    }
    let f = CnfFormula::conjoin(&[&m.f.eq, &m.below(cut_i)]);
    let mut f = f;
    f.names = m.f.g_rlx.names.clone();
    project(&f, m.cut_vars(cut_i), limits)
}
