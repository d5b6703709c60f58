// SPDX-License-Identifier: Apache-2.0
//! Relaxation of arbitrary CNF splits, interpolants from partial elimination, and the
//! replacing-versus-separating comparison on miters.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnf::{eq_formula, Clause, CnfFormula, Lit, Miter, Var};
use crate::pqe::{pqe_solve_with, verify_pqe_with, PqeError, PqeOptions, PqeProblem};
use crate::qe::{shrink_core, solver_for};
use crate::sat::{SatStatus, Solver};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RelaxError {
    #[error("budget exhausted")]
    Budget,
    #[error("A ∧ B is satisfiable; use the broken-implication path")]
    NotUnsat,
    #[error("invalid split: {0}")]
    Split(String),
    #[error(transparent)]
    Pqe(PqeError),
}

impl From<PqeError> for RelaxError {
    fn from(e: PqeError) -> Self {
        match e {
            PqeError::Budget(_) => RelaxError::Budget,
            e => RelaxError::Pqe(e),
        }
    }
}

/// `S = S_rlx ∧ E` with internal variables `X` and external variables `Z`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RelaxSplit {
    pub s: CnfFormula,
    /// Indices of the clauses of `s` that form `E`.
    pub e: BTreeSet<usize>,
    pub x: BTreeSet<Var>,
    pub z: BTreeSet<Var>,
}

impl RelaxSplit {
    pub fn new(
        s: CnfFormula,
        e: BTreeSet<usize>,
        x: BTreeSet<Var>,
        z: BTreeSet<Var>,
    ) -> Result<RelaxSplit, RelaxError> {
        if let Some(v) = x.intersection(&z).next() {
            return Err(RelaxError::Split(format!("variable {v} is both internal and external")));
        }
        if let Some(&i) = e.iter().find(|&&i| i >= s.len()) {
            return Err(RelaxError::Split(format!("clause index {i} out of range")));
        }
        if let Some(v) = s.vars().into_iter().find(|v| !x.contains(v) && !z.contains(v)) {
            return Err(RelaxError::Split(format!("variable {v} is neither internal nor external")));
        }
        Ok(RelaxSplit { s, e, x, z })
    }

    fn part(&self, taken: bool) -> CnfFormula {
        let mut f = CnfFormula::new(self.s.num_vars);
        for (i, c) in self.s.clauses.iter().enumerate() {
            if self.e.contains(&i) == taken {
                f.push(c.clone());
            }
        }
        f
    }

    pub fn e_formula(&self) -> CnfFormula {
        self.part(true)
    }

    pub fn s_rlx(&self) -> CnfFormula {
        self.part(false)
    }
}

/// `H(Z)` with `∃X[E ∧ S_rlx] ≡ H ∧ ∃X[S_rlx]`.
pub fn relax_general(split: &RelaxSplit) -> Result<CnfFormula, RelaxError> {
    relax_general_with(split, PqeOptions::default())
}

pub fn relax_general_with(split: &RelaxSplit, opts: PqeOptions) -> Result<CnfFormula, RelaxError> {
    let p = PqeProblem::new(split.e_formula(), split.s_rlx(), split.x.iter().copied());
    Ok(pqe_solve_with(&p, opts)?.astar)
}

/// Shared variables of `A` and `B`, and the rest of their variables.
fn split_vars(a: &CnfFormula, b: &CnfFormula) -> (Vec<Var>, Vec<Var>) {
    let va: BTreeSet<Var> = a.vars().into_iter().collect();
    let vb: BTreeSet<Var> = b.vars().into_iter().collect();
    let y = va.intersection(&vb).copied().collect();
    let w = va.symmetric_difference(&vb).copied().collect();
    (y, w)
}

fn conjoin_sized(parts: &[&CnfFormula]) -> CnfFormula {
    let mut f = CnfFormula::conjoin(parts);
    f.num_vars = parts.iter().map(|p| p.num_vars).max().unwrap_or(0).max(f.num_vars);
    f
}

/// Turns a PQE result into `H` with `A → H` and `H ∧ ∃Z[B] ≡ ∃X[A] ∧ ∃Z[B]`.
///
/// Clauses `A` does not imply are dropped. The B-side points the result then admits
/// are enumerated: points `A` also produces are kept, the others are cut off with a
/// clause `A` implies, taken from a shrunk core.
fn repair(a: &CnfFormula, b: &CnfFormula, y: &[Var], h0: &CnfFormula, opts: PqeOptions) -> Result<CnfFormula, RelaxError> {
    let n = a.num_vars.max(b.num_vars).max(h0.num_vars);
    let mut sa = solver_for(a, opts.limits);
    sa.reserve_vars(n);
    let mut h = CnfFormula::new(n);
    for c in &h0.clauses {
        let neg: Vec<Lit> = c.lits().iter().map(|&l| !l).collect();
        match sa.solve(&neg) {
            SatStatus::Unsat => h.push(c.clone()),
            SatStatus::Sat => {}
            SatStatus::Unknown => return Err(RelaxError::Budget),
        }
    }
    let mut enumerate = solver_for(&conjoin_sized(&[&h, b]), opts.limits);
    enumerate.reserve_vars(n);
    let mut steps = 0u64;
    loop {
        steps += 1;
        if steps > opts.limits.steps {
            return Err(RelaxError::Budget);
        }
        match enumerate.solve(&[]) {
            SatStatus::Unsat => break,
            SatStatus::Unknown => return Err(RelaxError::Budget),
            SatStatus::Sat => {}
        }
        let point: Vec<Lit> = y.iter().map(|&v| Lit::new(v, enumerate.model_value(v))).collect();
        match sa.solve(&point) {
            SatStatus::Sat => {
                let block: Vec<Lit> = point.iter().map(|&l| !l).collect();
                enumerate.add_clause(&block);
            }
            SatStatus::Unsat => {
                let raw = sa.core().to_vec();
                let core = shrink_core(&mut sa, &raw).map_err(|_| RelaxError::Budget)?;
                let lits: Vec<Lit> = core.iter().map(|&l| !l).collect();
                enumerate.add_clause(&lits);
                h.push(Clause::new(lits).unwrap_or_else(Clause::empty));
            }
            SatStatus::Unknown => return Err(RelaxError::Budget),
        }
    }
    h.sort_clauses();
    Ok(h)
}

fn sat_status(f: &CnfFormula) -> SatStatus {
    Solver::from_formula(f).solve(&[])
}

/// Interpolant `H(Y)` of `A → ¬B`: `A → H`, `H ∧ B` UNSAT, and the PQE relation
/// `∃W[A ∧ B] ≡ H ∧ ∃W[B]` with `W` the non-shared variables.
pub fn extract_interpolant(a: &CnfFormula, b: &CnfFormula) -> Result<CnfFormula, RelaxError> {
    extract_interpolant_with(a, b, PqeOptions::default())
}

pub fn extract_interpolant_with(
    a: &CnfFormula,
    b: &CnfFormula,
    opts: PqeOptions,
) -> Result<CnfFormula, RelaxError> {
    match sat_status(&conjoin_sized(&[a, b])) {
        SatStatus::Sat => return Err(RelaxError::NotUnsat),
        SatStatus::Unknown => return Err(RelaxError::Budget),
        SatStatus::Unsat => {}
    }
    let (y, w) = split_vars(a, b);
    let p = PqeProblem::new(a.clone(), b.clone(), w);
    let h0 = pqe_solve_with(&p, opts)?.astar;
    repair(a, b, &y, &h0, opts)
}

/// A point of `H ∧ B` and its extension to a model of `A ∧ B`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extension {
    /// Values of the variables of `B` (shared ones included).
    pub short: Vec<Lit>,
    /// Values of every variable of `A ∧ B`.
    pub full: Vec<Lit>,
}

/// `H(Y)` for a possibly broken implication `A → ¬B`. When `H ∧ B` is satisfiable
/// its model is returned with an extension to `A ∧ B`.
pub fn broken_interpolant(
    a: &CnfFormula,
    b: &CnfFormula,
) -> Result<(CnfFormula, Option<Extension>), RelaxError> {
    broken_interpolant_with(a, b, PqeOptions::default())
}

pub fn broken_interpolant_with(
    a: &CnfFormula,
    b: &CnfFormula,
    opts: PqeOptions,
) -> Result<(CnfFormula, Option<Extension>), RelaxError> {
    let (y, w) = split_vars(a, b);
    let p = PqeProblem::new(a.clone(), b.clone(), w);
    let h0 = pqe_solve_with(&p, opts)?.astar;
    let h = repair(a, b, &y, &h0, opts)?;
    let hb = conjoin_sized(&[&h, b]);
    let mut s = solver_for(&hb, opts.limits);
    match s.solve(&[]) {
        SatStatus::Unsat => return Ok((h, None)),
        SatStatus::Unknown => return Err(RelaxError::Budget),
        SatStatus::Sat => {}
    }
    let short: Vec<Lit> = b.vars().into_iter().map(|v| Lit::new(v, s.model_value(v))).collect();
    let fixed: Vec<Lit> = short.iter().copied().filter(|l| y.contains(&l.var())).collect();
    let mut sa = solver_for(a, opts.limits);
    sa.reserve_vars(hb.num_vars);
    match sa.solve(&fixed) {
        SatStatus::Sat => {}
        SatStatus::Unknown => return Err(RelaxError::Budget),
        SatStatus::Unsat => unreachable!("H admits only points A produces"),
    }
    let mut full = short.clone();
    full.extend(
        a.vars()
            .into_iter()
            .filter(|v| !y.contains(v))
            .map(|v| Lit::new(v, sa.model_value(v))),
    );
    full.sort_by_key(|l| l.var());
    Ok((h, Some(Extension { short, full })))
}

/// A miter split at a cut: `α = EQ ∧ F_M ∧ F_L ∧ neq`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CutSplit {
    pub f_m: CnfFormula,
    pub f_l: CnfFormula,
    pub eq: CnfFormula,
    pub neq: CnfFormula,
    pub cut_left: Vec<Var>,
    pub cut_right: Vec<Var>,
}

impl CutSplit {
    pub fn from_miter(m: &Miter, cut_i: usize) -> CutSplit {
        let (l, r) = m.cut_sides(cut_i);
        CutSplit {
            f_m: m.below(cut_i),
            f_l: m.f.level_slice(cut_i + 1, m.levels()),
            eq: m.f.eq.clone(),
            neq: m.f.neq.clone(),
            cut_left: l.to_vec(),
            cut_right: r.to_vec(),
        }
    }

    pub fn alpha(&self) -> CnfFormula {
        conjoin_sized(&[&self.eq, &self.f_m, &self.f_l, &self.neq])
    }

    fn off_cut(&self) -> Vec<Var> {
        let cut: BTreeSet<Var> = self.cut_left.iter().chain(&self.cut_right).copied().collect();
        self.alpha().vars().into_iter().filter(|v| !cut.contains(v)).collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RelaxationReport {
    /// Replacing relaxation: `EQ ∧ F_M` taken out of `∃W[α]`.
    pub h_r: CnfFormula,
    /// Separating relaxation: only `EQ` taken out.
    pub h_s: CnfFormula,
    pub h_r_verified: bool,
    pub h_s_verified: bool,
    /// Whether cut equality satisfies the separating relation using `EQ ∧ F_M` alone;
    /// `None` when the two cut halves differ in width.
    pub cut_eq_from_eq_fm: Option<bool>,
    pub alpha_sat: bool,
    /// `H^r ∧ F_L ∧ neq`: UNSAT makes `H^r` an interpolant.
    pub h_r_fl_neq_sat: bool,
    /// `H^s ∧ F_L ∧ neq` without `F_M`.
    pub h_s_fl_neq_sat: bool,
    /// `H^s ∧ F_M ∧ F_L ∧ neq`.
    pub h_s_fm_fl_neq_sat: bool,
}

fn is_sat(f: &CnfFormula) -> Result<bool, RelaxError> {
    match sat_status(f) {
        SatStatus::Sat => Ok(true),
        SatStatus::Unsat => Ok(false),
        SatStatus::Unknown => Err(RelaxError::Budget),
    }
}

pub fn compare_relaxations(split: &CutSplit) -> Result<RelaxationReport, RelaxError> {
    compare_relaxations_with(split, PqeOptions::default())
}

pub fn compare_relaxations_with(
    split: &CutSplit,
    opts: PqeOptions,
) -> Result<RelaxationReport, RelaxError> {
    let w = split.off_cut();
    let lim = opts.limits;
    let pr = PqeProblem::new(
        conjoin_sized(&[&split.eq, &split.f_m]),
        conjoin_sized(&[&split.f_l, &split.neq]),
        w.iter().copied(),
    );
    let ps = PqeProblem::new(
        split.eq.clone(),
        conjoin_sized(&[&split.f_m, &split.f_l, &split.neq]),
        w.iter().copied(),
    );
    let h_r = pqe_solve_with(&pr, opts)?.astar;
    let h_s = pqe_solve_with(&ps, opts)?.astar;
    let local = PqeProblem::new(split.eq.clone(), split.f_m.clone(), w.iter().copied());
    let cut_eq_from_eq_fm = eq_formula(&split.cut_left, &split.cut_right)
        .ok()
        .map(|e| verify_pqe_with(&local, &e, lim));
    Ok(RelaxationReport {
        h_r_verified: verify_pqe_with(&pr, &h_r, lim),
        h_s_verified: verify_pqe_with(&ps, &h_s, lim),
        cut_eq_from_eq_fm,
        alpha_sat: is_sat(&split.alpha())?,
        h_r_fl_neq_sat: is_sat(&conjoin_sized(&[&h_r, &split.f_l, &split.neq]))?,
        h_s_fl_neq_sat: is_sat(&conjoin_sized(&[&h_s, &split.f_l, &split.neq]))?,
        h_s_fm_fl_neq_sat: is_sat(&conjoin_sized(&[&h_s, &split.f_m, &split.f_l, &split.neq]))?,
        h_r,
        h_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{Gate, GateOp, Netlist};

    fn formula(cs: &[&[i32]]) -> CnfFormula {
        let mut f = CnfFormula::default();
        for c in cs {
            f.add(c.iter().map(|&x| Lit::from_dimacs(x)).collect());
        }
        f
    }

    fn implies(f: &CnfFormula, g: &CnfFormula) -> bool {
        g.clauses.iter().all(|c| crate::sat::implies(f, c))
    }

    fn set(vs: &[Var]) -> BTreeSet<Var> {
        vs.iter().copied().collect()
    }

    #[test]
    fn empty_e_relaxes_to_true() {
        let s = formula(&[&[1, 2], &[-2, 3]]);
        let split = RelaxSplit::new(s, BTreeSet::new(), set(&[2]), set(&[1, 3])).unwrap();
        assert!(relax_general(&split).unwrap().is_empty());
    }

    #[test]
    fn wire_pair_relaxes_to_output_equality() {
        // x'=1, x''=2, z'=3, z''=4; E = EQ(x', x'').
        let s = formula(&[&[-1, 2], &[1, -2], &[-3, 1], &[3, -1], &[-4, 2], &[4, -2]]);
        let split = RelaxSplit::new(s, [0, 1].into(), set(&[1, 2]), set(&[3, 4])).unwrap();
        let h = relax_general(&split).unwrap();
        let want = formula(&[&[-3, 4], &[3, -4]]);
        assert!(implies(&h, &want) && implies(&want, &h));
    }

    #[test]
    fn split_rejects_overlap() {
        let s = formula(&[&[1, 2]]);
        assert!(RelaxSplit::new(s, BTreeSet::new(), set(&[1]), set(&[1, 2])).is_err());
    }

    #[test]
    fn interpolant_examples() {
        let h = extract_interpolant(&formula(&[&[2]]), &formula(&[&[-2]])).unwrap();
        assert_eq!(h.clauses, formula(&[&[2]]).clauses);
        // x=1, y=2: (x → y) ∧ x against ¬y.
        let h = extract_interpolant(&formula(&[&[-1, 2], &[1]]), &formula(&[&[-2]])).unwrap();
        assert_eq!(h.clauses, formula(&[&[2]]).clauses);
        assert_eq!(
            extract_interpolant(&formula(&[&[2]]), &formula(&[&[2, 3]])),
            Err(RelaxError::NotUnsat)
        );
    }

    #[test]
    fn broken_example_extends() {
        // y1=1, z=2, plus an A-only variable x=3.
        let a = formula(&[&[1], &[3, 1]]);
        let b = formula(&[&[1, 2]]);
        let (h, ext) = broken_interpolant(&a, &b).unwrap();
        assert_eq!(h.clauses, formula(&[&[1]]).clauses);
        let ext = ext.unwrap();
        let val = |v: Var| ext.full.iter().find(|l| l.var() == v).unwrap().is_positive();
        assert!(a.eval(val) && b.eval(val));
        assert!(ext.short.contains(&Lit::pos(1)));
    }

    #[test]
    fn broken_unsat_has_no_witness() {
        let (h, ext) = broken_interpolant(&formula(&[&[2]]), &formula(&[&[-2]])).unwrap();
        assert!(ext.is_none());
        assert_eq!(h.clauses, formula(&[&[2]]).clauses);
    }

    fn single(op: GateOp, name: &str) -> Netlist {
        Netlist::new(
            name,
            vec!["x".into(), "y".into()],
            vec!["z".into()],
            vec![
                Gate::new("p", GateOp::Xor, &["x", "y"]),
                Gate::new("q", GateOp::And, &["x", "y"]),
                Gate::new("z", op, &["p", "q"]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn identical_below_cut() {
        let m = Miter::new(&single(GateOp::Or, "a"), &single(GateOp::Or, "b")).unwrap();
        let r = compare_relaxations(&CutSplit::from_miter(&m, 1)).unwrap();
        assert_eq!(r.cut_eq_from_eq_fm, Some(true));
        assert!(r.h_r_verified && r.h_s_verified);
        assert!(!r.alpha_sat && !r.h_r_fl_neq_sat && !r.h_s_fm_fl_neq_sat);
    }

    #[test]
    fn inequivalent_miter_breaks_the_interpolant() {
        let m = Miter::new(&single(GateOp::Or, "a"), &single(GateOp::Nor, "b")).unwrap();
        let r = compare_relaxations(&CutSplit::from_miter(&m, 1)).unwrap();
        assert!(r.alpha_sat && r.h_r_fl_neq_sat && r.h_s_fm_fl_neq_sat);
    }
}
