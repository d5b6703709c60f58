// SPDX-License-Identifier: Apache-2.0
//! Equivalence checking by logic relaxation: boundary-formula chains over level cuts,
//! the output verdict, and the single-cut inequivalence check.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnf::{gate_clauses, Clause, CnfError, CnfFormula, Lit, Miter, Var};
use crate::netlist::Netlist;
use crate::pqe::{
    first_missing_clause, pqe_solve_from, pqe_solve_with, verify_pqe_with, PqeError,
    PqeOptions, PqeProblem, PqeStats,
};
use crate::qe::solver_for;
use crate::sat::{SatStatus, Solver};
use crate::Limits;

#[derive(Debug, Error, Clone)]
pub enum EcError {
    #[error(transparent)]
    Cnf(#[from] CnfError),
    #[error(transparent)]
    Pqe(#[from] PqeError),
    #[error("budget exhausted after {} chain steps", .0.steps.len())]
    Budget(Box<BoundaryChain>),
    #[error("no certificate that the cut formula is a boundary formula")]
    BoundaryNotVerified,
    #[error("cut index {0} out of range (circuit has {1} levels)")]
    CutRange(usize, usize),
    #[error("{0} inputs per side is beyond exhaustive simulation")]
    Bound(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Approximate,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EcConfig {
    pub mode: Mode,
    pub pqe: PqeOptions,
    /// Relatives pre-seeding before each approximate step.
    pub relatives: bool,
    /// Approximate mode: how many levels below `Cut_i` each step sees (1 = one slice).
    pub window: usize,
    /// Check every exact step with `verify_pqe_with`.
    pub certify: bool,
    /// Record wall-clock times in reports.
    pub wall_clock: bool,
}

impl Default for EcConfig {
    fn default() -> Self {
        EcConfig {
            mode: Mode::Exact,
            pqe: PqeOptions::default(),
            relatives: false,
            window: 1,
            certify: true,
            wall_clock: false,
        }
    }
}

impl EcConfig {
    pub fn star() -> EcConfig {
        EcConfig {
            mode: Mode::Approximate,
            relatives: true,
            ..Default::default()
        }
    }

    fn limits(&self) -> Limits {
        self.pqe.limits
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainStep {
    pub cut: usize,
    pub h: CnfFormula,
    pub w: Vec<Var>,
    /// Size of the `F_M` clause selection used for this step.
    pub fm_clauses: usize,
    /// Clauses generated before the step terminated.
    pub terminated_after: usize,
    /// Clauses contributed by relatives pre-seeding.
    pub seeded: usize,
    /// Exact mode: whether the step's PQE relation was checked.
    pub certified: bool,
    pub stats: PqeStats,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundaryChain {
    pub mode: Mode,
    pub steps: Vec<ChainStep>,
}

impl BoundaryChain {
    pub fn h(&self, i: usize) -> &CnfFormula {
        &self.steps[i].h
    }

    pub fn last(&self) -> &CnfFormula {
        &self.steps.last().expect("chain starts with H_0").h
    }

    pub fn max_width(&self) -> usize {
        self.steps.iter().map(|s| s.h.max_width()).max().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Equivalent,
    Inequivalent,
    ConstantDegenerate,
    Unknown,
}

/// A distinguishing input for both circuits, with the values it produces.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub inputs: Vec<bool>,
    pub outputs: (bool, bool),
    /// Relaxed model the witness was realigned from: inputs of each side.
    pub relaxed: Option<(Vec<bool>, Vec<bool>)>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timings {
    pub sat_calls: u64,
    pub pqe_nodes: u64,
    pub pqe_sat_calls: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EcVerdict {
    pub status: Status,
    pub witness: Option<Witness>,
    /// Which side is constant, for `ConstantDegenerate`.
    pub constant: Option<String>,
    pub output_boundary: CnfFormula,
    pub chain: BoundaryChain,
    pub timings: Timings,
}

#[derive(Serialize)]
struct ReportStep {
    cut: usize,
    clauses: usize,
    width_max: usize,
    terminated_after: usize,
}

#[derive(Serialize)]
struct Report<'a> {
    schema: u32,
    status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<&'a Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    constant: Option<&'a str>,
    chain: Vec<ReportStep>,
    timings: &'a Timings,
}

impl EcVerdict {
    pub fn to_json(&self) -> String {
        let r = Report {
            schema: 1,
            status: self.status,
            witness: self.witness.as_ref(),
            constant: self.constant.as_deref(),
            chain: self
                .chain
                .steps
                .iter()
                .map(|s| ReportStep {
                    cut: s.cut,
                    clauses: s.h.len(),
                    width_max: s.h.max_width(),
                    terminated_after: s.terminated_after,
                })
                .collect(),
            timings: &self.timings,
        };
        serde_json::to_string_pretty(&r).expect("report serializes")
    }
}

/// `None` when `H_prev` is redundant in `H_cur ∧ ∃W[H_prev ∧ F_M]`; otherwise a new
/// clause over the free variables implied by `H_prev ∧ F_M`.
pub fn redund_check(
    h_prev: &CnfFormula,
    h_cur: &CnfFormula,
    f_mi: &CnfFormula,
    w: &BTreeSet<Var>,
) -> Result<Option<Clause>, PqeError> {
    let p = PqeProblem {
        a: h_prev.clone(),
        b: f_mi.clone(),
        w: w.clone(),
    };
    first_missing_clause(&p, h_cur, PqeOptions::default())
}

fn step_problem(h_prev: &CnfFormula, fm: &CnfFormula, cut: &[Var]) -> PqeProblem {
    let cut: HashSet<Var> = cut.iter().copied().collect();
    let mut vars: BTreeSet<Var> = h_prev.vars().into_iter().collect();
    vars.extend(fm.vars());
    let w = vars.into_iter().filter(|v| !cut.contains(v)).collect();
    PqeProblem {
        a: h_prev.clone(),
        b: fm.clone(),
        w,
    }
}

fn name_vars(f: &mut CnfFormula, m: &Miter) {
    for v in f.vars() {
        f.names.insert(v, m.var_name(v));
    }
}

/// Clauses from a local PQE over each left cut gate not yet mentioned in `h` and
/// the right gates sharing a clause of `h_prev` with it.
fn relatives_seed(m: &Miter, i: usize, h_prev: &CnfFormula, opts: PqeOptions) -> CnfFormula {
    let fan = [m.n1.gate_fanins(), m.n2.gate_fanins()];
    let gate_of = |right: bool, net: usize| {
        let (n, vars) = if right {
            (&m.n2, &m.f.vars2)
        } else {
            (&m.n1, &m.f.vars1)
        };
        let g = net - n.inputs.len();
        let fanins = &fan[usize::from(right)][g];
        let ins: Vec<Var> = fanins.iter().map(|&f| vars[f]).collect();
        let cls = gate_clauses(n.gates[g].op, vars[net], &ins);
        (vars[net], ins, cls)
    };
    let right: Vec<_> = m.plan.cuts[i].right.iter().map(|&k| gate_of(true, k)).collect();
    let mut seeds = CnfFormula::new(m.f.g_rlx.num_vars);
    let mut seen: HashSet<Clause> = HashSet::new();
    for &k in &m.plan.cuts[i].left {
        let (out, ins, cls) = gate_of(false, k);
        if seeds.clauses.iter().any(|c| c.vars().any(|v| v == out)) {
            continue;
        }
        let touches = |c: &Clause, vs: &[Var]| c.vars().any(|v| vs.contains(&v));
        let relatives: Vec<_> = right
            .iter()
            .filter(|(_, rins, _)| {
                h_prev
                    .clauses
                    .iter()
                    .any(|c| touches(c, &ins) && touches(c, rins))
            })
            .collect();
        if relatives.is_empty() {
            continue;
        }
        let mut cluster_ins = ins.clone();
        let mut b = CnfFormula::default();
        for c in cls {
            b.add(c);
        }
        let mut outs = vec![out];
        for (rout, rins, rcls) in &relatives {
            cluster_ins.extend(rins);
            outs.push(*rout);
            for c in rcls {
                b.add(c.clone());
            }
        }
        let mut a = CnfFormula::default();
        for c in &h_prev.clauses {
            if touches(c, &cluster_ins) {
                a.push(c.clone());
            }
        }
        let p = step_problem(&a, &b, &outs);
        if let Ok(s) = pqe_solve_with(&p, opts) {
            for c in s.astar.clauses {
                if seen.insert(c.clone()) {
                    seeds.push(c);
                }
            }
        }
    }
    seeds
}

fn approx_fm(m: &Miter, i: usize, window: usize) -> CnfFormula {
    let lo = i.saturating_sub(window.max(1) - 1).max(1);
    m.f.level_slice(lo, i)
}

/// `H_0 … H_k` for a prepared miter.
pub fn build_chain(m: &Miter, cfg: &EcConfig) -> Result<BoundaryChain, EcError> {
    let (x1, x2) = m.cut_sides(0);
    let mut h0 = crate::cnf::eq_formula(x1, x2)?;
    name_vars(&mut h0, m);
    let mut chain = BoundaryChain {
        mode: cfg.mode,
        steps: vec![ChainStep {
            cut: 0,
            h: h0,
            w: Vec::new(),
            fm_clauses: 0,
            terminated_after: 0,
            seeded: 0,
            certified: true,
            stats: PqeStats::default(),
        }],
    };
    for i in 1..=m.levels() {
        let h_prev = chain.last().clone();
        let cut = m.cut_vars(i);
        let fm = match cfg.mode {
            Mode::Exact => m.below(i),
            Mode::Approximate => approx_fm(m, i, cfg.window),
        };
        let p = step_problem(&h_prev, &fm, cut);
        let seeds = if cfg.mode == Mode::Approximate && cfg.relatives {
            relatives_seed(m, i, &h_prev, cfg.pqe)
        } else {
            CnfFormula::default()
        };
        // The termination check runs only once every cut variable shows up.
        let all_present = {
            let present: HashSet<Var> = seeds.vars().into_iter().collect();
            !seeds.is_empty() && cut.iter().all(|v| present.contains(v))
        };
        let done = if all_present {
            match first_missing_clause(&p, &seeds, cfg.pqe) {
                Ok(None) => true,
                Ok(Some(_)) => false,
                Err(_) => return Err(EcError::Budget(Box::new(chain))),
            }
        } else {
            false
        };
        let (astar, stats) = if done {
            (seeds.clone(), PqeStats::default())
        } else {
            match pqe_solve_from(&p, &seeds, cfg.pqe) {
                Ok(s) => (s.astar, s.stats),
                Err(_) => return Err(EcError::Budget(Box::new(chain))),
            }
        };
        let mut h = astar;
        name_vars(&mut h, m);
        let certified =
            cfg.mode == Mode::Exact && cfg.certify && verify_pqe_with(&p, &h, cfg.limits());
        chain.steps.push(ChainStep {
            cut: i,
            terminated_after: stats.resolvents as usize,
            seeded: seeds.len(),
            h,
            w: p.w.iter().copied().collect(),
            fm_clauses: fm.len(),
            certified,
            stats,
        });
    }
    Ok(chain)
}

pub fn build_boundary_chain(
    n1: &Netlist,
    n2: &Netlist,
    mode: Mode,
) -> Result<BoundaryChain, EcError> {
    let m = Miter::new(n1, n2)?;
    let cfg = match mode {
        Mode::Exact => EcConfig::default(),
        Mode::Approximate => EcConfig {
            mode,
            ..Default::default()
        },
    };
    build_chain(&m, &cfg)
}

fn inputs_of(model: &[bool], xs: &[Var]) -> Vec<bool> {
    xs.iter().map(|&v| model[v as usize]).collect()
}

/// Inputs under `EQ` that drive the given literals, simulated to a witness.
fn realign(m: &Miter, fixed: &[Lit], relaxed: Option<(Vec<bool>, Vec<bool>)>) -> Option<Witness> {
    let mut s = solver_for(&m.f.g, Limits::default());
    if s.solve(fixed) != SatStatus::Sat {
        return None;
    }
    let inputs = inputs_of(&s.model(), &m.roles.x1);
    let o1 = m.n1.eval(&inputs)[0];
    let o2 = m.n2.eval(&inputs)[0];
    Some(Witness {
        inputs,
        outputs: (o1, o2),
        relaxed,
    })
}

/// Decides equivalence from the last boundary formula of a chain.
pub fn verdict_from_chain(m: &Miter, chain: BoundaryChain, mode: Mode) -> EcVerdict {
    let hk = chain.last().clone();
    let (z1, z2) = (m.roles.z1, m.roles.z2);
    let at = |b1: bool, b2: bool| hk.eval(|v| if v == z1 { b1 } else { b2 });
    let open: Vec<(bool, bool)> = [(true, false), (false, true)]
        .into_iter()
        .filter(|&(a, b)| at(a, b))
        .collect();
    let mut timings = Timings::default();
    for st in &chain.steps {
        timings.pqe_nodes += st.stats.nodes;
        timings.pqe_sat_calls += st.stats.sat_calls;
    }
    let mut verdict = EcVerdict {
        status: Status::Equivalent,
        witness: None,
        constant: None,
        output_boundary: hk.clone(),
        chain,
        timings,
    };
    if open.is_empty() {
        return verdict;
    }
    let probe = |(b1, b2): (bool, bool)| {
        let mut s = Solver::from_formula(&m.f.g_rlx);
        let st = s.solve(&[Lit::new(z1, b1), Lit::new(z2, b2)]);
        (st, s.model())
    };
    let results: Vec<_> = if open.len() == 2 {
        let (a, b) = rayon::join(|| probe(open[0]), || probe(open[1]));
        vec![a, b]
    } else {
        vec![probe(open[0])]
    };
    verdict.timings.sat_calls += results.len() as u64;
    for (&(b1, b2), (st, model)) in open.iter().zip(&results) {
        if *st == SatStatus::Sat {
            if mode == Mode::Approximate {
                verdict.status = Status::Unknown;
                return verdict;
            }
            let relaxed = (inputs_of(model, &m.roles.x1), inputs_of(model, &m.roles.x2));
            verdict.status = Status::Inequivalent;
            verdict.timings.sat_calls += 1;
            verdict.witness = realign(m, &[Lit::new(z1, b1), Lit::new(z2, b2)], Some(relaxed));
            return verdict;
        }
    }
    // Every open point is out of reach even for the relaxed pair: some side is constant.
    let mut names = Vec::new();
    for (z, name) in [(z1, &m.n1.name), (z2, &m.n2.name)] {
        for b in [false, true] {
            let mut s = Solver::from_formula(&m.f.g_rlx);
            verdict.timings.sat_calls += 1;
            if s.solve(&[Lit::new(z, b)]) == SatStatus::Unsat {
                names.push(format!("{name} is constant {}", u8::from(!b)));
            }
        }
    }
    verdict.status = Status::ConstantDegenerate;
    verdict.constant = Some(names.join("; "));
    verdict
}

/// Runs the chain and the output check.
pub fn check(m: &Miter, cfg: &EcConfig) -> EcVerdict {
    let t0 = Instant::now();
    let mut v = match build_chain(m, cfg) {
        Ok(chain) => verdict_from_chain(m, chain, cfg.mode),
        Err(EcError::Budget(chain)) => EcVerdict {
            status: Status::Unknown,
            witness: None,
            constant: None,
            output_boundary: CnfFormula::default(),
            timings: Timings {
                pqe_nodes: chain.steps.iter().map(|s| s.stats.nodes).sum(),
                ..Default::default()
            },
            chain: *chain,
        },
        Err(e) => unreachable!("chain construction only fails on budget: {e}"),
    };
    // An approximate H_k carries no PQE certificate, so confirm it on the miter itself.
    if cfg.mode == Mode::Approximate && v.status == Status::Equivalent {
        v.timings.sat_calls += 1;
        if solver_for(&m.f.alpha, cfg.limits()).solve(&[]) != SatStatus::Unsat {
            v.status = Status::Unknown;
        }
    }
    if cfg.wall_clock {
        v.timings.wall_ms = Some(t0.elapsed().as_millis() as u64);
    }
    v
}

pub fn ec_lor(n1: &Netlist, n2: &Netlist, mode: Mode) -> Result<EcVerdict, EcError> {
    let m = Miter::new(n1, n2)?;
    let cfg = EcConfig {
        mode,
        ..Default::default()
    };
    Ok(check(&m, &cfg))
}

pub fn ec_lor_star(n1: &Netlist, n2: &Netlist) -> Result<EcVerdict, EcError> {
    let m = Miter::new(n1, n2)?;
    Ok(check(&m, &EcConfig::star()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Certificate {
    /// PQE relation checked for the chain step that produced it.
    PqeVerified,
    /// Passed [`validate_boundary`].
    Validated,
}

/// A cut formula with the evidence that it is a boundary formula.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Boundary {
    pub cut: usize,
    pub h: CnfFormula,
    pub certificate: Option<Certificate>,
}

impl Boundary {
    pub fn unverified(cut: usize, h: CnfFormula) -> Boundary {
        Boundary {
            cut,
            h,
            certificate: None,
        }
    }

    /// Validates `h` first; the certificate is set only if it passes.
    pub fn validated(m: &Miter, cut: usize, h: CnfFormula) -> Result<Boundary, EcError> {
        let ok = validate_in(m, &h, cut)?;
        Ok(Boundary {
            cut,
            h,
            certificate: ok.then_some(Certificate::Validated),
        })
    }

    pub fn from_chain(chain: &BoundaryChain, i: usize) -> Boundary {
        let st = &chain.steps[i];
        Boundary {
            cut: i,
            h: st.h.clone(),
            certificate: (chain.mode == Mode::Exact && st.certified)
                .then_some(Certificate::PqeVerified),
        }
    }
}

/// Solves `β = H ∧ G_rlx ∧ neq`. A model is realigned to a common input vector.
pub fn prove_inequivalence_via_beta(m: &Miter, b: &Boundary) -> Result<Option<Witness>, EcError> {
    if b.certificate.is_none() {
        return Err(EcError::BoundaryNotVerified);
    }
    if b.cut > m.levels() {
        return Err(EcError::CutRange(b.cut, m.levels()));
    }
    let beta = m.f.beta(&b.h);
    let mut s = Solver::from_formula(&beta);
    if s.solve(&[]) != SatStatus::Sat {
        return Ok(None);
    }
    let model = s.model();
    let relaxed = (inputs_of(&model, &m.roles.x1), inputs_of(&model, &m.roles.x2));
    let cut_point: Vec<Lit> = m
        .cut_vars(b.cut)
        .iter()
        .map(|&v| Lit::new(v, model[v as usize]))
        .collect();
    Ok(realign(m, &cut_point, Some(relaxed)))
}

/// Cut values of every input pattern, bit-packed per pattern.
fn cut_table(n: &Netlist, nets: &[usize]) -> Vec<Vec<u64>> {
    let ni = n.inputs.len();
    let total = 1usize << ni;
    let words = nets.len().div_ceil(64).max(1);
    let fanins = n.gate_fanins();
    let mut out = Vec::with_capacity(total);
    for block in 0..total.div_ceil(64) {
        let ins: Vec<u64> = (0..ni)
            .map(|j| {
                (0..64).fold(0u64, |w, t| {
                    let p = block * 64 + t;
                    w | (((p >> j) & 1) as u64) << t
                })
            })
            .collect();
        let vals = n.simulate_words_with(&fanins, &ins);
        for t in 0..64.min(total - block * 64) {
            let mut row = vec![0u64; words];
            for (k, &net) in nets.iter().enumerate() {
                if vals[net] >> t & 1 == 1 {
                    row[k / 64] |= 1 << (k % 64);
                }
            }
            out.push(row);
        }
    }
    out
}

fn bit(row: &[u64], k: usize) -> bool {
    row[k / 64] >> (k % 64) & 1 == 1
}

/// Most right-side variables left free after propagating a left point through `H`
/// before [`accepted_rights`] gives up.
const MAX_FREE: usize = 12;

/// Right cut points `H` accepts next to the left point `a`, or `None` if more than
/// [`MAX_FREE`] right variables stay unassigned after unit propagation.
fn accepted_rights(
    h: &CnfFormula,
    pos: &HashMap<Var, usize>,
    nl: usize,
    nr: usize,
    a: &[u64],
) -> Option<Vec<Vec<u64>>> {
    let mut residual: Vec<Vec<(usize, bool)>> = Vec::new();
    for c in &h.clauses {
        let mut rest = Vec::new();
        let mut sat = false;
        for l in c.lits() {
            let k = pos[&l.var()];
            if k < nl {
                sat |= l.holds(bit(a, k));
            } else {
                rest.push((k - nl, l.is_positive()));
            }
        }
        if sat {
            continue;
        }
        if rest.is_empty() {
            return Some(Vec::new());
        }
        residual.push(rest);
    }
    let mut val: Vec<Option<bool>> = vec![None; nr];
    loop {
        let mut changed = false;
        for c in &residual {
            if c.iter().any(|&(k, p)| val[k] == Some(p)) {
                continue;
            }
            let mut free = c.iter().filter(|&&(k, _)| val[k].is_none());
            match (free.next(), free.next()) {
                (None, _) => return Some(Vec::new()),
                (Some(&(k, p)), None) => {
                    val[k] = Some(p);
                    changed = true;
                }
                _ => {}
            }
        }
        if !changed {
            break;
        }
    }
    let free: Vec<usize> = (0..nr).filter(|&k| val[k].is_none()).collect();
    if free.len() > MAX_FREE {
        return None;
    }
    let words = nr.div_ceil(64).max(1);
    let mut rows = Vec::new();
    for bits in 0..1u64 << free.len() {
        let mut full: Vec<bool> = val.iter().map(|v| v.unwrap_or(false)).collect();
        for (j, &k) in free.iter().enumerate() {
            full[k] = bits >> j & 1 == 1;
        }
        if residual.iter().all(|c| c.iter().any(|&(k, p)| full[k] == p)) {
            let mut row = vec![0u64; words];
            for (k, &x) in full.iter().enumerate() {
                if x {
                    row[k / 64] |= 1 << (k % 64);
                }
            }
            rows.push(row);
        }
    }
    Some(rows)
}

/// Definition check by simulation: `G → H`, and `H = 0` on every cut point the
/// relaxed pair produces but the constrained pair does not.
pub fn validate_boundary(
    h: &CnfFormula,
    cut_i: usize,
    n1: &Netlist,
    n2: &Netlist,
) -> Result<bool, EcError> {
    let m = Miter::new(n1, n2)?;
    validate_in(&m, h, cut_i)
}

pub fn validate_in(m: &Miter, h: &CnfFormula, cut_i: usize) -> Result<bool, EcError> {
    if cut_i > m.levels() {
        return Err(EcError::CutRange(cut_i, m.levels()));
    }
    let ni = m.n1.inputs.len();
    if ni > 20 {
        return Err(EcError::Bound(ni));
    }
    let cut = m.cut_vars(cut_i);
    let (left, right) = m.cut_sides(cut_i);
    let pos: HashMap<Var, usize> = cut.iter().enumerate().map(|(k, &v)| (v, k)).collect();
    if h.vars().iter().any(|v| !pos.contains_key(v)) {
        return Ok(false);
    }
    let t1 = cut_table(&m.n1, &m.plan.cuts[cut_i].left);
    let t2 = cut_table(&m.n2, &m.plan.cuts[cut_i].right);
    let nl = left.len();
    let eval = |q1: &[u64], q2: &[u64]| {
        h.eval(|v| {
            let k = pos[&v];
            if k < nl {
                bit(q1, k)
            } else {
                bit(q2, k - nl)
            }
        })
    };
    // (a) on every constrained execution.
    if t1.iter().zip(&t2).any(|(a, b)| !eval(a, b)) {
        return Ok(false);
    }
    let image: HashSet<(&[u64], &[u64])> =
        t1.iter().zip(&t2).map(|(a, b)| (a.as_slice(), b.as_slice())).collect();
    let s1: BTreeSet<&[u64]> = t1.iter().map(|r| r.as_slice()).collect();
    let s2: BTreeSet<&[u64]> = t2.iter().map(|r| r.as_slice()).collect();
    if (s1.len() as u64) * (s2.len() as u64) <= 1 << 22 {
        for a in &s1 {
            for b in &s2 {
                if !image.contains(&(*a, *b)) && eval(a, b) {
                    return Ok(false);
                }
            }
        }
        return Ok(true);
    }
    // (b) per left point: right points H accepts, by propagation when few stay free,
    // else by SAT over H and the right side.
    let mut solver = None;
    for a in &s1 {
        if let Some(rows) = accepted_rights(h, &pos, nl, right.len(), a) {
            if rows
                .iter()
                .any(|b| s2.contains(b.as_slice()) && !image.contains(&(*a, b.as_slice())))
            {
                return Ok(false);
            }
            continue;
        }
        let s = solver.get_or_insert_with(|| {
            let mut f = CnfFormula::conjoin(&[h, &m.below_side(cut_i, true)]);
            f.num_vars = m.f.g_rlx.num_vars;
            solver_for(&f, Limits::default())
        });
        let assume: Vec<Lit> = left
            .iter()
            .enumerate()
            .map(|(k, &v)| Lit::new(v, bit(a, k)))
            .collect();
        loop {
            match s.solve(&assume) {
                SatStatus::Unsat => break,
                SatStatus::Unknown => return Err(EcError::Bound(ni)),
                SatStatus::Sat => {}
            }
            let b: Vec<bool> = right.iter().map(|&v| s.model_value(v)).collect();
            let mut row = vec![0u64; right.len().div_ceil(64).max(1)];
            for (k, &x) in b.iter().enumerate() {
                if x {
                    row[k / 64] |= 1 << (k % 64);
                }
            }
            if !image.contains(&(*a, row.as_slice())) {
                return Ok(false);
            }
            let block: Vec<Lit> = assume
                .iter()
                .map(|&l| !l)
                .chain(right.iter().zip(&b).map(|(&v, &x)| Lit::new(v, !x)))
                .collect();
            s.add_clause(&block);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{Gate, GateOp};

    fn single(op: GateOp, name: &str) -> Netlist {
        Netlist::new(
            name,
            vec!["x".into(), "y".into()],
            vec!["z".into()],
            vec![Gate::new("z", op, &["x", "y"])],
        )
        .unwrap()
    }

    fn wire(name: &str) -> Netlist {
        Netlist::new(
            name,
            vec!["x".into()],
            vec!["c".into()],
            vec![Gate::new("c", GateOp::Buf, &["x"])],
        )
        .unwrap()
    }

    fn formula(cs: &[&[i32]]) -> CnfFormula {
        let mut f = CnfFormula::default();
        for c in cs {
            f.add(c.iter().map(|&x| Lit::from_dimacs(x)).collect());
        }
        f
    }

    #[test]
    fn redund_on_wire_pair() {
        // x'=1, x''=2, c'=3, c''=4.
        let eq = formula(&[&[-1, 2], &[1, -2]]);
        let fm = formula(&[&[-3, 1], &[3, -1], &[-4, 2], &[4, -2]]);
        let w: BTreeSet<Var> = [1, 2].into();
        let full = formula(&[&[-3, 4], &[3, -4]]);
        assert_eq!(redund_check(&eq, &full, &fm, &w).unwrap(), None);
        let c = redund_check(&eq, &CnfFormula::default(), &fm, &w)
            .unwrap()
            .unwrap();
        assert!(c == Clause::from_dimacs(&[-3, 4]).unwrap() || c == Clause::from_dimacs(&[3, -4]).unwrap());
        assert_eq!(
            redund_check(&CnfFormula::default(), &CnfFormula::default(), &fm, &w).unwrap(),
            None
        );
    }

    #[test]
    fn identical_and_pair() {
        let n = single(GateOp::And, "a");
        let chain = build_boundary_chain(&n, &n, Mode::Exact).unwrap();
        let h1 = chain.h(1);
        let m = Miter::new(&n, &n).unwrap();
        let z1 = m.roles.z1;
        for (a, b) in [(false, false), (false, true), (true, false), (true, true)] {
            assert_eq!(h1.eval(|v| if v == z1 { a } else { b }), a == b);
        }
        assert!(chain.steps[1].certified);
        assert_eq!(ec_lor(&n, &n, Mode::Exact).unwrap().status, Status::Equivalent);
    }

    #[test]
    fn and_vs_or() {
        let (a, o) = (single(GateOp::And, "a"), single(GateOp::Or, "o"));
        let m = Miter::new(&a, &o).unwrap();
        let chain = build_chain(&m, &EcConfig::default()).unwrap();
        let (z1, z2) = (m.roles.z1, m.roles.z2);
        let h = chain.h(1);
        assert!(!h.eval(|v| v == z1));
        assert!(h.eval(|v| v == z2));
        let v = ec_lor(&a, &o, Mode::Exact).unwrap();
        assert_eq!(v.status, Status::Inequivalent);
        let w = v.witness.unwrap();
        assert_ne!(w.outputs.0, w.outputs.1);
        assert_eq!(w.inputs.len(), 2);
    }

    #[test]
    fn wire_pair_two_levels() {
        let mut w2 = wire("w");
        w2.gates.push(Gate::new("d", GateOp::Buf, &["c"]));
        w2.outputs = vec!["d".into()];
        let w2 = Netlist::new("w", w2.inputs, w2.outputs, w2.gates).unwrap();
        let m = Miter::new(&w2, &w2).unwrap();
        let chain = build_chain(&m, &EcConfig::default()).unwrap();
        assert_eq!(chain.steps.len(), 3);
        for i in 1..=2 {
            let eq = m.cut_equality(i).unwrap();
            assert!(validate_in(&m, chain.h(i), i).unwrap());
            let (l, r) = m.cut_sides(i);
            let h = chain.h(i);
            for (a, b) in [(false, false), (false, true), (true, false), (true, true)] {
                let val = |v: Var| if v == l[0] { a } else if v == r[0] { b } else { unreachable!() };
                assert_eq!(h.eval(val), eq.eval(val));
            }
        }
    }

    #[test]
    fn constant_against_buffer() {
        let c0 = Netlist::new(
            "k",
            vec!["x".into()],
            vec!["z".into()],
            vec![Gate::new("z", GateOp::Const0, &[])],
        )
        .unwrap();
        let b = wire("b");
        let v = ec_lor(&c0, &b, Mode::Exact).unwrap();
        assert_eq!(v.status, Status::Inequivalent);
        assert_eq!(v.witness.unwrap().outputs, (false, true));
        let c1 = Netlist::new(
            "k1",
            vec!["x".into()],
            vec!["z".into()],
            vec![Gate::new("z", GateOp::Const1, &[])],
        )
        .unwrap();
        let v = ec_lor(&c0, &c0, Mode::Exact).unwrap();
        assert!(matches!(v.status, Status::Equivalent | Status::ConstantDegenerate));
        assert_eq!(ec_lor(&c0, &c1, Mode::Exact).unwrap().status, Status::Inequivalent);
    }

    #[test]
    fn validation_examples() {
        let w = wire("w");
        let m = Miter::new(&w, &w).unwrap();
        assert!(validate_in(&m, &m.cut_equality(1).unwrap(), 1).unwrap());
        assert!(!validate_in(&m, &CnfFormula::default(), 1).unwrap());
        let mut zero = CnfFormula::default();
        zero.push(Clause::empty());
        assert!(!validate_in(&m, &zero, 1).unwrap());
    }

    #[test]
    fn beta_requires_certificate() {
        let n = single(GateOp::Xor, "x");
        let m = Miter::new(&n, &n).unwrap();
        let b = Boundary::unverified(1, m.cut_equality(1).unwrap());
        assert!(matches!(
            prove_inequivalence_via_beta(&m, &b),
            Err(EcError::BoundaryNotVerified)
        ));
        let b = Boundary::validated(&m, 1, m.cut_equality(1).unwrap()).unwrap();
        assert_eq!(prove_inequivalence_via_beta(&m, &b).unwrap(), None);
    }

    #[test]
    fn report_is_stable_json() {
        let n = single(GateOp::And, "a");
        let v1 = ec_lor(&n, &n, Mode::Exact).unwrap().to_json();
        let v2 = ec_lor(&n, &n, Mode::Exact).unwrap().to_json();
        assert_eq!(v1, v2);
        let j: serde_json::Value = serde_json::from_str(&v1).unwrap();
        assert_eq!(j["status"], "Equivalent");
        assert_eq!(j["schema"], 1);
        assert_eq!(j["chain"][1]["cut"], 1);
    }
}
