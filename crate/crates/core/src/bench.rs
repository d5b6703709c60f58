// SPDX-License-Identifier: Apache-2.0
//! Benchmark generators (multiplier bit, h-gated pairs, bug injection) and the experiment harness.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnf::{CnfError, Miter};
use crate::eclor::{check, validate_in, EcConfig, Status};
use crate::netlist::{levels_vec, Gate, GateOp, Netlist};
use crate::pqe::{pqe_solve_with, PqeError, PqeOptions, PqeProblem};
use crate::qe::{cut_image_in, QeError};
use crate::sat::{SatStatus, Solver, SolverConfig};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BenchError {
    #[error("operand width {0} outside 2..=16")]
    Range(usize),
    #[error("no binary gate above level {0}")]
    NoGateAboveLevel(usize),
    #[error("every candidate mutation kept the circuit equivalent")]
    NoInequivalentMutation,
    #[error("unknown experiment {0:?}")]
    UnknownExperiment(String),
    #[error(transparent)]
    Cnf(#[from] CnfError),
}

const MAX_K: usize = 16;

struct Builder {
    gates: Vec<Gate>,
    next: usize,
}

impl Builder {
    fn gate(&mut self, op: GateOp, ins: &[&str]) -> String {
        let name = format!("n{}", self.next);
        self.next += 1;
        self.gates.push(Gate::new(name.clone(), op, ins));
        name
    }

    /// Adds up to three bits of equal weight; returns (sum, carry).
    fn add(&mut self, bits: &[String]) -> (String, Option<String>) {
        match bits {
            [x] => (x.clone(), None),
            [x, y] => {
                let s = self.gate(GateOp::Xor, &[x, y]);
                let c = self.gate(GateOp::And, &[x, y]);
                (s, Some(c))
            }
            [x, y, cin] => {
                let t = self.gate(GateOp::Xor, &[x, y]);
                let s = self.gate(GateOp::Xor, &[&t, cin]);
                let g = self.gate(GateOp::And, &[x, y]);
                let p = self.gate(GateOp::And, &[cin, &t]);
                let c = self.gate(GateOp::Or, &[&g, &p]);
                (s, Some(c))
            }
            _ => unreachable!("adder arity"),
        }
    }
}

/// Carry-save array computing product bit `k-1` of `a·b`; returns the gates and the output net.
fn multiplier_bit(k: usize, a: &[String], b: &[String]) -> (Vec<Gate>, String) {
    let mut bl = Builder {
        gates: Vec::new(),
        next: 0,
    };
    let pp = |bl: &mut Builder, i: usize, j: usize| bl.gate(GateOp::And, &[&a[i], &b[j]]);
    // Row j holds sums s[i] of weight i+j and carries c[i] of weight i+j+1.
    let mut s: Vec<String> = (0..k).map(|i| pp(&mut bl, i, 0)).collect();
    let mut c: Vec<Option<String>> = vec![None; k];
    for j in 1..k {
        // Only columns that still reach weight k-1 matter.
        let width = k - j;
        let mut ns = Vec::with_capacity(width);
        let mut nc = Vec::with_capacity(width);
        for (i, ci) in c.iter().take(width).enumerate() {
            let mut bits = vec![pp(&mut bl, i, j)];
            if let Some(x) = s.get(i + 1) {
                bits.push(x.clone());
            }
            if let Some(x) = ci {
                bits.push(x.clone());
            }
            let (sum, carry) = bl.add(&bits);
            ns.push(sum);
            nc.push(carry);
        }
        s = ns;
        c = nc;
    }
    (bl.gates, s[0].clone())
}

fn operand_names(prefix: &str, k: usize) -> Vec<String> {
    (0..k).map(|i| format!("{prefix}{i}")).collect()
}

fn rename_net(gates: &mut [Gate], from: &str, to: &str) {
    for g in gates {
        if g.output == from {
            g.output = to.to_string();
        }
        for i in &mut g.inputs {
            if i == from {
                *i = to.to_string();
            }
        }
    }
}

fn check_k(k: usize) -> Result<(), BenchError> {
    if (2..=MAX_K).contains(&k) {
        Ok(())
    } else {
        Err(BenchError::Range(k))
    }
}

/// `k`-bit array multiplier with inputs `a0..`, `b0..` and output `z` = product bit `k-1`.
pub fn gen_mlp(k: usize) -> Result<Netlist, BenchError> {
    check_k(k)?;
    let a = operand_names("a", k);
    let b = operand_names("b", k);
    let (mut gates, out) = multiplier_bit(k, &a, &b);
    rename_net(&mut gates, &out, "z");
    let inputs = a.into_iter().chain(b).collect();
    let n = Netlist::new(format!("mlp{k}"), inputs, vec!["z".into()], gates)
        .expect("generated multiplier is well formed");
    Ok(n.prune_to_outputs())
}

/// For each net of the first circuit, the nets of the second that determine it.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimilarityMap {
    pub sets: BTreeMap<String, Vec<String>>,
}

impl SimilarityMap {
    pub fn max_size(&self) -> usize {
        self.sets.values().map(Vec::len).max().unwrap_or(0)
    }
}

/// Two equivalent multipliers over inputs `a.., b.., h`: the first gates every
/// primary input with `h`, the second gates only its output. Every net `v` of the
/// first equals `h ∧ v` of the second, where `z` pairs with the second's `m`.
pub fn gen_hgated_pair(k: usize) -> Result<(Netlist, Netlist, SimilarityMap), BenchError> {
    check_k(k)?;
    let a = operand_names("a", k);
    let b = operand_names("b", k);
    let inputs: Vec<String> = a.iter().chain(&b).cloned().chain(["h".into()]).collect();

    let mut g1: Vec<Gate> = Vec::new();
    let ga: Vec<String> = a.iter().map(|x| format!("g{x}")).collect();
    let gb: Vec<String> = b.iter().map(|x| format!("g{x}")).collect();
    for (src, dst) in a.iter().zip(&ga).chain(b.iter().zip(&gb)) {
        g1.push(Gate::new(dst.clone(), GateOp::And, &[src, "h"]));
    }
    let (core1, out1) = multiplier_bit(k, &ga, &gb);
    g1.extend(core1);
    rename_net(&mut g1, &out1, "z");
    let n1 = Netlist::new(format!("hmlp{k}a"), inputs.clone(), vec!["z".into()], g1)
        .expect("generated pair is well formed")
        .prune_to_outputs();

    // N2 reads its operands through buffers so its multiplier sits on the same
    // levels as N1's; each N1 net v then pairs with the N2 net of the same name.
    let mut g2: Vec<Gate> = a
        .iter()
        .zip(&ga)
        .chain(b.iter().zip(&gb))
        .map(|(src, dst)| Gate::new(dst.clone(), GateOp::Buf, &[src]))
        .collect();
    let (core2, out2) = multiplier_bit(k, &ga, &gb);
    g2.extend(core2);
    rename_net(&mut g2, &out2, "m");
    g2.push(Gate::new("z", GateOp::And, &["m", "h"]));
    let n2 = Netlist::new(format!("hmlp{k}b"), inputs, vec!["z".into()], g2)
        .expect("generated pair is well formed")
        .prune_to_outputs();

    let mut sets = BTreeMap::new();
    sets.insert("h".to_string(), vec!["h".to_string()]);
    for x in a.iter().chain(&b) {
        sets.insert(x.clone(), vec![x.clone()]);
    }
    for g in &n1.gates {
        let partner = if g.output == "z" { "m" } else { g.output.as_str() };
        sets.insert(g.output.clone(), vec!["h".into(), partner.to_string()]);
    }
    Ok((n1, n2, SimilarityMap { sets }))
}

fn alpha_status(n1: &Netlist, n2: &Netlist) -> Result<SatStatus, BenchError> {
    let m = Miter::new(n1, n2)?;
    Ok(Solver::from_formula(&m.f.alpha).solve(&[]))
}

/// Changes the operator of one gate above `min_level`; retries with the next seed
/// while the mutant stays equivalent.
pub fn inject_bug(n: &Netlist, min_level: usize, seed: u64) -> Result<Netlist, BenchError> {
    let levels = levels_vec(n);
    let ni = n.inputs.len();
    let candidates: Vec<usize> = (0..n.gates.len())
        .filter(|&g| n.gates[g].op.is_binary() && levels[ni + g] > min_level)
        .collect();
    if candidates.is_empty() {
        return Err(BenchError::NoGateAboveLevel(min_level));
    }
    let attempts = 64 * candidates.len() as u64;
    for s in seed..seed.saturating_add(attempts) {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let g = candidates[rng.gen_range(0..candidates.len())];
        let old = n.gates[g].op;
        let ops: Vec<GateOp> = GateOp::BINARY.into_iter().filter(|&o| o != old).collect();
        let mut buggy = n.clone();
        buggy.gates[g].op = ops[rng.gen_range(0..ops.len())];
        buggy.name = format!("{}_bug{s}", n.name);
        if alpha_status(n, &buggy)? == SatStatus::Sat {
            return Ok(buggy);
        }
    }
    Err(BenchError::NoInequivalentMutation)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Table1,
    Table2,
    Table3,
}

impl std::str::FromStr for Experiment {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table1" => Ok(Experiment::Table1),
            "table2" => Ok(Experiment::Table2),
            "table3" => Ok(Experiment::Table3),
            _ => Err(BenchError::UnknownExperiment(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentParams {
    /// Operand widths (tables 1 and 2) or the single width used by table 3.
    pub ks: Vec<usize>,
    /// `table3`: number of buggy instances per width.
    pub seeds: u64,
    pub first_seed: u64,
    /// `table3` cut index.
    pub cut: usize,
    pub pqe: PqeOptions,
    pub sat_conflicts: Option<u64>,
    pub jobs: usize,
    pub wall_clock: bool,
}

impl ExperimentParams {
    pub fn defaults_for(e: Experiment) -> ExperimentParams {
        let ks = match e {
            Experiment::Table1 => vec![4, 5, 6],
            Experiment::Table2 => vec![2, 3, 4],
            Experiment::Table3 => vec![8],
        };
        ExperimentParams {
            ks,
            seeds: 20,
            first_seed: 0,
            cut: 3,
            pqe: PqeOptions::default(),
            sat_conflicts: None,
            jobs: 0,
            wall_clock: false,
        }
    }
}

/// One instance. Columns that do not apply to a table stay empty.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub id: String,
    pub k: usize,
    pub seed: Option<u64>,
    pub inputs: usize,
    pub gates: usize,
    /// `ok`, or `budget` when a limit stopped the row.
    pub status: String,
    pub verdict: Option<String>,
    /// Direct SAT answer for the miter `α`.
    pub alpha_sat: Option<bool>,
    pub verdict_consistent: Option<bool>,
    pub r_clauses: Option<usize>,
    pub h_clauses: Option<usize>,
    pub h_width: Option<usize>,
    pub pqe_nodes: Option<u64>,
    pub boundary_validated: Option<bool>,
    pub alpha_decisions: Option<u64>,
    pub beta_decisions: Option<u64>,
    pub beta_sat: Option<bool>,
    pub qe_ms: Option<u64>,
    pub pqe_ms: Option<u64>,
    pub ec_ms: Option<u64>,
    pub alpha_ms: Option<u64>,
    pub beta_ms: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: Experiment,
    pub rows: Vec<Row>,
}

impl ExperimentReport {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).expect("rows serialize");
        }
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn ms(t: Instant, on: bool) -> Option<u64> {
    on.then(|| t.elapsed().as_millis() as u64)
}

fn sat_cfg(p: &ExperimentParams) -> SolverConfig {
    SolverConfig {
        conflict_limit: p.sat_conflicts,
        ..Default::default()
    }
}

fn base_row(id: String, k: usize, n: &Netlist) -> Row {
    Row {
        id,
        k,
        inputs: n.inputs.len(),
        gates: n.gates.len(),
        status: "ok".into(),
        ..Default::default()
    }
}

fn status_name(s: Status) -> String {
    format!("{s:?}")
}

fn table1_row(k: usize, p: &ExperimentParams) -> Result<Row, BenchError> {
    let n = gen_mlp(k)?;
    let m = Miter::new(&n, &n)?;
    let mut row = base_row(format!("mlp{k}x2"), k, &n);
    let limits = p.pqe.limits;
    let t = Instant::now();
    match cut_image_in(&m, 1, limits) {
        Ok(r) => row.r_clauses = Some(r.len()),
        Err(QeError::Budget(_)) => row.status = "budget".into(),
        Err(e) => unreachable!("level-1 cut exists: {e}"),
    }
    row.qe_ms = ms(t, p.wall_clock);
    let t = Instant::now();
    let cut: Vec<_> = m.cut_vars(1).to_vec();
    let b = m.below(1);
    let w: Vec<_> = b.vars().into_iter().filter(|v| !cut.contains(v)).collect();
    let prob = PqeProblem::new(m.f.eq.clone(), b, w);
    match pqe_solve_with(&prob, p.pqe) {
        Ok(s) => {
            row.h_clauses = Some(s.astar.len());
            row.h_width = Some(s.astar.max_width());
            row.pqe_nodes = Some(s.stats.nodes);
        }
        Err(PqeError::Budget(_)) => row.status = "budget".into(),
        Err(e) => unreachable!("pqe on a miter slice: {e}"),
    }
    row.pqe_ms = ms(t, p.wall_clock);
    let alpha = Solver::from_formula_with(&m.f.alpha, sat_cfg(p)).solve(&[]);
    row.alpha_sat = sat_bool(alpha);
    Ok(row)
}

fn sat_bool(s: SatStatus) -> Option<bool> {
    match s {
        SatStatus::Sat => Some(true),
        SatStatus::Unsat => Some(false),
        SatStatus::Unknown => None,
    }
}

fn consistent(status: Status, alpha_sat: Option<bool>) -> Option<bool> {
    let a = alpha_sat?;
    Some(match status {
        Status::Equivalent | Status::ConstantDegenerate => !a,
        Status::Inequivalent => a,
        Status::Unknown => true,
    })
}

fn table2_row(k: usize, p: &ExperimentParams) -> Result<Row, BenchError> {
    let (n1, n2, _) = gen_hgated_pair(k)?;
    let m = Miter::new(&n1, &n2)?;
    let mut row = base_row(format!("hmlp{k}"), k, &n1);
    let cfg = EcConfig {
        pqe: p.pqe,
        wall_clock: p.wall_clock,
        ..EcConfig::star()
    };
    let t = Instant::now();
    let v = check(&m, &cfg);
    row.ec_ms = ms(t, p.wall_clock);
    if v.status == Status::Unknown && v.chain.steps.len() <= m.levels() {
        row.status = "budget".into();
    }
    row.h_clauses = Some(v.chain.steps.iter().map(|s| s.h.len()).max().unwrap_or(0));
    row.h_width = Some(v.chain.max_width());
    row.pqe_nodes = Some(v.timings.pqe_nodes);
    row.verdict = Some(status_name(v.status));
    let alpha = Solver::from_formula_with(&m.f.alpha, sat_cfg(p)).solve(&[]);
    row.alpha_sat = sat_bool(alpha);
    row.verdict_consistent = consistent(v.status, row.alpha_sat);
    Ok(row)
}

fn table3_row(k: usize, seed: u64, p: &ExperimentParams) -> Result<Row, BenchError> {
    let n = gen_mlp(k)?;
    let bug = inject_bug(&n, p.cut, seed)?;
    let m = Miter::new(&n, &bug)?;
    let mut row = base_row(format!("mlp{k}_bug{seed}"), k, &n);
    row.seed = Some(seed);
    let h = m.cut_equality(p.cut).expect("identical logic below the cut");
    row.h_clauses = Some(h.len());
    row.h_width = Some(h.max_width());
    let valid = validate_in(&m, &h, p.cut).unwrap_or(false);
    row.boundary_validated = Some(valid);
    let t = Instant::now();
    let mut sa = Solver::from_formula_with(&m.f.alpha, sat_cfg(p));
    let a = sa.solve(&[]);
    row.alpha_ms = ms(t, p.wall_clock);
    row.alpha_sat = sat_bool(a);
    row.alpha_decisions = Some(sa.stats().decisions);
    if valid {
        let t = Instant::now();
        let mut sb = Solver::from_formula_with(&m.f.beta(&h), sat_cfg(p));
        let b = sb.solve(&[]);
        row.beta_ms = ms(t, p.wall_clock);
        row.beta_sat = sat_bool(b);
        row.beta_decisions = Some(sb.stats().decisions);
        let verdict = match b {
            SatStatus::Sat => Status::Inequivalent,
            SatStatus::Unsat => Status::Equivalent,
            SatStatus::Unknown => Status::Unknown,
        };
        row.verdict = Some(status_name(verdict));
        row.verdict_consistent = consistent(verdict, row.alpha_sat);
    }
    if a == SatStatus::Unknown || row.beta_sat.is_none() {
        row.status = "budget".into();
    }
    Ok(row)
}

/// Runs one of the three experiments; rows are computed in parallel and reported in order.
pub fn run_experiment(e: Experiment, p: &ExperimentParams) -> Result<ExperimentReport, BenchError> {
    let jobs: Vec<(usize, Option<u64>)> = match e {
        Experiment::Table3 => p
            .ks
            .iter()
            .flat_map(|&k| (p.first_seed..p.first_seed + p.seeds).map(move |s| (k, Some(s))))
            .collect(),
        _ => p.ks.iter().map(|&k| (k, None)).collect(),
    };
    let run = |&(k, seed): &(usize, Option<u64>)| match e {
        Experiment::Table1 => table1_row(k, p),
        Experiment::Table2 => table2_row(k, p),
        Experiment::Table3 => table3_row(k, seed.unwrap_or(0), p),
    };
    let rows: Result<Vec<Row>, BenchError> = if p.jobs == 1 {
        jobs.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(p.jobs)
            .build()
            .expect("thread pool");
        pool.install(|| jobs.par_iter().map(run).collect())
    };
    Ok(ExperimentReport {
        experiment: e,
        rows: rows?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(x: u64, k: usize) -> Vec<bool> {
        (0..k).map(|i| x >> i & 1 == 1).collect()
    }

    fn mlp_out(n: &Netlist, k: usize, a: u64, b: u64) -> bool {
        let mut ins = bits(a, k);
        ins.extend(bits(b, k));
        n.eval(&ins)[0]
    }

    #[test]
    fn mlp2_examples() {
        let n = gen_mlp(2).unwrap();
        assert!(mlp_out(&n, 2, 3, 1));
        assert!(!mlp_out(&n, 2, 3, 3));
    }

    #[test]
    fn mlp_matches_multiplication() {
        for k in 2..=5 {
            let n = gen_mlp(k).unwrap();
            for a in 0..1u64 << k {
                for b in 0..1u64 << k {
                    assert_eq!(mlp_out(&n, k, a, b), (a * b) >> (k - 1) & 1 == 1, "k={k}");
                }
            }
        }
    }

    #[test]
    fn mlp_range() {
        assert_eq!(gen_mlp(1).unwrap_err(), BenchError::Range(1));
        assert_eq!(gen_mlp(17).unwrap_err(), BenchError::Range(17));
    }

    #[test]
    fn hgated_pair_behaviour() {
        let (n1, n2, smap) = gen_hgated_pair(2).unwrap();
        let mlp = gen_mlp(2).unwrap();
        for x in 0..16u64 {
            let mut ins = bits(x, 4);
            ins.push(false);
            assert_eq!(n1.eval(&ins), vec![false]);
            assert_eq!(n2.eval(&ins), vec![false]);
            ins[4] = true;
            let want = mlp.eval(&ins[..4]);
            assert_eq!(n1.eval(&ins), want);
            assert_eq!(n2.eval(&ins), want);
        }
        assert_eq!(smap.max_size(), 2);
        assert_eq!(alpha_status(&n1, &n2).unwrap(), SatStatus::Unsat);
    }

    #[test]
    fn bug_is_deterministic_and_inequivalent() {
        let n = gen_mlp(4).unwrap();
        let b1 = inject_bug(&n, 2, 0).unwrap();
        let b2 = inject_bug(&n, 2, 0).unwrap();
        assert_eq!(b1, b2);
        assert_eq!(alpha_status(&n, &b1).unwrap(), SatStatus::Sat);
        let d = crate::netlist::depth(&n);
        assert_eq!(inject_bug(&n, d, 0).unwrap_err(), BenchError::NoGateAboveLevel(d));
    }

    #[test]
    fn csv_header_is_fixed() {
        let r = ExperimentReport {
            experiment: Experiment::Table1,
            rows: vec![Row::default()],
        };
        let csv = r.to_csv();
        assert!(csv.starts_with("id,k,seed,inputs,gates,status,verdict,alpha_sat,"));
    }
}
