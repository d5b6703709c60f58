// SPDX-License-Identifier: Apache-2.0
//! Acceptance criteria 1 to 9. Each test prints one `criterion N: PASS|FAIL` line
//! on stderr and fails on any hard violation.

mod common;

use std::collections::BTreeSet;
use std::io::Write;

use common::*;
use rand::Rng;
use relaxec::bench::{
    gen_hgated_pair, gen_mlp, inject_bug, run_experiment, Experiment, ExperimentParams,
};
use relaxec::cnf::{emit_dimacs, Clause, CnfFormula, Lit, Miter, Var};
use relaxec::eclor::{
    build_chain, check, prove_inequivalence_via_beta, validate_in, Boundary, EcConfig, Mode,
    Status,
};
use relaxec::netlist::{bufferize, emit_blif, levels_vec, parse_blif, Netlist};
use relaxec::pqe::{pqe_oracle, pqe_solve, verify_pqe_solution};
use relaxec::relax::{broken_interpolant, extract_interpolant, relax_general, RelaxSplit};
use relaxec::sat::{implies, solve};

/// Random miters for criteria 1, 3 and 4.
const RANDOM_MITERS: u64 = 300;
/// Inputs per side; both sides together stay within 12.
const MAX_INPUTS_PER_SIDE: usize = 6;
const PQE_INSTANCES: u64 = 300;
const TABLE1_MIN_GEOMEAN: f64 = 2.0;
const MAX_BOUNDARY_WIDTH: usize = 3;
const TABLE3_SEEDS: u64 = 20;
const RELAX_SPLITS: u64 = 300;
const UNSAT_INSTANCES: usize = 100;
const SAT_INSTANCES: usize = 200;

fn report(n: u32, failures: &[String], detail: &str) {
    let verdict = if failures.is_empty() { "PASS" } else { "FAIL" };
    // Straight to the stderr handle, which the test harness does not capture.
    let mut line = format!("criterion {n}: {verdict} ({detail})\n");
    for f in failures.iter().take(10) {
        line += &format!("  {f}\n");
    }
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(failures.is_empty(), "criterion {n}: {} failures, first: {}", failures.len(), failures[0]);
}

fn alpha_sat(m: &Miter) -> bool {
    solve(&m.f.alpha, &[]).is_sat()
}

fn exact() -> EcConfig {
    EcConfig::default()
}

/// Random pairs plus the h-gated family, as built miters with a label.
fn miter_corpus() -> Vec<(String, Miter)> {
    let mut out: Vec<(String, Miter)> = (0..RANDOM_MITERS)
        .map(|s| {
            let (a, b) = random_pair(s, MAX_INPUTS_PER_SIDE);
            (format!("random seed {s}"), Miter::new(&a, &b).unwrap())
        })
        .collect();
    for k in 2..=4 {
        let (a, b, _) = gen_hgated_pair(k).unwrap();
        out.push((format!("hgated k={k}"), Miter::new(&a, &b).unwrap()));
    }
    out
}

#[test]
fn criterion_1_boundary_soundness() {
    let mut failures = Vec::new();
    let mut checked = 0;
    for (name, m) in miter_corpus() {
        let chain = match build_chain(&m, &exact()) {
            Ok(c) => c,
            Err(e) => {
                failures.push(format!("{name}: {e}"));
                continue;
            }
        };
        for (i, st) in chain.steps.iter().enumerate() {
            checked += 1;
            if !validate_in(&m, &st.h, i).unwrap() {
                failures.push(format!("{name}: H_{i} is not a boundary formula"));
            }
        }
    }
    report(1, &failures, &format!("{checked} cut formulas validated"));
}

#[test]
fn criterion_2_pqe_correctness() {
    let mut failures = Vec::new();
    for seed in 0..PQE_INSTANCES {
        let p = random_problem(seed);
        let s = pqe_solve(&p).unwrap();
        let o = pqe_oracle(&p).unwrap();
        if !verify_pqe_solution(&p, &s) {
            failures.push(format!("seed {seed}: verify_pqe_solution rejected the output"));
        }
        let all: Vec<Var> = (1..=p.num_vars()).collect();
        let vs = p.v();
        let b_pts = projection(&p.b, &all, &vs);
        for (bits, pt) in points(&vs) {
            if !b_pts.contains(&bits) {
                continue;
            }
            if s.astar.eval(lookup(&pt)) != o.astar.eval(lookup(&pt)) {
                failures.push(format!("seed {seed}: solver and oracle differ at {bits:b}"));
                break;
            }
        }
    }
    report(2, &failures, &format!("{PQE_INSTANCES} instances"));
}

/// A labelled miter with validated cut formulas keyed by cut index.
type BenchCase = (String, Miter, Vec<(usize, CnfFormula)>);

fn bench_boundaries() -> Vec<BenchCase> {
    let mut out = Vec::new();
    for k in 2..=4 {
        let (a, b, _) = gen_hgated_pair(k).unwrap();
        let m = Miter::new(&a, &b).unwrap();
        let chain = build_chain(&m, &exact()).unwrap();
        let hs = chain.steps.iter().enumerate().map(|(i, s)| (i, s.h.clone())).collect();
        out.push((format!("hgated k={k}"), m, hs));
    }
    let mlp = gen_mlp(6).unwrap();
    for seed in 0..10 {
        let bug = inject_bug(&mlp, 3, seed).unwrap();
        let m = Miter::new(&mlp, &bug).unwrap();
        let h = m.cut_equality(3).unwrap();
        assert!(validate_in(&m, &h, 3).unwrap());
        out.push((format!("mlp6 bug seed {seed}"), m, vec![(3, h)]));
    }
    out
}

#[test]
fn criterion_3_alpha_beta_equisatisfiable() {
    let mut failures = Vec::new();
    let mut pairs = 0;
    for (name, m) in miter_corpus() {
        let a = alpha_sat(&m);
        let chain = build_chain(&m, &exact()).unwrap();
        for (i, st) in chain.steps.iter().enumerate() {
            pairs += 1;
            if solve(&m.f.beta(&st.h), &[]).is_sat() != a {
                failures.push(format!("{name}: alpha and beta at cut {i} disagree"));
            }
        }
    }
    for (name, m, hs) in bench_boundaries() {
        let a = alpha_sat(&m);
        for (i, h) in hs {
            pairs += 1;
            if solve(&m.f.beta(&h), &[]).is_sat() != a {
                failures.push(format!("{name}: alpha and beta at cut {i} disagree"));
            }
        }
    }
    report(3, &failures, &format!("{pairs} alpha/beta pairs"));
}

fn verdict_ok(status: Status, mode: Mode, alpha: bool) -> bool {
    match (status, mode) {
        (Status::Equivalent | Status::ConstantDegenerate, _) => !alpha,
        (Status::Inequivalent, _) => alpha,
        (Status::Unknown, Mode::Exact) => false,
        (Status::Unknown, Mode::Approximate) => true,
    }
}

#[test]
fn criterion_4_verdict_soundness() {
    let mut failures = Vec::new();
    let mut runs = 0;
    let mut check_one = |name: &str, m: &Miter, want: Option<Status>, failures: &mut Vec<String>| {
        let alpha = alpha_sat(m);
        for cfg in [EcConfig::default(), EcConfig::star()] {
            runs += 1;
            let v = check(m, &cfg);
            if !verdict_ok(v.status, cfg.mode, alpha) {
                failures.push(format!("{name}: {:?} mode said {:?}, alpha SAT = {alpha}", cfg.mode, v.status));
            }
            if let Some(w) = &v.witness {
                if m.n1.eval(&w.inputs) == m.n2.eval(&w.inputs) {
                    failures.push(format!("{name}: witness does not distinguish the outputs"));
                }
            }
            if let Some(want) = want {
                let relevant = cfg.mode == Mode::Exact || want == Status::Equivalent;
                if relevant && v.status != want {
                    failures.push(format!("{name}: {:?} mode said {:?}, expected {want:?}", cfg.mode, v.status));
                }
            }
        }
    };
    for (name, m) in miter_corpus() {
        let want = name.starts_with("hgated").then_some(Status::Equivalent);
        check_one(&name, &m, want, &mut failures);
    }
    for k in 2..=5 {
        let n = gen_mlp(k).unwrap();
        check_one(&format!("mlp{k} doubled"), &Miter::new(&n, &n).unwrap(), Some(Status::Equivalent), &mut failures);
    }
    for k in 4..=6 {
        let n = gen_mlp(k).unwrap();
        for seed in 0..3 {
            let bug = inject_bug(&n, 2, seed).unwrap();
            let m = Miter::new(&n, &bug).unwrap();
            let name = format!("mlp{k} bug seed {seed}");
            check_one(&name, &m, Some(Status::Inequivalent), &mut failures);
            let h = m.cut_equality(2).unwrap();
            let b = Boundary::validated(&m, 2, h).unwrap();
            match prove_inequivalence_via_beta(&m, &b).unwrap() {
                Some(w) if n.eval(&w.inputs) != bug.eval(&w.inputs) => {}
                Some(_) => failures.push(format!("{name}: beta witness does not distinguish")),
                None => failures.push(format!("{name}: beta path missed the bug")),
            }
        }
    }
    report(4, &failures, &format!("{runs} checker runs against direct alpha calls"));
}

#[test]
fn criterion_5_table1_trend() {
    let p = ExperimentParams::defaults_for(Experiment::Table1);
    assert_eq!(p.ks, vec![4, 5, 6]);
    let r = run_experiment(Experiment::Table1, &p).unwrap();
    let mut failures = Vec::new();
    let mut log_sum = 0.0;
    for row in &r.rows {
        match (row.status.as_str(), row.r_clauses, row.h_clauses) {
            ("ok", Some(rc), Some(hc)) => {
                if hc >= rc {
                    failures.push(format!("{}: |H| = {hc} is not below |R| = {rc}", row.id));
                }
                log_sum += (rc as f64 / hc.max(1) as f64).ln();
            }
            _ => failures.push(format!("{}: row incomplete ({})", row.id, row.status)),
        }
        if row.alpha_sat != Some(false) {
            failures.push(format!("{}: doubled circuit miter is not UNSAT", row.id));
        }
    }
    let geomean = (log_sum / r.rows.len() as f64).exp();
    if geomean < TABLE1_MIN_GEOMEAN {
        failures.push(format!("geometric mean |R|/|H| = {geomean:.2} below {TABLE1_MIN_GEOMEAN}"));
    }
    let sizes: Vec<String> = r
        .rows
        .iter()
        .map(|r| format!("k={} |R|={} |H|={}", r.k, r.r_clauses.unwrap_or(0), r.h_clauses.unwrap_or(0)))
        .collect();
    report(5, &failures, &format!("{}; geomean ratio {geomean:.2}", sizes.join(", ")));
}

/// `f` and `g` agree wherever `context` holds.
fn equivalent_under(context: &CnfFormula, f: &CnfFormula, g: &CnfFormula) -> bool {
    let with = |x: &CnfFormula| {
        let mut c = CnfFormula::conjoin(&[context, x]);
        c.num_vars = context.num_vars.max(x.num_vars);
        c
    };
    let (cf, cg) = (with(f), with(g));
    g.clauses.iter().all(|c| implies(&cf, c)) && f.clauses.iter().all(|c| implies(&cg, c))
}

#[test]
fn criterion_6_width_bounds() {
    let mut failures = Vec::new();
    let mut widths = Vec::new();
    for k in 2..=4 {
        let (a, b, smap) = gen_hgated_pair(k).unwrap();
        assert_eq!(smap.max_size(), 2);
        let m = Miter::new(&a, &b).unwrap();
        let chain = build_chain(&m, &exact()).unwrap();
        let w = chain.max_width();
        widths.push(format!("k={k}: {w}"));
        if w > MAX_BOUNDARY_WIDTH {
            failures.push(format!("hgated k={k}: clause of width {w}"));
        }
    }
    let mut identical: Vec<(String, Netlist)> = (2..=5).map(|k| (format!("mlp{k}"), gen_mlp(k).unwrap())).collect();
    identical.extend((0..60).map(|s| (format!("random seed {s}"), random_pair(3 * s, MAX_INPUTS_PER_SIDE).0)));
    let mut strict = 0;
    let mut total = 0;
    for (name, n) in identical {
        let m = Miter::new(&n, &n).unwrap();
        let chain = build_chain(&m, &exact()).unwrap();
        for (i, st) in chain.steps.iter().enumerate() {
            total += 1;
            let eq = m.cut_equality(i).unwrap();
            let p = eq.len() / 2;
            if !equivalent_under(&m.below(i), &st.h, &eq) {
                failures.push(format!("{name}: H_{i} differs from cut equality on the relaxed image"));
            }
            if eq.len() != 2 * p || eq.max_width() > 2 {
                failures.push(format!("{name}: cut equality at {i} is not 2p binary clauses"));
            }
            if equivalent_under(&CnfFormula::new(m.f.g_rlx.num_vars), &st.h, &eq) {
                strict += 1;
            }
        }
    }
    report(
        6,
        &failures,
        &format!(
            "h-gated max widths [{}]; {total} identical-pair cut formulas match cut equality, {strict} of them also equivalent without the circuit constraints",
            widths.join(", ")
        ),
    );
}

#[test]
fn criterion_7_table3() {
    let mut p = ExperimentParams::defaults_for(Experiment::Table3);
    p.ks = vec![8];
    p.seeds = TABLE3_SEEDS;
    p.cut = 3;
    let r = run_experiment(Experiment::Table3, &p).unwrap();
    let mut failures = Vec::new();
    let mut da = Vec::new();
    let mut db = Vec::new();
    for row in &r.rows {
        if row.boundary_validated != Some(true) {
            failures.push(format!("{}: cut equality at 3 not validated", row.id));
        }
        if row.status != "ok" || row.alpha_sat != Some(true) || row.beta_sat != Some(true) {
            failures.push(format!("{}: alpha {:?}, beta {:?}", row.id, row.alpha_sat, row.beta_sat));
        }
        da.extend(row.alpha_decisions);
        db.extend(row.beta_decisions);
    }
    if r.rows.len() < TABLE3_SEEDS as usize {
        failures.push(format!("only {} rows", r.rows.len()));
    }
    let median = |v: &mut Vec<u64>| {
        v.sort_unstable();
        if v.is_empty() {
            0.0
        } else if v.len() % 2 == 1 {
            v[v.len() / 2] as f64
        } else {
            (v[v.len() / 2 - 1] + v[v.len() / 2]) as f64 / 2.0
        }
    };
    let (ma, mb) = (median(&mut da), median(&mut db));
    let soft = if mb <= ma { "holds" } else { "FLAGGED: beta median above alpha median" };
    report(
        7,
        &failures,
        &format!(
            "{} rows solved by alpha and beta; median decisions alpha {ma} beta {mb}, soft ordering {soft}",
            r.rows.len()
        ),
    );
}

/// Random split of a formula over at most 14 variables.
fn random_split(seed: u64) -> RelaxSplit {
    let mut r = rng(seed);
    let nv = r.gen_range(2..=14);
    let m = r.gen_range(1..=2 * nv as usize);
    let s = random_formula(&mut r, nv, m, 3);
    let e: BTreeSet<usize> = (0..s.len()).filter(|_| r.gen_bool(0.3)).collect();
    let x: BTreeSet<Var> = (1..=nv).filter(|_| r.gen_bool(0.5)).collect();
    let z: BTreeSet<Var> = (1..=nv).filter(|v| !x.contains(v)).collect();
    RelaxSplit::new(s, e, x, z).unwrap()
}

fn relaxation_splits(failures: &mut Vec<String>) {
    for seed in 0..RELAX_SPLITS {
        let sp = random_split(seed);
        let h = relax_general(&sp).unwrap();
        let all: Vec<Var> = (1..=sp.s.num_vars).collect();
        let z: Vec<Var> = sp.z.iter().copied().collect();
        let full = projection(&sp.s, &all, &z);
        let rlx = projection(&sp.s_rlx(), &all, &z);
        for (bits, pt) in points(&z) {
            let rhs = h.eval(lookup(&pt)) && rlx.contains(&bits);
            if full.contains(&bits) != rhs {
                failures.push(format!("relaxation seed {seed}: relation fails at {bits:b}"));
                break;
            }
        }
        let mut hs = CnfFormula::conjoin(&[&h, &sp.s_rlx()]);
        hs.num_vars = sp.s.num_vars;
        if solve(&sp.s, &[]).is_sat() != solve(&hs, &[]).is_sat() {
            failures.push(format!("relaxation seed {seed}: not equisatisfiable"));
        }
    }
}

/// `A` over x-vars and shared vars, `B` over shared vars and z-vars.
fn random_ab(seed: u64) -> (CnfFormula, CnfFormula) {
    let mut r = rng(seed);
    let (nx, ny, nz) = (r.gen_range(1..=3), r.gen_range(1..=3), r.gen_range(1..=3));
    let pick = |r: &mut rand_chacha::ChaCha8Rng, lo: u32, n: u32, m: usize| {
        let mut f = CnfFormula::new(nx + ny + nz);
        for _ in 0..m {
            let w = r.gen_range(1..=3);
            f.add((0..w).map(|_| Lit::new(r.gen_range(lo..lo + n), r.gen_bool(0.5))).collect());
        }
        f
    };
    // Variables 1..=nx are X, then Y, then Z.
    let ma = r.gen_range(1..=5);
    let a = pick(&mut r, 1, nx + ny, ma);
    let mb = r.gen_range(1..=5);
    let b = pick(&mut r, nx + 1, ny + nz, mb);
    (a, b)
}

struct Projections {
    y: Vec<Var>,
    a_pts: BTreeSet<u64>,
    b_pts: BTreeSet<u64>,
}

fn projections(a: &CnfFormula, b: &CnfFormula) -> Projections {
    let va: BTreeSet<Var> = a.vars().into_iter().collect();
    let vb: BTreeSet<Var> = b.vars().into_iter().collect();
    let y: Vec<Var> = va.intersection(&vb).copied().collect();
    let av: Vec<Var> = va.into_iter().collect();
    let bv: Vec<Var> = vb.into_iter().collect();
    Projections {
        a_pts: projection(a, &av, &y),
        b_pts: projection(b, &bv, &y),
        y,
    }
}

fn sat_ab(a: &CnfFormula, b: &CnfFormula) -> bool {
    let mut f = CnfFormula::conjoin(&[a, b]);
    f.num_vars = a.num_vars.max(b.num_vars);
    solve(&f, &[]).is_sat()
}

fn unsat_interpolants(failures: &mut Vec<String>) -> usize {
    let mut n = 0;
    let mut seed = 10_000;
    while n < UNSAT_INSTANCES {
        seed += 1;
        let (a, b) = random_ab(seed);
        if sat_ab(&a, &b) {
            continue;
        }
        n += 1;
        let pr = projections(&a, &b);
        let h = extract_interpolant(&a, &b).unwrap();
        let hv: Vec<bool> = points(&pr.y).map(|(_, pt)| h.eval(lookup(&pt))).collect();
        let np = hv.len() as u64;
        let a_implies = |f: &dyn Fn(u64) -> bool| pr.a_pts.iter().all(|&p| f(p));
        let relation = |f: &dyn Fn(u64) -> bool| (0..np).all(|p| !(f(p) && pr.b_pts.contains(&p)));
        let h_fn = |p: u64| hv[p as usize];
        if !a_implies(&h_fn) || !relation(&h_fn) {
            failures.push(format!("interpolant seed {seed}: constructed H is not an interpolant"));
        }
        // The PQE relation, with A ∧ B UNSAT, is exactly "H ∧ B UNSAT" on B's points;
        // enumerate every function of Y and compare both characterizations.
        for t in 0..1u64 << np {
            let f = |p: u64| t >> p & 1 == 1;
            let pqe_rel = (0..np).all(|p| {
                let lhs = pr.a_pts.contains(&p) && pr.b_pts.contains(&p);
                lhs == (f(p) && pr.b_pts.contains(&p))
            });
            let cond1 = a_implies(&f) && pqe_rel;
            let cond2 = a_implies(&f) && relation(&f);
            if cond1 != cond2 {
                failures.push(format!("interpolant seed {seed}: iff fails for function {t:b}"));
                break;
            }
        }
    }
    n
}

fn sat_extensions(failures: &mut Vec<String>) -> usize {
    let mut n = 0;
    let mut seed = 50_000;
    while n < SAT_INSTANCES {
        seed += 1;
        let (a, b) = random_ab(seed);
        if !sat_ab(&a, &b) {
            continue;
        }
        n += 1;
        let pr = projections(&a, &b);
        let (h, ext) = broken_interpolant(&a, &b).unwrap();
        for (bits, pt) in points(&pr.y) {
            let hy = h.eval(lookup(&pt));
            if pr.a_pts.contains(&bits) && !hy {
                failures.push(format!("extension seed {seed}: A does not imply H"));
            }
            if hy && pr.b_pts.contains(&bits) && !pr.a_pts.contains(&bits) {
                failures.push(format!("extension seed {seed}: point {bits:b} of H ∧ B does not extend"));
            }
        }
        match ext {
            Some(e) => {
                let val = |v: Var| e.full.iter().any(|&l| l == Lit::pos(v));
                if !(a.eval(val) && b.eval(val)) {
                    failures.push(format!("extension seed {seed}: extension is not an A ∧ B model"));
                }
            }
            None => failures.push(format!("extension seed {seed}: no witness for a SAT instance")),
        }
    }
    n
}

#[test]
fn criterion_8_interpolation_suite() {
    let mut failures = Vec::new();
    relaxation_splits(&mut failures);
    let n7 = unsat_interpolants(&mut failures);
    let n8 = sat_extensions(&mut failures);
    report(
        8,
        &failures,
        &format!("{RELAX_SPLITS} relaxation splits, {n7} UNSAT iff tests, {n8} SAT extensions"),
    );
}

fn all_patterns(n: &Netlist) -> Vec<Vec<bool>> {
    let ni = n.inputs.len();
    (0..1u64 << ni)
        .map(|p| (0..ni).map(|j| p >> j & 1 == 1).collect())
        .collect()
}

#[test]
fn criterion_9_infrastructure() {
    let mut failures = Vec::new();
    for seed in 0..200 {
        let mut r = rng(seed);
        let ni = r.gen_range(1..=12);
        let n = random_netlist(&mut r, "n", ni, 24, 8);
        match parse_blif(&emit_blif(&n)) {
            Ok(back) if back == n => {}
            _ => failures.push(format!("seed {seed}: BLIF round trip changed the netlist")),
        }
        let b = bufferize(&n);
        let lv = levels_vec(&b);
        let fanins = b.gate_fanins();
        for (g, fi) in fanins.iter().enumerate() {
            let l = lv[b.inputs.len() + g];
            if fi.iter().any(|&f| lv[f] + 1 != l) {
                failures.push(format!("seed {seed}: bufferized edge spans several levels"));
                break;
            }
        }
        for pat in all_patterns(&n) {
            if n.eval(&pat) != b.eval(&pat) {
                failures.push(format!("seed {seed}: bufferize changed the function"));
                break;
            }
        }
    }
    let mut f = CnfFormula::new(2);
    f.push(Clause::from_dimacs(&[1, -2]).unwrap());
    if emit_dimacs(&f) != "p cnf 2 1\n1 -2 0\n" {
        failures.push("DIMACS fixture (1 -2) mismatch".into());
    }
    if emit_dimacs(&CnfFormula::default()) != "p cnf 0 0\n" {
        failures.push("DIMACS fixture (empty) mismatch".into());
    }
    let mut named = formula(&[&[1], &[-1, 2]]);
    named.names.insert(1, "x".into());
    if emit_dimacs(&named) != "c map 1 x\np cnf 2 2\n1 0\n-1 2 0\n" {
        failures.push("DIMACS fixture (named) mismatch".into());
    }
    for k in 2..=6 {
        let n = gen_mlp(k).unwrap();
        for a in 0..1u64 << k {
            for b in 0..1u64 << k {
                let mut ins: Vec<bool> = (0..k).map(|i| a >> i & 1 == 1).collect();
                ins.extend((0..k).map(|i| b >> i & 1 == 1));
                if n.eval(&ins)[0] != ((a * b) >> (k - 1) & 1 == 1) {
                    failures.push(format!("mlp{k}: wrong at a={a} b={b}"));
                }
            }
        }
    }
    report(9, &failures, "BLIF round trip, bufferize, DIMACS fixtures, multiplier k 2..6");
}
