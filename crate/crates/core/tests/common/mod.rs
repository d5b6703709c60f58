// SPDX-License-Identifier: Apache-2.0
//! Random instance generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relaxec::cnf::{CnfFormula, Lit, Var};
use relaxec::netlist::{Gate, GateOp, Netlist};
use relaxec::pqe::PqeProblem;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn formula(cs: &[&[i32]]) -> CnfFormula {
    let mut f = CnfFormula::default();
    for c in cs {
        f.add(c.iter().map(|&x| Lit::from_dimacs(x)).collect());
    }
    f
}

pub fn random_formula(rng: &mut ChaCha8Rng, nv: u32, m: usize, max_w: usize) -> CnfFormula {
    let mut f = CnfFormula::new(nv);
    for _ in 0..m {
        let w = rng.gen_range(1..=max_w);
        let lits = (0..w)
            .map(|_| Lit::new(rng.gen_range(1..=nv), rng.gen_bool(0.5)))
            .collect();
        f.add(lits);
    }
    f
}

/// A PQE instance over at most 14 variables.
pub fn random_problem(seed: u64) -> PqeProblem {
    let mut rng = rng(seed);
    let nv = rng.gen_range(3..=14);
    let ma = rng.gen_range(0..=2 * nv as usize / 3 + 1);
    let mb = rng.gen_range(0..=2 * nv as usize);
    let a = random_formula(&mut rng, nv, ma, 3);
    let b = random_formula(&mut rng, nv, mb, 3);
    let w: Vec<Var> = (1..=nv).filter(|_| rng.gen_bool(0.5)).collect();
    PqeProblem::new(a, b, w)
}

const OPS: [GateOp; 10] = [
    GateOp::And,
    GateOp::Or,
    GateOp::Xor,
    GateOp::Nand,
    GateOp::Nor,
    GateOp::Xnor,
    GateOp::Not,
    GateOp::Buf,
    GateOp::Const0,
    GateOp::Const1,
];

/// Single-output netlist with `ni` inputs, at most `max_gates` gates and depth at most
/// `max_depth`. Constants are rare.
pub fn random_netlist(rng: &mut ChaCha8Rng, name: &str, ni: usize, max_gates: usize, max_depth: usize) -> Netlist {
    let inputs: Vec<String> = (0..ni).map(|i| format!("x{i}")).collect();
    let mut nets: Vec<(String, usize)> = inputs.iter().map(|x| (x.clone(), 0)).collect();
    let mut gates = Vec::new();
    let ng = rng.gen_range(1..=max_gates);
    for g in 0..ng {
        let op = if rng.gen_bool(0.04) {
            OPS[8 + rng.gen_range(0..2)]
        } else if rng.gen_bool(0.15) {
            OPS[6 + rng.gen_range(0..2)]
        } else {
            OPS[rng.gen_range(0..6)]
        };
        let pool: Vec<&(String, usize)> = nets.iter().filter(|(_, l)| *l < max_depth).collect();
        let ins: Vec<&(String, usize)> = (0..op.arity()).map(|_| *pool.choose(rng).unwrap()).collect();
        let level = ins.iter().map(|(_, l)| l + 1).max().unwrap_or(1);
        let name = format!("g{g}");
        let names: Vec<&str> = ins.iter().map(|(n, _)| n.as_str()).collect();
        gates.push(Gate::new(name.clone(), op, &names));
        nets.push((name, level));
    }
    let out = gates.last().unwrap().output.clone();
    Netlist::new(name, inputs, vec![out], gates).unwrap().prune_to_outputs()
}

/// Copy of `n` with one random binary gate's operator changed (possibly still equivalent).
pub fn mutate(rng: &mut ChaCha8Rng, n: &Netlist) -> Netlist {
    let mut m = n.clone();
    m.name = format!("{}_mut", n.name);
    let binary: Vec<usize> = (0..m.gates.len()).filter(|&g| m.gates[g].op.is_binary()).collect();
    if let Some(&g) = binary.choose(rng) {
        let old = m.gates[g].op;
        let ops: Vec<GateOp> = GateOp::BINARY.into_iter().filter(|&o| o != old).collect();
        m.gates[g].op = *ops.choose(rng).unwrap();
    }
    m
}

/// Random pair over the same inputs: identical, mutated, or unrelated, at most
/// `max_ni` inputs per side and depth at most 5.
pub fn random_pair(seed: u64, max_ni: usize) -> (Netlist, Netlist) {
    let mut rng = rng(seed);
    let ni = rng.gen_range(1..=max_ni);
    let a = random_netlist(&mut rng, "a", ni, 10, 5);
    let b = match seed % 3 {
        0 => {
            let mut b = a.clone();
            b.name = "b".into();
            b
        }
        1 => mutate(&mut rng, &a),
        _ => random_netlist(&mut rng, "b", ni, 10, 5),
    };
    (a, b)
}

/// Outputs of two netlists differ on some input.
pub fn differ(a: &Netlist, b: &Netlist) -> bool {
    let ni = a.inputs.len();
    (0..1u64 << ni).any(|p| {
        let ins: Vec<bool> = (0..ni).map(|j| p >> j & 1 == 1).collect();
        a.eval(&ins) != b.eval(&ins)
    })
}

/// Every assignment of `vs` (bit `k` of the index is `vs[k]`) mapped through `f`.
pub fn points(vs: &[Var]) -> impl Iterator<Item = (u64, Vec<(Var, bool)>)> + '_ {
    (0..1u64 << vs.len()).map(move |b| {
        let pt = vs.iter().enumerate().map(|(k, &v)| (v, b >> k & 1 == 1)).collect();
        (b, pt)
    })
}

/// Value lookup over an explicit assignment.
pub fn lookup(pt: &[(Var, bool)]) -> impl Fn(Var) -> bool + '_ {
    move |v| pt.iter().find(|(x, _)| *x == v).is_some_and(|&(_, b)| b)
}

/// Set of assignments to `keep` (as bitmasks) that extend to models of `f`, by
/// enumerating all assignments of `vars`, which must contain `keep` and all of `f`'s variables.
pub fn projection(f: &CnfFormula, vars: &[Var], keep: &[Var]) -> std::collections::BTreeSet<u64> {
    let mut out = std::collections::BTreeSet::new();
    for (_, pt) in points(vars) {
        if f.eval(lookup(&pt)) {
            let key = keep
                .iter()
                .enumerate()
                .fold(0u64, |acc, (k, v)| acc | (u64::from(lookup(&pt)(*v)) << k));
            out.insert(key);
        }
    }
    out
}
