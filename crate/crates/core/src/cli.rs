// SPDX-License-Identifier: Apache-2.0
//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{
    gen_hgated_pair, gen_mlp, inject_bug, run_experiment, Experiment, ExperimentParams,
};
use crate::cnf::{emit_dimacs, CnfFormula, Miter};
use crate::eclor::{
    build_chain, check, prove_inequivalence_via_beta, Boundary, EcConfig, EcVerdict, Status,
    Witness,
};
use crate::netlist::{emit_blif, parse_blif, Netlist};
use crate::pqe::PqeOptions;
use crate::qe::cut_image_in;
use crate::Limits;

pub const EXIT_EQUIVALENT: i32 = 0;
pub const EXIT_INEQUIVALENT: i32 = 1;
pub const EXIT_UNKNOWN: i32 = 2;
pub const EXIT_ERROR: i32 = 3;

/// Environment variable holding the default seed.
pub const SEED_ENV: &str = "RELAXEC_SEED";

#[derive(Parser, Debug)]
#[command(name = "relaxec", version, about = "Equivalence checking by logic relaxation")]
struct Cli {
    #[command(flatten)]
    budget: Budget,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Clone, Copy)]
struct Budget {
    /// Branching nodes (PQE) or enumeration rounds (QE) per call.
    #[arg(long, global = true, default_value_t = 2_000_000)]
    pqe_steps: u64,
    /// Conflict cap per SAT call.
    #[arg(long, global = true)]
    sat_conflicts: Option<u64>,
    /// Give up with exit code 2 after this many milliseconds.
    #[arg(long, global = true)]
    timeout_ms: Option<u64>,
    /// Worker threads for `exp` (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
}

impl Budget {
    fn pqe(&self) -> PqeOptions {
        PqeOptions {
            limits: Limits {
                steps: self.pqe_steps,
                sat_conflicts: self.sat_conflicts,
            },
            ..Default::default()
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ModeArg {
    Exact,
    Star,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum FormulaArg {
    Alpha,
    Beta,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum TableArg {
    Table1,
    Table2,
    Table3,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Decide equivalence of two single-output BLIF circuits.
    Check {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_enum, default_value = "exact")]
        mode: ModeArg,
        /// Write the JSON report here (`-` for stdout).
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Print the exact boundary formula of a cut.
    Boundary {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        cut: usize,
    },
    /// Print the cut image computed by complete quantifier elimination.
    Image {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        cut: usize,
    },
    /// Look for a counterexample through the boundary formula of one cut.
    Beta {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        cut: usize,
    },
    /// Emit benchmark circuits as BLIF.
    Gen {
        #[command(subcommand)]
        what: GenCmd,
    },
    /// Run an experiment table.
    Exp {
        #[arg(value_enum)]
        table: TableArg,
        /// Operand widths, comma separated.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
        /// `table3`: number of buggy instances.
        #[arg(long)]
        seeds: Option<u64>,
        /// `table3`: cut index.
        #[arg(long)]
        cut: Option<usize>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
        /// Include wall-clock columns.
        #[arg(long)]
        wall_clock: bool,
    },
    /// Export the miter or the relaxed miter with a boundary formula as DIMACS.
    Dimacs {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_enum)]
        formula: FormulaArg,
        /// Cut whose exact boundary formula goes into `beta` (default: the output cut).
        #[arg(long)]
        cut: Option<usize>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum GenCmd {
    /// Product bit k-1 of a k-bit array multiplier.
    Mlp {
        #[arg(long)]
        k: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// The h-gated equivalent pair.
    Hpair {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        out1: PathBuf,
        #[arg(long)]
        out2: PathBuf,
    },
    /// A copy of a circuit with one gate above a level changed.
    Bug {
        input: PathBuf,
        #[arg(long)]
        min_level: usize,
        /// Defaults to $RELAXEC_SEED, else 0.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

type CmdResult = Result<i32, String>;

fn read_blif(p: &Path) -> Result<Netlist, String> {
    let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
    parse_blif(&text).map_err(|e| format!("{}: {e}", p.display()))
}

fn miter(a: &Path, b: &Path) -> Result<Miter, String> {
    Miter::new(&read_blif(a)?, &read_blif(b)?).map_err(|e| e.to_string())
}

fn write_or_print(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<(), String> {
    match path {
        Some(p) if p != Path::new("-") => {
            fs::write(p, text).map_err(|e| format!("{}: {e}", p.display()))
        }
        _ => out.write_all(text.as_bytes()).map_err(|e| e.to_string()),
    }
}

fn env_seed() -> u64 {
    std::env::var(SEED_ENV)
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0)
}

fn print_witness(w: &Witness, n: &Netlist, out: &mut dyn Write) -> std::io::Result<()> {
    let assign: Vec<String> = n
        .inputs
        .iter()
        .zip(&w.inputs)
        .map(|(x, &b)| format!("{x}={}", u8::from(b)))
        .collect();
    writeln!(out, "witness {}", assign.join(" "))?;
    writeln!(out, "outputs {} {}", u8::from(w.outputs.0), u8::from(w.outputs.1))
}

fn with_names(m: &Miter, h: &CnfFormula) -> CnfFormula {
    let mut h = h.clone();
    h.num_vars = m.f.g_rlx.num_vars;
    for v in h.vars() {
        h.names.insert(v, m.var_name(v));
    }
    h
}

/// Boundary formula of `cut` from the exact chain.
fn exact_boundary(m: &Miter, cut: usize, b: Budget) -> Result<Boundary, String> {
    if cut > m.levels() {
        return Err(format!("cut {cut} out of range (circuits have {} levels)", m.levels()));
    }
    let cfg = EcConfig {
        pqe: b.pqe(),
        ..Default::default()
    };
    let chain = build_chain(m, &cfg).map_err(|e| e.to_string())?;
    Ok(Boundary::from_chain(&chain, cut))
}

fn verdict_exit(v: &EcVerdict) -> i32 {
    match v.status {
        Status::Equivalent | Status::ConstantDegenerate => EXIT_EQUIVALENT,
        Status::Inequivalent => EXIT_INEQUIVALENT,
        Status::Unknown => EXIT_UNKNOWN,
    }
}

fn run_check(a: &Path, b: &Path, mode: ModeArg, json: Option<&Path>, bud: Budget, out: &mut dyn Write) -> CmdResult {
    let m = miter(a, b)?;
    let cfg = match mode {
        ModeArg::Exact => EcConfig::default(),
        ModeArg::Star => EcConfig::star(),
    };
    let cfg = EcConfig {
        pqe: bud.pqe(),
        ..cfg
    };
    let v = check(&m, &cfg);
    let io = |e: std::io::Error| e.to_string();
    writeln!(out, "{:?}", v.status).map_err(io)?;
    if let Some(c) = &v.constant {
        writeln!(out, "constant: {c}").map_err(io)?;
    }
    if let Some(w) = &v.witness {
        print_witness(w, &m.n1, out).map_err(io)?;
    }
    if let Some(p) = json {
        let mut text = v.to_json();
        text.push('\n');
        write_or_print(Some(p), &text, out)?;
    }
    Ok(verdict_exit(&v))
}

fn run_gen(what: GenCmd, out: &mut dyn Write) -> CmdResult {
    match what {
        GenCmd::Mlp { k, output } => {
            let n = gen_mlp(k).map_err(|e| e.to_string())?;
            write_or_print(output.as_deref(), &emit_blif(&n), out)?;
        }
        GenCmd::Hpair { k, out1, out2 } => {
            let (n1, n2, _) = gen_hgated_pair(k).map_err(|e| e.to_string())?;
            write_or_print(Some(&out1), &emit_blif(&n1), out)?;
            write_or_print(Some(&out2), &emit_blif(&n2), out)?;
        }
        GenCmd::Bug {
            input,
            min_level,
            seed,
            output,
        } => {
            let n = read_blif(&input)?;
            let bug = inject_bug(&n, min_level, seed.unwrap_or_else(env_seed))
                .map_err(|e| e.to_string())?;
            write_or_print(output.as_deref(), &emit_blif(&bug), out)?;
        }
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn run_exp(
    table: TableArg,
    k: Option<Vec<usize>>,
    seeds: Option<u64>,
    cut: Option<usize>,
    csv: Option<&Path>,
    json: Option<&Path>,
    wall_clock: bool,
    bud: Budget,
    out: &mut dyn Write,
) -> CmdResult {
    let e = match table {
        TableArg::Table1 => Experiment::Table1,
        TableArg::Table2 => Experiment::Table2,
        TableArg::Table3 => Experiment::Table3,
    };
    let mut p = ExperimentParams::defaults_for(e);
    if let Some(k) = k {
        p.ks = k;
    }
    if let Some(s) = seeds {
        p.seeds = s;
    }
    if let Some(c) = cut {
        p.cut = c;
    }
    p.first_seed = env_seed();
    p.pqe = bud.pqe();
    p.sat_conflicts = bud.sat_conflicts;
    p.jobs = bud.jobs;
    p.wall_clock = wall_clock;
    let r = run_experiment(e, &p).map_err(|e| e.to_string())?;
    if let Some(j) = json {
        write_or_print(Some(j), &(r.to_json() + "\n"), out)?;
    }
    if csv.is_some() || json.is_none() {
        write_or_print(csv, &r.to_csv(), out)?;
    }
    Ok(0)
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> CmdResult {
    let bud = cli.budget;
    let io = |e: std::io::Error| e.to_string();
    match cli.cmd {
        Cmd::Check { a, b, mode, json } => run_check(&a, &b, mode, json.as_deref(), bud, out),
        Cmd::Boundary { a, b, cut } => {
            let m = miter(&a, &b)?;
            let bd = exact_boundary(&m, cut, bud)?;
            let cert = match bd.certificate {
                Some(c) => format!("{c:?}"),
                None => "none".into(),
            };
            writeln!(out, "c cut {cut} certificate {cert}").map_err(io)?;
            out.write_all(emit_dimacs(&with_names(&m, &bd.h)).as_bytes()).map_err(io)?;
            Ok(0)
        }
        Cmd::Image { a, b, cut } => {
            let m = miter(&a, &b)?;
            let r = cut_image_in(&m, cut, bud.pqe().limits).map_err(|e| e.to_string())?;
            writeln!(out, "c cut {cut} image").map_err(io)?;
            out.write_all(emit_dimacs(&with_names(&m, &r)).as_bytes()).map_err(io)?;
            Ok(0)
        }
        Cmd::Beta { a, b, cut } => {
            let m = miter(&a, &b)?;
            let bd = exact_boundary(&m, cut, bud)?;
            match prove_inequivalence_via_beta(&m, &bd).map_err(|e| e.to_string())? {
                Some(w) => {
                    writeln!(out, "Inequivalent").map_err(io)?;
                    print_witness(&w, &m.n1, out).map_err(io)?;
                    Ok(EXIT_INEQUIVALENT)
                }
                None => {
                    writeln!(out, "Equivalent").map_err(io)?;
                    Ok(EXIT_EQUIVALENT)
                }
            }
        }
        Cmd::Gen { what } => run_gen(what, out),
        Cmd::Exp {
            table,
            k,
            seeds,
            cut,
            csv,
            json,
            wall_clock,
        } => run_exp(table, k, seeds, cut, csv.as_deref(), json.as_deref(), wall_clock, bud, out),
        Cmd::Dimacs {
            a,
            b,
            formula,
            cut,
            output,
        } => {
            let m = miter(&a, &b)?;
            let f = match formula {
                FormulaArg::Alpha => m.f.alpha.clone(),
                FormulaArg::Beta => {
                    let bd = exact_boundary(&m, cut.unwrap_or(m.levels()), bud)?;
                    m.f.beta(&bd.h)
                }
            };
            write_or_print(output.as_deref(), &emit_dimacs(&f), out)?;
            Ok(0)
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
/// A timeout leaves the worker thread running; the binary exits right after.
pub fn route_command<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_ERROR;
            }
            let _ = write!(out, "{e}");
            return 0;
        }
    };
    let timeout = cli.budget.timeout_ms;
    let result = match timeout {
        None => dispatch(cli, out),
        Some(ms) => {
            let (tx, rx) = mpsc::channel();
            std::thread::spawn(move || {
                let mut buf = Vec::new();
                let r = dispatch(cli, &mut buf);
                let _ = tx.send((r, buf));
            });
            match rx.recv_timeout(Duration::from_millis(ms)) {
                Ok((r, buf)) => {
                    let _ = out.write_all(&buf);
                    r
                }
                Err(_) => {
                    let _ = writeln!(out, "Unknown");
                    let _ = writeln!(err, "timeout after {ms} ms");
                    Ok(EXIT_UNKNOWN)
                }
            }
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}
