// SPDX-License-Identifier: Apache-2.0
//! Python bindings for `relaxec`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use relaxec::bench;
use relaxec::cnf::{emit_dimacs, CnfFormula, Lit, Miter};
use relaxec::eclor::{check as ec_check, EcConfig};
use relaxec::netlist::{self, emit_blif, parse_blif};
use relaxec::pqe::{self, PqeProblem};
use relaxec::{qe, relax};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_formula(clauses: &[Vec<i32>]) -> PyResult<CnfFormula> {
    let mut f = CnfFormula::default();
    for c in clauses {
        if c.contains(&0) {
            return Err(PyValueError::new_err("literal 0 is not allowed"));
        }
        f.add(c.iter().map(|&x| Lit::from_dimacs(x)).collect());
    }
    Ok(f)
}

fn from_formula(f: &CnfFormula) -> Vec<Vec<i32>> {
    f.clauses
        .iter()
        .map(|c| c.lits().iter().map(|l| l.to_dimacs()).collect())
        .collect()
}

/// A gate-level circuit.
#[pyclass(name = "Netlist", module = "relaxec_py", skip_from_py_object)]
#[derive(Clone)]
struct PyNetlist {
    inner: netlist::Netlist,
}

#[pymethods]
impl PyNetlist {
    #[staticmethod]
    fn from_blif(text: &str) -> PyResult<Self> {
        Ok(PyNetlist {
            inner: parse_blif(text).map_err(err)?,
        })
    }

    fn to_blif(&self) -> String {
        emit_blif(&self.inner)
    }

    fn eval(&self, inputs: Vec<bool>) -> PyResult<Vec<bool>> {
        if inputs.len() != self.inner.inputs.len() {
            return Err(PyValueError::new_err(format!(
                "expected {} inputs, got {}",
                self.inner.inputs.len(),
                inputs.len()
            )));
        }
        Ok(self.inner.eval(&inputs))
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn inputs(&self) -> Vec<String> {
        self.inner.inputs.clone()
    }

    #[getter]
    fn outputs(&self) -> Vec<String> {
        self.inner.outputs.clone()
    }

    #[getter]
    fn num_gates(&self) -> usize {
        self.inner.gates.len()
    }

    fn depth(&self) -> usize {
        netlist::depth(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Netlist({:?}, inputs={}, gates={})",
            self.inner.name,
            self.inner.inputs.len(),
            self.inner.gates.len()
        )
    }
}

fn wrap(n: netlist::Netlist) -> PyNetlist {
    PyNetlist { inner: n }
}

#[pyfunction]
fn gen_mlp(k: usize) -> PyResult<PyNetlist> {
    bench::gen_mlp(k).map(wrap).map_err(err)
}

#[pyfunction]
fn gen_hgated_pair(k: usize) -> PyResult<(PyNetlist, PyNetlist)> {
    let (a, b, _) = bench::gen_hgated_pair(k).map_err(err)?;
    Ok((wrap(a), wrap(b)))
}

#[pyfunction]
fn inject_bug(n: &PyNetlist, min_level: usize, seed: u64) -> PyResult<PyNetlist> {
    bench::inject_bug(&n.inner, min_level, seed).map(wrap).map_err(err)
}

/// Runs the checker; returns the status name and the JSON report.
#[pyfunction]
#[pyo3(signature = (a, b, mode = "exact"))]
fn check(py: Python<'_>, a: &PyNetlist, b: &PyNetlist, mode: &str) -> PyResult<(String, String)> {
    let cfg = match mode {
        "exact" => EcConfig::default(),
        "star" => EcConfig::star(),
        _ => return Err(PyValueError::new_err("mode must be 'exact' or 'star'")),
    };
    let m = Miter::new(&a.inner, &b.inner).map_err(err)?;
    let v = py.detach(|| ec_check(&m, &cfg));
    Ok((format!("{:?}", v.status), v.to_json()))
}

/// Cut image over the variables of level cut `cut` of the pair's miter.
#[pyfunction]
fn cut_image(a: &PyNetlist, b: &PyNetlist, cut: usize) -> PyResult<Vec<Vec<i32>>> {
    qe::cut_image(&a.inner, &b.inner, cut)
        .map(|f| from_formula(&f))
        .map_err(err)
}

/// `A*` with `∃W[A ∧ B] ≡ A* ∧ ∃W[B]`.
#[pyfunction]
fn pqe_solve(a: Vec<Vec<i32>>, b: Vec<Vec<i32>>, w: Vec<u32>) -> PyResult<Vec<Vec<i32>>> {
    let p = PqeProblem::new(to_formula(&a)?, to_formula(&b)?, w);
    pqe::pqe_solve(&p).map(|s| from_formula(&s.astar)).map_err(err)
}

#[pyfunction]
fn pqe_verify(a: Vec<Vec<i32>>, b: Vec<Vec<i32>>, w: Vec<u32>, astar: Vec<Vec<i32>>) -> PyResult<bool> {
    let p = PqeProblem::new(to_formula(&a)?, to_formula(&b)?, w);
    let s = pqe::PqeSolution {
        astar: to_formula(&astar)?,
        stats: Default::default(),
    };
    Ok(pqe::verify_pqe_solution(&p, &s))
}

#[pyfunction]
fn extract_interpolant(a: Vec<Vec<i32>>, b: Vec<Vec<i32>>) -> PyResult<Vec<Vec<i32>>> {
    relax::extract_interpolant(&to_formula(&a)?, &to_formula(&b)?)
        .map(|h| from_formula(&h))
        .map_err(err)
}

#[pyfunction]
fn to_dimacs(clauses: Vec<Vec<i32>>) -> PyResult<String> {
    let mut f = to_formula(&clauses)?;
    f.num_vars = f.vars().last().copied().unwrap_or(0);
    Ok(emit_dimacs(&f))
}

#[pymodule]
fn relaxec_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetlist>()?;
    m.add_function(wrap_pyfunction!(gen_mlp, m)?)?;
    m.add_function(wrap_pyfunction!(gen_hgated_pair, m)?)?;
    m.add_function(wrap_pyfunction!(inject_bug, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    m.add_function(wrap_pyfunction!(cut_image, m)?)?;
    m.add_function(wrap_pyfunction!(pqe_solve, m)?)?;
    m.add_function(wrap_pyfunction!(pqe_verify, m)?)?;
    m.add_function(wrap_pyfunction!(extract_interpolant, m)?)?;
    m.add_function(wrap_pyfunction!(to_dimacs, m)?)?;
    Ok(())
}
