// SPDX-License-Identifier: Apache-2.0
//! Combinational equivalence checking by logic relaxation.

pub mod bench;
pub mod cli;
pub mod cnf;
pub mod eclor;
pub mod netlist;
pub mod sat;
pub mod pqe;
pub mod qe;
pub mod relax;

/// Work limits shared by the search procedures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Limits {
    /// Outer iterations or branching nodes.
    pub steps: u64,
    /// Conflict cap per SAT call; `None` for no cap.
    pub sat_conflicts: Option<u64>,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            steps: 2_000_000,
            sat_conflicts: None,
        }
    }
}
