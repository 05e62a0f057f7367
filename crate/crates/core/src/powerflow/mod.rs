//! AC power flow and operating-limit checks.

mod admittance;
mod newton;
mod violations;

use std::fmt::Write as _;

pub use admittance::{build_admittance, AdmittanceMatrix, BranchAdmittance};
pub use newton::{
    assign_emergency_ratings, solve_newton, BranchFlow, BusState, DivergenceCause, GenDispatch,
    PowerFlowSolution, SolveOptions, SolvedKind,
};
pub use violations::{check_violations, Entity, Limits, Violation, ViolationKind};

/// Bus table of a solution: `bus,v_pu,angle_deg`.
pub fn bus_csv(solution: &PowerFlowSolution) -> String {
    let mut out = String::from("bus,v_pu,angle_deg\n");
    for b in &solution.buses {
        let _ = writeln!(out, "{},{:.6},{:.6}", b.id, b.vm, b.va.to_degrees());
    }
    out
}

/// Branch table of a solution: `from,to,p_mw,q_mvar` at the from end.
pub fn branch_csv(solution: &PowerFlowSolution) -> String {
    let mut out = String::from("from,to,p_mw,q_mvar\n");
    for b in solution.branches.iter().filter(|b| b.in_service) {
        let _ = writeln!(out, "{},{},{:.4},{:.4}", b.from, b.to, b.p_from, b.q_from);
    }
    out
}
