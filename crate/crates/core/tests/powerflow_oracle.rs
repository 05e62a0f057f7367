mod support;

use impact_core::grid::GridCase;
use impact_core::powerflow::{solve_newton, SolveOptions};
use impact_core::topology::open_branch;
use num_complex::Complex64;

fn worst_gap(case: &GridCase) -> f64 {
    let nr = solve_newton(case, &SolveOptions { tolerance: 1e-10, ..SolveOptions::default() }).unwrap();
    assert!(nr.converged);
    let gs = support::gauss_seidel(case, 1e-11, 200_000);
    nr.buses
        .iter()
        .map(|b| {
            let (vm, va) = gs[&b.id];
            (Complex64::from_polar(b.vm, b.va) - Complex64::from_polar(vm, va)).norm()
        })
        .fold(0.0, f64::max)
}

#[test]
fn newton_agrees_with_gauss_seidel_on_the_intact_case() {
    assert!(worst_gap(&support::ieee118()) < 1e-6);
}

#[test]
fn newton_agrees_with_gauss_seidel_after_a_line_opens() {
    let case = open_branch(&support::ieee118(), 23, 25).unwrap();
    assert!(worst_gap(&case) < 1e-6);
}

#[test]
fn newton_converges_quadratically_on_the_intact_case() {
    let sol = solve_newton(&support::ieee118(), &SolveOptions::default()).unwrap();
    assert!(sol.iterations <= 5, "{} iterations", sol.iterations);
    assert!(sol.max_mismatch <= 1e-6);
}
