use bellguess::facets::canonical_chsh;
use bellguess::npa::*;
use bellguess::scenario::Scenario;
use bellguess::sdp::{solve, SolverOptions};

fn main() {
    let s = Scenario::new(2, 2).unwrap();
    let st = build_moment_structure(s, 2).unwrap();
    let chsh = canonical_chsh(s).unwrap();
    let (lo, hi) = quantum_bell_range(&chsh, &st).unwrap();
    let tsirelson = (2.0f64.sqrt() - 1.0) / 2.0;
    println!("range = [{lo:.12}, {hi:.12}], hi - tsirelson = {:.3e}", hi - tsirelson);
    for eps in [1e-9, 5e-8, 1e-7, 1e-6, 1e-5] {
        let beta = hi - eps;
        let gp = guessing_problem(beta, &chsh, 1, &st).unwrap();
        let sol = solve(&gp, &SolverOptions::default()).unwrap();
        let analytic = 0.5 + 0.5 * (2.0f64 - (2.0 + 4.0 * beta).powi(2) / 4.0).max(0.0).sqrt();
        println!(
            "eps={eps:.0e}: status={:?} iters={} relgap={:.2e} prim={:.2e} dual={:.2e} p={:.8} analytic={:.8} diff={:.2e}",
            sol.status, sol.iterations, sol.rel_gap, sol.primal_infeasibility, sol.dual_infeasibility,
            sol.objective, analytic, sol.objective - analytic
        );
    }
}
