mod common;

use common::{inf_norm, max_abs_diff, reference_system};
use mrdmoc::integrator::{del_residual, simulate, MultirateGrid};
use mrdmoc::modal::ModalState;
use mrdmoc::ocp::kkt::kkt_residuals;
use mrdmoc::ocp::{
    assemble, fast_variable_formula, noether_summary, slow_variable_formula, solve_maneuver, OcpSpec, SolveStatus,
    VariableLayout,
};

fn spec(tf: f64, dt: f64, p: usize, r: usize, theta: f64) -> OcpSpec {
    let grid = MultirateGrid::new(0.0, tf, dt, p).unwrap();
    OcpSpec::rest_to_rest(reference_system(r), grid, theta)
}

/// Replaying the optimal controls through the stepper must reproduce the
/// optimal trajectory: the constraints and the integrator are one scheme.
#[test]
fn optimal_controls_replay_through_the_integrator() {
    for (p, r) in [(1, 3), (3, 2), (5, 3), (4, 4)] {
        let s = spec(1.2, 1e-3, p, r, 20.0);
        let sol = solve_maneuver(&s).unwrap();
        let replay = simulate(&s.msys, &s.grid, &ModalState::zeros(6), sol.trajectory.all_controls()).unwrap();
        let scale = (0..=s.grid.macro_count())
            .map(|k| inf_norm(&sol.trajectory.macro_config(k)))
            .fold(0.0, f64::max);
        for k in 0..=s.grid.macro_count() {
            let d = max_abs_diff(&replay.macro_config(k), &sol.trajectory.macro_config(k));
            assert!(d <= 1e-8 * scale, "p={p} r={r} k={k}: {d:e}");
        }
        assert!(del_residual(&s.msys, &sol.trajectory).unwrap().relative() <= 1e-8);
    }
}

#[test]
fn accepted_solves_meet_kkt_and_noether_targets() {
    for (tf, p, r) in [(1.2, 1, 3), (1.2, 5, 3), (0.12, 3, 1), (0.12, 1, 6)] {
        let s = spec(tf, 1e-3, p, r, 20.0);
        let (qp, _) = assemble(&s).unwrap();
        let sol = solve_maneuver(&s).unwrap();
        assert_eq!(sol.status, SolveStatus::Converged);
        let res = kkt_residuals(&qp.h, &qp.g, &qp.a, &qp.b, &sol.variables, &sol.multipliers);
        assert!(res.primal_scaled <= 1e-8 && res.dual_scaled <= 1e-8, "{res:?}");
        let (psi, ptheta) = noether_summary(&s.msys, &sol.trajectory).unwrap();
        assert!(psi <= 1e-8 * ptheta, "tf={tf} p={p}: {psi:e} vs {ptheta:e}");
    }
}

#[test]
fn zero_maneuver_gives_zero_solution() {
    let sol = solve_maneuver(&spec(0.6, 1e-3, 3, 3, 0.0)).unwrap();
    assert!(sol.variables.iter().all(|&v| v == 0.0));
    assert_eq!(sol.cost, 0.0);
}

#[test]
fn maneuver_reaches_target_at_rest() {
    let s = spec(4.5, 1e-3, 5, 3, 20.0);
    let sol = solve_maneuver(&s).unwrap();
    let end = sol.modal_state(s.grid.macro_count());
    let target = s.msys.physical_to_modal(&s.xi_end).unwrap();
    assert!(max_abs_diff(&end.q, &target) <= 1e-6);
    assert!(inf_norm(&end.qdot) <= 1e-6);
}

#[test]
fn layout_counts_follow_closed_forms_and_shrink_in_p() {
    for (tf, dt) in [(4.5, 1e-3), (0.12, 1e-3), (1.2, 2e-4)] {
        for r in 1..=5 {
            let mut prev = usize::MAX;
            let mut prev_con = usize::MAX;
            for p in 1..=10 {
                let Ok(grid) = MultirateGrid::new(0.0, tf, dt, p) else {
                    continue;
                };
                let l = VariableLayout::new(r, 6 - r, &grid);
                assert_eq!(l.n_slow_var(), slow_variable_formula(r, tf, dt, p));
                assert_eq!(l.n_fast_var(), fast_variable_formula(5, r, tf, dt));
                assert_eq!(l.n_total_var(), l.n_slow_var() + l.n_fast_var());
                assert!(l.n_total_var() <= prev && l.n_eq_con() <= prev_con);
                prev = l.n_total_var();
                prev_con = l.n_eq_con();
            }
        }
    }
}

#[test]
fn constraint_nonzeros_grow_linearly_in_macro_count() {
    let nnz = |tf: f64| assemble(&spec(tf, 1e-3, 3, 3, 20.0)).unwrap().0.a.nnz();
    let (a, b, c) = (nnz(0.3), nnz(0.6), nnz(1.2));
    assert_eq!(c - b, 2 * (b - a));
}
