mod common;

use common::{inf_norm, max_abs_diff, reference_system};
use mrdmoc::beam::SystemMatrices;
use mrdmoc::integrator::MultirateGrid;
use mrdmoc::modal::{solve_modal, ModalState};
use mrdmoc::nalgebra::{DMatrix, DVector};
use mrdmoc::ocp::{solve_maneuver, OcpSpec};
use mrdmoc::oracles::{
    fine_grid_reference, free_response, lq_tpbvp_reference, modal_energy, rk4_adaptive, series_error,
    solution_physical_nodes,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Random small structures: `M = LLᵀ + I`, `K = CCᵀ` with one rigid direction.
    #[test]
    fn free_response_agrees_with_adaptive_rk4(
        l in prop::collection::vec(-1.0f64..1.0, 9),
        c in prop::collection::vec(-3.0f64..3.0, 6),
        q0 in prop::collection::vec(-1.0f64..1.0, 3),
        v0 in prop::collection::vec(-1.0f64..1.0, 3),
        t in 0.0f64..3.0,
    ) {
        let lm = DMatrix::from_row_slice(3, 3, &l);
        let mass = &lm * lm.transpose() + DMatrix::identity(3, 3);
        let cm = DMatrix::from_row_slice(3, 2, &c);
        let stiffness = &cm * cm.transpose();
        let sys = SystemMatrices { mass, stiffness, input: DVector::from_vec(vec![1.0, 0.0, 0.0]) };
        let msys = solve_modal(&sys, 1).unwrap();
        let init = ModalState { q: q0, qdot: v0 };
        let exact = free_response(&msys, &init, t).unwrap();
        let lam = msys.eigenvalues().to_vec();
        let y0: Vec<f64> = init.q.iter().chain(&init.qdot).copied().collect();
        let y = rk4_adaptive(
            |_, y, dy| {
                for j in 0..3 {
                    dy[j] = y[3 + j];
                    dy[3 + j] = -lam[j] * y[j];
                }
            },
            &y0,
            0.0,
            t,
            1e-12,
        )
        .unwrap();
        let want: Vec<f64> = exact.q.iter().chain(&exact.qdot).copied().collect();
        prop_assert!(max_abs_diff(&y, &want) <= 1e-10 * (1.0 + inf_norm(&want)));
        let e0 = modal_energy(&msys, &init);
        prop_assert!((modal_energy(&msys, &exact) - e0).abs() <= 1e-12 * (1.0 + e0));
    }
}

#[test]
fn free_response_conserves_energy_on_reference_model() {
    let msys = reference_system(3);
    let init = common::deflected_start(&msys);
    let e0 = modal_energy(&msys, &init);
    for i in 0..=200 {
        let s = free_response(&msys, &init, 0.3 * i as f64).unwrap();
        assert!((modal_energy(&msys, &s) - e0).abs() <= 1e-12 * e0);
    }
}

fn spec(tf: f64, dt: f64, p: usize, theta: f64) -> OcpSpec {
    let grid = MultirateGrid::new(0.0, tf, dt, p).unwrap();
    OcpSpec::rest_to_rest(reference_system(3), grid, theta)
}

#[test]
fn tpbvp_meets_boundary_values_and_stationarity() {
    let s = spec(1.0, 1e-3, 1, 20.0);
    let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.01).collect();
    let r = lq_tpbvp_reference(&s, &times).unwrap();
    let msys = &s.msys;
    let q_end = msys.physical_to_modal(&s.xi_end).unwrap();
    assert!(inf_norm(&r.q[0]) <= 1e-9 && inf_norm(&r.qdot[0]) <= 1e-9);
    assert!(max_abs_diff(&r.q[100], &q_end) <= 1e-9);
    assert!(inf_norm(&r.qdot[100]) <= 1e-9);
    // u = −R⁻¹Bᵀλ with B = [0; Z].
    let z = msys.input();
    for (lam, &u) in r.costate.iter().zip(&r.control) {
        let bl: f64 = z.iter().zip(&lam[6..]).map(|(a, b)| a * b).sum();
        assert!((u + bl / s.control_weight).abs() <= 1e-10 * (1.0 + u.abs()));
    }
}

#[test]
fn tpbvp_of_zero_maneuver_is_zero() {
    let s = spec(1.0, 1e-3, 1, 0.0);
    let r = lq_tpbvp_reference(&s, &[0.0, 0.5, 1.0]).unwrap();
    assert_eq!(r.cost, 0.0);
    assert!(r.control.iter().all(|&u| u == 0.0));
    assert!(r.q.iter().all(|q| inf_norm(q) == 0.0));
}

#[test]
fn tpbvp_rejects_samples_outside_horizon() {
    let s = spec(1.0, 1e-3, 1, 20.0);
    assert!(lq_tpbvp_reference(&s, &[1.5]).is_err());
}

#[test]
fn short_horizon_magnitudes() {
    let s = spec(0.12, 1e-3, 1, 20.0);
    let times: Vec<f64> = (0..=120).map(|i| i as f64 * 1e-3).collect();
    let r = lq_tpbvp_reference(&s, &times).unwrap();
    assert!(r.cost > 1e10 && r.cost < 1e12, "cost {:e}", r.cost);
    let umax = inf_norm(&r.control);
    assert!(umax > 1e5 && umax < 1e7, "control {umax:e}");
}

/// The continuous solution and a fine single-rate discrete solve are two
/// independent references; they must agree closely.
#[test]
fn tpbvp_agrees_with_fine_discrete_solve() {
    let s = spec(4.5, 1e-4, 1, 20.0);
    let sol = solve_maneuver(&s).unwrap();
    let nodes: Vec<f64> = (0..=450).map(|k| k as f64 * 1e-2).collect();
    let r = lq_tpbvp_reference(&s, &nodes).unwrap();
    let got: Vec<Vec<f64>> = solution_physical_nodes(&s.msys, &sol)
        .unwrap()
        .into_iter()
        .step_by(100)
        .collect();
    let e = series_error(&got, &r.physical(&s.msys).unwrap()).unwrap();
    assert!(e.relative < 1e-6, "relative error {:e}", e.relative);
    assert!((sol.cost - r.cost).abs() < 1e-6 * r.cost);
}

#[test]
fn fine_reference_with_unit_refinement_is_the_direct_solve() {
    let s = spec(0.12, 1e-3, 1, 20.0);
    let direct = solve_maneuver(&s).unwrap();
    let fine = fine_grid_reference(&s, 1).unwrap();
    assert_eq!(direct.variables, fine.variables);
    assert!(fine_grid_reference(&s, 0).is_err());
}

#[test]
fn fine_references_converge_toward_each_other() {
    let s = spec(0.12, 1e-3, 3, 20.0);
    let sol = solve_maneuver(&s).unwrap();
    let nodes = |m: usize| -> Vec<Vec<f64>> {
        let f = fine_grid_reference(&s, m).unwrap();
        solution_physical_nodes(&s.msys, &f)
            .unwrap()
            .into_iter()
            .step_by(3 * m)
            .collect()
    };
    let (r16, r32) = (nodes(16), nodes(32));
    let own = solution_physical_nodes(&s.msys, &sol).unwrap();
    let between = series_error(&r16, &r32).unwrap().relative;
    assert!(between < series_error(&own, &r16).unwrap().relative);
    assert!(between < series_error(&own, &r32).unwrap().relative);
}
