mod common;

use common::{deflected_start, inf_norm, max_abs_diff, reference_system};
use mrdmoc::integrator::{
    discrete_lagrangian, discrete_momenta, simulate, slot_derivatives, MultirateGrid, MultirateTrajectory,
};
use mrdmoc::modal::{ModalState, ModalSystem};
use proptest::prelude::*;

fn modal_state(n: usize) -> impl Strategy<Value = ModalState> {
    (
        prop::collection::vec(-1.0f64..1.0, n),
        prop::collection::vec(-1.0f64..1.0, n),
    )
        .prop_map(|(q, qdot)| ModalState { q, qdot })
}

/// Amplitudes shrink with frequency so every mode carries comparable energy.
fn scaled(msys: &ModalSystem, s: &ModalState) -> ModalState {
    let f = msys.frequencies();
    ModalState {
        q: s.q.iter().zip(&f).map(|(q, w)| q / (1.0 + w)).collect(),
        qdot: s.qdot.clone(),
    }
}

fn all_configs(traj: &MultirateTrajectory) -> Vec<f64> {
    (0..=traj.grid().macro_count())
        .flat_map(|k| traj.macro_config(k))
        .collect()
}

/// Independent single-rate midpoint variational integrator, written per mode.
fn single_rate(msys: &ModalSystem, dt: f64, steps: usize, init: &ModalState, tau: &[f64]) -> Vec<Vec<f64>> {
    let lam = msys.eigenvalues();
    let z = msys.input();
    let n = lam.len();
    let mut q = vec![init.q.clone()];
    let lead: Vec<f64> = lam.iter().map(|l| 1.0 / dt + dt * l / 4.0).collect();
    let first: Vec<f64> = (0..n)
        .map(|j| (init.qdot[j] + init.q[j] / dt - dt * lam[j] * init.q[j] / 4.0 + z[j] * dt / 2.0 * tau[0]) / lead[j])
        .collect();
    q.push(first);
    for k in 1..steps {
        let (qm, q0) = (&q[k - 1], &q[k]);
        let next: Vec<f64> = (0..n)
            .map(|j| {
                let rhs = (2.0 * q0[j] - qm[j]) / dt - dt * lam[j] * (qm[j] + 2.0 * q0[j]) / 4.0
                    + z[j] * dt / 2.0 * (tau[k - 1] + tau[k]);
                rhs / lead[j]
            })
            .collect();
        q.push(next);
    }
    q
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn slot_derivatives_match_central_differences(
        split in 1usize..=6,
        p in 1usize..=6,
        dt in 1e-4f64..1e-2,
        seed in prop::collection::vec(-1.0f64..1.0, 6 + 6 * 7),
    ) {
        let msys = reference_system(3).with_split(split).unwrap();
        let nf = 6 - split;
        let grid = MultirateGrid::new(0.0, dt * p as f64, dt, p).unwrap();
        let qs0 = seed[..split].to_vec();
        let qs1 = seed[split..2 * split].to_vec();
        let qf = seed[12..12 + (p + 1) * nf].to_vec();
        let d = slot_derivatives(&msys, &grid, &qs0, &qs1, &qf).unwrap();
        let lag = |a: &[f64], b: &[f64], c: &[f64]| discrete_lagrangian(&msys, &grid, a, b, c).unwrap();

        let h = 1e-3;
        let mut fd = Vec::new();
        for j in 0..split {
            let (mut up, mut dn) = (qs0.clone(), qs0.clone());
            up[j] += h;
            dn[j] -= h;
            fd.push((lag(&up, &qs1, &qf) - lag(&dn, &qs1, &qf)) / (2.0 * h));
        }
        for j in 0..split {
            let (mut up, mut dn) = (qs1.clone(), qs1.clone());
            up[j] += h;
            dn[j] -= h;
            fd.push((lag(&qs0, &up, &qf) - lag(&qs0, &dn, &qf)) / (2.0 * h));
        }
        for j in 0..qf.len() {
            let (mut up, mut dn) = (qf.clone(), qf.clone());
            up[j] += h;
            dn[j] -= h;
            fd.push((lag(&qs0, &qs1, &up) - lag(&qs0, &qs1, &dn)) / (2.0 * h));
        }
        let analytic: Vec<f64> = d.slow_left.iter().chain(&d.slow_right).chain(&d.fast).copied().collect();
        let scale = inf_norm(&analytic).max(1.0);
        prop_assert!(max_abs_diff(&analytic, &fd) <= 1e-6 * scale);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn single_micro_step_equals_single_rate_integrator(
        split in 1usize..=6,
        init in modal_state(6),
        tau in prop::collection::vec(-1.0f64..1.0, 400),
    ) {
        let msys = reference_system(split);
        let init = scaled(&msys, &init);
        let dt = 1e-3;
        let grid = MultirateGrid::new(0.0, 0.4, dt, 1).unwrap();
        let traj = simulate(&msys, &grid, &init, &tau).unwrap();
        let oracle = single_rate(&msys, dt, 400, &init, &tau);
        let got = all_configs(&traj);
        let want: Vec<f64> = oracle.into_iter().flatten().collect();
        prop_assert!(max_abs_diff(&got, &want) <= 1e-12 * (1.0 + inf_norm(&want)));
    }

    #[test]
    fn unforced_stepping_is_time_reversible(
        split in 1usize..=5,
        p in 1usize..=6,
        init in modal_state(6),
    ) {
        let msys = reference_system(split);
        let init = scaled(&msys, &init);
        let dt = 2e-4;
        let grid = MultirateGrid::new(0.0, 0.12 * p as f64 / 6.0 * 5.0, dt, p).unwrap();
        let zeros = vec![0.0; grid.micro_interval_count()];
        let fwd = simulate(&msys, &grid, &init, &zeros).unwrap();
        let ns = grid.macro_count();
        let end = discrete_momenta(&msys, &fwd).unwrap().at_macro_node(ns, p);
        let back_init = ModalState {
            q: fwd.macro_config(ns),
            qdot: end.slow.iter().chain(&end.fast).map(|v| -v).collect(),
        };
        let back = simulate(&msys, &grid, &back_init, &zeros).unwrap();
        let scale = 1.0 + inf_norm(&init.q);
        prop_assert!(max_abs_diff(&back.macro_config(ns), &init.q) <= 1e-9 * scale);
        // Intermediate nodes retrace the forward path.
        for k in 0..=ns {
            prop_assert!(max_abs_diff(&back.macro_config(ns - k), &fwd.macro_config(k)) <= 1e-9 * scale);
        }
        let start = discrete_momenta(&msys, &back).unwrap().at_macro_node(ns, p);
        let p_back: Vec<f64> = start.slow.iter().chain(&start.fast).map(|v| -v).collect();
        prop_assert!(max_abs_diff(&p_back, &init.qdot) <= 1e-9 * (1.0 + inf_norm(&init.qdot)));
    }

    #[test]
    fn stepping_is_linear_in_state_and_control(
        p in 1usize..=5,
        a in modal_state(6),
        b in modal_state(6),
        ua in prop::collection::vec(-1.0f64..1.0, 300),
        ub in prop::collection::vec(-1.0f64..1.0, 300),
        alpha in -2.0f64..2.0,
        beta in -2.0f64..2.0,
    ) {
        let msys = reference_system(3);
        let (a, b) = (scaled(&msys, &a), scaled(&msys, &b));
        let dt = 1e-3;
        let grid = MultirateGrid::new(0.0, 0.06 * p as f64, dt, p).unwrap();
        let m = grid.micro_interval_count();
        let combo = ModalState {
            q: a.q.iter().zip(&b.q).map(|(x, y)| alpha * x + beta * y).collect(),
            qdot: a.qdot.iter().zip(&b.qdot).map(|(x, y)| alpha * x + beta * y).collect(),
        };
        let uc: Vec<f64> = ua[..m].iter().zip(&ub[..m]).map(|(x, y)| alpha * x + beta * y).collect();
        let ta = all_configs(&simulate(&msys, &grid, &a, &ua[..m]).unwrap());
        let tb = all_configs(&simulate(&msys, &grid, &b, &ub[..m]).unwrap());
        let tc = all_configs(&simulate(&msys, &grid, &combo, &uc).unwrap());
        let lin: Vec<f64> = ta.iter().zip(&tb).map(|(x, y)| alpha * x + beta * y).collect();
        prop_assert!(max_abs_diff(&tc, &lin) <= 1e-10 * (1.0 + inf_norm(&lin)));
    }

    /// The midpoint sums equal the exact action of the piecewise-linear
    /// interpolant (integrated by Simpson's rule, exact for quadratics) plus
    /// the composite-midpoint defect `h²(b−a)f''/24`.
    #[test]
    fn lagrangian_matches_simpson_with_midpoint_defect(
        split in 1usize..=5,
        p in 1usize..=6,
        dt in 1e-4f64..1e-2,
        seed in prop::collection::vec(-1.0f64..1.0, 60),
    ) {
        let msys = reference_system(split);
        let lam = msys.eigenvalues();
        let nf = 6 - split;
        let grid = MultirateGrid::new(0.0, dt * p as f64, dt, p).unwrap();
        let big = dt * p as f64;
        let qs0 = &seed[..split];
        let qs1 = &seed[split..2 * split];
        let qf = &seed[12..12 + (p + 1) * nf];

        let simpson_sq = |a: f64, b: f64, h: f64| h / 6.0 * (a * a + 4.0 * (0.5 * (a + b)).powi(2) + b * b);
        let mut want = 0.0;
        for j in 0..split {
            let v = (qs1[j] - qs0[j]) / big;
            let integral = simpson_sq(qs0[j], qs1[j], big);
            want += 0.5 * v * v * big - 0.5 * lam[j] * (integral - big * dt * dt * v * v / 12.0);
        }
        for m in 0..p {
            for j in 0..nf {
                let (a, b) = (qf[m * nf + j], qf[(m + 1) * nf + j]);
                let v = (b - a) / dt;
                let integral = simpson_sq(a, b, dt);
                want += 0.5 * v * v * dt - 0.5 * lam[split + j] * (integral - dt * dt * dt * v * v / 12.0);
            }
        }
        let got = discrete_lagrangian(&msys, &grid, qs0, qs1, qf).unwrap();
        prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()));
    }
}

#[test]
fn reference_start_stays_bounded_and_exact_at_rest() {
    let msys = reference_system(3);
    let grid = MultirateGrid::new(0.0, 1.2, 1e-4, 5).unwrap();
    let zeros = vec![0.0; grid.micro_interval_count()];
    let rest = simulate(&msys, &grid, &ModalState::zeros(6), &zeros).unwrap();
    assert_eq!(inf_norm(&all_configs(&rest)), 0.0);
    let moving = simulate(&msys, &grid, &deflected_start(&msys), &zeros).unwrap();
    assert!(all_configs(&moving).iter().all(|v| v.is_finite() && v.abs() < 1.0));
}
