use mrdmoc::beam::{assemble_system, SpacecraftParams};
use mrdmoc::modal::{decomposition_residuals, from_modal, solve_modal, to_modal, ModalSystem};
use proptest::prelude::*;

fn scaled_params() -> impl Strategy<Value = SpacecraftParams> {
    (1usize..=6, prop::collection::vec(0.5f64..2.0, 7)).prop_map(|(n, s)| {
        let r = SpacecraftParams::reference(n);
        SpacecraftParams {
            hub_radius: r.hub_radius * s[0],
            hub_inertia: r.hub_inertia * s[1],
            tip_mass: r.tip_mass * s[2],
            tip_inertia: r.tip_inertia * s[3],
            beam_length: r.beam_length * s[4],
            beam_linear_density: r.beam_linear_density * s[5],
            flexural_rigidity: r.flexural_rigidity * s[6],
            num_modes: n,
        }
    })
}

fn decompose(p: &SpacecraftParams) -> ModalSystem {
    solve_modal(&assemble_system(p).unwrap(), 1).unwrap()
}

fn elastic(f: &[f64]) -> &[f64] {
    &f[1..]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decomposition_diagonalizes_and_round_trips(p in scaled_params(), xi in prop::collection::vec(-1.0f64..1.0, 7)) {
        let sys = assemble_system(&p).unwrap();
        let msys = solve_modal(&sys, 1).unwrap();
        let (ortho, diag) = decomposition_residuals(&msys, &sys);
        let lam_max = msys.eigenvalues().iter().fold(1.0f64, |a, &b| a.max(b));
        prop_assert!(ortho <= 1e-10 && diag <= 1e-10 * lam_max);
        prop_assert!(msys.eigenvalues()[0].abs() <= 1e-8 * lam_max);
        prop_assert!(msys.eigenvalues().windows(2).all(|w| w[1] >= w[0]));
        let n = msys.dof();
        let x = &xi[..n];
        let st = to_modal(&msys, x, x).unwrap();
        let (back, back_dot) = from_modal(&msys, &st).unwrap();
        for i in 0..n {
            prop_assert!((back[i] - x[i]).abs() <= 1e-10 && (back_dot[i] - x[i]).abs() <= 1e-10);
        }
    }

    /// Stiffness enters only through EI, so every frequency scales with √c.
    #[test]
    fn frequencies_scale_with_root_of_rigidity(p in scaled_params(), c in 0.25f64..4.0) {
        let base = decompose(&p).frequencies();
        let stiffer = decompose(&SpacecraftParams { flexural_rigidity: p.flexural_rigidity * c, ..p.clone() }).frequencies();
        for (a, b) in elastic(&base).iter().zip(elastic(&stiffer)) {
            prop_assert!((b / a - c.sqrt()).abs() <= 1e-8);
        }
    }

    /// Scaling every inertia by c scales every frequency by 1/√c.
    #[test]
    fn frequencies_scale_with_inverse_root_of_inertia(p in scaled_params(), c in 0.25f64..4.0) {
        let base = decompose(&p).frequencies();
        let heavier = decompose(&SpacecraftParams {
            hub_inertia: p.hub_inertia * c,
            tip_mass: p.tip_mass * c,
            tip_inertia: p.tip_inertia * c,
            beam_linear_density: p.beam_linear_density * c,
            ..p.clone()
        })
        .frequencies();
        for (a, b) in elastic(&base).iter().zip(elastic(&heavier)) {
            prop_assert!((b / a - 1.0 / c.sqrt()).abs() <= 1e-8);
        }
    }
}

/// Assumed-mode bases are nested, so by Rayleigh-Ritz each frequency can only
/// fall as modes are added.
#[test]
fn frequencies_decrease_as_modes_are_added() {
    let mut prev: Option<Vec<f64>> = None;
    for n in 1..=8 {
        let f = decompose(&SpacecraftParams::reference(n)).frequencies();
        if let Some(prev) = &prev {
            for (new, old) in f.iter().zip(prev).skip(1) {
                assert!(*new <= old * (1.0 + 1e-10), "N={n}: {new} > {old}");
            }
        }
        prev = Some(f);
    }
}
