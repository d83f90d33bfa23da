#![allow(dead_code)]

use mrdmoc::beam::{assemble_system, SpacecraftParams};
use mrdmoc::modal::{solve_modal, to_modal, ModalState, ModalSystem};

pub fn reference_system(split: usize) -> ModalSystem {
    let sys = assemble_system(&SpacecraftParams::reference(5)).expect("reference model assembles");
    solve_modal(&sys, split).expect("reference model decomposes")
}

/// Rest start with the appendages deflected.
pub fn deflected_start(msys: &ModalSystem) -> ModalState {
    let xi = [0.0, 0.05, 0.001, 0.001, 0.0001, 0.0001];
    to_modal(msys, &xi, &[0.0; 6]).expect("valid physical state")
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}
