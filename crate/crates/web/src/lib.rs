//! Browser bindings for three small demos: the modal frequencies of the
//! reference spacecraft, an unforced multirate simulation and a short
//! rest-to-rest slew. Each exported function wraps a plain Rust function so the
//! numerics can be tested natively.

use mrdmoc::beam::{assemble_system, SpacecraftParams};
use mrdmoc::integrator::{diagnostics, simulate, MultirateGrid};
use mrdmoc::modal::{solve_modal, to_modal, ModalSystem};
use mrdmoc::ocp::{solve_maneuver, OcpSpec};
use wasm_bindgen::prelude::*;

/// Keeps a single request well under a second in the browser.
const MAX_SIM_STEPS: usize = 200_000;
const MAX_OCP_STEPS: usize = 6_000;

/// Named curves sharing one time axis, plus a short text summary.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct Curves {
    time: Vec<f64>,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    summary: String,
}

#[wasm_bindgen]
impl Curves {
    pub fn time(&self) -> Vec<f64> {
        self.time.clone()
    }

    pub fn count(&self) -> usize {
        self.columns.len()
    }

    pub fn name(&self, i: usize) -> String {
        self.names.get(i).cloned().unwrap_or_default()
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.columns.get(i).cloned().unwrap_or_default()
    }

    pub fn summary(&self) -> String {
        self.summary.clone()
    }
}

fn model(num_modes: usize, split: usize) -> Result<ModalSystem, String> {
    if !(1..=10).contains(&num_modes) {
        return Err(format!("modes must be in 1..=10, got {num_modes}"));
    }
    let sys = assemble_system(&SpacecraftParams::reference(num_modes)).map_err(|e| e.to_string())?;
    solve_modal(&sys, split.clamp(1, num_modes + 1)).map_err(|e| e.to_string())
}

fn grid(tf: f64, dt: f64, p: usize, limit: usize) -> Result<MultirateGrid, String> {
    let grid = MultirateGrid::new(0.0, tf, dt, p).map_err(|e| e.to_string())?;
    if grid.micro_interval_count() > limit {
        return Err(format!(
            "{} micro steps exceed the demo limit of {limit}",
            grid.micro_interval_count()
        ));
    }
    Ok(grid)
}

/// Natural frequencies (rad/s), rigid mode first.
pub fn frequencies(num_modes: usize) -> Result<Vec<f64>, String> {
    Ok(model(num_modes, 1)?.frequencies())
}

/// Unforced motion from a deflected first appendage mode.
pub fn free_vibration(eta1: f64, tf: f64, dt: f64, p: usize, split: usize) -> Result<Curves, String> {
    let msys = model(5, split)?;
    let grid = grid(tf, dt, p, MAX_SIM_STEPS)?;
    let mut xi = vec![0.0; msys.dof()];
    xi[1] = eta1;
    let init = to_modal(&msys, &xi, &vec![0.0; xi.len()]).map_err(|e| e.to_string())?;
    let traj = simulate(&msys, &grid, &init, &vec![0.0; grid.micro_interval_count()]).map_err(|e| e.to_string())?;
    let diag = diagnostics(&msys, &traj).map_err(|e| e.to_string())?;
    let mut theta = Vec::new();
    let mut tip = Vec::new();
    for k in 0..=grid.macro_count() {
        let x = msys
            .modal_to_physical(&traj.macro_config(k))
            .map_err(|e| e.to_string())?;
        theta.push(x[0].to_degrees());
        tip.push(x[1]);
    }
    let e0 = diag.energy[0];
    let dev: Vec<f64> = diag
        .energy
        .iter()
        .map(|e| (e - e0) / e0.abs().max(f64::MIN_POSITIVE))
        .collect();
    let worst = dev.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    Ok(Curves {
        time: diag.time,
        names: vec![
            "hub angle (deg)".into(),
            "first mode amplitude".into(),
            "relative energy error".into(),
        ],
        columns: vec![theta, tip, dev],
        summary: format!(
            "{} macro steps of {} s; max relative energy error {worst:.2e}",
            grid.macro_count(),
            grid.macro_step()
        ),
    })
}

/// Rest-to-rest hub slew by `theta_deg` over `tf` seconds.
pub fn slew(theta_deg: f64, tf: f64, dt: f64, p: usize, split: usize) -> Result<Curves, String> {
    let msys = model(5, split)?;
    let grid = grid(tf, dt, p, MAX_OCP_STEPS)?;
    let spec = OcpSpec::rest_to_rest(msys.clone(), grid, theta_deg);
    let sol = solve_maneuver(&spec).map_err(|e| e.to_string())?;
    let mut theta = Vec::new();
    let mut tip = Vec::new();
    let mut torque = Vec::new();
    let controls = sol.trajectory.all_controls();
    for k in 0..=grid.macro_count() {
        let x = msys
            .modal_to_physical(&sol.trajectory.macro_config(k))
            .map_err(|e| e.to_string())?;
        theta.push(x[0].to_degrees());
        tip.push(x[1]);
        // Torque over the macro interval that starts here; the last node repeats it.
        let m = k.min(grid.macro_count() - 1) * p;
        torque.push(controls[m..m + p].iter().sum::<f64>() / p as f64);
    }
    Ok(Curves {
        time: (0..=grid.macro_count()).map(|k| grid.macro_time(k)).collect(),
        names: vec!["hub angle (deg)".into(), "first mode amplitude".into(), "torque".into()],
        columns: vec![theta, tip, torque],
        summary: format!(
            "cost {:.5e}; {} unknowns, {} constraints; solved in {:.0} ms",
            sol.cost,
            sol.layout.n_total_var(),
            sol.layout.n_eq_con(),
            1e3 * (sol.assemble_seconds + sol.solve_seconds)
        ),
    })
}

#[wasm_bindgen(js_name = frequencies)]
pub fn js_frequencies(num_modes: usize) -> Result<Vec<f64>, JsError> {
    frequencies(num_modes).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = freeVibration)]
pub fn js_free_vibration(eta1: f64, tf: f64, dt: f64, p: usize, split: usize) -> Result<Curves, JsError> {
    free_vibration(eta1, tf, dt, p, split).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = slew)]
pub fn js_slew(theta_deg: f64, tf: f64, dt: f64, p: usize, split: usize) -> Result<Curves, JsError> {
    slew(theta_deg, tf, dt, p, split).map_err(|e| JsError::new(&e))
}
