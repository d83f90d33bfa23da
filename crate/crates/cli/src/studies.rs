//! Study drivers. Each returns tidy rows, optional time series and charts.

use rayon::prelude::*;

use mrdmoc::analysis::{convergence_order, energy_stats, fit_window, mean_sd};
use mrdmoc::beam::assemble_system;
use mrdmoc::integrator::{diagnostics, simulate, MultirateGrid};
use mrdmoc::modal::{from_modal, solve_modal, to_modal, ModalState, ModalSystem};
use mrdmoc::nalgebra::DMatrix;
use mrdmoc::ocp::{
    fast_variable_formula, noether_summary, slow_variable_formula, solve_maneuver, OcpSolution, OcpSpec, SolveStatus,
    VariableLayout,
};
use mrdmoc::oracles::{
    fine_grid_reference, free_response, lq_tpbvp_reference, macro_means, modal_energy, rk4_free, scalar_nodes,
    series_error, solution_physical_nodes,
};

use crate::config::{ReferenceKind, RunConfig, Scenario, StudyKind};
use crate::svg::LineChart;
use crate::CliError;

const NOETHER_LIMIT: f64 = 1e-8;
const DEL_LIMIT: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub study: &'static str,
    pub p: usize,
    pub r: usize,
    /// `None` on rows aggregated over a step sweep.
    pub dt_s: Option<f64>,
    pub tf_s: f64,
    pub metric: String,
    pub value: f64,
    pub rep: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default)]
pub struct StudyResult {
    pub rows: Vec<Row>,
    pub series: Vec<TimeSeries>,
    pub plots: Vec<(String, LineChart)>,
    /// Residual and invariant figures for the manifest.
    pub summary: Vec<(String, f64)>,
    /// Invariants that failed; the run exits nonzero after writing output.
    pub violations: Vec<String>,
}

/// Shared state for one run.
pub struct Context<'a> {
    pub cfg: &'a RunConfig,
    base: ModalSystem,
}

impl<'a> Context<'a> {
    pub fn new(cfg: &'a RunConfig) -> Result<Self, CliError> {
        let sys = assemble_system(&cfg.spacecraft)?;
        let base = solve_modal(&sys, cfg.r)?;
        Ok(Self { cfg, base })
    }

    fn msys(&self, r: usize) -> Result<ModalSystem, CliError> {
        Ok(self.base.with_split(r)?)
    }

    fn grid(&self, dt: f64, p: usize) -> Result<MultirateGrid, CliError> {
        Ok(MultirateGrid::new(0.0, self.cfg.grid.tf_s, dt, p)?)
    }

    fn omega_max(&self) -> f64 {
        self.base.frequencies().into_iter().fold(0.0, f64::max)
    }

    fn initial_state(&self, msys: &ModalSystem) -> Result<ModalState, CliError> {
        let Scenario::FreeResponse(fr) = &self.cfg.scenario else {
            unreachable!("validated by the config loader")
        };
        let (xi, xi_dot) = fr.physical();
        Ok(to_modal(msys, &xi, &xi_dot)?)
    }

    fn spec(&self, msys: ModalSystem, grid: MultirateGrid) -> OcpSpec {
        let Scenario::Maneuver(m) = &self.cfg.scenario else {
            unreachable!("validated by the config loader")
        };
        let n = msys.dof();
        let mut spec = OcpSpec::rest_to_rest(msys, grid, m.theta_tf_deg);
        if let Some(v) = &m.xi_start {
            spec.xi_start = v.clone();
        }
        if let Some(v) = &m.xi_end {
            spec.xi_end = v.clone();
        }
        spec.state_weight = DMatrix::identity(2 * n, 2 * n) * m.state_weight;
        spec.control_weight = m.control_weight;
        spec
    }

    fn row(&self, study: &'static str, p: usize, r: usize, dt: Option<f64>, metric: &str, value: f64) -> Row {
        Row {
            study,
            p,
            r,
            dt_s: dt,
            tf_s: self.cfg.grid.tf_s,
            metric: metric.to_string(),
            value,
            rep: 0,
        }
    }
}

pub fn run_study(ctx: &Context, kind: StudyKind) -> Result<StudyResult, CliError> {
    match kind {
        StudyKind::Simulate => simulate_study(ctx),
        StudyKind::Conservation => conservation(ctx),
        StudyKind::IntegratorConvergence => integrator_convergence(ctx),
        StudyKind::Maneuver => maneuver(ctx),
        StudyKind::OcpConvergence => ocp_convergence(ctx),
        StudyKind::Tradeoff => tradeoff(ctx),
        StudyKind::Size => size(ctx),
    }
}

fn state_columns(n: usize) -> Vec<String> {
    let mut c = vec!["t_s".to_string(), "theta_rad".to_string()];
    c.extend((1..n).map(|j| format!("eta{j}")));
    c
}

fn simulate_study(ctx: &Context) -> Result<StudyResult, CliError> {
    const S: &str = "simulate";
    let cfg = ctx.cfg;
    let (r, p, dt) = (cfg.r, cfg.grid.p, cfg.grid.dt_s);
    let msys = ctx.msys(r)?;
    let grid = ctx.grid(dt, p)?;
    let init = ctx.initial_state(&msys)?;
    let traj = simulate(&msys, &grid, &init, &vec![0.0; grid.micro_interval_count()])?;
    let diag = diagnostics(&msys, &traj)?;
    let n = msys.dof();

    let (mut cs, mut rs, mut cf, mut rf) = (vec![], vec![], vec![], vec![]);
    let mut ts = TimeSeries {
        name: "simulate_states".into(),
        columns: state_columns(n),
        rows: vec![],
    };
    ts.columns.extend(["energy", "p_theta"].map(String::from));
    for k in 0..=grid.macro_count() {
        let q = traj.macro_config(k);
        let exact = free_response(&msys, &init, grid.macro_time(k))?;
        cs.push(q[..r].to_vec());
        rs.push(exact.q[..r].to_vec());
        cf.push(q[r..].to_vec());
        rf.push(exact.q[r..].to_vec());
        if k % cfg.study.sample_every == 0 {
            let mut row = vec![grid.macro_time(k)];
            row.extend(msys.modal_to_physical(&q)?);
            row.push(diag.energy[k]);
            row.push(diag.hub_momentum[k]);
            ts.rows.push(row);
        }
    }
    let mut out = StudyResult::default();
    let row = |m: &str, v: f64| ctx.row(S, p, r, Some(dt), m, v);
    if let Ok(e) = series_error(&cs, &rs) {
        out.rows.push(row("error_slow", e.absolute));
    }
    if let Ok(e) = series_error(&cf, &rf) {
        out.rows.push(row("error_fast", e.absolute));
    }
    let stats = energy_stats(&diag.time, &diag.energy)?;
    out.rows.push(row("energy_initial", stats.initial));
    out.rows.push(row("energy_fluctuation", stats.fluctuation));

    let mut chart = LineChart::new("Free response", "t (s)", "configuration");
    for j in 0..n.min(3) {
        chart = chart.with_series(&ts.columns[j + 1], ts.rows.iter().map(|v| (v[0], v[j + 1])).collect());
    }
    out.plots.push(("simulate_states.svg".into(), chart));
    out.series.push(ts);
    Ok(out)
}

fn conservation(ctx: &Context) -> Result<StudyResult, CliError> {
    const S: &str = "conservation";
    let cfg = ctx.cfg;
    let (r, p, dt) = (cfg.r, cfg.grid.p, cfg.grid.dt_s);
    let msys = ctx.msys(r)?;
    let grid = ctx.grid(dt, p)?;
    let init = ctx.initial_state(&msys)?;
    let traj = simulate(&msys, &grid, &init, &vec![0.0; grid.micro_interval_count()])?;
    let diag = diagnostics(&msys, &traj)?;
    let stats = energy_stats(&diag.time, &diag.energy)?;
    let e0 = modal_energy(&msys, &init);
    let p0 = diag.hub_momentum[0];
    let p_drift = diag.hub_momentum.iter().map(|v| (v - p0).abs()).fold(0.0, f64::max);
    // Reference momentum scale; the rest start has p_θ,0 = 0.
    let p_scale = p0.abs().max((2.0 * e0 * msys.mass()[(0, 0)]).sqrt());

    let mut out = StudyResult::default();
    let row = |m: &str, v: f64| ctx.row(S, p, r, Some(dt), m, v);
    out.rows.extend([
        row("energy_initial", stats.initial),
        row("energy_fluctuation", stats.fluctuation),
        row("energy_slope", stats.slope),
        row("energy_drift_ratio", stats.drift_ratio),
        row("p_theta_drift", p_drift),
        row("p_theta_drift_rel", p_drift / p_scale),
    ]);
    out.summary
        .push(("conservation.energy_drift_ratio".into(), stats.drift_ratio));
    out.summary
        .push(("conservation.p_theta_drift_rel".into(), p_drift / p_scale));

    let every = cfg.study.sample_every;
    let mut ts = TimeSeries {
        name: "conservation_energy".into(),
        columns: vec!["t_s".into(), "energy_dev".into(), "p_theta".into()],
        rows: vec![],
    };
    let rk4 = if cfg.study.rk4_compare {
        let steps = grid.micro_interval_count();
        let samples = rk4_free(&msys, &init, dt, steps, p)?;
        let e: Vec<f64> = samples.iter().map(|s| modal_energy(&msys, s)).collect();
        let rk = energy_stats(&diag.time, &e)?;
        out.rows.extend([
            row("rk4_energy_slope", rk.slope),
            row("rk4_energy_end_change", rk.end_change),
            row("rk4_monotone", f64::from(rk.monotone_decreasing as u8)),
            row(
                "rk4_drift_exceeds",
                f64::from((rk.monotone_decreasing && rk.slope.abs() > stats.slope.abs()) as u8),
            ),
        ]);
        ts.columns.push("rk4_energy_dev".into());
        Some(e)
    } else {
        None
    };
    for k in (0..diag.time.len()).step_by(every) {
        let mut v = vec![diag.time[k], diag.energy[k] - e0, diag.hub_momentum[k]];
        if let Some(e) = &rk4 {
            v.push(e[k] - e0);
        }
        ts.rows.push(v);
    }
    let mut chart = LineChart::new("Energy deviation", "t (s)", "E - E0")
        .with_series("variational", ts.rows.iter().map(|v| (v[0], v[1])).collect());
    if rk4.is_some() {
        chart = chart.with_series("RK4", ts.rows.iter().map(|v| (v[0], v[3])).collect());
    }
    out.plots.push(("conservation_energy.svg".into(), chart));
    out.plots.push((
        "conservation_momentum.svg".into(),
        LineChart::new("Hub angular momentum", "t (s)", "p_theta")
            .with_series("p_theta", ts.rows.iter().map(|v| (v[0], v[2])).collect()),
    ));
    out.series.push(ts);
    Ok(out)
}

/// Fits the order inside the asymptotic window and appends summary rows.
fn fit_rows(
    ctx: &Context,
    study: &'static str,
    p: usize,
    r: usize,
    label: &str,
    steps: &[f64],
    errors: &[f64],
    out: &mut StudyResult,
) {
    if steps.len() < 2 {
        return;
    }
    let Ok(w) = fit_window(steps, errors, ctx.omega_max()) else {
        return;
    };
    let Ok(order) = convergence_order(&steps[w.start..w.end], &errors[w.start..w.end]) else {
        return;
    };
    log::info!(
        "{study} p={p} {label}: order {order:.3} over dt in [{:e}, {:e}], {} of {} points",
        steps[w.end - 1],
        steps[w.start],
        w.len(),
        steps.len()
    );
    out.rows
        .push(ctx.row(study, p, r, None, &format!("order_{label}"), order));
    out.rows
        .push(ctx.row(study, p, r, None, &format!("window_dt_max_{label}"), steps[w.start]));
    out.rows
        .push(ctx.row(study, p, r, None, &format!("window_dt_min_{label}"), steps[w.end - 1]));
    out.summary.push((format!("{study}.p{p}.order_{label}"), order));
}

fn integrator_convergence(ctx: &Context) -> Result<StudyResult, CliError> {
    const S: &str = "integrator_convergence";
    let cfg = ctx.cfg;
    let r = cfg.r;
    let msys = ctx.msys(r)?;
    let init = ctx.initial_state(&msys)?;
    let points: Vec<(usize, f64)> = cfg
        .study
        .p_list
        .iter()
        .flat_map(|&p| cfg.study.dt_list_s.iter().map(move |&dt| (p, dt)))
        .collect();
    let errors: Vec<(f64, f64, f64, f64)> = points
        .par_iter()
        .map(|&(p, dt)| -> Result<_, CliError> {
            let grid = ctx.grid(dt, p)?;
            let traj = simulate(&msys, &grid, &init, &vec![0.0; grid.micro_interval_count()])?;
            let (mut cs, mut rs, mut cf, mut rf) = (vec![], vec![], vec![], vec![]);
            for k in 0..=grid.macro_count() {
                let q = traj.macro_config(k);
                let exact = free_response(&msys, &init, grid.macro_time(k))?;
                cs.push(q[..r].to_vec());
                rs.push(exact.q[..r].to_vec());
                cf.push(q[r..].to_vec());
                rf.push(exact.q[r..].to_vec());
            }
            let es = series_error(&cs, &rs)?;
            let ef = series_error(&cf, &rf)?;
            Ok((es.absolute, es.relative, ef.absolute, ef.relative))
        })
        .collect::<Result<_, _>>()?;

    let mut out = StudyResult::default();
    for (&(p, dt), &(es, esr, ef, efr)) in points.iter().zip(&errors) {
        for (m, v) in [
            ("error_slow", es),
            ("rel_error_slow", esr),
            ("error_fast", ef),
            ("rel_error_fast", efr),
        ] {
            out.rows.push(ctx.row(S, p, r, Some(dt), m, v));
        }
    }
    let mut slow_chart = LineChart::new("Slow modal error", "dt (s)", "max-node error").log_log();
    let mut fast_chart = LineChart::new("Fast modal error", "dt (s)", "max-node error").log_log();
    for &p in &cfg.study.p_list {
        let idx: Vec<usize> = (0..points.len()).filter(|&i| points[i].0 == p).collect();
        let steps: Vec<f64> = idx.iter().map(|&i| points[i].1).collect();
        let es: Vec<f64> = idx.iter().map(|&i| errors[i].0).collect();
        let ef: Vec<f64> = idx.iter().map(|&i| errors[i].2).collect();
        fit_rows(ctx, S, p, r, "slow", &steps, &es, &mut out);
        fit_rows(ctx, S, p, r, "fast", &steps, &ef, &mut out);
        let name = format!("p = {p}");
        slow_chart = slow_chart.with_series(&name, steps.iter().copied().zip(es).collect());
        fast_chart = fast_chart.with_series(&name, steps.iter().copied().zip(ef).collect());
    }
    out.plots.push(("integrator_convergence_slow.svg".into(), slow_chart));
    out.plots.push(("integrator_convergence_fast.svg".into(), fast_chart));
    Ok(out)
}

/// Checks the accepted-solution invariants of one OCP solve.
fn check_solution(
    msys: &ModalSystem,
    sol: &OcpSolution,
    tag: &str,
    out: &mut StudyResult,
) -> Result<(f64, f64), CliError> {
    if sol.status != SolveStatus::Converged {
        out.violations.push(format!(
            "{tag}: KKT residual targets missed (primal {:e}, dual {:e})",
            sol.residuals.primal_scaled, sol.residuals.dual_scaled
        ));
    }
    if sol.del_residual.relative() > DEL_LIMIT {
        out.violations.push(format!(
            "{tag}: discrete Euler-Lagrange re-check {:e} exceeds {DEL_LIMIT:e}",
            sol.del_residual.relative()
        ));
    }
    let (psi, ptheta) = noether_summary(msys, &sol.trajectory)?;
    if psi > NOETHER_LIMIT * ptheta {
        out.violations.push(format!(
            "{tag}: Noether residual {psi:e} exceeds {NOETHER_LIMIT:e} x {ptheta:e}"
        ));
    }
    Ok((psi, ptheta))
}

fn maneuver(ctx: &Context) -> Result<StudyResult, CliError> {
    const S: &str = "maneuver";
    let cfg = ctx.cfg;
    let (r, p, dt) = (cfg.r, cfg.grid.p, cfg.grid.dt_s);
    let msys = ctx.msys(r)?;
    let grid = ctx.grid(dt, p)?;
    let spec = ctx.spec(msys.clone(), grid);
    let sol = solve_maneuver(&spec)?;
    let mut out = StudyResult::default();
    let (psi, ptheta) = check_solution(&msys, &sol, S, &mut out)?;

    let n = msys.dof();
    let mut states = TimeSeries {
        name: "maneuver_states".into(),
        columns: state_columns(n),
        rows: vec![],
    };
    states.columns.push("theta_dot_rad_s".into());
    states.columns.extend((1..n).map(|j| format!("eta{j}_dot")));
    let ns = grid.macro_count();
    let mut final_error = 0.0_f64;
    for k in 0..=ns {
        let (xi, xi_dot) = from_modal(&msys, &sol.modal_state(k))?;
        if k == ns {
            final_error = xi
                .iter()
                .zip(&spec.xi_end)
                .chain(xi_dot.iter().zip(&spec.xi_dot_end))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
        }
        if k % cfg.study.sample_every == 0 || k == ns {
            let mut v = vec![grid.macro_time(k)];
            v.extend(xi);
            v.extend(xi_dot);
            states.rows.push(v);
        }
    }
    let controls = TimeSeries {
        name: "maneuver_control".into(),
        columns: vec!["t_mid_s".into(), "tau".into()],
        rows: sol
            .trajectory
            .all_controls()
            .iter()
            .enumerate()
            .map(|(i, &u)| vec![(i as f64 + 0.5) * dt, u])
            .collect(),
    };
    let row = |m: &str, v: f64| ctx.row(S, p, r, Some(dt), m, v);
    out.rows.extend([
        row("cost", sol.cost),
        row("n_total_var", sol.layout.n_total_var() as f64),
        row("n_eq_con", sol.layout.n_eq_con() as f64),
        row("primal_residual_scaled", sol.residuals.primal_scaled),
        row("dual_residual_scaled", sol.residuals.dual_scaled),
        row("regularization", sol.regularization),
        row("del_residual_rel", sol.del_residual.relative()),
        row("noether_max", psi),
        row("p_theta_max", ptheta),
        row("final_state_error", final_error),
        row("assemble_seconds", sol.assemble_seconds),
        row("solve_seconds", sol.solve_seconds),
    ]);
    out.summary.extend([
        ("maneuver.primal_residual_scaled".into(), sol.residuals.primal_scaled),
        ("maneuver.dual_residual_scaled".into(), sol.residuals.dual_scaled),
        ("maneuver.del_residual_rel".into(), sol.del_residual.relative()),
        (
            "maneuver.noether_ratio".into(),
            if ptheta > 0.0 { psi / ptheta } else { psi },
        ),
        ("maneuver.final_state_error".into(), final_error),
    ]);

    out.plots.push((
        "maneuver_hub.svg".into(),
        LineChart::new("Hub angle", "t (s)", "theta (rad)")
            .with_series("theta", states.rows.iter().map(|v| (v[0], v[1])).collect()),
    ));
    let mut defl = LineChart::new("Appendage coordinates", "t (s)", "eta");
    for j in 1..n {
        defl = defl.with_series(
            &format!("eta{j}"),
            states.rows.iter().map(|v| (v[0], v[j + 1])).collect(),
        );
    }
    out.plots.push(("maneuver_appendage.svg".into(), defl));
    let stride = (controls.rows.len() / 2000).max(1);
    out.plots.push((
        "maneuver_control.svg".into(),
        LineChart::new("Control torque", "t (s)", "tau").with_series(
            "tau",
            controls.rows.iter().step_by(stride).map(|v| (v[0], v[1])).collect(),
        ),
    ));
    out.series.push(states);
    out.series.push(controls);
    Ok(out)
}

fn ocp_convergence(ctx: &Context) -> Result<StudyResult, CliError> {
    const S: &str = "ocp_convergence";
    let cfg = ctx.cfg;
    let r = cfg.r;
    let msys = ctx.msys(r)?;
    let points: Vec<(usize, f64)> = cfg
        .study
        .p_list
        .iter()
        .flat_map(|&p| cfg.study.dt_list_s.iter().map(move |&dt| (p, dt)))
        .collect();
    struct Point {
        cost: f64,
        cost_ref: f64,
        xi: (f64, f64),
        tau: (f64, f64),
        tau_micro: f64,
        violations: Vec<String>,
    }
    let results: Vec<Point> = points
        .par_iter()
        .map(|&(p, dt)| -> Result<Point, CliError> {
            let grid = ctx.grid(dt, p)?;
            let spec = ctx.spec(msys.clone(), grid);
            let sol = solve_maneuver(&spec)?;
            let mut scratch = StudyResult::default();
            check_solution(&msys, &sol, &format!("{S} p={p} dt={dt}"), &mut scratch)?;
            let nodes: Vec<f64> = (0..=grid.macro_count()).map(|k| grid.macro_time(k)).collect();
            let mids: Vec<f64> = (0..grid.micro_interval_count())
                .map(|i| (i as f64 + 0.5) * dt)
                .collect();
            let at_nodes = lq_tpbvp_reference(&spec, &nodes)?;
            let at_mids = lq_tpbvp_reference(&spec, &mids)?;
            let xi = series_error(&solution_physical_nodes(&msys, &sol)?, &at_nodes.physical(&msys)?)?;
            // Controls on the macro grid; pointwise micro errors are first order for p > 1.
            let tau = series_error(
                &macro_means(sol.trajectory.all_controls(), p)?,
                &macro_means(&at_mids.control, p)?,
            )?;
            let tau_micro = series_error(
                &scalar_nodes(sol.trajectory.all_controls()),
                &scalar_nodes(&at_mids.control),
            )?;
            Ok(Point {
                cost: sol.cost,
                cost_ref: at_nodes.cost,
                xi: (xi.absolute, xi.relative),
                tau: (tau.absolute, tau.relative),
                tau_micro: tau_micro.absolute,
                violations: scratch.violations,
            })
        })
        .collect::<Result<_, _>>()?;

    let mut out = StudyResult::default();
    for (&(p, dt), pt) in points.iter().zip(&results) {
        let ec = (pt.cost - pt.cost_ref).abs();
        for (m, v) in [
            ("cost", pt.cost),
            ("cost_reference", pt.cost_ref),
            ("error_cost", ec),
            ("rel_error_cost", ec / pt.cost_ref.abs().max(f64::MIN_POSITIVE)),
            ("error_xi", pt.xi.0),
            ("rel_error_xi", pt.xi.1),
            ("error_tau", pt.tau.0),
            ("rel_error_tau", pt.tau.1),
            ("error_tau_micro", pt.tau_micro),
        ] {
            out.rows.push(ctx.row(S, p, r, Some(dt), m, v));
        }
        out.violations.extend(pt.violations.iter().cloned());
    }
    let mut chart = LineChart::new("Optimal control errors", "dt (s)", "error").log_log();
    for &p in &cfg.study.p_list {
        let idx: Vec<usize> = (0..points.len()).filter(|&i| points[i].0 == p).collect();
        let steps: Vec<f64> = idx.iter().map(|&i| points[i].1).collect();
        let series: [(&str, Vec<f64>); 3] = [
            (
                "cost",
                idx.iter()
                    .map(|&i| (results[i].cost - results[i].cost_ref).abs())
                    .collect(),
            ),
            ("xi", idx.iter().map(|&i| results[i].xi.0).collect()),
            ("tau", idx.iter().map(|&i| results[i].tau.0).collect()),
        ];
        for (label, e) in series {
            fit_rows(ctx, S, p, r, label, &steps, &e, &mut out);
            chart = chart.with_series(&format!("{label}, p = {p}"), steps.iter().copied().zip(e).collect());
        }
    }
    out.plots.push(("ocp_convergence.svg".into(), chart));
    Ok(out)
}

fn layout_rows(
    ctx: &Context,
    study: &'static str,
    p: usize,
    r: usize,
    out: &mut StudyResult,
) -> Result<VariableLayout, CliError> {
    let cfg = ctx.cfg;
    let dt = cfg.grid.dt_s;
    let grid = ctx.grid(dt, p)?;
    let n = cfg.spacecraft.num_modes + 1;
    let layout = VariableLayout::new(r, n - r, &grid);
    let slow_formula = slow_variable_formula(r, cfg.grid.tf_s, dt, p);
    let fast_formula = fast_variable_formula(cfg.spacecraft.num_modes, r, cfg.grid.tf_s, dt);
    if layout.n_slow_var() != slow_formula || layout.n_fast_var() != fast_formula {
        out.violations.push(format!(
            "{study} p={p} r={r}: layout counts ({}, {}) differ from formulas ({slow_formula}, {fast_formula})",
            layout.n_slow_var(),
            layout.n_fast_var()
        ));
    }
    for (m, v) in [
        ("n_slow_var", layout.n_slow_var()),
        ("n_fast_var", layout.n_fast_var()),
        ("n_total_var", layout.n_total_var()),
        ("n_eq_con", layout.n_eq_con()),
        ("formula_slow_var", slow_formula),
        ("formula_fast_var", fast_formula),
    ] {
        out.rows.push(ctx.row(study, p, r, Some(dt), m, v as f64));
    }
    Ok(layout)
}

fn size(ctx: &Context) -> Result<StudyResult, CliError> {
    const S: &str = "size";
    let cfg = ctx.cfg;
    let mut out = StudyResult::default();
    let mut chart = LineChart::new("Problem size", "p", "total variables");
    for &r in &cfg.study.r_list {
        let mut pts = vec![];
        for &p in &cfg.study.p_list {
            let l = layout_rows(ctx, S, p, r, &mut out)?;
            pts.push((p as f64, l.n_total_var() as f64));
        }
        chart = chart.with_series(&format!("r = {r}"), pts);
    }
    out.plots.push(("size.svg".into(), chart));
    Ok(out)
}

/// Physical reference configurations on the micro nodes of the configured step.
fn tradeoff_reference(ctx: &Context, msys: &ModalSystem) -> Result<Vec<Vec<f64>>, CliError> {
    let cfg = ctx.cfg;
    let dt = cfg.grid.dt_s;
    let grid = ctx.grid(dt, 1)?;
    let spec = ctx.spec(msys.clone(), grid);
    match cfg.study.reference {
        ReferenceKind::Analytic => {
            let times: Vec<f64> = (0..=grid.macro_count()).map(|k| grid.macro_time(k)).collect();
            Ok(lq_tpbvp_reference(&spec, &times)?.physical(msys)?)
        }
        ReferenceKind::Fine => {
            let m = cfg.study.refinement;
            let fine = fine_grid_reference(&spec, m)?;
            let all = solution_physical_nodes(msys, &fine)?;
            Ok(all.into_iter().step_by(m).collect())
        }
    }
}

/// Accuracy pass per `p` (which doubles as warm-up), then timing repetitions
/// interleaved across `p` so slow drifts in machine load hit every `p` alike.
fn tradeoff(ctx: &Context) -> Result<StudyResult, CliError> {
    const S: &str = "tradeoff";
    let cfg = ctx.cfg;
    let dt = cfg.grid.dt_s;
    let reps = cfg.study.repetitions;
    let p_list = &cfg.study.p_list;
    let mut out = StudyResult::default();
    let reference = tradeoff_reference(ctx, &ctx.msys(cfg.r)?)?;
    let mut err_chart = LineChart::new("Relative trajectory error", "p", "e_rel");
    let mut time_chart = LineChart::new("Assemble + solve time", "p", "mean seconds");
    for &r in &cfg.study.r_list {
        let msys = ctx.msys(r)?;
        let specs: Vec<OcpSpec> = p_list
            .iter()
            .map(|&p| Ok(ctx.spec(msys.clone(), ctx.grid(dt, p)?)))
            .collect::<Result<_, CliError>>()?;
        let mut err_pts = vec![];
        for (&p, spec) in p_list.iter().zip(&specs) {
            layout_rows(ctx, S, p, r, &mut out)?;
            let sol = solve_maneuver(spec)?;
            check_solution(&msys, &sol, &format!("{S} p={p} r={r}"), &mut out)?;
            let nodes: Vec<Vec<f64>> = reference.iter().step_by(p).cloned().collect();
            let e = series_error(&solution_physical_nodes(&msys, &sol)?, &nodes)?;
            out.rows.push(ctx.row(S, p, r, Some(dt), "e_rel_xi", e.relative));
            out.rows.push(ctx.row(S, p, r, Some(dt), "e_abs_xi", e.absolute));
            out.rows.push(ctx.row(S, p, r, Some(dt), "cost", sol.cost));
            err_pts.push((p as f64, e.relative));
        }

        // times[i][rep] = (assemble, solve)
        let mut times = vec![Vec::with_capacity(reps); p_list.len()];
        for _ in 0..reps {
            for (i, spec) in specs.iter().enumerate() {
                let sol = solve_maneuver(spec)?;
                times[i].push((sol.assemble_seconds, sol.solve_seconds));
            }
        }
        let mut time_pts = vec![];
        for (&p, t) in p_list.iter().zip(&times) {
            for (rep, &(a, b)) in t.iter().enumerate() {
                for (m, v) in [("assemble_seconds", a), ("solve_seconds", b), ("total_seconds", a + b)] {
                    out.rows.push(Row {
                        rep,
                        ..ctx.row(S, p, r, Some(dt), m, v)
                    });
                }
            }
            let asm: Vec<f64> = t.iter().map(|x| x.0).collect();
            let sol: Vec<f64> = t.iter().map(|x| x.1).collect();
            let tot: Vec<f64> = t.iter().map(|x| x.0 + x.1).collect();
            for (name, v) in [
                ("assemble_seconds", &asm),
                ("solve_seconds", &sol),
                ("total_seconds", &tot),
            ] {
                let (mean, sd) = mean_sd(v);
                out.rows.push(ctx.row(S, p, r, Some(dt), &format!("{name}_mean"), mean));
                out.rows.push(ctx.row(S, p, r, Some(dt), &format!("{name}_sd"), sd));
            }
            time_pts.push((p as f64, mean_sd(&tot).0));
        }
        let p_max = *p_list.last().unwrap_or(&1);
        let decreasing = time_pts.windows(2).all(|w| w[1].1 < w[0].1);
        out.rows.push(ctx.row(
            S,
            p_max,
            r,
            Some(dt),
            "timing_decreasing_in_p",
            f64::from(decreasing as u8),
        ));
        let nondecreasing = err_pts.windows(2).all(|w| w[1].1 >= w[0].1);
        out.rows.push(ctx.row(
            S,
            p_max,
            r,
            Some(dt),
            "e_rel_nondecreasing_in_p",
            f64::from(nondecreasing as u8),
        ));
        out.summary.push((
            format!("tradeoff.r{r}.timing_decreasing_in_p"),
            f64::from(decreasing as u8),
        ));
        err_chart = err_chart.with_series(&format!("r = {r}"), err_pts);
        time_chart = time_chart.with_series(&format!("r = {r}"), time_pts);
    }
    out.plots.push(("tradeoff_error.svg".into(), err_chart));
    out.plots.push(("tradeoff_time.svg".into(), time_chart));
    Ok(out)
}
