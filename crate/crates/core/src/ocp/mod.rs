//! Multirate DMOC transcription of the rest-to-rest maneuver as a sparse
//! equality-constrained QP.
//!
//! Unknowns are the slow configurations and momenta on macro nodes, the fast
//! configurations and momenta on micro nodes, and the controls on micro
//! intervals. Each interval contributes the left and right discrete Legendre
//! transforms as constraints, so matching momenta at shared nodes is exactly
//! the forced discrete Euler-Lagrange equations. Velocity boundary values enter
//! through the momenta at the first and last node.

pub mod kkt;

use web_time::Instant;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::integrator::{del_residual, diagnostics, DelResidual, MultirateGrid, MultirateTrajectory, Scheme};
use crate::modal::{to_modal, ModalState, ModalSystem};
use kkt::{solve_kkt, CscMatrix};
pub use kkt::{FactorizationKind, KktResiduals, SolveStatus};

/// Tolerance of the independent discrete Euler-Lagrange re-check.
const DEL_RECHECK_TOL: f64 = 1e-8;

/// The optimal control problem.
#[derive(Debug, Clone)]
pub struct OcpSpec {
    pub msys: ModalSystem,
    pub grid: MultirateGrid,
    pub xi_start: Vec<f64>,
    pub xi_end: Vec<f64>,
    pub xi_dot_start: Vec<f64>,
    pub xi_dot_end: Vec<f64>,
    /// Weight on the modal state `[q; q̇]`.
    pub state_weight: DMatrix<f64>,
    pub control_weight: f64,
}

impl OcpSpec {
    /// Rest-to-rest hub rotation from `θ = 0` to `θ = theta_deg` degrees
    /// with all deflections zero at both ends, identity state weight and unit
    /// control weight.
    pub fn rest_to_rest(msys: ModalSystem, grid: MultirateGrid, theta_deg: f64) -> Self {
        let n = msys.dof();
        let mut xi_end = vec![0.0; n];
        xi_end[0] = theta_deg.to_radians();
        Self {
            msys,
            grid,
            xi_start: vec![0.0; n],
            xi_end,
            xi_dot_start: vec![0.0; n],
            xi_dot_end: vec![0.0; n],
            state_weight: DMatrix::identity(2 * n, 2 * n),
            control_weight: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.msys.dof();
        for (name, v) in [
            ("xi_start", &self.xi_start),
            ("xi_end", &self.xi_end),
            ("xi_dot_start", &self.xi_dot_start),
            ("xi_dot_end", &self.xi_dot_end),
        ] {
            if v.len() != n {
                return Err(Error::Config(format!("{name} has length {}, expected {n}", v.len())));
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::Config(format!("{name} is not finite")));
            }
        }
        let w = &self.state_weight;
        if w.shape() != (2 * n, 2 * n) {
            return Err(Error::Config(format!("state weight must be {0}x{0}", 2 * n)));
        }
        if (w - w.transpose()).amax() > 1e-12 * w.amax().max(1.0) {
            return Err(Error::Config("state weight is not symmetric".into()));
        }
        let min_eig = w.clone().symmetric_eigenvalues().min();
        if min_eig < -1e-12 * w.amax().max(1.0) {
            return Err(Error::Config("state weight is not positive semidefinite".into()));
        }
        if !(self.control_weight.is_finite() && self.control_weight > 0.0) {
            return Err(Error::Config("control weight must be positive".into()));
        }
        Ok(())
    }

    /// Same problem on a different grid.
    pub fn with_grid(&self, grid: MultirateGrid) -> Self {
        Self { grid, ..self.clone() }
    }
}

/// Index map of the QP unknowns.
///
/// Variables are interleaved by macro interval `k`:
/// `[q^s_k, p^s_k, (q^f_i, p^f_i, τ_i) for i = kp..kp+p]`, followed by the
/// final `[q^s_n, p^s_n, q^f_last, p^f_last]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariableLayout {
    n_slow: usize,
    n_fast: usize,
    micro_count: usize,
    macro_count: usize,
}

impl VariableLayout {
    pub fn new(n_slow: usize, n_fast: usize, grid: &MultirateGrid) -> Self {
        Self {
            n_slow,
            n_fast,
            micro_count: grid.micro_count(),
            macro_count: grid.macro_count(),
        }
    }

    fn block(&self) -> usize {
        2 * self.n_slow + self.micro_count * (2 * self.n_fast + 1)
    }

    fn micro_offset(&self, i: usize) -> usize {
        let (k, m) = (i / self.micro_count, i % self.micro_count);
        k * self.block() + 2 * self.n_slow + m * (2 * self.n_fast + 1)
    }

    /// Offset of `q^s_k`.
    pub fn slow_config(&self, k: usize) -> usize {
        k * self.block()
    }

    /// Offset of `p^s_k`.
    pub fn slow_momentum(&self, k: usize) -> usize {
        k * self.block() + self.n_slow
    }

    /// Offset of the fast configuration at micro node `i`.
    pub fn fast_config(&self, i: usize) -> usize {
        self.micro_offset(i)
    }

    /// Offset of the fast momentum at micro node `i`.
    pub fn fast_momentum(&self, i: usize) -> usize {
        self.micro_offset(i) + self.n_fast
    }

    /// Offset of the control on micro interval `i`.
    pub fn control(&self, i: usize) -> usize {
        self.micro_offset(i) + 2 * self.n_fast
    }

    pub fn n_micro(&self) -> usize {
        self.macro_count * self.micro_count
    }

    /// Slow configurations and momenta, `2r(n_s + 1)`.
    pub fn n_slow_var(&self) -> usize {
        2 * self.n_slow * (self.macro_count + 1)
    }

    /// Fast configurations and momenta plus controls,
    /// `2(N + 1 − r)(n_s p + 1) + n_s p`.
    pub fn n_fast_var(&self) -> usize {
        2 * self.n_fast * (self.n_micro() + 1) + self.n_micro()
    }

    pub fn n_total_var(&self) -> usize {
        self.n_slow_var() + self.n_fast_var()
    }

    /// Two Legendre-transform blocks per interval plus four boundary blocks.
    pub fn n_eq_con(&self) -> usize {
        2 * self.n_slow * self.macro_count + 2 * self.n_fast * self.n_micro() + 4 * (self.n_slow + self.n_fast)
    }
}

/// Slow variable count `2r(t_f/(pΔt) + 1)` from the horizon and steps.
pub fn slow_variable_formula(r: usize, tf: f64, dt: f64, p: usize) -> usize {
    2 * r * ((tf / (p as f64 * dt)).round() as usize + 1)
}

/// Fast variable count `2(N + 1 − r)(t_f/Δt + 1) + t_f/Δt`.
pub fn fast_variable_formula(num_modes: usize, r: usize, tf: f64, dt: f64) -> usize {
    let steps = (tf / dt).round() as usize;
    2 * (num_modes + 1 - r) * (steps + 1) + steps
}

/// Sparse QP `min ½zᵀHz + gᵀz  s.t.  Az = b`.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub h: CscMatrix,
    pub g: Vec<f64>,
    pub a: CscMatrix,
    pub b: Vec<f64>,
}

/// Midpoint state `[q̄; v]` on micro interval `m` of a macro interval, where
/// `a` and `b` are the fast nodes bounding it.
fn midpoint_state(scheme: &Scheme, m: usize, qs0: &[f64], qs1: &[f64], a: &[f64], b: &[f64], out: &mut [f64]) {
    let (r, nf) = (scheme.n_slow(), scheme.n_fast());
    let n = r + nf;
    let w = scheme.midpoint_weight(m);
    let big = scheme.micro_step() * scheme.micro_count() as f64;
    for j in 0..r {
        out[j] = (1.0 - w) * qs0[j] + w * qs1[j];
        out[n + j] = (qs1[j] - qs0[j]) / big;
    }
    for j in 0..nf {
        out[r + j] = 0.5 * (a[j] + b[j]);
        out[n + r + j] = (b[j] - a[j]) / scheme.micro_step();
    }
}

/// Discrete cost of one macro interval: midpoint rule per micro interval on
/// `½x̄ᵀWx̄ + ½Rτ²`.
pub fn discrete_cost(
    msys: &ModalSystem,
    grid: &MultirateGrid,
    qs0: &[f64],
    qs1: &[f64],
    qf: &[f64],
    tau: &[f64],
    state_weight: &DMatrix<f64>,
    control_weight: f64,
) -> Result<f64> {
    let scheme = Scheme::new(msys, grid);
    let (r, nf, p) = (scheme.n_slow(), scheme.n_fast(), scheme.micro_count());
    let n = r + nf;
    if qs0.len() != r || qs1.len() != r || qf.len() != (p + 1) * nf || tau.len() != p {
        return Err(Error::Domain(
            "discrete cost arguments do not match the grid and split".into(),
        ));
    }
    if state_weight.shape() != (2 * n, 2 * n) {
        return Err(Error::Domain("state weight has the wrong size".into()));
    }
    let mut x = vec![0.0; 2 * n];
    let mut acc = 0.0;
    for m in 0..p {
        midpoint_state(
            &scheme,
            m,
            qs0,
            qs1,
            &qf[m * nf..(m + 1) * nf],
            &qf[(m + 1) * nf..(m + 2) * nf],
            &mut x,
        );
        let xv = nalgebra::DVector::from_column_slice(&x);
        acc += 0.5 * xv.dot(&(state_weight * &xv)) + 0.5 * control_weight * tau[m] * tau[m];
    }
    Ok(scheme.micro_step() * acc)
}

/// Dense matrix of a linear map given as a closure, by unit probing.
fn probe(n_in: usize, n_out: usize, f: impl Fn(&[f64], &mut [f64])) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n_out, n_in);
    let mut x = vec![0.0; n_in];
    let mut y = vec![0.0; n_out];
    for j in 0..n_in {
        x[j] = 1.0;
        f(&x, &mut y);
        out.column_mut(j).copy_from_slice(&y);
        x[j] = 0.0;
    }
    out
}

/// Linear coefficients of every constraint and cost block, obtained from the
/// integrator's own slot-derivative and force code.
struct Stencils {
    /// Rows `D1`, `D2` over `[q^s_k; q^s_{k+1}]`.
    slow_left: DMatrix<f64>,
    slow_right: DMatrix<f64>,
    /// Slow force per unit control on micro interval `m` (identical for all m).
    slow_force: Vec<f64>,
    /// Rows `D_a`, `D_b` over `[a; b]`.
    fast_left: DMatrix<f64>,
    fast_right: DMatrix<f64>,
    fast_force: Vec<f64>,
    /// `Δt SᵀWS` over `[q^s_k; q^s_{k+1}; a; b]`, one per micro index.
    cost: Vec<DMatrix<f64>>,
}

impl Stencils {
    fn new(scheme: &Scheme, state_weight: &DMatrix<f64>) -> Self {
        let (r, nf, p) = (scheme.n_slow(), scheme.n_fast(), scheme.micro_count());
        let slow_pair = |x: &[f64], y: &mut [f64], left: bool| {
            let (mut d1, mut d2) = (vec![0.0; r], vec![0.0; r]);
            scheme.slow_derivatives(&x[..r], &x[r..], &mut d1, &mut d2);
            y.copy_from_slice(if left { &d1 } else { &d2 });
        };
        let fast_pair = |x: &[f64], y: &mut [f64], left: bool| {
            let (mut da, mut db) = (vec![0.0; nf], vec![0.0; nf]);
            scheme.fast_derivatives(&x[..nf], &x[nf..], &mut da, &mut db);
            y.copy_from_slice(if left { &da } else { &db });
        };
        let mut slow_force = vec![0.0; r];
        let mut unit = vec![0.0; p];
        unit[0] = 1.0;
        scheme.slow_force(&unit, &mut slow_force);
        let mut fast_force = vec![0.0; nf];
        scheme.fast_force(1.0, &mut fast_force);

        let n = r + nf;
        let dt = scheme.micro_step();
        let cost = (0..p)
            .map(|m| {
                let s = probe(2 * r + 2 * nf, 2 * n, |x, y| {
                    midpoint_state(
                        scheme,
                        m,
                        &x[..r],
                        &x[r..2 * r],
                        &x[2 * r..2 * r + nf],
                        &x[2 * r + nf..],
                        y,
                    )
                });
                (s.transpose() * state_weight * &s) * dt
            })
            .collect();
        Self {
            slow_left: probe(2 * r, r, |x, y| slow_pair(x, y, true)),
            slow_right: probe(2 * r, r, |x, y| slow_pair(x, y, false)),
            slow_force,
            fast_left: probe(2 * nf, nf, |x, y| fast_pair(x, y, true)),
            fast_right: probe(2 * nf, nf, |x, y| fast_pair(x, y, false)),
            fast_force,
            cost,
        }
    }
}

/// Builds the QP of a spec.
pub fn assemble(spec: &OcpSpec) -> Result<(QpProblem, VariableLayout)> {
    spec.validate()?;
    let msys = &spec.msys;
    let grid = &spec.grid;
    let scheme = Scheme::new(msys, grid);
    let (r, nf, p) = (scheme.n_slow(), scheme.n_fast(), scheme.micro_count());
    let layout = VariableLayout::new(r, nf, grid);
    let st = Stencils::new(&scheme, &spec.state_weight);
    let n_s = grid.macro_count();
    let n_var = layout.n_total_var();
    let n_eq = layout.n_eq_con();

    let mut a_trip: Vec<(usize, usize, f64)> = Vec::new();
    let mut b = vec![0.0; n_eq];
    let mut row = 0;
    let push = |trip: &mut Vec<(usize, usize, f64)>, i: usize, j: usize, v: f64| {
        if v != 0.0 {
            trip.push((i, j, v));
        }
    };

    for k in 0..n_s {
        let cols: Vec<usize> = (0..r)
            .map(|j| layout.slow_config(k) + j)
            .chain((0..r).map(|j| layout.slow_config(k + 1) + j))
            .collect();
        // p^s_k + D1 + f^s = 0
        for i in 0..r {
            push(&mut a_trip, row + i, layout.slow_momentum(k) + i, 1.0);
            for (c, &col) in cols.iter().enumerate() {
                push(&mut a_trip, row + i, col, st.slow_left[(i, c)]);
            }
            for m in 0..p {
                push(&mut a_trip, row + i, layout.control(k * p + m), st.slow_force[i]);
            }
        }
        row += r;
        // p^s_{k+1} − D2 − f^s = 0
        for i in 0..r {
            push(&mut a_trip, row + i, layout.slow_momentum(k + 1) + i, 1.0);
            for (c, &col) in cols.iter().enumerate() {
                push(&mut a_trip, row + i, col, -st.slow_right[(i, c)]);
            }
            for m in 0..p {
                push(&mut a_trip, row + i, layout.control(k * p + m), -st.slow_force[i]);
            }
        }
        row += r;
        for m in 0..p {
            let i0 = k * p + m;
            let cols: Vec<usize> = (0..nf)
                .map(|j| layout.fast_config(i0) + j)
                .chain((0..nf).map(|j| layout.fast_config(i0 + 1) + j))
                .collect();
            for i in 0..nf {
                push(&mut a_trip, row + i, layout.fast_momentum(i0) + i, 1.0);
                for (c, &col) in cols.iter().enumerate() {
                    push(&mut a_trip, row + i, col, st.fast_left[(i, c)]);
                }
                push(&mut a_trip, row + i, layout.control(i0), st.fast_force[i]);
            }
            row += nf;
            for i in 0..nf {
                push(&mut a_trip, row + i, layout.fast_momentum(i0 + 1) + i, 1.0);
                for (c, &col) in cols.iter().enumerate() {
                    push(&mut a_trip, row + i, col, -st.fast_right[(i, c)]);
                }
                push(&mut a_trip, row + i, layout.control(i0), -st.fast_force[i]);
            }
            row += nf;
        }
    }

    let start = to_modal(msys, &spec.xi_start, &spec.xi_dot_start)?;
    let end = to_modal(msys, &spec.xi_end, &spec.xi_dot_end)?;
    let n_micro = layout.n_micro();
    for (state, k, i) in [(&start, 0, 0), (&end, n_s, n_micro)] {
        let blocks = [
            (layout.slow_config(k), &state.q[..r]),
            (layout.slow_momentum(k), &state.qdot[..r]),
            (layout.fast_config(i), &state.q[r..]),
            (layout.fast_momentum(i), &state.qdot[r..]),
        ];
        for (offset, values) in blocks {
            for (j, &v) in values.iter().enumerate() {
                a_trip.push((row, offset + j, 1.0));
                b[row] = v;
                row += 1;
            }
        }
    }
    debug_assert_eq!(row, n_eq);

    let mut h_trip: Vec<(usize, usize, f64)> = Vec::new();
    for k in 0..n_s {
        for m in 0..p {
            let i0 = k * p + m;
            let cols: Vec<usize> = (0..r)
                .map(|j| layout.slow_config(k) + j)
                .chain((0..r).map(|j| layout.slow_config(k + 1) + j))
                .chain((0..nf).map(|j| layout.fast_config(i0) + j))
                .chain((0..nf).map(|j| layout.fast_config(i0 + 1) + j))
                .collect();
            let local = &st.cost[m];
            for (ci, &gi) in cols.iter().enumerate() {
                for (cj, &gj) in cols.iter().enumerate() {
                    push(&mut h_trip, gi, gj, local[(ci, cj)]);
                }
            }
            h_trip.push((
                layout.control(i0),
                layout.control(i0),
                scheme.micro_step() * spec.control_weight,
            ));
        }
    }

    let a = CscMatrix::from_triplets(n_eq, n_var, &a_trip)?;
    let mut row_seen = vec![false; n_eq];
    for (i, _, _) in a.iter() {
        row_seen[i] = true;
    }
    if let Some(empty) = row_seen.iter().position(|s| !s) {
        return Err(Error::Assembly(format!("constraint row {empty} is empty")));
    }
    let h = CscMatrix::from_triplets(n_var, n_var, &h_trip)?;
    Ok((
        QpProblem {
            h,
            g: vec![0.0; n_var],
            a,
            b,
        },
        layout,
    ))
}

/// Solved maneuver.
#[derive(Debug, Clone)]
pub struct OcpSolution {
    pub trajectory: MultirateTrajectory,
    /// Raw QP unknowns in layout order.
    pub variables: Vec<f64>,
    pub multipliers: Vec<f64>,
    /// `J_d = ½zᵀHz + gᵀz`.
    pub cost: f64,
    pub residuals: KktResiduals,
    pub factorization: FactorizationKind,
    pub regularization: f64,
    pub refinement_passes: usize,
    pub status: SolveStatus,
    /// Independent re-check of the discrete Euler-Lagrange equations.
    pub del_residual: DelResidual,
    pub layout: VariableLayout,
    pub assemble_seconds: f64,
    pub solve_seconds: f64,
}

impl OcpSolution {
    /// Modal state at macro node `k`, with the node momenta as rates.
    pub fn modal_state(&self, k: usize) -> ModalState {
        let l = &self.layout;
        let p = self.trajectory.grid().micro_count();
        let r = self.trajectory.n_slow();
        let nf = self.trajectory.n_fast();
        let z = &self.variables;
        let mut qdot = z[l.slow_momentum(k)..l.slow_momentum(k) + r].to_vec();
        qdot.extend_from_slice(&z[l.fast_momentum(k * p)..l.fast_momentum(k * p) + nf]);
        ModalState {
            q: self.trajectory.macro_config(k),
            qdot,
        }
    }
}

/// Unpacks QP unknowns into a trajectory.
pub fn extract_trajectory(layout: &VariableLayout, grid: &MultirateGrid, z: &[f64]) -> MultirateTrajectory {
    let (r, nf) = (layout.n_slow, layout.n_fast);
    let mut traj = MultirateTrajectory::zeros(*grid, r, nf);
    for k in 0..=grid.macro_count() {
        let o = layout.slow_config(k);
        traj.slow_node_mut(k).copy_from_slice(&z[o..o + r]);
    }
    for i in 0..=layout.n_micro() {
        let o = layout.fast_config(i);
        traj.fast_node_mut(i).copy_from_slice(&z[o..o + nf]);
    }
    for (i, t) in traj.all_controls_mut().iter_mut().enumerate() {
        *t = z[layout.control(i)];
    }
    traj
}

/// Assembles, solves and re-checks a maneuver.
pub fn solve_maneuver(spec: &OcpSpec) -> Result<OcpSolution> {
    let t0 = Instant::now();
    let (qp, layout) = assemble(spec)?;
    let assemble_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let sol = solve_kkt(&qp.h, &qp.g, &qp.a, &qp.b)?;
    let solve_seconds = t1.elapsed().as_secs_f64();

    let trajectory = extract_trajectory(&layout, &spec.grid, &sol.z);
    let hz = qp.h.mul_vec(&sol.z);
    let cost = 0.5 * sol.z.iter().zip(&hz).map(|(a, b)| a * b).sum::<f64>()
        + sol.z.iter().zip(&qp.g).map(|(a, b)| a * b).sum::<f64>();
    let del = del_residual(&spec.msys, &trajectory)?;
    if del.relative() > DEL_RECHECK_TOL && sol.status == SolveStatus::Converged {
        return Err(Error::numeric(
            "dmoc_ocp",
            format!(
                "solution violates the discrete Euler-Lagrange equations by {:e}",
                del.relative()
            ),
        ));
    }
    Ok(OcpSolution {
        trajectory,
        variables: sol.z,
        multipliers: sol.multipliers,
        cost,
        residuals: sol.residuals,
        factorization: sol.factorization,
        regularization: sol.regularization,
        refinement_passes: sol.refinement_passes,
        status: sol.status,
        del_residual: del,
        layout,
        assemble_seconds,
        solve_seconds,
    })
}

/// Largest `|Ψ_k|` and largest `|p_θ,k|` along a solution.
pub fn noether_summary(msys: &ModalSystem, traj: &MultirateTrajectory) -> Result<(f64, f64)> {
    let d = diagnostics(msys, traj)?;
    let psi = d.noether.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let pth = d.hub_momentum.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    Ok((psi, pth))
}
