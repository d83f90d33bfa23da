//! Independent references: closed-form free response, the continuous LQ
//! optimal control solution, fine-grid discrete solves, RK4 integration, and
//! the max-over-nodes error metrics.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::beam::gauss_legendre;
use crate::error::{Error, Result};
use crate::integrator::MultirateGrid;
use crate::modal::{from_modal, to_modal, ModalState, ModalSystem};
use crate::ocp::{solve_maneuver, OcpSolution, OcpSpec};

const TPBVP_COND_LIMIT: f64 = 1e12;
const COST_PANEL_ORDER: usize = 8;

/// Exact unforced modal state at time `t`.
pub fn free_response(msys: &ModalSystem, initial: &ModalState, t: f64) -> Result<ModalState> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be nonnegative, got {t}")));
    }
    let n = msys.dof();
    if initial.q.len() != n || initial.qdot.len() != n {
        return Err(Error::Domain(format!("initial state must have {n} coordinates")));
    }
    let mut out = ModalState::zeros(n);
    for (j, &lam) in msys.eigenvalues().iter().enumerate() {
        let (q0, v0) = (initial.q[j], initial.qdot[j]);
        if lam > 0.0 {
            let w = lam.sqrt();
            let (s, c) = (w * t).sin_cos();
            out.q[j] = q0 * c + v0 * s / w;
            out.qdot[j] = -q0 * w * s + v0 * c;
        } else {
            out.q[j] = q0 + v0 * t;
            out.qdot[j] = v0;
        }
    }
    Ok(out)
}

/// Continuous LQ solution sampled at requested times.
#[derive(Debug, Clone)]
pub struct LqReference {
    pub times: Vec<f64>,
    /// Modal `q` at each sample.
    pub q: Vec<Vec<f64>>,
    /// Modal `q̇` at each sample.
    pub qdot: Vec<Vec<f64>>,
    /// Costates `λ` at each sample.
    pub costate: Vec<Vec<f64>>,
    pub control: Vec<f64>,
    /// `J = ∫ ½xᵀWx + ½Ru² dt` over the whole horizon.
    pub cost: f64,
    /// Condition number of the boundary solve.
    pub condition: f64,
}

impl LqReference {
    /// Physical configurations `ξ = Eq` at each sample.
    pub fn physical(&self, msys: &ModalSystem) -> Result<Vec<Vec<f64>>> {
        self.q.iter().map(|q| msys.modal_to_physical(q)).collect()
    }
}

/// Hamiltonian system of the LQ problem in `[x; λ]` with `x = [q; q̇]`.
struct Hamiltonian {
    matrix: DMatrix<f64>,
    input: DVector<f64>,
    control_weight: f64,
    n: usize,
}

impl Hamiltonian {
    fn new(spec: &OcpSpec) -> Self {
        let msys = &spec.msys;
        let n = msys.dof();
        let nx = 2 * n;
        let mut a = DMatrix::zeros(nx, nx);
        for j in 0..n {
            a[(j, n + j)] = 1.0;
            a[(n + j, j)] = -msys.eigenvalues()[j];
        }
        let mut input = DVector::zeros(nx);
        for j in 0..n {
            input[n + j] = msys.input()[j];
        }
        let mut h = DMatrix::zeros(2 * nx, 2 * nx);
        h.view_mut((0, 0), (nx, nx)).copy_from(&a);
        let bbt = &input * input.transpose() / spec.control_weight;
        h.view_mut((0, nx), (nx, nx)).copy_from(&(-bbt));
        h.view_mut((nx, 0), (nx, nx)).copy_from(&(-&spec.state_weight));
        h.view_mut((nx, nx), (nx, nx)).copy_from(&(-a.transpose()));
        Self {
            matrix: h,
            input,
            control_weight: spec.control_weight,
            n,
        }
    }

    fn exp(&self, t: f64) -> DMatrix<f64> {
        (&self.matrix * t).exp()
    }

    fn control(&self, z: &DVector<f64>) -> f64 {
        let nx = 2 * self.n;
        -self.input.dot(&z.rows(nx, nx)) / self.control_weight
    }
}

/// Solves the continuous LQ rest-to-rest problem exactly through the
/// state-transition matrix of its Hamiltonian system.
pub fn lq_tpbvp_reference(spec: &OcpSpec, sample_times: &[f64]) -> Result<LqReference> {
    spec.validate()?;
    let msys = &spec.msys;
    let n = msys.dof();
    let nx = 2 * n;
    let (t0, tf) = (spec.grid.t0(), spec.grid.tf());
    let horizon = tf - t0;
    if let Some(t) = sample_times.iter().find(|&&t| !(t >= t0 && t <= tf)) {
        return Err(Error::Domain(format!("sample time {t} outside [{t0}, {tf}]")));
    }

    let start = to_modal(msys, &spec.xi_start, &spec.xi_dot_start)?;
    let end = to_modal(msys, &spec.xi_end, &spec.xi_dot_end)?;
    let x0 = DVector::from_iterator(nx, start.q.iter().chain(&start.qdot).copied());
    let xt = DVector::from_iterator(nx, end.q.iter().chain(&end.qdot).copied());

    let ham = Hamiltonian::new(spec);
    let phi = ham.exp(horizon);
    let phi11 = phi.view((0, 0), (nx, nx)).into_owned();
    let phi12 = phi.view((0, nx), (nx, nx)).into_owned();
    let sv = phi12.clone().singular_values();
    let condition = sv.max() / sv.min();
    if !(condition <= TPBVP_COND_LIMIT) {
        return Err(Error::numeric(
            "reference_oracles",
            format!(
                "boundary solve condition {condition:e} exceeds {TPBVP_COND_LIMIT:e}; \
                 use a shorter horizon or a higher precision path"
            ),
        ));
    }
    let lambda0 = phi12
        .lu()
        .solve(&(&xt - &phi11 * &x0))
        .ok_or_else(|| Error::numeric("reference_oracles", "singular boundary solve"))?;
    let mut z0 = DVector::zeros(2 * nx);
    z0.rows_mut(0, nx).copy_from(&x0);
    z0.rows_mut(nx, nx).copy_from(&lambda0);

    let mut out = LqReference {
        times: sample_times.to_vec(),
        q: Vec::with_capacity(sample_times.len()),
        qdot: Vec::with_capacity(sample_times.len()),
        costate: Vec::with_capacity(sample_times.len()),
        control: Vec::with_capacity(sample_times.len()),
        cost: 0.0,
        condition,
    };
    for &t in sample_times {
        let z = ham.exp(t - t0) * &z0;
        out.q.push(z.rows(0, n).iter().copied().collect());
        out.qdot.push(z.rows(n, n).iter().copied().collect());
        out.costate.push(z.rows(nx, nx).iter().copied().collect());
        out.control.push(ham.control(&z));
    }

    // Composite Gauss-Legendre on panels short against the fastest period.
    let w_max = msys.frequencies().into_iter().fold(1.0, f64::max);
    let panels = ((horizon * w_max * 4.0).ceil() as usize).max(64);
    let h = horizon / panels as f64;
    let (nodes, weights) = gauss_legendre(COST_PANEL_ORDER);
    let offsets: Vec<DMatrix<f64>> = nodes.iter().map(|&x| ham.exp(0.5 * h * (x + 1.0))).collect();
    let step = ham.exp(h);
    let mut zk = z0.clone();
    let mut cost = 0.0;
    for _ in 0..panels {
        for (off, w) in offsets.iter().zip(&weights) {
            let z = off * &zk;
            let x = z.rows(0, nx);
            let u = ham.control(&z);
            let integrand = 0.5 * x.dot(&(&spec.state_weight * x)) + 0.5 * spec.control_weight * u * u;
            cost += 0.5 * h * w * integrand;
        }
        zk = &step * &zk;
    }
    out.cost = cost;
    Ok(out)
}

/// Single-rate discrete solve on a grid refined by `refinement`.
pub fn fine_grid_reference(spec: &OcpSpec, refinement: usize) -> Result<OcpSolution> {
    if refinement == 0 {
        return Err(Error::Domain("refinement must be at least 1".into()));
    }
    let g = &spec.grid;
    let grid = MultirateGrid::new(g.t0(), g.tf(), g.micro_step() / refinement as f64, 1)?;
    let fine = spec.with_grid(grid);
    let fine_msys = fine.msys.with_split(spec.msys.split())?;
    solve_maneuver(&OcpSpec {
        msys: fine_msys,
        ..fine
    })
}

/// Absolute and relative max-over-nodes error of one series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesError {
    /// `max_k ‖x_k − x_ref,k‖∞`.
    pub absolute: f64,
    /// `absolute / max_k ‖x_ref,k‖∞`.
    pub relative: f64,
    pub nodes: usize,
}

/// Error of a candidate node series against a reference series.
pub fn series_error(candidate: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<SeriesError> {
    if candidate.is_empty() {
        return Err(Error::Domain("error metrics need at least one node".into()));
    }
    if candidate.len() != reference.len() {
        return Err(Error::Domain(format!(
            "candidate has {} nodes, reference {}",
            candidate.len(),
            reference.len()
        )));
    }
    let mut absolute = 0.0_f64;
    let mut scale = 0.0_f64;
    for (c, r) in candidate.iter().zip(reference) {
        if c.len() != r.len() {
            return Err(Error::Domain("node vectors differ in length".into()));
        }
        for (a, b) in c.iter().zip(r) {
            absolute = absolute.max((a - b).abs());
            scale = scale.max(b.abs());
        }
    }
    if scale == 0.0 {
        return Err(Error::Domain(
            "reference is identically zero; relative error undefined".into(),
        ));
    }
    Ok(SeriesError {
        absolute,
        relative: absolute / scale,
        nodes: candidate.len(),
    })
}

/// Overall error plus a breakdown by named index ranges of the node vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub overall: SeriesError,
    pub groups: Vec<(String, SeriesError)>,
}

impl ErrorReport {
    pub fn group(&self, name: &str) -> Option<&SeriesError> {
        self.groups.iter().find(|(n, _)| n == name).map(|(_, e)| e)
    }
}

pub fn error_metrics(
    candidate: &[Vec<f64>],
    reference: &[Vec<f64>],
    groups: &[(&str, Range<usize>)],
) -> Result<ErrorReport> {
    let overall = series_error(candidate, reference)?;
    let slice =
        |s: &[Vec<f64>], r: &Range<usize>| -> Vec<Vec<f64>> { s.iter().map(|v| v[r.clone()].to_vec()).collect() };
    let groups = groups
        .iter()
        .map(|(name, range)| {
            series_error(&slice(candidate, range), &slice(reference, range)).map(|e| (name.to_string(), e))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorReport { overall, groups })
}

/// Wraps scalar samples as one-element node vectors.
pub fn scalar_nodes(values: &[f64]) -> Vec<Vec<f64>> {
    values.iter().map(|&v| vec![v]).collect()
}

/// Mean of micro-interval samples over each macro interval, as scalar nodes.
///
/// This is the control seen on the macro grid. For `p > 1` the pointwise
/// micro controls only converge at first order near the end of the horizon,
/// while the macro means keep the second-order rate.
pub fn macro_means(values: &[f64], p: usize) -> Result<Vec<Vec<f64>>> {
    if p == 0 || values.is_empty() || !values.len().is_multiple_of(p) {
        return Err(Error::Domain(format!(
            "{} samples do not split into macro intervals of {p}",
            values.len()
        )));
    }
    Ok(values
        .chunks(p)
        .map(|c| vec![c.iter().sum::<f64>() / p as f64])
        .collect())
}

/// Physical configurations of an OCP solution at its macro nodes.
pub fn solution_physical_nodes(msys: &ModalSystem, sol: &OcpSolution) -> Result<Vec<Vec<f64>>> {
    let traj = &sol.trajectory;
    (0..=traj.grid().macro_count())
        .map(|k| msys.modal_to_physical(&traj.macro_config(k)))
        .collect()
}

/// Classical fourth-order Runge-Kutta on `q̈ + Λq = 0`, returning the state
/// every `sample_every` steps (including the initial one).
pub fn rk4_free(
    msys: &ModalSystem,
    initial: &ModalState,
    dt: f64,
    steps: usize,
    sample_every: usize,
) -> Result<Vec<ModalState>> {
    if sample_every == 0 || !(dt > 0.0) {
        return Err(Error::Domain("RK4 needs a positive step and sampling stride".into()));
    }
    let lam = msys.eigenvalues();
    let mut q = initial.q.clone();
    let mut v = initial.qdot.clone();
    let mut out = vec![initial.clone()];
    for s in 1..=steps {
        for j in 0..lam.len() {
            let l = lam[j];
            let (q0, v0) = (q[j], v[j]);
            let (k1q, k1v) = (v0, -l * q0);
            let (k2q, k2v) = (v0 + 0.5 * dt * k1v, -l * (q0 + 0.5 * dt * k1q));
            let (k3q, k3v) = (v0 + 0.5 * dt * k2v, -l * (q0 + 0.5 * dt * k2q));
            let (k4q, k4v) = (v0 + dt * k3v, -l * (q0 + dt * k3q));
            q[j] = q0 + dt / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
            v[j] = v0 + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        }
        if s % sample_every == 0 {
            out.push(ModalState {
                q: q.clone(),
                qdot: v.clone(),
            });
        }
    }
    Ok(out)
}

/// `½q̇ᵀq̇ + ½qᵀΛq`.
pub fn modal_energy(msys: &ModalSystem, state: &ModalState) -> f64 {
    state
        .q
        .iter()
        .zip(&state.qdot)
        .zip(msys.eigenvalues())
        .map(|((q, v), l)| 0.5 * v * v + 0.5 * l * q * q)
        .sum()
}

/// Adaptive RK4 with step doubling on a general system `ẏ = f(t, y)`.
///
/// Each step is compared against two half steps; the local error estimate
/// `‖y_half − y_full‖∞/15` is held below `tol·(1 + ‖y‖∞)`.
pub fn rk4_adaptive(f: impl Fn(f64, &[f64], &mut [f64]), y0: &[f64], t0: f64, t1: f64, tol: f64) -> Result<Vec<f64>> {
    if !(t1 >= t0) || !(tol > 0.0) {
        return Err(Error::Domain("invalid interval or tolerance".into()));
    }
    let n = y0.len();
    let mut k = vec![vec![0.0; n]; 4];
    let mut tmp = vec![0.0; n];
    let mut rk4 = |t: f64, y: &[f64], h: f64, out: &mut [f64]| {
        f(t, y, &mut k[0]);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k[0][i];
        }
        f(t + 0.5 * h, &tmp, &mut k[1]);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k[1][i];
        }
        f(t + 0.5 * h, &tmp, &mut k[2]);
        for i in 0..n {
            tmp[i] = y[i] + h * k[2][i];
        }
        f(t + h, &tmp, &mut k[3]);
        for i in 0..n {
            out[i] = y[i] + h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }
    };
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut h = (t1 - t0) / 64.0;
    let mut full = vec![0.0; n];
    let mut mid = vec![0.0; n];
    let mut half = vec![0.0; n];
    let mut steps = 0usize;
    while t < t1 {
        if t + h > t1 {
            h = t1 - t;
        }
        rk4(t, &y, h, &mut full);
        rk4(t, &y, 0.5 * h, &mut mid);
        rk4(t + 0.5 * h, &mid, 0.5 * h, &mut half);
        let err = full.iter().zip(&half).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / 15.0;
        let bound = tol * (1.0 + half.iter().fold(0.0_f64, |a, &b| a.max(b.abs())));
        if err <= bound {
            t += h;
            for i in 0..n {
                y[i] = half[i] + (half[i] - full[i]) / 15.0;
            }
        }
        let factor = if err == 0.0 {
            2.0
        } else {
            (0.9 * (bound / err).powf(0.2)).clamp(0.2, 2.0)
        };
        h *= factor;
        steps += 1;
        if steps > 50_000_000 || h < 1e-14 * (t1 - t0).max(1.0) {
            return Err(Error::numeric("reference_oracles", "adaptive RK4 step size underflow"));
        }
    }
    Ok(y)
}

/// Physical `(ξ, ξ̇)` of a free response sampled at each time.
pub fn free_response_physical(
    msys: &ModalSystem,
    initial: &ModalState,
    times: &[f64],
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    times
        .iter()
        .map(|&t| free_response(msys, initial, t).and_then(|s| from_modal(msys, &s)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam::SystemMatrices;
    use crate::modal::solve_modal;

    #[test]
    fn macro_means_average_each_interval() {
        assert_eq!(
            macro_means(&[1.0, 3.0, 5.0, 9.0], 2).unwrap(),
            vec![vec![2.0], vec![7.0]]
        );
        assert!(macro_means(&[1.0, 2.0, 3.0], 2).is_err());
        assert!(macro_means(&[1.0], 0).is_err());
    }

    fn unit_oscillator() -> ModalSystem {
        let sys = SystemMatrices {
            mass: DMatrix::identity(2, 2),
            stiffness: DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0])),
            input: DVector::from_vec(vec![1.0, 0.0]),
        };
        solve_modal(&sys, 1).unwrap()
    }

    #[test]
    fn free_response_initial_and_period() {
        let m = unit_oscillator();
        let init = ModalState {
            q: vec![0.5, 1.0],
            qdot: vec![0.25, 0.0],
        };
        assert_eq!(free_response(&m, &init, 0.0).unwrap(), init);
        let s = free_response(&m, &init, 2.0 * std::f64::consts::PI).unwrap();
        assert!((s.q[1] - 1.0).abs() < 1e-14);
        assert!(s.qdot[1].abs() < 1e-14);
        assert!((s.q[0] - (0.5 + 0.25 * 2.0 * std::f64::consts::PI)).abs() < 1e-14);
        assert!(free_response(&m, &init, -1.0).is_err());
    }

    #[test]
    fn error_metric_cases() {
        let a = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let e = series_error(&a, &a).unwrap();
        assert_eq!(e.absolute, 0.0);
        let shifted = vec![vec![1.0, 2.5], vec![3.0, 4.5]];
        let e = series_error(&shifted, &a).unwrap();
        assert_eq!(e.absolute, 0.5);
        assert_eq!(e.relative, 0.125);
        let zero = vec![vec![0.0, 0.0]; 2];
        assert!(matches!(series_error(&a, &zero), Err(Error::Domain(_))));
        assert!(series_error(&[], &[]).is_err());
        let r = error_metrics(&shifted, &a, &[("first", 0..1), ("second", 1..2)]).unwrap();
        assert_eq!(r.group("first").unwrap().absolute, 0.0);
        assert_eq!(r.group("second").unwrap().absolute, 0.5);
    }

    #[test]
    fn adaptive_rk4_on_exponential() {
        let y = rk4_adaptive(|_, y, dy| dy[0] = -y[0], &[1.0], 0.0, 2.0, 1e-12).unwrap();
        assert!((y[0] - (-2.0f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn rk4_energy_decays_for_oscillator() {
        let m = unit_oscillator();
        let init = ModalState {
            q: vec![0.0, 1.0],
            qdot: vec![0.0, 0.0],
        };
        let samples = rk4_free(&m, &init, 0.5, 200, 10).unwrap();
        let e: Vec<f64> = samples.iter().map(|s| modal_energy(&m, s)).collect();
        assert!(e.windows(2).all(|w| w[1] < w[0]));
    }
}
