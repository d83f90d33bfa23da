//! Multirate variational integrator on modal coordinates.
//!
//! Slow coordinates are linear over a macro step of length `ΔT = pΔt`, fast
//! coordinates are piecewise linear over the `p` micro steps inside it. The
//! action of one macro step is approximated by the midpoint rule on each micro
//! interval, with the slow path evaluated at the micro midpoints. Controls are
//! piecewise constant on micro intervals.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::modal::{ModalState, ModalSystem};

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_ACCEPT: f64 = 1e-9;
const NEWTON_MAX_ITER: usize = 20;

/// Macro/micro time grid on `[t0, tf]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultirateGrid {
    t0: f64,
    tf: f64,
    micro_step: f64,
    micro_count: usize,
    macro_count: usize,
}

impl MultirateGrid {
    /// Builds a grid from the micro step `Δt` and the ratio `p = ΔT/Δt`.
    ///
    /// Fails unless `tf − t0` is an integer multiple of `ΔT` to 1e-12 relative.
    pub fn new(t0: f64, tf: f64, micro_step: f64, micro_count: usize) -> Result<Self> {
        if !(t0.is_finite() && tf.is_finite() && tf > t0) {
            return Err(Error::Config(format!("invalid time interval [{t0}, {tf}]")));
        }
        if !(micro_step.is_finite() && micro_step > 0.0) {
            return Err(Error::Config(format!("micro step must be positive, got {micro_step}")));
        }
        if micro_count == 0 {
            return Err(Error::Config("micro count p must be at least 1".into()));
        }
        let span = tf - t0;
        let macro_step = micro_step * micro_count as f64;
        let n = (span / macro_step).round();
        if n < 1.0 || (n * macro_step - span).abs() > 1e-12 * span {
            return Err(Error::Config(format!(
                "horizon {span} s is not an integer multiple of the macro step {macro_step} s"
            )));
        }
        Ok(Self {
            t0,
            tf,
            micro_step,
            micro_count,
            macro_count: n as usize,
        })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn tf(&self) -> f64 {
        self.tf
    }

    /// `Δt`.
    pub fn micro_step(&self) -> f64 {
        self.micro_step
    }

    /// `ΔT = pΔt`.
    pub fn macro_step(&self) -> f64 {
        self.micro_step * self.micro_count as f64
    }

    /// `p`.
    pub fn micro_count(&self) -> usize {
        self.micro_count
    }

    /// `n_s`, the number of macro intervals.
    pub fn macro_count(&self) -> usize {
        self.macro_count
    }

    /// Total number of micro intervals, `n_s·p`.
    pub fn micro_interval_count(&self) -> usize {
        self.macro_count * self.micro_count
    }

    pub fn macro_time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.macro_step()
    }

    pub fn micro_time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.micro_step
    }

    /// Same horizon and micro step with a different `p`.
    pub fn with_micro_count(&self, micro_count: usize) -> Result<Self> {
        Self::new(self.t0, self.tf, self.micro_step, micro_count)
    }
}

/// Slow nodes on the macro grid, fast nodes on the micro grid and controls on
/// micro midpoints.
///
/// Fast nodes are stored once per micro grid point, so the last fast node of a
/// macro interval is the same slot as the first node of the next one.
#[derive(Debug, Clone, PartialEq)]
pub struct MultirateTrajectory {
    grid: MultirateGrid,
    n_slow: usize,
    n_fast: usize,
    slow: Vec<f64>,
    fast: Vec<f64>,
    controls: Vec<f64>,
}

impl MultirateTrajectory {
    pub fn zeros(grid: MultirateGrid, n_slow: usize, n_fast: usize) -> Self {
        let n_s = grid.macro_count();
        let n_micro = grid.micro_interval_count();
        Self {
            grid,
            n_slow,
            n_fast,
            slow: vec![0.0; (n_s + 1) * n_slow],
            fast: vec![0.0; (n_micro + 1) * n_fast],
            controls: vec![0.0; n_micro],
        }
    }

    pub fn grid(&self) -> &MultirateGrid {
        &self.grid
    }

    pub fn n_slow(&self) -> usize {
        self.n_slow
    }

    pub fn n_fast(&self) -> usize {
        self.n_fast
    }

    pub fn dof(&self) -> usize {
        self.n_slow + self.n_fast
    }

    /// `q^s_k`.
    pub fn slow_node(&self, k: usize) -> &[f64] {
        &self.slow[k * self.n_slow..(k + 1) * self.n_slow]
    }

    pub fn slow_node_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.slow[k * self.n_slow..(k + 1) * self.n_slow]
    }

    /// Fast node at micro grid index `i = kp + m`.
    pub fn fast_node(&self, i: usize) -> &[f64] {
        &self.fast[i * self.n_fast..(i + 1) * self.n_fast]
    }

    pub fn fast_node_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.fast[i * self.n_fast..(i + 1) * self.n_fast]
    }

    /// The `p + 1` fast nodes of macro interval `k`, contiguous.
    pub fn fast_window(&self, k: usize) -> &[f64] {
        let p = self.grid.micro_count();
        &self.fast[k * p * self.n_fast..((k + 1) * p + 1) * self.n_fast]
    }

    /// The `p` controls of macro interval `k`.
    pub fn controls(&self, k: usize) -> &[f64] {
        let p = self.grid.micro_count();
        &self.controls[k * p..(k + 1) * p]
    }

    pub fn all_controls(&self) -> &[f64] {
        &self.controls
    }

    pub fn all_controls_mut(&mut self) -> &mut [f64] {
        &mut self.controls
    }

    /// Full modal configuration at macro node `k`.
    pub fn macro_config(&self, k: usize) -> Vec<f64> {
        let mut q = self.slow_node(k).to_vec();
        q.extend_from_slice(self.fast_node(k * self.grid.micro_count()));
        q
    }

    pub fn macro_times(&self) -> Vec<f64> {
        (0..=self.grid.macro_count()).map(|k| self.grid.macro_time(k)).collect()
    }
}

/// Conjugate momenta at one macro node.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumPair {
    pub slow: Vec<f64>,
    pub fast: Vec<f64>,
}

/// Closed-form pieces of the discrete mechanics for one modal system and grid.
#[derive(Debug, Clone)]
pub struct Scheme {
    pub(crate) dt: f64,
    pub(crate) p: usize,
    pub(crate) lambda_s: Vec<f64>,
    pub(crate) lambda_f: Vec<f64>,
    pub(crate) z_s: Vec<f64>,
    pub(crate) z_f: Vec<f64>,
    weights: Vec<f64>,
}

impl Scheme {
    pub fn new(msys: &ModalSystem, grid: &MultirateGrid) -> Self {
        let p = grid.micro_count();
        Self {
            dt: grid.micro_step(),
            p,
            lambda_s: msys.slow_eigenvalues().to_vec(),
            lambda_f: msys.fast_eigenvalues().to_vec(),
            z_s: msys.slow_input().to_vec(),
            z_f: msys.fast_input().to_vec(),
            weights: (0..p).map(|m| (2 * m + 1) as f64 / (2 * p) as f64).collect(),
        }
    }

    pub fn n_slow(&self) -> usize {
        self.lambda_s.len()
    }

    pub fn n_fast(&self) -> usize {
        self.lambda_f.len()
    }

    pub fn micro_count(&self) -> usize {
        self.p
    }

    pub fn micro_step(&self) -> f64 {
        self.dt
    }

    fn macro_step(&self) -> f64 {
        self.dt * self.p as f64
    }

    /// Weight of `q^s_{k+1}` in the slow interpolant at micro midpoint `m`.
    pub fn midpoint_weight(&self, m: usize) -> f64 {
        self.weights[m]
    }

    /// Discrete Lagrangian of one macro interval; `qf` holds `p + 1` nodes.
    pub fn lagrangian(&self, qs0: &[f64], qs1: &[f64], qf: &[f64]) -> f64 {
        let nf = self.n_fast();
        let mut acc = 0.0;
        for m in 0..self.p {
            let w = self.weights[m];
            let mut term = 0.0;
            for j in 0..self.n_slow() {
                let v = (qs1[j] - qs0[j]) / self.macro_step();
                let q = (1.0 - w) * qs0[j] + w * qs1[j];
                term += 0.5 * v * v - 0.5 * self.lambda_s[j] * q * q;
            }
            for j in 0..nf {
                let a = qf[m * nf + j];
                let b = qf[(m + 1) * nf + j];
                let v = (b - a) / self.dt;
                let q = 0.5 * (a + b);
                term += 0.5 * v * v - 0.5 * self.lambda_f[j] * q * q;
            }
            acc += term;
        }
        self.dt * acc
    }

    /// Gradients of the discrete Lagrangian with respect to `q^s_k`, `q^s_{k+1}`.
    pub fn slow_derivatives(&self, qs0: &[f64], qs1: &[f64], d1: &mut [f64], d2: &mut [f64]) {
        let h = self.macro_step();
        for j in 0..self.n_slow() {
            let v = (qs1[j] - qs0[j]) / h;
            let (mut s0, mut s1) = (0.0, 0.0);
            for &w in &self.weights {
                let q = (1.0 - w) * qs0[j] + w * qs1[j];
                s0 += (1.0 - w) * q;
                s1 += w * q;
            }
            d1[j] = -v - self.dt * self.lambda_s[j] * s0;
            d2[j] = v - self.dt * self.lambda_s[j] * s1;
        }
    }

    /// Gradients of one micro interval's contribution with respect to its left
    /// node `a` and right node `b`.
    pub fn fast_derivatives(&self, a: &[f64], b: &[f64], da: &mut [f64], db: &mut [f64]) {
        for j in 0..self.n_fast() {
            let v = (b[j] - a[j]) / self.dt;
            let pot = 0.25 * self.dt * self.lambda_f[j] * (a[j] + b[j]);
            da[j] = -v - pot;
            db[j] = v - pot;
        }
    }

    /// Slow left/right force of a macro interval (they are equal).
    pub fn slow_force(&self, tau: &[f64], out: &mut [f64]) {
        let impulse = 0.5 * self.dt * tau.iter().sum::<f64>();
        for (o, z) in out.iter_mut().zip(&self.z_s) {
            *o = z * impulse;
        }
    }

    /// Fast left/right force of one micro interval (they are equal).
    pub fn fast_force(&self, tau: f64, out: &mut [f64]) {
        for (o, z) in out.iter_mut().zip(&self.z_f) {
            *o = z * 0.5 * self.dt * tau;
        }
    }
}

/// `L_d(q^s_k, q^s_{k+1}, q^f_k)` for one macro interval.
pub fn discrete_lagrangian(
    msys: &ModalSystem,
    grid: &MultirateGrid,
    qs0: &[f64],
    qs1: &[f64],
    qf: &[f64],
) -> Result<f64> {
    let scheme = Scheme::new(msys, grid);
    check_interval_dims(&scheme, qs0, qs1, qf)?;
    Ok(scheme.lagrangian(qs0, qs1, qf))
}

/// Slot derivatives of the discrete Lagrangian of one macro interval.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotDerivatives {
    /// With respect to `q^s_k`.
    pub slow_left: Vec<f64>,
    /// With respect to `q^s_{k+1}`.
    pub slow_right: Vec<f64>,
    /// With respect to each of the `p + 1` fast nodes, node-major.
    pub fast: Vec<f64>,
}

pub fn slot_derivatives(
    msys: &ModalSystem,
    grid: &MultirateGrid,
    qs0: &[f64],
    qs1: &[f64],
    qf: &[f64],
) -> Result<SlotDerivatives> {
    let scheme = Scheme::new(msys, grid);
    check_interval_dims(&scheme, qs0, qs1, qf)?;
    let r = scheme.n_slow();
    let nf = scheme.n_fast();
    let mut out = SlotDerivatives {
        slow_left: vec![0.0; r],
        slow_right: vec![0.0; r],
        fast: vec![0.0; qf.len()],
    };
    scheme.slow_derivatives(qs0, qs1, &mut out.slow_left, &mut out.slow_right);
    let mut da = vec![0.0; nf];
    let mut db = vec![0.0; nf];
    for m in 0..scheme.p {
        let a = &qf[m * nf..(m + 1) * nf];
        let b = &qf[(m + 1) * nf..(m + 2) * nf];
        scheme.fast_derivatives(a, b, &mut da, &mut db);
        for j in 0..nf {
            out.fast[m * nf + j] += da[j];
            out.fast[(m + 1) * nf + j] += db[j];
        }
    }
    Ok(out)
}

/// Discrete forces of one macro interval.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteForces {
    /// `f^{s−}_k = f^{s+}_k`.
    pub slow: Vec<f64>,
    /// `f^{f,m±}_k` for `m = 0..p`, micro-interval-major.
    pub fast: Vec<f64>,
}

pub fn discrete_forces(msys: &ModalSystem, grid: &MultirateGrid, tau: &[f64]) -> Result<DiscreteForces> {
    let scheme = Scheme::new(msys, grid);
    if tau.len() != scheme.p {
        return Err(Error::Domain(format!(
            "expected {} controls per macro interval, got {}",
            scheme.p,
            tau.len()
        )));
    }
    let nf = scheme.n_fast();
    let mut slow = vec![0.0; scheme.n_slow()];
    scheme.slow_force(tau, &mut slow);
    let mut fast = vec![0.0; scheme.p * nf];
    for (m, &t) in tau.iter().enumerate() {
        scheme.fast_force(t, &mut fast[m * nf..(m + 1) * nf]);
    }
    Ok(DiscreteForces { slow, fast })
}

fn check_interval_dims(scheme: &Scheme, qs0: &[f64], qs1: &[f64], qf: &[f64]) -> Result<()> {
    let r = scheme.n_slow();
    let nf = scheme.n_fast();
    if qs0.len() != r || qs1.len() != r || qf.len() != (scheme.p + 1) * nf {
        return Err(Error::Domain(format!(
            "interval expects slow nodes of length {r} and {} fast values",
            (scheme.p + 1) * nf
        )));
    }
    Ok(())
}

/// Forced multirate discrete Euler-Lagrange stepper.
///
/// The stepping equations are affine in the unknowns, so the Newton Jacobian is
/// constant and factored once.
#[derive(Debug, Clone)]
pub struct Stepper {
    scheme: Scheme,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

struct StepInput<'a> {
    qs0: &'a [f64],
    ps0: &'a [f64],
    qf0: &'a [f64],
    pf0: &'a [f64],
    tau: &'a [f64],
}

impl Stepper {
    pub fn new(msys: &ModalSystem, grid: &MultirateGrid) -> Result<Self> {
        let scheme = Scheme::new(msys, grid);
        let n = scheme.n_slow() + scheme.p * scheme.n_fast();
        let r = scheme.n_slow();
        let nf = scheme.n_fast();
        let zeros_s = vec![0.0; r];
        let zeros_f = vec![0.0; nf];
        let zeros_t = vec![0.0; scheme.p];
        let ctx = StepInput {
            qs0: &zeros_s,
            ps0: &zeros_s,
            qf0: &zeros_f,
            pf0: &zeros_f,
            tau: &zeros_t,
        };
        let mut jac = DMatrix::zeros(n, n);
        let mut x = vec![0.0; n];
        let mut res = vec![0.0; n];
        for j in 0..n {
            x[j] = 1.0;
            residual(&scheme, &ctx, &x, &mut res);
            jac.column_mut(j).copy_from_slice(&res);
            x[j] = 0.0;
        }
        let lu = jac.lu();
        if !lu.is_invertible() {
            return Err(Error::numeric("multirate_integrator", "step Jacobian is singular"));
        }
        Ok(Self { scheme, lu })
    }

    pub fn scheme(&self) -> &Scheme {
        &self.scheme
    }

    /// Advances one macro step in momentum form.
    ///
    /// Given `q^s_k`, `p^s_k`, the fast node at `t_k` with its momentum, and the
    /// `p` controls of interval `k`, returns `q^s_{k+1}`, the fast nodes
    /// `1..=p` of the interval, and the momenta at `t_{k+1}`.
    pub fn step_momentum(&self, qs0: &[f64], ps0: &[f64], qf0: &[f64], pf0: &[f64], tau: &[f64]) -> Result<StepOutput> {
        let s = &self.scheme;
        let (r, nf, p) = (s.n_slow(), s.n_fast(), s.p);
        let ctx = StepInput {
            qs0,
            ps0,
            qf0,
            pf0,
            tau,
        };
        let n = r + p * nf;

        let mut x = vec![0.0; n];
        let mut res = vec![0.0; n];
        residual(s, &ctx, &x, &mut res);
        let scale = 1.0 + inf_norm(&res);

        x[..r].copy_from_slice(qs0);
        for m in 0..p {
            x[r + m * nf..r + (m + 1) * nf].copy_from_slice(qf0);
        }
        residual(s, &ctx, &x, &mut res);
        let mut norm = inf_norm(&res);
        let mut iter = 0;
        while norm > NEWTON_TOL * scale {
            if iter == NEWTON_MAX_ITER {
                break;
            }
            let dx = self
                .lu
                .solve(&DVector::from_column_slice(&res))
                .ok_or_else(|| Error::numeric("multirate_integrator", "step Jacobian is singular"))?;
            for (xi, d) in x.iter_mut().zip(dx.iter()) {
                *xi -= d;
            }
            residual(s, &ctx, &x, &mut res);
            let next = inf_norm(&res);
            iter += 1;
            if next > 0.5 * norm {
                norm = next;
                break;
            }
            norm = next;
        }
        if norm > NEWTON_TOL * scale && norm > NEWTON_ACCEPT * scale {
            return Err(Error::numeric(
                "multirate_integrator",
                format!("Newton residual {norm:e} did not reach tolerance after {iter} iterations"),
            ));
        }

        let qs1 = x[..r].to_vec();
        let qf = x[r..].to_vec();
        let mut d1 = vec![0.0; r];
        let mut ps1 = vec![0.0; r];
        s.slow_derivatives(qs0, &qs1, &mut d1, &mut ps1);
        let mut fs = vec![0.0; r];
        s.slow_force(tau, &mut fs);
        for (pj, fj) in ps1.iter_mut().zip(&fs) {
            *pj += fj;
        }
        let mut pf1 = vec![0.0; nf];
        if nf > 0 {
            let a = if p == 1 { qf0 } else { &qf[(p - 2) * nf..(p - 1) * nf] };
            let b = &qf[(p - 1) * nf..];
            let mut da = vec![0.0; nf];
            s.fast_derivatives(a, b, &mut da, &mut pf1);
            let mut ff = vec![0.0; nf];
            s.fast_force(tau[p - 1], &mut ff);
            for (pj, fj) in pf1.iter_mut().zip(&ff) {
                *pj += fj;
            }
        }
        Ok(StepOutput {
            slow: qs1,
            fast: qf,
            slow_momentum: ps1,
            fast_momentum: pf1,
        })
    }

    /// Three-term form of the stepping equations.
    ///
    /// Takes `q^s_{k−1}`, `q^s_k`, the `p + 1` fast nodes of interval `k−1` and
    /// the controls of intervals `k−1` and `k`; returns `q^s_{k+1}` and the
    /// `p + 1` fast nodes of interval `k`.
    pub fn step(
        &self,
        qs_prev: &[f64],
        qs_cur: &[f64],
        qf_prev: &[f64],
        tau_prev: &[f64],
        tau_cur: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let s = &self.scheme;
        let (r, nf, p) = (s.n_slow(), s.n_fast(), s.p);
        check_interval_dims(s, qs_prev, qs_cur, qf_prev)?;
        if tau_prev.len() != p || tau_cur.len() != p {
            return Err(Error::Domain(format!("expected {p} controls per macro interval")));
        }
        let mut d1 = vec![0.0; r];
        let mut ps = vec![0.0; r];
        s.slow_derivatives(qs_prev, qs_cur, &mut d1, &mut ps);
        let mut f = vec![0.0; r];
        s.slow_force(tau_prev, &mut f);
        for (a, b) in ps.iter_mut().zip(&f) {
            *a += b;
        }
        let mut pf = vec![0.0; nf];
        let mut da = vec![0.0; nf];
        s.fast_derivatives(&qf_prev[(p - 1) * nf..p * nf], &qf_prev[p * nf..], &mut da, &mut pf);
        let mut ff = vec![0.0; nf];
        s.fast_force(tau_prev[p - 1], &mut ff);
        for (a, b) in pf.iter_mut().zip(&ff) {
            *a += b;
        }
        let qf0 = &qf_prev[p * nf..];
        let out = self.step_momentum(qs_cur, &ps, qf0, &pf, tau_cur)?;
        let mut window = qf0.to_vec();
        window.extend_from_slice(&out.fast);
        Ok((out.slow, window))
    }
}

/// Result of one momentum-form macro step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub slow: Vec<f64>,
    /// Fast nodes `1..=p` of the interval, node-major.
    pub fast: Vec<f64>,
    pub slow_momentum: Vec<f64>,
    pub fast_momentum: Vec<f64>,
}

/// Stacked stepping residual: slow rows, then fast rows for micro nodes `0..p`.
fn residual(s: &Scheme, ctx: &StepInput, x: &[f64], out: &mut [f64]) {
    let (r, nf, p) = (s.n_slow(), s.n_fast(), s.p);
    let qs1 = &x[..r];
    let mut d1 = vec![0.0; r];
    let mut d2 = vec![0.0; r];
    s.slow_derivatives(ctx.qs0, qs1, &mut d1, &mut d2);
    let mut fs = vec![0.0; r];
    s.slow_force(ctx.tau, &mut fs);
    for j in 0..r {
        out[j] = ctx.ps0[j] + d1[j] + fs[j];
    }
    if nf == 0 {
        return;
    }
    let node = |m: usize| -> &[f64] {
        if m == 0 {
            ctx.qf0
        } else {
            &x[r + (m - 1) * nf..r + m * nf]
        }
    };
    let mut da = vec![0.0; nf];
    let mut db = vec![0.0; nf];
    let mut ff = vec![0.0; nf];
    // Row block m collects the equations at fast node m.
    out[r..r + nf].copy_from_slice(ctx.pf0);
    for v in out[r + nf..].iter_mut() {
        *v = 0.0;
    }
    for m in 0..p {
        s.fast_derivatives(node(m), node(m + 1), &mut da, &mut db);
        s.fast_force(ctx.tau[m], &mut ff);
        let row = &mut out[r + m * nf..r + (m + 1) * nf];
        for j in 0..nf {
            row[j] += da[j] + ff[j];
        }
        if m + 1 < p {
            let row = &mut out[r + (m + 1) * nf..r + (m + 2) * nf];
            for j in 0..nf {
                row[j] += db[j] + ff[j];
            }
        }
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, &b| a.max(b.abs()))
}

/// Marches the stepping equations from an initial modal state.
///
/// The modal mass is the identity, so the initial momenta equal the initial
/// modal rates.
pub fn simulate(
    msys: &ModalSystem,
    grid: &MultirateGrid,
    initial: &ModalState,
    controls: &[f64],
) -> Result<MultirateTrajectory> {
    let stepper = Stepper::new(msys, grid)?;
    simulate_with(&stepper, grid, initial, controls)
}

/// [`simulate`] with a prebuilt stepper.
pub fn simulate_with(
    stepper: &Stepper,
    grid: &MultirateGrid,
    initial: &ModalState,
    controls: &[f64],
) -> Result<MultirateTrajectory> {
    let s = stepper.scheme();
    let (r, nf, p) = (s.n_slow(), s.n_fast(), s.p);
    if s.micro_count() != grid.micro_count() || s.micro_step() != grid.micro_step() {
        return Err(Error::Domain("stepper was built for a different grid".into()));
    }
    if initial.q.len() != r + nf || initial.qdot.len() != r + nf {
        return Err(Error::Domain(format!("initial state must have {} coordinates", r + nf)));
    }
    if controls.len() != grid.micro_interval_count() {
        return Err(Error::Domain(format!(
            "expected {} controls, got {}",
            grid.micro_interval_count(),
            controls.len()
        )));
    }
    let mut traj = MultirateTrajectory::zeros(*grid, r, nf);
    traj.all_controls_mut().copy_from_slice(controls);
    traj.slow_node_mut(0).copy_from_slice(&initial.q[..r]);
    traj.fast_node_mut(0).copy_from_slice(&initial.q[r..]);
    let mut ps = initial.qdot[..r].to_vec();
    let mut pf = initial.qdot[r..].to_vec();
    for k in 0..grid.macro_count() {
        let qs0 = traj.slow_node(k).to_vec();
        let qf0 = traj.fast_node(k * p).to_vec();
        let out = stepper.step_momentum(&qs0, &ps, &qf0, &pf, &controls[k * p..(k + 1) * p])?;
        traj.slow_node_mut(k + 1).copy_from_slice(&out.slow);
        let start = (k * p + 1) * nf;
        traj.fast[start..start + p * nf].copy_from_slice(&out.fast);
        ps = out.slow_momentum;
        pf = out.fast_momentum;
    }
    Ok(traj)
}

/// Left and right discrete momenta of a trajectory, evaluated at every node.
///
/// `slow_minus[k]` is defined for `k < n_s`, `slow_plus[k]` for `k ≥ 1`; the
/// fast arrays are indexed by micro node.
#[derive(Debug, Clone)]
pub struct DiscreteMomenta {
    pub slow_minus: Vec<Vec<f64>>,
    pub slow_plus: Vec<Vec<f64>>,
    pub fast_minus: Vec<Vec<f64>>,
    pub fast_plus: Vec<Vec<f64>>,
}

impl DiscreteMomenta {
    /// Momentum at macro node `k`: the right momentum of the preceding
    /// interval, or the left momentum of the first one at `k = 0`.
    pub fn at_macro_node(&self, k: usize, p: usize) -> MomentumPair {
        let slow = if k == 0 {
            &self.slow_minus[0]
        } else {
            &self.slow_plus[k]
        };
        let i = k * p;
        let fast = if i == 0 {
            &self.fast_minus[0]
        } else {
            &self.fast_plus[i]
        };
        MomentumPair {
            slow: slow.clone(),
            fast: fast.clone(),
        }
    }
}

pub fn discrete_momenta(msys: &ModalSystem, traj: &MultirateTrajectory) -> Result<DiscreteMomenta> {
    let grid = traj.grid();
    let s = Scheme::new(msys, grid);
    let (r, nf) = (s.n_slow(), s.n_fast());
    if r != traj.n_slow() || nf != traj.n_fast() {
        return Err(Error::Domain("trajectory split does not match the modal system".into()));
    }
    let n_s = grid.macro_count();
    let n_micro = grid.micro_interval_count();
    let mut out = DiscreteMomenta {
        slow_minus: vec![Vec::new(); n_s + 1],
        slow_plus: vec![Vec::new(); n_s + 1],
        fast_minus: vec![Vec::new(); n_micro + 1],
        fast_plus: vec![Vec::new(); n_micro + 1],
    };
    let mut d1 = vec![0.0; r];
    let mut d2 = vec![0.0; r];
    let mut fs = vec![0.0; r];
    for k in 0..n_s {
        s.slow_derivatives(traj.slow_node(k), traj.slow_node(k + 1), &mut d1, &mut d2);
        s.slow_force(traj.controls(k), &mut fs);
        out.slow_minus[k] = (0..r).map(|j| -d1[j] - fs[j]).collect();
        out.slow_plus[k + 1] = (0..r).map(|j| d2[j] + fs[j]).collect();
    }
    let mut da = vec![0.0; nf];
    let mut db = vec![0.0; nf];
    let mut ff = vec![0.0; nf];
    for i in 0..n_micro {
        s.fast_derivatives(traj.fast_node(i), traj.fast_node(i + 1), &mut da, &mut db);
        s.fast_force(traj.all_controls()[i], &mut ff);
        out.fast_minus[i] = (0..nf).map(|j| -da[j] - ff[j]).collect();
        out.fast_plus[i + 1] = (0..nf).map(|j| db[j] + ff[j]).collect();
    }
    Ok(out)
}

/// Largest violation of the discrete Euler-Lagrange equations on a trajectory,
/// written as the mismatch of left and right momenta at interior nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelResidual {
    pub absolute: f64,
    /// Largest momentum magnitude seen, for scaling.
    pub momentum_scale: f64,
}

impl DelResidual {
    pub fn relative(&self) -> f64 {
        self.absolute / (1.0 + self.momentum_scale)
    }
}

pub fn del_residual(msys: &ModalSystem, traj: &MultirateTrajectory) -> Result<DelResidual> {
    let mom = discrete_momenta(msys, traj)?;
    let mut absolute = 0.0_f64;
    let mut scale = 0.0_f64;
    let mut visit = |minus: &[Vec<f64>], plus: &[Vec<f64>]| {
        for i in 1..minus.len().saturating_sub(1) {
            for (a, b) in minus[i].iter().zip(&plus[i]) {
                absolute = absolute.max((a - b).abs());
                scale = scale.max(a.abs()).max(b.abs());
            }
        }
    };
    visit(&mom.slow_minus, &mom.slow_plus);
    visit(&mom.fast_minus, &mom.fast_plus);
    Ok(DelResidual {
        absolute,
        momentum_scale: scale,
    })
}

/// Per-macro-node energy, hub angular momentum and discrete Noether residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub time: Vec<f64>,
    pub energy: Vec<f64>,
    pub hub_momentum: Vec<f64>,
    pub noether: Vec<f64>,
}

/// Energy `½pᵀp + ½qᵀΛq` with discrete momenta, `p_θ = (M E p)_0`, and
/// `Ψ_k = p_θ,k − p_θ,0 − Σ_{i<k} Σ_m Δt τ_i^m`.
pub fn diagnostics(msys: &ModalSystem, traj: &MultirateTrajectory) -> Result<Diagnostics> {
    let mom = discrete_momenta(msys, traj)?;
    let grid = traj.grid();
    let p = grid.micro_count();
    let dt = grid.micro_step();
    let lambda = msys.eigenvalues();
    let row = msys.hub_momentum_row();
    let n_s = grid.macro_count();

    let mut out = Diagnostics {
        time: traj.macro_times(),
        energy: Vec::with_capacity(n_s + 1),
        hub_momentum: Vec::with_capacity(n_s + 1),
        noether: Vec::with_capacity(n_s + 1),
    };
    let mut impulse = 0.0;
    for k in 0..=n_s {
        let pair = mom.at_macro_node(k, p);
        let q = traj.macro_config(k);
        let pm: Vec<f64> = pair.slow.iter().chain(&pair.fast).copied().collect();
        let kinetic: f64 = pm.iter().map(|v| 0.5 * v * v).sum();
        let potential: f64 = q.iter().zip(lambda).map(|(qj, l)| 0.5 * l * qj * qj).sum();
        let p_theta: f64 = row.iter().zip(&pm).map(|(a, b)| a * b).sum();
        if k > 0 {
            impulse += dt * traj.controls(k - 1).iter().sum::<f64>();
        }
        out.energy.push(kinetic + potential);
        out.hub_momentum.push(p_theta);
        let p0 = out.hub_momentum[0];
        out.noether.push(p_theta - p0 - impulse);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam::{assemble_system, SpacecraftParams};
    use crate::modal::solve_modal;

    fn reference_modal() -> ModalSystem {
        let sys = assemble_system(&SpacecraftParams::reference(5)).unwrap();
        solve_modal(&sys, 3).unwrap()
    }

    #[test]
    fn grid_integrality() {
        let g = MultirateGrid::new(0.0, 4.5, 1e-3, 5).unwrap();
        assert_eq!(g.macro_count(), 900);
        assert_eq!(g.micro_interval_count(), 4500);
        assert!(MultirateGrid::new(0.0, 1.0, 0.3, 1).is_err());
        assert!(MultirateGrid::new(0.0, 1.0, 0.1, 0).is_err());
        assert!(MultirateGrid::new(1.0, 1.0, 0.1, 1).is_err());
        assert!(matches!(MultirateGrid::new(0.0, 1.0, 0.1, 3), Err(Error::Config(_))));
    }

    #[test]
    fn lagrangian_of_constant_all_slow_path() {
        let sys = assemble_system(&SpacecraftParams::reference(1)).unwrap();
        let msys = solve_modal(&sys, 2).unwrap();
        let grid = MultirateGrid::new(0.0, 1.0, 0.1, 1).unwrap();
        let q = [0.3, -0.2];
        let ld = discrete_lagrangian(&msys, &grid, &q, &q, &[]).unwrap();
        let lam = msys.eigenvalues();
        let expected = -0.1 * 0.5 * (lam[0] * q[0] * q[0] + lam[1] * q[1] * q[1]);
        assert!((ld - expected).abs() <= 1e-15 * expected.abs().max(1.0));
    }

    #[test]
    fn zero_inputs_give_zero() {
        let msys = reference_modal();
        let grid = MultirateGrid::new(0.0, 1.0, 0.01, 4).unwrap();
        let qf = vec![0.0; 5 * 3];
        assert_eq!(
            discrete_lagrangian(&msys, &grid, &[0.0; 3], &[0.0; 3], &qf).unwrap(),
            0.0
        );
        let d = slot_derivatives(&msys, &grid, &[0.0; 3], &[0.0; 3], &qf).unwrap();
        assert!(d
            .slow_left
            .iter()
            .chain(&d.slow_right)
            .chain(&d.fast)
            .all(|&v| v == 0.0));
        let f = discrete_forces(&msys, &grid, &[0.0; 4]).unwrap();
        assert!(f.slow.iter().chain(&f.fast).all(|&v| v == 0.0));
    }

    #[test]
    fn forces_example() {
        let msys = reference_modal();
        let grid = MultirateGrid::new(0.0, 1.0, 0.1, 2).unwrap();
        let f = discrete_forces(&msys, &grid, &[1.0, 3.0]).unwrap();
        let (zs, zf) = (msys.slow_input(), msys.fast_input());
        for j in 0..3 {
            assert!((f.slow[j] - 0.2 * zs[j]).abs() < 1e-15);
            assert!((f.fast[j] - 0.05 * zf[j]).abs() < 1e-15);
            assert!((f.fast[3 + j] - 0.15 * zf[j]).abs() < 1e-15);
            // Left plus right force is the slow impulse over the macro step.
            assert!((2.0 * f.slow[j] - zs[j] * 0.1 * 4.0).abs() < 1e-15);
        }
        assert!(discrete_forces(&msys, &grid, &[1.0]).is_err());
    }

    #[test]
    fn zero_state_stays_zero() {
        let msys = reference_modal();
        let grid = MultirateGrid::new(0.0, 0.1, 1e-3, 5).unwrap();
        let traj = simulate(&msys, &grid, &ModalState::zeros(6), &vec![0.0; 100]).unwrap();
        assert!(traj.slow.iter().chain(&traj.fast).all(|&v| v == 0.0));
        let d = diagnostics(&msys, &traj).unwrap();
        assert!(d
            .energy
            .iter()
            .chain(&d.hub_momentum)
            .chain(&d.noether)
            .all(|&v| v == 0.0));
    }

    #[test]
    fn three_term_step_matches_momentum_march() {
        let msys = reference_modal();
        let grid = MultirateGrid::new(0.0, 0.06, 1e-3, 3).unwrap();
        let mut init = ModalState::zeros(6);
        init.q = vec![0.0, 0.01, -0.002, 1e-4, 2e-5, -1e-5];
        init.qdot = vec![0.1, 0.0, 0.03, 0.0, -0.01, 0.02];
        let tau: Vec<f64> = (0..60).map(|i| (i as f64 * 0.3).sin()).collect();
        let traj = simulate(&msys, &grid, &init, &tau).unwrap();
        let stepper = Stepper::new(&msys, &grid).unwrap();
        for k in 1..grid.macro_count() {
            let (qs, qf) = stepper
                .step(
                    traj.slow_node(k - 1),
                    traj.slow_node(k),
                    traj.fast_window(k - 1),
                    traj.controls(k - 1),
                    traj.controls(k),
                )
                .unwrap();
            for (a, b) in qs.iter().zip(traj.slow_node(k + 1)) {
                assert!((a - b).abs() <= 1e-13);
            }
            for (a, b) in qf.iter().zip(traj.fast_window(k)) {
                assert!((a - b).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn all_slow_split_has_no_fast_part() {
        let sys = assemble_system(&SpacecraftParams::reference(5)).unwrap();
        let msys = solve_modal(&sys, 6).unwrap();
        let grid = MultirateGrid::new(0.0, 0.1, 1e-3, 2).unwrap();
        let mut init = ModalState::zeros(6);
        init.q[1] = 0.01;
        let traj = simulate(&msys, &grid, &init, &vec![0.0; 100]).unwrap();
        assert_eq!(traj.n_fast(), 0);
        assert!(del_residual(&msys, &traj).unwrap().relative() < 1e-12);
    }
}
