//! Assumed-modes model of a rigid hub carrying two identical cantilever
//! appendages with tip masses.
//!
//! The generalized coordinates are `ξ = [θ, η_1, …, η_N]`: the hub rotation
//! angle followed by the amplitudes of the assumed beam modes. Everything in
//! here is in slug–ft–s–lb units; inch inputs are converted once, at
//! construction time.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const INCH: f64 = 1.0 / 12.0;

/// Base Gauss-Legendre order for the beam integrals.
pub const BASE_QUADRATURE_ORDER: usize = 32;
const MAX_QUADRATURE_ORDER: usize = 1024;
const QUADRATURE_REL_TOL: f64 = 1e-12;

/// Physical constants of the hub, beams and tip masses.
#[derive(Debug, Clone, PartialEq)]
pub struct SpacecraftParams {
    /// Hub radius R (ft).
    pub hub_radius: f64,
    /// Hub rotary inertia J_h (slug-ft²).
    pub hub_inertia: f64,
    /// Mass of each tip body m_t (slug).
    pub tip_mass: f64,
    /// Rotary inertia of each tip body J_t (slug-ft²).
    pub tip_inertia: f64,
    /// Appendage length L (ft).
    pub beam_length: f64,
    /// Mass per unit length ρA (slug/ft).
    pub beam_linear_density: f64,
    /// Flexural rigidity EI (lb-ft²).
    pub flexural_rigidity: f64,
    /// Number of assumed modes N per appendage.
    pub num_modes: usize,
}

impl SpacecraftParams {
    /// Reference spacecraft: 8 slug-ft² hub of radius 1 ft with two 4 ft
    /// aluminium-like strips (6 in × 0.125 in) carrying small tip masses.
    pub fn reference(num_modes: usize) -> Self {
        Self {
            hub_radius: 1.0,
            hub_inertia: 8.0,
            tip_mass: 0.156941,
            tip_inertia: 0.0018,
            beam_length: 4.0,
            beam_linear_density: 0.0271875,
            flexural_rigidity: rectangular_flexural_rigidity(0.1584e10, 6.0, 0.125),
            num_modes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hub_radius", self.hub_radius),
            ("tip_mass", self.tip_mass),
            ("beam_length", self.beam_length),
            ("beam_linear_density", self.beam_linear_density),
            ("flexural_rigidity", self.flexural_rigidity),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Model(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("hub_inertia", self.hub_inertia), ("tip_inertia", self.tip_inertia)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Model(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.num_modes == 0 {
            return Err(Error::Model("num_modes must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of generalized coordinates, `N + 1`.
    pub fn dof(&self) -> usize {
        self.num_modes + 1
    }

    pub fn basis(&self) -> ModeBasis {
        ModeBasis {
            length: self.beam_length,
            num_modes: self.num_modes,
        }
    }
}

/// `EI` of a rectangular strip bending about its stiff axis, with the section
/// given in inches and the modulus in lb/ft². The deflection plane is spanned
/// by the strip thickness, so `I = h·t³/12`.
pub fn rectangular_flexural_rigidity(modulus: f64, height_in: f64, thickness_in: f64) -> f64 {
    let h = height_in * INCH;
    let t = thickness_in * INCH;
    modulus * h * t.powi(3) / 12.0
}

/// Clamped-free assumed mode shapes
/// `φ_j(x) = 1 − cos(jπx/L) + ½(−1)^{j+1}(jπx/L)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeBasis {
    pub length: f64,
    pub num_modes: usize,
}

impl ModeBasis {
    /// Value (`deriv = 0`) or first/second spatial derivative of `φ_j` at `x`.
    pub fn eval(&self, j: usize, x: f64, deriv: u8) -> Result<f64> {
        if j == 0 || j > self.num_modes {
            return Err(Error::Domain(format!("mode index {j} outside 1..={}", self.num_modes)));
        }
        if !(0.0..=self.length).contains(&x) {
            return Err(Error::Domain(format!("position {x} outside [0, {}]", self.length)));
        }
        if deriv > 2 {
            return Err(Error::Domain(format!("derivative order {deriv} not in 0..=2")));
        }
        Ok(self.eval_unchecked(j, x, deriv))
    }

    pub(crate) fn eval_unchecked(&self, j: usize, x: f64, deriv: u8) -> f64 {
        let k = j as f64 * PI / self.length;
        let s = if j % 2 == 1 { 0.5 } else { -0.5 };
        match deriv {
            0 => 1.0 - (k * x).cos() + s * (k * x).powi(2),
            1 => k * (k * x).sin() + 2.0 * s * k * k * x,
            _ => k * k * (k * x).cos() + 2.0 * s * k * k,
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Mass matrix `M`, stiffness matrix `K` and input map `D` in the physical
/// coordinates `ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    pub mass: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    pub input: DVector<f64>,
}

impl SystemMatrices {
    pub fn dof(&self) -> usize {
        self.mass.nrows()
    }
}

/// Assembles `M`, `K` and `D` for the given spacecraft.
///
/// The beam integrals use Gauss-Legendre quadrature starting at
/// [`BASE_QUADRATURE_ORDER`] points; the order is doubled until a further
/// doubling changes no entry by more than `1e-12` relative.
pub fn assemble_system(params: &SpacecraftParams) -> Result<SystemMatrices> {
    params.validate()?;
    let mut order = BASE_QUADRATURE_ORDER;
    let mut current = assemble_with_order(params, order);
    while order < MAX_QUADRATURE_ORDER {
        let refined = assemble_with_order(params, 2 * order);
        let stable = entries_agree(&current.0, &refined.0) && entries_agree(&current.1, &refined.1);
        current = refined;
        order *= 2;
        if stable {
            let n = params.dof();
            let mut input = DVector::zeros(n);
            input[0] = 1.0;
            return Ok(SystemMatrices {
                mass: current.0,
                stiffness: current.1,
                input,
            });
        }
    }
    Err(Error::numeric(
        "beam_model",
        format!("beam integrals did not stabilize up to {MAX_QUADRATURE_ORDER} quadrature points"),
    ))
}

fn entries_agree(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    let scale = b.amax();
    a.iter()
        .zip(b.iter())
        .all(|(x, y)| (x - y).abs() <= QUADRATURE_REL_TOL * x.abs().max(y.abs()) + 1e-15 * scale)
}

fn assemble_with_order(params: &SpacecraftParams, order: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let n_modes = params.num_modes;
    let n = n_modes + 1;
    let len = params.beam_length;
    let r = params.hub_radius;
    let rho_a = params.beam_linear_density;
    let ei = params.flexural_rigidity;
    let mt = params.tip_mass;
    let jt = params.tip_inertia;
    let basis = params.basis();

    let (nodes, weights) = gauss_legendre(order);
    let xs: Vec<f64> = nodes.iter().map(|t| 0.5 * len * (t + 1.0)).collect();
    let ws: Vec<f64> = weights.iter().map(|w| 0.5 * len * w).collect();

    // Tabulate φ and φ'' at the quadrature points once.
    let phi: Vec<Vec<f64>> = (1..=n_modes)
        .map(|j| xs.iter().map(|&x| basis.eval_unchecked(j, x, 0)).collect())
        .collect();
    let phi2: Vec<Vec<f64>> = (1..=n_modes)
        .map(|j| xs.iter().map(|&x| basis.eval_unchecked(j, x, 2)).collect())
        .collect();
    let tip: Vec<f64> = (1..=n_modes).map(|j| basis.eval_unchecked(j, len, 0)).collect();
    let tip_slope: Vec<f64> = (1..=n_modes).map(|j| basis.eval_unchecked(j, len, 1)).collect();

    let integrate = |f: &dyn Fn(usize) -> f64| -> f64 { (0..xs.len()).map(|q| ws[q] * f(q)).sum() };

    let mut mass = DMatrix::zeros(n, n);
    let mut stiffness = DMatrix::zeros(n, n);

    let hub_arm = integrate(&|q| rho_a * (r + xs[q]).powi(2));
    mass[(0, 0)] = params.hub_inertia + 2.0 * (jt + mt * (r + len).powi(2) + hub_arm);

    for i in 0..n_modes {
        let coupling = 2.0 * mt * (r + len) * tip[i]
            + 2.0 * jt * tip_slope[i]
            + 2.0 * integrate(&|q| rho_a * (r + xs[q]) * phi[i][q]);
        mass[(0, i + 1)] = coupling;
        mass[(i + 1, 0)] = coupling;
        for j in i..n_modes {
            let m = 2.0 * mt * tip[i] * tip[j]
                + 2.0 * jt * tip_slope[i] * tip_slope[j]
                + 2.0 * integrate(&|q| rho_a * phi[i][q] * phi[j][q]);
            let k = 2.0 * integrate(&|q| ei * phi2[i][q] * phi2[j][q]);
            mass[(i + 1, j + 1)] = m;
            mass[(j + 1, i + 1)] = m;
            stiffness[(i + 1, j + 1)] = k;
            stiffness[(j + 1, i + 1)] = k;
        }
    }
    (mass, stiffness)
}
