//! Generalized eigen-decomposition of `(M, K)` and the slow/fast split of the
//! resulting modal coordinates.

use nalgebra::{DMatrix, DVector};

use crate::beam::SystemMatrices;
use crate::error::{Error, Result};

const MASS_NORMALIZATION_TOL: f64 = 1e-10;
const DIAGONALIZATION_TOL: f64 = 1e-8;
const RIGID_MODE_TOL: f64 = 1e-10;

/// Decoupled system `q̈ + Λq = Zτ` with `ξ = Eq`, split after the first
/// `split` coordinates into slow and fast subsystems.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalSystem {
    eigenvalues: Vec<f64>,
    modal_matrix: DMatrix<f64>,
    mass: DMatrix<f64>,
    input: Vec<f64>,
    split: usize,
}

impl ModalSystem {
    /// Ascending eigenvalues `λ_j = w_j²` (rad²/s²).
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Natural frequencies `w_j = √λ_j` (rad/s).
    pub fn frequencies(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect()
    }

    /// Mass-normalized eigenvectors as columns of `E`.
    pub fn modal_matrix(&self) -> &DMatrix<f64> {
        &self.modal_matrix
    }

    /// The physical mass matrix the decomposition was computed from.
    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    /// `Z = EᵀD`.
    pub fn input(&self) -> &[f64] {
        &self.input
    }

    /// Number of slow coordinates `r`.
    pub fn split(&self) -> usize {
        self.split
    }

    pub fn dof(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n_slow(&self) -> usize {
        self.split
    }

    pub fn n_fast(&self) -> usize {
        self.dof() - self.split
    }

    pub fn slow_eigenvalues(&self) -> &[f64] {
        &self.eigenvalues[..self.split]
    }

    pub fn fast_eigenvalues(&self) -> &[f64] {
        &self.eigenvalues[self.split..]
    }

    pub fn slow_input(&self) -> &[f64] {
        &self.input[..self.split]
    }

    pub fn fast_input(&self) -> &[f64] {
        &self.input[self.split..]
    }

    /// Same decomposition, different slow/fast partition.
    pub fn with_split(&self, split: usize) -> Result<Self> {
        check_split(split, self.dof())?;
        Ok(Self { split, ..self.clone() })
    }

    /// Row of `M E` that maps modal momenta to the hub momentum `p_θ`.
    pub fn hub_momentum_row(&self) -> Vec<f64> {
        let me = &self.mass * &self.modal_matrix;
        me.row(0).iter().copied().collect()
    }

    /// `q = E⁻¹ξ`, evaluated as `EᵀMξ`.
    pub fn physical_to_modal(&self, xi: &[f64]) -> Result<Vec<f64>> {
        self.check_len(xi.len())?;
        let xi = DVector::from_column_slice(xi);
        let q = self.modal_matrix.transpose() * (&self.mass * xi);
        Ok(q.iter().copied().collect())
    }

    /// `ξ = Eq`.
    pub fn modal_to_physical(&self, q: &[f64]) -> Result<Vec<f64>> {
        self.check_len(q.len())?;
        let q = DVector::from_column_slice(q);
        Ok((&self.modal_matrix * q).iter().copied().collect())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dof() {
            return Err(Error::Domain(format!(
                "vector of length {len} does not match {} coordinates",
                self.dof()
            )));
        }
        Ok(())
    }
}

/// Modal coordinates and rates of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalState {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
}

impl ModalState {
    pub fn zeros(dof: usize) -> Self {
        Self {
            q: vec![0.0; dof],
            qdot: vec![0.0; dof],
        }
    }

    pub fn slow(&self, split: usize) -> (&[f64], &[f64]) {
        (&self.q[..split], &self.qdot[..split])
    }

    pub fn fast(&self, split: usize) -> (&[f64], &[f64]) {
        (&self.q[split..], &self.qdot[split..])
    }
}

fn check_split(split: usize, dof: usize) -> Result<()> {
    if split == 0 || split > dof {
        return Err(Error::Domain(format!("split index {split} outside 1..={dof}")));
    }
    Ok(())
}

/// Solves `K e = λ M e` by Cholesky reduction to a symmetric standard problem.
///
/// Columns of `E` are mass-normalized, ordered by ascending `λ` (ties keep
/// their original order) and signed so that their largest-magnitude entry is
/// positive. A first eigenvalue within `1e-10·max λ` of zero is set to exactly
/// zero.
pub fn solve_modal(sys: &SystemMatrices, split: usize) -> Result<ModalSystem> {
    let n = sys.dof();
    check_split(split, n)?;
    if sys.stiffness.shape() != (n, n) || sys.input.len() != n {
        return Err(Error::Domain("mass, stiffness and input dimensions differ".into()));
    }

    let chol = sys
        .mass
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Model("mass matrix is not positive definite".into()))?;
    let l = chol.l();

    // C = L⁻¹ K L⁻ᵀ
    let lk = l
        .solve_lower_triangular(&sys.stiffness)
        .ok_or_else(|| Error::numeric("modal_transform", "triangular solve failed"))?;
    let c_t = l
        .solve_lower_triangular(&lk.transpose())
        .ok_or_else(|| Error::numeric("modal_transform", "triangular solve failed"))?;
    let c = (&c_t + c_t.transpose()) * 0.5;

    let eig = c
        .try_symmetric_eigen(f64::EPSILON, 10_000)
        .ok_or_else(|| Error::numeric("modal_transform", "symmetric eigen iteration did not converge"))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let v = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    let mut modal_matrix = l
        .transpose()
        .solve_upper_triangular(&v)
        .ok_or_else(|| Error::numeric("modal_transform", "back substitution failed"))?;

    for j in 0..n {
        let mut col = modal_matrix.column_mut(j);
        let mut pivot = 0;
        for i in 1..n {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
    }

    let lam_max = eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    if eigenvalues[0].abs() <= RIGID_MODE_TOL * lam_max {
        eigenvalues[0] = 0.0;
    }

    let input = (modal_matrix.transpose() * &sys.input).iter().copied().collect();
    let msys = ModalSystem {
        eigenvalues,
        modal_matrix,
        mass: sys.mass.clone(),
        input,
        split,
    };
    check_residuals(&msys, sys)?;
    Ok(msys)
}

/// Mass-normalization and diagonalization residuals of a decomposition.
pub fn decomposition_residuals(msys: &ModalSystem, sys: &SystemMatrices) -> (f64, f64) {
    let e = msys.modal_matrix();
    let n = msys.dof();
    let etme = e.transpose() * &sys.mass * e;
    let etke = e.transpose() * &sys.stiffness * e;
    let ortho = (etme - DMatrix::<f64>::identity(n, n)).amax();
    let lambda = DMatrix::from_diagonal(&DVector::from_column_slice(msys.eigenvalues()));
    let diag = (etke - lambda).amax();
    (ortho, diag)
}

fn check_residuals(msys: &ModalSystem, sys: &SystemMatrices) -> Result<()> {
    let (ortho, diag) = decomposition_residuals(msys, sys);
    let lam_max = msys.eigenvalues().iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    if ortho > MASS_NORMALIZATION_TOL {
        return Err(Error::numeric(
            "modal_transform",
            format!("mass normalization residual {ortho:e} exceeds {MASS_NORMALIZATION_TOL:e}"),
        ));
    }
    if diag > DIAGONALIZATION_TOL * lam_max.max(1.0) {
        return Err(Error::numeric(
            "modal_transform",
            format!("diagonalization residual {diag:e} too large"),
        ));
    }
    Ok(())
}

/// Maps physical configuration and rates into modal coordinates.
pub fn to_modal(msys: &ModalSystem, xi: &[f64], xi_dot: &[f64]) -> Result<ModalState> {
    Ok(ModalState {
        q: msys.physical_to_modal(xi)?,
        qdot: msys.physical_to_modal(xi_dot)?,
    })
}

/// Maps a modal state back to `(ξ, ξ̇)`.
pub fn from_modal(msys: &ModalSystem, state: &ModalState) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok((msys.modal_to_physical(&state.q)?, msys.modal_to_physical(&state.qdot)?))
}
