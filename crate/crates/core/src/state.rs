//! Density matrices and distance measures between them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::operators::OperatorMatrix;

/// Eigenvalues below this are clipped before taking logarithms.
pub const LOG_CLIP: f64 = 1e-14;

/// Hermitian, positive-semidefinite, unit-trace matrix in the product basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(DMatrix<C64>);

impl DensityMatrix {
    /// Validates Hermiticity (1e-10), trace (1e-8) and positivity (−1e-8).
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let herm = (&m - m.adjoint()).norm();
        if herm > 1e-10 {
            return Err(Error::InvalidState {
                reason: format!("not Hermitian (deviation {herm:.3e})"),
            });
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > 1e-8 || tr.im.abs() > 1e-8 {
            return Err(Error::InvalidState {
                reason: format!("trace {tr} differs from 1"),
            });
        }
        let rho = DensityMatrix(m);
        let min = rho.min_eigenvalue();
        if min < -1e-8 {
            return Err(Error::InvalidState {
                reason: format!("negative eigenvalue {min:.3e}"),
            });
        }
        Ok(rho)
    }

    pub(crate) fn from_raw(m: DMatrix<C64>) -> Self {
        DensityMatrix(m)
    }

    /// |ψ⟩⟨ψ| for a (not necessarily normalized) vector.
    pub fn pure(psi: &DVector<C64>) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(Error::InvalidState {
                reason: "zero state vector".into(),
            });
        }
        let v = psi / C64::from(norm);
        Ok(DensityMatrix(&v * v.adjoint()))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix(DMatrix::identity(dim, dim) / C64::from(dim as f64))
    }

    /// Σ_n p_n |v_n⟩⟨v_n| for real orthonormal columns `vectors`.
    pub fn from_populations(vectors: &DMatrix<f64>, populations: &[f64]) -> Self {
        let scaled = DMatrix::from_fn(vectors.nrows(), vectors.ncols(), |i, k| vectors[(i, k)] * populations[k]);
        let m = scaled * vectors.transpose();
        DensityMatrix(m.map(C64::from))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// Tr ρ².
    pub fn purity(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Tr(ρ A) for a real symmetric observable.
    pub fn expectation(&self, op: &OperatorMatrix) -> f64 {
        let a = op.matrix();
        let mut acc = 0.0;
        for j in 0..self.dim() {
            for i in 0..self.dim() {
                acc += self.0[(i, j)].re * a[(j, i)];
            }
        }
        acc
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut e: Vec<f64> = SymmetricEigen::new(self.0.clone()).eigenvalues.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// Diagonal of Vᵀ ρ V: populations in the basis given by the columns of V.
    pub fn populations_in(&self, vectors: &DMatrix<f64>) -> Vec<f64> {
        let rv = &self.0 * vectors.map(C64::from);
        (0..vectors.ncols())
            .map(|k| {
                (0..self.dim())
                    .map(|i| vectors[(i, k)] * rv[(i, k)].re)
                    .sum()
            })
            .collect()
    }

    /// Vᵀ ρ V.
    pub fn to_basis(&self, vectors: &DMatrix<f64>) -> DMatrix<C64> {
        let v = vectors.map(C64::from);
        v.transpose() * &self.0 * v
    }

    /// Inverse of [`to_basis`](Self::to_basis): V ρ' Vᵀ.
    pub fn from_basis(m: &DMatrix<C64>, vectors: &DMatrix<f64>) -> Self {
        let v = vectors.map(C64::from);
        DensityMatrix(&v * m * v.transpose())
    }

    /// (ρ + ρ†)/2 followed by trace renormalization.
    pub fn hermitize(&mut self) {
        self.0 = (&self.0 + self.0.adjoint()) * C64::from(0.5);
        let tr = self.trace();
        if tr != 0.0 {
            self.0 /= C64::from(tr);
        }
    }
}

fn hermitian_eigen(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let eig = SymmetricEigen::new(m.clone());
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

fn sqrt_psd(m: &DMatrix<C64>) -> DMatrix<C64> {
    let (vals, vecs) = hermitian_eigen(m);
    let d = m.nrows();
    let scaled = DMatrix::from_fn(d, d, |i, k| vecs[(i, k)] * vals[k].max(0.0).sqrt());
    scaled * vecs.adjoint()
}

/// Uhlmann fidelity F = (Tr √(√ρ σ √ρ))², clamped to [0, 1].
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> f64 {
    let s = sqrt_psd(rho.matrix());
    let mut m = &s * sigma.matrix() * &s;
    m = (&m + m.adjoint()) * C64::from(0.5);
    let (vals, _) = hermitian_eigen(&m);
    let root: f64 = vals.iter().map(|v| v.max(0.0).sqrt()).sum();
    (root * root).clamp(0.0, 1.0)
}

/// ½ Tr|ρ − σ|.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> f64 {
    let diff = rho.matrix() - sigma.matrix();
    let (vals, _) = hermitian_eigen(&diff);
    0.5 * vals.iter().map(|v| v.abs()).sum::<f64>()
}

/// −Tr ρ ln ρ.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    rho.eigenvalues()
        .iter()
        .filter(|&&p| p > LOG_CLIP)
        .map(|&p| -p * p.ln())
        .sum()
}

/// Result of a quantum relative entropy evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeEntropy {
    pub value: f64,
    /// ρ has weight on the (clipped) kernel of σ, so the true value diverges.
    pub support_mismatch: bool,
}

/// Weight of ρ on σ's clipped kernel above which D(ρ‖σ) is reported as divergent.
const SUPPORT_LEAK: f64 = 1e-8;

/// D(ρ‖σ) = Tr ρ(ln ρ − ln σ), with eigenvalues clipped at [`LOG_CLIP`].
pub fn relative_entropy(rho: &DensityMatrix, sigma: &DensityMatrix) -> RelativeEntropy {
    let (r_vals, r_vecs) = hermitian_eigen(rho.matrix());
    let (s_vals, s_vecs) = hermitian_eigen(sigma.matrix());
    let self_term: f64 = r_vals
        .iter()
        .map(|&p| {
            let p = p.max(LOG_CLIP);
            p * p.ln()
        })
        .sum();
    // Tr ρ ln σ = Σ_ij r_i |⟨r_i|s_j⟩|² ln s_j
    let overlap = r_vecs.adjoint() * &s_vecs;
    let mut cross = 0.0;
    let mut leak = 0.0;
    for j in 0..s_vals.len() {
        let weight: f64 = (0..r_vals.len())
            .map(|i| r_vals[i].max(0.0) * overlap[(i, j)].norm_sqr())
            .sum();
        if s_vals[j] <= LOG_CLIP {
            leak += weight;
        }
        cross += weight * s_vals[j].max(LOG_CLIP).ln();
    }
    RelativeEntropy {
        value: (self_term - cross).max(0.0),
        support_mismatch: leak > SUPPORT_LEAK,
    }
}
