//! Operators on the truncated qubit ⊗ boson Hilbert space.
//!
//! States are indexed qubit-major: `index = q * (n_max + 1) + n` with
//! `q = 0` for the ground qubit state |g⟩ (σ_z = −1) and `q = 1` for the
//! excited state |e⟩ (σ_z = +1). Eigenvector files written by the CLI use
//! the same ordering.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest |U| accepted; the spectrum collapses at |U| = 1 and no finite
/// truncation converges there.
pub const MAX_STARK: f64 = 0.99;

/// Default Fock-space cutoff.
pub const DEFAULT_N_MAX: usize = 40;

/// Physical parameters of the working medium plus the Fock truncation.
///
/// All energies are in units of a reference frequency with ħ = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Boson frequency ω.
    pub omega: f64,
    /// Qubit splitting Δ.
    pub delta: f64,
    /// Stark coupling U multiplying a†a σ_z.
    pub u: f64,
    /// Rotating-wave coupling λ₁.
    pub lambda1: f64,
    /// Counter-rotating coupling λ₂.
    pub lambda2: f64,
    /// Highest retained boson number.
    pub n_max: usize,
}

impl SystemParams {
    pub fn new(
        omega: f64,
        delta: f64,
        u: f64,
        lambda1: f64,
        lambda2: f64,
        n_max: usize,
    ) -> Result<Self> {
        let p = SystemParams {
            omega,
            delta,
            u,
            lambda1,
            lambda2,
            n_max,
        };
        p.validate()?;
        Ok(p)
    }

    /// Resonant medium (Δ = ω + detuning) with the default truncation.
    pub fn resonant(omega: f64, detuning: f64, u: f64, lambda1: f64, lambda2: f64) -> Result<Self> {
        Self::new(omega, omega + detuning, u, lambda1, lambda2, DEFAULT_N_MAX)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::invalid("omega", format!("must be positive, got {}", self.omega)));
        }
        for (name, v) in [
            ("delta", self.delta),
            ("u", self.u),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        if self.n_max < 1 {
            return Err(Error::invalid("n_max", "must be at least 1"));
        }
        if self.u.abs() > MAX_STARK {
            return Err(Error::SpectralCollapse {
                u: self.u,
                limit: MAX_STARK,
            });
        }
        Ok(())
    }

    /// Hilbert-space dimension 2·(n_max + 1).
    pub fn dim(&self) -> usize {
        dimension(self.n_max)
    }

    pub fn with_n_max(self, n_max: usize) -> Self {
        SystemParams { n_max, ..self }
    }

    /// Qubit detuning Δ − ω.
    pub fn detuning(&self) -> f64 {
        self.delta - self.omega
    }
}

pub fn dimension(n_max: usize) -> usize {
    2 * (n_max + 1)
}

/// Qubit basis state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Qubit {
    Ground,
    Excited,
}

impl Qubit {
    fn index(self) -> usize {
        match self {
            Qubit::Ground => 0,
            Qubit::Excited => 1,
        }
    }

    /// Eigenvalue of σ_z.
    pub fn sz(self) -> f64 {
        match self {
            Qubit::Ground => -1.0,
            Qubit::Excited => 1.0,
        }
    }
}

/// Position of |q, n⟩ in the product basis.
pub fn basis_index(q: Qubit, n: usize, n_max: usize) -> usize {
    q.index() * (n_max + 1) + n
}

/// Inverse of [`basis_index`].
pub fn basis_state(index: usize, n_max: usize) -> (Qubit, usize) {
    let q = if index / (n_max + 1) == 0 {
        Qubit::Ground
    } else {
        Qubit::Excited
    };
    (q, index % (n_max + 1))
}

/// Dense real operator in the product basis. Every operator of this model
/// has real matrix elements, so the real representation is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix(DMatrix<f64>);

impl OperatorMatrix {
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        Ok(OperatorMatrix(m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// ‖A − Aᵀ‖_F / ‖A‖_F (zero for the zero matrix).
    pub fn hermiticity_defect(&self) -> f64 {
        let norm = self.0.norm();
        if norm == 0.0 {
            return 0.0;
        }
        (&self.0 - self.0.transpose()).norm() / norm
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// Frobenius norm of the commutator [self, other].
    pub fn commutator_norm(&self, other: &OperatorMatrix) -> f64 {
        (&self.0 * &other.0 - &other.0 * &self.0).norm()
    }
}

fn annihilation(n_max: usize) -> DMatrix<f64> {
    let m = n_max + 1;
    DMatrix::from_fn(m, m, |i, j| if j == i + 1 { (j as f64).sqrt() } else { 0.0 })
}

fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

// Qubit operators in the {|g⟩, |e⟩} basis.
fn sigma_z() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0])
}

fn sigma_plus() -> DMatrix<f64> {
    // |e⟩⟨g|
    DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0])
}

/// H = ω a†a + (Δ/2)σ_z + U a†a σ_z + λ₁(aσ⁺ + a†σ⁻) + λ₂(a†σ⁺ + aσ⁻).
pub fn build_hamiltonian(p: &SystemParams) -> Result<OperatorMatrix> {
    p.validate()?;
    let a = annihilation(p.n_max);
    let ad = a.transpose();
    let num = &ad * &a;
    let id_b = DMatrix::<f64>::identity(p.n_max + 1, p.n_max + 1);
    let id_q = DMatrix::<f64>::identity(2, 2);
    let sz = sigma_z();
    let sp = sigma_plus();
    let sm = sp.transpose();

    let mut h = kron(&id_q, &num) * p.omega;
    h += kron(&sz, &id_b) * (0.5 * p.delta);
    h += kron(&sz, &num) * p.u;
    h += (kron(&sp, &a) + kron(&sm, &ad)) * p.lambda1;
    h += (kron(&sp, &ad) + kron(&sm, &a)) * p.lambda2;
    Ok(OperatorMatrix(h))
}

/// Π = exp(iπN̂) with N̂ = a†a + σ⁺σ⁻; diagonal with entries ±1.
pub fn parity_operator(n_max: usize) -> Result<OperatorMatrix> {
    if n_max < 1 {
        return Err(Error::invalid("n_max", "must be at least 1"));
    }
    let d = dimension(n_max);
    let diag = nalgebra::DVector::from_fn(d, |i, _| parity_sign(i, n_max));
    Ok(OperatorMatrix(DMatrix::from_diagonal(&diag)))
}

/// Parity eigenvalue of the basis state with the given index.
pub fn parity_sign(index: usize, n_max: usize) -> f64 {
    let (q, n) = basis_state(index, n_max);
    let excitations = n + q.index();
    if excitations % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Which bath-coupled observable to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CouplingKind {
    /// X_a = a† + a
    Boson,
    /// X_σ = σ⁺ + σ⁻
    Qubit,
}

pub fn coupling_operator(kind: CouplingKind, n_max: usize) -> Result<OperatorMatrix> {
    if n_max < 1 {
        return Err(Error::invalid("n_max", "must be at least 1"));
    }
    let id_b = DMatrix::<f64>::identity(n_max + 1, n_max + 1);
    let id_q = DMatrix::<f64>::identity(2, 2);
    let m = match kind {
        CouplingKind::Boson => {
            let a = annihilation(n_max);
            kron(&id_q, &(a.transpose() + a))
        }
        CouplingKind::Qubit => {
            let sp = sigma_plus();
            kron(&(sp.transpose() + sp), &id_b)
        }
    };
    Ok(OperatorMatrix(m))
}

/// ∂H/∂ω along a ramp that keeps Δ − ω fixed: a†a + σ_z/2.
pub fn frequency_derivative(n_max: usize) -> OperatorMatrix {
    let a = annihilation(n_max);
    let num = a.transpose() * &a;
    let id_b = DMatrix::<f64>::identity(n_max + 1, n_max + 1);
    let id_q = DMatrix::<f64>::identity(2, 2);
    OperatorMatrix(kron(&id_q, &num) + kron(&sigma_z(), &id_b) * 0.5)
}
