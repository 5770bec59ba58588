//! Diagonalization, parity labelling, and critical couplings.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::operators::{build_hamiltonian, parity_operator, OperatorMatrix, SystemParams};

/// Energy gap below which two levels count as degenerate, in units of ω.
pub const DEGENERACY_THRESHOLD: f64 = 1e-10;

/// Gap below which adjacent levels are flagged as crossing in a scan.
pub const CROSSING_GAP: f64 = 1e-9;

/// Parity label of an eigenvector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    Even,
    Odd,
    /// The eigenvector mixes both sectors (accidental cross-sector degeneracy).
    Undefined,
}

impl Parity {
    pub fn sign(self) -> Option<i8> {
        match self {
            Parity::Even => Some(1),
            Parity::Odd => Some(-1),
            Parity::Undefined => None,
        }
    }

    fn from_expectation(x: f64) -> Self {
        if (x - 1.0).abs() < 1e-8 {
            Parity::Even
        } else if (x + 1.0).abs() < 1e-8 {
            Parity::Odd
        } else {
            Parity::Undefined
        }
    }
}

/// Sorted eigenvalues, orthonormal eigenvectors (as columns) and parity labels.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub energies: Vec<f64>,
    pub vectors: DMatrix<f64>,
    pub parities: Vec<Parity>,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn ground_energy(&self) -> f64 {
        self.energies[0]
    }

    /// Level indices belonging to a parity sector, in ascending energy.
    pub fn sector(&self, parity: Parity) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.parities[i] == parity).collect()
    }

    /// Largest ‖Hv − Ev‖ over all eigenpairs.
    pub fn max_residual(&self, h: &OperatorMatrix) -> f64 {
        let hv = h.matrix() * &self.vectors;
        (0..self.dim())
            .map(|k| (hv.column(k) - self.vectors.column(k) * self.energies[k]).norm())
            .fold(0.0, f64::max)
    }
}

/// Full eigendecomposition of a Hermitian `h` that resolves the parity
/// symmetry `pi` (a diagonal ±1 operator).
///
/// When `h` commutes with `pi` the two parity blocks are diagonalized
/// separately, so every eigenvector is an exact parity eigenvector even
/// inside degenerate clusters. Otherwise the full matrix is diagonalized and
/// labels come from ⟨v|Π|v⟩, which may be [`Parity::Undefined`].
pub fn diagonalize(h: &OperatorMatrix, pi: &OperatorMatrix) -> Result<EigenSystem> {
    let d = h.dim();
    if pi.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: pi.dim(),
        });
    }
    let defect = h.hermiticity_defect();
    if defect > 1e-12 {
        return Err(Error::NotHermitian { deviation: defect });
    }
    let signs: Vec<f64> = (0..d).map(|i| pi.matrix()[(i, i)]).collect();
    let pi_is_diagonal_sign = signs.iter().all(|s| (s.abs() - 1.0).abs() < 1e-14)
        && (pi.matrix() - DMatrix::from_diagonal(&pi.matrix().diagonal())).norm() == 0.0;
    if !pi_is_diagonal_sign {
        return Err(Error::invalid("parity", "parity operator must be diagonal with ±1 entries"));
    }

    let scale = h.matrix().norm().max(1.0);
    if h.commutator_norm(pi) <= 1e-12 * scale {
        Ok(diagonalize_blocks(h.matrix(), &signs))
    } else {
        log::warn!("Hamiltonian does not commute with parity; labels may be undefined");
        Ok(diagonalize_full(h.matrix(), pi.matrix()))
    }
}

fn diagonalize_blocks(h: &DMatrix<f64>, signs: &[f64]) -> EigenSystem {
    let d = h.nrows();
    let mut pairs: Vec<(f64, Parity, Vec<f64>)> = Vec::with_capacity(d);
    for (parity, sign) in [(Parity::Even, 1.0), (Parity::Odd, -1.0)] {
        let idx: Vec<usize> = (0..d).filter(|&i| signs[i] == sign).collect();
        if idx.is_empty() {
            continue;
        }
        let block = h.select_rows(&idx).select_columns(&idx);
        let eig = SymmetricEigen::new(block);
        for k in 0..idx.len() {
            let mut v = vec![0.0; d];
            for (r, &i) in idx.iter().enumerate() {
                v[i] = eig.eigenvectors[(r, k)];
            }
            pairs.push((eig.eigenvalues[k], parity, v));
        }
    }
    assemble(pairs)
}

fn diagonalize_full(h: &DMatrix<f64>, pi: &DMatrix<f64>) -> EigenSystem {
    let d = h.nrows();
    let eig = SymmetricEigen::new(h.clone());
    let pairs = (0..d)
        .map(|k| {
            let v = eig.eigenvectors.column(k).into_owned();
            let x = (v.transpose() * pi * &v)[(0, 0)];
            (eig.eigenvalues[k], Parity::from_expectation(x), v.iter().copied().collect())
        })
        .collect();
    assemble(pairs)
}

fn assemble(mut pairs: Vec<(f64, Parity, Vec<f64>)>) -> EigenSystem {
    // Stable: ties keep the even sector first.
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let d = pairs.len();
    let mut vectors = DMatrix::zeros(d, d);
    let mut energies = Vec::with_capacity(d);
    let mut parities = Vec::with_capacity(d);
    for (k, (e, parity, mut v)) in pairs.into_iter().enumerate() {
        fix_phase(&mut v);
        vectors.column_mut(k).copy_from_slice(&v);
        energies.push(e);
        parities.push(parity);
    }
    EigenSystem {
        energies,
        vectors,
        parities,
    }
}

/// Makes the largest-magnitude component positive.
fn fix_phase(v: &mut [f64]) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() + 1e-12 {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Convergence test applied before a spectrum is trusted: the lowest
/// `levels` eigenvalues must move by less than `tolerance · ω` when
/// `extra_modes` boson states are added.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationCheck {
    pub enabled: bool,
    pub extra_modes: usize,
    pub levels: usize,
    pub tolerance: f64,
}

impl Default for TruncationCheck {
    fn default() -> Self {
        TruncationCheck {
            enabled: true,
            extra_modes: 10,
            levels: 12,
            tolerance: 1e-8,
        }
    }
}

impl TruncationCheck {
    pub fn disabled() -> Self {
        TruncationCheck {
            enabled: false,
            ..Self::default()
        }
    }
}

/// Builds and diagonalizes H(p), verifying truncation convergence.
pub fn eigensystem(p: &SystemParams, check: &TruncationCheck) -> Result<EigenSystem> {
    let h = build_hamiltonian(p)?;
    let eig = diagonalize(&h, &parity_operator(p.n_max)?)?;
    if check.enabled {
        let bigger = p.with_n_max(p.n_max + check.extra_modes);
        let eb = eigenvalues_only(&bigger)?;
        let n = check.levels.min(eig.dim());
        let shift = eig.energies[..n]
            .iter()
            .zip(&eb[..n])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let tol = check.tolerance * p.omega;
        if shift >= tol {
            return Err(Error::TruncationNotConverged {
                n_max: p.n_max,
                extra: check.extra_modes,
                shift,
                tolerance: tol,
            });
        }
    }
    Ok(eig)
}

/// Sorted eigenvalues of H(p) without eigenvectors, one parity block at a time.
fn eigenvalues_only(p: &SystemParams) -> Result<Vec<f64>> {
    let h = build_hamiltonian(p)?;
    let d = h.dim();
    let mut all = Vec::with_capacity(d);
    for sign in [1.0, -1.0] {
        let idx: Vec<usize> = (0..d)
            .filter(|&i| crate::operators::parity_sign(i, p.n_max) == sign)
            .collect();
        let block = h.matrix().select_rows(&idx).select_columns(&idx);
        all.extend(block.symmetric_eigenvalues().iter().copied());
    }
    all.sort_by(f64::total_cmp);
    Ok(all)
}

/// Ground-state level-crossing coupling λ₁c at ω = 1 for anisotropy
/// r = λ₂/λ₁. `None` when no first-order transition exists (non-positive
/// radicand or vanishing denominator).
pub fn first_order_critical_coupling(delta: f64, u: f64, r: f64) -> Option<f64> {
    if !(delta > 0.0) {
        return None;
    }
    let denom = u * (1.0 + r * r) + 1.0 - r * r;
    if denom.abs() < 1e-14 {
        return None;
    }
    let radicand = delta * (1.0 - u * u) / denom;
    (radicand > 0.0).then(|| radicand.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticalKind {
    FirstOrder,
    /// Spectral collapse at U = +1.
    ContinuousPlus,
    /// Spectral collapse at U = −1.
    ContinuousMinus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalPoint {
    pub kind: CriticalKind,
    /// λ₁c for the first-order point, α_c = ((λ₁+λ₂)/2)_c for collapse points.
    pub coupling_value: f64,
    /// E_c for collapse points.
    pub collapse_energy: Option<f64>,
}

/// Sign of the Stark coupling at which the spectrum collapses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StarkBranch {
    Plus,
    Minus,
}

/// Collapse coupling α_c± = √((1 ∓ Δ ± κ)/2), κ = (1−r)/(1+r), and the
/// collapse energy E_c± = ∓Δ/2 − 2α_c².
pub fn continuous_critical_coupling(delta: f64, r: f64, branch: StarkBranch) -> Result<CriticalPoint> {
    if !(delta > 0.0) {
        return Err(Error::invalid("delta", "must be positive"));
    }
    if !(r >= 0.0) {
        return Err(Error::invalid("r", "anisotropy must be non-negative"));
    }
    let kappa = (1.0 - r) / (1.0 + r);
    let s = match branch {
        StarkBranch::Plus => 1.0,
        StarkBranch::Minus => -1.0,
    };
    let radicand = (1.0 - s * delta + s * kappa) / 2.0;
    if radicand < 0.0 {
        return Err(Error::NoTransition {
            kind: "continuous",
            reason: format!("negative radicand {radicand:.3e}"),
        });
    }
    let alpha = radicand.sqrt();
    Ok(CriticalPoint {
        kind: match branch {
            StarkBranch::Plus => CriticalKind::ContinuousPlus,
            StarkBranch::Minus => CriticalKind::ContinuousMinus,
        },
        coupling_value: alpha,
        collapse_energy: Some(-s * delta / 2.0 - 2.0 * alpha * alpha),
    })
}

/// Parameter varied by a spectrum scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScanAxis {
    Lambda1,
    Lambda2,
    U,
    /// λ₁ = x and λ₂ = ratio·x.
    Lambda1Locked { ratio: f64 },
    /// λ₂ = x and λ₁ = ratio·x.
    Lambda2Locked { ratio: f64 },
}

impl ScanAxis {
    pub fn apply(&self, base: &SystemParams, x: f64) -> SystemParams {
        let mut p = *base;
        match *self {
            ScanAxis::Lambda1 => p.lambda1 = x,
            ScanAxis::Lambda2 => p.lambda2 = x,
            ScanAxis::U => p.u = x,
            ScanAxis::Lambda1Locked { ratio } => {
                p.lambda1 = x;
                p.lambda2 = ratio * x;
            }
            ScanAxis::Lambda2Locked { ratio } => {
                p.lambda2 = x;
                p.lambda1 = ratio * x;
            }
        }
        p
    }
}

/// One grid point of a spectrum scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanPoint {
    pub axis_value: f64,
    pub ground_energy: f64,
    /// E_k − E_0 for the retained levels.
    pub relative_energies: Vec<f64>,
    pub parities: Vec<Parity>,
    /// `crossing[k]`: level k meets level k+1 at this point (gap below
    /// [`CROSSING_GAP`]) or changed parity since the previous grid point.
    pub crossing: Vec<bool>,
}

/// Diagonalizes H along `grid` and reports the lowest `n_levels` levels.
/// Points are evaluated in parallel; the output follows the grid order.
pub fn spectrum_scan(
    base: &SystemParams,
    axis: ScanAxis,
    grid: &[f64],
    n_levels: usize,
    check: &TruncationCheck,
) -> Result<Vec<ScanPoint>> {
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("grid", "must be strictly ascending"));
    }
    if n_levels == 0 || n_levels > base.dim() {
        return Err(Error::invalid("n_levels", format!("must lie in 1..={}", base.dim())));
    }
    let systems: Vec<Result<EigenSystem>> = grid
        .par_iter()
        .map(|&x| eigensystem(&axis.apply(base, x), check))
        .collect();

    let mut out: Vec<ScanPoint> = Vec::with_capacity(grid.len());
    for (&x, eig) in grid.iter().zip(systems) {
        let eig = eig.map_err(|e| match e {
            Error::TruncationNotConverged { .. } => Error::invalid(
                "grid",
                format!("truncation failed at axis value {x}: {e}"),
            ),
            other => other,
        })?;
        let e0 = eig.ground_energy();
        let relative: Vec<f64> = eig.energies[..n_levels].iter().map(|e| e - e0).collect();
        let parities = eig.parities[..n_levels].to_vec();
        let crossing = (0..n_levels)
            .map(|k| {
                let gap_small = k + 1 < eig.dim() && eig.energies[k + 1] - eig.energies[k] < CROSSING_GAP;
                let flipped = out.last().is_some_and(|prev| prev.parities[k] != parities[k]);
                gap_small || flipped
            })
            .collect();
        out.push(ScanPoint {
            axis_value: x,
            ground_energy: e0,
            relative_energies: relative,
            parities,
            crossing,
        });
    }
    Ok(out)
}

/// Axis values at which the ground-state parity differs from the previous
/// grid point.
pub fn ground_parity_flips(scan: &[ScanPoint]) -> Vec<f64> {
    scan.windows(2)
        .filter(|w| w[0].parities[0] != w[1].parities[0])
        .map(|w| w[1].axis_value)
        .collect()
}
