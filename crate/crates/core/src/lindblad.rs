//! Dressed-state Markovian master equation.
//!
//! Jump operators connect exact eigenstates |φ_j⟩ → |φ_k⟩ of the working
//! medium with Ohmic rates. In that eigenbasis the generator splits into a
//! Pauli rate equation for the populations and independent exponential
//! decay of each coherence:
//!
//! ```text
//! dρ_mn/dt = −i(E_m − E_n) ρ_mn − ½(Γ_m + Γ_n) ρ_mn + δ_mn Σ_{j→m} r_{j→m} ρ_jj
//! ```
//!
//! where Γ_m is the total rate out of level m. Propagation exploits this:
//! coherences get their exact factor and the populations are integrated
//! with classical RK4.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::operators::{coupling_operator, CouplingKind, OperatorMatrix};
use crate::otto_ideal::gibbs_populations;
use crate::spectrum::EigenSystem;
use crate::state::DensityMatrix;

/// Bath coupling α (in units of ω).
pub const DEFAULT_COUPLING: f64 = 0.001;
/// Ohmic cutoff frequency (in units of ω).
pub const DEFAULT_CUTOFF: f64 = 10.0;
/// Default RK4 step for dissipative strokes.
pub const DEFAULT_DT: f64 = 0.01;
/// Pairs closer than this in energy get no channel.
pub const DEGENERATE_GAP: f64 = 1e-8;
/// Channels with |S|² below this are dropped.
pub const OVERLAP_FLOOR: f64 = 1e-14;
/// Most negative population tolerated before a step is retried.
pub const POSITIVITY_FLOOR: f64 = -1e-6;
/// Largest pre-renormalization trace error per step.
pub const TRACE_TOLERANCE: f64 = 1e-8;
/// RK4 is stable for the decay modes of a rate equation when dt·rate ≤ 2.78.
const RK4_STABILITY: f64 = 2.5;
const MAX_HALVINGS: u32 = 12;

/// One thermal reservoir.
#[derive(Debug, Clone, PartialEq)]
pub struct BathSpec {
    /// T ≥ 0.
    pub temperature: f64,
    /// α > 0.
    pub coupling: f64,
    /// ω_c > 0.
    pub cutoff: f64,
    pub channels: Vec<CouplingKind>,
}

impl BathSpec {
    /// Default α and cutoff, coupled through both the boson and the qubit.
    pub fn new(temperature: f64) -> Self {
        BathSpec {
            temperature,
            coupling: DEFAULT_COUPLING,
            cutoff: DEFAULT_CUTOFF,
            channels: vec![CouplingKind::Boson, CouplingKind::Qubit],
        }
    }

    pub fn with_channels(mut self, channels: &[CouplingKind]) -> Self {
        self.channels = channels.to_vec();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(Error::invalid("temperature", format!("must be ≥ 0, got {}", self.temperature)));
        }
        if !(self.coupling > 0.0) || !self.coupling.is_finite() {
            return Err(Error::invalid("coupling", format!("must be > 0, got {}", self.coupling)));
        }
        if !(self.cutoff > 0.0) || !self.cutoff.is_finite() {
            return Err(Error::invalid("cutoff", format!("must be > 0, got {}", self.cutoff)));
        }
        if self.channels.is_empty() {
            return Err(Error::invalid("channels", "at least one coupling channel is required"));
        }
        Ok(())
    }

    /// Ohmic spectral density γ(Δ) = π α Δ exp(−|Δ|/ω_c).
    pub fn spectral_density(&self, gap: f64) -> f64 {
        PI * self.coupling * gap * (-gap.abs() / self.cutoff).exp()
    }
}

/// Bose occupation 1/(e^{Δ/T} − 1), zero at T = 0.
pub fn bose_occupation(gap: f64, temperature: f64) -> f64 {
    if temperature == 0.0 {
        0.0
    } else {
        1.0 / (gap / temperature).exp_m1()
    }
}

/// Transition between eigenlevels `upper` (j) and `lower` (k), E_j > E_k.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Channel {
    pub upper: usize,
    pub lower: usize,
    pub kind: CouplingKind,
    pub gap: f64,
    /// |⟨φ_j|X|φ_k⟩|².
    pub overlap_sq: f64,
    /// Γ(1 + n).
    pub rate_down: f64,
    /// Γ n.
    pub rate_up: f64,
}

impl Channel {
    /// |φ_k⟩⟨φ_j| in the lab basis.
    pub fn jump_down(&self, eig: &EigenSystem) -> DMatrix<f64> {
        eig.vectors.column(self.lower) * eig.vectors.column(self.upper).transpose()
    }

    /// |φ_j⟩⟨φ_k| in the lab basis.
    pub fn jump_up(&self, eig: &EigenSystem) -> DMatrix<f64> {
        self.jump_down(eig).transpose()
    }
}

/// All channels of one bath for one eigensystem.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub channels: Vec<Channel>,
    pub temperature: f64,
    /// Level pairs with a gap ≤ [`DEGENERATE_GAP`].
    pub degenerate_pairs_skipped: usize,
    /// Γ_m: total rate out of level m.
    pub out_rates: Vec<f64>,
}

impl ChannelSet {
    pub fn dim(&self) -> usize {
        self.out_rates.len()
    }

    pub fn max_rate(&self) -> f64 {
        self.out_rates.iter().copied().fold(0.0, f64::max)
    }

    fn populations_derivative(&self, p: &[f64], dp: &mut [f64]) {
        dp.iter_mut().for_each(|x| *x = 0.0);
        for c in &self.channels {
            let flow = c.rate_down * p[c.upper] - c.rate_up * p[c.lower];
            dp[c.lower] += flow;
            dp[c.upper] -= flow;
        }
    }
}

/// Channels for the bath's default coupling operators.
pub fn build_channels(eig: &EigenSystem, bath: &BathSpec) -> Result<ChannelSet> {
    let n_max = eig.dim() / 2 - 1;
    let ops = bath
        .channels
        .iter()
        .map(|&k| Ok((k, coupling_operator(k, n_max)?)))
        .collect::<Result<Vec<_>>>()?;
    build_channels_with(eig, bath, &ops)
}

/// Channels for explicit coupling operators.
pub fn build_channels_with(eig: &EigenSystem, bath: &BathSpec, ops: &[(CouplingKind, OperatorMatrix)]) -> Result<ChannelSet> {
    bath.validate()?;
    let dim = eig.dim();
    let mut skipped = 0;
    let mut channels = Vec::new();
    let elements: Vec<(CouplingKind, DMatrix<f64>)> = ops
        .iter()
        .map(|(k, op)| {
            if op.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: op.dim(),
                });
            }
            Ok((*k, eig.vectors.transpose() * op.matrix() * &eig.vectors))
        })
        .collect::<Result<_>>()?;
    for j in 0..dim {
        for k in 0..j {
            let gap = eig.energies[j] - eig.energies[k];
            if gap <= DEGENERATE_GAP {
                skipped += 1;
                continue;
            }
            let gamma = bath.spectral_density(gap);
            let n = bose_occupation(gap, bath.temperature);
            for (kind, s) in &elements {
                let overlap_sq = s[(j, k)] * s[(j, k)];
                if overlap_sq < OVERLAP_FLOOR {
                    continue;
                }
                let rate = gamma * overlap_sq;
                channels.push(Channel {
                    upper: j,
                    lower: k,
                    kind: *kind,
                    gap,
                    overlap_sq,
                    rate_down: rate * (1.0 + n),
                    rate_up: if bath.temperature == 0.0 { 0.0 } else { rate * n },
                });
            }
        }
    }
    let mut out_rates = vec![0.0; dim];
    for c in &channels {
        out_rates[c.upper] += c.rate_down;
        out_rates[c.lower] += c.rate_up;
    }
    Ok(ChannelSet {
        channels,
        temperature: bath.temperature,
        degenerate_pairs_skipped: skipped,
        out_rates,
    })
}

/// Basis in which a state matrix is expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    /// The product basis |q⟩⊗|n⟩.
    Lab,
    /// Eigenbasis of the Hamiltonian the channels were built from.
    Eigen,
}

fn check_dim(rho: &DMatrix<C64>, eig: &EigenSystem, ch: &ChannelSet) -> Result<()> {
    for found in [rho.nrows(), rho.ncols(), ch.dim()] {
        if found != eig.dim() {
            return Err(Error::DimensionMismatch {
                expected: eig.dim(),
                found,
            });
        }
    }
    Ok(())
}

fn generator_eigen(rho: &DMatrix<C64>, energies: &[f64], ch: &ChannelSet) -> DMatrix<C64> {
    let dim = energies.len();
    let mut out = DMatrix::from_fn(dim, dim, |m, n| {
        rho[(m, n)] * C64::new(-0.5 * (ch.out_rates[m] + ch.out_rates[n]), -(energies[m] - energies[n]))
    });
    for c in &ch.channels {
        out[(c.lower, c.lower)] += rho[(c.upper, c.upper)] * c.rate_down;
        out[(c.upper, c.upper)] += rho[(c.lower, c.lower)] * c.rate_up;
    }
    out
}

/// dρ/dt = −i[H, ρ] + Σ_c rate_up D[jump_up] + rate_down D[jump_down].
///
/// `rho` is given, and the result returned, in `frame`. H is the Hamiltonian `eig` diagonalizes.
pub fn liouvillian_apply(rho: &DMatrix<C64>, frame: Frame, eig: &EigenSystem, ch: &ChannelSet) -> Result<DMatrix<C64>> {
    check_dim(rho, eig, ch)?;
    match frame {
        Frame::Eigen => Ok(generator_eigen(rho, &eig.energies, ch)),
        Frame::Lab => {
            let v = eig.vectors.map(C64::from);
            let rho_e = v.transpose() * rho * &v;
            let out = generator_eigen(&rho_e, &eig.energies, ch);
            Ok(&v * out * v.transpose())
        }
    }
}

/// Sample of a dissipative trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub time: f64,
    /// Tr ρH.
    pub energy: f64,
    pub purity: f64,
    /// |Tr ρ − 1| before renormalization.
    pub trace_error: f64,
}

/// Integration settings for dissipative strokes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integrator {
    /// Requested RK4 step; reduced automatically for stability and positivity.
    pub dt: f64,
    /// Observer stride in steps; 0 disables sampling.
    pub stride: usize,
}

impl Default for Integrator {
    fn default() -> Self {
        Integrator {
            dt: DEFAULT_DT,
            stride: 0,
        }
    }
}

impl Integrator {
    pub fn new(dt: f64) -> Self {
        Integrator { dt, stride: 0 }
    }
}

fn rk4_populations(p: &mut [f64], ch: &ChannelSet, dt: f64, buf: &mut [Vec<f64>; 5]) {
    let [k1, k2, k3, k4, tmp] = buf;
    ch.populations_derivative(p, k1);
    for i in 0..p.len() {
        tmp[i] = p[i] + 0.5 * dt * k1[i];
    }
    ch.populations_derivative(tmp, k2);
    for i in 0..p.len() {
        tmp[i] = p[i] + 0.5 * dt * k2[i];
    }
    ch.populations_derivative(tmp, k3);
    for i in 0..p.len() {
        tmp[i] = p[i] + dt * k3[i];
    }
    ch.populations_derivative(tmp, k4);
    for i in 0..p.len() {
        p[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

fn step_count(duration: f64, dt: f64) -> (usize, f64) {
    let n = (duration / dt).ceil().max(1.0) as usize;
    (n, duration / n as f64)
}

/// Evolve an eigenbasis state for `duration`, calling `observe` every `stride` steps.
pub fn propagate_eigen_observed(
    rho: &DMatrix<C64>,
    energies: &[f64],
    ch: &ChannelSet,
    duration: f64,
    integrator: Integrator,
    mut observe: impl FnMut(TrajectoryPoint),
) -> Result<DMatrix<C64>> {
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(Error::invalid("duration", format!("must be ≥ 0, got {duration}")));
    }
    if !(integrator.dt > 0.0) {
        return Err(Error::invalid("dt", format!("must be > 0, got {}", integrator.dt)));
    }
    if duration == 0.0 {
        return Ok(rho.clone());
    }
    let dim = energies.len();
    let p0: Vec<f64> = (0..dim).map(|i| rho[(i, i)].re).collect();
    let mut dt = integrator.dt;
    let max_rate = ch.max_rate();
    if max_rate * dt > RK4_STABILITY {
        dt = RK4_STABILITY / max_rate;
    }
    let mut buf: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; dim]);
    let mut halvings = 0;
    let p = 'attempt: loop {
        let (steps, h) = step_count(duration, dt);
        let mut p = p0.clone();
        for s in 1..=steps {
            rk4_populations(&mut p, ch, h, &mut buf);
            let total: f64 = p.iter().sum();
            let drift = (total - 1.0).abs();
            let min = p.iter().copied().fold(f64::INFINITY, f64::min);
            if min < POSITIVITY_FLOOR || drift > TRACE_TOLERANCE {
                if halvings == MAX_HALVINGS {
                    return Err(if min < POSITIVITY_FLOOR {
                        Error::PositivityLost { min_population: min, dt: h }
                    } else {
                        Error::TraceDrift { drift, dt: h }
                    });
                }
                halvings += 1;
                dt *= 0.5;
                log::debug!("dissipative step halved to {dt:.3e} at step {s}");
                continue 'attempt;
            }
            p.iter_mut().for_each(|x| *x /= total);
            if integrator.stride > 0 && s % integrator.stride == 0 {
                let t = s as f64 * h;
                let coh = coherence_purity(rho, ch, t);
                observe(TrajectoryPoint {
                    time: t,
                    energy: p.iter().zip(energies).map(|(a, e)| a * e).sum(),
                    purity: p.iter().map(|x| x * x).sum::<f64>() + coh,
                    trace_error: drift,
                });
            }
        }
        break p;
    };
    let mut out = DMatrix::from_fn(dim, dim, |m, n| {
        if m == n {
            C64::from(p[m])
        } else {
            rho[(m, n)] * coherence_factor(energies, ch, m, n, duration)
        }
    });
    out = (&out + out.adjoint()) * C64::from(0.5);
    Ok(out)
}

fn coherence_factor(energies: &[f64], ch: &ChannelSet, m: usize, n: usize, t: f64) -> C64 {
    let rate = C64::new(-0.5 * (ch.out_rates[m] + ch.out_rates[n]), -(energies[m] - energies[n]));
    (rate * t).exp()
}

fn coherence_purity(rho: &DMatrix<C64>, ch: &ChannelSet, t: f64) -> f64 {
    let dim = rho.nrows();
    let mut acc = 0.0;
    for n in 0..dim {
        for m in 0..dim {
            if m != n {
                acc += rho[(m, n)].norm_sqr() * (-(ch.out_rates[m] + ch.out_rates[n]) * t).exp();
            }
        }
    }
    acc
}

/// Evolve an eigenbasis state for `duration`.
pub fn propagate_eigen(rho: &DMatrix<C64>, energies: &[f64], ch: &ChannelSet, duration: f64, integrator: Integrator) -> Result<DMatrix<C64>> {
    propagate_eigen_observed(rho, energies, ch, duration, integrator, |_| {})
}

/// Evolve a lab-basis state under the Hamiltonian `eig` diagonalizes and the channels `ch`.
pub fn propagate(rho: &DensityMatrix, eig: &EigenSystem, ch: &ChannelSet, duration: f64, dt: f64) -> Result<DensityMatrix> {
    check_dim(rho.matrix(), eig, ch)?;
    let rho_e = rho.to_basis(&eig.vectors);
    let out = propagate_eigen(&rho_e, &eig.energies, ch, duration, Integrator::new(dt))?;
    let mut rho = DensityMatrix::from_basis(&out, &eig.vectors);
    rho.hermitize();
    Ok(rho)
}

/// Outcome of [`relax`].
#[derive(Debug, Clone)]
pub struct Relaxation {
    pub state: DensityMatrix,
    pub time: f64,
    /// ‖dρ/dt‖_F at the final state.
    pub residual: f64,
    pub converged: bool,
}

/// Propagate in chunks of `chunk` until ‖dρ/dt‖_F < `tolerance` or `max_time` elapses.
pub fn relax(
    rho: &DensityMatrix,
    eig: &EigenSystem,
    ch: &ChannelSet,
    dt: f64,
    chunk: f64,
    tolerance: f64,
    max_time: f64,
) -> Result<Relaxation> {
    check_dim(rho.matrix(), eig, ch)?;
    let mut rho_e = rho.to_basis(&eig.vectors);
    let mut time = 0.0;
    let mut residual = generator_eigen(&rho_e, &eig.energies, ch).norm();
    while residual >= tolerance && time < max_time {
        rho_e = propagate_eigen(&rho_e, &eig.energies, ch, chunk, Integrator::new(dt))?;
        time += chunk;
        residual = generator_eigen(&rho_e, &eig.energies, ch).norm();
    }
    let mut state = DensityMatrix::from_basis(&rho_e, &eig.vectors);
    state.hermitize();
    Ok(Relaxation {
        state,
        time,
        residual,
        converged: residual < tolerance,
    })
}

/// Gibbs state Σ P_n |φ_n⟩⟨φ_n| in the lab basis.
pub fn thermal_state(eig: &EigenSystem, temperature: f64) -> Result<DensityMatrix> {
    let pops = gibbs_populations(eig, temperature)?;
    Ok(DensityMatrix::from_populations(&eig.vectors, &pops.populations))
}
