//! Finite-time Otto cycle with unitary frequency ramps and dressed-state
//! thermalization.
//!
//! One cycle starts from a state at the hot parameters and runs
//!
//! 1. expansion: ω ramps linearly from ω_h to ω_c over τ_ad (unitary),
//! 2. cold isochore: contact with the T_c bath for τ_th,
//! 3. compression: ω ramps back from ω_c to ω_h over τ_ad,
//! 4. hot isochore: contact with the T_h bath for τ_th.
//!
//! Heat is read off at the stroke boundaries, so W = Q_h + Q_c holds
//! up to rounding.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::lindblad::{build_channels, propagate_eigen, BathSpec, ChannelSet, Integrator, DEFAULT_DT};
use crate::operators::{build_hamiltonian, frequency_derivative, parity_sign, CouplingKind, SystemParams};
use crate::otto_ideal::{classify_regime, gibbs_populations, Pairing, Regime};
use crate::spectrum::{eigensystem, EigenSystem, TruncationCheck};
use crate::state::{fidelity, relative_entropy, DensityMatrix};

/// Default unitary step.
pub const DEFAULT_DT_UNITARY: f64 = 0.05;
/// Every ramp uses at least this many midpoint steps.
pub const MIN_UNITARY_STEPS: usize = 1000;
/// Largest ‖U†U − 1‖_F accepted for a stroke propagator.
pub const UNITARITY_TOLERANCE: f64 = 1e-8;
/// Default limit-cycle tolerance on 1 − F.
pub const DEFAULT_LIMIT_TOLERANCE: f64 = 1e-6;
/// Reported friction when the relative entropy diverges.
pub const FRICTION_SENTINEL: f64 = 1e300;

/// Everything needed to run finite-time cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleConfig {
    pub hot: SystemParams,
    pub cold: SystemParams,
    pub t_hot: f64,
    pub t_cold: f64,
    /// τ₁ = τ₃.
    pub tau_adiabatic: f64,
    /// τ₂ = τ₄.
    pub tau_thermal: f64,
    pub dt_unitary: f64,
    pub dt_dissipative: f64,
    /// Stop when 1 − F between consecutive cycle starts drops below this.
    pub limit_cycle_tolerance: f64,
    pub max_cycles: usize,
    pub bath_coupling: f64,
    pub bath_cutoff: f64,
    pub bath_channels: Vec<CouplingKind>,
    /// Level pairing of the quasistatic reference states.
    pub pairing: Pairing,
    pub truncation: TruncationCheck,
}

impl CycleConfig {
    /// Default numerics for the given media, temperatures and stroke times.
    pub fn new(hot: SystemParams, cold: SystemParams, t_hot: f64, t_cold: f64, tau_adiabatic: f64, tau_thermal: f64) -> Self {
        let bath = BathSpec::new(t_hot);
        CycleConfig {
            hot,
            cold,
            t_hot,
            t_cold,
            tau_adiabatic,
            tau_thermal,
            dt_unitary: DEFAULT_DT_UNITARY,
            dt_dissipative: DEFAULT_DT,
            limit_cycle_tolerance: DEFAULT_LIMIT_TOLERANCE,
            max_cycles: 50,
            bath_coupling: bath.coupling,
            bath_cutoff: bath.cutoff,
            bath_channels: bath.channels,
            pairing: Pairing::EnergyIndex,
            truncation: TruncationCheck::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hot.validate()?;
        self.cold.validate()?;
        let (h, c) = (&self.hot, &self.cold);
        if h.n_max != c.n_max || h.lambda1 != c.lambda1 || h.lambda2 != c.lambda2 || h.u != c.u {
            return Err(Error::invalid("cold", "hot and cold media may differ only in omega and delta"));
        }
        if (h.detuning() - c.detuning()).abs() > 1e-12 {
            return Err(Error::invalid("delta", "detuning Δ − ω must be equal in both media"));
        }
        for (name, t) in [("T_h", self.t_hot), ("T_c", self.t_cold)] {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::invalid(name, format!("must be > 0, got {t}")));
            }
        }
        for (name, x) in [
            ("tau_adiabatic", self.tau_adiabatic),
            ("tau_thermal", self.tau_thermal),
        ] {
            if !(x >= 0.0) || !x.is_finite() {
                return Err(Error::invalid(name, format!("must be ≥ 0, got {x}")));
            }
        }
        for (name, x) in [
            ("dt_unitary", self.dt_unitary),
            ("dt_dissipative", self.dt_dissipative),
            ("limit_cycle_tolerance", self.limit_cycle_tolerance),
        ] {
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::invalid(name, format!("must be > 0, got {x}")));
            }
        }
        if self.max_cycles == 0 {
            return Err(Error::invalid("max_cycles", "must be ≥ 1"));
        }
        self.bath(self.t_hot).validate()
    }

    pub fn bath(&self, temperature: f64) -> BathSpec {
        BathSpec {
            temperature,
            coupling: self.bath_coupling,
            cutoff: self.bath_cutoff,
            channels: self.bath_channels.clone(),
        }
    }

    pub fn cycle_time(&self) -> f64 {
        2.0 * (self.tau_adiabatic + self.tau_thermal)
    }
}

/// Unitary propagator of a linear frequency ramp, stored as parity blocks.
#[derive(Debug, Clone)]
pub struct StrokePropagator {
    dim: usize,
    blocks: [(Vec<usize>, DMatrix<C64>); 2],
    pub steps: usize,
}

impl StrokePropagator {
    /// The full lab-basis matrix.
    pub fn matrix(&self) -> DMatrix<C64> {
        let mut u = DMatrix::zeros(self.dim, self.dim);
        for (idx, b) in &self.blocks {
            for (a, &i) in idx.iter().enumerate() {
                for (c, &j) in idx.iter().enumerate() {
                    u[(i, j)] = b[(a, c)];
                }
            }
        }
        u
    }

    /// ‖U†U − 1‖_F.
    pub fn unitarity_defect(&self) -> f64 {
        self.blocks
            .iter()
            .map(|(_, b)| (b.adjoint() * b - DMatrix::identity(b.nrows(), b.ncols())).norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    /// U ρ U†.
    pub fn apply(&self, rho: &DensityMatrix) -> DensityMatrix {
        let u = self.matrix();
        let mut out = DensityMatrix::from_raw(&u * rho.matrix() * u.adjoint());
        out.hermitize();
        out
    }
}

fn exp_minus_i(m: &DMatrix<f64>, dt: f64) -> DMatrix<C64> {
    let eig = m.clone().symmetric_eigen();
    let d = m.nrows();
    let phased = DMatrix::from_fn(d, d, |i, k| {
        let e = eig.eigenvalues[k] * dt;
        C64::new(e.cos(), -e.sin()) * eig.eigenvectors[(i, k)]
    });
    phased * eig.eigenvectors.transpose().map(C64::from)
}

/// Time-ordered product of midpoint exponentials exp(−i H(t + dt/2) dt) for
/// ω ramping linearly from `start.omega` to `end.omega` over `duration`,
/// with Δ − ω and the couplings held fixed.
pub fn stroke_propagator(start: &SystemParams, end: &SystemParams, duration: f64, dt: f64) -> Result<StrokePropagator> {
    if !(duration >= 0.0) || !(dt > 0.0) {
        return Err(Error::invalid("duration", format!("need duration ≥ 0 and dt > 0, got {duration}, {dt}")));
    }
    let n_max = start.n_max;
    let dim = start.dim();
    let derivative = frequency_derivative(n_max);
    // H(ω) = H_fixed + ω·D with D = a†a + σz/2
    let fixed = build_hamiltonian(start)?.into_matrix() - derivative.matrix() * start.omega;
    let steps = if duration == 0.0 {
        0
    } else {
        MIN_UNITARY_STEPS.max((duration / dt).ceil() as usize)
    };
    let h = if steps == 0 { 0.0 } else { duration / steps as f64 };
    let sectors: [Vec<usize>; 2] = [
        (0..dim).filter(|&i| parity_sign(i, n_max) > 0.0).collect(),
        (0..dim).filter(|&i| parity_sign(i, n_max) < 0.0).collect(),
    ];
    let blocks = sectors.map(|idx| {
        let k = idx.len();
        let f = DMatrix::from_fn(k, k, |a, b| fixed[(idx[a], idx[b])]);
        let d: Vec<f64> = idx.iter().map(|&i| derivative.matrix()[(i, i)]).collect();
        let mut u = DMatrix::<C64>::identity(k, k);
        for s in 0..steps {
            let frac = (s as f64 + 0.5) / steps as f64;
            let omega = start.omega + (end.omega - start.omega) * frac;
            let mut m = f.clone();
            for a in 0..k {
                m[(a, a)] += omega * d[a];
            }
            u = exp_minus_i(&m, h) * u;
        }
        (idx, u)
    });
    let prop = StrokePropagator { dim, blocks, steps };
    let defect = prop.unitarity_defect();
    if defect > UNITARITY_TOLERANCE {
        return Err(Error::NonUnitary { deviation: defect, steps });
    }
    Ok(prop)
}

/// Evolve `rho` through a ramp from `start` to `end` lasting `duration`.
pub fn adiabatic_stroke(rho: &DensityMatrix, start: &SystemParams, end: &SystemParams, duration: f64, dt: f64) -> Result<DensityMatrix> {
    if start.n_max != end.n_max || start.lambda1 != end.lambda1 || start.lambda2 != end.lambda2 || start.u != end.u {
        return Err(Error::invalid("end", "ramp endpoints may differ only in omega and delta"));
    }
    if rho.dim() != start.dim() {
        return Err(Error::DimensionMismatch {
            expected: start.dim(),
            found: rho.dim(),
        });
    }
    Ok(stroke_propagator(start, end, duration, dt)?.apply(rho))
}

/// Σ_n ⟨φ_n^start|ρ|φ_n^start⟩ |φ_m^end⟩⟨φ_m^end| with m paired to n.
pub fn quasistatic_map(rho: &DensityMatrix, start: &EigenSystem, end: &EigenSystem, pairing: Pairing) -> Result<DensityMatrix> {
    let map = pairing.level_map(start, end)?;
    let pops = rho.populations_in(&start.vectors);
    let mut carried = vec![0.0; end.dim()];
    for (n, &m) in map.iter().enumerate() {
        carried[m] = pops[n];
    }
    Ok(DensityMatrix::from_populations(&end.vectors, &carried))
}

/// Friction work of one stroke.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Friction {
    /// T·D(ρ‖ρ_qe), or [`FRICTION_SENTINEL`] on overflow.
    pub value: f64,
    pub overflow: bool,
}

/// (1/β) D(ρ‖ρ_qe).
pub fn friction_work(rho: &DensityMatrix, rho_qe: &DensityMatrix, beta: f64) -> Friction {
    let d = relative_entropy(rho, rho_qe);
    if d.support_mismatch {
        Friction {
            value: FRICTION_SENTINEL,
            overflow: true,
        }
    } else {
        Friction {
            value: d.value / beta,
            overflow: false,
        }
    }
}

/// Solve x·tanh(x) = y for x ≥ 0 by bisection to machine precision.
fn inverse_x_tanh_x(y: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = f64::max(10.0, y);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return mid;
        }
        if mid * mid.tanh() < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Uncertainty-relation bound f(Σ) = csch²(g(Σ/2)), g the inverse of x·tanh x.
pub fn tur_bound(sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid("sigma", format!("must be positive and finite, got {sigma}")));
    }
    let x = inverse_x_tanh_x(0.5 * sigma);
    Ok(1.0 / x.sinh().powi(2))
}

/// States at the four stroke boundaries of one cycle.
#[derive(Debug, Clone)]
pub struct StageStates {
    pub start: DensityMatrix,
    /// ρ(τ₁).
    pub after_expansion: DensityMatrix,
    /// ρ(τ₂).
    pub after_cold: DensityMatrix,
    /// ρ(τ₃).
    pub after_compression: DensityMatrix,
    /// ρ(τ₄).
    pub after_hot: DensityMatrix,
}

/// Per-cycle figures of merit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleRecord {
    pub q_hot: f64,
    pub q_cold: f64,
    pub work: f64,
    /// W/Q_h when Q_h > 0.
    pub efficiency: Option<f64>,
    /// W per total cycle time.
    pub power: f64,
    pub entropy_production: f64,
    pub friction_work_compression: f64,
    pub friction_work_expansion: f64,
    /// Some friction term hit a support mismatch.
    pub friction_overflow: bool,
    /// F between this cycle's start and end states.
    pub fidelity_to_previous: f64,
    /// Cycles run so far, this one included.
    pub cycles_to_limit: usize,
    /// None when the sign pattern is unphysical, which only happens in transients.
    pub regime: Option<Regime>,
}

/// −β_h[E_h(ρ₄) − E_h(ρ₃)] − β_c[E_c(ρ₂) − E_c(ρ₁)].
pub fn entropy_production(stages: &StageStates, hot: &EigenSystem, cold: &EigenSystem, beta_hot: f64, beta_cold: f64) -> f64 {
    let q_hot = energy(&stages.after_hot, hot) - energy(&stages.after_compression, hot);
    let q_cold = energy(&stages.after_cold, cold) - energy(&stages.after_expansion, cold);
    -beta_hot * q_hot - beta_cold * q_cold
}

fn energy(rho: &DensityMatrix, eig: &EigenSystem) -> f64 {
    rho.populations_in(&eig.vectors)
        .iter()
        .zip(&eig.energies)
        .map(|(p, e)| p * e)
        .sum()
}

fn isochore(rho: &DensityMatrix, eig: &EigenSystem, ch: &ChannelSet, duration: f64, dt: f64) -> Result<DensityMatrix> {
    let rho_e = rho.to_basis(&eig.vectors);
    let out = propagate_eigen(&rho_e, &eig.energies, ch, duration, Integrator::new(dt))?;
    let mut rho = DensityMatrix::from_basis(&out, &eig.vectors);
    rho.hermitize();
    Ok(rho)
}

/// Precomputed spectra, channels and stroke propagators for one [`CycleConfig`].
#[derive(Debug, Clone)]
pub struct CycleEngine {
    pub config: CycleConfig,
    pub hot_eigen: EigenSystem,
    pub cold_eigen: EigenSystem,
    pub hot_channels: ChannelSet,
    pub cold_channels: ChannelSet,
    pub expansion: StrokePropagator,
    pub compression: StrokePropagator,
}

/// Result of [`CycleEngine::run_cycle`].
#[derive(Debug, Clone)]
pub struct CycleOutcome {
    pub stages: StageStates,
    pub record: CycleRecord,
}

/// Result of [`CycleEngine::find_limit_cycle`].
#[derive(Debug, Clone)]
pub struct LimitCycle {
    pub stages: StageStates,
    pub record: CycleRecord,
    /// 1-based: entry N − 1 is F(ρ^(N−1), ρ^(N)).
    pub fidelity_trace: Vec<f64>,
    pub converged: bool,
}

impl LimitCycle {
    pub fn state(&self) -> &DensityMatrix {
        &self.stages.after_hot
    }
}

impl CycleEngine {
    pub fn new(config: CycleConfig) -> Result<Self> {
        config.validate()?;
        let hot_eigen = eigensystem(&config.hot, &config.truncation)?;
        let cold_eigen = eigensystem(&config.cold, &config.truncation)?;
        Self::with_spectra(config, hot_eigen, cold_eigen)
    }

    /// Reuse spectra computed elsewhere; they must belong to `config.hot` and `config.cold`.
    pub fn with_spectra(config: CycleConfig, hot_eigen: EigenSystem, cold_eigen: EigenSystem) -> Result<Self> {
        config.validate()?;
        let hot_channels = build_channels(&hot_eigen, &config.bath(config.t_hot))?;
        let cold_channels = build_channels(&cold_eigen, &config.bath(config.t_cold))?;
        let expansion = stroke_propagator(&config.hot, &config.cold, config.tau_adiabatic, config.dt_unitary)?;
        let compression = stroke_propagator(&config.cold, &config.hot, config.tau_adiabatic, config.dt_unitary)?;
        Ok(CycleEngine {
            config,
            hot_eigen,
            cold_eigen,
            hot_channels,
            cold_channels,
            expansion,
            compression,
        })
    }

    /// Gibbs state of the hot medium at T_h.
    pub fn hot_thermal_state(&self) -> Result<DensityMatrix> {
        let pops = gibbs_populations(&self.hot_eigen, self.config.t_hot)?;
        Ok(DensityMatrix::from_populations(&self.hot_eigen.vectors, &pops.populations))
    }

    /// One cycle from `start`; `cycle_index` is recorded as `cycles_to_limit`.
    pub fn run_cycle(&self, start: &DensityMatrix, cycle_index: usize) -> Result<CycleOutcome> {
        let cfg = &self.config;
        if start.dim() != self.hot_eigen.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.hot_eigen.dim(),
                found: start.dim(),
            });
        }
        let after_expansion = self.expansion.apply(start);
        let after_cold = isochore(&after_expansion, &self.cold_eigen, &self.cold_channels, cfg.tau_thermal, cfg.dt_dissipative)
            .map_err(Error::in_stroke("cold isochore"))?;
        let after_compression = self.compression.apply(&after_cold);
        let after_hot = isochore(&after_compression, &self.hot_eigen, &self.hot_channels, cfg.tau_thermal, cfg.dt_dissipative)
            .map_err(Error::in_stroke("hot isochore"))?;

        let q_hot = energy(&after_hot, &self.hot_eigen) - energy(&after_compression, &self.hot_eigen);
        let q_cold = energy(&after_cold, &self.cold_eigen) - energy(&after_expansion, &self.cold_eigen);
        let work = q_hot + q_cold;
        let (beta_h, beta_c) = (1.0 / cfg.t_hot, 1.0 / cfg.t_cold);

        let qe_expansion = quasistatic_map(start, &self.hot_eigen, &self.cold_eigen, cfg.pairing)?;
        let qe_compression = quasistatic_map(&after_cold, &self.cold_eigen, &self.hot_eigen, cfg.pairing)?;
        let fric_exp = friction_work(&after_expansion, &qe_expansion, beta_c);
        let fric_comp = friction_work(&after_compression, &qe_compression, beta_h);

        let stages = StageStates {
            start: start.clone(),
            after_expansion,
            after_cold,
            after_compression,
            after_hot,
        };
        let record = CycleRecord {
            q_hot,
            q_cold,
            work,
            efficiency: (q_hot > 0.0).then(|| work / q_hot),
            power: work / cfg.cycle_time(),
            entropy_production: -beta_h * q_hot - beta_c * q_cold,
            friction_work_compression: fric_comp.value,
            friction_work_expansion: fric_exp.value,
            friction_overflow: fric_exp.overflow || fric_comp.overflow,
            fidelity_to_previous: fidelity(&stages.start, &stages.after_hot),
            cycles_to_limit: cycle_index,
            regime: classify_regime(q_hot, q_cold, work).ok(),
        };
        Ok(CycleOutcome { stages, record })
    }

    /// Iterate cycles from `initial` (Gibbs at the hot parameters when None)
    /// until 1 − F < tolerance or `max_cycles` is reached.
    pub fn find_limit_cycle(&self, initial: Option<DensityMatrix>) -> Result<LimitCycle> {
        let mut rho = match initial {
            Some(r) => r,
            None => self.hot_thermal_state()?,
        };
        let mut trace = Vec::new();
        let mut n = 1;
        loop {
            let out = self.run_cycle(&rho, n)?;
            let f = out.record.fidelity_to_previous;
            trace.push(f);
            let converged = 1.0 - f < self.config.limit_cycle_tolerance;
            if converged || n == self.config.max_cycles {
                return Ok(LimitCycle {
                    stages: out.stages,
                    record: out.record,
                    fidelity_trace: trace,
                    converged,
                });
            }
            rho = out.stages.after_hot;
            n += 1;
        }
    }
}

/// [`CycleEngine::run_cycle`] without reusing an engine.
pub fn run_cycle(start: &DensityMatrix, cfg: &CycleConfig) -> Result<(DensityMatrix, CycleRecord)> {
    let out = CycleEngine::new(cfg.clone())?.run_cycle(start, 1)?;
    Ok((out.stages.after_hot, out.record))
}

/// [`CycleEngine::find_limit_cycle`] from the hot Gibbs state.
pub fn find_limit_cycle(cfg: &CycleConfig) -> Result<LimitCycle> {
    CycleEngine::new(cfg.clone())?.find_limit_cycle(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::thermal_state;
    use crate::otto_ideal::{ideal_cycle_from_spectra, IdealOptions};
    use crate::state::trace_distance;
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn media(l1: f64, l2: f64, u: f64, n_max: usize) -> (SystemParams, SystemParams) {
        (
            SystemParams::resonant(2.0, 0.0, u, l1, l2).unwrap().with_n_max(n_max),
            SystemParams::resonant(1.0, 0.0, u, l1, l2).unwrap().with_n_max(n_max),
        )
    }

    fn config(l1: f64, l2: f64, u: f64, n_max: usize, tau_ad: f64, tau_th: f64) -> CycleConfig {
        let (h, c) = media(l1, l2, u, n_max);
        let mut cfg = CycleConfig::new(h, c, 0.5, 0.1, tau_ad, tau_th);
        cfg.truncation = TruncationCheck::disabled();
        cfg
    }

    fn eig(p: &SystemParams) -> EigenSystem {
        eigensystem(p, &TruncationCheck::disabled()).unwrap()
    }

    #[test]
    fn tur_known_values() {
        assert_abs_diff_eq!(tur_bound(2.0 * 1f64.tanh()).unwrap(), 1.0 / 1f64.sinh().powi(2), epsilon = 1e-9);
        assert_abs_diff_eq!(tur_bound(2.0 * 0.5 * 0.5f64.tanh()).unwrap(), 3.682694, epsilon = 1e-6);
        let a = tur_bound(10.0).unwrap();
        let b = tur_bound(100.0).unwrap();
        assert!(a > b && b > 0.0);
        assert!(tur_bound(0.0).is_err());
        assert!(tur_bound(-1.0).is_err());
    }

    #[test]
    fn stroke_is_unitary_and_conserves_spectrum() {
        let (h, c) = media(0.5, 0.5, 0.2, 10);
        let mut rng = StdRng::seed_from_u64(1);
        let pops: Vec<f64> = (0..h.dim()).map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f64 = pops.iter().sum();
        let pops: Vec<f64> = pops.iter().map(|p| p / total).collect();
        let rho = DensityMatrix::from_populations(&eig(&h).vectors, &pops);
        let out = adiabatic_stroke(&rho, &h, &c, 3.0, 0.05).unwrap();
        for (a, b) in rho.eigenvalues().iter().zip(out.eigenvalues()) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-8);
        }
        assert!(stroke_propagator(&h, &c, 3.0, 0.05).unwrap().unitarity_defect() < 1e-10);
    }

    #[test]
    fn decoupled_ramp_keeps_populations() {
        let (h, c) = media(0.0, 0.0, 0.0, 6);
        let h = SystemParams { delta: 2.3, ..h };
        let c = SystemParams { delta: 1.3, ..c };
        let rho = thermal_state(&eig(&h), 0.8).unwrap();
        let out = adiabatic_stroke(&rho, &h, &c, 0.7, 0.05).unwrap();
        for i in 0..h.dim() {
            assert_abs_diff_eq!(out.matrix()[(i, i)].re, rho.matrix()[(i, i)].re, epsilon = 1e-12);
        }
    }

    #[test]
    fn sudden_quench_leaves_state_unchanged() {
        let (h, c) = media(0.5, 0.3, 0.1, 10);
        let rho = thermal_state(&eig(&h), 0.5).unwrap();
        // first order: ρ(τ) ≈ ρ − i (ω_c − ω_h) τ/2 [D, ρ] because [H_h, ρ] = 0
        let tau = 1e-3;
        let out = adiabatic_stroke(&rho, &h, &c, tau, 0.05).unwrap();
        let d = frequency_derivative(h.n_max).matrix().map(C64::from);
        let comm = &d * rho.matrix() - rho.matrix() * &d;
        let first_order = comm * C64::new(0.0, (c.omega - h.omega) * tau / 2.0);
        assert!((out.matrix() - (rho.matrix() - &first_order)).norm() < 1e-6);
        assert!((out.matrix() - rho.matrix()).norm() <= first_order.norm() * 1.01);
    }

    #[test]
    fn slow_ramp_follows_the_quasistatic_map() {
        let (h, c) = media(0.3, 0.1, 0.0, 12);
        let (eh, ec) = (eig(&h), eig(&c));
        let rho = thermal_state(&eh, 0.5).unwrap();
        let out = adiabatic_stroke(&rho, &h, &c, 500.0, 0.05).unwrap();
        let start = rho.populations_in(&eh.vectors);
        let end = out.populations_in(&ec.vectors);
        for (a, b) in start.iter().zip(&end) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-4);
        }
        let qe = quasistatic_map(&rho, &eh, &ec, Pairing::EnergyIndex).unwrap();
        assert!(friction_work(&out, &qe, 1.0 / 0.1).value < 1e-6);
    }

    #[test]
    fn quasistatic_map_properties() {
        let (h, c) = media(0.0, 0.0, 0.0, 20);
        let (eh, ec) = (eig(&h), eig(&c));
        let t = 0.6;
        let mapped = quasistatic_map(&thermal_state(&eh, t).unwrap(), &eh, &ec, Pairing::EnergyIndex).unwrap();
        let expected = thermal_state(&ec, t / 2.0).unwrap();
        assert!(trace_distance(&mapped, &expected) < 1e-12);

        let (h, c) = media(0.3, 0.2, 0.1, 8);
        let (eh, ec) = (eig(&h), eig(&c));
        let mut rng = StdRng::seed_from_u64(9);
        let pops: Vec<f64> = (0..h.dim()).map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f64 = pops.iter().sum();
        let rho = DensityMatrix::from_populations(&eh.vectors, &pops.iter().map(|p| p / total).collect::<Vec<_>>());
        let there = quasistatic_map(&rho, &eh, &ec, Pairing::EnergyIndex).unwrap();
        let back = quasistatic_map(&there, &ec, &eh, Pairing::EnergyIndex).unwrap();
        assert!(trace_distance(&back, &rho) < 1e-12);
        let dephased = quasistatic_map(&rho, &eh, &eh, Pairing::EnergyIndex).unwrap();
        assert!(trace_distance(&dephased, &rho) < 1e-12);
    }

    #[test]
    fn friction_of_identical_states_is_zero() {
        let (h, _) = media(0.3, 0.2, 0.0, 8);
        let rho = thermal_state(&eig(&h), 0.5).unwrap();
        let f = friction_work(&rho, &rho, 2.0);
        assert!(f.value.abs() < 1e-12 && !f.overflow);
    }

    #[test]
    fn no_thermal_contact_means_no_heat() {
        let cfg = config(0.3, 0.2, 0.0, 10, 2.0, 0.0);
        let engine = CycleEngine::new(cfg).unwrap();
        let start = engine.hot_thermal_state().unwrap();
        let out = engine.run_cycle(&start, 1).unwrap();
        assert_abs_diff_eq!(out.record.q_hot, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.record.q_cold, 0.0, epsilon = 1e-12);
        let u = engine.compression.matrix() * engine.expansion.matrix();
        let expected = &u * start.matrix() * u.adjoint();
        assert!((out.stages.after_hot.matrix() - expected).norm() < 1e-10);
    }

    #[test]
    fn first_law_and_stage_bookkeeping() {
        let cfg = config(0.5, 0.5, 0.0, 10, 5.0, 300.0);
        let engine = CycleEngine::new(cfg.clone()).unwrap();
        let start = engine.hot_thermal_state().unwrap();
        let out = engine.run_cycle(&start, 1).unwrap();
        let r = out.record;
        assert!((r.work - (r.q_hot + r.q_cold)).abs() < 1e-9);
        let sigma = entropy_production(&out.stages, &engine.hot_eigen, &engine.cold_eigen, 2.0, 10.0);
        assert_abs_diff_eq!(sigma, r.entropy_production, epsilon = 1e-12);
        assert!(r.friction_work_compression >= -1e-12 && r.friction_work_expansion >= -1e-12);
        assert_abs_diff_eq!(r.power, r.work / cfg.cycle_time(), epsilon = 1e-15);
    }

    #[test]
    fn long_strokes_approach_the_ideal_cycle() {
        let cfg = config(0.3, 0.1, 0.0, 10, 200.0, 8000.0);
        let engine = CycleEngine::new(cfg.clone()).unwrap();
        let lc = engine.find_limit_cycle(None).unwrap();
        let ideal = ideal_cycle_from_spectra(&engine.hot_eigen, &engine.cold_eigen, 2.0, 1.0, 0.5, 0.1, Pairing::EnergyIndex).unwrap();
        assert!((lc.record.work - ideal.work).abs() / ideal.work < 0.01);
        let ideal_sigma = -ideal.q_hot / 0.5 - ideal.q_cold / 0.1;
        assert!((lc.record.entropy_production - ideal_sigma).abs() < 0.05 * ideal_sigma.abs() + 1e-6);
        let _ = IdealOptions::default();
    }

    #[test]
    fn equal_temperatures_only_dissipate() {
        let mut cfg = config(0.3, 0.1, 0.0, 8, 200.0, 6000.0);
        cfg.t_cold = 0.5;
        let lc = find_limit_cycle(&cfg).unwrap();
        assert!(lc.converged);
        let r = lc.record;
        // one bath temperature: Σ = −W/T, and the second law forbids extracting work
        assert_abs_diff_eq!(r.entropy_production, -r.work / 0.5, epsilon = 1e-12);
        assert!(r.entropy_production >= -1e-9);
        assert!(r.work <= 1e-12);
    }

    #[test]
    fn limit_cycle_forgets_the_initial_state() {
        let mut cfg = config(0.4, 0.2, 0.0, 8, 5.0, 1500.0);
        // 1 − F is quadratic in the state distance
        cfg.limit_cycle_tolerance = 1e-12;
        let engine = CycleEngine::new(cfg).unwrap();
        let a = engine.find_limit_cycle(None).unwrap();
        let b = engine
            .find_limit_cycle(Some(DensityMatrix::maximally_mixed(engine.hot_eigen.dim())))
            .unwrap();
        assert!(a.converged && b.converged);
        assert!((a.record.work - b.record.work).abs() < 1e-5);
        assert!((a.record.q_hot - b.record.q_hot).abs() < 1e-5);
        // Carnot efficiency identity at the limit cycle
        let r = a.record;
        if let Some(eta) = r.efficiency {
            let carnot = 1.0 - 0.1 / 0.5;
            assert_abs_diff_eq!(eta, carnot - r.entropy_production / (10.0 * r.q_hot), epsilon = 1e-9);
            assert!(eta <= carnot);
        }
    }

    #[test]
    fn mismatched_media_rejected() {
        let (h, _) = media(0.3, 0.2, 0.0, 8);
        let other = SystemParams::resonant(1.0, 0.0, 0.0, 0.4, 0.2).unwrap().with_n_max(8);
        let mut cfg = CycleConfig::new(h, other, 0.5, 0.1, 1.0, 1.0);
        assert!(cfg.validate().is_err());
        cfg.cold = SystemParams::resonant(1.0, 0.5, 0.0, 0.3, 0.2).unwrap().with_n_max(8);
        assert!(cfg.validate().is_err());
    }
}
