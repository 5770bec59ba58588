//! Parameter grids over the spectrum, the ideal cycle and the finite-time cycle.
//!
//! Grid points are evaluated concurrently and gathered in row-major order
//! (last axis fastest), so the output never depends on scheduling. A point
//! that fails is kept as a row with its error in the `status` column.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lindblad::{DEFAULT_COUPLING, DEFAULT_CUTOFF, DEFAULT_DT};
use crate::operators::{CouplingKind, SystemParams, DEFAULT_N_MAX};
use crate::otto_finite::{tur_bound, CycleConfig, CycleEngine, DEFAULT_DT_UNITARY, DEFAULT_LIMIT_TOLERANCE};
use crate::otto_ideal::{ideal_cycle_from_spectra, Pairing, Regime};
use crate::spectrum::{eigensystem, EigenSystem, Parity, TruncationCheck, CROSSING_GAP};
use crate::state::DensityMatrix;
use crate::table::{Cell, Table};

/// A swept parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    Lambda1,
    Lambda2,
    /// λ₁ = λ₂ = value.
    LambdaLocked,
    U,
    THot,
    TCold,
    /// δ in Δ = ω + δ.
    Detuning,
    /// τ₁ = τ₃ (finite mode only).
    TauAdiabatic,
    /// τ₂ = τ₄ (finite mode only).
    TauThermal,
}

impl Axis {
    pub const ALL: [Axis; 9] = [
        Axis::Lambda1,
        Axis::Lambda2,
        Axis::LambdaLocked,
        Axis::U,
        Axis::THot,
        Axis::TCold,
        Axis::Detuning,
        Axis::TauAdiabatic,
        Axis::TauThermal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Axis::Lambda1 => "lambda1",
            Axis::Lambda2 => "lambda2",
            Axis::LambdaLocked => "lambda_locked",
            Axis::U => "u",
            Axis::THot => "t_hot",
            Axis::TCold => "t_cold",
            Axis::Detuning => "detuning",
            Axis::TauAdiabatic => "tau_ad",
            Axis::TauThermal => "tau_th",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Axis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::invalid("axis", format!("unknown axis `{s}`")))
    }
}

/// Values taken along one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisRange {
    pub axis: Axis,
    pub values: Vec<f64>,
}

impl AxisRange {
    /// `count` evenly spaced values from `start` to `stop` inclusive.
    pub fn linspace(axis: Axis, start: f64, stop: f64, count: usize) -> Self {
        let values = match count {
            0 => Vec::new(),
            1 => vec![start],
            _ => (0..count)
                .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
                .collect(),
        };
        AxisRange { axis, values }
    }
}

/// Optional anisotropy constraint between the two couplings.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum CouplingLock {
    #[default]
    None,
    /// λ₂ = r·λ₁.
    Lambda2FromLambda1(f64),
    /// λ₁ = r·λ₂.
    Lambda1FromLambda2(f64),
}

/// Parameters not on any axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedParams {
    pub omega_hot: f64,
    pub omega_cold: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub u: f64,
    pub detuning: f64,
    pub t_hot: f64,
    pub t_cold: f64,
    pub n_max: usize,
}

impl Default for FixedParams {
    fn default() -> Self {
        FixedParams {
            omega_hot: 2.0,
            omega_cold: 1.0,
            lambda1: 0.0,
            lambda2: 0.0,
            u: 0.0,
            detuning: 0.0,
            t_hot: 0.5,
            t_cold: 0.1,
            n_max: DEFAULT_N_MAX,
        }
    }
}

/// Numerics of finite-time points.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSettings {
    pub tau_adiabatic: f64,
    pub tau_thermal: f64,
    pub dt_unitary: f64,
    pub dt_dissipative: f64,
    pub limit_cycle_tolerance: f64,
    pub max_cycles: usize,
    pub bath_coupling: f64,
    pub bath_cutoff: f64,
    pub bath_channels: Vec<CouplingKind>,
}

impl Default for FiniteSettings {
    fn default() -> Self {
        FiniteSettings {
            tau_adiabatic: 10.0,
            tau_thermal: 2000.0,
            dt_unitary: DEFAULT_DT_UNITARY,
            dt_dissipative: DEFAULT_DT,
            limit_cycle_tolerance: DEFAULT_LIMIT_TOLERANCE,
            max_cycles: 50,
            bath_coupling: DEFAULT_COUPLING,
            bath_cutoff: DEFAULT_CUTOFF,
            bath_channels: vec![CouplingKind::Boson, CouplingKind::Qubit],
        }
    }
}

/// What to evaluate at each grid point.
#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    /// Lowest `levels` energies of the cold medium relative to its ground state.
    Spectrum { levels: usize },
    Ideal,
    /// Limit-cycle record of each point.
    Finite(FiniteSettings),
    /// One row per cycle of a fixed-length run, without early stopping.
    Trajectory {
        settings: FiniteSettings,
        cycles: usize,
        initial: InitialState,
    },
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Spectrum { .. } => "spectrum",
            Mode::Ideal => "ideal",
            Mode::Finite(_) => "finite",
            Mode::Trajectory { .. } => "trajectory",
        }
    }

    /// Cycle numerics of the time-resolved modes.
    pub fn finite_settings(&self) -> Option<&FiniteSettings> {
        match self {
            Mode::Finite(s) | Mode::Trajectory { settings: s, .. } => Some(s),
            _ => None,
        }
    }
}

/// First state of an iterated cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialState {
    /// Gibbs state of the hot medium at the hot temperature.
    #[default]
    GibbsHot,
    MaximallyMixed,
}

impl InitialState {
    pub fn as_str(self) -> &'static str {
        match self {
            InitialState::GibbsHot => "gibbs_hot",
            InitialState::MaximallyMixed => "maximally_mixed",
        }
    }
}

impl FromStr for InitialState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gibbs_hot" => Ok(InitialState::GibbsHot),
            "maximally_mixed" => Ok(InitialState::MaximallyMixed),
            _ => Err(Error::invalid("initial", format!("unknown initial state `{s}`"))),
        }
    }
}

/// A full sweep description.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// One or two axes (none for [`run_point`]); the last varies fastest.
    pub axes: Vec<AxisRange>,
    pub fixed: FixedParams,
    pub lock: CouplingLock,
    pub mode: Mode,
    pub pairing: Pairing,
    pub truncation: TruncationCheck,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
}

impl SweepSpec {
    pub fn new(axes: Vec<AxisRange>, mode: Mode) -> Self {
        SweepSpec {
            axes,
            fixed: FixedParams::default(),
            lock: CouplingLock::None,
            mode,
            pairing: Pairing::EnergyIndex,
            truncation: TruncationCheck::default(),
            workers: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::invalid("axes", "need one or two axes, got 0"));
        }
        self.validate_grid()
    }

    fn validate_grid(&self) -> Result<()> {
        if self.axes.len() > 2 {
            return Err(Error::invalid("axes", format!("need one or two axes, got {}", self.axes.len())));
        }
        for (i, a) in self.axes.iter().enumerate() {
            if a.values.len() < 2 {
                return Err(Error::invalid("axes", format!("axis `{}` needs at least 2 grid values", a.axis)));
            }
            if a.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("axes", format!("axis `{}` has non-finite values", a.axis)));
            }
            if self.axes[..i].iter().any(|b| b.axis == a.axis) {
                return Err(Error::invalid("axes", format!("axis `{}` given twice", a.axis)));
            }
            let timing = matches!(a.axis, Axis::TauAdiabatic | Axis::TauThermal);
            if timing && self.mode.finite_settings().is_none() {
                return Err(Error::invalid("axes", format!("axis `{}` needs finite mode", a.axis)));
            }
        }
        let on = |x: Axis| self.axes.iter().any(|a| a.axis == x);
        let lambda_axes = [Axis::Lambda1, Axis::Lambda2, Axis::LambdaLocked].into_iter().filter(|&x| on(x)).count();
        if on(Axis::LambdaLocked) && lambda_axes > 1 {
            return Err(Error::invalid("axes", "lambda_locked cannot be combined with another coupling axis"));
        }
        match self.lock {
            CouplingLock::Lambda2FromLambda1(r) | CouplingLock::Lambda1FromLambda2(r) if !(r.is_finite() && r >= 0.0) => {
                return Err(Error::invalid("ratio", format!("must be finite and ≥ 0, got {r}")));
            }
            CouplingLock::Lambda2FromLambda1(_) if on(Axis::Lambda2) => {
                return Err(Error::invalid("ratio", "λ2 is locked to λ1 and cannot also be swept"));
            }
            CouplingLock::Lambda1FromLambda2(_) if on(Axis::Lambda1) => {
                return Err(Error::invalid("ratio", "λ1 is locked to λ2 and cannot also be swept"));
            }
            _ => {}
        }
        if let Mode::Spectrum { levels } = self.mode {
            let dim = 2 * (self.fixed.n_max + 1);
            if levels == 0 || levels > dim {
                return Err(Error::invalid("levels", format!("must be in 1..={dim}, got {levels}")));
            }
        }
        if let Mode::Trajectory { cycles: 0, .. } = self.mode {
            return Err(Error::invalid("cycles", "must be at least 1"));
        }
        // a representative point must be constructible
        self.point(&self.grid_values(0)).map(|_| ())
    }

    /// Number of grid points.
    pub fn size(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    fn grid_values(&self, flat: usize) -> Vec<f64> {
        let mut rest = flat;
        let mut out = vec![0.0; self.axes.len()];
        for (i, a) in self.axes.iter().enumerate().rev() {
            out[i] = a.values[rest % a.values.len()];
            rest /= a.values.len();
        }
        out
    }

    /// Fully resolved parameters of one grid point.
    pub fn point(&self, coords: &[f64]) -> Result<GridPoint> {
        let f = &self.fixed;
        let mut pt = GridPoint {
            coords: coords.to_vec(),
            lambda1: f.lambda1,
            lambda2: f.lambda2,
            u: f.u,
            detuning: f.detuning,
            t_hot: f.t_hot,
            t_cold: f.t_cold,
            tau_adiabatic: 0.0,
            tau_thermal: 0.0,
            hot: None,
            cold: None,
        };
        if let Some(s) = self.mode.finite_settings() {
            pt.tau_adiabatic = s.tau_adiabatic;
            pt.tau_thermal = s.tau_thermal;
        }
        for (a, &x) in self.axes.iter().zip(coords) {
            match a.axis {
                Axis::Lambda1 => pt.lambda1 = x,
                Axis::Lambda2 => pt.lambda2 = x,
                Axis::LambdaLocked => {
                    pt.lambda1 = x;
                    pt.lambda2 = x;
                }
                Axis::U => pt.u = x,
                Axis::THot => pt.t_hot = x,
                Axis::TCold => pt.t_cold = x,
                Axis::Detuning => pt.detuning = x,
                Axis::TauAdiabatic => pt.tau_adiabatic = x,
                Axis::TauThermal => pt.tau_thermal = x,
            }
        }
        match self.lock {
            CouplingLock::None => {}
            CouplingLock::Lambda2FromLambda1(r) => pt.lambda2 = r * pt.lambda1,
            CouplingLock::Lambda1FromLambda2(r) => pt.lambda1 = r * pt.lambda2,
        }
        let medium = |omega: f64| {
            SystemParams::new(omega, omega + pt.detuning, pt.u, pt.lambda1, pt.lambda2, f.n_max)
        };
        pt.hot = Some(medium(f.omega_hot)?);
        pt.cold = Some(medium(f.omega_cold)?);
        Ok(pt)
    }

    /// Key/value description of everything that determines the output.
    pub fn describe(&self) -> Vec<(String, String)> {
        let f = &self.fixed;
        let mut out: Vec<(String, String)> = vec![
            ("mode".into(), self.mode.name().into()),
            ("omega_hot".into(), f.omega_hot.to_string()),
            ("omega_cold".into(), f.omega_cold.to_string()),
            ("lambda1".into(), f.lambda1.to_string()),
            ("lambda2".into(), f.lambda2.to_string()),
            ("u".into(), f.u.to_string()),
            ("detuning".into(), f.detuning.to_string()),
            ("t_hot".into(), f.t_hot.to_string()),
            ("t_cold".into(), f.t_cold.to_string()),
            ("n_max".into(), f.n_max.to_string()),
            ("pairing".into(), format!("{:?}", self.pairing)),
            ("truncation_check".into(), self.truncation.enabled.to_string()),
            ("truncation_extra_modes".into(), self.truncation.extra_modes.to_string()),
            ("truncation_levels".into(), self.truncation.levels.to_string()),
            ("truncation_tolerance".into(), self.truncation.tolerance.to_string()),
            (
                "lock".into(),
                match self.lock {
                    CouplingLock::None => "none".into(),
                    CouplingLock::Lambda2FromLambda1(r) => format!("lambda2 = {r} * lambda1"),
                    CouplingLock::Lambda1FromLambda2(r) => format!("lambda1 = {r} * lambda2"),
                },
            ),
        ];
        for a in &self.axes {
            let (lo, hi) = (a.values[0], a.values[a.values.len() - 1]);
            out.push((format!("axis.{}", a.axis), format!("{lo}:{hi}:{}", a.values.len())));
        }
        match &self.mode {
            Mode::Spectrum { levels } => out.push(("levels".into(), levels.to_string())),
            Mode::Ideal => {}
            Mode::Finite(s) | Mode::Trajectory { settings: s, .. } => {
                if let Mode::Trajectory { cycles, initial, .. } = &self.mode {
                    out.push(("cycles".into(), cycles.to_string()));
                    out.push(("initial".into(), initial.as_str().into()));
                }
                for (k, v) in [
                    ("tau_ad", s.tau_adiabatic.to_string()),
                    ("tau_th", s.tau_thermal.to_string()),
                    ("dt_unitary", s.dt_unitary.to_string()),
                    ("dt_dissipative", s.dt_dissipative.to_string()),
                    ("limit_cycle_tolerance", s.limit_cycle_tolerance.to_string()),
                    ("max_cycles", s.max_cycles.to_string()),
                    ("bath_coupling", s.bath_coupling.to_string()),
                    ("bath_cutoff", s.bath_cutoff.to_string()),
                    ("bath_channels", format!("{:?}", s.bath_channels)),
                ] {
                    out.push((k.into(), v));
                }
            }
        }
        out
    }
}

/// Parameters of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    /// Axis values in axis order.
    pub coords: Vec<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub u: f64,
    pub detuning: f64,
    pub t_hot: f64,
    pub t_cold: f64,
    pub tau_adiabatic: f64,
    pub tau_thermal: f64,
    hot: Option<SystemParams>,
    cold: Option<SystemParams>,
}

impl GridPoint {
    pub fn hot(&self) -> &SystemParams {
        self.hot.as_ref().expect("constructed by SweepSpec::point")
    }

    pub fn cold(&self) -> &SystemParams {
        self.cold.as_ref().expect("constructed by SweepSpec::point")
    }
}

/// Output of [`run_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub table: Table,
    /// Grid points whose status is not `ok`.
    pub failures: usize,
}

const INPUT_COLUMNS: [&str; 8] = [
    "lambda1",
    "lambda2",
    "u",
    "delta_detuning",
    "T_h",
    "T_c",
    "omega_h",
    "omega_c",
];

fn output_columns(mode: &Mode) -> &'static [&'static str] {
    match mode {
        Mode::Spectrum { .. } => &["level_index", "energy_minus_e0", "parity", "crossing_flag"],
        Mode::Ideal => &[
            "Q_h",
            "Q_c",
            "W",
            "W_normalized",
            "eta",
            "cop",
            "regime",
            "degenerate_pairing",
        ],
        Mode::Finite(_) => &[
            "tau_ad",
            "tau_th",
            "Q_h",
            "Q_c",
            "W",
            "eta",
            "P",
            "Sigma",
            "W_fric_comp",
            "W_fric_exp",
            "tur_bound",
            "cycles_to_limit",
            "converged",
            "regime",
        ],
        Mode::Trajectory { .. } => &[
            "tau_ad",
            "tau_th",
            "cycle",
            "fidelity_to_previous",
            "infidelity",
            "Q_h",
            "Q_c",
            "W",
            "eta",
            "Sigma",
            "W_fric_comp",
            "W_fric_exp",
            "regime",
        ],
    }
}

/// Header of the table [`run_sweep`] produces for `spec`.
pub fn columns(spec: &SweepSpec) -> Vec<String> {
    let mut cols: Vec<String> = spec.axes.iter().map(|a| format!("axis_{}", a.axis)).collect();
    cols.extend(INPUT_COLUMNS.iter().map(|s| s.to_string()));
    cols.extend(output_columns(&spec.mode).iter().map(|s| s.to_string()));
    cols.push("status".into());
    cols
}

type Key = [u64; 6];

fn key(p: &SystemParams) -> Key {
    [
        p.omega.to_bits(),
        p.delta.to_bits(),
        p.u.to_bits(),
        p.lambda1.to_bits(),
        p.lambda2.to_bits(),
        p.n_max as u64,
    ]
}

type Cache = HashMap<Key, Result<Arc<EigenSystem>>>;

fn lookup(cache: &Cache, p: &SystemParams) -> Result<Arc<EigenSystem>> {
    cache[&key(p)].clone()
}

fn input_cells(spec: &SweepSpec, pt: &GridPoint) -> Vec<Cell> {
    let mut row: Vec<Cell> = pt.coords.iter().map(|&x| Cell::Num(x)).collect();
    row.extend(
        [
            pt.lambda1,
            pt.lambda2,
            pt.u,
            pt.detuning,
            pt.t_hot,
            pt.t_cold,
            spec.fixed.omega_hot,
            spec.fixed.omega_cold,
        ]
        .map(Cell::Num),
    );
    row
}

fn failed_row(mut inputs: Vec<Cell>, width: usize, err: &Error) -> Vec<Cell> {
    inputs.resize(width - 1, Cell::Empty);
    inputs.push(Cell::Text(format!("error: {err}")));
    inputs
}

fn parity_cell(p: Parity) -> Cell {
    p.sign().map_or(Cell::Empty, |s| Cell::Int(s as i64))
}

fn evaluate(spec: &SweepSpec, pt: &GridPoint, cache: &Cache, previous: Option<&[Parity]>) -> Result<Vec<Vec<Cell>>> {
    match &spec.mode {
        Mode::Spectrum { levels } => {
            let eig = lookup(cache, pt.cold())?;
            let e0 = eig.energies[0];
            Ok((0..*levels)
                .map(|k| {
                    let gap_below = k > 0 && eig.energies[k] - eig.energies[k - 1] < CROSSING_GAP;
                    let gap_above = k + 1 < eig.dim() && eig.energies[k + 1] - eig.energies[k] < CROSSING_GAP;
                    let flipped = previous.is_some_and(|prev| prev[k] != eig.parities[k]);
                    vec![
                        Cell::from(k),
                        Cell::Num(eig.energies[k] - e0),
                        parity_cell(eig.parities[k]),
                        Cell::from(gap_below || gap_above || flipped),
                    ]
                })
                .collect())
        }
        Mode::Ideal => {
            let eh = lookup(cache, pt.hot())?;
            let ec = lookup(cache, pt.cold())?;
            let f = &spec.fixed;
            let rec = ideal_cycle_from_spectra(&eh, &ec, f.omega_hot, f.omega_cold, pt.t_hot, pt.t_cold, spec.pairing)?;
            Ok(vec![vec![
                Cell::Num(rec.q_hot),
                Cell::Num(rec.q_cold),
                Cell::Num(rec.work),
                Cell::Num(rec.normalized_work),
                rec.efficiency.into(),
                rec.cop.into(),
                Cell::from(rec.regime.as_str()),
                Cell::from(rec.degenerate_pairing),
            ]])
        }
        Mode::Finite(s) => {
            let engine = engine(spec, s, pt, cache)?;
            let lc = engine.find_limit_cycle(None)?;
            let r = lc.record;
            let tur = if r.entropy_production > 0.0 {
                Cell::Num(tur_bound(r.entropy_production)?)
            } else {
                Cell::Empty
            };
            Ok(vec![vec![
                Cell::Num(pt.tau_adiabatic),
                Cell::Num(pt.tau_thermal),
                Cell::Num(r.q_hot),
                Cell::Num(r.q_cold),
                Cell::Num(r.work),
                r.efficiency.into(),
                Cell::Num(r.power),
                Cell::Num(r.entropy_production),
                Cell::Num(r.friction_work_compression),
                Cell::Num(r.friction_work_expansion),
                tur,
                Cell::from(r.cycles_to_limit),
                Cell::from(lc.converged),
                regime_cell(r.regime),
            ]])
        }
        Mode::Trajectory { settings, cycles, initial } => {
            let engine = engine(spec, settings, pt, cache)?;
            let mut rho = match initial {
                InitialState::GibbsHot => engine.hot_thermal_state()?,
                InitialState::MaximallyMixed => DensityMatrix::maximally_mixed(engine.hot_eigen.dim()),
            };
            let mut rows = Vec::with_capacity(*cycles);
            for n in 1..=*cycles {
                let out = engine.run_cycle(&rho, n)?;
                let r = out.record;
                rows.push(vec![
                    Cell::Num(pt.tau_adiabatic),
                    Cell::Num(pt.tau_thermal),
                    Cell::from(n),
                    Cell::Num(r.fidelity_to_previous),
                    Cell::Num(1.0 - r.fidelity_to_previous),
                    Cell::Num(r.q_hot),
                    Cell::Num(r.q_cold),
                    Cell::Num(r.work),
                    r.efficiency.into(),
                    Cell::Num(r.entropy_production),
                    Cell::Num(r.friction_work_compression),
                    Cell::Num(r.friction_work_expansion),
                    regime_cell(r.regime),
                ]);
                rho = out.stages.after_hot;
            }
            Ok(rows)
        }
    }
}

fn regime_cell(r: Option<Regime>) -> Cell {
    r.map_or(Cell::Empty, |g| Cell::from(g.as_str()))
}

fn engine(spec: &SweepSpec, s: &FiniteSettings, pt: &GridPoint, cache: &Cache) -> Result<CycleEngine> {
    let eh = lookup(cache, pt.hot())?;
    let ec = lookup(cache, pt.cold())?;
    let cfg = CycleConfig {
        dt_unitary: s.dt_unitary,
        dt_dissipative: s.dt_dissipative,
        limit_cycle_tolerance: s.limit_cycle_tolerance,
        max_cycles: s.max_cycles,
        bath_coupling: s.bath_coupling,
        bath_cutoff: s.bath_cutoff,
        bath_channels: s.bath_channels.clone(),
        pairing: spec.pairing,
        truncation: spec.truncation,
        ..CycleConfig::new(*pt.hot(), *pt.cold(), pt.t_hot, pt.t_cold, pt.tau_adiabatic, pt.tau_thermal)
    };
    CycleEngine::with_spectra(cfg, (*eh).clone(), (*ec).clone())
}

/// Evaluate `spec` at every grid point.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    in_pool(spec)
}

/// Evaluate `spec`, which has no axes, at its fixed parameters.
pub fn run_point(spec: &SweepSpec) -> Result<SweepResult> {
    if !spec.axes.is_empty() {
        return Err(Error::invalid("axes", "a single point takes no axes"));
    }
    spec.validate_grid()?;
    in_pool(spec)
}

fn in_pool(spec: &SweepSpec) -> Result<SweepResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::invalid("workers", e.to_string()))?;
    pool.install(|| sweep_in_pool(spec))
}

fn sweep_in_pool(spec: &SweepSpec) -> Result<SweepResult> {
    let points: Vec<Result<GridPoint>> = (0..spec.size()).map(|i| spec.point(&spec.grid_values(i))).collect();

    let mut unique: Vec<SystemParams> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for pt in points.iter().flatten() {
        let media: &[&SystemParams] = match spec.mode {
            Mode::Spectrum { .. } => &[pt.cold()],
            _ => &[pt.hot(), pt.cold()],
        };
        for p in media {
            if seen.insert(key(p)) {
                unique.push(**p);
            }
        }
    }
    let cache: Cache = unique
        .par_iter()
        .map(|p| (key(p), eigensystem(p, &spec.truncation).map(Arc::new)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect();

    let width = columns(spec).len();
    let evaluated: Vec<(Vec<Cell>, Result<Vec<Vec<Cell>>>)> = points
        .par_iter()
        .enumerate()
        .map(|(i, pt)| {
            let pt = match pt {
                Ok(pt) => pt,
                Err(e) => {
                    let coords: Vec<Cell> = spec.grid_values(i).into_iter().map(Cell::Num).collect();
                    return (coords, Err(e.clone()));
                }
            };
            let previous = match spec.mode {
                Mode::Spectrum { .. } if i % spec.axes.last().map_or(1, |a| a.values.len()) != 0 => points[i - 1]
                    .as_ref()
                    .ok()
                    .and_then(|p| lookup(&cache, p.cold()).ok())
                    .map(|e| e.parities.clone()),
                _ => None,
            };
            (input_cells(spec, pt), evaluate(spec, pt, &cache, previous.as_deref()))
        })
        .collect();

    let mut table = Table::new(columns(spec));
    let mut failures = 0;
    for (inputs, outcome) in evaluated {
        match outcome {
            Ok(rows) => {
                for outputs in rows {
                    let mut row = inputs.clone();
                    row.extend(outputs);
                    row.push(Cell::from("ok"));
                    table.push(row)?;
                }
            }
            Err(e) => {
                failures += 1;
                table.push(failed_row(inputs, width, &e))?;
            }
        }
    }
    Ok(SweepResult { table, failures })
}

/// Fraction of labelled rows in each regime.
pub fn regime_fraction(table: &Table) -> Result<BTreeMap<Regime, f64>> {
    let col = table
        .column("regime")
        .ok_or_else(|| Error::invalid("table", "no `regime` column"))?;
    let mut counts: BTreeMap<Regime, usize> = BTreeMap::new();
    let mut total = 0usize;
    for cell in col {
        if let Some(label) = cell.as_str() {
            *counts.entry(label.parse()?).or_default() += 1;
            total += 1;
        }
    }
    Ok(counts
        .into_iter()
        .map(|(r, n)| (r, n as f64 / total as f64))
        .collect())
}
