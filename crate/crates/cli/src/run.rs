//! Subcommand execution: configuration to table to files.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use rabi_otto::lindblad::{DEGENERATE_GAP, OVERLAP_FLOOR, POSITIVITY_FLOOR, TRACE_TOLERANCE};
use rabi_otto::otto_finite::{tur_bound, MIN_UNITARY_STEPS, UNITARITY_TOLERANCE};
use rabi_otto::otto_ideal::{Pairing, REGIME_TOLERANCE};
use rabi_otto::spectrum::{CROSSING_GAP, DEGENERACY_THRESHOLD};
use rabi_otto::state::LOG_CLIP;
use rabi_otto::sweep::{
    regime_fraction, run_point, run_sweep, Axis, AxisRange, CouplingLock, FiniteSettings, FixedParams, Mode,
    SweepResult, SweepSpec,
};
use rabi_otto::table::{Cell, Table};
use rabi_otto::{CouplingKind, TruncationCheck};

use crate::config::{Config, ConfigError};
use crate::output::{check_writable, write_csv, write_meta};

/// Environment variable giving the default worker count.
pub const WORKERS_ENV: &str = "RABI_OTTO_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Low-lying levels along one or two axes.
    Spectrum,
    /// Ideal cycle at one parameter point.
    IdealCycle,
    /// Ideal cycle over a grid.
    PhaseDiagram,
    /// Finite-time limit cycle at one point or over a grid.
    FiniteCycle,
    /// Cycle-by-cycle approach to the limit cycle.
    LimitCycle,
    /// Uncertainty-relation bound over entropy productions.
    Tur,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Spectrum,
        Command::IdealCycle,
        Command::PhaseDiagram,
        Command::FiniteCycle,
        Command::LimitCycle,
        Command::Tur,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::IdealCycle => "ideal-cycle",
            Command::PhaseDiagram => "phase-diagram",
            Command::FiniteCycle => "finite-cycle",
            Command::LimitCycle => "limit-cycle",
            Command::Tur => "tur",
        }
    }

    /// Name of the CSV written to the output directory.
    pub fn file_name(self) -> String {
        format!("{}.csv", self.name().replace('-', "_"))
    }

    fn needs_temperatures(self) -> bool {
        !matches!(self, Command::Spectrum | Command::Tur)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .with_context(|| format!("unknown subcommand `{s}`"))
    }
}

/// Everything one invocation needs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub config_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// `--workers`; beats the config file, which beats [`WORKERS_ENV`].
    pub workers: Option<usize>,
    /// `section.key=value` pairs applied over the file.
    pub overrides: Vec<String>,
    pub force: bool,
}

/// Files written and points that failed.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub csv: PathBuf,
    pub meta: PathBuf,
    pub rows: usize,
    pub failures: usize,
    /// Human-readable lines for the terminal.
    pub summary: Vec<String>,
}

/// Read the file (if any) and apply overrides.
pub fn load_config(rc: &RunConfig) -> anyhow::Result<Config> {
    let mut cfg = match &rc.config_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Config::parse(&text).with_context(|| format!("in {}", p.display()))?
        }
        None => Config::default(),
    };
    for o in &rc.overrides {
        cfg.set(o)?;
    }
    if let Some(w) = rc.workers {
        cfg.set(&format!("run.workers={w}"))?;
    } else if !cfg.is_set("run", "workers") {
        if let Ok(w) = std::env::var(WORKERS_ENV) {
            cfg.set(&format!("run.workers={w}"))
                .with_context(|| format!("environment variable {WORKERS_ENV}"))?;
        }
    }
    Ok(cfg)
}

fn pairing(cfg: &Config) -> Result<Pairing, ConfigError> {
    match cfg.text("numerics", "pairing")?.as_str() {
        "energy" => Ok(Pairing::EnergyIndex),
        "parity" => Ok(Pairing::ParitySector),
        other => Err(value_error("numerics.pairing", format!("expected energy or parity, got `{other}`"))),
    }
}

fn channels(cfg: &Config) -> Result<Vec<CouplingKind>, ConfigError> {
    cfg.text("bath", "channels")?
        .split(',')
        .map(|c| match c.trim() {
            "boson" => Ok(CouplingKind::Boson),
            "qubit" => Ok(CouplingKind::Qubit),
            other => Err(value_error("bath.channels", format!("expected boson or qubit, got `{other}`"))),
        })
        .collect()
}

fn value_error(key: &str, reason: String) -> ConfigError {
    ConfigError::Value { key: key.into(), reason }
}

fn finite_settings(cfg: &Config) -> Result<FiniteSettings, ConfigError> {
    Ok(FiniteSettings {
        tau_adiabatic: cfg.f64("cycle", "tau_ad")?,
        tau_thermal: cfg.f64("cycle", "tau_th")?,
        dt_unitary: cfg.f64("cycle", "dt_unitary")?,
        dt_dissipative: cfg.f64("cycle", "dt_dissipative")?,
        limit_cycle_tolerance: cfg.f64("cycle", "limit_tolerance")?,
        max_cycles: cfg.usize("cycle", "max_cycles")?,
        bath_coupling: cfg.f64("bath", "coupling")?,
        bath_cutoff: cfg.f64("bath", "cutoff")?,
        bath_channels: channels(cfg)?,
    })
}

/// Sweep description for every subcommand except `tur`.
pub fn build_spec(command: Command, cfg: &Config) -> anyhow::Result<SweepSpec> {
    let axes = cfg.axes();
    let swept = |k: &str| axes.iter().any(|a| a == k);
    let lock = match cfg.text("sweep", "lock")?.as_str() {
        "none" => CouplingLock::None,
        "lambda2" => CouplingLock::Lambda2FromLambda1(cfg.f64("sweep", "ratio")?),
        "lambda1" => CouplingLock::Lambda1FromLambda2(cfg.f64("sweep", "ratio")?),
        other => Err(value_error("sweep.lock", format!("expected none, lambda1 or lambda2, got `{other}`")))?,
    };
    let locked = swept("lambda_locked");
    let derived = |k: &str| match lock {
        CouplingLock::Lambda2FromLambda1(_) => k == "lambda2",
        CouplingLock::Lambda1FromLambda2(_) => k == "lambda1",
        CouplingLock::None => false,
    };

    let mut required = Vec::new();
    for k in ["lambda1", "lambda2"] {
        if !swept(k) && !locked && !derived(k) {
            required.push(("system", k));
        }
    }
    if !swept("u") {
        required.push(("system", "u"));
    }
    if command.needs_temperatures() {
        for k in ["t_hot", "t_cold"] {
            if !swept(k) {
                required.push(("bath", k));
            }
        }
    }
    cfg.require(&required)?;

    match command {
        Command::Spectrum | Command::PhaseDiagram if axes.is_empty() => {
            bail!("{command} needs at least one [sweep] axis")
        }
        Command::IdealCycle if !axes.is_empty() => {
            bail!("ideal-cycle takes no [sweep] axes; use phase-diagram for grids")
        }
        Command::Tur => bail!("tur does not evaluate a sweep"),
        _ => {}
    }

    let opt = |s: &str, k: &str| -> Result<f64, ConfigError> {
        if cfg.value(s, k).is_some() {
            cfg.f64(s, k)
        } else {
            Ok(0.0)
        }
    };
    let fixed = FixedParams {
        omega_hot: cfg.f64("system", "omega_hot")?,
        omega_cold: cfg.f64("system", "omega_cold")?,
        lambda1: opt("system", "lambda1")?,
        lambda2: opt("system", "lambda2")?,
        u: opt("system", "u")?,
        detuning: cfg.f64("system", "detuning")?,
        t_hot: opt("bath", "t_hot")?,
        t_cold: opt("bath", "t_cold")?,
        n_max: cfg.usize("system", "n_max")?,
    };
    let mode = match command {
        Command::Spectrum => Mode::Spectrum { levels: cfg.usize("sweep", "levels")? },
        Command::IdealCycle | Command::PhaseDiagram => Mode::Ideal,
        Command::FiniteCycle => Mode::Finite(finite_settings(cfg)?),
        Command::LimitCycle => Mode::Trajectory {
            settings: finite_settings(cfg)?,
            cycles: cfg.usize("cycle", "cycles")?,
            initial: cfg.text("cycle", "initial")?.parse()?,
        },
        Command::Tur => unreachable!(),
    };
    let axes = axes
        .iter()
        .map(|name| {
            Ok(AxisRange {
                axis: name.parse::<Axis>()?,
                values: cfg.grid("sweep", name)?,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let spec = SweepSpec {
        axes,
        fixed,
        lock,
        mode,
        pairing: pairing(cfg)?,
        truncation: TruncationCheck {
            enabled: cfg.bool("numerics", "truncation_check")?,
            extra_modes: cfg.usize("numerics", "truncation_extra_modes")?,
            levels: cfg.usize("numerics", "truncation_levels")?,
            tolerance: cfg.f64("numerics", "truncation_tolerance")?,
        },
        workers: cfg.usize("run", "workers")?,
    };
    Ok(spec)
}

/// `sigma, tur_bound, status` for every entropy production on the `tur.sigma` grid.
pub fn tur_table(cfg: &Config) -> anyhow::Result<SweepResult> {
    let mut table = Table::new(["sigma", "tur_bound", "status"]);
    let mut failures = 0;
    for sigma in cfg.grid("tur", "sigma")? {
        let row = match tur_bound(sigma) {
            Ok(f) => vec![Cell::Num(sigma), Cell::Num(f), "ok".into()],
            Err(e) => {
                failures += 1;
                vec![Cell::Num(sigma), Cell::Empty, format!("error: {e}").into()]
            }
        };
        table.push(row)?;
    }
    Ok(SweepResult { table, failures })
}

fn provenance(command: Command, result: &SweepResult) -> Vec<(String, String)> {
    let mut p: Vec<(String, String)> = vec![
        ("tool".into(), env!("CARGO_PKG_NAME").into()),
        ("version".into(), env!("CARGO_PKG_VERSION").into()),
        ("subcommand".into(), command.name().into()),
        ("rows".into(), result.table.len().to_string()),
        ("failed_points".into(), result.failures.to_string()),
        ("columns".into(), result.table.columns().join(",")),
    ];
    for (k, v) in [
        ("degeneracy_threshold", DEGENERACY_THRESHOLD),
        ("crossing_gap", CROSSING_GAP),
        ("regime_tolerance", REGIME_TOLERANCE),
        ("degenerate_gap", DEGENERATE_GAP),
        ("overlap_floor", OVERLAP_FLOOR),
        ("positivity_floor", POSITIVITY_FLOOR),
        ("trace_tolerance", TRACE_TOLERANCE),
        ("unitarity_tolerance", UNITARITY_TOLERANCE),
        ("log_clip", LOG_CLIP),
    ] {
        p.push((k.into(), v.to_string()));
    }
    p.push(("min_unitary_steps".into(), MIN_UNITARY_STEPS.to_string()));
    p
}

fn summarize(command: Command, result: &SweepResult) -> Vec<String> {
    let mut lines = vec![format!("{} rows", result.table.len())];
    let t = &result.table;
    match command {
        Command::IdealCycle | Command::FiniteCycle if t.len() == 1 => {
            for k in ["W", "eta", "Q_h", "Q_c", "regime"] {
                if let Some(mut c) = t.column(k) {
                    lines.push(format!("{k} = {}", c.next().map(|c| c.to_string()).unwrap_or_default()));
                }
            }
        }
        Command::PhaseDiagram | Command::FiniteCycle => {
            if let Ok(fr) = regime_fraction(t) {
                for (r, f) in fr {
                    lines.push(format!("{r}: {:.4}", f));
                }
            }
        }
        _ => {}
    }
    lines
}

/// Compute and write the table for `rc`.
pub fn execute(rc: &RunConfig) -> anyhow::Result<Outcome> {
    let cfg = load_config(rc)?;
    execute_with(rc.command, &cfg, &rc.output_dir, rc.force)
}

/// [`execute`] with an already loaded configuration.
pub fn execute_with(command: Command, cfg: &Config, output_dir: &Path, force: bool) -> anyhow::Result<Outcome> {
    let csv = output_dir.join(command.file_name());
    check_writable(&csv, force)?;
    let result = match command {
        Command::Tur => tur_table(cfg)?,
        _ => {
            let spec = build_spec(command, cfg)?;
            if spec.axes.is_empty() {
                run_point(&spec)?
            } else {
                run_sweep(&spec)?
            }
        }
    };
    write_csv(&result.table, &csv, force)?;
    let meta = write_meta(&csv, &provenance(command, &result), cfg)?;
    Ok(Outcome {
        csv,
        meta,
        rows: result.table.len(),
        failures: result.failures,
        summary: summarize(command, &result),
    })
}
