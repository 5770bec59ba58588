//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! `cargo test -p rabi-otto --test acceptance -- <substring>` runs the matching criteria only.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use rabi_otto::lindblad::{build_channels, relax, thermal_state, BathSpec};
use rabi_otto::otto_finite::{
    adiabatic_stroke, friction_work, quasistatic_map, tur_bound, CycleConfig, CycleEngine, DEFAULT_DT_UNITARY,
};
use rabi_otto::otto_ideal::{ideal_cycle, reference_work, IdealOptions, Pairing, ReferenceMedium};
use rabi_otto::spectrum::{first_order_critical_coupling, ground_parity_flips, spectrum_scan, ScanAxis};
use rabi_otto::state::trace_distance;
use rabi_otto::sweep::{run_sweep, Axis, AxisRange, Mode, SweepSpec};
use rabi_otto::table::Table;
use rabi_otto::{eigensystem, DensityMatrix, SystemParams, TruncationCheck};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn medium(omega: f64, u: f64, l1: f64, l2: f64, n_max: usize) -> SystemParams {
    SystemParams::resonant(omega, 0.0, u, l1, l2).unwrap().with_n_max(n_max)
}

fn random_state(dim: usize, rng: &mut StdRng) -> DensityMatrix {
    let g = DMatrix::from_fn(dim, dim, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let m = &g * g.adjoint();
    let tr = m.trace();
    DensityMatrix::new(m / tr).unwrap()
}

fn decoupled_limit() -> Outcome {
    let (th, tc) = (0.5, 0.1);
    let rec = ideal_cycle(&medium(2.0, 0.0, 0.0, 0.0, 40), &medium(1.0, 0.0, 0.0, 0.0, 40), th, tc, &IdealOptions::default())
        .map_err(|e| e.to_string())?;
    let eta = rec.efficiency.unwrap_or(f64::NAN);
    let wq = reference_work(ReferenceMedium::Qubit, 2.0, 1.0, th, tc);
    let wo = reference_work(ReferenceMedium::Oscillator, 2.0, 1.0, th, tc);
    let ok = (eta - 0.5).abs() <= 1e-9
        && (wq - 0.0179).abs() <= 1e-4
        && (wo - 0.0186).abs() <= 1e-4
        && (rec.work - (wq + wo)).abs() <= 1e-9;
    check(ok, format!("eta = {eta:.12}, W_qubit = {wq:.5}, W_qho = {wo:.5}, W = {:.10} vs sum {:.10}", rec.work, wq + wo))
}

fn critical_line() -> Outcome {
    let step = 0.005;
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    for r in [0.0, 0.5] {
        for k in -3..=3 {
            let u = 0.3 * k as f64;
            let predicted = first_order_critical_coupling(1.0, u, r);
            // past the crossing when one is predicted, otherwise up to λ = 1.5
            let end = predicted.map_or(1.5, |lc| lc + 0.1);
            let grid: Vec<f64> = (1..).map(|i| step * i as f64).take_while(|&x| x <= end).collect();
            let base = medium(1.0, u, 0.0, 0.0, 40);
            let scan = spectrum_scan(&base, ScanAxis::Lambda1Locked { ratio: r }, &grid, 2, &TruncationCheck::default())
                .map_err(|e| format!("r={r} U={u:.1}: {e}"))?;
            let flips = ground_parity_flips(&scan);
            match predicted {
                Some(lc) => {
                    let found = *flips.first().ok_or(format!("r={r} U={u:.1}: no flip, expected {lc:.4}"))?;
                    let err = (found - lc).abs();
                    if err > step + 1e-12 {
                        return Err(format!("r={r} U={u:.1}: flip at {found}, expected {lc:.4}"));
                    }
                    worst = worst.max(err);
                }
                _ => {
                    if !flips.is_empty() {
                        return Err(format!("r={r} U={u:.1}: no real crossing predicted, flip at {}", flips[0]));
                    }
                    notes.push(format!("(r={r}, U={u:.1}, lambda <= {end})"));
                }
            }
        }
    }
    check(true, format!("max |flip - lambda_c| = {worst:.4} <= {step}; no crossing predicted or found at {}", notes.join(" ")))
}

/// Table and number of points whose Fock space did not converge.
fn ideal_grid(l1: (f64, f64, usize), l2: (f64, f64, usize), t_hot: f64, t_cold: f64) -> Result<(Table, usize), String> {
    let mut spec = SweepSpec::new(
        vec![
            AxisRange::linspace(Axis::Lambda1, l1.0, l1.1, l1.2),
            AxisRange::linspace(Axis::Lambda2, l2.0, l2.1, l2.2),
        ],
        Mode::Ideal,
    );
    spec.fixed.t_hot = t_hot;
    spec.fixed.t_cold = t_cold;
    let out = run_sweep(&spec).map_err(|e| e.to_string())?;
    let status: Vec<String> = out.table.column("status").unwrap().map(|c| c.to_string()).collect();
    if let Some(bad) = status.iter().find(|s| *s != "ok" && !s.contains("truncation not converged")) {
        return Err(bad.clone());
    }
    Ok((out.table, out.failures))
}

fn argmax(table: &Table, column: &str) -> (f64, f64, f64) {
    let v = table.column_f64(column).unwrap();
    let l1 = table.column_f64("lambda1").unwrap();
    let l2 = table.column_f64("lambda2").unwrap();
    let i = (0..v.len())
        .filter(|&i| v[i].is_finite())
        .max_by(|&a, &b| v[a].total_cmp(&v[b]))
        .unwrap();
    (v[i], l1[i], l2[i])
}

fn work_optimum() -> Outcome {
    let (t, unconverged) = ideal_grid((1.2, 1.7, 51), (0.0, 0.5, 51), 0.5, 0.1)?;
    let (w, l1, l2) = argmax(&t, "W");
    let ok = unconverged == 0
        && (w - 0.073).abs() <= 0.003
        && (l1 - 1.41).abs() <= 0.02 + 1e-12
        && (l2 - 0.22).abs() <= 0.02 + 1e-12;
    check(ok, format!("max W = {w:.5} at ({l1:.2}, {l2:.2}); {unconverged} unconverged points"))
}

fn efficiency_ceiling() -> Outcome {
    // unconverged points (both couplings large) are excluded from the maximum
    let (low, bad_low) = ideal_grid((0.0, 3.0, 151), (0.0, 3.0, 151), 0.5, 0.1)?;
    let (high, bad_high) = ideal_grid((0.0, 3.0, 151), (0.0, 3.0, 151), 2.0, 0.5)?;
    let (el, al, bl) = argmax(&low, "eta");
    let (eh, ah, bh) = argmax(&high, "eta");
    let ok = (el - 0.75).abs() <= 0.02 && el <= 0.8 && (eh - 0.64).abs() <= 0.02 && eh <= 0.75;
    check(
        ok,
        format!("low T: max eta = {el:.4} at ({al:.2}, {bl:.2}), Carnot 0.8; high T: max eta = {eh:.4} at ({ah:.2}, {bh:.2}), Carnot 0.75; unconverged points {bad_low} + {bad_high} of 2 x 22801"),
    )
}

struct RandomPoint {
    params: SystemParams,
    temperature: f64,
}

fn random_points(seed: u64, count: usize, n_max: usize) -> Vec<RandomPoint> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..count)
        .map(|_| RandomPoint {
            params: medium(
                1.0,
                rng.random_range(-0.9..=0.9),
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
                n_max,
            ),
            temperature: rng.random_range(0.2..1.0),
        })
        .collect()
}

fn thermalization_fixed_point() -> Outcome {
    let mut rng = StdRng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let mut longest: f64 = 0.0;
    for p in random_points(7, 10, 20) {
        let eig = eigensystem(&p.params, &TruncationCheck::disabled()).map_err(|e| e.to_string())?;
        let ch = build_channels(&eig, &BathSpec::new(p.temperature)).map_err(|e| e.to_string())?;
        let gibbs = thermal_state(&eig, p.temperature).map_err(|e| e.to_string())?;
        for _ in 0..3 {
            let rho = random_state(eig.dim(), &mut rng);
            let r = relax(&rho, &eig, &ch, 1.0, 1000.0, 1e-12, 5e5).map_err(|e| e.to_string())?;
            let d = trace_distance(&r.state, &gibbs);
            worst = worst.max(d);
            longest = longest.max(r.time);
        }
    }
    check(worst < 1e-5, format!("max trace distance to Gibbs = {worst:.2e} over 30 runs (longest relaxation t = {longest})"))
}

fn finite_config(l: f64, u: f64, n_max: usize, tau_ad: f64, tau_th: f64) -> CycleConfig {
    CycleConfig::new(medium(2.0, u, l, l, n_max), medium(1.0, u, l, l, n_max), 0.5, 0.1, tau_ad, tau_th)
}

fn detailed_balance_and_second_law() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut sets = 0;
    for p in random_points(23, 10, 20) {
        for t in [p.temperature, 0.1, 2.0] {
            let eig = eigensystem(&p.params, &TruncationCheck::disabled()).map_err(|e| e.to_string())?;
            let ch = build_channels(&eig, &BathSpec::new(t)).map_err(|e| e.to_string())?;
            for c in &ch.channels {
                if c.rate_down > 0.0 {
                    let dev = (c.rate_up / c.rate_down - (-c.gap / t).exp()).abs();
                    worst = worst.max(dev);
                }
            }
            sets += 1;
        }
    }
    if worst > 1e-10 {
        return Err(format!("detailed balance deviation {worst:.2e}"));
    }
    let mut min_sigma = f64::INFINITY;
    let mut cycles = 0;
    for (l, u, tau_ad, tau_th) in [(0.5, 0.0, 5.0, 1000.0), (0.3, 0.3, 2.0, 400.0), (0.8, -0.5, 10.0, 1500.0), (1.2, 0.0, 3.0, 800.0)] {
        let cfg = CycleConfig {
            truncation: TruncationCheck::disabled(),
            ..finite_config(l, u, 10, tau_ad, tau_th)
        };
        let eta_carnot = 1.0 - cfg.t_cold / cfg.t_hot;
        let lc = CycleEngine::new(cfg).and_then(|e| e.find_limit_cycle(None)).map_err(|e| e.to_string())?;
        if !lc.converged {
            return Err(format!("limit cycle at lambda={l} U={u} did not converge"));
        }
        let r = lc.record;
        min_sigma = min_sigma.min(r.entropy_production);
        if r.entropy_production < -1e-9 || r.efficiency.is_some_and(|e| e > eta_carnot) {
            return Err(format!("lambda={l} U={u}: Sigma = {:.3e}, eta = {:?}", r.entropy_production, r.efficiency));
        }
        cycles += 1;
    }
    check(
        true,
        format!("{sets} channel sets, max |ratio - Boltzmann| = {worst:.1e}; {cycles} limit cycles, min Sigma = {min_sigma:.3e}"),
    )
}

fn first_cycle_fidelity(tau_th: f64) -> Result<f64, String> {
    let cfg = CycleConfig {
        dt_unitary: DEFAULT_DT_UNITARY,
        ..finite_config(0.5, 0.0, 30, 1.0, tau_th)
    };
    let engine = CycleEngine::new(cfg).map_err(|e| e.to_string())?;
    let start = engine.hot_thermal_state().map_err(|e| e.to_string())?;
    Ok(engine.run_cycle(&start, 1).map_err(|e| e.to_string())?.record.fidelity_to_previous)
}

fn limit_cycle_fidelity() -> Outcome {
    let long = first_cycle_fidelity(1000.0)?;
    let short = first_cycle_fidelity(50.0)?;
    check(long > 0.999 && short < 0.999, format!("F(tau4 = 1000) = {long:.9}, F(tau4 = 50) = {short:.6}"))
}

struct Recovery {
    work_ratio: f64,
    efficiency_ratio: f64,
}

fn recovery(l: f64, u: f64, tau_ad: f64, tau_th: f64, truncation: TruncationCheck) -> Result<Recovery, String> {
    let cfg = CycleConfig {
        truncation,
        ..finite_config(l, u, 30, tau_ad, tau_th)
    };
    let opts = IdealOptions {
        pairing: Pairing::EnergyIndex,
        truncation,
    };
    let ideal = ideal_cycle(&cfg.hot, &cfg.cold, cfg.t_hot, cfg.t_cold, &opts).map_err(|e| e.to_string())?;
    let lc = CycleEngine::new(cfg).and_then(|e| e.find_limit_cycle(None)).map_err(|e| e.to_string())?;
    let eta_ideal = ideal.efficiency.ok_or("ideal cycle is not an engine")?;
    Ok(Recovery {
        work_ratio: lc.record.work / ideal.work,
        efficiency_ratio: lc.record.efficiency.unwrap_or(0.0) / eta_ideal,
    })
}

fn finite_time_recovery() -> Outcome {
    let check_on = TruncationCheck::default();
    let a = recovery(0.5, 0.0, 10.0, 2000.0, check_on)?;
    let b = recovery(0.5, 0.1, 10.0, 2000.0, check_on)?;
    // the spectrum near the collapse point is not converged in n_max; the comparison is qualitative
    let c = recovery(0.5, -0.95, 10.0, 2000.0, TruncationCheck::disabled())?;
    let within = (a.work_ratio - 1.0).abs() <= 0.1 && (b.work_ratio - 1.0).abs() <= 0.1;
    let first_w = a.work_ratio.min(b.work_ratio);
    let first_eta = a.efficiency_ratio.min(b.efficiency_ratio);
    let lagging = c.work_ratio < 0.9 * first_w && c.efficiency_ratio < 0.9 * first_eta;
    check(
        within && lagging,
        format!(
            "W/W_ideal = {:.3} (U=0), {:.3} (U=0.1); U=-0.95: W ratio {:.3}, eta ratio {:.3} vs first-order {:.3}, {:.3}",
            a.work_ratio, b.work_ratio, c.work_ratio, c.efficiency_ratio, first_w, first_eta
        ),
    )
}

fn tur_function() -> Outcome {
    let mut worst: f64 = 0.0;
    for x in [0.1f64, 0.5, 1.0, 2.0, 5.0] {
        let f = tur_bound(2.0 * x * x.tanh()).map_err(|e| e.to_string())?;
        worst = worst.max((f * x.sinh().powi(2) - 1.0).abs());
    }
    let values: Vec<f64> = (1..=100)
        .map(|i| tur_bound(0.1 * i as f64).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let decreasing = values.windows(2).all(|w| w[1] < w[0]);
    check(worst <= 1e-9 && decreasing, format!("max |f sinh^2 - 1| = {worst:.1e}; strictly decreasing on 100 points: {decreasing}"))
}

fn friction_limits() -> Outcome {
    let n_max = 40;
    let hot = medium(2.0, 0.0, 0.3, 0.1, n_max);
    let cold = medium(1.0, 0.0, 0.3, 0.1, n_max);
    let check_on = TruncationCheck::default();
    let eh = eigensystem(&hot, &check_on).map_err(|e| e.to_string())?;
    let ec = eigensystem(&cold, &check_on).map_err(|e| e.to_string())?;
    let (th, tc) = (0.5, 0.1);
    let gibbs_h = thermal_state(&eh, th).map_err(|e| e.to_string())?;
    let gibbs_c = thermal_state(&ec, tc).map_err(|e| e.to_string())?;
    let stroke_friction = |rho: &DensityMatrix, expansion: bool, tau: f64| -> Result<f64, String> {
        let (from, to, e_from, e_to, t) = if expansion {
            (&hot, &cold, &eh, &ec, tc)
        } else {
            (&cold, &hot, &ec, &eh, th)
        };
        let out = adiabatic_stroke(rho, from, to, tau, DEFAULT_DT_UNITARY).map_err(|e| e.to_string())?;
        let qe = quasistatic_map(rho, e_from, e_to, Pairing::EnergyIndex).map_err(|e| e.to_string())?;
        let f = friction_work(&out, &qe, 1.0 / t);
        if f.overflow {
            return Err("friction overflow".into());
        }
        Ok(f.value)
    };
    let mut ladder = Vec::new();
    for tau in [50.0, 100.0, 200.0] {
        ladder.push(stroke_friction(&gibbs_h, true, tau)? + stroke_friction(&gibbs_c, false, tau)?);
    }
    let mut rng = StdRng::seed_from_u64(5);
    let mut min_f = ladder.iter().copied().fold(f64::INFINITY, f64::min);
    for tau in [0.5, 5.0] {
        for expansion in [true, false] {
            let rho = random_state(eh.dim(), &mut rng);
            min_f = min_f.min(stroke_friction(&rho, expansion, tau)?);
        }
    }
    let ok = ladder[0] > ladder[1] && ladder[1] > ladder[2] && ladder[2] < 1e-6 && min_f >= 0.0;
    check(
        ok,
        format!("W_fric(tau_ad = 50, 100, 200) = {:.3e}, {:.3e}, {:.3e}; min over all strokes = {min_f:.3e}", ladder[0], ladder[1], ladder[2]),
    )
}

const CRITERIA: [(&str, fn() -> Outcome); 10] = [
    ("decoupled-limit exactness", decoupled_limit),
    ("critical-line agreement", critical_line),
    ("work optimum", work_optimum),
    ("efficiency ceiling", efficiency_ceiling),
    ("thermalization fixed point", thermalization_fixed_point),
    ("detailed balance and second law", detailed_balance_and_second_law),
    ("limit-cycle fidelity", limit_cycle_fidelity),
    ("finite-time recovery", finite_time_recovery),
    ("TUR function", tur_function),
    ("friction limits", friction_limits),
];

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, run) in CRITERIA {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{secs:.1} s]");
            }
        }
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
