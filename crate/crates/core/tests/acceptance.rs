//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_RED` are reproduced faithfully but do not hold
//! for the published parameters; they are reported as FAIL without failing
//! the run. Any other failure exits non-zero.

use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use ddcore::analysis::{
    band_split_trace, compare_protocols, rate_threshold_interval, summarize_bands, ProtocolComparison,
};
use ddcore::decoherence::{coherence_from_gamma, gamma_controlled_direct, uniform_grid, PulseSequence, QuadratureSettings};
use ddcore::magnus::{magnus_a1_coefficient, magnus_a2_coefficient, verify_second_order, TogglingProfile};
use ddcore::recursion::{
    delta_gamma_infinity, delta_gamma_pdd_series, gamma_controlled_exact, saturation_analysis, single_pulse_infinity,
    two_pulse_improvement, ExactRepresentation, Gamma0Cache,
};
use ddcore::sequences::{
    check_constraint, cp_cycle_ticks, gen_cpdd, gen_interp_abrupt_cycles, gen_interp_smooth_cycles, gen_pdd, gen_udd,
    udd_max_pulses, ProtocolKind, ProtocolSpec,
};
use ddcore::spectral::{BathSpec, SpectralModel};
use ddcore::units::UnitsMode;

/// Criteria that do not hold for the published parameters.
const KNOWN_RED: &[u32] = &[3, 6];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn exciton_cache(lattice: f64) -> Gamma0Cache {
    Gamma0Cache::new(BathSpec::exciton_gaas_77k(), QuadratureSettings::default())
        .with_lattice(lattice)
        .unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn oracle_equivalence() -> Outcome {
    let bath = BathSpec::exciton_gaas_77k();
    let q = QuadratureSettings::default();
    let cache = Gamma0Cache::new(bath.clone(), q);
    let mut rng = StdRng::seed_from_u64(0x5eed_0001);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let s = rng.gen_range(1..=20);
        let mut times: Vec<f64> = (0..s).map(|_| rng.gen_range(0.01..5.0)).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let seq = PulseSequence::new(times, None, "random").unwrap();
        let t = rng.gen_range(0.05..8.0);
        let exact = gamma_controlled_exact(&cache, &seq, t).unwrap();
        let direct = gamma_controlled_direct(&bath, &seq, t, &q).unwrap();
        worst = worst.max((exact - direct).abs() / exact.abs().max(1e-3));
    }
    outcome(worst < 1e-6, format!("max |exact - direct| / max(G, 1e-3) = {worst:.2e} over 50 sequences (< 1e-6)"))
}

fn continuity() -> Outcome {
    let h = 3.0;
    let kinds = [
        ProtocolKind::Pdd { dt: 0.1 },
        ProtocolKind::Cpdd { dt_cp: 0.05 },
        ProtocolKind::CddSingle { dt: 0.05 },
        ProtocolKind::Pcdd { dt: 0.1, level: 3 },
        ProtocolKind::Udd { n: 20 },
        ProtocolKind::InterpAbrupt { dt_min: 0.1 },
        ProtocolKind::InterpSmooth { dt_min: 0.1, delta2: 0.01 },
    ];
    let cache = exciton_cache(0.0025);
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for kind in kinds {
        let seq = ProtocolSpec::new(kind, h).unwrap().generate().unwrap();
        let rep = ExactRepresentation::new(&cache, seq.times()).unwrap();
        for (k, &tk) in seq.times().iter().enumerate() {
            let before = rep.gamma_with(&cache, k, tk).unwrap();
            let after = rep.gamma_with(&cache, k + 1, tk).unwrap();
            worst = worst.max(rel(before, after));
            checked += 1;
        }
    }
    outcome(
        worst < 1e-10,
        format!("max two-sided relative jump {worst:.2e} over {checked} pulse times in 7 protocols (< 1e-10)"),
    )
}

fn asymptote_convergence() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for dt in [0.25, 0.3] {
        let cache = exciton_cache(dt);
        let series = delta_gamma_pdd_series(&cache, dt, 200).unwrap();
        let inf = delta_gamma_infinity(cache.bath(), dt).unwrap().value;
        let dev = series[49..200].iter().map(|&v| (v / inf - 1.0).abs()).fold(0.0, f64::max);
        let report = saturation_analysis(&cache, dt, None).unwrap();
        let alternates = (2..report.n_sat.saturating_sub(1)).all(|n| series[n - 1] * series[n] < 0.0);
        let last_flip = (1..series.len()).filter(|&i| series[i] * series[i - 1] < 0.0).max().map_or(0, |i| i + 1);
        let n_sat_ok = (10..=20).contains(&report.n_sat);
        pass &= dev < 0.02 && alternates && n_sat_ok;
        parts.push(format!(
            "dt={dt}: max dev n in [50,200] {dev:.1e} (< 2%), n_sat={} (want 15 +- 5), alternation through n={last_flip}",
            report.n_sat
        ));
    }
    outcome(pass, parts.join("; "))
}

fn midpoint_identity() -> Outcome {
    let dt = 0.1;
    let step = dt / 40.0;
    let cache = exciton_cache(step);
    let pdd = gen_pdd(dt, 10.5).unwrap();
    let cpdd = gen_cpdd(dt / 2.0, 10.5).unwrap();
    let t_sat = saturation_analysis(&cache, dt, None).unwrap().t_sat;
    let coh = |seq: &PulseSequence, t: f64| coherence_from_gamma(gamma_controlled_exact(&cache, seq, t).unwrap());
    let mut worst: f64 = 0.0;
    let mut shape_ok = true;
    let mut shape_checked = 0;
    for n in 0..=100 {
        let t = (n as f64 + 0.5) * dt;
        let a = gamma_controlled_exact(&cache, &pdd, t).unwrap();
        let b = gamma_controlled_exact(&cache, &cpdd, t).unwrap();
        worst = worst.max(rel(a, b));
        if t > t_sat {
            let (p0, pl, pr) = (coh(&pdd, t), coh(&pdd, t - step), coh(&pdd, t + step));
            let (c0, cl, cr) = (coh(&cpdd, t), coh(&cpdd, t - step), coh(&cpdd, t + step));
            shape_ok &= p0 > pl && p0 > pr && c0 < cl && c0 < cr;
            shape_checked += 1;
        }
    }
    outcome(
        worst < 1e-8 && shape_ok,
        format!(
            "max relative difference {worst:.2e} (< 1e-8); PDD maxima and CPDD minima at {shape_checked} midpoints beyond t_sat={t_sat}: {shape_ok}"
        ),
    )
}

fn udd_numbers() -> Outcome {
    let gap = |n: usize| {
        let seq = gen_udd(n, 10.0).unwrap();
        check_constraint(&seq, 0.0, 10.0).min_gap
    };
    let g100 = gap(100);
    let g40 = gap(40);
    let n_max = udd_max_pulses(10.0, 0.1).unwrap();
    let tau_c = BathSpec::exciton_gaas_77k().correlation_time().unwrap();
    let ok = rel(g100, 2.4e-3) <= 0.02 && rel(g40, 1.5e-2) <= 0.03 && n_max == 14 && rel(tau_c, 2.07) <= 0.01;
    outcome(
        ok,
        format!("min gap n=100: {g100:.4e} ps, n=40: {g40:.4e} ps, max pulses at 0.1 ps: {n_max}, tau_c = {tau_c:.4} ps"),
    )
}

fn t2_threshold() -> Outcome {
    let bath = BathSpec::exciton_gaas_77k();
    let target = 1.0 / ddcore::analysis::DEFAULT_T1;
    let dt = rate_threshold_interval(&bath, target, 0.05, 0.5).unwrap();
    outcome(
        (0.15..=0.25).contains(&dt),
        format!("rate reaches 1/ns at dt = {dt:.4} ps (want [0.15, 0.25])"),
    )
}

fn magnus_cancellation() -> Outcome {
    let mut ok = true;
    // Single and chained CP cycles D X 2D X D.
    for deltas in [vec![1u64], vec![3], vec![5, 4, 3]] {
        let (ticks, total) = cp_cycle_ticks(&deltas);
        let seq = PulseSequence::from_ticks(ticks, 0.01, None, "cp").unwrap();
        let c = verify_second_order(&seq, total as f64 * 0.01).unwrap();
        ok &= c.exact && c.cancels;
    }
    let cycle = TogglingProfile::from_tick_lengths(&[1, 2, 1], 0.05).unwrap();
    ok &= magnus_a1_coefficient(&cycle).is_exact_zero() && magnus_a2_coefficient(&cycle).is_exact_zero();
    let cpdd = verify_second_order(&gen_cpdd(0.1, 4.0).unwrap(), 4.0).unwrap();
    ok &= cpdd.exact && cpdd.cancels;
    let (short, t_short) = gen_interp_abrupt_cycles(0.1, 20).unwrap();
    let s = verify_second_order(&short, t_short).unwrap();
    ok &= s.exact && s.cancels;
    let (long, t_long) = gen_interp_smooth_cycles(0.1, 0.01, 20).unwrap();
    let l = verify_second_order(&long, t_long).unwrap();
    ok &= l.exact && l.cancels;
    let dt = 0.1;
    let pdd = verify_second_order(&gen_pdd(dt, 2.0 * dt).unwrap(), 2.0 * dt).unwrap();
    ok &= pdd.a1.is_exact_zero() && pdd.a2.ticks == Some(-2) && rel(pdd.a2.value, -2.0 * dt * dt) < 1e-12;
    outcome(
        ok,
        format!(
            "CP cycle, CPDD, abrupt and smooth interpolation cancel in integer ticks; PDD cycle a2 = {} ticks ({:.3e})",
            pdd.a2.ticks.unwrap_or(0),
            pdd.a2.value
        ),
    )
}

fn two_pulse() -> Outcome {
    let cache = exciton_cache(0.01);
    let r = two_pulse_improvement(&cache, 0.2, 0.31).unwrap();
    let rep = ExactRepresentation::new(&cache, &[0.2, 0.31]).unwrap();
    let via_rep = rep.gamma_infinity(&cache, 2).unwrap();
    let g1 = single_pulse_infinity(&cache, 0.2).unwrap();
    let g0 = r.gamma_free_infinity;
    let ok = r.satisfied && r.gamma_two_infinity < g0 && via_rep < g0 && rel(via_rep, r.gamma_two_infinity) < 1e-12 && g1 > g0;
    outcome(
        ok,
        format!(
            "G0(inf)={g0:.6}, G2(inf)={:.6} (condition gain {:.3e}), G1(inf)={g1:.6}",
            r.gamma_two_infinity, r.gain
        ),
    )
}

fn natural_bath(model: SpectralModel) -> BathSpec {
    BathSpec::with_temperature_in(model, 1e4, 0.5, UnitsMode::Natural).unwrap()
}

fn band_cycles() -> Vec<u64> {
    (30..=6000).step_by(30).collect()
}

fn ohmic_regimes() -> Outcome {
    let bath = natural_bath(SpectralModel::ohmic_exp(0.5, 100.0).unwrap());
    let q = QuadratureSettings::default();
    let split = band_split_trace(&bath, 0.0015, &band_cycles(), &q).unwrap();
    let s = summarize_bands(&bath, &split).unwrap();
    let small = s.small_omega_late_change.unwrap_or(f64::INFINITY);
    let window = split.times.last().unwrap() - 2.0 * s.correlation_time;
    let plateau = s.plateau_length.unwrap_or(f64::INFINITY);
    let slope = s.resonant_slope.unwrap_or(0.0);
    let slope_err = rel(slope, s.predicted_slope);
    let ok = small < 0.01 && plateau >= 0.5 * window && slope_err < 0.05;
    outcome(
        ok,
        format!(
            "small-w change past 2 tau_c {small:.2e} (< 1%); 1% plateau {} over a {window:.2} window; resonant slope {slope:.4e} vs -dG_inf/dt {:.4e} (rel {slope_err:.1e}); dG_inf = {:.4e} vs printed 4.507e-7 (ratio {:.3}, reported only)",
            if plateau.is_finite() { format!("{plateau:.3}") } else { "persists".into() },
            s.predicted_slope,
            s.delta_gamma_inf,
            s.delta_gamma_inf / 4.507e-7
        ),
    )
}

fn cutoff_ordering() -> Outcome {
    let q = QuadratureSettings::default();
    let cycles = band_cycles();
    let run = |model: SpectralModel| {
        let bath = natural_bath(model);
        let split = band_split_trace(&bath, 0.0015, &cycles, &q).unwrap();
        let s = summarize_bands(&bath, &split).unwrap();
        let window = split.times.last().unwrap() - 2.0 * s.correlation_time;
        (s.plateau_length.unwrap_or(f64::INFINITY), window, s.delta_gamma_inf)
    };
    let (p_exp, w, d_exp) = run(SpectralModel::supraohmic_exp(1e-4, 100.0).unwrap());
    let (p_gauss, _, d_gauss) = run(SpectralModel::supraohmic_gauss(1e-4, 100.0).unwrap());
    let show = |p: f64| if p.is_finite() { format!("{p:.3}") } else { format!("> {w:.2}") };
    outcome(
        p_gauss > p_exp && d_gauss < d_exp,
        format!(
            "plateau gauss {} vs exp {}; dG_inf gauss {d_gauss:.3e} vs exp {d_exp:.3e}",
            show(p_gauss),
            show(p_exp)
        ),
    )
}

fn compare(specs: &[ProtocolKind], horizon: f64, step: f64) -> ProtocolComparison {
    let cache = exciton_cache(step);
    let specs: Vec<ProtocolSpec> = specs.iter().map(|k| ProtocolSpec::new(k.clone(), horizon).unwrap()).collect();
    let grid = uniform_grid(horizon, step).unwrap();
    compare_protocols(&cache, &specs, &grid).unwrap()
}

fn protocol_orderings() -> Outcome {
    let a = compare(
        &[
            ProtocolKind::InterpSmooth { dt_min: 0.1, delta2: 0.01 },
            ProtocolKind::InterpAbrupt { dt_min: 0.1 },
            ProtocolKind::Pdd { dt: 0.1 },
        ],
        10.0,
        0.0025,
    )
    .mean_maxima(2.0, 10.0);
    let b = compare(
        &[
            ProtocolKind::Pcdd { dt: 0.1, level: 2 },
            ProtocolKind::Pdd { dt: 0.1 },
            ProtocolKind::Pcdd { dt: 0.1, level: 3 },
        ],
        10.0,
        0.0025,
    )
    .mean_maxima(0.0, 10.0);
    let c = |dt: f64| {
        compare(&[ProtocolKind::CddSingle { dt }, ProtocolKind::Pdd { dt }], 10.0, dt / 40.0).mean_maxima(0.0, 10.0)
    };
    let c16 = c(0.016);
    let c55 = c(0.055);
    let v = |x: &[Option<f64>]| x.iter().map(|m| m.unwrap_or(f64::NAN)).collect::<Vec<_>>();
    let (a, b, c16, c55) = (v(&a), v(&b), v(&c16), v(&c55));
    let ok_a = a[0] > a[1] && a[1] > a[2];
    let ok_b = b[0] > b[1] && b[2] < b[1];
    let ok_c = c16[0] > c16[1] && c55[0] < c55[1];
    outcome(
        ok_a && ok_b && ok_c,
        format!(
            "(a) smooth {:.6} > abrupt {:.6} > PDD {:.6}: {ok_a}; (b) PCDD2 {:.6} > PDD {:.6} > PCDD3 {:.6}: {ok_b}; (c) CDD vs PDD at 0.016: {:.6} vs {:.6}, at 0.055: {:.6} vs {:.6}: {ok_c}",
            a[0], a[1], a[2], b[0], b[1], b[2], c16[0], c16[1], c55[0], c55[1]
        ),
    )
}

fn readout_robustness() -> Outcome {
    let r = compare(
        &[
            ProtocolKind::InterpSmooth { dt_min: 0.1, delta2: 0.01 },
            ProtocolKind::Cpdd { dt_cp: 0.1 },
        ],
        10.0,
        0.0025,
    );
    let smooth = r.entries[0].oscillation_amplitude;
    let cpdd = r.entries[1].oscillation_amplitude;
    let ok = matches!((smooth, cpdd), (Some(s), Some(c)) if s < c);
    let show = |a: Option<f64>| a.map_or("none".to_string(), |v| format!("{v:.5}"));
    outcome(ok, format!("late oscillation amplitude: smooth {} vs best allowed CPDD {}", show(smooth), show(cpdd)))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 12] = [
        (1, "oracle equivalence", oracle_equivalence),
        (2, "continuity at pulses", continuity),
        (3, "asymptotic increment", asymptote_convergence),
        (4, "PDD/CPDD midpoint identity", midpoint_identity),
        (5, "UDD constraint numbers", udd_numbers),
        (6, "effective T2 threshold", t2_threshold),
        (7, "Magnus cancellation", magnus_cancellation),
        (8, "two-pulse improvement", two_pulse),
        (9, "ohmic three regimes", ohmic_regimes),
        (10, "cutoff hardness ordering", cutoff_ordering),
        (11, "protocol orderings", protocol_orderings),
        (12, "readout robustness", readout_robustness),
    ];
    let filter: Option<u32> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut unexpected = Vec::new();
    for (id, name, run) in criteria {
        if filter.is_some_and(|f| f != id) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|_| outcome(false, "panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        let note = match (result.pass, KNOWN_RED.contains(&id)) {
            (false, true) => " [known red]",
            (true, true) => " [known red now passes]",
            _ => "",
        };
        println!("criterion {id:>2} {verdict}{note} {name}: {} ({secs:.1} s)", result.detail);
        if !result.pass && !KNOWN_RED.contains(&id) {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
