//! Figures of merit derived from dephasing traces.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoherence::{coherence_from_gamma, gamma_band, Band, CoherenceTrace, QuadratureSettings};
use crate::error::{Error, Result};
use crate::recursion::{delta_gamma_infinity, saturation_analysis, trace_exact, ExactRepresentation, Gamma0Cache};
use crate::sequences::{ProtocolKind, ProtocolSpec};
use crate::spectral::BathSpec;

/// Default qubit lifetime used as the comparison rate: 1 ns, in ps.
pub const DEFAULT_T1: f64 = 1000.0;

/// Fraction of the horizon, counted from the end, used for readout metrics.
pub const LATE_WINDOW_FRACTION: f64 = 0.2;

/// Minimum samples per oscillation period for readout metrics.
pub const MIN_SAMPLES_PER_PERIOD: f64 = 10.0;

/// Minimum oscillation periods inside the late window.
pub const MIN_LATE_PERIODS: usize = 3;

/// Long-time PDD dephasing rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T2Effective {
    pub dt: f64,
    pub delta_gamma_inf: f64,
    /// `Delta Gamma_inf / dt`.
    pub rate: f64,
    /// `dt / Delta Gamma_inf`; infinite when the rate vanishes.
    pub t2: f64,
    pub valid: bool,
}

/// Effective decay rate of PDD at interval `dt`.
pub fn t2_effective(bath: &BathSpec, dt: f64) -> Result<T2Effective> {
    let asym = delta_gamma_infinity(bath, dt)?;
    let rate = asym.value / dt;
    Ok(T2Effective {
        dt,
        delta_gamma_inf: asym.value,
        rate,
        t2: if rate > 0.0 { 1.0 / rate } else { f64::INFINITY },
        valid: asym.valid,
    })
}

/// `t2_effective` over a list of intervals.
pub fn t2_sweep(bath: &BathSpec, dts: &[f64]) -> Result<Vec<T2Effective>> {
    dts.iter().map(|&dt| t2_effective(bath, dt)).collect()
}

/// Interval in `[lo, hi]` at which the effective rate equals `target`,
/// located by bisection on the logarithm of the rate.
pub fn rate_threshold_interval(bath: &BathSpec, target: f64, lo: f64, hi: f64) -> Result<f64> {
    if !(target > 0.0) || !(lo > 0.0) || !(hi > lo) {
        return Err(Error::Parameter("need target > 0 and 0 < lo < hi".into()));
    }
    let f = |dt: f64| -> Result<f64> {
        let r = t2_effective(bath, dt)?.rate;
        Ok(if r > 0.0 { r.ln() - target.ln() } else { f64::NEG_INFINITY })
    };
    let (mut a, mut b) = (lo, hi);
    let (fa, fb) = (f(a)?, f(b)?);
    if fa > 0.0 || fb < 0.0 {
        return Err(Error::Convergence(format!(
            "rate does not cross {target} between {lo} and {hi}"
        )));
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if f(m)? < 0.0 {
            a = m;
        } else {
            b = m;
        }
        if b - a <= 1e-12 * b {
            break;
        }
    }
    Ok(0.5 * (a + b))
}

/// Coherence prediction after saturation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongTimePrediction {
    pub t: f64,
    pub n: usize,
    pub n_sat: usize,
    /// `exp(-Gamma_{n_sat}((n_sat + 1/2) dt) - (n - n_sat) Delta Gamma_inf)`.
    pub ratio: f64,
    /// `exp(-t Delta Gamma_inf / dt)`.
    pub ratio_simplified: f64,
}

impl LongTimePrediction {
    /// Plotted coherence `|ratio|^2`.
    pub fn coherence(&self) -> f64 {
        self.ratio * self.ratio
    }
}

/// Off-diagonal element at the coherence maximum following `t` under PDD,
/// from the saturated increment.
pub fn long_time_coherence_model(cache: &Gamma0Cache, dt: f64, t: f64) -> Result<LongTimePrediction> {
    let report = saturation_analysis(cache, dt, None)?;
    long_time_coherence_with(cache, dt, t, report.n_sat, report.delta_gamma_inf)
}

/// As [`long_time_coherence_model`] with a known saturation index.
pub fn long_time_coherence_with(
    cache: &Gamma0Cache,
    dt: f64,
    t: f64,
    n_sat: usize,
    delta_gamma_inf: f64,
) -> Result<LongTimePrediction> {
    let t_sat = n_sat as f64 * dt;
    if !(t > t_sat) {
        return Err(Error::Domain(format!("time {t} does not exceed the saturation time {t_sat}")));
    }
    let n = (t / dt + 1e-9).floor() as usize;
    let times: Vec<f64> = (1..=n_sat).map(|k| k as f64 * dt).collect();
    let rep = ExactRepresentation::new(cache, &times)?;
    let g_sat = rep.gamma_with(cache, n_sat, (n_sat as f64 + 0.5) * dt)?;
    let gamma = g_sat + (n - n_sat) as f64 * delta_gamma_inf;
    Ok(LongTimePrediction {
        t,
        n,
        n_sat,
        ratio: (-gamma).exp(),
        ratio_simplified: (-t * delta_gamma_inf / dt).exp(),
    })
}

/// Indices of 3-point local maxima.
pub fn local_maxima(values: &[f64]) -> Vec<usize> {
    (1..values.len().saturating_sub(1))
        .filter(|&i| values[i] > values[i - 1] && values[i] >= values[i + 1])
        .collect()
}

/// Indices of 3-point local minima.
pub fn local_minima(values: &[f64]) -> Vec<usize> {
    (1..values.len().saturating_sub(1))
        .filter(|&i| values[i] < values[i - 1] && values[i] <= values[i + 1])
        .collect()
}

/// Refines a sampled maximum with a parabola through its neighbours.
pub fn refine_extremum(grid: &[f64], values: &[f64], i: usize) -> (f64, f64) {
    if i == 0 || i + 1 >= values.len() {
        return (grid[i], values[i]);
    }
    let (y0, y1, y2) = (values[i - 1], values[i], values[i + 1]);
    let denom = y0 - 2.0 * y1 + y2;
    if denom == 0.0 {
        return (grid[i], y1);
    }
    let offset = 0.5 * (y0 - y2) / denom;
    let h = grid[i + 1] - grid[i];
    (grid[i] + offset * h, y1 - 0.25 * (y0 - y2) * offset)
}

/// Coherence maxima `(t, value)` of a trace.
pub fn coherence_maxima(trace: &CoherenceTrace, refine: bool) -> Vec<(f64, f64)> {
    local_maxima(&trace.coherence)
        .into_iter()
        .map(|i| {
            if refine {
                refine_extremum(&trace.grid, &trace.coherence, i)
            } else {
                (trace.grid[i], trace.coherence[i])
            }
        })
        .collect()
}

/// Mean of the maxima with `lo <= t <= hi`.
pub fn mean_maxima(maxima: &[(f64, f64)], lo: f64, hi: f64) -> Option<f64> {
    let sel: Vec<f64> = maxima.iter().filter(|m| m.0 >= lo && m.0 <= hi).map(|m| m.1).collect();
    if sel.is_empty() {
        None
    } else {
        Some(sel.iter().sum::<f64>() / sel.len() as f64)
    }
}

/// Mean peak-to-trough of the coherence over the last fifth of the trace.
///
/// A trace without interior extrema in that window has amplitude zero.
pub fn readout_robustness(trace: &CoherenceTrace) -> Result<f64> {
    if trace.len() < 3 {
        return Ok(0.0);
    }
    let t_end = *trace.grid.last().unwrap();
    let t_start = t_end - LATE_WINDOW_FRACTION * (t_end - trace.grid[0]);
    let first = trace.grid.partition_point(|&t| t < t_start);
    let c = &trace.coherence[first..];
    let mut extrema: Vec<(usize, bool)> = local_maxima(c)
        .into_iter()
        .map(|i| (i, true))
        .chain(local_minima(c).into_iter().map(|i| (i, false)))
        .collect();
    if extrema.len() < 2 {
        return Ok(0.0);
    }
    extrema.sort_unstable();
    let maxima: Vec<usize> = extrema.iter().filter(|e| e.1).map(|e| e.0).collect();
    if maxima.len() < MIN_LATE_PERIODS {
        return Err(Error::Resolution(format!(
            "only {} oscillation periods in the late window",
            maxima.len()
        )));
    }
    let period_samples = (maxima[maxima.len() - 1] - maxima[0]) as f64 / (maxima.len() - 1) as f64;
    if period_samples < MIN_SAMPLES_PER_PERIOD {
        return Err(Error::Resolution(format!(
            "{period_samples:.1} samples per period, need {MIN_SAMPLES_PER_PERIOD}"
        )));
    }
    let swings: Vec<f64> = extrema
        .windows(2)
        .filter(|w| w[0].1 != w[1].1)
        .map(|w| (c[w[0].0] - c[w[1].0]).abs())
        .collect();
    if swings.is_empty() {
        return Ok(0.0);
    }
    Ok(swings.iter().sum::<f64>() / swings.len() as f64)
}

/// One protocol in a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEntry {
    pub protocol: ProtocolSpec,
    pub trace: CoherenceTrace,
    pub maxima: Vec<(f64, f64)>,
    /// Late-time peak-to-trough; `None` if the trace is too coarse.
    pub oscillation_amplitude: Option<f64>,
    /// Effective decay time for periodic protocols.
    pub t2_eff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolComparison {
    pub entries: Vec<ComparisonEntry>,
}

impl ProtocolComparison {
    /// Time-averaged maxima of every entry over `[lo, hi]`.
    pub fn mean_maxima(&self, lo: f64, hi: f64) -> Vec<Option<f64>> {
        self.entries.iter().map(|e| mean_maxima(&e.maxima, lo, hi)).collect()
    }
}

/// Exact traces for each protocol on a shared grid, in input order.
pub fn compare_protocols(cache: &Gamma0Cache, specs: &[ProtocolSpec], grid: &[f64]) -> Result<ProtocolComparison> {
    let mut entries = Vec::with_capacity(specs.len());
    for spec in specs {
        let seq = spec.generate()?;
        let trace = trace_exact(cache, &seq, grid)?;
        let maxima = coherence_maxima(&trace, false);
        let oscillation_amplitude = readout_robustness(&trace).ok();
        let t2_eff = match spec.kind {
            ProtocolKind::Pdd { dt } => Some(t2_effective(cache.bath(), dt)?.t2),
            // Carr-Purcell repeats a PDD pattern of twice the interval.
            ProtocolKind::Cpdd { dt_cp } => Some(t2_effective(cache.bath(), 2.0 * dt_cp)?.t2),
            _ => None,
        };
        entries.push(ComparisonEntry {
            protocol: spec.clone(),
            trace,
            maxima,
            oscillation_amplitude,
            t2_eff,
        });
    }
    Ok(ProtocolComparison { entries })
}

/// Time from `start` until `values` first falls below `(1 - drop)` times its
/// value at `start`; `None` if it never does on the grid.
pub fn plateau_length(grid: &[f64], values: &[f64], start: f64, drop: f64) -> Result<Option<f64>> {
    if grid.len() != values.len() || grid.is_empty() {
        return Err(Error::Parameter("grid and values must be non-empty and of equal length".into()));
    }
    let i0 = grid.partition_point(|&t| t < start);
    if i0 >= grid.len() {
        return Err(Error::Domain(format!("plateau start {start} lies beyond the grid")));
    }
    let level = values[i0] * (1.0 - drop);
    Ok(grid[i0..]
        .iter()
        .zip(&values[i0..])
        .find(|(_, &v)| v < level)
        .map(|(&t, _)| t - grid[i0]))
}

/// Least-squares slope of `ln(values)` against `times`.
pub fn fit_log_slope(times: &[f64], values: &[f64]) -> Result<f64> {
    if times.len() != values.len() || times.len() < 2 {
        return Err(Error::Parameter("need at least two paired samples".into()));
    }
    if values.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Domain("log-slope needs positive values".into()));
    }
    let n = times.len() as f64;
    let mx = times.iter().sum::<f64>() / n;
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = times.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = times.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

/// Coherence for a list of `Gamma` values.
pub fn coherence_series(gamma: &[f64]) -> Vec<f64> {
    gamma.iter().map(|&g| coherence_from_gamma(g)).collect()
}

/// Stroboscopic PDD dephasing split into frequency bands, sampled at the
/// end of selected cycles (`t = 2 n dt`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSplitTrace {
    pub dt: f64,
    pub cycles: Vec<u64>,
    pub times: Vec<f64>,
    pub full: Vec<f64>,
    pub small_omega: Vec<f64>,
    pub resonant: Vec<f64>,
}

/// Evaluates the three band integrals for every cycle count in `cycles`.
pub fn band_split_trace(bath: &BathSpec, dt: f64, cycles: &[u64], q: &QuadratureSettings) -> Result<BandSplitTrace> {
    if cycles.is_empty() {
        return Err(Error::Parameter("need at least one cycle count".into()));
    }
    let rows: Vec<(f64, f64, f64)> = cycles
        .par_iter()
        .map(|&n| {
            Ok((
                gamma_band(bath, dt, n, Band::Full, q)?,
                gamma_band(bath, dt, n, Band::SmallOmega, q)?,
                gamma_band(bath, dt, n, Band::Resonant, q)?,
            ))
        })
        .collect::<Result<_>>()?;
    Ok(BandSplitTrace {
        dt,
        cycles: cycles.to_vec(),
        times: cycles.iter().map(|&n| 2.0 * n as f64 * dt).collect(),
        full: rows.iter().map(|r| r.0).collect(),
        small_omega: rows.iter().map(|r| r.1).collect(),
        resonant: rows.iter().map(|r| r.2).collect(),
    })
}

/// Regime indicators of a band split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSummary {
    pub dt: f64,
    pub omega_res: f64,
    pub delta_gamma_inf: f64,
    pub valid: bool,
    pub correlation_time: f64,
    /// Relative change of the small-frequency part from the first sample
    /// at or after `2 tau_c` to the last sample.
    pub small_omega_late_change: Option<f64>,
    /// Time from `2 tau_c` until `exp(-Gamma)` drops 1% below its value there.
    pub plateau_length: Option<f64>,
    /// Slope of `ln exp(-Gamma_res)` over the second half of the samples.
    pub resonant_slope: Option<f64>,
    /// `-Delta Gamma_inf / dt`.
    pub predicted_slope: f64,
}

/// Fraction of the total drop used to delimit the plateau.
pub const PLATEAU_DROP: f64 = 0.01;

pub fn summarize_bands(bath: &BathSpec, split: &BandSplitTrace) -> Result<BandSummary> {
    let asym = delta_gamma_infinity(bath, split.dt)?;
    let tau_c = bath.correlation_time()?;
    let start = 2.0 * tau_c;
    let i0 = split.times.partition_point(|&t| t < start);
    let small_omega_late_change = (i0 + 1 < split.times.len()).then(|| {
        let a = split.small_omega[i0];
        let b = *split.small_omega.last().unwrap();
        (b - a).abs() / a.abs().max(f64::MIN_POSITIVE)
    });
    let decay: Vec<f64> = split.full.iter().map(|g| (-g).exp()).collect();
    let plateau_length = if i0 < split.times.len() {
        plateau_length(&split.times, &decay, start, PLATEAU_DROP)?
    } else {
        None
    };
    let half = split.times.len() / 2;
    let resonant_slope = if split.times.len() - half >= 2 {
        let res: Vec<f64> = split.resonant[half..].iter().map(|g| (-g).exp()).collect();
        fit_log_slope(&split.times[half..], &res).ok()
    } else {
        None
    };
    Ok(BandSummary {
        dt: split.dt,
        omega_res: asym.omega_res,
        delta_gamma_inf: asym.value,
        valid: asym.valid,
        correlation_time: tau_c,
        small_omega_late_change,
        plateau_length,
        resonant_slope,
        predicted_slope: -asym.value / split.dt,
    })
}
