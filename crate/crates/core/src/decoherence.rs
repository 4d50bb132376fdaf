//! Frequency-domain evaluation of free and controlled dephasing.
//!
//! With `n` pulses at `t_1 < ... < t_n <= t` the decoherence function is
//!
//! ```text
//! Gamma_n(t) = int_0^inf eta(w) |y_n(w, t)|^2 dw
//! y_n = 1 + (-1)^(n+1) e^{iwt} + 2 sum_m (-1)^m e^{iw t_m}
//! ```
//!
//! and the off-diagonal density matrix element decays as `exp(-Gamma)`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, uniform_breakpoints};
use crate::spectral::BathSpec;

pub use crate::quadrature::QuadratureSettings;

/// Upper bound on oscillation-resolving breakpoints per integral.
pub const MAX_OSCILLATION_PANELS: usize = 250_000;

/// Samples per pulse interval in default trace grids.
pub const SAMPLES_PER_INTERVAL: usize = 40;

/// Pulse instants stored as integer multiples of a base tick.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickTimes {
    pub tick: TickUnit,
    pub counts: Vec<u64>,
}

/// Size of one tick, kept as a float at the boundary only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickUnit(pub f64);

impl Eq for TickUnit {}

/// Strictly increasing instants of instantaneous bit-flip pulses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    times: Vec<f64>,
    min_separation: Option<f64>,
    label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    ticks: Option<TickTimes>,
}

impl PulseSequence {
    pub fn new(times: Vec<f64>, min_separation: Option<f64>, label: impl Into<String>) -> Result<Self> {
        if let Some(&t) = times.first() {
            if !(t > 0.0) {
                return Err(Error::Domain(format!("first pulse must be at t > 0, got {t}")));
            }
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Domain("pulse times must be finite".into()));
        }
        if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::Domain(format!(
                "pulse times must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if let Some(d) = min_separation {
            if !(d > 0.0) {
                return Err(Error::Parameter(format!("minimum separation must be positive, got {d}")));
            }
        }
        Ok(Self {
            times,
            min_separation,
            label: label.into(),
            ticks: None,
        })
    }

    /// Sequence with no pulses.
    pub fn free() -> Self {
        Self {
            times: Vec::new(),
            min_separation: None,
            label: "free".into(),
            ticks: None,
        }
    }

    /// Builds a sequence from exact tick counts.
    pub fn from_ticks(counts: Vec<u64>, tick: f64, min_separation: Option<f64>, label: impl Into<String>) -> Result<Self> {
        if !(tick > 0.0) {
            return Err(Error::Parameter(format!("tick must be positive, got {tick}")));
        }
        let times = counts.iter().map(|&c| c as f64 * tick).collect();
        let mut seq = Self::new(times, min_separation, label)?;
        seq.ticks = Some(TickTimes {
            tick: TickUnit(tick),
            counts,
        });
        Ok(seq)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn min_separation(&self) -> Option<f64> {
        self.min_separation
    }

    pub fn with_min_separation(mut self, d: Option<f64>) -> Self {
        self.min_separation = d;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Exact tick representation when the generator produced one.
    pub fn ticks(&self) -> Option<&TickTimes> {
        self.ticks.as_ref()
    }

    /// Number of pulses at instants `<= t`.
    pub fn count_until(&self, t: f64) -> usize {
        self.times.partition_point(|&x| x <= t)
    }

    /// Number of pulses at instants `< t`.
    pub fn count_before(&self, t: f64) -> usize {
        self.times.partition_point(|&x| x < t)
    }

    /// First `n` pulses.
    pub fn prefix(&self, n: usize) -> Self {
        let n = n.min(self.times.len());
        Self {
            times: self.times[..n].to_vec(),
            min_separation: self.min_separation,
            label: self.label.clone(),
            ticks: self.ticks.as_ref().map(|t| TickTimes {
                tick: t.tick,
                counts: t.counts[..n].to_vec(),
            }),
        }
    }

    /// Intervals `t_1 - 0, t_2 - t_1, ...` that are shorter than the declared
    /// minimum separation, as `(index, gap)` pairs.
    pub fn separation_violations(&self) -> Vec<(usize, f64)> {
        let Some(d) = self.min_separation else {
            return Vec::new();
        };
        let mut prev = 0.0;
        let mut out = Vec::new();
        for (i, &t) in self.times.iter().enumerate() {
            let gap = t - prev;
            if gap < d * (1.0 - 1e-12) {
                out.push((i, gap));
            }
            prev = t;
        }
        out
    }
}

/// Sampled dephasing `Gamma(t)` and coherence `exp(-2 Gamma)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceTrace {
    pub grid: Vec<f64>,
    pub gamma: Vec<f64>,
    pub coherence: Vec<f64>,
    pub sequence: PulseSequence,
    pub bath: BathSpec,
}

impl CoherenceTrace {
    pub fn from_gamma(grid: Vec<f64>, gamma: Vec<f64>, sequence: PulseSequence, bath: BathSpec) -> Result<Self> {
        if grid.len() != gamma.len() {
            return Err(Error::Parameter("grid and gamma lengths differ".into()));
        }
        let coherence = gamma.iter().map(|&g| coherence_from_gamma(g)).collect();
        Ok(Self {
            grid,
            gamma,
            coherence,
            sequence,
            bath,
        })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

/// `|exp(-Gamma)|^2`.
pub fn coherence_from_gamma(gamma: f64) -> f64 {
    (-2.0 * gamma).exp()
}

/// Uniform grid `0, h, 2h, ...` up to and including `horizon`.
pub fn uniform_grid(horizon: f64, step: f64) -> Result<Vec<f64>> {
    if !(horizon >= 0.0) || !(step > 0.0) {
        return Err(Error::Parameter(format!("invalid grid (horizon {horizon}, step {step})")));
    }
    let n = (horizon / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|k| k as f64 * step).collect();
    if let Some(&last) = grid.last() {
        if horizon - last > 1e-9 * step {
            grid.push(horizon);
        }
    }
    Ok(grid)
}

/// Default grid: `SAMPLES_PER_INTERVAL` samples per `interval`.
pub fn default_grid(horizon: f64, interval: f64) -> Result<Vec<f64>> {
    uniform_grid(horizon, interval / SAMPLES_PER_INTERVAL as f64)
}

/// Breakpoints for a kernel integral: the cutoff and one cut per period of
/// the fastest phase `w * time_scale`.
pub(crate) fn kernel_breakpoints(bath: &BathSpec, upper: f64, time_scale: f64, extra: &[f64]) -> Vec<f64> {
    let mut cuts: Vec<f64> = extra.to_vec();
    if let Some(wc) = bath.model.cutoff {
        cuts.push(wc);
    }
    if time_scale > 0.0 {
        cuts.extend(uniform_breakpoints(0.0, upper, 2.0 * PI / time_scale, MAX_OSCILLATION_PANELS));
    } else {
        cuts.extend(uniform_breakpoints(0.0, upper, upper / 16.0, 16));
    }
    cuts
}

/// Integrates `eta(w) * weight(w)` over `[lo, hi]`.
pub(crate) fn integrate_eta<W>(
    bath: &BathSpec,
    q: &QuadratureSettings,
    lo: f64,
    hi: f64,
    time_scale: f64,
    extra: &[f64],
    weight: W,
) -> Result<f64>
where
    W: Fn(f64) -> f64,
{
    q.validate()?;
    if !(hi > lo) {
        return Ok(0.0);
    }
    let cuts = kernel_breakpoints(bath, hi, time_scale, extra);
    let f = |w: f64| {
        if w <= 0.0 {
            0.0
        } else {
            bath.eta_unchecked(w) * weight(w)
        }
    };
    integrate(f, lo, hi, &cuts, q).map(|r| r.value)
}

/// Free dephasing `Gamma_0(t) = 2 int eta(w) (1 - cos wt) dw`.
pub fn gamma_free(bath: &BathSpec, t: f64, q: &QuadratureSettings) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time must be non-negative, got {t}")));
    }
    if t == 0.0 || bath.model.coupling == 0.0 {
        return Ok(0.0);
    }
    let upper = bath.integration_limit(q.omega_max_factor);
    // 1 - cos x = 2 sin^2(x/2) avoids cancellation at small wt.
    integrate_eta(bath, q, 0.0, upper, t, &[], |w| {
        let s = (0.5 * w * t).sin();
        4.0 * s * s
    })
}

/// Saturated free dephasing `Gamma_0(inf) = 2 int eta(w) dw`.
pub fn gamma_infinity_free(bath: &BathSpec, q: &QuadratureSettings) -> Result<f64> {
    if bath.model.is_ohmic() {
        return Err(Error::Divergence(
            "free dephasing grows without bound for an ohmic bath".into(),
        ));
    }
    if let Some(table) = &bath.model.table {
        if !table.vanishes_near_zero() {
            return Err(Error::Divergence(
                "tabulated density does not vanish fast enough at zero frequency".into(),
            ));
        }
    }
    if bath.model.coupling == 0.0 {
        return Ok(0.0);
    }
    let upper = bath.integration_limit(q.omega_max_factor);
    integrate_eta(bath, q, 0.0, upper, 0.0, &[], |_| 2.0)
}

/// `y_n` from the pulses `<= t`, as `(re, im)`.
///
/// Uses `e^{i x} - 1 = 2 i sin(x/2) e^{i x/2}` so that small phases do not cancel.
pub(crate) fn filter_amplitude(pulses: &[f64], t: f64, omega: f64) -> (f64, f64) {
    let n = pulses.len();
    let mut re = 0.0;
    let mut im = 0.0;
    let mut add = |coef: f64, phase: f64| {
        let h = 0.5 * phase;
        let s = h.sin();
        // 2i s (cos h + i sin h) = -2 s sin h + 2 i s cos h
        re += coef * (-2.0 * s * s);
        im += coef * (2.0 * s * h.cos());
    };
    let sign_end = if n % 2 == 0 { -1.0 } else { 1.0 };
    add(sign_end, omega * t);
    for (m, &tm) in pulses.iter().enumerate() {
        let sign = if (m + 1) % 2 == 0 { 2.0 } else { -2.0 };
        add(sign, omega * tm);
    }
    (re, im)
}

/// `|y_n(wt)|^2` for the pulses of `seq`, all of which must lie in `[0, total_t]`.
pub fn filter_function(seq: &PulseSequence, total_t: f64, omega: f64) -> Result<f64> {
    if !(omega >= 0.0) {
        return Err(Error::Domain(format!("frequency must be non-negative, got {omega}")));
    }
    if let Some(&last) = seq.times().last() {
        if last > total_t {
            return Err(Error::Domain(format!("pulse at {last} lies beyond t = {total_t}")));
        }
    }
    let (re, im) = filter_amplitude(seq.times(), total_t, omega);
    Ok(re * re + im * im)
}

/// Controlled dephasing from the filter-function integral, using the pulses
/// at instants `<= t`.
pub fn gamma_controlled_direct(bath: &BathSpec, seq: &PulseSequence, t: f64, q: &QuadratureSettings) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time must be non-negative, got {t}")));
    }
    if t == 0.0 || bath.model.coupling == 0.0 {
        return Ok(0.0);
    }
    let n = seq.count_until(t);
    if n == 0 {
        return gamma_free(bath, t, q);
    }
    let pulses = &seq.times()[..n];
    let upper = bath.integration_limit(q.omega_max_factor);
    // Finest structure in |y|^2 comes from the shortest phase difference set;
    // resolving the period of the longest phase is sufficient for smooth panels.
    integrate_eta(bath, q, 0.0, upper, t, &[], |w| {
        let (re, im) = filter_amplitude(pulses, t, w);
        re * re + im * im
    })
}

/// Direct-integral trace on `grid`, evaluated in parallel.
pub fn trace_direct(bath: &BathSpec, seq: &PulseSequence, grid: &[f64], q: &QuadratureSettings) -> Result<CoherenceTrace> {
    let gamma: Result<Vec<f64>> = grid
        .par_iter()
        .map(|&t| gamma_controlled_direct(bath, seq, t, q))
        .collect();
    CoherenceTrace::from_gamma(grid.to_vec(), gamma?, seq.clone(), bath.clone())
}

/// `sin^2(n x) tan^2(x/2)` evaluated relative to the nearest pole
/// `x = (2k+1) pi`, where it stays bounded by `4 n^2`.
pub fn pdd_kernel(n: u64, x: f64) -> f64 {
    let k = ((x - PI) / (2.0 * PI)).round();
    let v = x - (2.0 * k + 1.0) * PI;
    let half = 0.5 * v;
    let sh = half.sin();
    let nf = n as f64;
    if sh == 0.0 {
        return 4.0 * nf * nf;
    }
    let r = (nf * v).sin() * half.cos() / sh;
    r * r
}

/// Which part of the stroboscopic PDD integral to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Band {
    /// `[0, w_res / 2]`
    SmallOmega,
    /// `[w_res / 2, 3 w_res / 2]`
    Resonant,
    /// Whole frequency range.
    Full,
}

impl std::str::FromStr for Band {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "small-omega" | "small" => Ok(Band::SmallOmega),
            "resonant" | "res" => Ok(Band::Resonant),
            "full" => Ok(Band::Full),
            other => Err(format!("unknown band '{other}'")),
        }
    }
}

/// PDD dephasing `Gamma_{2n}(2n dt)` at the end of `n_cycles` cycles,
/// `int 4 eta(w) sin^2(w n dt) tan^2(w dt / 2) dw`.
pub fn gamma_pdd_stroboscopic(bath: &BathSpec, dt: f64, n_cycles: u64, q: &QuadratureSettings) -> Result<f64> {
    gamma_band(bath, dt, n_cycles, Band::Full, q)
}

/// Band-restricted stroboscopic PDD integral.
pub fn gamma_band(bath: &BathSpec, dt: f64, n_cycles: u64, band: Band, q: &QuadratureSettings) -> Result<f64> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Parameter(format!("pulse interval must be positive, got {dt}")));
    }
    if n_cycles == 0 {
        return Err(Error::Parameter("at least one cycle is required".into()));
    }
    if bath.model.coupling == 0.0 {
        return Ok(0.0);
    }
    let w_res = PI / dt;
    let upper = bath.integration_limit(q.omega_max_factor);
    let (lo, hi) = match band {
        Band::SmallOmega => (0.0, 0.5 * w_res),
        Band::Resonant => (0.5 * w_res, 1.5 * w_res),
        Band::Full => (0.0, upper),
    };
    let hi = hi.min(upper);
    if !(hi > lo) {
        return Ok(0.0);
    }
    // Poles of tan^2 at odd multiples of w_res become panel edges.
    let mut poles = Vec::new();
    let mut k = 0u64;
    loop {
        let p = (2 * k + 1) as f64 * w_res;
        if p >= hi {
            break;
        }
        if p > lo {
            poles.push(p);
        }
        k += 1;
    }
    let n = n_cycles;
    let time_scale = 2.0 * n as f64 * dt;
    integrate_eta(bath, q, lo, hi, time_scale, &poles, |w| 4.0 * pdd_kernel(n, w * dt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::SpectralModel;
    use crate::units::UnitsMode;

    fn tight() -> QuadratureSettings {
        QuadratureSettings::default().with_rel_tol(1e-11)
    }

    #[test]
    fn sequence_validation() {
        assert!(PulseSequence::new(vec![0.0, 1.0], None, "x").is_err());
        assert!(PulseSequence::new(vec![1.0, 1.0], None, "x").is_err());
        assert!(PulseSequence::new(vec![2.0, 1.0], None, "x").is_err());
        let s = PulseSequence::new(vec![0.05, 0.3], Some(0.1), "x").unwrap();
        assert_eq!(s.separation_violations(), vec![(0, 0.05)]);
        assert_eq!(s.count_until(0.3), 2);
        assert_eq!(s.count_before(0.3), 1);
    }

    #[test]
    fn free_filter_at_pi() {
        let f = filter_function(&PulseSequence::free(), 1.0, PI).unwrap();
        assert!((f - 4.0).abs() < 1e-14);
    }

    #[test]
    fn single_midpoint_pulse_filter() {
        let s = PulseSequence::new(vec![0.5], None, "echo").unwrap();
        let f = filter_function(&s, 1.0, 2.0 * PI).unwrap();
        assert!((f - 16.0).abs() < 1e-12);
    }

    #[test]
    fn filter_vanishes_at_zero_frequency() {
        let s = PulseSequence::new(vec![0.1, 0.4, 0.45], None, "x").unwrap();
        assert_eq!(filter_function(&s, 1.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn filter_rejects_late_pulse() {
        let s = PulseSequence::new(vec![2.0], None, "x").unwrap();
        assert!(matches!(filter_function(&s, 1.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn filter_matches_textbook_form() {
        let s = PulseSequence::new(vec![0.13, 0.37, 0.71, 0.9], None, "x").unwrap();
        let t: f64 = 1.0;
        for &w in &[0.01f64, 1.3, 17.0, 250.0] {
            let n = s.len() as i32;
            let mut re = 1.0 + (-1f64).powi(n + 1) * (w * t).cos();
            let mut im = (-1f64).powi(n + 1) * (w * t).sin();
            for (m, &tm) in s.times().iter().enumerate() {
                let sign = (-1f64).powi(m as i32 + 1);
                re += 2.0 * sign * (w * tm).cos();
                im += 2.0 * sign * (w * tm).sin();
            }
            let direct = re * re + im * im;
            let got = filter_function(&s, t, w).unwrap();
            assert!((got - direct).abs() < 1e-11 * (1.0 + direct), "{w}: {got} {direct}");
        }
    }

    #[test]
    fn free_dephasing_zero_time() {
        let bath = BathSpec::exciton_gaas_77k();
        assert_eq!(gamma_free(&bath, 0.0, &QuadratureSettings::default()).unwrap(), 0.0);
    }

    #[test]
    fn exciton_free_dephasing_saturates() {
        let bath = BathSpec::exciton_gaas_77k();
        let q = QuadratureSettings::default();
        let g8 = gamma_free(&bath, 8.0, &q).unwrap();
        let g10 = gamma_free(&bath, 10.0, &q).unwrap();
        assert!(((g8 - g10) / g10).abs() < 1e-3);
        let ginf = gamma_infinity_free(&bath, &q).unwrap();
        let g50 = gamma_free(&bath, 50.0, &q).unwrap();
        assert!(((ginf - g50) / ginf).abs() < 1e-6, "{ginf} {g50}");
    }

    #[test]
    fn ohmic_free_dephasing_keeps_growing() {
        let model = SpectralModel::ohmic_exp(0.5, 100.0).unwrap();
        let bath = BathSpec::new(model, 1e4, 0.5, UnitsMode::Natural).unwrap();
        let q = QuadratureSettings::default();
        let tau = bath.correlation_time().unwrap();
        let g5 = gamma_free(&bath, 5.0 * tau, &q).unwrap();
        let g10 = gamma_free(&bath, 10.0 * tau, &q).unwrap();
        assert!(g10 > 1.05 * g5);
        assert!(matches!(gamma_infinity_free(&bath, &q), Err(Error::Divergence(_))));
    }

    #[test]
    fn zero_coupling_is_zero() {
        let model = SpectralModel::supraohmic_gauss(0.0, 100.0).unwrap();
        let bath = BathSpec::new(model, 1e4, 0.5, UnitsMode::Natural).unwrap();
        let q = QuadratureSettings::default();
        assert_eq!(gamma_infinity_free(&bath, &q).unwrap(), 0.0);
        assert_eq!(gamma_pdd_stroboscopic(&bath, 0.01, 3, &q).unwrap(), 0.0);
    }

    #[test]
    fn supraohmic_infinity_matches_high_precision() {
        // 50-digit reference: 2 * int_0^inf eta dw with F = 1e-4, wc = 100, T = 1e4.
        let model = SpectralModel::supraohmic_gauss(1e-4, 100.0).unwrap();
        let bath = BathSpec::new(model, 1e4, 0.5, UnitsMode::Natural).unwrap();
        let got = gamma_infinity_free(&bath, &tight()).unwrap();
        let reference = SUPRAOHMIC_GAUSS_INFINITY;
        assert!(((got - reference) / reference).abs() < 1e-9, "{got:.17e}");
    }

    const SUPRAOHMIC_GAUSS_INFINITY: f64 = 177.246_123_611_143_18;

    #[test]
    fn empty_sequence_direct_equals_free() {
        let bath = BathSpec::exciton_gaas_77k();
        let q = QuadratureSettings::default();
        let a = gamma_controlled_direct(&bath, &PulseSequence::free(), 1.7, &q).unwrap();
        let b = gamma_free(&bath, 1.7, &q).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn direct_is_continuous_at_pulse() {
        let bath = BathSpec::exciton_gaas_77k();
        let q = tight();
        let s = PulseSequence::new(vec![0.2, 0.31], None, "pair").unwrap();
        let at = gamma_controlled_direct(&bath, &s, 0.31, &q).unwrap();
        let before = gamma_controlled_direct(&bath, &s.prefix(1), 0.31, &q).unwrap();
        assert!(((at - before) / at).abs() < 1e-9);
    }

    #[test]
    fn pdd_kernel_matches_naive_form_away_from_poles() {
        for &n in &[1u64, 3, 17] {
            for &x in &[0.1, 1.0, 2.5, 4.0, 7.7, 12.0] {
                let naive = ((n as f64 * x).sin() * (x / 2.0).tan()).powi(2);
                let got = pdd_kernel(n, x);
                assert!((got - naive).abs() < 1e-9 * (1.0 + naive), "{n} {x}: {got} {naive}");
            }
            assert!((pdd_kernel(n, PI) - 4.0 * (n * n) as f64).abs() < 1e-9);
            assert!((pdd_kernel(n, 3.0 * PI) - 4.0 * (n * n) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn pdd_kernel_matches_fejer_sum() {
        for &n in &[1u64, 2, 5] {
            for &x in &[0.3, 3.0, PI + 1e-7, 9.1] {
                let mut re = 0.0;
                let mut im = 0.0;
                for k in 0..(2 * n) {
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    re += sign * (k as f64 * x).cos();
                    im += sign * (k as f64 * x).sin();
                }
                let fejer = (x / 2.0).sin().powi(2) * (re * re + im * im);
                let got = pdd_kernel(n, x);
                assert!((got - fejer).abs() < 1e-9 * (1.0 + fejer), "{n} {x}: {got} {fejer}");
            }
        }
    }

    #[test]
    fn stroboscopic_matches_direct() {
        let bath = BathSpec::exciton_gaas_77k();
        let q = tight();
        let dt = 0.1;
        let n = 5u64;
        let times: Vec<f64> = (1..=2 * n).map(|k| k as f64 * dt).collect();
        let s = PulseSequence::new(times, None, "pdd").unwrap();
        let direct = gamma_controlled_direct(&bath, &s, 2.0 * n as f64 * dt, &q).unwrap();
        let strob = gamma_pdd_stroboscopic(&bath, dt, n, &q).unwrap();
        assert!(((direct - strob) / direct).abs() < 1e-6, "{direct} {strob}");
    }

    #[test]
    fn bands_do_not_exceed_total() {
        let model = SpectralModel::ohmic_exp(0.5, 100.0).unwrap();
        let bath = BathSpec::new(model, 1e4, 0.5, UnitsMode::Natural).unwrap();
        let q = QuadratureSettings::default();
        let dt = 0.0015;
        let full = gamma_band(&bath, dt, 20, Band::Full, &q).unwrap();
        let small = gamma_band(&bath, dt, 20, Band::SmallOmega, &q).unwrap();
        let res = gamma_band(&bath, dt, 20, Band::Resonant, &q).unwrap();
        assert!(small <= full && res <= full);
        assert!(small + res <= full * (1.0 + 1e-9));
    }

    #[test]
    fn grid_includes_endpoints() {
        let g = uniform_grid(1.0, 0.25).unwrap();
        assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = uniform_grid(1.1, 0.25).unwrap();
        assert_eq!(*g.last().unwrap(), 1.1);
        assert_eq!(default_grid(0.1, 0.1).unwrap().len(), 41);
    }
}
