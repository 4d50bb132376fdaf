//! Controlled dephasing expressed through the free decoherence function.
//!
//! For pulses `t_1 < ... < t_n <= t`
//!
//! ```text
//! Gamma_n(t) = A_n + 2 sum_m (-1)^(m+n) G(t - t_m) + (-1)^n G(t)
//! A_n = sum_{m<=n} [ 2 (-1)^(m+1) G(t_m) + 4 sum_{j<m} (-1)^(m-1+j) G(t_m - t_j) ]
//! ```
//!
//! with `G = Gamma_0`. Every controlled quantity therefore reduces to a set
//! of free-dephasing values, which [`Gamma0Cache`] memoises.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{OnceLock, RwLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoherence::{gamma_free, gamma_infinity_free, CoherenceTrace, PulseSequence, QuadratureSettings};
use crate::error::{Error, Result};
use crate::quadrature::NeumaierSum;
use crate::spectral::BathSpec;

/// Relative distance to a lattice point below which a time is snapped.
pub const LATTICE_SNAP: f64 = 1e-9;

/// Largest pulse index searched when locating saturation.
pub const SATURATION_MAX_N: usize = 10_000;

/// Consecutive indices that must stay within tolerance of the asymptote.
pub const SATURATION_RUN: usize = 10;

/// Default saturation tolerance as a fraction of the asymptotic increment.
pub const DEFAULT_SATURATION_FRACTION: f64 = 0.02;

/// Floor of the default saturation tolerance, in machine epsilons of the
/// free dephasing scale. Keeps vanishing asymptotes resolvable.
pub const SATURATION_FLOOR_ULPS: f64 = 1e3;

/// Third-harmonic ratio above which the single-resonance asymptote is flagged.
pub const RESONANCE_RATIO_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Key {
    Lattice(i64),
    Exact(u64),
}

/// Memoised `Gamma_0(t)` for one bath and quadrature setting.
///
/// Times within `LATTICE_SNAP` (relative) of a multiple of the lattice
/// spacing share one entry; other times are keyed by their exact value.
#[derive(Debug)]
pub struct Gamma0Cache {
    bath: BathSpec,
    settings: QuadratureSettings,
    lattice: Option<f64>,
    memo: RwLock<HashMap<Key, f64>>,
    infinity: OnceLock<std::result::Result<f64, Error>>,
}

impl Clone for Gamma0Cache {
    fn clone(&self) -> Self {
        let memo = self.memo.read().expect("cache lock poisoned").clone();
        let infinity = OnceLock::new();
        if let Some(v) = self.infinity.get() {
            let _ = infinity.set(v.clone());
        }
        Self {
            bath: self.bath.clone(),
            settings: self.settings,
            lattice: self.lattice,
            memo: RwLock::new(memo),
            infinity,
        }
    }
}

impl Gamma0Cache {
    pub fn new(bath: BathSpec, settings: QuadratureSettings) -> Self {
        Self {
            bath,
            settings,
            lattice: None,
            memo: RwLock::new(HashMap::new()),
            infinity: OnceLock::new(),
        }
    }

    /// Enables snapping to multiples of `spacing`.
    pub fn with_lattice(mut self, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::Parameter(format!("lattice spacing must be positive, got {spacing}")));
        }
        self.lattice = Some(spacing);
        self.memo.get_mut().expect("cache lock poisoned").clear();
        Ok(self)
    }

    pub fn bath(&self) -> &BathSpec {
        &self.bath
    }

    pub fn settings(&self) -> &QuadratureSettings {
        &self.settings
    }

    pub fn lattice(&self) -> Option<f64> {
        self.lattice
    }

    pub fn len(&self) -> usize {
        self.memo.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn key(&self, t: f64) -> (Key, f64) {
        if let Some(d) = self.lattice {
            let r = t / d;
            let k = r.round();
            if (r - k).abs() <= LATTICE_SNAP && k.abs() < i64::MAX as f64 {
                return (Key::Lattice(k as i64), k * d);
            }
        }
        (Key::Exact(t.to_bits()), t)
    }

    fn check_time(t: f64) -> Result<()> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("time must be non-negative, got {t}")));
        }
        Ok(())
    }

    /// `Gamma_0(t)`.
    pub fn get(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        let (key, snapped) = self.key(t);
        if let Some(&v) = self.memo.read().expect("cache lock poisoned").get(&key) {
            return Ok(v);
        }
        let v = gamma_free(&self.bath, snapped, &self.settings)?;
        self.memo.write().expect("cache lock poisoned").insert(key, v);
        Ok(v)
    }

    /// Computes all missing values in parallel.
    pub fn prefetch(&self, times: &[f64]) -> Result<()> {
        let mut missing: Vec<(Key, f64)> = {
            let memo = self.memo.read().expect("cache lock poisoned");
            let mut seen = std::collections::HashSet::new();
            let mut out = Vec::new();
            for &t in times {
                Self::check_time(t)?;
                let (k, s) = self.key(t);
                if !memo.contains_key(&k) && seen.insert(k) {
                    out.push((k, s));
                }
            }
            out
        };
        if missing.is_empty() {
            return Ok(());
        }
        // Longest times first: they carry the most panels.
        missing.sort_by(|a, b| b.1.total_cmp(&a.1));
        let computed: Result<Vec<(Key, f64)>> = missing
            .par_iter()
            .map(|&(k, s)| gamma_free(&self.bath, s, &self.settings).map(|v| (k, v)))
            .collect();
        let computed = computed?;
        let mut memo = self.memo.write().expect("cache lock poisoned");
        memo.extend(computed);
        Ok(())
    }

    /// `Gamma_0(inf)`, computed once.
    pub fn infinity(&self) -> Result<f64> {
        self.infinity
            .get_or_init(|| gamma_infinity_free(&self.bath, &self.settings))
            .clone()
    }
}

fn sign(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `t - t_m` for `t >= t_m`, clamped against rounding below zero.
fn lag(t: f64, tm: f64) -> f64 {
    (t - tm).max(0.0)
}

/// Prefix constants `A_0, ..., A_s` for a fixed pulse list.
#[derive(Debug, Clone)]
pub struct ExactRepresentation {
    times: Vec<f64>,
    prefix: Vec<f64>,
}

impl ExactRepresentation {
    /// Precomputes `A_n` for every prefix of `times`.
    pub fn new(cache: &Gamma0Cache, times: &[f64]) -> Result<Self> {
        let mut needed = Vec::with_capacity(times.len() * (times.len() + 1) / 2);
        for (m, &tm) in times.iter().enumerate() {
            needed.push(tm);
            for &tj in &times[..m] {
                needed.push(lag(tm, tj));
            }
        }
        cache.prefetch(&needed)?;
        let mut prefix = Vec::with_capacity(times.len() + 1);
        let mut acc = NeumaierSum::new();
        prefix.push(0.0);
        for (idx, &tm) in times.iter().enumerate() {
            let m = idx + 1;
            acc.add(2.0 * sign(m + 1) * cache.get(tm)?);
            for (jdx, &tj) in times[..idx].iter().enumerate() {
                let j = jdx + 1;
                acc.add(4.0 * sign(m - 1 + j) * cache.get(lag(tm, tj))?);
            }
            prefix.push(acc.value());
        }
        Ok(Self {
            times: times.to_vec(),
            prefix,
        })
    }

    pub fn pulse_count(&self) -> usize {
        self.times.len()
    }

    /// `A_n`.
    pub fn constant(&self, n: usize) -> f64 {
        self.prefix[n]
    }

    /// Times whose free dephasing is needed to evaluate `Gamma_n(t)`.
    pub fn lags(&self, n: usize, t: f64) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(t).chain(self.times[..n].iter().map(move |&tm| lag(t, tm)))
    }

    /// `Gamma_n(t)` using the first `n` pulses; requires `t >= t_n`.
    pub fn gamma_with(&self, cache: &Gamma0Cache, n: usize, t: f64) -> Result<f64> {
        if n > self.times.len() {
            return Err(Error::Domain(format!(
                "requested {n} pulses but only {} are defined",
                self.times.len()
            )));
        }
        if n > 0 && t < self.times[n - 1] {
            return Err(Error::Domain(format!(
                "time {t} precedes pulse {n} at {}",
                self.times[n - 1]
            )));
        }
        let mut acc = NeumaierSum::new();
        acc.add(self.prefix[n]);
        for (idx, &tm) in self.times[..n].iter().enumerate() {
            acc.add(2.0 * sign(idx + 1 + n) * cache.get(lag(t, tm))?);
        }
        acc.add(sign(n) * cache.get(t)?);
        Ok(acc.value())
    }

    /// `Gamma(t)` with every pulse at an instant `<= t` applied.
    pub fn gamma(&self, cache: &Gamma0Cache, t: f64) -> Result<f64> {
        let n = self.times.partition_point(|&x| x <= t);
        self.gamma_with(cache, n, t)
    }

    /// `Gamma_n(inf) = A_n + Gamma_0(inf)` for a saturating bath.
    pub fn gamma_infinity(&self, cache: &Gamma0Cache, n: usize) -> Result<f64> {
        if n > self.times.len() {
            return Err(Error::Domain(format!("requested {n} pulses")));
        }
        Ok(self.prefix[n] + cache.infinity()?)
    }
}

/// Controlled dephasing at `t` from the free dephasing function.
pub fn gamma_controlled_exact(cache: &Gamma0Cache, seq: &PulseSequence, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be non-negative, got {t}")));
    }
    let n = seq.count_until(t);
    let rep = ExactRepresentation::new(cache, &seq.times()[..n])?;
    rep.gamma_with(cache, n, t)
}

/// Adds one pulse at `t_n` to the `n - 1` pulses of `prefix` and evaluates
/// `Gamma_n(t) = -Gamma_{n-1}(t) + 2 Gamma_{n-1}(t_n) + 2 Gamma_0(t - t_n)`.
pub fn gamma_recurrence_step(cache: &Gamma0Cache, prefix: &PulseSequence, t_n: f64, t: f64) -> Result<f64> {
    if t < t_n {
        return Err(Error::Domain(format!("time {t} precedes the added pulse at {t_n}")));
    }
    if let Some(&last) = prefix.times().last() {
        if !(t_n > last) {
            return Err(Error::Domain(format!("added pulse {t_n} must follow {last}")));
        }
    }
    let rep = ExactRepresentation::new(cache, prefix.times())?;
    let k = prefix.len();
    let before = rep.gamma_with(cache, k, t)?;
    let at_pulse = rep.gamma_with(cache, k, t_n)?;
    Ok(-before + 2.0 * at_pulse + 2.0 * cache.get(lag(t, t_n))?)
}

/// Outcome of the two-pulse asymptotic comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPulseImprovement {
    /// `Gamma_0(inf) - Gamma_2(inf)`.
    pub gain: f64,
    pub satisfied: bool,
    pub gamma_free_infinity: f64,
    pub gamma_two_infinity: f64,
}

/// Whether two pulses at `t1 < t2` lower the saturated dephasing:
/// `2 G(t2) - 2 G(t1) > 4 G(t2 - t1)`.
pub fn two_pulse_improvement(cache: &Gamma0Cache, t1: f64, t2: f64) -> Result<TwoPulseImprovement> {
    if cache.bath().model.is_ohmic() {
        return Err(Error::Unsupported(
            "saturated dephasing is infinite for an ohmic bath".into(),
        ));
    }
    if !(t1 > 0.0 && t2 > t1) {
        return Err(Error::Domain(format!("need 0 < t1 < t2, got {t1}, {t2}")));
    }
    let g1 = cache.get(t1)?;
    let g2 = cache.get(t2)?;
    let g21 = cache.get(t2 - t1)?;
    let ginf = cache.infinity()?;
    let gain = 2.0 * g2 - 2.0 * g1 - 4.0 * g21;
    Ok(TwoPulseImprovement {
        gain,
        satisfied: gain > 0.0,
        gamma_free_infinity: ginf,
        gamma_two_infinity: ginf - gain,
    })
}

/// `Gamma_1(inf) = Gamma_0(inf) + 2 Gamma_0(t1)`.
pub fn single_pulse_infinity(cache: &Gamma0Cache, t1: f64) -> Result<f64> {
    if !(t1 > 0.0) {
        return Err(Error::Domain(format!("pulse time must be positive, got {t1}")));
    }
    Ok(cache.infinity()? + 2.0 * cache.get(t1)?)
}

/// Differential dephasing `Gamma_n(t_{n+1}) - Gamma_{n-1}(t_n)`:
///
/// ```text
/// (-1)^n [G(t_{n+1}) - G(t_n)] + 2 sum_{m<=n} (-1)^(m+n) G(t_{n+1} - t_m)
///                              + 2 sum_{j<n} (-1)^(n-1+j) G(t_n - t_j)
/// ```
pub fn delta_gamma_n(cache: &Gamma0Cache, seq: &PulseSequence, n: usize) -> Result<f64> {
    let times = seq.times();
    if n == 0 || n + 1 > times.len() {
        return Err(Error::Domain(format!(
            "differential dephasing needs 1 <= n < {} pulses, got n = {n}",
            times.len()
        )));
    }
    let tn = times[n - 1];
    let tn1 = times[n];
    let mut needed = vec![tn, tn1];
    needed.extend(times[..n].iter().map(|&tm| lag(tn1, tm)));
    needed.extend(times[..n - 1].iter().map(|&tj| lag(tn, tj)));
    cache.prefetch(&needed)?;
    let mut acc = NeumaierSum::new();
    acc.add(sign(n) * (cache.get(tn1)? - cache.get(tn)?));
    for (idx, &tm) in times[..n].iter().enumerate() {
        acc.add(2.0 * sign(idx + 1 + n) * cache.get(lag(tn1, tm))?);
    }
    for (jdx, &tj) in times[..n - 1].iter().enumerate() {
        acc.add(2.0 * sign(n - 1 + jdx + 1) * cache.get(lag(tn, tj))?);
    }
    Ok(acc.value())
}

/// Differential dephasing of PDD with interval `dt`:
/// `(-1)^n [G((n+1)dt) - 3 G(n dt)] - 4 sum_{k<n} (-1)^k G(k dt)`.
pub fn delta_gamma_pdd(cache: &Gamma0Cache, dt: f64, n: usize) -> Result<f64> {
    Ok(*delta_gamma_pdd_series(cache, dt, n)?.last().expect("series is non-empty"))
}

/// `Delta Gamma_1, ..., Delta Gamma_{n_max}` for PDD, in `O(n_max)` free
/// dephasing evaluations.
pub fn delta_gamma_pdd_series(cache: &Gamma0Cache, dt: f64, n_max: usize) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::Parameter(format!("pulse interval must be positive, got {dt}")));
    }
    if n_max == 0 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    let grid: Vec<f64> = (0..=n_max + 1).map(|k| k as f64 * dt).collect();
    cache.prefetch(&grid)?;
    let g: Vec<f64> = grid.iter().map(|&t| cache.get(t)).collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(n_max);
    let mut alternating = NeumaierSum::new();
    for n in 1..=n_max {
        if n >= 2 {
            alternating.add(sign(n - 1) * g[n - 1]);
        }
        let mut acc = NeumaierSum::new();
        acc.add(sign(n) * g[n + 1]);
        acc.add(-3.0 * sign(n) * g[n]);
        acc.add(-4.0 * alternating.value());
        out.push(acc.value());
    }
    Ok(out)
}

/// `Delta Gamma_n(t~) = Gamma_{n+1}(t_{n+1} + t~) - Gamma_n(t_n + t~)` for PDD,
/// evaluated from the exact representation.
pub fn delta_gamma_pdd_offset(cache: &Gamma0Cache, dt: f64, n: usize, t_offset: f64) -> Result<f64> {
    check_offset(dt, t_offset)?;
    let times: Vec<f64> = (1..=n + 1).map(|k| k as f64 * dt).collect();
    let rep = ExactRepresentation::new(cache, &times)?;
    let tn = n as f64 * dt;
    let tn1 = (n + 1) as f64 * dt;
    let later = rep.gamma_with(cache, n + 1, tn1 + t_offset)?;
    let earlier = rep.gamma_with(cache, n, tn + t_offset)?;
    Ok(later - earlier)
}

fn check_offset(dt: f64, t_offset: f64) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::Parameter(format!("pulse interval must be positive, got {dt}")));
    }
    if !(t_offset >= 0.0 && t_offset <= dt) {
        return Err(Error::Domain(format!("offset {t_offset} must lie in [0, {dt}]")));
    }
    Ok(())
}

/// Single-resonance asymptotic increment `8 w_res eta(w_res)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaGammaInfinity {
    pub value: f64,
    pub omega_res: f64,
    /// `eta(3 w_res) / eta(w_res)`.
    pub harmonic_ratio: f64,
    /// False when higher resonances are not negligible.
    pub valid: bool,
}

/// Asymptotic per-interval dephasing increment for PDD with interval `dt`.
pub fn delta_gamma_infinity(bath: &BathSpec, dt: f64) -> Result<DeltaGammaInfinity> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Parameter(format!("pulse interval must be positive, got {dt}")));
    }
    let omega_res = PI / dt;
    let eta1 = bath.eta(omega_res)?;
    let eta3 = match bath.eta(3.0 * omega_res) {
        Ok(v) => v,
        Err(Error::Range { .. }) => 0.0,
        Err(e) => return Err(e),
    };
    let harmonic_ratio = if eta1 > 0.0 { eta3 / eta1 } else { 0.0 };
    Ok(DeltaGammaInfinity {
        value: 8.0 * omega_res * eta1,
        omega_res,
        harmonic_ratio,
        valid: harmonic_ratio <= RESONANCE_RATIO_THRESHOLD,
    })
}

/// Decomposition of the PDD increment into offset-independent and
/// offset-dependent parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiTdSplit {
    pub ti: f64,
    pub td: f64,
}

impl TiTdSplit {
    pub fn total(&self) -> f64 {
        self.ti + self.td
    }
}

/// `TD = (-1)^n [G(t_n + t~) - G(t_{n+1} + t~)]`,
/// `TI = 2 (-1)^n [G(t_{n+1}) + 2 sum_j (-1)^j G(t_{n+1} - t_j)]`.
pub fn ti_td_split(cache: &Gamma0Cache, dt: f64, n: usize, t_offset: f64) -> Result<TiTdSplit> {
    check_offset(dt, t_offset)?;
    let tn = n as f64 * dt;
    let tn1 = (n + 1) as f64 * dt;
    let mut needed: Vec<f64> = vec![tn + t_offset, tn1 + t_offset, tn1];
    needed.extend((1..=n).map(|j| lag(tn1, j as f64 * dt)));
    cache.prefetch(&needed)?;
    let s = sign(n);
    let td = s * (cache.get(tn + t_offset)? - cache.get(tn1 + t_offset)?);
    let mut acc = NeumaierSum::new();
    acc.add(cache.get(tn1)?);
    for j in 1..=n {
        acc.add(2.0 * sign(j) * cache.get(lag(tn1, j as f64 * dt))?);
    }
    Ok(TiTdSplit {
        ti: 2.0 * s * acc.value(),
        td,
    })
}

/// Saturation of PDD dephasing for one pulse interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub dt: f64,
    pub delta_gamma_inf: f64,
    pub omega_res: f64,
    pub n_sat: usize,
    pub t_sat: f64,
    /// Inflection time of the free dephasing, if found on the `k dt` grid.
    pub t_av: Option<f64>,
    pub converged: bool,
    /// Single-resonance approximation of the asymptote is adequate.
    pub validity: bool,
    pub epsilon: f64,
}

/// Locates where `Gamma_0` stops accelerating on the grid `k dt`, from the
/// sign change of `G((k-1)dt) - 2 G(k dt) + G((k+1)dt)`, with linear
/// interpolation between grid points.
pub fn inflection_time(cache: &Gamma0Cache, dt: f64, t_max: f64) -> Result<Option<f64>> {
    if !(dt > 0.0) || !(t_max > dt) {
        return Err(Error::Parameter("inflection search needs 0 < dt < t_max".into()));
    }
    let k_max = (t_max / dt).ceil() as usize + 1;
    let grid: Vec<f64> = (0..=k_max).map(|k| k as f64 * dt).collect();
    cache.prefetch(&grid)?;
    let g: Vec<f64> = grid.iter().map(|&t| cache.get(t)).collect::<Result<_>>()?;
    let d2: Vec<f64> = (1..k_max).map(|k| g[k - 1] - 2.0 * g[k] + g[k + 1]).collect();
    for i in 0..d2.len().saturating_sub(1) {
        if d2[i] > 0.0 && d2[i + 1] <= 0.0 {
            let k = (i + 1) as f64;
            let frac = d2[i] / (d2[i] - d2[i + 1]);
            return Ok(Some((k + frac) * dt));
        }
    }
    Ok(None)
}

/// Finds the saturation index of PDD with interval `dt`.
///
/// `epsilon` defaults to `DEFAULT_SATURATION_FRACTION` times the asymptote,
/// floored at `SATURATION_FLOOR_ULPS` rounding units of the free dephasing.
pub fn saturation_analysis(cache: &Gamma0Cache, dt: f64, epsilon: Option<f64>) -> Result<AsymptoticReport> {
    let asym = delta_gamma_infinity(cache.bath(), dt)?;
    let saturating = !cache.bath().model.is_ohmic();
    let ginf = if saturating { Some(cache.infinity()?) } else { None };
    let eps = match epsilon {
        Some(e) => e,
        None => {
            let scale = match ginf {
                Some(g) => g,
                None => cache.get(64.0 * dt)?,
            };
            (DEFAULT_SATURATION_FRACTION * asym.value).max(SATURATION_FLOOR_ULPS * f64::EPSILON * scale)
        }
    };
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("saturation tolerance must be positive, got {eps}")));
    }

    let mut found = None;
    let mut chunk = 64usize;
    let mut n_done = 0usize;
    let mut series: Vec<f64> = Vec::new();
    while found.is_none() && n_done < SATURATION_MAX_N {
        let n_target = (n_done + chunk).min(SATURATION_MAX_N);
        series = delta_gamma_pdd_series(cache, dt, n_target + SATURATION_RUN)?;
        let start = n_done.max(1);
        for n in start..=n_target {
            if let Some(ginf) = ginf {
                if (cache.get(n as f64 * dt)? - ginf).abs() >= eps {
                    continue;
                }
            }
            let run_ok = (n..n + SATURATION_RUN).all(|m| (series[m - 1] - asym.value).abs() < eps);
            if run_ok {
                found = Some(n);
                break;
            }
        }
        n_done = n_target + 1;
        chunk *= 2;
    }
    drop(series);
    let Some(n_sat) = found else {
        return Err(Error::Convergence(format!(
            "differential dephasing did not settle within {SATURATION_MAX_N} intervals"
        )));
    };
    let horizon = (2.0 * n_sat as f64 * dt).max(4.0 * dt);
    let t_av = if saturating {
        inflection_time(cache, dt, horizon.max(cache.bath().correlation_time().unwrap_or(horizon)))?
    } else {
        None
    };
    Ok(AsymptoticReport {
        dt,
        delta_gamma_inf: asym.value,
        omega_res: asym.omega_res,
        n_sat,
        t_sat: n_sat as f64 * dt,
        t_av,
        converged: true,
        validity: asym.valid,
        epsilon: eps,
    })
}

/// Exact trace on `grid`, evaluated in parallel after a shared prefetch.
pub fn trace_exact(cache: &Gamma0Cache, seq: &PulseSequence, grid: &[f64]) -> Result<CoherenceTrace> {
    let rep = ExactRepresentation::new(cache, seq.times())?;
    let mut needed = Vec::new();
    for &t in grid {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("time must be non-negative, got {t}")));
        }
        let n = seq.count_until(t);
        needed.extend(rep.lags(n, t));
    }
    cache.prefetch(&needed)?;
    drop(needed);
    let gamma: Result<Vec<f64>> = grid.par_iter().map(|&t| rep.gamma(cache, t)).collect();
    CoherenceTrace::from_gamma(grid.to_vec(), gamma?, seq.clone(), cache.bath().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoherence::gamma_controlled_direct;

    fn exciton_cache() -> Gamma0Cache {
        Gamma0Cache::new(BathSpec::exciton_gaas_77k(), QuadratureSettings::default().with_rel_tol(1e-12))
    }

    #[test]
    fn one_pulse_reduces_to_closed_form() {
        let c = exciton_cache();
        let s = PulseSequence::new(vec![0.4], None, "one").unwrap();
        let t = 1.3;
        let expected = -c.get(t).unwrap() + 2.0 * c.get(0.4).unwrap() + 2.0 * c.get(t - 0.4).unwrap();
        let got = gamma_controlled_exact(&c, &s, t).unwrap();
        assert!((got - expected).abs() < 1e-14);
    }

    #[test]
    fn no_pulses_is_free() {
        let c = exciton_cache();
        let got = gamma_controlled_exact(&c, &PulseSequence::free(), 0.7).unwrap();
        assert_eq!(got, c.get(0.7).unwrap());
    }

    #[test]
    fn continuity_at_pulses() {
        let c = exciton_cache();
        let s = PulseSequence::new(vec![0.2, 0.31, 0.9, 1.05], None, "x").unwrap();
        let rep = ExactRepresentation::new(&c, s.times()).unwrap();
        for (i, &tn) in s.times().iter().enumerate() {
            let with = rep.gamma_with(&c, i + 1, tn).unwrap();
            let without = rep.gamma_with(&c, i, tn).unwrap();
            assert!(((with - without) / with).abs() < 1e-10, "{i}: {with} {without}");
        }
    }

    #[test]
    fn exact_matches_direct_for_pulse_pair() {
        let c = exciton_cache();
        let s = PulseSequence::new(vec![0.2, 0.31], None, "pair").unwrap();
        for &t in &[2.0, 10.0] {
            let exact = gamma_controlled_exact(&c, &s, t).unwrap();
            let direct = gamma_controlled_direct(c.bath(), &s, t, c.settings()).unwrap();
            assert!(((exact - direct) / direct).abs() < 1e-6, "{t}: {exact} {direct}");
        }
    }

    #[test]
    fn recurrence_step_matches_representation() {
        let c = exciton_cache();
        let s = PulseSequence::new(vec![0.15, 0.5, 0.52, 1.4], None, "x").unwrap();
        let t = 2.2;
        let full = gamma_controlled_exact(&c, &s, t).unwrap();
        let step = gamma_recurrence_step(&c, &s.prefix(3), 1.4, t).unwrap();
        assert!(((full - step) / full).abs() < 1e-12);
        assert!(gamma_recurrence_step(&c, &s.prefix(3), 1.4, 1.0).is_err());
    }

    #[test]
    fn two_pulse_infinity_formula() {
        let c = exciton_cache();
        let (t1, t2) = (0.2, 0.31);
        let rep = ExactRepresentation::new(&c, &[t1, t2]).unwrap();
        let expected = c.infinity().unwrap() - 2.0 * c.get(t2).unwrap()
            + 2.0 * c.get(t1).unwrap()
            + 4.0 * c.get(t2 - t1).unwrap();
        assert!((rep.gamma_infinity(&c, 2).unwrap() - expected).abs() < 1e-13);
        let late = rep.gamma_with(&c, 2, 60.0).unwrap();
        assert!(((late - expected) / expected).abs() < 1e-6);
    }

    #[test]
    fn two_pulse_condition_for_exciton() {
        let c = exciton_cache();
        let r = two_pulse_improvement(&c, 0.2, 0.31).unwrap();
        assert!(r.satisfied);
        assert!(r.gamma_two_infinity < r.gamma_free_infinity);
        let one = single_pulse_infinity(&c, 0.2).unwrap();
        assert!(one > r.gamma_free_infinity);
    }

    #[test]
    fn close_pulses_satisfy_condition() {
        let c = exciton_cache();
        let r = two_pulse_improvement(&c, 0.5, 0.5 + 1e-4).unwrap();
        assert!(r.satisfied);
    }

    #[test]
    fn ohmic_two_pulse_is_unsupported() {
        let m = crate::spectral::SpectralModel::ohmic_exp(0.5, 100.0).unwrap();
        let bath = BathSpec::new(m, 1e4, 0.5, crate::units::UnitsMode::Natural).unwrap();
        let c = Gamma0Cache::new(bath, QuadratureSettings::default());
        assert!(matches!(two_pulse_improvement(&c, 0.1, 0.2), Err(Error::Unsupported(_))));
    }

    #[test]
    fn delta_gamma_first_index() {
        let c = exciton_cache();
        let s = PulseSequence::new(vec![0.3, 0.45, 1.0], None, "x").unwrap();
        let expected = -(c.get(0.45).unwrap() - c.get(0.3).unwrap()) + 2.0 * c.get(0.45 - 0.3).unwrap();
        let got = delta_gamma_n(&c, &s, 1).unwrap();
        assert!((got - expected).abs() < 1e-14);
        assert!(delta_gamma_n(&c, &s, 0).is_err());
        assert!(delta_gamma_n(&c, &s, 3).is_err());
    }

    #[test]
    fn delta_gamma_matches_differences_of_representation() {
        let c = exciton_cache();
        let s = PulseSequence::new(vec![0.1, 0.35, 0.4, 0.8, 1.3, 1.31], None, "x").unwrap();
        let rep = ExactRepresentation::new(&c, s.times()).unwrap();
        for n in 1..s.len() {
            let diff = rep.gamma_with(&c, n, s.times()[n]).unwrap() - rep.gamma_with(&c, n - 1, s.times()[n - 1]).unwrap();
            let got = delta_gamma_n(&c, &s, n).unwrap();
            assert!((got - diff).abs() <= 1e-10 * diff.abs().max(1e-3), "{n}: {got} {diff}");
        }
    }

    #[test]
    fn pdd_form_matches_general_form() {
        let c = exciton_cache().with_lattice(0.1 / 1024.0).unwrap();
        let dt = 0.1;
        let times: Vec<f64> = (1..=30).map(|k| k as f64 * dt).collect();
        let s = PulseSequence::new(times, None, "pdd").unwrap();
        let series = delta_gamma_pdd_series(&c, dt, 29).unwrap();
        for n in 1..30 {
            let general = delta_gamma_n(&c, &s, n).unwrap();
            assert!((series[n - 1] - general).abs() < 1e-12, "{n}");
        }
    }

    #[test]
    fn offset_increment_at_zero_is_plain_increment() {
        let c = exciton_cache().with_lattice(0.25 / 1024.0).unwrap();
        let dt = 0.25;
        for n in [1usize, 4, 9] {
            let a = delta_gamma_pdd_offset(&c, dt, n, 0.0).unwrap();
            let b = delta_gamma_pdd(&c, dt, n).unwrap();
            assert!((a - b).abs() < 1e-12, "{n}: {a} {b}");
        }
    }

    #[test]
    fn ti_td_sum_identity() {
        let c = exciton_cache().with_lattice(0.25 / 1024.0).unwrap();
        let dt = 0.25;
        for n in [1usize, 2, 7, 20] {
            for &off in &[0.0, 0.1, 0.25] {
                let split = ti_td_split(&c, dt, n, off).unwrap();
                let direct = delta_gamma_pdd_offset(&c, dt, n, off).unwrap();
                let scale = direct.abs().max(split.ti.abs()).max(split.td.abs());
                assert!((split.total() - direct).abs() <= 1e-10 * scale, "{n} {off}");
            }
        }
        assert!(ti_td_split(&c, dt, 3, 0.3).is_err());
    }

    #[test]
    fn second_difference_recurrence() {
        let c = exciton_cache().with_lattice(0.2 / 1024.0).unwrap();
        let dt = 0.2;
        let series = delta_gamma_pdd_series(&c, dt, 25).unwrap();
        for n in 2..=25 {
            let g = |k: usize| c.get(k as f64 * dt).unwrap();
            let d2 = g(n + 1) - 2.0 * g(n) + g(n - 1);
            let lhs = series[n - 1] - series[n - 2];
            assert!((lhs - sign(n) * d2).abs() < 1e-12, "{n}");
        }
    }

    #[test]
    fn asymptote_for_zero_coupling() {
        let bath = BathSpec::exciton_gaas_77k();
        let zero = bath.with_model(bath.model.scaled(0.0));
        let r = delta_gamma_infinity(&zero, 0.3).unwrap();
        assert_eq!(r.value, 0.0);
        assert!((r.omega_res - PI / 0.3).abs() < 1e-15);
    }

    #[test]
    fn cache_snaps_to_lattice() {
        let c = exciton_cache().with_lattice(0.01).unwrap();
        let a = c.get(0.3).unwrap();
        let b = c.get(0.1 + 0.2).unwrap();
        assert_eq!(a, b);
        assert_eq!(c.len(), 1);
        let fresh = gamma_free(c.bath(), 0.3, c.settings()).unwrap();
        assert!((a - fresh).abs() < 1e-14);
        c.get(0.123456789).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.get(-1.0).is_err());
    }

    #[test]
    fn single_pulse_never_helps() {
        let c = exciton_cache();
        for &t1 in &[0.05, 0.2, 1.0, 4.0] {
            assert!(single_pulse_infinity(&c, t1).unwrap() >= c.infinity().unwrap());
        }
    }
}
