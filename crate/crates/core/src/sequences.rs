//! Pulse-sequence generators.
//!
//! Every protocol except UDD is built on an integer tick lattice so that
//! coincident pulses cancel exactly. A pulse that would fall exactly on the
//! horizon is dropped, since it cannot affect dephasing before readout.

use serde::{Deserialize, Serialize};

use crate::decoherence::PulseSequence;
use crate::error::{Error, Result};
use crate::spectral::SpectralModel;

/// Largest supported concatenation level.
pub const MAX_CDD_LEVEL: u32 = 30;

/// Relative slack when comparing float times against the lattice or a bound.
const TIME_SLACK: f64 = 1e-9;

/// One element of a control word read in chronological order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Segment {
    /// Free evolution for a number of ticks.
    Free(u64),
    /// Instantaneous bit flip.
    X,
}

/// A normalised chronological control word: no empty free segments, no two
/// adjacent free segments and no adjacent `X X`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlWord {
    segments: Vec<Segment>,
}

impl ControlWord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_segments<I: IntoIterator<Item = Segment>>(segments: I) -> Self {
        let mut w = Self::new();
        for s in segments {
            w.push(s);
        }
        w
    }

    /// Appends one segment, merging free time and cancelling `X X`.
    pub fn push(&mut self, seg: Segment) {
        match seg {
            Segment::Free(0) => {}
            Segment::Free(k) => match self.segments.last_mut() {
                Some(Segment::Free(prev)) => *prev += k,
                _ => self.segments.push(Segment::Free(k)),
            },
            Segment::X => {
                if self.segments.last() == Some(&Segment::X) {
                    self.segments.pop();
                } else {
                    self.segments.push(Segment::X);
                }
            }
        }
    }

    pub fn extend(&mut self, other: &ControlWord) {
        for &s in &other.segments {
            self.push(s);
        }
    }

    pub fn concat(&self, other: &ControlWord) -> ControlWord {
        let mut w = self.clone();
        w.extend(other);
        w
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Total free time in ticks.
    pub fn duration(&self) -> u64 {
        self.segments
            .iter()
            .map(|s| match s {
                Segment::Free(k) => *k,
                Segment::X => 0,
            })
            .sum()
    }

    /// Tick positions of the pulses.
    pub fn pulse_ticks(&self) -> Vec<u64> {
        let mut t = 0;
        let mut out = Vec::new();
        for s in &self.segments {
            match s {
                Segment::Free(k) => t += k,
                Segment::X => out.push(t),
            }
        }
        out
    }

    pub fn ends_with_pulse(&self) -> bool {
        self.segments.last() == Some(&Segment::X)
    }
}

/// Concatenated cycle `S_l = S_{l-1} X S_{l-1} X` with `S_0` one free tick.
pub fn cdd_word(level: u32) -> Result<ControlWord> {
    check_level(level)?;
    let mut sink = BoundedWord::unbounded();
    emit_cdd(level, &mut sink);
    Ok(sink.word)
}

/// Pulse ticks of `S_l` built without cancellation, with coincident pairs
/// removed afterwards by parity.
pub fn cdd_ticks_by_parity(level: u32) -> Result<Vec<u64>> {
    check_level(level)?;
    fn raw(level: u32, offset: u64, out: &mut Vec<u64>) -> u64 {
        if level == 0 {
            return 1;
        }
        let len = raw(level - 1, offset, out);
        out.push(offset + len);
        raw(level - 1, offset + len, out);
        out.push(offset + 2 * len);
        2 * len
    }
    let mut all = Vec::new();
    raw(level, 0, &mut all);
    all.sort_unstable();
    let mut out: Vec<u64> = Vec::new();
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j] == all[i] {
            j += 1;
        }
        if (j - i) % 2 == 1 {
            out.push(all[i]);
        }
        i = j;
    }
    Ok(out)
}

fn check_level(level: u32) -> Result<()> {
    if level > MAX_CDD_LEVEL {
        return Err(Error::Size(format!(
            "concatenation level {level} exceeds the supported maximum {MAX_CDD_LEVEL}"
        )));
    }
    Ok(())
}

/// Word builder that stops once its duration passes a limit.
struct BoundedWord {
    word: ControlWord,
    limit: Option<u64>,
}

impl BoundedWord {
    fn unbounded() -> Self {
        Self {
            word: ControlWord::new(),
            limit: None,
        }
    }

    fn bounded(limit: u64) -> Self {
        Self {
            word: ControlWord::new(),
            limit: Some(limit),
        }
    }

    /// Pulses at or before the limit can still be cancelled until free time
    /// beyond the limit has been appended.
    fn full(&self) -> bool {
        self.limit.is_some_and(|l| self.word.duration() > l)
    }

    fn push(&mut self, s: Segment) {
        if !self.full() {
            self.word.push(s);
        }
    }
}

fn emit_cdd(level: u32, sink: &mut BoundedWord) {
    if sink.full() {
        return;
    }
    if level == 0 {
        sink.push(Segment::Free(1));
        return;
    }
    emit_cdd(level - 1, sink);
    sink.push(Segment::X);
    emit_cdd(level - 1, sink);
    sink.push(Segment::X);
}

/// Number of ticks strictly before `horizon`, i.e. ticks `k` with
/// `k * tick < horizon` up to float slack.
fn horizon_ticks(horizon: f64, tick: f64) -> u64 {
    let r = horizon / tick;
    let k = r.round();
    if (r - k).abs() <= TIME_SLACK * r.max(1.0) {
        k as u64
    } else {
        r.ceil() as u64
    }
}

fn keep_before_horizon(ticks: Vec<u64>, limit: u64) -> Vec<u64> {
    ticks.into_iter().filter(|&k| k < limit).collect()
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

fn fmt_time(v: f64) -> String {
    format!("{}", v)
}

/// Periodic DD: pulses at `dt, 2 dt, ...` before the horizon.
pub fn gen_pdd(dt: f64, horizon: f64) -> Result<PulseSequence> {
    positive("dt", dt)?;
    positive("horizon", horizon)?;
    let limit = horizon_ticks(horizon, dt);
    let ticks: Vec<u64> = (1..limit).collect();
    PulseSequence::from_ticks(ticks, dt, None, format!("pdd(dt={})", fmt_time(dt)))
}

/// Carr-Purcell DD: pulses at odd multiples of `dt_cp`.
pub fn gen_cpdd(dt_cp: f64, horizon: f64) -> Result<PulseSequence> {
    positive("dt_cp", dt_cp)?;
    positive("horizon", horizon)?;
    let limit = horizon_ticks(horizon, dt_cp);
    let ticks: Vec<u64> = (1..limit).filter(|k| k % 2 == 1).collect();
    PulseSequence::from_ticks(ticks, dt_cp, None, format!("cpdd(dt_cp={})", fmt_time(dt_cp)))
}

/// One standalone concatenated cycle of level `level` over `2^level dt`; a
/// pulse at the cycle end is retained.
pub fn gen_cdd(dt: f64, level: u32) -> Result<PulseSequence> {
    positive("dt", dt)?;
    let word = cdd_word(level)?;
    PulseSequence::from_ticks(
        word.pulse_ticks(),
        dt,
        None,
        format!("cdd(dt={},level={level})", fmt_time(dt)),
    )
}

/// Smallest level whose single cycle spans the horizon.
pub fn cdd_min_level(dt: f64, horizon: f64) -> Result<u32> {
    positive("dt", dt)?;
    positive("horizon", horizon)?;
    let r = horizon / dt;
    let mut level = 0u32;
    while (1u64 << level) as f64 * (1.0 + TIME_SLACK) < r {
        level += 1;
        check_level(level)?;
    }
    Ok(level)
}

/// Single concatenated cycle at the minimal level, truncated at the horizon.
pub fn gen_cdd_single(dt: f64, horizon: f64) -> Result<PulseSequence> {
    let level = cdd_min_level(dt, horizon)?;
    gen_cdd_level_truncated(dt, level, horizon, "cdd-single")
}

fn gen_cdd_level_truncated(dt: f64, level: u32, horizon: f64, name: &str) -> Result<PulseSequence> {
    check_level(level)?;
    let limit = horizon_ticks(horizon, dt);
    let mut sink = BoundedWord::bounded(limit);
    emit_cdd(level, &mut sink);
    let ticks = keep_before_horizon(sink.word.pulse_ticks(), limit);
    PulseSequence::from_ticks(ticks, dt, None, format!("{name}(dt={},level={level})", fmt_time(dt)))
}

/// Periodic repetition of the level-`level` cycle with pulses at cycle joins
/// cancelled.
pub fn gen_pcdd(dt: f64, level: u32, horizon: f64) -> Result<PulseSequence> {
    positive("dt", dt)?;
    positive("horizon", horizon)?;
    if level == 0 {
        return Err(Error::Parameter("periodic concatenation needs level >= 1".into()));
    }
    let cycle = cdd_word(level)?;
    let limit = horizon_ticks(horizon, dt);
    let mut word = ControlWord::new();
    while word.duration() <= limit {
        word.extend(&cycle);
    }
    let ticks = keep_before_horizon(word.pulse_ticks(), limit);
    PulseSequence::from_ticks(ticks, dt, None, format!("pcdd(dt={},level={level})", fmt_time(dt)))
}

/// Uhrig DD: `t_j = T sin^2(pi j / (2n + 2))`.
pub fn gen_udd(n: usize, total: f64) -> Result<PulseSequence> {
    positive("total time", total)?;
    if n == 0 {
        return Err(Error::Parameter("UDD needs at least one pulse".into()));
    }
    let times = (1..=n).map(|j| udd_time(j, n, total)).collect();
    PulseSequence::new(times, None, format!("udd(n={n},T={})", fmt_time(total)))
}

fn udd_time(j: usize, n: usize, total: f64) -> f64 {
    let s = (std::f64::consts::PI * j as f64 / (2 * n + 2) as f64).sin();
    total * s * s
}

/// Largest `n` whose shortest UDD interval `T sin^2(pi / (2n + 2))` is at
/// least `dt_min`; zero if even a single pulse is too close.
pub fn udd_max_pulses(total: f64, dt_min: f64) -> Result<usize> {
    positive("total time", total)?;
    positive("dt_min", dt_min)?;
    let mut n = 0usize;
    while udd_time(1, n + 1, total) >= dt_min * (1.0 - TIME_SLACK) {
        n += 1;
        if n > 100_000_000 {
            return Err(Error::Size("UDD pulse count search exceeded 1e8".into()));
        }
    }
    Ok(n)
}

/// Storage time protected by `n`-pulse UDD: `(n + 1) tau_c / 2 pi`.
pub fn udd_effective_time(n: usize, model: &SpectralModel) -> Result<f64> {
    let tau = model.correlation_time()?;
    Ok((n as f64 + 1.0) * tau / (2.0 * std::f64::consts::PI))
}

/// Train of CP cycles `D X 2D X D` with half-intervals `deltas` (ticks).
/// Returns the pulse ticks and the total duration in ticks.
pub fn cp_cycle_ticks(deltas: &[u64]) -> (Vec<u64>, u64) {
    let mut word = ControlWord::new();
    for &d in deltas {
        word.extend(&ControlWord::from_segments([
            Segment::Free(d),
            Segment::X,
            Segment::Free(2 * d),
            Segment::X,
            Segment::Free(d),
        ]));
    }
    (word.pulse_ticks(), word.duration())
}

/// Half-interval schedule in ticks of `tick = dt_min / 2`: one CP cycle
/// with `D = dt_min`, then `D = dt_min / 2` repeated.
fn abrupt_schedule(cycles: usize) -> Vec<u64> {
    (0..cycles).map(|i| if i == 0 { 2 } else { 1 }).collect()
}

/// Interpolated sequence with an abrupt switch: one CP cycle at `dt_min`
/// followed by CP cycles at `dt_min / 2`.
pub fn gen_interp_abrupt(dt_min: f64, horizon: f64) -> Result<PulseSequence> {
    positive("dt_min", dt_min)?;
    positive("horizon", horizon)?;
    let tick = 0.5 * dt_min;
    let limit = horizon_ticks(horizon, tick);
    let cycles = (limit / 2 + 2) as usize;
    let (ticks, _) = cp_cycle_ticks(&abrupt_schedule(cycles));
    let ticks = keep_before_horizon(ticks, limit);
    PulseSequence::from_ticks(
        ticks,
        tick,
        Some(dt_min),
        format!("interp-abrupt(dt_min={})", fmt_time(dt_min)),
    )
}

/// Number of shrinking CP cycles, `dt_min / (2 delta2)`, which must be a
/// positive integer.
pub fn interp_pdd_index(dt_min: f64, delta2: f64) -> Result<u64> {
    positive("dt_min", dt_min)?;
    positive("delta2", delta2)?;
    let r = dt_min / (2.0 * delta2);
    let k = r.round();
    if k < 1.0 || (r - k).abs() > TIME_SLACK * r.max(1.0) {
        return Err(Error::Parameter(format!(
            "dt_min / (2 delta2) must be a positive integer, got {r}"
        )));
    }
    Ok(k as u64)
}

/// Half-interval schedule in ticks of `delta2`: `D_1 = dt_min`,
/// `D_i = dt_min - (i - 1) delta2` for `1 < i <= i_pdd`, then `dt_min / 2`.
pub fn interp_smooth_schedule(i_pdd: u64, cycles: usize) -> Vec<u64> {
    let full = 2 * i_pdd;
    (1..=cycles as u64)
        .map(|i| {
            if i == 1 {
                full
            } else if i <= i_pdd {
                full - (i - 1)
            } else {
                i_pdd
            }
        })
        .collect()
}

/// Interpolated sequence with CP cycles whose interval shrinks by `delta2`
/// per cycle until the sequence locks onto PDD spacing `dt_min`.
pub fn gen_interp_smooth(dt_min: f64, delta2: f64, horizon: f64) -> Result<PulseSequence> {
    positive("horizon", horizon)?;
    let i_pdd = interp_pdd_index(dt_min, delta2)?;
    let tick = delta2;
    let limit = horizon_ticks(horizon, tick);
    let cycles = (limit / (4 * i_pdd) + i_pdd + 2) as usize;
    let (ticks, _) = cp_cycle_ticks(&interp_smooth_schedule(i_pdd, cycles));
    let ticks = keep_before_horizon(ticks, limit);
    PulseSequence::from_ticks(
        ticks,
        tick,
        Some(dt_min),
        format!("interp-smooth(dt_min={},delta2={})", fmt_time(dt_min), fmt_time(delta2)),
    )
}

/// First `cycles` complete cycles of the smooth interpolated sequence and
/// their total duration.
pub fn gen_interp_smooth_cycles(dt_min: f64, delta2: f64, cycles: usize) -> Result<(PulseSequence, f64)> {
    let i_pdd = interp_pdd_index(dt_min, delta2)?;
    let (ticks, total) = cp_cycle_ticks(&interp_smooth_schedule(i_pdd, cycles));
    let seq = PulseSequence::from_ticks(ticks, delta2, Some(dt_min), "interp-smooth-cycles")?;
    Ok((seq, total as f64 * delta2))
}

/// First `cycles` complete cycles of the abrupt interpolated sequence and
/// their total duration.
pub fn gen_interp_abrupt_cycles(dt_min: f64, cycles: usize) -> Result<(PulseSequence, f64)> {
    positive("dt_min", dt_min)?;
    let tick = 0.5 * dt_min;
    let (ticks, total) = cp_cycle_ticks(&abrupt_schedule(cycles));
    let seq = PulseSequence::from_ticks(ticks, tick, Some(dt_min), "interp-abrupt-cycles")?;
    Ok((seq, total as f64 * tick))
}

/// Protocol family and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProtocolKind {
    Free,
    Pdd { dt: f64 },
    Cpdd { dt_cp: f64 },
    CddSingle { dt: f64 },
    Pcdd { dt: f64, level: u32 },
    Udd { n: usize },
    InterpAbrupt { dt_min: f64 },
    InterpSmooth { dt_min: f64, delta2: f64 },
}

/// A protocol applied over a storage horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub kind: ProtocolKind,
    pub horizon: f64,
}

impl ProtocolSpec {
    pub fn new(kind: ProtocolKind, horizon: f64) -> Result<Self> {
        let spec = Self { kind, horizon };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        positive("horizon", self.horizon)?;
        match self.kind {
            ProtocolKind::Free => Ok(()),
            ProtocolKind::Pdd { dt } | ProtocolKind::CddSingle { dt } => positive("dt", dt),
            ProtocolKind::Cpdd { dt_cp } => positive("dt_cp", dt_cp),
            ProtocolKind::Pcdd { dt, level } => {
                positive("dt", dt)?;
                if level == 0 {
                    return Err(Error::Parameter("periodic concatenation needs level >= 1".into()));
                }
                check_level(level)
            }
            ProtocolKind::Udd { n } => {
                if n == 0 {
                    return Err(Error::Parameter("UDD needs at least one pulse".into()));
                }
                Ok(())
            }
            ProtocolKind::InterpAbrupt { dt_min } => positive("dt_min", dt_min),
            ProtocolKind::InterpSmooth { dt_min, delta2 } => interp_pdd_index(dt_min, delta2).map(|_| ()),
        }
    }

    pub fn generate(&self) -> Result<PulseSequence> {
        self.validate()?;
        let h = self.horizon;
        match self.kind {
            ProtocolKind::Free => Ok(PulseSequence::free()),
            ProtocolKind::Pdd { dt } => gen_pdd(dt, h),
            ProtocolKind::Cpdd { dt_cp } => gen_cpdd(dt_cp, h),
            ProtocolKind::CddSingle { dt } => gen_cdd_single(dt, h),
            ProtocolKind::Pcdd { dt, level } => gen_pcdd(dt, level, h),
            ProtocolKind::Udd { n } => gen_udd(n, h),
            ProtocolKind::InterpAbrupt { dt_min } => gen_interp_abrupt(dt_min, h),
            ProtocolKind::InterpSmooth { dt_min, delta2 } => gen_interp_smooth(dt_min, delta2, h),
        }
    }

    /// Characteristic pulse interval used for default grids and lattices.
    pub fn base_interval(&self) -> Option<f64> {
        match self.kind {
            ProtocolKind::Free => None,
            ProtocolKind::Pdd { dt } | ProtocolKind::CddSingle { dt } | ProtocolKind::Pcdd { dt, .. } => Some(dt),
            ProtocolKind::Cpdd { dt_cp } => Some(dt_cp),
            ProtocolKind::Udd { n } => Some(self.horizon / (n as f64 + 1.0)),
            ProtocolKind::InterpAbrupt { dt_min } | ProtocolKind::InterpSmooth { dt_min, .. } => Some(dt_min),
        }
    }

    /// Short identifier such as `pdd`.
    pub fn name(&self) -> &'static str {
        match self.kind {
            ProtocolKind::Free => "free",
            ProtocolKind::Pdd { .. } => "pdd",
            ProtocolKind::Cpdd { .. } => "cpdd",
            ProtocolKind::CddSingle { .. } => "cdd-single",
            ProtocolKind::Pcdd { .. } => "pcdd",
            ProtocolKind::Udd { .. } => "udd",
            ProtocolKind::InterpAbrupt { .. } => "interp-abrupt",
            ProtocolKind::InterpSmooth { .. } => "interp-smooth",
        }
    }
}

/// Spacing summary of a sequence against a minimum-interval constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub sequence: PulseSequence,
    pub min_gap: f64,
    pub constraint_ok: bool,
    pub pulse_count: usize,
    pub dt_min: f64,
    pub horizon: f64,
}

/// Shortest of `t_1`, the inter-pulse gaps and `horizon - t_s`, compared
/// with `dt_min`.
pub fn check_constraint(seq: &PulseSequence, dt_min: f64, horizon: f64) -> SequenceReport {
    let min_gap = match seq.ticks() {
        Some(ticks) if is_on_lattice(horizon, ticks.tick.0) => {
            let h = horizon_ticks(horizon, ticks.tick.0);
            let mut prev = 0u64;
            let mut best = u64::MAX;
            for &k in &ticks.counts {
                best = best.min(k - prev);
                prev = k;
            }
            best = best.min(h.saturating_sub(prev));
            best as f64 * ticks.tick.0
        }
        _ => {
            let mut prev = 0.0;
            let mut best = f64::INFINITY;
            for &t in seq.times() {
                best = best.min(t - prev);
                prev = t;
            }
            best.min(horizon - prev)
        }
    };
    SequenceReport {
        sequence: seq.clone(),
        min_gap,
        constraint_ok: min_gap >= dt_min * (1.0 - TIME_SLACK),
        pulse_count: seq.len(),
        dt_min,
        horizon,
    }
}

fn is_on_lattice(t: f64, tick: f64) -> bool {
    let r = t / tick;
    (r - r.round()).abs() <= TIME_SLACK * r.max(1.0)
}
