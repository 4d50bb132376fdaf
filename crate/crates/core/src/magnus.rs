//! Low-order Magnus coefficients of the toggled dephasing Hamiltonian.
//!
//! In the toggling frame the Hamiltonian is `a(t) Z B_z + I B_0` with
//! `a(t) = +-1` flipping at every pulse. Since
//! `[H(t1), H(t2)] = (a(t1) - a(t2)) [Z B_z, B_0]`, the first two Magnus
//! terms are fixed by two scalars:
//!
//! ```text
//! c1 = int_0^T a(t) dt
//! c2 = int_0^T dt1 int_0^t1 dt2 (a(t1) - a(t2))
//! ```
//!
//! Both are evaluated exactly in integer ticks when the sequence carries a
//! tick lattice.

use serde::{Deserialize, Serialize};

use crate::decoherence::PulseSequence;
use crate::error::{Error, Result};

/// Relative slack used to decide whether a float total lies on the lattice.
const LATTICE_SLACK: f64 = 1e-9;

/// Piecewise-constant sign of the coupling between pulses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TogglingProfile {
    /// `0 = tau_0 < tau_1 < ... < tau_K = T`.
    pub breakpoints: Vec<f64>,
    /// Sign on `[tau_k, tau_{k+1})`.
    pub signs: Vec<i8>,
    /// Exact breakpoints in ticks, with the tick size.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ticks: Option<(f64, Vec<u64>)>,
}

impl TogglingProfile {
    /// Profile from explicit interval lengths, starting at `+1`.
    pub fn from_lengths(lengths: &[f64]) -> Result<Self> {
        if lengths.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::Parameter("interval lengths must be positive".into()));
        }
        let mut breakpoints = vec![0.0];
        let mut t = 0.0;
        for &l in lengths {
            t += l;
            breakpoints.push(t);
        }
        Ok(Self {
            breakpoints,
            signs: alternating(lengths.len()),
            ticks: None,
        })
    }

    /// Profile from interval lengths in ticks, starting at `+1`.
    pub fn from_tick_lengths(lengths: &[u64], tick: f64) -> Result<Self> {
        if lengths.iter().any(|&l| l == 0) || !(tick > 0.0) {
            return Err(Error::Parameter("interval lengths and tick must be positive".into()));
        }
        let mut bounds = vec![0u64];
        for &l in lengths {
            bounds.push(bounds.last().unwrap() + l);
        }
        Ok(Self {
            breakpoints: bounds.iter().map(|&b| b as f64 * tick).collect(),
            signs: alternating(lengths.len()),
            ticks: Some((tick, bounds)),
        })
    }

    pub fn intervals(&self) -> usize {
        self.signs.len()
    }

    pub fn total(&self) -> f64 {
        *self.breakpoints.last().unwrap_or(&0.0)
    }

    fn lengths(&self) -> Vec<f64> {
        self.breakpoints.windows(2).map(|w| w[1] - w[0]).collect()
    }

    fn tick_lengths(&self) -> Option<(f64, Vec<i128>)> {
        self.ticks
            .as_ref()
            .map(|(tick, b)| (*tick, b.windows(2).map(|w| (w[1] - w[0]) as i128).collect()))
    }
}

fn alternating(k: usize) -> Vec<i8> {
    (0..k).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect()
}

/// Toggling profile of `seq` over `[0, total]`.
pub fn profile_from_sequence(seq: &PulseSequence, total: f64) -> Result<TogglingProfile> {
    if !(total > 0.0) {
        return Err(Error::Parameter(format!("total time must be positive, got {total}")));
    }
    if let Some(&last) = seq.times().last() {
        if !(last < total) {
            return Err(Error::Domain(format!("pulse at {last} is not inside (0, {total})")));
        }
    }
    if let Some(t) = seq.ticks() {
        let tick = t.tick.0;
        let r = total / tick;
        let k = r.round();
        if (r - k).abs() <= LATTICE_SLACK * r.max(1.0) {
            let mut bounds = Vec::with_capacity(t.counts.len() + 2);
            bounds.push(0u64);
            bounds.extend_from_slice(&t.counts);
            bounds.push(k as u64);
            return Ok(TogglingProfile {
                breakpoints: bounds.iter().map(|&b| b as f64 * tick).collect(),
                signs: alternating(t.counts.len() + 1),
                ticks: Some((tick, bounds)),
            });
        }
    }
    let mut breakpoints = Vec::with_capacity(seq.len() + 2);
    breakpoints.push(0.0);
    breakpoints.extend_from_slice(seq.times());
    breakpoints.push(total);
    Ok(TogglingProfile {
        breakpoints,
        signs: alternating(seq.len() + 1),
        ticks: None,
    })
}

/// A coefficient with its exact lattice value when available.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagnusValue {
    /// Value in time units (`c1`) or squared time units (`c2`).
    pub value: f64,
    /// Exact value in ticks (`c1`) or ticks squared (`c2`).
    pub ticks: Option<i128>,
    pub tick: Option<f64>,
}

impl MagnusValue {
    pub fn is_exact_zero(&self) -> bool {
        self.ticks == Some(0)
    }
}

/// `c1 = sum_k s_k len_k`.
pub fn magnus_a1_coefficient(p: &TogglingProfile) -> MagnusValue {
    if let Some((tick, lens)) = p.tick_lengths() {
        let c: i128 = lens.iter().zip(&p.signs).map(|(&l, &s)| s as i128 * l).sum();
        return MagnusValue {
            value: c as f64 * tick,
            ticks: Some(c),
            tick: Some(tick),
        };
    }
    let c: f64 = p.lengths().iter().zip(&p.signs).map(|(&l, &s)| s as f64 * l).sum();
    MagnusValue {
        value: c,
        ticks: None,
        tick: None,
    }
}

/// `c2 = sum_{k>j} (s_k - s_j) len_k len_j`, in one pass with prefix sums.
pub fn magnus_a2_coefficient(p: &TogglingProfile) -> MagnusValue {
    if let Some((tick, lens)) = p.tick_lengths() {
        let mut len_sum: i128 = 0;
        let mut signed_sum: i128 = 0;
        let mut c: i128 = 0;
        for (&l, &s) in lens.iter().zip(&p.signs) {
            let s = s as i128;
            c += l * (s * len_sum - signed_sum);
            len_sum += l;
            signed_sum += s * l;
        }
        return MagnusValue {
            value: c as f64 * tick * tick,
            ticks: Some(c),
            tick: Some(tick),
        };
    }
    let mut len_sum = 0.0;
    let mut signed_sum = 0.0;
    let mut c = 0.0;
    for (&l, &s) in p.lengths().iter().zip(&p.signs) {
        let s = s as f64;
        c += l * (s * len_sum - signed_sum);
        len_sum += l;
        signed_sum += s * l;
    }
    MagnusValue {
        value: c,
        ticks: None,
        tick: None,
    }
}

/// Reference `O(K^2)` evaluation of `c2` in floating point.
pub fn magnus_a2_pairwise(p: &TogglingProfile) -> f64 {
    let lens = p.lengths();
    let mut c = 0.0;
    for k in 0..lens.len() {
        for j in 0..k {
            c += (p.signs[k] - p.signs[j]) as f64 * lens[k] * lens[j];
        }
    }
    c
}

/// First- and second-order cancellation check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderCheck {
    pub a1: MagnusValue,
    pub a2: MagnusValue,
    /// Both coefficients vanish.
    pub cancels: bool,
    /// The verdict comes from integer arithmetic.
    pub exact: bool,
}

/// Relative tolerance used only when no tick lattice is available.
pub const FLOAT_ZERO_TOLERANCE: f64 = 1e-12;

/// Checks whether the sequence cancels the first two Magnus orders over
/// `[0, total]`.
pub fn verify_second_order(seq: &PulseSequence, total: f64) -> Result<SecondOrderCheck> {
    let p = profile_from_sequence(seq, total)?;
    let a1 = magnus_a1_coefficient(&p);
    let a2 = magnus_a2_coefficient(&p);
    let (cancels, exact) = match (a1.ticks, a2.ticks) {
        (Some(c1), Some(c2)) => (c1 == 0 && c2 == 0, true),
        _ => (
            a1.value.abs() <= FLOAT_ZERO_TOLERANCE * total
                && a2.value.abs() <= FLOAT_ZERO_TOLERANCE * total * total,
            false,
        ),
    };
    Ok(SecondOrderCheck { a1, a2, cancels, exact })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_signs() {
        let pdd = PulseSequence::from_ticks(vec![1], 0.1, None, "pdd").unwrap();
        let p = profile_from_sequence(&pdd, 0.2).unwrap();
        assert_eq!(p.signs, vec![1, -1]);
        let cp = PulseSequence::from_ticks(vec![1, 3], 0.1, None, "cp").unwrap();
        let p = profile_from_sequence(&cp, 0.4).unwrap();
        assert_eq!(p.signs, vec![1, -1, 1]);
        let p = profile_from_sequence(&PulseSequence::free(), 1.0).unwrap();
        assert_eq!(p.signs, vec![1]);
        assert!(profile_from_sequence(&cp, 0.3).is_err());
    }

    #[test]
    fn first_order_examples() {
        let p = TogglingProfile::from_tick_lengths(&[1, 1], 0.1).unwrap();
        assert!(magnus_a1_coefficient(&p).is_exact_zero());
        let p = TogglingProfile::from_tick_lengths(&[1, 2, 1], 0.1).unwrap();
        assert!(magnus_a1_coefficient(&p).is_exact_zero());
        let s = PulseSequence::new(vec![1.0 / 3.0], None, "one").unwrap();
        let p = profile_from_sequence(&s, 1.0).unwrap();
        assert!((magnus_a1_coefficient(&p).value + 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn second_order_examples() {
        let p = TogglingProfile::from_tick_lengths(&[1, 1], 0.1).unwrap();
        let c2 = magnus_a2_coefficient(&p);
        assert_eq!(c2.ticks, Some(-2));
        assert!((c2.value + 2.0 * 0.01).abs() < 1e-15);
        let p = TogglingProfile::from_tick_lengths(&[1, 2, 1], 0.1).unwrap();
        assert!(magnus_a2_coefficient(&p).is_exact_zero());
    }

    #[test]
    fn prefix_sum_matches_pairwise() {
        let p = TogglingProfile::from_lengths(&[0.3, 1.1, 0.05, 2.0, 0.7, 0.01]).unwrap();
        let fast = magnus_a2_coefficient(&p).value;
        let slow = magnus_a2_pairwise(&p);
        assert!((fast - slow).abs() < 1e-12);
    }

    #[test]
    fn float_fallback_for_udd_like_times() {
        let s = PulseSequence::new(vec![0.25, 0.75], None, "udd2").unwrap();
        let c = verify_second_order(&s, 1.0).unwrap();
        assert!(!c.exact);
        assert!(c.cancels);
    }
}
