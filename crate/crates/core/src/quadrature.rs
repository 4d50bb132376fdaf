//! Globally adaptive Gauss-Kronrod quadrature on a finite interval.
//!
//! The interval is first cut at caller supplied breakpoints; the panel with
//! the largest error estimate is then bisected until the summed estimate
//! meets the tolerance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerances and limits for frequency integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
    /// Upper limit as a multiple of the cutoff; `None` picks the family default.
    pub omega_max_factor: Option<f64>,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-14,
            max_subdivisions: 200_000,
            omega_max_factor: None,
        }
    }
}

impl QuadratureSettings {
    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_abs_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_omega_max_factor(mut self, k: f64) -> Self {
        self.omega_max_factor = Some(k);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol >= 0.0) {
            return Err(Error::Parameter("tolerances must be positive".into()));
        }
        if self.max_subdivisions == 0 {
            return Err(Error::Parameter("max_subdivisions must be positive".into()));
        }
        if let Some(k) = self.omega_max_factor {
            if !(k >= 10.0) {
                return Err(Error::Parameter(format!(
                    "upper limit must be at least 10 cutoff frequencies, got {k}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
    pub subdivisions: usize,
}

/// Compensated (Neumaier) summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Compensated sum of an iterator.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<NeumaierSum>().value()
}

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_980_270_813,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Weights of the embedded 10-point Gauss rule at `XGK[1], XGK[3], ..., XGK[9]`.
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// One 21-point Kronrod panel: `(value, error_estimate)`.
pub fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut resk = fc * WGK[10];
    let mut resg = 0.0;
    let mut resabs = fc.abs() * WGK[10];
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * resk;
    let mut resasc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = resk * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let mut err = ((resk - resg) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    let floor = 50.0 * f64::EPSILON * resabs;
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(floor);
    }
    (value, err)
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Integrates `f` over `[a, b]` starting from panels cut at `breakpoints`.
///
/// Breakpoints outside `(a, b)` are ignored.
pub fn integrate<F>(f: F, a: f64, b: f64, breakpoints: &[f64], settings: &QuadratureSettings) -> Result<QuadResult>
where
    F: Fn(f64) -> f64,
{
    if !(b > a) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Parameter(format!("invalid integration interval [{a}, {b}]")));
    }
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&x| x > a && x < b && x.is_finite())
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(a);
    edges.extend(cuts);
    edges.push(b);

    let mut heap = BinaryHeap::with_capacity(edges.len() * 2);
    let mut total_err = 0.0;
    for w in edges.windows(2) {
        let (value, error) = gk21(&f, w[0], w[1]);
        if !value.is_finite() {
            return Err(Error::Domain(format!("integrand not finite on [{}, {}]", w[0], w[1])));
        }
        total_err += error;
        heap.push(Panel { a: w[0], b: w[1], value, error });
    }

    let mut subdivisions = 0usize;
    let mut finished: Vec<Panel> = Vec::new();
    loop {
        let value = current_value(&heap, &finished);
        let tol = settings.abs_tol.max(settings.rel_tol * value.abs());
        if total_err <= tol {
            return Ok(QuadResult {
                value,
                error_estimate: total_err,
                subdivisions,
            });
        }
        let Some(worst) = heap.pop() else {
            return Err(Error::Accuracy {
                value,
                error_estimate: total_err,
                subdivisions,
            });
        };
        let mid = 0.5 * (worst.a + worst.b);
        // Panels at the resolution of the floating point grid cannot be refined.
        if !(mid > worst.a && mid < worst.b) || (worst.b - worst.a) <= 4.0 * f64::EPSILON * worst.b.abs().max(1e-300) {
            finished.push(worst);
            continue;
        }
        if subdivisions >= settings.max_subdivisions {
            heap.push(worst);
            return Err(Error::Accuracy {
                value,
                error_estimate: total_err,
                subdivisions,
            });
        }
        subdivisions += 1;
        let (v1, e1) = gk21(&f, worst.a, mid);
        let (v2, e2) = gk21(&f, mid, worst.b);
        if !v1.is_finite() || !v2.is_finite() {
            return Err(Error::Domain(format!("integrand not finite on [{}, {}]", worst.a, worst.b)));
        }
        total_err += e1 + e2 - worst.error;
        // Guard against drift of the running total.
        if subdivisions % 1024 == 0 {
            total_err = heap.iter().chain(finished.iter()).map(|p| p.error).sum::<f64>() + e1 + e2;
        }
        heap.push(Panel { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Panel { a: mid, b: worst.b, value: v2, error: e2 });
    }
}

fn current_value(heap: &BinaryHeap<Panel>, finished: &[Panel]) -> f64 {
    compensated_sum(heap.iter().chain(finished.iter()).map(|p| p.value))
}

/// Points `a + k * spacing` strictly inside `(a, b)`, at most `max_points` of them.
///
/// When the spacing would produce more points the spacing is widened.
pub fn uniform_breakpoints(a: f64, b: f64, spacing: f64, max_points: usize) -> Vec<f64> {
    if !(spacing > 0.0) || !(b > a) || max_points == 0 {
        return Vec::new();
    }
    let mut step = spacing;
    let count = ((b - a) / step).floor();
    if count > max_points as f64 {
        step = (b - a) / max_points as f64;
    }
    let mut out = Vec::new();
    let mut k = 1usize;
    loop {
        let x = a + k as f64 * step;
        if x >= b || out.len() >= max_points {
            break;
        }
        out.push(x);
        k += 1;
    }
    out
}
