//! Bath spectral densities and the thermal kernel.
//!
//! The controlled and free decoherence functions are frequency integrals of
//! the kernel
//!
//! ```text
//! eta(w) = (2 alpha)^2 I(w) coth(w / 2T) / (2 w^2)
//! ```
//!
//! against a sequence dependent filter. Values are in natural units
//! (`hbar = k_B = 1`); see [`crate::units`] for the physical convention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{self, UnitsMode};

/// Below this argument `coth` is evaluated from its Laurent series.
pub const COTH_SERIES_THRESHOLD: f64 = 1e-4;

/// Name of the fitted GaAs exciton bath preset.
pub const EXCITON_PRESET: &str = "exciton-gaas-77K";

/// `coth(x)` for `x > 0`.
pub fn coth(x: f64) -> f64 {
    if x < COTH_SERIES_THRESHOLD {
        let x2 = x * x;
        1.0 / x + x / 3.0 - x * x2 / 45.0
    } else {
        1.0 / x.tanh()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectralFamily {
    /// `F w exp(-w/wc)`
    OhmicExp,
    /// `F w^3 exp(-w/wc)`
    SupraohmicExp,
    /// `F w^3 exp(-w^2/wc^2)`
    SupraohmicGauss,
    /// Monotone cubic interpolation of `(w, I)` samples.
    Tabulated,
}

impl SpectralFamily {
    pub fn name(self) -> &'static str {
        match self {
            SpectralFamily::OhmicExp => "ohmic-exp",
            SpectralFamily::SupraohmicExp => "supraohmic-exp",
            SpectralFamily::SupraohmicGauss => "supraohmic-gauss",
            SpectralFamily::Tabulated => "tabulated",
        }
    }

    /// Power of `w` at small frequency, if the family is parametric.
    pub fn power(self) -> Option<i32> {
        match self {
            SpectralFamily::OhmicExp => Some(1),
            SpectralFamily::SupraohmicExp | SpectralFamily::SupraohmicGauss => Some(3),
            SpectralFamily::Tabulated => None,
        }
    }

    /// Default upper integration limit in units of the cutoff.
    pub fn default_omega_max_factor(self) -> f64 {
        match self {
            SpectralFamily::SupraohmicGauss => 40.0,
            _ => 200.0,
        }
    }
}

impl std::str::FromStr for SpectralFamily {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ohmic-exp" => Ok(SpectralFamily::OhmicExp),
            "supraohmic-exp" => Ok(SpectralFamily::SupraohmicExp),
            "supraohmic-gauss" => Ok(SpectralFamily::SupraohmicGauss),
            "tabulated" => Ok(SpectralFamily::Tabulated),
            other => Err(format!("unknown spectral family '{other}'")),
        }
    }
}

/// Shape-preserving (Fritsch-Carlson) cubic interpolant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(samples: &[(f64, f64)]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Parameter("tabulated model needs at least two samples".into()));
        }
        let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let ys: Vec<f64> = samples.iter().map(|s| s.1).collect();
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parameter("tabulated frequencies must be strictly increasing".into()));
        }
        if xs[0] < 0.0 || ys.iter().any(|&y| !(y >= 0.0) || !y.is_finite()) {
            return Err(Error::Parameter("tabulated samples must have w >= 0 and finite I >= 0".into()));
        }
        let n = xs.len();
        let secants: Vec<f64> = (0..n - 1)
            .map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]))
            .collect();
        let mut slopes = vec![0.0; n];
        slopes[0] = secants[0];
        slopes[n - 1] = secants[n - 2];
        for i in 1..n - 1 {
            slopes[i] = if secants[i - 1] * secants[i] <= 0.0 {
                0.0
            } else {
                (secants[i - 1] + secants[i]) / 2.0
            };
        }
        for i in 0..n - 1 {
            let d = secants[i];
            if d == 0.0 {
                slopes[i] = 0.0;
                slopes[i + 1] = 0.0;
                continue;
            }
            let a = slopes[i] / d;
            let b = slopes[i + 1] / d;
            let r = a * a + b * b;
            if r > 9.0 {
                let tau = 3.0 / r.sqrt();
                slopes[i] = tau * a * d;
                slopes[i + 1] = tau * b * d;
            }
        }
        Ok(Self { xs, ys, slopes })
    }

    /// True when the first segment is identically zero, so that `I / w^3`
    /// stays bounded at the origin.
    pub fn vanishes_near_zero(&self) -> bool {
        self.xs[0] == 0.0 && self.ys[0] == 0.0 && self.ys[1] == 0.0
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        if !(x >= lo && x <= hi) {
            return Err(Error::Range { omega: x, lo, hi });
        }
        let i = match self.xs.partition_point(|&v| v <= x) {
            0 => 0,
            k if k >= self.xs.len() => self.xs.len() - 2,
            k => k - 1,
        };
        let h = self.xs[i + 1] - self.xs[i];
        let s = (x - self.xs[i]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        Ok(h00 * self.ys[i] + h10 * h * self.slopes[i] + h01 * self.ys[i + 1] + h11 * h * self.slopes[i + 1])
    }
}

/// Parametric or tabulated spectral density `I(w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralModel {
    pub family: SpectralFamily,
    /// Coupling strength `F`; units make `I` a frequency.
    pub coupling: f64,
    /// Cutoff frequency; optional only for tabulated models.
    pub cutoff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<MonotoneCubic>,
}

impl SpectralModel {
    pub fn parametric(family: SpectralFamily, coupling: f64, cutoff: f64) -> Result<Self> {
        if family == SpectralFamily::Tabulated {
            return Err(Error::Parameter("use SpectralModel::tabulated for sampled densities".into()));
        }
        if !(cutoff > 0.0) || !cutoff.is_finite() {
            return Err(Error::Parameter(format!("cutoff must be positive, got {cutoff}")));
        }
        if !(coupling >= 0.0) || !coupling.is_finite() {
            return Err(Error::Parameter(format!("coupling must be non-negative, got {coupling}")));
        }
        Ok(Self {
            family,
            coupling,
            cutoff: Some(cutoff),
            table: None,
        })
    }

    pub fn ohmic_exp(coupling: f64, cutoff: f64) -> Result<Self> {
        Self::parametric(SpectralFamily::OhmicExp, coupling, cutoff)
    }

    pub fn supraohmic_exp(coupling: f64, cutoff: f64) -> Result<Self> {
        Self::parametric(SpectralFamily::SupraohmicExp, coupling, cutoff)
    }

    pub fn supraohmic_gauss(coupling: f64, cutoff: f64) -> Result<Self> {
        Self::parametric(SpectralFamily::SupraohmicGauss, coupling, cutoff)
    }

    /// Sampled density. The samples must start at `w = 0` for the model to be
    /// integrable from zero.
    pub fn tabulated(samples: &[(f64, f64)], cutoff: Option<f64>) -> Result<Self> {
        if let Some(c) = cutoff {
            if !(c > 0.0) {
                return Err(Error::Parameter(format!("cutoff must be positive, got {c}")));
            }
        }
        Ok(Self {
            family: SpectralFamily::Tabulated,
            coupling: 1.0,
            cutoff,
            table: Some(MonotoneCubic::new(samples)?),
        })
    }

    /// Least-squares fit of the GaAs exciton spectral density in physical
    /// units: `F = 1.14e-26 s^2 = 0.0114 ps^2`, `hbar wc = 2 meV`.
    pub fn exciton_fit() -> Self {
        let coupling = units::seconds_power_to_ps(1.14e-26, 2);
        let cutoff = UnitsMode::Physical.energy_to_frequency(2.0);
        Self::supraohmic_gauss(coupling, cutoff).expect("preset parameters are valid")
    }

    /// Returns a copy with the coupling multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut m = self.clone();
        m.coupling *= factor;
        m
    }

    /// Evaluates `I(w)`.
    pub fn eval(&self, omega: f64) -> Result<f64> {
        if omega < 0.0 || omega.is_nan() {
            return Err(Error::Domain(format!("spectral density needs w >= 0, got {omega}")));
        }
        if let Some(table) = &self.table {
            return table.eval(omega).map(|v| v * self.coupling);
        }
        if omega == 0.0 {
            return Ok(0.0);
        }
        Ok(self.eval_parametric(omega))
    }

    fn eval_parametric(&self, omega: f64) -> f64 {
        let wc = self.cutoff.unwrap_or(f64::INFINITY);
        let f = self.coupling;
        match self.family {
            SpectralFamily::OhmicExp => f * omega * (-omega / wc).exp(),
            SpectralFamily::SupraohmicExp => f * omega.powi(3) * (-omega / wc).exp(),
            SpectralFamily::SupraohmicGauss => {
                let r = omega / wc;
                f * omega.powi(3) * (-r * r).exp()
            }
            SpectralFamily::Tabulated => unreachable!("tabulated handled by caller"),
        }
    }

    /// `tau_c = 2 pi / wc`.
    pub fn correlation_time(&self) -> Result<f64> {
        match self.cutoff {
            Some(wc) => Ok(2.0 * std::f64::consts::PI / wc),
            None => Err(Error::Unsupported(
                "correlation time needs a declared cutoff frequency".into(),
            )),
        }
    }

    /// True when `I ~ w^3` at small frequency, i.e. free dephasing saturates.
    pub fn is_supraohmic(&self) -> bool {
        matches!(
            self.family,
            SpectralFamily::SupraohmicExp | SpectralFamily::SupraohmicGauss
        )
    }

    /// True for families whose `Gamma_0(t)` grows without bound.
    pub fn is_ohmic(&self) -> bool {
        self.family == SpectralFamily::OhmicExp
    }
}

/// A spectral density together with the temperature and coupling symmetry
/// that determine the kernel `eta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    pub model: SpectralModel,
    /// Thermal frequency `k_B T / hbar` (internal units).
    pub temperature: f64,
    /// Fraction of the coupling carried by `sigma_z`; `alpha = 1/2` means
    /// only one level couples.
    pub alpha: f64,
    /// Unit system the bath was specified in.
    pub units: UnitsMode,
}

impl BathSpec {
    /// `temperature` is in internal units (`k_B T / hbar`).
    pub fn new(model: SpectralModel, temperature: f64, alpha: f64, units: UnitsMode) -> Result<Self> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::Parameter(format!("temperature must be positive, got {temperature}")));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Parameter(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        Ok(Self {
            model,
            temperature,
            alpha,
            units,
        })
    }

    /// Builds a bath from a temperature given in the units of `units` (K for physical).
    pub fn with_temperature_in(model: SpectralModel, temperature: f64, alpha: f64, units: UnitsMode) -> Result<Self> {
        Self::new(model, units.temperature_to_frequency(temperature), alpha, units)
    }

    /// Fitted exciton in a GaAs dot at 77 K with `alpha = 1/2`.
    pub fn exciton_gaas_77k() -> Self {
        Self::with_temperature_in(SpectralModel::exciton_fit(), 77.0, 0.5, UnitsMode::Physical)
            .expect("preset parameters are valid")
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            EXCITON_PRESET => Some(Self::exciton_gaas_77k()),
            _ => None,
        }
    }

    pub fn with_model(&self, model: SpectralModel) -> Self {
        Self { model, ..self.clone() }
    }

    pub fn with_temperature(&self, temperature: f64) -> Result<Self> {
        Self::new(self.model.clone(), temperature, self.alpha, self.units)
    }

    fn prefactor(&self) -> f64 {
        let s = 2.0 * self.alpha;
        s * s
    }

    /// `eta(w)` for `w > 0`.
    pub fn eta(&self, omega: f64) -> Result<f64> {
        if !(omega > 0.0) {
            return Err(Error::Domain(format!("eta needs w > 0, got {omega}")));
        }
        if self.model.table.is_some() {
            let i = self.model.eval(omega)?;
            return Ok(self.prefactor() * i / (2.0 * omega * omega) * coth(omega / (2.0 * self.temperature)));
        }
        Ok(self.eta_unchecked(omega))
    }

    /// `eta(w)` without argument validation; used inside integrands where
    /// `w` is known to lie in `(0, upper_limit]`.
    pub(crate) fn eta_unchecked(&self, omega: f64) -> f64 {
        let m = &self.model;
        let c = coth(omega / (2.0 * self.temperature));
        let pref = 0.5 * self.prefactor() * m.coupling;
        match m.family {
            SpectralFamily::OhmicExp => {
                let wc = m.cutoff.unwrap_or(f64::INFINITY);
                pref * (-omega / wc).exp() / omega * c
            }
            SpectralFamily::SupraohmicExp => {
                let wc = m.cutoff.unwrap_or(f64::INFINITY);
                pref * omega * (-omega / wc).exp() * c
            }
            SpectralFamily::SupraohmicGauss => {
                let r = omega / m.cutoff.unwrap_or(f64::INFINITY);
                pref * omega * (-r * r).exp() * c
            }
            SpectralFamily::Tabulated => {
                let i = m.table.as_ref().and_then(|t| t.eval(omega).ok()).unwrap_or(0.0);
                self.prefactor() * m.coupling * i / (2.0 * omega * omega) * c
            }
        }
    }

    /// Upper frequency limit for integrals over `eta`.
    pub fn integration_limit(&self, omega_max_factor: Option<f64>) -> f64 {
        if let Some(table) = &self.model.table {
            return table.domain().1;
        }
        let wc = self.model.cutoff.expect("parametric models carry a cutoff");
        let k = omega_max_factor.unwrap_or_else(|| self.model.family.default_omega_max_factor());
        k * wc
    }

    pub fn correlation_time(&self) -> Result<f64> {
        self.model.correlation_time()
    }
}

/// Spectral density of `model` at `omega`.
pub fn eval_spectral_density(model: &SpectralModel, omega: f64) -> Result<f64> {
    model.eval(omega)
}

/// Thermal kernel of `bath` at `omega > 0`.
pub fn eval_eta(bath: &BathSpec, omega: f64) -> Result<f64> {
    bath.eta(omega)
}

pub fn correlation_time(model: &SpectralModel) -> Result<f64> {
    model.correlation_time()
}
