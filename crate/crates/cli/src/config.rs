//! Run configuration: a TOML key-value file binding a bath, protocols and
//! task settings.
//!
//! ```toml
//! [bath]
//! preset = "exciton-gaas-77K"
//!
//! [run]
//! horizon = 10.0
//! samples_per_interval = 40
//!
//! [[protocol]]
//! kind = "pdd"
//! dt = 0.1
//! ```

use std::path::PathBuf;

use serde::Deserialize;

use ddcore::decoherence::{PulseSequence, QuadratureSettings, SAMPLES_PER_INTERVAL};
use ddcore::sequences::{ProtocolKind, ProtocolSpec};
use ddcore::spectral::{BathSpec, SpectralFamily, SpectralModel};
use ddcore::units::UnitsMode;

/// A configuration problem, anchored to a 1-based line when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    bath: Option<RawBath>,
    run: Option<RawRun>,
    quadrature: Option<RawQuadrature>,
    #[serde(default)]
    protocol: Vec<RawProtocol>,
    asymptote: Option<RawAsymptote>,
    sweep: Option<RawSweep>,
    bands: Option<RawBands>,
    compare: Option<RawCompare>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBath {
    preset: Option<String>,
    family: Option<String>,
    #[serde(rename = "F")]
    coupling: Option<f64>,
    omega_c: Option<f64>,
    cutoff_energy: Option<f64>,
    temperature: Option<f64>,
    alpha: Option<f64>,
    units: Option<String>,
    table: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    horizon: Option<f64>,
    samples_per_interval: Option<usize>,
    grid_step: Option<f64>,
    method: Option<String>,
    output: Option<String>,
    dt_min: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuadrature {
    rel_tol: Option<f64>,
    abs_tol: Option<f64>,
    max_subdivisions: Option<usize>,
    omega_max_factor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProtocol {
    kind: String,
    label: Option<String>,
    horizon: Option<f64>,
    dt: Option<f64>,
    dt_cp: Option<f64>,
    level: Option<u32>,
    n: Option<usize>,
    dt_min: Option<f64>,
    delta2: Option<f64>,
    times: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAsymptote {
    dt: Vec<f64>,
    n_max: Option<usize>,
    epsilon: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    dt_lo: f64,
    dt_hi: f64,
    steps: usize,
    spacing: Option<String>,
    t1: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBands {
    dt: f64,
    cycles: u64,
    stride: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCompare {
    window_lo: Option<f64>,
    window_hi: Option<f64>,
}

/// How controlled traces are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Sum of free-evolution values.
    Exact,
    /// Direct filter-function quadrature.
    Direct,
}

/// A protocol family or an explicit pulse list.
#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolEntry {
    Family(ProtocolSpec),
    Explicit { times: Vec<f64>, horizon: f64 },
}

/// One protocol with its output label.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedProtocol {
    pub label: String,
    pub entry: ProtocolEntry,
}

impl NamedProtocol {
    pub fn horizon(&self) -> f64 {
        match &self.entry {
            ProtocolEntry::Family(s) => s.horizon,
            ProtocolEntry::Explicit { horizon, .. } => *horizon,
        }
    }

    pub fn generate(&self) -> ddcore::Result<PulseSequence> {
        let seq = match &self.entry {
            ProtocolEntry::Family(s) => s.generate()?,
            ProtocolEntry::Explicit { times, .. } => PulseSequence::new(times.clone(), None, self.label.clone())?,
        };
        Ok(seq.with_label(self.label.clone()))
    }

    /// Minimum interval the protocol is designed around.
    pub fn design_interval(&self) -> Option<f64> {
        match &self.entry {
            ProtocolEntry::Family(s) => s.base_interval(),
            ProtocolEntry::Explicit { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepSpacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoteTask {
    pub dts: Vec<f64>,
    pub n_max: usize,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTask {
    pub dt_lo: f64,
    pub dt_hi: f64,
    pub steps: usize,
    pub spacing: SweepSpacing,
    /// Reference lifetime in internal time units.
    pub t1: f64,
}

impl SweepTask {
    pub fn points(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.dt_lo];
        }
        let m = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| {
                let f = i as f64 / m;
                match self.spacing {
                    SweepSpacing::Linear => self.dt_lo + f * (self.dt_hi - self.dt_lo),
                    SweepSpacing::Log => (self.dt_lo.ln() + f * (self.dt_hi / self.dt_lo).ln()).exp(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandsTask {
    pub dt: f64,
    pub cycles: u64,
    pub stride: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareTask {
    pub window: Option<(f64, f64)>,
}

/// Validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub bath: BathSpec,
    pub horizon: f64,
    pub samples_per_interval: usize,
    pub grid_step: Option<f64>,
    pub method: Method,
    pub output: Option<PathBuf>,
    pub dt_min: Option<f64>,
    pub quadrature: QuadratureSettings,
    pub protocols: Vec<NamedProtocol>,
    pub asymptote: Option<AsymptoteTask>,
    pub sweep: Option<SweepTask>,
    pub bands: Option<BandsTask>,
    pub compare: Option<CompareTask>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            bath: BathSpec::exciton_gaas_77k(),
            horizon: 10.0,
            samples_per_interval: SAMPLES_PER_INTERVAL,
            grid_step: None,
            method: Method::Exact,
            output: None,
            dt_min: None,
            quadrature: QuadratureSettings::default(),
            protocols: Vec::new(),
            asymptote: None,
            sweep: None,
            bands: None,
            compare: None,
        }
    }
}

impl RunConfig {
    /// Grid step for a trace whose fastest interval is `interval`.
    pub fn step_for(&self, interval: Option<f64>) -> f64 {
        if let Some(h) = self.grid_step {
            return h;
        }
        let base = interval.unwrap_or(self.horizon / 100.0);
        base / self.samples_per_interval as f64
    }

    /// Parses and validates configuration text.
    pub fn parse(source: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(source).map_err(|e| ConfigError {
            line: e.span().map(|s| line_of(source, s.start)),
            message: e.message().trim().to_string(),
        })?;
        Builder { source }.build(raw)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }
}

fn line_of(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

/// Line of `key` inside the `occurrence`-th table named `table`, falling
/// back to the table header.
fn locate(source: &str, table: &str, occurrence: usize, key: Option<&str>) -> Option<usize> {
    let mut seen = 0usize;
    let mut inside = false;
    let mut header = None;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.starts_with('[') {
            let name = line.trim_matches(|c| c == '[' || c == ']').trim();
            inside = false;
            if name == table {
                if seen == occurrence {
                    inside = true;
                    header = Some(i + 1);
                }
                seen += 1;
            }
            continue;
        }
        if inside {
            if let Some(k) = key {
                if line.split('=').next().map(str::trim) == Some(k) {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}

struct Builder<'a> {
    source: &'a str,
}

impl Builder<'_> {
    fn err(&self, table: &str, occurrence: usize, key: Option<&str>, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: locate(self.source, table, occurrence, key),
            message: message.into(),
        }
    }

    fn build(&self, raw: RawConfig) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        let bath_units;
        if let Some(b) = raw.bath {
            let (bath, units) = self.bath(b)?;
            cfg.bath = bath;
            bath_units = units;
        } else {
            bath_units = cfg.bath.units;
        }
        if let Some(r) = raw.run {
            if let Some(h) = r.horizon {
                if !(h > 0.0) {
                    return Err(self.err("run", 0, Some("horizon"), format!("horizon must be positive, got {h}")));
                }
                cfg.horizon = h;
            }
            if let Some(s) = r.samples_per_interval {
                if s < 2 {
                    return Err(self.err("run", 0, Some("samples_per_interval"), "samples_per_interval must be at least 2"));
                }
                cfg.samples_per_interval = s;
            }
            if let Some(h) = r.grid_step {
                if !(h > 0.0) {
                    return Err(self.err("run", 0, Some("grid_step"), format!("grid_step must be positive, got {h}")));
                }
                cfg.grid_step = Some(h);
            }
            if let Some(m) = r.method {
                cfg.method = match m.as_str() {
                    "exact" => Method::Exact,
                    "direct" => Method::Direct,
                    other => {
                        return Err(self.err("run", 0, Some("method"), format!("unknown method '{other}' (exact, direct)")))
                    }
                };
            }
            if let Some(d) = r.dt_min {
                if !(d > 0.0) {
                    return Err(self.err("run", 0, Some("dt_min"), format!("dt_min must be positive, got {d}")));
                }
                cfg.dt_min = Some(d);
            }
            cfg.output = r.output.map(PathBuf::from);
        }
        if let Some(q) = raw.quadrature {
            let mut s = cfg.quadrature;
            if let Some(v) = q.rel_tol {
                s.rel_tol = v;
            }
            if let Some(v) = q.abs_tol {
                s.abs_tol = v;
            }
            if let Some(v) = q.max_subdivisions {
                s.max_subdivisions = v;
            }
            if q.omega_max_factor.is_some() {
                s.omega_max_factor = q.omega_max_factor;
            }
            s.validate().map_err(|e| self.err("quadrature", 0, None, e.to_string()))?;
            cfg.quadrature = s;
        }
        let mut labels = std::collections::HashSet::new();
        for (i, p) in raw.protocol.into_iter().enumerate() {
            let named = self.protocol(i, p, cfg.horizon)?;
            if !labels.insert(named.label.clone()) {
                return Err(self.err("protocol", i, Some("label"), format!("duplicate protocol label '{}'", named.label)));
            }
            cfg.protocols.push(named);
        }
        if let Some(a) = raw.asymptote {
            if a.dt.is_empty() || a.dt.iter().any(|&d| !(d > 0.0)) {
                return Err(self.err("asymptote", 0, Some("dt"), "dt must be a non-empty list of positive intervals"));
            }
            let n_max = a.n_max.unwrap_or(200);
            if n_max == 0 {
                return Err(self.err("asymptote", 0, Some("n_max"), "n_max must be positive"));
            }
            if let Some(e) = a.epsilon {
                if !(e > 0.0) {
                    return Err(self.err("asymptote", 0, Some("epsilon"), "epsilon must be positive"));
                }
            }
            cfg.asymptote = Some(AsymptoteTask {
                dts: a.dt,
                n_max,
                epsilon: a.epsilon,
            });
        }
        if let Some(s) = raw.sweep {
            if !(s.dt_lo > 0.0 && s.dt_hi >= s.dt_lo) {
                return Err(self.err("sweep", 0, Some("dt_lo"), "need 0 < dt_lo <= dt_hi"));
            }
            if s.steps == 0 {
                return Err(self.err("sweep", 0, Some("steps"), "steps must be positive"));
            }
            let spacing = match s.spacing.as_deref().unwrap_or("linear") {
                "linear" => SweepSpacing::Linear,
                "log" => SweepSpacing::Log,
                other => {
                    return Err(self.err("sweep", 0, Some("spacing"), format!("unknown spacing '{other}' (linear, log)")))
                }
            };
            let t1 = match s.t1 {
                Some(v) if !(v > 0.0) => return Err(self.err("sweep", 0, Some("t1"), "t1 must be positive")),
                Some(v) => v,
                None if bath_units == UnitsMode::Physical => ddcore::analysis::DEFAULT_T1,
                None => return Err(self.err("sweep", 0, None, "t1 is required in natural units")),
            };
            cfg.sweep = Some(SweepTask {
                dt_lo: s.dt_lo,
                dt_hi: s.dt_hi,
                steps: s.steps,
                spacing,
                t1,
            });
        }
        if let Some(b) = raw.bands {
            if !(b.dt > 0.0) {
                return Err(self.err("bands", 0, Some("dt"), "dt must be positive"));
            }
            if b.cycles == 0 {
                return Err(self.err("bands", 0, Some("cycles"), "cycles must be positive"));
            }
            let stride = b.stride.unwrap_or(1);
            if stride == 0 {
                return Err(self.err("bands", 0, Some("stride"), "stride must be positive"));
            }
            cfg.bands = Some(BandsTask {
                dt: b.dt,
                cycles: b.cycles,
                stride,
            });
        }
        if let Some(c) = raw.compare {
            let window = match (c.window_lo, c.window_hi) {
                (Some(lo), Some(hi)) if lo < hi => Some((lo, hi)),
                (None, None) => None,
                _ => return Err(self.err("compare", 0, None, "window_lo and window_hi must be given together with lo < hi")),
            };
            cfg.compare = Some(CompareTask { window });
        }
        Ok(cfg)
    }

    fn bath(&self, b: RawBath) -> Result<(BathSpec, UnitsMode), ConfigError> {
        let e = |key: &str, msg: String| self.err("bath", 0, Some(key), msg);
        let base = match &b.preset {
            Some(name) => Some(BathSpec::preset(name).ok_or_else(|| e("preset", format!("unknown preset '{name}'")))?),
            None => None,
        };
        let units = match (&b.units, &base) {
            (Some(u), _) => u.parse::<UnitsMode>().map_err(|m| e("units", m))?,
            (None, Some(p)) => p.units,
            (None, None) => UnitsMode::Natural,
        };
        let family = match (&b.family, &base) {
            (Some(f), _) => f.parse::<SpectralFamily>().map_err(|m| e("family", m))?,
            (None, Some(p)) => p.model.family,
            (None, None) => return Err(e("family", "bath needs a preset or a family".into())),
        };
        if b.omega_c.is_some() && b.cutoff_energy.is_some() {
            return Err(e("cutoff_energy", "give omega_c or cutoff_energy, not both".into()));
        }
        let cutoff = b
            .omega_c
            .or(b.cutoff_energy.map(|en| units.energy_to_frequency(en)))
            .or(base.as_ref().and_then(|p| p.model.cutoff));
        let model = if family == SpectralFamily::Tabulated {
            let table = b.table.ok_or_else(|| e("table", "tabulated family needs a table".into()))?;
            let samples: Vec<(f64, f64)> = table.iter().map(|r| (r[0], r[1])).collect();
            let m = SpectralModel::tabulated(&samples, cutoff).map_err(|x| e("table", x.to_string()))?;
            m.scaled(b.coupling.unwrap_or(1.0))
        } else {
            if b.table.is_some() {
                return Err(e("table", "table is only valid for the tabulated family".into()));
            }
            let coupling = b
                .coupling
                .or(base.as_ref().map(|p| p.model.coupling))
                .ok_or_else(|| e("F", "coupling F is required".into()))?;
            let cutoff = cutoff.ok_or_else(|| e("omega_c", "cutoff omega_c is required".into()))?;
            SpectralModel::parametric(family, coupling, cutoff).map_err(|x| e("F", x.to_string()))?
        };
        let temperature = match (b.temperature, &base) {
            (Some(t), _) => units.temperature_to_frequency(t),
            (None, Some(p)) => p.temperature,
            (None, None) => return Err(e("temperature", "temperature is required".into())),
        };
        let alpha = b.alpha.or(base.as_ref().map(|p| p.alpha)).unwrap_or(0.5);
        let bath = BathSpec::new(model, temperature, alpha, units).map_err(|x| e("temperature", x.to_string()))?;
        Ok((bath, units))
    }

    fn protocol(&self, i: usize, p: RawProtocol, default_horizon: f64) -> Result<NamedProtocol, ConfigError> {
        let need = |key: &str, v: Option<f64>| v.ok_or_else(|| self.err("protocol", i, None, format!("protocol '{}' needs {key}", p.kind)));
        let horizon = p.horizon.unwrap_or(default_horizon);
        let allowed: &[&str] = match p.kind.as_str() {
            "free" => &[],
            "explicit" => &["times"],
            "pdd" | "cdd-single" => &["dt"],
            "cpdd" => &["dt_cp"],
            "pcdd" => &["dt", "level"],
            "udd" => &["n"],
            "interp-abrupt" => &["dt_min"],
            "interp-smooth" => &["dt_min", "delta2"],
            other => {
                return Err(self.err(
                    "protocol",
                    i,
                    Some("kind"),
                    format!("unknown protocol kind '{other}' (free, explicit, pdd, cpdd, cdd-single, pcdd, udd, interp-abrupt, interp-smooth)"),
                ))
            }
        };
        let present = [
            ("dt", p.dt.is_some()),
            ("dt_cp", p.dt_cp.is_some()),
            ("level", p.level.is_some()),
            ("n", p.n.is_some()),
            ("dt_min", p.dt_min.is_some()),
            ("delta2", p.delta2.is_some()),
            ("times", p.times.is_some()),
        ];
        for (key, set) in present {
            if set && !allowed.contains(&key) {
                return Err(self.err("protocol", i, Some(key), format!("'{key}' does not apply to protocol '{}'", p.kind)));
            }
        }
        let entry = match p.kind.as_str() {
            "explicit" => {
                let times = p.times.clone().ok_or_else(|| self.err("protocol", i, None, "explicit protocol needs times"))?;
                PulseSequence::new(times.clone(), None, "explicit").map_err(|e| self.err("protocol", i, Some("times"), e.to_string()))?;
                if times.last().is_some_and(|&t| t >= horizon) {
                    return Err(self.err("protocol", i, Some("times"), "pulse times must lie before the horizon"));
                }
                ProtocolEntry::Explicit { times, horizon }
            }
            kind => {
                let k = match kind {
                    "free" => ProtocolKind::Free,
                    "pdd" => ProtocolKind::Pdd { dt: need("dt", p.dt)? },
                    "cdd-single" => ProtocolKind::CddSingle { dt: need("dt", p.dt)? },
                    "cpdd" => ProtocolKind::Cpdd { dt_cp: need("dt_cp", p.dt_cp)? },
                    "pcdd" => ProtocolKind::Pcdd {
                        dt: need("dt", p.dt)?,
                        level: p.level.ok_or_else(|| self.err("protocol", i, None, "protocol 'pcdd' needs level"))?,
                    },
                    "udd" => ProtocolKind::Udd {
                        n: p.n.ok_or_else(|| self.err("protocol", i, None, "protocol 'udd' needs n"))?,
                    },
                    "interp-abrupt" => ProtocolKind::InterpAbrupt {
                        dt_min: need("dt_min", p.dt_min)?,
                    },
                    _ => ProtocolKind::InterpSmooth {
                        dt_min: need("dt_min", p.dt_min)?,
                        delta2: need("delta2", p.delta2)?,
                    },
                };
                let spec = ProtocolSpec::new(k, horizon).map_err(|e| self.err("protocol", i, None, e.to_string()))?;
                ProtocolEntry::Family(spec)
            }
        };
        let label = p.label.unwrap_or_else(|| default_label(&entry));
        if label.is_empty() || label.contains(['/', '\\']) {
            return Err(self.err("protocol", i, Some("label"), "label must be a non-empty file-name-safe string"));
        }
        Ok(NamedProtocol { label, entry })
    }
}

/// Label such as `pdd-dt0.1`.
pub fn default_label(entry: &ProtocolEntry) -> String {
    match entry {
        ProtocolEntry::Explicit { times, .. } => format!("explicit-{}", times.len()),
        ProtocolEntry::Family(s) => match s.kind {
            ProtocolKind::Free => "free".into(),
            ProtocolKind::Pdd { dt } => format!("pdd-dt{dt}"),
            ProtocolKind::Cpdd { dt_cp } => format!("cpdd-dt{dt_cp}"),
            ProtocolKind::CddSingle { dt } => format!("cdd-single-dt{dt}"),
            ProtocolKind::Pcdd { dt, level } => format!("pcdd{level}-dt{dt}"),
            ProtocolKind::Udd { n } => format!("udd-n{n}"),
            ProtocolKind::InterpAbrupt { dt_min } => format!("interp-abrupt-dt{dt_min}"),
            ProtocolKind::InterpSmooth { dt_min, delta2 } => format!("interp-smooth-dt{dt_min}-d{delta2}"),
        },
    }
}
