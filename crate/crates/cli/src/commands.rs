//! Subcommand implementations. Each returns the paths it wrote.

use std::path::{Path, PathBuf};

use serde::Serialize;

use ddcore::analysis::{band_split_trace, compare_protocols, mean_maxima, rate_threshold_interval, summarize_bands, t2_sweep};
use ddcore::decoherence::{trace_direct, uniform_grid, PulseSequence};
use ddcore::export::{columns_csv, full_precision, sequence_csv, write_trace, VERSION};
use ddcore::magnus::{verify_second_order, MagnusValue};
use ddcore::recursion::{delta_gamma_pdd_series, saturation_analysis, trace_exact, ExactRepresentation, Gamma0Cache};
use ddcore::sequences::{check_constraint, ProtocolKind, ProtocolSpec};

use crate::config::{Method, NamedProtocol, ProtocolEntry, RunConfig};
use crate::Failure;

/// Settings shared by all subcommands.
#[derive(Debug, Clone, PartialEq)]
pub struct Options {
    pub out: PathBuf,
    pub timestamp: bool,
    /// `Some(None)` enforces the configured or design interval.
    pub enforce_dtmin: Option<Option<f64>>,
}

type Outcome = Result<Vec<PathBuf>, Failure>;

fn write(path: PathBuf, contents: String, written: &mut Vec<PathBuf>) -> Result<(), Failure> {
    std::fs::write(&path, contents)?;
    written.push(path);
    Ok(())
}

fn write_json<T: Serialize>(path: PathBuf, value: &T, written: &mut Vec<PathBuf>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::from(ddcore::Error::from(e)))?;
    write(path, text + "\n", written)
}

fn prepare(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn constraint_interval(cfg: &RunConfig, explicit: Option<f64>, p: &NamedProtocol) -> Option<f64> {
    explicit.or(cfg.dt_min).or_else(|| p.design_interval())
}

/// Applies `--enforce-dtmin` to a generated sequence.
fn enforce(cfg: &RunConfig, opts: &Options, p: &NamedProtocol, seq: &PulseSequence) -> Result<(), Failure> {
    let Some(explicit) = opts.enforce_dtmin else {
        return Ok(());
    };
    let dt_min = constraint_interval(cfg, explicit, p)
        .ok_or_else(|| Failure::config(format!("no minimum interval known for protocol '{}'", p.label)))?;
    let report = check_constraint(seq, dt_min, p.horizon());
    if report.constraint_ok {
        Ok(())
    } else {
        Err(Failure::constraint(format!(
            "protocol '{}' has a gap of {} below the minimum interval {}",
            p.label, report.min_gap, dt_min
        )))
    }
}

fn shared_step(cfg: &RunConfig, protocols: &[NamedProtocol]) -> f64 {
    let finest = protocols
        .iter()
        .filter_map(NamedProtocol::design_interval)
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.min(d))));
    cfg.step_for(finest)
}

fn free_protocol(horizon: f64) -> Result<NamedProtocol, Failure> {
    Ok(NamedProtocol {
        label: "free".into(),
        entry: ProtocolEntry::Family(ProtocolSpec::new(ProtocolKind::Free, horizon)?),
    })
}

#[derive(Serialize)]
struct TraceSummary {
    label: String,
    pulses: usize,
    /// Dephasing left after the last pulse once the bath has relaxed.
    gamma_infinity: Option<f64>,
    final_gamma: f64,
    final_coherence: f64,
}

/// Coherence traces for every protocol, and the band split when requested.
pub fn cmd_trace(cfg: &RunConfig, opts: &Options) -> Outcome {
    prepare(&opts.out)?;
    let mut written = Vec::new();
    let protocols = if cfg.protocols.is_empty() && cfg.bands.is_none() {
        vec![free_protocol(cfg.horizon)?]
    } else {
        cfg.protocols.clone()
    };
    if !protocols.is_empty() {
        let step = shared_step(cfg, &protocols);
        let horizon = protocols.iter().map(NamedProtocol::horizon).fold(0.0, f64::max);
        let grid = uniform_grid(horizon, step)?;
        let cache = Gamma0Cache::new(cfg.bath.clone(), cfg.quadrature).with_lattice(step)?;
        let mut summary = Vec::with_capacity(protocols.len());
        for p in &protocols {
            let seq = p.generate()?;
            enforce(cfg, opts, p, &seq)?;
            let trace = match cfg.method {
                Method::Exact => trace_exact(&cache, &seq, &grid)?,
                Method::Direct => trace_direct(&cfg.bath, &seq, &grid, &cfg.quadrature)?,
            };
            write_trace(&opts.out, &p.label, &trace, &cfg.quadrature, opts.timestamp)?;
            written.push(opts.out.join(format!("{}.csv", p.label)));
            written.push(opts.out.join(format!("{}.json", p.label)));
            let gamma_infinity = if cfg.bath.model.is_ohmic() {
                None
            } else {
                let rep = ExactRepresentation::new(&cache, seq.times())?;
                rep.gamma_infinity(&cache, seq.len()).ok()
            };
            summary.push(TraceSummary {
                label: p.label.clone(),
                pulses: seq.len(),
                gamma_infinity,
                final_gamma: *trace.gamma.last().unwrap_or(&0.0),
                final_coherence: *trace.coherence.last().unwrap_or(&1.0),
            });
        }
        write_json(opts.out.join("summary.json"), &summary, &mut written)?;
    }
    if let Some(b) = &cfg.bands {
        let mut cycles: Vec<u64> = (b.stride..=b.cycles).step_by(b.stride as usize).collect();
        if cycles.last() != Some(&b.cycles) {
            cycles.push(b.cycles);
        }
        let split = band_split_trace(&cfg.bath, b.dt, &cycles, &cfg.quadrature)?;
        let rows: Vec<Vec<f64>> = (0..cycles.len())
            .map(|i| {
                vec![
                    split.times[i],
                    (-split.full[i]).exp(),
                    (-split.small_omega[i]).exp(),
                    (-split.resonant[i]).exp(),
                ]
            })
            .collect();
        write(
            opts.out.join("bands.csv"),
            columns_csv(&["t", "full", "small_omega", "resonant"], &rows),
            &mut written,
        )?;
        let gamma_rows: Vec<Vec<f64>> = (0..cycles.len())
            .map(|i| vec![split.times[i], split.full[i], split.small_omega[i], split.resonant[i]])
            .collect();
        write(
            opts.out.join("bands_gamma.csv"),
            columns_csv(&["t", "full", "small_omega", "resonant"], &gamma_rows),
            &mut written,
        )?;
        let summary = summarize_bands(&cfg.bath, &split)?;
        write_json(opts.out.join("bands.json"), &summary, &mut written)?;
    }
    Ok(written)
}

/// Pulse times and a spacing report for every protocol.
pub fn cmd_sequence(cfg: &RunConfig, opts: &Options) -> Outcome {
    if cfg.protocols.is_empty() {
        return Err(Failure::config("no protocol given"));
    }
    prepare(&opts.out)?;
    let mut written = Vec::new();
    let mut violation = None;
    for p in &cfg.protocols {
        let seq = p.generate()?;
        let explicit = opts.enforce_dtmin.flatten();
        let dt_min = constraint_interval(cfg, explicit, p).unwrap_or(0.0);
        let report = check_constraint(&seq, dt_min, p.horizon());
        write(opts.out.join(format!("{}_sequence.csv", p.label)), sequence_csv(&seq), &mut written)?;
        write_json(opts.out.join(format!("{}_report.json", p.label)), &report, &mut written)?;
        if violation.is_none() {
            if let Err(f) = enforce(cfg, opts, p, &seq) {
                violation = Some(f);
            }
        }
    }
    match violation {
        Some(f) => Err(f),
        None => Ok(written),
    }
}

#[derive(Serialize)]
struct AsymptoteRecord {
    dt: f64,
    omega_res: f64,
    delta_gamma_inf: f64,
    n_sat: usize,
    t_sat: f64,
    t_av: Option<f64>,
    validity_flag: bool,
}

/// Differential dephasing series and saturation data for PDD intervals.
pub fn cmd_asymptote(cfg: &RunConfig, opts: &Options) -> Outcome {
    let task = cfg.asymptote.as_ref().ok_or_else(|| Failure::config("missing [asymptote] section"))?;
    prepare(&opts.out)?;
    let mut written = Vec::new();
    let mut records = Vec::with_capacity(task.dts.len());
    for &dt in &task.dts {
        let cache = Gamma0Cache::new(cfg.bath.clone(), cfg.quadrature).with_lattice(dt)?;
        let report = saturation_analysis(&cache, dt, task.epsilon)?;
        let series = delta_gamma_pdd_series(&cache, dt, task.n_max)?;
        let rows: Vec<Vec<f64>> = series
            .iter()
            .enumerate()
            .map(|(i, &v)| vec![(i + 1) as f64, v, report.delta_gamma_inf])
            .collect();
        write(
            opts.out.join(format!("delta_gamma_dt{dt}.csv")),
            columns_csv(&["n", "delta_gamma", "delta_gamma_inf"], &rows),
            &mut written,
        )?;
        records.push(AsymptoteRecord {
            dt,
            omega_res: report.omega_res,
            delta_gamma_inf: report.delta_gamma_inf,
            n_sat: report.n_sat,
            t_sat: report.t_sat,
            t_av: report.t_av,
            validity_flag: report.validity,
        });
    }
    write_json(opts.out.join("asymptote.json"), &records, &mut written)?;
    Ok(written)
}

#[derive(Serialize)]
struct SweepSummary {
    target_rate: f64,
    /// Interval at which the rate equals the target, when bracketed.
    crossing_dt: Option<f64>,
}

/// Effective decay rate against the PDD interval.
pub fn cmd_sweep(cfg: &RunConfig, opts: &Options) -> Outcome {
    let task = cfg.sweep.as_ref().ok_or_else(|| Failure::config("missing [sweep] section"))?;
    prepare(&opts.out)?;
    let mut written = Vec::new();
    let points = task.points();
    let results = t2_sweep(&cfg.bath, &points)?;
    let mut csv = String::from("dt,rate,t2\n");
    for r in &results {
        csv.push_str(&format!("{},{},{}\n", full_precision(r.dt), full_precision(r.rate), full_precision(r.t2)));
    }
    write(opts.out.join("sweep.csv"), csv, &mut written)?;
    let target = 1.0 / task.t1;
    let crossing_dt = results
        .windows(2)
        .find(|w| (w[0].rate - target) * (w[1].rate - target) <= 0.0 && w[0].dt < w[1].dt)
        .map(|w| rate_threshold_interval(&cfg.bath, target, w[0].dt, w[1].dt))
        .transpose()?;
    write_json(
        opts.out.join("threshold.json"),
        &SweepSummary {
            target_rate: target,
            crossing_dt,
        },
        &mut written,
    )?;
    Ok(written)
}

#[derive(Serialize)]
struct ComparisonRecord {
    label: String,
    protocol: ProtocolSpec,
    pulses: usize,
    mean_maxima: Option<f64>,
    oscillation_amplitude: Option<f64>,
    t2_eff: Option<f64>,
}

#[derive(Serialize)]
struct ComparisonSummary {
    window: (f64, f64),
    version: &'static str,
    entries: Vec<ComparisonRecord>,
}

/// Side-by-side traces on a shared grid with summary figures of merit.
pub fn cmd_compare(cfg: &RunConfig, opts: &Options) -> Outcome {
    if cfg.protocols.is_empty() {
        return Err(Failure::config("compare needs at least one protocol"));
    }
    let mut specs = Vec::with_capacity(cfg.protocols.len());
    for p in &cfg.protocols {
        match &p.entry {
            ProtocolEntry::Family(s) => specs.push(s.clone()),
            ProtocolEntry::Explicit { .. } => {
                return Err(Failure::config(format!("compare does not accept explicit protocol '{}'", p.label)))
            }
        }
        enforce(cfg, opts, p, &p.generate()?)?;
    }
    prepare(&opts.out)?;
    let mut written = Vec::new();
    let step = shared_step(cfg, &cfg.protocols);
    let horizon = specs.iter().map(|s| s.horizon).fold(0.0, f64::max);
    let grid = uniform_grid(horizon, step)?;
    let cache = Gamma0Cache::new(cfg.bath.clone(), cfg.quadrature).with_lattice(step)?;
    let comparison = compare_protocols(&cache, &specs, &grid)?;
    let window = cfg.compare.as_ref().and_then(|c| c.window).unwrap_or((0.0, horizon));
    let mut entries = Vec::with_capacity(specs.len());
    for (p, e) in cfg.protocols.iter().zip(&comparison.entries) {
        let mut trace = e.trace.clone();
        trace.sequence = trace.sequence.clone().with_label(p.label.clone());
        write_trace(&opts.out, &p.label, &trace, &cfg.quadrature, opts.timestamp)?;
        written.push(opts.out.join(format!("{}.csv", p.label)));
        written.push(opts.out.join(format!("{}.json", p.label)));
        entries.push(ComparisonRecord {
            label: p.label.clone(),
            protocol: e.protocol.clone(),
            pulses: e.trace.sequence.len(),
            mean_maxima: mean_maxima(&e.maxima, window.0, window.1),
            oscillation_amplitude: e.oscillation_amplitude,
            t2_eff: e.t2_eff.filter(|v| v.is_finite()),
        });
    }
    write_json(
        opts.out.join("summary.json"),
        &ComparisonSummary {
            window,
            version: VERSION,
            entries,
        },
        &mut written,
    )?;
    Ok(written)
}

#[derive(Debug, Serialize)]
pub struct MagnusRecord {
    pub label: String,
    pub total: f64,
    pub a1: MagnusValue,
    pub a2: MagnusValue,
    pub cancels: bool,
    pub exact: bool,
}

/// First two Magnus coefficients over each protocol's horizon.
pub fn magnus_records(cfg: &RunConfig, opts: &Options) -> Result<Vec<MagnusRecord>, Failure> {
    if cfg.protocols.is_empty() {
        return Err(Failure::config("no protocol given"));
    }
    let mut out = Vec::with_capacity(cfg.protocols.len());
    for p in &cfg.protocols {
        let seq = p.generate()?;
        enforce(cfg, opts, p, &seq)?;
        let check = verify_second_order(&seq, p.horizon())?;
        out.push(MagnusRecord {
            label: p.label.clone(),
            total: p.horizon(),
            a1: check.a1,
            a2: check.a2,
            cancels: check.cancels,
            exact: check.exact,
        });
    }
    Ok(out)
}

/// Writes `magnus.json` and returns the records for printing.
pub fn cmd_magnus(cfg: &RunConfig, opts: &Options) -> Result<(Vec<PathBuf>, Vec<MagnusRecord>), Failure> {
    let records = magnus_records(cfg, opts)?;
    prepare(&opts.out)?;
    let mut written = Vec::new();
    write_json(opts.out.join("magnus.json"), &records, &mut written)?;
    Ok((written, records))
}
