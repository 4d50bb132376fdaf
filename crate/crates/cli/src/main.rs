use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ddcore::sequences::{ProtocolKind, ProtocolSpec};
use ddsim::commands::{self, Options};
use ddsim::config::{default_label, NamedProtocol, ProtocolEntry};
use ddsim::{exit, Failure, RunConfig};

/// Pure-dephasing qubit simulator under bang-bang pulse sequences.
#[derive(Parser, Debug)]
#[command(name = "ddsim", version, about)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Relative quadrature tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Omit the timestamp from metadata so repeated runs are byte-identical.
    #[arg(long, global = true)]
    no_timestamp: bool,
    /// Fail with exit code 4 if a sequence violates the minimum interval.
    /// Without a value the configured or design interval is used.
    #[arg(long, global = true, num_args = 0..=1, value_name = "DT")]
    enforce_dtmin: Option<Option<f64>>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Coherence traces for the configured protocols.
    Trace,
    /// Pulse times and spacing report.
    Sequence(ProtocolArgs),
    /// Differential dephasing and saturation for PDD.
    Asymptote,
    /// Effective decay rate against the pulse interval.
    Sweep,
    /// Protocol comparison on a shared grid.
    Compare,
    /// First- and second-order Magnus coefficients.
    Magnus(ProtocolArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Free,
    Pdd,
    Cpdd,
    CddSingle,
    Pcdd,
    Udd,
    InterpAbrupt,
    InterpSmooth,
}

/// A protocol given on the command line instead of the configuration.
#[derive(Args, Debug)]
struct ProtocolArgs {
    #[arg(long, value_enum)]
    protocol: Option<Kind>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    dt_cp: Option<f64>,
    #[arg(long)]
    level: Option<u32>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    dt_min: Option<f64>,
    #[arg(long)]
    delta2: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Comma-separated explicit pulse times.
    #[arg(long, value_delimiter = ',', conflicts_with = "protocol")]
    times: Option<Vec<f64>>,
}

impl ProtocolArgs {
    fn to_protocol(&self, default_horizon: f64) -> Result<Option<NamedProtocol>, Failure> {
        let horizon = self.horizon.unwrap_or(default_horizon);
        let need = |name: &str, v: Option<f64>| v.ok_or_else(|| Failure::config(format!("--{name} is required")));
        if let Some(times) = &self.times {
            let entry = ProtocolEntry::Explicit {
                times: times.clone(),
                horizon,
            };
            return Ok(Some(NamedProtocol {
                label: default_label(&entry),
                entry,
            }));
        }
        let Some(kind) = self.protocol else {
            return Ok(None);
        };
        let k = match kind {
            Kind::Free => ProtocolKind::Free,
            Kind::Pdd => ProtocolKind::Pdd { dt: need("dt", self.dt)? },
            Kind::Cpdd => ProtocolKind::Cpdd {
                dt_cp: need("dt-cp", self.dt_cp)?,
            },
            Kind::CddSingle => ProtocolKind::CddSingle { dt: need("dt", self.dt)? },
            Kind::Pcdd => ProtocolKind::Pcdd {
                dt: need("dt", self.dt)?,
                level: self.level.ok_or_else(|| Failure::config("--level is required"))?,
            },
            Kind::Udd => ProtocolKind::Udd {
                n: self.n.ok_or_else(|| Failure::config("--n is required"))?,
            },
            Kind::InterpAbrupt => ProtocolKind::InterpAbrupt {
                dt_min: need("dt-min", self.dt_min)?,
            },
            Kind::InterpSmooth => ProtocolKind::InterpSmooth {
                dt_min: need("dt-min", self.dt_min)?,
                delta2: need("delta2", self.delta2)?,
            },
        };
        let entry = ProtocolEntry::Family(ProtocolSpec::new(k, horizon)?);
        Ok(Some(NamedProtocol {
            label: default_label(&entry),
            entry,
        }))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::config(format!("cannot configure {n} threads: {e}")))?;
    }
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::default(),
    };
    if let Some(tol) = cli.tol {
        cfg.quadrature = cfg.quadrature.with_rel_tol(tol);
        cfg.quadrature.validate()?;
    }
    if let Command::Sequence(args) | Command::Magnus(args) = &cli.command {
        if let Some(p) = args.to_protocol(cfg.horizon)? {
            cfg.protocols = vec![p];
        }
    }
    let opts = Options {
        out: cli.out.clone().or(cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out")),
        timestamp: !cli.no_timestamp,
        enforce_dtmin: cli.enforce_dtmin,
    };
    match cli.command {
        Command::Trace => commands::cmd_trace(&cfg, &opts).map(|_| ()),
        Command::Sequence(_) => commands::cmd_sequence(&cfg, &opts).map(|_| ()),
        Command::Asymptote => commands::cmd_asymptote(&cfg, &opts).map(|_| ()),
        Command::Sweep => commands::cmd_sweep(&cfg, &opts).map(|_| ()),
        Command::Compare => commands::cmd_compare(&cfg, &opts).map(|_| ()),
        Command::Magnus(_) => {
            let (_, records) = commands::cmd_magnus(&cfg, &opts)?;
            let text = serde_json::to_string_pretty(&records).map_err(|e| Failure::from(ddcore::Error::from(e)))?;
            println!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let f = Failure::config(e.to_string().trim().to_string());
            eprintln!("{}", f.to_json());
            return ExitCode::from(exit::CONFIG as u8);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.exit_code as u8)
        }
    }
}
