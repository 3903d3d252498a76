//! `loadtrack` command-line front end.

// Validation uses negated comparisons on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use loadtrack_core::profile::{format_significant, DAY_CSV, SUMMARY_FILE};
use loadtrack_core::{
    normalize_peak, on_step_response, parse_csv_with, resample, write_day_record, zoh_discretize,
    CsvColumns, FirstEpoch, LoadSwitchState, NumberFormat, ScheduleSpace, Scheduler, Semantics,
    SummaryMeta, SwitchLimits,
};

use config::{ConfigError, ConfigSource, CriterionName, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "loadtrack",
    version,
    about = "Receding-horizon on/off scheduling of loads against a power profile"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a full day and write day.csv and summary.toml.
    Simulate(SimulateArgs),
    /// Count admissible schedules over one horizon.
    Count(CountArgs),
    /// Print discretized load models and their step responses.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML run configuration; built-in defaults apply without it.
    #[arg(short, long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set loads.2.size=0.3` (1-based load index).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, ConfigError> {
        ConfigSource {
            file: self.config.clone(),
            overrides: self.overrides.clone(),
        }
        .load()
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Profile CSV; shadows `profile.path`.
    #[arg(short, long, value_name = "FILE")]
    pub profile: Option<PathBuf>,
    /// Output directory; shadows `output_dir`.
    #[arg(short, long, value_name = "DIR")]
    pub output: Option<PathBuf>,
    /// Shadows `criterion`.
    #[arg(long, value_parser = ["least_squares", "barrier"])]
    pub criterion: Option<String>,
    /// Worker threads for candidate evaluation; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Suppress hourly progress on standard error.
    #[arg(short, long)]
    pub quiet: bool,
    /// Write shortest round-trip decimals instead of 9 significant digits.
    #[arg(long)]
    pub full_precision: bool,
}

#[derive(Debug, Args)]
pub struct CountArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Horizon length in epochs; defaults to horizon_s / decision_period_s.
    #[arg(long)]
    pub horizon_epochs: Option<u32>,
    /// Initial on/off state as a bit string, load 1 first, e.g. `100`.
    #[arg(long, value_name = "BITS")]
    pub initial: Option<String>,
    /// Epochs each load has already spent in its initial state; unlimited by default.
    #[arg(long, value_name = "EPOCHS")]
    pub initial_dwell: Option<u32>,
    /// Fix the first horizon column to the initial state.
    #[arg(long)]
    pub pinned: bool,
    /// Report every combination of semantics flags and first-epoch modes.
    #[arg(long)]
    pub all_flags: bool,
    /// Number of loads; with both minimum overrides any count is allowed,
    /// otherwise the first N configured loads are used.
    #[arg(long)]
    pub loads: Option<usize>,
    /// Minimum on time of every load in epochs.
    #[arg(long)]
    pub min_on_epochs: Option<u32>,
    /// Minimum off time of every load in epochs.
    #[arg(long)]
    pub min_off_epochs: Option<u32>,
    /// Epochs left before the end of the day; later turn-ons must fit.
    #[arg(long)]
    pub epochs_to_day_end: Option<u32>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
}

/// Failure classes and their exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration or arguments (exit 2).
    Config(String),
    /// Unreadable or invalid input data, or unwritable output (exit 3).
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let stdout = std::io::stdout();
    match run(&cli.command, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("loadtrack: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(command: &Command, out: &mut impl Write) -> Result<(), CliError> {
    match command {
        Command::Simulate(args) => simulate(args, out),
        Command::Count(args) => count(args, out),
        Command::Inspect(args) => inspect(args, out),
    }
}

fn write_err(e: std::io::Error) -> CliError {
    CliError::Data(format!("cannot write to standard output: {e}"))
}

pub fn simulate(args: &SimulateArgs, out: &mut impl Write) -> Result<(), CliError> {
    let mut cfg = args.config.load()?;
    if let Some(p) = &args.profile {
        cfg.profile.path = Some(p.clone());
    }
    if let Some(o) = &args.output {
        cfg.output_dir = o.clone();
    }
    if let Some(c) = &args.criterion {
        cfg.criterion = if c == "least_squares" {
            CriterionName::LeastSquares
        } else {
            CriterionName::Barrier
        };
    }
    let resolved = cfg.resolve()?;
    let Some(profile_path) = cfg.profile.path.clone() else {
        return Err(CliError::Config(
            "profile.path is not set (use --profile)".into(),
        ));
    };
    let scheduler = Scheduler::new(resolved.bank.clone(), resolved.tracking)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let pool = match args.threads {
        Some(0) => return Err(CliError::Config("--threads must be at least 1".into())),
        Some(n) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(format!("--threads: {e}")))?,
        ),
        None => None,
    };

    let data =
        |e: loadtrack_core::Error| CliError::Data(format!("{}: {e}", profile_path.display()));
    let bytes = std::fs::read(&profile_path)
        .map_err(|e| CliError::Data(format!("{}: {e}", profile_path.display())))?;
    let columns = CsvColumns {
        time: cfg.profile.time_column.clone(),
        value: cfg.profile.value_column.clone(),
    };
    let parsed = parse_csv_with(&bytes, &columns).map_err(data)?;
    if !parsed.dropped.is_empty() && !args.quiet {
        eprintln!(
            "{}: dropped {} rows",
            profile_path.display(),
            parsed.dropped.len()
        );
        for d in &parsed.dropped {
            eprintln!("  line {}: {}", d.line, d.reason);
        }
    }
    let series = if cfg.profile.normalize {
        normalize_peak(&parsed.series).map_err(data)?
    } else {
        parsed.series
    };
    let profile = resample(&series, cfg.dt_s, cfg.day_length_s).map_err(data)?;

    let quiet = args.quiet;
    let run = || {
        scheduler.run_with_progress(&profile, |hour| {
            if !quiet {
                eprintln!("simulated hour {hour}");
            }
        })
    };
    let record = match &pool {
        Some(pool) => pool.install(run),
        None => run(),
    }
    .map_err(data)?;

    let meta = SummaryMeta {
        config: cfg.flatten(),
        criterion: Some(resolved.tracking.criterion),
        semantics: resolved.tracking.semantics,
        number_format: if args.full_precision {
            NumberFormat::RoundTrip
        } else {
            NumberFormat::Significant9
        },
    };
    write_day_record(&record, &cfg.output_dir, &meta).map_err(|e| CliError::Data(e.to_string()))?;

    let m = &record.metrics;
    let dir = cfg.output_dir.display();
    writeln!(out, "wrote {dir}/{DAY_CSV} and {dir}/{SUMMARY_FILE}").map_err(write_err)?;
    let rows = [
        ("samples", record.samples().to_string()),
        ("rmse", format_significant(m.rmse, 9)),
        ("load_energy", format_significant(m.load_energy, 9)),
        ("supply_energy", format_significant(m.supply_energy, 9)),
        ("utilization", format_significant(m.utilization, 9)),
        (
            "negative_error_samples",
            m.negative_error_samples.to_string(),
        ),
        (
            "negative_error_samples_outside_fallback",
            m.negative_error_samples_outside_fallback.to_string(),
        ),
        ("fallback_epochs", m.fallback_epochs.to_string()),
        ("switch_counts", format!("{:?}", m.switch_counts)),
    ];
    for (k, v) in rows {
        writeln!(out, "{k:<40} {v}").map_err(write_err)?;
    }
    Ok(())
}

/// An instance with a count quoted in the literature.
struct Reference {
    loads: usize,
    horizon: usize,
    initial_all_off: bool,
    limits: &'static [(u32, u32)],
    unconstrained: bool,
    count: u128,
    note: &'static str,
}

const REFERENCES: [Reference; 3] = [
    Reference {
        loads: 3,
        horizon: 6,
        initial_all_off: false,
        limits: &[],
        unconstrained: true,
        count: 32768,
        note: "unconstrained (2^n)^(H-1) with the first column fixed",
    },
    Reference {
        loads: 3,
        horizon: 6,
        initial_all_off: true,
        limits: &[(4, 4), (4, 4), (4, 4)],
        unconstrained: false,
        count: 2197,
        note: "three loads, minimum dwell 4, all off initially",
    },
    Reference {
        loads: 2,
        horizon: 6,
        initial_all_off: true,
        limits: &[(7, 7), (5, 5)],
        unconstrained: false,
        count: 36,
        note: "two loads, minimum dwells 7 and 5, all off initially (tree example)",
    },
];

fn reference_for(
    initial: &[LoadSwitchState],
    limits: &[SwitchLimits],
    horizon: usize,
) -> Option<&'static Reference> {
    let all_off = initial.iter().all(|s| !s.on);
    REFERENCES.iter().find(|r| {
        r.loads == limits.len()
            && r.horizon == horizon
            && (!r.initial_all_off || all_off)
            && if r.unconstrained {
                limits
                    .iter()
                    .all(|l| l.min_on_epochs <= 1 && l.min_off_epochs <= 1)
            } else {
                limits
                    .iter()
                    .zip(r.limits)
                    .all(|(l, &(on, off))| l.min_on_epochs == on && l.min_off_epochs == off)
            }
    })
}

pub fn count(args: &CountArgs, out: &mut impl Write) -> Result<(), CliError> {
    let cfg = args.config.load()?;
    let grid = cfg.grid()?;
    let horizon = args.horizon_epochs.unwrap_or(grid.horizon_epochs()) as usize;

    let mut limits = match (args.min_on_epochs, args.min_off_epochs) {
        (Some(on), Some(off)) => {
            vec![SwitchLimits::new(on, off); args.loads.unwrap_or(cfg.loads.len())]
        }
        (on, off) => {
            let resolved = cfg.resolve()?;
            SwitchLimits::from_bank(&resolved.bank, &grid)
                .map_err(|e| CliError::Config(e.to_string()))?
                .into_iter()
                .map(|l| {
                    SwitchLimits::new(
                        on.unwrap_or(l.min_on_epochs),
                        off.unwrap_or(l.min_off_epochs),
                    )
                })
                .collect()
        }
    };
    if let Some(n) = args.loads {
        if n == 0 || n > limits.len() {
            return Err(CliError::Config(format!(
                "--loads {n}: only {} loads are configured; give --min-on-epochs and --min-off-epochs to count more",
                limits.len()
            )));
        }
        limits.truncate(n);
    }

    let dwell = args
        .initial_dwell
        .unwrap_or(loadtrack_core::switching::SATURATED_DWELL);
    let initial: Vec<LoadSwitchState> = match &args.initial {
        Some(bits) => {
            if bits.len() != limits.len() || !bits.chars().all(|c| c == '0' || c == '1') {
                return Err(CliError::Config(format!(
                    "--initial {bits:?} must be {} characters of 0 or 1",
                    limits.len()
                )));
            }
            bits.chars()
                .map(|c| LoadSwitchState::new(c == '1', dwell))
                .collect()
        }
        None => vec![LoadSwitchState::new(false, dwell); limits.len()],
    };

    let base = ScheduleSpace::new(initial.clone(), limits.clone(), horizon)
        .map_err(|e| CliError::Config(e.to_string()))?
        .with_day_end(args.epochs_to_day_end);
    let (semantics, modes): (Vec<Semantics>, Vec<FirstEpoch>) = if args.all_flags {
        (
            Semantics::all().to_vec(),
            vec![FirstEpoch::Free, FirstEpoch::Pinned],
        )
    } else {
        let mode = if args.pinned {
            FirstEpoch::Pinned
        } else {
            FirstEpoch::Free
        };
        (vec![cfg.semantics()], vec![mode])
    };
    let reference = reference_for(&initial, &limits, horizon);

    let bits: String = initial
        .iter()
        .map(|s| if s.on { '1' } else { '0' })
        .collect();
    let list = |f: fn(&SwitchLimits) -> u32| {
        limits
            .iter()
            .map(f)
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    let w = |e| write_err(e);
    writeln!(
        out,
        "instance: loads={} horizon_epochs={horizon} initial={bits} initial_dwell={} min_on_epochs=[{}] min_off_epochs=[{}] epochs_to_day_end={}",
        limits.len(),
        args.initial_dwell.map_or("unlimited".into(), |d| d.to_string()),
        list(|l| l.min_on_epochs),
        list(|l| l.min_off_epochs),
        args.epochs_to_day_end.map_or("none".into(), |d| d.to_string()),
    )
    .map_err(w)?;
    for mode in &modes {
        for sem in &semantics {
            let space = base.clone().with_semantics(*sem).with_first_epoch(*mode);
            let tree = space
                .count_tree()
                .map_err(|e| CliError::Config(e.to_string()))?;
            let mark = match reference {
                Some(r) if r.count == tree.leaves => "  (matches reference)",
                _ => "",
            };
            writeln!(
                out,
                "truncate_final_run={:<6} dwell_count={:<7} first_epoch={:<6} schedules={} tree_nodes={}{mark}",
                sem.truncate_final_run.as_str(),
                sem.dwell_count.as_str(),
                match mode {
                    FirstEpoch::Free => "free",
                    FirstEpoch::Pinned => "pinned",
                },
                tree.leaves,
                tree.nodes,
            )
            .map_err(w)?;
        }
    }
    if let Some(r) = reference {
        writeln!(out, "reference: published count {} for {}", r.count, r.note).map_err(w)?;
    }
    Ok(())
}

pub fn inspect(args: &InspectArgs, out: &mut impl Write) -> Result<(), CliError> {
    let cfg = args.config.load()?;
    let resolved = cfg.resolve()?;
    let grid = resolved.tracking.grid;
    let limits = SwitchLimits::from_bank(&resolved.bank, &grid)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let dt = resolved.bank.dt();
    let w = |e| write_err(e);
    let g = |v: f64| format_significant(v, 10);
    writeln!(
        out,
        "dt_s={dt} decision_samples={} horizon_epochs={}",
        grid.decision_samples(),
        grid.horizon_epochs()
    )
    .map_err(w)?;
    for (load, lim) in resolved.bank.loads().iter().zip(&limits) {
        writeln!(
            out,
            "load {}: size={} off_level={} min_on={} samples ({} epochs) min_off={} samples ({} epochs)",
            load.index,
            g(load.size),
            g(load.off_level),
            load.min_on,
            lim.min_on_epochs,
            load.min_off,
            lim.min_off_epochs
        )
        .map_err(w)?;
        for (mode, dynamics) in [("on", &load.on_dynamics), ("off", &load.off_dynamics)] {
            let d = zoh_discretize(dynamics, dt).map_err(|e| CliError::Config(e.to_string()))?;
            let poles: Vec<String> = dynamics.poles().iter().map(|p| p.to_string()).collect();
            let a = d.update_matrix();
            let b = d.input_vector();
            let coeffs = if d.order() == 1 {
                format!("a={} b={}", g(a[0][0]), g(b[0]))
            } else {
                format!(
                    "A=[[{}, {}], [{}, {}]] B=[{}, {}]",
                    g(a[0][0]),
                    g(a[0][1]),
                    g(a[1][0]),
                    g(a[1][1]),
                    g(b[0]),
                    g(b[1])
                )
            };
            writeln!(
                out,
                "  {mode:<3} poles=[{}] order={} {coeffs} dc_gain={:.9}",
                poles.join(", "),
                d.order(),
                d.dc_gain()
            )
            .map_err(w)?;
        }
        let horizon = (20.0 * load.on_dynamics.time_constant() / dt).ceil() as usize + 1;
        let step =
            on_step_response(load, dt, horizon).map_err(|e| CliError::Config(e.to_string()))?;
        writeln!(
            out,
            "  step: peak={} at sample {} overshoot_pct={:.3} settling_samples={}",
            g(step.peak),
            step.peak_sample,
            step.overshoot_pct,
            step.settling_samples
                .map_or("not settled".into(), |s| s.to_string())
        )
        .map_err(w)?;
    }
    Ok(())
}
