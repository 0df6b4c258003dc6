//! `fringelab`: fringe scans, sweeps, sensitivity, fits, calibration and
//! overlap curves as CSV files with JSON sidecars.

mod commands;
mod output;
mod settings;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::settings::Settings;

#[derive(Parser)]
#[command(name = "fringelab", version, about = "Multi-photon interference fringes, contrast, sensitivity and fits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fringe P(φ) for one input and detection scheme.
    Scan {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: Model,
        #[command(flatten)]
        grid: Grid,
    },
    /// Contrast while one parameter is varied.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: Model,
        #[command(flatten)]
        range: Range,
    },
    /// Phase sensitivity S(φ), or S_max while one parameter is varied.
    Sensitivity {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: Model,
        #[command(flatten)]
        range: Range,
    },
    /// Fit the model to fringe data, singly or through the staged workflow.
    Fit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: Model,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Phase-plate angle to phase from a single-photon intensity scan.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// CSV with `theta` and `counts` (or `intensity`) columns.
        #[arg(long)]
        data: Option<String>,
        /// Fit a constant phase offset as well.
        #[arg(long)]
        offset: bool,
    },
    /// Wavepacket overlap and |1,1⟩ contrast against photon separation.
    Overlap {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        overlap: OverlapArgs,
    },
    /// Poisson-noise fringe data from given parameters.
    Synthesize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: Model,
        #[command(flatten)]
        grid: Grid,
        /// Expected counts at the fringe maximum.
        #[arg(long)]
        peak: Option<String>,
        #[arg(long)]
        seed: Option<String>,
    },
}

#[derive(Args)]
struct Common {
    /// Settings file (`key = value` lines, or a JSON sidecar from an earlier run).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV; the JSON sidecar is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Read input angles in degrees.
    #[arg(long)]
    deg: bool,
    /// Any setting as KEY=VALUE; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct Model {
    /// Input state: 10, 11, 20 or 22.
    #[arg(long)]
    input: Option<String>,
    /// Detection scheme, e.g. `1,1`, `3,1`, `=2,2` (exact) or `3,1+1,3`.
    #[arg(long)]
    scheme: Option<String>,
    /// Start from ideal parameters (the default).
    #[arg(long, conflicts_with = "fitted")]
    ideal: bool,
    /// Start from the published fitted parameters.
    #[arg(long)]
    fitted: bool,
    #[arg(long)]
    g2: Option<String>,
    /// Indistinguishability.
    #[arg(long)]
    indist: Option<String>,
    #[arg(long)]
    eta_c: Option<String>,
    #[arg(long)]
    eta_d: Option<String>,
    #[arg(long)]
    eta_e: Option<String>,
    #[arg(long)]
    eta_f: Option<String>,
}

#[derive(Args)]
struct Grid {
    #[arg(long, allow_hyphen_values = true)]
    phi_start: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    phi_end: Option<String>,
    #[arg(long)]
    points: Option<String>,
}

#[derive(Args)]
struct Range {
    /// Parameter to vary: indist, g2 or eta_c.
    #[arg(long)]
    var: Option<String>,
    #[arg(long)]
    from: Option<String>,
    #[arg(long)]
    to: Option<String>,
    #[arg(long)]
    steps: Option<String>,
}

#[derive(Args)]
struct FitArgs {
    /// Data CSV (`phi`, `value` or `counts`, optional `sigma`).
    #[arg(long)]
    data: Option<String>,
    /// Comma-separated free parameters, e.g. `indist,eta_e`.
    #[arg(long)]
    free: Option<String>,
    /// Run the staged workflow on `data.10`, `data.20`, `data.11`, `data.22`.
    #[arg(long)]
    staged: bool,
    #[arg(long = "data-10")]
    data_10: Option<String>,
    #[arg(long = "data-20")]
    data_20: Option<String>,
    #[arg(long = "data-11")]
    data_11: Option<String>,
    #[arg(long = "data-22")]
    data_22: Option<String>,
}

#[derive(Args)]
struct OverlapArgs {
    /// Radiative lifetime (ps unless suffixed `ns`).
    #[arg(long)]
    t1: Option<String>,
    /// Excitation pulse width.
    #[arg(long)]
    wp: Option<String>,
    #[arg(long)]
    tau_start: Option<String>,
    #[arg(long)]
    tau_end: Option<String>,
    #[arg(long)]
    points: Option<String>,
    #[arg(long)]
    g2: Option<String>,
    #[arg(long)]
    indist: Option<String>,
}

type Flags = BTreeMap<String, String>;

fn put(flags: &mut Flags, key: &str, value: &Option<String>) {
    if let Some(v) = value {
        flags.insert(key.to_string(), v.clone());
    }
}

fn put_bool(flags: &mut Flags, key: &str, on: bool) {
    if on {
        flags.insert(key.to_string(), "true".to_string());
    }
}

impl Common {
    fn add(&self, flags: &mut Flags) -> Result<()> {
        for kv in &self.set {
            let (k, v) = kv.split_once('=').with_context(|| format!("--set `{kv}`: expected KEY=VALUE"))?;
            flags.insert(k.trim().to_string(), v.trim().to_string());
        }
        put_bool(flags, "deg", self.deg);
        Ok(())
    }
}

impl Model {
    fn add(&self, flags: &mut Flags) {
        put(flags, "input", &self.input);
        put(flags, "scheme", &self.scheme);
        if self.ideal {
            flags.insert("base".into(), "ideal".into());
        }
        if self.fitted {
            flags.insert("base".into(), "fitted".into());
        }
        put(flags, "g2", &self.g2);
        put(flags, "indist", &self.indist);
        put(flags, "eta_c", &self.eta_c);
        put(flags, "eta_d", &self.eta_d);
        put(flags, "eta_e", &self.eta_e);
        put(flags, "eta_f", &self.eta_f);
    }
}

impl Grid {
    fn add(&self, flags: &mut Flags) {
        put(flags, "phi_start", &self.phi_start);
        put(flags, "phi_end", &self.phi_end);
        put(flags, "points", &self.points);
    }
}

impl Range {
    fn add(&self, flags: &mut Flags) {
        put(flags, "var", &self.var);
        put(flags, "from", &self.from);
        put(flags, "to", &self.to);
        put(flags, "steps", &self.steps);
    }
}

type Runner = fn(&Settings) -> Result<commands::Output>;

/// Collects the flags of a subcommand into settings keys.
fn dispatch(command: &Command) -> Result<(&'static str, &Common, Flags, Runner)> {
    let mut f = Flags::new();
    let (name, common, run): (&'static str, &Common, Runner) = match command {
        Command::Scan { common, model, grid } => {
            model.add(&mut f);
            grid.add(&mut f);
            ("scan", common, commands::scan)
        }
        Command::Sweep { common, model, range } => {
            model.add(&mut f);
            range.add(&mut f);
            ("sweep", common, commands::sweep)
        }
        Command::Sensitivity { common, model, range } => {
            model.add(&mut f);
            range.add(&mut f);
            ("sensitivity", common, commands::sensitivity)
        }
        Command::Fit { common, model, fit } => {
            model.add(&mut f);
            put(&mut f, "data", &fit.data);
            put(&mut f, "free", &fit.free);
            put_bool(&mut f, "staged", fit.staged);
            put(&mut f, "data.10", &fit.data_10);
            put(&mut f, "data.20", &fit.data_20);
            put(&mut f, "data.11", &fit.data_11);
            put(&mut f, "data.22", &fit.data_22);
            ("fit", common, commands::fit_cmd)
        }
        Command::Calibrate { common, data, offset } => {
            put(&mut f, "data", data);
            put_bool(&mut f, "offset", *offset);
            ("calibrate", common, commands::calibrate_cmd)
        }
        Command::Overlap { common, overlap: o } => {
            put(&mut f, "t1", &o.t1);
            put(&mut f, "wp", &o.wp);
            put(&mut f, "tau_start", &o.tau_start);
            put(&mut f, "tau_end", &o.tau_end);
            put(&mut f, "points", &o.points);
            put(&mut f, "g2", &o.g2);
            put(&mut f, "indist", &o.indist);
            ("overlap", common, commands::overlap)
        }
        Command::Synthesize { common, model, grid, peak, seed } => {
            model.add(&mut f);
            grid.add(&mut f);
            put(&mut f, "peak", peak);
            put(&mut f, "seed", seed);
            ("synthesize", common, commands::synthesize_cmd)
        }
    };
    // `--set` entries are applied last so they win over the named flags.
    common.add(&mut f)?;
    Ok((name, common, f, run))
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("FRINGELAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().with_context(|| format!("FRINGELAB_THREADS = `{v}`"))?;
    if n == 0 {
        bail!("FRINGELAB_THREADS must be at least 1");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    Ok(())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    init_threads()?;
    let (name, common, flags, runner) = dispatch(&cli.command)?;
    let settings = Settings::new(common.config.as_deref(), flags)?;
    let out = runner(&settings)?;
    settings.check_all_used()?;
    let csv = common.out.clone().unwrap_or_else(|| commands::default_out(name).to_path_buf());
    let sidecar = output::write(&csv, name, &out.table, settings.resolved(), out.results)?;
    eprintln!("wrote {} and {}", csv.display(), sidecar.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
