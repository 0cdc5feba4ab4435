//! Command-line front end: `optimize`, `sweep-power`, `heatmap` and `selftest`.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numerical or
//! I/O failure.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::{load_config, ScenarioConfig};
use crate::error::{Error, Result};
use crate::evaluation::{
    configure, format_sig9, gain_map, gain_map_csv, power_sweep, rate_map_csv, rate_maps,
    spatial_secrecy_mc, sweep_csv, SchemeKind,
};
use crate::optimizer::{objective_rate, AoTrace};
use crate::spatial::{correlation_key, write_correlation_csv};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_FAILURE: i32 = 3;

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "RIS_SECRECY_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ris-secrecy", version, about = "RIS-assisted spatial secrecy optimizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Scenario configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Overrides monte_carlo.base_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides monte_carlo.n_trials.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Single optimization on one BS-RIS draw; writes v, φ and the trace.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "proposed")]
        scheme: String,
        /// Also write the two correlation matrices.
        #[arg(long)]
        dump_j: bool,
    },
    /// Maximum RX/Eve rates versus transmit power.
    SweepPower {
        #[command(flatten)]
        common: Common,
        /// Restrict to one scheme instead of the configured list.
        #[arg(long)]
        scheme: Option<String>,
    },
    /// Per-cell rate maps of one scheme, or gain maps against a baseline.
    Heatmap {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "proposed")]
        scheme: String,
        /// With a baseline, gain maps (percent) are written as well.
        #[arg(long)]
        baseline: Option<String>,
    },
    /// Small-scale oracle checks.
    Selftest,
}

/// Serializable description of a finished (or failed) run.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub config: Option<ScenarioConfig>,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
    pub convergence: Vec<ConvergenceSummary>,
    pub notes: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct ConvergenceSummary {
    pub label: String,
    pub runs: usize,
    pub unconverged: usize,
    pub mean_outer_iterations: f64,
    pub final_objective_bpshz: Option<f64>,
}

/// Files written so far; listed on failure as a partial-output manifest.
#[derive(Debug, Default)]
struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.written.push(path.clone());
        Ok(path)
    }

    fn manifest(&self) -> Vec<String> {
        self.written.iter().map(|p| p.display().to_string()).collect()
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::Domain(_) => EXIT_CONFIG,
        Error::Dimension(_) | Error::Numerical(_) | Error::Io { .. } => EXIT_FAILURE,
    }
}

fn init_threads() {
    if let Some(n) = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        // a pool may already exist when called repeatedly from tests
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Parse `argv` (program name first), run the command and return the exit code.
pub fn run_command<S: AsRef<str>>(argv: &[S]) -> i32 {
    let args: Vec<&str> = argv.iter().map(|s| s.as_ref()).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    init_threads();
    match cli.command {
        Command::Selftest => crate::selftest::run(),
        command => {
            let mut outputs = Outputs::default();
            match dispatch(command, &mut outputs) {
                Ok(()) => EXIT_OK,
                Err(err) => {
                    eprintln!("error: {err}");
                    if !outputs.written.is_empty() {
                        eprintln!("partial outputs:");
                        for p in outputs.manifest() {
                            eprintln!("  {p}");
                        }
                    }
                    exit_code(&err)
                }
            }
        }
    }
}

fn resolve(common: &Common) -> Result<ScenarioConfig> {
    let mut cfg = load_config(&common.config).map_err(|e| match e {
        Error::Io { path, source } => Error::config("--config", format!("{path}: {source}")),
        other => other,
    })?;
    if let Some(seed) = common.seed {
        cfg.monte_carlo.base_seed = seed;
    }
    if let Some(n) = common.trials {
        cfg.monte_carlo.n_trials = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(command: Command, outputs: &mut Outputs) -> Result<()> {
    let start = Instant::now();
    let (name, common) = match &command {
        Command::Optimize { common, .. } => ("optimize", common),
        Command::SweepPower { common, .. } => ("sweep-power", common),
        Command::Heatmap { common, .. } => ("heatmap", common),
        Command::Selftest => unreachable!("handled by run_command"),
    };
    let cfg = resolve(common)?;
    *outputs = Outputs::new(&common.out)?;
    let mut report = RunReport {
        command: name.to_string(),
        config: Some(cfg.clone()),
        wall_clock_seconds: 0.0,
        outputs: Vec::new(),
        convergence: Vec::new(),
        notes: Vec::new(),
    };

    match &command {
        Command::Optimize { scheme, dump_j, .. } => {
            run_optimize(&cfg, scheme.parse()?, *dump_j, outputs, &mut report)?
        }
        Command::SweepPower { scheme, .. } => {
            let schemes = match scheme {
                Some(s) => vec![s.parse()?],
                None => cfg.schemes.clone(),
            };
            run_sweep(&cfg, &schemes, outputs, &mut report)?
        }
        Command::Heatmap {
            scheme, baseline, ..
        } => {
            let baseline = baseline.as_deref().map(str::parse).transpose()?;
            run_heatmap(&cfg, scheme.parse()?, baseline, outputs, &mut report)?
        }
        Command::Selftest => unreachable!(),
    }

    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    report.outputs = outputs.manifest();
    let report_path = outputs.dir.join("report.json");
    report.outputs.push(report_path.display().to_string());
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    outputs.write("report.json", &json)?;
    println!("{name}: wrote {} files to {}", report.outputs.len(), outputs.dir.display());
    Ok(())
}

fn trace_summary(label: &str, trace: &AoTrace) -> ConvergenceSummary {
    ConvergenceSummary {
        label: label.to_string(),
        runs: 1,
        unconverged: usize::from(!trace.converged),
        mean_outer_iterations: trace.iterations_used as f64,
        final_objective_bpshz: Some(trace.final_objective()),
    }
}

fn trace_csv(trace: &AoTrace) -> String {
    let mut out = String::from("outer_iter,objective_bpshz,precoder_power,mm_inner_iters\n");
    for (i, obj) in trace.objective_per_iteration.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            i + 1,
            format_sig9(*obj),
            format_sig9(trace.precoder_power[i]),
            trace.mm_inner_iters[i]
        ));
    }
    out
}

fn run_optimize(
    cfg: &ScenarioConfig,
    scheme: SchemeKind,
    dump_j: bool,
    outputs: &mut Outputs,
    report: &mut RunReport,
) -> Result<()> {
    let scenario = cfg.scenario()?;
    let seed = cfg.monte_carlo.base_seed;
    let (j_rx, j_e) = scenario.correlations(&cfg.quadrature)?;
    if dump_j {
        for (name, area, j) in [
            ("j_rx.csv", &scenario.rx_area, &j_rx),
            ("j_eve.csv", &scenario.eve_area, &j_e),
        ] {
            let key = correlation_key(
                area,
                &scenario.p_ris,
                &scenario.ris_geom,
                &scenario.link_pathloss,
                &scenario.link_rician,
            );
            let path = outputs.dir.join(name);
            write_correlation_csv(&path, j, &cfg.quadrature, &key)?;
            outputs.written.push(path);
        }
    }
    let h = scenario.trial_bs_ris(seed, 0)?;
    let sys = scenario.system(h, j_rx, j_e, cfg.transmit_power.watts())?;
    let out = configure(scheme, &sys, &cfg.ao, seed, 0)?;

    let mut v_csv = String::from("index,re,im\n");
    for (i, z) in out.precoder.0.iter().enumerate() {
        v_csv.push_str(&format!("{i},{},{}\n", format_sig9(z.re), format_sig9(z.im)));
    }
    outputs.write("precoder.csv", &v_csv)?;
    let mut p_csv = String::from("index,re,im,phase_rad\n");
    for (i, z) in out.phases.0.iter().enumerate() {
        p_csv.push_str(&format!(
            "{i},{},{},{}\n",
            format_sig9(z.re),
            format_sig9(z.im),
            format_sig9(z.arg())
        ));
    }
    outputs.write("phases.csv", &p_csv)?;
    if let Some(trace) = &out.trace {
        outputs.write("trace.csv", &trace_csv(trace))?;
        report.convergence.push(trace_summary(scheme.name(), trace));
    }

    let objective = objective_rate(&out.precoder, &out.phases, &sys);
    let secrecy = spatial_secrecy_mc(
        &scenario,
        &sys.h_matrix,
        &out.precoder,
        &out.phases,
        &cfg.monte_carlo,
        &cfg.eval_grid,
    )?;
    outputs.write(
        "summary.csv",
        &format!(
            "scheme,objective_bpshz,spatial_secrecy_bpshz,spatial_secrecy_stderr\n{},{},{},{}\n",
            scheme,
            format_sig9(objective),
            format_sig9(secrecy.clamped.mean),
            format_sig9(secrecy.clamped.std_error)
        ),
    )?;
    Ok(())
}

fn run_sweep(
    cfg: &ScenarioConfig,
    schemes: &[SchemeKind],
    outputs: &mut Outputs,
    report: &mut RunReport,
) -> Result<()> {
    let scenario = cfg.scenario()?;
    let result = power_sweep(
        &scenario,
        schemes,
        &cfg.power_grid_dbm,
        &cfg.monte_carlo,
        &cfg.settings(),
    )?;
    outputs.write("power_sweep.csv", &sweep_csv(&result))?;
    report.convergence.push(ConvergenceSummary {
        label: "sweep".into(),
        runs: result.ao_runs,
        unconverged: result.ao_unconverged,
        mean_outer_iterations: if result.ao_runs > 0 {
            result.ao_iterations as f64 / result.ao_runs as f64
        } else {
            0.0
        },
        final_objective_bpshz: None,
    });
    Ok(())
}

fn run_heatmap(
    cfg: &ScenarioConfig,
    scheme: SchemeKind,
    baseline: Option<SchemeKind>,
    outputs: &mut Outputs,
    report: &mut RunReport,
) -> Result<()> {
    let scenario = cfg.scenario()?;
    let mut schemes = vec![scheme];
    schemes.extend(baseline);
    let maps = rate_maps(
        &scenario,
        &schemes,
        cfg.transmit_power.0,
        &cfg.monte_carlo,
        &cfg.settings(),
    )?;
    for (s, (rx, eve)) in schemes.iter().zip(&maps) {
        outputs.write(&format!("heatmap_rx_{s}.csv"), &rate_map_csv(rx))?;
        outputs.write(&format!("heatmap_eve_{s}.csv"), &rate_map_csv(eve))?;
    }
    if let Some(b) = baseline {
        let rx_gain = gain_map(&maps[0].0, &maps[1].0)?;
        let eve_gain = gain_map(&maps[0].1, &maps[1].1)?;
        outputs.write(&format!("gain_rx_{scheme}_vs_{b}.csv"), &gain_map_csv(&rx_gain))?;
        outputs.write(&format!("gain_eve_{scheme}_vs_{b}.csv"), &gain_map_csv(&eve_gain))?;
        report.notes.push(format!(
            "RX gain {:.2}%..{:.2}% (mean {:.2}%), Eve gain {:.2}%..{:.2}% (mean {:.2}%)",
            rx_gain.min(),
            rx_gain.max(),
            rx_gain.mean(),
            eve_gain.min(),
            eve_gain.max(),
            eve_gain.mean()
        ));
    }
    Ok(())
}
