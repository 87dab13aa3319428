//! `tbcluster` command-line harness.

mod output;

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use tbcluster::analysis::{CapacityReport, MonteCarloResult, WitnessReport};
use tbcluster::config::RunConfig;
use tbcluster::detection::histograms_to_csv;
use tbcluster::modes::StateDocument;
use tbcluster::pipeline;

use output::{config_hash, visibility_svg, Writer};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Simulation { context: &'static str, source: tbcluster::Error },
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Simulation { .. } | CliError::Io(_) => 1,
        }
    }
}

trait Context<T> {
    fn context(self, context: &'static str) -> Result<T, CliError>;
}

impl<T> Context<T> for tbcluster::Result<T> {
    fn context(self, context: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Simulation { context, source })
    }
}

#[derive(Parser, Debug)]
#[command(name = "tbcluster", version, about = "Time-bin cluster state simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON run configuration
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Built-in configuration used when no file is given
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Use exact probabilities instead of sampled counts
    #[arg(long, global = true)]
    exact: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Build the two-photon state and check it against the cluster state
    Generate,
    /// Send the state through the fibre link
    Transmit,
    /// Coincidence histograms for all nine joint settings
    Measure,
    /// Stabilizer witness with error bars
    Witness,
    /// Phase scans of the four interference projections
    Fringe,
    /// Continuous-field visibility against dispersion
    Visibility,
    /// Timing drift with and without stabilization
    Drift,
    /// Frequency-multiplexed qubit rate
    Capacity,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Transmit => "transmit",
            Command::Measure => "measure",
            Command::Witness => "witness",
            Command::Fringe => "fringe",
            Command::Visibility => "visibility",
            Command::Drift => "drift",
            Command::Capacity => "capacity",
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    if common.config.is_some() && common.preset.is_some() {
        return Err(CliError::Usage("--config and --preset are mutually exclusive".into()));
    }
    let mut cfg = match (&common.config, &common.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            RunConfig::from_json(&text).map_err(|e| CliError::Config(e.to_string()))?
        }
        (None, Some(name)) => RunConfig::preset(name).map_err(|e| CliError::Usage(e.to_string()))?,
        (None, None) => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.to_string_lossy().into_owned();
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

#[derive(Serialize)]
struct StateReport {
    is_cluster: bool,
    fidelity: f64,
    state: StateDocument,
}

#[derive(Serialize)]
struct TransmitReport {
    arrival_offset_ps: f64,
    retained_probability: f64,
    link_loss_db: f64,
    corrupted: bool,
    state: StateDocument,
}

#[derive(Serialize)]
struct WitnessDocument<'a> {
    report: &'a WitnessReport,
    entangled: bool,
    significance: f64,
    monte_carlo: Option<MonteCarloSummary>,
    total_counts: f64,
}

#[derive(Serialize)]
struct MonteCarloSummary {
    samples: usize,
    mean: f64,
    stderr: f64,
}

impl From<&MonteCarloResult> for MonteCarloSummary {
    fn from(m: &MonteCarloResult) -> Self {
        MonteCarloSummary { samples: m.samples, mean: m.mean, stderr: m.stderr }
    }
}

#[derive(Serialize)]
struct FringeSummary {
    family: String,
    description: String,
    rotated_level: String,
    visibility: f64,
    phase_offset: f64,
    mean_rate: f64,
    sign: i8,
    expected_sign: i8,
    best_k: u32,
    chsh_pass: bool,
}

#[derive(Serialize)]
struct DriftSummary {
    input_peak_ps: f64,
    input_rms_ps: f64,
    residual_rms_ps: f64,
    corrections: usize,
    stabilized: bool,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli.common)?;
    if cli.command == Command::Visibility && cfg.waveform.dispersions_ns_per_nm.is_empty() {
        return Err(CliError::Usage("visibility needs at least one dispersion value".into()));
    }
    let canonical = cfg.to_json();
    let w = Writer::new(
        PathBuf::from(&cfg.output_dir),
        config_hash(&canonical),
        cli.command.name(),
        cfg.seed,
        cli.common.exact,
    );
    let exact = cli.common.exact;
    match cli.command {
        Command::Generate => {
            let g = pipeline::generate(&cfg).context("generate")?;
            let report = StateReport { is_cluster: g.check.is_cluster, fidelity: g.check.fidelity, state: g.state.to_document() };
            w.json("state.json", &report)?;
            println!("fidelity {:.6}", g.check.fidelity);
            if !g.check.is_cluster {
                eprintln!("warning: generated state is not the cluster state (fidelity {:.6})", g.check.fidelity);
            }
        }
        Command::Transmit => {
            let g = pipeline::generate(&cfg).context("generate")?;
            let ch = pipeline::transmit_state(&cfg, &g.state).context("transmit")?;
            let report = TransmitReport {
                arrival_offset_ps: ch.transmission.arrival_offset_ps,
                retained_probability: ch.transmission.state.total_probability(),
                link_loss_db: cfg.channel.link.total_loss_db(),
                corrupted: ch.corrupted,
                state: ch.transmission.state.to_document(),
            };
            w.json("transmitted.json", &report)?;
            println!(
                "arrival offset {:.3} ps, retained {:.6}",
                report.arrival_offset_ps, report.retained_probability
            );
            if ch.corrupted {
                eprintln!("warning: arrival offset exceeds the coincidence window");
            }
        }
        Command::Measure => {
            let m = pipeline::measure(&cfg, exact).context("measure")?;
            w.csv("histograms.csv", &histograms_to_csv(&m.histograms, &cfg.encoding.grid))?;
            w.json("histograms.json", &m.histograms)?;
            w.json("projection_tables.json", &m.tables)?;
            w.json("schedule.json", &m.schedule)?;
            for h in &m.histograms {
                println!("{} {:<28} {:.1}", h.name, h.label, h.total());
            }
        }
        Command::Witness => {
            let r = pipeline::witness_run(&cfg, exact).context("witness")?;
            w.csv("projections.csv", &r.projections.to_csv())?;
            let hist = r.monte_carlo.as_ref().map(|m| m.histogram.to_csv()).unwrap_or_else(|| "bin_low,bin_high,count\n".into());
            w.csv("witness_hist.csv", &hist)?;
            let doc = WitnessDocument {
                report: &r.report,
                entangled: r.report.is_entangled(),
                significance: r.report.significance(),
                monte_carlo: r.monte_carlo.as_ref().map(MonteCarloSummary::from),
                total_counts: r.raw.total(),
            };
            w.json("witness.json", &doc)?;
            for (t, e) in r.report.terms.iter().zip(&r.report.expectations) {
                println!("<{t}> = {e:+.4}");
            }
            println!("W = {:+.4} +/- {:.4}  fidelity >= {:.4}", r.report.witness, r.report.stderr, r.report.fidelity_bound);
        }
        Command::Fringe => {
            let scans = pipeline::fringe_run(&cfg, exact).context("fringe")?;
            let mut csv = String::from("family,alpha_rad,rate,fit\n");
            let mut summary = Vec::new();
            for s in &scans {
                for (&a, &r) in s.fit.alphas.iter().zip(&s.fit.rates) {
                    let _ = writeln!(csv, "{},{},{},{}", s.family.name, a, r, s.fit.model(a));
                }
                summary.push(FringeSummary {
                    family: s.family.name.clone(),
                    description: s.description.clone(),
                    rotated_level: s.family.rotated_level.clone(),
                    visibility: s.fit.visibility,
                    phase_offset: s.fit.phase_offset,
                    mean_rate: s.fit.mean_rate,
                    sign: s.sign,
                    expected_sign: s.family.expected_sign,
                    best_k: s.fit.best_k,
                    chsh_pass: s.fit.chsh_pass,
                });
                println!(
                    "{} {:<28} V = {:.4} sign {:+} {}",
                    s.family.name,
                    s.description,
                    s.fit.visibility,
                    s.sign,
                    if s.fit.chsh_pass { "CHSH pass" } else { "CHSH fail" }
                );
            }
            w.csv("fringe.csv", &csv)?;
            w.json("fringe_fit.json", &summary)?;
        }
        Command::Visibility => {
            let points = pipeline::visibility_sweep(&cfg).context("visibility")?;
            let levels = cfg.encoding.levels.levels();
            let long = levels.first().map(|l| l.shift_ps).unwrap_or_default();
            let short = levels.last().map(|l| l.shift_ps).unwrap_or_default();
            let mut csv = String::from("dispersion_ns_per_nm,visibility_short,visibility_long\n");
            for p in &points {
                let _ = writeln!(csv, "{},{},{}", p.dispersion_ns_per_nm, p.short, p.long);
                println!("{:>7} ns/nm  {:.5}  {:.5}", p.dispersion_ns_per_nm, p.short, p.long);
            }
            w.csv("visibility.csv", &csv)?;
            let ds: Vec<f64> = points.iter().map(|p| p.dispersion_ns_per_nm).collect();
            let svg = visibility_svg(
                &ds,
                &[
                    (&format!("{short} ps"), "#1f77b4", points.iter().map(|p| p.short).collect()),
                    (&format!("{long} ps"), "#d62728", points.iter().map(|p| p.long).collect()),
                ],
            );
            w.svg("visibility.svg", &svg)?;
        }
        Command::Drift => {
            let st = pipeline::drift(&cfg).context("drift")?;
            w.csv("drift.csv", &st.to_csv())?;
            let summary = DriftSummary {
                input_peak_ps: st.input.peak_ps(),
                input_rms_ps: st.input_rms_ps,
                residual_rms_ps: st.rms_ps,
                corrections: st.corrections,
                stabilized: cfg.channel.stabilize,
            };
            w.json("drift.json", &summary)?;
            println!(
                "peak {:.2} ps, rms {:.3} ps -> {:.3} ps after {} corrections",
                summary.input_peak_ps, summary.input_rms_ps, summary.residual_rms_ps, summary.corrections
            );
        }
        Command::Capacity => {
            let c: CapacityReport = pipeline::capacity(&cfg).context("capacity")?;
            w.json("capacity.json", &c)?;
            println!("{} channels x {} Hz = {} qubits/s", c.channels, c.rep_rate_hz, c.qubits_per_second);
        }
    }
    w.raw("config.json", &format!("{canonical}\n"))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
