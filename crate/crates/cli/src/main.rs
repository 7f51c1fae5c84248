//! `oam-entlab`: batch driver for the simulate / reconstruct / analyze chain.

mod output;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use oam_entlab::exec::{init_threads, Execution};
use oam_entlab::metrics::{full_report, MetricReport, ReportOptions, WitnessInput};
use oam_entlab::modes::{displacement_scan, distinction_ratio, overlap_matrix, AnalyzerRecord, BasisAnalyzers};
use oam_entlab::pipeline::{exposure_model, simulate_run, RunTables};
use oam_entlab::sim::{g2_estimate, CoincidenceHistogram, CoincidenceTable, ExperimentConfig, SimInput, Simulator};
use oam_entlab::tomography::{mle_reconstruct, TomographyDataset, DEFAULT_MAX_ITER, DEFAULT_TOL};

use output::*;

const BUNDLED_CONFIG: &str = include_str!("../configs/paper_defaults.toml");
const BUNDLED_CONFIG_PATH: &str = "bundled:paper_defaults.toml";
const THREADS_ENV: &str = "OAM_ENTLAB_THREADS";

#[derive(Parser)]
#[command(name = "oam-entlab", version, about = "Simulate and analyze OAM atom-photon entanglement runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyzer states, LG overlap matrix, displacement scan and distinction ratio.
    Modes(Common),
    /// Coincidence tables for the tomography and basis settings, plus a g2 histogram.
    Simulate(SimulateArgs),
    /// Maximum-likelihood reconstruction from a tomography table.
    Tomo(TomoArgs),
    /// Witness, EOF, purity and best pure fit with bootstrap errors.
    Metrics(MetricsArgs),
    /// Full chain: simulate, reconstruct, analyze, summarize.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config; the bundled defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides `rng_seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct SimArgs {
    /// Overrides `acquisition_time` (s per setting).
    #[arg(long)]
    acquisition: Option<f64>,
    /// Duration of the g2 histogram run, s.
    #[arg(long, default_value_t = 1000.0)]
    histogram_time: f64,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    sim: SimArgs,
}

#[derive(Args)]
struct TomoArgs {
    #[command(flatten)]
    common: Common,
    /// Tomography table; `<out>/tomography.csv` when omitted.
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    #[command(flatten)]
    common: Common,
    /// Tomography table; `<out>/tomography.csv` when omitted.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Basis table holding the witness settings; `<out>/bases.csv` when omitted.
    #[arg(long)]
    witness: Option<PathBuf>,
    /// Bootstrap resamples.
    #[arg(long, default_value_t = 1000)]
    resamples: usize,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, default_value_t = 1000)]
    resamples: usize,
}

/// Failure tagged with the process exit code of its stage.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

mod code {
    pub const IO: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const PHYSICS: u8 = 3;
    pub const SIMULATE: u8 = 4;
    pub const TOMO: u8 = 5;
    pub const METRICS: u8 = 6;
}

trait Stage<T> {
    fn stage(self, code: u8, what: &str) -> Result<T, Failure>;
}

impl<T, E: fmt::Display> Stage<T> for Result<T, E> {
    fn stage(self, code: u8, what: &str) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, message: format!("{what}: {e}") })
    }
}

fn load_config(common: &Common) -> Result<(ExperimentConfig, String), Failure> {
    let (text, path) = match &common.config {
        Some(p) => (fs::read_to_string(p).stage(code::CONFIG, &format!("reading {}", p.display()))?, p.display().to_string()),
        None => (BUNDLED_CONFIG.to_string(), BUNDLED_CONFIG_PATH.to_string()),
    };
    let mut cfg: ExperimentConfig = toml::from_str(&text).stage(code::CONFIG, &format!("parsing {path}"))?;
    if let Some(seed) = common.seed {
        cfg.rng_seed = seed;
    }
    Ok((cfg, path))
}

fn validate(cfg: &ExperimentConfig) -> Result<(), Failure> {
    cfg.validate().stage(code::CONFIG, "config")
}

fn analyzers(cfg: &ExperimentConfig) -> Result<BasisAnalyzers, Failure> {
    BasisAnalyzers::new(cfg.fiber_waist_um, cfg.optics()).stage(code::PHYSICS, "analyzers")
}

fn threads_from_env() -> Result<(), Failure> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().stage(code::CONFIG, THREADS_ENV)?;
        init_threads(n);
    }
    Ok(())
}

struct Run<'a> {
    command: &'static str,
    common: &'a Common,
    config: ExperimentConfig,
    config_path: String,
}

impl<'a> Run<'a> {
    fn start(command: &'static str, common: &'a Common) -> Result<Self, Failure> {
        let (config, config_path) = load_config(common)?;
        fs::create_dir_all(&common.out).stage(code::IO, &format!("creating {}", common.out.display()))?;
        Ok(Self { command, common, config, config_path })
    }

    fn out(&self, name: &str) -> PathBuf {
        self.common.out.join(name)
    }

    fn finish(&self) -> Result<(), Failure> {
        let manifest = RunManifest::new(self.command, &self.config_path, &self.common.out, self.config.rng_seed);
        write_json(&self.out(MANIFEST), &manifest)
    }
}

fn cmd_modes(common: &Common) -> Result<(), Failure> {
    let run = Run::start("modes", common)?;
    let cfg = &run.config;
    validate(cfg)?;
    let optics = cfg.optics();
    let an = analyzers(cfg)?;
    let records: Vec<LabeledAnalyzer> = an
        .iter()
        .map(|(label, setting, state)| LabeledAnalyzer { label: label.to_string(), record: AnalyzerRecord::new(setting, state) })
        .collect();
    write_json(&run.out(ANALYZERS), &records)?;

    let ms: Vec<i32> = (-2..=2).collect();
    let m = overlap_matrix(&ms, optics.analysis_waist_um, optics.radial_nodes, optics.angular_nodes).stage(code::PHYSICS, "overlaps")?;
    write_json(&run.out(OVERLAPS), &OverlapTable::new(ms, optics.analysis_waist_um, &m))?;

    let ds: Vec<f64> = (0..=20).map(|k| 0.25 * k as f64).collect();
    let scan =
        displacement_scan(&ds, 0.0, cfg.fiber_waist_um, &optics, Execution::available()).stage(code::PHYSICS, "displacement scan")?;
    write_json(&run.out(SCAN), &scan)?;

    let ratio = distinction_ratio(cfg.fiber_waist_um, &optics).stage(code::PHYSICS, "distinction ratio")?;
    write_json(
        &run.out(DISTINCTION),
        &Distinction {
            fiber_waist_um: cfg.fiber_waist_um,
            analysis_waist_um: optics.analysis_waist_um,
            balanced_displacement: an.balanced_displacement,
            distinction_ratio: ratio,
        },
    )?;
    run.finish()
}

fn apply_sim(cfg: &mut ExperimentConfig, sim: &SimArgs) {
    if let Some(t) = sim.acquisition {
        cfg.acquisition_time = t;
    }
}

/// Tables and histogram of one seeded run. An empty run is an error here.
fn simulate_stage(cfg: &ExperimentConfig, an: BasisAnalyzers, histogram_time: f64) -> Result<(RunTables, CoincidenceHistogram), Failure> {
    let mut sim = Simulator::with_analyzers(cfg.clone(), an).stage(code::SIMULATE, "simulate")?;
    let input = SimInput::Source(cfg.source().stage(code::SIMULATE, "source")?);
    let tables = simulate_run(&mut sim, &input).stage(code::SIMULATE, "simulate")?;
    if tables.tomography.total_coincidences() == 0 {
        return Err(Failure {
            code: code::SIMULATE,
            message: format!("simulate: no coincidences recorded (acquisition_time = {} s)", cfg.acquisition_time),
        });
    }
    let hist = sim.simulate_histogram(&input, histogram_time).stage(code::SIMULATE, "histogram")?;
    Ok((tables, hist))
}

fn write_tables(run: &Run, tables: &RunTables, hist: &CoincidenceHistogram) -> Result<(), Failure> {
    write_csv(&run.out(TOMOGRAPHY_TABLE), |w| tables.tomography.write_csv(w))?;
    write_csv(&run.out(BASES_TABLE), |w| tables.bases.write_csv(w))?;
    write_csv(&run.out(HISTOGRAM), |w| hist.write_csv(w))
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let mut run = Run::start("simulate", &args.common)?;
    apply_sim(&mut run.config, &args.sim);
    validate(&run.config)?;
    let an = analyzers(&run.config)?;
    let (tables, hist) = simulate_stage(&run.config, an, args.sim.histogram_time)?;
    write_tables(&run, &tables, &hist)?;
    run.finish()
}

fn read_table(path: &Path, code: u8) -> Result<CoincidenceTable, Failure> {
    let f = fs::File::open(path).stage(code, &format!("opening {}", path.display()))?;
    CoincidenceTable::read_csv(f).stage(code, &format!("reading {}", path.display()))
}

fn tomo_dataset(cfg: &ExperimentConfig, table: &CoincidenceTable) -> Result<TomographyDataset, Failure> {
    TomographyDataset::from_table(table, &exposure_model(cfg)).stage(code::TOMO, "dataset")
}

fn cmd_tomo(args: &TomoArgs) -> Result<(), Failure> {
    let run = Run::start("tomo", &args.common)?;
    let path = args.table.clone().unwrap_or_else(|| run.out(TOMOGRAPHY_TABLE));
    let table = read_table(&path, code::TOMO)?;
    let recon = mle_reconstruct(&tomo_dataset(&run.config, &table)?, DEFAULT_TOL, DEFAULT_MAX_ITER).stage(code::TOMO, "reconstruction")?;
    write_json(&run.out(RECONSTRUCTION), &recon.record())?;
    run.finish()
}

fn report_options(cfg: &ExperimentConfig, resamples: usize) -> ReportOptions {
    ReportOptions { resamples, seed: cfg.rng_seed, exec: Execution::available(), ..ReportOptions::default() }
}

fn metrics_stage(run: &Run, tomography: &CoincidenceTable, bases: &CoincidenceTable, resamples: usize) -> Result<MetricReport, Failure> {
    let dataset = tomo_dataset(&run.config, tomography)?;
    let witness = WitnessInput::from_table(bases).stage(code::METRICS, "witness")?;
    let (report, recon) = full_report(&dataset, &witness, &report_options(&run.config, resamples)).stage(code::METRICS, "metrics")?;
    write_json(&run.out(RECONSTRUCTION), &recon.record())?;
    write_json(&run.out(METRICS), &report)?;
    Ok(report)
}

fn cmd_metrics(args: &MetricsArgs) -> Result<(), Failure> {
    let run = Run::start("metrics", &args.common)?;
    let tomography = read_table(&args.table.clone().unwrap_or_else(|| run.out(TOMOGRAPHY_TABLE)), code::METRICS)?;
    let bases = read_table(&args.witness.clone().unwrap_or_else(|| run.out(BASES_TABLE)), code::METRICS)?;
    metrics_stage(&run, &tomography, &bases, args.resamples)?;
    run.finish()
}

fn cmd_report(args: &ReportArgs) -> Result<(), Failure> {
    let mut run = Run::start("report", &args.common)?;
    apply_sim(&mut run.config, &args.sim);
    validate(&run.config)?;
    let an = analyzers(&run.config)?;
    let (tables, hist) = simulate_stage(&run.config, an, args.sim.histogram_time)?;
    write_tables(&run, &tables, &hist)?;
    let g2 = g2_estimate(&hist).stage(code::SIMULATE, "g2")?;
    let report = metrics_stage(&run, &tables.tomography, &tables.bases, args.resamples)?;
    write_text(&run.out(SUMMARY), &summary(&g2, &report))?;
    run.finish()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = threads_from_env().and_then(|()| match &cli.command {
        Command::Modes(c) => cmd_modes(c),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Tomo(a) => cmd_tomo(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Report(a) => cmd_report(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
