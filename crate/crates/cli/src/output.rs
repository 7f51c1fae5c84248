//! Output files and their schemas.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use oam_entlab::metrics::{MetricReport, WITNESS_THRESHOLD};
use oam_entlab::modes::AnalyzerRecord;
use oam_entlab::sim::G2Estimate;
use oam_entlab::state::C64;
use serde::{Deserialize, Serialize};

use crate::{code, Failure, Stage};

pub const FORMAT_VERSION: &str = "1";

pub const MANIFEST: &str = "manifest.json";
pub const ANALYZERS: &str = "analyzers.json";
pub const OVERLAPS: &str = "overlaps.json";
pub const SCAN: &str = "displacement_scan.json";
pub const DISTINCTION: &str = "distinction.json";
pub const TOMOGRAPHY_TABLE: &str = "tomography.csv";
pub const BASES_TABLE: &str = "bases.csv";
pub const HISTOGRAM: &str = "histogram.csv";
pub const RECONSTRUCTION: &str = "reconstruction.json";
pub const METRICS: &str = "metrics.json";
pub const SUMMARY: &str = "summary.txt";

/// Echo of the invocation. The only file carrying wall-clock time.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: String,
    pub output_dir: String,
    pub seed: u64,
    pub format_version: String,
    pub timestamp_unix: u64,
}

impl RunManifest {
    pub fn new(command: &str, config_path: &str, output_dir: &Path, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            config_path: config_path.to_string(),
            output_dir: output_dir.display().to_string(),
            seed,
            format_version: FORMAT_VERSION.to_string(),
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabeledAnalyzer {
    pub label: String,
    #[serde(flatten)]
    pub record: AnalyzerRecord,
}

/// `<LG_0m | LG_0m'>` split into real and imaginary parts.
#[derive(Debug, Serialize, Deserialize)]
pub struct OverlapTable {
    pub azimuthal_indices: Vec<i32>,
    pub waist_um: f64,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl OverlapTable {
    pub fn new(azimuthal_indices: Vec<i32>, waist_um: f64, m: &[Vec<C64>]) -> Self {
        Self {
            azimuthal_indices,
            waist_um,
            re: m.iter().map(|r| r.iter().map(|z| z.re).collect()).collect(),
            im: m.iter().map(|r| r.iter().map(|z| z.im).collect()).collect(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Distinction {
    pub fiber_waist_um: f64,
    pub analysis_waist_um: f64,
    pub balanced_displacement: f64,
    pub distinction_ratio: f64,
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, Failure> {
    fs::File::create(path).map(BufWriter::new).stage(code::IO, &format!("creating {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).stage(code::IO, &format!("writing {}", path.display()))?;
    writeln!(w).and_then(|()| w.flush()).stage(code::IO, &format!("writing {}", path.display()))
}

pub fn write_csv<F>(path: &Path, emit: F) -> Result<(), Failure>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> oam_entlab::Result<()>,
{
    let mut w = create(path)?;
    emit(&mut w).stage(code::IO, &format!("writing {}", path.display()))?;
    w.flush().stage(code::IO, &format!("writing {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).stage(code::IO, &format!("writing {}", path.display()))
}

pub fn summary(g2: &G2Estimate, r: &MetricReport) -> String {
    let gamma = match r.gamma_best {
        Some(g) => {
            let z = C64::new(g.re, g.im);
            format!("{:.3} exp(i {:.3} pi)", z.norm(), z.arg() / std::f64::consts::PI)
        }
        None => "infinite (pure |11>)".to_string(),
    };
    let verdict = if r.entangled() { "entangled" } else { "not certified" };
    format!(
        "g2 = {:.2} +/- {:.2}\n\
         fidelity lower bound = {:.3} +/- {:.3} ({verdict}, threshold {WITNESS_THRESHOLD})\n\
         EOF = {:.3} +/- {:.3}\n\
         purity = {:.3} +/- {:.3}\n\
         gamma_best = {gamma} (fidelity {:.4}, EOF of fit {:.3})\n\
         bootstrap = {} resamples, {} failed\n",
        g2.value,
        g2.stderr,
        r.fidelity_lower_bound,
        r.fidelity_lower_bound_stderr,
        r.eof,
        r.eof_stderr,
        r.purity,
        r.purity_stderr,
        r.fidelity_at_gamma_best,
        r.eof_of_pure_fit,
        r.bootstrap_resamples,
        r.bootstrap_failures,
    )
}
