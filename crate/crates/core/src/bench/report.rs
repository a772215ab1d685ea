use std::io::Write;

use serde::{Deserialize, Serialize};

use super::metrics::{median, Psnr};
use super::perturb::Perturbation;
use crate::error::{InvError, Result};
use crate::image::Image;

/// Metrics for one test image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRow {
    pub image_id: usize,
    pub psnr: Option<Psnr>,
    pub ssim: Option<f64>,
    pub runtime_ms: f64,
    /// Seed of the measurement noise for this image.
    pub seed: u64,
}

/// Images behind one row, for figure panels and error maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub image_id: usize,
    pub truth: Image,
    /// `Aᵀy` (inner operator for phase retrieval).
    pub backprojection: Image,
    pub reconstruction: Image,
    /// `|reconstruction − truth|`.
    pub error: Image,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub scenario_id: String,
    pub method: String,
    pub rows: Vec<ImageRow>,
    pub panels: Vec<Panel>,
    /// Mean absolute error over the inserted test feature, per image.
    pub feature_mae: Option<Vec<f64>>,
    pub training_loss: Vec<f64>,
    pub perturbation: Option<Perturbation>,
    pub config_hash: String,
    pub seed: u64,
    pub ssim_settings: &'static str,
}

impl Report {
    fn psnr_values(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.psnr.map(Psnr::db)).collect()
    }

    pub fn psnr_mean(&self) -> Option<f64> {
        let v = self.psnr_values();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn psnr_median(&self) -> Option<f64> {
        let v = self.psnr_values();
        (!v.is_empty()).then(|| median(&v))
    }

    pub fn ssim_mean(&self) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter_map(|r| r.ssim).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// PSNR change between a matched run and a perturbed run of the same model.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessRow {
    pub perturbation: Perturbation,
    pub report: Report,
    /// `median PSNR(baseline) − median PSNR(perturbed)`.
    pub psnr_drop_median: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessReport {
    pub baseline: Report,
    pub rows: Vec<RobustnessRow>,
}

impl RobustnessReport {
    /// Baseline followed by every perturbed report.
    pub fn reports(&self) -> Vec<&Report> {
        std::iter::once(&self.baseline).chain(self.rows.iter().map(|r| &r.report)).collect()
    }
}

pub const IMAGE_CSV_HEADER: [&str; 7] = ["scenario_id", "method", "image_id", "psnr_db", "ssim", "runtime_ms", "seed"];
pub const AGGREGATE_CSV_HEADER: [&str; 6] = ["scenario_id", "method", "psnr_mean", "psnr_median", "ssim_mean", "n"];
pub const ROBUSTNESS_CSV_HEADER: [&str; 5] = ["scenario_id", "perturbation", "psnr_median_baseline", "psnr_median_perturbed", "psnr_drop_median"];

fn num(v: Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(x) if x.is_infinite() => if x > 0.0 { "inf".into() } else { "-inf".into() },
        Some(x) => format!("{x:.6}"),
    }
}

fn csv_err(e: csv::Error) -> InvError {
    InvError::Io(e.to_string())
}

fn finish<W: Write>(w: csv::Writer<W>) -> Result<()> {
    w.into_inner().map_err(|e| InvError::Io(e.to_string()))?.flush().map_err(|e| InvError::Io(e.to_string()))
}

/// Per-image CSV, one row per test image per report.
pub fn write_image_csv<W: Write>(reports: &[&Report], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(IMAGE_CSV_HEADER).map_err(csv_err)?;
    for r in reports {
        for row in &r.rows {
            w.write_record([
                r.scenario_id.clone(),
                r.method.clone(),
                row.image_id.to_string(),
                row.psnr.map(|p| p.to_string()).unwrap_or_default(),
                num(row.ssim),
                format!("{:.3}", row.runtime_ms),
                row.seed.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    finish(w)
}

/// Aggregate CSV, one row per report.
pub fn write_aggregate_csv<W: Write>(reports: &[&Report], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AGGREGATE_CSV_HEADER).map_err(csv_err)?;
    for r in reports {
        w.write_record([
            r.scenario_id.clone(),
            r.method.clone(),
            num(r.psnr_mean()),
            num(r.psnr_median()),
            num(r.ssim_mean()),
            r.rows.len().to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// PSNR-drop table of a robustness run.
pub fn write_robustness_csv<W: Write>(suite: &RobustnessReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ROBUSTNESS_CSV_HEADER).map_err(csv_err)?;
    let base = suite.baseline.psnr_median();
    for row in &suite.rows {
        w.write_record([
            suite.baseline.scenario_id.clone(),
            row.perturbation.label(),
            num(base),
            num(row.report.psnr_median()),
            num(Some(row.psnr_drop_median)),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}
