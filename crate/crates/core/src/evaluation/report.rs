use super::quality::{psnr, ssim_metric};
use super::segmentation::{auc_score, confusion_metrics};
use super::vessels::{circular_region, hausdorff_directed, mask_points, vessel_metrics};
use crate::error::{invalid, io_err, Result, SasrError};
use crate::imaging::{BinaryMask, ImageGray};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Per-sample metrics. Absent values were not computable for that sample.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sample: String,
    pub psnr_db: Option<f64>,
    pub ssim: Option<f64>,
    pub sen: Option<f64>,
    pub acc: Option<f64>,
    pub g_mean: Option<f64>,
    pub kappa: Option<f64>,
    pub fdr: Option<f64>,
    pub dice: Option<f64>,
    pub auc: Option<f64>,
    pub hausdorff_px: Option<f64>,
    pub vld: Option<f64>,
    pub vt: Option<f64>,
}

/// Column order of every report format.
pub const METRIC_COLUMNS: [&str; 12] = [
    "psnr_db",
    "ssim",
    "sen",
    "acc",
    "g_mean",
    "kappa",
    "fdr",
    "dice",
    "auc",
    "hausdorff_px",
    "vld",
    "vt",
];

impl MetricsReport {
    pub fn values(&self) -> [Option<f64>; 12] {
        [
            self.psnr_db,
            self.ssim,
            self.sen,
            self.acc,
            self.g_mean,
            self.kappa,
            self.fdr,
            self.dice,
            self.auc,
            self.hausdorff_px,
            self.vld,
            self.vt,
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub metric: String,
    pub mean: Option<f64>,
    /// Sample standard deviation; zero for a single value.
    pub std: Option<f64>,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub samples: Vec<MetricsReport>,
    pub aggregate: Vec<Aggregate>,
}

/// Mean and standard deviation of each metric over the samples that define it.
pub fn aggregate(reports: &[MetricsReport]) -> Vec<Aggregate> {
    METRIC_COLUMNS
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let vals: Vec<f64> = reports.iter().filter_map(|r| r.values()[i]).collect();
            let n = vals.len();
            let mean = (n > 0).then(|| vals.iter().sum::<f64>() / n as f64);
            let std = mean.map(|m| {
                if n < 2 {
                    0.0
                } else {
                    (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64).sqrt()
                }
            });
            Aggregate {
                metric: name.to_string(),
                mean,
                std,
                count: n,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    /// Format implied by a file extension; CSV unless the path ends in `.json`.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Self::Json,
            _ => Self::Csv,
        }
    }
}

fn report_err(e: impl std::fmt::Display) -> SasrError {
    SasrError::Report(e.to_string())
}

/// Writes one row per sample and a final `aggregate` row. CSV aggregate cells
/// read `mean±std`.
pub fn write_report(reports: &[MetricsReport], path: &Path, format: ReportFormat) -> Result<()> {
    if reports.iter().any(|r| r.values().iter().flatten().any(|v| !v.is_finite())) {
        return invalid("report contains a non-finite metric");
    }
    let agg = aggregate(reports);
    let bytes = match format {
        ReportFormat::Json => {
            let file = ReportFile {
                samples: reports.to_vec(),
                aggregate: agg,
            };
            serde_json::to_vec_pretty(&file).map_err(report_err)?
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["sample"];
            header.extend(METRIC_COLUMNS);
            w.write_record(&header).map_err(report_err)?;
            for r in reports {
                let mut row = vec![r.sample.clone()];
                row.extend(r.values().iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
                w.write_record(&row).map_err(report_err)?;
            }
            let mut row = vec!["aggregate".to_string()];
            row.extend(agg.iter().map(|a| match (a.mean, a.std) {
                (Some(m), Some(s)) => format!("{m}±{s}"),
                _ => String::new(),
            }));
            w.write_record(&row).map_err(report_err)?;
            w.into_inner().map_err(report_err)?
        }
    };
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_report_json(path: &Path) -> Result<ReportFile> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(report_err)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    /// Intensity above which a reconstructed pixel counts as vessel.
    pub vessel_threshold: f64,
    /// Analysis disc radius as a fraction of the shorter image side.
    pub region_fraction: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            vessel_threshold: 0.5,
            region_fraction: 0.5,
        }
    }
}

/// Full metric set for one reconstruction.
///
/// Segmentation scores need a ground-truth vessel mask; the prediction is the
/// thresholded reconstruction and its intensities serve as the AUC score map.
pub fn evaluate_sample(
    sample: &str,
    pred: &ImageGray,
    reference: &ImageGray,
    truth: Option<&BinaryMask>,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    let (h, w) = pred.dims();
    let mask = BinaryMask::threshold(pred, opts.vessel_threshold);
    let region = circular_region(h, w, opts.region_fraction * h.min(w) as f64);
    let vessels = vessel_metrics(&mask, &region)?;
    let mut report = MetricsReport {
        sample: sample.to_string(),
        psnr_db: Some(psnr(pred, reference)?),
        ssim: Some(ssim_metric(pred, reference)?),
        vld: Some(vessels.vld),
        vt: vessels.vt,
        ..Default::default()
    };
    if let Some(gt) = truth {
        let c = confusion_metrics(&mask, gt)?;
        report.sen = c.sen;
        report.acc = Some(c.acc);
        report.g_mean = c.g_mean;
        report.kappa = c.kappa;
        report.fdr = c.fdr;
        report.dice = c.dice;
        let single_class = gt.is_empty() || gt.count() == gt.pixels().len();
        if !single_class {
            report.auc = Some(auc_score(pred.pixels(), gt)?);
        }
        if !mask.is_empty() && !gt.is_empty() {
            report.hausdorff_px = Some(hausdorff_directed(&mask_points(&mask), &mask_points(gt))?);
        }
    }
    Ok(report)
}
