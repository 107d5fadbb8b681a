//! Image quality, segmentation and vessel-morphology metrics.

mod quality;
mod report;
mod segmentation;
mod vessels;

pub use quality::{psnr, psnr_with_peak, ssim_metric, PSNR_CAP};
pub use report::{
    aggregate, evaluate_sample, read_report_json, write_report, Aggregate, EvalOptions,
    MetricsReport, ReportFile, ReportFormat, METRIC_COLUMNS,
};
pub use segmentation::{auc_score, confusion_metrics, ConfusionMetrics};
pub use vessels::{
    circular_region, hausdorff_directed, mask_points, skeletonize, vessel_metrics, VesselMetrics,
    ARC_STRIDE, MIN_BRANCH_PIXELS,
};
