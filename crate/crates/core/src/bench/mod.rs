//! Synthetic data, image-quality metrics and the scenario harness.

mod metrics;
mod perturb;
mod phantom;
mod report;
mod run;
mod scenario;

pub use metrics::{error_map, median, mse, psnr, region_mean, ssim, Psnr, SSIM_C1, SSIM_C2, SSIM_PEAK, SSIM_SETTINGS, SSIM_WINDOW};
pub use perturb::{perturb_operator, Perturbation};
pub use phantom::{centered, insert_feature, make_phantom, Feature, PhantomKind};
pub use report::{
    write_aggregate_csv, write_image_csv, write_robustness_csv, ImageRow, Panel, Report, RobustnessReport, RobustnessRow,
    AGGREGATE_CSV_HEADER, IMAGE_CSV_HEADER, ROBUSTNESS_CSV_HEADER,
};
pub use run::{config_hash, robustness_suite, run_scenario};
pub use scenario::{cell_status, CellStatus, DatasetSpec, DenoiserSpec, FeatureSpec, Knowledge, Metric, MethodSpec, Scenario, TrainSpec};
