//! Configuration, orchestration and output tables.

mod config;
mod identification;
mod pipeline;
mod tables;

pub use config::{PipelineConfig, ReportingCell, ThresholdMode};
pub use identification::{classify_identification, IdentificationStatus, Status};
pub use pipeline::{
    analyse_networks, attribute_period, bootstrap_seed, load_inputs, run_attribution, run_detection, run_pipeline,
    sargan_rejection_rate, DetectionOutput, Inputs, LinkAttribution, PeriodAttribution, PeriodDetection,
    PeriodNetwork, PipelineReport, WALKTRAP_STEPS,
};
pub use tables::{file_stem, write_attribution, write_detection, write_inputs, write_manifest, write_networks, write_report};
