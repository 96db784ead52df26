//! Evaluation harness: metrics, baselines, experiment orchestration, and
//! heatmap exports.

mod heatmap;
mod metrics;
mod mlp;
mod nmf;
mod runner;

pub use heatmap::{block_mean, dense_csv, export_heatmap, export_reconstruction, write_pgm};
pub use metrics::{accuracy, f1, mape, mse, topology_f1};
pub use mlp::{baseline_mlp, MlpConfig, MlpModel};
pub use nmf::{baseline_nmf, NmfModel};
pub use runner::{
    build_pipeline, run_experiment, run_seed, ExperimentConfig, GraphSource, Method, ResultRecord,
    SeedPipeline, SeedResult, RESULTS_CSV_HEADER,
};
