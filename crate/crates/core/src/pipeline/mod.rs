//! Training, evaluation and inference on top of the other modules.

mod config;
mod eval;
mod optim;
mod train;

pub use config::{AdamConfig, LrMultipliers, PriorConfig, TrainConfig};
pub use eval::{
    evaluate, infer, rank_map_from_instances, score_dirs, BackgroundPredictor, EvalReport, InferOutput, NetPredictor,
    OraclePredictor, PredictedMaps, Predictor, RunMetadata, ScoredLayer, FIXATION_THRESHOLD,
};
pub use optim::Adam;
pub use train::{
    checkpoint_path, read_log, smoothed, train, train_from, LogRecord, ManifestSource, MemorySource, SampleSource,
    TrainOutcome, Trainer, CONFIG_FILE, LOG_FILE, SMOOTHING_WINDOW,
};
