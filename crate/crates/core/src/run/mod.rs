//! The end-to-end pipeline behind the command line: run configuration,
//! training, prediction files and evaluation.

mod config;
mod dataset;
mod predfile;
mod predict;
mod train;

pub use config::RunConfig;
pub use dataset::{gen_data, make_labels};
pub use predfile::{decode_prediction, encode_prediction, read_prediction, write_prediction};
pub use predict::{
    eval_ground_truth, evaluate_network, evaluate_predictions, predict_image, predict_manifest, prediction_path,
    reflect_pad,
};
pub use train::{
    image_tensor, load_training_set, train, variant_loss, Targets, TrainOutcome, TrainRecord, TrainSample,
    MOVING_WINDOW,
};
