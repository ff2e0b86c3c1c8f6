//! Trainable path transformations, recurrent cells and the Logsig-RNN
//! model family.

pub mod checkpoint;
pub mod config;
pub mod layers;
pub mod model;
pub mod params;
pub mod rnn;
pub mod skeleton;
pub mod train;

pub use config::{ModelConfig, RunConfig, TrainSettings, Variant};
pub use layers::{
    accumulative_layer, add_start_points, gcn_forward, normalized_adjacency,
    time_incorporated_layer,
};
pub use model::{softmax, softmax_cross_entropy, Model};
pub use params::{Grads, ParamStore};
pub use rnn::CellKind;
pub use skeleton::SkeletonSequence;
pub use train::{accuracy, confusion_matrix, train, Example, TrainTrace};
