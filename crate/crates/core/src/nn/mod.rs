//! Layers and the CNN-LSTM model.

mod layers;
mod model;
mod spec;

pub use layers::{BatchNorm1dLayer, Conv1dLayer, LinearLayer, LstmLayer};
pub use model::{Forward, Model};
pub use spec::{ExpMode, LayerShape, LayerSpec, ModelSpec, CLASS_COUNT, DEFAULT_INPUT_CHANNELS};
