//! Small fully connected regressor: ReLU hidden layers, tanh output.

mod cv;
mod io;
mod model;
mod train;

pub use cv::{grid_search_cv, kfold_indices, kfold_score, CellScore, GridSearchResult};
pub use io::{load_model, model_from_bytes, model_to_bytes, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use model::{Layer, MlpModel};
pub use train::{mse, smooth_l1, smooth_l1_grad, train, write_loss_trace, LabeledExample, TrainConfig};
