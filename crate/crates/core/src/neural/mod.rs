//! Small feed-forward dynamics approximators.

mod activation;
mod ensemble;
mod mlp;
mod objective;
mod train;

pub use activation::Activation;
pub use ensemble::{ensemble_jacobian, ensemble_predict, Ensemble};
pub use mlp::{model_jacobian, predict, DropoutMask, Mlp, Standardization};
pub use objective::ObjectiveForm;
pub use train::{adam_step, train, train_resampled, train_with_callback, AdamState, TrainConfig};
