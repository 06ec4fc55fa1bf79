//! Adversarial training: losses, optimizer, configuration and the loop.

mod adam;
mod config;
mod losses;
mod run;
mod trainer;

pub use adam::{learning_rate, Adam};
pub use config::{TrainConfig, CONFIG_ENV, CONFIG_KEYS};
pub use losses::{diversity_ratio_estimate, loss_discriminator, loss_generator, mean_l1, update_k, BeganState};
pub use run::{format_metrics_row, train_loop, MetricsLog, TrainOptions, TrainOutcome, LATEST_CHECKPOINT, METRICS_HEADER};
pub use trainer::{checkpoint_train_config, example_step, load_generator, Batch, ExampleOutput, StepMetrics, Trainer};
