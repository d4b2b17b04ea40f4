//! Experiment orchestration: datasets, tensor files, attack matrices,
//! reports and visualizations.

pub mod dataset;
pub mod experiment;
pub mod matrix;
pub mod report;
pub mod tensorfile;
pub mod viz;

pub use dataset::{dataset_checksum, generate_toy_examples, load_dataset, make_toy_dataset, Dataset, DatasetManifest};
pub use matrix::{run_matrix, MatrixOptions, NamedModel, Source};
pub use report::{mean_rate, Count, DenominatorPolicy, EvalReport};
pub use tensorfile::{load_tensor, save_tensor};
pub use viz::{visualize_gradient_stripes, visualize_perturbation, write_pgm, write_ppm};
