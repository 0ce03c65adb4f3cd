//! Host side of the simulator: IDX datasets, configuration files, metrics
//! CSV files, grid sweeps and the self-test behind `fedsim selftest`.

mod error;
pub mod idx;
pub mod metrics_csv;
pub mod selftest;
pub mod settings;
pub mod sweep;

use std::path::Path;

use fedsim_core::config::{DatasetSource, ExperimentConfig};
use fedsim_core::data::{LabeledDataset, Partition};
use fedsim_core::orchestrator::{self, RunOutput};

pub use error::{Error, Result};

/// Loads the full (unpartitioned) dataset. Synthetic data is generated for
/// the config's devices, shard size and test size.
pub fn load_dataset(config: &ExperimentConfig) -> Result<LabeledDataset> {
    match &config.dataset {
        DatasetSource::Synthetic(spec) => {
            let points = config.devices * config.samples_per_device + config.test_samples;
            let mut rng = fedsim_core::rng::stream(config.master_seed, fedsim_core::rng::Stream::Data, &[]);
            Ok(spec.generate(points, &mut rng)?)
        }
        DatasetSource::Idx { images, labels } => idx::load_idx(Path::new(images), Path::new(labels)),
    }
}

pub fn prepare(config: &ExperimentConfig) -> Result<Partition> {
    Ok(orchestrator::split(config, &load_dataset(config)?)?)
}

/// Loads the data and runs one experiment.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    Ok(orchestrator::run_experiment(config, &prepare(config)?)?)
}
