//! Grid sweeps over configuration axes.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use fedsim_core::config::{DatasetSource, ExperimentConfig, LinkMode, Protocol};
use fedsim_core::data::LabeledDataset;
use fedsim_core::metrics::{Audit, MetricsRecord, Scope};
use fedsim_core::orchestrator;

use crate::error::{Error, Result};
use crate::metrics_csv::{format_g, write_metrics};
use crate::settings::{apply, SettingsFile};

/// Expands a grid file into run configurations, first axis outermost.
///
/// `pd_offset_db = x` sets `pd_db = pu_db + x` after each combination is
/// applied. IL runs that differ only in link modes are emitted once.
pub fn expand(grid: &SettingsFile) -> Result<Vec<ExperimentConfig>> {
    let mut base = ExperimentConfig::default();
    let mut offset = None;
    for e in grid.apply_fixed(&mut base)? {
        offset = Some(e.value.parse::<f64>().map_err(|_| grid.error(e.line, "pd_offset_db must be a number"))?);
    }
    let mut configs = vec![base];
    for axis in &grid.axes {
        let values = SettingsFile::axis_values(axis);
        if values.is_empty() {
            return Err(grid.error(axis.line, format!("axis `{}` has no values", axis.key)));
        }
        let mut next = Vec::with_capacity(configs.len() * values.len());
        for c in &configs {
            for v in &values {
                let mut c = c.clone();
                apply(&mut c, &axis.key, v).map_err(|m| grid.error(axis.line, m))?;
                next.push(c);
            }
        }
        configs = next;
    }
    let mut out: Vec<ExperimentConfig> = Vec::with_capacity(configs.len());
    for mut c in configs {
        if let Some(x) = offset {
            c.pd_db = c.pu_db + x;
        }
        if c.protocol == Protocol::Il {
            c.uplink_mode = LinkMode::Digital;
            c.downlink_mode = LinkMode::Digital;
            if out.contains(&c) {
                continue;
            }
        }
        c.validate().map_err(|e| grid.error(0, e.to_string()))?;
        out.push(c);
    }
    Ok(out)
}

/// File stem identifying a run inside a sweep directory.
pub fn run_name(index: usize, c: &ExperimentConfig) -> String {
    format!(
        "run{index:04}_{}_{}{}_T{}_pu{}_pd{}_seed{}",
        c.protocol.as_str().to_ascii_lowercase(),
        c.uplink_mode.code().to_ascii_lowercase(),
        c.downlink_mode.code().to_ascii_lowercase(),
        c.channel_uses,
        format_g(c.pu_db),
        format_g(c.pd_db),
        c.master_seed
    )
}

#[derive(Debug, Clone, Default)]
pub struct SweepSummary {
    pub runs: usize,
    pub audit: Audit,
    /// Final-iteration averaged record of every run.
    pub finals: Vec<MetricsRecord>,
}

fn cached_dataset<'a>(
    cache: &'a mut HashMap<String, LabeledDataset>,
    c: &ExperimentConfig,
) -> Result<&'a LabeledDataset> {
    let key = match &c.dataset {
        DatasetSource::Idx { images, labels } => format!("idx:{images},{labels}"),
        DatasetSource::Synthetic(s) => {
            format!("syn:{:?}:{}:{}:{}", s, c.master_seed, c.devices * c.samples_per_device, c.test_samples)
        }
    };
    if !cache.contains_key(&key) {
        cache.insert(key.clone(), crate::load_dataset(c)?);
    }
    Ok(&cache[&key])
}

/// Runs every configuration, writing one CSV per run plus `summary.csv`
/// into `out`. `progress` is called after each run.
pub fn run_all(
    configs: &[ExperimentConfig],
    out: &Path,
    mut progress: impl FnMut(usize, &str),
) -> Result<SweepSummary> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut cache = HashMap::new();
    let mut summary = SweepSummary::default();
    for (i, c) in configs.iter().enumerate() {
        let data = cached_dataset(&mut cache, c)?;
        let part = orchestrator::split(c, data)?;
        let result = orchestrator::run_experiment(c, &part)?;
        let name = run_name(i, c);
        write_metrics(&result.records, &out.join(format!("{name}.csv")))?;
        summary.audit.merge(&result.audit);
        if let Some(last) = result.records.iter().rev().find(|r| r.scope == Scope::Average) {
            summary.finals.push(last.clone());
        }
        summary.runs += 1;
        progress(i, &name);
    }
    write_metrics(&summary.finals, &out.join("summary.csv"))?;
    Ok(summary)
}

pub fn run_grid(grid: &Path, out: &Path, progress: impl FnMut(usize, &str)) -> Result<SweepSummary> {
    let configs = expand(&SettingsFile::read(grid)?)?;
    run_all(&configs, out, progress)
}
