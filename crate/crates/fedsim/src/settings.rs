//! Flat `key = value` configuration files.
//!
//! Keys are the [`ExperimentConfig`] field names; the short names used on the
//! command line (`K`, `T`, `alpha`, `b`, `seed`, `iters`, `link`, ...) are
//! accepted too. `#` starts a comment. A `[sweep]` line switches to axis
//! definitions, where each value is a whitespace-separated list.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use fedsim_core::config::{DatasetSource, ExperimentConfig, LinkMode, Protocol};
use fedsim_core::data::SyntheticSpec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SettingsFile {
    pub origin: String,
    pub fixed: Vec<Entry>,
    /// Sweep axes, values still joined; see [`SettingsFile::axis_values`].
    pub axes: Vec<Entry>,
}

impl SettingsFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut out = SettingsFile { origin: origin.to_string(), ..Default::default() };
        let mut in_sweep = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            if line == "[sweep]" {
                in_sweep = true;
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(out.error(i + 1, format!("expected `key = value`, got `{line}`")));
            };
            let entry = Entry { key: key.trim().to_string(), value: value.trim().to_string(), line: i + 1 };
            if entry.key.is_empty() {
                return Err(out.error(i + 1, "empty key"));
            }
            if in_sweep {
                out.axes.push(entry)
            } else {
                out.fixed.push(entry)
            }
        }
        Ok(out)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn error(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Settings { origin: self.origin.clone(), line, message: message.into() }
    }

    pub fn axis_values(entry: &Entry) -> Vec<&str> {
        entry.value.split_whitespace().collect()
    }

    /// Applies the fixed entries on top of `base`. Sweep-only keys are
    /// skipped and returned for the caller.
    pub fn apply_fixed(&self, base: &mut ExperimentConfig) -> Result<Vec<Entry>> {
        let mut extra = Vec::new();
        for e in &self.fixed {
            if SWEEP_KEYS.contains(&e.key.as_str()) {
                extra.push(e.clone());
                continue;
            }
            apply(base, &e.key, &e.value).map_err(|m| self.error(e.line, m))?;
        }
        Ok(extra)
    }

    /// A single run description; rejects `[sweep]` sections.
    pub fn to_config(&self) -> Result<ExperimentConfig> {
        if let Some(a) = self.axes.first() {
            return Err(self.error(a.line, "sweep axes are only valid in a grid file"));
        }
        let mut cfg = ExperimentConfig::default();
        if let Some(e) = self.apply_fixed(&mut cfg)?.first() {
            return Err(self.error(e.line, format!("`{}` is only valid in a grid file", e.key)));
        }
        Ok(cfg)
    }
}

/// Keys that only make sense for a sweep.
pub const SWEEP_KEYS: &[&str] = &["pd_offset_db"];

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("`{key}`: cannot parse `{value}`"))
}

fn flag(key: &str, value: &str) -> Result<bool, String> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(format!("`{key}`: expected a boolean, got `{value}`")),
    }
}

/// Parses `synthetic` or `idx:<images>,<labels>`.
pub fn parse_dataset(value: &str) -> Result<DatasetSource, String> {
    if value == "synthetic" {
        return Ok(DatasetSource::Synthetic(SyntheticSpec::default()));
    }
    if let Some(rest) = value.strip_prefix("idx:") {
        if let Some((images, labels)) = rest.split_once(',') {
            if !images.is_empty() && !labels.is_empty() {
                return Ok(DatasetSource::Idx { images: images.to_string(), labels: labels.to_string() });
            }
        }
    }
    Err(format!("dataset must be `synthetic` or `idx:<images>,<labels>`, got `{value}`"))
}

fn synthetic<'a>(cfg: &'a mut ExperimentConfig, key: &str) -> Result<&'a mut SyntheticSpec, String> {
    match &mut cfg.dataset {
        DatasetSource::Synthetic(s) => Ok(s),
        DatasetSource::Idx { .. } => Err(format!("`{key}` only applies to the synthetic dataset")),
    }
}

/// Sets one field of `cfg` from its textual value.
pub fn apply(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<(), String> {
    let err = |e: fedsim_core::Error| e.to_string();
    match key {
        "protocol" => cfg.protocol = Protocol::from_str(value).map_err(err)?,
        "uplink_mode" => cfg.uplink_mode = LinkMode::from_str(value).map_err(err)?,
        "downlink_mode" => cfg.downlink_mode = LinkMode::from_str(value).map_err(err)?,
        "link" => (cfg.uplink_mode, cfg.downlink_mode) = LinkMode::parse_pair(value).map_err(err)?,
        "devices" | "K" | "k" => cfg.devices = num(key, value)?,
        "channel_uses" | "T" => cfg.channel_uses = num(key, value)?,
        "pu_db" | "P_U_dB" => cfg.pu_db = num(key, value)?,
        "pd_db" | "P_D_dB" => cfg.pd_db = num(key, value)?,
        "global_iterations" | "iters" => cfg.global_iterations = num(key, value)?,
        "step_size" | "alpha" => cfg.step_size = num(key, value)?,
        "quant_bits" | "b" => cfg.quant_bits = num(key, value)?,
        "fl_analog_q" => cfg.fl_analog_q = if value == "auto" { None } else { Some(num(key, value)?) },
        "reg_weight" => cfg.reg_weight = num(key, value)?,
        "local_epochs" => cfg.local_epochs = num(key, value)?,
        "batch_size" => cfg.batch_size = num(key, value)?,
        "samples_per_device" => cfg.samples_per_device = num(key, value)?,
        "logit_sample_size" => cfg.logit_sample_size = if value == "all" { None } else { Some(num(key, value)?) },
        "hfd_distill_steps" => cfg.hfd_distill_steps = num(key, value)?,
        "test_samples" => cfg.test_samples = num(key, value)?,
        "master_seed" | "seed" => cfg.master_seed = num(key, value)?,
        "dataset" => {
            let parsed = parse_dataset(value)?;
            // keep synthetic parameters that were set earlier
            if !(matches!(parsed, DatasetSource::Synthetic(_)) && matches!(cfg.dataset, DatasetSource::Synthetic(_))) {
                cfg.dataset = parsed;
            }
        }
        "synthetic_classes" => synthetic(cfg, key)?.classes = num(key, value)?,
        "synthetic_dim" => synthetic(cfg, key)?.dim = num(key, value)?,
        "synthetic_separation" => synthetic(cfg, key)?.separation = num(key, value)?,
        "synthetic_noise" => synthetic(cfg, key)?.noise = num(key, value)?,
        "hidden" => {
            cfg.hidden = if value == "none" {
                Vec::new()
            } else {
                value.split(',').map(|v| num(key, v.trim())).collect::<Result<_, _>>()?
            }
        }
        "noise" => cfg.noise = flag(key, value)?,
        "amp_kappa" => cfg.amp.kappa = num(key, value)?,
        "amp_max_iter" => cfg.amp.max_iter = num(key, value)?,
        "amp_tol" => cfg.amp.tol = num(key, value)?,
        "amp_divergence" => cfg.amp.divergence = num(key, value)?,
        _ => return Err(format!("unknown key `{key}`")),
    }
    Ok(())
}
