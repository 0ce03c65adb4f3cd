//! Experiment description.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::analog::AmpConfig;
use crate::compression::QuantizerMeta;
use crate::data::SyntheticSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    Il,
    Fl,
    Fd,
    Hfd,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [Protocol::Il, Protocol::Fl, Protocol::Fd, Protocol::Hfd];

    pub fn as_str(&self) -> &'static str {
        match self {
            Protocol::Il => "IL",
            Protocol::Fl => "FL",
            Protocol::Fd => "FD",
            Protocol::Hfd => "HFD",
        }
    }

    /// Whether the protocol exchanges logits rather than weights.
    pub fn is_distillation(&self) -> bool {
        matches!(self, Protocol::Fd | Protocol::Hfd)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "il" => Ok(Protocol::Il),
            "fl" => Ok(Protocol::Fl),
            "fd" => Ok(Protocol::Fd),
            "hfd" => Ok(Protocol::Hfd),
            _ => Err(Error::config(format!("unknown protocol `{s}`"))),
        }
    }
}

/// How one direction of the exchange is carried.
///
/// `Ideal` bypasses the channel entirely: exact, noiseless, unlimited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkMode {
    Digital,
    Analog,
    Ideal,
}

impl LinkMode {
    pub fn code(&self) -> char {
        match self {
            LinkMode::Digital => 'D',
            LinkMode::Analog => 'A',
            LinkMode::Ideal => 'I',
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            LinkMode::Digital => "digital",
            LinkMode::Analog => "analog",
            LinkMode::Ideal => "ideal",
        }
    }

    fn from_code(c: char) -> Option<Self> {
        match c.to_ascii_lowercase() {
            'd' => Some(LinkMode::Digital),
            'a' => Some(LinkMode::Analog),
            'i' => Some(LinkMode::Ideal),
            _ => None,
        }
    }

    /// Parses a two-letter uplink/downlink pair such as `da`.
    pub fn parse_pair(s: &str) -> Result<(LinkMode, LinkMode)> {
        let mut chars = s.chars();
        match (chars.next().and_then(Self::from_code), chars.next().and_then(Self::from_code), chars.next()) {
            (Some(u), Some(d), None) => Ok((u, d)),
            _ => Err(Error::config(format!("link must be two of d/a/i (e.g. `da`), got `{s}`"))),
        }
    }
}

impl fmt::Display for LinkMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LinkMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "d" | "digital" => Ok(LinkMode::Digital),
            "a" | "analog" => Ok(LinkMode::Analog),
            "i" | "ideal" => Ok(LinkMode::Ideal),
            _ => Err(Error::config(format!("unknown link mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    Idx { images: String, labels: String },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic(SyntheticSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    pub uplink_mode: LinkMode,
    pub downlink_mode: LinkMode,
    /// Number of devices.
    pub devices: usize,
    /// Channel uses per direction and iteration.
    pub channel_uses: usize,
    pub pu_db: f64,
    pub pd_db: f64,
    pub global_iterations: u32,
    pub step_size: f64,
    pub quant_bits: u32,
    /// Analog FL sparsity; `None` means `⌊4T/5⌋`.
    pub fl_analog_q: Option<usize>,
    pub reg_weight: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub samples_per_device: usize,
    /// Points per device used for the FD logit averages; `None` uses the
    /// whole shard.
    pub logit_sample_size: Option<usize>,
    /// HFD distillation steps before the local epochs.
    pub hfd_distill_steps: usize,
    pub test_samples: usize,
    pub master_seed: u64,
    pub dataset: DatasetSource,
    pub hidden: Vec<usize>,
    /// Receiver noise; off only for oracle comparisons.
    pub noise: bool,
    pub amp: AmpConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            protocol: Protocol::Fl,
            uplink_mode: LinkMode::Digital,
            downlink_mode: LinkMode::Digital,
            devices: 10,
            channel_uses: 1000,
            pu_db: 0.0,
            pd_db: 10.0,
            global_iterations: 10,
            step_size: 0.001,
            quant_bits: 16,
            fl_analog_q: None,
            reg_weight: 0.5,
            local_epochs: 25,
            batch_size: 1,
            samples_per_device: 64,
            logit_sample_size: None,
            hfd_distill_steps: 300,
            test_samples: 1000,
            master_seed: 0,
            dataset: DatasetSource::default(),
            hidden: vec![64, 32],
            noise: true,
            amp: AmpConfig { kappa: 2.5, ..AmpConfig::default() },
        }
    }
}

impl ExperimentConfig {
    pub fn pu_linear(&self) -> f64 {
        crate::math::db_to_linear(self.pu_db)
    }

    pub fn pd_linear(&self) -> f64 {
        crate::math::db_to_linear(self.pd_db)
    }

    /// Sparsity of analog FL for a model with `params` weights.
    pub fn analog_q(&self, params: usize) -> usize {
        self.fl_analog_q.unwrap_or(4 * self.channel_uses / 5).min(params)
    }

    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("devices", self.devices),
            ("channel_uses", self.channel_uses),
            ("global_iterations", self.global_iterations as usize),
            ("local_epochs", self.local_epochs),
            ("batch_size", self.batch_size),
            ("samples_per_device", self.samples_per_device),
            ("test_samples", self.test_samples),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("{name} must be positive")));
        }
        if !self.pu_db.is_finite() || !self.pd_db.is_finite() {
            return Err(Error::config("SNR values must be finite"));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::config("step_size must be positive and finite"));
        }
        if !(0.0..=1.0).contains(&self.reg_weight) {
            return Err(Error::config("reg_weight must lie in [0, 1]"));
        }
        if self.quant_bits == 0 || self.quant_bits > QuantizerMeta::MAX_BITS {
            return Err(Error::config(format!("quant_bits must lie in 1..={}", QuantizerMeta::MAX_BITS)));
        }
        if self.fl_analog_q == Some(0) || self.logit_sample_size == Some(0) {
            return Err(Error::config("fl_analog_q and logit_sample_size must be positive when set"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("hidden layer widths must be positive"));
        }
        if let DatasetSource::Synthetic(s) = &self.dataset {
            if s.classes < 2 || s.dim == 0 {
                return Err(Error::config("synthetic data needs at least two classes and one dimension"));
            }
        }
        Ok(())
    }

    /// Checks the parts that depend on the class count of the data.
    pub fn validate_for(&self, classes: usize) -> Result<()> {
        self.validate()?;
        let analog = self.uplink_mode == LinkMode::Analog || self.downlink_mode == LinkMode::Analog;
        if self.protocol.is_distillation() && analog && 2 * self.channel_uses < classes * classes {
            return Err(Error::config(format!(
                "analog {} needs 2T >= L^2 ({} < {})",
                self.protocol,
                2 * self.channel_uses,
                classes * classes
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_names() {
        assert_eq!("HFD".parse::<Protocol>().unwrap(), Protocol::Hfd);
        assert!("fx".parse::<Protocol>().is_err());
        assert_eq!(LinkMode::parse_pair("da").unwrap(), (LinkMode::Digital, LinkMode::Analog));
        assert_eq!(LinkMode::parse_pair("II").unwrap(), (LinkMode::Ideal, LinkMode::Ideal));
        assert!(LinkMode::parse_pair("d").is_err());
        assert!(LinkMode::parse_pair("dda").is_err());
        assert!(LinkMode::parse_pair("dx").is_err());
    }

    #[test]
    fn validation() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert!(ExperimentConfig { devices: 0, ..cfg.clone() }.validate().is_err());
        assert!(ExperimentConfig { pu_db: f64::NAN, ..cfg.clone() }.validate().is_err());
        assert!(ExperimentConfig { quant_bits: 54, ..cfg.clone() }.validate().is_err());

        let fd =
            ExperimentConfig { protocol: Protocol::Fd, uplink_mode: LinkMode::Analog, channel_uses: 49, ..cfg.clone() };
        assert!(matches!(fd.validate_for(10), Err(Error::Config(_))));
        ExperimentConfig { channel_uses: 50, ..fd.clone() }.validate_for(10).unwrap();
        // the constraint only concerns analog logit exchange
        ExperimentConfig { protocol: Protocol::Fl, ..fd }.validate_for(10).unwrap();
    }

    #[test]
    fn analog_q_default() {
        let cfg = ExperimentConfig { channel_uses: 100, ..Default::default() };
        assert_eq!(cfg.analog_q(10_000), 80);
        assert_eq!(cfg.analog_q(50), 50);
        assert_eq!(ExperimentConfig { fl_analog_q: Some(7), ..cfg }.analog_q(100), 7);
    }
}
