//! Protocol driver: local training, information exchange, evaluation.
//!
//! Random streams (see [`Stream`]) are keyed as follows, with `i` the
//! zero-based global iteration and `k` the device index:
//!
//! | purpose | tags |
//! |---|---|
//! | synthetic data / partition | none |
//! | initial weights | FL: none (shared `w_0`); others: `[k]` |
//! | local batches | `[k, i]`, one shuffle of `0..n` per local epoch |
//! | FD logit sample | `[k, i]` |
//! | fading, uplink noise, downlink noise | `[i]` |
//! | FL projections | none |

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::RngCore;

use crate::analog::{self, ProjectionMatrix};
use crate::channel::ChannelState;
use crate::compression::ErrorAccumulator;
use crate::config::{DatasetSource, ExperimentConfig, LinkMode, Protocol};
use crate::data::{partition, LabeledDataset, Partition};
use crate::digital;
use crate::learning::{
    average_logits, evaluate_accuracy, hfd_distill_step, leave_one_out, local_covariate_means, logits_at_covariates,
    mixed_up_covariates, sgd_step, Architecture, CovariateTable, LogitTable, ModelWeights,
};
use crate::metrics::{Audit, MetricsRecord, Scope};
use crate::rng::{derive_seed, stream, SimRng, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    pub audit: Audit,
    pub final_weights: Vec<ModelWeights>,
}

/// Generates the synthetic dataset of `config` (shards plus test set).
pub fn synthetic_partition(config: &ExperimentConfig) -> Result<Partition> {
    let DatasetSource::Synthetic(spec) = &config.dataset else {
        return Err(Error::config("dataset source is not synthetic"));
    };
    let points = config.devices * config.samples_per_device + config.test_samples;
    let data = spec.generate(points, &mut stream(config.master_seed, Stream::Data, &[]))?;
    split(config, &data)
}

/// Shards `data` for `config`, holding out up to `test_samples` points.
pub fn split(config: &ExperimentConfig, data: &LabeledDataset) -> Result<Partition> {
    config.validate()?;
    let mut rng = stream(config.master_seed, Stream::Partition, &[]);
    partition(data, config.devices, config.samples_per_device, config.test_samples, &mut rng)
}

struct Device {
    shard: LabeledDataset,
    weights: ModelWeights,
    /// FL: weights at the start of the current local phase.
    anchor: Option<ModelWeights>,
    up_acc: Option<ErrorAccumulator>,
    target: Option<LogitTable>,
    mixed: Option<CovariateTable>,
}

/// Per-direction bit counters for one iteration.
struct Bits {
    up: Vec<f64>,
    down: f64,
}

/// What the server holds after the uplink.
struct Uplinked<T> {
    avg: Option<T>,
    /// Devices whose payload entered the average.
    included: Vec<bool>,
}

impl<T> Uplinked<T> {
    fn contributors(&self) -> usize {
        self.included.iter().filter(|&&b| b).count()
    }
}

struct Channel<'a> {
    cfg: &'a ExperimentConfig,
    state: ChannelState,
    up_noise: SimRng,
    down_noise: SimRng,
    audit: Audit,
    bits: Bits,
}

impl Channel<'_> {
    fn up_noise(&mut self) -> Option<&mut dyn RngCore> {
        if self.cfg.noise {
            Some(&mut self.up_noise)
        } else {
            None
        }
    }

    fn down_noise(&mut self) -> Option<&mut dyn RngCore> {
        if self.cfg.noise {
            Some(&mut self.down_noise)
        } else {
            None
        }
    }
}

struct FlLinks {
    up: Option<ProjectionMatrix>,
    down: Option<ProjectionMatrix>,
    q: usize,
    server_acc: ErrorAccumulator,
}

/// Runs `config` on an already partitioned dataset.
pub fn run_experiment(config: &ExperimentConfig, data: &Partition) -> Result<RunOutput> {
    let first = data.shards.first().ok_or_else(|| Error::config("no device shards"))?;
    let (dim, classes) = (first.dim(), first.classes());
    config.validate_for(classes)?;
    if data.shards.len() != config.devices {
        return Err(Error::config("shard count does not match the device count"));
    }
    if data.shards.iter().chain(core::iter::once(&data.test)).any(|s| s.dim() != dim || s.classes() != classes) {
        return Err(Error::config("shards and test set disagree on shape"));
    }
    let arch = Architecture::mlp(dim, &config.hidden, classes)?;
    let seed = config.master_seed;
    let shared = ModelWeights::init(arch.clone(), &mut stream(seed, Stream::Init, &[]));
    let mut devices: Vec<Device> = data
        .shards
        .iter()
        .enumerate()
        .map(|(k, shard)| {
            let weights = match config.protocol {
                Protocol::Fl => shared.clone(),
                _ => ModelWeights::init(arch.clone(), &mut stream(seed, Stream::Init, &[k as u64])),
            };
            let fl = config.protocol == Protocol::Fl;
            Device {
                shard: shard.clone(),
                anchor: fl.then(|| weights.clone()),
                up_acc: fl.then(|| ErrorAccumulator::new(arch.param_count())),
                weights,
                target: None,
                mixed: None,
            }
        })
        .collect();

    if config.protocol == Protocol::Hfd {
        // offline phase over an ideal link
        let locals = devices.iter().map(|d| local_covariate_means(&d.shard, classes)).collect::<Result<Vec<_>>>()?;
        for (d, m) in devices.iter_mut().zip(mixed_up_covariates(&locals)?) {
            d.mixed = Some(m);
        }
    }

    let mut fl = if config.protocol == Protocol::Fl {
        let w = arch.param_count();
        let rows = 2 * config.channel_uses;
        let make = |mode: LinkMode, purpose: Stream| -> Result<Option<ProjectionMatrix>> {
            match mode {
                LinkMode::Analog => Ok(Some(ProjectionMatrix::new(rows, w, derive_seed(seed, purpose, &[]))?)),
                _ => Ok(None),
            }
        };
        Some(FlLinks {
            up: make(config.uplink_mode, Stream::ProjectionUplink)?,
            down: make(config.downlink_mode, Stream::ProjectionDownlink)?,
            q: config.analog_q(w),
            server_acc: ErrorAccumulator::new(w),
        })
    } else {
        None
    };

    let mut audit = Audit::default();
    let mut records = Vec::new();
    for i in 0..config.global_iterations {
        for (k, d) in devices.iter_mut().enumerate() {
            local_phase(config, d, &mut stream(seed, Stream::Train, &[k as u64, i as u64]))?;
        }

        let bits = if config.protocol == Protocol::Il {
            Bits { up: vec![0.0; config.devices], down: 0.0 }
        } else {
            let tag = [i as u64];
            let mut ch = Channel {
                cfg: config,
                state: ChannelState::sample(&mut stream(seed, Stream::Fading, &tag), config.devices, i)?,
                up_noise: stream(seed, Stream::UplinkNoise, &tag),
                down_noise: stream(seed, Stream::DownlinkNoise, &tag),
                audit: Audit::default(),
                bits: Bits { up: vec![0.0; config.devices], down: 0.0 },
            };
            match config.protocol {
                Protocol::Fl => exchange_weights(&mut ch, &mut devices, fl.as_mut().unwrap())?,
                _ => exchange_logits(&mut ch, &mut devices, i)?,
            }
            audit.merge(&ch.audit);
            ch.bits
        };

        let accuracies =
            devices.iter().map(|d| evaluate_accuracy(&d.weights, &data.test)).collect::<Result<Vec<_>>>()?;
        let record = |scope, accuracy, bits_up, bits_down| MetricsRecord {
            iteration: i + 1,
            protocol: config.protocol,
            uplink: config.uplink_mode,
            downlink: config.downlink_mode,
            channel_uses: config.channel_uses,
            pu_db: config.pu_db,
            pd_db: config.pd_db,
            seed,
            scope,
            accuracy,
            bits_up,
            bits_down,
        };
        let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
        records.push(record(Scope::Average, mean, bits.up.iter().sum(), bits.down));
        for (k, acc) in accuracies.iter().enumerate() {
            records.push(record(Scope::Device(k), *acc, bits.up[k], bits.down));
        }
    }
    Ok(RunOutput { records, audit, final_weights: devices.into_iter().map(|d| d.weights).collect() })
}

fn local_phase(cfg: &ExperimentConfig, d: &mut Device, rng: &mut SimRng) -> Result<()> {
    let (alpha, reg) = (cfg.step_size, cfg.reg_weight);
    let sgd_target = match cfg.protocol {
        Protocol::Fd => d.target.as_ref(),
        _ => None,
    };
    if cfg.protocol == Protocol::Hfd {
        if let (Some(target), Some(cov)) = (&d.target, &d.mixed) {
            for _ in 0..cfg.hfd_distill_steps {
                hfd_distill_step(&mut d.weights, cov, target, alpha, reg)?;
            }
        }
    }
    let mut order: Vec<usize> = (0..d.shard.len()).collect();
    for _ in 0..cfg.local_epochs {
        order.shuffle(rng);
        for batch in order.chunks(cfg.batch_size) {
            sgd_step(&mut d.weights, &d.shard, batch, alpha, sgd_target, reg)?;
        }
    }
    Ok(())
}

fn mean_vectors(vs: &[&Vec<f64>]) -> Option<Vec<f64>> {
    let first = vs.first()?;
    let mut out = vec![0.0; first.len()];
    for v in vs {
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += x;
        }
    }
    let n = vs.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Some(out)
}

fn exchange_weights(ch: &mut Channel<'_>, devices: &mut [Device], links: &mut FlLinks) -> Result<()> {
    let cfg = ch.cfg;
    let k_total = devices.len();
    let w = links.server_acc.dim();
    let updates: Vec<Vec<f64>> =
        devices.iter().map(|d| d.weights.delta_from(d.anchor.as_ref().expect("FL device without anchor"))).collect();

    let avg = match cfg.uplink_mode {
        LinkMode::Ideal => mean_vectors(&updates.iter().collect::<Vec<_>>()),
        LinkMode::Digital => {
            let mut received = Vec::new();
            for (k, (u, d)) in updates.iter().zip(devices.iter_mut()).enumerate() {
                let budget =
                    digital::uplink_budget(cfg.channel_uses, k_total, k, ch.state.uplink()[k], cfg.pu_linear());
                let payload = digital::fl_digital_encode(u, d.up_acc.as_mut().unwrap(), &budget, cfg.quant_bits)?;
                ch.audit.check_budget(payload.bit_count(), budget.bits());
                ch.bits.up[k] = payload.bit_count();
                if !payload.is_empty() {
                    received.push(digital::fl_digital_decode(&payload, w)?);
                }
            }
            mean_vectors(&received.iter().collect::<Vec<_>>())
        }
        LinkMode::Analog => {
            let mut accs: Vec<ErrorAccumulator> = devices.iter_mut().map(|d| d.up_acc.take().unwrap()).collect();
            let power = cfg.pu_linear();
            let a = links.up.as_ref().unwrap();
            let state = ch.state.clone();
            let mut audit = Audit::default();
            let sum = analog::fl_analog_uplink(
                &updates,
                &mut accs,
                links.q,
                a,
                &state,
                power,
                cfg.channel_uses,
                ch.up_noise(),
                &cfg.amp,
                &mut audit,
            );
            ch.audit.merge(&audit);
            for (d, acc) in devices.iter_mut().zip(accs) {
                d.up_acc = Some(acc);
            }
            Some(sum?.iter().map(|v| v / k_total as f64).collect())
        }
    };
    let avg = avg.unwrap_or_else(|| vec![0.0; w]);

    let received: Vec<Vec<f64>> = match cfg.downlink_mode {
        LinkMode::Ideal => vec![avg; k_total],
        LinkMode::Digital => {
            let budget = digital::downlink_budget(cfg.channel_uses, ch.state.downlink(), cfg.pd_linear());
            let payload = digital::fl_digital_encode(&avg, &mut links.server_acc, &budget, cfg.quant_bits)?;
            ch.audit.check_budget(payload.bit_count(), budget.bits());
            ch.bits.down = payload.bit_count();
            vec![digital::fl_digital_decode(&payload, w)?; k_total]
        }
        LinkMode::Analog => {
            let state = ch.state.clone();
            let mut audit = Audit::default();
            let out = analog::fl_analog_downlink(
                &avg,
                &mut links.server_acc,
                links.q,
                links.down.as_ref().unwrap(),
                &state,
                cfg.pd_linear(),
                cfg.channel_uses,
                ch.down_noise(),
                &cfg.amp,
                &mut audit,
            );
            ch.audit.merge(&audit);
            out?
        }
    };

    for (d, r) in devices.iter_mut().zip(received) {
        let anchor = d.anchor.as_mut().unwrap();
        anchor.add(&r)?;
        d.weights = anchor.clone();
    }
    Ok(())
}

fn exchange_logits(ch: &mut Channel<'_>, devices: &mut [Device], iteration: u32) -> Result<()> {
    let cfg = ch.cfg;
    let k_total = devices.len();
    let seed = cfg.master_seed;
    let own: Vec<LogitTable> = devices
        .iter()
        .enumerate()
        .map(|(k, d)| match &d.mixed {
            Some(cov) => logits_at_covariates(&d.weights, cov),
            None => {
                let n = cfg.logit_sample_size.unwrap_or(d.shard.len());
                let mut rng = stream(seed, Stream::LogitSample, &[k as u64, iteration as u64]);
                average_logits(&d.weights, &d.shard, n, &mut rng)
            }
        })
        .collect::<Result<_>>()?;
    let classes = own[0].classes();

    let up: Uplinked<LogitTable> = match cfg.uplink_mode {
        LinkMode::Ideal => Uplinked { avg: Some(LogitTable::mean(&own)?), included: vec![true; k_total] },
        LinkMode::Digital => {
            let mut received = Vec::new();
            let mut included = vec![false; k_total];
            for (k, table) in own.iter().enumerate() {
                let budget =
                    digital::uplink_budget(cfg.channel_uses, k_total, k, ch.state.uplink()[k], cfg.pu_linear());
                let payload = digital::fd_digital_encode(table, &budget, cfg.quant_bits)?;
                ch.audit.check_budget(payload.bit_count(), budget.bits());
                ch.bits.up[k] = payload.bit_count();
                if !payload.is_empty() {
                    received.push(digital::fd_digital_decode(&payload, classes)?);
                    included[k] = true;
                }
            }
            let avg = if received.is_empty() { None } else { Some(LogitTable::mean(&received)?) };
            Uplinked { avg, included }
        }
        LinkMode::Analog => {
            let state = ch.state.clone();
            let mut audit = Audit::default();
            let sum =
                analog::fd_analog_uplink(&own, &state, cfg.pu_linear(), cfg.channel_uses, ch.up_noise(), &mut audit);
            ch.audit.merge(&audit);
            Uplinked { avg: Some(sum?.scaled(1.0 / k_total as f64)), included: vec![true; k_total] }
        }
    };
    let n_eff = up.contributors();

    let received: Vec<Option<LogitTable>> = match (&up.avg, cfg.downlink_mode) {
        (None, _) => vec![None; k_total],
        (Some(avg), LinkMode::Ideal) => vec![Some(avg.clone()); k_total],
        (Some(avg), LinkMode::Digital) => {
            let budget = digital::downlink_budget(cfg.channel_uses, ch.state.downlink(), cfg.pd_linear());
            let payload = digital::fd_digital_encode(avg, &budget, cfg.quant_bits)?;
            ch.audit.check_budget(payload.bit_count(), budget.bits());
            ch.bits.down = payload.bit_count();
            let table = (!payload.is_empty()).then(|| digital::fd_digital_decode(&payload, classes)).transpose()?;
            vec![table; k_total]
        }
        (Some(avg), LinkMode::Analog) => {
            let state = ch.state.clone();
            let mut audit = Audit::default();
            let out =
                analog::fd_analog_downlink(avg, &state, cfg.pd_linear(), cfg.channel_uses, ch.down_noise(), &mut audit);
            ch.audit.merge(&audit);
            out?.into_iter().map(Some).collect()
        }
    };

    for (k, (d, r)) in devices.iter_mut().zip(received).enumerate() {
        let Some(r) = r else { continue };
        if !up.included[k] {
            d.target = Some(r);
        } else if n_eff >= 2 {
            let values = leave_one_out(r.flat(), own[k].flat(), n_eff)?;
            d.target = Some(LogitTable::with_mask(classes, values, r.mask().to_vec())?);
        }
        // a lone contributor only hears itself back: keep the previous target
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SyntheticSpec;

    fn small(protocol: Protocol, up: LinkMode, down: LinkMode) -> ExperimentConfig {
        ExperimentConfig {
            protocol,
            uplink_mode: up,
            downlink_mode: down,
            devices: 3,
            channel_uses: 100,
            global_iterations: 2,
            samples_per_device: 16,
            test_samples: 40,
            hidden: vec![8],
            dataset: DatasetSource::Synthetic(SyntheticSpec { classes: 3, dim: 6, separation: 0.4, noise: 0.2 }),
            step_size: 0.05,
            master_seed: 9,
            ..Default::default()
        }
    }

    fn run(cfg: &ExperimentConfig) -> RunOutput {
        run_experiment(cfg, &synthetic_partition(cfg).unwrap()).unwrap()
    }

    #[test]
    fn every_combination_runs_clean() {
        use LinkMode::*;
        for p in Protocol::ALL {
            for (u, d) in [(Digital, Digital), (Digital, Analog), (Analog, Digital), (Analog, Analog), (Ideal, Ideal)] {
                let cfg = small(p, u, d);
                let out = run(&cfg);
                assert_eq!(out.records.len(), 2 * 4, "{p} {u}{d}");
                assert_eq!(out.audit.violations(), 0, "{p} {u}{d}");
                assert!(out.records.iter().all(|r| (0.0..=1.0).contains(&r.accuracy) && r.bits_up >= 0.0));
            }
        }
    }

    #[test]
    fn il_ignores_the_channel() {
        let a = run(&small(Protocol::Il, LinkMode::Digital, LinkMode::Digital));
        let b = run(&ExperimentConfig {
            channel_uses: 7,
            pu_db: -20.0,
            pd_db: 30.0,
            uplink_mode: LinkMode::Analog,
            ..small(Protocol::Il, LinkMode::Digital, LinkMode::Digital)
        });
        let acc = |o: &RunOutput| o.records.iter().map(|r| r.accuracy).collect::<Vec<_>>();
        assert_eq!(acc(&a), acc(&b));
        assert_eq!(a.final_weights, b.final_weights);
    }

    #[test]
    fn single_device_fl_over_ideal_links_is_il() {
        let fl = ExperimentConfig { devices: 1, ..small(Protocol::Fl, LinkMode::Ideal, LinkMode::Ideal) };
        let il = ExperimentConfig { protocol: Protocol::Il, ..fl.clone() };
        let (a, b) = (run(&fl), run(&il));
        // FL starts from the shared initializer, IL from the per-device one
        let part = synthetic_partition(&il).unwrap();
        let arch = Architecture::mlp(6, &[8], 3).unwrap();
        let w0 = ModelWeights::init(arch, &mut stream(9, Stream::Init, &[]));
        let mut d = Device {
            shard: part.shards[0].clone(),
            weights: w0,
            anchor: None,
            up_acc: None,
            target: None,
            mixed: None,
        };
        for i in 0..2u64 {
            local_phase(&il, &mut d, &mut stream(9, Stream::Train, &[0, i])).unwrap();
        }
        let dist: f64 = a.final_weights[0].params().iter().zip(d.weights.params()).map(|(x, y)| (x - y).abs()).sum();
        assert!(dist < 1e-12, "{dist}");
        assert_eq!(b.records.len(), a.records.len());
    }

    #[test]
    fn analog_fd_rejects_short_slots_before_training() {
        let cfg = ExperimentConfig { channel_uses: 4, ..small(Protocol::Fd, LinkMode::Analog, LinkMode::Digital) };
        let part = synthetic_partition(&cfg).unwrap();
        assert!(matches!(run_experiment(&cfg, &part), Err(Error::Config(_))));
    }

    #[test]
    fn deterministic() {
        let cfg = small(Protocol::Hfd, LinkMode::Analog, LinkMode::Digital);
        assert_eq!(run(&cfg), run(&cfg));
    }

    #[test]
    fn symmetric_fd_targets_match_own_tables() {
        // identical shards and identical initial weights: every exchanged
        // average equals each device's own table
        let cfg = small(Protocol::Fd, LinkMode::Ideal, LinkMode::Ideal);
        let part = synthetic_partition(&cfg).unwrap();
        let same = Partition { shards: vec![part.shards[0].clone(); 3], test: part.test.clone() };
        let arch = Architecture::mlp(6, &[8], 3).unwrap();
        let w = ModelWeights::init(arch, &mut stream(1, Stream::Init, &[]));
        let mut devices: Vec<Device> = same
            .shards
            .iter()
            .map(|s| Device {
                shard: s.clone(),
                weights: w.clone(),
                anchor: None,
                up_acc: None,
                target: None,
                mixed: None,
            })
            .collect();
        let mut ch = Channel {
            cfg: &cfg,
            state: ChannelState::sample(&mut stream(1, Stream::Fading, &[]), 3, 0).unwrap(),
            up_noise: stream(1, Stream::UplinkNoise, &[]),
            down_noise: stream(1, Stream::DownlinkNoise, &[]),
            audit: Audit::default(),
            bits: Bits { up: vec![0.0; 3], down: 0.0 },
        };
        exchange_logits(&mut ch, &mut devices, 0).unwrap();
        let own = average_logits(&w, &same.shards[0], 1000, &mut stream(0, Stream::LogitSample, &[])).unwrap();
        for d in &devices {
            let t = d.target.as_ref().unwrap();
            for (a, b) in t.flat().iter().zip(own.flat()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
