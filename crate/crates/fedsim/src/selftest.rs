//! Quick property checks run by `fedsim selftest`.

use fedsim_core::analog::{cs_decode, AmpConfig, ProjectionMatrix, RepetitionCode};
use fedsim_core::channel::Direction;
use fedsim_core::compression::ErrorAccumulator;
use fedsim_core::config::{DatasetSource, ExperimentConfig, LinkMode, Protocol};
use fedsim_core::data::SyntheticSpec;
use fedsim_core::digital::{fl_digital_decode, fl_digital_encode, BitBudget};
use fedsim_core::learning::{regularized_loss, sgd_step, Architecture, LogitTable, ModelWeights};
use fedsim_core::orchestrator::{run_experiment, synthetic_partition};
use fedsim_core::rng::{gaussian, stream, Stream};

use crate::metrics_csv::write_records;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, result: Result<String, String>) -> Check {
    match result {
        Ok(detail) => Check { name, passed: true, detail },
        Err(detail) => Check { name, passed: false, detail },
    }
}

fn gradient() -> Result<String, String> {
    let arch = Architecture::mlp(4, &[5], 3).map_err(|e| e.to_string())?;
    let mut rng = stream(11, Stream::Init, &[]);
    let w = ModelWeights::init(arch, &mut rng);
    let spec = SyntheticSpec { classes: 3, dim: 4, separation: 0.4, noise: 0.2 };
    let data = spec.generate(6, &mut rng).map_err(|e| e.to_string())?;
    let target = LogitTable::from_values(3, (0..9).map(|_| gaussian(&mut rng)).collect()).unwrap();
    let batch: Vec<usize> = (0..6).collect();
    let mut stepped = w.clone();
    sgd_step(&mut stepped, &data, &batch, 1.0, Some(&target), 0.5).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for i in 0..w.len() {
        let analytic = w.params()[i] - stepped.params()[i];
        let h = 1e-6;
        let mut p = w.params().to_vec();
        p[i] += h;
        let up = ModelWeights::from_params(w.arch().clone(), p.clone()).unwrap();
        p[i] -= 2.0 * h;
        let down = ModelWeights::from_params(w.arch().clone(), p).unwrap();
        let loss = |m: &ModelWeights| regularized_loss(m, &data, &batch, Some(&target), 0.5).unwrap();
        let numeric = (loss(&up) - loss(&down)) / (2.0 * h);
        worst = worst.max((analytic - numeric).abs() / numeric.abs().max(analytic.abs()).max(1e-8));
    }
    if worst < 1e-4 {
        Ok(format!("max relative error {worst:.2e}"))
    } else {
        Err(format!("relative error {worst:.2e}"))
    }
}

fn telescoping() -> Result<String, String> {
    let mut rng = stream(12, Stream::Train, &[]);
    let dim = 200;
    let mut acc = ErrorAccumulator::new(dim);
    let budget = BitBudget::new(Direction::Uplink, Some(0), 120.0).unwrap();
    let (mut sent, mut total) = (vec![0.0; dim], vec![0.0; dim]);
    for _ in 0..100 {
        let u: Vec<f64> = (0..dim).map(|_| gaussian(&mut rng)).collect();
        let p = fl_digital_encode(&u, &mut acc, &budget, 16).map_err(|e| e.to_string())?;
        let d = fl_digital_decode(&p, dim).map_err(|e| e.to_string())?;
        for i in 0..dim {
            sent[i] += d[i];
            total[i] += u[i];
        }
    }
    let err: f64 = (0..dim).map(|i| (sent[i] + acc.residual()[i] - total[i]).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = total.iter().map(|v| v * v).sum::<f64>().sqrt();
    if err <= 1e-6 * norm {
        Ok(format!("relative gap {:.2e}", err / norm))
    } else {
        Err(format!("gap {err}"))
    }
}

fn recovery() -> Result<String, String> {
    let a = ProjectionMatrix::new(200, 500, 13).map_err(|e| e.to_string())?;
    let mut x = vec![0.0; 500];
    let mut rng = stream(13, Stream::Data, &[]);
    for i in (0..500).step_by(37) {
        x[i] = gaussian(&mut rng);
    }
    let est = cs_decode(&a, &a.apply(&x), 14, &AmpConfig::default()).map_err(|e| e.to_string())?;
    let e: f64 = est.iter().zip(&x).map(|(p, q)| (p - q).powi(2)).sum();
    let nmse = e / x.iter().map(|v| v * v).sum::<f64>();
    if nmse <= 1e-3 {
        Ok(format!("NMSE {nmse:.2e}"))
    } else {
        Err(format!("NMSE {nmse:.2e}"))
    }
}

fn repetition() -> Result<String, String> {
    let code = RepetitionCode::new(4, 1).unwrap();
    let mut rng = stream(14, Stream::UplinkNoise, &[]);
    let trials = 20_000;
    let mut var = 0.0;
    for _ in 0..trials {
        let v: Vec<f64> = (0..4).map(|_| gaussian(&mut rng)).collect();
        var += code.decode(&v).unwrap()[0].powi(2);
    }
    var /= trials as f64;
    if (var * 4.0 - 1.0).abs() < 0.1 {
        Ok(format!("variance {var:.4} at rho=4"))
    } else {
        Err(format!("variance {var}"))
    }
}

fn small_runs() -> Result<String, String> {
    let mut checks = 0;
    let mut violations = 0;
    for protocol in [Protocol::Fl, Protocol::Fd, Protocol::Hfd] {
        for (u, d) in [(LinkMode::Digital, LinkMode::Digital), (LinkMode::Analog, LinkMode::Analog)] {
            let cfg = ExperimentConfig {
                protocol,
                uplink_mode: u,
                downlink_mode: d,
                devices: 4,
                channel_uses: 60,
                global_iterations: 2,
                samples_per_device: 16,
                test_samples: 50,
                hidden: vec![8],
                dataset: DatasetSource::Synthetic(SyntheticSpec { classes: 4, dim: 6, separation: 0.3, noise: 0.2 }),
                ..Default::default()
            };
            let part = synthetic_partition(&cfg).map_err(|e| e.to_string())?;
            let a = run_experiment(&cfg, &part).map_err(|e| e.to_string())?;
            let b = run_experiment(&cfg, &part).map_err(|e| e.to_string())?;
            let (mut ca, mut cb) = (Vec::new(), Vec::new());
            write_records(&a.records, &mut ca).map_err(|e| e.to_string())?;
            write_records(&b.records, &mut cb).map_err(|e| e.to_string())?;
            if ca != cb {
                return Err(format!("{protocol} {}{} is not deterministic", u.code(), d.code()));
            }
            checks += a.audit.budget_checks + a.audit.power_checks;
            violations += a.audit.violations();
        }
    }
    if violations == 0 {
        Ok(format!("{checks} budget/power checks, deterministic output"))
    } else {
        Err(format!("{violations} violations"))
    }
}

pub fn run() -> Vec<Check> {
    vec![
        check("gradient vs finite differences", gradient()),
        check("error feedback telescopes", telescoping()),
        check("AMP recovers a sparse vector", recovery()),
        check("repetition averaging", repetition()),
        check("budgets, power and determinism", small_runs()),
    ]
}
