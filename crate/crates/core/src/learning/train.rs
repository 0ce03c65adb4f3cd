use alloc::vec;
use alloc::vec::Vec;

use super::loss::{cross_entropy, cross_entropy_grad, distillation_grad, softmax};
use super::model::ModelWeights;
use super::tables::{CovariateTable, LogitTable};
use crate::data::LabeledDataset;
use crate::{Error, Result};

fn target_probs(table: &LogitTable) -> Vec<Option<Vec<f64>>> {
    (0..table.classes()).map(|t| table.is_present(t).then(|| softmax(table.row(t)))).collect()
}

fn check_step(alpha: f64, reg_weight: f64) -> Result<()> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::arg("step size must be a non-negative finite number"));
    }
    if !(0.0..=1.0).contains(&reg_weight) {
        return Err(Error::arg("regularization weight must lie in [0, 1]"));
    }
    Ok(())
}

fn apply(w: &mut ModelWeights, grad: &[f64], alpha: f64) -> Result<()> {
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    for (p, g) in w.params_mut().iter_mut().zip(grad) {
        *p -= alpha * g;
    }
    Ok(())
}

fn check_batch(w: &ModelWeights, data: &LabeledDataset, batch: &[usize]) -> Result<()> {
    if data.dim() != w.arch().input() || data.classes() > w.arch().classes() {
        return Err(Error::arg("dataset shape does not match the model"));
    }
    if batch.iter().any(|&i| i >= data.len()) {
        return Err(Error::arg("batch index out of range"));
    }
    Ok(())
}

/// Batch mean of `(1−r)·φ(t, t̂(c|w)) + r·φ(t̂(c|w), t̂(s_t))`.
///
/// Without a target table, or for a label whose target row is absent, the
/// loss is the plain cross-entropy.
pub fn regularized_loss(
    w: &ModelWeights,
    data: &LabeledDataset,
    batch: &[usize],
    target: Option<&LogitTable>,
    reg_weight: f64,
) -> Result<f64> {
    check_batch(w, data, batch)?;
    let targets = target.map(target_probs);
    let l = w.arch().classes();
    let mut total = 0.0;
    for &i in batch {
        let label = data.label(i);
        let p = softmax(&w.forward_all(data.covariate(i)).pop().unwrap());
        let mut onehot = vec![0.0; l];
        onehot[label] = 1.0;
        let ce = cross_entropy(&onehot, &p);
        total += match targets.as_ref().and_then(|t| t[label].as_ref()) {
            Some(q) => (1.0 - reg_weight) * ce + reg_weight * cross_entropy(&p, q),
            None => ce,
        };
    }
    Ok(total / batch.len().max(1) as f64)
}

/// One SGD step on [`regularized_loss`].
pub fn sgd_step(
    w: &mut ModelWeights,
    data: &LabeledDataset,
    batch: &[usize],
    alpha: f64,
    target: Option<&LogitTable>,
    reg_weight: f64,
) -> Result<()> {
    check_step(alpha, reg_weight)?;
    check_batch(w, data, batch)?;
    if batch.is_empty() || alpha == 0.0 {
        return Ok(());
    }
    let targets = target.map(target_probs);
    let mut grad = vec![0.0; w.len()];
    let scale = 1.0 / batch.len() as f64;
    for &i in batch {
        let label = data.label(i);
        let acts = w.forward_all(data.covariate(i));
        let p = softmax(acts.last().unwrap());
        let mut g = cross_entropy_grad(&p, label);
        if let Some(q) = targets.as_ref().and_then(|t| t[label].as_ref()) {
            let d = distillation_grad(&p, q);
            for (a, b) in g.iter_mut().zip(d) {
                *a = (1.0 - reg_weight) * *a + reg_weight * b;
            }
        }
        w.backward(&acts, &g, scale, &mut grad);
    }
    apply(w, &grad, alpha)
}

fn distill_pairs<'a>(cov: &'a CovariateTable, target: &LogitTable) -> Result<Vec<(&'a [f64], Vec<f64>)>> {
    if cov.classes() != target.classes() {
        return Err(Error::arg("covariate and target tables disagree on class count"));
    }
    Ok((0..cov.classes())
        .filter(|&t| cov.is_present(t) && target.is_present(t))
        .map(|t| (cov.row(t), softmax(target.row(t))))
        .collect())
}

/// `r · Σ_t φ(t̂(c̃_t|w), t̂(s_t))` over labels present in both tables.
pub fn hfd_distill_loss(w: &ModelWeights, cov: &CovariateTable, target: &LogitTable, reg_weight: f64) -> Result<f64> {
    let pairs = distill_pairs(cov, target)?;
    Ok(reg_weight
        * pairs.iter().map(|(c, q)| cross_entropy(&softmax(&w.forward_all(c).pop().unwrap()), q)).sum::<f64>())
}

/// One SGD step on [`hfd_distill_loss`]; a no-op when every label is masked.
pub fn hfd_distill_step(
    w: &mut ModelWeights,
    cov: &CovariateTable,
    target: &LogitTable,
    alpha: f64,
    reg_weight: f64,
) -> Result<()> {
    check_step(alpha, reg_weight)?;
    if cov.dim() != w.arch().input() {
        return Err(Error::arg("covariate table dimension does not match the model"));
    }
    let pairs = distill_pairs(cov, target)?;
    if pairs.is_empty() || alpha == 0.0 {
        return Ok(());
    }
    let mut grad = vec![0.0; w.len()];
    for (c, q) in &pairs {
        let acts = w.forward_all(c);
        let p = softmax(acts.last().unwrap());
        w.backward(&acts, &distillation_grad(&p, q), reg_weight, &mut grad);
    }
    apply(w, &grad, alpha)
}

/// Fraction of `test` whose arg-max logit (lowest index on ties) equals
/// the label.
pub fn evaluate_accuracy(w: &ModelWeights, test: &LabeledDataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::arg("empty test set"));
    }
    if test.dim() != w.arch().input() {
        return Err(Error::arg("test set dimension does not match the model"));
    }
    let hits = (0..test.len())
        .filter(|&i| {
            let s = w.forward_all(test.covariate(i)).pop().unwrap();
            let mut best = 0;
            for (j, &v) in s.iter().enumerate() {
                if v > s[best] {
                    best = j;
                }
            }
            best == test.label(i)
        })
        .count();
    Ok(hits as f64 / test.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SyntheticSpec;
    use crate::learning::Architecture;
    use crate::rng::{stream, Stream};

    fn fixture() -> (ModelWeights, LabeledDataset) {
        let spec = SyntheticSpec { classes: 3, dim: 4, separation: 0.3, noise: 0.2 };
        let data = spec.generate(12, &mut stream(1, Stream::Data, &[])).unwrap();
        let w = ModelWeights::init(Architecture::mlp(4, &[5], 3).unwrap(), &mut stream(1, Stream::Init, &[]));
        (w, data)
    }

    #[test]
    fn zero_step_is_identity() {
        let (w, data) = fixture();
        let mut v = w.clone();
        sgd_step(&mut v, &data, &[0, 1, 2], 0.0, None, 0.5).unwrap();
        assert_eq!(v, w);
    }

    #[test]
    fn zero_regularization_matches_plain_step() {
        let (w, data) = fixture();
        let target = LogitTable::from_values(3, (0..9).map(|i| i as f64 * 0.3).collect()).unwrap();
        let mut a = w.clone();
        let mut b = w.clone();
        sgd_step(&mut a, &data, &[0, 3, 5], 0.1, None, 0.0).unwrap();
        sgd_step(&mut b, &data, &[0, 3, 5], 0.1, Some(&target), 0.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let (mut w, data) = fixture();
        assert!(sgd_step(&mut w, &data, &[0], -1.0, None, 0.5).is_err());
        assert!(sgd_step(&mut w, &data, &[0], 0.1, None, 1.5).is_err());
    }

    #[test]
    fn masked_rows_do_not_matter() {
        let (w, _) = fixture();
        let target = LogitTable::from_values(3, vec![0.5; 9]).unwrap();
        let cov_a = CovariateTable::new(3, 4, vec![0.2; 12], vec![true, false, true]).unwrap();
        let mut perturbed = vec![0.2; 12];
        perturbed[4..8].fill(0.9);
        let cov_b = CovariateTable::new(3, 4, perturbed, vec![true, false, true]).unwrap();
        let mut a = w.clone();
        let mut b = w.clone();
        hfd_distill_step(&mut a, &cov_a, &target, 0.1, 0.5).unwrap();
        hfd_distill_step(&mut b, &cov_b, &target, 0.1, 0.5).unwrap();
        assert_eq!(a, b);

        let none = CovariateTable::new(3, 4, vec![0.2; 12], vec![false; 3]).unwrap();
        let mut c = w.clone();
        hfd_distill_step(&mut c, &none, &target, 0.1, 0.5).unwrap();
        assert_eq!(c, w);
    }

    #[test]
    fn accuracy_edge_cases() {
        let (w, data) = fixture();
        let acc = evaluate_accuracy(&w, &data).unwrap();
        assert!((0.0..=1.0).contains(&acc));
        let empty = LabeledDataset::new(4, 3, vec![], vec![]).unwrap();
        assert!(evaluate_accuracy(&w, &empty).is_err());
    }

    #[test]
    fn memorizer_scores_one() {
        // logits equal covariates; each point's covariate is its one-hot label
        let arch = Architecture::mlp(3, &[], 3).unwrap();
        let mut params = vec![0.0; 12];
        for i in 0..3 {
            params[i * 3 + i] = 1.0;
        }
        let w = ModelWeights::from_params(arch, params).unwrap();
        let data = LabeledDataset::new(3, 3, vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0], vec![0, 2, 1]).unwrap();
        assert_eq!(evaluate_accuracy(&w, &data).unwrap(), 1.0);
    }

    #[test]
    fn training_reduces_loss() {
        let (mut w, data) = fixture();
        let all: Vec<usize> = (0..data.len()).collect();
        let before = regularized_loss(&w, &data, &all, None, 0.0).unwrap();
        for _ in 0..200 {
            sgd_step(&mut w, &data, &all, 0.1, None, 0.0).unwrap();
        }
        assert!(regularized_loss(&w, &data, &all, None, 0.0).unwrap() < before);
    }
}
