//! Labeled datasets, the synthetic class-cluster generator and the
//! disjoint device partitioner.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::rng::gaussian;
use crate::{Error, Result};

/// `N` covariate vectors of dimension `dim` with labels in `0..classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    dim: usize,
    classes: usize,
    covariates: Vec<f64>,
    labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(dim: usize, classes: usize, covariates: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if dim == 0 || classes == 0 {
            return Err(Error::arg("dataset needs positive dimension and class count"));
        }
        if covariates.len() != dim * labels.len() {
            return Err(Error::arg("covariate buffer does not match label count"));
        }
        if labels.iter().any(|&l| l >= classes) {
            return Err(Error::arg("label out of range"));
        }
        if covariates.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("covariates"));
        }
        Ok(Self { dim, classes, covariates, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn covariate(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut covariates = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            covariates.extend_from_slice(self.covariate(i));
        }
        Self {
            dim: self.dim,
            classes: self.classes,
            covariates,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Number of points per label.
    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Gaussian class clusters in `[0, 1]^dim`.
///
/// Each class has a prototype `0.5 + separation·u` with `u ~ U(-1, 1)^dim`;
/// samples add isotropic noise of standard deviation `noise` and are clipped
/// to the unit cube.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub dim: usize,
    pub separation: f64,
    pub noise: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { classes: 10, dim: 64, separation: 0.2, noise: 0.35 }
    }
}

impl SyntheticSpec {
    pub fn generate<R: Rng + ?Sized>(&self, points: usize, rng: &mut R) -> Result<LabeledDataset> {
        if self.classes == 0 || self.dim == 0 {
            return Err(Error::arg("synthetic data needs classes and dimensions"));
        }
        let prototypes: Vec<f64> =
            (0..self.classes * self.dim).map(|_| 0.5 + self.separation * rng.random_range(-1.0..1.0)).collect();
        let mut covariates = Vec::with_capacity(points * self.dim);
        let mut labels = Vec::with_capacity(points);
        for _ in 0..points {
            let label = rng.random_range(0..self.classes);
            let proto = &prototypes[label * self.dim..(label + 1) * self.dim];
            covariates.extend(proto.iter().map(|&m| (m + self.noise * gaussian(rng)).clamp(0.0, 1.0)));
            labels.push(label);
        }
        LabeledDataset::new(self.dim, self.classes, covariates, labels)
    }
}

/// Device shards plus a held-out test set.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub shards: Vec<LabeledDataset>,
    pub test: LabeledDataset,
}

/// Splits `data` into `devices` disjoint random shards of `per_device`
/// points and a test set of up to `test_points` from what remains.
pub fn partition<R: Rng + ?Sized>(
    data: &LabeledDataset,
    devices: usize,
    per_device: usize,
    test_points: usize,
    rng: &mut R,
) -> Result<Partition> {
    let needed = devices * per_device;
    if devices == 0 || per_device == 0 {
        return Err(Error::arg("partition needs devices and samples per device"));
    }
    if needed >= data.len() {
        return Err(Error::arg(alloc::format!(
            "dataset has {} points, {} needed for shards plus at least one test point",
            data.len(),
            needed
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let shards = order[..needed].chunks(per_device).map(|c| data.subset(c)).collect();
    let rest = &order[needed..];
    let test = data.subset(&rest[..test_points.min(rest.len())]);
    Ok(Partition { shards, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn synthetic_is_deterministic_and_in_range() {
        let spec = SyntheticSpec { classes: 3, dim: 5, separation: 0.3, noise: 0.1 };
        let a = spec.generate(30, &mut stream(1, Stream::Data, &[])).unwrap();
        let b = spec.generate(30, &mut stream(1, Stream::Data, &[])).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 30);
        assert!((0..30).all(|i| a.covariate(i).iter().all(|x| (0.0..=1.0).contains(x))));
    }

    #[test]
    fn shards_are_disjoint_and_sized() {
        // covariate 0 carries the point id so disjointness is observable
        let n = 200;
        let cov: Vec<f64> = (0..n).flat_map(|i| [i as f64, 0.0]).collect();
        let labels: Vec<usize> = (0..n).map(|i| i % 4).collect();
        let data = LabeledDataset::new(2, 4, cov, labels).unwrap();
        let p = partition(&data, 5, 16, 50, &mut stream(2, Stream::Partition, &[])).unwrap();
        assert_eq!(p.shards.len(), 5);
        assert!(p.shards.iter().all(|s| s.len() == 16));
        assert_eq!(p.test.len(), 50);
        let mut ids: Vec<u64> = p
            .shards
            .iter()
            .chain(core::iter::once(&p.test))
            .flat_map(|s| (0..s.len()).map(move |i| s.covariate(i)[0] as u64))
            .collect();
        ids.sort_unstable();
        let before = ids.len();
        ids.dedup();
        assert_eq!(ids.len(), before);
    }

    #[test]
    fn partition_rejects_too_small_dataset() {
        let data = LabeledDataset::new(1, 2, alloc::vec![0.0; 10], alloc::vec![0; 10]).unwrap();
        assert!(partition(&data, 5, 2, 1, &mut stream(0, Stream::Partition, &[])).is_err());
    }

    #[test]
    fn dataset_validates_labels() {
        assert!(LabeledDataset::new(1, 2, alloc::vec![0.0], alloc::vec![2]).is_err());
        assert!(LabeledDataset::new(2, 2, alloc::vec![0.0], alloc::vec![0]).is_err());
    }
}
