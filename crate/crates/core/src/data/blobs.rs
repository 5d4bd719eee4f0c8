use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

/// Isotropic Gaussian class blobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub means: Vec<Vec<f64>>,
    /// Per-coordinate standard deviation.
    pub std: f64,
    pub dim: usize,
    pub classes: usize,
    /// Scale the means were drawn with (informational once means exist).
    pub separation: f64,
}

impl DomainSpec {
    /// Class means drawn i.i.d. from `N(0, separation^2 I)`.
    pub fn random(dim: usize, classes: usize, separation: f64, std: f64, seed: u64) -> Self {
        let mut r = rng::stream(seed, "domain-means", 0);
        let means = (0..classes)
            .map(|_| {
                (0..dim)
                    .map(|_| separation * r.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        DomainSpec {
            means,
            std,
            dim,
            classes,
            separation,
        }
    }

    /// Same classes, every mean moved by `offset`, spread scaled.
    pub fn shifted(&self, offset: f64, std_scale: f64) -> Self {
        DomainSpec {
            means: self
                .means
                .iter()
                .map(|m| m.iter().map(|v| v + offset).collect())
                .collect(),
            std: self.std * std_scale,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.dim == 0 {
            return Err(Error::config("domain needs at least one class and one dimension"));
        }
        if self.means.len() != self.classes {
            return Err(Error::config(format!(
                "{} means for {} classes",
                self.means.len(),
                self.classes
            )));
        }
        if self.means.iter().any(|m| m.len() != self.dim) {
            return Err(Error::config("mean dimensionality differs from dim"));
        }
        if !(self.std > 0.0 && self.std.is_finite()) {
            return Err(Error::config("blob standard deviation must be positive"));
        }
        Ok(())
    }
}

/// Samples `n_per_class[c]` points around each class mean, class-major.
pub fn make_blobs(spec: &DomainSpec, n_per_class: &[usize], seed: u64) -> Result<Dataset> {
    spec.validate()?;
    if n_per_class.len() != spec.classes {
        return Err(Error::config(format!(
            "{} class counts for {} classes",
            n_per_class.len(),
            spec.classes
        )));
    }
    if let Some(c) = n_per_class.iter().position(|&n| n == 0) {
        return Err(Error::config(format!("class {c} has no samples")));
    }
    let mut r = rng::stream(seed, rng::LABEL_DATA, 0);
    let total: usize = n_per_class.iter().sum();
    let mut data = Vec::with_capacity(total * spec.dim);
    let mut labels = Vec::with_capacity(total);
    for (c, &n) in n_per_class.iter().enumerate() {
        for _ in 0..n {
            for &m in &spec.means[c] {
                data.push(m + spec.std * r.sample::<f64, _>(StandardNormal));
            }
            labels.push(c);
        }
    }
    Dataset::new(Tensor::new(vec![total, spec.dim], data)?, labels, spec.classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_count_rejected() {
        let spec = DomainSpec::random(2, 3, 4.0, 1.0, 1);
        assert!(matches!(make_blobs(&spec, &[5, 0, 5], 1), Err(Error::Config(_))));
    }

    #[test]
    fn well_separated_blobs_are_nearest_centroid_separable() {
        let spec = DomainSpec {
            means: vec![vec![0.0, 0.0], vec![100.0, 0.0], vec![0.0, 100.0]],
            std: 1.0,
            dim: 2,
            classes: 3,
            separation: 100.0,
        };
        let ds = make_blobs(&spec, &[50, 50, 50], 3).unwrap();
        let correct = (0..ds.len())
            .filter(|&i| {
                let x = ds.features().row(i);
                let nearest = (0..3)
                    .min_by(|&a, &b| {
                        let da: f64 = spec.means[a].iter().zip(x).map(|(m, v)| (m - v).powi(2)).sum();
                        let db: f64 = spec.means[b].iter().zip(x).map(|(m, v)| (m - v).powi(2)).sum();
                        da.total_cmp(&db)
                    })
                    .unwrap();
                nearest == ds.labels()[i]
            })
            .count();
        assert_eq!(correct, ds.len());
    }

    #[test]
    fn sample_means_within_three_standard_errors() {
        let spec = DomainSpec::random(4, 3, 2.0, 1.5, 9);
        let n = 400;
        let ds = make_blobs(&spec, &[n, n, n], 21).unwrap();
        let bound = 3.0 * spec.std / (n as f64).sqrt();
        for c in 0..3 {
            for d in 0..4 {
                let mean: f64 = (0..ds.len())
                    .filter(|&i| ds.labels()[i] == c)
                    .map(|i| ds.features().row(i)[d])
                    .sum::<f64>()
                    / n as f64;
                assert!((mean - spec.means[c][d]).abs() < bound, "class {c} dim {d}");
            }
        }
    }

    #[test]
    fn deterministic() {
        let spec = DomainSpec::random(3, 2, 1.0, 1.0, 4);
        let a = make_blobs(&spec, &[10, 10], 5).unwrap();
        let b = make_blobs(&spec, &[10, 10], 5).unwrap();
        assert!(a.features().bit_eq(b.features()));
    }
}
