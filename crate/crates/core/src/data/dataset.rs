use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Features with one row per sample plus class labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Tensor,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(features: Tensor, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.rank() < 2 {
            return Err(Error::data("features need a sample axis"));
        }
        if features.batch() != labels.len() {
            return Err(Error::data(format!(
                "{} feature rows but {} labels",
                features.batch(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::data(format!("label {bad} outside [0, {classes})")));
        }
        Ok(Dataset {
            features,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    /// Per-sample feature shape.
    pub fn sample_shape(&self) -> &[usize] {
        &self.features.shape()[1..]
    }

    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let x = self.features.select_rows(indices)?;
        let y = indices.iter().map(|&i| self.labels[i]).collect();
        Ok((x, y))
    }

    pub fn labels_of(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    pub fn class_histogram(&self, indices: &[usize]) -> Vec<usize> {
        let mut h = vec![0; self.classes];
        for &i in indices {
            h[self.labels[i]] += 1;
        }
        h
    }

    /// Appends another dataset with the same sample shape and class count.
    pub fn concat(mut self, other: Dataset) -> Result<Dataset> {
        if self.sample_shape() != other.sample_shape() || self.classes != other.classes {
            return Err(Error::data("cannot concatenate datasets of different shapes"));
        }
        let mut shape = self.features.shape().to_vec();
        shape[0] += other.len();
        let mut data = self.features.into_data();
        data.extend_from_slice(other.features.data());
        self.labels.extend_from_slice(&other.labels);
        Dataset::new(Tensor::new(shape, data)?, self.labels, self.classes)
    }
}
