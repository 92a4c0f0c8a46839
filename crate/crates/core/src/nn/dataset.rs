use crate::error::{Error, Result};

/// Dense feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    samples: Vec<Vec<f64>>,
    labels: Vec<usize>,
    class_count: usize,
    feature_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(
        samples: Vec<Vec<f64>>,
        labels: Vec<usize>,
        class_count: usize,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("dataset has no samples"));
        }
        if samples.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "dataset labels",
                expected: samples.len(),
                found: labels.len(),
            });
        }
        let d = feature_names.len();
        if let Some((row, s)) = samples.iter().enumerate().find(|(_, s)| s.len() != d) {
            return Err(Error::Shape(format!(
                "sample {row} has {} features, expected {d}",
                s.len()
            )));
        }
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        let mut seen = vec![false; class_count];
        for (row, &l) in labels.iter().enumerate() {
            if l >= class_count {
                return Err(Error::invalid(format!(
                    "label {l} at sample {row} is outside [0, {class_count})"
                )));
            }
            seen[l] = true;
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!("class {c} has no samples")));
        }
        Ok(Self {
            samples,
            labels,
            class_count,
            feature_names,
        })
    }

    /// Names features `f0, f1, ...`.
    pub fn unnamed(samples: Vec<Vec<f64>>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        let d = samples.first().map_or(0, Vec::len);
        let names = (0..d).map(|j| format!("f{j}")).collect();
        Self::new(samples, labels, class_count, names)
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_names.len()
    }

    /// Keeps only the listed feature columns, in the given order.
    pub fn select_features(&self, features: &[usize]) -> Result<Self> {
        if let Some(&j) = features.iter().find(|&&j| j >= self.feature_count()) {
            return Err(Error::invalid(format!("feature index {j} out of range")));
        }
        if features.is_empty() {
            return Err(Error::invalid("feature selection is empty"));
        }
        let samples = self
            .samples
            .iter()
            .map(|s| features.iter().map(|&j| s[j]).collect())
            .collect();
        let names = features.iter().map(|&j| self.feature_names[j].clone()).collect();
        Self::new(samples, self.labels.clone(), self.class_count, names)
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let samples = rows.iter().map(|&i| self.samples[i].clone()).collect();
        let labels = rows.iter().map(|&i| self.labels[i]).collect();
        Self::new(samples, labels, self.class_count, self.feature_names.clone())
    }

    /// Sample indices grouped by class.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.class_count];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        by_class
    }

    /// Most frequent class; ties go to the lowest index.
    pub fn majority_class(&self) -> usize {
        let counts: Vec<f64> = self
            .indices_by_class()
            .iter()
            .map(|v| v.len() as f64)
            .collect();
        super::argmax(&counts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_labels_and_shapes() {
        assert!(LabeledDataset::unnamed(vec![vec![0.0], vec![1.0]], vec![0, 1], 2).is_ok());
        assert!(LabeledDataset::unnamed(vec![vec![0.0], vec![1.0]], vec![0, 0], 2).is_err());
        assert!(LabeledDataset::unnamed(vec![vec![0.0], vec![1.0]], vec![0, 2], 2).is_err());
        assert!(LabeledDataset::unnamed(vec![vec![0.0], vec![1.0, 2.0]], vec![0, 1], 2).is_err());
        assert!(LabeledDataset::unnamed(vec![vec![0.0]], vec![0, 1], 2).is_err());
    }

    #[test]
    fn selects_features_and_majority() {
        let ds = LabeledDataset::unnamed(
            vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]],
            vec![1, 0, 1],
            2,
        )
        .unwrap();
        let sub = ds.select_features(&[2, 0]).unwrap();
        assert_eq!(sub.samples()[1], vec![6.0, 4.0]);
        assert_eq!(sub.feature_names(), &["f2".to_string(), "f0".to_string()]);
        assert_eq!(ds.majority_class(), 1);
        assert!(ds.select_features(&[3]).is_err());
    }
}
