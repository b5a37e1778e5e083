use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{input, Error, Result};
use crate::exec::chunk_rng;

/// Labelled feature vectors stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dim: usize) -> Result<Self> {
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(input(format!(
                "{} features do not form {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        let classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
        Ok(Self { features, labels, dim, classes })
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

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    fn subset(&self, idx: &[usize]) -> Self {
        let mut features = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            features.extend_from_slice(self.row(i));
        }
        Self { features, labels: idx.iter().map(|&i| self.labels[i]).collect(), dim: self.dim, classes: self.classes }
    }

    /// Shuffled split; the second part holds `test_fraction` of the rows.
    pub fn split(&self, test_fraction: f64, seed: u64) -> (Self, Self) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut chunk_rng(seed, 0));
        let n_test = ((self.len() as f64) * test_fraction).round() as usize;
        let (test, train) = idx.split_at(n_test.min(self.len()));
        (self.subset(train), self.subset(test))
    }

    /// Share of the most frequent label.
    pub fn majority_rate(&self) -> f64 {
        let mut counts = vec![0usize; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        *counts.iter().max().unwrap_or(&0) as f64 / self.len().max(1) as f64
    }
}

/// Two Gaussian blobs with unit variance whose means are `separation` apart
/// along the all-ones direction. Labels are fair coin flips.
pub fn synthetic_blobs(n: usize, dim: usize, separation: f64, seed: u64) -> Result<Dataset> {
    let mut rng = chunk_rng(seed, 0);
    let shift = separation / 2.0 / (dim as f64).sqrt();
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y = rng.random::<bool>() as usize;
        let sign = if y == 1 { 1.0 } else { -1.0 };
        for _ in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            features.push(z + sign * shift);
        }
        labels.push(y);
    }
    Dataset::new(features, labels, dim)
}

/// Reads a CSV whose last column is an integer label. A header row is
/// skipped when its cells are not all numeric.
pub fn load_dataset_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_path(path)?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Ingest { row, message: e.to_string() })?;
        let cells: Vec<&str> = rec.iter().map(str::trim).collect();
        if row == 1 && cells.iter().any(|c| c.parse::<f64>().is_err()) {
            continue;
        }
        if cells.len() < 2 {
            return Err(Error::Ingest { row, message: "need at least one feature and a label".into() });
        }
        let w = *width.get_or_insert(cells.len());
        if cells.len() != w {
            return Err(Error::Ingest { row, message: format!("expected {w} columns, found {}", cells.len()) });
        }
        for c in &cells[..w - 1] {
            let v: f64 = c
                .parse()
                .map_err(|_| Error::Ingest { row, message: format!("feature '{c}' is not a number") })?;
            if !v.is_finite() {
                return Err(Error::Ingest { row, message: format!("feature '{c}' is not finite") });
            }
            features.push(v);
        }
        let label: usize = cells[w - 1]
            .parse()
            .map_err(|_| Error::Ingest { row, message: format!("label '{}' is not a class index", cells[w - 1]) })?;
        labels.push(label);
    }
    let Some(w) = width else {
        return Err(input("dataset file has no rows"));
    };
    Dataset::new(features, labels, w - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn blobs_are_balanced_and_reproducible() {
        let a = synthetic_blobs(2000, 20, 4.0, 1).unwrap();
        let b = synthetic_blobs(2000, 20, 4.0, 1).unwrap();
        assert_eq!(a, b);
        assert!(a.majority_rate() < 0.55);
        let (train, test) = a.split(0.2, 2);
        assert_eq!(test.len(), 400);
        assert_eq!(train.len(), 1600);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::File::create(&p).unwrap().write_all(b"x0,x1,label\n0.5,1.0,1\n-0.5,2.0,0\n").unwrap();
        let d = load_dataset_csv(&p).unwrap();
        assert_eq!((d.len(), d.dim(), d.classes()), (2, 2, 2));
        assert_eq!(d.row(1), &[-0.5, 2.0]);

        std::fs::File::create(&p).unwrap().write_all(b"x0,x1,label\n0.5,1.0,1\n-0.5,oops,0\n").unwrap();
        match load_dataset_csv(&p) {
            Err(Error::Ingest { row, .. }) => assert_eq!(row, 3),
            other => panic!("{other:?}"),
        }
    }
}
