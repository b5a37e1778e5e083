//! Runnable mechanisms: GG output perturbation, its Poisson-subsampled
//! variant, the GGNMax private argmax, `ℓ_β` clipping and β-DP-SGD.

mod data;
mod dpsgd;
mod models;

pub use data::{load_dataset_csv, synthetic_blobs, Dataset};
pub use dpsgd::{beta_dpsgd, train_nonprivate, EpochLog, TrainConfig, TrainResult};
pub use models::{Logistic, Mlp, Model, ModelKind};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{lbeta_norm, GGParams};
use crate::error::{domain, input, Result};

/// Adds i.i.d. `N_β(0, σ·Δ)` noise to each coordinate of `value`.
pub fn gg_mechanism<R: Rng + ?Sized>(
    value: &[f64],
    sensitivity: f64,
    noise: &GGParams,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if value.iter().any(|v| !v.is_finite()) {
        return Err(input("query value must be finite"));
    }
    if !(sensitivity > 0.0 && sensitivity.is_finite()) {
        return Err(domain(format!("sensitivity must be positive, got {sensitivity}")));
    }
    let sampler = noise.scaled(sensitivity)?.sampler();
    Ok(value.iter().map(|v| v + sampler.draw(rng)).collect())
}

/// A query over a set of records, evaluated on subsamples.
pub trait Query<R> {
    /// Value on the empty set.
    fn identity(&self) -> Vec<f64>;

    fn evaluate(&self, records: &[&R]) -> Vec<f64>;
}

/// Number of records.
#[derive(Debug, Clone, Copy, Default)]
pub struct CountQuery;

impl<R> Query<R> for CountQuery {
    fn identity(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn evaluate(&self, records: &[&R]) -> Vec<f64> {
        vec![records.len() as f64]
    }
}

/// Coordinatewise sum of a per-record vector.
pub struct SumQuery<F> {
    pub dim: usize,
    pub map: F,
}

impl<R, F: Fn(&R) -> Vec<f64>> Query<R> for SumQuery<F> {
    fn identity(&self) -> Vec<f64> {
        vec![0.0; self.dim]
    }

    fn evaluate(&self, records: &[&R]) -> Vec<f64> {
        let mut acc = self.identity();
        for r in records {
            for (a, v) in acc.iter_mut().zip((self.map)(r)) {
                *a += v;
            }
        }
        acc
    }
}

/// Poisson-subsamples `data` at rate `q`, evaluates `query` and adds GG noise.
/// At `q = 1` no coins are drawn, so the output equals [`gg_mechanism`] on
/// the full data under the same random stream.
pub fn sgg_mechanism<T, Q, R>(
    data: &[T],
    query: &Q,
    sensitivity: f64,
    noise: &GGParams,
    q: f64,
    rng: &mut R,
) -> Result<Vec<f64>>
where
    Q: Query<T> + ?Sized,
    R: Rng + ?Sized,
{
    if !(q > 0.0 && q <= 1.0) {
        return Err(domain(format!("sample rate must lie in (0, 1], got {q}")));
    }
    let sample: Vec<&T> = if q >= 1.0 {
        data.iter().collect()
    } else {
        data.iter().filter(|_| rng.random::<f64>() < q).collect()
    };
    let value = if sample.is_empty() { query.identity() } else { query.evaluate(&sample) };
    gg_mechanism(&value, sensitivity, noise, rng)
}

/// Vote counts of one PATE query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteHistogram {
    pub counts: Vec<f64>,
    pub true_label: Option<usize>,
}

impl VoteHistogram {
    pub fn new(counts: Vec<f64>, true_label: Option<usize>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(input(format!("a histogram needs at least 2 classes, got {}", counts.len())));
        }
        if counts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(input("vote counts must be finite and non-negative"));
        }
        if let Some(l) = true_label {
            if l >= counts.len() {
                return Err(input(format!("label {l} out of range for {} classes", counts.len())));
            }
        }
        Ok(Self { counts, true_label })
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    /// Unnoised argmax, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.counts)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// GGNMax: argmax of the counts after adding `N_β(0, σ)` to each. Every count
/// has sensitivity 1, so the privacy cost depends on `(β, σ)` only.
pub fn ggnmax<R: Rng + ?Sized>(hist: &VoteHistogram, noise: &GGParams, rng: &mut R) -> Result<usize> {
    if hist.classes() < 2 {
        return Err(input("a histogram needs at least 2 classes"));
    }
    let sampler = noise.sampler();
    let noisy: Vec<f64> = hist.counts.iter().map(|c| c + sampler.draw(rng)).collect();
    Ok(argmax(&noisy))
}

/// Rescales `g` onto the `ℓ_β` ball of radius `clip` when it lies outside.
pub fn lbeta_clip(g: &[f64], beta: f64, clip: f64) -> Result<Vec<f64>> {
    if g.iter().any(|x| !x.is_finite()) {
        return Err(input("gradient must be finite"));
    }
    if !(clip > 0.0) || !(beta >= 1.0) {
        return Err(domain(format!("need clip > 0 and beta >= 1, got clip={clip}, beta={beta}")));
    }
    let norm = lbeta_norm(g, beta);
    if norm <= clip {
        return Ok(g.to_vec());
    }
    let scale = clip / norm;
    Ok(g.iter().map(|x| x * scale).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::chunk_rng;

    #[test]
    fn vanishing_noise_returns_value() {
        let v = vec![1.0, -2.0, 3.5];
        let out = gg_mechanism(&v, 1.0, &GGParams::new(1.5, 1e-9).unwrap(), &mut chunk_rng(1, 0)).unwrap();
        for (a, b) in out.iter().zip(&v) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(gg_mechanism(&[f64::NAN], 1.0, &GGParams::laplace(1.0).unwrap(), &mut chunk_rng(1, 0)).is_err());
    }

    #[test]
    fn gaussian_variance() {
        let v = vec![0.0; 100_000];
        let noise = GGParams::new(2.0, 2f64.sqrt()).unwrap();
        let out = gg_mechanism(&v, 1.0, &noise, &mut chunk_rng(3, 0)).unwrap();
        let var = crate::stats::variance(&out);
        assert!((var - 1.0).abs() < 0.02, "{var}");
        let again = gg_mechanism(&v, 1.0, &noise, &mut chunk_rng(3, 0)).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn sgg_full_rate_is_plain() {
        let data: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let q = SumQuery { dim: 1, map: |x: &f64| vec![*x] };
        let noise = GGParams::new(1.5, 2.0).unwrap();
        let a = sgg_mechanism(&data, &q, 1.0, &noise, 1.0, &mut chunk_rng(5, 0)).unwrap();
        let b = gg_mechanism(&[1225.0], 1.0, &noise, &mut chunk_rng(5, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sgg_counts_follow_binomial() {
        let data = vec![(); 10_000];
        let noise = GGParams::new(2.0, 1e-9).unwrap();
        let mut rng = chunk_rng(8, 0);
        let runs: Vec<f64> =
            (0..1000).map(|_| sgg_mechanism(&data, &CountQuery, 1.0, &noise, 0.5, &mut rng).unwrap()[0]).collect();
        let m = crate::stats::mean(&runs);
        // std of the mean: sqrt(n q (1-q) / runs)
        assert!((m - 5000.0).abs() < 3.0 * (2500.0f64 / 1000.0).sqrt(), "{m}");
    }

    #[test]
    fn empty_sample_uses_identity() {
        let data: Vec<f64> = vec![];
        let q = SumQuery { dim: 2, map: |x: &f64| vec![*x, 1.0] };
        let out = sgg_mechanism(&data, &q, 1.0, &GGParams::new(2.0, 1e-9).unwrap(), 0.3, &mut chunk_rng(1, 1)).unwrap();
        assert!(out.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn ggnmax_cases() {
        let h = VoteHistogram::new(vec![5.0, 1.0], None).unwrap();
        let tiny = GGParams::new(2.0, 1e-6).unwrap();
        let mut rng = chunk_rng(2, 0);
        let wins = (0..10_000).filter(|_| ggnmax(&h, &tiny, &mut rng).unwrap() == 0).count();
        assert!(wins >= 9990);

        let flat = VoteHistogram::new(vec![3.0; 10], None).unwrap();
        let noise = GGParams::new(1.5, 1.0).unwrap();
        let mut freq = [0usize; 10];
        let mut rng = chunk_rng(4, 0);
        for _ in 0..100_000 {
            freq[ggnmax(&flat, &noise, &mut rng).unwrap()] += 1;
        }
        for f in freq {
            assert!((f as f64 / 1e5 - 0.1).abs() < 0.01);
        }

        let base = VoteHistogram::new(vec![10.0, 12.0, 11.0, 9.0], None).unwrap();
        let shifted = VoteHistogram::new(base.counts.iter().map(|c| c + 17.0).collect(), None).unwrap();
        let (mut r1, mut r2) = (chunk_rng(6, 0), chunk_rng(6, 0));
        for _ in 0..1000 {
            assert_eq!(ggnmax(&base, &noise, &mut r1).unwrap(), ggnmax(&shifted, &noise, &mut r2).unwrap());
        }
        assert!(VoteHistogram::new(vec![1.0], None).is_err());
    }

    #[test]
    fn clipping_examples() {
        assert_eq!(lbeta_clip(&[0.0, 0.0], 2.0, 1.0).unwrap(), vec![0.0, 0.0]);
        let c = lbeta_clip(&[3.0, 4.0], 2.0, 1.0).unwrap();
        assert!((c[0] - 0.6).abs() < 1e-15 && (c[1] - 0.8).abs() < 1e-15);
        let c = lbeta_clip(&[1.0, 1.0, 1.0], 1.0, 1.5).unwrap();
        assert!(c.iter().all(|x| (x - 0.5).abs() < 1e-15));
        assert_eq!(lbeta_clip(&[0.1, 0.2], 2.0, 1.0).unwrap(), vec![0.1, 0.2]);
        assert!(lbeta_clip(&[f64::INFINITY], 2.0, 1.0).is_err());
    }
}
