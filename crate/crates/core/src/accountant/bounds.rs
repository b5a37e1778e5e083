use serde::{Deserialize, Serialize};

use crate::stats::clopper_pearson_upper;

use super::config::AccountantConfig;
use super::discrete::SampleStats;

/// Accounting error of a sampled curve: the true curve satisfies
/// `δ̂(ε + τ) - η ≤ δ(ε) ≤ δ̂(ε - τ) + η`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBounds {
    pub eta: f64,
    pub tau: f64,
}

/// `η` and `τ` for `k` compositions.
///
/// `tail_single` bounds `Pr[|Y_i| ≥ L]` for one PRV and `tail_sum` bounds
/// `Pr[|Σ Y_i| ≥ L - t]`.
pub fn error_bounds(cfg: &AccountantConfig, k: usize, tail_single: f64, tail_sum: f64) -> ErrorBounds {
    let (h, l, n) = (cfg.mesh_h, cfg.trunc_l, cfg.samples_n as f64);
    let kf = k as f64;
    let (s, t) = (cfg.s(k), cfg.t());
    let tv = (l / (n * h)).sqrt();

    let eta = 2.0 * kf * tail_single
        + 4.0 * (-2.0 * s * s / (kf * h * h)).exp()
        + 4.0 * kf * (-n * t * t / (2.0 * l * l)).exp()
        + 8.0 * kf * (-n * t * t / 2.0).exp()
        + tail_sum
        + 2.0 * kf * (t + tv);
    let tau = s + kf * (t + 2.0 * l * (t / 2.0 + tv)) + 2.0 * kf * (t / 2.0 + tv);
    ErrorBounds { eta, tau }
}

/// 99% upper bound on `Pr[|Y| ≥ L]`: exact zero when the support is known
/// to sit inside `[-L, L]`, otherwise Clopper–Pearson on the rejection count.
pub fn tail_single_bound(stats: SampleStats, support: Option<f64>, trunc_l: f64) -> f64 {
    if matches!(support, Some(b) if b < trunc_l) {
        return 0.0;
    }
    clopper_pearson_upper(stats.rejected(), stats.draws, 0.99)
}

/// Bound on `Pr[|Y_1 + … + Y_k| ≥ a]` for i.i.d. copies of a PRV.
///
/// The lower tail uses `E[e^{-Y}] = 1`, which holds for every PRV, giving
/// `Pr[S ≤ -a] ≤ e^{-a}`. The upper tail is a Chernoff bound with the
/// moment generating function estimated from `pilot`.
pub fn tail_sum_bound(pilot: &[f64], k: usize, support: Option<f64>, a: f64) -> f64 {
    if a <= 0.0 {
        return 1.0;
    }
    if matches!(support, Some(b) if k as f64 * b < a) {
        return 0.0;
    }
    let lower = (-a).exp();
    let upper = if pilot.is_empty() {
        1.0
    } else {
        let ln_n = (pilot.len() as f64).ln();
        let ln_mgf = |lambda: f64| {
            let m = pilot.iter().fold(f64::NEG_INFINITY, |acc, y| acc.max(lambda * y));
            m + pilot.iter().map(|y| (lambda * y - m).exp()).sum::<f64>().ln() - ln_n
        };
        (0..=60)
            .map(|i| 1e-3 * 1.2f64.powi(i))
            .map(|lambda| (k as f64 * ln_mgf(lambda) - lambda * a).exp())
            .fold(1.0, f64::min)
    };
    (lower + upper).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounded_prv_keeps_only_sampling_terms() {
        let cfg = AccountantConfig::with_bins(2.0, 2000, 1_000_000).unwrap();
        let b = error_bounds(&cfg, 1, 0.0, 0.0);
        let (h, l, n) = (cfg.mesh_h, cfg.trunc_l, 1e6);
        let (s, t) = (cfg.s(1), cfg.t());
        let expect = 4.0 * (-2.0 * s * s / (h * h)).exp()
            + 4.0 * (-n * t * t / (2.0 * l * l)).exp()
            + 8.0 * (-n * t * t / 2.0).exp()
            + 2.0 * (t + (l / (n * h)).sqrt());
        assert!((b.eta - expect).abs() < 1e-15);
        assert!(b.tau > 0.0);
    }

    #[test]
    fn tau_monotone_along_each_axis() {
        let base = |h: f64, l: f64, n: usize, s: f64, t: f64, k: usize| {
            let mut cfg = AccountantConfig::new(h, l, n).unwrap();
            cfg.hoeffding_s = Some(s);
            cfg.sampling_t = Some(t);
            error_bounds(&cfg, k, 0.0, 0.0).tau
        };
        let grid = [1.0, 2.0, 4.0];
        let inc = |f: &dyn Fn(f64) -> f64| grid.windows(2).all(|w| f(w[1]) > f(w[0]));
        let dec = |f: &dyn Fn(f64) -> f64| grid.windows(2).all(|w| f(w[1]) < f(w[0]));
        assert!(inc(&|x| base(1e-3, 10.0, 1_000_000, 0.05 * x, 1e-3, 1)));
        assert!(inc(&|x| base(1e-3, 10.0, 1_000_000, 0.05, 1e-3 * x, 1)));
        assert!(inc(&|x| base(1e-3, 10.0 * x, 1_000_000, 0.05, 1e-3, 1)));
        assert!(inc(&|x| base(1e-3, 10.0, 1_000_000, 0.05, 1e-3, x as usize)));
        assert!(dec(&|x| base(1e-3, 10.0, 1_000_000 * x as usize, 0.05, 1e-3, 1)));
        assert!(dec(&|x| base(1e-3 * x, 10.0, 1_000_000, 0.05, 1e-3, 1)));
    }

    #[test]
    fn tails() {
        let stats = SampleStats { draws: 1_000_000, accepted: 1_000_000 };
        assert_eq!(tail_single_bound(stats, Some(1.0), 2.0), 0.0);
        let u = tail_single_bound(stats, None, 2.0);
        assert!(u > 0.0 && u < 1e-5);
        assert_eq!(tail_sum_bound(&[], 3, Some(1.0), 3.5), 0.0);
        let pilot: Vec<f64> = (0..1000).map(|i| (i as f64 / 1000.0) - 0.5).collect();
        let b = tail_sum_bound(&pilot, 1, None, 10.0);
        assert!(b >= (-10.0f64).exp() && b < 1e-3);
    }
}
