//! Small statistics helpers shared by the accountant, simulations and tests.

use crate::special::ln_gamma;

/// Two-sample Kolmogorov–Smirnov statistic. Sorts copies of the inputs.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// One-sample KS statistic against a continuous CDF.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0_f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
    })
}

/// Asymptotic two-sample KS critical value at significance `alpha`.
pub fn ks_critical(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    let (n, m) = (n as f64, m as f64);
    c * ((n + m) / (n * m)).sqrt()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample variance.
pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}

fn ln_binomial_pmf(n: u64, k: u64, p: f64) -> f64 {
    let (nf, kf) = (n as f64, k as f64);
    ln_gamma(nf + 1.0) - ln_gamma(kf + 1.0) - ln_gamma(nf - kf + 1.0)
        + kf * p.ln()
        + (nf - kf) * (-p).ln_1p()
}

fn binomial_cdf(n: u64, k: u64, p: f64) -> f64 {
    if p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return if k >= n { 1.0 } else { 0.0 };
    }
    (0..=k).map(|j| ln_binomial_pmf(n, j, p).exp()).sum::<f64>().min(1.0)
}

/// One-sided Clopper–Pearson upper confidence bound on a binomial rate
/// after `successes` out of `trials`, at the given confidence level.
pub fn clopper_pearson_upper(successes: u64, trials: u64, confidence: f64) -> f64 {
    assert!(trials > 0 && successes <= trials);
    let alpha = 1.0 - confidence;
    if successes == trials {
        return 1.0;
    }
    if successes == 0 {
        return 1.0 - alpha.powf(1.0 / trials as f64);
    }
    if successes > 100_000 {
        // normal approximation with continuity correction
        let p = (successes as f64 + 0.5) / trials as f64;
        let z = upper_normal_quantile(alpha);
        return (p + z * (p * (1.0 - p) / trials as f64).sqrt()).min(1.0);
    }
    let (mut lo, mut hi) = (successes as f64 / trials as f64, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if binomial_cdf(trials, successes, mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// `z` with `P(N(0,1) > z) = alpha`, by bisection on the normal CDF.
pub fn upper_normal_quantile(alpha: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if 1.0 - crate::special::normal_cdf(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Trapezoidal integral of `y` over sorted abscissae `x`.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Savitzky–Golay smoothing with a quadratic fit over a window of five.
/// Interior points use the closed-form kernel; the two points at each end are
/// evaluated from the quadratic fitted to the first (last) five samples.
/// Series shorter than five are returned unchanged.
pub fn savgol_quadratic5(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    if n < 5 {
        return y.to_vec();
    }
    const K: [f64; 5] = [-3.0, 12.0, 17.0, 12.0, -3.0];
    let mut out = y.to_vec();
    for i in 2..n - 2 {
        out[i] = (0..5).map(|j| K[j] * y[i + j - 2]).sum::<f64>() / 35.0;
    }
    let fit_eval = |w: &[f64], at: f64| {
        // least squares quadratic on x = -2..2
        let c0 = w.iter().sum::<f64>() / 5.0;
        let c1 = (0..5).map(|j| (j as f64 - 2.0) * w[j]).sum::<f64>() / 10.0;
        let c2 = (0..5).map(|j| ((j as f64 - 2.0).powi(2) - 2.0) * w[j]).sum::<f64>() / 14.0;
        c0 + c1 * at + c2 * (at * at - 2.0)
    };
    let head = &y[..5];
    out[0] = fit_eval(head, -2.0);
    out[1] = fit_eval(head, -1.0);
    let tail = &y[n - 5..];
    out[n - 2] = fit_eval(tail, 1.0);
    out[n - 1] = fit_eval(tail, 2.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_identical_samples_is_zero() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        let b: Vec<f64> = a.iter().map(|x| x + 1000.0).collect();
        assert_eq!(ks_two_sample(&a, &b), 1.0);
    }

    #[test]
    fn ks_one_sample_on_uniform_grid() {
        let s: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let d = ks_one_sample(&s, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.0005).abs() < 1e-12);
    }

    #[test]
    fn clopper_pearson_bounds() {
        // zero successes: 1 - alpha^{1/n}
        let u = clopper_pearson_upper(0, 1000, 0.99);
        assert!((u - (1.0 - 0.01f64.powf(1e-3))).abs() < 1e-15);
        // one success out of 10: exact upper 99% bound solves P(X<=1)=0.01
        let u = clopper_pearson_upper(1, 10, 0.99);
        let cdf = (1.0 - u).powi(10) + 10.0 * u * (1.0 - u).powi(9);
        assert!((cdf - 0.01).abs() < 1e-9);
        assert_eq!(clopper_pearson_upper(5, 5, 0.99), 1.0);
    }

    #[test]
    fn trapezoid_linear_exact() {
        let x = [0.0, 0.5, 2.0];
        let y = [1.0, 2.0, 5.0];
        assert!((trapezoid(&x, &y) - 6.0).abs() < 1e-15);
    }

    #[test]
    fn savgol_preserves_quadratics() {
        let y: Vec<f64> = (0..9).map(|i| 1.0 + 0.5 * i as f64 - 0.25 * (i * i) as f64).collect();
        let s = savgol_quadratic5(&y);
        for (a, b) in s.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
