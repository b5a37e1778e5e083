//! The Generalized Gaussian distribution `N_β(μ, σ)` in scale form:
//!
//! ```text
//! p(x) = β / (2σΓ(1/β)) · exp(-(|x - μ| / σ)^β)
//! ```
//!
//! `β = 1` is Laplace with scale `σ`; `β = 2` is a normal with standard
//! deviation `σ/√2`.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::exec;
use crate::special::{gamma_p, gamma_q, inverse_gamma, ln_gamma};

pub const MIN_BETA: f64 = 1.0;
/// Beyond this exponent the density is numerically a uniform box.
pub const MAX_BETA: f64 = 64.0;
pub const MAX_SIGMA: f64 = 1e12;

/// Shape `β` and scale `σ` of one Generalized Gaussian noise distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GGParams {
    beta: f64,
    sigma: f64,
}

impl GGParams {
    pub fn new(beta: f64, sigma: f64) -> Result<Self> {
        if !(MIN_BETA..=MAX_BETA).contains(&beta) {
            return Err(domain(format!("beta must lie in [{MIN_BETA}, {MAX_BETA}], got {beta}")));
        }
        if !(sigma > 0.0 && sigma <= MAX_SIGMA) {
            return Err(domain(format!("sigma must lie in (0, {MAX_SIGMA:e}], got {sigma}")));
        }
        Ok(Self { beta, sigma })
    }

    /// Laplace distribution with scale `b`.
    pub fn laplace(b: f64) -> Result<Self> {
        Self::new(1.0, b)
    }

    /// Normal distribution with standard deviation `std`.
    pub fn gaussian(std: f64) -> Result<Self> {
        Self::new(2.0, std * std::f64::consts::SQRT_2)
    }

    /// Converts from the power form `exp(-|x|^β / σ_p)` where `σ_p = σ^β`.
    pub fn from_power_form(beta: f64, sigma_power: f64) -> Result<Self> {
        if !(sigma_power > 0.0) {
            return Err(domain(format!("power-form sigma must be positive, got {sigma_power}")));
        }
        Self::new(beta, sigma_power.powf(1.0 / beta))
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `σ^β`, the scale of the power-form parameterization.
    pub fn power_sigma(&self) -> f64 {
        self.sigma.powf(self.beta)
    }

    /// Same shape, scale multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.beta, self.sigma * factor)
    }

    fn shape(&self) -> f64 {
        1.0 / self.beta
    }

    fn ln_normalizer(&self) -> f64 {
        self.beta.ln() - (2.0 * self.sigma).ln() - ln_gamma(self.shape())
    }

    /// `(|x| / σ)^β`
    fn reduced(&self, x: f64) -> f64 {
        (x.abs() / self.sigma).powf(self.beta)
    }

    pub fn pdf(&self, mu: f64, x: f64) -> f64 {
        (self.ln_normalizer() - self.reduced(x - mu)).exp()
    }

    pub fn ln_pdf(&self, mu: f64, x: f64) -> f64 {
        self.ln_normalizer() - self.reduced(x - mu)
    }

    /// CDF of the distribution centred at zero.
    pub fn cdf(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.5;
        }
        let z = self.reduced(x);
        if x > 0.0 {
            1.0 - 0.5 * gamma_q(self.shape(), z)
        } else {
            0.5 * gamma_q(self.shape(), z)
        }
    }

    /// Survival function `1 - cdf(x)` without cancellation in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        self.cdf(-x)
    }

    /// Two-sided tail mass `P(|Z| > cutoff)`.
    pub fn tail_weight(&self, cutoff: f64) -> f64 {
        if cutoff <= 0.0 {
            return 1.0;
        }
        gamma_q(self.shape(), self.reduced(cutoff))
    }

    /// `P(|Z| <= r)`.
    pub fn central_mass(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        gamma_p(self.shape(), self.reduced(r))
    }

    /// Inverse CDF for `u ∈ (0, 1)`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(domain(format!("quantile level must lie in (0, 1), got {u}")));
        }
        if u == 0.5 {
            return Ok(0.0);
        }
        let tail = 2.0 * u.min(1.0 - u);
        let z = inverse_gamma(self.shape(), tail, true);
        let x = self.sigma * z.powf(1.0 / self.beta);
        Ok(if u > 0.5 { x } else { -x })
    }

    /// `E|Z|^k = σ^k Γ((k+1)/β) / Γ(1/β)`.
    pub fn absolute_moment(&self, order: f64) -> Result<f64> {
        if !(order >= 0.0) {
            return Err(domain(format!("moment order must be non-negative, got {order}")));
        }
        let ln = order * self.sigma.ln() + ln_gamma((order + 1.0) / self.beta)
            - ln_gamma(self.shape());
        Ok(ln.exp())
    }

    pub fn variance(&self) -> f64 {
        self.absolute_moment(2.0).expect("order 2 is valid")
    }

    /// Builds a reusable sampler.
    pub fn sampler(&self) -> GGSampler {
        GGSampler {
            params: *self,
            gamma: Gamma::new(self.shape(), 1.0).expect("shape and scale are positive"),
        }
    }

    /// Draws `count` i.i.d. values from `N_β(0, σ)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        let s = self.sampler();
        (0..count).map(|_| s.draw(rng)).collect()
    }

    /// Draws `count` values with chunked streams derived from `seed`; the
    /// output does not depend on the number of worker threads.
    pub fn sample_seeded(&self, seed: u64, count: usize) -> Vec<f64> {
        let s = self.sampler();
        let mut out = vec![0.0; count];
        exec::fill_seeded(seed, &mut out, |rng, chunk| s.fill(rng, chunk));
        out
    }
}

/// Gamma-transform sampler: `Z = S · σ · G^{1/β}` with `G ~ Gamma(1/β, 1)` and
/// a uniform random sign `S`.
#[derive(Debug, Clone)]
pub struct GGSampler {
    params: GGParams,
    gamma: Gamma<f64>,
}

impl GGSampler {
    pub fn params(&self) -> GGParams {
        self.params
    }

    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let g: f64 = self.gamma.sample(rng);
        let magnitude = self.params.sigma * magnitude_root(g, self.params.beta);
        if rng.random::<bool>() {
            magnitude
        } else {
            -magnitude
        }
    }

    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for v in out {
            *v = self.draw(rng);
        }
    }
}

#[inline]
fn magnitude_root(g: f64, beta: f64) -> f64 {
    if beta == 1.0 {
        g
    } else if beta == 2.0 {
        g.sqrt()
    } else {
        g.powf(1.0 / beta)
    }
}

/// `ℓ_β` norm of a vector, scaled by the largest magnitude to avoid
/// overflow in `|x|^β`.
pub fn lbeta_norm(v: &[f64], beta: f64) -> f64 {
    let max = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if max == 0.0 || !max.is_finite() {
        return max;
    }
    let sum: f64 = v.iter().map(|x| (x.abs() / max).powf(beta)).sum();
    max * sum.powf(1.0 / beta)
}
