//! Privacy-loss random variables (PRVs) for Generalized Gaussian mechanisms.
//!
//! For the worst-case pair `Q = N_β(0, σ)` and `P = N_β(Δ, σ)` the loss is
//!
//! ```text
//! ℓ(t) = log Q(t)/P(t) = (|t - Δ|^β - |t|^β) / σ^β
//! ```
//!
//! and the PRV is `ℓ(t)` with `t ~ Q`. Poisson subsampling at rate `q`
//! replaces `P` by the mixture `M = (1-q)Q + qP`; both orderings of the pair
//! are exposed through [`LossSampleDirection`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{lbeta_norm, GGParams, GGSampler};
use crate::error::{domain, input, Error, Result};
use crate::exec::{self, ChunkRng};
use crate::special::{log_add_exp, normal_cdf};

/// A mechanism instance to account for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    pub noise: GGParams,
    /// `Δ`, measured in the `ℓ_β` norm of `noise.beta`.
    pub sensitivity: f64,
    pub sample_rate: Option<f64>,
    pub compositions: usize,
}

impl MechanismSpec {
    pub fn new(
        noise: GGParams,
        sensitivity: f64,
        sample_rate: Option<f64>,
        compositions: usize,
    ) -> Result<Self> {
        if !(sensitivity > 0.0 && sensitivity.is_finite()) {
            return Err(domain(format!("sensitivity must be positive, got {sensitivity}")));
        }
        if let Some(q) = sample_rate {
            if !(q > 0.0 && q <= 1.0) {
                return Err(domain(format!("sample rate must lie in (0, 1], got {q}")));
            }
        }
        if compositions == 0 {
            return Err(domain("compositions must be at least 1"));
        }
        Ok(Self { noise, sensitivity, sample_rate, compositions })
    }

    /// Single release of the unsampled mechanism.
    pub fn plain(noise: GGParams, sensitivity: f64) -> Result<Self> {
        Self::new(noise, sensitivity, None, 1)
    }

    pub fn with_compositions(mut self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(domain("compositions must be at least 1"));
        }
        self.compositions = k;
        Ok(self)
    }

    pub fn with_sample_rate(self, q: f64) -> Result<Self> {
        Self::new(self.noise, self.sensitivity, Some(q), self.compositions)
    }

    /// Whether the pair needs both orderings accounted separately.
    pub fn is_subsampled(&self) -> bool {
        matches!(self.sample_rate, Some(q) if q < 1.0)
    }

    /// The orderings that have to be composed for this mechanism. Plain GG
    /// is symmetric (`X =d -Y`) so a single direction suffices.
    pub fn directions(&self) -> &'static [LossSampleDirection] {
        if self.is_subsampled() {
            &[LossSampleDirection::Remove, LossSampleDirection::Add]
        } else {
            &[LossSampleDirection::Add]
        }
    }

    /// `ℓ(t)` for the unsampled mechanism.
    pub fn loss_function(&self, t: f64) -> Result<f64> {
        if self.sample_rate.is_some() {
            return Err(input("loss_function expects a mechanism without subsampling"));
        }
        Ok(plain_loss(&self.noise, self.sensitivity, t))
    }

    /// Log-ratio of the subsampled pair at `t`.
    pub fn subsampled_loss_function(&self, t: f64, dir: LossSampleDirection) -> Result<f64> {
        let q = self
            .sample_rate
            .ok_or_else(|| input("subsampled_loss_function requires a sample rate"))?;
        let l = plain_loss(&self.noise, self.sensitivity, t);
        Ok(subsampled_from_loss(q, l, dir))
    }

    /// Sampler for the PRV in the given direction.
    pub fn prv(&self, dir: LossSampleDirection) -> GGPrv {
        GGPrv::new(*self, dir)
    }
}

/// Which ordering of the dominating pair the PRV describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossSampleDirection {
    /// `log M(t)/Q(t)` with `t ~ M`.
    Remove,
    /// `log Q(t)/M(t)` with `t ~ Q`.
    Add,
}

/// `(|t - Δ|^β - |t|^β) / σ^β`, evaluated in units of `σ`.
#[inline]
pub fn plain_loss(noise: &GGParams, sensitivity: f64, t: f64) -> f64 {
    let (b, s) = (noise.beta(), noise.sigma());
    let shifted = ((t - sensitivity).abs() / s).powf(b);
    let centred = (t.abs() / s).powf(b);
    shifted - centred
}

/// Maps the plain loss `ℓ(t)` at a point to the subsampled log-ratio.
#[inline]
pub fn subsampled_from_loss(q: f64, loss: f64, dir: LossSampleDirection) -> f64 {
    let remove = if q >= 1.0 {
        -loss
    } else {
        // log(1 - q + q e^{-ℓ})
        log_add_exp((-q).ln_1p(), q.ln() - loss)
    };
    match dir {
        LossSampleDirection::Remove => remove,
        LossSampleDirection::Add => -remove,
    }
}

/// Anything that can produce i.i.d. draws of a PRV from a chunk stream.
pub trait PrvSampler: Sync {
    fn fill(&self, rng: &mut ChunkRng, out: &mut [f64]);

    /// Known bound on `|Y|`, when the PRV has bounded support.
    fn support_bound(&self) -> Option<f64> {
        None
    }

    fn describe(&self) -> String;
}

/// Sample-access PRV of a (possibly subsampled) GG mechanism.
#[derive(Debug, Clone)]
pub struct GGPrv {
    spec: MechanismSpec,
    dir: LossSampleDirection,
    sampler: GGSampler,
}

impl GGPrv {
    pub fn new(spec: MechanismSpec, dir: LossSampleDirection) -> Self {
        Self { spec, dir, sampler: spec.noise.sampler() }
    }

    pub fn spec(&self) -> &MechanismSpec {
        &self.spec
    }

    pub fn direction(&self) -> LossSampleDirection {
        self.dir
    }

    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let spec = &self.spec;
        match spec.sample_rate {
            Some(q) if q < 1.0 => {
                let from_p = self.dir == LossSampleDirection::Remove && rng.random::<f64>() < q;
                let z = self.sampler.draw(rng);
                let l = plain_loss(&spec.noise, spec.sensitivity, z);
                // t = Δ - z ~ P has ℓ(t) = -ℓ(z)
                let l = if from_p { -l } else { l };
                subsampled_from_loss(q, l, self.dir)
            }
            // q = 1 or no subsampling: both orderings reduce to ℓ(z), z ~ Q
            _ => {
                let z = self.sampler.draw(rng);
                plain_loss(&spec.noise, spec.sensitivity, z)
            }
        }
    }
}

impl PrvSampler for GGPrv {
    fn fill(&self, rng: &mut ChunkRng, out: &mut [f64]) {
        for v in out {
            *v = self.draw(rng);
        }
    }

    fn support_bound(&self) -> Option<f64> {
        if self.spec.noise.beta() != 1.0 {
            return None;
        }
        let a = self.spec.sensitivity / self.spec.noise.sigma();
        match self.spec.sample_rate {
            Some(q) if q < 1.0 => {
                let hi = log_add_exp((-q).ln_1p(), q.ln() + a);
                let lo = log_add_exp((-q).ln_1p(), q.ln() - a);
                Some(hi.abs().max(lo.abs()))
            }
            _ => Some(a),
        }
    }

    fn describe(&self) -> String {
        let s = &self.spec;
        format!(
            "gg(beta={}, sigma={}, sensitivity={}, q={}, dir={:?})",
            s.noise.beta(),
            s.noise.sigma(),
            s.sensitivity,
            s.sample_rate.map_or("none".to_string(), |q| q.to_string()),
            self.dir
        )
    }
}

/// Draws `count` PRV samples with chunked streams derived from `seed`.
pub fn sample_prv(spec: &MechanismSpec, dir: LossSampleDirection, seed: u64, count: usize) -> Vec<f64> {
    let prv = spec.prv(dir);
    let mut out = vec![0.0; count];
    exec::fill_seeded(seed, &mut out, |rng, chunk| prv.fill(rng, chunk));
    out
}

/// Closed-form PRVs used as oracles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferencePrv {
    /// Gaussian mechanism with noise standard deviation `std`.
    Gaussian { std: f64, sensitivity: f64 },
    /// Laplace mechanism with scale `scale`.
    Laplace { scale: f64, sensitivity: f64 },
}

impl ReferencePrv {
    /// Exact CDF of the PRV.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            ReferencePrv::Gaussian { std, sensitivity } => {
                let mu = sensitivity * sensitivity / (2.0 * std * std);
                let sd = sensitivity / std;
                normal_cdf((x - mu) / sd)
            }
            ReferencePrv::Laplace { scale, sensitivity } => {
                let a = sensitivity / scale;
                if x < -a {
                    0.0
                } else if x >= a {
                    1.0
                } else {
                    0.5 * (-(a - x) / 2.0).exp()
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ReferencePrv::Gaussian { std, sensitivity } => {
                sensitivity * sensitivity / (2.0 * std * std)
            }
            ReferencePrv::Laplace { scale, sensitivity } => {
                let a = sensitivity / scale;
                a - 1.0 + (-a).exp()
            }
        }
    }

    /// Exact privacy curve `δ(ε)` of the mechanism.
    pub fn delta(&self, eps: f64) -> f64 {
        match *self {
            ReferencePrv::Gaussian { std, sensitivity } => {
                let r = sensitivity / std;
                let d = normal_cdf(r / 2.0 - eps / r) - eps.exp() * normal_cdf(-r / 2.0 - eps / r);
                d.max(0.0)
            }
            ReferencePrv::Laplace { scale, sensitivity } => {
                let a = sensitivity / scale;
                if eps >= a {
                    0.0
                } else {
                    1.0 - ((eps - a) / 2.0).exp()
                }
            }
        }
    }

    /// Inverse of [`Self::delta`] by bisection.
    pub fn epsilon(&self, delta: f64) -> f64 {
        if self.delta(0.0) <= delta {
            return 0.0;
        }
        let mut hi = 1.0;
        while self.delta(hi) > delta {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.delta(mid) > delta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

/// Largest dimension accepted by [`multidim_prv_sample`].
pub const MAX_MULTIDIM: usize = 64;

/// PRV samples of the `d`-dimensional GG mechanism with difference vector
/// `mu`: `Σ_i (|t_i - μ_i|^β - |t_i|^β) / σ^β` with `t ~ N_β(0, σ)^d`.
pub fn multidim_prv_sample(
    noise: GGParams,
    mu: &[f64],
    sensitivity: f64,
    seed: u64,
    count: usize,
) -> Result<Vec<f64>> {
    if noise.beta() > 2.0 {
        return Err(domain(format!(
            "multidimensional PRVs are only dimension-free for beta <= 2, got {}",
            noise.beta()
        )));
    }
    if mu.is_empty() || mu.len() > MAX_MULTIDIM {
        return Err(input(format!("dimension must lie in [1, {MAX_MULTIDIM}], got {}", mu.len())));
    }
    let norm = lbeta_norm(mu, noise.beta());
    if (norm - sensitivity).abs() > 1e-9 * sensitivity.max(1.0) {
        return Err(Error::Input(format!(
            "difference vector has l_beta norm {norm}, expected sensitivity {sensitivity}"
        )));
    }
    let sampler = noise.sampler();
    let d = mu.len();
    let mut out = vec![0.0; count];
    exec::fill_seeded(seed, &mut out, |rng, chunk| {
        for v in chunk.iter_mut() {
            let mut acc = 0.0;
            for &m in mu.iter().take(d) {
                let t = sampler.draw(rng);
                acc += plain_loss(&noise, m, t);
            }
            *v = acc;
        }
    });
    Ok(out)
}
