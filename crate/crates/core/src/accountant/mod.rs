//! The sampled PRV accountant.
//!
//! PRVs are sampled, binned onto a truncated grid, composed with FFT
//! convolution, and turned into `δ(ε)`. Every result carries the `(η, τ)`
//! error of the sampled approximation.

mod bounds;
mod compose;
mod config;
mod curve;
mod discrete;

pub use bounds::{error_bounds, tail_single_bound, tail_sum_bound, ErrorBounds};
pub use compose::{compose, SpectralPrv};
pub use config::{AccountOptions, AccountantConfig};
pub use curve::{delta_of_epsilon, epsilon_of_delta, CurveConfig, DeltaTable, PrivacyCurve};
pub use discrete::{discretize_from_cdf, discretize_from_samples, DiscretePrv, SampleStats};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, derive_seed};
use crate::prv::{GGPrv, LossSampleDirection, MechanismSpec, PrvSampler};

/// What to read off the composed curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Target {
    /// `ε` at the given `δ`.
    Epsilon { delta: f64 },
    /// `δ` at the given `ε`.
    Delta { epsilon: f64 },
}

/// Per-direction bookkeeping of an accountant run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    pub direction: LossSampleDirection,
    pub acceptance_rate: f64,
    pub tail_single: f64,
    pub tail_sum: f64,
    pub bounds: ErrorBounds,
}

/// Point estimate plus the conservative ends `ε + τ` and `δ + η`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountResult {
    pub epsilon: f64,
    pub delta: f64,
    pub eta: f64,
    pub tau: f64,
    pub epsilon_upper: f64,
    pub delta_upper: f64,
    pub directions: Vec<DirectionReport>,
    pub curve: PrivacyCurve,
}

/// Moments of a pilot run, used to size the grid and bound the tails.
#[derive(Debug, Clone)]
pub struct Pilot {
    pub samples: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub max_abs: f64,
}

impl Pilot {
    pub fn draw<S: PrvSampler + ?Sized>(prv: &S, count: usize, seed: u64) -> Self {
        let mut samples = vec![0.0; count.max(2)];
        exec::fill_seeded(seed, &mut samples, |rng, chunk| prv.fill(rng, chunk));
        let mean = crate::stats::mean(&samples);
        let std = crate::stats::variance(&samples).sqrt();
        let max_abs = samples.iter().fold(0.0_f64, |m, y| m.max(y.abs()));
        Self { samples, mean, std, max_abs }
    }

    /// `|k·mean| + c·√k·std`, never below the largest pilot draw.
    pub fn truncation(&self, k: usize, tail_sigmas: f64) -> f64 {
        let kf = k as f64;
        let l = (kf * self.mean).abs() + tail_sigmas * kf.sqrt() * self.std;
        l.max(self.max_abs).max(1e-6)
    }
}

const PILOT_TAG: u64 = 0x7069_6c6f_74;

fn direction_tag(dir: LossSampleDirection) -> u64 {
    match dir {
        LossSampleDirection::Remove => 1,
        LossSampleDirection::Add => 2,
    }
}

struct Direction {
    dir: LossSampleDirection,
    prv: GGPrv,
    pilot: Pilot,
}

fn prepare(spec: &MechanismSpec, opts: &AccountOptions, max_k: usize, seed: u64) -> Result<(Vec<Direction>, AccountantConfig)> {
    let dirs: Vec<Direction> = spec
        .directions()
        .iter()
        .map(|&dir| {
            let prv = spec.prv(dir);
            let pilot_seed = derive_seed(derive_seed(seed, PILOT_TAG), direction_tag(dir));
            let pilot = Pilot::draw(&prv, opts.pilot_samples, pilot_seed);
            Direction { dir, prv, pilot }
        })
        .collect();
    let trunc = match opts.trunc_l {
        Some(l) => l,
        None => dirs
            .iter()
            .map(|d| d.pilot.truncation(max_k, opts.tail_sigmas))
            .fold(0.0, f64::max),
    };
    if !trunc.is_finite() {
        return Err(Error::Truncation(format!("pilot run produced a non-finite truncation for {}", spec_label(spec))));
    }
    let cfg = opts.config_for(trunc)?;
    Ok((dirs, cfg))
}

fn spec_label(spec: &MechanismSpec) -> String {
    format!("beta={} sigma={}", spec.noise.beta(), spec.noise.sigma())
}

/// Accounts for `spec.compositions` runs of a GG or sampled GG mechanism.
///
/// Subsampled mechanisms compose both orderings of the pair and report the
/// larger `δ(ε)` (equivalently the larger `ε(δ)`).
pub fn account(spec: &MechanismSpec, opts: &AccountOptions, target: Target, seed: u64) -> Result<AccountResult> {
    let k = spec.compositions;
    let (dirs, cfg) = prepare(spec, opts, k, seed)?;
    let t = cfg.t();

    let mut tables = Vec::with_capacity(dirs.len());
    let mut reports = Vec::with_capacity(dirs.len());
    for d in &dirs {
        let single = discretize_from_samples(&d.prv, &cfg, derive_seed(seed, direction_tag(d.dir)))?;
        let composed = if k == 1 { single.clone() } else { SpectralPrv::new(&single).power(k).to_prv() };
        let stats = single.sample_stats().expect("sampled discretization");
        let support = d.prv.support_bound();
        let tail_single = tail_single_bound(stats, support, cfg.trunc_l);
        let tail_sum = tail_sum_bound(&d.pilot.samples, k, support, cfg.trunc_l - t);
        reports.push(DirectionReport {
            direction: d.dir,
            acceptance_rate: stats.acceptance_rate(),
            tail_single,
            tail_sum,
            bounds: error_bounds(&cfg, k, tail_single, tail_sum),
        });
        tables.push(DeltaTable::new(&composed));
    }

    let eta = reports.iter().map(|r| r.bounds.eta).fold(0.0, f64::max);
    let tau = reports.iter().map(|r| r.bounds.tau).fold(0.0, f64::max);
    let (epsilon, delta) = match target {
        Target::Epsilon { delta } => {
            if !(delta > 0.0 && delta < 1.0) {
                return Err(Error::Domain(format!("delta must lie in (0, 1), got {delta}")));
            }
            let mut eps = 0.0_f64;
            for t in &tables {
                eps = eps.max(t.epsilon(delta)?);
            }
            (eps, delta)
        }
        Target::Delta { epsilon } => {
            if !(epsilon >= 0.0) {
                return Err(Error::Domain(format!("epsilon must be non-negative, got {epsilon}")));
            }
            let d = if epsilon >= cfg.trunc_l {
                0.0
            } else {
                tables.iter().map(|t| t.delta(epsilon)).fold(0.0, f64::max)
            };
            (epsilon, d)
        }
    };

    let curve = PrivacyCurve::tabulate(
        &tables,
        eta,
        tau,
        CurveConfig {
            accountant: cfg,
            compositions: k,
            directions: dirs.iter().map(|d| d.dir).collect(),
            seed,
        },
        *spec,
    );
    Ok(AccountResult {
        epsilon,
        delta,
        eta,
        tau,
        epsilon_upper: epsilon + tau,
        delta_upper: (delta + eta).min(1.0),
        directions: reports,
        curve,
    })
}

/// Running accountant for a mechanism that is applied repeatedly, such as
/// one noisy gradient step. The single-step PRVs are discretized once on a
/// grid sized for `max_steps` and kept in the frequency domain.
#[derive(Debug, Clone)]
pub struct StepAccountant {
    spec: MechanismSpec,
    cfg: AccountantConfig,
    spectra: Vec<SpectralPrv>,
    max_steps: usize,
}

impl StepAccountant {
    pub fn new(spec: &MechanismSpec, opts: &AccountOptions, max_steps: usize, seed: u64) -> Result<Self> {
        if max_steps == 0 {
            return Err(Error::Input("max_steps must be at least 1".into()));
        }
        let (dirs, cfg) = prepare(spec, opts, max_steps, seed)?;
        let mut spectra = Vec::with_capacity(dirs.len());
        for d in &dirs {
            let single = discretize_from_samples(&d.prv, &cfg, derive_seed(seed, direction_tag(d.dir)))?;
            spectra.push(SpectralPrv::new(&single));
        }
        Ok(Self { spec: *spec, cfg, spectra, max_steps })
    }

    pub fn config(&self) -> &AccountantConfig {
        &self.cfg
    }

    pub fn spec(&self) -> &MechanismSpec {
        &self.spec
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    /// `ε` at `delta` after `steps` applications.
    pub fn epsilon_after(&self, steps: usize, delta: f64) -> Result<f64> {
        if steps == 0 {
            return Ok(0.0);
        }
        let mut eps = 0.0_f64;
        for s in &self.spectra {
            let table = DeltaTable::new(&s.power(steps).to_prv());
            eps = eps.max(table.epsilon(delta)?);
        }
        Ok(eps)
    }

    /// Largest step count in `[0, max_steps]` whose `ε` stays within `target`.
    pub fn max_steps_within(&self, target: f64, delta: f64) -> Result<usize> {
        let one = self.epsilon_after(1, delta)?;
        if one > target {
            return Err(Error::Budget { min_epsilon: one, target });
        }
        let (mut lo, mut hi) = (1usize, self.max_steps);
        if self.epsilon_after(hi, delta)? <= target {
            return Ok(hi);
        }
        // ε(lo) <= target < ε(hi)
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.epsilon_after(mid, delta)? <= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }
}
