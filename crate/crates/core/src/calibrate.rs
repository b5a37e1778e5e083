//! Noise calibration: the σ-solver, equal-privacy families across β and
//! tail weights of the calibrated noise.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::accountant::{account, AccountOptions, Target};
use crate::dist::GGParams;
use crate::error::{domain, Error, Result};
use crate::exec::{self, derive_seed_from};
use crate::prv::MechanismSpec;
use crate::stats::savgol_quadratic5;

const MAX_STEPS: usize = 200;

/// An `(ε, δ)` target for `compositions` runs of a (possibly subsampled)
/// mechanism with the given sensitivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyTarget {
    pub epsilon: f64,
    pub delta: f64,
    /// Solver tolerance `τ_solve` on `ε`.
    pub tolerance: f64,
    pub compositions: usize,
    pub sample_rate: Option<f64>,
    pub sensitivity: f64,
}

impl PrivacyTarget {
    pub fn new(epsilon: f64, delta: f64, tolerance: f64) -> Result<Self> {
        let t = Self { epsilon, delta, tolerance, compositions: 1, sample_rate: None, sensitivity: 1.0 };
        t.validate()?;
        Ok(t)
    }

    pub fn with_compositions(mut self, k: usize) -> Self {
        self.compositions = k;
        self
    }

    pub fn with_sample_rate(mut self, q: Option<f64>) -> Self {
        self.sample_rate = q;
        self
    }

    pub fn with_sensitivity(mut self, sensitivity: f64) -> Self {
        self.sensitivity = sensitivity;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(domain(format!("target epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(domain(format!("target delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.tolerance > 0.0) {
            return Err(domain(format!("solver tolerance must be positive, got {}", self.tolerance)));
        }
        // spec construction checks the rest
        MechanismSpec::new(GGParams::laplace(1.0)?, self.sensitivity, self.sample_rate, self.compositions)?;
        Ok(())
    }

    pub fn mechanism(&self, noise: GGParams) -> Result<MechanismSpec> {
        MechanismSpec::new(noise, self.sensitivity, self.sample_rate, self.compositions)
    }
}

/// One accountant evaluation made by the solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub sigma: f64,
    pub epsilon: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub beta: f64,
    /// The conservative end of the final bracket.
    pub sigma: f64,
    /// `ε` measured at `sigma`.
    pub epsilon: f64,
    /// Seed of the accountant run at `sigma`, for re-accounting.
    pub seed: u64,
    pub bracket: (f64, f64),
    pub probes: Vec<Probe>,
}

/// Seed of the accountant run the solver makes at `(β, σ)`.
pub fn probe_seed(seed: u64, beta: f64, sigma: f64) -> u64 {
    derive_seed_from(seed, &[beta.to_bits(), sigma.to_bits()])
}

struct Prober<'a> {
    beta: f64,
    target: &'a PrivacyTarget,
    opts: &'a AccountOptions,
    seed: u64,
    seen: BTreeMap<u64, Probe>,
}

impl Prober<'_> {
    fn epsilon(&mut self, sigma: f64) -> Result<f64> {
        if let Some(p) = self.seen.get(&sigma.to_bits()) {
            return Ok(p.epsilon);
        }
        let noise = GGParams::new(self.beta, sigma)?;
        let spec = self.target.mechanism(noise)?;
        let seed = probe_seed(self.seed, self.beta, sigma);
        let epsilon = match account(&spec, self.opts, Target::Epsilon { delta: self.target.delta }, seed) {
            Ok(r) => r.epsilon,
            // δ cannot be reached inside the grid: far more than any target
            Err(Error::OutOfRange { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        self.check_monotone(sigma, epsilon)?;
        self.seen.insert(sigma.to_bits(), Probe { sigma, epsilon, seed });
        Ok(epsilon)
    }

    /// `ε(σ)` must be non-increasing, up to half the tolerance of jitter.
    fn check_monotone(&self, sigma: f64, epsilon: f64) -> Result<()> {
        let slack = 0.5 * self.target.tolerance;
        for p in self.seen.values() {
            let ((s0, e0), (s1, e1)) = if p.sigma < sigma {
                ((p.sigma, p.epsilon), (sigma, epsilon))
            } else {
                ((sigma, epsilon), (p.sigma, p.epsilon))
            };
            if e1 > e0 + slack {
                return Err(Error::Inconsistent(format!(
                    "epsilon rose from {e0:.4} at sigma {s0:.6} to {e1:.4} at sigma {s1:.6}"
                )));
            }
        }
        Ok(())
    }
}

/// Smallest-found `σ` (up to the tolerance) whose `ε` at `target.delta` does
/// not exceed `target.epsilon`.
///
/// Halves `σ_min` from `Δ` until `ε(σ_min) > ε*`, doubles `σ_max` from `Δ`
/// until `ε(σ_max) ≤ ε*`, then bisects until `ε* - ε(σ_max) ≤ τ_solve`.
/// Each probe runs the accountant with a seed derived from `(seed, β, σ)`.
pub fn solve_sigma(beta: f64, target: &PrivacyTarget, opts: &AccountOptions, seed: u64) -> Result<SolveResult> {
    target.validate()?;
    GGParams::new(beta, 1.0)?;
    let eps = target.epsilon;
    let mut p = Prober { beta, target, opts, seed, seen: BTreeMap::new() };

    let mut lo = target.sensitivity;
    let mut steps = 0;
    while p.epsilon(lo)? <= eps {
        lo /= 2.0;
        steps += 1;
        if steps > MAX_STEPS || GGParams::new(beta, lo).is_err() {
            return Err(Error::SolverRange(format!("epsilon stays below {eps} as sigma shrinks to {lo:e}")));
        }
    }
    let mut hi = target.sensitivity;
    steps = 0;
    while p.epsilon(hi)? > eps {
        hi *= 2.0;
        steps += 1;
        if steps > MAX_STEPS || GGParams::new(beta, hi).is_err() {
            return Err(Error::SolverRange(format!("epsilon stays above {eps} as sigma grows to {hi:e}")));
        }
    }
    lo = lo.max(p.seen.values().filter(|q| q.epsilon > eps).map(|q| q.sigma).fold(lo, f64::max));
    hi = p.seen.values().filter(|q| q.epsilon <= eps).map(|q| q.sigma).fold(hi, f64::min);

    steps = 0;
    while eps - p.epsilon(hi)? > target.tolerance {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if p.epsilon(mid)? > eps {
            lo = mid;
        } else {
            hi = mid;
        }
        steps += 1;
        if steps > MAX_STEPS {
            return Err(Error::SolverRange(format!("bisection did not converge in {MAX_STEPS} steps")));
        }
    }

    let last = p.seen[&hi.to_bits()];
    let mut probes: Vec<Probe> = p.seen.into_values().collect();
    probes.sort_by(|a, b| a.sigma.total_cmp(&b.sigma));
    Ok(SolveResult { beta, sigma: hi, epsilon: last.epsilon, seed: last.seed, bracket: (lo, hi), probes })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyRow {
    pub beta: f64,
    pub sigma: f64,
}

/// Mechanisms across `β` that meet the same privacy target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub target: PrivacyTarget,
    pub rows: Vec<FamilyRow>,
    /// Whether `σ` strictly increases with `β`. Reported, not enforced.
    pub sigma_increasing: bool,
    pub solves: Vec<SolveResult>,
}

impl Family {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["beta", "sigma"])?;
        for r in &self.rows {
            w.write_record([r.beta.to_string(), r.sigma.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn equivalent_family(betas: &[f64], target: &PrivacyTarget, opts: &AccountOptions, seed: u64) -> Result<Family> {
    if betas.is_empty() {
        return Err(domain("beta grid is empty"));
    }
    let mut betas = betas.to_vec();
    betas.sort_by(f64::total_cmp);
    betas.dedup();
    let solves = exec::map_slice(&betas, |&b| solve_sigma(b, target, opts, seed))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<FamilyRow> = solves.iter().map(|s| FamilyRow { beta: s.beta, sigma: s.sigma }).collect();
    let sigma_increasing = rows.windows(2).all(|w| w[1].sigma > w[0].sigma);
    Ok(Family { target: *target, rows, sigma_increasing, solves })
}

/// Cutoffs at which to measure the tail mass of calibrated noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailQuery {
    pub cutoffs: Vec<f64>,
    pub target: PrivacyTarget,
    pub betas: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub beta: f64,
    pub sigma: f64,
    pub tau: f64,
    pub weight: f64,
    /// Savitzky–Golay smoothed weight along the β series, when requested.
    pub smoothed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailTable {
    pub rows: Vec<TailRow>,
}

impl TailTable {
    /// `β` with the smallest raw weight at the given cutoff.
    pub fn argmin_beta(&self, tau: f64) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.tau == tau)
            .min_by(|a, b| a.weight.total_cmp(&b.weight))
            .map(|r| r.beta)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let smoothed = self.rows.iter().any(|r| r.smoothed.is_some());
        if smoothed {
            w.write_record(["beta", "tau", "weight", "smoothed"])?;
        } else {
            w.write_record(["beta", "tau", "weight"])?;
        }
        for r in &self.rows {
            let mut rec = vec![r.beta.to_string(), r.tau.to_string(), r.weight.to_string()];
            if smoothed {
                rec.push(r.smoothed.map_or(String::new(), |s| s.to_string()));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Tail mass `w = Pr[|Z| ≥ τ]` of the noise calibrated for each `β`.
pub fn tail_weight(query: &TailQuery, opts: &AccountOptions, seed: u64, smooth: bool) -> Result<TailTable> {
    if query.cutoffs.iter().any(|t| !(*t >= 0.0)) {
        return Err(domain("tail cutoffs must be non-negative"));
    }
    let family = equivalent_family(&query.betas, &query.target, opts, seed)?;
    tail_weight_for(&family.rows, &query.cutoffs, smooth)
}

/// Tail weights for already calibrated `(β, σ)` rows.
pub fn tail_weight_for(rows: &[FamilyRow], cutoffs: &[f64], smooth: bool) -> Result<TailTable> {
    let mut out = Vec::with_capacity(rows.len() * cutoffs.len());
    for &tau in cutoffs {
        let weights = rows
            .iter()
            .map(|r| Ok(GGParams::new(r.beta, r.sigma)?.tail_weight(tau)))
            .collect::<Result<Vec<f64>>>()?;
        let smoothed = smooth.then(|| savgol_quadratic5(&weights));
        for (i, (r, w)) in rows.iter().zip(&weights).enumerate() {
            out.push(TailRow {
                beta: r.beta,
                sigma: r.sigma,
                tau,
                weight: *w,
                smoothed: smoothed.as_ref().map(|s| s[i]),
            });
        }
    }
    Ok(TailTable { rows: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::erfc;

    fn fast() -> AccountOptions {
        AccountOptions::default().with_samples(100_000).with_half_bins(1 << 12)
    }

    #[test]
    fn laplace_calibrates_to_sensitivity_over_epsilon() {
        let target = PrivacyTarget::new(1.0, 1e-5, 0.05).unwrap();
        let r = solve_sigma(1.0, &target, &fast(), 9).unwrap();
        assert!((r.sigma - 1.0).abs() < 0.06, "{}", r.sigma);
        assert!(r.epsilon <= 1.0 && r.epsilon >= 0.95);
        assert!(r.bracket.0 < r.bracket.1);
    }

    #[test]
    fn deterministic_under_seed() {
        let target = PrivacyTarget::new(2.0, 1e-5, 0.05).unwrap();
        let a = solve_sigma(1.5, &target, &fast(), 4).unwrap();
        let b = solve_sigma(1.5, &target, &fast(), 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn erfc_tail_for_gaussian_rows() {
        let rows = [FamilyRow { beta: 2.0, sigma: 3.7 }];
        let t = tail_weight_for(&rows, &[0.0, 1.0, 2.0, 4.0], false).unwrap();
        assert_eq!(t.rows[0].weight, 1.0);
        for r in &t.rows[1..] {
            assert!((r.weight - erfc(r.tau / 3.7)).abs() < 1e-10);
        }
    }

    #[test]
    fn smoothing_is_optional_and_keeps_raw() {
        let rows: Vec<FamilyRow> =
            (0..7).map(|i| FamilyRow { beta: 1.0 + 0.5 * i as f64, sigma: 1.0 + 0.3 * i as f64 }).collect();
        let t = tail_weight_for(&rows, &[1.0], true).unwrap();
        assert!(t.rows.iter().all(|r| r.smoothed.is_some()));
        let raw = tail_weight_for(&rows, &[1.0], false).unwrap();
        for (a, b) in t.rows.iter().zip(&raw.rows) {
            assert_eq!(a.weight, b.weight);
        }
        let mut buf = Vec::new();
        raw.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("beta,tau,weight\n"));
    }
}
