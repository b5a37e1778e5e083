use crate::error::{Error, Result};
use crate::exec::{self, chunk_rng, CHUNK_LEN};
use crate::prv::PrvSampler;

use super::config::AccountantConfig;

/// Draw counts from a sampled discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleStats {
    pub draws: u64,
    pub accepted: u64,
}

impl SampleStats {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.draws as f64
    }

    pub fn rejected(&self) -> u64 {
        self.draws - self.accepted
    }
}

/// A PRV living on the grid `{(j - m)·h + offset : j = 0..2m}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePrv {
    mesh: f64,
    half_bins: usize,
    probs: Vec<f64>,
    offset: f64,
    source: String,
    stats: Option<SampleStats>,
}

impl DiscretePrv {
    /// Builds a PRV from explicit bin masses. The masses are renormalised.
    pub fn from_probs(
        mesh: f64,
        half_bins: usize,
        probs: Vec<f64>,
        offset: f64,
        source: impl Into<String>,
    ) -> Result<Self> {
        if probs.len() != 2 * half_bins + 1 {
            return Err(Error::Config(format!(
                "expected {} bins, got {}",
                2 * half_bins + 1,
                probs.len()
            )));
        }
        if probs.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(Error::Input("bin masses must be finite and non-negative".into()));
        }
        let total: f64 = probs.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Input("bin masses sum to zero".into()));
        }
        let probs = probs.into_iter().map(|p| p / total).collect();
        Ok(Self { mesh, half_bins, probs, offset, source: source.into(), stats: None })
    }

    /// All mass on the grid point nearest to `y`.
    pub fn point_mass(cfg: &AccountantConfig, y: f64) -> Result<Self> {
        let m = cfg.half_bins();
        let j = bin_of(y, cfg.mesh_h, m).ok_or_else(|| {
            Error::Truncation(format!("point {y} lies outside [-{0}, {0}]", cfg.trunc_l))
        })?;
        let mut probs = vec![0.0; 2 * m + 1];
        probs[j] = 1.0;
        Self::from_probs(cfg.mesh_h, m, probs, 0.0, format!("point({y})"))
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    pub fn half_bins(&self) -> usize {
        self.half_bins
    }

    pub fn trunc(&self) -> f64 {
        self.mesh * self.half_bins as f64
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn sample_stats(&self) -> Option<SampleStats> {
        self.stats
    }

    /// Location of grid point `j`.
    pub fn value(&self, j: usize) -> f64 {
        (j as f64 - self.half_bins as f64) * self.mesh + self.offset
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.probs.len()).map(|j| self.value(j))
    }

    pub fn mean(&self) -> f64 {
        self.values().zip(&self.probs).map(|(y, p)| y * p).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.half_bins == other.half_bins
            && (self.mesh - other.mesh).abs() <= 1e-12 * self.mesh.max(other.mesh)
    }

    pub(crate) fn with_parts(
        mesh: f64,
        half_bins: usize,
        probs: Vec<f64>,
        offset: f64,
        source: String,
    ) -> Self {
        Self { mesh, half_bins, probs, offset, source, stats: None }
    }
}

/// Grid index (0-based) of the bin `(ih - h/2, ih + h/2]` containing `y`.
fn bin_of(y: f64, h: f64, m: usize) -> Option<usize> {
    let i = (y / h - 0.5).ceil();
    let mf = m as f64;
    if !(i >= -mf && i <= mf) {
        return None;
    }
    Some((i + mf) as usize)
}

/// Neumaier-compensated running sum.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Sampled discretization of a PRV.
///
/// Draws are rejection-sampled into `[-L, L]` until `2n` are accepted. The
/// first `n` give the bin masses, the second `n` the mean used for the grid
/// offset `μ̂ = clamp(mean - Σ ih·q_i, 0, h/2)`.
pub fn discretize_from_samples<S>(prv: &S, cfg: &AccountantConfig, seed: u64) -> Result<DiscretePrv>
where
    S: PrvSampler + ?Sized,
{
    cfg.validate()?;
    let (h, l, n) = (cfg.mesh_h, cfg.trunc_l, cfg.samples_n);
    let m = cfg.half_bins();
    let batch = (4 * exec::threads()).max(8);

    let mut counts = vec![0u64; 2 * m + 1];
    let mut binned = 0usize;
    let mut second = CompensatedSum::default();
    let mut second_n = 0usize;
    let mut stats = SampleStats { draws: 0, accepted: 0 };
    let mut next_chunk = 0u64;

    while second_n < n {
        let first = next_chunk;
        let accepted: Vec<Vec<f64>> = exec::map_range(batch, |i| {
            let mut rng = chunk_rng(seed, first + i as u64);
            let mut buf = vec![0.0; CHUNK_LEN];
            prv.fill(&mut rng, &mut buf);
            buf.retain(|y| y.abs() <= l);
            buf
        });
        next_chunk += batch as u64;

        'chunks: for chunk in &accepted {
            stats.draws += CHUNK_LEN as u64;
            stats.accepted += chunk.len() as u64;
            for &y in chunk {
                if binned < n {
                    // |y| <= L so the bin always exists
                    let j = bin_of(y, h, m).unwrap_or(if y < 0.0 { 0 } else { 2 * m });
                    counts[j] += 1;
                    binned += 1;
                } else if second_n < n {
                    second.add(y);
                    second_n += 1;
                } else {
                    break 'chunks;
                }
            }
        }

        if stats.acceptance_rate() < 0.1 {
            return Err(Error::Truncation(format!(
                "only {:.2}% of draws from {} fall inside [-{l}, {l}]",
                100.0 * stats.acceptance_rate(),
                prv.describe()
            )));
        }
    }

    let nf = n as f64;
    let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / nf).collect();
    let grid_mean: f64 = counts
        .iter()
        .enumerate()
        .map(|(j, &c)| (j as f64 - m as f64) * c as f64)
        .sum::<f64>()
        * h
        / nf;
    let mu_tilde = second.value() / nf - grid_mean;
    let offset = mu_tilde.clamp(0.0, h / 2.0);

    let mut out = DiscretePrv::with_parts(h, m, probs, offset, prv.describe());
    out.stats = Some(stats);
    Ok(out)
}

/// Discretization from an exact CDF, conditioned on `[-L, L]`.
///
/// Bin masses are CDF differences; the within-bin mean uses
/// `∫(y - c) dF = (e⁺ - c)·p - ∫(F - F(e⁻))`, with Simpson's rule for the
/// last integral.
pub fn discretize_from_cdf<F>(cdf: F, cfg: &AccountantConfig) -> Result<DiscretePrv>
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    cfg.validate()?;
    let (h, l) = (cfg.mesh_h, cfg.trunc_l);
    let m = cfg.half_bins();

    let edges: Vec<(f64, f64)> = (0..=2 * m)
        .map(|j| {
            let c = (j as f64 - m as f64) * h;
            ((c - h / 2.0).max(-l), (c + h / 2.0).min(l))
        })
        .collect();
    let parts: Vec<(f64, f64)> = exec::map_slice(&edges, |&(lo, hi)| {
        let (f_lo, f_hi) = (cdf(lo), cdf(hi));
        let f_mid = cdf(0.5 * (lo + hi));
        let p = (f_hi - f_lo).max(0.0);
        let excess = (hi - lo) / 6.0 * (4.0 * (f_mid - f_lo) + (f_hi - f_lo));
        (p, excess)
    });

    let total: f64 = parts.iter().map(|p| p.0).sum();
    if total < 0.5 {
        return Err(Error::Truncation(format!(
            "only {total:.3e} of the mass lies inside [-{l}, {l}]"
        )));
    }
    let shift: f64 = parts
        .iter()
        .zip(&edges)
        .enumerate()
        .map(|(j, ((p, excess), (_, hi)))| {
            let c = (j as f64 - m as f64) * h;
            (hi - c) * p - excess
        })
        .sum::<f64>()
        / total;
    let offset = shift.clamp(0.0, h / 2.0);
    let probs = parts.iter().map(|p| p.0 / total).collect();
    Ok(DiscretePrv::with_parts(h, m, probs, offset, "cdf".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::ChunkRng;
    use crate::prv::ReferencePrv;

    struct Constant(f64);

    impl PrvSampler for Constant {
        fn fill(&self, _: &mut ChunkRng, out: &mut [f64]) {
            out.fill(self.0);
        }
        fn describe(&self) -> String {
            format!("constant({})", self.0)
        }
    }

    #[test]
    fn bin_edges_are_right_closed() {
        let h = 0.5;
        assert_eq!(bin_of(0.0, h, 4), Some(4));
        assert_eq!(bin_of(0.25, h, 4), Some(4));
        assert_eq!(bin_of(0.2500001, h, 4), Some(5));
        assert_eq!(bin_of(-0.25, h, 4), Some(3));
        assert_eq!(bin_of(2.0, h, 4), Some(8));
        assert_eq!(bin_of(-2.0, h, 4), Some(0));
        assert_eq!(bin_of(2.3, h, 4), None);
    }

    #[test]
    fn point_mass_sampler_lands_in_centre() {
        let cfg = AccountantConfig::with_bins(1.0, 10, 10_000).unwrap();
        let d = discretize_from_samples(&Constant(0.0), &cfg, 1).unwrap();
        assert_eq!(d.probs()[10], 1.0);
        assert_eq!(d.offset(), 0.0);
        assert_eq!(d.sample_stats().unwrap().rejected(), 0);
    }

    #[test]
    fn offset_recovers_within_bin_shift() {
        let cfg = AccountantConfig::with_bins(1.0, 10, 10_000).unwrap();
        let d = discretize_from_samples(&Constant(0.33), &cfg, 1).unwrap();
        // 0.33 falls in the bin centred at 0.3
        assert_eq!(d.probs()[13], 1.0);
        assert!((d.offset() - 0.03).abs() < 1e-12);
        assert!((d.mean() - 0.33).abs() < 1e-12);
    }

    #[test]
    fn rejects_when_mass_is_outside() {
        let cfg = AccountantConfig::with_bins(1.0, 10, 10_000).unwrap();
        let err = discretize_from_samples(&Constant(5.0), &cfg, 1).unwrap_err();
        assert!(matches!(err, Error::Truncation(_)));
    }

    #[test]
    fn gaussian_cdf_grid_mean() {
        let r = ReferencePrv::Gaussian { std: 1.0, sensitivity: 1.0 };
        let cfg = AccountantConfig::new(1e-3, 10.0, 10_000).unwrap();
        let d = discretize_from_cdf(|x| r.cdf(x), &cfg).unwrap();
        assert!((d.total_mass() - 1.0).abs() < 1e-12);
        assert!((d.mean() - 0.5).abs() < 1e-3);
        assert!(d.offset() >= 0.0 && d.offset() <= 5e-4);
    }

    #[test]
    fn laplace_cdf_keeps_the_atom() {
        let r = ReferencePrv::Laplace { scale: 1.0, sensitivity: 1.0 };
        let cfg = AccountantConfig::new(1e-3, 2.0, 10_000).unwrap();
        let d = discretize_from_cdf(|x| r.cdf(x), &cfg).unwrap();
        let top: f64 = d.values().zip(d.probs()).filter(|(y, _)| *y > 0.99).map(|(_, p)| p).sum();
        assert!(top >= 0.5 - 1e-12);
    }

    #[test]
    fn step_cdf_gives_single_bin() {
        let cfg = AccountantConfig::with_bins(1.0, 10, 10_000).unwrap();
        let d = discretize_from_cdf(|x| if x >= 0.0 { 1.0 } else { 0.0 }, &cfg).unwrap();
        assert_eq!(d.probs().iter().filter(|p| **p > 0.0).count(), 1);
        assert_eq!(d.probs()[10], 1.0);
    }

    #[test]
    fn cdf_with_mass_outside_is_rejected() {
        let cfg = AccountantConfig::with_bins(1.0, 10, 10_000).unwrap();
        let err = discretize_from_cdf(|x| if x >= 3.0 { 1.0 } else { 0.0 }, &cfg).unwrap_err();
        assert!(matches!(err, Error::Truncation(_)));
    }
}
