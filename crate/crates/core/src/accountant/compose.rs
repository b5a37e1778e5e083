use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

use super::discrete::DiscretePrv;

/// A discrete PRV held in the frequency domain, so that repeated
/// self-composition is a pointwise power.
///
/// The grid is laid out with index 0 at `y = offset` (`ifftshift`), which
/// makes circular convolution add grid positions modulo `2m + 1`.
#[derive(Clone)]
pub struct SpectralPrv {
    mesh: f64,
    half_bins: usize,
    offset: f64,
    spectrum: Vec<Complex64>,
    inverse: Arc<dyn Fft<f64>>,
    source: String,
}

impl std::fmt::Debug for SpectralPrv {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralPrv")
            .field("mesh", &self.mesh)
            .field("half_bins", &self.half_bins)
            .field("offset", &self.offset)
            .field("source", &self.source)
            .finish()
    }
}

impl SpectralPrv {
    pub fn new(prv: &DiscretePrv) -> Self {
        let n = prv.probs().len();
        let m = prv.half_bins();
        let mut planner = FftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let mut buf: Vec<Complex64> = prv.probs().iter().map(|&p| Complex64::new(p, 0.0)).collect();
        buf.rotate_left(m);
        forward.process(&mut buf);
        Self {
            mesh: prv.mesh(),
            half_bins: m,
            offset: prv.offset(),
            spectrum: buf,
            inverse,
            source: prv.source().to_string(),
        }
    }

    /// Spectrum of the `k`-fold self-composition.
    pub fn power(&self, k: usize) -> Self {
        let k = u32::try_from(k).expect("composition count fits in u32");
        let mut out = self.clone();
        for z in &mut out.spectrum {
            *z = z.powu(k);
        }
        out.offset = self.offset * k as f64;
        out.source = format!("{}^{k}", self.source);
        out
    }

    /// Spectrum of the sum of two independent PRVs on the same grid.
    pub fn combine(&self, other: &Self) -> Result<Self> {
        if self.half_bins != other.half_bins
            || (self.mesh - other.mesh).abs() > 1e-12 * self.mesh.max(other.mesh)
        {
            return Err(Error::Config("composed PRVs must share one grid".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.spectrum.iter_mut().zip(&other.spectrum) {
            *a *= b;
        }
        out.offset += other.offset;
        out.source = format!("{} + {}", self.source, other.source);
        Ok(out)
    }

    /// Back to a grid of probabilities. Round-off negatives are clipped and
    /// the result renormalised.
    pub fn to_prv(&self) -> DiscretePrv {
        let n = self.spectrum.len();
        let mut buf = self.spectrum.clone();
        self.inverse.process(&mut buf);
        buf.rotate_right(self.half_bins);
        let mut probs: Vec<f64> = buf.iter().map(|z| (z.re / n as f64).max(0.0)).collect();
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        DiscretePrv::with_parts(self.mesh, self.half_bins, probs, self.offset, self.source.clone())
    }
}

/// Distribution of `Σ multiplicity_i · Y_i` for independent grid PRVs,
/// with sums taken modulo the grid period.
pub fn compose(prvs: &[(&DiscretePrv, usize)]) -> Result<DiscretePrv> {
    let Some(&(first, _)) = prvs.first() else {
        return Err(Error::Input("nothing to compose".into()));
    };
    if prvs.iter().any(|(p, _)| !p.same_grid(first)) {
        return Err(Error::Config("composed PRVs must share one grid (h, L)".into()));
    }
    if prvs.iter().any(|&(_, k)| k == 0) {
        return Err(Error::Input("multiplicities must be at least 1".into()));
    }
    if let [(p, 1)] = prvs {
        return Ok((*p).clone());
    }
    let mut acc: Option<SpectralPrv> = None;
    for &(p, k) in prvs {
        let s = SpectralPrv::new(p).power(k);
        acc = Some(match acc {
            None => s,
            Some(a) => a.combine(&s)?,
        });
    }
    Ok(acc.expect("at least one PRV").to_prv())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accountant::config::AccountantConfig;

    fn direct(a: &DiscretePrv, b: &DiscretePrv) -> Vec<f64> {
        // linear convolution, folded back onto the grid modulo 2m+1
        let n = a.probs().len();
        let m = a.half_bins() as i64;
        let mut out = vec![0.0; n];
        for (i, p) in a.probs().iter().enumerate() {
            for (j, q) in b.probs().iter().enumerate() {
                let s = (i as i64 - m) + (j as i64 - m);
                let idx = (s + m).rem_euclid(n as i64) as usize;
                out[idx] += p * q;
            }
        }
        out
    }

    fn arbitrary(m: usize, salt: u64) -> DiscretePrv {
        let n = 2 * m + 1;
        let probs: Vec<f64> = (0..n)
            .map(|i| {
                let x = ((i as u64 + 1) * 2654435761 ^ salt) % 1000;
                x as f64 + 1.0
            })
            .collect();
        DiscretePrv::from_probs(0.1, m, probs, 0.01, "arb").unwrap()
    }

    #[test]
    fn identity_for_single_composition() {
        let a = arbitrary(8, 3);
        let c = compose(&[(&a, 1)]).unwrap();
        assert_eq!(c, a);
    }

    #[test]
    fn matches_brute_force_on_small_grids() {
        for m in [1usize, 4, 15, 31] {
            let a = arbitrary(m, 1);
            let b = arbitrary(m, 2);
            let fft = compose(&[(&a, 1), (&b, 1)]).unwrap();
            let brute = direct(&a, &b);
            for (x, y) in fft.probs().iter().zip(&brute) {
                assert!((x - y).abs() < 1e-12, "m={m}: {x} vs {y}");
            }
            assert!((fft.offset() - 0.02).abs() < 1e-15);
        }
    }

    #[test]
    fn self_power_matches_repeated_convolution() {
        let a = arbitrary(10, 5);
        let three = compose(&[(&a, 3)]).unwrap();
        let two = direct(&a, &a);
        let two = DiscretePrv::from_probs(0.1, 10, two, 0.02, "two").unwrap();
        let brute = direct(&two, &a);
        for (x, y) in three.probs().iter().zip(&brute) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn point_masses_add() {
        let cfg = AccountantConfig::with_bins(5.0, 50, 10_000).unwrap();
        let a = DiscretePrv::point_mass(&cfg, 1.2).unwrap();
        let b = DiscretePrv::point_mass(&cfg, -2.5).unwrap();
        let c = compose(&[(&a, 1), (&b, 1)]).unwrap();
        let (j, p) = c
            .probs()
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .unwrap();
        assert!((p - 1.0).abs() < 1e-12);
        assert!((c.value(j) - (-1.3)).abs() < 1e-9);
    }

    #[test]
    fn wraparound_when_mass_leaves_the_window() {
        let cfg = AccountantConfig::with_bins(1.0, 10, 10_000).unwrap();
        let a = DiscretePrv::point_mass(&cfg, 0.8).unwrap();
        let c = compose(&[(&a, 2)]).unwrap();
        // 1.6 ≡ 1.6 - 2.1 = -0.5 on a period of 21 bins of 0.1
        let j = c.probs().iter().position(|p| (*p - 1.0).abs() < 1e-12).unwrap();
        assert!((c.value(j) - (-0.5)).abs() < 1e-9);
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let a = arbitrary(4, 1);
        let b = arbitrary(5, 1);
        assert!(matches!(compose(&[(&a, 1), (&b, 1)]), Err(Error::Config(_))));
    }
}
