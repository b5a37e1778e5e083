use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid and sampling parameters of one accountant run.
///
/// The grid holds the points `i·h` for `i ∈ [-m, m]` with `m = L/h`; bin `i`
/// collects the mass in `(ih - h/2, ih + h/2]`, so the bins cover `[-L, L]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccountantConfig {
    pub mesh_h: f64,
    pub trunc_l: f64,
    /// Samples per half of the draw; discretization consumes `2n` in total.
    pub samples_n: usize,
    /// `s` of the error bound. Defaults to `10·h·√k`.
    pub hoeffding_s: Option<f64>,
    /// `t` of the error bound. Defaults to `10·L/√n`.
    pub sampling_t: Option<f64>,
}

impl AccountantConfig {
    pub const MIN_SAMPLES: usize = 10_000;

    pub fn new(mesh_h: f64, trunc_l: f64, samples_n: usize) -> Result<Self> {
        let cfg = Self { mesh_h, trunc_l, samples_n, hoeffding_s: None, sampling_t: None };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Grid with `2·half_bins + 1` points over `[-L, L]`.
    pub fn with_bins(trunc_l: f64, half_bins: usize, samples_n: usize) -> Result<Self> {
        if half_bins == 0 {
            return Err(Error::Config("need at least one bin on each side".into()));
        }
        Self::new(trunc_l / half_bins as f64, trunc_l, samples_n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mesh_h > 0.0 && self.mesh_h.is_finite()) {
            return Err(Error::Config(format!("mesh must be positive, got {}", self.mesh_h)));
        }
        if !(self.trunc_l > 0.0 && self.trunc_l.is_finite()) {
            return Err(Error::Config(format!("truncation must be positive, got {}", self.trunc_l)));
        }
        let ratio = self.trunc_l / self.mesh_h;
        if ratio < 0.5 || (ratio - ratio.round()).abs() > 1e-6 * ratio.max(1.0) {
            return Err(Error::Config(format!(
                "truncation {} is not an integer multiple of the mesh {}",
                self.trunc_l, self.mesh_h
            )));
        }
        if self.samples_n < Self::MIN_SAMPLES {
            return Err(Error::Config(format!(
                "need at least {} samples, got {}",
                Self::MIN_SAMPLES,
                self.samples_n
            )));
        }
        for (name, v) in [("s", self.hoeffding_s), ("t", self.sampling_t)] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(Error::Config(format!("{name} must be positive, got {v}")));
                }
            }
        }
        Ok(())
    }

    /// `m = L/h`.
    pub fn half_bins(&self) -> usize {
        (self.trunc_l / self.mesh_h).round() as usize
    }

    /// Number of grid points, `2m + 1`.
    pub fn grid_len(&self) -> usize {
        2 * self.half_bins() + 1
    }

    pub fn s(&self, k: usize) -> f64 {
        self.hoeffding_s.unwrap_or(10.0 * self.mesh_h * (k as f64).sqrt())
    }

    pub fn t(&self) -> f64 {
        self.sampling_t.unwrap_or(10.0 * self.trunc_l / (self.samples_n as f64).sqrt())
    }
}

/// How to build an [`AccountantConfig`] for a mechanism when the truncation
/// is chosen automatically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccountOptions {
    pub samples_n: usize,
    pub half_bins: usize,
    /// Fixed truncation; `None` picks `|mean_k| + tail_sigmas·std_k` from a pilot run.
    pub trunc_l: Option<f64>,
    pub pilot_samples: usize,
    pub tail_sigmas: f64,
    pub hoeffding_s: Option<f64>,
    pub sampling_t: Option<f64>,
}

impl Default for AccountOptions {
    fn default() -> Self {
        Self {
            samples_n: 5_000_000,
            half_bins: 1 << 18,
            trunc_l: None,
            pilot_samples: 10_000,
            tail_sigmas: 12.0,
            hoeffding_s: None,
            sampling_t: None,
        }
    }
}

impl AccountOptions {
    pub fn with_samples(mut self, n: usize) -> Self {
        self.samples_n = n;
        self
    }

    pub fn with_half_bins(mut self, m: usize) -> Self {
        self.half_bins = m;
        self
    }

    pub fn with_trunc(mut self, l: f64) -> Self {
        self.trunc_l = Some(l);
        self
    }

    pub(crate) fn config_for(&self, trunc_l: f64) -> Result<AccountantConfig> {
        let mut cfg = AccountantConfig::with_bins(trunc_l, self.half_bins, self.samples_n)?;
        cfg.hoeffding_s = self.hoeffding_s;
        cfg.sampling_t = self.sampling_t;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_grids() {
        assert!(AccountantConfig::new(0.3, 1.0, 10_000).is_err());
        assert!(AccountantConfig::new(0.25, 1.0, 10_000).is_ok());
        assert!(AccountantConfig::new(0.25, 1.0, 100).is_err());
        assert!(AccountantConfig::new(-0.25, 1.0, 10_000).is_err());
        let cfg = AccountantConfig::with_bins(10.0, 1000, 10_000).unwrap();
        assert_eq!(cfg.half_bins(), 1000);
        assert_eq!(cfg.grid_len(), 2001);
    }

    #[test]
    fn default_s_and_t() {
        let cfg = AccountantConfig::with_bins(10.0, 1000, 1_000_000).unwrap();
        assert!((cfg.s(4) - 10.0 * 0.01 * 2.0).abs() < 1e-15);
        assert!((cfg.t() - 10.0 * 10.0 / 1000.0).abs() < 1e-15);
    }
}
