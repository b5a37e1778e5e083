use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prv::{LossSampleDirection, MechanismSpec};

use super::config::AccountantConfig;
use super::discrete::DiscretePrv;

/// Suffix sums over a grid PRV that give `δ(ε)` in O(1) per query.
///
/// With grid points `y_J`, `B(J) = Σ_{j>J} q_j` and
/// `A(J) = Σ_{j>J} q_j e^{y_J - y_j}`; for `y_J ≤ ε ≤ y_{J+1}`,
/// `δ(ε) = B(J) - e^{ε - y_J}·A(J)`. `A` is built by the stable recursion
/// `A(J-1) = e^{-h}(A(J) + q_J)`, so nothing overflows for large losses.
#[derive(Debug, Clone)]
pub struct DeltaTable {
    /// `y_{-1}`, one step below the first grid point.
    base: f64,
    mesh: f64,
    trunc: f64,
    /// indexed by `J + 1` for `J ∈ [-1, N-1]`
    above: Vec<f64>,
    weighted: Vec<f64>,
}

impl DeltaTable {
    pub fn new(prv: &DiscretePrv) -> Self {
        let q = prv.probs();
        let n = q.len();
        let h = prv.mesh();
        let decay = (-h).exp();
        let mut above = vec![0.0; n + 1];
        let mut weighted = vec![0.0; n + 1];
        for j in (0..n).rev() {
            // slot j holds J = j - 1
            above[j] = above[j + 1] + q[j];
            weighted[j] = decay * (weighted[j + 1] + q[j]);
        }
        Self { base: prv.value(0) - h, mesh: h, trunc: prv.trunc(), above, weighted }
    }

    fn point(&self, slot: usize) -> f64 {
        self.base + slot as f64 * self.mesh
    }

    fn at_slot(&self, slot: usize, eps: f64) -> f64 {
        let v = self.above[slot] - (eps - self.point(slot)).exp() * self.weighted[slot];
        v.clamp(0.0, 1.0)
    }

    /// `δ(ε) = E[(1 - e^{ε - Y})_+]`.
    pub fn delta(&self, eps: f64) -> f64 {
        let last = self.above.len() - 1;
        let slot = ((eps - self.base) / self.mesh).floor();
        if slot >= last as f64 {
            return 0.0;
        }
        let slot = slot.max(0.0) as usize;
        self.at_slot(slot, eps)
    }

    /// Smallest `ε ∈ [0, L]` with `δ(ε) ≤ target`.
    pub fn epsilon(&self, target: f64) -> Result<f64> {
        let at_zero = self.delta(0.0);
        if target >= at_zero {
            return Ok(0.0);
        }
        let at_l = self.delta(self.trunc);
        if !(target >= at_l) {
            return Err(Error::OutOfRange { requested: target, min: at_l, max: at_zero });
        }
        // δ at grid points is non-increasing in the slot
        let last = self.above.len() - 1;
        let (mut lo, mut hi) = (0, last + 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if (self.above[mid] - self.weighted[mid]).max(0.0) > target {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        let first_ok = lo;
        if first_ok == 0 {
            return Ok(0.0);
        }
        let slot = first_ok - 1;
        let (b, a) = (self.above[slot], self.weighted[slot]);
        let lo = self.point(slot);
        let eps = if a > 0.0 && b > target {
            lo + ((b - target) / a).ln()
        } else {
            lo + self.mesh
        };
        Ok(eps.clamp(lo, lo + self.mesh).clamp(0.0, self.trunc))
    }
}

/// `δ(ε)` of a grid PRV. Zero for `ε ≥ L`.
pub fn delta_of_epsilon(prv: &DiscretePrv, eps: f64) -> f64 {
    if eps >= prv.trunc() {
        return 0.0;
    }
    DeltaTable::new(prv).delta(eps)
}

/// Smallest `ε ∈ [0, L]` with `δ(ε) ≤ delta`.
pub fn epsilon_of_delta(prv: &DiscretePrv, delta: f64) -> Result<f64> {
    DeltaTable::new(prv).epsilon(delta)
}

/// Provenance stored next to a curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveConfig {
    pub accountant: AccountantConfig,
    pub compositions: usize,
    pub directions: Vec<LossSampleDirection>,
    pub seed: u64,
}

/// A sampled privacy curve with its accounting error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyCurve {
    pub epsilon: Vec<f64>,
    pub delta: Vec<f64>,
    pub eta: f64,
    pub tau: f64,
    pub config: CurveConfig,
    pub mechanism: MechanismSpec,
}

impl PrivacyCurve {
    pub const POINTS: usize = 257;

    /// Tabulates the pointwise maximum of the given curves on an even grid
    /// over `[0, L]`.
    pub fn tabulate(
        tables: &[DeltaTable],
        eta: f64,
        tau: f64,
        config: CurveConfig,
        mechanism: MechanismSpec,
    ) -> Self {
        let l = config.accountant.trunc_l;
        let epsilon: Vec<f64> =
            (0..Self::POINTS).map(|i| l * i as f64 / (Self::POINTS - 1) as f64).collect();
        let mut delta: Vec<f64> = epsilon
            .iter()
            .map(|&e| if e >= l { 0.0 } else { tables.iter().map(|t| t.delta(e)).fold(0.0, f64::max) })
            .collect();
        // guard against round-off wiggles in the tail
        for i in 1..delta.len() {
            delta[i] = delta[i].min(delta[i - 1]);
        }
        Self { epsilon, delta, eta, tau, config, mechanism }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("curve serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accountant::discretize_from_cdf;
    use crate::prv::ReferencePrv;

    fn brute(prv: &DiscretePrv, eps: f64) -> f64 {
        prv.values().zip(prv.probs()).map(|(y, q)| q * (1.0 - (eps - y).exp()).max(0.0)).sum()
    }

    #[test]
    fn point_mass_at_one() {
        let cfg = AccountantConfig::with_bins(4.0, 40, 10_000).unwrap();
        let p = DiscretePrv::point_mass(&cfg, 1.0).unwrap();
        assert!((delta_of_epsilon(&p, 0.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        assert!(delta_of_epsilon(&p, 1.0) < 1e-12);
        assert_eq!(delta_of_epsilon(&p, 4.0), 0.0);
    }

    #[test]
    fn table_matches_direct_sum_between_grid_points() {
        let probs: Vec<f64> = (0..41).map(|i| ((i * 7919) % 13) as f64 + 0.5).collect();
        let p = DiscretePrv::from_probs(0.1, 20, probs, 0.03, "x").unwrap();
        let t = DeltaTable::new(&p);
        for i in 0..200 {
            let e = i as f64 * 0.0113;
            assert!((t.delta(e) - brute(&p, e)).abs() < 1e-13, "eps {e}");
        }
    }

    #[test]
    fn epsilon_inverts_delta() {
        let probs: Vec<f64> = (0..101).map(|i| (-(i as f64 - 60.0).powi(2) / 200.0).exp()).collect();
        let p = DiscretePrv::from_probs(0.05, 50, probs, 0.01, "x").unwrap();
        let t = DeltaTable::new(&p);
        for &d in &[0.3, 0.1, 1e-2, 1e-3, 1e-5] {
            let e = t.epsilon(d).unwrap();
            assert!((t.delta(e) - d).abs() < 1e-12 * d.max(1e-3), "δ {d}");
        }
        assert_eq!(t.epsilon(0.99).unwrap(), 0.0);
    }

    #[test]
    fn out_of_range_names_the_bounds() {
        // top grid point sits at 1.04 > L, so δ(L) > 0
        let p = DiscretePrv::from_probs(0.1, 10, vec![1.0; 21], 0.04, "flat").unwrap();
        match epsilon_of_delta(&p, 1e-10) {
            Err(Error::OutOfRange { min, max, .. }) => assert!(min > 0.0 && max > min),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gaussian_delta_at_zero() {
        let r = ReferencePrv::Gaussian { std: 1.0, sensitivity: 1.0 };
        let cfg = AccountantConfig::new(1e-3, 10.0, 10_000).unwrap();
        let p = discretize_from_cdf(|x| r.cdf(x), &cfg).unwrap();
        let d = delta_of_epsilon(&p, 0.0);
        assert!((d - 0.382_924_922_548_026).abs() < 1e-3, "{d}");
    }
}
