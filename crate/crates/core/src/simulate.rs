//! Hardmax-utility simulations on constructed vote histograms, AUC
//! summaries, and PATE label accuracy on ingested histograms.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::GGParams;
use crate::error::{domain, Error, Result};
use crate::exec::{self, chunk_rng, derive_seed_from};
use crate::mechanisms::{ggnmax, VoteHistogram};
use crate::stats::trapezoid;

const MAX_RESAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub num_classes: usize,
    pub total_votes: u64,
    /// Runner-up parameters `r`; class 1 gets `x0·(1 - r)` votes.
    pub gaps: Vec<f64>,
    pub histograms: usize,
    pub trials: usize,
}

impl SimConfig {
    pub fn new(num_classes: usize) -> Self {
        Self { num_classes, total_votes: 1000, gaps: default_gaps(), histograms: 500, trials: 50 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(domain("need at least 2 classes"));
        }
        if self.total_votes < self.num_classes as u64 {
            return Err(domain(format!(
                "{} votes cannot fill {} classes",
                self.total_votes, self.num_classes
            )));
        }
        if self.gaps.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
            return Err(domain("runner-up parameters must lie in (0, 1)"));
        }
        if self.histograms == 0 || self.trials == 0 {
            return Err(domain("histogram and trial counts must be positive"));
        }
        Ok(())
    }
}

/// `r ∈ {0.001, 0.005, 0.010, …, 0.2}`.
pub fn default_gaps() -> Vec<f64> {
    std::iter::once(0.001).chain((1..=40).map(|i| 0.005 * i as f64)).collect()
}

/// Histograms for one runner-up parameter `r`. Class 0 is always the strict
/// argmax (for two classes, whenever rounding leaves a gap).
pub fn make_histograms(cfg: &SimConfig, r: f64, seed: u64) -> Result<Vec<VoteHistogram>> {
    cfg.validate()?;
    if !(r > 0.0 && r < 1.0) {
        return Err(domain(format!("runner-up parameter must lie in (0, 1), got {r}")));
    }
    let v = cfg.total_votes as f64;
    let n = cfg.num_classes;
    if n == 2 {
        let x0 = (v / (2.0 - r)).round();
        let h = VoteHistogram::new(vec![x0, v - x0], Some(0))?;
        return Ok(vec![h; cfg.histograms]);
    }
    let denom = 1.0 + (1.0 - r) + (n as f64 - 3.0) / 2.0 * 0.95 * (1.0 - r);
    let x0 = (v / denom).round();
    let x1 = (x0 * (1.0 - r)).floor();
    let x2 = (0.95 * x1).floor();
    let mut rng = chunk_rng(seed, 0);
    let mut out = Vec::with_capacity(cfg.histograms);
    for _ in 0..cfg.histograms {
        let mut attempts = 0;
        loop {
            attempts += 1;
            if attempts > MAX_RESAMPLES {
                return Err(Error::Construction(format!(
                    "no valid {n}-class histogram for V={v}, r={r} after {MAX_RESAMPLES} attempts"
                )));
            }
            let mut counts = vec![x0, x1];
            if n >= 4 {
                counts.push(x2);
                for _ in 0..n - 4 {
                    counts.push(rng.random_range(0..=x2 as u64) as f64);
                }
            }
            let rest = v - counts.iter().sum::<f64>();
            if rest < 0.0 || rest > x1 {
                continue;
            }
            counts.push(rest);
            out.push(VoteHistogram::new(counts, Some(0))?);
            break;
        }
    }
    Ok(out)
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// Frequency with which GGNMax returns the unnoised argmax.
pub fn hardmax_utility(hists: &[VoteHistogram], noise: &GGParams, trials: usize, seed: u64) -> Result<Estimate> {
    if hists.is_empty() || trials == 0 {
        return Err(domain("need at least one histogram and one trial"));
    }
    let hits = exec::map_range(hists.len(), |i| {
        let mut rng = chunk_rng(seed, i as u64);
        let want = hists[i].argmax();
        let mut hits = 0usize;
        for _ in 0..trials {
            if ggnmax(&hists[i], noise, &mut rng)? == want {
                hits += 1;
            }
        }
        Ok(hits)
    })
    .into_iter()
    .sum::<Result<usize>>()?;
    let total = (hists.len() * trials) as f64;
    let p = hits as f64 / total;
    Ok(Estimate { value: p, stderr: (p * (1.0 - p) / total).sqrt() })
}

/// Exact two-class utility `Pr[Y_1 - Y_0 < gap]` for i.i.d. noise, by
/// composite Simpson quadrature of `∫ f(y) F(y + gap) dy`.
pub fn two_class_utility_exact(gap: f64, noise: &GGParams) -> f64 {
    let s = noise.sigma();
    let reach = s * (40.0f64).powf(1.0 / noise.beta());
    // split at the kinks of the integrand (0 and -gap)
    let mut cuts = vec![-reach - gap.abs(), -gap, 0.0, reach];
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let f = |y: f64| noise.pdf(0.0, y) * noise.cdf(y + gap);
    cuts.windows(2)
        .map(|w| {
            let pieces = 4000;
            let h = (w[1] - w[0]) / pieces as f64;
            let mut acc = f(w[0]) + f(w[1]);
            for i in 1..pieces {
                acc += f(w[0] + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            acc * h / 3.0
        })
        .sum()
}

/// Utility as a function of the runner-up parameter for one `(β, σ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityCurve {
    pub beta: f64,
    pub sigma: f64,
    pub gaps: Vec<f64>,
    pub points: Vec<Estimate>,
}

/// Runs the hardmax sweep for every `(β, σ)` row. The histograms at each
/// `r` are shared by all rows.
pub fn simulate_argmax(cfg: &SimConfig, rows: &[(f64, f64)], seed: u64) -> Result<Vec<UtilityCurve>> {
    cfg.validate()?;
    let hists = cfg
        .gaps
        .iter()
        .map(|&r| make_histograms(cfg, r, derive_seed_from(seed, &[r.to_bits()])))
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<(usize, usize)> =
        (0..rows.len()).flat_map(|i| (0..cfg.gaps.len()).map(move |j| (i, j))).collect();
    let points = exec::map_slice(&cells, |&(i, j)| {
        let (beta, sigma) = rows[i];
        let noise = GGParams::new(beta, sigma)?;
        let cell_seed = derive_seed_from(seed, &[beta.to_bits(), sigma.to_bits(), cfg.gaps[j].to_bits()]);
        hardmax_utility(&hists[j], &noise, cfg.trials, cell_seed)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(rows
        .iter()
        .enumerate()
        .map(|(i, &(beta, sigma))| UtilityCurve {
            beta,
            sigma,
            gaps: cfg.gaps.clone(),
            points: points[i * cfg.gaps.len()..(i + 1) * cfg.gaps.len()].to_vec(),
        })
        .collect())
}

/// Trapezoidal area under each curve over `r ∈ [0, 0.1]`, divided by the
/// largest area among the curves.
pub fn auc_over_gap(curves: &[UtilityCurve]) -> Vec<(f64, f64)> {
    let raw: Vec<f64> = curves
        .iter()
        .map(|c| {
            let (x, y): (Vec<f64>, Vec<f64>) = c
                .gaps
                .iter()
                .zip(&c.points)
                .filter(|(r, _)| **r <= 0.1 + 1e-12)
                .map(|(r, p)| (*r, p.value))
                .unzip();
            trapezoid(&x, &y)
        })
        .collect();
    let top = raw.iter().cloned().fold(0.0, f64::max);
    curves
        .iter()
        .zip(raw)
        .map(|(c, a)| (c.beta, if top > 0.0 { a / top } else { 0.0 }))
        .collect()
}

/// Reads histograms with header `class_0,…,class_{N-1},true_label`.
pub fn load_histograms_csv(path: impl AsRef<Path>) -> Result<Vec<VoteHistogram>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let header = rdr.headers().map_err(|e| Error::Ingest { row: 1, message: e.to_string() })?.clone();
    let n = header.len().saturating_sub(1);
    let expected: Vec<String> =
        (0..n).map(|i| format!("class_{i}")).chain(std::iter::once("true_label".to_string())).collect();
    if n < 2 || header.iter().map(str::trim).ne(expected.iter().map(String::as_str)) {
        return Err(Error::Ingest {
            row: 1,
            message: format!("header must be {}", expected.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Ingest { row, message: e.to_string() })?;
        if rec.len() != n + 1 {
            return Err(Error::Ingest { row, message: format!("expected {} columns, found {}", n + 1, rec.len()) });
        }
        let mut counts = Vec::with_capacity(n);
        for c in rec.iter().take(n) {
            let v: f64 = c
                .trim()
                .parse()
                .map_err(|_| Error::Ingest { row, message: format!("count '{c}' is not a number") })?;
            counts.push(v);
        }
        let label: usize = rec[n]
            .trim()
            .parse()
            .map_err(|_| Error::Ingest { row, message: format!("label '{}' is not a class index", &rec[n]) })?;
        let h = VoteHistogram::new(counts, Some(label)).map_err(|e| Error::Ingest { row, message: e.to_string() })?;
        out.push(h);
    }
    Ok(out)
}

pub fn write_histograms_csv<W: Write>(hists: &[VoteHistogram], out: W) -> Result<()> {
    let n = hists.first().map_or(0, |h| h.classes());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (0..n).map(|i| format!("class_{i}")).collect();
    header.push("true_label".into());
    w.write_record(&header)?;
    for h in hists {
        let mut rec: Vec<String> = h.counts.iter().map(|c| c.to_string()).collect();
        rec.push(h.true_label.map_or(String::new(), |l| l.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Teacher-vote histograms: each of `teachers` votes for the true label with
/// probability `teacher_accuracy`, otherwise uniformly at random.
pub fn synthetic_pate_histograms(
    count: usize,
    classes: usize,
    teachers: usize,
    teacher_accuracy: f64,
    seed: u64,
) -> Result<Vec<VoteHistogram>> {
    if classes < 2 {
        return Err(domain("need at least 2 classes"));
    }
    let mut rng = chunk_rng(seed, 0);
    (0..count)
        .map(|_| {
            let label = rng.random_range(0..classes);
            let mut counts = vec![0.0; classes];
            for _ in 0..teachers {
                let vote = if rng.random::<f64>() < teacher_accuracy { label } else { rng.random_range(0..classes) };
                counts[vote] += 1.0;
            }
            VoteHistogram::new(counts, Some(label))
        })
        .collect()
}

/// Label accuracy of GGNMax against the stored true labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PateRow {
    pub beta: f64,
    pub sigma: f64,
    pub mean: f64,
    pub std: f64,
}

/// Mean and standard deviation over `trials` of the per-trial accuracy.
pub fn pate_label_accuracy(
    hists: &[VoteHistogram],
    grid: &[(f64, f64)],
    trials: usize,
    seed: u64,
) -> Result<Vec<PateRow>> {
    if hists.is_empty() || trials == 0 {
        return Err(domain("need at least one histogram and one trial"));
    }
    if let Some(i) = hists.iter().position(|h| h.true_label.is_none()) {
        return Err(Error::Ingest { row: i + 2, message: "missing true label".into() });
    }
    exec::map_slice(grid, |&(beta, sigma)| {
        let noise = GGParams::new(beta, sigma)?;
        let mut accs = Vec::with_capacity(trials);
        for t in 0..trials {
            let mut rng = chunk_rng(derive_seed_from(seed, &[beta.to_bits(), sigma.to_bits()]), t as u64);
            let mut hits = 0usize;
            for h in hists {
                if Some(ggnmax(h, &noise, &mut rng)?) == h.true_label {
                    hits += 1;
                }
            }
            accs.push(hits as f64 / hists.len() as f64);
        }
        let mean = crate::stats::mean(&accs);
        let std = if trials > 1 { crate::stats::variance(&accs).sqrt() } else { 0.0 };
        Ok(PateRow { beta, sigma, mean, std })
    })
    .into_iter()
    .collect()
}

/// One line of the tidy results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub beta: f64,
    pub sigma: f64,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub metric: String,
    pub value: f64,
    pub stderr: Option<f64>,
}

/// Writes rows under the header `beta,sigma,epsilon,delta,metric,value,stderr`.
pub fn write_results_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["beta", "sigma", "epsilon", "delta", "metric", "value", "stderr"])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize) -> SimConfig {
        SimConfig { num_classes: n, total_votes: 1000, gaps: vec![0.01, 0.05, 0.1], histograms: 20, trials: 10 }
    }

    #[test]
    fn two_class_histograms() {
        let h = make_histograms(&cfg(2), 0.1, 1).unwrap();
        assert_eq!(h[0].counts, vec![526.0, 474.0]);
        let h = make_histograms(&cfg(2), 0.0001, 1).unwrap();
        assert_eq!(h[0].counts, vec![500.0, 500.0]);
    }

    #[test]
    fn many_class_histograms_hold_the_invariants() {
        for n in [3, 5, 10, 25] {
            for r in [0.001, 0.05, 0.2] {
                for h in make_histograms(&cfg(n), r, 7).unwrap() {
                    assert_eq!(h.classes(), n);
                    assert_eq!(h.counts.iter().sum::<f64>(), 1000.0);
                    assert!(h.counts.iter().all(|c| *c >= 0.0 && c.fract() == 0.0));
                    assert!(h.counts[1..].iter().all(|c| *c < h.counts[0]), "{n} {r} {:?}", h.counts);
                }
            }
        }
    }

    #[test]
    fn four_classes_cannot_balance() {
        // the remainder class is forced to -x2/2 with nothing random to absorb it
        assert!(matches!(make_histograms(&cfg(4), 0.05, 1), Err(Error::Construction(_))));
    }

    #[test]
    fn utility_limits() {
        let h = make_histograms(&cfg(25), 0.05, 2).unwrap();
        let tiny = GGParams::new(2.0, 1e-6).unwrap();
        assert_eq!(hardmax_utility(&h, &tiny, 10, 1).unwrap().value, 1.0);
        let huge = GGParams::new(2.0, 1e6).unwrap();
        let u = hardmax_utility(&h, &huge, 500, 1).unwrap();
        assert!((u.value - 0.04).abs() < 0.01);
        assert!(u.stderr <= 1.0 / ((20 * 500) as f64).sqrt());
    }

    #[test]
    fn exact_two_class_matches_closed_forms() {
        // Gaussian: difference has std σ, Pr = Φ(gap / σ)
        let g = GGParams::new(2.0, 3.0).unwrap();
        let want = crate::special::normal_cdf(2.0 / 3.0);
        assert!((two_class_utility_exact(2.0, &g) - want).abs() < 1e-8);
        // Laplace b: Pr[diff < x] = 1 - (1/2)e^{-x/b}(1 + x/(2b))
        let l = GGParams::laplace(1.5).unwrap();
        let x: f64 = 2.0 / 1.5;
        let want = 1.0 - 0.5 * (-x).exp() * (1.0 + x / 2.0);
        assert!((two_class_utility_exact(2.0, &l) - want).abs() < 1e-8);
    }

    #[test]
    fn auc_normalisation() {
        let c = |beta: f64, v: f64| UtilityCurve {
            beta,
            sigma: 1.0,
            gaps: vec![0.01, 0.05, 0.1, 0.2],
            points: vec![Estimate { value: v, stderr: 0.0 }; 4],
        };
        let same = auc_over_gap(&[c(1.0, 0.7), c(2.0, 0.7)]);
        assert!(same.iter().all(|(_, a)| (*a - 1.0).abs() < 1e-15));
        let d = auc_over_gap(&[c(1.0, 0.9), c(2.0, 0.6)]);
        assert!(d[0].1 >= d[1].1);
    }

    #[test]
    fn pate_accuracy_limits_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        let hists = synthetic_pate_histograms(200, 10, 50, 1.0, 3).unwrap();
        write_histograms_csv(&hists, std::fs::File::create(&p).unwrap()).unwrap();
        let back = load_histograms_csv(&p).unwrap();
        assert_eq!(back, hists);
        let rows = pate_label_accuracy(&back, &[(2.0, 1e-3), (1.0, 1e6)], 25, 1).unwrap();
        assert_eq!(rows[0].mean, 1.0);
        assert!((rows[1].mean - 0.1).abs() < 0.02);

        std::fs::write(&p, "class_0,class_1,true_label\n3,4,1\n1,x,0\n").unwrap();
        match load_histograms_csv(&p) {
            Err(Error::Ingest { row, .. }) => assert_eq!(row, 3),
            other => panic!("{other:?}"),
        }
        std::fs::write(&p, "a,b,c\n3,4,1\n").unwrap();
        assert!(matches!(load_histograms_csv(&p), Err(Error::Ingest { row: 1, .. })));
    }

    #[test]
    fn results_csv_header() {
        let rows = vec![ResultRow {
            beta: 2.0,
            sigma: 1.5,
            epsilon: Some(1.0),
            delta: Some(1e-5),
            metric: "hardmax_utility_r=0.01".into(),
            value: 0.9,
            stderr: Some(0.01),
        }];
        let mut buf = Vec::new();
        write_results_csv(&rows, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("beta,sigma,epsilon,delta,metric,value,stderr\n2.0,1.5,1.0,0.00001,"), "{s}");
    }
}
