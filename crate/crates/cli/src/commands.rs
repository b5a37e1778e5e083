use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use serde::Serialize;

use ggdp::accountant::{account, AccountOptions, Target};
use ggdp::calibrate::{equivalent_family, solve_sigma, tail_weight, Family, PrivacyTarget, TailQuery};
use ggdp::exec::derive_seed;
use ggdp::mechanisms::{beta_dpsgd, load_dataset_csv, synthetic_blobs, train_nonprivate, ModelKind, TrainConfig};
use ggdp::simulate::{
    auc_over_gap, default_gaps, load_histograms_csv, pate_label_accuracy, simulate_argmax, write_results_csv,
    ResultRow, SimConfig,
};
use ggdp::{GGParams, MechanismSpec};

use crate::cli::*;
use crate::manifest::RunManifest;
use crate::UsageError;

const DATA_TAG: u64 = 0xDA7A;
const SIM_TAG: u64 = 0x51A;
const PATE_TAG: u64 = 0xFA7E;

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Epsilon(a) => epsilon(a),
        Command::SolveSigma(a) => solve(a),
        Command::Family(a) => family(a),
        Command::TailWeight(a) => tails(a),
        Command::SimulateArgmax(a) => simulate(a),
        Command::PateLabel(a) => pate(a),
        Command::Train(a) => train(a),
        Command::Sample(a) => sample(a),
        Command::Replay(a) => replay(a),
    }
}

/// Writes `bytes` to `out` plus its manifest, or to stdout.
fn emit<A: Serialize>(command: &str, args: &A, seed: u64, out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
            let manifest = RunManifest {
                command: command.to_string(),
                config: serde_json::to_value(args)?,
                seed,
                version: env!("CARGO_PKG_VERSION").to_string(),
                outputs: vec![path.to_path_buf()],
            };
            manifest.write(path)?;
            Ok(())
        }
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn options(a: &AccountFlags) -> AccountOptions {
    let opts = AccountOptions::default().with_samples(a.samples).with_half_bins(a.mesh_bins);
    match a.trunc {
        Some(l) => opts.with_trunc(l),
        None => opts,
    }
}

fn privacy_target(t: &TargetFlags) -> Result<PrivacyTarget> {
    let target = PrivacyTarget::new(t.epsilon, t.delta, t.tolerance)?
        .with_compositions(t.compositions)
        .with_sample_rate(t.sample_rate)
        .with_sensitivity(t.sensitivity);
    target.validate()?;
    Ok(target)
}

fn grid(s: &str) -> Result<Vec<f64>> {
    parse_grid(s).map_err(|e| UsageError(e).into())
}

fn epsilon(a: EpsilonArgs) -> Result<()> {
    let spec = MechanismSpec::new(GGParams::new(a.beta, a.sigma)?, a.sensitivity, a.sample_rate, a.compositions)?;
    let target = match (a.delta, a.epsilon) {
        (Some(delta), None) => Target::Epsilon { delta },
        (None, Some(epsilon)) => Target::Delta { epsilon },
        _ => return Err(UsageError("give exactly one of --delta and --epsilon".into()).into()),
    };
    let r = account(&spec, &options(&a.account), target, a.common.seed)?;
    println!("epsilon {}", r.epsilon);
    println!("delta {}", r.delta);
    println!("eta {}", r.eta);
    println!("tau {}", r.tau);
    println!("epsilon_upper {}", r.epsilon_upper);
    println!("delta_upper {}", r.delta_upper);
    println!("trunc {}", r.curve.config.accountant.trunc_l);
    if let Some(out) = &a.out {
        emit("epsilon", &a, a.common.seed, Some(out), r.curve.to_json().as_bytes())?;
    }
    Ok(())
}

fn solve(a: SolveSigmaArgs) -> Result<()> {
    let target = privacy_target(&a.target)?;
    let r = solve_sigma(a.beta, &target, &options(&a.account), a.common.seed)?;
    println!("sigma {}", r.sigma);
    println!("epsilon {}", r.epsilon);
    println!("bracket {} {}", r.bracket.0, r.bracket.1);
    println!("probes {}", r.probes.len());
    if let Some(out) = &a.out {
        let json = serde_json::to_string_pretty(&r)? + "\n";
        emit("solve-sigma", &a, a.common.seed, Some(out), json.as_bytes())?;
    }
    Ok(())
}

fn solve_family(betas: &str, t: &TargetFlags, acc: &AccountFlags, seed: u64) -> Result<(PrivacyTarget, Family)> {
    let target = privacy_target(t)?;
    let fam = equivalent_family(&grid(betas)?, &target, &options(acc), seed)?;
    if !fam.sigma_increasing {
        eprintln!("note: sigma is not increasing across the beta grid");
    }
    Ok((target, fam))
}

fn family(a: FamilyArgs) -> Result<()> {
    let (_, fam) = solve_family(&a.betas, &a.target, &a.account, a.common.seed)?;
    let mut buf = Vec::new();
    fam.write_csv(&mut buf)?;
    emit("family", &a, a.common.seed, a.out.as_deref(), &buf)
}

fn tails(a: TailWeightArgs) -> Result<()> {
    let query = TailQuery { cutoffs: grid(&a.cutoffs)?, target: privacy_target(&a.target)?, betas: grid(&a.betas)? };
    let table = tail_weight(&query, &options(&a.account), a.common.seed, a.smooth)?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    emit("tail-weight", &a, a.common.seed, a.out.as_deref(), &buf)
}

fn simulate(a: SimulateArgmaxArgs) -> Result<()> {
    let (target, fam) = solve_family(&a.betas, &a.target, &a.account, a.common.seed)?;
    let cfg = SimConfig {
        num_classes: a.classes,
        total_votes: a.votes,
        gaps: match &a.gaps {
            Some(g) => grid(g)?,
            None => default_gaps(),
        },
        histograms: a.histograms,
        trials: a.trials,
    };
    let rows: Vec<(f64, f64)> = fam.rows.iter().map(|r| (r.beta, r.sigma)).collect();
    let curves = simulate_argmax(&cfg, &rows, derive_seed(a.common.seed, SIM_TAG))?;
    let mut out = Vec::new();
    let row = |beta, sigma, metric: String, value, stderr| ResultRow {
        beta,
        sigma,
        epsilon: Some(target.epsilon),
        delta: Some(target.delta),
        metric,
        value,
        stderr,
    };
    for c in &curves {
        for (r, p) in c.gaps.iter().zip(&c.points) {
            out.push(row(c.beta, c.sigma, format!("utility_r={r}"), p.value, Some(p.stderr)));
        }
    }
    for (c, (_, auc)) in curves.iter().zip(auc_over_gap(&curves)) {
        out.push(row(c.beta, c.sigma, "auc".into(), auc, None));
    }
    let mut buf = Vec::new();
    write_results_csv(&out, &mut buf)?;
    emit("simulate-argmax", &a, a.common.seed, a.out.as_deref(), &buf)
}

fn pate(a: PateLabelArgs) -> Result<()> {
    let hists = load_histograms_csv(&a.histograms)?;
    let (target, fam) = solve_family(&a.betas, &a.target, &a.account, a.common.seed)?;
    let rows: Vec<(f64, f64)> = fam.rows.iter().map(|r| (r.beta, r.sigma)).collect();
    let acc = pate_label_accuracy(&hists, &rows, a.trials, derive_seed(a.common.seed, PATE_TAG))?;
    let out: Vec<ResultRow> = acc
        .iter()
        .map(|p| ResultRow {
            beta: p.beta,
            sigma: p.sigma,
            epsilon: Some(target.epsilon),
            delta: Some(target.delta),
            metric: "label_accuracy".into(),
            value: p.mean,
            stderr: Some(p.std / (a.trials as f64).sqrt()),
        })
        .collect();
    let mut buf = Vec::new();
    write_results_csv(&out, &mut buf)?;
    emit("pate-label", &a, a.common.seed, a.out.as_deref(), &buf)
}

fn train(a: TrainArgs) -> Result<()> {
    let kind: ModelKind = a.model.parse().map_err(UsageError)?;
    let data = if a.dataset == "synthetic" {
        synthetic_blobs(a.rows, a.dim, a.separation, derive_seed(a.common.seed, DATA_TAG))?
    } else {
        load_dataset_csv(&a.dataset)?
    };
    let (train_set, test_set) = data.split(a.test_fraction, derive_seed(a.common.seed, DATA_TAG + 1));
    let model = kind.build(train_set.dim(), train_set.classes());
    let cfg = TrainConfig {
        noise: GGParams::new(a.beta, a.sigma)?,
        clip_norm: a.clip,
        learning_rate: a.learning_rate,
        expected_batch: a.batch,
        epochs: a.epochs,
        delta: a.delta,
        target_epsilon: a.target_epsilon,
    };
    let result = if a.nonprivate {
        train_nonprivate(model.as_ref(), &train_set, &test_set, &cfg, a.common.seed)?
    } else {
        let opts = options(&AccountFlags { samples: a.samples, mesh_bins: a.mesh_bins, trunc: a.trunc });
        beta_dpsgd(model.as_ref(), &train_set, &test_set, &cfg, &opts, a.common.seed)?
    };
    let mut buf = Vec::new();
    result.write_log(&mut buf)?;
    if a.out.is_some() {
        let last = result.log.last();
        println!("steps {}", result.steps);
        println!("halted {}", result.halted);
        println!("epsilon {}", last.map_or(0.0, |l| l.epsilon));
        println!("test_acc {}", result.final_test_acc());
    }
    emit("train", &a, a.common.seed, a.out.as_deref(), &buf)
}

fn sample(a: SampleArgs) -> Result<()> {
    let xs = GGParams::new(a.beta, a.sigma)?.sample_seeded(a.common.seed, a.count);
    let text: String = xs.iter().map(|x| format!("{x}\n")).collect();
    emit("sample", &a, a.common.seed, a.out.as_deref(), text.as_bytes())
}

fn replay(a: ReplayArgs) -> Result<()> {
    let m = RunManifest::read(&a.manifest)?;
    let mut config = m.config.clone();
    let out = match &a.out {
        Some(p) => Some(p.clone()),
        None => m.outputs.first().cloned(),
    };
    if let Some(obj) = config.as_object_mut() {
        obj.insert("out".into(), serde_json::to_value(&out)?);
    }
    let cmd = rebuild(&m.command, config).with_context(|| format!("replaying {}", a.manifest.display()))?;
    run(cmd)
}

fn rebuild(command: &str, config: serde_json::Value) -> Result<Command> {
    fn de<T: serde::de::DeserializeOwned>(v: serde_json::Value) -> Result<T> {
        Ok(serde_json::from_value(v)?)
    }
    Ok(match command {
        "epsilon" => Command::Epsilon(de(config)?),
        "solve-sigma" => Command::SolveSigma(de(config)?),
        "family" => Command::Family(de(config)?),
        "tail-weight" => Command::TailWeight(de(config)?),
        "simulate-argmax" => Command::SimulateArgmax(de(config)?),
        "pate-label" => Command::PateLabel(de(config)?),
        "train" => Command::Train(de(config)?),
        "sample" => Command::Sample(de(config)?),
        other => return Err(anyhow!("manifest names unknown command '{other}'")),
    })
}
