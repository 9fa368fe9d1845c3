//! Acceptance gate: one test per criterion, each printing a PASS or FAIL line.
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use votelab::bounds::{self, competence_second_order, BoundOptions, Competence};
use votelab::extrapolate::{
    predict_disagreement, predict_mv_error, subsample_stats, ustat_clt_check, EtaMode,
    SubsampleStats, TargetSize,
};
use votelab::simgen::{
    make_pathological, make_split_vote, ClassifierSampler, FinitePool, SplitCase,
};
use votelab::stats::{self, competence_check, tandem_identity_check, tie_set};
use votelab::{EnsembleWeights, TieRule};

use common::{close, oracle, random_dataset, random_weights, rng, verdict};

#[test]
fn worked_examples() {
    let start = Instant::now();
    // expected values as published, cases all-y1, half-half, all-y2
    let published = [
        (0.75, [0.0, 0.5 / 0.3125, 1.0 / 0.3125]),
        (0.51, [0.0, 0.5 / 0.2501, 1.0 / 0.2501]),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (p, expected) in published {
        for (case, want) in SplitCase::ALL.into_iter().zip(expected) {
            let e = make_split_vote(p, case, 4, 2).unwrap();
            let got = stats::ensemble_stats(&e.data, &e.weights, TieRule::LowestLabel)
                .unwrap()
                .polarization;
            let hit = close(got, want, 1e-9);
            ok &= hit;
            detail.push(format!(
                "p={p} {case}: got {got:.10} want {want:.10}{}",
                if hit { "" } else { " MISMATCH" }
            ));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    ok &= elapsed < 1.0;
    verdict(
        "worked examples",
        ok,
        &format!("{} ({elapsed:.3}s)", detail.join("; ")),
    );
}

#[test]
fn pathological_tightness() {
    let e = make_pathological(10, 0.1, 100, 2).unwrap();
    let s = stats::ensemble_stats(&e.data, &e.weights, TieRule::LowestLabel).unwrap();
    let (bound, _) = competence_second_order(&s, 10, Competence::Competent);
    let mut ok = s.mv_error == 0.0
        && close(s.avg_error, 0.1, 1e-12)
        && close(s.disagreement_v, 0.18, 1e-12)
        && close(bound, 0.036, 1e-12);
    let mut worst = 0.0f64;
    for k in [3usize, 5, 10] {
        for eps in [0.05, 0.1, 0.2, 0.4] {
            let e = make_pathological(k, eps, 60, 2).unwrap();
            let s = stats::ensemble_stats(&e.data, &e.weights, TieRule::LowestLabel).unwrap();
            let (bound, _) = competence_second_order(&s, k, Competence::Competent);
            let ratio = bound / (eps * eps);
            let target = 4.0 * (k - 1) as f64 / k as f64;
            worst = worst.max((ratio - target).abs());
            ok &= s.mv_error == 0.0;
        }
    }
    ok &= worst <= 1e-12;
    verdict(
        "pathological tightness",
        ok,
        &format!(
            "(mv, avg, disagreement) = ({}, {}, {}), bound {bound}, max |ratio - 4(K-1)/K| = {worst:e}",
            s.mv_error, s.avg_error, s.disagreement_v
        ),
    );
}

#[test]
fn identity_suite() {
    let start = Instant::now();
    let mut r = rng(7);
    let mut worst_tandem = 0.0f64;
    let mut worst_vu = 0.0f64;
    for _ in 0..1000 {
        let n = r.gen_range(1..=8);
        let m = r.gen_range(1..=50);
        let k = r.gen_range(2..=5);
        let data = random_dataset(&mut r, n, m, k);
        let w = random_weights(&mut r, n);
        let profile = stats::pointwise_profile(&data, &w).unwrap();
        let (lhs, rhs) = tandem_identity_check(&profile, &data, &w).unwrap();
        worst_tandem = worst_tandem.max((lhs - rhs).abs());
        if n >= 2 {
            let s =
                stats::ensemble_stats(&data, &EnsembleWeights::uniform(n), TieRule::LowestLabel)
                    .unwrap();
            let u = s.disagreement_u.unwrap();
            worst_vu = worst_vu.max((s.disagreement_v - (1.0 - 1.0 / n as f64) * u).abs());
        }
    }

    let mut worst_oracle = 0.0f64;
    let mut oracle_cases = 0;
    for n in 1..=4 {
        for m in 1..=12 {
            for k in 2..=3 {
                for _ in 0..10 {
                    let data = random_dataset(&mut r, n, m, k);
                    let w = random_weights(&mut r, n);
                    for rule in [TieRule::LowestLabel, TieRule::PerturbedWeights] {
                        let got = stats::ensemble_stats(&data, &w, rule).unwrap();
                        let want = oracle(&data, w.as_slice(), rule, w.is_uniform());
                        let pairs = [
                            (got.avg_error, want.avg_error),
                            (got.disagreement_v, want.disagreement_v),
                            (got.tandem, want.tandem),
                            (got.mv_error, want.mv_error),
                            (got.polarization, want.polarization),
                            (got.epsilon_rho, want.epsilon_rho),
                            (got.prob_w_gt_half, want.prob_w_gt_half),
                            (got.second_moment_w, want.second_moment_w),
                            (
                                got.disagreement_u.unwrap_or(-1.0),
                                want.disagreement_u.unwrap_or(-1.0),
                            ),
                            (
                                got.sigma1_sq.unwrap_or(-1.0),
                                want.sigma1_sq.unwrap_or(-1.0),
                            ),
                        ];
                        for (a, b) in pairs {
                            worst_oracle = worst_oracle.max((a - b).abs());
                        }
                        oracle_cases += 1;
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = worst_tandem <= 1e-12 && worst_vu <= 1e-12 && worst_oracle <= 1e-12 && elapsed < 30.0;
    verdict(
        "identity suite",
        ok,
        &format!(
            "max |E[W^2] - tandem| {worst_tandem:e}, max V/U residual {worst_vu:e}, \
             max oracle deviation {worst_oracle:e} over {oracle_cases} cases ({elapsed:.2}s)"
        ),
    );
}

#[test]
fn bound_validity() {
    let start = Instant::now();
    let mut r = rng(11);
    let mut instances = 0;
    let mut violations = Vec::new();
    let mut applicable_counts = std::collections::BTreeMap::new();
    while instances < 10_000 {
        let n = r.gen_range(1..=8);
        let m = r.gen_range(1..=64);
        let k = r.gen_range(2..=10);
        let data = random_dataset(&mut r, n, m, k);
        let w = random_weights(&mut r, n).tie_free_perturb(r.gen());
        let options = BoundOptions {
            tie_rule: TieRule::PerturbedWeights,
            ..BoundOptions::default()
        };
        let report = bounds::all_bounds(&data, &w, &options).unwrap();
        if report.tie_fraction > 0.0 {
            continue;
        }
        instances += 1;
        let mv = report.inputs_digest.mv_error;
        for e in report.entries.iter().filter(|e| e.applicable) {
            *applicable_counts.entry(e.name).or_insert(0usize) += 1;
            if e.value < mv - 1e-12 {
                violations.push(format!("{} = {} < mv {mv}", e.name, e.value));
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let counts: Vec<String> = applicable_counts
        .iter()
        .map(|(k, v)| format!("{k} {v}"))
        .collect();
    verdict(
        "bound validity",
        violations.is_empty() && elapsed < 120.0,
        &format!(
            "{instances} tie-free instances, {} violations{}; applicable counts: {} ({elapsed:.1}s)",
            violations.len(),
            violations.first().map(|v| format!(" (first: {v})")).unwrap_or_default(),
            counts.join(", ")
        ),
    );
}

/// A distribution of the point-wise error, sampled directly.
struct WDistribution {
    name: &'static str,
    sample: fn(&mut rand_chacha::ChaCha8Rng) -> f64,
    polarization: f64,
}

#[test]
fn polarization_concentration() {
    let dists = [
        WDistribution {
            name: "uniform",
            sample: |r| r.gen::<f64>(),
            polarization: 0.5 / (1.0 / 3.0),
        },
        WDistribution {
            name: "squared uniform",
            sample: |r| r.gen::<f64>().powi(2),
            polarization: (1.0 - 0.5f64.sqrt()) / 0.2,
        },
        WDistribution {
            name: "two-point 0/0.51",
            sample: |r| if r.gen::<f64>() < 0.3 { 0.51 } else { 0.0 },
            polarization: 0.3 / (0.3 * 0.51 * 0.51),
        },
        WDistribution {
            name: "two-point 0.1/0.9",
            sample: |r| if r.gen::<f64>() < 0.1 { 0.9 } else { 0.1 },
            polarization: 0.1 / (0.9 * 0.01 + 0.1 * 0.81),
        },
    ];
    let (m, reps, delta) = (2000usize, 1000usize, 0.05);
    let threshold = (1.0 - delta) - 3.0 * ((1.0 - delta) * delta / reps as f64).sqrt();
    let mut ok = true;
    let mut detail = Vec::new();
    for (d, dist) in dists.iter().enumerate() {
        let mut r = rng(100 + d as u64);
        let mut covered = 0;
        for _ in 0..reps {
            let w: Vec<f64> = (0..m).map(|_| (dist.sample)(&mut r)).collect();
            let s = w.iter().map(|x| x * x).sum::<f64>() / m as f64;
            let p = w.iter().filter(|&&x| x > 0.5).count() as f64 / m as f64;
            let bound = bounds::polarization_upper_bound(s, p, m, delta).unwrap();
            if dist.polarization <= bound {
                covered += 1;
            }
        }
        let frac = covered as f64 / reps as f64;
        ok &= frac >= threshold;
        detail.push(format!(
            "{} (eta {:.4}) {frac:.3}",
            dist.name, dist.polarization
        ));
    }
    verdict(
        "polarization concentration",
        ok,
        &format!(
            "coverage vs threshold {threshold:.4}: {}",
            detail.join(", ")
        ),
    );
}

#[test]
fn scaling_law() {
    let pool = FinitePool::random(12, 500, 10, 0.7, 1).unwrap();
    let sampler = ClassifierSampler::FinitePool(pool);
    let n = 50;
    let mut within = 0;
    let mut within_limit = 0;
    let limit = (1.0 - 1.0 / n as f64) * sampler.d_infinity();
    for trial in 0..100u64 {
        let mut r = rng(1000 + trial);
        let data = sampler.sample_ensemble(n, &mut r).unwrap();
        let sub = subsample_stats(&data, 3, 20, trial).unwrap();
        let predicted = predict_disagreement(&sub, TargetSize::Finite(n)).unwrap();
        let actual =
            stats::ensemble_stats(&data, &EnsembleWeights::uniform(n), TieRule::LowestLabel)
                .unwrap()
                .disagreement_v;
        if ((predicted - actual) / actual).abs() < 0.1 {
            within += 1;
        }
        if ((predicted - limit) / limit).abs() < 0.1 {
            within_limit += 1;
        }
    }
    let clt = ustat_clt_check(&sampler, 200, 500, 5).unwrap();
    let var_rel = (clt.var_scaled - clt.sigma1_sq_true).abs() / clt.sigma1_sq_true;
    let mean_z = (clt.mean_u - clt.d_infinity_true).abs() / clt.mean_standard_error();
    let ok = within >= 90 && var_rel < 0.2 && mean_z <= 3.0;
    verdict(
        "scaling law",
        ok,
        &format!(
            "{within}/100 trials within 10% of the ensemble's disagreement \
             ({within_limit}/100 of (1-1/N)·D_inf); CLT: var_scaled {:.6} vs sigma1^2 {:.6} \
             ({:.1}% off), mean {:.6} vs D_inf {:.6} ({mean_z:.2} SE)",
            clt.var_scaled,
            clt.sigma1_sq_true,
            100.0 * var_rel,
            clt.mean_u,
            clt.d_infinity_true
        ),
    );
}

#[test]
fn extrapolation_formulas() {
    let sub = SubsampleStats {
        subset_size: 3,
        avg_error: 0.1,
        disagreement: 0.08,
        epsilon: 0.2,
        polarization: 4.0 / 3.0,
        mv_error: 0.0,
        num_subsets: 1,
        exhaustive: true,
    };
    let conj = predict_mv_error(&sub, TargetSize::Infinite, EtaMode::Conjecture).unwrap();
    let mut ok = close(conj, 0.28 / 3.0, 1e-12);
    for target in [
        TargetSize::Finite(3),
        TargetSize::Finite(17),
        TargetSize::Finite(1000),
        TargetSize::Infinite,
    ] {
        let a = predict_mv_error(&sub, target, EtaMode::Conjecture).unwrap();
        let b = predict_mv_error(&sub, target, EtaMode::Measured).unwrap();
        ok &= a.to_bits() == b.to_bits();
    }
    verdict(
        "extrapolation formulas",
        ok,
        &format!("N -> inf conjecture estimate {conj:.15} (want 0.093333...), measured mode bit-identical at eta_3 = 4/3"),
    );
}

#[test]
fn competence_suite() {
    let mut r = rng(23);
    let (mut competent, mut semi, mut violations) = (0, 0, Vec::new());
    for _ in 0..20_000 {
        let n = r.gen_range(1..=8);
        let m = r.gen_range(1..=30);
        let k = r.gen_range(2..=4);
        let data = random_dataset(&mut r, n, m, k);
        let base = random_weights(&mut r, n);
        let w = if r.gen() {
            base.tie_free_perturb(r.gen())
        } else {
            base
        };
        let a = stats::analyze(&data, &w, TieRule::PerturbedWeights).unwrap();
        let report = competence_check(&a.profile);
        let s = &a.stats;
        if report.competent {
            competent += 1;
            if s.polarization > 2.0 + 1e-12 {
                violations.push(format!("competent with eta {}", s.polarization));
            }
        }
        if tie_set(&a.profile).is_tie_free() && report.semi_competent {
            semi += 1;
            let (second, _) = competence_second_order(s, k, Competence::TieFreeSemiCompetent);
            if s.mv_error > s.avg_error + 1e-12 || s.mv_error > second + 1e-12 {
                violations.push(format!(
                    "mv {} avg {} second-order {second}",
                    s.mv_error, s.avg_error
                ));
            }
        }
    }
    verdict(
        "competence suite",
        violations.is_empty() && competent > 0 && semi > 0,
        &format!(
            "{competent} competent and {semi} tie-free semi-competent instances, {} violations",
            violations.len()
        ),
    );
}

fn run_cli(dir: &Path, args: &[&str], threads: Option<&str>) -> Vec<u8> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_votelab"));
    cmd.current_dir(dir).args(args);
    if let Some(t) = threads {
        cmd.env("VOTELAB_THREADS", t);
    }
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

#[test]
fn determinism() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let setup: [&[&str]; 2] = [
        &[
            "simulate",
            "split-vote",
            "--p",
            "0.75",
            "--case",
            "half-half",
            "--output",
            "ex1.csv",
        ],
        &[
            "simulate",
            "finite-pool",
            "--n",
            "30",
            "--m",
            "80",
            "--seed",
            "3",
            "--output",
            "pool.csv",
        ],
    ];
    for args in setup {
        run_cli(d, args, None);
    }
    let commands: [&[&str]; 9] = [
        &[
            "analyze",
            "--predictions",
            "ex1.csv",
            "--weights",
            "ex1.csv.weights.json",
        ],
        &[
            "analyze",
            "--predictions",
            "pool.csv",
            "--perturb",
            "--seed",
            "4",
            "--format",
            "table",
        ],
        &["bounds", "--predictions", "pool.csv", "--delta", "0.05"],
        &[
            "bounds",
            "--predictions",
            "pool.csv",
            "--format",
            "json",
            "--perturb",
        ],
        &[
            "extrapolate",
            "--predictions",
            "pool.csv",
            "--m",
            "3",
            "--targets",
            "5,10,20",
            "--num-subsets",
            "20",
            "--seed",
            "7",
        ],
        &["simulate", "pathological", "--epsilon", "0.1", "--m", "20"],
        &[
            "simulate",
            "dirichlet",
            "--n",
            "9",
            "--m",
            "30",
            "--seed",
            "2",
        ],
        &[
            "simulate",
            "finite-pool",
            "--n",
            "12",
            "--m",
            "30",
            "--seed",
            "2",
        ],
        &[
            "simulate",
            "clt-check",
            "--n",
            "40",
            "--m",
            "60",
            "--trials",
            "120",
            "--seed",
            "2",
        ],
    ];
    let mut mismatches = Vec::new();
    for args in commands {
        let first = run_cli(d, args, None);
        let second = run_cli(d, args, None);
        let single = run_cli(d, args, Some("1"));
        if first != second || first != single || first.is_empty() {
            mismatches.push(args.join(" "));
        }
    }
    let extrapolate = [
        "extrapolate",
        "--predictions",
        "pool.csv",
        "--targets",
        "5,10,40",
        "--seed",
        "7",
        "--output",
    ];
    let mut files = Vec::new();
    for (i, threads) in [None, None, Some("1")].into_iter().enumerate() {
        let name = format!("curve{i}.csv");
        let mut args = extrapolate.to_vec();
        args.push(&name);
        run_cli(d, &args, threads);
        files.push((
            std::fs::read(d.join(&name)).unwrap(),
            std::fs::read(d.join(format!("curve{i}.json"))).unwrap(),
        ));
    }
    if files.windows(2).any(|p| p[0] != p[1]) {
        mismatches.push("extrapolate --output".into());
    }
    verdict(
        "determinism",
        mismatches.is_empty(),
        &format!(
            "{} commands rerun, mismatches: {mismatches:?}",
            commands.len() + 1
        ),
    );
}
