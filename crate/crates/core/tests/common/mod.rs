#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use votelab::{EnsembleWeights, Label, PredictionDataset, TieRule};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random ensemble with per-classifier accuracies and a per-classifier
/// favourite wrong label, so that both agreeing and scattered mistakes occur.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, m: usize, k: usize) -> PredictionDataset {
    let truth: Vec<Label> = (0..m).map(|_| rng.gen_range(0..k as Label)).collect();
    // half the instances are made of better-than-chance classifiers
    let floor = if rng.gen::<bool>() { 0.5 } else { 0.0 };
    let skill: Vec<f64> = (0..n).map(|_| rng.gen_range(floor..1.0)).collect();
    let favourite: Vec<Label> = (0..n).map(|_| rng.gen_range(0..k as Label)).collect();
    let rows = truth
        .iter()
        .map(|&y| {
            (0..n)
                .map(|i| {
                    if rng.gen::<f64>() < skill[i] {
                        y
                    } else if rng.gen::<bool>() {
                        favourite[i]
                    } else {
                        rng.gen_range(0..k as Label)
                    }
                })
                .collect()
        })
        .collect();
    PredictionDataset::from_rows(truth, rows, Some(k)).unwrap()
}

/// Uniform, random, or sparse weights.
pub fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> EnsembleWeights {
    match rng.gen_range(0..3) {
        0 => EnsembleWeights::uniform(n),
        1 => EnsembleWeights::new((0..n).map(|_| rng.gen_range(0.01..1.0)).collect()).unwrap(),
        _ => {
            let mut raw: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..4u8))).collect();
            raw[0] += 1.0;
            EnsembleWeights::new(raw).unwrap()
        }
    }
}

/// Every statistic recomputed from its definition by nested loops over
/// classifier pairs and examples.
#[derive(Debug)]
pub struct Oracle {
    pub avg_error: f64,
    pub disagreement_v: f64,
    pub disagreement_u: Option<f64>,
    pub tandem: f64,
    pub mv_error: f64,
    pub polarization: f64,
    pub epsilon_rho: f64,
    pub prob_w_gt_half: f64,
    pub second_moment_w: f64,
    pub sigma1_sq: Option<f64>,
}

pub fn oracle(data: &PredictionDataset, w: &[f64], rule: TieRule, uniform: bool) -> Oracle {
    let n = data.num_classifiers();
    let m = data.num_examples();
    let k = data.num_classes();
    let y = data.true_labels();
    let h = |j: usize, i: usize| data.row(j)[i];
    let mf = m as f64;

    let mut avg = 0.0;
    for i in 0..n {
        let mut wrong = 0.0;
        for j in 0..m {
            if h(j, i) != y[j] {
                wrong += 1.0;
            }
        }
        avg += w[i] * wrong / mf;
    }

    let mut dis = vec![vec![0.0; n]; n];
    let mut tan = vec![vec![0.0; n]; n];
    let mut distinct_wrong = 0.0;
    for a in 0..n {
        for b in 0..n {
            let (mut d, mut t, mut e) = (0.0, 0.0, 0.0);
            for j in 0..m {
                let (ha, hb) = (h(j, a), h(j, b));
                if ha != hb {
                    d += 1.0;
                }
                if ha != y[j] && hb != y[j] {
                    t += 1.0;
                    if ha != hb {
                        e += 1.0;
                    }
                }
            }
            dis[a][b] = d / mf;
            tan[a][b] = t / mf;
            distinct_wrong += w[a] * w[b] * e / mf;
        }
    }
    let mut dv = 0.0;
    let mut tandem = 0.0;
    for a in 0..n {
        for b in 0..n {
            dv += w[a] * w[b] * dis[a][b];
            tandem += w[a] * w[b] * tan[a][b];
        }
    }

    let (mut mv_wrong, mut above, mut sq) = (0.0, 0.0, 0.0);
    for j in 0..m {
        let mut mass = vec![0.0; k];
        let mut wj = 0.0;
        for i in 0..n {
            mass[h(j, i) as usize] += w[i];
            if h(j, i) != y[j] {
                wj += w[i];
            }
        }
        let top = mass.iter().cloned().fold(f64::MIN, f64::max);
        let winner = match rule {
            TieRule::LowestLabel => (0..k).find(|&c| mass[c] >= top - 1e-12).unwrap(),
            TieRule::PerturbedWeights => (0..k).find(|&c| mass[c] == top).unwrap(),
        };
        if winner != y[j] as usize {
            mv_wrong += 1.0;
        }
        if wj > 0.5 {
            above += 1.0;
        }
        sq += wj * wj;
    }
    let second = sq / mf;
    let p = above / mf;

    let (du, s1) = if uniform && n >= 2 {
        let mut total = 0.0;
        for a in 0..n {
            for b in a + 1..n {
                total += dis[a][b];
            }
        }
        let g: Vec<f64> = (0..n)
            .map(|a| (0..n).filter(|&b| b != a).map(|b| dis[a][b]).sum::<f64>() / (n - 1) as f64)
            .collect();
        let mean = g.iter().sum::<f64>() / n as f64;
        let var = g.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        (Some(2.0 * total / (n * (n - 1)) as f64), Some(var))
    } else {
        (None, None)
    };

    Oracle {
        avg_error: avg,
        disagreement_v: dv,
        disagreement_u: du,
        tandem,
        mv_error: mv_wrong / mf,
        polarization: if second > 0.0 { p / second } else { 0.0 },
        epsilon_rho: if avg > 0.0 {
            distinct_wrong / (2.0 * avg)
        } else {
            0.0
        },
        prob_w_gt_half: p,
        second_moment_w: second,
        sigma1_sq: s1,
    }
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Prints the standard acceptance line and fails the test when `ok` is false.
/// Writes through the stdout handle so the line survives test capture.
pub fn verdict(name: &str, ok: bool, detail: &str) {
    use std::io::Write;
    let _ = writeln!(
        std::io::stdout().lock(),
        "{} {name}: {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "{name}: {detail}");
}
