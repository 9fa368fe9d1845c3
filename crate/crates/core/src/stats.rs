//! Point-wise and ensemble-level statistics of a weighted majority vote.
//!
//! For an example `(x, y)` the point-wise error `W(x, y)` is the weighted
//! fraction of classifiers that are wrong on it and `p_c(x)` the weighted
//! fraction voting for class `c`. Everything else (average error,
//! disagreement, tandem loss, polarization, ε) is an average of functions of
//! these over the examples, each with mass `1/m`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{EnsembleWeights, Label, PredictionDataset};
use crate::error::{Error, Result};
use crate::sum::{self, NeumaierSum};

/// Label masses within this distance of each other (or of 1/2) are treated as
/// equal when detecting ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// How the majority vote resolves an exact tie between label masses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieRule {
    /// The caller perturbed the weights upstream, so exact ties do not occur.
    /// Should one occur anyway the lowest tied label wins.
    PerturbedWeights,
    /// Smallest class id among the (tolerance-)tied maxima.
    #[default]
    LowestLabel,
}

impl FromStr for TieRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perturbed-weights" => Ok(TieRule::PerturbedWeights),
            "lowest-label" => Ok(TieRule::LowestLabel),
            other => Err(Error::InvalidParameter(format!(
                "unknown tie rule `{other}` (expected perturbed-weights or lowest-label)"
            ))),
        }
    }
}

impl fmt::Display for TieRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TieRule::PerturbedWeights => "perturbed-weights",
            TieRule::LowestLabel => "lowest-label",
        })
    }
}

/// Per-example vote masses of a weighted ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseProfile {
    num_classes: usize,
    true_labels: Vec<Label>,
    w_rho: Vec<f64>,
    // m x K, row-stochastic
    label_mass: Vec<f64>,
    tie_flags: Vec<bool>,
}

impl PointwiseProfile {
    pub fn num_examples(&self) -> usize {
        self.w_rho.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn true_labels(&self) -> &[Label] {
        &self.true_labels
    }

    /// Weighted error mass `W` of every example.
    pub fn w_rho(&self) -> &[f64] {
        &self.w_rho
    }

    /// Vote masses `p_c(x_j)` over the classes for example `j`.
    pub fn label_mass(&self, j: usize) -> &[f64] {
        &self.label_mass[j * self.num_classes..(j + 1) * self.num_classes]
    }

    /// Whether example `j` is an exact half/half split between its true label
    /// and one wrong label.
    pub fn tie_flags(&self) -> &[bool] {
        &self.tie_flags
    }

    /// Builds a profile directly from vote masses, one row per example.
    /// Rows must be nonnegative and sum to one within `1e-9`.
    pub fn from_label_mass(true_labels: Vec<Label>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let num_classes = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || rows.len() != true_labels.len() {
            return Err(Error::DimensionMismatch {
                what: "label-mass rows",
                expected: true_labels.len(),
                found: rows.len(),
            });
        }
        let mut label_mass = Vec::with_capacity(rows.len() * num_classes);
        let mut w_rho = Vec::with_capacity(rows.len());
        for (j, (row, &y)) in rows.iter().zip(&true_labels).enumerate() {
            if row.len() != num_classes || (y as usize) >= num_classes {
                return Err(Error::Validation(format!(
                    "label-mass row {} is malformed",
                    j + 1
                )));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p))
                || (sum::sum(row.iter().copied()) - 1.0).abs() > 1e-9
            {
                return Err(Error::Validation(format!(
                    "label-mass row {} is not a probability vector",
                    j + 1
                )));
            }
            w_rho.push(sum::sum(
                row.iter()
                    .enumerate()
                    .filter(|&(c, _)| c != y as usize)
                    .map(|(_, &p)| p),
            ));
            label_mass.extend_from_slice(row);
        }
        let mut profile = Self {
            num_classes,
            true_labels,
            w_rho,
            label_mass,
            tie_flags: Vec::new(),
        };
        profile.tie_flags = (0..profile.num_examples())
            .map(|j| profile.is_tie(j))
            .collect();
        Ok(profile)
    }

    fn is_tie(&self, j: usize) -> bool {
        let y = self.true_labels[j] as usize;
        let mass = self.label_mass(j);
        (mass[y] - 0.5).abs() <= TIE_TOLERANCE
            && mass
                .iter()
                .enumerate()
                .any(|(c, &p)| c != y && (p - 0.5).abs() <= TIE_TOLERANCE)
    }
}

/// Computes `W` and the per-class vote masses of every example.
///
/// Uniform weights are handled with integer vote counts, so exact halves are
/// exactly `0.5`; other weights use compensated sums.
pub fn pointwise_profile(
    data: &PredictionDataset,
    weights: &EnsembleWeights,
) -> Result<PointwiseProfile> {
    let n = data.num_classifiers();
    weights.check_len(n)?;
    let k = data.num_classes();
    let m = data.num_examples();
    let w = weights.as_slice();

    let mut label_mass = vec![0.0; m * k];
    let mut w_rho = Vec::with_capacity(m);

    if weights.is_uniform() {
        let mut counts = vec![0usize; k];
        for (j, (y, row)) in data.rows().enumerate() {
            counts.iter_mut().for_each(|c| *c = 0);
            for &p in row {
                counts[p as usize] += 1;
            }
            let out = &mut label_mass[j * k..(j + 1) * k];
            for (dst, &c) in out.iter_mut().zip(&counts) {
                *dst = c as f64 / n as f64;
            }
            w_rho.push((n - counts[y as usize]) as f64 / n as f64);
        }
    } else {
        let mut acc = vec![NeumaierSum::new(); k];
        for (j, (y, row)) in data.rows().enumerate() {
            acc.iter_mut().for_each(|a| *a = NeumaierSum::new());
            let mut wrong = NeumaierSum::new();
            for (&p, &wi) in row.iter().zip(w) {
                acc[p as usize].add(wi);
                if p != y {
                    wrong.add(wi);
                }
            }
            let out = &mut label_mass[j * k..(j + 1) * k];
            for (dst, a) in out.iter_mut().zip(&acc) {
                *dst = a.total();
            }
            w_rho.push(wrong.total());
        }
    }

    let mut profile = PointwiseProfile {
        num_classes: k,
        true_labels: data.true_labels().to_vec(),
        w_rho,
        label_mass,
        tie_flags: Vec::new(),
    };
    profile.tie_flags = (0..m).map(|j| profile.is_tie(j)).collect();
    Ok(profile)
}

/// Majority-vote label of every example.
pub fn majority_vote(profile: &PointwiseProfile, tie_rule: TieRule) -> Vec<Label> {
    (0..profile.num_examples())
        .map(|j| vote(profile.label_mass(j), tie_rule))
        .collect()
}

fn vote(mass: &[f64], tie_rule: TieRule) -> Label {
    let max = mass.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = match tie_rule {
        TieRule::LowestLabel => max - TIE_TOLERANCE,
        TieRule::PerturbedWeights => max,
    };
    mass.iter().position(|&p| p >= threshold).unwrap_or(0) as Label
}

/// Scalar summary of a weighted ensemble on a dataset.
///
/// `disagreement_u` and `sigma1_sq` are only defined for uniform weights with
/// at least two classifiers and serialize as `null` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
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

/// Classifier-pair tables: error rates, pairwise disagreement and pairwise
/// tandem loss, each as a fraction of the examples.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseTables {
    n: usize,
    error: Vec<f64>,
    disagreement: Vec<f64>,
    tandem: Vec<f64>,
}

impl PairwiseTables {
    pub fn compute(data: &PredictionDataset) -> Self {
        let n = data.num_classifiers();
        let m = data.num_examples();
        let mut dis = vec![0u64; n * n];
        let mut both = vec![0u64; n * n];
        let mut wrong = vec![false; n];
        for (y, row) in data.rows() {
            for (flag, &p) in wrong.iter_mut().zip(row) {
                *flag = p != y;
            }
            for i in 0..n {
                if wrong[i] {
                    both[i * n + i] += 1;
                }
                for j in i + 1..n {
                    if row[i] != row[j] {
                        dis[i * n + j] += 1;
                    }
                    if wrong[i] && wrong[j] {
                        both[i * n + j] += 1;
                    }
                }
            }
        }
        // mirror the upper triangle
        for i in 0..n {
            for j in i + 1..n {
                dis[j * n + i] = dis[i * n + j];
                both[j * n + i] = both[i * n + j];
            }
        }
        let frac = |c: u64| c as f64 / m as f64;
        Self {
            n,
            error: (0..n).map(|i| frac(both[i * n + i])).collect(),
            disagreement: dis.into_iter().map(frac).collect(),
            tandem: both.into_iter().map(frac).collect(),
        }
    }

    pub fn num_classifiers(&self) -> usize {
        self.n
    }

    /// `L(h_i)`.
    pub fn error(&self, i: usize) -> f64 {
        self.error[i]
    }

    /// `D(h_i, h_j)`.
    pub fn disagreement(&self, i: usize, j: usize) -> f64 {
        self.disagreement[i * self.n + j]
    }

    /// `L(h_i, h_j)`; the diagonal is `L(h_i)`.
    pub fn tandem(&self, i: usize, j: usize) -> f64 {
        self.tandem[i * self.n + j]
    }

    fn weighted_pair_sum(&self, w: &[f64], table: &[f64]) -> f64 {
        let mut acc = NeumaierSum::new();
        for i in 0..self.n {
            acc.add(w[i] * w[i] * table[i * self.n + i]);
            for j in i + 1..self.n {
                acc.add(2.0 * w[i] * w[j] * table[i * self.n + j]);
            }
        }
        acc.total()
    }

    /// Unweighted U-statistic `2/(N(N-1)) Σ_{i<j} D(h_i, h_j)`.
    fn disagreement_u_stat(&self) -> Option<f64> {
        if self.n < 2 {
            return None;
        }
        let mut acc = NeumaierSum::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                acc.add(self.disagreement(i, j));
            }
        }
        Some(2.0 * acc.total() / (self.n * (self.n - 1)) as f64)
    }

    /// Sample variance of the leave-one-out mean disagreements `g₁(i)`.
    fn sigma1_sq(&self) -> Option<f64> {
        if self.n < 2 {
            return None;
        }
        let g1: Vec<f64> = (0..self.n)
            .map(|i| {
                sum::sum(
                    (0..self.n)
                        .filter(|&j| j != i)
                        .map(|j| self.disagreement(i, j)),
                ) / (self.n - 1) as f64
            })
            .collect();
        Some(sum::sample_variance(&g1))
    }
}

/// Everything computed for one weighted ensemble on one dataset.
#[derive(Debug, Clone)]
pub struct EnsembleAnalysis {
    pub profile: PointwiseProfile,
    pub majority: Vec<Label>,
    pub stats: EnsembleStats,
}

/// Full analysis: profile, majority-vote labels and [`EnsembleStats`].
pub fn analyze(
    data: &PredictionDataset,
    weights: &EnsembleWeights,
    tie_rule: TieRule,
) -> Result<EnsembleAnalysis> {
    let profile = pointwise_profile(data, weights)?;
    let pairs = PairwiseTables::compute(data);
    let majority = majority_vote(&profile, tie_rule);
    let stats = summarize(data, weights, &profile, &pairs, &majority);
    Ok(EnsembleAnalysis {
        profile,
        majority,
        stats,
    })
}

/// Ensemble statistics of `data` under `weights`.
pub fn ensemble_stats(
    data: &PredictionDataset,
    weights: &EnsembleWeights,
    tie_rule: TieRule,
) -> Result<EnsembleStats> {
    analyze(data, weights, tie_rule).map(|a| a.stats)
}

fn summarize(
    data: &PredictionDataset,
    weights: &EnsembleWeights,
    profile: &PointwiseProfile,
    pairs: &PairwiseTables,
    majority: &[Label],
) -> EnsembleStats {
    let w = weights.as_slice();
    let m = data.num_examples() as f64;
    let n = data.num_classifiers();
    let uniform = weights.is_uniform();

    let avg_error = sum::sum(w.iter().enumerate().map(|(i, wi)| wi * pairs.error(i)));
    let disagreement_v = pairs.weighted_pair_sum(w, &pairs.disagreement);
    let tandem = pairs.weighted_pair_sum(w, &pairs.tandem);

    let mv_wrong = majority
        .iter()
        .zip(data.true_labels())
        .filter(|(h, y)| h != y)
        .count();
    let mv_error = mv_wrong as f64 / m;

    let above_half = profile.w_rho().iter().filter(|&&x| x > 0.5).count();
    let prob_w_gt_half = above_half as f64 / m;
    let second_moment_w = sum::mean(profile.w_rho().iter().map(|x| x * x));
    let polarization = if second_moment_w > 0.0 {
        prob_w_gt_half / second_moment_w
    } else {
        0.0
    };

    let epsilon_rho = if avg_error > 0.0 {
        distinct_wrong_pair_mass(profile) / (2.0 * avg_error)
    } else {
        0.0
    };

    EnsembleStats {
        avg_error,
        disagreement_v,
        disagreement_u: if uniform {
            pairs.disagreement_u_stat()
        } else {
            None
        },
        tandem,
        mv_error,
        polarization,
        epsilon_rho,
        prob_w_gt_half,
        second_moment_w,
        sigma1_sq: if uniform && n >= 2 {
            pairs.sigma1_sq()
        } else {
            None
        },
    }
}

/// Mean over examples of `Σ_{c≠c', c,c'≠y} p_c p_c'`: the probability that two
/// independent draws are both wrong and disagree.
fn distinct_wrong_pair_mass(profile: &PointwiseProfile) -> f64 {
    sum::mean((0..profile.num_examples()).map(|j| {
        let y = profile.true_labels()[j] as usize;
        let wrong = profile.w_rho()[j];
        let squares = sum::sum(
            profile
                .label_mass(j)
                .iter()
                .enumerate()
                .filter(|&(c, _)| c != y)
                .map(|(_, p)| p * p),
        );
        (wrong * wrong - squares).max(0.0)
    }))
}

/// Unweighted disagreement U-statistic from per-example label counts,
/// `(1/m) Σ_x (N² - Σ_c n_c(x)²) / (N(N-1))`, in `O(m·(N + K))`.
pub fn disagreement_u_by_counts(data: &PredictionDataset) -> Result<f64> {
    let n = data.num_classifiers();
    if n < 2 {
        return Err(Error::InvalidParameter(
            "the disagreement U-statistic needs at least two classifiers".into(),
        ));
    }
    let pairs = (n * (n - 1)) as f64;
    let mut counts = vec![0u64; data.num_classes()];
    Ok(sum::mean(data.rows().map(|(_, row)| {
        counts.iter_mut().for_each(|c| *c = 0);
        for &p in row {
            counts[p as usize] += 1;
        }
        let same: u64 = counts.iter().map(|c| c * c).sum();
        ((n * n) as u64 - same) as f64 / pairs
    })))
}

/// Both sides of `E_D[W²] = E_{ρ²}[L(h, h')]`: the second moment of the
/// point-wise error and the weighted pairwise tandem loss.
pub fn tandem_identity_check(
    profile: &PointwiseProfile,
    data: &PredictionDataset,
    weights: &EnsembleWeights,
) -> Result<(f64, f64)> {
    weights.check_len(data.num_classifiers())?;
    if profile.num_examples() != data.num_examples() {
        return Err(Error::DimensionMismatch {
            what: "examples in profile",
            expected: data.num_examples(),
            found: profile.num_examples(),
        });
    }
    let lhs = sum::mean(profile.w_rho().iter().map(|x| x * x));
    let pairs = PairwiseTables::compute(data);
    let rhs = pairs.weighted_pair_sum(weights.as_slice(), &pairs.tandem);
    Ok((lhs, rhs))
}

/// Outcome of testing the competence and semi-competence conditions.
///
/// Margins are `lhs - rhs` of the defining inequalities, in probability
/// units, minimized over `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompetenceReport {
    pub competent: bool,
    pub semi_competent: bool,
    pub worst_margin: f64,
    pub worst_t: f64,
    pub semi_worst_margin: f64,
    pub semi_worst_t: f64,
}

/// Checks `P(W ∈ [t, 1/2)) ≥ P(W ∈ [1/2, 1-t])` for all `t ∈ [0, 1/2]`
/// (competence) and `P(W ∈ [t, 1/2]) ≥ P(W ∈ (1/2, 1-t])` for all
/// `t ∈ [0, 1/2)` (semi-competence).
///
/// Both sides are step functions of `t`, constant on `(b, b']` between
/// consecutive points of `{W_j} ∪ {1 - W_j} ∪ {0, 1/2}`, so evaluating at those
/// points is exact. For semi-competence the value at `t = 1/2` equals the
/// left limit, which covers the open end of its range.
pub fn competence_check(profile: &PointwiseProfile) -> CompetenceReport {
    const TOL: f64 = TIE_TOLERANCE;
    let w = profile.w_rho();
    let m = w.len() as f64;
    let mut sorted_w = w.to_vec();
    sorted_w.sort_by(f64::total_cmp);

    // values within TOL of each other (W = 3/10 against 1 - 7/10, or W
    // against 1/2) are treated as equal
    let mut tilde_ge: Vec<f64> = w
        .iter()
        .filter(|&&x| x >= 0.5 - TOL)
        .map(|x| 1.0 - x)
        .collect();
    let mut tilde_gt: Vec<f64> = w
        .iter()
        .filter(|&&x| x > 0.5 + TOL)
        .map(|x| 1.0 - x)
        .collect();
    tilde_ge.sort_by(f64::total_cmp);
    tilde_gt.sort_by(f64::total_cmp);

    let count_lt = |v: &[f64], x: f64| v.partition_point(|&a| a < x);
    let below_half = count_lt(&sorted_w, 0.5 - TOL);
    let at_most_half = sorted_w.partition_point(|&a| a <= 0.5 + TOL);

    let mut breakpoints: Vec<f64> = w
        .iter()
        .flat_map(|&x| [x, 1.0 - x])
        .filter(|t| (0.0..=0.5).contains(t))
        .chain([0.0, 0.5])
        .collect();
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();

    let mut worst = (i64::MAX, 0.0);
    let mut semi_worst = (i64::MAX, 0.0);
    for &t in &breakpoints {
        let below_t = count_lt(&sorted_w, t - TOL);

        let lhs = below_half.saturating_sub(below_t) as i64;
        let rhs = (tilde_ge.len() - count_lt(&tilde_ge, t - TOL)) as i64;
        if lhs - rhs <= worst.0 {
            worst = (lhs - rhs, t);
        }

        let lhs = at_most_half.saturating_sub(below_t) as i64;
        let rhs = (tilde_gt.len() - count_lt(&tilde_gt, t - TOL)) as i64;
        if lhs - rhs <= semi_worst.0 {
            semi_worst = (lhs - rhs, t);
        }
    }

    CompetenceReport {
        competent: worst.0 >= 0,
        semi_competent: semi_worst.0 >= 0,
        worst_margin: worst.0 as f64 / m,
        worst_t: worst.1,
        semi_worst_margin: semi_worst.0 as f64 / m,
        semi_worst_t: semi_worst.1,
    }
}

/// Examples lying in the tie set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TieSet {
    pub fraction: f64,
    pub indices: Vec<usize>,
}

impl TieSet {
    /// No example is an exact half/half split with the true label.
    pub fn is_tie_free(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn tie_set(profile: &PointwiseProfile) -> TieSet {
    let indices: Vec<usize> = profile
        .tie_flags()
        .iter()
        .enumerate()
        .filter_map(|(j, &t)| t.then_some(j))
        .collect();
    TieSet {
        fraction: indices.len() as f64 / profile.num_examples() as f64,
        indices,
    }
}

/// Estimate of the first-coordinate variance of the pairwise disagreement
/// kernel, treating the dataset's classifiers as an i.i.d. sample.
pub fn sigma1_estimate(data: &PredictionDataset) -> Result<f64> {
    if data.num_classifiers() < 2 {
        return Err(Error::InvalidParameter(
            "first-coordinate variance needs at least two classifiers".into(),
        ));
    }
    Ok(PairwiseTables::compute(data)
        .sigma1_sq()
        .expect("n >= 2 checked above"))
}

/// Smallest `Δ` such that every example puts at most `Δ` vote mass outside
/// `A(x)`, where `A(x)` is the true label plus the `M - 1` heaviest wrong
/// labels (lowest id first among equal masses).
pub fn entropy_profile(profile: &PointwiseProfile, set_size: usize) -> Result<f64> {
    let k = profile.num_classes();
    if set_size < 2 || set_size > k {
        return Err(Error::InvalidParameter(format!(
            "label-set size {set_size} outside [2, {k}]"
        )));
    }
    let mut worst = 0.0f64;
    let mut wrong: Vec<(usize, f64)> = Vec::with_capacity(k);
    for j in 0..profile.num_examples() {
        let y = profile.true_labels()[j] as usize;
        wrong.clear();
        wrong.extend(
            profile
                .label_mass(j)
                .iter()
                .copied()
                .enumerate()
                .filter(|&(c, _)| c != y),
        );
        wrong.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let outside = sum::sum(wrong.iter().skip(set_size - 1).map(|&(_, p)| p));
        worst = worst.max(outside);
    }
    Ok(worst)
}
