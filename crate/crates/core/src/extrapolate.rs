//! Predicting large-ensemble behaviour from small sub-ensembles.
//!
//! Statistics of random `M`-classifier subsets are averaged and then grown to
//! a target size `N`. Disagreement grows as `(N-1)/N · M/(M-1)`, and the
//! majority-vote error estimate combines that growth with a polarization
//! value, either the conjectured 4/3 or the one measured on the subsets.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{EnsembleWeights, PredictionDataset};
use crate::error::{Error, Result};
use crate::simgen::ClassifierSampler;
use crate::stats::{self, TieRule};
use crate::sum;

/// Polarization assumed for neural ensembles.
pub const CONJECTURED_POLARIZATION: f64 = 4.0 / 3.0;

/// Ensemble size the statistics are grown to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetSize {
    Finite(usize),
    Infinite,
}

impl fmt::Display for TargetSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetSize::Finite(n) => write!(f, "{n}"),
            TargetSize::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for TargetSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" => Ok(TargetSize::Infinite),
            t => t
                .parse()
                .map(TargetSize::Finite)
                .map_err(|_| Error::InvalidParameter(format!("bad ensemble size {t:?}"))),
        }
    }
}

/// Which polarization multiplies the error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EtaMode {
    /// The constant 4/3.
    #[default]
    Conjecture,
    /// The polarization averaged over the subsets.
    Measured,
}

impl FromStr for EtaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conjecture" | "conjecture-4/3" => Ok(EtaMode::Conjecture),
            "measured" => Ok(EtaMode::Measured),
            other => Err(Error::InvalidParameter(format!(
                "unknown eta mode {other:?}; expected conjecture or measured"
            ))),
        }
    }
}

/// Uniform-weight statistics averaged over `num_subsets` distinct
/// `subset_size`-classifier subsets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsampleStats {
    pub subset_size: usize,
    pub avg_error: f64,
    /// V-statistic disagreement within a subset.
    pub disagreement: f64,
    pub epsilon: f64,
    pub polarization: f64,
    pub mv_error: f64,
    pub num_subsets: usize,
    /// Every subset of this size was used.
    pub exhaustive: bool,
}

/// `C(n, k)`, or `None` once it exceeds `cap`.
fn binomial_up_to(n: usize, k: usize, cap: usize) -> Option<usize> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > cap as u128 {
            return None;
        }
    }
    Some(acc as usize)
}

/// All `size`-subsets of `0..n` when there are at most `count` of them,
/// otherwise `count` distinct sorted subsets drawn with a generator seeded
/// by `seed`.
pub fn choose_subsets(
    n: usize,
    size: usize,
    count: usize,
    seed: u64,
) -> Result<(Vec<Vec<usize>>, bool)> {
    if size == 0 || size > n {
        return Err(Error::InvalidParameter(format!(
            "subset size {size} must lie in [1, {n}]"
        )));
    }
    if count == 0 {
        return Err(Error::InvalidParameter("need at least one subset".into()));
    }
    if binomial_up_to(n, size, count).is_some() {
        return Ok(((0..n).combinations(size).collect(), true));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(count);
    let mut subsets = Vec::with_capacity(count);
    while subsets.len() < count {
        let mut s = index::sample(&mut rng, n, size).into_vec();
        s.sort_unstable();
        if seen.insert(s.clone()) {
            subsets.push(s);
        }
    }
    Ok((subsets, false))
}

/// Averages uniform-weight statistics over subsets of `subset_size`
/// classifiers. Ties in the subset majority vote go to the lowest label.
pub fn subsample_stats(
    data: &PredictionDataset,
    subset_size: usize,
    num_subsets: usize,
    seed: u64,
) -> Result<SubsampleStats> {
    let n = data.num_classifiers();
    if subset_size < 2 || subset_size > n {
        return Err(Error::InvalidParameter(format!(
            "subset size {subset_size} must lie in [2, {n}]"
        )));
    }
    let (subsets, exhaustive) = choose_subsets(n, subset_size, num_subsets, seed)?;
    let weights = EnsembleWeights::uniform(subset_size);
    let per_subset = subsets
        .par_iter()
        .map(|s| {
            let sub = data.select_classifiers(s)?;
            stats::ensemble_stats(&sub, &weights, TieRule::LowestLabel)
        })
        .collect::<Result<Vec<_>>>()?;
    let avg = |f: fn(&stats::EnsembleStats) -> f64| sum::mean(per_subset.iter().map(f));
    Ok(SubsampleStats {
        subset_size,
        avg_error: avg(|s| s.avg_error),
        disagreement: avg(|s| s.disagreement_v),
        epsilon: avg(|s| s.epsilon_rho),
        polarization: avg(|s| s.polarization),
        mv_error: avg(|s| s.mv_error),
        num_subsets: per_subset.len(),
        exhaustive,
    })
}

/// `((N-1)·M) / (N·(M-1))`, formed from exact integers so that `N = M` gives
/// exactly one; `M/(M-1)` for an infinite target.
fn growth_factor(subset_size: usize, target: TargetSize) -> Result<f64> {
    if subset_size < 2 {
        return Err(Error::InvalidParameter(format!(
            "subset size {subset_size} must be at least 2"
        )));
    }
    let m = subset_size as u128;
    match target {
        TargetSize::Infinite => Ok(m as f64 / (m - 1) as f64),
        TargetSize::Finite(n) if n >= 2 => {
            let n = n as u128;
            Ok(((n - 1) * m) as f64 / (n * (m - 1)) as f64)
        }
        TargetSize::Finite(n) => Err(Error::InvalidParameter(format!(
            "target ensemble size {n} must be at least 2"
        ))),
    }
}

/// Disagreement of an ensemble of `target` classifiers predicted from the
/// subset disagreement.
pub fn predict_disagreement(sub: &SubsampleStats, target: TargetSize) -> Result<f64> {
    Ok(growth_factor(sub.subset_size, target)? * sub.disagreement)
}

/// Majority-vote error estimate before clamping at zero, for any subset size
/// of at least two. Only triples are established; other sizes are
/// experimental.
pub fn predict_mv_error_raw(
    sub: &SubsampleStats,
    target: TargetSize,
    mode: EtaMode,
) -> Result<f64> {
    let eta = match mode {
        EtaMode::Conjecture => CONJECTURED_POLARIZATION,
        EtaMode::Measured => sub.polarization,
    };
    let growth = growth_factor(sub.subset_size, target)?;
    Ok(eta * (sub.avg_error + growth * (sub.epsilon * sub.avg_error - sub.disagreement / 2.0)))
}

/// `η·[E₃[L] + 3(N-1)/(2N)·(ε₃·E₃[L] - E₃[D]/2)]` from triple statistics,
/// clamped at zero.
pub fn predict_mv_error(sub: &SubsampleStats, target: TargetSize, mode: EtaMode) -> Result<f64> {
    if sub.subset_size != 3 {
        return Err(Error::InvalidParameter(format!(
            "the error estimate is defined for triples; got subsets of size {}",
            sub.subset_size
        )));
    }
    Ok(predict_mv_error_raw(sub, target, mode)?.max(0.0))
}

/// Predicted and, where the dataset has enough classifiers, measured
/// behaviour at several ensemble sizes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthCurve {
    pub subsample: SubsampleStats,
    pub targets: Vec<usize>,
    pub predicted_mv_conjecture: Vec<f64>,
    pub predicted_mv_measured: Vec<f64>,
    pub predicted_disagreement: Vec<f64>,
    /// Mean majority-vote error of sub-ensembles of the target size.
    pub actual_mv: Vec<Option<f64>>,
    /// Mean disagreement of sub-ensembles of the target size.
    pub actual_disagreement: Vec<Option<f64>>,
    pub d_infinity_hat: f64,
    /// Subset size is not 3, so the error predictions use `M/(M-1)` growth.
    pub experimental: bool,
}

impl GrowthCurve {
    /// Columns `N,pred_conj,pred_meas,pred_disg,actual_mv`; a missing actual
    /// value is an empty field.
    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["N", "pred_conj", "pred_meas", "pred_disg", "actual_mv"])
            .expect("in-memory write");
        for i in 0..self.targets.len() {
            w.write_record([
                self.targets[i].to_string(),
                self.predicted_mv_conjecture[i].to_string(),
                self.predicted_mv_measured[i].to_string(),
                self.predicted_disagreement[i].to_string(),
                self.actual_mv[i].map(|v| v.to_string()).unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("curve serializes")
    }
}

/// Options for [`growth_curve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrowthOptions {
    pub subset_size: usize,
    pub num_subsets: usize,
    pub seed: u64,
    /// Accept subset sizes other than 3.
    pub experimental: bool,
}

impl Default for GrowthOptions {
    fn default() -> Self {
        Self {
            subset_size: 3,
            num_subsets: 20,
            seed: 0,
            experimental: false,
        }
    }
}

pub fn growth_curve(
    data: &PredictionDataset,
    targets: &[usize],
    options: &GrowthOptions,
) -> Result<GrowthCurve> {
    if targets.is_empty() {
        return Err(Error::InvalidParameter("no target ensemble sizes".into()));
    }
    if options.subset_size != 3 && !options.experimental {
        return Err(Error::InvalidParameter(format!(
            "subset size {} needs the experimental flag; the estimator is stated for triples",
            options.subset_size
        )));
    }
    let sub = subsample_stats(data, options.subset_size, options.num_subsets, options.seed)?;
    let predict = |n: usize, mode| {
        predict_mv_error_raw(&sub, TargetSize::Finite(n), mode).map(|v| v.max(0.0))
    };
    let mut curve = GrowthCurve {
        d_infinity_hat: predict_disagreement(&sub, TargetSize::Infinite)?,
        experimental: options.subset_size != 3,
        subsample: sub.clone(),
        targets: targets.to_vec(),
        predicted_mv_conjecture: Vec::with_capacity(targets.len()),
        predicted_mv_measured: Vec::with_capacity(targets.len()),
        predicted_disagreement: Vec::with_capacity(targets.len()),
        actual_mv: Vec::with_capacity(targets.len()),
        actual_disagreement: Vec::with_capacity(targets.len()),
    };
    for &n in targets {
        curve
            .predicted_mv_conjecture
            .push(predict(n, EtaMode::Conjecture)?);
        curve
            .predicted_mv_measured
            .push(predict(n, EtaMode::Measured)?);
        curve
            .predicted_disagreement
            .push(predict_disagreement(&sub, TargetSize::Finite(n))?);
        if n <= data.num_classifiers() {
            let actual = subsample_stats(data, n, options.num_subsets, options.seed)?;
            curve.actual_mv.push(Some(actual.mv_error));
            curve.actual_disagreement.push(Some(actual.disagreement));
        } else {
            curve.actual_mv.push(None);
            curve.actual_disagreement.push(None);
        }
    }
    Ok(curve)
}

/// Monte-Carlo check of the U-statistic central limit behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CltCheck {
    pub num_classifiers: usize,
    pub trials: usize,
    /// Mean of the disagreement U-statistic across trials.
    pub mean_u: f64,
    /// `N/4` times the sample variance of the U-statistic.
    pub var_scaled: f64,
    pub sigma1_sq_true: f64,
    pub d_infinity_true: f64,
}

impl CltCheck {
    /// Standard error of `mean_u` implied by the limiting variance
    /// `4σ₁²/N`.
    pub fn mean_standard_error(&self) -> f64 {
        2.0 * (self.sigma1_sq_true / (self.num_classifiers * self.trials) as f64).sqrt()
    }
}

/// Draws `trials` ensembles of `num_classifiers` from `sampler` and compares
/// the spread of their disagreement U-statistic with the sampler's analytic
/// moments. Trial `t` uses stream `t` of a generator seeded with `seed`.
pub fn ustat_clt_check(
    sampler: &ClassifierSampler,
    num_classifiers: usize,
    trials: usize,
    seed: u64,
) -> Result<CltCheck> {
    if num_classifiers < 10 {
        return Err(Error::InvalidParameter(format!(
            "ensemble size {num_classifiers} must be at least 10"
        )));
    }
    if trials < 100 {
        return Err(Error::InvalidParameter(format!(
            "trials {trials} must be at least 100"
        )));
    }
    let values = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let data = sampler.sample_ensemble(num_classifiers, &mut rng)?;
            stats::disagreement_u_by_counts(&data)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(CltCheck {
        num_classifiers,
        trials,
        mean_u: sum::mean(values.iter().copied()),
        var_scaled: num_classifiers as f64 / 4.0 * sum::sample_variance(&values),
        sigma1_sq_true: sampler.sigma1_sq(),
        d_infinity_true: sampler.d_infinity(),
    })
}
