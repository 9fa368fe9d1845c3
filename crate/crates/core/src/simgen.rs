//! Synthetic ensembles with known statistics.
//!
//! The constant-classifier generators reproduce hand-computable cases. The
//! samplers draw i.i.d. classifiers from a fixed distribution whose limiting
//! disagreement and first-order kernel variance are known in closed form.

use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Gamma;
use serde::Serialize;

use crate::dataset::{EnsembleWeights, Label, PredictionDataset};
use crate::error::{Error, Result};
use crate::sum::{self, NeumaierSum};

/// A dataset together with the weights that define the ensemble on it.
#[derive(Debug, Clone)]
pub struct WeightedEnsemble {
    pub data: PredictionDataset,
    pub weights: EnsembleWeights,
}

/// Which label is true in a two-label split-vote dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitCase {
    /// Every example has the majority label.
    AllY1,
    /// The first half has the majority label, the second half the minority.
    HalfHalf,
    /// Every example has the minority label.
    AllY2,
}

impl SplitCase {
    pub const ALL: [SplitCase; 3] = [SplitCase::AllY1, SplitCase::HalfHalf, SplitCase::AllY2];
}

impl FromStr for SplitCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all-y1" => Ok(SplitCase::AllY1),
            "half-half" => Ok(SplitCase::HalfHalf),
            "all-y2" => Ok(SplitCase::AllY2),
            other => Err(Error::InvalidParameter(format!(
                "unknown split case {other:?}; expected all-y1, half-half or all-y2"
            ))),
        }
    }
}

impl fmt::Display for SplitCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitCase::AllY1 => "all-y1",
            SplitCase::HalfHalf => "half-half",
            SplitCase::AllY2 => "all-y2",
        })
    }
}

fn split_labels(case: SplitCase, m: usize) -> Result<Vec<Label>> {
    if m == 0 {
        return Err(Error::InvalidParameter("need at least one example".into()));
    }
    Ok(match case {
        SplitCase::AllY1 => vec![0; m],
        SplitCase::AllY2 => vec![1; m],
        SplitCase::HalfHalf => {
            if !m.is_multiple_of(2) {
                return Err(Error::InvalidParameter(format!(
                    "half-half needs an even number of examples, got {m}"
                )));
            }
            (0..m).map(|j| u32::from(j >= m / 2)).collect()
        }
    })
}

/// Number of classifiers out of `n` carrying mass `fraction`, when that count
/// is an integer.
fn integral_count(fraction: f64, n: usize, what: &str) -> Result<usize> {
    let exact = fraction * n as f64;
    let count = exact.round();
    if (exact - count).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "{what} {fraction} times N = {n} is not an integer; use N = 2 for the weighted form"
        )));
    }
    Ok(count as usize)
}

/// Constant classifiers where mass `p` votes label 0 and mass `1 - p` votes
/// label 1, on `m` examples whose truth follows `case`.
///
/// With `n = 2` the ensemble is two classifiers weighted `(p, 1 - p)`;
/// otherwise `p·n` must be an integer and the weights are uniform.
pub fn make_split_vote(p: f64, case: SplitCase, m: usize, n: usize) -> Result<WeightedEnsemble> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "split fraction {p} outside (0, 1)"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidParameter(
            "a split vote needs at least two classifiers".into(),
        ));
    }
    let labels = split_labels(case, m)?;
    let (row, weights) = if n == 2 {
        (vec![0, 1], EnsembleWeights::new(vec![p, 1.0 - p])?)
    } else {
        let ones = integral_count(p, n, "split fraction")?;
        let row = (0..n).map(|i| u32::from(i >= ones)).collect();
        (row, EnsembleWeights::uniform(n))
    };
    let rows = vec![row; m];
    let data = PredictionDataset::from_rows(labels, rows, Some(2))?;
    Ok(WeightedEnsemble { data, weights })
}

/// True labels `j mod K` and, per example, one wrong label rotated across
/// examples.
fn rotated_labels(num_classes: usize, m: usize) -> (Vec<Label>, Vec<Label>) {
    let k = num_classes;
    let truth: Vec<Label> = (0..m).map(|j| (j % k) as Label).collect();
    let wrong = (0..m)
        .map(|j| ((j % k + 1 + j % (k - 1)) % k) as Label)
        .collect();
    (truth, wrong)
}

/// Ensemble where mass `1 - ε` is always correct and mass `ε` always sits on a
/// single wrong label per example. The majority vote never errs while the
/// average error is `ε` and the disagreement `2ε(1 - ε)`.
///
/// With `n = 2` the weights are `(1 - ε, ε)`; otherwise `ε·n` must be an
/// integer and the weights are uniform.
pub fn make_pathological(
    num_classes: usize,
    epsilon: f64,
    m: usize,
    n: usize,
) -> Result<WeightedEnsemble> {
    if num_classes < 2 {
        return Err(Error::InvalidParameter("need at least two classes".into()));
    }
    if !(0.0..0.5).contains(&epsilon) {
        return Err(Error::InvalidParameter(format!(
            "wrong mass ε = {epsilon} must lie in [0, 1/2) or the majority flips"
        )));
    }
    if m == 0 || n < 2 {
        return Err(Error::InvalidParameter(
            "need at least one example and two classifiers".into(),
        ));
    }
    let (truth, wrong) = rotated_labels(num_classes, m);
    let (wrong_count, weights) = if n == 2 {
        (1, EnsembleWeights::new(vec![1.0 - epsilon, epsilon])?)
    } else {
        (
            integral_count(epsilon, n, "wrong mass")?,
            EnsembleWeights::uniform(n),
        )
    };
    let rows = truth
        .iter()
        .zip(&wrong)
        .map(|(&y, &bad)| {
            (0..n)
                .map(|i| if i < n - wrong_count { y } else { bad })
                .collect()
        })
        .collect();
    let data = PredictionDataset::from_rows(truth, rows, Some(num_classes))?;
    Ok(WeightedEnsemble { data, weights })
}

/// A finite set of classifiers (prediction vectors on a fixed dataset) and
/// the probability of drawing each.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinitePool {
    num_classes: usize,
    true_labels: Vec<Label>,
    pool: Vec<Vec<Label>>,
    probs: Vec<f64>,
}

impl FinitePool {
    pub fn new(
        true_labels: Vec<Label>,
        pool: Vec<Vec<Label>>,
        probs: Vec<f64>,
        declared_k: Option<usize>,
    ) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::InvalidParameter("classifier pool is empty".into()));
        }
        if pool.len() != probs.len() {
            return Err(Error::DimensionMismatch {
                what: "pool probabilities",
                expected: pool.len(),
                found: probs.len(),
            });
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidParameter(
                "pool probabilities must be nonnegative".into(),
            ));
        }
        let total = sum::sum(probs.iter().copied());
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "pool probabilities sum to {total}, not 1"
            )));
        }
        // validates lengths and labels
        let data = PredictionDataset::from_columns(true_labels.clone(), &pool, declared_k)?;
        Ok(Self {
            num_classes: data.num_classes(),
            true_labels,
            pool,
            probs,
        })
    }

    /// `size` noisy classifiers on `m` examples with uniform true labels.
    /// Each prediction is the truth with probability `accuracy` and a uniform
    /// label otherwise; member `i` is drawn with probability proportional to
    /// `i + 1`.
    pub fn random(
        size: usize,
        m: usize,
        num_classes: usize,
        accuracy: f64,
        seed: u64,
    ) -> Result<Self> {
        if size == 0 || m == 0 || num_classes < 2 {
            return Err(Error::InvalidParameter(
                "need a nonempty pool, one example and two classes".into(),
            ));
        }
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(Error::InvalidParameter(format!(
                "accuracy {accuracy} outside [0, 1]"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = num_classes as Label;
        let truth: Vec<Label> = (0..m).map(|_| rng.gen_range(0..k)).collect();
        let pool = (0..size)
            .map(|_| {
                truth
                    .iter()
                    .map(|&y| {
                        if rng.gen::<f64>() < accuracy {
                            y
                        } else {
                            rng.gen_range(0..k)
                        }
                    })
                    .collect()
            })
            .collect();
        let total = (size * (size + 1) / 2) as f64;
        let probs = (1..=size).map(|i| i as f64 / total).collect();
        Self::new(truth, pool, probs, Some(num_classes))
    }

    pub fn len(&self) -> usize {
        self.pool.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pool.is_empty()
    }

    pub fn num_examples(&self) -> usize {
        self.true_labels.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn disagreement(&self, a: usize, b: usize) -> f64 {
        let differ = self.pool[a]
            .iter()
            .zip(&self.pool[b])
            .filter(|(x, y)| x != y)
            .count();
        differ as f64 / self.num_examples() as f64
    }

    /// `Σ_b π_b D(a, b)` for every pool member `a`.
    fn first_order_kernel(&self) -> Vec<f64> {
        (0..self.len())
            .map(|a| sum::sum((0..self.len()).map(|b| self.probs[b] * self.disagreement(a, b))))
            .collect()
    }

    /// `Σ_{a,b} π_a π_b D(a, b)`.
    pub fn d_infinity(&self) -> f64 {
        let g = self.first_order_kernel();
        sum::sum(self.probs.iter().zip(&g).map(|(p, g)| p * g))
    }

    /// Variance under `π` of `a ↦ Σ_b π_b D(a, b)`.
    pub fn sigma1_sq(&self) -> f64 {
        let g = self.first_order_kernel();
        let mean = sum::sum(self.probs.iter().zip(&g).map(|(p, g)| p * g));
        sum::sum(
            self.probs
                .iter()
                .zip(&g)
                .map(|(p, g)| p * (g - mean) * (g - mean)),
        )
    }

    fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<PredictionDataset> {
        let index = WeightedIndex::new(&self.probs)
            .map_err(|e| Error::InvalidParameter(format!("pool probabilities: {e}")))?;
        let columns: Vec<Vec<Label>> = (0..n)
            .map(|_| self.pool[index.sample(rng)].clone())
            .collect();
        PredictionDataset::from_columns(self.true_labels.clone(), &columns, Some(self.num_classes))
    }
}

/// Per-example label masses tilted towards the truth; each classifier predicts
/// every example independently from its mass vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirichletConfusion {
    true_labels: Vec<Label>,
    label_mass: Vec<Vec<f64>>,
}

impl DirichletConfusion {
    /// Draws true labels uniformly and, per example, a mass vector from a
    /// Dirichlet with parameter `concentration` on every label plus
    /// `correct_bias` on the true one. An infinite bias puts all mass on the
    /// truth.
    pub fn generate(
        num_classes: usize,
        m: usize,
        concentration: f64,
        correct_bias: f64,
        seed: u64,
    ) -> Result<Self> {
        if num_classes < 2 || m == 0 {
            return Err(Error::InvalidParameter(
                "need at least two classes and one example".into(),
            ));
        }
        if !(concentration > 0.0 && concentration.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "concentration {concentration} must be positive and finite"
            )));
        }
        if !(correct_bias >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "correct bias {correct_bias} must be nonnegative"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = Gamma::new(concentration, 1.0).expect("positive shape");
        let tilted = if correct_bias.is_finite() {
            Some(Gamma::new(concentration + correct_bias, 1.0).expect("positive shape"))
        } else {
            None
        };
        let mut true_labels = Vec::with_capacity(m);
        let mut label_mass = Vec::with_capacity(m);
        for _ in 0..m {
            let y = rng.gen_range(0..num_classes);
            let mass = match &tilted {
                None => (0..num_classes)
                    .map(|c| if c == y { 1.0 } else { 0.0 })
                    .collect(),
                Some(tilted) => {
                    let draws: Vec<f64> = (0..num_classes)
                        .map(|c| {
                            if c == y {
                                tilted.sample(&mut rng)
                            } else {
                                base.sample(&mut rng)
                            }
                        })
                        .collect();
                    let total = sum::sum(draws.iter().copied());
                    if total > 0.0 {
                        draws.into_iter().map(|g| g / total).collect()
                    } else {
                        // every gamma draw underflowed
                        (0..num_classes)
                            .map(|c| if c == y { 1.0 } else { 0.0 })
                            .collect()
                    }
                }
            };
            true_labels.push(y as Label);
            label_mass.push(mass);
        }
        Ok(Self {
            true_labels,
            label_mass,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.label_mass[0].len()
    }

    pub fn true_labels(&self) -> &[Label] {
        &self.true_labels
    }

    pub fn label_mass(&self) -> &[Vec<f64>] {
        &self.label_mass
    }

    /// `mean_x (1 - Σ_c p_c(x)²)`.
    pub fn d_infinity(&self) -> f64 {
        sum::mean(
            self.label_mass
                .iter()
                .map(|p| 1.0 - sum::sum(p.iter().map(|q| q * q))),
        )
    }

    /// `(1/m²) Σ_x [Σ_c p_c³ - (Σ_c p_c²)²]`: predictions are independent
    /// across examples, so the per-example variances of `1 - p_{h(x)}(x)` add.
    pub fn sigma1_sq(&self) -> f64 {
        let m = self.label_mass.len() as f64;
        let mut acc = NeumaierSum::new();
        for p in &self.label_mass {
            let sq = sum::sum(p.iter().map(|q| q * q));
            let cube = sum::sum(p.iter().map(|q| q * q * q));
            acc.add(cube - sq * sq);
        }
        acc.total() / (m * m)
    }

    fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<PredictionDataset> {
        let rows: Vec<Vec<Label>> = self
            .label_mass
            .iter()
            .map(|p| {
                let index = WeightedIndex::new(p).expect("mass vectors are valid");
                (0..n).map(|_| index.sample(rng) as Label).collect()
            })
            .collect();
        PredictionDataset::from_rows(self.true_labels.clone(), rows, Some(self.num_classes()))
    }
}

/// A distribution over classifiers on a fixed dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClassifierSampler {
    SplitVote {
        p: f64,
        case: SplitCase,
        pool: FinitePool,
    },
    Pathological {
        epsilon: f64,
        pool: FinitePool,
    },
    DirichletConfusion(DirichletConfusion),
    FinitePool(FinitePool),
}

impl ClassifierSampler {
    /// Two constant classifiers drawn with probabilities `(p, 1 - p)`.
    pub fn split_vote(p: f64, case: SplitCase, m: usize) -> Result<Self> {
        let base = make_split_vote(p, case, m, 2)?;
        let pool = FinitePool::new(
            base.data.true_labels().to_vec(),
            vec![vec![0; m], vec![1; m]],
            vec![p, 1.0 - p],
            Some(2),
        )?;
        Ok(ClassifierSampler::SplitVote { p, case, pool })
    }

    /// An always-correct classifier drawn with probability `1 - ε` and an
    /// always-wrong one with probability `ε`.
    pub fn pathological(num_classes: usize, epsilon: f64, m: usize) -> Result<Self> {
        let base = make_pathological(num_classes, epsilon, m, 2)?;
        let data = &base.data;
        let pool = FinitePool::new(
            data.true_labels().to_vec(),
            vec![data.column(0).collect(), data.column(1).collect()],
            vec![1.0 - epsilon, epsilon],
            Some(num_classes),
        )?;
        Ok(ClassifierSampler::Pathological { epsilon, pool })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ClassifierSampler::SplitVote { .. } => "split-vote",
            ClassifierSampler::Pathological { .. } => "pathological",
            ClassifierSampler::DirichletConfusion(_) => "dirichlet-confusion",
            ClassifierSampler::FinitePool(_) => "finite-pool",
        }
    }

    /// Limiting pairwise disagreement `E_{h,h' ~ ρ} D(h, h')`.
    pub fn d_infinity(&self) -> f64 {
        match self {
            ClassifierSampler::SplitVote { pool, .. }
            | ClassifierSampler::Pathological { pool, .. }
            | ClassifierSampler::FinitePool(pool) => pool.d_infinity(),
            ClassifierSampler::DirichletConfusion(d) => d.d_infinity(),
        }
    }

    /// `Var_h E_{h'} D(h, h')`.
    pub fn sigma1_sq(&self) -> f64 {
        match self {
            ClassifierSampler::SplitVote { pool, .. }
            | ClassifierSampler::Pathological { pool, .. }
            | ClassifierSampler::FinitePool(pool) => pool.sigma1_sq(),
            ClassifierSampler::DirichletConfusion(d) => d.sigma1_sq(),
        }
    }

    /// Draws `n` i.i.d. classifiers.
    pub fn sample_ensemble(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<PredictionDataset> {
        if n == 0 {
            return Err(Error::InvalidParameter(
                "ensemble size must be positive".into(),
            ));
        }
        match self {
            ClassifierSampler::SplitVote { pool, .. }
            | ClassifierSampler::Pathological { pool, .. }
            | ClassifierSampler::FinitePool(pool) => pool.sample(n, rng),
            ClassifierSampler::DirichletConfusion(d) => d.sample(n, rng),
        }
    }
}

/// `n` classifiers drawn from a Dirichlet-confusion sampler, deterministic in
/// `seed`.
pub fn make_dirichlet_confusion(
    num_classes: usize,
    m: usize,
    n: usize,
    concentration: f64,
    correct_bias: f64,
    seed: u64,
) -> Result<PredictionDataset> {
    let sampler = DirichletConfusion::generate(num_classes, m, concentration, correct_bias, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    ClassifierSampler::DirichletConfusion(sampler).sample_ensemble(n, &mut rng)
}

/// Limiting disagreement and kernel variance of a classifier distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoolMoments {
    pub d_infinity: f64,
    pub sigma1_sq: f64,
}

/// `n` i.i.d. draws from `pool`, with the pool's exact moments.
pub fn make_finite_pool(
    pool: &FinitePool,
    n: usize,
    seed: u64,
) -> Result<(PredictionDataset, PoolMoments)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = ClassifierSampler::FinitePool(pool.clone()).sample_ensemble(n, &mut rng)?;
    Ok((
        data,
        PoolMoments {
            d_infinity: pool.d_infinity(),
            sigma1_sq: pool.sigma1_sq(),
        },
    ))
}
