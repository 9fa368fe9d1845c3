//! Upper bounds on the majority-vote error rate.
//!
//! Each bound is a closed-form function of the scalar statistics in
//! [`EnsembleStats`]. Preconditions (binary labels, competence, tie-freeness,
//! a large enough polarization or ε) are checked by [`all_bounds`], which
//! reports every bound with an applicability flag instead of failing.

use std::fmt::Write as _;

use serde::Serialize;

use crate::dataset::{EnsembleWeights, PredictionDataset};
use crate::error::{Error, Result};
use crate::stats::{self, CompetenceReport, EnsembleStats, TieRule};

/// Confidence level used for the polarization upper bound unless overridden.
pub const DEFAULT_DELTA_CONF: f64 = 0.05;

/// Slack allowed when comparing a user-supplied η, ε or Δ with the measured
/// value it must dominate.
const DOMINANCE_SLACK: f64 = 1e-12;

/// `L(MV) ≤ 2·E[L]`.
pub fn first_order(stats: &EnsembleStats) -> f64 {
    2.0 * stats.avg_error
}

/// Chebyshev–Cantelli bound `(T - E[L]²) / (T - E[L] + 1/4)`, valid when the
/// average error is below 1/2. The value is still returned when it is not.
pub fn c_bound(stats: &EnsembleStats) -> (f64, bool) {
    let l = stats.avg_error;
    let denom = stats.tandem - l + 0.25;
    if denom <= 0.0 {
        return (f64::NAN, false);
    }
    ((stats.tandem - l * l) / denom, l < 0.5)
}

/// `4·E[L] - 2·E[D]`, binary problems only.
pub fn binary_second_order(stats: &EnsembleStats, num_classes: usize) -> (f64, bool) {
    (
        4.0 * stats.avg_error - 2.0 * stats.disagreement_v,
        num_classes == 2,
    )
}

/// Which form of competence an ensemble satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Competence {
    Competent,
    /// Semi-competent and free of exact ties; enough for the competence
    /// bounds to hold.
    TieFreeSemiCompetent,
    Neither,
}

impl Competence {
    pub fn from_report(report: &CompetenceReport, tie_free: bool) -> Self {
        if report.competent {
            Competence::Competent
        } else if tie_free && report.semi_competent {
            Competence::TieFreeSemiCompetent
        } else {
            Competence::Neither
        }
    }

    pub fn holds(self) -> bool {
        self != Competence::Neither
    }
}

/// `L(MV) ≤ E[L]` for competent ensembles.
pub fn competence_first_order(stats: &EnsembleStats, competence: Competence) -> (f64, bool) {
    (stats.avg_error, competence.holds())
}

/// `L(MV) ≤ 4(K-1)/K · (E[L] - E[D]/2)` for competent ensembles.
pub fn competence_second_order(
    stats: &EnsembleStats,
    num_classes: usize,
    competence: Competence,
) -> (f64, bool) {
    let k = num_classes as f64;
    (
        4.0 * (k - 1.0) / k * (stats.avg_error - stats.disagreement_v / 2.0),
        competence.holds(),
    )
}

fn check_eta(eta: f64) -> Result<()> {
    if eta.is_finite() && eta >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "polarization η = {eta} must be finite and nonnegative"
        )))
    }
}

/// `2η(K-1)/K · (E[L] - E[D]/2)` for an η-polarized ensemble; `eta` defaults
/// to the measured polarization.
pub fn polarized_bound(stats: &EnsembleStats, num_classes: usize, eta: Option<f64>) -> Result<f64> {
    let eta = eta.unwrap_or(stats.polarization);
    check_eta(eta)?;
    if num_classes < 2 {
        return Err(Error::InvalidParameter("need at least two classes".into()));
    }
    let k = num_classes as f64;
    Ok(2.0 * eta * (k - 1.0) / k * (stats.avg_error - stats.disagreement_v / 2.0))
}

/// Bound for ensembles that put at most `Δ` vote mass outside a label set of
/// size `M` containing the truth:
/// `2η(M-1)/M · [(1 + Δ/(M-1))·E[L] - E[D]/2]`.
pub fn entropy_bound(stats: &EnsembleStats, set_size: usize, delta: f64, eta: f64) -> Result<f64> {
    check_eta(eta)?;
    if set_size < 2 {
        return Err(Error::InvalidParameter(format!(
            "label-set size {set_size} must be at least 2"
        )));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidParameter(format!(
            "Δ = {delta} outside [0, 1]"
        )));
    }
    let size = set_size as f64;
    let coef = 2.0 * eta * (size - 1.0) / size;
    Ok(coef * ((1.0 + delta / (size - 1.0)) * stats.avg_error - stats.disagreement_v / 2.0))
}

/// `2η·N/(N+1) · (E[L] - E[D]/2)` for a weighted ensemble of N classifiers.
pub fn finite_ensemble_bound(
    stats: &EnsembleStats,
    num_classifiers: usize,
    eta: f64,
) -> Result<f64> {
    check_eta(eta)?;
    if num_classifiers == 0 {
        return Err(Error::InvalidParameter(
            "ensemble needs at least one classifier".into(),
        ));
    }
    let size = (num_classifiers + 1) as f64;
    let coef = 2.0 * eta * (size - 1.0) / size;
    Ok(coef * ((1.0 + 0.0 / (size - 1.0)) * stats.avg_error - stats.disagreement_v / 2.0))
}

/// `η·[(1 + ε)·E[L] - E[D]/2]`; `epsilon` defaults to the measured `ε_ρ`,
/// the smallest value satisfying the wrong-label concentration condition.
pub fn epsilon_bound(stats: &EnsembleStats, eta: f64, epsilon: Option<f64>) -> Result<f64> {
    check_eta(eta)?;
    let epsilon = epsilon.unwrap_or(stats.epsilon_rho);
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "ε = {epsilon} must be nonnegative"
        )));
    }
    Ok(eta * ((1.0 + epsilon) * stats.avg_error - stats.disagreement_v / 2.0))
}

/// `(K-2)/(2(K-1))`, a value of ε that every K-class ensemble satisfies.
pub fn worst_case_epsilon(num_classes: usize) -> f64 {
    let k = num_classes as f64;
    (k - 2.0) / (2.0 * (k - 1.0))
}

/// The data-dependent term of [`polarization_upper_bound`]:
/// `((√a + √(a + 4SP)) / (2S))²` with `a = 3/(8m)·ln(1/δ)`.
pub fn polarization_concentration_term(
    second_moment: f64,
    prob_above_half: f64,
    num_examples: usize,
    delta_conf: f64,
) -> Result<f64> {
    if !(second_moment > 0.0) {
        return Err(Error::InvalidParameter(
            "polarization undefined under zero second moment; bound vacuous".into(),
        ));
    }
    if second_moment > 1.0 + DOMINANCE_SLACK {
        return Err(Error::InvalidParameter(format!(
            "second moment {second_moment} exceeds 1"
        )));
    }
    let second_moment = second_moment.min(1.0);
    if !(0.0..=1.0).contains(&prob_above_half) {
        return Err(Error::InvalidParameter(format!(
            "P = {prob_above_half} outside [0, 1]"
        )));
    }
    if num_examples == 0 {
        return Err(Error::InvalidParameter("need at least one example".into()));
    }
    if !(delta_conf > 0.0 && delta_conf < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "δ = {delta_conf} outside (0, 1)"
        )));
    }
    let a = 3.0 / (8.0 * num_examples as f64) * (1.0 / delta_conf).ln();
    let root =
        (a.sqrt() + (a + 4.0 * second_moment * prob_above_half).sqrt()) / (2.0 * second_moment);
    Ok(root * root)
}

/// High-probability upper bound on the polarization from `m` i.i.d. examples:
/// `max{4/3, ((√a + √(a + 4SP)) / (2S))²}` where `S` is the sample mean of
/// `W²`, `P` the sample fraction with `W > 1/2` and `a = 3/(8m)·ln(1/δ)`.
pub fn polarization_upper_bound(
    second_moment: f64,
    prob_above_half: f64,
    num_examples: usize,
    delta_conf: f64,
) -> Result<f64> {
    let term =
        polarization_concentration_term(second_moment, prob_above_half, num_examples, delta_conf)?;
    Ok(term.max(4.0 / 3.0))
}

/// User overrides for [`all_bounds`]. Unset values are measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundOptions {
    pub tie_rule: TieRule,
    pub eta: Option<f64>,
    pub epsilon: Option<f64>,
    pub entropy_set_size: Option<usize>,
    pub entropy_delta: Option<f64>,
    pub delta_conf: f64,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            tie_rule: TieRule::default(),
            eta: None,
            epsilon: None,
            entropy_set_size: None,
            entropy_delta: None,
            delta_conf: DEFAULT_DELTA_CONF,
        }
    }
}

/// Parameters the report was evaluated with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundParams {
    pub num_classes: usize,
    pub num_classifiers: usize,
    pub entropy_set_size: usize,
    pub entropy_delta: f64,
    pub epsilon: f64,
    pub eta: f64,
    pub num_examples: usize,
    pub delta_conf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundEntry {
    pub name: &'static str,
    /// Reported value, clamped at zero.
    pub value: f64,
    /// Value before clamping.
    pub raw_value: f64,
    pub applicable: bool,
    pub precondition_note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub entries: Vec<BoundEntry>,
    pub inputs_digest: EnsembleStats,
    pub params: BoundParams,
    pub competence: CompetenceReport,
    pub tie_fraction: f64,
    /// High-probability upper bound on η; `None` when `E[W²] = 0`.
    pub polarization_upper: Option<f64>,
}

impl BoundReport {
    pub fn get(&self, name: &str) -> Option<&BoundEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Aligned plain-text table, one bound per line.
    pub fn to_table(&self) -> String {
        let s = &self.inputs_digest;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "mv_error {:.6}  avg_error {:.6}  disagreement {:.6}  polarization {:.6}  epsilon {:.6}",
            s.mv_error, s.avg_error, s.disagreement_v, s.polarization, s.epsilon_rho
        );
        let _ = writeln!(
            out,
            "K {}  N {}  m {}  eta {:.6}  M {}  Delta {:.6}  tie fraction {:.6}",
            self.params.num_classes,
            self.params.num_classifiers,
            self.params.num_examples,
            self.params.eta,
            self.params.entropy_set_size,
            self.params.entropy_delta,
            self.tie_fraction
        );
        match self.polarization_upper {
            Some(v) => {
                let _ = writeln!(
                    out,
                    "polarization upper bound (delta {}) {:.6}",
                    self.params.delta_conf, v
                );
            }
            None => {
                let _ = writeln!(out, "polarization upper bound undefined (E[W^2] = 0)");
            }
        }
        let width = self
            .entries
            .iter()
            .map(|e| e.name.len())
            .max()
            .unwrap_or(4)
            .max(5);
        let _ = writeln!(
            out,
            "{:<width$}  {:>10}  {:<3}  note",
            "bound", "value", "ok"
        );
        for e in &self.entries {
            let mark = if e.applicable { "yes" } else { "no" };
            let _ = writeln!(
                out,
                "{:<width$}  {:>10.6}  {:<3}  {}",
                e.name, e.value, mark, e.precondition_note
            );
        }
        out
    }

    /// `name,value,raw_value,applicable` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,value,raw_value,applicable\n");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                e.name, e.value, e.raw_value, e.applicable
            );
        }
        out
    }
}

/// Evaluates every bound on `data` under `weights`, checking preconditions
/// with exactly computed inputs.
pub fn all_bounds(
    data: &PredictionDataset,
    weights: &EnsembleWeights,
    options: &BoundOptions,
) -> Result<BoundReport> {
    let analysis = stats::analyze(data, weights, options.tie_rule)?;
    let st = &analysis.stats;
    let k = data.num_classes();
    let n = data.num_classifiers();
    let m = data.num_examples();

    let ties = stats::tie_set(&analysis.profile);
    let tie_free = ties.is_tie_free();
    let competence_report = stats::competence_check(&analysis.profile);
    let competence = Competence::from_report(&competence_report, tie_free);

    let eta = options.eta.unwrap_or(st.polarization);
    check_eta(eta)?;
    let eta_ok = eta >= st.polarization - DOMINANCE_SLACK;

    let epsilon = options.epsilon.unwrap_or(st.epsilon_rho);
    let epsilon_ok = epsilon >= st.epsilon_rho - DOMINANCE_SLACK;

    let set_size = options.entropy_set_size.unwrap_or(2);
    if set_size < 2 {
        return Err(Error::InvalidParameter(format!(
            "label-set size {set_size} must be at least 2"
        )));
    }
    let min_delta = if set_size >= k {
        0.0
    } else {
        stats::entropy_profile(&analysis.profile, set_size)?
    };
    let entropy_delta = options.entropy_delta.unwrap_or(min_delta);
    let delta_ok = entropy_delta >= min_delta - DOMINANCE_SLACK;

    let polarization_upper = if st.second_moment_w > 0.0 {
        Some(polarization_upper_bound(
            st.second_moment_w,
            st.prob_w_gt_half,
            m,
            options.delta_conf,
        )?)
    } else {
        if !(options.delta_conf > 0.0 && options.delta_conf < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "δ = {} outside (0, 1)",
                options.delta_conf
            )));
        }
        None
    };

    let ties_note = "exact half/half ties present; perturb the weights";
    let eta_note = format!(
        "η = {eta} is below the measured polarization {}",
        st.polarization
    );
    let polarized_gate = |extra: Option<(bool, String)>| -> (bool, String) {
        if !tie_free {
            return (false, ties_note.to_string());
        }
        if !eta_ok {
            return (false, eta_note.clone());
        }
        match extra {
            Some((false, note)) => (false, note),
            _ => (true, String::new()),
        }
    };
    let competence_note = match competence {
        Competence::Competent => String::new(),
        Competence::TieFreeSemiCompetent => "holds for tie-free semi-competent ensembles".into(),
        Competence::Neither => "ensemble is not competent".into(),
    };

    let mut entries = Vec::new();
    let mut push = |name: &'static str, raw: f64, applicable: bool, note: String| {
        let mut note = note;
        let value = if raw < 0.0 {
            if !note.is_empty() {
                note.push_str("; ");
            }
            note.push_str("negative value clamped at 0");
            0.0
        } else {
            raw
        };
        entries.push(BoundEntry {
            name,
            value,
            raw_value: raw,
            applicable,
            precondition_note: note,
        });
    };

    push("first_order", first_order(st), true, String::new());

    let (v, ok) = c_bound(st);
    let note = if v.is_nan() {
        "denominator E[(W - 1/2)²] vanishes".to_string()
    } else if ok {
        String::new()
    } else {
        "average error is not below 1/2".to_string()
    };
    push("c_bound", v, ok && !v.is_nan(), note);

    let (v, ok) = binary_second_order(st, k);
    push(
        "binary_second_order",
        v,
        ok,
        if ok {
            String::new()
        } else {
            format!("needs K = 2, have K = {k}")
        },
    );

    let (v, ok) = competence_first_order(st, competence);
    push("competence_first_order", v, ok, competence_note.clone());
    let (v, ok) = competence_second_order(st, k, competence);
    push("competence_second_order", v, ok, competence_note);

    push(
        "tie_free_markov",
        st.prob_w_gt_half,
        tie_free,
        if tie_free {
            String::new()
        } else {
            ties_note.to_string()
        },
    );

    let (ok, note) = polarized_gate(None);
    push("polarized", polarized_bound(st, k, Some(eta))?, ok, note);

    let (ok, note) = polarized_gate(Some((
        delta_ok,
        format!("Δ = {entropy_delta} is below the smallest valid Δ {min_delta} for M = {set_size}"),
    )));
    push(
        "entropy_restricted",
        entropy_bound(st, set_size, entropy_delta, eta)?,
        ok,
        note,
    );

    let (ok, note) = polarized_gate(None);
    push(
        "finite_ensemble",
        finite_ensemble_bound(st, n, eta)?,
        ok,
        note,
    );

    let (ok, note) = polarized_gate(Some((
        epsilon_ok,
        format!("ε = {epsilon} is below the measured ε_ρ {}", st.epsilon_rho),
    )));
    push(
        "epsilon_restricted",
        epsilon_bound(st, eta, Some(epsilon))?,
        ok,
        note,
    );

    let (ok, note) = polarized_gate(None);
    push(
        "epsilon_worst_case",
        epsilon_bound(st, eta, Some(worst_case_epsilon(k)))?,
        ok,
        note,
    );

    Ok(BoundReport {
        entries,
        inputs_digest: analysis.stats.clone(),
        params: BoundParams {
            num_classes: k,
            num_classifiers: n,
            entropy_set_size: set_size,
            entropy_delta,
            epsilon,
            eta,
            num_examples: m,
            delta_conf: options.delta_conf,
        },
        competence: competence_report,
        tie_fraction: ties.fraction,
        polarization_upper,
    })
}
