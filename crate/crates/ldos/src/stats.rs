//! Estimation and hypothesis testing on the sampled joint distribution:
//! kernel estimation with binomial errors, discretized line-shape
//! hypotheses, maximum-likelihood width fits, Chernoff sample-complexity
//! bounds, and the sequential decision rule.

use ndarray::Array2;
use serde::Serialize;
use std::f64::consts::TAU;

use crate::circuit::ShotRecord;
use crate::error::{LdosError, Result};
use crate::spectral::{offset_index, wrap_offset, wrapped_offsets};

/// Raw joint outcome counts over (m, l).
#[derive(Debug, Clone)]
pub struct JointCounts {
    pub counts: Array2<u64>,
    pub total: u64,
}

impl JointCounts {
    pub fn new(m_bins: usize) -> Self {
        JointCounts { counts: Array2::zeros((m_bins, m_bins)), total: 0 }
    }

    pub fn m_bins(&self) -> usize {
        self.counts.nrows()
    }

    pub fn record(&mut self, m: usize, l: usize) {
        self.counts[[m, l]] += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &JointCounts) -> Result<()> {
        if self.m_bins() != other.m_bins() {
            return Err(LdosError::DimensionMismatch(format!(
                "cannot merge counts with {} and {} bins",
                self.m_bins(),
                other.m_bins()
            )));
        }
        self.counts += &other.counts;
        self.total += other.total;
        Ok(())
    }
}

pub fn accumulate(records: &[ShotRecord], m_bins: usize) -> Result<JointCounts> {
    let mut jc = JointCounts::new(m_bins);
    for r in records {
        if r.m >= m_bins || r.l >= m_bins {
            return Err(LdosError::Data(format!(
                "shot outcome ({}, {}) outside {m_bins} bins",
                r.m, r.l
            )));
        }
        jc.record(r.m, r.l);
    }
    Ok(jc)
}

/// Row-normalized kernel estimate with per-cell binomial standard errors.
/// Rows with zero counts are undefined, not zero.
#[derive(Debug, Clone)]
pub struct KernelEstimate {
    pub p: Array2<f64>,
    pub stderr: Array2<f64>,
    pub row_counts: Vec<u64>,
    pub defined: Vec<bool>,
}

pub fn estimate_kernel(jc: &JointCounts) -> KernelEstimate {
    let m_bins = jc.m_bins();
    let mut p = Array2::zeros((m_bins, m_bins));
    let mut stderr = Array2::zeros((m_bins, m_bins));
    let mut row_counts = vec![0u64; m_bins];
    let mut defined = vec![false; m_bins];
    for m in 0..m_bins {
        let km: u64 = jc.counts.row(m).sum();
        row_counts[m] = km;
        if km == 0 {
            continue;
        }
        defined[m] = true;
        let kf = km as f64;
        for l in 0..m_bins {
            let phat = jc.counts[[m, l]] as f64 / kf;
            p[[m, l]] = phat;
            stderr[[m, l]] = (phat * (1.0 - phat) / kf).sqrt();
        }
    }
    KernelEstimate { p, stderr, row_counts, defined }
}

/// Sampled LDOS profile over wrapped offsets, aggregated across all
/// first-stage outcomes.
pub fn profile_from_counts(jc: &JointCounts) -> Result<crate::oracle::LdosProfile> {
    let m_bins = jc.m_bins();
    if jc.total == 0 {
        return Err(LdosError::Data("no shots recorded".to_string()));
    }
    let mut weights = vec![0.0_f64; m_bins];
    for m in 0..m_bins {
        for l in 0..m_bins {
            weights[offset_index(wrap_offset(l, m, m_bins), m_bins)] +=
                jc.counts[[m, l]] as f64;
        }
    }
    let total = jc.total as f64;
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(crate::oracle::LdosProfile {
        offsets: wrapped_offsets(m_bins),
        weights,
        anchor: crate::oracle::ProfileAnchor::Aggregated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileFamily {
    BreitWigner,
    Gaussian,
}

/// A candidate line shape with a fixed width parameter (the full width
/// Gamma for Breit-Wigner, the standard deviation for Gaussian).
#[derive(Debug, Clone, Copy, Serialize, serde::Deserialize)]
pub struct ProfileHypothesis {
    pub family: ProfileFamily,
    pub width: f64,
}

/// Evaluate a hypothesis on the M wrapped offset bins, sampled at bin
/// centers phi_k = 2 pi k / M and normalized over the bins.
pub fn discretize_profile(h: &ProfileHypothesis, m_bins: usize) -> Result<Vec<f64>> {
    if !(h.width > 0.0) || !h.width.is_finite() {
        return Err(LdosError::Parameter(format!(
            "hypothesis width must be positive and finite, got {}",
            h.width
        )));
    }
    if m_bins < 2 {
        return Err(LdosError::Parameter(format!(
            "need at least 2 bins, got {m_bins}"
        )));
    }
    let offsets = wrapped_offsets(m_bins);
    let mut w: Vec<f64> = offsets
        .iter()
        .map(|&k| {
            let phi = TAU * k as f64 / m_bins as f64;
            match h.family {
                ProfileFamily::BreitWigner => {
                    h.width / (phi * phi + h.width * h.width / 4.0)
                }
                ProfileFamily::Gaussian => {
                    (-phi * phi / (2.0 * h.width * h.width)).exp()
                }
            }
        })
        .collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(LdosError::NumericalFailure {
            context: "hypothesis discretization".to_string(),
            residual: total,
        });
    }
    for x in w.iter_mut() {
        *x /= total;
    }
    Ok(w)
}

/// Minimize f over [a, b] by golden-section search to relative tolerance.
fn golden_min(mut a: f64, mut b: f64, rel_tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INVPHI * (b - a);
    let mut d = a + INVPHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > rel_tol * (a.abs() + b.abs()).max(1e-300) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INVPHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INVPHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[derive(Debug, Clone, Serialize)]
pub struct WidthFit {
    pub family: ProfileFamily,
    pub width: f64,
    pub log_likelihood: f64,
    /// too few occupied bins to constrain the width
    pub degenerate: bool,
}

/// Maximum-likelihood width for a profile family given a sampled offset
/// profile (weights interpreted as empirical frequencies).
pub fn fit_width(
    weights: &[f64],
    family: ProfileFamily,
    m_bins: usize,
) -> Result<WidthFit> {
    if weights.len() != m_bins {
        return Err(LdosError::DimensionMismatch(format!(
            "profile length {} vs {m_bins} bins",
            weights.len()
        )));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(LdosError::Data("profile has no mass".to_string()));
    }
    let occupied = weights.iter().filter(|&&w| w > 0.0).count();
    let degenerate = occupied < 2;

    let neg_ll = |logw: f64| -> f64 {
        let q = discretize_profile(
            &ProfileHypothesis { family, width: logw.exp() },
            m_bins,
        )
        .unwrap();
        -weights
            .iter()
            .zip(q.iter())
            .filter(|(&w, _)| w > 0.0)
            .map(|(&w, &qk)| w * qk.max(1e-300).ln())
            .sum::<f64>()
    };
    let lo = (TAU / (10.0 * m_bins as f64)).ln();
    let hi = (20.0 * std::f64::consts::PI).ln();
    let logw = golden_min(lo, hi, 1e-6, neg_ll);
    let width = logw.exp();
    Ok(WidthFit { family, width, log_likelihood: -neg_ll(logw) * total, degenerate })
}

/// Golden-rule spreading width 2 pi sigma^2 rho implied by the coupling
/// strength and level density.
pub fn predicted_gamma(sigma: f64, rho_e: f64) -> f64 {
    TAU * sigma * sigma * rho_e
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Perturbative,
    BwValid,
    Saturated,
}

#[derive(Debug, Clone, Copy, Serialize, serde::Deserialize)]
pub struct RegimeThresholds {
    /// sigma * rho below this: perturbative
    pub c_lo: f64,
    /// sigma * rho above c_hi * sqrt(bandwidth): saturated
    pub c_hi: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        RegimeThresholds { c_lo: 3.0, c_hi: 1.0 / 3.0 }
    }
}

/// Classify where the perturbation strength sits relative to the window in
/// which the spreading is in the golden-rule (Breit-Wigner) regime:
/// well above the mean level spacing, well below the coupling bandwidth.
pub fn regime_check(
    sigma: f64,
    rho_e: f64,
    bandwidth: usize,
    thresholds: &RegimeThresholds,
) -> Regime {
    let x = sigma * rho_e;
    if x <= thresholds.c_lo {
        Regime::Perturbative
    } else if x < thresholds.c_hi * (bandwidth as f64).sqrt() {
        Regime::BwValid
    } else {
        Regime::Saturated
    }
}

/// Chernoff coefficient lambda = min_alpha sum_k p1_k^alpha p2_k^(1-alpha)
/// and the minimizing alpha. Conventions: 0^0 = 1 at the endpoints;
/// cells where both distributions vanish contribute nothing.
pub fn chernoff_lambda(p1: &[f64], p2: &[f64]) -> Result<(f64, f64)> {
    if p1.len() != p2.len() {
        return Err(LdosError::DimensionMismatch(format!(
            "distribution lengths {} vs {}",
            p1.len(),
            p2.len()
        )));
    }
    for (&a, &b) in p1.iter().zip(p2.iter()) {
        if a < 0.0 || b < 0.0 || !a.is_finite() || !b.is_finite() {
            return Err(LdosError::Data(
                "distributions must be finite and non-negative".to_string(),
            ));
        }
    }
    let s = |alpha: f64| -> f64 {
        p1.iter()
            .zip(p2.iter())
            .map(|(&a, &b)| {
                if a == 0.0 && b == 0.0 {
                    0.0
                } else if alpha == 0.0 {
                    b
                } else if alpha == 1.0 {
                    a
                } else if a == 0.0 || b == 0.0 {
                    0.0
                } else {
                    a.powf(alpha) * b.powf(1.0 - alpha)
                }
            })
            .sum()
    };
    let alpha = golden_min(0.0, 1.0, 1e-8, s);
    // the interior search never evaluates the exact endpoints; check them
    let candidates = [(s(alpha), alpha), (s(0.0), 0.0), (s(1.0), 1.0)];
    let (mut lambda, alpha_star) = candidates
        .into_iter()
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .unwrap();
    lambda = lambda.clamp(0.0, 1.0);
    Ok((lambda, alpha_star))
}

/// Shots needed so the optimal-test error probability falls below epsilon:
/// ceil(ln eps / ln lambda).
pub fn required_samples(lambda: f64, epsilon: f64) -> Result<u64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(LdosError::Parameter(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(LdosError::Parameter(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )));
    }
    if lambda == 0.0 {
        return Ok(1);
    }
    if lambda >= 1.0 {
        return Err(LdosError::Indistinguishable);
    }
    Ok((epsilon.ln() / lambda.ln()).ceil() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    FirstHypothesis,
    SecondHypothesis,
    Inconclusive,
}

/// Likelihood-ratio decision between two discretized hypotheses on the
/// observed offset counts.
#[derive(Debug, Clone, Serialize)]
pub struct DecisionOutcome {
    pub log_likelihood_ratio: f64,
    pub decision: Decision,
    /// some observed cell had (floored) zero probability under a hypothesis
    pub floored_cells: bool,
}

pub const DEFAULT_LLR_THRESHOLD: f64 = 2.995_732_273_553_991; // ln 20

pub fn decide(
    counts: &[u64],
    q1: &[f64],
    q2: &[f64],
    llr_threshold: f64,
) -> Result<DecisionOutcome> {
    if counts.len() != q1.len() || counts.len() != q2.len() {
        return Err(LdosError::DimensionMismatch(
            "counts and hypothesis lengths differ".to_string(),
        ));
    }
    const FLOOR: f64 = 1e-12;
    let mut llr = 0.0;
    let mut floored = false;
    for ((&c, &a), &b) in counts.iter().zip(q1.iter()).zip(q2.iter()) {
        if c == 0 {
            continue;
        }
        if a < FLOOR || b < FLOOR {
            floored = true;
        }
        llr += c as f64 * (a.max(FLOOR).ln() - b.max(FLOOR).ln());
    }
    let decision = if llr >= llr_threshold {
        Decision::FirstHypothesis
    } else if llr <= -llr_threshold {
        Decision::SecondHypothesis
    } else {
        Decision::Inconclusive
    };
    Ok(DecisionOutcome { log_likelihood_ratio: llr, decision, floored_cells: floored })
}

/// Physical context attached to a hypothesis-test report.
#[derive(Debug, Clone, Serialize)]
pub struct PhysicalContext {
    pub sigma: f64,
    pub rho_e: f64,
    pub bandwidth: usize,
    pub gamma_predicted: f64,
    pub regime: Regime,
}

/// Full record of a two-hypothesis test on a sampled profile.
#[derive(Debug, Clone, Serialize)]
pub struct TestReport {
    pub hypotheses: [ProfileHypothesis; 2],
    pub lambda: f64,
    pub alpha_star: f64,
    pub epsilon: f64,
    pub k_required: u64,
    pub k_used: u64,
    pub log_likelihood_ratio: f64,
    pub decision: Decision,
    pub floored_cells: bool,
    pub fitted: Vec<WidthFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub context: Option<PhysicalContext>,
}

/// Run the full test: Chernoff bound, LLR decision, and ML width fits for
/// both families, from raw offset counts.
pub fn run_test(
    counts: &[u64],
    h1: &ProfileHypothesis,
    h2: &ProfileHypothesis,
    epsilon: f64,
    llr_threshold: f64,
    context: Option<PhysicalContext>,
) -> Result<TestReport> {
    let m_bins = counts.len();
    let q1 = discretize_profile(h1, m_bins)?;
    let q2 = discretize_profile(h2, m_bins)?;
    let (lambda, alpha_star) = chernoff_lambda(&q1, &q2)?;
    let k_required = required_samples(lambda, epsilon)?;
    let outcome = decide(counts, &q1, &q2, llr_threshold)?;
    let k_used: u64 = counts.iter().sum();
    let weights: Vec<f64> = if k_used > 0 {
        counts.iter().map(|&c| c as f64 / k_used as f64).collect()
    } else {
        vec![0.0; m_bins]
    };
    let fitted = if k_used > 0 {
        vec![
            fit_width(&weights, ProfileFamily::BreitWigner, m_bins)?,
            fit_width(&weights, ProfileFamily::Gaussian, m_bins)?,
        ]
    } else {
        Vec::new()
    };
    Ok(TestReport {
        hypotheses: [*h1, *h2],
        lambda,
        alpha_star,
        epsilon,
        k_required,
        k_used,
        log_likelihood_ratio: outcome.log_likelihood_ratio,
        decision: outcome.decision,
        floored_cells: outcome.floored_cells,
        fitted,
        context,
    })
}

/// Pearson chi-square goodness-of-fit p-value, pooling cells whose
/// expected count falls below 5.
pub fn chi_square_pvalue(observed: &[u64], expected_probs: &[f64]) -> Result<f64> {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    if observed.len() != expected_probs.len() {
        return Err(LdosError::DimensionMismatch(
            "observed and expected lengths differ".to_string(),
        ));
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(LdosError::Data("no observations".to_string()));
    }
    // pool low-expectation cells in descending-probability order
    let mut idx: Vec<usize> = (0..observed.len()).collect();
    idx.sort_by(|&a, &b| expected_probs[b].total_cmp(&expected_probs[a]));
    let mut cells: Vec<(f64, f64)> = Vec::new(); // (observed, expected)
    let mut pool_o = 0.0;
    let mut pool_e = 0.0;
    for &i in &idx {
        let e = expected_probs[i] * total as f64;
        let o = observed[i] as f64;
        if e >= 5.0 {
            cells.push((o, e));
        } else {
            pool_o += o;
            pool_e += e;
        }
    }
    if pool_e > 0.0 {
        cells.push((pool_o, pool_e));
    }
    if cells.len() < 2 {
        return Err(LdosError::Data(
            "fewer than two cells after pooling".to_string(),
        ));
    }
    let stat: f64 = cells
        .iter()
        .map(|&(o, e)| if e > 0.0 { (o - e) * (o - e) / e } else { 0.0 })
        .sum();
    let dof = (cells.len() - 1) as f64;
    let dist = ChiSquared::new(dof).map_err(|e| LdosError::NumericalFailure {
        context: format!("chi-square distribution: {e}"),
        residual: dof,
    })?;
    Ok(1.0 - dist.cdf(stat))
}
