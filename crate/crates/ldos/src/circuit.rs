//! Statevector simulation of the two-stage phase-estimation circuit.
//!
//! Stage 1 estimates eigenphases of U, a projective measurement of the
//! ancilla register collapses the work register, the ancilla is reset, and
//! stage 2 estimates eigenphases of U(sigma). Output is the joint (m, l)
//! outcome pair per shot, or the exact joint distribution.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{LdosError, Result};
use crate::linalg::{basis_vector, norm2, CVector, C64};
use crate::models::MapPair;
use crate::spectral::UnitaryOperator;

const NORMALIZATION_TOL: f64 = 1e-9;

/// Initial state of the work register.
#[derive(Debug, Clone)]
pub enum InitMode {
    PureState(CVector),
    EigenstateIndex(usize),
    MaximallyMixed,
}

/// Resolution, initial state, shot budget and seed for one experiment.
#[derive(Debug, Clone)]
pub struct CircuitConfig {
    /// Ancilla resolution M (number of phase bins).
    pub m_bins: usize,
    pub init_mode: InitMode,
    pub shots: u64,
    pub seed: u64,
}

impl CircuitConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.m_bins < 2 {
            return Err(LdosError::Parameter(format!(
                "m_bins must be >= 2, got {}",
                self.m_bins
            )));
        }
        if self.m_bins > dim {
            eprintln!(
                "warning: M = {} exceeds N = {dim}; bins will outnumber eigenphases",
                self.m_bins
            );
        }
        match &self.init_mode {
            InitMode::EigenstateIndex(j) if *j >= dim => Err(LdosError::Parameter(format!(
                "eigenstate index {j} out of range for dimension {dim}"
            ))),
            InitMode::PureState(v) if v.len() != dim => Err(LdosError::DimensionMismatch(
                format!("initial state length {} vs dimension {dim}", v.len()),
            )),
            InitMode::PureState(v) if (norm2(v) - 1.0).abs() > NORMALIZATION_TOL => Err(
                LdosError::Precondition("initial state is not normalized".to_string()),
            ),
            _ => Ok(()),
        }
    }
}

/// One sampled run of the circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub m: usize,
    pub l: usize,
    pub shot_index: u64,
}

/// Outcome branch of a single phase estimation: probability and the
/// normalized post-measurement work-register state.
#[derive(Debug, Clone)]
pub struct PeBranch {
    pub prob: f64,
    pub state: CVector,
}

/// Run one phase estimation of `u` on `state` with M ancilla bins.
///
/// Forms the joint state (1/sqrt(M)) sum_t |t> (x) U^t |psi>, Fourier
/// transforms the ancilla, and projects on each ancilla value. Returns all
/// M branches; branches with vanishing probability carry a zero state.
pub fn pe_measure(u: &UnitaryOperator, state: &CVector, m_bins: usize) -> Result<Vec<PeBranch>> {
    if m_bins < 2 {
        return Err(LdosError::Parameter(format!("m_bins must be >= 2, got {m_bins}")));
    }
    if state.len() != u.dim() {
        return Err(LdosError::DimensionMismatch(format!(
            "state length {} vs operator dimension {}",
            state.len(),
            u.dim()
        )));
    }
    if (norm2(state) - 1.0).abs() > NORMALIZATION_TOL {
        return Err(LdosError::Precondition(
            "pe_measure requires a normalized input state".to_string(),
        ));
    }
    let n = u.dim();
    // U^t |psi> for t = 0..M-1
    let mut powers: Vec<CVector> = Vec::with_capacity(m_bins);
    powers.push(state.clone());
    for t in 1..m_bins {
        powers.push(u.matrix().dot(&powers[t - 1]));
    }
    // Ancilla Fourier transform: branch_m = (1/M) sum_t e^{2 pi i m t / M} U^t |psi>.
    // With the convention U|phi> = e^{-i phi}|phi> this peaks the outcome m
    // at 2 pi m / M ~ phi.
    let mut branches = Vec::with_capacity(m_bins);
    let mut total = 0.0_f64;
    for m in 0..m_bins {
        let mut branch = CVector::zeros(n);
        for (t, pt) in powers.iter().enumerate() {
            let w = C64::from_polar(1.0 / m_bins as f64, TAU * ((m * t) % m_bins) as f64 / m_bins as f64);
            for i in 0..n {
                branch[i] += w * pt[i];
            }
        }
        let p = branch.iter().map(|z| z.norm_sqr()).sum::<f64>();
        total += p;
        if p > 1e-300 {
            let inv = 1.0 / p.sqrt();
            for z in branch.iter_mut() {
                *z *= inv;
            }
        } else {
            branch.fill(C64::new(0.0, 0.0));
        }
        branches.push(PeBranch { prob: p, state: branch });
    }
    debug_assert!((total - 1.0).abs() < 1e-10, "branch probabilities sum to {total}");
    Ok(branches)
}

fn sample_index(rng: &mut ChaCha8Rng, probs: impl Iterator<Item = f64>) -> usize {
    let draw: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, p) in probs.enumerate() {
        if p > 0.0 {
            last_nonzero = i;
        }
        acc += p;
        if draw < acc {
            return i;
        }
    }
    // rounding pushed the cumulative sum below the draw
    last_nonzero
}

fn per_shot_rng(seed: u64, shot_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shot_index);
    rng
}

fn initial_state(pair: &MapPair, cfg: &CircuitConfig, rng: &mut ChaCha8Rng) -> CVector {
    match &cfg.init_mode {
        InitMode::PureState(v) => v.clone(),
        InitMode::EigenstateIndex(j) => pair.spectral_u.eigenvector(*j),
        InitMode::MaximallyMixed => {
            let i = rng.gen_range(0..pair.dim());
            basis_vector(pair.dim(), i)
        }
    }
}

/// One circuit-faithful shot: draw the initial state, measure stage 1 on U,
/// collapse, reset the ancilla, measure stage 2 on U(sigma).
pub fn run_shot(pair: &MapPair, cfg: &CircuitConfig, shot_index: u64) -> Result<ShotRecord> {
    cfg.validate(pair.dim())?;
    let mut rng = per_shot_rng(cfg.seed, shot_index);
    let psi = initial_state(pair, cfg, &mut rng);
    let stage1 = pe_measure(&pair.u, &psi, cfg.m_bins)?;
    let m = sample_index(&mut rng, stage1.iter().map(|b| b.prob));
    let stage2 = pe_measure(&pair.u_perturbed, &stage1[m].state, cfg.m_bins)?;
    let l = sample_index(&mut rng, stage2.iter().map(|b| b.prob));
    Ok(ShotRecord { m, l, shot_index })
}

/// Batch sampler. Bit-identical to calling `run_shot` for every index: the
/// per-branch outcome distributions only depend on (initial basis state, m),
/// so they are computed once and reused, while every shot still consumes
/// its own RNG stream in the same draw order.
pub fn run_shots(pair: &MapPair, cfg: &CircuitConfig) -> Result<Vec<ShotRecord>> {
    cfg.validate(pair.dim())?;
    let n = pair.dim();
    let m_bins = cfg.m_bins;

    // distinct initial states: one per basis state for maximally mixed,
    // otherwise a single shared state
    let init_states: Vec<CVector> = match &cfg.init_mode {
        InitMode::MaximallyMixed => (0..n).map(|i| basis_vector(n, i)).collect(),
        InitMode::EigenstateIndex(j) => vec![pair.spectral_u.eigenvector(*j)],
        InitMode::PureState(v) => vec![v.clone()],
    };

    // stage-1 branches per initial state, stage-2 distributions per (i, m)
    let stage1: Vec<Vec<PeBranch>> = init_states
        .par_iter()
        .map(|psi| pe_measure(&pair.u, psi, m_bins))
        .collect::<Result<_>>()?;
    let stage2: Vec<Vec<Vec<f64>>> = stage1
        .par_iter()
        .map(|branches| {
            branches
                .iter()
                .map(|b| {
                    if b.prob > 1e-300 {
                        Ok(pe_measure(&pair.u_perturbed, &b.state, m_bins)?
                            .iter()
                            .map(|x| x.prob)
                            .collect())
                    } else {
                        Ok(vec![0.0; m_bins])
                    }
                })
                .collect::<Result<Vec<Vec<f64>>>>()
        })
        .collect::<Result<_>>()?;

    let mixed = matches!(cfg.init_mode, InitMode::MaximallyMixed);
    let shots: Vec<ShotRecord> = (0..cfg.shots)
        .into_par_iter()
        .map(|shot_index| {
            let mut rng = per_shot_rng(cfg.seed, shot_index);
            let i = if mixed { rng.gen_range(0..n) } else { 0 };
            let m = sample_index(&mut rng, stage1[i].iter().map(|b| b.prob));
            let l = sample_index(&mut rng, stage2[i][m].iter().copied());
            ShotRecord { m, l, shot_index }
        })
        .collect();
    Ok(shots)
}

/// Exact joint distribution P(m, l), indexed [m][l], computed by
/// propagating all measurement branches. The maximally mixed input averages
/// the pure-state joint distribution over all N computational basis states.
pub fn exact_joint_distribution(pair: &MapPair, cfg: &CircuitConfig) -> Result<Array2<f64>> {
    cfg.validate(pair.dim())?;
    let n = pair.dim();
    let m_bins = cfg.m_bins;
    let init_states: Vec<CVector> = match &cfg.init_mode {
        InitMode::MaximallyMixed => (0..n).map(|i| basis_vector(n, i)).collect(),
        InitMode::EigenstateIndex(j) => vec![pair.spectral_u.eigenvector(*j)],
        InitMode::PureState(v) => vec![v.clone()],
    };
    let weight = 1.0 / init_states.len() as f64;

    let partials: Vec<Array2<f64>> = init_states
        .par_iter()
        .map(|psi| -> Result<Array2<f64>> {
            let mut joint = Array2::zeros((m_bins, m_bins));
            let stage1 = pe_measure(&pair.u, psi, m_bins)?;
            for (m, branch) in stage1.iter().enumerate() {
                if branch.prob <= 1e-300 {
                    continue;
                }
                let stage2 = pe_measure(&pair.u_perturbed, &branch.state, m_bins)?;
                for (l, b2) in stage2.iter().enumerate() {
                    joint[[m, l]] += branch.prob * b2.prob;
                }
            }
            Ok(joint)
        })
        .collect::<Result<_>>()?;

    let mut joint = Array2::zeros((m_bins, m_bins));
    for p in &partials {
        joint += p;
    }
    joint *= weight;
    let total: f64 = joint.sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(LdosError::NumericalFailure {
            context: "exact joint distribution normalization".to_string(),
            residual: (total - 1.0).abs(),
        });
    }
    Ok(joint)
}

/// Conditional kernel P(l|m) from a joint distribution; rows whose marginal
/// is below 1e-14 are left as zeros and reported in the mask.
pub fn conditional_from_joint(joint: &Array2<f64>) -> (Array2<f64>, Vec<bool>) {
    let m_bins = joint.nrows();
    let mut cond = Array2::zeros((m_bins, m_bins));
    let mut defined = vec![false; m_bins];
    for m in 0..m_bins {
        let marginal: f64 = joint.row(m).sum();
        if marginal > 1e-14 {
            defined[m] = true;
            for l in 0..m_bins {
                cond[[m, l]] = joint[[m, l]] / marginal;
            }
        }
    }
    (cond, defined)
}
