//! Exact classical computation of the LDOS quantities from full
//! diagonalization: transition probabilities, coarse-grained and
//! band-averaged kernels, and closed-form predictions of the circuit's
//! joint distribution with and without phase-estimation leakage.

use ndarray::Array2;
use std::f64::consts::TAU;

use crate::circuit::InitMode;
use crate::error::{LdosError, Result};
use crate::linalg::{adjoint, CMatrix, CVector, C64};
use crate::models::MapPair;
use crate::spectral::{offset_index, wrap_offset, wrapped_offsets, SpectralData};

const DOUBLY_STOCHASTIC_TOL: f64 = 1e-9;

/// p[k][j] = |<phi_k(sigma)|phi_j>|^2; doubly stochastic because both
/// eigenbases are orthonormal.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    pub p: Array2<f64>,
}

/// Band index of a phase: bands are half-open arcs of width 2pi/M centered
/// at 2pi l / M; a phase exactly on an edge belongs to the higher band.
pub fn band_of(phase: f64, m_bins: usize) -> usize {
    let scaled = phase * m_bins as f64 / TAU + 0.5;
    (scaled.floor() as usize) % m_bins
}

/// Overlap matrix O[k][j] = <phi_k(sigma)|phi_j>.
fn overlaps(su: &SpectralData, sp: &SpectralData) -> CMatrix {
    adjoint(&sp.vectors).dot(&su.vectors)
}

pub fn transition_matrix(su: &SpectralData, sp: &SpectralData) -> Result<TransitionMatrix> {
    if su.dim() != sp.dim() {
        return Err(LdosError::DimensionMismatch(format!(
            "spectral data dimensions {} vs {}",
            su.dim(),
            sp.dim()
        )));
    }
    let n = su.dim();
    let o = overlaps(su, sp);
    let p = Array2::from_shape_fn((n, n), |(k, j)| o[[k, j]].norm_sqr());
    for idx in 0..n {
        let row: f64 = p.row(idx).sum();
        let col: f64 = p.column(idx).sum();
        if (row - 1.0).abs() > DOUBLY_STOCHASTIC_TOL || (col - 1.0).abs() > DOUBLY_STOCHASTIC_TOL
        {
            return Err(LdosError::NumericalFailure {
                context: "transition matrix double stochasticity".to_string(),
                residual: (row - 1.0).abs().max((col - 1.0).abs()),
            });
        }
    }
    Ok(TransitionMatrix { p })
}

/// P(Delta_l | phi_j): entry (l, j) sums p[k][j] over perturbed eigenphases
/// falling in band l. Every column sums to 1.
pub fn coarse_grain(t: &TransitionMatrix, sp_phases: &[f64], m_bins: usize) -> Array2<f64> {
    let n = t.p.ncols();
    let mut cg = Array2::zeros((m_bins, n));
    for (k, &phase) in sp_phases.iter().enumerate() {
        let l = band_of(phase, m_bins);
        for j in 0..n {
            cg[[l, j]] += t.p[[k, j]];
        }
    }
    cg
}

/// Band-averaged kernel P(Delta_l | Delta_m) plus the unperturbed band
/// occupation counts N_m. Rows with N_m = 0 are flagged, not zero-filled.
#[derive(Debug, Clone)]
pub struct BandKernel {
    /// kernel[m][l]; row m is meaningful only when counts[m] > 0
    pub kernel: Array2<f64>,
    pub counts: Vec<usize>,
}

impl BandKernel {
    pub fn is_defined(&self, m: usize) -> bool {
        self.counts[m] > 0
    }
}

pub fn band_average(cg: &Array2<f64>, su_phases: &[f64], m_bins: usize) -> BandKernel {
    let mut kernel = Array2::zeros((m_bins, m_bins));
    let mut counts = vec![0usize; m_bins];
    for (j, &phase) in su_phases.iter().enumerate() {
        let m = band_of(phase, m_bins);
        counts[m] += 1;
        for l in 0..m_bins {
            kernel[[m, l]] += cg[[l, j]];
        }
    }
    for m in 0..m_bins {
        if counts[m] > 0 {
            let inv = 1.0 / counts[m] as f64;
            for l in 0..m_bins {
                kernel[[m, l]] *= inv;
            }
        }
    }
    BandKernel { kernel, counts }
}

/// Conditional kernel P(l|m) with hard phase binning (the idealized,
/// leakage-free behavior), plus the first-stage marginal P(m).
#[derive(Debug, Clone)]
pub struct IdealKernel {
    /// cond[m][l]; row m meaningful only where defined[m]
    pub cond: Array2<f64>,
    pub marginal: Vec<f64>,
    pub defined: Vec<bool>,
}

pub fn kernel_ideal_binning(
    pair: &MapPair,
    m_bins: usize,
    init_mode: &InitMode,
) -> Result<IdealKernel> {
    let su = &pair.spectral_u;
    let sp = &pair.spectral_perturbed;
    let n = su.dim();
    let t = transition_matrix(su, sp)?;
    let cg = coarse_grain(&t, &sp.phases, m_bins);

    match init_mode {
        InitMode::EigenstateIndex(j) => {
            if *j >= n {
                return Err(LdosError::Parameter(format!(
                    "eigenstate index {j} out of range for dimension {n}"
                )));
            }
            let mj = band_of(su.phases[*j], m_bins);
            let mut cond = Array2::zeros((m_bins, m_bins));
            let mut marginal = vec![0.0; m_bins];
            let mut defined = vec![false; m_bins];
            for l in 0..m_bins {
                cond[[mj, l]] = cg[[l, *j]];
            }
            marginal[mj] = 1.0;
            defined[mj] = true;
            Ok(IdealKernel { cond, marginal, defined })
        }
        InitMode::MaximallyMixed => {
            let ba = band_average(&cg, &su.phases, m_bins);
            let defined: Vec<bool> = (0..m_bins).map(|m| ba.is_defined(m)).collect();
            let marginal: Vec<f64> =
                ba.counts.iter().map(|&c| c as f64 / n as f64).collect();
            Ok(IdealKernel { cond: ba.kernel, marginal, defined })
        }
        InitMode::PureState(psi) => {
            if psi.len() != n {
                return Err(LdosError::DimensionMismatch(format!(
                    "initial state length {} vs dimension {n}",
                    psi.len()
                )));
            }
            // c_j = <phi_j|psi>, grouped by the band of phi_j
            let c: CVector = adjoint(&su.vectors).dot(psi);
            let o = overlaps(su, sp);
            let mut cond = Array2::zeros((m_bins, m_bins));
            let mut marginal = vec![0.0; m_bins];
            let mut defined = vec![false; m_bins];
            let bands: Vec<usize> =
                su.phases.iter().map(|&p| band_of(p, m_bins)).collect();
            for m in 0..m_bins {
                let members: Vec<usize> =
                    (0..n).filter(|&j| bands[j] == m).collect();
                let weight: f64 = members.iter().map(|&j| c[j].norm_sqr()).sum();
                marginal[m] = weight;
                if weight <= 1e-14 {
                    continue;
                }
                defined[m] = true;
                let scale = 1.0 / weight.sqrt();
                // amp_k = sum_{j in band} c~_j <phi_k(sigma)|phi_j>,
                // interference between band members kept exactly
                for k in 0..n {
                    let amp: C64 = members
                        .iter()
                        .map(|&j| c[j] * scale * o[[k, j]])
                        .sum();
                    let l = band_of(sp.phases[k], m_bins);
                    cond[[m, l]] += amp.norm_sqr();
                }
            }
            Ok(IdealKernel { cond, marginal, defined })
        }
    }
}

/// Leakage amplitude of phase estimation: (1/M) sum_t e^{i(2 pi m / M - phi) t},
/// the coefficient picked up by an eigenphase phi on ancilla outcome m.
pub fn leak_amplitude(phi: f64, m: usize, m_bins: usize) -> C64 {
    let theta = crate::spectral::wrap_phase_difference(TAU * m as f64 / m_bins as f64 - phi);
    if theta == 0.0 {
        return C64::new(1.0, 0.0);
    }
    let mf = m_bins as f64;
    let ratio = (mf * theta / 2.0).sin() / (mf * (theta / 2.0).sin());
    C64::from_polar(1.0, theta * (mf - 1.0) / 2.0) * ratio
}

/// Closed-form joint distribution P(m, l) of the simulated circuit
/// including spectral leakage, computed in the two eigenbases. Agrees with
/// the brute-force statevector simulation to 1e-9.
pub fn kernel_circuit_faithful(
    pair: &MapPair,
    m_bins: usize,
    init_mode: &InitMode,
) -> Result<Array2<f64>> {
    let su = &pair.spectral_u;
    let sp = &pair.spectral_perturbed;
    let n = su.dim();
    let o = overlaps(su, sp);

    // initial amplitudes in the U eigenbasis, one column per initial state
    let init_cols: Vec<CVector> = match init_mode {
        InitMode::PureState(psi) => {
            if psi.len() != n {
                return Err(LdosError::DimensionMismatch(format!(
                    "initial state length {} vs dimension {n}",
                    psi.len()
                )));
            }
            vec![adjoint(&su.vectors).dot(psi)]
        }
        InitMode::EigenstateIndex(j) => {
            if *j >= n {
                return Err(LdosError::Parameter(format!(
                    "eigenstate index {j} out of range for dimension {n}"
                )));
            }
            let mut c = CVector::zeros(n);
            c[*j] = C64::new(1.0, 0.0);
            vec![c]
        }
        // <phi_j|e_i> = conj(vectors[i, j])
        InitMode::MaximallyMixed => (0..n)
            .map(|i| CVector::from_shape_fn(n, |j| su.vectors[[i, j]].conj()))
            .collect(),
    };
    let weight = 1.0 / init_cols.len() as f64;

    // first-stage branch coefficients are c_j * leak_amplitude(phi_j, m);
    // the complex phase matters for the interference in the second stage
    let leak1: Vec<Vec<C64>> = (0..m_bins)
        .map(|m| su.phases.iter().map(|&p| leak_amplitude(p, m, m_bins)).collect())
        .collect();
    let leak2: Vec<Vec<f64>> = (0..m_bins)
        .map(|l| {
            sp.phases
                .iter()
                .map(|&p| leak_amplitude(p, l, m_bins).norm_sqr())
                .collect()
        })
        .collect();

    let mut joint = Array2::zeros((m_bins, m_bins));
    for c in &init_cols {
        for m in 0..m_bins {
            let a: CVector =
                CVector::from_shape_fn(n, |j| c[j] * leak1[m][j]);
            let pm: f64 = a.iter().map(|z| z.norm_sqr()).sum();
            if pm <= 1e-300 {
                continue;
            }
            let d = o.dot(&a);
            let inv = 1.0 / pm;
            for l in 0..m_bins {
                let ql: f64 = (0..n).map(|k| d[k].norm_sqr() * leak2[l][k]).sum();
                joint[[m, l]] += weight * pm * (ql * inv);
            }
        }
    }
    Ok(joint)
}

/// Which band (or aggregate) an LDOS profile belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileAnchor {
    Band(usize),
    Aggregated,
}

/// Normalized distribution over wrapped bin offsets k in
/// [-floor(M/2), ceil(M/2)).
#[derive(Debug, Clone)]
pub struct LdosProfile {
    pub offsets: Vec<i64>,
    pub weights: Vec<f64>,
    pub anchor: ProfileAnchor,
}

impl LdosProfile {
    pub fn m_bins(&self) -> usize {
        self.offsets.len()
    }

    pub fn weight_at(&self, offset: i64) -> f64 {
        self.weights[offset_index(offset, self.m_bins())]
    }
}

/// Recenter row m of a conditional kernel into an LDOS profile over
/// wrapped offsets.
pub fn ldos_from_kernel(
    cond: &Array2<f64>,
    defined: &[bool],
    m: usize,
) -> Result<LdosProfile> {
    let m_bins = cond.nrows();
    if m >= m_bins || !defined[m] {
        return Err(LdosError::EmptyBand(m));
    }
    let mut weights = vec![0.0_f64; m_bins];
    for l in 0..m_bins {
        weights[offset_index(wrap_offset(l, m, m_bins), m_bins)] += cond[[m, l]];
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(LdosError::EmptyBand(m));
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(LdosProfile {
        offsets: wrapped_offsets(m_bins),
        weights,
        anchor: ProfileAnchor::Band(m),
    })
}

/// Aggregate a joint distribution P(m, l) into a single offset profile.
pub fn ldos_aggregate(joint: &Array2<f64>) -> Result<LdosProfile> {
    let m_bins = joint.nrows();
    let mut weights = vec![0.0_f64; m_bins];
    for m in 0..m_bins {
        for l in 0..m_bins {
            weights[offset_index(wrap_offset(l, m, m_bins), m_bins)] += joint[[m, l]];
        }
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(LdosError::Data("joint distribution carries no mass".to_string()));
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(LdosProfile {
        offsets: wrapped_offsets(m_bins),
        weights,
        anchor: ProfileAnchor::Aggregated,
    })
}

/// Band-kernel rows weighted by band occupation, recentered and merged:
/// the oracle's aggregated LDOS over all unperturbed states.
pub fn ldos_aggregate_band_kernel(bk: &BandKernel) -> Result<LdosProfile> {
    let m_bins = bk.kernel.nrows();
    let total_states: usize = bk.counts.iter().sum();
    if total_states == 0 {
        return Err(LdosError::Data("no eigenphases in any band".to_string()));
    }
    let mut weights = vec![0.0_f64; m_bins];
    for m in 0..m_bins {
        if bk.counts[m] == 0 {
            continue;
        }
        let w = bk.counts[m] as f64 / total_states as f64;
        for l in 0..m_bins {
            weights[offset_index(wrap_offset(l, m, m_bins), m_bins)] +=
                w * bk.kernel[[m, l]];
        }
    }
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(LdosProfile {
        offsets: wrapped_offsets(m_bins),
        weights,
        anchor: ProfileAnchor::Aggregated,
    })
}
