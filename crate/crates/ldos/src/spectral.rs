//! Unitary and Hermitian operator types, the discrete Fourier transform,
//! and eigendecomposition of unitary matrices.
//!
//! Sign convention throughout: U|phi> = exp(-i phi)|phi> with phi in [0, 2pi).

use std::f64::consts::TAU;

use crate::error::{LdosError, Result};
use crate::linalg::hermitian::eig_hermitian;
use crate::linalg::{adjoint, identity, inner, max_abs_diff, CMatrix, CVector, C64};

pub const UNITARITY_TOL: f64 = 1e-10;
pub const HERMITICITY_TOL: f64 = 1e-12;
pub const EIG_RESIDUAL_TOL: f64 = 1e-9;

/// Eigenvalues of (U + U^dag)/2 closer than this are treated as one
/// cluster and split by the anti-Hermitian part. Chosen large enough that
/// the subspace truncation error stays below EIG_RESIDUAL_TOL.
const CLUSTER_TOL: f64 = 1e-4;

/// Dense N x N unitary, verified on construction.
#[derive(Debug, Clone)]
pub struct UnitaryOperator {
    entries: CMatrix,
}

impl UnitaryOperator {
    pub fn new(entries: CMatrix) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 || entries.ncols() != n {
            return Err(LdosError::DimensionMismatch(format!(
                "unitary must be square and nonempty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let gram = adjoint(&entries).dot(&entries);
        let dev = max_abs_diff(&gram, &identity(n));
        if dev > UNITARITY_TOL {
            return Err(LdosError::NotUnitary(dev));
        }
        Ok(Self { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    /// U v, with a dimension check.
    pub fn apply(&self, v: &CVector) -> Result<CVector> {
        if v.len() != self.dim() {
            return Err(LdosError::DimensionMismatch(format!(
                "operator dimension {} vs vector length {}",
                self.dim(),
                v.len()
            )));
        }
        Ok(self.entries.dot(v))
    }
}

/// Dense N x N Hermitian matrix, verified on construction.
#[derive(Debug, Clone)]
pub struct HermitianOperator {
    entries: CMatrix,
}

impl HermitianOperator {
    pub fn new(entries: CMatrix) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 || entries.ncols() != n {
            return Err(LdosError::DimensionMismatch(format!(
                "hermitian must be square and nonempty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let dev = max_abs_diff(&entries, &adjoint(&entries));
        if dev > HERMITICITY_TOL {
            return Err(LdosError::NotHermitian(dev));
        }
        Ok(Self { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }
}

/// Eigenphases and eigenvectors of a unitary, sorted ascending by phase.
#[derive(Debug, Clone)]
pub struct SpectralData {
    /// Eigenphases in [0, 2pi).
    pub phases: Vec<f64>,
    /// Column j is the eigenvector for phases[j].
    pub vectors: CMatrix,
}

impl SpectralData {
    pub fn dim(&self) -> usize {
        self.phases.len()
    }

    pub fn eigenvector(&self, j: usize) -> CVector {
        self.vectors.column(j).to_owned()
    }

    /// Sum_j exp(-i phi_j) v_j v_j^dag; reconstructs the decomposed unitary.
    pub fn reconstruct(&self) -> CMatrix {
        let n = self.dim();
        let mut u = CMatrix::zeros((n, n));
        for j in 0..n {
            let lam = C64::from_polar(1.0, -self.phases[j]);
            for r in 0..n {
                let a = self.vectors[[r, j]] * lam;
                for c in 0..n {
                    u[[r, c]] += a * self.vectors[[c, j]].conj();
                }
            }
        }
        u
    }
}

/// The M x M discrete Fourier transform, F_{jk} = M^{-1/2} exp(2 pi i jk / M).
pub fn dft(m: usize) -> Result<UnitaryOperator> {
    if m < 2 {
        return Err(LdosError::Parameter(format!("dft requires M >= 2, got {m}")));
    }
    let scale = 1.0 / (m as f64).sqrt();
    let entries = CMatrix::from_shape_fn((m, m), |(j, k)| {
        C64::from_polar(scale, TAU * ((j * k) % m) as f64 / m as f64)
    });
    UnitaryOperator::new(entries)
}

/// Map (l - m) mod M into the signed window [-floor(M/2), ceil(M/2)).
pub fn wrap_offset(l: usize, m: usize, m_bins: usize) -> i64 {
    debug_assert!(l < m_bins && m < m_bins);
    let d = ((l + m_bins - m) % m_bins) as i64;
    let half_up = m_bins.div_ceil(2) as i64; // ceil(M/2)
    if d >= half_up {
        d - m_bins as i64
    } else {
        d
    }
}

/// The canonical ordering of wrapped offsets, -floor(M/2) .. ceil(M/2)-1.
pub fn wrapped_offsets(m_bins: usize) -> Vec<i64> {
    let lo = -((m_bins / 2) as i64);
    (0..m_bins as i64).map(|i| lo + i).collect()
}

/// Position of a wrapped offset in the `wrapped_offsets` ordering.
pub fn offset_index(offset: i64, m_bins: usize) -> usize {
    (offset + (m_bins / 2) as i64) as usize
}

/// Eigendecomposition of a unitary matrix.
///
/// Diagonalizes the Hermitian part H = (U + U^dag)/2; (near-)degenerate
/// eigenspaces of H are split by diagonalizing the projection of
/// A = (U - U^dag)/(2i). Phases come from the Rayleigh quotient of U.
pub fn eig_unitary(u: &UnitaryOperator) -> Result<SpectralData> {
    let n = u.dim();
    let um = u.matrix();
    let uh = adjoint(um);
    let h = CMatrix::from_shape_fn((n, n), |(i, j)| (um[[i, j]] + uh[[i, j]]) * 0.5);
    let a = CMatrix::from_shape_fn((n, n), |(i, j)| {
        (um[[i, j]] - uh[[i, j]]) * C64::new(0.0, -0.5)
    });

    let (hvals, mut vecs) = eig_hermitian(&h)?;

    // Chain-merge clusters of H eigenvalues, then split each cluster with
    // the projected anti-Hermitian part.
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && hvals[end] - hvals[end - 1] < CLUSTER_TOL {
            end += 1;
        }
        if end - start > 1 {
            let s = end - start;
            // b = W^dag A W restricted to the cluster columns
            let aw = CMatrix::from_shape_fn((n, s), |(i, j)| {
                (0..n).map(|k| a[[i, k]] * vecs[[k, start + j]]).sum()
            });
            let b = CMatrix::from_shape_fn((s, s), |(i, j)| {
                (0..n)
                    .map(|k| vecs[[k, start + i]].conj() * aw[[k, j]])
                    .sum()
            });
            let (_, rot) = eig_hermitian(&b)?;
            let rotated = CMatrix::from_shape_fn((n, s), |(i, j)| {
                (0..s).map(|k| vecs[[i, start + k]] * rot[[k, j]]).sum()
            });
            for j in 0..s {
                for i in 0..n {
                    vecs[[i, start + j]] = rotated[[i, j]];
                }
            }
        }
        start = end;
    }

    // Phases from Rayleigh quotients; fix each column's global phase so its
    // first non-negligible component is real positive (determinism).
    let mut cols: Vec<(f64, CVector)> = Vec::with_capacity(n);
    for j in 0..n {
        let mut v = vecs.column(j).to_owned();
        let lead = v
            .iter()
            .position(|z| z.norm() > 1e-8)
            .unwrap_or(0);
        let ph = v[lead] / v[lead].norm();
        for z in v.iter_mut() {
            *z /= ph;
        }
        let lam = inner(&v, &um.dot(&v));
        let mut phi = (-lam.arg()).rem_euclid(TAU);
        if phi >= TAU {
            phi = 0.0;
        }
        cols.push((phi, v));
    }
    cols.sort_by(|x, y| {
        if (x.0 - y.0).abs() > 1e-10 {
            return x.0.total_cmp(&y.0);
        }
        // tie: lexicographic order of the eigenvector entries
        for (za, zb) in x.1.iter().zip(y.1.iter()) {
            match za.re.total_cmp(&zb.re).then(za.im.total_cmp(&zb.im)) {
                std::cmp::Ordering::Equal => continue,
                ord => return ord,
            }
        }
        std::cmp::Ordering::Equal
    });

    let phases: Vec<f64> = cols.iter().map(|c| c.0).collect();
    let mut vectors = CMatrix::zeros((n, n));
    let mut worst = 0.0_f64;
    for (j, (phi, v)) in cols.iter().enumerate() {
        let uv = um.dot(v);
        let lam = C64::from_polar(1.0, -phi);
        let mut res = 0.0_f64;
        for i in 0..n {
            res += (uv[i] - v[i] * lam).norm_sqr();
            vectors[[i, j]] = v[i];
        }
        worst = worst.max(res.sqrt());
    }
    if worst > EIG_RESIDUAL_TOL {
        return Err(LdosError::NumericalFailure {
            context: "unitary eigendecomposition".to_string(),
            residual: worst,
        });
    }
    Ok(SpectralData { phases, vectors })
}

/// Diagonal unitary diag(exp(-i phi_j)) for a list of eigenphases.
pub fn diagonal_unitary(phases: &[f64]) -> UnitaryOperator {
    let n = phases.len();
    let mut m = CMatrix::zeros((n, n));
    for (i, &p) in phases.iter().enumerate() {
        m[[i, i]] = C64::from_polar(1.0, -p);
    }
    UnitaryOperator::new(m).expect("diagonal phases are unitary")
}

/// Shortest signed distance of a phase difference on the circle, in [-pi, pi).
pub fn wrap_phase_difference(x: f64) -> f64 {
    let mut d = x.rem_euclid(TAU);
    if d >= TAU / 2.0 {
        d -= TAU;
    }
    d
}
