//! Common modal basis: expressing a perturbed model's fixed-interface modes
//! in a reference model's modal coordinates.
//!
//! Entries of a Craig-Bampton reduced matrix are only smooth functions of the
//! design parameters while each mode keeps its identity; eigenvalue crossings and
//! veering reshuffle the mode order and make direct interpolation of reduced
//! matrices meaningless. The cure is to project the perturbed fixed-interface
//! modes `Φ^p` onto the reference modal basis:
//!
//! * reference operator `R = M_jj^o Φ^o` (so `Rᵀ Φ^o = I` by mass
//!   normalization),
//! * projection coefficients `G = Rᵀ Φ^p`,
//! * re-expressed modes `Φ̂ = Φ^p G⁻¹`, which satisfy `Rᵀ Φ̂ = I` and reduce
//!   to `Φ^o` at zero perturbation.
//!
//! `G` stays well conditioned while the perturbed retained set spans the same
//! subspace as the reference's; an exact crossing at the retained-set boundary
//! makes `G` rank deficient. [`diagnostics`] measures rank, reciprocal
//! condition number, and determinant sign so samplers can detect those
//! breakdowns.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cb::{cb_reduce, cb_transform, static_modes, CBReduced, Provenance};
use crate::linalg::{self, EigenPairs, LinalgError};
use crate::model::{partition, Substructure};

/// Errors raised by common-basis construction and projection.
#[derive(Debug, Error)]
pub enum ProjectionError {
    /// Underlying linear-algebra failure.
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    /// The projection matrix `G` failed the conditioning test.
    #[error(
        "projection is ill-conditioned: rank {rank} of {q}, rcond {rcond:.3e} (threshold {threshold:.3e})"
    )]
    IllConditioned {
        rank: usize,
        q: usize,
        rcond: f64,
        threshold: f64,
    },
    /// Incompatible mode-set sizes.
    #[error("dimension error: {0}")]
    Dimension(String),
}

/// Conditioning thresholds for accepting a projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConditioningThresholds {
    /// Relative singular-value cutoff for the numerical rank of `G`.
    pub rank_tau: f64,
    /// Minimum reciprocal condition number of `G`.
    pub rcond_min: f64,
}

impl Default for ConditioningThresholds {
    fn default() -> Self {
        Self {
            rank_tau: 1e-8,
            rcond_min: 1e-10,
        }
    }
}

/// A reference model's modal basis in projection form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommonBasis {
    /// Projection operator `R = M_jj^o Φ^o`, size `n_j × q`.
    pub r: DMatrix<f64>,
    /// The reference fixed-interface modes `Φ^o`, size `n_j × q`.
    pub phi_ref: DMatrix<f64>,
    /// Reference eigenvalues (ascending).
    pub values_ref: Vec<f64>,
    /// Number of retained modes.
    pub q: usize,
    /// Design parameters of the reference model.
    pub theta_ref: Vec<f64>,
}

/// Conditioning diagnostics of a projection matrix `G = Rᵀ Φ^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionDiagnostics {
    /// Numerical rank of `G` at the configured tolerance.
    pub rank: usize,
    /// Reciprocal condition number `σ_min/σ_max` of `G`.
    pub rcond: f64,
    /// Sign of `det(G)`: −1, 0, or 1.
    pub det_sign: i8,
    /// `ln |det(G)|` (−∞ when exactly singular).
    pub log_abs_det: f64,
    /// Retained mode count (the size of `G`).
    pub q: usize,
    /// `rank == q` and `rcond > rcond_min`.
    pub well_conditioned: bool,
}

/// Builds the common basis of a reference substructure with `q` retained modes.
pub fn common_basis(reference: &Substructure, q: usize) -> Result<CommonBasis, LinalgError> {
    let p = partition(reference);
    let modes = linalg::sym_generalized_eig(&p.k_jj, &p.m_jj, q)?;
    Ok(CommonBasis {
        r: &p.m_jj * &modes.vectors,
        phi_ref: modes.vectors.clone(),
        values_ref: modes.values.iter().copied().collect(),
        q,
        theta_ref: reference.params.values.clone(),
    })
}

/// Computes `G = Rᵀ Φ^p` and its conditioning diagnostics.
pub fn diagnostics(
    basis: &CommonBasis,
    phi_p: &DMatrix<f64>,
    thresholds: &ConditioningThresholds,
) -> Result<ProjectionDiagnostics, ProjectionError> {
    let g = projection_matrix(basis, phi_p)?;
    let rank = linalg::numerical_rank(&g, thresholds.rank_tau);
    let rcond = linalg::rcond(&g);
    let (det_sign, log_abs_det) = linalg::sign_logdet(&g);
    Ok(ProjectionDiagnostics {
        rank,
        rcond,
        det_sign,
        log_abs_det,
        q: basis.q,
        well_conditioned: rank == basis.q && rcond > thresholds.rcond_min,
    })
}

/// The raw projection matrix `G = Rᵀ Φ^p`, size `q×q`.
pub fn projection_matrix(
    basis: &CommonBasis,
    phi_p: &DMatrix<f64>,
) -> Result<DMatrix<f64>, ProjectionError> {
    if phi_p.nrows() != basis.r.nrows() || phi_p.ncols() != basis.q {
        return Err(ProjectionError::Dimension(format!(
            "perturbed modes are {}x{} but the basis expects {}x{}",
            phi_p.nrows(),
            phi_p.ncols(),
            basis.r.nrows(),
            basis.q
        )));
    }
    Ok(basis.r.transpose() * phi_p)
}

/// Re-expresses perturbed modes in the reference basis: `Φ̂ = Φ^p G⁻¹`.
///
/// Fails with [`ProjectionError::IllConditioned`] when the diagnostics reject
/// `G`. On success `Rᵀ Φ̂ = I(q)` holds to 1e-8.
pub fn project_modes(
    basis: &CommonBasis,
    phi_p: &DMatrix<f64>,
    thresholds: &ConditioningThresholds,
) -> Result<DMatrix<f64>, ProjectionError> {
    let diag = diagnostics(basis, phi_p, thresholds)?;
    if !diag.well_conditioned {
        return Err(ProjectionError::IllConditioned {
            rank: diag.rank,
            q: diag.q,
            rcond: diag.rcond,
            threshold: thresholds.rcond_min,
        });
    }
    let g = projection_matrix(basis, phi_p)?;
    // Φ̂ᵀ = G⁻ᵀ Φ^pᵀ, solved on Gᵀ rather than forming an inverse.
    let phi_hat_t = linalg::solve(&g.transpose(), &phi_p.transpose())?;
    Ok(phi_hat_t.transpose())
}

/// Re-expresses perturbed modes in the reference basis without the
/// conditioning gate.
///
/// `G` is inverted through a rank-revealing pseudo-inverse: directions whose
/// singular value falls below `1e-12 · σ_max` — modes that crossed out of
/// the retained set — are dropped instead of amplified. The result is always
/// finite, but once a crossing intervenes `Rᵀ Φ̂ = I` no longer holds and the
/// reduced matrices silently lose the crossed modes. This is the degraded
/// single-region behavior the conditioning gate exists to catch; it is kept
/// available as a baseline.
pub fn project_modes_unchecked(
    basis: &CommonBasis,
    phi_p: &DMatrix<f64>,
) -> Result<DMatrix<f64>, ProjectionError> {
    let g = projection_matrix(basis, phi_p)?;
    let rcond = linalg::rcond(&g);
    let svd = g.svd(true, true);
    let sigma_max = svd.singular_values.max();
    let g_pinv = svd
        .pseudo_inverse(1e-12 * sigma_max)
        .map_err(|_| LinalgError::SingularSystem { rcond })?;
    Ok(phi_p * g_pinv)
}

/// Craig-Bampton reduction of `s` with its fixed-interface modes re-expressed
/// in the reference basis.
///
/// The modal coordinates of the result correspond to the *reference* mode
/// identities, so reduced matrices from different `θ` can be compared and
/// interpolated entry by entry. At `θ = θ_ref` the result equals the standard
/// reduction of the reference.
pub fn cb_reduce_common(
    s: &Substructure,
    basis: &CommonBasis,
    thresholds: &ConditioningThresholds,
) -> Result<CBReduced, ProjectionError> {
    let p = partition(s);
    let modes = linalg::sym_generalized_eig(&p.k_jj, &p.m_jj, basis.q)?;
    let phi_hat = project_modes(basis, &modes.vectors, thresholds)?;
    let psi = static_modes(&p.k_jj, &p.k_ji)?;
    let t = cb_transform(&psi, &phi_hat)?;
    let mut red = cb_reduce(
        s,
        &t,
        Provenance::CommonBasis {
            theta: s.params.values.clone(),
            theta_ref: basis.theta_ref.clone(),
        },
    )?;
    // The projected modes are not mass-orthonormal for the perturbed model, so
    // the modal blocks are full; only symmetry is guaranteed, and cb_reduce
    // already symmetrized. Residual check: Rᵀ Φ̂ = I.
    debug_assert!({
        let resid = basis.r.transpose() * &phi_hat - DMatrix::<f64>::identity(basis.q, basis.q);
        resid.amax() <= 1e-8
    });
    red.n_i = s.n_interface();
    Ok(red)
}

/// [`cb_reduce_common`] without the conditioning gate: the reduction a
/// single-region workflow computes whether or not the projection is healthy.
///
/// Inside the reference's region it matches the gated reduction; across a
/// crossing the modal blocks degrade instead of failing. The identity
/// residual `Rᵀ Φ̂ = I` is not asserted here — it can be arbitrarily large.
pub fn cb_reduce_common_unchecked(
    s: &Substructure,
    basis: &CommonBasis,
) -> Result<CBReduced, ProjectionError> {
    let p = partition(s);
    let modes = linalg::sym_generalized_eig(&p.k_jj, &p.m_jj, basis.q)?;
    let phi_hat = project_modes_unchecked(basis, &modes.vectors)?;
    let psi = static_modes(&p.k_jj, &p.k_ji)?;
    let t = cb_transform(&psi, &phi_hat)?;
    let mut red = cb_reduce(
        s,
        &t,
        Provenance::CommonBasis {
            theta: s.params.values.clone(),
            theta_ref: basis.theta_ref.clone(),
        },
    )?;
    red.n_i = s.n_interface();
    Ok(red)
}

/// Convenience: fixed-interface modes of `s` (used by samplers that only need
/// diagnostics, not a full reduction).
pub fn fixed_interface_modes_of(
    s: &Substructure,
    q: usize,
) -> Result<(EigenPairs, DMatrix<f64>), LinalgError> {
    let p = partition(s);
    let modes = linalg::sym_generalized_eig(&p.k_jj, &p.m_jj, q)?;
    Ok((modes, p.m_jj))
}
