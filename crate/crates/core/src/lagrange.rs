//! Tensor-product quadratic Lagrange interpolation of reduced matrices.
//!
//! The baseline interpolant of the surrogate comparison: three Gaussian
//! support points per parameter dimension, `η = h[1 ∓ √(5/3)·P]` around the
//! nominal value `h` with perturbation fraction `P`, interpolating `M̂`, `K̂`,
//! and `F̂` entrywise. Quadratic in every parameter, hence exact on matrices
//! whose entries are polynomials of total degree ≤ 2 per dimension.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::cb::{CBReduced, Provenance};

/// Errors raised when assembling or evaluating a Lagrange grid.
#[derive(Debug, Error)]
pub enum LagrangeError {
    /// Wrong number or shape of support matrices.
    #[error("invalid support: {0}")]
    Support(String),
    /// Query point has the wrong number of coordinates.
    #[error("dimension error: {0}")]
    Dimension(String),
}

/// Three Gaussian support abscissae for nominal value `h` and perturbation
/// fraction `p`: `h(1 − √(5/3)p)`, `h`, `h(1 + √(5/3)p)`.
pub fn gaussian_nodes(h: f64, p: f64) -> [f64; 3] {
    let s = (5.0f64 / 3.0).sqrt() * p;
    [h * (1.0 - s), h, h * (1.0 + s)]
}

/// A full 3-per-dimension tensor grid of reduced matrices.
#[derive(Debug, Clone)]
pub struct LagrangeGrid {
    /// Support abscissae per dimension, strictly increasing.
    pub nodes: Vec<[f64; 3]>,
    /// Support matrices in row-major tensor order: the last dimension's
    /// index varies fastest.
    pub supports: Vec<CBReduced>,
}

/// Result of one interpolation query.
#[derive(Debug, Clone)]
pub struct LagrangeValue {
    /// Interpolated reduced matrices.
    pub cb: CBReduced,
    /// True when the query point lies outside the grid hull in any
    /// dimension; extrapolation is allowed but reported.
    pub extrapolated: bool,
}

impl LagrangeGrid {
    /// Builds a grid from per-dimension nodes and row-major supports,
    /// checking count, ordering, and shape consistency.
    pub fn new(nodes: Vec<[f64; 3]>, supports: Vec<CBReduced>) -> Result<Self, LagrangeError> {
        if nodes.is_empty() {
            return Err(LagrangeError::Support("no dimensions".into()));
        }
        for (k, n) in nodes.iter().enumerate() {
            if !(n[0] < n[1] && n[1] < n[2]) {
                return Err(LagrangeError::Support(format!(
                    "nodes of dimension {k} are not strictly increasing: {n:?}"
                )));
            }
        }
        let expected = 3usize.pow(nodes.len() as u32);
        if supports.len() != expected {
            return Err(LagrangeError::Support(format!(
                "{} supports for a {}-dimensional grid; expected {expected}",
                supports.len(),
                nodes.len()
            )));
        }
        let (n_i, q) = (supports[0].n_i, supports[0].q);
        for (idx, s) in supports.iter().enumerate() {
            if s.n_i != n_i || s.q != q {
                return Err(LagrangeError::Support(format!(
                    "support {idx} has shape (n_i={}, q={}), expected (n_i={n_i}, q={q})",
                    s.n_i, s.q
                )));
            }
        }
        Ok(Self { nodes, supports })
    }

    /// Number of parameter dimensions.
    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    /// Evaluates the tensor-product interpolant at `theta`.
    pub fn interpolate(&self, theta: &[f64]) -> Result<LagrangeValue, LagrangeError> {
        let d = self.dim();
        if theta.len() != d {
            return Err(LagrangeError::Dimension(format!(
                "point has {} coordinates, grid has {d} dimensions",
                theta.len()
            )));
        }
        let mut extrapolated = false;
        // Quadratic Lagrange basis weights per dimension.
        let mut basis = Vec::with_capacity(d);
        for (k, n) in self.nodes.iter().enumerate() {
            let x = theta[k];
            if x < n[0] || x > n[2] {
                extrapolated = true;
            }
            let mut w = [0.0; 3];
            for i in 0..3 {
                let mut l = 1.0;
                for j in 0..3 {
                    if j != i {
                        l *= (x - n[j]) / (n[i] - n[j]);
                    }
                }
                w[i] = l;
            }
            basis.push(w);
        }

        let template = &self.supports[0];
        let r = template.r();
        let mut mhat = DMatrix::zeros(r, r);
        let mut khat = DMatrix::zeros(r, r);
        let mut fhat = DVector::zeros(r);
        for (idx, s) in self.supports.iter().enumerate() {
            let mut w = 1.0;
            let mut rem = idx;
            for k in (0..d).rev() {
                w *= basis[k][rem % 3];
                rem /= 3;
            }
            if w == 0.0 {
                continue;
            }
            mhat += &s.mhat * w;
            khat += &s.khat * w;
            fhat += &s.fhat * w;
        }
        Ok(LagrangeValue {
            cb: CBReduced {
                mhat,
                khat,
                fhat,
                n_i: template.n_i,
                q: template.q,
                provenance: Provenance::Standard {
                    theta: theta.to_vec(),
                },
            },
            extrapolated,
        })
    }
}
