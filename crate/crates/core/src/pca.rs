//! PCA compression of reduced-matrix features.
//!
//! A reduced model `(M̂, K̂, F̂)` of dimension `r` flattens into one feature
//! vector of length `(2r+1)·r`: the rows of `M̂`, the rows of `K̂`, then `F̂ᵀ`
//! (plus the rows of a damping matrix when that block is enabled). A training
//! set of such vectors is centered by its column mean and compressed onto the
//! leading right-singular directions; surrogates interpolate in the latent
//! space and reconstruct matrices from latent coordinates.
//!
//! Reconstruction quality is measured spectrally: the maximum relative
//! deviation among the five highest free-free natural frequencies of the
//! reduced pair, in percent.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cb::{CBReduced, Provenance};
use crate::linalg::{sym_generalized_eig, svd, LinalgError};

/// Errors raised by feature flattening or PCA.
#[derive(Debug, Error)]
pub enum PcaError {
    /// Fewer training rows than the method requires.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    /// Inconsistent feature lengths or latent dimensions.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// A reconstructed model is not physically meaningful.
    #[error("reconstruction defect: {0}")]
    ReconstructionDefect(String),
    /// A decomposition failed.
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// A flattened reduced model.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    /// Rows of `M̂`, rows of `K̂`, `F̂ᵀ`, then rows of `Ĉ` when enabled.
    pub x: DVector<f64>,
    /// Reduced dimension the vector was flattened from.
    pub r: usize,
    /// Whether a damping block follows the load block.
    pub damping: bool,
}

/// Feature length for a reduced dimension: `(2r+1)·r`, plus `r²` with a
/// damping block.
pub fn feature_len(r: usize, damping: bool) -> usize {
    (2 * r + 1) * r + if damping { r * r } else { 0 }
}

fn push_rows(x: &mut Vec<f64>, a: &DMatrix<f64>) {
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            x.push(a[(i, j)]);
        }
    }
}

/// Flattens a reduced model into its feature vector (no damping block).
pub fn features_from_cb(cb: &CBReduced) -> FeatureVector {
    let r = cb.r();
    let mut x = Vec::with_capacity(feature_len(r, false));
    push_rows(&mut x, &cb.mhat);
    push_rows(&mut x, &cb.khat);
    x.extend(cb.fhat.iter());
    FeatureVector {
        x: DVector::from_vec(x),
        r,
        damping: false,
    }
}

/// Flattens a reduced model together with a reduced damping matrix.
pub fn features_from_cb_with_damping(
    cb: &CBReduced,
    chat: &DMatrix<f64>,
) -> Result<FeatureVector, PcaError> {
    let r = cb.r();
    if chat.nrows() != r || chat.ncols() != r {
        return Err(PcaError::Dimension(format!(
            "damping block is {}x{} for reduced dimension {r}",
            chat.nrows(),
            chat.ncols()
        )));
    }
    let mut x = Vec::with_capacity(feature_len(r, true));
    push_rows(&mut x, &cb.mhat);
    push_rows(&mut x, &cb.khat);
    x.extend(cb.fhat.iter());
    push_rows(&mut x, chat);
    Ok(FeatureVector {
        x: DVector::from_vec(x),
        r,
        damping: true,
    })
}

/// Rebuilds a reduced model from a feature vector, symmetrizing `M̂` and `K̂`.
///
/// Returns the model, the damping block if the layout carries one, and the
/// largest absolute entry change the symmetrization applied — exact
/// round-trips of symmetric models report zero.
pub fn features_to_cb(
    x: &[f64],
    n_i: usize,
    q: usize,
    damping: bool,
    provenance: Provenance,
) -> Result<(CBReduced, Option<DMatrix<f64>>, f64), PcaError> {
    let r = n_i + q;
    let expect = feature_len(r, damping);
    if x.len() != expect {
        return Err(PcaError::Dimension(format!(
            "feature vector has {} entries, layout (r = {r}, damping = {damping}) needs {expect}",
            x.len()
        )));
    }
    let mhat_raw = DMatrix::from_row_slice(r, r, &x[0..r * r]);
    let khat_raw = DMatrix::from_row_slice(r, r, &x[r * r..2 * r * r]);
    let fhat = DVector::from_column_slice(&x[2 * r * r..2 * r * r + r]);
    let chat = damping.then(|| {
        let lo = 2 * r * r + r;
        DMatrix::from_row_slice(r, r, &x[lo..lo + r * r])
    });
    let mut delta = 0.0f64;
    let mut symmetrize = |a: &DMatrix<f64>| {
        let sym = (a + a.transpose()) * 0.5;
        delta = delta.max((&sym - a).abs().max());
        sym
    };
    let mhat = symmetrize(&mhat_raw);
    let khat = symmetrize(&khat_raw);
    let cb = CBReduced {
        mhat,
        khat,
        fhat,
        n_i,
        q,
        provenance,
    };
    Ok((cb, chat, delta))
}

/// A fitted PCA basis over feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcaModel {
    /// Column mean of the training features.
    pub mean: DVector<f64>,
    /// Leading right-singular directions, one column per latent coordinate;
    /// orthonormal.
    pub q_mat: DMatrix<f64>,
    /// All singular values of the centered training matrix, descending.
    pub singular_values: DVector<f64>,
    /// Latent dimension.
    pub u: usize,
}

impl PcaModel {
    /// Latent coordinates of a feature vector.
    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>, PcaError> {
        if x.len() != self.mean.len() {
            return Err(PcaError::Dimension(format!(
                "feature vector has {} entries, model expects {}",
                x.len(),
                self.mean.len()
            )));
        }
        Ok(self.q_mat.transpose() * (x - &self.mean))
    }

    /// Feature vector reconstructed from latent coordinates.
    pub fn reconstruct(&self, y: &DVector<f64>) -> Result<DVector<f64>, PcaError> {
        if y.len() != self.u {
            return Err(PcaError::Dimension(format!(
                "latent vector has {} entries, model has u = {}",
                y.len(),
                self.u
            )));
        }
        Ok(&self.mean + &self.q_mat * y)
    }
}

fn centered(xdata: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let k = xdata.nrows();
    let mean = DVector::from_fn(xdata.ncols(), |j, _| xdata.column(j).sum() / k as f64);
    let mut c = xdata.clone();
    for i in 0..k {
        for j in 0..xdata.ncols() {
            c[(i, j)] -= mean[j];
        }
    }
    (mean, c)
}

/// Fits a PCA basis with a fixed latent dimension `u`.
pub fn pca_fit(xdata: &DMatrix<f64>, u: usize) -> Result<PcaModel, PcaError> {
    let k = xdata.nrows();
    let p = xdata.ncols();
    if k < 2 {
        return Err(PcaError::InsufficientData(format!(
            "{k} training rows; PCA needs at least 2"
        )));
    }
    if u == 0 || u > k.min(p) {
        return Err(PcaError::Dimension(format!(
            "latent dimension {u} outside 1..={} for a {k}x{p} training matrix",
            k.min(p)
        )));
    }
    let (mean, c) = centered(xdata);
    let s = svd(&c);
    Ok(PcaModel {
        mean,
        q_mat: s.v.columns(0, u).into_owned(),
        singular_values: s.singular_values,
        u,
    })
}

/// Fits a PCA basis in threshold mode: the smallest latent dimension whose
/// reconstruction of every training row stays below `threshold_percent` on
/// the five-highest-frequency metric. The feature layout `(n_i, q, damping)`
/// is needed to evaluate that metric on training rows.
pub fn pca_fit_threshold(
    xdata: &DMatrix<f64>,
    threshold_percent: f64,
    n_i: usize,
    q: usize,
    damping: bool,
) -> Result<PcaModel, PcaError> {
    let k = xdata.nrows();
    let p = xdata.ncols();
    if k < 2 {
        return Err(PcaError::InsufficientData(format!(
            "{k} training rows; PCA needs at least 2"
        )));
    }
    if p != feature_len(n_i + q, damping) {
        return Err(PcaError::Dimension(format!(
            "training rows have {p} entries, layout (r = {}, damping = {damping}) needs {}",
            n_i + q,
            feature_len(n_i + q, damping)
        )));
    }
    let originals: Vec<CBReduced> = (0..k)
        .map(|i| {
            let row: Vec<f64> = xdata.row(i).iter().copied().collect();
            features_to_cb(&row, n_i, q, damping, Provenance::Standard { theta: vec![] })
                .map(|(cb, _, _)| cb)
        })
        .collect::<Result<_, _>>()?;

    let u_max = k.min(p);
    let full = pca_fit(xdata, u_max)?;
    'grow: for u in 1..=u_max {
        let model = PcaModel {
            mean: full.mean.clone(),
            q_mat: full.q_mat.columns(0, u).into_owned(),
            singular_values: full.singular_values.clone(),
            u,
        };
        for (i, original) in originals.iter().enumerate() {
            let row = DVector::from_iterator(p, xdata.row(i).iter().copied());
            let recon = model.reconstruct(&model.project(&row)?)?;
            let (cb, _, _) = features_to_cb(
                recon.as_slice(),
                n_i,
                q,
                damping,
                Provenance::Standard { theta: vec![] },
            )?;
            // A defective reconstruction (non-PD mass) just means u is still
            // too small.
            match reconstruction_error(original, &cb) {
                Ok(e) if e < threshold_percent => {}
                _ => continue 'grow,
            }
        }
        return Ok(model);
    }
    Err(PcaError::ReconstructionDefect(format!(
        "no latent dimension up to {u_max} reaches a {threshold_percent}% reconstruction error"
    )))
}

/// Five highest free-free natural frequencies of a reduced pair, ascending.
fn top_frequencies(cb: &CBReduced) -> Result<Vec<f64>, PcaError> {
    let r = cb.r();
    let take = r.min(5);
    let eig = sym_generalized_eig(&cb.khat, &cb.mhat, r).map_err(|e| match e {
        LinalgError::Decomposition(msg) => PcaError::ReconstructionDefect(format!(
            "reduced mass matrix is not positive definite: {msg}"
        )),
        other => PcaError::Linalg(other),
    })?;
    Ok(eig
        .values
        .iter()
        .rev()
        .take(take)
        .rev()
        .map(|&l| l.max(0.0).sqrt())
        .collect())
}

/// Maximum relative deviation among the five highest free-free natural
/// frequencies of two reduced models, in percent; the first argument supplies
/// the reference frequencies.
pub fn reconstruction_error(original: &CBReduced, other: &CBReduced) -> Result<f64, PcaError> {
    if original.r() != other.r() {
        return Err(PcaError::Dimension(format!(
            "reduced dimensions differ: {} vs {}",
            original.r(),
            other.r()
        )));
    }
    let f_ref = top_frequencies(original)?;
    let f_other = top_frequencies(other)?;
    let mut worst = 0.0f64;
    for (f, fh) in f_ref.iter().zip(&f_other) {
        if *f <= 0.0 {
            return Err(PcaError::ReconstructionDefect(
                "reference model has a non-positive frequency among its five highest".into(),
            ));
        }
        worst = worst.max((f - fh).abs() / f);
    }
    Ok(worst * 100.0)
}
