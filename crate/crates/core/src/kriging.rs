//! Ordinary Kriging interpolation over normalized design points.
//!
//! Each output coordinate gets a constant-trend Gaussian-process model with
//! anisotropic Gaussian correlation `exp(-Σ_k θ_k Δx_k²)` and a fixed nugget
//! on the correlation diagonal. Correlation lengths are chosen by maximizing
//! the concentrated log-likelihood with a deterministic multi-start
//! coordinate search over `log10 θ_k ∈ [-3, 3]`; on large training sets the
//! likelihood is evaluated on a leading subset and the final generalized
//! least-squares fit uses every sample.
//!
//! Leave-one-out residuals come from the bordered correlation system without
//! refitting: with `B = [[R, 1], [1ᵀ, 0]]`, the residual of sample `i` is
//! `γ_i / [B⁻¹]_ii`, identical to an explicit refit that holds the
//! correlation lengths fixed.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::LinalgError;

/// Errors raised by Kriging fitting or prediction.
#[derive(Debug, Error)]
pub enum KrigingError {
    /// Fewer samples than the trend and correlation model can support.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    /// Two training inputs coincide (closer than 1e-12).
    #[error("duplicate inputs: {0}")]
    DuplicateInput(String),
    /// No admissible correlation model: factorization failed.
    #[error("kriging fit failed: {0}")]
    Fit(String),
    /// Mismatched shapes.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// A dense decomposition failed.
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Fitting controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KrigingParams {
    /// Diagonal regularization of the correlation matrix.
    pub nugget: f64,
    /// Multi-start values for every `log10 θ_k` coordinate.
    pub starts: Vec<f64>,
    /// Fit one set of correlation lengths for all outputs instead of one per
    /// output.
    pub shared_lengths: bool,
    /// Skip the likelihood search and use these `log10 θ_k` directly.
    pub fixed_log10_theta: Option<Vec<f64>>,
    /// Likelihood evaluations use at most this many leading samples; the
    /// final weights always use the full set.
    pub mle_subset: usize,
}

impl Default for KrigingParams {
    fn default() -> Self {
        Self {
            nugget: 1e-10,
            starts: vec![-1.0, 0.5, 2.0],
            shared_lengths: false,
            fixed_log10_theta: None,
            mle_subset: 300,
        }
    }
}

/// Fitted weights of one output coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KrigingOutput {
    /// Constant trend.
    pub beta: f64,
    /// Process weights, one per training sample.
    pub gamma: DVector<f64>,
    /// Correlation exponents, one per input dimension (log10 space).
    pub log10_theta: Vec<f64>,
}

/// A multi-output ordinary Kriging interpolator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KrigingModel {
    /// Training inputs in normalized coordinates, one row per sample.
    pub inputs: DMatrix<f64>,
    /// One fitted set of weights per output coordinate.
    pub outputs: Vec<KrigingOutput>,
    /// Diagonal regularization used throughout.
    pub nugget: f64,
}

impl KrigingModel {
    /// Number of input dimensions.
    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    /// Predicts all output coordinates at a normalized point:
    /// `ŷ = β + r(x)ᵀ γ` per output.
    pub fn predict(&self, x: &[f64]) -> Result<DVector<f64>, KrigingError> {
        if x.len() != self.dim() {
            return Err(KrigingError::Dimension(format!(
                "point has {} coordinates, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        let n = self.inputs.nrows();
        let mut result = DVector::zeros(self.outputs.len());
        for (c, out) in self.outputs.iter().enumerate() {
            let theta: Vec<f64> = out.log10_theta.iter().map(|&e| 10f64.powf(e)).collect();
            let mut acc = out.beta;
            for i in 0..n {
                let mut s = 0.0;
                for (k, &t) in theta.iter().enumerate() {
                    let dx = self.inputs[(i, k)] - x[k];
                    s += t * dx * dx;
                }
                acc += out.gamma[i] * (-s).exp();
            }
            result[c] = acc;
        }
        Ok(result)
    }
}

fn correlation_matrix(inputs: &DMatrix<f64>, theta: &[f64], nugget: f64) -> DMatrix<f64> {
    let n = inputs.nrows();
    let d = inputs.ncols();
    let mut r = DMatrix::zeros(n, n);
    for i in 0..n {
        r[(i, i)] = 1.0 + nugget;
        for j in 0..i {
            let mut s = 0.0;
            for k in 0..d {
                let dx = inputs[(i, k)] - inputs[(j, k)];
                s += theta[k] * dx * dx;
            }
            let v = (-s).exp();
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

/// Generalized least squares of a constant trend given a factored
/// correlation matrix: returns `(β, γ, σ², log det R)`.
fn gls(chol: &Cholesky<f64, Dyn>, z: &DVector<f64>) -> (f64, DVector<f64>, f64, f64) {
    let n = z.len();
    let ones = DVector::repeat(n, 1.0);
    let rinv_ones = chol.solve(&ones);
    let rinv_z = chol.solve(z);
    let beta = ones.dot(&rinv_z) / ones.dot(&rinv_ones);
    let residual = z - &ones * beta;
    let gamma = chol.solve(&residual);
    // σ² floored so exactly-constant outputs stay well-defined.
    let sigma2 = (residual.dot(&gamma) / n as f64).max(1e-30);
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|&v| v.ln()).sum::<f64>();
    (beta, gamma, sigma2, logdet)
}

/// The interpolation defect at training point `i` is exactly `nugget · γ_i`
/// (prediction correlations carry no nugget). Correlation lengths whose
/// weights amplify the nugget beyond this fraction of the output scale are
/// inadmissible: they would break the interpolating property.
const DEFECT_FRACTION: f64 = 1e-6;

fn nugget_defect_ok(gamma: &DVector<f64>, z: &DVector<f64>, nugget: f64) -> bool {
    nugget * gamma.amax() <= DEFECT_FRACTION * z.amax().max(1e-12)
}

/// Concentrated log-likelihood (up to constants) summed over output columns
/// at the given correlation exponents; `-inf` when the correlation matrix is
/// not positive definite or the nugget defect exceeds its budget.
fn likelihood(inputs: &DMatrix<f64>, zs: &[DVector<f64>], v: &[f64], nugget: f64) -> f64 {
    let theta: Vec<f64> = v.iter().map(|&e| 10f64.powf(e)).collect();
    let r = correlation_matrix(inputs, &theta, nugget);
    let Some(chol) = Cholesky::new(r) else {
        return f64::NEG_INFINITY;
    };
    let mut total = 0.0;
    for z in zs {
        let (_, gamma, sigma2, logdet) = gls(&chol, z);
        if !nugget_defect_ok(&gamma, z, nugget) {
            return f64::NEG_INFINITY;
        }
        total += -0.5 * (z.len() as f64 * sigma2.ln() + logdet);
    }
    total
}

/// Deterministic multi-start coordinate maximization of the concentrated
/// log-likelihood over `log10 θ ∈ [-3, 3]^d`: per coordinate, a coarse
/// half-decade grid followed by halving-step refinement; sweeps repeat until
/// no coordinate improves; the best start wins, earlier starts breaking ties.
fn search_lengths(
    inputs: &DMatrix<f64>,
    zs: &[DVector<f64>],
    params: &KrigingParams,
) -> Result<Vec<f64>, KrigingError> {
    let d = inputs.ncols();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for &start in &params.starts {
        let mut v = vec![start.clamp(-3.0, 3.0); d];
        let mut current = likelihood(inputs, zs, &v, params.nugget);
        for _ in 0..12 {
            let mut improved = false;
            for k in 0..d {
                let mut best_k = v[k];
                let mut best_ll = current;
                let try_candidate = |cand: f64, best_k: &mut f64, best_ll: &mut f64, v: &mut [f64]| {
                    v[k] = cand;
                    let ll = likelihood(inputs, zs, v, params.nugget);
                    if ll > *best_ll + 1e-10 {
                        *best_ll = ll;
                        *best_k = cand;
                    }
                };
                for g in 0..=12 {
                    try_candidate(-3.0 + 0.5 * g as f64, &mut best_k, &mut best_ll, &mut v);
                }
                let mut step = 0.25;
                while step >= 0.01 {
                    for cand in [best_k - step, best_k + step] {
                        if (-3.0..=3.0).contains(&cand) {
                            try_candidate(cand, &mut best_k, &mut best_ll, &mut v);
                        }
                    }
                    step *= 0.5;
                }
                v[k] = best_k;
                if best_ll > current + 1e-10 {
                    current = best_ll;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
        if best.as_ref().is_none_or(|(ll, _)| current > ll + 1e-12) {
            best = Some((current, v));
        }
    }
    let (ll, v) = best.expect("at least one start");
    if ll == f64::NEG_INFINITY {
        return Err(KrigingError::Fit(
            "correlation matrix is not positive definite anywhere in the search range".into(),
        ));
    }
    Ok(v)
}

fn check_inputs(inputs: &DMatrix<f64>, outputs: &DMatrix<f64>) -> Result<(), KrigingError> {
    let n = inputs.nrows();
    let d = inputs.ncols();
    if outputs.nrows() != n {
        return Err(KrigingError::Dimension(format!(
            "{n} input rows but {} output rows",
            outputs.nrows()
        )));
    }
    if d == 0 || outputs.ncols() == 0 {
        return Err(KrigingError::Dimension("empty inputs or outputs".into()));
    }
    if n < d + 2 {
        return Err(KrigingError::InsufficientData(format!(
            "{n} samples for {d} dimensions; need at least d + 2 = {}",
            d + 2
        )));
    }
    for i in 0..n {
        for j in 0..i {
            let dist2: f64 = (0..d)
                .map(|k| (inputs[(i, k)] - inputs[(j, k)]).powi(2))
                .sum();
            if dist2 < 1e-24 {
                return Err(KrigingError::DuplicateInput(format!(
                    "samples {j} and {i} coincide (distance {})",
                    dist2.sqrt()
                )));
            }
        }
    }
    Ok(())
}

/// Fits a multi-output ordinary Kriging model on normalized inputs.
pub fn kriging_fit(
    inputs: &DMatrix<f64>,
    outputs: &DMatrix<f64>,
    params: &KrigingParams,
) -> Result<KrigingModel, KrigingError> {
    check_inputs(inputs, outputs)?;
    let n = inputs.nrows();
    let d = inputs.ncols();
    let n_out = outputs.ncols();

    let subset = params.mle_subset.max(d + 2).min(n);
    let mle_inputs = inputs.rows(0, subset).into_owned();
    let mle_outputs = outputs.rows(0, subset).into_owned();

    let lengths: Vec<Vec<f64>> = if let Some(fixed) = &params.fixed_log10_theta {
        if fixed.len() != d {
            return Err(KrigingError::Dimension(format!(
                "{} fixed correlation exponents for {d} dimensions",
                fixed.len()
            )));
        }
        vec![fixed.clone(); n_out]
    } else if params.shared_lengths {
        let zs: Vec<DVector<f64>> = (0..n_out).map(|c| mle_outputs.column(c).into_owned()).collect();
        let v = search_lengths(&mle_inputs, &zs, params)?;
        vec![v; n_out]
    } else {
        (0..n_out)
            .map(|c| {
                let z = mle_outputs.column(c).into_owned();
                search_lengths(&mle_inputs, &[z], params)
            })
            .collect::<Result<_, _>>()?
    };

    // Final weights on the full training set; consecutive outputs sharing
    // lengths reuse the factorization. When the lengths came from the
    // likelihood (evaluated on the subset), the full-set fit may exceed the
    // nugget-defect budget; shortening the correlation deterministically
    // until it holds restores the interpolating property. Explicitly fixed
    // lengths are honored verbatim.
    let mut fitted = Vec::with_capacity(n_out);
    let mut cached: Option<(Vec<f64>, Cholesky<f64, Dyn>)> = None;
    for (c, start) in lengths.iter().enumerate() {
        let z = outputs.column(c).into_owned();
        let mut current = start.clone();
        loop {
            let needs_new = cached.as_ref().is_none_or(|(v, _)| *v != current);
            if needs_new {
                let theta: Vec<f64> = current.iter().map(|&e| 10f64.powf(e)).collect();
                let r = correlation_matrix(inputs, &theta, params.nugget);
                let chol = Cholesky::new(r).ok_or_else(|| {
                    KrigingError::Fit(format!(
                        "correlation matrix not positive definite at log10 θ = {current:?}"
                    ))
                })?;
                cached = Some((current.clone(), chol));
            }
            let (_, chol) = cached.as_ref().expect("factorization cached");
            let (beta, gamma, _, _) = gls(chol, &z);
            let done = params.fixed_log10_theta.is_some()
                || nugget_defect_ok(&gamma, &z, params.nugget)
                || current.iter().all(|&v| v >= 3.0);
            if done {
                fitted.push(KrigingOutput {
                    beta,
                    gamma,
                    log10_theta: current.clone(),
                });
                break;
            }
            for v in &mut current {
                *v = (*v + 0.25).min(3.0);
            }
        }
    }
    Ok(KrigingModel {
        inputs: inputs.clone(),
        outputs: fitted,
        nugget: params.nugget,
    })
}

/// Leave-one-out residuals `z_i - ŷ_{-i}(x_i)` per sample and output, with
/// correlation lengths held at their fitted values. Uses the bordered system
/// `B = [[R, 1], [1ᵀ, 0]]`: the residual is `γ_i / [B⁻¹]_ii`.
pub fn loo_residuals(
    model: &KrigingModel,
    outputs: &DMatrix<f64>,
) -> Result<DMatrix<f64>, KrigingError> {
    let n = model.inputs.nrows();
    if outputs.nrows() != n || outputs.ncols() != model.outputs.len() {
        return Err(KrigingError::Dimension(format!(
            "outputs are {}x{}, model was fit on {n} samples x {} outputs",
            outputs.nrows(),
            outputs.ncols(),
            model.outputs.len()
        )));
    }
    let mut residuals = DMatrix::zeros(n, model.outputs.len());
    let mut cached: Option<(Vec<f64>, DMatrix<f64>)> = None;
    for (c, out) in model.outputs.iter().enumerate() {
        let needs_new = cached.as_ref().is_none_or(|(v, _)| *v != out.log10_theta);
        if needs_new {
            let theta: Vec<f64> = out.log10_theta.iter().map(|&e| 10f64.powf(e)).collect();
            let r = correlation_matrix(&model.inputs, &theta, model.nugget);
            let mut b = DMatrix::zeros(n + 1, n + 1);
            b.view_mut((0, 0), (n, n)).copy_from(&r);
            for i in 0..n {
                b[(i, n)] = 1.0;
                b[(n, i)] = 1.0;
            }
            let binv = b.try_inverse().ok_or_else(|| {
                KrigingError::Fit("bordered correlation system is singular".into())
            })?;
            cached = Some((out.log10_theta.clone(), binv));
        }
        let (_, binv) = cached.as_ref().expect("inverse cached");
        let z = outputs.column(c);
        // a = B⁻¹ [z; 0] stacks the process weights over the trend.
        for i in 0..n {
            let mut gamma_i = 0.0;
            for j in 0..n {
                gamma_i += binv[(i, j)] * z[j];
            }
            residuals[(i, c)] = gamma_i / binv[(i, i)];
        }
    }
    Ok(residuals)
}
