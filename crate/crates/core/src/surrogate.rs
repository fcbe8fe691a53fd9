//! Multi-region surrogate of reduced matrices.
//!
//! One region = one common projection basis + one PCA compression of the
//! flattened reduced matrices + one Kriging interpolant per latent
//! coordinate. A support-vector router picks the region for a query point;
//! prediction then runs Kriging in latent space, reconstructs the feature
//! vector, unflattens, and symmetrizes. Regions with too few samples are
//! excluded from training with a warning and refuse to predict.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cb::Provenance;
use crate::cb::CBReduced;
use crate::explore::{ExploreError, ParameterSpace, RegionReference};
use crate::kriging::{kriging_fit, loo_residuals, KrigingError, KrigingModel, KrigingParams};
use crate::model::{ModelError, Substructure};
use crate::pca::{
    features_from_cb, features_to_cb, pca_fit, pca_fit_threshold, reconstruction_error, PcaError,
    PcaModel,
};
use crate::projection::{cb_reduce_common, ConditioningThresholds, ProjectionError};
use crate::svm::{train_multiclass, MulticlassSvm, SvmError, SvmParams};

/// Errors raised while training or evaluating a surrogate.
#[derive(Debug, Error)]
pub enum SurrogateError {
    /// Training preconditions violated.
    #[error("training failed: {0}")]
    Train(String),
    /// Prediction preconditions violated.
    #[error("prediction failed: {0}")]
    Predict(String),
    #[error(transparent)]
    Pca(#[from] PcaError),
    #[error(transparent)]
    Kriging(#[from] KrigingError),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Explore(#[from] ExploreError),
}

/// How many principal directions each region keeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentSize {
    /// Keep exactly this many (clamped to the data rank bound).
    Fixed(usize),
    /// Keep the smallest count whose held-in frequency reconstruction error
    /// stays below this percentage.
    Threshold(f64),
}

/// Training controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    /// Latent dimension policy.
    pub latent: LatentSize,
    /// Whether feature vectors carry a reduced-damping block.
    pub damping: bool,
    /// Kriging fitting controls.
    pub kriging: KrigingParams,
    /// Router training controls.
    pub svm: SvmParams,
    /// Regions with fewer samples are excluded (0 = automatic: d + 2, at
    /// least 3).
    pub min_region_samples: usize,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            latent: LatentSize::Threshold(0.1),
            damping: false,
            kriging: KrigingParams::default(),
            svm: SvmParams::default(),
            min_region_samples: 0,
        }
    }
}

/// One region's trained compression and interpolation stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSurrogate {
    /// 1-based region id, matching the router's classes.
    pub region_id: usize,
    /// Design point whose modes found the region's projection basis.
    pub theta_ref: Vec<f64>,
    /// Feature compression.
    pub pca: PcaModel,
    /// Latent-space interpolant over normalized design coordinates.
    pub kriging: KrigingModel,
    /// Training samples used.
    pub n_samples: usize,
    /// Median held-in frequency reconstruction error, percent.
    pub heldin_median_percent: f64,
    /// Median leave-one-out latent-space error, percent.
    pub loo_latent_median_percent: f64,
    /// Median leave-one-out frequency reconstruction error, percent.
    pub loo_frequency_median_percent: f64,
    /// Median leave-one-out max-abs feature residual; the symmetrization
    /// budget for predictions.
    pub loo_entry_scale: f64,
}

/// A trained multi-region surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiRegionSurrogate {
    /// Trained regions, ascending by id; excluded regions are absent.
    pub regions: Vec<RegionSurrogate>,
    /// Region classifier over the full design space.
    pub router: MulticlassSvm,
    /// Design space the surrogate was trained on.
    pub space: ParameterSpace,
    /// Interface DoF count of the reduced models.
    pub n_i: usize,
    /// Modal coordinate count of the reduced models.
    pub q: usize,
    /// Whether features carry a damping block.
    pub damping: bool,
}

impl MultiRegionSurrogate {
    /// Total reduced dimension.
    pub fn r(&self) -> usize {
        self.n_i + self.q
    }

    /// The trained region with this id, if it was not excluded.
    pub fn region(&self, region_id: usize) -> Option<&RegionSurrogate> {
        self.regions.iter().find(|r| r.region_id == region_id)
    }
}

/// Non-fatal training outcomes.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Human-readable warnings (insufficient regions, clamped latent sizes).
    pub warnings: Vec<String>,
    /// Regions excluded for insufficient samples.
    pub excluded_regions: Vec<usize>,
}

/// One surrogate evaluation.
#[derive(Debug, Clone)]
pub struct SurrogatePrediction {
    /// Predicted reduced matrices in the region's common basis.
    pub cb: CBReduced,
    /// Region the router selected.
    pub region_id: usize,
    /// True when the router had no net decision support for the winner.
    pub low_confidence: bool,
    /// Max-abs entry change from symmetrizing the reconstructed matrices.
    pub symmetrization_delta: f64,
    /// The region's leave-one-out feature residual scale.
    pub loo_entry_scale: f64,
}

/// Error metric for leave-one-out validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LooMetric {
    /// Relative latent-vector error per fold, percent.
    Latent,
    /// Frequency reconstruction error (five highest free-free frequencies)
    /// per fold, percent.
    Frequencies,
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn feature_rows(features: &DMatrix<f64>) -> Vec<DVector<f64>> {
    (0..features.nrows())
        .map(|i| features.row(i).transpose())
        .collect()
}

/// Leave-one-out statistics of one region: latent median %, frequency
/// median %, and the median max-abs feature residual.
fn region_loo(
    pca: &PcaModel,
    kriging: &KrigingModel,
    latents: &DMatrix<f64>,
    features: &DMatrix<f64>,
    n_i: usize,
    q: usize,
    damping: bool,
) -> Result<(f64, f64, f64), SurrogateError> {
    let residuals = loo_residuals(kriging, latents)?;
    let k = latents.nrows();
    let mut latent_errors = Vec::with_capacity(k);
    let mut freq_errors = Vec::with_capacity(k);
    let mut entry_scales = Vec::with_capacity(k);
    for i in 0..k {
        let truth = latents.row(i).transpose();
        let resid = residuals.row(i).transpose();
        latent_errors.push(100.0 * resid.norm() / truth.norm().max(1e-12));
        let predicted_latent = &truth - &resid;
        let predicted_feature = pca.reconstruct(&predicted_latent)?;
        let true_feature = features.row(i).transpose();
        entry_scales.push((&predicted_feature - &true_feature).amax());
        let stub = Provenance::Standard { theta: vec![] };
        let (cb_true, _, _) =
            features_to_cb(true_feature.as_slice(), n_i, q, damping, stub.clone())?;
        let (cb_pred, _, _) = features_to_cb(predicted_feature.as_slice(), n_i, q, damping, stub)?;
        match reconstruction_error(&cb_true, &cb_pred) {
            Ok(e) => freq_errors.push(e),
            // A fold whose prediction is not physically evaluable counts as
            // a 100% miss rather than aborting validation.
            Err(PcaError::ReconstructionDefect(_)) => freq_errors.push(100.0),
            Err(e) => return Err(e.into()),
        }
    }
    Ok((median(latent_errors), median(freq_errors), median(entry_scales)))
}

/// Median leave-one-out error of a trained region on its training data,
/// refitting semantics with correlation lengths held fixed.
pub fn loo_validate(
    region: &RegionSurrogate,
    features: &DMatrix<f64>,
    n_i: usize,
    q: usize,
    damping: bool,
    metric: LooMetric,
) -> Result<f64, SurrogateError> {
    if features.nrows() < 3 {
        return Err(SurrogateError::Train(format!(
            "{} samples; leave-one-out needs at least 3",
            features.nrows()
        )));
    }
    let rows = feature_rows(features);
    let mut latents = DMatrix::zeros(rows.len(), region.pca.u);
    for (i, row) in rows.iter().enumerate() {
        latents.row_mut(i).tr_copy_from(&region.pca.project(row)?);
    }
    let (latent_median, freq_median, _) = region_loo(
        &region.pca,
        &region.kriging,
        &latents,
        features,
        n_i,
        q,
        damping,
    )?;
    Ok(match metric {
        LooMetric::Latent => latent_median,
        LooMetric::Frequencies => freq_median,
    })
}

/// Trains one region from its feature rows and normalized design points.
pub fn train_region(
    region_id: usize,
    theta_ref: &[f64],
    features: &DMatrix<f64>,
    thetas_norm: &DMatrix<f64>,
    n_i: usize,
    q: usize,
    cfg: &SurrogateConfig,
) -> Result<RegionSurrogate, SurrogateError> {
    let k = features.nrows();
    let p = features.ncols();
    if thetas_norm.nrows() != k {
        return Err(SurrogateError::Train(format!(
            "{k} feature rows but {} design points",
            thetas_norm.nrows()
        )));
    }
    let pca = match cfg.latent {
        LatentSize::Fixed(u) => pca_fit(features, u.clamp(1, k.min(p)))?,
        LatentSize::Threshold(t) => pca_fit_threshold(features, t, n_i, q, cfg.damping)?,
    };
    let rows = feature_rows(features);
    let mut latents = DMatrix::zeros(k, pca.u);
    for (i, row) in rows.iter().enumerate() {
        latents.row_mut(i).tr_copy_from(&pca.project(row)?);
    }
    let kriging = kriging_fit(thetas_norm, &latents, &cfg.kriging)?;

    // Held-in frequency error of the compression alone.
    let mut heldin = Vec::with_capacity(k);
    for row in &rows {
        let reconstructed = pca.reconstruct(&pca.project(row)?)?;
        let stub = Provenance::Standard { theta: vec![] };
        let (cb_true, _, _) = features_to_cb(row.as_slice(), n_i, q, cfg.damping, stub.clone())?;
        let (cb_hat, _, _) =
            features_to_cb(reconstructed.as_slice(), n_i, q, cfg.damping, stub)?;
        heldin.push(reconstruction_error(&cb_true, &cb_hat)?);
    }
    let (loo_latent, loo_freq, loo_entry_scale) =
        region_loo(&pca, &kriging, &latents, features, n_i, q, cfg.damping)?;

    Ok(RegionSurrogate {
        region_id,
        theta_ref: theta_ref.to_vec(),
        pca,
        kriging,
        n_samples: k,
        heldin_median_percent: median(heldin),
        loo_latent_median_percent: loo_latent,
        loo_frequency_median_percent: loo_freq,
        loo_entry_scale,
    })
}

/// Trains the full multi-region surrogate from tagged samples: reduces each
/// sample in its region's common basis, compresses and interpolates per
/// region, and trains the router on every sample.
pub fn train_surrogate<F>(
    thetas: &[Vec<f64>],
    assignments: &[usize],
    references: &[RegionReference],
    space: &ParameterSpace,
    thresholds: &ConditioningThresholds,
    cfg: &SurrogateConfig,
    build: F,
) -> Result<(MultiRegionSurrogate, TrainingReport), SurrogateError>
where
    F: Fn(&[f64]) -> Result<Substructure, ModelError>,
{
    if thetas.is_empty() || references.is_empty() {
        return Err(SurrogateError::Train("no samples or no regions".into()));
    }
    if thetas.len() != assignments.len() {
        return Err(SurrogateError::Train(format!(
            "{} samples but {} region assignments",
            thetas.len(),
            assignments.len()
        )));
    }
    let m = references.len();
    if assignments.iter().any(|&a| a == 0 || a > m) {
        return Err(SurrogateError::Train(format!(
            "region assignments must lie in 1..={m}"
        )));
    }
    if cfg.damping {
        return Err(SurrogateError::Train(
            "damping feature blocks are not produced by the finite-element training path".into(),
        ));
    }
    let q = references[0].basis.q;
    let d = space.dim();
    let min_samples = if cfg.min_region_samples == 0 {
        (d + 2).max(3)
    } else {
        cfg.min_region_samples
    };

    // Reduce every sample in its region's basis.
    let mut n_i = None;
    let mut features_by_region: Vec<Vec<DVector<f64>>> = vec![Vec::new(); m];
    let mut thetas_by_region: Vec<Vec<Vec<f64>>> = vec![Vec::new(); m];
    for (theta, &region) in thetas.iter().zip(assignments) {
        let sub = build(theta)?;
        let cb = cb_reduce_common(&sub, &references[region - 1].basis, thresholds)?;
        if *n_i.get_or_insert(cb.n_i) != cb.n_i {
            return Err(SurrogateError::Train(
                "samples disagree on interface dimension".into(),
            ));
        }
        features_by_region[region - 1].push(features_from_cb(&cb).x);
        thetas_by_region[region - 1].push(theta.clone());
    }
    let n_i = n_i.expect("at least one sample");

    let mut report = TrainingReport::default();
    let mut regions = Vec::new();
    for (idx, reference) in references.iter().enumerate() {
        let k = features_by_region[idx].len();
        if k < min_samples {
            report.warnings.push(format!(
                "region {} excluded: {k} samples, need {min_samples}",
                reference.region_id
            ));
            report.excluded_regions.push(reference.region_id);
            continue;
        }
        let p = features_by_region[idx][0].len();
        let features = DMatrix::from_fn(k, p, |i, j| features_by_region[idx][i][j]);
        let thetas_norm = DMatrix::from_fn(k, d, |i, j| {
            space.normalize(&thetas_by_region[idx][i])[j]
        });
        regions.push(train_region(
            reference.region_id,
            &reference.theta,
            &features,
            &thetas_norm,
            n_i,
            q,
            cfg,
        )?);
    }
    if regions.is_empty() {
        return Err(SurrogateError::Train(format!(
            "no region has the required {min_samples} samples"
        )));
    }
    let router = train_multiclass(thetas, assignments, &cfg.svm, &space.bounds)?;
    Ok((
        MultiRegionSurrogate {
            regions,
            router,
            space: space.clone(),
            n_i,
            q,
            damping: cfg.damping,
        },
        report,
    ))
}

/// Routes a design point and predicts its reduced matrices; a low-confidence
/// route is a warning carried in the result, not a failure.
pub fn predict_cb(
    model: &MultiRegionSurrogate,
    theta: &[f64],
) -> Result<SurrogatePrediction, SurrogateError> {
    if theta.len() != model.space.dim() {
        return Err(SurrogateError::Predict(format!(
            "point has {} coordinates, model has {}",
            theta.len(),
            model.space.dim()
        )));
    }
    let route = model.router.predict_region(theta);
    let region = model.region(route.region_id).ok_or_else(|| {
        SurrogateError::Predict(format!(
            "region {} was excluded at training time",
            route.region_id
        ))
    })?;
    let latent = region.kriging.predict(&model.space.normalize(theta))?;
    let feature = region.pca.reconstruct(&latent)?;
    let (cb, _, delta) = features_to_cb(
        feature.as_slice(),
        model.n_i,
        model.q,
        model.damping,
        Provenance::CommonBasis {
            theta: theta.to_vec(),
            theta_ref: region.theta_ref.clone(),
        },
    )?;
    // Symmetrization must stay within the surrogate's own predictive error.
    debug_assert!(
        delta <= region.loo_entry_scale.max(1e-12),
        "symmetrization delta {delta} exceeds LOO scale {}",
        region.loo_entry_scale
    );
    Ok(SurrogatePrediction {
        cb,
        region_id: route.region_id,
        low_confidence: route.low_confidence,
        symmetrization_delta: delta,
        loo_entry_scale: region.loo_entry_scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explore::latin_hypercube;
    use crate::lagrange::{gaussian_nodes, LagrangeGrid};
    use crate::model::build_resonator_cell;
    use crate::projection::common_basis;
    use std::sync::OnceLock;

    fn thresholds() -> ConditioningThresholds {
        ConditioningThresholds::default()
    }

    /// A single-region resonator training set inside the nominal slab.
    fn resonator_setup() -> (
        Vec<Vec<f64>>,
        Vec<usize>,
        Vec<RegionReference>,
        ParameterSpace,
    ) {
        let space = ParameterSpace::new(vec![(9.8, 13.0), (30.0, 50.0)]).unwrap();
        let thetas = latin_hypercube(25, &space, 17);
        let assignments = vec![1; 25];
        let reference = RegionReference {
            region_id: 1,
            theta: vec![10.0, 40.0],
            basis: common_basis(&build_resonator_cell(10.0, 40.0).unwrap(), 5).unwrap(),
        };
        (thetas, assignments, vec![reference], space)
    }

    fn resonator_model() -> &'static (MultiRegionSurrogate, Vec<Vec<f64>>) {
        static MODEL: OnceLock<(MultiRegionSurrogate, Vec<Vec<f64>>)> = OnceLock::new();
        MODEL.get_or_init(|| {
            let (thetas, assignments, references, space) = resonator_setup();
            let cfg = SurrogateConfig {
                // Effectively lossless: 25 centered samples span ≤ 24 directions.
                latent: LatentSize::Fixed(24),
                ..SurrogateConfig::default()
            };
            let (model, report) = train_surrogate(
                &thetas,
                &assignments,
                &references,
                &space,
                &thresholds(),
                &cfg,
                |t| build_resonator_cell(t[0], t[1]),
            )
            .unwrap();
            assert!(report.excluded_regions.is_empty());
            (model, thetas)
        })
    }

    #[test]
    fn training_points_return_their_own_matrices() {
        let (model, thetas) = resonator_model();
        let reference = common_basis(&build_resonator_cell(10.0, 40.0).unwrap(), 5).unwrap();
        for theta in thetas.iter().take(5) {
            let pred = predict_cb(model, theta).unwrap();
            assert_eq!(pred.region_id, 1);
            assert!(!pred.low_confidence);
            let truth = cb_reduce_common(
                &build_resonator_cell(theta[0], theta[1]).unwrap(),
                &reference,
                &thresholds(),
            )
            .unwrap();
            let m_scale = truth.mhat.amax();
            let k_scale = truth.khat.amax();
            assert!((&pred.cb.mhat - &truth.mhat).amax() / m_scale < 1e-5);
            assert!((&pred.cb.khat - &truth.khat).amax() / k_scale < 1e-5);
            match &pred.cb.provenance {
                Provenance::CommonBasis { theta: t, theta_ref } => {
                    assert_eq!(t, theta);
                    assert_eq!(theta_ref, &vec![10.0, 40.0]);
                }
                other => panic!("unexpected provenance {other:?}"),
            }
        }
    }

    #[test]
    fn symmetrization_stays_within_the_loo_budget() {
        let (model, _) = resonator_model();
        for theta in [[10.5, 35.0], [11.2, 44.0], [12.5, 31.5]] {
            let pred = predict_cb(model, &theta).unwrap();
            assert!(pred.symmetrization_delta <= pred.loo_entry_scale.max(1e-12));
        }
    }

    #[test]
    fn undersized_regions_are_excluded_and_refuse_to_predict() {
        let space = ParameterSpace::new(vec![(7.5, 13.0), (30.0, 50.0)]).unwrap();
        // Region 1: the nominal slab; region 2: below the first boundary,
        // with too few samples to train.
        let slab1 = ParameterSpace::new(vec![(10.0, 13.0), (30.0, 50.0)]).unwrap();
        let mut thetas = latin_hypercube(12, &slab1, 5);
        let mut assignments = vec![1; 12];
        for (l, w) in [(8.0, 35.0), (8.6, 42.0), (9.1, 47.0)] {
            thetas.push(vec![l, w]);
            assignments.push(2);
        }
        let references = vec![
            RegionReference {
                region_id: 1,
                theta: vec![10.0, 40.0],
                basis: common_basis(&build_resonator_cell(10.0, 40.0).unwrap(), 5).unwrap(),
            },
            RegionReference {
                region_id: 2,
                theta: vec![8.5, 40.0],
                basis: common_basis(&build_resonator_cell(8.5, 40.0).unwrap(), 5).unwrap(),
            },
        ];
        let (model, report) = train_surrogate(
            &thetas,
            &assignments,
            &references,
            &space,
            &thresholds(),
            &SurrogateConfig {
                latent: LatentSize::Fixed(8),
                // Sharp kernel so three samples suffice to claim their area.
                svm: SvmParams {
                    gamma: Some(20.0),
                    ..SvmParams::default()
                },
                ..SurrogateConfig::default()
            },
            |t| build_resonator_cell(t[0], t[1]),
        )
        .unwrap();
        assert_eq!(report.excluded_regions, vec![2]);
        assert!(!report.warnings.is_empty());
        assert!(model.region(1).is_some());
        assert!(model.region(2).is_none());
        // The router still knows region 2; predicting there is a hard error.
        let err = predict_cb(&model, &[8.3, 40.0]).unwrap_err();
        assert!(matches!(err, SurrogateError::Predict(_)));
        assert!(err.to_string().contains("excluded"));
    }

    /// Synthetic reduced matrices whose entries are exactly quadratic in θ.
    fn quadratic_cb(theta: &[f64]) -> CBReduced {
        let r = 3;
        let entry = |i: usize, j: usize| {
            let (a, b) = (1.0 + i as f64, 0.5 + j as f64);
            a + b * theta[0]
                + 0.3 * a * theta[1]
                + 0.7 * theta[0] * theta[0]
                + 0.1 * b * theta[0] * theta[1]
                - 0.05 * theta[1] * theta[1]
        };
        let sym = |i: usize, j: usize| 0.5 * (entry(i, j) + entry(j, i));
        CBReduced {
            mhat: DMatrix::from_fn(r, r, |i, j| 10.0 * ((i == j) as u8 as f64) + sym(i, j)),
            khat: DMatrix::from_fn(r, r, |i, j| 40.0 * ((i == j) as u8 as f64) + 2.0 * sym(i, j)),
            fhat: DVector::from_fn(r, |i, _| entry(i, i) - 1.0),
            n_i: 2,
            q: 1,
            provenance: Provenance::Standard {
                theta: theta.to_vec(),
            },
        }
    }

    #[test]
    fn kriging_and_lagrange_agree_on_quadratic_matrices() {
        let space = ParameterSpace::new(vec![(0.8, 1.0), (1.3, 1.5)]).unwrap();
        let thetas = latin_hypercube(20, &space, 23);
        let p = crate::pca::feature_len(3, false);
        let features = DMatrix::from_fn(20, p, |i, j| {
            features_from_cb(&quadratic_cb(&thetas[i])).x[j]
        });
        let thetas_norm = DMatrix::from_fn(20, 2, |i, j| space.normalize(&thetas[i])[j]);
        let cfg = SurrogateConfig {
            latent: LatentSize::Fixed(6),
            ..SurrogateConfig::default()
        };
        let region = train_region(1, &[0.9, 1.4], &features, &thetas_norm, 2, 1, &cfg).unwrap();
        let router = train_multiclass(
            &thetas,
            &vec![1; 20],
            &SvmParams::default(),
            &space.bounds,
        )
        .unwrap();
        let model = MultiRegionSurrogate {
            regions: vec![region],
            router,
            space: space.clone(),
            n_i: 2,
            q: 1,
            damping: false,
        };

        // The quadratic baseline on the same family.
        let nodes = vec![gaussian_nodes(0.9, 0.1), gaussian_nodes(1.4, 0.06)];
        let mut supports = Vec::new();
        for i0 in 0..3 {
            for i1 in 0..3 {
                supports.push(quadratic_cb(&[nodes[0][i0], nodes[1][i1]]));
            }
        }
        let grid = LagrangeGrid::new(nodes, supports).unwrap();

        for theta in [[0.85, 1.35], [0.9, 1.45], [0.95, 1.4], [0.88, 1.33]] {
            let kriged = predict_cb(&model, &theta).unwrap().cb;
            let lagr = grid.interpolate(&theta).unwrap().cb;
            let m_tol = 0.01 * lagr.mhat.amax();
            let k_tol = 0.01 * lagr.khat.amax();
            assert!(
                (&kriged.mhat - &lagr.mhat).amax() < m_tol,
                "theta {theta:?}: mass disagreement"
            );
            assert!(
                (&kriged.khat - &lagr.khat).amax() < k_tol,
                "theta {theta:?}: stiffness disagreement"
            );
        }
    }

    #[test]
    fn loo_validation_is_small_on_smooth_data_and_guards_sample_count() {
        let (model, thetas) = resonator_model();
        let region = model.region(1).unwrap();
        let reference = common_basis(&build_resonator_cell(10.0, 40.0).unwrap(), 5).unwrap();
        let p = crate::pca::feature_len(model.r(), false);
        let features = DMatrix::from_fn(thetas.len(), p, |i, j| {
            let cb = cb_reduce_common(
                &build_resonator_cell(thetas[i][0], thetas[i][1]).unwrap(),
                &reference,
                &thresholds(),
            )
            .unwrap();
            features_from_cb(&cb).x[j]
        });
        let latent =
            loo_validate(region, &features, model.n_i, model.q, false, LooMetric::Latent).unwrap();
        let freq = loo_validate(
            region,
            &features,
            model.n_i,
            model.q,
            false,
            LooMetric::Frequencies,
        )
        .unwrap();
        assert_eq!(latent, region.loo_latent_median_percent);
        assert_eq!(freq, region.loo_frequency_median_percent);
        assert!(freq < 5.0, "frequency LOO median {freq}%");
        assert!(latent.is_finite());

        let tiny = features.rows(0, 2).into_owned();
        assert!(matches!(
            loo_validate(region, &tiny, model.n_i, model.q, false, LooMetric::Latent),
            Err(SurrogateError::Train(_))
        ));
    }

    #[test]
    fn serialized_models_round_trip_exactly() {
        let (model, _) = resonator_model();
        let json = serde_json::to_string(model).unwrap();
        let back: MultiRegionSurrogate = serde_json::from_str(&json).unwrap();
        assert_eq!(*model, back);
    }
}
