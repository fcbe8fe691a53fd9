//! Parameter-space exploration: sampling, conditioning-based labeling, and
//! region tagging.
//!
//! The exploration pipeline decides where (and against which reference) the
//! common-basis projection is trustworthy:
//!
//! 1. [`latin_hypercube`] draws a space-filling, seed-deterministic sample.
//! 2. [`divide_space`] partitions the normalized space into concentric
//!    Chebyshev-distance shells around the nominal point; samples are binned
//!    into shells and processed from the inside out.
//! 3. [`label_samples`] evaluates each sample's fixed-interface modes and
//!    labels it `Accepted`/`Rejected` by the projection diagnostics against
//!    the nominal reference. Once a rejection exists, samples whose nearest
//!    labeled neighbor is `Rejected` are `Skipped` without an eigensolve (the
//!    shortcut never changes an Accepted/Rejected verdict, it only saves
//!    work); a shell that produces zero accepted samples terminates the scan.
//! 4. [`evaluate_tag_inputs`] + [`tag_regions`] form the multi-region path:
//!    every sample's modes are computed upfront (no skipping, no early
//!    termination), then each sample is tested against the existing region
//!    references in creation order and the first reference that accepts it
//!    wins; a sample no reference accepts founds a new region and becomes its
//!    reference.
//!
//! All geometry (distances, shells) lives in min-max normalized coordinates.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::EigenPairs;
use crate::model::{ModelError, Substructure};
use crate::projection::{
    common_basis, diagnostics, fixed_interface_modes_of, CommonBasis, ConditioningThresholds,
    ProjectionDiagnostics, ProjectionError,
};

/// Errors raised during exploration.
#[derive(Debug, Error)]
pub enum ExploreError {
    /// Invalid space, nominal point, or shell configuration.
    #[error("geometry error: {0}")]
    Geometry(String),
    /// A sample's substructure could not be built.
    #[error(transparent)]
    Model(#[from] ModelError),
    /// A projection or eigensolve failed.
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    /// An eigensolve failed.
    #[error(transparent)]
    Linalg(#[from] crate::linalg::LinalgError),
}

/// A rectangular design space with per-dimension bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterSpace {
    /// Per-dimension `(low, high)` bounds, `low < high`.
    pub bounds: Vec<(f64, f64)>,
}

impl ParameterSpace {
    /// Validates bounds.
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self, ExploreError> {
        if bounds.is_empty() {
            return Err(ExploreError::Geometry("empty parameter space".into()));
        }
        for (d, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(ExploreError::Geometry(format!(
                    "dimension {d}: bounds ({lo}, {hi}) must satisfy low < high"
                )));
            }
        }
        Ok(Self { bounds })
    }

    /// Number of dimensions.
    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    /// Min-max normalization of a physical point into `[0,1]^d`.
    pub fn normalize(&self, theta: &[f64]) -> Vec<f64> {
        self.bounds
            .iter()
            .zip(theta)
            .map(|(&(lo, hi), &x)| (x - lo) / (hi - lo))
            .collect()
    }

    /// Inverse of [`ParameterSpace::normalize`].
    pub fn denormalize(&self, u: &[f64]) -> Vec<f64> {
        self.bounds
            .iter()
            .zip(u)
            .map(|(&(lo, hi), &t)| lo + t * (hi - lo))
            .collect()
    }
}

/// Euclidean distance between two physical points in normalized coordinates.
pub fn normalized_distance(space: &ParameterSpace, a: &[f64], b: &[f64]) -> f64 {
    let ua = space.normalize(a);
    let ub = space.normalize(b);
    ua.iter()
        .zip(&ub)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Deterministic Latin hypercube sample of `n` points in physical coordinates.
///
/// Each dimension's `[0,1]` range is split into `n` equal strata; a seeded
/// permutation assigns one stratum per sample and the point is drawn uniformly
/// inside it. The same `(n, space, seed)` always yields the same points.
pub fn latin_hypercube(n: usize, space: &ParameterSpace, seed: u64) -> Vec<Vec<f64>> {
    let d = space.dim();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut coords = vec![vec![0.0f64; n]; d];
    for col in coords.iter_mut() {
        let mut strata: Vec<usize> = (0..n).collect();
        // Fisher-Yates with the shared stream.
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            strata.swap(i, j);
        }
        for (i, &s) in strata.iter().enumerate() {
            let u: f64 = rng.gen();
            col[i] = (s as f64 + u) / n as f64;
        }
    }
    (0..n)
        .map(|i| {
            let u: Vec<f64> = (0..d).map(|k| coords[k][i]).collect();
            space.denormalize(&u)
        })
        .collect()
}

/// Seeded permutation of mode indices that is a single cycle on the 1-based
/// inclusive range `lo..=hi` and the identity elsewhere.
///
/// Column `j` of a permuted mode set is mode `perm[j]` of the original set
/// (0-based). The cycle has no fixed point, so any leading subset that cuts
/// it — `lo ≤ q < hi` in 1-based counting — is missing at least one of its
/// own modes, while subsets containing none or all of the range are merely
/// reordered. The same `(n_modes, lo, hi, seed)` always yields the same
/// permutation.
pub fn mode_swap_permutation(
    n_modes: usize,
    lo: usize,
    hi: usize,
    seed: u64,
) -> Result<Vec<usize>, ExploreError> {
    if lo == 0 || lo >= hi || hi > n_modes {
        return Err(ExploreError::Geometry(format!(
            "swap range ({lo}, {hi}) must be 1-based, increasing, and within {n_modes} modes"
        )));
    }
    let mut perm: Vec<usize> = (0..n_modes).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    // Sattolo's algorithm on the window: every element moves, forming one cycle.
    for i in (lo..hi).rev() {
        let j = rng.gen_range(lo - 1..i);
        perm.swap(i, j);
    }
    Ok(perm)
}

/// Concentric shells around a nominal point, in normalized Chebyshev distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceDivision {
    /// Nominal point in physical coordinates.
    pub theta_o: Vec<f64>,
    /// Nominal point in normalized coordinates.
    theta_o_norm: Vec<f64>,
    /// Number of shells.
    pub n_shells: usize,
    /// Chebyshev distance from the nominal point to the farthest corner.
    pub max_distance: f64,
}

impl SpaceDivision {
    /// Shell index of a physical point (0 = innermost). Points at the exact
    /// nominal location are in shell 0; the outermost shell absorbs the
    /// boundary.
    pub fn shell_of(&self, space: &ParameterSpace, theta: &[f64]) -> usize {
        let u = space.normalize(theta);
        let d = u
            .iter()
            .zip(&self.theta_o_norm)
            .map(|(x, o)| (x - o).abs())
            .fold(0.0f64, f64::max);
        let t = self.max_distance / self.n_shells as f64;
        ((d / t).floor() as usize).min(self.n_shells - 1)
    }
}

/// Splits the space into `n_shells` equal-thickness Chebyshev shells around
/// `theta_o`. The shells are mutually exclusive and exhaust the space.
///
/// Fails if `theta_o` lies on (or outside) the space boundary — shells would
/// degenerate there.
pub fn divide_space(
    space: &ParameterSpace,
    theta_o: &[f64],
    n_shells: usize,
) -> Result<SpaceDivision, ExploreError> {
    if theta_o.len() != space.dim() {
        return Err(ExploreError::Geometry(format!(
            "nominal point has {} coordinates for a {}-dimensional space",
            theta_o.len(),
            space.dim()
        )));
    }
    if n_shells == 0 {
        return Err(ExploreError::Geometry("n_shells must be at least 1".into()));
    }
    let u = space.normalize(theta_o);
    for (d, &x) in u.iter().enumerate() {
        if !(x > 0.0 && x < 1.0) {
            return Err(ExploreError::Geometry(format!(
                "nominal point lies on or outside the boundary in dimension {d} (normalized {x})"
            )));
        }
    }
    let max_distance = u
        .iter()
        .map(|&x| x.max(1.0 - x))
        .fold(0.0f64, f64::max);
    Ok(SpaceDivision {
        theta_o: theta_o.to_vec(),
        theta_o_norm: u,
        n_shells,
        max_distance,
    })
}

/// Verdict for one sample of the exploration scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    /// Projection against the nominal reference is well conditioned.
    Accepted,
    /// Projection was evaluated and found ill conditioned.
    Rejected,
    /// Not evaluated: nearest labeled neighbor was Rejected.
    Skipped,
}

/// One labeled sample of the scan.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    /// Physical design point.
    pub theta: Vec<f64>,
    /// Shell index the sample fell into.
    pub shell: usize,
    /// Verdict.
    pub label: Label,
    /// Projection diagnostics against the nominal reference
    /// (`None` for skipped samples).
    pub diagnostics: Option<ProjectionDiagnostics>,
}

/// Per-shell outcome counts `(accepted, rejected, skipped)`.
pub type ShellCounts = Vec<(usize, usize, usize)>;

/// Result of a labeling scan.
#[derive(Debug)]
pub struct LabelRun {
    /// Samples in processing order (shells ascending, draw order within a
    /// shell). The nominal point is always the first sample.
    pub samples: Vec<LabeledSample>,
    /// The nominal reference basis used for every verdict.
    pub reference: CommonBasis,
    /// Shell index at which the scan stopped early, if it did.
    pub terminated_at_shell: Option<usize>,
    /// Outcome counts per shell (up to the terminating shell).
    pub shell_counts: ShellCounts,
}

/// Labeling scan configuration.
#[derive(Debug, Clone, Copy)]
pub struct LabelConfig {
    /// Retained mode count.
    pub q: usize,
    /// Number of Latin hypercube samples (the nominal point is added on top).
    pub n_samples: usize,
    /// Number of concentric shells.
    pub n_shells: usize,
    /// RNG seed for the Latin hypercube.
    pub seed: u64,
    /// Conditioning thresholds.
    pub thresholds: ConditioningThresholds,
    /// Enables the nearest-rejected-neighbor skip shortcut. Disabling it
    /// evaluates every sample (audit mode); evaluated verdicts are identical
    /// either way because each verdict depends only on the sample and the
    /// nominal reference.
    pub use_skip_shortcut: bool,
}

impl LabelConfig {
    /// Scan with `q` modes, `n_samples` draws, `n_shells` shells, and the
    /// skip shortcut enabled.
    pub fn new(q: usize, n_samples: usize, n_shells: usize, seed: u64) -> Self {
        Self {
            q,
            n_samples,
            n_shells,
            seed,
            thresholds: ConditioningThresholds::default(),
            use_skip_shortcut: true,
        }
    }
}

/// Runs the labeling scan around `theta_o`.
///
/// `build` maps a design point to its substructure. Samples are drawn once
/// over the whole space, binned into shells, and processed inside-out; within
/// a shell, draw order is preserved. The scan stops after the first non-empty
/// shell that yields zero accepted samples (a shell containing no samples at
/// all provides no evidence and does not stop the scan).
pub fn label_samples<F>(
    space: &ParameterSpace,
    theta_o: &[f64],
    cfg: &LabelConfig,
    build: F,
) -> Result<LabelRun, ExploreError>
where
    F: Fn(&[f64]) -> Result<Substructure, ModelError>,
{
    let division = divide_space(space, theta_o, cfg.n_shells)?;
    let reference = common_basis(&build(theta_o)?, cfg.q)?;

    // The nominal point is evaluated first so that downstream tagging uses it
    // as the founding reference of region 1.
    let mut pool: Vec<(usize, Vec<f64>)> = Vec::with_capacity(cfg.n_samples + 1);
    pool.push((0, theta_o.to_vec()));
    for theta in latin_hypercube(cfg.n_samples, space, cfg.seed) {
        let shell = division.shell_of(space, &theta);
        pool.push((shell, theta));
    }

    let mut samples: Vec<LabeledSample> = Vec::with_capacity(pool.len());
    let mut shell_counts: ShellCounts = Vec::new();
    let mut any_rejected = false;
    let mut terminated_at_shell = None;

    'shells: for shell in 0..cfg.n_shells {
        let members: Vec<&(usize, Vec<f64>)> =
            pool.iter().filter(|(s, _)| *s == shell).collect();
        if members.is_empty() {
            shell_counts.push((0, 0, 0));
            continue;
        }
        let mut acc = 0usize;
        let mut rej = 0usize;
        let mut skip = 0usize;
        for (_, theta) in members {
            // Shortcut: once any rejection exists, a sample strictly closer to
            // a rejected sample than to any accepted one is skipped.
            if any_rejected && cfg.use_skip_shortcut {
                let mut d_acc = f64::INFINITY;
                let mut d_rej = f64::INFINITY;
                for s in &samples {
                    let d = normalized_distance(space, theta, &s.theta);
                    match s.label {
                        Label::Accepted => d_acc = d_acc.min(d),
                        Label::Rejected => d_rej = d_rej.min(d),
                        Label::Skipped => {}
                    }
                }
                // Equidistant neighbors fall through to evaluation.
                if d_rej < d_acc {
                    skip += 1;
                    samples.push(LabeledSample {
                        theta: theta.clone(),
                        shell,
                        label: Label::Skipped,
                        diagnostics: None,
                    });
                    continue;
                }
            }
            let sub = build(theta)?;
            let (modes, _) = fixed_interface_modes_of(&sub, cfg.q)?;
            let diag = diagnostics(&reference, &modes.vectors, &cfg.thresholds)?;
            let label = if diag.well_conditioned {
                acc += 1;
                Label::Accepted
            } else {
                rej += 1;
                any_rejected = true;
                Label::Rejected
            };
            samples.push(LabeledSample {
                theta: theta.clone(),
                shell,
                label,
                diagnostics: Some(diag),
            });
        }
        shell_counts.push((acc, rej, skip));
        if acc == 0 {
            terminated_at_shell = Some(shell);
            break 'shells;
        }
    }

    Ok(LabelRun {
        samples,
        reference,
        terminated_at_shell,
        shell_counts,
    })
}

/// A region's founding sample and projection basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionReference {
    /// 1-based region identifier.
    pub region_id: usize,
    /// Founding design point.
    pub theta: Vec<f64>,
    /// Projection basis built from the founding sample's modes.
    pub basis: CommonBasis,
}

/// Result of region tagging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionTagging {
    /// 1-based region id per input sample, in input order.
    pub assignments: Vec<usize>,
    /// Region references in creation order (`region_id` = position + 1).
    pub references: Vec<RegionReference>,
}

/// Input to [`tag_regions`]: an evaluated sample with its modes.
#[derive(Debug, Clone)]
pub struct TagInput {
    /// Physical design point.
    pub theta: Vec<f64>,
    /// Internal mass block (needed if the sample founds a region).
    pub m_jj: DMatrix<f64>,
    /// Fixed-interface modes.
    pub modes: EigenPairs,
}

/// Evaluates the fixed-interface modes of every design point and packages
/// them for [`tag_regions`]. This is the upfront pass of the multi-region
/// pipeline: unlike the labeling scan, every sample is evaluated — region
/// discovery must see samples from every conditioning regime, including those
/// a nearest-neighbor shortcut would skip.
pub fn evaluate_tag_inputs<F>(
    thetas: &[Vec<f64>],
    q: usize,
    build: F,
) -> Result<Vec<TagInput>, ExploreError>
where
    F: Fn(&[f64]) -> Result<Substructure, ModelError>,
{
    thetas
        .iter()
        .map(|theta| {
            let sub = build(theta)?;
            let (modes, m_jj) = fixed_interface_modes_of(&sub, q)?;
            Ok(TagInput {
                theta: theta.clone(),
                m_jj,
                modes,
            })
        })
        .collect()
}

/// Assigns every evaluated sample to a well-conditioned region.
///
/// Samples are visited in order. Each is tested against the existing region
/// references in creation order; the first whose projection is well
/// conditioned claims the sample. If none does, the sample founds the next
/// region and becomes its reference. The first sample always founds region 1,
/// and every sample receives exactly one region id in `1..=m`.
pub fn tag_regions(
    inputs: &[TagInput],
    thresholds: &ConditioningThresholds,
) -> Result<RegionTagging, ExploreError> {
    let mut references: Vec<RegionReference> = Vec::new();
    let mut assignments = Vec::with_capacity(inputs.len());
    for input in inputs {
        let mut assigned = None;
        for reference in &references {
            let d = diagnostics(&reference.basis, &input.modes.vectors, thresholds)?;
            if d.well_conditioned {
                assigned = Some(reference.region_id);
                break;
            }
        }
        let region_id = match assigned {
            Some(id) => id,
            None => {
                let id = references.len() + 1;
                let q = input.modes.vectors.ncols();
                references.push(RegionReference {
                    region_id: id,
                    theta: input.theta.clone(),
                    basis: CommonBasis {
                        r: &input.m_jj * &input.modes.vectors,
                        phi_ref: input.modes.vectors.clone(),
                        values_ref: input.modes.values.iter().copied().collect(),
                        q,
                        theta_ref: input.theta.clone(),
                    },
                });
                id
            }
        };
        assignments.push(region_id);
    }
    Ok(RegionTagging {
        assignments,
        references,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_resonator_cell;

    fn unit_space(d: usize) -> ParameterSpace {
        ParameterSpace::new(vec![(0.0, 1.0); d]).unwrap()
    }

    #[test]
    fn latin_hypercube_stratification_and_determinism() {
        let space = ParameterSpace::new(vec![(0.0, 10.0), (-5.0, 5.0)]).unwrap();
        let n = 40;
        let a = latin_hypercube(n, &space, 7);
        let b = latin_hypercube(n, &space, 7);
        assert_eq!(a, b);
        let c = latin_hypercube(n, &space, 8);
        assert_ne!(a, c);
        // Exactly one sample per stratum per dimension.
        for dim in 0..2 {
            let mut seen = vec![false; n];
            for p in &a {
                let u = space.normalize(p)[dim];
                assert!((0.0..1.0).contains(&u));
                let stratum = (u * n as f64).floor() as usize;
                assert!(!seen[stratum], "stratum {stratum} hit twice in dim {dim}");
                seen[stratum] = true;
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn mode_swap_permutation_cycles_the_window_only() {
        for seed in 0..25u64 {
            let perm = mode_swap_permutation(100, 21, 80, seed).unwrap();
            let mut sorted = perm.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..100).collect::<Vec<_>>());
            // Identity outside the window, no fixed point inside it.
            for (j, &p) in perm.iter().enumerate() {
                if (20..80).contains(&j) {
                    assert_ne!(p, j, "seed {seed}: mode {j} unmoved");
                    assert!((20..80).contains(&p));
                } else {
                    assert_eq!(p, j);
                }
            }
            // Single cycle: following the permutation from the window's first
            // element returns only after visiting all 60 members.
            let mut visited = 0usize;
            let mut at = 20usize;
            loop {
                at = perm[at];
                visited += 1;
                if at == 20 {
                    break;
                }
            }
            assert_eq!(visited, 60);
            // Every leading subset that cuts the window misses a mode.
            for q in 21..80 {
                let inside = perm[..q].iter().filter(|&&p| p < q).count();
                assert!(inside < q, "seed {seed}: prefix {q} kept full rank");
            }
        }
        assert_eq!(
            mode_swap_permutation(100, 21, 80, 7).unwrap(),
            mode_swap_permutation(100, 21, 80, 7).unwrap()
        );
        assert!(mode_swap_permutation(100, 0, 80, 1).is_err());
        assert!(mode_swap_permutation(100, 30, 30, 1).is_err());
        assert!(mode_swap_permutation(100, 21, 101, 1).is_err());
    }

    #[test]
    fn normalized_distance_uses_minmax_coordinates() {
        let space = ParameterSpace::new(vec![(0.0, 10.0), (0.0, 100.0)]).unwrap();
        let d = normalized_distance(&space, &[0.0, 0.0], &[10.0, 100.0]);
        assert!((d - 2.0f64.sqrt()).abs() < 1e-12);
        let d = normalized_distance(&space, &[5.0, 50.0], &[5.0, 50.0]);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn shells_partition_the_space() {
        let space = unit_space(2);
        let division = divide_space(&space, &[0.3, 0.6], 5).unwrap();
        // max Chebyshev distance: max(0.7, 0.6) = 0.7
        assert!((division.max_distance - 0.7).abs() < 1e-12);
        assert_eq!(division.shell_of(&space, &[0.3, 0.6]), 0);
        assert_eq!(division.shell_of(&space, &[1.0, 1.0]), 4);
        // Every grid point lands in exactly one shell with index matching its
        // Chebyshev distance band.
        for i in 0..=10 {
            for j in 0..=10 {
                let p = [i as f64 / 10.0, j as f64 / 10.0];
                let shell = division.shell_of(&space, &p);
                let d = (p[0] - 0.3f64).abs().max((p[1] - 0.6).abs());
                let expect = ((d / (0.7 / 5.0)).floor() as usize).min(4);
                assert_eq!(shell, expect);
            }
        }
    }

    #[test]
    fn boundary_nominal_point_is_rejected() {
        let space = unit_space(2);
        assert!(divide_space(&space, &[0.0, 0.5], 4).is_err());
        assert!(divide_space(&space, &[0.5, 1.0], 4).is_err());
        assert!(divide_space(&space, &[0.5, 1.5], 4).is_err());
        assert!(divide_space(&space, &[0.5, 0.5], 0).is_err());
    }

    /// Resonator scan: all three L-slabs appear, labels follow the analytic
    /// slab boundaries (7.3995 / 9.5096), and tagging finds exactly 3 regions.
    #[test]
    fn resonator_scan_labels_and_tags_three_regions() {
        let space = ParameterSpace::new(vec![(5.0, 15.0), (20.0, 60.0)]).unwrap();
        let cfg = LabelConfig::new(5, 60, 5, 11);
        let run = label_samples(&space, &[10.0, 40.0], &cfg, |t| {
            build_resonator_cell(t[0], t[1])
        })
        .unwrap();
        assert_eq!(run.samples[0].theta, vec![10.0, 40.0]);
        assert_eq!(run.samples[0].label, Label::Accepted);
        // Evaluated labels must match the analytic slab structure: Accepted
        // iff L is in the nominal slab (9.5096, 15]. (Skipped samples carry no
        // verdict: the shortcut may skip either side near a boundary.)
        for s in &run.samples {
            match s.label {
                Label::Accepted => assert!(s.theta[0] > 9.5096, "L = {}", s.theta[0]),
                Label::Rejected => assert!(s.theta[0] < 9.5097, "L = {}", s.theta[0]),
                Label::Skipped => assert!(s.diagnostics.is_none()),
            }
        }
        // Region tagging evaluates every sample upfront — the labeled scan's
        // skip shortcut must not filter its input, or whole conditioning
        // regimes would go undiscovered. Three regions, one per slab.
        let mut thetas = vec![vec![10.0, 40.0]];
        thetas.extend(latin_hypercube(60, &space, 11));
        let inputs =
            evaluate_tag_inputs(&thetas, 5, |t| build_resonator_cell(t[0], t[1])).unwrap();
        let tagging = tag_regions(&inputs, &cfg.thresholds).unwrap();
        assert_eq!(tagging.references.len(), 3);
        assert_eq!(tagging.assignments[0], 1);
        let slab = |l: f64| {
            if l > 9.5096 {
                0
            } else if l > 7.3995 {
                1
            } else {
                2
            }
        };
        // Map region id -> slab of its reference; every member must match.
        for (input, &rid) in inputs.iter().zip(&tagging.assignments) {
            let ref_theta = &tagging.references[rid - 1].theta;
            assert_eq!(
                slab(input.theta[0]),
                slab(ref_theta[0]),
                "sample at L={} tagged to reference at L={}",
                input.theta[0],
                ref_theta[0]
            );
        }
    }

    /// Disabling the shortcut changes no Accepted/Rejected verdict; it only
    /// evaluates samples that the shortcut skipped.
    #[test]
    fn skipping_is_conservative() {
        let space = ParameterSpace::new(vec![(5.0, 15.0), (20.0, 60.0)]).unwrap();
        let mut cfg = LabelConfig::new(5, 50, 4, 3);
        let build = |t: &[f64]| build_resonator_cell(t[0], t[1]);
        let with_skip = label_samples(&space, &[10.0, 40.0], &cfg, build).unwrap();
        cfg.use_skip_shortcut = false;
        let no_skip = label_samples(&space, &[10.0, 40.0], &cfg, build).unwrap();
        let n_skipped = with_skip
            .samples
            .iter()
            .filter(|s| s.label == Label::Skipped)
            .count();
        assert!(n_skipped > 0, "scan exercised no skips");
        assert!(no_skip.samples.iter().all(|s| s.label != Label::Skipped));
        // Audit-mode verdicts, keyed by θ.
        let audit: Vec<(&Vec<f64>, Label)> = no_skip
            .samples
            .iter()
            .map(|s| (&s.theta, s.label))
            .collect();
        let lookup = |theta: &Vec<f64>| {
            audit
                .iter()
                .find(|(t, _)| *t == theta)
                .map(|&(_, l)| l)
        };
        for s in &with_skip.samples {
            match s.label {
                Label::Accepted | Label::Rejected => {
                    assert_eq!(lookup(&s.theta), Some(s.label), "θ = {:?}", s.theta);
                }
                // Skipped samples carry no verdict; audit mode evaluated them.
                Label::Skipped => {
                    assert!(matches!(
                        lookup(&s.theta),
                        Some(Label::Accepted | Label::Rejected) | None
                    ));
                }
            }
        }
    }

    /// All samples drawn before the first rejection are evaluated.
    #[test]
    fn no_skips_before_first_rejection() {
        let space = ParameterSpace::new(vec![(5.0, 15.0), (20.0, 60.0)]).unwrap();
        let cfg = LabelConfig::new(5, 40, 5, 17);
        let run = label_samples(&space, &[10.0, 40.0], &cfg, |t| {
            build_resonator_cell(t[0], t[1])
        })
        .unwrap();
        let first_rejection = run
            .samples
            .iter()
            .position(|s| s.label == Label::Rejected)
            .expect("scan produced no rejection");
        for s in &run.samples[..first_rejection] {
            assert_ne!(s.label, Label::Skipped);
        }
    }

    /// A nominal point whose entire first shell is ill conditioned stops the
    /// scan at that shell.
    #[test]
    fn zero_accepted_shell_terminates() {
        // Shrink the space to a band straddling the slab boundary and place
        // the nominal point close to it: the first shells contain accepted
        // samples, but shells past the boundary reject everything.
        let space = ParameterSpace::new(vec![(9.0, 11.0), (39.0, 41.0)]).unwrap();
        let cfg = LabelConfig::new(5, 120, 6, 5);
        let run = label_samples(&space, &[10.4, 40.0], &cfg, |t| {
            build_resonator_cell(t[0], t[1])
        })
        .unwrap();
        let stop = run.terminated_at_shell.expect("scan should stop early");
        // No sample from shells past the stop shell was processed.
        assert!(run.samples.iter().all(|s| s.shell <= stop));
        let (acc, _, _) = run.shell_counts[stop];
        assert_eq!(acc, 0);
    }

    #[test]
    fn tagging_reuses_earliest_matching_reference() {
        // Two samples in the same slab: the second must join the first's
        // region rather than founding its own.
        let mk = |l: f64, w: f64| {
            let s = build_resonator_cell(l, w).unwrap();
            let (modes, m_jj) = fixed_interface_modes_of(&s, 5).unwrap();
            TagInput {
                theta: vec![l, w],
                m_jj,
                modes,
            }
        };
        let inputs = vec![mk(10.0, 40.0), mk(8.5, 30.0), mk(12.0, 55.0), mk(8.0, 50.0)];
        let tagging = tag_regions(&inputs, &ConditioningThresholds::default()).unwrap();
        assert_eq!(tagging.assignments, vec![1, 2, 1, 2]);
        assert_eq!(tagging.references.len(), 2);
        assert_eq!(tagging.references[0].theta, vec![10.0, 40.0]);
        assert_eq!(tagging.references[1].theta, vec![8.5, 30.0]);
    }
}
