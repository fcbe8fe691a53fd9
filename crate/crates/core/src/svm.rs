//! Soft-margin RBF-kernel support vector machines for conditioning
//! classification.
//!
//! Two uses share the same trainer: a binary model of the accepted/rejected
//! boundary around one reference, and a one-vs-one multiclass router that
//! assigns a design point to a well-conditioned region. Training runs a
//! sequential minimal optimization (SMO) loop with deterministic pair
//! selection: identical inputs always produce identical models, bit for bit.
//!
//! Classification happens in min-max normalized coordinates; every model
//! stores the physical bounds it was normalized with, so a serialized model
//! is self-describing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by SVM training or validation.
#[derive(Debug, Error)]
pub enum SvmError {
    /// Training set is empty, single-class, or missing a region.
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),
    /// Inconsistent sample/label/bounds shapes or invalid hyperparameters.
    #[error("svm input error: {0}")]
    Input(String),
}

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmParams {
    /// Box constraint on the dual weights.
    pub c: f64,
    /// RBF width; `None` selects `1/d` for `d`-dimensional inputs.
    pub gamma: Option<f64>,
    /// KKT violation tolerance for SMO convergence.
    pub tol: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 10.0,
            gamma: None,
            tol: 1e-3,
        }
    }
}

/// A trained binary classifier: `f(x) = Σ αᵢ k(xᵢ, x) + b` with signed duals
/// `αᵢ = λᵢ yᵢ` and RBF kernel `k(a, b) = exp(-γ ‖a-b‖²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmModel {
    /// Support vectors in normalized coordinates.
    pub support_vectors: Vec<Vec<f64>>,
    /// Signed dual weights, one per support vector; `0 < |αᵢ| ≤ C`.
    pub alphas: Vec<f64>,
    /// Decision function offset.
    pub bias: f64,
    /// RBF kernel width.
    pub gamma: f64,
    /// Box constraint the model was trained with.
    pub c: f64,
    /// Physical per-dimension bounds used to normalize the training inputs.
    pub bounds: Vec<(f64, f64)>,
}

/// Min-max normalization of a physical point with per-dimension bounds.
fn normalize_point(bounds: &[(f64, f64)], x: &[f64]) -> Vec<f64> {
    bounds
        .iter()
        .zip(x)
        .map(|(&(lo, hi), &v)| (v - lo) / (hi - lo))
        .collect()
}

impl SvmModel {
    /// Decision value at a physical point (normalized with the stored
    /// bounds).
    pub fn decision(&self, x: &[f64]) -> f64 {
        let xn = normalize_point(&self.bounds, x);
        let mut f = self.bias;
        for (sv, a) in self.support_vectors.iter().zip(&self.alphas) {
            f += a * rbf(self.gamma, sv, &xn);
        }
        f
    }

    /// Label (`+1`/`-1`) and decision value at a physical point. A decision
    /// value of exactly zero maps to `+1`.
    pub fn predict(&self, x: &[f64]) -> (i8, f64) {
        let f = self.decision(x);
        (if f >= 0.0 { 1 } else { -1 }, f)
    }

    /// Structural validity: consistent shapes, finite values, duals within
    /// the box, and the dual equality constraint `Σ αᵢ = 0 ± 1e-6`.
    pub fn validate(&self) -> Result<(), SvmError> {
        if self.support_vectors.len() != self.alphas.len() {
            return Err(SvmError::Input(format!(
                "{} support vectors but {} dual weights",
                self.support_vectors.len(),
                self.alphas.len()
            )));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(SvmError::Input(format!("gamma {} must be > 0", self.gamma)));
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(SvmError::Input(format!("C {} must be > 0", self.c)));
        }
        if !self.bias.is_finite() {
            return Err(SvmError::Input("bias is not finite".into()));
        }
        for &(lo, hi) in &self.bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(SvmError::Input(format!(
                    "bounds ({lo}, {hi}) must satisfy low < high"
                )));
            }
        }
        let d = self.bounds.len();
        for sv in &self.support_vectors {
            if sv.len() != d || sv.iter().any(|v| !v.is_finite()) {
                return Err(SvmError::Input(format!(
                    "support vector has {} coordinates for {d} bounded dimensions",
                    sv.len()
                )));
            }
        }
        let mut sum = 0.0;
        for &a in &self.alphas {
            if !a.is_finite() || a.abs() > self.c * (1.0 + 1e-9) {
                return Err(SvmError::Input(format!(
                    "dual weight {a} outside [-C, C] with C = {}",
                    self.c
                )));
            }
            sum += a;
        }
        if sum.abs() > 1e-6 {
            return Err(SvmError::Input(format!(
                "signed dual weights sum to {sum}, violating the equality constraint"
            )));
        }
        Ok(())
    }
}

/// One pairwise classifier of a one-vs-one router; positive decision votes
/// for `region_a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairwiseSvm {
    /// Region voted for by positive decisions.
    pub region_a: usize,
    /// Region voted for by negative decisions.
    pub region_b: usize,
    /// The underlying binary model.
    pub model: SvmModel,
}

/// One-vs-one multiclass router over well-conditioned regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MulticlassSvm {
    /// Region ids in ascending order (`1..=m`).
    pub region_ids: Vec<usize>,
    /// `m(m-1)/2` pairwise models, ordered by `(region_a, region_b)`.
    pub pairs: Vec<PairwiseSvm>,
    /// Physical bounds shared by every pairwise model.
    pub bounds: Vec<(f64, f64)>,
}

/// Routing verdict for one design point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPrediction {
    /// Winning region id.
    pub region_id: usize,
    /// True when the winner's summed decision margin is negative — the point
    /// won the vote without net decision-function support (typically far
    /// outside the sampled hull).
    pub low_confidence: bool,
    /// Votes per region, aligned with the router's `region_ids`.
    pub votes: Vec<usize>,
    /// Summed signed decision values per region, aligned with `region_ids`.
    pub margins: Vec<f64>,
}

impl MulticlassSvm {
    /// Min-max normalization with the stored bounds.
    pub fn normalize(&self, theta: &[f64]) -> Vec<f64> {
        self.bounds
            .iter()
            .zip(theta)
            .map(|(&(lo, hi), &v)| (v - lo) / (hi - lo))
            .collect()
    }

    /// Routes a physical point to a region: majority vote over the pairwise
    /// models, ties broken by the largest summed decision margin, remaining
    /// ties by the smallest region id. Total: every point gets a region.
    pub fn predict_region(&self, x: &[f64]) -> RegionPrediction {
        let m = self.region_ids.len();
        if m == 1 {
            return RegionPrediction {
                region_id: self.region_ids[0],
                low_confidence: false,
                votes: vec![0],
                margins: vec![0.0],
            };
        }
        let index_of = |id: usize| {
            self.region_ids
                .iter()
                .position(|&r| r == id)
                .expect("pairwise model references a listed region")
        };
        let mut votes = vec![0usize; m];
        let mut margins = vec![0.0f64; m];
        for pair in &self.pairs {
            let f = pair.model.decision(x);
            let ia = index_of(pair.region_a);
            let ib = index_of(pair.region_b);
            if f >= 0.0 {
                votes[ia] += 1;
            } else {
                votes[ib] += 1;
            }
            margins[ia] += f;
            margins[ib] -= f;
        }
        let mut best = 0usize;
        for i in 1..m {
            if votes[i] > votes[best] || (votes[i] == votes[best] && margins[i] > margins[best]) {
                best = i;
            }
        }
        RegionPrediction {
            region_id: self.region_ids[best],
            low_confidence: margins[best] < 0.0,
            votes,
            margins,
        }
    }

    /// Structural validity of the router and every pairwise model.
    pub fn validate(&self) -> Result<(), SvmError> {
        let m = self.region_ids.len();
        if m == 0 {
            return Err(SvmError::Input("router lists no regions".into()));
        }
        if self.region_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SvmError::Input("region ids must be strictly ascending".into()));
        }
        if self.pairs.len() != m * (m - 1) / 2 {
            return Err(SvmError::Input(format!(
                "{} pairwise models for {m} regions (expected {})",
                self.pairs.len(),
                m * (m - 1) / 2
            )));
        }
        for pair in &self.pairs {
            if !self.region_ids.contains(&pair.region_a)
                || !self.region_ids.contains(&pair.region_b)
                || pair.region_a >= pair.region_b
            {
                return Err(SvmError::Input(format!(
                    "pairwise model ({}, {}) does not match the region list",
                    pair.region_a, pair.region_b
                )));
            }
            if pair.model.bounds != self.bounds {
                return Err(SvmError::Input(
                    "pairwise model bounds differ from the router bounds".into(),
                ));
            }
            pair.model.validate()?;
        }
        Ok(())
    }
}

fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// Relative step size below which an SMO update counts as no progress.
const STEP_EPS: f64 = 1e-8;
/// Hard cap on SMO sweeps; converged runs exit far earlier.
const MAX_PASSES: usize = 10_000;

/// SMO state: dual weights, bias, and an incrementally maintained error
/// cache `eᵢ = f(xᵢ) - yᵢ` over the full kernel matrix.
struct Smo<'a> {
    y: &'a [f64],
    kernel: Vec<f64>,
    n: usize,
    c: f64,
    tol: f64,
    alpha: Vec<f64>,
    e: Vec<f64>,
    b: f64,
}

impl Smo<'_> {
    fn k(&self, i: usize, j: usize) -> f64 {
        self.kernel[i * self.n + j]
    }

    fn non_bound(&self, i: usize) -> bool {
        self.alpha[i] > 0.0 && self.alpha[i] < self.c
    }

    /// Jointly optimizes the pair `(i1, i2)` along the equality constraint.
    /// Returns whether the duals moved.
    fn take_step(&mut self, i1: usize, i2: usize) -> bool {
        if i1 == i2 {
            return false;
        }
        let (a1o, a2o) = (self.alpha[i1], self.alpha[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let (e1, e2) = (self.e[i1], self.e[i2]);
        let s = y1 * y2;
        let (lo, hi) = if s > 0.0 {
            ((a1o + a2o - self.c).max(0.0), (a1o + a2o).min(self.c))
        } else {
            ((a2o - a1o).max(0.0), (self.c + a2o - a1o).min(self.c))
        };
        if lo >= hi {
            return false;
        }
        let k11 = self.k(i1, i1);
        let k12 = self.k(i1, i2);
        let k22 = self.k(i2, i2);
        let eta = k11 + k22 - 2.0 * k12;
        let a2 = if eta > 1e-15 {
            (a2o + y2 * (e1 - e2) / eta).clamp(lo, hi)
        } else {
            // Flat (or concave) direction — only possible with coincident
            // kernel rows. Evaluate the dual objective at both ends.
            let w_lo = self.line_objective(i1, i2, lo);
            let w_hi = self.line_objective(i1, i2, hi);
            if w_lo > w_hi + 1e-12 {
                lo
            } else if w_hi > w_lo + 1e-12 {
                hi
            } else {
                return false;
            }
        };
        if (a2 - a2o).abs() < STEP_EPS * (a2 + a2o + STEP_EPS) {
            return false;
        }
        let a1 = (a1o + s * (a2o - a2)).clamp(0.0, self.c);
        let d1 = y1 * (a1 - a1o);
        let d2 = y2 * (a2 - a2o);
        // Bias keeps the updated point exactly on its margin when interior.
        let b1 = self.b - e1 - d1 * k11 - d2 * k12;
        let b2 = self.b - e2 - d1 * k12 - d2 * k22;
        let b_new = if a1 > 0.0 && a1 < self.c {
            b1
        } else if a2 > 0.0 && a2 < self.c {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        let db = b_new - self.b;
        for j in 0..self.n {
            self.e[j] += d1 * self.k(i1, j) + d2 * self.k(i2, j) + db;
        }
        self.alpha[i1] = a1;
        self.alpha[i2] = a2;
        self.b = b_new;
        true
    }

    /// Dual objective along the constraint line, parameterized by `a2`.
    fn line_objective(&self, i1: usize, i2: usize, a2: f64) -> f64 {
        let (a1o, a2o) = (self.alpha[i1], self.alpha[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let s = y1 * y2;
        let k11 = self.k(i1, i1);
        let k12 = self.k(i1, i2);
        let k22 = self.k(i2, i2);
        // vᵢ = f(xᵢ) - b - contributions of the pair itself.
        let v1 = self.e[i1] + y1 - self.b - a1o * y1 * k11 - a2o * y2 * k12;
        let v2 = self.e[i2] + y2 - self.b - a1o * y1 * k12 - a2o * y2 * k22;
        let a1 = a1o + s * (a2o - a2);
        a1 + a2
            - 0.5 * k11 * a1 * a1
            - 0.5 * k22 * a2 * a2
            - s * k12 * a1 * a2
            - y1 * v1 * a1
            - y2 * v2 * a2
    }

    /// Platt's second-choice heuristics with deterministic tie-breaking:
    /// largest |e₁ - e₂| over non-bound duals (lowest index wins ties), then
    /// all non-bound in ascending order, then everything in ascending order.
    fn examine(&mut self, i2: usize) -> bool {
        let y2 = self.y[i2];
        let a2 = self.alpha[i2];
        let r2 = self.e[i2] * y2;
        if !((r2 < -self.tol && a2 < self.c) || (r2 > self.tol && a2 > 0.0)) {
            return false;
        }
        let mut best: Option<(f64, usize)> = None;
        for i in 0..self.n {
            if i != i2 && self.non_bound(i) {
                let d = (self.e[i] - self.e[i2]).abs();
                if best.is_none_or(|(bd, _)| d > bd) {
                    best = Some((d, i));
                }
            }
        }
        if let Some((_, i1)) = best {
            if self.take_step(i1, i2) {
                return true;
            }
        }
        for i1 in 0..self.n {
            if i1 != i2 && self.non_bound(i1) && self.take_step(i1, i2) {
                return true;
            }
        }
        for i1 in 0..self.n {
            if i1 != i2 && self.take_step(i1, i2) {
                return true;
            }
        }
        false
    }

    /// Alternates full sweeps and non-bound sweeps until a full sweep finds
    /// no KKT violation beyond `tol`.
    fn run(&mut self) {
        let mut num_changed = 1usize;
        let mut examine_all = true;
        let mut passes = 0usize;
        while (num_changed > 0 || examine_all) && passes < MAX_PASSES {
            num_changed = 0;
            if examine_all {
                for i in 0..self.n {
                    if self.examine(i) {
                        num_changed += 1;
                    }
                }
            } else {
                for i in 0..self.n {
                    if self.non_bound(i) && self.examine(i) {
                        num_changed += 1;
                    }
                }
            }
            if examine_all {
                examine_all = false;
            } else if num_changed == 0 {
                examine_all = true;
            }
            passes += 1;
        }
    }
}

fn check_training_input(
    x: &[Vec<f64>],
    n_labels: usize,
    bounds: &[(f64, f64)],
) -> Result<(), SvmError> {
    if x.is_empty() {
        return Err(SvmError::DegenerateLabels("empty training set".into()));
    }
    if x.len() != n_labels {
        return Err(SvmError::Input(format!(
            "{} samples but {} labels",
            x.len(),
            n_labels
        )));
    }
    if bounds.is_empty() {
        return Err(SvmError::Input("empty bounds".into()));
    }
    for &(lo, hi) in bounds {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(SvmError::Input(format!(
                "bounds ({lo}, {hi}) must satisfy low < high"
            )));
        }
    }
    let d = bounds.len();
    for (i, xi) in x.iter().enumerate() {
        if xi.len() != d {
            return Err(SvmError::Input(format!(
                "sample {i} has {} coordinates for {d} bounded dimensions",
                xi.len()
            )));
        }
        if xi.iter().any(|v| !v.is_finite()) {
            return Err(SvmError::Input(format!("sample {i} has non-finite coordinates")));
        }
    }
    Ok(())
}

/// Trains a binary classifier on physical samples with ±1 labels; inputs
/// are min-max normalized with `bounds` before the kernel is formed.
///
/// Runs SMO until every KKT violation is below `params.tol`. The returned
/// model keeps only the support vectors (strictly positive duals).
pub fn train_binary(
    x: &[Vec<f64>],
    y: &[i8],
    params: &SvmParams,
    bounds: &[(f64, f64)],
) -> Result<SvmModel, SvmError> {
    check_training_input(x, y.len(), bounds)?;
    if y.iter().any(|&v| v != 1 && v != -1) {
        return Err(SvmError::Input("labels must be +1 or -1".into()));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(SvmError::DegenerateLabels(format!(
            "all {} samples carry label {}",
            y.len(),
            y[0]
        )));
    }
    if !(params.c.is_finite() && params.c > 0.0) {
        return Err(SvmError::Input(format!("C {} must be > 0", params.c)));
    }
    if !(params.tol.is_finite() && params.tol > 0.0) {
        return Err(SvmError::Input(format!("tol {} must be > 0", params.tol)));
    }
    let gamma = params.gamma.unwrap_or(1.0 / bounds.len() as f64);
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(SvmError::Input(format!("gamma {gamma} must be > 0")));
    }

    let xn: Vec<Vec<f64>> = x.iter().map(|xi| normalize_point(bounds, xi)).collect();
    let n = xn.len();
    let mut kernel = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = rbf(gamma, &xn[i], &xn[j]);
            kernel[i * n + j] = v;
            kernel[j * n + i] = v;
        }
    }
    let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let mut smo = Smo {
        y: &yf,
        kernel,
        n,
        c: params.c,
        tol: params.tol,
        alpha: vec![0.0; n],
        e: yf.iter().map(|&v| -v).collect(),
        b: 0.0,
    };
    smo.run();

    let mut support_vectors = Vec::new();
    let mut alphas = Vec::new();
    for i in 0..n {
        if smo.alpha[i] > 0.0 {
            support_vectors.push(xn[i].clone());
            alphas.push(smo.alpha[i] * yf[i]);
        }
    }
    Ok(SvmModel {
        support_vectors,
        alphas,
        bias: smo.b,
        gamma,
        c: params.c,
        bounds: bounds.to_vec(),
    })
}

/// Trains a one-vs-one router on physical samples with 1-based region tags.
///
/// Region ids must cover `1..=m` with at least one sample each; a single
/// region yields the trivial constant router. Each unordered pair `(a, b)`
/// with `a < b` trains one binary model on that pair's samples, labeling
/// region `a` as `+1`.
pub fn train_multiclass(
    x: &[Vec<f64>],
    tags: &[usize],
    params: &SvmParams,
    bounds: &[(f64, f64)],
) -> Result<MulticlassSvm, SvmError> {
    check_training_input(x, tags.len(), bounds)?;
    let m = *tags
        .iter()
        .max()
        .expect("training set is non-empty");
    if tags.contains(&0) {
        return Err(SvmError::Input("region tags are 1-based".into()));
    }
    for id in 1..=m {
        if !tags.contains(&id) {
            return Err(SvmError::DegenerateLabels(format!(
                "region {id} has no samples (tags reach {m})"
            )));
        }
    }
    let region_ids: Vec<usize> = (1..=m).collect();
    let mut pairs = Vec::with_capacity(m * (m - 1) / 2);
    for a in 1..=m {
        for b in (a + 1)..=m {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for (xi, &t) in x.iter().zip(tags) {
                if t == a || t == b {
                    xs.push(xi.clone());
                    ys.push(if t == a { 1i8 } else { -1i8 });
                }
            }
            let model = train_binary(&xs, &ys, params, bounds)?;
            pairs.push(PairwiseSvm {
                region_a: a,
                region_b: b,
                model,
            });
        }
    }
    Ok(MulticlassSvm {
        region_ids,
        pairs,
        bounds: bounds.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn unit_bounds(d: usize) -> Vec<(f64, f64)> {
        vec![(0.0, 1.0); d]
    }

    #[test]
    fn two_point_model_separates_and_centers_the_boundary() {
        let x = vec![vec![0.2], vec![0.8]];
        let y = vec![1i8, -1];
        let m = train_binary(&x, &y, &SvmParams::default(), &unit_bounds(1)).unwrap();
        assert_eq!(m.predict(&[0.2]).0, 1);
        assert_eq!(m.predict(&[0.8]).0, -1);
        // Symmetric pair: the decision boundary sits exactly at the midpoint,
        // and the sign is crisp immediately off it.
        assert!(m.decision(&[0.5]).abs() < 1e-9);
        assert_eq!(m.predict(&[0.5 - 1e-6]).0, 1);
        assert_eq!(m.predict(&[0.5 + 1e-6]).0, -1);
    }

    #[test]
    fn xor_pattern_is_separated_by_the_rbf_kernel() {
        let x = vec![
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
        ];
        let y = vec![1i8, 1, -1, -1];
        let m = train_binary(&x, &y, &SvmParams::default(), &unit_bounds(2)).unwrap();
        for (xi, &yi) in x.iter().zip(&y) {
            let (label, f) = m.predict(xi);
            assert_eq!(label, yi);
            // All four points are interior support vectors: each sits on its
            // margin, |f| = 1, within the KKT tolerance.
            assert!((f.abs() - 1.0).abs() < 5e-3, "f = {f}");
        }
    }

    #[test]
    fn one_dimensional_boundary_is_located_within_one_sample_spacing() {
        // 25 uniformly spaced samples labeled by the rule x < 0.58.
        let n = 25;
        let spacing = 1.0 / n as f64;
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![(i as f64 + 0.5) * spacing]).collect();
        let y: Vec<i8> = x.iter().map(|p| if p[0] < 0.58 { 1 } else { -1 }).collect();
        let m = train_binary(&x, &y, &SvmParams::default(), &unit_bounds(1)).unwrap();

        // Fine scan: the decision function changes sign exactly once, within
        // one sample spacing of the true boundary, and is Lipschitz.
        let lipschitz: f64 =
            m.alphas.iter().map(|a| a.abs()).sum::<f64>() * (2.0 * m.gamma / 1.0f64.exp()).sqrt();
        let mut crossings = Vec::new();
        let mut prev = m.decision(&[0.0]);
        let steps = 2000;
        for i in 1..=steps {
            let t = i as f64 / steps as f64;
            let f = m.decision(&[t]);
            assert!(
                (f - prev).abs() <= 1.05 * lipschitz / steps as f64 + 1e-12,
                "decision function jumped at {t}"
            );
            if (prev >= 0.0) != (f >= 0.0) {
                crossings.push(t);
            }
            prev = f;
        }
        assert_eq!(crossings.len(), 1, "crossings at {crossings:?}");
        let boundary_mid = 0.56; // between the last accepted and first rejected sample
        assert!(
            (crossings[0] - boundary_mid).abs() <= spacing,
            "crossing at {} for labels switching at 0.58",
            crossings[0]
        );
    }

    /// Box-Muller Gaussian blobs around three well-separated centers.
    fn gaussian_blobs(seed: u64, per_blob: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
        let centers = [(0.2, 0.25), (0.8, 0.25), (0.5, 0.8)];
        let sigma = 0.07;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut tags = Vec::new();
        for (k, &(cx, cy)) in centers.iter().enumerate() {
            for _ in 0..per_blob {
                let u1: f64 = 1.0 - rng.gen::<f64>();
                let u2: f64 = rng.gen();
                let r = (-2.0 * u1.ln()).sqrt();
                let (z0, z1) = (
                    r * (2.0 * std::f64::consts::PI * u2).cos(),
                    r * (2.0 * std::f64::consts::PI * u2).sin(),
                );
                x.push(vec![
                    (cx + sigma * z0).clamp(0.0, 1.0),
                    (cy + sigma * z1).clamp(0.0, 1.0),
                ]);
                tags.push(k + 1);
            }
        }
        (x, tags)
    }

    #[test]
    fn kkt_conditions_hold_at_convergence() {
        let (x, tags) = gaussian_blobs(42, 25);
        // Binary problem: blob 1 vs blobs 2+3.
        let y: Vec<i8> = tags.iter().map(|&t| if t == 1 { 1 } else { -1 }).collect();
        let params = SvmParams::default();
        let m = train_binary(&x, &y, &params, &unit_bounds(2)).unwrap();
        m.validate().unwrap();

        // Recover the full dual vector: non-support samples have weight zero.
        let mut lambda = vec![0.0f64; x.len()];
        for (sv, &a) in m.support_vectors.iter().zip(&m.alphas) {
            let i = x.iter().position(|xi| xi == sv).unwrap();
            lambda[i] = a.abs();
        }
        let kkt_tol = 5.0 * params.tol;
        for (i, xi) in x.iter().enumerate() {
            let yf = m.decision(xi) * y[i] as f64;
            if lambda[i] <= 0.0 {
                assert!(yf >= 1.0 - kkt_tol, "sample {i}: y·f = {yf} with λ = 0");
            } else if lambda[i] >= params.c {
                assert!(yf <= 1.0 + kkt_tol, "sample {i}: y·f = {yf} with λ = C");
            } else {
                assert!((yf - 1.0).abs() <= kkt_tol, "sample {i}: y·f = {yf} interior");
            }
        }
        let signed_sum: f64 = m.alphas.iter().sum();
        assert!(signed_sum.abs() < 1e-6);
        assert!(m.alphas.iter().all(|a| a.abs() <= params.c * (1.0 + 1e-9)));
    }

    #[test]
    fn training_is_deterministic() {
        let (x, tags) = gaussian_blobs(7, 20);
        let y: Vec<i8> = tags.iter().map(|&t| if t == 2 { 1 } else { -1 }).collect();
        let a = train_binary(&x, &y, &SvmParams::default(), &unit_bounds(2)).unwrap();
        let b = train_binary(&x, &y, &SvmParams::default(), &unit_bounds(2)).unwrap();
        assert_eq!(a, b);
        let ra = train_multiclass(&x, &tags, &SvmParams::default(), &unit_bounds(2)).unwrap();
        let rb = train_multiclass(&x, &tags, &SvmParams::default(), &unit_bounds(2)).unwrap();
        assert_eq!(ra, rb);
    }

    #[test]
    fn three_blob_router_beats_the_accuracy_floor() {
        let (x, tags) = gaussian_blobs(42, 30);
        let router = train_multiclass(&x, &tags, &SvmParams::default(), &unit_bounds(2)).unwrap();
        router.validate().unwrap();
        assert_eq!(router.pairs.len(), 3);

        // Nearest-centroid oracle as the sanity floor for this dataset.
        let mut centroids = vec![(0.0f64, 0.0f64, 0usize); 3];
        for (xi, &t) in x.iter().zip(&tags) {
            centroids[t - 1].0 += xi[0];
            centroids[t - 1].1 += xi[1];
            centroids[t - 1].2 += 1;
        }
        let centroids: Vec<(f64, f64)> = centroids
            .iter()
            .map(|&(sx, sy, n)| (sx / n as f64, sy / n as f64))
            .collect();
        let nearest = |xi: &[f64]| {
            let mut best = 0;
            for k in 1..3 {
                let d = |c: (f64, f64)| (xi[0] - c.0).powi(2) + (xi[1] - c.1).powi(2);
                if d(centroids[k]) < d(centroids[best]) {
                    best = k;
                }
            }
            best + 1
        };

        let mut svm_hits = 0;
        let mut oracle_hits = 0;
        for (xi, &t) in x.iter().zip(&tags) {
            if router.predict_region(xi).region_id == t {
                svm_hits += 1;
            }
            if nearest(xi) == t {
                oracle_hits += 1;
            }
        }
        let n = x.len() as f64;
        assert!(oracle_hits as f64 / n >= 0.95, "dataset is not separable enough");
        assert!(
            svm_hits as f64 / n >= 0.95,
            "resubstitution accuracy {}",
            svm_hits as f64 / n
        );
    }

    #[test]
    fn single_region_router_is_constant() {
        let x = vec![vec![0.1, 0.1], vec![0.9, 0.9]];
        let tags = vec![1usize, 1];
        let router = train_multiclass(&x, &tags, &SvmParams::default(), &unit_bounds(2)).unwrap();
        assert!(router.pairs.is_empty());
        let p = router.predict_region(&[0.5, 0.5]);
        assert_eq!(p.region_id, 1);
        assert!(!p.low_confidence);
    }

    #[test]
    fn two_region_router_matches_the_binary_model() {
        let (x, tags3) = gaussian_blobs(3, 20);
        let (x, tags): (Vec<Vec<f64>>, Vec<usize>) = x
            .into_iter()
            .zip(tags3)
            .filter(|(_, t)| *t <= 2)
            .unzip();
        let router = train_multiclass(&x, &tags, &SvmParams::default(), &unit_bounds(2)).unwrap();
        let y: Vec<i8> = tags.iter().map(|&t| if t == 1 { 1 } else { -1 }).collect();
        let binary = train_binary(&x, &y, &SvmParams::default(), &unit_bounds(2)).unwrap();
        assert_eq!(router.pairs.len(), 1);
        assert_eq!(router.pairs[0].model, binary);
        for probe in [[0.1, 0.2], [0.5, 0.5], [0.8, 0.3], [0.4, 0.9]] {
            let expected = if binary.predict(&probe).0 == 1 { 1 } else { 2 };
            assert_eq!(router.predict_region(&probe).region_id, expected);
        }
    }

    #[test]
    fn classification_is_invariant_under_bound_scaling() {
        // The same physical data expressed in two unit systems normalizes to
        // identical inputs, so the routers must agree everywhere.
        let (x_norm, tags) = gaussian_blobs(9, 15);
        let small = vec![(2.0, 4.0), (10.0, 50.0)];
        let large = vec![(2000.0, 4000.0), (10_000.0, 50_000.0)];
        let denorm = |b: &[(f64, f64)], u: &[f64]| {
            b.iter()
                .zip(u)
                .map(|(&(lo, hi), &t)| lo + t * (hi - lo))
                .collect::<Vec<f64>>()
        };
        let router_small = train_multiclass(&x_norm, &tags, &SvmParams::default(), &small).unwrap();
        let router_large = train_multiclass(&x_norm, &tags, &SvmParams::default(), &large).unwrap();
        for probe_u in [[0.3, 0.3], [0.7, 0.2], [0.5, 0.8], [0.05, 0.95]] {
            assert_eq!(
                router_small.predict_region(&denorm(&small, &probe_u)).region_id,
                router_large.predict_region(&denorm(&large, &probe_u)).region_id
            );
        }
    }

    #[test]
    fn degenerate_labels_are_rejected() {
        let x = vec![vec![0.1], vec![0.9]];
        let err = train_binary(&x, &[1, 1], &SvmParams::default(), &unit_bounds(1));
        assert!(matches!(err, Err(SvmError::DegenerateLabels(_))));
        let err = train_binary(&[], &[], &SvmParams::default(), &unit_bounds(1));
        assert!(matches!(err, Err(SvmError::DegenerateLabels(_))));
        // Region 2 is missing: tags reach 3 but skip 2.
        let x = vec![vec![0.1], vec![0.5], vec![0.9]];
        let err = train_multiclass(&x, &[1, 1, 3], &SvmParams::default(), &unit_bounds(1));
        assert!(matches!(err, Err(SvmError::DegenerateLabels(_))));
    }

    /// A constant-decision model: no support vectors, bias only.
    fn constant_model(bias: f64, bounds: &[(f64, f64)]) -> SvmModel {
        SvmModel {
            support_vectors: Vec::new(),
            alphas: Vec::new(),
            bias,
            gamma: 0.5,
            c: 10.0,
            bounds: bounds.to_vec(),
        }
    }

    #[test]
    fn vote_ties_break_by_summed_margin_and_flag_weak_winners() {
        let bounds = unit_bounds(2);
        let pair = |a: usize, b: usize, bias: f64| PairwiseSvm {
            region_a: a,
            region_b: b,
            model: constant_model(bias, &bounds),
        };
        // Three-way 1-1-1 vote cycle: region 3's big win over region 1
        // dominates the summed margins.
        let router = MulticlassSvm {
            region_ids: vec![1, 2, 3],
            pairs: vec![pair(1, 2, 0.1), pair(1, 3, -2.0), pair(2, 3, 0.1)],
            bounds: bounds.clone(),
        };
        let p = router.predict_region(&[0.5, 0.5]);
        assert_eq!(p.votes, vec![1, 1, 1]);
        assert_eq!(p.region_id, 3);
        assert!(!p.low_confidence, "margin {}", p.margins[2]);

        // Four regions, 2-2-1-1 votes: both leaders carry negative summed
        // margins, so the winner is flagged low-confidence.
        let router = MulticlassSvm {
            region_ids: vec![1, 2, 3, 4],
            pairs: vec![
                pair(1, 2, 0.1),
                pair(1, 3, 0.1),
                pair(1, 4, -5.0),
                pair(2, 3, 0.01),
                pair(2, 4, 0.01),
                pair(3, 4, 1.0),
            ],
            bounds: bounds.clone(),
        };
        let p = router.predict_region(&[0.5, 0.5]);
        assert_eq!(p.votes, vec![2, 2, 1, 1]);
        assert_eq!(p.region_id, 2);
        assert!((p.margins[1] - -0.08).abs() < 1e-12);
        assert!(p.low_confidence);
    }

    #[test]
    fn models_round_trip_through_json() {
        let (x, tags) = gaussian_blobs(5, 12);
        let router = train_multiclass(&x, &tags, &SvmParams::default(), &unit_bounds(2)).unwrap();
        let text = serde_json::to_string(&router).unwrap();
        let back: MulticlassSvm = serde_json::from_str(&text).unwrap();
        assert_eq!(router, back);
        back.validate().unwrap();
        // Unknown fields are rejected.
        let bad = text.replacen("{", "{\"extra\":1,", 1);
        assert!(serde_json::from_str::<MulticlassSvm>(&bad).is_err());
    }
}
