//! String-level encoders and parsers for the interchange formats.
//!
//! Model-like data (substructures, reduced matrices, surrogate bundles,
//! assembly plans, region maps) travels as JSON; tabular data (FRF sweeps,
//! labeled samples) travels as CSV with floats printed at 17 significant
//! digits so every value round-trips bit-exactly. Parsers validate structure
//! as well as syntax: dimension mismatches, non-finite numbers, and
//! inconsistent tables are rejected, never propagated.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{AssemblyPlan, FrfResult};
use crate::cb::CBReduced;
use crate::explore::{Label, LabeledSample, RegionTagging};
use crate::model::{ModelParams, Substructure};
use crate::pca::feature_len;
use crate::projection::CommonBasis;
use crate::surrogate::MultiRegionSurrogate;

/// Errors raised by parsers and writers.
#[derive(Debug, Error)]
pub enum IoError {
    /// JSON syntax or shape error.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    /// Structurally valid input with inconsistent content.
    #[error("invalid content: {0}")]
    Invalid(String),
    /// Malformed CSV.
    #[error("csv error: {0}")]
    Csv(String),
}

/// Format marker embedded in surrogate bundles.
pub const SURROGATE_FORMAT: &str = "cbmorph-surrogate/1";

/// 64-bit FNV-1a digest as 16 lowercase hex digits; used to fingerprint the
/// training data a surrogate bundle was built from.
pub fn fnv1a64_hex(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(field: &str, s: &str, line: usize) -> Result<f64, IoError> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| IoError::Csv(format!("line {line}: {field} `{s}` is not a number")))?;
    if !v.is_finite() {
        return Err(IoError::Csv(format!(
            "line {line}: {field} `{s}` is not finite"
        )));
    }
    Ok(v)
}

fn parse_opt_usize(field: &str, s: &str, line: usize) -> Result<Option<usize>, IoError> {
    let t = s.trim();
    if t.is_empty() {
        return Ok(None);
    }
    t.parse()
        .map(Some)
        .map_err(|_| IoError::Csv(format!("line {line}: {field} `{s}` is not an index")))
}

fn all_finite<'a, I: IntoIterator<Item = &'a f64>>(values: I) -> bool {
    values.into_iter().all(|v| v.is_finite())
}

// ---------------------------------------------------------------------------
// Substructure JSON
// ---------------------------------------------------------------------------

/// Encodes a full-order substructure as JSON.
pub fn write_substructure_json(s: &Substructure) -> String {
    serde_json::to_string_pretty(s).expect("substructure serialization cannot fail")
}

/// Parses and validates a full-order substructure. The constructors re-check
/// every invariant (partition, symmetry of sizes, finiteness), so a parsed
/// substructure is as trustworthy as a built one.
pub fn parse_substructure_json(text: &str) -> Result<Substructure, IoError> {
    let raw: Substructure = serde_json::from_str(text)?;
    let params = ModelParams::new(raw.params.names, raw.params.values, raw.params.bounds)
        .map_err(|e| IoError::Invalid(e.to_string()))?;
    Substructure::new(
        raw.m,
        raw.k,
        raw.f,
        raw.interface_dofs,
        raw.internal_dofs,
        params,
    )
    .map_err(|e| IoError::Invalid(e.to_string()))
}

// ---------------------------------------------------------------------------
// Reduced-matrix JSON
// ---------------------------------------------------------------------------

fn validate_cb(cb: &CBReduced, what: &str) -> Result<(), IoError> {
    let r = cb.n_i + cb.q;
    if r == 0 {
        return Err(IoError::Invalid(format!("{what}: zero reduced dimension")));
    }
    if cb.mhat.nrows() != r || cb.mhat.ncols() != r {
        return Err(IoError::Invalid(format!(
            "{what}: mass block is {}×{}, expected {r}×{r}",
            cb.mhat.nrows(),
            cb.mhat.ncols()
        )));
    }
    if cb.khat.nrows() != r || cb.khat.ncols() != r {
        return Err(IoError::Invalid(format!(
            "{what}: stiffness block is {}×{}, expected {r}×{r}",
            cb.khat.nrows(),
            cb.khat.ncols()
        )));
    }
    if cb.fhat.len() != r {
        return Err(IoError::Invalid(format!(
            "{what}: load vector has {} entries, expected {r}",
            cb.fhat.len()
        )));
    }
    if !all_finite(cb.mhat.iter())
        || !all_finite(cb.khat.iter())
        || !all_finite(cb.fhat.iter())
    {
        return Err(IoError::Invalid(format!("{what}: non-finite entry")));
    }
    Ok(())
}

/// Encodes a reduced model as JSON.
pub fn write_cb_reduced_json(cb: &CBReduced) -> String {
    serde_json::to_string_pretty(cb).expect("reduced-model serialization cannot fail")
}

/// Parses a reduced model and validates its block sizes and finiteness.
pub fn parse_cb_reduced_json(text: &str) -> Result<CBReduced, IoError> {
    let cb: CBReduced = serde_json::from_str(text)?;
    validate_cb(&cb, "reduced model")?;
    Ok(cb)
}

// ---------------------------------------------------------------------------
// Surrogate bundle JSON
// ---------------------------------------------------------------------------

/// A trained surrogate with its training provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateBundle {
    /// Format marker, [`SURROGATE_FORMAT`].
    pub format: String,
    /// [`fnv1a64_hex`] digest of the training-sample table.
    pub training_digest: String,
    /// Training warnings (undersized regions, conditioning notes).
    pub warnings: Vec<String>,
    /// Region ids that were tagged but had too few samples to train.
    pub excluded_regions: Vec<usize>,
    /// The trained model.
    pub model: MultiRegionSurrogate,
}

fn validate_bundle(bundle: &SurrogateBundle) -> Result<(), IoError> {
    if bundle.format != SURROGATE_FORMAT {
        return Err(IoError::Invalid(format!(
            "unsupported bundle format `{}`, expected `{SURROGATE_FORMAT}`",
            bundle.format
        )));
    }
    let m = &bundle.model;
    if m.regions.is_empty() {
        return Err(IoError::Invalid("bundle holds no trained regions".into()));
    }
    let d = m.space.bounds.len();
    if m.router.bounds != m.space.bounds {
        return Err(IoError::Invalid(
            "router bounds disagree with the design space".into(),
        ));
    }
    let p = feature_len(m.r(), m.damping);
    for region in &m.regions {
        if region.theta_ref.len() != d {
            return Err(IoError::Invalid(format!(
                "region {}: reference point has {} coordinates, expected {d}",
                region.region_id,
                region.theta_ref.len()
            )));
        }
        if region.pca.mean.len() != p {
            return Err(IoError::Invalid(format!(
                "region {}: feature length {} disagrees with n_i={}, q={}",
                region.region_id,
                region.pca.mean.len(),
                m.n_i,
                m.q
            )));
        }
        if region.kriging.inputs.ncols() != d {
            return Err(IoError::Invalid(format!(
                "region {}: interpolant inputs have {} columns, expected {d}",
                region.region_id,
                region.kriging.inputs.ncols()
            )));
        }
        if region.kriging.outputs.len() != region.pca.u {
            return Err(IoError::Invalid(format!(
                "region {}: {} interpolant outputs for {} latent coordinates",
                region.region_id,
                region.kriging.outputs.len(),
                region.pca.u
            )));
        }
    }
    Ok(())
}

/// Encodes a surrogate bundle as JSON.
pub fn write_surrogate_bundle_json(bundle: &SurrogateBundle) -> String {
    serde_json::to_string_pretty(bundle).expect("bundle serialization cannot fail")
}

/// Parses a surrogate bundle and validates cross-field consistency.
pub fn parse_surrogate_bundle_json(text: &str) -> Result<SurrogateBundle, IoError> {
    let bundle: SurrogateBundle = serde_json::from_str(text)?;
    validate_bundle(&bundle)?;
    Ok(bundle)
}

// ---------------------------------------------------------------------------
// Assembly plan JSON
// ---------------------------------------------------------------------------

/// Encodes an assembly plan as JSON.
pub fn write_assembly_plan_json(plan: &AssemblyPlan) -> String {
    serde_json::to_string_pretty(plan).expect("plan serialization cannot fail")
}

/// Parses an assembly plan. Cell blocks are validated here; the wiring
/// itself is validated by assembly.
pub fn parse_assembly_plan_json(text: &str) -> Result<AssemblyPlan, IoError> {
    let plan: AssemblyPlan = serde_json::from_str(text)?;
    if plan.cells.is_empty() {
        return Err(IoError::Invalid("plan holds no cells".into()));
    }
    if plan.connectivity.len() != plan.cells.len() {
        return Err(IoError::Invalid(format!(
            "{} connectivity rows for {} cells",
            plan.connectivity.len(),
            plan.cells.len()
        )));
    }
    for (c, cell) in plan.cells.iter().enumerate() {
        validate_cb(cell, &format!("cell {c}"))?;
    }
    Ok(plan)
}

// ---------------------------------------------------------------------------
// Region map JSON
// ---------------------------------------------------------------------------

fn validate_basis(basis: &CommonBasis, what: &str) -> Result<(), IoError> {
    if basis.q == 0 {
        return Err(IoError::Invalid(format!("{what}: zero retained modes")));
    }
    let n_j = basis.r.nrows();
    if n_j == 0 || basis.r.ncols() != basis.q {
        return Err(IoError::Invalid(format!(
            "{what}: projection operator is {}×{}, expected n_j×{}",
            basis.r.nrows(),
            basis.r.ncols(),
            basis.q
        )));
    }
    if basis.phi_ref.nrows() != n_j || basis.phi_ref.ncols() != basis.q {
        return Err(IoError::Invalid(format!(
            "{what}: mode block is {}×{}, expected {}×{}",
            basis.phi_ref.nrows(),
            basis.phi_ref.ncols(),
            n_j,
            basis.q
        )));
    }
    if basis.values_ref.len() != basis.q {
        return Err(IoError::Invalid(format!(
            "{what}: {} eigenvalues for {} modes",
            basis.values_ref.len(),
            basis.q
        )));
    }
    if !all_finite(basis.r.iter())
        || !all_finite(basis.phi_ref.iter())
        || !all_finite(basis.values_ref.iter())
        || !all_finite(basis.theta_ref.iter())
    {
        return Err(IoError::Invalid(format!("{what}: non-finite entry")));
    }
    Ok(())
}

/// Encodes a region map (assignments plus founding bases) as JSON.
pub fn write_region_map_json(map: &RegionTagging) -> String {
    serde_json::to_string_pretty(map).expect("region-map serialization cannot fail")
}

/// Parses a region map and validates ids, assignment range, and basis
/// shapes.
pub fn parse_region_map_json(text: &str) -> Result<RegionTagging, IoError> {
    let map: RegionTagging = serde_json::from_str(text)?;
    if map.references.is_empty() {
        return Err(IoError::Invalid("region map holds no references".into()));
    }
    let q = map.references[0].basis.q;
    let d = map.references[0].theta.len();
    for (i, reference) in map.references.iter().enumerate() {
        if reference.region_id != i + 1 {
            return Err(IoError::Invalid(format!(
                "reference {i} carries region id {}, expected {}",
                reference.region_id,
                i + 1
            )));
        }
        let what = format!("region {} basis", reference.region_id);
        validate_basis(&reference.basis, &what)?;
        if reference.basis.q != q {
            return Err(IoError::Invalid(format!(
                "{what}: retains {} modes while region 1 retains {q}",
                reference.basis.q
            )));
        }
        if reference.theta.len() != d || reference.basis.theta_ref != reference.theta {
            return Err(IoError::Invalid(format!(
                "{what}: founding point disagrees with the basis reference"
            )));
        }
    }
    let n_regions = map.references.len();
    for (i, &tag) in map.assignments.iter().enumerate() {
        if tag == 0 || tag > n_regions {
            return Err(IoError::Invalid(format!(
                "sample {i} is assigned region {tag}, outside 1..={n_regions}"
            )));
        }
    }
    Ok(map)
}

// ---------------------------------------------------------------------------
// FRF CSV
// ---------------------------------------------------------------------------

/// A sweep as tabular interchange data: the metric survives as its tag only.
#[derive(Debug, Clone, PartialEq)]
pub struct FrfTable {
    /// Sweep grid in Hz, strictly increasing.
    pub frequencies_hz: Vec<f64>,
    /// Complex response per grid point.
    pub response: Vec<Complex<f64>>,
    /// Metric tag, one word per table.
    pub metric_tag: String,
}

impl From<&FrfResult> for FrfTable {
    fn from(result: &FrfResult) -> Self {
        Self {
            frequencies_hz: result.frequencies_hz.clone(),
            response: result.response.clone(),
            metric_tag: result.metric.tag().to_string(),
        }
    }
}

const FRF_HEADER: &str = "frequency_hz,real,imag,magnitude,metric";

/// Encodes a sweep as CSV with bit-exact floats.
pub fn write_frf_csv(table: &FrfTable) -> Result<String, IoError> {
    if table.frequencies_hz.len() != table.response.len() {
        return Err(IoError::Invalid(format!(
            "{} frequencies for {} responses",
            table.frequencies_hz.len(),
            table.response.len()
        )));
    }
    if table.metric_tag.contains([',', '\n']) || table.metric_tag.trim().is_empty() {
        return Err(IoError::Invalid("metric tag is not a bare word".into()));
    }
    let mut out = String::from(FRF_HEADER);
    out.push('\n');
    for (f, v) in table.frequencies_hz.iter().zip(&table.response) {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(*f),
            fmt_f64(v.re),
            fmt_f64(v.im),
            fmt_f64(v.norm()),
            table.metric_tag
        ));
    }
    Ok(out)
}

/// Parses a sweep table, checking the header, monotone frequencies, a
/// uniform metric tag, and that the magnitude column matches the complex
/// response it claims to summarize.
pub fn parse_frf_csv(text: &str) -> Result<FrfTable, IoError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| IoError::Csv("empty table".into()))?;
    if header.trim() != FRF_HEADER {
        return Err(IoError::Csv(format!(
            "header `{header}` is not `{FRF_HEADER}`"
        )));
    }
    let mut frequencies = Vec::new();
    let mut response = Vec::new();
    let mut tag: Option<String> = None;
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(IoError::Csv(format!(
                "line {line_no}: {} fields, expected 5",
                fields.len()
            )));
        }
        let f = parse_f64("frequency", fields[0], line_no)?;
        let re = parse_f64("real part", fields[1], line_no)?;
        let im = parse_f64("imaginary part", fields[2], line_no)?;
        let mag = parse_f64("magnitude", fields[3], line_no)?;
        let v = Complex::new(re, im);
        if (mag - v.norm()).abs() > 1e-9 * v.norm().max(f64::MIN_POSITIVE) {
            return Err(IoError::Csv(format!(
                "line {line_no}: magnitude {mag} disagrees with |{re} + {im}i|"
            )));
        }
        let row_tag = fields[4].trim();
        if row_tag.is_empty() {
            return Err(IoError::Csv(format!("line {line_no}: empty metric tag")));
        }
        match &tag {
            None => tag = Some(row_tag.to_string()),
            Some(t) if t != row_tag => {
                return Err(IoError::Csv(format!(
                    "line {line_no}: metric tag `{row_tag}` differs from `{t}`"
                )));
            }
            Some(_) => {}
        }
        if let Some(&prev) = frequencies.last() {
            if f <= prev {
                return Err(IoError::Csv(format!(
                    "line {line_no}: frequency {f} does not increase past {prev}"
                )));
            }
        }
        frequencies.push(f);
        response.push(v);
    }
    let metric_tag = tag.ok_or_else(|| IoError::Csv("table has no rows".into()))?;
    Ok(FrfTable {
        frequencies_hz: frequencies,
        response,
        metric_tag,
    })
}

// ---------------------------------------------------------------------------
// Labeled-samples CSV
// ---------------------------------------------------------------------------

/// One row of a sample table: a design point with its exploration verdict
/// and, when known, its region assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    /// Physical design point.
    pub theta: Vec<f64>,
    /// Shell index for shelled scans; absent for plain sample sets.
    pub shell: Option<usize>,
    /// Exploration verdict.
    pub label: Label,
    /// Projection rank, when the sample was evaluated.
    pub rank: Option<usize>,
    /// Projection reciprocal condition number, when evaluated.
    pub rcond: Option<f64>,
    /// 1-based region assignment, when regions were tagged.
    pub region_id: Option<usize>,
}

impl SampleRecord {
    /// A record of one labeling-scan sample.
    pub fn from_labeled(sample: &LabeledSample) -> Self {
        Self {
            theta: sample.theta.clone(),
            shell: Some(sample.shell),
            label: sample.label,
            rank: sample.diagnostics.map(|d| d.rank),
            rcond: sample.diagnostics.map(|d| d.rcond),
            region_id: None,
        }
    }
}

fn label_tag(label: Label) -> &'static str {
    match label {
        Label::Accepted => "accepted",
        Label::Rejected => "rejected",
        Label::Skipped => "skipped",
    }
}

fn label_from_tag(tag: &str, line: usize) -> Result<Label, IoError> {
    match tag.trim() {
        "accepted" => Ok(Label::Accepted),
        "rejected" => Ok(Label::Rejected),
        "skipped" => Ok(Label::Skipped),
        other => Err(IoError::Csv(format!(
            "line {line}: unknown label `{other}`"
        ))),
    }
}

/// Encodes sample records as CSV. `dim` fixes the table width so an empty
/// record set still writes a well-formed header.
pub fn write_labeled_samples_csv(records: &[SampleRecord], dim: usize) -> Result<String, IoError> {
    if dim == 0 {
        return Err(IoError::Invalid("zero-dimensional design space".into()));
    }
    let mut out = String::new();
    for k in 0..dim {
        out.push_str(&format!("theta_{k},"));
    }
    out.push_str("shell,label,rank,rcond,region_id\n");
    for (i, record) in records.iter().enumerate() {
        if record.theta.len() != dim {
            return Err(IoError::Invalid(format!(
                "record {i} has {} coordinates, expected {dim}",
                record.theta.len()
            )));
        }
        if !all_finite(record.theta.iter()) {
            return Err(IoError::Invalid(format!("record {i}: non-finite point")));
        }
        if record.label == Label::Skipped && (record.rank.is_some() || record.rcond.is_some()) {
            return Err(IoError::Invalid(format!(
                "record {i} is skipped yet carries diagnostics"
            )));
        }
        for &v in &record.theta {
            out.push_str(&fmt_f64(v));
            out.push(',');
        }
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            record.shell.map_or(String::new(), |s| s.to_string()),
            label_tag(record.label),
            record.rank.map_or(String::new(), |r| r.to_string()),
            record.rcond.map_or(String::new(), fmt_f64),
            record.region_id.map_or(String::new(), |r| r.to_string()),
        ));
    }
    Ok(out)
}

/// Parses a sample table; the dimension is inferred from the header.
pub fn parse_labeled_samples_csv(text: &str) -> Result<Vec<SampleRecord>, IoError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| IoError::Csv("empty table".into()))?;
    let columns: Vec<&str> = header.trim().split(',').collect();
    let tail = ["shell", "label", "rank", "rcond", "region_id"];
    if columns.len() < tail.len() + 1 {
        return Err(IoError::Csv(format!("header `{header}` is too narrow")));
    }
    let dim = columns.len() - tail.len();
    for (k, col) in columns.iter().take(dim).enumerate() {
        if *col != format!("theta_{k}") {
            return Err(IoError::Csv(format!(
                "column {k} is `{col}`, expected `theta_{k}`"
            )));
        }
    }
    if columns[dim..] != tail {
        return Err(IoError::Csv(format!(
            "trailing columns `{}` are not `{}`",
            columns[dim..].join(","),
            tail.join(",")
        )));
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + tail.len() {
            return Err(IoError::Csv(format!(
                "line {line_no}: {} fields, expected {}",
                fields.len(),
                dim + tail.len()
            )));
        }
        let theta = (0..dim)
            .map(|k| parse_f64(&format!("theta_{k}"), fields[k], line_no))
            .collect::<Result<Vec<f64>, _>>()?;
        let shell = parse_opt_usize("shell", fields[dim], line_no)?;
        let label = label_from_tag(fields[dim + 1], line_no)?;
        let rank = parse_opt_usize("rank", fields[dim + 2], line_no)?;
        let rcond = if fields[dim + 3].trim().is_empty() {
            None
        } else {
            Some(parse_f64("rcond", fields[dim + 3], line_no)?)
        };
        let region_id = parse_opt_usize("region_id", fields[dim + 4], line_no)?;
        if label == Label::Skipped && (rank.is_some() || rcond.is_some()) {
            return Err(IoError::Csv(format!(
                "line {line_no}: skipped sample carries diagnostics"
            )));
        }
        if let Some(r) = region_id {
            if r == 0 {
                return Err(IoError::Csv(format!(
                    "line {line_no}: region ids are 1-based"
                )));
            }
        }
        records.push(SampleRecord {
            theta,
            shell,
            label,
            rank,
            rcond,
            region_id,
        });
    }
    Ok(records)
}
