//! `cbmorph` — command-line driver for the surrogate-modeling pipeline.
//!
//! Six subcommands cover the pipeline end to end: `rank-scan` and
//! `perturbation-scan` chart where a projection basis stays well conditioned,
//! `detect-regions` samples the design space and learns region boundaries,
//! `train` fits the per-region surrogates, `predict-frf` assembles chains and
//! sweeps their frequency response with every baseline, and `compare` diffs
//! two response tables.
//!
//! Every command reads an optional JSON config (`--config`), writes its
//! artifacts under `--out`, and prints a single JSON summary to stdout.
//! Structured JSON-lines logs go to stderr when `CBMORPH_LOG` is set.
//! Exit codes: 0 success, 2 usage or input error, 3 computation failure.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::json;

use cbmorph_core::assembly::{
    assemble, chain_connectivity, frf_sweep, AssemblyPlan, FrfMetric, FrfResult, LoadSpec,
};
use cbmorph_core::cb::{full_order_passthrough, CBReduced};
use cbmorph_core::config::{
    parse_config_json, ExperimentConfig, ModelPreset, RegionMode,
};
use cbmorph_core::explore::{
    evaluate_tag_inputs, label_samples, latin_hypercube, mode_swap_permutation, tag_regions,
    Label, LabelConfig, ParameterSpace,
};
use cbmorph_core::io::{
    fnv1a64_hex, parse_frf_csv, parse_surrogate_bundle_json, write_frf_csv,
    write_labeled_samples_csv, write_region_map_json, write_surrogate_bundle_json, FrfTable,
    SampleRecord, SurrogateBundle, SURROGATE_FORMAT,
};
use cbmorph_core::lagrange::{gaussian_nodes, LagrangeGrid};
use cbmorph_core::model::{ModelError, Substructure};
use cbmorph_core::projection::{
    cb_reduce_common, cb_reduce_common_unchecked, common_basis, diagnostics, CommonBasis,
};
use cbmorph_core::surrogate::predict_cb;
use cbmorph_core::svm::{train_binary, train_multiclass};

/// Interpolation surrogates for parameterized substructure matrices.
#[derive(Parser)]
#[command(name = "cbmorph", version, about)]
struct Cli {
    /// JSON experiment configuration; defaults to the command's preset.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// RNG seed for sampling commands (default: the config's, then 42).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output directory for artifacts (default: the config's, then `out`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Lattice,
    Resonator,
}

impl PresetArg {
    fn config(self) -> ExperimentConfig {
        match self {
            PresetArg::Lattice => ExperimentConfig::lattice(),
            PresetArg::Resonator => ExperimentConfig::resonator(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Single,
    Multi,
}

#[derive(Subcommand)]
enum Command {
    /// Chart projection rank and conditioning against the retained-mode count.
    RankScan {
        /// Model preset when no --config is given.
        #[arg(long, value_enum, default_value_t = PresetArg::Lattice)]
        preset: PresetArg,
    },
    /// Sweep the last design coordinate and chart rank flips and mode crossings.
    PerturbationScan {
        /// Model preset when no --config is given.
        #[arg(long, value_enum, default_value_t = PresetArg::Lattice)]
        preset: PresetArg,
    },
    /// Sample the design space and learn well-conditioned region boundaries.
    DetectRegions {
        /// Model preset when no --config is given.
        #[arg(long, value_enum, default_value_t = PresetArg::Resonator)]
        preset: PresetArg,
        /// Override the configured detection strategy.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Train per-region surrogates and write a model bundle.
    Train {
        /// Model preset when no --config is given.
        #[arg(long, value_enum, default_value_t = PresetArg::Resonator)]
        preset: PresetArg,
    },
    /// Predict an assembled chain's frequency response with every baseline.
    PredictFrf {
        /// Model preset when no --config is given.
        #[arg(long, value_enum, default_value_t = PresetArg::Resonator)]
        preset: PresetArg,
        /// Trained surrogate bundle (default: <out>/surrogate.json).
        #[arg(long, value_name = "PATH")]
        bundle: Option<PathBuf>,
        /// Design point override, comma-separated (e.g. 10.5,42).
        #[arg(long, value_name = "COORDS")]
        theta: Option<String>,
    },
    /// Compare two response tables point by point.
    Compare {
        /// Reference table.
        reference: PathBuf,
        /// Candidate table.
        candidate: PathBuf,
    },
}

/// A command failure with its exit code.
enum CliError {
    /// Bad arguments, config, or input data (exit 2).
    Usage(String),
    /// A computation failed (exit 3).
    Runtime(String),
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

// ---------------------------------------------------------------------------
// Logging
// ---------------------------------------------------------------------------

/// Verbosity from `CBMORPH_LOG`: `debug` shows everything, any other
/// non-empty value (canonically `info`) hides debug events, unset/`0`/`off`
/// silences logging entirely.
fn log_verbosity() -> u8 {
    match std::env::var("CBMORPH_LOG") {
        Ok(v) if v == "debug" => 2,
        Ok(v) if !v.is_empty() && v != "0" && v != "off" => 1,
        _ => 0,
    }
}

/// One JSON log line on stderr, gated by `CBMORPH_LOG`.
fn log_event(level: &str, event: &str, fields: serde_json::Value) {
    let verbosity = log_verbosity();
    if verbosity == 0 || (level == "debug" && verbosity < 2) {
        return;
    }
    let mut record = json!({ "level": level, "event": event });
    if let (Some(obj), Some(extra)) = (record.as_object_mut(), fields.as_object()) {
        for (k, v) in extra {
            obj.insert(k.clone(), v.clone());
        }
    }
    eprintln!("{record}");
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn load_config(path: &Option<PathBuf>, preset: ExperimentConfig) -> Result<ExperimentConfig, CliError> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
            parse_config_json(&text).map_err(usage)
        }
        None => Ok(preset),
    }
}

fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    log_event("debug", "artifact", json!({ "path": path.display().to_string() }));
    Ok(path)
}

fn build_for(preset: &ModelPreset) -> impl Fn(&[f64]) -> Result<Substructure, ModelError> + '_ {
    move |theta| {
        preset
            .build(theta)
            .map_err(|e| ModelError::Parameter(e.to_string()))
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn inside(space: &ParameterSpace, theta: &[f64]) -> bool {
    theta.len() == space.bounds.len()
        && theta
            .iter()
            .zip(&space.bounds)
            .all(|(&v, &(lo, hi))| lo <= v && v <= hi)
}

/// A reference basis restricted to its first `q` modes.
fn truncate_basis(basis: &CommonBasis, q: usize) -> CommonBasis {
    CommonBasis {
        r: basis.r.columns(0, q).into_owned(),
        phi_ref: basis.phi_ref.columns(0, q).into_owned(),
        values_ref: basis.values_ref[..q].to_vec(),
        q,
        theta_ref: basis.theta_ref.clone(),
    }
}

// ---------------------------------------------------------------------------
// rank-scan
// ---------------------------------------------------------------------------

fn run_rank_scan(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<serde_json::Value, CliError> {
    let scan = &cfg.rank_scan;
    let nominal = cfg.model.nominal_theta();
    let reference = cfg.model.build(&nominal).map_err(usage)?;
    if scan.q_max > reference.n_internal() {
        return Err(CliError::Usage(format!(
            "q_max {} exceeds the {} internal DoF",
            scan.q_max,
            reference.n_internal()
        )));
    }
    let (lo, hi) = scan.swap_range;
    log_event(
        "info",
        "rank-scan",
        json!({ "family": cfg.model.family(), "q_max": scan.q_max, "swap_range": [lo, hi], "seed": seed }),
    );

    // One eigensolve at q_max; per-q bases are leading slices. The candidate
    // modes are the reference's own, reordered by a seeded cycle confined to
    // the configured window, so any rank drop is caused by the swaps alone.
    let basis_full = common_basis(&reference, scan.q_max).map_err(runtime)?;
    let perm = mode_swap_permutation(scan.q_max, lo, hi, seed).map_err(usage)?;
    let phi_swapped = DMatrix::from_columns(
        &perm
            .iter()
            .map(|&p| basis_full.phi_ref.column(p))
            .collect::<Vec<_>>(),
    );

    let rows: Vec<(usize, usize, bool)> = (scan.q_min..=scan.q_max)
        .into_par_iter()
        .map(|q| {
            let basis = truncate_basis(&basis_full, q);
            let phi = phi_swapped.columns(0, q).into_owned();
            let d = diagnostics(&basis, &phi, &cfg.thresholds)
                .map_err(|e| e.to_string())?;
            Ok((q, d.rank, d.rank == q))
        })
        .collect::<Result<_, String>>()
        .map_err(CliError::Runtime)?;

    let mut csv = String::from("q,rank,full_rank\n");
    for &(q, rank, full) in &rows {
        csv.push_str(&format!("{q},{rank},{full}\n"));
    }
    let path = write_artifact(out, "rank_scan.csv", &csv)?;

    let defective: Vec<usize> = rows.iter().filter(|r| !r.2).map(|r| r.0).collect();
    Ok(json!({
        "command": "rank-scan",
        "family": cfg.model.family(),
        "seed": seed,
        "swap_range": [lo, hi],
        "q_range": [scan.q_min, scan.q_max],
        "n_full_rank": rows.len() - defective.len(),
        "defective_q": defective,
        "table": path.display().to_string(),
    }))
}

// ---------------------------------------------------------------------------
// perturbation-scan
// ---------------------------------------------------------------------------

fn run_perturbation_scan(cfg: &ExperimentConfig, out: &Path) -> Result<serde_json::Value, CliError> {
    let scan = &cfg.perturbation_scan;
    let nominal = cfg.model.nominal_theta();
    let last = *nominal.last().expect("non-empty point");
    let names = cfg.model.coordinate_names();
    let nominal_model = cfg.model.build(&nominal).map_err(usage)?;
    if scan.q + 1 > nominal_model.n_internal() {
        return Err(CliError::Usage(format!(
            "q {} needs q+1 internal modes but the model has {}",
            scan.q,
            nominal_model.n_internal()
        )));
    }
    let ref_value = scan.reference_value.unwrap_or(last);
    log_event(
        "info",
        "perturbation-scan",
        json!({
            "family": cfg.model.family(),
            "q": scan.q,
            "points": scan.n_points,
            "reference_value": ref_value,
        }),
    );

    let mut theta_ref = nominal.clone();
    *theta_ref.last_mut().expect("non-empty point") = ref_value;
    let ref_model = cfg.model.build(&theta_ref).map_err(usage)?;
    let reference = common_basis(&ref_model, scan.q).map_err(runtime)?;

    let (lo, hi) = scan.scale_range;
    let grid: Vec<f64> = (0..scan.n_points)
        .map(|i| last * (lo + (hi - lo) * i as f64 / (scan.n_points - 1) as f64))
        .collect();

    struct Row {
        value: f64,
        rank: usize,
        freq_q_hz: f64,
        freq_next_hz: f64,
    }
    let rows: Vec<Row> = grid
        .par_iter()
        .map(|&value| {
            let mut theta = nominal.clone();
            *theta.last_mut().expect("non-empty point") = value;
            let model = cfg.model.build(&theta).map_err(|e| e.to_string())?;
            let (pairs, _) =
                cbmorph_core::projection::fixed_interface_modes_of(&model, scan.q + 1)
                    .map_err(|e| e.to_string())?;
            let phi = pairs.vectors.columns(0, scan.q).into_owned();
            let rank = diagnostics(&reference, &phi, &cfg.thresholds)
                .map(|d| d.rank)
                .map_err(|e| e.to_string())?;
            let to_hz = |lambda: f64| lambda.max(0.0).sqrt() / (2.0 * std::f64::consts::PI);
            Ok(Row {
                value,
                rank,
                freq_q_hz: to_hz(pairs.values[scan.q - 1]),
                freq_next_hz: to_hz(pairs.values[scan.q]),
            })
        })
        .collect::<Result<_, String>>()
        .map_err(CliError::Runtime)?;

    let mut csv = format!(
        "{},rank,freq_q_hz,freq_next_hz\n",
        names.last().copied().unwrap_or("theta_last")
    );
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt(row.value),
            row.rank,
            fmt(row.freq_q_hz),
            fmt(row.freq_next_hz)
        ));
    }
    let path = write_artifact(out, "perturbation_scan.csv", &csv)?;

    // Sweep value where the rank first drops below q, and where the two
    // tracked frequency branches come closest (their crossing).
    let first_defective = rows.iter().find(|r| r.rank < scan.q).map(|r| r.value);
    let crossing = rows
        .iter()
        .min_by(|a, b| {
            let ga = (a.freq_next_hz - a.freq_q_hz).abs();
            let gb = (b.freq_next_hz - b.freq_q_hz).abs();
            ga.partial_cmp(&gb).expect("finite gaps")
        })
        .map(|r| r.value);
    Ok(json!({
        "command": "perturbation-scan",
        "family": cfg.model.family(),
        "q": scan.q,
        "reference_value": ref_value,
        "first_defective_value": first_defective,
        "min_gap_value": crossing,
        "table": path.display().to_string(),
    }))
}

// ---------------------------------------------------------------------------
// detect-regions
// ---------------------------------------------------------------------------

fn run_detect_regions(
    cfg: &ExperimentConfig,
    seed: u64,
    out: &Path,
    mode_override: Option<ModeArg>,
) -> Result<serde_json::Value, CliError> {
    let mode = match mode_override {
        Some(ModeArg::Single) => RegionMode::Single,
        Some(ModeArg::Multi) => RegionMode::Multi,
        None => cfg.detect_regions.mode,
    };
    let space = cfg.model.space().map_err(usage)?;
    let nominal = cfg.model.nominal_theta();
    let section = &cfg.detect_regions;
    let build = build_for(&cfg.model);
    log_event(
        "info",
        "detect-regions",
        json!({
            "family": cfg.model.family(),
            "mode": if mode == RegionMode::Single { "single" } else { "multi" },
            "n_samples": section.n_samples,
            "seed": seed,
        }),
    );

    match mode {
        RegionMode::Single => {
            let label_cfg = LabelConfig {
                q: section.q,
                n_samples: section.n_samples,
                n_shells: section.n_shells,
                seed,
                thresholds: cfg.thresholds,
                use_skip_shortcut: section.skip_shortcut,
            };
            let run = label_samples(&space, &nominal, &label_cfg, build).map_err(runtime)?;
            let records: Vec<SampleRecord> =
                run.samples.iter().map(SampleRecord::from_labeled).collect();
            let csv = write_labeled_samples_csv(&records, space.dim()).map_err(runtime)?;
            let samples_path = write_artifact(out, "samples.csv", &csv)?;

            // The classifier learns the accepted set from evaluated samples
            // only; skipped samples carry no verdict of their own.
            let mut x = Vec::new();
            let mut y = Vec::new();
            for sample in &run.samples {
                match sample.label {
                    Label::Accepted => {
                        x.push(sample.theta.clone());
                        y.push(1i8);
                    }
                    Label::Rejected => {
                        x.push(sample.theta.clone());
                        y.push(-1i8);
                    }
                    Label::Skipped => {}
                }
            }
            let classifier_path = if y.contains(&1) && y.contains(&-1) {
                let model =
                    train_binary(&x, &y, &section.svm, &space.bounds).map_err(runtime)?;
                let text = serde_json::to_string_pretty(&model).map_err(runtime)?;
                Some(write_artifact(out, "classifier.json", &text)?)
            } else {
                log_event(
                    "warn",
                    "classifier-skipped",
                    json!({ "reason": "all evaluated samples share one label" }),
                );
                None
            };

            let count = |l: Label| run.samples.iter().filter(|s| s.label == l).count();
            Ok(json!({
                "command": "detect-regions",
                "mode": "single",
                "family": cfg.model.family(),
                "seed": seed,
                "accepted": count(Label::Accepted),
                "rejected": count(Label::Rejected),
                "skipped": count(Label::Skipped),
                "terminated_at_shell": run.terminated_at_shell,
                "samples": samples_path.display().to_string(),
                "classifier": classifier_path.map(|p| p.display().to_string()),
            }))
        }
        RegionMode::Multi => {
            let mut thetas = vec![nominal.clone()];
            thetas.extend(latin_hypercube(section.n_samples, &space, seed));
            let inputs = evaluate_tag_inputs(&thetas, section.q, build).map_err(runtime)?;
            let tagging = tag_regions(&inputs, &cfg.thresholds).map_err(runtime)?;
            let router = train_multiclass(&thetas, &tagging.assignments, &section.svm, &space.bounds)
                .map_err(runtime)?;

            let records: Vec<SampleRecord> = thetas
                .iter()
                .zip(&tagging.assignments)
                .map(|(theta, &region)| SampleRecord {
                    theta: theta.clone(),
                    shell: None,
                    label: Label::Accepted,
                    rank: None,
                    rcond: None,
                    region_id: Some(region),
                })
                .collect();
            let csv = write_labeled_samples_csv(&records, space.dim()).map_err(runtime)?;
            let samples_path = write_artifact(out, "samples.csv", &csv)?;
            let map_path =
                write_artifact(out, "region_map.json", &write_region_map_json(&tagging))?;
            let router_text = serde_json::to_string_pretty(&router).map_err(runtime)?;
            let router_path = write_artifact(out, "router.json", &router_text)?;

            let n_regions = tagging.references.len();
            let sizes: Vec<usize> = (1..=n_regions)
                .map(|id| tagging.assignments.iter().filter(|&&a| a == id).count())
                .collect();
            Ok(json!({
                "command": "detect-regions",
                "mode": "multi",
                "family": cfg.model.family(),
                "seed": seed,
                "n_regions": n_regions,
                "region_sizes": sizes,
                "references": tagging.references.iter().map(|r| r.theta.clone()).collect::<Vec<_>>(),
                "samples": samples_path.display().to_string(),
                "region_map": map_path.display().to_string(),
                "router": router_path.display().to_string(),
            }))
        }
    }
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

fn run_train(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<serde_json::Value, CliError> {
    let space = cfg.model.space().map_err(usage)?;
    let nominal = cfg.model.nominal_theta();
    let section = &cfg.train;
    let build = build_for(&cfg.model);
    log_event(
        "info",
        "train",
        json!({
            "family": cfg.model.family(),
            "n_samples": section.n_samples,
            "q": section.q,
            "seed": seed,
        }),
    );

    let mut thetas = vec![nominal.clone()];
    thetas.extend(latin_hypercube(section.n_samples, &space, seed));
    let inputs = evaluate_tag_inputs(&thetas, section.q, &build).map_err(runtime)?;
    let tagging = tag_regions(&inputs, &cfg.thresholds).map_err(runtime)?;
    let (model, report) = cbmorph_core::surrogate::train_surrogate(
        &thetas,
        &tagging.assignments,
        &tagging.references,
        &space,
        &cfg.thresholds,
        &section.surrogate,
        &build,
    )
    .map_err(runtime)?;
    for warning in &report.warnings {
        log_event("warn", "training", json!({ "message": warning }));
    }

    let records: Vec<SampleRecord> = thetas
        .iter()
        .zip(&tagging.assignments)
        .map(|(theta, &region)| SampleRecord {
            theta: theta.clone(),
            shell: None,
            label: Label::Accepted,
            rank: None,
            rcond: None,
            region_id: Some(region),
        })
        .collect();
    let csv = write_labeled_samples_csv(&records, space.dim()).map_err(runtime)?;
    let samples_path = write_artifact(out, "training_samples.csv", &csv)?;

    let bundle = SurrogateBundle {
        format: SURROGATE_FORMAT.to_string(),
        training_digest: fnv1a64_hex(csv.as_bytes()),
        warnings: report.warnings.clone(),
        excluded_regions: report.excluded_regions.clone(),
        model,
    };
    let bundle_path =
        write_artifact(out, "surrogate.json", &write_surrogate_bundle_json(&bundle))?;

    let regions: Vec<serde_json::Value> = bundle
        .model
        .regions
        .iter()
        .map(|r| {
            json!({
                "region_id": r.region_id,
                "n_samples": r.n_samples,
                "latent": r.pca.u,
                "heldin_median_percent": r.heldin_median_percent,
                "loo_latent_median_percent": r.loo_latent_median_percent,
                "loo_frequency_median_percent": r.loo_frequency_median_percent,
            })
        })
        .collect();
    Ok(json!({
        "command": "train",
        "family": cfg.model.family(),
        "seed": seed,
        "n_samples": thetas.len(),
        "n_regions_tagged": tagging.references.len(),
        "regions": regions,
        "excluded_regions": report.excluded_regions,
        "warnings": report.warnings,
        "training_digest": bundle.training_digest,
        "samples": samples_path.display().to_string(),
        "bundle": bundle_path.display().to_string(),
    }))
}

// ---------------------------------------------------------------------------
// predict-frf
// ---------------------------------------------------------------------------

fn parse_theta_arg(text: &str) -> Result<Vec<Vec<f64>>, CliError> {
    text.split(';')
        .map(|point| {
            point
                .split(',')
                .map(|part| {
                    part.trim().parse::<f64>().map_err(|_| {
                        CliError::Usage(format!("bad coordinate `{part}` in --theta"))
                    })
                })
                .collect()
        })
        .collect()
}

/// Statistics of `|Δ log10 |H||` between two magnitude curves.
fn log_mag_stats(a: &[f64], b: &[f64]) -> Result<serde_json::Value, CliError> {
    if a.len() != b.len() {
        return Err(CliError::Runtime("curve lengths differ".into()));
    }
    let mut deltas: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            if x <= 0.0 || y <= 0.0 || !x.is_finite() || !y.is_finite() {
                Err(CliError::Runtime(
                    "non-positive magnitude in a response curve".into(),
                ))
            } else {
                Ok((x.log10() - y.log10()).abs())
            }
        })
        .collect::<Result<_, _>>()?;
    deltas.sort_by(f64::total_cmp);
    let n = deltas.len();
    let median = if n % 2 == 1 {
        deltas[n / 2]
    } else {
        0.5 * (deltas[n / 2 - 1] + deltas[n / 2])
    };
    let p90 = deltas[((0.9 * n as f64).ceil() as usize).clamp(1, n) - 1];
    Ok(json!({
        "median": median,
        "p90": p90,
        "max": deltas[n - 1],
    }))
}

fn run_predict_frf(
    cfg: &ExperimentConfig,
    out: &Path,
    bundle_path: Option<PathBuf>,
    theta_arg: Option<String>,
) -> Result<serde_json::Value, CliError> {
    let section = &cfg.predict_frf;
    let bundle_path = bundle_path.unwrap_or_else(|| out.join("surrogate.json"));
    let text = fs::read_to_string(&bundle_path).map_err(|e| {
        CliError::Usage(format!("cannot read bundle {}: {e}", bundle_path.display()))
    })?;
    let bundle = parse_surrogate_bundle_json(&text).map_err(usage)?;
    let model = &bundle.model;
    let dim = model.space.dim();

    // Per-cell design points: --theta wins over the config's cell list,
    // which wins over `cells` copies of the single configured point. A
    // single --theta point is replicated to every cell.
    let cell_thetas: Vec<Vec<f64>> = match &theta_arg {
        Some(text) => {
            let points = parse_theta_arg(text)?;
            if points.len() == 1 {
                vec![points[0].clone(); section.cells]
            } else {
                points
            }
        }
        None if !section.cell_thetas.is_empty() => section.cell_thetas.clone(),
        None => vec![section.theta.clone(); section.cells],
    };
    if cell_thetas.is_empty() {
        return Err(CliError::Usage("the chain needs at least one cell".into()));
    }
    for (c, theta) in cell_thetas.iter().enumerate() {
        if theta.len() != dim {
            return Err(CliError::Usage(format!(
                "cell {c} point has {} coordinates, the bundle expects {dim}",
                theta.len()
            )));
        }
        // Points outside the trained box are refused outright: the router
        // and the interpolants are both extrapolating there.
        if !inside(&model.space, theta) {
            return Err(CliError::Usage(format!(
                "cell {c} point {theta:?} lies outside the trained box {:?}",
                model.space.bounds
            )));
        }
    }
    let n_cells = cell_thetas.len();
    log_event(
        "info",
        "predict-frf",
        json!({ "family": cfg.model.family(), "cells": n_cells }),
    );

    let build = build_for(&cfg.model);

    // Distinct points are evaluated once and shared by the cells using them.
    let mut unique: Vec<Vec<f64>> = Vec::new();
    let mut cell_to_unique = Vec::with_capacity(n_cells);
    for theta in &cell_thetas {
        let at = unique
            .iter()
            .position(|u| u.iter().zip(theta).all(|(a, b)| a.to_bits() == b.to_bits()));
        let idx = at.unwrap_or_else(|| {
            unique.push(theta.clone());
            unique.len() - 1
        });
        cell_to_unique.push(idx);
    }

    // Single-region interpolation baseline: one tensor grid around the first
    // region's reference, every support reduced in that region's basis. The
    // ungated reduction keeps supports finite even where the grid crosses a
    // region boundary — degradation there is the baseline's failure mode, not
    // this command's.
    let base_region = &model.regions[0];
    let base_reference = build(&base_region.theta_ref).map_err(runtime)?;
    let base_basis = common_basis(&base_reference, model.q).map_err(runtime)?;
    let nodes: Vec<[f64; 3]> = base_region
        .theta_ref
        .iter()
        .map(|&h| gaussian_nodes(h, section.lagrange_rel_offset))
        .collect();
    let n_support = 3usize.pow(dim as u32);
    let supports: Vec<CBReduced> = (0..n_support)
        .into_par_iter()
        .map(|flat| {
            let mut point = vec![0.0; dim];
            let mut rem = flat;
            for k in (0..dim).rev() {
                point[k] = nodes[k][rem % 3];
                rem /= 3;
            }
            let s = build(&point).map_err(|e| e.to_string())?;
            cb_reduce_common_unchecked(&s, &base_basis).map_err(|e| e.to_string())
        })
        .collect::<Result<_, String>>()
        .map_err(CliError::Runtime)?;
    let grid = LagrangeGrid::new(nodes, supports).map_err(runtime)?;

    struct CellEval {
        surrogate: CBReduced,
        direct: CBReduced,
        full: CBReduced,
        lagrange: CBReduced,
        region_id: usize,
        low_confidence: bool,
        extrapolated: bool,
        symmetrization_delta: f64,
    }
    // Direct reductions share one basis per routed region.
    let mut region_bases: HashMap<usize, CommonBasis> = HashMap::new();
    let mut evals: Vec<CellEval> = Vec::with_capacity(unique.len());
    for theta in &unique {
        let prediction = predict_cb(model, theta).map_err(runtime)?;
        if prediction.low_confidence {
            log_event(
                "warn",
                "low-confidence-route",
                json!({ "theta": theta, "region_id": prediction.region_id }),
            );
        }
        let region_id = prediction.region_id;
        if let std::collections::hash_map::Entry::Vacant(slot) = region_bases.entry(region_id) {
            let region = model.region(region_id).expect("routed region exists");
            let reference = build(&region.theta_ref).map_err(runtime)?;
            slot.insert(common_basis(&reference, model.q).map_err(runtime)?);
        }
        let basis = &region_bases[&region_id];
        let sample = build(theta).map_err(runtime)?;
        let direct = cb_reduce_common(&sample, basis, &cfg.thresholds).map_err(runtime)?;
        let full = full_order_passthrough(&sample);
        let interpolated = grid.interpolate(theta).map_err(runtime)?;
        if interpolated.extrapolated {
            log_event("warn", "baseline-extrapolated", json!({ "theta": theta }));
        }
        evals.push(CellEval {
            surrogate: prediction.cb,
            direct,
            full,
            lagrange: interpolated.cb,
            region_id,
            low_confidence: prediction.low_confidence,
            extrapolated: interpolated.extrapolated,
            symmetrization_delta: prediction.symmetrization_delta,
        });
    }

    // Cells chained joint-to-joint; base motion prescribed on the first
    // joint, response read at the first DoF of the last joint.
    let n_i = evals[0].full.n_i;
    if !n_i.is_multiple_of(2) {
        return Err(CliError::Runtime(format!(
            "cell interface has {n_i} DoF; a chain needs an even count"
        )));
    }
    let n_j = n_i / 2;
    let tip_dof = n_cells * n_j;
    let freqs = cfg.sweep_hz();
    let sweep = |cells: Vec<CBReduced>| -> Result<FrfResult, String> {
        let connectivity = chain_connectivity(&cells, n_j).map_err(|e| e.to_string())?;
        let plan = AssemblyPlan {
            cells,
            connectivity,
            fixed_dofs: vec![],
            load: LoadSpec::PrescribedUnit {
                dofs: (0..n_j).collect(),
            },
        };
        let assembled = assemble(&plan).map_err(|e| e.to_string())?;
        frf_sweep(
            &assembled,
            section.alpha,
            section.beta,
            &freqs,
            &FrfMetric::Displacement { dof: tip_dof },
        )
        .map_err(|e| e.to_string())
    };

    let pick = |field: fn(&CellEval) -> &CBReduced| -> Vec<CBReduced> {
        cell_to_unique
            .iter()
            .map(|&u| field(&evals[u]).clone())
            .collect()
    };
    let methods: Vec<(&str, Vec<CBReduced>)> = vec![
        ("surrogate", pick(|e| &e.surrogate)),
        ("direct_cb", pick(|e| &e.direct)),
        ("full_order", pick(|e| &e.full)),
        ("lagrange", pick(|e| &e.lagrange)),
    ];
    let results: Vec<(String, FrfResult)> = methods
        .into_par_iter()
        .map(|(name, cells)| sweep(cells).map(|r| (name.to_string(), r)))
        .collect::<Result<_, String>>()
        .map_err(CliError::Runtime)?;

    let mut paths = serde_json::Map::new();
    let mut curves: Vec<(String, Vec<f64>)> = Vec::new();
    for (name, result) in &results {
        let table = FrfTable::from(result);
        let csv = write_frf_csv(&table).map_err(runtime)?;
        let path = write_artifact(out, &format!("frf_{name}.csv"), &csv)?;
        paths.insert(name.clone(), json!(path.display().to_string()));
        curves.push((name.clone(), table.response.iter().map(|v| v.norm()).collect()));
    }

    // Per-cell routing table, including the warning columns.
    let preset_names = cfg.model.coordinate_names();
    let names: Vec<String> = if preset_names.len() == dim {
        preset_names.iter().map(|n| n.to_string()).collect()
    } else {
        (0..dim).map(|k| format!("theta_{k}")).collect()
    };
    let mut cells_csv = format!(
        "cell,{},region_id,low_confidence,lagrange_extrapolated\n",
        names.join(",")
    );
    for (c, &u) in cell_to_unique.iter().enumerate() {
        let e = &evals[u];
        let coords: Vec<String> = cell_thetas[c].iter().map(|&v| fmt(v)).collect();
        cells_csv.push_str(&format!(
            "{c},{},{},{},{}\n",
            coords.join(","),
            e.region_id,
            e.low_confidence,
            e.extrapolated
        ));
    }
    let cells_path = write_artifact(out, "cells.csv", &cells_csv)?;
    paths.insert("cells".into(), json!(cells_path.display().to_string()));

    let full_mags = &curves
        .iter()
        .find(|(name, _)| name == "full_order")
        .expect("full-order curve present")
        .1
        .clone();
    let mut errors = serde_json::Map::new();
    for (name, mags) in &curves {
        if name != "full_order" {
            errors.insert(name.clone(), log_mag_stats(mags, full_mags)?);
        }
    }

    let cell_rows: Vec<serde_json::Value> = cell_to_unique
        .iter()
        .enumerate()
        .map(|(c, &u)| {
            let e = &evals[u];
            json!({
                "cell": c,
                "theta": cell_thetas[c],
                "region_id": e.region_id,
                "low_confidence": e.low_confidence,
                "lagrange_extrapolated": e.extrapolated,
            })
        })
        .collect();
    let max_sym_delta = evals
        .iter()
        .map(|e| e.symmetrization_delta)
        .fold(0.0f64, f64::max);
    Ok(json!({
        "command": "predict-frf",
        "family": cfg.model.family(),
        "cells": cell_rows,
        "unique_points": unique.len(),
        "low_confidence_cells": cell_to_unique
            .iter()
            .enumerate()
            .filter(|&(_, &u)| evals[u].low_confidence)
            .map(|(c, _)| c)
            .collect::<Vec<_>>(),
        "max_symmetrization_delta": max_sym_delta,
        "log_mag_error_vs_full_order": errors,
        "tables": paths,
    }))
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

fn run_compare(
    reference: &Path,
    candidate: &Path,
    out: &Path,
) -> Result<serde_json::Value, CliError> {
    let read = |p: &Path| -> Result<FrfTable, CliError> {
        let text = fs::read_to_string(p)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
        parse_frf_csv(&text).map_err(usage)
    };
    let a = read(reference)?;
    let b = read(candidate)?;
    if a.frequencies_hz.len() != b.frequencies_hz.len() {
        return Err(CliError::Usage(format!(
            "tables have {} and {} rows",
            a.frequencies_hz.len(),
            b.frequencies_hz.len()
        )));
    }
    for (i, (&fa, &fb)) in a.frequencies_hz.iter().zip(&b.frequencies_hz).enumerate() {
        if (fa - fb).abs() > 1e-9 * fa.abs().max(1.0) {
            return Err(CliError::Usage(format!(
                "row {i}: frequencies {fa} and {fb} disagree"
            )));
        }
    }
    let mags = |t: &FrfTable| -> Vec<f64> { t.response.iter().map(|v| v.norm()).collect() };
    let stats = log_mag_stats(&mags(&b), &mags(&a)).map_err(|e| match e {
        // Zero magnitudes in an input table are the caller's data problem.
        CliError::Runtime(m) => CliError::Usage(m),
        other => other,
    })?;
    let summary = json!({
        "command": "compare",
        "reference": reference.display().to_string(),
        "candidate": candidate.display().to_string(),
        "rows": a.frequencies_hz.len(),
        "metric_tags": [a.metric_tag, b.metric_tag],
        "log_mag_error": stats,
    });
    write_artifact(out, "compare.json", &serde_json::to_string_pretty(&summary).map_err(runtime)?)?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

/// Flag values win over config fields, which win over the defaults.
fn resolve_io(cli: &Cli, cfg: &ExperimentConfig) -> (u64, PathBuf) {
    let seed = cli.seed.or(cfg.seed).unwrap_or(42);
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    (seed, out)
}

fn dispatch(cli: Cli) -> Result<serde_json::Value, CliError> {
    match &cli.command {
        Command::RankScan { preset } => {
            let cfg = load_config(&cli.config, preset.config())?;
            let (seed, out) = resolve_io(&cli, &cfg);
            run_rank_scan(&cfg, seed, &out)
        }
        Command::PerturbationScan { preset } => {
            let cfg = load_config(&cli.config, preset.config())?;
            let (_, out) = resolve_io(&cli, &cfg);
            run_perturbation_scan(&cfg, &out)
        }
        Command::DetectRegions { preset, mode } => {
            let cfg = load_config(&cli.config, preset.config())?;
            let (seed, out) = resolve_io(&cli, &cfg);
            run_detect_regions(&cfg, seed, &out, *mode)
        }
        Command::Train { preset } => {
            let cfg = load_config(&cli.config, preset.config())?;
            let (seed, out) = resolve_io(&cli, &cfg);
            run_train(&cfg, seed, &out)
        }
        Command::PredictFrf {
            preset,
            bundle,
            theta,
        } => {
            let cfg = load_config(&cli.config, preset.config())?;
            let (_, out) = resolve_io(&cli, &cfg);
            run_predict_frf(&cfg, &out, bundle.clone(), theta.clone())
        }
        Command::Compare {
            reference,
            candidate,
        } => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            run_compare(reference, candidate, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Clap prints its own message; help/version exit 0, misuse 2.
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if cli.threads > 0 {
        // Ignore failure: the pool can only be configured once per process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    match dispatch(cli) {
        Ok(summary) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).expect("summary serializes")
            );
            ExitCode::SUCCESS
        }
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(3)
        }
    }
}
