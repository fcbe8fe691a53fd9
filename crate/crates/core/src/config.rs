//! Experiment configuration: model presets in catalog units plus one section
//! per pipeline stage.
//!
//! Configs are JSON with every field optional; missing fields take the
//! defaults below, unknown fields are rejected. The two [`ExperimentConfig`]
//! constructors reproduce the catalog models: the planar lattice is specified
//! in grams and kN/mm and converted to SI when a substructure is built, the
//! resonator chain cell in its dimensionless design coordinates `(L, W)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::explore::ParameterSpace;
use crate::model::{build_lattice, build_resonator_cell, ModelError, Substructure};
use crate::projection::ConditioningThresholds;
use crate::surrogate::{LatentSize, SurrogateConfig};
use crate::svm::SvmParams;

/// Errors raised when reading or validating a configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    /// JSON syntax or shape error.
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    /// Structurally valid config with inconsistent values.
    #[error("invalid config: {0}")]
    Invalid(String),
    /// A substructure could not be built at the requested design point.
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn default_lattice_mass_g() -> f64 {
    5.0
}
fn default_lattice_k1() -> f64 {
    1.0
}
fn default_lattice_k2() -> f64 {
    0.9
}
fn default_lattice_bounds() -> Vec<(f64, f64)> {
    vec![(0.975, 1.025), (0.8775, 0.9225)]
}
fn default_resonator_nominal() -> Vec<f64> {
    vec![10.0, 40.0]
}
fn default_resonator_bounds() -> Vec<(f64, f64)> {
    vec![(5.0, 15.0), (20.0, 60.0)]
}

/// Which catalog model a run works on, in catalog units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelPreset {
    /// Planar 11×11 lattice. Design coordinates are `(k1, k2)` in kN/mm.
    Lattice {
        /// Nodal mass in grams.
        #[serde(default = "default_lattice_mass_g")]
        mass_g: f64,
        /// Nominal horizontal stiffness, kN/mm.
        #[serde(default = "default_lattice_k1")]
        k1_kn_mm: f64,
        /// Nominal vertical stiffness, kN/mm.
        #[serde(default = "default_lattice_k2")]
        k2_kn_mm: f64,
        /// Admissible design box, kN/mm per coordinate.
        #[serde(default = "default_lattice_bounds")]
        bounds: Vec<(f64, f64)>,
    },
    /// Resonator chain cell. Design coordinates are `(L, W)`.
    Resonator {
        /// Nominal design point.
        #[serde(default = "default_resonator_nominal")]
        nominal: Vec<f64>,
        /// Admissible design box.
        #[serde(default = "default_resonator_bounds")]
        bounds: Vec<(f64, f64)>,
    },
}

/// Grams → kilograms.
const G_TO_KG: f64 = 1e-3;
/// kN/mm → N/m.
const KN_MM_TO_N_M: f64 = 1e6;

impl ModelPreset {
    /// Family name for logs and file names.
    pub fn family(&self) -> &'static str {
        match self {
            ModelPreset::Lattice { .. } => "lattice",
            ModelPreset::Resonator { .. } => "resonator",
        }
    }

    /// Design coordinate names, for table headers and logs.
    pub fn coordinate_names(&self) -> Vec<&'static str> {
        match self {
            ModelPreset::Lattice { .. } => vec!["k1_kn_mm", "k2_kn_mm"],
            ModelPreset::Resonator { .. } => vec!["length", "width"],
        }
    }

    /// Nominal design point in design (catalog) coordinates.
    pub fn nominal_theta(&self) -> Vec<f64> {
        match self {
            ModelPreset::Lattice {
                k1_kn_mm, k2_kn_mm, ..
            } => vec![*k1_kn_mm, *k2_kn_mm],
            ModelPreset::Resonator { nominal, .. } => nominal.clone(),
        }
    }

    /// The admissible design box.
    pub fn space(&self) -> Result<ParameterSpace, ConfigError> {
        let bounds = match self {
            ModelPreset::Lattice { bounds, .. } => bounds.clone(),
            ModelPreset::Resonator { bounds, .. } => bounds.clone(),
        };
        ParameterSpace::new(bounds).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Builds the substructure at a design point, converting catalog units
    /// to SI.
    pub fn build(&self, theta: &[f64]) -> Result<Substructure, ConfigError> {
        match self {
            ModelPreset::Lattice { mass_g, .. } => {
                if theta.len() != 2 {
                    return Err(ConfigError::Invalid(format!(
                        "lattice design point has {} coordinates, expected 2",
                        theta.len()
                    )));
                }
                Ok(build_lattice(
                    mass_g * G_TO_KG,
                    theta[0] * KN_MM_TO_N_M,
                    theta[1] * KN_MM_TO_N_M,
                )?)
            }
            ModelPreset::Resonator { .. } => {
                if theta.len() != 2 {
                    return Err(ConfigError::Invalid(format!(
                        "resonator design point has {} coordinates, expected 2",
                        theta.len()
                    )));
                }
                Ok(build_resonator_cell(theta[0], theta[1])?)
            }
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let space = self.space()?;
        let nominal = self.nominal_theta();
        if nominal.len() != space.dim() {
            return Err(ConfigError::Invalid(format!(
                "nominal point has {} coordinates for a {}-dimensional box",
                nominal.len(),
                space.dim()
            )));
        }
        for (k, (&v, &(lo, hi))) in nominal.iter().zip(&space.bounds).enumerate() {
            if !(lo <= v && v <= hi) {
                return Err(ConfigError::Invalid(format!(
                    "nominal coordinate {k} = {v} lies outside [{lo}, {hi}]"
                )));
            }
        }
        if let ModelPreset::Lattice {
            mass_g,
            k1_kn_mm,
            k2_kn_mm,
            ..
        } = self
        {
            for (name, v) in [("mass_g", mass_g), ("k1_kn_mm", k1_kn_mm), ("k2_kn_mm", k2_kn_mm)]
            {
                if !(v.is_finite() && *v > 0.0) {
                    return Err(ConfigError::Invalid(format!(
                        "{name} must be positive, got {v}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Section for the retained-mode rank scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankScanConfig {
    /// First retained-mode count.
    pub q_min: usize,
    /// Last retained-mode count, inclusive.
    pub q_max: usize,
    /// 1-based inclusive mode range the seeded column swaps are confined to.
    pub swap_range: (usize, usize),
}

impl Default for RankScanConfig {
    fn default() -> Self {
        Self {
            q_min: 1,
            q_max: 100,
            swap_range: (21, 80),
        }
    }
}

/// Section for the one-dimensional stiffness sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationScanConfig {
    /// Number of sweep points.
    pub n_points: usize,
    /// Sweep range as multiples of the nominal last coordinate.
    pub scale_range: (f64, f64),
    /// Retained-mode count of every projection.
    pub q: usize,
    /// Reference model's last design coordinate, in design units; the
    /// nominal value when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_value: Option<f64>,
}

impl Default for PerturbationScanConfig {
    fn default() -> Self {
        Self {
            n_points: 48,
            scale_range: (0.5, 1.5),
            q: 45,
            reference_value: None,
        }
    }
}

/// Region-detection strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionMode {
    /// Shelled scan labeled against the nominal reference; a binary
    /// classifier learns the accepted set.
    Single,
    /// Every sample evaluated; references founded greedily; a one-vs-one
    /// classifier routes between regions.
    Multi,
}

/// Section for region detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectRegionsConfig {
    /// Detection strategy.
    pub mode: RegionMode,
    /// Latin hypercube sample count.
    pub n_samples: usize,
    /// Shell count of the single-region scan.
    pub n_shells: usize,
    /// Retained-mode count.
    pub q: usize,
    /// Nearest-rejected-neighbor shortcut of the single-region scan.
    pub skip_shortcut: bool,
    /// Classifier hyperparameters.
    pub svm: SvmParams,
}

impl Default for DetectRegionsConfig {
    fn default() -> Self {
        Self {
            mode: RegionMode::Single,
            n_samples: 200,
            n_shells: 10,
            q: 5,
            skip_shortcut: true,
            svm: SvmParams::default(),
        }
    }
}

/// Section for surrogate training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Latin hypercube sample count.
    pub n_samples: usize,
    /// Retained-mode count.
    pub q: usize,
    /// Compression and interpolation settings.
    pub surrogate: SurrogateConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_samples: 100,
            q: 5,
            surrogate: SurrogateConfig::default(),
        }
    }
}

/// Section for assembled-chain response prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictFrfConfig {
    /// Design point every chain cell is built at when `cell_thetas` is
    /// empty.
    pub theta: Vec<f64>,
    /// Per-cell design points; overrides `theta` and `cells` when non-empty.
    pub cell_thetas: Vec<Vec<f64>>,
    /// Chain length when `cell_thetas` is empty.
    pub cells: usize,
    /// Sweep start, rad/s.
    pub freq_start_rad_s: f64,
    /// Sweep end, rad/s.
    pub freq_stop_rad_s: f64,
    /// Sweep point count.
    pub freq_points: usize,
    /// Mass-proportional damping coefficient.
    pub alpha: f64,
    /// Stiffness-proportional damping coefficient.
    pub beta: f64,
    /// Relative node offset of the piecewise-polynomial baseline grid.
    pub lagrange_rel_offset: f64,
}

impl Default for PredictFrfConfig {
    fn default() -> Self {
        Self {
            theta: vec![10.0, 40.0],
            cell_thetas: vec![],
            cells: 10,
            freq_start_rad_s: 250.0,
            freq_stop_rad_s: 550.0,
            freq_points: 61,
            alpha: 1e-4,
            beta: 1e-9,
            lagrange_rel_offset: 0.25,
        }
    }
}

/// Complete experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// The model everything operates on.
    pub model: ModelPreset,
    /// RNG seed for sampling commands; the `--seed` flag overrides it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Artifact directory; the `--out` flag overrides it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    /// Conditioning thresholds shared by every projection verdict.
    pub thresholds: ConditioningThresholds,
    /// Rank-scan section.
    pub rank_scan: RankScanConfig,
    /// Perturbation-scan section.
    pub perturbation_scan: PerturbationScanConfig,
    /// Region-detection section.
    pub detect_regions: DetectRegionsConfig,
    /// Training section.
    pub train: TrainConfig,
    /// Prediction section.
    pub predict_frf: PredictFrfConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::resonator()
    }
}

impl ExperimentConfig {
    /// The resonator-chain experiment with its catalog defaults.
    pub fn resonator() -> Self {
        Self {
            model: ModelPreset::Resonator {
                nominal: default_resonator_nominal(),
                bounds: default_resonator_bounds(),
            },
            seed: None,
            out_dir: None,
            thresholds: ConditioningThresholds::default(),
            rank_scan: RankScanConfig {
                q_min: 1,
                q_max: 8,
                swap_range: (2, 7),
            },
            perturbation_scan: PerturbationScanConfig {
                n_points: 48,
                scale_range: (0.5, 1.5),
                q: 5,
                reference_value: None,
            },
            detect_regions: DetectRegionsConfig::default(),
            train: TrainConfig::default(),
            predict_frf: PredictFrfConfig::default(),
        }
    }

    /// The planar-lattice experiment with its catalog defaults.
    pub fn lattice() -> Self {
        Self {
            model: ModelPreset::Lattice {
                mass_g: default_lattice_mass_g(),
                k1_kn_mm: default_lattice_k1(),
                k2_kn_mm: default_lattice_k2(),
                bounds: default_lattice_bounds(),
            },
            seed: None,
            out_dir: None,
            thresholds: ConditioningThresholds::default(),
            rank_scan: RankScanConfig::default(),
            perturbation_scan: PerturbationScanConfig::default(),
            detect_regions: DetectRegionsConfig {
                mode: RegionMode::Single,
                n_samples: 50,
                n_shells: 5,
                q: 45,
                skip_shortcut: true,
                svm: SvmParams::default(),
            },
            train: TrainConfig {
                n_samples: 60,
                q: 30,
                surrogate: SurrogateConfig {
                    latent: LatentSize::Threshold(0.1),
                    ..SurrogateConfig::default()
                },
            },
            predict_frf: PredictFrfConfig {
                theta: vec![1.0, 0.9],
                cell_thetas: vec![],
                cells: 3,
                freq_start_rad_s: 2500.0,
                freq_stop_rad_s: 9000.0,
                freq_points: 66,
                alpha: 1e-2,
                beta: 1e-8,
                lagrange_rel_offset: 0.02,
            },
        }
    }

    /// Looks a preset up by family name.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "lattice" => Some(Self::lattice()),
            "resonator" => Some(Self::resonator()),
            _ => None,
        }
    }

    /// Checks cross-field consistency.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate()?;
        let d = self.model.space()?.dim();
        if self.rank_scan.q_min == 0 || self.rank_scan.q_min > self.rank_scan.q_max {
            return Err(ConfigError::Invalid(format!(
                "rank scan range {}..={} is empty or zero-based",
                self.rank_scan.q_min, self.rank_scan.q_max
            )));
        }
        let (lo_m, hi_m) = self.rank_scan.swap_range;
        if lo_m == 0 || lo_m >= hi_m {
            return Err(ConfigError::Invalid(format!(
                "rank scan swap range ({lo_m}, {hi_m}) must be 1-based and increasing"
            )));
        }
        let ps = &self.perturbation_scan;
        if ps.n_points < 2 {
            return Err(ConfigError::Invalid(
                "perturbation scan needs at least two points".into(),
            ));
        }
        if !(ps.scale_range.0.is_finite()
            && ps.scale_range.1.is_finite()
            && 0.0 < ps.scale_range.0
            && ps.scale_range.0 < ps.scale_range.1)
        {
            return Err(ConfigError::Invalid(format!(
                "perturbation scan range ({}, {}) must be positive and increasing",
                ps.scale_range.0, ps.scale_range.1
            )));
        }
        if ps.q == 0 {
            return Err(ConfigError::Invalid(
                "perturbation scan needs q ≥ 1".into(),
            ));
        }
        if let Some(v) = ps.reference_value {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::Invalid(format!(
                    "perturbation scan reference {v} must be positive"
                )));
            }
        }
        if self.detect_regions.q == 0
            || self.detect_regions.n_samples == 0
            || self.detect_regions.n_shells == 0
        {
            return Err(ConfigError::Invalid(
                "region detection needs positive q, samples, and shells".into(),
            ));
        }
        if self.train.q == 0 || self.train.n_samples == 0 {
            return Err(ConfigError::Invalid(
                "training needs positive q and samples".into(),
            ));
        }
        let pf = &self.predict_frf;
        if pf.theta.len() != d {
            return Err(ConfigError::Invalid(format!(
                "prediction point has {} coordinates for a {d}-dimensional model",
                pf.theta.len()
            )));
        }
        for (c, theta) in pf.cell_thetas.iter().enumerate() {
            if theta.len() != d {
                return Err(ConfigError::Invalid(format!(
                    "cell {c} design point has {} coordinates for a {d}-dimensional model",
                    theta.len()
                )));
            }
        }
        if pf.cells == 0 {
            return Err(ConfigError::Invalid(
                "prediction needs at least one cell".into(),
            ));
        }
        if pf.freq_points < 2
            || !(pf.freq_start_rad_s.is_finite()
                && pf.freq_stop_rad_s.is_finite()
                && 0.0 < pf.freq_start_rad_s
                && pf.freq_start_rad_s < pf.freq_stop_rad_s)
        {
            return Err(ConfigError::Invalid(format!(
                "sweep [{}, {}] rad/s with {} points is degenerate",
                pf.freq_start_rad_s, pf.freq_stop_rad_s, pf.freq_points
            )));
        }
        if !(pf.lagrange_rel_offset.is_finite()
            && 0.0 < pf.lagrange_rel_offset
            && pf.lagrange_rel_offset < 1.0)
        {
            return Err(ConfigError::Invalid(format!(
                "baseline grid offset {} must lie in (0, 1)",
                pf.lagrange_rel_offset
            )));
        }
        Ok(())
    }

    /// Sweep grid in Hz for the prediction section.
    pub fn sweep_hz(&self) -> Vec<f64> {
        let pf = &self.predict_frf;
        let n = pf.freq_points;
        (0..n)
            .map(|i| {
                let omega = pf.freq_start_rad_s
                    + (pf.freq_stop_rad_s - pf.freq_start_rad_s) * i as f64
                        / (n - 1) as f64;
                omega / (2.0 * std::f64::consts::PI)
            })
            .collect()
    }
}

/// Parses and validates a configuration.
pub fn parse_config_json(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let config: ExperimentConfig = serde_json::from_str(text)?;
    config.validate()?;
    Ok(config)
}

/// Encodes a configuration as JSON.
pub fn write_config_json(config: &ExperimentConfig) -> String {
    serde_json::to_string_pretty(config).expect("config serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for config in [ExperimentConfig::resonator(), ExperimentConfig::lattice()] {
            config.validate().unwrap();
            let text = write_config_json(&config);
            let back = parse_config_json(&text).unwrap();
            assert_eq!(back, config);
        }
        assert_eq!(
            ExperimentConfig::preset("resonator"),
            Some(ExperimentConfig::resonator())
        );
        assert!(ExperimentConfig::preset("shell").is_none());
    }

    #[test]
    fn lattice_units_convert_to_si() {
        let config = ExperimentConfig::lattice();
        let s = config.model.build(&[1.0, 0.9]).unwrap();
        // 5 g per DoF and 1 kN/mm horizontal stiffness in SI.
        assert!((s.m[(0, 0)] - 5e-3).abs() < 1e-18);
        assert!((s.k[(0, 0)] - 1.32e6).abs() < 1e-6);
        assert_eq!(config.model.nominal_theta(), vec![1.0, 0.9]);
        assert_eq!(config.model.family(), "lattice");
    }

    #[test]
    fn missing_sections_take_defaults_and_unknown_fields_fail() {
        let config = parse_config_json(r#"{"model": {"family": "lattice"}}"#).unwrap();
        assert_eq!(config.model, ExperimentConfig::lattice().model);
        assert_eq!(config.train, TrainConfig::default());
        let err = parse_config_json(r#"{"model": {"family": "lattice"}, "extra": 1}"#);
        assert!(matches!(err, Err(ConfigError::Parse(_))));
        let err = parse_config_json(r#"{"model": {"family": "torus"}}"#);
        assert!(matches!(err, Err(ConfigError::Parse(_))));
    }

    #[test]
    fn inconsistent_values_are_rejected() {
        let mut config = ExperimentConfig::resonator();
        config.predict_frf.theta = vec![10.0];
        assert!(matches!(
            config.validate(),
            Err(ConfigError::Invalid(_))
        ));
        let mut config = ExperimentConfig::resonator();
        config.rank_scan.q_min = 9;
        config.rank_scan.q_max = 3;
        assert!(matches!(
            config.validate(),
            Err(ConfigError::Invalid(_))
        ));
        let mut config = ExperimentConfig::lattice();
        config.perturbation_scan.scale_range = (1.5, 0.5);
        assert!(matches!(
            config.validate(),
            Err(ConfigError::Invalid(_))
        ));
        let text = parse_config_json(
            r#"{"model": {"family": "resonator", "nominal": [99.0, 40.0]}}"#,
        );
        assert!(matches!(text, Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn sweep_grid_is_uniform_in_angular_frequency() {
        let config = ExperimentConfig::resonator();
        let grid = config.sweep_hz();
        assert_eq!(grid.len(), 61);
        let omega0 = grid[0] * 2.0 * std::f64::consts::PI;
        let omega_last = grid[60] * 2.0 * std::f64::consts::PI;
        assert!((omega0 - 250.0).abs() < 1e-9);
        assert!((omega_last - 550.0).abs() < 1e-9);
        let step = grid[1] - grid[0];
        for w in grid.windows(2) {
            assert!((w[1] - w[0] - step).abs() < 1e-12);
        }
    }
}
