//! Primal assembly of substructure cells and frequency-response sweeps.
//!
//! Cells (reduced or full order) are scattered into global mass/stiffness
//! matrices through an explicit connectivity map; shared interface DoF carry
//! identical global indices, so coupling happens by summation. Fixed DoF are
//! eliminated by row/column deletion; prescribed DoF (unit harmonic base
//! motion) are eliminated the same way but contribute a right-hand side
//! through the coupling blocks. Damping is proportional, `C = αM + βK`, with
//! the coefficients given directly or fit to two modal damping ratios.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cb::CBReduced;
use crate::linalg::{self, LinalgError};

/// Errors raised during assembly or sweeps.
#[derive(Debug, Error)]
pub enum AssemblyError {
    /// Inconsistent connectivity, bounds, or overlapping DoF roles.
    #[error("connectivity error: {0}")]
    Connectivity(String),
    /// Damping specification cannot be solved.
    #[error("degenerate damping specification: {0}")]
    DegenerateSpec(String),
    /// The dynamic stiffness matrix is singular; only possible at an
    /// undamped resonance.
    #[error("singular dynamic stiffness at {frequency_hz} Hz (undamped resonance)")]
    SingularSystem {
        /// Frequency at which the solve failed.
        frequency_hz: f64,
    },
    /// Malformed sweep inputs.
    #[error("sweep error: {0}")]
    Sweep(String),
    /// A dense decomposition failed.
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Applied loading of an assembled system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LoadSpec {
    /// Complex point forces `(global DoF, re, im)` on free DoF, added to the
    /// loads the cells carry.
    Forces {
        /// Force entries.
        entries: Vec<(usize, f64, f64)>,
    },
    /// Unit harmonic displacement prescribed on these global DoF.
    PrescribedUnit {
        /// Base DoF.
        dofs: Vec<usize>,
    },
}

/// Proportional damping specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DampingSpec {
    /// Direct coefficients of `C = αM + βK`.
    Rayleigh {
        /// Mass-proportional coefficient.
        alpha: f64,
        /// Stiffness-proportional coefficient.
        beta: f64,
    },
    /// Coefficients fit so modes `modes.0` and `modes.1` (0-based, ascending
    /// order) get damping ratios `ratios.0` and `ratios.1`.
    ModalRatios {
        /// Mode indices.
        modes: (usize, usize),
        /// Target damping ratios.
        ratios: (f64, f64),
    },
}

/// A set of cells, their global wiring, and the loading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssemblyPlan {
    /// Substructure cells in assembly order.
    pub cells: Vec<CBReduced>,
    /// `connectivity[c][l]` is the global DoF of cell `c`'s local DoF `l`;
    /// one entry per local DoF, interface DoF first.
    pub connectivity: Vec<Vec<usize>>,
    /// Global DoF with zero motion, eliminated by row/column deletion.
    pub fixed_dofs: Vec<usize>,
    /// Applied loading.
    pub load: LoadSpec,
}

/// Assembled free-DoF system with prescribed-motion coupling blocks.
#[derive(Debug, Clone)]
pub struct Assembled {
    /// Free-free mass matrix.
    pub mg: DMatrix<f64>,
    /// Free-free stiffness matrix.
    pub kg: DMatrix<f64>,
    /// Loads on free DoF (cell loads plus applied forces).
    pub fg: DVector<Complex<f64>>,
    /// Free-prescribed mass coupling (`n_free × n_prescribed`).
    pub m_fp: DMatrix<f64>,
    /// Free-prescribed stiffness coupling.
    pub k_fp: DMatrix<f64>,
    /// Global indices of the free DoF, ascending.
    pub free_dofs: Vec<usize>,
    /// Global indices of the prescribed DoF, ascending.
    pub prescribed_dofs: Vec<usize>,
    /// Global indices of the fixed DoF, ascending.
    pub fixed_dofs: Vec<usize>,
    /// Total global DoF before elimination.
    pub n_global: usize,
}

/// Response metric of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FrfMetric {
    /// Mean of `|iω x|²` over these global DoF (all free DoF when empty).
    MeanSquaredVelocity {
        /// Selected global DoF.
        dofs: Vec<usize>,
    },
    /// Complex displacement of one global DoF (transmissibility when the
    /// load is a prescribed unit base motion).
    Displacement {
        /// Output global DoF.
        dof: usize,
    },
}

impl FrfMetric {
    /// CSV tag of the metric.
    pub fn tag(&self) -> &'static str {
        match self {
            FrfMetric::MeanSquaredVelocity { .. } => "mean-squared-velocity",
            FrfMetric::Displacement { .. } => "displacement",
        }
    }
}

/// One frequency sweep.
#[derive(Debug, Clone)]
pub struct FrfResult {
    /// Sweep grid in Hz, strictly increasing.
    pub frequencies_hz: Vec<f64>,
    /// Metric value per grid point (imaginary part zero for real-valued
    /// metrics).
    pub response: Vec<Complex<f64>>,
    /// Metric the response was evaluated with.
    pub metric: FrfMetric,
}

impl FrfResult {
    /// `|response|` per grid point.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.response.iter().map(|v| v.norm()).collect()
    }
}

/// Scatters the plan's cells into global matrices and eliminates fixed and
/// prescribed DoF.
pub fn assemble(plan: &AssemblyPlan) -> Result<Assembled, AssemblyError> {
    if plan.cells.is_empty() {
        return Err(AssemblyError::Connectivity("no cells".into()));
    }
    if plan.connectivity.len() != plan.cells.len() {
        return Err(AssemblyError::Connectivity(format!(
            "{} connectivity rows for {} cells",
            plan.connectivity.len(),
            plan.cells.len()
        )));
    }
    let mut n_global = 0usize;
    for (c, (cell, map)) in plan.cells.iter().zip(&plan.connectivity).enumerate() {
        if map.len() != cell.r() {
            return Err(AssemblyError::Connectivity(format!(
                "cell {c} has {} local DoF but {} connectivity entries",
                cell.r(),
                map.len()
            )));
        }
        let mut seen = map.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(AssemblyError::Connectivity(format!(
                "cell {c} maps two local DoF to one global DoF"
            )));
        }
        n_global = n_global.max(*seen.last().expect("non-empty map") + 1);
    }
    let mut referenced = vec![false; n_global];
    for map in &plan.connectivity {
        for &g in map {
            referenced[g] = true;
        }
    }
    if let Some(g) = referenced.iter().position(|&r| !r) {
        return Err(AssemblyError::Connectivity(format!(
            "global DoF {g} is referenced by no cell"
        )));
    }

    let prescribed: Vec<usize> = match &plan.load {
        LoadSpec::PrescribedUnit { dofs } => {
            let mut d = dofs.clone();
            d.sort_unstable();
            d.dedup();
            if d.len() != dofs.len() {
                return Err(AssemblyError::Connectivity(
                    "duplicate prescribed DoF".into(),
                ));
            }
            d
        }
        LoadSpec::Forces { .. } => Vec::new(),
    };
    let mut fixed = plan.fixed_dofs.clone();
    fixed.sort_unstable();
    if fixed.windows(2).any(|w| w[0] == w[1]) {
        return Err(AssemblyError::Connectivity("duplicate fixed DoF".into()));
    }
    for &g in fixed.iter().chain(&prescribed) {
        if g >= n_global {
            return Err(AssemblyError::Connectivity(format!(
                "DoF {g} outside the global range 0..{n_global}"
            )));
        }
    }
    if fixed.iter().any(|g| prescribed.binary_search(g).is_ok()) {
        return Err(AssemblyError::Connectivity(
            "fixed and prescribed DoF overlap".into(),
        ));
    }
    if let LoadSpec::Forces { entries } = &plan.load {
        for &(g, _, _) in entries {
            if g >= n_global {
                return Err(AssemblyError::Connectivity(format!(
                    "loaded DoF {g} outside the global range 0..{n_global}"
                )));
            }
            if fixed.binary_search(&g).is_ok() {
                return Err(AssemblyError::Connectivity(format!(
                    "loaded DoF {g} is fixed"
                )));
            }
        }
    }

    // Primal summation over cells.
    let mut m_full = DMatrix::zeros(n_global, n_global);
    let mut k_full = DMatrix::zeros(n_global, n_global);
    let mut f_full = DVector::zeros(n_global);
    for (cell, map) in plan.cells.iter().zip(&plan.connectivity) {
        for (l1, &g1) in map.iter().enumerate() {
            f_full[g1] += cell.fhat[l1];
            for (l2, &g2) in map.iter().enumerate() {
                m_full[(g1, g2)] += cell.mhat[(l1, l2)];
                k_full[(g1, g2)] += cell.khat[(l1, l2)];
            }
        }
    }

    let role = |g: usize| -> u8 {
        if fixed.binary_search(&g).is_ok() {
            2
        } else if prescribed.binary_search(&g).is_ok() {
            1
        } else {
            0
        }
    };
    let free_dofs: Vec<usize> = (0..n_global).filter(|&g| role(g) == 0).collect();
    let nf = free_dofs.len();
    let np = prescribed.len();
    if nf == 0 {
        return Err(AssemblyError::Connectivity("no free DoF remain".into()));
    }
    let mg = DMatrix::from_fn(nf, nf, |i, j| m_full[(free_dofs[i], free_dofs[j])]);
    let kg = DMatrix::from_fn(nf, nf, |i, j| k_full[(free_dofs[i], free_dofs[j])]);
    let m_fp = DMatrix::from_fn(nf, np, |i, j| m_full[(free_dofs[i], prescribed[j])]);
    let k_fp = DMatrix::from_fn(nf, np, |i, j| k_full[(free_dofs[i], prescribed[j])]);
    let mut fg = DVector::from_fn(nf, |i, _| Complex::new(f_full[free_dofs[i]], 0.0));
    if let LoadSpec::Forces { entries } = &plan.load {
        for &(g, re, im) in entries {
            let pos = free_dofs
                .binary_search(&g)
                .expect("validated as free above");
            fg[pos] += Complex::new(re, im);
        }
    }
    Ok(Assembled {
        mg,
        kg,
        fg,
        m_fp,
        k_fp,
        free_dofs,
        prescribed_dofs: prescribed,
        fixed_dofs: fixed,
        n_global,
    })
}

/// Resolves a damping specification to `(α, β)` on the assembled free
/// system. Modal ratios solve the 2×2 system `ζ = (α/ω + βω)/2` at the two
/// requested modes.
pub fn proportional_damping(
    spec: &DampingSpec,
    assembled: &Assembled,
) -> Result<(f64, f64), AssemblyError> {
    match spec {
        DampingSpec::Rayleigh { alpha, beta } => Ok((*alpha, *beta)),
        DampingSpec::ModalRatios { modes, ratios } => {
            let (i, j) = *modes;
            if i == j {
                return Err(AssemblyError::DegenerateSpec(format!(
                    "mode indices coincide ({i})"
                )));
            }
            let need = i.max(j) + 1;
            let eig = linalg::sym_generalized_eig(&assembled.kg, &assembled.mg, need)?;
            let wi = eig.values[i].max(0.0).sqrt();
            let wj = eig.values[j].max(0.0).sqrt();
            if wi <= 0.0 || wj <= 0.0 {
                return Err(AssemblyError::DegenerateSpec(format!(
                    "zero natural frequency at mode {} or {}",
                    i, j
                )));
            }
            if (wi - wj).abs() <= 1e-9 * wi.max(wj) {
                return Err(AssemblyError::DegenerateSpec(format!(
                    "natural frequencies coincide at {wi} rad/s"
                )));
            }
            // [1/ωi  ωi] [α]   [2ζi]
            // [1/ωj  ωj] [β] = [2ζj]
            let det = wj / wi - wi / wj;
            let alpha = (2.0 * ratios.0 * wj - 2.0 * ratios.1 * wi) / det;
            let beta = (2.0 * ratios.1 / wi - 2.0 * ratios.0 / wj) / det;
            Ok((alpha, beta))
        }
    }
}

/// The damping ratio `(α/ω + βω)/2` at a natural frequency.
pub fn damping_ratio(alpha: f64, beta: f64, omega: f64) -> f64 {
    0.5 * (alpha / omega + beta * omega)
}

/// Sweeps the assembled system over a strictly increasing frequency grid,
/// solving `(K + iωC − ω²M) x = F − (K_fp + iωC_fp − ω²M_fp)·1` per point.
pub fn frf_sweep(
    assembled: &Assembled,
    alpha: f64,
    beta: f64,
    frequencies_hz: &[f64],
    metric: &FrfMetric,
) -> Result<FrfResult, AssemblyError> {
    if frequencies_hz.is_empty() {
        return Err(AssemblyError::Sweep("empty frequency grid".into()));
    }
    if frequencies_hz.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AssemblyError::Sweep(
            "frequencies must be strictly increasing".into(),
        ));
    }
    if frequencies_hz[0] < 0.0 {
        return Err(AssemblyError::Sweep("negative frequency".into()));
    }
    if let FrfMetric::MeanSquaredVelocity { dofs } = metric {
        for &g in dofs {
            if g >= assembled.n_global {
                return Err(AssemblyError::Sweep(format!(
                    "metric DoF {g} outside the global range"
                )));
            }
        }
    }
    let nf = assembled.free_dofs.len();
    let np = assembled.prescribed_dofs.len();
    let cg = &assembled.mg * alpha + &assembled.kg * beta;
    let c_fp = &assembled.m_fp * alpha + &assembled.k_fp * beta;

    let mut response = Vec::with_capacity(frequencies_hz.len());
    for &f_hz in frequencies_hz {
        let omega = 2.0 * std::f64::consts::PI * f_hz;
        let a = DMatrix::from_fn(nf, nf, |i, j| {
            Complex::new(
                assembled.kg[(i, j)] - omega * omega * assembled.mg[(i, j)],
                omega * cg[(i, j)],
            )
        });
        let mut rhs = assembled.fg.clone();
        for p in 0..np {
            for i in 0..nf {
                rhs[i] -= Complex::new(
                    assembled.k_fp[(i, p)] - omega * omega * assembled.m_fp[(i, p)],
                    omega * c_fp[(i, p)],
                );
            }
        }
        let x = a
            .lu()
            .solve(&rhs)
            .ok_or(AssemblyError::SingularSystem { frequency_hz: f_hz })?;
        if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(AssemblyError::SingularSystem { frequency_hz: f_hz });
        }
        // Motion of an arbitrary global DoF under the current solution.
        let motion = |g: usize| -> Complex<f64> {
            if let Ok(pos) = assembled.free_dofs.binary_search(&g) {
                x[pos]
            } else if assembled.prescribed_dofs.binary_search(&g).is_ok() {
                Complex::new(1.0, 0.0)
            } else {
                Complex::new(0.0, 0.0)
            }
        };
        let value = match metric {
            FrfMetric::MeanSquaredVelocity { dofs } => {
                let selection: Vec<usize> = if dofs.is_empty() {
                    assembled.free_dofs.clone()
                } else {
                    dofs.clone()
                };
                let mean = selection
                    .iter()
                    .map(|&g| (motion(g) * Complex::new(0.0, omega)).norm_sqr())
                    .sum::<f64>()
                    / selection.len() as f64;
                Complex::new(mean, 0.0)
            }
            FrfMetric::Displacement { dof } => motion(*dof),
        };
        response.push(value);
    }
    Ok(FrfResult {
        frequencies_hz: frequencies_hz.to_vec(),
        response,
        metric: metric.clone(),
    })
}

/// Transmissibility: magnitude of one output DoF under the plan's prescribed
/// unit base motion.
pub fn transmissibility_sweep(
    assembled: &Assembled,
    alpha: f64,
    beta: f64,
    frequencies_hz: &[f64],
    tip_dof: usize,
) -> Result<FrfResult, AssemblyError> {
    frf_sweep(
        assembled,
        alpha,
        beta,
        frequencies_hz,
        &FrfMetric::Displacement { dof: tip_dof },
    )
}

/// Connectivity of a serial chain of cells whose local DoF are ordered
/// `[left joint (n_j), right joint (n_j), cell-private]`. Joint `j` occupies
/// the global block `[j·n_j, (j+1)·n_j)`; private DoF follow all joints in
/// cell order.
pub fn chain_connectivity(
    cells: &[CBReduced],
    n_j: usize,
) -> Result<Vec<Vec<usize>>, AssemblyError> {
    if cells.is_empty() || n_j == 0 {
        return Err(AssemblyError::Connectivity(
            "chain needs cells and a positive joint width".into(),
        ));
    }
    for (c, cell) in cells.iter().enumerate() {
        if cell.n_i != 2 * n_j {
            return Err(AssemblyError::Connectivity(format!(
                "cell {c} has {} interface DoF; a chain cell needs 2·n_j = {}",
                cell.n_i,
                2 * n_j
            )));
        }
    }
    let n_joint = (cells.len() + 1) * n_j;
    let mut maps = Vec::with_capacity(cells.len());
    let mut offset = n_joint;
    for (c, cell) in cells.iter().enumerate() {
        let mut map = Vec::with_capacity(cell.r());
        map.extend(c * n_j..(c + 1) * n_j);
        map.extend((c + 1) * n_j..(c + 2) * n_j);
        let private = cell.r() - 2 * n_j;
        map.extend(offset..offset + private);
        offset += private;
        maps.push(map);
    }
    Ok(maps)
}
