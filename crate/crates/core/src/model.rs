//! Parameterized substructure models and interface/internal partitioning.
//!
//! Two model families are provided:
//!
//! * [`build_lattice`] — a planar 11×11 spring-mass lattice with two in-plane
//!   DoF per node, axial springs along both grid directions, and diagonal
//!   brace bars in every cell. The interface is the full set of DoF on the
//!   leftmost and rightmost columns, so lattices can be chained edge-to-edge.
//! * [`build_resonator_cell`] — a six-mass axial base chain carrying two
//!   two-DoF internal resonator appendages, parameterized by the resonator
//!   beam length `L` and width `W`. The interface is the two end masses.
//!
//! Both builders return a [`Substructure`] (full mass/stiffness/load plus the
//! interface/internal DoF split); [`partition`] extracts the four matrix
//! blocks used by the Craig-Bampton reduction, in which index `i` denotes
//! interface DoF and `j` internal DoF.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while constructing or partitioning models.
#[derive(Debug, Error)]
pub enum ModelError {
    /// A scalar parameter is out of its admissible domain.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// Interface/internal DoF lists are inconsistent with the matrices.
    #[error("partition error: {0}")]
    Partition(String),
}

/// Named design parameters with their admissible box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Parameter names, one per dimension.
    pub names: Vec<String>,
    /// Current parameter values (SI units).
    pub values: Vec<f64>,
    /// Per-dimension `(low, high)` bounds with `low < high`.
    pub bounds: Vec<(f64, f64)>,
}

impl ModelParams {
    /// Validates lengths, finiteness, and bound ordering.
    pub fn new(
        names: Vec<String>,
        values: Vec<f64>,
        bounds: Vec<(f64, f64)>,
    ) -> Result<Self, ModelError> {
        if names.is_empty() || names.len() != values.len() || names.len() != bounds.len() {
            return Err(ModelError::Parameter(format!(
                "inconsistent parameter arity: {} names, {} values, {} bounds",
                names.len(),
                values.len(),
                bounds.len()
            )));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(ModelError::Parameter(format!(
                    "parameter '{}' is not finite",
                    names[i]
                )));
            }
        }
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(ModelError::Parameter(format!(
                    "bounds for '{}' must satisfy low < high, got ({lo}, {hi})",
                    names[i]
                )));
            }
        }
        Ok(Self {
            names,
            values,
            bounds,
        })
    }

    /// Number of design parameters.
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// A full-order substructure: symmetric mass/stiffness, load vector, and the
/// interface/internal DoF split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Substructure {
    /// Mass matrix, `n×n`, symmetric positive definite.
    pub m: DMatrix<f64>,
    /// Stiffness matrix, `n×n`, symmetric positive semi-definite.
    pub k: DMatrix<f64>,
    /// External load vector, length `n`.
    pub f: DVector<f64>,
    /// Interface DoF indices (the `i` set), in coupling order.
    pub interface_dofs: Vec<usize>,
    /// Internal DoF indices (the `j` set).
    pub internal_dofs: Vec<usize>,
    /// Design-parameter record for this instance.
    pub params: ModelParams,
}

impl Substructure {
    /// Validates that the DoF lists partition `0..n` and match matrix sizes.
    pub fn new(
        m: DMatrix<f64>,
        k: DMatrix<f64>,
        f: DVector<f64>,
        interface_dofs: Vec<usize>,
        internal_dofs: Vec<usize>,
        params: ModelParams,
    ) -> Result<Self, ModelError> {
        let n = m.nrows();
        if m.ncols() != n || k.nrows() != n || k.ncols() != n || f.len() != n {
            return Err(ModelError::Partition(format!(
                "matrix/vector sizes disagree: M {}x{}, K {}x{}, F {}",
                m.nrows(),
                m.ncols(),
                k.nrows(),
                k.ncols(),
                f.len()
            )));
        }
        let mut seen = vec![false; n];
        for &d in interface_dofs.iter().chain(internal_dofs.iter()) {
            if d >= n {
                return Err(ModelError::Partition(format!(
                    "DoF index {d} out of range for {n} DoF"
                )));
            }
            if seen[d] {
                return Err(ModelError::Partition(format!("DoF index {d} listed twice")));
            }
            seen[d] = true;
        }
        if interface_dofs.is_empty() || internal_dofs.is_empty() || seen.iter().any(|&s| !s) {
            return Err(ModelError::Partition(
                "interface and internal lists must be non-empty and cover every DoF".into(),
            ));
        }
        Ok(Self {
            m,
            k,
            f,
            interface_dofs,
            internal_dofs,
            params,
        })
    }

    /// Total DoF count.
    pub fn ndof(&self) -> usize {
        self.m.nrows()
    }

    /// Interface DoF count.
    pub fn n_interface(&self) -> usize {
        self.interface_dofs.len()
    }

    /// Internal DoF count.
    pub fn n_internal(&self) -> usize {
        self.internal_dofs.len()
    }
}

/// Matrix blocks of a substructure in `[interface; internal]` order.
///
/// Index convention: `i` = interface, `j` = internal, so `k_jj` is the
/// internal-internal stiffness (positive definite once the interface is held).
#[derive(Debug, Clone)]
pub struct Partition {
    pub m_ii: DMatrix<f64>,
    pub m_ij: DMatrix<f64>,
    pub m_ji: DMatrix<f64>,
    pub m_jj: DMatrix<f64>,
    pub k_ii: DMatrix<f64>,
    pub k_ij: DMatrix<f64>,
    pub k_ji: DMatrix<f64>,
    pub k_jj: DMatrix<f64>,
    pub f_i: DVector<f64>,
    pub f_j: DVector<f64>,
}

fn select(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| a[(rows[r], cols[c])])
}

/// Extracts the interface/internal blocks of `s`.
pub fn partition(s: &Substructure) -> Partition {
    let i = &s.interface_dofs;
    let j = &s.internal_dofs;
    Partition {
        m_ii: select(&s.m, i, i),
        m_ij: select(&s.m, i, j),
        m_ji: select(&s.m, j, i),
        m_jj: select(&s.m, j, j),
        k_ii: select(&s.k, i, i),
        k_ij: select(&s.k, i, j),
        k_ji: select(&s.k, j, i),
        k_jj: select(&s.k, j, j),
        f_i: DVector::from_fn(i.len(), |r, _| s.f[i[r]]),
        f_j: DVector::from_fn(j.len(), |r, _| s.f[j[r]]),
    }
}

/// Nodes per side of the square lattice.
pub const LATTICE_GRID: usize = 11;
/// Brace-bar stiffness as a fraction of the horizontal spring stiffness.
pub const LATTICE_BRACE_RATIO: f64 = 0.64;

fn add_axial(k: &mut DMatrix<f64>, i: usize, j: usize, stiff: f64) {
    k[(i, i)] += stiff;
    k[(j, j)] += stiff;
    k[(i, j)] -= stiff;
    k[(j, i)] -= stiff;
}

/// Adds a 2-D truss bar between nodes `a` and `b` with unit direction `(nx, ny)`.
fn add_bar(k: &mut DMatrix<f64>, a: usize, b: usize, stiff: f64, nx: f64, ny: f64) {
    let nn = [[nx * nx, nx * ny], [nx * ny, ny * ny]];
    let da = [2 * a, 2 * a + 1];
    let db = [2 * b, 2 * b + 1];
    for p in 0..2 {
        for q in 0..2 {
            let v = stiff * nn[p][q];
            k[(da[p], da[q])] += v;
            k[(db[p], db[q])] += v;
            k[(da[p], db[q])] -= v;
            k[(db[p], da[q])] -= v;
        }
    }
}

/// Builds the 11×11 planar lattice (242 DoF).
///
/// * `m` — nodal mass per DoF (kg),
/// * `k1` — horizontal axial spring stiffness (N/m),
/// * `k2` — vertical axial spring stiffness (N/m).
///
/// Every cell also carries two diagonal brace bars of stiffness
/// `LATTICE_BRACE_RATIO · k1` with full 2-D truss coupling; they ground the
/// transverse motions so the internal stiffness block is positive definite,
/// while preserving both mirror symmetries of the cell. The interface is all
/// 44 DoF of the leftmost and rightmost node columns (left column top-to-
/// bottom, then right column), so the gaps between consecutive lattices in a
/// chain line up block-for-block.
pub fn build_lattice(m: f64, k1: f64, k2: f64) -> Result<Substructure, ModelError> {
    for (name, v) in [("m", m), ("k1", k1), ("k2", k2)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(ModelError::Parameter(format!(
                "lattice parameter {name} must be positive and finite, got {v}"
            )));
        }
    }
    let n = LATTICE_GRID;
    let ndof = 2 * n * n;
    let node = |r: usize, c: usize| r * n + c;
    let mut k = DMatrix::zeros(ndof, ndof);
    let mass = DMatrix::from_diagonal(&DVector::from_element(ndof, m));
    for r in 0..n {
        for c in 0..n - 1 {
            add_axial(&mut k, 2 * node(r, c), 2 * node(r, c + 1), k1);
        }
    }
    for r in 0..n - 1 {
        for c in 0..n {
            add_axial(&mut k, 2 * node(r, c) + 1, 2 * node(r + 1, c) + 1, k2);
        }
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let kd = LATTICE_BRACE_RATIO * k1;
    for r in 0..n - 1 {
        for c in 0..n - 1 {
            add_bar(&mut k, node(r, c), node(r + 1, c + 1), kd, s, s);
            add_bar(&mut k, node(r, c + 1), node(r + 1, c), kd, -s, s);
        }
    }
    let mut interface = Vec::with_capacity(4 * n);
    for c in [0, n - 1] {
        for r in 0..n {
            interface.push(2 * node(r, c));
            interface.push(2 * node(r, c) + 1);
        }
    }
    let iface_set: std::collections::HashSet<usize> = interface.iter().copied().collect();
    let internal: Vec<usize> = (0..ndof).filter(|d| !iface_set.contains(d)).collect();
    let params = ModelParams::new(
        vec!["m".into(), "k1".into(), "k2".into()],
        vec![m, k1, k2],
        vec![(0.5 * m, 1.5 * m), (0.5 * k1, 1.5 * k1), (0.5 * k2, 1.5 * k2)],
    )?;
    Substructure::new(mass, k, DVector::zeros(ndof), interface, internal, params)
}

/// Calibration constants of the resonator unit cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResonatorConstants {
    /// Base chain mass per node (kg).
    pub base_mass: f64,
    /// Base chain spring stiffness (N/m).
    pub base_stiffness: f64,
    /// Resonator stiffness coefficient: `k_r = stiffness_coeff · W / L³`.
    pub stiffness_coeff: f64,
    /// Resonator mass coefficient: `m_r = mass_coeff · W · L`.
    pub mass_coeff: f64,
    /// Stiffness multiplier of the second appendage, detuning it from the first.
    pub detune: f64,
}

impl Default for ResonatorConstants {
    fn default() -> Self {
        Self {
            base_mass: 0.1,
            base_stiffness: 1e5,
            stiffness_coeff: 1e5,
            mass_coeff: 1.5e-4,
            detune: 1.44,
        }
    }
}

/// Builds the resonator unit cell (10 DoF) at design point `(L, W)`.
///
/// The base is a six-mass axial chain (nodes 0–5); the interface is the two
/// end masses `{0, 5}`. Each end mass carries a two-DoF resonator appendage
/// (appendage A on node 0 → DoF 6, 7; appendage B on node 5 → DoF 8, 9) with
/// springs `2·k_r` (attachment→first mass, first→second mass) and masses
/// `0.50·m_r` / `0.35·m_r`; the remaining `0.15·m_r` is lumped onto the
/// attachment node. Appendage B's springs are scaled by `detune` so its modes
/// never coincide with appendage A's. With the interface held, the internal
/// blocks decouple into base chain ⊕ appendage A ⊕ appendage B, and the
/// appendage frequencies scale as `1/L²` independent of `W`.
pub fn build_resonator_cell(l: f64, w: f64) -> Result<Substructure, ModelError> {
    build_resonator_cell_with(l, w, &ResonatorConstants::default())
}

/// [`build_resonator_cell`] with explicit calibration constants.
pub fn build_resonator_cell_with(
    l: f64,
    w: f64,
    c: &ResonatorConstants,
) -> Result<Substructure, ModelError> {
    for (name, v) in [("L", l), ("W", w)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(ModelError::Parameter(format!(
                "resonator parameter {name} must be positive and finite, got {v}"
            )));
        }
    }
    for (name, v) in [
        ("base_mass", c.base_mass),
        ("base_stiffness", c.base_stiffness),
        ("stiffness_coeff", c.stiffness_coeff),
        ("mass_coeff", c.mass_coeff),
        ("detune", c.detune),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(ModelError::Parameter(format!(
                "resonator constant {name} must be positive and finite, got {v}"
            )));
        }
    }
    let ndof = 10;
    let mut k = DMatrix::zeros(ndof, ndof);
    let mut m = DMatrix::zeros(ndof, ndof);
    for i in 0..6 {
        m[(i, i)] = c.base_mass;
    }
    for i in 0..5 {
        add_axial(&mut k, i, i + 1, c.base_stiffness);
    }
    let kr = c.stiffness_coeff * w / (l * l * l);
    let mr = c.mass_coeff * w * l;
    for (attach, first, scale) in [(0usize, 6usize, 1.0), (5, 8, c.detune)] {
        add_axial(&mut k, attach, first, 2.0 * kr * scale);
        add_axial(&mut k, first, first + 1, 2.0 * kr * scale);
        m[(first, first)] += 0.50 * mr;
        m[(first + 1, first + 1)] += 0.35 * mr;
        m[(attach, attach)] += 0.15 * mr;
    }
    let params = ModelParams::new(
        vec!["L".into(), "W".into()],
        vec![l, w],
        vec![(0.5 * l, 1.5 * l), (0.5 * w, 1.5 * w)],
    )?;
    Substructure::new(
        m,
        k,
        DVector::zeros(ndof),
        vec![0, 5],
        vec![1, 2, 3, 4, 6, 7, 8, 9],
        params,
    )
}
