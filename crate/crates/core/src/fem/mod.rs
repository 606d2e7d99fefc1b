//! Linear-elastic finite-element oracle on the pixel mesh.
//!
//! Every material pixel becomes a square 4-node bilinear element (Q4) with
//! full 2×2 Gauss integration. In axisymmetric mode the radial coordinate is
//! the column direction and the hoop strain `u_r / r` is evaluated at the
//! Gauss points; plane stress exists for analytic validation (Kirsch hole).
//!
//! Boundary conditions: the bottom edge (row 0) is on rollers (`u_z = 0`),
//! the top edge carries a uniform axial traction or a uniform axial
//! displacement, bore and outer surfaces are free. Nodes on the axis
//! (`r = 0`) get `u_r = 0`. In plane stress one bottom node is also pinned
//! radially to remove the rigid translation; axisymmetric meshes have no
//! radial rigid mode (the hoop term resists it), so none is pinned there.
//!
//! The linear system is always built and solved nondimensionally (E = 1,
//! unit load) and scaled afterwards; K_t is therefore exactly independent
//! of E and of the load magnitude.

mod element;
mod field;
mod mesh;
pub mod sparse;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::scalar::Scalar;
use crate::surface::SurfaceSlice;

pub use field::{load_field, load_field_sidecar, save_field, FieldSidecar, KtField};
pub use mesh::{check_connectivity, PixelMesh};
pub use sparse::{CgOutcome, CsrMatrix};

use element::{b_matrix, constitutive, stiffness, Matrix8, GAUSS};
use mesh::element_nodes;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisMode {
    Axisymmetric,
    PlaneStress,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Material {
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
}

impl Default for Material {
    fn default() -> Self {
        Self {
            youngs_modulus: 1.0,
            poisson_ratio: 0.30,
        }
    }
}

impl Material {
    pub fn validate(&self) -> Result<()> {
        if !(self.youngs_modulus > 0.0 && self.youngs_modulus.is_finite()) {
            return Err(Error::Parameter(format!(
                "Young's modulus must be > 0, got {}",
                self.youngs_modulus
            )));
        }
        if !(0.0..0.5).contains(&self.poisson_ratio) {
            return Err(Error::Parameter(format!(
                "Poisson ratio must be in [0, 0.5), got {}",
                self.poisson_ratio
            )));
        }
        Ok(())
    }
}

/// Axial loading on the top edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadCase {
    /// Uniform axial traction (stress units).
    Traction(f64),
    /// Uniform axial displacement (µm).
    Displacement(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    pub mode: AnalysisMode,
    pub load: LoadCase,
    pub cg_rel_tol: f64,
    pub cg_max_iters: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            mode: AnalysisMode::Axisymmetric,
            load: LoadCase::Traction(1.0),
            cg_rel_tol: 1e-8,
            cg_max_iters: 100_000,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cg_rel_tol > 0.0 && self.cg_rel_tol <= 1e-3) {
            return Err(Error::Config(format!(
                "cg_rel_tol must be in (0, 1e-3], got {}",
                self.cg_rel_tol
            )));
        }
        if self.cg_max_iters == 0 {
            return Err(Error::Config("cg_max_iters must be >= 1".into()));
        }
        let magnitude = match self.load {
            LoadCase::Traction(s) | LoadCase::Displacement(s) => s,
        };
        if !(magnitude.is_finite() && magnitude != 0.0) {
            return Err(Error::Config(format!(
                "load magnitude must be finite and nonzero, got {magnitude}"
            )));
        }
        Ok(())
    }

    pub fn with_mode(mut self, mode: AnalysisMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.cg_rel_tol = tol;
        self
    }
}

/// Stable hash of a material + solver configuration.
pub fn config_hash(material: &Material, config: &SolveConfig) -> String {
    let text = serde_json::to_string(&(material, config)).expect("config serializes");
    io::sha256_hex(text.as_bytes())
}

/// Assembled nondimensional system (E = 1, unit load) with its constraints.
#[derive(Debug, Clone)]
pub struct SparseSystem<T> {
    pub mesh: PixelMesh,
    pub stiffness: CsrMatrix<T>,
    /// Consistent nodal forces of a unit traction (zero under displacement control).
    pub load: Vec<T>,
    pub fixed: Vec<bool>,
    /// Values of the fixed DOFs for a unit load.
    pub prescribed: Vec<T>,
    /// Axial DOFs of the bottom (roller) edge.
    pub bottom_dofs: Vec<usize>,
    /// Axial DOFs of the top (loaded) edge.
    pub top_dofs: Vec<usize>,
    pub mode: AnalysisMode,
    pub load_case: LoadCase,
    pub material: Material,
    pub pixel_pitch: f64,
    pub r_inner: f64,
}

impl<T> SparseSystem<T> {
    pub fn n_dofs(&self) -> usize {
        self.fixed.len()
    }
}

/// Checked assembly: rejects geometry the oracle cannot load meaningfully.
pub fn assemble<T: Scalar>(slice: &SurfaceSlice, material: &Material, config: &SolveConfig) -> Result<SparseSystem<T>> {
    check_connectivity(slice)?;
    assemble_unchecked(slice, material, config)
}

/// Assembly without the connectivity check. Disconnected pieces produce a
/// singular system that [`solve`] reports as a convergence failure.
pub fn assemble_unchecked<T: Scalar>(
    slice: &SurfaceSlice,
    material: &Material,
    config: &SolveConfig,
) -> Result<SparseSystem<T>> {
    material.validate()?;
    config.validate()?;
    if slice.material_count() == 0 {
        return Err(Error::Geometry("slice has no material".into()));
    }
    let mode = config.mode;
    let h = slice.pixel_pitch();
    let r_inner = slice.r_inner_nominal();
    let mesh = PixelMesh::new(slice);
    let (rows, cols) = (mesh.rows, mesh.cols);

    let d = constitutive::<T>(mode, 1.0, material.poisson_ratio);
    let element_k: Vec<Matrix8<T>> = match mode {
        AnalysisMode::Axisymmetric => (0..cols)
            .map(|j| stiffness(mode, &d, h, r_inner + j as f64 * h))
            .collect(),
        AnalysisMode::PlaneStress => vec![stiffness(mode, &d, h, r_inner)],
    };
    let ke = |j: usize| -> &Matrix8<T> {
        match mode {
            AnalysisMode::Axisymmetric => &element_k[j],
            AnalysisMode::PlaneStress => &element_k[0],
        }
    };

    // Each node's two rows are built independently from its (up to four)
    // adjacent elements, then concatenated in DOF order.
    let node_rows: Vec<(Vec<u32>, Vec<T>, Vec<T>)> = mesh
        .nodes
        .par_iter()
        .map(|&(a, b)| {
            let mut neighbours: Vec<usize> = Vec::with_capacity(9);
            for (i, j, _) in mesh.adjacent_elements(a, b) {
                for (na, nb) in element_nodes(i, j) {
                    neighbours.push(mesh.node(na, nb).expect("element nodes are active"));
                }
            }
            neighbours.sort_unstable();
            neighbours.dedup();
            let width = 2 * neighbours.len();
            let mut rows_v = [vec![T::zero(); width], vec![T::zero(); width]];
            for (i, j, li) in mesh.adjacent_elements(a, b) {
                let k = ke(j);
                for (lj, (na, nb)) in element_nodes(i, j).into_iter().enumerate() {
                    let node = mesh.node(na, nb).expect("element nodes are active");
                    let pos = neighbours.binary_search(&node).expect("neighbour listed");
                    for c in 0..2 {
                        for dd in 0..2 {
                            rows_v[c][2 * pos + dd] += k[2 * li + c][2 * lj + dd];
                        }
                    }
                }
            }
            let cols_idx: Vec<u32> = neighbours
                .iter()
                .flat_map(|&n| [2 * n as u32, 2 * n as u32 + 1])
                .collect();
            let [r0, r1] = rows_v;
            (cols_idx, r0, r1)
        })
        .collect();

    let n = mesh.n_dofs();
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let nnz: usize = node_rows.iter().map(|(c, _, _)| 2 * c.len()).sum();
    let mut col_idx = Vec::with_capacity(nnz);
    let mut values = Vec::with_capacity(nnz);
    for (cidx, r0, r1) in node_rows {
        for row in [r0, r1] {
            col_idx.extend_from_slice(&cidx);
            values.extend(row);
            row_ptr.push(col_idx.len());
        }
    }
    let stiffness_matrix = CsrMatrix {
        n,
        row_ptr,
        col_idx,
        values,
    };

    let mut load = vec![T::zero(); n];
    let mut fixed = vec![false; n];
    let mut prescribed = vec![T::zero(); n];

    let top_dofs: Vec<usize> = (0..=cols)
        .filter_map(|b| mesh.node(rows, b))
        .map(|k| 2 * k + 1)
        .collect();
    let bottom_dofs: Vec<usize> = (0..=cols)
        .filter_map(|b| mesh.node(0, b))
        .map(|k| 2 * k + 1)
        .collect();
    for &dof in &bottom_dofs {
        fixed[dof] = true;
    }
    if mode == AnalysisMode::Axisymmetric && r_inner == 0.0 {
        for a in 0..=rows {
            if let Some(k) = mesh.node(a, 0) {
                fixed[2 * k] = true;
            }
        }
    }
    if mode == AnalysisMode::PlaneStress {
        let first = (0..=cols)
            .find_map(|b| mesh.node(0, b))
            .ok_or_else(|| Error::Geometry("bottom edge has no material".into()))?;
        fixed[2 * first] = true;
    }
    if top_dofs.is_empty() {
        return Err(Error::Geometry("top edge has no material".into()));
    }

    match config.load {
        LoadCase::Traction(_) => {
            let i = rows - 1;
            for j in 0..cols {
                if !mesh.is_material(i, j) {
                    continue;
                }
                let ra = r_inner + j as f64 * h;
                let rb = ra + h;
                let (fa, fb) = match mode {
                    AnalysisMode::Axisymmetric => {
                        let c = 2.0 * std::f64::consts::PI * h / 6.0;
                        (c * (2.0 * ra + rb), c * (ra + 2.0 * rb))
                    }
                    AnalysisMode::PlaneStress => (h / 2.0, h / 2.0),
                };
                let ka = mesh.node(rows, j).expect("top node active");
                let kb = mesh.node(rows, j + 1).expect("top node active");
                load[2 * ka + 1] += T::of(fa);
                load[2 * kb + 1] += T::of(fb);
            }
        }
        LoadCase::Displacement(_) => {
            for &dof in &top_dofs {
                fixed[dof] = true;
                prescribed[dof] = T::one();
            }
        }
    }

    Ok(SparseSystem {
        mesh,
        stiffness: stiffness_matrix,
        load,
        fixed,
        prescribed,
        bottom_dofs,
        top_dofs,
        mode,
        load_case: config.load,
        material: *material,
        pixel_pitch: h,
        r_inner,
    })
}

/// Physical nodal displacements with solver diagnostics.
#[derive(Debug, Clone)]
pub struct Displacements<T> {
    pub values: Vec<T>,
    pub iterations: usize,
    pub rel_residual: f64,
    pub wall_time_s: f64,
}

impl<T: Scalar> Displacements<T> {
    pub fn u_r(&self, node: usize) -> T {
        self.values[2 * node]
    }

    pub fn u_z(&self, node: usize) -> T {
        self.values[2 * node + 1]
    }
}

/// Physical displacement per unit-load displacement.
fn displacement_scale<T>(system: &SparseSystem<T>) -> f64 {
    match system.load_case {
        LoadCase::Traction(s) => s / system.material.youngs_modulus,
        LoadCase::Displacement(d) => d,
    }
}

pub fn solve<T: Scalar>(system: &SparseSystem<T>, config: &SolveConfig) -> Result<Displacements<T>> {
    config.validate()?;
    let start = Instant::now();
    let out = sparse::pcg(
        &system.stiffness,
        &system.load,
        &system.fixed,
        system.prescribed.clone(),
        config.cg_rel_tol,
        config.cg_max_iters,
    )?;
    let scale = T::of(displacement_scale(system));
    Ok(Displacements {
        values: out.x.into_iter().map(|v| v * scale).collect(),
        iterations: out.iterations,
        rel_residual: out.rel_residual,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Reaction forces `K u − f` at the fixed DOFs, physical units.
pub fn reactions<T: Scalar>(system: &SparseSystem<T>, u: &Displacements<T>) -> Vec<(usize, f64)> {
    let e = system.material.youngs_modulus;
    let f_scale = match system.load_case {
        LoadCase::Traction(s) => s,
        LoadCase::Displacement(_) => 0.0,
    };
    (0..system.n_dofs())
        .filter(|&i| system.fixed[i])
        .map(|i| {
            let ku = system.stiffness.row_dot(i, &u.values).as_f64() * e;
            (i, ku - f_scale * system.load[i].as_f64())
        })
        .collect()
}

/// Total axial force carried through the section, physical units.
pub fn axial_force<T: Scalar>(system: &SparseSystem<T>, u: &Displacements<T>) -> f64 {
    match system.load_case {
        LoadCase::Traction(s) => s * system.top_dofs.iter().map(|&d| system.load[d].as_f64()).sum::<f64>(),
        LoadCase::Displacement(_) => {
            let e = system.material.youngs_modulus;
            system
                .top_dofs
                .iter()
                .map(|&d| system.stiffness.row_dot(d, &u.values).as_f64() * e)
                .sum()
        }
    }
}

/// Net section area normal to the axis, measured from the mean bore wall
/// (`r_inner + mean bore depth`) to the outer radius.
pub fn nominal_area(slice: &SurfaceSlice, mode: AnalysisMode) -> f64 {
    let r_in = slice.r_inner_nominal() + slice.mean_bore_depth();
    let r_out = slice.r_outer();
    match mode {
        AnalysisMode::Axisymmetric => std::f64::consts::PI * (r_out * r_out - r_in * r_in),
        AnalysisMode::PlaneStress => r_out - r_in,
    }
}

/// Element-averaged stress `(σ_rr, σ_zz, σ_θθ, τ_rz)` per pixel; `None` on void.
pub fn element_stresses<T: Scalar>(
    u: &Displacements<T>,
    slice: &SurfaceSlice,
    system: &SparseSystem<T>,
) -> Vec<Option<[f64; 4]>> {
    let mesh = &system.mesh;
    let h = system.pixel_pitch;
    let mode = system.mode;
    let d = constitutive::<f64>(mode, system.material.youngs_modulus, system.material.poisson_ratio);
    let cols = slice.cols();
    let b_at: Vec<[[[f64; 8]; 4]; 4]> = match mode {
        AnalysisMode::Axisymmetric => (0..cols)
            .map(|j| GAUSS.map(|(xi, eta)| b_matrix::<f64>(mode, h, system.r_inner + j as f64 * h, xi, eta).0))
            .collect(),
        AnalysisMode::PlaneStress => vec![GAUSS.map(|(xi, eta)| b_matrix::<f64>(mode, h, system.r_inner, xi, eta).0)],
    };
    (0..slice.rows() * cols)
        .into_par_iter()
        .map(|p| {
            let (i, j) = (p / cols, p % cols);
            if !slice.is_material(i, j) {
                return None;
            }
            let mut ue = [0.0; 8];
            for (l, (a, b)) in element_nodes(i, j).into_iter().enumerate() {
                let k = mesh.node(a, b).expect("element nodes are active");
                ue[2 * l] = u.u_r(k).as_f64();
                ue[2 * l + 1] = u.u_z(k).as_f64();
            }
            let bs = match mode {
                AnalysisMode::Axisymmetric => &b_at[j],
                AnalysisMode::PlaneStress => &b_at[0],
            };
            let mut avg = [0.0; 4];
            for b in bs {
                let strain: [f64; 4] = std::array::from_fn(|m| (0..8).map(|c| b[m][c] * ue[c]).sum());
                for (m, s) in avg.iter_mut().enumerate() {
                    *s += (0..4).map(|q| d[m][q] * strain[q]).sum::<f64>() / 4.0;
                }
            }
            Some(avg)
        })
        .collect()
}

/// Largest principal stress of `(σ_rr, σ_zz, σ_θθ, τ_rz)`; the hoop stress is
/// itself principal (zero in plane stress, which makes it the out-of-plane value).
pub fn first_principal(s: [f64; 4]) -> f64 {
    let [srr, szz, stt, trz] = s;
    let centre = 0.5 * (srr + szz);
    let radius = (0.25 * (srr - szz).powi(2) + trz * trz).sqrt();
    (centre + radius).max(stt)
}

/// Per-pixel K_t = σ1 / σ_nominal with σ_nominal = axial force / nominal area.
/// Fully compressive pixels (σ1 < 0) are reported as K_t = 0.
pub fn stress_recovery<T: Scalar>(
    u: &Displacements<T>,
    slice: &SurfaceSlice,
    system: &SparseSystem<T>,
) -> Result<KtField<T>> {
    if slice.rows() != system.mesh.rows || slice.cols() != system.mesh.cols {
        return Err(Error::Shape("slice does not match the assembled mesh".into()));
    }
    let force = axial_force(system, u);
    let sigma_nominal = force / nominal_area(slice, system.mode);
    if !(sigma_nominal > 0.0 && sigma_nominal.is_finite()) {
        return Err(Error::Config(format!(
            "nominal stress must be positive, got {sigma_nominal} (tensile load expected)"
        )));
    }
    let values = element_stresses(u, slice, system)
        .into_iter()
        .map(|s| match s {
            Some(s) => T::of((first_principal(s) / sigma_nominal).max(0.0)),
            None => T::nan(),
        })
        .collect();
    KtField::new(
        slice.rows(),
        slice.cols(),
        values,
        sigma_nominal,
        system.mode,
        slice.pixel_pitch(),
        slice.r_inner_nominal(),
        slice.digest(),
    )
}

/// Wall-clock breakdown of a full FE solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveTiming {
    pub assemble_s: f64,
    pub solve_s: f64,
    pub recover_s: f64,
    pub total_s: f64,
    pub cg_iterations: usize,
    pub cg_rel_residual: f64,
    pub n_dofs: usize,
    pub n_elements: usize,
}

/// Assemble, solve and recover K_t in one call.
pub fn solve_slice<T: Scalar>(
    slice: &SurfaceSlice,
    material: &Material,
    config: &SolveConfig,
) -> Result<(KtField<T>, SolveTiming)> {
    let t0 = Instant::now();
    let system = assemble::<T>(slice, material, config)?;
    let t1 = Instant::now();
    let u = solve(&system, config)?;
    let t2 = Instant::now();
    let field = stress_recovery(&u, slice, &system)?;
    let t3 = Instant::now();
    let timing = SolveTiming {
        assemble_s: (t1 - t0).as_secs_f64(),
        solve_s: (t2 - t1).as_secs_f64(),
        recover_s: (t3 - t2).as_secs_f64(),
        total_s: (t3 - t0).as_secs_f64(),
        cg_iterations: u.iterations,
        cg_rel_residual: u.rel_residual,
        n_dofs: system.n_dofs(),
        n_elements: system.mesh.n_elements(),
    };
    Ok((field, timing))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tight() -> SolveConfig {
        SolveConfig::default().with_tol(1e-13)
    }

    #[test]
    fn hollow_cylinder_is_uniform() {
        let slice = SurfaceSlice::solid(24, 16, 3.0, 300.0).unwrap();
        let (field, _) = solve_slice::<f64>(&slice, &Material::default(), &tight()).unwrap();
        for v in field.values() {
            assert!((v - 1.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn patch_test_displacements_are_linear() {
        let slice = SurfaceSlice::solid(12, 10, 2.0, 50.0).unwrap();
        let mat = Material {
            youngs_modulus: 7.0,
            poisson_ratio: 0.25,
        };
        let cfg = SolveConfig {
            load: LoadCase::Traction(3.0),
            ..tight()
        };
        let sys = assemble::<f64>(&slice, &mat, &cfg).unwrap();
        let u = solve(&sys, &cfg).unwrap();
        // u_z = σ z / E, u_r = -ν σ r / E
        for (k, &(a, b)) in sys.mesh.nodes.iter().enumerate() {
            let z = a as f64 * 2.0;
            let r = 50.0 + b as f64 * 2.0;
            assert!((u.u_z(k) - 3.0 * z / 7.0).abs() < 1e-10 * (1.0 + 3.0 * 24.0 / 7.0));
            assert!((u.u_r(k) + 0.25 * 3.0 * r / 7.0).abs() < 1e-10 * (0.25 * 3.0 * 70.0 / 7.0));
        }
    }

    #[test]
    fn plane_patch_test() {
        let slice = SurfaceSlice::solid(10, 10, 1.0, 0.0).unwrap();
        let cfg = tight().with_mode(AnalysisMode::PlaneStress);
        let (field, _) = solve_slice::<f64>(&slice, &Material::default(), &cfg).unwrap();
        for v in field.values() {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn axis_nodes_are_constrained_when_touching_r0() {
        let slice = SurfaceSlice::solid(8, 8, 1.0, 0.0).unwrap();
        let (field, _) = solve_slice::<f64>(&slice, &Material::default(), &tight()).unwrap();
        for v in field.values() {
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn displacement_control_matches_traction_control() {
        let slice = SurfaceSlice::from_fn(96, 12, 3.0, 200.0, |i, j| !(j < 3 && (46..50).contains(&i))).unwrap();
        let a = solve_slice::<f64>(&slice, &Material::default(), &tight()).unwrap().0;
        let cfg = SolveConfig {
            load: LoadCase::Displacement(0.01),
            ..tight()
        };
        let b = solve_slice::<f64>(&slice, &Material::default(), &cfg).unwrap().0;
        // the notch sits far from the loaded edge, where the two BCs differ
        let (va, vb) = (a.get(48, 3).unwrap(), b.get(48, 3).unwrap());
        assert!((va - vb).abs() / va < 0.01, "{va} vs {vb}");
    }

    #[test]
    fn compressive_load_is_a_configuration_error() {
        let slice = SurfaceSlice::solid(8, 8, 3.0, 10.0).unwrap();
        let cfg = SolveConfig {
            load: LoadCase::Traction(-1.0),
            ..SolveConfig::default()
        };
        assert!(matches!(
            solve_slice::<f64>(&slice, &Material::default(), &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn invalid_material_and_config() {
        let slice = SurfaceSlice::solid(8, 8, 3.0, 10.0).unwrap();
        let bad = Material {
            youngs_modulus: 1.0,
            poisson_ratio: 0.5,
        };
        assert!(solve_slice::<f64>(&slice, &bad, &SolveConfig::default()).is_err());
        let cfg = SolveConfig::default().with_tol(0.1);
        assert!(solve_slice::<f64>(&slice, &Material::default(), &cfg).is_err());
    }

    #[test]
    fn principal_stress_cases() {
        assert_eq!(first_principal([0.0, 2.0, 0.0, 0.0]), 2.0);
        assert_eq!(first_principal([0.0, -2.0, 0.0, 0.0]), 0.0);
        assert_eq!(first_principal([0.0, 1.0, 3.0, 0.0]), 3.0);
        let s = first_principal([1.0, 1.0, 0.0, 1.0]);
        assert!((s - 2.0).abs() < 1e-15);
    }

    fn bore_notch(radius: usize) -> SurfaceSlice {
        let (rows, cols) = (20 * radius, 12 * radius);
        let r2 = (radius * radius) as f64;
        SurfaceSlice::from_fn(rows, cols, 3.0, 3.0 * 500.0 * radius as f64 / 10.0, |i, j| {
            let dz = i as f64 + 0.5 - rows as f64 / 2.0;
            let dr = j as f64 + 0.5;
            dz * dz + dr * dr >= r2
        })
        .unwrap()
    }

    #[test]
    fn bore_notch_concentration_is_bounded() {
        let (field, _) = solve_slice::<f64>(&bore_notch(10), &Material::default(), &SolveConfig::default()).unwrap();
        let max = field.max().unwrap();
        assert!((2.0..=3.5).contains(&max), "{max}");
    }

    #[test]
    fn axial_mirror_gives_mirrored_field() {
        // displacement control holds both ends flat, so the loading itself
        // is mirror-symmetric; a traction end is free to warp
        let slice = SurfaceSlice::from_fn(60, 20, 3.0, 300.0, |i, j| {
            !((j < 4 && (20..24).contains(&i)) || (j < 2 && (40..43).contains(&i)))
        })
        .unwrap();
        let cfg = SolveConfig {
            load: LoadCase::Displacement(0.02),
            ..tight()
        };
        let a = solve_slice::<f64>(&slice, &Material::default(), &cfg).unwrap().0;
        let b = solve_slice::<f64>(&slice.mirrored_axial(), &Material::default(), &cfg).unwrap().0;
        for i in 0..60 {
            for j in 0..20 {
                match (a.get(i, j), b.get(59 - i, j)) {
                    (Some(x), Some(y)) => assert!((x - y).abs() < 1e-8, "({i},{j}) {x} vs {y}"),
                    (None, None) => {}
                    _ => panic!("void pattern not mirrored at ({i},{j})"),
                }
            }
        }
    }

    #[test]
    fn floating_island_fails_to_converge() {
        // an island touching the loaded edge but not the support
        let slice = SurfaceSlice::from_fn(30, 20, 3.0, 100.0, |i, j| j < 10 || (i >= 25 && j > 12)).unwrap();
        let cfg = SolveConfig {
            cg_max_iters: 2000,
            ..SolveConfig::default()
        };
        assert!(matches!(
            assemble::<f64>(&slice, &Material::default(), &cfg),
            Err(Error::Geometry(_))
        ));
        let sys = assemble_unchecked::<f64>(&slice, &Material::default(), &cfg).unwrap();
        assert!(matches!(solve(&sys, &cfg), Err(Error::Solver { .. })));
    }

    #[test]
    fn support_reactions_balance_the_applied_force() {
        let slice = SurfaceSlice::from_fn(80, 24, 3.0, 600.0, |i, j| !(j < 5 && (30..36).contains(&i))).unwrap();
        for load in [LoadCase::Traction(2.5), LoadCase::Displacement(0.03)] {
            let cfg = SolveConfig { load, ..tight() };
            let sys = assemble::<f64>(&slice, &Material::default(), &cfg).unwrap();
            let u = solve(&sys, &cfg).unwrap();
            let applied = axial_force(&sys, &u);
            let bottom: std::collections::HashSet<usize> = sys.bottom_dofs.iter().copied().collect();
            let support: f64 = reactions(&sys, &u)
                .into_iter()
                .filter(|(d, _)| bottom.contains(d))
                .map(|(_, f)| f)
                .sum();
            assert!(applied > 0.0);
            assert!((support + applied).abs() <= 1e-8 * applied, "{support} vs {applied}");
        }
    }

    #[test]
    fn field_is_invariant_to_modulus_and_load() {
        let slice = SurfaceSlice::from_fn(64, 16, 3.0, 300.0, |i, j| !(j < 3 && (28..33).contains(&i))).unwrap();
        let base = solve_slice::<f64>(&slice, &Material::default(), &SolveConfig::default()).unwrap().0;
        let steel = Material {
            youngs_modulus: 200e9,
            ..Material::default()
        };
        let cfg = SolveConfig {
            load: LoadCase::Traction(400e6),
            ..SolveConfig::default()
        };
        for (mat, cfg) in [(steel, SolveConfig::default()), (Material::default(), cfg), (steel, cfg)] {
            let f = solve_slice::<f64>(&slice, &mat, &cfg).unwrap().0;
            for (a, b) in base.values().zip(f.values()) {
                assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn tighter_tolerance_changes_little() {
        let slice = bore_notch(8);
        let mat = Material::default();
        let a = solve_slice::<f64>(&slice, &mat, &SolveConfig::default().with_tol(1e-8)).unwrap().0;
        let b = solve_slice::<f64>(&slice, &mat, &SolveConfig::default().with_tol(1e-10)).unwrap().0;
        let peak = b.max().unwrap();
        for (x, y) in a.values().zip(b.values()) {
            assert!((x - y).abs() <= 1e-4 * peak, "{x} vs {y}");
        }
    }
}
