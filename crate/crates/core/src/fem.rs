//! Linear-elastic FEM assembly over constant-strain tetrahedra: lumped mass,
//! stiffness, and Rayleigh damping coefficients, with anchor DOFs eliminated.

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{tet_volume, TetMesh, Vec3};

pub type ElementMatrix = SMatrix<f64, 12, 12>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    pub density: f64,
}

impl Default for MaterialParams {
    /// Generic soft tissue, SI units.
    fn default() -> Self {
        MaterialParams {
            youngs_modulus: 6000.0,
            poisson_ratio: 0.49,
            density: 1040.0,
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.youngs_modulus > 0.0) {
            return Err(Error::InvalidParam(format!(
                "Young's modulus must be > 0, got {}",
                self.youngs_modulus
            )));
        }
        if !(self.poisson_ratio > 0.0 && self.poisson_ratio < 0.5) {
            return Err(Error::InvalidParam(format!(
                "Poisson ratio must lie in (0, 0.5), got {}",
                self.poisson_ratio
            )));
        }
        if !(self.density > 0.0) {
            return Err(Error::InvalidParam(format!(
                "density must be > 0, got {}",
                self.density
            )));
        }
        Ok(())
    }

    /// Lamé parameters `(lambda, mu)`.
    pub fn lame(&self) -> (f64, f64) {
        let (e, nu) = (self.youngs_modulus, self.poisson_ratio);
        (e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)), e / (2.0 * (1.0 + nu)))
    }
}

pub const DEFAULT_XI: f64 = 0.1;
pub const DEFAULT_ZETA: f64 = 0.01;

/// Symmetric sparse matrix in CSR form. Both triangles are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSym {
    /// Builds from `(row, col, value)` triplets already sorted by `(row, col)`
    /// with duplicates merged.
    fn from_sorted(n: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut row_ptr = vec![0; n + 1];
        for &(r, _, _) in entries {
            row_ptr[r + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseSym {
            n,
            row_ptr,
            col_idx: entries.iter().map(|e| e.1).collect(),
            values: entries.iter().map(|e| e.2).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let row = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[row.clone()].binary_search(&c) {
            Ok(k) => self.values[row.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let row = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[row.clone()]
            .iter()
            .copied()
            .zip(self.values[row].iter().copied())
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.n, (0..self.n).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                m[(r, c)] = v;
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Largest `|K_ij - K_ji|` relative to the largest entry.
    pub fn relative_asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst / self.max_abs().max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FemSystem {
    /// Lumped mass per free DOF.
    pub mass_diag: DVector<f64>,
    /// Stiffness over free DOFs.
    pub stiffness: SparseSym,
    pub xi: f64,
    pub zeta: f64,
    /// Global DOF (`3 * node + axis`) to free-DOF index; `None` for anchors.
    pub free_dof_map: Vec<Option<usize>>,
    /// Free-DOF index to global DOF.
    pub free_dofs: Vec<usize>,
    /// Lumped mass of every node, anchors included.
    pub node_mass: Vec<f64>,
}

impl FemSystem {
    pub fn free_dof_count(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn node_count(&self) -> usize {
        self.node_mass.len()
    }

    pub fn free_index(&self, node: usize, axis: usize) -> Option<usize> {
        self.free_dof_map[3 * node + axis]
    }
}

/// Gradients of the four linear shape functions and the signed volume.
pub(crate) fn shape_gradients(x: &[Vec3; 4]) -> Result<([Vec3; 4], f64)> {
    let vol = tet_volume(&x[0], &x[1], &x[2], &x[3]);
    let dm = Matrix3::from_columns(&[x[1] - x[0], x[2] - x[0], x[3] - x[0]]);
    let inv = dm.try_inverse().filter(|_| vol > 0.0).ok_or(Error::DegenerateTet {
        index: usize::MAX,
        volume: vol,
        threshold: 0.0,
    })?;
    let g1 = inv.row(0).transpose();
    let g2 = inv.row(1).transpose();
    let g3 = inv.row(2).transpose();
    Ok(([-(g1 + g2 + g3), g1, g2, g3], vol))
}

/// 12x12 stiffness of a constant-strain tet, DOFs ordered node-major
/// (`x0 y0 z0 x1 ...`).
pub fn element_stiffness(x: &[Vec3; 4], material: &MaterialParams) -> Result<ElementMatrix> {
    let (grads, vol) = shape_gradients(x)?;
    let (lambda, mu) = material.lame();

    let mut b = SMatrix::<f64, 6, 12>::zeros();
    for (a, g) in grads.iter().enumerate() {
        let c = 3 * a;
        b[(0, c)] = g.x;
        b[(1, c + 1)] = g.y;
        b[(2, c + 2)] = g.z;
        b[(3, c + 1)] = g.z;
        b[(3, c + 2)] = g.y;
        b[(4, c)] = g.z;
        b[(4, c + 2)] = g.x;
        b[(5, c)] = g.y;
        b[(5, c + 1)] = g.x;
    }
    let mut d = SMatrix::<f64, 6, 6>::zeros();
    for i in 0..3 {
        for j in 0..3 {
            d[(i, j)] = lambda;
        }
        d[(i, i)] = lambda + 2.0 * mu;
        d[(i + 3, i + 3)] = mu;
    }
    let k = b.transpose() * d * b * vol;
    Ok((k + k.transpose()) * 0.5)
}

fn element_matrices(mesh: &TetMesh, material: &MaterialParams) -> Result<Vec<ElementMatrix>> {
    (0..mesh.tet_count())
        .into_par_iter()
        .map(|t| {
            element_stiffness(&mesh.tet_positions(t), material).map_err(|e| match e {
                Error::DegenerateTet { volume, threshold, .. } => Error::DegenerateTet {
                    index: t,
                    volume,
                    threshold,
                },
                other => other,
            })
        })
        .collect()
}

/// Sums element contributions per DOF pair in a fixed order (sorted by the
/// owning tet's node set), so the result does not depend on tet order.
fn assemble_stiffness(
    mesh: &TetMesh,
    elements: &[ElementMatrix],
    dim: usize,
    dof: impl Fn(usize) -> Option<usize>,
) -> SparseSym {
    let mut triplets: Vec<(usize, usize, [usize; 4], f64)> = Vec::with_capacity(elements.len() * 144);
    for (tet, ke) in mesh.tets().iter().zip(elements) {
        let mut key = *tet;
        key.sort_unstable();
        for a in 0..12 {
            let Some(r) = dof(3 * tet[a / 3] + a % 3) else { continue };
            for b in 0..12 {
                let Some(c) = dof(3 * tet[b / 3] + b % 3) else { continue };
                triplets.push((r, c, key, ke[(a, b)]));
            }
        }
    }
    triplets.par_sort_unstable_by(|x, y| (x.0, x.1, x.2).cmp(&(y.0, y.1, y.2)));

    let mut merged: Vec<(usize, usize, f64)> = Vec::new();
    for (r, c, _, v) in triplets {
        match merged.last_mut() {
            Some(last) if last.0 == r && last.1 == c => last.2 += v,
            _ => merged.push((r, c, v)),
        }
    }
    SparseSym::from_sorted(dim, &merged)
}

/// Stiffness over all `3n` DOFs, before anchoring.
pub fn assemble_full_stiffness(mesh: &TetMesh, material: &MaterialParams) -> Result<SparseSym> {
    material.validate()?;
    let elements = element_matrices(mesh, material)?;
    Ok(assemble_stiffness(mesh, &elements, 3 * mesh.node_count(), Some))
}

/// Lumped node masses: each tet gives `density * volume / 4` to each node.
pub fn lumped_node_masses(mesh: &TetMesh, density: f64) -> Vec<f64> {
    let mut contrib: Vec<(usize, [usize; 4], f64)> = Vec::with_capacity(4 * mesh.tet_count());
    for (t, tet) in mesh.tets().iter().enumerate() {
        let mut key = *tet;
        key.sort_unstable();
        let m = density * mesh.tet_volume(t) / 4.0;
        contrib.extend(tet.iter().map(|&n| (n, key, m)));
    }
    contrib.sort_unstable_by_key(|a| (a.0, a.1));
    let mut masses = vec![0.0; mesh.node_count()];
    for (n, _, m) in contrib {
        masses[n] += m;
    }
    masses
}

pub fn assemble(mesh: &TetMesh, material: &MaterialParams, xi: f64, zeta: f64) -> Result<FemSystem> {
    material.validate()?;
    if mesh.anchor_nodes().is_empty() {
        return Err(Error::NoAnchors);
    }
    if !(xi >= 0.0 && zeta >= 0.0) {
        return Err(Error::InvalidParam(format!(
            "damping factors must be >= 0, got xi = {xi}, zeta = {zeta}"
        )));
    }

    let n = mesh.node_count();
    let mut free_dof_map = vec![None; 3 * n];
    let mut free_dofs = Vec::with_capacity(3 * n);
    for node in 0..n {
        if mesh.anchor_nodes().contains(&node) {
            continue;
        }
        for axis in 0..3 {
            free_dof_map[3 * node + axis] = Some(free_dofs.len());
            free_dofs.push(3 * node + axis);
        }
    }

    let elements = element_matrices(mesh, material)?;
    let stiffness = assemble_stiffness(mesh, &elements, free_dofs.len(), |g| free_dof_map[g]);
    let node_mass = lumped_node_masses(mesh, material.density);
    let mass_diag = DVector::from_iterator(free_dofs.len(), free_dofs.iter().map(|&g| node_mass[g / 3]));

    Ok(FemSystem {
        mass_diag,
        stiffness,
        xi,
        zeta,
        free_dof_map,
        free_dofs,
        node_mass,
    })
}
