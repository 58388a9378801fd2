//! Modal reduction of the anchored FEM system.
//!
//! With a lumped mass matrix the generalized problem `K phi = lambda M phi`
//! becomes the standard symmetric problem on `M^{-1/2} K M^{-1/2}`, solved
//! densely. The lowest `r` modes are kept, mass-normalized so that
//! `Phi^T M Phi = I` and `Phi^T K Phi = Lambda`. In modal coordinates the
//! damped dynamics decouple into `r` scalar oscillators with damping
//! `xi + zeta * lambda_i`.

mod integrate;
mod io;
mod warp;

use nalgebra::{DMatrix, DVector, Rotation3};

pub use integrate::advance_oscillator;
pub use warp::compute_curl_basis;

use crate::error::{Error, Result};
use crate::fem::{FemSystem, SparseSym};
use crate::mesh::{TetMesh, Vec3};

pub const DEFAULT_MODES: usize = 30;
pub const DEFAULT_POSE_EPS: f64 = 1e-6;

const MAX_EIGEN_ITERATIONS: usize = 100_000;
/// Acceptable `||K Phi - M Phi Lambda||_max / ||K||_max` after the eigensolve.
const EIGEN_RESIDUAL_TOLERANCE: f64 = 1e-8;
/// Smallest Cholesky pivot, relative to the largest diagonal entry, accepted
/// for the pose normal equations.
const POSE_PIVOT_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct ModalBasis {
    /// Free-DOF count by `r`.
    pub phi: DMatrix<f64>,
    /// Ascending eigenvalues.
    pub lambda: DVector<f64>,
    pub xi: f64,
    pub zeta: f64,
    /// Free-DOF index to global DOF (`3 * node + axis`).
    pub free_dofs: Vec<usize>,
    pub node_count: usize,
    /// `3 * node_count` by `r`; rows `3i..3i+3` map `q` to node `i`'s rotation vector.
    pub curl_basis: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalState {
    pub q: DVector<f64>,
    pub q_dot: DVector<f64>,
    pub time: f64,
}

impl ModalState {
    pub fn zeros(r: usize) -> Self {
        ModalState {
            q: DVector::zeros(r),
            q_dot: DVector::zeros(r),
            time: 0.0,
        }
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let r = q.len();
        ModalState {
            q,
            q_dot: DVector::zeros(r),
            time: 0.0,
        }
    }
}

/// Orthogonality diagnostics of a basis against the system it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisReport {
    pub modes: usize,
    pub free_dofs: usize,
    /// `max |Phi^T M Phi - I|`.
    pub mass_orthonormality: f64,
    /// `max |offdiag(Phi^T K Phi)| / max(lambda)`.
    pub stiffness_offdiag: f64,
    /// `max |diag(Phi^T K Phi) - lambda| / max(lambda)`.
    pub stiffness_diag: f64,
    /// `||K Phi - M Phi Lambda||_max / ||K||_max`.
    pub residual: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl SparseSym {
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim(), x.ncols());
        for j in 0..x.ncols() {
            let col = x.column(j);
            for r in 0..self.dim() {
                out[(r, j)] = self.row(r).map(|(c, v)| v * col[c]).sum();
            }
        }
        out
    }
}

/// Lowest `r` eigenpairs of `K phi = lambda diag(m) phi`, mass-normalized,
/// ascending, each column signed so its largest-magnitude entry is positive.
pub fn solve_lumped_eigenproblem(
    k: &DMatrix<f64>,
    mass_diag: &DVector<f64>,
    r: usize,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = k.nrows();
    if k.ncols() != n || mass_diag.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: mass_diag.len(),
        });
    }
    if r == 0 || r > n {
        return Err(Error::InvalidParam(format!("mode count must be in 1..={n}, got {r}")));
    }
    if let Some(bad) = mass_diag.iter().find(|&&m| !(m > 0.0)) {
        return Err(Error::InvalidParam(format!(
            "lumped mass entries must be > 0, found {bad}"
        )));
    }
    let inv_sqrt_m = mass_diag.map(|m| 1.0 / m.sqrt());
    let mut a = k.clone();
    for j in 0..n {
        for i in 0..n {
            a[(i, j)] *= inv_sqrt_m[i] * inv_sqrt_m[j];
        }
    }
    let a = (&a + a.transpose()) * 0.5;

    let eig = nalgebra::SymmetricEigen::try_new(a, f64::EPSILON, MAX_EIGEN_ITERATIONS)
        .ok_or(Error::EigenNonConvergence { residual: f64::NAN })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));

    let mut phi = DMatrix::zeros(n, r);
    let mut lambda = DVector::zeros(r);
    for (col, &src) in order.iter().take(r).enumerate() {
        lambda[col] = eig.eigenvalues[src];
        let v = eig.eigenvectors.column(src);
        let mut column = v.component_mul(&inv_sqrt_m);
        let pivot = column.iter().enumerate().fold(
            (0, 0.0_f64),
            |best, (i, &x)| if x.abs() > best.1.abs() { (i, x) } else { best },
        );
        if pivot.1 < 0.0 {
            column.neg_mut();
        }
        phi.set_column(col, &column);
    }

    let residual = lumped_residual(k, mass_diag, &phi, &lambda);
    if !(residual <= EIGEN_RESIDUAL_TOLERANCE) {
        return Err(Error::EigenNonConvergence { residual });
    }
    Ok((phi, lambda))
}

fn lumped_residual(k: &DMatrix<f64>, m: &DVector<f64>, phi: &DMatrix<f64>, lambda: &DVector<f64>) -> f64 {
    let kphi = k * phi;
    let mut worst = 0.0_f64;
    for j in 0..phi.ncols() {
        for i in 0..phi.nrows() {
            worst = worst.max((kphi[(i, j)] - m[i] * phi[(i, j)] * lambda[j]).abs());
        }
    }
    worst / k.amax().max(f64::MIN_POSITIVE)
}

/// Lowest `num_modes` modes of an anchored system. The curl basis is not
/// computed here; see [`ModalBasis::with_curl_basis`].
pub fn solve_modes(system: &FemSystem, num_modes: usize) -> Result<ModalBasis> {
    let k = system.stiffness.to_dense();
    let (phi, lambda) = solve_lumped_eigenproblem(&k, &system.mass_diag, num_modes)?;
    if let Some(&bad) = lambda.iter().find(|&&l| !(l > 0.0)) {
        return Err(Error::InvalidParam(format!(
            "stiffness is not positive definite (eigenvalue {bad:e}); check the anchor set"
        )));
    }
    Ok(ModalBasis {
        phi,
        lambda,
        xi: system.xi,
        zeta: system.zeta,
        free_dofs: system.free_dofs.clone(),
        node_count: system.node_count(),
        curl_basis: None,
    })
}

impl ModalBasis {
    pub fn modes(&self) -> usize {
        self.lambda.len()
    }

    pub fn free_dof_count(&self) -> usize {
        self.free_dofs.len()
    }

    /// Free-DOF index of `(node, axis)`, or `None` for anchored DOFs.
    pub fn free_index(&self, node: usize, axis: usize) -> Option<usize> {
        self.free_dofs.binary_search(&(3 * node + axis)).ok()
    }

    /// Modal damping coefficient `xi + zeta * lambda_i`.
    pub fn damping(&self, i: usize) -> f64 {
        self.xi + self.zeta * self.lambda[i]
    }

    pub fn with_curl_basis(mut self, mesh: &TetMesh) -> Result<Self> {
        self.curl_basis = Some(compute_curl_basis(mesh, self.full_mode_shapes())?);
        Ok(self)
    }

    /// Mode shapes scattered to all `3 * node_count` DOFs, zero at anchors.
    pub fn full_mode_shapes(&self) -> DMatrix<f64> {
        let mut full = DMatrix::zeros(3 * self.node_count, self.modes());
        for (f, &g) in self.free_dofs.iter().enumerate() {
            full.row_mut(g).copy_from(&self.phi.row(f));
        }
        full
    }

    pub fn report(&self, system: &FemSystem) -> BasisReport {
        let r = self.modes();
        let mphi = DMatrix::from_fn(self.phi.nrows(), r, |i, j| system.mass_diag[i] * self.phi[(i, j)]);
        let kphi = system.stiffness.mul_dense(&self.phi);
        let mass = self.phi.transpose() * &mphi;
        let stiff = self.phi.transpose() * &kphi;
        let lmax = self.lambda.amax().max(f64::MIN_POSITIVE);

        let mut mass_err = 0.0_f64;
        let mut off = 0.0_f64;
        let mut diag = 0.0_f64;
        for i in 0..r {
            for j in 0..r {
                let id = if i == j { 1.0 } else { 0.0 };
                mass_err = mass_err.max((mass[(i, j)] - id).abs());
                if i == j {
                    diag = diag.max((stiff[(i, i)] - self.lambda[i]).abs());
                } else {
                    off = off.max(stiff[(i, j)].abs());
                }
            }
        }
        let mut res = 0.0_f64;
        for j in 0..r {
            for i in 0..self.phi.nrows() {
                res = res.max((kphi[(i, j)] - mphi[(i, j)] * self.lambda[j]).abs());
            }
        }
        BasisReport {
            modes: r,
            free_dofs: self.free_dof_count(),
            mass_orthonormality: mass_err,
            stiffness_offdiag: off / lmax,
            stiffness_diag: diag / lmax,
            residual: res / system.stiffness.max_abs().max(f64::MIN_POSITIVE),
            lambda_min: self.lambda.min(),
            lambda_max: self.lambda.max(),
        }
    }
}

/// Projects a free-DOF force vector onto the modes: `Phi^T f`.
pub fn modal_force(basis: &ModalBasis, f: &DVector<f64>) -> Result<DVector<f64>> {
    if f.len() != basis.free_dof_count() {
        return Err(Error::Dimension {
            expected: basis.free_dof_count(),
            got: f.len(),
        });
    }
    Ok(basis.phi.tr_mul(f))
}

/// Advances every mode exactly over `[t, t + dt]` with the modal force held
/// constant.
pub fn step_modal(basis: &ModalBasis, state: &ModalState, modal_force: &DVector<f64>, dt: f64) -> Result<ModalState> {
    let r = basis.modes();
    for len in [state.q.len(), state.q_dot.len(), modal_force.len()] {
        if len != r {
            return Err(Error::Dimension { expected: r, got: len });
        }
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParam(format!("time step must be > 0, got {dt}")));
    }
    let mut next = ModalState::zeros(r);
    for i in 0..r {
        let (q, v) = advance_oscillator(
            basis.lambda[i],
            basis.damping(i),
            state.q[i],
            state.q_dot[i],
            modal_force[i],
            dt,
        );
        next.q[i] = q;
        next.q_dot[i] = v;
    }
    next.time = state.time + dt;
    Ok(next)
}

/// In-plane displacement target for one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseConstraint {
    pub node: usize,
    pub displacement: [f64; 2],
}

/// Factored normal equations of the regularized constraint fit
/// `min ||Phi_c q - u_c||^2 + eps q^T Lambda q`, reusable across targets
/// that share the same constraint nodes.
#[derive(Debug, Clone)]
pub struct PoseSolver {
    nodes: Vec<usize>,
    phi_c: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl PoseSolver {
    pub fn new(basis: &ModalBasis, nodes: &[usize], eps: f64) -> Result<Self> {
        if !(eps >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "regularization eps must be >= 0, got {eps}"
            )));
        }
        let r = basis.modes();
        let mut phi_c = DMatrix::zeros(2 * nodes.len(), r);
        for (k, &node) in nodes.iter().enumerate() {
            for axis in 0..2 {
                let f = basis.free_index(node, axis).ok_or_else(|| {
                    Error::InvalidParam(format!("constraint node {node} is anchored or out of range"))
                })?;
                phi_c.row_mut(2 * k + axis).copy_from(&basis.phi.row(f));
            }
        }
        let mut normal = phi_c.tr_mul(&phi_c);
        for i in 0..r {
            normal[(i, i)] += eps * basis.lambda[i];
        }
        let scale = normal.diagonal().amax();
        let chol = nalgebra::Cholesky::new(normal).ok_or(Error::SingularPose)?;
        let min_pivot = chol
            .l_dirty()
            .diagonal()
            .iter()
            .fold(f64::INFINITY, |a, &d| a.min(d * d));
        if !(min_pivot > POSE_PIVOT_TOLERANCE * scale) {
            return Err(Error::SingularPose);
        }
        Ok(PoseSolver {
            nodes: nodes.to_vec(),
            phi_c,
            chol,
        })
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    /// Modal coordinates for per-node in-plane displacements (same order as
    /// the solver's nodes).
    pub fn solve(&self, displacements: &[[f64; 2]]) -> Result<DVector<f64>> {
        let target = self.target_vector(displacements)?;
        Ok(self.chol.solve(&self.phi_c.tr_mul(&target)))
    }

    /// `||Phi_c q - u_c||`.
    pub fn residual(&self, q: &DVector<f64>, displacements: &[[f64; 2]]) -> Result<f64> {
        let target = self.target_vector(displacements)?;
        Ok((&self.phi_c * q - target).norm())
    }

    fn target_vector(&self, displacements: &[[f64; 2]]) -> Result<DVector<f64>> {
        if displacements.len() != self.nodes.len() {
            return Err(Error::Dimension {
                expected: self.nodes.len(),
                got: displacements.len(),
            });
        }
        Ok(DVector::from_iterator(
            2 * displacements.len(),
            displacements.iter().flat_map(|d| [d[0], d[1]]),
        ))
    }
}

/// Static pose whose constraint nodes best follow the prescribed in-plane
/// displacements, with stiffness-weighted Tikhonov regularization.
pub fn solve_constrained_pose(basis: &ModalBasis, constraints: &[PoseConstraint], eps: f64) -> Result<ModalState> {
    let nodes: Vec<usize> = constraints.iter().map(|c| c.node).collect();
    let disp: Vec<[f64; 2]> = constraints.iter().map(|c| c.displacement).collect();
    let solver = PoseSolver::new(basis, &nodes, eps)?;
    Ok(ModalState::at_rest(solver.solve(&disp)?))
}

/// Per-node displacements `u = Phi q`, zero at anchors. With `warp`, each
/// node's linear displacement is rotated by `exp([w]x)` where `w = Psi q` is
/// the node's rotation vector.
pub fn reconstruct(basis: &ModalBasis, state: &ModalState, warp: bool) -> Result<Vec<Vec3>> {
    reconstruct_q(basis, &state.q, warp)
}

pub fn reconstruct_q(basis: &ModalBasis, q: &DVector<f64>, warp: bool) -> Result<Vec<Vec3>> {
    if q.len() != basis.modes() {
        return Err(Error::Dimension {
            expected: basis.modes(),
            got: q.len(),
        });
    }
    let curl = match (warp, &basis.curl_basis) {
        (false, _) => None,
        (true, Some(c)) => Some(c),
        (true, None) => return Err(Error::MissingCurlBasis),
    };
    let u_free = &basis.phi * q;
    let mut u = vec![Vec3::zeros(); basis.node_count];
    for (f, &g) in basis.free_dofs.iter().enumerate() {
        u[g / 3][g % 3] = u_free[f];
    }
    if let Some(psi) = curl {
        let w_all = psi * q;
        for (i, ui) in u.iter_mut().enumerate() {
            let w = Vec3::new(w_all[3 * i], w_all[3 * i + 1], w_all[3 * i + 2]);
            if w != Vec3::zeros() {
                *ui = Rotation3::new(w) * *ui;
            }
        }
    }
    Ok(u)
}
