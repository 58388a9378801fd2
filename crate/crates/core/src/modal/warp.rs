//! Rotation (curl) basis for modal warping.
//!
//! For each mode, the infinitesimal rotation of a linear tet is half the curl
//! of its constant displacement gradient. Node values are volume-weighted
//! averages over the incident tets, so `w_i = Psi_i q` is linear in `q`.

use nalgebra::{DMatrix, Matrix3};

use crate::error::{Error, Result};
use crate::fem::shape_gradients;
use crate::mesh::{TetMesh, Vec3};

/// `mode_shapes` is `3n x r` over all node DOFs. Returns `Psi`, also `3n x r`.
pub fn compute_curl_basis(mesh: &TetMesh, mode_shapes: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = mesh.node_count();
    if mode_shapes.nrows() != 3 * n {
        return Err(Error::Dimension {
            expected: 3 * n,
            got: mode_shapes.nrows(),
        });
    }
    let r = mode_shapes.ncols();
    let mut psi = DMatrix::zeros(3 * n, r);
    let mut weight = vec![0.0; n];

    for (t, tet) in mesh.tets().iter().enumerate() {
        let (grads, vol) = shape_gradients(&mesh.tet_positions(t)).map_err(|_| Error::DegenerateTet {
            index: t,
            volume: mesh.tet_volume(t),
            threshold: 0.0,
        })?;
        for &node in tet {
            weight[node] += vol;
        }
        for j in 0..r {
            // F[(a, b)] = d u_a / d x_b
            let mut f = Matrix3::zeros();
            for (k, &node) in tet.iter().enumerate() {
                let u = Vec3::new(
                    mode_shapes[(3 * node, j)],
                    mode_shapes[(3 * node + 1, j)],
                    mode_shapes[(3 * node + 2, j)],
                );
                f += u * grads[k].transpose();
            }
            let w = 0.5 * Vec3::new(f[(2, 1)] - f[(1, 2)], f[(0, 2)] - f[(2, 0)], f[(1, 0)] - f[(0, 1)]);
            for &node in tet {
                for a in 0..3 {
                    psi[(3 * node + a, j)] += vol * w[a];
                }
            }
        }
    }
    for (node, &wsum) in weight.iter().enumerate() {
        if wsum > 0.0 {
            for a in 0..3 {
                psi.row_mut(3 * node + a).scale_mut(1.0 / wsum);
            }
        }
    }
    Ok(psi)
}
