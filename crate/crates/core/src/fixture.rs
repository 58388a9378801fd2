//! Procedural tongue-like fixture mesh.
//!
//! A structured block is bent into an arch in the x/y plane and extruded
//! symmetrically in z, so the middle z-layer lies exactly on `z = 0`. Each
//! hexahedral cell is split into six tets along its main diagonal (Kuhn
//! subdivision), which is conforming across neighbouring cells. The bottom
//! (inner) layer is anchored and the constraint nodes sit on the top ridge of
//! the midsagittal layer.

use std::f64::consts::PI;

use crate::config::format_list;
use crate::error::Result;
use crate::mesh::{tet_volume, TetMesh, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureParams {
    /// Cells along the arch (front to back).
    pub cells_along: usize,
    /// Cells through the thickness (bottom to top surface).
    pub cells_thick: usize,
    /// Cells across the width; must be even so a layer lands on `z = 0`.
    pub cells_wide: usize,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub arc_start_deg: f64,
    pub arc_end_deg: f64,
    pub half_width: f64,
    /// Width at the far end of the arch, as a fraction of `half_width`.
    pub end_taper: f64,
    /// Number of constraint nodes placed along the top ridge.
    pub constraint_count: usize,
}

impl Default for FixtureParams {
    /// 13 x 4 x 5 = 260 nodes, 864 tets, metres.
    fn default() -> Self {
        FixtureParams {
            cells_along: 12,
            cells_thick: 3,
            cells_wide: 4,
            inner_radius: 0.03,
            outer_radius: 0.05,
            arc_start_deg: 160.0,
            arc_end_deg: 20.0,
            half_width: 0.02,
            end_taper: 0.6,
            constraint_count: 4,
        }
    }
}

impl FixtureParams {
    /// A small block for dense cross-checks (45 nodes, 30 free nodes).
    pub fn small() -> Self {
        FixtureParams {
            cells_along: 4,
            cells_thick: 2,
            cells_wide: 2,
            constraint_count: 2,
            ..Self::default()
        }
    }

    pub fn node_count(&self) -> usize {
        (self.cells_along + 1) * (self.cells_thick + 1) * (self.cells_wide + 1)
    }

    pub fn tet_count(&self) -> usize {
        6 * self.cells_along * self.cells_thick * self.cells_wide
    }

    fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (iz * (self.cells_thick + 1) + iy) * (self.cells_along + 1) + ix
    }

    pub fn anchor_nodes(&self) -> Vec<usize> {
        let mut v = Vec::new();
        for iz in 0..=self.cells_wide {
            for ix in 0..=self.cells_along {
                v.push(self.index(ix, 0, iz));
            }
        }
        v.sort_unstable();
        v
    }

    /// Evenly spaced along the top ridge, one cell in from either end.
    pub fn constraint_nodes(&self) -> Vec<usize> {
        let m = self.constraint_count;
        let (lo, hi) = (1.0, (self.cells_along - 1) as f64);
        (0..m)
            .map(|k| {
                let t = if m == 1 { 0.0 } else { k as f64 / (m - 1) as f64 };
                let ix = (lo + t * (hi - lo)).round() as usize;
                self.index(ix, self.cells_thick, self.cells_wide / 2)
            })
            .collect()
    }

    /// Top-ridge nodes of the midsagittal layer between the first and last
    /// constraint node, in order.
    pub fn ridge_nodes(&self) -> Vec<usize> {
        let (first, last) = (1, self.cells_along - 1);
        (first..=last)
            .map(|ix| self.index(ix, self.cells_thick, self.cells_wide / 2))
            .collect()
    }

    fn position(&self, ix: usize, iy: usize, iz: usize) -> Vec3 {
        let s = ix as f64 / self.cells_along as f64;
        let v = iy as f64 / self.cells_thick as f64;
        let w = 2.0 * iz as f64 / self.cells_wide as f64 - 1.0;
        let theta = (self.arc_start_deg + s * (self.arc_end_deg - self.arc_start_deg)) * PI / 180.0;
        let r = self.inner_radius + v * (self.outer_radius - self.inner_radius);
        let hw = self.half_width * (1.0 - (1.0 - self.end_taper) * s);
        Vec3::new(r * theta.cos(), r * theta.sin(), w * hw)
    }

    pub fn build(&self) -> Result<TetMesh> {
        assert!(self.cells_wide.is_multiple_of(2), "cells_wide must be even");
        assert!(self.cells_along >= 2 && self.cells_thick >= 1);
        let mut nodes = vec![Vec3::zeros(); self.node_count()];
        for iz in 0..=self.cells_wide {
            for iy in 0..=self.cells_thick {
                for ix in 0..=self.cells_along {
                    nodes[self.index(ix, iy, iz)] = self.position(ix, iy, iz);
                }
            }
        }
        const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut tets = Vec::with_capacity(self.tet_count());
        for iz in 0..self.cells_wide {
            for iy in 0..self.cells_thick {
                for ix in 0..self.cells_along {
                    for perm in PERMS {
                        let mut c = [ix, iy, iz];
                        let mut tet = [self.index(c[0], c[1], c[2]); 4];
                        for (k, &axis) in perm.iter().enumerate() {
                            c[axis] += 1;
                            tet[k + 1] = self.index(c[0], c[1], c[2]);
                        }
                        let [a, b, cc, d] = tet.map(|i| nodes[i]);
                        if tet_volume(&a, &b, &cc, &d) < 0.0 {
                            tet.swap(2, 3);
                        }
                        tets.push(tet);
                    }
                }
            }
        }
        TetMesh::new(nodes, tets)?.with_node_sets(&self.anchor_nodes(), &self.constraint_nodes())
    }

    /// Config file text declaring this fixture's node sets.
    pub fn config_text(&self, mesh_file: &str) -> String {
        format!(
            "# generated tongue fixture: {} x {} x {} cells, radii {} / {}, half width {}\n\
             mesh = {mesh_file}\n\
             anchors = {}\n\
             constraints = {}\n",
            self.cells_along,
            self.cells_thick,
            self.cells_wide,
            self.inner_radius,
            self.outer_radius,
            self.half_width,
            format_list(&self.anchor_nodes()),
            format_list(&self.constraint_nodes()),
        )
    }
}

/// The default fixture mesh with its node sets attached.
pub fn tongue_fixture() -> TetMesh {
    FixtureParams::default()
        .build()
        .expect("default fixture parameters produce a valid mesh")
}
