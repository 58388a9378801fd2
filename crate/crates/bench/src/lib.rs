//! Shared setup for the pipeline benchmarks.

use modalpose_core::fixture::FixtureParams;
use modalpose_core::mesh::{midsagittal_path, MidsagittalPath, TetMesh};
use modalpose_core::shape_db::{generate_database, project_contour, GenConfig, ShapeDatabase};
use modalpose_core::{assemble, solve_modes, FemSystem, MaterialParams, ModalBasis, Vec3};

pub struct BenchModel {
    pub mesh: TetMesh,
    pub system: FemSystem,
    pub basis: ModalBasis,
    pub path: MidsagittalPath,
}

impl BenchModel {
    /// Default fixture with `modes` retained modes.
    pub fn fixture(modes: usize) -> Self {
        let mesh = FixtureParams::default().build().expect("fixture builds");
        let system = assemble(&mesh, &MaterialParams::default(), 0.1, 0.01).expect("fixture assembles");
        let basis = solve_modes(&system, modes).expect("fixture eigensolve");
        let path = midsagittal_path(&mesh, mesh.default_plane_tolerance()).expect("fixture ridge path");
        BenchModel {
            mesh,
            system,
            basis,
            path,
        }
    }

    pub fn gen_config(&self, samples: usize) -> GenConfig {
        let rest = project_contour(&self.mesh, &self.path, &vec![Vec3::zeros(); self.mesh.node_count()])
            .expect("rest contour");
        GenConfig {
            samples,
            ..GenConfig::for_rest_contour(&rest)
        }
    }

    pub fn database(&self, samples: usize) -> ShapeDatabase {
        generate_database(&self.mesh, &self.basis, &self.path, &self.gen_config(samples)).expect("database generates")
    }
}
