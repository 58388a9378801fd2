use std::collections::HashMap;
use std::path::Path;

use modalpose_core::config::KeyValues;
use modalpose_core::fem::{assemble, lumped_node_masses, MaterialParams};
use modalpose_core::fixture::FixtureParams;
use modalpose_core::mesh::{load_mesh, midsagittal_path, parse_tetmesh};

fn fixture_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures"))
}

#[test]
fn bundled_files_match_generator() {
    let params = FixtureParams::default();
    let text = std::fs::read_to_string(fixture_dir().join("tongue.tetmesh")).unwrap();
    assert_eq!(text, params.build().unwrap().to_tetmesh_string());
    let cfg = std::fs::read_to_string(fixture_dir().join("tongue.cfg")).unwrap();
    assert_eq!(cfg, params.config_text("tongue.tetmesh"));
}

#[test]
fn bundled_mesh_loads_with_node_sets() {
    let params = FixtureParams::default();
    let kv = KeyValues::load(&fixture_dir().join("tongue.cfg")).unwrap();
    let mesh = load_mesh(&fixture_dir().join(kv.get_str("mesh").unwrap())).unwrap();
    assert_eq!(
        (mesh.node_count(), mesh.tet_count()),
        (params.node_count(), params.tet_count())
    );
    let anchors: Vec<usize> = kv.get_list("anchors").unwrap().unwrap();
    let constraints: Vec<usize> = kv.get_list("constraints").unwrap().unwrap();
    let mesh = mesh.with_node_sets(&anchors, &constraints).unwrap();
    assert_eq!(mesh, params.build().unwrap());
}

#[test]
fn reserialization_is_idempotent() {
    let mesh = FixtureParams::default().build().unwrap();
    let once = parse_tetmesh(&mesh.to_tetmesh_string(), "a").unwrap();
    let twice = parse_tetmesh(&once.to_tetmesh_string(), "b").unwrap();
    assert_eq!(once.nodes(), twice.nodes());
    assert_eq!(once.tets(), twice.tets());
}

#[test]
fn surface_is_closed_and_consistently_oriented() {
    for params in [FixtureParams::default(), FixtureParams::small()] {
        let mesh = params.build().unwrap();
        let mut undirected: HashMap<(usize, usize), usize> = HashMap::new();
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for f in mesh.surface_faces() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *undirected.entry((a.min(b), a.max(b))).or_default() += 1;
                *directed.entry((a, b)).or_default() += 1;
            }
        }
        assert!(undirected.values().all(|&c| c == 2));
        // outward orientation: each edge is traversed once in each direction
        assert!(directed.values().all(|&c| c == 1));
        // Euler characteristic of a sphere
        let verts: std::collections::BTreeSet<usize> = mesh.surface_faces().iter().flatten().copied().collect();
        let chi = verts.len() as i64 - undirected.len() as i64 + mesh.surface_faces().len() as i64;
        assert_eq!(chi, 2);
    }
}

#[test]
fn midsagittal_path_is_the_ridge() {
    let params = FixtureParams::default();
    let mesh = params.build().unwrap();
    let path = midsagittal_path(&mesh, mesh.default_plane_tolerance()).unwrap();
    assert_eq!(path.node_ids, params.ridge_nodes());
    assert_eq!(path.node_ids.first(), mesh.constraint_nodes().first());
    assert_eq!(path.node_ids.last(), mesh.constraint_nodes().last());
}

#[test]
fn lumped_mass_equals_density_times_volume() {
    for params in [FixtureParams::default(), FixtureParams::small()] {
        let mesh = params.build().unwrap();
        let mat = MaterialParams::default();
        let total: f64 = lumped_node_masses(&mesh, mat.density).iter().sum();
        let expect = mat.density * mesh.total_volume();
        assert!(((total - expect) / expect).abs() <= 1e-12, "{total} vs {expect}");
        let sys = assemble(&mesh, &mat, 0.1, 0.01).unwrap();
        let sys_total: f64 = sys.node_mass.iter().sum();
        assert!(((sys_total - expect) / expect).abs() <= 1e-12);
    }
}
