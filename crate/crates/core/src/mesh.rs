//! Tetrahedral meshes: loading, validation, surface extraction, the
//! midsagittal surface path and OBJ export of deformed surfaces.
//!
//! The midsagittal plane is fixed at `z = 0` in model coordinates.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Relative factor (times the bounding-box diagonal cubed) below which a tet
/// is rejected as degenerate.
pub const DEGENERATE_VOLUME_FACTOR: f64 = 1e-12;

/// Default midsagittal plane tolerance relative to the bounding-box diagonal.
pub const DEFAULT_PLANE_TOLERANCE_FACTOR: f64 = 1e-6;

const HEADER: &str = "tetmesh v1";

/// Local faces of a positively oriented tet `(a, b, c, d)`, wound so that
/// their normals point away from the opposite vertex.
const TET_FACES: [[usize; 3]; 4] = [[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]];

#[derive(Debug, Clone, PartialEq)]
pub struct TetMesh {
    nodes: Vec<Vec3>,
    tets: Vec<[usize; 4]>,
    surface_faces: Vec<[usize; 3]>,
    anchor_nodes: BTreeSet<usize>,
    constraint_nodes: Vec<usize>,
}

/// Ordered chain of surface nodes in the midsagittal plane running from the
/// first to the last constraint node.
#[derive(Debug, Clone, PartialEq)]
pub struct MidsagittalPath {
    pub node_ids: Vec<usize>,
    pub plane_tolerance: f64,
}

/// Signed volume, positive when `(b - a, c - a, d - a)` is right-handed.
pub fn tet_volume(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> f64 {
    (b - a).dot(&(c - a).cross(&(d - a))) / 6.0
}

impl TetMesh {
    /// Validates and builds a mesh. Negatively oriented tets are reoriented
    /// by swapping their last two vertices.
    pub fn new(nodes: Vec<Vec3>, tets: Vec<[usize; 4]>) -> Result<Self> {
        let n = nodes.len();
        for (ti, tet) in tets.iter().enumerate() {
            if let Some(&bad) = tet.iter().find(|&&i| i >= n) {
                return Err(Error::InvalidMesh(format!(
                    "tet {ti} references node {bad} but the mesh has {n} nodes"
                )));
            }
            let uniq: BTreeSet<_> = tet.iter().collect();
            if uniq.len() != 4 {
                return Err(Error::InvalidMesh(format!("tet {ti} repeats a node: {tet:?}")));
            }
        }

        let diag = bbox_diagonal(&nodes);
        let threshold = DEGENERATE_VOLUME_FACTOR * diag.powi(3);
        let mut seen: HashMap<[usize; 4], usize> = HashMap::with_capacity(tets.len());
        let mut oriented = Vec::with_capacity(tets.len());
        for (ti, tet) in tets.into_iter().enumerate() {
            let mut key = tet;
            key.sort_unstable();
            if let Some(prev) = seen.insert(key, ti) {
                return Err(Error::InvalidMesh(format!("tet {ti} duplicates tet {prev}")));
            }
            let [a, b, c, d] = tet;
            let vol = tet_volume(&nodes[a], &nodes[b], &nodes[c], &nodes[d]);
            if vol.abs() <= threshold || !vol.is_finite() {
                return Err(Error::DegenerateTet {
                    index: ti,
                    volume: vol,
                    threshold,
                });
            }
            oriented.push(if vol < 0.0 { [a, b, d, c] } else { tet });
        }

        let surface_faces = extract_surface(&oriented);
        Ok(TetMesh {
            nodes,
            tets: oriented,
            surface_faces,
            anchor_nodes: BTreeSet::new(),
            constraint_nodes: Vec::new(),
        })
    }

    /// Attaches anchor and constraint node sets.
    pub fn with_node_sets(mut self, anchors: &[usize], constraints: &[usize]) -> Result<Self> {
        let n = self.nodes.len();
        if let Some(&bad) = anchors.iter().chain(constraints).find(|&&i| i >= n) {
            return Err(Error::InvalidMesh(format!(
                "node set references node {bad} but the mesh has {n} nodes"
            )));
        }
        if constraints.len() < 2 {
            return Err(Error::InvalidMesh(format!(
                "need at least 2 constraint nodes, got {}",
                constraints.len()
            )));
        }
        let anchor_set: BTreeSet<usize> = anchors.iter().copied().collect();
        if let Some(&both) = constraints.iter().find(|c| anchor_set.contains(c)) {
            return Err(Error::InvalidMesh(format!(
                "node {both} is both an anchor and a constraint node"
            )));
        }
        let uniq: BTreeSet<_> = constraints.iter().collect();
        if uniq.len() != constraints.len() {
            return Err(Error::InvalidMesh("constraint nodes must be distinct".into()));
        }
        self.anchor_nodes = anchor_set;
        self.constraint_nodes = constraints.to_vec();
        Ok(self)
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn surface_faces(&self) -> &[[usize; 3]] {
        &self.surface_faces
    }

    pub fn anchor_nodes(&self) -> &BTreeSet<usize> {
        &self.anchor_nodes
    }

    pub fn constraint_nodes(&self) -> &[usize] {
        &self.constraint_nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn tet_count(&self) -> usize {
        self.tets.len()
    }

    pub fn tet_positions(&self, t: usize) -> [Vec3; 4] {
        self.tets[t].map(|i| self.nodes[i])
    }

    pub fn tet_volume(&self, t: usize) -> f64 {
        let [a, b, c, d] = self.tet_positions(t);
        tet_volume(&a, &b, &c, &d)
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.tets.len()).map(|t| self.tet_volume(t)).sum()
    }

    pub fn bbox_diagonal(&self) -> f64 {
        bbox_diagonal(&self.nodes)
    }

    pub fn default_plane_tolerance(&self) -> f64 {
        DEFAULT_PLANE_TOLERANCE_FACTOR * self.bbox_diagonal()
    }

    /// Serializes to the `tetmesh v1` text format. Floats use the shortest
    /// representation that round-trips exactly.
    pub fn to_tetmesh_string(&self) -> String {
        let mut s = String::with_capacity(32 * (self.nodes.len() + self.tets.len()));
        let _ = writeln!(s, "{HEADER}");
        let _ = writeln!(s, "{} {}", self.nodes.len(), self.tets.len());
        for p in &self.nodes {
            let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
        }
        for t in &self.tets {
            let _ = writeln!(s, "{} {} {} {}", t[0], t[1], t[2], t[3]);
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tetmesh_string()).map_err(|e| Error::io(path, e))
    }
}

fn bbox_diagonal(nodes: &[Vec3]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let mut lo = nodes[0];
    let mut hi = nodes[0];
    for p in nodes {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}

/// Loads a mesh in the `tetmesh v1` format.
pub fn load_mesh(path: &Path) -> Result<TetMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tetmesh(&text, &path.display().to_string())
}

pub fn parse_tetmesh(text: &str, name: &str) -> Result<TetMesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let perr = |line: usize, msg: String| Error::parse(name, line, msg);

    let (ln, header) = lines.next().ok_or_else(|| perr(1, "empty file".into()))?;
    if header != HEADER {
        return Err(perr(ln, format!("expected header `{HEADER}`, found `{header}`")));
    }
    let (ln, counts) = lines
        .next()
        .ok_or_else(|| perr(ln + 1, "missing `<node_count> <tet_count>` line".into()))?;
    let counts: Vec<usize> = parse_fields(counts).map_err(|m| perr(ln, m))?;
    let [node_count, tet_count] = counts[..] else {
        return Err(perr(ln, format!("expected 2 counts, found {}", counts.len())));
    };

    let mut nodes = Vec::with_capacity(node_count);
    let mut last = ln;
    for _ in 0..node_count {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| perr(last + 1, format!("expected {node_count} nodes, found {}", nodes.len())))?;
        let v: Vec<f64> = parse_fields(l).map_err(|m| perr(ln, m))?;
        if v.len() != 3 || v.iter().any(|x| !x.is_finite()) {
            return Err(perr(ln, format!("node line needs 3 finite coordinates: `{l}`")));
        }
        nodes.push(Vec3::new(v[0], v[1], v[2]));
        last = ln;
    }

    let mut tets = Vec::with_capacity(tet_count);
    for _ in 0..tet_count {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| perr(last + 1, format!("expected {tet_count} tets, found {}", tets.len())))?;
        let v: Vec<usize> = parse_fields(l).map_err(|m| perr(ln, m))?;
        if v.len() != 4 {
            return Err(perr(ln, format!("tet line needs 4 indices: `{l}`")));
        }
        if let Some(&bad) = v.iter().find(|&&i| i >= node_count) {
            return Err(perr(
                ln,
                format!("tet index {bad} out of range (node count {node_count})"),
            ));
        }
        tets.push([v[0], v[1], v[2], v[3]]);
        last = ln;
    }
    if let Some((ln, _)) = lines.next() {
        return Err(perr(ln, "trailing data after the declared tets".into()));
    }

    TetMesh::new(nodes, tets)
}

fn parse_fields<T: std::str::FromStr>(line: &str) -> std::result::Result<Vec<T>, String> {
    line.split_whitespace()
        .map(|f| f.parse::<T>().map_err(|_| format!("cannot parse `{f}`")))
        .collect()
}

/// Faces that belong to exactly one tet, wound outward. Output order follows
/// tet order, then local face order.
pub fn extract_surface(tets: &[[usize; 4]]) -> Vec<[usize; 3]> {
    let mut counts: HashMap<[usize; 3], u32> = HashMap::with_capacity(tets.len() * 4);
    for tet in tets {
        for lf in TET_FACES {
            let mut key = lf.map(|i| tet[i]);
            key.sort_unstable();
            *counts.entry(key).or_default() += 1;
        }
    }
    let mut faces = Vec::new();
    for tet in tets {
        for lf in TET_FACES {
            let face = lf.map(|i| tet[i]);
            let mut key = face;
            key.sort_unstable();
            if counts[&key] == 1 {
                faces.push(face);
            }
        }
    }
    faces
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed for a min-heap; ties broken by the smaller node id
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest in-plane surface path between the first and last constraint
/// nodes, weighted by edge length.
pub fn midsagittal_path(mesh: &TetMesh, plane_tolerance: f64) -> Result<MidsagittalPath> {
    let cons = mesh.constraint_nodes();
    if cons.len() < 2 {
        return Err(Error::InvalidMesh("mesh has no constraint nodes".into()));
    }
    if !(plane_tolerance >= 0.0) {
        return Err(Error::InvalidParam(format!(
            "plane tolerance must be >= 0, got {plane_tolerance}"
        )));
    }
    let (start, end) = (cons[0], cons[cons.len() - 1]);
    let in_plane = |i: usize| mesh.nodes[i].z.abs() <= plane_tolerance;
    for (label, node) in [("start", start), ("end", end)] {
        if !in_plane(node) {
            return Err(Error::NoPath(format!(
                "{label} node {node} is off the midsagittal plane (|z| = {:e} > tolerance {:e})",
                mesh.nodes[node].z.abs(),
                plane_tolerance
            )));
        }
    }
    if start == end {
        return Ok(MidsagittalPath {
            node_ids: vec![start],
            plane_tolerance,
        });
    }

    let mut adj: HashMap<usize, BTreeSet<usize>> = HashMap::new();
    for f in &mesh.surface_faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            if in_plane(a) && in_plane(b) {
                adj.entry(a).or_default().insert(b);
                adj.entry(b).or_default().insert(a);
            }
        }
    }

    let mut dist: HashMap<usize, f64> = HashMap::new();
    let mut prev: HashMap<usize, usize> = HashMap::new();
    let mut heap = BinaryHeap::new();
    dist.insert(start, 0.0);
    heap.push(HeapEntry { dist: 0.0, node: start });
    while let Some(HeapEntry { dist: d, node }) = heap.pop() {
        if d > dist[&node] {
            continue;
        }
        if node == end {
            break;
        }
        let Some(nbrs) = adj.get(&node) else { continue };
        for &nb in nbrs {
            let nd = d + (mesh.nodes[nb] - mesh.nodes[node]).norm();
            if dist.get(&nb).is_none_or(|&old| nd < old) {
                dist.insert(nb, nd);
                prev.insert(nb, node);
                heap.push(HeapEntry { dist: nd, node: nb });
            }
        }
    }

    if !dist.contains_key(&end) {
        let target = mesh.nodes[end];
        let (closest, gap) = dist
            .keys()
            .map(|&i| (i, (mesh.nodes[i] - target).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .unwrap_or((start, (mesh.nodes[start] - target).norm()));
        return Err(Error::NoPath(format!(
            "end node {end} unreachable from start node {start} over in-plane surface edges; \
             the reachable component ({} nodes) gets closest at node {closest}, {gap:e} away",
            dist.len()
        )));
    }

    let mut node_ids = vec![end];
    let mut cur = end;
    while cur != start {
        cur = prev[&cur];
        node_ids.push(cur);
    }
    node_ids.reverse();
    Ok(MidsagittalPath {
        node_ids,
        plane_tolerance,
    })
}

/// Wavefront OBJ text of the displaced surface. Vertices are the surface
/// nodes in ascending node order; faces are 1-based.
pub fn surface_obj_string(mesh: &TetMesh, displacements: &[Vec3]) -> Result<String> {
    if displacements.len() != mesh.node_count() {
        return Err(Error::Dimension {
            expected: mesh.node_count(),
            got: displacements.len(),
        });
    }
    let used: BTreeSet<usize> = mesh.surface_faces.iter().flatten().copied().collect();
    let mut remap = vec![usize::MAX; mesh.node_count()];
    let mut s = String::new();
    for (k, &i) in used.iter().enumerate() {
        remap[i] = k + 1;
        let p = mesh.nodes[i] + displacements[i];
        let _ = writeln!(s, "v {} {} {}", p.x, p.y, p.z);
    }
    for f in &mesh.surface_faces {
        let _ = writeln!(s, "f {} {} {}", remap[f[0]], remap[f[1]], remap[f[2]]);
    }
    Ok(s)
}

pub fn export_surface_frame(mesh: &TetMesh, displacements: &[Vec3], path: &Path) -> Result<()> {
    let s = surface_obj_string(mesh, displacements)?;
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn unit_tet() -> TetMesh {
        TetMesh::new(
            vec![
                Vec3::zeros(),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(0.0, 0.0, 1.0),
            ],
            vec![[0, 1, 2, 3]],
        )
        .unwrap()
    }

    fn two_tets() -> TetMesh {
        TetMesh::new(
            vec![
                Vec3::zeros(),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(0.0, 0.0, 1.0),
                Vec3::new(1.0, 1.0, 1.0),
            ],
            vec![[0, 1, 2, 3], [1, 2, 3, 4]],
        )
        .unwrap()
    }

    #[test]
    fn single_tet_has_four_outward_faces() {
        let m = unit_tet();
        assert_eq!(m.surface_faces().len(), 4);
        let centroid = m.nodes().iter().sum::<Vec3>() / 4.0;
        for f in m.surface_faces() {
            let [a, b, c] = f.map(|i| m.nodes()[i]);
            let n = (b - a).cross(&(c - a));
            assert!(n.dot(&(a - centroid)) > 0.0, "face {f:?} points inward");
        }
    }

    #[test]
    fn negative_tet_is_reoriented() {
        let m = TetMesh::new(unit_tet().nodes().to_vec(), vec![[0, 2, 1, 3]]).unwrap();
        assert!(m.tet_volume(0) > 0.0);
        assert_eq!(m.tets()[0], [0, 2, 3, 1]);
    }

    #[test]
    fn shared_face_is_not_on_surface() {
        let m = two_tets();
        // brute force: a face is on the surface iff exactly one tet contains all three nodes
        let mut expected = 0;
        for t in m.tets() {
            for skip in 0..4 {
                let face: Vec<usize> = (0..4).filter(|&k| k != skip).map(|k| t[k]).collect();
                let owners = m.tets().iter().filter(|o| face.iter().all(|v| o.contains(v))).count();
                if owners == 1 {
                    expected += 1;
                }
            }
        }
        assert_eq!(expected, 6);
        assert_eq!(m.surface_faces().len(), 6);
        let shared = [1, 2, 3];
        for f in m.surface_faces() {
            let mut k = *f;
            k.sort_unstable();
            assert_ne!(k, shared);
        }
    }

    #[test]
    fn out_of_range_index_names_line() {
        let text = "tetmesh v1\n4 1\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n0 1 2 4\n";
        match parse_tetmesh(text, "bad.tetmesh") {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 7);
                assert!(msg.contains("out of range"), "{msg}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn count_mismatch_is_parse_error() {
        let text = "tetmesh v1\n4 1\n0 0 0\n1 0 0\n0 1 0\n";
        assert!(matches!(parse_tetmesh(text, "x"), Err(Error::Parse { .. })));
        let text = "tetmesh v2\n";
        assert!(matches!(parse_tetmesh(text, "x"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn degenerate_and_duplicate_tets_rejected() {
        let mut nodes = unit_tet().nodes().to_vec();
        nodes.push(Vec3::new(1.0, 1.0, 0.0));
        let err = TetMesh::new(nodes.clone(), vec![[0, 1, 2, 3], [0, 1, 2, 4]]).unwrap_err();
        assert!(matches!(err, Error::DegenerateTet { index: 1, .. }), "{err}");
        let err = TetMesh::new(nodes, vec![[0, 1, 2, 3], [3, 2, 1, 0]]).unwrap_err();
        assert!(matches!(err, Error::InvalidMesh(_)), "{err}");
    }

    #[test]
    fn node_sets_validated() {
        let m = unit_tet();
        assert!(m.clone().with_node_sets(&[0], &[0, 1]).is_err());
        assert!(m.clone().with_node_sets(&[0], &[1]).is_err());
        assert!(m.clone().with_node_sets(&[0], &[1, 7]).is_err());
        let m = m.with_node_sets(&[0], &[1, 2]).unwrap();
        assert_eq!(m.constraint_nodes(), &[1, 2]);
    }

    #[test]
    fn round_trip_is_value_identical() {
        let m = TetMesh::new(
            vec![
                Vec3::new(0.1, 0.2, 0.3),
                Vec3::new(1.0 / 3.0, 0.0, 0.0),
                Vec3::new(0.0, 2.0_f64.sqrt(), 0.0),
                Vec3::new(0.0, 0.0, 1e-3),
            ],
            vec![[0, 2, 1, 3]],
        )
        .unwrap();
        let again = parse_tetmesh(&m.to_tetmesh_string(), "rt").unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn zero_tolerance_without_plane_nodes_fails() {
        let nodes = unit_tet()
            .nodes()
            .iter()
            .map(|p| p + Vec3::new(0.0, 0.0, 0.5))
            .collect();
        let m = TetMesh::new(nodes, vec![[0, 1, 2, 3]])
            .unwrap()
            .with_node_sets(&[3], &[0, 1])
            .unwrap();
        assert!(matches!(midsagittal_path(&m, 0.0), Err(Error::NoPath(_))));
    }

    #[test]
    fn same_start_and_end_gives_single_node() {
        let m = unit_tet().with_node_sets(&[3], &[0, 1]).unwrap();
        let p = midsagittal_path(&m, 1e-9).unwrap();
        assert_eq!(p.node_ids, vec![0, 1]);
        let mut single = m.clone();
        single.constraint_nodes = vec![0, 0];
        assert_eq!(midsagittal_path(&single, 1e-9).unwrap().node_ids, vec![0]);
    }

    #[test]
    fn obj_export_translation() {
        let m = unit_tet();
        let zero = vec![Vec3::zeros(); 4];
        let rest = surface_obj_string(&m, &zero).unwrap();
        let shifted = surface_obj_string(&m, &[Vec3::new(1.0, 0.0, 0.0); 4]).unwrap();
        let verts = |s: &str| -> Vec<[f64; 3]> {
            s.lines()
                .filter(|l| l.starts_with("v "))
                .map(|l| {
                    let v: Vec<f64> = l[2..].split(' ').map(|x| x.parse().unwrap()).collect();
                    [v[0], v[1], v[2]]
                })
                .collect()
        };
        let (a, b) = (verts(&rest), verts(&shifted));
        assert_eq!(a.len(), 4);
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(q[0], p[0] + 1.0);
            assert_eq!((q[1], q[2]), (p[1], p[2]));
        }
        assert_eq!(rest.lines().filter(|l| l.starts_with("f ")).count(), 4);
        assert!(surface_obj_string(&m, &zero[..3]).is_err());
    }
}
