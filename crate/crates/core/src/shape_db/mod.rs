//! Offline database of constraint-driven poses and their projected
//! midsagittal contours.
//!
//! Each sample draws independent uniform in-plane displacements for the
//! constraint nodes, solves the regularized constrained pose in modal
//! coordinates, reconstructs node displacements, and projects the
//! midsagittal path onto the `z = 0` plane. Implausible shapes are discarded
//! by three automatic rules (inverted tets, a self-intersecting contour, or a
//! contour that runs backwards along the path).

mod format;

use nalgebra::DVector;
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::contour::{Contour2D, Vec2};
use crate::error::{Error, Result};
use crate::mesh::{tet_volume, MidsagittalPath, TetMesh, Vec3};
use crate::modal::{reconstruct_q, ModalBasis, PoseSolver, DEFAULT_POSE_EPS};

pub use format::DB_HEADER;

pub const DEFAULT_SAMPLES: usize = 1000;
pub const DEFAULT_SEED: u64 = 1;
/// Default displacement threshold as a fraction of the rest contour length.
pub const DEFAULT_MAX_DISP_FRACTION: f64 = 0.15;
pub const DEFAULT_BACKTRACK_TOL: f64 = 0.0;

/// Draws evaluated in parallel before being committed in order.
const CHUNK: usize = 256;
/// Draw budget, in multiples of the requested sample count, after which a
/// low acceptance rate aborts generation.
const BUDGET_FACTOR: usize = 10;
const MIN_ACCEPTANCE_RATE: f64 = 0.01;

/// `m` in-plane displacement pairs, each component uniform in
/// `[-max_disp, max_disp]`. Draw `k` of seed `s` always uses ChaCha8 stream
/// `k`, so draws are independent of evaluation order.
pub fn sample_displacements(seed: u64, draw: u64, m: usize, max_disp: f64) -> Vec<[f64; 2]> {
    if !(max_disp > 0.0) {
        return vec![[0.0, 0.0]; m];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw);
    let dist = Uniform::new_inclusive(-max_disp, max_disp).expect("finite positive range");
    (0..m).map(|_| [dist.sample(&mut rng), dist.sample(&mut rng)]).collect()
}

/// `(x, y)` of the path nodes after displacement; `z` is dropped.
pub fn project_contour(mesh: &TetMesh, path: &MidsagittalPath, displacements: &[Vec3]) -> Result<Contour2D> {
    if displacements.len() != mesh.node_count() {
        return Err(Error::Dimension {
            expected: mesh.node_count(),
            got: displacements.len(),
        });
    }
    Contour2D::new(
        path.node_ids
            .iter()
            .map(|&i| {
                let p = mesh.nodes()[i] + displacements[i];
                Vec2::new(p.x, p.y)
            })
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RejectReason {
    InvertedElement {
        tet: usize,
        volume: f64,
    },
    SelfIntersection {
        first: usize,
        second: usize,
    },
    Backtrack {
        segment: usize,
        progress: f64,
    },
    /// The projected path collapsed (coincident consecutive points).
    DegenerateContour,
}

impl RejectReason {
    pub fn label(&self) -> &'static str {
        match self {
            RejectReason::InvertedElement { .. } => "inverted",
            RejectReason::SelfIntersection { .. } => "self_intersection",
            RejectReason::Backtrack { .. } => "backtrack",
            RejectReason::DegenerateContour => "degenerate",
        }
    }
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RejectReason::InvertedElement { tet, volume } => write!(f, "inverted element {tet} (volume {volume:e})"),
            RejectReason::SelfIntersection { first, second } => {
                write!(f, "contour segments {first} and {second} intersect")
            }
            RejectReason::Backtrack { segment, progress } => {
                write!(f, "contour segment {segment} runs backwards (progress {progress:e})")
            }
            RejectReason::DegenerateContour => write!(f, "projected contour has coincident points"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    Accept,
    Reject(RejectReason),
}

/// Segments `p0-p1` and `q0-q1` intersect or touch.
pub fn segments_intersect(p0: &Vec2, p1: &Vec2, q0: &Vec2, q1: &Vec2) -> bool {
    let orient = |a: &Vec2, b: &Vec2, c: &Vec2| {
        let v = (b - a).perp(&(c - a));
        if v > 0.0 {
            1
        } else if v < 0.0 {
            -1
        } else {
            0
        }
    };
    let on_segment = |a: &Vec2, b: &Vec2, c: &Vec2| {
        c.x >= a.x.min(b.x) && c.x <= a.x.max(b.x) && c.y >= a.y.min(b.y) && c.y <= a.y.max(b.y)
    };
    let (d1, d2) = (orient(q0, q1, p0), orient(q0, q1, p1));
    let (d3, d4) = (orient(p0, p1, q0), orient(p0, p1, q1));
    if d1 * d2 < 0 && d3 * d4 < 0 {
        return true;
    }
    (d1 == 0 && on_segment(q0, q1, p0))
        || (d2 == 0 && on_segment(q0, q1, p1))
        || (d3 == 0 && on_segment(p0, p1, q0))
        || (d4 == 0 && on_segment(p0, p1, q1))
}

/// First pair of non-adjacent intersecting segments, if any.
pub fn first_self_intersection(c: &Contour2D) -> Option<(usize, usize)> {
    let p = c.points();
    let segs = p.len() - 1;
    for i in 0..segs {
        for j in i + 2..segs {
            if segments_intersect(&p[i], &p[i + 1], &p[j], &p[j + 1]) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Automatic replacement for manual discarding of unphysical shapes.
#[derive(Debug, Clone)]
pub struct PlausibilityFilter {
    rest_directions: Vec<Vec2>,
    rest_lengths: Vec<f64>,
    backtrack_tol: f64,
}

impl PlausibilityFilter {
    pub fn new(rest_contour: &Contour2D, backtrack_tol: f64) -> Self {
        let (rest_directions, rest_lengths) = rest_contour
            .points()
            .windows(2)
            .map(|w| {
                let d = w[1] - w[0];
                (d / d.norm(), d.norm())
            })
            .unzip();
        PlausibilityFilter {
            rest_directions,
            rest_lengths,
            backtrack_tol,
        }
    }

    pub fn check(&self, mesh: &TetMesh, displacements: &[Vec3], contour: &Contour2D) -> Verdict {
        for (t, tet) in mesh.tets().iter().enumerate() {
            let [a, b, c, d] = tet.map(|i| mesh.nodes()[i] + displacements[i]);
            let volume = tet_volume(&a, &b, &c, &d);
            if !(volume > 0.0) {
                return Verdict::Reject(RejectReason::InvertedElement { tet: t, volume });
            }
        }
        if let Some((first, second)) = first_self_intersection(contour) {
            return Verdict::Reject(RejectReason::SelfIntersection { first, second });
        }
        for (k, w) in contour.points().windows(2).enumerate() {
            let progress = (w[1] - w[0]).dot(&self.rest_directions[k]);
            if progress < -self.backtrack_tol * self.rest_lengths[k] {
                return Verdict::Reject(RejectReason::Backtrack { segment: k, progress });
            }
        }
        Verdict::Accept
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenConfig {
    pub samples: usize,
    pub max_disp: f64,
    pub seed: u64,
    pub backtrack_tol: f64,
    pub pose_eps: f64,
    /// Reconstruct shapes with modal warping rather than linearly.
    pub warp: bool,
}

impl GenConfig {
    /// Defaults with `max_disp` at a fixed fraction of the rest contour length.
    pub fn for_rest_contour(rest: &Contour2D) -> Self {
        GenConfig {
            samples: DEFAULT_SAMPLES,
            max_disp: DEFAULT_MAX_DISP_FRACTION * rest.arc_length(),
            seed: DEFAULT_SEED,
            backtrack_tol: DEFAULT_BACKTRACK_TOL,
            pose_eps: DEFAULT_POSE_EPS,
            warp: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidParam("sample count must be >= 1".into()));
        }
        if !(self.max_disp >= 0.0 && self.max_disp.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "max_disp must be finite and >= 0, got {}",
                self.max_disp
            )));
        }
        if !(self.backtrack_tol >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "backtrack tolerance must be >= 0, got {}",
                self.backtrack_tol
            )));
        }
        if !(self.pose_eps >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "pose eps must be >= 0, got {}",
                self.pose_eps
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeRecord {
    pub id: usize,
    /// Index of the random draw that produced this record.
    pub draw: u64,
    /// Prescribed in-plane displacement per constraint node.
    pub constraint_disp: Vec<[f64; 2]>,
    pub q: DVector<f64>,
    /// Projected constraint node positions after deformation.
    pub constraint_points: Vec<Vec2>,
    /// Projected midsagittal path, in path order.
    pub contour: Contour2D,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RejectionCounts {
    pub inverted: usize,
    pub self_intersection: usize,
    pub backtrack: usize,
    pub degenerate: usize,
}

impl RejectionCounts {
    fn add(&mut self, r: &RejectReason) {
        match r {
            RejectReason::InvertedElement { .. } => self.inverted += 1,
            RejectReason::SelfIntersection { .. } => self.self_intersection += 1,
            RejectReason::Backtrack { .. } => self.backtrack += 1,
            RejectReason::DegenerateContour => self.degenerate += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.inverted + self.self_intersection + self.backtrack + self.degenerate
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeDatabase {
    pub config: GenConfig,
    pub basis_fingerprint: String,
    pub modes: usize,
    pub constraint_nodes: Vec<usize>,
    pub path_nodes: Vec<usize>,
    /// Draws consumed to reach the accepted records.
    pub drawn: u64,
    pub rejections: RejectionCounts,
    pub records: Vec<ShapeRecord>,
}

/// Everything needed to turn a draw into a record; shared by generation and
/// reload validation.
struct ShapeBuilder<'a> {
    mesh: &'a TetMesh,
    basis: &'a ModalBasis,
    path: &'a MidsagittalPath,
    solver: PoseSolver,
    filter: PlausibilityFilter,
    warp: bool,
}

impl<'a> ShapeBuilder<'a> {
    fn new(mesh: &'a TetMesh, basis: &'a ModalBasis, path: &'a MidsagittalPath, cfg: &GenConfig) -> Result<Self> {
        let zero = vec![Vec3::zeros(); mesh.node_count()];
        let rest = project_contour(mesh, path, &zero)?;
        if cfg.warp && basis.curl_basis.is_none() {
            return Err(Error::MissingCurlBasis);
        }
        Ok(ShapeBuilder {
            mesh,
            basis,
            path,
            solver: PoseSolver::new(basis, mesh.constraint_nodes(), cfg.pose_eps)?,
            filter: PlausibilityFilter::new(&rest, cfg.backtrack_tol),
            warp: cfg.warp,
        })
    }

    fn shape_from_q(&self, q: &DVector<f64>) -> Result<(Vec<Vec3>, std::result::Result<Contour2D, RejectReason>)> {
        let u = reconstruct_q(self.basis, q, self.warp)?;
        let contour = project_contour(self.mesh, self.path, &u).map_err(|_| RejectReason::DegenerateContour);
        Ok((u, contour))
    }

    fn constraint_points(&self, u: &[Vec3]) -> Vec<Vec2> {
        self.mesh
            .constraint_nodes()
            .iter()
            .map(|&i| {
                let p = self.mesh.nodes()[i] + u[i];
                Vec2::new(p.x, p.y)
            })
            .collect()
    }

    fn build(&self, draw: u64, disp: Vec<[f64; 2]>) -> Result<std::result::Result<ShapeRecord, RejectReason>> {
        let q = self.solver.solve(&disp)?;
        let (u, contour) = self.shape_from_q(&q)?;
        let contour = match contour {
            Ok(c) => c,
            Err(r) => return Ok(Err(r)),
        };
        if let Verdict::Reject(r) = self.filter.check(self.mesh, &u, &contour) {
            return Ok(Err(r));
        }
        Ok(Ok(ShapeRecord {
            id: 0,
            draw,
            constraint_disp: disp,
            q,
            constraint_points: self.constraint_points(&u),
            contour,
        }))
    }
}

/// Draws samples until `cfg.samples` plausible shapes are accepted.
pub fn generate_database(
    mesh: &TetMesh,
    basis: &ModalBasis,
    path: &MidsagittalPath,
    cfg: &GenConfig,
) -> Result<ShapeDatabase> {
    cfg.validate()?;
    let builder = ShapeBuilder::new(mesh, basis, path, cfg)?;
    let m = mesh.constraint_nodes().len();
    let target = cfg.samples;
    let budget = (BUDGET_FACTOR * target) as u64;
    let hard_cap = budget * 10;

    let mut records: Vec<ShapeRecord> = Vec::with_capacity(target);
    let mut rejections = RejectionCounts::default();
    let mut drawn: u64 = 0;

    'outer: while records.len() < target {
        if drawn >= budget {
            let rate = records.len() as f64 / drawn as f64;
            if rate < MIN_ACCEPTANCE_RATE || drawn >= hard_cap {
                return Err(Error::LowAcceptance {
                    accepted: records.len(),
                    drawn: drawn as usize,
                    rate: 100.0 * rate,
                });
            }
        }
        let batch: Vec<_> = (drawn..drawn + CHUNK as u64)
            .into_par_iter()
            .map(|draw| builder.build(draw, sample_displacements(cfg.seed, draw, m, cfg.max_disp)))
            .collect();
        for outcome in batch {
            drawn += 1;
            match outcome? {
                Ok(mut rec) => {
                    rec.id = records.len();
                    records.push(rec);
                    if records.len() == target {
                        break 'outer;
                    }
                }
                Err(reason) => {
                    log::debug!("draw {}: rejected, {reason}", drawn - 1);
                    rejections.add(&reason);
                }
            }
        }
    }
    log::info!(
        "accepted {} of {drawn} draws (rejected: {} inverted, {} self-intersecting, {} backtracking, {} degenerate)",
        records.len(),
        rejections.inverted,
        rejections.self_intersection,
        rejections.backtrack,
        rejections.degenerate
    );

    Ok(ShapeDatabase {
        config: *cfg,
        basis_fingerprint: basis.fingerprint(),
        modes: basis.modes(),
        constraint_nodes: mesh.constraint_nodes().to_vec(),
        path_nodes: path.node_ids.clone(),
        drawn,
        rejections,
        records,
    })
}

impl ShapeDatabase {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn verify_basis(&self, basis: &ModalBasis) -> Result<()> {
        let got = basis.fingerprint();
        if got != self.basis_fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: self.basis_fingerprint.clone(),
                got,
            });
        }
        Ok(())
    }

    /// Structural invariants that need no mesh or basis.
    pub fn check_records(&self) -> Result<()> {
        let m = self.constraint_nodes.len();
        for (k, r) in self.records.iter().enumerate() {
            let bad = |msg: String| Err(Error::MalformedDatabase(format!("record {k}: {msg}")));
            if r.id != k {
                return bad(format!("id {} out of sequence", r.id));
            }
            if r.constraint_disp.len() != m || r.constraint_points.len() != m {
                return bad(format!("expected {m} constraint entries"));
            }
            if let Some(d) = r
                .constraint_disp
                .iter()
                .flatten()
                .find(|d| !(d.abs() <= self.config.max_disp))
            {
                return bad(format!("displacement {d} exceeds max_disp {}", self.config.max_disp));
            }
            if r.q.len() != self.modes || r.q.iter().any(|v| !v.is_finite()) {
                return bad(format!("q must hold {} finite values", self.modes));
            }
            if r.contour.len() != self.path_nodes.len() {
                return bad(format!(
                    "contour has {} points, path has {}",
                    r.contour.len(),
                    self.path_nodes.len()
                ));
            }
        }
        Ok(())
    }

    /// Re-derives every record from its stored displacements against the
    /// supplied mesh and basis: the pose solve must reproduce `q`, the shape
    /// must pass the plausibility filter, and the stored contour and
    /// constraint points must match the recomputed ones exactly.
    pub fn revalidate(&self, mesh: &TetMesh, basis: &ModalBasis, path: &MidsagittalPath) -> Result<()> {
        self.verify_basis(basis)?;
        self.check_records()?;
        if path.node_ids != self.path_nodes || mesh.constraint_nodes() != self.constraint_nodes {
            return Err(Error::MalformedDatabase(
                "database node sets do not match the supplied mesh".into(),
            ));
        }
        let builder = ShapeBuilder::new(mesh, basis, path, &self.config)?;
        self.records.par_iter().try_for_each(|r| {
            let rebuilt = builder.build(r.draw, r.constraint_disp.clone())?;
            match rebuilt {
                Err(reason) => Err(Error::MalformedDatabase(format!(
                    "record {} fails the filter: {reason}",
                    r.id
                ))),
                Ok(again)
                    if again.q != r.q
                        || again.contour != r.contour
                        || again.constraint_points != r.constraint_points =>
                {
                    Err(Error::MalformedDatabase(format!("record {} does not reproduce", r.id)))
                }
                Ok(_) => Ok(()),
            }
        })
    }

    pub fn record(&self, id: usize) -> Option<&ShapeRecord> {
        self.records.get(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble, MaterialParams};
    use crate::fixture::FixtureParams;
    use crate::mesh::midsagittal_path;
    use crate::modal::solve_modes;

    fn setup(r: usize) -> (TetMesh, ModalBasis, MidsagittalPath) {
        let mesh = FixtureParams::default().build().unwrap();
        let sys = assemble(&mesh, &MaterialParams::default(), 0.1, 0.01).unwrap();
        let basis = solve_modes(&sys, r).unwrap().with_curl_basis(&mesh).unwrap();
        let path = midsagittal_path(&mesh, mesh.default_plane_tolerance()).unwrap();
        (mesh, basis, path)
    }

    #[test]
    fn sampling_range_and_determinism() {
        assert!(sample_displacements(5, 0, 4, 0.0).iter().flatten().all(|&v| v == 0.0));
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for draw in 0..25_000 {
            for v in sample_displacements(9, draw, 2, 0.25).iter().flatten() {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
        }
        assert!(lo >= -0.25 && hi <= 0.25);
        assert!(lo < -0.249 && hi > 0.249);
        assert_eq!(sample_displacements(3, 17, 4, 1.0), sample_displacements(3, 17, 4, 1.0));
        assert_ne!(sample_displacements(3, 17, 4, 1.0), sample_displacements(3, 18, 4, 1.0));
        assert_ne!(sample_displacements(3, 17, 4, 1.0), sample_displacements(4, 17, 4, 1.0));
    }

    #[test]
    fn projection_of_rest_and_translation() {
        let mesh = FixtureParams::default().build().unwrap();
        let path = midsagittal_path(&mesh, mesh.default_plane_tolerance()).unwrap();
        let rest = project_contour(&mesh, &path, &vec![Vec3::zeros(); mesh.node_count()]).unwrap();
        for (p, &i) in rest.points().iter().zip(&path.node_ids) {
            assert_eq!((p.x, p.y), (mesh.nodes()[i].x, mesh.nodes()[i].y));
        }
        let moved = project_contour(&mesh, &path, &vec![Vec3::new(1.0, 0.0, 0.0); mesh.node_count()]).unwrap();
        for (a, b) in rest.points().iter().zip(moved.points()) {
            assert_eq!(b.x, a.x + 1.0);
            assert_eq!(b.y, a.y);
        }
    }

    #[test]
    fn filter_accepts_rest_and_rejects_inversion() {
        let mesh = FixtureParams::default().build().unwrap();
        let path = midsagittal_path(&mesh, mesh.default_plane_tolerance()).unwrap();
        let zero = vec![Vec3::zeros(); mesh.node_count()];
        let rest = project_contour(&mesh, &path, &zero).unwrap();
        let filter = PlausibilityFilter::new(&rest, 0.0);
        assert_eq!(filter.check(&mesh, &zero, &rest), Verdict::Accept);

        // push node a of tet 0 through the plane of its opposite face
        let [a, b, c, d] = mesh.tets()[0];
        let x = mesh.nodes();
        let centroid = (x[b] + x[c] + x[d]) / 3.0;
        let mut u = zero.clone();
        u[a] = (centroid - x[a]) * 2.0;
        let [pa, pb, pc, pd] = [a, b, c, d].map(|i| x[i] + u[i]);
        assert!(tet_volume(&pa, &pb, &pc, &pd) < 0.0);
        match filter.check(&mesh, &u, &rest) {
            Verdict::Reject(RejectReason::InvertedElement { .. }) => {}
            v => panic!("expected inversion, got {v:?}"),
        }
    }

    #[test]
    fn filter_rejects_loop_and_backtrack() {
        let mesh = FixtureParams::default().build().unwrap();
        let zero = vec![Vec3::zeros(); mesh.node_count()];
        let rest = Contour2D::from_xy(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0], [4.0, 0.0]]).unwrap();
        let filter = PlausibilityFilter::new(&rest, 0.0);
        // segments 0 and 3 cross: (0,0)-(3,0) vs (2,1)-(1,-1)
        let looped = Contour2D::from_xy(&[[0.0, 0.0], [3.0, 0.0], [2.0, 1.0], [1.0, -1.0], [4.0, 0.0]]).unwrap();
        assert!(segments_intersect(
            &looped.points()[0],
            &looped.points()[1],
            &looped.points()[2],
            &looped.points()[3]
        ));
        assert_eq!(first_self_intersection(&looped), Some((0, 2)));
        assert!(matches!(
            filter.check(&mesh, &zero, &looped),
            Verdict::Reject(RejectReason::SelfIntersection { .. })
        ));
        let back = Contour2D::from_xy(&[[0.0, 0.0], [1.0, 0.0], [0.5, 1.0], [3.0, 1.0], [4.0, 0.0]]).unwrap();
        assert_eq!(first_self_intersection(&back), None);
        assert!(matches!(
            filter.check(&mesh, &zero, &back),
            Verdict::Reject(RejectReason::Backtrack { segment: 1, .. })
        ));
        let loose = PlausibilityFilter::new(&rest, 0.6);
        assert_eq!(loose.check(&mesh, &zero, &back), Verdict::Accept);
    }

    #[test]
    fn segment_intersection_against_brute_force() {
        // oracle: sample points along one segment, check distance to the other
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..2000 {
            let mut p = || Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let (a, b, c, d) = (p(), p(), p(), p());
            let fast = segments_intersect(&a, &b, &c, &d);
            // parametric solve of a + s(b-a) = c + t(d-c)
            let r = b - a;
            let s_ = d - c;
            let den = r.perp(&s_);
            let expect = if den.abs() < 1e-12 {
                continue;
            } else {
                let s = (c - a).perp(&s_) / den;
                let t = (c - a).perp(&r) / den;
                (0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&t)
            };
            assert_eq!(fast, expect, "{a:?} {b:?} {c:?} {d:?}");
        }
    }

    #[test]
    fn single_rest_record() {
        let (mesh, basis, path) = setup(12);
        let cfg = GenConfig {
            samples: 1,
            max_disp: 0.0,
            ..GenConfig::for_rest_contour(
                &project_contour(&mesh, &path, &vec![Vec3::zeros(); mesh.node_count()]).unwrap(),
            )
        };
        let db = generate_database(&mesh, &basis, &path, &cfg).unwrap();
        assert_eq!(db.len(), 1);
        let rest = project_contour(&mesh, &path, &vec![Vec3::zeros(); mesh.node_count()]).unwrap();
        assert_eq!(db.records[0].contour, rest);
        assert!(db.records[0].q.iter().all(|&v| v == 0.0));
        db.revalidate(&mesh, &basis, &path).unwrap();
    }

    #[test]
    fn generation_is_deterministic_and_records_validate() {
        let (mesh, basis, path) = setup(20);
        let rest = project_contour(&mesh, &path, &vec![Vec3::zeros(); mesh.node_count()]).unwrap();
        let cfg = GenConfig {
            samples: 40,
            ..GenConfig::for_rest_contour(&rest)
        };
        let a = generate_database(&mesh, &basis, &path, &cfg).unwrap();
        let b = generate_database(&mesh, &basis, &path, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 40);
        a.check_records().unwrap();
        a.revalidate(&mesh, &basis, &path).unwrap();
        let warped = generate_database(&mesh, &basis, &path, &GenConfig { warp: true, ..cfg }).unwrap();
        warped.revalidate(&mesh, &basis, &path).unwrap();
    }

    #[test]
    fn hopeless_threshold_fails_with_low_acceptance() {
        let (mesh, basis, path) = setup(12);
        let rest = project_contour(&mesh, &path, &vec![Vec3::zeros(); mesh.node_count()]).unwrap();
        let cfg = GenConfig {
            samples: 5,
            max_disp: 50.0 * rest.arc_length(),
            ..GenConfig::for_rest_contour(&rest)
        };
        assert!(matches!(
            generate_database(&mesh, &basis, &path, &cfg),
            Err(Error::LowAcceptance { .. })
        ));
    }

    #[test]
    fn fingerprint_mismatch_detected() {
        let (mesh, basis, path) = setup(12);
        let rest = project_contour(&mesh, &path, &vec![Vec3::zeros(); mesh.node_count()]).unwrap();
        let cfg = GenConfig {
            samples: 2,
            max_disp: 0.02 * rest.arc_length(),
            ..GenConfig::for_rest_contour(&rest)
        };
        let db = generate_database(&mesh, &basis, &path, &cfg).unwrap();
        let mut other = basis.clone();
        other.xi += 1.0;
        assert!(matches!(
            db.verify_basis(&other),
            Err(Error::FingerprintMismatch { .. })
        ));
    }
}
