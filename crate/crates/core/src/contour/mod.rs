//! Planar contours and the similarity objective used for retrieval.
//!
//! Two equal-length point sequences are compared by the mean sum of
//! nearest-point distances (MSD). Candidate poses are additionally penalised
//! by the sum of reciprocal gaps between consecutive constraint points, and
//! the final score is `l = alpha / MSD + beta / P` (higher is better).

mod snake;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::Vector2;

pub use snake::{snake_extract, GrayImage, SnakeParams, SnakeResult};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;

pub const DEFAULT_RESAMPLE_N: usize = 12;
pub const DEFAULT_ALPHA: f64 = 0.8;
pub const DEFAULT_BETA: f64 = 0.2;
pub const DEFAULT_MSD_GUARD: f64 = 1e-9;
pub const DEFAULT_PENALTY_GUARD: f64 = 1e-9;

/// Ordered planar polyline with at least two points, all finite, and no
/// consecutive duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour2D {
    points: Vec<Vec2>,
}

impl Contour2D {
    pub fn new(points: Vec<Vec2>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Contour(format!("need at least 2 points, got {}", points.len())));
        }
        if let Some(i) = points.iter().position(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(Error::Contour(format!("point {i} is not finite")));
        }
        if let Some(i) = points.windows(2).position(|w| w[0] == w[1]) {
            return Err(Error::Contour(format!("points {i} and {} coincide", i + 1)));
        }
        Ok(Contour2D { points })
    }

    pub fn from_xy(xy: &[[f64; 2]]) -> Result<Self> {
        Self::new(xy.iter().map(|p| Vec2::new(p[0], p[1])).collect())
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Cumulative arc length at each vertex, starting at 0.
    pub fn cumulative_lengths(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.points.len());
        let mut acc = 0.0;
        s.push(0.0);
        for w in self.points.windows(2) {
            acc += (w[1] - w[0]).norm();
            s.push(acc);
        }
        s
    }

    pub fn map(&self, f: impl Fn(&Vec2) -> Vec2) -> Result<Self> {
        Self::new(self.points.iter().map(f).collect())
    }
}

/// `n` points spaced `L / (n - 1)` apart along the polyline, endpoints
/// included exactly.
pub fn resample_equidistant(c: &Contour2D, n: usize) -> Result<Contour2D> {
    if n < 2 {
        return Err(Error::Contour(format!("resample count must be >= 2, got {n}")));
    }
    let cum = c.cumulative_lengths();
    let total = *cum.last().unwrap();
    if !(total > 0.0) {
        return Err(Error::Contour("contour has zero length".into()));
    }
    let pts = c.points();
    let mut out = Vec::with_capacity(n);
    out.push(pts[0]);
    let mut seg = 0;
    for j in 1..n - 1 {
        let t = total * j as f64 / (n - 1) as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < t {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let frac = ((t - cum[seg]) / len).clamp(0.0, 1.0);
        out.push(pts[seg] + (pts[seg + 1] - pts[seg]) * frac);
    }
    out.push(pts[pts.len() - 1]);
    Contour2D::new(out)
}

fn nearest_sum(from: &[Vec2], to: &[Vec2]) -> f64 {
    from.iter()
        .map(|p| to.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
        .sum()
}

/// Mean sum of nearest-point distances between two contours of equal length.
pub fn msd(v1: &Contour2D, v2: &Contour2D) -> Result<f64> {
    if v1.len() != v2.len() {
        return Err(Error::Dimension {
            expected: v1.len(),
            got: v2.len(),
        });
    }
    let n = v1.len() as f64;
    Ok((nearest_sum(v1.points(), v2.points()) + nearest_sum(v2.points(), v1.points())) / (2.0 * n))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalty {
    pub value: f64,
    /// Number of gaps that fell below the guard and were clamped.
    pub clamped_gaps: usize,
}

/// Sum of reciprocal distances between consecutive constraint points.
/// Gaps below `guard` are clamped to `guard`.
pub fn penalty(constraint_points: &[Vec2], guard: f64) -> Result<Penalty> {
    if constraint_points.len() < 2 {
        return Err(Error::Contour(format!(
            "penalty needs at least 2 constraint points, got {}",
            constraint_points.len()
        )));
    }
    let mut value = 0.0;
    let mut clamped_gaps = 0;
    for w in constraint_points.windows(2) {
        let d = (w[1] - w[0]).norm();
        if d < guard {
            clamped_gaps += 1;
        }
        value += 1.0 / d.max(guard);
    }
    Ok(Penalty { value, clamped_gaps })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoringConfig {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub msd_guard: f64,
    pub penalty_guard: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            n: DEFAULT_RESAMPLE_N,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            msd_guard: DEFAULT_MSD_GUARD,
            penalty_guard: DEFAULT_PENALTY_GUARD,
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParam(format!("resample n must be >= 2, got {}", self.n)));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "alpha and beta must be >= 0, got {} and {}",
                self.alpha, self.beta
            )));
        }
        if !(self.msd_guard > 0.0 && self.penalty_guard > 0.0) {
            return Err(Error::InvalidParam("guards must be > 0".into()));
        }
        Ok(())
    }

    /// `alpha / max(msd, msd_guard) + beta / penalty`.
    pub fn combine(&self, msd_value: f64, penalty_value: f64) -> f64 {
        self.alpha / msd_value.max(self.msd_guard) + self.beta / penalty_value
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub l: f64,
    pub msd: f64,
    pub penalty: f64,
}

/// Objective for a target `v1` against a candidate `v2` (both already
/// resampled to `cfg.n` points) with the candidate's constraint points.
pub fn objective_score(
    v1: &Contour2D,
    v2: &Contour2D,
    constraint_points: &[Vec2],
    cfg: &ScoringConfig,
) -> Result<Score> {
    let m = msd(v1, v2)?;
    let p = penalty(constraint_points, cfg.penalty_guard)?;
    Ok(Score {
        l: cfg.combine(m, p.value),
        msd: m,
        penalty: p.value,
    })
}

/// Axis-aligned affine map from image pixels to model units:
/// `x' = scale_x * x + offset_x`, `y' = scale_y * y + offset_y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap2 {
    pub scale: [f64; 2],
    pub offset: [f64; 2],
}

impl Default for AffineMap2 {
    fn default() -> Self {
        AffineMap2 {
            scale: [1.0, 1.0],
            offset: [0.0, 0.0],
        }
    }
}

impl AffineMap2 {
    pub fn apply(&self, p: &Vec2) -> Vec2 {
        Vec2::new(
            self.scale[0] * p.x + self.offset[0],
            self.scale[1] * p.y + self.offset[1],
        )
    }

    pub fn inverse_apply(&self, p: &Vec2) -> Vec2 {
        Vec2::new(
            (p.x - self.offset[0]) / self.scale[0],
            (p.y - self.offset[1]) / self.scale[1],
        )
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::default()
    }
}

/// Parses one `x,y` pair per line. Blank lines and `#` comments are skipped.
pub fn parse_contour_csv(text: &str, name: &str) -> Result<Contour2D> {
    let mut pts = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Error::parse(name, i + 1, format!("expected `x,y`, found `{line}`"));
        let (x, y) = line.split_once(',').ok_or_else(bad)?;
        let x: f64 = x.trim().parse().map_err(|_| bad())?;
        let y: f64 = y.trim().parse().map_err(|_| bad())?;
        pts.push(Vec2::new(x, y));
    }
    Contour2D::new(pts).map_err(|e| Error::parse(name, 0, e.to_string()))
}

pub fn read_contour_csv(path: &Path) -> Result<Contour2D> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_contour_csv(&text, &path.display().to_string())
}

/// Shortest round-trip float formatting, so reading back is lossless.
pub fn contour_csv_string(c: &Contour2D) -> String {
    let mut s = String::new();
    for p in c.points() {
        let _ = writeln!(s, "{},{}", p.x, p.y);
    }
    s
}

pub fn write_contour_csv(c: &Contour2D, path: &Path) -> Result<()> {
    std::fs::write(path, contour_csv_string(c)).map_err(|e| Error::io(path, e))
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.csv")
}

/// Frame files `frame_NNNNNN.csv` in a directory, sorted by frame index.
pub fn list_frames(dir: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut frames = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(idx) = name.strip_prefix("frame_").and_then(|s| s.strip_suffix(".csv")) else {
            continue;
        };
        if idx.len() == 6 {
            if let Ok(i) = idx.parse::<usize>() {
                frames.push((i, entry.path()));
            }
        }
    }
    frames.sort();
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(xy: &[[f64; 2]]) -> Contour2D {
        Contour2D::from_xy(xy).unwrap()
    }

    #[test]
    fn contour_invariants() {
        assert!(Contour2D::from_xy(&[[0.0, 0.0]]).is_err());
        assert!(Contour2D::from_xy(&[[0.0, 0.0], [0.0, 0.0]]).is_err());
        assert!(Contour2D::from_xy(&[[0.0, 0.0], [f64::NAN, 1.0]]).is_err());
        assert!(Contour2D::from_xy(&[[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]]).is_ok());
    }

    #[test]
    fn resample_straight_segment() {
        let r = resample_equidistant(&c(&[[0.0, 0.0], [11.0, 0.0]]), 12).unwrap();
        for (k, p) in r.points().iter().enumerate() {
            assert!((p.x - k as f64).abs() < 1e-12 && p.y == 0.0, "{k}: {p:?}");
        }
    }

    #[test]
    fn resample_two_gives_endpoints_and_corner_case() {
        let l = c(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]);
        let r2 = resample_equidistant(&l, 2).unwrap();
        assert_eq!(r2.points(), &[l.points()[0], l.points()[2]]);
        let r3 = resample_equidistant(&l, 3).unwrap();
        assert_eq!(r3.points(), l.points());
    }

    #[test]
    fn resample_rejects_bad_input() {
        let l = c(&[[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]]);
        assert!(resample_equidistant(&l, 1).is_err());
        assert!(resample_equidistant(&l, 5).is_ok());
    }

    #[test]
    fn msd_hand_values() {
        assert_eq!(
            msd(&c(&[[0.0, 0.0], [1.0, 0.0]]), &c(&[[0.0, 1.0], [1.0, 1.0]])).unwrap(),
            1.0
        );
        assert_eq!(
            msd(&c(&[[0.0, 0.0], [2.0, 0.0]]), &c(&[[0.0, 0.0], [1.0, 0.0]])).unwrap(),
            0.5
        );
        let a = c(&[[0.0, 0.0], [3.0, 4.0], [5.0, 1.0]]);
        assert_eq!(msd(&a, &a).unwrap(), 0.0);
        assert!(msd(&a, &c(&[[0.0, 0.0], [1.0, 0.0]])).is_err());
    }

    #[test]
    fn penalty_values() {
        let pts = |s: f64| (0..4).map(|i| Vec2::new(s * i as f64, 0.0)).collect::<Vec<_>>();
        assert_eq!(penalty(&pts(1.0), 1e-9).unwrap().value, 3.0);
        assert_eq!(penalty(&pts(0.5), 1e-9).unwrap().value, 6.0);
        let p1 = penalty(&pts(0.7), 1e-9).unwrap().value;
        let p2 = penalty(&pts(1.4), 1e-9).unwrap().value;
        assert!((p2 - p1 / 2.0).abs() < 1e-14);
        let clamped = penalty(&[Vec2::zeros(), Vec2::zeros(), Vec2::new(1.0, 0.0)], 1e-9).unwrap();
        assert_eq!(clamped.clamped_gaps, 1);
        assert_eq!(clamped.value, 1.0 / 1e-9 + 1.0);
        assert!(penalty(&pts(1.0)[..1], 1e-9).is_err());
    }

    #[test]
    fn objective_spot_value() {
        let cfg = ScoringConfig::default();
        let l = cfg.combine(0.5, 2.0);
        // 1.7 itself is not representable; the correctly rounded result is one ulp above
        assert!((l - 1.7).abs() <= 1.7 * f64::EPSILON, "{l}");
    }

    #[test]
    fn objective_identical_curves_use_guard() {
        let cfg = ScoringConfig::default();
        let a = c(&[[0.0, 0.0], [1.0, 0.5], [2.0, 0.0]]);
        let cons = [Vec2::zeros(), Vec2::new(2.0, 0.0)];
        let s = objective_score(&a, &a, &cons, &cfg).unwrap();
        assert_eq!(s.msd, 0.0);
        assert_eq!(s.l, cfg.alpha / cfg.msd_guard + cfg.beta / 0.5);
    }

    #[test]
    fn contour_csv_round_trip_and_errors() {
        let a = c(&[[0.1, 1.0 / 3.0], [-2.5e-7, 7.0]]);
        assert_eq!(parse_contour_csv(&contour_csv_string(&a), "x").unwrap(), a);
        assert!(matches!(
            parse_contour_csv("1,2\n3;4\n", "f"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(parse_contour_csv("1,2\n", "f").is_err());
    }

    #[test]
    fn affine_map_round_trip() {
        let m = AffineMap2 {
            scale: [0.5, -0.25],
            offset: [3.0, 1.0],
        };
        let p = Vec2::new(10.0, 20.0);
        assert_eq!(m.apply(&p), Vec2::new(8.0, -4.0));
        assert_eq!(m.inverse_apply(&m.apply(&p)), p);
    }

    fn brute_msd(a: &[Vec2], b: &[Vec2]) -> f64 {
        let mut s1 = 0.0;
        for p in a {
            let mut best = f64::INFINITY;
            for q in b {
                let d = (p - q).norm();
                if d < best {
                    best = d;
                }
            }
            s1 += best;
        }
        let mut s2 = 0.0;
        for p in b {
            let mut best = f64::INFINITY;
            for q in a {
                let d = (p - q).norm();
                if d < best {
                    best = d;
                }
            }
            s2 += best;
        }
        (s1 + s2) / (2.0 * a.len() as f64)
    }

    fn arb_contour(n: usize) -> impl Strategy<Value = Contour2D> {
        prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64), n).prop_filter_map("consecutive duplicates", |v| {
            Contour2D::new(v.into_iter().map(|(x, y)| Vec2::new(x, y)).collect()).ok()
        })
    }

    /// Arc-length position of `p` on the polyline, by nearest-segment projection.
    fn arc_position(c: &Contour2D, p: &Vec2) -> f64 {
        let cum = c.cumulative_lengths();
        let mut best = (f64::INFINITY, 0.0);
        for (k, w) in c.points().windows(2).enumerate() {
            let d = w[1] - w[0];
            let t = ((p - w[0]).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
            let dist = (w[0] + d * t - p).norm();
            if dist < best.0 {
                best = (dist, cum[k] + t * d.norm());
            }
        }
        best.1
    }

    proptest! {
        #[test]
        fn msd_symmetric_and_matches_brute_force(a in arb_contour(12), b in arb_contour(12)) {
            let m = msd(&a, &b).unwrap();
            prop_assert_eq!(m, msd(&b, &a).unwrap());
            prop_assert_eq!(m, brute_msd(a.points(), b.points()));
            prop_assert!(m >= 0.0);
        }

        #[test]
        fn msd_zero_on_permuted_point_set(a in arb_contour(6)) {
            let mut pts = a.points().to_vec();
            pts.reverse();
            let b = Contour2D::new(pts).unwrap();
            prop_assert_eq!(msd(&a, &b).unwrap(), 0.0);
        }

        #[test]
        fn resample_preserves_endpoints_and_length(
            pts in prop::collection::vec((0.0..10.0f64, 0.0..10.0f64), 2..8).prop_map(|v| {
                // monotone in x keeps the polyline simple so projection is unambiguous
                let mut x = 0.0;
                v.into_iter().map(|(dx, y)| { x += dx + 0.5; Vec2::new(x, y) }).collect::<Vec<_>>()
            }),
            n in 2usize..40,
        ) {
            let c = Contour2D::new(pts).unwrap();
            let r = resample_equidistant(&c, n).unwrap();
            prop_assert_eq!(r.len(), n);
            prop_assert_eq!(r.points()[0], c.points()[0]);
            prop_assert_eq!(r.points()[n - 1], c.points()[c.len() - 1]);
            let total = c.arc_length();
            let step = total / (n - 1) as f64;
            for (j, p) in r.points().iter().enumerate() {
                let s = arc_position(&c, p);
                prop_assert!((s - j as f64 * step).abs() <= 1e-9 * total, "point {} at {} expected {}", j, s, j as f64 * step);
            }
        }

        #[test]
        fn alpha_only_ranking_follows_msd(m1 in 1e-6..10.0f64, m2 in 1e-6..10.0f64, p in 0.1..10.0f64) {
            let cfg = ScoringConfig { alpha: 1.0, beta: 0.0, ..Default::default() };
            prop_assert_eq!(cfg.combine(m1, p) > cfg.combine(m2, p), m1 < m2);
        }
    }
}
