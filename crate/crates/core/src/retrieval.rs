//! Best-match lookup of target contours in a shape database.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::contour::{msd, penalty, resample_equidistant, Contour2D, ScoringConfig};
use crate::error::{Error, Result};
use crate::shape_db::ShapeDatabase;

pub const RESULTS_HEADER: &str = "frame,record_id,score,msd,penalty,ms_elapsed";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchResult {
    pub frame_index: usize,
    pub record_id: usize,
    pub score_l: f64,
    pub msd_value: f64,
    pub penalty_value: f64,
    pub elapsed: Duration,
}

/// A database prepared for scanning: candidate contours resampled once and
/// penalties precomputed.
#[derive(Debug, Clone)]
pub struct Matcher<'a> {
    db: &'a ShapeDatabase,
    cfg: ScoringConfig,
    candidates: Vec<Contour2D>,
    penalties: Vec<f64>,
    parallel: bool,
}

impl<'a> Matcher<'a> {
    pub fn new(db: &'a ShapeDatabase, cfg: ScoringConfig) -> Result<Self> {
        cfg.validate()?;
        if db.is_empty() {
            return Err(Error::EmptyDatabase);
        }
        let candidates = db
            .records
            .iter()
            .map(|r| resample_equidistant(&r.contour, cfg.n))
            .collect::<Result<Vec<_>>>()?;
        let penalties = db
            .records
            .iter()
            .map(|r| penalty(&r.constraint_points, cfg.penalty_guard).map(|p| p.value))
            .collect::<Result<Vec<_>>>()?;
        Ok(Matcher {
            db,
            cfg,
            candidates,
            penalties,
            parallel: false,
        })
    }

    /// Scores candidates on the rayon pool. Results are identical to the
    /// sequential scan.
    pub fn parallel(mut self, on: bool) -> Self {
        self.parallel = on;
        self
    }

    pub fn config(&self) -> &ScoringConfig {
        &self.cfg
    }

    pub fn database(&self) -> &ShapeDatabase {
        self.db
    }

    pub fn candidate(&self, id: usize) -> Option<&Contour2D> {
        self.candidates.get(id)
    }

    fn score(&self, target: &Contour2D, id: usize) -> (f64, f64) {
        let m = msd(target, &self.candidates[id]).expect("lengths agree after resampling");
        (self.cfg.combine(m, self.penalties[id]), m)
    }

    /// Highest-scoring record for a target contour. Ties go to the smallest
    /// record id; NaN scores never win.
    pub fn best_match(&self, frame_index: usize, target: &Contour2D) -> Result<MatchResult> {
        let start = Instant::now();
        let target = resample_equidistant(target, self.cfg.n)?;
        let ids = 0..self.candidates.len();
        let scores: Vec<(f64, f64)> = if self.parallel {
            ids.into_par_iter().map(|id| self.score(&target, id)).collect()
        } else {
            ids.map(|id| self.score(&target, id)).collect()
        };
        let mut best = 0;
        for (id, s) in scores.iter().enumerate().skip(1) {
            if s.0 > scores[best].0 || (scores[best].0.is_nan() && !s.0.is_nan()) {
                best = id;
            }
        }
        let (score_l, msd_value) = scores[best];
        Ok(MatchResult {
            frame_index,
            record_id: self.db.records[best].id,
            score_l,
            msd_value,
            penalty_value: self.penalties[best],
            elapsed: start.elapsed(),
        })
    }
}

/// One-off lookup; prefer a [`Matcher`] when matching many targets.
pub fn best_match(db: &ShapeDatabase, target: &Contour2D, cfg: &ScoringConfig) -> Result<MatchResult> {
    Matcher::new(db, *cfg)?.best_match(0, target)
}

/// Best match for each `(frame_index, contour)` pair, in order.
pub fn track_sequence(matcher: &Matcher<'_>, frames: &[(usize, Contour2D)]) -> Result<Vec<MatchResult>> {
    frames.iter().map(|(i, c)| matcher.best_match(*i, c)).collect()
}

/// Number of consecutive frame pairs whose selected record changes.
pub fn jump_count(results: &[MatchResult]) -> usize {
    results.windows(2).filter(|w| w[0].record_id != w[1].record_id).count()
}

/// Target and selected contours side by side, both resampled to `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Overlay {
    pub frame_index: usize,
    pub record_id: usize,
    pub target: Contour2D,
    pub selected: Contour2D,
    pub msd_value: f64,
}

pub fn validate_overlay(matcher: &Matcher<'_>, result: &MatchResult, target: &Contour2D) -> Result<Overlay> {
    let target = resample_equidistant(target, matcher.cfg.n)?;
    let selected = matcher
        .candidate(result.record_id)
        .ok_or_else(|| Error::InvalidParam(format!("record {} not in database", result.record_id)))?
        .clone();
    let msd_value = msd(&target, &selected)?;
    Ok(Overlay {
        frame_index: result.frame_index,
        record_id: result.record_id,
        target,
        selected,
        msd_value,
    })
}

pub fn results_csv_string(results: &[MatchResult]) -> String {
    let mut s = String::from(RESULTS_HEADER);
    s.push('\n');
    for r in results {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.frame_index,
            r.record_id,
            r.score_l,
            r.msd_value,
            r.penalty_value,
            r.elapsed.as_secs_f64() * 1e3
        );
    }
    s
}

pub fn write_results_csv(results: &[MatchResult], path: &Path) -> Result<()> {
    std::fs::write(path, results_csv_string(results)).map_err(|e| Error::io(path, e))
}

pub fn parse_results_csv(text: &str, name: &str) -> Result<Vec<MatchResult>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == RESULTS_HEADER => {}
        _ => return Err(Error::parse(name, 1, format!("expected header `{RESULTS_HEADER}`"))),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::parse(name, i + 1, format!("malformed result row `{line}`"));
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 6 {
            return Err(bad());
        }
        let ms: f64 = f[5].parse().map_err(|_| bad())?;
        out.push(MatchResult {
            frame_index: f[0].parse().map_err(|_| bad())?,
            record_id: f[1].parse().map_err(|_| bad())?,
            score_l: f[2].parse().map_err(|_| bad())?,
            msd_value: f[3].parse().map_err(|_| bad())?,
            penalty_value: f[4].parse().map_err(|_| bad())?,
            elapsed: Duration::try_from_secs_f64(ms / 1e3).map_err(|_| bad())?,
        });
    }
    Ok(out)
}

pub fn read_results_csv(path: &Path) -> Result<Vec<MatchResult>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_results_csv(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::{objective_score, Vec2};
    use crate::shape_db::{GenConfig, RejectionCounts, ShapeRecord};
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn db_from(contours: Vec<Vec<[f64; 2]>>) -> ShapeDatabase {
        ShapeDatabase {
            config: GenConfig {
                samples: contours.len(),
                max_disp: 1.0,
                seed: 0,
                backtrack_tol: 0.0,
                pose_eps: 0.0,
                warp: false,
            },
            basis_fingerprint: String::new(),
            modes: 1,
            constraint_nodes: vec![0, 1],
            path_nodes: (0..contours.first().map_or(0, Vec::len)).collect(),
            drawn: contours.len() as u64,
            rejections: RejectionCounts::default(),
            records: contours
                .into_iter()
                .enumerate()
                .map(|(id, c)| ShapeRecord {
                    id,
                    draw: id as u64,
                    constraint_disp: vec![[0.0; 2]; 2],
                    q: DVector::zeros(1),
                    constraint_points: vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)],
                    contour: Contour2D::from_xy(&c).unwrap(),
                })
                .collect(),
        }
    }

    fn line(y: f64) -> Vec<[f64; 2]> {
        (0..5).map(|i| [i as f64, y]).collect()
    }

    #[test]
    fn empty_database_is_an_error() {
        let db = db_from(vec![]);
        assert!(matches!(
            Matcher::new(&db, ScoringConfig::default()),
            Err(Error::EmptyDatabase)
        ));
    }

    #[test]
    fn exact_member_wins_and_ties_go_low() {
        let db = db_from(vec![line(3.0), line(1.0), line(0.0), line(0.0), line(-1.0)]);
        let target = Contour2D::from_xy(&line(0.0)).unwrap();
        let m = Matcher::new(&db, ScoringConfig::default()).unwrap();
        let r = m.best_match(0, &target).unwrap();
        assert_eq!(r.record_id, 2);
        assert_eq!(r.msd_value, 0.0);
        // equidistant from ids 1 and 4 once 2 and 3 are gone
        let db = db_from(vec![line(3.0), line(1.0), line(-1.0)]);
        let r = best_match(&db, &target, &ScoringConfig::default()).unwrap();
        assert_eq!(r.record_id, 1);
    }

    #[test]
    fn parallel_scan_matches_sequential() {
        let db = db_from((0..300).map(|k| line((k as f64 * 0.37).sin())).collect());
        let target = Contour2D::from_xy(&line(0.123)).unwrap();
        let seq = Matcher::new(&db, ScoringConfig::default()).unwrap();
        let par = seq.clone().parallel(true);
        let a = seq.best_match(4, &target).unwrap();
        let b = par.best_match(4, &target).unwrap();
        assert_eq!(
            (a.record_id, a.score_l, a.msd_value),
            (b.record_id, b.score_l, b.msd_value)
        );
    }

    #[test]
    fn results_csv_round_trip() {
        let rs = vec![MatchResult {
            frame_index: 3,
            record_id: 17,
            score_l: 1.0 / 3.0,
            msd_value: 1e-5,
            penalty_value: 42.5,
            elapsed: Duration::from_micros(1250),
        }];
        let text = results_csv_string(&rs);
        assert!(text.starts_with(RESULTS_HEADER));
        let back = parse_results_csv(&text, "r").unwrap();
        assert_eq!(back[0].record_id, 17);
        assert_eq!(back[0].score_l, 1.0 / 3.0);
        assert!((back[0].elapsed.as_secs_f64() - 1.25e-3).abs() < 1e-12);
        assert!(matches!(
            parse_results_csv("x\n", "r"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn jumps_counted() {
        let mk = |id| MatchResult {
            frame_index: 0,
            record_id: id,
            score_l: 0.0,
            msd_value: 0.0,
            penalty_value: 0.0,
            elapsed: Duration::ZERO,
        };
        assert_eq!(jump_count(&[mk(1), mk(1), mk(2), mk(1)]), 2);
        assert_eq!(jump_count(&[]), 0);
    }

    proptest! {
        #[test]
        fn best_match_is_brute_force_argmax(ys in prop::collection::vec(-5.0f64..5.0, 1..20), t in -5.0f64..5.0) {
            let db = db_from(ys.iter().map(|&y| line(y)).collect());
            let cfg = ScoringConfig::default();
            let target = Contour2D::from_xy(&line(t)).unwrap();
            let r = best_match(&db, &target, &cfg).unwrap();
            let tgt = resample_equidistant(&target, cfg.n).unwrap();
            let mut best = (f64::NEG_INFINITY, 0);
            for rec in &db.records {
                let cand = resample_equidistant(&rec.contour, cfg.n).unwrap();
                let s = objective_score(&tgt, &cand, &rec.constraint_points, &cfg).unwrap().l;
                if s > best.0 {
                    best = (s, rec.id);
                }
            }
            prop_assert_eq!(r.record_id, best.1);
            prop_assert_eq!(r.score_l, best.0);
        }
    }
}
