//! Line-oriented text encoding of a [`ShapeDatabase`].
//!
//! ```text
//! modalpose-db 1
//! fingerprint <sha256 hex of the modal basis>
//! modes <r>
//! samples <N>
//! max_disp <f64>
//! seed <u64>
//! backtrack_tol <f64>
//! pose_eps <f64>
//! warp <0|1>
//! constraint_nodes <id> <id> ...
//! path_nodes <id> <id> ...
//! drawn <u64>
//! rejected <inverted> <self_intersection> <backtrack> <degenerate>
//! records <count>
//! record <id> <draw>
//! disp <dx dy per constraint node>
//! q <r values>
//! points <x y per constraint node>
//! contour <x y per path node>
//! ...
//! end
//! ```
//!
//! Floats use shortest round-trip formatting, so generation with a fixed seed
//! yields byte-identical files and a reload is lossless.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DVector;

use super::{GenConfig, RejectionCounts, ShapeDatabase, ShapeRecord};
use crate::contour::{Contour2D, Vec2};
use crate::error::{Error, Result};

pub const DB_HEADER: &str = "modalpose-db 1";

fn join<T: std::fmt::Display>(out: &mut String, key: &str, values: impl IntoIterator<Item = T>) {
    out.push_str(key);
    for v in values {
        let _ = write!(out, " {v}");
    }
    out.push('\n');
}

impl ShapeDatabase {
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(s, "{DB_HEADER}");
        let _ = writeln!(s, "fingerprint {}", self.basis_fingerprint);
        let _ = writeln!(s, "modes {}", self.modes);
        let _ = writeln!(s, "samples {}", c.samples);
        let _ = writeln!(s, "max_disp {}", c.max_disp);
        let _ = writeln!(s, "seed {}", c.seed);
        let _ = writeln!(s, "backtrack_tol {}", c.backtrack_tol);
        let _ = writeln!(s, "pose_eps {}", c.pose_eps);
        let _ = writeln!(s, "warp {}", u8::from(c.warp));
        join(&mut s, "constraint_nodes", &self.constraint_nodes);
        join(&mut s, "path_nodes", &self.path_nodes);
        let _ = writeln!(s, "drawn {}", self.drawn);
        let r = &self.rejections;
        let _ = writeln!(
            s,
            "rejected {} {} {} {}",
            r.inverted, r.self_intersection, r.backtrack, r.degenerate
        );
        let _ = writeln!(s, "records {}", self.records.len());
        for rec in &self.records {
            let _ = writeln!(s, "record {} {}", rec.id, rec.draw);
            join(&mut s, "disp", rec.constraint_disp.iter().flatten());
            join(&mut s, "q", rec.q.iter());
            join(&mut s, "points", rec.constraint_points.iter().flat_map(|p| [p.x, p.y]));
            join(&mut s, "contour", rec.contour.points().iter().flat_map(|p| [p.x, p.y]));
        }
        s.push_str("end\n");
        s
    }

    /// Parses the text form and checks record invariants. Does not verify the
    /// basis fingerprint; see [`ShapeDatabase::verify_basis`].
    pub fn from_text(text: &str, name: &str) -> Result<Self> {
        let mut lines = Lines {
            inner: text.lines().enumerate(),
            name,
            last: 0,
        };
        let header = lines.next_line()?;
        if header != DB_HEADER {
            return Err(lines.err(format!("expected `{DB_HEADER}`, found `{header}`")));
        }
        let basis_fingerprint = lines.single::<String>("fingerprint")?;
        let modes = lines.single("modes")?;
        let config = GenConfig {
            samples: lines.single("samples")?,
            max_disp: lines.single("max_disp")?,
            seed: lines.single("seed")?,
            backtrack_tol: lines.single("backtrack_tol")?,
            pose_eps: lines.single("pose_eps")?,
            warp: match lines.single::<u8>("warp")? {
                0 => false,
                1 => true,
                v => return Err(lines.err(format!("warp must be 0 or 1, found {v}"))),
            },
        };
        let constraint_nodes: Vec<usize> = lines.list("constraint_nodes")?;
        let path_nodes: Vec<usize> = lines.list("path_nodes")?;
        let drawn = lines.single("drawn")?;
        let rej: Vec<usize> = lines.list("rejected")?;
        let [inverted, self_intersection, backtrack, degenerate] = rej[..] else {
            return Err(lines.err("expected 4 rejection counts".into()));
        };
        let count: usize = lines.single("records")?;
        let mut records = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let head: Vec<u64> = lines.list("record")?;
            let [id, draw] = head[..] else {
                return Err(lines.err("expected `record <id> <draw>`".into()));
            };
            let disp = lines.pairs("disp")?;
            let q: Vec<f64> = lines.list("q")?;
            let points = lines.pairs("points")?;
            let contour = lines.pairs("contour")?;
            let contour = Contour2D::from_xy(&contour).map_err(|e| lines.err(format!("bad contour: {e}")))?;
            records.push(ShapeRecord {
                id: id as usize,
                draw,
                constraint_disp: disp,
                q: DVector::from_vec(q),
                constraint_points: points.iter().map(|p| Vec2::new(p[0], p[1])).collect(),
                contour,
            });
        }
        let tail = lines.next_line()?;
        if tail != "end" {
            return Err(lines.err(format!("expected `end`, found `{tail}`")));
        }
        let db = ShapeDatabase {
            config,
            basis_fingerprint,
            modes,
            constraint_nodes,
            path_nodes,
            drawn,
            rejections: RejectionCounts {
                inverted,
                self_intersection,
                backtrack,
                degenerate,
            },
            records,
        };
        db.check_records()?;
        Ok(db)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, &path.display().to_string())
    }

    /// Loads and checks the fingerprint against the basis used for queries.
    pub fn load_verified(path: &Path, basis: &crate::modal::ModalBasis) -> Result<Self> {
        let db = Self::load(path)?;
        db.verify_basis(basis)?;
        Ok(db)
    }
}

struct Lines<'a, I> {
    inner: I,
    name: &'a str,
    last: usize,
}

impl<'a, I: Iterator<Item = (usize, &'a str)>> Lines<'a, I> {
    fn err(&self, msg: String) -> Error {
        Error::parse(self.name, self.last, msg)
    }

    fn next_line(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok(l.trim_end())
            }
            None => {
                self.last += 1;
                Err(self.err("unexpected end of file".into()))
            }
        }
    }

    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next_line()?;
        match line.split_once(' ') {
            Some((k, rest)) if k == key => Ok(rest),
            _ if line == key => Ok(""),
            _ => Err(self.err(format!("expected `{key}`, found `{line}`"))),
        }
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Result<Vec<T>> {
        let rest = self.keyed(key)?;
        rest.split_ascii_whitespace()
            .map(|t| t.parse().map_err(|_| self.err(format!("bad value `{t}` in `{key}`"))))
            .collect()
    }

    fn single<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let mut v = self.list::<String>(key)?;
        if v.len() != 1 {
            return Err(self.err(format!("`{key}` takes exactly one value")));
        }
        let t = v.pop().unwrap();
        t.parse().map_err(|_| self.err(format!("bad value `{t}` for `{key}`")))
    }

    fn pairs(&mut self, key: &str) -> Result<Vec<[f64; 2]>> {
        let v: Vec<f64> = self.list(key)?;
        if !v.len().is_multiple_of(2) {
            return Err(self.err(format!("`{key}` needs an even number of values")));
        }
        Ok(v.chunks_exact(2).map(|c| [c[0], c[1]]).collect())
    }
}
