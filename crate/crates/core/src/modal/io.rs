//! Binary persistence of a [`ModalBasis`].
//!
//! All integers are `u64` and all floats `f64`, little-endian:
//!
//! | field            | type                   | notes                                |
//! |------------------|------------------------|--------------------------------------|
//! | magic            | 8 bytes                | `MPBASIS1`                           |
//! | r                | u64                    | retained modes                       |
//! | free_dofs        | u64                    | free-DOF count `f`                   |
//! | node_count       | u64                    | `n`                                  |
//! | xi, zeta         | f64, f64               | Rayleigh damping factors             |
//! | free-DOF map     | `f` x u64              | global DOF `3*node+axis` per row     |
//! | lambda           | `r` x f64              | ascending                            |
//! | phi              | `f*r` x f64            | column-major                         |
//! | has_curl         | u8                     | 0 or 1                               |
//! | curl basis       | `3n*r` x f64           | column-major, present iff has_curl   |
//!
//! The fingerprint of a basis is the lowercase hex SHA-256 of these bytes.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use super::ModalBasis;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MPBASIS1";

impl ModalBasis {
    pub fn to_bytes(&self) -> Vec<u8> {
        let r = self.modes();
        let f = self.free_dof_count();
        let curl_len = self.curl_basis.as_ref().map_or(0, |c| c.len());
        let mut out = Vec::with_capacity(8 * (6 + f + r + f * r + curl_len) + 1);
        out.extend_from_slice(MAGIC);
        for v in [r as u64, f as u64, self.node_count as u64] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.xi.to_le_bytes());
        out.extend_from_slice(&self.zeta.to_le_bytes());
        for &g in &self.free_dofs {
            out.extend_from_slice(&(g as u64).to_le_bytes());
        }
        for v in self.lambda.iter().chain(self.phi.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        match &self.curl_basis {
            None => out.push(0),
            Some(c) => {
                out.push(1);
                for v in c.iter() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { bytes, pos: 0 };
        if rd.take(8)? != MAGIC {
            return Err(Error::InvalidParam("not a modal basis file (bad magic)".into()));
        }
        let r = rd.usize()?;
        let f = rd.usize()?;
        let node_count = rd.usize()?;
        if r == 0 || r > f || f > 3 * node_count {
            return Err(Error::InvalidParam(format!(
                "inconsistent basis header: r = {r}, free DOFs = {f}, nodes = {node_count}"
            )));
        }
        let xi = rd.f64()?;
        let zeta = rd.f64()?;
        let free_dofs = (0..f).map(|_| rd.usize()).collect::<Result<Vec<_>>>()?;
        if free_dofs.windows(2).any(|w| w[0] >= w[1]) || free_dofs.last().is_some_and(|&g| g >= 3 * node_count) {
            return Err(Error::InvalidParam(
                "basis free-DOF map is not strictly increasing and in range".into(),
            ));
        }
        let lambda = DVector::from_vec(rd.f64s(r)?);
        let phi = DMatrix::from_vec(f, r, rd.f64s(f * r)?);
        let curl_basis = match rd.take(1)?[0] {
            0 => None,
            1 => Some(DMatrix::from_vec(3 * node_count, r, rd.f64s(3 * node_count * r)?)),
            x => return Err(Error::InvalidParam(format!("bad curl flag {x}"))),
        };
        if rd.pos != bytes.len() {
            return Err(Error::InvalidParam(format!(
                "{} trailing bytes after basis data",
                bytes.len() - rd.pos
            )));
        }
        Ok(ModalBasis {
            phi,
            lambda,
            xi,
            zeta,
            free_dofs,
            node_count,
            curl_basis,
        })
    }

    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::InvalidParam(format!(
                    "basis file truncated: need {n} bytes at offset {}, have {}",
                    self.pos,
                    self.bytes.len() - self.pos
                ))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::InvalidParam(format!("count {v} does not fit in memory")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::InvalidParam("size overflow".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
