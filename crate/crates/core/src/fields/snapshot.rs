//! Binary field snapshots.
//!
//! Layout, all little-endian: magic `NSDEGSNP`, then `u32` version, dim, n,
//! role; `f64` box length and time; then the samples as `f64`, component by
//! component in row-major order.

use std::io::{Read, Write};

use thiserror::Error;

use super::{FieldError, Grid, ScalarField, VectorField};

pub const MAGIC: &[u8; 8] = b"NSDEGSNP";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 40;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a snapshot (bad magic)")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    Version(u32),
    #[error("unknown role tag {0}")]
    Role(u32),
    #[error("bad header: {0}")]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Rho = 0,
    Phi = 1,
    Vphi = 2,
    Velocity = 3,
}

impl Role {
    fn from_tag(t: u32) -> Result<Role, SnapshotError> {
        Ok(match t {
            0 => Role::Rho,
            1 => Role::Phi,
            2 => Role::Vphi,
            3 => Role::Velocity,
            other => return Err(SnapshotError::Role(other)),
        })
    }

    pub fn components(self, dim: usize) -> usize {
        if self == Role::Velocity {
            dim
        } else {
            1
        }
    }
}

/// Decoded snapshot contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub role: Role,
    pub time: f64,
    pub components: Vec<ScalarField>,
}

impl Snapshot {
    pub fn grid(&self) -> &Grid {
        self.components[0].grid()
    }

    pub fn into_scalar(mut self) -> ScalarField {
        self.components.swap_remove(0)
    }

    pub fn into_vector(self) -> Result<VectorField, FieldError> {
        VectorField::from_components(self.components)
    }
}

pub fn write_scalar<W: Write>(
    w: &mut W,
    role: Role,
    f: &ScalarField,
    time: f64,
) -> Result<(), SnapshotError> {
    write_components(w, role, std::slice::from_ref(f), time)
}

pub fn write_vector<W: Write>(w: &mut W, u: &VectorField, time: f64) -> Result<(), SnapshotError> {
    write_components(w, Role::Velocity, u.components(), time)
}

fn write_components<W: Write>(
    w: &mut W,
    role: Role,
    comps: &[ScalarField],
    time: f64,
) -> Result<(), SnapshotError> {
    let g = comps[0].grid();
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * g.len() * comps.len());
    buf.extend_from_slice(MAGIC);
    for v in [VERSION, g.dim() as u32, g.n() as u32, role as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&g.box_length().to_le_bytes());
    buf.extend_from_slice(&time.to_le_bytes());
    for c in comps {
        for v in c.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read<R: Read>(r: &mut R) -> Result<Snapshot, SnapshotError> {
    let mut head = [0u8; HEADER_LEN];
    r.read_exact(&mut head)?;
    if &head[..8] != MAGIC {
        return Err(SnapshotError::BadMagic);
    }
    let u32_at = |o: usize| u32::from_le_bytes(head[o..o + 4].try_into().expect("4 bytes"));
    let f64_at = |o: usize| f64::from_le_bytes(head[o..o + 8].try_into().expect("8 bytes"));
    let version = u32_at(8);
    if version != VERSION {
        return Err(SnapshotError::Version(version));
    }
    let grid = Grid::new(u32_at(12) as usize, u32_at(16) as usize, f64_at(24))?;
    let role = Role::from_tag(u32_at(20))?;
    let time = f64_at(32);
    let mut components = Vec::new();
    let mut raw = vec![0u8; 8 * grid.len()];
    for _ in 0..role.components(grid.dim()) {
        r.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        components.push(ScalarField::from_vec(&grid, data)?);
    }
    Ok(Snapshot {
        role,
        time,
        components,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_round_trip() {
        let g = Grid::new(2, 8, 1.5).unwrap();
        let u = VectorField::from_fn(&g, |x, c| x[0] * (c as f64 + 1.0) - x[1]);
        let mut buf = Vec::new();
        write_vector(&mut buf, &u, 0.25).unwrap();
        assert_eq!(buf.len(), HEADER_LEN + 2 * 64 * 8);
        let s = read(&mut buf.as_slice()).unwrap();
        assert_eq!(s.role, Role::Velocity);
        assert_eq!(s.time, 0.25);
        assert_eq!(s.into_vector().unwrap(), u);
    }

    #[test]
    fn rejects_garbage() {
        let buf = vec![0u8; 64];
        assert!(matches!(
            read(&mut buf.as_slice()),
            Err(SnapshotError::BadMagic)
        ));
    }
}
