//! Binary persistence for noise and field paths.
//!
//! Layout: a 64-byte header of eight little-endian words
//! `magic, version, nt, nx, dt, dx, seed, replica` followed by the row-major
//! `f64` data. The grid is rebuilt from `(nt, nx, dt, dx)`.

use std::io::{Read, Write};

use ndarray::Array2;

use crate::error::{invalid, Result};
use crate::grid::{FieldPath, GridSpec};
use crate::noise::NoisePath;

const NOISE_MAGIC: [u8; 8] = *b"TCINOISE";
const FIELD_MAGIC: [u8; 8] = *b"TCIFIELD";
const VERSION: u64 = 1;

struct Header {
    nt: usize,
    nx: usize,
    dt: f64,
    dx: f64,
    seed: u64,
    replica: u64,
}

fn write_block(w: &mut impl Write, magic: [u8; 8], h: &Header, data: &Array2<f64>) -> Result<()> {
    let mut buf = Vec::with_capacity(64 + 8 * data.len());
    buf.extend_from_slice(&magic);
    for word in [VERSION, h.nt as u64, h.nx as u64, h.dt.to_bits(), h.dx.to_bits(), h.seed, h.replica] {
        buf.extend_from_slice(&word.to_le_bytes());
    }
    for v in data.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_block(r: &mut impl Read, magic: [u8; 8], extra_rows: usize) -> Result<(Header, GridSpec, Array2<f64>)> {
    let mut head = [0u8; 64];
    r.read_exact(&mut head)?;
    if head[..8] != magic {
        return Err(invalid("unrecognized file magic"));
    }
    let word = |k: usize| u64::from_le_bytes(head[8 * k..8 * k + 8].try_into().unwrap());
    if word(1) != VERSION {
        return Err(invalid(format!("unsupported file version {}", word(1))));
    }
    let h = Header {
        nt: word(2) as usize,
        nx: word(3) as usize,
        dt: f64::from_bits(word(4)),
        dx: f64::from_bits(word(5)),
        seed: word(6),
        replica: word(7),
    };
    let grid = GridSpec::new(h.nx as f64 * h.dx / 2.0, h.nx, h.nt as f64 * h.dt, h.nt)?;
    let rows = h.nt + extra_rows;
    let mut bytes = vec![0u8; 8 * rows * h.nx];
    r.read_exact(&mut bytes)?;
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let data = Array2::from_shape_vec((rows, h.nx), data).map_err(|e| invalid(e.to_string()))?;
    Ok((h, grid, data))
}

pub fn write_noise(w: &mut impl Write, noise: &NoisePath) -> Result<()> {
    let g = noise.grid;
    let h = Header {
        nt: g.nt,
        nx: g.nx,
        dt: g.dt(),
        dx: g.dx(),
        seed: noise.seed,
        replica: noise.replica,
    };
    write_block(w, NOISE_MAGIC, &h, &noise.increments)
}

pub fn read_noise(r: &mut impl Read) -> Result<NoisePath> {
    let (h, grid, increments) = read_block(r, NOISE_MAGIC, 0)?;
    Ok(NoisePath {
        increments,
        seed: h.seed,
        replica: h.replica,
        grid,
    })
}

pub fn write_field(w: &mut impl Write, path: &FieldPath, seed: u64, replica: u64) -> Result<()> {
    let g = path.grid;
    let h = Header {
        nt: g.nt,
        nx: g.nx,
        dt: g.dt(),
        dx: g.dx(),
        seed,
        replica,
    };
    write_block(w, FIELD_MAGIC, &h, &path.values)
}

/// Returns the path with the `(seed, replica)` it was stored under.
pub fn read_field(r: &mut impl Read) -> Result<(FieldPath, u64, u64)> {
    let (h, grid, values) = read_block(r, FIELD_MAGIC, 1)?;
    Ok((FieldPath::new(values, grid)?, h.seed, h.replica))
}
