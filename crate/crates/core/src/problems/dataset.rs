//! Materialized datasets and their binary dump format.
//!
//! Layout (all little-endian): magic `b"CSGD"`, version `u32`, `d: u64`,
//! `n: u64`, then `n·d` row-major `f64` inputs, then `n` `f64` outputs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::numkit::{Mat64, Vec64};

use super::{GramStats, ProblemError, ProblemResult};

pub const DATASET_MAGIC: [u8; 4] = *b"CSGD";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub d: usize,
    pub n: usize,
    /// Row-major `n × d` inputs.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(d: usize, x: Vec<f64>, y: Vec<f64>) -> ProblemResult<Self> {
        if d == 0 || x.len() != y.len() * d {
            return Err(ProblemError::Format(format!(
                "inputs of length {} do not fit {} rows of dimension {d}",
                x.len(),
                y.len()
            )));
        }
        Ok(Self {
            d,
            n: y.len(),
            x,
            y,
        })
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    /// `G = XᵀX/n`, `c = Xᵀy/n`, `yy = yᵀy/n`.
    pub fn gram_stats(&self) -> GramStats {
        let d = self.d;
        let mut g = vec![0.0; d * d];
        let mut c = vec![0.0; d];
        let mut yy = 0.0;
        for i in 0..self.n {
            let xi = self.row(i);
            let yi = self.y[i];
            yy += yi * yi;
            for a in 0..d {
                let xa = xi[a];
                c[a] += xa * yi;
                let ga = &mut g[a * d..(a + 1) * d];
                for b in a..d {
                    ga[b] += xa * xi[b];
                }
            }
        }
        let inv_n = 1.0 / self.n as f64;
        for a in 0..d {
            for b in a..d {
                let v = g[a * d + b] * inv_n;
                g[a * d + b] = v;
                g[b * d + a] = v;
            }
        }
        GramStats {
            gram: Mat64::from_row_major(d, d, g).expect("square by construction"),
            xty: Vec64::from_vec(c.into_iter().map(|v| v * inv_n).collect()),
            yy: yy * inv_n,
        }
    }
}

pub fn write_dataset(path: &Path, data: &Dataset) -> ProblemResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&(data.d as u64).to_le_bytes())?;
    w.write_all(&(data.n as u64).to_le_bytes())?;
    for v in data.x.iter().chain(data.y.iter()) {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> ProblemResult<Dataset> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != DATASET_MAGIC {
        return Err(ProblemError::Format("bad magic".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != DATASET_VERSION {
        return Err(ProblemError::Format(format!("unsupported version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let d = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8) as usize;
    let total = n
        .checked_mul(d)
        .and_then(|nd| nd.checked_add(n))
        .ok_or_else(|| ProblemError::Format("header sizes overflow".into()))?;
    let mut vals = Vec::with_capacity(total);
    for _ in 0..total {
        r.read_exact(&mut b8)?;
        vals.push(f64::from_le_bytes(b8));
    }
    let y = vals.split_off(n * d);
    Dataset::new(d, vals, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let data = Dataset::new(2, vec![1.0, -0.0, f64::MIN_POSITIVE, 3.5], vec![1.0, -1.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("data.bin");
        write_dataset(&p, &data).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"CSGD");
        assert_eq!(bytes.len(), 4 + 4 + 8 + 8 + 6 * 8);
        let back = read_dataset(&p).unwrap();
        assert_eq!(back.d, 2);
        assert_eq!(back.n, 2);
        for (a, b) in back.x.iter().zip(&data.x) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.y, data.y);
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.bin");
        std::fs::write(&p, b"NOPE\x01\0\0\0").unwrap();
        assert!(matches!(read_dataset(&p), Err(ProblemError::Format(_))));
    }

    #[test]
    fn gram_of_two_rows() {
        let data = Dataset::new(2, vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 2.0]).unwrap();
        let gs = data.gram_stats();
        assert_eq!(gs.gram.as_slice(), &[5.0, 7.0, 7.0, 10.0]);
        assert_eq!(gs.xty.as_slice(), &[3.5, 5.0]);
        assert_eq!(gs.yy, 2.5);
    }
}
