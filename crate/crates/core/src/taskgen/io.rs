//! Plain binary container for a [`TaskBundle`].
//!
//! Layout, all integers u64 little-endian and all reals f64 little-endian:
//!
//! ```text
//! "RLB1"
//! d k T n1 n2
//! X_1 .. X_T        each n1×d, row-major
//! y_1 .. y_T        each n1
//! X_target          n2×d, row-major
//! y_target          n2
//! z_1 .. z_T        each n1
//! z_target          n2
//! len, target_weight
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::TaskBundle;
use crate::error::{invalid, Error, Result};
use crate::linops::{DenseMatrix, Vector};

pub const BUNDLE_MAGIC: &[u8; 4] = b"RLB1";

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

fn put_u64(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u64).to_le_bytes());
}

fn put_matrix(out: &mut Vec<u8>, m: &DenseMatrix) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
}

fn put_vector(out: &mut Vec<u8>, v: &Vector) {
    for x in v.iter() {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn encode_bundle(b: &TaskBundle) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(BUNDLE_MAGIC);
    for v in [b.d(), b.k, b.t(), b.n1(), b.n2()] {
        put_u64(&mut out, v);
    }
    b.x.iter().for_each(|m| put_matrix(&mut out, m));
    b.y.iter().for_each(|v| put_vector(&mut out, v));
    put_matrix(&mut out, &b.x_target);
    put_vector(&mut out, &b.y_target);
    b.z.iter().for_each(|v| put_vector(&mut out, v));
    put_vector(&mut out, &b.z_target);
    put_u64(&mut out, b.target_weight.len());
    put_vector(&mut out, &b.target_weight);
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return invalid("bundle file is truncated");
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u64(&mut self) -> Result<usize> {
        let b = self.take(8)?;
        let v = u64::from_le_bytes(b.try_into().unwrap());
        usize::try_from(v).or_else(|_| invalid("bundle dimension overflows usize"))
    }
    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }
    fn matrix(&mut self, r: usize, c: usize) -> Result<DenseMatrix> {
        let mut m = DenseMatrix::zeros(r, c);
        for i in 0..r {
            for j in 0..c {
                m[(i, j)] = self.f64()?;
            }
        }
        Ok(m)
    }
    fn vector(&mut self, n: usize) -> Result<Vector> {
        let mut v = Vector::zeros(n);
        for i in 0..n {
            v[i] = self.f64()?;
        }
        Ok(v)
    }
}

pub fn decode_bundle(buf: &[u8]) -> Result<TaskBundle> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4)? != BUNDLE_MAGIC {
        return invalid("not a bundle file (bad magic)");
    }
    let (d, k, t, n1, n2) = (c.u64()?, c.u64()?, c.u64()?, c.u64()?, c.u64()?);
    let expected = 8 * (t * n1 * d + t * n1 + n2 * d + n2 + t * n1 + n2);
    if buf.len() < c.pos + expected {
        return invalid("bundle file is truncated");
    }
    let x = (0..t).map(|_| c.matrix(n1, d)).collect::<Result<Vec<_>>>()?;
    let y = (0..t).map(|_| c.vector(n1)).collect::<Result<Vec<_>>>()?;
    let x_target = c.matrix(n2, d)?;
    let y_target = c.vector(n2)?;
    let z = (0..t).map(|_| c.vector(n1)).collect::<Result<Vec<_>>>()?;
    let z_target = c.vector(n2)?;
    let len = c.u64()?;
    let target_weight = c.vector(len)?;
    if c.pos != buf.len() {
        return invalid("trailing bytes after bundle");
    }
    Ok(TaskBundle { k, x, y, x_target, y_target, z, z_target, target_weight })
}

pub fn write_bundle(path: &Path, b: &TaskBundle) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(&encode_bundle(b)).map_err(|e| io_err(path, e))
}

pub fn read_bundle(path: &Path) -> Result<TaskBundle> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| io_err(path, e))?;
    decode_bundle(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::{generate, EnsembleSpec, Track};

    #[test]
    fn roundtrip() {
        let s = EnsembleSpec::new(Track::Lowdim, 6, 2, 4, 7, 5).with_seed(3);
        let (_, b) = generate(&s).unwrap();
        let bytes = encode_bundle(&b);
        assert_eq!(&bytes[..4], BUNDLE_MAGIC);
        assert_eq!(u64::from_le_bytes(bytes[4..12].try_into().unwrap()), 6);
        assert_eq!(decode_bundle(&bytes).unwrap(), b);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let s = EnsembleSpec::new(Track::Lowdim, 4, 1, 2, 3, 2);
        let (_, b) = generate(&s).unwrap();
        let mut bytes = encode_bundle(&b);
        assert!(decode_bundle(&bytes[..bytes.len() - 3]).is_err());
        bytes[0] = b'X';
        assert!(decode_bundle(&bytes).is_err());
    }
}
