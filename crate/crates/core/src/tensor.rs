//! Dense complex tensors with first-index-fastest flat storage.
//!
//! A tensor of shape `[I1, ..., Id]` is stored as a flat `Vec<Complex64>`
//! where the entry at 0-based indices `(i1, ..., id)` lives at offset
//! `i1 + i2*I1 + i3*I1*I2 + ...`. Vectorization is therefore the identity on
//! the flat buffer, an order-2 tensor coincides with a column-major matrix,
//! and the mode-1 unfolding is a plain reshape.
//!
//! Unfoldings, foldings, and mode products all share this index convention,
//! so `unfold(1)` of the result of a mode-1 matrix product equals the matrix
//! product of the unfoldings, and `x.mode_vec_product(1, v)` followed by
//! `mode_vec_product(1, w)` matches `x.unfold(0) * kron(w, v)` exactly.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"GMPTNSR1";

/// Dense tensor of arbitrary order with complex double-precision entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<Complex64>,
}

impl DenseTensor {
    /// Builds a tensor from its shape and flat data (first index fastest).
    pub fn new(shape: Vec<usize>, data: Vec<Complex64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::InvalidArgument("tensor order must be >= 1".into()));
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(
                "tensor dimensions must be positive".into(),
            ));
        }
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(Error::ShapeMismatch(format!(
                "shape {:?} needs {} entries, got {}",
                shape,
                len,
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    /// All-zero tensor of the given shape.
    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len: usize = shape.iter().product();
        Self::new(shape, vec![Complex64::default(); len])
    }

    /// Builds a tensor by evaluating `f` at every multi-index.
    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> Complex64) -> Result<Self> {
        let mut t = Self::zeros(shape)?;
        let mut idx = vec![0usize; t.order()];
        for o in 0..t.data.len() {
            t.data[o] = f(&idx);
            for (k, i) in idx.iter_mut().enumerate() {
                *i += 1;
                if *i < t.shape[k] {
                    break;
                }
                *i = 0;
            }
        }
        Ok(t)
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Flat data in first-index-fastest order; `vec(x)` is exactly this slice.
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Flat offset of a multi-index.
    pub fn offset(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.order() {
            return Err(Error::ShapeMismatch(format!(
                "index of length {} into order-{} tensor",
                idx.len(),
                self.order()
            )));
        }
        let mut o = 0usize;
        let mut stride = 1usize;
        for (k, (&i, &d)) in idx.iter().zip(&self.shape).enumerate() {
            if i >= d {
                return Err(Error::InvalidArgument(format!(
                    "index {} out of range for dimension {} of size {}",
                    i, k, d
                )));
            }
            o += i * stride;
            stride *= d;
        }
        Ok(o)
    }

    pub fn get(&self, idx: &[usize]) -> Result<Complex64> {
        Ok(self.data[self.offset(idx)?])
    }

    pub fn set(&mut self, idx: &[usize], v: Complex64) -> Result<()> {
        let o = self.offset(idx)?;
        self.data[o] = v;
        Ok(())
    }

    /// Product of the dimensions before `mode`; also the flat stride of `mode`.
    fn stride(&self, mode: usize) -> usize {
        self.shape[..mode].iter().product()
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            return Err(Error::ModeOutOfRange {
                mode,
                order: self.order(),
            });
        }
        Ok(())
    }

    /// Frobenius norm, accumulated with compensated summation.
    pub fn fro_norm(&self) -> f64 {
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for z in &self.data {
            let term = z.norm_sqr();
            let t = sum + term;
            if sum.abs() >= term.abs() {
                comp += (sum - t) + term;
            } else {
                comp += (term - t) + sum;
            }
            sum = t;
        }
        (sum + comp).sqrt()
    }

    /// Mode-`mode` unfolding: rows are indexed by the mode itself, columns by
    /// the remaining indices merged in their original order, first surviving
    /// index fastest.
    pub fn unfold(&self, mode: usize) -> Result<DMatrix<Complex64>> {
        self.check_mode(mode)?;
        let ik = self.shape[mode];
        let stride = self.stride(mode);
        let block = stride * ik;
        let cols = self.data.len() / ik;
        let mut out = DMatrix::zeros(ik, cols);
        for (o, &v) in self.data.iter().enumerate() {
            let row = (o / stride) % ik;
            let col = (o % stride) + (o / block) * stride;
            out[(row, col)] = v;
        }
        Ok(out)
    }

    /// Inverse of [`unfold`](Self::unfold): refolds a mode-`mode` unfolding
    /// back into a tensor of the given shape.
    pub fn fold(mat: &DMatrix<Complex64>, mode: usize, shape: &[usize]) -> Result<Self> {
        if mode >= shape.len() {
            return Err(Error::ModeOutOfRange {
                mode,
                order: shape.len(),
            });
        }
        let ik = shape[mode];
        let total: usize = shape.iter().product();
        if mat.nrows() != ik || mat.ncols() != total / ik.max(1) {
            return Err(Error::ShapeMismatch(format!(
                "cannot fold {}x{} matrix into shape {:?} along mode {}",
                mat.nrows(),
                mat.ncols(),
                shape,
                mode
            )));
        }
        let mut t = Self::zeros(shape.to_vec())?;
        let stride = t.stride(mode);
        let block = stride * ik;
        for (o, v) in t.data.iter_mut().enumerate() {
            let row = (o / stride) % ik;
            let col = (o % stride) + (o / block) * stride;
            *v = mat[(row, col)];
        }
        Ok(t)
    }

    /// Mode-`mode` matrix product: contracts the mode with the columns of
    /// `q`, replacing dimension `I_mode` by `q.nrows()`.
    pub fn mode_matrix_product(&self, mode: usize, q: &DMatrix<Complex64>) -> Result<Self> {
        self.check_mode(mode)?;
        if q.ncols() != self.shape[mode] {
            return Err(Error::ShapeMismatch(format!(
                "mode-{} product: matrix has {} columns, dimension is {}",
                mode,
                q.ncols(),
                self.shape[mode]
            )));
        }
        let unfolded = self.unfold(mode)?;
        let product = q * unfolded;
        let mut shape = self.shape.clone();
        shape[mode] = q.nrows();
        Self::fold(&product, mode, &shape)
    }

    /// Mode-`mode` vector product: contracts the mode away entirely, so the
    /// result has order `d - 1`.
    pub fn mode_vec_product(&self, mode: usize, v: &[Complex64]) -> Result<Self> {
        self.check_mode(mode)?;
        if self.order() < 2 {
            return Err(Error::InvalidArgument(
                "mode vector product needs order >= 2".into(),
            ));
        }
        if v.len() != self.shape[mode] {
            return Err(Error::ShapeMismatch(format!(
                "mode-{} product: vector has {} entries, dimension is {}",
                mode,
                v.len(),
                self.shape[mode]
            )));
        }
        let ik = self.shape[mode];
        let stride = self.stride(mode);
        let block = stride * ik;
        let mut shape = self.shape.clone();
        shape.remove(mode);
        let mut out = Self::zeros(shape)?;
        for (o, dst) in out.data.iter_mut().enumerate() {
            let base = (o % stride) + (o / stride) * block;
            let mut acc = Complex64::default();
            for (t, &w) in v.iter().enumerate() {
                acc += self.data[base + t * stride] * w;
            }
            *dst = acc;
        }
        Ok(out)
    }

    /// Contracts all trailing modes of `self` (order d+1) against `s`
    /// (order d), leaving a vector along the leading mode:
    /// `out[n] = sum_m self[n, m] * s[m]` over all multi-indices `m`.
    pub fn contract_leading(&self, s: &DenseTensor) -> Result<Vec<Complex64>> {
        if self.order() != s.order() + 1 || self.shape[1..] != *s.shape() {
            return Err(Error::ShapeMismatch(format!(
                "cannot contract trailing modes of {:?} against {:?}",
                self.shape,
                s.shape()
            )));
        }
        let n = self.shape[0];
        let mut out = vec![Complex64::default(); n];
        for (m, &w) in s.data.iter().enumerate() {
            let base = m * n;
            for (t, dst) in out.iter_mut().enumerate() {
                *dst += self.data[base + t] * w;
            }
        }
        Ok(out)
    }

    /// Outer product of the given vectors; the result's order equals the
    /// number of vectors.
    pub fn outer(vectors: &[&[Complex64]]) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::InvalidArgument(
                "outer product needs at least one vector".into(),
            ));
        }
        let shape: Vec<usize> = vectors.iter().map(|v| v.len()).collect();
        Self::from_fn(shape, |idx| {
            idx.iter()
                .zip(vectors)
                .map(|(&i, v)| v[i])
                .product::<Complex64>()
        })
    }

    /// View of an order-1 or order-2 tensor as a column-major matrix.
    pub fn to_matrix(&self) -> Result<DMatrix<Complex64>> {
        match self.order() {
            1 => Ok(DMatrix::from_column_slice(self.shape[0], 1, &self.data)),
            2 => Ok(DMatrix::from_column_slice(
                self.shape[0],
                self.shape[1],
                &self.data,
            )),
            d => Err(Error::InvalidArgument(format!(
                "to_matrix on order-{} tensor",
                d
            ))),
        }
    }

    /// Wraps a column-major matrix as an order-2 tensor.
    pub fn from_matrix(m: &DMatrix<Complex64>) -> Self {
        Self {
            shape: vec![m.nrows(), m.ncols()],
            data: m.as_slice().to_vec(),
        }
    }

    /// True when every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Writes the binary container: magic, order, shape (u64 LE each), then
    /// interleaved (re, im) f64 LE in flat storage order.
    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.order() as u64).to_le_bytes())?;
        for &d in &self.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for z in &self.data {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a tensor previously written with [`write_binary`](Self::write_binary).
    pub fn read_binary<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad tensor container magic".into()));
        }
        let order = read_u64(r)? as usize;
        if order == 0 || order > 64 {
            return Err(Error::Format(format!("implausible tensor order {order}")));
        }
        let mut shape = Vec::with_capacity(order);
        let mut len = 1usize;
        for _ in 0..order {
            let d = read_u64(r)? as usize;
            if d == 0 {
                return Err(Error::Format("zero dimension in tensor container".into()));
            }
            len = len
                .checked_mul(d)
                .ok_or_else(|| Error::Format("tensor container too large".into()))?;
            shape.push(d);
        }
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            let re = read_f64(r)?;
            let im = read_f64(r)?;
            data.push(Complex64::new(re, im));
        }
        Self::new(shape, data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_binary(&mut f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let t = Self::read_binary(&mut f)?;
        let mut rest = [0u8; 1];
        match f.read(&mut rest)? {
            0 => Ok(t),
            _ => Err(Error::Format("trailing bytes in tensor container".into())),
        }
    }

    /// Serializes the container into a byte buffer.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(16 + 8 * self.order() + 16 * self.len());
        self.write_binary(&mut buf).expect("write to Vec");
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = std::io::Cursor::new(bytes);
        let t = Self::read_binary(&mut cursor)?;
        if cursor.position() as usize != bytes.len() {
            return Err(Error::Format("trailing bytes in tensor container".into()));
        }
        Ok(t)
    }
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Flat offset of `idx` in a tensor of shape `shape` (first index fastest).
pub fn linear_index(idx: &[usize], shape: &[usize]) -> usize {
    debug_assert_eq!(idx.len(), shape.len());
    let mut o = 0usize;
    let mut stride = 1usize;
    for (&i, &d) in idx.iter().zip(shape) {
        debug_assert!(i < d);
        o += i * stride;
        stride *= d;
    }
    o
}

/// Multi-index of flat offset `o` in a tensor of shape `shape`.
pub fn multi_index(mut o: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = Vec::with_capacity(shape.len());
    for &d in shape {
        idx.push(o % d);
        o /= d;
    }
    idx
}

/// Kronecker product `a (x) b`.
pub fn kron(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = DMatrix::zeros(ra * rb, ca * cb);
    for ja in 0..ca {
        for ia in 0..ra {
            let s = a[(ia, ja)];
            for jb in 0..cb {
                for ib in 0..rb {
                    out[(ia * rb + ib, ja * cb + jb)] = s * b[(ib, jb)];
                }
            }
        }
    }
    out
}

/// Kronecker product of two column vectors, as a flat vector.
pub fn kron_vec(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        for &y in b {
            out.push(x * y);
        }
    }
    out
}

/// Hadamard (entrywise) product of two equally-shaped matrices.
pub fn hadamard(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "hadamard product of {}x{} and {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(a.component_mul(b))
}
