//! Design sets shared by every model family.
//!
//! A design set pairs the delayed-input matrix `h[n, i] = x(t0 + n - i)` with
//! the envelope-power tensor `m[n, j, p] = |x(t0 + n - j)|^p` and the target
//! window `y[n] = y(t0 + n)`. The full design tensor
//! `X[n, i, j, p] = h[n, i] * m[n, j, p]` is only materialized on demand for
//! the uncompressed GMP path; the compressed families work from `h` and `m`
//! directly.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::tensor::DenseTensor;
use crate::{Error, Result};

/// Window and dimension bookkeeping for a design set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignMeta {
    /// First sample index of the window in the source signal.
    pub t0: usize,
    /// Number of samples in the window.
    pub n: usize,
    /// Number of input delays (`i = 0..m1`).
    pub m1: usize,
    /// Number of envelope delays (`j = 0..m2`).
    pub m2: usize,
    /// Number of envelope powers (`p = 0..p_order`, power 0 included).
    pub p: usize,
    /// Length of the source signal the window was cut from.
    pub signal_len: usize,
}

/// Delay/envelope design set over one window of a signal pair.
#[derive(Debug, Clone)]
pub struct DesignSet {
    /// `N x M1` delayed inputs.
    pub h: DenseTensor,
    /// `N x M2 x P` real-valued envelope powers (stored complex).
    pub m: DenseTensor,
    /// Target samples, length `N`.
    pub y: Vec<Complex64>,
    pub meta: DesignMeta,
}

impl DesignSet {
    /// Builds the design set for the window `t0 .. t0 + n` of `(x, y)`.
    ///
    /// Requires `t0 >= max(m1, m2) - 1` so every delayed sample exists, and
    /// the window must lie inside both signals.
    pub fn build(
        x: &[Complex64],
        y: &[Complex64],
        t0: usize,
        n: usize,
        m1: usize,
        m2: usize,
        p: usize,
    ) -> Result<Self> {
        if m1 == 0 || m2 == 0 || p == 0 {
            return Err(Error::InvalidArgument(
                "model dimensions (m1, m2, p) must be positive".into(),
            ));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("window must not be empty".into()));
        }
        if x.len() != y.len() {
            return Err(Error::ShapeMismatch(format!(
                "input and output signals differ in length: {} vs {}",
                x.len(),
                y.len()
            )));
        }
        let max_delay = m1.max(m2) - 1;
        if t0 < max_delay {
            return Err(Error::InvalidArgument(format!(
                "window start {} leaves no history for {} delays",
                t0, max_delay
            )));
        }
        let end = t0
            .checked_add(n)
            .ok_or_else(|| Error::InvalidArgument("window overflows".into()))?;
        if end > x.len() {
            return Err(Error::InvalidArgument(format!(
                "window {}..{} exceeds signal length {}",
                t0,
                end,
                x.len()
            )));
        }

        let mut h = DenseTensor::zeros(vec![n, m1])?;
        for i in 0..m1 {
            for t in 0..n {
                let v = x[t0 + t - i];
                h.data_mut()[t + i * n] = v;
            }
        }
        let mut m = DenseTensor::zeros(vec![n, m2, p])?;
        for j in 0..m2 {
            for t in 0..n {
                let r = x[t0 + t - j].norm();
                let mut rp = 1.0f64;
                for q in 0..p {
                    m.data_mut()[t + j * n + q * n * m2] = Complex64::new(rp, 0.0);
                    rp *= r;
                }
            }
        }
        Ok(Self {
            h,
            m,
            y: y[t0..end].to_vec(),
            meta: DesignMeta {
                t0,
                n,
                m1,
                m2,
                p,
                signal_len: x.len(),
            },
        })
    }

    /// Number of samples in the window.
    pub fn len(&self) -> usize {
        self.meta.n
    }

    pub fn is_empty(&self) -> bool {
        self.meta.n == 0
    }

    /// `h` as an `N x M1` matrix.
    pub fn h_matrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_column_slice(self.meta.n, self.meta.m1, self.h.data())
    }

    /// Mode-1 unfolding of `m` as an `N x (M2 * P)` matrix (a reshape).
    pub fn m_unfolded(&self) -> DMatrix<Complex64> {
        DMatrix::from_column_slice(self.meta.n, self.meta.m2 * self.meta.p, self.m.data())
    }

    /// `y` as a column vector.
    pub fn y_vector(&self) -> nalgebra::DVector<Complex64> {
        nalgebra::DVector::from_column_slice(&self.y)
    }

    /// Mode-1 unfolding of the full design tensor: an `N x (M1 * M2 * P)`
    /// matrix whose column for `(i, j, p)` is `h[:, i] .* m[:, j, p]`, with
    /// `i` fastest. Only the uncompressed GMP solvers need this.
    pub fn unfolded_basis(&self) -> DMatrix<Complex64> {
        let (n, m1) = (self.meta.n, self.meta.m1);
        let cols = m1 * self.meta.m2 * self.meta.p;
        let mut out = DMatrix::zeros(n, cols);
        let h = self.h.data();
        let m = self.m.data();
        for jp in 0..self.meta.m2 * self.meta.p {
            let m_col = &m[jp * n..(jp + 1) * n];
            for i in 0..m1 {
                let h_col = &h[i * n..(i + 1) * n];
                let mut col = out.column_mut(jp * m1 + i);
                for t in 0..n {
                    col[t] = h_col[t] * m_col[t];
                }
            }
        }
        out
    }

    /// Materializes the order-4 design tensor `N x M1 x M2 x P`.
    pub fn full_design_tensor(&self) -> Result<DenseTensor> {
        let shape = vec![self.meta.n, self.meta.m1, self.meta.m2, self.meta.p];
        let flat = self.unfolded_basis();
        DenseTensor::new(shape, flat.as_slice().to_vec())
    }

    /// Replaces the envelope tensor, updating the affected dimensions. Used
    /// by projected identification, where `m` shrinks to `N x M2~ x P~`.
    pub fn with_envelope(&self, m: DenseTensor) -> Result<Self> {
        if m.order() != 3 || m.shape()[0] != self.meta.n {
            return Err(Error::ShapeMismatch(format!(
                "envelope tensor {:?} does not match window of {} samples",
                m.shape(),
                self.meta.n
            )));
        }
        let mut meta = self.meta.clone();
        meta.m2 = m.shape()[1];
        meta.p = m.shape()[2];
        Ok(Self {
            h: self.h.clone(),
            m,
            y: self.y.clone(),
            meta,
        })
    }

    /// Saves the set as `<stem>.h.ten`, `<stem>.m.ten`, `<stem>.y.ten`, and
    /// `<stem>.meta.json` inside `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.h.save(&dir.join(format!("{stem}.h.ten")))?;
        self.m.save(&dir.join(format!("{stem}.m.ten")))?;
        DenseTensor::new(vec![self.y.len()], self.y.clone())?
            .save(&dir.join(format!("{stem}.y.ten")))?;
        let meta = serde_json::to_string_pretty(&self.meta)
            .map_err(|e| Error::Format(format!("meta serialization: {e}")))?;
        std::fs::write(dir.join(format!("{stem}.meta.json")), meta)?;
        Ok(())
    }

    /// Loads a set saved by [`save`](Self::save).
    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let meta_raw = std::fs::read_to_string(dir.join(format!("{stem}.meta.json")))?;
        let meta: DesignMeta = serde_json::from_str(&meta_raw)
            .map_err(|e| Error::Format(format!("meta deserialization: {e}")))?;
        let h = DenseTensor::load(&dir.join(format!("{stem}.h.ten")))?;
        let m = DenseTensor::load(&dir.join(format!("{stem}.m.ten")))?;
        let y_t = DenseTensor::load(&dir.join(format!("{stem}.y.ten")))?;
        if h.shape() != [meta.n, meta.m1] {
            return Err(Error::Format("delay matrix does not match meta".into()));
        }
        if m.shape() != [meta.n, meta.m2, meta.p] {
            return Err(Error::Format("envelope tensor does not match meta".into()));
        }
        if y_t.order() != 1 || y_t.len() != meta.n {
            return Err(Error::Format("target vector does not match meta".into()));
        }
        Ok(Self {
            h,
            m,
            y: y_t.data().to_vec(),
            meta,
        })
    }
}
