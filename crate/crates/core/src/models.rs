//! GMP coefficient tensors and their compressed forms.
//!
//! The full model applies a coefficient tensor `S` of shape `M1 x M2 x P` to
//! a design set:
//!
//! ```text
//! y(n) = sum_{i,j,p} S[i,j,p] * h[n,i] * m[n,j,p]
//! ```
//!
//! The compressed families factor `S` instead of storing it:
//!
//! * CP: `S[i,j,p] = sum_r A[i,r] B[j,r] C[p,r]`;
//! * tensor train: `S[i,j,p] = sum_{r1,r2} A[i,r1] B[r1,j,r2] C[r2,p]`;
//! * Tucker: `S = G x_1 A x_2 B x_3 C`.
//!
//! Their `predict` implementations never materialize `S` or the order-4
//! design tensor; they contract the envelope tensor against the small
//! factors first and then weight by the delayed inputs.

use std::collections::BTreeMap;
use std::path::Path;

use base64::Engine;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dataset::DesignSet;
use crate::tensor::{kron_vec, DenseTensor};
use crate::{Error, Result};

/// Model family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Gmp,
    Cp,
    Tt,
    Tucker,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Gmp => "gmp",
            ModelKind::Cp => "cp",
            ModelKind::Tt => "tt",
            ModelKind::Tucker => "tucker",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gmp" => Ok(ModelKind::Gmp),
            "cp" => Ok(ModelKind::Cp),
            "tt" => Ok(ModelKind::Tt),
            "tucker" => Ok(ModelKind::Tucker),
            other => Err(Error::InvalidArgument(format!("unknown model kind {other:?}"))),
        }
    }

    /// Number of rank parameters this family expects.
    pub fn rank_count(&self) -> usize {
        match self {
            ModelKind::Gmp => 0,
            ModelKind::Cp => 1,
            ModelKind::Tt => 2,
            ModelKind::Tucker => 3,
        }
    }
}

/// Full GMP model: the coefficient tensor itself.
#[derive(Debug, Clone)]
pub struct GmpModel {
    /// Coefficients, shape `M1 x M2 x P`.
    pub s: DenseTensor,
}

/// CP-compressed model with factors `A (M1 x R)`, `B (M2 x R)`, `C (P x R)`.
#[derive(Debug, Clone)]
pub struct CpModel {
    pub a: DMatrix<Complex64>,
    pub b: DMatrix<Complex64>,
    pub c: DMatrix<Complex64>,
}

/// Tensor-train model with `A (M1 x R1)`, core `B (R1 x M2 x R2)`, and
/// `C (R2 x P)`.
#[derive(Debug, Clone)]
pub struct TtModel {
    pub a: DMatrix<Complex64>,
    pub b: DenseTensor,
    pub c: DMatrix<Complex64>,
}

/// Tucker model with core `G (R1 x R2 x R3)` and factors `A (M1 x R1)`,
/// `B (M2 x R2)`, `C (P x R3)`.
#[derive(Debug, Clone)]
pub struct TuckerModel {
    pub g: DenseTensor,
    pub a: DMatrix<Complex64>,
    pub b: DMatrix<Complex64>,
    pub c: DMatrix<Complex64>,
}

/// Any of the four model families.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Gmp(GmpModel),
    Cp(CpModel),
    Tt(TtModel),
    Tucker(TuckerModel),
}

fn check_design(dims: (usize, usize, usize), design: &DesignSet) -> Result<()> {
    let (m1, m2, p) = dims;
    if design.meta.m1 != m1 || design.meta.m2 != m2 || design.meta.p != p {
        return Err(Error::ShapeMismatch(format!(
            "model dims ({}, {}, {}) vs design dims ({}, {}, {})",
            m1, m2, p, design.meta.m1, design.meta.m2, design.meta.p
        )));
    }
    Ok(())
}

impl GmpModel {
    pub fn new(s: DenseTensor) -> Result<Self> {
        if s.order() != 3 {
            return Err(Error::InvalidArgument(format!(
                "GMP coefficient tensor must have order 3, got {}",
                s.order()
            )));
        }
        Ok(Self { s })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.s.shape()[0], self.s.shape()[1], self.s.shape()[2])
    }

    /// `y(n) = sum_{i,j,p} S[i,j,p] h[n,i] m[n,j,p]`, evaluated as
    /// `(M S_(1)^T) .* H` summed over the delay axis.
    pub fn predict(&self, design: &DesignSet) -> Result<Vec<Complex64>> {
        check_design(self.dims(), design)?;
        let s1 = self.s.unfold(0)?;
        let weighted = design.m_unfolded() * s1.transpose();
        let h = design.h_matrix();
        let n = design.len();
        let mut y = vec![Complex64::default(); n];
        for i in 0..self.dims().0 {
            let wc = weighted.column(i);
            let hc = h.column(i);
            for t in 0..n {
                y[t] += hc[t] * wc[t];
            }
        }
        Ok(y)
    }
}

impl CpModel {
    pub fn new(a: DMatrix<Complex64>, b: DMatrix<Complex64>, c: DMatrix<Complex64>) -> Result<Self> {
        let r = a.ncols();
        if b.ncols() != r || c.ncols() != r {
            return Err(Error::ShapeMismatch(format!(
                "CP factors disagree on rank: {} / {} / {}",
                r,
                b.ncols(),
                c.ncols()
            )));
        }
        if r == 0 {
            return Err(Error::InvalidArgument("CP rank must be >= 1".into()));
        }
        Ok(Self { a, b, c })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.a.nrows(), self.b.nrows(), self.c.nrows())
    }

    pub fn rank(&self) -> usize {
        self.a.ncols()
    }

    /// `y = sum_r (H a_r) .* (M (c_r kron b_r))`.
    pub fn predict(&self, design: &DesignSet) -> Result<Vec<Complex64>> {
        check_design(self.dims(), design)?;
        let h = design.h_matrix();
        let m = design.m_unfolded();
        let n = design.len();
        let mut y = vec![Complex64::default(); n];
        for r in 0..self.rank() {
            let ha = &h * self.a.column(r);
            let w = kron_vec(self.c.column(r).as_slice(), self.b.column(r).as_slice());
            let mw = &m * DMatrix::from_column_slice(w.len(), 1, &w);
            for t in 0..n {
                y[t] += ha[t] * mw[(t, 0)];
            }
        }
        Ok(y)
    }

    /// Materializes `S[i,j,p] = sum_r A[i,r] B[j,r] C[p,r]`.
    pub fn expand_to_gmp(&self) -> Result<GmpModel> {
        let (m1, m2, p) = self.dims();
        let mut s = DenseTensor::zeros(vec![m1, m2, p])?;
        for r in 0..self.rank() {
            let outer = DenseTensor::outer(&[
                self.a.column(r).as_slice(),
                self.b.column(r).as_slice(),
                self.c.column(r).as_slice(),
            ])?;
            for (dst, src) in s.data_mut().iter_mut().zip(outer.data()) {
                *dst += src;
            }
        }
        GmpModel::new(s)
    }
}

impl TtModel {
    pub fn new(a: DMatrix<Complex64>, b: DenseTensor, c: DMatrix<Complex64>) -> Result<Self> {
        if b.order() != 3 {
            return Err(Error::InvalidArgument(
                "tensor-train core must have order 3".into(),
            ));
        }
        if a.ncols() != b.shape()[0] || c.nrows() != b.shape()[2] {
            return Err(Error::ShapeMismatch(format!(
                "tensor-train ranks disagree: A has {}, core is {:?}, C has {}",
                a.ncols(),
                b.shape(),
                c.nrows()
            )));
        }
        if a.ncols() == 0 || c.nrows() == 0 {
            return Err(Error::InvalidArgument("tensor-train ranks must be >= 1".into()));
        }
        Ok(Self { a, b, c })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.a.nrows(), self.b.shape()[1], self.c.ncols())
    }

    pub fn ranks(&self) -> (usize, usize) {
        (self.a.ncols(), self.c.nrows())
    }

    /// `y = sum_{r1} (H a_{r1}) .* (M sum_{r2} (c_{r2,:} kron B[r1,:,r2]))`.
    pub fn predict(&self, design: &DesignSet) -> Result<Vec<Complex64>> {
        check_design(self.dims(), design)?;
        let (r1n, r2n) = self.ranks();
        let (_, m2, p) = self.dims();
        let h = design.h_matrix();
        let m = design.m_unfolded();
        let n = design.len();
        let mut y = vec![Complex64::default(); n];
        for r1 in 0..r1n {
            let mut w = vec![Complex64::default(); m2 * p];
            for r2 in 0..r2n {
                let b_fiber: Vec<Complex64> = (0..m2)
                    .map(|j| self.b.data()[r1 + j * r1n + r2 * r1n * m2])
                    .collect();
                let c_row: Vec<Complex64> = (0..p).map(|q| self.c[(r2, q)]).collect();
                for (dst, src) in w.iter_mut().zip(kron_vec(&c_row, &b_fiber)) {
                    *dst += src;
                }
            }
            let ha = &h * self.a.column(r1);
            let mw = &m * DMatrix::from_column_slice(w.len(), 1, &w);
            for t in 0..n {
                y[t] += ha[t] * mw[(t, 0)];
            }
        }
        Ok(y)
    }

    /// Materializes `S[i,j,p] = sum_{r1,r2} A[i,r1] B[r1,j,r2] C[r2,p]`.
    pub fn expand_to_gmp(&self) -> Result<GmpModel> {
        let (m1, m2, p) = self.dims();
        let (r1n, r2n) = self.ranks();
        let s = DenseTensor::from_fn(vec![m1, m2, p], |idx| {
            let (i, j, q) = (idx[0], idx[1], idx[2]);
            let mut acc = Complex64::default();
            for r1 in 0..r1n {
                for r2 in 0..r2n {
                    acc += self.a[(i, r1)]
                        * self.b.data()[r1 + j * r1n + r2 * r1n * m2]
                        * self.c[(r2, q)];
                }
            }
            acc
        })?;
        GmpModel::new(s)
    }
}

impl TuckerModel {
    pub fn new(
        g: DenseTensor,
        a: DMatrix<Complex64>,
        b: DMatrix<Complex64>,
        c: DMatrix<Complex64>,
    ) -> Result<Self> {
        if g.order() != 3 {
            return Err(Error::InvalidArgument("Tucker core must have order 3".into()));
        }
        if a.ncols() != g.shape()[0] || b.ncols() != g.shape()[1] || c.ncols() != g.shape()[2] {
            return Err(Error::ShapeMismatch(format!(
                "Tucker ranks disagree: core {:?} vs factors {}/{}/{}",
                g.shape(),
                a.ncols(),
                b.ncols(),
                c.ncols()
            )));
        }
        Ok(Self { g, a, b, c })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.a.nrows(), self.b.nrows(), self.c.nrows())
    }

    pub fn ranks(&self) -> (usize, usize, usize) {
        (self.g.shape()[0], self.g.shape()[1], self.g.shape()[2])
    }

    /// `y = sum_{r1} (H a_{r1}) .* (M w_{r1})` with
    /// `w_{r1} = sum_{r2,r3} G[r1,r2,r3] (c_{r3} kron b_{r2})`.
    pub fn predict(&self, design: &DesignSet) -> Result<Vec<Complex64>> {
        check_design(self.dims(), design)?;
        let (r1n, r2n, r3n) = self.ranks();
        let (_, m2, p) = self.dims();
        let h = design.h_matrix();
        let m = design.m_unfolded();
        let n = design.len();
        let mut y = vec![Complex64::default(); n];
        for r1 in 0..r1n {
            let mut w = vec![Complex64::default(); m2 * p];
            for r3 in 0..r3n {
                for r2 in 0..r2n {
                    let gv = self.g.data()[r1 + r2 * r1n + r3 * r1n * r2n];
                    for q in 0..p {
                        let cq = self.c[(q, r3)] * gv;
                        for j in 0..m2 {
                            w[j + q * m2] += cq * self.b[(j, r2)];
                        }
                    }
                }
            }
            let ha = &h * self.a.column(r1);
            let mw = &m * DMatrix::from_column_slice(w.len(), 1, &w);
            for t in 0..n {
                y[t] += ha[t] * mw[(t, 0)];
            }
        }
        Ok(y)
    }

    /// Materializes `S = G x_1 A x_2 B x_3 C`.
    pub fn expand_to_gmp(&self) -> Result<GmpModel> {
        let s = self
            .g
            .mode_matrix_product(0, &self.a)?
            .mode_matrix_product(1, &self.b)?
            .mode_matrix_product(2, &self.c)?;
        GmpModel::new(s)
    }
}

impl AnyModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            AnyModel::Gmp(_) => ModelKind::Gmp,
            AnyModel::Cp(_) => ModelKind::Cp,
            AnyModel::Tt(_) => ModelKind::Tt,
            AnyModel::Tucker(_) => ModelKind::Tucker,
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        match self {
            AnyModel::Gmp(m) => m.dims(),
            AnyModel::Cp(m) => m.dims(),
            AnyModel::Tt(m) => m.dims(),
            AnyModel::Tucker(m) => m.dims(),
        }
    }

    pub fn ranks(&self) -> Vec<usize> {
        match self {
            AnyModel::Gmp(_) => vec![],
            AnyModel::Cp(m) => vec![m.rank()],
            AnyModel::Tt(m) => {
                let (r1, r2) = m.ranks();
                vec![r1, r2]
            }
            AnyModel::Tucker(m) => {
                let (r1, r2, r3) = m.ranks();
                vec![r1, r2, r3]
            }
        }
    }

    pub fn predict(&self, design: &DesignSet) -> Result<Vec<Complex64>> {
        match self {
            AnyModel::Gmp(m) => m.predict(design),
            AnyModel::Cp(m) => m.predict(design),
            AnyModel::Tt(m) => m.predict(design),
            AnyModel::Tucker(m) => m.predict(design),
        }
    }

    pub fn expand_to_gmp(&self) -> Result<GmpModel> {
        match self {
            AnyModel::Gmp(m) => Ok(m.clone()),
            AnyModel::Cp(m) => m.expand_to_gmp(),
            AnyModel::Tt(m) => m.expand_to_gmp(),
            AnyModel::Tucker(m) => m.expand_to_gmp(),
        }
    }

    pub fn param_count(&self) -> u64 {
        let (m1, m2, p) = self.dims();
        param_count(self.kind(), (m1, m2, p), &self.ranks()).expect("dims from a valid model")
    }

    pub fn flop_count(&self) -> u64 {
        let (m1, m2, p) = self.dims();
        flop_count(self.kind(), (m1, m2, p), &self.ranks()).expect("dims from a valid model")
    }
}

fn check_ranks(kind: ModelKind, ranks: &[usize]) -> Result<()> {
    if ranks.len() != kind.rank_count() {
        return Err(Error::InvalidArgument(format!(
            "{} expects {} rank value(s), got {}",
            kind.as_str(),
            kind.rank_count(),
            ranks.len()
        )));
    }
    if ranks.iter().any(|&r| r == 0) {
        return Err(Error::InvalidArgument("ranks must be >= 1".into()));
    }
    Ok(())
}

/// Number of stored coefficients for a family at the given dimensions.
pub fn param_count(kind: ModelKind, dims: (usize, usize, usize), ranks: &[usize]) -> Result<u64> {
    check_ranks(kind, ranks)?;
    let (m1, m2, p) = (dims.0 as u64, dims.1 as u64, dims.2 as u64);
    Ok(match kind {
        ModelKind::Gmp => m1 * m2 * p,
        ModelKind::Cp => ranks[0] as u64 * (m1 + m2 + p),
        ModelKind::Tt => {
            let (r1, r2) = (ranks[0] as u64, ranks[1] as u64);
            r1 * m1 + r2 * p + r1 * r2 * m2
        }
        ModelKind::Tucker => {
            let (r1, r2, r3) = (ranks[0] as u64, ranks[1] as u64, ranks[2] as u64);
            r1 * r2 * r3 + m1 * r1 + m2 * r2 + p * r3
        }
    })
}

/// Real floating-point operations per predicted output sample.
///
/// Counts one complex multiply as 6 real operations and one complex add as 2,
/// with envelope powers built by repeated real multiplication.
pub fn flop_count(kind: ModelKind, dims: (usize, usize, usize), ranks: &[usize]) -> Result<u64> {
    check_ranks(kind, ranks)?;
    let (m1, m2, p) = (dims.0 as u64, dims.1 as u64, dims.2 as u64);
    Ok(match kind {
        ModelKind::Gmp => 8 * m1 * m2 * p + 2 * (p - 1) * (m1 + m2 - 1) + 8,
        ModelKind::Cp => {
            let r = ranks[0] as u64;
            r * (10 * m2 * p + 8 * m1 + 4) + p + 6
        }
        ModelKind::Tt => {
            let (r1, r2) = (ranks[0] as u64, ranks[1] as u64);
            r1 * (10 * r2 * m2 * p + 8 * m1 + 4) + p + 6
        }
        ModelKind::Tucker => {
            let (r1, r2, r3) = (ranks[0] as u64, ranks[1] as u64, ranks[2] as u64);
            r1 * (r2 * r3 * (10 * m2 * p + 6) + 8 * m1 + 4) + p + 6
        }
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    kind: String,
    m1: usize,
    m2: usize,
    p: usize,
    ranks: Vec<usize>,
    /// Factor name -> base64 of the binary tensor container.
    factors: BTreeMap<String, String>,
}

fn encode_tensor(t: &DenseTensor) -> String {
    base64::engine::general_purpose::STANDARD.encode(t.to_bytes())
}

fn encode_matrix(m: &DMatrix<Complex64>) -> String {
    encode_tensor(&DenseTensor::from_matrix(m))
}

fn decode_tensor(file: &ModelFile, name: &str) -> Result<DenseTensor> {
    let b64 = file
        .factors
        .get(name)
        .ok_or_else(|| Error::Format(format!("model file is missing factor {name:?}")))?;
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(b64)
        .map_err(|e| Error::Format(format!("factor {name:?}: {e}")))?;
    DenseTensor::from_bytes(&bytes)
}

fn decode_matrix(file: &ModelFile, name: &str) -> Result<DMatrix<Complex64>> {
    decode_tensor(file, name)?.to_matrix()
}

/// Serializes a model to a structured text document. Factor payloads embed
/// the binary tensor container, so a save/load cycle is bit-exact.
pub fn save_model(path: &Path, model: &AnyModel) -> Result<()> {
    let (m1, m2, p) = model.dims();
    let mut factors = BTreeMap::new();
    match model {
        AnyModel::Gmp(m) => {
            factors.insert("s".to_string(), encode_tensor(&m.s));
        }
        AnyModel::Cp(m) => {
            factors.insert("a".to_string(), encode_matrix(&m.a));
            factors.insert("b".to_string(), encode_matrix(&m.b));
            factors.insert("c".to_string(), encode_matrix(&m.c));
        }
        AnyModel::Tt(m) => {
            factors.insert("a".to_string(), encode_matrix(&m.a));
            factors.insert("b".to_string(), encode_tensor(&m.b));
            factors.insert("c".to_string(), encode_matrix(&m.c));
        }
        AnyModel::Tucker(m) => {
            factors.insert("g".to_string(), encode_tensor(&m.g));
            factors.insert("a".to_string(), encode_matrix(&m.a));
            factors.insert("b".to_string(), encode_matrix(&m.b));
            factors.insert("c".to_string(), encode_matrix(&m.c));
        }
    }
    let file = ModelFile {
        kind: model.kind().as_str().to_string(),
        m1,
        m2,
        p,
        ranks: model.ranks(),
        factors,
    };
    let body = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Format(format!("model serialization: {e}")))?;
    std::fs::write(path, body)?;
    Ok(())
}

/// Loads a model saved by [`save_model`], validating every shape.
pub fn load_model(path: &Path) -> Result<AnyModel> {
    let raw = std::fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&raw)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let kind = ModelKind::parse(&file.kind)?;
    check_ranks(kind, &file.ranks)?;
    let dims_err = |what: &str| Error::Format(format!("factor {what} does not match header dims"));
    let model = match kind {
        ModelKind::Gmp => {
            let s = decode_tensor(&file, "s")?;
            if s.shape() != [file.m1, file.m2, file.p] {
                return Err(dims_err("s"));
            }
            AnyModel::Gmp(GmpModel::new(s)?)
        }
        ModelKind::Cp => {
            let a = decode_matrix(&file, "a")?;
            let b = decode_matrix(&file, "b")?;
            let c = decode_matrix(&file, "c")?;
            let r = file.ranks[0];
            if a.shape() != (file.m1, r) || b.shape() != (file.m2, r) || c.shape() != (file.p, r) {
                return Err(dims_err("a/b/c"));
            }
            AnyModel::Cp(CpModel::new(a, b, c)?)
        }
        ModelKind::Tt => {
            let a = decode_matrix(&file, "a")?;
            let b = decode_tensor(&file, "b")?;
            let c = decode_matrix(&file, "c")?;
            let (r1, r2) = (file.ranks[0], file.ranks[1]);
            if a.shape() != (file.m1, r1)
                || b.shape() != [r1, file.m2, r2]
                || c.shape() != (r2, file.p)
            {
                return Err(dims_err("a/b/c"));
            }
            AnyModel::Tt(TtModel::new(a, b, c)?)
        }
        ModelKind::Tucker => {
            let g = decode_tensor(&file, "g")?;
            let a = decode_matrix(&file, "a")?;
            let b = decode_matrix(&file, "b")?;
            let c = decode_matrix(&file, "c")?;
            let (r1, r2, r3) = (file.ranks[0], file.ranks[1], file.ranks[2]);
            if g.shape() != [r1, r2, r3]
                || a.shape() != (file.m1, r1)
                || b.shape() != (file.m2, r2)
                || c.shape() != (file.p, r3)
            {
                return Err(dims_err("g/a/b/c"));
            }
            AnyModel::Tucker(TuckerModel::new(g, a, b, c)?)
        }
    };
    Ok(model)
}
