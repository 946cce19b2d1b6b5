//! Randomized sequentially-truncated higher-order SVD and the mode-{2,3}
//! projection pair for envelope tensors.
//!
//! The truncation processes one mode at a time: it sketches the current
//! unfolding with a Gaussian matrix, applies a few power iterations as
//! alternating products with the unfolding and its adjoint (the Gram matrix
//! is never formed, since the leading mode can be very long), orthonormalizes
//! the sketch by QR, keeps the leading columns as the mode factor, and
//! immediately shrinks the working tensor with that factor before moving on.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use crate::rng::{self, complex_standard_normal};
use crate::tensor::DenseTensor;
use crate::{Error, Result};

/// Orthonormal mode-2/mode-3 factors for an `N x M2 x P` envelope tensor,
/// together with the projected core and the reconstruction error.
#[derive(Debug, Clone)]
pub struct ProjectionPair {
    /// `M2 x M2~` orthonormal columns for the delay-envelope mode.
    pub u2: DMatrix<f64>,
    /// `P x P~` orthonormal columns for the power mode.
    pub u3: DMatrix<f64>,
    /// Projected tensor `m x_2 u2^T x_3 u3^T`, shape `N x M2~ x P~`.
    pub core: DenseTensor,
    /// `|| m - core x_2 u2 x_3 u3 ||_F`, recomputed from the factors.
    pub approx_error: f64,
    /// Projection targets `(M2~, P~)`.
    pub targets: (usize, usize),
    /// Seed the sketches were derived from.
    pub seed: u64,
}

fn orthonormality_defect(q: &DMatrix<Complex64>) -> f64 {
    let gram = q.ad_mul(q);
    let mut worst = 0.0f64;
    for r in 0..gram.nrows() {
        for c in 0..gram.ncols() {
            let want = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((gram[(r, c)] - Complex64::new(want, 0.0)).norm());
        }
    }
    worst
}

fn orthonormality_defect_real(q: &DMatrix<f64>) -> f64 {
    let gram = q.transpose() * q;
    let mut worst = 0.0f64;
    for r in 0..gram.nrows() {
        for c in 0..gram.ncols() {
            let want = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((gram[(r, c)] - want).abs());
        }
    }
    worst
}

/// Range finder for one mode: sketch, power iterations, QR, then a rotation
/// by the left singular vectors of the projected unfolding so the kept
/// columns are ordered by captured energy. Without that rotation the QR
/// basis is ordered by the sketch's arbitrary column order and truncating
/// it would discard dominant directions.
fn mode_factor_complex(
    unfolding: &DMatrix<Complex64>,
    rank: usize,
    oversample: usize,
    power: usize,
    seed: u64,
) -> Result<DMatrix<Complex64>> {
    let ik = unfolding.nrows();
    let sketch_cols = (rank + oversample).min(ik);
    let mut rng = rng::stream(seed, "sketch");
    let mut c = DMatrix::from_fn(ik, sketch_cols, |_, _| complex_standard_normal(&mut rng));
    for _ in 0..power {
        let t = unfolding.ad_mul(&c);
        c = unfolding * t;
    }
    let mut q = c.qr().q();
    if orthonormality_defect(&q) > 1e-8 {
        q = q.qr().q();
    }
    let projected = q.ad_mul(unfolding);
    let svd = projected.svd(true, false);
    let u = svd.u.ok_or_else(|| Error::Numeric("sketch SVD lost its left factor".into()))?;
    let keep = rank.min(u.ncols());
    let factor = &q * u.columns(0, keep);
    if keep == rank {
        return Ok(factor);
    }
    // Fewer data directions than requested columns: complete the basis
    // inside the sketch range (the extra directions carry no energy).
    let mut padded = DMatrix::zeros(ik, factor.ncols() + q.ncols());
    padded.columns_mut(0, factor.ncols()).copy_from(&factor);
    padded
        .columns_mut(factor.ncols(), q.ncols())
        .copy_from(&q);
    Ok(padded.qr().q().columns(0, rank).into_owned())
}

#[allow(clippy::needless_range_loop)]
fn mode_factor_real(
    unfolding: &DMatrix<f64>,
    rank: usize,
    oversample: usize,
    power: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let ik = unfolding.nrows();
    let sketch_cols = (rank + oversample).min(ik);
    let mut rng = rng::stream(seed, "sketch");
    let mut c = DMatrix::from_fn(ik, sketch_cols, |_, _| {
        let v: f64 = StandardNormal.sample(&mut rng);
        v
    });
    for _ in 0..power {
        let t = unfolding.transpose() * &c;
        c = unfolding * t;
    }
    let mut q = c.qr().q();
    if orthonormality_defect_real(&q) > 1e-8 {
        q = q.qr().q();
    }
    let projected = q.transpose() * unfolding;
    let svd = projected.svd(true, false);
    let u = svd.u.ok_or_else(|| Error::Numeric("sketch SVD lost its left factor".into()))?;
    let keep = rank.min(u.ncols());
    let factor = &q * u.columns(0, keep);
    if keep == rank {
        return Ok(factor);
    }
    let mut padded = DMatrix::zeros(ik, factor.ncols() + q.ncols());
    padded.columns_mut(0, factor.ncols()).copy_from(&factor);
    padded
        .columns_mut(factor.ncols(), q.ncols())
        .copy_from(&q);
    Ok(padded.qr().q().columns(0, rank).into_owned())
}

fn validate_common(x: &DenseTensor, oversample: usize, power: usize) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::InvalidArgument(
            "input tensor contains non-finite entries".into(),
        ));
    }
    let _ = oversample;
    if power == 0 {
        return Err(Error::InvalidArgument("power must be >= 1".into()));
    }
    Ok(())
}

/// Randomized sequentially-truncated HOSVD.
///
/// Returns the truncated core of shape `ranks` and one orthonormal factor per
/// mode, so that `core x_1 q1 x_2 q2 ... x_d qd` approximates `x`. Each mode
/// derives its own sketch stream from `seed`, so runs are reproducible and
/// independent of changes elsewhere.
pub fn randomized_sthosvd(
    x: &DenseTensor,
    ranks: &[usize],
    oversample: usize,
    power: usize,
    seed: u64,
) -> Result<(DenseTensor, Vec<DMatrix<Complex64>>)> {
    validate_common(x, oversample, power)?;
    if ranks.len() != x.order() {
        return Err(Error::InvalidArgument(format!(
            "{} target ranks for an order-{} tensor",
            ranks.len(),
            x.order()
        )));
    }
    for (k, (&r, &d)) in ranks.iter().zip(x.shape()).enumerate() {
        if r == 0 || r > d {
            return Err(Error::InvalidArgument(format!(
                "target rank {} out of range for mode {} of size {}",
                r, k, d
            )));
        }
    }
    let mut current = x.clone();
    let mut factors = Vec::with_capacity(x.order());
    for (mode, &rank) in ranks.iter().enumerate() {
        let unfolding = current.unfold(mode)?;
        let factor = mode_factor_complex(
            &unfolding,
            rank,
            oversample,
            power,
            rng::derive_seed(seed, &format!("mode-{mode}")),
        )?;
        current = current.mode_matrix_product(mode, &factor.adjoint())?;
        factors.push(factor);
    }
    Ok((current, factors))
}

/// Reconstructs `core x_1 q1 x_2 q2 ... x_d qd`.
pub fn reconstruct(core: &DenseTensor, factors: &[DMatrix<Complex64>]) -> Result<DenseTensor> {
    if factors.len() != core.order() {
        return Err(Error::InvalidArgument(format!(
            "{} factors for an order-{} core",
            factors.len(),
            core.order()
        )));
    }
    let mut out = core.clone();
    for (mode, q) in factors.iter().enumerate() {
        out = out.mode_matrix_product(mode, q)?;
    }
    Ok(out)
}

/// Randomized truncation of modes 2 and 3 of a real-valued `N x M2 x P`
/// envelope tensor. Mode 1 (time) is left untouched.
///
/// The input must be real up to rounding; the factors come out as real
/// orthonormal matrices. Each of the two modes derives its own sub-seed from
/// `seed`.
pub fn project_modes_23(
    m: &DenseTensor,
    m2_target: usize,
    p_target: usize,
    oversample: usize,
    power: usize,
    seed: u64,
) -> Result<ProjectionPair> {
    validate_common(m, oversample, power)?;
    if m.order() != 3 {
        return Err(Error::InvalidArgument(format!(
            "envelope tensor must have order 3, got {}",
            m.order()
        )));
    }
    let (m2, p) = (m.shape()[1], m.shape()[2]);
    if m2_target == 0 || m2_target > m2 {
        return Err(Error::InvalidArgument(format!(
            "mode-2 target {} out of range 1..={}",
            m2_target, m2
        )));
    }
    if p_target == 0 || p_target > p {
        return Err(Error::InvalidArgument(format!(
            "mode-3 target {} out of range 1..={}",
            p_target, p
        )));
    }
    let scale = m.fro_norm().max(1.0);
    let max_im = m
        .data()
        .iter()
        .map(|z| z.im.abs())
        .fold(0.0f64, f64::max);
    if max_im > 1e-9 * scale {
        return Err(Error::InvalidArgument(
            "envelope tensor must be real-valued".into(),
        ));
    }

    let mut current = m.clone();
    let mut real_factors: Vec<DMatrix<f64>> = Vec::with_capacity(2);
    for (mode, target) in [(1usize, m2_target), (2usize, p_target)] {
        let unfolding = current.unfold(mode)?.map(|z| z.re);
        let factor = mode_factor_real(
            &unfolding,
            target,
            oversample,
            power,
            rng::derive_seed(seed, &format!("proj-mode-{mode}")),
        )?;
        current = current.mode_matrix_product(mode, &promote(&factor.transpose()))?;
        real_factors.push(factor);
    }
    let u3 = real_factors.pop().expect("two factors");
    let u2 = real_factors.pop().expect("two factors");

    let rebuilt = current
        .mode_matrix_product(1, &promote(&u2))?
        .mode_matrix_product(2, &promote(&u3))?;
    let mut diff2 = 0.0f64;
    for (a, b) in m.data().iter().zip(rebuilt.data()) {
        diff2 += (a - b).norm_sqr();
    }

    Ok(ProjectionPair {
        u2,
        u3,
        core: current,
        approx_error: diff2.sqrt(),
        targets: (m2_target, p_target),
        seed,
    })
}

/// Promotes a real matrix to complex entries.
pub fn promote(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

impl ProjectionPair {
    const MAGIC: &'static [u8; 8] = b"GMPPROJ1";

    /// Serializes the pair: magic, targets, seed, approximation error, then
    /// the three tensors (`u2`, `u3`, core) as binary containers.
    pub fn write_binary<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(Self::MAGIC)?;
        w.write_all(&(self.targets.0 as u64).to_le_bytes())?;
        w.write_all(&(self.targets.1 as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.approx_error.to_le_bytes())?;
        DenseTensor::from_matrix(&promote(&self.u2)).write_binary(w)?;
        DenseTensor::from_matrix(&promote(&self.u3)).write_binary(w)?;
        self.core.write_binary(w)
    }

    pub fn read_binary<R: std::io::Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::Format("bad projection container magic".into()));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let t2 = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let t3 = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let approx_error = f64::from_le_bytes(b8);
        let u2t = DenseTensor::read_binary(r)?.to_matrix()?.map(|z| z.re);
        let u3t = DenseTensor::read_binary(r)?.to_matrix()?.map(|z| z.re);
        let core = DenseTensor::read_binary(r)?;
        Ok(Self {
            u2: u2t,
            u3: u3t,
            core,
            approx_error,
            targets: (t2, t3),
            seed,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_binary(&mut f)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_binary(&mut f)
    }
}
