//! Model identification.
//!
//! * [`ridge_ls`]: full coefficient tensor by ridge regression through the
//!   conjugate-transpose normal equations.
//! * [`fista_lasso`] / [`pgd_lasso`]: sparse coefficient tensor by proximal
//!   gradient descent with complex soft-thresholding, with and without
//!   momentum.
//! * [`als_cp`] / [`als_tt`] / [`als_tucker`]: alternating least squares for
//!   the compressed families, one regularized normal-equation solve per
//!   factor block.
//! * [`rp_als`]: the same sweeps run on a design whose envelope tensor has
//!   been compressed along modes 2 and 3 by randomized orthonormal
//!   projections, with factors back-substituted to the original dimensions.
//! * [`check_projection_bound`]: numerical check of the error bound that
//!   justifies the projected solver.

use std::path::Path;
use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;

use crate::dataset::DesignSet;
use crate::decomp::{project_modes_23, promote, ProjectionPair};
use crate::metrics::nmse_power;
use crate::models::{AnyModel, CpModel, GmpModel, ModelKind, TtModel, TuckerModel};
use crate::rng::{complex_standard_normal, stream};
use crate::tensor::{kron_vec, DenseTensor};
use crate::{Error, Result};

/// Settings shared by every solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Ridge / soft-threshold penalty weight.
    pub gamma: f64,
    /// Sweeps (alternating solvers) or gradient steps (proximal solvers).
    pub iterations: usize,
    /// Root seed for initial factors, power iteration, and sketches.
    pub seed: u64,
    /// Scale of the random complex-Gaussian initial factors.
    pub init_scale: f64,
    /// Record objective and training-NMSE traces (costs one extra
    /// matrix-vector product per proximal step).
    pub record_objective: bool,
    /// Sketch oversampling forwarded to the mode-2/3 projection.
    pub oversample: usize,
    /// Sketch power-iteration passes forwarded to the projection.
    pub power: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gamma: 0.0,
            iterations: 10,
            seed: 0,
            init_scale: 0.1,
            record_objective: true,
            oversample: 5,
            power: 2,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::InvalidArgument("gamma must be finite and >= 0".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be >= 1".into()));
        }
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return Err(Error::InvalidArgument("init_scale must be > 0".into()));
        }
        Ok(())
    }
}

/// Convergence record of one identification run. For the alternating
/// solvers each trace entry covers one factor-block solve, so a run of `L`
/// sweeps over a family with `k` blocks produces `L·k` entries; the
/// proximal solvers produce one entry per gradient step.
#[derive(Debug, Clone, Default)]
pub struct FitReport {
    /// Regularized objective after each step: data-fit power plus the
    /// penalty terms of all current factors.
    pub objective_trace: Vec<f64>,
    /// Training NMSE in dB after each step.
    pub train_nmse_trace: Vec<f64>,
    /// Wall time of each step in seconds (always recorded).
    pub iter_seconds: Vec<f64>,
    /// Total wall time of the run.
    pub wall_seconds: f64,
    /// Number of rank-deficient solves that fell back to the minimum-norm
    /// solution.
    pub min_norm_fallbacks: usize,
    /// Squared spectral norm of the design matrix (proximal solvers only).
    pub spectral_norm_sq: Option<f64>,
}

impl FitReport {
    /// Writes the traces as CSV with columns
    /// `iteration,objective,nmse_db,elapsed_ms`. Objective and NMSE cells
    /// are empty when trace recording was disabled.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("iteration,objective,nmse_db,elapsed_ms\n");
        for (k, secs) in self.iter_seconds.iter().enumerate() {
            let objective = self
                .objective_trace
                .get(k)
                .map(|v| v.to_string())
                .unwrap_or_default();
            let nmse_db = self
                .train_nmse_trace
                .get(k)
                .map(|v| v.to_string())
                .unwrap_or_default();
            out.push_str(&format!("{k},{objective},{nmse_db},{}\n", secs * 1e3));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Result of one regularized least-squares solve.
#[derive(Debug, Clone)]
pub struct RidgeOutcome {
    pub solution: DVector<Complex64>,
    /// True when the normal equations were singular and the minimum-norm
    /// solution was returned instead.
    pub min_norm_fallback: bool,
}

fn svd_min_norm(x: &DMatrix<Complex64>, y: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let sol = svd
        .solve(y, smax * 1e-10)
        .map_err(|e| Error::Numeric(format!("minimum-norm solve: {e}")))?;
    Ok(DVector::from_column_slice(sol.as_slice()))
}

/// Solves `min ‖Xs − y‖² + γ‖s‖²` through the normal equations
/// `(XᴴX + γI)s = Xᴴy` with a Cholesky factorization, refining iteratively
/// until the normal-equation residual is at most `1e−8·‖Xᴴy‖`. A singular
/// system with `γ = 0` falls back to the minimum-norm least-squares
/// solution and flags the outcome.
pub fn ridge_solve(
    x: &DMatrix<Complex64>,
    y: &DVector<Complex64>,
    gamma: f64,
) -> Result<RidgeOutcome> {
    if x.nrows() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "design has {} rows, target has {}",
            x.nrows(),
            y.len()
        )));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidArgument("gamma must be finite and >= 0".into()));
    }
    let k = x.ncols();
    let xh = x.adjoint();
    let mut gram = &xh * x;
    for i in 0..k {
        gram[(i, i)] += Complex64::new(gamma, 0.0);
    }
    let b = &xh * y;
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Ok(RidgeOutcome {
            solution: DVector::zeros(k),
            min_norm_fallback: false,
        });
    }
    let tol = 1e-8 * b_norm;
    if let Some(chol) = Cholesky::new(gram.clone()) {
        let mut s = chol.solve(&b);
        for _ in 0..12 {
            let r = &b - &gram * &s;
            if r.norm() <= tol {
                return Ok(RidgeOutcome {
                    solution: s,
                    min_norm_fallback: false,
                });
            }
            s += chol.solve(&r);
        }
        let r = &b - &gram * &s;
        if r.norm() <= tol {
            return Ok(RidgeOutcome {
                solution: s,
                min_norm_fallback: false,
            });
        }
        if gamma > 0.0 {
            return Err(Error::Numeric(
                "normal-equation refinement stalled on a positive-definite system".into(),
            ));
        }
    } else if gamma > 0.0 {
        return Err(Error::Numeric(
            "normal matrix lost positive definiteness despite gamma > 0".into(),
        ));
    }
    Ok(RidgeOutcome {
        solution: svd_min_norm(x, y)?,
        min_norm_fallback: true,
    })
}

fn solve_block(
    x: &DMatrix<Complex64>,
    y: &DVector<Complex64>,
    gamma: f64,
    fallbacks: &mut usize,
) -> Result<DVector<Complex64>> {
    let out = ridge_solve(x, y, gamma)?;
    if out.min_norm_fallback {
        *fallbacks += 1;
    }
    Ok(out.solution)
}

/// Fits the full coefficient tensor by ridge regression on the unfolded
/// design.
pub fn ridge_ls(design: &DesignSet, cfg: &SolverConfig) -> Result<(GmpModel, FitReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let x = design.unfolded_basis();
    let y = design.y_vector();
    let out = ridge_solve(&x, &y, cfg.gamma)?;
    let meta = &design.meta;
    let s = DenseTensor::new(
        vec![meta.m1, meta.m2, meta.p],
        out.solution.iter().copied().collect(),
    )?;
    let mut report = FitReport {
        min_norm_fallbacks: out.min_norm_fallback as usize,
        ..FitReport::default()
    };
    if cfg.record_objective {
        let fit = (&x * &out.solution - &y).norm_squared();
        report
            .objective_trace
            .push(fit + cfg.gamma * out.solution.norm_squared());
        report
            .train_nmse_trace
            .push(nmse_power(fit, y.norm_squared()));
    }
    report.wall_seconds = start.elapsed().as_secs_f64();
    report.iter_seconds.push(report.wall_seconds);
    Ok((GmpModel::new(s)?, report))
}

/// Largest squared singular value of `x`, by power iteration on `XᴴX` from
/// a seeded random start: at most 200 iterations, stopping once the
/// estimate is stable to a relative 1e−6.
pub fn spectral_norm_sq(x: &DMatrix<Complex64>, seed: u64) -> Result<f64> {
    let mut rng = stream(seed, "power-iteration");
    let mut v = DVector::from_fn(x.ncols(), |_, _| complex_standard_normal(&mut rng));
    let norm = v.norm();
    if norm == 0.0 {
        return Err(Error::Numeric("degenerate power-iteration start".into()));
    }
    v /= Complex64::from(norm);
    let mut estimate = 0.0f64;
    for _ in 0..200 {
        let w = x.adjoint() * (x * &v);
        let w_norm = w.norm();
        if w_norm == 0.0 {
            return Ok(0.0);
        }
        let next = w_norm;
        v = w / Complex64::from(w_norm);
        let done = (next - estimate).abs() <= 1e-6 * next;
        estimate = next;
        if done {
            break;
        }
    }
    Ok(estimate)
}

/// Complex magnitude soft-threshold: components with `|w_i| ≤ level` become
/// exactly zero, the rest shrink toward zero keeping their phase.
fn soft_threshold(w: &mut DVector<Complex64>, level: f64) {
    for v in w.iter_mut() {
        let mag = v.norm();
        if mag <= level {
            *v = Complex64::new(0.0, 0.0);
        } else {
            *v *= 1.0 - level / mag;
        }
    }
}

fn proximal_gmp(
    design: &DesignSet,
    cfg: &SolverConfig,
    momentum: bool,
) -> Result<(GmpModel, FitReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let x = design.unfolded_basis();
    let y = design.y_vector();
    let y_power = y.norm_squared();
    let lambda = spectral_norm_sq(&x, cfg.seed)?;
    if lambda <= 0.0 {
        return Err(Error::Numeric("design matrix has zero spectral norm".into()));
    }
    let alpha = 1.0 / lambda;
    let cols = x.ncols();
    let mut report = FitReport {
        spectral_norm_sq: Some(lambda),
        ..FitReport::default()
    };
    // s_{k-1} and s_{k-2}; both start at zero.
    let mut s_prev: DVector<Complex64> = DVector::zeros(cols);
    let mut s_prev2: DVector<Complex64> = DVector::zeros(cols);
    for k in 1..=cfg.iterations {
        let t0 = Instant::now();
        let z = if momentum {
            // The coefficient is negative for the first two steps; with
            // zero starting iterates that still leaves z_1 = 0.
            let beta = (k as f64 - 2.0) / (k as f64 + 1.0);
            &s_prev + (&s_prev - &s_prev2).map(|v| v * beta)
        } else {
            s_prev.clone()
        };
        let residual = &x * &z - &y;
        let mut w = &z - (x.adjoint() * residual).map(|v| v * alpha);
        soft_threshold(&mut w, alpha * cfg.gamma);
        s_prev2 = std::mem::replace(&mut s_prev, w);
        if cfg.record_objective {
            let fit = (&x * &s_prev - &y).norm_squared();
            let l1: f64 = s_prev.iter().map(|v| v.norm()).sum();
            report.objective_trace.push(fit + 2.0 * cfg.gamma * l1);
            report.train_nmse_trace.push(nmse_power(fit, y_power));
        }
        report.iter_seconds.push(t0.elapsed().as_secs_f64());
    }
    let meta = &design.meta;
    let s = DenseTensor::new(
        vec![meta.m1, meta.m2, meta.p],
        s_prev.iter().copied().collect(),
    )?;
    report.wall_seconds = start.elapsed().as_secs_f64();
    Ok((GmpModel::new(s)?, report))
}

/// Sparse coefficient tensor by accelerated proximal gradient descent. The
/// step size is `1/‖X‖₂²`; each step takes a gradient step from the
/// momentum point and applies the complex soft-threshold at level
/// `α·gamma`, which minimizes `‖y − Xs‖² + 2·gamma·‖s‖₁`.
pub fn fista_lasso(design: &DesignSet, cfg: &SolverConfig) -> Result<(GmpModel, FitReport)> {
    proximal_gmp(design, cfg, true)
}

/// [`fista_lasso`] without the momentum extrapolation.
pub fn pgd_lasso(design: &DesignSet, cfg: &SolverConfig) -> Result<(GmpModel, FitReport)> {
    proximal_gmp(design, cfg, false)
}

fn init_matrix(rows: usize, cols: usize, cfg: &SolverConfig, tag: &str) -> DMatrix<Complex64> {
    let mut rng = stream(cfg.seed, tag);
    let mut m = DMatrix::zeros(rows, cols);
    // Column-major fill so a factor and its tensor-shaped counterpart draw
    // identical values from the same stream.
    for c in 0..cols {
        for r in 0..rows {
            m[(r, c)] = complex_standard_normal(&mut rng) * cfg.init_scale;
        }
    }
    m
}

fn init_tensor(shape: Vec<usize>, cfg: &SolverConfig, tag: &str) -> DenseTensor {
    let mut rng = stream(cfg.seed, tag);
    let len = shape.iter().product();
    let data = (0..len)
        .map(|_| complex_standard_normal(&mut rng) * cfg.init_scale)
        .collect();
    DenseTensor::new(shape, data).expect("shape matches data length")
}

struct TraceState<'a> {
    report: &'a mut FitReport,
    y: &'a DVector<Complex64>,
    y_power: f64,
    gamma: f64,
    record: bool,
}

impl TraceState<'_> {
    /// Records one block solve: the attained fit from the block's own
    /// design matrix (one matrix-vector product, the solve already built
    /// both) plus the penalty over all current factors.
    fn record(
        &mut self,
        block: &DMatrix<Complex64>,
        solution: &DVector<Complex64>,
        penalty_sq_sum: f64,
        t0: Instant,
    ) {
        if self.record {
            let fit = (block * solution - self.y).norm_squared();
            self.report
                .objective_trace
                .push(fit + self.gamma * penalty_sq_sum);
            self.report
                .train_nmse_trace
                .push(nmse_power(fit, self.y_power));
        }
        self.report.iter_seconds.push(t0.elapsed().as_secs_f64());
    }
}

/// `w[:, r] = Mu · (c_r ⊗ b_r)`: the per-column envelope weights of a CP
/// model, one column per rank.
fn cp_envelope_weights(
    mu: &DMatrix<Complex64>,
    b: &DMatrix<Complex64>,
    c: &DMatrix<Complex64>,
) -> DMatrix<Complex64> {
    let rank = b.ncols();
    let mut w = DMatrix::zeros(mu.nrows(), rank);
    for r in 0..rank {
        let k = kron_vec(c.column(r).as_slice(), b.column(r).as_slice());
        w.set_column(r, &(mu * DVector::from_vec(k)));
    }
    w
}

/// `out[:, j] = Σ_q mu[:, j + q·m2] · coeff(q)`: contraction of the
/// envelope columns over the power axis.
fn contract_powers(
    mu: &DMatrix<Complex64>,
    m2: usize,
    p: usize,
    coeff: impl Fn(usize) -> Complex64,
    j: usize,
) -> DVector<Complex64> {
    let mut col = DVector::zeros(mu.nrows());
    for q in 0..p {
        col.axpy(coeff(q), &mu.column(j + q * m2), Complex64::new(1.0, 0.0));
    }
    col
}

/// `out = Σ_j mu[:, j + q·m2] · coeff(j)`: contraction of the envelope
/// columns over the delay axis at a fixed power `q`.
fn contract_delays(
    mu: &DMatrix<Complex64>,
    m2: usize,
    coeff: impl Fn(usize) -> Complex64,
    q: usize,
) -> DVector<Complex64> {
    let mut col = DVector::zeros(mu.nrows());
    for j in 0..m2 {
        col.axpy(coeff(j), &mu.column(j + q * m2), Complex64::new(1.0, 0.0));
    }
    col
}

fn als_cp_from(
    design: &DesignSet,
    mut a: DMatrix<Complex64>,
    mut b: DMatrix<Complex64>,
    mut c: DMatrix<Complex64>,
    cfg: &SolverConfig,
) -> Result<(CpModel, FitReport)> {
    let start = Instant::now();
    let (m1, m2, p) = (design.meta.m1, design.meta.m2, design.meta.p);
    let rank = a.ncols();
    let n = design.len();
    let h = design.h_matrix();
    let mu = design.m_unfolded();
    let y = design.y_vector();
    let mut report = FitReport::default();
    let mut fallbacks = 0usize;
    let mut trace = TraceState {
        y_power: y.norm_squared(),
        y: &y,
        gamma: cfg.gamma,
        record: cfg.record_objective,
        report: &mut report,
    };
    for _ in 0..cfg.iterations {
        // Delay factor A.
        let t0 = Instant::now();
        let w = cp_envelope_weights(&mu, &b, &c);
        let mut block = DMatrix::zeros(n, m1 * rank);
        for r in 0..rank {
            for i in 0..m1 {
                block.set_column(i + r * m1, &h.column(i).component_mul(&w.column(r)));
            }
        }
        let sol = solve_block(&block, &y, cfg.gamma, &mut fallbacks)?;
        a = DMatrix::from_column_slice(m1, rank, sol.as_slice());
        let penalty = a.norm_squared() + b.norm_squared() + c.norm_squared();
        trace.record(&block, &sol, penalty, t0);

        // Envelope-delay factor B.
        let t0 = Instant::now();
        let ha = &h * &a;
        let mut block = DMatrix::zeros(n, m2 * rank);
        for r in 0..rank {
            for j in 0..m2 {
                let col = contract_powers(&mu, m2, p, |q| c[(q, r)], j);
                block.set_column(j + r * m2, &ha.column(r).component_mul(&col));
            }
        }
        let sol = solve_block(&block, &y, cfg.gamma, &mut fallbacks)?;
        b = DMatrix::from_column_slice(m2, rank, sol.as_slice());
        let penalty = a.norm_squared() + b.norm_squared() + c.norm_squared();
        trace.record(&block, &sol, penalty, t0);

        // Envelope-power factor C.
        let t0 = Instant::now();
        let mut block = DMatrix::zeros(n, p * rank);
        for r in 0..rank {
            for q in 0..p {
                let col = contract_delays(&mu, m2, |j| b[(j, r)], q);
                block.set_column(q + r * p, &ha.column(r).component_mul(&col));
            }
        }
        let sol = solve_block(&block, &y, cfg.gamma, &mut fallbacks)?;
        c = DMatrix::from_column_slice(p, rank, sol.as_slice());
        let penalty = a.norm_squared() + b.norm_squared() + c.norm_squared();
        trace.record(&block, &sol, penalty, t0);
    }
    report.min_norm_fallbacks = fallbacks;
    report.wall_seconds = start.elapsed().as_secs_f64();
    Ok((CpModel::new(a, b, c)?, report))
}

/// CP factors by alternating least squares: per sweep, solve the
/// regularized subproblem of each factor in the order A, B, C, holding the
/// other two fixed.
pub fn als_cp(design: &DesignSet, rank: usize, cfg: &SolverConfig) -> Result<(CpModel, FitReport)> {
    cfg.validate()?;
    if rank == 0 {
        return Err(Error::InvalidArgument("CP rank must be >= 1".into()));
    }
    let (m1, m2, p) = (design.meta.m1, design.meta.m2, design.meta.p);
    let a = init_matrix(m1, rank, cfg, "init-a");
    let b = init_matrix(m2, rank, cfg, "init-b");
    let c = init_matrix(p, rank, cfg, "init-c");
    als_cp_from(design, a, b, c, cfg)
}

fn als_tt_from(
    design: &DesignSet,
    mut a: DMatrix<Complex64>,
    mut b: DenseTensor,
    mut c: DMatrix<Complex64>,
    cfg: &SolverConfig,
) -> Result<(TtModel, FitReport)> {
    let start = Instant::now();
    let (m1, m2, p) = (design.meta.m1, design.meta.m2, design.meta.p);
    let (r1n, r2n) = (a.ncols(), c.nrows());
    let n = design.len();
    let h = design.h_matrix();
    let mu = design.m_unfolded();
    let y = design.y_vector();
    let mut report = FitReport::default();
    let mut fallbacks = 0usize;
    let mut trace = TraceState {
        y_power: y.norm_squared(),
        y: &y,
        gamma: cfg.gamma,
        record: cfg.record_objective,
        report: &mut report,
    };
    let b_at = |b: &DenseTensor, r1: usize, j: usize, r2: usize| {
        b.data()[r1 + j * r1n + r2 * r1n * m2]
    };
    for _ in 0..cfg.iterations {
        // Delay factor A: weight column r1 sums the core-train contractions
        // over the bond to C.
        let t0 = Instant::now();
        let mut block = DMatrix::zeros(n, m1 * r1n);
        for r1 in 0..r1n {
            let mut w: DVector<Complex64> = DVector::zeros(n);
            for r2 in 0..r2n {
                let fiber: Vec<Complex64> = (0..m2).map(|j| b_at(&b, r1, j, r2)).collect();
                let row: Vec<Complex64> = (0..p).map(|q| c[(r2, q)]).collect();
                w += &mu * DVector::from_vec(kron_vec(&row, &fiber));
            }
            for i in 0..m1 {
                block.set_column(i + r1 * m1, &h.column(i).component_mul(&w));
            }
        }
        let sol = solve_block(&block, &y, cfg.gamma, &mut fallbacks)?;
        a = DMatrix::from_column_slice(m1, r1n, sol.as_slice());
        let penalty = a.norm_squared() + b.fro_norm().powi(2) + c.norm_squared();
        trace.record(&block, &sol, penalty, t0);

        // Core tensor: unknowns ordered (r1, j, r2) with r1 fastest,
        // matching the core's storage layout.
        let t0 = Instant::now();
        let ha = &h * &a;
        let mut block = DMatrix::zeros(n, r1n * m2 * r2n);
        for r2 in 0..r2n {
            for j in 0..m2 {
                let col = contract_powers(&mu, m2, p, |q| c[(r2, q)], j);
                for r1 in 0..r1n {
                    block.set_column(
                        r1 + j * r1n + r2 * r1n * m2,
                        &ha.column(r1).component_mul(&col),
                    );
                }
            }
        }
        let sol = solve_block(&block, &y, cfg.gamma, &mut fallbacks)?;
        b = DenseTensor::new(vec![r1n, m2, r2n], sol.iter().copied().collect())?;
        let penalty = a.norm_squared() + b.fro_norm().powi(2) + c.norm_squared();
        trace.record(&block, &sol, penalty, t0);

        // Power factor C in row form: unknowns ordered (r2, q) with r2
        // fastest, matching the column-major layout of an R2 x P matrix.
        let t0 = Instant::now();
        let mut block = DMatrix::zeros(n, r2n * p);
        for q in 0..p {
            for r2 in 0..r2n {
                let mut col: DVector<Complex64> = DVector::zeros(n);
                for r1 in 0..r1n {
                    let fiber = contract_delays(&mu, m2, |j| b_at(&b, r1, j, r2), q);
                    col += ha.column(r1).component_mul(&fiber);
                }
                block.set_column(r2 + q * r2n, &col);
            }
        }
        let sol = solve_block(&block, &y, cfg.gamma, &mut fallbacks)?;
        c = DMatrix::from_column_slice(r2n, p, sol.as_slice());
        let penalty = a.norm_squared() + b.fro_norm().powi(2) + c.norm_squared();
        trace.record(&block, &sol, penalty, t0);
    }
    report.min_norm_fallbacks = fallbacks;
    report.wall_seconds = start.elapsed().as_secs_f64();
    Ok((TtModel::new(a, b, c)?, report))
}

/// Tensor-train factors by alternating least squares over the blocks A,
/// core, C.
pub fn als_tt(
    design: &DesignSet,
    ranks: (usize, usize),
    cfg: &SolverConfig,
) -> Result<(TtModel, FitReport)> {
    cfg.validate()?;
    let (r1, r2) = ranks;
    if r1 == 0 || r2 == 0 {
        return Err(Error::InvalidArgument("tensor-train ranks must be >= 1".into()));
    }
    let (m1, m2, p) = (design.meta.m1, design.meta.m2, design.meta.p);
    let a = init_matrix(m1, r1, cfg, "init-a");
    let b = init_tensor(vec![r1, m2, r2], cfg, "init-b");
    let c = init_matrix(r2, p, cfg, "init-c");
    als_tt_from(design, a, b, c, cfg)
}

/// `mt[:, r2 + r3·R2] = Mu · (c_{:, r3} ⊗ b_{:, r2})`: envelope tensor
/// contracted with plain (unconjugated) factor transposes on modes 2 and 3.
fn tucker_envelope(
    mu: &DMatrix<Complex64>,
    b: &DMatrix<Complex64>,
    c: &DMatrix<Complex64>,
) -> DMatrix<Complex64> {
    let (r2n, r3n) = (b.ncols(), c.ncols());
    let mut mt = DMatrix::zeros(mu.nrows(), r2n * r3n);
    for r3 in 0..r3n {
        for r2 in 0..r2n {
            let k = kron_vec(c.column(r3).as_slice(), b.column(r2).as_slice());
            mt.set_column(r2 + r3 * r2n, &(mu * DVector::from_vec(k)));
        }
    }
    mt
}

fn als_tucker_from(
    design: &DesignSet,
    mut g: DenseTensor,
    mut a: DMatrix<Complex64>,
    mut b: DMatrix<Complex64>,
    mut c: DMatrix<Complex64>,
    cfg: &SolverConfig,
) -> Result<(TuckerModel, FitReport)> {
    let start = Instant::now();
    let (m1, m2, p) = (design.meta.m1, design.meta.m2, design.meta.p);
    let (r1n, r2n, r3n) = (a.ncols(), b.ncols(), c.ncols());
    let n = design.len();
    let h = design.h_matrix();
    let mu = design.m_unfolded();
    let y = design.y_vector();
    let mut report = FitReport::default();
    let mut fallbacks = 0usize;
    let mut trace = TraceState {
        y_power: y.norm_squared(),
        y: &y,
        gamma: cfg.gamma,
        record: cfg.record_objective,
        report: &mut report,
    };
    let g_at = |g: &DenseTensor, r1: usize, r2: usize, r3: usize| {
        g.data()[r1 + r2 * r1n + r3 * r1n * r2n]
    };
    for _ in 0..cfg.iterations {
        // Core first: unknowns ordered (r1, r2, r3) with r1 fastest.
        let t0 = Instant::now();
        let ha = &h * &a;
        let mt = tucker_envelope(&mu, &b, &c);
        let mut block = DMatrix::zeros(n, r1n * r2n * r3n);
        for r3 in 0..r3n {
            for r2 in 0..r2n {
                let col = mt.column(r2 + r3 * r2n);
                for r1 in 0..r1n {
                    block.set_column(
                        r1 + r2 * r1n + r3 * r1n * r2n,
                        &ha.column(r1).component_mul(&col),
                    );
                }
            }
        }
        let sol = solve_block(&block, &y, cfg.gamma, &mut fallbacks)?;
        g = DenseTensor::new(vec![r1n, r2n, r3n], sol.iter().copied().collect())?;
        let penalty = g.fro_norm().powi(2)
            + a.norm_squared()
            + b.norm_squared()
            + c.norm_squared();
        trace.record(&block, &sol, penalty, t0);

        // Delay factor A, against the core-weighted envelope.
        let t0 = Instant::now();
        let mut block = DMatrix::zeros(n, m1 * r1n);
        for r1 in 0..r1n {
            let mut w: DVector<Complex64> = DVector::zeros(n);
            for r3 in 0..r3n {
                for r2 in 0..r2n {
                    w.axpy(
                        g_at(&g, r1, r2, r3),
                        &mt.column(r2 + r3 * r2n),
                        Complex64::new(1.0, 0.0),
                    );
                }
            }
            for i in 0..m1 {
                block.set_column(i + r1 * m1, &h.column(i).component_mul(&w));
            }
        }
        let sol = solve_block(&block, &y, cfg.gamma, &mut fallbacks)?;
        a = DMatrix::from_column_slice(m1, r1n, sol.as_slice());
        let penalty = g.fro_norm().powi(2)
            + a.norm_squared()
            + b.norm_squared()
            + c.norm_squared();
        trace.record(&block, &sol, penalty, t0);

        // ga[:, r2 + r3·R2] = Σ_{r1} g[r1,r2,r3]·(H A)[:, r1], shared by the
        // B and C subproblems.
        let ha = &h * &a;
        let mut ga = DMatrix::zeros(n, r2n * r3n);
        for r3 in 0..r3n {
            for r2 in 0..r2n {
                let mut col: DVector<Complex64> = DVector::zeros(n);
                for r1 in 0..r1n {
                    col.axpy(g_at(&g, r1, r2, r3), &ha.column(r1), Complex64::new(1.0, 0.0));
                }
                ga.set_column(r2 + r3 * r2n, &col);
            }
        }

        // Envelope-delay factor B.
        let t0 = Instant::now();
        let mut block = DMatrix::zeros(n, m2 * r2n);
        for j in 0..m2 {
            let power_cols: Vec<DVector<Complex64>> = (0..r3n)
                .map(|r3| contract_powers(&mu, m2, p, |q| c[(q, r3)], j))
                .collect();
            for r2 in 0..r2n {
                let mut col: DVector<Complex64> = DVector::zeros(n);
                for (r3, pc) in power_cols.iter().enumerate() {
                    col += ga.column(r2 + r3 * r2n).component_mul(pc);
                }
                block.set_column(j + r2 * m2, &col);
            }
        }
        let sol = solve_block(&block, &y, cfg.gamma, &mut fallbacks)?;
        b = DMatrix::from_column_slice(m2, r2n, sol.as_slice());
        let penalty = g.fro_norm().powi(2)
            + a.norm_squared()
            + b.norm_squared()
            + c.norm_squared();
        trace.record(&block, &sol, penalty, t0);

        // Envelope-power factor C, against the fresh B.
        let t0 = Instant::now();
        let mut block = DMatrix::zeros(n, p * r3n);
        for q in 0..p {
            let delay_cols: Vec<DVector<Complex64>> = (0..r2n)
                .map(|r2| contract_delays(&mu, m2, |j| b[(j, r2)], q))
                .collect();
            for r3 in 0..r3n {
                let mut col: DVector<Complex64> = DVector::zeros(n);
                for (r2, dc) in delay_cols.iter().enumerate() {
                    col += ga.column(r2 + r3 * r2n).component_mul(dc);
                }
                block.set_column(q + r3 * p, &col);
            }
        }
        let sol = solve_block(&block, &y, cfg.gamma, &mut fallbacks)?;
        c = DMatrix::from_column_slice(p, r3n, sol.as_slice());
        let penalty = g.fro_norm().powi(2)
            + a.norm_squared()
            + b.norm_squared()
            + c.norm_squared();
        trace.record(&block, &sol, penalty, t0);
    }
    report.min_norm_fallbacks = fallbacks;
    report.wall_seconds = start.elapsed().as_secs_f64();
    Ok((TuckerModel::new(g, a, b, c)?, report))
}

/// Tucker core and factors by alternating least squares over the blocks
/// core, A, B, C.
pub fn als_tucker(
    design: &DesignSet,
    ranks: (usize, usize, usize),
    cfg: &SolverConfig,
) -> Result<(TuckerModel, FitReport)> {
    cfg.validate()?;
    let (r1, r2, r3) = ranks;
    if r1 == 0 || r2 == 0 || r3 == 0 {
        return Err(Error::InvalidArgument("Tucker ranks must be >= 1".into()));
    }
    let (m1, m2, p) = (design.meta.m1, design.meta.m2, design.meta.p);
    let g = init_tensor(vec![r1, r2, r3], cfg, "init-g");
    let a = init_matrix(m1, r1, cfg, "init-a");
    let b = init_matrix(m2, r2, cfg, "init-b");
    let c = init_matrix(p, r3, cfg, "init-c");
    als_tucker_from(design, g, a, b, c, cfg)
}

/// Projects a compressed model onto the coordinates of a mode-2/3
/// projection pair: factors acting on the envelope delay and power axes
/// shrink, the delay factor (and Tucker core) stay as they are.
pub fn project_model(model: &AnyModel, proj: &ProjectionPair) -> Result<AnyModel> {
    let u2 = promote(&proj.u2);
    let u3 = promote(&proj.u3);
    Ok(match model {
        AnyModel::Cp(m) => AnyModel::Cp(CpModel::new(
            m.a.clone(),
            u2.transpose() * &m.b,
            u3.transpose() * &m.c,
        )?),
        AnyModel::Tt(m) => AnyModel::Tt(TtModel::new(
            m.a.clone(),
            m.b.mode_matrix_product(1, &u2.transpose())?,
            &m.c * &u3,
        )?),
        AnyModel::Tucker(m) => AnyModel::Tucker(TuckerModel::new(
            m.g.clone(),
            m.a.clone(),
            u2.transpose() * &m.b,
            u3.transpose() * &m.c,
        )?),
        AnyModel::Gmp(_) => {
            return Err(Error::InvalidArgument(
                "mode-2/3 projection applies to compressed families only".into(),
            ));
        }
    })
}

/// Alternating least squares on the mode-2/3 projected design.
///
/// The envelope tensor is compressed by [`project_modes_23`]; the initial
/// factors are drawn in the original dimensions from the same streams the
/// plain solver uses and then projected, so a lossless (full-size)
/// projection reproduces the plain solver's run up to an orthonormal change
/// of subproblem coordinates. After the sweeps the envelope factors are
/// back-substituted, so the returned model lives in the original
/// dimensions.
pub fn rp_als(
    design: &DesignSet,
    kind: ModelKind,
    ranks: &[usize],
    proj_dims: (usize, usize),
    cfg: &SolverConfig,
) -> Result<(AnyModel, FitReport, ProjectionPair)> {
    cfg.validate()?;
    let (m1, m2, p) = (design.meta.m1, design.meta.m2, design.meta.p);
    let (m2t, pt) = proj_dims;
    if m2t == 0 || pt == 0 || m2t > m2 || pt > p {
        return Err(Error::InvalidArgument(format!(
            "projection dims ({m2t}, {pt}) must be within 1..=({m2}, {p})"
        )));
    }
    if ranks.len() != kind.rank_count() || ranks.iter().any(|&r| r == 0) {
        return Err(Error::InvalidArgument(format!(
            "{} expects {} positive rank value(s)",
            kind.as_str(),
            kind.rank_count()
        )));
    }
    let start = Instant::now();
    let pair = project_modes_23(&design.m, m2t, pt, cfg.oversample, cfg.power, cfg.seed)?;
    let projected = design.with_envelope(pair.core.clone())?;
    let u2 = promote(&pair.u2);
    let u3 = promote(&pair.u3);
    let (model, mut report) = match kind {
        ModelKind::Cp => {
            let r = ranks[0];
            let a0 = init_matrix(m1, r, cfg, "init-a");
            let b0 = u2.transpose() * init_matrix(m2, r, cfg, "init-b");
            let c0 = u3.transpose() * init_matrix(p, r, cfg, "init-c");
            let (m, report) = als_cp_from(&projected, a0, b0, c0, cfg)?;
            let model = CpModel::new(m.a, &u2 * m.b, &u3 * m.c)?;
            (AnyModel::Cp(model), report)
        }
        ModelKind::Tt => {
            let (r1, r2) = (ranks[0], ranks[1]);
            let a0 = init_matrix(m1, r1, cfg, "init-a");
            let b0 = init_tensor(vec![r1, m2, r2], cfg, "init-b")
                .mode_matrix_product(1, &u2.transpose())?;
            let c0 = init_matrix(r2, p, cfg, "init-c") * &u3;
            let (m, report) = als_tt_from(&projected, a0, b0, c0, cfg)?;
            let model = TtModel::new(
                m.a,
                m.b.mode_matrix_product(1, &u2)?,
                m.c * u3.transpose(),
            )?;
            (AnyModel::Tt(model), report)
        }
        ModelKind::Tucker => {
            let (r1, r2, r3) = (ranks[0], ranks[1], ranks[2]);
            let g0 = init_tensor(vec![r1, r2, r3], cfg, "init-g");
            let a0 = init_matrix(m1, r1, cfg, "init-a");
            let b0 = u2.transpose() * init_matrix(m2, r2, cfg, "init-b");
            let c0 = u3.transpose() * init_matrix(p, r3, cfg, "init-c");
            let (m, report) = als_tucker_from(&projected, g0, a0, b0, c0, cfg)?;
            let model = TuckerModel::new(m.g, m.a, &u2 * m.b, &u3 * m.c)?;
            (AnyModel::Tucker(model), report)
        }
        ModelKind::Gmp => {
            return Err(Error::InvalidArgument(
                "the projected solver applies to compressed families only".into(),
            ));
        }
    };
    report.wall_seconds = start.elapsed().as_secs_f64();
    Ok((model, report, pair))
}

/// Residual norm of the projected copy of `star` on the projected design —
/// the attained value of the projected problem that the error bound
/// controls.
pub fn projected_star_residual(
    design: &DesignSet,
    proj: &ProjectionPair,
    star: &AnyModel,
) -> Result<f64> {
    let projected_design = design.with_envelope(proj.core.clone())?;
    let projected_model = project_model(star, proj)?;
    let prediction = projected_model.predict(&projected_design)?;
    let residual: f64 = design
        .y
        .iter()
        .zip(&prediction)
        .map(|(y, f)| (y - f).norm_sqr())
        .sum();
    Ok(residual.sqrt())
}

/// Numerical check of the projection error bound.
#[derive(Debug, Clone)]
pub struct BoundReport {
    /// Attained residual norm of the projected problem.
    pub lhs: f64,
    /// Residual norm of the reference (unprojected) model.
    pub star_residual: f64,
    /// `‖M − M̂‖_F` of the projection.
    pub envelope_error: f64,
    /// Family-specific sum of factor-norm weights.
    pub weight_sum: f64,
    /// `star_residual + envelope_error · weight_sum`.
    pub rhs: f64,
    pub holds: bool,
}

/// Checks the inequality `lhs ≤ star residual + ‖M − M̂‖_F · Σ weights`,
/// where the weights are `‖H a_r‖_∞·‖b_r‖·‖c_r‖` summed over rank columns
/// (with the core fiber norms for a tensor train and `|g|`-weighted over
/// all core entries for Tucker), allowing a relative slack of 1e−8.
pub fn check_projection_bound(
    design: &DesignSet,
    proj: &ProjectionPair,
    star: &AnyModel,
    projected_optimum_value: f64,
) -> Result<BoundReport> {
    let prediction = star.predict(design)?;
    let star_residual: f64 = design
        .y
        .iter()
        .zip(&prediction)
        .map(|(y, f)| (y - f).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let h = design.h_matrix();
    let sup_norm = |col: DVector<Complex64>| col.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    let weight_sum = match star {
        AnyModel::Cp(m) => {
            let ha = &h * &m.a;
            (0..m.rank())
                .map(|r| {
                    sup_norm(ha.column(r).into_owned())
                        * m.b.column(r).norm()
                        * m.c.column(r).norm()
                })
                .sum::<f64>()
        }
        AnyModel::Tt(m) => {
            let (r1n, r2n) = m.ranks();
            let m2 = m.b.shape()[1];
            let ha = &h * &m.a;
            let mut sum = 0.0;
            for r1 in 0..r1n {
                let hnorm = sup_norm(ha.column(r1).into_owned());
                for r2 in 0..r2n {
                    let fiber: f64 = (0..m2)
                        .map(|j| m.b.data()[r1 + j * r1n + r2 * r1n * m2].norm_sqr())
                        .sum::<f64>()
                        .sqrt();
                    let row: f64 = m.c.row(r2).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                    sum += hnorm * fiber * row;
                }
            }
            sum
        }
        AnyModel::Tucker(m) => {
            let (r1n, r2n, r3n) = m.ranks();
            let ha = &h * &m.a;
            let mut sum = 0.0;
            for r1 in 0..r1n {
                let hnorm = sup_norm(ha.column(r1).into_owned());
                for r2 in 0..r2n {
                    let bnorm = m.b.column(r2).norm();
                    for r3 in 0..r3n {
                        let gmag = m.g.data()[r1 + r2 * r1n + r3 * r1n * r2n].norm();
                        sum += gmag * hnorm * bnorm * m.c.column(r3).norm();
                    }
                }
            }
            sum
        }
        AnyModel::Gmp(_) => {
            return Err(Error::InvalidArgument(
                "the projection bound applies to compressed families only".into(),
            ));
        }
    };
    let rhs = star_residual + proj.approx_error * weight_sum;
    Ok(BoundReport {
        lhs: projected_optimum_value,
        star_residual,
        envelope_error: proj.approx_error,
        weight_sum,
        rhs,
        holds: projected_optimum_value <= rhs * (1.0 + 1e-8),
    })
}
