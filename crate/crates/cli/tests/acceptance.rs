//! Release acceptance suite: one test per numbered release criterion.
//!
//! Each test prints exactly one summary line of the form
//!
//! ```text
//! [acceptance] criterion N (title): PASS — detail; charged 1.2s of 60s budget
//! ```
//!
//! and fails if the check does not hold or if the charged wall time exceeds
//! the criterion's runtime budget. The full-scale training artifacts shared
//! by several criteria are built once; their build time is charged to
//! criterion 4, whose statement that work implements. Run
//!
//! ```text
//! cargo test --test acceptance -- --nocapture --test-threads=1
//! ```
//!
//! to see the twelve lines in order.

use std::panic::AssertUnwindSafe;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;

use gmptensor::config::{ExperimentConfig, ModelEntry};
use gmptensor::dataset::DesignSet;
use gmptensor::decomp::{project_modes_23, randomized_sthosvd, reconstruct};
use gmptensor::identify::{
    als_cp, als_tt, als_tucker, check_projection_bound, fista_lasso, pgd_lasso,
    projected_star_residual, ridge_ls, rp_als, FitReport, SolverConfig,
};
use gmptensor::metrics::{generate_data, nmse};
use gmptensor::models::{
    flop_count, param_count, AnyModel, CpModel, ModelKind, TtModel, TuckerModel,
};
use gmptensor::rng::{complex_standard_normal, derive_seed, stream};
use gmptensor::tensor::DenseTensor;

// ---------------------------------------------------------------------------
// Reporting harness
// ---------------------------------------------------------------------------

fn panic_text(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".into()
    }
}

/// Runs one criterion body, prints its single summary line, and asserts both
/// the check itself and the runtime budget. `precharged` is wall time spent
/// on this criterion's behalf outside the body (shared artifact builds).
fn criterion(
    number: u32,
    title: &str,
    budget: Duration,
    precharged: Duration,
    body: impl FnOnce() -> Result<String, String>,
) {
    let start = Instant::now();
    let outcome = std::panic::catch_unwind(AssertUnwindSafe(body));
    let charged = start.elapsed() + precharged;
    let (ok, detail) = match outcome {
        Ok(Ok(d)) => (true, d),
        Ok(Err(d)) => (false, d),
        Err(p) => (false, format!("panicked: {}", panic_text(p))),
    };
    let within = charged <= budget;
    let status = if ok && within { "PASS" } else { "FAIL" };
    let mut line = format!(
        "[acceptance] criterion {number} ({title}): {status} — {detail}; charged {:.1}s of {:.0}s budget",
        charged.as_secs_f64(),
        budget.as_secs_f64()
    );
    if ok && !within {
        line.push_str(" (budget exceeded)");
    }
    println!("{line}");
    assert!(ok && within, "{line}");
}

// ---------------------------------------------------------------------------
// Shared full-scale artifacts (the criterion-4 experiment)
// ---------------------------------------------------------------------------

struct AlsRun {
    name: &'static str,
    blocks_per_sweep: usize,
    test_nmse_db: f64,
    report: FitReport,
}

struct FullScale {
    seed: u64,
    train: DesignSet,
    ridge_nmse_db: f64,
    als: Vec<AlsRun>,
    build: Duration,
}

static FULL_SCALE: OnceLock<FullScale> = OnceLock::new();

fn entry<'a>(cfg: &'a ExperimentConfig, name: &str) -> &'a ModelEntry {
    cfg.models
        .iter()
        .find(|e| e.name == name)
        .unwrap_or_else(|| panic!("default configuration lacks model {name:?}"))
}

fn solver_for(cfg: &ExperimentConfig, e: &ModelEntry) -> SolverConfig {
    SolverConfig {
        gamma: e.gamma,
        iterations: e.iterations,
        seed: derive_seed(cfg.seed, &format!("model-{}", e.name)),
        init_scale: e.init_scale,
        ..SolverConfig::default()
    }
}

/// Builds the default-protocol data set and trains all four default models,
/// mirroring what the command-line pipeline does with the stock
/// configuration: ridge for the full tensor, alternating least squares for
/// the three compressed families.
fn full_scale() -> &'static FullScale {
    FULL_SCALE.get_or_init(|| {
        let start = Instant::now();
        let cfg = ExperimentConfig::default();
        let data = generate_data(&cfg).expect("reference data generates");
        let dims = {
            let e = entry(&cfg, "gmp-ls");
            (e.m1, e.m2, e.p)
        };
        let train = DesignSet::build(&data.x, &data.y, cfg.train.t0, cfg.train.n, dims.0, dims.1, dims.2)
            .expect("train window fits the signal");
        let test = DesignSet::build(&data.x, &data.y, cfg.test.t0, cfg.test.n, dims.0, dims.1, dims.2)
            .expect("test window fits the signal");
        let eval = |m: &AnyModel| -> f64 {
            nmse(&m.predict(&test).expect("prediction"), &test.y).expect("finite NMSE")
        };

        let (ridge_model, _) = ridge_ls(&train, &solver_for(&cfg, entry(&cfg, "gmp-ls")))
            .expect("ridge solve");
        let ridge_nmse_db = eval(&AnyModel::Gmp(ridge_model));

        let mut als = Vec::new();
        {
            let e = entry(&cfg, "cp-als");
            let (m, report) = als_cp(&train, e.ranks[0], &solver_for(&cfg, e)).expect("cp fit");
            als.push(AlsRun {
                name: "cp",
                blocks_per_sweep: 3,
                test_nmse_db: eval(&AnyModel::Cp(m)),
                report,
            });
        }
        {
            let e = entry(&cfg, "tt-als");
            let (m, report) =
                als_tt(&train, (e.ranks[0], e.ranks[1]), &solver_for(&cfg, e)).expect("tt fit");
            als.push(AlsRun {
                name: "tt",
                blocks_per_sweep: 3,
                test_nmse_db: eval(&AnyModel::Tt(m)),
                report,
            });
        }
        {
            let e = entry(&cfg, "tucker-als");
            let (m, report) = als_tucker(
                &train,
                (e.ranks[0], e.ranks[1], e.ranks[2]),
                &solver_for(&cfg, e),
            )
            .expect("tucker fit");
            als.push(AlsRun {
                name: "tucker",
                blocks_per_sweep: 4,
                test_nmse_db: eval(&AnyModel::Tucker(m)),
                report,
            });
        }
        FullScale {
            seed: cfg.seed,
            train,
            ridge_nmse_db,
            als,
            build: start.elapsed(),
        }
    })
}

// ---------------------------------------------------------------------------
// Small shared helpers
// ---------------------------------------------------------------------------

fn rmat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(rows, cols, |_, _| complex_standard_normal(rng))
}

fn rtensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> DenseTensor {
    DenseTensor::from_fn(shape, |_| complex_standard_normal(rng)).expect("valid shape")
}

fn random_model(kind: ModelKind, dims: (usize, usize, usize), ranks: &[usize], seed: u64) -> AnyModel {
    let (m1, m2, p) = dims;
    let mut rng = stream(seed, "model-factors");
    match kind {
        ModelKind::Gmp => unreachable!("only compressed families are built here"),
        ModelKind::Cp => {
            let r = ranks[0];
            AnyModel::Cp(
                CpModel::new(rmat(&mut rng, m1, r), rmat(&mut rng, m2, r), rmat(&mut rng, p, r))
                    .expect("cp factors"),
            )
        }
        ModelKind::Tt => {
            let (r1, r2) = (ranks[0], ranks[1]);
            AnyModel::Tt(
                TtModel::new(
                    rmat(&mut rng, m1, r1),
                    rtensor(&mut rng, vec![r1, m2, r2]),
                    rmat(&mut rng, r2, p),
                )
                .expect("tt factors"),
            )
        }
        ModelKind::Tucker => {
            let (r1, r2, r3) = (ranks[0], ranks[1], ranks[2]);
            AnyModel::Tucker(
                TuckerModel::new(
                    rtensor(&mut rng, vec![r1, r2, r3]),
                    rmat(&mut rng, m1, r1),
                    rmat(&mut rng, m2, r2),
                    rmat(&mut rng, p, r3),
                )
                .expect("tucker factors"),
            )
        }
    }
}

/// Design set over a random complex-Gaussian signal with a random target.
fn random_design(seed: u64, n: usize, m1: usize, m2: usize, p: usize) -> DesignSet {
    let t0 = m1.max(m2);
    let total = t0 + n + 4;
    let mut xr = stream(seed, "design-input");
    let x: Vec<Complex64> = (0..total).map(|_| complex_standard_normal(&mut xr)).collect();
    let mut yr = stream(seed, "design-target");
    let y: Vec<Complex64> = (0..total).map(|_| complex_standard_normal(&mut yr)).collect();
    DesignSet::build(&x, &y, t0, n, m1, m2, p).expect("design builds")
}

fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    let den: f64 = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

/// Median over sweeps of the summed per-block solve times.
fn median_sweep_seconds(report: &FitReport, blocks: usize) -> f64 {
    let sweeps = report.iter_seconds.len() / blocks;
    assert!(sweeps >= 1, "trace shorter than one sweep");
    let mut sums: Vec<f64> = (0..sweeps)
        .map(|s| report.iter_seconds[s * blocks..(s + 1) * blocks].iter().sum())
        .collect();
    sums.sort_by(f64::total_cmp);
    sums[sweeps / 2]
}

// ---------------------------------------------------------------------------
// Criterion 1 — parameter counts
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_parameter_counts() {
    criterion(1, "parameter counts", Duration::from_secs(1), Duration::ZERO, || {
        let cases: &[(ModelKind, (usize, usize, usize), &[usize], u64)] = &[
            (ModelKind::Gmp, (11, 10, 8), &[], 880),
            (ModelKind::Cp, (11, 10, 8), &[3], 87),
            (ModelKind::Tt, (11, 10, 8), &[2, 2], 78),
            (ModelKind::Tucker, (11, 10, 8), &[2, 2, 2], 66),
            (ModelKind::Gmp, (10, 8, 6), &[], 480),
            (ModelKind::Cp, (10, 8, 6), &[3], 72),
            (ModelKind::Tt, (10, 8, 6), &[2, 2], 64),
            (ModelKind::Tucker, (10, 8, 6), &[2, 2, 2], 56),
        ];
        for &(kind, dims, ranks, want) in cases {
            let got = param_count(kind, dims, ranks).map_err(|e| e.to_string())?;
            if got != want {
                return Err(format!(
                    "{} at {:?} ranks {:?}: {} parameters, expected {}",
                    kind.as_str(),
                    dims,
                    ranks,
                    got,
                    want
                ));
            }
        }
        Ok("all 8 pinned configurations match exactly".into())
    });
}

// ---------------------------------------------------------------------------
// Criterion 2 — per-sample operation counts
// ---------------------------------------------------------------------------

/// Per-sample running cost re-stated term by term, independent of the
/// library implementation: a complex multiply costs 6 real operations, a
/// complex add costs 2, and envelope powers are built by repeated real
/// multiplication.
fn flops_by_hand(kind: ModelKind, m1: u64, m2: u64, p: u64, ranks: &[u64]) -> u64 {
    match kind {
        ModelKind::Gmp => {
            let weighted_terms = m1 * m2 * p * (6 + 2);
            let envelope_powers = (m1 + m2 - 1) * (p - 1) * 2;
            weighted_terms + envelope_powers + 8
        }
        ModelKind::Cp => {
            let per_column = m2 * p * 10 + m1 * 8 + 4;
            ranks[0] * per_column + p + 6
        }
        ModelKind::Tt => {
            let per_left_rank = ranks[1] * m2 * p * 10 + m1 * 8 + 4;
            ranks[0] * per_left_rank + p + 6
        }
        ModelKind::Tucker => {
            let per_core_fiber = m2 * p * 10 + 6;
            ranks[0] * (ranks[1] * ranks[2] * per_core_fiber + m1 * 8 + 4) + p + 6
        }
    }
}

#[test]
fn criterion_02_per_sample_flop_counts() {
    criterion(2, "per-sample flop counts", Duration::from_secs(1), Duration::ZERO, || {
        let pinned: &[(ModelKind, &[usize], u64)] = &[
            (ModelKind::Gmp, &[], 7328),
            (ModelKind::Cp, &[3], 2690),
            (ModelKind::Tt, &[2, 2], 3398),
        ];
        for &(kind, ranks, want) in pinned {
            let got = flop_count(kind, (11, 10, 8), ranks).map_err(|e| e.to_string())?;
            if got != want {
                return Err(format!(
                    "{} at (11,10,8) ranks {:?}: {} flops, expected {}",
                    kind.as_str(),
                    ranks,
                    got,
                    want
                ));
            }
        }
        // Ten pseudo-random grid points per family against the hand-stated
        // accounting above.
        for k in 0u64..10 {
            let m1 = 1 + (k * 7 + 3) % 12;
            let m2 = 1 + (k * 5 + 1) % 10;
            let p = 1 + (k * 3 + 2) % 8;
            let r = 1 + k % 4;
            let r2 = 1 + (k * 2 + 1) % 4;
            let r3 = 1 + (k + 2) % 4;
            let dims = (m1 as usize, m2 as usize, p as usize);
            let cases: &[(ModelKind, Vec<usize>, Vec<u64>)] = &[
                (ModelKind::Gmp, vec![], vec![]),
                (ModelKind::Cp, vec![r as usize], vec![r]),
                (ModelKind::Tt, vec![r as usize, r2 as usize], vec![r, r2]),
                (
                    ModelKind::Tucker,
                    vec![r as usize, r2 as usize, r3 as usize],
                    vec![r, r2, r3],
                ),
            ];
            for (kind, ranks, ranks64) in cases {
                let got = flop_count(*kind, dims, ranks).map_err(|e| e.to_string())?;
                let want = flops_by_hand(*kind, m1, m2, p, ranks64);
                if got != want {
                    return Err(format!(
                        "{} at ({m1},{m2},{p}) ranks {ranks:?}: {got} vs hand count {want}",
                        kind.as_str()
                    ));
                }
            }
        }
        Ok("3 pinned values and 40 grid points match the hand-stated accounting".into())
    });
}

// ---------------------------------------------------------------------------
// Criterion 3 — compressed predictions match their full-tensor expansion
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_compressed_prediction_matches_expansion() {
    criterion(3, "format equivalence", Duration::from_secs(30), Duration::ZERO, || {
        let mut worst = 0.0f64;
        let mut checked = 0usize;
        for (f, kind) in [ModelKind::Cp, ModelKind::Tt, ModelKind::Tucker].into_iter().enumerate() {
            for k in 0usize..100 {
                let m1 = 1 + (k * 7) % 6;
                let m2 = 1 + (k * 5) % 5;
                let p = 1 + (k * 3) % 4;
                let ranks: Vec<usize> = match kind {
                    ModelKind::Cp => vec![1 + k % 3],
                    ModelKind::Tt => vec![1 + k % 3, 1 + (k / 3) % 3],
                    ModelKind::Tucker => vec![1 + k % 3, 1 + (k / 3) % 3, 1 + (k / 9) % 3],
                    ModelKind::Gmp => unreachable!(),
                };
                let seed = derive_seed(300 + f as u64, &format!("format-{k}"));
                let model = random_model(kind, (m1, m2, p), &ranks, seed);
                let design = random_design(seed, 96, m1, m2, p);
                let direct = model.predict(&design).map_err(|e| e.to_string())?;
                let expanded = model.expand_to_gmp().map_err(|e| e.to_string())?;
                let via_full = expanded.predict(&design).map_err(|e| e.to_string())?;
                let err = rel_err(&direct, &via_full);
                worst = worst.max(err);
                checked += 1;
                if err > 1e-10 {
                    return Err(format!(
                        "{} at ({m1},{m2},{p}) ranks {ranks:?}: relative error {err:.3e} > 1e-10",
                        kind.as_str()
                    ));
                }
            }
        }
        Ok(format!("{checked} random models agree with their expansions; worst {worst:.2e}"))
    });
}

// ---------------------------------------------------------------------------
// Criterion 4 — recovery of the built-in reference amplifier
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_reference_amplifier_recovery() {
    let ctx = full_scale();
    criterion(4, "reference amplifier recovery", Duration::from_secs(120), ctx.build, || {
        if !(ctx.ridge_nmse_db <= -45.0) {
            return Err(format!(
                "ridge test NMSE {:.2} dB misses the -45 dB requirement",
                ctx.ridge_nmse_db
            ));
        }
        let mut parts = vec![format!("ridge {:.2} dB", ctx.ridge_nmse_db)];
        for run in &ctx.als {
            let gap = (run.test_nmse_db - ctx.ridge_nmse_db).abs();
            if gap > 1.5 {
                return Err(format!(
                    "{} NMSE {:.2} dB is {:.2} dB from ridge (> 1.5)",
                    run.name, run.test_nmse_db, gap
                ));
            }
            parts.push(format!("{} {:.2} dB (gap {:.2})", run.name, run.test_nmse_db, gap));
        }
        Ok(parts.join(", "))
    });
}

// ---------------------------------------------------------------------------
// Criterion 5 — alternating solvers settle within five sweeps
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_als_settles_within_five_sweeps() {
    let ctx = full_scale();
    criterion(5, "five-sweep settling", Duration::from_secs(120), Duration::ZERO, || {
        let mut parts = Vec::new();
        for run in &ctx.als {
            let trace = &run.report.train_nmse_trace;
            let at5 = trace[run.blocks_per_sweep * 5 - 1];
            let last = *trace.last().expect("non-empty trace");
            let gap = (at5 - last).abs();
            if gap > 0.5 {
                return Err(format!(
                    "{}: sweep-5 NMSE {:.3} dB is {:.3} dB from final {:.3} dB (> 0.5)",
                    run.name, at5, gap, last
                ));
            }
            parts.push(format!("{} {:.3} dB", run.name, gap));
        }
        Ok(format!("sweep-5 to final gaps: {}", parts.join(", ")))
    });
}

// ---------------------------------------------------------------------------
// Criterion 6 — unregularized block solves never increase the objective
// ---------------------------------------------------------------------------

fn planted_cp_design(seed: u64, n: usize) -> DesignSet {
    let (m1, m2, p) = (4usize, 4usize, 3usize);
    let mut rng = stream(seed, "planted-factors");
    let a = rmat(&mut rng, m1, 2);
    let mut b = rmat(&mut rng, m2, 2);
    let mut c = rmat(&mut rng, p, 2);
    // A dominant first component keeps the plant away from the
    // equal-magnitude slow-convergence regime.
    b.column_mut(1).scale_mut(0.3);
    c.column_mut(1).scale_mut(0.3);
    let truth = AnyModel::Cp(CpModel::new(a, b, c).expect("cp factors"));
    let t0 = m1.max(m2);
    let total = t0 + n + 4;
    let mut xr = stream(seed, "planted-input");
    let x: Vec<Complex64> = (0..total).map(|_| complex_standard_normal(&mut xr)).collect();
    let zeros = vec![Complex64::default(); total];
    let full = DesignSet::build(&x, &zeros, t0, n, m1, m2, p).expect("full design");
    let clean = truth.predict(&full).expect("plant prediction");
    let power: f64 = clean.iter().map(|z| z.norm_sqr()).sum::<f64>() / clean.len() as f64;
    let sigma = (power * 10f64.powf(-35.0 / 10.0)).sqrt();
    let mut nr = stream(seed, "planted-noise");
    let mut y = zeros;
    for (t, value) in clean.iter().enumerate() {
        y[t0 + t] = value + complex_standard_normal(&mut nr) * sigma;
    }
    DesignSet::build(&x, &y, t0, n, m1, m2, p).expect("train design")
}

fn first_increase(trace: &[f64]) -> Option<(usize, f64, f64)> {
    let scale = trace.first().copied().unwrap_or(0.0);
    for (k, w) in trace.windows(2).enumerate() {
        if w[1] > w[0] * (1.0 + 1e-9) + 1e-12 * scale {
            return Some((k, w[0], w[1]));
        }
    }
    None
}

#[test]
fn criterion_06_unregularized_block_solves_are_monotone() {
    criterion(6, "block-solve monotonicity", Duration::from_secs(60), Duration::ZERO, || {
        let mut runs = 0usize;
        for s in 0u64..20 {
            let design = planted_cp_design(derive_seed(600, &format!("monotone-{s}")), 400);
            let cfg = SolverConfig {
                gamma: 0.0,
                iterations: 4,
                seed: derive_seed(601, &format!("solver-{s}")),
                ..SolverConfig::default()
            };
            let reports = [
                ("cp", als_cp(&design, 2, &cfg).map_err(|e| e.to_string())?.1),
                ("tt", als_tt(&design, (2, 2), &cfg).map_err(|e| e.to_string())?.1),
                ("tucker", als_tucker(&design, (2, 2, 2), &cfg).map_err(|e| e.to_string())?.1),
            ];
            for (name, report) in reports {
                if let Some((k, before, after)) = first_increase(&report.objective_trace) {
                    return Err(format!(
                        "{name} seed {s}: objective rose at block solve {k}: {before:.6e} -> {after:.6e}"
                    ));
                }
                runs += 1;
            }
        }
        Ok(format!("{runs} unregularized runs kept a non-increasing objective"))
    });
}

// ---------------------------------------------------------------------------
// Criterion 7 — projected training matches plain training and is faster
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_projected_training_matches_plain_and_runs_faster() {
    criterion(7, "projected-solver fidelity and speed", Duration::from_secs(120), Duration::ZERO, || {
        // A densely sampled drive keeps neighboring envelope delays strongly
        // correlated, which is the regime the mode-2/3 projection targets.
        let mut cfg = ExperimentConfig::default();
        cfg.ofdm.active_subcarriers = 200;
        let data = generate_data(&cfg).map_err(|e| e.to_string())?;
        let train = DesignSet::build(&data.x, &data.y, cfg.train.t0, cfg.train.n, 11, 10, 8)
            .map_err(|e| e.to_string())?;
        let test = DesignSet::build(&data.x, &data.y, cfg.test.t0, cfg.test.n, 11, 10, 8)
            .map_err(|e| e.to_string())?;
        let scfg = SolverConfig {
            gamma: 1e-5,
            iterations: 3,
            seed: derive_seed(cfg.seed, "projected-comparison"),
            ..SolverConfig::default()
        };
        let (plain_model, plain_report) = als_cp(&train, 3, &scfg).map_err(|e| e.to_string())?;
        let (proj_model, proj_report, _) =
            rp_als(&train, ModelKind::Cp, &[3], (5, 3), &scfg).map_err(|e| e.to_string())?;
        let eval = |m: &AnyModel| -> Result<f64, String> {
            nmse(&m.predict(&test).map_err(|e| e.to_string())?, &test.y).map_err(|e| e.to_string())
        };
        let plain_db = eval(&AnyModel::Cp(plain_model))?;
        let proj_db = eval(&proj_model)?;
        let gap = (plain_db - proj_db).abs();
        if gap > 0.5 {
            return Err(format!(
                "NMSE gap {gap:.3} dB > 0.5 (plain {plain_db:.3} dB, projected {proj_db:.3} dB)"
            ));
        }
        let plain_sweep = median_sweep_seconds(&plain_report, 3);
        let proj_sweep = median_sweep_seconds(&proj_report, 3);
        if !(proj_sweep < plain_sweep) {
            return Err(format!(
                "projected median sweep {:.2} ms is not faster than plain {:.2} ms",
                proj_sweep * 1e3,
                plain_sweep * 1e3
            ));
        }
        Ok(format!(
            "plain {plain_db:.2} dB vs projected {proj_db:.2} dB (gap {gap:.3}); median sweep {:.1} ms vs {:.1} ms",
            proj_sweep * 1e3,
            plain_sweep * 1e3
        ))
    });
}

// ---------------------------------------------------------------------------
// Criterion 8 — projection error bound
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_projection_error_bound_holds() {
    criterion(8, "projection error bound", Duration::from_secs(120), Duration::ZERO, || {
        let (m1, m2, p) = (6usize, 5usize, 4usize);
        let mut checked = 0usize;
        for (f, kind) in [ModelKind::Cp, ModelKind::Tt, ModelKind::Tucker].into_iter().enumerate() {
            for k in 0usize..50 {
                let m2t = 1 + k % m2;
                let pt = 1 + (k / m2) % p;
                let seed = derive_seed(800 + f as u64, &format!("bound-{k}"));
                let design = random_design(seed, 300, m1, m2, p);
                let ranks: Vec<usize> = match kind {
                    ModelKind::Cp => vec![2],
                    ModelKind::Tt => vec![2, 2],
                    ModelKind::Tucker => vec![2, 2, 2],
                    ModelKind::Gmp => unreachable!(),
                };
                let star = random_model(kind, (m1, m2, p), &ranks, derive_seed(seed, "star"));
                let proj = project_modes_23(&design.m, m2t, pt, 5, 1, seed)
                    .map_err(|e| e.to_string())?;
                let attained = projected_star_residual(&design, &proj, &star)
                    .map_err(|e| e.to_string())?;
                let report = check_projection_bound(&design, &proj, &star, attained)
                    .map_err(|e| e.to_string())?;
                if !report.holds {
                    return Err(format!(
                        "{} with targets ({m2t},{pt}) seed {k}: attained {:.6e} exceeds bound {:.6e}",
                        kind.as_str(),
                        report.lhs,
                        report.rhs
                    ));
                }
                checked += 1;
            }
        }
        Ok(format!(
            "bound held on {checked} randomized instances spanning targets (1,1)..=({m2},{p})"
        ))
    });
}

// ---------------------------------------------------------------------------
// Criterion 9 — proximal solver correctness
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_proximal_solver_correctness() {
    let ctx = full_scale();
    criterion(9, "proximal solver correctness", Duration::from_secs(60), Duration::ZERO, || {
        // Part 1: orthonormal design, where one soft-threshold of X^H y is
        // the exact minimizer.
        let n = 48;
        let mut qr_rng = stream(4241, "ortho-basis");
        let q = rmat(&mut qr_rng, n, 12).qr().q();
        let one = Complex64::new(1.0, 0.0);
        let mut design = DesignSet::build(&vec![one; 80], &vec![one; 80], 12, n, 12, 1, 1)
            .map_err(|e| e.to_string())?;
        for i in 0..12 {
            for t in 0..n {
                design.h.set(&[t, i], q[(t, i)]).map_err(|e| e.to_string())?;
            }
        }
        let mut yr = stream(4242, "ortho-target");
        for t in 0..n {
            design.y[t] = complex_standard_normal(&mut yr);
        }
        let correlations = design.unfolded_basis().adjoint() * design.y_vector();
        let gamma =
            correlations.iter().map(|z| z.norm()).sum::<f64>() / correlations.len() as f64 * 0.5;
        let scfg = SolverConfig {
            gamma,
            iterations: 25,
            seed: 4243,
            ..SolverConfig::default()
        };
        let (model, _) = fista_lasso(&design, &scfg).map_err(|e| e.to_string())?;
        let mut worst = 0.0f64;
        let mut pruned = 0usize;
        for (got, b) in model.s.data().iter().zip(correlations.iter()) {
            let mag = b.norm();
            let want = if mag <= gamma {
                Complex64::default()
            } else {
                b * (1.0 - gamma / mag)
            };
            worst = worst.max((got - want).norm());
            if want == Complex64::default() {
                pruned += 1;
                if got.re.to_bits() != 0.0f64.to_bits() || got.im.to_bits() != 0.0f64.to_bits() {
                    return Err(format!("thresholded coefficient is {got} instead of exact zero"));
                }
            }
        }
        if worst > 1e-10 {
            return Err(format!("orthonormal closed-form mismatch {worst:.3e} > 1e-10"));
        }
        if pruned == 0 {
            return Err("threshold level pruned nothing; the check is vacuous".into());
        }

        // Part 2: on the full-scale data the accelerated method must be at
        // least as good as plain proximal gradient after 200 steps, and its
        // pruned coefficients must be exact zeros.
        let scfg = SolverConfig {
            gamma: 1e-3,
            iterations: 200,
            seed: 9,
            ..SolverConfig::default()
        };
        let (fm, fr) = fista_lasso(&ctx.train, &scfg).map_err(|e| e.to_string())?;
        let (_, gr) = pgd_lasso(&ctx.train, &scfg).map_err(|e| e.to_string())?;
        let f_obj = *fr.objective_trace.last().expect("objective recorded");
        let g_obj = *gr.objective_trace.last().expect("objective recorded");
        if !(f_obj <= g_obj) {
            return Err(format!(
                "accelerated objective {f_obj:.6e} exceeds plain proximal {g_obj:.6e} after 200 steps"
            ));
        }
        let mut exact_zeros = 0usize;
        for z in fm.s.data() {
            if z.norm() == 0.0 {
                if z.re.to_bits() != 0.0f64.to_bits() || z.im.to_bits() != 0.0f64.to_bits() {
                    return Err("pruned coefficient is a negative zero, not an exact zero".into());
                }
                exact_zeros += 1;
            }
        }
        if exact_zeros == 0 {
            return Err("full-scale l1 fit pruned nothing at gamma 1e-3".into());
        }
        Ok(format!(
            "closed form to {worst:.1e} ({pruned}/12 pruned); full scale: {f_obj:.3e} <= {g_obj:.3e}, {exact_zeros}/880 exact zeros"
        ))
    });
}

// ---------------------------------------------------------------------------
// Criterion 10 — randomized truncation quality
// ---------------------------------------------------------------------------

/// Exact sequential truncation oracle: keep the top-r eigenvectors of each
/// unfolding's Gram matrix, truncating mode 2 first, then mode 3 of the
/// partially truncated tensor. Returns the relative truncation error.
fn exact_sequential_truncation(m: &DenseTensor, r2: usize, r3: usize) -> f64 {
    fn top_eigvecs(unf: &DMatrix<Complex64>, r: usize) -> DMatrix<Complex64> {
        let gram = (unf * unf.adjoint()).map(|z| z.re);
        let d = gram.nrows();
        let se = gram.symmetric_eigen();
        let mut order: Vec<usize> = (0..se.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| se.eigenvalues[b].partial_cmp(&se.eigenvalues[a]).unwrap());
        DMatrix::from_fn(d, r, |i, c| Complex64::new(se.eigenvectors[(i, order[c])], 0.0))
    }
    let total = m.fro_norm();
    let u2 = top_eigvecs(&m.unfold(1).unwrap(), r2);
    let partial = m.mode_matrix_product(1, &u2.adjoint()).unwrap();
    let u3 = top_eigvecs(&partial.unfold(2).unwrap(), r3);
    let core = partial.mode_matrix_product(2, &u3.adjoint()).unwrap();
    let kept = core.fro_norm();
    ((total * total - kept * kept).max(0.0)).sqrt() / total
}

#[test]
fn criterion_10_randomized_truncation_quality() {
    let ctx = full_scale();
    criterion(10, "randomized truncation quality", Duration::from_secs(60), Duration::ZERO, || {
        // Part 1: a tensor of exact multilinear rank (2,2,2) must be
        // recovered to working precision.
        let mut rng = stream(1000, "planted-low-rank");
        let q1 = rmat(&mut rng, 12, 2).qr().q();
        let q2 = rmat(&mut rng, 10, 2).qr().q();
        let q3 = rmat(&mut rng, 8, 2).qr().q();
        let core = rtensor(&mut rng, vec![2, 2, 2]);
        let planted = reconstruct(&core, &[q1, q2, q3]).map_err(|e| e.to_string())?;
        let (score, sfactors) =
            randomized_sthosvd(&planted, &[2, 2, 2], 5, 2, 1001).map_err(|e| e.to_string())?;
        let rebuilt = reconstruct(&score, &sfactors).map_err(|e| e.to_string())?;
        let recovery = rel_err(planted.data(), rebuilt.data());
        if recovery > 1e-8 {
            return Err(format!("planted rank-(2,2,2) recovery error {recovery:.3e} > 1e-8"));
        }

        // Part 2: on the measured envelope tensor the randomized mode-2/3
        // truncation must be within a factor 2 of exact truncation.
        let m = &ctx.train.m;
        let pair = project_modes_23(m, 5, 3, 5, 2, ctx.seed).map_err(|e| e.to_string())?;
        let randomized = pair.approx_error / m.fro_norm();
        let exact = exact_sequential_truncation(m, 5, 3);
        if randomized > 2.0 * exact + 1e-15 {
            return Err(format!(
                "randomized truncation {randomized:.4e} exceeds twice the exact {exact:.4e}"
            ));
        }
        Ok(format!(
            "planted recovery {recovery:.1e}; envelope truncation {randomized:.4e} vs exact {exact:.4e}"
        ))
    });
}

// ---------------------------------------------------------------------------
// Criterion 11 — tensor primitives vs loop oracles
// ---------------------------------------------------------------------------

fn det_fill(salt: u64, idx: &[usize]) -> Complex64 {
    let mut h: u64 = 0xcbf29ce484222325 ^ salt.wrapping_mul(0x9e3779b97f4a7c15);
    for &i in idx {
        h = (h ^ (i as u64 + 1)).wrapping_mul(0x100000001b3);
    }
    let re = ((h >> 16) % 2000) as f64 / 1000.0 - 1.0;
    let im = ((h >> 40) % 2000) as f64 / 1000.0 - 1.0;
    Complex64::new(re, im)
}

fn for_each_index(shape: &[usize], mut f: impl FnMut(&[usize])) {
    let total: usize = shape.iter().product();
    let mut idx = vec![0usize; shape.len()];
    for _ in 0..total {
        f(&idx);
        for k in 0..shape.len() {
            idx[k] += 1;
            if idx[k] < shape[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

fn all_shapes(max_order: usize, max_dim: usize) -> Vec<Vec<usize>> {
    let mut shapes = Vec::new();
    for order in 1..=max_order {
        let total = max_dim.pow(order as u32);
        for code in 0..total {
            let mut c = code;
            let mut shape = Vec::with_capacity(order);
            for _ in 0..order {
                shape.push(1 + c % max_dim);
                c /= max_dim;
            }
            shapes.push(shape);
        }
    }
    shapes
}

#[test]
fn criterion_11_tensor_ops_match_loop_oracles() {
    criterion(11, "tensor primitives vs loop oracles", Duration::from_secs(60), Duration::ZERO, || {
        let tol = |reference: Complex64| 1e-12 * (1.0 + reference.norm());
        let mut comparisons = 0usize;
        let shapes = all_shapes(4, 4);
        let shape_count = shapes.len();
        for (si, shape) in shapes.into_iter().enumerate() {
            let salt = si as u64;
            let t = DenseTensor::from_fn(shape.clone(), |idx| det_fill(salt, idx))
                .map_err(|e| e.to_string())?;
            let order = shape.len();
            for mode in 0..order {
                // Unfolding: row is the mode index, column merges the other
                // indices in their original order, first surviving fastest.
                let unf = t.unfold(mode).map_err(|e| e.to_string())?;
                let mut failure: Option<String> = None;
                for_each_index(&shape, |idx| {
                    if failure.is_some() {
                        return;
                    }
                    let mut col = 0usize;
                    let mut stride = 1usize;
                    for (l, &i) in idx.iter().enumerate() {
                        if l == mode {
                            continue;
                        }
                        col += i * stride;
                        stride *= shape[l];
                    }
                    let want = t.get(idx).unwrap();
                    let got = unf[(idx[mode], col)];
                    if (got - want).norm() > tol(want) {
                        failure = Some(format!(
                            "unfold mode {mode} of {shape:?} at {idx:?}: {got} vs {want}"
                        ));
                    }
                });
                if let Some(msg) = failure {
                    return Err(msg);
                }
                comparisons += t.len();

                // Mode-matrix product against the definition.
                let q = DMatrix::from_fn(3, shape[mode], |r, c| det_fill(salt ^ 0x51, &[mode, r, c]));
                let prod = t.mode_matrix_product(mode, &q).map_err(|e| e.to_string())?;
                let mut out_shape = shape.clone();
                out_shape[mode] = 3;
                let mut failure: Option<String> = None;
                for_each_index(&out_shape, |idx| {
                    if failure.is_some() {
                        return;
                    }
                    let mut src = idx.to_vec();
                    let mut want = Complex64::default();
                    for s in 0..shape[mode] {
                        src[mode] = s;
                        want += q[(idx[mode], s)] * t.get(&src).unwrap();
                    }
                    let got = prod.get(idx).unwrap();
                    if (got - want).norm() > tol(want) {
                        failure = Some(format!(
                            "mode-{mode} matrix product on {shape:?} at {idx:?}: {got} vs {want}"
                        ));
                    }
                });
                if let Some(msg) = failure {
                    return Err(msg);
                }
                comparisons += prod.len();

                // Mode-vector contraction (drops the mode).
                if order >= 2 {
                    let v: Vec<Complex64> =
                        (0..shape[mode]).map(|s| det_fill(salt ^ 0x77, &[mode, s])).collect();
                    let contracted = t.mode_vec_product(mode, &v).map_err(|e| e.to_string())?;
                    let mut out_shape = shape.clone();
                    out_shape.remove(mode);
                    let mut failure: Option<String> = None;
                    for_each_index(&out_shape, |idx| {
                        if failure.is_some() {
                            return;
                        }
                        let mut src = idx.to_vec();
                        src.insert(mode, 0);
                        let mut want = Complex64::default();
                        for s in 0..shape[mode] {
                            src[mode] = s;
                            want += t.get(&src).unwrap() * v[s];
                        }
                        let got = contracted.get(idx).unwrap();
                        if (got - want).norm() > tol(want) {
                            failure = Some(format!(
                                "mode-{mode} vector product on {shape:?} at {idx:?}: {got} vs {want}"
                            ));
                        }
                    });
                    if let Some(msg) = failure {
                        return Err(msg);
                    }
                    comparisons += contracted.len();
                }
            }

            // Trailing contraction used by the full-tensor predictor.
            if order >= 2 {
                let weights = DenseTensor::from_fn(shape[1..].to_vec(), |idx| det_fill(salt ^ 0x99, idx))
                    .map_err(|e| e.to_string())?;
                let out = t.contract_leading(&weights).map_err(|e| e.to_string())?;
                let mut oracle = vec![Complex64::default(); shape[0]];
                for_each_index(&shape[1..], |midx| {
                    let w = weights.get(midx).unwrap();
                    let mut full = vec![0usize; order];
                    full[1..].copy_from_slice(midx);
                    for (n, acc) in oracle.iter_mut().enumerate() {
                        full[0] = n;
                        *acc += t.get(&full).unwrap() * w;
                    }
                });
                for (n, (got, want)) in out.iter().zip(oracle.iter()).enumerate() {
                    if (got - want).norm() > tol(*want) {
                        return Err(format!(
                            "trailing contraction on {shape:?} entry {n}: {got} vs {want}"
                        ));
                    }
                }
                comparisons += out.len();
            }
        }
        Ok(format!("{comparisons} entries agreed across {shape_count} shapes"))
    });
}

// ---------------------------------------------------------------------------
// Criterion 12 — pipeline determinism
// ---------------------------------------------------------------------------

const DETERMINISM_CONFIG: &str = r#"
seed = 7
timing_repeats = 2

[ofdm]
fft_len = 256
active_subcarriers = 180
cyclic_prefix_len = 16
num_symbols = 16

[train]
t0 = 32
n = 1500

[test]
t0 = 2000
n = 2000

[[models]]
name = "cp-als"
kind = "cp"
m1 = 5
m2 = 4
p = 3
ranks = [2]
gamma = 1e-6
iterations = 3
"#;

/// Reads a per-block trace and blanks the wall-time column, which is the
/// only field allowed to differ between identical reruns.
fn trace_without_timings(path: &Path) -> Result<String, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(text
        .lines()
        .map(|line| {
            let mut cells: Vec<&str> = line.split(',').collect();
            if cells.len() == 4 {
                cells[3] = "-";
            }
            cells.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n"))
}

#[test]
fn criterion_12_pipeline_is_deterministic() {
    criterion(12, "pipeline determinism", Duration::from_secs(120), Duration::ZERO, || {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let config = dir.path().join("experiment.toml");
        std::fs::write(&config, DETERMINISM_CONFIG).map_err(|e| e.to_string())?;
        let run_pipeline = |tag: &str| -> Result<PathBuf, String> {
            let data = dir.path().join(format!("data-{tag}"));
            let out = dir.path().join(format!("run-{tag}"));
            let steps: Vec<Vec<String>> = vec![
                vec![
                    "generate".into(),
                    "--config".into(),
                    config.display().to_string(),
                    "--out".into(),
                    data.display().to_string(),
                ],
                vec![
                    "train".into(),
                    "--config".into(),
                    config.display().to_string(),
                    "--data".into(),
                    data.display().to_string(),
                    "--model".into(),
                    "cp-als".into(),
                    "--out".into(),
                    out.display().to_string(),
                ],
                vec![
                    "evaluate".into(),
                    "--model".into(),
                    out.join("cp-als.model.json").display().to_string(),
                    "--data".into(),
                    data.display().to_string(),
                    "--config".into(),
                    config.display().to_string(),
                    "--out".into(),
                    out.display().to_string(),
                ],
            ];
            for args in steps {
                let output = Command::new(env!("CARGO_BIN_EXE_gmptensor"))
                    .args(&args)
                    .output()
                    .map_err(|e| e.to_string())?;
                if !output.status.success() {
                    return Err(format!(
                        "step {:?} failed: {}",
                        args[0],
                        String::from_utf8_lossy(&output.stderr)
                    ));
                }
            }
            // Keep the data directory comparable too.
            for name in ["x.ten", "y.ten", "generate.manifest.json"] {
                std::fs::copy(data.join(name), out.join(name)).map_err(|e| e.to_string())?;
            }
            Ok(out)
        };
        let first = run_pipeline("a")?;
        let second = run_pipeline("b")?;
        let byte_identical = [
            "x.ten",
            "y.ten",
            "generate.manifest.json",
            "cp-als.model.json",
            "train.manifest.json",
            "evaluate.report.json",
        ];
        for name in byte_identical {
            let a = std::fs::read(first.join(name)).map_err(|e| format!("{name}: {e}"))?;
            let b = std::fs::read(second.join(name)).map_err(|e| format!("{name}: {e}"))?;
            if a != b {
                return Err(format!("{name} differs between identical pipeline reruns"));
            }
        }
        let trace_a = trace_without_timings(&first.join("cp-als.trace.csv"))?;
        let trace_b = trace_without_timings(&second.join("cp-als.trace.csv"))?;
        if trace_a != trace_b {
            return Err("training trace differs beyond its wall-time column".into());
        }
        Ok(format!(
            "{} files byte-identical across reruns; trace identical up to wall times",
            byte_identical.len()
        ))
    });
}
