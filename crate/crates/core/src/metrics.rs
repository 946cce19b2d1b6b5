//! Output-quality metrics and the end-to-end model comparison harness.

use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use serde::Serialize;

use crate::config::{ExperimentConfig, ModelEntry, ProjectionConfig};
use crate::dataset::DesignSet;
use crate::decomp::ProjectionPair;
use crate::identify::{self, FitReport, SolverConfig};
use crate::models::{AnyModel, GmpModel, ModelKind};
use crate::rng::derive_seed;
use crate::signal::{ofdm_generate, reference_pa_apply, ReferencePa};
use crate::{Error, Result};

/// Reported in place of -inf when the error power underflows to zero.
pub const NMSE_FLOOR_DB: f64 = -300.0;

/// dB ratio of two nonnegative powers with the floor applied.
pub(crate) fn nmse_power(err_power: f64, ref_power: f64) -> f64 {
    if err_power <= 0.0 {
        return NMSE_FLOOR_DB;
    }
    if ref_power <= 0.0 {
        return f64::INFINITY;
    }
    (10.0 * (err_power / ref_power).log10()).max(NMSE_FLOOR_DB)
}

/// Normalized mean square error in dB:
/// `10 log10(‖y_model − y_test‖² / ‖y_test‖²)`, floored at −300 dB.
pub fn nmse(y_model: &[Complex64], y_test: &[Complex64]) -> Result<f64> {
    if y_model.len() != y_test.len() {
        return Err(Error::ShapeMismatch(format!(
            "nmse over vectors of length {} and {}",
            y_model.len(),
            y_test.len()
        )));
    }
    if y_test.is_empty() {
        return Err(Error::InvalidArgument("nmse of empty vectors".into()));
    }
    let err: f64 = y_model
        .iter()
        .zip(y_test)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    let reference: f64 = y_test.iter().map(|z| z.norm_sqr()).sum();
    if !err.is_finite() || !reference.is_finite() {
        return Err(Error::Numeric("nmse over non-finite samples".into()));
    }
    if reference == 0.0 {
        return Err(Error::InvalidArgument(
            "nmse is undefined for a zero test signal".into(),
        ));
    }
    Ok(nmse_power(err, reference))
}

/// Counts coefficients with modulus strictly above `tol`. With `tol = 0`
/// exact zeros (for example those produced by soft-thresholding) are
/// excluded and everything else counts.
pub fn sparsity(model: &GmpModel, tol: f64) -> Result<(usize, f64)> {
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(Error::InvalidArgument("sparsity tol must be >= 0".into()));
    }
    let total = model.s.len();
    let nonzeros = model.s.data().iter().filter(|z| z.norm() > tol).count();
    Ok((nonzeros, nonzeros as f64 / total as f64))
}

/// Number of stored parameters of any family with modulus above `tol`.
pub fn stored_nonzeros(model: &AnyModel, tol: f64) -> usize {
    let count_mat =
        |m: &nalgebra::DMatrix<Complex64>| m.iter().filter(|z| z.norm() > tol).count();
    match model {
        AnyModel::Gmp(m) => m.s.data().iter().filter(|z| z.norm() > tol).count(),
        AnyModel::Cp(m) => count_mat(&m.a) + count_mat(&m.b) + count_mat(&m.c),
        AnyModel::Tt(m) => {
            count_mat(&m.a)
                + m.b.data().iter().filter(|z| z.norm() > tol).count()
                + count_mat(&m.c)
        }
        AnyModel::Tucker(m) => {
            m.g.data().iter().filter(|z| z.norm() > tol).count()
                + count_mat(&m.a)
                + count_mat(&m.b)
                + count_mat(&m.c)
        }
    }
}

/// One evaluated model: accuracy, size, and cost columns plus timings.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub name: String,
    pub kind: String,
    pub m1: usize,
    pub m2: usize,
    pub p: usize,
    pub ranks: Vec<usize>,
    pub nmse_db: f64,
    pub num_params: u64,
    pub flops: u64,
    pub nonzeros: usize,
    pub train_time_s: f64,
    pub simulate_time_s: f64,
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

/// Runs `predict` `repeats` times and returns the prediction with the
/// median wall time in seconds.
pub fn timed_predict(
    model: &AnyModel,
    design: &DesignSet,
    repeats: usize,
) -> Result<(Vec<Complex64>, f64)> {
    let repeats = repeats.max(1);
    let mut times = Vec::with_capacity(repeats);
    let mut last = Vec::new();
    for _ in 0..repeats {
        let t0 = Instant::now();
        last = model.predict(design)?;
        times.push(t0.elapsed().as_secs_f64());
    }
    Ok((last, median(times)))
}

/// Trains one configured entry on a prepared design set. The solver is
/// chosen by the entry's family, `solver` field, and `rp_als` flag; the
/// projection pair is returned when the projected solver ran.
pub fn train_from_entry(
    design: &DesignSet,
    entry: &ModelEntry,
    seed: u64,
    proj: &ProjectionConfig,
) -> Result<(AnyModel, FitReport, Option<ProjectionPair>)> {
    let kind = entry.model_kind()?;
    let cfg = SolverConfig {
        gamma: entry.gamma,
        iterations: entry.iterations,
        seed,
        init_scale: entry.init_scale,
        record_objective: true,
        oversample: proj.oversample,
        power: proj.power,
    };
    if entry.rp_als {
        let (model, report, pair) =
            identify::rp_als(design, kind, &entry.ranks, (proj.m2, proj.p), &cfg)?;
        return Ok((model, report, Some(pair)));
    }
    let (model, report) = match kind {
        ModelKind::Gmp => match entry.solver.as_deref() {
            None | Some("ridge") => {
                let (m, r) = identify::ridge_ls(design, &cfg)?;
                (AnyModel::Gmp(m), r)
            }
            Some("fista") => {
                let (m, r) = identify::fista_lasso(design, &cfg)?;
                (AnyModel::Gmp(m), r)
            }
            Some("pgd") => {
                let (m, r) = identify::pgd_lasso(design, &cfg)?;
                (AnyModel::Gmp(m), r)
            }
            Some(other) => {
                return Err(Error::Config(format!("unknown gmp solver {other:?}")));
            }
        },
        ModelKind::Cp => {
            let (m, r) = identify::als_cp(design, entry.ranks[0], &cfg)?;
            (AnyModel::Cp(m), r)
        }
        ModelKind::Tt => {
            let (m, r) = identify::als_tt(design, (entry.ranks[0], entry.ranks[1]), &cfg)?;
            (AnyModel::Tt(m), r)
        }
        ModelKind::Tucker => {
            let (m, r) = identify::als_tucker(
                design,
                (entry.ranks[0], entry.ranks[1], entry.ranks[2]),
                &cfg,
            )?;
            (AnyModel::Tucker(m), r)
        }
    };
    Ok((model, report, None))
}

/// Generated input/output pair for one experiment configuration.
pub struct ExperimentData {
    pub x: Vec<Complex64>,
    pub y: Vec<Complex64>,
}

/// Generates the configured OFDM drive signal and reference-amplifier
/// response. The unit-power source is scaled by `pa.drive_db` before the
/// amplifier; `x` is the scaled signal the amplifier actually sees, which is
/// also what every design window is built from.
pub fn generate_data(cfg: &ExperimentConfig) -> Result<ExperimentData> {
    let mut x = ofdm_generate(&cfg.ofdm, cfg.seed)?;
    let scale = 10f64.powf(cfg.pa.drive_db / 20.0);
    x.iter_mut().for_each(|z| *z *= scale);
    let mut pa = ReferencePa::reference();
    pa.snr_db = cfg.pa.snr_db;
    let y = reference_pa_apply(&x, &pa, cfg.seed)?;
    Ok(ExperimentData { x, y })
}

/// Trains and evaluates every configured model on shared data, producing
/// one comparison row per entry.
pub fn compare_models(cfg: &ExperimentConfig) -> Result<Vec<EvalReport>> {
    cfg.validate()?;
    let data = generate_data(cfg)?;
    let mut rows = Vec::with_capacity(cfg.models.len());
    for entry in &cfg.models {
        rows.push(run_entry(cfg, &data, entry)?);
    }
    Ok(rows)
}

/// Trains one entry on the configured train window and evaluates it on the
/// test window.
pub fn run_entry(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    entry: &ModelEntry,
) -> Result<EvalReport> {
    let train = DesignSet::build(
        &data.x,
        &data.y,
        cfg.train.t0,
        cfg.train.n,
        entry.m1,
        entry.m2,
        entry.p,
    )?;
    let test = DesignSet::build(
        &data.x,
        &data.y,
        cfg.test.t0,
        cfg.test.n,
        entry.m1,
        entry.m2,
        entry.p,
    )?;
    let seed = derive_seed(cfg.seed, &format!("model-{}", entry.name));
    let t0 = Instant::now();
    let (model, _report, _pair) = train_from_entry(&train, entry, seed, &cfg.projection)?;
    let train_time_s = t0.elapsed().as_secs_f64();
    let (pred, simulate_time_s) = timed_predict(&model, &test, cfg.timing_repeats)?;
    let nmse_db = nmse(&pred, &test.y)?;
    Ok(EvalReport {
        name: entry.name.clone(),
        kind: entry.kind.clone(),
        m1: entry.m1,
        m2: entry.m2,
        p: entry.p,
        ranks: entry.ranks.clone(),
        nmse_db,
        num_params: model.param_count(),
        flops: model.flop_count(),
        nonzeros: stored_nonzeros(&model, 0.0),
        train_time_s,
        simulate_time_s,
    })
}

fn ranks_label(ranks: &[usize]) -> String {
    if ranks.is_empty() {
        "-".to_string()
    } else {
        ranks
            .iter()
            .map(|r| r.to_string())
            .collect::<Vec<_>>()
            .join("x")
    }
}

/// Writes comparison rows as CSV, timings included.
pub fn write_reports_csv(path: &Path, rows: &[EvalReport]) -> Result<()> {
    let mut out = String::from(
        "name,kind,m1,m2,p,ranks,nmse_db,num_params,flops,nonzeros,train_time_s,simulate_time_s\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.name,
            r.kind,
            r.m1,
            r.m2,
            r.p,
            ranks_label(&r.ranks),
            r.nmse_db,
            r.num_params,
            r.flops,
            r.nonzeros,
            r.train_time_s,
            r.simulate_time_s,
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Writes comparison rows as JSON together with the configuration that
/// produced them.
pub fn write_reports_json(
    path: &Path,
    cfg: &ExperimentConfig,
    config_hash: &str,
    rows: &[EvalReport],
) -> Result<()> {
    #[derive(Serialize)]
    struct Document<'a> {
        config_hash: &'a str,
        config: &'a ExperimentConfig,
        results: &'a [EvalReport],
    }
    let doc = Document {
        config_hash,
        config: cfg,
        results: rows,
    };
    let body = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::Format(format!("report serialization: {e}")))?;
    std::fs::write(path, body)?;
    Ok(())
}

/// Fixed-width text table of comparison rows for terminal output.
pub fn render_table(rows: &[EvalReport]) -> String {
    let header = [
        "model", "kind", "dims", "ranks", "NMSE(dB)", "params", "flops", "nonzero", "train(s)",
        "sim(s)",
    ];
    let mut cells: Vec<[String; 10]> = Vec::with_capacity(rows.len());
    for r in rows {
        cells.push([
            r.name.clone(),
            r.kind.clone(),
            format!("({},{},{})", r.m1, r.m2, r.p),
            ranks_label(&r.ranks),
            format!("{:.4}", r.nmse_db),
            r.num_params.to_string(),
            r.flops.to_string(),
            r.nonzeros.to_string(),
            format!("{:.4}", r.train_time_s),
            format!("{:.6}", r.simulate_time_s),
        ]);
    }
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &cells {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let fmt_row = |cols: &[String], widths: &[usize]| {
        cols.iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:>w$}", w = w))
            .collect::<Vec<_>>()
            .join("  ")
    };
    let header_cells: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    out.push_str(&fmt_row(&header_cells, &widths));
    out.push('\n');
    for row in &cells {
        out.push_str(&fmt_row(row, &widths));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DenseTensor;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn nmse_exact_match_hits_the_floor() {
        let y = vec![c(1.0, 2.0), c(-0.5, 0.25)];
        assert_eq!(nmse(&y, &y).unwrap(), NMSE_FLOOR_DB);
    }

    #[test]
    fn nmse_zero_model_is_zero_db() {
        let y = vec![c(1.0, 0.0), c(0.0, -2.0), c(3.0, 4.0)];
        let zero = vec![Complex64::default(); 3];
        assert!(nmse(&zero, &y).unwrap().abs() < 1e-12);
    }

    #[test]
    fn nmse_relative_scaling_is_analytic() {
        let y: Vec<Complex64> = (0..64)
            .map(|k| c((k as f64 * 0.7).sin(), (k as f64 * 0.3).cos()))
            .collect();
        let scaled: Vec<Complex64> = y.iter().map(|z| z * 1.001).collect();
        assert!((nmse(&scaled, &y).unwrap() + 60.0).abs() < 1e-9);
        let alpha = 0.9;
        let scaled: Vec<Complex64> = y.iter().map(|z| z * alpha).collect();
        let expected = 20.0 * (alpha - 1.0f64).abs().log10();
        assert!((nmse(&scaled, &y).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn nmse_is_phase_rotation_invariant() {
        let y: Vec<Complex64> = (0..32)
            .map(|k| c((k as f64).cos(), (k as f64 * 0.2).sin()))
            .collect();
        let model: Vec<Complex64> = y.iter().map(|z| z * 0.95 + c(0.01, -0.02)).collect();
        let base = nmse(&model, &y).unwrap();
        let rot = Complex64::from_polar(1.0, 1.234);
        let yr: Vec<Complex64> = y.iter().map(|z| z * rot).collect();
        let mr: Vec<Complex64> = model.iter().map(|z| z * rot).collect();
        assert!((nmse(&mr, &yr).unwrap() - base).abs() < 1e-10);
    }

    #[test]
    fn nmse_rejects_bad_inputs() {
        let y = vec![c(1.0, 0.0)];
        assert!(nmse(&y, &[]).is_err());
        assert!(nmse(&[c(0.0, 0.0)], &[c(0.0, 0.0)]).is_err());
        assert!(nmse(&[c(f64::NAN, 0.0)], &y).is_err());
    }

    #[test]
    fn sparsity_counts_strictly_above_tol() {
        let s = DenseTensor::new(
            vec![2, 2, 1],
            vec![c(0.0, 0.0), c(1e-3, 0.0), c(0.0, 1e-6), c(0.5, 0.5)],
        )
        .unwrap();
        let model = GmpModel::new(s).unwrap();
        assert_eq!(sparsity(&model, 0.0).unwrap(), (3, 0.75));
        assert_eq!(sparsity(&model, 1e-4).unwrap().0, 2);
        let zeros = GmpModel::new(DenseTensor::zeros(vec![2, 2, 2]).unwrap()).unwrap();
        assert_eq!(sparsity(&zeros, 0.0).unwrap().0, 0);
        assert!(sparsity(&model, -1.0).is_err());
    }

    #[test]
    fn median_of_odd_and_even_lists() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn table_rendering_is_aligned() {
        let rows = vec![EvalReport {
            name: "cp-als".into(),
            kind: "cp".into(),
            m1: 11,
            m2: 10,
            p: 8,
            ranks: vec![3],
            nmse_db: -49.1234,
            num_params: 87,
            flops: 2690,
            nonzeros: 87,
            train_time_s: 0.5,
            simulate_time_s: 0.001,
        }];
        let table = render_table(&rows);
        let mut lines = table.lines();
        let header = lines.next().unwrap();
        let row = lines.next().unwrap();
        assert_eq!(header.len(), row.len());
        assert!(header.contains("NMSE(dB)"));
        assert!(row.contains("-49.1234"));
    }
}
