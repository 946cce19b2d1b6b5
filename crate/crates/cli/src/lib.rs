//! Command implementations for the `gmptensor` binary.
//!
//! Every command is deterministic given a configuration file and a root
//! seed: output files carry no wall-clock information (timings go to
//! stdout only, and the per-iteration trace CSV keeps its elapsed column
//! clearly separated), so a rerun with the same inputs reproduces every
//! artifact byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gmptensor::config::{
    config_hash, load_config, ExperimentConfig, ModelEntry, SweepPlan, Window,
};
use gmptensor::dataset::DesignSet;
use gmptensor::identify::{self, SolverConfig};
use gmptensor::metrics::{
    self, generate_data, nmse, render_table, run_entry, stored_nonzeros, timed_predict,
    write_reports_csv, write_reports_json, ExperimentData,
};
use gmptensor::models::{load_model, save_model, ModelKind};
use gmptensor::rng::derive_seed;
use gmptensor::signal::{load_signal, save_signal};
use gmptensor::{Error, Result};
use serde::Serialize;

/// Process exit code for an error: 2 for configuration and argument
/// problems, 3 for numeric failures, 4 for file-system and format trouble.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::InvalidArgument(_)
        | Error::ShapeMismatch(_)
        | Error::ModeOutOfRange { .. } => 2,
        Error::Numeric(_) => 3,
        Error::Io(_) | Error::Format(_) => 4,
    }
}

/// Output format for report files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::InvalidArgument(format!(
                "unknown format {other:?}, expected csv or json"
            ))),
        }
    }
}

/// Loads the configuration file, or the built-in defaults when no path is
/// given. Returns the configuration together with the hash of its source
/// text.
pub fn load_or_default(config: Option<&Path>) -> Result<(ExperimentConfig, String)> {
    match config {
        Some(path) => load_config(path),
        None => {
            let cfg = ExperimentConfig::default();
            let raw = cfg.to_toml()?;
            let hash = config_hash(raw.as_bytes());
            cfg.validate()?;
            Ok((cfg, hash))
        }
    }
}

/// Parses `"a,b"` into a pair of integers.
pub fn parse_pair(s: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "expected two comma-separated integers, got {s:?}"
        )));
    }
    let a = parts[0]
        .trim()
        .parse()
        .map_err(|e| Error::InvalidArgument(format!("bad integer {:?}: {e}", parts[0])))?;
    let b = parts[1]
        .trim()
        .parse()
        .map_err(|e| Error::InvalidArgument(format!("bad integer {:?}: {e}", parts[1])))?;
    Ok((a, b))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("serialization: {e}")))?;
    std::fs::write(path, body + "\n")?;
    Ok(())
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)?;
    Ok(())
}

#[derive(Serialize)]
struct GenerateManifest {
    config_hash: String,
    seed: u64,
    signal_len: usize,
    files: BTreeMap<String, String>,
}

/// Generates the drive signal and amplifier response and writes both plus
/// a manifest into `out`.
pub fn cmd_generate(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let (mut cfg, hash) = load_or_default(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    ensure_dir(out)?;
    let data = generate_data(&cfg)?;
    let x_path = out.join("x.ten");
    let y_path = out.join("y.ten");
    save_signal(&x_path, &data.x)?;
    save_signal(&y_path, &data.y)?;
    let manifest = GenerateManifest {
        config_hash: hash,
        seed: cfg.seed,
        signal_len: data.x.len(),
        files: BTreeMap::from([
            ("x".to_string(), "x.ten".to_string()),
            ("y".to_string(), "y.ten".to_string()),
        ]),
    };
    write_json(&out.join("generate.manifest.json"), &manifest)?;
    println!(
        "generated {} samples -> {}, {}",
        data.x.len(),
        x_path.display(),
        y_path.display()
    );
    Ok(())
}

/// Loads the signal pair written by [`cmd_generate`] from a directory.
pub fn load_data(dir: &Path) -> Result<ExperimentData> {
    let x = load_signal(&dir.join("x.ten"))?;
    let y = load_signal(&dir.join("y.ten"))?;
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "input and output signals differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    Ok(ExperimentData { x, y })
}

/// Command-line overrides applied to a configured model entry before
/// training.
#[derive(Debug, Clone, Default)]
pub struct TrainOverrides {
    pub seed: Option<u64>,
    pub gamma: Option<f64>,
    pub iterations: Option<usize>,
    pub ranks: Option<Vec<usize>>,
    pub rp_als: bool,
    pub proj: Option<(usize, usize)>,
}

#[derive(Serialize)]
struct TrainManifest {
    config_hash: String,
    seed: u64,
    model: String,
    files: BTreeMap<String, String>,
}

fn find_entry<'a>(cfg: &'a ExperimentConfig, name: &str) -> Result<&'a ModelEntry> {
    cfg.models
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| {
            let known: Vec<&str> = cfg.models.iter().map(|e| e.name.as_str()).collect();
            Error::Config(format!(
                "no model named {name:?} in the configuration (known: {})",
                known.join(", ")
            ))
        })
}

/// Trains one configured model on the train window of previously generated
/// data, writing the model file, the per-iteration trace, and a manifest.
pub fn cmd_train(
    config: Option<&Path>,
    data_dir: &Path,
    model_name: &str,
    out: &Path,
    overrides: &TrainOverrides,
) -> Result<()> {
    let (mut cfg, hash) = load_or_default(config)?;
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    let mut entry = find_entry(&cfg, model_name)?.clone();
    if let Some(gamma) = overrides.gamma {
        entry.gamma = gamma;
    }
    if let Some(iters) = overrides.iterations {
        entry.iterations = iters;
    }
    if let Some(ranks) = &overrides.ranks {
        entry.ranks = ranks.clone();
    }
    if overrides.rp_als {
        entry.rp_als = true;
    }
    let mut projection = cfg.projection;
    if let Some((m2, p)) = overrides.proj {
        projection.m2 = m2;
        projection.p = p;
    }
    // Revalidate with the overrides in place.
    let mut check = cfg.clone();
    check.projection = projection;
    *check
        .models
        .iter_mut()
        .find(|e| e.name == model_name)
        .expect("entry exists") = entry.clone();
    check.validate()?;

    let data = load_data(data_dir)?;
    let train = DesignSet::build(
        &data.x,
        &data.y,
        cfg.train.t0,
        cfg.train.n,
        entry.m1,
        entry.m2,
        entry.p,
    )?;
    let seed = derive_seed(cfg.seed, &format!("model-{}", entry.name));
    ensure_dir(out)?;
    let t0 = Instant::now();
    let (model, report, _pair) = metrics::train_from_entry(&train, &entry, seed, &projection)?;
    let wall = t0.elapsed().as_secs_f64();
    let model_file = format!("{}.model.json", entry.name);
    let trace_file = format!("{}.trace.csv", entry.name);
    save_model(&out.join(&model_file), &model)?;
    report.write_csv(&out.join(&trace_file))?;
    let manifest = TrainManifest {
        config_hash: hash,
        seed: cfg.seed,
        model: entry.name.clone(),
        files: BTreeMap::from([
            ("model".to_string(), model_file.clone()),
            ("trace".to_string(), trace_file.clone()),
        ]),
    };
    write_json(&out.join("train.manifest.json"), &manifest)?;
    let final_nmse = report
        .train_nmse_trace
        .last()
        .map(|v| format!("{v:.2} dB"))
        .unwrap_or_else(|| "not recorded".to_string());
    println!(
        "trained {} in {:.3} s ({} steps, final train NMSE {})",
        entry.name,
        wall,
        report.iter_seconds.len(),
        final_nmse
    );
    println!("wrote {} and {}", model_file, trace_file);
    Ok(())
}

/// Deterministic part of an evaluation: everything except wall-clock
/// timings, which are printed to stdout instead of written to disk.
#[derive(Debug, Clone, Serialize)]
pub struct EvaluateReport {
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

/// Evaluates a saved model on a window of previously generated data.
pub fn cmd_evaluate(
    model_path: &Path,
    data_dir: &Path,
    config: Option<&Path>,
    window: Option<Window>,
    out: &Path,
    format: Format,
) -> Result<()> {
    let (cfg, _) = load_or_default(config)?;
    let model = load_model(model_path)?;
    let data = load_data(data_dir)?;
    let window = window.unwrap_or(cfg.test);
    let (m1, m2, p) = model.dims();
    let design = DesignSet::build(&data.x, &data.y, window.t0, window.n, m1, m2, p)?;
    let (pred, simulate_time_s) = timed_predict(&model, &design, cfg.timing_repeats)?;
    let nmse_db = nmse(&pred, &design.y)?;
    let name = model_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("model")
        .trim_end_matches(".model")
        .to_string();
    let report = EvaluateReport {
        name: name.clone(),
        kind: model.kind().as_str().to_string(),
        m1,
        m2,
        p,
        ranks: model.ranks(),
        nmse_db,
        num_params: model.param_count(),
        flops: model.flop_count(),
        nonzeros: stored_nonzeros(&model, 0.0),
    };
    ensure_dir(out)?;
    match format {
        Format::Json => write_json(&out.join("evaluate.report.json"), &report)?,
        Format::Csv => {
            let mut text =
                String::from("name,kind,m1,m2,p,ranks,nmse_db,num_params,flops,nonzeros\n");
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                report.name,
                report.kind,
                report.m1,
                report.m2,
                report.p,
                ranks_label(&report.ranks),
                report.nmse_db,
                report.num_params,
                report.flops,
                report.nonzeros,
            ));
            std::fs::write(out.join("evaluate.report.csv"), text)?;
        }
    }
    println!(
        "{}: NMSE {:.2} dB over samples {}..{}, {} parameters, {} flops/sample, {} stored nonzeros",
        name,
        nmse_db,
        window.t0,
        window.t0 + window.n,
        report.num_params,
        report.flops,
        report.nonzeros
    );
    println!(
        "simulate time {:.3} ms (median of {} runs)",
        simulate_time_s * 1e3,
        cfg.timing_repeats
    );
    Ok(())
}

fn sweep_csv(cfg: &ExperimentConfig, data: &ExperimentData, plan: &SweepPlan) -> Result<String> {
    let base = find_entry(cfg, &plan.model)?.clone();
    if !plan.gammas.is_empty() {
        let mut text = String::from("gamma,nmse_db,nonzeros\n");
        for &gamma in &plan.gammas {
            let mut entry = base.clone();
            entry.gamma = gamma;
            let row = run_entry(cfg, data, &entry)?;
            text.push_str(&format!("{gamma},{},{}\n", row.nmse_db, row.nonzeros));
        }
        Ok(text)
    } else {
        let mut text = String::from("rank,nmse_db,num_params\n");
        for &rank in &plan.ranks {
            let mut entry = base.clone();
            entry.ranks = vec![rank];
            let row = run_entry(cfg, data, &entry)?;
            text.push_str(&format!("{rank},{},{}\n", row.nmse_db, row.num_params));
        }
        Ok(text)
    }
}

/// Runs every configured model end-to-end and writes the comparison table;
/// when the configuration includes a sweep plan, also writes the sweep CSV.
pub fn cmd_bench(config: Option<&Path>, seed: Option<u64>, out: &Path, format: Format) -> Result<()> {
    let (mut cfg, hash) = load_or_default(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    ensure_dir(out)?;
    let data = generate_data(&cfg)?;
    let mut rows = Vec::with_capacity(cfg.models.len());
    for entry in &cfg.models {
        rows.push(run_entry(&cfg, &data, entry)?);
    }
    match format {
        Format::Csv => write_reports_csv(&out.join("bench.csv"), &rows)?,
        Format::Json => write_reports_json(&out.join("bench.json"), &cfg, &hash, &rows)?,
    }
    print!("{}", render_table(&rows));
    if let Some(plan) = &cfg.sweep {
        let text = sweep_csv(&cfg, &data, plan)?;
        std::fs::write(out.join("sweep.csv"), text)?;
        println!(
            "wrote sweep.csv ({} over model {})",
            if plan.gammas.is_empty() { "ranks" } else { "gamma" },
            plan.model
        );
    }
    Ok(())
}

fn export_fista_pgd(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    model_name: Option<&str>,
) -> Result<String> {
    let entry = match model_name {
        Some(name) => find_entry(cfg, name)?,
        None => cfg
            .models
            .iter()
            .find(|e| e.kind == "gmp")
            .ok_or_else(|| Error::Config("no full-tensor model entry to export from".into()))?,
    };
    if entry.model_kind()? != ModelKind::Gmp {
        return Err(Error::Config(format!(
            "solver comparison exports need a full-tensor entry, {} is {}",
            entry.name, entry.kind
        )));
    }
    let train = DesignSet::build(
        &data.x,
        &data.y,
        cfg.train.t0,
        cfg.train.n,
        entry.m1,
        entry.m2,
        entry.p,
    )?;
    let solver = SolverConfig {
        gamma: entry.gamma,
        iterations: entry.iterations,
        seed: derive_seed(cfg.seed, &format!("model-{}", entry.name)),
        init_scale: entry.init_scale,
        record_objective: true,
        oversample: cfg.projection.oversample,
        power: cfg.projection.power,
    };
    let (_, fista) = identify::fista_lasso(&train, &solver)?;
    let (_, pgd) = identify::pgd_lasso(&train, &solver)?;
    let mut text =
        String::from("iteration,fista_objective,fista_nmse_db,pgd_objective,pgd_nmse_db\n");
    for k in 0..entry.iterations {
        text.push_str(&format!(
            "{k},{},{},{},{}\n",
            fista.objective_trace[k],
            fista.train_nmse_trace[k],
            pgd.objective_trace[k],
            pgd.train_nmse_trace[k],
        ));
    }
    Ok(text)
}

fn export_als_nmse(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<String> {
    let mut text = String::from("name,sweep,nmse_db\n");
    let mut exported = 0usize;
    for entry in &cfg.models {
        let kind = entry.model_kind()?;
        if kind == ModelKind::Gmp {
            continue;
        }
        let train = DesignSet::build(
            &data.x,
            &data.y,
            cfg.train.t0,
            cfg.train.n,
            entry.m1,
            entry.m2,
            entry.p,
        )?;
        let seed = derive_seed(cfg.seed, &format!("model-{}", entry.name));
        let (_, report, _) = metrics::train_from_entry(&train, entry, seed, &cfg.projection)?;
        // One row per sweep: the NMSE after the sweep's last block solve.
        let blocks = match kind {
            ModelKind::Tucker => 4,
            _ => 3,
        };
        for sweep in 0..entry.iterations {
            let idx = (sweep + 1) * blocks - 1;
            if let Some(v) = report.train_nmse_trace.get(idx) {
                text.push_str(&format!("{},{},{}\n", entry.name, sweep, v));
            }
        }
        exported += 1;
    }
    if exported == 0 {
        return Err(Error::Config(
            "no compressed-family model entries to export from".into(),
        ));
    }
    Ok(text)
}

/// Writes plot-ready CSV data: `fista-pgd` compares the two proximal
/// solvers' objective traces; `als-nmse` records the per-sweep training
/// NMSE of every compressed-family entry.
pub fn cmd_export(
    what: &str,
    config: Option<&Path>,
    seed: Option<u64>,
    model_name: Option<&str>,
    out: &Path,
) -> Result<()> {
    let (mut cfg, _) = load_or_default(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    ensure_dir(out)?;
    let data = generate_data(&cfg)?;
    let (file, text) = match what {
        "fista-pgd" => ("fista-pgd.csv", export_fista_pgd(&cfg, &data, model_name)?),
        "als-nmse" => ("als-nmse.csv", export_als_nmse(&cfg, &data)?),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown export {other:?}, expected fista-pgd or als-nmse"
            )));
        }
    };
    let path = out.join(file);
    std::fs::write(&path, text)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Convenience used by integration tests: absolute path of a file inside a
/// directory.
pub fn in_dir(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
