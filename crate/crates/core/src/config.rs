//! Experiment configuration files.
//!
//! Experiments are described by TOML documents with a strict schema: unknown
//! keys are rejected outright, so a typo in a penalty or a rank cannot
//! silently fall back to a default and invalidate a comparison. Every field
//! has a protocol default, which makes the empty document a complete,
//! runnable experiment.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::models::ModelKind;
use crate::signal::OfdmConfig;
use crate::{Error, Result};

/// A half-open evaluation window: design rows are built for output samples
/// `t0 .. t0 + n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub t0: usize,
    pub n: usize,
}

/// Drive and noise settings for the reference amplifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PaConfig {
    /// Output-referred signal-to-noise ratio in dB; `inf` disables noise.
    pub snr_db: f64,
    /// Input back-off in dB applied to the unit-power source before the
    /// amplifier, so the envelope stays inside the polynomial's fitted range.
    /// 0 drives at unit average power; negative values back the drive off.
    pub drive_db: f64,
}

impl Default for PaConfig {
    fn default() -> Self {
        Self {
            snr_db: 50.0,
            drive_db: -12.0,
        }
    }
}

/// Mode-2/3 random-projection settings shared by every model trained with
/// the projected solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectionConfig {
    /// Projected envelope-delay dimension.
    pub m2: usize,
    /// Projected envelope-power dimension.
    pub p: usize,
    /// Sketch oversampling columns.
    pub oversample: usize,
    /// Power-iteration passes applied to the sketch.
    pub power: usize,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            m2: 5,
            p: 3,
            oversample: 5,
            power: 2,
        }
    }
}

/// One model to train and evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    /// Unique label used in reports and for `--model` selection.
    pub name: String,
    /// Family: `gmp`, `cp`, `tt`, or `tucker`.
    pub kind: String,
    /// For `gmp`: `ridge` (default), `fista`, or `pgd`. Compressed
    /// families always train with alternating least squares.
    #[serde(default)]
    pub solver: Option<String>,
    #[serde(default = "default_m1")]
    pub m1: usize,
    #[serde(default = "default_m2")]
    pub m2: usize,
    #[serde(default = "default_p")]
    pub p: usize,
    /// Family ranks: one value for CP, two for TT, three for Tucker.
    #[serde(default)]
    pub ranks: Vec<usize>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Train on the mode-2/3 projected design and back-substitute.
    #[serde(default)]
    pub rp_als: bool,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
}

impl ModelEntry {
    /// An entry with protocol defaults for the given family.
    pub fn new(name: &str, kind: &str, ranks: &[usize]) -> Self {
        Self {
            name: name.to_string(),
            kind: kind.to_string(),
            solver: None,
            m1: default_m1(),
            m2: default_m2(),
            p: default_p(),
            ranks: ranks.to_vec(),
            gamma: default_gamma(),
            iterations: default_iterations(),
            rp_als: false,
            init_scale: default_init_scale(),
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.m1, self.m2, self.p)
    }

    pub fn model_kind(&self) -> Result<ModelKind> {
        ModelKind::parse(&self.kind)
    }
}

/// A one-dimensional sweep over a single configured model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    /// Name of the `[[models]]` entry to sweep.
    pub model: String,
    /// Penalty values to sweep (any family).
    #[serde(default)]
    pub gammas: Vec<f64>,
    /// CP ranks to sweep.
    #[serde(default)]
    pub ranks: Vec<usize>,
}

/// Top-level experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root seed; every random component derives its own stream from it.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Repetitions for simulation-time medians.
    #[serde(default = "default_timing_repeats")]
    pub timing_repeats: usize,
    #[serde(default)]
    pub ofdm: OfdmConfig,
    #[serde(default)]
    pub pa: PaConfig,
    #[serde(default = "default_train_window")]
    pub train: Window,
    #[serde(default = "default_test_window")]
    pub test: Window,
    #[serde(default)]
    pub projection: ProjectionConfig,
    #[serde(default = "default_models")]
    pub models: Vec<ModelEntry>,
    #[serde(default)]
    pub sweep: Option<SweepPlan>,
}

fn default_seed() -> u64 {
    42
}
fn default_timing_repeats() -> usize {
    5
}
fn default_train_window() -> Window {
    Window { t0: 100, n: 1024 }
}
fn default_test_window() -> Window {
    Window { t0: 2000, n: 25000 }
}
fn default_m1() -> usize {
    11
}
fn default_m2() -> usize {
    10
}
fn default_p() -> usize {
    8
}
fn default_gamma() -> f64 {
    1e-4
}
fn default_iterations() -> usize {
    10
}
fn default_init_scale() -> f64 {
    0.1
}

fn default_models() -> Vec<ModelEntry> {
    let mut gmp = ModelEntry::new("gmp-ls", "gmp", &[]);
    gmp.gamma = 1e-3;
    let mut cp = ModelEntry::new("cp-als", "cp", &[3]);
    cp.gamma = 1e-5;
    let mut tt = ModelEntry::new("tt-als", "tt", &[2, 2]);
    tt.gamma = 1e-5;
    let mut tucker = ModelEntry::new("tucker-als", "tucker", &[2, 2, 2]);
    tucker.gamma = 1e-4;
    vec![gmp, cp, tt, tucker]
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            timing_repeats: default_timing_repeats(),
            ofdm: OfdmConfig::default(),
            pa: PaConfig::default(),
            train: default_train_window(),
            test: default_test_window(),
            projection: ProjectionConfig::default(),
            models: default_models(),
            sweep: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        self.ofdm.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.pa.snr_db.is_nan() {
            return fail("pa.snr_db must not be NaN".into());
        }
        if !self.pa.drive_db.is_finite() {
            return fail("pa.drive_db must be finite".into());
        }
        if self.timing_repeats == 0 {
            return fail("timing_repeats must be >= 1".into());
        }
        if self.projection.m2 == 0 || self.projection.p == 0 {
            return fail("projection dimensions must be >= 1".into());
        }
        if self.models.is_empty() {
            return fail("at least one [[models]] entry is required".into());
        }
        let total = self.ofdm.total_len();
        for (label, w) in [("train", &self.train), ("test", &self.test)] {
            if w.n == 0 {
                return fail(format!("{label} window length must be >= 1"));
            }
            if w.t0 + w.n > total {
                return fail(format!(
                    "{label} window {}..{} exceeds the generated signal length {total}",
                    w.t0,
                    w.t0 + w.n
                ));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for m in &self.models {
            let ctx = |msg: String| Error::Config(format!("model {:?}: {msg}", m.name));
            if m.name.is_empty() {
                return fail("model names must be nonempty".into());
            }
            if !seen.insert(&m.name) {
                return fail(format!("duplicate model name {:?}", m.name));
            }
            let kind = m.model_kind().map_err(|e| ctx(e.to_string()))?;
            if m.m1 == 0 || m.m2 == 0 || m.p == 0 {
                return Err(ctx("dimensions must be >= 1".into()));
            }
            if m.ranks.len() != kind.rank_count() {
                return Err(ctx(format!(
                    "{} expects {} rank value(s), got {}",
                    kind.as_str(),
                    kind.rank_count(),
                    m.ranks.len()
                )));
            }
            if m.ranks.iter().any(|&r| r == 0) {
                return Err(ctx("ranks must be >= 1".into()));
            }
            if !(m.gamma.is_finite() && m.gamma >= 0.0) {
                return Err(ctx("gamma must be finite and >= 0".into()));
            }
            if m.iterations == 0 {
                return Err(ctx("iterations must be >= 1".into()));
            }
            if !(m.init_scale.is_finite() && m.init_scale > 0.0) {
                return Err(ctx("init_scale must be finite and > 0".into()));
            }
            match (kind, m.solver.as_deref()) {
                (ModelKind::Gmp, None | Some("ridge") | Some("fista") | Some("pgd")) => {}
                (ModelKind::Gmp, Some(other)) => {
                    return Err(ctx(format!(
                        "unknown gmp solver {other:?} (expected ridge, fista, or pgd)"
                    )));
                }
                (_, None | Some("als")) => {}
                (_, Some(other)) => {
                    return Err(ctx(format!(
                        "{} models train with als, not {other:?}",
                        kind.as_str()
                    )));
                }
            }
            if m.rp_als {
                if kind == ModelKind::Gmp {
                    return Err(ctx("rp_als applies to compressed families only".into()));
                }
                if self.projection.m2 > m.m2 || self.projection.p > m.p {
                    return Err(ctx(format!(
                        "projection ({}, {}) exceeds model dims ({}, {})",
                        self.projection.m2, self.projection.p, m.m2, m.p
                    )));
                }
            }
            let needed = m.m1.max(m.m2).saturating_sub(1);
            for (label, w) in [("train", &self.train), ("test", &self.test)] {
                if w.t0 < needed {
                    return Err(ctx(format!(
                        "{label} window starts at {} but the model needs {} warm-up samples",
                        w.t0, needed
                    )));
                }
            }
        }
        if let Some(sweep) = &self.sweep {
            let entry = self
                .models
                .iter()
                .find(|m| m.name == sweep.model)
                .ok_or_else(|| {
                    Error::Config(format!("sweep.model {:?} is not a configured model", sweep.model))
                })?;
            match (sweep.gammas.is_empty(), sweep.ranks.is_empty()) {
                (false, true) => {
                    if sweep.gammas.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
                        return fail("sweep.gammas must be finite and >= 0".into());
                    }
                }
                (true, false) => {
                    if entry.model_kind()? != ModelKind::Cp {
                        return fail("rank sweeps are supported for cp models only".into());
                    }
                    if sweep.ranks.iter().any(|&r| r == 0) {
                        return fail("sweep.ranks must be >= 1".into());
                    }
                }
                (true, true) => return fail("sweep needs gammas or ranks".into()),
                (false, false) => {
                    return fail("sweep.gammas and sweep.ranks are mutually exclusive".into());
                }
            }
        }
        Ok(())
    }

    /// Serializes the configuration back to TOML (used by config export and
    /// round-trip tests).
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("serialize: {e}")))
    }
}

/// Hex SHA-256 of the raw configuration bytes; recorded in every manifest so
/// outputs can be traced to the exact file that produced them.
pub fn config_hash(raw: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(raw);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Loads and validates a configuration file, returning it with the hash of
/// the raw bytes. Parse errors carry the file position reported by the TOML
/// parser.
pub fn load_config(path: &Path) -> Result<(ExperimentConfig, String)> {
    let raw = std::fs::read(path)?;
    let text = std::str::from_utf8(&raw)
        .map_err(|e| Error::Config(format!("{}: not UTF-8: {e}", path.display())))?;
    let cfg: ExperimentConfig =
        toml::from_str(text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    cfg.validate()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok((cfg, config_hash(&raw)))
}
