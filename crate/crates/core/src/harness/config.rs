//! Experiment configuration files.
//!
//! The format is TOML. Matrices are arrays of rows, vectors are flat arrays,
//! and `delta`/`g_init` also accept a bare scalar:
//!
//! ```toml
//! [plant]
//! a = [[0.1012, 0.8075, 1.7837], [-0.0529, 0.0944, -0.0396], [0.0, 0.1937, 0.5402]]
//! b = [[0.0], [0.0], [0.1]]
//! d = [[0.2], [0.1], [0.2]]
//! e = [[0.5, 0.2, 0.1]]
//! delta = 0.8
//!
//! [disturbance]            # optional
//! start = 50               # closed window [start, end]
//! end = 95
//! vector = [0.0, 0.0, 1.0]
//! # [[disturbance.entries]] adds per-step values on top of the window:
//! # k = 120
//! # f = [0.0, 0.1, 0.0]
//!
//! [controller]
//! kind = "imsmc"           # or "robust"
//! mu0_init = 0.1
//! xi_t = 0.01
//! delta_bar = 0.005
//! N = 2
//! g_init = [[0.0728, 0.4562]]   # optional; designed from the LMI when absent
//! compensator_mode = "one_step" # one_step | literal_sum | off
//!
//! [controller.lm]          # optional solver overrides
//! max_iter = 200
//!
//! [simulation]
//! x0 = [-1.0, 1.0, -5.0]
//! horizon = 150
//! output = [1.0, 1.0, 1.0] # optional output row C
//! reference = 0.0          # y_d
//! seed = 7                 # Δ-grid sampling
//! ```
//!
//! `x0`, `output` and the disturbance vectors are given in the original
//! coordinates of the plant.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;
use crate::nlsolve::LmOptions;
use crate::plant::{to_regular_form, DisturbanceSchedule, Plant, RegularForm};
use crate::reaching::{CompensatorMode, ReachingParams};
use crate::surface::SurfaceGain;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixOrScalar {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    pub e: Vec<Vec<f64>>,
    pub delta: MatrixOrScalar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceEntry {
    pub k: usize,
    pub f: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entries: Vec<DisturbanceEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Robust,
    Imsmc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub kind: ControllerKind,
    pub mu0_init: f64,
    pub xi_t: f64,
    pub delta_bar: f64,
    #[serde(rename = "N")]
    pub window: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_init: Option<MatrixOrScalar>,
    #[serde(default)]
    pub compensator_mode: CompensatorMode,
    #[serde(default)]
    pub lm: LmOptions,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

fn is_zero_u64(v: &u64) -> bool {
    *v == 0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub x0: Vec<f64>,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub reference: f64,
    #[serde(default, skip_serializing_if = "is_zero_u64")]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub plant: PlantSection,
    #[serde(default, skip_serializing_if = "DisturbanceSection::is_empty")]
    pub disturbance: DisturbanceSection,
    pub controller: ControllerSection,
    pub simulation: SimulationSection,
}

impl DisturbanceSection {
    pub fn is_empty(&self) -> bool {
        self.start.is_none() && self.end.is_none() && self.vector.is_none() && self.entries.is_empty()
    }
}

/// A validated configuration with every matrix assembled.
#[derive(Debug, Clone)]
pub struct ExperimentSetup {
    pub kind: ControllerKind,
    pub plant: Plant,
    pub rf: RegularForm,
    pub params: ReachingParams,
    pub window: usize,
    /// Explicit initial gain, if configured.
    pub g_init: Option<SurfaceGain>,
    pub compensator: CompensatorMode,
    pub lm: LmOptions,
    /// Initial state in regular-form coordinates.
    pub x0: DVector<f64>,
    pub horizon: usize,
    /// Output row in regular-form coordinates (`C T_c⁻¹`).
    pub output: Option<DVector<f64>>,
    pub reference: f64,
    pub seed: u64,
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

fn matrix(key: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, HarnessError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|row| row.len() != c) {
        return Err(HarnessError::config(
            format!("{key}[{i}]"),
            format!("row has {} entries, expected {c}", rows[i].len()),
        ));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(HarnessError::config(key, "entries must be finite"));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn vector(key: &str, xs: &[f64], len: usize) -> Result<DVector<f64>, HarnessError> {
    if xs.len() != len {
        return Err(HarnessError::config(
            key,
            format!("expected {len} entries, got {}", xs.len()),
        ));
    }
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(HarnessError::config(key, "entries must be finite"));
    }
    Ok(DVector::from_column_slice(xs))
}

fn shaped(
    key: &str,
    value: &MatrixOrScalar,
    rows: usize,
    cols: usize,
    scalar_as_identity: bool,
) -> Result<DMatrix<f64>, HarnessError> {
    let m = match value {
        MatrixOrScalar::Scalar(v) if scalar_as_identity => {
            if rows != cols {
                return Err(HarnessError::config(
                    key,
                    format!("a scalar needs a square {rows}×{cols} shape"),
                ));
            }
            DMatrix::identity(rows, cols) * *v
        }
        MatrixOrScalar::Scalar(v) => DMatrix::from_element(rows, cols, *v),
        MatrixOrScalar::Matrix(m) => matrix(key, m)?,
    };
    if m.shape() != (rows, cols) {
        return Err(HarnessError::config(
            key,
            format!("shape {:?}, expected ({rows}, {cols})", m.shape()),
        ));
    }
    Ok(m)
}

impl ExperimentConfig {
    pub fn from_toml_str(src: &str) -> Result<Self, HarnessError> {
        let de = toml::Deserializer::parse(src).map_err(|e| {
            let key = e.span().map_or("<input>".into(), |s| format!("line {}", line_of(src, s.start)));
            HarnessError::config(key, e.message().to_string())
        })?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let mut msg = inner.message().to_string();
            if let Some(s) = inner.span() {
                msg = format!("{msg} (line {})", line_of(src, s.start));
            }
            HarnessError::config(if path == "." { "<root>".into() } else { path }, msg)
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&src)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration always serializes")
    }

    /// Replaces the value at a dotted key (e.g. `plant.delta`) with a TOML
    /// literal and re-parses the whole configuration.
    pub fn with_override(&self, dotted: &str, literal: &str) -> Result<Self, HarnessError> {
        let value: toml::Value = parse_literal(literal).map_err(|m| HarnessError::config(dotted, m))?;
        self.with_value(dotted, value)
    }

    pub fn with_value(&self, dotted: &str, value: toml::Value) -> Result<Self, HarnessError> {
        let mut root = toml::Table::try_from(self).expect("configuration always serializes");
        let parts: Vec<&str> = dotted.split('.').collect();
        let (last, parents) = parts.split_last().expect("split yields at least one part");
        let mut table = &mut root;
        for p in parents {
            table = table
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(Default::default()))
                .as_table_mut()
                .ok_or_else(|| HarnessError::config(dotted, format!("`{p}` is not a section")))?;
        }
        table.insert(last.to_string(), value);
        Self::from_toml_str(&toml::to_string(&root).expect("table serializes"))
    }

    /// Checks every cross-field constraint and assembles the experiment.
    pub fn validate(&self) -> Result<ExperimentSetup, HarnessError> {
        let p = &self.plant;
        let a = matrix("plant.a", &p.a)?;
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(HarnessError::config("plant.a", format!("must be square and non-empty, got {:?}", a.shape())));
        }
        let b = matrix("plant.b", &p.b)?;
        if b.nrows() != n || b.ncols() == 0 {
            return Err(HarnessError::config("plant.b", format!("shape {:?}, expected ({n}, n_u)", b.shape())));
        }
        let d = matrix("plant.d", &p.d)?;
        if d.nrows() != n {
            return Err(HarnessError::config("plant.d", format!("expected {n} rows, got {}", d.nrows())));
        }
        let e = matrix("plant.e", &p.e)?;
        if e.ncols() != n {
            return Err(HarnessError::config("plant.e", format!("expected {n} columns, got {}", e.ncols())));
        }
        let delta = shaped("plant.delta", &p.delta, d.ncols(), e.nrows(), true)?;
        let mut plant = Plant::new(a, b, d, e, delta).map_err(|err| HarnessError::config("plant", err.to_string()))?;

        let dist = &self.disturbance;
        let mut schedule = match (dist.start, dist.end, &dist.vector) {
            (None, None, None) => DisturbanceSchedule::none(),
            (Some(s), Some(e), Some(v)) => {
                if e < s {
                    return Err(HarnessError::config("disturbance.end", format!("end {e} precedes start {s}")));
                }
                DisturbanceSchedule::window(s, e, vector("disturbance.vector", v, n)?)
            }
            _ => {
                let missing = [("start", dist.start.is_none()), ("end", dist.end.is_none()), ("vector", dist.vector.is_none())]
                    .iter()
                    .find(|(_, m)| *m)
                    .map(|(k, _)| *k)
                    .unwrap_or("start");
                return Err(HarnessError::config(
                    format!("disturbance.{missing}"),
                    "start, end and vector must be given together",
                ));
            }
        };
        for (i, entry) in dist.entries.iter().enumerate() {
            schedule = schedule.with_entry(entry.k, vector(&format!("disturbance.entries[{i}].f"), &entry.f, n)?);
        }
        plant = plant.with_disturbance(schedule).map_err(|err| HarnessError::config("disturbance", err.to_string()))?;
        let rf = to_regular_form(&plant).map_err(|err| HarnessError::config("plant", err.to_string()))?;
        let (n_u, n_1) = (rf.n_u(), rf.n_1());

        let c = &self.controller;
        if !(c.mu0_init > 0.0 && c.mu0_init < 1.0) {
            return Err(HarnessError::config("controller.mu0_init", format!("must lie in (0, 1), got {}", c.mu0_init)));
        }
        if !(c.xi_t > 0.0 && c.xi_t.is_finite()) {
            return Err(HarnessError::config("controller.xi_t", format!("must be positive, got {}", c.xi_t)));
        }
        if !(c.delta_bar >= 0.0 && c.delta_bar.is_finite()) {
            return Err(HarnessError::config("controller.delta_bar", format!("must be non-negative, got {}", c.delta_bar)));
        }
        let params = ReachingParams::new(c.mu0_init, c.xi_t, c.delta_bar)
            .map_err(|err| HarnessError::config("controller", err.to_string()))?;
        if !params.band_defined(n_u) {
            return Err(HarnessError::config(
                "controller.delta_bar",
                format!("band undefined: sqrt(n_u)*xi_t = {} must exceed delta_bar = {}", (n_u as f64).sqrt() * c.xi_t, c.delta_bar),
            ));
        }
        if c.window == 0 {
            return Err(HarnessError::config("controller.N", "must be at least 1"));
        }
        c.lm.validate().map_err(|err| HarnessError::config("controller.lm", err.to_string()))?;
        let g_init = c
            .g_init
            .as_ref()
            .map(|g| shaped("controller.g_init", g, n_u, n_1, false).map(SurfaceGain::new))
            .transpose()?;

        let s = &self.simulation;
        if s.horizon == 0 {
            return Err(HarnessError::config("simulation.horizon", "must be at least 1"));
        }
        let x0 = rf.to_x(&vector("simulation.x0", &s.x0, n)?);
        let output = s
            .output
            .as_ref()
            .map(|cr| vector("simulation.output", cr, n).map(|c| (c.transpose() * &rf.t_c_inv).transpose()))
            .transpose()?;
        if !s.reference.is_finite() {
            return Err(HarnessError::config("simulation.reference", "must be finite"));
        }

        Ok(ExperimentSetup {
            kind: c.kind,
            plant,
            rf,
            params,
            window: c.window,
            g_init,
            compensator: c.compensator_mode,
            lm: c.lm,
            x0,
            horizon: s.horizon,
            output,
            reference: s.reference,
            seed: s.seed,
        })
    }
}

fn parse_literal(literal: &str) -> Result<toml::Value, String> {
    let wrapped = format!("v = {literal}");
    let mut t: toml::Table = wrapped.parse().map_err(|e: toml::de::Error| e.message().to_string())?;
    Ok(t.remove("v").expect("key v present"))
}

/// Splits a list literal such as `0.5, 0.8, [[1.0]]` into its elements.
pub fn parse_value_list(list: &str) -> Result<Vec<toml::Value>, String> {
    let trimmed = list.trim();
    let body = if trimmed.starts_with('[') && !trimmed.starts_with("[[") {
        // Accept an explicit array too, unless it is itself a matrix literal.
        trimmed.to_string()
    } else {
        format!("[{trimmed}]")
    };
    match parse_literal(&body)? {
        toml::Value::Array(items) if !items.is_empty() => Ok(items),
        _ => Err("value list is empty".into()),
    }
}

/// Built-in configuration text for the first example plant.
pub fn example1_config(delta: f64, with_pulse: bool) -> ExperimentConfig {
    let rows = |m: &[&[f64]]| m.iter().map(|r| r.to_vec()).collect::<Vec<_>>();
    ExperimentConfig {
        plant: PlantSection {
            a: rows(&[&[0.1012, 0.8075, 1.7837], &[-0.0529, 0.0944, -0.0396], &[0.0, 0.1937, 0.5402]]),
            b: rows(&[&[0.0], &[0.0], &[0.1]]),
            d: rows(&[&[0.2], &[0.1], &[0.2]]),
            e: rows(&[&[0.5, 0.2, 0.1]]),
            delta: MatrixOrScalar::Scalar(delta),
        },
        disturbance: if with_pulse {
            DisturbanceSection {
                start: Some(50),
                end: Some(95),
                vector: Some(vec![0.0, 0.0, 1.0]),
                entries: Vec::new(),
            }
        } else {
            DisturbanceSection::default()
        },
        controller: ControllerSection {
            kind: ControllerKind::Imsmc,
            mu0_init: 0.1,
            xi_t: 0.01,
            delta_bar: 0.005,
            window: 2,
            g_init: Some(MatrixOrScalar::Matrix(vec![vec![0.0728, 0.4562]])),
            compensator_mode: CompensatorMode::OneStep,
            lm: LmOptions::default(),
        },
        simulation: SimulationSection {
            x0: vec![-1.0, 1.0, -5.0],
            horizon: 150,
            output: None,
            reference: 0.0,
            seed: 7,
        },
    }
}
