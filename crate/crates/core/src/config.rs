//! JSON experiment configuration.
//!
//! Complex entries are `[re, im]` pairs; matrices are arrays of rows. A model
//! is given either by `H` and the jump operators, by `D0` and the jump
//! operators, or as `{"example": k}` for a built-in reference model.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::catalog;
use crate::limits::Region;
use crate::linalg::{ComplexMatrix, C64};
use crate::model::{ModelError, Site, WalkModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Validate,
    Master,
    Sample,
    Clt,
    Ldp,
    ReproduceExample,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Validate => "validate",
            Self::Master => "master",
            Self::Sample => "sample",
            Self::Clt => "clt",
            Self::Ldp => "ldp",
            Self::ReproduceExample => "reproduce-example",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `[re, im]`.
pub type RawComplex = [f64; 2];
pub type RawMatrix = Vec<Vec<RawComplex>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, rename = "H", skip_serializing_if = "Option::is_none")]
    pub h: Option<RawMatrix>,
    #[serde(default, rename = "D0", skip_serializing_if = "Option::is_none")]
    pub d0: Option<RawMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jumps: Option<Vec<RawMatrix>>,
}

/// A grid given either as plain numbers (`d = 1`) or as points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawGrid {
    Scalars(Vec<f64>),
    Points(Vec<Vec<f64>>),
}

impl RawGrid {
    fn points(&self) -> Vec<Vec<f64>> {
        match self {
            RawGrid::Scalars(xs) => xs.iter().map(|x| vec![*x]).collect(),
            RawGrid::Points(ps) => ps.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRegion {
    /// `null` entries are unbounded.
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInitial {
    pub site: Site,
    pub rho: RawMatrix,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default)]
    pub kind: Option<ExperimentKind>,
    #[serde(default)]
    pub model: Option<RawModel>,
    /// Built-in model for `reproduce-example`.
    #[serde(default)]
    pub example: Option<usize>,
    /// Restricts `reproduce-example` to one experiment kind.
    #[serde(default)]
    pub target: Option<ExperimentKind>,
    #[serde(default)]
    pub initial: Option<RawInitial>,
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub checkpoints: Option<Vec<f64>>,
    #[serde(default)]
    pub paths: Option<usize>,
    #[serde(default)]
    pub root_seed: Option<u64>,
    #[serde(default)]
    pub u_grid: Option<RawGrid>,
    #[serde(default)]
    pub x_grid: Option<RawGrid>,
    #[serde(default)]
    pub region: Option<RawRegion>,
    #[serde(default)]
    pub export_path: Option<bool>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    Example(usize),
    Hamiltonian { d: usize, h: ComplexMatrix, jumps: Vec<ComplexMatrix> },
    Drift { d: usize, d0: ComplexMatrix, jumps: Vec<ComplexMatrix> },
}

impl ModelSpec {
    /// Builds and validates the model (Hermiticity, Lindblad identity).
    pub fn build(&self) -> Result<WalkModel, ModelError> {
        match self {
            ModelSpec::Example(k) => catalog::example(*k),
            ModelSpec::Hamiltonian { d, h, jumps } => WalkModel::new(*d, h.clone(), jumps.clone()),
            ModelSpec::Drift { d, d0, jumps } => WalkModel::from_drift(*d, d0.clone(), jumps.clone()),
        }
    }

    pub fn d(&self) -> usize {
        match self {
            ModelSpec::Example(3) => 2,
            ModelSpec::Example(_) => 1,
            ModelSpec::Hamiltonian { d, .. } | ModelSpec::Drift { d, .. } => *d,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            ModelSpec::Example(_) => 2,
            ModelSpec::Hamiltonian { h, .. } => h.rows(),
            ModelSpec::Drift { d0, .. } => d0.rows(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitialState {
    pub site: Site,
    pub rho: ComplexMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub model: ModelSpec,
    pub target: Option<ExperimentKind>,
    pub initial: Option<InitialState>,
    pub t_max: Option<f64>,
    pub dt: Option<f64>,
    pub checkpoints: Option<Vec<f64>>,
    pub paths: Option<usize>,
    pub root_seed: Option<u64>,
    pub u_grid: Option<Vec<Vec<f64>>>,
    pub x_grid: Option<Vec<Vec<f64>>>,
    pub region: Option<Region>,
    pub export_path: bool,
    pub output_dir: Option<PathBuf>,
    /// The parsed input, echoed into run manifests.
    pub raw: RawConfig,
}

/// Every problem found in a configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub errors: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "invalid configuration ({} problem{}):",
            self.errors.len(),
            if self.errors.len() == 1 { "" } else { "s" }
        )?;
        for e in &self.errors {
            write!(f, "\n  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig =
        serde_json::from_str(text).map_err(|e| ConfigError { errors: vec![format!("malformed JSON: {e}")] })?;
    validate_config(raw)
}

fn matrix(errors: &mut Vec<String>, field: &str, raw: &RawMatrix, n: usize) -> Option<ComplexMatrix> {
    let rows = raw.len();
    let ok_shape = rows == n && raw.iter().all(|r| r.len() == n);
    if !ok_shape {
        let cols: Vec<usize> = raw.iter().map(Vec::len).collect();
        errors.push(format!("{field}: expected {n}x{n}, found {rows} rows with lengths {cols:?}"));
        return None;
    }
    if raw.iter().flatten().flatten().any(|x| !x.is_finite()) {
        errors.push(format!("{field}: entries must be finite"));
        return None;
    }
    let rows: Vec<Vec<C64>> = raw.iter().map(|r| r.iter().map(|[re, im]| C64::new(*re, *im)).collect()).collect();
    ComplexMatrix::from_rows(&rows).ok()
}

fn model_spec(errors: &mut Vec<String>, raw: &RawModel) -> Option<ModelSpec> {
    if let Some(k) = raw.example {
        if raw.h.is_some() || raw.d0.is_some() || raw.jumps.is_some() {
            errors.push("model: `example` cannot be combined with explicit operators".into());
        }
        if !(1..=3).contains(&k) {
            errors.push(format!("model.example: no built-in example {k} (expected 1, 2 or 3)"));
            return None;
        }
        return Some(ModelSpec::Example(k));
    }
    let d = match raw.d {
        Some(0) | None => {
            errors.push("model.d: a positive lattice dimension is required".into());
            None
        }
        Some(d) => Some(d),
    };
    let inferred = raw.h.as_ref().or(raw.d0.as_ref()).map(Vec::len);
    let n = match (raw.n, inferred) {
        (Some(0), _) => {
            errors.push("model.n: must be positive".into());
            None
        }
        (Some(n), _) => Some(n),
        (None, Some(n)) if n > 0 => Some(n),
        _ => {
            errors.push("model.n: internal dimension is required".into());
            None
        }
    };
    let drift = match (&raw.h, &raw.d0) {
        (Some(_), Some(_)) => {
            errors.push("model: give either `H` or `D0`, not both".into());
            None
        }
        (None, None) => {
            errors.push("model: one of `H` or `D0` is required".into());
            None
        }
        (Some(h), None) => n.and_then(|n| matrix(errors, "model.H", h, n)).map(|m| (true, m)),
        (None, Some(d0)) => n.and_then(|n| matrix(errors, "model.D0", d0, n)).map(|m| (false, m)),
    };
    let jumps = match &raw.jumps {
        None => {
            errors.push("model.jumps: jump operators are required".into());
            None
        }
        Some(list) => {
            if let Some(d) = d {
                if list.len() != 2 * d {
                    errors.push(format!("model.jumps: expected {} operators for d = {d}, found {}", 2 * d, list.len()));
                }
            }
            let parsed: Vec<Option<ComplexMatrix>> = list
                .iter()
                .enumerate()
                .map(|(r, m)| n.and_then(|n| matrix(errors, &format!("model.jumps[{r}]"), m, n)))
                .collect();
            parsed.into_iter().collect::<Option<Vec<_>>>()
        }
    };
    let (d, (is_h, m), jumps) = (d?, drift?, jumps?);
    if jumps.len() != 2 * d {
        return None;
    }
    Some(if is_h { ModelSpec::Hamiltonian { d, h: m, jumps } } else { ModelSpec::Drift { d, d0: m, jumps } })
}

fn check_grid(errors: &mut Vec<String>, field: &str, grid: &RawGrid, d: Option<usize>) -> Vec<Vec<f64>> {
    let points = grid.points();
    if points.is_empty() {
        errors.push(format!("{field}: grid is empty"));
    }
    for (k, p) in points.iter().enumerate() {
        if let Some(d) = d {
            if p.len() != d {
                errors.push(format!("{field}[{k}]: expected {d} components, found {}", p.len()));
            }
        }
        if p.iter().any(|x| !x.is_finite()) {
            errors.push(format!("{field}[{k}]: entries must be finite"));
        }
    }
    points
}

fn validate_config(raw: RawConfig) -> Result<ExperimentConfig, ConfigError> {
    let mut errors = Vec::new();
    let kind = raw.kind.unwrap_or_else(|| {
        errors.push("kind: experiment kind is required (validate, master, sample, clt, ldp, reproduce-example)".into());
        ExperimentKind::Validate
    });
    let model = match (kind, &raw.model, raw.example) {
        (ExperimentKind::ReproduceExample, None, Some(k)) => {
            model_spec(&mut errors, &RawModel { example: Some(k), d: None, n: None, h: None, d0: None, jumps: None })
        }
        (ExperimentKind::ReproduceExample, _, None) => {
            errors.push("example: reproduce-example needs the index of a built-in example".into());
            None
        }
        (ExperimentKind::ReproduceExample, Some(_), Some(_)) => {
            errors.push("model: reproduce-example uses the built-in model; remove `model`".into());
            None
        }
        (_, Some(m), _) => model_spec(&mut errors, m),
        (_, None, _) => {
            errors.push("model: a model description is required".into());
            None
        }
    };
    if kind != ExperimentKind::ReproduceExample && raw.example.is_some() {
        errors.push("example: only used by reproduce-example (use model.example instead)".into());
    }
    if let Some(t) = raw.target {
        if kind != ExperimentKind::ReproduceExample {
            errors.push("target: only used by reproduce-example".into());
        } else if t == ExperimentKind::ReproduceExample {
            errors.push("target: must name a concrete experiment kind".into());
        }
    }
    let d = model.as_ref().map(ModelSpec::d);
    let n = model.as_ref().map(ModelSpec::n);

    let initial = raw.initial.as_ref().and_then(|init| {
        if let Some(d) = d {
            if init.site.len() != d {
                errors.push(format!("initial.site: expected {d} coordinates, found {}", init.site.len()));
            }
        }
        n.and_then(|n| matrix(&mut errors, "initial.rho", &init.rho, n))
            .map(|rho| InitialState { site: init.site.clone(), rho })
    });
    if let Some(t) = raw.t_max {
        if !(t.is_finite() && t >= 0.0) {
            errors.push(format!("t_max: must be finite and >= 0, found {t}"));
        }
    }
    if let Some(dt) = raw.dt {
        if !(dt.is_finite() && dt > 0.0) {
            errors.push(format!("dt: must be finite and > 0, found {dt}"));
        }
    }
    if let Some(cps) = &raw.checkpoints {
        for (k, c) in cps.iter().enumerate() {
            let beyond = raw.t_max.is_some_and(|t| *c > t);
            if !(c.is_finite() && *c >= 0.0) || beyond {
                errors.push(format!("checkpoints[{k}]: {c} is outside [0, t_max]"));
            }
        }
    }
    if raw.paths == Some(0) {
        errors.push("paths: must be at least 1".into());
    }
    let u_grid = raw.u_grid.as_ref().map(|g| check_grid(&mut errors, "u_grid", g, d));
    let x_grid = raw.x_grid.as_ref().map(|g| check_grid(&mut errors, "x_grid", g, d));
    let region = raw.region.as_ref().map(|r| {
        if let Some(d) = d {
            if r.lower.len() != d || r.upper.len() != d {
                errors.push(format!("region: bounds must have {d} components"));
            }
        }
        let lower: Vec<f64> = r.lower.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect();
        let upper: Vec<f64> = r.upper.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect();
        if lower.iter().zip(&upper).any(|(a, b)| a > b || a.is_nan() || b.is_nan()) {
            errors.push("region: every lower bound must be <= its upper bound".into());
        }
        Region { lower, upper }
    });

    let need = |errors: &mut Vec<String>, present: bool, field: &str| {
        if !present {
            errors.push(format!("{field}: required for kind {kind}"));
        }
    };
    match kind {
        ExperimentKind::Master => need(&mut errors, raw.t_max.is_some(), "t_max"),
        ExperimentKind::Sample => {
            need(&mut errors, raw.t_max.is_some(), "t_max");
            need(&mut errors, raw.paths.is_some(), "paths");
        }
        ExperimentKind::Ldp => {
            if raw.x_grid.is_none() && raw.u_grid.is_none() && raw.region.is_none() {
                errors.push("ldp: give at least one of u_grid, x_grid or region".into());
            }
            if raw.region.is_some() {
                need(&mut errors, raw.t_max.is_some(), "t_max");
                need(&mut errors, raw.paths.is_some(), "paths");
            }
        }
        _ => {}
    }

    if !errors.is_empty() {
        return Err(ConfigError { errors });
    }
    Ok(ExperimentConfig {
        kind,
        model: model.expect("no errors implies a model"),
        target: raw.target,
        initial,
        t_max: raw.t_max,
        dt: raw.dt,
        checkpoints: raw.checkpoints.clone(),
        paths: raw.paths,
        root_seed: raw.root_seed,
        u_grid,
        x_grid,
        region,
        export_path: raw.export_path.unwrap_or(false),
        output_dir: raw.output_dir.clone(),
        raw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const EX1: &str = r#"{
        "kind": "clt",
        "model": {
            "d": 1, "n": 2,
            "D0": [[[-0.5, 0], [0, 0]], [[0, 0], [-0.5, 0]]],
            "jumps": [
                [[[0.5773502691896258, 0], [0.5773502691896258, 0]], [[0, 0], [0.5773502691896258, 0]]],
                [[[0.5773502691896258, 0], [0, 0]], [[-0.5773502691896258, 0], [0.5773502691896258, 0]]]
            ]
        }
    }"#;

    #[test]
    fn minimal_config_parses_and_builds() {
        let cfg = parse_config(EX1).unwrap();
        assert_eq!(cfg.kind, ExperimentKind::Clt);
        let model = cfg.model.build().unwrap();
        assert_eq!((model.d(), model.n()), (1, 2));
    }

    #[test]
    fn wrong_shape_is_named() {
        let bad = EX1.replace(
            "[[[0.5773502691896258, 0], [0.5773502691896258, 0]], [[0, 0], [0.5773502691896258, 0]]]",
            "[[[0.5773502691896258, 0], [0.5773502691896258, 0], [1, 0]], [[0, 0], [0.5773502691896258, 0]]]",
        );
        let err = parse_config(&bad).unwrap_err();
        assert_eq!(err.errors.len(), 1, "{err}");
        assert!(err.errors[0].starts_with("model.jumps[0]"), "{err}");
    }

    #[test]
    fn errors_are_aggregated() {
        let text = r#"{"kind": "sample", "model": {"d": 1, "n": 2, "H": [[[0,0],[0,0]],[[0,0],[0,0]]],
            "jumps": [[[[1,0]]]]}, "dt": -1, "paths": 0}"#;
        let err = parse_config(text).unwrap_err();
        let all = err.to_string();
        for needle in ["model.jumps: expected 2", "model.jumps[0]", "dt:", "paths:", "t_max:"] {
            assert!(all.contains(needle), "missing {needle} in {all}");
        }
    }

    #[test]
    fn reproduce_example_targets_builtin() {
        let cfg = parse_config(r#"{"kind": "reproduce-example", "example": 2, "target": "clt"}"#).unwrap();
        assert_eq!(cfg.model, ModelSpec::Example(2));
        assert_eq!(cfg.target, Some(ExperimentKind::Clt));
        let built = cfg.model.build().unwrap();
        assert_eq!(built.d0(), crate::catalog::example(2).unwrap().d0());
        assert!(parse_config(r#"{"kind": "reproduce-example", "example": 7}"#).is_err());
    }

    #[test]
    fn malformed_and_unknown() {
        assert!(parse_config("{").unwrap_err().errors[0].starts_with("malformed JSON"));
        assert!(parse_config(r#"{"kind": "dance", "model": {"example": 1}}"#).is_err());
        assert!(parse_config(r#"{"kind": "validate", "model": {"example": 1}, "bogus": 1}"#).is_err());
    }

    #[test]
    fn grids_and_regions() {
        let cfg = parse_config(
            r#"{"kind": "ldp", "model": {"example": 2}, "u_grid": [-1, 0, 1],
                "region": {"lower": [0.1], "upper": [null]}, "t_max": 60, "paths": 10}"#,
        )
        .unwrap();
        assert_eq!(cfg.u_grid.unwrap(), vec![vec![-1.0], vec![0.0], vec![1.0]]);
        assert_eq!(cfg.region.unwrap().upper, vec![f64::INFINITY]);
        let err = parse_config(r#"{"kind": "ldp", "model": {"example": 3}, "x_grid": [0.5]}"#).unwrap_err();
        assert!(err.errors[0].contains("x_grid[0]"));
    }
}
