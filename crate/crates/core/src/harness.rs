//! Experiment orchestration and CSV output.
//!
//! Every run writes its CSV files plus `manifest.json` into one directory. If
//! the run fails, the files it already wrote are removed.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, ExperimentKind, InitialState, ModelSpec, RawMatrix, RawRegion};
use crate::ensemble::{run_ensemble, EnsembleConfig, EnsembleStats, InitSpec};
use crate::limits::{
    self, clt_report, grid_infimum, ldp_from_stats, rate_function_grid, LimitError, RateOptions, Region,
};
use crate::linalg::ComplexMatrix;
use crate::master::{self, distribution_moments, site_distribution, EvolveOptions, LatticeState, MasterError};
use crate::model::{ModelError, Site, WalkModel};
use crate::spectral::{irreducibility_check, stationary_state, DeformationCurve};
use crate::trajectory::{sample_path, TrajectoryError};

pub const MANIFEST_FILE: &str = "manifest.json";
/// Step of the master equation in `reproduce-example` unless `dt` is given.
pub const REPRODUCE_DT: f64 = 1e-2;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("master equation: {0}")]
    Master(#[from] MasterError),
    #[error("trajectory simulation: {0}")]
    Trajectory(#[from] TrajectoryError),
    #[error("limit theorems: {0}")]
    Limit(#[from] LimitError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("csv: {0}")]
    Csv(String),
    #[error("{0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Real(f64),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Real(x) => format!("{x:.16e}"),
        }
    }

    fn parse(s: &str) -> Option<Cell> {
        if !s.contains(['.', 'e', 'E', 'n', 'N']) {
            if let Ok(v) = s.parse() {
                return Some(Cell::Int(v));
            }
        }
        s.parse().ok().map(Cell::Real)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(v as i64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// CSV text of `table`: reals with 17 significant digits, `\n` line ends.
pub fn csv_bytes(table: &Table) -> Result<Vec<u8>, HarnessError> {
    if let Some(bad) = table.rows.iter().position(|r| r.len() != table.header.len()) {
        return Err(HarnessError::Csv(format!("row {bad} has a different width than the header")));
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let fail = |e: csv::Error| HarnessError::Csv(e.to_string());
    w.write_record(&table.header).map_err(fail)?;
    for row in &table.rows {
        w.write_record(row.iter().map(Cell::render)).map_err(fail)?;
    }
    w.into_inner().map_err(|e| HarnessError::Csv(e.to_string()))
}

pub fn emit_csv(table: &Table, path: &Path) -> Result<(), HarnessError> {
    let bytes = csv_bytes(table)?;
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn parse_csv(text: &str) -> Result<Table, HarnessError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let fail = |e: csv::Error| HarnessError::Csv(e.to_string());
    let header = r.headers().map_err(fail)?.iter().map(str::to_string).collect();
    let mut table = Table { header, rows: Vec::new() };
    for rec in r.records() {
        let rec = rec.map_err(fail)?;
        let row = rec
            .iter()
            .map(|s| Cell::parse(s).ok_or_else(|| HarnessError::Csv(format!("not a number: {s:?}"))))
            .collect::<Result<_, _>>()?;
        table.rows.push(row);
    }
    Ok(table)
}

#[derive(Clone, Debug, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Every parameter a run used, defaults included.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ResolvedParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub example: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<ExperimentKind>,
    pub initial_site: Site,
    pub initial_rho: RawMatrix,
    pub root_seed: u64,
    pub t_max: Option<f64>,
    pub dt: Option<f64>,
    pub checkpoints: Option<Vec<f64>>,
    pub paths: Option<usize>,
    pub u_grid: Option<Vec<Vec<f64>>>,
    pub x_grid: Option<Vec<Vec<f64>>>,
    pub region: Option<RawRegion>,
    pub export_path: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub artifact: String,
    pub version: String,
    pub kind: ExperimentKind,
    pub config: serde_json::Value,
    pub resolved: ResolvedParams,
    pub threads: usize,
    pub started_unix: f64,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputRecord>,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Overrides the configured output directory.
    pub out_dir: Option<PathBuf>,
    /// Overrides the configured root seed.
    pub seed: Option<u64>,
    /// Worker threads; 0 lets the pool decide. Never changes results.
    pub threads: usize,
}

struct Outputs {
    dir: PathBuf,
    records: Vec<OutputRecord>,
}

impl Outputs {
    fn write(&mut self, name: &str, table: &Table) -> Result<(), HarnessError> {
        let bytes = csv_bytes(table)?;
        let path = self.dir.join(name);
        fs::write(&path, &bytes).map_err(io_err(&path))?;
        self.records.push(OutputRecord {
            file: name.into(),
            sha256: hex::encode(Sha256::digest(&bytes)),
            bytes: bytes.len(),
        });
        Ok(())
    }

    fn remove_all(&self) {
        for r in &self.records {
            let _ = fs::remove_file(self.dir.join(&r.file));
        }
        let _ = fs::remove_file(self.dir.join(MANIFEST_FILE));
    }
}

pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunManifest, HarnessError> {
    let dir = opts
        .out_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| HarnessError::Invalid("no output directory (set output_dir or pass --out)".into()))?;
    let created = !dir.exists();
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let clock = Instant::now();
    let mut out = Outputs { dir: dir.clone(), records: Vec::new() };

    let result = (|| {
        let model = cfg.model.build()?;
        let resolved = resolve(cfg, &model, opts)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.threads)
            .build()
            .map_err(|e| HarnessError::Invalid(format!("thread pool: {e}")))?;
        pool.install(|| dispatch(cfg, &model, &resolved, opts.threads, &mut out))?;
        let manifest = RunManifest {
            artifact: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            kind: cfg.kind,
            config: serde_json::to_value(&cfg.raw).map_err(|e| HarnessError::Invalid(e.to_string()))?,
            resolved,
            threads: opts.threads,
            started_unix: started,
            wall_clock_seconds: clock.elapsed().as_secs_f64(),
            outputs: out.records.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| HarnessError::Invalid(e.to_string()))?;
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, text + "\n").map_err(io_err(&path))?;
        Ok(manifest)
    })();

    if result.is_err() {
        out.remove_all();
        if created {
            let _ = fs::remove_dir(&dir);
        }
    }
    result
}

fn linspace(a: f64, b: f64, points: usize) -> Vec<f64> {
    (0..points).map(|k| a + (b - a) * k as f64 / (points - 1) as f64).collect()
}

fn tensor_grid(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for axis in axes {
        out = out.into_iter().flat_map(|p| axis.iter().map(move |v| [p.clone(), vec![*v]].concat())).collect();
    }
    out
}

fn raw_matrix(m: &ComplexMatrix) -> RawMatrix {
    (0..m.rows()).map(|i| (0..m.cols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

fn resolve(cfg: &ExperimentConfig, model: &WalkModel, opts: &RunOptions) -> Result<ResolvedParams, HarnessError> {
    let (d, n) = (model.d(), model.n());
    let initial = cfg
        .initial
        .clone()
        .unwrap_or(InitialState { site: vec![0; d], rho: ComplexMatrix::identity(n).scale_real(1.0 / n as f64) });
    let mut r = ResolvedParams {
        example: match cfg.model {
            ModelSpec::Example(k) => Some(k),
            _ => None,
        },
        target: cfg.target,
        initial_site: initial.site.clone(),
        initial_rho: raw_matrix(&initial.rho),
        root_seed: opts.seed.or(cfg.root_seed).unwrap_or(0),
        t_max: cfg.t_max,
        dt: cfg.dt,
        checkpoints: cfg.checkpoints.clone(),
        paths: cfg.paths,
        u_grid: cfg.u_grid.clone(),
        x_grid: cfg.x_grid.clone(),
        region: cfg.raw.region.clone(),
        export_path: cfg.export_path,
    };
    let kinds = kinds_to_run(cfg);
    let reproduce = cfg.kind == ExperimentKind::ReproduceExample;
    if reproduce {
        let example = r.example.unwrap_or(0);
        if kinds.contains(&ExperimentKind::Master) {
            let times = if example == 3 { vec![3.0, 8.0, 18.0] } else { (0..=20).map(f64::from).collect() };
            r.checkpoints.get_or_insert(times);
            r.dt.get_or_insert(REPRODUCE_DT);
        }
        if kinds.contains(&ExperimentKind::Sample) {
            r.paths.get_or_insert(1000);
            r.t_max.get_or_insert(20.0);
        }
        if kinds.contains(&ExperimentKind::Ldp) && r.u_grid.is_none() && r.x_grid.is_none() && r.region.is_none() {
            let m = clt_report(model)?.m;
            if d == 1 {
                r.u_grid = Some(tensor_grid(&[linspace(-3.0, 3.0, 121)]));
                r.x_grid = Some(tensor_grid(&[linspace(m[0] - 1.0, m[0] + 1.0, 101)]));
            } else {
                let axes_u: Vec<Vec<f64>> = (0..d).map(|_| linspace(-2.0, 2.0, 21)).collect();
                let axes_x: Vec<Vec<f64>> = m.iter().map(|c| linspace(c - 1.0, c + 1.0, 21)).collect();
                r.u_grid = Some(tensor_grid(&axes_u));
                r.x_grid = Some(tensor_grid(&axes_x));
            }
        }
    }
    if kinds.contains(&ExperimentKind::Master) {
        let t_max = r.t_max.or_else(|| r.checkpoints.as_ref().and_then(|c| c.iter().copied().reduce(f64::max)));
        let t_max = t_max.ok_or_else(|| HarnessError::Invalid("master: t_max or checkpoints required".into()))?;
        r.t_max = Some(t_max);
        r.checkpoints.get_or_insert(vec![t_max]);
        r.dt.get_or_insert(master::default_dt(model));
    }
    if kinds.contains(&ExperimentKind::Sample) {
        let t_max = r.t_max.ok_or_else(|| HarnessError::Invalid("sample: t_max required".into()))?;
        r.checkpoints.get_or_insert(vec![t_max]);
        if r.paths.is_none() {
            return Err(HarnessError::Invalid("sample: paths required".into()));
        }
    }
    if kinds.contains(&ExperimentKind::Ldp) && r.region.is_some() {
        let t_max = r.t_max.ok_or_else(|| HarnessError::Invalid("ldp: t_max required with a region".into()))?;
        r.checkpoints.get_or_insert(vec![t_max]);
        if r.paths.is_none() {
            return Err(HarnessError::Invalid("ldp: paths required with a region".into()));
        }
    }
    if let Some(cps) = &r.checkpoints {
        if cps.windows(2).any(|w| w[1] < w[0]) {
            return Err(HarnessError::Invalid("checkpoints must be non-decreasing".into()));
        }
    }
    Ok(r)
}

fn kinds_to_run(cfg: &ExperimentConfig) -> Vec<ExperimentKind> {
    use ExperimentKind::*;
    match (cfg.kind, cfg.target) {
        (ReproduceExample, Some(t)) => vec![t],
        (ReproduceExample, None) => vec![Validate, Clt, Ldp, Master],
        (k, _) => vec![k],
    }
}

fn dispatch(
    cfg: &ExperimentConfig,
    model: &WalkModel,
    r: &ResolvedParams,
    threads: usize,
    out: &mut Outputs,
) -> Result<(), HarnessError> {
    let initial = cfg.initial.clone().unwrap_or(InitialState {
        site: r.initial_site.clone(),
        rho: ComplexMatrix::identity(model.n()).scale_real(1.0 / model.n() as f64),
    });
    for kind in kinds_to_run(cfg) {
        log::info!("running {kind}");
        match kind {
            ExperimentKind::Validate => run_validate(model, out)?,
            ExperimentKind::Master => run_master(model, &initial, r, out)?,
            ExperimentKind::Sample => run_sample(model, &initial, r, threads, out)?,
            ExperimentKind::Clt => run_clt(model, out)?,
            ExperimentKind::Ldp => run_ldp(model, &initial, r, threads, out)?,
            ExperimentKind::ReproduceExample => unreachable!("reproduce-example expands to concrete kinds"),
        }
    }
    Ok(())
}

fn site_columns(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|a| format!("{prefix}_{a}")).collect()
}

fn matrix_columns(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).flat_map(|a| (1..=d).map(move |b| format!("{prefix}_{a}_{b}"))).collect()
}

fn complex_table(leading: &[&str], blocks: &[(Vec<Cell>, &ComplexMatrix)]) -> Table {
    let mut t = Table::new(leading.iter().map(|s| s.to_string()).chain(["row", "col", "re", "im"].map(String::from)));
    for (key, m) in blocks {
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                let z = m[(i, j)];
                let mut row = key.clone();
                row.extend([Cell::from(i + 1), Cell::from(j + 1), z.re.into(), z.im.into()]);
                t.push(row);
            }
        }
    }
    t
}

fn run_validate(model: &WalkModel, out: &mut Outputs) -> Result<(), HarnessError> {
    let stat = stationary_state(model)?;
    let irr = irreducibility_check(model);
    let mut t = Table::new([
        "lindblad_residual",
        "kernel_dim",
        "unique_stationary",
        "stationary_residual",
        "stationary_min_eigenvalue",
        "irreducible",
        "algebra_dim",
    ]);
    t.push(vec![
        model.lindblad_residual().into(),
        stat.kernel_dim.into(),
        stat.h1_holds.into(),
        stat.residual.into(),
        stat.min_eigenvalue.into(),
        irr.irreducible.into(),
        irr.algebra_dim.into(),
    ]);
    out.write("validation.csv", &t)
}

fn run_clt(model: &WalkModel, out: &mut Outputs) -> Result<(), HarnessError> {
    let d = model.d();
    let rep = clt_report(model)?;
    let mut t = Table::new(site_columns("m", d).into_iter().chain(matrix_columns("V", d)));
    t.push(rep.m.iter().copied().chain(rep.v.iter().flatten().copied()).map(Cell::from).collect());
    out.write("clt.csv", &t)?;
    out.write("stationary.csv", &complex_table(&[], &[(vec![], &rep.rho_inv)]))?;
    let blocks: Vec<(Vec<Cell>, &ComplexMatrix)> =
        rep.j.iter().enumerate().map(|(a, j)| (vec![Cell::from(a + 1)], j)).collect();
    out.write("poisson.csv", &complex_table(&["axis"], &blocks))?;
    let mut res = Table::new(["axis", "residual"]);
    for (a, r) in rep.residuals.iter().enumerate() {
        res.push(vec![(a + 1).into(), (*r).into()]);
    }
    out.write("poisson_residuals.csv", &res)
}

fn run_master(
    model: &WalkModel,
    init: &InitialState,
    r: &ResolvedParams,
    out: &mut Outputs,
) -> Result<(), HarnessError> {
    let d = model.d();
    let opts = EvolveOptions { dt: r.dt.expect("resolved"), ..EvolveOptions::for_model(model) };
    let mut state = LatticeState::localized(init.site.clone(), init.rho.clone())?;
    let mut dist = Table::new(["t".to_string()].into_iter().chain(site_columns("i", d)).chain(["weight".to_string()]));
    let mut moments = Table::new(
        ["t", "total_weight", "leaked_mass"]
            .map(String::from)
            .into_iter()
            .chain(site_columns("mean", d))
            .chain(matrix_columns("cov", d)),
    );
    for &t in r.checkpoints.as_ref().expect("resolved") {
        state = master::evolve_with(model, &state, t - state.time(), &opts)?;
        let q = site_distribution(&state);
        for (site, w) in &q.weights {
            let mut row = vec![Cell::from(t)];
            row.extend(site.iter().map(|&i| Cell::from(i)));
            row.push((*w).into());
            dist.push(row);
        }
        let (mean, cov) = distribution_moments(&q);
        let mut row = vec![t.into(), q.weights.values().sum::<f64>().into(), q.leaked_mass.into()];
        row.extend(mean.into_iter().chain(cov.into_iter().flatten()).map(Cell::from));
        moments.push(row);
    }
    out.write("distribution.csv", &dist)?;
    out.write("master_moments.csv", &moments)
}

fn ensemble(
    model: &WalkModel,
    init: &InitialState,
    r: &ResolvedParams,
    threads: usize,
    track_occupation: bool,
) -> Result<EnsembleStats, HarnessError> {
    let cfg = EnsembleConfig {
        t_max: r.t_max.expect("resolved"),
        checkpoints: r.checkpoints.clone().expect("resolved"),
        paths: r.paths.expect("resolved"),
        root_seed: r.root_seed,
        threads,
        track_occupation,
    };
    let spec = InitSpec::Localized { site: init.site.clone(), rho: init.rho.clone() };
    Ok(run_ensemble(model, &spec, &cfg)?)
}

fn run_sample(
    model: &WalkModel,
    init: &InitialState,
    r: &ResolvedParams,
    threads: usize,
    out: &mut Outputs,
) -> Result<(), HarnessError> {
    let d = model.d();
    let stats = ensemble(model, init, r, threads, true)?;
    let mut moments = Table::new(
        ["t".to_string(), "paths".to_string()]
            .into_iter()
            .chain(site_columns("mean", d))
            .chain(matrix_columns("cov", d)),
    );
    let mut hist =
        Table::new(["t".to_string()].into_iter().chain(site_columns("i", d)).chain(["frequency".to_string()]));
    for cp in &stats.checkpoints {
        let mut row = vec![cp.time.into(), stats.sample_count.into()];
        row.extend(cp.mean.iter().copied().chain(cp.covariance.iter().flatten().copied()).map(Cell::from));
        moments.push(row);
        for (site, f) in &cp.histogram {
            let mut row = vec![Cell::from(cp.time)];
            row.extend(site.iter().map(|&i| Cell::from(i)));
            row.push((*f).into());
            hist.push(row);
        }
    }
    out.write("sample_moments.csv", &moments)?;
    out.write("histogram.csv", &hist)?;
    if let Some(rho_bar) = &stats.rho_bar {
        out.write("rho_bar.csv", &complex_table(&[], &[(vec![], rho_bar)]))?;
    }
    let mut summary = Table::new(["paths", "absorbed_paths"]);
    summary.push(vec![stats.sample_count.into(), stats.absorbed_paths.into()]);
    out.write("sample_summary.csv", &summary)?;
    if r.export_path {
        let path = sample_path(model, &init.rho, &init.site, r.t_max.expect("resolved"), r.root_seed)?;
        let mut t = Table::new(["time".to_string(), "channel".to_string()].into_iter().chain(site_columns("i", d)));
        let mut start = vec![Cell::from(0.0), Cell::from(0usize)];
        start.extend(path.initial.1.iter().map(|&i| Cell::from(i)));
        t.push(start);
        for e in &path.events {
            let mut row = vec![Cell::from(e.time), Cell::from(e.channel + 1)];
            row.extend(e.post_position.iter().map(|&i| Cell::from(i)));
            t.push(row);
        }
        out.write("path.csv", &t)?;
    }
    Ok(())
}

fn run_ldp(
    model: &WalkModel,
    init: &InitialState,
    r: &ResolvedParams,
    threads: usize,
    out: &mut Outputs,
) -> Result<(), HarnessError> {
    let d = model.d();
    let mut curve = DeformationCurve::new(model.clone());
    limits::require_ldp(&curve)?;
    if let Some(grid) = &r.u_grid {
        let mut t = Table::new(site_columns("u", d).into_iter().chain(["l_u".to_string()]));
        for (u, l) in curve.sample(grid)? {
            t.push(u.iter().copied().chain([*l]).map(Cell::from).collect());
        }
        out.write("lu.csv", &t)?;
    }
    let opts = RateOptions::default();
    if let Some(grid) = &r.x_grid {
        let samples = rate_function_grid(&curve, grid, &opts)?;
        let mut t = Table::new(
            site_columns("x", d)
                .into_iter()
                .chain(["rate".to_string(), "converged".to_string()])
                .chain(site_columns("u_star", d)),
        );
        for (x, v) in samples.grid.iter().zip(&samples.values) {
            let mut row: Vec<Cell> = x.iter().copied().map(Cell::from).collect();
            row.push(v.value.into());
            row.push(v.converged.into());
            match &v.u_star {
                Some(u) => row.extend(u.iter().copied().map(Cell::from)),
                None => row.extend((0..d).map(|_| Cell::from(f64::NAN))),
            }
            t.push(row);
        }
        out.write("rate.csv", &t)?;
    }
    if let Some(raw) = &r.region {
        let region = Region {
            lower: raw.lower.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect(),
            upper: raw.upper.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect(),
        };
        let points = if d == 1 { 401 } else { 41 };
        let inf = grid_infimum(&curve, &region.grid(points, 2.0), &opts)?;
        let stats = ensemble(model, init, r, threads, false)?;
        let mut t = Table::new(["t", "hits", "samples", "empirical_rate", "lower_bound_only", "rate_infimum"]);
        for e in ldp_from_stats(&stats, &region).into_iter().filter(|e| e.time > 0.0) {
            t.push(vec![
                e.time.into(),
                e.hits.into(),
                e.samples.into(),
                e.rate.into(),
                e.lower_bound_only.into(),
                inf.into(),
            ]);
        }
        out.write("empirical_ldp.csv", &t)?;
    }
    Ok(())
}
