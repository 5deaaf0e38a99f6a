//! Ensembles of independent trajectories and their statistics.
//!
//! Path `k` draws from stream `k` of the root seed, results are gathered in
//! index order and summed pairwise, so the output does not depend on the
//! number of worker threads.

use std::collections::BTreeMap;

use rand::distr::Open01;
use rand::Rng;
use rayon::prelude::*;

use crate::linalg::ComplexMatrix;
use crate::model::{Site, WalkModel};
use crate::trajectory::{check_density, path_rng, simulate, NoJumpFlow, PathObserver, TrajectoryError};

/// Initial law of `(rho_0, X_0)`.
#[derive(Clone, Debug, PartialEq)]
pub enum InitSpec {
    Localized {
        site: Site,
        rho: ComplexMatrix,
    },
    /// Site `i` is chosen with probability `Tr rho(i)`, then `rho_0 = rho(i) / Tr rho(i)`.
    Mixture(Vec<(Site, ComplexMatrix)>),
}

impl InitSpec {
    fn validate(&self, model: &WalkModel) -> Result<(), TrajectoryError> {
        match self {
            InitSpec::Localized { site, rho } => {
                check_site(model, site)?;
                check_density(model, rho)
            }
            InitSpec::Mixture(parts) => {
                if parts.is_empty() {
                    return Err(TrajectoryError::InvalidState("empty initial mixture".into()));
                }
                let mut total = 0.0;
                for (site, rho) in parts {
                    check_site(model, site)?;
                    let tr = rho.trace().re;
                    if !(tr > 0.0) {
                        return Err(TrajectoryError::InvalidState(format!("site {site:?} has weight {tr}")));
                    }
                    check_density(model, &rho.scale_real(1.0 / tr))?;
                    total += tr;
                }
                if (total - 1.0).abs() > 1e-8 {
                    return Err(TrajectoryError::InvalidState(format!("initial weights sum to {total}")));
                }
                Ok(())
            }
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> (ComplexMatrix, Site) {
        match self {
            InitSpec::Localized { site, rho } => (rho.clone(), site.clone()),
            InitSpec::Mixture(parts) => {
                let v: f64 = rng.sample(Open01);
                let mut acc = 0.0;
                for (site, rho) in parts {
                    let tr = rho.trace().re;
                    acc += tr;
                    if v < acc {
                        return (rho.scale_real(1.0 / tr), site.clone());
                    }
                }
                let (site, rho) = parts.last().expect("validated non-empty");
                (rho.scale_real(1.0 / rho.trace().re), site.clone())
            }
        }
    }
}

fn check_site(model: &WalkModel, site: &Site) -> Result<(), TrajectoryError> {
    if site.len() != model.d() {
        return Err(TrajectoryError::InvalidState(format!("site {site:?} is not in Z^{}", model.d())));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct EnsembleConfig {
    pub t_max: f64,
    pub checkpoints: Vec<f64>,
    pub paths: usize,
    pub root_seed: u64,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
    /// Accumulate the time-averaged internal state of every path.
    pub track_occupation: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointStats {
    pub time: f64,
    pub mean: Vec<f64>,
    /// Sample covariance with denominator `N - 1` (zero for `N = 1`).
    pub covariance: Vec<Vec<f64>>,
    pub histogram: BTreeMap<Site, f64>,
    /// `X_t` of every path, in path order.
    pub positions: Vec<Site>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleStats {
    pub sample_count: usize,
    /// `X_0` of every path, in path order.
    pub initial_positions: Vec<Site>,
    pub checkpoints: Vec<CheckpointStats>,
    /// Mean over paths of the time-averaged internal state.
    pub rho_bar: Option<ComplexMatrix>,
    pub absorbed_paths: usize,
}

struct CheckpointRecorder<'a> {
    times: &'a [f64],
    next: usize,
    current: Site,
    out: Vec<Site>,
}

impl PathObserver for CheckpointRecorder<'_> {
    fn jump(&mut self, time: f64, _channel: usize, position: &Site, _state: &ComplexMatrix) {
        while self.next < self.times.len() && self.times[self.next] < time {
            self.out.push(self.current.clone());
            self.next += 1;
        }
        self.current.clone_from(position);
    }
}

struct PathResult {
    start: Site,
    positions: Vec<Site>,
    occupation: Option<ComplexMatrix>,
    absorbed: bool,
}

pub fn run_ensemble(
    model: &WalkModel,
    init: &InitSpec,
    cfg: &EnsembleConfig,
) -> Result<EnsembleStats, TrajectoryError> {
    init.validate(model)?;
    if cfg.paths == 0 {
        return Err(TrajectoryError::InvalidState("ensemble needs at least one path".into()));
    }
    if !(cfg.t_max.is_finite() && cfg.t_max >= 0.0) {
        return Err(TrajectoryError::InvalidTime(format!("t_max = {} must be finite and >= 0", cfg.t_max)));
    }
    if let Some(c) = cfg.checkpoints.iter().find(|c| !(**c >= 0.0 && **c <= cfg.t_max)) {
        return Err(TrajectoryError::InvalidTime(format!("checkpoint {c} outside [0, {}]", cfg.t_max)));
    }
    let mut order: Vec<usize> = (0..cfg.checkpoints.len()).collect();
    order.sort_by(|a, b| cfg.checkpoints[*a].total_cmp(&cfg.checkpoints[*b]));
    let sorted: Vec<f64> = order.iter().map(|&k| cfg.checkpoints[k]).collect();
    let flow = NoJumpFlow::new(model)?;

    let one_path = |index: usize| -> Result<PathResult, TrajectoryError> {
        let mut rng = path_rng(cfg.root_seed, index as u64);
        let (rho0, x0) = init.draw(&mut rng);
        let mut rec = CheckpointRecorder { times: &sorted, next: 0, current: x0.clone(), out: Vec::new() };
        let summary = simulate(model, &flow, &rho0, &x0, cfg.t_max, cfg.track_occupation, &mut rng, &mut rec)?;
        while rec.out.len() < sorted.len() {
            rec.out.push(summary.final_position.clone());
        }
        let mut positions = vec![Vec::new(); sorted.len()];
        for (slot, &k) in order.iter().enumerate() {
            positions[k] = std::mem::take(&mut rec.out[slot]);
        }
        Ok(PathResult { start: x0, positions, occupation: summary.occupation, absorbed: summary.absorbed })
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| TrajectoryError::InvalidState(format!("thread pool: {e}")))?;
    let results: Vec<PathResult> =
        pool.install(|| (0..cfg.paths).into_par_iter().map(one_path).collect::<Result<_, _>>())?;

    let d = model.d();
    let checkpoints = cfg
        .checkpoints
        .iter()
        .enumerate()
        .map(|(k, &time)| {
            let positions: Vec<Site> = results.iter().map(|r| r.positions[k].clone()).collect();
            let (mean, covariance) = site_moments(&positions, d);
            let mut counts: BTreeMap<Site, usize> = BTreeMap::new();
            for p in &positions {
                *counts.entry(p.clone()).or_default() += 1;
            }
            let n = positions.len() as f64;
            let histogram = counts.into_iter().map(|(s, c)| (s, c as f64 / n)).collect();
            CheckpointStats { time, mean, covariance, histogram, positions }
        })
        .collect();
    let rho_bar = if cfg.track_occupation && cfg.t_max > 0.0 {
        let mats: Vec<ComplexMatrix> = results.iter().filter_map(|r| r.occupation.clone()).collect();
        pairwise_matrix_sum(&mats).map(|s| s.scale_real(1.0 / mats.len() as f64))
    } else {
        None
    };
    Ok(EnsembleStats {
        sample_count: cfg.paths,
        initial_positions: results.iter().map(|r| r.start.clone()).collect(),
        checkpoints,
        rho_bar,
        absorbed_paths: results.iter().filter(|r| r.absorbed).count(),
    })
}

/// Pairwise (cascade) summation; fixed association for a given length.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

fn pairwise_matrix_sum(mats: &[ComplexMatrix]) -> Option<ComplexMatrix> {
    match mats.len() {
        0 => None,
        1 => Some(mats[0].clone()),
        len => {
            let mid = len / 2;
            let mut left = pairwise_matrix_sum(&mats[..mid])?;
            left += &pairwise_matrix_sum(&mats[mid..])?;
            Some(left)
        }
    }
}

/// Sample mean and covariance (denominator `N - 1`) of lattice points.
pub fn site_moments(points: &[Site], d: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = points.len();
    let mut mean = vec![0.0; d];
    let mut cov = vec![vec![0.0; d]; d];
    if n == 0 {
        return (mean, cov);
    }
    for (a, m) in mean.iter_mut().enumerate() {
        let xs: Vec<f64> = points.iter().map(|p| p[a] as f64).collect();
        *m = pairwise_sum(&xs) / n as f64;
    }
    if n > 1 {
        for a in 0..d {
            for b in a..d {
                let prods: Vec<f64> =
                    points.iter().map(|p| (p[a] as f64 - mean[a]) * (p[b] as f64 - mean[b])).collect();
                let c = pairwise_sum(&prods) / (n - 1) as f64;
                cov[a][b] = c;
                cov[b][a] = c;
            }
        }
    }
    (mean, cov)
}
