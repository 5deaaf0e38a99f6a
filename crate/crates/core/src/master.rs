//! Site-wise master equation on a growing window of `Z^d`.
//!
//! The walker's state is a map `i -> rho(i)` of positive matrices whose traces
//! sum to one; `rho(i)` obeys
//! `d rho(i)/dt = D0 rho(i) + rho(i) D0^* + sum_r D_r rho(i - e_r) D_r^*`.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{ComplexMatrix, C64, ZERO};
use crate::model::{ModelError, Site, WalkModel};

pub const DEFAULT_PRUNE_THRESHOLD: f64 = 1e-14;
/// Negative eigenvalues above this are roundoff and get clamped.
pub const CLAMP_LIMIT: f64 = 1e-8;
const STATE_TOL: f64 = 1e-10;
const MASS_TOL: f64 = 1e-8;
/// Sites per step above which the right-hand side is evaluated in parallel.
const PAR_THRESHOLD: usize = 64;
const RK4_STAGES: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MasterError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid lattice state: {0}")]
    InvalidState(String),
    #[error("invalid time parameters: {0}")]
    InvalidTime(String),
    #[error("non-finite site matrix at t = {time} (step too large?)")]
    NonFinite { time: f64 },
    #[error("eigenvalue {value:.3e} of rho{site:?} at t = {time} is below -{CLAMP_LIMIT:e}; integration unstable")]
    NegativeEigenvalue { site: Site, value: f64, time: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeState {
    d: usize,
    n: usize,
    sites: BTreeMap<Site, ComplexMatrix>,
    leaked_mass: f64,
    time: f64,
    /// Largest eigenvalue deficit clamped to zero so far.
    max_clamp: f64,
}

impl LatticeState {
    pub fn new(
        d: usize,
        n: usize,
        sites: BTreeMap<Site, ComplexMatrix>,
        leaked_mass: f64,
    ) -> Result<Self, MasterError> {
        if d == 0 || n == 0 {
            return Err(MasterError::InvalidState("d and n must be positive".into()));
        }
        if !(leaked_mass.is_finite() && leaked_mass >= 0.0) {
            return Err(MasterError::InvalidState(format!("leaked mass {leaked_mass} must be finite and >= 0")));
        }
        let mut total = leaked_mass;
        for (site, rho) in &sites {
            if site.len() != d {
                return Err(MasterError::InvalidState(format!("site {site:?} is not in Z^{d}")));
            }
            if rho.rows() != n || rho.cols() != n {
                return Err(MasterError::InvalidState(format!(
                    "rho{site:?} is {}x{}, expected {n}x{n}",
                    rho.rows(),
                    rho.cols()
                )));
            }
            if !rho.is_finite() {
                return Err(MasterError::InvalidState(format!("rho{site:?} has non-finite entries")));
            }
            if !rho.is_hermitian(STATE_TOL) || !rho.is_psd(STATE_TOL) {
                return Err(MasterError::InvalidState(format!("rho{site:?} is not Hermitian positive semidefinite")));
            }
            total += rho.trace().re;
        }
        if (total - 1.0).abs() > MASS_TOL {
            return Err(MasterError::InvalidState(format!("total mass {total} differs from 1")));
        }
        Ok(Self { d, n, sites, leaked_mass, time: 0.0, max_clamp: 0.0 })
    }

    /// All mass at `site` with internal state `rho`.
    pub fn localized(site: Site, rho: ComplexMatrix) -> Result<Self, MasterError> {
        let d = site.len();
        let n = rho.rows();
        Self::new(d, n, BTreeMap::from([(site, rho)]), 0.0)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sites(&self) -> &BTreeMap<Site, ComplexMatrix> {
        &self.sites
    }

    pub fn leaked_mass(&self) -> f64 {
        self.leaked_mass
    }

    /// Time elapsed since construction.
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn max_clamp(&self) -> f64 {
        self.max_clamp
    }

    /// `sum_i Tr rho(i) + leaked_mass`.
    pub fn total_mass(&self) -> f64 {
        self.sites.values().map(|m| m.trace().re).sum::<f64>() + self.leaked_mass
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvolveOptions {
    pub dt: f64,
    pub prune_threshold: f64,
}

impl EvolveOptions {
    pub fn for_model(model: &WalkModel) -> Self {
        Self { dt: default_dt(model), prune_threshold: DEFAULT_PRUNE_THRESHOLD }
    }
}

/// `1e-3 * min(1, 1 / maxrate)`.
pub fn default_dt(model: &WalkModel) -> f64 {
    let rate = model.max_rate();
    if rate > 0.0 {
        1e-3 * (1.0 / rate).min(1.0)
    } else {
        1e-3
    }
}

pub fn evolve(model: &WalkModel, state: &LatticeState, t: f64, dt: f64) -> Result<LatticeState, MasterError> {
    evolve_with(model, state, t, &EvolveOptions { dt, prune_threshold: DEFAULT_PRUNE_THRESHOLD })
}

/// Advances `state` by `t` with classical RK4. The step count is
/// `ceil(t / dt)` and the step is shrunk slightly so the last one lands on `t`.
pub fn evolve_with(
    model: &WalkModel,
    state: &LatticeState,
    t: f64,
    opts: &EvolveOptions,
) -> Result<LatticeState, MasterError> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(MasterError::InvalidTime(format!("t = {t} must be finite and >= 0")));
    }
    if !(opts.dt.is_finite() && opts.dt > 0.0) {
        return Err(MasterError::InvalidTime(format!("dt = {} must be finite and > 0", opts.dt)));
    }
    if !(opts.prune_threshold.is_finite() && opts.prune_threshold >= 0.0) {
        return Err(MasterError::InvalidTime(format!("prune threshold {} must be >= 0", opts.prune_threshold)));
    }
    if state.d != model.d() || state.n != model.n() {
        return Err(MasterError::InvalidState(format!(
            "state lives on Z^{} with n = {}, model has d = {}, n = {}",
            state.d,
            state.n,
            model.d(),
            model.n()
        )));
    }
    let mut out = state.clone();
    if t == 0.0 {
        return Ok(out);
    }
    let steps = (t / opts.dt).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let start = state.time;
    let ops = FlatOps::new(model);
    let mut grid = Grid::new(model, &out.sites);
    let mut bufs = Buffers::new(grid.y.len());
    for k in 0..steps {
        let time = start + h * (k + 1) as f64;
        grid.rk4_step(&ops, &mut bufs, h);
        if grid.finish_step(&mut out, time, opts.prune_threshold)? {
            grid = Grid::new(model, &grid.live_sites());
            bufs = Buffers::new(grid.y.len());
        }
    }
    out.sites = grid.live_sites();
    out.time = start + t;
    Ok(out)
}

/// Row-major copies of `D0`, the `D_r` and their adjoints.
struct FlatOps {
    n: usize,
    d0: Vec<C64>,
    jumps: Vec<Vec<C64>>,
}

impl FlatOps {
    fn new(model: &WalkModel) -> Self {
        let flat = |m: &ComplexMatrix| m.data().to_vec();
        Self { n: model.n(), d0: flat(model.d0()), jumps: model.jump_ops().iter().map(flat).collect() }
    }

    /// `out = D0 y_k + y_k D0^* + sum_r D_r y_j D_r^*` over the sources of site `k`.
    fn site_rhs(&self, y: &[C64], sources: &[(usize, usize)], k: usize, out: &mut [C64], tmp: &mut [C64]) {
        let n = self.n;
        let nn = n * n;
        let rho = &y[k * nn..(k + 1) * nn];
        for i in 0..n {
            for j in 0..n {
                let mut s = ZERO;
                for l in 0..n {
                    s += self.d0[i * n + l] * rho[l * n + j] + rho[i * n + l] * self.d0[j * n + l].conj();
                }
                out[i * n + j] = s;
            }
        }
        for &(r, src) in sources {
            let a = &self.jumps[r];
            let rho = &y[src * nn..(src + 1) * nn];
            for i in 0..n {
                for j in 0..n {
                    let mut s = ZERO;
                    for l in 0..n {
                        s += a[i * n + l] * rho[l * n + j];
                    }
                    tmp[i * n + j] = s;
                }
            }
            for i in 0..n {
                for j in 0..n {
                    let mut s = ZERO;
                    for l in 0..n {
                        s += tmp[i * n + l] * a[j * n + l].conj();
                    }
                    out[i * n + j] += s;
                }
            }
        }
    }
}

struct Buffers {
    k: Vec<C64>,
    stage: Vec<C64>,
    acc: Vec<C64>,
}

impl Buffers {
    fn new(len: usize) -> Self {
        Self { k: vec![ZERO; len], stage: vec![ZERO; len], acc: vec![ZERO; len] }
    }
}

/// Flat working copy of the state on the window `support + RK4_STAGES` layers.
struct Grid {
    n: usize,
    sites: Vec<Site>,
    /// For each site, the `(channel, index)` pairs of sites feeding it.
    sources: Vec<Vec<(usize, usize)>>,
    live: Vec<bool>,
    y: Vec<C64>,
}

impl Grid {
    fn new(model: &WalkModel, current: &BTreeMap<Site, ComplexMatrix>) -> Self {
        let n = model.n();
        let steps: Vec<Site> = (0..model.channel_count()).map(|r| model.displacement(r)).collect();
        // One neighbour layer per RK4 stage: the fourth stage reaches four sites
        // out, so a thinner window would leak flux across its edge.
        let mut hull: BTreeSet<Site> = current.keys().cloned().collect();
        let mut frontier: Vec<Site> = hull.iter().cloned().collect();
        for _ in 0..RK4_STAGES {
            let mut next = Vec::new();
            for site in &frontier {
                for e in &steps {
                    let s = shift(site, e, 1);
                    if hull.insert(s.clone()) {
                        next.push(s);
                    }
                }
            }
            frontier = next;
        }
        let sites: Vec<Site> = hull.into_iter().collect();
        let sources = sites
            .iter()
            .map(|site| {
                steps
                    .iter()
                    .enumerate()
                    .filter_map(|(r, e)| sites.binary_search(&shift(site, e, -1)).ok().map(|j| (r, j)))
                    .collect()
            })
            .collect();
        let mut y = vec![ZERO; sites.len() * n * n];
        let mut live = vec![false; sites.len()];
        for (k, site) in sites.iter().enumerate() {
            if let Some(m) = current.get(site) {
                y[k * n * n..(k + 1) * n * n].copy_from_slice(m.data());
                live[k] = true;
            }
        }
        Self { n, sites, sources, live, y }
    }

    fn live_sites(&self) -> BTreeMap<Site, ComplexMatrix> {
        let nn = self.n * self.n;
        self.sites
            .iter()
            .enumerate()
            .filter(|(k, _)| self.live[*k])
            .map(|(k, s)| {
                let m = ComplexMatrix::new(self.n, self.n, self.y[k * nn..(k + 1) * nn].to_vec()).expect("n x n block");
                (s.clone(), m)
            })
            .collect()
    }

    fn rhs(&self, ops: &FlatOps, y: &[C64], out: &mut [C64]) {
        let nn = self.n * self.n;
        if self.sites.len() >= PAR_THRESHOLD {
            out.par_chunks_mut(nn)
                .enumerate()
                .for_each_init(|| vec![ZERO; nn], |tmp, (k, o)| ops.site_rhs(y, &self.sources[k], k, o, tmp));
        } else {
            let mut tmp = vec![ZERO; nn];
            for (k, o) in out.chunks_mut(nn).enumerate() {
                ops.site_rhs(y, &self.sources[k], k, o, &mut tmp);
            }
        }
    }

    fn rk4_step(&mut self, ops: &FlatOps, b: &mut Buffers, h: f64) {
        let weights = [(h / 6.0, h / 2.0), (h / 3.0, h / 2.0), (h / 3.0, h), (h / 6.0, 0.0)];
        b.acc.copy_from_slice(&self.y);
        for (stage, &(w, c)) in weights.iter().enumerate() {
            let input = if stage == 0 { &self.y } else { &b.stage };
            self.rhs(ops, input, &mut b.k);
            for (a, k) in b.acc.iter_mut().zip(&b.k) {
                *a += k * w;
            }
            if stage < 3 {
                for ((s, y), k) in b.stage.iter_mut().zip(&self.y).zip(&b.k) {
                    *s = y + k * c;
                }
            }
        }
        std::mem::swap(&mut self.y, &mut b.acc);
    }

    /// Symmetrizes, checks positivity, clamps roundoff and prunes. Returns
    /// whether the set of live sites changed.
    fn finish_step(&mut self, state: &mut LatticeState, time: f64, prune_threshold: f64) -> Result<bool, MasterError> {
        let n = self.n;
        let nn = n * n;
        let mut changed = false;
        for (k, m) in self.y.chunks_mut(nn).enumerate() {
            if m.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                return Err(MasterError::NonFinite { time });
            }
            for i in 0..n {
                m[i * n + i].im = 0.0;
                for j in i + 1..n {
                    let avg = (m[i * n + j] + m[j * n + i].conj()) * 0.5;
                    m[i * n + j] = avg;
                    m[j * n + i] = avg.conj();
                }
            }
            let low = min_eigenvalue(m, n);
            if low < -CLAMP_LIMIT {
                return Err(MasterError::NegativeEigenvalue { site: self.sites[k].clone(), value: low, time });
            }
            if low < 0.0 {
                let fixed = clamp_psd(&ComplexMatrix::new(n, n, m.to_vec()).expect("n x n block"));
                m.copy_from_slice(fixed.data());
                if -low > state.max_clamp {
                    state.max_clamp = -low;
                    log::debug!("clamped eigenvalue {low:.3e} at site {:?}, t = {time}", self.sites[k]);
                }
            }
            let tr: f64 = (0..n).map(|i| m[i * n + i].re).sum();
            if tr < prune_threshold {
                if tr != 0.0 || self.live[k] {
                    state.leaked_mass += tr.max(0.0);
                    m.fill(ZERO);
                }
                changed |= self.live[k];
                self.live[k] = false;
            } else if !self.live[k] {
                self.live[k] = true;
                changed = true;
            }
        }
        Ok(changed)
    }
}

/// Smallest eigenvalue of a Hermitian block; closed form for `n <= 2`.
fn min_eigenvalue(m: &[C64], n: usize) -> f64 {
    match n {
        1 => m[0].re,
        2 => {
            let (a, d) = (m[0].re, m[3].re);
            let half = 0.5 * (a - d);
            0.5 * (a + d) - (half * half + m[1].norm_sqr()).sqrt()
        }
        _ => ComplexMatrix::new(n, n, m.to_vec()).expect("n x n block").hermitian_eigenvalues()[0],
    }
}

fn shift(site: &[i64], e: &[i64], sign: i64) -> Site {
    site.iter().zip(e).map(|(a, b)| a + sign * b).collect()
}

fn clamp_psd(m: &ComplexMatrix) -> ComplexMatrix {
    let (vals, vecs) = m.hermitian_eigen();
    let n = m.rows();
    ComplexMatrix::from_fn(n, n, |i, j| {
        vals.iter().enumerate().filter(|(_, v)| **v > 0.0).map(|(k, v)| vecs[(i, k)] * vecs[(j, k)].conj() * *v).sum()
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PositionDistribution {
    pub d: usize,
    pub weights: BTreeMap<Site, f64>,
    pub time: f64,
    pub leaked_mass: f64,
}

/// `q(i) = Tr rho(i)`; values within `-1e-12` of zero are clamped.
pub fn site_distribution(state: &LatticeState) -> PositionDistribution {
    let weights = state
        .sites
        .iter()
        .map(|(s, m)| {
            let w = m.trace().re;
            (s.clone(), if w < 0.0 && w >= -1e-12 { 0.0 } else { w })
        })
        .collect();
    PositionDistribution { d: state.d, weights, time: state.time, leaked_mass: state.leaked_mass }
}

/// Mean and covariance of `q`, normalized by its total weight.
pub fn distribution_moments(q: &PositionDistribution) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = q.d;
    let total: f64 = q.weights.values().sum();
    let mut mean = vec![0.0; d];
    let mut cov = vec![vec![0.0; d]; d];
    if total <= 0.0 {
        return (mean, cov);
    }
    for (site, w) in &q.weights {
        for a in 0..d {
            mean[a] += w * site[a] as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= total);
    for (site, w) in &q.weights {
        for a in 0..d {
            let da = site[a] as f64 - mean[a];
            for b in 0..d {
                cov[a][b] += w * da * (site[b] as f64 - mean[b]);
            }
        }
    }
    cov.iter_mut().flatten().for_each(|c| *c /= total);
    (mean, cov)
}
