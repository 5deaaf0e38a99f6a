//! Exact sampling of quantum trajectories `(rho_t, X_t)`.
//!
//! Between jumps the unnormalized state follows `sigma' = D0 sigma + sigma D0^*`,
//! so `sigma(s) = G(s) rho G(s)^*` with `G(s) = exp(s D0)`, and `Tr sigma(s)` is
//! the probability of no jump in `[0, s]`. A jump time is drawn by solving
//! `Tr sigma(tau) = U`.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{eigen_decomposition, matrix_exponential, ComplexMatrix, LinalgError, C64};
use crate::model::{ModelError, Site, WalkModel};

/// Channel weights at or below this are treated as zero.
pub const RATE_FLOOR: f64 = 1e-14;
/// Absolute accuracy of sampled jump times.
pub const TIME_TOL: f64 = 1e-12;
const STATE_TOL: f64 = 1e-9;
/// Condition number above which `D0` is not propagated through its eigenbasis.
const EIGEN_COND_LIMIT: f64 = 1e6;
/// Occupation quadrature panels per bracketing step.
const PANELS_PER_STEP: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("uniform draw {0} is outside (0, 1)")]
    InvalidDraw(f64),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid horizon: {0}")]
    InvalidTime(String),
    #[error("total jump rate {0:.3e} vanishes: absorbing state")]
    Absorbing(f64),
    #[error("channel {channel} has vanishing weight {weight:.3e}")]
    VanishingChannel { channel: usize, weight: f64 },
}

/// Per-path generator: counter-based stream `index` of the ChaCha8 keyed by
/// `root_seed`.
pub fn path_rng(root_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root_seed);
    rng.set_stream(index);
    rng
}

#[derive(Clone, Debug)]
enum Propagator {
    /// `G(s) = P diag(exp(s lambda)) P^{-1}`.
    Eigen {
        p: ComplexMatrix,
        p_inv: ComplexMatrix,
        lambda: Vec<C64>,
    },
    Dense {
        d0: ComplexMatrix,
    },
}

/// The no-jump flow of a model, precomputed for repeated sampling.
#[derive(Clone, Debug)]
pub struct NoJumpFlow {
    propagator: Propagator,
    /// `D0 + D0^* = -sum_r D_r^* D_r`.
    decay: ComplexMatrix,
    /// Bracketing step for the survival search.
    step: f64,
}

impl NoJumpFlow {
    pub fn new(model: &WalkModel) -> Result<Self, TrajectoryError> {
        let d0 = model.d0().clone();
        let decay = &d0 + &d0.adjoint();
        let rate = model.max_rate();
        let step = if rate > 0.0 { (1.0 / rate).min(1.0) } else { 1.0 };
        let propagator = Self::eigen_propagator(&d0).unwrap_or(Propagator::Dense { d0 });
        Ok(Self { propagator, decay, step })
    }

    fn eigen_propagator(d0: &ComplexMatrix) -> Option<Propagator> {
        let (lambda, p) = eigen_decomposition(d0).ok()?;
        let n = d0.rows();
        let p_inv = p.solve(&ComplexMatrix::identity(n)).ok()?;
        if !p_inv.is_finite() || p.frobenius_norm() * p_inv.frobenius_norm() > EIGEN_COND_LIMIT {
            return None;
        }
        let candidate = Propagator::Eigen { p, p_inv, lambda };
        // Accept the eigenbasis only if it reproduces exp(D0).
        let reference = matrix_exponential(d0, 1.0).ok()?;
        let err = (&Self::propagator_at(&candidate, 1.0).ok()? - &reference).frobenius_norm();
        (err <= 1e-12 * reference.frobenius_norm().max(1.0)).then_some(candidate)
    }

    fn propagator_at(prop: &Propagator, s: f64) -> Result<ComplexMatrix, LinalgError> {
        match prop {
            Propagator::Eigen { p, p_inv, lambda } => {
                let n = lambda.len();
                let e: Vec<C64> = lambda.iter().map(|l| (l * s).exp()).collect();
                Ok(ComplexMatrix::from_fn(n, n, |i, j| (0..n).map(|k| p[(i, k)] * e[k] * p_inv[(k, j)]).sum()))
            }
            Propagator::Dense { d0 } => matrix_exponential(d0, s),
        }
    }

    /// `exp(s D0)`.
    pub fn propagator(&self, s: f64) -> Result<ComplexMatrix, TrajectoryError> {
        Ok(Self::propagator_at(&self.propagator, s)?)
    }

    pub fn uses_eigenbasis(&self) -> bool {
        matches!(self.propagator, Propagator::Eigen { .. })
    }

    /// `sigma(s)` started from `sigma`.
    pub fn advance(&self, sigma: &ComplexMatrix, s: f64) -> Result<ComplexMatrix, TrajectoryError> {
        Ok(sigma.conjugated_by(&self.propagator(s)?))
    }

    /// First `tau <= t_cap` with `Tr sigma(tau) = u`, where `sigma(0) = rho`.
    pub fn sample_jump_time(&self, rho: &ComplexMatrix, u: f64, t_cap: f64) -> Result<JumpTime, TrajectoryError> {
        if !(u > 0.0 && u < 1.0) {
            return Err(TrajectoryError::InvalidDraw(u));
        }
        if !(t_cap.is_finite() && t_cap >= 0.0) {
            return Err(TrajectoryError::InvalidTime(format!("cap {t_cap} must be finite and >= 0")));
        }
        // March in fixed exact steps until survival drops to u.
        let g_step = self.propagator(self.step)?;
        let mut lo = 0.0;
        let mut sigma_lo = rho.clone();
        loop {
            let remaining = t_cap - lo;
            if remaining <= 0.0 {
                return Ok(JumpTime::NoJumpBefore { rho_at_cap: normalize(&sigma_lo)? });
            }
            let (width, sigma_hi) = if remaining > self.step {
                (self.step, sigma_lo.conjugated_by(&g_step))
            } else {
                (remaining, self.advance(&sigma_lo, remaining)?)
            };
            let f_hi = sigma_hi.trace().re;
            if f_hi <= u {
                let tau_local = self.refine(&sigma_lo, width, u)?;
                let sigma = self.advance(&sigma_lo, tau_local)?;
                return Ok(JumpTime::Jump { tau: lo + tau_local, rho_pre: normalize(&sigma)? });
            }
            lo += width;
            sigma_lo = sigma_hi;
        }
    }

    /// Root of `Tr sigma(s) = u` in `[0, width]`, given a sign change there.
    /// Newton on the exact derivative, kept inside the bracket by bisection.
    fn refine(&self, sigma0: &ComplexMatrix, width: f64, u: f64) -> Result<f64, TrajectoryError> {
        let (mut a, mut b) = (0.0, width);
        let mut x = 0.5 * width;
        for _ in 0..200 {
            let sigma = self.advance(sigma0, x)?;
            let f = sigma.trace().re - u;
            if f == 0.0 {
                return Ok(x);
            }
            if f > 0.0 {
                a = x;
            } else {
                b = x;
            }
            let slope = self.decay.trace_product(&sigma).re;
            let newton = if slope < 0.0 { x - f / slope } else { f64::NAN };
            let next = if newton > a && newton < b { newton } else { 0.5 * (a + b) };
            if (next - x).abs() <= 0.1 * TIME_TOL || b - a <= TIME_TOL {
                return Ok(next);
            }
            x = next;
        }
        Ok(0.5 * (a + b))
    }

    /// `int_0^tau rho_s ds` for the normalized no-jump state, composite Simpson.
    fn occupation(&self, rho: &ComplexMatrix, tau: f64) -> Result<ComplexMatrix, TrajectoryError> {
        let n = rho.rows();
        if tau <= 0.0 {
            return Ok(ComplexMatrix::zeros(n, n));
        }
        let panels = 2 * ((tau * PANELS_PER_STEP / self.step / 2.0).ceil().max(1.0) as usize);
        let w = tau / panels as f64;
        let g = self.propagator(w)?;
        let mut sigma = rho.clone();
        let mut acc = normalize_lenient(&sigma);
        for k in 1..=panels {
            sigma = sigma.conjugated_by(&g);
            let weight = if k == panels {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc.axpy(weight.into(), &normalize_lenient(&sigma));
        }
        Ok(acc.scale_real(w / 3.0))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum JumpTime {
    Jump { tau: f64, rho_pre: ComplexMatrix },
    NoJumpBefore { rho_at_cap: ComplexMatrix },
}

fn normalize(sigma: &ComplexMatrix) -> Result<ComplexMatrix, TrajectoryError> {
    let tr = sigma.trace().re;
    if !(tr > 0.0 && tr.is_finite()) {
        return Err(TrajectoryError::InvalidState(format!("unnormalized state has trace {tr}")));
    }
    Ok(sigma.scale_real(1.0 / tr).hermitian_part())
}

fn normalize_lenient(sigma: &ComplexMatrix) -> ComplexMatrix {
    let tr = sigma.trace().re;
    if tr > 0.0 {
        sigma.scale_real(1.0 / tr)
    } else {
        sigma.clone()
    }
}

/// Survival-inversion jump time from `rho` with uniform draw `u`. Returns
/// [`JumpTime::NoJumpBefore`] if survival stays above `u` up to `t_cap`.
pub fn sample_jump_time(
    model: &WalkModel,
    rho: &ComplexMatrix,
    u: f64,
    t_cap: f64,
) -> Result<JumpTime, TrajectoryError> {
    check_density(model, rho)?;
    NoJumpFlow::new(model)?.sample_jump_time(rho, u, t_cap)
}

/// Channel `r` (0-based) with probability proportional to `Tr(D_r rho D_r^*)`.
pub fn select_channel(model: &WalkModel, rho_pre: &ComplexMatrix, v: f64) -> Result<usize, TrajectoryError> {
    if !(v > 0.0 && v < 1.0) {
        return Err(TrajectoryError::InvalidDraw(v));
    }
    let rates: Vec<f64> = model.channel_rates(rho_pre).into_iter().map(|r| r.max(0.0)).collect();
    let total: f64 = rates.iter().sum();
    if total <= RATE_FLOOR {
        return Err(TrajectoryError::Absorbing(total));
    }
    let target = v * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (r, rate) in rates.iter().enumerate() {
        if *rate <= 0.0 {
            continue;
        }
        acc += rate;
        last = r;
        if target < acc {
            return Ok(r);
        }
    }
    Ok(last)
}

/// `D_r rho D_r^* / Tr(D_r rho D_r^*)`.
pub fn apply_jump(model: &WalkModel, rho_pre: &ComplexMatrix, r: usize) -> Result<ComplexMatrix, TrajectoryError> {
    let op = model.jump_ops().get(r).ok_or_else(|| TrajectoryError::InvalidState(format!("no channel {r}")))?;
    let post = rho_pre.conjugated_by(op);
    let weight = post.trace().re;
    if weight <= RATE_FLOOR {
        return Err(TrajectoryError::VanishingChannel { channel: r, weight });
    }
    Ok(post.scale_real(1.0 / weight).hermitian_part())
}

pub(crate) fn check_density(model: &WalkModel, rho: &ComplexMatrix) -> Result<(), TrajectoryError> {
    let n = model.n();
    if rho.rows() != n || rho.cols() != n {
        return Err(TrajectoryError::InvalidState(format!("state is {}x{}, expected {n}x{n}", rho.rows(), rho.cols())));
    }
    if !rho.is_finite() || !rho.is_hermitian(STATE_TOL) || !rho.is_psd(STATE_TOL) {
        return Err(TrajectoryError::InvalidState("state is not Hermitian positive semidefinite".into()));
    }
    let tr = rho.trace().re;
    if (tr - 1.0).abs() > STATE_TOL {
        return Err(TrajectoryError::InvalidState(format!("state has trace {tr}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    /// 0-based channel index; `r < d` is `+e_{r}`, otherwise `-e_{r-d}`.
    pub channel: usize,
    pub post_position: Site,
    pub post_state: ComplexMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryPath {
    pub initial: (ComplexMatrix, Site),
    pub events: Vec<JumpEvent>,
    pub final_time: f64,
    pub final_state: (ComplexMatrix, Site),
    /// `(1/T) int_0^T rho_s ds`; `None` when not tracked or `T = 0`.
    pub occupation_average: Option<ComplexMatrix>,
    /// The path reached a state with no outgoing rate and idled to the horizon.
    pub absorbed: bool,
}

impl TrajectoryPath {
    /// Position at time `t` (right-continuous).
    pub fn position_at(&self, t: f64) -> Site {
        let k = self.events.partition_point(|e| e.time <= t);
        if k == 0 {
            self.initial.1.clone()
        } else {
            self.events[k - 1].post_position.clone()
        }
    }

    /// Jump counts per channel.
    pub fn channel_counts(&self, channels: usize) -> Vec<u64> {
        let mut counts = vec![0; channels];
        for e in &self.events {
            counts[e.channel] += 1;
        }
        counts
    }
}

/// Callbacks from [`simulate`].
pub(crate) trait PathObserver {
    fn jump(&mut self, _time: f64, _channel: usize, _position: &Site, _state: &ComplexMatrix) {}
}

pub(crate) struct PathSummary {
    pub final_state: ComplexMatrix,
    pub final_position: Site,
    pub occupation: Option<ComplexMatrix>,
    pub absorbed: bool,
}

/// Runs one path to `t_max`, reporting jumps to `observer`.
pub(crate) fn simulate<R: Rng>(
    model: &WalkModel,
    flow: &NoJumpFlow,
    rho0: &ComplexMatrix,
    x0: &Site,
    t_max: f64,
    track_occupation: bool,
    rng: &mut R,
    observer: &mut impl PathObserver,
) -> Result<PathSummary, TrajectoryError> {
    let n = model.n();
    let mut rho = rho0.clone();
    let mut x = x0.clone();
    let mut t = 0.0;
    let mut occupation = track_occupation.then(|| ComplexMatrix::zeros(n, n));
    let mut absorbed = false;
    while t < t_max {
        let u: f64 = rng.sample(Open01);
        match flow.sample_jump_time(&rho, u, t_max - t)? {
            JumpTime::NoJumpBefore { rho_at_cap } => {
                if let Some(acc) = occupation.as_mut() {
                    *acc += &flow.occupation(&rho, t_max - t)?;
                }
                let rates: f64 = model.channel_rates(&rho_at_cap).iter().sum();
                if rates <= RATE_FLOOR {
                    absorbed = true;
                    log::warn!("path idled in an absorbing state from t = {t}");
                }
                rho = rho_at_cap;
                t = t_max;
            }
            JumpTime::Jump { tau, rho_pre } => {
                if let Some(acc) = occupation.as_mut() {
                    *acc += &flow.occupation(&rho, tau)?;
                }
                let v: f64 = rng.sample(Open01);
                let r = match select_channel(model, &rho_pre, v) {
                    Ok(r) => r,
                    Err(TrajectoryError::Absorbing(rate)) => {
                        log::warn!("absorbing state (rate {rate:.3e}) at t = {}; idling to horizon", t + tau);
                        absorbed = true;
                        if let Some(acc) = occupation.as_mut() {
                            acc.axpy((t_max - t - tau).into(), &rho_pre);
                        }
                        rho = rho_pre;
                        t = t_max;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                rho = apply_jump(model, &rho_pre, r)?;
                t += tau;
                let e = model.displacement(r);
                for (a, b) in x.iter_mut().zip(&e) {
                    *a += b;
                }
                observer.jump(t, r, &x, &rho);
            }
        }
    }
    let occupation = occupation.filter(|_| t_max > 0.0).map(|acc| acc.scale_real(1.0 / t_max).hermitian_part());
    Ok(PathSummary { final_state: rho, final_position: x, occupation, absorbed })
}

struct Recorder(Vec<JumpEvent>);

impl PathObserver for Recorder {
    fn jump(&mut self, time: f64, channel: usize, position: &Site, state: &ComplexMatrix) {
        self.0.push(JumpEvent { time, channel, post_position: position.clone(), post_state: state.clone() });
    }
}

/// One trajectory from `(rho0, x0)` on `[0, t_max]`, drawn from stream 0 of
/// `seed` (the same stream as path 0 of an ensemble with that root seed).
pub fn sample_path(
    model: &WalkModel,
    rho0: &ComplexMatrix,
    x0: &Site,
    t_max: f64,
    seed: u64,
) -> Result<TrajectoryPath, TrajectoryError> {
    check_density(model, rho0)?;
    if x0.len() != model.d() {
        return Err(TrajectoryError::InvalidState(format!("start site {x0:?} is not in Z^{}", model.d())));
    }
    if !(t_max.is_finite() && t_max >= 0.0) {
        return Err(TrajectoryError::InvalidTime(format!("t_max = {t_max} must be finite and >= 0")));
    }
    let flow = NoJumpFlow::new(model)?;
    let mut rng = path_rng(seed, 0);
    let mut rec = Recorder(Vec::new());
    let summary = simulate(model, &flow, rho0, x0, t_max, true, &mut rng, &mut rec)?;
    Ok(TrajectoryPath {
        initial: (rho0.clone(), x0.clone()),
        events: rec.0,
        final_time: t_max,
        final_state: (summary.final_state, summary.final_position),
        occupation_average: summary.occupation,
        absorbed: summary.absorbed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    fn ex2_stationary() -> ComplexMatrix {
        ComplexMatrix::diag_real(&[0.4, 0.6])
    }

    #[test]
    fn classical_holding_time_is_exponential() {
        let model = catalog::classical_walk(1.5, 0.5).unwrap();
        let rho = ComplexMatrix::identity(1);
        for u in [0.9, 0.5, 0.01] {
            match sample_jump_time(&model, &rho, u, 100.0).unwrap() {
                JumpTime::Jump { tau, .. } => assert!((tau + u.ln() / 2.0).abs() < 1e-11, "{tau}"),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn unit_total_rate_ignores_state() {
        let model = catalog::example(1).unwrap();
        let rho = ComplexMatrix::from_real(2, 2, &[0.7, 0.2, 0.2, 0.3]).unwrap();
        match sample_jump_time(&model, &rho, 0.3, 50.0).unwrap() {
            JumpTime::Jump { tau, .. } => assert!((tau + 0.3f64.ln()).abs() < 1e-11),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn jump_time_near_one_is_immediate() {
        let model = catalog::example(2).unwrap();
        let rho = ex2_stationary();
        match sample_jump_time(&model, &rho, 1.0 - 1e-12, 10.0).unwrap() {
            JumpTime::Jump { tau, rho_pre } => {
                assert!(tau < 1e-10);
                assert!((&rho_pre - &rho).frobenius_norm() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn survival_is_hit_exactly() {
        let model = catalog::example(3).unwrap();
        let rho = ComplexMatrix::from_real(2, 2, &[0.5, 0.3, 0.3, 0.5]).unwrap();
        let flow = NoJumpFlow::new(&model).unwrap();
        for u in [0.95, 0.4, 1e-6] {
            let JumpTime::Jump { tau, .. } = flow.sample_jump_time(&rho, u, 1e3).unwrap() else { panic!() };
            // Independent check through the dense exponential.
            let g = matrix_exponential(model.d0(), tau).unwrap();
            let surv = rho.conjugated_by(&g).trace().re;
            assert!((surv - u).abs() < 1e-10 * u.max(1e-3), "u = {u}: {surv}");
        }
    }

    #[test]
    fn eigen_and_dense_flows_agree() {
        let model = catalog::example(1).unwrap();
        let flow = NoJumpFlow::new(&model).unwrap();
        assert!(flow.uses_eigenbasis());
        let dense = NoJumpFlow { propagator: Propagator::Dense { d0: model.d0().clone() }, ..flow.clone() };
        for s in [0.1, 1.0, 7.5] {
            let diff = (&flow.propagator(s).unwrap() - &dense.propagator(s).unwrap()).frobenius_norm();
            assert!(diff < 1e-13);
        }
    }

    #[test]
    fn no_jump_before_cap() {
        let model = catalog::classical_walk(1.0, 0.0).unwrap();
        let out = sample_jump_time(&model, &ComplexMatrix::identity(1), 0.01, 1.0).unwrap();
        assert!(matches!(out, JumpTime::NoJumpBefore { .. }));
    }

    #[test]
    fn bad_draws_are_rejected() {
        let model = catalog::example(2).unwrap();
        let rho = ex2_stationary();
        assert!(sample_jump_time(&model, &rho, 0.0, 1.0).is_err());
        assert!(sample_jump_time(&model, &rho, 1.0, 1.0).is_err());
        assert!(select_channel(&model, &rho, 1.5).is_err());
        assert!(sample_jump_time(&model, &ComplexMatrix::diag_real(&[0.5, 0.6]), 0.5, 1.0).is_err());
    }

    #[test]
    fn channel_probabilities_at_stationarity() {
        let model = catalog::example(2).unwrap();
        let rates = model.channel_rates(&ex2_stationary());
        assert!((rates[0] - 0.25).abs() < 1e-15 && (rates[1] - 0.35).abs() < 1e-15);
        assert_eq!(select_channel(&model, &ex2_stationary(), 5.0 / 12.0 - 1e-9).unwrap(), 0);
        assert_eq!(select_channel(&model, &ex2_stationary(), 5.0 / 12.0 + 1e-9).unwrap(), 1);
        let scalar = catalog::classical_walk(1.0, 3.0).unwrap();
        let one = ComplexMatrix::identity(1);
        assert_eq!(select_channel(&scalar, &one, 0.249).unwrap(), 0);
        assert_eq!(select_channel(&scalar, &one, 0.251).unwrap(), 1);
    }

    #[test]
    fn absorbing_state_is_reported() {
        let model = catalog::diagonal_counterexample().unwrap();
        let zero_rates = WalkModel::new(
            1,
            ComplexMatrix::zeros(2, 2),
            vec![ComplexMatrix::diag_real(&[0.0, 1.0]), ComplexMatrix::diag_real(&[0.0, 0.5])],
        )
        .unwrap();
        let dark = ComplexMatrix::diag_real(&[1.0, 0.0]);
        assert!(matches!(select_channel(&zero_rates, &dark, 0.5), Err(TrajectoryError::Absorbing(_))));
        let path = sample_path(&zero_rates, &dark, &vec![0], 5.0, 3).unwrap();
        assert!(path.events.is_empty() && path.absorbed);
        assert!(!sample_path(&model, &dark, &vec![0], 5.0, 3).unwrap().absorbed);
    }

    #[test]
    fn swap_jump_exchanges_populations() {
        let model = catalog::example(2).unwrap();
        let post = apply_jump(&model, &ComplexMatrix::diag_real(&[0.3, 0.7]), 0).unwrap();
        assert!((&post - &ComplexMatrix::diag_real(&[0.7, 0.3])).frobenius_norm() < 1e-15);
        assert_eq!(
            apply_jump(&catalog::classical_walk(2.0, 1.0).unwrap(), &ComplexMatrix::identity(1), 1).unwrap()[(0, 0)].re,
            1.0
        );
        let bad = WalkModel::new(
            1,
            ComplexMatrix::zeros(2, 2),
            vec![ComplexMatrix::diag_real(&[0.0, 1.0]), ComplexMatrix::diag_real(&[1.0, 0.0])],
        )
        .unwrap();
        assert!(apply_jump(&bad, &ComplexMatrix::diag_real(&[1.0, 0.0]), 0).is_err());
    }

    #[test]
    fn path_invariants_hold() {
        let model = catalog::example(3).unwrap();
        let rho0 = ComplexMatrix::diag_real(&[1.0, 0.0]);
        let path = sample_path(&model, &rho0, &vec![2, -1], 40.0, 11).unwrap();
        assert!(!path.events.is_empty());
        let mut prev_t = 0.0;
        let mut prev_x = path.initial.1.clone();
        for e in &path.events {
            assert!(e.time > prev_t && e.time <= path.final_time);
            let step: Site = e.post_position.iter().zip(&prev_x).map(|(a, b)| a - b).collect();
            assert_eq!(step, model.displacement(e.channel));
            assert!(e.post_state.is_hermitian(1e-9) && e.post_state.is_psd(1e-9));
            assert!((e.post_state.trace().re - 1.0).abs() < 1e-9);
            prev_t = e.time;
            prev_x = e.post_position.clone();
        }
        assert_eq!(path.final_state.1, prev_x);
        let occ = path.occupation_average.clone().unwrap();
        assert!((occ.trace().re - 1.0).abs() < 1e-9 && occ.is_psd(1e-9));
        assert_eq!(sample_path(&model, &rho0, &vec![2, -1], 40.0, 11).unwrap(), path);
    }

    #[test]
    fn zero_horizon_is_empty() {
        let model = catalog::example(2).unwrap();
        let path = sample_path(&model, &ex2_stationary(), &vec![5], 0.0, 1).unwrap();
        assert!(path.events.is_empty());
        assert_eq!(path.final_state, (ex2_stationary(), vec![5]));
        assert!(path.occupation_average.is_none());
    }

    #[test]
    fn occupation_of_constant_flow() {
        // With D0 proportional to I the normalized state is frozen between jumps.
        let model = catalog::example(1).unwrap();
        let flow = NoJumpFlow::new(&model).unwrap();
        let rho = ComplexMatrix::from_real(2, 2, &[0.6, 0.1, 0.1, 0.4]).unwrap();
        let occ = flow.occupation(&rho, 2.5).unwrap();
        assert!((&occ - &rho.scale_real(2.5)).frobenius_norm() < 1e-13);
    }
}
