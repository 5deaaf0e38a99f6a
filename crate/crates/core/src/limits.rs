//! Central limit and large deviation data: drift `m`, Poisson solutions `J_q`,
//! covariance `V`, the rate function `Lambda^*`, and empirical comparisons.

use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::ensemble::{run_ensemble, EnsembleConfig, EnsembleStats, InitSpec};
use crate::linalg::{devectorize, least_squares, vectorize, ComplexMatrix, LinalgError, C64};
use crate::model::{ModelError, WalkModel};
use crate::spectral::{
    lindblad_adjoint_superoperator, stationary_state, DeformationCurve, GRADIENT_STEP, HESSIAN_STEP,
};
use crate::trajectory::TrajectoryError;

/// Largest admissible residual of the Poisson equation.
pub const POISSON_TOL: f64 = 1e-9;
/// Relative singular-value cutoff of the minimum-norm solve.
const SOLVE_RCOND: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LimitError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("no unique stationary state: kernel of L has dimension {kernel_dim}")]
    NoUniqueStationaryState { kernel_dim: usize },
    #[error("Poisson equation for direction {direction} has residual {residual:.3e} > {POISSON_TOL:e}")]
    PoissonResidual { direction: usize, residual: f64 },
    #[error("model is reducible (generated algebra has dimension {algebra_dim})")]
    Reducible { algebra_dim: usize },
    #[error("leading eigenvalue of the deformed generator is not simple at u = {0:?}")]
    Degenerate(Vec<f64>),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// `m = sum_r Tr(D_r rho D_r^*) e_r`, with `e_{d+r} = -e_r`.
pub fn mean_drift(model: &WalkModel, rho_inv: &ComplexMatrix) -> Vec<f64> {
    let mut m = vec![0.0; model.d()];
    for (r, rate) in model.channel_rates(rho_inv).into_iter().enumerate() {
        let (axis, sign) = model.direction(r);
        m[axis] += sign as f64 * rate;
    }
    m
}

/// `-(sum_r (e_r . u) D_r^* D_r - (m . u) I)`.
fn poisson_rhs(model: &WalkModel, m: &[f64], u: &[f64]) -> ComplexMatrix {
    let n = model.n();
    let mu: f64 = m.iter().zip(u).map(|(a, b)| a * b).sum();
    let mut rhs = ComplexMatrix::identity(n).scale_real(mu);
    for (r, k) in model.jump_rate_ops().iter().enumerate() {
        rhs.axpy(C64::new(-model.direction_dot(r, u), 0.0), k);
    }
    rhs
}

/// Trace-zero Hermitian solution of `L^*(J_u) = -(sum_r (e_r . u) D_r^* D_r - (m . u) I)`
/// and its residual.
pub fn poisson_solution(model: &WalkModel, m: &[f64], u: &[f64]) -> Result<(ComplexMatrix, f64), LimitError> {
    model.check_u(u)?;
    if m.len() != model.d() {
        return Err(LimitError::InvalidInput(format!("drift has length {}, expected {}", m.len(), model.d())));
    }
    let n = model.n();
    let adjoint = lindblad_adjoint_superoperator(model, None)?;
    let rhs = poisson_rhs(model, m, u);
    let x = least_squares(adjoint.matrix(), &vectorize(&rhs)?, SOLVE_RCOND)?;
    let raw = devectorize(&x, n)?;
    let shift = raw.trace() / n as f64;
    let mut j = raw;
    j.axpy(-shift, &ComplexMatrix::identity(n));
    let j = j.hermitian_part();
    let residual = (&model.lindblad_adjoint_apply(&j)? - &rhs).frobenius_norm();
    Ok((j, residual))
}

/// `J_1, ..., J_d` for the unit directions, with residuals.
pub fn solve_poisson(model: &WalkModel, m: &[f64]) -> Result<(Vec<ComplexMatrix>, Vec<f64>), LimitError> {
    let d = model.d();
    let mut js = Vec::with_capacity(d);
    let mut residuals = Vec::with_capacity(d);
    for q in 0..d {
        let mut e = vec![0.0; d];
        e[q] = 1.0;
        let (j, residual) = poisson_solution(model, m, &e)?;
        if residual > POISSON_TOL {
            return Err(LimitError::PoissonResidual { direction: q, residual });
        }
        js.push(j);
        residuals.push(residual);
    }
    Ok((js, residuals))
}

/// Asymptotic covariance of `X_t / sqrt(t)`, term by term, symmetrized.
pub fn variance_matrix(model: &WalkModel, rho_inv: &ComplexMatrix, m: &[f64], js: &[ComplexMatrix]) -> Vec<Vec<f64>> {
    let d = model.d();
    let ops = model.jump_ops();
    let jumped: Vec<ComplexMatrix> = ops.iter().map(|op| rho_inv.conjugated_by(op)).collect();
    let rates = model.channel_rates(rho_inv);
    let tr = |a: &ComplexMatrix, b: &ComplexMatrix| a.trace_product(b).re;
    let mut v = vec![vec![0.0; d]; d];
    for r in 0..d {
        for q in 0..d {
            let mut x = -m[q] * tr(rho_inv, &js[r]) - m[r] * tr(rho_inv, &js[q]);
            if r == q {
                x += rates[r] + rates[r + d];
            }
            x += tr(&jumped[q], &js[r]) + tr(&jumped[r], &js[q]);
            x -= tr(&jumped[q + d], &js[r]) + tr(&jumped[r + d], &js[q]);
            v[r][q] = x;
        }
    }
    for r in 0..d {
        for q in 0..r {
            let s = 0.5 * (v[r][q] + v[q][r]);
            v[r][q] = s;
            v[q][r] = s;
        }
    }
    v
}

/// `sigma_u^2 = Tr(rho_inv [-2 (m.u) J_u + sum_r (e_r.u)^2 D_r^* D_r + 2 sum_r (e_r.u) D_r^* J_u D_r])`.
pub fn directional_variance(
    model: &WalkModel,
    rho_inv: &ComplexMatrix,
    m: &[f64],
    j_u: &ComplexMatrix,
    u: &[f64],
) -> f64 {
    let mu: f64 = m.iter().zip(u).map(|(a, b)| a * b).sum();
    let mut inner = j_u.scale_real(-2.0 * mu);
    for (r, (k, op)) in model.jump_rate_ops().iter().zip(model.jump_ops()).enumerate() {
        let w = model.direction_dot(r, u);
        inner.axpy(C64::new(w * w, 0.0), k);
        inner.axpy(C64::new(2.0 * w, 0.0), &(&(&op.adjoint() * j_u) * op));
    }
    rho_inv.trace_product(&inner).re
}

#[derive(Clone, Debug, PartialEq)]
pub struct CltReport {
    pub rho_inv: ComplexMatrix,
    pub m: Vec<f64>,
    pub j: Vec<ComplexMatrix>,
    pub v: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

/// Stationary state, drift, Poisson solutions and covariance. Refuses when
/// the stationary state is not unique.
pub fn clt_report(model: &WalkModel) -> Result<CltReport, LimitError> {
    let stat = stationary_state(model)?;
    let rho_inv = match (stat.h1_holds, stat.rho_inv) {
        (true, Some(rho)) => rho,
        _ => return Err(LimitError::NoUniqueStationaryState { kernel_dim: stat.kernel_dim }),
    };
    let m = mean_drift(model, &rho_inv);
    let (j, residuals) = solve_poisson(model, &m)?;
    let v = variance_matrix(model, &rho_inv, &m, &j);
    Ok(CltReport { rho_inv, m, j, v, residuals })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateOptions {
    /// Iterates beyond this norm mean `x` is outside the effective domain.
    pub divergence_bound: f64,
    pub gradient_tol: f64,
    pub max_iterations: usize,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self { divergence_bound: 50.0, gradient_tol: 1e-8, max_iterations: 200 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateValue {
    /// `+inf` outside the effective domain.
    pub value: f64,
    pub u_star: Option<Vec<f64>>,
    pub converged: bool,
}

impl RateValue {
    fn infinite() -> Self {
        Self { value: f64::INFINITY, u_star: None, converged: true }
    }
}

/// Checks that `Lambda^*` is available for the curve's model.
pub fn require_ldp(curve: &DeformationCurve) -> Result<(), LimitError> {
    let irr = curve.irreducibility();
    if !irr.irreducible {
        return Err(LimitError::Reducible { algebra_dim: irr.algebra_dim });
    }
    let origin = vec![0.0; curve.model().d()];
    if !curve.evaluate(&origin)?.simple {
        return Err(LimitError::Degenerate(origin));
    }
    Ok(())
}

/// `Lambda^*(x) = sup_u (u . x - l_u)`.
pub fn rate_function(curve: &DeformationCurve, x: &[f64], opts: &RateOptions) -> Result<RateValue, LimitError> {
    require_ldp(curve)?;
    curve.model().check_u(x)?;
    if x.len() == 1 {
        rate_1d(curve, x[0], opts)
    } else {
        rate_newton(curve, x, opts)
    }
}

fn objective(curve: &DeformationCurve, x: &[f64], u: &[f64]) -> Result<f64, LimitError> {
    let ux: f64 = u.iter().zip(x).map(|(a, b)| a * b).sum();
    Ok(ux - curve.abscissa(u)?)
}

/// Bisection on the decreasing derivative `g(u) = x - l'(u)`, bracket by doubling.
fn rate_1d(curve: &DeformationCurve, x: f64, opts: &RateOptions) -> Result<RateValue, LimitError> {
    let g = |u: f64| -> Result<f64, LimitError> { Ok(x - curve.gradient(&[u], GRADIENT_STEP)?[0]) };
    let finish = |u: f64, converged: bool| -> Result<RateValue, LimitError> {
        let value = objective(curve, &[x], &[u])?.max(0.0);
        Ok(RateValue { value, u_star: Some(vec![u]), converged })
    };
    let g0 = g(0.0)?;
    if g0.abs() <= opts.gradient_tol {
        return finish(0.0, true);
    }
    let sign = g0.signum();
    let (mut near, mut far) = (0.0, sign);
    loop {
        if far.abs() > opts.divergence_bound {
            return Ok(RateValue::infinite());
        }
        let gf = g(far)?;
        if gf.abs() <= opts.gradient_tol {
            return finish(far, true);
        }
        if gf.signum() != sign {
            break;
        }
        near = far;
        far *= 2.0;
    }
    let (mut a, mut b) = (near, far);
    for _ in 0..opts.max_iterations {
        let mid = 0.5 * (a + b);
        let gm = g(mid)?;
        if gm.abs() <= opts.gradient_tol || (b - a).abs() <= 1e-14 * mid.abs().max(1.0) {
            return finish(mid, true);
        }
        if gm.signum() == sign {
            a = mid;
        } else {
            b = mid;
        }
    }
    finish(0.5 * (a + b), false)
}

/// Damped Newton ascent with finite-difference gradient and Hessian.
fn rate_newton(curve: &DeformationCurve, x: &[f64], opts: &RateOptions) -> Result<RateValue, LimitError> {
    let d = x.len();
    let mut u = vec![0.0; d];
    let mut f = objective(curve, x, &u)?;
    for _ in 0..opts.max_iterations {
        let grad_l = curve.gradient(&u, GRADIENT_STEP)?;
        let g: Vec<f64> = x.iter().zip(&grad_l).map(|(a, b)| a - b).collect();
        if g.iter().map(|v| v * v).sum::<f64>().sqrt() <= opts.gradient_tol {
            return Ok(RateValue { value: f.max(0.0), u_star: Some(u), converged: true });
        }
        let hess = curve.hessian(&u, HESSIAN_STEP)?;
        let step = newton_direction(&hess, &g).unwrap_or_else(|| g.clone());
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(&step).map(|(a, s)| a + alpha * s).collect();
            if trial.iter().map(|v| v * v).sum::<f64>().sqrt() > opts.divergence_bound {
                return Ok(RateValue::infinite());
            }
            let ft = objective(curve, x, &trial)?;
            if ft >= f - 1e-14 * f.abs().max(1.0) || alpha < 1e-10 {
                u = trial;
                f = ft;
                break;
            }
            alpha *= 0.5;
        }
    }
    Ok(RateValue { value: f.max(0.0), u_star: Some(u), converged: false })
}

/// Solves `H s = g` when `H` is positive definite.
fn newton_direction(h: &[Vec<f64>], g: &[f64]) -> Option<Vec<f64>> {
    let d = g.len();
    let m = nalgebra::DMatrix::from_fn(d, d, |i, j| h[i][j]);
    let chol = nalgebra::Cholesky::new(m)?;
    let s = chol.solve(&nalgebra::DVector::from_column_slice(g));
    Some(s.iter().copied().collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateFunctionSamples {
    pub grid: Vec<Vec<f64>>,
    pub values: Vec<RateValue>,
}

pub fn rate_function_grid(
    curve: &DeformationCurve,
    grid: &[Vec<f64>],
    opts: &RateOptions,
) -> Result<RateFunctionSamples, LimitError> {
    let values = grid.iter().map(|x| rate_function(curve, x, opts)).collect::<Result<_, _>>()?;
    Ok(RateFunctionSamples { grid: grid.to_vec(), values })
}

/// `sup_x |F_N(x) - F(x)|` for the empirical distribution of `samples`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Two-sided 1% critical value of the Kolmogorov-Smirnov statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianCheck {
    pub time: f64,
    /// Mean and covariance of `(X_t - X_0 - m t) / sqrt(t)`.
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    /// Per-axis KS distance to `N(0, V_aa)`.
    pub ks: Vec<f64>,
    /// `|C - V|_F / |V|_F`.
    pub covariance_rel_error: f64,
}

/// Compares standardized ensemble positions with `N(0, V)` at every
/// checkpoint with `t > 0`.
pub fn gaussian_comparison(stats: &EnsembleStats, m: &[f64], v: &[Vec<f64>]) -> Result<Vec<GaussianCheck>, LimitError> {
    let d = m.len();
    let mut out = Vec::new();
    for cp in stats.checkpoints.iter().filter(|c| c.time > 0.0) {
        let t = cp.time;
        let z: Vec<Vec<f64>> = cp
            .positions
            .iter()
            .zip(&stats.initial_positions)
            .map(|(x, x0)| (0..d).map(|a| ((x[a] - x0[a]) as f64 - m[a] * t) / t.sqrt()).collect())
            .collect();
        let n = z.len() as f64;
        let mean: Vec<f64> = (0..d).map(|a| z.iter().map(|p| p[a]).sum::<f64>() / n).collect();
        let denom = (n - 1.0).max(1.0);
        let covariance: Vec<Vec<f64>> = (0..d)
            .map(|a| {
                (0..d).map(|b| z.iter().map(|p| (p[a] - mean[a]) * (p[b] - mean[b])).sum::<f64>() / denom).collect()
            })
            .collect();
        let mut ks = Vec::with_capacity(d);
        for a in 0..d {
            let sd = v[a][a].max(0.0).sqrt();
            let column: Vec<f64> = z.iter().map(|p| p[a]).collect();
            let stat = if sd > 0.0 {
                let normal = Normal::new(0.0, sd).map_err(|e| LimitError::InvalidInput(e.to_string()))?;
                ks_statistic(&column, |x| normal.cdf(x))
            } else {
                ks_statistic(&column, |x| if x >= 0.0 { 1.0 } else { 0.0 })
            };
            ks.push(stat);
        }
        let diff: f64 =
            (0..d).flat_map(|a| (0..d).map(move |b| (a, b))).map(|(a, b)| (covariance[a][b] - v[a][b]).powi(2)).sum();
        let norm: f64 = v.iter().flatten().map(|x| x * x).sum();
        let covariance_rel_error = if norm > 0.0 { (diff / norm).sqrt() } else { diff.sqrt() };
        out.push(GaussianCheck { time: t, mean, covariance, ks, covariance_rel_error });
    }
    Ok(out)
}

/// Axis-aligned box `{x : lower <= x <= upper}`; bounds may be infinite.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Region {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// Tensor grid with `points` per axis; an infinite side is cut `span` away
    /// from the finite one (or from 0 when both are infinite).
    pub fn grid(&self, points: usize, span: f64) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| {
                let (a, b) = match (lo.is_finite(), hi.is_finite()) {
                    (true, true) => (lo, hi),
                    (true, false) => (lo, lo + span),
                    (false, true) => (hi - span, hi),
                    (false, false) => (-span, span),
                };
                if points <= 1 || a == b {
                    vec![a]
                } else {
                    (0..points).map(|k| a + (b - a) * k as f64 / (points - 1) as f64).collect()
                }
            })
            .collect();
        let mut out = vec![Vec::new()];
        for axis in &axes {
            out = out.into_iter().flat_map(|p| axis.iter().map(move |v| [p.clone(), vec![*v]].concat())).collect();
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LdpEstimate {
    pub time: f64,
    pub hits: usize,
    pub samples: usize,
    /// `-(1/t) ln(hits / N)`; with zero hits, the bound `ln(N)/t`.
    pub rate: f64,
    /// The estimate is only a lower bound on the decay rate.
    pub lower_bound_only: bool,
}

/// Empirical decay rate of `P((X_t - X_0)/t in region)`.
pub fn empirical_ldp(
    model: &WalkModel,
    init: &InitSpec,
    region: &Region,
    times: &[f64],
    paths: usize,
    root_seed: u64,
    threads: usize,
) -> Result<Vec<LdpEstimate>, LimitError> {
    if region.lower.len() != model.d() || region.upper.len() != model.d() {
        return Err(LimitError::InvalidInput("region dimension differs from d".into()));
    }
    if times.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(LimitError::InvalidInput("times must be positive".into()));
    }
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let cfg = EnsembleConfig { t_max, checkpoints: times.to_vec(), paths, root_seed, threads, track_occupation: false };
    let stats = run_ensemble(model, init, &cfg)?;
    Ok(ldp_from_stats(&stats, region))
}

pub fn ldp_from_stats(stats: &EnsembleStats, region: &Region) -> Vec<LdpEstimate> {
    stats
        .checkpoints
        .iter()
        .map(|cp| {
            let t = cp.time;
            let hits = cp
                .positions
                .iter()
                .zip(&stats.initial_positions)
                .filter(|(x, x0)| {
                    let y: Vec<f64> = x.iter().zip(x0.iter()).map(|(a, b)| (a - b) as f64 / t).collect();
                    region.contains(&y)
                })
                .count();
            let n = cp.positions.len();
            let (rate, lower_bound_only) =
                if hits == 0 { ((n as f64).ln() / t, true) } else { (-(hits as f64 / n as f64).ln() / t, false) };
            LdpEstimate { time: t, hits, samples: n, rate, lower_bound_only }
        })
        .collect()
}

/// Smallest `Lambda^*` over the points of `grid`.
pub fn grid_infimum(curve: &DeformationCurve, grid: &[Vec<f64>], opts: &RateOptions) -> Result<f64, LimitError> {
    let mut best = f64::INFINITY;
    for x in grid {
        best = best.min(rate_function(curve, x, opts)?.value);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn drift_of_examples() {
        let expected = [vec![0.0], vec![-0.1], vec![-1.0 / 22.0, -5.0 / 22.0]];
        for (k, m) in expected.iter().enumerate() {
            let report = clt_report(&catalog::example(k + 1).unwrap()).unwrap();
            for (a, b) in report.m.iter().zip(m) {
                assert!(close(*a, *b, 1e-12), "example {}: {a} vs {b}", k + 1);
            }
            assert!(report.residuals.iter().all(|r| *r <= POISSON_TOL));
            for j in &report.j {
                assert!(j.trace().norm() < 1e-12 && j.is_hermitian(1e-12));
            }
        }
    }

    #[test]
    fn reducible_zero_generator_is_refused() {
        let err = clt_report(&catalog::trivial_generator(2).unwrap()).unwrap_err();
        assert_eq!(err, LimitError::NoUniqueStationaryState { kernel_dim: 4 });
        let curve = DeformationCurve::new(catalog::diagonal_counterexample().unwrap());
        assert!(matches!(rate_function(&curve, &[0.0], &RateOptions::default()), Err(LimitError::Reducible { .. })));
    }

    #[test]
    fn poisson_solution_is_linear_in_u() {
        let model = catalog::example(3).unwrap();
        let report = clt_report(&model).unwrap();
        let u = [0.7, -1.3];
        let (j_u, res) = poisson_solution(&model, &report.m, &u).unwrap();
        assert!(res < POISSON_TOL);
        let combo = &report.j[0].scale_real(u[0]) + &report.j[1].scale_real(u[1]);
        assert!((&j_u - &combo).frobenius_norm() < 1e-10);
    }

    #[test]
    fn hessian_of_l_matches_v() {
        for k in 1..=3 {
            let model = catalog::example(k).unwrap();
            let report = clt_report(&model).unwrap();
            let curve = DeformationCurve::new(model);
            let zero = vec![0.0; report.m.len()];
            let hess = curve.hessian(&zero, HESSIAN_STEP).unwrap();
            let grad = curve.gradient(&zero, GRADIENT_STEP).unwrap();
            for a in 0..zero.len() {
                assert!(close(grad[a], report.m[a], 1e-6));
                for b in 0..zero.len() {
                    assert!(close(hess[a][b], report.v[a][b], 1e-4), "example {k}");
                }
            }
        }
    }

    #[test]
    fn scaling_leaves_v_fixed() {
        let model = catalog::example(3).unwrap();
        let c: f64 = 1.7;
        let scaled = WalkModel::from_drift(
            2,
            model.d0().scale_real(c * c),
            model.jump_ops().iter().map(|d| d.scale_real(c)).collect(),
        )
        .unwrap();
        let a = clt_report(&model).unwrap();
        let b = clt_report(&scaled).unwrap();
        for q in 0..2 {
            assert!(close(b.m[q], c * c * a.m[q], 1e-12));
            assert!((&a.j[q] - &b.j[q]).frobenius_norm() < 1e-10);
        }
        // Covariance is per unit time, so it scales like m.
        for r in 0..2 {
            for q in 0..2 {
                assert!(close(b.v[r][q], c * c * a.v[r][q], 1e-10));
            }
        }
    }

    proptest! {
        #[test]
        fn directional_variance_is_quadratic_form(u0 in -2.0f64..2.0, u1 in -2.0f64..2.0) {
            let model = catalog::example(3).unwrap();
            let report = clt_report(&model).unwrap();
            let u = [u0, u1];
            let j_u = &report.j[0].scale_real(u0) + &report.j[1].scale_real(u1);
            let s2 = directional_variance(&model, &report.rho_inv, &report.m, &j_u, &u);
            let quad: f64 = (0..2).flat_map(|r| (0..2).map(move |q| (r, q))).map(|(r, q)| u[r] * u[q] * report.v[r][q]).sum();
            prop_assert!(s2 >= -1e-12);
            prop_assert!((s2 - quad).abs() < 1e-10);
        }
    }

    #[test]
    fn classical_rate_function_closed_form() {
        let (lambda, mu) = (1.0, 2.0);
        let curve = DeformationCurve::new(catalog::classical_walk(lambda, mu).unwrap());
        for x in [0.5, -0.3, 2.0] {
            let e = (x + (x * x + 4.0 * lambda * mu).sqrt()) / (2.0 * lambda);
            let u = e.ln();
            let exact = x * u - lambda * (e - 1.0) - mu * (1.0 / e - 1.0);
            let got = rate_function(&curve, &[x], &RateOptions::default()).unwrap();
            assert!(close(got.value, exact, 1e-8), "x = {x}: {} vs {exact}", got.value);
            assert!(got.converged);
        }
    }

    #[test]
    fn rate_function_edge_cases() {
        let curve = DeformationCurve::new(catalog::classical_walk(1.0, 0.0).unwrap());
        let opts = RateOptions::default();
        assert_eq!(rate_function(&curve, &[-1.0], &opts).unwrap().value, f64::INFINITY);
        let poisson = rate_function(&curve, &[1.5], &opts).unwrap().value;
        assert!(close(poisson, 1.5 * 1.5f64.ln() - 0.5, 1e-8));
        assert!(rate_function(&curve, &[1.0], &opts).unwrap().value.abs() < 1e-8);
        let ex3 = DeformationCurve::new(catalog::example(3).unwrap());
        let m = [-1.0 / 22.0, -5.0 / 22.0];
        let at_mean = rate_function(&ex3, &m, &opts).unwrap();
        assert!(at_mean.value.abs() < 1e-8 && at_mean.converged);
        let off = rate_function(&ex3, &[0.2, 0.1], &opts).unwrap();
        assert!(off.value > 0.0 && off.converged);
    }

    #[test]
    fn ks_null_calibration() {
        let sd = 1.3;
        let normal = Normal::new(0.0, sd).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 10_000;
        let xs: Vec<f64> = (0..n).map(|_| normal.inverse_cdf(rng.sample(rand::distr::Open01))).collect();
        assert!(ks_statistic(&xs, |x| normal.cdf(x)) <= ks_critical_1pct(n));
        let constant = vec![0.0; 100];
        let d = ks_statistic(&constant, |x| normal.cdf(x));
        assert!(close(d, 0.5, 1e-12));
    }

    #[test]
    fn region_grid_and_membership() {
        let r = Region { lower: vec![0.1], upper: vec![f64::INFINITY] };
        let g = r.grid(5, 1.0);
        assert_eq!(g.len(), 5);
        assert!(close(g[4][0], 1.1, 1e-15));
        assert!(r.contains(&[0.1]) && !r.contains(&[0.0]));
        let b = Region { lower: vec![0.0, -1.0], upper: vec![1.0, 1.0] };
        assert_eq!(b.grid(3, 1.0).len(), 9);
    }
}
