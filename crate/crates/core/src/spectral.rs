//! Stationary state, irreducibility of the jump algebra, and the leading
//! eigenvalue `l_u` of the deformed generator.

use crate::linalg::{
    self, hermitize_unit_trace, kernel_basis_scaled, ComplexMatrix, Superoperator, C64, DEFAULT_KERNEL_TOL, ONE,
};
use crate::model::{ModelError, WalkModel};

/// Relative rank tolerance used when growing the jump algebra.
pub const ALGEBRA_RANK_TOL: f64 = 1e-10;
/// Finite-difference step for the gradient of `l_u`.
pub const GRADIENT_STEP: f64 = 1e-4;
/// Finite-difference step for the Hessian of `l_u`.
pub const HESSIAN_STEP: f64 = 1e-3;

/// Matrix of `L` (when `u` is `None`) or of `L^(u)` under column stacking.
pub fn lindblad_superoperator(model: &WalkModel, u: Option<&[f64]>) -> Result<Superoperator, ModelError> {
    if let Some(u) = u {
        model.check_u(u)?;
    }
    let parts = GeneratorParts::new(model);
    Ok(Superoperator::from_matrix(model.n(), parts.assemble(model, u))?)
}

/// Matrix of `L^*` or `(L^(u))^*`.
pub fn lindblad_adjoint_superoperator(model: &WalkModel, u: Option<&[f64]>) -> Result<Superoperator, ModelError> {
    Ok(lindblad_superoperator(model, u)?.adjoint())
}

/// Drift and per-channel pieces of the vectorized generator, so that
/// `L^(u) = drift + sum_r exp(u . e_r) channel_r`.
#[derive(Clone, Debug)]
struct GeneratorParts {
    drift: ComplexMatrix,
    channels: Vec<ComplexMatrix>,
}

impl GeneratorParts {
    fn new(model: &WalkModel) -> Self {
        let n = model.n();
        let id = ComplexMatrix::identity(n);
        let mut drift = Superoperator::sandwich(model.d0(), &id);
        drift.add_scaled(ONE, &Superoperator::sandwich(&id, model.d0()));
        let channels = model.jump_ops().iter().map(|dr| Superoperator::sandwich(dr, dr).matrix().clone()).collect();
        Self { drift: drift.matrix().clone(), channels }
    }

    fn assemble(&self, model: &WalkModel, u: Option<&[f64]>) -> ComplexMatrix {
        let mut m = self.drift.clone();
        for (r, ch) in self.channels.iter().enumerate() {
            let w = u.map_or(1.0, |u| model.direction_dot(r, u).exp());
            m.axpy(C64::new(w, 0.0), ch);
        }
        m
    }
}

/// Size of the individual terms of `L`: `2|D0| + sum_r |D_r|^2` (Frobenius).
fn generator_scale(model: &WalkModel) -> f64 {
    2.0 * model.d0().frobenius_norm() + model.jump_ops().iter().map(|d| d.frobenius_norm().powi(2)).sum::<f64>()
}

#[derive(Clone, Debug)]
pub struct StationaryReport {
    /// Unit-trace Hermitian representative of `Ker L`; absent unless the
    /// kernel is one-dimensional.
    pub rho_inv: Option<ComplexMatrix>,
    pub kernel_dim: usize,
    pub h1_holds: bool,
    /// `|L(rho_inv)|_F`, or infinity when `rho_inv` is absent.
    pub residual: f64,
    /// Smallest eigenvalue of `rho_inv` (NaN when absent).
    pub min_eigenvalue: f64,
}

pub fn stationary_state(model: &WalkModel) -> Result<StationaryReport, ModelError> {
    let l = lindblad_superoperator(model, None)?;
    let kernel = kernel_basis_scaled(&l, DEFAULT_KERNEL_TOL, generator_scale(model));
    let kernel_dim = kernel.len();
    let mut report = StationaryReport {
        rho_inv: None,
        kernel_dim,
        h1_holds: kernel_dim == 1,
        residual: f64::INFINITY,
        min_eigenvalue: f64::NAN,
    };
    if kernel_dim != 1 {
        log::warn!("Ker L has dimension {kernel_dim}; no unique stationary state");
        return Ok(report);
    }
    match hermitize_unit_trace(&kernel[0]) {
        Some(rho) => {
            report.residual = model.lindblad_apply(&rho)?.frobenius_norm();
            report.min_eigenvalue = rho.hermitian_eigenvalues()[0];
            report.rho_inv = Some(rho);
        }
        None => log::warn!("kernel vector of L has vanishing trace; cannot normalize"),
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IrreducibilityReport {
    pub irreducible: bool,
    /// Dimension of the unital algebra generated by the jump operators.
    pub algebra_dim: usize,
}

/// Grows an orthonormal basis of the unital algebra generated by
/// `D_1, ..., D_2d`; the action is irreducible iff that algebra is all of
/// `M_n(C)`.
pub fn irreducibility_check(model: &WalkModel) -> IrreducibilityReport {
    let n = model.n();
    let mut basis = OrthonormalSpan::new(ALGEBRA_RANK_TOL);
    let mut frontier = Vec::new();
    for m in std::iter::once(ComplexMatrix::identity(n)).chain(model.jump_ops().iter().cloned()) {
        if basis.try_insert(&m) {
            frontier.push(m);
        }
    }
    while !frontier.is_empty() && basis.len() < n * n {
        let mut next = Vec::new();
        for b in &frontier {
            for dr in model.jump_ops() {
                let word = dr * b;
                if basis.try_insert(&word) {
                    next.push(word);
                }
            }
        }
        frontier = next;
    }
    IrreducibilityReport { irreducible: basis.len() == n * n, algebra_dim: basis.len() }
}

/// Orthonormal (Hilbert-Schmidt) basis built by Gram-Schmidt with one
/// reorthogonalization pass.
struct OrthonormalSpan {
    tol: f64,
    vectors: Vec<ComplexMatrix>,
}

impl OrthonormalSpan {
    fn new(tol: f64) -> Self {
        Self { tol, vectors: Vec::new() }
    }

    fn len(&self) -> usize {
        self.vectors.len()
    }

    fn try_insert(&mut self, m: &ComplexMatrix) -> bool {
        let norm = m.frobenius_norm();
        if norm == 0.0 {
            return false;
        }
        let mut v = m.scale_real(1.0 / norm);
        for _ in 0..2 {
            for b in &self.vectors {
                let proj = b.inner(&v);
                v.axpy(-proj, b);
            }
        }
        let rest = v.frobenius_norm();
        if rest <= self.tol {
            return false;
        }
        self.vectors.push(v.scale_real(1.0 / rest));
        true
    }
}

#[derive(Clone, Debug)]
pub struct LeadingEigen {
    pub l: f64,
    /// Hermitian unit-trace eigenvector when `normalized`.
    pub v: ComplexMatrix,
    pub normalized: bool,
    pub simple: bool,
    /// Smallest eigenvalue of the Hermitian eigenvector (NaN if not normalized).
    pub min_eigenvalue: f64,
}

pub fn leading_eigenvalue(model: &WalkModel, u: &[f64]) -> Result<LeadingEigen, ModelError> {
    DeformationCurve::new(model.clone()).evaluate(u)
}

/// The map `u -> l_u` for one model, with cached vectorized pieces.
#[derive(Clone, Debug)]
pub struct DeformationCurve {
    model: WalkModel,
    parts: GeneratorParts,
    irreducibility: IrreducibilityReport,
    samples: Vec<(Vec<f64>, f64)>,
}

impl DeformationCurve {
    pub fn new(model: WalkModel) -> Self {
        let parts = GeneratorParts::new(&model);
        let irreducibility = irreducibility_check(&model);
        Self { model, parts, irreducibility, samples: Vec::new() }
    }

    pub fn model(&self) -> &WalkModel {
        &self.model
    }

    pub fn irreducibility(&self) -> IrreducibilityReport {
        self.irreducibility
    }

    pub fn superoperator(&self, u: &[f64]) -> Result<Superoperator, ModelError> {
        self.model.check_u(u)?;
        Ok(Superoperator::from_matrix(self.model.n(), self.parts.assemble(&self.model, Some(u)))?)
    }

    /// `l_u` alone (no eigenvector).
    pub fn abscissa(&self, u: &[f64]) -> Result<f64, ModelError> {
        self.model.check_u(u)?;
        let values = linalg::eigenvalues(&self.parts.assemble(&self.model, Some(u)))?;
        Ok(values.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
    }

    pub fn evaluate(&self, u: &[f64]) -> Result<LeadingEigen, ModelError> {
        let lead = linalg::leading_spectral_abscissa(&self.superoperator(u)?)?;
        let min_eigenvalue = if lead.normalized { lead.eigenvector.hermitian_eigenvalues()[0] } else { f64::NAN };
        if self.irreducibility.irreducible && !(min_eigenvalue > 0.0) {
            log::warn!(
                "leading eigenvector at u = {u:?} is not strictly positive (min eigenvalue {min_eigenvalue:.3e})"
            );
        }
        Ok(LeadingEigen {
            l: lead.abscissa,
            v: lead.eigenvector,
            normalized: lead.normalized,
            simple: !lead.degenerate,
            min_eigenvalue,
        })
    }

    /// Evaluates `l_u` on every grid point and caches the samples.
    pub fn sample(&mut self, grid: &[Vec<f64>]) -> Result<&[(Vec<f64>, f64)], ModelError> {
        self.samples = grid.iter().map(|u| Ok((u.clone(), self.abscissa(u)?))).collect::<Result<_, ModelError>>()?;
        Ok(&self.samples)
    }

    pub fn samples(&self) -> &[(Vec<f64>, f64)] {
        &self.samples
    }

    /// Central-difference gradient of `l` at `u`.
    pub fn gradient(&self, u: &[f64], step: f64) -> Result<Vec<f64>, ModelError> {
        let mut g = Vec::with_capacity(u.len());
        for k in 0..u.len() {
            let mut plus = u.to_vec();
            let mut minus = u.to_vec();
            plus[k] += step;
            minus[k] -= step;
            g.push((self.abscissa(&plus)? - self.abscissa(&minus)?) / (2.0 * step));
        }
        Ok(g)
    }

    /// Central-difference Hessian of `l` at `u` (row-major `d x d`).
    pub fn hessian(&self, u: &[f64], step: f64) -> Result<Vec<Vec<f64>>, ModelError> {
        let d = u.len();
        let at = |shifts: &[(usize, f64)]| {
            let mut v = u.to_vec();
            for &(k, s) in shifts {
                v[k] += s;
            }
            self.abscissa(&v)
        };
        let center = at(&[])?;
        let mut h = vec![vec![0.0; d]; d];
        for k in 0..d {
            h[k][k] = (at(&[(k, step)])? - 2.0 * center + at(&[(k, -step)])?) / (step * step);
            for j in 0..k {
                let v = (at(&[(k, step), (j, step)])? - at(&[(k, step), (j, -step)])? - at(&[(k, -step), (j, step)])?
                    + at(&[(k, -step), (j, -step)])?)
                    / (4.0 * step * step);
                h[k][j] = v;
                h[j][k] = v;
            }
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::linalg::vectorize;

    /// Independent route to `l_u` for the second reference model: the
    /// deformed generator leaves span{E11, E22} and span{E12, E21}
    /// invariant, so its spectrum is the union of two 2x2 spectra.
    fn example_two_block_root(u: f64) -> f64 {
        let (e, f) = (u.exp(), (-u).exp());
        let leading_root = |a: f64, b: f64, c: f64, d: f64| {
            let tr = a + d;
            let det = a * d - b * c;
            0.5 * (tr + (tr * tr - 4.0 * det).sqrt())
        };
        let diagonal = leading_root(-6.0 / 8.0, 2.0 * (e + f) / 8.0, 2.0 * (e + 2.0 * f) / 8.0, -4.0 / 8.0);
        let coupling = 2.0 * (e + 2f64.sqrt() * f) / 8.0;
        let off_diagonal = leading_root(-5.0 / 8.0, coupling, coupling, -5.0 / 8.0);
        diagonal.max(off_diagonal)
    }

    #[test]
    fn block_oracle_agrees_with_closed_form() {
        for &u in &[-1.0f64, -0.5, 0.0, 0.5, 1.0] {
            let closed = (-20.0 + (208.0 + 64.0 * (2.0 * u).exp() + 128.0 * (-2.0 * u).exp()).sqrt()) / 32.0;
            assert!((example_two_block_root(u) - closed).abs() < 1e-14);
        }
    }

    #[test]
    fn example_two_matrix_matches_printed_form() {
        let model = catalog::example(2).unwrap();
        for &u in &[-0.7f64, 0.0, 1.3] {
            let s = lindblad_superoperator(&model, Some(&[u])).unwrap();
            let (e, f) = (u.exp(), (-u).exp());
            let s2 = 2f64.sqrt();
            // printed in the basis (E11, E12, E21, E22); ours is (E11, E21, E12, E22)
            let printed = [
                [-6.0, 0.0, 0.0, 2.0 * (e + f)],
                [0.0, -5.0, 2.0 * (e + s2 * f), 0.0],
                [0.0, 2.0 * (e + s2 * f), -5.0, 0.0],
                [2.0 * (e + 2.0 * f), 0.0, 0.0, -4.0],
            ];
            let perm = [0, 2, 1, 3];
            for i in 0..4 {
                for j in 0..4 {
                    let ours = s.matrix()[(perm[i], perm[j])];
                    assert!((ours.re - printed[i][j] / 8.0).abs() < 1e-15 && ours.im.abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn stationary_vector_is_annihilated() {
        let model = catalog::example(2).unwrap();
        let s = lindblad_superoperator(&model, Some(&[0.0])).unwrap();
        let rho = ComplexMatrix::diag_real(&[0.4, 0.6]);
        let v = vectorize(&rho).unwrap();
        let out = (0..4).map(|i| (0..4).map(|k| s.matrix()[(i, k)] * v[k]).sum::<C64>().norm()).fold(0.0, f64::max);
        assert!(out < 1e-15);
    }

    #[test]
    fn scalar_superoperator() {
        let (lambda, mu, u) = (1.5, 0.5, 0.8);
        let model = catalog::classical_walk(lambda, mu).unwrap();
        let s = lindblad_superoperator(&model, Some(&[u])).unwrap();
        let expected = -(lambda + mu) + lambda * u.exp() + mu * (-u).exp();
        assert!((s.matrix()[(0, 0)].re - expected).abs() < 1e-14);
        let lead = leading_eigenvalue(&model, &[u]).unwrap();
        assert!((lead.l - expected).abs() < 1e-14);
        assert!(lead.simple);
    }

    #[test]
    fn stationary_states() {
        let r1 = stationary_state(&catalog::example(1).unwrap()).unwrap();
        assert_eq!(r1.kernel_dim, 1);
        assert!(r1.h1_holds);
        let half = ComplexMatrix::identity(2).scale_real(0.5);
        assert!((r1.rho_inv.as_ref().unwrap() - &half).frobenius_norm() < 1e-12);

        let r2 = stationary_state(&catalog::example(2).unwrap()).unwrap();
        let expected = ComplexMatrix::diag_real(&[0.4, 0.6]);
        assert!((r2.rho_inv.as_ref().unwrap() - &expected).frobenius_norm() < 1e-12);
        assert!(r2.residual < 1e-12);

        let r3 = stationary_state(&catalog::example(3).unwrap()).unwrap();
        let expected = ComplexMatrix::diag_real(&[7.0 / 11.0, 4.0 / 11.0]);
        assert!((r3.rho_inv.as_ref().unwrap() - &expected).frobenius_norm() < 1e-12);
        assert!(r3.min_eigenvalue > 0.0);
    }

    #[test]
    fn zero_generator_has_full_kernel() {
        let r = stationary_state(&catalog::trivial_generator(2).unwrap()).unwrap();
        assert_eq!(r.kernel_dim, 4);
        assert!(!r.h1_holds);
        assert!(r.rho_inv.is_none());
    }

    #[test]
    fn irreducibility_reports() {
        for k in 1..=3 {
            let r = irreducibility_check(&catalog::example(k).unwrap());
            assert!(r.irreducible, "example {k}");
            assert_eq!(r.algebra_dim, 4);
        }
        let r = irreducibility_check(&catalog::diagonal_counterexample().unwrap());
        assert!(!r.irreducible);
        assert!(r.algebra_dim <= 2);
        let r = irreducibility_check(&catalog::classical_walk(1.0, 0.0).unwrap());
        assert!(r.irreducible);
        assert_eq!(r.algebra_dim, 1);
    }

    #[test]
    fn example_two_leading_eigenvalue() {
        let curve = DeformationCurve::new(catalog::example(2).unwrap());
        for &u in &[-1.0, -0.5, 0.5, 1.0] {
            let lead = curve.evaluate(&[u]).unwrap();
            assert!((lead.l - example_two_block_root(u)).abs() < 1e-12, "u = {u}");
            assert!(lead.simple);
            assert!(lead.min_eigenvalue > 0.0);
        }
    }

    #[test]
    fn trace_preservation_pins_zero() {
        for k in 1..=3 {
            let model = catalog::example(k).unwrap();
            let zero = vec![0.0; model.d()];
            let lead = leading_eigenvalue(&model, &zero).unwrap();
            assert!(lead.l.abs() < 1e-10, "example {k}: l_0 = {}", lead.l);
            assert!(lead.simple);
        }
    }

    #[test]
    fn positive_eigenvector_on_grid() {
        let curve = DeformationCurve::new(catalog::example(3).unwrap());
        for i in -4..=4 {
            for j in -4..=4 {
                let u = [i as f64 * 0.5, j as f64 * 0.5];
                let lead = curve.evaluate(&u).unwrap();
                assert!(lead.min_eigenvalue > 1e-10, "u = {u:?}");
            }
        }
    }

    #[test]
    fn convex_on_random_triples() {
        let curve = DeformationCurve::new(catalog::example(1).unwrap());
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
        };
        for _ in 0..50 {
            let (a, b) = (next(), next());
            let mid = curve.abscissa(&[(a + b) / 2.0]).unwrap();
            let avg = 0.5 * (curve.abscissa(&[a]).unwrap() + curve.abscissa(&[b]).unwrap());
            assert!(mid <= avg + 1e-9);
        }
    }
}
