//! Homogeneous nearest-neighbour walk model on `Z^d`.
//!
//! Channel `r < d` moves the walker by `+e_r`, channel `d + r` by `-e_r`.
//! The no-jump generator is `D0 = -iH - 1/2 sum_r D_r^* D_r`.

use thiserror::Error;

use crate::linalg::{ComplexMatrix, LinalgError, C64, I};

/// Tolerance on Hermiticity of `H` and on the Lindblad identity
/// `D0 + D0^* + sum_r D_r^* D_r = 0`, relative to the size of the dissipator.
pub const MODEL_TOL: f64 = 1e-12;

/// A lattice site in `Z^d`.
pub type Site = Vec<i64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("lattice dimension must be positive")]
    ZeroDimension,
    #[error("expected {expected} jump operators for d = {d}, found {found}")]
    JumpCount { d: usize, expected: usize, found: usize },
    #[error("{what} must be {n}x{n}, found {rows}x{cols}")]
    OperatorShape { what: String, n: usize, rows: usize, cols: usize },
    #[error("{0} has non-finite entries")]
    NonFinite(String),
    #[error("Hamiltonian is not Hermitian: |H - H^*|_F = {residual:.3e}")]
    NonHermitian { residual: f64 },
    #[error("Lindblad identity violated: |D0 + D0^* + sum D_r^* D_r|_F = {residual:.3e}")]
    LindbladIdentity { residual: f64 },
    #[error("{what}: expected length {expected}, found {found}")]
    VectorLength { what: &'static str, expected: usize, found: usize },
    #[error("no built-in example with index {0} (expected 1, 2 or 3)")]
    UnknownExample(usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Clone, Debug)]
pub struct WalkModel {
    d: usize,
    n: usize,
    hamiltonian: ComplexMatrix,
    jump_ops: Vec<ComplexMatrix>,
    jump_adjoints: Vec<ComplexMatrix>,
    /// `D_r^* D_r`, whose trace against `rho` is the rate of channel `r`.
    jump_rates: Vec<ComplexMatrix>,
    d0: ComplexMatrix,
    d0_adjoint: ComplexMatrix,
}

impl WalkModel {
    /// Builds a model from the Hamiltonian and the ordered jump operators
    /// `(+e_1, ..., +e_d, -e_1, ..., -e_d)`.
    pub fn new(d: usize, hamiltonian: ComplexMatrix, jump_ops: Vec<ComplexMatrix>) -> Result<Self, ModelError> {
        let n = Self::check_shapes(d, &hamiltonian, "H", &jump_ops)?;
        let residual = (&hamiltonian - &hamiltonian.adjoint()).frobenius_norm();
        if residual > MODEL_TOL * hamiltonian.max_abs().max(1.0) {
            return Err(ModelError::NonHermitian { residual });
        }
        let jump_rates: Vec<_> = jump_ops.iter().map(|dr| &dr.adjoint() * dr).collect();
        let mut d0 = hamiltonian.scale(-I);
        for k in &jump_rates {
            d0.axpy(C64::new(-0.5, 0.0), k);
        }
        Self::assemble(d, n, hamiltonian, jump_ops, jump_rates, d0)
    }

    /// Builds a model from `D0` given directly. The Hamiltonian is recovered
    /// as `i (D0 - D0^*) / 2`; the Hermitian part of `D0` must balance the
    /// jump operators.
    pub fn from_drift(d: usize, d0: ComplexMatrix, jump_ops: Vec<ComplexMatrix>) -> Result<Self, ModelError> {
        let n = Self::check_shapes(d, &d0, "D0", &jump_ops)?;
        let hamiltonian = (&d0 - &d0.adjoint()).scale(C64::new(0.0, 0.5));
        let jump_rates: Vec<_> = jump_ops.iter().map(|dr| &dr.adjoint() * dr).collect();
        Self::assemble(d, n, hamiltonian, jump_ops, jump_rates, d0)
    }

    fn check_shapes(
        d: usize,
        generator: &ComplexMatrix,
        name: &str,
        jump_ops: &[ComplexMatrix],
    ) -> Result<usize, ModelError> {
        if d == 0 {
            return Err(ModelError::ZeroDimension);
        }
        if jump_ops.len() != 2 * d {
            return Err(ModelError::JumpCount { d, expected: 2 * d, found: jump_ops.len() });
        }
        let n = generator.rows();
        let check = |m: &ComplexMatrix, what: String| {
            if m.rows() != n || m.cols() != n {
                return Err(ModelError::OperatorShape { what, n, rows: m.rows(), cols: m.cols() });
            }
            if !m.is_finite() {
                return Err(ModelError::NonFinite(what));
            }
            Ok(())
        };
        check(generator, name.to_string())?;
        for (r, dr) in jump_ops.iter().enumerate() {
            check(dr, format!("D_{}", r + 1))?;
        }
        Ok(n)
    }

    fn assemble(
        d: usize,
        n: usize,
        hamiltonian: ComplexMatrix,
        jump_ops: Vec<ComplexMatrix>,
        jump_rates: Vec<ComplexMatrix>,
        d0: ComplexMatrix,
    ) -> Result<Self, ModelError> {
        let jump_adjoints = jump_ops.iter().map(ComplexMatrix::adjoint).collect();
        let d0_adjoint = d0.adjoint();
        let model = Self { d, n, hamiltonian, jump_ops, jump_adjoints, jump_rates, d0, d0_adjoint };
        let residual = model.lindblad_residual();
        let scale = model.jump_rates.iter().map(ComplexMatrix::frobenius_norm).sum::<f64>().max(1.0);
        if residual > MODEL_TOL * scale {
            return Err(ModelError::LindbladIdentity { residual });
        }
        Ok(model)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Internal dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn channel_count(&self) -> usize {
        2 * self.d
    }

    pub fn hamiltonian(&self) -> &ComplexMatrix {
        &self.hamiltonian
    }

    pub fn jump_ops(&self) -> &[ComplexMatrix] {
        &self.jump_ops
    }

    pub fn d0(&self) -> &ComplexMatrix {
        &self.d0
    }

    /// `D_r^* D_r` for every channel.
    pub fn jump_rate_ops(&self) -> &[ComplexMatrix] {
        &self.jump_rates
    }

    /// `|D0 + D0^* + sum_r D_r^* D_r|_F`, i.e. `|L^*(I)|_F`.
    pub fn lindblad_residual(&self) -> f64 {
        let mut s = &self.d0 + &self.d0.adjoint();
        for k in &self.jump_rates {
            s += k;
        }
        s.frobenius_norm()
    }

    /// Axis and sign of channel `r` (0-based).
    pub fn direction(&self, r: usize) -> (usize, i64) {
        debug_assert!(r < 2 * self.d);
        if r < self.d {
            (r, 1)
        } else {
            (r - self.d, -1)
        }
    }

    /// The displacement vector `e_r` of channel `r` (0-based).
    pub fn displacement(&self, r: usize) -> Site {
        let (axis, sign) = self.direction(r);
        let mut e = vec![0; self.d];
        e[axis] = sign;
        e
    }

    /// `u . e_r`.
    pub fn direction_dot(&self, r: usize, u: &[f64]) -> f64 {
        let (axis, sign) = self.direction(r);
        sign as f64 * u[axis]
    }

    /// `Tr(D_r rho D_r^*)` for every channel.
    pub fn channel_rates(&self, rho: &ComplexMatrix) -> Vec<f64> {
        self.jump_rates.iter().map(|k| k.trace_product(rho).re).collect()
    }

    /// `sum_r |D_r^* D_r|`, an upper bound on the total jump rate of any state.
    pub fn max_rate(&self) -> f64 {
        self.jump_rates.iter().map(|k| k.hermitian_eigenvalues().last().copied().unwrap_or(0.0).max(0.0)).sum()
    }

    fn check_operand(&self, m: &ComplexMatrix) -> Result<(), ModelError> {
        m.require_shape(self.n, self.n).map_err(ModelError::from)
    }

    pub fn check_u(&self, u: &[f64]) -> Result<(), ModelError> {
        if u.len() != self.d {
            return Err(ModelError::VectorLength { what: "deformation parameter u", expected: self.d, found: u.len() });
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::NonFinite("deformation parameter u".into()));
        }
        Ok(())
    }

    /// `D0 rho + rho D0^*`.
    pub fn drift_apply(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        &(&self.d0 * rho) + &(rho * &self.d0_adjoint)
    }

    /// `L(rho) = D0 rho + rho D0^* + sum_r D_r rho D_r^*`.
    pub fn lindblad_apply(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix, ModelError> {
        self.check_operand(rho)?;
        let mut out = self.drift_apply(rho);
        for (dr, dr_adj) in self.jump_ops.iter().zip(&self.jump_adjoints) {
            out += &(&(dr * rho) * dr_adj);
        }
        Ok(out)
    }

    /// `L^*(A) = D0^* A + A D0 + sum_r D_r^* A D_r`.
    pub fn lindblad_adjoint_apply(&self, a: &ComplexMatrix) -> Result<ComplexMatrix, ModelError> {
        self.check_operand(a)?;
        let mut out = &(&self.d0_adjoint * a) + &(a * &self.d0);
        for (dr, dr_adj) in self.jump_ops.iter().zip(&self.jump_adjoints) {
            out += &(&(dr_adj * a) * dr);
        }
        Ok(out)
    }

    /// `L^(u)(rho) = D0 rho + rho D0^* + sum_r exp(u . e_r) D_r rho D_r^*`.
    pub fn deformed_apply(&self, u: &[f64], rho: &ComplexMatrix) -> Result<ComplexMatrix, ModelError> {
        self.check_u(u)?;
        self.check_operand(rho)?;
        let mut out = self.drift_apply(rho);
        for (r, (dr, dr_adj)) in self.jump_ops.iter().zip(&self.jump_adjoints).enumerate() {
            let w = self.direction_dot(r, u).exp();
            out.axpy(C64::new(w, 0.0), &(&(dr * rho) * dr_adj));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_matrix(n: usize, seed: u64) -> ComplexMatrix {
        // small LCG keeps these tests free of RNG plumbing
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        ComplexMatrix::from_fn(n, n, |_, _| c(next(), next()))
    }

    fn random_model(n: usize, d: usize, seed: u64) -> WalkModel {
        let h = random_matrix(n, seed).hermitian_part();
        let jumps = (0..2 * d).map(|r| random_matrix(n, seed + 10 + r as u64).scale_real(0.5)).collect();
        WalkModel::new(d, h, jumps).unwrap()
    }

    #[test]
    fn example_one_drift_is_minus_half_identity() {
        let m = catalog::example(1).unwrap();
        let expected = ComplexMatrix::identity(2).scale_real(-0.5);
        assert!((m.d0() - &expected).frobenius_norm() < 1e-15);
    }

    #[test]
    fn example_two_drift() {
        let s2 = 2f64.sqrt();
        let jumps = vec![
            ComplexMatrix::from_real(2, 2, &[0.0, 0.5, 0.5, 0.0]).unwrap(),
            ComplexMatrix::from_real(2, 2, &[0.0, 0.5, 1.0 / s2, 0.0]).unwrap(),
        ];
        let m = WalkModel::new(1, ComplexMatrix::zeros(2, 2), jumps).unwrap();
        let expected = ComplexMatrix::diag_real(&[-3.0 / 8.0, -0.25]);
        assert!((m.d0() - &expected).frobenius_norm() < 1e-15);
    }

    #[test]
    fn scalar_model_drift() {
        let (lambda, mu) = (1.3, 0.4);
        let m = catalog::classical_walk(lambda, mu).unwrap();
        assert!((m.d0()[(0, 0)] - c(-(lambda + mu) / 2.0, 0.0)).norm() < 1e-15);
        let l = m.deformed_apply(&[0.7], &ComplexMatrix::identity(1)).unwrap();
        let expected = lambda * (0.7f64.exp() - 1.0) + mu * ((-0.7f64).exp() - 1.0);
        assert!((l[(0, 0)].re - expected).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let id = ComplexMatrix::identity(2);
        assert!(matches!(
            WalkModel::new(1, id.clone(), vec![id.clone()]),
            Err(ModelError::JumpCount { expected: 2, found: 1, .. })
        ));
        assert!(matches!(
            WalkModel::new(1, id.clone(), vec![id.clone(), ComplexMatrix::identity(3)]),
            Err(ModelError::OperatorShape { .. })
        ));
        let non_herm = ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            WalkModel::new(1, non_herm, vec![id.clone(), id.clone()]),
            Err(ModelError::NonHermitian { .. })
        ));
        let bad_d0 = ComplexMatrix::identity(2).scale_real(-0.4);
        assert!(matches!(
            WalkModel::from_drift(1, bad_d0, vec![id.scale_real(0.5f64.sqrt()), id.scale_real(0.5f64.sqrt())]),
            Err(ModelError::LindbladIdentity { .. })
        ));
        assert!(matches!(WalkModel::new(0, id, vec![]), Err(ModelError::ZeroDimension)));
    }

    #[test]
    fn from_drift_recovers_hamiltonian() {
        let m = random_model(3, 1, 7);
        let rebuilt = WalkModel::from_drift(1, m.d0().clone(), m.jump_ops().to_vec()).unwrap();
        assert!((rebuilt.hamiltonian() - m.hamiltonian()).frobenius_norm() < 1e-14);
    }

    #[test]
    fn stationary_states_of_examples() {
        let rho = ComplexMatrix::identity(2).scale_real(0.5);
        let l = catalog::example(1).unwrap().lindblad_apply(&rho).unwrap();
        assert!(l.frobenius_norm() < 1e-15);
        let rho = ComplexMatrix::diag_real(&[0.4, 0.6]);
        let l = catalog::example(2).unwrap().lindblad_apply(&rho).unwrap();
        assert!(l.frobenius_norm() < 1e-15);
    }

    #[test]
    fn generator_identities_on_random_models() {
        for seed in 0..20 {
            let d = 1 + (seed as usize % 2);
            let model = random_model(3, d, seed * 31);
            let identity_image = model.lindblad_adjoint_apply(&ComplexMatrix::identity(3)).unwrap();
            assert!(identity_image.frobenius_norm() < 1e-12);

            let rho = random_matrix(3, seed + 100).hermitian_part();
            let a = random_matrix(3, seed + 200);
            let l_rho = model.lindblad_apply(&rho).unwrap();
            assert!((&l_rho - &l_rho.adjoint()).frobenius_norm() < 1e-12, "hermiticity");
            assert!(l_rho.trace().norm() < 1e-12, "trace preservation");

            let general = random_matrix(3, seed + 300);
            let lhs = a.trace_product(&model.lindblad_apply(&general).unwrap());
            let rhs = model.lindblad_adjoint_apply(&a).unwrap().trace_product(&general);
            assert!((lhs - rhs).norm() < 1e-12, "duality");
            assert!(model.lindblad_apply(&general).unwrap().trace().norm() < 1e-12);

            let zero_u = vec![0.0; d];
            let deformed = model.deformed_apply(&zero_u, &general).unwrap();
            assert_eq!(deformed, model.lindblad_apply(&general).unwrap());

            let u: Vec<f64> = (0..d).map(|k| 0.3 - 0.7 * k as f64).collect();
            let tr = model.deformed_apply(&u, &rho).unwrap().trace();
            let expected: f64 = model
                .channel_rates(&rho)
                .iter()
                .enumerate()
                .map(|(r, rate)| (model.direction_dot(r, &u).exp() - 1.0) * rate)
                .sum();
            assert!((tr.re - expected).abs() < 1e-12 && tr.im.abs() < 1e-12);
        }
    }

    #[test]
    fn channel_directions() {
        let m = catalog::example(3).unwrap();
        assert_eq!(m.displacement(0), vec![1, 0]);
        assert_eq!(m.displacement(1), vec![0, 1]);
        assert_eq!(m.displacement(2), vec![-1, 0]);
        assert_eq!(m.displacement(3), vec![0, -1]);
        assert_eq!(m.direction_dot(3, &[0.2, 0.5]), -0.5);
    }

    #[test]
    fn shape_errors_on_apply() {
        let m = catalog::example(1).unwrap();
        assert!(m.lindblad_apply(&ComplexMatrix::identity(3)).is_err());
        assert!(m.deformed_apply(&[0.0, 1.0], &ComplexMatrix::identity(2)).is_err());
    }
}
