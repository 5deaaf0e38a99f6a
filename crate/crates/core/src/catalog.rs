//! Built-in models: the three reference walks, the classical birth-death
//! walk and a reducible counterexample.

use crate::linalg::ComplexMatrix;
use crate::model::{ModelError, WalkModel};

fn real(rows: &[[f64; 2]; 2]) -> ComplexMatrix {
    ComplexMatrix::from_real(2, 2, &[rows[0][0], rows[0][1], rows[1][0], rows[1][1]]).expect("2x2 literal")
}

/// Reference models indexed 1, 2, 3.
///
/// 1. `d = 1`, `D0 = -I/2`, `D1 = [[1,1],[0,1]]/sqrt3`, `D2 = [[1,0],[-1,1]]/sqrt3`.
/// 2. `d = 1`, `D0 = diag(-3/8, -1/4)`, `D1 = [[0,1/2],[1/2,0]]`, `D2 = [[0,1/2],[1/sqrt2,0]]`.
/// 3. `d = 2`, `D0 = diag(-1/2, -3/8)` with four jump operators.
pub fn example(index: usize) -> Result<WalkModel, ModelError> {
    let s2 = 2f64.sqrt();
    let s3 = 3f64.sqrt();
    let s6 = 6f64.sqrt();
    match index {
        1 => WalkModel::from_drift(
            1,
            real(&[[-0.5, 0.0], [0.0, -0.5]]),
            vec![real(&[[1.0 / s3, 1.0 / s3], [0.0, 1.0 / s3]]), real(&[[1.0 / s3, 0.0], [-1.0 / s3, 1.0 / s3]])],
        ),
        2 => WalkModel::from_drift(
            1,
            real(&[[-3.0 / 8.0, 0.0], [0.0, -0.25]]),
            vec![real(&[[0.0, 0.5], [0.5, 0.0]]), real(&[[0.0, 0.5], [1.0 / s2, 0.0]])],
        ),
        3 => WalkModel::from_drift(
            2,
            real(&[[-0.5, 0.0], [0.0, -3.0 / 8.0]]),
            vec![
                real(&[[1.0 / s6, 1.0 / s6], [0.0, 1.0 / s6]]),
                real(&[[0.0, 1.0 / (2.0 * s2)], [0.0, 1.0 / (2.0 * s2)]]),
                real(&[[1.0 / s6, 0.0], [-1.0 / s6, 1.0 / s6]]),
                real(&[[1.0 / s2, 0.0], [0.0, 0.0]]),
            ],
        ),
        other => Err(ModelError::UnknownExample(other)),
    }
}

/// Classical two-sided birth-death walk on `Z`: `n = 1`, right rate
/// `lambda`, left rate `mu`.
pub fn classical_walk(lambda: f64, mu: f64) -> Result<WalkModel, ModelError> {
    let scalar = |x: f64| ComplexMatrix::from_real(1, 1, &[x]).expect("1x1 literal");
    WalkModel::new(1, scalar(0.0), vec![scalar(lambda.sqrt()), scalar(mu.sqrt())])
}

/// `d = 1`, `n = 2` walk with diagonal jump operators; both coordinate axes
/// are common invariant subspaces.
pub fn diagonal_counterexample() -> Result<WalkModel, ModelError> {
    WalkModel::new(
        1,
        ComplexMatrix::zeros(2, 2),
        vec![ComplexMatrix::diag_real(&[0.8, 0.3]), ComplexMatrix::diag_real(&[0.5, 0.9])],
    )
}

/// A model whose jump operators are multiples of the identity and whose
/// Hamiltonian vanishes, so `L = 0`.
pub fn trivial_generator(n: usize) -> Result<WalkModel, ModelError> {
    let id = ComplexMatrix::identity(n);
    WalkModel::new(1, ComplexMatrix::zeros(n, n), vec![id.scale_real(0.6), id.scale_real(0.8)])
}
