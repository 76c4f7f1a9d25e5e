//! Fixtures shared by the benchmarks.

use rankpen::rng::{normal_matrix, substream};
use rankpen::Matrix;

/// `(Y, X)` with `Y = X C + E`, `C` of rank `r`.
pub fn regression(n: usize, p: usize, q: usize, r: usize, seed: u64) -> (Matrix, Matrix) {
    let mut rng = substream(seed, 0);
    let x = normal_matrix(n, p, &mut rng);
    let c = normal_matrix(p, r, &mut rng) * normal_matrix(r, q, &mut rng) * 0.3;
    let y = &x * c + normal_matrix(n, q, &mut rng);
    (y, x)
}
