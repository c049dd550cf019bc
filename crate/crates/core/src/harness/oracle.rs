//! Best rank-N approximation error of a residual matrix.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Squared singular values in descending order.
pub fn squared_singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::invalid("svd_rank_oracle", "matrix is empty"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("svd_rank_oracle"));
    }
    let svd = m.clone().svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().map(|v| v * v).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// `Σ_{i > N} σ_i²`: the squared Frobenius error of the best rank-`N`
/// approximation (Eckart–Young).
pub fn svd_rank_oracle(m: &DMatrix<f64>, rank: usize) -> Result<f64> {
    Ok(tail_sums(&squared_singular_values(m)?)[rank.min(m.nrows().min(m.ncols()))])
}

/// `out[k] = Σ_{i ≥ k} s[i]`, accumulated from the smallest term so the
/// sequence is exactly non-increasing.
pub fn tail_sums(s: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; s.len() + 1];
    for k in (0..s.len()).rev() {
        out[k] = out[k + 1] + s[k];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn rank_one_matrix_is_exact() {
        let u = DMatrix::from_fn(12, 1, |i, _| i as f64 - 3.0);
        let v = DMatrix::from_fn(1, 7, |_, j| 0.5 * j as f64 + 1.0);
        assert!(svd_rank_oracle(&(u * v), 1).unwrap() < 1e-10);
    }

    #[test]
    fn full_rank_gives_zero() {
        let m = random(6, 4, 1);
        assert_eq!(svd_rank_oracle(&m, 4).unwrap(), 0.0);
        assert_eq!(svd_rank_oracle(&m, 9).unwrap(), 0.0);
    }

    #[test]
    fn tail_matches_symmetric_eigen_and_truncation() {
        let m = random(20, 10, 2);
        // independent route: eigenvalues of MᵀM are the squared singular values
        let mut eig: Vec<f64> = (m.transpose() * &m).symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        let want: f64 = eig[3..].iter().sum();
        let got = svd_rank_oracle(&m, 3).unwrap();
        assert!((got - want).abs() < 1e-9 * want.max(1.0));
        // and the explicit truncated reconstruction error
        let svd = m.clone().svd(true, true);
        let mut idx: Vec<usize> = (0..10).collect();
        idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut approx = DMatrix::zeros(20, 10);
        for &k in &idx[..3] {
            approx += u.column(k) * vt.row(k) * svd.singular_values[k];
        }
        assert!(((m - approx).norm_squared() - got).abs() < 1e-9);
    }

    #[test]
    fn non_increasing_in_rank() {
        let m = random(15, 9, 3);
        let errs: Vec<f64> = (0..10).map(|n| svd_rank_oracle(&m, n).unwrap()).collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn empty_is_rejected() {
        assert!(svd_rank_oracle(&DMatrix::zeros(0, 3), 1).is_err());
    }
}
