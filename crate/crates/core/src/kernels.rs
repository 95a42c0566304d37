//! Gaussian Gram matrices and composite (spectral + spatial) kernels.

use nalgebra::DMatrix;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};

/// A kernel matrix together with the bandwidth that produced it.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub k: DMatrix<f64>,
    pub sigma: f64,
}

/// Gaussian Gram K[i,j] = exp(-||x1_i - x2_j||^2 / (2 sigma^2)).
///
/// Uses the expansion ||a-b||^2 = ||a||^2 + ||b||^2 - 2 a.b, clamping
/// negative round-off distances at zero.
pub fn gaussian_gram(x1: &DMatrix<f64>, x2: &DMatrix<f64>, sigma: f64) -> Result<GramMatrix> {
    gram_impl(x1, x2, sigma, exp_pass)
}

/// Sequential reference path, used by the benches.
pub fn gaussian_gram_seq(x1: &DMatrix<f64>, x2: &DMatrix<f64>, sigma: f64) -> Result<GramMatrix> {
    gram_impl(x1, x2, sigma, exp_pass_seq)
}

fn gram_impl(
    x1: &DMatrix<f64>,
    x2: &DMatrix<f64>,
    sigma: f64,
    pass: fn(&mut [f64], usize, &[f64], &[f64], f64),
) -> Result<GramMatrix> {
    if sigma <= 0.0 {
        return Err(Error::invalid(format!("sigma must be > 0, got {sigma}")));
    }
    if x1.nrows() != x2.nrows() {
        return Err(Error::invalid(format!(
            "feature dimensions differ: {} vs {}",
            x1.nrows(),
            x2.nrows()
        )));
    }
    let sq1: Vec<f64> = x1.column_iter().map(|c| c.norm_squared()).collect();
    let sq2: Vec<f64> = x2.column_iter().map(|c| c.norm_squared()).collect();
    let mut k = x1.transpose() * x2;
    let n1 = x1.ncols();
    pass(k.as_mut_slice(), n1, &sq1, &sq2, 2.0 * sigma * sigma);
    Ok(GramMatrix { k, sigma })
}

fn exp_col(col: &mut [f64], sq1: &[f64], sqj: f64, denom: f64) {
    for (v, &si) in col.iter_mut().zip(sq1) {
        let dist = (si + sqj - 2.0 * *v).max(0.0);
        *v = (-dist / denom).exp();
    }
}

fn exp_pass_seq(data: &mut [f64], n1: usize, sq1: &[f64], sq2: &[f64], denom: f64) {
    for (j, col) in data.chunks_mut(n1).enumerate() {
        exp_col(col, sq1, sq2[j], denom);
    }
}

#[cfg(feature = "parallel")]
fn exp_pass(data: &mut [f64], n1: usize, sq1: &[f64], sq2: &[f64], denom: f64) {
    data.par_chunks_mut(n1)
        .enumerate()
        .for_each(|(j, col)| exp_col(col, sq1, sq2[j], denom));
}

#[cfg(not(feature = "parallel"))]
fn exp_pass(data: &mut [f64], n1: usize, sq1: &[f64], sq2: &[f64], denom: f64) {
    exp_pass_seq(data, n1, sq1, sq2, denom);
}

/// Convex combination mu*Kw + (1-mu)*Ks of two Gram matrices.
pub fn composite_gram(kw: &GramMatrix, ks: &GramMatrix, mu: f64) -> Result<GramMatrix> {
    if kw.k.shape() != ks.k.shape() {
        return Err(Error::invalid(format!(
            "gram shapes differ: {:?} vs {:?}",
            kw.k.shape(),
            ks.k.shape()
        )));
    }
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::invalid(format!("mu must lie in [0,1], got {mu}")));
    }
    Ok(GramMatrix {
        k: &kw.k * mu + &ks.k * (1.0 - mu),
        sigma: kw.sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn unit_diagonal_on_self_gram() {
        let x = random_matrix(4, 6, 1);
        let g = gaussian_gram(&x, &x, 0.7).unwrap();
        for i in 0..6 {
            assert_relative_eq!(g.k[(i, i)], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn known_distance_plugin() {
        // Two points sqrt(2)*sigma apart -> exp(-1).
        let sigma = 0.5;
        let dist = std::f64::consts::SQRT_2 * sigma;
        let x1 = DMatrix::from_column_slice(1, 1, &[0.0]);
        let x2 = DMatrix::from_column_slice(1, 1, &[dist]);
        let g = gaussian_gram(&x1, &x2, sigma).unwrap();
        assert_relative_eq!(g.k[(0, 0)], (-1.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn matches_scalar_double_loop_oracle() {
        let x1 = random_matrix(3, 5, 2);
        let x2 = random_matrix(3, 7, 3);
        let sigma = 0.9;
        let g = gaussian_gram(&x1, &x2, sigma).unwrap();
        for i in 0..5 {
            for j in 0..7 {
                let mut d2 = 0.0;
                for b in 0..3 {
                    let diff = x1[(b, i)] - x2[(b, j)];
                    d2 += diff * diff;
                }
                let expect = (-d2 / (2.0 * sigma * sigma)).exp();
                assert_relative_eq!(g.k[(i, j)], expect, max_relative = 1e-12);
            }
        }
        let seq = gaussian_gram_seq(&x1, &x2, sigma).unwrap();
        assert_eq!(g.k, seq.k);
    }

    #[test]
    fn self_gram_symmetric_and_psd() {
        let x = random_matrix(5, 20, 4);
        let g = gaussian_gram(&x, &x, 1.1).unwrap();
        assert!((&g.k - g.k.transpose()).amax() <= 1e-12);
        let eig = g.k.clone().symmetric_eigen();
        assert!(eig.eigenvalues.min() >= -1e-8);
    }

    #[test]
    fn composite_endpoints_and_mix() {
        let x = random_matrix(3, 8, 5);
        let y = random_matrix(3, 8, 6);
        let kw = gaussian_gram(&x, &x, 0.8).unwrap();
        let ks = gaussian_gram(&y, &y, 1.3).unwrap();
        assert_eq!(composite_gram(&kw, &ks, 1.0).unwrap().k, kw.k);
        assert_eq!(composite_gram(&kw, &ks, 0.0).unwrap().k, ks.k);
        let mix = composite_gram(&kw, &ks, 0.1).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert_relative_eq!(
                    mix.k[(i, j)],
                    0.1 * kw.k[(i, j)] + 0.9 * ks.k[(i, j)],
                    epsilon = 1e-14
                );
            }
        }
    }

    #[test]
    fn composite_of_psd_is_psd() {
        let x = random_matrix(4, 15, 7);
        let y = random_matrix(4, 15, 8);
        let kw = gaussian_gram(&x, &x, 0.6).unwrap();
        let ks = gaussian_gram(&y, &y, 0.9).unwrap();
        let mix = composite_gram(&kw, &ks, 0.35).unwrap();
        let eig = mix.k.symmetric_eigen();
        assert!(eig.eigenvalues.min() >= -1e-8);
    }

    #[test]
    fn composite_rejects_shape_mismatch() {
        let x = random_matrix(2, 3, 9);
        let y = random_matrix(2, 4, 10);
        let a = gaussian_gram(&x, &x, 1.0).unwrap();
        let b = gaussian_gram(&y, &y, 1.0).unwrap();
        assert!(composite_gram(&a, &b, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn larger_sigma_never_decreases_offdiagonals(seed in 0u64..1000, s1 in 0.1f64..2.0, bump in 0.01f64..3.0) {
            let x = random_matrix(3, 6, seed);
            let g1 = gaussian_gram(&x, &x, s1).unwrap();
            let g2 = gaussian_gram(&x, &x, s1 + bump).unwrap();
            for i in 0..6 {
                for j in 0..6 {
                    if i != j {
                        prop_assert!(g2.k[(i, j)] >= g1.k[(i, j)] - 1e-12);
                    }
                }
            }
        }

        #[test]
        fn entries_in_unit_interval(seed in 0u64..1000, sigma in 0.05f64..5.0) {
            let x1 = random_matrix(2, 4, seed);
            let x2 = random_matrix(2, 5, seed.wrapping_add(1));
            let g = gaussian_gram(&x1, &x2, sigma).unwrap();
            for &v in g.k.iter() {
                prop_assert!(v > 0.0 && v <= 1.0);
            }
        }
    }
}
