//! Weighted composite features: per-pixel weighted spatial means over a
//! square window, the spectral/spatial combination of hidden matrices, and
//! the composite spectral-spatial kernel.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::data_model::HsiCube;
use crate::error::{Error, Result};
use crate::kernels::{composite_gram, gaussian_gram, GramMatrix};

/// How spectral and spatial hidden matrices are blended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineRule {
    /// H = mu*Hw + (1-mu)*Hs
    Linear,
    /// H = sqrt(mu)*Hw + sqrt(1-mu)*Hs
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WcfConfig {
    /// Odd window width.
    pub window: usize,
    /// Distance decay in the neighbor weights exp(-z ||xc - xk||^2).
    pub z: f64,
    /// Spectral/spatial balance.
    pub mu: f64,
    pub combine_rule: CombineRule,
}

impl Default for WcfConfig {
    fn default() -> Self {
        Self {
            window: 13,
            z: 0.2,
            mu: 0.1,
            combine_rule: CombineRule::Linear,
        }
    }
}

impl WcfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window.is_multiple_of(2) {
            return Err(Error::invalid(format!("window must be odd, got {}", self.window)));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::invalid(format!("mu must lie in [0,1], got {}", self.mu)));
        }
        if self.z <= 0.0 {
            return Err(Error::invalid(format!("z must be > 0, got {}", self.z)));
        }
        Ok(())
    }
}

fn spatial_mean_one(cube: &HsiCube, row: usize, col: usize, cfg: &WcfConfig, out: &mut [f64]) {
    let half = (cfg.window - 1) / 2;
    let d = cube.bands;
    let center: Vec<f64> = cube.spectrum(row, col);
    let mut acc = vec![0.0; d];
    let mut wsum = 0.0;
    let mut neighbor = vec![0.0; d];
    for dr in 0..cfg.window {
        // Out-of-image cells clamp to the border (edge replication).
        let r = (row + dr).saturating_sub(half).min(cube.rows - 1);
        for dc in 0..cfg.window {
            let c = (col + dc).saturating_sub(half).min(cube.cols - 1);
            cube.spectrum_into(r, c, &mut neighbor);
            let mut dist2 = 0.0;
            for b in 0..d {
                let diff = center[b] - neighbor[b];
                dist2 += diff * diff;
            }
            let v = (-cfg.z * dist2).exp();
            wsum += v;
            for b in 0..d {
                acc[b] += v * neighbor[b];
            }
        }
    }
    for b in 0..d {
        out[b] = acc[b] / wsum;
    }
}

/// Weighted spatial mean features for each listed pixel, d x n, columns
/// aligned with `coords`.
pub fn spatial_mean(cube: &HsiCube, coords: &[(usize, usize)], cfg: &WcfConfig) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    for &(r, c) in coords {
        if r >= cube.rows || c >= cube.cols {
            return Err(Error::invalid(format!("coordinate ({r},{c}) outside {}x{} grid", cube.rows, cube.cols)));
        }
    }
    let d = cube.bands;
    let mut out = DMatrix::zeros(d, coords.len());
    fill_spatial(cube, coords, cfg, out.as_mut_slice(), d);
    Ok(out)
}

/// Sequential reference path, used by the benches.
pub fn spatial_mean_seq(cube: &HsiCube, coords: &[(usize, usize)], cfg: &WcfConfig) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    let d = cube.bands;
    let mut out = DMatrix::zeros(d, coords.len());
    fill_spatial_seq(cube, coords, cfg, out.as_mut_slice(), d);
    Ok(out)
}

fn fill_spatial_seq(cube: &HsiCube, coords: &[(usize, usize)], cfg: &WcfConfig, data: &mut [f64], d: usize) {
    for (col, &(r, c)) in data.chunks_mut(d).zip(coords) {
        spatial_mean_one(cube, r, c, cfg, col);
    }
}

#[cfg(feature = "parallel")]
fn fill_spatial(cube: &HsiCube, coords: &[(usize, usize)], cfg: &WcfConfig, data: &mut [f64], d: usize) {
    data.par_chunks_mut(d)
        .zip(coords.par_iter())
        .for_each(|(col, &(r, c))| spatial_mean_one(cube, r, c, cfg, col));
}

#[cfg(not(feature = "parallel"))]
fn fill_spatial(cube: &HsiCube, coords: &[(usize, usize)], cfg: &WcfConfig, data: &mut [f64], d: usize) {
    fill_spatial_seq(cube, coords, cfg, data, d);
}

/// Blends spectral and spatial hidden matrices per the configured rule.
pub fn combine_hidden(hw: &DMatrix<f64>, hs: &DMatrix<f64>, cfg: &WcfConfig) -> Result<DMatrix<f64>> {
    if hw.shape() != hs.shape() {
        return Err(Error::invalid(format!(
            "hidden matrix shapes differ: {:?} vs {:?}",
            hw.shape(),
            hs.shape()
        )));
    }
    let (a, b) = match cfg.combine_rule {
        CombineRule::Linear => (cfg.mu, 1.0 - cfg.mu),
        CombineRule::Sqrt => (cfg.mu.sqrt(), (1.0 - cfg.mu).sqrt()),
    };
    Ok(hw * a + hs * b)
}

/// Composite spectral-spatial Gaussian kernel
/// mu * K(xw_a, xw_b; sigma_w) + (1-mu) * K(xs_a, xs_b; sigma_s).
#[allow(clippy::too_many_arguments)]
pub fn wcf_kernel(
    xw_a: &DMatrix<f64>,
    xw_b: &DMatrix<f64>,
    sigma_w: f64,
    xs_a: &DMatrix<f64>,
    xs_b: &DMatrix<f64>,
    sigma_s: f64,
    mu: f64,
) -> Result<GramMatrix> {
    let kw = gaussian_gram(xw_a, xw_b, sigma_w)?;
    let ks = gaussian_gram(xs_a, xs_b, sigma_s)?;
    composite_gram(&kw, &ks, mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::HsiCube;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(window: usize) -> WcfConfig {
        WcfConfig { window, ..WcfConfig::default() }
    }

    fn random_cube(rows: usize, cols: usize, bands: usize, seed: u64) -> HsiCube {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols * bands).map(|_| rng.gen_range(0.0..1.0)).collect();
        HsiCube::new(rows, cols, bands, data).unwrap()
    }

    #[test]
    fn constant_image_is_fixed_point() {
        let cube = HsiCube::new(4, 4, 3, vec![0.6; 48]).unwrap();
        let coords: Vec<(usize, usize)> = (0..4).flat_map(|r| (0..4).map(move |c| (r, c))).collect();
        let xs = spatial_mean(&cube, &coords, &cfg(3)).unwrap();
        for &v in xs.iter() {
            assert_relative_eq!(v, 0.6, epsilon = 1e-12);
        }
    }

    #[test]
    fn window_one_is_identity() {
        let cube = random_cube(3, 3, 4, 1);
        let coords = vec![(0, 0), (1, 2), (2, 1)];
        let xs = spatial_mean(&cube, &coords, &cfg(1)).unwrap();
        for (i, &(r, c)) in coords.iter().enumerate() {
            for b in 0..4 {
                assert_relative_eq!(xs[(b, i)], cube.value(r, c, b), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn three_pixel_line_matches_scalar_oracle() {
        // 3x1 image, d=1, spectra a,b,c; center pixel b with window 3.
        let (a, b, c) = (0.2, 0.7, 0.4);
        let cube = HsiCube::new(3, 1, 1, vec![a, b, c]).unwrap();
        let cfg = WcfConfig { window: 3, z: 0.2, ..WcfConfig::default() };
        let xs = spatial_mean(&cube, &[(1, 0)], &cfg).unwrap();
        let va = (-0.2 * (b - a) * (b - a)).exp();
        let vc = (-0.2 * (b - c) * (b - c)).exp();
        // Columns clamp left/right so each in-image neighbor appears 3 times,
        // which cancels in the ratio.
        let expect = (a * va + b + c * vc) / (va + 1.0 + vc);
        assert_relative_eq!(xs[(0, 0)], expect, epsilon = 1e-12);
    }

    #[test]
    fn output_stays_in_window_hull() {
        let cube = random_cube(6, 5, 3, 2);
        let coords: Vec<(usize, usize)> = (0..6).flat_map(|r| (0..5).map(move |c| (r, c))).collect();
        let xs = spatial_mean(&cube, &coords, &cfg(3)).unwrap();
        for (i, &(r, c)) in coords.iter().enumerate() {
            for b in 0..3 {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let rr = (r as i64 + dr).clamp(0, 5) as usize;
                        let cc = (c as i64 + dc).clamp(0, 4) as usize;
                        lo = lo.min(cube.value(rr, cc, b));
                        hi = hi.max(cube.value(rr, cc, b));
                    }
                }
                assert!(xs[(b, i)] >= lo - 1e-12 && xs[(b, i)] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn corner_pixel_is_convex_combination() {
        let cube = random_cube(4, 4, 2, 3);
        let xs = spatial_mean(&cube, &[(0, 0)], &cfg(5)).unwrap();
        for b in 0..2 {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for r in 0..3usize {
                for c in 0..3usize {
                    lo = lo.min(cube.value(r, c, b));
                    hi = hi.max(cube.value(r, c, b));
                }
            }
            assert!(xs[(b, 0)] >= lo - 1e-12 && xs[(b, 0)] <= hi + 1e-12);
        }
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let cube = random_cube(8, 7, 5, 4);
        let coords: Vec<(usize, usize)> = (0..8).flat_map(|r| (0..7).map(move |c| (r, c))).collect();
        let a = spatial_mean(&cube, &coords, &cfg(5)).unwrap();
        let b = spatial_mean_seq(&cube, &coords, &cfg(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn combine_endpoints_and_plugins() {
        let hw = DMatrix::from_element(3, 4, 1.0);
        let hs = DMatrix::zeros(3, 4);
        let mut c = WcfConfig { mu: 1.0, combine_rule: CombineRule::Linear, ..WcfConfig::default() };
        assert_eq!(combine_hidden(&hw, &hs, &c).unwrap(), hw);
        c.combine_rule = CombineRule::Sqrt;
        assert_eq!(combine_hidden(&hw, &hs, &c).unwrap(), hw);

        c = WcfConfig { mu: 0.1, combine_rule: CombineRule::Linear, ..WcfConfig::default() };
        for &v in combine_hidden(&hw, &hs, &c).unwrap().iter() {
            assert_relative_eq!(v, 0.1, epsilon = 1e-14);
        }
        c.combine_rule = CombineRule::Sqrt;
        for &v in combine_hidden(&hw, &hs, &c).unwrap().iter() {
            assert_relative_eq!(v, 0.1f64.sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn combine_rejects_shape_mismatch() {
        let hw = DMatrix::zeros(2, 3);
        let hs = DMatrix::zeros(2, 4);
        assert!(combine_hidden(&hw, &hs, &WcfConfig::default()).is_err());
    }

    #[test]
    fn wcf_kernel_identical_features_collapse() {
        let x = random_cube(1, 6, 3, 5);
        let m = DMatrix::from_column_slice(3, 6, x.data());
        let k = wcf_kernel(&m, &m, 0.8, &m, &m, 0.8, 0.3).unwrap();
        let single = gaussian_gram(&m, &m, 0.8).unwrap();
        assert_relative_eq!(k.k, single.k, epsilon = 1e-12);
    }

    #[test]
    fn wcf_kernel_is_entrywise_mix_and_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let xw = DMatrix::from_fn(4, 20, |_, _| rng.gen_range(0.0..1.0));
        let xs = DMatrix::from_fn(4, 20, |_, _| rng.gen_range(0.0..1.0));
        let kw = gaussian_gram(&xw, &xw, 0.7).unwrap();
        let ks = gaussian_gram(&xs, &xs, 1.2).unwrap();
        let k = wcf_kernel(&xw, &xw, 0.7, &xs, &xs, 1.2, 0.1).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                assert_relative_eq!(k.k[(i, j)], 0.1 * kw.k[(i, j)] + 0.9 * ks.k[(i, j)], epsilon = 1e-14);
            }
        }
        let eig = k.k.symmetric_eigen();
        assert!(eig.eigenvalues.min() >= -1e-8);
    }
}
