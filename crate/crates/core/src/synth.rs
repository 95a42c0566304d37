//! Synthetic scene generator: rectangular class patches with Gaussian
//! class spectra and additive noise, so the full pipeline can run without
//! external data.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_model::{HsiCube, LabelGrid};
use crate::derive_seed;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    pub classes: usize,
    /// Spread of class mean spectra around 0.5.
    pub separation: f64,
    /// Per-band additive Gaussian noise standard deviation.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            rows: 16,
            cols: 16,
            bands: 8,
            classes: 4,
            separation: 0.25,
            noise: 0.1,
            seed: 0,
        }
    }
}

/// Class mean spectra: 0.5 + separation * uniform[-1,1] per band.
pub fn class_means(cfg: &SynthConfig) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "synth-means", 0));
    (0..cfg.classes)
        .map(|_| {
            (0..cfg.bands)
                .map(|_| 0.5 + cfg.separation * rng.gen_range(-1.0..1.0))
                .collect()
        })
        .collect()
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Generates a fully labeled scene of rectangular class patches.
pub fn generate_scene(cfg: &SynthConfig) -> Result<(HsiCube, LabelGrid)> {
    if cfg.classes == 0 || cfg.rows == 0 || cfg.cols == 0 || cfg.bands == 0 {
        return Err(Error::invalid("scene dimensions and class count must be >= 1"));
    }
    if cfg.noise < 0.0 || cfg.separation <= 0.0 {
        return Err(Error::invalid("separation must be > 0 and noise >= 0"));
    }
    let means = class_means(cfg);

    // Tile the image with a near-square grid of patches, one class each.
    let patch_rows = (cfg.classes as f64).sqrt().floor().max(1.0) as usize;
    let patch_cols = cfg.classes.div_ceil(patch_rows);
    let mut labels = vec![0u16; cfg.rows * cfg.cols];
    for r in 0..cfg.rows {
        for c in 0..cfg.cols {
            let pr = (r * patch_rows / cfg.rows).min(patch_rows - 1);
            let pc = (c * patch_cols / cfg.cols).min(patch_cols - 1);
            let class = (pr * patch_cols + pc) % cfg.classes;
            labels[r * cfg.cols + c] = (class + 1) as u16;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "synth-noise", 0));
    let mut data = vec![0.0; cfg.rows * cfg.cols * cfg.bands];
    // Band-sequential fill matching the cube layout, noise drawn per pixel
    // then per band so the stream order is stable.
    let plane = cfg.rows * cfg.cols;
    for r in 0..cfg.rows {
        for c in 0..cfg.cols {
            let class = usize::from(labels[r * cfg.cols + c]) - 1;
            for b in 0..cfg.bands {
                data[b * plane + r * cfg.cols + c] = means[class][b] + cfg.noise * gaussian(&mut rng);
            }
        }
    }

    let cube = HsiCube::new(cfg.rows, cfg.cols, cfg.bands, data)?;
    let grid = LabelGrid::new(cfg.rows, cfg.cols, labels, cfg.classes)?;
    Ok((cube, grid))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_is_deterministic() {
        let cfg = SynthConfig::default();
        let (a, _) = generate_scene(&cfg).unwrap();
        let (b, _) = generate_scene(&cfg).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn every_class_is_present() {
        let cfg = SynthConfig { classes: 5, rows: 20, cols: 20, ..SynthConfig::default() };
        let (_, grid) = generate_scene(&cfg).unwrap();
        for class in 1..=5u16 {
            assert!(grid.labels().contains(&class), "class {class} missing");
        }
        assert!(grid.labels().iter().all(|&l| (1..=5).contains(&l)));
    }

    #[test]
    fn zero_noise_pixels_equal_class_means() {
        let cfg = SynthConfig { noise: 0.0, ..SynthConfig::default() };
        let (cube, grid) = generate_scene(&cfg).unwrap();
        let means = class_means(&cfg);
        for r in 0..cfg.rows {
            for c in 0..cfg.cols {
                let class = usize::from(grid.label(r, c)) - 1;
                for (b, mean) in means[class].iter().enumerate() {
                    assert_eq!(cube.value(r, c, b), *mean);
                }
            }
        }
    }

    #[test]
    fn patches_are_spatially_contiguous() {
        // Four classes on a 16x16 grid form quadrants.
        let cfg = SynthConfig::default();
        let (_, grid) = generate_scene(&cfg).unwrap();
        assert_eq!(grid.label(0, 0), grid.label(5, 5));
        assert_ne!(grid.label(0, 0), grid.label(0, 15));
        assert_ne!(grid.label(0, 0), grid.label(15, 0));
    }
}
