//! Hypercube and label data model: raw file IO, scaling, one-hot encoding,
//! per-class splits, and flattening into design matrices.
//!
//! Cube files are raw little-endian `f32` payloads in band-sequential order
//! (all of band 0, then band 1, ...) with a JSON sidecar `<path>.json`
//! declaring `rows`, `cols`, `bands`, `dtype:"f32le"`, `order:"bsq"`.
//! Label files are raw little-endian `i16`, row-major, same sidecar scheme
//! with `bands: 1` and `dtype:"i16le"`.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::derive_seed;

/// A 3-D hyperspectral cube, rows x cols x bands, stored band-sequential.
#[derive(Debug, Clone)]
pub struct HsiCube {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    data: Vec<f64>,
}

impl HsiCube {
    pub fn new(rows: usize, cols: usize, bands: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || bands == 0 {
            return Err(Error::invalid("cube dimensions must be >= 1"));
        }
        if data.len() != rows * cols * bands {
            return Err(Error::invalid(format!(
                "cube payload has {} values, expected {}",
                data.len(),
                rows * cols * bands
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite cube value {v}")));
        }
        Ok(Self { rows, cols, bands, data })
    }

    #[inline]
    pub fn value(&self, row: usize, col: usize, band: usize) -> f64 {
        self.data[band * self.rows * self.cols + row * self.cols + col]
    }

    /// Spectral vector of one pixel, length `bands`.
    pub fn spectrum(&self, row: usize, col: usize) -> Vec<f64> {
        (0..self.bands).map(|b| self.value(row, col, b)).collect()
    }

    pub fn spectrum_into(&self, row: usize, col: usize, out: &mut [f64]) {
        for (b, slot) in out.iter_mut().enumerate() {
            *slot = self.value(row, col, b);
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Per-pixel integer labels aligned to a cube; 0 means unlabeled.
#[derive(Debug, Clone)]
pub struct LabelGrid {
    pub rows: usize,
    pub cols: usize,
    pub num_classes: usize,
    labels: Vec<u16>,
}

impl LabelGrid {
    pub fn new(rows: usize, cols: usize, labels: Vec<u16>, num_classes: usize) -> Result<Self> {
        if labels.len() != rows * cols {
            return Err(Error::invalid(format!(
                "label grid has {} entries, expected {}",
                labels.len(),
                rows * cols
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| usize::from(l) > num_classes) {
            return Err(Error::invalid(format!(
                "label {l} exceeds class count {num_classes}"
            )));
        }
        Ok(Self { rows, cols, num_classes, labels })
    }

    #[inline]
    pub fn label(&self, row: usize, col: usize) -> u16 {
        self.labels[row * self.cols + col]
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }
}

/// Labeled samples flattened to a d x n design matrix, one column per pixel.
#[derive(Debug, Clone)]
pub struct SampleSet {
    /// d x n feature matrix, column per sample.
    pub features: DMatrix<f64>,
    /// Labels in 1..=M.
    pub labels: Vec<usize>,
    /// (row, col) of each sample in the source grid.
    pub coords: Vec<(usize, usize)>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    rows: usize,
    cols: usize,
    bands: usize,
    dtype: String,
    order: String,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let sp = sidecar_path(path);
    let text = fs::read_to_string(&sp)
        .map_err(|e| Error::load("sidecar", format!("{}: {e}", sp.display())))?;
    let sc: Sidecar =
        serde_json::from_str(&text).map_err(|e| Error::load("sidecar", e.to_string()))?;
    Ok(sc)
}

/// Reads a band-sequential f32 cube plus its JSON sidecar.
pub fn load_cube(path: &Path) -> Result<HsiCube> {
    let sc = read_sidecar(path)?;
    if sc.dtype != "f32le" {
        return Err(Error::load("dtype", format!("expected f32le, got {}", sc.dtype)));
    }
    if sc.order != "bsq" {
        return Err(Error::load("order", format!("expected bsq, got {}", sc.order)));
    }
    let bytes = fs::read(path)?;
    let expected = sc.rows * sc.cols * sc.bands * 4;
    if bytes.len() != expected {
        return Err(Error::load(
            "payload",
            format!("{} bytes on disk, header implies {expected}", bytes.len()),
        ));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::load("payload", format!("non-finite value at index {pos}")));
    }
    HsiCube::new(sc.rows, sc.cols, sc.bands, data)
}

/// Writes the cube and its sidecar; inverse of [`load_cube`] up to f32 precision.
pub fn write_cube(cube: &HsiCube, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(cube.data.len() * 4);
    for v in &cube.data {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(path, bytes)?;
    let sc = Sidecar {
        rows: cube.rows,
        cols: cube.cols,
        bands: cube.bands,
        dtype: "f32le".to_string(),
        order: "bsq".to_string(),
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&sc)?)?;
    Ok(())
}

/// Reads a row-major i16 label grid plus its JSON sidecar.
pub fn load_labels(path: &Path) -> Result<LabelGrid> {
    let sc = read_sidecar(path)?;
    if sc.dtype != "i16le" {
        return Err(Error::load("dtype", format!("expected i16le, got {}", sc.dtype)));
    }
    if sc.bands != 1 {
        return Err(Error::load("bands", format!("label sidecar must have bands=1, got {}", sc.bands)));
    }
    let bytes = fs::read(path)?;
    let expected = sc.rows * sc.cols * 2;
    if bytes.len() != expected {
        return Err(Error::load(
            "payload",
            format!("{} bytes on disk, header implies {expected}", bytes.len()),
        ));
    }
    let mut labels = Vec::with_capacity(sc.rows * sc.cols);
    for c in bytes.chunks_exact(2) {
        let v = i16::from_le_bytes([c[0], c[1]]);
        if v < 0 {
            return Err(Error::load("payload", format!("negative label {v}")));
        }
        labels.push(v as u16);
    }
    let m = usize::from(*labels.iter().max().unwrap_or(&0));
    LabelGrid::new(sc.rows, sc.cols, labels, m)
}

pub fn write_labels(grid: &LabelGrid, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(grid.labels.len() * 2);
    for l in &grid.labels {
        bytes.extend_from_slice(&(*l as i16).to_le_bytes());
    }
    fs::write(path, bytes)?;
    let sc = Sidecar {
        rows: grid.rows,
        cols: grid.cols,
        bands: 1,
        dtype: "i16le".to_string(),
        order: "bsq".to_string(),
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&sc)?)?;
    Ok(())
}

/// Global affine map of a cube's values onto [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub min: f64,
    pub max: f64,
}

impl ScaleParams {
    pub fn fit(cube: &HsiCube) -> Self {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &v in &cube.data {
            min = min.min(v);
            max = max.max(v);
        }
        Self { min, max }
    }

    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        // Constant cube maps to all zeros.
        if self.max > self.min {
            (v - self.min) / (self.max - self.min)
        } else {
            0.0
        }
    }
}

/// Scales all values affinely to [0, 1] using the global min and max.
pub fn minmax_scale(cube: &HsiCube) -> (HsiCube, ScaleParams) {
    let p = ScaleParams::fit(cube);
    let data = cube.data.iter().map(|&v| p.apply(v)).collect();
    (
        HsiCube {
            rows: cube.rows,
            cols: cube.cols,
            bands: cube.bands,
            data,
        },
        p,
    )
}

/// One-hot encodes labels in 1..=M into an M x n matrix, one 1 per column.
pub fn one_hot(labels: &[usize], num_classes: usize) -> Result<DMatrix<f64>> {
    let mut y = DMatrix::zeros(num_classes, labels.len());
    for (i, &l) in labels.iter().enumerate() {
        if l < 1 || l > num_classes {
            return Err(Error::invalid(format!(
                "label {l} out of range 1..={num_classes}"
            )));
        }
        y[(l - 1, i)] = 1.0;
    }
    Ok(y)
}

/// How many samples each class contributes to the training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSpec {
    /// Fraction of each class, round-half-up, floored at 1.
    Fraction(f64),
    /// Fixed count per class; capped at ceil(half the class size).
    CountPerClass(usize),
}

/// Extracts every labeled pixel into a SampleSet, one column per pixel in
/// row-major scan order.
pub fn flatten_labeled(cube: &HsiCube, grid: &LabelGrid) -> Result<SampleSet> {
    if cube.rows != grid.rows || cube.cols != grid.cols {
        return Err(Error::invalid(format!(
            "cube {}x{} vs label grid {}x{}",
            cube.rows, cube.cols, grid.rows, grid.cols
        )));
    }
    let mut coords = Vec::new();
    let mut labels = Vec::new();
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let l = grid.label(r, c);
            if l > 0 {
                coords.push((r, c));
                labels.push(usize::from(l));
            }
        }
    }
    let mut features = DMatrix::zeros(cube.bands, coords.len());
    for (i, &(r, c)) in coords.iter().enumerate() {
        cube.spectrum_into(r, c, features.column_mut(i).as_mut_slice());
    }
    Ok(SampleSet { features, labels, coords })
}

/// Seeded, stratified train/test split over labeled pixels.
pub fn split_per_class(
    grid: &LabelGrid,
    cube: &HsiCube,
    spec: SplitSpec,
    seed: u64,
) -> Result<(SampleSet, SampleSet)> {
    match spec {
        SplitSpec::Fraction(f) if !(f > 0.0 && f < 1.0) => {
            return Err(Error::invalid(format!("fraction {f} outside (0,1)")));
        }
        SplitSpec::CountPerClass(0) => {
            return Err(Error::invalid("count per class must be >= 1"));
        }
        _ => {}
    }
    let all = flatten_labeled(cube, grid)?;
    let m = grid.num_classes;
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (i, &l) in all.labels.iter().enumerate() {
        per_class[l - 1].push(i);
    }
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (class0, idxs) in per_class.iter_mut().enumerate() {
        if idxs.is_empty() {
            return Err(Error::invalid(format!("class {} has no labeled pixels", class0 + 1)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "split", class0 as u64));
        idxs.shuffle(&mut rng);
        let n = idxs.len();
        let take = match spec {
            SplitSpec::Fraction(f) => (((f * n as f64) + 0.5).floor() as usize).max(1).min(n),
            SplitSpec::CountPerClass(c) => {
                if 2 * c > n {
                    n.div_ceil(2)
                } else {
                    c
                }
            }
        };
        train_idx.extend_from_slice(&idxs[..take]);
        test_idx.extend_from_slice(&idxs[take..]);
    }
    Ok((subset(&all, &train_idx), subset(&all, &test_idx)))
}

fn subset(set: &SampleSet, idx: &[usize]) -> SampleSet {
    let d = set.features.nrows();
    let mut features = DMatrix::zeros(d, idx.len());
    let mut labels = Vec::with_capacity(idx.len());
    let mut coords = Vec::with_capacity(idx.len());
    for (j, &i) in idx.iter().enumerate() {
        features.column_mut(j).copy_from(&set.features.column(i));
        labels.push(set.labels[i]);
        coords.push(set.coords[i]);
    }
    SampleSet { features, labels, coords }
}
