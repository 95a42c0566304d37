//! Assembles the six classifiers (basic/ridge/kernel ELM, each optionally
//! with weighted composite spatial features), prediction, and 3-fold
//! cross-validation over the C / sigma grids.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::data_model::{one_hot, HsiCube, SampleSet, ScaleParams};
use crate::derive_seed;
use crate::elm::{hidden_map, init_hidden, solve_belm, solve_kelm, solve_nlelm, HiddenLayer};
use crate::error::{Error, Result};
use crate::kernels::gaussian_gram;
use crate::metrics::{confusion, oa};
use crate::solver::{fit, softmax_probs, SolverConfig, SolverTrace};
use crate::wcf::{combine_hidden, spatial_mean, wcf_kernel, CombineRule, WcfConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Pseudoinverse output weights.
    AsmlBelm,
    /// Ridge-regularized output weights.
    AsmlNlelm,
    /// Gaussian-kernel coefficients.
    AsmlKelm,
}

impl Variant {
    /// Hidden-matrix combine rule when spatial features are enabled.
    pub fn combine_rule(self) -> CombineRule {
        match self {
            Variant::AsmlBelm => CombineRule::Linear,
            Variant::AsmlNlelm | Variant::AsmlKelm => CombineRule::Sqrt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub variant: Variant,
    /// Append weighted composite spatial features.
    pub wcf: bool,
    /// Hidden neurons L (unused by the kernel variant).
    pub neurons: usize,
    /// Ridge / kernel regularization C.
    pub c: f64,
    pub sigma_w: f64,
    pub sigma_s: f64,
    pub solver: SolverConfig,
    pub wcf_cfg: WcfConfig,
    pub seed: u64,
}

impl ClassifierSpec {
    pub fn new(variant: Variant, wcf: bool, lambda: f64) -> Self {
        Self {
            variant,
            wcf,
            neurons: 450,
            c: 16.0,
            sigma_w: 1.0,
            sigma_s: 1.0,
            solver: SolverConfig::new(lambda),
            wcf_cfg: WcfConfig {
                combine_rule: variant.combine_rule(),
                ..WcfConfig::default()
            },
            seed: 0,
        }
    }
}

/// Everything needed to score new pixels; training labels are not retained.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub variant: Variant,
    pub wcf: bool,
    pub num_classes: usize,
    pub scale: ScaleParams,
    /// Random layer for the basic/ridge variants.
    pub hidden: Option<HiddenLayer>,
    /// Training features retained for kernel prediction, d x n.
    pub train_spectral: Option<DMatrix<f64>>,
    pub train_spatial: Option<DMatrix<f64>>,
    pub sigma_w: f64,
    pub sigma_s: f64,
    pub wcf_cfg: WcfConfig,
    /// R x M output coefficients (R = L or R = n_train).
    pub coefficients: DMatrix<f64>,
}

fn check_classes(train: &SampleSet) -> Result<usize> {
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let m = *train.labels.iter().max().unwrap();
    for class in 1..=m {
        if !train.labels.contains(&class) {
            return Err(Error::invalid(format!("class {class} absent from training set")));
        }
    }
    Ok(m)
}

/// Trains one classifier: optional spatial features, hidden maps, the
/// closed-form ELM initialization, then the sparse logistic re-estimation.
pub fn train(
    spec: &ClassifierSpec,
    train: &SampleSet,
    cube: Option<&HsiCube>,
    scale: ScaleParams,
) -> Result<(TrainedModel, SolverTrace)> {
    let m = check_classes(train)?;
    let y = one_hot(&train.labels, m)?;
    let mut wcf_cfg = spec.wcf_cfg;
    wcf_cfg.combine_rule = spec.variant.combine_rule();

    let xw = &train.features;
    let xs = if spec.wcf {
        let cube = cube.ok_or_else(|| Error::invalid("spatial features requested but no cube provided"))?;
        Some(spatial_mean(cube, &train.coords, &wcf_cfg)?)
    } else {
        None
    };

    let (hidden, train_spectral, train_spatial, phi, beta0) = match spec.variant {
        Variant::AsmlBelm | Variant::AsmlNlelm => {
            let layer = init_hidden(derive_seed(spec.seed, "hidden", 0), spec.neurons, xw.nrows());
            let hw = hidden_map(&layer, xw);
            let h = match &xs {
                Some(xs) => combine_hidden(&hw, &hidden_map(&layer, xs), &wcf_cfg)?,
                None => hw,
            };
            let beta0 = match spec.variant {
                Variant::AsmlBelm => solve_belm(&h, &y)?,
                _ => solve_nlelm(&h, &y, spec.c)?,
            };
            (Some(layer), None, None, h, beta0)
        }
        Variant::AsmlKelm => {
            let k = match &xs {
                Some(xs) => wcf_kernel(xw, xw, spec.sigma_w, xs, xs, spec.sigma_s, wcf_cfg.mu)?,
                None => gaussian_gram(xw, xw, spec.sigma_w)?,
            };
            let pi0 = solve_kelm(&k.k, &y, spec.c)?;
            (None, Some(xw.clone()), xs.clone(), k.k, pi0)
        }
    };

    let (coefficients, trace) = fit(&beta0, &phi, &y, &spec.solver)?;
    Ok((
        TrainedModel {
            variant: spec.variant,
            wcf: spec.wcf,
            num_classes: m,
            scale,
            hidden,
            train_spectral,
            train_spatial,
            sigma_w: spec.sigma_w,
            sigma_s: spec.sigma_s,
            wcf_cfg,
            coefficients,
        },
        trace,
    ))
}

fn argmax_smallest(col: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in col.iter().enumerate().skip(1) {
        if v > col[best] {
            best = i;
        }
    }
    best
}

/// Scores query pixels: labels (argmax, ties to the smallest class index)
/// and the M x n posterior matrix.
pub fn predict(
    model: &TrainedModel,
    query: &SampleSet,
    cube: Option<&HsiCube>,
) -> Result<(Vec<usize>, DMatrix<f64>)> {
    let xw = &query.features;
    let xs = if model.wcf {
        let cube = cube.ok_or_else(|| Error::invalid("spatial features requested but no cube provided"))?;
        Some(spatial_mean(cube, &query.coords, &model.wcf_cfg)?)
    } else {
        None
    };

    let phi = match model.variant {
        Variant::AsmlBelm | Variant::AsmlNlelm => {
            let layer = model
                .hidden
                .as_ref()
                .ok_or_else(|| Error::invalid("model is missing its hidden layer"))?;
            if layer.input_dim() != xw.nrows() {
                return Err(Error::invalid(format!(
                    "query dimension {} does not match model input {}",
                    xw.nrows(),
                    layer.input_dim()
                )));
            }
            let hw = hidden_map(layer, xw);
            match &xs {
                Some(xs) => combine_hidden(&hw, &hidden_map(layer, xs), &model.wcf_cfg)?,
                None => hw,
            }
        }
        Variant::AsmlKelm => {
            let trw = model
                .train_spectral
                .as_ref()
                .ok_or_else(|| Error::invalid("kernel model is missing training features"))?;
            if trw.nrows() != xw.nrows() {
                return Err(Error::invalid(format!(
                    "query dimension {} does not match model input {}",
                    xw.nrows(),
                    trw.nrows()
                )));
            }
            match (&xs, &model.train_spatial) {
                (Some(xs), Some(trs)) => {
                    wcf_kernel(trw, xw, model.sigma_w, trs, xs, model.sigma_s, model.wcf_cfg.mu)?.k
                }
                _ => gaussian_gram(trw, xw, model.sigma_w)?.k,
            }
        }
    };

    let probs = softmax_probs(&model.coefficients, &phi);
    let labels = (0..probs.ncols())
        .map(|i| argmax_smallest(probs.column(i).as_slice()) + 1)
        .collect();
    Ok((labels, probs))
}

/// One grid point of a cross-validation surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub c: f64,
    pub sigma: f64,
    pub mean_oa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best_c: f64,
    pub best_sigma: f64,
    pub points: Vec<CvPoint>,
}

/// Stratified fold assignment: a pure function of (seed, labels).
fn fold_assignment(labels: &[usize], m: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    let mut assignment = vec![0usize; labels.len()];
    for class in 1..=m {
        let mut idxs: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        if idxs.len() < folds {
            return Err(Error::invalid(format!(
                "class {class} has {} samples, fewer than {folds} folds",
                idxs.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "cv-fold", class as u64));
        idxs.shuffle(&mut rng);
        for (pos, &i) in idxs.iter().enumerate() {
            assignment[i] = pos % folds;
        }
    }
    Ok(assignment)
}

fn take_columns(set: &SampleSet, keep: &[bool], want: bool) -> SampleSet {
    let idx: Vec<usize> = (0..set.len()).filter(|&i| keep[i] == want).collect();
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

#[allow(clippy::too_many_arguments)]
fn grid_point_score(
    spec: &ClassifierSpec,
    train_set: &SampleSet,
    cube: Option<&HsiCube>,
    scale: ScaleParams,
    assignment: &[usize],
    folds: usize,
    c: f64,
    sigma: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for fold in 0..folds {
        let keep: Vec<bool> = assignment.iter().map(|&f| f == fold).collect();
        let fit_set = take_columns(train_set, &keep, false);
        let val_set = take_columns(train_set, &keep, true);
        let mut point_spec = spec.clone();
        point_spec.c = c;
        point_spec.sigma_w = sigma;
        point_spec.sigma_s = sigma;
        let m = check_classes(train_set)?;
        // Guard: a fold split must not lose a class from the fit side.
        if (1..=m).any(|class| !fit_set.labels.contains(&class)) {
            return Err(Error::invalid("fold split dropped a class from the fit side"));
        }
        let (model, _) = train(&point_spec, &fit_set, cube, scale)?;
        let (pred, _) = predict(&model, &val_set, cube)?;
        let cm = confusion(&val_set.labels, &pred, m)?;
        total += oa(&cm)?;
    }
    Ok(total / folds as f64)
}

/// Mean held-out overall accuracy over a (C, sigma) grid; ties break
/// toward the smaller C, then the smaller sigma.
pub fn cross_validate(
    spec: &ClassifierSpec,
    train_set: &SampleSet,
    cube: Option<&HsiCube>,
    scale: ScaleParams,
    c_grid: &[f64],
    sigma_grid: &[f64],
    folds: usize,
) -> Result<CvResult> {
    if c_grid.is_empty() || sigma_grid.is_empty() {
        return Err(Error::invalid("cross-validation grids must be nonempty"));
    }
    if folds < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 folds"));
    }
    let m = check_classes(train_set)?;
    let assignment = fold_assignment(&train_set.labels, m, folds, spec.seed)?;

    let grid: Vec<(f64, f64)> = c_grid
        .iter()
        .flat_map(|&c| sigma_grid.iter().map(move |&s| (c, s)))
        .collect();

    #[cfg(feature = "parallel")]
    let scores: Result<Vec<f64>> = grid
        .par_iter()
        .map(|&(c, s)| grid_point_score(spec, train_set, cube, scale, &assignment, folds, c, s))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let scores: Result<Vec<f64>> = grid
        .iter()
        .map(|&(c, s)| grid_point_score(spec, train_set, cube, scale, &assignment, folds, c, s))
        .collect();
    let scores = scores?;

    let points: Vec<CvPoint> = grid
        .iter()
        .zip(&scores)
        .map(|(&(c, sigma), &mean_oa)| CvPoint { c, sigma, mean_oa })
        .collect();

    // Grid is ordered by (C asc, sigma asc); strict improvement keeps the
    // smallest tied point.
    let mut sorted: Vec<&CvPoint> = points.iter().collect();
    sorted.sort_by(|a, b| a.c.partial_cmp(&b.c).unwrap().then(a.sigma.partial_cmp(&b.sigma).unwrap()));
    let mut best = sorted[0];
    for p in &sorted[1..] {
        if p.mean_oa > best.mean_oa {
            best = p;
        }
    }
    Ok(CvResult {
        best_c: best.c,
        best_sigma: best.sigma,
        points,
    })
}
