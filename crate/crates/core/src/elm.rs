//! Random hidden layer and the three closed-form ELM output-weight solvers:
//! pseudoinverse, ridge-regularized, and kernel.

use nalgebra::{DMatrix, DVector};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Frozen random input weights and biases of the hidden layer.
#[derive(Debug, Clone)]
pub struct HiddenLayer {
    /// L x d input weights, one neuron per row.
    pub weights: DMatrix<f64>,
    /// Per-neuron biases, length L.
    pub biases: DVector<f64>,
}

impl HiddenLayer {
    pub fn neurons(&self) -> usize {
        self.weights.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }
}

/// Draws W uniform on [-1,1] and b uniform on [0,1] from a seeded generator.
pub fn init_hidden(seed: u64, neurons: usize, input_dim: usize) -> HiddenLayer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w_dist = Uniform::new_inclusive(-1.0, 1.0);
    let b_dist = Uniform::new(0.0, 1.0);
    // Row-major fill so the draw order is (neuron, input).
    let mut weights = DMatrix::zeros(neurons, input_dim);
    for i in 0..neurons {
        for j in 0..input_dim {
            weights[(i, j)] = w_dist.sample(&mut rng);
        }
    }
    let biases = DVector::from_fn(neurons, |_, _| b_dist.sample(&mut rng));
    HiddenLayer { weights, biases }
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Sigmoid hidden-layer response, L x N: H[j,i] = sigmoid(w_j . x_i + b_j).
pub fn hidden_map(layer: &HiddenLayer, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut pre = &layer.weights * x;
    squash(pre.as_mut_slice(), &layer.biases, layer.neurons());
    pre
}

/// Sequential reference path for the sigmoid squash, used by the benches.
pub fn hidden_map_seq(layer: &HiddenLayer, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut pre = &layer.weights * x;
    squash_seq(pre.as_mut_slice(), &layer.biases, layer.neurons());
    pre
}

fn squash_seq(data: &mut [f64], biases: &DVector<f64>, l: usize) {
    for col in data.chunks_mut(l) {
        for (v, b) in col.iter_mut().zip(biases.iter()) {
            *v = sigmoid(*v + b);
        }
    }
}

#[cfg(feature = "parallel")]
fn squash(data: &mut [f64], biases: &DVector<f64>, l: usize) {
    data.par_chunks_mut(l).for_each(|col| {
        for (v, b) in col.iter_mut().zip(biases.iter()) {
            *v = sigmoid(*v + b);
        }
    });
}

#[cfg(not(feature = "parallel"))]
fn squash(data: &mut [f64], biases: &DVector<f64>, l: usize) {
    squash_seq(data, biases, l);
}

/// Relative singular-value cutoff for the pseudoinverse solve.
const PINV_RTOL: f64 = 1e-10;

/// Minimum-norm least-squares output weights via SVD of H^T.
///
/// H is L x N, Y is M x N; returns the L x M matrix solving H^T beta = Y^T.
pub fn solve_belm(h: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if h.ncols() != y.ncols() {
        return Err(Error::invalid(format!(
            "H has {} samples but Y has {}",
            h.ncols(),
            y.ncols()
        )));
    }
    let svd = h.transpose().svd(true, true);
    let smax = svd.singular_values.max();
    svd.solve(&y.transpose(), PINV_RTOL * smax)
        .map_err(|e| Error::Linalg(e.to_string()))
}

/// Ridge-regularized output weights: beta = H (I/C + H^T H)^-1 Y^T.
///
/// Solved through whichever of the L x L or N x N normal systems is smaller.
pub fn solve_nlelm(h: &DMatrix<f64>, y: &DMatrix<f64>, c: f64) -> Result<DMatrix<f64>> {
    if c <= 0.0 {
        return Err(Error::invalid(format!("regularization C must be > 0, got {c}")));
    }
    if h.ncols() <= h.nrows() {
        solve_nlelm_sample_space(h, y, c)
    } else {
        solve_nlelm_feature_space(h, y, c)
    }
}

fn spd_solve(a: DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Linalg("Cholesky factorization failed (matrix not PD)".into()))?;
    Ok(chol.solve(rhs))
}

/// Direct form of Eq.-style ridge solve on the N x N system.
pub(crate) fn solve_nlelm_sample_space(
    h: &DMatrix<f64>,
    y: &DMatrix<f64>,
    c: f64,
) -> Result<DMatrix<f64>> {
    let n = h.ncols();
    let mut a = h.transpose() * h;
    for i in 0..n {
        a[(i, i)] += 1.0 / c;
    }
    let inner = spd_solve(a, &y.transpose())?;
    Ok(h * inner)
}

/// Push-through form on the L x L system: (I/C + H H^T)^-1 H Y^T.
pub(crate) fn solve_nlelm_feature_space(
    h: &DMatrix<f64>,
    y: &DMatrix<f64>,
    c: f64,
) -> Result<DMatrix<f64>> {
    let l = h.nrows();
    let mut a = h * h.transpose();
    for i in 0..l {
        a[(i, i)] += 1.0 / c;
    }
    spd_solve(a, &(h * y.transpose()))
}

/// Maximum tolerated asymmetry in a kernel matrix.
const SYM_TOL: f64 = 1e-8;

/// Kernel output coefficients: pi = (I/C + K)^-1 Y^T for symmetric K.
pub fn solve_kelm(k: &DMatrix<f64>, y: &DMatrix<f64>, c: f64) -> Result<DMatrix<f64>> {
    if c <= 0.0 {
        return Err(Error::invalid(format!("regularization C must be > 0, got {c}")));
    }
    let n = k.nrows();
    if k.ncols() != n {
        return Err(Error::invalid("kernel matrix must be square"));
    }
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((k[(i, j)] - k[(j, i)]).abs());
        }
    }
    if asym > SYM_TOL {
        return Err(Error::invalid(format!("kernel asymmetry {asym:.3e} exceeds {SYM_TOL:.0e}")));
    }
    let mut a = k.clone();
    for i in 0..n {
        a[(i, i)] += 1.0 / c;
    }
    spd_solve(a, &y.transpose())
}
