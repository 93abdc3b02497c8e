//! Dense kernels shared by the rest of the crate: row-major matrices, affine
//! maps, L2 normalization, the Adam optimizer, and a central-difference
//! gradient checker.
//!
//! Everything runs in `f64`. Vectors are plain slices; a feature vector is
//! just `&[f64]` whose length is the run's embedding dimension.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{MneError, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(MneError::shape(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(MneError::shape(format!(
                    "row {i} has length {}, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Entries drawn from `U(-1/sqrt(cols), 1/sqrt(cols))`.
    pub fn fan_in_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (cols.max(1) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
        Matrix { rows, cols, data }
    }

    /// Identity plus i.i.d. Gaussian noise of the given standard deviation.
    pub fn noisy_identity<R: Rng + ?Sized>(n: usize, std: f64, rng: &mut R) -> Self {
        let mut m = Matrix::identity(n);
        if std > 0.0 {
            let dist = Normal::new(0.0, std).expect("positive std");
            for v in &mut m.data {
                *v += dist.sample(rng);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// `self · x`. Caller guarantees `x.len() == cols`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `selfᵀ · y`. Caller guarantees `y.len() == rows`.
    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                axpy(yi, self.row(i), &mut out);
            }
        }
        out
    }

    /// `self += alpha · a bᵀ`.
    pub fn add_outer(&mut self, alpha: f64, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (i, &ai) in a.iter().enumerate() {
            let s = alpha * ai;
            if s != 0.0 {
                let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
                axpy(s, b, row);
            }
        }
    }
}

/// `y = W·x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl AffineMap {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weight.rows() != bias.len() {
            return Err(MneError::shape(format!(
                "affine map has {} weight rows but bias of length {}",
                weight.rows(),
                bias.len()
            )));
        }
        Ok(AffineMap { weight, bias })
    }

    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        AffineMap {
            weight: Matrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim() {
            return Err(MneError::shape(format!(
                "affine map expects input of length {}, got {}",
                self.in_dim(),
                x.len()
            )));
        }
        Ok(self.apply_unchecked(x))
    }

    pub(crate) fn apply_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.weight.matvec(x);
        for (yi, bi) in y.iter_mut().zip(&self.bias) {
            *yi += bi;
        }
        y
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// `y += alpha · x`.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn l2_normalize(x: &[f64]) -> Result<Vec<f64>> {
    let n = norm(x);
    if n == 0.0 || !n.is_finite() {
        return Err(MneError::Degenerate(format!(
            "cannot normalize vector with norm {n}"
        )));
    }
    Ok(x.iter().map(|v| v / n).collect())
}

/// Gradient through `y = x / ‖x‖` given `dL/dy`: `(g - y (y·g)) / ‖x‖`.
pub fn l2_normalize_backward(x: &[f64], grad_out: &[f64]) -> Vec<f64> {
    let n = norm(x);
    let y: Vec<f64> = x.iter().map(|v| v / n).collect();
    let yg = dot(&y, grad_out);
    grad_out
        .iter()
        .zip(&y)
        .map(|(g, yi)| (g - yi * yg) / n)
        .collect()
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators for a list of parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(block_sizes: &[usize], config: AdamConfig) -> Self {
        AdamState {
            config,
            first: block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. `lrs` holds one learning rate per block.
    pub fn update(
        &mut self,
        params: &mut [&mut [f64]],
        grads: &[&[f64]],
        lrs: &[f64],
    ) -> Result<()> {
        let nb = self.first.len();
        if params.len() != nb || grads.len() != nb || lrs.len() != nb {
            return Err(MneError::shape(format!(
                "adam state has {nb} blocks; got {} params, {} grads, {} learning rates",
                params.len(),
                grads.len(),
                lrs.len()
            )));
        }
        for b in 0..nb {
            let n = self.first[b].len();
            if params[b].len() != n || grads[b].len() != n {
                return Err(MneError::shape(format!(
                    "adam block {b}: expected {n} values, got params {} grads {}",
                    params[b].len(),
                    grads[b].len()
                )));
            }
            if let Some(i) = grads[b].iter().position(|g| !g.is_finite()) {
                return Err(MneError::Numeric(format!(
                    "non-finite gradient at block {b} index {i}"
                )));
            }
            if !(lrs[b] > 0.0) {
                return Err(MneError::Numeric(format!(
                    "learning rate {} must be > 0",
                    lrs[b]
                )));
            }
        }

        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for b in 0..nb {
            let lr = lrs[b];
            let (m, v) = (&mut self.first[b], &mut self.second[b]);
            for (((p, &g), mi), vi) in params[b].iter_mut().zip(grads[b]).zip(m).zip(v) {
                *mi = beta1 * *mi + (1.0 - beta1) * g;
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Single-learning-rate Adam update over every block.
pub fn adam_step(
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    let lrs = vec![lr; params.len()];
    state.update(params, grads, &lrs)
}

/// Worst disagreement between analytic and numerical gradients in one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockError {
    pub block: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDiffReport {
    pub blocks: Vec<BlockError>,
    pub tolerance: f64,
}

impl FiniteDiffReport {
    pub fn max_rel_error(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Central-difference gradient checker.
#[derive(Debug, Clone, Copy)]
pub struct FiniteDiff {
    pub step: f64,
    pub tolerance: f64,
}

impl Default for FiniteDiff {
    fn default() -> Self {
        FiniteDiff {
            step: 1e-5,
            tolerance: 1e-4,
        }
    }
}

impl FiniteDiff {
    pub fn with_tolerance(tolerance: f64) -> Self {
        FiniteDiff {
            tolerance,
            ..Default::default()
        }
    }

    /// Compares `analytic` against `(f(θ+h) - f(θ-h)) / 2h` for every scalar in
    /// every block of `params`.
    pub fn check<F>(
        &self,
        mut loss_fn: F,
        params: &[Vec<f64>],
        analytic: &[Vec<f64>],
    ) -> Result<FiniteDiffReport>
    where
        F: FnMut(&[Vec<f64>]) -> Result<f64>,
    {
        if params.len() != analytic.len() {
            return Err(MneError::shape(format!(
                "{} parameter blocks but {} gradient blocks",
                params.len(),
                analytic.len()
            )));
        }
        let h = self.step;
        let mut theta: Vec<Vec<f64>> = params.to_vec();
        let mut blocks = Vec::with_capacity(params.len());
        for b in 0..params.len() {
            if params[b].len() != analytic[b].len() {
                return Err(MneError::shape(format!(
                    "block {b}: {} parameters but {} gradients",
                    params[b].len(),
                    analytic[b].len()
                )));
            }
            let mut worst = BlockError {
                block: b,
                max_rel_error: 0.0,
                worst_index: 0,
                analytic: 0.0,
                numeric: 0.0,
            };
            for i in 0..params[b].len() {
                let orig = theta[b][i];
                theta[b][i] = orig + h;
                let plus = loss_fn(&theta)?;
                theta[b][i] = orig - h;
                let minus = loss_fn(&theta)?;
                theta[b][i] = orig;
                if !plus.is_finite() || !minus.is_finite() {
                    return Err(MneError::Numeric(format!(
                        "non-finite loss when perturbing block {b} index {i}"
                    )));
                }
                let numeric = (plus - minus) / (2.0 * h);
                let err = relative_error(analytic[b][i], numeric);
                if err > worst.max_rel_error {
                    worst = BlockError {
                        block: b,
                        max_rel_error: err,
                        worst_index: i,
                        analytic: analytic[b][i],
                        numeric,
                    };
                }
            }
            blocks.push(worst);
        }
        Ok(FiniteDiffReport {
            blocks,
            tolerance: self.tolerance,
        })
    }
}
