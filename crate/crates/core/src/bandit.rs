//! Per-agent online ridge regression.
//!
//! Each agent accumulates `Σ = λI + Σ x xᵀ` and `S = Σ x y` while exploring
//! and solves `θ̂ = Σ⁻¹ S` once, when exploration ends.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::matching::Ranking;

/// Online sufficient statistics of a ridge regression.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeState {
    gram: DMatrix<f64>,
    moment: DVector<f64>,
    lambda: f64,
    observations: usize,
}

impl RidgeState {
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput(
                "ridge dimension must be positive".into(),
            ));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "ridge parameter must be positive and finite, got {lambda}"
            )));
        }
        Ok(Self {
            gram: DMatrix::identity(dim, dim) * lambda,
            moment: DVector::zeros(dim),
            lambda,
            observations: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.moment.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn observations(&self) -> usize {
        self.observations
    }

    /// `Σ = λI + XᵀX`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `XᵀX`, i.e. the accumulated Gram matrix without the ridge term.
    pub fn design_gram(&self) -> DMatrix<f64> {
        let d = self.dim();
        &self.gram - DMatrix::identity(d, d) * self.lambda
    }

    /// `S = Xᵀy`.
    pub fn moment(&self) -> &DVector<f64> {
        &self.moment
    }

    /// Fold one observation: `Σ += x xᵀ`, `S += x y`.
    pub fn update(&mut self, x: &DVector<f64>, y: f64) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        self.gram.ger(1.0, x, x, 1.0);
        self.moment.axpy(y, x, 1.0);
        self.observations += 1;
        Ok(())
    }

    /// `θ̂ = Σ⁻¹ S` via Cholesky, with one step of iterative refinement.
    pub fn solve(&self) -> Estimate {
        // Σ is symmetric with eigenvalues >= λ > 0, so Cholesky cannot fail.
        let chol = self
            .gram
            .clone()
            .cholesky()
            .expect("ridge Gram matrix is positive definite");
        let mut theta = chol.solve(&self.moment);
        let residual = &self.moment - &self.gram * &theta;
        theta += chol.solve(&residual);
        Estimate { theta }
    }
}

/// A frozen parameter estimate `θ̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    theta: DVector<f64>,
}

impl Estimate {
    pub fn new(theta: DVector<f64>) -> Result<Self> {
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "estimate has non-finite entries".into(),
            ));
        }
        Ok(Self { theta })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            theta: DVector::zeros(dim),
        }
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// Estimated mean score `⟨θ̂, x⟩`.
    pub fn predict_mean(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.theta.dot(x))
    }

    /// Arms sorted by estimated mean, descending; ties go to the lower index.
    pub fn rank_arms(&self, contexts: &[DVector<f64>]) -> Result<Ranking> {
        let scores = contexts
            .iter()
            .map(|x| self.predict_mean(x))
            .collect::<Result<Vec<_>>>()?;
        rank_by_scores(&scores)
    }
}

/// Indices sorted by descending score, ties broken by ascending index.
pub fn rank_by_scores(scores: &[f64]) -> Result<Ranking> {
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("cannot rank NaN scores".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable sort keeps ascending index among equal scores
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    Ranking::new(order)
}
