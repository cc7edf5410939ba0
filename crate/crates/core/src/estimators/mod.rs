//! Learning pipelines: low-dimensional ERM, nuclear-norm multi-task regression,
//! fixed-design kernel ridge, weight-decayed two-layer ReLU networks, and the
//! target-side fits that sit on top of a learned representation.

mod constrained;
mod lowdim;
mod nuclear;
mod relu;

pub use constrained::{
    baseline_target_ridge, constrained_least_squares, fit_relu_target, fit_target_constrained, fixed_design_smoother,
    smoother_right_form,
};
pub use lowdim::{fit_lowdim_mtl, fit_target_linear, lowdim_objective};
pub use nuclear::{default_lambda, fit_nuclear_mtl, nuclear_objective, oracle_lambda, source_operator_adjoint, subgradient_residual};
pub use relu::{
    baseline_target_nn, fit_relu_mtl, nn_predict, rebalance_net, relu_gradient, relu_objective, train_relu,
};

use crate::linops::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    FixedLipschitz,
    Backtracking,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub restarts: usize,
    pub step_rule: StepRule,
    pub lambda: f64,
    /// Target norm budget; `f64::INFINITY` leaves the target fit unconstrained.
    pub r: f64,
    pub width: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-10,
            restarts: 1,
            step_rule: StepRule::FixedLipschitz,
            lambda: 0.0,
            r: f64::INFINITY,
            width: 16,
            seed: 0,
        }
    }
}

impl FitOptions {
    pub(crate) fn validate(&self) -> crate::Result<()> {
        if self.max_iter == 0 {
            return crate::error::invalid("max_iter must be >= 1");
        }
        if !(self.tol > 0.0) {
            return crate::error::invalid("tol must be > 0");
        }
        if !(self.lambda >= 0.0) {
            return crate::error::invalid("lambda must be >= 0");
        }
        if !(self.r >= 0.0) {
            return crate::error::invalid("r must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub b_hat: DenseMatrix,
    pub w_hat: DenseMatrix,
    pub objective_trace: Vec<f64>,
    pub grad_residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&f64::NAN)
    }
}
