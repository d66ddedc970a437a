//! ADMM for the elastic-net topology subproblem.
//!
//! Given state columns `X = [s(1) .. s(T)]` and lagged columns
//! `Xp = [s(0) .. s(T-1)]`, the solver minimizes
//!
//! ```text
//! 1/2 ||X - A0 X - A1 Xp||_F^2 + l1 (||A0||_1 + ||A1||_1) + l2/2 (||A0||_F^2 + ||A1||_F^2)
//!     + beta/2 (||A0 - P0||_F^2 + ||A1 - P1||_F^2)
//! ```
//!
//! over `A0` with zero diagonal and unconstrained `A1`, by splitting each
//! matrix into a smooth copy `A` and a sparse copy `C` tied by `A = C`. One
//! iteration is: linear solve for `A0`, linear solve for `A1` (using the
//! fresh `A0`), soft-threshold both sparse copies (clearing the diagonal of
//! `C0`), then dual ascent. Without the lag block (`Xp` absent) the same
//! iteration solves the contemporaneous-only SEM problem.
//!
//! The returned estimates are the sparse copies, so zero entries and the
//! zero diagonal are exact.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Scalar soft-thresholding: `x - alpha` above `alpha`, `x + alpha` below
/// `-alpha`, zero in between.
pub fn soft_threshold(x: f64, alpha: f64) -> f64 {
    if x > alpha {
        x - alpha
    } else if x < -alpha {
        x + alpha
    } else {
        0.0
    }
}

/// Second-order statistics of the data and the penalty weights, in the
/// half-scaled form above.
#[derive(Debug, Clone)]
pub struct ElasticNetProblem {
    /// `X X^T`
    gram: DMatrix<f64>,
    /// `Xp Xp^T` and `X Xp^T`, present when the lag block is estimated.
    lagged: Option<(DMatrix<f64>, DMatrix<f64>)>,
    l1: f64,
    l2: f64,
    rho: f64,
    prox: Option<ProximalPull>,
}

/// Quadratic pull `beta/2 ||A - P||_F^2` toward previous estimates.
#[derive(Debug, Clone)]
pub struct ProximalPull {
    pub beta: f64,
    pub a0: DMatrix<f64>,
    pub a1: DMatrix<f64>,
}

impl ElasticNetProblem {
    /// Contemporaneous-only problem from `N x T` state columns.
    pub fn contemporaneous(x: &DMatrix<f64>, l1: f64, l2: f64, rho: f64) -> Result<Self> {
        Self::validate(l1, l2, rho)?;
        Ok(Self { gram: x * x.transpose(), lagged: None, l1, l2, rho, prox: None })
    }

    /// Problem with both the contemporaneous and the lag-one block.
    pub fn with_lag(x: &DMatrix<f64>, xp: &DMatrix<f64>, l1: f64, l2: f64, rho: f64) -> Result<Self> {
        Self::validate(l1, l2, rho)?;
        if x.shape() != xp.shape() {
            return Err(Error::Shape(format!(
                "current states are {:?} but lagged states are {:?}",
                x.shape(),
                xp.shape()
            )));
        }
        let gram = x * x.transpose();
        let lag_gram = xp * xp.transpose();
        let cross = x * xp.transpose();
        Ok(Self { gram, lagged: Some((lag_gram, cross)), l1, l2, rho, prox: None })
    }

    pub fn with_proximal_pull(mut self, pull: ProximalPull) -> Result<Self> {
        let n = self.n();
        if !(pull.beta >= 0.0) {
            return Err(Error::InvalidConfig("beta must be >= 0".into()));
        }
        if pull.a0.shape() != (n, n) || pull.a1.shape() != (n, n) {
            return Err(Error::Shape("proximal targets must be N x N".into()));
        }
        self.prox = Some(pull);
        Ok(self)
    }

    fn validate(l1: f64, l2: f64, rho: f64) -> Result<()> {
        if !(l1 >= 0.0 && l2 >= 0.0) {
            return Err(Error::InvalidConfig("penalty weights must be >= 0".into()));
        }
        if !(rho > 0.0) {
            return Err(Error::InvalidConfig("ADMM penalty rho must be > 0".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.gram.nrows()
    }

    pub fn has_lag(&self) -> bool {
        self.lagged.is_some()
    }

    fn beta(&self) -> f64 {
        self.prox.as_ref().map_or(0.0, |p| p.beta)
    }

    /// Gradients of the smooth part at `(a0, a1)`.
    pub fn smooth_gradient(
        &self,
        a0: &DMatrix<f64>,
        a1: Option<&DMatrix<f64>>,
    ) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
        let mut g0 = a0 * &self.gram - &self.gram + self.l2 * a0;
        let mut g1 = None;
        if let (Some((lag_gram, cross)), Some(a1)) = (&self.lagged, a1) {
            g0 += a1 * cross.transpose();
            g1 = Some(a1 * lag_gram - cross + a0 * cross + self.l2 * a1);
        }
        if let Some(p) = &self.prox {
            g0 += p.beta * (a0 - &p.a0);
            if let Some(g1) = g1.as_mut() {
                *g1 += p.beta * (a1.expect("lag block present") - &p.a1);
            }
        }
        (g0, g1)
    }

    /// Largest violation of the optimality fixed point
    /// `A = soft(A - grad(A), l1)` over the free entries (all of `A1`, the
    /// off-diagonal of `A0`).
    pub fn kkt_residual(&self, a0: &DMatrix<f64>, a1: Option<&DMatrix<f64>>) -> f64 {
        let (g0, g1) = self.smooth_gradient(a0, a1);
        let mut worst: f64 = 0.0;
        let n = self.n();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let fixed = soft_threshold(a0[(i, j)] - g0[(i, j)], self.l1);
                    worst = worst.max((a0[(i, j)] - fixed).abs());
                }
            }
        }
        if let (Some(a1), Some(g1)) = (a1, g1) {
            for (a, g) in a1.iter().zip(g1.iter()) {
                worst = worst.max((a - soft_threshold(a - g, self.l1)).abs());
            }
        }
        worst
    }
}

/// Primal, auxiliary and dual iterates; reusable as a warm start.
#[derive(Debug, Clone)]
pub struct AdmmState {
    a0: DMatrix<f64>,
    c0: DMatrix<f64>,
    dual0: DMatrix<f64>,
    a1: DMatrix<f64>,
    c1: DMatrix<f64>,
    dual1: DMatrix<f64>,
}

impl AdmmState {
    pub fn zeros(n: usize) -> Self {
        let z = DMatrix::zeros(n, n);
        Self {
            a0: z.clone(),
            c0: z.clone(),
            dual0: z.clone(),
            a1: z.clone(),
            c1: z.clone(),
            dual1: z,
        }
    }

    pub fn n(&self) -> usize {
        self.a0.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmStopping {
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone)]
pub struct AdmmOutcome {
    /// Sparse copy of `A0`; exactly zero on the diagonal.
    pub a0: DMatrix<f64>,
    /// Sparse copy of `A1`; all zeros for the contemporaneous-only problem.
    pub a1: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// `||A - C||_F` over both blocks at exit.
    pub primal_residual: f64,
    /// `rho ||C[k] - C[k-1]||_F` over both blocks at exit.
    pub dual_residual: f64,
    pub state: AdmmState,
}

fn soft_threshold_matrix(m: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
    m.map(|x| soft_threshold(x, alpha))
}

fn spd_inverse(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Numeric("ADMM system matrix is not positive definite".into()))
}

/// Runs ADMM from `state` (use [`AdmmState::zeros`] for a cold start).
pub fn solve(problem: &ElasticNetProblem, state: AdmmState, stop: AdmmStopping) -> Result<AdmmOutcome> {
    let n = problem.n();
    if state.n() != n {
        return Err(Error::Shape("warm-start state has the wrong size".into()));
    }
    let rho = problem.rho;
    let shift = problem.l2 + rho + problem.beta();
    let ident = DMatrix::<f64>::identity(n, n);
    let k0_inv = spd_inverse(&problem.gram + shift * &ident)?;
    let k1_inv = match &problem.lagged {
        Some((lag_gram, _)) => Some(spd_inverse(lag_gram + shift * &ident)?),
        None => None,
    };
    let threshold = problem.l1 / rho;

    let AdmmState { mut a0, mut c0, mut dual0, mut a1, mut c1, mut dual1 } = state;
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    for k in 1..=stop.max_iter.max(1) {
        iterations = k;
        let mut rhs0 = &problem.gram - &dual0 + rho * &c0;
        if let Some((_, cross)) = &problem.lagged {
            rhs0 -= &a1 * cross.transpose();
        }
        if let Some(p) = &problem.prox {
            rhs0 += p.beta * &p.a0;
        }
        a0 = rhs0 * &k0_inv;

        if let (Some((_, cross)), Some(k1_inv)) = (&problem.lagged, &k1_inv) {
            let mut rhs1 = cross - &a0 * cross - &dual1 + rho * &c1;
            if let Some(p) = &problem.prox {
                rhs1 += p.beta * &p.a1;
            }
            a1 = rhs1 * k1_inv;
        }

        let mut c0_next = soft_threshold_matrix(&(&a0 + &dual0 / rho), threshold);
        c0_next.fill_diagonal(0.0);
        let c1_next = if problem.has_lag() {
            soft_threshold_matrix(&(&a1 + &dual1 / rho), threshold)
        } else {
            DMatrix::zeros(n, n)
        };

        dual0 += rho * (&a0 - &c0_next);
        if problem.has_lag() {
            dual1 += rho * (&a1 - &c1_next);
        }

        primal = ((&a0 - &c0_next).norm_squared() + (&a1 - &c1_next).norm_squared()).sqrt();
        dual = rho * ((&c0_next - &c0).norm_squared() + (&c1_next - &c1).norm_squared()).sqrt();
        c0 = c0_next;
        c1 = c1_next;

        if !primal.is_finite() || !dual.is_finite() {
            return Err(Error::Numeric("ADMM iterates diverged".into()));
        }
        if primal < stop.tol && dual < stop.tol {
            converged = true;
            break;
        }
    }

    Ok(AdmmOutcome {
        a0: c0.clone(),
        a1: c1.clone(),
        converged,
        iterations,
        primal_residual: primal,
        dual_residual: dual,
        state: AdmmState { a0, c0, dual0, a1, c1, dual1 },
    })
}
