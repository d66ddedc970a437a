//! Joint inference of SVARM topologies and the state trajectory (JISGoT).
//!
//! The model is `s(t) = A0 s(t) + A1 s(t-1) + e(t)` with a known prior mean
//! `z0` for `s(0)`. The estimator minimizes
//!
//! ```text
//! sum_{t=1..T} ||s(t) - A0 s(t) - A1 s(t-1)||^2 + ||s(0) - z0||^2
//!     + sum_{t=1..T} mu/M(t) ||y(t) - M(t) s(t)||^2 + R(A0) + R(A1)
//! ```
//!
//! with `R(A) = 2 lambda1 ||A||_1 + lambda2 ||A||_F^2` and zero-diagonal
//! `A0`. Given the topologies the trajectory problem is a linear-Gaussian
//! smoothing problem with transition `(I - A0)^{-1} A1`, state covariance
//! `((I - A0)^T (I - A0))^{-1}` and measurement covariance `M(t)/mu I`, so it
//! is solved exactly by a Kalman filter and an RTS backward pass. Given the
//! trajectory the topologies come from the two-block ADMM of
//! [`crate::admm`], which works on the objective divided by two: its `l1`
//! weight is `lambda1` and its ridge weight is `lambda2`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::admm::{self, AdmmState, ElasticNetProblem, ProximalPull};
use crate::error::{Error, Result};
use crate::graphmodel::{condition_number, ObservationSet, SignalMatrix, TopologyMatrix, MAX_CONDITION};
use crate::sem::{relative_change, SemConfig};

pub use crate::admm::soft_threshold;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvarmConfig {
    #[serde(flatten)]
    pub sem: SemConfig,
    /// Prior mean of `s(0)`; zeros when absent.
    pub z0: Option<Vec<f64>>,
}

impl Default for SvarmConfig {
    fn default() -> Self {
        Self { sem: SemConfig::default(), z0: None }
    }
}

impl SvarmConfig {
    pub fn validate(&self) -> Result<()> {
        self.sem.validate()?;
        if let Some(z0) = &self.z0 {
            if z0.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidConfig("z0 must be finite".into()));
            }
        }
        Ok(())
    }

    /// `z0` as a vector of length `n`.
    pub fn initial_state(&self, n: usize) -> Result<DVector<f64>> {
        match &self.z0 {
            None => Ok(DVector::zeros(n)),
            Some(z) if z.len() == n => Ok(DVector::from_column_slice(z)),
            Some(z) => Err(Error::Shape(format!("z0 has length {} for {n} nodes", z.len()))),
        }
    }
}

/// Linear-Gaussian form of the SVARM for fixed topologies.
#[derive(Debug, Clone)]
pub struct StateSpaceForm {
    /// `(I - A0)^{-1} A1`
    pub trans: DMatrix<f64>,
    /// `((I - A0)^T (I - A0))^{-1}`, symmetrized.
    pub state_cov: DMatrix<f64>,
}

impl StateSpaceForm {
    pub fn n(&self) -> usize {
        self.trans.nrows()
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

pub fn reformulate(a0: &TopologyMatrix, a1: &TopologyMatrix) -> Result<StateSpaceForm> {
    let n = a0.n();
    if a1.n() != n {
        return Err(Error::Shape("A0 and A1 differ in size".into()));
    }
    let b = DMatrix::identity(n, n) - a0.entries();
    let condition = condition_number(&b);
    if !(condition < MAX_CONDITION) {
        return Err(Error::SingularModel { condition });
    }
    let lu = b.clone().lu();
    let trans = lu
        .solve(a1.entries())
        .ok_or(Error::SingularModel { condition: f64::INFINITY })?;
    let mut state_cov = (b.transpose() * &b)
        .try_inverse()
        .ok_or(Error::SingularModel { condition: f64::INFINITY })?;
    symmetrize(&mut state_cov);
    Ok(StateSpaceForm { trans, state_cov })
}

/// Forward and backward pass quantities, indexed by slot `t = 0..=T`.
///
/// Entry 0 of the predicted sequences repeats the initial condition.
#[derive(Debug, Clone)]
pub struct SmootherState {
    pub filtered_means: Vec<DVector<f64>>,
    pub filtered_covs: Vec<DMatrix<f64>>,
    pub predicted_means: Vec<DVector<f64>>,
    pub predicted_covs: Vec<DMatrix<f64>>,
    pub smoothed_means: Vec<DVector<f64>>,
}

impl SmootherState {
    /// Smoothed means as an `N x (T+1)` matrix.
    pub fn smoothed_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&self.smoothed_means)
    }
}

/// Measurement update with noise covariance `M/mu I`. Leaves the prediction
/// unchanged when nothing is observed or `mu = 0`.
pub(crate) fn kf_correct(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    idx: &[usize],
    y: &DVector<f64>,
    mu: f64,
    slot: usize,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let m = idx.len();
    if m == 0 || mu == 0.0 {
        return Ok((mean.clone(), cov.clone()));
    }
    let n = mean.len();
    let r = m as f64 / mu;
    // M P, M P M^T + R
    let mp = DMatrix::from_fn(m, n, |k, j| cov[(idx[k], j)]);
    let mut innov = DMatrix::from_fn(m, m, |k, l| mp[(k, idx[l])]);
    for k in 0..m {
        innov[(k, k)] += r;
    }
    let chol = innov.cholesky().ok_or(Error::NotPositiveDefinite { slot })?;
    // K^T = S^{-1} M P
    let gain_t = chol.solve(&mp);
    let resid = DVector::from_fn(m, |k, _| y[k] - mean[idx[k]]);
    let next_mean = mean + gain_t.tr_mul(&resid);
    let mut next_cov = cov - gain_t.tr_mul(&mp);
    symmetrize(&mut next_cov);
    Ok((next_mean, next_cov))
}

pub(crate) fn kf_predict(ssf: &StateSpaceForm, mean: &DVector<f64>, cov: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let b = &ssf.trans;
    let mut p = b * cov * b.transpose() + &ssf.state_cov;
    symmetrize(&mut p);
    (b * mean, p)
}

/// `P_{t|t} B^T P_{t+1|t}^{-1}`, by solving with `P_{t+1|t}`. Falls back to
/// a pseudo-inverse when the predicted covariance is singular.
fn smoother_gain(ssf: &StateSpaceForm, filtered: &DMatrix<f64>, predicted: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let rhs = &ssf.trans * filtered;
    let solved = match predicted.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => {
            let n = predicted.nrows();
            let smax = predicted.singular_values().max();
            let tol = n as f64 * f64::EPSILON * smax;
            let pinv = predicted.clone().pseudo_inverse(tol).map_err(|e| Error::Numeric(e.to_string()))?;
            pinv * rhs
        }
    };
    Ok(solved.transpose())
}

fn check_smoother_inputs(ssf: &StateSpaceForm, init_mean: &DVector<f64>, init_cov: &DMatrix<f64>, obs: &ObservationSet) -> Result<()> {
    let n = ssf.n();
    if init_mean.len() != n || init_cov.shape() != (n, n) || obs.n() != n {
        return Err(Error::Shape("smoother inputs disagree on the node count".into()));
    }
    if init_cov.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite { slot: 0 });
    }
    Ok(())
}

/// Kalman filter over slots `1..=T` followed by the RTS backward pass down
/// to slot 0. Observation `t-1` of `obs` belongs to slot `t`.
pub fn rts_smooth(
    ssf: &StateSpaceForm,
    init_mean: &DVector<f64>,
    init_cov: &DMatrix<f64>,
    obs: &ObservationSet,
    mu: f64,
) -> Result<SmootherState> {
    check_smoother_inputs(ssf, init_mean, init_cov, obs)?;
    let horizon = obs.num_slots();
    let mut filtered_means = Vec::with_capacity(horizon + 1);
    let mut filtered_covs = Vec::with_capacity(horizon + 1);
    let mut predicted_means = Vec::with_capacity(horizon + 1);
    let mut predicted_covs = Vec::with_capacity(horizon + 1);
    filtered_means.push(init_mean.clone());
    filtered_covs.push(init_cov.clone());
    predicted_means.push(init_mean.clone());
    predicted_covs.push(init_cov.clone());

    for t in 1..=horizon {
        let (xp, pp) = kf_predict(ssf, &filtered_means[t - 1], &filtered_covs[t - 1]);
        let (xf, pf) = kf_correct(&xp, &pp, obs.indices(t - 1), obs.values(t - 1), mu, t)?;
        predicted_means.push(xp);
        predicted_covs.push(pp);
        filtered_means.push(xf);
        filtered_covs.push(pf);
    }

    let mut smoothed_means = filtered_means.clone();
    for t in (0..horizon).rev() {
        let gain = smoother_gain(ssf, &filtered_covs[t], &predicted_covs[t + 1])?;
        let correction = &gain * (&smoothed_means[t + 1] - &predicted_means[t + 1]);
        smoothed_means[t] = &filtered_means[t] + correction;
    }
    if smoothed_means.iter().any(|x| x.iter().any(|v| !v.is_finite())) {
        return Err(Error::Numeric("smoothed states are not finite".into()));
    }

    Ok(SmootherState { filtered_means, filtered_covs, predicted_means, predicted_covs, smoothed_means })
}

/// Solves the stacked weighted least-squares form of the trajectory problem
/// directly. The normal matrix is `(T+1)N` square, so this is only meant for
/// small instances.
pub fn dense_ls_oracle(
    ssf: &StateSpaceForm,
    z0: &DVector<f64>,
    obs: &ObservationSet,
    mu: f64,
) -> Result<SignalMatrix> {
    let n = ssf.n();
    if z0.len() != n || obs.n() != n {
        return Err(Error::Shape("oracle inputs disagree on the node count".into()));
    }
    let horizon = obs.num_slots();
    let dim = (horizon + 1) * n;
    let state_info = ssf
        .state_cov
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numeric("state covariance is singular".into()))?;
    let bt_info = ssf.trans.transpose() * &state_info;
    let bt_info_b = &bt_info * &ssf.trans;

    let mut h = DMatrix::<f64>::zeros(dim, dim);
    let mut g = DVector::<f64>::zeros(dim);
    // Prior block: ||s(0) - z0||^2.
    for i in 0..n {
        h[(i, i)] += 1.0;
    }
    g.rows_mut(0, n).copy_from(z0);
    // Transition blocks: ||s(t) - B s(t-1)||^2 weighted by Sigma^{-1}.
    for t in 1..=horizon {
        let (p, c) = ((t - 1) * n, t * n);
        let mut block = h.view_mut((p, p), (n, n));
        block += &bt_info_b;
        let mut block = h.view_mut((c, c), (n, n));
        block += &state_info;
        let mut block = h.view_mut((p, c), (n, n));
        block -= &bt_info;
        let mut block = h.view_mut((c, p), (n, n));
        block -= bt_info.transpose();
    }
    // Observation blocks weighted by mu / M(t).
    for t in 1..=horizon {
        let idx = obs.indices(t - 1);
        if idx.is_empty() {
            continue;
        }
        let w = mu / idx.len() as f64;
        for (k, &i) in idx.iter().enumerate() {
            h[(t * n + i, t * n + i)] += w;
            g[t * n + i] += w * obs.values(t - 1)[k];
        }
    }
    let x = h
        .cholesky()
        .ok_or_else(|| Error::Numeric("normal matrix is not positive definite".into()))?
        .solve(&g);
    let values = DMatrix::from_column_slice(n, horizon + 1, x.as_slice());
    SignalMatrix::with_initial_state(values, z0.clone())
}

/// Two-block topology estimate from one ADMM run.
#[derive(Debug, Clone)]
pub struct SvarmTopologyFit {
    pub a0: TopologyMatrix,
    pub a1: TopologyMatrix,
    pub converged: bool,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

pub(crate) fn svarm_problem(current: &DMatrix<f64>, lagged: &DMatrix<f64>, cfg: &SemConfig) -> Result<ElasticNetProblem> {
    ElasticNetProblem::with_lag(current, lagged, cfg.lambda1, cfg.lambda2, cfg.rho)
}

pub(crate) fn run_svarm_admm(
    problem: &ElasticNetProblem,
    cfg: &SemConfig,
    state: AdmmState,
) -> Result<(SvarmTopologyFit, AdmmState)> {
    let out = admm::solve(problem, state, cfg.admm_stopping())?;
    let fit = SvarmTopologyFit {
        a0: TopologyMatrix::new(out.a0, true)?,
        a1: TopologyMatrix::new(out.a1, false)?,
        converged: out.converged,
        iterations: out.iterations,
        primal_residual: out.primal_residual,
        dual_residual: out.dual_residual,
    };
    Ok((fit, out.state))
}

/// Topology block update: `sig_t` holds `s(1..T)`, `sig_tm1` holds
/// `s(0..T-1)`, both `N x T`.
pub fn topology_admm_svarm(
    sig_t: &SignalMatrix,
    sig_tm1: &SignalMatrix,
    cfg: &SvarmConfig,
) -> Result<SvarmTopologyFit> {
    cfg.validate()?;
    let problem = svarm_problem(sig_t.values(), sig_tm1.values(), &cfg.sem)?;
    run_svarm_admm(&problem, &cfg.sem, AdmmState::zeros(sig_t.n())).map(|(fit, _)| fit)
}

/// Optimality violation of `(a0, a1)` for the topology subproblem.
pub fn svarm_kkt_residual(
    a0: &TopologyMatrix,
    a1: &TopologyMatrix,
    sig_t: &SignalMatrix,
    sig_tm1: &SignalMatrix,
    cfg: &SvarmConfig,
) -> Result<f64> {
    let problem = svarm_problem(sig_t.values(), sig_tm1.values(), &cfg.sem)?;
    Ok(problem.kkt_residual(a0.entries(), Some(a1.entries())))
}

fn elastic_net(a: &DMatrix<f64>, cfg: &SemConfig) -> f64 {
    2.0 * cfg.lambda1 * a.iter().map(|x| x.abs()).sum::<f64>() + cfg.lambda2 * a.norm_squared()
}

/// A stretch of slots solved jointly: a Gaussian prior on the first state,
/// observations for the following slots and an optional pull toward earlier
/// topology estimates. The batch problem is the window with prior `(z0, I)`
/// and no pull.
pub(crate) struct Window<'a> {
    obs: &'a ObservationSet,
    prior_mean: DVector<f64>,
    prior_cov: DMatrix<f64>,
    prior_chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    pull: Option<ProximalPull>,
}

impl<'a> Window<'a> {
    pub(crate) fn new(
        obs: &'a ObservationSet,
        prior_mean: DVector<f64>,
        prior_cov: DMatrix<f64>,
        pull: Option<ProximalPull>,
    ) -> Result<Self> {
        let n = obs.n();
        if prior_mean.len() != n || prior_cov.shape() != (n, n) {
            return Err(Error::Shape("prior disagrees with the node count".into()));
        }
        let prior_chol = prior_cov.clone().cholesky().ok_or(Error::NotPositiveDefinite { slot: 0 })?;
        Ok(Self { obs, prior_mean, prior_cov, prior_chol, pull })
    }

    fn n(&self) -> usize {
        self.obs.n()
    }

    fn len(&self) -> usize {
        self.obs.num_slots()
    }

    pub(crate) fn objective(
        &self,
        a0: &TopologyMatrix,
        a1: &TopologyMatrix,
        signals: &DMatrix<f64>,
        cfg: &SemConfig,
    ) -> Result<f64> {
        let n = self.n();
        let len = self.len();
        if a0.n() != n || a1.n() != n || signals.shape() != (n, len + 1) {
            return Err(Error::Shape(format!(
                "signals are {}x{} for {len} observed slots on {n} nodes",
                signals.nrows(),
                signals.ncols()
            )));
        }
        let current = signals.columns(1, len);
        let lagged = signals.columns(0, len);
        let model = (current - a0.entries() * current - a1.entries() * lagged).norm_squared();
        let d = signals.column(0) - &self.prior_mean;
        let prior = d.dot(&self.prior_chol.solve(&d));
        let mut fit = 0.0;
        for t in 0..len {
            let idx = self.obs.indices(t);
            if idx.is_empty() {
                continue;
            }
            let err: f64 = idx
                .iter()
                .zip(self.obs.values(t).iter())
                .map(|(&i, &v)| (v - signals[(i, t + 1)]).powi(2))
                .sum();
            fit += cfg.mu / idx.len() as f64 * err;
        }
        let mut total = model + prior + fit + elastic_net(a0.entries(), cfg) + elastic_net(a1.entries(), cfg);
        if let Some(p) = &self.pull {
            total += p.beta * ((a0.entries() - &p.a0).norm_squared() + (a1.entries() - &p.a1).norm_squared());
        }
        Ok(total)
    }

    fn initial_signals(&self) -> DMatrix<f64> {
        initial_trajectory(self.obs, &self.prior_mean)
    }

    fn smooth(&self, a0: &TopologyMatrix, a1: &TopologyMatrix, mu: f64) -> Result<DMatrix<f64>> {
        let ssf = reformulate(a0, a1)?;
        let smoother = rts_smooth(&ssf, &self.prior_mean, &self.prior_cov, self.obs, mu)?;
        Ok(smoother.smoothed_matrix())
    }
}

/// Value of the joint SVARM objective. `signals` has `T+1` columns, slot 0
/// first; `obs` has `T` slots.
pub fn svarm_objective(
    a0: &TopologyMatrix,
    a1: &TopologyMatrix,
    signals: &SignalMatrix,
    obs: &ObservationSet,
    cfg: &SvarmConfig,
) -> Result<f64> {
    let n = obs.n();
    let window = Window::new(obs, cfg.initial_state(n)?, DMatrix::identity(n, n), None)?;
    window.objective(a0, a1, signals.values(), &cfg.sem)
}

#[derive(Debug, Clone)]
pub struct JisgotResult {
    pub a0: TopologyMatrix,
    pub a1: TopologyMatrix,
    /// Smoothed trajectory over `t = 0..=T`.
    pub signals: SignalMatrix,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub admm_converged: bool,
    /// Number of outer iterations where `A0` had to be shrunk to keep
    /// `I - A0` well conditioned.
    pub guard_activations: usize,
}

/// Shrinks `a0` toward zero by 0.9 up to 20 times until `I - a0` is well
/// conditioned. Returns whether any shrinking happened.
pub(crate) fn guard_invertible(a0: TopologyMatrix) -> Result<(TopologyMatrix, bool)> {
    let n = a0.n();
    let ident = DMatrix::<f64>::identity(n, n);
    let mut entries = a0.into_entries();
    let mut shrunk = false;
    for _ in 0..=20 {
        let condition = condition_number(&(&ident - &entries));
        if condition < MAX_CONDITION {
            return Ok((TopologyMatrix::new(entries, true)?, shrunk));
        }
        entries *= 0.9;
        shrunk = true;
    }
    let condition = condition_number(&(&ident - &entries));
    Err(Error::SingularModel { condition })
}

/// Smoothed trajectory for fixed topologies, started from `(z0, I)`.
pub fn infer_trajectory(
    a0: &TopologyMatrix,
    a1: &TopologyMatrix,
    obs: &ObservationSet,
    z0: &DVector<f64>,
    mu: f64,
) -> Result<SignalMatrix> {
    let ssf = reformulate(a0, a1)?;
    let n = ssf.n();
    let smoother = rts_smooth(&ssf, z0, &DMatrix::identity(n, n), obs, mu)?;
    SignalMatrix::with_initial_state(smoother.smoothed_matrix(), z0.clone())
}

pub(crate) fn initial_trajectory(obs: &ObservationSet, z0: &DVector<f64>) -> DMatrix<f64> {
    let n = obs.n();
    let horizon = obs.num_slots();
    let mut values = DMatrix::zeros(n, horizon + 1);
    values.set_column(0, z0);
    for t in 0..horizon {
        values.set_column(t + 1, &obs.scatter(t));
    }
    values
}

pub(crate) struct WindowFit {
    pub a0: TopologyMatrix,
    pub a1: TopologyMatrix,
    pub signals: DMatrix<f64>,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub admm_converged: bool,
    pub guard_activations: usize,
}

/// Block coordinate descent on a window: ADMM topology update, then the
/// smoother. Updates that would raise the objective are discarded.
pub(crate) fn solve_window(window: &Window<'_>, cfg: &SemConfig, max_outer: usize, tol_outer: f64) -> Result<WindowFit> {
    let n = window.n();
    let len = window.len();
    let mut signals = window.initial_signals();
    let mut a0 = TopologyMatrix::zeros(n, true);
    let mut a1 = TopologyMatrix::zeros(n, false);
    let mut objective = window.objective(&a0, &a1, &signals, cfg)?;
    let mut trace = vec![objective];
    let mut state = AdmmState::zeros(n);
    let mut admm_converged = true;
    let mut guard_activations = 0;
    let mut converged = false;
    let mut iterations = 0;

    for k in 1..=max_outer {
        iterations = k;
        let previous = objective;

        let mut problem = svarm_problem(
            &signals.columns(1, len).into_owned(),
            &signals.columns(0, len).into_owned(),
            cfg,
        )?;
        if let Some(pull) = &window.pull {
            problem = problem.with_proximal_pull(pull.clone())?;
        }
        let (fit, next_state) = run_svarm_admm(&problem, cfg, state)?;
        state = next_state;
        admm_converged &= fit.converged;
        let (cand_a0, shrunk) = guard_invertible(fit.a0)?;
        guard_activations += usize::from(shrunk);
        let candidate = window.objective(&cand_a0, &fit.a1, &signals, cfg)?;
        if candidate <= objective {
            a0 = cand_a0;
            a1 = fit.a1;
            objective = candidate;
        }

        let smoothed = window.smooth(&a0, &a1, cfg.mu)?;
        let candidate = window.objective(&a0, &a1, &smoothed, cfg)?;
        if candidate <= objective {
            signals = smoothed;
            objective = candidate;
        }

        trace.push(objective);
        if relative_change(previous, objective) < tol_outer {
            converged = true;
            break;
        }
    }

    Ok(WindowFit {
        a0,
        a1,
        signals,
        objective_trace: trace,
        converged,
        iterations,
        admm_converged,
        guard_activations,
    })
}

/// Block coordinate descent over `(A0, A1)` and the trajectory.
///
/// Starts from `s(t) = M(t)^T y(t)` with `s(0) = z0` and zero topologies.
/// Each outer iteration runs the ADMM topology update and then the RTS
/// smoother from `(z0, I)`. As in [`crate::sem::jisg`], an update that would
/// increase the objective is discarded, so the trace is nonincreasing.
pub fn jisgot(obs: &ObservationSet, cfg: &SvarmConfig) -> Result<JisgotResult> {
    cfg.validate()?;
    if obs.num_slots() == 0 {
        return Err(Error::InvalidArgument("at least one observed slot is required".into()));
    }
    let n = obs.n();
    let z0 = cfg.initial_state(n)?;
    let window = Window::new(obs, z0.clone(), DMatrix::identity(n, n), None)?;
    let fit = solve_window(&window, &cfg.sem, cfg.sem.max_outer, cfg.sem.tol_outer)?;
    Ok(JisgotResult {
        a0: fit.a0,
        a1: fit.a1,
        signals: SignalMatrix::with_initial_state(fit.signals, z0)?,
        objective_trace: fit.objective_trace,
        converged: fit.converged,
        iterations: fit.iterations,
        admm_converged: fit.admm_converged,
        guard_activations: fit.guard_activations,
    })
}

/// Single-lag form of a multi-lag SVARM.
///
/// The stacked state is `[s(t); s(t-1); ..; s(t-X+1)]`. The contemporaneous
/// block `A0` sits in the top-left corner of the first matrix; the lag
/// matrices fill the top block-row of the second, whose sub-diagonal
/// identity blocks shift the older states down by one position.
pub fn stack_multilag(a0: &TopologyMatrix, lags: &[TopologyMatrix]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a0.n();
    let depth = lags.len();
    if depth == 0 {
        return Err(Error::InvalidArgument("at least one lag matrix is required".into()));
    }
    if lags.iter().any(|a| a.n() != n) {
        return Err(Error::Shape("all blocks must be N x N".into()));
    }
    let dim = depth * n;
    let mut ext0 = DMatrix::zeros(dim, dim);
    ext0.view_mut((0, 0), (n, n)).copy_from(a0.entries());
    let mut ext1 = DMatrix::zeros(dim, dim);
    for (xi, a) in lags.iter().enumerate() {
        ext1.view_mut((0, xi * n), (n, n)).copy_from(a.entries());
    }
    for i in 1..depth {
        ext1.view_mut((i * n, (i - 1) * n), (n, n)).fill_with_identity();
    }
    Ok((ext0, ext1))
}
