//! Joint inference of an SEM topology and its graph signals (JISG).
//!
//! The estimator minimizes, over zero-diagonal `A` and all signals,
//!
//! ```text
//! sum_t ||s(t) - A s(t)||^2 + sum_t mu/M(t) ||y(t) - M(t) s(t)||^2
//!     + lambda1 ||A||_1 + lambda2 ||A||_F^2
//! ```
//!
//! by block coordinate descent. The topology block is solved with the
//! elastic-net ADMM of [`crate::admm`]; the signal block decouples across
//! slots and each slot is solved by gradient descent with Armijo
//! backtracking. Slots without samples drop the fit term.
//!
//! The ADMM works on the objective divided by two, so the `l1` weight it
//! receives is `lambda1 / 2` while the ridge weight stays `lambda2`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{self, AdmmState, AdmmStopping, ElasticNetProblem};
use crate::error::{Error, Result};
use crate::graphmodel::{ObservationSet, SignalMatrix, TopologyMatrix};

/// Armijo backtracking parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmijoParams {
    pub initial_step: f64,
    pub backtrack: f64,
    pub sufficient_decrease: f64,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        Self { initial_step: 1.0, backtrack: 0.5, sufficient_decrease: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SemConfig {
    pub mu: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub rho: f64,
    pub gd: ArmijoParams,
    pub tol_outer: f64,
    pub tol_inner: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub max_admm: usize,
    pub seed: u64,
}

impl Default for SemConfig {
    fn default() -> Self {
        Self {
            mu: 1e4,
            lambda1: 0.5,
            lambda2: 0.1,
            rho: 1.0,
            gd: ArmijoParams::default(),
            tol_outer: 1e-6,
            tol_inner: 1e-6,
            max_outer: 100,
            max_inner: 500,
            max_admm: 1000,
            seed: 0,
        }
    }
}

impl SemConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.mu >= 0.0 && self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return bad("mu, lambda1 and lambda2 must be >= 0");
        }
        if !(self.rho > 0.0) {
            return bad("rho must be > 0");
        }
        if !(self.tol_outer > 0.0 && self.tol_inner > 0.0) {
            return bad("tolerances must be > 0");
        }
        if self.max_outer == 0 || self.max_inner == 0 || self.max_admm == 0 {
            return bad("iteration caps must be >= 1");
        }
        let gd = &self.gd;
        if !(gd.initial_step > 0.0
            && gd.backtrack > 0.0
            && gd.backtrack < 1.0
            && gd.sufficient_decrease > 0.0
            && gd.sufficient_decrease < 1.0)
        {
            return bad("Armijo parameters need step > 0 and backtrack, decrease in (0, 1)");
        }
        Ok(())
    }

    pub(crate) fn admm_stopping(&self) -> AdmmStopping {
        AdmmStopping { tol: self.tol_inner, max_iter: self.max_admm }
    }
}

#[derive(Debug, Clone)]
pub struct JisgResult {
    pub adjacency: TopologyMatrix,
    pub signals: SignalMatrix,
    /// Objective after initialization followed by one value per outer iteration.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// False if any topology solve stopped at the ADMM iteration cap.
    pub admm_converged: bool,
}

/// Topology estimate from one ADMM run.
#[derive(Debug, Clone)]
pub struct TopologyFit {
    pub adjacency: TopologyMatrix,
    pub converged: bool,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

/// Per-slot signal estimates and descent diagnostics.
#[derive(Debug, Clone)]
pub struct SignalFit {
    pub signals: SignalMatrix,
    pub iterations: Vec<usize>,
    /// Gradient norm at exit, per slot.
    pub gradient_norms: Vec<f64>,
    /// Slots that stopped at `max_inner`.
    pub hit_cap: Vec<bool>,
}

fn check_shapes(adj: &TopologyMatrix, signals: &SignalMatrix, obs: &ObservationSet) -> Result<()> {
    if adj.n() != signals.n() || obs.n() != signals.n() || obs.num_slots() != signals.slots() {
        return Err(Error::Shape(format!(
            "adjacency is {n}x{n}, signals {}x{}, observations {}x{}",
            signals.n(),
            signals.slots(),
            obs.n(),
            obs.num_slots(),
            n = adj.n()
        )));
    }
    Ok(())
}

fn l1_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x.abs()).sum()
}

/// Value of the joint SEM objective.
pub fn sem_objective(
    adj: &TopologyMatrix,
    signals: &SignalMatrix,
    obs: &ObservationSet,
    cfg: &SemConfig,
) -> Result<f64> {
    check_shapes(adj, signals, obs)?;
    let a = adj.entries();
    let s = signals.values();
    let model = (s - a * s).norm_squared();
    let mut fit = 0.0;
    for t in 0..obs.num_slots() {
        let idx = obs.indices(t);
        if idx.is_empty() {
            continue;
        }
        let y = obs.values(t);
        let err: f64 = idx.iter().zip(y.iter()).map(|(&i, &v)| (v - s[(i, t)]).powi(2)).sum();
        fit += cfg.mu / idx.len() as f64 * err;
    }
    Ok(model + fit + cfg.lambda1 * l1_norm(a) + cfg.lambda2 * a.norm_squared())
}

/// Weight on the model term of the per-slot problem: `M(t)/mu`, or one for an
/// unsampled slot.
fn model_weight(samples: usize, mu: f64) -> Result<f64> {
    if samples == 0 {
        Ok(1.0)
    } else if mu == 0.0 {
        Err(Error::InvalidConfig("mu = 0 leaves the per-slot problem undefined".into()))
    } else {
        Ok(samples as f64 / mu)
    }
}

/// Per-slot objective `M/mu ||(I - A) s||^2 + ||y - M s||^2` and its exact
/// gradient `2 M/mu (I - A)^T (I - A) s + 2 (M^T M s - M^T y)`.
///
/// For an unsampled slot the value is `||(I - A) s||^2`.
pub fn signal_objective_grad(
    adj: &TopologyMatrix,
    s: &DVector<f64>,
    y: &DVector<f64>,
    sample_set: &[usize],
    cfg: &SemConfig,
) -> Result<(f64, DVector<f64>)> {
    let n = adj.n();
    if s.len() != n || y.len() != sample_set.len() || sample_set.iter().any(|&i| i >= n) {
        return Err(Error::Shape("signal, observation and sample set disagree".into()));
    }
    let c = model_weight(sample_set.len(), cfg.mu)?;
    let b = DMatrix::identity(n, n) - adj.entries();
    let r = &b * s;
    let mut value = c * r.norm_squared();
    let mut grad = 2.0 * c * b.tr_mul(&r);
    for (k, &i) in sample_set.iter().enumerate() {
        let e = s[i] - y[k];
        value += e * e;
        grad[i] += 2.0 * e;
    }
    Ok((value, grad))
}

struct SlotDescent<'a> {
    b: &'a DMatrix<f64>,
    idx: &'a [usize],
    y: &'a DVector<f64>,
    c: f64,
}

impl SlotDescent<'_> {
    fn value_from_residual(&self, r: &DVector<f64>, s: &DVector<f64>) -> f64 {
        let fit: f64 = self.idx.iter().zip(self.y.iter()).map(|(&i, &v)| (s[i] - v).powi(2)).sum();
        self.c * r.norm_squared() + fit
    }

    fn gradient(&self, r: &DVector<f64>, s: &DVector<f64>) -> DVector<f64> {
        let mut g = 2.0 * self.c * self.b.tr_mul(r);
        for (k, &i) in self.idx.iter().enumerate() {
            g[i] += 2.0 * (s[i] - self.y[k]);
        }
        g
    }

    /// Armijo-backtracked gradient descent from `s`. The objective is
    /// quadratic, so trial values along `-g` are evaluated in closed form
    /// from `(I - A) g`.
    fn run(&self, mut s: DVector<f64>, cfg: &SemConfig) -> Result<(DVector<f64>, usize, f64, bool)> {
        let gd = cfg.gd;
        let target = cfg.tol_inner * (1.0 + self.y.norm());
        let mut r = self.b * &s;
        let mut f = self.value_from_residual(&r, &s);
        let mut g = self.gradient(&r, &s);
        let mut iterations = 0;
        loop {
            let gnorm2 = g.norm_squared();
            if !f.is_finite() || !gnorm2.is_finite() {
                return Err(Error::Numeric("signal objective is not finite".into()));
            }
            if gnorm2.sqrt() <= target {
                return Ok((s, iterations, gnorm2.sqrt(), false));
            }
            if iterations == cfg.max_inner {
                return Ok((s, iterations, gnorm2.sqrt(), true));
            }
            let bg = self.b * &g;
            let g_obs: f64 = self.idx.iter().map(|&i| g[i] * g[i]).sum();
            let curvature = self.c * bg.norm_squared() + g_obs;
            let mut step = gd.initial_step;
            let mut accepted = false;
            while step > 1e-300 {
                // f(s - step g) = f - step |g|^2 + step^2 curvature, so the
                // sufficient-decrease test reduces to a comparison of the
                // two increments.
                if step * curvature <= (1.0 - gd.sufficient_decrease) * gnorm2 {
                    accepted = true;
                    break;
                }
                step *= gd.backtrack;
            }
            if !accepted {
                // No representable step decreases the objective.
                return Ok((s, iterations, gnorm2.sqrt(), false));
            }
            s.axpy(-step, &g, 1.0);
            iterations += 1;
            if iterations % 64 == 0 {
                r = self.b * &s;
            } else {
                r.axpy(-step, &bg, 1.0);
            }
            f = self.value_from_residual(&r, &s);
            g = self.gradient(&r, &s);
        }
    }
}

/// Signal block update: per-slot gradient descent given the topology.
///
/// Slots start from `warm` when given, otherwise from `M(t)^T y(t)`. A slot
/// stops once its gradient norm is at most `tol_inner * (1 + ||y(t)||)`, when
/// backtracking can no longer decrease the objective, or at `max_inner`.
pub fn infer_signals(
    adj: &TopologyMatrix,
    obs: &ObservationSet,
    cfg: &SemConfig,
    warm: Option<&SignalMatrix>,
) -> Result<SignalFit> {
    cfg.validate()?;
    let n = adj.n();
    if obs.n() != n {
        return Err(Error::Shape("observations and adjacency disagree on N".into()));
    }
    if let Some(w) = warm {
        if w.n() != n || w.slots() != obs.num_slots() {
            return Err(Error::Shape("warm start has the wrong shape".into()));
        }
    }
    let b = DMatrix::identity(n, n) - adj.entries();
    let results: Vec<_> = (0..obs.num_slots())
        .into_par_iter()
        .map(|t| {
            let idx = obs.indices(t);
            let c = model_weight(idx.len(), cfg.mu)?;
            let slot = SlotDescent { b: &b, idx, y: obs.values(t), c };
            let start = match warm {
                Some(w) => w.column(t).into_owned(),
                None => obs.scatter(t),
            };
            slot.run(start, cfg)
        })
        .collect::<Result<_>>()?;

    let mut values = DMatrix::zeros(n, obs.num_slots());
    let mut iterations = Vec::with_capacity(results.len());
    let mut gradient_norms = Vec::with_capacity(results.len());
    let mut hit_cap = Vec::with_capacity(results.len());
    for (t, (s, it, gn, cap)) in results.into_iter().enumerate() {
        values.set_column(t, &s);
        iterations.push(it);
        gradient_norms.push(gn);
        hit_cap.push(cap);
    }
    Ok(SignalFit { signals: SignalMatrix::new(values)?, iterations, gradient_norms, hit_cap })
}

fn sem_problem(signals: &SignalMatrix, cfg: &SemConfig) -> Result<ElasticNetProblem> {
    ElasticNetProblem::contemporaneous(signals.values(), cfg.lambda1 / 2.0, cfg.lambda2, cfg.rho)
}

fn topology_from_state(
    signals: &SignalMatrix,
    cfg: &SemConfig,
    state: AdmmState,
) -> Result<(TopologyFit, AdmmState)> {
    let problem = sem_problem(signals, cfg)?;
    let out = admm::solve(&problem, state, cfg.admm_stopping())?;
    let fit = TopologyFit {
        adjacency: TopologyMatrix::new(out.a0, true)?,
        converged: out.converged,
        iterations: out.iterations,
        primal_residual: out.primal_residual,
        dual_residual: out.dual_residual,
    };
    Ok((fit, out.state))
}

/// Topology block update: elastic-net SEM fit to fixed signals, by ADMM from
/// a cold start.
pub fn topology_admm_sem(signals: &SignalMatrix, cfg: &SemConfig) -> Result<TopologyFit> {
    cfg.validate()?;
    topology_from_state(signals, cfg, AdmmState::zeros(signals.n())).map(|(fit, _)| fit)
}

/// Optimality violation of `adj` for the topology subproblem on `signals`,
/// measured on the off-diagonal entries.
pub fn sem_kkt_residual(adj: &TopologyMatrix, signals: &SignalMatrix, cfg: &SemConfig) -> Result<f64> {
    let problem = sem_problem(signals, cfg)?;
    Ok(problem.kkt_residual(adj.entries(), None))
}

pub(crate) fn relative_change(prev: f64, next: f64) -> f64 {
    let scale = prev.abs().max(next.abs());
    if scale == 0.0 {
        0.0
    } else {
        (prev - next).abs() / scale
    }
}

/// Block coordinate descent over topology and signals.
///
/// Starts from `s(t) = M(t)^T y(t)` and `A = 0`, then alternates a topology
/// update and a signal update until the relative change of the objective
/// drops below `tol_outer`. A block update is kept only if it does not
/// increase the objective, so the trace is nonincreasing.
pub fn jisg(obs: &ObservationSet, cfg: &SemConfig) -> Result<JisgResult> {
    cfg.validate()?;
    let n = obs.n();
    let mut signals = SignalMatrix::new(obs.scatter_all())?;
    let mut adjacency = TopologyMatrix::zeros(n, true);
    let mut objective = sem_objective(&adjacency, &signals, obs, cfg)?;
    let mut trace = vec![objective];
    let mut state = AdmmState::zeros(n);
    let mut admm_converged = true;
    let mut converged = false;
    let mut iterations = 0;

    for k in 1..=cfg.max_outer {
        iterations = k;
        let previous = objective;

        let (fit, next_state) = topology_from_state(&signals, cfg, state)?;
        state = next_state;
        admm_converged &= fit.converged;
        let candidate = sem_objective(&fit.adjacency, &signals, obs, cfg)?;
        if candidate <= objective {
            adjacency = fit.adjacency;
            objective = candidate;
        }

        let signal_fit = infer_signals(&adjacency, obs, cfg, Some(&signals))?;
        let candidate = sem_objective(&adjacency, &signal_fit.signals, obs, cfg)?;
        if candidate <= objective {
            signals = signal_fit.signals;
            objective = candidate;
        }

        trace.push(objective);
        if relative_change(previous, objective) < cfg.tol_outer {
            converged = true;
            break;
        }
    }

    Ok(JisgResult { adjacency, signals, objective_trace: trace, converged, iterations, admm_converged })
}
