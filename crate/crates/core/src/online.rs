//! Fixed-lag tracking of time-varying SVARM topologies.
//!
//! At every new slot the tracker solves the batch problem restricted to a
//! window of the last `lag` observed slots. The state just before the window
//! enters through a Gaussian prior `(x_{t|t}, P_{t|t})` kept by a Kalman
//! filter, and the topologies are pulled toward the previous step's
//! estimates by `beta (||A0 - A0_prev||_F^2 + ||A1 - A1_prev||_F^2)`.
//!
//! Until `lag` slots have arrived the window is shorter and the step is
//! reported as warm-up. Once the window is full, the filter anchor advances
//! by one prediction and correction under the newest topologies and the
//! oldest slot leaves the window.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::admm::ProximalPull;
use crate::error::{Error, Result};
use crate::graphmodel::{ObservationSet, SamplingSchedule, TopologyMatrix};
use crate::svarm::{kf_correct, kf_predict, reformulate, solve_window, SvarmConfig, Window};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    #[serde(flatten)]
    pub svarm: SvarmConfig,
    /// Window length in slots.
    pub lag: usize,
    pub beta: f64,
    /// Outer iteration cap per step.
    pub max_bcd: usize,
    /// Relative objective change that ends a step.
    pub tol_bcd: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self { svarm: SvarmConfig::default(), lag: 5, beta: 0.1, max_bcd: 10, tol_bcd: 1e-5 }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        self.svarm.validate()?;
        if self.lag == 0 {
            return Err(Error::InvalidConfig("lag must be >= 1".into()));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::InvalidConfig("beta must be >= 0".into()));
        }
        if self.max_bcd == 0 || !(self.tol_bcd > 0.0) {
            return Err(Error::InvalidConfig("max_bcd must be >= 1 and tol_bcd > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrackerState {
    /// `x_{t|t}` for the slot just before the window.
    pub anchor_mean: DVector<f64>,
    /// `P_{t|t}` for the slot just before the window.
    pub anchor_cov: DMatrix<f64>,
    pub a0: TopologyMatrix,
    pub a1: TopologyMatrix,
    buffer: VecDeque<(Vec<usize>, DVector<f64>)>,
    /// Slot index of the anchor.
    pub anchor_time: usize,
    /// Number of slots consumed so far.
    pub time: usize,
}

impl TrackerState {
    pub fn n(&self) -> usize {
        self.anchor_mean.len()
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    /// Replaces the previous-step topologies that the next step is pulled
    /// toward.
    pub fn seed_topologies(&mut self, a0: TopologyMatrix, a1: TopologyMatrix) -> Result<()> {
        let n = self.n();
        if a0.n() != n || a1.n() != n {
            return Err(Error::Shape("seed topologies have the wrong size".into()));
        }
        self.a0 = TopologyMatrix::with_zeroed_diagonal(a0.into_entries())?;
        self.a1 = a1;
        Ok(())
    }
}

/// Anchor `(z0, I)`, zero topologies, empty window.
pub fn tracker_init(z0: &DVector<f64>, cfg: &TrackerConfig) -> Result<TrackerState> {
    cfg.validate()?;
    if z0.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("z0 must be finite".into()));
    }
    let n = z0.len();
    Ok(TrackerState {
        anchor_mean: z0.clone(),
        anchor_cov: DMatrix::identity(n, n),
        a0: TopologyMatrix::zeros(n, true),
        a1: TopologyMatrix::zeros(n, false),
        buffer: VecDeque::with_capacity(cfg.lag),
        anchor_time: 0,
        time: 0,
    })
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    /// Slot index of the newest observation.
    pub time: usize,
    pub a0: TopologyMatrix,
    pub a1: TopologyMatrix,
    /// Smoothed states for slots `window_start..=time`.
    pub window_signals: DMatrix<f64>,
    pub window_start: usize,
    /// True while the window holds fewer than `lag` slots.
    pub warm_up: bool,
    /// Windowed objective after each BCD iteration, starting value first.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

impl StepOutput {
    /// Estimate of the newest slot given everything seen so far.
    pub fn latest(&self) -> DVector<f64> {
        self.window_signals.column(self.window_signals.ncols() - 1).into_owned()
    }

    /// Estimate of the oldest slot in the window, which has seen `lag` later
    /// observations once warm-up is over.
    pub fn delayed(&self) -> DVector<f64> {
        self.window_signals.column(0).into_owned()
    }
}

/// Consumes the observation `y` at nodes `indices` (0-based, increasing) for
/// the next slot and re-solves the window.
pub fn tracker_step(
    state: &mut TrackerState,
    cfg: &TrackerConfig,
    indices: &[usize],
    y: &DVector<f64>,
) -> Result<StepOutput> {
    let n = state.n();
    // Validates the slot before it touches the state.
    let probe = SamplingSchedule::new(n, vec![indices.to_vec()])?;
    ObservationSet::new(probe, vec![y.clone()])?;

    state.buffer.push_back((indices.to_vec(), y.clone()));
    state.time += 1;
    let schedule = SamplingSchedule::new(n, state.buffer.iter().map(|(i, _)| i.clone()).collect())?;
    let obs = ObservationSet::new(schedule, state.buffer.iter().map(|(_, v)| v.clone()).collect())?;

    let pull = (cfg.beta > 0.0).then(|| ProximalPull {
        beta: cfg.beta,
        a0: state.a0.entries().clone(),
        a1: state.a1.entries().clone(),
    });
    let window = Window::new(&obs, state.anchor_mean.clone(), state.anchor_cov.clone(), pull)?;
    let fit = match solve_window(&window, &cfg.svarm.sem, cfg.max_bcd, cfg.tol_bcd) {
        Ok(fit) => fit,
        Err(e) => {
            state.buffer.pop_back();
            state.time -= 1;
            return Err(e);
        }
    };

    let warm_up = state.buffer.len() < cfg.lag;
    let output = StepOutput {
        time: state.time,
        a0: fit.a0.clone(),
        a1: fit.a1.clone(),
        window_signals: fit.signals,
        window_start: state.anchor_time,
        warm_up,
        objective_trace: fit.objective_trace,
        converged: fit.converged,
    };

    if !warm_up {
        let ssf = reformulate(&fit.a0, &fit.a1)?;
        let (idx, y_front) = state.buffer.pop_front().expect("window is full");
        let (xp, pp) = kf_predict(&ssf, &state.anchor_mean, &state.anchor_cov);
        let (xf, pf) = kf_correct(&xp, &pp, &idx, &y_front, cfg.svarm.sem.mu, state.anchor_time + 1)?;
        state.anchor_mean = xf;
        state.anchor_cov = pf;
        state.anchor_time += 1;
    }
    state.a0 = fit.a0;
    state.a1 = fit.a1;
    Ok(output)
}

/// Folds [`tracker_step`] over a stream of `(indices, y)` slots.
pub fn run_online<I>(stream: I, z0: &DVector<f64>, cfg: &TrackerConfig) -> Result<Vec<StepOutput>>
where
    I: IntoIterator<Item = (Vec<usize>, DVector<f64>)>,
{
    let mut state = tracker_init(z0, cfg)?;
    stream
        .into_iter()
        .map(|(idx, y)| tracker_step(&mut state, cfg, &idx, &y))
        .collect()
}
