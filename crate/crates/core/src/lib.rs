//! Semi-blind inference of directed network topologies and the processes
//! that evolve over them.
//!
//! Observations are taken at a subset of nodes per slot. The crate estimates
//! both the adjacency matrices and the full nodal signals:
//!
//! - [`sem`] fits a structural equation model `s = A s + e` by block
//!   coordinate descent (topology by ADMM, signals by gradient descent).
//! - [`svarm`] fits a structural vector autoregression
//!   `s(t) = A0 s(t) + A1 s(t-1) + e(t)`, reconstructing the trajectory with
//!   a Kalman/RTS smoother between topology updates.
//! - [`online`] tracks time-varying topologies with a fixed-lag window.
//! - [`ident`] checks the Kruskal-rank identifiability conditions and
//!   recovers sparse topologies from noiseless data by enumeration.
//! - [`evalkit`] holds the error metrics, a bandlimited reconstruction
//!   baseline, and the synthetic Kronecker benchmark.
//!
//! ```
//! use semiblind::graphmodel::{random_schedule, sample_observations, sem_synthesize,
//!     NoiseSpec, TopologyMatrix};
//! use semiblind::rng::seeded;
//! use semiblind::sem::{jisg, SemConfig};
//! use nalgebra::DMatrix;
//!
//! let mut a = DMatrix::zeros(4, 4);
//! a[(0, 1)] = 0.4;
//! a[(2, 3)] = -0.3;
//! let a = TopologyMatrix::new(a, true)?;
//! let noise = NoiseSpec::new(1.0, 0.0, 7)?;
//! let signals = sem_synthesize(&a, &noise, 20)?;
//! let schedule = random_schedule(4, 3, 20, &mut seeded(1))?;
//! let obs = sample_observations(&signals, &schedule, &noise, &mut seeded(2))?;
//!
//! let fit = jisg(&obs, &SemConfig::default())?;
//! assert!(fit.objective_trace.last() <= fit.objective_trace.first());
//! # Ok::<(), semiblind::Error>(())
//! ```

pub mod admm;
pub mod error;
pub mod evalkit;
pub mod graphmodel;
pub mod ident;
pub mod io;
pub mod online;
pub mod rng;
pub mod sem;
pub mod svarm;

pub use error::{Error, Result};
pub use graphmodel::{
    KroneckerSpec, NoiseSpec, ObservationSet, SamplingSchedule, SignalMatrix, TopologyMatrix,
};

// The guide under book/ is compiled as doctests so its snippets stay current.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/jisg.md")]
    mod jisg {}
    #[doc = include_str!("../../../book/src/jisgot.md")]
    mod jisgot {}
    #[doc = include_str!("../../../book/src/online.md")]
    mod online {}
    #[doc = include_str!("../../../book/src/identifiability.md")]
    mod identifiability {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
