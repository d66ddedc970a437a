//! Error metrics, the bandlimited reconstruction baseline and the synthetic
//! Kronecker benchmark.

use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphmodel::{
    bandlimited_signals, kronecker_expand, laplacian, low_frequency_basis, random_schedule, sample_adjacency,
    sample_observations, KroneckerSpec, NoiseSpec, ObservationSet, SignalMatrix, TopologyMatrix,
};
use crate::io::format_f64;
use crate::rng::{gaussian, seeded, SeededRng};
use crate::sem::{jisg, topology_admm_sem, SemConfig};

/// Percentage of off-diagonal positions where the two supports differ.
pub fn eier(support_true: &DMatrix<bool>, support_est: &DMatrix<bool>) -> Result<f64> {
    if support_true.shape() != support_est.shape() || !support_true.is_square() {
        return Err(Error::Shape(format!(
            "supports are {:?} and {:?}",
            support_true.shape(),
            support_est.shape()
        )));
    }
    let n = support_true.nrows();
    if n < 2 {
        return Err(Error::UndefinedMetric("edge error rate needs at least two nodes".into()));
    }
    let mut wrong = 0usize;
    for i in 0..n {
        for j in 0..n {
            if i != j && support_true[(i, j)] != support_est[(i, j)] {
                wrong += 1;
            }
        }
    }
    Ok(wrong as f64 * 100.0 / (n * (n - 1)) as f64)
}

/// Threshold on `|adj_est|` that minimizes the edge error rate against the
/// nonzero pattern of `adj_true`. An entry counts as an edge when its
/// magnitude exceeds the threshold. Candidates are zero, every distinct
/// magnitude in the estimate, and infinity; ties go to the smallest.
pub fn best_threshold(adj_true: &DMatrix<f64>, adj_est: &DMatrix<f64>) -> Result<(f64, f64)> {
    if adj_true.shape() != adj_est.shape() {
        return Err(Error::Shape("adjacency matrices differ in shape".into()));
    }
    let truth = adj_true.map(|x| x != 0.0);
    let mut candidates: Vec<f64> = adj_est.iter().map(|x| x.abs()).collect();
    candidates.push(0.0);
    candidates.push(f64::INFINITY);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let mut best = (f64::NAN, f64::INFINITY);
    for &tau in &candidates {
        let est = adj_est.map(|x| x.abs() > tau);
        let e = eier(&truth, &est)?;
        if e < best.1 {
            best = (tau, e);
        }
    }
    Ok(best)
}

fn check_same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("signals are {:?} and {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// `sum_t ||s_est(t) - s(t)||^2 / ||s(t)||^2`.
pub fn nmse(signals_true: &DMatrix<f64>, signals_est: &DMatrix<f64>) -> Result<f64> {
    check_same_shape(signals_true, signals_est)?;
    let mut total = 0.0;
    for t in 0..signals_true.ncols() {
        let norm = signals_true.column(t).norm_squared();
        if norm == 0.0 {
            return Err(Error::UndefinedMetric(format!("true signal at slot {t} is zero")));
        }
        total += (signals_est.column(t) - signals_true.column(t)).norm_squared() / norm;
    }
    Ok(total)
}

/// Entry `t` is `sum_{tau<=t} ||s_est - s||^2 / sum_{tau<=t} ||s||^2`.
pub fn cnmse(signals_true: &DMatrix<f64>, signals_est: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_same_shape(signals_true, signals_est)?;
    let mut err = 0.0;
    let mut energy = 0.0;
    let mut out = Vec::with_capacity(signals_true.ncols());
    for t in 0..signals_true.ncols() {
        err += (signals_est.column(t) - signals_true.column(t)).norm_squared();
        energy += signals_true.column(t).norm_squared();
        if energy == 0.0 {
            return Err(Error::UndefinedMetric(format!("true signals are zero up to slot {t}")));
        }
        out.push(err / energy);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct BlEstimate {
    pub signals: SignalMatrix,
    /// Slots where the sampled rows of the basis had rank below the bandwidth.
    pub underdetermined: Vec<bool>,
}

/// Bandlimited reconstruction: per slot, the minimum-norm least-squares fit
/// of the coefficients on the `bandwidth` lowest-frequency Laplacian
/// eigenvectors to the sampled entries. The adjacency is symmetrized first.
pub fn bl_estimate(adj: &DMatrix<f64>, bandwidth: usize, obs: &ObservationSet) -> Result<BlEstimate> {
    if !adj.is_square() || adj.nrows() != obs.n() {
        return Err(Error::Shape("adjacency and observations disagree on N".into()));
    }
    let sym = (adj + adj.transpose()) * 0.5;
    let basis = low_frequency_basis(&laplacian(&sym), bandwidth)?;
    let n = obs.n();
    let mut values = DMatrix::zeros(n, obs.num_slots());
    let mut underdetermined = Vec::with_capacity(obs.num_slots());
    for t in 0..obs.num_slots() {
        let idx = obs.indices(t);
        if idx.is_empty() {
            underdetermined.push(true);
            continue;
        }
        let sub = basis.select_rows(idx);
        let svd = sub.svd(true, true);
        let smax = svd.singular_values.max();
        let tol = idx.len().max(bandwidth) as f64 * f64::EPSILON * smax;
        let rank = svd.rank(tol);
        let coef = svd.solve(obs.values(t), tol).map_err(|e| Error::Numeric(e.to_string()))?;
        values.set_column(t, &(&basis * coef));
        underdetermined.push(rank < bandwidth);
    }
    Ok(BlEstimate { signals: SignalMatrix::new(values)?, underdetermined })
}

/// Recipe for the synthetic Kronecker benchmark. Each seed draws a graph
/// from the Kronecker probabilities and bandlimited signals on it; each
/// sample size draws a uniform sampling schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KroneckerExperiment {
    pub order: u32,
    pub bandwidth: usize,
    pub slots: usize,
    pub sample_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Solver settings for signal reconstruction.
    pub signal_solver: SemConfig,
    /// Solver settings for topology identification.
    pub topology_solver: SemConfig,
    /// Sample sizes at which topology identification is scored.
    pub topology_sample_sizes: Vec<usize>,
    /// Variance of the Gaussian perturbation of the adjacency handed to the
    /// bandlimited baseline.
    pub bl_adjacency_noise: f64,
    pub obs_sigma: f64,
}

impl Default for KroneckerExperiment {
    fn default() -> Self {
        Self {
            order: 4,
            bandwidth: 10,
            slots: 100,
            sample_sizes: vec![20, 40, 60, 81],
            seeds: (0..10).collect(),
            signal_solver: SemConfig { mu: 1e4, lambda1: 0.5, lambda2: 0.1, max_outer: 10, ..SemConfig::default() },
            topology_solver: SemConfig { mu: 1e4, lambda1: 100.0, lambda2: 1.0, ..SemConfig::default() },
            topology_sample_sizes: vec![65],
            bl_adjacency_noise: 0.05,
            obs_sigma: 0.0,
        }
    }
}

/// One scored run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub m: usize,
    pub seed: u64,
    pub eier_percent: Option<f64>,
    pub chosen_threshold: Option<f64>,
    pub nmse: Option<f64>,
    pub cnmse_series: Vec<f64>,
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: KroneckerExperiment,
    pub records: Vec<MetricReport>,
}

impl ExperimentReport {
    /// Median of a metric over seeds for one method and sample size.
    pub fn median(&self, method: &str, m: usize, metric: impl Fn(&MetricReport) -> Option<f64>) -> Option<f64> {
        let mut v: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.method == method && r.m == m)
            .filter_map(&metric)
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let k = v.len();
        Some(if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) })
    }

    /// Long-format CSV: `m,seed,eier,nmse,runtime_s,method`. Missing metrics
    /// are empty fields.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["m", "seed", "eier", "nmse", "runtime_s", "method"])?;
        let opt = |x: Option<f64>| x.map(format_f64).unwrap_or_default();
        for r in &self.records {
            w.write_record([
                r.m.to_string(),
                r.seed.to_string(),
                opt(r.eier_percent),
                opt(r.nmse),
                format_f64(r.runtime_seconds),
                r.method.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct SeedData {
    adjacency: TopologyMatrix,
    signals: SignalMatrix,
}

fn stream(seed: u64, id: u64) -> SeededRng {
    let mut rng = seeded(seed);
    rng.set_stream(id);
    rng
}

fn seed_data(cfg: &KroneckerExperiment, seed: u64) -> Result<SeedData> {
    let spec = KroneckerSpec::new(KroneckerSpec::benchmark_seed(), cfg.order)?;
    let prob = kronecker_expand(&spec);
    let mut rng = stream(seed, 0);
    let adjacency = sample_adjacency(&prob, &mut rng)?;
    let signals = bandlimited_signals(&laplacian(adjacency.entries()), cfg.bandwidth, cfg.slots, &mut rng)?;
    Ok(SeedData { adjacency, signals })
}

fn observe(cfg: &KroneckerExperiment, data: &SeedData, seed: u64, m: usize) -> Result<ObservationSet> {
    let mut rng = stream(seed, 1 + m as u64);
    let n = data.signals.n();
    let schedule = random_schedule(n, m, cfg.slots, &mut rng)?;
    let noise = NoiseSpec::new(0.0, cfg.obs_sigma, seed)?;
    sample_observations(&data.signals, &schedule, &noise, &mut rng)
}

fn topology_record(method: &str, m: usize, seed: u64, truth: &TopologyMatrix, est: &TopologyMatrix, start: Instant) -> Result<MetricReport> {
    let (tau, e) = best_threshold(truth.entries(), est.entries())?;
    Ok(MetricReport {
        method: method.into(),
        m,
        seed,
        eier_percent: Some(e),
        chosen_threshold: Some(tau),
        nmse: None,
        cnmse_series: vec![],
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

fn run_seed(cfg: &KroneckerExperiment, seed: u64) -> Result<Vec<MetricReport>> {
    let data = seed_data(cfg, seed)?;
    let n = data.signals.n();
    let truth = data.signals.values();
    let mut out = Vec::new();

    let start = Instant::now();
    let full = topology_admm_sem(&data.signals, &cfg.topology_solver)?;
    out.push(topology_record("en-sem", n, seed, &data.adjacency, &full.adjacency, start)?);

    let mut noisy = data.adjacency.entries().clone();
    let mut rng = stream(seed, u64::MAX);
    let sd = cfg.bl_adjacency_noise.sqrt();
    noisy.iter_mut().for_each(|x| *x += gaussian(&mut rng, sd));

    for &m in &cfg.sample_sizes {
        let obs = observe(cfg, &data, seed, m)?;
        let start = Instant::now();
        let fit = jisg(&obs, &cfg.signal_solver)?;
        out.push(MetricReport {
            method: "jisg".into(),
            m,
            seed,
            eier_percent: None,
            chosen_threshold: None,
            nmse: Some(nmse(truth, fit.signals.values())?),
            cnmse_series: vec![],
            runtime_seconds: start.elapsed().as_secs_f64(),
        });

        let start = Instant::now();
        let bl = bl_estimate(&noisy, cfg.bandwidth, &obs)?;
        out.push(MetricReport {
            method: "bl".into(),
            m,
            seed,
            eier_percent: None,
            chosen_threshold: None,
            nmse: Some(nmse(truth, bl.signals.values())?),
            cnmse_series: vec![],
            runtime_seconds: start.elapsed().as_secs_f64(),
        });
    }

    for &m in &cfg.topology_sample_sizes {
        let obs = observe(cfg, &data, seed, m)?;
        let start = Instant::now();
        let fit = jisg(&obs, &cfg.topology_solver)?;
        out.push(topology_record("jisg-topology", m, seed, &data.adjacency, &fit.adjacency, start)?);
    }
    Ok(out)
}

/// Runs every seed in parallel; records come back ordered by seed, then by
/// method and sample size as listed in the configuration.
pub fn run_synthetic_kronecker(cfg: &KroneckerExperiment) -> Result<ExperimentReport> {
    cfg.signal_solver.validate()?;
    cfg.topology_solver.validate()?;
    let n = KroneckerSpec::new(KroneckerSpec::benchmark_seed(), cfg.order)?.nodes();
    if let Some(&m) = cfg.sample_sizes.iter().chain(&cfg.topology_sample_sizes).find(|&&m| m > n) {
        return Err(Error::InvalidArgument(format!("cannot sample {m} of {n} nodes")));
    }
    if !(cfg.bl_adjacency_noise >= 0.0) {
        return Err(Error::InvalidConfig("bl_adjacency_noise must be >= 0".into()));
    }
    let per_seed: Vec<Vec<MetricReport>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_seed(cfg, seed))
        .collect::<Result<_>>()?;
    Ok(ExperimentReport { config: cfg.clone(), records: per_seed.into_iter().flatten().collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn sup(n: usize, on: &[(usize, usize)]) -> DMatrix<bool> {
        let mut m = DMatrix::from_element(n, n, false);
        for &(i, j) in on {
            m[(i, j)] = true;
        }
        m
    }

    #[test]
    fn eier_identical_is_zero() {
        let s = sup(4, &[(0, 1), (2, 3)]);
        assert_eq!(eier(&s, &s).unwrap(), 0.0);
    }

    #[test]
    fn eier_complement_is_hundred() {
        let a = sup(3, &[(0, 1), (1, 2), (2, 0)]);
        let b = sup(3, &[(1, 0), (2, 1), (0, 2)]);
        assert_eq!(eier(&a, &b).unwrap(), 100.0);
    }

    #[test]
    fn eier_single_difference_on_nine_nodes() {
        let a = sup(9, &[]);
        let b = sup(9, &[(3, 4)]);
        assert_eq!(eier(&a, &b).unwrap(), 100.0 / 72.0);
    }

    #[test]
    fn eier_ignores_diagonal() {
        assert_eq!(eier(&sup(3, &[(1, 1)]), &sup(3, &[])).unwrap(), 0.0);
    }

    #[test]
    fn nmse_cases() {
        let s = DMatrix::from_fn(3, 4, |i, t| (i + t) as f64 + 1.0);
        assert_eq!(nmse(&s, &s).unwrap(), 0.0);
        assert_eq!(nmse(&s, &DMatrix::zeros(3, 4)).unwrap(), 4.0);
        assert_eq!(nmse(&s, &(&s * 2.0)).unwrap(), 4.0);
        let mut z = s.clone();
        z.column_mut(1).fill(0.0);
        assert!(matches!(nmse(&z, &s), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn cnmse_cases() {
        let s = DMatrix::from_fn(2, 3, |i, t| (i * 2 + t) as f64 + 1.0);
        assert_eq!(cnmse(&s, &s).unwrap(), vec![0.0; 3]);
        assert_eq!(cnmse(&s, &DMatrix::zeros(2, 3)).unwrap(), vec![1.0; 3]);
        let flat = DMatrix::from_element(2, 3, 2.0);
        let off = DMatrix::from_element(2, 3, 3.0);
        assert_eq!(cnmse(&flat, &off).unwrap(), vec![0.25; 3]);
    }

    #[test]
    fn threshold_of_exact_estimate() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 0.5, 0.0, 0.0, 0.0, -1.0, 2.0, 0.0, 0.0]);
        let (tau, e) = best_threshold(&a, &a).unwrap();
        assert_eq!(e, 0.0);
        assert_eq!(tau, 0.0);
    }

    #[test]
    fn threshold_of_empty_estimate_is_density() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let (_, e) = best_threshold(&a, &DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(e, 200.0 / 6.0);
    }

    #[test]
    fn bl_full_basis_interpolates() {
        let mut adj = DMatrix::zeros(4, 4);
        for i in 0..3 {
            adj[(i, i + 1)] = 1.0;
            adj[(i + 1, i)] = 1.0;
        }
        let y = DVector::from_column_slice(&[1.0, -2.0, 0.3, 4.0]);
        let obs = ObservationSet::new(crate::SamplingSchedule::full(4, 1), vec![y.clone()]).unwrap();
        let est = bl_estimate(&adj, 4, &obs).unwrap();
        assert!((est.signals.column(0) - y).amax() < 1e-10);
        assert!(!est.underdetermined[0]);
    }
}
