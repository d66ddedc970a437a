//! Graph and process models shared by every solver.
//!
//! A graph over `N` nodes is a [`TopologyMatrix`]; a graph process is a
//! [`SignalMatrix`] whose column `t` is the nodal vector `s(t)`. Observations
//! are taken through a [`SamplingSchedule`] of per-slot node index sets, which
//! act as row-selection matrices `M(t)`:
//!
//! ```text
//! SEM:    s(t) = A s(t) + e(t)
//! SVARM:  s(t) = A0 s(t) + A1 s(t-1) + e(t),   s(0) = z0 + e(0)
//! obs:    y(t) = M(t) s(t) + eps(t)
//! ```
//!
//! Node indices are zero-based in memory. Every serialized form (schedule
//! JSON, observation records) uses one-based indices.

use nalgebra::{DMatrix, DVector, DVectorView, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{gaussian, seeded, standard_normal};

/// Condition number of `I - A` above which the model is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// An `N x N` adjacency matrix. When `zero_diag` is set the matrix belongs to
/// the self-loop-free set and its diagonal is exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyMatrix {
    entries: DMatrix<f64>,
    zero_diag: bool,
}

impl TopologyMatrix {
    pub fn new(entries: DMatrix<f64>, zero_diag: bool) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::Shape(format!(
                "adjacency must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("adjacency has non-finite entries".into()));
        }
        if zero_diag && entries.diagonal().iter().any(|&d| d != 0.0) {
            return Err(Error::InvalidArgument(
                "adjacency flagged zero-diagonal has a nonzero diagonal entry".into(),
            ));
        }
        Ok(Self { entries, zero_diag })
    }

    /// Builds a zero-diagonal matrix, overwriting whatever diagonal `entries` had.
    pub fn with_zeroed_diagonal(mut entries: DMatrix<f64>) -> Result<Self> {
        if entries.is_square() {
            entries.fill_diagonal(0.0);
        }
        Self::new(entries, true)
    }

    pub fn zeros(n: usize, zero_diag: bool) -> Self {
        Self { entries: DMatrix::zeros(n, n), zero_diag }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn zero_diag(&self) -> bool {
        self.zero_diag
    }

    /// Boolean support: entries with magnitude strictly above `threshold`.
    pub fn support(&self, threshold: f64) -> DMatrix<bool> {
        self.entries.map(|x| x.abs() > threshold)
    }

    pub fn nnz(&self, threshold: f64) -> usize {
        self.entries.iter().filter(|x| x.abs() > threshold).count()
    }
}

/// Graph process samples, one column per slot.
///
/// SVARM trajectories carry the initial condition `z0` and store `s(0)` as
/// column 0, so a horizon of `T` slots occupies `T + 1` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    values: DMatrix<f64>,
    z0: Option<DVector<f64>>,
}

impl SignalMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("signals have non-finite entries".into()));
        }
        Ok(Self { values, z0: None })
    }

    pub fn with_initial_state(values: DMatrix<f64>, z0: DVector<f64>) -> Result<Self> {
        if z0.len() != values.nrows() {
            return Err(Error::Shape(format!(
                "initial state has length {}, signals have {} nodes",
                z0.len(),
                values.nrows()
            )));
        }
        if z0.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("initial state has non-finite entries".into()));
        }
        let mut s = Self::new(values)?;
        s.z0 = Some(z0);
        Ok(s)
    }

    pub fn zeros(n: usize, slots: usize) -> Self {
        Self { values: DMatrix::zeros(n, slots), z0: None }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn slots(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn column(&self, t: usize) -> DVectorView<'_, f64> {
        self.values.column(t)
    }

    pub fn initial_state(&self) -> Option<&DVector<f64>> {
        self.z0.as_ref()
    }

    /// Columns `start..start + count` as a plain signal matrix (no `z0`).
    pub fn columns(&self, start: usize, count: usize) -> Result<SignalMatrix> {
        if start + count > self.slots() {
            return Err(Error::Shape(format!(
                "column range {start}..{} exceeds {} slots",
                start + count,
                self.slots()
            )));
        }
        Ok(Self { values: self.values.columns(start, count).into_owned(), z0: None })
    }
}

/// Per-slot sets of sampled nodes. Each set is strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingSchedule {
    n: usize,
    slots: Vec<Vec<usize>>,
}

impl SamplingSchedule {
    /// `slots` holds zero-based node indices.
    pub fn new(n: usize, slots: Vec<Vec<usize>>) -> Result<Self> {
        for (t, set) in slots.iter().enumerate() {
            if set.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidArgument(format!(
                    "sample set of slot {t} is not strictly increasing"
                )));
            }
            if let Some(&last) = set.last() {
                if last >= n {
                    return Err(Error::InvalidArgument(format!(
                        "slot {t} samples node {} but the graph has {n} nodes",
                        last + 1
                    )));
                }
            }
        }
        Ok(Self { n, slots })
    }

    /// Every node sampled in every slot.
    pub fn full(n: usize, slots: usize) -> Self {
        Self { n, slots: vec![(0..n).collect(); slots] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn slot(&self, t: usize) -> &[usize] {
        &self.slots[t]
    }

    pub fn slots(&self) -> &[Vec<usize>] {
        &self.slots
    }

    /// `N x T` observability mask.
    pub fn mask(&self) -> DMatrix<bool> {
        let mut m = DMatrix::from_element(self.n, self.slots.len(), false);
        for (t, set) in self.slots.iter().enumerate() {
            for &i in set {
                m[(i, t)] = true;
            }
        }
        m
    }
}

#[derive(Serialize, Deserialize)]
struct ScheduleWire {
    n: usize,
    slots: Vec<Vec<usize>>,
}

impl Serialize for SamplingSchedule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ScheduleWire {
            n: self.n,
            slots: self.slots.iter().map(|set| set.iter().map(|i| i + 1).collect()).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SamplingSchedule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = ScheduleWire::deserialize(d)?;
        let slots = wire
            .slots
            .into_iter()
            .map(|set| one_based_to_zero(&set))
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        SamplingSchedule::new(wire.n, slots).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn one_based_to_zero(set: &[usize]) -> Result<Vec<usize>> {
    set.iter()
        .map(|&i| {
            i.checked_sub(1)
                .ok_or_else(|| Error::InvalidArgument("node indices are one-based".into()))
        })
        .collect()
}

/// Observed values `y(t)` aligned with a schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    schedule: SamplingSchedule,
    values: Vec<DVector<f64>>,
}

impl ObservationSet {
    pub fn new(schedule: SamplingSchedule, values: Vec<DVector<f64>>) -> Result<Self> {
        if values.len() != schedule.num_slots() {
            return Err(Error::Shape(format!(
                "{} observation vectors for {} schedule slots",
                values.len(),
                schedule.num_slots()
            )));
        }
        for (t, y) in values.iter().enumerate() {
            if y.len() != schedule.slot(t).len() {
                return Err(Error::Shape(format!(
                    "slot {t}: {} values for {} sampled nodes",
                    y.len(),
                    schedule.slot(t).len()
                )));
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("slot {t} has non-finite values")));
            }
        }
        Ok(Self { schedule, values })
    }

    pub fn n(&self) -> usize {
        self.schedule.n()
    }

    pub fn num_slots(&self) -> usize {
        self.values.len()
    }

    pub fn schedule(&self) -> &SamplingSchedule {
        &self.schedule
    }

    pub fn values(&self, t: usize) -> &DVector<f64> {
        &self.values[t]
    }

    pub fn indices(&self, t: usize) -> &[usize] {
        self.schedule.slot(t)
    }

    /// `M(t)^T y(t)`: observed values placed at their nodes, zeros elsewhere.
    pub fn scatter(&self, t: usize) -> DVector<f64> {
        let mut s = DVector::zeros(self.n());
        for (k, &i) in self.schedule.slot(t).iter().enumerate() {
            s[i] = self.values[t][k];
        }
        s
    }

    /// `N x T` matrix of scattered observations.
    pub fn scatter_all(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n(), self.num_slots());
        for t in 0..self.num_slots() {
            m.set_column(t, &self.scatter(t));
        }
        m
    }

    pub fn to_records(&self) -> Vec<ObservationRecord> {
        (0..self.num_slots())
            .map(|t| ObservationRecord {
                t: t + 1,
                indices: self.indices(t).iter().map(|i| i + 1).collect(),
                y: self.values[t].iter().copied().collect(),
            })
            .collect()
    }

    /// Rebuilds a set from records, ordered by `t`.
    pub fn from_records(n: usize, mut records: Vec<ObservationRecord>) -> Result<Self> {
        records.sort_by_key(|r| r.t);
        let mut slots = Vec::with_capacity(records.len());
        let mut values = Vec::with_capacity(records.len());
        for r in records {
            slots.push(one_based_to_zero(&r.indices)?);
            values.push(DVector::from_vec(r.y));
        }
        Self::new(SamplingSchedule::new(n, slots)?, values)
    }
}

/// One slot of observations on the wire: `{"t":int,"indices":[...],"y":[...]}`
/// with one-based node indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub t: usize,
    pub indices: Vec<usize>,
    pub y: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ObservationSetWire {
    n: usize,
    records: Vec<ObservationRecord>,
}

impl Serialize for ObservationSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ObservationSetWire { n: self.n(), records: self.to_records() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ObservationSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = ObservationSetWire::deserialize(d)?;
        ObservationSet::from_records(wire.n, wire.records).map_err(serde::de::Error::custom)
    }
}

/// Seed matrix and Kronecker power for synthetic graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct KroneckerSpec {
    seed: DMatrix<f64>,
    order: u32,
}

impl KroneckerSpec {
    pub fn new(seed: DMatrix<f64>, order: u32) -> Result<Self> {
        if !seed.is_square() || seed.nrows() == 0 {
            return Err(Error::InvalidSpec("seed matrix must be square and nonempty".into()));
        }
        if order == 0 {
            return Err(Error::InvalidSpec("Kronecker order must be positive".into()));
        }
        if seed.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidSpec("seed entries must lie in [0, 1]".into()));
        }
        Ok(Self { seed, order })
    }

    /// The 3x3 seed used for the 81-node benchmark graph (with `order = 4`).
    pub fn benchmark_seed() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[0.6, 0.1, 0.7, 0.3, 0.1, 0.5, 0.0, 1.0, 0.1])
    }

    pub fn benchmark(order: u32) -> Self {
        Self { seed: Self::benchmark_seed(), order: order.max(1) }
    }

    pub fn seed(&self) -> &DMatrix<f64> {
        &self.seed
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn nodes(&self) -> usize {
        self.seed.nrows().pow(self.order)
    }
}

/// Driving-noise and observation-noise levels plus the RNG seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub process_sigma: f64,
    pub obs_sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(process_sigma: f64, obs_sigma: f64, seed: u64) -> Result<Self> {
        let spec = Self { process_sigma, obs_sigma, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.process_sigma >= 0.0 && self.obs_sigma >= 0.0) {
            return Err(Error::InvalidSpec("noise standard deviations must be >= 0".into()));
        }
        Ok(())
    }
}

/// `seed ⊗ seed ⊗ ... ⊗ seed` with `order` factors.
pub fn kronecker_expand(spec: &KroneckerSpec) -> DMatrix<f64> {
    let mut out = spec.seed.clone();
    for _ in 1..spec.order {
        out = out.kronecker(&spec.seed);
    }
    out
}

/// Draws `A[i,j] ~ Bernoulli(prob[i,j])`, returns `A + A^T` with the diagonal
/// cleared. Entries of the result are in `{0, 1, 2}`.
pub fn sample_adjacency<R: Rng + ?Sized>(prob: &DMatrix<f64>, rng: &mut R) -> Result<TopologyMatrix> {
    if !prob.is_square() {
        return Err(Error::Shape("probability matrix must be square".into()));
    }
    if prob.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::InvalidSpec("probabilities must lie in [0, 1]".into()));
    }
    let n = prob.nrows();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let u: f64 = rng.random();
            if u < prob[(i, j)] {
                a[(i, j)] = 1.0;
            }
        }
    }
    let sym = &a + a.transpose();
    TopologyMatrix::with_zeroed_diagonal(sym)
}

/// `diag(A 1) - A`.
pub fn laplacian(adj: &DMatrix<f64>) -> DMatrix<f64> {
    let mut l = -adj.clone();
    for i in 0..adj.nrows() {
        l[(i, i)] += adj.row(i).sum();
    }
    l
}

/// Eigenvectors of a symmetric Laplacian for its `bandwidth` smallest
/// eigenvalues, as the columns of an `N x bandwidth` matrix.
///
/// Eigenvalues are sorted ascending; ties keep the order in which the
/// decomposition returned them.
pub fn low_frequency_basis(lap: &DMatrix<f64>, bandwidth: usize) -> Result<DMatrix<f64>> {
    let n = lap.nrows();
    if !lap.is_square() {
        return Err(Error::Shape("Laplacian must be square".into()));
    }
    if bandwidth == 0 || bandwidth > n {
        return Err(Error::InvalidArgument(format!(
            "bandwidth must lie in 1..={n}, got {bandwidth}"
        )));
    }
    let scale = lap.amax().max(1.0);
    if (lap - lap.transpose()).amax() > 1e-12 * scale {
        return Err(Error::InvalidArgument("Laplacian is not symmetric".into()));
    }
    let eig = SymmetricEigen::try_new(lap.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numeric("symmetric eigendecomposition did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));
    let mut basis = DMatrix::zeros(n, bandwidth);
    for (k, &idx) in order.iter().take(bandwidth).enumerate() {
        basis.set_column(k, &eig.eigenvectors.column(idx));
    }
    Ok(basis)
}

/// Graph-bandlimited signals `s(t) = U_B gamma(t)` with `gamma ~ N(0, I_B)`.
pub fn bandlimited_signals<R: Rng + ?Sized>(
    lap: &DMatrix<f64>,
    bandwidth: usize,
    slots: usize,
    rng: &mut R,
) -> Result<SignalMatrix> {
    let basis = low_frequency_basis(lap, bandwidth)?;
    let mut coeffs = DMatrix::zeros(bandwidth, slots);
    for t in 0..slots {
        for i in 0..bandwidth {
            coeffs[(i, t)] = standard_normal(rng);
        }
    }
    SignalMatrix::new(basis * coeffs)
}

/// Largest eigenvalue magnitude of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Divides `A` by `1.1 * rho(A)` when its spectral radius is at least one, so
/// that `I - A` is invertible. Matrices with `rho(A) < 1` are returned as-is.
///
/// The computed radius of a matrix with an eigenvalue of exactly one can land
/// a few ulps below one, so radii within `1e-10` of one are rescaled too.
pub fn rescale_to_stable(adj: &TopologyMatrix) -> TopologyMatrix {
    let rho = spectral_radius(adj.entries());
    if rho >= 1.0 - 1e-10 {
        TopologyMatrix {
            entries: adj.entries() / (1.1 * rho),
            zero_diag: adj.zero_diag(),
        }
    } else {
        adj.clone()
    }
}

/// 2-norm condition number from the singular values.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `I - A`, checked against [`MAX_CONDITION`].
pub fn checked_identity_minus(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let m = DMatrix::identity(n, n) - a;
    let condition = condition_number(&m);
    if !(condition < MAX_CONDITION) {
        return Err(Error::SingularModel { condition });
    }
    Ok(m)
}

/// Process noise `e(t)` for `slots` columns, drawn slot by slot from the
/// stream keyed by `noise.seed`.
pub fn draw_process_noise(noise: &NoiseSpec, n: usize, slots: usize) -> DMatrix<f64> {
    let mut rng = seeded(noise.seed);
    let mut e = DMatrix::zeros(n, slots);
    for t in 0..slots {
        for i in 0..n {
            e[(i, t)] = gaussian(&mut rng, noise.process_sigma);
        }
    }
    e
}

/// Solves `(I - A) s(t) = e(t)` for every column of `noise`.
pub fn sem_from_noise(adj: &TopologyMatrix, noise: &DMatrix<f64>) -> Result<SignalMatrix> {
    if noise.nrows() != adj.n() {
        return Err(Error::Shape(format!(
            "noise has {} rows for a {}-node graph",
            noise.nrows(),
            adj.n()
        )));
    }
    let m = checked_identity_minus(adj.entries())?;
    let lu = m.lu();
    let s = lu
        .solve(noise)
        .ok_or_else(|| Error::SingularModel { condition: f64::INFINITY })?;
    SignalMatrix::new(s)
}

/// `L` slots of SEM data `s = (I - A)^{-1} e` with `e ~ N(0, process_sigma^2 I)`.
pub fn sem_synthesize(adj: &TopologyMatrix, noise: &NoiseSpec, slots: usize) -> Result<SignalMatrix> {
    noise.validate()?;
    let e = draw_process_noise(noise, adj.n(), slots);
    sem_from_noise(adj, &e)
}

/// Runs the SVARM recursion on given noise; column 0 of `noise` is `e(0)`.
pub fn svarm_from_noise(
    a0: &TopologyMatrix,
    a1: &TopologyMatrix,
    z0: &DVector<f64>,
    noise: &DMatrix<f64>,
) -> Result<SignalMatrix> {
    let n = a0.n();
    if a1.n() != n || z0.len() != n || noise.nrows() != n || noise.ncols() == 0 {
        return Err(Error::Shape("SVARM inputs disagree on the node count".into()));
    }
    let lu = checked_identity_minus(a0.entries())?.lu();
    let slots = noise.ncols();
    let mut s = DMatrix::zeros(n, slots);
    s.set_column(0, &(z0 + noise.column(0)));
    for t in 1..slots {
        let rhs = a1.entries() * s.column(t - 1) + noise.column(t);
        let col = lu
            .solve(&rhs)
            .ok_or_else(|| Error::SingularModel { condition: f64::INFINITY })?;
        s.set_column(t, &col);
    }
    SignalMatrix::with_initial_state(s, z0.clone())
}

/// SVARM trajectory over `t = 0..=slots`; the result has `slots + 1` columns
/// and records `z0`.
pub fn svarm_synthesize(
    a0: &TopologyMatrix,
    a1: &TopologyMatrix,
    z0: &DVector<f64>,
    noise: &NoiseSpec,
    slots: usize,
) -> Result<SignalMatrix> {
    noise.validate()?;
    let e = draw_process_noise(noise, a0.n(), slots + 1);
    svarm_from_noise(a0, a1, z0, &e)
}

/// `y(t) = M(t) s(t) + eps(t)` with `eps ~ N(0, obs_sigma^2 I)`.
pub fn sample_observations<R: Rng + ?Sized>(
    signals: &SignalMatrix,
    schedule: &SamplingSchedule,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<ObservationSet> {
    noise.validate()?;
    if schedule.n() != signals.n() || schedule.num_slots() != signals.slots() {
        return Err(Error::Shape(format!(
            "schedule is {}x{} but signals are {}x{}",
            schedule.n(),
            schedule.num_slots(),
            signals.n(),
            signals.slots()
        )));
    }
    let values = (0..signals.slots())
        .map(|t| {
            let s = signals.column(t);
            DVector::from_iterator(
                schedule.slot(t).len(),
                schedule.slot(t).iter().map(|&i| s[i] + gaussian(rng, noise.obs_sigma)),
            )
        })
        .collect();
    ObservationSet::new(schedule.clone(), values)
}

/// Each slot samples `m` distinct nodes uniformly at random, sorted.
pub fn random_schedule<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    slots: usize,
    rng: &mut R,
) -> Result<SamplingSchedule> {
    if m > n {
        return Err(Error::InvalidArgument(format!("cannot sample {m} of {n} nodes")));
    }
    let sets = (0..slots)
        .map(|_| {
            let mut idx = rand::seq::index::sample(rng, n, m).into_vec();
            idx.sort_unstable();
            idx
        })
        .collect();
    SamplingSchedule::new(n, sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn kronecker_order_one_is_the_seed() {
        let spec = KroneckerSpec::benchmark(1);
        assert_eq!(kronecker_expand(&spec), KroneckerSpec::benchmark_seed());
    }

    #[test]
    fn kronecker_benchmark_shape_and_corner() {
        let p = kronecker_expand(&KroneckerSpec::benchmark(4));
        assert_eq!(p.shape(), (81, 81));
        assert!((p[(0, 0)] - 0.1296).abs() < 1e-15);
        assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn kronecker_rejects_bad_seed() {
        let bad = DMatrix::from_row_slice(2, 2, &[0.5, 1.2, 0.0, 0.1]);
        assert!(matches!(KroneckerSpec::new(bad, 2), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn degenerate_bernoulli_draws() {
        let mut rng = seeded(1);
        let zero = sample_adjacency(&DMatrix::zeros(4, 4), &mut rng).unwrap();
        assert_eq!(zero.entries(), &DMatrix::zeros(4, 4));
        let ones = sample_adjacency(&DMatrix::from_element(3, 3, 1.0), &mut rng).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 0.0 } else { 2.0 };
                assert_eq!(ones.entries()[(i, j)], expected);
            }
        }
        assert!(ones.zero_diag());
    }

    #[test]
    fn laplacian_of_single_edge() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let l = laplacian(&a);
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        assert_eq!(laplacian(&DMatrix::zeros(3, 3)), DMatrix::zeros(3, 3));
    }

    #[test]
    fn sem_identity_case_returns_noise() {
        let a = TopologyMatrix::zeros(4, true);
        let noise = NoiseSpec::new(1.0, 0.0, 3).unwrap();
        let s = sem_synthesize(&a, &noise, 5).unwrap();
        assert_eq!(s.values(), &draw_process_noise(&noise, 4, 5));
    }

    #[test]
    fn sem_triangular_back_substitution() {
        let mut a = DMatrix::zeros(3, 3);
        a[(0, 1)] = 0.5;
        let a = TopologyMatrix::new(a, true).unwrap();
        let e = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]);
        let s = sem_from_noise(&a, &e).unwrap();
        assert_eq!(s.column(0).iter().copied().collect::<Vec<_>>(), vec![0.5, 1.0, 0.0]);
    }

    #[test]
    fn singular_sem_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let a = TopologyMatrix::new(a, true).unwrap();
        let err = sem_synthesize(&a, &NoiseSpec::new(1.0, 0.0, 0).unwrap(), 3).unwrap_err();
        assert!(matches!(err, Error::SingularModel { .. }));
    }

    #[test]
    fn svarm_persistence() {
        let a0 = TopologyMatrix::zeros(3, true);
        let a1 = TopologyMatrix::new(DMatrix::identity(3, 3), false).unwrap();
        let z0 = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let s = svarm_synthesize(&a0, &a1, &z0, &NoiseSpec::new(0.0, 0.0, 0).unwrap(), 6).unwrap();
        assert_eq!(s.slots(), 7);
        for t in 0..7 {
            assert_eq!(s.column(t), z0.column(0));
        }
        assert_eq!(s.initial_state(), Some(&z0));
    }

    #[test]
    fn svarm_without_topology_is_noise() {
        let a0 = TopologyMatrix::zeros(3, true);
        let a1 = TopologyMatrix::zeros(3, false);
        let z0 = DVector::zeros(3);
        let noise = NoiseSpec::new(0.7, 0.0, 9).unwrap();
        let s = svarm_synthesize(&a0, &a1, &z0, &noise, 4).unwrap();
        let e = draw_process_noise(&noise, 3, 5);
        assert_eq!(s.values(), &e);
    }

    #[test]
    fn observations_select_entries() {
        let s = SignalMatrix::new(DMatrix::from_fn(4, 2, |i, t| (10 * t + i) as f64)).unwrap();
        let schedule = SamplingSchedule::new(4, vec![vec![1, 3], vec![]]).unwrap();
        let noise = NoiseSpec::new(0.0, 0.0, 0).unwrap();
        let obs = sample_observations(&s, &schedule, &noise, &mut seeded(0)).unwrap();
        assert_eq!(obs.values(0).as_slice(), &[1.0, 3.0]);
        assert_eq!(obs.values(1).len(), 0);
        let full = sample_observations(&s, &SamplingSchedule::full(4, 2), &noise, &mut seeded(0)).unwrap();
        assert_eq!(full.scatter_all(), *s.values());
    }

    #[test]
    fn observation_shape_mismatch() {
        let s = SignalMatrix::zeros(4, 2);
        let schedule = SamplingSchedule::full(4, 3);
        let noise = NoiseSpec::new(0.0, 0.0, 0).unwrap();
        assert!(matches!(
            sample_observations(&s, &schedule, &noise, &mut seeded(0)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn schedule_edge_cases() {
        let mut rng = seeded(5);
        let full = random_schedule(6, 6, 3, &mut rng).unwrap();
        assert_eq!(full, SamplingSchedule::full(6, 3));
        let empty = random_schedule(6, 0, 3, &mut rng).unwrap();
        assert!(empty.slots().iter().all(Vec::is_empty));
        assert!(random_schedule(3, 4, 1, &mut rng).is_err());
        assert!(SamplingSchedule::new(3, vec![vec![2, 1]]).is_err());
        assert!(SamplingSchedule::new(3, vec![vec![0, 3]]).is_err());
    }

    #[test]
    fn schedule_json_is_one_based() {
        let s = SamplingSchedule::new(3, vec![vec![0, 2], vec![1]]).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"n":3,"slots":[[1,3],[2]]}"#);
        let back: SamplingSchedule = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<SamplingSchedule>(r#"{"n":3,"slots":[[0]]}"#).is_err());
    }

    #[test]
    fn noise_spec_json() {
        let spec: NoiseSpec =
            serde_json::from_str(r#"{"process_sigma":1.0,"obs_sigma":0.1,"seed":42}"#).unwrap();
        assert_eq!(spec, NoiseSpec { process_sigma: 1.0, obs_sigma: 0.1, seed: 42 });
    }

    #[test]
    fn rescaling_makes_identity_minus_invertible() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0]);
        let a = TopologyMatrix::new(a, true).unwrap();
        let r = rescale_to_stable(&a);
        assert!((spectral_radius(r.entries()) - 1.0 / 1.1).abs() < 1e-12);
        assert!(checked_identity_minus(r.entries()).is_ok());
    }
}
