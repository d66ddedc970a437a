//! Identifiability of SEM topologies from noiseless partial observations.
//!
//! Observations are held as an `N x L` matrix `X` with zeros at unsampled
//! entries, together with the sampling mask. Row `n` of a noiseless SEM
//! satisfies `X[n, t] = a_n^T s(t)` at every slot where `n` is sampled, so an
//! `S`-sparse row `a_n` is pinned down once enough of these equations involve
//! fully observed, sufficiently independent signals. The checks here
//! enumerate column and row subsets exhaustively and are meant for small
//! instances only.
//!
//! Witness and failing subsets are reported with 0-based indices, first in
//! lexicographic order.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphmodel::{ObservationSet, TopologyMatrix};
use crate::rng::standard_normal;

/// Largest column count [`kruskal_rank`] will enumerate.
pub const MAX_KRUSKAL_COLUMNS: usize = 20;

/// Default cap on the number of subsets a single check may examine.
pub const DEFAULT_SUBSET_BUDGET: u64 = 5_000_000;

/// Entries below this magnitude count as zero in [`check_as1`].
pub const SUPPORT_TOLERANCE: f64 = 1e-12;

/// Residual level below which a candidate row is consistent with the data.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct MaskedObservationMatrix {
    values: DMatrix<f64>,
    mask: DMatrix<bool>,
}

impl MaskedObservationMatrix {
    /// Requires zeros wherever `mask` is false.
    pub fn new(values: DMatrix<f64>, mask: DMatrix<bool>) -> Result<Self> {
        if values.shape() != mask.shape() {
            return Err(Error::Shape(format!(
                "values are {:?} but the mask is {:?}",
                values.shape(),
                mask.shape()
            )));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("observations must be finite".into()));
        }
        if values.iter().zip(mask.iter()).any(|(&v, &m)| !m && v != 0.0) {
            return Err(Error::InvalidArgument("unsampled entries must be zero".into()));
        }
        Ok(Self { values, mask })
    }

    /// Keeps the sampled entries of `signals` and zeros the rest.
    pub fn from_signals(signals: &DMatrix<f64>, mask: DMatrix<bool>) -> Result<Self> {
        if signals.shape() != mask.shape() {
            return Err(Error::Shape("signals and mask differ in shape".into()));
        }
        let values = signals.zip_map(&mask, |v, m| if m { v } else { 0.0 });
        Self::new(values, mask)
    }

    pub fn fully_observed(signals: DMatrix<f64>) -> Result<Self> {
        let mask = DMatrix::from_element(signals.nrows(), signals.ncols(), true);
        Self::new(signals, mask)
    }

    pub fn from_observations(obs: &ObservationSet) -> Result<Self> {
        Self::new(obs.scatter_all(), obs.schedule().mask())
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

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    fn column_fully_observed(&self, t: usize) -> bool {
        self.mask.column(t).iter().all(|&m| m)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentVerdict {
    pub satisfied: bool,
    /// Certifying column subset, or the best one tried on failure (possibly
    /// empty when no candidate exists).
    pub columns: Vec<usize>,
    /// For the partial-observation check: the failing row set, or the last
    /// row set certified when every one passes.
    pub rows: Option<Vec<usize>>,
    pub kruskal_value: usize,
}

fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    let tol = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * smax;
    sv.iter().filter(|&&s| s > tol).count()
}

fn select_columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    m.select_columns(cols)
}

/// Largest `k` such that every `k` columns of `mat` are linearly
/// independent, with numerical rank taken at `max(dims) * eps * sigma_max`.
pub fn kruskal_rank(mat: &DMatrix<f64>) -> Result<usize> {
    if mat.is_empty() {
        return Err(Error::InvalidArgument("Kruskal rank of an empty matrix".into()));
    }
    if mat.ncols() > MAX_KRUSKAL_COLUMNS {
        return Err(Error::BudgetExceeded(format!(
            "Kruskal rank enumerates at most {MAX_KRUSKAL_COLUMNS} columns, got {}",
            mat.ncols()
        )));
    }
    let limit = mat.nrows().min(mat.ncols());
    for k in 1..=limit {
        let dependent = (0..mat.ncols())
            .combinations(k)
            .any(|cols| numerical_rank(&select_columns(mat, &cols)) < k);
        if dependent {
            return Ok(k - 1);
        }
    }
    Ok(limit)
}

/// True iff every row has at most `sparsity` entries above
/// [`SUPPORT_TOLERANCE`] in magnitude.
pub fn check_as1(adj: &TopologyMatrix, sparsity: usize) -> bool {
    adj.entries()
        .row_iter()
        .all(|row| row.iter().filter(|x| x.abs() > SUPPORT_TOLERANCE).count() <= sparsity)
}

fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

fn spend(used: &mut u64, amount: u64, budget: u64, what: &str) -> Result<()> {
    *used = used.saturating_add(amount);
    if *used > budget {
        return Err(Error::BudgetExceeded(format!(
            "{what} needs more than {budget} subset checks"
        )));
    }
    Ok(())
}

/// Full-observation condition: some `2S` fully observed slots whose signal
/// vectors (the columns of the `N x 2S` submatrix) have Kruskal rank at
/// least `2S`.
pub fn check_as2(obs: &MaskedObservationMatrix, sparsity: usize) -> Result<IdentVerdict> {
    check_as2_with_budget(obs, sparsity, DEFAULT_SUBSET_BUDGET)
}

pub fn check_as2_with_budget(
    obs: &MaskedObservationMatrix,
    sparsity: usize,
    budget: u64,
) -> Result<IdentVerdict> {
    let need = 2 * sparsity;
    if need == 0 {
        return Ok(IdentVerdict { satisfied: true, columns: vec![], rows: None, kruskal_value: 0 });
    }
    if need > MAX_KRUSKAL_COLUMNS {
        return Err(Error::BudgetExceeded(format!("2S = {need} exceeds the Kruskal column budget")));
    }
    let full: Vec<usize> = (0..obs.slots()).filter(|&t| obs.column_fully_observed(t)).collect();
    let mut used = 0;
    spend(&mut used, binomial(full.len(), need), budget, "the full-observation check")?;
    let mut best: Option<(Vec<usize>, usize)> = None;
    for cols in full.iter().copied().combinations(need) {
        let k = kruskal_rank(&select_columns(obs.values(), &cols))?;
        if k >= need {
            return Ok(IdentVerdict { satisfied: true, columns: cols, rows: None, kruskal_value: k });
        }
        if best.as_ref().is_none_or(|(_, b)| k > *b) {
            best = Some((cols, k));
        }
    }
    let (columns, kruskal_value) = best.unwrap_or_default();
    Ok(IdentVerdict { satisfied: false, columns, rows: None, kruskal_value })
}

/// Partial-observation condition: for every set of `2S` rows there are `2S`
/// slots, all sampled on those rows, whose `2S x 2S` submatrix has Kruskal
/// rank `2S`. On failure the first uncovered row set is reported.
pub fn check_as3(obs: &MaskedObservationMatrix, sparsity: usize) -> Result<IdentVerdict> {
    check_as3_with_budget(obs, sparsity, DEFAULT_SUBSET_BUDGET)
}

pub fn check_as3_with_budget(
    obs: &MaskedObservationMatrix,
    sparsity: usize,
    budget: u64,
) -> Result<IdentVerdict> {
    let need = 2 * sparsity;
    if need == 0 {
        return Ok(IdentVerdict { satisfied: true, columns: vec![], rows: Some(vec![]), kruskal_value: 0 });
    }
    if need > obs.n() {
        return Ok(IdentVerdict { satisfied: false, columns: vec![], rows: Some(vec![]), kruskal_value: 0 });
    }
    let mut used = 0;
    spend(&mut used, binomial(obs.n(), need), budget, "the partial-observation check")?;
    let mut last = (vec![], vec![], 0);
    for rows in (0..obs.n()).combinations(need) {
        let covering: Vec<usize> = (0..obs.slots())
            .filter(|&t| rows.iter().all(|&i| obs.mask()[(i, t)]))
            .collect();
        spend(&mut used, binomial(covering.len(), need), budget, "the partial-observation check")?;
        let mut found = None;
        let mut best = (vec![], 0);
        for cols in covering.iter().copied().combinations(need) {
            let sub = obs.values().select_rows(&rows).select_columns(&cols);
            let k = kruskal_rank(&sub.transpose())?;
            if k == need {
                found = Some((cols, k));
                break;
            }
            if k > best.1 || best.0.is_empty() {
                best = (cols, k);
            }
        }
        match found {
            Some((cols, k)) => last = (rows, cols, k),
            None => {
                return Ok(IdentVerdict {
                    satisfied: false,
                    columns: best.0,
                    rows: Some(rows),
                    kruskal_value: best.1,
                })
            }
        }
    }
    Ok(IdentVerdict { satisfied: true, columns: last.1, rows: Some(last.0), kruskal_value: last.2 })
}

/// Consistent candidate for one row: the coefficients and whether the
/// restricted system pinned them down uniquely.
struct Candidate {
    row: DVector<f64>,
    alternative: Option<DVector<f64>>,
}

fn fit_support(obs: &MaskedObservationMatrix, n: usize, support: &[usize]) -> Option<Candidate> {
    let slots: Vec<usize> = (0..obs.slots())
        .filter(|&t| obs.mask()[(n, t)] && support.iter().all(|&j| obs.mask()[(j, t)]))
        .collect();
    let x = obs.values();
    let target = DVector::from_iterator(slots.len(), slots.iter().map(|&t| x[(n, t)]));
    let scale = 1.0 + target.amax();
    let mut row = DVector::zeros(obs.n());
    if support.is_empty() {
        return (target.amax() < CONSISTENCY_TOLERANCE * scale).then_some(Candidate { row, alternative: None });
    }
    let design = DMatrix::from_fn(slots.len(), support.len(), |r, c| x[(support[c], slots[r])]);
    let rank = numerical_rank(&design);
    let coef = if slots.is_empty() {
        DVector::zeros(support.len())
    } else {
        let svd = design.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let tol = slots.len().max(support.len()) as f64 * f64::EPSILON * smax;
        svd.solve(&target, tol).ok()?
    };
    let resid = if slots.is_empty() { 0.0 } else { (&design * &coef - &target).amax() };
    if resid >= CONSISTENCY_TOLERANCE * scale {
        return None;
    }
    for (k, &j) in support.iter().enumerate() {
        row[j] = coef[k];
    }
    let alternative = (rank < support.len()).then(|| {
        // Any null direction of the restricted design gives a second solution.
        let dir = null_direction(&design, support.len());
        let mut other = row.clone();
        for (k, &j) in support.iter().enumerate() {
            other[j] += dir[k];
        }
        other
    });
    Some(Candidate { row, alternative })
}

fn null_direction(design: &DMatrix<f64>, cols: usize) -> DVector<f64> {
    if design.nrows() == 0 {
        let mut e = DVector::zeros(cols);
        e[0] = 1.0;
        return e;
    }
    // Right singular vector of the smallest singular value.
    let gram = design.transpose() * design;
    let eig = gram.symmetric_eigen();
    let k = eig.eigenvalues.imin();
    eig.eigenvectors.column(k).into_owned()
}

fn rows_differ(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    (a - b).amax() > CONSISTENCY_TOLERANCE * (1.0 + a.amax().max(b.amax()))
}

/// Recovers an `S`-sparse zero-diagonal adjacency from noiseless masked data
/// by trying every support of size at most `S` in each row.
///
/// For a candidate support only the slots where the row and the whole
/// support are sampled are used. The sparsest consistent row is returned;
/// any other consistent row that differs from it makes the row
/// non-identifiable.
pub fn noiseless_recovery_oracle(obs: &MaskedObservationMatrix, sparsity: usize) -> Result<TopologyMatrix> {
    noiseless_recovery_oracle_with_budget(obs, sparsity, DEFAULT_SUBSET_BUDGET)
}

pub fn noiseless_recovery_oracle_with_budget(
    obs: &MaskedObservationMatrix,
    sparsity: usize,
    budget: u64,
) -> Result<TopologyMatrix> {
    let n = obs.n();
    let per_row: u64 = (0..=sparsity.min(n.saturating_sub(1)))
        .map(|k| binomial(n.saturating_sub(1), k))
        .fold(0u64, |a, b| a.saturating_add(b));
    let mut used = 0;
    spend(&mut used, per_row.saturating_mul(n as u64), budget, "the recovery search")?;

    let mut adj = DMatrix::zeros(n, n);
    for row in 0..n {
        let others: Vec<usize> = (0..n).filter(|&j| j != row).collect();
        let mut chosen: Option<DVector<f64>> = None;
        for size in 0..=sparsity.min(others.len()) {
            for support in others.iter().copied().combinations(size) {
                let Some(cand) = fit_support(obs, row, &support) else { continue };
                if let Some(other) = cand.alternative {
                    return Err(Error::NonIdentifiable {
                        row,
                        first: cand.row.as_slice().to_vec(),
                        second: other.as_slice().to_vec(),
                    });
                }
                match &chosen {
                    None => chosen = Some(cand.row),
                    Some(first) if rows_differ(first, &cand.row) => {
                        return Err(Error::NonIdentifiable {
                            row,
                            first: first.as_slice().to_vec(),
                            second: cand.row.as_slice().to_vec(),
                        })
                    }
                    Some(_) => {}
                }
            }
        }
        let Some(found) = chosen else {
            return Err(Error::InconsistentData { row });
        };
        adj.set_row(row, &found.transpose());
    }
    TopologyMatrix::new(adj, true)
}

/// Block-diagonal adjacency of `blocks` 2x2 swap blocks `[[0, 1], [1, 0]]`.
/// Every row has one nonzero and `I - A` has a null space of dimension
/// `blocks`.
pub fn swap_block_adjacency(blocks: usize) -> TopologyMatrix {
    let n = 2 * blocks;
    let mut a = DMatrix::zeros(n, n);
    for b in 0..blocks {
        a[(2 * b, 2 * b + 1)] = 1.0;
        a[(2 * b + 1, 2 * b)] = 1.0;
    }
    TopologyMatrix::new(a, true).expect("swap blocks have a zero diagonal")
}

/// `slots` noiseless SEM signals `s = A s`: random Gaussian combinations of
/// an orthonormal basis of the null space of `I - A`.
pub fn null_space_signals<R: Rng + ?Sized>(adj: &TopologyMatrix, slots: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let n = adj.n();
    let m = DMatrix::identity(n, n) - adj.entries();
    let svd = m.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Numeric("SVD failed".into()))?;
    let smax = svd.singular_values.max().max(1.0);
    let tol = n as f64 * f64::EPSILON * smax * 16.0;
    let basis: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= tol)
        .map(|(k, _)| v_t.row(k).transpose())
        .collect();
    if basis.is_empty() {
        return Err(Error::InvalidArgument("I - A is nonsingular; no noiseless signals exist".into()));
    }
    let mut out = DMatrix::zeros(n, slots);
    for t in 0..slots {
        let mut col = DVector::zeros(n);
        for b in &basis {
            col.axpy(standard_normal(rng), b, 1.0);
        }
        out.set_column(t, &col);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn kruskal_of_identity() {
        assert_eq!(kruskal_rank(&DMatrix::identity(5, 5)).unwrap(), 5);
    }

    #[test]
    fn kruskal_with_repeated_column() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 2.0, 2.0, 1.0, 0.0, 0.0, 3.0]);
        assert_eq!(kruskal_rank(&m).unwrap(), 1);
    }

    #[test]
    fn kruskal_with_zero_column() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 3.0, 0.0, 1.0]);
        assert_eq!(kruskal_rank(&m).unwrap(), 0);
    }

    #[test]
    fn kruskal_budget() {
        let m = DMatrix::identity(21, 21);
        assert!(matches!(kruskal_rank(&m), Err(Error::BudgetExceeded(_))));
    }

    #[test]
    fn as1_on_ring() {
        let n = 5;
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            a[(i, (i + 1) % n)] = 1.0;
            a[(i, (i + 2) % n)] = 0.5;
        }
        let a = TopologyMatrix::new(a, true).unwrap();
        assert!(check_as1(&a, 2));
        assert!(!check_as1(&a, 1));
        assert!(check_as1(&TopologyMatrix::zeros(4, true), 0));
    }

    #[test]
    fn as2_needs_enough_full_columns() {
        let x = DMatrix::from_fn(4, 3, |i, t| (i * 3 + t) as f64 + 1.0);
        let mut mask = DMatrix::from_element(4, 3, true);
        mask[(0, 1)] = false;
        mask[(2, 2)] = false;
        let obs = MaskedObservationMatrix::from_signals(&x, mask).unwrap();
        let v = check_as2(&obs, 1).unwrap();
        assert!(!v.satisfied);
    }

    #[test]
    fn as2_fails_on_equal_columns() {
        let col = DVector::from_column_slice(&[1.0, -2.0, 0.5]);
        let x = DMatrix::from_columns(&[col.clone(), col.clone(), col]);
        let v = check_as2(&MaskedObservationMatrix::fully_observed(x).unwrap(), 1).unwrap();
        assert!(!v.satisfied);
        assert_eq!(v.kruskal_value, 1);
    }

    #[test]
    fn as3_fails_for_one_sample_per_slot() {
        let n = 4;
        let x = DMatrix::from_fn(n, n, |i, t| if i == t { 1.0 + i as f64 } else { 0.0 });
        let mask = DMatrix::from_fn(n, n, |i, t| i == t);
        let v = check_as3(&MaskedObservationMatrix::new(x, mask).unwrap(), 1).unwrap();
        assert!(!v.satisfied);
        assert_eq!(v.rows, Some(vec![0, 1]));
    }

    #[test]
    fn unsampled_entries_must_be_zero() {
        let x = DMatrix::from_element(2, 2, 1.0);
        let mask = DMatrix::from_element(2, 2, false);
        assert!(MaskedObservationMatrix::new(x, mask).is_err());
    }

    #[test]
    fn swap_blocks_recovered_from_full_data() {
        let a = swap_block_adjacency(4);
        let x = null_space_signals(&a, 6, &mut seeded(3)).unwrap();
        assert!((&x - a.entries() * &x).amax() < 1e-12);
        let obs = MaskedObservationMatrix::fully_observed(x).unwrap();
        assert!(check_as2(&obs, 1).unwrap().satisfied);
        let rec = noiseless_recovery_oracle(&obs, 1).unwrap();
        assert!((rec.entries() - a.entries()).amax() < 1e-8);
        assert_eq!(rec.support(0.0), a.support(0.0));
    }

    #[test]
    fn proportional_columns_are_not_identifiable() {
        let base = DVector::from_column_slice(&[1.0, 2.0, -1.0, 0.5]);
        let x = DMatrix::from_fn(4, 5, |i, t| base[i] * (t as f64 + 1.0));
        let obs = MaskedObservationMatrix::fully_observed(x).unwrap();
        assert!(matches!(noiseless_recovery_oracle(&obs, 1), Err(Error::NonIdentifiable { .. })));
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(20, 10), 184_756);
    }
}
