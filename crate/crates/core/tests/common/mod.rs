//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls into the solvers under test; the helpers only use the
//! crate's data types and plain nalgebra.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use semiblind::{ObservationSet, SamplingSchedule, TopologyMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

pub fn gauss_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| gauss(rng))
}

pub fn gauss_vector<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| gauss(rng))
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().max()
}

/// Random matrix with spectral norm `scale`, optionally with a zero
/// diagonal (rescaled after clearing it).
pub fn random_contraction<R: Rng>(rng: &mut R, n: usize, scale: f64, zero_diag: bool) -> DMatrix<f64> {
    let mut a = gauss_matrix(rng, n, n);
    if zero_diag {
        a.fill_diagonal(0.0);
    }
    let s = spectral_norm(&a);
    if s > 0.0 {
        a *= scale / s;
    }
    a
}

/// Sparse random matrix: each free entry is nonzero with probability `p`.
pub fn random_sparse<R: Rng>(rng: &mut R, n: usize, p: f64, scale: f64, zero_diag: bool) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        let keep = rng.random::<f64>() < p;
        let v = gauss(rng);
        if (zero_diag && i == j) || !keep {
            0.0
        } else {
            scale * v
        }
    })
}

/// Each slot samples every node independently with probability `p`.
pub fn random_mask_schedule<R: Rng>(rng: &mut R, n: usize, slots: usize, p: f64) -> SamplingSchedule {
    let sets = (0..slots)
        .map(|_| (0..n).filter(|_| rng.random::<f64>() < p).collect())
        .collect();
    SamplingSchedule::new(n, sets).unwrap()
}

pub fn observe(values: &DMatrix<f64>, schedule: &SamplingSchedule) -> ObservationSet {
    let ys = (0..schedule.num_slots())
        .map(|t| DVector::from_iterator(schedule.slot(t).len(), schedule.slot(t).iter().map(|&i| values[(i, t)])))
        .collect();
    ObservationSet::new(schedule.clone(), ys).unwrap()
}

pub fn soft(x: f64, a: f64) -> f64 {
    x.signum() * (x.abs() - a).max(0.0)
}

/// Proximal gradient (ISTA) on
/// `sum_t ||x(t) - A0 x(t) - A1 xp(t)||^2 + l1 (||A0||_1 + ||A1||_1) + l2 (||A0||_F^2 + ||A1||_F^2)`
/// with `A0` zero-diagonal. Without `xp` the lag block stays at zero.
pub fn prox_grad_reference(
    x: &DMatrix<f64>,
    xp: Option<&DMatrix<f64>>,
    l1: f64,
    l2: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = x.nrows();
    let stacked = match xp {
        Some(xp) => {
            let mut w = DMatrix::zeros(2 * n, x.ncols());
            w.rows_mut(0, n).copy_from(x);
            w.rows_mut(n, n).copy_from(xp);
            w
        }
        None => x.clone(),
    };
    let lip = 2.0 * (spectral_norm(&(&stacked * stacked.transpose())) + l2);
    let step = 1.0 / lip;
    let mut a0 = DMatrix::zeros(n, n);
    let mut a1 = DMatrix::zeros(n, n);
    for _ in 0..2_000_000 {
        let mut r = x - &a0 * x;
        if let Some(xp) = xp {
            r -= &a1 * xp;
        }
        let g0 = -2.0 * &r * x.transpose() + 2.0 * l2 * &a0;
        let mut next0 = (&a0 - step * g0).map(|v| soft(v, step * l1));
        next0.fill_diagonal(0.0);
        let next1 = match xp {
            Some(xp) => {
                let g1 = -2.0 * &r * xp.transpose() + 2.0 * l2 * &a1;
                (&a1 - step * g1).map(|v| soft(v, step * l1))
            }
            None => DMatrix::zeros(n, n),
        };
        let change = (&next0 - &a0).amax().max((&next1 - &a1).amax());
        a0 = next0;
        a1 = next1;
        if change < 1e-15 {
            break;
        }
    }
    (a0, a1)
}

/// Per-slot minimizer of `c ||(I - A) s||^2 + ||y - M s||^2` with
/// `c = M/mu` (or 1 for an empty slot), from the normal equations.
pub fn slot_minimizer(adj: &DMatrix<f64>, idx: &[usize], y: &DVector<f64>, mu: f64) -> DVector<f64> {
    let n = adj.nrows();
    let b = DMatrix::identity(n, n) - adj;
    let c = if idx.is_empty() { 1.0 } else { idx.len() as f64 / mu };
    let mut h = c * b.transpose() * &b;
    let mut g = DVector::zeros(n);
    for (k, &i) in idx.iter().enumerate() {
        h[(i, i)] += 1.0;
        g[i] += y[k];
    }
    h.lu().solve(&g).unwrap()
}

/// Term-by-term value of the SEM objective.
pub fn sem_objective_loops(a: &DMatrix<f64>, s: &DMatrix<f64>, obs: &ObservationSet, mu: f64, l1: f64, l2: f64) -> f64 {
    let n = a.nrows();
    let mut total = 0.0;
    for t in 0..s.ncols() {
        for i in 0..n {
            let mut r = s[(i, t)];
            for j in 0..n {
                r -= a[(i, j)] * s[(j, t)];
            }
            total += r * r;
        }
        let idx = obs.indices(t);
        if !idx.is_empty() {
            let mut fit = 0.0;
            for (k, &i) in idx.iter().enumerate() {
                fit += (obs.values(t)[k] - s[(i, t)]).powi(2);
            }
            total += mu / idx.len() as f64 * fit;
        }
    }
    for i in 0..n {
        for j in 0..n {
            total += l1 * a[(i, j)].abs() + l2 * a[(i, j)] * a[(i, j)];
        }
    }
    total
}

/// Term-by-term value of the SVARM objective; `s` has `T+1` columns and
/// `obs` slot `t-1` observes column `t`.
#[allow(clippy::too_many_arguments)]
pub fn svarm_objective_loops(
    a0: &DMatrix<f64>,
    a1: &DMatrix<f64>,
    s: &DMatrix<f64>,
    z0: &DVector<f64>,
    obs: &ObservationSet,
    mu: f64,
    l1: f64,
    l2: f64,
) -> f64 {
    let n = a0.nrows();
    let mut total = 0.0;
    for i in 0..n {
        total += (s[(i, 0)] - z0[i]).powi(2);
    }
    for t in 1..s.ncols() {
        for i in 0..n {
            let mut r = s[(i, t)];
            for j in 0..n {
                r -= a0[(i, j)] * s[(j, t)] + a1[(i, j)] * s[(j, t - 1)];
            }
            total += r * r;
        }
        let idx = obs.indices(t - 1);
        if !idx.is_empty() {
            let mut fit = 0.0;
            for (k, &i) in idx.iter().enumerate() {
                fit += (obs.values(t - 1)[k] - s[(i, t)]).powi(2);
            }
            total += mu / idx.len() as f64 * fit;
        }
    }
    for a in [a0, a1] {
        for v in a.iter() {
            total += 2.0 * l1 * v.abs() + l2 * v * v;
        }
    }
    total
}

/// Simulates `s(t) = A0 s(t) + sum_k lags[k] s(t-1-k) + e(t)` for
/// `t = 1..=e.ncols()` from the given history (most recent first).
pub fn direct_multilag(
    a0: &DMatrix<f64>,
    lags: &[DMatrix<f64>],
    history: &[DVector<f64>],
    e: &DMatrix<f64>,
) -> Vec<DVector<f64>> {
    let n = a0.nrows();
    let lu = (DMatrix::identity(n, n) - a0).lu();
    let mut past: Vec<DVector<f64>> = history.to_vec();
    let mut out = Vec::new();
    for t in 0..e.ncols() {
        let mut rhs = e.column(t).into_owned();
        for (k, a) in lags.iter().enumerate() {
            rhs += a * &past[k];
        }
        let s = lu.solve(&rhs).unwrap();
        past.insert(0, s.clone());
        past.truncate(lags.len());
        out.push(s);
    }
    out
}

/// Orthonormal basis of the `b` lowest Laplacian eigenvectors, via a
/// Jacobi eigenvalue sweep written out here.
pub fn jacobi_low_basis(lap: &DMatrix<f64>, b: usize) -> DMatrix<f64> {
    let n = lap.nrows();
    let mut m = lap.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| m[(i, j)].powi(2)).sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * m[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    DMatrix::from_columns(&order[..b].iter().map(|&k| v.column(k).into_owned()).collect::<Vec<_>>())
}

pub fn topology(a: DMatrix<f64>, zero_diag: bool) -> TopologyMatrix {
    TopologyMatrix::new(a, zero_diag).unwrap()
}

pub fn max_rel_dev(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1e-300)
}
