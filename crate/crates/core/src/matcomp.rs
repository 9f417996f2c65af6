//! Low-rank completion of the (DNN x MTL) latency matrix.
//!
//! A new DNN contributes a row with two observed entries (MTL=1 and MTL=n,
//! both known after profiling); fully-swept DNNs contribute complete rows. The
//! matrix is factored as `U * V^T` with `rank` columns by alternating least
//! squares on the observed entries only, and the product fills in the rest.
//!
//! Each least-squares solve carries a small proximal term `lambda * |x - x_prev|^2`.
//! It keeps under-determined rows well posed and vanishes at the fixed point,
//! so exactly low-rank inputs are recovered without shrinkage.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RANK: usize = 2;
pub const DEFAULT_MAX_ITERS: usize = 1000;
pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_LAMBDA: f64 = 1e-6;
pub const DEFAULT_SEED: u64 = 0x5eed;
/// Ridge schedule `(first-sweep weight, per-sweep decay)` of each ALS run, in
/// unit-RMS data units. The ridge is dropped once it falls below `lambda`.
/// Restarts stop at the first run that converges or that reproduces an
/// earlier run's residual.
const RIDGE_SCHEDULES: [(f64, f64); 8] = [
    (10.0, 0.9),
    (0.1, 0.9),
    (100.0, 0.9),
    (0.1, 0.97),
    (1.0, 0.97),
    (10.0, 0.97),
    (1.0, 0.9),
    (100.0, 0.97),
];
/// A run stops once its residual improves by less than this fraction over
/// `STALL_WINDOW` sweeps.
const STALL_RATIO: f64 = 1e-4;
const STALL_WINDOW: usize = 20;
const SPECTRAL_ITERS: usize = 100;
/// Relative residual difference under which two runs count as the same fit.
const AGREEMENT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompletionConfig {
    pub rank: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        CompletionConfig {
            rank: DEFAULT_RANK,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            lambda: DEFAULT_LAMBDA,
            seed: DEFAULT_SEED,
        }
    }
}

/// Partially observed latency matrix; rows are DNNs, columns MTL 1..=N.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyMatrix {
    pub row_ids: Vec<String>,
    pub cols: Vec<u32>,
    rows: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl LatencyMatrix {
    /// Builds a matrix from per-row `Option` values (`None` = unobserved).
    pub fn from_rows(
        row_ids: Vec<String>,
        cols: Vec<u32>,
        data: &[Vec<Option<f64>>],
    ) -> Result<Self> {
        let n2 = cols.len();
        if data.is_empty() || n2 == 0 {
            return Err(Error::InvalidMatrix("matrix is empty".into()));
        }
        if row_ids.len() != data.len() {
            return Err(Error::InvalidMatrix("one id per row required".into()));
        }
        let mut values = Vec::with_capacity(data.len() * n2);
        let mut mask = Vec::with_capacity(data.len() * n2);
        for (i, row) in data.iter().enumerate() {
            if row.len() != n2 {
                return Err(Error::InvalidMatrix(format!(
                    "row {i} has {} entries, expected {n2}",
                    row.len()
                )));
            }
            for v in row {
                match v {
                    Some(x) if x.is_finite() && *x > 0.0 => {
                        values.push(*x);
                        mask.push(true);
                    }
                    Some(x) => {
                        return Err(Error::InvalidMatrix(format!(
                            "observed latency must be positive, got {x} in row {i}"
                        )))
                    }
                    None => {
                        values.push(0.0);
                        mask.push(false);
                    }
                }
            }
        }
        Ok(LatencyMatrix {
            row_ids,
            cols,
            rows: data.len(),
            values,
            mask,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let k = i * self.n_cols() + j;
        self.mask[k].then_some(self.values[k])
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.n_cols() + j]
    }

    fn observed_in_row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.n_cols()).filter_map(move |j| self.get(i, j).map(|v| (j, v)))
    }

    fn observed_in_col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.rows).filter_map(move |i| self.get(i, j).map(|v| (i, v)))
    }

    /// Whether the matrix has the shape the MTL estimator expects: every row
    /// with at least two observations and at least one complete row.
    pub fn has_estimator_structure(&self) -> bool {
        let full = (0..self.rows).any(|i| self.observed_in_row(i).count() == self.n_cols());
        full && (0..self.rows).all(|i| self.observed_in_row(i).count() >= 2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    rows: usize,
    cols: usize,
    estimates: Vec<f64>,
    pub rank_used: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Relative residual over the observed entries at exit.
    pub residual: f64,
}

impl CompletionResult {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.estimates[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.estimates[i * self.cols..(i + 1) * self.cols]
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }
}

/// Solves `a x = b` for a small symmetric positive definite `a` (row-major,
/// `r x r`) by Cholesky.
fn solve_spd(a: &mut [f64], b: &mut [f64], r: usize) -> Option<()> {
    for j in 0..r {
        let mut d = a[j * r + j];
        for k in 0..j {
            d -= a[j * r + k] * a[j * r + k];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        a[j * r + j] = d;
        for i in j + 1..r {
            let mut s = a[i * r + j];
            for k in 0..j {
                s -= a[i * r + k] * a[j * r + k];
            }
            a[i * r + j] = s / d;
        }
    }
    for i in 0..r {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * r + k] * b[k];
        }
        b[i] = s / a[i * r + i];
    }
    for i in (0..r).rev() {
        let mut s = b[i];
        for k in i + 1..r {
            s -= a[k * r + i] * b[k];
        }
        b[i] = s / a[i * r + i];
    }
    Some(())
}

/// Observed entries grouped by row (or by column), compressed: the entries of
/// group `g` are `idx[ptr[g]..ptr[g + 1]]` with values `val[..]` at the same
/// positions.
struct Groups {
    ptr: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl Groups {
    fn new(n: usize, entries: impl Iterator<Item = (usize, usize, f64)> + Clone) -> Self {
        let mut ptr = vec![0; n + 1];
        for (g, _, _) in entries.clone() {
            ptr[g + 1] += 1;
        }
        for g in 0..n {
            ptr[g + 1] += ptr[g];
        }
        let mut fill = ptr.clone();
        let total = ptr[n];
        let (mut idx, mut val) = (vec![0; total], vec![0.0; total]);
        for (g, k, x) in entries {
            idx[fill[g]] = k;
            val[fill[g]] = x;
            fill[g] += 1;
        }
        Groups { ptr, idx, val }
    }
}

/// Least-squares update of every factor row in `target` against the fixed
/// factor `other`, with proximal weight `lambda` and ridge weight `ridge`.
/// `a` and `b` are scratch buffers of length `r*r` and `r`.
fn update_factors(
    target: &mut [f64],
    other: &[f64],
    groups: &Groups,
    r: usize,
    (lambda, ridge): (f64, f64),
    a: &mut [f64],
    b: &mut [f64],
) {
    for (g, row) in target.chunks_exact_mut(r).enumerate() {
        a.fill(0.0);
        b.fill(0.0);
        let span = groups.ptr[g]..groups.ptr[g + 1];
        for (&k, &x) in groups.idx[span.clone()].iter().zip(&groups.val[span]) {
            let o = &other[k * r..(k + 1) * r];
            for p in 0..r {
                b[p] += o[p] * x;
                // Only the lower triangle is read by the solver.
                for q in 0..=p {
                    a[p * r + q] += o[p] * o[q];
                }
            }
        }
        for p in 0..r {
            a[p * r + p] += lambda + ridge;
            b[p] += lambda * row[p];
        }
        if solve_spd(a, b, r).is_some() {
            row.copy_from_slice(b);
        }
    }
}

/// Top-`r` right singular vectors of the zero-filled matrix given by its
/// observed `(row, col, value)` entries, by orthogonal iteration on `M^T M`.
/// Returned row-major as `n2 x r`.
fn spectral_start(observed: &[(usize, usize, f64)], n2: usize, r: usize) -> Vec<f64> {
    let mut rows: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for &(i, j, x) in observed {
        rows.entry(i).or_default().push((j, x));
    }
    let mut gram = vec![0.0; n2 * n2];
    for entries in rows.values() {
        for &(j, x) in entries {
            for &(k, y) in entries {
                gram[j * n2 + k] += x * y;
            }
        }
    }
    // Deterministic, generically non-degenerate starting basis.
    let mut q: Vec<f64> = (0..n2 * r)
        .map(|idx| {
            let (j, p) = (idx / r, idx % r);
            1.0 / (1.0 + j as f64 + (p * n2) as f64).sqrt() + if j == p { 1.0 } else { 0.0 }
        })
        .collect();
    for _ in 0..SPECTRAL_ITERS {
        let mut next = vec![0.0; n2 * r];
        for j in 0..n2 {
            for k in 0..n2 {
                let g = gram[j * n2 + k];
                for p in 0..r {
                    next[j * r + p] += g * q[k * r + p];
                }
            }
        }
        // Modified Gram-Schmidt on the columns.
        for p in 0..r {
            for prev in 0..p {
                let dot: f64 = (0..n2).map(|j| next[j * r + p] * next[j * r + prev]).sum();
                for j in 0..n2 {
                    next[j * r + p] -= dot * next[j * r + prev];
                }
            }
            let len = (0..n2).map(|j| next[j * r + p].powi(2)).sum::<f64>().sqrt();
            if len > 0.0 {
                for j in 0..n2 {
                    next[j * r + p] /= len;
                }
            }
        }
        q = next;
    }
    q
}

/// Fits a rank-`rank` factorization to the observed entries and fills in the
/// rest. Estimates that come out non-positive are clamped to the smallest
/// observed value of their row.
pub fn complete(m: &LatencyMatrix, cfg: &CompletionConfig) -> Result<CompletionResult> {
    let (n1, n2, r) = (m.n_rows(), m.n_cols(), cfg.rank);
    if r == 0 || r > n1.min(n2) {
        return Err(Error::RankInfeasible {
            rank: r,
            rows: n1,
            cols: n2,
        });
    }
    for i in 0..n1 {
        if m.observed_in_row(i).next().is_none() {
            return Err(Error::EmptyRow(i));
        }
    }
    for j in 0..n2 {
        if m.observed_in_col(j).next().is_none() {
            return Err(Error::InvalidMatrix(format!(
                "column {j} has no observed entries"
            )));
        }
    }

    // Work on a unit-RMS copy so lambda and tol are scale free.
    let observed: Vec<(usize, usize, f64)> = (0..n1)
        .flat_map(|i| m.observed_in_row(i).map(move |(j, v)| (i, j, v)))
        .collect();
    let scale =
        (observed.iter().map(|&(_, _, v)| v * v).sum::<f64>() / observed.len() as f64).sqrt();
    let observed: Vec<(usize, usize, f64)> = observed
        .into_iter()
        .map(|(i, j, x)| (i, j, x / scale))
        .collect();
    let by_row = Groups::new(n1, observed.iter().map(|&(i, j, x)| (i, j, x)));
    let by_col = Groups::new(n2, observed.iter().map(|&(i, j, x)| (j, i, x)));
    let total: f64 = observed.iter().map(|&(_, _, x)| x * x).sum();
    let residual = |u: &[f64], v: &[f64]| {
        let err: f64 = observed
            .iter()
            .map(|&(i, j, x)| {
                let fit: f64 = (0..r).map(|p| u[i * r + p] * v[j * r + p]).sum();
                (fit - x).powi(2)
            })
            .sum();
        (err / total).sqrt()
    };

    // The first run starts from the spectral estimate. ALS can still stall in
    // a poor basin, so further runs restart from seeded random factors with a
    // different ridge schedule until one converges, keeping the best fit.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut a_buf, mut b_buf) = (vec![0.0; r * r], vec![0.0; r]);
    let mut iterations = 0;
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    for (attempt, &(ridge_start, ridge_decay)) in RIDGE_SCHEDULES.iter().enumerate() {
        let mut u = vec![0.0; n1 * r];
        let mut v: Vec<f64> = if attempt == 0 {
            spectral_start(&observed, n2, r)
        } else {
            (0..n2 * r).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        let mut res = f64::INFINITY;
        let mut history = Vec::with_capacity(cfg.max_iters);
        let mut ridge = ridge_start;
        for _ in 0..cfg.max_iters {
            iterations += 1;
            if ridge <= cfg.lambda {
                ridge = 0.0;
            }
            let weights = (cfg.lambda, ridge);
            update_factors(&mut u, &v, &by_row, r, weights, &mut a_buf, &mut b_buf);
            update_factors(&mut v, &u, &by_col, r, weights, &mut a_buf, &mut b_buf);
            res = residual(&u, &v);
            if res < cfg.tol {
                break;
            }
            if ridge > 0.0 {
                ridge *= ridge_decay;
                continue;
            }
            history.push(res);
            if history.len() > STALL_WINDOW {
                let earlier = history[history.len() - 1 - STALL_WINDOW];
                if earlier - res <= STALL_RATIO * earlier {
                    break;
                }
            }
        }
        log::trace!(
            "completion run {attempt}: residual {res:e} after {iterations} sweeps in total"
        );
        // Two runs settling on the same residual have found the same minimum;
        // further restarts only matter while runs disagree.
        let agrees = best
            .as_ref()
            .is_some_and(|b| (b.0 - res).abs() <= AGREEMENT * b.0);
        if best.as_ref().is_none_or(|b| res < b.0) {
            best = Some((res, u, v));
        }
        if res < cfg.tol || agrees {
            break;
        }
    }
    let (res, u, v) = best.expect("at least one restart");

    let mut estimates = vec![0.0; n1 * n2];
    for i in 0..n1 {
        let floor = m
            .observed_in_row(i)
            .map(|(_, x)| x)
            .fold(f64::INFINITY, f64::min);
        for j in 0..n2 {
            let fit: f64 = (0..r).map(|p| u[i * r + p] * v[j * r + p]).sum::<f64>() * scale;
            estimates[i * n2 + j] = if fit > 0.0 { fit } else { floor };
        }
    }
    Ok(CompletionResult {
        rows: n1,
        cols: n2,
        estimates,
        rank_used: r,
        iterations,
        converged: res < cfg.tol,
        residual: res,
    })
}

/// Estimates a new DNN's latency at MTL 1..=`n_cols` from a few observed
/// `(mtl, latency ms)` entries plus fully-swept catalog rows. Observed entries
/// are returned unchanged.
pub fn estimate_row(
    catalog_rows: &[Vec<f64>],
    observed: &[(u32, f64)],
    n_cols: usize,
    cfg: &CompletionConfig,
) -> Result<Vec<f64>> {
    if n_cols == 0 {
        return Err(Error::InvalidMatrix("no MTL columns".into()));
    }
    if observed.is_empty() {
        return Err(Error::InvalidMatrix("new row has no observations".into()));
    }
    for &(mtl, lat) in observed {
        if mtl == 0 || mtl as usize > n_cols || !(lat > 0.0) {
            return Err(Error::InvalidMatrix(format!(
                "observation ({mtl}, {lat}) outside MTL 1..={n_cols} or non-positive"
            )));
        }
    }
    if n_cols == 1 {
        return Ok(vec![observed[0].1]);
    }
    if catalog_rows.is_empty() {
        return Err(Error::InvalidMatrix("catalog has no rows".into()));
    }

    let mut data: Vec<Vec<Option<f64>>> = catalog_rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            if row.len() < n_cols {
                return Err(Error::InvalidMatrix(format!(
                    "catalog row {i} has {} entries, need {n_cols}",
                    row.len()
                )));
            }
            Ok(row[..n_cols].iter().map(|&x| Some(x)).collect())
        })
        .collect::<Result<_>>()?;
    let mut new_row = vec![None; n_cols];
    for &(mtl, lat) in observed {
        new_row[mtl as usize - 1] = Some(lat);
    }
    data.push(new_row);

    let mut ids: Vec<String> = (0..catalog_rows.len())
        .map(|i| format!("catalog-{i}"))
        .collect();
    ids.push("new".into());
    let cols = (1..=n_cols as u32).collect();
    let matrix = LatencyMatrix::from_rows(ids, cols, &data)?;
    let rank = cfg.rank.min(matrix.n_rows()).min(n_cols);
    let result = complete(&matrix, &CompletionConfig { rank, ..*cfg })?;

    let mut row = result.row(matrix.n_rows() - 1).to_vec();
    for &(mtl, lat) in observed {
        row[mtl as usize - 1] = lat;
    }
    Ok(row)
}

/// Largest `k <= max_mtl` whose estimate (1-based, `estimates[k - 1]`) is
/// strictly below the SLO; 1 when none is.
pub fn pick_mtl(estimates: &[f64], slo: f64, max_mtl: u32) -> u32 {
    let limit = (max_mtl as usize).min(estimates.len());
    (1..=limit)
        .rev()
        .find(|&k| estimates[k - 1] < slo)
        .map_or(1, |k| k as u32)
}

/// One fully-swept DNN: latency (ms) keyed by MTL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyRow {
    pub dnn_id: String,
    pub latency_ms: BTreeMap<u32, f64>,
}

/// Fixture file of fully-swept latency rows (JSON array of [`LatencyRow`]).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LatencyCatalog {
    pub rows: Vec<LatencyRow>,
}

impl LatencyCatalog {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let rows = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(LatencyCatalog { rows })
    }

    /// Dense rows covering MTL 1..=`n_cols`, skipping `exclude` and any row
    /// missing a column.
    pub fn dense_rows(&self, n_cols: usize, exclude: Option<&str>) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .filter(|r| Some(r.dnn_id.as_str()) != exclude)
            .filter_map(|r| {
                (1..=n_cols as u32)
                    .map(|k| r.latency_ms.get(&k).copied())
                    .collect::<Option<Vec<f64>>>()
            })
            .collect()
    }
}
