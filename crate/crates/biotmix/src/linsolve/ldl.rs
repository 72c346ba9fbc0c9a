//! Sparse LDL^T factorization for symmetric indefinite matrices.
//!
//! Left-looking, with dynamic pivoting by delay: each variable is taken in
//! the fill-reducing preference order when its diagonal passes a threshold
//! test against its Schur column. A variable that fails the test is parked,
//! not pivoted around; eliminating some later row in its place would merge
//! that row's clique into the live frontier, and the fill from repeated
//! merges compounds. A parked variable rejoins the candidate queue as soon
//! as an elimination writes into its row, which feeds its Schur diagonal;
//! for the saddle blocks here (zero pressure and mean-value diagonals) that
//! happens a few steps later, so parking perturbs the elimination order only
//! locally. Variables still weak once the preference order is exhausted are
//! forced through Bunch-Kaufman 1x1 or 2x2 pivots with an order-biased
//! partner choice, and the inertia falls out of the pivot signs.
//!
//! Storage is two-sided while factoring. Column copies of L drive the update
//! walks and are pruned in place as their rows are eliminated, so a walk
//! pays only for entries that can still receive updates. Row lists
//! accumulate (step, multiplier) pairs and are the only thing the finished
//! factor keeps; both triangular solves run off them.

use crate::sparse::CscMatrix;
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinSolveError {
    #[error("matrix is singular at variable {index}")]
    Singular { index: usize },
    #[error("iterative refinement stalled at backward error {relres:.3e}")]
    RefinementFailed { relres: f64 },
    #[error("matrix must be square and symmetric: {0}")]
    BadInput(String),
    #[error("mass matrix is not positive definite")]
    MassNotPositiveDefinite,
    #[error("eigensolver failed to converge: {0}")]
    EigenFailed(String),
    #[error(transparent)]
    Sparse(#[from] crate::sparse::SparseError),
}

/// Threshold for accepting a diagonal pivot relative to its column maximum.
const PIVOT_THRESHOLD: f64 = 0.1;
/// Fraction of the column maximum a Schur-column entry must reach to be a
/// pivot-partner candidate.
const PARTNER_FRACTION: f64 = 0.5;
/// Relative magnitude below which a pivot with no off-diagonal alternative
/// marks the matrix singular.
const SINGULAR_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy)]
enum Pivot {
    /// 1x1 pivot value.
    Single(f64),
    /// First column of a 2x2 pivot [[a, b], [b, c]].
    PairFirst { a: f64, b: f64, c: f64 },
    /// Second column of a 2x2 pivot; the block lives on the first.
    PairSecond,
}

#[derive(Debug)]
struct FactorColumn {
    /// Row indices still uneliminated as of the last walk, ascending.
    rows: Vec<u32>,
    vals: Vec<f64>,
}

/// One row of L in step coordinates, split into parallel arrays to keep the
/// entry footprint at 12 bytes. The two entries of a 2x2 block are adjacent,
/// first column first.
#[derive(Debug, Clone, Default)]
struct RowList {
    steps: Vec<u32>,
    vals: Vec<f64>,
}

impl RowList {
    #[inline]
    fn push(&mut self, t: usize, l: f64) {
        self.steps.push(t as u32);
        self.vals.push(l);
    }

    fn len(&self) -> usize {
        self.steps.len()
    }

    fn shrink(&mut self) {
        self.steps.shrink_to_fit();
        self.vals.shrink_to_fit();
    }
}

/// LDL^T factorization of the diagonally equilibrated matrix S A S.
#[derive(Debug)]
pub struct LdlFactor {
    n: usize,
    /// order[t] = original variable eliminated at step t.
    order: Vec<usize>,
    /// rowlist[v] = row v of L; every referenced step precedes v's own
    /// elimination.
    rowlist: Vec<RowList>,
    pivots: Vec<Pivot>,
    /// Equilibration scale: the factorization is of diag(s) A diag(s).
    scale: Vec<f64>,
    inertia: (usize, usize, usize),
}

/// Parked variables awaiting diagonal contributions, and the retry queue of
/// those whose running Schur diagonal has grown enough to plausibly pass the
/// pivot test. The diagonal of every row is maintained incrementally (the
/// update from one factor entry is l*s); gating retries on it keeps each
/// parked variable from recomputing its column on every neighborhood event.
/// The queue is keyed by preference rank so retries happen as close to the
/// planned order as the numerics allow.
struct Retry {
    parked: Vec<bool>,
    queued: Vec<bool>,
    heap: BinaryHeap<Reverse<(usize, usize)>>,
    diag: Vec<f64>,
    /// Column maximum observed when the variable was (re)parked; the retry
    /// gate compares the running diagonal against it. Stale if the column
    /// changes afterwards, which costs at most an extra park round trip.
    lambda_park: Vec<f64>,
}

impl Retry {
    /// Apply one factor entry's Schur contribution to row i's diagonal and
    /// queue i if it is parked and now looks eliminable.
    fn feed(&mut self, i: usize, amount: f64, rank: &[usize]) {
        self.diag[i] -= amount;
        if self.parked[i]
            && !self.queued[i]
            && self.diag[i].abs() >= PIVOT_THRESHOLD * self.lambda_park[i]
        {
            self.queued[i] = true;
            self.heap.push(Reverse((rank[i], i)));
        }
    }
}

/// One slot of the dense accumulator; stamp and value share a cache line.
#[derive(Clone, Copy)]
struct Cell {
    stamp: u64,
    work: f64,
}

/// Scratch used only while factoring.
struct FactorState {
    eliminated: Vec<bool>,
    /// Row lists under construction; moved into the factor when done.
    rowlist: Vec<RowList>,
    /// Dense accumulator with a stamped sparsity pattern.
    cells: Vec<Cell>,
    pattern: Vec<usize>,
    epoch: u64,
}

impl FactorState {
    fn new(n: usize) -> Self {
        FactorState {
            eliminated: vec![false; n],
            rowlist: vec![RowList::default(); n],
            cells: vec![Cell { stamp: 0, work: 0.0 }; n],
            pattern: Vec::new(),
            epoch: 0,
        }
    }

    #[inline]
    fn touch(&mut self, i: usize, v: f64) {
        let c = &mut self.cells[i];
        if c.stamp != self.epoch {
            c.stamp = self.epoch;
            c.work = 0.0;
            self.pattern.push(i);
        }
        c.work += v;
    }
}

impl LdlFactor {
    /// Factor a square symmetric matrix given a fill-reducing elimination
    /// preference. Equilibration is applied internally.
    pub fn new(matrix: &CscMatrix, preference: &[usize]) -> Result<Self, LinSolveError> {
        let n = matrix.nrows;
        if matrix.ncols != n {
            return Err(LinSolveError::BadInput(format!(
                "{} x {}",
                matrix.nrows, matrix.ncols
            )));
        }
        if n > u32::MAX as usize {
            return Err(LinSolveError::BadInput("dimension exceeds u32 rows".into()));
        }
        if preference.len() != n {
            return Err(LinSolveError::BadInput(
                "preference order length mismatch".into(),
            ));
        }
        let mut rank = vec![0usize; n];
        for (k, &v) in preference.iter().enumerate() {
            rank[v] = k;
        }

        // Symmetric diagonal equilibration; rows with zero diagonal (the
        // saddle blocks) keep unit scale.
        let scale: Vec<f64> = matrix
            .diagonal()
            .iter()
            .map(|&d| {
                let a = d.abs();
                if a > 1e-300 {
                    1.0 / a.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let eq = matrix.scale_symmetric(&scale)?;
        let amax = eq
            .vals
            .iter()
            .fold(0.0f64, |m, &v| m.max(v.abs()))
            .max(1e-300);
        let death = SINGULAR_TOL * amax;

        let mut state = FactorState::new(n);
        let mut cols: Vec<FactorColumn> = Vec::with_capacity(n);
        let mut pivots: Vec<Pivot> = Vec::with_capacity(n);
        let mut order: Vec<usize> = Vec::with_capacity(n);
        let mut inertia = (0usize, 0usize, 0usize);

        let emit_single = |v: usize,
                               d: f64,
                               col: Vec<(usize, f64)>,
                               state: &mut FactorState,
                               cols: &mut Vec<FactorColumn>,
                               pivots: &mut Vec<Pivot>,
                               order: &mut Vec<usize>,
                               inertia: &mut (usize, usize, usize),
                               retry: &mut Retry| {
            let t = cols.len();
            let mut rows = Vec::with_capacity(col.len());
            let mut vals = Vec::with_capacity(col.len());
            for (i, s) in col {
                let l = s / d;
                if l != 0.0 {
                    state.rowlist[i].push(t, l);
                    rows.push(i as u32);
                    vals.push(l);
                    retry.feed(i, l * s, &rank);
                }
            }
            cols.push(FactorColumn { rows, vals });
            pivots.push(Pivot::Single(d));
            order.push(v);
            state.eliminated[v] = true;
            // Row v is frozen from here on.
            state.rowlist[v].shrink();
            release_dead(&state.rowlist[v], cols, pivots);
            if d > 0.0 {
                inertia.0 += 1;
            } else {
                inertia.1 += 1;
            }
        };

        let mut retry = Retry {
            parked: vec![false; n],
            queued: vec![false; n],
            heap: BinaryHeap::new(),
            diag: eq.diagonal(),
            lambda_park: vec![0.0; n],
        };
        let mut pref_ptr = 0usize;
        let mut forced_ptr = 0usize;
        while order.len() < n {
            // Next candidate: a parked variable whose row has been written to
            // since parking comes first (it is the earliest the order wanted),
            // then the next fresh variable. Once both sources are exhausted
            // the remaining variables must be forced through regardless.
            let (j, forced) = loop {
                if let Some(Reverse((_, c))) = retry.heap.pop() {
                    retry.queued[c] = false;
                    if state.eliminated[c] {
                        continue;
                    }
                    break (c, false);
                }
                while pref_ptr < n
                    && (state.eliminated[preference[pref_ptr]] || retry.parked[preference[pref_ptr]])
                {
                    pref_ptr += 1;
                }
                if pref_ptr < n {
                    break (preference[pref_ptr], false);
                }
                while state.eliminated[preference[forced_ptr]] {
                    forced_ptr += 1;
                }
                break (preference[forced_ptr], true);
            };

            let (sjj, col_j) = compute_column(&eq, j, &mut cols, &pivots, &mut state);
            let lambda = col_max(&col_j).0;

            if lambda <= death {
                if sjj.abs() <= death {
                    return Err(LinSolveError::Singular { index: j });
                }
                emit_single(j, sjj, col_j, &mut state, &mut cols, &mut pivots, &mut order, &mut inertia, &mut retry);
                continue;
            }
            if sjj.abs() >= PIVOT_THRESHOLD * lambda {
                emit_single(j, sjj, col_j, &mut state, &mut cols, &mut pivots, &mut order, &mut inertia, &mut retry);
                continue;
            }
            if !forced {
                retry.parked[j] = true;
                // Refresh the running diagonal from the authoritative column
                // computation; the incremental copy only gates retries.
                retry.diag[j] = sjj;
                retry.lambda_park[j] = lambda;
                continue;
            }

            // Progress is mandatory now: take the best acceptable pivot
            // involving j and a partner from its column.
            let r = partner_row(&col_j, lambda, &rank);
            let (srr, col_r) = compute_column(&eq, r, &mut cols, &pivots, &mut state);
            let sigma = col_max(&col_r).0;

            if sjj.abs() * sigma >= PIVOT_THRESHOLD * lambda * lambda {
                emit_single(j, sjj, col_j, &mut state, &mut cols, &mut pivots, &mut order, &mut inertia, &mut retry);
            } else if srr.abs() >= PIVOT_THRESHOLD * sigma {
                // The partner makes the better 1x1 pivot.
                emit_single(r, srr, col_r, &mut state, &mut cols, &mut pivots, &mut order, &mut inertia, &mut retry);
            } else {
                let sjr = lookup_sorted(&col_j, r);
                let det = sjj * srr - sjr * sjr;
                if det.abs() <= death * death {
                    return Err(LinSolveError::Singular { index: j });
                }
                emit_pair(
                    j, r, sjj, srr, sjr, &col_j, &col_r, det, &mut state, &mut cols,
                    &mut pivots, &mut order, &mut inertia, &mut retry, &rank,
                );
            }
        }

        Ok(LdlFactor {
            n,
            order,
            rowlist: state.rowlist,
            pivots,
            scale,
            inertia,
        })
    }

    /// Signs of the pivot spectrum: (positive, negative, zero). Congruence
    /// makes this the inertia of the input matrix.
    pub fn inertia(&self) -> (usize, usize, usize) {
        self.inertia
    }

    pub fn nnz_factor(&self) -> usize {
        self.rowlist.iter().map(RowList::len).sum()
    }

    /// Solve A x = b through the factorization (one direct pass).
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut y: Vec<f64> = (0..n)
            .map(|t| {
                let v = self.order[t];
                b[v] * self.scale[v]
            })
            .collect();
        // Forward: L y' = y with unit diagonal, one gather per row; every
        // entry of a row references an earlier step.
        for t in 0..n {
            let row = &self.rowlist[self.order[t]];
            let mut acc = y[t];
            for (&s, &l) in row.steps.iter().zip(&row.vals) {
                acc -= l * y[s as usize];
            }
            y[t] = acc;
        }
        // Block diagonal.
        let mut t = 0;
        while t < n {
            match self.pivots[t] {
                Pivot::Single(d) => {
                    y[t] /= d;
                    t += 1;
                }
                Pivot::PairFirst { a, b, c } => {
                    let det = a * c - b * b;
                    let (y1, y2) = (y[t], y[t + 1]);
                    y[t] = (c * y1 - b * y2) / det;
                    y[t + 1] = (-b * y1 + a * y2) / det;
                    t += 2;
                }
                Pivot::PairSecond => unreachable!("second pair column is consumed with the first"),
            }
        }
        // Backward: L^T x = y; once x[t] is final, scatter its contribution
        // into the earlier rows whose entries reference step t.
        for t in (0..n).rev() {
            let xt = y[t];
            if xt != 0.0 {
                let row = &self.rowlist[self.order[t]];
                for (&s, &l) in row.steps.iter().zip(&row.vals) {
                    y[s as usize] -= l * xt;
                }
            }
        }
        let mut x = vec![0.0; n];
        for t in 0..n {
            let v = self.order[t];
            x[v] = y[t] * self.scale[v];
        }
        x
    }
}

/// Schur-complement column j of the equilibrated matrix against all pivots
/// eliminated so far: diagonal entry plus the sorted off-diagonal pattern
/// over uneliminated rows. Every factor column walked along the way is
/// pruned of rows eliminated since its last walk.
fn compute_column(
    eq: &CscMatrix,
    j: usize,
    cols: &mut [FactorColumn],
    pivots: &[Pivot],
    state: &mut FactorState,
) -> (f64, Vec<(usize, f64)>) {
    state.epoch += 1;
    state.pattern.clear();
    let mut sjj = 0.0;

    let (rows, vals) = eq.col(j);
    for (&i, &v) in rows.iter().zip(vals) {
        if i == j {
            sjj += v;
        } else if !state.eliminated[i] {
            state.touch(i, v);
        }
    }

    let rowlist = std::mem::take(&mut state.rowlist[j]);
    let mut k = 0;
    while k < rowlist.len() {
        let t = rowlist.steps[k] as usize;
        let lj1 = rowlist.vals[k];
        k += 1;
        match pivots[t] {
            Pivot::Single(d) => {
                let coef = d * lj1;
                sjj -= lj1 * coef;
                let col = &mut cols[t];
                let mut w = 0;
                for r in 0..col.rows.len() {
                    let i = col.rows[r] as usize;
                    if state.eliminated[i] {
                        continue;
                    }
                    let v = col.vals[r];
                    col.rows[w] = i as u32;
                    col.vals[w] = v;
                    w += 1;
                    if i != j {
                        state.touch(i, -v * coef);
                    }
                }
                col.rows.truncate(w);
                col.vals.truncate(w);
                shrink_slack(&mut col.rows);
                shrink_slack(&mut col.vals);
            }
            Pivot::PairFirst { a, b, c } => {
                // The sibling entry was pushed immediately after this one.
                debug_assert_eq!(rowlist.steps[k] as usize, t + 1);
                let lj2 = rowlist.vals[k];
                k += 1;
                let coef1 = a * lj1 + b * lj2;
                let coef2 = b * lj1 + c * lj2;
                sjj -= lj1 * coef1 + lj2 * coef2;
                // The pair's pattern lives on the first column.
                let (head, tail) = cols.split_at_mut(t + 1);
                let first = &mut head[t];
                let second = &mut tail[0];
                let mut w = 0;
                for r in 0..first.rows.len() {
                    let i = first.rows[r] as usize;
                    if state.eliminated[i] {
                        continue;
                    }
                    let (v1, v2) = (first.vals[r], second.vals[r]);
                    first.rows[w] = i as u32;
                    first.vals[w] = v1;
                    second.vals[w] = v2;
                    w += 1;
                    if i != j {
                        state.touch(i, -(v1 * coef1 + v2 * coef2));
                    }
                }
                first.rows.truncate(w);
                first.vals.truncate(w);
                second.vals.truncate(w);
                shrink_slack(&mut first.rows);
                shrink_slack(&mut first.vals);
                shrink_slack(&mut second.vals);
            }
            Pivot::PairSecond => unreachable!("pair entries travel with the first column"),
        }
    }
    state.rowlist[j] = rowlist;

    let mut out: Vec<(usize, f64)> = state
        .pattern
        .iter()
        .map(|&i| (i, state.cells[i].work))
        .collect();
    out.sort_unstable_by_key(|&(i, _)| i);
    (sjj, out)
}

/// Release columns whose last live row was the variable just eliminated.
/// Such a column can never be walked again: a walk's target must hold a
/// row-list entry for it, and every such variable is now eliminated. The
/// diagonal contribution a dead column would make survives in the row lists.
fn release_dead(rowv: &RowList, cols: &mut [FactorColumn], pivots: &[Pivot]) {
    let mut k = 0;
    while k < rowv.len() {
        let t = rowv.steps[k] as usize;
        k += 1;
        match pivots[t] {
            Pivot::Single(_) => {
                if cols[t].rows.len() == 1 {
                    cols[t].rows = Vec::new();
                    cols[t].vals = Vec::new();
                }
            }
            Pivot::PairFirst { .. } => {
                // Skip the sibling entry.
                k += 1;
                if cols[t].rows.len() == 1 {
                    cols[t].rows = Vec::new();
                    cols[t].vals = Vec::new();
                    cols[t + 1].vals = Vec::new();
                }
            }
            Pivot::PairSecond => unreachable!("pair entries travel with the first column"),
        }
    }
}

/// Return backing storage once at least half of it is slack. Halving keeps
/// the total shrink cost linear in the entries pruned, and caps live column
/// memory at twice the live entries.
fn shrink_slack<T>(v: &mut Vec<T>) {
    if 2 * v.len() <= v.capacity() {
        v.shrink_to_fit();
    }
}

fn lookup_sorted(col: &[(usize, f64)], row: usize) -> f64 {
    match col.binary_search_by_key(&row, |&(i, _)| i) {
        Ok(k) => col[k].1,
        Err(_) => 0.0,
    }
}

fn col_max(col: &[(usize, f64)]) -> (f64, usize) {
    let mut best = (0.0f64, usize::MAX);
    for &(i, v) in col {
        if v.abs() > best.0 {
            best = (v.abs(), i);
        }
    }
    best
}

/// Pivot partner for a weak diagonal: of the Schur-column entries at or above
/// `PARTNER_FRACTION` of the column maximum, the row the preference order
/// reaches first. The floor keeps the eventual 1x1 swap or 2x2 pivot bounded;
/// the rank bias keeps elimination close to the fill-reducing order.
fn partner_row(col: &[(usize, f64)], lambda: f64, rank: &[usize]) -> usize {
    let floor = PARTNER_FRACTION * lambda;
    let mut best = usize::MAX;
    let mut best_rank = usize::MAX;
    for &(i, v) in col {
        if v.abs() >= floor && rank[i] < best_rank {
            best = i;
            best_rank = rank[i];
        }
    }
    // The maximum itself clears any fraction of lambda, so a candidate exists.
    best
}

/// Eliminate the 2x2 pivot (j, r): merge the two Schur columns and store the
/// transformed pair of factor columns.
#[allow(clippy::too_many_arguments)]
fn emit_pair(
    j: usize,
    r: usize,
    sjj: f64,
    srr: f64,
    sjr: f64,
    col_j: &[(usize, f64)],
    col_r: &[(usize, f64)],
    det: f64,
    state: &mut FactorState,
    cols: &mut Vec<FactorColumn>,
    pivots: &mut Vec<Pivot>,
    order: &mut Vec<usize>,
    inertia: &mut (usize, usize, usize),
    retry: &mut Retry,
    rank: &[usize],
) {
    let t = cols.len();
    let mut rows = Vec::new();
    let mut v1 = Vec::new();
    let mut v2 = Vec::new();
    let (mut ka, mut kb) = (0usize, 0usize);
    loop {
        let ia = col_j.get(ka).map(|&(i, _)| i);
        let ib = col_r.get(kb).map(|&(i, _)| i);
        let (i, sij, sir) = match (ia, ib) {
            (None, None) => break,
            (Some(i), None) => {
                ka += 1;
                (i, col_j[ka - 1].1, 0.0)
            }
            (None, Some(i)) => {
                kb += 1;
                (i, 0.0, col_r[kb - 1].1)
            }
            (Some(i1), Some(i2)) => {
                if i1 < i2 {
                    ka += 1;
                    (i1, col_j[ka - 1].1, 0.0)
                } else if i2 < i1 {
                    kb += 1;
                    (i2, 0.0, col_r[kb - 1].1)
                } else {
                    ka += 1;
                    kb += 1;
                    (i1, col_j[ka - 1].1, col_r[kb - 1].1)
                }
            }
        };
        if i == j || i == r {
            continue;
        }
        // [L1, L2] = [sij, sir] * inv([[sjj, sjr], [sjr, srr]]).
        let l1 = (sij * srr - sir * sjr) / det;
        let l2 = (-sij * sjr + sir * sjj) / det;
        if l1 != 0.0 || l2 != 0.0 {
            rows.push(i as u32);
            v1.push(l1);
            v2.push(l2);
            state.rowlist[i].push(t, l1);
            state.rowlist[i].push(t + 1, l2);
            retry.feed(i, l1 * sij + l2 * sir, rank);
        }
    }
    cols.push(FactorColumn { rows, vals: v1 });
    // The second pair column shares the first's row pattern.
    cols.push(FactorColumn {
        rows: Vec::new(),
        vals: v2,
    });
    pivots.push(Pivot::PairFirst {
        a: sjj,
        b: sjr,
        c: srr,
    });
    pivots.push(Pivot::PairSecond);
    order.push(j);
    order.push(r);
    state.eliminated[j] = true;
    state.eliminated[r] = true;
    // Rows j and r are frozen from here on.
    state.rowlist[j].shrink();
    state.rowlist[r].shrink();
    release_dead(&state.rowlist[j], cols, pivots);
    release_dead(&state.rowlist[r], cols, pivots);
    // det < 0: one eigenvalue of each sign; otherwise the trace decides.
    if det < 0.0 {
        inertia.0 += 1;
        inertia.1 += 1;
    } else if sjj + srr > 0.0 {
        inertia.0 += 2;
    } else {
        inertia.1 += 2;
    }
}
