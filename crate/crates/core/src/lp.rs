//! A bounded-variable primal simplex for row-heavy models.
//!
//! Every row `a·x` carries an implicit slack `s = a·x` bounded by the row's
//! sense and right-hand side, and every column has bounds `lo <= x <= hi`.
//! The basis therefore has one member per row. Rows whose slack is basic need
//! no linear algebra; only the block formed by the *tight* rows (nonbasic
//! slack) and the *basic* structural columns has to be inverted. That block is
//! square, its size `k` never exceeds the column count, and it is kept as an
//! explicit dense inverse updated in place by one of four rank-one formulas
//! (column swap, row swap, border growth, border shrink).
//!
//! Cutting-plane loops add and drop thousands of rows while `k` stays small,
//! which is exactly the regime this layout is cheap in.
//!
//! Phase 1 minimizes the sum of bound violations of the basic variables with
//! a long-step ratio test; phase 2 uses the two-pass Harris test. A streak of
//! degenerate pivots triggers a small random widening of the basic bounds,
//! which is undone once the perturbed problem is optimal. Bland's rule is the
//! last resort.
//!
//! A warm start after adding rows usually leaves the basis dual feasible but
//! primal infeasible. `solve` then runs a dual simplex first (perturbed and,
//! if needed, shifted costs, Harris ratio test, leaving row chosen by
//! violation over row norm) and hands the result to the primal phase, which
//! cleans up and certifies optimality.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Smallest pivot magnitude accepted in the ratio test.
pub const PIVOT_TOL: f64 = 1e-9;
/// Feasibility tolerance promised for optimal solutions.
pub const FEAS_TOL: f64 = 1e-7;
/// Reduced-cost tolerance for optimality.
pub const DUAL_TOL: f64 = 1e-9;

const PRIMAL_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;
const BLAND_AFTER: usize = 60;
const SINGULAR_TOL: f64 = 1e-11;
const PERTURB: f64 = 1e-7;
const DUAL_FEAS_TOL: f64 = 1e-7;
const MAX_SHIFT: f64 = 1e-4;
const MAX_PERTURB: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// Stable handle of a row; survives removal of other rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Warm-start token: which columns are basic and which rows are tight.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Basis {
    basic_cols: Vec<usize>,
    tight_rows: Vec<(RowId, bool)>,
    at_upper: Vec<usize>,
}

impl Basis {
    pub fn num_basic_columns(&self) -> usize {
        self.basic_cols.len()
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub primal: Vec<f64>,
    /// Row duals, one per live row, in insertion order.
    pub duals: Vec<(RowId, f64)>,
    pub reduced_costs: Vec<f64>,
    pub basis: Basis,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum At {
    Lower,
    Upper,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColState {
    Basic(usize),
    Nonbasic(At),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RowState {
    Basic,
    Tight(usize, At),
}

#[derive(Debug, Clone)]
struct Row {
    id: RowId,
    /// Euclidean norm of the coefficients, at least 1.
    norm: f64,
    coeffs: Vec<(usize, f64)>,
    sense: Sense,
    rhs: f64,
    lo: f64,
    hi: f64,
}

#[derive(Debug, Clone, Copy)]
enum Var {
    Col(usize),
    Row(usize),
}

#[derive(Debug, Clone, Copy)]
struct Cand {
    relaxed: f64,
    exact: f64,
    piv: f64,
    leave: Leave,
    idx: usize,
}

#[derive(Debug, Clone, Copy)]
enum Leave {
    Flip,
    Col(usize, At),
    Row(usize, At),
}

/// A linear program `min c·x` over bounded columns and sparse rows.
#[derive(Debug, Clone)]
pub struct LpModel {
    obj: Vec<f64>,
    col_lo: Vec<f64>,
    col_hi: Vec<f64>,
    cols: Vec<Vec<(usize, f64)>>,
    rows: Vec<Option<Row>>,
    index: HashMap<RowId, usize>,
    next_id: u64,
    live: usize,

    x: Vec<f64>,
    act: Vec<f64>,
    col_state: Vec<ColState>,
    row_state: Vec<RowState>,
    basic_cols: Vec<usize>,
    tight_rows: Vec<usize>,
    minv: Vec<Vec<f64>>,
    updates: usize,
    needs_refactor: bool,

    dx: Vec<f64>,
    dact: Vec<f64>,
    touched: Vec<usize>,
    d: Vec<f64>,
    pi: Vec<f64>,
    iteration_cap: Option<usize>,
}

fn value_at(at: At, lo: f64, hi: f64) -> f64 {
    match at {
        At::Lower => lo,
        At::Upper => hi,
        At::Zero => 0.0,
    }
}

fn nearest_bound(v: f64, lo: f64, hi: f64) -> At {
    match (lo.is_finite(), hi.is_finite()) {
        (false, false) => At::Zero,
        (true, false) => At::Lower,
        (false, true) => At::Upper,
        (true, true) => {
            if (v - lo).abs() <= (hi - v).abs() {
                At::Lower
            } else {
                At::Upper
            }
        }
    }
}

fn default_at(lo: f64, hi: f64) -> At {
    if lo.is_finite() {
        At::Lower
    } else if hi.is_finite() {
        At::Upper
    } else {
        At::Zero
    }
}

fn row_bounds(sense: Sense, rhs: f64) -> (f64, f64) {
    match sense {
        Sense::Ge => (rhs, f64::INFINITY),
        Sense::Le => (f64::NEG_INFINITY, rhs),
        Sense::Eq => (rhs, rhs),
    }
}

/// Gauss-Jordan inverse with partial pivoting; `None` if numerically singular.
fn invert(mut a: Vec<Vec<f64>>) -> Option<Vec<Vec<f64>>> {
    let k = a.len();
    let mut inv: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let mut r = vec![0.0; k];
            r[i] = 1.0;
            r
        })
        .collect();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    for c in 0..k {
        let (piv, best) = (c..k)
            .map(|r| (r, a[r][c].abs()))
            .fold((c, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if best <= SINGULAR_TOL * scale {
            return None;
        }
        a.swap(c, piv);
        inv.swap(c, piv);
        let p = a[c][c];
        for v in a[c].iter_mut() {
            *v /= p;
        }
        for v in inv[c].iter_mut() {
            *v /= p;
        }
        let (pa, pi) = (a[c].clone(), inv[c].clone());
        for r in 0..k {
            if r == c {
                continue;
            }
            let f = a[r][c];
            if f == 0.0 {
                continue;
            }
            for (v, pv) in a[r].iter_mut().zip(&pa) {
                *v -= f * pv;
            }
            for (v, pv) in inv[r].iter_mut().zip(&pi) {
                *v -= f * pv;
            }
        }
    }
    // inv is the inverse of the row-major input `a` (rows = tight rows).
    Some(inv)
}

impl Default for LpModel {
    fn default() -> Self {
        Self::new()
    }
}

impl LpModel {
    pub fn new() -> Self {
        LpModel {
            obj: Vec::new(),
            col_lo: Vec::new(),
            col_hi: Vec::new(),
            cols: Vec::new(),
            rows: Vec::new(),
            index: HashMap::new(),
            next_id: 0,
            live: 0,
            x: Vec::new(),
            act: Vec::new(),
            col_state: Vec::new(),
            row_state: Vec::new(),
            basic_cols: Vec::new(),
            tight_rows: Vec::new(),
            minv: Vec::new(),
            updates: 0,
            needs_refactor: true,
            dx: Vec::new(),
            dact: Vec::new(),
            touched: Vec::new(),
            d: Vec::new(),
            pi: Vec::new(),
            iteration_cap: None,
        }
    }

    /// Adds a column and returns its index.
    pub fn add_var(&mut self, cost: f64, lo: f64, hi: f64) -> usize {
        assert!(lo <= hi, "variable bounds must satisfy lo <= hi");
        let j = self.obj.len();
        self.obj.push(cost);
        self.col_lo.push(lo);
        self.col_hi.push(hi);
        self.cols.push(Vec::new());
        let at = default_at(lo, hi);
        self.x.push(value_at(at, lo, hi));
        self.col_state.push(ColState::Nonbasic(at));
        self.d.push(0.0);
        j
    }

    pub fn num_vars(&self) -> usize {
        self.obj.len()
    }

    pub fn num_rows(&self) -> usize {
        self.live
    }

    /// Overrides the default cap of `50 * (vars + rows)` iterations.
    pub fn set_iteration_cap(&mut self, cap: Option<usize>) {
        self.iteration_cap = cap;
    }

    pub fn set_objective(&mut self, j: usize, cost: f64) {
        self.obj[j] = cost;
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.col_lo[j], self.col_hi[j])
    }

    /// Changes the bounds of a column; the current basis is kept.
    pub fn set_var_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        assert!(lo <= hi, "variable bounds must satisfy lo <= hi");
        if self.col_lo[j] == lo && self.col_hi[j] == hi {
            return;
        }
        self.col_lo[j] = lo;
        self.col_hi[j] = hi;
        if let ColState::Nonbasic(at) = self.col_state[j] {
            let at = match at {
                At::Upper if hi.is_finite() => At::Upper,
                At::Lower if lo.is_finite() => At::Lower,
                _ => nearest_bound(self.x[j], lo, hi),
            };
            self.col_state[j] = ColState::Nonbasic(at);
            self.x[j] = value_at(at, lo, hi);
        }
        self.needs_refactor = true;
    }

    /// Adds one row `Σ coeffs ⋈ rhs`. Duplicate indices are merged.
    pub fn add_row(&mut self, coeffs: &[(usize, f64)], sense: Sense, rhs: f64) -> RowId {
        let mut merged: Vec<(usize, f64)> = coeffs.to_vec();
        merged.sort_by_key(|e| e.0);
        merged.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        merged.retain(|e| e.1 != 0.0);
        for &(j, _) in &merged {
            assert!(j < self.obj.len(), "row references unknown column {j}");
        }
        let id = RowId(self.next_id);
        self.next_id += 1;
        let slot = self.rows.len();
        let activity: f64 = merged.iter().map(|&(j, a)| a * self.x[j]).sum();
        for &(j, a) in &merged {
            self.cols[j].push((slot, a));
        }
        let (lo, hi) = row_bounds(sense, rhs);
        let norm = merged.iter().map(|c| c.1 * c.1).sum::<f64>().sqrt().max(1.0);
        self.rows.push(Some(Row {
            id,
            norm,
            coeffs: merged,
            sense,
            rhs,
            lo,
            hi,
        }));
        self.act.push(activity);
        self.row_state.push(RowState::Basic);
        self.dact.push(0.0);
        self.index.insert(id, slot);
        self.live += 1;
        id
    }

    pub fn add_rows(&mut self, rows: &[(Vec<(usize, f64)>, Sense, f64)]) -> Vec<RowId> {
        rows.iter()
            .map(|(c, s, r)| self.add_row(c, *s, *r))
            .collect()
    }

    pub fn has_row(&self, id: RowId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn row_coeffs(&self, id: RowId) -> Option<&[(usize, f64)]> {
        let slot = *self.index.get(&id)?;
        self.rows[slot].as_ref().map(|r| r.coeffs.as_slice())
    }

    /// `a·x` at the current primal point.
    pub fn row_activity(&self, id: RowId) -> Option<f64> {
        let slot = *self.index.get(&id)?;
        let row = self.rows[slot].as_ref()?;
        Some(row.coeffs.iter().map(|&(j, a)| a * self.x[j]).sum())
    }

    /// Distance of the current point from the row's boundary (nonnegative
    /// when satisfied; for equalities it is `-|a·x - rhs|`).
    pub fn row_slack(&self, id: RowId) -> Option<f64> {
        let slot = *self.index.get(&id)?;
        let row = self.rows[slot].as_ref()?;
        let act = self.row_activity(id)?;
        Some(match row.sense {
            Sense::Ge => act - row.rhs,
            Sense::Le => row.rhs - act,
            Sense::Eq => -(act - row.rhs).abs(),
        })
    }

    pub fn remove_rows(&mut self, ids: &[RowId]) {
        for id in ids {
            let Some(slot) = self.index.remove(id) else {
                continue;
            };
            if let RowState::Tight(..) = self.row_state[slot] {
                self.needs_refactor = true;
                self.tight_rows.retain(|&s| s != slot);
            }
            self.row_state[slot] = RowState::Basic;
            self.rows[slot] = None;
            self.live -= 1;
        }
        if self.needs_refactor {
            // positions in tight_rows changed
            for (b, &s) in self.tight_rows.iter().enumerate() {
                if let RowState::Tight(_, at) = self.row_state[s] {
                    self.row_state[s] = RowState::Tight(b, at);
                }
            }
        }
        if self.rows.len() > 64 && self.rows.len() > 2 * self.live + 256 {
            self.compact();
        }
    }

    fn compact(&mut self) {
        let mut remap = vec![usize::MAX; self.rows.len()];
        let mut rows = Vec::with_capacity(self.live);
        let mut act = Vec::with_capacity(self.live);
        let mut state = Vec::with_capacity(self.live);
        for (slot, row) in self.rows.drain(..).enumerate() {
            if let Some(row) = row {
                remap[slot] = rows.len();
                rows.push(Some(row));
                act.push(self.act[slot]);
                state.push(self.row_state[slot]);
            }
        }
        self.rows = rows;
        self.act = act;
        self.row_state = state;
        self.dact = vec![0.0; self.rows.len()];
        self.touched.clear();
        for col in &mut self.cols {
            col.retain_mut(|e| {
                let s = remap[e.0];
                e.0 = s;
                s != usize::MAX
            });
        }
        for s in &mut self.tight_rows {
            *s = remap[*s];
        }
        self.index.clear();
        for (slot, row) in self.rows.iter().enumerate() {
            if let Some(r) = row {
                self.index.insert(r.id, slot);
            }
        }
    }

    /// Current basis as a warm-start token.
    pub fn basis(&self) -> Basis {
        let tight_rows = self
            .tight_rows
            .iter()
            .map(|&s| {
                let at = matches!(self.row_state[s], RowState::Tight(_, At::Upper));
                (self.rows[s].as_ref().expect("live row").id, at)
            })
            .collect();
        let at_upper = (0..self.obj.len())
            .filter(|&j| self.col_state[j] == ColState::Nonbasic(At::Upper))
            .collect();
        Basis {
            basic_cols: self.basic_cols.clone(),
            tight_rows,
            at_upper,
        }
    }

    /// Installs a saved basis. Unknown rows are ignored and the result is
    /// repaired to a nonsingular square basis on the next solve.
    pub fn set_basis(&mut self, basis: &Basis) {
        let n = self.obj.len();
        for j in 0..n {
            let at = default_at(self.col_lo[j], self.col_hi[j]);
            self.col_state[j] = ColState::Nonbasic(at);
        }
        for &j in &basis.at_upper {
            if j < n && self.col_hi[j].is_finite() {
                self.col_state[j] = ColState::Nonbasic(At::Upper);
            }
        }
        for j in 0..n {
            if let ColState::Nonbasic(at) = self.col_state[j] {
                self.x[j] = value_at(at, self.col_lo[j], self.col_hi[j]);
            }
        }
        for st in self.row_state.iter_mut() {
            *st = RowState::Basic;
        }
        self.basic_cols.clear();
        for &j in &basis.basic_cols {
            if j < n && !matches!(self.col_state[j], ColState::Basic(_)) {
                self.col_state[j] = ColState::Basic(self.basic_cols.len());
                self.basic_cols.push(j);
            }
        }
        self.tight_rows.clear();
        for &(id, upper) in &basis.tight_rows {
            if let Some(&slot) = self.index.get(&id) {
                let row = self.rows[slot].as_ref().expect("live row");
                let at = if upper && row.hi.is_finite() {
                    At::Upper
                } else if row.lo.is_finite() {
                    At::Lower
                } else {
                    At::Upper
                };
                self.row_state[slot] = RowState::Tight(self.tight_rows.len(), at);
                self.tight_rows.push(slot);
            }
        }
        self.needs_refactor = true;
    }

    /// Drops the basis back to all slacks.
    pub fn reset_basis(&mut self) {
        self.set_basis(&Basis::default());
    }

    fn row(&self, slot: usize) -> &Row {
        self.rows[slot].as_ref().expect("live row")
    }

    /// Rebuilds the inverse from scratch. Dependent rows or columns are
    /// dropped from the basis (rows become basic slacks, columns move to a
    /// bound), which also repairs non-square bases.
    fn refactor(&mut self) {
        let k_rows = self.tight_rows.len();
        let k_cols = self.basic_cols.len();
        if k_rows == k_cols {
            if let Some(inv) = invert(self.block(&self.tight_rows, &self.basic_cols)) {
                // `inv` inverts M (rows = tight rows, cols = basic cols):
                // inv[a][b] maps tight-row position b to basic-col position a.
                self.minv = inv;
                self.updates = 0;
                self.needs_refactor = false;
                self.recompute_primal();
                return;
            }
        }
        self.repair();
        self.updates = 0;
        self.needs_refactor = false;
        self.recompute_primal();
    }

    fn block(&self, rows: &[usize], cols: &[usize]) -> Vec<Vec<f64>> {
        let mut pos = vec![usize::MAX; self.obj.len()];
        for (a, &j) in cols.iter().enumerate() {
            pos[j] = a;
        }
        rows.iter()
            .map(|&s| {
                let mut r = vec![0.0; cols.len()];
                for &(j, v) in &self.row(s).coeffs {
                    if pos[j] != usize::MAX {
                        r[pos[j]] = v;
                    }
                }
                r
            })
            .collect()
    }

    fn repair(&mut self) {
        let rows = self.tight_rows.clone();
        let cols = self.basic_cols.clone();
        let mut m = self.block(&rows, &cols);
        let scale = m
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
            .max(1.0);
        let mut row_used = vec![false; rows.len()];
        let mut col_used = vec![false; cols.len()];
        let mut pairs = Vec::new();
        loop {
            let mut best = (usize::MAX, usize::MAX, SINGULAR_TOL * scale * 100.0);
            for (r, rv) in m.iter().enumerate() {
                if row_used[r] {
                    continue;
                }
                for (c, &v) in rv.iter().enumerate() {
                    if !col_used[c] && v.abs() > best.2 {
                        best = (r, c, v.abs());
                    }
                }
            }
            if best.0 == usize::MAX {
                break;
            }
            let (pr, pc) = (best.0, best.1);
            row_used[pr] = true;
            col_used[pc] = true;
            pairs.push((pr, pc));
            let prow = m[pr].clone();
            let pv = prow[pc];
            for (r, rv) in m.iter_mut().enumerate() {
                if row_used[r] {
                    continue;
                }
                let f = rv[pc] / pv;
                if f != 0.0 {
                    for (v, p) in rv.iter_mut().zip(&prow) {
                        *v -= f * p;
                    }
                }
            }
        }
        for (c, &j) in cols.iter().enumerate() {
            if !col_used[c] {
                let at = nearest_bound(self.x[j], self.col_lo[j], self.col_hi[j]);
                self.col_state[j] = ColState::Nonbasic(at);
                self.x[j] = value_at(at, self.col_lo[j], self.col_hi[j]);
            }
        }
        for (r, &s) in rows.iter().enumerate() {
            if !row_used[r] {
                self.row_state[s] = RowState::Basic;
            }
        }
        self.basic_cols = pairs.iter().map(|&(_, c)| cols[c]).collect();
        self.tight_rows = pairs.iter().map(|&(r, _)| rows[r]).collect();
        for (a, &j) in self.basic_cols.iter().enumerate() {
            self.col_state[j] = ColState::Basic(a);
        }
        for (b, &s) in self.tight_rows.iter().enumerate() {
            if let RowState::Tight(_, at) = self.row_state[s] {
                self.row_state[s] = RowState::Tight(b, at);
            }
        }
        self.minv = invert(self.block(&self.tight_rows, &self.basic_cols))
            .expect("rank-revealing elimination yields a nonsingular block");
    }

    /// Recomputes basic values from the nonbasic ones.
    fn recompute_primal(&mut self) {
        let k = self.basic_cols.len();
        let mut rhs = vec![0.0; k];
        for (b, &s) in self.tight_rows.iter().enumerate() {
            let row = self.rows[s].as_ref().expect("live row");
            let RowState::Tight(_, at) = self.row_state[s] else {
                unreachable!()
            };
            let mut v = value_at(at, row.lo, row.hi);
            for &(j, a) in &row.coeffs {
                if let ColState::Nonbasic(_) = self.col_state[j] {
                    v -= a * self.x[j];
                }
            }
            rhs[b] = v;
        }
        for a in 0..k {
            let v: f64 = self.minv[a].iter().zip(&rhs).map(|(m, r)| m * r).sum();
            self.x[self.basic_cols[a]] = v;
        }
        for s in 0..self.rows.len() {
            if let Some(row) = &self.rows[s] {
                self.act[s] = row.coeffs.iter().map(|&(j, a)| a * self.x[j]).sum();
            }
        }
    }

    fn bland_index(&self, v: Var) -> usize {
        match v {
            Var::Col(j) => j,
            Var::Row(s) => self.obj.len() + s,
        }
    }

    /// Marks the basic variables outside their bounds; returns the phase-1
    /// costs as (basic col position, sign) and (row slot, sign).
    fn infeasibilities(&self) -> (Vec<(usize, f64)>, Vec<(usize, f64)>) {
        let mut cols = Vec::new();
        for (a, &j) in self.basic_cols.iter().enumerate() {
            let v = self.x[j];
            if v < self.col_lo[j] - PRIMAL_TOL * (1.0 + self.col_lo[j].abs()) {
                cols.push((a, -1.0));
            } else if v > self.col_hi[j] + PRIMAL_TOL * (1.0 + self.col_hi[j].abs()) {
                cols.push((a, 1.0));
            }
        }
        let mut rows = Vec::new();
        for (s, row) in self.rows.iter().enumerate() {
            let Some(row) = row else { continue };
            if self.row_state[s] != RowState::Basic {
                continue;
            }
            let v = self.act[s];
            if v < row.lo - PRIMAL_TOL * (1.0 + row.lo.abs()) {
                rows.push((s, -1.0));
            } else if v > row.hi + PRIMAL_TOL * (1.0 + row.hi.abs()) {
                rows.push((s, 1.0));
            }
        }
        (cols, rows)
    }

    /// Fills `self.pi` (tight-row prices) and `self.d` (column reduced costs).
    fn price(&mut self, phase1: Option<&(Vec<(usize, f64)>, Vec<(usize, f64)>)>) {
        let n = self.obj.len();
        let k = self.basic_cols.len();
        let mut g = vec![0.0; k];
        self.d.clear();
        match phase1 {
            None => {
                for (a, &j) in self.basic_cols.iter().enumerate() {
                    g[a] = self.obj[j];
                }
                self.d.extend_from_slice(&self.obj);
            }
            Some((icols, irows)) => {
                self.d.resize(n, 0.0);
                for &(a, c) in icols {
                    g[a] = c;
                }
                for &(s, c) in irows {
                    for &(j, v) in &self.rows[s].as_ref().expect("live row").coeffs {
                        self.d[j] += c * v;
                        if let ColState::Basic(a) = self.col_state[j] {
                            g[a] += c * v;
                        }
                    }
                }
            }
        }
        self.pi.clear();
        self.pi.resize(k, 0.0);
        for a in 0..k {
            let ga = g[a];
            if ga != 0.0 {
                for (p, m) in self.pi.iter_mut().zip(&self.minv[a]) {
                    *p += ga * m;
                }
            }
        }
        for (b, &s) in self.tight_rows.iter().enumerate() {
            let pb = self.pi[b];
            if pb != 0.0 {
                for &(j, v) in &self.rows[s].as_ref().expect("live row").coeffs {
                    self.d[j] -= pb * v;
                }
            }
        }
        for &j in &self.basic_cols {
            self.d[j] = 0.0;
        }
    }

    /// Picks the entering variable and its direction (+1 increase, -1 decrease).
    fn choose_entering(&self, bland: bool) -> Option<(Var, f64, f64)> {
        let mut best: Option<(Var, f64, f64)> = None;
        let consider = |v: Var, dj: f64, at: At, lo: f64, hi: f64, best: &mut Option<(Var, f64, f64)>| {
            if lo == hi {
                return;
            }
            let dir = match at {
                At::Lower if dj < -DUAL_TOL => 1.0,
                At::Upper if dj > DUAL_TOL => -1.0,
                At::Zero if dj.abs() > DUAL_TOL => -dj.signum(),
                _ => return,
            };
            let score = dj.abs();
            match best {
                None => *best = Some((v, dir, score)),
                Some((bv, _, bs)) => {
                    let better = if bland {
                        self.bland_index(v) < self.bland_index(*bv)
                    } else {
                        score > *bs
                    };
                    if better {
                        *best = Some((v, dir, score));
                    }
                }
            }
        };
        for j in 0..self.obj.len() {
            if let ColState::Nonbasic(at) = self.col_state[j] {
                consider(Var::Col(j), self.d[j], at, self.col_lo[j], self.col_hi[j], &mut best);
            }
        }
        for (b, &s) in self.tight_rows.iter().enumerate() {
            let RowState::Tight(_, at) = self.row_state[s] else {
                unreachable!()
            };
            let row = self.row(s);
            consider(Var::Row(s), self.pi[b], at, row.lo, row.hi, &mut best);
        }
        best
    }

    /// Per-unit change of basic values when the entering variable increases.
    fn direction(&mut self, q: Var) {
        let k = self.basic_cols.len();
        self.dx.clear();
        self.dx.resize(k, 0.0);
        for &s in &self.touched {
            self.dact[s] = 0.0;
        }
        self.touched.clear();
        match q {
            Var::Col(jq) => {
                let mut aq = vec![0.0; k];
                for &(s, v) in &self.cols[jq] {
                    if self.rows[s].is_none() {
                        continue;
                    }
                    match self.row_state[s] {
                        RowState::Tight(b, _) => aq[b] = v,
                        RowState::Basic => {
                            self.dact[s] += v;
                            self.touched.push(s);
                        }
                    }
                }
                for a in 0..k {
                    let v: f64 = self.minv[a].iter().zip(&aq).map(|(m, r)| m * r).sum();
                    self.dx[a] = -v;
                }
            }
            Var::Row(s0) => {
                let RowState::Tight(b0, _) = self.row_state[s0] else {
                    unreachable!()
                };
                for a in 0..k {
                    self.dx[a] = self.minv[a][b0];
                }
            }
        }
        for a in 0..k {
            let da = self.dx[a];
            if da == 0.0 {
                continue;
            }
            let j = self.basic_cols[a];
            for &(s, v) in &self.cols[j] {
                if self.rows[s].is_some() && self.row_state[s] == RowState::Basic {
                    self.dact[s] += v * da;
                    self.touched.push(s);
                }
            }
        }
        self.touched.sort_unstable();
        self.touched.dedup();
    }

    /// Returns the step length and the leaving variable, or `None` when the
    /// ray is unbounded.
    ///
    /// In phase 1 the step is long: basic variables that become feasible on
    /// the way are passed while the infeasibility sum keeps decreasing, so a
    /// batch of violated rows is usually repaired in one pivot.
    fn ratio_test(&self, q: Var, dir: f64, phase1: bool, bland: bool, slope: f64) -> Option<(f64, Leave)> {
        let (qlo, qhi) = match q {
            Var::Col(j) => (self.col_lo[j], self.col_hi[j]),
            Var::Row(s) => (self.row(s).lo, self.row(s).hi),
        };
        let flip = qhi - qlo;

        let mut hard: Vec<Cand> = Vec::new();
        let mut breaks: Vec<Cand> = Vec::new();
        let mut visit = |v: f64, delta: f64, lo: f64, hi: f64, leave: Leave, idx: usize| {
            let delta = delta * dir;
            if delta.abs() <= PIVOT_TOL {
                return;
            }
            let tol_lo = PRIMAL_TOL * (1.0 + lo.abs());
            let tol_hi = PRIMAL_TOL * (1.0 + hi.abs());
            let with = |at: At| match leave {
                Leave::Col(a, _) => Leave::Col(a, at),
                Leave::Row(s, _) => Leave::Row(s, at),
                Leave::Flip => Leave::Flip,
            };
            let below = phase1 && v < lo - tol_lo;
            let above = phase1 && v > hi + tol_hi;
            if below || above {
                // toward feasibility: a breakpoint at the near bound and a hard
                // stop at the far one; away from it: no limit
                if below && delta > 0.0 {
                    let r = (lo - v) / delta;
                    breaks.push(Cand { relaxed: r, exact: r, piv: delta, leave: with(At::Lower), idx });
                    if hi.is_finite() {
                        let exact = (hi - v) / delta;
                        hard.push(Cand { relaxed: exact + tol_hi / delta, exact, piv: delta, leave: with(At::Upper), idx });
                    }
                } else if above && delta < 0.0 {
                    let r = (v - hi) / -delta;
                    breaks.push(Cand { relaxed: r, exact: r, piv: -delta, leave: with(At::Upper), idx });
                    if lo.is_finite() {
                        let exact = (v - lo) / -delta;
                        hard.push(Cand { relaxed: exact + tol_lo / -delta, exact, piv: -delta, leave: with(At::Lower), idx });
                    }
                }
                return;
            }
            if delta < 0.0 && lo.is_finite() {
                let exact = ((v - lo) / -delta).max(0.0);
                let relaxed = (v - lo + tol_lo) / -delta;
                hard.push(Cand { relaxed, exact, piv: -delta, leave: with(At::Lower), idx });
            } else if delta > 0.0 && hi.is_finite() {
                let exact = ((hi - v) / delta).max(0.0);
                let relaxed = (hi - v + tol_hi) / delta;
                hard.push(Cand { relaxed, exact, piv: delta, leave: with(At::Upper), idx });
            }
        };
        let n = self.obj.len();
        for (a, &j) in self.basic_cols.iter().enumerate() {
            visit(self.x[j], self.dx[a], self.col_lo[j], self.col_hi[j], Leave::Col(a, At::Lower), j);
        }
        for &s in &self.touched {
            let row = self.row(s);
            visit(self.act[s], self.dact[s], row.lo, row.hi, Leave::Row(s, At::Lower), n + s);
        }

        if bland {
            hard.append(&mut breaks);
            if hard.is_empty() {
                return if flip.is_finite() { Some((flip, Leave::Flip)) } else { None };
            }
            let min_exact = hard.iter().map(|c| c.exact).fold(f64::INFINITY, f64::min);
            if flip.is_finite() && flip <= min_exact {
                return Some((flip, Leave::Flip));
            }
            let tie = min_exact + PRIMAL_TOL;
            let pick = hard
                .iter()
                .filter(|c| c.exact <= tie)
                .min_by_key(|c| c.idx)
                .expect("nonempty");
            return Some((pick.exact, pick.leave));
        }

        let mut bound = hard.iter().map(|c| c.relaxed).fold(f64::INFINITY, f64::min);
        if flip.is_finite() {
            bound = bound.min(flip);
        }
        if !breaks.is_empty() {
            breaks.sort_by(|a, b| a.exact.total_cmp(&b.exact).then(b.piv.total_cmp(&a.piv)));
            let mut rate = -slope.abs();
            for c in breaks.iter().filter(|c| c.exact <= bound) {
                rate += c.piv;
                if rate >= -DUAL_TOL {
                    return Some((c.exact, c.leave));
                }
            }
            if !bound.is_finite() {
                let last = breaks.last().expect("nonempty");
                return Some((last.exact, last.leave));
            }
        }
        if hard.is_empty() {
            return if flip.is_finite() { Some((flip, Leave::Flip)) } else { None };
        }
        if flip.is_finite() && flip <= bound {
            return Some((flip, Leave::Flip));
        }
        let pick = hard
            .iter()
            .filter(|c| c.exact <= bound)
            .max_by(|x, y| x.piv.total_cmp(&y.piv).then(y.idx.cmp(&x.idx)))
            .expect("the minimizer of the relaxed ratios qualifies");
        Some((pick.exact, pick.leave))
    }

    fn step(&mut self, q: Var, dir: f64, theta: f64) {
        let t = dir * theta;
        if t == 0.0 {
            return;
        }
        match q {
            Var::Col(j) => self.x[j] += t,
            Var::Row(s) => self.act[s] += t,
        }
        for a in 0..self.basic_cols.len() {
            let j = self.basic_cols[a];
            self.x[j] += t * self.dx[a];
        }
        for &s in &self.touched {
            self.act[s] += t * self.dact[s];
        }
    }

    fn pivot(&mut self, q: Var, leave: Leave) {
        let k = self.basic_cols.len();
        match (q, leave) {
            (_, Leave::Flip) => unreachable!(),
            (Var::Col(jq), Leave::Col(l, at)) => {
                // column replacement at basic position l; w = Minv a_q = -dx
                let jl = self.basic_cols[l];
                let w: Vec<f64> = self.dx.iter().map(|v| -v).collect();
                let piv = w[l];
                let row_l: Vec<f64> = self.minv[l].iter().map(|v| v / piv).collect();
                for a in 0..k {
                    if a == l || w[a] == 0.0 {
                        continue;
                    }
                    let f = w[a];
                    for (m, r) in self.minv[a].iter_mut().zip(&row_l) {
                        *m -= f * r;
                    }
                }
                self.minv[l] = row_l;
                self.basic_cols[l] = jq;
                self.col_state[jq] = ColState::Basic(l);
                self.col_state[jl] = ColState::Nonbasic(at);
                self.x[jl] = value_at(at, self.col_lo[jl], self.col_hi[jl]);
            }
            (Var::Row(s0), Leave::Col(l, at)) => {
                // border shrink: drop basic position l and tight position b0
                let RowState::Tight(b0, _) = self.row_state[s0] else {
                    unreachable!()
                };
                let jl = self.basic_cols[l];
                let piv = self.minv[l][b0];
                let col_b0: Vec<f64> = (0..k).map(|a| self.minv[a][b0]).collect();
                let row_l = self.minv[l].clone();
                for a in 0..k {
                    if a == l || col_b0[a] == 0.0 {
                        continue;
                    }
                    let f = col_b0[a] / piv;
                    for (m, r) in self.minv[a].iter_mut().zip(&row_l) {
                        *m -= f * r;
                    }
                }
                self.minv.swap_remove(l);
                for r in self.minv.iter_mut() {
                    r.swap_remove(b0);
                }
                self.basic_cols.swap_remove(l);
                if l < self.basic_cols.len() {
                    let moved = self.basic_cols[l];
                    self.col_state[moved] = ColState::Basic(l);
                }
                self.tight_rows.swap_remove(b0);
                if b0 < self.tight_rows.len() {
                    let moved = self.tight_rows[b0];
                    if let RowState::Tight(_, a) = self.row_state[moved] {
                        self.row_state[moved] = RowState::Tight(b0, a);
                    }
                }
                self.row_state[s0] = RowState::Basic;
                self.col_state[jl] = ColState::Nonbasic(at);
                self.x[jl] = value_at(at, self.col_lo[jl], self.col_hi[jl]);
            }
            (Var::Col(jq), Leave::Row(r, at)) => {
                // border growth: add tight row r and basic column jq
                let u: Vec<f64> = self.dx.iter().map(|v| -v).collect();
                let mut brow = vec![0.0; k];
                let mut delta = 0.0;
                for &(j, v) in &self.row(r).coeffs {
                    if j == jq {
                        delta = v;
                    }
                    if let ColState::Basic(a) = self.col_state[j] {
                        brow[a] = v;
                    }
                }
                let mut vrow = vec![0.0; k];
                for a in 0..k {
                    if brow[a] != 0.0 {
                        for (vv, m) in vrow.iter_mut().zip(&self.minv[a]) {
                            *vv += brow[a] * m;
                        }
                    }
                }
                let sigma = delta - brow.iter().zip(&u).map(|(b, uu)| b * uu).sum::<f64>();
                for a in 0..k {
                    let ua = u[a];
                    if ua != 0.0 {
                        for (m, vv) in self.minv[a].iter_mut().zip(&vrow) {
                            *m += ua * vv / sigma;
                        }
                    }
                    self.minv[a].push(-ua / sigma);
                }
                let mut last: Vec<f64> = vrow.iter().map(|vv| -vv / sigma).collect();
                last.push(1.0 / sigma);
                self.minv.push(last);
                self.col_state[jq] = ColState::Basic(k);
                self.basic_cols.push(jq);
                self.row_state[r] = RowState::Tight(k, at);
                self.tight_rows.push(r);
                let row = self.row(r);
                self.act[r] = value_at(at, row.lo, row.hi);
            }
            (Var::Row(s0), Leave::Row(r, at)) => {
                // row replacement at tight position b0
                let RowState::Tight(b0, _) = self.row_state[s0] else {
                    unreachable!()
                };
                let mut vrow = vec![0.0; k];
                for &(j, v) in &self.row(r).coeffs {
                    if let ColState::Basic(a) = self.col_state[j] {
                        for (vv, m) in vrow.iter_mut().zip(&self.minv[a]) {
                            *vv += v * m;
                        }
                    }
                }
                let piv = vrow[b0];
                for a in 0..k {
                    let c = self.minv[a][b0] / piv;
                    self.minv[a][b0] = c;
                    if c != 0.0 {
                        for b in 0..k {
                            if b != b0 && vrow[b] != 0.0 {
                                self.minv[a][b] -= vrow[b] * c;
                            }
                        }
                    }
                }
                self.tight_rows[b0] = r;
                self.row_state[r] = RowState::Tight(b0, at);
                self.row_state[s0] = RowState::Basic;
                let row = self.row(r);
                self.act[r] = value_at(at, row.lo, row.hi);
            }
        }
        self.updates += 1;
    }

    /// True when every nonbasic reduced cost has the sign its bound allows.
    fn dual_feasible(&self) -> bool {
        let ok = |d: f64, at: At, lo: f64, hi: f64| {
            lo == hi
                || match at {
                    At::Lower => d >= -DUAL_FEAS_TOL,
                    At::Upper => d <= DUAL_FEAS_TOL,
                    At::Zero => d.abs() <= DUAL_FEAS_TOL,
                }
        };
        for j in 0..self.obj.len() {
            if let ColState::Nonbasic(at) = self.col_state[j] {
                if !ok(self.d[j], at, self.col_lo[j], self.col_hi[j]) {
                    return false;
                }
            }
        }
        self.tight_rows.iter().enumerate().all(|(b, &s)| {
            let RowState::Tight(_, at) = self.row_state[s] else {
                unreachable!()
            };
            let row = self.row(s);
            ok(self.pi[b], at, row.lo, row.hi)
        })
    }

    /// Most violated basic variable, rows scaled by their norm: the leaving
    /// candidate, the bound it leaves at and the sign of the move that
    /// repairs it.
    fn dual_leaving(&self) -> Option<(Leave, f64)> {
        let mut best: Option<(f64, Leave, f64)> = None;
        let mut offer = |viol: f64, leave: Leave, sigma: f64| {
            if best.map_or(true, |b| viol > b.0) {
                best = Some((viol, leave, sigma));
            }
        };
        for (a, &j) in self.basic_cols.iter().enumerate() {
            let (v, lo, hi) = (self.x[j], self.col_lo[j], self.col_hi[j]);
            if v < lo - PRIMAL_TOL * (1.0 + lo.abs()) {
                offer(lo - v, Leave::Col(a, At::Lower), 1.0);
            } else if v > hi + PRIMAL_TOL * (1.0 + hi.abs()) {
                offer(v - hi, Leave::Col(a, At::Upper), -1.0);
            }
        }
        for (s, row) in self.rows.iter().enumerate() {
            let Some(row) = row else { continue };
            if self.row_state[s] != RowState::Basic {
                continue;
            }
            let v = self.act[s];
            if v < row.lo - PRIMAL_TOL * (1.0 + row.lo.abs()) {
                offer((row.lo - v) / row.norm, Leave::Row(s, At::Lower), 1.0);
            } else if v > row.hi + PRIMAL_TOL * (1.0 + row.hi.abs()) {
                offer((v - row.hi) / row.norm, Leave::Row(s, At::Upper), -1.0);
            }
        }
        best.map(|(_, leave, sigma)| (leave, sigma))
    }

    /// Dual ratio test on the tableau row of the leaving variable. Returns the
    /// entering variable and its direction, or `None` if the row proves the
    /// model infeasible.
    fn dual_entering(&self, leave: Leave, sigma: f64) -> Option<(Var, f64)> {
        let k = self.basic_cols.len();
        let n = self.obj.len();
        // rho over tight-row positions; alpha_q = base_q - sum_b rho_b A[b][q]
        let mut rho = vec![0.0; k];
        let mut base: Vec<(usize, f64)> = Vec::new();
        match leave {
            Leave::Col(a, _) => rho.copy_from_slice(&self.minv[a]),
            Leave::Row(s, _) => {
                for &(j, v) in &self.row(s).coeffs {
                    match self.col_state[j] {
                        ColState::Basic(a) => {
                            for (r, m) in rho.iter_mut().zip(&self.minv[a]) {
                                *r += v * m;
                            }
                        }
                        ColState::Nonbasic(_) => base.push((j, v)),
                    }
                }
            }
            Leave::Flip => unreachable!(),
        }
        let mut alpha = vec![0.0; n];
        for &(j, v) in &base {
            alpha[j] += v;
        }
        for (b, &s) in self.tight_rows.iter().enumerate() {
            let r = rho[b];
            if r != 0.0 {
                for &(j, v) in &self.row(s).coeffs {
                    alpha[j] -= r * v;
                }
            }
        }

        let mut cands: Vec<(f64, f64, f64, Var, f64)> = Vec::new();
        let mut consider = |v: Var, al: f64, d: f64, at: At, lo: f64, hi: f64| {
            if lo == hi || al.abs() <= PIVOT_TOL {
                return;
            }
            let dir = match at {
                At::Lower => 1.0,
                At::Upper => -1.0,
                At::Zero => sigma * al.signum(),
            };
            if sigma * al * dir <= 0.0 {
                return;
            }
            let dd = (d * dir).max(0.0);
            cands.push((dd / al.abs(), (dd + DUAL_TOL) / al.abs(), al.abs(), v, dir));
        };
        for j in 0..n {
            if let ColState::Nonbasic(at) = self.col_state[j] {
                consider(Var::Col(j), alpha[j], self.d[j], at, self.col_lo[j], self.col_hi[j]);
            }
        }
        for (b, &s) in self.tight_rows.iter().enumerate() {
            let RowState::Tight(_, at) = self.row_state[s] else {
                unreachable!()
            };
            let row = self.row(s);
            consider(Var::Row(s), rho[b], self.pi[b], at, row.lo, row.hi);
        }
        let bound = cands.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        cands
            .iter()
            .filter(|c| c.0 <= bound)
            .max_by(|x, y| x.2.total_cmp(&y.2))
            .map(|c| (c.3, c.4))
    }

    /// Dual simplex from a dual feasible basis. Stops when the basis turns
    /// primal feasible, stops being dual feasible, or the cap is hit; the
    /// primal loop finishes from wherever it ends. Returns `true` only when
    /// a row certifies infeasibility.
    fn run_dual(&mut self, cap: usize) -> (bool, usize) {
        self.refactor();
        let orig = self.perturb_costs();
        let out = self.dual_loop(cap);
        self.obj = orig;
        out
    }

    /// Shifts every cost by a small random amount in the direction that
    /// keeps nonbasic reduced costs on their feasible side; the objective
    /// has many zero costs and the dual would otherwise stall on ties.
    fn perturb_costs(&mut self) -> Vec<f64> {
        let orig = self.obj.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for j in 0..self.obj.len() {
            let eps = PERTURB * 10.0 * (1.0 + orig[j].abs()) * rng.gen_range(0.5..1.0);
            match self.col_state[j] {
                ColState::Nonbasic(At::Lower) => self.obj[j] += eps,
                ColState::Nonbasic(At::Upper) => self.obj[j] -= eps,
                _ => {}
            }
        }
        for &s in &self.tight_rows {
            let RowState::Tight(_, at) = self.row_state[s] else {
                unreachable!()
            };
            let sign = match at {
                At::Lower => 1.0,
                At::Upper => -1.0,
                At::Zero => continue,
            };
            let row = self.rows[s].as_ref().expect("live row");
            if row.lo == row.hi {
                continue;
            }
            // a cost on the row's slack, spread over its columns
            let eps = sign * PERTURB * 10.0 * rng.gen_range(0.5..1.0);
            for &(j, v) in &row.coeffs {
                self.obj[j] += eps * v;
            }
        }
        orig
    }

    /// Absorbs small wrong-sign reduced costs into the (already perturbed)
    /// costs and reprices. Returns `false` if some violation is too large to
    /// be numerical noise.
    fn shift_costs(&mut self) -> bool {
        let need = |d: f64, at: At| match at {
            At::Lower if d < 0.0 => -d,
            At::Upper if d > 0.0 => -d,
            At::Zero => -d,
            _ => 0.0,
        };
        let mut shifts: Vec<(Var, f64)> = Vec::new();
        for j in 0..self.obj.len() {
            if let ColState::Nonbasic(at) = self.col_state[j] {
                if self.col_lo[j] != self.col_hi[j] {
                    let sh = need(self.d[j], at);
                    if sh != 0.0 {
                        shifts.push((Var::Col(j), sh));
                    }
                }
            }
        }
        for (b, &s) in self.tight_rows.iter().enumerate() {
            let RowState::Tight(_, at) = self.row_state[s] else {
                unreachable!()
            };
            let row = self.row(s);
            if row.lo != row.hi {
                let sh = need(self.pi[b], at);
                if sh != 0.0 {
                    shifts.push((Var::Row(s), sh));
                }
            }
        }
        if shifts.iter().any(|(_, sh)| sh.abs() > MAX_SHIFT) {
            return false;
        }
        for (v, sh) in shifts {
            // land a little inside the feasible side
            let sh = sh + sh.signum() * DUAL_TOL;
            match v {
                Var::Col(j) => self.obj[j] += sh,
                Var::Row(s) => {
                    let coeffs = self.row(s).coeffs.clone();
                    for (j, a) in coeffs {
                        self.obj[j] += sh * a;
                    }
                }
            }
        }
        self.price(None);
        self.dual_feasible()
    }

    fn dual_loop(&mut self, cap: usize) -> (bool, usize) {
        let mut iters = 0;
        let mut checked = false;
        while iters < cap {
            if self.updates >= REFACTOR_EVERY {
                self.refactor();
            }
            self.price(None);
            if !self.dual_feasible() && !self.shift_costs() {
                break;
            }
            let Some((leave, sigma)) = self.dual_leaving() else { break };
            let Some((q, dir)) = self.dual_entering(leave, sigma) else {
                if !checked && self.updates > 0 {
                    checked = true;
                    self.refactor();
                    continue;
                }
                return (true, iters);
            };
            checked = false;
            iters += 1;
            self.direction(q);
            let (v, target, rate) = match leave {
                Leave::Col(a, at) => {
                    let j = self.basic_cols[a];
                    (self.x[j], value_at(at, self.col_lo[j], self.col_hi[j]), self.dx[a])
                }
                Leave::Row(s, at) => {
                    let row = self.row(s);
                    let rate = if self.touched.binary_search(&s).is_ok() { self.dact[s] } else { 0.0 };
                    (self.act[s], value_at(at, row.lo, row.hi), rate)
                }
                Leave::Flip => unreachable!(),
            };
            let rate = rate * dir;
            if rate * sigma <= PIVOT_TOL {
                // the row and the column disagree: stale factorization
                self.refactor();
                break;
            }
            let theta = ((target - v) / rate).max(0.0);
            self.step(q, dir, theta);
            self.pivot(q, leave);
        }
        (false, iters)
    }

    /// Widens the bounds of every basic variable by a small random amount so
    /// that degenerate vertices split apart. Returns the original bounds.
    fn perturb(&mut self, round: u64) -> Vec<(Var, f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(round);
        let scale = PERTURB * (1 << (round - 1).min(8)) as f64;
        let mut orig = Vec::new();
        for &j in &self.basic_cols {
            let (lo, hi) = (self.col_lo[j], self.col_hi[j]);
            orig.push((Var::Col(j), lo, hi));
            self.col_lo[j] = lo - scale * (1.0 + lo.abs()) * rng.gen_range(1.0..2.0);
            self.col_hi[j] = hi + scale * (1.0 + hi.abs()) * rng.gen_range(1.0..2.0);
        }
        for s in 0..self.rows.len() {
            if self.rows[s].is_none() || self.row_state[s] != RowState::Basic {
                continue;
            }
            let (a, b) = (rng.gen_range(1.0..2.0), rng.gen_range(1.0..2.0));
            let row = self.rows[s].as_mut().expect("live row");
            orig.push((Var::Row(s), row.lo, row.hi));
            row.lo -= scale * (1.0 + row.lo.abs()) * a;
            row.hi += scale * (1.0 + row.hi.abs()) * b;
        }
        orig
    }

    /// Puts the original bounds back and moves nonbasic variables onto them.
    fn restore(&mut self, orig: Vec<(Var, f64, f64)>) {
        for (v, lo, hi) in orig {
            match v {
                Var::Col(j) => {
                    self.col_lo[j] = lo;
                    self.col_hi[j] = hi;
                }
                Var::Row(s) => {
                    if let Some(row) = self.rows[s].as_mut() {
                        row.lo = lo;
                        row.hi = hi;
                    }
                }
            }
        }
        for j in 0..self.obj.len() {
            if let ColState::Nonbasic(at) = self.col_state[j] {
                self.x[j] = value_at(at, self.col_lo[j], self.col_hi[j]);
            }
        }
        self.recompute_primal();
    }

    fn run(&mut self, cap: usize) -> (LpStatus, usize) {
        self.refactor();
        let mut iters = 0;
        let mut degenerate = 0usize;
        let mut verified = false;
        let mut saved: Option<Vec<(Var, f64, f64)>> = None;
        let mut perturbations = 0usize;
        loop {
            if degenerate >= BLAND_AFTER && saved.is_none() && perturbations < MAX_PERTURB {
                perturbations += 1;
                saved = Some(self.perturb(perturbations as u64));
                degenerate = 0;
            }
            if self.updates >= REFACTOR_EVERY {
                self.refactor();
            }
            let inf = self.infeasibilities();
            let phase1 = !(inf.0.is_empty() && inf.1.is_empty());
            self.price(if phase1 { Some(&inf) } else { None });
            let bland = degenerate >= BLAND_AFTER && saved.is_none();
            let Some((q, dir, score)) = self.choose_entering(bland) else {
                if self.updates > 0 && !verified {
                    // confirm on a fresh factorization before declaring
                    verified = true;
                    self.refactor();
                    continue;
                }
                if let Some(orig) = saved.take() {
                    self.restore(orig);
                    verified = false;
                    continue;
                }
                return (if phase1 { LpStatus::Infeasible } else { LpStatus::Optimal }, iters);
            };
            verified = false;
            if iters >= cap {
                if let Some(orig) = saved.take() {
                    self.restore(orig);
                }
                return (LpStatus::IterationLimit, iters);
            }
            iters += 1;
            self.direction(q);
            let Some((theta, leave)) = self.ratio_test(q, dir, phase1, bland, score) else {
                if phase1 {
                    // an improving phase-1 ray is always blocked; numerical noise
                    self.refactor();
                    degenerate = BLAND_AFTER;
                    continue;
                }
                if let Some(orig) = saved.take() {
                    self.restore(orig);
                }
                return (LpStatus::Unbounded, iters);
            };
            if theta <= PRIMAL_TOL {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.step(q, dir, theta);
            match leave {
                Leave::Flip => {
                    let at = if dir > 0.0 { At::Upper } else { At::Lower };
                    match q {
                        Var::Col(j) => {
                            self.col_state[j] = ColState::Nonbasic(at);
                            self.x[j] = value_at(at, self.col_lo[j], self.col_hi[j]);
                        }
                        Var::Row(s) => {
                            let RowState::Tight(b, _) = self.row_state[s] else {
                                unreachable!()
                            };
                            self.row_state[s] = RowState::Tight(b, at);
                            let row = self.row(s);
                            self.act[s] = value_at(at, row.lo, row.hi);
                        }
                    }
                }
                Leave::Col(..) | Leave::Row(..) => self.pivot(q, leave),
            }
        }
    }

    /// Solves the model, optionally starting from a saved basis. Without a
    /// token the basis left by the previous solve is reused.
    pub fn solve(&mut self, warm: Option<&Basis>) -> LpSolution {
        if let Some(b) = warm {
            self.set_basis(b);
        }
        let cap = self
            .iteration_cap
            .unwrap_or(50 * (self.obj.len() + self.live).max(1));
        let warm_started = !self.basic_cols.is_empty() || !self.tight_rows.is_empty();
        let mut iters = 0;
        if warm_started {
            let (infeasible, i) = self.run_dual(cap);
            iters += i;
            if infeasible {
                return self.extract(LpStatus::Infeasible, iters);
            }
        }
        let (mut status, i) = self.run(cap.saturating_sub(iters).max(1));
        iters += i;
        if status == LpStatus::IterationLimit && warm_started {
            self.reset_basis();
            let (s, i) = self.run(cap);
            status = s;
            iters += i;
        }
        self.extract(status, iters)
    }

    fn extract(&mut self, status: LpStatus, iterations: usize) -> LpSolution {
        if status == LpStatus::Optimal {
            self.price(None);
        }
        let objective = self.obj.iter().zip(&self.x).map(|(c, x)| c * x).sum();
        let mut duals = Vec::with_capacity(self.live);
        for (s, row) in self.rows.iter().enumerate() {
            if let Some(row) = row {
                let v = match self.row_state[s] {
                    RowState::Tight(b, _) if status == LpStatus::Optimal => self.pi[b],
                    _ => 0.0,
                };
                duals.push((row.id, v));
            }
        }
        let reduced_costs = if status == LpStatus::Optimal {
            self.d.clone()
        } else {
            vec![0.0; self.obj.len()]
        };
        LpSolution {
            status,
            objective,
            primal: self.x.clone(),
            duals,
            reduced_costs,
            basis: self.basis(),
            iterations,
        }
    }

    /// Writes the model in CPLEX LP text layout (for debugging).
    pub fn to_lp_string(&self) -> String {
        let mut out = String::from("Minimize\n obj:");
        let term = |c: f64, j: usize| {
            if c >= 0.0 {
                format!(" + {c} x{j}")
            } else {
                format!(" - {} x{j}", -c)
            }
        };
        for (j, &c) in self.obj.iter().enumerate() {
            if c != 0.0 {
                out.push_str(&term(c, j));
            }
        }
        out.push_str("\nSubject To\n");
        for row in self.rows.iter().flatten() {
            let _ = write!(out, " r{}:", row.id.0);
            for &(j, a) in &row.coeffs {
                out.push_str(&term(a, j));
            }
            let op = match row.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let _ = writeln!(out, " {op} {}", row.rhs);
        }
        out.push_str("Bounds\n");
        for j in 0..self.obj.len() {
            let (lo, hi) = (self.col_lo[j], self.col_hi[j]);
            match (lo.is_finite(), hi.is_finite()) {
                (false, false) => {
                    let _ = writeln!(out, " x{j} free");
                }
                (true, false) => {
                    let _ = writeln!(out, " x{j} >= {lo}");
                }
                (false, true) => {
                    let _ = writeln!(out, " -inf <= x{j} <= {hi}");
                }
                (true, true) => {
                    let _ = writeln!(out, " {lo} <= x{j} <= {hi}");
                }
            }
        }
        out.push_str("End\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const INF: f64 = f64::INFINITY;

    /// Checks primal feasibility, dual sign conditions and zero duality gap.
    fn assert_certified(m: &LpModel, sol: &LpSolution) {
        assert_eq!(sol.status, LpStatus::Optimal);
        let mut dual_obj = 0.0;
        for (id, y) in &sol.duals {
            let slot = m.index[id];
            let row = m.row(slot);
            let act: f64 = row.coeffs.iter().map(|&(j, a)| a * sol.primal[j]).sum();
            assert!(act >= row.lo - FEAS_TOL && act <= row.hi + FEAS_TOL, "row {id:?} violated");
            if *y > DUAL_TOL * 10.0 {
                assert!(row.lo.is_finite());
                dual_obj += y * row.lo;
            } else if *y < -DUAL_TOL * 10.0 {
                assert!(row.hi.is_finite());
                dual_obj += y * row.hi;
            }
        }
        for j in 0..m.num_vars() {
            let (lo, hi) = m.bounds(j);
            let x = sol.primal[j];
            assert!(x >= lo - FEAS_TOL && x <= hi + FEAS_TOL);
            let d = sol.reduced_costs[j];
            if d > 1e-8 {
                assert!(lo.is_finite() && (x - lo).abs() < 1e-7);
                dual_obj += d * lo;
            } else if d < -1e-8 {
                assert!(hi.is_finite() && (x - hi).abs() < 1e-7);
                dual_obj += d * hi;
            }
        }
        assert!(
            (dual_obj - sol.objective).abs() <= 1e-7 * (1.0 + sol.objective.abs()),
            "duality gap: primal {} dual {}",
            sol.objective,
            dual_obj
        );
    }

    #[test]
    fn free_variable_with_lower_row() {
        let mut m = LpModel::new();
        let z = m.add_var(1.0, -INF, INF);
        m.add_row(&[(z, 1.0)], Sense::Ge, 3.0);
        let sol = m.solve(None);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 3.0).abs() < 1e-9);
        assert_certified(&m, &sol);

        let r = m.add_row(&[(z, 1.0)], Sense::Ge, 5.0);
        let sol = m.solve(None);
        assert!((sol.objective - 5.0).abs() < 1e-9);
        assert_certified(&m, &sol);

        m.add_row(&[(z, 1.0)], Sense::Ge, 4.0);
        let again = m.solve(None);
        assert!((again.objective - 5.0).abs() < 1e-9);

        m.remove_rows(&[r]);
        let back = m.solve(None);
        assert!((back.objective - 4.0).abs() < 1e-9);
        assert_certified(&m, &back);
    }

    #[test]
    fn bound_active_optimum() {
        let mut m = LpModel::new();
        let y = m.add_var(-1.0, 0.0, 1.0);
        let sol = m.solve(None);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_eq!(sol.objective, -1.0);
        assert_eq!(sol.primal[y], 1.0);
    }

    #[test]
    fn unbounded_and_infeasible() {
        let mut m = LpModel::new();
        let z = m.add_var(1.0, -INF, INF);
        let y = m.add_var(0.0, 0.0, 1.0);
        m.add_row(&[(y, 1.0)], Sense::Eq, 1.0);
        assert_eq!(m.solve(None).status, LpStatus::Unbounded);

        m.add_row(&[(z, 1.0)], Sense::Ge, 0.0);
        assert_eq!(m.solve(None).status, LpStatus::Optimal);

        m.add_row(&[(y, 2.0)], Sense::Le, 1.0);
        assert_eq!(m.solve(None).status, LpStatus::Infeasible);
    }

    #[test]
    fn relaxation_with_only_cardinality_row() {
        // min z, Σy = 2, z free: unbounded; z >= 0 makes it 0
        let mut m = LpModel::new();
        let ys: Vec<usize> = (0..4).map(|_| m.add_var(0.0, 0.0, 1.0)).collect();
        let z = m.add_var(1.0, -INF, INF);
        let row: Vec<(usize, f64)> = ys.iter().map(|&j| (j, 1.0)).collect();
        m.add_row(&row, Sense::Eq, 2.0);
        assert_eq!(m.solve(None).status, LpStatus::Unbounded);
        m.set_var_bounds(z, 0.0, INF);
        let sol = m.solve(None);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_eq!(sol.objective, 0.0);
        let s: f64 = ys.iter().map(|&j| sol.primal[j]).sum();
        assert!((s - 2.0).abs() < 1e-9);
    }

    #[test]
    fn textbook_lp_with_duals() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18  (optimum 36 at (2, 6))
        let mut m = LpModel::new();
        let x = m.add_var(-3.0, 0.0, INF);
        let y = m.add_var(-5.0, 0.0, INF);
        m.add_row(&[(x, 1.0)], Sense::Le, 4.0);
        m.add_row(&[(y, 2.0)], Sense::Le, 12.0);
        m.add_row(&[(x, 3.0), (y, 2.0)], Sense::Le, 18.0);
        let sol = m.solve(None);
        assert!((sol.objective + 36.0).abs() < 1e-9);
        assert!((sol.primal[x] - 2.0).abs() < 1e-9);
        assert!((sol.primal[y] - 6.0).abs() < 1e-9);
        assert_certified(&m, &sol);
    }

    #[test]
    fn warm_start_matches_cold() {
        let mut m = LpModel::new();
        let x = m.add_var(-1.0, 0.0, 10.0);
        let y = m.add_var(-2.0, 0.0, 10.0);
        m.add_row(&[(x, 1.0), (y, 1.0)], Sense::Le, 8.0);
        m.add_row(&[(x, -1.0), (y, 2.0)], Sense::Le, 4.0);
        let first = m.solve(None);
        let token = first.basis.clone();
        m.add_row(&[(x, 1.0)], Sense::Ge, 1.0);
        let warm = m.solve(Some(&token));
        let mut cold = m.clone();
        cold.reset_basis();
        let cold = cold.solve(None);
        assert!((warm.objective - cold.objective).abs() < 1e-9);
        let again = m.solve(Some(&token));
        assert!((again.objective - warm.objective).abs() <= 1e-9);
    }

    #[test]
    fn fixing_bounds_changes_optimum() {
        let mut m = LpModel::new();
        let a = m.add_var(-1.0, 0.0, 1.0);
        let b = m.add_var(-1.0, 0.0, 1.0);
        m.add_row(&[(a, 1.0), (b, 1.0)], Sense::Le, 1.5);
        assert!((m.solve(None).objective + 1.5).abs() < 1e-9);
        m.set_var_bounds(a, 0.0, 0.0);
        assert!((m.solve(None).objective + 1.0).abs() < 1e-9);
        m.set_var_bounds(a, 1.0, 1.0);
        let s = m.solve(None);
        assert!((s.objective + 1.5).abs() < 1e-9);
        assert!((s.primal[b] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn degenerate_model_terminates() {
        // Beale's cycling example (cycles under textbook Dantzig without anti-cycling)
        let mut m = LpModel::new();
        let x: Vec<usize> = [-0.75, 150.0, -0.02, 6.0]
            .iter()
            .map(|&c| m.add_var(c, 0.0, INF))
            .collect();
        m.add_row(&[(x[0], 0.25), (x[1], -60.0), (x[2], -0.04), (x[3], 9.0)], Sense::Le, 0.0);
        m.add_row(&[(x[0], 0.5), (x[1], -90.0), (x[2], -0.02), (x[3], 3.0)], Sense::Le, 0.0);
        m.add_row(&[(x[2], 1.0)], Sense::Le, 1.0);
        let sol = m.solve(None);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective + 0.05).abs() < 1e-9);
        assert_certified(&m, &sol);
    }

    #[test]
    fn many_identical_rows_degenerate() {
        // heavy primal degeneracy: the same facet repeated
        let mut m = LpModel::new();
        let ys: Vec<usize> = (0..6).map(|_| m.add_var(0.0, 0.0, 1.0)).collect();
        let z = m.add_var(1.0, 0.0, INF);
        let all: Vec<(usize, f64)> = ys.iter().map(|&j| (j, 1.0)).collect();
        m.add_row(&all, Sense::Eq, 3.0);
        for rep in 0..30 {
            let mut c: Vec<(usize, f64)> = ys.iter().map(|&j| (j, 1.0 + (j % 2) as f64)).collect();
            c.push((z, 1.0));
            m.add_row(&c, Sense::Ge, 4.0 + (rep % 3) as f64 * 0.0);
        }
        let sol = m.solve(None);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_certified(&m, &sol);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let mut m = LpModel::new();
        let x = m.add_var(-1.0, 0.0, INF);
        let y = m.add_var(-1.0, 0.0, INF);
        m.add_row(&[(x, 1.0), (y, 2.0)], Sense::Le, 4.0);
        m.add_row(&[(x, 3.0), (y, 1.0)], Sense::Le, 6.0);
        m.set_iteration_cap(Some(0));
        assert_eq!(m.solve(None).status, LpStatus::IterationLimit);
        m.set_iteration_cap(None);
        assert_eq!(m.solve(None).status, LpStatus::Optimal);
    }

    #[test]
    fn lp_text_dump() {
        let mut m = LpModel::new();
        let x = m.add_var(1.0, 0.0, 1.0);
        let z = m.add_var(-2.0, f64::NEG_INFINITY, INF);
        m.add_row(&[(x, 1.0), (z, -1.0)], Sense::Ge, 0.5);
        let s = m.to_lp_string();
        assert!(s.contains("Minimize"));
        assert!(s.contains(">= 0.5"));
        assert!(s.contains("x1 free"));
    }

    #[test]
    fn random_lps_certify() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.gen_range(1..8);
            let r = rng.gen_range(1..10);
            let mut m = LpModel::new();
            for _ in 0..n {
                let lo = if rng.gen_bool(0.8) { 0.0 } else { -INF };
                let hi = if rng.gen_bool(0.7) { rng.gen_range(1.0..5.0) } else { INF };
                m.add_var(rng.gen_range(-3.0..3.0), lo, hi);
            }
            for _ in 0..r {
                let mut coeffs: Vec<(usize, f64)> = Vec::new();
                for j in 0..n {
                    if rng.gen_bool(0.7) {
                        coeffs.push((j, rng.gen_range(-3.0f64..3.0).round()));
                    }
                }
                let sense = match rng.gen_range(0..3) {
                    0 => Sense::Le,
                    1 => Sense::Ge,
                    _ => Sense::Eq,
                };
                m.add_row(&coeffs, sense, rng.gen_range(-4.0f64..4.0).round());
            }
            let sol = m.solve(None);
            if sol.status == LpStatus::Optimal {
                assert_certified(&m, &sol);
            }
            assert_ne!(sol.status, LpStatus::IterationLimit);
        }
    }

    #[test]
    fn incremental_rows_agree_with_cold_solves() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let n = rng.gen_range(3..12);
            let mut m = LpModel::new();
            let ys: Vec<usize> = (0..n).map(|_| m.add_var(0.0, 0.0, 1.0)).collect();
            let z = m.add_var(1.0, 0.0, INF);
            let card: Vec<(usize, f64)> = ys.iter().map(|&j| (j, 1.0)).collect();
            m.add_row(&card, Sense::Eq, rng.gen_range(1..n) as f64);
            let mut ids = Vec::new();
            for round in 0..25 {
                let mut c: Vec<(usize, f64)> = Vec::new();
                for &j in &ys {
                    if rng.gen_bool(0.5) {
                        c.push((j, rng.gen_range(1..20) as f64));
                    }
                }
                c.push((z, 1.0));
                ids.push(m.add_row(&c, Sense::Ge, rng.gen_range(5..40) as f64));
                if round % 7 == 6 {
                    let k = rng.gen_range(0..ids.len());
                    let id = ids.swap_remove(k);
                    m.remove_rows(&[id]);
                }
                if round % 5 == 4 {
                    let j = ys[rng.gen_range(0..n)];
                    let v = rng.gen_range(0..2) as f64;
                    m.set_var_bounds(j, v, v);
                }
                let warm = m.solve(None);
                let mut fresh = m.clone();
                fresh.reset_basis();
                let cold = fresh.solve(None);
                assert_eq!(warm.status, cold.status);
                if warm.status == LpStatus::Optimal {
                    assert!((warm.objective - cold.objective).abs() < 1e-7);
                    assert_certified(&m, &warm);
                }
            }
        }
    }
}
