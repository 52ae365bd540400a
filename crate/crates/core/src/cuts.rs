//! Lifted optimality cuts and their separation.
//!
//! For a customer `i`, an anchor site `j` and a lower bound `LB` on the
//! optimal radius, with `d'(j') = max(LB, d(i, j'))` and `r = d(i, j) > LB`:
//!
//! ```text
//! z >= r - Σ_{j' : d'(j') < r} (r - d'(j')) · y_j'
//! ```
//!
//! With `LB = 0` this is the plain projection inequality. Raising `LB` only
//! shrinks coefficients, so lifted cuts dominate unlifted ones.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::instance::Instance;

/// Weight at which the running `y*` prefix counts as having reached 1.
pub const PREFIX_TOL: f64 = 1e-9;

/// One lifted cut in sparse form: `z + Σ coeffs·y >= anchor_radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedCut {
    pub customer: usize,
    pub anchor_site: usize,
    pub lift_bound: f64,
    pub anchor_radius: f64,
    /// `(site, coefficient)` with every coefficient strictly positive,
    /// ascending by site.
    pub coeffs: Vec<(usize, f64)>,
}

impl LiftedCut {
    /// Right-hand side `r - Σ coeffs·y` at a given `y`.
    pub fn rhs_at(&self, y: &[f64]) -> f64 {
        self.anchor_radius - self.coeffs.iter().map(|&(j, c)| c * y[j]).sum::<f64>()
    }

    /// `rhs_at(y) - z`; positive when the point violates the cut.
    pub fn violation(&self, y: &[f64], z: f64) -> f64 {
        self.rhs_at(y) - z
    }

    /// Whether an integer solution given as an open-site mask with objective
    /// `z` satisfies the cut within `tol`.
    pub fn is_satisfied_by_sites(&self, open: &[bool], z: f64, tol: f64) -> bool {
        let cover: f64 = self
            .coeffs
            .iter()
            .filter(|&&(j, _)| open[j])
            .map(|&(_, c)| c)
            .sum();
        self.anchor_radius - cover <= z + tol
    }
}

/// Builds the cut for customer `i` anchored at site `j`; `None` when
/// `d(i, j) <= lb`, in which case the cut degenerates to `z >= lb`.
pub fn build_cut(inst: &Instance, i: usize, j: usize, lb: f64) -> Option<LiftedCut> {
    build_cut_from_row(&inst.distance_row(i), i, j, lb)
}

/// Same as [`build_cut`] given the customer's full distance row.
pub fn build_cut_from_row(row: &[f64], i: usize, j: usize, lb: f64) -> Option<LiftedCut> {
    let r = row[j];
    if r <= lb {
        return None;
    }
    let coeffs = row
        .iter()
        .enumerate()
        .filter_map(|(k, &d)| {
            let c = r - lb.max(d);
            (c > 0.0).then_some((k, c))
        })
        .collect();
    Some(LiftedCut {
        customer: i,
        anchor_site: j,
        lift_bound: lb,
        anchor_radius: r,
        coeffs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationResult {
    pub customer: usize,
    /// RHS of the cut anchored at the critical location, minus `z*`.
    pub violation: f64,
    /// The critical location `j_i`.
    pub anchor_site: usize,
    /// `max(LB, d(i, anchor_site))`.
    pub anchor_radius: f64,
    /// Number of positive-weight sites inspected.
    pub touched_sites: usize,
}

/// The positive entries of `y*`, computed once per separation round.
#[derive(Debug, Clone)]
pub struct Support {
    entries: Vec<(usize, f64)>,
    total: f64,
}

impl Support {
    pub fn new(y: &[f64]) -> Self {
        let entries: Vec<(usize, f64)> = y
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v > 0.0)
            .map(|(j, &v)| (j, v))
            .collect();
        let total = entries.iter().map(|e| e.1).sum();
        Support { entries, total }
    }

    pub fn sites(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// `Σ y*` over the support.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Most violated cut for customer `i` at `(y*, z*)`.
pub fn max_violation(inst: &Instance, i: usize, lb: f64, y: &[f64], z: f64) -> SeparationResult {
    max_violation_with(inst, i, lb, &Support::new(y), z)
}

/// [`max_violation`] against a precomputed support.
pub fn max_violation_with(inst: &Instance, i: usize, lb: f64, support: &Support, z: f64) -> SeparationResult {
    let mut list: Vec<(f64, usize, f64)> = support
        .entries
        .iter()
        .map(|&(j, w)| (lb.max(inst.distance(i, j)), j, w))
        .collect();
    list.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut prefix = 0.0;
    let mut cross = None;
    for (k, e) in list.iter().enumerate() {
        prefix += e.2;
        if prefix >= 1.0 - PREFIX_TOL {
            cross = Some(k);
            break;
        }
    }
    let (radius, anchor) = match cross {
        Some(mut k) => {
            // lowest index among sites tied at the crossing radius
            while k > 0 && list[k - 1].0 == list[k].0 {
                k -= 1;
            }
            (list[k].0, list[k].1)
        }
        None => {
            // total weight below 1: the RHS keeps growing with the radius
            let (j, d) = (0..inst.n_sites())
                .map(|j| (j, inst.distance(i, j)))
                .fold((0, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
            (lb.max(d), j)
        }
    };
    let rhs = radius
        - list
            .iter()
            .take_while(|e| e.0 < radius)
            .map(|e| (radius - e.0) * e.2)
            .sum::<f64>();
    SeparationResult {
        customer: i,
        violation: rhs - z,
        anchor_site: anchor,
        anchor_radius: radius,
        touched_sites: list.len(),
    }
}

/// Brute-force maximum over every anchor `j ∈ J`; the reference for
/// [`max_violation`].
pub fn max_violation_brute(inst: &Instance, i: usize, lb: f64, y: &[f64], z: f64) -> f64 {
    let row: Vec<f64> = inst.distance_row(i).iter().map(|&d| lb.max(d)).collect();
    row.iter()
        .map(|&r| {
            r - row
                .iter()
                .zip(y)
                .filter(|(&d, _)| d < r)
                .map(|(&d, &w)| (r - d) * w)
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
        - z
}

/// Separates every listed customer and returns the results whose violation
/// exceeds `tol`, most violated first, ties by customer index. The scan runs
/// in parallel; the result does not depend on the thread count.
pub fn scan_violations(
    inst: &Instance,
    customers: &[usize],
    lb: f64,
    y: &[f64],
    z: f64,
    tol: f64,
) -> Vec<SeparationResult> {
    let support = Support::new(y);
    let eval = |&i: &usize| max_violation_with(inst, i, lb, &support, z);
    let mut out: Vec<SeparationResult> = if customers.len() >= 256 {
        customers.par_iter().map(eval).filter(|r| r.violation > tol).collect()
    } else {
        customers.iter().map(eval).filter(|r| r.violation > tol).collect()
    };
    out.sort_by(|a, b| b.violation.total_cmp(&a.violation).then(a.customer.cmp(&b.customer)));
    out
}
