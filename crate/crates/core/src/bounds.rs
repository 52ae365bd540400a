//! Lower-bound laboratory.
//!
//! `𝓛(LB)` is the LP `min z` over `Σy = p`, `z >= LB`, `0 <= y <= 1` and all
//! lifted cuts at lift bound `LB`. Its optimum is again a lower bound, so
//! iterating `LB ← min{d ∈ D : d >= 𝓛(LB)}` from the smallest distance
//! climbs to a fixed point `LB#`. At a radius `r`, `𝓛(r) = r` holds exactly
//! when the fractional set cover at radius `r` needs at most `p` sites, which
//! makes `LB#` computable by an independent binary search as well.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::cuts::{build_cut_from_row, scan_violations, LiftedCut, PREFIX_TOL};
use crate::error::{Error, Result};
use crate::instance::{Instance, RadiusSet};
use crate::lp::{LpModel, LpSolution, LpStatus, Sense};

/// Cap on `|I| * |J|` for enumerating the distance set.
pub const RADII_CAP: usize = 25_000_000;
/// Cap on `|I| * |J|` for building the assignment-variable LP.
pub const PC1_CAP: usize = 10_000;
/// Cap on `|I| * |J|` for fully materialized cut LPs.
pub const DENSE_CAP: usize = 40_000;
/// Violation above which row generation adds a cut.
pub const ROW_GEN_TOL: f64 = 1e-6;
/// Tolerance used when rounding an LP value up to the next distance.
pub const SNAP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PclbVariant {
    /// Every cut with `d(i, j) > LB`, generated lazily.
    Full,
    /// One cut per customer, anchored at its nearest site beyond `LB`.
    Reduced,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub lb_in: f64,
    pub value: f64,
    pub snapped: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub variant: PclbVariant,
    pub lb_sharp: f64,
    pub iterations: usize,
    pub per_iteration: Vec<IterationRecord>,
    pub lb_star: f64,
    pub scp_value_at_lb_sharp: f64,
}

fn optimal(sol: LpSolution, what: &str) -> Result<LpSolution> {
    match sol.status {
        LpStatus::Optimal => Ok(sol),
        s => Err(Error::Lp(format!("{what}: solver returned {s:?}"))),
    }
}

fn check_p(inst: &Instance, p: usize) -> Result<()> {
    if p == 0 || p > inst.n_sites() {
        return Err(Error::Invalid(format!("p = {p} must lie in 1..={}", inst.n_sites())));
    }
    Ok(())
}

/// `(model, z column)` with the cardinality row and `z >= lb`.
fn base_model(m: usize, p: usize, lb: f64) -> (LpModel, usize) {
    let mut lp = LpModel::new();
    for _ in 0..m {
        lp.add_var(0.0, 0.0, 1.0);
    }
    let z = lp.add_var(1.0, lb, f64::INFINITY);
    let card: Vec<(usize, f64)> = (0..m).map(|j| (j, 1.0)).collect();
    lp.add_row(&card, Sense::Eq, p as f64);
    (lp, z)
}

/// Row form of a cut: `z + Σ coeffs·y >= r`.
pub(crate) fn cut_row(cut: &LiftedCut, z: usize) -> Vec<(usize, f64)> {
    let mut row = cut.coeffs.clone();
    row.push((z, 1.0));
    row
}

/// `𝓛(LB)` or its reduced variant `𝓛'(LB)`.
pub fn pclb_value(inst: &Instance, p: usize, lb: f64, variant: PclbVariant) -> Result<f64> {
    check_p(inst, p)?;
    let m = inst.n_sites();
    let (mut lp, z) = base_model(m, p, lb);
    match variant {
        PclbVariant::Reduced => {
            for i in 0..inst.n_customers() {
                let row = inst.distance_row(i);
                let anchor = (0..m)
                    .filter(|&j| row[j] > lb)
                    .min_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
                if let Some(j) = anchor {
                    let cut = build_cut_from_row(&row, i, j, lb).expect("anchor lies beyond lb");
                    lp.add_row(&cut_row(&cut, z), Sense::Ge, cut.anchor_radius);
                }
            }
            Ok(optimal(lp.solve(None), "reduced PCLB")?.objective)
        }
        PclbVariant::Full => {
            let customers: Vec<usize> = (0..inst.n_customers()).collect();
            let mut seen = HashSet::new();
            loop {
                let sol = optimal(lp.solve(None), "PCLB")?;
                let y = &sol.primal[..m];
                let zv = sol.primal[z];
                let mut added = 0;
                for r in scan_violations(inst, &customers, lb, y, zv, ROW_GEN_TOL) {
                    if r.anchor_radius <= lb || !seen.insert((r.customer, r.anchor_site)) {
                        continue;
                    }
                    let cut = build_cut_from_row(&inst.distance_row(r.customer), r.customer, r.anchor_site, lb)
                        .expect("anchor lies beyond lb");
                    lp.add_row(&cut_row(&cut, z), Sense::Ge, cut.anchor_radius);
                    added += 1;
                }
                if added == 0 {
                    return Ok(sol.objective);
                }
            }
        }
    }
}

/// `𝓛(LB)` with every cut written out up front (reference for tests).
pub fn pclb_value_dense(inst: &Instance, p: usize, lb: f64) -> Result<f64> {
    check_p(inst, p)?;
    let m = inst.n_sites();
    if inst.n_customers() * m > DENSE_CAP {
        return Err(Error::TooLarge(format!("dense PCLB limited to {DENSE_CAP} distances")));
    }
    let (mut lp, z) = base_model(m, p, lb);
    for i in 0..inst.n_customers() {
        let row = inst.distance_row(i);
        for j in 0..m {
            if let Some(cut) = build_cut_from_row(&row, i, j, lb) {
                lp.add_row(&cut_row(&cut, z), Sense::Ge, cut.anchor_radius);
            }
        }
    }
    Ok(optimal(lp.solve(None), "dense PCLB")?.objective)
}

/// Optimal value of the fractional set cover at `radius`; `+∞` when some
/// customer has no site within reach.
pub fn scp_lp_value(inst: &Instance, radius: f64) -> Result<f64> {
    let m = inst.n_sites();
    let mut lp = LpModel::new();
    for _ in 0..m {
        lp.add_var(1.0, 0.0, 1.0);
    }
    for i in 0..inst.n_customers() {
        let row: Vec<(usize, f64)> = (0..m)
            .filter(|&j| inst.distance(i, j) <= radius)
            .map(|j| (j, 1.0))
            .collect();
        if row.is_empty() {
            return Ok(f64::INFINITY);
        }
        lp.add_row(&row, Sense::Ge, 1.0);
    }
    Ok(optimal(lp.solve(None), "set cover LP")?.objective)
}

fn radii(inst: &Instance) -> Result<RadiusSet> {
    let d = inst.candidate_radii(Some(RADII_CAP))?;
    if d.is_empty() {
        return Err(Error::Invalid("instance has no distances".into()));
    }
    Ok(d)
}

/// Smallest radius in `D` whose fractional set cover uses at most `p` sites.
pub fn lb_star(inst: &Instance, p: usize) -> Result<f64> {
    check_p(inst, p)?;
    let d = radii(inst)?;
    let v = d.values();
    let fits = |r: f64| -> Result<bool> { Ok(scp_lp_value(inst, r)? <= p as f64 + 1e-7) };
    let (mut lo, mut hi) = (0usize, v.len() - 1);
    if !fits(v[hi])? {
        return Err(Error::Lp("set cover at the largest radius exceeds p".into()));
    }
    while lo < hi {
        let mid = (lo + hi) / 2;
        if fits(v[mid])? {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(v[lo])
}

/// Iterates `LB ← min{d ∈ D : d >= 𝓛(LB)}` from the smallest distance
/// until it stops moving, then cross-checks against [`lb_star`].
pub fn iterate_lb_sharp(inst: &Instance, p: usize, variant: PclbVariant) -> Result<BoundReport> {
    check_p(inst, p)?;
    let d = radii(inst)?;
    let mut lb = d.first().expect("nonempty");
    let mut per_iteration = Vec::new();
    loop {
        let value = pclb_value(inst, p, lb, variant)?;
        let snapped = d
            .snap_up(value, SNAP_TOL)
            .ok_or_else(|| Error::Lp(format!("bound {value} exceeds every distance")))?;
        per_iteration.push(IterationRecord { lb_in: lb, value, snapped });
        if snapped <= lb {
            break;
        }
        lb = snapped;
    }
    Ok(BoundReport {
        variant,
        lb_sharp: lb,
        iterations: per_iteration.len(),
        per_iteration,
        lb_star: lb_star(inst, p)?,
        scp_value_at_lb_sharp: scp_lp_value(inst, lb)?,
    })
}

/// LP relaxation of the assignment formulation with variables `x`, `y`, `z`.
pub fn pc1_lp_value(inst: &Instance, p: usize) -> Result<f64> {
    check_p(inst, p)?;
    let (n, m) = (inst.n_customers(), inst.n_sites());
    if n * m > PC1_CAP {
        return Err(Error::TooLarge(format!(
            "assignment LP limited to {PC1_CAP} variables x, got {}",
            n * m
        )));
    }
    let mut lp = LpModel::new();
    let x0 = 0;
    for _ in 0..n * m {
        lp.add_var(0.0, 0.0, f64::INFINITY);
    }
    let y0 = n * m;
    for _ in 0..m {
        lp.add_var(0.0, 0.0, 1.0);
    }
    let z = lp.add_var(1.0, f64::NEG_INFINITY, f64::INFINITY);
    let card: Vec<(usize, f64)> = (0..m).map(|j| (y0 + j, 1.0)).collect();
    lp.add_row(&card, Sense::Eq, p as f64);
    for i in 0..n {
        let assign: Vec<(usize, f64)> = (0..m).map(|j| (x0 + i * m + j, 1.0)).collect();
        lp.add_row(&assign, Sense::Eq, 1.0);
        for j in 0..m {
            lp.add_row(&[(x0 + i * m + j, 1.0), (y0 + j, -1.0)], Sense::Le, 0.0);
        }
        let mut radius: Vec<(usize, f64)> = (0..m)
            .map(|j| (x0 + i * m + j, -inst.distance(i, j)))
            .collect();
        radius.push((z, 1.0));
        lp.add_row(&radius, Sense::Ge, 0.0);
    }
    Ok(optimal(lp.solve(None), "assignment LP")?.objective)
}

/// LP relaxation of the projected formulation, i.e. `𝓛(0)`.
pub fn pc2_lp_value(inst: &Instance, p: usize) -> Result<f64> {
    pclb_value(inst, p, 0.0, PclbVariant::Full)
}

/// Lifts a point `(y, z)` of the projected LP to assignment variables: each
/// customer takes `y` from its nearest sites until the weight reaches 1 and
/// splits the remainder proportionally over the sites tied at that radius.
pub fn projection_witness(inst: &Instance, y: &[f64]) -> Vec<Vec<f64>> {
    let m = inst.n_sites();
    (0..inst.n_customers())
        .map(|i| {
            let row = inst.distance_row(i);
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
            let mut x = vec![0.0; m];
            let mut below = 0.0;
            let mut k = 0;
            while k < m {
                let r = row[order[k]];
                let end = k + order[k..].iter().take_while(|&&j| row[j] == r).count();
                let tied: f64 = order[k..end].iter().map(|&j| y[j]).sum();
                if below + tied >= 1.0 - PREFIX_TOL {
                    let share = (1.0 - below).max(0.0) / tied;
                    for &j in &order[k..end] {
                        x[j] = y[j] * share;
                    }
                    break;
                }
                for &j in &order[k..end] {
                    x[j] = y[j];
                }
                below += tied;
                k = end;
            }
            x
        })
        .collect()
}

/// Checks `(x, y, z)` against the assignment LP rows, returning the first
/// violated constraint.
pub fn check_pc1_point(
    inst: &Instance,
    p: usize,
    x: &[Vec<f64>],
    y: &[f64],
    z: f64,
    tol: f64,
) -> std::result::Result<(), String> {
    let m = inst.n_sites();
    let sum_y: f64 = y.iter().sum();
    if (sum_y - p as f64).abs() > tol {
        return Err(format!("Σy = {sum_y} differs from p = {p}"));
    }
    for (j, &v) in y.iter().enumerate() {
        if v < -tol || v > 1.0 + tol {
            return Err(format!("y[{j}] = {v} outside [0, 1]"));
        }
    }
    for (i, xi) in x.iter().enumerate() {
        let s: f64 = xi.iter().sum();
        if (s - 1.0).abs() > tol {
            return Err(format!("customer {i}: Σx = {s}"));
        }
        let mut cost = 0.0;
        for j in 0..m {
            if xi[j] < -tol {
                return Err(format!("x[{i}][{j}] = {} negative", xi[j]));
            }
            if xi[j] > y[j] + tol {
                return Err(format!("x[{i}][{j}] = {} exceeds y = {}", xi[j], y[j]));
            }
            cost += inst.distance(i, j) * xi[j];
        }
        if cost > z + tol * (1.0 + z.abs()) {
            return Err(format!("customer {i}: assignment cost {cost} exceeds z = {z}"));
        }
    }
    Ok(())
}
