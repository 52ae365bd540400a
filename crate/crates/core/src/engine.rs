//! Branch-and-cut over the projected formulation.
//!
//! The master LP holds `y ∈ [0,1]^J`, `z >= LB` and `Σy = p`; lifted cuts
//! are separated on demand. Cuts found at the root are global and live in a
//! pool that drops long-idle rows; cuts found deeper are local to the
//! subtree where they were added and may use that subtree's bound as lift.
//! Nodes are explored best-bound first, FIFO among equal bounds.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index::sample;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bounds::cut_row;
use crate::cuts::{build_cut_from_row, scan_violations, LiftedCut};
use crate::error::{Error, Result};
use crate::heuristic::{farthest_point_sample, greedy_from_lp, PrimalSolution};
use crate::instance::Instance;
use crate::lp::{Basis, LpModel, LpStatus, RowId, Sense};

const ROOT: usize = 0;
const INT_TOL: f64 = 1e-6;
const PURGE_SLACK: f64 = 1e-6;
const PURGE_AFTER: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    MaxViolated,
    FixedCustomer,
}

impl FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().replace(['_', '-'], "").as_str() {
            "maxviolated" => Ok(Scheme::MaxViolated),
            "fixedcustomer" => Ok(Scheme::FixedCustomer),
            _ => Err(format!("unknown scheme `{s}`")),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::MaxViolated => "maxviolated",
            Scheme::FixedCustomer => "fixedcustomer",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub scheme: Scheme,
    pub use_heuristic: bool,
    pub max_num_cuts_root: usize,
    pub max_num_cuts_tree: usize,
    pub max_num_sep_root: usize,
    pub max_num_sep_tree: usize,
    pub max_no_improvements: usize,
    pub max_no_improvements_fixed: usize,
    pub epsilon_improve: f64,
    pub violation_tol: f64,
    /// Seconds.
    pub time_limit: f64,
    pub seed: u64,
    /// When false every cut uses lift bound 0 and `z` is only bounded by 0.
    pub lifting: bool,
    pub node_limit: Option<usize>,
    /// Emit JSON progress lines on stderr.
    pub verbose: bool,
    /// Record the active local cuts at every node visit.
    pub trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            scheme: Scheme::MaxViolated,
            use_heuristic: true,
            max_num_cuts_root: 100,
            max_num_cuts_tree: 50,
            max_num_sep_root: 1000,
            max_num_sep_tree: 1,
            max_no_improvements: 100,
            max_no_improvements_fixed: 5,
            epsilon_improve: 1e-5,
            violation_tol: 1e-6,
            time_limit: 1800.0,
            seed: 0,
            lifting: true,
            node_limit: None,
            verbose: false,
            trace: false,
        }
    }
}

impl SolverConfig {
    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    fn validate(&self) -> Result<()> {
        let counts = [
            self.max_num_cuts_root,
            self.max_num_cuts_tree,
            self.max_num_sep_root,
            self.max_num_sep_tree,
            self.max_no_improvements,
            self.max_no_improvements_fixed,
        ];
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::Invalid("separation counts must be at least 1".into()));
        }
        if !(self.time_limit > 0.0) {
            return Err(Error::Invalid("time limit must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    TimeLimit,
    Infeasible,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::TimeLimit => "time_limit",
            SolveStatus::Infeasible => "infeasible",
        })
    }
}

/// Local cuts present in the LP while a node was being solved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeVisit {
    pub node: usize,
    /// The node followed by its ancestors up to the root.
    pub lineage: Vec<usize>,
    /// `(cut id, node that added it)`.
    pub active_local_cuts: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub best_solution: Option<PrimalSolution>,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub gap_percent: f64,
    /// Nodes processed below the root.
    pub nodes: usize,
    pub cuts_added: usize,
    pub lazy_cuts: usize,
    pub separation_rounds: usize,
    pub root_bound: f64,
    pub initial_lb: f64,
    pub sampled_customers: usize,
    pub wall_time: f64,
    pub trace: Option<Vec<NodeVisit>>,
}

/// `(UB − LB) / UB · 100`, zero when both bounds vanish.
pub fn gap_percent(lb: f64, ub: f64) -> f64 {
    if !ub.is_finite() {
        return 100.0;
    }
    if ub <= 0.0 {
        return if lb >= ub { 0.0 } else { 100.0 };
    }
    ((ub - lb) / ub * 100.0).max(0.0)
}

/// Most fractional `y_j`, ties by smallest index; `None` if `y` is integral.
pub fn most_fractional(y: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &v) in y.iter().enumerate() {
        let f = v.min(1.0 - v);
        if f > INT_TOL && best.map_or(true, |b| f > b.1 + 1e-12) {
            best = Some((j, f));
        }
    }
    best.map(|b| b.0)
}

/// The most violated cut over all customers for an integer point, if any.
pub fn lazy_check(inst: &Instance, lb: f64, y: &[f64], z: f64, tol: f64) -> Option<LiftedCut> {
    let all: Vec<usize> = (0..inst.n_customers()).collect();
    scan_violations(inst, &all, lb, y, z, tol)
        .into_iter()
        .find(|r| r.anchor_radius > lb)
        .and_then(|r| build_cut_from_row(&inst.distance_row(r.customer), r.customer, r.anchor_site, lb))
}

/// Initial customer sample and starting bound of the restricted scheme.
///
/// With customers doubling as sites, `p + 1` customers are drawn by
/// farthest-point sampling and the bound is the smallest distance from a
/// sampled customer to any other site: one of them must be served by a site
/// other than itself. Otherwise `p + 1` random customers are drawn and the
/// bound is the smallest distance from any of them to any site.
pub fn fixed_customer_init(inst: &Instance, p: usize, seed: u64) -> (Vec<usize>, f64) {
    let n = inst.n_customers();
    if p + 1 > n {
        return ((0..n).collect(), 0.0);
    }
    if inst.same_points() {
        let hat = farthest_point_sample(inst, p + 1, seed);
        let lb = initial_bound(inst, &hat, true);
        (hat, lb)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hat = sample(&mut rng, n, p + 1).into_vec();
        hat.sort_unstable();
        let lb = initial_bound(inst, &hat, false);
        (hat, lb)
    }
}

/// `min_{i ∈ hat, j ≠ i} d(i, j)` (or over all `j` when `skip_self` is off).
pub fn initial_bound(inst: &Instance, hat: &[usize], skip_self: bool) -> f64 {
    let mut lb = f64::INFINITY;
    for &i in hat {
        for j in 0..inst.n_sites() {
            if !(skip_self && j == i) {
                lb = lb.min(inst.distance(i, j));
            }
        }
    }
    if lb.is_finite() {
        lb
    } else {
        0.0
    }
}

/// Drops from the candidate mask every customer `j` with `d(i, j) <= lb`.
pub fn trim_candidates(inst: &Instance, candidates: &mut [bool], i: usize, lb: f64) {
    for j in 0..inst.n_sites().min(candidates.len()) {
        if inst.distance(i, j) <= lb {
            candidates[j] = false;
        }
    }
}

/// Solves the instance with `p` open sites.
pub fn solve(inst: &Instance, p: usize, config: &SolverConfig) -> Result<SolveResult> {
    config.validate()?;
    if p == 0 || p > inst.n_sites() {
        return Err(Error::Invalid(format!("p = {p} must lie in 1..={}", inst.n_sites())));
    }
    Solver::new(inst, p, config).run()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scope {
    Global,
    Local(usize),
}

#[derive(Debug)]
struct CutRec {
    cut: LiftedCut,
    scope: Scope,
    row: Option<RowId>,
    idle: u32,
}

#[derive(Debug)]
struct Node {
    parent: Option<usize>,
    fix: Option<(usize, bool)>,
    lb: f64,
    local_cuts: Vec<usize>,
    basis: Option<Basis>,
    live_children: u32,
}

#[derive(Debug, PartialEq)]
struct Open {
    lb: f64,
    seq: u64,
    node: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap: smaller bound, then earlier arrival, wins
        other
            .lb
            .total_cmp(&self.lb)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Per-node separation counters.
#[derive(Debug, Default)]
struct SepState {
    started: bool,
    iterations: usize,
    not_improved: usize,
    not_improved_fixed: usize,
    z_prev: f64,
}

enum Outcome {
    Closed,
    Branched,
    TimedOut,
}

struct Solver<'a> {
    inst: &'a Instance,
    p: usize,
    cfg: &'a SolverConfig,
    m: usize,
    lp: LpModel,
    z: usize,
    cuts: Vec<CutRec>,
    active_global: Vec<usize>,
    pool: Vec<usize>,
    active_local: HashSet<usize>,
    row_owner: HashMap<RowId, usize>,
    nodes: Vec<Node>,
    open: BinaryHeap<Open>,
    seq: u64,
    fixings: Vec<Option<bool>>,
    incumbent: Option<PrimalSolution>,
    ub: f64,
    best_bound: f64,
    root_bound: f64,
    initial_lb: f64,
    hat: Vec<bool>,
    hat_list: Vec<usize>,
    start: Instant,
    processed: usize,
    cuts_added: usize,
    lazy_cuts: usize,
    rounds: usize,
    trace: Option<Vec<NodeVisit>>,
}

impl<'a> Solver<'a> {
    fn new(inst: &'a Instance, p: usize, cfg: &'a SolverConfig) -> Self {
        let m = inst.n_sites();
        let n = inst.n_customers();
        let mut lp = LpModel::new();
        for _ in 0..m {
            lp.add_var(0.0, 0.0, 1.0);
        }
        let z = lp.add_var(1.0, 0.0, f64::INFINITY);
        let card: Vec<(usize, f64)> = (0..m).map(|j| (j, 1.0)).collect();
        lp.add_row(&card, Sense::Eq, p as f64);

        let (hat_list, initial_lb) = match cfg.scheme {
            Scheme::MaxViolated => (Vec::new(), 0.0),
            Scheme::FixedCustomer => fixed_customer_init(inst, p, cfg.seed),
        };
        let initial_lb = if cfg.lifting { initial_lb } else { 0.0 };
        let mut hat = vec![false; n];
        for &i in &hat_list {
            hat[i] = true;
        }
        Solver {
            inst,
            p,
            cfg,
            m,
            lp,
            z,
            cuts: Vec::new(),
            active_global: Vec::new(),
            pool: Vec::new(),
            active_local: HashSet::new(),
            row_owner: HashMap::new(),
            nodes: Vec::new(),
            open: BinaryHeap::new(),
            seq: 0,
            fixings: vec![None; m],
            incumbent: None,
            ub: f64::INFINITY,
            best_bound: initial_lb,
            root_bound: initial_lb,
            initial_lb,
            hat,
            hat_list,
            start: Instant::now(),
            processed: 0,
            cuts_added: 0,
            lazy_cuts: 0,
            rounds: 0,
            trace: cfg.trace.then(Vec::new),
        }
    }

    fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn timed_out(&self) -> bool {
        self.elapsed() >= self.cfg.time_limit
    }

    fn round_bound(&self, z: f64) -> f64 {
        if self.inst.integral_distances() {
            (z - INT_TOL).ceil()
        } else {
            z
        }
    }

    fn dominated(&self, lb: f64) -> bool {
        if !self.ub.is_finite() {
            return false;
        }
        if self.inst.integral_distances() {
            (lb - INT_TOL).ceil() >= self.ub - 1e-9
        } else {
            lb >= self.ub - 1e-6 * self.ub.abs().max(1.0)
        }
    }

    fn log(&self, value: serde_json::Value) {
        if self.cfg.verbose {
            eprintln!("{value}");
        }
    }

    fn push_open(&mut self, node: usize) {
        self.seq += 1;
        self.open.push(Open {
            lb: self.nodes[node].lb,
            seq: self.seq,
            node,
        });
    }

    fn new_node(&mut self, parent: Option<usize>, fix: Option<(usize, bool)>, lb: f64, basis: Option<Basis>) -> usize {
        self.nodes.push(Node {
            parent,
            fix,
            lb,
            local_cuts: Vec::new(),
            basis,
            live_children: 0,
        });
        self.nodes.len() - 1
    }

    /// Marks a node finished and frees cut data no open node can reach.
    fn release(&mut self, mut v: usize) {
        loop {
            for c in std::mem::take(&mut self.nodes[v].local_cuts) {
                if let Some(row) = self.cuts[c].row.take() {
                    self.lp.remove_rows(&[row]);
                    self.row_owner.remove(&row);
                    self.active_local.remove(&c);
                }
                self.cuts[c].cut.coeffs = Vec::new();
            }
            self.nodes[v].basis = None;
            let Some(parent) = self.nodes[v].parent else { return };
            let pn = &mut self.nodes[parent];
            pn.live_children -= 1;
            if pn.live_children > 0 {
                return;
            }
            v = parent;
        }
    }

    fn lineage(&self, v: usize) -> Vec<usize> {
        let mut out = vec![v];
        let mut cur = v;
        while let Some(p) = self.nodes[cur].parent {
            out.push(p);
            cur = p;
        }
        out
    }

    fn z_floor(&self, v: usize) -> f64 {
        if self.cfg.lifting {
            self.nodes[v].lb.max(self.initial_lb)
        } else {
            0.0
        }
    }

    /// Brings rows and bounds of the LP in line with node `v`.
    fn switch_to(&mut self, v: usize) {
        let lineage = self.lineage(v);
        let wanted: HashSet<usize> = lineage
            .iter()
            .flat_map(|&u| self.nodes[u].local_cuts.iter().copied())
            .collect();
        let stale: Vec<usize> = self.active_local.difference(&wanted).copied().collect();
        let rows: Vec<RowId> = stale.iter().filter_map(|&c| self.cuts[c].row.take()).collect();
        for r in &rows {
            self.row_owner.remove(r);
        }
        self.lp.remove_rows(&rows);
        for c in stale {
            self.active_local.remove(&c);
        }
        let mut missing: Vec<usize> = wanted.difference(&self.active_local).copied().collect();
        missing.sort_unstable();
        for c in missing {
            self.activate(c);
            self.active_local.insert(c);
        }

        let mut fix = vec![None; self.m];
        for &u in &lineage {
            if let Some((j, val)) = self.nodes[u].fix {
                fix[j] = Some(val);
            }
        }
        for j in 0..self.m {
            if fix[j] != self.fixings[j] {
                let (lo, hi) = match fix[j] {
                    None => (0.0, 1.0),
                    Some(false) => (0.0, 0.0),
                    Some(true) => (1.0, 1.0),
                };
                self.lp.set_var_bounds(j, lo, hi);
            }
        }
        self.fixings = fix;
        let floor = self.z_floor(v);
        self.lp.set_var_bounds(self.z, floor, f64::INFINITY);

        if let Some(trace) = &mut self.trace {
            let mut active: Vec<(usize, usize)> = self
                .row_owner
                .values()
                .filter_map(|&c| match self.cuts[c].scope {
                    Scope::Local(owner) if self.cuts[c].row.is_some_and(|r| self.lp.has_row(r)) => Some((c, owner)),
                    _ => None,
                })
                .collect();
            active.sort_unstable();
            trace.push(NodeVisit {
                node: v,
                lineage,
                active_local_cuts: active,
            });
        }
    }

    fn activate(&mut self, c: usize) {
        let row = cut_row(&self.cuts[c].cut, self.z);
        let id = self.lp.add_row(&row, Sense::Ge, self.cuts[c].cut.anchor_radius);
        self.cuts[c].row = Some(id);
        self.cuts[c].idle = 0;
        self.row_owner.insert(id, c);
    }

    fn add_cut(&mut self, v: usize, customer: usize, anchor: usize, lift: f64) -> bool {
        let row = self.inst.distance_row(customer);
        let Some(cut) = build_cut_from_row(&row, customer, anchor, lift) else {
            return false;
        };
        let scope = if v == ROOT { Scope::Global } else { Scope::Local(v) };
        let c = self.cuts.len();
        self.cuts.push(CutRec {
            cut,
            scope,
            row: None,
            idle: 0,
        });
        self.activate(c);
        match scope {
            Scope::Global => self.active_global.push(c),
            Scope::Local(owner) => {
                self.nodes[owner].local_cuts.push(c);
                self.active_local.insert(c);
            }
        }
        self.cuts_added += 1;
        true
    }

    /// Root-only: rows idle for `PURGE_AFTER` consecutive solves move to the pool.
    fn purge_idle(&mut self) {
        let mut keep = Vec::with_capacity(self.active_global.len());
        let mut drop_rows = Vec::new();
        for &c in &self.active_global {
            let row = self.cuts[c].row.expect("active cut has a row");
            let slack = self.lp.row_slack(row).unwrap_or(0.0);
            let rec = &mut self.cuts[c];
            rec.idle = if slack > PURGE_SLACK { rec.idle + 1 } else { 0 };
            if rec.idle >= PURGE_AFTER {
                rec.row = None;
                drop_rows.push(row);
                self.pool.push(c);
            } else {
                keep.push(c);
            }
        }
        for r in &drop_rows {
            self.row_owner.remove(r);
        }
        self.lp.remove_rows(&drop_rows);
        self.active_global = keep;
    }

    fn readd_from_pool(&mut self, y: &[f64], z: f64) -> usize {
        let tol = self.cfg.violation_tol;
        let (back, stay): (Vec<usize>, Vec<usize>) = self
            .pool
            .iter()
            .partition(|&&c| self.cuts[c].cut.violation(y, z) > tol);
        self.pool = stay;
        for &c in &back {
            self.activate(c);
            self.active_global.push(c);
        }
        back.len()
    }

    fn offer(&mut self, sol: PrimalSolution) -> bool {
        if sol.objective < self.ub - 1e-9 {
            self.ub = sol.objective;
            self.log(json!({"event": "incumbent", "ub": self.ub, "sites": sol.sites, "time": self.elapsed()}));
            self.incumbent = Some(sol);
            self.prune_open();
            true
        } else {
            false
        }
    }

    fn prune_open(&mut self) {
        let entries = std::mem::take(&mut self.open).into_vec();
        for e in entries {
            if self.dominated(e.lb) {
                self.release(e.node);
            } else {
                self.open.push(e);
            }
        }
    }

    fn lower_bound(&self, current: Option<f64>) -> f64 {
        let open_min = self.open.iter().map(|e| e.lb).fold(f64::INFINITY, f64::min);
        let lb = current.map_or(open_min, |c| c.min(open_min));
        let lb = if lb.is_finite() { lb } else { self.ub };
        lb.min(self.ub)
    }

    fn run(mut self) -> Result<SolveResult> {
        let root = self.new_node(None, None, self.initial_lb, None);
        self.log(json!({"event": "start", "scheme": self.cfg.scheme, "n": self.inst.n_customers(),
            "m": self.m, "p": self.p, "initial_lb": self.initial_lb, "sampled": self.hat_list.len()}));
        let mut status = SolveStatus::Optimal;
        let mut interrupted: Option<f64> = None;
        let mut next = Some(root);
        loop {
            let v = match next.take() {
                Some(v) => v,
                None => match self.open.pop() {
                    Some(e) => {
                        if self.dominated(e.lb) {
                            self.release(e.node);
                            continue;
                        }
                        e.node
                    }
                    None => break,
                },
            };
            if v != ROOT && self.cfg.node_limit.is_some_and(|l| self.processed >= l) || self.timed_out() {
                interrupted = Some(self.nodes[v].lb);
                self.push_open(v);
                status = SolveStatus::TimeLimit;
                break;
            }
            if v != ROOT {
                self.processed += 1;
            }
            match self.process(v)? {
                Outcome::Closed => self.release(v),
                Outcome::Branched => {}
                Outcome::TimedOut => {
                    interrupted = Some(self.nodes[v].lb);
                    self.push_open(v);
                    status = SolveStatus::TimeLimit;
                    break;
                }
            }
            let lb = self.lower_bound(None);
            if lb > self.best_bound {
                self.best_bound = lb;
            }
        }
        let ub = self.ub;
        let lower = match status {
            SolveStatus::Optimal => ub,
            _ => self.lower_bound(interrupted).max(self.best_bound.min(ub)),
        };
        if self.incumbent.is_none() && status == SolveStatus::Optimal {
            status = SolveStatus::Infeasible;
        }
        let result = SolveResult {
            status,
            lower_bound: if lower.is_finite() { lower } else { self.best_bound },
            upper_bound: ub,
            gap_percent: gap_percent(lower, ub),
            best_solution: self.incumbent.take(),
            nodes: self.processed,
            cuts_added: self.cuts_added,
            lazy_cuts: self.lazy_cuts,
            separation_rounds: self.rounds,
            root_bound: self.root_bound,
            initial_lb: self.initial_lb,
            sampled_customers: self.hat_list.len(),
            wall_time: self.elapsed(),
            trace: self.trace.take(),
        };
        self.log(json!({"event": "done", "status": result.status, "lb": result.lower_bound,
            "ub": result.upper_bound, "nodes": result.nodes, "cuts": result.cuts_added, "time": result.wall_time}));
        Ok(result)
    }

    fn process(&mut self, v: usize) -> Result<Outcome> {
        self.switch_to(v);
        let mut warm = self.nodes[v].basis.take();
        let mut st = SepState::default();
        loop {
            if self.timed_out() {
                return Ok(Outcome::TimedOut);
            }
            let sol = self.lp.solve(warm.as_ref());
            warm = None;
            match sol.status {
                LpStatus::Optimal => {}
                LpStatus::Infeasible => return Ok(Outcome::Closed),
                s => return Err(Error::Lp(format!("node {v}: master LP returned {s:?}"))),
            }
            let y = &sol.primal[..self.m];
            let z = sol.primal[self.z];
            if v == ROOT {
                self.purge_idle();
            }
            let bound = self.round_bound(z);
            if bound > self.nodes[v].lb {
                self.nodes[v].lb = bound;
            }
            if v == ROOT {
                self.root_bound = self.nodes[v].lb;
                self.best_bound = self.best_bound.max(self.nodes[v].lb);
            }
            if self.dominated(self.nodes[v].lb) {
                return Ok(Outcome::Closed);
            }
            if self.cfg.use_heuristic {
                let h = greedy_from_lp(self.inst, y, self.p);
                self.offer(h);
                if self.dominated(self.nodes[v].lb) {
                    return Ok(Outcome::Closed);
                }
            }

            if most_fractional(y).is_none() {
                let sites: Vec<usize> = (0..self.m).filter(|&j| y[j] > 0.5).collect();
                self.offer(PrimalSolution::new(self.inst, sites));
                if self.dominated(self.nodes[v].lb) {
                    return Ok(Outcome::Closed);
                }
                let lift = self.z_floor(v);
                let rounded: Vec<f64> = y.iter().map(|v| v.round()).collect();
                let Some(cut) = lazy_check(self.inst, lift, &rounded, z, self.cfg.violation_tol) else {
                    // z already matches the support's objective up to tolerance
                    return Ok(Outcome::Closed);
                };
                self.add_cut(v, cut.customer, cut.anchor_site, lift);
                self.lazy_cuts += 1;
                continue;
            }

            let y = y.to_vec();
            if self.separation_round(v, &y, z, &mut st) == 0 {
                self.branch(v, &y, sol.basis);
                return Ok(Outcome::Branched);
            }
        }
    }

    fn branch(&mut self, v: usize, y: &[f64], basis: Basis) {
        let j = most_fractional(y).expect("branching needs a fractional y");
        let lb = self.nodes[v].lb;
        let up = self.new_node(Some(v), Some((j, true)), lb, Some(basis.clone()));
        let down = self.new_node(Some(v), Some((j, false)), lb, Some(basis));
        self.nodes[v].live_children = 2;
        self.push_open(up);
        self.push_open(down);
        self.log(json!({"event": "branch", "node": v, "site": j, "value": y[j], "lb": lb,
            "ub": self.ub, "open": self.open.len()}));
    }

    /// One round of the configured scheme; returns how many rows changed
    /// (zero means separation at this node is over).
    fn separation_round(&mut self, v: usize, y: &[f64], z: f64, st: &mut SepState) -> usize {
        let cfg = self.cfg;
        if st.started {
            if z - st.z_prev < cfg.epsilon_improve {
                st.not_improved += 1;
                st.not_improved_fixed += 1;
                if st.not_improved == cfg.max_no_improvements {
                    return 0;
                }
            }
        } else {
            st.started = true;
        }
        let root = v == ROOT;
        let (max_cuts, max_sep) = if root {
            (cfg.max_num_cuts_root, cfg.max_num_sep_root)
        } else {
            (cfg.max_num_cuts_tree, cfg.max_num_sep_tree)
        };
        if st.iterations > max_sep {
            return 0;
        }
        st.iterations += 1;
        st.z_prev = z;
        self.rounds += 1;

        let mut changed = 0;
        let lift = if cfg.lifting {
            let lift = self.nodes[v].lb.max(self.initial_lb);
            let (lo, _) = self.lp.bounds(self.z);
            if lift > lo + 1e-12 {
                self.lp.set_var_bounds(self.z, lift, f64::INFINITY);
                changed += 1;
            }
            lift
        } else {
            0.0
        };
        if root {
            changed += self.readd_from_pool(y, z);
        }
        let tol = cfg.violation_tol;
        let before = self.cuts_added;
        match cfg.scheme {
            Scheme::MaxViolated => {
                let all: Vec<usize> = (0..self.inst.n_customers()).collect();
                let found = scan_violations(self.inst, &all, lift, y, z, tol);
                for r in found.iter().filter(|r| r.anchor_radius > lift).take(max_cuts) {
                    self.add_cut(v, r.customer, r.anchor_site, lift);
                }
            }
            Scheme::FixedCustomer => {
                let inside = self.hat_list.clone();
                for r in scan_violations(self.inst, &inside, lift, y, z, tol) {
                    if r.anchor_radius > lift {
                        self.add_cut(v, r.customer, r.anchor_site, lift);
                    }
                }
                let outside: Vec<usize> = (0..self.inst.n_customers()).filter(|&i| !self.hat[i]).collect();
                let found: Vec<_> = scan_violations(self.inst, &outside, lift, y, z, tol)
                    .into_iter()
                    .filter(|r| r.anchor_radius > lift)
                    .collect();
                if st.not_improved_fixed < cfg.max_no_improvements_fixed {
                    if let Some(r) = found.first() {
                        self.hat[r.customer] = true;
                        self.hat_list.push(r.customer);
                        self.add_cut(v, r.customer, r.anchor_site, lift);
                    }
                } else {
                    st.not_improved_fixed = 0;
                    let mut candidates: Vec<bool> = self.hat.iter().map(|&h| !h).collect();
                    let trim = self.inst.same_points();
                    for r in &found {
                        if candidates[r.customer] {
                            self.hat[r.customer] = true;
                            self.hat_list.push(r.customer);
                            self.add_cut(v, r.customer, r.anchor_site, lift);
                            if trim {
                                trim_candidates(self.inst, &mut candidates, r.customer, lift);
                            }
                        }
                    }
                }
            }
        }
        let added = self.cuts_added - before;
        self.log(json!({"event": "round", "node": v, "iteration": st.iterations, "z": z, "lb": lift,
            "ub": self.ub, "cuts": added, "total_cuts": self.cuts_added, "sampled": self.hat_list.len()}));
        changed + added
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{brute_force, random_graph_instance, DEFAULT_CAP};

    fn line() -> Instance {
        Instance::from_coords(vec![(0.0, 0.0), (1.0, 0.0), (4.0, 0.0), (9.0, 0.0)], 2).unwrap()
    }

    #[test]
    fn line_is_solved_by_both_schemes() {
        for scheme in [Scheme::MaxViolated, Scheme::FixedCustomer] {
            for heur in [true, false] {
                let cfg = SolverConfig {
                    scheme,
                    use_heuristic: heur,
                    ..SolverConfig::default()
                };
                let r = solve(&line(), 2, &cfg).unwrap();
                assert_eq!(r.status, SolveStatus::Optimal);
                assert_eq!(r.upper_bound, 3.0);
                assert_eq!(r.lower_bound, 3.0);
                assert_eq!(r.best_solution.unwrap().sites, vec![1, 3]);
                assert!(r.gap_percent <= 1e-4);
            }
        }
    }

    #[test]
    fn first_root_round_on_the_line() {
        let inst = line();
        let cfg = SolverConfig::default();
        let mut s = Solver::new(&inst, 2, &cfg);
        let root = s.new_node(None, None, 0.0, None);
        s.switch_to(root);
        let sol = s.lp.solve(None);
        let z = sol.primal[s.z];
        assert_eq!(z, 0.0);
        let mut st = SepState::default();
        let y = sol.primal[..4].to_vec();
        let added = s.separation_round(root, &y, z, &mut st);
        assert!(added >= 1 && s.cuts_added <= 100);
        assert!(s.cuts.iter().all(|c| c.scope == Scope::Global));
    }

    #[test]
    fn stall_counter_ends_separation() {
        let inst = line();
        let cfg = SolverConfig {
            max_no_improvements: 2,
            ..SolverConfig::default()
        };
        let mut s = Solver::new(&inst, 2, &cfg);
        let root = s.new_node(None, None, 0.0, None);
        s.switch_to(root);
        let mut st = SepState::default();
        let y = [0.5; 4];
        s.separation_round(root, &y, 1.0, &mut st);
        s.separation_round(root, &y, 1.0, &mut st);
        assert_eq!(st.not_improved, 1);
        assert_eq!(s.separation_round(root, &y, 1.0, &mut st), 0);
    }

    #[test]
    fn tree_rounds_are_capped() {
        let inst = line();
        let cfg = SolverConfig::default();
        let mut st = SepState::default();
        let mut s = Solver::new(&inst, 2, &cfg);
        let root = s.new_node(None, None, 0.0, None);
        let child = s.new_node(Some(root), Some((0, false)), 0.0, None);
        s.switch_to(child);
        let y = [0.0, 0.5, 0.5, 1.0];
        // counters permit rounds while the count does not exceed the limit
        let mut z = 0.0;
        let mut rounds = 0;
        while s.separation_round(child, &y, z, &mut st) > 0 {
            rounds += 1;
            z += 1.0;
            assert!(rounds < 10);
        }
        assert_eq!(rounds, cfg.max_num_sep_tree + 1);
        assert!(s.cuts.iter().all(|c| c.scope == Scope::Local(child)));
    }

    #[test]
    fn fixed_customer_initialization() {
        let inst = line();
        let hat = crate::heuristic::farthest_point_sample_from(&inst, 3, 0);
        assert_eq!(hat, vec![0, 3, 2]);
        assert_eq!(initial_bound(&inst, &hat, true), 1.0);
        let (h, lb) = fixed_customer_init(&inst, 2, 9);
        assert_eq!(h.len(), 3);
        assert!(lb <= 3.0);
        let (all, zero) = fixed_customer_init(&inst.clone().with_p(4).unwrap(), 4, 0);
        assert_eq!((all.len(), zero), (4, 0.0));
    }

    #[test]
    fn aggressive_growth_trims_candidates() {
        let inst = line();
        let mut cand = vec![true; 4];
        trim_candidates(&inst, &mut cand, 2, 3.0);
        assert_eq!(cand, vec![true, false, false, true]);
    }

    #[test]
    fn lazy_check_examples() {
        let inst = line();
        assert!(lazy_check(&inst, 0.0, &[0.0, 1.0, 0.0, 1.0], 3.0, 1e-6).is_none());
        let cut = lazy_check(&inst, 0.0, &[0.0, 1.0, 0.0, 1.0], 1.0, 1e-6).unwrap();
        assert_eq!(cut.customer, 2);
        assert!(cut.violation(&[0.0, 1.0, 0.0, 1.0], 1.0) > 0.0);
    }

    #[test]
    fn branching_rule() {
        assert_eq!(most_fractional(&[0.0, 0.3, 0.7, 1.0]), Some(1));
        assert_eq!(most_fractional(&[0.5, 0.5]), Some(0));
        assert_eq!(most_fractional(&[0.0, 1.0, 1.0 - 1e-9]), None);
    }

    #[test]
    fn gap_formula() {
        assert_eq!(gap_percent(3.0, 4.0), 25.0);
        assert_eq!(gap_percent(0.0, 0.0), 0.0);
        assert_eq!(gap_percent(5.0, 5.0), 0.0);
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("maxviolated".parse::<Scheme>().unwrap(), Scheme::MaxViolated);
        assert_eq!("fixedCustomer".parse::<Scheme>().unwrap(), Scheme::FixedCustomer);
        assert!("other".parse::<Scheme>().is_err());
    }

    #[test]
    fn matches_oracle_on_random_graphs() {
        for seed in 0..30 {
            let n = 6 + (seed as usize % 7);
            let p = 1 + (seed as usize % 3);
            let inst = random_graph_instance(n, p, 0.3, 20, seed);
            let opt = brute_force(&inst, p, DEFAULT_CAP).unwrap().optimum;
            for scheme in [Scheme::MaxViolated, Scheme::FixedCustomer] {
                let cfg = SolverConfig {
                    scheme,
                    seed,
                    ..SolverConfig::default()
                };
                let r = solve(&inst, p, &cfg).unwrap();
                assert_eq!(r.status, SolveStatus::Optimal);
                assert_eq!(r.upper_bound, opt, "seed {seed} {scheme}");
            }
        }
    }

    #[test]
    fn local_cuts_stay_in_their_subtree() {
        for seed in 0..8 {
            let inst = random_graph_instance(14, 3, 0.2, 30, seed);
            let cfg = SolverConfig {
                trace: true,
                use_heuristic: seed % 2 == 0,
                max_num_sep_root: 2,
                ..SolverConfig::default()
            };
            let r = solve(&inst, 3, &cfg).unwrap();
            for visit in r.trace.unwrap() {
                for (_, owner) in &visit.active_local_cuts {
                    assert!(visit.lineage.contains(owner));
                }
            }
        }
    }

    #[test]
    fn unlifted_configuration_is_still_exact() {
        for seed in 0..6 {
            let inst = random_graph_instance(10, 2, 0.3, 15, seed);
            let opt = brute_force(&inst, 2, DEFAULT_CAP).unwrap().optimum;
            let cfg = SolverConfig {
                lifting: false,
                ..SolverConfig::default()
            };
            assert_eq!(solve(&inst, 2, &cfg).unwrap().upper_bound, opt);
        }
    }

    #[test]
    fn node_limit_reports_honest_bounds() {
        let inst = random_graph_instance(15, 4, 0.2, 40, 3);
        let cfg = SolverConfig {
            node_limit: Some(0),
            max_num_sep_root: 1,
            use_heuristic: true,
            ..SolverConfig::default()
        };
        let r = solve(&inst, 4, &cfg).unwrap();
        assert!(r.lower_bound <= r.upper_bound + 1e-6);
        if r.status == SolveStatus::TimeLimit {
            assert!(r.best_solution.is_some());
        }
    }
}
