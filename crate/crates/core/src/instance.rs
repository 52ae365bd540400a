//! Problem instances and distance providers.
//!
//! An [`Instance`] holds the customer set `I`, the candidate site set `J`, the
//! number of facilities `p` and a way to obtain `d(i, j)`. Three providers are
//! supported:
//!
//! * an explicit dense matrix,
//! * the all-pairs shortest-path closure of a weighted graph (OR-Library
//!   `pmed` files),
//! * planar coordinates with the floored Euclidean norm (TSPLIB `EUC_2D`).
//!
//! The Euclidean provider never materializes a matrix, so instances with
//! hundreds of thousands of points stay within a few megabytes.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How distances are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    Matrix,
    Euclid2dFloor,
    GraphApsp,
}

#[derive(Debug, Clone)]
enum Provider {
    Dense(Vec<f64>),
    Coords(Vec<(f64, f64)>),
}

/// An immutable p-center instance.
#[derive(Debug, Clone)]
pub struct Instance {
    name: String,
    n_customers: usize,
    n_sites: usize,
    p: usize,
    mode: DistanceMode,
    provider: Provider,
    integral: bool,
}

/// Sorted set of distinct distances `d_1 < ... < d_K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusSet {
    values: Vec<f64>,
}

impl RadiusSet {
    /// Builds the set from arbitrary values; sorts and removes duplicates.
    pub fn from_values(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        values.dedup();
        RadiusSet { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn first(&self) -> Option<f64> {
        self.values.first().copied()
    }

    /// Smallest `d_k` with `d_k >= v - tol`, if any.
    pub fn snap_up(&self, v: f64, tol: f64) -> Option<f64> {
        let idx = self.values.partition_point(|&d| d < v - tol);
        self.values.get(idx).copied()
    }

    /// Exact membership test.
    pub fn contains(&self, v: f64) -> bool {
        self.values
            .binary_search_by(|d| d.total_cmp(&v))
            .is_ok()
    }

    /// Membership up to an absolute tolerance.
    pub fn contains_approx(&self, v: f64, tol: f64) -> bool {
        self.snap_up(v, tol).is_some_and(|d| (d - v).abs() <= tol)
    }
}

#[inline]
fn euclid_floor(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    (dx * dx + dy * dy).sqrt().floor()
}

fn is_integral(v: f64) -> bool {
    v.fract() == 0.0
}

impl Instance {
    /// Dense `n_customers x n_sites` matrix in row-major order.
    pub fn from_matrix(n_customers: usize, n_sites: usize, data: Vec<f64>, p: usize) -> Result<Self> {
        if data.len() != n_customers * n_sites {
            return Err(Error::Invalid(format!(
                "matrix has {} entries, expected {}x{}",
                data.len(),
                n_customers,
                n_sites
            )));
        }
        if let Some(bad) = data.iter().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(Error::Invalid(format!("distance {bad} is negative or not finite")));
        }
        let integral = data.iter().all(|&d| is_integral(d));
        let inst = Instance {
            name: String::from("matrix"),
            n_customers,
            n_sites,
            p,
            mode: DistanceMode::Matrix,
            provider: Provider::Dense(data),
            integral,
        };
        inst.check_p()?;
        Ok(inst)
    }

    /// Convenience constructor from nested rows.
    pub fn from_rows(rows: &[Vec<f64>], p: usize) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Invalid("rows have different lengths".into()));
        }
        Self::from_matrix(n, m, rows.concat(), p)
    }

    /// Points in the plane with `d(i, j) = floor(||x_i - x_j||)`; `I = J`.
    pub fn from_coords(coords: Vec<(f64, f64)>, p: usize) -> Result<Self> {
        if coords.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::Invalid("coordinate is not finite".into()));
        }
        let n = coords.len();
        let inst = Instance {
            name: String::from("euclid"),
            n_customers: n,
            n_sites: n,
            p,
            mode: DistanceMode::Euclid2dFloor,
            provider: Provider::Coords(coords),
            integral: true,
        };
        inst.check_p()?;
        Ok(inst)
    }

    /// Undirected graph on `n` vertices (0-based edges); distances are the
    /// shortest-path lengths. Later duplicates of an edge overwrite earlier ones.
    pub fn from_graph(n: usize, edges: &[(usize, usize, f64)], p: usize) -> Result<Self> {
        let mut dist = vec![f64::INFINITY; n * n];
        for v in 0..n {
            dist[v * n + v] = 0.0;
        }
        for &(u, v, w) in edges {
            if u >= n || v >= n {
                return Err(Error::Invalid(format!("edge ({u}, {v}) out of range for {n} vertices")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Invalid(format!("edge weight {w} is negative or not finite")));
            }
            if u != v {
                dist[u * n + v] = w;
                dist[v * n + u] = w;
            }
        }
        floyd_warshall(&mut dist, n);
        for u in 0..n {
            for v in 0..n {
                if dist[u * n + v].is_infinite() {
                    return Err(Error::Disconnected { from: u, to: v });
                }
            }
        }
        let integral = dist.iter().all(|&d| is_integral(d));
        let inst = Instance {
            name: String::from("graph"),
            n_customers: n,
            n_sites: n,
            p,
            mode: DistanceMode::GraphApsp,
            provider: Provider::Dense(dist),
            integral,
        };
        inst.check_p()?;
        Ok(inst)
    }

    /// Reads an OR-Library `pmed` file.
    pub fn load_pmed(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut inst = Self::parse_pmed(BufReader::new(file), &display_name(path))?;
        inst.name = file_stem(path);
        Ok(inst)
    }

    /// Parses the `pmed` layout: a header `n edges p` followed by `u v w`
    /// lines with 1-based vertices.
    pub fn parse_pmed<R: Read>(reader: R, file: &str) -> Result<Self> {
        let reader = BufReader::new(reader);
        let err = |line: usize, msg: String| Error::Parse {
            file: file.to_string(),
            line,
            msg,
        };
        let mut header: Option<(usize, usize, usize)> = None;
        let mut edges = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| err(lineno, e.to_string()))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            let nums = fields
                .iter()
                .map(|f| f.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| err(lineno, format!("expected integers: {e}")))?;
            match header {
                None => {
                    if nums.len() != 3 {
                        return Err(err(lineno, "header must be `vertices edges p`".into()));
                    }
                    header = Some((nums[0], nums[1], nums[2]));
                }
                Some((n, _, _)) => {
                    if nums.len() != 3 {
                        return Err(err(lineno, "edge line must be `u v weight`".into()));
                    }
                    let (u, v, w) = (nums[0], nums[1], nums[2]);
                    if u == 0 || v == 0 || u > n || v > n {
                        return Err(err(lineno, format!("vertex out of range 1..={n}")));
                    }
                    if w == 0 {
                        return Err(err(lineno, "edge weight must be positive".into()));
                    }
                    edges.push((u - 1, v - 1, w as f64));
                }
            }
        }
        let (n, m_edges, p) = header.ok_or_else(|| err(1, "missing header".into()))?;
        if edges.len() != m_edges {
            return Err(err(
                edges.len() + 1,
                format!("header announces {m_edges} edges, found {}", edges.len()),
            ));
        }
        let mut inst = Self::from_graph(n, &edges, p)?;
        inst.name = file.to_string();
        Ok(inst)
    }

    /// Reads a TSPLIB `EUC_2D` file. The file carries no `p`, so the caller
    /// supplies it.
    pub fn load_tsplib(path: impl AsRef<Path>, p: usize) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut inst = Self::parse_tsplib(BufReader::new(file), &display_name(path), p)?;
        if inst.name.is_empty() {
            inst.name = file_stem(path);
        }
        Ok(inst)
    }

    pub fn parse_tsplib<R: Read>(reader: R, file: &str, p: usize) -> Result<Self> {
        let reader = BufReader::with_capacity(1 << 16, reader);
        let err = |line: usize, msg: String| Error::Parse {
            file: file.to_string(),
            line,
            msg,
        };
        let mut name = String::new();
        let mut dimension: Option<usize> = None;
        let mut weight_type: Option<String> = None;
        let mut in_coords = false;
        let mut coords: Vec<(f64, f64)> = Vec::new();
        let mut last_line = 0;
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            last_line = lineno;
            let line = line.map_err(|e| err(lineno, e.to_string()))?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if trimmed == "EOF" {
                break;
            }
            if in_coords {
                let first = trimmed.as_bytes()[0];
                if first.is_ascii_digit() || first == b'-' || first == b'+' || first == b'.' {
                    let mut it = trimmed.split_whitespace();
                    let _id = it.next();
                    let x = it.next().and_then(|s| s.parse::<f64>().ok());
                    let y = it.next().and_then(|s| s.parse::<f64>().ok());
                    match (x, y) {
                        (Some(x), Some(y)) => coords.push((x, y)),
                        _ => return Err(err(lineno, "expected `id x y`".into())),
                    }
                    continue;
                }
                in_coords = false;
            }
            let (key, value) = match trimmed.split_once(':') {
                Some((k, v)) => (k.trim(), v.trim()),
                None => {
                    let mut it = trimmed.splitn(2, char::is_whitespace);
                    (it.next().unwrap_or(""), it.next().unwrap_or("").trim())
                }
            };
            match key {
                "NAME" => name = value.to_string(),
                "DIMENSION" => {
                    dimension = Some(
                        value
                            .parse()
                            .map_err(|_| err(lineno, format!("bad DIMENSION `{value}`")))?,
                    )
                }
                "EDGE_WEIGHT_TYPE" => {
                    if value != "EUC_2D" {
                        return Err(Error::Unsupported(format!(
                            "EDGE_WEIGHT_TYPE {value} (only EUC_2D is supported)"
                        )));
                    }
                    weight_type = Some(value.to_string());
                }
                "NODE_COORD_SECTION" => in_coords = true,
                "EDGE_WEIGHT_SECTION" | "DISPLAY_DATA_SECTION" | "EDGE_DATA_SECTION" => {
                    return Err(Error::Unsupported(format!("section {key}")))
                }
                _ => {}
            }
        }
        let dimension = dimension.ok_or_else(|| err(last_line, "missing DIMENSION".into()))?;
        if weight_type.is_none() {
            return Err(Error::Unsupported("missing EDGE_WEIGHT_TYPE".into()));
        }
        if coords.len() != dimension {
            return Err(err(
                last_line,
                format!("DIMENSION is {dimension} but {} coordinates were read", coords.len()),
            ));
        }
        let mut inst = Self::from_coords(coords, p)?;
        inst.name = name;
        Ok(inst)
    }

    fn check_p(&self) -> Result<()> {
        if self.p < 1 || self.p > self.n_sites {
            return Err(Error::Invalid(format!(
                "p = {} must lie in 1..={}",
                self.p, self.n_sites
            )));
        }
        Ok(())
    }

    /// Same distances with a different number of facilities.
    pub fn with_p(mut self, p: usize) -> Result<Self> {
        self.p = p;
        self.check_p()?;
        Ok(self)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_customers(&self) -> usize {
        self.n_customers
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn mode(&self) -> DistanceMode {
        self.mode
    }

    /// True when every distance is an integer.
    pub fn integral_distances(&self) -> bool {
        self.integral
    }

    /// True when customers and sites are the same point set (`I = J`).
    pub fn same_points(&self) -> bool {
        match self.mode {
            DistanceMode::Matrix => false,
            DistanceMode::Euclid2dFloor | DistanceMode::GraphApsp => true,
        }
    }

    pub fn coords(&self) -> Option<&[(f64, f64)]> {
        match &self.provider {
            Provider::Coords(c) => Some(c),
            Provider::Dense(_) => None,
        }
    }

    /// Whether a dense matrix is held in memory.
    pub fn has_matrix(&self) -> bool {
        matches!(self.provider, Provider::Dense(_))
    }

    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.n_customers && j < self.n_sites);
        match &self.provider {
            Provider::Dense(d) => d[i * self.n_sites + j],
            Provider::Coords(c) => euclid_floor(c[i], c[j]),
        }
    }

    /// All distances from customer `i`.
    pub fn distance_row(&self, i: usize) -> Vec<f64> {
        match &self.provider {
            Provider::Dense(d) => d[i * self.n_sites..(i + 1) * self.n_sites].to_vec(),
            Provider::Coords(c) => c.iter().map(|&q| euclid_floor(c[i], q)).collect(),
        }
    }

    /// Sorted distinct distances. `cap` bounds `|I| * |J|` for large inputs.
    pub fn candidate_radii(&self, cap: Option<usize>) -> Result<RadiusSet> {
        let total = self.n_customers.saturating_mul(self.n_sites);
        if let Some(cap) = cap {
            if total > cap {
                return Err(Error::TooLarge(format!(
                    "{total} distances exceed the cap of {cap}; round bounds up with ceil() instead of snapping to D"
                )));
            }
        }
        let values = match &self.provider {
            Provider::Dense(d) => d.clone(),
            Provider::Coords(_) => {
                let mut v = Vec::with_capacity(total);
                for i in 0..self.n_customers {
                    v.extend(self.distance_row(i));
                }
                v
            }
        };
        Ok(RadiusSet::from_values(values))
    }
}

fn floyd_warshall(dist: &mut [f64], n: usize) {
    for k in 0..n {
        let row_k: Vec<f64> = dist[k * n..(k + 1) * n].to_vec();
        for i in 0..n {
            let dik = dist[i * n + k];
            if dik.is_infinite() {
                continue;
            }
            let row_i = &mut dist[i * n..(i + 1) * n];
            for (dij, &dkj) in row_i.iter_mut().zip(&row_k) {
                let via = dik + dkj;
                if via < *dij {
                    *dij = via;
                }
            }
        }
    }
}

fn display_name(path: &Path) -> String {
    path.display().to_string()
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line4() -> Instance {
        Instance::from_coords(vec![(0.0, 0.0), (1.0, 0.0), (4.0, 0.0), (9.0, 0.0)], 2).unwrap()
    }

    #[test]
    fn pmed_triangle_uses_shortest_path() {
        let text = "3 3 1\n1 2 2\n2 3 3\n1 3 10\n";
        let inst = Instance::parse_pmed(text.as_bytes(), "tri").unwrap();
        assert_eq!(inst.distance(0, 2), 5.0);
        assert_eq!(inst.distance(2, 0), 5.0);
        assert_eq!(inst.p(), 1);
        assert!(inst.integral_distances());
        assert_eq!(inst.mode(), DistanceMode::GraphApsp);
        let radii = inst.candidate_radii(None).unwrap();
        assert_eq!(radii.values(), &[0.0, 2.0, 3.0, 5.0]);
    }

    #[test]
    fn pmed_single_vertex() {
        let inst = Instance::parse_pmed("1 0 1\n".as_bytes(), "one").unwrap();
        assert_eq!(inst.n_customers(), 1);
        assert_eq!(inst.distance(0, 0), 0.0);
    }

    #[test]
    fn pmed_duplicate_edge_last_wins() {
        let text = "2 2 1\n1 2 7\n2 1 4\n";
        let inst = Instance::parse_pmed(text.as_bytes(), "dup").unwrap();
        assert_eq!(inst.distance(0, 1), 4.0);
    }

    #[test]
    fn pmed_errors_carry_line_numbers() {
        let bad_header = "3 3\n";
        match Instance::parse_pmed(bad_header.as_bytes(), "f") {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let bad_edge = "3 2 1\n1 2 2\n2 x 3\n";
        match Instance::parse_pmed(bad_edge.as_bytes(), "f") {
            Err(Error::Parse { line: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let out_of_range = "3 1 1\n1 4 2\n";
        assert!(matches!(
            Instance::parse_pmed(out_of_range.as_bytes(), "f"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn pmed_disconnected_graph_is_rejected() {
        let text = "3 1 1\n1 2 2\n";
        assert!(matches!(
            Instance::parse_pmed(text.as_bytes(), "f"),
            Err(Error::Disconnected { .. })
        ));
    }

    #[test]
    fn tsplib_floor_euclid() {
        let text = "NAME : tiny\nTYPE : TSP\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : EUC_2D\nNODE_COORD_SECTION\n1 0 0\n2 3 4\n3 1 1\nEOF\n";
        let inst = Instance::parse_tsplib(text.as_bytes(), "tiny.tsp", 1).unwrap();
        assert_eq!(inst.name(), "tiny");
        assert_eq!(inst.distance(0, 1), 5.0);
        assert_eq!(inst.distance(0, 2), 1.0);
        assert_eq!(inst.distance(2, 2), 0.0);
        assert!(!inst.has_matrix());
    }

    #[test]
    fn tsplib_rejects_other_weight_types_and_bad_counts() {
        let ceil = "NAME: x\nDIMENSION: 1\nEDGE_WEIGHT_TYPE: CEIL_2D\nNODE_COORD_SECTION\n1 0 0\nEOF\n";
        assert!(matches!(
            Instance::parse_tsplib(ceil.as_bytes(), "x", 1),
            Err(Error::Unsupported(_))
        ));
        let short = "NAME: x\nDIMENSION: 3\nEDGE_WEIGHT_TYPE: EUC_2D\nNODE_COORD_SECTION\n1 0 0\n2 1 1\nEOF\n";
        assert!(matches!(
            Instance::parse_tsplib(short.as_bytes(), "x", 1),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn distance_lookups() {
        let m = Instance::from_rows(&[vec![0.0, 7.0], vec![7.0, 0.0]], 1).unwrap();
        assert_eq!(m.distance(0, 1), 7.0);
        let e = Instance::from_coords(vec![(0.0, 0.0), (2.0, 2.0), (2.0, 2.0)], 1).unwrap();
        assert_eq!(e.distance(0, 1), 2.0);
        assert_eq!(e.distance(1, 2), 0.0);
    }

    #[test]
    fn candidate_radii_examples() {
        let m = Instance::from_rows(&[vec![0.0, 2.0], vec![2.0, 0.0]], 1).unwrap();
        let r = m.candidate_radii(None).unwrap();
        assert_eq!(r.values(), &[0.0, 2.0]);
        assert_eq!(r.len(), 2);

        let r = line4().candidate_radii(None).unwrap();
        assert_eq!(r.values(), &[0.0, 1.0, 3.0, 4.0, 5.0, 8.0, 9.0]);
    }

    #[test]
    fn candidate_radii_cap() {
        assert!(matches!(line4().candidate_radii(Some(15)), Err(Error::TooLarge(_))));
        assert!(line4().candidate_radii(Some(16)).is_ok());
    }

    #[test]
    fn snap_up_uses_tolerance() {
        let r = RadiusSet::from_values(vec![5.0, 1.0, 3.0, 3.0]);
        assert_eq!(r.values(), &[1.0, 3.0, 5.0]);
        assert_eq!(r.snap_up(2.0, 1e-9), Some(3.0));
        assert_eq!(r.snap_up(3.0 + 1e-12, 1e-9), Some(3.0));
        assert_eq!(r.snap_up(5.5, 1e-9), None);
        assert!(r.contains(3.0));
        assert!(!r.contains(2.0));
    }

    #[test]
    fn p_is_validated() {
        assert!(Instance::from_coords(vec![(0.0, 0.0)], 0).is_err());
        assert!(Instance::from_coords(vec![(0.0, 0.0)], 2).is_err());
        assert!(line4().with_p(4).is_ok());
    }

    #[test]
    fn rejects_negative_distances() {
        assert!(Instance::from_rows(&[vec![-1.0]], 1).is_err());
    }
}
