//! Pieces of the `pcenter` command-line tool that are worth testing on their
//! own: run records and their CSV/JSON forms, instance loading, and the batch
//! driver's file discovery.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use pcenter::bounds::{BoundReport, IterationRecord, PclbVariant};
use pcenter::engine::{self, Scheme, SolveResult, SolveStatus, SolverConfig};
use pcenter::Instance;
use serde::{Deserialize, Serialize};

/// Column names of every CSV the tool writes for solver runs.
pub const RUN_HEADER: [&str; 10] = ["name", "V", "p", "LB", "UB", "gap", "nodes", "cuts", "time", "status"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Pmed,
    Tsplib,
}

impl Format {
    /// `.tsp` files are TSPLIB, everything else is read as `pmed`.
    pub fn infer(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("tsp") => Format::Tsplib,
            _ => Format::Pmed,
        }
    }
}

/// Loads an instance. `p` overrides the value stored in a `pmed` file and is
/// mandatory for TSPLIB.
pub fn load_instance(path: &Path, format: Format, p: Option<usize>) -> anyhow::Result<Instance> {
    let inst = match format {
        Format::Pmed => {
            let inst = Instance::load_pmed(path)?;
            match p {
                Some(p) => inst.with_p(p)?,
                None => inst,
            }
        }
        Format::Tsplib => {
            let Some(p) = p else {
                bail!("TSPLIB files carry no p; pass --p");
            };
            Instance::load_tsplib(path, p)?
        }
    };
    Ok(inst)
}

/// One solver run in the shape of the published result tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub name: String,
    pub vertices: usize,
    pub p: usize,
    pub scheme: Scheme,
    #[serde(with = "float")]
    pub lb: f64,
    #[serde(with = "float")]
    pub ub: f64,
    /// `(UB − LB) / UB · 100`, rounded to two decimals.
    #[serde(with = "float")]
    pub gap_percent: f64,
    pub nodes: usize,
    pub cuts: usize,
    #[serde(with = "float")]
    pub time_seconds: f64,
    pub status: SolveStatus,
}

impl RunRecord {
    pub fn from_result(inst: &Instance, p: usize, scheme: Scheme, res: &SolveResult) -> Self {
        RunRecord {
            name: inst.name().to_string(),
            vertices: inst.n_customers(),
            p,
            scheme,
            lb: res.lower_bound,
            ub: res.upper_bound,
            gap_percent: round2(res.gap_percent),
            nodes: res.nodes,
            cuts: res.cuts_added,
            time_seconds: res.wall_time,
            status: res.status,
        }
    }

    /// Exit status rule of the tool: success iff the run is optimal or hit
    /// its limit while holding an incumbent.
    pub fn succeeded(&self) -> bool {
        match self.status {
            SolveStatus::Optimal => true,
            SolveStatus::TimeLimit => self.ub.is_finite(),
            SolveStatus::Infeasible => false,
        }
    }
}

fn round2(v: f64) -> f64 {
    if v.is_finite() {
        (v * 100.0).round() / 100.0
    } else {
        v
    }
}

/// Output of `solve --out json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub record: RunRecord,
    pub sites: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRun {
    name: String,
    #[serde(rename = "V")]
    vertices: usize,
    p: usize,
    #[serde(rename = "LB")]
    lb: String,
    #[serde(rename = "UB")]
    ub: String,
    gap: String,
    nodes: usize,
    cuts: usize,
    time: String,
    status: SolveStatus,
}

fn parse_float(field: &str, text: &str) -> anyhow::Result<f64> {
    text.parse().with_context(|| format!("column {field}: `{text}` is not a number"))
}

/// Writes the header and one line per record. Bounds and times use the
/// shortest exact decimal form; the gap is printed with two decimals, which is
/// exactly what the record holds.
pub fn write_runs_csv<W: Write>(out: W, records: &[RunRecord]) -> anyhow::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(RUN_HEADER)?;
    for r in records {
        w.serialize(CsvRun {
            name: r.name.clone(),
            vertices: r.vertices,
            p: r.p,
            lb: r.lb.to_string(),
            ub: r.ub.to_string(),
            gap: format!("{:.2}", r.gap_percent),
            nodes: r.nodes,
            cuts: r.cuts,
            time: r.time_seconds.to_string(),
            status: r.status,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads records written by [`write_runs_csv`]. The table has no scheme
/// column, so the caller names the scheme the file was produced with.
pub fn read_runs_csv<R: Read>(input: R, scheme: Scheme) -> anyhow::Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != RUN_HEADER {
        bail!("unexpected CSV header {header:?}");
    }
    r.deserialize::<CsvRun>()
        .map(|row| {
            let row = row?;
            Ok(RunRecord {
                name: row.name,
                vertices: row.vertices,
                p: row.p,
                scheme,
                lb: parse_float("LB", &row.lb)?,
                ub: parse_float("UB", &row.ub)?,
                gap_percent: parse_float("gap", &row.gap)?,
                nodes: row.nodes,
                cuts: row.cuts,
                time_seconds: parse_float("time", &row.time)?,
                status: row.status,
            })
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvBound {
    variant: PclbVariant,
    lb_sharp: f64,
    iterations: usize,
    lb_star: f64,
    scp_value_at_lb_sharp: f64,
    step: Option<usize>,
    lb_in: Option<f64>,
    value: Option<f64>,
    snapped: Option<f64>,
}

/// Long format: one line per iteration, the summary repeated on each; a
/// report without iterations gets one line with the step columns empty.
pub fn write_bounds_csv<W: Write>(out: W, reports: &[BoundReport]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for rep in reports {
        let row = |step: Option<(usize, &IterationRecord)>| CsvBound {
            variant: rep.variant,
            lb_sharp: rep.lb_sharp,
            iterations: rep.iterations,
            lb_star: rep.lb_star,
            scp_value_at_lb_sharp: rep.scp_value_at_lb_sharp,
            step: step.map(|s| s.0),
            lb_in: step.map(|s| s.1.lb_in),
            value: step.map(|s| s.1.value),
            snapped: step.map(|s| s.1.snapped),
        };
        if rep.per_iteration.is_empty() {
            w.serialize(row(None))?;
        }
        for (k, it) in rep.per_iteration.iter().enumerate() {
            w.serialize(row(Some((k, it))))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_bounds_csv<R: Read>(input: R) -> anyhow::Result<Vec<BoundReport>> {
    let mut out: Vec<BoundReport> = Vec::new();
    for row in csv::Reader::from_reader(input).deserialize::<CsvBound>() {
        let row = row?;
        let continues = matches!(row.step, Some(k) if k > 0);
        if !continues {
            out.push(BoundReport {
                variant: row.variant,
                lb_sharp: row.lb_sharp,
                iterations: row.iterations,
                per_iteration: Vec::new(),
                lb_star: row.lb_star,
                scp_value_at_lb_sharp: row.scp_value_at_lb_sharp,
            });
        }
        let rep = out.last_mut().context("iteration line without a report")?;
        if let (Some(_), Some(lb_in), Some(value), Some(snapped)) = (row.step, row.lb_in, row.value, row.snapped) {
            rep.per_iteration.push(IterationRecord { lb_in, value, snapped });
        }
    }
    Ok(out)
}

/// Everything `boundlab` computes for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundLab {
    pub name: String,
    pub vertices: usize,
    pub p: usize,
    pub reports: Vec<BoundReport>,
    /// LP value of the assignment formulation, when the instance is small
    /// enough to build it.
    pub pc1_lp: Option<f64>,
    pub pc2_lp: Option<f64>,
}

pub fn solve_instance(inst: &Instance, cfg: &SolverConfig) -> anyhow::Result<SolveReport> {
    let p = inst.p();
    let res = engine::solve(inst, p, cfg)?;
    let sites = res.best_solution.as_ref().map(|s| s.sites.clone()).unwrap_or_default();
    Ok(SolveReport {
        record: RunRecord::from_result(inst, p, cfg.scheme, &res),
        sites,
    })
}

/// Instance files of a directory in natural order (`pmed2` before `pmed10`).
pub fn discover(dir: &Path, format: Format) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if !path.is_file() {
            continue;
        }
        let keep = match format {
            Format::Tsplib => Format::infer(&path) == Format::Tsplib,
            Format::Pmed => path
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("pmed")),
        };
        if keep {
            files.push(path);
        }
    }
    files.sort_by_cached_key(|p| natural_key(&p.file_name().unwrap_or_default().to_string_lossy()));
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Chunk {
    Num(u64),
    Text(String),
}

fn natural_key(name: &str) -> Vec<Chunk> {
    let mut out = Vec::new();
    let mut chars = name.chars().peekable();
    while let Some(&c) = chars.peek() {
        let digit = c.is_ascii_digit();
        let mut buf = String::new();
        while let Some(&c) = chars.peek() {
            if c.is_ascii_digit() != digit {
                break;
            }
            buf.push(c);
            chars.next();
        }
        out.push(match buf.parse() {
            Ok(n) if digit => Chunk::Num(n),
            _ => Chunk::Text(buf),
        });
    }
    out
}

/// Non-finite floats travel as the strings `inf`, `-inf` and `NaN`, which
/// JSON numbers cannot express.
mod float {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(s) => s.parse().map_err(de::Error::custom),
        }
    }
}
