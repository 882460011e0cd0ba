//! Parameter sweeps: grid points × seeds, run in parallel.

use rayon::prelude::*;
use serde_json::Value;
use thiserror::Error;

use crate::engine::SimError;
use crate::metrics::{MetricsReport, CSV_COLUMNS};
use crate::scenario::{check_path, set_path, Scenario, ScenarioError};
use crate::sim;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("seed list is empty")]
    NoSeeds,
    #[error("bad seed list {0:?}: expected a..b, a..=b or a comma-separated list")]
    BadSeeds(String),
    #[error("bad grid: {0}")]
    BadGrid(String),
    #[error("grid parameter {path}: {reason}")]
    BadPath { path: String, reason: String },
    #[error("grid point {point} ({params}): {source}")]
    Scenario {
        point: usize,
        params: String,
        #[source]
        source: ScenarioError,
    },
    #[error("run failed for seed {seed} at grid point {point}: {source}")]
    Run {
        point: usize,
        seed: u64,
        #[source]
        source: SimError,
    },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

/// Parse `a..b` (exclusive), `a..=b` or `1,5,9`.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>, SweepError> {
    let spec = spec.trim();
    let bad = || SweepError::BadSeeds(spec.to_string());
    let seeds: Vec<u64> = if let Some((a, b)) = spec.split_once("..=") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            Vec::new()
        } else {
            (a..=b).collect()
        }
    } else if let Some((a, b)) = spec.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        (a..b).collect()
    } else if spec.is_empty() {
        Vec::new()
    } else {
        spec.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err(SweepError::NoSeeds);
    }
    Ok(seeds)
}

/// Dotted parameter paths, each with the values to try.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub params: Vec<(String, Vec<Value>)>,
}

impl Grid {
    /// `{"channel.loss_prob": [0, 0.1], ...}`; parameters are taken in key
    /// order.
    pub fn from_json(text: &str) -> Result<Self, SweepError> {
        let value: Value = serde_json::from_str(text).map_err(|e| SweepError::BadGrid(e.to_string()))?;
        let Value::Object(map) = value else {
            return Err(SweepError::BadGrid("expected an object of path -> list of values".into()));
        };
        let mut params = Vec::new();
        for (path, values) in map {
            match values {
                Value::Array(vs) if !vs.is_empty() => params.push((path, vs)),
                _ => return Err(SweepError::BadGrid(format!("{path}: expected a non-empty list of values"))),
            }
        }
        Ok(Self { params })
    }

    pub fn names(&self) -> Vec<&str> {
        self.params.iter().map(|(p, _)| p.as_str()).collect()
    }

    /// Cartesian product, last parameter varying fastest. An empty grid has
    /// one point: the base scenario.
    pub fn points(&self) -> Vec<Vec<Value>> {
        let mut points = vec![Vec::new()];
        for (_, values) in &self.params {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push(v.clone());
                        q
                    })
                })
                .collect();
        }
        points
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: usize,
    pub params: Vec<Value>,
    pub report: MetricsReport,
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn describe(names: &[&str], values: &[Value]) -> String {
    names
        .iter()
        .zip(values)
        .map(|(n, v)| format!("{n}={}", cell(v)))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Build and validate every scenario first, then run them all. Rows come
/// back ordered by grid point, then seed in the order given. `threads`
/// pins the worker count; `None` uses the global pool.
pub fn sweep(base: &Value, grid: &Grid, seeds: &[u64], threads: Option<usize>) -> Result<Vec<SweepRow>, SweepError> {
    if seeds.is_empty() {
        return Err(SweepError::NoSeeds);
    }
    for (path, _) in &grid.params {
        check_path(base, path).map_err(|reason| SweepError::BadPath {
            path: path.clone(),
            reason,
        })?;
    }
    let names = grid.names();
    let mut jobs = Vec::new();
    for (point, values) in grid.points().into_iter().enumerate() {
        let mut value = base.clone();
        for ((path, _), v) in grid.params.iter().zip(&values) {
            set_path(&mut value, path, v.clone()).map_err(|reason| SweepError::BadPath {
                path: path.clone(),
                reason,
            })?;
        }
        for &seed in seeds {
            let mut value = value.clone();
            value["seed"] = Value::from(seed);
            let scenario = Scenario::from_value(value).map_err(|source| SweepError::Scenario {
                point,
                params: describe(&names, &values),
                source,
            })?;
            jobs.push((point, values.clone(), seed, scenario));
        }
    }

    let work = || {
        jobs.par_iter()
            .map(|(point, params, seed, scenario)| {
                sim::run(scenario, false)
                    .map(|out| SweepRow {
                        point: *point,
                        params: params.clone(),
                        report: out.report,
                    })
                    .map_err(|source| SweepError::Run {
                        point: *point,
                        seed: *seed,
                        source,
                    })
            })
            .collect::<Result<Vec<_>, _>>()
    };
    match threads {
        None => work(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| SweepError::Pool(e.to_string()))?
            .install(work),
    }
}

/// Per-run CSV: parameter columns, then the report columns.
pub fn rows_csv(grid: &Grid, rows: &[SweepRow]) -> String {
    let mut header: Vec<&str> = grid.names();
    header.extend(CSV_COLUMNS);
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        let mut fields: Vec<String> = r.params.iter().map(cell).collect();
        fields.extend(r.report.csv_fields());
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_stddev(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub params: Vec<Value>,
    pub runs: usize,
    /// `(column, mean, stddev)` for every numeric report column.
    pub stats: Vec<(&'static str, f64, f64)>,
}

/// Aggregate rows per grid point.
pub fn summarize(rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let point = rows[start].point;
        let end = start + rows[start..].iter().take_while(|r| r.point == point).count();
        let group = &rows[start..end];
        let columns = group[0].report.numeric_columns();
        let stats = columns
            .iter()
            .enumerate()
            .map(|(i, (name, _))| {
                let xs: Vec<f64> = group.iter().map(|r| r.report.numeric_columns()[i].1).collect();
                let (m, s) = mean_stddev(&xs);
                (*name, m, s)
            })
            .collect();
        out.push(SummaryRow {
            params: group[0].params.clone(),
            runs: group.len(),
            stats,
        });
        start = end;
    }
    out
}

pub fn summary_csv(grid: &Grid, summary: &[SummaryRow]) -> String {
    let mut header: Vec<String> = grid.names().into_iter().map(String::from).collect();
    header.push("runs".into());
    if let Some(first) = summary.first() {
        for (name, _, _) in &first.stats {
            header.push(format!("{name}_mean"));
            header.push(format!("{name}_stddev"));
        }
    }
    let mut out = header.join(",");
    out.push('\n');
    for s in summary {
        let mut fields: Vec<String> = s.params.iter().map(cell).collect();
        fields.push(s.runs.to_string());
        for (_, m, sd) in &s.stats {
            fields.push(m.to_string());
            fields.push(sd.to_string());
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn seed_specs() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("1..=3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_seeds("7, 2,9").unwrap(), vec![7, 2, 9]);
        assert_eq!(parse_seeds("4").unwrap(), vec![4]);
        assert!(matches!(parse_seeds("3..3"), Err(SweepError::NoSeeds)));
        assert!(matches!(parse_seeds(""), Err(SweepError::NoSeeds)));
        assert!(matches!(parse_seeds("a..b"), Err(SweepError::BadSeeds(_))));
    }

    #[test]
    fn grid_product_in_key_order() {
        let g = Grid::from_json(r#"{"b": [1, 2], "a": ["x", "y", "z"]}"#).unwrap();
        assert_eq!(g.names(), vec!["a", "b"]);
        let pts = g.points();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0], vec![json!("x"), json!(1)]);
        assert_eq!(pts[1], vec![json!("x"), json!(2)]);
        assert_eq!(pts[5], vec![json!("z"), json!(2)]);
        assert_eq!(Grid { params: vec![] }.points(), vec![Vec::<Value>::new()]);
    }

    #[test]
    fn grid_rejects_empty_lists() {
        assert!(Grid::from_json(r#"{"a": []}"#).is_err());
        assert!(Grid::from_json(r#"[1]"#).is_err());
    }

    #[test]
    fn stats() {
        assert_eq!(mean_stddev(&[]), (0.0, 0.0));
        assert_eq!(mean_stddev(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_stddev(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert!((s - 2.138089935299395).abs() < 1e-12);
    }
}
