//! Dataset and topology file readers.

use std::path::Path;

use bagchain_core::ml::{Dataset, DatasetRole};
use bagchain_core::netsim::Topology;

use crate::SimError;

/// Reads a CSV with header `f0,…,f{d−1},label`. The class count is one more
/// than the largest label.
pub fn load_dataset(path: &Path) -> Result<Dataset, SimError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| SimError::Csv(path.display().to_string(), e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| SimError::Csv(path.display().to_string(), e.to_string()))?
        .clone();
    let d = headers.len().saturating_sub(1);
    let header_ok = d > 0
        && headers.get(d) == Some("label")
        && headers.iter().take(d).enumerate().all(|(i, h)| h == format!("f{i}"));
    if !header_ok {
        return Err(SimError::Csv(
            path.display().to_string(),
            "header must be f0,...,f{d-1},label".into(),
        ));
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| SimError::Csv(path.display().to_string(), e.to_string()))?;
        let err = |what: &str| SimError::Csv(path.display().to_string(), format!("line {line}: {what}"));
        if record.len() != d + 1 {
            return Err(err("wrong field count"));
        }
        for field in record.iter().take(d) {
            let x: f64 = field.parse().map_err(|_| err("bad feature value"))?;
            if !x.is_finite() {
                return Err(err("non-finite feature value"));
            }
            features.push(x);
        }
        labels.push(record[d].parse::<u32>().map_err(|_| err("bad label"))?);
    }
    if labels.is_empty() {
        return Err(SimError::Csv(path.display().to_string(), "no data rows".into()));
    }
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    Ok(Dataset::new(features, labels, d, classes.max(2), DatasetRole::Source)?)
}

/// Reads `u v bandwidth` triples, one per line; `#` starts a comment. The
/// node count is one more than the largest ID unless `nodes` says otherwise.
pub fn load_topology(path: &Path, nodes: Option<usize>) -> Result<Topology, SimError> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let parsed = match parts.as_slice() {
            [u, v, bw] => (u.parse::<u32>(), v.parse::<u32>(), bw.parse::<f64>()),
            _ => {
                return Err(SimError::Topology(format!(
                    "{}:{}: expected `u v bandwidth`",
                    path.display(),
                    i + 1
                )))
            }
        };
        match parsed {
            (Ok(u), Ok(v), Ok(bw)) => edges.push((u, v, bw)),
            _ => return Err(SimError::Topology(format!("{}:{}: bad number", path.display(), i + 1))),
        }
    }
    let n = nodes.unwrap_or_else(|| edges.iter().map(|&(u, v, _)| u.max(v) as usize + 1).max().unwrap_or(0));
    Topology::mesh(n, &edges).map_err(|e| SimError::Topology(format!("{}: {e}", path.display())))
}
