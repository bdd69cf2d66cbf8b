//! Per-series CSV files from a samples CSV.
//!
//! Rows are grouped by (dataType, removeRatio, engine); samples at the same
//! `opsExecuted` are averaged over seeds. Each group yields
//! `<dataType>_<removeRatio>_<engine>_payload.csv` and
//! `<dataType>_<removeRatio>_<engine>_replica_size.csv`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

const REQUIRED: [&str; 6] = ["engine", "dataType", "removeRatio", "opsExecuted", "cumulativePayloadBytes", "avgReplicaBytes"];

#[derive(Default)]
struct Point {
    payload: f64,
    size: f64,
    n: u32,
}

type Series = BTreeMap<(String, String, String), BTreeMap<u64, Point>>;

/// Writes the series files; returns their paths in a deterministic order.
pub fn run(input: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut rdr = csv::Reader::from_path(input).with_context(|| format!("cannot read {}", input.display()))?;
    let headers = rdr.headers().with_context(|| format!("cannot read header of {}", input.display()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let missing: Vec<&str> = REQUIRED.iter().copied().filter(|c| col(c).is_none()).collect();
    if !missing.is_empty() {
        bail!("{}: missing column(s) {}", input.display(), missing.join(", "));
    }
    let idx: Vec<usize> = REQUIRED.iter().map(|c| col(c).expect("checked above")).collect();

    let mut series: Series = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.with_context(|| format!("{}: line {line}", input.display()))?;
        let field = |k: usize| rec.get(idx[k]).unwrap_or("").trim();
        let num = |k: usize| -> Result<f64> {
            field(k).parse().with_context(|| format!("{}: line {line}: bad {} `{}`", input.display(), REQUIRED[k], field(k)))
        };
        let ops: u64 = field(3)
            .parse()
            .with_context(|| format!("{}: line {line}: bad opsExecuted `{}`", input.display(), field(3)))?;
        let key = (field(1).to_string(), field(2).to_string(), field(0).to_string());
        let p = series.entry(key).or_default().entry(ops).or_default();
        p.payload += num(4)?;
        p.size += num(5)?;
        p.n += 1;
    }

    if series.is_empty() {
        eprintln!("warning: {} has no sample rows; nothing written", input.display());
        return Ok(Vec::new());
    }
    std::fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let mut written = Vec::new();
    for ((data_type, rr, engine), points) in &series {
        let stem = format!("{data_type}_{rr}_{engine}");
        for (suffix, column, pick) in [
            ("payload", "cumulativePayloadBytes", (|p: &Point| p.payload) as fn(&Point) -> f64),
            ("replica_size", "avgReplicaBytes", |p: &Point| p.size),
        ] {
            let path = out_dir.join(format!("{stem}_{suffix}.csv"));
            let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot write {}", path.display()))?;
            w.write_record(["opsExecuted", column])?;
            for (ops, p) in points {
                w.write_record([ops.to_string(), format!("{:.2}", pick(p) / p.n as f64)])?;
            }
            w.flush().with_context(|| format!("cannot write {}", path.display()))?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "engine,dataType,seed,nOps,removeRatio,opsExecuted,cumulativePayloadBytes,avgReplicaBytes\n";

    #[test]
    fn averages_over_seeds() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("s.csv");
        let body = "nuec,topk-rmv,1,200,0.05,100,10,4.00\nnuec,topk-rmv,2,200,0.05,100,20,6.00\nnuec,topk-rmv,1,200,0.05,200,30,8.00\n";
        std::fs::write(&input, format!("{HEADER}{body}")).unwrap();
        let files = run(&input, &dir.path().join("out")).unwrap();
        assert_eq!(files.len(), 2);
        let payload = std::fs::read_to_string(&files[0]).unwrap();
        assert_eq!(payload, "opsExecuted,cumulativePayloadBytes\n100,15.00\n200,30.00\n");
        let size = std::fs::read_to_string(&files[1]).unwrap();
        assert_eq!(size, "opsExecuted,avgReplicaBytes\n100,5.00\n200,8.00\n");
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("s.csv");
        std::fs::write(&input, "engine,dataType,seed\nnuec,topk,1\n").unwrap();
        let e = run(&input, dir.path()).unwrap_err().to_string();
        assert!(e.contains("removeRatio") && e.contains("avgReplicaBytes"), "{e}");
    }
}
