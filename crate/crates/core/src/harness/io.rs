//! Trajectory CSV and run-summary JSON.
//!
//! Trajectory columns: `t, x_1..x_d, f, g_1..g_K, lambda_1..lambda_K,
//! B_1..B_K, phase`, with reals in scientific notation carrying 17
//! significant digits, so every value round-trips exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::algorithm::{AlgoParams, RoundRecord, Trajectory};
use crate::benchmark::OptResult;
use crate::error::{Error, Result};

use super::RunResult;

pub fn trajectory_header(dim: usize, constraints: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=dim).map(|i| format!("x_{i}")));
    h.push("f".into());
    for prefix in ["g", "lambda", "B"] {
        h.extend((1..=constraints).map(|k| format!("{prefix}_{k}")));
    }
    h.push("phase".into());
    h
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trajectory<W: Write>(out: W, traj: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trajectory_header(traj.dim, traj.constraints))?;
    for r in &traj.rows {
        let mut rec = vec![r.t.to_string()];
        rec.extend(r.x.iter().map(|v| real(*v)));
        rec.push(real(r.f));
        for col in [&r.g, &r.lambda, &r.balances] {
            rec.extend(col.iter().map(|v| real(*v)));
        }
        rec.push(if r.stopped { "stopped" } else { "running" }.into());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trajectory written by [`write_trajectory`]. Expert weights are not
/// persisted and come back empty.
pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let dim = header.iter().filter(|h| h.starts_with("x_")).count();
    let constraints = header.iter().filter(|h| h.starts_with("g_")).count();
    if header != trajectory_header(dim, constraints) {
        return Err(Error::data(format!(
            "{}: unexpected trajectory header",
            path.display()
        )));
    }
    let mut traj = Trajectory::new(dim, constraints);
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::data(format!("{}: row {}: {what}", path.display(), line + 1));
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("malformed number"))
        };
        let t: usize = rec
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("malformed round"))?;
        let mut c = 1;
        let mut take = |n: usize| -> Result<Vec<f64>> {
            let v = (c..c + n).map(&num).collect::<Result<Vec<_>>>()?;
            c += n;
            Ok(v)
        };
        let x = take(dim)?;
        let f = take(1)?[0];
        let g = take(constraints)?;
        let lambda = take(constraints)?;
        let balances = take(constraints)?;
        let stopped = match rec.get(c) {
            Some("running") => false,
            Some("stopped") => true,
            _ => return Err(bad("phase must be running or stopped")),
        };
        traj.rows.push(RoundRecord {
            t,
            x,
            f,
            g,
            lambda,
            balances,
            weights: Vec::new(),
            stopped,
        });
    }
    Ok(traj)
}

/// Per-run summary file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub result: RunResult,
    pub params: AlgoParams,
    pub opt: Option<OptResult>,
}

pub fn write_summary(path: &Path, summary: &RunSummary) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, summary)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<RunSummary> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trajectory {
        let mut t = Trajectory::new(2, 1);
        for i in 1..=3 {
            t.rows.push(RoundRecord {
                t: i,
                x: vec![0.1 * i as f64, 1.0 / 3.0],
                f: std::f64::consts::PI * i as f64,
                g: vec![-1e-300],
                lambda: vec![0.7],
                balances: vec![f64::MIN_POSITIVE],
                weights: Vec::new(),
                stopped: i == 3,
            });
        }
        t
    }

    #[test]
    fn header_layout() {
        assert_eq!(
            trajectory_header(2, 2).join(","),
            "t,x_1,x_2,f,g_1,g_2,lambda_1,lambda_2,B_1,B_2,phase"
        );
    }

    #[test]
    fn trajectory_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        let traj = sample();
        write_trajectory(File::create(&path).unwrap(), &traj).unwrap();
        assert_eq!(read_trajectory(&path).unwrap(), traj);
    }

    #[test]
    fn rejects_malformed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "t,x_1,f,g_1,lambda_1,B_1,phase\n1,0.5,1,1,0,1,paused\n",
        )
        .unwrap();
        assert!(matches!(read_trajectory(&path), Err(Error::Data(_))));
        std::fs::write(&path, "t,x_1,f,g_1,phase\n").unwrap();
        assert!(read_trajectory(&path).is_err());
    }
}
