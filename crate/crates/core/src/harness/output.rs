//! `records.csv` and `summary.json`.

use std::io::Write;
use std::path::Path;

use super::experiment::{ExperimentResult, ExperimentSummary};
use super::record::{Method, ReplicationRecord};
use crate::error::Result;
use crate::io::fmt_f64;

pub const RECORDS_HEADER: &str = "# fgma records v1";

pub const RECORDS_COLUMNS: [&str; 19] = [
    "n",
    "rep",
    "seed",
    "method",
    "status",
    "stage",
    "candidates",
    "d",
    "q",
    "support",
    "weights",
    "criterion",
    "loss",
    "inf_loss",
    "ratio",
    "min_single_loss",
    "spectral_distance",
    "k_star",
    "floor_count",
];

/// One row per replication and method; failed replications still get a row
/// per method with empty numeric fields.
pub fn write_records_csv<W: Write>(mut w: W, records: &[ReplicationRecord]) -> Result<()> {
    writeln!(w, "{RECORDS_HEADER}")?;
    writeln!(w, "{}", RECORDS_COLUMNS.join(","))?;
    for r in records {
        for m in Method::ALL {
            let (status, stage) = match &r.failure {
                None => ("ok", ""),
                Some(f) => ("failed", f.stage.name()),
            };
            let o = r.method(m);
            let join = |f: &dyn Fn(&crate::averaging::WeightEntry) -> String| {
                o.map(|o| o.weights.entries.iter().map(f).collect::<Vec<_>>().join(";")).unwrap_or_default()
            };
            let num = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
            let ok = r.is_ok();
            let fields = [
                r.n.to_string(),
                r.rep.to_string(),
                r.seed.to_string(),
                m.name().to_string(),
                status.to_string(),
                stage.to_string(),
                r.candidates.to_string(),
                r.d.to_string(),
                r.q.to_string(),
                join(&|e| e.index.to_string()),
                join(&|e| fmt_f64(e.value)),
                num(o.map(|o| o.criterion_value)),
                num(o.map(|o| o.loss)),
                num(ok.then_some(r.inf_loss)),
                num(o.map(|o| o.ratio)),
                num(ok.then_some(r.min_single_loss)),
                num(ok.then_some(r.spectral_distance)),
                num(ok.then_some(r.k_star)),
                r.floor_count.to_string(),
            ];
            writeln!(w, "{}", fields.join(","))?;
        }
    }
    Ok(())
}

pub fn records_csv_string(records: &[ReplicationRecord]) -> String {
    let mut buf = Vec::new();
    write_records_csv(&mut buf, records).expect("writing to memory");
    String::from_utf8(buf).expect("ASCII output")
}

pub fn write_summary_json<W: Write>(w: W, summary: &ExperimentSummary) -> Result<()> {
    crate::io::write_json_pretty(w, summary)?;
    Ok(())
}

/// Writes `records.csv` and `summary.json` into `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, result: &ExperimentResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let records = std::fs::File::create(dir.join("records.csv"))?;
    write_records_csv(std::io::BufWriter::new(records), &result.records)?;
    let text = crate::io::to_json_string_pretty(&result.summary)?;
    std::fs::write(dir.join("summary.json"), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ExperimentConfig;
    use crate::harness::experiment::run_experiment;

    #[test]
    fn csv_layout() {
        let mut cfg = ExperimentConfig::ar1_reference(vec![60], 2, 5);
        cfg.design.j_max = 20;
        let res = run_experiment(&cfg, 1).unwrap();
        let text = records_csv_string(&res.records);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], RECORDS_HEADER);
        assert_eq!(lines[1].split(',').count(), RECORDS_COLUMNS.len());
        assert_eq!(lines.len(), 2 + 2 * Method::ALL.len());
        for l in &lines[2..] {
            assert_eq!(l.split(',').count(), RECORDS_COLUMNS.len());
        }
        let ratio_col = RECORDS_COLUMNS.iter().position(|c| *c == "ratio").unwrap();
        let loss_col = RECORDS_COLUMNS.iter().position(|c| *c == "loss").unwrap();
        let inf_col = RECORDS_COLUMNS.iter().position(|c| *c == "inf_loss").unwrap();
        for l in &lines[2..] {
            let f: Vec<&str> = l.split(',').collect();
            let (ratio, loss, inf): (f64, f64, f64) = (f[ratio_col].parse().unwrap(), f[loss_col].parse().unwrap(), f[inf_col].parse().unwrap());
            assert!((ratio - loss / inf).abs() <= 1e-12 * ratio);
        }
    }

    #[test]
    fn outputs_written_to_directory() {
        let dir = std::env::temp_dir().join(format!("fgma-output-test-{}", std::process::id()));
        let mut cfg = ExperimentConfig::ar1_reference(vec![60], 1, 5);
        cfg.design.j_max = 20;
        let res = run_experiment(&cfg, 1).unwrap();
        write_outputs(&dir, &res).unwrap();
        let summary: ExperimentSummary = serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary, res.summary);
        assert!(std::fs::read_to_string(dir.join("records.csv")).unwrap().starts_with(RECORDS_HEADER));
        std::fs::remove_dir_all(dir).unwrap();
    }
}
