use std::path::Path;

use super::MetricsReport;
use crate::data::UserSet;
use crate::error::{Error, Result};

const HEADER: [&str; 10] = [
    "method",
    "dataset",
    "users",
    "interview_size",
    "seed",
    "rmse",
    "accuracy",
    "users_evaluated",
    "config",
    "status",
];

/// One line of a results table: a single run of one method at one interview size.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: String,
    pub dataset: String,
    /// `valid` or `test`.
    pub users: String,
    pub interview_size: usize,
    pub seed: u64,
    pub rmse: f64,
    pub accuracy: f64,
    pub users_evaluated: usize,
    pub config: String,
    pub status: String,
}

impl ResultRow {
    /// One row per seed of `report`.
    pub fn from_report(report: &MetricsReport, dataset: &str, users: UserSet, config: &str) -> ResultRow {
        ResultRow {
            method: report.method.clone(),
            dataset: dataset.to_string(),
            users: users.name().to_string(),
            interview_size: report.interview_size,
            seed: report.seeds.first().copied().unwrap_or(0),
            rmse: report.rmse,
            accuracy: report.accuracy,
            users_evaluated: report.users_evaluated,
            config: config.to_string(),
            status: "ok".to_string(),
        }
    }
}

/// Writes a tab-separated table with a header line.
pub fn write_results(path: impl AsRef<Path>, rows: &[ResultRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .from_path(path)?;
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record([
            r.method.as_str(),
            r.dataset.as_str(),
            r.users.as_str(),
            &r.interview_size.to_string(),
            &r.seed.to_string(),
            &format!("{:.6}", r.rmse),
            &format!("{:.6}", r.accuracy),
            &r.users_evaluated.to_string(),
            r.config.as_str(),
            r.status.as_str(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let mut r = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .from_path(path.as_ref())?;
    let mut rows = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| rec.get(k).unwrap_or_default();
        let bad = |what: &str| Error::Parse {
            line: n + 2,
            message: format!("invalid {what}"),
        };
        rows.push(ResultRow {
            method: field(0).to_string(),
            dataset: field(1).to_string(),
            users: field(2).to_string(),
            interview_size: field(3).parse().map_err(|_| bad("interview_size"))?,
            seed: field(4).parse().map_err(|_| bad("seed"))?,
            rmse: field(5).parse().map_err(|_| bad("rmse"))?,
            accuracy: field(6).parse().map_err(|_| bad("accuracy"))?,
            users_evaluated: field(7).parse().map_err(|_| bad("users_evaluated"))?,
            config: field(8).to_string(),
            status: field(9).to_string(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.tsv");
        let row = ResultRow {
            method: "csiam".into(),
            dataset: "toy".into(),
            users: "test".into(),
            interview_size: 10,
            seed: 2,
            rmse: 0.75,
            accuracy: 0.625,
            users_evaluated: 40,
            config: "N=5 lambda2=0.1".into(),
            status: "ok".into(),
        };
        write_results(&path, std::slice::from_ref(&row)).unwrap();
        assert_eq!(read_results(&path).unwrap(), vec![row]);
    }
}
